//! Confusion counts, per-image quality metrics and box-plot style summaries.
//!
//! Foreground (blade) is the positive class. A ratio with a zero denominator is
//! undefined (`None`) and is excluded from every aggregate; the number of
//! exclusions is reported alongside.

use std::fmt;
use std::str::FromStr;

use crate::error::MetricsError;
use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts, MetricsError> {
    pred.check_same_dims(gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Pipeline stage a mask was produced by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    /// Network output after soft voting and quantization.
    Bu,
    /// First hole filling.
    H1,
    /// Random forest.
    Rf,
    /// Second hole filling (final mask).
    H2,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::Bu, Step::H1, Step::Rf, Step::H2];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Bu => "BU",
            Step::H1 => "H1",
            Step::Rf => "RF",
            Step::H2 => "H2",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "BU" => Ok(Step::Bu),
            "H1" => Ok(Step::H1),
            "RF" => Ok(Step::Rf),
            "H2" => Ok(Step::H2),
            _ => Err(format!("unknown step {s:?}, expected BU, H1, RF or H2")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub miou: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Accuracy,
    Recall,
    Precision,
    F1,
    Miou,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Recall,
        Metric::Precision,
        Metric::F1,
        Metric::Miou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
            Metric::Miou => "miou",
        }
    }
}

impl Scores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Recall => self.recall,
            Metric::Precision => self.precision,
            Metric::F1 => self.f1,
            Metric::Miou => self.miou,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<Scores, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::EmptyConfusion);
    }
    let recall = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    // Both as one integer quotient so each value is correctly rounded.
    let f1 = (precision.is_some() && recall.is_some() && c.tp > 0).then(|| {
        let den = 2 * c.tp + c.fp + c.fn_;
        (2 * c.tp) as f64 / den as f64
    });
    let fg_union = c.tp + c.fp + c.fn_;
    let bg_union = c.tn + c.fp + c.fn_;
    let miou = (fg_union > 0 && bg_union > 0).then(|| {
        let num = c.tp as u128 * bg_union as u128 + c.tn as u128 * fg_union as u128;
        let den = 2 * fg_union as u128 * bg_union as u128;
        num as f64 / den as f64
    });
    Ok(Scores {
        accuracy: ratio(c.tp + c.tn, total),
        recall,
        precision,
        f1,
        miou,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub blade_id: String,
    pub image_id: String,
    pub step: Step,
    pub scores: Scores,
}

impl MetricsRecord {
    pub fn evaluate(
        blade_id: &str,
        image_id: &str,
        step: Step,
        pred: &BinaryMask,
        gt: &BinaryMask,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            blade_id: blade_id.to_string(),
            image_id: image_id.to_string(),
            step,
            scores: compute_metrics(&confusion(pred, gt)?)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Number of defined values summarized.
    pub count: usize,
    /// Number of undefined values skipped.
    pub excluded: usize,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Five-number summary plus mean. Quartiles are the medians of the lower and
/// upper halves; for odd counts the overall median belongs to neither half.
/// A single value gives every statistic equal to it.
pub fn summarize_values(values: &[Option<f64>]) -> Option<MetricSummary> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    let excluded = values.len() - v.len();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = median_sorted(&v);
    let (q1, q3) = if n == 1 {
        (v[0], v[0])
    } else {
        (median_sorted(&v[..n / 2]), median_sorted(&v[n.div_ceil(2)..]))
    };
    Some(MetricSummary {
        min: v[0],
        q1,
        median,
        q3,
        max: v[n - 1],
        mean: v.iter().sum::<f64>() / n as f64,
        count: n,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispersionSummary {
    pub step: Step,
    pub metrics: Vec<(Metric, MetricSummary)>,
}

impl DispersionSummary {
    pub fn get(&self, metric: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|(_, s)| s)
    }
}

/// Summaries of every metric over the records of `step`. Fails if some metric
/// has no defined value at that step.
pub fn summarize(records: &[MetricsRecord], step: Step) -> Result<DispersionSummary, MetricsError> {
    let at_step: Vec<&MetricsRecord> = records.iter().filter(|r| r.step == step).collect();
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let values: Vec<Option<f64>> = at_step.iter().map(|r| r.scores.get(m)).collect();
            summarize_values(&values)
                .map(|s| (m, s))
                .ok_or(MetricsError::NoDefinedValues {
                    step: step.to_string(),
                    metric: m.name(),
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(DispersionSummary { step, metrics })
}

pub const CSV_HEADER: &str = "blade_id,image_id,step,accuracy,recall,precision,f1,miou";

pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_string(),
    }
}

/// Per-image rows, then with `summary` one block of statistic rows per step
/// (`blade_id` = `summary`, `image_id` = statistic name).
pub fn records_to_csv(records: &[MetricsRecord], summary: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let s = &r.scores;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.blade_id,
            r.image_id,
            r.step,
            format_value(s.accuracy),
            format_value(s.recall),
            format_value(s.precision),
            format_value(s.f1),
            format_value(s.miou)
        ));
    }
    if summary {
        for step in Step::ALL {
            let at_step: Vec<&MetricsRecord> = records.iter().filter(|r| r.step == step).collect();
            if at_step.is_empty() {
                continue;
            }
            let per_metric: Vec<Option<MetricSummary>> = Metric::ALL
                .iter()
                .map(|&m| summarize_values(&at_step.iter().map(|r| r.scores.get(m)).collect::<Vec<_>>()))
                .collect();
            type Stat = fn(&MetricSummary) -> String;
            let stats: [(&str, Stat); 8] = [
                ("min", |s| format!("{:.6}", s.min)),
                ("q1", |s| format!("{:.6}", s.q1)),
                ("median", |s| format!("{:.6}", s.median)),
                ("q3", |s| format!("{:.6}", s.q3)),
                ("max", |s| format!("{:.6}", s.max)),
                ("mean", |s| format!("{:.6}", s.mean)),
                ("count", |s| s.count.to_string()),
                ("excluded", |s| s.excluded.to_string()),
            ];
            for (name, stat) in stats {
                let cells: Vec<String> = per_metric
                    .iter()
                    .map(|s| s.as_ref().map(stat).unwrap_or_else(|| "NA".into()))
                    .collect();
                out.push_str(&format!("summary,{name},{step},{}\n", cells.join(",")));
            }
        }
    }
    out
}
