//! Per-step mean table and dispersion summaries over a record set.

use std::fmt::Write as _;

use crate::metrics::{summarize_values, Metric, MetricSummary, MetricsRecord, Step};

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: Step,
    pub images: usize,
    /// `None` when the metric is undefined on every image of the step.
    pub summaries: Vec<(Metric, Option<MetricSummary>)>,
}

impl StepReport {
    pub fn summary(&self, metric: Metric) -> Option<&MetricSummary> {
        self.summaries
            .iter()
            .find(|(m, _)| *m == metric)
            .and_then(|(_, s)| s.as_ref())
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.summary(metric).map(|s| s.mean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    /// Steps in pipeline order; steps without records are omitted.
    pub steps: Vec<StepReport>,
}

impl Report {
    pub fn step(&self, step: Step) -> Option<&StepReport> {
        self.steps.iter().find(|s| s.step == step)
    }

    pub fn mean(&self, step: Step, metric: Metric) -> Option<f64> {
        self.step(step).and_then(|s| s.mean(metric))
    }

    /// Metric rows × step columns of means, as fractions.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("metric");
        for s in &self.steps {
            let _ = write!(out, ",{}", s.step);
        }
        out.push('\n');
        for m in Metric::ALL {
            out.push_str(m.name());
            for s in &self.steps {
                match s.mean(m) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.6}");
                    }
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn dispersion_csv(&self) -> String {
        let mut out = String::from("step,metric,count,excluded,min,q1,median,q3,max,mean\n");
        for s in &self.steps {
            for (m, summary) in &s.summaries {
                match summary {
                    Some(d) => {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                            s.step,
                            m.name(),
                            d.count,
                            d.excluded,
                            d.min,
                            d.q1,
                            d.median,
                            d.q3,
                            d.max,
                            d.mean
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{},{},0,{},NA,NA,NA,NA,NA,NA", s.step, m.name(), s.images);
                    }
                }
            }
        }
        out
    }

    /// Aligned plain-text rendering, values in percent.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{:.2}", 100.0 * x));
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "metric (%)");
        for s in &self.steps {
            let _ = write!(out, "{:>10}", s.step.as_str());
        }
        out.push('\n');
        for m in Metric::ALL {
            let _ = write!(out, "{:<12}", m.name());
            for s in &self.steps {
                let _ = write!(out, "{:>10}", pct(s.mean(m)));
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<5} {:<10} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "step", "metric", "n", "excl", "min", "q1", "median", "q3", "max", "mean"
        );
        for s in &self.steps {
            for (m, summary) in &s.summaries {
                let row = |d: &MetricSummary| [d.min, d.q1, d.median, d.q3, d.max, d.mean].map(|v| pct(Some(v)));
                let (n, excl, cells) = match summary {
                    Some(d) => (d.count, d.excluded, row(d)),
                    None => (0, s.images, std::array::from_fn(|_| "NA".to_string())),
                };
                let _ = writeln!(
                    out,
                    "{:<5} {:<10} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                    s.step.as_str(),
                    m.name(),
                    n,
                    excl,
                    cells[0],
                    cells[1],
                    cells[2],
                    cells[3],
                    cells[4],
                    cells[5]
                );
            }
        }
        out
    }
}

pub fn report(records: &[MetricsRecord]) -> Report {
    let steps = Step::ALL
        .iter()
        .filter_map(|&step| {
            let at: Vec<&MetricsRecord> = records.iter().filter(|r| r.step == step).collect();
            if at.is_empty() {
                return None;
            }
            let summaries = Metric::ALL
                .iter()
                .map(|&m| {
                    let values: Vec<Option<f64>> = at.iter().map(|r| r.scores.get(m)).collect();
                    (m, summarize_values(&values))
                })
                .collect();
            Some(StepReport {
                step,
                images: at.len(),
                summaries,
            })
        })
        .collect();
    Report { steps }
}
