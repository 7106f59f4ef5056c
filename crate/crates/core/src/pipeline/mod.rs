//! The full refinement chain over a manifest.
//!
//! Per image: soft vote (when four flip maps are given) and quantize into the
//! network mask, then hole fill. Per blade group, once every first-fill mask
//! exists: fit one forest on `(rgb, first fill)` pairs, predict every image,
//! and hole fill again. Items that fail to load are quarantined and reported;
//! the rest of their group continues.

mod manifest;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

pub use manifest::{
    check_id, read_forest_manifest, BladeGroup, GroupItem, Manifest, ManifestRow, ProbabilitySource, MANIFEST_HEADER,
};
pub use report::{report, Report, StepReport};

use crate::error::PipelineError;
use crate::forest::{fit_forest_with, predict_mask_with, ForestConfig, ForestModel, TrainingImage};
use crate::holefill::blade_hole_fill;
use crate::io;
use crate::metrics::{records_to_csv, MetricsRecord, Step};
use crate::par::{self, Execution};
use crate::raster::{quantize, BinaryMask, FloatRaster, RgbImage};
use crate::tta::{soft_vote, TtaBundle, DEFAULT_THRESHOLD};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub threshold: f64,
    pub forest: ForestConfig,
    /// Steps whose masks `refine` writes to disk.
    pub save_steps: Vec<Step>,
    /// Worker threads; `Some(1)` runs sequentially, `None` uses every core.
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            forest: ForestConfig::default(),
            save_steps: Step::ALL.to_vec(),
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageMasks {
    pub bu: BinaryMask,
    pub h1: BinaryMask,
    pub rf: BinaryMask,
    pub h2: BinaryMask,
}

impl StageMasks {
    pub fn get(&self, step: Step) -> &BinaryMask {
        match step {
            Step::Bu => &self.bu,
            Step::H1 => &self.h1,
            Step::Rf => &self.rf,
            Step::H2 => &self.h2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageResult {
    pub blade_id: String,
    pub image_id: String,
    pub masks: StageMasks,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemFailure {
    pub blade_id: String,
    pub image_id: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    /// Successful images in manifest order.
    pub images: Vec<ImageResult>,
    /// Per image in manifest order, then per step.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<ItemFailure>,
    pub forests: Vec<ForestModel>,
}

struct FirstPass {
    rgb: RgbImage,
    gt: Option<BinaryMask>,
    bu: BinaryMask,
    h1: BinaryMask,
}

fn load_probability(source: &ProbabilitySource) -> Result<FloatRaster, PipelineError> {
    Ok(match source {
        ProbabilitySource::Merged(p) => io::read_probability(p)?,
        ProbabilitySource::Flips(paths) => {
            let [a, b, c, d] = paths;
            let maps = [
                io::read_probability(a)?,
                io::read_probability(b)?,
                io::read_probability(c)?,
                io::read_probability(d)?,
            ];
            soft_vote(&TtaBundle::from_ordered(maps)?)
        }
    })
}

fn first_pass(row: &ManifestRow, threshold: f64) -> Result<FirstPass, PipelineError> {
    let rgb = io::read_rgb(&row.rgb)?;
    let prob = load_probability(&row.probability)?;
    rgb.check_same_dims(&prob)?;
    let gt = match &row.gt {
        Some(p) => {
            let gt = io::read_mask(p)?;
            rgb.check_same_dims(&gt)?;
            Some(gt)
        }
        None => None,
    };
    let bu = quantize(&prob, threshold)?;
    let h1 = blade_hole_fill(&bu);
    Ok(FirstPass { rgb, gt, bu, h1 })
}

pub fn run_pipeline(manifest: &Manifest, cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(PipelineError::Config(format!(
            "threshold {} not in (0, 1)",
            cfg.threshold
        )));
    }
    cfg.forest.validate()?;
    let exec = Execution::from_jobs(cfg.jobs);
    par::with_jobs(cfg.jobs, || run_stages(manifest, cfg, exec))
}

fn run_stages(manifest: &Manifest, cfg: &PipelineConfig, exec: Execution) -> Result<PipelineOutput, PipelineError> {
    let firsts: Vec<Result<FirstPass, String>> = par::map(exec, &manifest.rows, |row| {
        first_pass(row, cfg.threshold).map_err(|e| e.to_string())
    });

    let mut failures = Vec::new();
    let mut finished: Vec<Option<StageMasks>> = vec![None; manifest.rows.len()];
    let mut forests = Vec::new();
    for (blade_id, members) in manifest.groups() {
        let ok: Vec<(usize, &FirstPass)> = members
            .iter()
            .filter_map(|&i| firsts[i].as_ref().ok().map(|f| (i, f)))
            .collect();
        if ok.is_empty() {
            continue;
        }
        let training: Vec<TrainingImage<'_>> = ok
            .iter()
            .map(|(_, f)| TrainingImage {
                image: &f.rgb,
                labels: &f.h1,
            })
            .collect();
        let model = match fit_forest_with(&blade_id, &training, &cfg.forest, exec) {
            Ok(m) => m,
            Err(e) => {
                for &(i, _) in &ok {
                    failures.push((i, format!("forest fit for group {blade_id} failed: {e}")));
                }
                continue;
            }
        };
        let second: Vec<StageMasks> = par::map(exec, &ok, |(_, f)| {
            let rf = predict_mask_with(&model, &f.rgb, Execution::Sequential);
            let h2 = blade_hole_fill(&rf);
            StageMasks {
                bu: f.bu.clone(),
                h1: f.h1.clone(),
                rf,
                h2,
            }
        });
        for ((i, _), masks) in ok.iter().zip(second) {
            finished[*i] = Some(masks);
        }
        forests.push(model);
    }
    for (i, first) in firsts.iter().enumerate() {
        if let Err(e) = first {
            failures.push((i, e.clone()));
        }
    }
    failures.sort_by_key(|(i, _)| *i);

    let mut images = Vec::new();
    let mut records = Vec::new();
    for (i, slot) in finished.into_iter().enumerate() {
        let Some(masks) = slot else { continue };
        let row = &manifest.rows[i];
        if let Ok(FirstPass { gt: Some(gt), .. }) = &firsts[i] {
            for step in Step::ALL {
                records.push(MetricsRecord::evaluate(
                    &row.blade_id,
                    &row.image_id,
                    step,
                    masks.get(step),
                    gt,
                )?);
            }
        }
        images.push(ImageResult {
            blade_id: row.blade_id.clone(),
            image_id: row.image_id.clone(),
            masks,
        });
    }
    let failures = failures
        .into_iter()
        .map(|(i, message)| ItemFailure {
            blade_id: manifest.rows[i].blade_id.clone(),
            image_id: manifest.rows[i].image_id.clone(),
            message,
        })
        .collect();
    Ok(PipelineOutput {
        images,
        records,
        failures,
        forests,
    })
}

/// File name used for every per-image output mask.
pub fn mask_file_name(blade_id: &str, image_id: &str) -> String {
    format!("{blade_id}__{image_id}.pgm")
}

/// Inverse of [`mask_file_name`] on a file stem; stems without `__` get
/// an empty blade id.
pub fn split_mask_stem(stem: &str) -> (String, String) {
    match stem.split_once("__") {
        Some((b, i)) => (b.to_string(), i.to_string()),
        None => (String::new(), stem.to_string()),
    }
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    pub output: PipelineOutput,
    pub written: Vec<PathBuf>,
}

/// Runs the pipeline on the manifest at `manifest_path` and writes
///
/// * `<out>/<STEP>/<blade_id>__<image_id>.pgm` for each saved step,
/// * `<out>/metrics.csv` (per-image rows plus summary rows),
/// * `<out>/report.csv`, `<out>/dispersion.csv`, `<out>/report.txt`
///
/// when ground truth is available.
pub fn refine(manifest_path: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<RefineOutcome, PipelineError> {
    let manifest = Manifest::read(manifest_path)?;
    let output = run_pipeline(&manifest, cfg)?;
    create_dir(out_dir)?;
    let mut written = Vec::new();
    for step in Step::ALL.iter().filter(|s| cfg.save_steps.contains(s)) {
        let dir = out_dir.join(step.as_str());
        create_dir(&dir)?;
        for img in &output.images {
            let path = dir.join(mask_file_name(&img.blade_id, &img.image_id));
            io::write_mask(img.masks.get(*step), &path)?;
            written.push(path);
        }
    }
    if !output.records.is_empty() {
        let r = report(&output.records);
        let files = [
            ("metrics.csv", records_to_csv(&output.records, true)),
            ("report.csv", r.table_csv()),
            ("dispersion.csv", r.dispersion_csv()),
            ("report.txt", r.to_text()),
        ];
        for (name, text) in files {
            let path = out_dir.join(name);
            write_text(&path, &text)?;
            written.push(path);
        }
    }
    Ok(RefineOutcome { output, written })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestRefineOutcome {
    pub models: Vec<ForestModel>,
    pub written: Vec<PathBuf>,
    /// Forest-stage records for items that carry a ground-truth path.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<ItemFailure>,
}

/// Fits one forest per group of a forest manifest and writes the predicted
/// masks as `<out>/<blade_id>__<image stem>.pgm`.
pub fn forest_refine(
    groups: &[BladeGroup],
    out_dir: &Path,
    cfg: &ForestConfig,
    jobs: Option<usize>,
) -> Result<ForestRefineOutcome, PipelineError> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let exec = Execution::from_jobs(jobs);
    par::with_jobs(jobs, || {
        let mut outcome = ForestRefineOutcome {
            models: Vec::new(),
            written: Vec::new(),
            records: Vec::new(),
            failures: Vec::new(),
        };
        for group in groups {
            let loaded = par::map(exec, &group.items, |item| -> Result<_, PipelineError> {
                let image = io::read_rgb(&item.image_path)?;
                let labels = io::read_mask(&item.h1_mask_path)?;
                image.check_same_dims(&labels)?;
                let gt = match &item.gt_path {
                    Some(p) => {
                        let gt = io::read_mask(p)?;
                        image.check_same_dims(&gt)?;
                        Some(gt)
                    }
                    None => None,
                };
                let stem = item
                    .image_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((stem, image, labels, gt))
            });
            let mut ok = Vec::new();
            for (item, l) in group.items.iter().zip(loaded) {
                match l {
                    Ok(v) => ok.push(v),
                    Err(e) => outcome.failures.push(ItemFailure {
                        blade_id: group.blade_id.clone(),
                        image_id: item.image_path.display().to_string(),
                        message: e.to_string(),
                    }),
                }
            }
            if ok.is_empty() {
                continue;
            }
            let training: Vec<TrainingImage<'_>> = ok
                .iter()
                .map(|(_, image, labels, _)| TrainingImage { image, labels })
                .collect();
            let model = fit_forest_with(&group.blade_id, &training, cfg, exec)?;
            let predicted = par::map(exec, &ok, |(_, image, _, _)| {
                predict_mask_with(&model, image, Execution::Sequential)
            });
            for ((stem, _, _, gt), mask) in ok.iter().zip(&predicted) {
                let path = out_dir.join(mask_file_name(&group.blade_id, stem));
                io::write_mask(mask, &path)?;
                outcome.written.push(path);
                if let Some(gt) = gt {
                    outcome
                        .records
                        .push(MetricsRecord::evaluate(&group.blade_id, stem, Step::Rf, mask, gt)?);
                }
            }
            outcome.models.push(model);
        }
        Ok(outcome)
    })
}

/// Scores every `*.pgm` in `pred_dir` against the same-named file in `gt_dir`.
/// Files are visited in name order; ids come from the `blade__image` stem.
pub fn evaluate_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    step: Step,
) -> Result<(Vec<MetricsRecord>, Vec<ItemFailure>), PipelineError> {
    let entries = fs::read_dir(pred_dir).map_err(|source| PipelineError::Io {
        path: pred_dir.to_path_buf(),
        source,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    names.sort();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for name in names {
        let stem = name.trim_end_matches(".pgm");
        let (blade_id, image_id) = split_mask_stem(stem);
        let scored = (|| -> Result<MetricsRecord, PipelineError> {
            let pred = io::read_mask(&pred_dir.join(&name))?;
            let gt = io::read_mask(&gt_dir.join(&name))?;
            Ok(MetricsRecord::evaluate(&blade_id, &image_id, step, &pred, &gt)?)
        })();
        match scored {
            Ok(r) => records.push(r),
            Err(e) => failures.push(ItemFailure {
                blade_id,
                image_id,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, failures))
}
