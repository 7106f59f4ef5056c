//! CSV manifests.
//!
//! Pipeline manifest header: `blade_id,image_id,rgb,prob_id,prob_fh,prob_fv,prob_fhv,gt`.
//! The three flip columns and `gt` are optional; a row whose flip cells are
//! all empty (or whose header lacks them) treats `prob_id` as an already
//! merged probability map. Relative paths resolve against the manifest's
//! directory.
//!
//! Forest manifest header: `blade_id,image_path,h1_mask_path[,gt_path]`.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::PipelineError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProbabilitySource {
    Merged(PathBuf),
    /// Identity, horizontal, vertical and double flip maps, in that order.
    Flips([PathBuf; 4]),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub blade_id: String,
    pub image_id: String,
    pub rgb: PathBuf,
    pub probability: ProbabilitySource,
    pub gt: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_HEADER: [&str; 8] = [
    "blade_id", "image_id", "rgb", "prob_id", "prob_fh", "prob_fv", "prob_fhv", "gt",
];

fn manifest_err(path: &Path, message: impl Into<String>) -> PipelineError {
    PipelineError::Manifest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Ids become file-name components, so separators are rejected and `__`
/// (the blade/image separator of output files) is reserved.
pub fn check_id(kind: &str, id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err(format!("empty {kind}"));
    }
    if id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(format!("{kind} {id:?} contains a path separator"));
    }
    if kind == "blade_id" && id.contains("__") {
        return Err(format!("blade_id {id:?} must not contain \"__\""));
    }
    Ok(())
}

fn resolve(base: &Path, cell: &str) -> PathBuf {
    let p = Path::new(cell);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn find(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<File>, Columns), PipelineError> {
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| manifest_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    Ok((reader, Columns { headers }))
}

fn cell(record: &csv::StringRecord, col: Option<usize>) -> &str {
    col.and_then(|c| record.get(c)).unwrap_or("")
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let (mut reader, cols) = open_csv(path)?;
        let required = |name: &str| {
            cols.find(name)
                .ok_or_else(|| manifest_err(path, format!("missing column {name}")))
        };
        let blade = required("blade_id")?;
        let image = required("image_id")?;
        let rgb = required("rgb")?;
        let prob = required("prob_id")?;
        let flips = [cols.find("prob_fh"), cols.find("prob_fv"), cols.find("prob_fhv")];
        let gt = cols.find("gt");

        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| manifest_err(path, e.to_string()))?;
            let at = |m: String| manifest_err(path, format!("row {}: {m}", line + 1));
            let blade_id = cell(&record, Some(blade)).to_string();
            let image_id = cell(&record, Some(image)).to_string();
            check_id("blade_id", &blade_id).map_err(at)?;
            check_id("image_id", &image_id).map_err(at)?;
            if !seen.insert((blade_id.clone(), image_id.clone())) {
                return Err(at(format!("duplicate entry {blade_id}/{image_id}")));
            }
            let rgb_cell = cell(&record, Some(rgb));
            let prob_cell = cell(&record, Some(prob));
            if rgb_cell.is_empty() || prob_cell.is_empty() {
                return Err(at("rgb and prob_id are required".into()));
            }
            let flip_cells = flips.map(|c| cell(&record, c));
            let probability = match flip_cells.iter().filter(|c| !c.is_empty()).count() {
                0 => ProbabilitySource::Merged(resolve(&base, prob_cell)),
                3 => ProbabilitySource::Flips([
                    resolve(&base, prob_cell),
                    resolve(&base, flip_cells[0]),
                    resolve(&base, flip_cells[1]),
                    resolve(&base, flip_cells[2]),
                ]),
                _ => return Err(at("prob_fh, prob_fv and prob_fhv must be all set or all empty".into())),
            };
            let gt_cell = cell(&record, gt);
            rows.push(ManifestRow {
                blade_id,
                image_id,
                rgb: resolve(&base, rgb_cell),
                probability,
                gt: (!gt_cell.is_empty()).then(|| resolve(&base, gt_cell)),
            });
        }
        if rows.is_empty() {
            return Err(manifest_err(path, "no rows"));
        }
        Ok(Self { rows })
    }

    /// Writes the manifest with paths made relative to `path`'s directory when possible.
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| -> String { p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned() };
        let io_err = |e: csv::Error| manifest_err(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        w.write_record(MANIFEST_HEADER).map_err(io_err)?;
        for row in &self.rows {
            let (id, fh, fv, fhv) = match &row.probability {
                ProbabilitySource::Merged(p) => (rel(p), String::new(), String::new(), String::new()),
                ProbabilitySource::Flips([a, b, c, d]) => (rel(a), rel(b), rel(c), rel(d)),
            };
            let gt = row.gt.as_deref().map(rel).unwrap_or_default();
            w.write_record([
                row.blade_id.as_str(),
                row.image_id.as_str(),
                &rel(&row.rgb),
                &id,
                &fh,
                &fv,
                &fhv,
                &gt,
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Row indices grouped by blade id, groups in order of first appearance.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        group_by_first_appearance(self.rows.iter().map(|r| r.blade_id.as_str()))
    }
}

pub(crate) fn group_by_first_appearance<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, id) in ids.enumerate() {
        match groups.iter_mut().find(|(g, _)| g == id) {
            Some((_, members)) => members.push(i),
            None => groups.push((id.to_string(), vec![i])),
        }
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupItem {
    pub image_path: PathBuf,
    pub h1_mask_path: PathBuf,
    pub gt_path: Option<PathBuf>,
}

/// The images of one blade surface, fitted together by one forest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BladeGroup {
    pub blade_id: String,
    pub items: Vec<GroupItem>,
}

/// Reads a `blade_id,image_path,h1_mask_path[,gt_path]` manifest into groups.
pub fn read_forest_manifest(path: &Path) -> Result<Vec<BladeGroup>, PipelineError> {
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let (mut reader, cols) = open_csv(path)?;
    let required = |name: &str| {
        cols.find(name)
            .ok_or_else(|| manifest_err(path, format!("missing column {name}")))
    };
    let blade = required("blade_id")?;
    let image = required("image_path")?;
    let mask = required("h1_mask_path")?;
    let gt = cols.find("gt_path");
    let mut ids = Vec::new();
    let mut items = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| manifest_err(path, e.to_string()))?;
        let at = |m: String| manifest_err(path, format!("row {}: {m}", line + 1));
        let blade_id = cell(&record, Some(blade)).to_string();
        check_id("blade_id", &blade_id).map_err(at)?;
        let (img, m) = (cell(&record, Some(image)), cell(&record, Some(mask)));
        if img.is_empty() || m.is_empty() {
            return Err(at("image_path and h1_mask_path are required".into()));
        }
        let g = cell(&record, gt);
        ids.push(blade_id);
        items.push(GroupItem {
            image_path: resolve(&base, img),
            h1_mask_path: resolve(&base, m),
            gt_path: (!g.is_empty()).then(|| resolve(&base, g)),
        });
    }
    if items.is_empty() {
        return Err(manifest_err(path, "no rows"));
    }
    Ok(group_by_first_appearance(ids.iter().map(String::as_str))
        .into_iter()
        .map(|(blade_id, members)| BladeGroup {
            blade_id,
            items: members.into_iter().map(|i| items[i].clone()).collect(),
        })
        .collect())
}
