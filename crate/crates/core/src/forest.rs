//! Per-group random forest fitted on the fly.
//!
//! Each pixel is described by the RGB of itself and its eight immediate
//! neighbors (27 values in `[0, 1]`). Labels come from the first hole-filled
//! masks of the same blade group, so the forest learns which colors the
//! earlier stages usually call blade and re-labels outliers accordingly.
//! Trees are deliberately shallow.
//!
//! Fitting is deterministic in `(group, config)`:
//!
//! 1. up to `sample_cap` pixels are drawn without replacement over the
//!    concatenated pixel index space of the group (item order, then row-major)
//!    with a ChaCha8 stream seeded by `seed`;
//! 2. tree `t` bootstraps that sample with a ChaCha8 stream seeded by
//!    `seed ^ t` (stream 1) and grows greedily on weighted Gini impurity.
//!
//! Trees are independent, so growing them in parallel changes nothing.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ForestError;
use crate::par::{self, Execution};
use crate::raster::{BinaryMask, Grid, RgbImage};

pub const FEATURE_DIM: usize = 27;

/// Center RGB first, then the eight neighbors in row-major offset order.
pub type PixelFeature = [f32; FEATURE_DIM];

const NEIGHBOR_OFFSETS: [(isize, isize); 9] = [
    (0, 0),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub sample_cap: usize,
    pub seed: u64,
    /// Foreground iff the tree-averaged probability is at least this.
    pub vote_threshold: f64,
    /// Maximum number of candidate thresholds evaluated per feature and node.
    pub max_thresholds: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 5,
            max_depth: 4,
            features_per_split: (FEATURE_DIM as f64).sqrt().ceil() as usize,
            sample_cap: 200_000,
            seed: 42,
            vote_threshold: 0.5,
            max_thresholds: 32,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::InvalidConfig(m));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1".into());
        }
        if self.sample_cap == 0 {
            return bad("sample_cap must be >= 1".into());
        }
        if !(1..=FEATURE_DIM).contains(&self.features_per_split) {
            return bad(format!("features_per_split must be in 1..={FEATURE_DIM}"));
        }
        if self.max_thresholds == 0 {
            return bad("max_thresholds must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.vote_threshold) {
            return bad(format!("vote_threshold {} not in [0, 1]", self.vote_threshold));
        }
        Ok(())
    }
}

#[inline]
fn feature_at(img: &RgbImage, h: usize, w: usize) -> PixelFeature {
    let (height, width) = img.dims();
    let mut out = [0f32; FEATURE_DIM];
    for (k, &(dh, dw)) in NEIGHBOR_OFFSETS.iter().enumerate() {
        let nh = (h as isize + dh).clamp(0, height as isize - 1) as usize;
        let nw = (w as isize + dw).clamp(0, width as isize - 1) as usize;
        let px = img.get(nh, nw);
        for c in 0..3 {
            out[3 * k + c] = px[c] as f32 / 255.0;
        }
    }
    out
}

/// The 27-value neighborhood descriptor of pixel `(h, w)`, replicate-padded.
pub fn extract_features(img: &RgbImage, h: usize, w: usize) -> Result<PixelFeature, ForestError> {
    let (height, width) = img.dims();
    if h >= height || w >= width {
        return Err(ForestError::OutOfBounds { h, w, height, width });
    }
    Ok(feature_at(img, h, w))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// `feature < threshold` goes left.
    Split {
        feature: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        fraction: f64,
    },
}

/// Arena-allocated binary tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(fraction: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { fraction }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_single_leaf(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { fraction } => Some(*fraction),
            Node::Split { .. } => None,
        })
    }

    pub fn predict(&self, feature: &PixelFeature) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { fraction } => return fraction,
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => i = if feature[f] < threshold { left } else { right },
            }
        }
    }

    fn write_sexpr(&self, i: usize, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match self.nodes[i] {
            Node::Leaf { fraction } => {
                let _ = write!(out, "{pad}(leaf {fraction})");
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let _ = writeln!(out, "{pad}(split (feature {feature}) (threshold {threshold})");
                self.write_sexpr(left, indent + 1, out);
                out.push('\n');
                self.write_sexpr(right, indent + 1, out);
                out.push(')');
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub blade_id: String,
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Mean of the per-tree leaf fractions.
    pub fn predict_proba(&self, feature: &PixelFeature) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(feature)).sum();
        sum / self.trees.len() as f64
    }

    /// Nested parenthesized text dump of every tree.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "(forest (blade {:?}) (trees {}) (max-depth {}) (seed {})",
            self.blade_id,
            self.trees.len(),
            self.config.max_depth,
            self.config.seed
        );
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(out, "  (tree {t}");
            tree.write_sexpr(0, 2, &mut out);
            out.push_str(")\n");
        }
        out.push_str(")\n");
        out
    }
}

/// One image of a blade group with its training labels.
#[derive(Clone, Copy, Debug)]
pub struct TrainingImage<'a> {
    pub image: &'a RgbImage,
    pub labels: &'a BinaryMask,
}

pub fn fit_forest(blade_id: &str, group: &[TrainingImage<'_>], cfg: &ForestConfig) -> Result<ForestModel, ForestError> {
    fit_forest_with(blade_id, group, cfg, Execution::Parallel)
}

pub fn fit_forest_with(
    blade_id: &str,
    group: &[TrainingImage<'_>],
    cfg: &ForestConfig,
    exec: Execution,
) -> Result<ForestModel, ForestError> {
    cfg.validate()?;
    for item in group {
        item.image.check_same_dims(item.labels)?;
    }
    let offsets: Vec<usize> = group
        .iter()
        .scan(0usize, |acc, item| {
            let start = *acc;
            *acc += item.image.len();
            Some(start)
        })
        .collect();
    let total: usize = group.iter().map(|i| i.image.len()).sum();
    if total == 0 {
        return Err(ForestError::EmptyGroup);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chosen: Vec<usize> = if total <= cfg.sample_cap {
        (0..total).collect()
    } else {
        let mut v = index::sample(&mut rng, total, cfg.sample_cap).into_vec();
        v.sort_unstable();
        v
    };
    let samples: Vec<(PixelFeature, bool)> = par::map(exec, &chosen, |&g| {
        let item = offsets.partition_point(|&o| o <= g) - 1;
        let local = g - offsets[item];
        let TrainingImage { image, labels } = group[item];
        let (h, w) = (local / image.width(), local % image.width());
        (feature_at(image, h, w), labels.as_slice()[local])
    });

    let trees = par::map_range(exec, cfg.n_trees, |t| grow_tree(&samples, cfg, t as u64));
    Ok(ForestModel {
        blade_id: blade_id.to_string(),
        config: cfg.clone(),
        trees,
    })
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f32,
    score: f64,
}

struct TreeBuilder<'a> {
    samples: &'a [(PixelFeature, bool)],
    cfg: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f32, bool)>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, members: Vec<usize>, depth: usize) -> usize {
        let n = members.len();
        let pos = members.iter().filter(|&&i| self.samples[i].1).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            fraction: pos as f64 / n as f64,
        });
        if depth >= self.cfg.max_depth || pos == 0 || pos == n || n < 2 {
            return id;
        }
        let Some(split) = self.best_split(&members, pos) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&i| self.samples[i].0[split.feature] < split.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&mut self, members: &[usize], pos: usize) -> Option<Split> {
        let n = members.len();
        let features = index::sample(&mut self.rng, FEATURE_DIM, self.cfg.features_per_split).into_vec();
        let mut best: Option<Split> = None;
        for feature in features {
            self.scratch.clear();
            self.scratch
                .extend(members.iter().map(|&i| (self.samples[i].0[feature], self.samples[i].1)));
            self.scratch
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // (split position, positives left of it) at every value change.
            let mut boundaries = Vec::new();
            let mut left_pos = 0;
            for i in 1..n {
                left_pos += self.scratch[i - 1].1 as usize;
                if self.scratch[i - 1].0 < self.scratch[i].0 {
                    boundaries.push((i, left_pos));
                }
            }
            let m = boundaries.len();
            if m == 0 {
                continue;
            }
            let k = self.cfg.max_thresholds;
            let candidates: Vec<(usize, usize)> = if m <= k {
                boundaries
            } else {
                (0..k).map(|j| boundaries[(2 * j + 1) * m / (2 * k)]).collect()
            };
            for (at, lp) in candidates {
                let rp = pos - lp;
                let score = (at as f64 * gini(lp, at) + (n - at) as f64 * gini(rp, n - at)) / n as f64;
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let lo = self.scratch[at - 1].0;
                    let hi = self.scratch[at].0;
                    let mut threshold = ((lo as f64 + hi as f64) / 2.0) as f32;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

fn grow_tree(samples: &[(PixelFeature, bool)], cfg: &ForestConfig, t: u64) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ t);
    rng.set_stream(1);
    let n = samples.len();
    let members: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut builder = TreeBuilder {
        samples,
        cfg,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(n),
    };
    builder.grow(members, 0);
    DecisionTree { nodes: builder.nodes }
}

/// Tree-averaged foreground probability for every pixel.
pub fn predict_proba_map(model: &ForestModel, img: &RgbImage, exec: Execution) -> Grid<f64> {
    let (height, width) = img.dims();
    let mut out = vec![0f64; height * width];
    par::for_each_row(exec, &mut out, width, |h, row| {
        for (w, v) in row.iter_mut().enumerate() {
            *v = model.predict_proba(&feature_at(img, h, w));
        }
    });
    Grid::from_vec(height, width, out).expect("shape preserved")
}

pub fn predict_mask(model: &ForestModel, img: &RgbImage) -> BinaryMask {
    predict_mask_with(model, img, Execution::Parallel)
}

pub fn predict_mask_with(model: &ForestModel, img: &RgbImage, exec: Execution) -> BinaryMask {
    let threshold = model.config.vote_threshold;
    predict_proba_map(model, img, exec).map(|&p| p >= threshold)
}
