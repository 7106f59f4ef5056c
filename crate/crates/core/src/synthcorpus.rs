//! Deterministic synthetic blade corpus.
//!
//! Every image shows one solid bar crossing the frame, colored from the blade
//! band over a background from a disjoint band, both with per-pixel jitter.
//! Probability maps start as the exact ground truth and are then corrupted:
//! rectangular holes strictly inside the bar drop to [`HOLE_PROBABILITY`], and
//! salt noise pushes random pixels to the wrong side. Holes are what hole
//! filling repairs; salt on the background is what the forest repairs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CorpusError, PipelineError};
use crate::holefill::BladeOrientation;
use crate::io;
use crate::par::{self, Execution};
use crate::pipeline::{Manifest, ManifestRow, ProbabilitySource};
use crate::raster::{BinaryMask, FlipTransform, FloatRaster, RgbImage};

pub const HOLE_PROBABILITY: f32 = 0.05;
pub const SALT_HIGH: f32 = 0.95;
pub const SALT_LOW: f32 = 0.05;

/// Inclusive per-channel color range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColorBand {
    pub lo: [u8; 3],
    pub hi: [u8; 3],
}

impl ColorBand {
    pub fn contains(&self, c: [u8; 3]) -> bool {
        (0..3).all(|k| self.lo[k] <= c[k] && c[k] <= self.hi[k])
    }

    /// True when at least one channel range does not overlap, so one
    /// threshold on that channel separates the bands.
    pub fn separable_from(&self, other: &ColorBand) -> bool {
        (0..3).any(|k| self.hi[k] < other.lo[k] || other.hi[k] < self.lo[k])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub groups: usize,
    pub per_group: usize,
    pub height: usize,
    pub width: usize,
    /// Orientation per group, cycled; empty alternates vertical/horizontal.
    pub orientations: Vec<BladeOrientation>,
    pub blade_band: ColorBand,
    pub background_band: ColorBand,
    /// Maximum per-pixel deviation from the group's base color.
    pub jitter: u8,
    pub holes: usize,
    /// Inclusive range of hole side lengths.
    pub hole_size: (usize, usize),
    pub salt_rate: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            groups: 2,
            per_group: 10,
            height: 128,
            width: 128,
            orientations: Vec::new(),
            blade_band: ColorBand {
                lo: [185, 185, 185],
                hi: [250, 250, 250],
            },
            background_band: ColorBand {
                lo: [10, 40, 60],
                hi: [120, 150, 170],
            },
            jitter: 12,
            holes: 2,
            hole_size: (3, 8),
            salt_rate: 0.01,
            seed: 7,
        }
    }
}

/// Axis-aligned rectangle, `h0..h0+rows` × `w0..w0+cols`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub h0: usize,
    pub w0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn contains(&self, h: usize, w: usize) -> bool {
        h >= self.h0 && h < self.h0 + self.rows && w >= self.w0 && w < self.w0 + self.cols
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusImage {
    pub blade_id: String,
    pub image_id: String,
    pub orientation: BladeOrientation,
    pub bar: Rect,
    pub holes: Vec<Rect>,
    pub rgb: RgbImage,
    pub gt: BinaryMask,
    pub probability: FloatRaster,
}

impl CorpusImage {
    /// Flip variants of the probability map, each in its flipped frame.
    pub fn flip_variants(&self) -> [FloatRaster; 4] {
        FlipTransform::ALL.map(|t| t.apply(&self.probability))
    }
}

impl CorpusSpec {
    pub fn orientation_of(&self, group: usize) -> BladeOrientation {
        if self.orientations.is_empty() {
            if group.is_multiple_of(2) {
                BladeOrientation::Vertical
            } else {
                BladeOrientation::Horizontal
            }
        } else {
            self.orientations[group % self.orientations.len()]
        }
    }

    /// Shortest extents of the bar (across, along) for the given orientation.
    fn bar_limits(&self, orientation: BladeOrientation) -> (usize, usize, usize) {
        let (across, along) = match orientation {
            BladeOrientation::Vertical => (self.width, self.height),
            BladeOrientation::Horizontal => (self.height, self.width),
        };
        let min_thick = (across / 4).max(1);
        let max_thick = (across / 2).max(min_thick);
        (min_thick, max_thick, along)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Impossible(m));
        if self.groups == 0 || self.per_group == 0 {
            return bad("groups and per_group must be >= 1".into());
        }
        if self.height < 3 || self.width < 3 {
            return bad(format!("image {}x{} too small", self.height, self.width));
        }
        for band in [&self.blade_band, &self.background_band] {
            if (0..3).any(|k| band.lo[k] > band.hi[k]) {
                return bad(format!("inverted color band {band:?}"));
            }
        }
        if !self.blade_band.separable_from(&self.background_band) {
            return bad("blade and background color bands overlap on every channel".into());
        }
        if !(0.0..=1.0).contains(&self.salt_rate) {
            return bad(format!("salt rate {} not in [0, 1]", self.salt_rate));
        }
        let (smin, smax) = self.hole_size;
        if self.holes > 0 {
            if smin == 0 || smin > smax {
                return bad(format!("hole size range {smin}..={smax} is empty"));
            }
            let distinct = if self.orientations.is_empty() {
                2
            } else {
                self.orientations.len()
            };
            for g in 0..self.groups.min(distinct) {
                let (min_thick, _, along) = self.bar_limits(self.orientation_of(g));
                // A hole needs a one-pixel blade margin on every side.
                if smax + 2 > min_thick || smax + 2 > along {
                    return bad(format!(
                        "hole side {smax} does not fit strictly inside a bar of thickness {min_thick} and length {along}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn blade_id(group: usize) -> String {
        format!("blade{group:02}")
    }

    pub fn image_id(index: usize) -> String {
        format!("img{index:03}")
    }
}

fn draw_color(rng: &mut ChaCha8Rng, band: &ColorBand) -> [u8; 3] {
    std::array::from_fn(|k| rng.random_range(band.lo[k]..=band.hi[k]))
}

fn jittered(rng: &mut ChaCha8Rng, base: [u8; 3], band: &ColorBand, jitter: u8) -> [u8; 3] {
    std::array::from_fn(|k| {
        let j = jitter as i32;
        let v = base[k] as i32 + rng.random_range(-j..=j);
        v.clamp(band.lo[k] as i32, band.hi[k] as i32) as u8
    })
}

fn generate_image(spec: &CorpusSpec, group: usize, index: usize, palette: ([u8; 3], [u8; 3])) -> CorpusImage {
    let global = (group * spec.per_group + index) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(global + 1);
    let orientation = spec.orientation_of(group);
    let (min_thick, max_thick, _) = spec.bar_limits(orientation);
    let (height, width) = (spec.height, spec.width);
    let thick = rng.random_range(min_thick..=max_thick);
    let bar = match orientation {
        BladeOrientation::Vertical => Rect {
            h0: 0,
            w0: rng.random_range(0..=width - thick),
            rows: height,
            cols: thick,
        },
        BladeOrientation::Horizontal => Rect {
            h0: rng.random_range(0..=height - thick),
            w0: 0,
            rows: thick,
            cols: width,
        },
    };
    let holes: Vec<Rect> = (0..spec.holes)
        .map(|_| {
            let rows = rng.random_range(spec.hole_size.0..=spec.hole_size.1);
            let cols = rng.random_range(spec.hole_size.0..=spec.hole_size.1);
            Rect {
                h0: rng.random_range(bar.h0 + 1..=bar.h0 + bar.rows - 1 - rows),
                w0: rng.random_range(bar.w0 + 1..=bar.w0 + bar.cols - 1 - cols),
                rows,
                cols,
            }
        })
        .collect();
    let gt = BinaryMask::from_fn(height, width, |h, w| bar.contains(h, w));
    let (blade_base, background_base) = palette;
    let rgb = RgbImage::from_fn(height, width, |h, w| {
        if *gt.get(h, w) {
            jittered(&mut rng, blade_base, &spec.blade_band, spec.jitter)
        } else {
            jittered(&mut rng, background_base, &spec.background_band, spec.jitter)
        }
    });
    let probability = FloatRaster::from_fn(height, width, |h, w| {
        let fg = *gt.get(h, w);
        let mut p = if fg { 1.0 } else { 0.0 };
        if holes.iter().any(|r| r.contains(h, w)) {
            p = HOLE_PROBABILITY;
        }
        if spec.salt_rate > 0.0 && rng.random_bool(spec.salt_rate) {
            p = if fg { SALT_LOW } else { SALT_HIGH };
        }
        p
    });
    CorpusImage {
        blade_id: CorpusSpec::blade_id(group),
        image_id: CorpusSpec::image_id(index),
        orientation,
        bar,
        holes,
        rgb,
        gt,
        probability,
    }
}

/// Generates the corpus in memory, groups in order, images in order.
pub fn generate_images(spec: &CorpusSpec) -> Result<Vec<CorpusImage>, CorpusError> {
    spec.validate()?;
    let palettes: Vec<([u8; 3], [u8; 3])> = (0..spec.groups)
        .map(|g| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(u64::MAX - g as u64);
            (
                draw_color(&mut rng, &spec.blade_band),
                draw_color(&mut rng, &spec.background_band),
            )
        })
        .collect();
    let n = spec.groups * spec.per_group;
    Ok(par::map_range(Execution::Parallel, n, |k| {
        let (g, i) = (k / spec.per_group, k % spec.per_group);
        generate_image(spec, g, i, palettes[g])
    }))
}

/// True when every hole lies strictly inside its bar, so each one is
/// enclosed by ground-truth foreground.
pub fn holes_enclosed(img: &CorpusImage) -> bool {
    img.holes.iter().all(|r| {
        r.h0 > img.bar.h0
            && r.w0 > img.bar.w0
            && r.h0 + r.rows < img.bar.h0 + img.bar.rows
            && r.w0 + r.cols < img.bar.w0 + img.bar.cols
    })
}

fn mkdir(path: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(path).map_err(|source| {
        CorpusError::Pipeline(PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// Writes the corpus under `out_dir` and returns the manifest, which is also
/// saved as `<out_dir>/manifest.csv`:
///
/// * `rgb/<blade>__<image>.ppm`, `gt/<blade>__<image>.pgm`
/// * `prob/<blade>__<image>.<id|fh|fv|fhv>.bpr`
pub fn generate(spec: &CorpusSpec, out_dir: &Path) -> Result<Manifest, CorpusError> {
    let images = generate_images(spec)?;
    for sub in ["rgb", "gt", "prob"] {
        mkdir(&out_dir.join(sub))?;
    }
    let mut rows = Vec::with_capacity(images.len());
    for img in &images {
        let stem = format!("{}__{}", img.blade_id, img.image_id);
        let rgb = out_dir.join("rgb").join(format!("{stem}.ppm"));
        let gt = out_dir.join("gt").join(format!("{stem}.pgm"));
        io::write_rgb(&img.rgb, &rgb)?;
        io::write_mask(&img.gt, &gt)?;
        let variants = img.flip_variants();
        let paths: [std::path::PathBuf; 4] =
            FlipTransform::ALL.map(|t| out_dir.join("prob").join(format!("{stem}.{}.bpr", t.tag())));
        for (p, path) in variants.iter().zip(&paths) {
            io::write_probability(p, path)?;
        }
        rows.push(ManifestRow {
            blade_id: img.blade_id.clone(),
            image_id: img.image_id.clone(),
            rgb,
            probability: ProbabilitySource::Flips(paths),
            gt: Some(gt),
        });
    }
    let manifest = Manifest { rows };
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
