//! Flip test-time augmentation: expansion of an input image into its four
//! flip variants and soft-vote fusion of the matching probability maps.

use crate::error::TtaError;
use crate::raster::{quantize, BinaryMask, FlipTransform, FloatRaster, Grid, RgbImage};

pub const DEFAULT_THRESHOLD: f64 = 0.4;

/// Four probability maps, one per flip transform, each in the flipped frame
/// of its transform.
#[derive(Clone, Debug, PartialEq)]
pub struct TtaBundle {
    // Indexed by `FlipTransform::index`.
    maps: [FloatRaster; 4],
}

impl TtaBundle {
    /// Accepts the entries in any order; each transform must appear exactly once.
    pub fn new(entries: Vec<(FlipTransform, FloatRaster)>) -> Result<Self, TtaError> {
        if entries.len() != 4 {
            return Err(TtaError::WrongEntryCount(entries.len()));
        }
        let mut slots: [Option<FloatRaster>; 4] = Default::default();
        for (t, raster) in entries {
            raster.check_probability()?;
            let slot = &mut slots[t.index()];
            if slot.is_some() {
                return Err(TtaError::DuplicateTransform(t));
            }
            *slot = Some(raster);
        }
        let maps = slots.map(|s| s.expect("four distinct transforms fill every slot"));
        for m in &maps[1..] {
            maps[0].check_same_dims(m)?;
        }
        Ok(Self { maps })
    }

    /// Builds a bundle from maps given in `FlipTransform::ALL` order
    /// (identity, horizontal, vertical, both).
    pub fn from_ordered(maps: [FloatRaster; 4]) -> Result<Self, TtaError> {
        Self::new(FlipTransform::ALL.into_iter().zip(maps).collect())
    }

    pub fn get(&self, t: FlipTransform) -> &FloatRaster {
        &self.maps[t.index()]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }
}

/// The four flip variants of `img`, tagged, for upstream inference.
pub fn expand_for_tta(img: &RgbImage) -> [(FlipTransform, RgbImage); 4] {
    FlipTransform::ALL.map(|t| (t, t.apply(img)))
}

/// Maps each prediction back to the original frame and averages with equal
/// weights. Summation runs in `f64` in fixed transform order.
pub fn soft_vote(bundle: &TtaBundle) -> FloatRaster {
    let aligned: Vec<FloatRaster> = FlipTransform::ALL
        .iter()
        .map(|&t| t.inverse().apply(bundle.get(t)))
        .collect();
    let (height, width) = bundle.dims();
    Grid::from_fn(height, width, |h, w| {
        let sum: f64 = aligned.iter().map(|m| *m.get(h, w) as f64).sum();
        (sum / 4.0) as f32
    })
}

/// Soft vote followed by quantization; yields the network-stage mask.
pub fn tta_quantize(bundle: &TtaBundle, threshold: f64) -> Result<BinaryMask, TtaError> {
    Ok(quantize(&soft_vote(bundle), threshold)?)
}
