//! Independent brute-force oracles shared by the integration suites. None of
//! these call into the code paths they check.

#![allow(dead_code)]

use bladeseg::holefill::BladeOrientation;
use bladeseg::{BinaryMask, FloatRaster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut ChaCha8Rng, height: usize, width: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(height, width, |_, _| rng.random_bool(density))
}

pub fn random_probability(rng: &mut ChaCha8Rng, height: usize, width: usize) -> FloatRaster {
    FloatRaster::from_fn(height, width, |_, _| rng.random::<f32>())
}

/// A background pixel stays background iff a 4-connected background path
/// from it reaches the image border. Searched independently per pixel.
pub fn fill_oracle(mask: &BinaryMask) -> BinaryMask {
    let (height, width) = mask.dims();
    BinaryMask::from_fn(height, width, |h0, w0| {
        if *mask.get(h0, w0) {
            return true;
        }
        let mut seen = vec![vec![false; width]; height];
        let mut stack = vec![(h0, w0)];
        seen[h0][w0] = true;
        while let Some((h, w)) = stack.pop() {
            if h == 0 || w == 0 || h == height - 1 || w == width - 1 {
                return false;
            }
            for (dh, dw) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let nh = (h as i64 + dh) as usize;
                let nw = (w as i64 + dw) as usize;
                if !*mask.get(nh, nw) && !seen[nh][nw] {
                    seen[nh][nw] = true;
                    stack.push((nh, nw));
                }
            }
        }
        true
    })
}

/// Double-loop accumulated |Δ| along x and y in integer arithmetic.
pub fn gradient_oracle(mask: &BinaryMask) -> (i64, i64) {
    let (height, width) = mask.dims();
    let v = |h: usize, w: usize| *mask.get(h, w) as i64;
    let mut gx = 0;
    let mut gy = 0;
    for h in 0..height {
        for w in 0..width {
            if w + 1 < width {
                gx += (v(h, w + 1) - v(h, w)).abs();
            }
            if h + 1 < height {
                gy += (v(h + 1, w) - v(h, w)).abs();
            }
        }
    }
    (gx, gy)
}

pub fn orientation_oracle(mask: &BinaryMask) -> BladeOrientation {
    let (gx, gy) = gradient_oracle(mask);
    if gx >= gy {
        BladeOrientation::Vertical
    } else {
        BladeOrientation::Horizontal
    }
}

/// (tp, fp, tn, fn) by direct tally.
pub fn confusion_oracle(pred: &BinaryMask, gt: &BinaryMask) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for h in 0..gt.height() {
        for w in 0..gt.width() {
            match (*pred.get(h, w), *gt.get(h, w)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    (tp, fp, tn, fn_)
}

/// accuracy, recall, precision, f1, miou with `None` for 0/0.
pub fn metrics_oracle(pred: &BinaryMask, gt: &BinaryMask) -> [Option<f64>; 5] {
    let (tp, fp, tn, fn_) = confusion_oracle(pred, gt);
    let div = |a: u64, b: u64| if b == 0 { None } else { Some(a as f64 / b as f64) };
    let accuracy = div(tp + tn, tp + fp + tn + fn_);
    let recall = div(tp, tp + fn_);
    let precision = div(tp, tp + fp);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let miou = match (div(tp, tp + fp + fn_), div(tn, tn + fp + fn_)) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    [accuracy, recall, precision, f1, miou]
}

/// A bar spanning the image along `orientation`, never the full cross extent.
pub fn bar_mask(rng: &mut ChaCha8Rng, orientation: BladeOrientation) -> BinaryMask {
    let height = rng.random_range(4..48);
    let width = rng.random_range(4..48);
    let across = match orientation {
        BladeOrientation::Vertical => width,
        BladeOrientation::Horizontal => height,
    };
    let thick = rng.random_range(1..across);
    let start = rng.random_range(0..=across - thick);
    BinaryMask::from_fn(height, width, |h, w| {
        let c = match orientation {
            BladeOrientation::Vertical => w,
            BladeOrientation::Horizontal => h,
        };
        (start..start + thick).contains(&c)
    })
}
