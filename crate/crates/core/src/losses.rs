//! Focal, contiguity and total losses over a logit raster, with analytic
//! gradients and a central-difference checker.
//!
//! The focal loss is a pixel sum (not a mean). Every per-pixel term is
//! evaluated through `log σ(x) = −softplus(−x)` and `1 − σ(x) = σ(−x)`, so
//! logits of any finite magnitude give finite results. Reductions run in
//! row-major order in `f64`.

use crate::error::{LossError, RasterError};
use crate::raster::{BinaryMask, Grid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Foreground class weight, in `(0, 1)`.
    pub alpha: f64,
    /// Confidence-penalty exponent, `≥ 0`.
    pub gamma: f64,
    /// Contiguity weight in the total loss, `≥ 0`.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            lambda: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LossError::InvalidConfig(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(LossError::InvalidConfig(format!(
                "gamma {} must be finite and >= 0",
                self.gamma
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LossError::InvalidConfig(format!(
                "lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub focal: f64,
    pub contiguity: f64,
    pub total: f64,
}

/// Analytic contiguity gradient. At an all-equal σ raster the square root is
/// not differentiable; `differentiable` is then false and `grad` is all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ContiguityGradient {
    pub grad: Grid<f64>,
    pub differentiable: bool,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn to_f64<T: Copy + Into<f64>>(logits: &Grid<T>) -> Result<Vec<f64>, LossError> {
    logits
        .as_slice()
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            let v: f64 = v.into();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(LossError::Raster(RasterError::NonFinite { index, value: v }))
            }
        })
        .collect()
}

/// Signed argument and class weight of one focal term. The term equals
/// `weight · σ(z)^γ · softplus(z)`; `dz/dx` is `+1` for background, `−1` for foreground.
#[inline]
fn focal_parts(foreground: bool, logit: f64, cfg: &LossConfig) -> (f64, f64) {
    if foreground {
        (-logit, cfg.alpha)
    } else {
        (logit, 1.0 - cfg.alpha)
    }
}

#[inline]
fn focal_term(foreground: bool, logit: f64, cfg: &LossConfig) -> f64 {
    let (z, weight) = focal_parts(foreground, logit, cfg);
    weight * sigmoid(z).powf(cfg.gamma) * softplus(z)
}

#[inline]
fn focal_term_grad(foreground: bool, logit: f64, cfg: &LossConfig) -> f64 {
    let (z, weight) = focal_parts(foreground, logit, cfg);
    let p = sigmoid(z);
    let dz = weight * p.powf(cfg.gamma) * (cfg.gamma * sigmoid(-z) * softplus(z) + p);
    if foreground {
        -dz
    } else {
        dz
    }
}

pub fn focal_loss<T: Copy + Into<f64>>(gt: &BinaryMask, logits: &Grid<T>, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    gt.check_same_dims(logits)?;
    let x = to_f64(logits)?;
    Ok(gt.as_slice().iter().zip(&x).map(|(&s, &v)| focal_term(s, v, cfg)).sum())
}

/// `∂L_f/∂logit` per pixel.
pub fn focal_loss_grad<T: Copy + Into<f64>>(
    gt: &BinaryMask,
    logits: &Grid<T>,
    cfg: &LossConfig,
) -> Result<Grid<f64>, LossError> {
    cfg.validate()?;
    gt.check_same_dims(logits)?;
    let x = to_f64(logits)?;
    let grad = gt
        .as_slice()
        .iter()
        .zip(&x)
        .map(|(&s, &v)| focal_term_grad(s, v, cfg))
        .collect();
    Ok(Grid::from_vec(gt.height(), gt.width(), grad)?)
}

/// Bracketed sum of squared vertical then horizontal σ differences.
fn contiguity_sum(p: &[f64], height: usize, width: usize) -> f64 {
    let mut vertical = 0.0;
    for h in 0..height.saturating_sub(1) {
        for w in 0..width {
            let d = p[(h + 1) * width + w] - p[h * width + w];
            vertical += d * d;
        }
    }
    let mut horizontal = 0.0;
    for h in 0..height {
        for w in 0..width.saturating_sub(1) {
            let d = p[h * width + w + 1] - p[h * width + w];
            horizontal += d * d;
        }
    }
    vertical + horizontal
}

/// `(1/HW) · sqrt(Σ vertical² + Σ horizontal²)` over sigmoid values.
pub fn contiguity_loss<T: Copy + Into<f64>>(logits: &Grid<T>) -> Result<f64, LossError> {
    let x = to_f64(logits)?;
    let p: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
    let (height, width) = logits.dims();
    Ok(contiguity_sum(&p, height, width).sqrt() / (height * width) as f64)
}

pub fn contiguity_loss_grad<T: Copy + Into<f64>>(logits: &Grid<T>) -> Result<ContiguityGradient, LossError> {
    let x = to_f64(logits)?;
    let p: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
    let (height, width) = logits.dims();
    let sum = contiguity_sum(&p, height, width);
    if sum == 0.0 {
        return Ok(ContiguityGradient {
            grad: Grid::filled(height, width, 0.0),
            differentiable: false,
        });
    }
    let scale = 1.0 / ((height * width) as f64 * sum.sqrt());
    let grad = Grid::from_fn(height, width, |h, w| {
        let k = h * width + w;
        let mut diff = 0.0;
        if h > 0 {
            diff += p[k] - p[k - width];
        }
        if h + 1 < height {
            diff += p[k] - p[k + width];
        }
        if w > 0 {
            diff += p[k] - p[k - 1];
        }
        if w + 1 < width {
            diff += p[k] - p[k + 1];
        }
        scale * p[k] * (1.0 - p[k]) * diff
    });
    Ok(ContiguityGradient {
        grad,
        differentiable: true,
    })
}

pub fn total_loss<T: Copy + Into<f64>>(
    gt: &BinaryMask,
    logits: &Grid<T>,
    cfg: &LossConfig,
) -> Result<LossValue, LossError> {
    let focal = focal_loss(gt, logits, cfg)?;
    let contiguity = contiguity_loss(logits)?;
    Ok(LossValue {
        focal,
        contiguity,
        total: focal + cfg.lambda * contiguity,
    })
}

/// Central finite-difference gradients, used to cross-check the analytic ones.
pub mod gradcheck {
    use super::*;

    pub const DEFAULT_STEP: f64 = 1e-5;
    /// Denominator floor for the relative error of near-zero gradients.
    pub const REL_ERR_FLOOR: f64 = 1e-8;

    /// `(f(x + step·e_k) − f(x − step·e_k)) / (2·step)` for every pixel `k`.
    pub fn central_difference<E>(
        logits: &Grid<f64>,
        step: f64,
        mut f: impl FnMut(&Grid<f64>) -> Result<f64, E>,
    ) -> Result<Grid<f64>, E> {
        let mut probe = logits.clone();
        let mut out = Vec::with_capacity(logits.len());
        for k in 0..logits.len() {
            let x = logits.as_slice()[k];
            probe.as_mut_slice()[k] = x + step;
            let up = f(&probe)?;
            probe.as_mut_slice()[k] = x - step;
            let down = f(&probe)?;
            probe.as_mut_slice()[k] = x;
            out.push((up - down) / (2.0 * step));
        }
        Ok(Grid::from_vec(logits.height(), logits.width(), out).expect("same shape as input"))
    }

    pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
        let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        (analytic - numeric).abs() / denom
    }

    pub fn max_relative_error(analytic: &Grid<f64>, numeric: &Grid<f64>) -> f64 {
        analytic
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max)
    }

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct GradCheckReport {
        pub focal_max_rel_err: f64,
        /// `None` at the non-differentiable all-equal point.
        pub contiguity_max_rel_err: Option<f64>,
    }

    /// Compares both analytic gradients against central differences.
    pub fn check_losses<T: Copy + Into<f64>>(
        gt: &BinaryMask,
        logits: &Grid<T>,
        cfg: &LossConfig,
        step: f64,
    ) -> Result<GradCheckReport, LossError> {
        let x = logits.map(|&v| v.into());
        let focal_analytic = focal_loss_grad(gt, &x, cfg)?;
        let focal_numeric = central_difference(&x, step, |probe| focal_loss(gt, probe, cfg))?;
        let contiguity = contiguity_loss_grad(&x)?;
        let contiguity_max_rel_err = if contiguity.differentiable {
            let numeric = central_difference(&x, step, contiguity_loss)?;
            Some(max_relative_error(&contiguity.grad, &numeric))
        } else {
            None
        };
        Ok(GradCheckReport {
            focal_max_rel_err: max_relative_error(&focal_analytic, &focal_numeric),
            contiguity_max_rel_err,
        })
    }
}
