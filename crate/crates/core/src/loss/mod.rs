//! Training losses and evaluation metrics over thermal rasters.

mod ssim;

pub use ssim::{ssim_value, ssim_with_grad, window_taps, C1, C2, WINDOW, WINDOW_SIGMA};

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::image::ThermalImage;
use crate::math;
use crate::scene::KELVIN_OFFSET;
use crate::thermo::TempCurve;

pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub smooth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 0.8,
            ssim: 0.2,
            smooth: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("loss.l1", self.l1), ("loss.ssim", self.ssim), ("loss.smooth", self.smooth)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(alloc::format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Kelvin raster mapped to `[0, 1]` through a fixed temperature range.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    /// Kelvin mapped to 0.
    pub lo_k: f64,
    /// Kelvin mapped to 1.
    pub hi_k: f64,
}

impl NormalizedImage {
    /// Clamped normalization; `range_c` is in °C.
    pub fn from_kelvin(img: &ThermalImage, range_c: [f64; 2]) -> Result<Self> {
        let lo_k = range_c[0] + KELVIN_OFFSET;
        let hi_k = range_c[1] + KELVIN_OFFSET;
        if !(hi_k > lo_k) {
            return Err(Error::invalid("normalization range must be increasing"));
        }
        let inv = 1.0 / (hi_k - lo_k);
        Ok(NormalizedImage {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|v| ((v - lo_k) * inv).clamp(0.0, 1.0)).collect(),
            lo_k,
            hi_k,
        })
    }
}

/// Unclamped affine map used inside training so gradients never vanish at
/// the range boundaries. Returns the mapped values and the slope.
pub fn normalize_affine(kelvin: &[f64], range_c: [f64; 2]) -> (Vec<f64>, f64) {
    let lo_k = range_c[0] + KELVIN_OFFSET;
    let inv = 1.0 / (range_c[1] - range_c[0]);
    (kelvin.iter().map(|v| (v - lo_k) * inv).collect(), inv)
}

/// Mean absolute difference and its subgradient (0 at ties).
pub fn l1_loss(pred: &[f64], gt: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("l1 image", gt.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::invalid("l1 of empty image"));
    }
    let inv_n = 1.0 / pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let d = p - g;
            sum += math::abs(d);
            if d > 0.0 {
                inv_n
            } else if d < 0.0 {
                -inv_n
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum * inv_n, grad))
}

/// Mean squared second difference of per-step temperature changes.
///
/// `deltas` holds one curve after another, each with `steps` entries.
pub fn smooth_loss(deltas: &[f64], steps: usize) -> Result<(f64, Vec<f64>)> {
    if steps < 2 {
        return Err(Error::invalid(alloc::format!(
            "smoothness needs at least 2 substeps per curve, got {steps}"
        )));
    }
    if deltas.len() % steps != 0 || deltas.is_empty() {
        return Err(Error::invalid(alloc::format!(
            "{} deltas do not split into curves of {steps}",
            deltas.len()
        )));
    }
    let curves = deltas.len() / steps;
    let inv_n = 1.0 / (curves * (steps - 1)) as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; deltas.len()];
    for c in 0..curves {
        let d = &deltas[c * steps..(c + 1) * steps];
        let g = &mut grad[c * steps..(c + 1) * steps];
        for n in 0..steps - 1 {
            let diff = d[n + 1] - d[n];
            sum += diff * diff;
            g[n + 1] += 2.0 * diff * inv_n;
            g[n] -= 2.0 * diff * inv_n;
        }
    }
    Ok((sum * inv_n, grad))
}

/// [`smooth_loss`] over whole curves; all curves must share a step count.
pub fn smooth_loss_curves(curves: &[TempCurve]) -> Result<(f64, Vec<f64>)> {
    let steps = curves.first().map_or(0, |c| c.deltas.len());
    let mut flat = Vec::with_capacity(steps * curves.len());
    for c in curves {
        check_len("curve substeps", steps, c.deltas.len())?;
        flat.extend_from_slice(&c.deltas);
    }
    smooth_loss(&flat, steps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Parts {
    pub l1: f64,
    pub ssim: f64,
    pub total: f64,
}

/// `w.l1 · L1 + w.ssim · (1 − SSIM)` on normalized images.
pub fn stage1_loss(
    pred: &[f64],
    gt: &[f64],
    width: usize,
    height: usize,
    w: &LossWeights,
) -> Result<(Stage1Parts, Vec<f64>)> {
    let (l1, g_l1) = l1_loss(pred, gt)?;
    let (s, g_s) = ssim_with_grad(pred, gt, width, height)?;
    let total = w.l1 * l1 + w.ssim * (1.0 - s);
    let grad = g_l1
        .iter()
        .zip(&g_s)
        .map(|(a, b)| w.l1 * a - w.ssim * b)
        .collect();
    Ok((Stage1Parts { l1, ssim: s, total }, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Loss {
    pub total: f64,
    pub direct: Stage1Parts,
    pub integral: Stage1Parts,
    pub smooth: f64,
    pub grad_direct: Vec<f64>,
    pub grad_integral: Vec<f64>,
    pub grad_deltas: Vec<f64>,
}

/// Image losses of both predictions against the same target plus the
/// weighted smoothness term. With `average` the two image terms are
/// averaged instead of summed.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss(
    direct: &[f64],
    integral: &[f64],
    gt: &[f64],
    width: usize,
    height: usize,
    deltas: &[f64],
    steps: usize,
    w: &LossWeights,
    average: bool,
) -> Result<Stage2Loss> {
    let (pd, mut gd) = stage1_loss(direct, gt, width, height, w)?;
    let (pi, mut gi) = stage1_loss(integral, gt, width, height, w)?;
    let (smooth, mut gs) = if deltas.is_empty() {
        (0.0, Vec::new())
    } else {
        smooth_loss(deltas, steps)?
    };
    let k = if average { 0.5 } else { 1.0 };
    if average {
        gd.iter_mut().chain(gi.iter_mut()).for_each(|g| *g *= k);
    }
    gs.iter_mut().for_each(|g| *g *= w.smooth);
    Ok(Stage2Loss {
        total: k * (pd.total + pi.total) + w.smooth * smooth,
        direct: pd,
        integral: pi,
        smooth,
        grad_direct: gd,
        grad_integral: gi,
        grad_deltas: gs,
    })
}

/// Mean squared difference between two per-gaussian temperature sets,
/// with gradients for both.
pub fn consistency_loss(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_len("consistency temperatures", a.len(), b.len())?;
    if a.is_empty() {
        return Ok((0.0, Vec::new(), Vec::new()));
    }
    let inv_n = 1.0 / a.len() as f64;
    let mut sum = 0.0;
    let mut ga = Vec::with_capacity(a.len());
    let mut gb = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
        ga.push(2.0 * d * inv_n);
        gb.push(-2.0 * d * inv_n);
    }
    Ok((sum * inv_n, ga, gb))
}

/// `10·log10(1/MSE)` on normalized images, capped at 100 dB.
pub fn psnr(pred: &NormalizedImage, gt: &NormalizedImage) -> Result<f64> {
    psnr_values(&pred.data, &gt.data)
}

pub fn psnr_values(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_len("psnr image", gt.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::invalid("psnr of empty image"));
    }
    let mse = pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    if mse < 1e-10 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * math::log10(1.0 / mse)).min(PSNR_CAP_DB))
}

/// Mean absolute error in °C (identical to kelvin differences).
pub fn mae_celsius(pred_k: &ThermalImage, gt_k: &ThermalImage) -> Result<f64> {
    mae_values(&pred_k.data, &gt_k.data)
}

pub fn mae_values(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_len("mae image", gt.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::invalid("mae of empty image"));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| math::abs(a - b)).sum::<f64>() / pred.len() as f64)
}

/// Structural similarity of two normalized images.
pub fn ssim(pred: &NormalizedImage, gt: &NormalizedImage) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimMismatch {
            context: "ssim image",
            expected: gt.width * gt.height,
            found: pred.width * pred.height,
        });
    }
    ssim_value(&pred.data, &gt.data, pred.width, pred.height)
}
