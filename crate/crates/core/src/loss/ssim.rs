use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1D gaussian taps; the 2D window is their outer product.
pub fn window_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = math::exp(-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA));
        sum += *t;
    }
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

/// Valid-mode separable filtering: output is `(h − 10) × (w − 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            let mut s = 0.0;
            for (k, t) in taps.iter().enumerate() {
                s += t * row[x + k];
            }
            tmp[y * ow + x] = s;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (k, t) in taps.iter().enumerate() {
                s += t * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `(h − 10) × (w − 10)` map back
/// onto the full `h × w` grid.
fn filter_adjoint(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for (k, t) in taps.iter().enumerate() {
                tmp[(y + k) * ow + x] += t * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (k, t) in taps.iter().enumerate() {
                out[y * w + x + k] += t * v;
            }
        }
    }
    out
}

fn check_dims(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<()> {
    check_len("ssim image", w * h, a.len())?;
    check_len("ssim image", w * h, b.len())?;
    if w < WINDOW || h < WINDOW {
        return Err(Error::invalid(alloc::format!(
            "ssim needs at least {WINDOW}x{WINDOW} pixels, got {w}x{h}"
        )));
    }
    Ok(())
}

struct Moments {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn moments(a: &[f64], b: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Moments {
    let sq_a: Vec<f64> = a.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = b.iter().map(|v| v * v).collect();
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, taps);
    let mu_b = filter_valid(b, w, h, taps);
    let e_aa = filter_valid(&sq_a, w, h, taps);
    let e_bb = filter_valid(&sq_b, w, h, taps);
    let e_ab = filter_valid(&prod, w, h, taps);
    let n = mu_a.len();
    let mut var_a = vec![0.0; n];
    let mut var_b = vec![0.0; n];
    let mut cov = vec![0.0; n];
    for i in 0..n {
        var_a[i] = e_aa[i] - mu_a[i] * mu_a[i];
        var_b[i] = e_bb[i] - mu_b[i] * mu_b[i];
        cov[i] = e_ab[i] - mu_a[i] * mu_b[i];
    }
    Moments {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov,
    }
}

/// Mean local SSIM over all full 11×11 windows.
pub fn ssim_value(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<f64> {
    check_dims(a, b, w, h)?;
    let m = moments(a, b, w, h, &window_taps());
    let n = m.mu_a.len();
    let mut sum = 0.0;
    for i in 0..n {
        let num = (2.0 * m.mu_a[i] * m.mu_b[i] + C1) * (2.0 * m.cov[i] + C2);
        let den = (m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + C1) * (m.var_a[i] + m.var_b[i] + C2);
        sum += num / den;
    }
    Ok(sum / n as f64)
}

/// SSIM and its gradient with respect to `pred`.
pub fn ssim_with_grad(pred: &[f64], gt: &[f64], w: usize, h: usize) -> Result<(f64, Vec<f64>)> {
    check_dims(pred, gt, w, h)?;
    let taps = window_taps();
    let m = moments(pred, gt, w, h, &taps);
    let n = m.mu_a.len();
    let inv_n = 1.0 / n as f64;
    let mut sum = 0.0;
    let mut g_mu = vec![0.0; n];
    let mut g_sq = vec![0.0; n];
    let mut g_prod = vec![0.0; n];
    for i in 0..n {
        let (mx, my) = (m.mu_a[i], m.mu_b[i]);
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * m.cov[i] + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = m.var_a[i] + m.var_b[i] + C2;
        let s = (a1 * a2) / (b1 * b2);
        sum += s;
        let d_a1 = a2 / (b1 * b2);
        let d_a2 = a1 / (b1 * b2);
        let d_b1 = -s / b1;
        let d_b2 = -s / b2;
        // Partials w.r.t. the windowed mean, mean square and cross moment.
        g_mu[i] = inv_n * (2.0 * my * (d_a1 - d_a2) + 2.0 * mx * (d_b1 - d_b2));
        g_sq[i] = inv_n * d_b2;
        g_prod[i] = inv_n * 2.0 * d_a2;
    }
    let back_mu = filter_adjoint(&g_mu, w, h, &taps);
    let back_sq = filter_adjoint(&g_sq, w, h, &taps);
    let back_prod = filter_adjoint(&g_prod, w, h, &taps);
    let grad = (0..w * h)
        .map(|i| back_mu[i] + 2.0 * pred[i] * back_sq[i] + gt[i] * back_prod[i])
        .collect();
    Ok((sum * inv_n, grad))
}
