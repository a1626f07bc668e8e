use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::project::{is_sorted, Splat2D};
use crate::error::{check_len, Error, Result};
use crate::image::ThermalImage;
use crate::math;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositeConfig {
    /// Contributions with `α̂` below this are skipped.
    pub alpha_min: f64,
    /// Accumulation stops once transmittance falls below this.
    pub transmittance_min: f64,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        CompositeConfig {
            alpha_min: 1.0 / 255.0,
            transmittance_min: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Contribution {
    /// Position in the sorted splat list.
    slot: u32,
    alpha: f64,
    /// `exp(−½ q)` before the opacity factor.
    falloff: f64,
    /// Transmittance in front of this splat.
    trans: f64,
}

/// Per-pixel record of the compositing sum.
#[derive(Debug, Clone)]
pub struct RenderTape {
    width: usize,
    height: usize,
    fingerprint: u64,
    background: f64,
    /// Per-pixel ranges into `contribs`.
    offsets: Vec<u32>,
    contribs: Vec<Contribution>,
    temps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ThermalImage,
    /// Accumulated opacity `1 − Π(1 − α̂)` per pixel.
    pub alpha_map: Vec<f64>,
    pub tape: RenderTape,
}

/// Gradients of a scalar loss through the compositing sum.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeGrads {
    /// Per gaussian.
    pub temp: Vec<f64>,
    /// Per gaussian.
    pub opacity: Vec<f64>,
    /// Per sorted splat.
    pub center: Vec<[f64; 2]>,
    /// Per sorted splat, partials w.r.t. covariance `(xx, xy, yy)`.
    pub cov: Vec<[f64; 3]>,
    pub background: f64,
}

fn fingerprint(splats: &[Splat2D]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    mix(splats.len() as u64);
    for s in splats {
        mix(s.index as u64);
        mix(s.center[0].to_bits());
        mix(s.center[1].to_bits());
        mix(s.conic[0].to_bits());
        mix(s.conic[1].to_bits());
        mix(s.conic[2].to_bits());
    }
    h
}

/// Conservative pixel bounds `[x0, x1) × [y0, y1)` outside which the
/// splat's `α̂` stays below `alpha_min`.
fn footprint(s: &Splat2D, opacity: f64, alpha_min: f64, w: usize, h: usize) -> Option<[usize; 4]> {
    if !(opacity >= alpha_min) {
        return None;
    }
    let q_max = 2.0 * math::ln(opacity / alpha_min);
    let rx = math::sqrt(q_max * s.cov[0]) + 1.0;
    let ry = math::sqrt(q_max * s.cov[2]) + 1.0;
    let x0 = math::floor(s.center[0] - rx - 0.5).max(0.0);
    let x1 = math::ceil(s.center[0] + rx + 0.5).min(w as f64);
    let y0 = math::floor(s.center[1] - ry - 0.5).max(0.0);
    let y1 = math::ceil(s.center[1] + ry + 0.5).min(h as f64);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    Some([x0 as usize, x1 as usize, y0 as usize, y1 as usize])
}

/// Front-to-back alpha compositing of per-gaussian temperatures.
///
/// Pixel `(x, y)` is sampled at `(x + ½, y + ½)`. Its value is
/// `Σ T_i·α̂_i·Π_{j<i}(1 − α̂_j) + T_bg·Π(1 − α̂_j)`.
///
/// # Panics
/// When `splats` is not sorted by ascending depth (ties by index).
pub fn composite(
    splats: &[Splat2D],
    temps: &[f64],
    opacities: &[f64],
    background: f64,
    width: usize,
    height: usize,
    cfg: &CompositeConfig,
) -> Result<RenderOutput> {
    assert!(is_sorted(splats), "composite: splats must be depth-sorted");
    check_len("composite opacities", temps.len(), opacities.len())?;
    if let Some(s) = splats.iter().find(|s| s.index >= temps.len()) {
        return Err(Error::DimMismatch {
            context: "composite temperatures",
            expected: s.index + 1,
            found: temps.len(),
        });
    }
    let boxes: Vec<Option<[usize; 4]>> = splats
        .iter()
        .map(|s| footprint(s, opacities[s.index], cfg.alpha_min, width, height))
        .collect();

    struct Row {
        values: Vec<f64>,
        alpha: Vec<f64>,
        counts: Vec<u32>,
        contribs: Vec<Contribution>,
    }

    let rows = par::map_ordered(height, |y| {
        let active: Vec<usize> = boxes
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.filter(|b| y >= b[2] && y < b[3]).map(|_| i))
            .collect();
        let mut row = Row {
            values: Vec::with_capacity(width),
            alpha: Vec::with_capacity(width),
            counts: Vec::with_capacity(width),
            contribs: Vec::new(),
        };
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let mut trans = 1.0;
            let mut acc = 0.0;
            let mut count = 0u32;
            for &slot in &active {
                let b = boxes[slot].unwrap_or([0; 4]);
                if x < b[0] || x >= b[1] {
                    continue;
                }
                let s = &splats[slot];
                let falloff = math::exp(-0.5 * s.quad_form(px - s.center[0], py - s.center[1]));
                let alpha = opacities[s.index] * falloff;
                if alpha < cfg.alpha_min {
                    continue;
                }
                acc += temps[s.index] * alpha * trans;
                row.contribs.push(Contribution {
                    slot: slot as u32,
                    alpha,
                    falloff,
                    trans,
                });
                count += 1;
                trans *= 1.0 - alpha;
                if trans < cfg.transmittance_min {
                    break;
                }
            }
            acc += background * trans;
            row.values.push(acc);
            row.alpha.push(1.0 - trans);
            row.counts.push(count);
        }
        row
    });

    let mut data = Vec::with_capacity(width * height);
    let mut alpha_map = Vec::with_capacity(width * height);
    let mut offsets = Vec::with_capacity(width * height + 1);
    let mut contribs = Vec::new();
    offsets.push(0u32);
    for row in rows {
        data.extend_from_slice(&row.values);
        alpha_map.extend_from_slice(&row.alpha);
        for c in row.counts {
            let last = offsets[offsets.len() - 1];
            offsets.push(last + c);
        }
        contribs.extend_from_slice(&row.contribs);
    }
    Ok(RenderOutput {
        image: ThermalImage {
            width,
            height,
            data,
            timestamp: 0.0,
        },
        alpha_map,
        tape: RenderTape {
            width,
            height,
            fingerprint: fingerprint(splats),
            background,
            offsets,
            contribs,
            temps: temps.to_vec(),
        },
    })
}

/// Exact reverse pass of [`composite`] for the recorded contributions.
pub fn composite_backward(
    tape: &RenderTape,
    splats: &[Splat2D],
    d_image: &[f64],
) -> Result<CompositeGrads> {
    if fingerprint(splats) != tape.fingerprint {
        return Err(Error::StaleTape);
    }
    check_len("image cotangent", tape.width * tape.height, d_image.len())?;
    let n_gauss = tape.temps.len();
    let n_splat = splats.len();
    let width = tape.width;

    struct Partial {
        temp: Vec<f64>,
        opacity: Vec<f64>,
        center: Vec<[f64; 2]>,
        cov: Vec<[f64; 3]>,
        background: f64,
    }

    let partials = par::map_ordered(tape.height, |y| {
        let mut p = Partial {
            temp: vec![0.0; n_gauss],
            opacity: vec![0.0; n_gauss],
            center: vec![[0.0; 2]; n_splat],
            cov: vec![[0.0; 3]; n_splat],
            background: 0.0,
        };
        let py = y as f64 + 0.5;
        for x in 0..width {
            let pix = y * width + x;
            let g = d_image[pix];
            if g == 0.0 {
                continue;
            }
            let range = tape.offsets[pix] as usize..tape.offsets[pix + 1] as usize;
            let cs = &tape.contribs[range];
            let final_trans = cs
                .last()
                .map_or(1.0, |c| c.trans * (1.0 - c.alpha));
            p.background += g * final_trans;
            let px = x as f64 + 0.5;
            // Temperature seen behind the current contributor.
            let mut behind = tape.background;
            for c in cs.iter().rev() {
                let s = &splats[c.slot as usize];
                let gi = s.index;
                let temp = tape.temps[gi];
                p.temp[gi] += g * c.alpha * c.trans;
                let d_alpha = g * c.trans * (temp - behind);
                behind = temp * c.alpha + (1.0 - c.alpha) * behind;
                p.opacity[gi] += d_alpha * c.falloff;
                let d_q = -0.5 * c.alpha * d_alpha;
                let dx = px - s.center[0];
                let dy = py - s.center[1];
                let [a, b, cc] = s.conic;
                p.center[c.slot as usize][0] += d_q * -2.0 * (a * dx + b * dy);
                p.center[c.slot as usize][1] += d_q * -2.0 * (b * dx + cc * dy);
                // dq/d(conic) = (dx², 2·dx·dy, dy²); chain through the inverse.
                let ga = d_q * dx * dx;
                let gb = d_q * dx * dy;
                let gc = d_q * dy * dy;
                // G_cov = −A·G_A·A with G_A = [[ga, gb], [gb, gc]].
                let t00 = a * ga + b * gb;
                let t01 = a * gb + b * gc;
                let t10 = b * ga + cc * gb;
                let t11 = b * gb + cc * gc;
                let s00 = -(t00 * a + t01 * b);
                let s01 = -(t00 * b + t01 * cc);
                let s11 = -(t10 * b + t11 * cc);
                let cov = &mut p.cov[c.slot as usize];
                cov[0] += s00;
                cov[1] += 2.0 * s01;
                cov[2] += s11;
            }
        }
        p
    });

    let mut out = CompositeGrads {
        temp: vec![0.0; n_gauss],
        opacity: vec![0.0; n_gauss],
        center: vec![[0.0; 2]; n_splat],
        cov: vec![[0.0; 3]; n_splat],
        background: 0.0,
    };
    for p in partials {
        for (o, v) in out.temp.iter_mut().zip(&p.temp) {
            *o += v;
        }
        for (o, v) in out.opacity.iter_mut().zip(&p.opacity) {
            *o += v;
        }
        for (o, v) in out.center.iter_mut().zip(&p.center) {
            o[0] += v[0];
            o[1] += v[1];
        }
        for (o, v) in out.cov.iter_mut().zip(&p.cov) {
            o[0] += v[0];
            o[1] += v[1];
            o[2] += v[2];
        }
        out.background += p.background;
    }
    Ok(out)
}

impl RenderTape {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of recorded (pixel, splat) contributions.
    pub fn contributions(&self) -> usize {
        self.contribs.len()
    }

    /// Compositing weights of pixel `(x, y)`: one per contributor in
    /// front-to-back order, then the background weight.
    pub fn pixel_weights(&self, x: usize, y: usize) -> Vec<f64> {
        let pix = y * self.width + x;
        let cs = &self.contribs[self.offsets[pix] as usize..self.offsets[pix + 1] as usize];
        let mut w: Vec<f64> = cs.iter().map(|c| c.alpha * c.trans).collect();
        w.push(cs.last().map_or(1.0, |c| c.trans * (1.0 - c.alpha)));
        w
    }
}
