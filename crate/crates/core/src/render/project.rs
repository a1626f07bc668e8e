use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::{self, Mat3, Quat, Vec3};
use crate::scene::{covariance_unchecked, Camera, GaussianPrimitive};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Camera-space depth below which gaussians are culled (meters).
    pub near: f64,
    /// Centers outside this multiple of the image extent are culled.
    pub guard_band: f64,
    /// Added to the diagonal of every projected covariance (px²).
    pub cov_floor: f64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            near: 0.1,
            guard_band: 1.3,
            cov_floor: 0.3,
        }
    }
}

/// A gaussian projected to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates of the projected center.
    pub center: [f64; 2],
    /// Symmetric covariance `(xx, xy, yy)` in px².
    pub cov: [f64; 3],
    /// Inverse covariance `(a, b, c)`; the quadratic form is
    /// `a·dx² + 2·b·dx·dy + c·dy²`.
    pub conic: [f64; 3],
    pub depth: f64,
    /// Index of the parent gaussian.
    pub index: usize,
    /// `J·W`, the linearized map from world offsets to pixel offsets.
    pub jw: [[f64; 3]; 2],
}

impl Splat2D {
    #[inline]
    pub fn quad_form(&self, dx: f64, dy: f64) -> f64 {
        let [a, b, c] = self.conic;
        a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Sorted by ascending depth, ties broken by gaussian index.
    pub splats: Vec<Splat2D>,
    pub culled: usize,
}

/// Conic from a symmetric 2x2 covariance `(xx, xy, yy)`.
pub fn conic_from_cov(cov: &[f64; 3]) -> Option<[f64; 3]> {
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > 0.0) {
        return None;
    }
    Some([cov[2] / det, -cov[1] / det, cov[0] / det])
}

/// Perspective projection with a first-order covariance transform.
pub fn project_gaussians(
    gaussians: &[GaussianPrimitive],
    camera: &Camera,
    cfg: &ProjectConfig,
) -> Projection {
    let k = &camera.intrinsics;
    let w = &camera.pose.rotation;
    let (width, height) = (camera.width as f64, camera.height as f64);
    let margin = 0.5 * (cfg.guard_band - 1.0);
    let (u_lo, u_hi) = (-margin * width, (1.0 + margin) * width);
    let (v_lo, v_hi) = (-margin * height, (1.0 + margin) * height);
    let mut splats = Vec::with_capacity(gaussians.len());
    let mut culled = 0;
    for (index, g) in gaussians.iter().enumerate() {
        let p = camera.world_to_camera(&g.mu);
        if !(p[2] > cfg.near) {
            culled += 1;
            continue;
        }
        let inv_z = 1.0 / p[2];
        let u = k.fx * p[0] * inv_z + k.cx;
        let v = k.fy * p[1] * inv_z + k.cy;
        if !(u >= u_lo && u <= u_hi && v >= v_lo && v <= v_hi) {
            culled += 1;
            continue;
        }
        let j = [
            [k.fx * inv_z, 0.0, -k.fx * p[0] * inv_z * inv_z],
            [0.0, k.fy * inv_z, -k.fy * p[1] * inv_z * inv_z],
        ];
        let mut jw = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                jw[r][c] = j[r][0] * w[0][c] + j[r][1] * w[1][c] + j[r][2] * w[2][c];
            }
        }
        let sigma = covariance_unchecked(&g.rot, &g.scale);
        let cov = project_cov(&jw, &sigma, cfg.cov_floor);
        let Some(conic) = conic_from_cov(&cov) else {
            culled += 1;
            continue;
        };
        splats.push(Splat2D {
            center: [u, v],
            cov,
            conic,
            depth: p[2],
            index,
            jw,
        });
    }
    sort_splats(&mut splats);
    Projection { splats, culled }
}

pub fn sort_splats(splats: &mut [Splat2D]) {
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
}

pub fn is_sorted(splats: &[Splat2D]) -> bool {
    splats
        .windows(2)
        .all(|w| w[0].depth < w[1].depth || (w[0].depth == w[1].depth && w[0].index < w[1].index))
}

fn project_cov(jw: &[[f64; 3]; 2], sigma: &Mat3, floor: f64) -> [f64; 3] {
    let mut ms = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            ms[r][c] = jw[r][0] * sigma[0][c] + jw[r][1] * sigma[1][c] + jw[r][2] * sigma[2][c];
        }
    }
    let xx = math::dot3(&ms[0], &jw[0]) + floor;
    let xy = math::dot3(&ms[0], &jw[1]);
    let yy = math::dot3(&ms[1], &jw[1]) + floor;
    [xx, xy, yy]
}

/// Pulls `dL/dcov` (scalar partials w.r.t. `xx`, `xy`, `yy`) of one splat
/// back to its gaussian's rotation quaternion and scale.
pub fn cov_backward(splat: &Splat2D, rot: &Quat, scale: &Vec3, d_cov: &[f64; 3]) -> (Quat, Vec3) {
    // Symmetric matrix gradient; xy appears in both off-diagonal slots.
    let g2 = [[d_cov[0], 0.5 * d_cov[1]], [0.5 * d_cov[1], d_cov[2]]];
    let m = &splat.jw;
    let mut g3 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += m[a][i] * g2[a][b] * m[b][j];
                }
            }
            g3[i][j] = s;
        }
    }
    let r = math::quat_to_mat3(rot);
    let mut n = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            n[i][k] = r[i][k] * scale[k];
        }
    }
    let gn = math::mat3_mul(&g3, &n);
    let mut d_r = [[0.0; 3]; 3];
    let mut d_scale = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            let dn = 2.0 * gn[i][k];
            d_scale[k] += dn * r[i][k];
            d_r[i][k] = dn * scale[k];
        }
    }
    (math::quat_to_mat3_backward(rot, &d_r), d_scale)
}
