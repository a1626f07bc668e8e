//! Explicit Gaussian scene: primitives, pinhole cameras and the ambient
//! air-temperature profile.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Quat, Vec3};

/// Offset between the Celsius and Kelvin scales.
pub const KELVIN_OFFSET: f64 = 273.15;

pub const UNIT_QUAT_TOL: f64 = 1e-6;

#[inline]
pub fn c_to_k(c: f64) -> f64 {
    c + KELVIN_OFFSET
}

#[inline]
pub fn k_to_c(k: f64) -> f64 {
    k - KELVIN_OFFSET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    pub mu: Vec3,
    /// Unit quaternion `[w, x, y, z]`.
    pub rot: Quat,
    /// Per-axis standard deviations in meters.
    pub scale: Vec3,
    pub opacity: f64,
    pub feature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_id: Option<u32>,
}

impl GaussianPrimitive {
    pub fn covariance(&self) -> Result<Mat3> {
        covariance_from_rs(&self.rot, &self.scale)
    }
}

/// `Σ = R·S·Sᵀ·Rᵀ` for rotation `rot` and per-axis standard deviations `scale`.
pub fn covariance_from_rs(rot: &Quat, scale: &Vec3) -> Result<Mat3> {
    let n = math::quat_norm(rot);
    if !(math::abs(n - 1.0) <= UNIT_QUAT_TOL) {
        return Err(Error::invalid(format!(
            "rotation quaternion has norm {n}, expected 1"
        )));
    }
    if !scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!(
            "scale components must be positive, got {scale:?}"
        )));
    }
    Ok(covariance_unchecked(rot, scale))
}

pub(crate) fn covariance_unchecked(rot: &Quat, scale: &Vec3) -> Mat3 {
    let r = math::quat_to_mat3(rot);
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = (0..3)
                .map(|k| r[i][k] * scale[k] * scale[k] * r[j][k])
                .sum::<f64>();
            sigma[i][j] = v;
            sigma[j][i] = v;
        }
    }
    sigma
}

/// Normalized trivariate Gaussian density.
pub fn gaussian_density(x: &Vec3, mu: &Vec3, sigma: &Mat3) -> Result<f64> {
    let (inv, det) = math::inverse3(sigma, 1e-300)
        .ok_or_else(|| Error::Singular(format!("covariance {sigma:?} is not invertible")))?;
    if det <= 0.0 {
        return Err(Error::Singular(format!(
            "covariance determinant {det} is not positive"
        )));
    }
    let d = math::sub3(x, mu);
    let q = math::dot3(&d, &math::mat3_vec(&inv, &d));
    let norm = math::powf(2.0 * math::PI, 1.5) * math::sqrt(det);
    Ok(math::exp(-0.5 * q) / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// World-to-camera rigid transform: `x_cam = rotation · x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

/// Pinhole camera; camera frame is x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = math::sub3(&target, &eye);
        if math::norm3(&forward) == 0.0 {
            return Err(Error::invalid("camera eye and target coincide"));
        }
        let z = math::normalize3(&forward);
        let x = math::cross3(&z, &up);
        if math::norm3(&x) < 1e-12 {
            return Err(Error::invalid("camera up vector is parallel to view direction"));
        }
        let x = math::normalize3(&x);
        let y = math::cross3(&z, &x);
        let rotation = [x, y, z];
        let re = math::mat3_vec(&rotation, &eye);
        let cam = Camera {
            intrinsics: Intrinsics {
                fx: focal,
                fy: focal,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
            },
            pose: Pose {
                rotation,
                translation: [-re[0], -re[1], -re[2]],
            },
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got ({}, {})",
                k.fx, k.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be nonzero"));
        }
        let r = &self.pose.rotation;
        let rrt = math::mat3_mul(r, &math::transpose3(r));
        for (i, row) in rrt.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                if math::abs(v - expected) > 1e-6 {
                    return Err(Error::invalid("camera rotation is not orthonormal"));
                }
            }
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        let r = math::mat3_vec(&self.pose.rotation, p);
        let t = &self.pose.translation;
        [r[0] + t[0], r[1] + t[1], r[2] + t[2]]
    }
}

/// Piecewise-linear air temperature over time. Knots are `(seconds, °C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientProfile {
    pub knots: Vec<[f64; 2]>,
}

impl AmbientProfile {
    pub fn constant_c(c: f64) -> Self {
        AmbientProfile {
            knots: alloc::vec![[0.0, c]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::invalid("ambient.knots must contain at least one knot"));
        }
        for (i, k) in self.knots.iter().enumerate() {
            if !(k[0].is_finite() && k[1].is_finite()) {
                return Err(Error::invalid(format!("ambient.knots[{i}] is not finite")));
            }
            if i > 0 && !(k[0] > self.knots[i - 1][0]) {
                return Err(Error::invalid(format!(
                    "ambient.knots[{i}] time {} is not after previous knot time {}",
                    k[0],
                    self.knots[i - 1][0]
                )));
            }
        }
        Ok(())
    }

    /// Air temperature in °C; clamps outside the knot range.
    pub fn celsius_at(&self, t: f64) -> f64 {
        let knots = &self.knots;
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if t <= first[0] {
            return first[1];
        }
        if t >= last[0] {
            return last[1];
        }
        let idx = knots.partition_point(|k| k[0] <= t);
        let a = knots[idx - 1];
        let b = knots[idx];
        let w = (t - a[0]) / (b[0] - a[0]);
        a[1] + w * (b[1] - a[1])
    }

    pub fn kelvin_at(&self, t: f64) -> f64 {
        c_to_k(self.celsius_at(t))
    }

    /// Largest absolute slope between consecutive knots, °C per second.
    pub fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| math::abs((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub gaussians: Vec<GaussianPrimitive>,
    pub ambient: AmbientProfile,
    /// Normalization range `(t_min, t_max)` in °C.
    pub temp_range: [f64; 2],
    pub time_origin: f64,
    /// Background temperature in °C; defaults to the `temp_range` midpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_c: Option<f64>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.gaussians.is_empty() {
            return Err(Error::invalid("gaussians: scene must contain at least one gaussian"));
        }
        if !(self.temp_range[0] < self.temp_range[1]) {
            return Err(Error::invalid(format!(
                "temp_range: t_min {} must be below t_max {}",
                self.temp_range[0], self.temp_range[1]
            )));
        }
        if !self.time_origin.is_finite() {
            return Err(Error::invalid("time_origin must be finite"));
        }
        self.ambient.validate()?;
        let feat_dim = self.gaussians[0].feature.len();
        for (i, g) in self.gaussians.iter().enumerate() {
            if !g.mu.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("gaussians[{i}].mu is not finite")));
            }
            let n = math::quat_norm(&g.rot);
            if !(math::abs(n - 1.0) <= UNIT_QUAT_TOL) {
                return Err(Error::invalid(format!(
                    "gaussians[{i}].rot has norm {n}, expected 1"
                )));
            }
            if !g.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!(
                    "gaussians[{i}].scale must be positive"
                )));
            }
            if !(0.0..=1.0).contains(&g.opacity) {
                return Err(Error::invalid(format!(
                    "gaussians[{i}].opacity {} outside [0, 1]",
                    g.opacity
                )));
            }
            if g.feature.len() != feat_dim {
                return Err(Error::invalid(format!(
                    "gaussians[{i}].feature has length {}, expected {feat_dim}",
                    g.feature.len()
                )));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.gaussians.first().map_or(0, |g| g.feature.len())
    }

    pub fn background_c(&self) -> f64 {
        self.background_c
            .unwrap_or(0.5 * (self.temp_range[0] + self.temp_range[1]))
    }

    pub fn background_k(&self) -> f64 {
        c_to_k(self.background_c())
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.gaussians.iter().map(|g| g.mu).collect()
    }

    /// Axis-aligned bounds of the gaussian centers.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for g in &self.gaussians {
            for k in 0..3 {
                lo[k] = lo[k].min(g.mu[k]);
                hi[k] = hi[k].max(g.mu[k]);
            }
        }
        (lo, hi)
    }
}
