//! Sinusoidal feature encodings of scalar time and 3D position.

use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Vec3};

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub levels: usize,
    pub include_input: bool,
    pub input_scale: f64,
}

impl EncodingConfig {
    pub fn new(levels: usize) -> Self {
        EncodingConfig {
            levels,
            include_input: true,
            input_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("encoding levels must be at least 1"));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "encoding input_scale must be positive, got {}",
                self.input_scale
            )));
        }
        Ok(())
    }

    /// Output width for `dims` input dimensions.
    pub fn output_len(&self, dims: usize) -> usize {
        dims * (usize::from(self.include_input) + 2 * self.levels)
    }
}

/// Encodes `x` as `[x̂…, sin(2^k π x̂_d), cos(2^k π x̂_d) …]` with `x̂ = x·input_scale`.
///
/// Raw inputs come first (when enabled), then for each dimension the
/// sin/cos pairs in increasing frequency.
pub fn fourier_encode(x: &[f64], cfg: &EncodingConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cfg.output_len(x.len()));
    encode_into(x, cfg, &mut out)?;
    Ok(out)
}

pub fn encode_into(x: &[f64], cfg: &EncodingConfig, out: &mut Vec<f64>) -> Result<()> {
    for (d, v) in x.iter().enumerate() {
        if !(v * cfg.input_scale).is_finite() {
            return Err(Error::NonFinite(format!("encoding input {d} is {v}")));
        }
    }
    if cfg.include_input {
        out.extend(x.iter().map(|v| v * cfg.input_scale));
    }
    for v in x {
        let xh = v * cfg.input_scale;
        let mut freq = math::PI;
        for _ in 0..cfg.levels {
            out.push(math::sin(freq * xh));
            out.push(math::cos(freq * xh));
            freq *= 2.0;
        }
    }
    Ok(())
}

/// Affine map `x ↦ (x − center)·scale` taking a raw span onto `[−½, ½]`.
///
/// The half-width range keeps both ends of the span from aliasing onto
/// the same sin/cos values at the lowest frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanMap {
    pub center: f64,
    pub scale: f64,
}

impl SpanMap {
    pub fn from_range(lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let scale = if width > 0.0 { 1.0 / width } else { 1.0 };
        SpanMap {
            center: 0.5 * (lo + hi),
            scale,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) * self.scale
    }
}

/// Normalization of network inputs, fixed once from the scene and dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputFrame {
    pub time: SpanMap,
    pub position_center: Vec3,
    pub position_scale: f64,
}

impl InputFrame {
    /// Time span `[t_first, t_last]`; positions scaled uniformly by the
    /// largest bounding-box extent.
    pub fn new(t_first: f64, t_last: f64, bounds: (Vec3, Vec3)) -> Self {
        let (lo, hi) = bounds;
        let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        InputFrame {
            time: SpanMap::from_range(t_first, t_last),
            position_center: [
                0.5 * (lo[0] + hi[0]),
                0.5 * (lo[1] + hi[1]),
                0.5 * (lo[2] + hi[2]),
            ],
            position_scale: if extent > 0.0 { 1.0 / extent } else { 1.0 },
        }
    }

    /// Normalized time, clamped to the capture span.
    pub fn time_hat(&self, t: f64) -> f64 {
        let th = self.time.apply(t);
        if !(-0.5..=0.5).contains(&th) {
            // Rows of one batch share their time, so say it once per process.
            if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!("time {t} s lies outside the encoded span; clamping (further clamps not reported)");
            }
        }
        th.clamp(-0.5, 0.5)
    }

    pub fn position_hat(&self, p: &Vec3) -> Vec3 {
        let c = &self.position_center;
        let s = self.position_scale;
        [(p[0] - c[0]) * s, (p[1] - c[1]) * s, (p[2] - c[2]) * s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_unit_cosines() {
        for levels in 1..5 {
            let cfg = EncodingConfig {
                levels,
                include_input: false,
                input_scale: 1.0,
            };
            let out = fourier_encode(&[0.0], &cfg).unwrap();
            for pair in out.chunks(2) {
                assert_eq!(pair, [0.0, 1.0]);
            }
        }
    }

    #[test]
    fn half_turn() {
        let cfg = EncodingConfig {
            levels: 1,
            include_input: false,
            input_scale: 1.0,
        };
        let out = fourier_encode(&[1.0], &cfg).unwrap();
        assert!(out[0].abs() < 1e-15);
        assert_eq!(out[1], -1.0);
    }

    #[test]
    fn quarter_input_two_levels() {
        let cfg = EncodingConfig {
            levels: 2,
            include_input: false,
            input_scale: 1.0,
        };
        let out = fourier_encode(&[0.25], &cfg).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let expected = [h, h, 1.0, 0.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{out:?}");
        }
    }

    #[test]
    fn input_scale_applies_before_encoding() {
        let cfg = EncodingConfig {
            levels: 1,
            include_input: true,
            input_scale: 0.5,
        };
        let out = fourier_encode(&[0.5], &cfg).unwrap();
        assert_eq!(out[0], 0.25);
        assert!((out[1] - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        let cfg = EncodingConfig::new(2);
        assert!(fourier_encode(&[f64::NAN], &cfg).is_err());
        assert!(fourier_encode(&[0.0, f64::INFINITY, 0.0], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncodingConfig::new(0).validate().is_err());
        let mut cfg = EncodingConfig::new(3);
        cfg.input_scale = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn span_map_hits_half_range() {
        let m = SpanMap::from_range(100.0, 300.0);
        assert_eq!(m.apply(100.0), -0.5);
        assert_eq!(m.apply(300.0), 0.5);
        let frame = InputFrame::new(0.0, 10.0, ([-2.0, -1.0, 0.0], [2.0, 1.0, 0.0]));
        assert_eq!(frame.position_hat(&[2.0, 1.0, 0.0]), [0.5, 0.25, 0.0]);
        assert_eq!(frame.time_hat(20.0), 0.5);
    }

    proptest::proptest! {
        #[test]
        fn output_length_formula(dims in 1usize..5, levels in 1usize..8, include in proptest::bool::ANY,
                                 seed in -10.0f64..10.0) {
            let cfg = EncodingConfig { levels, include_input: include, input_scale: 0.3 };
            let x: Vec<f64> = (0..dims).map(|d| seed + d as f64).collect();
            let a = fourier_encode(&x, &cfg).unwrap();
            let b = fourier_encode(&x, &cfg).unwrap();
            proptest::prop_assert_eq!(a.len(), dims * (usize::from(include) + 2 * levels));
            proptest::prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                                      b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
