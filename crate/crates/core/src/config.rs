//! Fully resolved run configuration with namespaced sections.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingConfig;
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::nn::NetConfig;
use crate::render::RenderConfig;
use crate::synth::SynthSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    /// Direct temperature network.
    pub lr_net: f64,
    /// Direct temperature network during stage 2, where it is already fitted.
    pub lr_net_stage2: f64,
    /// Thermal parameter heads.
    pub lr_thermal: f64,
    pub lr_opacity: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    /// Cosine decay ends at this fraction of each base learning rate.
    pub lr_final_fraction: f64,
    /// Linear ramp length at the start of every stage; fresh Adam moments
    /// otherwise kick already-fitted weights.
    pub warmup_iters: usize,
    /// Isotropic standard deviation (meters) given to every gaussian before stage 1.
    pub init_scale: f64,
    pub init_opacity: f64,
    pub temp_net_in_stage2: bool,
    /// Let the integral branch's gradient reach the direct network through
    /// the initial temperatures.
    pub anchor_grad: bool,
    /// Replace every feature vector with zeros before training.
    pub zero_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1_iters: 20000,
            stage2_iters: 20000,
            lr_net: 1e-3,
            lr_net_stage2: 1e-3,
            lr_thermal: 1e-3,
            lr_opacity: 1e-2,
            lr_rotation: 1e-3,
            lr_scale: 1e-3,
            lr_final_fraction: 0.1,
            warmup_iters: 100,
            init_scale: 0.5,
            init_opacity: 0.8,
            temp_net_in_stage2: true,
            anchor_grad: true,
            zero_features: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train.lr_net", self.lr_net),
            ("train.lr_net_stage2", self.lr_net_stage2),
            ("train.lr_thermal", self.lr_thermal),
            ("train.lr_opacity", self.lr_opacity),
            ("train.lr_rotation", self.lr_rotation),
            ("train.lr_scale", self.lr_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lr_final_fraction) {
            return Err(Error::invalid("train.lr_final_fraction must lie in [0, 1]"));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::invalid("train.init_scale must be positive"));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return Err(Error::invalid("train.init_opacity must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Learning rate at `iter` of `total`: linear warmup, then cosine decay.
    pub fn schedule(&self, base: f64, iter: usize, total: usize) -> f64 {
        let ramp = if iter < self.warmup_iters {
            (iter + 1) as f64 / self.warmup_iters as f64
        } else {
            1.0
        };
        if total <= 1 {
            return base * ramp;
        }
        let p = iter as f64 / (total - 1) as f64;
        let cos = 0.5 * (1.0 + crate::math::cos(core::f64::consts::PI * p));
        ramp * base * (self.lr_final_fraction + (1.0 - self.lr_final_fraction) * cos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermoConfig {
    /// Euler substeps across the full training span; shorter intervals use
    /// proportionally fewer.
    pub substeps: usize,
}

impl Default for ThermoConfig {
    fn default() -> Self {
        ThermoConfig { substeps: 32 }
    }
}

impl ThermoConfig {
    /// Substeps for integrating from `t0` to `t` when the training span is `span`.
    pub fn steps_for(&self, t0: f64, t: f64, span: f64) -> usize {
        if !(t > t0) {
            return 0;
        }
        if !(span > 0.0) {
            return self.substeps;
        }
        let n = libm::round(self.substeps as f64 * (t - t0) / span) as usize;
        n.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncConfig {
    pub time_levels: usize,
    pub pos_levels: usize,
}

impl Default for EncConfig {
    fn default() -> Self {
        EncConfig {
            time_levels: 4,
            pos_levels: 6,
        }
    }
}

impl EncConfig {
    pub fn time(&self) -> EncodingConfig {
        EncodingConfig::new(self.time_levels)
    }

    pub fn position(&self) -> EncodingConfig {
        EncodingConfig::new(self.pos_levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub l1: f64,
    pub ssim: f64,
    pub smooth: f64,
    /// Adds a per-gaussian squared tie between the direct and integrated temperatures.
    pub explicit_consistency: bool,
    pub consistency_weight: f64,
    /// Average rather than sum the two stage-2 image losses.
    pub average_images: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        LossConfig {
            l1: w.l1,
            ssim: w.ssim,
            smooth: w.smooth,
            explicit_consistency: false,
            consistency_weight: 1e-3,
            average_images: false,
        }
    }
}

impl LossConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            l1: self.l1,
            ssim: self.ssim,
            smooth: self.smooth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub thermo: ThermoConfig,
    pub enc: EncConfig,
    pub loss: LossConfig,
    pub net: NetConfig,
    pub render: RenderConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            synth: SynthSpec::default(),
            train: TrainConfig::default(),
            thermo: ThermoConfig::default(),
            enc: EncConfig::default(),
            loss: LossConfig::default(),
            net: NetConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if self.thermo.substeps == 0 {
            return Err(Error::invalid("thermo.substeps must be at least 1"));
        }
        self.enc.time().validate()?;
        self.enc.position().validate()?;
        self.loss.weights().validate()?;
        if !(self.loss.consistency_weight >= 0.0) {
            return Err(Error::invalid("loss.consistency_weight must be >= 0"));
        }
        self.net.validate()?;
        let r = &self.render;
        if !(r.project.near > 0.0 && r.project.guard_band >= 1.0 && r.project.cov_floor >= 0.0) {
            return Err(Error::invalid(
                "render.project needs near > 0, guard_band >= 1 and cov_floor >= 0",
            ));
        }
        if !(r.composite.alpha_min >= 0.0 && r.composite.transmittance_min >= 0.0) {
            return Err(Error::invalid("render.composite thresholds must be >= 0"));
        }
        Ok(())
    }
}
