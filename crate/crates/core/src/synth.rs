//! Synthetic scenes with known materials, simulated cooling and rendered
//! ground-truth captures.
//!
//! Ground truth is rendered with the same splatting model the trainer uses.
//! At this scale that inverse crime is deliberate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split, TimedCapture};
use crate::error::{Error, Result};
use crate::math;
use crate::render::{render, RenderConfig};
use crate::scene::{c_to_k, AmbientProfile, Camera, GaussianPrimitive, Scene};
use crate::thermo::{rk4_integrate, temp_rate, TempCurve, ThermoParams};

/// Substeps per interval between consecutive requested timestamps.
pub const GT_SUBSTEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub name: String,
    pub e: f64,
    pub c: f64,
    pub h: f64,
    /// Surface temperature at the first timestamp, °C.
    pub initial_c: f64,
}

impl MaterialSpec {
    pub fn params(&self) -> ThermoParams {
        ThermoParams {
            e: self.e,
            c: self.c,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRing {
    pub count: usize,
    /// Height above the look-at point, meters.
    pub altitude: f64,
    /// Horizontal distance from the look-at point, meters.
    pub radius: f64,
    pub look_at: [f64; 3],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraRing {
    fn default() -> Self {
        CameraRing {
            count: 4,
            altitude: 20.0,
            radius: 8.0,
            look_at: [0.0, 0.0, 0.0],
            focal: 150.0,
            width: 64,
            height: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Grid rows and columns of gaussian patches.
    pub grid: [usize; 2],
    /// Grid pitch, meters.
    pub spacing: f64,
    /// Uniform in-plane jitter as a fraction of `spacing`.
    pub jitter: f64,
    /// Materials tile the grid as a checkerboard of `block × block` cells.
    pub block: usize,
    pub materials: Vec<MaterialSpec>,
    /// Length of the one-hot feature vector (padded with zeros).
    pub feature_dim: usize,
    /// Ground-truth in-plane and vertical standard deviations as fractions of `spacing`.
    pub scale_xy: f64,
    pub scale_z: f64,
    pub opacity: f64,
    pub cameras: CameraRing,
    pub train_times: Vec<f64>,
    pub test_times: Vec<f64>,
    pub ambient: AmbientProfile,
    /// Normalization range in °C.
    pub temp_range: [f64; 2],
    pub noise_c: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            grid: [12, 12],
            spacing: 1.0,
            jitter: 0.1,
            block: 3,
            materials: default_palette()[..2].to_vec(),
            feature_dim: 8,
            scale_xy: 0.6,
            scale_z: 0.05,
            opacity: 0.95,
            cameras: CameraRing::default(),
            train_times: vec![0.0, 21600.0],
            test_times: vec![7200.0, 14400.0],
            ambient: AmbientProfile {
                knots: vec![[0.0, 18.0], [21600.0, 12.0]],
            },
            temp_range: [0.0, 30.0],
            noise_c: 0.1,
        }
    }
}

/// Road, roof, grass and water, with emissivity ordered road > grass > roof.
pub fn default_palette() -> Vec<MaterialSpec> {
    let m = |name: &str, e, c, h, initial_c| MaterialSpec {
        name: name.into(),
        e,
        c,
        h,
        initial_c,
    };
    vec![
        m("road", 0.95, 8.0, 6e5, 24.0),
        m("roof", 0.6, 8.0, 6e5, 24.0),
        m("grass", 0.8, 8.0, 6e5, 24.0),
        m("water", 0.9, 8.0, 2e6, 24.0),
    ]
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid[0] == 0 || self.grid[1] == 0 {
            return Err(Error::invalid("synth.grid must be at least 1x1"));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::invalid("synth.spacing must be positive"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::invalid("synth.jitter must lie in [0, 0.5) so cells stay disjoint"));
        }
        if self.block == 0 {
            return Err(Error::invalid("synth.block must be at least 1"));
        }
        if self.materials.is_empty() {
            return Err(Error::invalid("synth.materials must not be empty"));
        }
        if self.materials.len() > self.feature_dim {
            return Err(Error::invalid(format!(
                "synth.feature_dim {} cannot one-hot encode {} materials",
                self.feature_dim,
                self.materials.len()
            )));
        }
        for (i, m) in self.materials.iter().enumerate() {
            m.params()
                .validate()
                .map_err(|e| Error::invalid(format!("synth.materials[{i}] ({}): {e}", m.name)))?;
            if !m.initial_c.is_finite() || c_to_k(m.initial_c) <= 0.0 {
                return Err(Error::invalid(format!("synth.materials[{i}].initial_c is invalid")));
            }
        }
        if !(self.scale_xy > 0.0 && self.scale_z > 0.0) {
            return Err(Error::invalid("synth.scale_xy and synth.scale_z must be positive"));
        }
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(Error::invalid("synth.opacity must lie in (0, 1]"));
        }
        if self.cameras.count == 0 || self.cameras.width == 0 || self.cameras.height == 0 {
            return Err(Error::invalid("synth.cameras needs at least one camera and a nonzero size"));
        }
        if self.train_times.len() < 2 {
            return Err(Error::invalid("synth.train_times needs at least two timestamps"));
        }
        let lo = self.train_times.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.train_times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, t) in self.test_times.iter().enumerate() {
            if !(*t >= lo && *t <= hi) {
                return Err(Error::invalid(format!(
                    "synth.test_times[{i}] = {t} is not bracketed by the training times [{lo}, {hi}]"
                )));
            }
        }
        let all = self.all_times();
        if all.len() != self.train_times.len() + self.test_times.len() {
            return Err(Error::invalid("synth train and test timestamps must be distinct"));
        }
        self.ambient.validate()?;
        if !(self.temp_range[0] < self.temp_range[1]) {
            return Err(Error::invalid("synth.temp_range must be increasing"));
        }
        if !(self.noise_c >= 0.0) {
            return Err(Error::invalid("synth.noise_c must be >= 0"));
        }
        Ok(())
    }

    /// Train and test timestamps merged, ascending and deduplicated.
    pub fn all_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.train_times.iter().chain(&self.test_times).cloned().collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn material_at(&self, row: usize, col: usize) -> usize {
        (row / self.block + col / self.block) % self.materials.len()
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let r = &self.cameras;
        (0..r.count)
            .map(|i| {
                let a = 2.0 * core::f64::consts::PI * i as f64 / r.count as f64;
                let eye = [
                    r.look_at[0] + r.radius * math::cos(a),
                    r.look_at[1] + r.radius * math::sin(a),
                    r.look_at[2] + r.altitude,
                ];
                Camera::look_at(eye, r.look_at, [0.0, 0.0, 1.0], r.focal, r.width, r.height)
            })
            .collect()
    }
}

/// Per-gaussian thermal ground truth, kept apart from the trainable scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: Vec<ThermoParams>,
    /// Kelvin at the first timestamp.
    pub initial_k: Vec<f64>,
    pub material: Vec<usize>,
    pub material_names: Vec<String>,
}

/// Builds the ground-truth scene. Gaussians sit on a jittered grid centered
/// at the origin; features are one-hot material codes.
pub fn generate_scene(spec: &SynthSpec, seed: u64) -> Result<(Scene, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [rows, cols] = spec.grid;
    let s = spec.spacing;
    let x0 = -0.5 * (cols as f64 - 1.0) * s;
    let y0 = -0.5 * (rows as f64 - 1.0) * s;
    let mut gaussians = Vec::with_capacity(rows * cols);
    let mut gt = GroundTruth {
        params: Vec::new(),
        initial_k: Vec::new(),
        material: Vec::new(),
        material_names: spec.materials.iter().map(|m| m.name.clone()).collect(),
    };
    for r in 0..rows {
        for c in 0..cols {
            let jx: f64 = rng.random_range(-1.0..=1.0) * spec.jitter * s;
            let jy: f64 = rng.random_range(-1.0..=1.0) * spec.jitter * s;
            let jz: f64 = rng.random_range(-1.0..=1.0) * 0.01 * s;
            let yaw: f64 = rng.random_range(0.0..core::f64::consts::PI);
            let stretch: f64 = rng.random_range(0.9..1.1);
            let m = spec.material_at(r, c);
            let mut feature = vec![0.0; spec.feature_dim];
            feature[m] = 1.0;
            gaussians.push(GaussianPrimitive {
                mu: [x0 + c as f64 * s + jx, y0 + r as f64 * s + jy, jz],
                rot: [math::cos(0.5 * yaw), 0.0, 0.0, math::sin(0.5 * yaw)],
                scale: [
                    spec.scale_xy * s * stretch,
                    spec.scale_xy * s / stretch,
                    spec.scale_z * s,
                ],
                opacity: spec.opacity,
                feature,
                material_id: Some(m as u32),
            });
            let mat = &spec.materials[m];
            gt.params.push(mat.params());
            gt.initial_k.push(c_to_k(mat.initial_c));
            gt.material.push(m);
        }
    }
    let scene = Scene {
        gaussians,
        ambient: spec.ambient.clone(),
        temp_range: spec.temp_range,
        time_origin: spec.all_times()[0],
        background_c: None,
    };
    scene.validate()?;
    Ok((scene, gt))
}

/// RK4 cooling curves from `timestamps[0]` through every timestamp, with
/// [`GT_SUBSTEPS`] substeps per interval. Timestamp `j` sits at index
/// `j · GT_SUBSTEPS` of each curve.
pub fn simulate_ground_truth(scene: &Scene, gt: &GroundTruth, timestamps: &[f64]) -> Result<Vec<TempCurve>> {
    if timestamps.is_empty() {
        return Err(Error::invalid("simulate_ground_truth needs at least one timestamp"));
    }
    if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("timestamps must be strictly ascending"));
    }
    if gt.params.len() != scene.gaussians.len() || gt.initial_k.len() != scene.gaussians.len() {
        return Err(Error::DimMismatch {
            context: "ground-truth parameters",
            expected: scene.gaussians.len(),
            found: gt.params.len().min(gt.initial_k.len()),
        });
    }
    let ambient = &scene.ambient;
    let mut curves = Vec::with_capacity(gt.params.len());
    for (p, t0k) in gt.params.iter().zip(&gt.initial_k) {
        let mut curve = TempCurve::constant(timestamps[0], *t0k);
        for w in timestamps.windows(2) {
            let seg = rk4_integrate(curve.final_temp(), w[0], w[1], GT_SUBSTEPS, |t, temp| {
                temp_rate(p, temp, ambient.kelvin_at(t))
            })?;
            curve.times.extend_from_slice(&seg.times[1..]);
            curve.temps.extend_from_slice(&seg.temps[1..]);
            curve.deltas.extend_from_slice(&seg.deltas);
        }
        curves.push(curve);
    }
    Ok(curves)
}

/// Renders every camera at every timestamp from the simulated curves and
/// adds gaussian pixel noise of `noise_c` °C.
#[allow(clippy::too_many_arguments)]
pub fn render_ground_truth(
    scene: &Scene,
    curves: &[TempCurve],
    cameras: &[Camera],
    timestamps: &[f64],
    train_times: &[f64],
    noise_c: f64,
    render_cfg: &RenderConfig,
    seed: u64,
) -> Result<Dataset> {
    let noise = Normal::new(0.0, noise_c).map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut captures = Vec::with_capacity(cameras.len() * timestamps.len());
    for (j, &t) in timestamps.iter().enumerate() {
        let temps: Vec<f64> = curves
            .iter()
            .map(|c| {
                let k = j * GT_SUBSTEPS;
                c.temps.get(k).copied().ok_or_else(|| {
                    Error::invalid(format!("curve has no sample for timestamp index {j}"))
                })
            })
            .collect::<Result<_>>()?;
        let split = if train_times.contains(&t) { Split::Train } else { Split::Test };
        for (v, cam) in cameras.iter().enumerate() {
            let view = render(&scene.gaussians, &temps, cam, scene.background_k(), render_cfg)?;
            let mut image = view.output.image;
            image.timestamp = t;
            if noise_c > 0.0 {
                for px in image.data.iter_mut() {
                    *px += noise.sample(&mut rng);
                }
            }
            captures.push(TimedCapture {
                view_id: v,
                camera: *cam,
                image,
                split,
            });
        }
    }
    Ok(Dataset { captures })
}

/// Everything a synthetic run produces.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scene: Scene,
    pub gt: GroundTruth,
    pub curves: Vec<TempCurve>,
    pub timestamps: Vec<f64>,
    pub dataset: Dataset,
}

/// Scene, simulation and captures from one spec and seed.
pub fn synthesize(spec: &SynthSpec, render_cfg: &RenderConfig, seed: u64) -> Result<SynthOutput> {
    let (scene, gt) = generate_scene(spec, seed)?;
    let timestamps = spec.all_times();
    let curves = simulate_ground_truth(&scene, &gt, &timestamps)?;
    let cameras = spec.cameras()?;
    let dataset = render_ground_truth(
        &scene,
        &curves,
        &cameras,
        &timestamps,
        &spec.train_times,
        spec.noise_c,
        render_cfg,
        seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
    )?;
    Ok(SynthOutput {
        scene,
        gt,
        curves,
        timestamps,
        dataset,
    })
}
