//! Two-stage optimization, prediction and evaluation.
//!
//! Stage 1 fits the direct temperature network together with opacity,
//! rotation and scale at the supervised timestamps. Stage 2 freezes the
//! geometry and fits the thermal parameter heads through an explicit Euler
//! integral anchored at the earliest training time. Centers never move.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dataset::{Dataset, TimedCapture};
use crate::error::{check_len, Error, Result};
use crate::image::ThermalImage;
use crate::loss::{self, NormalizedImage};
use crate::math::{self, Vec3};
use crate::nn::{adam_step, AdamState, ParamGrad, TempNet, ThermalNet, ThermalTape};
use crate::render::{render, render_backward, View, ViewGrads};
use crate::scene::{c_to_k, AmbientProfile, Camera, Scene};
use crate::thermo::{grid_time, rate_with_partials, RatePartials, TempCurve, ThermoParams};

/// Trainable state: geometry (inside `scene`) plus both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub scene: Scene,
    pub temp_net: TempNet,
    pub thermal_net: ThermalNet,
    /// Integration anchor: earliest training time.
    pub t0: f64,
    /// Latest training time.
    pub t_end: f64,
}

impl Model {
    /// Fresh model over `scene`'s centers and features. Rotation, scale and
    /// opacity are reset to the configured initial values, so whatever the
    /// scene carried there is discarded.
    pub fn new(scene: &Scene, dataset: &Dataset, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        scene.validate()?;
        dataset.validate()?;
        let (t0, t_end) = dataset.train_span()?;
        let mut scene = scene.clone();
        for g in &mut scene.gaussians {
            g.rot = [1.0, 0.0, 0.0, 0.0];
            g.scale = [cfg.train.init_scale; 3];
            g.opacity = cfg.train.init_opacity;
        }
        let frame = crate::encoding::InputFrame::new(t0, t_end, scene.bounds());
        let range_k = (c_to_k(scene.temp_range[0]), c_to_k(scene.temp_range[1]));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let temp_net = TempNet::new(&cfg.net, frame, cfg.enc.time(), cfg.enc.position(), range_k, &mut rng)?;
        let thermal_net = ThermalNet::new(
            &cfg.net,
            frame,
            cfg.enc.time(),
            cfg.enc.position(),
            scene.feature_dim(),
            range_k,
            &mut rng,
        )?;
        let mut model = Model {
            scene,
            temp_net,
            thermal_net,
            t0,
            t_end,
        };
        if cfg.train.zero_features {
            model.zero_features();
        }
        Ok(model)
    }

    pub fn zero_features(&mut self) {
        for g in &mut self.scene.gaussians {
            g.feature.iter_mut().for_each(|f| *f = 0.0);
        }
    }

    pub fn span(&self) -> f64 {
        self.t_end - self.t0
    }

    pub fn features(&self) -> Vec<f64> {
        self.scene.gaussians.iter().flat_map(|g| g.feature.iter().copied()).collect()
    }

    /// `(name, shape, values)` for geometry and network weights.
    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let g = &self.scene.gaussians;
        let n = g.len();
        let mut out = vec![
            (
                "scene.rot".to_string(),
                vec![n, 4],
                g.iter().flat_map(|g| g.rot).collect(),
            ),
            (
                "scene.scale".to_string(),
                vec![n, 3],
                g.iter().flat_map(|g| g.scale).collect(),
            ),
            (
                "scene.opacity".to_string(),
                vec![n],
                g.iter().map(|g| g.opacity).collect(),
            ),
        ];
        out.extend(self.temp_net.named_arrays());
        out.extend(self.thermal_net.named_arrays());
        out
    }

    /// Overwrites every array listed by [`named_arrays`](Self::named_arrays).
    /// Names and shapes must match exactly.
    pub fn load_arrays(&mut self, arrays: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let expected = self.named_arrays();
        if arrays.len() != expected.len() {
            return Err(Error::invalid(format!(
                "checkpoint holds {} arrays, model expects {}",
                arrays.len(),
                expected.len()
            )));
        }
        for ((name, shape, values), (en, es, _)) in arrays.iter().zip(&expected) {
            if name != en || shape != es {
                return Err(Error::invalid(format!(
                    "checkpoint array {name} {shape:?} does not match expected {en} {es:?}"
                )));
            }
            if shape.iter().product::<usize>() != values.len() {
                return Err(Error::invalid(format!("checkpoint array {name} has wrong length")));
            }
        }
        let n = self.scene.gaussians.len();
        for (k, g) in self.scene.gaussians.iter_mut().enumerate() {
            g.rot.copy_from_slice(&arrays[0].2[4 * k..4 * k + 4]);
            g.scale.copy_from_slice(&arrays[1].2[3 * k..3 * k + 3]);
            g.opacity = arrays[2].2[k];
        }
        debug_assert_eq!(arrays[2].2.len(), n);
        let mut rest = arrays[3..].iter();
        for net in [
            &mut self.temp_net.mlp,
            &mut self.thermal_net.e_net,
            &mut self.thermal_net.c_net,
            &mut self.thermal_net.h_net,
        ] {
            let mut off = 0;
            let params = net.params_mut();
            while off < params.len() {
                let (_, _, v) = rest.next().ok_or_else(|| Error::invalid("checkpoint is truncated"))?;
                params[off..off + v.len()].copy_from_slice(v);
                off += v.len();
            }
        }
        self.scene.validate()
    }

    /// Bit patterns of every geometric attribute, for freeze checks.
    pub fn geometry_bits(&self) -> Vec<u64> {
        self.scene
            .gaussians
            .iter()
            .flat_map(|g| {
                g.mu.iter()
                    .chain(&g.rot)
                    .chain(&g.scale)
                    .chain(core::iter::once(&g.opacity))
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Per-iteration loss trace of one training stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageReport {
    pub losses: Vec<f64>,
}

/// Batched Euler trajectories for every gaussian, with the records needed
/// for the reverse pass.
#[derive(Debug, Clone)]
pub struct Integration {
    pub steps: usize,
    pub dt: f64,
    pub gaussians: usize,
    /// `(steps + 1) × gaussians` temperatures, step-major.
    pub temps: Vec<f64>,
    /// `steps × gaussians` parameters, step-major.
    pub params: Vec<ThermoParams>,
    partials: Vec<RatePartials>,
    tapes: Vec<ThermalTape>,
    times: Vec<f64>,
}

impl Integration {
    pub fn final_temps(&self) -> &[f64] {
        &self.temps[self.steps * self.gaussians..]
    }

    /// Per-step increments laid out curve after curve (`gaussians × steps`).
    pub fn deltas_by_curve(&self) -> Vec<f64> {
        let g = self.gaussians;
        let mut out = Vec::with_capacity(g * self.steps);
        for i in 0..g {
            for k in 0..self.steps {
                out.push(self.temps[(k + 1) * g + i] - self.temps[k * g + i]);
            }
        }
        out
    }

    pub fn curve(&self, i: usize) -> TempCurve {
        let g = self.gaussians;
        let temps: Vec<f64> = (0..=self.steps).map(|k| self.temps[k * g + i]).collect();
        let deltas = (0..self.steps)
            .map(|k| self.partials[k * g + i].rate * self.dt)
            .collect();
        TempCurve {
            times: self.times.clone(),
            temps,
            deltas,
        }
    }
}

/// Integrates every gaussian from `t0` to `t` in `n` Euler steps with rates
/// from the thermal network. Each step evaluates the network on the
/// current temperature, the step's start time, features and position.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    net: &ThermalNet,
    init: &[f64],
    features: &[f64],
    positions: &[Vec3],
    ambient: &AmbientProfile,
    t0: f64,
    t: f64,
    n: usize,
) -> Result<Integration> {
    let g = init.len();
    check_len("integration positions", g, positions.len())?;
    if n == 0 {
        return Err(Error::invalid("integration needs at least one substep"));
    }
    if !(t > t0) {
        return Err(Error::invalid(format!("integration end {t} must be after start {t0}")));
    }
    let dt = (t - t0) / n as f64;
    let mut temps = Vec::with_capacity((n + 1) * g);
    temps.extend_from_slice(init);
    let mut params = Vec::with_capacity(n * g);
    let mut partials = Vec::with_capacity(n * g);
    let mut tapes = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n + 1);
    times.push(t0);
    for k in 0..n {
        let tk = grid_time(t0, t, n, k);
        let cur = &temps[k * g..(k + 1) * g];
        if let Some(i) = cur.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::IntegralDiverged { gaussian: i, substep: k });
        }
        let tk_rows = vec![tk; g];
        let (p, tape) = net.forward(cur, &tk_rows, features, positions)?;
        let t_m = ambient.kelvin_at(tk);
        let mut next = Vec::with_capacity(g);
        for (i, (pi, temp)) in p.iter().zip(cur).enumerate() {
            let rp = rate_with_partials(pi, *temp, t_m);
            let v = temp + rp.rate * dt;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::IntegralDiverged {
                    gaussian: i,
                    substep: k + 1,
                });
            }
            next.push(v);
            partials.push(rp);
        }
        temps.extend_from_slice(&next);
        params.extend(p);
        tapes.push(tape);
        times.push(grid_time(t0, t, n, k + 1));
    }
    Ok(Integration {
        steps: n,
        dt,
        gaussians: g,
        temps,
        params,
        partials,
        tapes,
        times,
    })
}

/// Reverse pass of [`integrate`]. `d_final` is the cotangent of the end
/// temperatures and `d_deltas` (curve-major, or empty) that of the
/// per-step increments. Head gradients accumulate into `grads`; the return
/// value is the cotangent of the initial temperatures.
pub fn integrate_backward(
    net: &ThermalNet,
    integ: &Integration,
    d_final: &[f64],
    d_deltas: &[f64],
    grads: (&mut [f64], &mut [f64], &mut [f64]),
) -> Result<Vec<f64>> {
    let (g, n) = (integ.gaussians, integ.steps);
    check_len("integration cotangent", g, d_final.len())?;
    if !d_deltas.is_empty() {
        check_len("increment cotangent", g * n, d_deltas.len())?;
    }
    let (ge, gc, gh) = grads;
    let mut g_temp = d_final.to_vec();
    let mut d_params = vec![ParamGrad::default(); g];
    for k in (0..n).rev() {
        let parts = &integ.partials[k * g..(k + 1) * g];
        let mut g_delta = Vec::with_capacity(g);
        for i in 0..g {
            let gd = g_temp[i] + d_deltas.get(i * n + k).copied().unwrap_or(0.0);
            let s = gd * integ.dt;
            d_params[i] = ParamGrad {
                e: s * parts[i].d_e,
                c: s * parts[i].d_c,
                h: s * parts[i].d_h,
            };
            g_delta.push(s);
        }
        let through_net = net.backward_with_temp(&integ.tapes[k], &d_params, (&mut *ge, &mut *gc, &mut *gh))?;
        for i in 0..g {
            g_temp[i] += g_delta[i] * parts[i].d_t + through_net[i];
        }
    }
    Ok(g_temp)
}

/// Raw optimizer coordinates of the geometry.
#[derive(Debug, Clone)]
struct GeomParams {
    rot: Vec<f64>,
    log_scale: Vec<f64>,
    logit: Vec<f64>,
    adam_rot: AdamState,
    adam_scale: AdamState,
    adam_opacity: AdamState,
}

impl GeomParams {
    fn from_scene(scene: &Scene, cfg: &Config) -> Self {
        let gs = &scene.gaussians;
        let rot: Vec<f64> = gs.iter().flat_map(|g| g.rot).collect();
        let log_scale: Vec<f64> = gs.iter().flat_map(|g| g.scale.map(math::ln)).collect();
        let logit: Vec<f64> = gs
            .iter()
            .map(|g| {
                let o = g.opacity.clamp(1e-6, 1.0 - 1e-6);
                math::ln(o / (1.0 - o))
            })
            .collect();
        GeomParams {
            adam_rot: AdamState::new(rot.len(), cfg.train.lr_rotation),
            adam_scale: AdamState::new(log_scale.len(), cfg.train.lr_scale),
            adam_opacity: AdamState::new(logit.len(), cfg.train.lr_opacity),
            rot,
            log_scale,
            logit,
        }
    }

    fn step(&mut self, scene: &mut Scene, grads: &[&ViewGrads], cfg: &Config, iter: usize, total: usize) -> Result<()> {
        let n = scene.gaussians.len();
        let mut g_rot = vec![0.0; 4 * n];
        let mut g_scale = vec![0.0; 3 * n];
        let mut g_logit = vec![0.0; n];
        for vg in grads {
            for (k, g) in scene.gaussians.iter().enumerate() {
                for a in 0..4 {
                    g_rot[4 * k + a] += vg.rot[k][a];
                }
                for a in 0..3 {
                    g_scale[3 * k + a] += vg.scale[k][a] * g.scale[a];
                }
                g_logit[k] += vg.opacity[k] * g.opacity * (1.0 - g.opacity);
            }
        }
        let tc = &cfg.train;
        self.adam_rot.lr = tc.schedule(tc.lr_rotation, iter, total);
        self.adam_scale.lr = tc.schedule(tc.lr_scale, iter, total);
        self.adam_opacity.lr = tc.schedule(tc.lr_opacity, iter, total);
        adam_step(&mut self.rot, &g_rot, &mut self.adam_rot)?;
        adam_step(&mut self.log_scale, &g_scale, &mut self.adam_scale)?;
        adam_step(&mut self.logit, &g_logit, &mut self.adam_opacity)?;
        for (k, g) in scene.gaussians.iter_mut().enumerate() {
            let q = [self.rot[4 * k], self.rot[4 * k + 1], self.rot[4 * k + 2], self.rot[4 * k + 3]];
            let q = math::quat_normalize(&q);
            self.rot[4 * k..4 * k + 4].copy_from_slice(&q);
            g.rot = q;
            for a in 0..3 {
                g.scale[a] = math::exp(self.log_scale[3 * k + a]);
            }
            g.opacity = math::sigmoid(self.logit[k]);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct NetOpt {
    temp: AdamState,
    e: AdamState,
    c: AdamState,
    h: AdamState,
}

impl NetOpt {
    fn new(model: &Model, cfg: &Config) -> Self {
        let (lr, lt) = (cfg.train.lr_net, cfg.train.lr_thermal);
        NetOpt {
            temp: AdamState::new(model.temp_net.mlp.params().len(), lr),
            e: AdamState::new(model.thermal_net.e_net.params().len(), lt),
            c: AdamState::new(model.thermal_net.c_net.params().len(), lt),
            h: AdamState::new(model.thermal_net.h_net.params().len(), lt),
        }
    }

    fn set_lr(&mut self, cfg: &Config, net_lr: f64, iter: usize, total: usize) {
        let tc = &cfg.train;
        self.temp.lr = tc.schedule(net_lr, iter, total);
        let lr = tc.schedule(tc.lr_thermal, iter, total);
        for s in [&mut self.e, &mut self.c, &mut self.h] {
            s.lr = lr;
        }
    }
}

struct ThermalGrads {
    e: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

impl ThermalGrads {
    fn zeros(net: &ThermalNet) -> Self {
        ThermalGrads {
            e: vec![0.0; net.e_net.params().len()],
            c: vec![0.0; net.c_net.params().len()],
            h: vec![0.0; net.h_net.params().len()],
        }
    }

    fn as_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.e, &mut self.c, &mut self.h)
    }
}

fn train_captures(dataset: &Dataset) -> Result<Vec<(usize, &TimedCapture)>> {
    let caps: Vec<_> = dataset
        .captures
        .iter()
        .enumerate()
        .filter(|(_, c)| c.split == crate::dataset::Split::Train)
        .collect();
    if caps.is_empty() {
        return Err(Error::invalid("dataset has no training captures"));
    }
    Ok(caps)
}

fn normalized(kelvin: &[f64], scene: &Scene) -> (Vec<f64>, f64) {
    loss::normalize_affine(kelvin, scene.temp_range)
}

fn check_capture(model: &Model, cap: &TimedCapture) -> Result<()> {
    cap.camera.validate()?;
    check_len("capture pixels", cap.camera.width * cap.camera.height, cap.image.data.len())?;
    if model.scene.gaussians.is_empty() {
        return Err(Error::invalid("model has no gaussians"));
    }
    Ok(())
}

fn stage1_step(
    model: &mut Model,
    geom: &mut GeomParams,
    opt: &mut NetOpt,
    cap: &TimedCapture,
    cap_id: usize,
    iter: usize,
    total: usize,
    cfg: &Config,
) -> Result<f64> {
    check_capture(model, cap)?;
    let positions = model.scene.positions();
    let times = vec![cap.time(); positions.len()];
    let (temps, tape) = model.temp_net.forward(&times, &positions)?;
    let view = render(
        &model.scene.gaussians,
        &temps,
        &cap.camera,
        model.scene.background_k(),
        &cfg.render,
    )?;
    let (pred, slope) = normalized(&view.output.image.data, &model.scene);
    let (gt, _) = normalized(&cap.image.data, &model.scene);
    let (parts, grad) = loss::stage1_loss(&pred, &gt, cap.camera.width, cap.camera.height, &cfg.loss.weights())?;
    if !parts.total.is_finite() {
        return Err(Error::LossDiverged {
            iteration: iter,
            capture: cap_id,
        });
    }
    let d_image: Vec<f64> = grad.iter().map(|g| g * slope).collect();
    let vg = render_backward(&model.scene.gaussians, &view, &d_image)?;
    let mut g_net = vec![0.0; model.temp_net.mlp.params().len()];
    model.temp_net.backward_into(&tape, &vg.temp, &mut g_net)?;
    opt.set_lr(cfg, cfg.train.lr_net, iter, total);
    adam_step(model.temp_net.mlp.params_mut(), &g_net, &mut opt.temp)?;
    geom.step(&mut model.scene, &[&vg], cfg, iter, total)?;
    Ok(parts.total)
}

#[allow(clippy::too_many_arguments)]
fn stage2_step(
    model: &mut Model,
    geom: Option<&mut GeomParams>,
    opt: &mut NetOpt,
    cap: &TimedCapture,
    cap_id: usize,
    iter: usize,
    total: usize,
    cfg: &Config,
    train_temp_net: bool,
) -> Result<f64> {
    check_capture(model, cap)?;
    let positions = model.scene.positions();
    let g = positions.len();
    let t = cap.time();
    let n = cfg.thermo.steps_for(model.t0, t, model.span());

    let mut times = vec![model.t0; g];
    times.extend(core::iter::repeat_n(t, g));
    let mut pos2 = positions.clone();
    pos2.extend_from_slice(&positions);
    let (both, tape) = model.temp_net.forward(&times, &pos2)?;
    let (init, direct) = both.split_at(g);

    let integ = if n > 0 {
        Some(integrate(
            &model.thermal_net,
            init,
            &model.features(),
            &positions,
            &model.scene.ambient,
            model.t0,
            t,
            n,
        )?)
    } else {
        None
    };
    let integral: &[f64] = integ.as_ref().map_or(init, |i| i.final_temps());

    let bg = model.scene.background_k();
    let view_d = render(&model.scene.gaussians, direct, &cap.camera, bg, &cfg.render)?;
    let view_i = render(&model.scene.gaussians, integral, &cap.camera, bg, &cfg.render)?;
    let (pd, slope) = normalized(&view_d.output.image.data, &model.scene);
    let (pi, _) = normalized(&view_i.output.image.data, &model.scene);
    let (gt, _) = normalized(&cap.image.data, &model.scene);
    let weights = cfg.loss.weights();
    let deltas = match &integ {
        Some(i) if n >= 2 && weights.smooth > 0.0 => i.deltas_by_curve(),
        _ => Vec::new(),
    };
    let l = loss::stage2_loss(
        &pd,
        &pi,
        &gt,
        cap.camera.width,
        cap.camera.height,
        &deltas,
        n,
        &weights,
        cfg.loss.average_images,
    )?;
    let mut total_loss = l.total;
    let mut g_direct_extra = vec![0.0; g];
    let mut g_integral_extra = vec![0.0; g];
    if cfg.loss.explicit_consistency && cfg.loss.consistency_weight > 0.0 {
        let (c, ga, gb) = loss::consistency_loss(direct, integral)?;
        let w = cfg.loss.consistency_weight;
        total_loss += w * c;
        g_direct_extra.iter_mut().zip(&ga).for_each(|(x, v)| *x = w * v);
        g_integral_extra.iter_mut().zip(&gb).for_each(|(x, v)| *x = w * v);
    }
    if !total_loss.is_finite() {
        return Err(Error::LossDiverged {
            iteration: iter,
            capture: cap_id,
        });
    }

    let scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * slope).collect() };
    let vd = render_backward(&model.scene.gaussians, &view_d, &scale(&l.grad_direct))?;
    let vi = render_backward(&model.scene.gaussians, &view_i, &scale(&l.grad_integral))?;
    let d_direct: Vec<f64> = vd.temp.iter().zip(&g_direct_extra).map(|(a, b)| a + b).collect();
    let d_final: Vec<f64> = vi.temp.iter().zip(&g_integral_extra).map(|(a, b)| a + b).collect();

    let mut tg = ThermalGrads::zeros(&model.thermal_net);
    let d_init = match &integ {
        Some(i) => integrate_backward(&model.thermal_net, i, &d_final, &l.grad_deltas, tg.as_mut())?,
        None => d_final,
    };
    let net_lr = if geom.is_some() { cfg.train.lr_net } else { cfg.train.lr_net_stage2 };
    opt.set_lr(cfg, net_lr, iter, total);
    if train_temp_net {
        let mut cot = if cfg.train.anchor_grad { d_init } else { vec![0.0; g] };
        cot.extend_from_slice(&d_direct);
        let mut g_net = vec![0.0; model.temp_net.mlp.params().len()];
        model.temp_net.backward_into(&tape, &cot, &mut g_net)?;
        adam_step(model.temp_net.mlp.params_mut(), &g_net, &mut opt.temp)?;
    }
    if n > 0 {
        adam_step(model.thermal_net.e_net.params_mut(), &tg.e, &mut opt.e)?;
        adam_step(model.thermal_net.c_net.params_mut(), &tg.c, &mut opt.c)?;
        adam_step(model.thermal_net.h_net.params_mut(), &tg.h, &mut opt.h)?;
    }
    if let Some(geom) = geom {
        geom.step(&mut model.scene, &[&vd, &vi], cfg, iter, total)?;
    }
    Ok(total_loss)
}

/// Fits the direct temperature network and the geometry for
/// `cfg.train.stage1_iters` iterations, one training capture per iteration
/// in round-robin order.
pub fn train_stage1(model: &mut Model, dataset: &Dataset, cfg: &Config) -> Result<StageReport> {
    let caps = train_captures(dataset)?;
    let total = cfg.train.stage1_iters;
    let mut geom = GeomParams::from_scene(&model.scene, cfg);
    let mut opt = NetOpt::new(model, cfg);
    let mut report = StageReport::default();
    for iter in 0..total {
        let (id, cap) = caps[iter % caps.len()];
        let l = stage1_step(model, &mut geom, &mut opt, cap, id, iter, total, cfg)?;
        report.losses.push(l);
        if iter % 500 == 0 {
            log::info!("stage 1 iteration {iter}: loss {l:.6}");
        }
    }
    Ok(report)
}

/// Fits the thermal heads (and, when enabled, the direct network) through
/// the integrated cooling law. Geometry is frozen; a bit-level check
/// enforces it.
pub fn train_stage2(model: &mut Model, dataset: &Dataset, cfg: &Config) -> Result<StageReport> {
    let caps = train_captures(dataset)?;
    let before = model.geometry_bits();
    let total = cfg.train.stage2_iters;
    let mut opt = NetOpt::new(model, cfg);
    let mut report = StageReport::default();
    for iter in 0..total {
        let (id, cap) = caps[iter % caps.len()];
        let l = stage2_step(
            model,
            None,
            &mut opt,
            cap,
            id,
            iter,
            total,
            cfg,
            cfg.train.temp_net_in_stage2,
        )?;
        report.losses.push(l);
        if iter % 500 == 0 {
            log::info!("stage 2 iteration {iter}: loss {l:.6}");
        }
    }
    assert!(model.geometry_bits() == before, "stage 2 modified frozen geometry");
    Ok(report)
}

/// Single-stage alternative: geometry and all networks optimized together
/// under the stage-2 objective for `iterations` steps.
pub fn train_joint(model: &mut Model, dataset: &Dataset, cfg: &Config, iterations: usize) -> Result<StageReport> {
    let caps = train_captures(dataset)?;
    let mut geom = GeomParams::from_scene(&model.scene, cfg);
    let mut opt = NetOpt::new(model, cfg);
    let mut report = StageReport::default();
    for iter in 0..iterations {
        let (id, cap) = caps[iter % caps.len()];
        let l = stage2_step(model, Some(&mut geom), &mut opt, cap, id, iter, iterations, cfg, true)?;
        report.losses.push(l);
    }
    Ok(report)
}

/// Which temperature source a prediction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    /// The direct network evaluated at the query time.
    Direct,
    /// The direct network at `t0`, integrated forward to the query time.
    Integral,
}

/// Per-gaussian kelvin at `t_query` by integrating `n` Euler steps from
/// `t0`. At `t_query == t0` this is the direct network's value at `t0`.
pub fn predict_temperature(model: &Model, t_query: f64, n: usize) -> Result<Vec<f64>> {
    Ok(predict_curves(model, t_query, n)?.into_iter().map(|c| c.final_temp()).collect())
}

/// Full per-gaussian trajectories from `t0` to `t_query`.
pub fn predict_curves(model: &Model, t_query: f64, n: usize) -> Result<Vec<TempCurve>> {
    if !(t_query >= model.t0) {
        return Err(Error::invalid(format!(
            "query time {t_query} precedes the integration anchor {}",
            model.t0
        )));
    }
    let positions = model.scene.positions();
    let init = model.temp_net.eval(model.t0, &positions)?;
    if t_query == model.t0 {
        return Ok(init.iter().map(|v| TempCurve::constant(model.t0, *v)).collect());
    }
    let integ = integrate(
        &model.thermal_net,
        &init,
        &model.features(),
        &positions,
        &model.scene.ambient,
        model.t0,
        t_query,
        n,
    )?;
    Ok((0..positions.len()).map(|i| integ.curve(i)).collect())
}

/// Per-gaussian kelvin at `t` from the chosen source; the integral uses
/// the configured substep density.
pub fn predict(model: &Model, predictor: Predictor, t: f64, cfg: &Config) -> Result<Vec<f64>> {
    match predictor {
        Predictor::Direct => model.temp_net.eval(t, &model.scene.positions()),
        Predictor::Integral => {
            let n = cfg.thermo.steps_for(model.t0, t, model.span());
            predict_temperature(model, t, n)
        }
    }
}

/// Renders per-gaussian temperatures from one camera.
pub fn render_temps(model: &Model, temps: &[f64], camera: &Camera, t: f64, cfg: &Config) -> Result<ThermalImage> {
    let view: View = render(&model.scene.gaussians, temps, camera, model.scene.background_k(), &cfg.render)?;
    let mut img = view.output.image;
    img.timestamp = t;
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub view_id: usize,
    pub time_s: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae_c: f64,
}

/// Means over rows; `None` for an empty table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsMean {
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae_c: f64,
}

pub fn mean_metrics(rows: &[MetricsRow]) -> Option<MetricsMean> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let sum = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Some(MetricsMean {
        psnr_db: sum(|r| r.psnr_db),
        ssim: sum(|r| r.ssim),
        mae_c: sum(|r| r.mae_c),
    })
}

/// PSNR and SSIM on range-clamped normalized images, MAE on raw kelvin,
/// one row per capture in input order.
pub fn evaluate<'a, I>(model: &Model, captures: I, predictor: Predictor, cfg: &Config) -> Result<Vec<MetricsRow>>
where
    I: IntoIterator<Item = &'a TimedCapture>,
{
    let mut cache: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut rows = Vec::new();
    for cap in captures {
        let t = cap.time();
        let temps = match cache.iter().find(|(ct, _)| *ct == t) {
            Some((_, v)) => v.clone(),
            None => {
                let v = predict(model, predictor, t, cfg)?;
                cache.push((t, v.clone()));
                v
            }
        };
        let pred = render_temps(model, &temps, &cap.camera, t, cfg)?;
        let range = model.scene.temp_range;
        let pn = NormalizedImage::from_kelvin(&pred, range)?;
        let gn = NormalizedImage::from_kelvin(&cap.image, range)?;
        rows.push(MetricsRow {
            view_id: cap.view_id,
            time_s: t,
            psnr_db: loss::psnr(&pn, &gn)?,
            ssim: loss::ssim(&pn, &gn)?,
            mae_c: loss::mae_celsius(&pred, &cap.image)?,
        });
    }
    Ok(rows)
}

/// Mean learned emissivity per material id along trajectories spanning the
/// whole training interval. Gaussians without a material id are skipped.
pub fn material_emissivity(model: &Model, cfg: &Config) -> Result<Vec<(u32, f64)>> {
    let positions = model.scene.positions();
    let init = model.temp_net.eval(model.t0, &positions)?;
    let n = cfg.thermo.substeps;
    let t_end = if model.span() > 0.0 { model.t_end } else { model.t0 + 1.0 };
    let integ = integrate(
        &model.thermal_net,
        &init,
        &model.features(),
        &positions,
        &model.scene.ambient,
        model.t0,
        t_end,
        n,
    )?;
    let g = positions.len();
    let mut acc: Vec<(u32, f64, usize)> = Vec::new();
    for (i, gauss) in model.scene.gaussians.iter().enumerate() {
        let Some(m) = gauss.material_id else { continue };
        let mean_e = (0..n).map(|k| integ.params[k * g + i].e).sum::<f64>() / n as f64;
        match acc.iter_mut().find(|(id, _, _)| *id == m) {
            Some(slot) => {
                slot.1 += mean_e;
                slot.2 += 1;
            }
            None => acc.push((m, mean_e, 1)),
        }
    }
    acc.sort_by_key(|(id, _, _)| *id);
    Ok(acc.into_iter().map(|(id, s, c)| (id, s / c as f64)).collect())
}

/// Stage 1 then stage 2 from a fresh model.
pub fn train_all(scene: &Scene, dataset: &Dataset, cfg: &Config) -> Result<(Model, StageReport, StageReport)> {
    let mut model = Model::new(scene, dataset, cfg)?;
    let r1 = train_stage1(&mut model, dataset, cfg)?;
    let r2 = train_stage2(&mut model, dataset, cfg)?;
    Ok((model, r1, r2))
}

/// Variant names of the ablation harness, in run order.
pub const ABLATIONS: [&str; 5] = ["full", "stage1_only", "joint", "no_smooth", "no_features"];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub name: String,
    pub predictor: Predictor,
    pub rows: Vec<MetricsRow>,
    pub emissivity: Vec<(u32, f64)>,
}

impl AblationRun {
    pub fn mean(&self) -> Option<MetricsMean> {
        mean_metrics(&self.rows)
    }
}

/// Trains every ablation variant and evaluates each on the test captures.
///
/// `full`, `no_smooth` and `no_features` share one stage-1 result;
/// `stage1_only` evaluates that result directly; `joint` trains from
/// scratch for the combined iteration budget.
pub fn run_ablation(scene: &Scene, dataset: &Dataset, cfg: &Config) -> Result<Vec<AblationRun>> {
    let mut base = Model::new(scene, dataset, cfg)?;
    train_stage1(&mut base, dataset, cfg)?;
    let mut runs = Vec::new();
    let mut record = |name: &str, model: &Model, predictor: Predictor| -> Result<()> {
        runs.push(AblationRun {
            name: name.to_string(),
            predictor,
            rows: evaluate(model, dataset.test(), predictor, cfg)?,
            emissivity: material_emissivity(model, cfg)?,
        });
        Ok(())
    };

    let mut full = base.clone();
    train_stage2(&mut full, dataset, cfg)?;
    record("full", &full, Predictor::Integral)?;
    record("stage1_only", &base, Predictor::Direct)?;

    let mut joint = Model::new(scene, dataset, cfg)?;
    train_joint(
        &mut joint,
        dataset,
        cfg,
        cfg.train.stage1_iters + cfg.train.stage2_iters,
    )?;
    record("joint", &joint, Predictor::Integral)?;

    let mut no_smooth_cfg = cfg.clone();
    no_smooth_cfg.loss.smooth = 0.0;
    let mut no_smooth = base.clone();
    train_stage2(&mut no_smooth, dataset, &no_smooth_cfg)?;
    record("no_smooth", &no_smooth, Predictor::Integral)?;

    let mut no_features = base;
    no_features.zero_features();
    train_stage2(&mut no_features, dataset, cfg)?;
    record("no_features", &no_features, Predictor::Integral)?;
    Ok(runs)
}
