//! The two task networks: a direct time→temperature field and the three
//! thermophysical-parameter heads.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Tape};
use crate::encoding::{encode_into, EncodingConfig, InputFrame};
use crate::error::{check_len, Error, Result};
use crate::math::{self, Vec3};
use crate::thermo::ThermoParams;

/// Lower clamp used to keep squashed outputs inside open intervals.
const OPEN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub temp_hidden: Vec<usize>,
    pub thermal_hidden: Vec<usize>,
    /// Margin in kelvin added on both sides of the scene range for the
    /// temperature network's output interval.
    pub temp_margin_k: f64,
    /// Ceiling of the convective coefficient, W·m⁻²·K⁻¹.
    pub c_max: f64,
    /// Floor of the areal heat capacity, J·m⁻²·K⁻¹.
    pub h_min: f64,
    /// Scale multiplying the softplus in the heat-capacity head.
    pub h_scale: f64,
    /// Initial head outputs (set through the output biases).
    pub init_e: f64,
    pub init_c: f64,
    pub init_h: f64,
    /// Gain on the last layer's initial weights.
    pub output_gain: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            temp_hidden: alloc::vec![64, 64, 64],
            thermal_hidden: alloc::vec![32, 32],
            temp_margin_k: 20.0,
            c_max: 50.0,
            h_min: 1e3,
            h_scale: 1e5,
            init_e: 0.5,
            init_c: 5.0,
            init_h: 3e5,
            output_gain: 0.1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temp_hidden.contains(&0) || self.thermal_hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(self.c_max > 0.0 && self.h_min > 0.0 && self.h_scale > 0.0) {
            return Err(Error::invalid("c_max, h_min and h_scale must be positive"));
        }
        if !(self.init_e > 0.0 && self.init_e < 1.0) {
            return Err(Error::invalid("init_e must lie in (0, 1)"));
        }
        if !(self.init_c > 0.0 && self.init_c < self.c_max) {
            return Err(Error::invalid("init_c must lie in (0, c_max)"));
        }
        if !(self.init_h > self.h_min) {
            return Err(Error::invalid("init_h must exceed h_min"));
        }
        if !(self.temp_margin_k >= 0.0) {
            return Err(Error::invalid("temp_margin_k must be non-negative"));
        }
        Ok(())
    }
}

fn dims(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(1);
    d
}

fn logit(p: f64) -> f64 {
    math::ln(p / (1.0 - p))
}

fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        math::ln(math::exp(y) - 1.0)
    }
}

fn set_output_bias(mlp: &mut Mlp, value: f64) {
    let n = mlp.params().len();
    mlp.params_mut()[n - 1] = value;
}

/// Maps time and position encodings to a bounded temperature in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct TempNet {
    pub mlp: Mlp,
    pub frame: InputFrame,
    pub time_enc: EncodingConfig,
    pub pos_enc: EncodingConfig,
    pub t_lo: f64,
    pub t_hi: f64,
}

#[derive(Debug, Clone)]
pub struct TempTape {
    mlp: Tape,
    sig: Vec<f64>,
}

impl TempNet {
    /// `range_k` is the scene normalization range in kelvin; the output
    /// interval widens it by `cfg.temp_margin_k` on each side.
    pub fn new<R: Rng + ?Sized>(
        cfg: &NetConfig,
        frame: InputFrame,
        time_enc: EncodingConfig,
        pos_enc: EncodingConfig,
        range_k: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        time_enc.validate()?;
        pos_enc.validate()?;
        let input = time_enc.output_len(1) + pos_enc.output_len(3);
        let mlp = Mlp::new(&dims(input, &cfg.temp_hidden), cfg.output_gain, rng)?;
        Ok(TempNet {
            mlp,
            frame,
            time_enc,
            pos_enc,
            t_lo: range_k.0 - cfg.temp_margin_k,
            t_hi: range_k.1 + cfg.temp_margin_k,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn inputs(&self, times: &[f64], positions: &[Vec3]) -> Result<Vec<f64>> {
        check_len("temperature network batch", times.len(), positions.len())?;
        let mut x = Vec::with_capacity(times.len() * self.input_dim());
        for (t, p) in times.iter().zip(positions) {
            encode_into(&[self.frame.time_hat(*t)], &self.time_enc, &mut x)?;
            encode_into(&self.frame.position_hat(p), &self.pos_enc, &mut x)?;
        }
        Ok(x)
    }

    /// Temperatures (kelvin) for row-wise `(time, position)` queries.
    pub fn forward(&self, times: &[f64], positions: &[Vec3]) -> Result<(Vec<f64>, TempTape)> {
        let x = self.inputs(times, positions)?;
        let (z, tape) = self.mlp.forward_batch(&x, times.len())?;
        let span = self.t_hi - self.t_lo;
        let sig: Vec<f64> = z.iter().map(|z| math::sigmoid(*z)).collect();
        let temps = sig.iter().map(|s| self.t_lo + span * s).collect();
        Ok((temps, TempTape { mlp: tape, sig }))
    }

    /// Per-gaussian temperature at a single time.
    pub fn eval(&self, t: f64, positions: &[Vec3]) -> Result<Vec<f64>> {
        let times = alloc::vec![t; positions.len()];
        Ok(self.forward(&times, positions)?.0)
    }

    pub fn backward_into(&self, tape: &TempTape, d_temp: &[f64], grads: &mut [f64]) -> Result<()> {
        check_len("temperature cotangent", tape.sig.len(), d_temp.len())?;
        let span = self.t_hi - self.t_lo;
        let dz: Vec<f64> = d_temp
            .iter()
            .zip(&tape.sig)
            .map(|(g, s)| g * span * s * (1.0 - s))
            .collect();
        self.mlp.backward_into(&tape.mlp, &dz, grads, false)?;
        Ok(())
    }

    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.mlp.named_arrays("temp_net")
    }
}

/// Emissivity, convective-coefficient and heat-capacity heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNet {
    pub e_net: Mlp,
    pub c_net: Mlp,
    pub h_net: Mlp,
    pub frame: InputFrame,
    pub time_enc: EncodingConfig,
    pub pos_enc: EncodingConfig,
    pub feature_dim: usize,
    /// Range used to normalize the temperature input.
    pub t_lo: f64,
    pub t_hi: f64,
    pub c_max: f64,
    pub h_min: f64,
    pub h_scale: f64,
}

/// Cotangents with respect to one row of `ThermoParams`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamGrad {
    pub e: f64,
    pub c: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct ThermalTape {
    e: Tape,
    c: Tape,
    h: Tape,
    /// Head-output derivatives `dE/dz`, `dC/dz`, `dH/dz` per row.
    de_dz: Vec<f64>,
    dc_dz: Vec<f64>,
    dh_dz: Vec<f64>,
}

impl ThermalTape {
    pub fn rows(&self) -> usize {
        self.de_dz.len()
    }
}

impl ThermalNet {
    pub fn new<R: Rng + ?Sized>(
        cfg: &NetConfig,
        frame: InputFrame,
        time_enc: EncodingConfig,
        pos_enc: EncodingConfig,
        feature_dim: usize,
        range_k: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        time_enc.validate()?;
        pos_enc.validate()?;
        let base = 1 + time_enc.output_len(1) + feature_dim;
        let with_pos = base + pos_enc.output_len(3);
        let mut e_net = Mlp::new(&dims(base, &cfg.thermal_hidden), cfg.output_gain, rng)?;
        let mut c_net = Mlp::new(&dims(base, &cfg.thermal_hidden), cfg.output_gain, rng)?;
        let mut h_net = Mlp::new(&dims(with_pos, &cfg.thermal_hidden), cfg.output_gain, rng)?;
        set_output_bias(&mut e_net, logit(cfg.init_e));
        set_output_bias(&mut c_net, logit(cfg.init_c / cfg.c_max));
        set_output_bias(&mut h_net, inv_softplus((cfg.init_h - cfg.h_min) / cfg.h_scale));
        Ok(ThermalNet {
            e_net,
            c_net,
            h_net,
            frame,
            time_enc,
            pos_enc,
            feature_dim,
            t_lo: range_k.0 - cfg.temp_margin_k,
            t_hi: range_k.1 + cfg.temp_margin_k,
            c_max: cfg.c_max,
            h_min: cfg.h_min,
            h_scale: cfg.h_scale,
        })
    }

    /// Emissivity from a pre-activation, with `dE/dz`.
    pub fn e_head(&self, z: f64) -> (f64, f64) {
        let s = math::sigmoid(z);
        if s < OPEN_EPS {
            (OPEN_EPS, 0.0)
        } else if s > 1.0 - OPEN_EPS {
            (1.0 - OPEN_EPS, 0.0)
        } else {
            (s, s * (1.0 - s))
        }
    }

    /// Convective coefficient from a pre-activation, with `dC/dz`.
    pub fn c_head(&self, z: f64) -> (f64, f64) {
        let s = math::sigmoid(z);
        if s < OPEN_EPS {
            (self.c_max * OPEN_EPS, 0.0)
        } else {
            (self.c_max * s, self.c_max * s * (1.0 - s))
        }
    }

    /// Heat capacity from a pre-activation, with `dH/dz`.
    pub fn h_head(&self, z: f64) -> (f64, f64) {
        (
            self.h_min + self.h_scale * math::softplus(z),
            self.h_scale * math::sigmoid(z),
        )
    }

    fn inputs(
        &self,
        temps: &[f64],
        times: &[f64],
        features: &[f64],
        positions: &[Vec3],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let rows = temps.len();
        check_len("thermal network times", rows, times.len())?;
        check_len("thermal network positions", rows, positions.len())?;
        check_len("thermal network features", rows * self.feature_dim, features.len())?;
        let base = self.e_net.input_dim();
        let with_pos = self.h_net.input_dim();
        let mut xb = Vec::with_capacity(rows * base);
        let mut xh = Vec::with_capacity(rows * with_pos);
        let span = self.t_hi - self.t_lo;
        let mut scratch = Vec::with_capacity(base);
        for r in 0..rows {
            if !temps[r].is_finite() {
                return Err(Error::NonFinite(format!("temperature input row {r}")));
            }
            scratch.clear();
            scratch.push((temps[r] - self.t_lo) / span - 0.5);
            encode_into(&[self.frame.time_hat(times[r])], &self.time_enc, &mut scratch)?;
            scratch.extend_from_slice(&features[r * self.feature_dim..(r + 1) * self.feature_dim]);
            xb.extend_from_slice(&scratch);
            xh.extend_from_slice(&scratch);
            encode_into(&self.frame.position_hat(&positions[r]), &self.pos_enc, &mut xh)?;
        }
        Ok((xb, xh))
    }

    /// Row-wise parameters. `features` is row-major `rows × feature_dim`.
    pub fn forward(
        &self,
        temps: &[f64],
        times: &[f64],
        features: &[f64],
        positions: &[Vec3],
    ) -> Result<(Vec<ThermoParams>, ThermalTape)> {
        let rows = temps.len();
        let (xb, xh) = self.inputs(temps, times, features, positions)?;
        let (ze, te) = self.e_net.forward_batch(&xb, rows)?;
        let (zc, tc) = self.c_net.forward_batch(&xb, rows)?;
        let (zh, th) = self.h_net.forward_batch(&xh, rows)?;
        let mut params = Vec::with_capacity(rows);
        let mut de_dz = Vec::with_capacity(rows);
        let mut dc_dz = Vec::with_capacity(rows);
        let mut dh_dz = Vec::with_capacity(rows);
        for r in 0..rows {
            let (e, de) = self.e_head(ze[r]);
            let (c, dc) = self.c_head(zc[r]);
            let (h, dh) = self.h_head(zh[r]);
            params.push(ThermoParams { e, c, h });
            de_dz.push(de);
            dc_dz.push(dc);
            dh_dz.push(dh);
        }
        Ok((
            params,
            ThermalTape {
                e: te,
                c: tc,
                h: th,
                de_dz,
                dc_dz,
                dh_dz,
            },
        ))
    }

    /// Accumulates head gradients into the three buffers `(e, c, h)`.
    pub fn backward_into(
        &self,
        tape: &ThermalTape,
        d_params: &[ParamGrad],
        grads: (&mut [f64], &mut [f64], &mut [f64]),
    ) -> Result<()> {
        self.backward_impl(tape, d_params, grads, false).map(|_| ())
    }

    /// Like [`backward_into`](Self::backward_into), also returning the
    /// gradient with respect to each row's temperature input (kelvin).
    pub fn backward_with_temp(
        &self,
        tape: &ThermalTape,
        d_params: &[ParamGrad],
        grads: (&mut [f64], &mut [f64], &mut [f64]),
    ) -> Result<Vec<f64>> {
        Ok(self.backward_impl(tape, d_params, grads, true)?.unwrap_or_default())
    }

    fn backward_impl(
        &self,
        tape: &ThermalTape,
        d_params: &[ParamGrad],
        grads: (&mut [f64], &mut [f64], &mut [f64]),
        need_temp: bool,
    ) -> Result<Option<Vec<f64>>> {
        let rows = tape.rows();
        check_len("thermal cotangent", rows, d_params.len())?;
        let dze: Vec<f64> = d_params.iter().zip(&tape.de_dz).map(|(g, d)| g.e * d).collect();
        let dzc: Vec<f64> = d_params.iter().zip(&tape.dc_dz).map(|(g, d)| g.c * d).collect();
        let dzh: Vec<f64> = d_params.iter().zip(&tape.dh_dz).map(|(g, d)| g.h * d).collect();
        let xe = self.e_net.backward_into(&tape.e, &dze, grads.0, need_temp)?;
        let xc = self.c_net.backward_into(&tape.c, &dzc, grads.1, need_temp)?;
        let xh = self.h_net.backward_into(&tape.h, &dzh, grads.2, need_temp)?;
        let (Some(xe), Some(xc), Some(xh)) = (xe, xc, xh) else {
            return Ok(None);
        };
        // Column 0 of every head's input is the normalized temperature.
        let inv_span = 1.0 / (self.t_hi - self.t_lo);
        let (nb, nh) = (self.e_net.input_dim(), self.h_net.input_dim());
        Ok(Some(
            (0..rows)
                .map(|r| (xe[r * nb] + xc[r * nb] + xh[r * nh]) * inv_span)
                .collect(),
        ))
    }

    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut v = self.e_net.named_arrays("thermal_net.e");
        v.extend(self.c_net.named_arrays("thermal_net.c"));
        v.extend(self.h_net.named_arrays("thermal_net.h"));
        v
    }
}
