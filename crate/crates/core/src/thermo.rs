//! Nighttime surface cooling: convective and radiative heat loss, the
//! resulting temperature rate, and fixed-step integrators.
//!
//! The rate is `dT/dt = −(Q_rad + Q_con) / H` with `Q_rad = E·σ·T⁴` and
//! `Q_con = C·(T − T_m)`; both fluxes are per unit area and positive when
//! heat leaves the surface.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Stefan-Boltzmann constant (CODATA 2018), W·m⁻²·K⁻⁴.
pub const STEFAN_BOLTZMANN: f64 = 5.670374419e-8;

/// Emissivity, convective coefficient (W·m⁻²·K⁻¹) and areal heat capacity
/// (J·m⁻²·K⁻¹) of one surface element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoParams {
    pub e: f64,
    pub c: f64,
    pub h: f64,
}

impl ThermoParams {
    pub fn new(e: f64, c: f64, h: f64) -> Result<Self> {
        let p = ThermoParams { e, c, h };
        p.validate()?;
        Ok(p)
    }

    /// Physical ranges: `E ∈ [0, 1]`, `C ≥ 0`, `H > 0`, all finite.
    pub fn validate(&self) -> Result<()> {
        if !(self.e.is_finite() && self.c.is_finite() && self.h.is_finite()) {
            return Err(Error::NonFinite(format!("thermo params {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.e) {
            return Err(Error::Domain(format!("emissivity {} outside [0, 1]", self.e)));
        }
        if self.c < 0.0 {
            return Err(Error::Domain(format!("convective coefficient {} < 0", self.c)));
        }
        if !(self.h > 0.0) {
            return Err(Error::Domain(format!("heat capacity {} must be positive", self.h)));
        }
        Ok(())
    }
}

/// Convective flux `C·(T − T_m)`, W·m⁻².
#[inline]
pub fn q_con(c: f64, t: f64, t_m: f64) -> f64 {
    c * (t - t_m)
}

/// Radiative flux `E·σ·T⁴`, W·m⁻².
pub fn q_rad(e: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!(
            "radiative flux needs a positive absolute temperature, got {t} K"
        )));
    }
    Ok(q_rad_unchecked(e, t))
}

#[inline]
pub(crate) fn q_rad_unchecked(e: f64, t: f64) -> f64 {
    let t2 = t * t;
    e * STEFAN_BOLTZMANN * t2 * t2
}

/// Cooling rate `−(Q_rad + Q_con)/H` in K/s.
pub fn temp_rate(p: &ThermoParams, t: f64, t_m: f64) -> Result<f64> {
    Ok(-(q_rad(p.e, t)? + q_con(p.c, t, t_m)) / p.h)
}

/// Partial derivatives of the rate with respect to `(T, E, C, H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePartials {
    pub rate: f64,
    pub d_t: f64,
    pub d_e: f64,
    pub d_c: f64,
    pub d_h: f64,
}

#[inline]
pub fn rate_with_partials(p: &ThermoParams, t: f64, t_m: f64) -> RatePartials {
    let t3 = t * t * t;
    let rad = p.e * STEFAN_BOLTZMANN * t3 * t;
    let con = p.c * (t - t_m);
    let inv_h = 1.0 / p.h;
    let rate = -(rad + con) * inv_h;
    RatePartials {
        rate,
        d_t: -(4.0 * p.e * STEFAN_BOLTZMANN * t3 + p.c) * inv_h,
        d_e: -STEFAN_BOLTZMANN * t3 * t * inv_h,
        d_c: -(t - t_m) * inv_h,
        d_h: -rate * inv_h,
    }
}

/// Temperature trajectory on a uniform grid from `t0` to `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempCurve {
    /// `N + 1` ascending times in seconds.
    pub times: Vec<f64>,
    /// `N + 1` temperatures in kelvin; `temps[0]` is the initial value.
    pub temps: Vec<f64>,
    /// `N` per-step increments in kelvin.
    pub deltas: Vec<f64>,
}

impl TempCurve {
    pub fn substeps(&self) -> usize {
        self.deltas.len()
    }

    pub fn final_temp(&self) -> f64 {
        self.temps[self.temps.len() - 1]
    }

    /// A single-point curve, for `t == t0`.
    pub fn constant(t0: f64, temp: f64) -> Self {
        TempCurve {
            times: alloc::vec![t0],
            temps: alloc::vec![temp],
            deltas: Vec::new(),
        }
    }
}

fn check_interval(t0: f64, t: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("integration needs at least one substep"));
    }
    if !(t > t0) {
        return Err(Error::invalid(format!(
            "integration end {t} must be after start {t0}"
        )));
    }
    Ok((t - t0) / n as f64)
}

/// Time of grid point `k` when `[t0, t]` is split into `n` uniform steps.
/// The last point is exactly `t`.
#[inline]
pub fn grid_time(t0: f64, t: f64, n: usize, k: usize) -> f64 {
    if k == n {
        t
    } else {
        t0 + (t - t0) * (k as f64 / n as f64)
    }
}

/// Explicit Euler with `n` uniform steps:
/// `deltas[k] = rate(t_k, T_k)·Δt`, `T_{k+1} = T_k + deltas[k]`.
pub fn euler_integrate<F>(temp0: f64, t0: f64, t: f64, n: usize, mut rate_fn: F) -> Result<TempCurve>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let dt = check_interval(t0, t, n)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut temps = Vec::with_capacity(n + 1);
    let mut deltas = Vec::with_capacity(n);
    times.push(t0);
    temps.push(temp0);
    let mut cur = temp0;
    for k in 0..n {
        let tk = grid_time(t0, t, n, k);
        let r = rate_fn(tk, cur)?;
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("rate at substep {} is {r}", k + 1)));
        }
        let d = r * dt;
        cur += d;
        deltas.push(d);
        temps.push(cur);
        times.push(grid_time(t0, t, n, k + 1));
    }
    Ok(TempCurve {
        times,
        temps,
        deltas,
    })
}

/// Classical fourth-order Runge-Kutta with `n` uniform steps.
pub fn rk4_integrate<F>(temp0: f64, t0: f64, t: f64, n: usize, mut rate_fn: F) -> Result<TempCurve>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let dt = check_interval(t0, t, n)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut temps = Vec::with_capacity(n + 1);
    let mut deltas = Vec::with_capacity(n);
    times.push(t0);
    temps.push(temp0);
    let mut cur = temp0;
    for k in 0..n {
        let tk = grid_time(t0, t, n, k);
        let k1 = rate_fn(tk, cur)?;
        let k2 = rate_fn(tk + 0.5 * dt, cur + 0.5 * dt * k1)?;
        let k3 = rate_fn(tk + 0.5 * dt, cur + 0.5 * dt * k2)?;
        let k4 = rate_fn(tk + dt, cur + dt * k3)?;
        let d = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("increment at substep {} is {d}", k + 1)));
        }
        cur += d;
        deltas.push(d);
        temps.push(cur);
        times.push(grid_time(t0, t, n, k + 1));
    }
    Ok(TempCurve {
        times,
        temps,
        deltas,
    })
}

/// Closed form with radiation off: `T_m + (T0 − T_m)·exp(−C·t/H)`.
pub fn analytic_newton_cooling(temp0: f64, t_m: f64, c: f64, h: f64, t: f64) -> f64 {
    t_m + (temp0 - t_m) * math::exp(-c * t / h)
}

/// Closed form with convection off: `(T0⁻³ + 3·E·σ·t/H)^(−1/3)`.
pub fn analytic_radiative_cooling(temp0: f64, e: f64, h: f64, t: f64) -> f64 {
    let inv3 = 1.0 / (temp0 * temp0 * temp0) + 3.0 * e * STEFAN_BOLTZMANN * t / h;
    1.0 / math::cbrt(inv3)
}
