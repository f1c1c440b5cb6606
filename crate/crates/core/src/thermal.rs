//! Lumped per-cell energy balance: `C dT/dt = q_gen - (q_conv + q_rad + q_btms)`.
//! Temperatures are Kelvin internally.

use serde::{Deserialize, Serialize};

use crate::ecm::CellParams;
use crate::error::{invalid, ModelError, Result};

pub const STEFAN_BOLTZMANN: f64 = 5.67e-8;
pub const KELVIN: f64 = 273.15;

pub fn c_to_k(t: f64) -> f64 {
    t + KELVIN
}

pub fn k_to_c(t: f64) -> f64 {
    t - KELVIN
}

/// Surroundings of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnv {
    pub t_inf_k: f64,
    pub h_conv: f64,
    pub emissivity: f64,
}

impl Default for ThermalEnv {
    fn default() -> Self {
        Self { t_inf_k: c_to_k(25.0), h_conv: 7.0, emissivity: 0.8 }
    }
}

impl ThermalEnv {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_conv >= 0.0) || !(0.0..=1.0).contains(&self.emissivity) || !(self.t_inf_k > 0.0) {
            return Err(invalid("thermal environment needs h >= 0, emissivity in [0, 1], T_inf > 0 K"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellThermalState {
    pub t_k: f64,
}

impl CellThermalState {
    pub fn from_celsius(t: f64) -> Self {
        Self { t_k: c_to_k(t) }
    }

    pub fn celsius(&self) -> f64 {
        k_to_c(self.t_k)
    }
}

/// Convective loss, positive when heat leaves the cell.
pub fn q_conv(t_cell_k: f64, env: &ThermalEnv, area: f64) -> f64 {
    area * env.h_conv * (t_cell_k - env.t_inf_k)
}

/// Radiative loss, positive when heat leaves the cell.
pub fn q_rad(t_cell_k: f64, env: &ThermalEnv, area: f64) -> f64 {
    area * env.emissivity * STEFAN_BOLTZMANN * (t_cell_k.powi(4) - env.t_inf_k.powi(4))
}

/// Irreversible (resistive and polarisation) heat.
pub fn q_irr(i_cell: f64, uoc: f64, u_cell: f64) -> f64 {
    i_cell * (uoc - u_cell)
}

/// Reversible (entropic) heat.
pub fn q_rev(i_cell: f64, t_cell_k: f64, duoc_dt: f64) -> f64 {
    i_cell * t_cell_k * duoc_dt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ThermalFlags {
    pub above_max: bool,
    pub outside_optimal: bool,
}

pub fn thermal_flags(t_k: f64, cell: &CellParams) -> ThermalFlags {
    let c = k_to_c(t_k);
    ThermalFlags {
        above_max: c > cell.t_max_c,
        outside_optimal: c < cell.t_opt_c[0] || c > cell.t_opt_c[1],
    }
}

/// Explicit Euler step of the lumped balance.
pub fn step_temperature(
    state: &CellThermalState,
    q_gen: f64,
    q_diss: f64,
    cell: &CellParams,
    dt: f64,
) -> Result<(CellThermalState, ThermalFlags)> {
    if !(dt > 0.0) {
        return Err(invalid("time step must be positive"));
    }
    let t_k = state.t_k + dt * (q_gen - q_diss) / cell.heat_capacity();
    Ok((CellThermalState { t_k }, thermal_flags(t_k, cell)))
}

/// Largest stable explicit step `C / (h A)` for a linear conductance `h A`.
pub fn stability_limit(cell: &CellParams, conductance: f64) -> f64 {
    if conductance > 0.0 {
        cell.heat_capacity() / conductance
    } else {
        f64::INFINITY
    }
}

pub fn check_stability(dt: f64, cell: &CellParams, conductance: f64) -> Result<()> {
    let limit = stability_limit(cell, conductance);
    if dt >= limit {
        return Err(ModelError::StepUnstable { dt, limit });
    }
    Ok(())
}

/// Implicit trapezoidal step with generation held over the step:
/// `C (T' - T) = dt q_gen - dt/2 (d_old + d(T'))`.
///
/// `diss` returns the dissipation and its derivative at a trial temperature and
/// must be nondecreasing, which makes the root unique. Solved by Newton.
pub fn implicit_step<F>(t_old: f64, heat_capacity: f64, dt: f64, q_gen: f64, d_old: f64, diss: F) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let rhs = heat_capacity * t_old + dt * q_gen - 0.5 * dt * d_old;
    let mut t = t_old;
    for _ in 0..50 {
        let (d, dd) = diss(t);
        let f = heat_capacity * t + 0.5 * dt * d - rhs;
        let step = f / (heat_capacity + 0.5 * dt * dd);
        t -= step;
        if step.abs() < 1e-12 * t.abs().max(1.0) {
            break;
        }
    }
    t
}
