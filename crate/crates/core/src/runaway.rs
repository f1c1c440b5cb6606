//! Single global Arrhenius reaction for thermal-runaway onset.
//!
//! `x` is the remaining reactant fraction, consumed as
//! `dx/dt = -A x exp(-E / (k_b T))`, and the released heat is `m i |dx/dt|`.

use serde::{Deserialize, Serialize};

use crate::ecm::CellParams;
use crate::error::{invalid, Result};
use crate::thermal::{check_stability, q_conv, q_rad, ThermalEnv, STEFAN_BOLTZMANN};

pub const BOLTZMANN: f64 = 1.380649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrParams {
    /// Specific reaction enthalpy, J/kg.
    pub i_react: f64,
    /// Frequency factor, 1/s.
    pub a_x: f64,
    /// Activation energy, J.
    pub e_a: f64,
}

impl TrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_react >= 0.0 && self.a_x > 0.0 && self.e_a > 0.0) {
            return Err(invalid("TR parameters must be positive"));
        }
        Ok(())
    }

    /// Activation temperature `E_A / k_b` in K.
    pub fn activation_temperature(&self) -> f64 {
        self.e_a / BOLTZMANN
    }

    /// Illustrative parameters used when none are supplied. Not fitted to any cell.
    pub fn uncalibrated_default() -> Self {
        Self { i_react: 2.0e6, a_x: 3.0e16, e_a: 1.6e4 * BOLTZMANN }
    }
}

/// Derives `(A_x, E_A)` from two self-heating measurements `(T [K], dT/dt [K/s])`
/// taken while the reactant is still essentially unconsumed.
pub fn calibrate_from_arc(p1: (f64, f64), p2: (f64, f64), i_react: f64, cp: f64) -> Result<TrParams> {
    let ((t1, r1), (t2, r2)) = (p1, p2);
    if !(t1 > 0.0 && t2 > 0.0 && r1 > 0.0 && r2 > 0.0 && i_react > 0.0 && cp > 0.0) || t1 == t2 {
        return Err(invalid("ARC calibration needs two distinct points with positive rates"));
    }
    let theta = (r2 / r1).ln() / (1.0 / t1 - 1.0 / t2);
    if !(theta > 0.0) {
        return Err(invalid("self-heating rate must grow with temperature"));
    }
    let a_x = r1 * cp / i_react * (theta / t1).exp();
    Ok(TrParams { i_react, a_x, e_a: theta * BOLTZMANN })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrState {
    pub x: f64,
    pub t_k: f64,
}

impl TrState {
    pub fn fresh(t_k: f64) -> Self {
        Self { x: 1.0, t_k }
    }
}

pub fn conversion_rate(state: &TrState, params: &TrParams) -> f64 {
    params.a_x * state.x * (-params.e_a / (BOLTZMANN * state.t_k)).exp()
}

pub fn q_gen_tr(rate: f64, m_cell: f64, i_react: f64) -> f64 {
    m_cell * i_react * rate
}

/// How the cell is driven towards runaway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeatingMode {
    /// The cell itself receives `C * ramp` watts (as under sustained full-power
    /// discharge) while the surroundings stay at the initial temperature.
    Internal,
    /// Surroundings ramp at `ramp` from the initial temperature, optionally
    /// held at `ceiling_k`.
    Oven { ceiling_k: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrScenario {
    /// Heating rate in K/s.
    pub ramp: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Self-heating rate above the ramp that marks the trigger, K/s.
    pub threshold: f64,
    pub mode: HeatingMode,
    /// Largest temperature change accepted in one step before halving.
    pub max_step_dtemp: f64,
}

impl Default for TrScenario {
    fn default() -> Self {
        Self {
            ramp: 3.0 / 60.0,
            t_max: 3600.0,
            dt: 0.1,
            threshold: 10.0 / 60.0,
            mode: HeatingMode::Internal,
            max_step_dtemp: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrRun {
    pub t: Vec<f64>,
    pub t_amb_k: Vec<f64>,
    pub t_cell_k: Vec<f64>,
    pub x: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub trigger_time: Option<f64>,
    /// Heat released by the reaction over the run, J.
    pub heat_released: f64,
}

struct Rhs<'a> {
    params: &'a TrParams,
    env: &'a ThermalEnv,
    sc: &'a TrScenario,
    area: f64,
    mass: f64,
    c: f64,
    t0: f64,
}

impl Rhs<'_> {
    fn ambient(&self, t: f64) -> f64 {
        match self.sc.mode {
            HeatingMode::Internal => self.t0,
            HeatingMode::Oven { ceiling_k } => {
                let a = self.t0 + self.sc.ramp * t;
                ceiling_k.map_or(a, |c| a.min(c))
            }
        }
    }

    /// Temperature rate from heater and surroundings only.
    fn exchange(&self, t: f64, t_k: f64) -> f64 {
        let env = ThermalEnv { t_inf_k: self.ambient(t), ..*self.env };
        let heater = match self.sc.mode {
            HeatingMode::Internal => self.c * self.sc.ramp,
            HeatingMode::Oven { .. } => 0.0,
        };
        (heater - q_conv(t_k, &env, self.area) - q_rad(t_k, &env, self.area)) / self.c
    }

    fn rate(&self, s: &TrState) -> f64 {
        conversion_rate(s, self.params)
    }

    /// One Heun step. Reactant is advanced first and the released heat is
    /// taken from its exact decrement, so the heat budget cannot be exceeded.
    fn heun(&self, t: f64, s: &TrState, dt: f64) -> (TrState, f64) {
        let k = self.mass * self.params.i_react / self.c;
        let r1 = self.rate(s);
        let e1 = self.exchange(t, s.t_k);
        let pred = TrState { x: (s.x - dt * r1).max(0.0), t_k: s.t_k + dt * (e1 + k * r1) };
        let r2 = self.rate(&pred);
        let e2 = self.exchange(t + dt, pred.t_k);
        let x = (s.x - 0.5 * dt * (r1 + r2)).clamp(0.0, s.x);
        let released = self.mass * self.params.i_react * (s.x - x);
        let t_k = s.t_k + 0.5 * dt * (e1 + e2) + released / self.c;
        (TrState { x, t_k }, released)
    }
}

/// Drives a fresh cell from `env.t_inf_k` with the scenario heating and
/// records one sample per base step.
pub fn simulate_tr(params: &TrParams, cell: &CellParams, env: &ThermalEnv, sc: &TrScenario) -> Result<TrRun> {
    params.validate()?;
    env.validate()?;
    if !(sc.ramp > 0.0) {
        return Err(invalid("heating ramp must be positive"));
    }
    if !(sc.dt > 0.0 && sc.t_max > 0.0 && sc.threshold > 0.0 && sc.max_step_dtemp > 0.0) {
        return Err(invalid("TR scenario needs positive dt, t_max, threshold and step bound"));
    }
    let area = cell.surface_area();
    let c = cell.heat_capacity();
    check_stability(sc.dt, cell, env.h_conv * area)?;
    let rhs = Rhs { params, env, sc, area, mass: cell.mass, c, t0: env.t_inf_k };

    let mut run = TrRun::default();
    let mut s = TrState::fresh(env.t_inf_k);
    let n = (sc.t_max / sc.dt).round() as usize;
    let record = |run: &mut TrRun, t: f64, s: &TrState| {
        let r = rhs.rate(s);
        let dtdt = rhs.exchange(t, s.t_k) + rhs.mass * params.i_react * r / c;
        if run.trigger_time.is_none() && dtdt - sc.ramp > sc.threshold {
            run.trigger_time = Some(t);
        }
        run.t.push(t);
        run.t_amb_k.push(rhs.ambient(t));
        run.t_cell_k.push(s.t_k);
        run.x.push(s.x);
        run.q_gen.push(q_gen_tr(r, cell.mass, params.i_react));
    };
    record(&mut run, 0.0, &s);
    for k in 0..n {
        let t0 = k as f64 * sc.dt;
        let mut t = t0;
        let t_end = t0 + sc.dt;
        let mut h = sc.dt;
        while t < t_end - 1e-12 * sc.dt {
            h = h.min(t_end - t);
            let (next, released) = rhs.heun(t, &s, h);
            if !((next.t_k - s.t_k).abs() <= sc.max_step_dtemp) && h > 1e-14 * sc.dt {
                h *= 0.5;
                continue;
            }
            let grow = (next.t_k - s.t_k).abs() < 0.25 * sc.max_step_dtemp;
            run.heat_released += released;
            s = next;
            t += h;
            if grow {
                h *= 2.0;
            }
        }
        record(&mut run, t_end, &s);
    }
    Ok(run)
}

/// Linearised radiative conductance `4 eps sigma A T^3`, handy for lag estimates.
pub fn radiative_conductance(env: &ThermalEnv, area: f64, t_k: f64) -> f64 {
    4.0 * env.emissivity * STEFAN_BOLTZMANN * area * t_k.powi(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::c_to_k;
    use approx::assert_relative_eq;

    #[test]
    fn rate_examples() {
        let p = TrParams { i_react: 2e6, a_x: 1e12, e_a: 1.6e4 * BOLTZMANN };
        assert_eq!(conversion_rate(&TrState { x: 0.0, t_k: 400.0 }, &p), 0.0);
        assert_relative_eq!(conversion_rate(&TrState { x: 1.0, t_k: 400.0 }, &p), 4.248e-6, max_relative = 0.01);
        assert_relative_eq!(conversion_rate(&TrState { x: 0.5, t_k: 1e12 }, &p), 0.5e12, max_relative = 1e-6);
        assert_relative_eq!(q_gen_tr(1e-3, 0.103, 2e6), 206.0, max_relative = 1e-12);
    }

    #[test]
    fn calibration_recovers_parameters() {
        let truth = TrParams::uncalibrated_default();
        let cp = 1035.0;
        let rate = |t: f64| truth.i_react / cp * conversion_rate(&TrState::fresh(t), &truth);
        let p = calibrate_from_arc((350.0, rate(350.0)), (380.0, rate(380.0)), truth.i_react, cp).unwrap();
        assert_relative_eq!(p.a_x, truth.a_x, max_relative = 1e-8);
        assert_relative_eq!(p.e_a, truth.e_a, max_relative = 1e-10);
        assert!(calibrate_from_arc((350.0, 1e-3), (350.0, 2e-3), 2e6, cp).is_err());
        assert!(calibrate_from_arc((350.0, 2e-3), (380.0, 1e-3), 2e6, cp).is_err());
    }

    #[test]
    fn inert_cell_never_triggers() {
        let p = TrParams { i_react: 0.0, ..TrParams::uncalibrated_default() };
        let cell = CellParams::default();
        let env = ThermalEnv { h_conv: 7.0, ..ThermalEnv::default() };
        let sc = TrScenario { mode: HeatingMode::Oven { ceiling_k: None }, t_max: 1200.0, ..TrScenario::default() };
        let run = simulate_tr(&p, &cell, &env, &sc).unwrap();
        assert!(run.trigger_time.is_none());
        assert_eq!(run.heat_released, 0.0);
    }

    #[test]
    fn oven_lag_matches_first_order_tracking() {
        let p = TrParams { i_react: 0.0, ..TrParams::uncalibrated_default() };
        let cell = CellParams::default();
        let env = ThermalEnv { h_conv: 7.0, emissivity: 0.0, ..ThermalEnv::default() };
        let sc = TrScenario { mode: HeatingMode::Oven { ceiling_k: None }, t_max: 8000.0, ..TrScenario::default() };
        let run = simulate_tr(&p, &cell, &env, &sc).unwrap();
        let lag = run.t_amb_k.last().unwrap() - run.t_cell_k.last().unwrap();
        let expected = cell.heat_capacity() * sc.ramp / (env.h_conv * cell.surface_area());
        assert_relative_eq!(lag, expected, max_relative = 0.02);
    }

    #[test]
    fn reactant_and_heat_budget() {
        let p = TrParams::uncalibrated_default();
        let cell = CellParams::default();
        let run = simulate_tr(&p, &cell, &ThermalEnv { h_conv: 0.0, ..ThermalEnv::default() }, &TrScenario::default()).unwrap();
        assert!(run.trigger_time.is_some());
        assert!(run.x.windows(2).all(|w| w[1] <= w[0]));
        assert!(run.x.iter().all(|x| (0.0..=1.0).contains(x)));
        let budget = cell.mass * p.i_react;
        assert!(run.heat_released <= budget * (1.0 + 1e-12));
        assert_relative_eq!(run.heat_released, budget * (1.0 - run.x.last().unwrap()), max_relative = 1e-9);
    }

    #[test]
    fn convection_delays_trigger() {
        let p = TrParams::uncalibrated_default();
        let cell = CellParams::default();
        let mut prev = 0.0;
        for h in 0..=7 {
            let env = ThermalEnv { h_conv: h as f64, ..ThermalEnv::default() };
            let run = simulate_tr(&p, &cell, &env, &TrScenario::default()).unwrap();
            let t = run.trigger_time.unwrap_or(f64::INFINITY);
            assert!(t >= prev, "h = {h}: {t} < {prev}");
            prev = t;
        }
        let t0 = simulate_tr(&p, &cell, &ThermalEnv { h_conv: 0.0, ..ThermalEnv::default() }, &TrScenario::default())
            .unwrap()
            .trigger_time
            .unwrap();
        let t7 = simulate_tr(&p, &cell, &ThermalEnv { h_conv: 7.0, ..ThermalEnv::default() }, &TrScenario::default())
            .unwrap()
            .trigger_time
            .unwrap();
        assert!(t7 > t0);
    }

    #[test]
    fn capped_oven_stays_quiet() {
        // a slow reaction that only runs away well above the ambient cap
        let p = TrParams { i_react: 2e6, a_x: 1e12, e_a: 1.6e4 * BOLTZMANN };
        let cell = CellParams::default();
        let env = ThermalEnv { h_conv: 7.0, ..ThermalEnv::default() };
        let capped = TrScenario {
            mode: HeatingMode::Oven { ceiling_k: Some(c_to_k(120.0)) },
            t_max: 7200.0,
            ..TrScenario::default()
        };
        assert!(simulate_tr(&p, &cell, &env, &capped).unwrap().trigger_time.is_none());
        let open = TrScenario { mode: HeatingMode::Oven { ceiling_k: None }, ..capped };
        assert!(simulate_tr(&p, &cell, &env, &open).unwrap().trigger_time.is_some());
    }

    #[test]
    fn rejects_non_positive_ramp() {
        let sc = TrScenario { ramp: 0.0, ..TrScenario::default() };
        let r = simulate_tr(&TrParams::uncalibrated_default(), &CellParams::default(), &ThermalEnv::default(), &sc);
        assert!(r.is_err());
    }
}
