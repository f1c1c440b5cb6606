//! Backward-facing quasi-static pack simulation.
//!
//! All `n_s` strings see the same current and the same coolant inlet, so the
//! pack is represented by one channel of `n_p` cell positions; each position
//! stands for the `n_s` cells sharing that place along their channels.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atmosphere::{air_density, derive_kinematics, make_cruise_profile, DerivedKinematics, FlightProfile};
use crate::btms::{btms_mass, btms_power, cell_conductance, channel_flow, channel_pass, BtmsDesign, ChannelFlow, ChannelGeometry, ChannelPass, FluidProps};
use crate::ecm::{
    internal_power, pack_current, pack_nominal_stats, step_rc, step_soc, CellElecState, CellParams, EcmTables,
    PackEnergy, PackLayout,
};
use crate::error::{invalid, ModelError, Result};
use crate::interp::trapezoid;
use crate::powertrain::{power_chain, total_mass, AircraftParams, PowerDemand, PowertrainParams};
use crate::thermal::{c_to_k, implicit_step, k_to_c, q_conv, q_irr, q_rad, q_rev, ThermalEnv, STEFAN_BOLTZMANN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtmsConfig {
    pub design: BtmsDesign,
    pub fluid: FluidProps,
    pub geometry: ChannelGeometry,
}

/// Which constraint breaches end a run. Disabled ones are still logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardStops {
    pub soc: bool,
    pub voltage: bool,
    pub current: bool,
    pub temperature: bool,
}

impl Default for HardStops {
    fn default() -> Self {
        Self { soc: true, voltage: true, current: true, temperature: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub profile: FlightProfile,
    pub aircraft: AircraftParams,
    pub powertrain: PowertrainParams,
    pub cell: CellParams,
    pub ecm: EcmTables,
    pub layout: PackLayout,
    pub env: ThermalEnv,
    pub btms: Option<BtmsConfig>,
    pub dt: f64,
    pub soc_floor: f64,
    pub soc_init: f64,
    pub t_init_c: f64,
    pub radiation: bool,
    pub stops: HardStops,
}

impl SimConfig {
    /// Published aircraft, cell and pack with the synthetic ECM, no BTMS, on
    /// the given profile.
    pub fn reference_defaults(profile: FlightProfile) -> Self {
        let env = ThermalEnv::default();
        Self {
            dt: profile.dt(),
            profile,
            aircraft: AircraftParams::default(),
            powertrain: PowertrainParams::default(),
            cell: CellParams::default(),
            ecm: EcmTables::synthetic_default(),
            layout: PackLayout::default(),
            t_init_c: k_to_c(env.t_inf_k),
            env,
            btms: None,
            soc_floor: 0.15,
            soc_init: 1.0,
            radiation: false,
            stops: HardStops::default(),
        }
    }

    /// 8000 s cruise at 500 m and 50 m/s.
    pub fn reference_cruise() -> Self {
        Self::reference_defaults(make_cruise_profile(8000.0, 500.0, 50.0, 1.0).expect("valid cruise"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        if !(0.0..1.0).contains(&self.soc_floor) || !(self.soc_init > self.soc_floor && self.soc_init <= 1.0) {
            return Err(invalid("SOC window must satisfy 0 <= floor < initial <= 1"));
        }
        self.aircraft.validate()?;
        self.powertrain.validate()?;
        self.cell.validate()?;
        self.env.validate()?;
        if let Some(b) = &self.btms {
            b.fluid.validate()?;
            b.geometry.validate()?;
            b.design.validate(&b.fluid)?;
        }
        Ok(())
    }

    /// Battery system mass and BTMS mass entering the aircraft mass.
    pub fn masses(&self) -> (f64, f64) {
        let m_b = pack_nominal_stats(&self.layout, &self.cell).m_b;
        let m_btms = self.btms.as_ref().map_or(0.0, |b| btms_mass(&b.design));
        (m_b, m_btms)
    }
}

/// Problem constraints tracked along a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constraint {
    PackPower,
    CellVoltage,
    CellTempOptimal,
    CellTempMax,
    SocWindow,
    PackCurrent,
    BtmsRating,
    CoolantFlow,
}

impl Constraint {
    pub const ALL: [Constraint; 8] = [
        Constraint::PackPower,
        Constraint::CellVoltage,
        Constraint::CellTempOptimal,
        Constraint::CellTempMax,
        Constraint::SocWindow,
        Constraint::PackCurrent,
        Constraint::BtmsRating,
        Constraint::CoolantFlow,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Constraint::PackPower => "pack_power",
            Constraint::CellVoltage => "cell_voltage",
            Constraint::CellTempOptimal => "cell_temp_optimal",
            Constraint::CellTempMax => "cell_temp_max",
            Constraint::SocWindow => "soc_window",
            Constraint::PackCurrent => "pack_current",
            Constraint::BtmsRating => "btms_rating",
            Constraint::CoolantFlow => "coolant_flow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    SocFloor,
    VoltageWindow,
    CurrentLimit,
    TMax,
    PowerLimit(String),
    NoConvergence,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::SocFloor => write!(f, "SOC floor"),
            StopReason::VoltageWindow => write!(f, "voltage window"),
            StopReason::CurrentLimit => write!(f, "current limit"),
            StopReason::TMax => write!(f, "T_max"),
            StopReason::PowerLimit(m) => write!(f, "powertrain limit: {m}"),
            StopReason::NoConvergence => write!(f, "pack current did not converge"),
        }
    }
}

/// First occurrence of a constraint breach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub constraint: Constraint,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimFlags {
    pub eta_clamped: bool,
    pub btms_saturated: bool,
    pub laminar_warning: bool,
    pub synthetic_ecm: bool,
}

/// Time series are sampled at `t`; power and current samples are the values
/// held over the step that starts there.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub p_m: Vec<f64>,
    pub p_ac: Vec<f64>,
    pub p_dc: Vec<f64>,
    pub p_btms: Vec<f64>,
    pub q_btms: Vec<f64>,
    pub p_b: Vec<f64>,
    pub p_i: Vec<f64>,
    pub i_b: Vec<f64>,
    pub u_cell_min: Vec<f64>,
    pub u_cell_max: Vec<f64>,
    pub soc: Vec<f64>,
    pub e_b: Vec<f64>,
    pub t_cell_min_c: Vec<f64>,
    pub t_cell_mean_c: Vec<f64>,
    pub t_cell_max_c: Vec<f64>,
    /// Coolant temperature at each channel position, per sample.
    pub t_fl_c: Vec<Vec<f64>>,
    /// Mean per-cell heat generation held over each step, one entry fewer
    /// than the samples, and mean per-cell dissipation at each sample.
    pub q_gen_cell: Vec<f64>,
    pub q_diss_cell: Vec<f64>,
    pub delta_e_b: f64,
    pub max_t_cell_c: f64,
    pub range_km: f64,
    pub mass: f64,
    pub e_b_max: f64,
    pub stop: Option<StopReason>,
    pub violations: Vec<Violation>,
    pub flags: SimFlags,
}

impl SimResult {
    pub fn completed(&self) -> bool {
        self.stop.is_none()
    }

    pub fn delta_e_b_kwh(&self) -> f64 {
        self.delta_e_b / 3.6e6
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Mutable pack state: one entry per channel position.
#[derive(Debug, Clone, PartialEq)]
pub struct PackState {
    pub elec: Vec<CellElecState>,
    pub t_k: Vec<f64>,
    /// Dissipation and BTMS extraction per cell at the current temperatures.
    pub diss: Vec<f64>,
    pub q_btms: Vec<f64>,
    pub t_fl_k: Vec<f64>,
    pub energy: PackEnergy,
    pub u_seed: f64,
    pub saturated: bool,
}

/// Per-step outputs written into the result.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub demand: PowerDemand,
    pub p_btms: f64,
    pub q_btms: f64,
    pub p_b: f64,
    pub p_i: f64,
    pub i_b: f64,
    pub u_min: f64,
    pub u_max: f64,
}

pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    profile: FlightProfile,
    kin: DerivedKinematics,
    mass: f64,
    flow: Option<ChannelFlow>,
    area: f64,
    pub state: PackState,
    pub result: SimResult,
    k: usize,
    q_gen: Vec<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let profile = if (cfg.profile.dt() - cfg.dt).abs() > 1e-12 {
            cfg.profile.resample(cfg.dt)?
        } else {
            cfg.profile.clone()
        };
        let kin = derive_kinematics(&profile)?;
        kin.check_path_angle(cfg.aircraft.gamma_min, cfg.aircraft.gamma_max)?;
        let (m_b, m_btms) = cfg.masses();
        let mass = total_mass(cfg.aircraft.m_empty, m_b, m_btms, cfg.aircraft.m_max)?;
        let flow = match &cfg.btms {
            Some(b) => Some(channel_flow(&b.design, &b.fluid, &b.geometry, cfg.layout.n_s)?),
            None => None,
        };
        let n_p = cfg.layout.n_p;
        let e_max = pack_nominal_stats(&cfg.layout, &cfg.cell).e_max_j();
        let t0 = c_to_k(cfg.t_init_c);
        let elec = vec![CellElecState::at_rest(cfg.soc_init); n_p];
        let u_seed = cfg.ecm.at(cfg.soc_init, cfg.t_init_c).uoc;
        let mut sim = Self {
            cfg,
            profile,
            kin,
            mass,
            flow,
            area: cfg.cell.surface_area(),
            state: PackState {
                elec,
                t_k: vec![t0; n_p],
                diss: vec![0.0; n_p],
                q_btms: vec![0.0; n_p],
                t_fl_k: Vec::new(),
                energy: PackEnergy::charged(e_max, cfg.soc_init),
                u_seed,
                saturated: false,
            },
            result: SimResult::default(),
            k: 0,
            q_gen: vec![0.0; n_p],
        };
        sim.result.mass = mass;
        sim.result.e_b_max = e_max;
        sim.result.flags.synthetic_ecm = cfg.ecm.is_synthetic();
        sim.result.flags.laminar_warning = sim.flow.is_some_and(|f| f.laminar_warning);
        sim.init_dissipation()?;
        Ok(sim)
    }

    fn env(&self) -> ThermalEnv {
        self.cfg.env
    }

    fn ambient_loss(&self, t_k: f64) -> (f64, f64) {
        let env = self.env();
        let a = self.area;
        let mut d = q_conv(t_k, &env, a);
        let mut dd = a * env.h_conv;
        if self.cfg.radiation {
            d += q_rad(t_k, &env, a);
            dd += 4.0 * a * env.emissivity * STEFAN_BOLTZMANN * t_k.powi(3);
        }
        (d, dd)
    }

    fn init_dissipation(&mut self) -> Result<()> {
        let (mut q_b, mut t_fl) = (vec![0.0; self.cfg.layout.n_p], Vec::new());
        if let (Some(b), Some(f)) = (&self.cfg.btms, self.flow) {
            let pass = |s: f64| channel_pass(&self.state.t_k, b.design.t_fl_k, f.h, b.geometry.a_contact, f.vdot, &b.fluid, s);
            let ns = self.cfg.layout.n_s as f64;
            let total = |p: &ChannelPass| ns * p.q_cell.iter().sum::<f64>();
            let mut p = pass(1.0)?;
            if total(&p) > b.design.p_rated {
                self.state.saturated = true;
                let s = bisect_scale(|s| Ok(total(&pass(s)?)), b.design.p_rated)?;
                p = pass(s)?;
            }
            q_b = p.q_cell;
            t_fl = p.t_fl_k;
        }
        for j in 0..q_b.len() {
            self.state.diss[j] = self.ambient_loss(self.state.t_k[j]).0 + q_b[j];
        }
        self.state.q_btms = q_b;
        self.state.t_fl_k = t_fl;
        Ok(())
    }

    fn stop(&mut self, reason: StopReason) {
        if self.result.stop.is_none() {
            self.result.stop = Some(reason);
        }
    }

    fn log(&mut self, constraint: Constraint, value: f64) {
        if !self.result.violations.iter().any(|v| v.constraint == constraint) {
            let t = self.profile.time(self.k);
            self.result.violations.push(Violation { t, constraint, value });
        }
    }

    /// Power chain and pack current for the current sample.
    fn sample(&mut self) -> std::result::Result<Sample, StopReason> {
        let cfg = self.cfg;
        let k = self.k;
        let v = self.profile.speed()[k];
        let h = self.profile.altitude()[k];
        let rho = air_density(h).map_err(|e| StopReason::PowerLimit(e.to_string()))?;
        let demand = power_chain(rho, v, self.kin.vdot[k], self.kin.gamma[k], self.mass, &cfg.aircraft, &cfg.powertrain)
            .map_err(|e| StopReason::PowerLimit(e.to_string()))?;
        self.result.flags.eta_clamped |= demand.eta_clamped;

        let q_btms = cfg.layout.n_s as f64 * self.state.q_btms.iter().sum::<f64>();
        let p_btms = match &cfg.btms {
            Some(b) => btms_power(q_btms, &b.design).p_elec,
            None => 0.0,
        };
        let p_b = demand.p_dc + p_btms + cfg.powertrain.p_aux;

        let points: Vec<_> = (0..cfg.layout.n_p)
            .map(|j| cfg.ecm.at(self.state.elec[j].soc, k_to_c(self.state.t_k[j])))
            .collect();
        let elec = self.state.elec.clone();
        let n = points.len() as f64;
        let terminal = |i: f64| {
            points.iter().zip(&elec).map(|(p, s)| p.uoc - i * p.r0 - s.u1 - s.u2).sum::<f64>() / n
        };
        let i_limit = if cfg.stops.current { cfg.cell.i_dis_max } else { f64::INFINITY };
        let pc = match pack_current(p_b, &cfg.layout, i_limit, self.state.u_seed, terminal) {
            Ok(pc) => pc,
            Err(ModelError::LimitExceeded { value, .. }) => {
                self.log(Constraint::PackCurrent, value - cfg.layout.n_p as f64 * cfg.cell.i_dis_max);
                return Err(StopReason::CurrentLimit);
            }
            Err(_) => return Err(StopReason::NoConvergence),
        };
        self.state.u_seed = pc.u_terminal;
        let i_cell = pc.i_b / cfg.layout.n_p as f64;
        let us: Vec<f64> = points.iter().zip(&elec).map(|(p, s)| p.uoc - i_cell * p.r0 - s.u1 - s.u2).collect();
        let uoc_mean = points.iter().map(|p| p.uoc).sum::<f64>() / n;
        Ok(Sample {
            demand,
            p_btms,
            q_btms,
            p_b,
            p_i: internal_power(uoc_mean, pc.i_b, cfg.layout.n_s),
            i_b: pc.i_b,
            u_min: us.iter().cloned().fold(f64::INFINITY, f64::min),
            u_max: us.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    fn record(&mut self, s: &Sample) {
        let r = &mut self.result;
        let k = self.k;
        let dt = self.profile.dt();
        if let Some(&p_prev) = r.p_i.last() {
            self.state.energy.e_b -= 0.5 * dt * (p_prev + s.p_i);
        }
        r.t.push(self.profile.time(k));
        r.v.push(self.profile.speed()[k]);
        r.p_m.push(s.demand.p_motor);
        r.p_ac.push(s.demand.p_ac);
        r.p_dc.push(s.demand.p_dc);
        r.p_btms.push(s.p_btms);
        r.q_btms.push(s.q_btms);
        r.p_b.push(s.p_b);
        r.p_i.push(s.p_i);
        r.i_b.push(s.i_b);
        r.u_cell_min.push(s.u_min);
        r.u_cell_max.push(s.u_max);
        let n = self.state.elec.len() as f64;
        r.soc.push(self.state.elec.iter().map(|e| e.soc).sum::<f64>() / n);
        r.e_b.push(self.state.energy.e_b);
        let tc: Vec<f64> = self.state.t_k.iter().map(|&t| k_to_c(t)).collect();
        r.t_cell_min_c.push(tc.iter().cloned().fold(f64::INFINITY, f64::min));
        r.t_cell_max_c.push(tc.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        r.t_cell_mean_c.push(tc.iter().sum::<f64>() / n);
        r.t_fl_c.push(self.state.t_fl_k.iter().map(|&t| k_to_c(t)).collect());
        r.q_diss_cell.push(self.state.diss.iter().sum::<f64>() / n);
    }

    /// Checks the recorded sample; returns a stop reason for enforced breaches.
    fn check(&mut self, s: &Sample) -> Option<StopReason> {
        let cfg = self.cfg;
        let r = &self.result;
        let t_max = *r.t_cell_max_c.last().unwrap();
        let t_min = *r.t_cell_min_c.last().unwrap();
        let soc = self.state.elec.iter().map(|e| e.soc).fold(f64::INFINITY, f64::min);
        let e_soc = self.state.energy.soc();
        let mut stop = None;
        if s.u_min < cfg.cell.u_min || s.u_max > cfg.cell.u_max {
            self.log(Constraint::CellVoltage, (cfg.cell.u_min - s.u_min).max(s.u_max - cfg.cell.u_max));
            if cfg.stops.voltage {
                stop = stop.or(Some(StopReason::VoltageWindow));
            }
        }
        let i_max = cfg.layout.n_p as f64 * cfg.cell.i_dis_max;
        if s.i_b > i_max {
            self.log(Constraint::PackCurrent, s.i_b - i_max);
        }
        if t_max > cfg.cell.t_max_c {
            self.log(Constraint::CellTempMax, t_max - cfg.cell.t_max_c);
            if cfg.stops.temperature {
                stop = stop.or(Some(StopReason::TMax));
            }
        }
        let [lo, hi] = cfg.cell.t_opt_c;
        if t_max > hi || t_min < lo {
            self.log(Constraint::CellTempOptimal, (t_max - hi).max(lo - t_min));
        }
        if soc < cfg.soc_floor || e_soc < cfg.soc_floor {
            self.log(Constraint::SocWindow, cfg.soc_floor - soc.min(e_soc));
            if cfg.stops.soc {
                stop = stop.or(Some(StopReason::SocFloor));
            }
        }
        if let Some(b) = &cfg.btms {
            if s.q_btms > b.design.p_rated * (1.0 + 1e-9) + 1e-9 {
                self.log(Constraint::BtmsRating, s.q_btms - b.design.p_rated);
            }
        }
        stop
    }

    /// Electrical and thermal advance from the current sample to the next.
    fn advance(&mut self, s: &Sample) -> Result<()> {
        let cfg = self.cfg;
        let dt = self.profile.dt();
        let n_p = cfg.layout.n_p;
        let i_cell = s.i_b / n_p as f64;
        for j in 0..n_p {
            let st = self.state.elec[j];
            let p = cfg.ecm.at(st.soc, k_to_c(self.state.t_k[j]));
            let u = p.uoc - i_cell * p.r0 - st.u1 - st.u2;
            self.q_gen[j] = q_irr(i_cell, p.uoc, u) + q_rev(i_cell, self.state.t_k[j], p.duoc_dt);
            let rc = step_rc(&st, i_cell, dt, &p);
            self.state.elec[j] = step_soc(&rc, i_cell, dt, cfg.cell.capacity_ah, cfg.soc_floor).0;
        }
        let n = n_p as f64;
        self.result.q_gen_cell.push(self.q_gen.iter().sum::<f64>() / n);
        self.thermal_step(dt)
    }

    /// Implicit trapezoidal temperature update marching down the channel.
    fn solve_channel(&self, dt: f64, scale: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let cfg = self.cfg;
        let n_p = cfg.layout.n_p;
        let c = cfg.cell.heat_capacity();
        let (mut t_new, mut diss, mut q_b, mut t_fl) =
            (Vec::with_capacity(n_p), Vec::with_capacity(n_p), Vec::with_capacity(n_p), Vec::with_capacity(n_p));
        let btms = cfg.btms.as_ref().zip(self.flow).filter(|(_, f)| f.vdot > 0.0);
        let mut fl = btms.map_or(0.0, |(b, _)| b.design.t_fl_k);
        for j in 0..n_p {
            let g = match btms {
                Some((b, f)) => scale * cell_conductance(f.h, b.geometry.a_contact, f.vdot, &b.fluid),
                None => 0.0,
            };
            let fl_j = fl;
            let f = |t: f64| {
                let (d, dd) = self.ambient_loss(t);
                (d + g * (t - fl_j), dd + g)
            };
            let t = implicit_step(self.state.t_k[j], c, dt, self.q_gen[j], self.state.diss[j], f);
            let qb = g * (t - fl_j);
            t_new.push(t);
            diss.push(f(t).0);
            q_b.push(qb);
            if let Some((b, flow)) = btms {
                t_fl.push(fl_j);
                fl += qb / (b.fluid.rho * flow.vdot * b.fluid.cp);
            }
        }
        (t_new, diss, q_b, t_fl)
    }

    fn thermal_step(&mut self, dt: f64) -> Result<()> {
        let cfg = self.cfg;
        let ns = cfg.layout.n_s as f64;
        let mut sol = self.solve_channel(dt, 1.0);
        let mut saturated = false;
        if let Some(b) = &cfg.btms {
            let total = |q: &[f64]| ns * q.iter().sum::<f64>();
            if total(&sol.2) > b.design.p_rated {
                saturated = true;
                let s = bisect_scale(|s| Ok(total(&self.solve_channel(dt, s).2)), b.design.p_rated)?;
                sol = self.solve_channel(dt, s);
            }
        }
        self.result.flags.btms_saturated |= saturated;
        self.state.saturated = saturated;
        let (t_new, diss, q_b, t_fl) = sol;
        self.state.t_k = t_new;
        self.state.diss = diss;
        self.state.q_btms = q_b;
        self.state.t_fl_k = t_fl;
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.result.stop.is_some() || self.k >= self.profile.len()
    }

    /// One time step. Returns false once the run has ended.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        let s = match self.sample() {
            Ok(s) => s,
            Err(reason) => {
                self.stop(reason);
                return Ok(false);
            }
        };
        self.record(&s);
        if let Some(reason) = self.check(&s) {
            self.stop(reason);
            return Ok(false);
        }
        if self.k + 1 == self.profile.len() {
            self.k += 1;
            return Ok(false);
        }
        self.advance(&s)?;
        self.k += 1;
        Ok(true)
    }

    pub fn finish(mut self) -> SimResult {
        let r = &mut self.result;
        if let (Some(first), Some(last)) = (r.e_b.first(), r.e_b.last()) {
            r.delta_e_b = first - last;
        }
        r.max_t_cell_c = r.t_cell_max_c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        r.range_km = trapezoid(&r.v, self.profile.dt()) / 1000.0;
        self.result
    }
}

/// Largest removal scale in [0, 1] whose total extraction stays within `cap`.
fn bisect_scale<F: Fn(f64) -> Result<f64>>(total: F, cap: f64) -> Result<f64> {
    if cap <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if total(mid)? > cap {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    let mut sim = Simulation::new(cfg)?;
    while sim.step()? {}
    Ok(sim.finish())
}

/// Largest violation per constraint, zero when satisfied. A run that stopped
/// early is reported through `incomplete`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub entries: Vec<(Constraint, f64)>,
    pub incomplete: Option<String>,
}

impl ConstraintReport {
    pub fn max_violation(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn get(&self, c: Constraint) -> f64 {
        self.entries.iter().find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn feasible(&self) -> bool {
        self.incomplete.is_none() && self.entries.iter().all(|e| e.1 == 0.0)
    }
}

fn worst<I: Iterator<Item = f64>>(it: I) -> f64 {
    it.fold(0.0, |m, x| if x > m { x } else { m })
}

pub fn check_constraints(r: &SimResult, cfg: &SimConfig) -> ConstraintReport {
    let cell = &cfg.cell;
    let [lo, hi] = cell.t_opt_c;
    let i_max = cfg.layout.n_p as f64 * cell.i_dis_max;
    let e_floor = cfg.soc_floor * r.e_b_max;
    let mut entries = vec![
        (Constraint::PackPower, worst(r.p_b.iter().map(|p| -p))),
        (
            Constraint::CellVoltage,
            worst(
                r.u_cell_min
                    .iter()
                    .map(|u| cell.u_min - u)
                    .chain(r.u_cell_max.iter().map(|u| u - cell.u_max)),
            ),
        ),
        (
            Constraint::CellTempOptimal,
            worst(r.t_cell_max_c.iter().map(|t| t - hi).chain(r.t_cell_min_c.iter().map(|t| lo - t))),
        ),
        (Constraint::CellTempMax, worst(r.t_cell_max_c.iter().map(|t| t - cell.t_max_c))),
        (
            Constraint::SocWindow,
            worst(
                r.soc
                    .iter()
                    .map(|s| cfg.soc_floor - s)
                    .chain(r.e_b.iter().map(|e| (e_floor - e) / r.e_b_max.max(1e-300))),
            ),
        ),
        (Constraint::PackCurrent, worst(r.i_b.iter().map(|i| (i - i_max).max(-i)))),
    ];
    if let Some(b) = &cfg.btms {
        let tol = 1e-9 * b.design.p_rated.max(1.0);
        entries.push((Constraint::BtmsRating, worst(r.q_btms.iter().map(|q| q - b.design.p_rated - tol))));
        entries.push((
            Constraint::CoolantFlow,
            worst([-b.design.vdot, b.design.vdot - b.fluid.vdot_max].into_iter()),
        ));
    }
    // a violation logged at the stopping sample may fall between recorded series
    for v in &r.violations {
        if let Some(e) = entries.iter_mut().find(|e| e.0 == v.constraint) {
            e.1 = e.1.max(v.value);
        }
    }
    ConstraintReport { entries, incomplete: r.stop.as_ref().map(|s| s.to_string()) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_p: usize,
    pub h_conv: f64,
    pub range_km: f64,
    pub max_t_cell_c: f64,
    pub stop: Option<String>,
    pub violations: Vec<Constraint>,
}

/// Cruise settings for the range sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub altitude: f64,
    pub speed: f64,
    /// Upper bound on the cruise length; runs normally end at the SOC floor.
    pub max_duration: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { altitude: 500.0, speed: 50.0, max_duration: 6.0 * 3600.0 }
    }
}

/// Range and peak cell temperature over parallel-string count and ambient
/// convection. Only the SOC floor ends a run; other breaches are recorded.
/// Rows come back in `np_list`-major input order.
pub fn range_sweep(base: &SimConfig, np_list: &[usize], h_list: &[f64], settings: &SweepSettings) -> Result<Vec<SweepRow>> {
    if np_list.is_empty() || h_list.is_empty() {
        return Err(invalid("sweep needs at least one n_p and one h value"));
    }
    if np_list.contains(&0) || h_list.iter().any(|h| !(*h >= 0.0)) {
        return Err(invalid("n_p must be >= 1 and h >= 0"));
    }
    let profile = make_cruise_profile(settings.max_duration, settings.altitude, settings.speed, base.dt)?;
    let jobs: Vec<(usize, f64)> = np_list.iter().flat_map(|&n| h_list.iter().map(move |&h| (n, h))).collect();
    jobs.par_iter()
        .map(|&(n_p, h)| {
            let mut cfg = base.clone();
            cfg.profile = profile.clone();
            cfg.layout = PackLayout::new(base.layout.n_s, n_p)?;
            cfg.env.h_conv = h;
            cfg.stops = HardStops { soc: true, voltage: false, current: false, temperature: false };
            let r = simulate(&cfg)?;
            let stop = match &r.stop {
                Some(StopReason::SocFloor) => None,
                Some(other) => Some(other.to_string()),
                None => Some("profile ended before SOC floor".to_string()),
            };
            Ok(SweepRow {
                n_p,
                h_conv: h,
                range_km: r.range_km,
                max_t_cell_c: r.max_t_cell_c,
                stop,
                violations: r.violations.iter().map(|v| v.constraint).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btms::FluidProps;

    fn short(duration: f64) -> SimConfig {
        SimConfig::reference_defaults(make_cruise_profile(duration, 500.0, 50.0, 1.0).unwrap())
    }

    fn water() -> BtmsConfig {
        BtmsConfig { design: BtmsDesign::default(), fluid: FluidProps::water(), geometry: ChannelGeometry::default() }
    }

    #[test]
    fn idle_sample_is_inert() {
        let mut cfg = SimConfig::reference_defaults(make_cruise_profile(10.0, 0.0, 0.0, 1.0).unwrap());
        cfg.powertrain.p_aux = 0.0;
        let r = simulate(&cfg).unwrap();
        assert!(r.completed());
        assert!(r.p_b.iter().chain(&r.p_i).chain(&r.i_b).all(|&p| p == 0.0));
        assert_eq!(r.delta_e_b, 0.0);
        assert!(r.t_cell_max_c.iter().all(|&t| (t - 25.0).abs() < 1e-12));
        let rep = check_constraints(&r, &cfg);
        assert!(rep.feasible());
        assert!(r.violations.is_empty());
    }

    #[test]
    fn cruise_sample_power() {
        let mut cfg = short(5.0);
        // evaluate at the published 2732 kg take-off mass
        cfg.aircraft.m_empty = 2732.0 - cfg.masses().0;
        let r = simulate(&cfg).unwrap();
        assert!((r.p_b[0] - 71.95e3).abs() < 100.0, "{}", r.p_b[0]);
    }

    #[test]
    fn energy_matches_internal_power_integral() {
        let r = simulate(&short(600.0)).unwrap();
        let integral = trapezoid(&r.p_i, 1.0);
        assert!((r.delta_e_b - integral).abs() <= 1e-9 * integral);
        assert!(r.p_i.iter().zip(&r.p_b).all(|(pi, pb)| pi >= pb));
    }

    #[test]
    fn thermal_energy_balance() {
        let mut cfg = short(900.0);
        cfg.btms = Some(water());
        cfg.radiation = true;
        let r = simulate(&cfg).unwrap();
        let c = cfg.cell.heat_capacity();
        let gen: f64 = r.q_gen_cell.iter().sum();
        let lost = trapezoid(&r.q_diss_cell, 1.0);
        let lhs = c * (r.t_cell_mean_c.last().unwrap() - r.t_cell_mean_c[0]);
        assert!((lhs - (gen - lost)).abs() < 1e-6 * gen.abs().max(1.0), "{lhs} vs {}", gen - lost);
    }

    #[test]
    fn stop_at_t_max() {
        let mut cfg = short(3000.0);
        cfg.t_init_c = 54.9;
        cfg.env.h_conv = 0.0;
        let r = simulate(&cfg).unwrap();
        assert_eq!(r.stop, Some(StopReason::TMax));
        assert_eq!(r.stop.as_ref().unwrap().to_string(), "T_max");
        assert!(r.len() < 3001);
    }

    #[test]
    fn voltage_dip_is_reported_with_magnitude() {
        let cfg = short(20.0);
        let mut r = simulate(&cfg).unwrap();
        r.u_cell_min[5] = 2.4;
        let rep = check_constraints(&r, &cfg);
        assert!((rep.get(Constraint::CellVoltage) - 0.1).abs() < 1e-12);
        assert!(!rep.feasible());
    }

    #[test]
    fn deterministic() {
        let mut cfg = short(300.0);
        cfg.btms = Some(water());
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }

    #[test]
    fn radiation_only_cools() {
        let mut cfg = short(1500.0);
        cfg.env.h_conv = 0.0;
        let dry = simulate(&cfg).unwrap();
        cfg.radiation = true;
        let wet = simulate(&cfg).unwrap();
        for (a, b) in dry.t_cell_max_c.iter().zip(&wet.t_cell_max_c) {
            assert!(a >= b);
        }
    }

    #[test]
    fn btms_cools_and_costs_energy() {
        let mut cfg = short(1500.0);
        cfg.t_init_c = 30.0;
        let off = simulate(&cfg).unwrap();
        let mut with = cfg.clone();
        let mut w = water();
        w.design.t_fl_k = c_to_k(20.0);
        with.btms = Some(w);
        let on = simulate(&with).unwrap();
        for (a, b) in on.t_cell_max_c.iter().zip(&off.t_cell_max_c) {
            assert!(a <= b, "{a} > {b}");
        }
        assert!(on.delta_e_b > off.delta_e_b);
    }

    #[test]
    fn coolant_warms_down_the_channel() {
        let mut cfg = short(600.0);
        cfg.btms = Some(water());
        cfg.t_init_c = 30.0;
        let r = simulate(&cfg).unwrap();
        for row in &r.t_fl_c {
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn saturation_caps_extraction() {
        let mut cfg = short(300.0);
        let mut w = water();
        w.design.p_rated = 500.0;
        w.design.t_fl_k = c_to_k(15.0);
        cfg.btms = Some(w);
        let r = simulate(&cfg).unwrap();
        assert!(r.flags.btms_saturated);
        assert!(r.q_btms.iter().all(|&q| q <= 500.0 * (1.0 + 1e-9)));
        assert_eq!(check_constraints(&r, &cfg).get(Constraint::BtmsRating), 0.0);
    }

    #[test]
    fn heavier_aircraft_uses_more_energy() {
        let cfg = short(600.0);
        let mut heavy = cfg.clone();
        heavy.aircraft.m_empty += 200.0;
        assert!(simulate(&heavy).unwrap().delta_e_b >= simulate(&cfg).unwrap().delta_e_b);
    }

    #[test]
    fn rejects_overweight_and_single_sample() {
        let mut cfg = short(10.0);
        cfg.aircraft.m_empty = 2500.0;
        assert!(matches!(simulate(&cfg), Err(ModelError::MassExceeded { .. })));
        assert!(FlightProfile::new(1.0, vec![50.0], vec![500.0]).is_err());
    }

    #[test]
    fn sweep_shapes() {
        let base = SimConfig::reference_cruise();
        assert!(range_sweep(&base, &[], &[7.0], &SweepSettings::default()).is_err());
        let rows = range_sweep(&base, &[16], &[7.0], &SweepSettings::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].range_km > 0.0);
    }

    #[test]
    fn tiny_packs_rank_by_capacity() {
        let base = SimConfig::reference_cruise();
        let rows = range_sweep(&base, &[1, 2], &[7.0], &SweepSettings::default()).unwrap();
        assert!(rows[1].range_km > rows[0].range_km, "{rows:?}");
    }
}
