//! Second-order equivalent circuit model at cell granularity inside an
//! `n_s x n_p` pack, plus HPPC generation, parameter fitting and heat-capacity
//! estimation.

pub mod cp;
pub mod fit;
pub mod hppc;
pub mod tables;

pub use cp::estimate_cp;
pub use fit::{fit_ecm, BinFit, FitOptions, FitResult};
pub use hppc::{generate_hppc_protocol, simulate_hppc, HppcData, HppcProtocol, HppcStep};
pub use tables::{EcmPoint, EcmSlice, EcmTables};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};

/// Share of system mass added on top of bare cell mass (housing, busbars, wiring).
pub const CELL_TO_SYSTEM_MASS: f64 = 1.1;

/// Static cell constants. Temperatures are in °C, lengths in m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub capacity_ah: f64,
    pub u_max: f64,
    pub u_nom: f64,
    pub u_min: f64,
    pub i_ch_max: f64,
    pub i_dis_max: f64,
    pub t_min_c: f64,
    pub t_max_c: f64,
    pub t_opt_c: [f64; 2],
    pub mass: f64,
    pub rho_ged_wh_kg: f64,
    /// (length, height, width)
    pub dims: [f64; 3],
    pub cp: f64,
    pub k_cond: f64,
    pub biot: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            capacity_ah: 11.84,
            u_max: 4.2,
            u_nom: 3.4,
            u_min: 2.5,
            i_ch_max: 2.32,
            i_dis_max: 34.8,
            t_min_c: -20.0,
            t_max_c: 55.0,
            t_opt_c: [15.0, 35.0],
            mass: 0.103,
            rho_ged_wh_kg: 390.0,
            dims: [0.139, 0.0542, 0.0067],
            cp: 1035.0,
            k_cond: 26.5,
            biot: 0.0367,
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < self.u_nom && self.u_nom < self.u_max) {
            return Err(invalid("cell voltages must satisfy U_min < U_nom < U_max"));
        }
        if !(self.capacity_ah > 0.0) {
            return Err(invalid("cell capacity must be positive"));
        }
        if !(self.biot < 0.1) {
            return Err(invalid(format!(
                "Biot number {} too large for a lumped thermal model",
                self.biot
            )));
        }
        if !(self.surface_area() > 0.0) || !(self.mass > 0.0) || !(self.cp > 0.0) {
            return Err(invalid("cell dimensions, mass and heat capacity must be positive"));
        }
        Ok(())
    }

    /// Full outer surface of the prismatic/pouch cell.
    pub fn surface_area(&self) -> f64 {
        let [l, h, w] = self.dims;
        2.0 * (l * h + l * w + h * w)
    }

    /// Largest face (length x height), the cold-plate contact face.
    pub fn footprint(&self) -> f64 {
        self.dims[0] * self.dims[1]
    }

    /// Lumped heat capacity in J/K.
    pub fn heat_capacity(&self) -> f64 {
        self.cp * self.mass
    }

    pub fn check_voltage(&self, u: f64) -> Result<()> {
        if u < self.u_min || u > self.u_max {
            return Err(ModelError::VoltageWindow { voltage: u, min: self.u_min, max: self.u_max });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackLayout {
    pub n_s: usize,
    pub n_p: usize,
}

impl PackLayout {
    pub fn new(n_s: usize, n_p: usize) -> Result<Self> {
        if n_s == 0 || n_p == 0 {
            return Err(invalid("pack needs at least one cell in series and in parallel"));
        }
        Ok(Self { n_s, n_p })
    }

    pub fn cells(&self) -> usize {
        self.n_s * self.n_p
    }
}

impl Default for PackLayout {
    fn default() -> Self {
        Self { n_s: 118, n_p: 64 }
    }
}

/// Electrical state of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellElecState {
    pub soc: f64,
    pub u1: f64,
    pub u2: f64,
}

impl CellElecState {
    pub fn at_rest(soc: f64) -> Self {
        Self { soc, u1: 0.0, u2: 0.0 }
    }
}

/// Internal pack energy in J.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackEnergy {
    pub e_b: f64,
    pub e_b_max: f64,
}

impl PackEnergy {
    /// Start-of-flight energy `zeta_max * E_max`.
    pub fn charged(e_b_max: f64, soc_max: f64) -> Self {
        Self { e_b: soc_max * e_b_max, e_b_max }
    }

    pub fn soc(&self) -> f64 {
        self.e_b / self.e_b_max
    }
}

/// Nominal pack figures derived from the layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackStats {
    pub u_nom: f64,
    pub e_max_wh: f64,
    pub m_cells: f64,
    pub m_b: f64,
}

impl PackStats {
    pub fn e_max_j(&self) -> f64 {
        self.e_max_wh * 3600.0
    }
}

pub fn pack_nominal_stats(layout: &PackLayout, cell: &CellParams) -> PackStats {
    let u_nom = layout.n_s as f64 * cell.u_nom;
    let m_cells = layout.cells() as f64 * cell.mass;
    PackStats {
        u_nom,
        e_max_wh: u_nom * layout.n_p as f64 * cell.capacity_ah,
        m_cells,
        m_b: CELL_TO_SYSTEM_MASS * m_cells,
    }
}

pub fn ocv(soc: f64, tables: &EcmTables) -> f64 {
    tables.at_soc(soc).uoc
}

pub fn cell_current(i_b: f64, n_p: usize) -> f64 {
    i_b / n_p as f64
}

/// Terminal voltage `U_oc - I R0 - U1 - U2`.
pub fn terminal_voltage(state: &CellElecState, i_cell: f64, point: &EcmPoint) -> f64 {
    point.uoc - i_cell * point.r0 - state.u1 - state.u2
}

/// Terminal voltage at the reference temperature, failing outside the cell window.
pub fn terminal_voltage_checked(
    state: &CellElecState,
    i_cell: f64,
    tables: &EcmTables,
    cell: &CellParams,
) -> Result<f64> {
    let u = terminal_voltage(state, i_cell, &tables.at_soc(state.soc));
    cell.check_voltage(u)?;
    Ok(u)
}

/// Trapezoidal update of one RC branch under a current held over the step.
pub(crate) fn rc_branch_step(u: f64, i: f64, r: f64, c: f64, dt: f64) -> f64 {
    let a = dt / (2.0 * r * c);
    ((1.0 - a) * u + dt * i / c) / (1.0 + a)
}

/// Advances both RC over-voltages by `dt` with current `i_cell` held constant.
pub fn step_rc(state: &CellElecState, i_cell: f64, dt: f64, point: &EcmPoint) -> CellElecState {
    CellElecState {
        soc: state.soc,
        u1: rc_branch_step(state.u1, i_cell, point.r1, point.c1, dt),
        u2: rc_branch_step(state.u2, i_cell, point.r2, point.c2, dt),
    }
}

/// Outcome flags of a coulomb-counting step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SocFlags {
    pub below_floor: bool,
    pub clamped: bool,
}

/// Coulomb counting `soc -= I dt / (3600 Q)`, clamped to [0, 1].
pub fn step_soc(state: &CellElecState, i_cell: f64, dt: f64, capacity_ah: f64, soc_floor: f64) -> (CellElecState, SocFlags) {
    let raw = state.soc - i_cell * dt / (3600.0 * capacity_ah);
    let soc = raw.clamp(0.0, 1.0);
    let flags = SocFlags { below_floor: raw < soc_floor, clamped: soc != raw };
    (CellElecState { soc, ..*state }, flags)
}

/// Internal pack power `n_s * U_oc * I_b`.
pub fn internal_power(uoc: f64, i_b: f64, n_s: usize) -> f64 {
    n_s as f64 * uoc * i_b
}

/// Removes `p_i * dt` from the pack; the flag reports a breach of the SOC window floor.
pub fn step_energy(energy: &PackEnergy, p_i: f64, dt: f64, soc_floor: f64) -> (PackEnergy, bool) {
    let e_b = energy.e_b - p_i * dt;
    let next = PackEnergy { e_b, ..*energy };
    (next, e_b < soc_floor * energy.e_b_max)
}

/// Converged pack current and the matching mean terminal voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackCurrent {
    pub i_b: f64,
    pub u_terminal: f64,
    pub iterations: usize,
}

pub const PACK_CURRENT_TOL: f64 = 1e-6;
pub const PACK_CURRENT_MAX_ITER: usize = 50;

/// Solves `I_b = P_b / (n_s U_t(I_b / n_p))` by fixed-point iteration seeded
/// with `u_seed`. `terminal` maps cell current to cell terminal voltage.
pub fn pack_current<F>(p_b: f64, layout: &PackLayout, i_cell_max: f64, u_seed: f64, terminal: F) -> Result<PackCurrent>
where
    F: Fn(f64) -> f64,
{
    if !(u_seed > 0.0) {
        return Err(invalid("terminal voltage seed must be positive"));
    }
    let ns = layout.n_s as f64;
    let np = layout.n_p as f64;
    let mut u = u_seed;
    for it in 1..=PACK_CURRENT_MAX_ITER {
        let i_b = p_b / (ns * u);
        let u_next = terminal(i_b / np);
        if !(u_next > 0.0) {
            return Err(ModelError::NoConvergence(it));
        }
        if (u_next - u).abs() < PACK_CURRENT_TOL {
            let i_b = p_b / (ns * u_next);
            let limit = np * i_cell_max;
            if i_b > limit {
                return Err(ModelError::LimitExceeded { quantity: "pack current", value: i_b, limit });
            }
            return Ok(PackCurrent { i_b, u_terminal: terminal(i_b / np), iterations: it });
        }
        u = u_next;
    }
    Err(ModelError::NoConvergence(PACK_CURRENT_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn point(uoc: f64, r0: f64) -> EcmPoint {
        EcmPoint { uoc, r0, r1: 2e-3, c1: 5e3, r2: 3e-3, c2: 5e4, duoc_dt: 0.0 }
    }

    #[test]
    fn ocv_defaults() {
        let t = EcmTables::synthetic_default();
        assert_eq!(ocv(1.0, &t), 4.2);
        assert_eq!(ocv(0.0, &t), 2.5);
    }

    #[test]
    fn pack_current_zero_power() {
        let p = pack_current(0.0, &PackLayout::default(), 34.8, 3.4, |_| 3.4).unwrap();
        assert_eq!(p.i_b, 0.0);
    }

    #[test]
    fn pack_current_lossless_limit() {
        let layout = PackLayout::default();
        let p = pack_current(401.2 * 64.0, &layout, 34.8, 3.4, |_| 3.4).unwrap();
        assert_abs_diff_eq!(p.i_b, 64.0, epsilon = 1e-9);
    }

    #[test]
    fn pack_current_consistent_with_resistance() {
        let layout = PackLayout::default();
        let pt = point(3.7, 5e-3);
        let st = CellElecState::at_rest(0.8);
        let p = pack_current(300e3, &layout, 34.8, 3.7, |i| terminal_voltage(&st, i, &pt)).unwrap();
        let u = terminal_voltage(&st, p.i_b / 64.0, &pt);
        assert!((p.i_b * 118.0 * u - 300e3).abs() < 1e-3);
        assert!((u - p.u_terminal).abs() < 1e-6);
    }

    #[test]
    fn pack_current_cap() {
        let layout = PackLayout::default();
        let demand = 64.0 * 34.8 * 1.05 * 118.0 * 3.4;
        assert!(matches!(
            pack_current(demand, &layout, 34.8, 3.4, |_| 3.4),
            Err(ModelError::LimitExceeded { .. })
        ));
    }

    #[test]
    fn cell_current_split() {
        assert_eq!(cell_current(64.0, 64), 1.0);
        assert_eq!(cell_current(0.0, 64), 0.0);
        assert_abs_diff_eq!(cell_current(34.8 * 64.0, 64), 34.8, epsilon = 1e-12);
    }

    #[test]
    fn terminal_voltage_cases() {
        let st = CellElecState::at_rest(0.5);
        let p = point(3.4, 5e-3);
        assert_eq!(terminal_voltage(&st, 0.0, &p), 3.4);
        assert_abs_diff_eq!(terminal_voltage(&st, 10.0, &p), 3.35, epsilon = 1e-12);
        let t = EcmTables::synthetic_default();
        let cell = CellParams::default();
        let deep = CellElecState::at_rest(0.0);
        assert!(terminal_voltage_checked(&deep, 10.0, &t, &cell).is_err());
    }

    #[test]
    fn rc_equilibrium_and_fixed_point() {
        let p = point(3.7, 5e-3);
        let rest = CellElecState::at_rest(0.5);
        assert_eq!(step_rc(&rest, 0.0, 1.0, &p), rest);
        let i = 20.0;
        let steady = CellElecState { soc: 0.5, u1: i * p.r1, u2: i * p.r2 };
        let next = step_rc(&steady, i, 1.0, &p);
        assert!((next.u1 - steady.u1).abs() < 1e-9);
        assert!((next.u2 - steady.u2).abs() < 1e-9);
    }

    #[test]
    fn rc_matches_analytic_charging() {
        // Oracle: U(t) = I R (1 - exp(-t / RC)).
        let p = point(3.7, 5e-3);
        let tau = p.r1 * p.c1;
        let i = 10.0;
        let mut st = CellElecState::at_rest(0.5);
        let steps = (5.0 * tau) as usize;
        for k in 1..=steps {
            st = step_rc(&st, i, 1.0, &p);
            let exact = i * p.r1 * (1.0 - (-(k as f64) / tau).exp());
            assert!((st.u1 - exact).abs() <= 1e-3 * exact, "step {k}");
        }
        assert!((st.u1 - i * p.r1).abs() < 0.01 * i * p.r1);
    }

    #[test]
    fn soc_full_c_rate_hour() {
        let st = CellElecState::at_rest(1.0);
        let (next, flags) = step_soc(&st, 11.84, 3600.0, 11.84, 0.15);
        assert_abs_diff_eq!(next.soc, 0.0, epsilon = 1e-12);
        assert!(flags.below_floor);
        let (same, _) = step_soc(&st, 0.0, 1.0, 11.84, 0.15);
        assert_eq!(same, st);
    }

    #[test]
    fn soc_floor_flag() {
        let st = CellElecState::at_rest(0.15 + 1e-6);
        let (_, f) = step_soc(&st, 11.84, 1.0, 11.84, 0.15);
        assert!(f.below_floor);
        assert!(!f.clamped);
    }

    #[test]
    fn internal_power_cases() {
        assert_eq!(internal_power(3.4, 0.0, 118), 0.0);
        assert_abs_diff_eq!(internal_power(3.4, 64.0, 118), 25.67e3, epsilon = 10.0);
    }

    #[test]
    fn energy_steps() {
        let e = PackEnergy::charged(304e3 * 3600.0, 1.0);
        assert_eq!(e.e_b, e.e_b_max);
        let (same, _) = step_energy(&e, 0.0, 1.0, 0.15);
        assert_eq!(same, e);
        let (after, floor) = step_energy(&e, 10e3, 3600.0, 0.15);
        assert_abs_diff_eq!(e.e_b - after.e_b, 10e3 * 3600.0, epsilon = 1e-6);
        assert!(!floor);
    }

    #[test]
    fn nominal_pack_stats() {
        let s = pack_nominal_stats(&PackLayout::default(), &CellParams::default());
        assert_abs_diff_eq!(s.u_nom, 401.2, epsilon = 1e-9);
        assert!((s.e_max_wh / 304e3 - 1.0).abs() < 0.005);
        assert_abs_diff_eq!(s.m_cells, 777.856, epsilon = 1e-9);
        assert_abs_diff_eq!(s.m_b, 856.0, epsilon = 1.0);

        let one = pack_nominal_stats(&PackLayout::new(1, 1).unwrap(), &CellParams::default());
        assert_abs_diff_eq!(one.u_nom, 3.4, epsilon = 1e-12);
        assert_abs_diff_eq!(one.e_max_wh, 40.256, epsilon = 1e-9);
        assert_abs_diff_eq!(one.m_cells, 0.103, epsilon = 1e-12);
        assert_abs_diff_eq!(one.m_b, 0.1133, epsilon = 1e-12);
        assert!(PackLayout::new(0, 64).is_err());
    }

    #[test]
    fn default_cell_is_valid() {
        let c = CellParams::default();
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.biot = 0.2;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(
            i in 0.0f64..40.0, r0 in 0.0f64..0.05, u1 in 0.0f64..0.2, u2 in 0.0f64..0.2, soc in 0.0f64..1.0,
        ) {
            let t = EcmTables::synthetic_default();
            let uoc = ocv(soc, &t);
            let st = CellElecState { soc, u1, u2 };
            let mut p = t.at_soc(soc);
            p.r0 = r0;
            let u = terminal_voltage(&st, i, &p);
            prop_assert!(uoc * i - u * i >= 0.0);
        }

        #[test]
        fn doubling_parallel_halves_cell_current(i_b in 0.0f64..3000.0, n_p in 1usize..100) {
            prop_assert_eq!(cell_current(i_b, 2 * n_p), 0.5 * cell_current(i_b, n_p));
        }
    }
}
