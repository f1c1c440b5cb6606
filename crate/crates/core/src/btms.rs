//! Cold-plate cooling loop: laminar plate-duct convection, heat pick-up with
//! fluid advection along each channel, electrical draw and mass of the
//! vapour-cycle machine.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};
use crate::thermal::c_to_k;

/// Fully developed Nusselt number for a plate duct heated on one wall.
pub const NU_DEVELOPED: f64 = 4.816;
pub const RE_LAMINAR: f64 = 2300.0;
pub const RE_VALID_MAX: f64 = 1e4;

/// Coolant properties. `k` is the thermal conductivity in W/(m K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    pub name: String,
    pub nu: f64,
    pub k: f64,
    pub rho: f64,
    pub cp: f64,
    pub pr: f64,
    /// Largest admissible total volumetric flow in m^3/s.
    pub vdot_max: f64,
}

impl FluidProps {
    pub fn water() -> Self {
        Self { name: "water".into(), nu: 1.002e-6, k: 0.6, rho: 1000.0, cp: 4182.0, pr: 6.9, vdot_max: 0.0045 }
    }

    pub fn air() -> Self {
        Self { name: "air".into(), nu: 1.48e-5, k: 0.03, rho: 1.292, cp: 1006.0, pr: 0.71, vdot_max: 0.0625 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "water" => Some(Self::water()),
            "air" => Some(Self::air()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.nu, self.k, self.rho, self.cp, self.pr, self.vdot_max].iter().any(|x| !(*x > 0.0)) {
            return Err(invalid(format!("fluid '{}' needs positive properties", self.name)));
        }
        if !(self.pr > 0.6) {
            return Err(ModelError::CorrelationValidity(format!("Pr = {} must exceed 0.6", self.pr)));
        }
        Ok(())
    }
}

/// Plate-duct geometry of one cooling channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    /// Plate spacing; the hydraulic diameter is twice this.
    pub s_ch: f64,
    pub w_ch: f64,
    pub length: f64,
    /// Cell-to-plate contact area per cell.
    pub a_contact: f64,
    pub s_t: Option<f64>,
    pub s_l: Option<f64>,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self { s_ch: 3e-3, w_ch: 0.0542, length: 1.6, a_contact: 0.139 * 0.0542, s_t: None, s_l: None }
    }
}

impl ChannelGeometry {
    pub fn d_h(&self) -> f64 {
        2.0 * self.s_ch
    }

    pub fn a_cross(&self) -> f64 {
        self.s_ch * self.w_ch
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_ch > 0.0 && self.w_ch > 0.0 && self.length > 0.0 && self.a_contact > 0.0) {
            return Err(invalid("channel dimensions and contact area must be positive"));
        }
        if let (Some(st), Some(sl)) = (self.s_t, self.s_l) {
            let a = st / self.d_h();
            let b = sl / self.d_h();
            if !(a < 1.2 && b / a < 1.0) {
                return Err(ModelError::CorrelationValidity(format!(
                    "pitch ratios a = {a}, b/a = {} outside a < 1.2, b/a < 1",
                    b / a
                )));
            }
        }
        Ok(())
    }
}

/// Design vector `(T_fl, Vdot, P_rated)` plus the fixed VCM figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtmsDesign {
    pub t_fl_k: f64,
    /// Total flow, split equally over all channels.
    pub vdot: f64,
    /// Rated cooling power in W.
    pub p_rated: f64,
    pub k_btms: f64,
    /// Cooling power per VCM mass, W/kg.
    pub rho_p: f64,
    pub m_loop: f64,
}

impl Default for BtmsDesign {
    fn default() -> Self {
        Self { t_fl_k: c_to_k(24.78), vdot: 3.96e-4, p_rated: 9.9e3, k_btms: 3.0, rho_p: 100.0, m_loop: 288.0 }
    }
}

impl BtmsDesign {
    pub fn validate(&self, fluid: &FluidProps) -> Result<()> {
        if !(self.k_btms > 0.0 && self.rho_p > 0.0) {
            return Err(invalid("K_BTMS and rho_P must be positive"));
        }
        if !(self.p_rated >= 0.0 && self.m_loop >= 0.0 && self.t_fl_k > 0.0) {
            return Err(invalid("rated power and loop mass must be non-negative"));
        }
        if !(self.vdot >= 0.0 && self.vdot <= fluid.vdot_max) {
            return Err(ModelError::LimitExceeded { quantity: "coolant flow", value: self.vdot, limit: fluid.vdot_max });
        }
        Ok(())
    }
}

pub fn fluid_velocity(vdot: f64, geom: &ChannelGeometry) -> Result<f64> {
    if vdot < 0.0 {
        return Err(invalid("volumetric flow must be non-negative"));
    }
    Ok(vdot / geom.a_cross())
}

/// Reynolds number; the flag warns about leaving the laminar range.
pub fn reynolds(v: f64, geom: &ChannelGeometry, fluid: &FluidProps) -> Result<(f64, bool)> {
    if v < 0.0 {
        return Err(invalid("flow velocity must be non-negative"));
    }
    let re = geom.d_h() * v / fluid.nu;
    if re >= RE_VALID_MAX {
        return Err(ModelError::CorrelationValidity(format!("Re = {re:.1} must stay below 1e4")));
    }
    Ok((re, re > RE_LAMINAR))
}

/// Mean Nusselt number `(Nu1^3 + Nu2^3)^(1/3)` with the entrance term
/// `Nu2 = 1.841 (Re Pr D_h / l)^(1/3)`.
pub fn nusselt(re: f64, pr: f64, geom: &ChannelGeometry) -> Result<f64> {
    if !(pr > 0.6) {
        return Err(ModelError::CorrelationValidity(format!("Pr = {pr} must exceed 0.6")));
    }
    let nu2 = 1.841 * (re * pr * geom.d_h() / geom.length).cbrt();
    Ok((NU_DEVELOPED.powi(3) + nu2.powi(3)).cbrt())
}

pub fn h_btms(nu: f64, fluid: &FluidProps, geom: &ChannelGeometry) -> f64 {
    fluid.k * nu / geom.d_h()
}

/// Heat removed from one cell, positive when the cell is hotter than the fluid.
pub fn q_btms_cell(t_cell_k: f64, t_fl_k: f64, h: f64, area: f64) -> f64 {
    area * h * (t_cell_k - t_fl_k)
}

/// Fluid temperature after picking up `q` at flow `vdot`.
pub fn advect_fluid(t_in_k: f64, q: f64, vdot: f64, fluid: &FluidProps) -> Result<f64> {
    if vdot <= 0.0 {
        if q == 0.0 {
            return Ok(t_in_k);
        }
        return Err(invalid("stagnant coolant cannot carry heat"));
    }
    Ok(t_in_k + q / (fluid.rho * vdot * fluid.cp))
}

/// Electrical draw of the VCM for a requested heat removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtmsPower {
    pub p_elec: f64,
    /// Heat actually removed after saturation.
    pub q_removed: f64,
    /// Factor applied to the requested removal, 1 below saturation.
    pub scale: f64,
    pub saturated: bool,
}

pub fn btms_power(q_total: f64, design: &BtmsDesign) -> BtmsPower {
    let q = q_total.max(0.0);
    if q > design.p_rated {
        let scale = if q > 0.0 { design.p_rated / q } else { 0.0 };
        return BtmsPower { p_elec: design.p_rated / design.k_btms, q_removed: design.p_rated, scale, saturated: true };
    }
    BtmsPower { p_elec: q / design.k_btms, q_removed: q, scale: 1.0, saturated: false }
}

pub fn btms_mass(design: &BtmsDesign) -> f64 {
    design.m_loop + design.p_rated / design.rho_p
}

/// Convective state of one channel when the total flow is split over `n_channels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFlow {
    pub vdot: f64,
    pub velocity: f64,
    pub re: f64,
    pub nu: f64,
    pub h: f64,
    pub laminar_warning: bool,
}

pub fn channel_flow(design: &BtmsDesign, fluid: &FluidProps, geom: &ChannelGeometry, n_channels: usize) -> Result<ChannelFlow> {
    if n_channels == 0 {
        return Err(invalid("at least one channel required"));
    }
    let vdot = design.vdot / n_channels as f64;
    let velocity = fluid_velocity(vdot, geom)?;
    let (re, laminar_warning) = reynolds(velocity, geom, fluid)?;
    let nu = nusselt(re, fluid.pr, geom)?;
    Ok(ChannelFlow { vdot, velocity, re, nu, h: h_btms(nu, fluid, geom), laminar_warning })
}

/// Result of marching fluid down one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPass {
    pub q_cell: Vec<f64>,
    /// Fluid temperature seen by each cell (its local inlet).
    pub t_fl_k: Vec<f64>,
    pub t_out_k: f64,
}

/// Cell-to-coolant conductance. Capped at the coolant capacity rate so that
/// no cell can heat the passing fluid beyond its own temperature.
pub fn cell_conductance(h: f64, area: f64, vdot: f64, fluid: &FluidProps) -> f64 {
    if vdot <= 0.0 {
        return 0.0;
    }
    (h * area).min(fluid.rho * fluid.cp * vdot)
}

/// Sequential heat pick-up along a channel at fixed cell temperatures, with
/// all removals multiplied by `scale`.
pub fn channel_pass(
    t_cells_k: &[f64],
    t_in_k: f64,
    h: f64,
    area: f64,
    vdot: f64,
    fluid: &FluidProps,
    scale: f64,
) -> Result<ChannelPass> {
    let g = cell_conductance(h, area, vdot, fluid);
    let mut t_fl = t_in_k;
    let mut out = ChannelPass { q_cell: Vec::with_capacity(t_cells_k.len()), t_fl_k: Vec::new(), t_out_k: t_in_k };
    for &tc in t_cells_k {
        let q = scale * g * (tc - t_fl);
        out.t_fl_k.push(t_fl);
        out.q_cell.push(q);
        t_fl = advect_fluid(t_fl, q, vdot, fluid)?;
    }
    out.t_out_k = t_fl;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn velocity_examples() {
        let g = ChannelGeometry::default();
        assert_eq!(fluid_velocity(0.0, &g).unwrap(), 0.0);
        assert_abs_diff_eq!(fluid_velocity(3.96e-4, &g).unwrap(), 2.435, epsilon = 0.01);
        assert!(fluid_velocity(-1e-5, &g).is_err());
    }

    #[test]
    fn reynolds_examples() {
        let g = ChannelGeometry::default();
        assert_eq!(reynolds(0.0, &g, &FluidProps::water()).unwrap().0, 0.0);
        // single-duct reading of the optimum flow breaks the correlation range
        assert!(matches!(reynolds(2.435, &g, &FluidProps::water()), Err(ModelError::CorrelationValidity(_))));
        let (re, warn) = reynolds(0.1, &g, &FluidProps::air()).unwrap();
        assert_abs_diff_eq!(re, 40.54, epsilon = 0.01);
        assert!(!warn);
        let (_, warn) = reynolds(0.5, &g, &FluidProps::water()).unwrap();
        assert!(warn);
    }

    #[test]
    fn nusselt_limits() {
        let g = ChannelGeometry::default();
        assert_eq!(nusselt(0.0, 6.9, &g).unwrap(), NU_DEVELOPED);
        // Re Pr D_h / l = 1000
        let re = 1000.0 * g.length / (g.d_h() * 6.9);
        // (4.816^3 + 18.41^3)^(1/3) = 18.519
        assert_abs_diff_eq!(nusselt(re, 6.9, &g).unwrap(), 18.519, epsilon = 0.001);
        assert!(nusselt(10.0, 0.5, &g).is_err());
    }

    #[test]
    fn h_examples() {
        let g = ChannelGeometry::default();
        let w = FluidProps::water();
        assert_abs_diff_eq!(h_btms(NU_DEVELOPED, &w, &g), 481.6, epsilon = 1e-9);
        assert_abs_diff_eq!(h_btms(2.0 * NU_DEVELOPED, &w, &g), 963.2, epsilon = 1e-9);
        let ratio = h_btms(10.0, &w, &g) / h_btms(10.0, &FluidProps::air(), &g);
        assert_abs_diff_eq!(ratio, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn cell_heat_and_advection() {
        assert_eq!(q_btms_cell(300.0, 300.0, 481.6, 7.53e-3), 0.0);
        assert_abs_diff_eq!(q_btms_cell(310.0, 300.0, 481.6, 7.53e-3), 36.3, epsilon = 0.1);
        assert!(q_btms_cell(290.0, 300.0, 481.6, 7.53e-3) < 0.0);
        let w = FluidProps::water();
        assert_eq!(advect_fluid(300.0, 0.0, 3.96e-4, &w).unwrap(), 300.0);
        assert_abs_diff_eq!(advect_fluid(300.0, 36.3, 3.96e-4, &w).unwrap() - 300.0, 0.0219, epsilon = 1e-4);
        assert!(advect_fluid(300.0, 1.0, 0.0, &w).is_err());
    }

    #[test]
    fn power_and_mass() {
        let d = BtmsDesign::default();
        assert_eq!(btms_power(0.0, &d).p_elec, 0.0);
        assert_abs_diff_eq!(btms_power(9.9e3, &d).p_elec, 3.3e3, epsilon = 1e-9);
        let s = btms_power(19.8e3, &d);
        assert!(s.saturated);
        assert_abs_diff_eq!(s.scale, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(btms_power(4e3, &d).p_elec * 2.0, btms_power(8e3, &d).p_elec, epsilon = 1e-9);
        assert_abs_diff_eq!(d.p_rated / d.rho_p, 99.0, epsilon = 1e-12);
        assert_abs_diff_eq!(btms_mass(&d), 387.0, epsilon = 1e-12);
        let z = BtmsDesign { p_rated: 0.0, m_loop: 0.0, ..d };
        assert_eq!(btms_mass(&z), 0.0);
    }

    #[test]
    fn split_flow_is_laminar() {
        let f = channel_flow(&BtmsDesign::default(), &FluidProps::water(), &ChannelGeometry::default(), 118).unwrap();
        assert_abs_diff_eq!(f.re, 123.6, epsilon = 0.2);
        assert!(!f.laminar_warning);
        let zero = BtmsDesign { vdot: 0.0, ..BtmsDesign::default() };
        let f0 = channel_flow(&zero, &FluidProps::water(), &ChannelGeometry::default(), 118).unwrap();
        assert_eq!(f0.nu, NU_DEVELOPED);
    }

    #[test]
    fn pitch_ratio_validity() {
        let mut g = ChannelGeometry { s_t: Some(6e-3), s_l: Some(3e-3), ..Default::default() };
        assert!(g.validate().is_ok());
        g.s_t = Some(9e-3);
        assert!(g.validate().is_err());
    }

    proptest! {
        #[test]
        fn channel_conserves_energy_and_cools_less_downstream(
            t_cell in 300.0f64..340.0,
            h in 10.0f64..2000.0,
            t_in in 280.0f64..300.0,
            vdot in 1e-7f64..1e-4,
            n in 1usize..80,
        ) {
            let w = FluidProps::water();
            let cells = vec![t_cell; n];
            let p = channel_pass(&cells, t_in, h, 7.53e-3, vdot, &w, 1.0).unwrap();
            let sum: f64 = p.q_cell.iter().sum();
            let carried = w.rho * vdot * w.cp * (p.t_out_k - t_in);
            prop_assert!((sum - carried).abs() <= 1e-9 * sum.abs().max(1e-12));
            for j in 1..n {
                prop_assert!(p.t_fl_k[j] >= p.t_fl_k[j - 1]);
                prop_assert!(p.q_cell[j] <= p.q_cell[j - 1]);
            }
            prop_assert!(p.t_out_k <= t_cell + 1e-9);
        }
    }
}
