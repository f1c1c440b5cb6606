//! Longitudinal point-mass thrust and the propeller/motor/inverter power chain.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};
use crate::interp::{lerp_table, strictly_increasing};

pub const GRAVITY: f64 = 9.81;

pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * std::f64::consts::PI / 30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftParams {
    pub m_empty: f64,
    pub m_max: f64,
    pub wing_area: f64,
    pub c_d: f64,
    /// Lift coefficient. Carried with the airframe data; the thrust balance does not use it.
    pub c_l: f64,
    pub alpha: f64,
    pub alpha_max: f64,
    pub gamma_max: f64,
    pub gamma_min: f64,
    pub g: f64,
}

impl Default for AircraftParams {
    fn default() -> Self {
        Self {
            m_empty: 1489.0,
            m_max: 3000.0,
            wing_area: 20.8,
            c_d: 0.03,
            c_l: 0.85,
            alpha: 0.0,
            alpha_max: 4f64.to_radians(),
            gamma_max: 8f64.to_radians(),
            gamma_min: (-1f64).to_radians(),
            g: GRAVITY,
        }
    }
}

impl AircraftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_empty > 0.0) || !(self.wing_area > 0.0) {
            return Err(invalid("empty mass and wing area must be positive"));
        }
        if !(0.0..=1.0).contains(&self.c_d) {
            return Err(invalid("drag coefficient must lie in [0, 1]"));
        }
        if self.alpha.abs() > self.alpha_max + 1e-12 {
            return Err(invalid(format!(
                "angle of attack {} rad exceeds maximum {} rad",
                self.alpha, self.alpha_max
            )));
        }
        if self.gamma_min > self.gamma_max {
            return Err(invalid("gamma_min must not exceed gamma_max"));
        }
        Ok(())
    }
}

/// Motor efficiency as a function of shaft torque at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorEfficiencyMap {
    torque: Vec<f64>,
    eta: Vec<f64>,
}

impl MotorEfficiencyMap {
    pub fn new(torque: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if torque.is_empty() || torque.len() != eta.len() {
            return Err(invalid("efficiency map needs matching, non-empty columns"));
        }
        if !strictly_increasing(&torque) {
            return Err(invalid("efficiency map torque must be strictly increasing"));
        }
        if eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(invalid("efficiency values must lie in (0, 1]"));
        }
        Ok(Self { torque, eta })
    }

    pub fn flat(eta: f64, tau_max: f64) -> Result<Self> {
        Self::new(vec![0.0, tau_max], vec![eta, eta])
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.torque[0], self.torque[self.torque.len() - 1])
    }

    /// Efficiency at `tau` and whether the lookup was clamped to the table edge.
    pub fn efficiency(&self, tau: f64) -> (f64, bool) {
        let (lo, hi) = self.domain();
        let clamped = tau < lo || tau > hi;
        (lerp_table(&self.torque, &self.eta, tau), clamped)
    }

    /// Reads the `tau_Nm,eta` CSV format.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ModelError::Data { row: 1, message: e.to_string() })?
            .clone();
        let ti = headers.iter().position(|h| h == "tau_Nm");
        let ei = headers.iter().position(|h| h == "eta");
        let (ti, ei) = ti.zip(ei).ok_or(ModelError::Data {
            row: 1,
            message: "efficiency header must contain tau_Nm and eta".into(),
        })?;
        let (mut tau, mut eta) = (Vec::new(), Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| ModelError::Data { row, message: e.to_string() })?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| ModelError::Data { row, message: e.to_string() })
            };
            tau.push(get(ti)?);
            eta.push(get(ei)?);
        }
        Self::new(tau, eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowertrainParams {
    pub eta_p: f64,
    pub omega: f64,
    pub tau_max: f64,
    pub p_motor_max: f64,
    pub n_motors: u32,
    /// Quadratic inverter loss coefficient in 1/W.
    pub beta: f64,
    pub eta_m: MotorEfficiencyMap,
    pub p_aux: f64,
}

impl Default for PowertrainParams {
    fn default() -> Self {
        let omega = rpm_to_rad_s(4000.0);
        let p_motor_max = 250e3;
        let n_motors = 2;
        // Constant shaft speed: the torque limit coincides with the installed power limit.
        let tau_max = n_motors as f64 * p_motor_max / omega;
        Self {
            eta_p: 0.71,
            omega,
            tau_max,
            p_motor_max,
            n_motors,
            beta: 1e-7,
            eta_m: MotorEfficiencyMap::flat(0.95, tau_max).expect("valid flat map"),
            p_aux: 4e3,
        }
    }
}

impl PowertrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_p > 0.0 && self.eta_p <= 1.0) {
            return Err(invalid("propeller efficiency must lie in (0, 1]"));
        }
        if !(self.omega > 0.0) {
            return Err(invalid("propeller speed must be positive"));
        }
        if self.beta < 0.0 {
            return Err(invalid("inverter loss coefficient must be non-negative"));
        }
        if self.p_aux < 0.0 || self.n_motors == 0 {
            return Err(invalid("auxiliary power must be non-negative and n_motors >= 1"));
        }
        Ok(())
    }

    pub fn installed_power(&self) -> f64 {
        self.n_motors as f64 * self.p_motor_max
    }
}

/// Required propeller thrust in N.
pub fn thrust(rho: f64, v: f64, vdot: f64, gamma: f64, m: f64, params: &AircraftParams) -> Result<f64> {
    if params.alpha.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(invalid("angle of attack must be below 90 degrees"));
    }
    if !(rho > 0.0) || !(m > 0.0) || v < 0.0 {
        return Err(invalid("thrust requires rho > 0, m > 0, v >= 0"));
    }
    let drag = 0.5 * rho * v * v * params.c_d * params.wing_area;
    Ok((drag + m * (params.g * gamma.sin() + vdot)) / params.alpha.cos())
}

/// Total aircraft mass; errors with the overshoot when above `m_max`.
pub fn total_mass(m_empty: f64, m_b: f64, m_btms: f64, m_max: f64) -> Result<f64> {
    if m_empty < 0.0 || m_b < 0.0 || m_btms < 0.0 {
        return Err(invalid("masses must be non-negative"));
    }
    let m = m_empty + m_b + m_btms;
    if m > m_max {
        return Err(ModelError::MassExceeded { mass: m, max: m_max });
    }
    Ok(m)
}

/// Motor shaft power `F_T v / eta_p`, capped by installed power.
pub fn motor_power(thrust: f64, v: f64, params: &PowertrainParams) -> Result<f64> {
    if !(params.eta_p > 0.0 && params.eta_p <= 1.0) {
        return Err(invalid("propeller efficiency must lie in (0, 1]"));
    }
    let p = thrust * v / params.eta_p;
    let cap = params.installed_power();
    if p > cap {
        return Err(ModelError::LimitExceeded { quantity: "motor power", value: p, limit: cap });
    }
    Ok(p)
}

pub fn motor_torque(p_m: f64, omega: f64, tau_max: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(invalid("rotational speed must be positive"));
    }
    let tau = p_m / omega;
    if tau > tau_max {
        return Err(ModelError::LimitExceeded { quantity: "motor torque", value: tau, limit: tau_max });
    }
    Ok(tau)
}

/// Inverter AC output power; the flag reports a clamped efficiency lookup.
pub fn ac_power(p_m: f64, tau: f64, map: &MotorEfficiencyMap) -> (f64, bool) {
    let (eta, clamped) = map.efficiency(tau);
    (p_m / eta, clamped)
}

pub fn dc_power(p_ac: f64, beta: f64) -> f64 {
    beta * p_ac * p_ac + p_ac
}

/// Power flows for one sample of the backward-facing chain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerDemand {
    pub thrust: f64,
    pub p_motor: f64,
    pub torque: f64,
    pub p_ac: f64,
    pub p_dc: f64,
    pub eta_clamped: bool,
}

/// Runs thrust through to DC bus power. Negative shaft power is not
/// recovered (no regeneration) and is floored at zero.
pub fn power_chain(
    rho: f64,
    v: f64,
    vdot: f64,
    gamma: f64,
    m: f64,
    aircraft: &AircraftParams,
    pt: &PowertrainParams,
) -> Result<PowerDemand> {
    let f_t = thrust(rho, v, vdot, gamma, m, aircraft)?;
    let p_m = motor_power(f_t, v, pt)?.max(0.0);
    let tau = motor_torque(p_m, pt.omega, pt.tau_max)?;
    let (p_ac, eta_clamped) = ac_power(p_m, tau, &pt.eta_m);
    Ok(PowerDemand {
        thrust: f_t,
        p_motor: p_m,
        torque: tau,
        p_ac,
        p_dc: dc_power(p_ac, pt.beta),
        eta_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cruise_aircraft() -> AircraftParams {
        AircraftParams::default()
    }

    #[test]
    fn thrust_vanishes_at_rest() {
        assert_eq!(thrust(1.2, 0.0, 0.0, 0.0, 2732.0, &cruise_aircraft()).unwrap(), 0.0);
    }

    #[test]
    fn thrust_level_cruise() {
        let f = thrust(1.1673, 50.0, 0.0, 0.0, 2732.0, &cruise_aircraft()).unwrap();
        assert_abs_diff_eq!(f, 910.5, epsilon = 0.5);
    }

    #[test]
    fn thrust_climb_at_eight_degrees() {
        let f = thrust(1.1673, 50.0, 0.0, 8f64.to_radians(), 2732.0, &cruise_aircraft()).unwrap();
        assert_abs_diff_eq!(f, 4640.6, epsilon = 1.0);
    }

    #[test]
    fn thrust_rejects_right_angle_alpha() {
        let mut a = cruise_aircraft();
        a.alpha = std::f64::consts::FRAC_PI_2;
        assert!(thrust(1.2, 50.0, 0.0, 0.0, 2000.0, &a).is_err());
    }

    #[test]
    fn mass_sums_and_caps() {
        assert_eq!(total_mass(1489.0, 856.0, 0.0, 3000.0).unwrap(), 2345.0);
        assert_eq!(total_mass(1489.0, 856.0, 387.0, 3000.0).unwrap(), 2732.0);
        assert_eq!(total_mass(0.0, 0.0, 0.0, 3000.0).unwrap(), 0.0);
        match total_mass(1489.0, 1200.0, 400.0, 3000.0) {
            Err(ModelError::MassExceeded { mass, max }) => assert_abs_diff_eq!(mass - max, 89.0, epsilon = 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn motor_power_cases() {
        let pt = PowertrainParams::default();
        assert_abs_diff_eq!(motor_power(910.5, 50.0, &pt).unwrap(), 64.12e3, epsilon = 50.0);
        assert_eq!(motor_power(0.0, 50.0, &pt).unwrap(), 0.0);
        assert!(matches!(motor_power(1e6, 50.0, &pt), Err(ModelError::LimitExceeded { .. })));
    }

    #[test]
    fn motor_torque_cases() {
        let omega = rpm_to_rad_s(4000.0);
        assert_abs_diff_eq!(omega, 418.88, epsilon = 0.01);
        assert_abs_diff_eq!(motor_torque(64.12e3, omega, 1e4).unwrap(), 153.1, epsilon = 0.2);
        assert_eq!(motor_torque(0.0, omega, 1e4).unwrap(), 0.0);
        assert!(motor_torque(1.0, 0.0, 1e4).is_err());
        assert!(motor_torque(1e6, omega, 100.0).is_err());
    }

    #[test]
    fn ac_power_cases() {
        let unit = MotorEfficiencyMap::flat(1.0, 1000.0).unwrap();
        assert_eq!(ac_power(5e4, 100.0, &unit).0, 5e4);
        let flat = MotorEfficiencyMap::flat(0.95, 1000.0).unwrap();
        assert_abs_diff_eq!(ac_power(64.12e3, 153.1, &flat).0, 67.49e3, epsilon = 50.0);
        assert_eq!(ac_power(0.0, 0.0, &flat).0, 0.0);
    }

    #[test]
    fn efficiency_clamps_outside_table() {
        let map = MotorEfficiencyMap::new(vec![10.0, 100.0], vec![0.8, 0.9]).unwrap();
        assert_eq!(map.efficiency(5.0), (0.8, true));
        assert_eq!(map.efficiency(200.0), (0.9, true));
        let (e, c) = map.efficiency(55.0);
        assert_abs_diff_eq!(e, 0.85, epsilon = 1e-12);
        assert!(!c);
    }

    #[test]
    fn dc_power_cases() {
        assert_eq!(dc_power(5e4, 0.0), 5e4);
        assert_abs_diff_eq!(dc_power(67.49e3, 1e-7), 67.95e3, epsilon = 10.0);
        assert_eq!(dc_power(0.0, 1e-7), 0.0);
    }

    #[test]
    fn lossless_chain_returns_thrust_power() {
        let mut pt = PowertrainParams::default();
        pt.eta_p = 1.0;
        pt.beta = 0.0;
        pt.eta_m = MotorEfficiencyMap::flat(1.0, pt.tau_max).unwrap();
        let a = cruise_aircraft();
        let d = power_chain(1.1673, 50.0, 0.0, 0.0, 2732.0, &a, &pt).unwrap();
        assert_eq!(d.p_dc, d.thrust * 50.0);
    }

    #[test]
    fn efficiency_csv() {
        let data = "tau_Nm,eta\n0,0.9\n500,0.95\n";
        let m = MotorEfficiencyMap::from_csv_reader(data.as_bytes()).unwrap();
        assert_eq!(m.domain(), (0.0, 500.0));
        let bad = "tau_Nm,eta\n0,0.9\n500,x\n";
        assert!(matches!(
            MotorEfficiencyMap::from_csv_reader(bad.as_bytes()),
            Err(ModelError::Data { row: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn thrust_monotone(
            rho in 0.3f64..1.3, v in 0.0f64..100.0, vdot in -2.0f64..2.0,
            gamma in -0.1f64..0.15, m in 500.0f64..3000.0,
            dv in 0.01f64..1.0, dg in 0.001f64..0.05, dm in 1.0f64..200.0,
        ) {
            let a = cruise_aircraft();
            let base = thrust(rho, v, vdot, gamma, m, &a).unwrap();
            prop_assert!(thrust(rho, v, vdot + dv, gamma, m, &a).unwrap() > base);
            prop_assert!(thrust(rho, v, vdot, gamma + dg, m, &a).unwrap() > base);
            // Mass enters through g sin(gamma) + vdot, so monotone only when that is positive.
            let load = a.g * gamma.sin() + vdot;
            if load > 0.0 {
                prop_assert!(thrust(rho, v, vdot, gamma, m + dm, &a).unwrap() > base);
            }
        }

        #[test]
        fn dc_dominates_ac(p_ac in 0.0f64..1e6, beta in 0.0f64..1e-6) {
            let p_dc = dc_power(p_ac, beta);
            prop_assert!(p_dc >= p_ac);
            if beta == 0.0 || p_ac == 0.0 {
                prop_assert_eq!(p_dc, p_ac);
            }
        }

        #[test]
        fn torque_times_speed_is_power(p in 0.0f64..5e5, omega in 1.0f64..1000.0) {
            let tau = motor_torque(p, omega, f64::INFINITY).unwrap();
            prop_assert!((tau * omega - p).abs() <= 1e-9 * p.max(1.0));
        }
    }
}
