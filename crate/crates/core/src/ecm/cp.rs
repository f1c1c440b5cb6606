use crate::error::{invalid, Result};
use crate::interp::trapezoid;

/// Specific heat capacity from an adiabatic heating window.
///
/// `Q = -∫ U I dt` (trapezoidal) with the cycler sign convention, where
/// discharge current is negative, and `c_p = Q / (m (T_end - T0))`.
pub fn estimate_cp(voltage: &[f64], current: &[f64], dt: f64, m_cell: f64, t0_c: f64, t_end_c: f64) -> Result<f64> {
    if voltage.len() != current.len() || voltage.len() < 2 {
        return Err(invalid("voltage and current series must be aligned with at least 2 samples"));
    }
    if !(dt > 0.0) || !(m_cell > 0.0) {
        return Err(invalid("dt and cell mass must be positive"));
    }
    let dtemp = t_end_c - t0_c;
    if dtemp == 0.0 {
        return Err(invalid("zero temperature rise"));
    }
    let p: Vec<f64> = voltage.iter().zip(current).map(|(u, i)| u * i).collect();
    let q = -trapezoid(&p, dt);
    let cp = q / (m_cell * dtemp);
    if !(cp > 0.0) {
        return Err(invalid(format!("non-positive heat capacity {cp} J/(kg K); check the current sign")));
    }
    Ok(cp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(u: f64, q: f64) -> (Vec<f64>, Vec<f64>) {
        let n = 601;
        let i = -q / (u * 600.0);
        (vec![u; n], vec![i; n])
    }

    #[test]
    fn back_solved_fixture() {
        let (u, i) = fixture(3.4, 106.6);
        let cp = estimate_cp(&u, &i, 1.0, 0.103, 23.0, 24.0).unwrap();
        assert!((cp - 1035.0).abs() < 0.5, "{cp}");
    }

    #[test]
    fn zero_current_rejected() {
        let u = vec![3.4; 601];
        let i = vec![0.0; 601];
        assert!(estimate_cp(&u, &i, 1.0, 0.103, 23.0, 23.0).is_err());
        assert!(estimate_cp(&u, &i, 1.0, 0.103, 23.0, 24.0).is_err());
    }

    #[test]
    fn scaling_leaves_cp_unchanged() {
        let (u, i) = fixture(3.4, 106.6);
        let a = estimate_cp(&u, &i, 1.0, 0.103, 23.0, 24.0).unwrap();
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let b = estimate_cp(&u2, &i, 1.0, 0.103, 23.0, 25.0).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
