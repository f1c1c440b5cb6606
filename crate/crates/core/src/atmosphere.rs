//! Flight profiles, ISA troposphere density and derived kinematics.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};
use crate::interp::lerp_table;

const RHO_SEA_LEVEL: f64 = 1.225;
const TROPOSPHERE_TOP: f64 = 11_000.0;

/// Exogenous speed and altitude trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightProfile {
    dt: f64,
    v: Vec<f64>,
    h: Vec<f64>,
}

impl FlightProfile {
    /// Builds a profile from airspeed and altitude samples spaced `dt` apart.
    pub fn new(dt: f64, v: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("profile step must be positive, got {dt}")));
        }
        if v.len() != h.len() {
            return Err(invalid("speed and altitude series differ in length"));
        }
        if v.len() < 2 {
            return Err(invalid("flight profile needs at least 2 samples"));
        }
        if let Some(i) = v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(invalid(format!("negative or non-finite airspeed at sample {i}")));
        }
        if let Some(i) = h.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(invalid(format!("negative or non-finite altitude at sample {i}")));
        }
        Ok(Self { dt, v, h })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn speed(&self) -> &[f64] {
        &self.v
    }

    pub fn altitude(&self) -> &[f64] {
        &self.h
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Resamples onto a new uniform step by linear interpolation.
    pub fn resample(&self, dt: f64) -> Result<Self> {
        let t: Vec<f64> = (0..self.len()).map(|i| self.time(i)).collect();
        resample_uniform(&t, &self.v, &self.h, dt)
    }

    /// Reads the `t_s,v_mps[,h_m]` CSV format. A missing altitude column means
    /// ground level; a nonuniform time grid is resampled onto 1 s.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ModelError::Data { row: 1, message: e.to_string() })?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (ti, vi) = match (col("t_s"), col("v_mps")) {
            (Some(t), Some(v)) => (t, v),
            _ => {
                return Err(ModelError::Data {
                    row: 1,
                    message: "profile header must contain t_s and v_mps".into(),
                })
            }
        };
        let hi = col("h_m");

        let (mut t, mut v, mut h) = (Vec::new(), Vec::new(), Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| ModelError::Data { row, message: e.to_string() })?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| ModelError::Data { row, message: "missing column".into() })?
                    .parse::<f64>()
                    .map_err(|e| ModelError::Data { row, message: e.to_string() })
            };
            t.push(field(ti)?);
            v.push(field(vi)?);
            h.push(match hi {
                Some(i) => field(i)?,
                None => 0.0,
            });
        }
        if t.len() < 2 {
            return Err(invalid("flight profile needs at least 2 samples"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("profile time column must be strictly increasing"));
        }
        let dt0 = t[1] - t[0];
        let uniform = t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt0).abs() <= 1e-9 * dt0.max(1.0));
        if uniform && t[0] == 0.0 {
            FlightProfile::new(dt0, v, h)
        } else {
            resample_uniform(&t, &v, &h, 1.0)
        }
    }
}

fn resample_uniform(t: &[f64], v: &[f64], h: &[f64], dt: f64) -> Result<FlightProfile> {
    if !(dt > 0.0) {
        return Err(invalid("resample step must be positive"));
    }
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    let n = (span / dt + 1e-9).floor() as usize + 1;
    let (mut vs, mut hs) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let ti = t0 + i as f64 * dt;
        vs.push(lerp_table(t, v, ti));
        hs.push(lerp_table(t, h, ti));
    }
    FlightProfile::new(dt, vs, hs)
}

/// Acceleration and flight path angle per profile sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedKinematics {
    pub vdot: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DerivedKinematics {
    /// Fails on the first sample whose path angle leaves `[min, max]`.
    pub fn check_path_angle(&self, min: f64, max: f64) -> Result<()> {
        for (index, &gamma) in self.gamma.iter().enumerate() {
            if gamma < min - 1e-12 || gamma > max + 1e-12 {
                return Err(ModelError::PathAngleOutOfBounds { index, gamma, min, max });
            }
        }
        Ok(())
    }
}

/// ISA troposphere density in kg/m³.
pub fn air_density(h: f64) -> Result<f64> {
    if !(0.0..=TROPOSPHERE_TOP).contains(&h) {
        return Err(ModelError::AltitudeOutOfRange(h));
    }
    Ok(RHO_SEA_LEVEL * (1.0 - 2.25577e-5 * h).powf(4.25588))
}

fn central_difference(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| match i {
            0 => (x[1] - x[0]) / dt,
            i if i == n - 1 => (x[n - 1] - x[n - 2]) / dt,
            i => (x[i + 1] - x[i - 1]) / (2.0 * dt),
        })
        .collect()
}

/// Acceleration by central differences (one-sided at the ends) and path angle
/// `asin(hdot / v)`.
pub fn derive_kinematics(profile: &FlightProfile) -> Result<DerivedKinematics> {
    let vdot = central_difference(&profile.v, profile.dt);
    let hdot = central_difference(&profile.h, profile.dt);
    let mut gamma = Vec::with_capacity(profile.len());
    for (i, (&hd, &v)) in hdot.iter().zip(&profile.v).enumerate() {
        if hd.abs() > v {
            return Err(ModelError::UnphysicalClimb { index: i, climb_rate: hd, speed: v });
        }
        gamma.push(if v == 0.0 { 0.0 } else { (hd / v).asin() });
    }
    Ok(DerivedKinematics { vdot, gamma })
}

/// Level cruise at constant altitude and speed from t = 0.
pub fn make_cruise_profile(duration: f64, altitude: f64, speed: f64, dt: f64) -> Result<FlightProfile> {
    if !(duration > 0.0 && dt > 0.0) || altitude < 0.0 || speed < 0.0 {
        return Err(invalid("cruise duration and step must be positive; altitude and speed non-negative"));
    }
    let n = (duration / dt + 1e-9).floor() as usize + 1;
    let n = n.max(2);
    FlightProfile::new(dt, vec![speed; n], vec![altitude; n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sea_level_density() {
        assert_eq!(air_density(0.0).unwrap(), 1.225);
    }

    #[test]
    fn density_at_500m() {
        assert_abs_diff_eq!(air_density(500.0).unwrap(), 1.1673, epsilon = 5e-4);
    }

    #[test]
    fn density_rejects_negative_altitude() {
        assert!(matches!(air_density(-10.0), Err(ModelError::AltitudeOutOfRange(_))));
        assert!(air_density(11_001.0).is_err());
    }

    #[test]
    fn density_strictly_decreasing() {
        let rho: Vec<f64> = (0..100)
            .map(|i| air_density(i as f64 * 11_000.0 / 99.0).unwrap())
            .collect();
        assert!(rho.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn steady_cruise_has_zero_kinematics() {
        let p = make_cruise_profile(100.0, 500.0, 50.0, 1.0).unwrap();
        let k = derive_kinematics(&p).unwrap();
        assert!(k.vdot.iter().all(|&a| a == 0.0));
        assert!(k.gamma.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn climb_ramp_path_angle() {
        let n = 20;
        let h: Vec<f64> = (0..n).map(|i| 100.0 + i as f64).collect();
        let p = FlightProfile::new(1.0, vec![50.0; n], h).unwrap();
        let k = derive_kinematics(&p).unwrap();
        for g in k.gamma {
            assert_abs_diff_eq!(g, (1.0f64 / 50.0).asin(), epsilon = 1e-12);
            assert_abs_diff_eq!(g, 0.02000, epsilon = 5e-6);
        }
    }

    #[test]
    fn unphysical_climb_names_sample() {
        let h: Vec<f64> = (0..5).map(|i| 20.0 * i as f64).collect();
        let p = FlightProfile::new(1.0, vec![10.0; 5], h).unwrap();
        assert!(matches!(
            derive_kinematics(&p),
            Err(ModelError::UnphysicalClimb { index: 0, .. })
        ));
    }

    #[test]
    fn cruise_builder_sizes() {
        let p = make_cruise_profile(8000.0, 500.0, 50.0, 1.0).unwrap();
        assert_eq!(p.len(), 8001);
        assert!(p.speed().iter().all(|&v| v == 50.0));
        assert!(p.altitude().iter().all(|&h| h == 500.0));
        let s = make_cruise_profile(10.0, 0.0, 0.0, 1.0).unwrap();
        assert!(s.speed().iter().all(|&v| v == 0.0));
        assert_eq!(make_cruise_profile(1.0, 0.0, 0.0, 1.0).unwrap().len(), 2);
    }

    #[test]
    fn profile_invariants_enforced() {
        assert!(FlightProfile::new(1.0, vec![1.0], vec![0.0]).is_err());
        assert!(FlightProfile::new(1.0, vec![1.0, -1.0], vec![0.0, 0.0]).is_err());
        assert!(FlightProfile::new(0.0, vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn vdot_antisymmetric_for_symmetric_profile() {
        // v symmetric about the midpoint -> vdot antisymmetric.
        let n = 41;
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 - 20.0;
                60.0 - 0.02 * x * x
            })
            .collect();
        let p = FlightProfile::new(1.0, v, vec![300.0; n]).unwrap();
        let k = derive_kinematics(&p).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(k.vdot[i], -k.vdot[n - 1 - i], epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_uniform_and_resampled() {
        let data = "t_s,v_mps,h_m\n0,50,500\n1,50,500\n2,52,501\n";
        let p = FlightProfile::from_csv_reader(data.as_bytes()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dt(), 1.0);

        let data = "t_s,v_mps,h_m\n0,0,0\n2,20,10\n3,30,10\n";
        let p = FlightProfile::from_csv_reader(data.as_bytes()).unwrap();
        assert_eq!(p.len(), 4);
        assert_abs_diff_eq!(p.speed()[1], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.altitude()[1], 5.0, epsilon = 1e-12);

        let two_col = "t_s,v_mps\n0,1\n1,2\n";
        let p = FlightProfile::from_csv_reader(two_col.as_bytes()).unwrap();
        assert!(p.altitude().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn csv_reports_bad_row() {
        let data = "t_s,v_mps,h_m\n0,50,500\n1,abc,500\n";
        match FlightProfile::from_csv_reader(data.as_bytes()) {
            Err(ModelError::Data { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
