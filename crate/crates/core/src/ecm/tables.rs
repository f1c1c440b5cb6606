use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};
use crate::interp::{locate, strictly_increasing};

/// Second-order ECM parameters evaluated at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcmPoint {
    pub uoc: f64,
    pub r0: f64,
    pub r1: f64,
    pub c1: f64,
    pub r2: f64,
    pub c2: f64,
    pub duoc_dt: f64,
}

/// SOC-indexed parameter columns at a single temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmSlice {
    pub soc: Vec<f64>,
    pub uoc: Vec<f64>,
    pub r0: Vec<f64>,
    pub r1: Vec<f64>,
    pub c1: Vec<f64>,
    pub r2: Vec<f64>,
    pub c2: Vec<f64>,
    pub duoc_dt: Vec<f64>,
}

impl EcmSlice {
    fn validate(&self) -> Result<()> {
        let n = self.soc.len();
        let cols = [&self.uoc, &self.r0, &self.r1, &self.c1, &self.r2, &self.c2, &self.duoc_dt];
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(invalid("ECM table columns must share a non-empty SOC grid"));
        }
        if !strictly_increasing(&self.soc) || self.soc[0] < 0.0 || self.soc[n - 1] > 1.0 {
            return Err(invalid("SOC grid must be strictly ascending within [0, 1]"));
        }
        if self.uoc.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("open-circuit voltage must be nondecreasing in SOC"));
        }
        for (name, col) in [("R0", &self.r0), ("R1", &self.r1), ("R2", &self.r2), ("C1", &self.c1), ("C2", &self.c2)] {
            if col.iter().any(|&x| !(x > 0.0)) {
                return Err(invalid(format!("{name} values must be positive")));
            }
        }
        Ok(())
    }

    fn at(&self, soc: f64) -> EcmPoint {
        let (i, f) = locate(&self.soc, soc);
        let l = |c: &[f64]| if c.len() == 1 { c[0] } else { c[i] + f * (c[i + 1] - c[i]) };
        EcmPoint {
            uoc: l(&self.uoc),
            r0: l(&self.r0),
            r1: l(&self.r1),
            c1: l(&self.c1),
            r2: l(&self.r2),
            c2: l(&self.c2),
            duoc_dt: l(&self.duoc_dt),
        }
    }
}

fn blend(a: EcmPoint, b: EcmPoint, f: f64) -> EcmPoint {
    let m = |x: f64, y: f64| x + f * (y - x);
    EcmPoint {
        uoc: m(a.uoc, b.uoc),
        r0: m(a.r0, b.r0),
        r1: m(a.r1, b.r1),
        c1: m(a.c1, b.c1),
        r2: m(a.r2, b.r2),
        c2: m(a.c2, b.c2),
        duoc_dt: m(a.duoc_dt, b.duoc_dt),
    }
}

/// OCV and RC parameter lookup tables, optionally with a temperature axis.
///
/// Values interpolate linearly in SOC and then in temperature; both axes clamp
/// at their ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmTables {
    temps_c: Vec<f64>,
    slices: Vec<EcmSlice>,
    synthetic: bool,
}

impl EcmTables {
    pub fn single(slice: EcmSlice) -> Result<Self> {
        slice.validate()?;
        Ok(Self { temps_c: vec![], slices: vec![slice], synthetic: false })
    }

    pub fn with_temperature_axis(temps_c: Vec<f64>, slices: Vec<EcmSlice>) -> Result<Self> {
        if temps_c.len() != slices.len() || slices.is_empty() {
            return Err(invalid("one ECM slice per temperature required"));
        }
        if !strictly_increasing(&temps_c) {
            return Err(invalid("ECM temperature axis must be strictly ascending"));
        }
        for s in &slices {
            s.validate()?;
        }
        let temps_c = if slices.len() == 1 { vec![] } else { temps_c };
        Ok(Self { temps_c, slices, synthetic: false })
    }

    /// Placeholder NMC-like parameter set: 21-point OCV from 2.5 V to 4.2 V
    /// through 3.4 V at half charge, constant resistances and capacitances.
    pub fn synthetic_default() -> Self {
        const OCV: [f64; 21] = [
            2.50, 2.90, 3.05, 3.15, 3.22, 3.27, 3.31, 3.34, 3.365, 3.385, 3.40, 3.43, 3.47, 3.52,
            3.58, 3.65, 3.73, 3.82, 3.92, 4.05, 4.20,
        ];
        let soc: Vec<f64> = (0..21).map(|i| i as f64 * 0.05).collect();
        let n = soc.len();
        let slice = EcmSlice {
            soc,
            uoc: OCV.to_vec(),
            r0: vec![5e-3; n],
            r1: vec![2e-3; n],
            c1: vec![5e3; n],
            r2: vec![3e-3; n],
            c2: vec![5e4; n],
            duoc_dt: vec![0.0; n],
        };
        let mut t = Self::single(slice).expect("default table is valid");
        t.synthetic = true;
        t
    }

    /// True when the tables are placeholders rather than identified data.
    pub fn is_synthetic(&self) -> bool {
        self.synthetic
    }

    pub fn mark_synthetic(mut self, synthetic: bool) -> Self {
        self.synthetic = synthetic;
        self
    }

    pub fn has_temperature_axis(&self) -> bool {
        !self.temps_c.is_empty()
    }

    pub fn slices(&self) -> &[EcmSlice] {
        &self.slices
    }

    /// Parameters at `soc` and cell temperature `temp_c` (°C).
    pub fn at(&self, soc: f64, temp_c: f64) -> EcmPoint {
        if self.temps_c.is_empty() {
            return self.slices[0].at(soc);
        }
        let (i, f) = locate(&self.temps_c, temp_c);
        blend(self.slices[i].at(soc), self.slices[i + 1].at(soc), f)
    }

    /// Parameters at the reference temperature (first slice).
    pub fn at_soc(&self, soc: f64) -> EcmPoint {
        self.slices[0].at(soc)
    }

    /// Reads `soc,Uoc_V,R0_ohm,R1_ohm,C1_F,R2_ohm,C2_F,dUocdT_VpK[,temp_C]`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ModelError::Data { row: 1, message: e.to_string() })?
            .clone();
        const COLS: [&str; 8] = ["soc", "Uoc_V", "R0_ohm", "R1_ohm", "C1_F", "R2_ohm", "C2_F", "dUocdT_VpK"];
        let mut idx = [0usize; 8];
        for (k, name) in COLS.iter().enumerate() {
            idx[k] = headers.iter().position(|h| h == *name).ok_or_else(|| ModelError::Data {
                row: 1,
                message: format!("missing column {name}"),
            })?;
        }
        let temp_idx = headers.iter().position(|h| h == "temp_C");

        // (temp, row values) in file order
        let mut rows: Vec<(f64, [f64; 8])> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| ModelError::Data { row, message: e.to_string() })?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| ModelError::Data { row, message: format!("{e} in column {}", i + 1) })
            };
            let mut vals = [0.0; 8];
            for (k, &i) in idx.iter().enumerate() {
                vals[k] = parse(i)?;
            }
            let temp = match temp_idx {
                Some(i) => parse(i)?,
                None => 0.0,
            };
            rows.push((temp, vals));
        }
        if rows.is_empty() {
            return Err(invalid("ECM table file has no rows"));
        }
        let mut temps: Vec<f64> = rows.iter().map(|r| r.0).collect();
        temps.sort_by(f64::total_cmp);
        temps.dedup();
        let mut slices = Vec::with_capacity(temps.len());
        for &t in &temps {
            let mut sel: Vec<[f64; 8]> = rows.iter().filter(|r| r.0 == t).map(|r| r.1).collect();
            sel.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let col = |k: usize| sel.iter().map(|r| r[k]).collect::<Vec<_>>();
            slices.push(EcmSlice {
                soc: col(0),
                uoc: col(1),
                r0: col(2),
                r1: col(3),
                c1: col(4),
                r2: col(5),
                c2: col(6),
                duoc_dt: col(7),
            });
        }
        Self::with_temperature_axis(temps, slices)
    }

    /// Writes the CSV format read by [`EcmTables::from_csv_reader`].
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let with_temp = self.has_temperature_axis();
        let mut header = vec!["soc", "Uoc_V", "R0_ohm", "R1_ohm", "C1_F", "R2_ohm", "C2_F", "dUocdT_VpK"];
        if with_temp {
            header.push("temp_C");
        }
        wtr.write_record(&header)?;
        for (k, s) in self.slices.iter().enumerate() {
            for i in 0..s.soc.len() {
                let mut rec = vec![
                    s.soc[i].to_string(),
                    s.uoc[i].to_string(),
                    s.r0[i].to_string(),
                    s.r1[i].to_string(),
                    s.c1[i].to_string(),
                    s.r2[i].to_string(),
                    s.c2[i].to_string(),
                    s.duoc_dt[i].to_string(),
                ];
                if with_temp {
                    rec.push(self.temps_c[k].to_string());
                }
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_endpoints() {
        let t = EcmTables::synthetic_default();
        assert_eq!(t.at_soc(1.0).uoc, 4.2);
        assert_eq!(t.at_soc(0.0).uoc, 2.5);
        assert_eq!(t.at_soc(0.5).uoc, 3.4);
        assert!(t.is_synthetic());
    }

    #[test]
    fn equal_endpoints_give_constant() {
        let s = EcmSlice {
            soc: vec![0.0, 1.0],
            uoc: vec![3.7, 3.7],
            r0: vec![1e-3; 2],
            r1: vec![1e-3; 2],
            c1: vec![1e3; 2],
            r2: vec![1e-3; 2],
            c2: vec![1e4; 2],
            duoc_dt: vec![0.0; 2],
        };
        let t = EcmTables::single(s).unwrap();
        for z in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(t.at_soc(z).uoc, 3.7);
        }
    }

    #[test]
    fn rejects_decreasing_ocv() {
        let mut s = EcmTables::synthetic_default().slices()[0].clone();
        s.uoc[3] = 5.0;
        assert!(EcmTables::single(s).is_err());
    }

    #[test]
    fn csv_round_trip_with_temperature_axis() {
        let data = "soc,Uoc_V,R0_ohm,R1_ohm,C1_F,R2_ohm,C2_F,dUocdT_VpK,temp_C\n\
                    0,3.0,0.010,0.002,1000,0.003,10000,0,0\n\
                    1,4.0,0.010,0.002,1000,0.003,10000,0,0\n\
                    0,3.0,0.004,0.002,1000,0.003,10000,0,40\n\
                    1,4.0,0.004,0.002,1000,0.003,10000,0,40\n";
        let t = EcmTables::from_csv_reader(data.as_bytes()).unwrap();
        assert!(t.has_temperature_axis());
        assert!((t.at(0.5, 20.0).r0 - 0.007).abs() < 1e-12);
        assert!((t.at(0.5, 20.0).uoc - 3.5).abs() < 1e-12);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = EcmTables::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_error_row() {
        let data = "soc,Uoc_V,R0_ohm,R1_ohm,C1_F,R2_ohm,C2_F,dUocdT_VpK\n0,3,1,1,1,1,1,0\n1,4,1,q,1,1,1,0\n";
        match EcmTables::from_csv_reader(data.as_bytes()) {
            Err(ModelError::Data { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }
}
