use std::io::Read;

use crate::ecm::{rc_branch_step, CellElecState, CellParams, EcmTables};
use crate::error::{invalid, ModelError, Result};

/// One segment of a current schedule. Positive current discharges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HppcStep {
    /// Constant-current charge at `current` (magnitude) up to `voltage_limit`,
    /// then constant voltage until the charge current falls to `cutoff_current`.
    CcCvCharge { current: f64, voltage_limit: f64, cutoff_current: f64 },
    Rest { duration: f64 },
    Current { current: f64, duration: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HppcProtocol {
    pub one_c: f64,
    pub steps: Vec<HppcStep>,
}

impl HppcProtocol {
    pub fn pulse_count(&self) -> usize {
        // each repetition opens with a 30 s 1C discharge that follows a rest
        self.steps
            .windows(2)
            .filter(|w| {
                matches!(w[0], HppcStep::Rest { .. })
                    && matches!(w[1], HppcStep::Current { current, duration } if current > 0.0 && duration == 30.0)
            })
            .count()
    }
}

pub const HPPC_REPETITIONS: usize = 10;

/// Builds the HPPC schedule: CCCV charge to `U_max`, 1 h rest, then ten
/// repetitions of {1C discharge 30 s, rest 40 s, 0.75C charge 10 s,
/// 1C discharge 6 min, rest 1 h}.
pub fn generate_hppc_protocol(cell: &CellParams) -> Result<HppcProtocol> {
    if !(cell.capacity_ah > 0.0) {
        return Err(invalid("HPPC protocol needs a positive cell capacity"));
    }
    let one_c = cell.capacity_ah;
    let mut steps = vec![
        HppcStep::CcCvCharge {
            current: cell.i_ch_max,
            voltage_limit: cell.u_max,
            cutoff_current: 0.05 * one_c,
        },
        HppcStep::Rest { duration: 3600.0 },
    ];
    for _ in 0..HPPC_REPETITIONS {
        steps.extend([
            HppcStep::Current { current: one_c, duration: 30.0 },
            HppcStep::Rest { duration: 40.0 },
            HppcStep::Current { current: -0.75 * one_c, duration: 10.0 },
            HppcStep::Current { current: one_c, duration: 360.0 },
            HppcStep::Rest { duration: 3600.0 },
        ]);
    }
    Ok(HppcProtocol { one_c, steps })
}

/// Time series in the `t_s,I_A,U_V,T_C` layout, plus the coulomb-counted SOC.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HppcData {
    pub t: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub temp_c: Vec<f64>,
    pub soc: Vec<f64>,
}

impl HppcData {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Reads `t_s,I_A,U_V,T_C`. SOC is reconstructed by coulomb counting from
    /// `initial_soc` when no `soc` column is present.
    pub fn from_csv_reader<R: Read>(reader: R, capacity_ah: f64, initial_soc: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ModelError::Data { row: 1, message: e.to_string() })?
            .clone();
        let find = |n: &str| headers.iter().position(|h| h == n);
        let (ti, ii, ui) = match (find("t_s"), find("I_A"), find("U_V")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(ModelError::Data { row: 1, message: "header must contain t_s, I_A, U_V".into() })
            }
        };
        let tci = find("T_C");
        let si = find("soc");
        let mut d = HppcData::default();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| ModelError::Data { row, message: e.to_string() })?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| ModelError::Data { row, message: e.to_string() })
            };
            let t = get(ti)?;
            if let Some(&prev) = d.t.last() {
                if t <= prev {
                    return Err(ModelError::Data { row, message: "time must be strictly increasing".into() });
                }
            }
            d.t.push(t);
            d.current.push(get(ii)?);
            d.voltage.push(get(ui)?);
            d.temp_c.push(match tci {
                Some(i) => get(i)?,
                None => 23.0,
            });
            if let Some(i) = si {
                d.soc.push(get(i)?);
            }
        }
        if si.is_none() && !d.t.is_empty() {
            d.soc.push(initial_soc);
            for k in 1..d.t.len() {
                let dt = d.t[k] - d.t[k - 1];
                let prev = d.soc[k - 1];
                d.soc.push(prev - d.current[k - 1] * dt / (3600.0 * capacity_ah));
            }
        }
        Ok(d)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t_s", "I_A", "U_V", "T_C", "soc"])?;
        for k in 0..self.len() {
            wtr.write_record(&[
                self.t[k].to_string(),
                self.current[k].to_string(),
                self.voltage[k].to_string(),
                self.temp_c[k].to_string(),
                self.soc[k].to_string(),
            ])?;
        }
        wtr.flush()
    }
}

/// Runs `protocol` through the ECM at constant temperature and records one
/// sample per `dt`. Each sample pairs the applied current with the voltage
/// before the RC states advance. The run ends early at the lower voltage cutoff.
pub fn simulate_hppc(
    protocol: &HppcProtocol,
    cell: &CellParams,
    tables: &EcmTables,
    initial_soc: f64,
    temp_c: f64,
    dt: f64,
) -> Result<HppcData> {
    if !(dt > 0.0) {
        return Err(invalid("sample step must be positive"));
    }
    let mut st = CellElecState::at_rest(initial_soc);
    let mut out = HppcData::default();
    let mut t = 0.0;
    let q = 3600.0 * cell.capacity_ah;

    let record = |st: &mut CellElecState, i: f64, t: &mut f64, out: &mut HppcData| -> bool {
        let p = tables.at(st.soc, temp_c);
        let u = p.uoc - i * p.r0 - st.u1 - st.u2;
        if u < cell.u_min && i > 0.0 {
            return false;
        }
        out.t.push(*t);
        out.current.push(i);
        out.voltage.push(u);
        out.temp_c.push(temp_c);
        out.soc.push(st.soc);
        st.u1 = rc_branch_step(st.u1, i, p.r1, p.c1, dt);
        st.u2 = rc_branch_step(st.u2, i, p.r2, p.c2, dt);
        st.soc = (st.soc - i * dt / q).clamp(0.0, 1.0);
        *t += dt;
        true
    };

    for step in &protocol.steps {
        match *step {
            HppcStep::Rest { duration } | HppcStep::Current { duration, current: _ } => {
                let i = match *step {
                    HppcStep::Current { current, .. } => current,
                    _ => 0.0,
                };
                let n = (duration / dt).round() as usize;
                for _ in 0..n {
                    if !record(&mut st, i, &mut t, &mut out) {
                        return Ok(out);
                    }
                }
            }
            HppcStep::CcCvCharge { current, voltage_limit, cutoff_current } => {
                // bounded at 6 h so a mis-specified cutoff cannot spin forever
                let max_steps = (6.0 * 3600.0 / dt) as usize;
                for _ in 0..max_steps {
                    let p = tables.at(st.soc, temp_c);
                    // current that holds the terminal voltage exactly at the limit
                    let i_cv = (p.uoc - st.u1 - st.u2 - voltage_limit) / p.r0;
                    let i = i_cv.max(-current);
                    if i > -cutoff_current {
                        break;
                    }
                    record(&mut st, i, &mut t, &mut out);
                }
            }
        }
    }
    Ok(out)
}
