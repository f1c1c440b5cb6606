//! Per-SOC-bin ECM identification from pulse data.
//!
//! Within a pulse window the terminal voltage is linear in
//! `(U_oc, dU_oc/dSOC, R0, R1, R2)` once the two time constants are fixed, so
//! the fit is separable: a log-spaced grid seeds `(tau1, tau2)`, a simplex
//! refines them, and every objective evaluation is a linear least-squares solve.

use nalgebra::{DMatrix, DVector};

use crate::ecm::{EcmSlice, EcmTables, HppcData};
use crate::error::{ModelError, Result};
use crate::optimizer::nelder_mead;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Rest samples kept ahead of each pulse.
    pub pre_samples: usize,
    /// Minimum rest before a discharge edge counts as a pulse start.
    pub min_rest_s: f64,
    /// Longest rest after the discharge pulse kept when no charge pulse follows.
    pub max_tail_s: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_grid: usize,
    pub refine_evals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pre_samples: 10,
            min_rest_s: 600.0,
            max_tail_s: 120.0,
            tau_min: 0.5,
            tau_max: 3000.0,
            tau_grid: 24,
            refine_evals: 600,
        }
    }
}

/// Fitted parameters of one pulse window.
#[derive(Debug, Clone, PartialEq)]
pub struct BinFit {
    pub soc: f64,
    pub start: usize,
    pub end: usize,
    pub uoc: f64,
    pub ocv_slope: f64,
    pub r0: f64,
    pub r1: f64,
    pub tau1: f64,
    pub r2: f64,
    pub tau2: f64,
    pub rmse: f64,
}

impl BinFit {
    /// Model voltage over the bin window of `data`.
    pub fn predict(&self, data: &HppcData) -> Vec<f64> {
        let w = Window::new(data, self.start, self.end);
        let g1 = w.rc_response(self.tau1);
        let g2 = w.rc_response(self.tau2);
        (0..w.len())
            .map(|k| {
                self.uoc + self.ocv_slope * w.dsoc[k] - self.r0 * w.current[k] - self.r1 * g1[k] - self.r2 * g2[k]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub tables: EcmTables,
    pub rmse: f64,
    pub bins: Vec<BinFit>,
}

struct Window<'a> {
    current: &'a [f64],
    voltage: &'a [f64],
    dt: Vec<f64>,
    dsoc: Vec<f64>,
}

impl<'a> Window<'a> {
    fn new(data: &'a HppcData, start: usize, end: usize) -> Self {
        let dt = (start..end)
            .map(|k| if k + 1 < data.len() { data.t[k + 1] - data.t[k] } else { 0.0 })
            .collect();
        let s0 = data.soc[start];
        Self {
            current: &data.current[start..end],
            voltage: &data.voltage[start..end],
            dt,
            dsoc: data.soc[start..end].iter().map(|s| s - s0).collect(),
        }
    }

    fn len(&self) -> usize {
        self.current.len()
    }

    /// Over-voltage of a unit-resistance RC branch with time constant `tau`,
    /// using the same held-current trapezoidal update as the simulator.
    fn rc_response(&self, tau: f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.len());
        let mut x = 0.0;
        for k in 0..self.len() {
            g.push(x);
            let a = self.dt[k] / (2.0 * tau);
            x = ((1.0 - a) * x + self.dt[k] * self.current[k] / tau) / (1.0 + a);
        }
        g
    }

    /// Linear least-squares solve at fixed time constants: returns
    /// (coefficients, sum of squared residuals).
    fn solve(&self, tau1: f64, tau2: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.len();
        let g1 = self.rc_response(tau1);
        let g2 = self.rc_response(tau2);
        let cols: [Vec<f64>; 5] = [
            vec![1.0; n],
            self.dsoc.clone(),
            self.current.iter().map(|i| -i).collect(),
            g1.iter().map(|g| -g).collect(),
            g2.iter().map(|g| -g).collect(),
        ];
        let scale: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(ModelError::Singular("a regressor vanishes over the pulse window".into()));
        }
        let a = DMatrix::from_fn(n, 5, |r, c| cols[c][r] / scale[c]);
        let b = DVector::from_column_slice(self.voltage);
        let svd = a.clone().svd(true, true);
        let sv = &svd.singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-13 * smax) {
            return Err(ModelError::Singular("pulse window does not excite all ECM parameters".into()));
        }
        let x = svd
            .solve(&b, 1e-14 * smax)
            .map_err(|e| ModelError::Singular(e.to_string()))?;
        let resid = &a * &x - &b;
        let coef = (0..5).map(|c| x[c] / scale[c]).collect();
        Ok((coef, resid.norm_squared()))
    }
}

fn find_pulses(data: &HppcData, opts: &FitOptions) -> Vec<(usize, usize)> {
    let imax = data.current.iter().fold(0.0f64, |m, i| m.max(i.abs()));
    let thr = 1e-6 * imax + 1e-12;
    let n = data.len();
    let mut out = Vec::new();
    let mut rest_since: Option<f64> = None;
    let mut k = 0;
    while k < n {
        let i = data.current[k];
        if i.abs() <= thr {
            rest_since.get_or_insert(data.t[k]);
            k += 1;
            continue;
        }
        let rested = rest_since.map_or(0.0, |t0| data.t[k] - t0);
        rest_since = None;
        if i > thr && rested >= opts.min_rest_s {
            // 0: discharge, 1: rest after it, 2: charge pulse
            let mut phase = 0;
            let mut tail_start = 0.0;
            let mut e = k;
            while e < n {
                let ie = data.current[e];
                match phase {
                    0 if ie <= thr => {
                        phase = 1;
                        tail_start = data.t[e];
                        continue;
                    }
                    1 if ie < -thr => phase = 2,
                    1 if ie > thr || data.t[e] - tail_start > opts.max_tail_s => break,
                    2 if ie >= -thr => break,
                    _ => {}
                }
                e += 1;
            }
            out.push((k.saturating_sub(opts.pre_samples), e));
            k = e;
            continue;
        }
        k += 1;
    }
    out
}

fn fit_window(data: &HppcData, start: usize, end: usize, pulse_soc: f64, opts: &FitOptions) -> Result<BinFit> {
    let w = Window::new(data, start, end);
    let vmin = w.voltage.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = w.voltage.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(vmax - vmin > 1e-9) {
        return Err(ModelError::NoExcitation(format!("flat voltage in window starting at sample {start}")));
    }

    let sse = |lt: &[f64]| -> f64 {
        let (t1, t2) = (lt[0].exp(), lt[1].exp());
        if (t1 - t2).abs() < 1e-6 * t1.max(t2) {
            return f64::INFINITY;
        }
        w.solve(t1, t2).map_or(f64::INFINITY, |(_, s)| s)
    };

    let (lo, hi) = (opts.tau_min.ln(), opts.tau_max.ln());
    let m = opts.tau_grid.max(3);
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let mut best = (f64::INFINITY, [grid[0], grid[1]]);
    for i in 0..m {
        for j in (i + 1)..m {
            let s = sse(&[grid[i], grid[j]]);
            if s < best.0 {
                best = (s, [grid[i], grid[j]]);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(ModelError::Singular(format!("no admissible time constants for window at sample {start}")));
    }
    let step = (hi - lo) / (m - 1) as f64;
    let refined = nelder_mead(
        |x| sse(x),
        &best.1,
        &[step, step],
        opts.refine_evals,
        1e-30,
        |x| {
            for v in x.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        },
    );
    let (mut t1, mut t2) = (refined.x[0].exp(), refined.x[1].exp());
    let (coef, sse_final) = w.solve(t1, t2)?;
    let (mut r1, mut r2) = (coef[3], coef[4]);
    if t1 > t2 {
        std::mem::swap(&mut t1, &mut t2);
        std::mem::swap(&mut r1, &mut r2);
    }
    let fit = BinFit {
        soc: pulse_soc,
        start,
        end,
        uoc: coef[0],
        ocv_slope: coef[1],
        r0: coef[2],
        r1,
        tau1: t1,
        r2,
        tau2: t2,
        rmse: (sse_final / w.len() as f64).sqrt(),
    };
    if !(fit.r0 > 0.0 && fit.r1 > 0.0 && fit.r2 > 0.0) {
        return Err(ModelError::Singular(format!(
            "non-physical resistances in window at sample {start}: R0={}, R1={}, R2={}",
            fit.r0, fit.r1, fit.r2
        )));
    }
    Ok(fit)
}

/// Fits one set of 2RC parameters per detected pulse and assembles SOC-indexed tables.
pub fn fit_ecm(data: &HppcData, opts: &FitOptions) -> Result<FitResult> {
    let n = data.len();
    if n < 3 || data.current.len() != n || data.voltage.len() != n || data.soc.len() != n {
        return Err(ModelError::InvalidInput("HPPC series must be aligned and non-trivial".into()));
    }
    let pulses = find_pulses(data, opts);
    if pulses.is_empty() {
        return Err(ModelError::NoExcitation("no current pulse following a rest period".into()));
    }
    let mut bins = Vec::with_capacity(pulses.len());
    let (mut sse, mut count) = (0.0, 0usize);
    for (start, end) in pulses {
        let pulse_idx = (start..end).find(|&k| data.current[k] > 0.0).unwrap_or(start);
        let b = fit_window(data, start, end, data.soc[pulse_idx], opts)?;
        sse += b.rmse * b.rmse * (end - start) as f64;
        count += end - start;
        bins.push(b);
    }
    let mut sorted = bins.clone();
    sorted.sort_by(|a, b| a.soc.total_cmp(&b.soc));
    if sorted.windows(2).any(|w| w[1].soc - w[0].soc < 1e-9) {
        return Err(ModelError::Singular("two pulses share one SOC level".into()));
    }
    let col = |f: &dyn Fn(&BinFit) -> f64| sorted.iter().map(f).collect::<Vec<_>>();
    let slice = EcmSlice {
        soc: col(&|b| b.soc),
        uoc: col(&|b| b.uoc),
        r0: col(&|b| b.r0),
        r1: col(&|b| b.r1),
        c1: col(&|b| b.tau1 / b.r1),
        r2: col(&|b| b.r2),
        c2: col(&|b| b.tau2 / b.r2),
        duoc_dt: vec![0.0; sorted.len()],
    };
    Ok(FitResult {
        tables: EcmTables::single(slice)?,
        rmse: (sse / count as f64).sqrt(),
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::{generate_hppc_protocol, simulate_hppc, CellParams};

    #[test]
    fn zero_current_has_no_excitation() {
        let n = 2000;
        let d = HppcData {
            t: (0..n).map(|k| k as f64).collect(),
            current: vec![0.0; n],
            voltage: vec![3.7; n],
            temp_c: vec![23.0; n],
            soc: vec![0.5; n],
        };
        assert!(matches!(fit_ecm(&d, &FitOptions::default()), Err(ModelError::NoExcitation(_))));
    }

    #[test]
    fn flat_voltage_has_no_excitation() {
        let n = 2000;
        let current: Vec<f64> = (0..n).map(|k| if (1000..1030).contains(&k) { 10.0 } else { 0.0 }).collect();
        let d = HppcData {
            t: (0..n).map(|k| k as f64).collect(),
            current,
            voltage: vec![3.7; n],
            temp_c: vec![23.0; n],
            soc: vec![0.5; n],
        };
        assert!(matches!(fit_ecm(&d, &FitOptions::default()), Err(ModelError::NoExcitation(_))));
    }

    #[test]
    fn detects_one_window_per_pulse() {
        let cell = CellParams::default();
        let tables = EcmTables::synthetic_default();
        let p = generate_hppc_protocol(&cell).unwrap();
        let d = simulate_hppc(&p, &cell, &tables, 0.95, 23.0, 1.0).unwrap();
        let w = find_pulses(&d, &FitOptions::default());
        assert!(w.len() >= 9, "found {}", w.len());
        for (s, e) in w {
            // 10 pre-rest + 30 discharge + 40 rest + 10 charge
            assert_eq!(e - s, 90);
        }
    }
}
