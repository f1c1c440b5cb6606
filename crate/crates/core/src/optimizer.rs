//! Minimum-energy BTMS design: Latin-hypercube seeding followed by simplex
//! descent on a quadratically penalised objective with increasing weights.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btms::FluidProps;
use crate::error::{invalid, Result};
use crate::simulator::{check_constraints, simulate, ConstraintReport, SimConfig};
use crate::thermal::c_to_k;

/// Outcome of a simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

/// Nelder–Mead with standard coefficients. `project` is applied to every trial
/// point before evaluation (e.g. clamping into a box). Stops after
/// `max_evals`, when the value spread falls below `ftol` (relative), or when
/// the simplex collapses.
pub fn nelder_mead<F, P>(mut f: F, x0: &[f64], step: &[f64], max_evals: usize, ftol: f64, project: P) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &mut Vec<f64>, evals: &mut usize| {
        project(x);
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut p0 = x0.to_vec();
    let f0 = eval(&mut p0, &mut evals);
    simplex.push((p0, f0));
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut p = x0.to_vec();
        p[i] += step[i];
        project(&mut p);
        if (p[i] - x0[i]).abs() < 0.5 * step[i].abs() {
            p[i] = x0[i] - step[i];
        }
        let v = eval(&mut p, &mut evals);
        simplex.push((p, v));
    }
    if simplex.len() < n + 1 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        return NmResult { x, f, evals };
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (f_lo, f_hi) = (simplex[0].1, simplex[n].1);
        if f_lo.is_finite() && f_hi.is_finite() && (f_hi - f_lo).abs() <= ftol * (f_lo.abs() + f_hi.abs()) + 1e-300 {
            break;
        }
        let size = simplex[1..]
            .iter()
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size < 1e-10 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|(p, _)| p[i]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect() };

        let mut xr = along(-1.0);
        let fr = eval(&mut xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= max_evals {
                simplex[n] = (xr, fr);
                break;
            }
            let mut xe = along(-2.0);
            let fe = eval(&mut xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            if evals >= max_evals {
                break;
            }
            let (mut xc, fc) = if fr < simplex[n].1 {
                let mut x = along(-0.5);
                let v = eval(&mut x, &mut evals);
                (x, v)
            } else {
                let mut x = along(0.5);
                let v = eval(&mut x, &mut evals);
                (x, v)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (std::mem::take(&mut xc), fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    if evals >= max_evals {
                        break;
                    }
                    let mut x: Vec<f64> = (0..n).map(|i| best[i] + 0.5 * (item.0[i] - best[i])).collect();
                    let v = eval(&mut x, &mut evals);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NmResult { x, f, evals }
}

/// Design vector `p = (T_fl, Vdot, P_rated)` with `T_fl` in K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub t_fl_k: f64,
    pub vdot: f64,
    pub p_rated: f64,
}

impl DesignPoint {
    fn to_array(self) -> [f64; 3] {
        [self.t_fl_k, self.vdot, self.p_rated]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    pub t_fl_k: [f64; 2],
    pub vdot: [f64; 2],
    pub p_rated: [f64; 2],
}

impl DesignBounds {
    /// `T_fl` in [15, 35] °C, flow up to the fluid maximum, rating up to 50 kW.
    pub fn for_fluid(fluid: &FluidProps) -> Self {
        Self {
            t_fl_k: [c_to_k(15.0), c_to_k(35.0)],
            // the open lower end of the flow range is closed at 0.1 % of the maximum
            vdot: [1e-3 * fluid.vdot_max, fluid.vdot_max],
            p_rated: [0.0, 50e3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("T_fl", self.t_fl_k), ("Vdot", self.vdot), ("P_rated", self.p_rated)] {
            if !(lo < hi) {
                return Err(invalid(format!("{name} bounds need lower < upper")));
            }
        }
        Ok(())
    }

    fn axes(&self) -> [[f64; 2]; 3] {
        [self.t_fl_k, self.vdot, self.p_rated]
    }

    pub fn contains(&self, p: &DesignPoint) -> bool {
        self.axes().iter().zip(p.to_array()).all(|([lo, hi], x)| x >= *lo && x <= *hi)
    }

    pub fn from_unit(&self, u: &[f64]) -> DesignPoint {
        let a = self.axes();
        let m = |i: usize| a[i][0] + u[i].clamp(0.0, 1.0) * (a[i][1] - a[i][0]);
        DesignPoint { t_fl_k: m(0), vdot: m(1), p_rated: m(2) }
    }

    pub fn to_unit(&self, p: &DesignPoint) -> [f64; 3] {
        let a = self.axes();
        let x = p.to_array();
        std::array::from_fn(|i| (x[i] - a[i][0]) / (a[i][1] - a[i][0]))
    }
}

/// Objective value and constraint state of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `ΔE_b` in kWh, infinite for runs that did not complete.
    pub objective: f64,
    /// Per-constraint violation magnitudes; empty when unavailable.
    pub violations: Vec<f64>,
    pub feasible: bool,
    pub note: Option<String>,
    pub report: Option<ConstraintReport>,
}

impl Evaluation {
    pub fn max_violation(&self) -> f64 {
        if self.objective.is_infinite() && self.violations.is_empty() {
            return f64::INFINITY;
        }
        self.violations.iter().cloned().fold(0.0, f64::max)
    }

    /// `objective + weight * Σ v²`; exactly the objective when nothing is violated.
    pub fn penalized(&self, weight: f64) -> f64 {
        let s: f64 = self.violations.iter().map(|v| v * v).sum();
        if s == 0.0 {
            self.objective
        } else {
            self.objective + weight * s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eval_id: usize,
    pub p: DesignPoint,
    pub objective: f64,
    pub max_violation: f64,
    pub feasible: bool,
    /// Penalised value under the weight active when the candidate was evaluated.
    pub penalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub p_star: DesignPoint,
    pub delta_e_b_kwh: f64,
    pub feasible: bool,
    pub evaluation: Evaluation,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

impl OptResult {
    /// Running minimum of the penalised values along the trace.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut m = f64::INFINITY;
        self.trace
            .iter()
            .map(|e| {
                m = m.min(e.penalized);
                m
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSettings {
    pub budget: usize,
    pub seed: u64,
    pub initial_weight: f64,
    pub weight_growth: f64,
    pub restarts: usize,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self { budget: 300, seed: 1, initial_weight: 1e3, weight_growth: 10.0, restarts: 3 }
    }
}

/// Builds the BTMS from `p`, simulates and checks every constraint. Simulator
/// faults come back as infeasible evaluations.
pub fn evaluate_candidate(p: &DesignPoint, base: &SimConfig, bounds: &DesignBounds) -> Result<Evaluation> {
    if !bounds.contains(p) {
        return Err(invalid(format!("candidate {p:?} outside design bounds")));
    }
    let mut cfg = base.clone();
    let b = cfg.btms.as_mut().ok_or_else(|| invalid("base configuration has no BTMS to design"))?;
    b.design.t_fl_k = p.t_fl_k;
    b.design.vdot = p.vdot;
    b.design.p_rated = p.p_rated;
    Ok(match simulate(&cfg) {
        Ok(r) => {
            let report = check_constraints(&r, &cfg);
            let violations = report.entries.iter().map(|e| e.1).collect();
            let feasible = report.feasible();
            Evaluation {
                objective: if r.completed() { r.delta_e_b_kwh() } else { f64::INFINITY },
                violations,
                feasible,
                note: report.incomplete.clone(),
                report: Some(report),
            }
        }
        Err(e) => Evaluation {
            objective: f64::INFINITY,
            violations: Vec::new(),
            feasible: false,
            note: Some(e.to_string()),
            report: None,
        },
    })
}

fn latin_hypercube(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| {
            let mut c: Vec<f64> = (0..n).map(|i| (i as f64 + rng.gen::<f64>()) / n as f64).collect();
            c.shuffle(rng);
            c
        })
        .collect();
    (0..n).map(|i| cols.iter_mut().map(|c| c[i]).collect()).collect()
}

/// Generic driver over any candidate evaluator.
pub fn optimize_with<F>(bounds: &DesignBounds, settings: &OptimizeSettings, eval: F) -> Result<OptResult>
where
    F: Fn(&DesignPoint) -> Evaluation + Sync,
{
    bounds.validate()?;
    if settings.budget < 30 {
        return Err(invalid("optimization budget must be at least 30 evaluations"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let n_seed = (settings.budget / 4).clamp(10, 60);
    let seeds: Vec<DesignPoint> = latin_hypercube(n_seed, 3, &mut rng).iter().map(|u| bounds.from_unit(u)).collect();
    let seed_evals: Vec<Evaluation> = seeds.par_iter().map(&eval).collect();

    let mut weight = settings.initial_weight;
    let mut trace = Vec::with_capacity(settings.budget);
    let mut evals: Vec<Evaluation> = Vec::with_capacity(settings.budget);
    for (p, e) in seeds.into_iter().zip(seed_evals) {
        trace.push(TraceEntry {
            eval_id: trace.len(),
            p,
            objective: e.objective,
            max_violation: e.max_violation(),
            feasible: e.feasible,
            penalized: e.penalized(weight),
        });
        evals.push(e);
    }

    let start_of = |trace: &[TraceEntry], evals: &[Evaluation], w: f64| -> DesignPoint {
        let feasible = trace.iter().filter(|t| t.feasible).min_by(|a, b| a.objective.total_cmp(&b.objective));
        match feasible {
            Some(t) => t.p,
            None => {
                trace.iter().zip(evals).min_by(|a, b| a.1.penalized(w).total_cmp(&b.1.penalized(w))).unwrap().0.p
            }
        }
    };

    let runs = settings.restarts + 1;
    for r in 0..runs {
        let used = trace.len();
        if used >= settings.budget {
            break;
        }
        let share = (settings.budget - used) / (runs - r);
        if share < 4 {
            continue;
        }
        let x0 = bounds.to_unit(&start_of(&trace, &evals, weight));
        let step = 0.15 / (1 << r) as f64;
        let w = weight;
        nelder_mead(
            |u| {
                let p = bounds.from_unit(u);
                let e = eval(&p);
                let pen = e.penalized(w);
                trace.push(TraceEntry {
                    eval_id: trace.len(),
                    p,
                    objective: e.objective,
                    max_violation: e.max_violation(),
                    feasible: e.feasible,
                    penalized: pen,
                });
                evals.push(e);
                pen
            },
            &x0,
            &[step; 3],
            share,
            1e-12,
            |u| {
                for v in u.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
            },
        );
        weight *= settings.weight_growth;
    }

    let best_feasible = trace
        .iter()
        .filter(|t| t.feasible)
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.eval_id.cmp(&b.eval_id)));
    let idx = match best_feasible {
        Some(t) => t.eval_id,
        None => {
            trace
                .iter()
                .min_by(|a, b| a.max_violation.total_cmp(&b.max_violation).then(a.objective.total_cmp(&b.objective)))
                .unwrap()
                .eval_id
        }
    };
    let best = &trace[idx];
    Ok(OptResult {
        p_star: best.p,
        delta_e_b_kwh: best.objective,
        feasible: best.feasible,
        evaluation: evals[idx].clone(),
        evaluations: trace.len(),
        trace,
    })
}

/// Minimises `ΔE_b` over the BTMS design of `base` within `bounds`.
pub fn optimize(bounds: &DesignBounds, base: &SimConfig, settings: &OptimizeSettings) -> Result<OptResult> {
    if base.btms.is_none() {
        return Err(invalid("base configuration has no BTMS to design"));
    }
    optimize_with(bounds, settings, |p| {
        evaluate_candidate(p, base, bounds).unwrap_or_else(|e| Evaluation {
            objective: f64::INFINITY,
            violations: Vec::new(),
            feasible: false,
            note: Some(e.to_string()),
            report: None,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.1, 0.1], 2000, 1e-16, |_| {});
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r);
        assert!(r.evals <= 2000);
    }

    #[test]
    fn simplex_respects_projection() {
        let r = nelder_mead(|x| (x[0] - 2.0).powi(2), &[0.5], &[0.1], 200, 1e-14, |x| x[0] = x[0].clamp(0.0, 1.0));
        assert!((r.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lhs_stratifies_each_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = latin_hypercube(20, 3, &mut rng);
        for d in 0..3 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[d] * 20.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..20).collect::<Vec<_>>());
        }
    }

    fn bounds() -> DesignBounds {
        DesignBounds::for_fluid(&FluidProps::water())
    }

    fn surrogate(b: &DesignBounds) -> impl Fn(&DesignPoint) -> Evaluation + Sync + '_ {
        move |p| {
            let u = b.to_unit(p);
            let objective = u.iter().map(|x| (x - 0.5).powi(2)).sum::<f64>();
            Evaluation { objective, violations: vec![0.0], feasible: true, note: None, report: None }
        }
    }

    #[test]
    fn penalty_is_exact_without_violations() {
        let e = Evaluation { objective: 3.5, violations: vec![0.0, 0.0], feasible: true, note: None, report: None };
        assert_eq!(e.penalized(1e6), 3.5);
        let v = Evaluation { violations: vec![0.5], feasible: false, ..e };
        assert_eq!(v.penalized(1e3), 3.5 + 250.0);
    }

    #[test]
    fn budget_and_bounds_checks() {
        let b = bounds();
        let s = OptimizeSettings { budget: 29, ..Default::default() };
        assert!(optimize_with(&b, &s, surrogate(&b)).is_err());
        let base = SimConfig::reference_cruise();
        assert!(evaluate_candidate(&DesignPoint { t_fl_k: 0.0, vdot: 1e-4, p_rated: 0.0 }, &base, &b).is_err());
    }

    #[test]
    fn trace_is_monotone_and_reproducible() {
        let b = bounds();
        let s = OptimizeSettings { budget: 120, seed: 42, ..Default::default() };
        let r1 = optimize_with(&b, &s, surrogate(&b)).unwrap();
        let r2 = optimize_with(&b, &s, surrogate(&b)).unwrap();
        assert_eq!(r1.trace, r2.trace);
        let best = r1.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert!(r1.evaluations <= 120);
        for t in r1.trace.iter().filter(|t| t.feasible) {
            assert!(r1.delta_e_b_kwh <= t.objective);
        }
        assert!(b.contains(&r1.p_star));
    }
}
