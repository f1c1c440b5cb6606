use anyhow::{bail, Context, Result};

use aerobat_core::ecm::{fit_ecm, generate_hppc_protocol, simulate_hppc, EcmTables, HppcData};
use aerobat_core::optimizer::optimize;
use aerobat_core::runaway::simulate_tr;
use aerobat_core::simulator::{check_constraints, range_sweep, simulate, SimResult};
use aerobat_core::thermal::k_to_c;
use aerobat_core::ecm::estimate_cp;

use crate::config::{open, Loaded};
use crate::output::{summary, Meta, OutDir};

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    /// The run ended early on a hard constraint.
    Stopped,
}

fn write_config(out: &OutDir, meta: &Meta, loaded: &Loaded) -> Result<()> {
    out.write("config.toml", meta, loaded.config.to_toml().as_bytes())?;
    Ok(())
}

fn f(x: f64) -> String {
    x.to_string()
}

fn write_series(out: &OutDir, meta: &Meta, r: &SimResult) -> Result<()> {
    out.write_csv("sim.csv", meta, |w| {
        w.write_record([
            "t_s", "v_mps", "P_m_W", "P_AC_W", "P_DC_W", "P_BTMS_W", "Q_BTMS_W", "P_b_W", "P_i_W", "I_b_A",
            "U_cell_min_V", "U_cell_max_V", "soc", "E_b_J", "T_cell_min_C", "T_cell_mean_C", "T_cell_max_C",
            "T_fl_out_C", "q_gen_cell_W", "q_diss_cell_W",
        ])?;
        for k in 0..r.len() {
            let t_fl = r.t_fl_c.get(k).and_then(|row| row.last()).map_or(String::new(), |t| f(*t));
            w.write_record([
                f(r.t[k]),
                f(r.v[k]),
                f(r.p_m[k]),
                f(r.p_ac[k]),
                f(r.p_dc[k]),
                f(r.p_btms[k]),
                f(r.q_btms[k]),
                f(r.p_b[k]),
                f(r.p_i[k]),
                f(r.i_b[k]),
                f(r.u_cell_min[k]),
                f(r.u_cell_max[k]),
                f(r.soc[k]),
                f(r.e_b[k]),
                f(r.t_cell_min_c[k]),
                f(r.t_cell_mean_c[k]),
                f(r.t_cell_max_c[k]),
                t_fl,
                r.q_gen_cell.get(k).map_or(String::new(), |q| f(*q)),
                f(r.q_diss_cell[k]),
            ])?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn simulate_cmd(loaded: &Loaded, out: &OutDir) -> Result<Status> {
    let cfg = loaded.config.sim()?;
    let mut meta = Meta::new("simulate", loaded, None)?;
    meta.mark(format!("synthetic_ecm={}", cfg.ecm.is_synthetic()));
    let r = simulate(&cfg)?;
    let report = check_constraints(&r, &cfg);
    write_series(out, &meta, &r)?;
    let mut pairs = vec![
        ("delta_E_b_kWh", f(r.delta_e_b_kwh())),
        ("max_T_cell_C", f(r.max_t_cell_c)),
        ("range_km", f(r.range_km)),
        ("mass_kg", f(r.mass)),
        ("E_b_max_kWh", f(r.e_b_max / 3.6e6)),
        ("duration_s", f(r.t.last().copied().unwrap_or(0.0))),
        ("completed", r.completed().to_string()),
        ("stop", r.stop.as_ref().map_or("none".into(), |s| s.to_string())),
        ("feasible", report.feasible().to_string()),
        ("max_violation", f(report.max_violation())),
        ("btms_saturated", r.flags.btms_saturated.to_string()),
        ("eta_clamped", r.flags.eta_clamped.to_string()),
        ("laminar_warning", r.flags.laminar_warning.to_string()),
    ];
    let names: Vec<String> = report.entries.iter().map(|(c, _)| format!("violation.{}", c.name())).collect();
    for ((_, v), name) in report.entries.iter().zip(&names) {
        pairs.push((name.as_str(), f(*v)));
    }
    out.write("summary.txt", &meta, &summary(&pairs))?;
    write_config(out, &meta, loaded)?;
    println!(
        "dE_b = {:.3} kWh, max T_cell = {:.2} C, range = {:.1} km, stop = {}",
        r.delta_e_b_kwh(),
        r.max_t_cell_c,
        r.range_km,
        r.stop.as_ref().map_or("none".into(), |s| s.to_string())
    );
    Ok(if r.completed() { Status::Done } else { Status::Stopped })
}

pub fn optimize_cmd(loaded: &Loaded, out: &OutDir, seed: Option<u64>) -> Result<Status> {
    let base = loaded.config.sim()?;
    if base.btms.is_none() {
        bail!("optimize needs a BTMS to design: set btms.enabled = true");
    }
    let bounds = loaded.config.bounds()?;
    let settings = loaded.config.optimize_settings(seed);
    let mut meta = Meta::new("optimize", loaded, Some(settings.seed))?;
    meta.mark(format!("synthetic_ecm={}", base.ecm.is_synthetic()));
    let r = optimize(&bounds, &base, &settings)?;
    out.write_csv("trace.csv", &meta, |w| {
        w.write_record(["eval_id", "T_fl_C", "Vdot_m3ps", "P_rated_W", "delta_Eb_kWh", "max_violation", "feasible"])?;
        for e in &r.trace {
            w.write_record([
                e.eval_id.to_string(),
                f(k_to_c(e.p.t_fl_k)),
                f(e.p.vdot),
                f(e.p.p_rated),
                f(e.objective),
                f(e.max_violation),
                e.feasible.to_string(),
            ])?;
        }
        Ok(())
    })?;
    let pairs = [
        ("T_fl_C", f(k_to_c(r.p_star.t_fl_k))),
        ("Vdot_m3ps", f(r.p_star.vdot)),
        ("P_rated_W", f(r.p_star.p_rated)),
        ("delta_Eb_kWh", f(r.delta_e_b_kwh)),
        ("feasible", r.feasible.to_string()),
        ("max_violation", f(r.evaluation.max_violation())),
        ("evaluations", r.evaluations.to_string()),
        ("note", r.evaluation.note.clone().unwrap_or_else(|| "none".into())),
    ];
    out.write("result.txt", &meta, &summary(&pairs))?;
    write_config(out, &meta, loaded)?;
    println!(
        "p* = ({:.3} C, {:.4e} m3/s, {:.1} W), dE_b = {:.3} kWh, feasible = {}, {} evaluations",
        k_to_c(r.p_star.t_fl_k),
        r.p_star.vdot,
        r.p_star.p_rated,
        r.delta_e_b_kwh,
        r.feasible,
        r.evaluations
    );
    Ok(Status::Done)
}

pub fn sweep_cmd(loaded: &Loaded, out: &OutDir) -> Result<Status> {
    let base = loaded.config.sim()?;
    let s = &loaded.config.sweep;
    let mut meta = Meta::new("sweep", loaded, None)?;
    meta.mark(format!("synthetic_ecm={}", base.ecm.is_synthetic()));
    let rows = range_sweep(&base, &s.n_p, &s.h_wpm2k, &loaded.config.sweep_settings())?;
    out.write_csv("sweep.csv", &meta, |w| {
        w.write_record(["n_p", "h_Wpm2K", "range_km", "max_T_cell_C", "stop", "violations"])?;
        for r in &rows {
            let v: Vec<&str> = r.violations.iter().map(|c| c.name()).collect();
            w.write_record([
                r.n_p.to_string(),
                f(r.h_conv),
                f(r.range_km),
                f(r.max_t_cell_c),
                r.stop.clone().unwrap_or_default(),
                v.join(";"),
            ])?;
        }
        Ok(())
    })?;
    write_config(out, &meta, loaded)?;
    println!("{} sweep rows written", rows.len());
    Ok(Status::Done)
}

pub fn runaway_cmd(loaded: &Loaded, out: &OutDir) -> Result<Status> {
    let (params, user) = loaded.config.tr_params()?;
    let sc = loaded.config.tr_scenario()?;
    let cell = loaded.config.cell();
    let hs = &loaded.config.runaway.h_wpm2k;
    if hs.is_empty() {
        bail!("runaway.h_Wpm2K needs at least one convection coefficient");
    }
    let mut meta = Meta::new("runaway", loaded, None)?;
    meta.mark(if user { "tr_params=calibrated" } else { "tr_params=uncalibrated" });
    let mut pairs = Vec::new();
    let mut triggers = Vec::new();
    for &h in hs {
        let env = aerobat_core::thermal::ThermalEnv { h_conv: h, ..loaded.config.env() };
        let run = simulate_tr(&params, &cell, &env, &sc)?;
        out.write_csv(&format!("runaway_h{h}.csv"), &meta, |w| {
            w.write_record(["t_s", "T_amb_C", "T_cell_C", "x_cell", "q_gen_W"])?;
            for k in 0..run.t.len() {
                w.write_record([
                    f(run.t[k]),
                    f(k_to_c(run.t_amb_k[k])),
                    f(k_to_c(run.t_cell_k[k])),
                    f(run.x[k]),
                    f(run.q_gen[k]),
                ])?;
            }
            Ok(())
        })?;
        pairs.push((format!("trigger_s.h{h}"), run.trigger_time.map_or("none".into(), f)));
        pairs.push((format!("heat_released_J.h{h}"), f(run.heat_released)));
        triggers.push((h, run.trigger_time));
    }
    // a run that never triggers counts as triggering at infinity
    let key = |t: Option<f64>| t.unwrap_or(f64::INFINITY);
    let ordered = triggers.windows(2).all(|w| key(w[1].1) >= key(w[0].1) || w[1].0 < w[0].0);
    let comparison = triggers
        .iter()
        .map(|(h, t)| format!("h={h}: {}", t.map_or("none".into(), |t| format!("{t:.1} s"))))
        .collect::<Vec<_>>()
        .join(", ");
    pairs.push(("trigger_comparison".into(), comparison.clone()));
    pairs.push(("trigger_nondecreasing_in_h".into(), ordered.to_string()));
    let refs: Vec<(&str, String)> = pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    out.write("runaway.txt", &meta, &summary(&refs))?;
    write_config(out, &meta, loaded)?;
    println!("trigger times {comparison}{}", if user { "" } else { " (uncalibrated parameters)" });
    Ok(Status::Done)
}

pub fn fit_ecm_cmd(loaded: &Loaded, out: &OutDir) -> Result<Status> {
    let c = &loaded.config;
    let cell = c.cell();
    let mut meta = Meta::new("fit-ecm", loaded, None)?;
    let data = match &c.fit.hppc_csv {
        Some(path) => {
            meta.mark("synthetic_data=false");
            HppcData::from_csv_reader(open(path)?, cell.capacity_ah, c.fit.soc_init).with_context(|| path.clone())?
        }
        None => {
            meta.mark("synthetic_data=true");
            let proto = generate_hppc_protocol(&cell)?;
            simulate_hppc(&proto, &cell, &EcmTables::synthetic_default(), c.fit.soc_init, c.fit.t_c, 1.0)?
        }
    };
    let fit = fit_ecm(&data, &c.fit_options())?;
    let mut buf = Vec::new();
    fit.tables.write_csv(&mut buf)?;
    out.write("ecm_tables.csv", &meta, &buf)?;
    out.write_csv("fit_bins.csv", &meta, |w| {
        w.write_record(["soc", "uoc_V", "r0_ohm", "r1_ohm", "tau1_s", "r2_ohm", "tau2_s", "rmse_mV"])?;
        for b in &fit.bins {
            w.write_record([f(b.soc), f(b.uoc), f(b.r0), f(b.r1), f(b.tau1), f(b.r2), f(b.tau2), f(b.rmse * 1e3)])?;
        }
        Ok(())
    })?;
    let pairs = [("rmse_mV", f(fit.rmse * 1e3)), ("bins", fit.bins.len().to_string()), ("samples", data.len().to_string())];
    out.write("fit_summary.txt", &meta, &summary(&pairs))?;
    write_config(out, &meta, loaded)?;
    println!("fitted {} SOC bins, RMSE = {:.3} mV", fit.bins.len(), fit.rmse * 1e3);
    Ok(Status::Done)
}

struct CpData {
    t: Vec<f64>,
    u: Vec<f64>,
    i: Vec<f64>,
    temp: Vec<f64>,
}

fn read_cp_csv(path: &str) -> Result<CpData> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().with_context(|| format!("{path}: cannot read header"))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ti), Some(ui), Some(ii)) = (col("t_s"), col("U_V"), col("I_A")) else {
        bail!("{path}: header must contain t_s, U_V and I_A");
    };
    let tc = col("T_C");
    let mut d = CpData { t: Vec::new(), u: Vec::new(), i: Vec::new(), temp: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{path}: malformed CSV"))?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |idx: usize, name: &str| -> Result<f64> {
            let s = rec.get(idx).unwrap_or("");
            s.parse::<f64>().with_context(|| format!("{path}: row {line}: column {name} value '{s}' is not a number"))
        };
        d.t.push(get(ti, "t_s")?);
        d.u.push(get(ui, "U_V")?);
        d.i.push(get(ii, "I_A")?);
        if let Some(tc) = tc {
            d.temp.push(get(tc, "T_C")?);
        }
    }
    if d.t.len() < 2 {
        bail!("{path}: need at least two samples");
    }
    Ok(d)
}

pub fn estimate_cp_cmd(loaded: &Loaded, out: &OutDir) -> Result<Status> {
    let c = &loaded.config;
    let Some(path) = &c.cp.data_csv else {
        bail!("estimate-cp needs cp.data_csv");
    };
    let d = read_cp_csv(path)?;
    let dt = d.t[1] - d.t[0];
    if d.t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
        bail!("{path}: samples must be uniformly spaced in t_s");
    }
    let t0 = c.cp.t0_c.or(d.temp.first().copied());
    let t1 = c.cp.t_end_c.or(d.temp.last().copied());
    let (Some(t0), Some(t1)) = (t0, t1) else {
        bail!("estimate-cp needs cp.T0_C and cp.T_end_C or a T_C column");
    };
    let cp = estimate_cp(&d.u, &d.i, dt, c.cell.mass_kg, t0, t1)?;
    let meta = Meta::new("estimate-cp", loaded, None)?;
    let pairs = [("cp_JpkgK", f(cp)), ("T0_C", f(t0)), ("T_end_C", f(t1)), ("samples", d.t.len().to_string())];
    out.write("cp.txt", &meta, &summary(&pairs))?;
    write_config(out, &meta, loaded)?;
    println!("c_p = {cp:.3} J/(kg K)");
    Ok(Status::Done)
}
