//! Layered TOML configuration. Files and presets are merged key by key in the
//! order given, then `section.key=value` overrides are applied on top.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use aerobat_core::atmosphere::{make_cruise_profile, FlightProfile};
use aerobat_core::btms::{BtmsDesign, ChannelGeometry, FluidProps};
use aerobat_core::ecm::{CellParams, EcmTables, FitOptions, PackLayout};
use aerobat_core::optimizer::{DesignBounds, OptimizeSettings};
use aerobat_core::powertrain::{rpm_to_rad_s, AircraftParams, MotorEfficiencyMap, PowertrainParams};
use aerobat_core::runaway::{calibrate_from_arc, HeatingMode, TrParams, TrScenario, BOLTZMANN};
use aerobat_core::simulator::{BtmsConfig, HardStops, SimConfig, SweepSettings};
use aerobat_core::thermal::{c_to_k, ThermalEnv};

pub const PRESETS: &[(&str, &str)] = &[
    ("paper-aircraft", include_str!("../presets/paper-aircraft.toml")),
    ("paper-cell-nmc1184", include_str!("../presets/paper-cell-nmc1184.toml")),
    ("paper-btms-water", include_str!("../presets/paper-btms-water.toml")),
    ("paper-btms-air", include_str!("../presets/paper-btms-air.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AircraftSection {
    pub m_empty_kg: f64,
    pub m_max_kg: f64,
    pub wing_area_m2: f64,
    pub c_d: f64,
    pub c_l: f64,
    pub alpha_deg: f64,
    pub alpha_max_deg: f64,
    pub gamma_min_deg: f64,
    pub gamma_max_deg: f64,
}

impl Default for AircraftSection {
    fn default() -> Self {
        Self {
            m_empty_kg: 1489.0,
            m_max_kg: 3000.0,
            wing_area_m2: 20.8,
            c_d: 0.03,
            c_l: 0.85,
            alpha_deg: 0.0,
            alpha_max_deg: 4.0,
            gamma_min_deg: -1.0,
            gamma_max_deg: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowertrainSection {
    pub eta_p: f64,
    pub motor_speed_rpm: f64,
    #[serde(rename = "p_motor_max_W")]
    pub p_motor_max_w: f64,
    pub n_motors: u32,
    /// Flat motor efficiency, used when no map file is given.
    pub eta_m: f64,
    /// CSV `tau_Nm,eta` motor efficiency map.
    pub eta_m_csv: Option<String>,
    #[serde(rename = "beta_per_W")]
    pub beta_per_w: f64,
    #[serde(rename = "p_aux_W")]
    pub p_aux_w: f64,
}

impl Default for PowertrainSection {
    fn default() -> Self {
        Self {
            eta_p: 0.71,
            motor_speed_rpm: 4000.0,
            p_motor_max_w: 250e3,
            n_motors: 2,
            eta_m: 0.95,
            eta_m_csv: None,
            beta_per_w: 1e-7,
            p_aux_w: 4e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackSection {
    pub n_s: usize,
    pub n_p: usize,
}

impl Default for PackSection {
    fn default() -> Self {
        Self { n_s: 118, n_p: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    #[serde(rename = "capacity_Ah")]
    pub capacity_ah: f64,
    #[serde(rename = "u_max_V")]
    pub u_max_v: f64,
    #[serde(rename = "u_nom_V")]
    pub u_nom_v: f64,
    #[serde(rename = "u_min_V")]
    pub u_min_v: f64,
    #[serde(rename = "i_charge_max_A")]
    pub i_charge_max_a: f64,
    #[serde(rename = "i_discharge_max_A")]
    pub i_discharge_max_a: f64,
    #[serde(rename = "T_min_C")]
    pub t_min_c: f64,
    #[serde(rename = "T_max_C")]
    pub t_max_c: f64,
    #[serde(rename = "T_opt_min_C")]
    pub t_opt_min_c: f64,
    #[serde(rename = "T_opt_max_C")]
    pub t_opt_max_c: f64,
    pub mass_kg: f64,
    #[serde(rename = "rho_ged_Whpkg")]
    pub rho_ged_whpkg: f64,
    pub length_m: f64,
    pub height_m: f64,
    pub width_m: f64,
    #[serde(rename = "cp_JpkgK")]
    pub cp_jpkgk: f64,
    #[serde(rename = "k_cond_WpmK")]
    pub k_cond_wpmk: f64,
    pub biot: f64,
}

impl Default for CellSection {
    fn default() -> Self {
        let c = CellParams::default();
        Self {
            capacity_ah: c.capacity_ah,
            u_max_v: c.u_max,
            u_nom_v: c.u_nom,
            u_min_v: c.u_min,
            i_charge_max_a: c.i_ch_max,
            i_discharge_max_a: c.i_dis_max,
            t_min_c: c.t_min_c,
            t_max_c: c.t_max_c,
            t_opt_min_c: c.t_opt_c[0],
            t_opt_max_c: c.t_opt_c[1],
            mass_kg: c.mass,
            rho_ged_whpkg: c.rho_ged_wh_kg,
            length_m: c.dims[0],
            height_m: c.dims[1],
            width_m: c.dims[2],
            cp_jpkgk: c.cp,
            k_cond_wpmk: c.k_cond,
            biot: c.biot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcmSection {
    /// Parameter table CSV; the built-in synthetic tables when absent.
    pub tables_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    #[serde(rename = "T_inf_C")]
    pub t_inf_c: f64,
    #[serde(rename = "h_Wpm2K")]
    pub h_wpm2k: f64,
    pub emissivity: f64,
    pub radiation: bool,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { t_inf_c: 25.0, h_wpm2k: 7.0, emissivity: 0.8, radiation: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtmsSection {
    pub enabled: bool,
    /// `water`, `air` or `custom` (properties from `[fluid]`).
    pub fluid: String,
    #[serde(rename = "T_fl_C")]
    pub t_fl_c: f64,
    pub vdot_m3ps: f64,
    #[serde(rename = "P_rated_W")]
    pub p_rated_w: f64,
    #[serde(rename = "K_cop")]
    pub k_cop: f64,
    #[serde(rename = "rho_P_Wpkg")]
    pub rho_p_wpkg: f64,
    pub m_loop_kg: f64,
    pub s_ch_m: f64,
    pub w_ch_m: f64,
    pub channel_length_m: f64,
    /// Contact area per cell; the cell footprint when absent.
    pub a_contact_m2: Option<f64>,
    pub s_t_m: Option<f64>,
    pub s_l_m: Option<f64>,
}

impl Default for BtmsSection {
    fn default() -> Self {
        let d = BtmsDesign::default();
        let g = ChannelGeometry::default();
        Self {
            enabled: false,
            fluid: "water".into(),
            t_fl_c: 24.78,
            vdot_m3ps: d.vdot,
            p_rated_w: d.p_rated,
            k_cop: d.k_btms,
            rho_p_wpkg: d.rho_p,
            m_loop_kg: d.m_loop,
            s_ch_m: g.s_ch,
            w_ch_m: g.w_ch,
            channel_length_m: g.length,
            a_contact_m2: None,
            s_t_m: None,
            s_l_m: None,
        }
    }
}

/// Custom coolant; every property must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidSection {
    pub name: Option<String>,
    pub nu_m2ps: Option<f64>,
    #[serde(rename = "k_WpmK")]
    pub k_wpmk: Option<f64>,
    pub rho_kgpm3: Option<f64>,
    #[serde(rename = "cp_JpkgK")]
    pub cp_jpkgk: Option<f64>,
    pub pr: Option<f64>,
    pub vdot_max_m3ps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt_s: f64,
    pub soc_init: f64,
    pub soc_floor: f64,
    #[serde(rename = "T_init_C")]
    pub t_init_c: Option<f64>,
    /// CSV `t_s,v_mps[,h_m]`; a level cruise from the keys below when absent.
    pub profile_csv: Option<String>,
    pub duration_s: f64,
    pub altitude_m: f64,
    pub speed_mps: f64,
    pub stop_on_soc: bool,
    pub stop_on_voltage: bool,
    pub stop_on_current: bool,
    pub stop_on_temperature: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt_s: 1.0,
            soc_init: 1.0,
            soc_floor: 0.15,
            t_init_c: None,
            profile_csv: None,
            duration_s: 8000.0,
            altitude_m: 500.0,
            speed_mps: 50.0,
            stop_on_soc: true,
            stop_on_voltage: true,
            stop_on_current: true,
            stop_on_temperature: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub budget: usize,
    pub seed: u64,
    pub restarts: usize,
    pub initial_weight: f64,
    pub weight_growth: f64,
    #[serde(rename = "T_fl_min_C")]
    pub t_fl_min_c: f64,
    #[serde(rename = "T_fl_max_C")]
    pub t_fl_max_c: f64,
    /// Defaults to 0.1 % of the coolant maximum.
    pub vdot_min_m3ps: Option<f64>,
    /// Defaults to the coolant maximum.
    pub vdot_max_m3ps: Option<f64>,
    #[serde(rename = "P_rated_min_W")]
    pub p_rated_min_w: f64,
    #[serde(rename = "P_rated_max_W")]
    pub p_rated_max_w: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let s = OptimizeSettings::default();
        Self {
            budget: s.budget,
            seed: s.seed,
            restarts: s.restarts,
            initial_weight: s.initial_weight,
            weight_growth: s.weight_growth,
            t_fl_min_c: 15.0,
            t_fl_max_c: 35.0,
            vdot_min_m3ps: None,
            vdot_max_m3ps: None,
            p_rated_min_w: 0.0,
            p_rated_max_w: 50e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_p: Vec<usize>,
    #[serde(rename = "h_Wpm2K")]
    pub h_wpm2k: Vec<f64>,
    pub altitude_m: f64,
    pub speed_mps: f64,
    pub max_duration_s: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepSettings::default();
        Self {
            n_p: (1..=64).collect(),
            h_wpm2k: vec![0.0, 3.5, 7.0],
            altitude_m: s.altitude,
            speed_mps: s.speed,
            max_duration_s: s.max_duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunawaySection {
    #[serde(rename = "ramp_Kpmin")]
    pub ramp_kpmin: f64,
    pub t_max_s: f64,
    pub dt_s: f64,
    #[serde(rename = "threshold_Kpmin")]
    pub threshold_kpmin: f64,
    /// `internal` or `oven`.
    pub mode: String,
    #[serde(rename = "ceiling_C")]
    pub ceiling_c: Option<f64>,
    #[serde(rename = "h_Wpm2K")]
    pub h_wpm2k: Vec<f64>,
    #[serde(rename = "i_react_Jpkg")]
    pub i_react_jpkg: f64,
    /// Direct Arrhenius parameters; both or neither.
    pub a_x_ps: Option<f64>,
    #[serde(rename = "E_A_over_kb_K")]
    pub e_a_over_kb_k: Option<f64>,
    /// Two ARC self-heating points `[T_C, rate_Kpmin]`, used instead of the
    /// direct parameters.
    pub arc_points: Option<Vec<[f64; 2]>>,
}

impl Default for RunawaySection {
    fn default() -> Self {
        let s = TrScenario::default();
        Self {
            ramp_kpmin: s.ramp * 60.0,
            t_max_s: s.t_max,
            dt_s: s.dt,
            threshold_kpmin: s.threshold * 60.0,
            mode: "internal".into(),
            ceiling_c: None,
            h_wpm2k: vec![0.0, 7.0],
            i_react_jpkg: TrParams::uncalibrated_default().i_react,
            a_x_ps: None,
            e_a_over_kb_k: None,
            arc_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// CSV `t_s,I_A,U_V[,T_C,soc]`; a synthetic test is generated when absent.
    pub hppc_csv: Option<String>,
    pub soc_init: f64,
    #[serde(rename = "T_C")]
    pub t_c: f64,
    pub min_rest_s: f64,
    pub tau_min_s: f64,
    pub tau_max_s: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        Self { hppc_csv: None, soc_init: 0.95, t_c: 23.0, min_rest_s: o.min_rest_s, tau_min_s: o.tau_min, tau_max_s: o.tau_max }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpSection {
    /// CSV `t_s,U_V,I_A[,T_C]`.
    pub data_csv: Option<String>,
    /// Start and end temperatures; taken from the `T_C` column when absent.
    #[serde(rename = "T0_C")]
    pub t0_c: Option<f64>,
    #[serde(rename = "T_end_C")]
    pub t_end_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub aircraft: AircraftSection,
    pub powertrain: PowertrainSection,
    pub pack: PackSection,
    pub cell: CellSection,
    pub ecm: EcmSection,
    pub env: EnvSection,
    pub btms: BtmsSection,
    pub fluid: FluidSection,
    pub sim: SimSection,
    pub optimize: OptimizeSection,
    pub sweep: SweepSection,
    pub runaway: RunawaySection,
    pub fit: FitSection,
    pub cp: CpSection,
}

/// Resolved configuration plus what went into it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub sources: Vec<String>,
    pub overrides: Vec<String>,
}

fn read_source(src: &str) -> Result<(String, String)> {
    if let Some((_, text)) = PRESETS.iter().find(|(name, _)| *name == src) {
        return Ok((format!("preset {src}"), (*text).to_string()));
    }
    let text = fs::read_to_string(src).with_context(|| format!("cannot read config file {src}"))?;
    Ok((src.to_string(), text))
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override '{spec}' is not of the form section.key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.len() < 2 || path.iter().any(String::is_empty) {
        bail!("override '{spec}' needs a dotted key such as btms.enabled");
    }
    let raw = raw.trim();
    // anything that is not a TOML literal is taken as a bare string
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn apply_override(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| anyhow!("override path {} crosses a non-table value", path.join(".")))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

/// Loads `sources` (paths or preset names) in order and applies `overrides`.
pub fn load(sources: &[String], overrides: &[String]) -> Result<Loaded> {
    let mut merged = Table::new();
    for src in sources {
        let (label, text) = read_source(src)?;
        // parsing each layer on its own keeps line numbers in the messages
        toml::from_str::<Config>(&text).map_err(|e| anyhow!("{label}: {e}"))?;
        let table: Table = text.parse().map_err(|e| anyhow!("{label}: {e}"))?;
        merge(&mut merged, table);
    }
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut merged, &path, value)?;
    }
    let config: Config = Value::Table(merged)
        .try_into()
        .map_err(|e| anyhow!("after applying overrides {}: {e}", overrides.join(" ")))?;
    Ok(Loaded { config, sources: sources.to_vec(), overrides: overrides.to_vec() })
}

impl Config {
    /// Fully resolved configuration as TOML. Fed back through `--config` it
    /// reproduces the run.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the resolved configuration and every data file it names.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        for path in self.data_files() {
            let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
            h.update(path.to_string_lossy().as_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }

    fn data_files(&self) -> Vec<PathBuf> {
        [
            &self.powertrain.eta_m_csv,
            &self.ecm.tables_csv,
            &self.sim.profile_csv,
            &self.fit.hppc_csv,
            &self.cp.data_csv,
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::from)
        .collect()
    }

    pub fn aircraft(&self) -> AircraftParams {
        let a = &self.aircraft;
        AircraftParams {
            m_empty: a.m_empty_kg,
            m_max: a.m_max_kg,
            wing_area: a.wing_area_m2,
            c_d: a.c_d,
            c_l: a.c_l,
            alpha: a.alpha_deg.to_radians(),
            alpha_max: a.alpha_max_deg.to_radians(),
            gamma_max: a.gamma_max_deg.to_radians(),
            gamma_min: a.gamma_min_deg.to_radians(),
            ..AircraftParams::default()
        }
    }

    pub fn powertrain(&self) -> Result<PowertrainParams> {
        let p = &self.powertrain;
        let omega = rpm_to_rad_s(p.motor_speed_rpm);
        if !(omega > 0.0) {
            bail!("powertrain.motor_speed_rpm must be positive");
        }
        let tau_max = p.n_motors as f64 * p.p_motor_max_w / omega;
        let eta_m = match &p.eta_m_csv {
            Some(path) => MotorEfficiencyMap::from_csv_reader(open(path)?).with_context(|| format!("{path}"))?,
            None => MotorEfficiencyMap::flat(p.eta_m, tau_max)?,
        };
        Ok(PowertrainParams {
            eta_p: p.eta_p,
            omega,
            tau_max,
            p_motor_max: p.p_motor_max_w,
            n_motors: p.n_motors,
            beta: p.beta_per_w,
            eta_m,
            p_aux: p.p_aux_w,
        })
    }

    pub fn cell(&self) -> CellParams {
        let c = &self.cell;
        CellParams {
            capacity_ah: c.capacity_ah,
            u_max: c.u_max_v,
            u_nom: c.u_nom_v,
            u_min: c.u_min_v,
            i_ch_max: c.i_charge_max_a,
            i_dis_max: c.i_discharge_max_a,
            t_min_c: c.t_min_c,
            t_max_c: c.t_max_c,
            t_opt_c: [c.t_opt_min_c, c.t_opt_max_c],
            mass: c.mass_kg,
            rho_ged_wh_kg: c.rho_ged_whpkg,
            dims: [c.length_m, c.height_m, c.width_m],
            cp: c.cp_jpkgk,
            k_cond: c.k_cond_wpmk,
            biot: c.biot,
        }
    }

    pub fn ecm(&self) -> Result<EcmTables> {
        match &self.ecm.tables_csv {
            Some(path) => Ok(EcmTables::from_csv_reader(open(path)?).with_context(|| format!("{path}"))?),
            None => Ok(EcmTables::synthetic_default()),
        }
    }

    pub fn env(&self) -> ThermalEnv {
        ThermalEnv { t_inf_k: c_to_k(self.env.t_inf_c), h_conv: self.env.h_wpm2k, emissivity: self.env.emissivity }
    }

    pub fn fluid(&self) -> Result<FluidProps> {
        let b = &self.btms;
        if b.fluid == "custom" {
            let f = &self.fluid;
            let need = |v: Option<f64>, key: &str| v.ok_or_else(|| anyhow!("fluid.{key} is required for a custom coolant"));
            return Ok(FluidProps {
                name: f.name.clone().unwrap_or_else(|| "custom".into()),
                nu: need(f.nu_m2ps, "nu_m2ps")?,
                k: need(f.k_wpmk, "k_WpmK")?,
                rho: need(f.rho_kgpm3, "rho_kgpm3")?,
                cp: need(f.cp_jpkgk, "cp_JpkgK")?,
                pr: need(f.pr, "pr")?,
                vdot_max: need(f.vdot_max_m3ps, "vdot_max_m3ps")?,
            });
        }
        FluidProps::preset(&b.fluid).ok_or_else(|| anyhow!("btms.fluid '{}' is not water, air or custom", b.fluid))
    }

    pub fn btms(&self) -> Result<Option<BtmsConfig>> {
        let b = &self.btms;
        if !b.enabled {
            return Ok(None);
        }
        let design = BtmsDesign {
            t_fl_k: c_to_k(b.t_fl_c),
            vdot: b.vdot_m3ps,
            p_rated: b.p_rated_w,
            k_btms: b.k_cop,
            rho_p: b.rho_p_wpkg,
            m_loop: b.m_loop_kg,
        };
        let cell = self.cell();
        let geometry = ChannelGeometry {
            s_ch: b.s_ch_m,
            w_ch: b.w_ch_m,
            length: b.channel_length_m,
            a_contact: b.a_contact_m2.unwrap_or(cell.footprint()),
            s_t: b.s_t_m,
            s_l: b.s_l_m,
        };
        Ok(Some(BtmsConfig { design, fluid: self.fluid()?, geometry }))
    }

    pub fn profile(&self) -> Result<FlightProfile> {
        let s = &self.sim;
        let p = match &s.profile_csv {
            Some(path) => FlightProfile::from_csv_reader(open(path)?).with_context(|| format!("{path}"))?,
            None => make_cruise_profile(s.duration_s, s.altitude_m, s.speed_mps, s.dt_s)?,
        };
        if (p.dt() - s.dt_s).abs() > 1e-12 {
            return Ok(p.resample(s.dt_s)?);
        }
        Ok(p)
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let env = self.env();
        let s = &self.sim;
        let cfg = SimConfig {
            profile: self.profile()?,
            aircraft: self.aircraft(),
            powertrain: self.powertrain()?,
            cell: self.cell(),
            ecm: self.ecm()?,
            layout: PackLayout::new(self.pack.n_s, self.pack.n_p)?,
            env,
            btms: self.btms()?,
            dt: s.dt_s,
            soc_floor: s.soc_floor,
            soc_init: s.soc_init,
            t_init_c: s.t_init_c.unwrap_or(self.env.t_inf_c),
            radiation: self.env.radiation,
            stops: HardStops {
                soc: s.stop_on_soc,
                voltage: s.stop_on_voltage,
                current: s.stop_on_current,
                temperature: s.stop_on_temperature,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bounds(&self) -> Result<DesignBounds> {
        let o = &self.optimize;
        let fluid = self.fluid()?;
        let d = DesignBounds::for_fluid(&fluid);
        let b = DesignBounds {
            t_fl_k: [c_to_k(o.t_fl_min_c), c_to_k(o.t_fl_max_c)],
            vdot: [o.vdot_min_m3ps.unwrap_or(d.vdot[0]), o.vdot_max_m3ps.unwrap_or(d.vdot[1])],
            p_rated: [o.p_rated_min_w, o.p_rated_max_w],
        };
        b.validate()?;
        Ok(b)
    }

    pub fn optimize_settings(&self, seed: Option<u64>) -> OptimizeSettings {
        let o = &self.optimize;
        OptimizeSettings {
            budget: o.budget,
            seed: seed.unwrap_or(o.seed),
            initial_weight: o.initial_weight,
            weight_growth: o.weight_growth,
            restarts: o.restarts,
        }
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        let s = &self.sweep;
        SweepSettings { altitude: s.altitude_m, speed: s.speed_mps, max_duration: s.max_duration_s }
    }

    /// Runaway parameters and whether they came from the user.
    pub fn tr_params(&self) -> Result<(TrParams, bool)> {
        let r = &self.runaway;
        let cp = self.cell.cp_jpkgk;
        if let Some(points) = &r.arc_points {
            let [p1, p2] = points.as_slice() else {
                bail!("runaway.arc_points needs exactly two [T_C, rate_Kpmin] pairs");
            };
            let conv = |p: &[f64; 2]| (c_to_k(p[0]), p[1] / 60.0);
            return Ok((calibrate_from_arc(conv(p1), conv(p2), r.i_react_jpkg, cp)?, true));
        }
        match (r.a_x_ps, r.e_a_over_kb_k) {
            (Some(a_x), Some(theta)) => Ok((TrParams { i_react: r.i_react_jpkg, a_x, e_a: theta * BOLTZMANN }, true)),
            (None, None) => Ok((TrParams { i_react: r.i_react_jpkg, ..TrParams::uncalibrated_default() }, false)),
            _ => bail!("runaway.a_x_ps and runaway.E_A_over_kb_K must be given together"),
        }
    }

    pub fn tr_scenario(&self) -> Result<TrScenario> {
        let r = &self.runaway;
        let mode = match r.mode.as_str() {
            "internal" => HeatingMode::Internal,
            "oven" => HeatingMode::Oven { ceiling_k: r.ceiling_c.map(c_to_k) },
            m => bail!("runaway.mode '{m}' is not internal or oven"),
        };
        Ok(TrScenario {
            ramp: r.ramp_kpmin / 60.0,
            t_max: r.t_max_s,
            dt: r.dt_s,
            threshold: r.threshold_kpmin / 60.0,
            mode,
            ..TrScenario::default()
        })
    }

    pub fn fit_options(&self) -> FitOptions {
        let f = &self.fit;
        FitOptions { min_rest_s: f.min_rest_s, tau_min: f.tau_min_s, tau_max: f.tau_max_s, ..FitOptions::default() }
    }
}

pub fn open(path: &str) -> Result<fs::File> {
    fs::File::open(Path::new(path)).with_context(|| format!("cannot open {path}"))
}
