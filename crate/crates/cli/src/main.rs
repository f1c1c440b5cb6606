use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::Status;

#[derive(Parser, Debug)]
#[command(name = "aerobat", version, about = "Electric aircraft battery, BTMS and thermal-runaway simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file or preset name; repeat to layer, later ones win.
    #[arg(long = "config", global = true, num_args = 1..)]
    config: Vec<String>,

    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// `section.key=value`, applied after all config files.
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,

    /// Time step in s for the selected command.
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Fly the configured profile and write the time series and a summary.
    Simulate,
    /// Minimum-energy BTMS design search.
    Optimize,
    /// Range over parallel strings and convection coefficients.
    Sweep,
    /// Heating-induced thermal-runaway scenario.
    Runaway,
    /// Fit 2RC parameters to an HPPC record.
    FitEcm,
    /// Back out the cell heat capacity from a heating test.
    EstimateCp,
    /// List the built-in presets.
    Presets,
}

fn run(cli: &Cli) -> anyhow::Result<Status> {
    if cli.command == Command::Presets {
        for (name, text) in config::PRESETS {
            println!("{name}: {}", text.lines().next().unwrap_or("").trim_start_matches("# "));
        }
        return Ok(Status::Done);
    }
    let mut overrides = cli.overrides.clone();
    if let Some(dt) = cli.dt {
        let key = if cli.command == Command::Runaway { "runaway.dt_s" } else { "sim.dt_s" };
        overrides.push(format!("{key}={dt:?}"));
    }
    let loaded = config::load(&cli.config, &overrides)?;
    let out = output::OutDir::create(&cli.out)?;
    match cli.command {
        Command::Simulate => commands::simulate_cmd(&loaded, &out),
        Command::Optimize => commands::optimize_cmd(&loaded, &out, cli.seed),
        Command::Sweep => commands::sweep_cmd(&loaded, &out),
        Command::Runaway => commands::runaway_cmd(&loaded, &out),
        Command::FitEcm => commands::fit_ecm_cmd(&loaded, &out),
        Command::EstimateCp => commands::estimate_cp_cmd(&loaded, &out),
        Command::Presets => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Stopped) => {
            eprintln!("run stopped early on a hard constraint");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
