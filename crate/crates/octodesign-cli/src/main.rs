//! `octodesign` — batch front end for the octorotor co-design toolkit.
//!
//! Four subcommands drive the library pipelines: `size` scales a design,
//! `tune` synthesizes the 16 controller gains on it, `simulate` flies a
//! mission (optionally with a rotor failure), and `codesign` runs the full
//! nested plant/controller optimization. A JSON configuration file supplies
//! every setting; flags override individual values. Set `RUST_LOG=info`
//! for progress output.
//!
//! Exit codes: 0 success, 2 bad configuration or input files, 3 infeasible
//! result or diverged simulation, 4 numerical failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use octodesign::cli::{cmd_codesign, cmd_simulate, cmd_size, cmd_tune};
use octodesign::config::{FaultConfig, RunConfig};
use octodesign::designopt::Objective;
use octodesign::error::{Error, Result};
use octodesign::sizing::PlantDesign;

#[derive(Parser)]
#[command(
    name = "octodesign",
    version,
    about = "Plant/controller co-design for a coaxial octorotor",
    after_help = "Examples:\n  \
        octodesign size --out out/size\n  \
        octodesign tune --ftc on --seed 1 --out out/tune\n  \
        octodesign simulate --gains out/tune/gains.json --fault 1:3.0 --out out/sim\n  \
        octodesign codesign --objective energy --out out/codesign"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (JSON); flags below override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for every stochastic search.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Co-design objective.
    #[arg(long, global = true, value_enum, value_name = "WHAT")]
    objective: Option<ObjectiveArg>,

    /// Include the eight single-rotor-failure requirements.
    #[arg(long, global = true, value_enum, value_name = "on|off")]
    ftc: Option<Toggle>,

    /// Rotor failure for `simulate`: ROTOR:TIME (rotor 1-8, seconds).
    #[arg(long, global = true, value_name = "ROTOR:TIME")]
    fault: Option<String>,

    /// Gains file for `simulate`.
    #[arg(long, global = true, value_name = "PATH")]
    gains: Option<PathBuf>,

    /// Design ratios: six comma-separated values
    /// (l_mot,r_rot,theta0,v_bat,l_arm,e_arm).
    #[arg(long, global = true, value_name = "RATIOS")]
    design: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Scale a design and report the vehicle it produces.
    Size,
    /// Tune the 16 controller gains on a fixed design.
    Tune,
    /// Fly the mission with given gains, optionally failing one rotor.
    Simulate,
    /// Run the nested plant/controller design optimization.
    Codesign,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Energy,
    Mass,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(objective) = cli.objective {
        config.objective = match objective {
            ObjectiveArg::Energy => Objective::Energy,
            ObjectiveArg::Mass => Objective::Mass,
        };
    }
    if let Some(ftc) = cli.ftc {
        config.ftc = matches!(ftc, Toggle::On);
    }
    if let Some(fault) = &cli.fault {
        config.fault = Some(FaultConfig::parse(fault)?);
    }
    if let Some(gains) = &cli.gains {
        config.gains = Some(gains.clone());
    }
    if let Some(design) = &cli.design {
        config.design = parse_design(design)?;
    }
    config.validate()?;
    Ok(config)
}

fn parse_design(s: &str) -> Result<[f64; 6]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(Error::Config(format!(
            "--design needs six comma-separated ratios ({}), got {}",
            PlantDesign::FIELD_NAMES.join(","),
            parts.len()
        )));
    }
    let mut a = [0.0; 6];
    for (v, p) in a.iter_mut().zip(parts) {
        *v = p.parse().map_err(|_| Error::Config(format!("bad design ratio {p:?}")))?;
    }
    Ok(a)
}

fn run(cli: &Cli) -> Result<()> {
    let config = build_config(cli)?;
    match cli.command {
        Command::Size => {
            let report = cmd_size(&config)?;
            println!(
                "sized: take-off mass {:.3} kg, hover at {:.0} rad/s drawing {:.0} W total",
                report.m_total, report.hover.omega, report.hover.power_total
            );
        }
        Command::Tune => {
            let result = cmd_tune(&config)?;
            println!(
                "tuned: objective {:.4}, worst constraint {:.3e}, {} evaluations",
                result.objective, result.report.worst_constraint, result.evaluations
            );
        }
        Command::Simulate => {
            let summary = cmd_simulate(&config)?;
            print!(
                "flew {:.1} s: energy {:.0} J, peak power {:.0} W, max position error {:.3} m",
                summary.duration,
                summary.metrics.energy,
                summary.metrics.peak_power,
                summary.metrics.max_pos_err
            );
            match (summary.fault, summary.recovery_time) {
                (Some(_), Some(t)) => println!(", recovered {t:.2} s after the fault"),
                (Some(_), None) => println!(", never re-entered the hover bands"),
                _ => println!(),
            }
        }
        Command::Codesign => {
            let report = cmd_codesign(&config)?;
            println!(
                "co-design done: {} evaluations, best {:?} objective {:.1} ({:+.1}% vs reference)",
                report.evaluations,
                report.objective,
                report.best_objective,
                100.0 * report.rel_improvement
            );
        }
    }
    println!("artifacts in {}", config.out.display());
    Ok(())
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
