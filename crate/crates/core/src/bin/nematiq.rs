use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::LevelFilter;

use nematiq::config::{parse_config, Experiment, ExperimentConfig};
use nematiq::experiments::{run_accuracy, run_defect, run_energy_audit, run_trajectory};
use nematiq::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Accuracy1,
    Accuracy2,
    Defect,
    EnergyAudit,
    Custom,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Accuracy1 => Experiment::Accuracy1,
            Command::Accuracy2 => Experiment::Accuracy2,
            Command::Defect => Experiment::Defect,
            Command::EnergyAudit => Experiment::EnergyAudit,
            Command::Custom => Experiment::Custom,
        }
    }
}

/// Energy-stable SAV solver for the hydrodynamic Q-tensor model.
///
/// Exit status: 0 on success, 2 when a step fails the energy audit, 1 on
/// solver or configuration errors.
#[derive(Debug, Parser)]
#[command(name = "nematiq", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Config file (flat `key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Cells per axis, overriding `n`.
    #[arg(long)]
    grid: Option<usize>,
    /// Time step (base step of a sweep), overriding `dt`.
    #[arg(long)]
    dt: Option<f64>,
    /// Only print warnings and errors.
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(&cli.config)?;
    let mut cfg = parse_config(&text)?;
    if cfg.experiment != cli.command.experiment() {
        return Err(Error::Config {
            line: 0,
            message: format!("config is for `{}`, command is `{}`", cfg.experiment, cli.command.experiment()),
        });
    }
    if let Some(o) = &cli.output {
        cfg.output = o.clone();
    }
    if let Some(n) = cli.grid {
        cfg.n = n;
    }
    if let Some(dt) = cli.dt {
        cfg.dt = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the experiment; `Ok(false)` means some step failed the audit.
fn run(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let out = cfg.output.display();
    match cfg.experiment {
        Experiment::Accuracy1 | Experiment::Accuracy2 => {
            let res = run_accuracy(cfg)?;
            println!("{}: wrote {}", cfg.experiment, res.table_path.display());
            for row in &res.table.rows {
                let orders: Vec<String> = res
                    .table
                    .columns
                    .iter()
                    .zip(&row.orders)
                    .map(|(c, o)| format!("{c} {}", o.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())))
                    .collect();
                println!("  dt = {:e}: {}", row.dt, orders.join(", "));
            }
            Ok(res.runs.iter().all(|r| r.audit_failures == 0))
        }
        Experiment::Defect | Experiment::Custom => {
            let res = if cfg.experiment == Experiment::Defect { run_defect(cfg)? } else { run_trajectory(cfg)? };
            println!("{}: {} steps, wrote {out}/series.csv and {} snapshots", cfg.experiment, res.stats.steps, res.snapshots.len());
            if let Some(w) = res.initial_winding {
                println!("  initial winding number {w:.3}");
            }
            println!(
                "  energy {:.9e} -> {:.9e}, plateau ratio {:.3e}",
                res.stats.energy_initial,
                res.stats.energy_final,
                res.plateau_ratio()
            );
            Ok(res.stats.audit_failures == 0)
        }
        Experiment::EnergyAudit => {
            let res = run_energy_audit(cfg)?;
            println!("energy_audit: wrote {out}/series.csv");
            for r in &res.runs {
                println!(
                    "  dt = {:e}: {} steps, worst residual - tol = {:.3e}, {} failures",
                    r.dt, r.steps, r.worst_audit_margin, r.audit_failures
                );
            }
            Ok(res.failures() == 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { LevelFilter::Warn } else { LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: energy audit failed on at least one step");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_audit_failure() { 2 } else { 1 })
        }
    }
}
