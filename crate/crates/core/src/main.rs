use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mutual_holding::config::{parse_override, ExperimentConfig};
use mutual_holding::experiments::{
    cmd_compare, cmd_fixed_point, cmd_simulate, cmd_validate, SimulateMode, ValidateHooks,
};
use mutual_holding::Result;

/// Mean field game of mutual holding: default curves, particle systems and
/// validation suites.
#[derive(Parser)]
#[command(name = "mutual-holding", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the fixed-point map and write the convergence and default curves.
    FixedPoint(Common),
    /// Default curves with and without holding.
    Compare(Common),
    /// Run one particle system.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `equilibrium`, `baseline` or `smoothed:<n>`.
        #[arg(long, default_value = "equilibrium")]
        mode: SimulateMode,
    },
    /// Run the invariant and oracle checks.
    Validate(Common),
}

/// Flags override the config file, which overrides the built-in defaults.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// M = particles = 10000, N = 200, 200 iterates.
    #[arg(long)]
    paper_scale: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `bridge` or `discrete`.
    #[arg(long)]
    absorption: Option<String>,
    /// Fresh random numbers at every fixed-point iterate.
    #[arg(long)]
    no_crn: bool,
    /// Any config key, e.g. `--set drift=ou:0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| mutual_holding::Error::Io { path: path.clone(), source: e })?,
            None => String::new(),
        };
        let mut overrides = Vec::new();
        if self.paper_scale {
            let full = ExperimentConfig::default().full_scale();
            overrides.extend([
                ("paths".to_string(), full.paths.to_string()),
                ("steps".to_string(), full.steps.to_string()),
                ("particles".to_string(), full.particles.to_string()),
                ("max_iterations".to_string(), full.max_iterations.to_string()),
            ]);
        }
        for raw in &self.overrides {
            overrides.push(parse_override(raw)?);
        }
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), seed.to_string()));
        }
        if let Some(out) = &self.out {
            overrides.push(("output_dir".into(), out.display().to_string()));
        }
        if let Some(scheme) = &self.absorption {
            overrides.push(("absorption".into(), scheme.clone()));
        }
        if self.no_crn {
            overrides.push(("crn".into(), "false".into()));
        }
        ExperimentConfig::from_str_with_overrides(&text, &overrides)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::FixedPoint(common) => {
            let config = common.resolve()?;
            warn_all(&config);
            let report = cmd_fixed_point(&config)?;
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if let Some(d) = report.deltas.last() {
                println!("{} iterates, last sup delta {d:.6}", report.deltas.len());
            }
            Ok(true)
        }
        Command::Compare(common) => {
            let config = common.resolve()?;
            warn_all(&config);
            let report = cmd_compare(&config)?;
            println!("wrote {}", report.file.display());
            println!(
                "margin {:.6}, {} violations, D_tilde(T) - D(T) = {:.6}",
                report.margin,
                report.violations.len(),
                report.holding_gap_at_horizon()
            );
            Ok(report.passed())
        }
        Command::Simulate { common, mode } => {
            let config = common.resolve()?;
            warn_all(&config);
            let (record, files) = cmd_simulate(&config, mode)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            println!(
                "{mode}: default probability at T = {:.6}",
                record.default_probability().last().copied().unwrap_or(0.0)
            );
            Ok(true)
        }
        Command::Validate(common) => {
            let config = common.resolve()?;
            let report = cmd_validate(&config, ValidateHooks::default())?;
            println!("{report}");
            Ok(report.passed())
        }
    }
}

fn warn_all(config: &ExperimentConfig) {
    for w in config.warnings() {
        log::warn!("{w}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
