use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qbm_heating::scenario::{
    load_config, run_scenario, write_coefficients, Overrides, ScenarioConfig, PRESET_NAMES,
};

/// Heating of a harmonic oscillator coupled to an engineered Ohmic reservoir.
#[derive(Debug, Parser)]
#[command(name = "qbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write traces.csv, coefficients.csv and report.json.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated methods, e.g. exact,secular,mcwf.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Master seed for the trajectory ensemble.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the coefficient table only.
    Coeffs {
        #[command(flatten)]
        source: Source,
        /// End of the time grid (s).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = true)]
struct Source {
    /// Built-in preset.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load(source: &Source, overrides: Overrides) -> Result<ScenarioConfig> {
    let text = match &source.config {
        Some(path) => read(path)?,
        None => String::new(),
    };
    let overrides = Overrides {
        preset: source.preset.clone(),
        ..overrides
    };
    let cfg = load_config(&text, &overrides).with_context(|| match &source.config {
        Some(p) => format!("in {}", p.display()),
        None => "in command-line options".to_string(),
    })?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            source,
            out,
            methods,
            seed,
        } => {
            let cfg = load(
                &source,
                Overrides {
                    methods,
                    seed,
                    out,
                    ..Default::default()
                },
            )?;
            let outcome = run_scenario(&cfg)?;
            print!("{}", outcome.report.summary());
            println!("wrote {}", cfg.out.display());
        }
        Command::Coeffs { source, t_max, out } => {
            let cfg = load(
                &source,
                Overrides {
                    t_max,
                    out,
                    // the method list is irrelevant for the table
                    methods: Some(vec!["exact".into()]),
                    ..Default::default()
                },
            )?;
            let grid = write_coefficients(&cfg)?;
            println!(
                "wrote {} rows to {}",
                grid.samples.len(),
                cfg.out.join(qbm_heating::scenario::COEFFICIENTS_FILE).display()
            );
        }
        Command::Validate { source } => {
            let cfg = load(&source, Overrides::default())?;
            println!("configuration is valid");
            println!(
                "omega_c = {:e}, omega0 = {:e}, r = {}, alpha^2 = {:e}, alpha^2 kT = {:e}, t_max = {:e}, points = {}",
                cfg.reservoir.cutoff,
                cfg.system.frequency,
                cfg.system.ratio(&cfg.reservoir),
                cfg.reservoir.coupling,
                cfg.reservoir.coupling_kt(),
                cfg.t_max,
                cfg.points
            );
            let names: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
            println!("methods: {}", names.join(","));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
