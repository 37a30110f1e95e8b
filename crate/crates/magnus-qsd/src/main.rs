//! Command-line front end for the stochastic Magnus quantum-state-diffusion
//! library: ensemble runs, scheme comparison, convergence-order estimation,
//! radical-pair angle sweeps, and sampler diagnostics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use magnus_qsd::cli;
use magnus_qsd::config::{preset, resolve, Overrides, RawConfig, ResolvedConfig, PRESET_NAMES};
use magnus_qsd::{QsdError, Result};

#[derive(Parser)]
#[command(
    name = "magnus-qsd",
    version,
    about = "Trajectory solver for Lindblad dynamics using stochastic Magnus integrators"
)]
struct CliArgs {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML or JSON).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration preset.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured ensembles and write CSV/SVG/meta artifacts.
    Run(CommonArgs),
    /// Compare configured schemes against the exact solver.
    Compare(CommonArgs),
    /// Estimate the weak convergence order over a ladder of step sizes.
    Converge(CommonArgs),
    /// Sweep the radical-pair field angle and overlay the exact yields.
    RpmYield {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated angles in degrees (overrides the config).
        #[arg(long, value_name = "DEG,DEG,...")]
        angles: Option<String>,
    },
    /// Inspect the built-in models.
    Models {
        #[command(subcommand)]
        sub: ModelsCmd,
    },
    /// Check the empirical variances of the stochastic increment sampler.
    SamplerDiag {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        fourier_terms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ModelsCmd {
    /// List the built-in models and their observables.
    List,
}

fn load_config(common: &CommonArgs) -> Result<ResolvedConfig> {
    let raw: RawConfig = match (&common.config, &common.preset) {
        (Some(path), None) => RawConfig::from_file(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => {
            return Err(QsdError::Config(format!(
                "pass --config PATH or --preset NAME (presets: {})",
                PRESET_NAMES.join(", ")
            )))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects --config with --preset"),
    };
    let overrides = Overrides {
        out_dir: common.out.clone(),
        master_seed: common.seed,
    };
    resolve(raw, &overrides)
}

fn init_threads(n: Option<usize>) {
    if let Some(n) = n {
        // A second initialization (tests, repeated calls) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn parse_angles(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| QsdError::Config(format!("bad angle {s:?}")))
        })
        .collect()
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run(common) => {
            init_threads(common.threads);
            cli::cmd_run(&load_config(&common)?)
        }
        Cmd::Compare(common) => {
            init_threads(common.threads);
            cli::cmd_compare(&load_config(&common)?)
        }
        Cmd::Converge(common) => {
            init_threads(common.threads);
            cli::cmd_converge(&load_config(&common)?)
        }
        Cmd::RpmYield { common, angles } => {
            init_threads(common.threads);
            let angles = angles.as_deref().map(parse_angles).transpose()?;
            cli::cmd_rpm_yield(&load_config(&common)?, angles)
        }
        Cmd::Models { sub: ModelsCmd::List } => cli::cmd_models_list(),
        Cmd::SamplerDiag {
            samples,
            delta,
            fourier_terms,
            seed,
        } => cli::cmd_sampler_diag(samples, delta, fourier_terms, seed).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let args = CliArgs::parse();
    match dispatch(args.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
