use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use mfirl::config::{load_config, RunConfig};
use mfirl::control_loop::Episode;
use mfirl::dynamics::eigenvalues;
use mfirl::error::Result;
use mfirl::io::{build_summary, oracle_check, write_artifacts};

#[derive(Parser)]
#[command(version, about = "Observer-based integral reinforcement learning for model-following control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write trajectory.csv, weights.csv and summary.json.
    Run {
        /// TOML run configuration; the built-in benchmark is used when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Output directory (overrides `run.output_dir`; default `out`).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one episode and compare the closed-loop learner with the Riccati oracle.
    OracleCheck {
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Print open-loop spectra, and closed-loop spectra for a given gain.
    Eig {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Comma-separated row-major feedback gain, e.g. `-15.9517,-4.0410,-4.9822`.
        #[arg(short, long, value_delimiter = ',', allow_hyphen_values = true)]
        gain: Option<Vec<f64>>,
    },
}

fn config_from(path: Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn fmt_spectrum(m: &DMatrix<f64>) -> Result<String> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
        .collect::<Vec<_>>()
        .join(", "))
}

fn run(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<bool> {
    let cfg = config_from(config)?;
    let dir = out
        .or_else(|| cfg.run.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let episode = Episode::new(&cfg)?;
    let model = episode.model().clone();
    let (log, err) = episode.run();
    let summary = build_summary(&model, &log)?;
    let paths = write_artifacts(&dir, &log, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("wrote {}, {}, {}", paths.trajectory.display(), paths.weights.display(), paths.summary.display());
    if let Some(e) = err {
        eprintln!("error: episode aborted: {e}");
        return Ok(false);
    }
    Ok(true)
}

fn oracle(config: Option<PathBuf>) -> Result<bool> {
    let cfg = config_from(config)?;
    let episode = Episode::new(&cfg)?;
    let model = episode.model().clone();
    let (log, err) = episode.run();
    let report = oracle_check(&cfg, &model, &log)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(e) = err {
        eprintln!("error: episode aborted: {e}");
        return Ok(false);
    }
    Ok(true)
}

fn eig(config: Option<PathBuf>, gain: Option<Vec<f64>>) -> Result<bool> {
    let cfg = config_from(config)?;
    let pm = cfg.validate()?;
    println!("open loop A:           {}", fmt_spectrum(&pm.a)?);
    println!("open loop A_hat:       {}", fmt_spectrum(&pm.a_hat)?);
    if let Some(g) = gain {
        let (m, n) = (pm.m(), pm.n());
        if g.len() != m * n {
            eprintln!("error: gain needs {} entries, got {}", m * n, g.len());
            return Ok(false);
        }
        let k = DMatrix::from_row_slice(m, n, &g);
        println!("closed loop A+BK:      {}", fmt_spectrum(&(&pm.a + &pm.b * &k))?);
        println!("closed loop A_hat+B_hatK: {}", fmt_spectrum(&(&pm.a_hat + &pm.b_hat * &k))?);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::OracleCheck { config } => oracle(config),
        Command::Eig { config, gain } => eig(config, gain),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
