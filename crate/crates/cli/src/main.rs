use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drift_lab::io::{read_csv, RunManifest};
use drift_lab::{pipeline, ExperimentConfig, LabError};

/// Experiments on drift along a normally hyperbolic cylinder.
///
/// Exit codes: 0 all checks passed, 1 invariant failure, 2 inconclusive,
/// 3 configuration or usage error.
#[derive(Parser, Debug)]
#[command(name = "driftlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the sampled checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Transport stall tolerance; overrides the config.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Symplecticity, exactness, spectral gap, lambda lemma and orthogonality.
    Check,
    /// Invariant cylinder and its spectral gap.
    Cylinder,
    /// Homoclinic cylinders and scattering maps.
    Scattering,
    /// Birkhoff transport between the configured curves.
    Transport,
    /// Transport followed by a shadowing true orbit.
    Drift,
    /// Transport over a grid of family parameters.
    MuScan,
    /// Print gnuplot-style column descriptions of the CSV files of a run.
    Columns {
        /// Output directory of a finished run.
        dir: PathBuf,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| LabError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds.check = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.transport.tol = tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn columns(dir: &Path) -> Result<(), LabError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| LabError::Config(format!("{}: {e}", dir.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?;
    for a in manifest.artifacts.iter().filter(|a| !a.columns.is_empty()) {
        println!("# {}", a.path);
        for (i, c) in a.columns.iter().enumerate() {
            println!("#   {}: {c}", i + 1);
        }
        if let Ok((_, rows)) = read_csv(&dir.join(&a.path)) {
            println!("#   {} rows", rows.len());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<i32, LabError> {
    if let Command::Columns { dir } = &cli.command {
        columns(dir)?;
        return Ok(0);
    }
    let cfg = load(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Config(e.to_string()))?;
    }
    let manifest = match cli.command {
        Command::Check => pipeline::cmd_check(&cfg)?,
        Command::Cylinder => pipeline::cmd_cylinder(&cfg)?,
        Command::Scattering => pipeline::cmd_scattering(&cfg)?,
        Command::Transport => pipeline::cmd_transport(&cfg)?,
        Command::Drift => pipeline::cmd_drift(&cfg)?,
        Command::MuScan => pipeline::cmd_mu_scan(&cfg)?,
        Command::Columns { .. } => unreachable!(),
    };
    for s in &manifest.stages {
        let mark = if s.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:<14} {:>8.2}s  {}", s.name, s.seconds, s.detail);
    }
    println!("{:?} -> {}", manifest.status, cfg.output.display());
    Ok(manifest.status.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
