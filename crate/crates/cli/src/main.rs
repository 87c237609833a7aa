use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kickwave::acceptance::{run_criterion, CRITERIA};
use kickwave::config::RunConfig;
use kickwave::experiments::run;
use kickwave::manifest::{digest_file, ExperimentManifest};

/// Kicked-Burgers simulation harness.
///
/// Each experiment subcommand reads a TOML run file, writes CSV/JSON outputs
/// plus a reproducibility manifest, and exits 0 on success, 2 when results
/// were produced but flagged untrusted, 1 on errors.
#[derive(Parser)]
#[command(name = "kickwave", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run file; defaults apply for every missing section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the environment master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (also settable via KICKWAVE_OUT; flag wins).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Subcommand)]
enum Command {
    /// Dump kick points of a space-time window.
    EnvSample(RunArgs),
    /// Evolve an initial potential and dump profiles.
    Evolve(RunArgs),
    /// One-sided minimizer approximant with stabilization diagnostics.
    Minimizer(RunArgs),
    /// Shape-constant estimation with quadratic-law and p-independence reports.
    Shape(RunArgs),
    /// Concentration and excursion tails of optimal actions.
    Concentration(RunArgs),
    /// Busemann tables, global potential consistency, global velocity.
    Busemann(RunArgs),
    /// Shock detection and genealogy.
    Shocks(RunArgs),
    /// Pullback attraction series.
    Pullback(RunArgs),
    /// Metric axioms and convergence-equivalence families.
    MetricCheck(RunArgs),
    /// Re-check a manifest's output digests and/or run the acceptance battery.
    Verify {
        /// Manifest to replay: re-runs its embedded config and compares
        /// result digests.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated criteria ids to run (default: all, when no
        /// manifest is given).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::EnvSample(a) => run_experiment("env-sample", a),
        Command::Evolve(a) => run_experiment("evolve", a),
        Command::Minimizer(a) => run_experiment("minimizer", a),
        Command::Shape(a) => run_experiment("shape", a),
        Command::Concentration(a) => run_experiment("concentration", a),
        Command::Busemann(a) => run_experiment("busemann", a),
        Command::Shocks(a) => run_experiment("shocks", a),
        Command::Pullback(a) => run_experiment("pullback", a),
        Command::MetricCheck(a) => run_experiment("metric-check", a),
        Command::Verify {
            manifest,
            criteria,
            out,
            workers,
        } => verify(manifest, criteria, out, workers),
    }
}

fn load_config(args: &RunArgs, requested: &str) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if args.config.is_none() && requested != cfg.experiment.kind() {
        bail!(
            "the '{requested}' subcommand needs a --config with a matching [experiment] section"
        );
    }
    if cfg.experiment.kind() != requested {
        return Err(kickwave::config::ConfigError::KindMismatch {
            in_config: cfg.experiment.kind().to_string(),
            requested: requested.to_string(),
        }
        .into());
    }
    if let Some(seed) = args.seed {
        cfg.environment.master_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("KICKWAVE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_experiment(kind: &str, args: RunArgs) -> Result<ExitCode> {
    let cfg = load_config(&args, kind)?;
    let dir = out_dir(&args);
    let outcome = run(&cfg, &dir, args.workers)?;
    println!(
        "{}: {} outputs in {}, result digest {}",
        kind,
        outcome.manifest.outputs.len(),
        dir.display(),
        &outcome.manifest.result_digest[..16]
    );
    if outcome.flagged() {
        println!(
            "flagged untrusted: boundary_contact={}, unreliable={}",
            outcome.manifest.flags.boundary_contact, outcome.manifest.flags.unreliable_estimates
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(
    manifest: Option<PathBuf>,
    criteria: Vec<u32>,
    out: Option<PathBuf>,
    workers: usize,
) -> Result<ExitCode> {
    let scratch = out
        .or_else(|| std::env::var_os("KICKWAVE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(path) = manifest {
        return verify_manifest(&path, &scratch, workers);
    }
    let ids: Vec<u32> = if criteria.is_empty() {
        CRITERIA.iter().map(|(k, _)| *k).collect()
    } else {
        criteria
    };
    fs::create_dir_all(&scratch)?;
    let mut all_pass = true;
    for id in ids {
        let r = run_criterion(id, &scratch);
        println!("{}", r.line());
        all_pass &= r.pass;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn verify_manifest(path: &PathBuf, scratch: &PathBuf, workers: usize) -> Result<ExitCode> {
    let manifest = ExperimentManifest::read(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    // check the recorded digests against the files next to the manifest
    let dir = path.parent().context("manifest has no parent directory")?;
    let mut stale = Vec::new();
    for rec in &manifest.outputs {
        let file = dir.join(&rec.file);
        match digest_file(&file) {
            Ok(d) if d.sha256 == rec.sha256 => {}
            _ => stale.push(rec.file.clone()),
        }
    }
    // replay the embedded config and compare result digests
    let cfg = RunConfig::parse(&manifest.config)?;
    let replay_dir = scratch.join("verify_replay");
    let outcome = run(&cfg, &replay_dir, workers)?;
    let reproduced = outcome.manifest.result_digest == manifest.result_digest;
    println!(
        "manifest {}: files {}, replay {}",
        path.display(),
        if stale.is_empty() {
            "intact".to_string()
        } else {
            format!("stale: {}", stale.join(", "))
        },
        if reproduced {
            "reproduced bit-for-bit"
        } else {
            "DIVERGED"
        }
    );
    Ok(if stale.is_empty() && reproduced {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
