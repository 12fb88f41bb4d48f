mod config;
mod plot;
mod run;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Experiments for the fractional Allen-Cahn equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its artifacts to a fresh directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a CSV from `run` into a JSON plot description.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: plot::PlotKind,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<String> {
    std::fs::write(dir.join(name), bytes)?;
    Ok(sha_hex(bytes))
}

fn run_cmd(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let canonical = cfg.canonical();
    let root = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let dir = root.join(&sha_hex(canonical.as_bytes())[..16]);
    let start = Instant::now();
    let report = match run::run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{} failed: {e}", cfg.experiment.name());
            let code = if e.is_invariant_failure() { EXIT_INVARIANT } else { EXIT_NUMERICAL };
            return ExitCode::from(code);
        }
    };
    let wall = start.elapsed().as_secs_f64();
    match persist(&dir, &cfg, &canonical, &report, wall) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("writing {}: {e:#}", dir.display());
            return ExitCode::from(EXIT_NUMERICAL);
        }
    }
    println!("{}", dir.display());
    for c in &report.checks {
        println!("{} {} = {:e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    }
}

fn persist(dir: &Path, cfg: &ExperimentConfig, canonical: &str, rep: &run::Report, wall: f64) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut artifacts = vec![];
    write(dir, "config.toml", canonical.as_bytes())?;
    for (name, text) in &rep.tables {
        artifacts.push(serde_json::json!({ "name": name, "sha256": write(dir, name, text.as_bytes())? }));
    }
    let checks = rep.checks_csv();
    artifacts.push(serde_json::json!({ "name": "checks.csv", "sha256": write(dir, "checks.csv", checks.as_bytes())? }));
    for (name, bytes) in &rep.snapshots {
        artifacts.push(serde_json::json!({ "name": name, "sha256": write(dir, name, bytes)? }));
    }
    let constants: serde_json::Map<String, serde_json::Value> =
        rep.constants.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
    let checks: Vec<_> = rep
        .checks
        .iter()
        .map(|c| serde_json::json!({ "name": c.name, "value": c.value, "bound": c.bound, "pass": c.pass }))
        .collect();
    let manifest = serde_json::json!({
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "versions": { "fraclab": env!("CARGO_PKG_VERSION") },
        "constants": constants,
        "wall_time_seconds": wall,
        "artifacts": artifacts,
        "checks": checks,
        "status": if rep.all_pass() { "pass" } else { "fail" },
    });
    write(dir, "manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

fn plot_cmd(input: &Path, kind: plot::PlotKind, out: Option<PathBuf>) -> ExitCode {
    let desc = match plot::describe(input, kind) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("plotdata: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let text = serde_json::to_string_pretty(&desc).expect("plot description serializes");
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, text) {
                eprintln!("plotdata: writing {}: {e}", p.display());
                return ExitCode::from(EXIT_NUMERICAL);
            }
        }
        None => println!("{text}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, seed, out } => run_cmd(&config, seed, out),
        Cmd::Plotdata { input, kind, out } => plot_cmd(&input, kind, out),
    }
}
