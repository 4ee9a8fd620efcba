use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tape_lab::{emit_report, run_experiment, ExperimentConfig, Overrides, OUT_ENV};

/// Train topology-based policy-gradient learners and run the theory checks.
#[derive(Parser, Debug)]
#[command(name = "tape-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run this seed only.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// stochastic_tape, dop, coma or deterministic_tape.
    #[arg(long, value_name = "NAME")]
    algo: Option<String>,

    /// intro_game, easy, medium, hard, foraging or continuous_quadratic.
    #[arg(long, value_name = "NAME")]
    env: Option<String>,

    /// Edge probability of the ER topology model.
    #[arg(long, value_name = "FLOAT")]
    p: Option<f64>,

    #[arg(long, value_name = "N")]
    episodes: Option<usize>,

    /// Output root; the TAPE_LAB_OUT environment variable takes precedence.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// train, theory, diversity or search.
    #[arg(long, value_name = "SUITE")]
    suite: Option<String>,

    /// Write the topology used at every learner step.
    #[arg(long)]
    dump_topologies: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Summarise every completed run under DIR.
    Report { dir: PathBuf },
}

fn overrides(cli: &Cli) -> Result<Overrides> {
    let out = std::env::var_os(OUT_ENV).map(PathBuf::from).or_else(|| cli.out.clone());
    Ok(Overrides {
        seed: cli.seed,
        algorithm: cli.algo.as_deref().map(str::parse).transpose()?,
        env: cli.env.as_deref().map(str::parse).transpose()?,
        p: cli.p,
        episodes: cli.episodes,
        out,
        suite: cli.suite.as_deref().map(str::parse).transpose()?,
        dump_topologies: cli.dump_topologies,
    })
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(Command::Report { dir }) = &cli.command {
        let report = emit_report(dir).with_context(|| format!("report for {}", dir.display()))?;
        print!("{}", report.text());
        return Ok(report.claims.iter().all(|c| c.pass()));
    }
    let o = overrides(&cli)?;
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path, &o).with_context(|| format!("config {}", path.display()))?,
        None => ExperimentConfig::from_overrides(&o)?,
    };
    let summary = run_experiment(&cfg)?;
    println!("experiment {} ({})", summary.dir.display(), cfg.run.suite.name());
    let mut ok = true;
    for s in &summary.seeds {
        let status = if s.reused { "reused" } else { "done" };
        match s.manifest.final_metric {
            Some(m) => println!("seed {}: final metric {m:.4} [{status}]", s.seed),
            None => println!(
                "seed {}: {}/{} claims pass [{status}]",
                s.seed,
                s.manifest.claims_passed(),
                s.manifest.claims.len()
            ),
        }
        for c in &s.manifest.claims {
            println!("  {}", c.line());
            ok &= c.pass;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
