//! Runs an experiment once per seed into a content-addressed directory tree:
//!
//! ```text
//! <out>/<hash16>/config.toml
//! <out>/<hash16>/aggregate.csv
//! <out>/<hash16>/seed-<n>/manifest.json
//! <out>/<hash16>/seed-<n>/...artifacts
//! ```
//!
//! A seed whose manifest is complete is reused rather than rerun.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tape_core::checkpoint::encode_model;
use tape_core::lab::{render_summary, run_diversity_suite, run_theory_suite, ClaimResult, TheoryOutcome};
use tape_core::learner::{curve_csv, train};
use tape_core::search::heatmap_csv;
use tape_core::topology::dump_topologies;
use tape_core::{Error, Result};

use crate::config::{ExperimentConfig, Suite};

pub const MANIFEST: &str = "manifest.json";
pub const AGGREGATE_HEADER: &str =
    "seed,suite,algorithm,env,p,final_metric,episodes,env_steps,claims_passed,claims_total";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub suite: Suite,
    pub algorithm: String,
    pub env: String,
    /// Edge probability reported with the curve; absent for non-ER models.
    pub p: Option<f64>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub complete: bool,
    /// Paths relative to the seed directory.
    pub artifacts: Vec<String>,
    pub version: String,
    pub final_metric: Option<f64>,
    pub episodes: Option<usize>,
    pub env_steps: Option<usize>,
    pub claims: Vec<ClaimResult>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write(&dir.join(MANIFEST), &text)
    }

    pub fn claims_passed(&self) -> usize {
        self.claims.iter().filter(|c| c.pass).count()
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    /// True when a complete earlier run was found and nothing was rerun.
    pub reused: bool,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub hash: String,
    pub seeds: Vec<SeedOutcome>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Directory of one experiment under the output root.
pub fn experiment_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run.out.join(cfg.short_hash())
}

pub fn seed_dir(experiment: &Path, seed: u64) -> PathBuf {
    experiment.join(format!("seed-{seed}"))
}

/// Runs every seed of `cfg` in parallel and writes the aggregate table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = experiment_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let stored = dir.join("config.toml");
    if !stored.exists() {
        write(&stored, &cfg.to_toml())?;
    }
    let mut seeds: Vec<SeedOutcome> =
        cfg.run.seeds.par_iter().map(|&seed| run_seed(cfg, &dir, seed)).collect::<Result<_>>()?;
    seeds.sort_by_key(|s| s.seed);
    write(&dir.join("aggregate.csv"), &aggregate_csv(&dir)?)?;
    Ok(RunSummary { dir, hash: cfg.hash(), seeds })
}

fn run_seed(cfg: &ExperimentConfig, experiment: &Path, seed: u64) -> Result<SeedOutcome> {
    let dir = seed_dir(experiment, seed);
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        let manifest = RunManifest::load(&manifest_path)?;
        if manifest.complete {
            return Ok(SeedOutcome { seed, dir, reused: true, manifest });
        }
    }
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let p = cfg.learner.p();
    let mut manifest = RunManifest {
        config_hash: cfg.hash(),
        seed,
        suite: cfg.run.suite,
        algorithm: if cfg.run.suite.trains() { cfg.learner.algorithm.to_string() } else { "lab".into() },
        env: if cfg.run.suite.trains() { cfg.env.kind.to_string() } else { "none".into() },
        p: (cfg.run.suite.trains() && p.is_finite()).then_some(p),
        started_unix: now(),
        finished_unix: None,
        complete: false,
        artifacts: Vec::new(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        final_metric: None,
        episodes: None,
        env_steps: None,
        claims: Vec::new(),
    };
    manifest.save(&dir)?;

    let mut artifacts: Vec<(&str, String)> = Vec::new();
    match cfg.run.suite {
        Suite::Train | Suite::Search => {
            let out = train(&cfg.learner, &cfg.env, seed)?;
            artifacts.push(("curve.csv", curve_csv(&out.curve, seed, cfg.learner.algorithm, cfg.env.kind)));
            let (critic, policy) = encode_model(&out.model);
            artifacts.push(("critic.ckpt", critic));
            artifacts.push(("policy.ckpt", policy));
            if cfg.run.dump_topologies {
                artifacts.push(("topologies.csv", dump_topologies(&out.topologies)));
            }
            if let Some(ledger) = &out.edge_ledger {
                artifacts.push(("heatmap.csv", heatmap_csv(ledger, cfg.learner.topology.p)?));
            }
            manifest.final_metric = Some(out.final_metric);
            manifest.episodes = Some(out.episodes);
            manifest.env_steps = Some(out.env_steps);
        }
        Suite::Theory => {
            let out = run_theory_suite(&cfg.lab, seed)?;
            artifacts.push(("summary.txt", render_summary(&out.claims)));
            artifacts.push(("improvement.csv", improvement_csv(&out)));
            artifacts.push(("variance.csv", out.variance.csv()));
            artifacts.push(("identity.csv", identity_csv(&out)));
            manifest.claims = out.claims;
        }
        Suite::Diversity => {
            let (claims, report) = run_diversity_suite(&cfg.lab, seed)?;
            artifacts.push(("summary.txt", render_summary(&claims)));
            artifacts.push(("diversity.csv", report.csv()));
            artifacts.push(("diversity_summary.csv", report.summary_csv()));
            manifest.claims = claims;
        }
    }
    for (name, text) in &artifacts {
        write(&dir.join(name), text)?;
        manifest.artifacts.push(name.to_string());
    }
    manifest.finished_unix = Some(now());
    manifest.complete = true;
    manifest.save(&dir)?;
    Ok(SeedOutcome { seed, dir, reused: false, manifest })
}

fn improvement_csv(out: &TheoryOutcome) -> String {
    let mut s = String::from("game,instance,j_before,j_after,delta,pass,control_j_after,control_pass,monotone\n");
    for (game, suite) in &out.improvement {
        for ((r, c), m) in suite.reports.iter().zip(&suite.controls).zip(&suite.monotone) {
            s.push_str(&format!(
                "{game},{},{},{},{},{},{},{},{m}\n",
                r.instance, r.j_before, r.j_after, r.delta, r.pass, c.j_after, c.pass
            ));
        }
    }
    s
}

fn identity_csv(out: &TheoryOutcome) -> String {
    let mut s = String::from("agent,parameter,with_baseline,with_baseline_se,baseline_free,baseline_free_se,exact\n");
    for c in &out.identity.components {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.agent, c.parameter, c.with_baseline, c.with_baseline_se, c.baseline_free, c.baseline_free_se, c.exact
        ));
    }
    s
}

/// Complete manifests of every seed directory under an experiment, by seed.
pub fn completed_manifests(experiment: &Path) -> Result<Vec<RunManifest>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(experiment).map_err(|e| io_err(experiment, e))?;
    for entry in entries {
        let path = entry.map_err(|e| io_err(experiment, e))?.path().join(MANIFEST);
        if path.exists() {
            let m = RunManifest::load(&path)?;
            if m.complete {
                out.push(m);
            }
        }
    }
    out.sort_by_key(|m| m.seed);
    Ok(out)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// One row per completed seed. Contains no timestamps, so identical runs give
/// identical tables.
pub fn aggregate_csv(experiment: &Path) -> Result<String> {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for m in completed_manifests(experiment)? {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            m.seed,
            m.suite.name(),
            m.algorithm,
            m.env,
            opt(&m.p),
            opt(&m.final_metric),
            opt(&m.episodes),
            opt(&m.env_steps),
            m.claims_passed(),
            m.claims.len()
        ));
    }
    Ok(s)
}
