//! Experiment configuration files.
//!
//! A config is TOML with the sections `[run]`, `[env]`, `[learner]`,
//! `[search]` and `[lab]`. Every section is optional and every field has a
//! default; unknown fields are rejected. See `configs/` for annotated files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tape_core::lab::LabConfig;
use tape_core::learner::{check_pairing, Algorithm, LearnerConfig};
use tape_core::search::SearchConfig;
use tape_core::{EnvDescriptor, EnvKind, Error, GraphKind, GraphModelConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Train the configured learner once per seed.
    Train,
    /// Improvement, monotone, weighted-sum, variance and identity checks.
    Theory,
    /// Topology diversity of the graph models.
    Diversity,
    /// Train with topology search enabled and record selected edges.
    Search,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Train => "train",
            Suite::Theory => "theory",
            Suite::Diversity => "diversity",
            Suite::Search => "search",
        }
    }

    pub fn trains(self) -> bool {
        matches!(self, Suite::Train | Suite::Search)
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::Train, Suite::Theory, Suite::Diversity, Suite::Search]
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    /// Root of the content-addressed output tree.
    #[serde(skip_serializing_if = "is_empty_path")]
    pub out: PathBuf,
    pub suite: Suite,
    /// Write the topology sampled at every learner step.
    pub dump_topologies: bool,
}

fn is_empty_path(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seeds: vec![0], out: PathBuf::from("runs"), suite: Suite::Train, dump_topologies: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub env: EnvDescriptor,
    pub learner: LearnerConfig,
    /// Topology search; when present it replaces `learner.search`.
    pub search: Option<SearchConfig>,
    pub lab: LabConfig,
}

/// Command-line overrides, applied after the file is read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub env: Option<EnvKind>,
    pub p: Option<f64>,
    pub episodes: Option<usize>,
    pub out: Option<PathBuf>,
    pub suite: Option<Suite>,
    pub dump_topologies: bool,
}

/// The part of a config that determines results: everything except the seed
/// list and the output root.
#[derive(Serialize)]
struct Hashed<'a> {
    suite: Suite,
    dump_topologies: bool,
    env: &'a EnvDescriptor,
    learner: &'a LearnerConfig,
    lab: &'a LabConfig,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` assignment whose key appears as a word in
/// `msg`.
fn locate(src: &str, msg: &str) -> Option<usize> {
    let words: Vec<&str> =
        msg.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).filter(|w| !w.is_empty()).collect();
    for word in words {
        for (k, line) in src.lines().enumerate() {
            let t = line.trim_start();
            if let Some(rest) = t.strip_prefix(word) {
                if rest.trim_start().starts_with('=') {
                    return Some(k + 1);
                }
            }
        }
    }
    None
}

impl ExperimentConfig {
    /// Parses and validates a config. Errors carry the offending line when it
    /// can be identified.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        Self::from_toml_with(src, &Overrides::default())
    }

    pub fn from_toml_with(src: &str, overrides: &Overrides) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(src, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        let topology_set = src
            .parse::<toml::Table>()
            .ok()
            .and_then(|t| t.get("learner").and_then(|l| l.as_table()).map(|l| l.contains_key("topology")))
            .unwrap_or(false);
        cfg.resolve(overrides, topology_set).map_err(|e| match e {
            Error::Config(msg) => match locate(src, &msg) {
                Some(line) => Error::Parse { line, msg },
                None => Error::Config(msg),
            },
            other => other,
        })
    }

    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self> {
        let src =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with(&src, overrides)
    }

    /// Defaults plus overrides, for runs without a config file.
    pub fn from_overrides(overrides: &Overrides) -> Result<Self> {
        Self::default().resolve(overrides, false)
    }

    /// Applies overrides, folds `[search]` into the learner, and validates.
    /// Deterministic TAPE defaults to ER(0.5) unless a topology was given.
    pub fn resolve(mut self, o: &Overrides, topology_set: bool) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.run.seeds = vec![seed];
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(suite) = o.suite {
            self.run.suite = suite;
        }
        self.run.dump_topologies |= o.dump_topologies;
        if let Some(env) = o.env {
            self.env.kind = env;
        }
        if let Some(alg) = o.algorithm {
            self.learner.algorithm = alg;
        }
        if self.learner.algorithm == Algorithm::DeterministicTape && !topology_set && o.p.is_none() {
            self.learner.topology = GraphModelConfig::erdos_renyi(0.5);
        }
        if let Some(p) = o.p {
            self.learner.topology = match self.learner.topology.kind {
                GraphKind::ErdosRenyi => GraphModelConfig { p, ..self.learner.topology },
                _ => GraphModelConfig::erdos_renyi(p),
            };
        }
        if let Some(n) = o.episodes {
            self.learner.episodes = n;
        }
        if let Some(search) = self.search.take() {
            self.learner.search = search;
        }
        if self.run.suite == Suite::Search {
            self.learner.search.enabled = true;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            return Err(Error::Config("seeds contains duplicates".into()));
        }
        self.env.validate()?;
        self.lab.validate()?;
        if self.run.suite.trains() {
            self.learner.validate(self.env.n_agents())?;
            check_pairing(self.learner.algorithm, self.env.kind)?;
        }
        Ok(())
    }

    /// Canonical JSON of the result-determining fields. Object keys are
    /// sorted, so the text does not depend on field order in the file.
    pub fn canonical_json(&self) -> String {
        let hashed = Hashed {
            suite: self.run.suite,
            dump_topologies: self.run.dump_topologies,
            env: &self.env,
            learner: &self.learner,
            lab: &self.lab,
        };
        let value = serde_json::to_value(&hashed).expect("config serializes");
        serde_json::to_string(&value).expect("json value serializes")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// The first 16 hex digits of the hash; names the output directory.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    /// TOML of the result-determining fields, stored next to the runs.
    pub fn to_toml(&self) -> String {
        let stored = ExperimentConfig {
            run: RunSection { seeds: Vec::new(), out: PathBuf::new(), ..self.run.clone() },
            ..self.clone()
        };
        toml::to_string(&stored).expect("config serializes to toml")
    }
}
