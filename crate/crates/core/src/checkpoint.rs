//! Plain-text `key=value` checkpoints for learned critics and policies.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! decode of an encode reproduces every parameter bit for bit. Lines starting
//! with `#` and blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::critic::{
    BinnedCritic, ContinuousLocalCritic, DecomposedCritic, JointCritic, JointValue, MonotonicMixer, QuadraticCritic,
    QUADRATIC_DIM,
};
use crate::error::{Error, Result};
use crate::learner::{ContinuousCritic, LearnedModel};
use crate::policy::{LinearDeterministicPolicy, Parameterization, TabularPolicy};

const FORMAT: &str = "tape-checkpoint-1";

#[derive(Default)]
struct Writer {
    out: String,
}

impl Writer {
    fn new(kind: &str) -> Self {
        let mut w = Self::default();
        w.put("format", FORMAT);
        w.put("kind", kind);
        w
    }

    fn put(&mut self, key: impl Display, value: impl Display) {
        self.out.push_str(&format!("{key}={value}\n"));
    }

    fn put_list<T: Display>(&mut self, key: impl Display, values: &[T]) {
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.put(key, joined.join(","));
    }
}

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
}

impl Reader {
    fn parse(text: &str, kind: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: k + 1, msg: format!("expected key=value, got {line:?}") })?;
            if entries.insert(key.to_string(), (k + 1, value.to_string())).is_some() {
                return Err(Error::Parse { line: k + 1, msg: format!("duplicate key {key:?}") });
            }
        }
        let r = Self { entries };
        let format: String = r.get("format")?;
        if format != FORMAT {
            return Err(Error::Parse { line: r.line("format"), msg: format!("unsupported format {format:?}") });
        }
        let found: String = r.get("kind")?;
        if found != kind {
            return Err(Error::Parse {
                line: r.line("kind"),
                msg: format!("expected a {kind} checkpoint, found {found}"),
            });
        }
        Ok(r)
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.0).unwrap_or(0)
    }

    fn raw(&self, key: &str) -> Result<&(usize, String)> {
        self.entries.get(key).ok_or_else(|| Error::Parse { line: 0, msg: format!("missing key {key:?}") })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let (line, value) = self.raw(key)?;
        value.parse().map_err(|_| Error::Parse { line: *line, msg: format!("bad value {value:?} for {key}") })
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let (line, value) = self.raw(key)?;
        if value.is_empty() {
            return Ok(Vec::new());
        }
        value
            .split(',')
            .map(|v| v.parse().map_err(|_| Error::Parse { line: *line, msg: format!("bad entry {v:?} in {key}") }))
            .collect()
    }

    /// `(suffix, line, value)` for every key beginning with `prefix`.
    fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, usize, &'a str)> + 'a {
        self.entries
            .range(prefix.to_string()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(move |(k, (line, v))| (&k[prefix.len()..], *line, v.as_str()))
    }
}

fn parse_index<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("bad index {s:?}") })
}

fn parse_values(v: &str, line: usize) -> Result<Vec<f64>> {
    v.split(',').map(|x| x.parse().map_err(|_| Error::Parse { line, msg: format!("bad number {x:?}") })).collect()
}

fn param_name(p: Parameterization) -> &'static str {
    match p {
        Parameterization::Simplex => "simplex",
        Parameterization::Softmax => "softmax",
    }
}

pub fn encode_tabular_policies(policies: &[TabularPolicy]) -> String {
    let mut w = Writer::new("tabular_policies");
    w.put("agents", policies.len());
    for (i, p) in policies.iter().enumerate() {
        w.put(format!("agent.{i}.n_actions"), p.n_actions());
        w.put(format!("agent.{i}.param"), param_name(p.parameterization()));
        for (key, params) in p.params() {
            w.put_list(format!("agent.{i}.key.{key}"), params);
        }
    }
    w.out
}

pub fn decode_tabular_policies(text: &str) -> Result<Vec<TabularPolicy>> {
    let r = Reader::parse(text, "tabular_policies")?;
    let n: usize = r.get("agents")?;
    (0..n)
        .map(|i| {
            let param = match r.get::<String>(&format!("agent.{i}.param"))?.as_str() {
                "simplex" => Parameterization::Simplex,
                "softmax" => Parameterization::Softmax,
                other => {
                    return Err(Error::Parse {
                        line: r.line(&format!("agent.{i}.param")),
                        msg: format!("unknown parameterization {other:?}"),
                    })
                }
            };
            let mut policy = TabularPolicy::new(r.get(&format!("agent.{i}.n_actions"))?, param);
            let prefix = format!("agent.{i}.key.");
            for (key, line, value) in r.with_prefix(&prefix) {
                policy
                    .set_params(parse_index(key, line)?, parse_values(value, line)?)
                    .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            }
            Ok(policy)
        })
        .collect()
}

pub fn encode_decomposed_critic(critic: &DecomposedCritic, joint: Option<&JointCritic>) -> String {
    let mut w = Writer::new("decomposed_critic");
    w.put_list("action_counts", critic.action_counts());
    w.put("gamma", critic.gamma());
    for (i, table) in critic.local_tables().iter().enumerate() {
        for (key, values) in table {
            w.put_list(format!("local.{i}.{key}"), values);
        }
    }
    for (state, raw) in critic.mix_table() {
        w.put_list(format!("mix.{state}"), raw);
    }
    for (state, b) in critic.bias_table() {
        w.put(format!("bias.{state}"), b);
    }
    if let Some(j) = joint {
        w.put("joint.gamma", j.gamma());
        for ((state, index), v) in j.table() {
            w.put(format!("joint.q.{state}.{index}"), v);
        }
    }
    w.out
}

pub fn decode_decomposed_critic(text: &str) -> Result<(DecomposedCritic, Option<JointCritic>)> {
    let r = Reader::parse(text, "decomposed_critic")?;
    let counts: Vec<usize> = r.list("action_counts")?;
    let mut critic = DecomposedCritic::new(counts.clone(), r.get("gamma")?)?;
    for (rest, line, value) in r.with_prefix("local.") {
        let (i, key) =
            rest.split_once('.').ok_or_else(|| Error::Parse { line, msg: "expected local.<agent>.<key>".into() })?;
        let i: usize = parse_index(i, line)?;
        let values = parse_values(value, line)?;
        if i >= counts.len() || values.len() != counts[i] {
            return Err(Error::Parse { line, msg: format!("local values do not match agent {i}") });
        }
        critic.set_local_values(i, parse_index(key, line)?, values);
    }
    for (state, line, value) in r.with_prefix("mix.") {
        let raw = parse_values(value, line)?;
        if raw.len() != counts.len() {
            return Err(Error::Parse { line, msg: "one mixing weight per agent expected".into() });
        }
        critic.set_mix_raw(parse_index(state, line)?, raw);
    }
    for (state, line, value) in r.with_prefix("bias.") {
        critic.set_bias(parse_index(state, line)?, parse_index(value, line)?);
    }
    let joint = if r.entries.contains_key("joint.gamma") {
        let mut j = JointCritic::new(counts, r.get("joint.gamma")?);
        for (rest, line, value) in r.with_prefix("joint.q.") {
            let (state, index) = rest
                .split_once('.')
                .ok_or_else(|| Error::Parse { line, msg: "expected joint.q.<state>.<index>".into() })?;
            j.set_entry(parse_index(state, line)?, parse_index(index, line)?, parse_index(value, line)?);
        }
        Some(j)
    } else {
        None
    };
    Ok((critic, joint))
}

pub fn encode_linear_policies(policies: &[LinearDeterministicPolicy]) -> String {
    let mut w = Writer::new("linear_policies");
    w.put("agents", policies.len());
    for (i, p) in policies.iter().enumerate() {
        w.put_list(format!("agent.{i}.weights"), &p.weights);
    }
    w.out
}

pub fn decode_linear_policies(text: &str) -> Result<Vec<LinearDeterministicPolicy>> {
    let r = Reader::parse(text, "linear_policies")?;
    let n: usize = r.get("agents")?;
    (0..n).map(|i| Ok(LinearDeterministicPolicy { weights: r.list(&format!("agent.{i}.weights"))? })).collect()
}

pub fn encode_continuous_critic(critic: &ContinuousCritic) -> String {
    let mut w = Writer::new("continuous_critic");
    w.put("agents", critic.locals.len());
    for (i, local) in critic.locals.iter().enumerate() {
        match local {
            ContinuousLocalCritic::Quadratic(q) => {
                w.put(format!("local.{i}.class"), "quadratic");
                w.put_list(format!("local.{i}.theta"), &q.theta);
            }
            ContinuousLocalCritic::Binned(b) => {
                w.put(format!("local.{i}.class"), "binned");
                w.put_list(format!("local.{i}.range"), &[b.low, b.high]);
                w.put_list(format!("local.{i}.values"), &b.values);
            }
        }
    }
    let m = &critic.mixer;
    w.put_list("mixer.shape", &[critic.locals.len(), m.hidden(), m.feature_dim()]);
    w.put_list("mixer.params", m.params());
    w.out
}

pub fn decode_continuous_critic(text: &str) -> Result<ContinuousCritic> {
    let r = Reader::parse(text, "continuous_critic")?;
    let n: usize = r.get("agents")?;
    let locals = (0..n)
        .map(|i| {
            let class_key = format!("local.{i}.class");
            match r.get::<String>(&class_key)?.as_str() {
                "quadratic" => {
                    let theta: Vec<f64> = r.list(&format!("local.{i}.theta"))?;
                    let theta: [f64; QUADRATIC_DIM] = theta.try_into().map_err(|_| Error::Parse {
                        line: r.line(&format!("local.{i}.theta")),
                        msg: format!("quadratic critic needs {QUADRATIC_DIM} coefficients"),
                    })?;
                    Ok(ContinuousLocalCritic::Quadratic(QuadraticCritic { theta }))
                }
                "binned" => {
                    let range: Vec<f64> = r.list(&format!("local.{i}.range"))?;
                    if range.len() != 2 {
                        return Err(Error::Parse {
                            line: r.line(&format!("local.{i}.range")),
                            msg: "range needs two bounds".into(),
                        });
                    }
                    let values = r.list(&format!("local.{i}.values"))?;
                    Ok(ContinuousLocalCritic::Binned(BinnedCritic { low: range[0], high: range[1], values }))
                }
                other => Err(Error::Parse { line: r.line(&class_key), msg: format!("unknown critic class {other:?}") }),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let shape: Vec<usize> = r.list("mixer.shape")?;
    if shape.len() != 3 || shape[0] != n {
        return Err(Error::Parse {
            line: r.line("mixer.shape"),
            msg: "mixer shape must be agents,hidden,features".into(),
        });
    }
    let mixer = MonotonicMixer::from_params(shape[0], shape[1], shape[2], r.list("mixer.params")?)
        .map_err(|e| Error::Parse { line: r.line("mixer.params"), msg: e.to_string() })?;
    Ok(ContinuousCritic { locals, mixer })
}

/// `(critic text, policy text)` for a trained model.
pub fn encode_model(model: &LearnedModel) -> (String, String) {
    match model {
        LearnedModel::Tabular { policies, critic, joint_critic } => {
            (encode_decomposed_critic(critic, joint_critic.as_ref()), encode_tabular_policies(policies))
        }
        LearnedModel::Deterministic { policies, critic } => {
            (encode_continuous_critic(critic), encode_linear_policies(policies))
        }
    }
}

pub fn decode_model(critic: &str, policy: &str) -> Result<LearnedModel> {
    if critic.lines().any(|l| l.trim() == "kind=continuous_critic") {
        Ok(LearnedModel::Deterministic {
            policies: decode_linear_policies(policy)?,
            critic: decode_continuous_critic(critic)?,
        })
    } else {
        let (critic, joint_critic) = decode_decomposed_critic(critic)?;
        Ok(LearnedModel::Tabular { policies: decode_tabular_policies(policy)?, critic, joint_critic })
    }
}
