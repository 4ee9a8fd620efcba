//! Summaries over completed runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tape_core::stats::{mean, sliding_window, std_population};
use tape_core::{Error, Result};

use crate::run::{RunManifest, MANIFEST};

/// Evaluation points averaged by the report-time smoothing.
pub const SMOOTHING_WINDOW: usize = 4;

pub const COMPARISON_HEADER: &str = "env,algorithm,p,seeds,mean,std,rank,smoothed_final_eval";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub env: String,
    pub algorithm: String,
    pub p: Option<f64>,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    /// 1 for the highest mean within the environment; ties share a rank.
    pub rank: usize,
    /// Last point of the smoothed evaluation curve, averaged over seeds.
    pub smoothed_final_eval: Option<f64>,
    /// Smoothed evaluation curve averaged over seeds: `(episode, value)`.
    pub smoothed_curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRollup {
    pub name: String,
    pub passed: usize,
    pub total: usize,
}

impl ClaimRollup {
    pub fn pass(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ComparisonRow>,
    pub claims: Vec<ClaimRollup>,
}

/// Seed directories holding a manifest, at depth one or two below `dir`.
fn manifest_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let read = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(d)
            .map_err(|e| Error::Config(format!("{}: {e}", d.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        v.sort();
        Ok(v)
    };
    let mut out = Vec::new();
    if dir.join(MANIFEST).exists() {
        out.push(dir.to_path_buf());
    }
    for child in read(dir)? {
        if child.join(MANIFEST).exists() {
            out.push(child);
        } else {
            out.extend(read(&child)?.into_iter().filter(|g| g.join(MANIFEST).exists()));
        }
    }
    Ok(out)
}

/// `(episode, eval_return_mean)` from a stored curve.
pub fn read_curve(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, line)| {
            let mut cols = line.split(',');
            let bad = || Error::Parse { line: k + 1, msg: format!("bad curve row {line:?}") };
            let episode = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            let value = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            Ok((episode, value))
        })
        .collect()
}

fn smoothed_mean_curve(curves: &[Vec<(usize, f64)>]) -> Vec<(usize, f64)> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return Vec::new();
    }
    let smoothed: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| sliding_window(&c[..len].iter().map(|p| p.1).collect::<Vec<_>>(), SMOOTHING_WINDOW))
        .collect();
    (0..len).map(|t| (curves[0][t].0, mean(&smoothed.iter().map(|s| s[t]).collect::<Vec<_>>()))).collect()
}

/// Builds the comparison table and lab rollup from every completed manifest
/// found under `dir`.
pub fn build_report(dir: &Path) -> Result<Report> {
    let mut train: BTreeMap<(String, String, String), Vec<(RunManifest, PathBuf)>> = BTreeMap::new();
    let mut claims: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut found = 0;
    for seed_dir in manifest_dirs(dir)? {
        let m = RunManifest::load(&seed_dir.join(MANIFEST))?;
        if !m.complete {
            continue;
        }
        found += 1;
        for c in &m.claims {
            let e = claims.entry(c.name.clone()).or_default();
            e.0 += c.pass as usize;
            e.1 += 1;
        }
        if m.final_metric.is_some() {
            let key = (m.env.clone(), m.algorithm.clone(), m.p.map(|p| p.to_string()).unwrap_or_default());
            train.entry(key).or_default().push((m, seed_dir));
        }
    }
    if found == 0 {
        return Err(Error::Empty(format!("no completed runs under {}", dir.display())));
    }

    let mut rows = Vec::new();
    for ((env, algorithm, _), runs) in &train {
        let metrics: Vec<f64> = runs.iter().filter_map(|(m, _)| m.final_metric).collect();
        let curves: Vec<Vec<(usize, f64)>> = runs
            .iter()
            .filter(|(m, _)| m.artifacts.iter().any(|a| a == "curve.csv"))
            .map(|(_, d)| read_curve(&d.join("curve.csv")))
            .collect::<Result<_>>()?;
        let smoothed_curve = smoothed_mean_curve(&curves);
        rows.push(ComparisonRow {
            env: env.clone(),
            algorithm: algorithm.clone(),
            p: runs[0].0.p,
            seeds: metrics.len(),
            mean: mean(&metrics),
            std: std_population(&metrics),
            rank: 0,
            smoothed_final_eval: smoothed_curve.last().map(|p| p.1),
            smoothed_curve,
        });
    }
    let means: Vec<(String, f64)> = rows.iter().map(|r| (r.env.clone(), r.mean)).collect();
    for r in &mut rows {
        r.rank = 1 + means.iter().filter(|(env, m)| *env == r.env && *m > r.mean).count();
    }
    rows.sort_by(|a, b| a.env.cmp(&b.env).then(a.rank.cmp(&b.rank)).then(a.algorithm.cmp(&b.algorithm)));
    let claims = claims.into_iter().map(|(name, (passed, total))| ClaimRollup { name, passed, total }).collect();
    Ok(Report { rows, claims })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    pub fn comparison_csv(&self) -> String {
        let mut s = String::from(COMPARISON_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.env,
                r.algorithm,
                fmt_opt(r.p),
                r.seeds,
                r.mean,
                r.std,
                r.rank,
                fmt_opt(r.smoothed_final_eval)
            ));
        }
        s
    }

    pub fn smoothed_curves_csv(&self) -> String {
        let mut s = String::from("env,algorithm,p,episode,smoothed_eval\n");
        for r in &self.rows {
            for (episode, v) in &r.smoothed_curve {
                s.push_str(&format!("{},{},{},{episode},{v}\n", r.env, r.algorithm, fmt_opt(r.p)));
            }
        }
        s
    }

    /// Plain-text table plus one PASS/FAIL line per lab claim.
    pub fn text(&self) -> String {
        let mut s = String::new();
        if !self.rows.is_empty() {
            s.push_str(&format!(
                "{:<22} {:<18} {:>5} {:>5} {:>22} {:>4}\n",
                "env", "algorithm", "p", "seeds", "final (mean ± std)", "rank"
            ));
            for r in &self.rows {
                let p = r.p.map(|p| format!("{p}")).unwrap_or_else(|| "-".into());
                s.push_str(&format!(
                    "{:<22} {:<18} {:>5} {:>5} {:>22} {:>4}\n",
                    r.env,
                    r.algorithm,
                    p,
                    r.seeds,
                    format!("{:.4} ± {:.4}", r.mean, r.std),
                    r.rank
                ));
            }
        }
        if !self.claims.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            for c in &self.claims {
                s.push_str(&format!(
                    "{} {}: {}/{} seeds\n",
                    if c.pass() { "PASS" } else { "FAIL" },
                    c.name,
                    c.passed,
                    c.total
                ));
            }
        }
        s
    }
}

/// Builds the report for `dir` and writes `report.txt`, `comparison.csv` and
/// `smoothed_curves.csv` into it.
pub fn emit_report(dir: &Path) -> Result<Report> {
    let report = build_report(dir)?;
    for (name, text) in [
        ("report.txt", report.text()),
        ("comparison.csv", report.comparison_csv()),
        ("smoothed_curves.csv", report.smoothed_curves_csv()),
    ] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_uses_trailing_window() {
        let a = vec![(0, 0.0), (10, 4.0), (20, 8.0), (30, 4.0), (40, 8.0)];
        let b = vec![(0, 2.0), (10, 2.0), (20, 2.0), (30, 2.0), (40, 2.0)];
        let s = smoothed_mean_curve(&[a, b]);
        // Trailing means of a: 0, 2, 4, 4, 6; averaged with a constant 2.
        assert_eq!(s, vec![(0, 1.0), (10, 2.0), (20, 3.0), (30, 3.0), (40, 4.0)]);
    }
}
