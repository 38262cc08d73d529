//! Config-driven experiment runs, seed sweeps and summaries.

mod config;
pub mod experiments;
mod matrix;
mod traffic;

pub use config::{
    AgentEntry, BeliefConfig, ExperimentConfig, GameConfig, TrafficConfig, MIN_BELIEF_NOISE_VAR, SEED_ENV,
};
pub use matrix::{build_matrix_game, run_matrix};
pub use traffic::{
    build_traffic_game, quartile_trend, rounds_to_congestion, run_traffic, uniform_congestion, CONGESTION_WINDOW,
};

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::error::{Error, Result};
use crate::metrics::{write_metric_csv, MetricRow};
use crate::rng::derive_seed;
use crate::runlog::RunLog;

/// Result of one (agent, run) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub agent: String,
    pub run: usize,
    pub seed: u64,
    pub metrics: Vec<MetricRow>,
    pub final_regret: f64,
    /// Mean true payoff per round (per player-round for traffic), raw scale.
    pub mean_return: f64,
    /// Share of rounds whose true payoff was negative.
    pub negative_fraction: f64,
    /// Counterexample runs only: whether the agent stayed locked on one row
    /// against the opposite column from the second round on.
    pub diverged: Option<bool>,
    /// Traffic runs only: average congestion of every round.
    pub congestion: Option<Vec<f64>>,
    pub log: Option<RunLog>,
}

/// Seed of run `run`; it depends on the master seed and run index only.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, run as u64)
}

pub fn run_single(cfg: &ExperimentConfig, spec: &AgentSpec, run: usize) -> Result<RunOutput> {
    let seed = run_seed(cfg.seed, run);
    match cfg.game {
        GameConfig::Traffic(_) => run_traffic(cfg, spec, run, seed),
        _ => run_matrix(cfg, spec, run, seed),
    }
}

/// All runs of every agent, in (agent, run) order. Runs execute on the rayon
/// pool; results do not depend on scheduling.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let specs = cfg.agent_specs()?;
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|a| (0..cfg.runs).map(move |r| (a, r))).collect();
    jobs.par_iter()
        .map(|&(a, r)| run_single(cfg, &specs[a], r))
        .collect()
}

pub fn run_all_serial(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let specs = cfg.agent_specs()?;
    let mut out = Vec::new();
    for spec in &specs {
        for r in 0..cfg.runs {
            out.push(run_single(cfg, spec, r)?);
        }
    }
    Ok(out)
}

/// First checkpoint whose average regret is at or below `threshold`.
pub fn samples_to_threshold(series: &[(usize, f64)], threshold: f64) -> Option<usize> {
    series.iter().find(|(_, v)| *v <= threshold).map(|(t, _)| *t)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Config("slope needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Config("log-log slope needs positive coordinates".into()));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("slope needs at least two distinct x values".into()));
    }
    Ok(sxy / sxx)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub runs: usize,
    pub regret_mean: f64,
    pub regret_std: f64,
    pub mean_return: f64,
    pub negative_fraction: f64,
    pub divergence_rate: Option<f64>,
    pub samples_to_threshold: Option<usize>,
    /// Mean over runs of the average regret at each checkpoint.
    pub curve: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<AgentSummary>,
}

impl SummaryTable {
    /// Aggregates runs grouped by agent, in first-appearance order.
    pub fn from_runs(runs: &[RunOutput], regret_threshold: Option<f64>) -> Self {
        let mut names: Vec<&str> = Vec::new();
        for r in runs {
            if !names.contains(&r.agent.as_str()) {
                names.push(&r.agent);
            }
        }
        let rows = names
            .into_iter()
            .map(|name| {
                let mine: Vec<&RunOutput> = runs.iter().filter(|r| r.agent == name).collect();
                let finals: Vec<f64> = mine.iter().map(|r| r.final_regret).collect();
                let (regret_mean, regret_std) = mean_std(&finals);
                let n = mine.len() as f64;
                let divergence: Vec<bool> = mine.iter().filter_map(|r| r.diverged).collect();
                let divergence_rate = (!divergence.is_empty())
                    .then(|| divergence.iter().filter(|&&d| d).count() as f64 / divergence.len() as f64);
                let marks: Vec<usize> = mine[0].metrics.iter().map(|m| m.t).collect();
                let curve: Vec<(usize, f64)> = marks
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| (t, mine.iter().map(|r| r.metrics[k].avg_regret).sum::<f64>() / n))
                    .collect();
                AgentSummary {
                    agent: name.to_string(),
                    runs: mine.len(),
                    regret_mean,
                    regret_std,
                    mean_return: mine.iter().map(|r| r.mean_return).sum::<f64>() / n,
                    negative_fraction: mine.iter().map(|r| r.negative_fraction).sum::<f64>() / n,
                    divergence_rate,
                    samples_to_threshold: regret_threshold.and_then(|th| samples_to_threshold(&curve, th)),
                    curve,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn get(&self, agent: &str) -> Option<&AgentSummary> {
        self.rows.iter().find(|r| r.agent == agent)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "agent",
            "runs",
            "regret_mean",
            "regret_std",
            "mean_return",
            "negative_fraction",
            "divergence_rate",
            "samples_to_threshold",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.agent.clone(),
                r.runs.to_string(),
                r.regret_mean.to_string(),
                r.regret_std.to_string(),
                r.mean_return.to_string(),
                r.negative_fraction.to_string(),
                r.divergence_rate.map_or(String::new(), |v| v.to_string()),
                r.samples_to_threshold.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean-curve CSV: `agent,t,avg_regret`.
    pub fn write_curves<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["agent", "t", "avg_regret"])?;
        for r in &self.rows {
            for (t, v) in &r.curve {
                w.write_record([r.agent.clone(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>5} {:>12} {:>12} {:>12} {:>9} {:>9}",
            "agent", "runs", "avg_regret", "std", "return", "neg_frac", "diverge"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>5} {:>12.6} {:>12.6} {:>12.4} {:>9.4} {:>9}",
                r.agent,
                r.runs,
                r.regret_mean,
                r.regret_std,
                r.mean_return,
                r.negative_fraction,
                r.divergence_rate.map_or("-".to_string(), |v| format!("{v:.3}")),
            )?;
        }
        Ok(())
    }
}

pub struct ExperimentResult {
    pub summary: SummaryTable,
    pub runs: Vec<RunOutput>,
}

/// Runs everything, then writes artifacts when `cfg.output` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let runs = run_all(cfg)?;
    let summary = SummaryTable::from_runs(&runs, cfg.regret_threshold);
    if let Some(dir) = &cfg.output {
        write_artifacts(dir, cfg, &runs, &summary)?;
    }
    Ok(ExperimentResult { summary, runs })
}

pub fn run_csv_path(dir: &Path, agent: &str, run: usize) -> PathBuf {
    dir.join(agent).join(format!("run_{run:03}.csv"))
}

/// `<dir>/<agent>/run_NNN.csv` per run, optional logs and congestion
/// series, plus `summary.csv`, `curves.csv` and the resolved config.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, runs: &[RunOutput], summary: &SummaryTable) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in runs {
        let path = run_csv_path(dir, &r.agent, r.run);
        fs::create_dir_all(path.parent().expect("run path has a parent"))?;
        write_metric_csv(fs::File::create(&path)?, &r.metrics)?;
        if let Some(log) = &r.log {
            log.write_csv(fs::File::create(path.with_extension("log.csv"))?, true)?;
        }
        if let Some(c) = &r.congestion {
            let mut w = csv::Writer::from_path(path.with_extension("congestion.csv"))?;
            w.write_record(["t", "avg_congestion"])?;
            for (t, v) in c.iter().enumerate() {
                w.write_record([(t + 1).to_string(), v.to_string()])?;
            }
            w.flush()?;
        }
    }
    summary.write_csv(fs::File::create(dir.join("summary.csv"))?)?;
    summary.write_curves(fs::File::create(dir.join("curves.csv"))?)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let s = [(10, 0.5), (100, 0.05)];
        assert_eq!(samples_to_threshold(&s, 0.1), Some(100));
        assert_eq!(samples_to_threshold(&s, 0.9), Some(10));
        assert_eq!(samples_to_threshold(&s, 0.01), None);
    }

    #[test]
    fn slope_examples() {
        let ms = [5.0f64, 10.0, 20.0, 40.0];
        let sqrt: Vec<(f64, f64)> = ms.iter().map(|&m| (m, 0.3 * m.sqrt())).collect();
        assert!((log_log_slope(&sqrt).unwrap() - 0.5).abs() < 1e-6);
        let lin: Vec<(f64, f64)> = ms.iter().map(|&m| (m, 0.01 * m)).collect();
        assert!((log_log_slope(&lin).unwrap() - 1.0).abs() < 1e-6);
        assert!(log_log_slope(&[(1.0, 1.0)]).is_err());
    }
}
