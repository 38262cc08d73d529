//! Named experiments with desk-scale defaults.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AgentEntry, BeliefConfig, ExperimentConfig, GameConfig, TrafficConfig};
use super::{log_log_slope, run_all, run_single, RunOutput, SummaryTable};
use crate::agents::AgentSpec;
use crate::error::Result;
use crate::games::RadarParams;
use crate::opponents::{OpponentSpec, TieBreak};

pub const EXPERIMENT_NAMES: [&str; 7] =
    ["divergence", "table2", "ordering", "rate-scan", "full-info", "radar", "traffic"];

fn agents(names: &[&str]) -> Vec<AgentEntry> {
    names.iter().map(|&n| AgentEntry::from(n)).collect()
}

fn base(name: &str, seed: u64, runs: usize, horizon: usize, names: &[&str], game: GameConfig) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seed,
        runs,
        horizon,
        agents: agents(names),
        game,
        opponent: OpponentSpec::SelfPlay,
        belief: BeliefConfig::default(),
        checkpoints_per_decade: 30,
        nash: false,
        record_log: false,
        regret_threshold: None,
        output: None,
    }
}

/// Belief used against the counterexample: zero prior mean, unit prior
/// variance, likelihood variance `noise_var`.
pub fn counterexample_belief(noise_var: f64) -> BeliefConfig {
    BeliefConfig {
        prior_mean: 0.0,
        prior_var: 1.0,
        noise_var: Some(noise_var),
    }
}

/// One cell of the divergence experiment: `agent` against a best-responding
/// opponent on the counterexample game.
pub fn divergence(seed: u64, runs: usize, horizon: usize, agent: &str, delta: f64, noise_var: f64) -> ExperimentConfig {
    let mut cfg = base("divergence", seed, runs, horizon, &[agent], GameConfig::Counterexample { delta });
    cfg.opponent = OpponentSpec::BestResponse { tie: TieBreak::Lowest };
    cfg.belief = counterexample_belief(noise_var);
    cfg.checkpoints_per_decade = 5;
    cfg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCell {
    pub agent: String,
    pub delta: f64,
    pub noise_var: f64,
    pub runs: usize,
    pub diverged: usize,
}

impl DivergenceCell {
    pub fn rate(&self) -> f64 {
        self.diverged as f64 / self.runs as f64
    }
}

pub const DIVERGENCE_DELTAS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
pub const DIVERGENCE_NOISE_VARS: [f64; 4] = [0.01, 0.1, 0.5, 1.0];

/// Divergence rate over a `delta x noise_var` grid, rows in grid order.
pub fn divergence_grid(
    seed: u64,
    runs: usize,
    horizon: usize,
    agent: &str,
    deltas: &[f64],
    noise_vars: &[f64],
) -> Result<Vec<DivergenceCell>> {
    let mut cells = Vec::with_capacity(deltas.len() * noise_vars.len());
    for &delta in deltas {
        for &noise_var in noise_vars {
            let out = run_all(&divergence(seed, runs, horizon, agent, delta, noise_var))?;
            cells.push(DivergenceCell {
                agent: agent.to_string(),
                delta,
                noise_var,
                runs,
                diverged: out.iter().filter(|r| r.diverged == Some(true)).count(),
            });
        }
    }
    Ok(cells)
}

pub fn write_divergence_csv<W: Write>(out: W, cells: &[DivergenceCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent", "delta", "noise_var", "runs", "diverged", "rate"])?;
    for c in cells {
        w.write_record([
            c.agent.clone(),
            c.delta.to_string(),
            c.noise_var.to_string(),
            c.runs.to_string(),
            c.diverged.to_string(),
            c.rate().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// 10x5 matrix with `N(0.5, 2)` entries against the switching opponent.
pub fn table2(seed: u64, runs: usize, horizon: usize) -> ExperimentConfig {
    let game = GameConfig::RandomNormal {
        rows: 10,
        cols: 5,
        mean: 0.5,
        variance: 2.0,
        noise: 0.1,
        noise_is_std: false,
    };
    let mut cfg = base("table2", seed, runs, horizon, &["iwe-hedge", "ots-hedge"], game);
    cfg.opponent = OpponentSpec::NonStationary { period: 50 };
    cfg
}

/// 50x50 uniform random matrix in self-play.
pub fn ordering(seed: u64, runs: usize, horizon: usize) -> ExperimentConfig {
    let game = GameConfig::RandomUniform {
        rows: 50,
        cols: 50,
        noise: 0.1,
        noise_is_std: false,
    };
    base("ordering", seed, runs, horizon, &["ots-rm", "ucb-rm", "iwe-hedge"], game)
}

/// Square self-play game of size `m` for the rate scan.
pub fn rate_scan_config(seed: u64, runs: usize, horizon: usize, m: usize, names: &[&str]) -> ExperimentConfig {
    let game = GameConfig::RandomUniform {
        rows: m,
        cols: m,
        noise: 0.1,
        noise_is_std: false,
    };
    let mut cfg = base(&format!("rate-scan-{m}"), seed, runs, horizon, names, game);
    cfg.checkpoints_per_decade = 5;
    cfg
}

pub const RATE_SCAN_SIZES: [usize; 4] = [5, 10, 20, 40];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateScan {
    /// `(agent, m, mean final average regret)`.
    pub points: Vec<(String, usize, f64)>,
    /// `(agent, slope)`.
    pub slopes: Vec<(String, f64)>,
}

impl RateScan {
    pub fn slope(&self, agent: &str) -> Option<f64> {
        self.slopes.iter().find(|(a, _)| a == agent).map(|&(_, s)| s)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["agent", "m", "avg_regret", "slope"])?;
        for (a, m, v) in &self.points {
            let s = self.slope(a).unwrap_or(f64::NAN);
            w.write_record([a.clone(), m.to_string(), v.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn rate_scan(seed: u64, runs: usize, horizon: usize, sizes: &[usize], names: &[&str]) -> Result<RateScan> {
    let mut points = Vec::new();
    for &m in sizes {
        let out = run_all(&rate_scan_config(seed, runs, horizon, m, names))?;
        let table = SummaryTable::from_runs(&out, None);
        for row in &table.rows {
            points.push((row.agent.clone(), m, row.regret_mean));
        }
    }
    let mut slopes = Vec::new();
    for &name in names {
        let agent = name.parse::<AgentSpec>()?.name();
        let xy: Vec<(f64, f64)> = points
            .iter()
            .filter(|(a, _, _)| *a == agent)
            .map(|&(_, m, v)| (m as f64, v))
            .collect();
        slopes.push((agent, log_log_slope(&xy)?));
    }
    Ok(RateScan { points, slopes })
}

/// Full-information Hedge and RM against a best-responding adversary on a
/// noiseless random game.
pub fn full_info(seed: u64, runs: usize, horizon: usize, n: usize) -> ExperimentConfig {
    let game = GameConfig::RandomUniform {
        rows: n,
        cols: n,
        noise: 0.0,
        noise_is_std: false,
    };
    let mut cfg = base("full-info", seed, runs, horizon, &["hedge", "rm"], game);
    cfg.opponent = OpponentSpec::BestResponse { tie: TieBreak::Lowest };
    cfg.checkpoints_per_decade = 5;
    cfg
}

/// Cumulative regret on the `[0, 1]` scale the bounds are stated for.
pub fn unit_cumulative_regret(run: &RunOutput, horizon: usize, range: f64) -> f64 {
    run.final_regret * horizon as f64 / range
}

pub fn hedge_bound(horizon: usize, n: usize) -> f64 {
    2.0 * (horizon as f64 * (n as f64).ln()).sqrt()
}

pub fn rm_bound(horizon: usize, n: usize) -> f64 {
    2.0 * (horizon as f64 * n as f64).sqrt()
}

/// Radar against the adaptive jammer.
pub fn radar(seed: u64, runs: usize, horizon: usize) -> ExperimentConfig {
    let game = GameConfig::Radar {
        params: RadarParams::default(),
        prior_var: 1.0,
    };
    let mut cfg = base("radar", seed, runs, horizon, &["iwe-hedge", "ucb-rm", "ts-rm", "ots-rm"], game);
    cfg.opponent = OpponentSpec::AdaptiveJammer { window: 10 };
    cfg
}

/// Routing game on Sioux-Falls, or on `network` when given.
pub fn traffic(seed: u64, runs: usize, horizon: usize, network: Option<PathBuf>) -> ExperimentConfig {
    let tc = TrafficConfig {
        network,
        ..TrafficConfig::default()
    };
    let mut cfg = base("traffic", seed, runs, horizon, &["iwe-hedge", "ucb-rm", "ots-rm"], GameConfig::Traffic(tc));
    cfg.checkpoints_per_decade = 10;
    cfg
}

/// Runs `cfg` one (agent, run) pair at a time on the pool, returning outputs
/// keyed the same way as [`run_all`]. Used where a caller needs runs of
/// several configs interleaved.
pub fn run_pairs(cfgs: &[ExperimentConfig]) -> Result<Vec<Vec<RunOutput>>> {
    let jobs: Vec<(usize, AgentSpec, usize)> = cfgs
        .iter()
        .enumerate()
        .map(|(c, cfg)| Ok((c, cfg.agent_specs()?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(c, specs)| {
            let runs = cfgs[c].runs;
            specs.into_iter().flat_map(move |s| (0..runs).map(move |r| (c, s.clone(), r)))
        })
        .collect();
    for cfg in cfgs {
        cfg.validate()?;
    }
    let outs = jobs
        .par_iter()
        .map(|(c, s, r)| run_single(&cfgs[*c], s, *r).map(|o| (*c, o)))
        .collect::<Result<Vec<_>>>()?;
    let mut grouped = vec![Vec::new(); cfgs.len()];
    for (c, o) in outs {
        grouped[c].push(o);
    }
    Ok(grouped)
}
