//! One run of the routing game: every player is a learner.

use super::config::{ExperimentConfig, GameConfig, TrafficConfig};
use super::RunOutput;
use crate::agents::{Agent, AgentSpec, Feedback};
use crate::error::{Error, Result};
use crate::games::TrafficGame;
use crate::games::TrafficModel;
use crate::metrics::{average_congestion, log_checkpoints, MetricRow, RegretTracker};
use crate::rng::{streams, RngStream};
use crate::simplex::ActionId;
use crate::tntp::{load_network, sioux_falls};

/// Rounds averaged when checking the congestion threshold.
pub const CONGESTION_WINDOW: usize = 50;

pub fn build_traffic_game(cfg: &TrafficConfig, seed: u64) -> Result<TrafficGame> {
    let network = match &cfg.network {
        Some(p) => load_network(p)?,
        None => sioux_falls(),
    };
    let noise = crate::games::Noise {
        level: cfg.noise,
        is_std: cfg.noise_is_std,
    };
    let mut rng = RngStream::new(seed, streams::GAME);
    TrafficGame::random_od(network, cfg.players, cfg.demand, cfg.max_routes, cfg.stretch, noise, &mut rng)
}

pub fn run_traffic(cfg: &ExperimentConfig, spec: &AgentSpec, run: usize, seed: u64) -> Result<RunOutput> {
    let GameConfig::Traffic(tc) = &cfg.game else {
        return Err(Error::Config("not a traffic config".into()));
    };
    // One fixed game per experiment, like a fixed OD table; runs differ only
    // in the learners' and the environment's randomness.
    let game = build_traffic_game(tc, cfg.seed)?;
    let n_players = game.n_players();
    let mut agents = (0..n_players)
        .map(|i| {
            let belief = spec
                .estimator
                .needs_belief()
                .then(|| TrafficModel::new(&game, i, tc.kernel, tc.gp_noise_var, tc.prior_mean, tc.history_cap))
                .transpose()?;
            Agent::new(spec.clone(), game.n_routes(i), belief, cfg.horizon, tc.gp_noise_var)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rngs: Vec<RngStream> = (0..n_players).map(|i| RngStream::new(seed, streams::player(i))).collect();
    let mut erng = RngStream::new(seed, streams::ENVIRONMENT);
    let mut trackers: Vec<RegretTracker> = (0..n_players).map(|i| RegretTracker::new(game.n_routes(i))).collect();
    let capacities = game.capacities();
    let checkpoints = log_checkpoints(cfg.horizon, cfg.checkpoints_per_decade);
    let mut next_mark = 0;
    let mut metrics = Vec::with_capacity(checkpoints.len());
    let mut congestion = Vec::with_capacity(cfg.horizon);
    let mut congestion_sum = 0.0;
    let mut total_return = 0.0;
    let mut negative = 0usize;

    for t in 0..cfg.horizon {
        let profile: Vec<ActionId> = agents.iter().zip(rngs.iter_mut()).map(|(ag, r)| ag.act(r)).collect();
        let loads = game.loads(&profile)?;
        for i in 0..n_players {
            let a = profile[i];
            let others = game.others_load(i, &loads, a);
            let raw = game.reward_vector(i, &others);
            let map = game.reward_map(i);
            let mapped: Vec<f64> = raw.iter().map(|&r| map.apply(r)).collect();
            let sample = game.observe_given(i, a, &others, &mut erng);
            agents[i].observe(
                Feedback {
                    action: a,
                    context: &others,
                    reward: sample.clipped,
                    full_rewards: Some(&mapped),
                },
                &mut rngs[i],
            )?;
            trackers[i].push(&raw, a)?;
            total_return += raw[a.0];
            if raw[a.0] < 0.0 {
                negative += 1;
            }
        }
        let c = average_congestion(&loads, &capacities)?;
        congestion.push(c);
        congestion_sum += c;
        let done = t + 1;
        if next_mark < checkpoints.len() && checkpoints[next_mark] == done {
            next_mark += 1;
            metrics.push(MetricRow {
                t: done,
                avg_regret: mean_regret(&trackers),
                duality_gap: f64::NAN,
                kl_x: f64::NAN,
                kl_y: f64::NAN,
                avg_congestion: Some(congestion_sum / done as f64),
            });
        }
    }

    let rounds = (cfg.horizon * n_players) as f64;
    Ok(RunOutput {
        agent: spec.name(),
        run,
        seed,
        metrics,
        final_regret: mean_regret(&trackers),
        mean_return: total_return / rounds,
        negative_fraction: negative as f64 / rounds,
        diverged: None,
        congestion: Some(congestion),
        log: None,
    })
}

/// Mean average congestion when every player picks a route uniformly at
/// random, over `samples` independent profiles.
pub fn uniform_congestion(game: &TrafficGame, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, streams::ENVIRONMENT);
    let caps = game.capacities();
    let mut total = 0.0;
    for _ in 0..samples.max(1) {
        let profile: Vec<ActionId> = (0..game.n_players())
            .map(|i| ActionId(rng.below(game.n_routes(i))))
            .collect();
        total += average_congestion(&game.loads(&profile)?, &caps)?;
    }
    Ok(total / samples.max(1) as f64)
}

/// Average regret of the players, each against its own best fixed route.
fn mean_regret(trackers: &[RegretTracker]) -> f64 {
    trackers.iter().map(RegretTracker::average).sum::<f64>() / trackers.len() as f64
}

/// First round (1-based) whose trailing `window`-round mean congestion is at
/// or below `threshold`.
pub fn rounds_to_congestion(series: &[f64], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    let mut sum = 0.0;
    for (t, &c) in series.iter().enumerate() {
        sum += c;
        if t >= window {
            sum -= series[t - window];
        }
        let len = (t + 1).min(window);
        if t + 1 >= window && sum / len as f64 <= threshold {
            return Some(t + 1);
        }
    }
    None
}

/// Mean of the last quarter of the series minus the mean of the first quarter.
pub fn quartile_trend(series: &[f64]) -> f64 {
    let q = (series.len() / 4).max(1);
    let head: f64 = series[..q].iter().sum::<f64>() / q as f64;
    let tail: f64 = series[series.len() - q..].iter().sum::<f64>() / q as f64;
    tail - head
}
