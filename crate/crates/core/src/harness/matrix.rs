//! One run of a two-player finite game: matrix, counterexample or radar.

use nalgebra::DMatrix;

use super::config::{BeliefConfig, ExperimentConfig, GameConfig, MIN_BELIEF_NOISE_VAR};
use super::RunOutput;
use crate::agents::{Agent, AgentSpec, Feedback};
use crate::error::{Error, Result};
use crate::games::{CounterexampleGame, GameEnv, MatrixGame, RadarGame};
use crate::metrics::{duality_gap, kl_to_nash, log_checkpoints, solve_nash, MetricRow, RegretTracker, DEFAULT_NASH_TOL};
use crate::opponents::{Opponent, OpponentSpec};
use crate::posterior::{CountsBelief, RewardModel};
use crate::rng::{streams, RngStream};
use crate::runlog::{RoundRecord, RunLog};
use crate::simplex::{ActionId, Simplex};

/// Draws this run's game from the `GAME` stream. Every algorithm in a run
/// sees the same instance.
pub fn build_matrix_game(game: &GameConfig, seed: u64) -> Result<MatrixGame> {
    let mut rng = RngStream::new(seed, streams::GAME);
    match game {
        GameConfig::RandomUniform { rows, cols, .. } => MatrixGame::random_uniform(*rows, *cols, game.noise(), &mut rng),
        GameConfig::RandomNormal {
            rows, cols, mean, variance, ..
        } => MatrixGame::random_normal(*rows, *cols, *mean, *variance, game.noise(), &mut rng),
        GameConfig::Counterexample { delta } => Ok(CounterexampleGame::new(*delta)?.game()),
        GameConfig::Matrix { payoff, .. } => {
            let rows = payoff.len();
            let cols = payoff.first().map_or(0, Vec::len);
            let m = DMatrix::from_row_iterator(rows, cols, payoff.iter().flatten().copied());
            let map = crate::games::range_map(&m);
            MatrixGame::new(m, game.noise(), map)
        }
        GameConfig::Radar { params, .. } => Ok(RadarGame::new(params.clone())?.matrix().clone()),
        GameConfig::Traffic(_) => Err(Error::Config("traffic is not a matrix game".into())),
    }
}

fn belief_noise(cfg: &BeliefConfig, game: &MatrixGame) -> f64 {
    cfg.noise_var
        .unwrap_or_else(|| game.mapped_noise_var().max(MIN_BELIEF_NOISE_VAR))
}

fn counts_belief(cfg: &BeliefConfig, game: &MatrixGame) -> Result<CountsBelief> {
    CountsBelief::new(
        game.n_agent_actions(),
        game.n_opponent_actions(),
        cfg.prior_mean,
        cfg.prior_var,
        belief_noise(cfg, game),
    )
}

enum Side {
    Fixed(Opponent),
    Learner { agent: Agent<CountsBelief>, view: MatrixGame },
}

/// Everything one run needs besides the agents themselves.
struct Setup<'a, G: GameEnv> {
    game: &'a G,
    payoff: &'a DMatrix<f64>,
    horizon: usize,
    checkpoints: Vec<usize>,
    nash: Option<(Simplex, Simplex)>,
    record_log: bool,
    track_divergence: bool,
}

pub fn run_matrix(cfg: &ExperimentConfig, spec: &AgentSpec, run: usize, seed: u64) -> Result<RunOutput> {
    let game = build_matrix_game(&cfg.game, seed)?;
    let nash = if cfg.nash {
        let n = solve_nash(game.payoff(), DEFAULT_NASH_TOL)?;
        Some((n.x, n.y))
    } else {
        None
    };
    let checkpoints = log_checkpoints(cfg.horizon, cfg.checkpoints_per_decade);
    let noise_var = belief_noise(&cfg.belief, &game);

    let side = match &cfg.opponent {
        OpponentSpec::SelfPlay => {
            let view = game.opponent_view();
            let belief = spec
                .estimator
                .needs_belief()
                .then(|| counts_belief(&cfg.belief, &view))
                .transpose()?;
            let agent = Agent::new(spec.clone(), view.n_agent_actions(), belief, cfg.horizon, noise_var)?;
            Side::Learner { agent, view }
        }
        other => Side::Fixed(Opponent::from_spec(other, game.payoff())?),
    };

    let setup = Setup {
        game: &game,
        payoff: game.payoff(),
        horizon: cfg.horizon,
        checkpoints,
        nash,
        record_log: cfg.record_log,
        track_divergence: matches!(cfg.game, GameConfig::Counterexample { .. }),
    };

    match &cfg.game {
        GameConfig::Radar { params, prior_var } => {
            let radar = RadarGame::new(params.clone())?;
            let belief = spec
                .estimator
                .needs_belief()
                .then(|| radar.linear_model(*prior_var, noise_var))
                .transpose()?;
            let alice = Agent::new(spec.clone(), game.n_agent_actions(), belief, cfg.horizon, noise_var)?;
            play(&setup, alice, side, spec, run, seed)
        }
        _ => {
            let belief = spec
                .estimator
                .needs_belief()
                .then(|| counts_belief(&cfg.belief, &game))
                .transpose()?;
            let alice = Agent::new(spec.clone(), game.n_agent_actions(), belief, cfg.horizon, noise_var)?;
            play(&setup, alice, side, spec, run, seed)
        }
    }
}

fn averaged(sum: &[f64], t: usize) -> Simplex {
    let w: Vec<f64> = sum.iter().map(|v| v / t as f64).collect();
    Simplex::normalize(&w).expect("averaged strategies are valid weights")
}

fn play<G: GameEnv, M: RewardModel<Context = ActionId>>(
    s: &Setup<'_, G>,
    mut alice: Agent<M>,
    mut side: Side,
    spec: &AgentSpec,
    run: usize,
    seed: u64,
) -> Result<RunOutput> {
    let (n, m) = (s.game.n_agent_actions(), s.game.n_opponent_actions());
    let map = s.game.reward_map();
    let mut arng = RngStream::new(seed, streams::AGENT);
    let mut orng = RngStream::new(seed, streams::OPPONENT);
    let mut erng = RngStream::new(seed, streams::ENVIRONMENT);

    let mut tracker = RegretTracker::new(n);
    let mut sum_x = vec![0.0; n];
    let mut sum_y = vec![0.0; m];
    let mut total_return = 0.0;
    let mut negative = 0usize;
    let mut metrics = Vec::with_capacity(s.checkpoints.len());
    let mut next_mark = 0;
    let mut log = s.record_log.then(|| RunLog::with_capacity(s.horizon));
    let mut first: Option<(ActionId, ActionId)> = None;
    let mut stuck = s.track_divergence;

    let mut raw = vec![0.0; n];
    let mut mapped = vec![0.0; n];
    let mut opp_mapped = vec![0.0; m];
    let mut against_y = vec![0.0; n];

    for t in 0..s.horizon {
        let x = alice.strategy().clone();
        let (b, y) = match &mut side {
            Side::Fixed(o) => o.act(t, &x, &mut orng)?,
            Side::Learner { agent, .. } => {
                let y = agent.strategy().clone();
                (agent.act(&mut orng), y)
            }
        };
        let a = alice.act(&mut arng);
        let sample = s.game.observe_reward(a, b, &mut erng);
        for i in 0..n {
            raw[i] = s.game.mean_reward(ActionId(i), b);
            mapped[i] = map.apply(raw[i]);
        }
        alice.observe(
            Feedback {
                action: a,
                context: &b,
                reward: sample.clipped,
                full_rewards: Some(&mapped),
            },
            &mut arng,
        )?;
        match &mut side {
            Side::Fixed(o) => o.record(a),
            Side::Learner { agent, view } => {
                let vmap = view.reward_map();
                for j in 0..m {
                    opp_mapped[j] = vmap.apply(view.mean_reward(ActionId(j), a));
                }
                let bob_sample = vmap.sample(-sample.value);
                agent.observe(
                    Feedback {
                        action: b,
                        context: &a,
                        reward: bob_sample.clipped,
                        full_rewards: Some(&opp_mapped),
                    },
                    &mut orng,
                )?;
            }
        }

        for (i, v) in against_y.iter_mut().enumerate() {
            *v = (0..m).map(|j| s.payoff[(i, j)] * y.probs()[j]).sum();
        }
        tracker.push_mixed(&against_y, &x)?;
        for (acc, p) in sum_x.iter_mut().zip(x.probs()) {
            *acc += p;
        }
        for (acc, p) in sum_y.iter_mut().zip(y.probs()) {
            *acc += p;
        }
        let f = raw[a.0];
        total_return += f;
        if f < 0.0 {
            negative += 1;
        }
        if s.track_divergence && t >= 1 {
            match first {
                None => {
                    first = Some((a, b));
                    stuck &= b.0 != a.0;
                }
                Some(ab) => stuck &= ab == (a, b),
            }
        }
        if let Some(l) = log.as_mut() {
            l.push(RoundRecord {
                t,
                agent_action: a,
                opp_action: b,
                obs_reward: sample.value,
                true_reward: f,
                strategy: Some(x.probs().to_vec()),
            })?;
        }
        let done = t + 1;
        if next_mark < s.checkpoints.len() && s.checkpoints[next_mark] == done {
            next_mark += 1;
            let xbar = averaged(&sum_x, done);
            let ybar = averaged(&sum_y, done);
            let (kl_x, kl_y) = match &s.nash {
                Some((xs, ys)) => (kl_to_nash(&xbar, xs), kl_to_nash(&ybar, ys)),
                None => (f64::NAN, f64::NAN),
            };
            metrics.push(MetricRow {
                t: done,
                avg_regret: tracker.average(),
                duality_gap: duality_gap(s.payoff, &xbar, &ybar)?,
                kl_x,
                kl_y,
                avg_congestion: None,
            });
        }
    }

    Ok(RunOutput {
        agent: spec.name(),
        run,
        seed,
        metrics,
        final_regret: tracker.average(),
        mean_return: total_return / s.horizon as f64,
        negative_fraction: negative as f64 / s.horizon as f64,
        diverged: s.track_divergence.then_some(stuck && s.horizon >= 2),
        congestion: None,
        log,
    })
}
