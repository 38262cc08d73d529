//! Named learning agents built from an estimator and a no-regret rule, run
//! through the optimism-then-no-regret loop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    default_gamma, iwe_reward, iwe_rm_regret, mixture, ots_reward, ts_reward, ucb_reward, BetaSchedule, ClipMode,
    ImaginedReward, OtsSampleCount,
};
use crate::noregret::{expected_instant_regret, realized_instant_regret, EtaSchedule, HedgeState, RMState};
use crate::posterior::RewardModel;
use crate::rng::RngStream;
use crate::simplex::{ActionId, Simplex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    FullInfo,
    Iwe,
    Ucb,
    Ts,
    Ots,
}

impl EstimatorKind {
    pub fn needs_belief(self) -> bool {
        matches!(self, EstimatorKind::Ucb | EstimatorKind::Ts | EstimatorKind::Ots)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoRegretKind {
    Hedge,
    Rm,
}

/// Baseline subtracted when turning a reward vector into RM's instantaneous
/// regret.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretForm {
    /// `r - <X_t, r>`.
    #[default]
    Expected,
    /// `r - r(A_t)`.
    Realized,
}

/// Which algorithm to run, plus its tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub estimator: EstimatorKind,
    pub no_regret: NoRegretKind,
    /// Hedge schedule; `None` picks the bandit rate for IWE and the anytime
    /// rate otherwise.
    #[serde(default)]
    pub eta: Option<EtaSchedule>,
    #[serde(default)]
    pub beta: BetaSchedule,
    #[serde(default)]
    pub ots_samples: OtsSampleCount,
    /// Uniform-mixture weight for IWE-RM; `None` uses the horizon-tuned default.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub clip: ClipMode,
    #[serde(default)]
    pub regret_form: RegretForm,
}

impl AgentSpec {
    pub fn new(estimator: EstimatorKind, no_regret: NoRegretKind) -> Self {
        Self {
            estimator,
            no_regret,
            eta: None,
            beta: BetaSchedule::default(),
            ots_samples: OtsSampleCount::default(),
            gamma: None,
            clip: ClipMode::default(),
            regret_form: RegretForm::default(),
        }
    }

    pub fn name(&self) -> String {
        let rule = match self.no_regret {
            NoRegretKind::Hedge => "hedge",
            NoRegretKind::Rm => "rm",
        };
        match self.estimator {
            EstimatorKind::FullInfo => rule.to_string(),
            EstimatorKind::Iwe => format!("iwe-{rule}"),
            EstimatorKind::Ucb => format!("ucb-{rule}"),
            EstimatorKind::Ts => format!("ts-{rule}"),
            EstimatorKind::Ots => format!("ots-{rule}"),
        }
    }

    pub fn eta_schedule(&self) -> EtaSchedule {
        self.eta.unwrap_or(match self.estimator {
            EstimatorKind::Iwe => EtaSchedule::Bandit,
            _ => EtaSchedule::Anytime,
        })
    }

    pub fn uses_mixture(&self) -> bool {
        self.estimator == EstimatorKind::Iwe && self.no_regret == NoRegretKind::Rm
    }
}

impl FromStr for AgentSpec {
    type Err = Error;

    fn from_str(name: &str) -> Result<Self> {
        let (est, rule) = match name.split_once('-') {
            Some((e, r)) => (Some(e), r),
            None => (None, name),
        };
        let no_regret = match rule {
            "hedge" => NoRegretKind::Hedge,
            "rm" => NoRegretKind::Rm,
            _ => return Err(Error::Config(format!("unknown agent `{name}`"))),
        };
        let estimator = match est {
            None => EstimatorKind::FullInfo,
            Some("iwe") => EstimatorKind::Iwe,
            Some("ucb") => EstimatorKind::Ucb,
            Some("ts") => EstimatorKind::Ts,
            Some("ots") => EstimatorKind::Ots,
            Some(_) => return Err(Error::Config(format!("unknown agent `{name}`"))),
        };
        Ok(Self::new(estimator, no_regret))
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// All ten agent names accepted in configs.
pub const AGENT_NAMES: [&str; 10] = [
    "hedge", "rm", "iwe-hedge", "iwe-rm", "ucb-hedge", "ucb-rm", "ts-hedge", "ts-rm", "ots-hedge", "ots-rm",
];

#[derive(Clone, Debug)]
enum Rule {
    Hedge(HedgeState),
    Rm(RMState),
}

/// What the agent sees after a round.
pub struct Feedback<'a, C> {
    pub action: ActionId,
    /// Opponent side information: an action id or an occupancy vector.
    pub context: &'a C,
    /// Observed reward mapped into `[0, 1]`.
    pub reward: f64,
    /// Mean reward of every own action against the realized opponent play;
    /// required by full-information agents and ignored by the rest.
    pub full_rewards: Option<&'a [f64]>,
}

/// One learner. `M` is the reward model; agents that never consult a belief
/// still carry the type parameter.
#[derive(Clone, Debug)]
pub struct Agent<M: RewardModel> {
    spec: AgentSpec,
    n_actions: usize,
    rule: Rule,
    belief: Option<M>,
    /// Distribution actions are sampled from (post-mixture for IWE-RM).
    strategy: Simplex,
    gamma: f64,
    t: usize,
}

impl<M: RewardModel> Agent<M> {
    /// `horizon` and `noise_var` only feed the default mixture weight.
    pub fn new(spec: AgentSpec, n_actions: usize, belief: Option<M>, horizon: usize, noise_var: f64) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Config("agent needs at least one action".into()));
        }
        if spec.estimator.needs_belief() {
            match &belief {
                None => return Err(Error::Config(format!("agent `{}` needs a belief", spec.name()))),
                Some(b) if b.n_actions() != n_actions => {
                    return Err(Error::ShapeMismatch {
                        expected: n_actions,
                        got: b.n_actions(),
                    })
                }
                _ => {}
            }
        }
        let gamma = if spec.uses_mixture() {
            let g = spec.gamma.unwrap_or_else(|| default_gamma(noise_var, n_actions, horizon));
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("mixture weight must lie in [0, 1), got {g}")));
            }
            g
        } else {
            0.0
        };
        let rule = match spec.no_regret {
            NoRegretKind::Hedge => Rule::Hedge(HedgeState::new(n_actions, spec.eta_schedule())),
            NoRegretKind::Rm => Rule::Rm(RMState::new(n_actions)),
        };
        let strategy = Simplex::uniform(n_actions);
        Ok(Self {
            spec,
            n_actions,
            rule,
            belief,
            strategy,
            gamma,
            t: 0,
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Completed rounds.
    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn strategy(&self) -> &Simplex {
        &self.strategy
    }

    pub fn belief(&self) -> Option<&M> {
        self.belief.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The no-regret rule's own strategy, before any exploration mixture.
    pub fn base_strategy(&self) -> Simplex {
        match &self.rule {
            Rule::Hedge(h) => h.strategy().clone(),
            Rule::Rm(r) => r.strategy(),
        }
    }

    pub fn act(&self, rng: &mut RngStream) -> ActionId {
        self.strategy.sample(rng)
    }

    /// Imagined reward for the round just played, built from the belief as it
    /// stood before this round's observation and from fresh randomness, so it
    /// never depends on the agent's own action. Importance-weighted estimates
    /// are the exception by construction.
    pub fn imagined_reward(&self, fb: &Feedback<'_, M::Context>, rng: &mut RngStream) -> Result<ImaginedReward> {
        let clip = self.spec.clip;
        match self.spec.estimator {
            EstimatorKind::FullInfo => {
                let r = fb
                    .full_rewards
                    .ok_or_else(|| Error::Config("full-information agent needs the reward vector".into()))?;
                Ok(ImaginedReward {
                    values: r.to_vec(),
                    clipped: true,
                })
            }
            EstimatorKind::Iwe => iwe_reward(&self.strategy, fb.action, fb.reward),
            EstimatorKind::Ucb => ucb_reward(self.model()?, fb.context, &self.spec.beta, self.t, clip),
            EstimatorKind::Ts => ts_reward(self.model()?, fb.context, rng, clip),
            EstimatorKind::Ots => ots_reward(self.model()?, fb.context, &self.spec.ots_samples, self.t, rng, clip),
        }
    }

    fn model(&self) -> Result<&M> {
        self.belief
            .as_ref()
            .ok_or_else(|| Error::Config(format!("agent `{}` has no belief", self.spec.name())))
    }

    /// Builds the imagined reward, updates the belief, then advances the
    /// no-regret rule and refreshes the sampling distribution.
    pub fn observe(&mut self, fb: Feedback<'_, M::Context>, rng: &mut RngStream) -> Result<()> {
        ActionId::checked(fb.action.0, self.n_actions)?;
        if !fb.reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let iwe_rm = self.spec.uses_mixture();
        let r_tilde = if iwe_rm {
            None
        } else {
            Some(self.imagined_reward(&fb, rng)?)
        };
        if let Some(b) = self.belief.as_mut() {
            b.update(fb.action, fb.context, fb.reward)?;
        }
        match &mut self.rule {
            Rule::Hedge(h) => {
                let r = r_tilde.expect("hedge agents build a reward vector");
                h.update(&r.values, self.t)?;
                self.strategy = h.strategy().clone();
            }
            Rule::Rm(state) => {
                let reg = if iwe_rm {
                    let xhat = state.strategy();
                    iwe_rm_regret(&self.strategy, &xhat, fb.action, fb.reward)?
                } else {
                    let r = r_tilde.expect("reward vector built above");
                    match self.spec.regret_form {
                        RegretForm::Expected => expected_instant_regret(&self.strategy, &r.values),
                        RegretForm::Realized => realized_instant_regret(fb.action, &r.values),
                    }
                };
                state.accumulate(&reg)?;
                let xhat = state.strategy();
                self.strategy = if iwe_rm { mixture(&xhat, self.gamma) } else { xhat };
            }
        }
        self.t += 1;
        Ok(())
    }
}

/// Agent whose reward model is never consulted.
pub type ModelFreeAgent = Agent<crate::posterior::CountsBelief>;
