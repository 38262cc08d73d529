use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::ActionId;

/// One round of play as seen by the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub agent_action: ActionId,
    pub opp_action: ActionId,
    /// Raw observed payoff, noise included.
    pub obs_reward: f64,
    /// Noiseless mean payoff `f(A_t, B_t)`.
    pub true_reward: f64,
    /// Sampling distribution the agent used this round, if recorded.
    pub strategy: Option<Vec<f64>>,
}

/// In-memory history of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    rounds: Vec<RoundRecord>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            rounds: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        if let Some(prev) = self.rounds.last() {
            if record.t <= prev.t {
                return Err(Error::NonMonotoneLog {
                    prev: prev.t,
                    got: record.t,
                });
            }
        }
        self.rounds.push(record);
        Ok(())
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn opponent_actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.rounds.iter().map(|r| r.opp_action)
    }

    /// `t,agent_action,opp_action,obs_reward,true_reward[,x0,x1,...]`.
    ///
    /// Strategy columns are emitted only when `with_strategy` is set and every
    /// round carries a snapshot of the same width.
    pub fn write_csv<W: Write>(&self, out: W, with_strategy: bool) -> Result<()> {
        let width = if with_strategy {
            strategy_width(&self.rounds)
        } else {
            None
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "t".to_string(),
            "agent_action".into(),
            "opp_action".into(),
            "obs_reward".into(),
            "true_reward".into(),
        ];
        if let Some(n) = width {
            header.extend((0..n).map(|i| format!("x{i}")));
        }
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for r in &self.rounds {
            row.clear();
            row.push(r.t.to_string());
            row.push(r.agent_action.0.to_string());
            row.push(r.opp_action.0.to_string());
            row.push(r.obs_reward.to_string());
            row.push(r.true_reward.to_string());
            if width.is_some() {
                if let Some(x) = &r.strategy {
                    row.extend(x.iter().map(|p| p.to_string()));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, with_strategy: bool) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, with_strategy)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn strategy_width(rounds: &[RoundRecord]) -> Option<usize> {
    let first = rounds.first()?.strategy.as_ref()?.len();
    rounds
        .iter()
        .all(|r| r.strategy.as_ref().map(Vec::len) == Some(first))
        .then_some(first)
}
