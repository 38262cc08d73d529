//! Regret, duality gap, distance to equilibrium and congestion.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::games::GameEnv;
use crate::runlog::RunLog;
use crate::simplex::{ActionId, Simplex};

/// Coefficient of the congestion metric, `0.15 (u / C)^4` per edge.
pub const CONGESTION_COEF: f64 = 0.15;
pub const DEFAULT_NASH_TOL: f64 = 1e-5;
pub const DEFAULT_NASH_MAX_ITERS: usize = 5_000_000;

/// Running totals for `max_a sum_t f(a, B_t) - f(A_t, B_t)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegretTracker {
    totals: Vec<f64>,
    realized: f64,
    t: usize,
}

impl RegretTracker {
    pub fn new(n_actions: usize) -> Self {
        Self {
            totals: vec![0.0; n_actions],
            realized: 0.0,
            t: 0,
        }
    }

    /// `rewards` holds the true mean of every own action this round.
    pub fn push(&mut self, rewards: &[f64], played: ActionId) -> Result<()> {
        check_len(self.totals.len(), rewards.len())?;
        for (tot, r) in self.totals.iter_mut().zip(rewards) {
            *tot += r;
        }
        self.realized += rewards[played.0];
        self.t += 1;
        Ok(())
    }

    /// Like [`push`](Self::push), but the played value is the mixture `x`
    /// against `rewards` instead of a sampled action.
    pub fn push_mixed(&mut self, rewards: &[f64], x: &Simplex) -> Result<()> {
        check_len(self.totals.len(), rewards.len())?;
        check_len(self.totals.len(), x.len())?;
        for (tot, r) in self.totals.iter_mut().zip(rewards) {
            *tot += r;
        }
        self.realized += x.probs().iter().zip(rewards).map(|(p, r)| p * r).sum::<f64>();
        self.t += 1;
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    /// Hindsight-best fixed action, lowest index on ties.
    pub fn best_action(&self) -> ActionId {
        let mut best = 0;
        for (a, &v) in self.totals.iter().enumerate() {
            if v > self.totals[best] {
                best = a;
            }
        }
        ActionId(best)
    }

    pub fn cumulative(&self) -> f64 {
        self.totals[self.best_action().0] - self.realized
    }

    pub fn average(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.cumulative() / self.t as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub best_action: ActionId,
    /// Cumulative regret against `best_action` after each round.
    pub cumulative: Vec<f64>,
    /// `(t, average regret over the first t rounds)`, each against the best
    /// action in hindsight at `t`.
    pub checkpoints: Vec<(usize, f64)>,
}

impl RegretReport {
    pub fn average(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0) / self.cumulative.len().max(1) as f64
    }
}

/// Average regret of a logged run, computed from the game's true means.
pub fn average_regret<G: GameEnv>(log: &RunLog, game: &G, checkpoints: &[usize]) -> Result<RegretReport> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = game.n_agent_actions();
    let mut tracker = RegretTracker::new(n);
    let mut marks = Vec::new();
    let mut next = checkpoints.iter().peekable();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(log.len());
    for rec in log.rounds() {
        let r: Vec<f64> = (0..n).map(|a| game.mean_reward(ActionId(a), rec.opp_action)).collect();
        tracker.push(&r, rec.agent_action)?;
        while next.peek().is_some_and(|&&c| c <= tracker.rounds()) {
            if *next.next().expect("peeked") == tracker.rounds() {
                marks.push((tracker.rounds(), tracker.average()));
            }
        }
        rows.push(r);
    }
    let best = tracker.best_action();
    let mut acc = 0.0;
    let cumulative = log
        .rounds()
        .iter()
        .zip(&rows)
        .map(|(rec, r)| {
            acc += r[best.0] - r[rec.agent_action.0];
            acc
        })
        .collect();
    Ok(RegretReport {
        best_action: best,
        cumulative,
        checkpoints: marks,
    })
}

fn row_values(payoff: &DMatrix<f64>, y: &Simplex) -> Vec<f64> {
    (0..payoff.nrows())
        .map(|a| payoff.row(a).iter().zip(y.probs()).map(|(v, p)| v * p).sum())
        .collect()
}

fn col_values(payoff: &DMatrix<f64>, x: &Simplex) -> Vec<f64> {
    (0..payoff.ncols())
        .map(|b| payoff.column(b).iter().zip(x.probs()).map(|(v, p)| v * p).sum())
        .collect()
}

/// `max_a (A y)_a - min_b (x^T A)_b`.
pub fn duality_gap(payoff: &DMatrix<f64>, x: &Simplex, y: &Simplex) -> Result<f64> {
    check_len(payoff.nrows(), x.len())?;
    check_len(payoff.ncols(), y.len())?;
    let best_row = row_values(payoff, y).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let best_col = col_values(payoff, x).into_iter().fold(f64::INFINITY, f64::min);
    Ok((best_row - best_col).max(0.0))
}

/// `KL(avg || nash)`; infinite when `avg` puts mass outside `nash`'s support.
pub fn kl_to_nash(avg: &Simplex, nash: &Simplex) -> f64 {
    avg.probs()
        .iter()
        .zip(nash.probs())
        .map(|(&p, &q)| {
            if p == 0.0 {
                0.0
            } else if q == 0.0 {
                f64::INFINITY
            } else {
                p * (p / q).ln()
            }
        })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashPair {
    pub x: Simplex,
    pub y: Simplex,
    pub value: f64,
    pub certified_gap: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn simplex_of(p: &[f64]) -> Simplex {
    Simplex::normalize(p).expect("finite non-negative weights")
}

/// Equilibrium of the zero-sum game where the row player maximizes
/// `x^T A y`. Runs optimistic Hedge self-play and stops as soon as either
/// the averaged or the last iterate has an exact duality gap within `tol`.
pub fn solve_nash(payoff: &DMatrix<f64>, tol: f64) -> Result<NashPair> {
    solve_nash_with(payoff, tol, DEFAULT_NASH_MAX_ITERS)
}

pub fn solve_nash_with(payoff: &DMatrix<f64>, tol: f64, max_iters: usize) -> Result<NashPair> {
    if payoff.is_empty() {
        return Err(Error::Config("payoff matrix is empty".into()));
    }
    if payoff.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("payoff matrix"));
    }
    let (n, m) = payoff.shape();
    let range = (payoff.max() - payoff.min()).max(1e-12);
    let eta = 0.25 / range;
    let mut lx = vec![0.0; n];
    let mut ly = vec![0.0; m];
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![1.0 / m as f64; m];
    let mut gx_prev = vec![0.0; n];
    let mut gy_prev = vec![0.0; m];
    let mut sum_x = vec![0.0; n];
    let mut sum_y = vec![0.0; m];
    let mut best: Option<(f64, Simplex, Simplex)> = None;

    let consider = |xs: Simplex, ys: Simplex, best: &mut Option<(f64, Simplex, Simplex)>| -> Result<bool> {
        let g = duality_gap(payoff, &xs, &ys)?;
        if best.as_ref().is_none_or(|b| g < b.0) {
            *best = Some((g, xs, ys));
        }
        Ok(g <= tol)
    };

    for it in 1..=max_iters {
        // Row gradient A y, column gradient -(x^T A).
        let gx: Vec<f64> = (0..n).map(|a| (0..m).map(|b| payoff[(a, b)] * y[b]).sum()).collect();
        let gy: Vec<f64> = (0..m).map(|b| -(0..n).map(|a| payoff[(a, b)] * x[a]).sum::<f64>()).collect();
        for a in 0..n {
            lx[a] += eta * (2.0 * gx[a] - gx_prev[a]);
        }
        for b in 0..m {
            ly[b] += eta * (2.0 * gy[b] - gy_prev[b]);
        }
        gx_prev = gx;
        gy_prev = gy;
        x = softmax(&lx);
        y = softmax(&ly);
        for a in 0..n {
            sum_x[a] += x[a];
        }
        for b in 0..m {
            sum_y[b] += y[b];
        }
        if it % 64 == 0 || it == max_iters {
            if consider(simplex_of(&x), simplex_of(&y), &mut best)?
                || consider(simplex_of(&sum_x), simplex_of(&sum_y), &mut best)?
            {
                break;
            }
        }
    }
    let (gap, xs, ys) = best.expect("at least one gap evaluation");
    if gap > tol {
        return Err(Error::NashNotConverged {
            best_gap: gap,
            iterations: max_iters,
        });
    }
    let value = xs.expectation(&row_values(payoff, &ys));
    Ok(NashPair {
        x: xs,
        y: ys,
        value,
        certified_gap: gap,
    })
}

/// Mean over edges of `0.15 (load / C)^4`.
pub fn average_congestion(loads: &[f64], capacities: &[f64]) -> Result<f64> {
    check_len(capacities.len(), loads.len())?;
    if loads.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = loads
        .iter()
        .zip(capacities)
        .map(|(u, c)| CONGESTION_COEF * (u / c).powi(4))
        .sum();
    Ok(total / loads.len() as f64)
}

/// Integer checkpoints in `1..=horizon`, roughly log-spaced with at most
/// `per_decade` per factor of ten, always ending at `horizon`.
pub fn log_checkpoints(horizon: usize, per_decade: usize) -> Vec<usize> {
    if horizon == 0 {
        return Vec::new();
    }
    let per_decade = per_decade.max(1);
    let step = 10f64.powf(1.0 / per_decade as f64);
    let mut out = Vec::new();
    let mut v = 1.0f64;
    while v < horizon as f64 {
        let t = v.round() as usize;
        if out.last() != Some(&t) {
            out.push(t);
        }
        v *= step;
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

/// One line of the per-run metric CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: usize,
    pub avg_regret: f64,
    pub duality_gap: f64,
    pub kl_x: f64,
    pub kl_y: f64,
    pub avg_congestion: Option<f64>,
}

/// `t,avg_regret,duality_gap,kl_x,kl_y[,avg_congestion]`; the congestion
/// column appears only when every row has it.
pub fn write_metric_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let congestion = !rows.is_empty() && rows.iter().all(|r| r.avg_congestion.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t", "avg_regret", "duality_gap", "kl_x", "kl_y"];
    if congestion {
        header.push("avg_congestion");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.t.to_string(),
            r.avg_regret.to_string(),
            r.duality_gap.to_string(),
            r.kl_x.to_string(),
            r.kl_y.to_string(),
        ];
        if congestion {
            rec.push(r.avg_congestion.expect("checked above").to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the CSV written by [`write_metric_csv`].
pub fn read_metric_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    let has_congestion = r.headers()?.len() > 5;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Parse {
                    line: out_len_hint(&rec),
                    msg: format!("column {i} is not a number"),
                })
        };
        out.push(MetricRow {
            t: f(0)? as usize,
            avg_regret: f(1)?,
            duality_gap: f(2)?,
            kl_x: f(3)?,
            kl_y: f(4)?,
            avg_congestion: if has_congestion { Some(f(5)?) } else { None },
        });
    }
    Ok(out)
}

fn out_len_hint(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}
