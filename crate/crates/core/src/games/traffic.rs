//! Congestion routing on a road network with BPR link latencies.

use serde::{Deserialize, Serialize};

use super::Noise;
use crate::error::{Error, Result};
use crate::posterior::{GpBelief, Kernel, Marginal, RewardModel};
use crate::rng::RngStream;
use crate::simplex::ActionId;
use crate::tntp::{build_route_sets, Network, RouteSetEntry};
use crate::types::{RewardMap, RewardSample};

pub const BPR_ALPHA: f64 = 0.5;
pub const BPR_POWER: i32 = 4;

/// `t_e(u) = c_e (1 + 0.5 (u / C_e)^4)`.
pub fn bpr_latency(free_flow: f64, capacity: f64, load: f64) -> f64 {
    free_flow * (1.0 + BPR_ALPHA * (load / capacity).powi(BPR_POWER))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub origin: usize,
    pub dest: usize,
    /// Demand `U^i`, added to every edge of the chosen route.
    pub demand: f64,
    /// Candidate routes as edge-index lists.
    pub routes: Vec<Vec<usize>>,
}

impl From<RouteSetEntry> for Player {
    fn from(e: RouteSetEntry) -> Self {
        Self {
            origin: e.origin,
            dest: e.dest,
            demand: e.demand,
            routes: e.routes,
        }
    }
}

/// Per-player data derived once at construction.
#[derive(Clone, Debug, PartialEq)]
struct PlayerView {
    /// Sorted union of the edges on this player's routes.
    edges: Vec<usize>,
    /// Routes re-indexed into `edges`.
    local_routes: Vec<Vec<usize>>,
    map: RewardMap,
}

/// `N` players each picking one route; player `i` pays
/// `sum_{e in route} U^i t_e(load_e)` and receives its negation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficGame {
    network: Network,
    players: Vec<Player>,
    views: Vec<PlayerView>,
    noise: Noise,
}

impl TrafficGame {
    pub fn new(network: Network, players: Vec<Player>, noise: Noise) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::Config("traffic game needs at least one player".into()));
        }
        let m = network.n_edges();
        for (i, p) in players.iter().enumerate() {
            if p.routes.is_empty() {
                return Err(Error::Config(format!("player {i} has an empty route set")));
            }
            if !(p.demand > 0.0) {
                return Err(Error::Config(format!("player {i} demand must be positive")));
            }
            if let Some(&e) = p.routes.iter().flatten().find(|&&e| e >= m) {
                return Err(Error::Config(format!("player {i} uses edge {e} outside 0..{m}")));
            }
        }
        // Every other player's heaviest possible contribution to each edge.
        let mut worst = vec![0.0; m];
        for p in &players {
            let mut touched: Vec<usize> = p.routes.iter().flatten().copied().collect();
            touched.sort_unstable();
            touched.dedup();
            for e in touched {
                worst[e] += p.demand;
            }
        }
        let views = players
            .iter()
            .map(|p| {
                let mut edges: Vec<usize> = p.routes.iter().flatten().copied().collect();
                edges.sort_unstable();
                edges.dedup();
                let local_routes = p
                    .routes
                    .iter()
                    .map(|r| r.iter().map(|e| edges.binary_search(e).expect("edge in union")).collect())
                    .collect();
                let scale = p
                    .routes
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|&e| {
                                let ed = &network.edges[e];
                                p.demand * bpr_latency(ed.free_flow, ed.capacity, worst[e])
                            })
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max);
                PlayerView {
                    edges,
                    local_routes,
                    map: RewardMap::new(-scale, 0.0),
                }
            })
            .collect();
        Ok(Self {
            network,
            players,
            views,
            noise,
        })
    }

    /// Players on `count` distinct ordered node pairs drawn without
    /// replacement, each with `k` shortest routes under the stretch filter.
    pub fn random_od(
        network: Network,
        count: usize,
        demand: f64,
        k: usize,
        stretch: f64,
        noise: Noise,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let n = network.n_nodes;
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d)))
            .collect();
        if count > pairs.len() {
            return Err(Error::Config(format!("asked for {count} OD pairs, network has {}", pairs.len())));
        }
        for i in 0..count {
            let j = i + rng.below(pairs.len() - i);
            pairs.swap(i, j);
        }
        let od: Vec<(usize, usize, f64)> = pairs[..count].iter().map(|&(o, d)| (o, d, demand)).collect();
        let players = build_route_sets(&network, &od, k, stretch)?
            .into_iter()
            .map(Player::from)
            .collect();
        Self::new(network, players, noise)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_routes(&self, i: usize) -> usize {
        self.players[i].routes.len()
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    /// Edges player `i` can ever use, in increasing index order.
    pub fn relevant_edges(&self, i: usize) -> &[usize] {
        &self.views[i].edges
    }

    /// `[-scale_i, 0]`, where `scale_i` bounds the player's latency when every
    /// player that can share an edge does so.
    pub fn reward_map(&self, i: usize) -> RewardMap {
        self.views[i].map
    }

    fn check_profile(&self, profile: &[ActionId]) -> Result<()> {
        if profile.len() != self.players.len() {
            return Err(Error::ShapeMismatch {
                expected: self.players.len(),
                got: profile.len(),
            });
        }
        for (p, a) in self.players.iter().zip(profile) {
            ActionId::checked(a.0, p.routes.len())?;
        }
        Ok(())
    }

    /// Total flow on every edge.
    pub fn loads(&self, profile: &[ActionId]) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        let mut u = vec![0.0; self.network.n_edges()];
        for (p, a) in self.players.iter().zip(profile) {
            for &e in &p.routes[a.0] {
                u[e] += p.demand;
            }
        }
        Ok(u)
    }

    /// Flow from everyone but `i` on player `i`'s relevant edges.
    pub fn others_load(&self, i: usize, loads: &[f64], own: ActionId) -> Vec<f64> {
        let view = &self.views[i];
        let mut g: Vec<f64> = view.edges.iter().map(|&e| loads[e]).collect();
        for &le in &view.local_routes[own.0] {
            g[le] -= self.players[i].demand;
        }
        g
    }

    /// Latency of route `a` for player `i` given the others' flow on its
    /// relevant edges.
    pub fn latency_given(&self, i: usize, a: ActionId, others: &[f64]) -> f64 {
        let view = &self.views[i];
        let u = self.players[i].demand;
        view.local_routes[a.0]
            .iter()
            .map(|&le| {
                let ed = &self.network.edges[view.edges[le]];
                u * bpr_latency(ed.free_flow, ed.capacity, u + others[le])
            })
            .sum()
    }

    /// `r^i = -l^i` for the whole profile.
    pub fn mean_reward(&self, i: usize, profile: &[ActionId]) -> Result<f64> {
        let loads = self.loads(profile)?;
        let g = self.others_load(i, &loads, profile[i]);
        Ok(-self.latency_given(i, profile[i], &g))
    }

    /// Mean reward of every route for player `i` against fixed others.
    pub fn reward_vector(&self, i: usize, others: &[f64]) -> Vec<f64> {
        (0..self.n_routes(i))
            .map(|a| -self.latency_given(i, ActionId(a), others))
            .collect()
    }

    pub fn observe_given(&self, i: usize, a: ActionId, others: &[f64], rng: &mut RngStream) -> RewardSample {
        let mean = -self.latency_given(i, a, others);
        let std = self.noise.std();
        let value = if std > 0.0 { mean + std * rng.standard_normal() } else { mean };
        self.views[i].map.sample(value)
    }

    pub fn observe_reward(&self, i: usize, profile: &[ActionId], rng: &mut RngStream) -> Result<RewardSample> {
        let loads = self.loads(profile)?;
        let g = self.others_load(i, &loads, profile[i]);
        Ok(self.observe_given(i, profile[i], &g, rng))
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.network.capacities()
    }
}

/// GP input for one player: own route indicator and per-edge load ratio
/// `(a + g) / C` on the player's relevant edges.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficInput {
    pub own: Vec<f64>,
    pub ratio: Vec<f64>,
}

/// Kernel hyperparameters; unset scales are filled in per player.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    /// Linear factor scale; defaults to one over the longest route's edge count.
    pub linear_scale: Option<f64>,
    /// Polynomial factor scale; defaults to one over the relevant edge count.
    pub poly_scale: Option<f64>,
    pub offset: f64,
    pub degree: i32,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            linear_scale: None,
            poly_scale: None,
            offset: 1.0,
            degree: BPR_POWER,
        }
    }
}

/// `k_L(a, a') k_P(s, s')` with `k_L = l <a, a'>` and `k_P = (p <s, s'> + c)^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeKernel {
    pub linear_scale: f64,
    pub poly_scale: f64,
    pub offset: f64,
    pub degree: i32,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl Kernel for CompositeKernel {
    type Input = TrafficInput;

    fn eval(&self, x: &TrafficInput, y: &TrafficInput) -> f64 {
        let lin = self.linear_scale * dot(&x.own, &y.own);
        if lin == 0.0 {
            return 0.0;
        }
        lin * (self.poly_scale * dot(&x.ratio, &y.ratio) + self.offset).powi(self.degree)
    }
}

/// GP belief over one player's mapped reward, indexed by own route and the
/// others' load on the player's relevant edges.
#[derive(Clone, Debug)]
pub struct TrafficModel {
    gp: GpBelief<CompositeKernel>,
    routes: Vec<Vec<usize>>,
    capacity: Vec<f64>,
    demand: f64,
}

impl TrafficModel {
    /// `prior_mean` is in mapped units; 1 places the zero-latency reward at
    /// the prior so the kernel only has to explain `-l / scale`.
    pub fn new(
        game: &TrafficGame,
        i: usize,
        params: KernelParams,
        noise_var: f64,
        prior_mean: f64,
        history_cap: Option<usize>,
    ) -> Result<Self> {
        let view = &game.views[i];
        let longest = view.local_routes.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let kernel = CompositeKernel {
            linear_scale: params.linear_scale.unwrap_or(1.0 / longest as f64),
            poly_scale: params.poly_scale.unwrap_or(1.0 / view.edges.len().max(1) as f64),
            offset: params.offset,
            degree: params.degree,
        };
        let mut gp = GpBelief::new(kernel, noise_var)?.with_prior_mean(prior_mean);
        if let Some(cap) = history_cap {
            gp = gp.with_history_cap(cap);
        }
        Ok(Self {
            gp,
            routes: view.local_routes.clone(),
            capacity: view.edges.iter().map(|&e| game.network.edges[e].capacity).collect(),
            demand: game.players[i].demand,
        })
    }

    pub fn gp(&self) -> &GpBelief<CompositeKernel> {
        &self.gp
    }

    pub fn input(&self, a: ActionId, others: &[f64]) -> TrafficInput {
        let mut own = vec![0.0; self.capacity.len()];
        for &le in &self.routes[a.0] {
            own[le] = 1.0;
        }
        let ratio = own
            .iter()
            .zip(others)
            .zip(&self.capacity)
            .map(|((o, g), c)| (o * self.demand + g) / c)
            .collect();
        TrafficInput { own, ratio }
    }
}

impl RewardModel for TrafficModel {
    type Context = Vec<f64>;

    fn n_actions(&self) -> usize {
        self.routes.len()
    }

    fn noise_var(&self) -> f64 {
        self.gp.noise_var()
    }

    fn update(&mut self, a: ActionId, ctx: &Vec<f64>, reward: f64) -> Result<()> {
        self.gp.update(self.input(a, ctx), reward)
    }

    fn predict(&self, a: ActionId, ctx: &Vec<f64>) -> Result<Marginal> {
        self.gp.predict(&self.input(a, ctx))
    }

    fn predict_all(&self, ctx: &Vec<f64>) -> Result<Vec<Marginal>> {
        let xs: Vec<TrafficInput> = (0..self.routes.len()).map(|a| self.input(ActionId(a), ctx)).collect();
        self.gp.predict_many(&xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tntp::{sioux_falls, Edge};

    fn two_edges() -> Network {
        let edge = |init, term| Edge {
            init,
            term,
            capacity: 1.0,
            length: 1.0,
            free_flow: 1.0,
            b: 0.15,
            power: 4.0,
            speed: 0.0,
            toll: 0.0,
            link_type: 1,
        };
        Network {
            n_nodes: 3,
            n_zones: None,
            first_thru_node: None,
            edges: vec![edge(0, 1), edge(1, 2)],
        }
    }

    #[test]
    fn bpr_examples() {
        assert_eq!(bpr_latency(3.0, 2.0, 0.0), 3.0);
        assert_eq!(bpr_latency(2.0, 5.0, 5.0), 3.0);
        assert_eq!(bpr_latency(2.0, 1.0, 2.0), 18.0);
    }

    #[test]
    fn single_player_single_edge() {
        let p = Player {
            origin: 0,
            dest: 1,
            demand: 1.0,
            routes: vec![vec![0]],
        };
        let g = TrafficGame::new(two_edges(), vec![p], Noise::NONE).unwrap();
        assert_eq!(g.mean_reward(0, &[ActionId(0)]).unwrap(), -1.5);
    }

    #[test]
    fn extra_player_never_helps() {
        let p = |routes: Vec<Vec<usize>>| Player {
            origin: 0,
            dest: 2,
            demand: 0.7,
            routes,
        };
        let alone = TrafficGame::new(two_edges(), vec![p(vec![vec![0, 1]])], Noise::NONE).unwrap();
        let crowded = TrafficGame::new(
            two_edges(),
            vec![p(vec![vec![0, 1]]), p(vec![vec![1]])],
            Noise::NONE,
        )
        .unwrap();
        let r1 = alone.mean_reward(0, &[ActionId(0)]).unwrap();
        let r2 = crowded.mean_reward(0, &[ActionId(0), ActionId(0)]).unwrap();
        assert!(r2 < r1);
    }

    #[test]
    fn mapped_rewards_stay_in_unit_interval() {
        let mut rng = RngStream::new(5, 3);
        let g = TrafficGame::random_od(sioux_falls(), 8, 4000.0, 5, 3.0, Noise::NONE, &mut rng).unwrap();
        for _ in 0..50 {
            let profile: Vec<ActionId> = (0..g.n_players()).map(|i| ActionId(rng.below(g.n_routes(i)))).collect();
            for i in 0..g.n_players() {
                let r = g.mean_reward(i, &profile).unwrap();
                let y = g.reward_map(i).affine(r);
                assert!((0.0..=1.0).contains(&y), "{y}");
            }
        }
    }

    #[test]
    fn kernel_symmetric_and_psd() {
        let k = CompositeKernel {
            linear_scale: 0.5,
            poly_scale: 0.2,
            offset: 1.0,
            degree: 4,
        };
        let mut rng = RngStream::new(11, 0);
        let xs: Vec<TrafficInput> = (0..40)
            .map(|_| TrafficInput {
                own: (0..6).map(|_| (rng.uniform() < 0.5) as u8 as f64).collect(),
                ratio: (0..6).map(|_| 2.0 * rng.uniform()).collect(),
            })
            .collect();
        for x in &xs {
            for y in &xs {
                assert!((k.eval(x, y) - k.eval(y, x)).abs() <= 1e-12);
            }
        }
        let gram = nalgebra::DMatrix::from_fn(xs.len(), xs.len(), |i, j| k.eval(&xs[i], &xs[j]));
        let scale = gram.diagonal().max().max(1.0);
        let eig = gram.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&v| v >= -1e-8 * scale), "{}", eig.min());
        let x = &xs[0];
        let s = dot(&x.ratio, &x.ratio);
        let want = 0.5 * dot(&x.own, &x.own) * (0.2 * s + 1.0).powi(4);
        assert!((k.eval(x, x) - want).abs() < 1e-12);
    }

    #[test]
    fn model_learns_latency_surface() {
        let mut rng = RngStream::new(2, 3);
        let g = TrafficGame::random_od(sioux_falls(), 6, 6000.0, 5, 3.0, Noise::NONE, &mut rng).unwrap();
        let mut m = TrafficModel::new(&g, 0, KernelParams::default(), 1e-4, 1.0, None).unwrap();
        let map = g.reward_map(0);
        let draw = |rng: &mut RngStream| -> Vec<ActionId> {
            (0..g.n_players()).map(|i| ActionId(rng.below(g.n_routes(i)))).collect()
        };
        for _ in 0..150 {
            let p = draw(&mut rng);
            let loads = g.loads(&p).unwrap();
            let ctx = g.others_load(0, &loads, p[0]);
            let y = map.affine(g.mean_reward(0, &p).unwrap());
            m.update(p[0], &ctx, y).unwrap();
        }
        let mut err = 0.0;
        for _ in 0..50 {
            let p = draw(&mut rng);
            let loads = g.loads(&p).unwrap();
            let ctx = g.others_load(0, &loads, p[0]);
            let truth: Vec<f64> = g.reward_vector(0, &ctx).iter().map(|&r| map.affine(r)).collect();
            let pred = m.predict_all(&ctx).unwrap();
            for (t, q) in truth.iter().zip(&pred) {
                err += (t - q.mean).abs();
            }
        }
        let mean_err = err / (50 * g.n_routes(0)) as f64;
        assert!(mean_err < 0.05, "{mean_err}");
    }
}
