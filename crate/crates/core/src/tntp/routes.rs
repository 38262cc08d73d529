//! Loopless k-shortest routes by free-flow time (Yen), and the route cache.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_STRETCH: f64 = 3.0;

/// A simple path, as edge indices into `Network::edges`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<usize>,
    pub nodes: Vec<usize>,
    pub cost: f64,
}

impl Route {
    fn order(&self, other: &Route) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.edges.cmp(&other.edges))
    }
}

/// One player's route set, as stored in the JSON-lines cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteSetEntry {
    pub origin: usize,
    pub dest: usize,
    pub demand: f64,
    pub routes: Vec<Vec<usize>>,
}

fn path_cost(net: &Network, edges: &[usize]) -> f64 {
    edges.iter().map(|&e| net.edges[e].free_flow).sum()
}

fn outgoing(net: &Network) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); net.n_nodes];
    for (i, e) in net.edges.iter().enumerate() {
        adj[e.init].push(i);
    }
    adj
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Dijkstra skipping banned edges and nodes. Returns the edge sequence.
fn dijkstra(
    net: &Network,
    adj: &[Vec<usize>],
    from: usize,
    to: usize,
    banned_edge: &[bool],
    banned_node: &[bool],
) -> Option<Vec<usize>> {
    let mut dist = vec![f64::INFINITY; net.n_nodes];
    let mut pred: Vec<Option<usize>> = vec![None; net.n_nodes];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Reverse(Item(0.0, from)));
    while let Some(Reverse(Item(d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == to {
            break;
        }
        for &e in &adj[u] {
            let v = net.edges[e].term;
            if banned_edge[e] || banned_node[v] {
                continue;
            }
            let nd = d + net.edges[e].free_flow;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(e);
                heap.push(Reverse(Item(nd, v)));
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut edges = Vec::new();
    let mut v = to;
    while v != from {
        let e = pred[v]?;
        edges.push(e);
        v = net.edges[e].init;
    }
    edges.reverse();
    Some(edges)
}

fn make_route(net: &Network, origin: usize, edges: Vec<usize>) -> Route {
    let mut nodes = Vec::with_capacity(edges.len() + 1);
    nodes.push(origin);
    nodes.extend(edges.iter().map(|&e| net.edges[e].term));
    let cost = path_cost(net, &edges);
    Route { edges, nodes, cost }
}

fn check_node(net: &Network, v: usize) -> Result<()> {
    if v >= net.n_nodes {
        return Err(Error::Config(format!("node {v} outside 0..{}", net.n_nodes)));
    }
    Ok(())
}

pub fn shortest_path(net: &Network, origin: usize, dest: usize) -> Result<Route> {
    check_node(net, origin)?;
    check_node(net, dest)?;
    let adj = outgoing(net);
    let edges = dijkstra(net, &adj, origin, dest, &vec![false; net.n_edges()], &vec![false; net.n_nodes])
        .ok_or(Error::Unreachable { origin, dest })?;
    Ok(make_route(net, origin, edges))
}

/// Up to `k` loopless routes in (cost, edge sequence) order, dropping any
/// route costlier than `stretch` times the shortest.
pub fn k_shortest_routes(net: &Network, origin: usize, dest: usize, k: usize, stretch: f64) -> Result<Vec<Route>> {
    check_node(net, origin)?;
    check_node(net, dest)?;
    if origin == dest {
        return Err(Error::Config(format!("origin and destination coincide at node {origin}")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let adj = outgoing(net);
    let mut banned_edge = vec![false; net.n_edges()];
    let mut banned_node = vec![false; net.n_nodes];
    let first = dijkstra(net, &adj, origin, dest, &banned_edge, &banned_node)
        .ok_or(Error::Unreachable { origin, dest })?;
    let mut found = vec![make_route(net, origin, first)];
    let mut candidates: Vec<Route> = Vec::new();

    while found.len() < k {
        let prev = found.last().expect("at least one route").clone();
        for i in 0..prev.edges.len() {
            let spur = prev.nodes[i];
            let root_nodes = &prev.nodes[..=i];
            banned_edge.fill(false);
            banned_node.fill(false);
            for p in &found {
                // Compare edges, not nodes: parallel links share node sequences.
                if p.edges.len() > i && p.edges[..i] == prev.edges[..i] {
                    banned_edge[p.edges[i]] = true;
                }
            }
            for &v in &root_nodes[..i] {
                banned_node[v] = true;
            }
            if let Some(spur_edges) = dijkstra(net, &adj, spur, dest, &banned_edge, &banned_node) {
                let mut edges = prev.edges[..i].to_vec();
                edges.extend(spur_edges);
                if !found.iter().chain(&candidates).any(|r| r.edges == edges) {
                    candidates.push(make_route(net, origin, edges));
                }
            }
        }
        let Some(best) = (0..candidates.len()).min_by(|&a, &b| candidates[a].order(&candidates[b])) else {
            break;
        };
        found.push(candidates.swap_remove(best));
    }

    // Yen emits routes in non-decreasing cost; equal-cost ties are reordered
    // by edge sequence here.
    found.sort_by(Route::order);
    let limit = stretch * found[0].cost;
    found.retain(|r| r.cost <= limit);
    Ok(found)
}

/// Route sets for a list of `(origin, dest, demand)` triples, built in parallel.
pub fn build_route_sets(
    net: &Network,
    od: &[(usize, usize, f64)],
    k: usize,
    stretch: f64,
) -> Result<Vec<RouteSetEntry>> {
    od.par_iter()
        .map(|&(origin, dest, demand)| {
            let routes = k_shortest_routes(net, origin, dest, k, stretch)?;
            Ok(RouteSetEntry {
                origin,
                dest,
                demand,
                routes: routes.into_iter().map(|r| r.edges).collect(),
            })
        })
        .collect()
}

pub fn write_route_cache(path: impl AsRef<Path>, entries: &[RouteSetEntry]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_route_cache(path: impl AsRef<Path>) -> Result<Vec<RouteSetEntry>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tntp::{sioux_falls, Edge};

    pub(crate) fn graph(n: usize, arcs: &[(usize, usize, f64)]) -> Network {
        Network {
            n_nodes: n,
            n_zones: None,
            first_thru_node: None,
            edges: arcs
                .iter()
                .map(|&(init, term, free_flow)| Edge {
                    init,
                    term,
                    capacity: 1.0,
                    length: free_flow,
                    free_flow,
                    b: 0.15,
                    power: 4.0,
                    speed: 0.0,
                    toll: 0.0,
                    link_type: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn triangle_order() {
        let net = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let r = k_shortest_routes(&net, 0, 2, 5, 3.0).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].edges, vec![0, 1]);
        assert_eq!(r[0].cost, 2.0);
        assert_eq!(r[1].edges, vec![2]);
    }

    #[test]
    fn single_edge() {
        let net = graph(2, &[(0, 1, 4.0)]);
        assert_eq!(k_shortest_routes(&net, 0, 1, 5, 3.0).unwrap().len(), 1);
    }

    #[test]
    fn stretch_filter() {
        let net = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 7.0)]);
        let r = k_shortest_routes(&net, 0, 2, 5, 3.0).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn unreachable_and_same_node() {
        let net = graph(3, &[(0, 1, 1.0)]);
        assert!(matches!(
            k_shortest_routes(&net, 0, 2, 5, 3.0),
            Err(Error::Unreachable { origin: 0, dest: 2 })
        ));
        assert!(k_shortest_routes(&net, 1, 1, 5, 3.0).is_err());
    }

    #[test]
    fn sioux_falls_routes_are_simple() {
        let net = sioux_falls();
        let sets = build_route_sets(&net, &[(0, 19, 1.0), (12, 5, 1.0), (23, 0, 1.0)], 5, 3.0).unwrap();
        for s in &sets {
            assert!(!s.routes.is_empty() && s.routes.len() <= 5);
            for r in &s.routes {
                let route = make_route(&net, s.origin, r.clone());
                let mut nodes = route.nodes.clone();
                nodes.sort_unstable();
                nodes.dedup();
                assert_eq!(nodes.len(), route.nodes.len());
                assert_eq!(*route.nodes.last().unwrap(), s.dest);
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("routes.jsonl");
        let entries = vec![RouteSetEntry {
            origin: 0,
            dest: 3,
            demand: 2.5,
            routes: vec![vec![0, 4], vec![1]],
        }];
        write_route_cache(&path, &entries).unwrap();
        assert_eq!(read_route_cache(&path).unwrap(), entries);
    }
}
