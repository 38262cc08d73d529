//! TNTP road-network files and route-set construction.

mod routes;

pub use routes::{
    build_route_sets, k_shortest_routes, read_route_cache, shortest_path, write_route_cache, Route, RouteSetEntry,
    DEFAULT_K, DEFAULT_STRETCH,
};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One directed link. Node ids are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub init: usize,
    pub term: usize,
    pub capacity: f64,
    pub length: f64,
    /// Free-flow travel time `c_e`.
    pub free_flow: f64,
    pub b: f64,
    pub power: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub n_nodes: usize,
    pub n_zones: Option<usize>,
    pub first_thru_node: Option<usize>,
    pub edges: Vec<Edge>,
}

impl Network {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.capacity).collect()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Splits a `<KEY> value` metadata line.
fn metadata(line: &str) -> Option<(&str, &str)> {
    let rest = line.strip_prefix('<')?;
    let (key, value) = rest.split_once('>')?;
    Some((key.trim(), value.trim()))
}

fn parse_count(value: &str, line: usize) -> Result<usize> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("expected a non-negative integer, got `{value}`")))
}

/// Parses a TNTP `_net` file. Unknown metadata keys are ignored.
pub fn parse_network(text: &str) -> Result<Network> {
    let mut n_nodes = None;
    let mut n_links = None;
    let mut n_zones = None;
    let mut first_thru = None;
    let mut in_data = false;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if !in_data {
            let (key, value) =
                metadata(line).ok_or_else(|| parse_err(lineno, "expected metadata line or <END OF METADATA>"))?;
            match key {
                "NUMBER OF NODES" => n_nodes = Some(parse_count(value, lineno)?),
                "NUMBER OF LINKS" => n_links = Some(parse_count(value, lineno)?),
                "NUMBER OF ZONES" => n_zones = Some(parse_count(value, lineno)?),
                "FIRST THRU NODE" => first_thru = Some(parse_count(value, lineno)?),
                "END OF METADATA" => in_data = true,
                _ => {}
            }
            continue;
        }
        let n = n_nodes.ok_or_else(|| parse_err(lineno, "missing <NUMBER OF NODES>"))?;
        let body = line.trim_end_matches(';').trim();
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(parse_err(lineno, format!("expected at least 5 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            match fields.get(i) {
                None => Ok(0.0),
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("field {} is not a number: `{s}`", i + 1))),
            }
        };
        let node = |i: usize| -> Result<usize> {
            let id: usize = fields[i]
                .parse()
                .map_err(|_| parse_err(lineno, format!("node id is not an integer: `{}`", fields[i])))?;
            if id == 0 || id > n {
                return Err(parse_err(lineno, format!("node id {id} outside 1..={n}")));
            }
            Ok(id - 1)
        };
        let edge = Edge {
            init: node(0)?,
            term: node(1)?,
            capacity: num(2)?,
            length: num(3)?,
            free_flow: num(4)?,
            b: num(5)?,
            power: num(6)?,
            speed: num(7)?,
            toll: num(8)?,
            link_type: num(9)? as i64,
        };
        if !(edge.capacity > 0.0) {
            return Err(parse_err(lineno, format!("capacity must be positive, got {}", edge.capacity)));
        }
        if !(edge.free_flow > 0.0) {
            return Err(parse_err(lineno, format!("free-flow time must be positive, got {}", edge.free_flow)));
        }
        edges.push(edge);
    }
    if !in_data {
        return Err(parse_err(text.lines().count(), "missing <END OF METADATA>"));
    }
    let n_nodes = n_nodes.ok_or_else(|| parse_err(0, "missing <NUMBER OF NODES>"))?;
    if let Some(declared) = n_links {
        if declared != edges.len() {
            return Err(Error::CountMismatch {
                what: "links",
                declared,
                found: edges.len(),
            });
        }
    }
    Ok(Network {
        n_nodes,
        n_zones,
        first_thru_node: first_thru,
        edges,
    })
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    parse_network(&std::fs::read_to_string(path)?)
}

/// Writes a network back in TNTP `_net` format with 1-based node ids.
pub fn serialize_network(net: &Network) -> String {
    let mut s = String::new();
    if let Some(z) = net.n_zones {
        let _ = writeln!(s, "<NUMBER OF ZONES> {z}");
    }
    let _ = writeln!(s, "<NUMBER OF NODES> {}", net.n_nodes);
    if let Some(f) = net.first_thru_node {
        let _ = writeln!(s, "<FIRST THRU NODE> {f}");
    }
    let _ = writeln!(s, "<NUMBER OF LINKS> {}", net.edges.len());
    s.push_str("<END OF METADATA>\n\n");
    s.push_str("~\tinit node\tterm node\tcapacity\tlength\tfree flow time\tb\tpower\tspeed\ttoll\tlink_type\t;\n");
    for e in &net.edges {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;",
            e.init + 1,
            e.term + 1,
            e.capacity,
            e.length,
            e.free_flow,
            e.b,
            e.power,
            e.speed,
            e.toll,
            e.link_type
        );
    }
    s
}

/// One origin-destination demand, 0-based zones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdDemand {
    pub origin: usize,
    pub dest: usize,
    pub flow: f64,
}

/// Parses a TNTP `_trips` file (`Origin k` blocks of `dest : flow;` entries).
pub fn parse_trips(text: &str) -> Result<Vec<OdDemand>> {
    let mut n_zones = None;
    let mut in_data = false;
    let mut origin: Option<usize> = None;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if !in_data {
            let (key, value) = metadata(line).ok_or_else(|| parse_err(lineno, "expected metadata line"))?;
            match key {
                "NUMBER OF ZONES" => n_zones = Some(parse_count(value, lineno)?),
                "END OF METADATA" => in_data = true,
                _ => {}
            }
            continue;
        }
        let zones = n_zones.ok_or_else(|| parse_err(lineno, "missing <NUMBER OF ZONES>"))?;
        let zone = |s: &str| -> Result<usize> {
            let id: usize = s
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("zone id is not an integer: `{s}`")))?;
            if id == 0 || id > zones {
                return Err(parse_err(lineno, format!("zone id {id} outside 1..={zones}")));
            }
            Ok(id - 1)
        };
        if let Some(rest) = line.strip_prefix("Origin") {
            origin = Some(zone(rest)?);
            continue;
        }
        let o = origin.ok_or_else(|| parse_err(lineno, "destination entries before any `Origin` line"))?;
        for entry in line.split(';').map(str::trim).filter(|e| !e.is_empty()) {
            let (d, f) = entry
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected `dest : flow`, got `{entry}`")))?;
            let flow: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("flow is not a number: `{}`", f.trim())))?;
            out.push(OdDemand {
                origin: o,
                dest: zone(d)?,
                flow,
            });
        }
    }
    Ok(out)
}

/// The bundled Sioux-Falls network.
pub const SIOUX_FALLS_NET: &str = include_str!("../../data/SiouxFalls_net.tntp");

pub fn sioux_falls() -> Network {
    parse_network(SIOUX_FALLS_NET).expect("bundled network parses")
}
