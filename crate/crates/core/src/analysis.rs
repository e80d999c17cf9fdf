//! Graph metrics over co-investment networks: induced edge density,
//! top-degree selection with market-cap influence, largest connected
//! component, hop distances across networks, and watchlist coverage.
//!
//! Standard deviations are population (divide by count), and degree or
//! component ties go to the lexicographically smaller ticker.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CoInvestNetwork, Edge};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketCapTable {
    pub caps: BTreeMap<String, f64>,
}

impl MarketCapTable {
    /// Reads `symbol,cap_usd_bn` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &'static str| headers.iter().position(|h| h == name).ok_or(Error::MissingColumn(name));
        let (s, c) = (col("symbol")?, col("cap_usd_bn")?);
        let mut caps = BTreeMap::new();
        for (n, row) in rdr.records().enumerate() {
            let row = row?;
            let cap = row
                .get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| Error::BadRow {
                    row: n + 1,
                    message: "market cap must be a positive number".into(),
                })?;
            caps.insert(row.get(s).unwrap_or("").to_string(), cap);
        }
        Ok(Self { caps })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_csv(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `2|E(S)| / (s(s-1))` over the subset tickers present in the network.
pub fn edge_density(net: &CoInvestNetwork, subset: &[String]) -> Result<f64> {
    let members: HashSet<usize> = subset.iter().filter_map(|t| net.node_index(t)).collect();
    let s = members.len();
    if s < 2 {
        return Err(Error::invalid(format!(
            "edge density needs at least two subset nodes in the network, found {s}"
        )));
    }
    let inside = net
        .edges
        .iter()
        .filter(|e| members.contains(&e.source) && members.contains(&e.target))
        .count();
    Ok(2.0 * inside as f64 / (s * (s - 1)) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopDegree {
    pub tickers: Vec<String>,
    /// Set when fewer than `k` nodes exist.
    pub truncated: bool,
}

/// The `k` highest-degree tickers; ties by ticker order.
pub fn top_degree(net: &CoInvestNetwork, k: usize) -> Result<TopDegree> {
    if net.nodes.is_empty() {
        return Err(Error::invalid("network has no nodes"));
    }
    let degrees = net.degrees();
    let mut order: Vec<usize> = (0..net.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        degrees[b]
            .cmp(&degrees[a])
            .then_with(|| net.nodes[a].cmp(&net.nodes[b]))
    });
    Ok(TopDegree {
        tickers: order.iter().take(k).map(|&i| net.nodes[i].clone()).collect(),
        truncated: k > net.nodes.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Influence {
    pub mean: f64,
    pub std: f64,
    pub missing: Vec<String>,
}

/// Mean and population std of the market caps of `tickers`; tickers absent
/// from the table are reported and skipped.
pub fn influence(tickers: &[String], caps: &MarketCapTable) -> Result<Influence> {
    let (found, missing): (Vec<&String>, Vec<&String>) = tickers.iter().partition(|t| caps.caps.contains_key(*t));
    if found.is_empty() {
        return Err(Error::invalid("no ticker has a market cap"));
    }
    let values: Vec<f64> = found.iter().map(|t| caps.caps[*t]).collect();
    let (mean, std) = mean_std(&values);
    Ok(Influence {
        mean,
        std,
        missing: missing.into_iter().cloned().collect(),
    })
}

/// Connected components as sorted node-index lists.
pub fn components(net: &CoInvestNetwork) -> Vec<Vec<usize>> {
    let adj = net.adjacency();
    let mut seen = vec![false; net.nodes.len()];
    let mut out = Vec::new();
    for start in 0..net.nodes.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Induced subgraph on the largest component. Equal sizes go to the
/// component holding the lexicographically smallest ticker.
pub fn largest_component(net: &CoInvestNetwork) -> CoInvestNetwork {
    let smallest = |c: &Vec<usize>| c.iter().map(|&i| net.nodes[i].as_str()).min().unwrap_or("");
    let best = components(net)
        .into_iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| smallest(b).cmp(smallest(a))));
    let Some(keep) = best else {
        return CoInvestNetwork {
            nodes: Vec::new(),
            edges: Vec::new(),
            meta: net.meta.clone(),
        };
    };
    let remap: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let edges = net
        .edges
        .iter()
        .filter_map(|e| {
            Some(Edge {
                source: *remap.get(&e.source)?,
                target: *remap.get(&e.target)?,
                weight: e.weight,
            })
        })
        .collect();
    CoInvestNetwork {
        nodes: keep.iter().map(|&i| net.nodes[i].clone()).collect(),
        edges,
        meta: net.meta.clone(),
    }
}

/// Breadth-first hop count, `None` when disconnected or absent.
pub fn hop_distance(net: &CoInvestNetwork, u: &str, v: &str) -> Option<usize> {
    let (s, t) = (net.node_index(u)?, net.node_index(v)?);
    let adj = net.adjacency();
    let mut dist = vec![usize::MAX; net.nodes.len()];
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        if x == t {
            return Some(dist[x]);
        }
        for &y in &adj[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSummary {
    pub mean: f64,
    pub std: f64,
    pub observed: usize,
    /// Networks lacking either node or a connecting path.
    pub skipped: usize,
}

pub fn avg_distance(nets: &[CoInvestNetwork], u: &str, v: &str) -> Result<DistanceSummary> {
    if u == v {
        return Err(Error::invalid("distance endpoints must differ"));
    }
    let hops: Vec<f64> = nets
        .iter()
        .filter_map(|n| hop_distance(n, u, v))
        .map(|d| d as f64)
        .collect();
    if hops.is_empty() {
        return Err(Error::invalid(format!(
            "no observations: {u} and {v} are never connected"
        )));
    }
    let (mean, std) = mean_std(&hops);
    Ok(DistanceSummary {
        mean,
        std,
        observed: hops.len(),
        skipped: nets.len() - hops.len(),
    })
}

/// Share of watchlist tickers that are an endpoint of some edge.
pub fn coverage(net: &CoInvestNetwork, watchlist: &[String]) -> Result<f64> {
    let unique: BTreeSet<&String> = watchlist.iter().collect();
    if unique.is_empty() {
        return Err(Error::invalid("empty watchlist"));
    }
    let endpoints: HashSet<&str> = net
        .edges
        .iter()
        .flat_map(|e| [net.nodes[e.source].as_str(), net.nodes[e.target].as_str()])
        .collect();
    let hit = unique.iter().filter(|t| endpoints.contains(t.as_str())).count();
    Ok(hit as f64 / unique.len() as f64)
}

/// One ticker per line; blank lines and `#` comments ignored.
pub fn read_ticker_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}
