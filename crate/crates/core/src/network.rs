//! Edge weights from trained LSTM gate parameters and rare-ratio network
//! generation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{canonical_pairs, pair_index};
use crate::error::{Error, Result};
use crate::model::{DeepCnlModel, Gate};

/// Non-empty set of gates whose input weights are summed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GateSelection(BTreeSet<Gate>);

impl GateSelection {
    pub fn new(gates: impl IntoIterator<Item = Gate>) -> Result<Self> {
        let set: BTreeSet<Gate> = gates.into_iter().collect();
        if set.is_empty() {
            return Err(Error::invalid("gate selection is empty"));
        }
        Ok(Self(set))
    }

    /// Input gate, candidate and output gate.
    pub fn igo() -> Self {
        Self([Gate::Input, Gate::Cell, Gate::Output].into_iter().collect())
    }

    pub fn gates(&self) -> impl Iterator<Item = Gate> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for GateSelection {
    fn default() -> Self {
        Self::igo()
    }
}

impl fmt::Display for GateSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|g| write!(f, "{g}"))
    }
}

impl FromStr for GateSelection {
    type Err = Error;

    /// Parses letter strings such as `igo`, `igof`, `io`, `g`.
    fn from_str(s: &str) -> Result<Self> {
        let gates = s
            .trim()
            .chars()
            .map(|c| Gate::from_letter(c).ok_or_else(|| Error::invalid(format!("unknown gate letter `{c}` in `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(gates)
    }
}

impl Serialize for GateSelection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GateSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether raw gate weights are summed as-is or by magnitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Signed,
    Absolute,
}

/// One weight per unordered pair, in canonical pair order.
///
/// `f64::NEG_INFINITY` marks a pair that must never become an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeights {
    pub nodes: Vec<String>,
    pub weights: Vec<f64>,
}

impl PairWeights {
    pub fn new(nodes: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let p = nodes.len() * nodes.len().saturating_sub(1) / 2;
        if weights.len() != p {
            return Err(Error::shape(
                "PairWeights::new",
                format!("{} weights for {} nodes ({p} pairs)", weights.len(), nodes.len()),
            ));
        }
        if weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::NonFinite("PairWeights::new"));
        }
        Ok(Self { nodes, weights })
    }

    pub fn pair_count(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (i.min(j), i.max(j));
        self.weights[pair_index(self.nodes.len(), a, b)]
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        canonical_pairs(self.nodes.len())
            .into_iter()
            .zip(self.weights.iter().copied())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source", "target", "weight"])?;
        for ((i, j), wt) in self.pairs() {
            w.write_record([self.nodes[i].as_str(), self.nodes[j].as_str(), &wt.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<weights writer>", e))?;
        Ok(())
    }
}

/// For every pair, the sum over hidden units, selected gates and the pair's
/// K evidence columns of the layer-0 input-to-gate weights.
pub fn extract_weights(model: &DeepCnlModel, gates: &GateSelection) -> Result<PairWeights> {
    extract_weights_with(model, gates, WeightMode::Signed)
}

pub fn extract_weights_with(model: &DeepCnlModel, gates: &GateSelection, mode: WeightMode) -> Result<PairWeights> {
    if model.trained_epochs() == 0 {
        return Err(Error::invalid(
            "model has not been trained; its gate weights carry no signal",
        ));
    }
    let lstm = model.lstm();
    let layer = lstm
        .layers
        .first()
        .ok_or_else(|| Error::invalid("LSTM has no layers"))?;
    let k = model.config().kernels;
    let p = model.pairs().len();
    if layer.input_dim != p * k {
        return Err(Error::shape(
            "extract_weights",
            "layer-0 width does not match pair columns",
        ));
    }
    let mut weights = vec![0.0; p];
    for gate in gates.gates() {
        let w = layer.input_weights(gate).data();
        for row in w.chunks(layer.input_dim) {
            for (acc, cols) in weights.iter_mut().zip(row.chunks(k)) {
                *acc += match mode {
                    WeightMode::Signed => cols.iter().sum::<f64>(),
                    WeightMode::Absolute => cols.iter().map(|v| v.abs()).sum::<f64>(),
                };
            }
        }
    }
    PairWeights::new(model.symbols().to_vec(), weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub gamma: f64,
    pub method: String,
    pub gates: Option<String>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
}

/// Weighted undirected graph over tickers; edges satisfy `source < target`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoInvestNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub meta: NetworkMeta,
}

impl CoInvestNetwork {
    pub fn new(nodes: Vec<String>, edges: Vec<Edge>, meta: NetworkMeta) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &edges {
            if e.source == e.target {
                return Err(Error::invalid(format!(
                    "self-loop on `{}`",
                    nodes.get(e.source).map_or("?", |s| s)
                )));
            }
            if e.source > e.target || e.target >= nodes.len() {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) is not canonical",
                    e.source, e.target
                )));
            }
            if !seen.insert((e.source, e.target)) {
                return Err(Error::invalid(format!(
                    "duplicate edge {} - {}",
                    nodes[e.source], nodes[e.target]
                )));
            }
        }
        Ok(Self { nodes, edges, meta })
    }

    pub fn node_index(&self, ticker: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == ticker)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.source] += 1;
            d[e.target] += 1;
        }
        d
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.source].push(e.target);
            adj[e.target].push(e.source);
        }
        adj.iter_mut().for_each(|v| v.sort_unstable());
        adj
    }

    pub fn edge_keys(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|e| (self.nodes[e.source].clone(), self.nodes[e.target].clone()))
            .collect()
    }
}

/// Number of edges kept for rare ratio `gamma` over `pairs` candidates.
pub fn edge_budget(gamma: f64, pairs: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("rare ratio must lie in (0, 1], got {gamma}")));
    }
    // absorb representation error so that e.g. 0.2 * 10 is not rounded up to 3
    let raw = gamma * pairs as f64;
    Ok(((raw - raw * 1e-12).ceil() as usize).min(pairs))
}

/// Keeps the `ceil(gamma * P)` heaviest pairs. Ties go to the earlier
/// canonical pair; pairs weighted `-inf` are never kept.
pub fn generate_network(weights: &PairWeights, gamma: f64) -> Result<CoInvestNetwork> {
    let budget = edge_budget(gamma, weights.pair_count())?;
    let mut ranked: Vec<((usize, usize), f64)> = weights.pairs().filter(|(_, w)| w.is_finite()).collect();
    // stable sort keeps canonical order among equal weights
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let edges = ranked
        .into_iter()
        .take(budget)
        .map(|((i, j), weight)| Edge {
            source: i,
            target: j,
            weight,
        })
        .collect();
    CoInvestNetwork::new(
        weights.nodes.clone(),
        edges,
        NetworkMeta {
            gamma,
            ..NetworkMeta::default()
        },
    )
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    nodes: Vec<String>,
    #[serde(flatten)]
    meta: NetworkMeta,
}

/// `edges.csv` -> `edges.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_edges<W: Write>(net: &CoInvestNetwork, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source", "target", "weight"])?;
    for e in &net.edges {
        w.write_record([
            net.nodes[e.source].as_str(),
            net.nodes[e.target].as_str(),
            &e.weight.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<edge writer>", e))?;
    Ok(())
}

pub fn read_edges<R: Read>(reader: R, nodes: Vec<String>, meta: NetworkMeta) -> Result<CoInvestNetwork> {
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["source", "target", "weight"] {
        return Err(Error::invalid("edge list header must be `source,target,weight`"));
    }
    let mut edges = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |message: String| Error::BadRow { row: n + 1, message };
        let node = |k: usize| -> Result<usize> {
            let name = row.get(k).unwrap_or("");
            index
                .get(name)
                .copied()
                .ok_or_else(|| bad(format!("unknown node `{name}`")))
        };
        let (a, b) = (node(0)?, node(1)?);
        if a == b {
            return Err(bad(format!("self-loop on `{}`", nodes[a])));
        }
        let weight = row
            .get(2)
            .and_then(|w| w.parse::<f64>().ok())
            .filter(|w| !w.is_nan())
            .ok_or_else(|| bad("unparseable weight".into()))?;
        edges.push(Edge {
            source: a.min(b),
            target: a.max(b),
            weight,
        });
    }
    CoInvestNetwork::new(nodes, edges, meta)
}

/// Writes the edge list CSV and its JSON sidecar (nodes and metadata).
pub fn save_network(net: &CoInvestNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_edges(net, file)?;
    let side = sidecar_path(path);
    let file = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    write_sidecar(net, file)
}

/// Writes the JSON sidecar holding the node list and metadata.
pub fn write_sidecar<W: Write>(net: &CoInvestNetwork, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(
        writer,
        &Sidecar {
            nodes: net.nodes.clone(),
            meta: net.meta.clone(),
        },
    )?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<CoInvestNetwork> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_edges(file, sidecar.nodes, sidecar.meta)
}
