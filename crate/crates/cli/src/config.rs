//! Run configuration: a flat TOML file of `key = value` lines plus
//! command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use coinvest::data::{Feature, DEFAULT_PAIR_FEATURES};
use coinvest::model::ModelConfig;
use coinvest::network::{GateSelection, WeightMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Quotes CSV holding the stocks and the index.
    pub quotes: Option<PathBuf>,
    pub index_symbol: String,
    /// Stock universe; every non-index symbol in the quotes file when unset.
    pub symbols: Option<Vec<String>>,
    /// Keep at most this many symbols (after sorting).
    pub max_symbols: Option<usize>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Train one model per calendar year instead of one over the whole range.
    pub yearly: bool,

    pub kernels: usize,
    pub window: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub features: Vec<Feature>,
    pub gates: GateSelection,
    pub weight_mode: WeightMode,
    pub gamma: f64,
    /// Independent trials per slice; trial `t` uses seed `seed + t`.
    pub trials: usize,
    /// Worker threads for trials and slices; all available cores when unset.
    pub workers: Option<usize>,

    pub baseline_feature: Feature,
    pub p_threshold: f64,
    pub wl_iterations: usize,

    pub out: PathBuf,

    /// Ticker lists for `analyze density`, one file per subset.
    pub subsets: Vec<PathBuf>,
    /// `symbol,cap_usd_bn` table for `analyze top-degree`.
    pub caps: Option<PathBuf>,
    pub top_k: usize,
    /// `u,v` ticker pairs for `analyze distances`.
    pub pairs: Option<PathBuf>,
    /// Ticker list for `analyze coverage`.
    pub watchlist: Option<PathBuf>,

    /// `recovery`, `nested`, or a path to a JSON market spec.
    pub scenario: String,
    pub days: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::desk();
        Self {
            quotes: None,
            index_symbol: "INDEX".into(),
            symbols: None,
            max_symbols: None,
            start: None,
            end: None,
            yearly: false,
            kernels: model.kernels,
            window: model.window,
            hidden: model.hidden,
            layers: model.layers,
            lambda: model.lambda,
            lr: model.lr,
            epochs: model.epochs,
            seed: model.seed,
            features: DEFAULT_PAIR_FEATURES.to_vec(),
            gates: model.gates,
            weight_mode: WeightMode::Signed,
            gamma: 0.02,
            trials: 1,
            workers: None,
            baseline_feature: Feature::Close,
            p_threshold: 0.01,
            wl_iterations: 3,
            out: PathBuf::from("out"),
            subsets: Vec::new(),
            caps: None,
            top_k: 10,
            pairs: None,
            watchlist: None,
            scenario: "recovery".into(),
            days: 250,
        }
    }
}

const PATH_KEYS: [&str; 6] = ["quotes", "out", "caps", "pairs", "watchlist", "subsets"];

/// Loads `path` (if any), applies `key=value` overrides and validates.
/// Relative paths in the file resolve against the file's directory.
pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let mut table: toml::Table = text
                .parse()
                .with_context(|| format!("parsing config {}", p.display()))?;
            if let Some(dir) = p.parent() {
                rebase_paths(&mut table, dir);
            }
            table
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        table.insert(key.clone(), value.clone());
    }
    let config: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
    config.validate()?;
    Ok(config)
}

fn rebase_paths(table: &mut toml::Table, dir: &Path) {
    let rebase = |s: &mut String| {
        if Path::new(s.as_str()).is_relative() {
            *s = dir.join(&*s).to_string_lossy().into_owned();
        }
    };
    for key in PATH_KEYS {
        match table.get_mut(key) {
            Some(toml::Value::String(s)) => rebase(s),
            Some(toml::Value::Array(items)) => {
                for item in items {
                    if let toml::Value::String(s) = item {
                        rebase(s);
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(toml::Value::String(s)) = table.get_mut("scenario") {
        if s.ends_with(".json") {
            rebase(s);
        }
    }
}

/// Interprets an override as a TOML value, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Parses a `--set key=value` argument.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model_config(self.seed)
            .validate()
            .context("invalid model settings")?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            bail!("gamma must lie in (0, 1], got {}", self.gamma);
        }
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        if !(self.p_threshold > 0.0 && self.p_threshold <= 1.0) {
            bail!("p_threshold must lie in (0, 1], got {}", self.p_threshold);
        }
        if self.max_symbols.is_some_and(|m| m < 2) {
            bail!("max_symbols must be at least 2");
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                bail!("start {s} is after end {e}");
            }
        }
        if self.top_k == 0 {
            bail!("top_k must be positive");
        }
        Ok(())
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            kernels: self.kernels,
            window: self.window,
            hidden: self.hidden,
            layers: self.layers,
            lambda: self.lambda,
            lr: self.lr,
            epochs: self.epochs,
            seed,
            features: self.features.clone(),
            gates: self.gates.clone(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn worker_count(&self, jobs: usize) -> usize {
        let available = std::thread::available_parallelism().map_or(1, |n| n.get());
        self.workers.unwrap_or(available).min(jobs).max(1)
    }
}
