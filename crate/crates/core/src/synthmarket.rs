//! Synthetic OHLCV markets with planted investor groups.
//!
//! Each group holds a subset of stocks. On days a group is active it pushes
//! a common signed return shock onto all of its stocks and inflates their
//! volume; every stock also receives independent noise. A group's state
//! (idle, buying, selling) carries over to the next day with probability
//! `persistence` and is otherwise redrawn, so buying or selling campaigns
//! span several days. The index is a weighted sum of closes. Pairs co-held
//! by any group form the ground truth.

use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{build_panel, AlignedPanel, RawQuoteRecord};
use crate::error::{Error, Result};
use crate::network::CoInvestNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestorGroup {
    /// Positions into [`PlantedMarket::symbols`].
    pub stocks: Vec<usize>,
    /// Chance of being active when the state is redrawn.
    pub activity: f64,
    /// Daily return shock applied while active.
    pub pressure: f64,
    #[serde(default)]
    pub persistence: f64,
    /// Relative volume increase while active.
    #[serde(default = "default_volume_boost")]
    pub volume_boost: f64,
}

fn default_volume_boost() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedMarket {
    pub symbols: Vec<String>,
    pub groups: Vec<InvestorGroup>,
    /// Std of the independent daily return noise.
    pub noise: f64,
    pub base_prices: Vec<f64>,
    pub index_weights: Vec<f64>,
    #[serde(default = "default_base_volume")]
    pub base_volume: f64,
    /// Log-scale std of the independent volume noise.
    #[serde(default = "default_volume_noise")]
    pub volume_noise: f64,
    /// Upper bound of the relative high/low extension beyond open/close.
    #[serde(default = "default_spread")]
    pub intraday_spread: f64,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    #[serde(default = "default_index_symbol")]
    pub index_symbol: String,
}

fn default_base_volume() -> f64 {
    1e6
}

fn default_volume_noise() -> f64 {
    0.2
}

fn default_spread() -> f64 {
    0.01
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

fn default_index_symbol() -> String {
    "INDEX".into()
}

/// Unordered ticker pair with the names in lexicographic order.
pub type TickerPair = (String, String);

pub fn ticker_pair(a: &str, b: &str) -> TickerPair {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl PlantedMarket {
    /// Equal index weights, prices spread over 20..120, default volume
    /// and spread settings.
    pub fn with_groups(n: usize, groups: Vec<InvestorGroup>, noise: f64) -> Self {
        Self {
            symbols: (0..n).map(|i| format!("S{i:02}")).collect(),
            groups,
            noise,
            base_prices: (0..n).map(|i| 20.0 + 100.0 * i as f64 / n.max(1) as f64).collect(),
            index_weights: vec![1.0; n],
            base_volume: default_base_volume(),
            volume_noise: default_volume_noise(),
            intraday_spread: default_spread(),
            start: default_start(),
            index_symbol: default_index_symbol(),
        }
    }

    /// Twenty stocks and four persistent groups of four to six stocks. The
    /// groups overlap on a core of nine stocks; the other eleven only carry
    /// noise.
    pub fn recovery_scenario() -> Self {
        let group = |stocks: Vec<usize>, pressure: f64| InvestorGroup {
            stocks,
            activity: 0.5,
            pressure,
            persistence: 0.8,
            volume_boost: 1.0,
        };
        Self::with_groups(
            20,
            vec![
                group(vec![0, 1, 2, 3, 4], 0.012),
                group(vec![2, 3, 4, 5, 6, 7], 0.010),
                group(vec![5, 6, 7, 8], 0.010),
                group(vec![0, 1, 6, 7, 8], 0.008),
            ],
            0.01,
        )
    }

    /// Nested subsets `S1 ⊂ S2 ⊂ S3` of twenty stocks, with investment
    /// activity densest on `S1`: one group per level holds the whole level
    /// and extra groups trade inside `S1`.
    pub fn nested_scenario() -> (Self, [Vec<String>; 3]) {
        let group = |stocks: Vec<usize>, pressure: f64| InvestorGroup {
            stocks,
            activity: 0.5,
            pressure,
            persistence: 0.8,
            volume_boost: 1.0,
        };
        let s1: Vec<usize> = (0..4).collect();
        let s2: Vec<usize> = (0..8).collect();
        let s3: Vec<usize> = (0..14).collect();
        let market = Self::with_groups(
            20,
            vec![
                group(s1.clone(), 0.010),
                group(vec![0, 1, 2], 0.008),
                group(vec![1, 2, 3], 0.008),
                group(s2.clone(), 0.006),
                group(s3.clone(), 0.004),
            ],
            0.01,
        );
        let names = |ix: &[usize]| ix.iter().map(|&i| market.symbols[i].clone()).collect::<Vec<_>>();
        let subsets = [names(&s1), names(&s2), names(&s3)];
        (market, subsets)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.symbols.len();
        if n < 2 {
            return Err(Error::invalid("planted market needs at least two stocks"));
        }
        if self.base_prices.len() != n || self.index_weights.len() != n {
            return Err(Error::invalid("base_prices and index_weights need one entry per stock"));
        }
        if self.base_prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("base prices must be positive"));
        }
        if self.index_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.index_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::invalid("index weights must be non-negative and not all zero"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.volume_noise >= 0.0) || !unit(self.intraday_spread)
        {
            return Err(Error::invalid(
                "noise levels must be non-negative, spread within [0, 1]",
            ));
        }
        if !(self.base_volume > 0.0) {
            return Err(Error::invalid("base volume must be positive"));
        }
        if self.symbols.iter().any(|s| *s == self.index_symbol) {
            return Err(Error::invalid("index symbol collides with a stock symbol"));
        }
        for (g, grp) in self.groups.iter().enumerate() {
            let unique: BTreeSet<usize> = grp.stocks.iter().copied().collect();
            if unique.len() < 2 || unique.len() != grp.stocks.len() {
                return Err(Error::invalid(format!("group {g} needs at least two distinct stocks")));
            }
            if grp.stocks.iter().any(|&s| s >= n) {
                return Err(Error::invalid(format!("group {g} references an unknown stock")));
            }
            if !unit(grp.activity) || !unit(grp.persistence) {
                return Err(Error::invalid(format!("group {g} probabilities must lie in [0, 1]")));
            }
            if !(grp.pressure >= 0.0 && grp.pressure < 0.5) || !(grp.volume_boost >= 0.0) {
                return Err(Error::invalid(format!(
                    "group {g} pressure must lie in [0, 0.5), boost >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Union of within-group pairs, as ticker pairs.
    pub fn ground_truth(&self) -> BTreeSet<TickerPair> {
        let mut out = BTreeSet::new();
        for g in &self.groups {
            for (a, &i) in g.stocks.iter().enumerate() {
                for &j in &g.stocks[a + 1..] {
                    out.insert(ticker_pair(&self.symbols[i], &self.symbols[j]));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    /// Stock quotes followed by the index quotes.
    pub records: Vec<RawQuoteRecord>,
    pub panel: AlignedPanel,
    pub index_close: Vec<f64>,
    pub truth: BTreeSet<TickerPair>,
    /// `sum_s w_s * close_s(t-1) * shock_s(t)`: the index move the group
    /// shocks alone would cause on day `t` (zero on day 0).
    pub pressure: Vec<f64>,
}

fn trading_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Simulates `days` trading days. Deterministic in `seed`.
pub fn generate(spec: &PlantedMarket, days: usize, seed: u64) -> Result<SyntheticMarket> {
    spec.validate()?;
    if days < 20 {
        return Err(Error::invalid(format!("need at least 20 days, got {days}")));
    }
    let n = spec.symbols.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = trading_days(spec.start, days);
    // 0 idle, +1 buying, -1 selling
    let mut state = vec![0.0f64; spec.groups.len()];
    let mut close: Vec<f64> = spec.base_prices.clone();
    let mut records = Vec::with_capacity((n + 1) * days);
    let mut index_close = Vec::with_capacity(days);
    let mut pressure = Vec::with_capacity(days);

    for (t, &date) in dates.iter().enumerate() {
        let mut shock = vec![0.0; n];
        let mut boost = vec![0.0; n];
        if t > 0 {
            for (g, grp) in spec.groups.iter().enumerate() {
                if !rng.gen_bool(grp.persistence) {
                    state[g] = if rng.gen_bool(grp.activity) {
                        if rng.gen_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        0.0
                    };
                }
                if state[g] != 0.0 {
                    for &s in &grp.stocks {
                        shock[s] += state[g] * grp.pressure;
                        boost[s] += grp.volume_boost;
                    }
                }
            }
        }
        let day_pressure: f64 = (0..n).map(|s| spec.index_weights[s] * close[s] * shock[s]).sum();
        pressure.push(day_pressure);

        for s in 0..n {
            let prev = close[s];
            let noise: f64 = if t > 0 && spec.noise > 0.0 {
                spec.noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let ret = (shock[s] + noise).clamp(-0.5, 0.5);
            let c = prev * (1.0 + ret);
            let o = if t > 0 && spec.noise > 0.0 {
                prev * (1.0 + 0.25 * spec.noise * rng.sample::<f64, _>(StandardNormal)).max(0.5)
            } else {
                prev
            };
            let up: f64 = rng.gen_range(0.0..=1.0);
            let down: f64 = rng.gen_range(0.0..=1.0);
            let high = o.max(c) * (1.0 + spec.intraday_spread * up);
            let low = o.min(c) * (1.0 - spec.intraday_spread * down);
            let vol_noise: f64 = if spec.volume_noise > 0.0 {
                (spec.volume_noise * rng.sample::<f64, _>(StandardNormal)).exp()
            } else {
                1.0
            };
            let volume = (spec.base_volume * vol_noise * (1.0 + boost[s])).round();
            close[s] = c;
            records.push(RawQuoteRecord {
                date,
                symbol: spec.symbols[s].clone(),
                open: o,
                close: c,
                low,
                high,
                volume,
            });
        }
        let idx: f64 = close.iter().zip(&spec.index_weights).map(|(c, w)| c * w).sum();
        index_close.push(idx);
        records.push(RawQuoteRecord {
            date,
            symbol: spec.index_symbol.clone(),
            open: idx,
            close: idx,
            low: idx,
            high: idx,
            volume: 0.0,
        });
    }

    let panel = build_panel(&records, &spec.symbols, dates[0], dates[days - 1])?.panel;
    Ok(SyntheticMarket {
        records,
        panel,
        index_close,
        truth: spec.ground_truth(),
        pressure,
    })
}

/// Share of the `k` heaviest edges (ties by canonical pair order) that are
/// planted pairs.
pub fn precision_at_k(net: &CoInvestNetwork, truth: &BTreeSet<TickerPair>, k: usize) -> Result<f64> {
    if k == 0 || k > net.edges.len() {
        return Err(Error::invalid(format!(
            "precision at {k} needs between 1 and {} edges",
            net.edges.len()
        )));
    }
    let mut edges: Vec<_> = net.edges.iter().collect();
    edges.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| (a.source, a.target).cmp(&(b.source, b.target)))
    });
    let hits = edges
        .iter()
        .take(k)
        .filter(|e| truth.contains(&ticker_pair(&net.nodes[e.source], &net.nodes[e.target])))
        .count();
    Ok(hits as f64 / k as f64)
}
