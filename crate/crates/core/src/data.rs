//! Quote ingestion, panel alignment, normalization, pair observation
//! matrices and index rise-fall targets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One daily OHLCV row for one ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawQuoteRecord {
    pub date: NaiveDate,
    pub symbol: String,
    pub open: f64,
    pub close: f64,
    pub low: f64,
    pub high: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Open,
    Close,
    Low,
    High,
    Volume,
}

impl Feature {
    /// Panel feature order.
    pub const ALL: [Feature; 5] = [
        Feature::Open,
        Feature::Close,
        Feature::Low,
        Feature::High,
        Feature::Volume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Open => "open",
            Feature::Close => "close",
            Feature::Low => "low",
            Feature::High => "high",
            Feature::Volume => "volume",
        }
    }

    fn of(self, rec: &RawQuoteRecord) -> f64 {
        match self {
            Feature::Open => rec.open,
            Feature::Close => rec.close,
            Feature::Low => rec.low,
            Feature::High => rec.high,
            Feature::Volume => rec.volume,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

/// Default feature subset used to pair stocks: transaction prices and volumes.
pub const DEFAULT_PAIR_FEATURES: [Feature; 2] = [Feature::Close, Feature::Volume];

const COLUMNS: [&str; 7] = ["date", "symbol", "open", "close", "low", "high", "volume"];

/// Reads quotes from a CSV file with header `date,symbol,open,close,low,high,volume`
/// (columns in any order).
pub fn load_quotes(path: impl AsRef<Path>) -> Result<Vec<RawQuoteRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_quotes(file)
}

pub fn read_quotes<R: Read>(reader: R) -> Result<Vec<RawQuoteRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 7];
    for (slot, col) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(col))
            .ok_or(Error::MissingColumn(col))?;
    }

    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row_no = n + 1;
        let row = row?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("");
        let bad = |message: String| Error::BadRow { row: row_no, message };
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", field(0))))?;
        let symbol = field(1).to_string();
        if symbol.is_empty() {
            return Err(bad("empty symbol".into()));
        }
        let num = |k: usize| -> Result<f64> {
            let raw = field(k);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("non-numeric {} `{raw}`", COLUMNS[k])))
        };
        let rec = RawQuoteRecord {
            date,
            symbol,
            open: num(2)?,
            close: num(3)?,
            low: num(4)?,
            high: num(5)?,
            volume: num(6)?,
        };
        if rec.volume < 0.0 {
            return Err(bad(format!("negative volume {}", rec.volume)));
        }
        if rec.low > rec.open.min(rec.close) || rec.high < rec.open.max(rec.close) {
            return Err(bad(format!(
                "inconsistent range: low {} high {} open {} close {}",
                rec.low, rec.high, rec.open, rec.close
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_quotes<W: Write>(writer: W, records: &[RawQuoteRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(&[
            r.date.format("%Y-%m-%d").to_string(),
            r.symbol.clone(),
            r.open.to_string(),
            r.close.to_string(),
            r.low.to_string(),
            r.high.to_string(),
            r.volume.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Per-symbol, per-feature value grid over a shared date axis.
///
/// Values are stored symbol-major, then feature, then time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    symbols: Vec<String>,
    dates: Vec<NaiveDate>,
    features: Vec<Feature>,
    values: Vec<f64>,
}

impl AlignedPanel {
    pub fn new(symbols: Vec<String>, dates: Vec<NaiveDate>, features: Vec<Feature>, values: Vec<f64>) -> Result<Self> {
        if values.len() != symbols.len() * features.len() * dates.len() {
            return Err(Error::shape(
                "AlignedPanel::new",
                format!(
                    "{} values for {}x{}x{} grid",
                    values.len(),
                    symbols.len(),
                    features.len(),
                    dates.len()
                ),
            ));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("panel dates must be strictly increasing"));
        }
        let unique: BTreeSet<_> = symbols.iter().collect();
        if unique.len() != symbols.len() {
            return Err(Error::invalid("duplicate symbol in panel"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("AlignedPanel::new"));
        }
        Ok(Self {
            symbols,
            dates,
            features,
            values,
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn symbol_index(&self, symbol: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| Error::UnknownTicker(symbol.to_string()))
    }

    pub fn feature_index(&self, feature: Feature) -> Result<usize> {
        self.features
            .iter()
            .position(|&f| f == feature)
            .ok_or_else(|| Error::UnknownFeature(feature.name().to_string()))
    }

    /// Time series of one feature for one symbol, by position.
    pub fn row(&self, symbol: usize, feature: usize) -> &[f64] {
        let n = self.dates.len();
        let start = (symbol * self.features.len() + feature) * n;
        &self.values[start..start + n]
    }

    pub fn series(&self, symbol: &str, feature: Feature) -> Result<&[f64]> {
        Ok(self.row(self.symbol_index(symbol)?, self.feature_index(feature)?))
    }

    /// Restricts the panel to `range` on the date axis.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "slice {range:?} outside date axis of length {}",
                self.len()
            )));
        }
        let mut values = Vec::with_capacity(self.symbols.len() * self.features.len() * range.len());
        for s in 0..self.symbols.len() {
            for f in 0..self.features.len() {
                values.extend_from_slice(&self.row(s, f)[range.clone()]);
            }
        }
        Ok(Self {
            symbols: self.symbols.clone(),
            dates: self.dates[range].to_vec(),
            features: self.features.clone(),
            values,
        })
    }

    /// Contiguous date ranges, one per calendar year present on the axis.
    pub fn yearly_ranges(&self) -> Vec<(i32, std::ops::Range<usize>)> {
        let mut out: Vec<(i32, std::ops::Range<usize>)> = Vec::new();
        for (t, d) in self.dates.iter().enumerate() {
            match out.last_mut() {
                Some((y, r)) if *y == d.year() => r.end = t + 1,
                _ => out.push((d.year(), t..t + 1)),
            }
        }
        out
    }
}

/// Panel plus the requested symbols that had no records in range.
#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: AlignedPanel,
    pub dropped: Vec<String>,
}

/// Aligns records into a panel over `[start, end]`.
///
/// The date axis is the set of days on which every retained symbol has a
/// record; symbols with no records in range are dropped and reported.
pub fn build_panel(
    records: &[RawQuoteRecord],
    symbols: &[String],
    start: NaiveDate,
    end: NaiveDate,
) -> Result<PanelBuild> {
    if symbols.is_empty() {
        return Err(Error::invalid("no symbols requested"));
    }
    if start > end {
        return Err(Error::invalid(format!("start {start} after end {end}")));
    }
    let wanted: HashMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut by_symbol: Vec<BTreeMap<NaiveDate, &RawQuoteRecord>> = vec![BTreeMap::new(); symbols.len()];
    for rec in records {
        if rec.date < start || rec.date > end {
            continue;
        }
        if let Some(&i) = wanted.get(rec.symbol.as_str()) {
            if by_symbol[i].insert(rec.date, rec).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate record for {} on {}",
                    rec.symbol, rec.date
                )));
            }
        }
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (sym, days) in symbols.iter().zip(&by_symbol) {
        if days.is_empty() {
            dropped.push(sym.clone());
        } else {
            kept.push((sym.clone(), days));
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("every requested symbol has no records in range"));
    }

    let mut dates: BTreeSet<NaiveDate> = kept[0].1.keys().copied().collect();
    for (_, days) in &kept[1..] {
        dates.retain(|d| days.contains_key(d));
    }
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    if dates.len() < 2 {
        return Err(Error::invalid(format!(
            "aligned date axis has {} day(s); need at least 2",
            dates.len()
        )));
    }

    let features = Feature::ALL.to_vec();
    let mut values = Vec::with_capacity(kept.len() * features.len() * dates.len());
    for (_, days) in &kept {
        for f in &features {
            values.extend(dates.iter().map(|d| f.of(days[d])));
        }
    }
    let panel = AlignedPanel::new(kept.into_iter().map(|(s, _)| s).collect(), dates, features, values)?;
    Ok(PanelBuild { panel, dropped })
}

/// Close prices of `symbol` on each of `dates`; every date must be present.
pub fn align_closes(records: &[RawQuoteRecord], symbol: &str, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    let closes: HashMap<NaiveDate, f64> = records
        .iter()
        .filter(|r| r.symbol == symbol)
        .map(|r| (r.date, r.close))
        .collect();
    dates
        .iter()
        .map(|d| {
            closes
                .get(d)
                .copied()
                .ok_or_else(|| Error::invalid(format!("{symbol} has no quote on {d}")))
        })
        .collect()
}

/// Per (symbol, feature) row: `(v - min) / (max - min)`, constant rows to 0.
pub fn minmax_normalize(panel: &AlignedPanel) -> AlignedPanel {
    let mut out = panel.clone();
    let n = panel.len();
    if n == 0 {
        return out;
    }
    for row in out.values.chunks_mut(n) {
        let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let span = hi - lo;
        for v in row.iter_mut() {
            *v = if span > 0.0 {
                ((*v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    out
}

/// Two aligned multi-feature series stacked: `2M` rows by `N` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    /// Panel positions with `pair.0 < pair.1`.
    pub pair: (usize, usize),
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl ObservationMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Stacks the selected features of `i` (in panel feature order) above those of `j`.
pub fn observation_matrix(panel: &AlignedPanel, i: &str, j: &str, features: &[Feature]) -> Result<ObservationMatrix> {
    let a = panel.symbol_index(i)?;
    let b = panel.symbol_index(j)?;
    if a == b {
        return Err(Error::invalid(format!(
            "observation matrix needs two distinct tickers, got {i} twice"
        )));
    }
    let cols = feature_positions(panel, features)?;
    Ok(stack_rows(panel, a, b, &cols))
}

/// All `|V|(|V|-1)/2` observation matrices in canonical pair order.
pub fn all_observations(panel: &AlignedPanel, features: &[Feature]) -> Result<Vec<ObservationMatrix>> {
    let cols = feature_positions(panel, features)?;
    Ok(canonical_pairs(panel.symbols.len())
        .into_iter()
        .map(|(a, b)| stack_rows(panel, a, b, &cols))
        .collect())
}

fn feature_positions(panel: &AlignedPanel, features: &[Feature]) -> Result<Vec<usize>> {
    if features.is_empty() {
        return Err(Error::invalid("empty feature subset"));
    }
    let mut idx = features
        .iter()
        .map(|&f| panel.feature_index(f))
        .collect::<Result<Vec<_>>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

fn stack_rows(panel: &AlignedPanel, a: usize, b: usize, feature_idx: &[usize]) -> ObservationMatrix {
    let n = panel.len();
    let mut data = Vec::with_capacity(2 * feature_idx.len() * n);
    for s in [a, b] {
        for &f in feature_idx {
            data.extend_from_slice(panel.row(s, f));
        }
    }
    ObservationMatrix {
        pair: (a.min(b), a.max(b)),
        rows: 2 * feature_idx.len(),
        cols: n,
        data,
    }
}

/// Lexicographic `(i, j)` with `i < j` over `n` nodes.
pub fn canonical_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Index of `(i, j)`, `i < j < n`, within [`canonical_pairs`].
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Binary index direction: `values[t-1] = 1` iff `close[t] > close[t-1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub values: Vec<u8>,
    pub source_symbol: String,
}

impl TargetSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Flat days count as falls.
pub fn rise_fall_targets(index_close: &[f64], source_symbol: &str) -> Result<TargetSeries> {
    if index_close.len() < 2 {
        return Err(Error::invalid(format!(
            "index series of length {} has no day-over-day moves",
            index_close.len()
        )));
    }
    Ok(TargetSeries {
        values: index_close.windows(2).map(|w| u8::from(w[1] > w[0])).collect(),
        source_symbol: source_symbol.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 1, d).unwrap()
    }

    fn rec(d: u32, sym: &str, close: f64) -> RawQuoteRecord {
        RawQuoteRecord {
            date: day(d),
            symbol: sym.into(),
            open: close,
            close,
            low: close - 1.0,
            high: close + 1.0,
            volume: 100.0 * close,
        }
    }

    fn syms(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_reference_row() {
        let csv = "date,symbol,open,close,low,high,volume\n2010-01-04,AAPL,30.49,30.57,30.34,30.64,123432400\n";
        let recs = read_quotes(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].close, 30.57);
        assert_eq!(recs[0].volume, 123432400.0);
        assert_eq!(recs[0].symbol, "AAPL");
    }

    #[test]
    fn column_order_is_free() {
        let csv = "symbol,volume,high,low,close,open,date\nX,5,3,1,2,2,2011-02-03\n";
        let recs = read_quotes(csv.as_bytes()).unwrap();
        assert_eq!(recs[0].high, 3.0);
        assert_eq!(recs[0].date, NaiveDate::from_ymd_opt(2011, 2, 3).unwrap());
    }

    #[test]
    fn rejects_negative_volume_with_row() {
        let csv = "date,symbol,open,close,low,high,volume\n2010-01-04,A,1,1,1,1,3\n2010-01-05,A,1,1,1,1,-5\n";
        match read_quotes(csv.as_bytes()) {
            Err(Error::BadRow { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("volume"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_and_missing_column() {
        let csv = "date,symbol,open,close,low,high,volume\n2010-01-04,A,1,abc,1,1,3\n";
        assert!(matches!(read_quotes(csv.as_bytes()), Err(Error::BadRow { row: 1, .. })));
        let csv = "date,symbol,open,close,low,high\n";
        assert!(matches!(
            read_quotes(csv.as_bytes()),
            Err(Error::MissingColumn("volume"))
        ));
    }

    #[test]
    fn header_only_is_empty() {
        let csv = "date,symbol,open,close,low,high,volume\n";
        assert!(read_quotes(csv.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn missing_file_errors() {
        assert!(matches!(load_quotes("/nonexistent/quotes.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn intersection_drops_day() {
        let mut recs: Vec<_> = (1..=5).map(|d| rec(d, "A", d as f64)).collect();
        recs.extend((1..=5).filter(|&d| d != 3).map(|d| rec(d, "B", d as f64)));
        let b = build_panel(&recs, &syms(&["A", "B"]), day(1), day(5)).unwrap();
        assert_eq!(b.panel.len(), 4);
        assert!(!b.panel.dates().contains(&day(3)));
        assert!(b.dropped.is_empty());
    }

    #[test]
    fn symbol_without_records_is_dropped() {
        let recs: Vec<_> = (1..=5)
            .map(|d| rec(d, "A", 1.0))
            .chain((1..=5).map(|d| rec(d, "B", 2.0)))
            .collect();
        let b = build_panel(&recs, &syms(&["A", "Z", "B"]), day(1), day(5)).unwrap();
        assert_eq!(b.panel.symbols(), &syms(&["A", "B"])[..]);
        assert_eq!(b.dropped, syms(&["Z"]));
    }

    #[test]
    fn full_panel_shape() {
        let recs: Vec<_> = ["A", "B", "C"]
            .iter()
            .flat_map(|s| (1..=5).map(move |d| rec(d, s, d as f64)))
            .collect();
        let p = build_panel(&recs, &syms(&["A", "B", "C"]), day(1), day(5))
            .unwrap()
            .panel;
        assert_eq!((p.symbols().len(), p.len(), p.features().len()), (3, 5, 5));
        assert_eq!(
            p.series("B", Feature::Volume).unwrap(),
            &[100.0, 200.0, 300.0, 400.0, 500.0]
        );
    }

    #[test]
    fn panel_build_errors() {
        let recs = vec![rec(1, "A", 1.0)];
        assert!(build_panel(&recs, &[], day(1), day(5)).is_err());
        assert!(build_panel(&recs, &syms(&["A"]), day(5), day(1)).is_err());
        assert!(build_panel(&recs, &syms(&["A"]), day(1), day(5)).is_err());
        assert!(build_panel(&recs, &syms(&["Q"]), day(1), day(5)).is_err());
    }

    fn single_row_panel(rows: &[&[f64]]) -> AlignedPanel {
        let n = rows[0].len();
        let dates = (1..=n as u32).map(day).collect();
        let symbols = (0..rows.len()).map(|i| format!("S{i}")).collect();
        AlignedPanel::new(symbols, dates, vec![Feature::Close], rows.concat()).unwrap()
    }

    #[test]
    fn minmax_examples() {
        let p = single_row_panel(&[&[1.0, 2.0, 3.0], &[7.0, 7.0, 7.0], &[10.0, 30.0, 20.0]]);
        let q = minmax_normalize(&p);
        assert_eq!(q.row(0, 0), &[0.0, 0.5, 1.0]);
        assert_eq!(q.row(1, 0), &[0.0, 0.0, 0.0]);
        assert_eq!(q.row(2, 0), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn worked_example_observation() {
        let p = single_row_panel(&[&[1.0; 6], &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]]);
        let a = observation_matrix(&p, "S0", "S1", &[Feature::Close]).unwrap();
        assert_eq!((a.rows, a.cols), (2, 6));
        assert_eq!(a.data, vec![1., 1., 1., 1., 1., 1., 1., 1., 0., 1., 1., 0.]);
        assert!(observation_matrix(&p, "S0", "S0", &[Feature::Close]).is_err());
        assert!(observation_matrix(&p, "S0", "S9", &[Feature::Close]).is_err());
        assert!(observation_matrix(&p, "S0", "S1", &[]).is_err());
    }

    #[test]
    fn stacking_order_with_two_features() {
        let recs: Vec<_> = ["A", "B"]
            .iter()
            .flat_map(|s| (1..=4).map(move |d| rec(d, s, if *s == "A" { d as f64 } else { 10.0 * d as f64 })))
            .collect();
        let p = build_panel(&recs, &syms(&["A", "B"]), day(1), day(4)).unwrap().panel;
        let a = observation_matrix(&p, "A", "B", &[Feature::Volume, Feature::Close]).unwrap();
        assert_eq!((a.rows, a.cols), (4, 4));
        assert_eq!(a.row(0), p.series("A", Feature::Close).unwrap());
        assert_eq!(a.row(1), p.series("A", Feature::Volume).unwrap());
        assert_eq!(a.row(2), p.series("B", Feature::Close).unwrap());
        assert_eq!(a.row(3), p.series("B", Feature::Volume).unwrap());

        let swapped = observation_matrix(&p, "B", "A", &[Feature::Close, Feature::Volume]).unwrap();
        assert_eq!(swapped.pair, (0, 1));
        assert_eq!(swapped.row(0), a.row(2));
        assert_eq!(swapped.row(3), a.row(1));
    }

    #[test]
    fn targets() {
        let t = rise_fall_targets(&[1.0, 2.0, 2.0, 1.0], "SPY").unwrap();
        assert_eq!(t.values, vec![1, 0, 0]);
        assert_eq!(rise_fall_targets(&[1.0, 2.0, 3.0], "SPY").unwrap().values, vec![1, 1]);
        assert_eq!(rise_fall_targets(&[3.0, 2.0, 1.0], "SPY").unwrap().values, vec![0, 0]);
        assert!(rise_fall_targets(&[1.0], "SPY").is_err());
    }

    #[test]
    fn pair_index_matches_enumeration() {
        for n in 2..9 {
            for (k, (i, j)) in canonical_pairs(n).into_iter().enumerate() {
                assert_eq!(pair_index(n, i, j), k);
            }
        }
    }

    #[test]
    fn yearly_ranges_split_on_calendar_year() {
        let dates = vec![
            NaiveDate::from_ymd_opt(2010, 12, 30).unwrap(),
            NaiveDate::from_ymd_opt(2010, 12, 31).unwrap(),
            NaiveDate::from_ymd_opt(2011, 1, 3).unwrap(),
        ];
        let p = AlignedPanel::new(vec!["A".into()], dates, vec![Feature::Close], vec![1., 2., 3.]).unwrap();
        assert_eq!(p.yearly_ranges(), vec![(2010, 0..2), (2011, 2..3)]);
        assert_eq!(p.slice(2..3).unwrap().row(0, 0), &[3.0]);
    }
}
