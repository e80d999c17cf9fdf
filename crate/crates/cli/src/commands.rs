use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use coinvest::analysis::{
    avg_distance, components, coverage, edge_density, influence, read_ticker_list, top_degree, MarketCapTable,
};
use coinvest::baselines::{dtw_weights, pcc_weights, vwl_weights};
use coinvest::data::{align_closes, build_panel, load_quotes, write_quotes, AlignedPanel};
use coinvest::model::{train as train_model, write_history_csv, DeepCnlModel};
use coinvest::network::{
    extract_weights_with, generate_network, load_network, sidecar_path, write_edges, write_sidecar, CoInvestNetwork,
    NetworkMeta, PairWeights,
};
use coinvest::synthmarket::{generate, PlantedMarket};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::output::{provenance_path, Outputs, Provenance};
use crate::{AnalyzeTask, BaselineMethod};

/// One training window: the whole range or a calendar year.
struct Slice {
    label: String,
    panel: AlignedPanel,
    index_close: Vec<f64>,
}

impl Slice {
    fn date_range(&self) -> (NaiveDate, NaiveDate) {
        let d = self.panel.dates();
        (d[0], d[d.len() - 1])
    }
}

fn load_slices(cfg: &RunConfig) -> Result<Vec<Slice>> {
    let quotes = cfg
        .quotes
        .as_ref()
        .ok_or_else(|| anyhow!("no quotes file; set `quotes` in the config or pass --set quotes=<path>"))?;
    let records = load_quotes(quotes).with_context(|| format!("loading {}", quotes.display()))?;
    if records.is_empty() {
        bail!("{} holds no quotes", quotes.display());
    }
    let mut symbols = match &cfg.symbols {
        Some(s) => s.clone(),
        None => records
            .iter()
            .filter(|r| r.symbol != cfg.index_symbol)
            .map(|r| r.symbol.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if let Some(max) = cfg.max_symbols {
        symbols.truncate(max);
    }
    let first = records.iter().map(|r| r.date).min().expect("non-empty");
    let last = records.iter().map(|r| r.date).max().expect("non-empty");
    let built = build_panel(&records, &symbols, cfg.start.unwrap_or(first), cfg.end.unwrap_or(last))?;
    for s in &built.dropped {
        eprintln!("warning: {s} has no quotes in range and was dropped");
    }
    if built.panel.symbols().len() < 2 {
        bail!(
            "need at least two symbols with quotes, found {}",
            built.panel.symbols().len()
        );
    }
    let index_close = align_closes(&records, &cfg.index_symbol, built.panel.dates())?;

    if !cfg.yearly {
        return Ok(vec![Slice {
            label: "all".into(),
            panel: built.panel,
            index_close,
        }]);
    }
    built
        .panel
        .yearly_ranges()
        .into_iter()
        .map(|(year, range)| {
            Ok(Slice {
                label: year.to_string(),
                panel: built.panel.slice(range.clone())?,
                index_close: index_close[range].to_vec(),
            })
        })
        .collect()
}

/// Runs `jobs` closures on a bounded pool; results come back in job order.
fn run_pool<T, F>(jobs: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                if job >= jobs {
                    break;
                }
                let r = f(job);
                results.lock().expect("result list poisoned")[job] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result list poisoned")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn train(cfg: &RunConfig, outputs: &Outputs) -> Result<()> {
    let slices = load_slices(cfg)?;
    let jobs = slices.len() * cfg.trials;
    let workers = cfg.worker_count(jobs);
    let hash = cfg.hash();
    eprintln!(
        "training {} slice(s) x {} trial(s) on {} stocks with {workers} worker(s)",
        slices.len(),
        cfg.trials,
        slices[0].panel.symbols().len()
    );

    let summaries = run_pool(jobs, workers, |job| {
        let (slice, trial) = (&slices[job / cfg.trials], job % cfg.trials);
        let seed = cfg.seed + trial as u64;
        let outcome = train_model(&slice.panel, &slice.index_close, &cfg.model_config(seed))
            .with_context(|| format!("training {} trial {trial}", slice.label))?;
        for w in &outcome.warnings {
            eprintln!("warning: {} trial {trial}: {w}", slice.label);
        }
        let stem = format!("{}-t{trial}", slice.label);
        let prov = |command: &str| Provenance {
            command: command.into(),
            config_hash: hash.clone(),
            seed,
            date_range: Some(slice.date_range()),
            detail: Some(serde_json::json!({
                "slice": slice.label,
                "trial": trial,
                "final_loss": outcome.final_loss,
                "final_accuracy": outcome.final_accuracy,
                "majority_rate": outcome.majority_rate,
                "warnings": outcome.warnings,
            })),
        };

        let model_path = cfg.out.join(format!("{stem}.model.json"));
        outputs.write_with(&model_path, |w| {
            serde_json::to_writer(&mut *w, &outcome.model.to_checkpoint())?;
            Ok(())
        })?;
        outputs.write_provenance(&model_path, &prov("train"))?;
        let history_path = cfg.out.join(format!("{stem}.history.csv"));
        outputs.write_with(&history_path, |w| Ok(write_history_csv(w, &outcome.history)?))?;
        outputs.write_provenance(&history_path, &prov("train"))?;
        Ok(format!(
            "{stem}: loss {:.4} -> {:.4}, accuracy {:.3} (majority {:.3})",
            outcome.history.first().map_or(outcome.final_loss, |h| h.loss),
            outcome.final_loss,
            outcome.final_accuracy,
            outcome.majority_rate
        ))
    })?;
    for s in summaries {
        println!("{s}");
    }
    Ok(())
}

#[derive(Deserialize)]
struct StoredProvenance {
    seed: Option<u64>,
    date_range: Option<(NaiveDate, NaiveDate)>,
}

fn weights_provenance(command: &str, meta: &NetworkMeta) -> Provenance {
    Provenance {
        command: command.into(),
        config_hash: meta.config_hash.clone().unwrap_or_default(),
        seed: meta.seed.unwrap_or_default(),
        date_range: meta.date_range,
        detail: Some(serde_json::json!({ "method": meta.method })),
    }
}

/// Writes `{stem}.weights.csv` (every pair) and its provenance.
fn save_weights_tracked(weights: &PairWeights, path: &Path, prov: &Provenance, outputs: &Outputs) -> Result<()> {
    outputs.write_with(path, |w| Ok(weights.write_csv(w)?))?;
    outputs.write_provenance(path, prov)
}

fn save_network_tracked(net: &CoInvestNetwork, path: &Path, outputs: &Outputs) -> Result<()> {
    outputs.write_with(path, |w| Ok(write_edges(net, w)?))?;
    outputs.write_with(&sidecar_path(path), |w| Ok(write_sidecar(net, w)?))
}

pub fn extract(cfg: &RunConfig, checkpoints: &[PathBuf], outputs: &Outputs) -> Result<()> {
    let hash = cfg.hash();
    for ckpt in checkpoints {
        let model = DeepCnlModel::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
        let stored: Option<StoredProvenance> = std::fs::read_to_string(provenance_path(ckpt))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        let weights = extract_weights_with(&model, &cfg.gates, cfg.weight_mode)?;
        let mut net = generate_network(&weights, cfg.gamma)?;
        net.meta = NetworkMeta {
            gamma: cfg.gamma,
            method: format!("DNL-{}", cfg.gates),
            gates: Some(cfg.gates.to_string()),
            seed: Some(stored.as_ref().and_then(|p| p.seed).unwrap_or(model.config().seed)),
            config_hash: Some(hash.clone()),
            date_range: stored.and_then(|p| p.date_range),
        };

        let name = ckpt.file_name().and_then(|n| n.to_str()).unwrap_or("model");
        let stem = name
            .strip_suffix(".model.json")
            .or_else(|| name.strip_suffix(".json"))
            .unwrap_or(name);
        let path = cfg.out.join(format!("{stem}.{}.edges.csv", cfg.gates));
        save_network_tracked(&net, &path, outputs)?;
        let prov = weights_provenance("extract", &net.meta);
        save_weights_tracked(
            &weights,
            &cfg.out.join(format!("{stem}.{}.weights.csv", cfg.gates)),
            &prov,
            outputs,
        )?;
        println!(
            "{}: {} edges over {} stocks",
            path.display(),
            net.edges.len(),
            net.nodes.len()
        );
    }
    Ok(())
}

pub fn baseline(cfg: &RunConfig, method: BaselineMethod, outputs: &Outputs) -> Result<()> {
    let slices = load_slices(cfg)?;
    let hash = cfg.hash();
    let (name, tag) = match method {
        BaselineMethod::Pcc => ("PCC", "pcc"),
        BaselineMethod::Dtw => ("DTW", "dtw"),
        BaselineMethod::Vwl => ("VWL", "vwl"),
    };
    let nets = run_pool(slices.len(), cfg.worker_count(slices.len()), |i| {
        let slice = &slices[i];
        let weights: PairWeights = match method {
            BaselineMethod::Pcc => pcc_weights(&slice.panel, cfg.baseline_feature, cfg.p_threshold)?,
            BaselineMethod::Dtw => dtw_weights(&slice.panel, cfg.baseline_feature)?,
            BaselineMethod::Vwl => vwl_weights(&slice.panel, cfg.baseline_feature, cfg.wl_iterations)?,
        };
        let mut net = generate_network(&weights, cfg.gamma)?;
        net.meta = NetworkMeta {
            gamma: cfg.gamma,
            method: name.into(),
            gates: None,
            seed: Some(cfg.seed),
            config_hash: Some(hash.clone()),
            date_range: Some(slice.date_range()),
        };
        Ok((weights, net))
    })?;
    for (slice, (weights, net)) in slices.iter().zip(&nets) {
        let path = cfg.out.join(format!("{}.{tag}.edges.csv", slice.label));
        save_network_tracked(net, &path, outputs)?;
        let prov = weights_provenance(&format!("baseline {tag}"), &net.meta);
        save_weights_tracked(
            weights,
            &cfg.out.join(format!("{}.{tag}.weights.csv", slice.label)),
            &prov,
            outputs,
        )?;
        println!(
            "{}: {} edges over {} stocks",
            path.display(),
            net.edges.len(),
            net.nodes.len()
        );
    }
    Ok(())
}

fn network_label(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("network");
    name.strip_suffix(".edges.csv")
        .or_else(|| name.strip_suffix(".csv"))
        .unwrap_or(name)
        .to_string()
}

fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let list = read_ticker_list(&text);
    if list.is_empty() {
        bail!("{} lists no tickers", path.display());
    }
    Ok(list)
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str, task: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| anyhow!("analyze {task} needs `{key}`; set it in the config or pass --set {key}=<path>"))
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for row in rdr.records() {
        let row = row?;
        match (row.get(0), row.get(1)) {
            (Some("u" | "source"), Some("v" | "target")) if pairs.is_empty() => {}
            (Some(u), Some(v)) if !u.is_empty() && !v.is_empty() => pairs.push((u.to_string(), v.to_string())),
            _ => bail!("{}: expected `u,v` rows", path.display()),
        }
    }
    if pairs.is_empty() {
        bail!("{} lists no pairs", path.display());
    }
    Ok(pairs)
}

/// Prints rows as a left-aligned table.
fn print_table(rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let _ = write!(line, "{cell:<w$}  ", w = widths[c]);
        }
        println!("{}", line.trim_end());
    }
}

pub fn analyze(cfg: &RunConfig, task: AnalyzeTask, paths: &[PathBuf], outputs: &Outputs) -> Result<()> {
    let nets: Vec<(String, CoInvestNetwork)> = paths
        .iter()
        .map(|p| {
            load_network(p)
                .with_context(|| format!("loading {}", p.display()))
                .map(|n| (network_label(p), n))
        })
        .collect::<Result<_>>()?;
    let f = |x: f64| format!("{x:.6}");

    let (file, rows): (&str, Vec<Vec<String>>) = match task {
        AnalyzeTask::Density => {
            if cfg.subsets.is_empty() {
                bail!("analyze density needs `subsets`; list ticker files in the config");
            }
            let subsets: Vec<(String, Vec<String>)> = cfg
                .subsets
                .iter()
                .map(|p| Ok((network_label(p).trim_end_matches(".txt").to_string(), read_list(p)?)))
                .collect::<Result<_>>()?;
            let mut rows = vec![vec!["network".into(), "subset".into(), "size".into(), "density".into()]];
            for (label, net) in &nets {
                for (name, list) in &subsets {
                    let d = edge_density(net, list).with_context(|| format!("{label}, subset {name}"))?;
                    rows.push(vec![label.clone(), name.clone(), list.len().to_string(), f(d)]);
                }
            }
            ("density.csv", rows)
        }
        AnalyzeTask::TopDegree => {
            let caps = MarketCapTable::load(required(&cfg.caps, "caps", "top-degree")?)?;
            let mut rows = vec![[
                "network",
                "k",
                "tickers",
                "truncated",
                "influence_mean",
                "influence_std",
                "missing",
            ]
            .map(String::from)
            .to_vec()];
            for (label, net) in &nets {
                let top = top_degree(net, cfg.top_k)?;
                if top.truncated {
                    eprintln!("warning: {label} has fewer than {} nodes", cfg.top_k);
                }
                let inf = influence(&top.tickers, &caps).with_context(|| label.clone())?;
                rows.push(vec![
                    label.clone(),
                    cfg.top_k.to_string(),
                    top.tickers.join(" "),
                    top.truncated.to_string(),
                    f(inf.mean),
                    f(inf.std),
                    inf.missing.join(" "),
                ]);
            }
            ("top_degree.csv", rows)
        }
        AnalyzeTask::Components => {
            let mut rows = vec![[
                "network",
                "nodes",
                "edges",
                "components",
                "largest_nodes",
                "largest_edges",
            ]
            .map(String::from)
            .to_vec()];
            for (label, net) in &nets {
                let comps = components(net);
                let largest = comps.iter().max_by_key(|c| c.len()).cloned().unwrap_or_default();
                let inside: BTreeSet<usize> = largest.iter().copied().collect();
                let largest_edges = net
                    .edges
                    .iter()
                    .filter(|e| inside.contains(&e.source) && inside.contains(&e.target))
                    .count();
                rows.push(vec![
                    label.clone(),
                    net.nodes.len().to_string(),
                    net.edges.len().to_string(),
                    comps.len().to_string(),
                    largest.len().to_string(),
                    largest_edges.to_string(),
                ]);
            }
            ("components.csv", rows)
        }
        AnalyzeTask::Distances => {
            let pairs = read_pairs(required(&cfg.pairs, "pairs", "distances")?)?;
            let all: Vec<CoInvestNetwork> = nets.iter().map(|(_, n)| n.clone()).collect();
            let mut rows = vec![["u", "v", "mean", "std", "observed", "skipped"]
                .map(String::from)
                .to_vec()];
            for (u, v) in &pairs {
                match avg_distance(&all, u, v) {
                    Ok(d) => rows.push(vec![
                        u.clone(),
                        v.clone(),
                        f(d.mean),
                        f(d.std),
                        d.observed.to_string(),
                        d.skipped.to_string(),
                    ]),
                    Err(e) => {
                        eprintln!("warning: {u}-{v}: {e}");
                        rows.push(vec![
                            u.clone(),
                            v.clone(),
                            "".into(),
                            "".into(),
                            "0".into(),
                            all.len().to_string(),
                        ]);
                    }
                }
            }
            ("distances.csv", rows)
        }
        AnalyzeTask::Coverage => {
            let watchlist = read_list(required(&cfg.watchlist, "watchlist", "coverage")?)?;
            let mut rows = vec![["network", "watchlist_size", "coverage"].map(String::from).to_vec()];
            let size = watchlist.iter().collect::<BTreeSet<_>>().len();
            for (label, net) in &nets {
                rows.push(vec![label.clone(), size.to_string(), f(coverage(net, &watchlist)?)]);
            }
            ("coverage.csv", rows)
        }
    };

    let path = cfg.out.join(file);
    outputs.write_with(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in &rows {
            csv.write_record(row)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    outputs.write_provenance(
        &path,
        &Provenance {
            command: format!("analyze {}", file.trim_end_matches(".csv").replace('_', "-")),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            date_range: None,
            detail: Some(serde_json::json!({ "networks": paths })),
        },
    )?;
    print_table(&rows);
    Ok(())
}

pub fn simulate(cfg: &RunConfig, outputs: &Outputs) -> Result<()> {
    let (spec, subsets) = match cfg.scenario.as_str() {
        "recovery" => (PlantedMarket::recovery_scenario(), None),
        "nested" => {
            let (spec, subsets) = PlantedMarket::nested_scenario();
            (spec, Some(subsets))
        }
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {path}"))?;
            let spec: PlantedMarket =
                serde_json::from_str(&text).with_context(|| format!("parsing scenario {path}"))?;
            (spec, None)
        }
    };
    let market = generate(&spec, cfg.days, cfg.seed)?;
    let prov = Provenance {
        command: "simulate".into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        date_range: {
            let d = market.panel.dates();
            Some((d[0], d[d.len() - 1]))
        },
        detail: Some(
            serde_json::json!({ "scenario": cfg.scenario, "days": cfg.days, "truth_pairs": market.truth.len() }),
        ),
    };

    let quotes = cfg.out.join("quotes.csv");
    outputs.write_with(&quotes, |w| Ok(write_quotes(w, &market.records)?))?;
    outputs.write_provenance(&quotes, &prov)?;
    let truth = cfg.out.join("truth.csv");
    outputs.write_with(&truth, |w| {
        writeln!(w, "source,target")?;
        for (a, b) in &market.truth {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    })?;
    outputs.write_provenance(&truth, &prov)?;
    let scenario = cfg.out.join("scenario.json");
    outputs.write_json(&scenario, &spec)?;
    outputs.write_provenance(&scenario, &prov)?;
    if let Some(subsets) = subsets {
        for (i, list) in subsets.iter().enumerate() {
            let path = cfg.out.join(format!("s{}.txt", i + 1));
            outputs.write_with(&path, |w| {
                for t in list {
                    writeln!(w, "{t}")?;
                }
                Ok(())
            })?;
            outputs.write_provenance(&path, &prov)?;
        }
    }
    println!(
        "{}: {} stocks x {} days, {} planted pairs",
        quotes.display(),
        spec.symbols.len(),
        market.panel.len(),
        market.truth.len()
    );
    Ok(())
}
