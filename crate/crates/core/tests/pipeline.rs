use std::collections::BTreeSet;

use coinvest::analysis::{components, edge_density, top_degree};
use coinvest::baselines::{dtw_weights, pcc_weights, pearson, vwl_weights};
use coinvest::data::{align_closes, build_panel, load_quotes, write_quotes, Feature};
use coinvest::model::{train, write_history_csv, DeepCnlModel, ModelConfig};
use coinvest::network::{
    extract_weights, generate_network, load_network, save_network, CoInvestNetwork, Edge, GateSelection, NetworkMeta,
};
use coinvest::synthmarket::{generate, precision_at_k, ticker_pair, InvestorGroup, PlantedMarket};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ten_stock_market() -> PlantedMarket {
    let group = |stocks: Vec<usize>| InvestorGroup {
        stocks,
        activity: 0.5,
        pressure: 0.012,
        persistence: 0.8,
        volume_boost: 1.0,
    };
    PlantedMarket::with_groups(10, vec![group(vec![0, 1, 2, 3]), group(vec![4, 5, 6])], 0.01)
}

#[test]
fn csv_round_trip_feeds_training() {
    let spec = ten_stock_market();
    let market = generate(&spec, 250, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let quotes = dir.path().join("quotes.csv");
    write_quotes(std::fs::File::create(&quotes).unwrap(), &market.records).unwrap();
    let records = load_quotes(&quotes).unwrap();
    let dates = market.panel.dates();
    let built = build_panel(&records, &spec.symbols, dates[0], *dates.last().unwrap()).unwrap();
    assert!(built.dropped.is_empty());
    let index = align_closes(&records, "INDEX", built.panel.dates()).unwrap();
    for (a, b) in built
        .panel
        .series("S03", Feature::Close)
        .unwrap()
        .iter()
        .zip(market.panel.series("S03", Feature::Close).unwrap())
    {
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }

    let config = ModelConfig {
        kernels: 4,
        hidden: 16,
        layers: 1,
        epochs: 200,
        seed: 8,
        ..ModelConfig::desk()
    };
    let out = train(&built.panel, &index, &config).unwrap();
    assert_eq!(out.history.len(), 200);
    assert!(out.final_loss < out.history[0].loss);
    assert!(out.final_accuracy > 0.5);

    let mut history = Vec::new();
    write_history_csv(&mut history, &out.history).unwrap();
    let text = String::from_utf8(history).unwrap();
    assert!(text.starts_with("epoch,loss,accuracy\n0,"));
    assert_eq!(text.lines().count(), 201);

    let ckpt = dir.path().join("model.json");
    out.model.save(&ckpt).unwrap();
    let model = DeepCnlModel::load(&ckpt).unwrap();
    let weights = extract_weights(&model, &GateSelection::igo()).unwrap();
    assert_eq!(weights, extract_weights(&out.model, &GateSelection::igo()).unwrap());

    let net = generate_network(&weights, 0.2).unwrap();
    assert_eq!(net.edges.len(), 9);
    let path = dir.path().join("edges.csv");
    save_network(&net, &path).unwrap();
    let back = load_network(&path).unwrap();
    assert_eq!(back.edge_keys(), net.edge_keys());
    assert_eq!(std::fs::read(&path).unwrap(), {
        save_network(&back, dir.path().join("again.csv")).unwrap();
        std::fs::read(dir.path().join("again.csv")).unwrap()
    });

    let top = top_degree(&net, 3).unwrap();
    assert_eq!(top.tickers.len(), 3);
    assert!(edge_density(&net, &spec.symbols).unwrap() > 0.0);
    assert!(!components(&net).is_empty());
}

#[test]
fn baselines_run_on_planted_panel() {
    let market = generate(&ten_stock_market(), 120, 2).unwrap();
    let pcc = pcc_weights(&market.panel, Feature::Close, 0.01).unwrap();
    let dtw = dtw_weights(&market.panel, Feature::Close).unwrap();
    let vwl = vwl_weights(&market.panel, Feature::Close, 3).unwrap();
    for w in [&pcc, &dtw, &vwl] {
        assert_eq!(w.pair_count(), 45);
    }
    assert!(dtw.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    assert!(vwl.weights.iter().all(|&w| (0.0..=1.0 + 1e-12).contains(&w)));
    let net = generate_network(&dtw, 0.1).unwrap();
    assert_eq!(net.edges.len(), 5);
}

fn returns(p: &[f64]) -> Vec<f64> {
    p.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

#[test]
fn co_held_pairs_correlate_more() {
    let spec = ten_stock_market();
    let truth = spec.ground_truth();
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let m = generate(&spec, 250, seed).unwrap();
        for i in 0..10 {
            for j in i + 1..10 {
                let (a, b) = (&spec.symbols[i], &spec.symbols[j]);
                let r = pearson(
                    &returns(m.panel.series(a, Feature::Close).unwrap()),
                    &returns(m.panel.series(b, Feature::Close).unwrap()),
                )
                .unwrap()
                .0;
                if truth.contains(&ticker_pair(a, b)) {
                    inside.push(r);
                } else {
                    outside.push(r);
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&inside) > mean(&outside) + 0.2,
        "{} vs {}",
        mean(&inside),
        mean(&outside)
    );
}

#[test]
fn random_selection_precision_matches_base_rate() {
    let spec = PlantedMarket::recovery_scenario();
    let truth = spec.ground_truth();
    let nodes = spec.symbols.clone();
    let pairs: Vec<(usize, usize)> = (0..20).flat_map(|i| (i + 1..20).map(move |j| (i, j))).collect();
    let k = truth.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 4000;
    let mut total = 0.0;
    for _ in 0..trials {
        let chosen: Vec<_> = pairs.choose_multiple(&mut rng, k).collect();
        let edges = chosen
            .iter()
            .map(|&&(source, target)| Edge {
                source,
                target,
                weight: 1.0,
            })
            .collect::<Vec<_>>();
        let mut edges = edges;
        edges.sort_by_key(|e| (e.source, e.target));
        let net = CoInvestNetwork::new(nodes.clone(), edges, NetworkMeta::default()).unwrap();
        total += precision_at_k(&net, &truth, k).unwrap();
    }
    let expected = k as f64 / pairs.len() as f64;
    assert!((total / trials as f64 - expected).abs() < 0.01);

    let all: BTreeSet<_> = truth.iter().cloned().collect();
    let planted: Vec<Edge> = pairs
        .iter()
        .filter(|&&(i, j)| all.contains(&ticker_pair(&nodes[i], &nodes[j])))
        .map(|&(source, target)| Edge {
            source,
            target,
            weight: 1.0,
        })
        .collect();
    let net = CoInvestNetwork::new(nodes, planted, NetworkMeta::default()).unwrap();
    assert_eq!(precision_at_k(&net, &truth, k).unwrap(), 1.0);
}

#[test]
fn zero_groups_yield_no_truth() {
    let spec = PlantedMarket::with_groups(6, Vec::new(), 0.01);
    let m = generate(&spec, 60, 4).unwrap();
    assert!(m.truth.is_empty());
    assert!(m.pressure.iter().all(|&p| p == 0.0));
}
