//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; the plain `*_json` functions carry
//! the logic so they can be tested natively.

use coinvest::baselines::{
    dtw_distance, dtw_weights, pcc_weights, pearson, visibility_graph, vwl_weights, wl_similarity,
};
use coinvest::data::Feature;
use coinvest::model::{train, ModelConfig};
use coinvest::network::{extract_weights, generate_network, GateSelection, PairWeights};
use coinvest::synthmarket::{generate, precision_at_k, ticker_pair, PlantedMarket};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Simulates the planted 20-stock market and builds a network with `method`
/// (`pcc`, `dtw`, `vwl` or `dnl`), marking which edges are planted pairs.
#[wasm_bindgen]
pub fn planted_network(seed: u64, days: usize, method: &str, gamma: f64, epochs: usize) -> Result<String, JsValue> {
    planted_network_json(seed, days, method, gamma, epochs).map_err(|e| JsValue::from_str(&e))
}

/// Natural visibility graph of a comma or whitespace separated series.
#[wasm_bindgen]
pub fn visibility(series: &str) -> Result<String, JsValue> {
    visibility_json(series).map_err(|e| JsValue::from_str(&e))
}

/// Pearson, DTW and visibility-graph WL similarity of two series.
#[wasm_bindgen]
pub fn compare_series(a: &str, b: &str, iterations: usize) -> Result<String, JsValue> {
    compare_series_json(a, b, iterations).map_err(|e| JsValue::from_str(&e))
}

fn parse_series(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

pub fn planted_network_json(seed: u64, days: usize, method: &str, gamma: f64, epochs: usize) -> Result<String, String> {
    let spec = PlantedMarket::recovery_scenario();
    let market = generate(&spec, days, seed).map_err(|e| e.to_string())?;
    let weights: PairWeights = match method {
        "pcc" => pcc_weights(&market.panel, Feature::Close, 0.05),
        "dtw" => dtw_weights(&market.panel, Feature::Close),
        "vwl" => vwl_weights(&market.panel, Feature::Close, 3),
        "dnl" => {
            let config = ModelConfig {
                kernels: 4,
                hidden: 16,
                layers: 1,
                epochs,
                seed,
                ..ModelConfig::desk()
            };
            train(&market.panel, &market.index_close, &config)
                .and_then(|out| extract_weights(&out.model, &GateSelection::igo()))
        }
        other => return Err(format!("unknown method `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    let net = generate_network(&weights, gamma).map_err(|e| e.to_string())?;
    let precision = if net.edges.is_empty() {
        None
    } else {
        Some(precision_at_k(&net, &market.truth, net.edges.len()).map_err(|e| e.to_string())?)
    };
    let edges: Vec<_> = net
        .edges
        .iter()
        .map(|e| {
            let planted = market
                .truth
                .contains(&ticker_pair(&net.nodes[e.source], &net.nodes[e.target]));
            json!({ "source": e.source, "target": e.target, "weight": e.weight, "planted": planted })
        })
        .collect();
    Ok(json!({
        "nodes": net.nodes,
        "edges": edges,
        "planted_pairs": market.truth.len(),
        "pairs": weights.pair_count(),
        "precision": precision,
        "index": market.index_close,
    })
    .to_string())
}

pub fn visibility_json(series: &str) -> Result<String, String> {
    let series = parse_series(series)?;
    let g = visibility_graph(&series).map_err(|e| e.to_string())?;
    Ok(json!({ "series": series, "edges": g.edges, "degrees": g.labels }).to_string())
}

pub fn compare_series_json(a: &str, b: &str, iterations: usize) -> Result<String, String> {
    let (a, b) = (parse_series(a)?, parse_series(b)?);
    let (r, p) = pearson(&a, &b).map_err(|e| e.to_string())?;
    let dtw = dtw_distance(&a, &b).map_err(|e| e.to_string())?;
    let ga = visibility_graph(&a).map_err(|e| e.to_string())?;
    let gb = visibility_graph(&b).map_err(|e| e.to_string())?;
    Ok(json!({
        "pearson": r,
        "p_value": p,
        "dtw": dtw,
        "dtw_similarity": 1.0 / (1.0 + dtw),
        "wl": wl_similarity(&ga, &gb, iterations),
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn visibility_of_a_peak() {
        let v = parse(&visibility_json("1, 3 2").unwrap());
        assert_eq!(v["edges"], json!([[0, 1], [1, 2]]));
        assert_eq!(v["degrees"], json!([1, 2, 1]));
        assert!(visibility_json("1 x").unwrap_err().contains("`x`"));
    }

    #[test]
    fn identical_series_are_maximally_similar() {
        let v = parse(&compare_series_json("1 4 2 5 3", "1 4 2 5 3", 2).unwrap());
        assert!((v["pearson"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(v["dtw"], 0.0);
        assert!((v["wl"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planted_network_marks_truth() {
        let v = parse(&planted_network_json(1, 120, "pcc", 0.1, 0).unwrap());
        assert_eq!(v["nodes"].as_array().unwrap().len(), 20);
        assert_eq!(v["pairs"], 190);
        assert_eq!(v["planted_pairs"], 31);
        let edges = v["edges"].as_array().unwrap();
        assert!(edges.len() <= 19);
        if !edges.is_empty() {
            let hits = edges.iter().filter(|e| e["planted"] == true).count();
            assert!((v["precision"].as_f64().unwrap() - hits as f64 / edges.len() as f64).abs() < 1e-12);
        }
        assert!(planted_network_json(1, 120, "nope", 0.1, 0).is_err());
    }

    #[test]
    fn planted_network_trains_briefly() {
        let v = parse(&planted_network_json(2, 60, "dnl", 0.05, 3).unwrap());
        assert_eq!(v["edges"].as_array().unwrap().len(), 10);
    }
}
