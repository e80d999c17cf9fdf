use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{build_panel, observation_matrix, Feature, ObservationMatrix, RawQuoteRecord};
use crate::network::GateSelection;
use crate::tensorcore::{finite_diff_grad, max_relative_error};

fn eq3_observation() -> ObservationMatrix {
    ObservationMatrix {
        pair: (0, 1),
        rows: 2,
        cols: 6,
        data: vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0],
    }
}

fn eq4_bank() -> KernelBank {
    KernelBank::from_matrices(
        &[
            vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]],
        ],
        0.0,
    )
    .unwrap()
}

#[test]
fn worked_example_evidence() {
    let ev = compute_evidence(&[eq3_observation()], &eq4_bank()).unwrap();
    assert_eq!(ev.steps, 4);
    assert_eq!(ev.values, vec![0.0, 1.0, 1.0, 0.0, 5.0, 4.0, 4.0, 5.0]);
}

#[test]
fn zero_kernel_gives_zero_evidence() {
    let bank = KernelBank::new(NdArray::zeros(&[3, 2, 2]), 0.0).unwrap();
    let ev = compute_evidence(&[eq3_observation()], &bank).unwrap();
    assert!(ev.values.iter().all(|&v| v == 0.0));
}

fn random_obs(rng: &mut ChaCha8Rng, pair: (usize, usize), rows: usize, cols: usize) -> ObservationMatrix {
    ObservationMatrix {
        pair,
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn evidence_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obs = random_obs(&mut rng, (0, 1), 2, 8);
    let kernels = NdArray::new(vec![2, 3, 2], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let bank = KernelBank::new(kernels, 0.25).unwrap();
    let ev = compute_evidence(&[obs.clone()], &bank).unwrap();
    for k in 0..2 {
        for tau in 0..6 {
            let mut want = 0.25;
            for l in 0..3 {
                for r in 0..2 {
                    want += bank.kernels.data()[(k * 3 + l) * 2 + r] * obs.get(r, tau + l);
                }
            }
            assert!((ev.get(0, k, tau) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn evidence_rejects_bad_shapes() {
    let bank = eq4_bank();
    let short = ObservationMatrix {
        pair: (0, 1),
        rows: 2,
        cols: 2,
        data: vec![0.0; 4],
    };
    assert!(compute_evidence(&[short], &bank).is_err());
    let tall = ObservationMatrix {
        pair: (0, 1),
        rows: 4,
        cols: 6,
        data: vec![0.0; 24],
    };
    assert!(compute_evidence(&[tall], &bank).is_err());
}

fn single_unit(values: [f64; 16]) -> LstmLayer {
    let mut layer = LstmLayer::zeros(1, 1);
    for s in 0..4 {
        layer.w_input[s] = NdArray::new(vec![1, 1], vec![values[s]]).unwrap();
        layer.w_hidden[s] = NdArray::new(vec![1, 1], vec![values[4 + s]]).unwrap();
        layer.b_input[s] = NdArray::vector(vec![values[8 + s]]);
        layer.b_hidden[s] = NdArray::vector(vec![values[12 + s]]);
    }
    layer
}

/// Scalar cell update written out gate by gate; `v` holds the weights in
/// (w_i, w_h, b_i, b_h) blocks, each ordered i, g, o, f.
fn scalar_oracle(v: &[f64; 16], x: f64, h: f64, c: f64) -> (f64, f64) {
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let pre = |s: usize| v[s] * x + v[8 + s] + v[4 + s] * h + v[12 + s];
    let i = sig(pre(0));
    let g = pre(1).tanh();
    let o = sig(pre(2));
    let f = sig(pre(3));
    let c_new = f * c + i * g;
    (o * c_new.tanh(), c_new)
}

#[test]
fn lstm_step_examples() {
    let layer = LstmLayer::zeros(3, 2);
    let (h, c) = lstm_step(&[1.0, -2.0, 0.5], &[0.0, 0.0], &[0.0, 0.0], &layer).unwrap();
    assert_eq!((h, c), (vec![0.0, 0.0], vec![0.0, 0.0]));

    let layer = LstmLayer::zeros(1, 1);
    let (h, c) = lstm_step(&[0.3], &[0.0], &[2.0], &layer).unwrap();
    assert_eq!(c, vec![1.0]);
    assert!((h[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
    assert!((h[0] - 0.380797).abs() < 1e-6);

    assert!(lstm_step(&[0.0, 0.0], &[0.0], &[0.0], &layer).is_err());
}

#[test]
fn lstm_step_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let v: [f64; 16] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let (x, h, c) = (
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-2.0..2.0),
        );
        let (gh, gc) = lstm_step(&[x], &[h], &[c], &single_unit(v)).unwrap();
        let (wh, wc) = scalar_oracle(&v, x, h, c);
        assert!((gh[0] - wh).abs() < 1e-12 && (gc[0] - wc).abs() < 1e-12);
    }
}

fn evidence_of(values: Vec<f64>, pairs: Vec<(usize, usize)>, patterns: usize) -> EvidenceTensor {
    let steps = values.len() / (pairs.len() * patterns);
    EvidenceTensor {
        pairs,
        patterns,
        steps,
        values,
    }
}

#[test]
fn constant_head() {
    let ev = evidence_of(vec![0.3, -1.0, 2.0, 0.1, 0.0, 4.0], vec![(0, 1), (0, 2)], 1);
    let lstm = LstmParams {
        layers: vec![LstmLayer::zeros(2, 3)],
    };
    let head = Head {
        projection: NdArray::zeros(&[1, 3]),
        alpha: vec![1.5],
        beta: 0.7,
    };
    assert_eq!(forward(&ev, &lstm, &head).unwrap(), vec![0.7; 3]);

    let wrong = LstmParams {
        layers: vec![LstmLayer::zeros(5, 3)],
    };
    assert!(forward(&ev, &wrong, &head).is_err());
}

#[test]
fn forward_matches_hand_unroll() {
    let v: [f64; 16] = [
        0.5, -0.3, 0.8, 0.2, 0.1, 0.4, -0.6, 0.7, 0.05, -0.1, 0.2, 0.3, 0.0, 0.1, -0.2, 0.15,
    ];
    let xs = [0.4, -1.2, 0.9];
    let ev = evidence_of(xs.to_vec(), vec![(0, 1)], 1);
    let lstm = LstmParams {
        layers: vec![single_unit(v)],
    };
    let head = Head {
        projection: NdArray::new(vec![1, 1], vec![1.3]).unwrap(),
        alpha: vec![-0.8],
        beta: 0.2,
    };
    let got = forward(&ev, &lstm, &head).unwrap();
    let (mut h, mut c) = (0.0, 0.0);
    for (t, &x) in xs.iter().enumerate() {
        (h, c) = scalar_oracle(&v, x, h, c);
        assert!((got[t] - (-0.8 * 1.3 * h + 0.2)).abs() < 1e-14);
    }
}

#[test]
fn pair_permutation_leaves_scores_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (pairs, k, steps, hidden) = (3, 2, 5, 3);
    let values: Vec<f64> = (0..pairs * k * steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pair_ids = vec![(0, 1), (0, 2), (1, 2)];
    let ev = evidence_of(values.clone(), pair_ids.clone(), k);
    let mut layer = LstmLayer::zeros(pairs * k, hidden);
    for w in layer.w_input.iter_mut().chain(layer.w_hidden.iter_mut()) {
        w.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    let head = Head {
        projection: NdArray::new(
            vec![k, hidden],
            (0..k * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap(),
        alpha: vec![0.7, -0.4],
        beta: 0.1,
    };
    let base = forward(
        &ev,
        &LstmParams {
            layers: vec![layer.clone()],
        },
        &head,
    )
    .unwrap();

    let perm = [2, 0, 1];
    let mut pv = Vec::new();
    for &p in &perm {
        pv.extend_from_slice(&values[p * k * steps..(p + 1) * k * steps]);
    }
    let ev2 = evidence_of(pv, perm.iter().map(|&p| pair_ids[p]).collect(), k);
    let mut layer2 = layer.clone();
    for s in 0..4 {
        let src = layer.w_input[s].data();
        let dst = layer2.w_input[s].data_mut();
        for u in 0..hidden {
            for (np, &p) in perm.iter().enumerate() {
                for kk in 0..k {
                    dst[u * pairs * k + np * k + kk] = src[u * pairs * k + p * k + kk];
                }
            }
        }
    }
    let permuted = forward(&ev2, &LstmParams { layers: vec![layer2] }, &head).unwrap();
    for (a, b) in base.iter().zip(&permuted) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn score_examples() {
    assert_eq!(score(0.0).unwrap(), (0.5, 0.5));
    let (r, f) = score(3f64.ln()).unwrap();
    assert!((r - 0.75).abs() < 1e-15 && (f - 0.25).abs() < 1e-15);
    let (r, f) = score(50.0).unwrap();
    assert!(1.0 - r < 1e-20 && f > 0.0 && f < 1e-20);
    assert!(score(f64::NAN).is_err());
    for y in [-700.0, -3.2, 0.1, 12.0, 800.0] {
        let (r, f) = score(y).unwrap();
        assert!((r + f - 1.0).abs() < 1e-12);
    }
}

#[test]
fn loss_examples() {
    let labels = [1, 0, 1, 1];
    let l = loss(&[0.0; 4], &labels, 3.0, 0.0).unwrap();
    assert!((l - 2f64.ln()).abs() < 1e-15);

    let saturated = loss(&[60.0, -60.0, 60.0, 60.0], &labels, 0.0, 0.0).unwrap();
    let floor = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
    assert!((saturated - floor).abs() < 1e-12);
    assert!((floor - 0.313262).abs() < 1e-6);

    let reg = loss(&[0.0; 4], &labels, 2.5, 0.1).unwrap() - 2f64.ln();
    assert!((reg - 0.25).abs() < 1e-15);

    assert!(loss(&[0.0; 3], &labels, 0.0, 0.0).is_err());
    assert!(loss(&[], &[], 0.0, 0.0).is_err());
}

#[test]
fn accuracy_counts_sign_agreement() {
    assert_eq!(accuracy(&[1.0, -1.0, 0.5, -0.2], &[1, 0, 0, 0]), 0.75);
}

fn small_market(stocks: usize, days: usize, seed: u64) -> (AlignedPanel, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    let symbols: Vec<String> = (0..stocks).map(|i| format!("T{i}")).collect();
    let mut records = Vec::new();
    let mut prices = vec![50.0; stocks];
    for d in 0..days {
        let date = start + chrono::Duration::days(d as i64);
        for (s, p) in prices.iter_mut().enumerate() {
            *p *= 1.0 + rng.gen_range(-0.03..0.03);
            records.push(RawQuoteRecord {
                date,
                symbol: symbols[s].clone(),
                open: *p,
                close: *p,
                low: *p * 0.99,
                high: *p * 1.01,
                volume: rng.gen_range(1e5..2e5),
            });
        }
    }
    let panel = build_panel(&records, &symbols, start, start + chrono::Duration::days(days as i64))
        .unwrap()
        .panel;
    let index: Vec<f64> = (0..days).map(|_| rng.gen_range(90.0..110.0)).collect();
    (panel, index)
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        kernels: 2,
        window: 3,
        hidden: 4,
        layers: 1,
        lambda: 1e-3,
        lr: 1e-2,
        epochs: 3,
        seed: 5,
        features: vec![Feature::Close, Feature::Volume],
        gates: GateSelection::igo(),
    }
}

#[test]
fn prepare_aligns_labels() {
    let (panel, index) = small_market(3, 12, 1);
    let cfg = tiny_config();
    let data = TrainingData::prepare(&panel, &index, &cfg).unwrap();
    assert_eq!(data.signal.shape(), &[3, 4, 11]);
    assert_eq!(data.steps(), 12 - 3);
    let targets = rise_fall_targets(&index, "i").unwrap();
    for (tau, &l) in data.labels.iter().enumerate() {
        assert_eq!(l, targets.values[tau + cfg.window - 1]);
        assert_eq!(l == 1, index[tau + cfg.window] > index[tau + cfg.window - 1]);
    }
    assert!(TrainingData::prepare(&panel, &index[..11], &cfg).is_err());
    let (short, idx) = small_market(3, 4, 1);
    assert!(TrainingData::prepare(&short, &idx, &cfg).is_err());
}

#[test]
fn tape_gradient_matches_finite_differences() {
    let (panel, index) = small_market(3, 12, 2);
    let cfg = tiny_config();
    let data = TrainingData::prepare(&panel, &index, &cfg).unwrap();
    let mut model = DeepCnlModel::init(cfg, panel.symbols().to_vec()).unwrap();
    model.params_mut().zero_grad();
    let (l, _) = model.accumulate_gradient(&data).unwrap();
    assert!((l - model.objective(&data).unwrap()).abs() < 1e-12);
    let analytic: Vec<NdArray> = model.params().iter().map(|p| p.grad.clone()).collect();
    let mut params = model.params().clone();
    let numeric = finite_diff_grad(|ps| model.objective_with(ps, &data), &mut params, 1e-5).unwrap();
    let err = max_relative_error(&analytic, &numeric, 1e-6);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn two_layer_gradient_matches_finite_differences() {
    let (panel, index) = small_market(3, 10, 3);
    let cfg = ModelConfig {
        layers: 2,
        hidden: 3,
        ..tiny_config()
    };
    let data = TrainingData::prepare(&panel, &index, &cfg).unwrap();
    let mut model = DeepCnlModel::init(cfg, panel.symbols().to_vec()).unwrap();
    model.params_mut().zero_grad();
    model.accumulate_gradient(&data).unwrap();
    let analytic: Vec<NdArray> = model.params().iter().map(|p| p.grad.clone()).collect();
    let mut params = model.params().clone();
    let numeric = finite_diff_grad(|ps| model.objective_with(ps, &data), &mut params, 1e-5).unwrap();
    assert!(max_relative_error(&analytic, &numeric, 1e-6) < 1e-4);
}

#[test]
fn zero_epochs_returns_initialization() {
    let (panel, index) = small_market(3, 15, 4);
    let cfg = ModelConfig {
        epochs: 0,
        ..tiny_config()
    };
    let out = train(&panel, &index, &cfg).unwrap();
    assert!(out.history.is_empty());
    let fresh = DeepCnlModel::init(cfg, panel.symbols().to_vec()).unwrap();
    assert_eq!(out.model.params(), fresh.params());
    assert_eq!(out.model.trained_epochs(), 0);
}

#[test]
fn training_is_deterministic() {
    let (panel, index) = small_market(3, 20, 5);
    let cfg = ModelConfig {
        epochs: 5,
        ..tiny_config()
    };
    let a = train(&panel, &index, &cfg).unwrap();
    let b = train(&panel, &index, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.history.len(), 5);
}

#[test]
fn degenerate_labels_warn() {
    let (panel, _) = small_market(3, 15, 6);
    let index: Vec<f64> = (0..15).map(|d| 100.0 + d as f64).collect();
    let out = train(&panel, &index, &tiny_config()).unwrap();
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.majority_rate, 1.0);
}

#[test]
fn scores_length_contract() {
    let (panel, index) = small_market(4, 14, 7);
    let out = train(&panel, &index, &tiny_config()).unwrap();
    assert_eq!(out.model.scores(&panel).unwrap().len(), 14 - 3 + 1);
}

#[test]
fn checkpoint_round_trip() {
    let (panel, index) = small_market(3, 15, 8);
    let out = train(&panel, &index, &tiny_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.model.save(&path).unwrap();
    let back = DeepCnlModel::load(&path).unwrap();
    assert_eq!(back, out.model);
    assert_eq!(back.scores(&panel).unwrap(), out.model.scores(&panel).unwrap());

    let mut ck = out.model.to_checkpoint();
    ck.head.alpha.push(1.0);
    assert!(DeepCnlModel::from_checkpoint(ck).is_err());
}

#[test]
fn observation_layout_feeds_evidence() {
    let (panel, _) = small_market(3, 8, 9);
    let norm = minmax_normalize(&panel);
    let obs = observation_matrix(&norm, "T0", "T2", &[Feature::Close]).unwrap();
    assert_eq!(obs.rows, 2);
    assert_eq!(obs.row(0), norm.series("T0", Feature::Close).unwrap());
    assert_eq!(obs.row(1), norm.series("T2", Feature::Close).unwrap());
}
