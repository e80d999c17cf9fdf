//! Convolution + LSTM network trained on index rise-fall labels.
//!
//! A shared kernel bank turns every pair's observation matrix into an
//! evidence sequence; at each evidence step the flattened evidence of all
//! pairs feeds a stacked LSTM whose top state is projected to R^K and then
//! to a scalar rise-fall score. Score `tau` is trained against the index
//! move from day `tau + L - 1` to `tau + L`, so each prediction only sees
//! days strictly before the move it predicts.

mod config;
mod evidence;
mod lstm;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::ModelConfig;
pub use evidence::{compute_evidence, EvidenceTensor, KernelBank};
pub use lstm::{accuracy, forward, loss, lstm_step, score, Gate, Head, LstmLayer, LstmParams};

use crate::data::{all_observations, canonical_pairs, minmax_normalize, rise_fall_targets, AlignedPanel};
use crate::error::{Error, Result};
use crate::tensorcore::{AdamState, NdArray, ParamId, ParamSet, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
struct LayerIds {
    w_input: [ParamId; 4],
    w_hidden: [ParamId; 4],
    b_input: [ParamId; 4],
    b_hidden: [ParamId; 4],
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    kernels: ParamId,
    conv_bias: ParamId,
    layers: Vec<LayerIds>,
    projection: ParamId,
    alpha: ParamId,
    beta: ParamId,
}

impl Layout {
    fn locate(params: &ParamSet, layers: usize) -> Result<Self> {
        let find = |name: String| {
            params
                .find(&name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks parameter `{name}`")))
        };
        let gate_ids = |layer: usize, kind: &str| -> Result<[ParamId; 4]> {
            let ids = Gate::ALL
                .iter()
                .map(|g| find(format!("lstm.{layer}.{kind}_{}", g.letter())))
                .collect::<Result<Vec<_>>>()?;
            Ok([ids[0], ids[1], ids[2], ids[3]])
        };
        Ok(Self {
            kernels: find("conv.kernels".into())?,
            conv_bias: find("conv.bias".into())?,
            layers: (0..layers)
                .map(|l| {
                    Ok(LayerIds {
                        w_input: gate_ids(l, "w_i")?,
                        w_hidden: gate_ids(l, "w_h")?,
                        b_input: gate_ids(l, "b_i")?,
                        b_hidden: gate_ids(l, "b_h")?,
                    })
                })
                .collect::<Result<_>>()?,
            projection: find("head.projection".into())?,
            alpha: find("head.alpha".into())?,
            beta: find("head.beta".into())?,
        })
    }
}

/// Inputs prepared for training: the stacked pair signal with the last day
/// removed (its score has no label) and the aligned labels.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub signal: NdArray,
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<u8>,
}

impl TrainingData {
    /// Normalizes `panel`, builds every pair's observation matrix and
    /// aligns evidence step `tau` with the index move into day `tau + L`.
    pub fn prepare(panel: &AlignedPanel, index_close: &[f64], config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = panel.len();
        if panel.symbols().len() < 2 {
            return Err(Error::invalid("need at least two stocks"));
        }
        if index_close.len() != n {
            return Err(Error::shape(
                "train",
                format!("index has {} closes for {n} panel days", index_close.len()),
            ));
        }
        if n <= config.window + 1 {
            return Err(Error::invalid(format!(
                "{n} days leaves no labelled evidence step for window {}",
                config.window
            )));
        }
        let normalized = minmax_normalize(panel);
        let observations = all_observations(&normalized, &config.features)?;
        let (full, pairs) = evidence::stack_signal(&observations)?;
        let (p, r) = (full.shape()[0], full.shape()[1]);
        let mut data = Vec::with_capacity(p * r * (n - 1));
        for row in full.data().chunks(n) {
            data.extend_from_slice(&row[..n - 1]);
        }
        let targets = rise_fall_targets(index_close, "index")?;
        let labels = targets.values[config.window - 1..].to_vec();
        debug_assert_eq!(labels.len(), n - config.window);
        Ok(Self {
            signal: NdArray::new(vec![p, r, n - 1], data)?,
            pairs,
            labels,
        })
    }

    pub fn steps(&self) -> usize {
        self.labels.len()
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn write_history_csv<W: Write>(writer: W, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "loss", "accuracy"])?;
    for s in history {
        w.write_record(&[
            s.epoch.to_string(),
            format!("{:.17e}", s.loss),
            format!("{:.17e}", s.accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<history writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepCnlModel,
    /// Loss and accuracy before each epoch's update.
    pub history: Vec<EpochStats>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Share of the more frequent label; the accuracy of a constant guess.
    pub majority_rate: f64,
    pub warnings: Vec<String>,
}

/// Serialized model: configuration, weights, optimizer state and pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub symbols: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    pub kernel_bank: KernelBank,
    pub lstm: LstmParams,
    pub head: Head,
    pub optimizer: Option<AdamState>,
    pub trained_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepCnlModel {
    config: ModelConfig,
    symbols: Vec<String>,
    pairs: Vec<(usize, usize)>,
    params: ParamSet,
    layout: Layout,
    optimizer: Option<AdamState>,
    trained_epochs: usize,
}

impl DeepCnlModel {
    /// Seeded initialization over the given stock universe.
    pub fn init(config: ModelConfig, symbols: Vec<String>) -> Result<Self> {
        config.validate()?;
        if symbols.len() < 2 {
            return Err(Error::invalid("need at least two stocks"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (k, l, h) = (config.kernels, config.window, config.hidden);
        let r = config.observation_rows();
        let pairs = canonical_pairs(symbols.len());
        let mut ps = ParamSet::new();

        ps.add("conv.kernels", NdArray::uniform_init(&[k, l, r], l * r, &mut rng));
        ps.add("conv.bias", NdArray::uniform_init(&[], l * r, &mut rng));
        let mut input_dim = pairs.len() * k;
        for layer in 0..config.layers {
            for g in Gate::ALL {
                ps.add(
                    format!("lstm.{layer}.w_i_{}", g.letter()),
                    NdArray::uniform_init(&[h, input_dim], input_dim, &mut rng),
                );
            }
            for g in Gate::ALL {
                ps.add(
                    format!("lstm.{layer}.w_h_{}", g.letter()),
                    NdArray::uniform_init(&[h, h], h, &mut rng),
                );
            }
            for g in Gate::ALL {
                ps.add(
                    format!("lstm.{layer}.b_i_{}", g.letter()),
                    NdArray::uniform_init(&[h], input_dim, &mut rng),
                );
            }
            for g in Gate::ALL {
                ps.add(
                    format!("lstm.{layer}.b_h_{}", g.letter()),
                    NdArray::uniform_init(&[h], h, &mut rng),
                );
            }
            input_dim = h;
        }
        ps.add("head.projection", NdArray::uniform_init(&[k, h], h, &mut rng));
        ps.add("head.alpha", NdArray::uniform_init(&[1, k], k, &mut rng));
        ps.add("head.beta", NdArray::uniform_init(&[], k, &mut rng));

        let layout = Layout::locate(&ps, config.layers)?;
        Ok(Self {
            config,
            symbols,
            pairs,
            params: ps,
            layout,
            optimizer: None,
            trained_epochs: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Pair order of the layer-0 input columns: pair `p` owns columns
    /// `p*K .. (p+1)*K`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    pub fn optimizer(&self) -> Option<&AdamState> {
        self.optimizer.as_ref()
    }

    pub fn kernel_bank(&self) -> KernelBank {
        kernel_bank_of(&self.params, &self.layout)
    }

    pub fn lstm(&self) -> LstmParams {
        lstm_of(&self.params, &self.layout, &self.config, self.pairs.len())
    }

    pub fn head(&self) -> Head {
        head_of(&self.params, &self.layout)
    }

    /// Scores for every evidence step of a (raw or normalized) panel.
    pub fn scores(&self, panel: &AlignedPanel) -> Result<Vec<f64>> {
        if panel.symbols() != self.symbols.as_slice() {
            return Err(Error::invalid("panel symbols differ from the model's universe"));
        }
        let obs = all_observations(&minmax_normalize(panel), &self.config.features)?;
        let ev = compute_evidence(&obs, &self.kernel_bank())?;
        forward(&ev, &self.lstm(), &self.head())
    }

    /// Loss of the given parameter values, evaluated without the tape
    /// (evidence, LSTM unroll and scoring on plain arrays).
    pub fn objective_with(&self, params: &ParamSet, data: &TrainingData) -> Result<f64> {
        let (scores, _) = plain_scores(params, &self.layout, &self.config, data)?;
        loss(&scores, &data.labels, params.frobenius_norm(), self.config.lambda)
    }

    pub fn objective(&self, data: &TrainingData) -> Result<f64> {
        self.objective_with(&self.params, data)
    }

    /// Accumulates the loss gradient into the parameters' grads via the
    /// tape and returns `(loss, accuracy)`.
    pub fn accumulate_gradient(&mut self, data: &TrainingData) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let (loss_var, scores) = self.build_loss(&mut tape, data)?;
        let loss_value = tape.value(loss_var).item()?;
        let acc = accuracy(tape.value(scores).data(), &data.labels);
        tape.backward(loss_var, &mut self.params)?;
        Ok((loss_value, acc))
    }

    fn build_scores(&self, tape: &mut Tape, signal: &NdArray) -> Result<Var> {
        let ps = &self.params;
        let lay = &self.layout;
        let sig = tape.constant(signal.clone())?;
        let kernels = tape.param(ps, lay.kernels)?;
        let conv_bias = tape.param(ps, lay.conv_bias)?;
        let raw = tape.sliding_dot(sig, kernels)?;
        let mut inputs = tape.add(raw, conv_bias)?;
        let steps = tape.value(inputs).shape()[1];

        for ids in &lay.layers {
            let mut pre = Vec::with_capacity(4);
            let mut w_h = Vec::with_capacity(4);
            let mut bias = Vec::with_capacity(4);
            for s in 0..4 {
                let w = tape.param(ps, ids.w_input[s])?;
                pre.push(tape.matmul(w, inputs)?);
                w_h.push(tape.param(ps, ids.w_hidden[s])?);
                let bi = tape.param(ps, ids.b_input[s])?;
                let bh = tape.param(ps, ids.b_hidden[s])?;
                bias.push(tape.add(bi, bh)?);
            }
            let hidden = self.config.hidden;
            let mut h = tape.constant(NdArray::zeros(&[hidden]))?;
            let mut c = tape.constant(NdArray::zeros(&[hidden]))?;
            let mut outs = Vec::with_capacity(steps);
            for t in 0..steps {
                let mut z = [h; 4];
                for s in 0..4 {
                    let xt = tape.column(pre[s], t)?;
                    let hh = tape.matmul(w_h[s], h)?;
                    let a = tape.add(xt, hh)?;
                    z[s] = tape.add(a, bias[s])?;
                }
                let i = tape.sigmoid(z[Gate::Input.slot()])?;
                let g = tape.tanh(z[Gate::Cell.slot()])?;
                let o = tape.sigmoid(z[Gate::Output.slot()])?;
                let f = tape.sigmoid(z[Gate::Forget.slot()])?;
                let keep = tape.mul(f, c)?;
                let write = tape.mul(i, g)?;
                c = tape.add(keep, write)?;
                let tc = tape.tanh(c)?;
                h = tape.mul(o, tc)?;
                outs.push(h);
            }
            inputs = tape.stack_columns(&outs)?;
        }

        let proj = tape.param(ps, lay.projection)?;
        let out = tape.matmul(proj, inputs)?;
        let alpha = tape.param(ps, lay.alpha)?;
        let y = tape.matmul(alpha, out)?;
        let beta = tape.param(ps, lay.beta)?;
        tape.add(y, beta)
    }

    fn build_loss(&self, tape: &mut Tape, data: &TrainingData) -> Result<(Var, Var)> {
        let scores = self.build_scores(tape, &data.signal)?;
        let steps = tape.value(scores).len();
        if steps != data.labels.len() {
            return Err(Error::shape(
                "loss",
                format!("{steps} scores vs {} labels", data.labels.len()),
            ));
        }
        let rise = tape.sigmoid(scores)?;
        let one = tape.scalar(1.0)?;
        let fall = tape.sub(one, rise)?;
        let e_rise = tape.exp(rise)?;
        let e_fall = tape.exp(fall)?;
        let denom = tape.add(e_rise, e_fall)?;
        let log_denom = tape.log(denom)?;
        let mask = NdArray::new(vec![1, steps], data.labels.iter().map(|&l| f64::from(l)).collect())?;
        let is_rise = tape.constant(mask.clone())?;
        let is_fall = tape.constant(NdArray::new(
            vec![1, steps],
            mask.data().iter().map(|m| 1.0 - m).collect(),
        )?)?;
        let picked_rise = tape.mul(rise, is_rise)?;
        let picked_fall = tape.mul(fall, is_fall)?;
        let picked = tape.add(picked_rise, picked_fall)?;
        let nll = tape.sub(log_denom, picked)?;
        let total = tape.sum(nll)?;
        let mut loss_var = tape.scale(total, 1.0 / steps as f64)?;

        if self.config.lambda > 0.0 {
            let mut sq = Vec::with_capacity(self.params.len());
            for id in self.params.ids() {
                let p = tape.param(&self.params, id)?;
                let pp = tape.mul(p, p)?;
                sq.push(tape.sum(pp)?);
            }
            let mut acc = sq[0];
            for &s in &sq[1..] {
                acc = tape.add(acc, s)?;
            }
            let norm = tape.sqrt(acc)?;
            let reg = tape.scale(norm, self.config.lambda)?;
            loss_var = tape.add(loss_var, reg)?;
        }
        Ok((loss_var, scores))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            symbols: self.symbols.clone(),
            pairs: self.pairs.clone(),
            kernel_bank: self.kernel_bank(),
            lstm: self.lstm(),
            head: self.head(),
            optimizer: self.optimizer.clone(),
            trained_epochs: self.trained_epochs,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut model = Self::init(ck.config.clone(), ck.symbols.clone())?;
        if ck.pairs != model.pairs {
            return Err(Error::invalid("checkpoint pair order is not canonical for its symbols"));
        }
        let lay = model.layout.clone();
        let mut set = |id: ParamId, value: &NdArray| -> Result<()> {
            let p = model.params.get_mut(id);
            if p.value.shape() != value.shape() {
                return Err(Error::shape(
                    "from_checkpoint",
                    format!(
                        "`{}` is {:?}, checkpoint has {:?}",
                        p.name,
                        p.value.shape(),
                        value.shape()
                    ),
                ));
            }
            if !value.all_finite() {
                return Err(Error::NonFinite("from_checkpoint"));
            }
            p.value = value.clone();
            Ok(())
        };
        set(lay.kernels, &ck.kernel_bank.kernels)?;
        set(lay.conv_bias, &NdArray::scalar(ck.kernel_bank.bias))?;
        if ck.lstm.layers.len() != lay.layers.len() {
            return Err(Error::invalid("checkpoint layer count differs from its config"));
        }
        for (ids, layer) in lay.layers.iter().zip(&ck.lstm.layers) {
            for s in 0..4 {
                set(ids.w_input[s], &layer.w_input[s])?;
                set(ids.w_hidden[s], &layer.w_hidden[s])?;
                set(ids.b_input[s], &layer.b_input[s])?;
                set(ids.b_hidden[s], &layer.b_hidden[s])?;
            }
        }
        set(lay.projection, &ck.head.projection)?;
        set(
            lay.alpha,
            &NdArray::new(vec![1, ck.head.alpha.len()], ck.head.alpha.clone())?,
        )?;
        set(lay.beta, &NdArray::scalar(ck.head.beta))?;
        model.optimizer = ck.optimizer;
        model.trained_epochs = ck.trained_epochs;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

fn kernel_bank_of(ps: &ParamSet, lay: &Layout) -> KernelBank {
    KernelBank {
        kernels: ps.get(lay.kernels).value.clone(),
        bias: ps.get(lay.conv_bias).value.data()[0],
    }
}

fn head_of(ps: &ParamSet, lay: &Layout) -> Head {
    Head {
        projection: ps.get(lay.projection).value.clone(),
        alpha: ps.get(lay.alpha).value.data().to_vec(),
        beta: ps.get(lay.beta).value.data()[0],
    }
}

fn lstm_of(ps: &ParamSet, lay: &Layout, config: &ModelConfig, pairs: usize) -> LstmParams {
    let mut input_dim = pairs * config.kernels;
    let layers = lay
        .layers
        .iter()
        .map(|ids| {
            let grab = |a: &[ParamId; 4]| std::array::from_fn(|s| ps.get(a[s]).value.clone());
            let layer = LstmLayer {
                input_dim,
                hidden: config.hidden,
                w_input: grab(&ids.w_input),
                w_hidden: grab(&ids.w_hidden),
                b_input: grab(&ids.b_input),
                b_hidden: grab(&ids.b_hidden),
            };
            input_dim = config.hidden;
            layer
        })
        .collect();
    LstmParams { layers }
}

fn plain_scores(
    ps: &ParamSet,
    lay: &Layout,
    config: &ModelConfig,
    data: &TrainingData,
) -> Result<(Vec<f64>, EvidenceTensor)> {
    let bank = kernel_bank_of(ps, lay);
    let (p, r, n) = (data.signal.shape()[0], data.signal.shape()[1], data.signal.shape()[2]);
    let observations: Vec<_> = data
        .pairs
        .iter()
        .zip(data.signal.data().chunks(r * n))
        .map(|(&pair, chunk)| crate::data::ObservationMatrix {
            pair,
            rows: r,
            cols: n,
            data: chunk.to_vec(),
        })
        .collect();
    debug_assert_eq!(observations.len(), p);
    let ev = compute_evidence(&observations, &bank)?;
    let scores = forward(&ev, &lstm_of(ps, lay, config, p), &head_of(ps, lay))?;
    Ok((scores, ev))
}

/// Full-batch Adam training for `config.epochs` epochs.
pub fn train(panel: &AlignedPanel, index_close: &[f64], config: &ModelConfig) -> Result<TrainOutcome> {
    let data = TrainingData::prepare(panel, index_close, config)?;
    let mut model = DeepCnlModel::init(config.clone(), panel.symbols().to_vec())?;
    let mut warnings = Vec::new();

    let rises = data.labels.iter().filter(|&&l| l == 1).count();
    let majority_rate = rises.max(data.labels.len() - rises) as f64 / data.labels.len() as f64;
    if rises == 0 || rises == data.labels.len() {
        warnings.push(format!(
            "all {} training labels are {}; accuracy equals the majority rate",
            data.labels.len(),
            if rises == 0 { "fall" } else { "rise" }
        ));
    }

    let mut adam = AdamState::new(&model.params, config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        model.params.zero_grad();
        let (l, acc) = model.accumulate_gradient(&data)?;
        history.push(EpochStats {
            epoch,
            loss: l,
            accuracy: acc,
        });
        adam.step(&mut model.params)?;
    }
    model.trained_epochs = config.epochs;
    if config.epochs > 0 {
        model.optimizer = Some(adam);
    }

    let (scores, _) = plain_scores(&model.params, &model.layout, config, &data)?;
    let final_loss = loss(&scores, &data.labels, model.params.frobenius_norm(), config.lambda)?;
    let final_accuracy = accuracy(&scores, &data.labels);
    Ok(TrainOutcome {
        model,
        history,
        final_loss,
        final_accuracy,
        majority_rate,
        warnings,
    })
}

#[cfg(test)]
mod tests;
