use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evidence::EvidenceTensor;
use crate::error::{Error, Result};
use crate::tensorcore::NdArray;

/// The four input-to-hidden transforms of an LSTM cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gate {
    /// `i`
    Input,
    /// `g`, the candidate cell value
    Cell,
    /// `o`
    Output,
    /// `f`
    Forget,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Cell, Gate::Output, Gate::Forget];

    pub fn letter(self) -> char {
        match self {
            Gate::Input => 'i',
            Gate::Cell => 'g',
            Gate::Output => 'o',
            Gate::Forget => 'f',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Gate::ALL.into_iter().find(|g| g.letter() == c)
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        match (chars.next().and_then(Gate::from_letter), chars.next()) {
            (Some(g), None) => Ok(g),
            _ => Err(Error::invalid(format!(
                "unknown gate `{s}` (expected one of i, g, o, f)"
            ))),
        }
    }
}

/// One LSTM layer. Per-gate arrays are indexed by [`Gate`] order (i, g, o, f).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    /// `W^{i*}`, each `[H, input_dim]`.
    pub w_input: [NdArray; 4],
    /// `W^{h*}`, each `[H, H]`.
    pub w_hidden: [NdArray; 4],
    /// `B^{i*}`, each `[H]`.
    pub b_input: [NdArray; 4],
    /// `B^{h*}`, each `[H]`.
    pub b_hidden: [NdArray; 4],
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let m = |r, c| NdArray::zeros(&[r, c]);
        let v = |n| NdArray::zeros(&[n]);
        Self {
            input_dim,
            hidden,
            w_input: std::array::from_fn(|_| m(hidden, input_dim)),
            w_hidden: std::array::from_fn(|_| m(hidden, hidden)),
            b_input: std::array::from_fn(|_| v(hidden)),
            b_hidden: std::array::from_fn(|_| v(hidden)),
        }
    }

    pub fn input_weights(&self, gate: Gate) -> &NdArray {
        &self.w_input[gate.slot()]
    }

    fn check(&self) -> Result<()> {
        let (h, d) = (self.hidden, self.input_dim);
        let ok = self.w_input.iter().all(|w| w.shape() == [h, d])
            && self.w_hidden.iter().all(|w| w.shape() == [h, h])
            && self.b_input.iter().chain(&self.b_hidden).all(|b| b.shape() == [h]);
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "LstmLayer",
                format!("inconsistent parameter shapes for H={h}, D={d}"),
            ))
        }
    }

    /// `W^{i gate} x + B^{i gate} + W^{h gate} h + B^{h gate}`.
    fn preactivation(&self, gate: Gate, x: &[f64], h: &[f64]) -> Vec<f64> {
        let s = gate.slot();
        let (wi, wh) = (self.w_input[s].data(), self.w_hidden[s].data());
        let (bi, bh) = (self.b_input[s].data(), self.b_hidden[s].data());
        (0..self.hidden)
            .map(|u| {
                let xi: f64 = wi[u * self.input_dim..(u + 1) * self.input_dim]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum();
                let hh: f64 = wh[u * self.hidden..(u + 1) * self.hidden]
                    .iter()
                    .zip(h)
                    .map(|(w, v)| w * v)
                    .sum();
                xi + bi[u] + hh + bh[u]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub layers: Vec<LstmLayer>,
}

impl LstmParams {
    pub fn hidden(&self) -> usize {
        self.layers.first().map_or(0, |l| l.hidden)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_dim)
    }
}

/// Maps the top hidden state to `Out(t)` in R^K, then to a scalar score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    /// `[K, H]`.
    pub projection: NdArray,
    /// Length K.
    pub alpha: Vec<f64>,
    pub beta: f64,
}

impl Head {
    fn apply(&self, h: &[f64]) -> Result<f64> {
        let &[k, hid] = self.projection.shape() else {
            return Err(Error::shape("head", "projection must be 2-d"));
        };
        if hid != h.len() || k != self.alpha.len() {
            return Err(Error::shape(
                "head",
                format!(
                    "projection {:?}, alpha {}, hidden {}",
                    self.projection.shape(),
                    self.alpha.len(),
                    h.len()
                ),
            ));
        }
        let p = self.projection.data();
        let out: f64 = (0..k)
            .map(|r| self.alpha[r] * p[r * hid..(r + 1) * hid].iter().zip(h).map(|(w, v)| w * v).sum::<f64>())
            .sum();
        Ok(out + self.beta)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One LSTM cell update; returns `(h, c)`.
pub fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], layer: &LstmLayer) -> Result<(Vec<f64>, Vec<f64>)> {
    layer.check()?;
    if x.len() != layer.input_dim || h_prev.len() != layer.hidden || c_prev.len() != layer.hidden {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "x {} (want {}), h {} / c {} (want {})",
                x.len(),
                layer.input_dim,
                h_prev.len(),
                c_prev.len(),
                layer.hidden
            ),
        ));
    }
    let i = layer.preactivation(Gate::Input, x, h_prev);
    let g = layer.preactivation(Gate::Cell, x, h_prev);
    let o = layer.preactivation(Gate::Output, x, h_prev);
    let f = layer.preactivation(Gate::Forget, x, h_prev);
    let mut h = Vec::with_capacity(layer.hidden);
    let mut c = Vec::with_capacity(layer.hidden);
    for u in 0..layer.hidden {
        let cu = sigmoid(f[u]) * c_prev[u] + sigmoid(i[u]) * g[u].tanh();
        c.push(cu);
        h.push(sigmoid(o[u]) * cu.tanh());
    }
    Ok((h, c))
}

/// Runs the stacked LSTM over every evidence step from zero state and
/// returns one score per step (`N - L + 1` values).
pub fn forward(evidence: &EvidenceTensor, lstm: &LstmParams, head: &Head) -> Result<Vec<f64>> {
    if evidence.steps == 0 || evidence.pairs.is_empty() {
        return Err(Error::invalid("empty evidence tensor"));
    }
    if lstm.layers.is_empty() {
        return Err(Error::invalid("LSTM has no layers"));
    }
    if lstm.input_dim() != evidence.input_dim() {
        return Err(Error::shape(
            "forward",
            format!(
                "evidence has P*K = {}, layer 0 expects {}",
                evidence.input_dim(),
                lstm.input_dim()
            ),
        ));
    }
    for w in lstm.layers.windows(2) {
        if w[1].input_dim != w[0].hidden {
            return Err(Error::shape(
                "forward",
                "layer input does not match previous hidden size",
            ));
        }
    }
    let mut state: Vec<(Vec<f64>, Vec<f64>)> = lstm
        .layers
        .iter()
        .map(|l| (vec![0.0; l.hidden], vec![0.0; l.hidden]))
        .collect();
    let mut scores = Vec::with_capacity(evidence.steps);
    for t in 0..evidence.steps {
        let mut x = evidence.step_input(t);
        for (layer, (h, c)) in lstm.layers.iter().zip(state.iter_mut()) {
            let (nh, nc) = lstm_step(&x, h, c, layer)?;
            *h = nh;
            *c = nc;
            x = h.clone();
        }
        scores.push(head.apply(&x)?);
    }
    Ok(scores)
}

/// `(rise, fall) = (e^y / (1 + e^y), 1 / (1 + e^y))`.
pub fn score(y: f64) -> Result<(f64, f64)> {
    if !y.is_finite() {
        return Err(Error::NonFinite("score"));
    }
    Ok((sigmoid(y), sigmoid(-y)))
}

/// Per-step cross-entropy of the softmax over the two rise/fall degrees.
fn step_nll(y: f64, label: u8) -> Result<f64> {
    let (rise, fall) = score(y)?;
    let picked = if label == 1 { rise } else { fall };
    Ok((rise.exp() + fall.exp()).ln() - picked)
}

/// Mean negative log-likelihood of `labels` under the scores plus
/// `lambda * ||theta||_F` with `theta_norm` the parameters' Frobenius norm.
pub fn loss(scores: &[f64], labels: &[u8], theta_norm: f64, lambda: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "loss",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::invalid("loss over zero steps"));
    }
    let total = scores
        .iter()
        .zip(labels)
        .map(|(&y, &l)| step_nll(y, l))
        .sum::<Result<f64>>()?;
    Ok(total / scores.len() as f64 + lambda * theta_norm)
}

/// Fraction of steps where `score > 0` agrees with a rise label.
pub fn accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&y, &l)| (y > 0.0) == (l == 1))
        .count();
    hits as f64 / scores.len() as f64
}
