use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::tensorcore::{sliding_dot, NdArray};

/// K shared `L x 2M` filters plus one scalar bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    /// Shape `[K, L, 2M]`; `kernels[k][l][r]` weighs row `r` at window offset `l`.
    pub kernels: NdArray,
    pub bias: f64,
}

impl KernelBank {
    pub fn new(kernels: NdArray, bias: f64) -> Result<Self> {
        match kernels.shape() {
            &[k, l, r] if k > 0 && l > 0 && r > 0 => Ok(Self { kernels, bias }),
            s => Err(Error::shape(
                "KernelBank::new",
                format!("expected [K, L, 2M], got {s:?}"),
            )),
        }
    }

    /// Builds a bank from per-kernel row-major `L x R` matrices.
    pub fn from_matrices(mats: &[Vec<Vec<f64>>], bias: f64) -> Result<Self> {
        let k = mats.len();
        let l = mats.first().map_or(0, Vec::len);
        let r = mats.first().and_then(|m| m.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(k * l * r);
        for m in mats {
            if m.len() != l || m.iter().any(|row| row.len() != r) {
                return Err(Error::shape("KernelBank::from_matrices", "kernels differ in shape"));
            }
            data.extend(m.iter().flatten());
        }
        Self::new(NdArray::new(vec![k, l, r], data)?, bias)
    }

    pub fn count(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn window(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.kernels.shape()[2]
    }
}

/// Convolution responses for every pair, pattern and evidence step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTensor {
    pub pairs: Vec<(usize, usize)>,
    pub patterns: usize,
    pub steps: usize,
    /// `[P*K, steps]`, pair-major then pattern.
    pub values: Vec<f64>,
}

impl EvidenceTensor {
    pub fn get(&self, pair: usize, pattern: usize, step: usize) -> f64 {
        self.values[(pair * self.patterns + pattern) * self.steps + step]
    }

    /// Flattened `X(step)`: pair-major, pattern-minor.
    pub fn step_input(&self, step: usize) -> Vec<f64> {
        (0..self.pairs.len() * self.patterns)
            .map(|row| self.values[row * self.steps + step])
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.pairs.len() * self.patterns
    }
}

/// Stacks observation matrices into one `[P, 2M, N]` signal.
pub(crate) fn stack_signal(observations: &[ObservationMatrix]) -> Result<(NdArray, Vec<(usize, usize)>)> {
    let Some(first) = observations.first() else {
        return Err(Error::invalid("no observation matrices"));
    };
    let (rows, cols) = (first.rows, first.cols);
    let mut data = Vec::with_capacity(observations.len() * rows * cols);
    for obs in observations {
        if obs.rows != rows || obs.cols != cols {
            return Err(Error::shape(
                "compute_evidence",
                format!(
                    "observation {:?} is {}x{}, expected {rows}x{cols}",
                    obs.pair, obs.rows, obs.cols
                ),
            ));
        }
        data.extend_from_slice(&obs.data);
    }
    let pairs = observations.iter().map(|o| o.pair).collect();
    Ok((NdArray::new(vec![observations.len(), rows, cols], data)?, pairs))
}

/// `x[k][tau] = sum(C^k .* A[:, tau..tau+L]) + B_c` for every pair, pattern
/// and `tau` in `0..=N-L`.
pub fn compute_evidence(observations: &[ObservationMatrix], bank: &KernelBank) -> Result<EvidenceTensor> {
    let (signal, pairs) = stack_signal(observations)?;
    let (p, r, n) = (signal.shape()[0], signal.shape()[1], signal.shape()[2]);
    if r != bank.rows() {
        return Err(Error::shape(
            "compute_evidence",
            format!("observations have {r} rows, kernels expect {}", bank.rows()),
        ));
    }
    let l = bank.window();
    if n < l {
        return Err(Error::invalid(format!("series of length {n} shorter than window {l}")));
    }
    let mut values = sliding_dot(signal.data(), p, r, n, bank.kernels.data(), bank.count(), l);
    values.iter_mut().for_each(|v| *v += bank.bias);
    Ok(EvidenceTensor {
        pairs,
        patterns: bank.count(),
        steps: n + 1 - l,
        values,
    })
}
