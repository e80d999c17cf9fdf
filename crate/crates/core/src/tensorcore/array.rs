use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`. An empty shape is a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NdArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "NdArray::new",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("NdArray::new"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar_like(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element array.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::shape(
                "NdArray::item",
                format!("shape {:?} is not scalar", self.shape),
            ))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

/// `out[p*K + k][tau] = sum_{l,r} kernel[k][l][r] * signal[p][r][tau + l]`.
///
/// `signal` is `[P, R, N]`, `kernel` is `[K, L, R]`, output `[P*K, N-L+1]`.
/// Valid window, stride 1, no padding.
pub fn sliding_dot(signal: &[f64], p: usize, r: usize, n: usize, kernel: &[f64], k: usize, l: usize) -> Vec<f64> {
    let steps = n + 1 - l;
    let mut out = vec![0.0; p * k * steps];
    for pi in 0..p {
        let sig = &signal[pi * r * n..(pi + 1) * r * n];
        for ki in 0..k {
            let ker = &kernel[ki * l * r..(ki + 1) * l * r];
            let dst = &mut out[(pi * k + ki) * steps..(pi * k + ki + 1) * steps];
            for li in 0..l {
                for ri in 0..r {
                    let w = ker[li * r + ri];
                    if w == 0.0 {
                        continue;
                    }
                    let src = &sig[ri * n + li..ri * n + li + steps];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
    }
    out
}

/// `[m, k] x [k, n] -> [m, n]`, accumulated into `out`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rejects_bad_shape_and_nan() {
        assert!(NdArray::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(matches!(
            NdArray::new(vec![1], vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(NdArray::new(vec![], vec![4.0]).unwrap().item().unwrap(), 4.0);
    }

    #[test]
    fn uniform_init_respects_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = NdArray::uniform_init(&[8, 25], 25, &mut rng);
        assert!(a.data().iter().all(|v| v.abs() <= 0.2));
        assert!(a.data().iter().any(|v| v.abs() > 0.1));
    }

    #[test]
    fn sliding_dot_single_row() {
        // kernel (1, -1) yields negated first differences
        let out = sliding_dot(&[1.0, 4.0, 9.0, 16.0], 1, 1, 4, &[1.0, -1.0], 1, 2);
        assert_eq!(out, vec![-3.0, -5.0, -7.0]);
    }
}
