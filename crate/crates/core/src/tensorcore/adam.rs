use serde::{Deserialize, Serialize};

use super::array::NdArray;
use super::param::ParamSet;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<NdArray>,
    v: Vec<NdArray>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Self::with_hyper(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| NdArray::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn first_moment(&self) -> &[NdArray] {
        &self.m
    }

    pub fn second_moment(&self) -> &[NdArray] {
        &self.v
    }

    /// Applies one update from the accumulated grads, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("state tracks {} params, got {}", self.m.len(), params.len()),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.shape() != self.m[i].shape() {
                return Err(Error::shape("adam_step", format!("param `{}` changed shape", p.name)));
            }
            if !p.grad.all_finite() {
                return Err(Error::NonFinite("adam_step"));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for (((x, &g), m), v) in values.iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grad();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(grad: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        let id = ps.add("w", NdArray::scalar(0.0));
        ps.get_mut(id).grad = NdArray::scalar(grad);
        ps
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = single(1.0);
        let mut adam = AdamState::new(&ps, 0.001);
        adam.step(&mut ps).unwrap();
        let w = ps.iter().next().unwrap();
        assert!((w.value.item().unwrap() + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(w.grad.item().unwrap(), 0.0);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_grad_leaves_param() {
        let mut ps = single(0.0);
        let mut adam = AdamState::new(&ps, 0.001);
        adam.step(&mut ps).unwrap();
        assert_eq!(ps.iter().next().unwrap().value.item().unwrap(), 0.0);
    }

    #[test]
    fn constant_grad_steps_do_not_grow() {
        let mut ps = single(1.0);
        let mut adam = AdamState::new(&ps, 0.001);
        adam.step(&mut ps).unwrap();
        let d1 = ps.iter().next().unwrap().value.item().unwrap();
        ps.iter_mut().next().unwrap().grad = NdArray::scalar(1.0);
        adam.step(&mut ps).unwrap();
        let d2 = ps.iter().next().unwrap().value.item().unwrap() - d1;
        assert!(d2.abs() <= d1.abs() + 1e-12);
        assert!(adam.second_moment()[0].data()[0] >= 0.0);
    }

    #[test]
    fn rejects_non_finite_grad() {
        let mut ps = single(0.0);
        ps.iter_mut().next().unwrap().grad.data_mut()[0] = f64::INFINITY;
        let mut adam = AdamState::new(&ps, 0.001);
        assert!(adam.step(&mut ps).is_err());
    }
}
