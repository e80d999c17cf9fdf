//! Reverse-mode differentiation over a fixed set of array primitives.
//!
//! Every primitive evaluates eagerly and appends a node to the [`Tape`];
//! [`Tape::backward`] walks the nodes in reverse and accumulates
//! `d output / d node` into the gradients of the [`ParamSet`] leaves.
//!
//! Shapes must match exactly. The only broadcast is a one-element operand
//! of [`Tape::add`], [`Tape::sub`] or [`Tape::mul`].

use super::array::{matmul_acc, sliding_dot, NdArray};
use super::param::{ParamId, ParamSet};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    SlidingDot { signal: Var, kernel: Var },
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Sum(Var),
    Column(Var, usize),
    StackColumns(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: NdArray,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Either both operands have equal shapes or one has exactly one element.
#[derive(Clone, Copy)]
enum Pairing {
    Same,
    LeftScalar,
    RightScalar,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &NdArray {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: NdArray, op: Op, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: NdArray) -> Result<Var> {
        self.push(value, Op::Constant, false, "constant")
    }

    pub fn scalar(&mut self, value: f64) -> Result<Var> {
        self.constant(NdArray::scalar(value))
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Result<Var> {
        let value = params.get(id).value.clone();
        self.push(value, Op::Param(id), true, "param")
    }

    fn pairing(&self, op: &'static str, a: Var, b: Var) -> Result<Pairing> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() == y.shape() {
            Ok(Pairing::Same)
        } else if x.is_scalar_like() {
            Ok(Pairing::LeftScalar)
        } else if y.is_scalar_like() {
            Ok(Pairing::RightScalar)
        } else {
            Err(Error::shape(op, format!("{:?} vs {:?}", x.shape(), y.shape())))
        }
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let pairing = self.pairing(name, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let (shape, data) = match pairing {
            Pairing::Same => (
                x.shape().to_vec(),
                x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect(),
            ),
            Pairing::LeftScalar => {
                let s = x.data()[0];
                (y.shape().to_vec(), y.data().iter().map(|&q| f(s, q)).collect())
            }
            Pairing::RightScalar => {
                let s = y.data()[0];
                (x.shape().to_vec(), x.data().iter().map(|&p| f(p, s)).collect())
            }
        };
        let needs = self.needs(a) || self.needs(b);
        self.push(NdArray::from_parts_unchecked(shape, data), op, needs, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |p, q| p - q, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |p, q| p * q, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let x = self.value(a);
        let value = NdArray::from_parts_unchecked(x.shape().to_vec(), x.data().iter().map(|v| v * c).collect());
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs, "scale")
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let x = self.value(a);
        let value = NdArray::from_parts_unchecked(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect());
        let needs = self.needs(a);
        self.push(value, op, needs, name)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary("sqrt", a, f64::sqrt, Op::Sqrt(a))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push(NdArray::scalar(s), Op::Sum(a), needs, "sum")
    }

    /// `[m, k] x [k, n] -> [m, n]` or `[m, k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k) = match x.shape() {
            &[m, k] => (m, k),
            s => return Err(Error::shape("matmul", format!("left operand must be 2-d, got {s:?}"))),
        };
        let (k2, n, out_shape) = match y.shape() {
            &[k2] => (k2, 1, vec![m]),
            &[k2, n] => (k2, n, vec![m, n]),
            s => {
                return Err(Error::shape(
                    "matmul",
                    format!("right operand must be 1-d or 2-d, got {s:?}"),
                ))
            }
        };
        if k != k2 {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", x.shape(), y.shape())));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(x.data(), y.data(), &mut out, m, k, n);
        let needs = self.needs(a) || self.needs(b);
        self.push(
            NdArray::from_parts_unchecked(out_shape, out),
            Op::MatMul(a, b),
            needs,
            "matmul",
        )
    }

    /// Valid sliding-window dot product of a `[P, R, N]` signal stack with a
    /// `[K, L, R]` kernel bank, producing `[P*K, N-L+1]` (pair-major rows).
    pub fn sliding_dot(&mut self, signal: Var, kernel: Var) -> Result<Var> {
        let (s, w) = (self.value(signal), self.value(kernel));
        let (&[p, r, n], &[k, l, r2]) = (s.shape(), w.shape()) else {
            return Err(Error::shape(
                "sliding_dot",
                format!(
                    "signal {:?} must be [P,R,N], kernel {:?} must be [K,L,R]",
                    s.shape(),
                    w.shape()
                ),
            ));
        };
        if r != r2 {
            return Err(Error::shape(
                "sliding_dot",
                format!("signal has {r} rows, kernel expects {r2}"),
            ));
        }
        if l == 0 || n < l {
            return Err(Error::shape(
                "sliding_dot",
                format!("window {l} longer than series {n}"),
            ));
        }
        let out = sliding_dot(s.data(), p, r, n, w.data(), k, l);
        let needs = self.needs(signal) || self.needs(kernel);
        self.push(
            NdArray::from_parts_unchecked(vec![p * k, n + 1 - l], out),
            Op::SlidingDot { signal, kernel },
            needs,
            "sliding_dot",
        )
    }

    /// Column `c` of a `[m, n]` array, as `[m]`.
    pub fn column(&mut self, a: Var, c: usize) -> Result<Var> {
        let x = self.value(a);
        let &[m, n] = x.shape() else {
            return Err(Error::shape("column", format!("needs 2-d input, got {:?}", x.shape())));
        };
        if c >= n {
            return Err(Error::shape("column", format!("column {c} of {n}")));
        }
        let data = (0..m).map(|i| x.data()[i * n + c]).collect();
        let needs = self.needs(a);
        self.push(
            NdArray::from_parts_unchecked(vec![m], data),
            Op::Column(a, c),
            needs,
            "column",
        )
    }

    /// Stacks `T` vectors of length `m` as the columns of a `[m, T]` array.
    pub fn stack_columns(&mut self, cols: &[Var]) -> Result<Var> {
        let Some(&first) = cols.first() else {
            return Err(Error::shape("stack_columns", "no columns"));
        };
        let m = match self.value(first).shape() {
            &[m] => m,
            s => return Err(Error::shape("stack_columns", format!("columns must be 1-d, got {s:?}"))),
        };
        let t = cols.len();
        let mut data = vec![0.0; m * t];
        for (j, &c) in cols.iter().enumerate() {
            let v = self.value(c);
            if v.shape() != [m] {
                return Err(Error::shape(
                    "stack_columns",
                    format!("column {j} has shape {:?}", v.shape()),
                ));
            }
            for (i, &x) in v.data().iter().enumerate() {
                data[i * t + j] = x;
            }
        }
        let needs = cols.iter().any(|&c| self.needs(c));
        self.push(
            NdArray::from_parts_unchecked(vec![m, t], data),
            Op::StackColumns(cols.to_vec()),
            needs,
            "stack_columns",
        )
    }

    /// Accumulates `d output / d param` into every reachable parameter's grad.
    pub fn backward(&self, output: Var, params: &mut ParamSet) -> Result<()> {
        if !self.value(output).is_scalar_like() {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got {:?}", self.value(output).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let p = params.get_mut(*id);
                    for (acc, v) in p.grad.data_mut().iter_mut().zip(&g) {
                        *acc += v;
                    }
                }
                Op::Add(a, b) => {
                    let pairing = self.pairing("add", *a, *b)?;
                    self.accumulate_broadcast(&mut grads, *a, &g, pairing, true, 1.0);
                    self.accumulate_broadcast(&mut grads, *b, &g, pairing, false, 1.0);
                }
                Op::Sub(a, b) => {
                    let pairing = self.pairing("sub", *a, *b)?;
                    self.accumulate_broadcast(&mut grads, *a, &g, pairing, true, 1.0);
                    self.accumulate_broadcast(&mut grads, *b, &g, pairing, false, -1.0);
                }
                Op::Mul(a, b) => {
                    let pairing = self.pairing("mul", *a, *b)?;
                    let (x, y) = (self.value(*a).data(), self.value(*b).data());
                    let at = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
                    if self.needs(*a) {
                        let ga: Vec<f64> = g.iter().enumerate().map(|(i, gv)| gv * at(y, i)).collect();
                        self.accumulate_broadcast(&mut grads, *a, &ga, pairing, true, 1.0);
                    }
                    if self.needs(*b) {
                        let gb: Vec<f64> = g.iter().enumerate().map(|(i, gv)| gv * at(x, i)).collect();
                        self.accumulate_broadcast(&mut grads, *b, &gb, pairing, false, 1.0);
                    }
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * c).collect();
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::MatMul(a, b) => self.backward_matmul(&mut grads, *a, *b, &g),
                Op::SlidingDot { signal, kernel } => self.backward_sliding_dot(&mut grads, *signal, *kernel, &g),
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(gv, s)| gv * s * (1.0 - s))
                        .collect();
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(gv, t)| gv * (1.0 - t * t))
                        .collect();
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g.iter().zip(node.value.data()).map(|(gv, e)| gv * e).collect();
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Log(a) => {
                    let ga: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(gv, x)| gv / x).collect();
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Sqrt(a) => {
                    let ga: Vec<f64> = g.iter().zip(node.value.data()).map(|(gv, s)| gv * 0.5 / s).collect();
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.value(*a).len()];
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Column(a, c) => {
                    if self.needs(*a) {
                        let x = self.value(*a);
                        let n = x.shape()[1];
                        let slot = grads[a.0].get_or_insert_with(|| vec![0.0; x.len()]);
                        for (i, gv) in g.iter().enumerate() {
                            slot[i * n + c] += gv;
                        }
                    }
                }
                Op::StackColumns(cols) => {
                    let t = cols.len();
                    for (j, &c) in cols.iter().enumerate() {
                        if self.needs(c) {
                            let m = self.value(c).len();
                            let gc: Vec<f64> = (0..m).map(|i| g[i * t + j]).collect();
                            self.accumulate(&mut grads, c, &gc);
                        }
                    }
                }
            }
        }

        if params.iter().any(|p| !p.grad.all_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(slot) => slot.iter_mut().zip(g).for_each(|(s, x)| *s += x),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    fn accumulate_broadcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        g: &[f64],
        pairing: Pairing,
        is_left: bool,
        sign: f64,
    ) {
        if !self.needs(v) {
            return;
        }
        let reduced = matches!(
            (pairing, is_left),
            (Pairing::LeftScalar, true) | (Pairing::RightScalar, false)
        );
        if reduced {
            self.accumulate(grads, v, &[sign * g.iter().sum::<f64>()]);
        } else if sign == 1.0 {
            self.accumulate(grads, v, g);
        } else {
            let neg: Vec<f64> = g.iter().map(|x| sign * x).collect();
            self.accumulate(grads, v, &neg);
        }
    }

    fn backward_matmul(&self, grads: &mut [Option<Vec<f64>>], a: Var, b: Var, g: &[f64]) {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k) = (x.shape()[0], x.shape()[1]);
        let n = if y.shape().len() == 1 { 1 } else { y.shape()[1] };
        if self.needs(a) {
            // dA = dC * B^T
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for kk in 0..k {
                    let brow = &y.data()[kk * n..(kk + 1) * n];
                    ga[i * k + kk] = grow.iter().zip(brow).map(|(p, q)| p * q).sum();
                }
            }
            self.accumulate(grads, a, &ga);
        }
        if self.needs(b) {
            // dB = A^T * dC
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for kk in 0..k {
                    let av = x.data()[i * k + kk];
                    if av == 0.0 {
                        continue;
                    }
                    for (o, gv) in gb[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                        *o += av * gv;
                    }
                }
            }
            self.accumulate(grads, b, &gb);
        }
    }

    fn backward_sliding_dot(&self, grads: &mut [Option<Vec<f64>>], signal: Var, kernel: Var, g: &[f64]) {
        let (s, w) = (self.value(signal), self.value(kernel));
        let (p, r, n) = (s.shape()[0], s.shape()[1], s.shape()[2]);
        let (k, l) = (w.shape()[0], w.shape()[1]);
        let steps = n + 1 - l;
        if self.needs(kernel) {
            let mut gw = vec![0.0; k * l * r];
            for pi in 0..p {
                for ki in 0..k {
                    let go = &g[(pi * k + ki) * steps..(pi * k + ki + 1) * steps];
                    for li in 0..l {
                        for ri in 0..r {
                            let base = pi * r * n + ri * n + li;
                            let src = &s.data()[base..base + steps];
                            gw[(ki * l + li) * r + ri] += go.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
            self.accumulate(grads, kernel, &gw);
        }
        if self.needs(signal) {
            let mut gs = vec![0.0; p * r * n];
            for pi in 0..p {
                for ki in 0..k {
                    let go = &g[(pi * k + ki) * steps..(pi * k + ki + 1) * steps];
                    for li in 0..l {
                        for ri in 0..r {
                            let wv = w.data()[(ki * l + li) * r + ri];
                            let base = pi * r * n + ri * n + li;
                            for (d, gv) in gs[base..base + steps].iter_mut().zip(go) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
            self.accumulate(grads, signal, &gs);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: NdArray) -> (ParamSet, ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.add("w", v);
        (ps, id)
    }

    #[test]
    fn square_gradient() {
        let (mut ps, id) = one_param(NdArray::scalar(3.0));
        let mut t = Tape::new();
        let w = t.param(&ps, id).unwrap();
        let y = t.mul(w, w).unwrap();
        t.backward(y, &mut ps).unwrap();
        assert_eq!(ps.get(id).grad.item().unwrap(), 6.0);
    }

    #[test]
    fn sigmoid_at_zero() {
        let (mut ps, id) = one_param(NdArray::scalar(0.0));
        let mut t = Tape::new();
        let w = t.param(&ps, id).unwrap();
        let y = t.sigmoid(w).unwrap();
        assert_eq!(t.value(y).item().unwrap(), 0.5);
        t.backward(y, &mut ps).unwrap();
        assert_eq!(ps.get(id).grad.item().unwrap(), 0.25);
    }

    #[test]
    fn reused_parameter_accumulates() {
        // y = w*3 + w*w  => dy/dw = 3 + 2w
        let (mut ps, id) = one_param(NdArray::scalar(2.0));
        let mut t = Tape::new();
        let w = t.param(&ps, id).unwrap();
        let three = t.scalar(3.0).unwrap();
        let a = t.mul(w, three).unwrap();
        let b = t.mul(w, w).unwrap();
        let y = t.add(a, b).unwrap();
        t.backward(y, &mut ps).unwrap();
        assert_eq!(ps.get(id).grad.item().unwrap(), 7.0);
    }

    #[test]
    fn rejects_non_scalar_output_and_mismatch() {
        let (mut ps, id) = one_param(NdArray::vector(vec![1.0, 2.0]));
        let mut t = Tape::new();
        let w = t.param(&ps, id).unwrap();
        assert!(t.backward(w, &mut ps).is_err());
        let c = t.constant(NdArray::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(t.add(w, c), Err(Error::Shape { .. })));
        let m = t.constant(NdArray::zeros(&[2, 3])).unwrap();
        assert!(t.matmul(m, w).is_err());
    }

    #[test]
    fn log_of_zero_is_rejected() {
        let mut t = Tape::new();
        let z = t.scalar(0.0).unwrap();
        assert!(matches!(t.log(z), Err(Error::NonFinite("log"))));
    }

    #[test]
    fn stable_sigmoid_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
