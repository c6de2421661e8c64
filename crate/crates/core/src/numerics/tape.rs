//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive pushes one node holding its forward value and, when the
//! tape records, the operand handles needed by its local gradient rule.
//! [`Tape::backward`] walks the nodes once in reverse creation order.

use std::collections::BTreeMap;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBroadcast(Var, Var),
    AddColBroadcast(Var, Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    Reshape(Var),
    Block(Var),
    MaskMul(Var, Tensor),
    RowNormalize(Var),
    Elementwise(Var, Tensor),
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    needs_grad: bool,
}

/// Recording of primitive applications for one forward pass.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every parameter it reached.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient for `id`, or `None` when the parameter was not reachable.
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    /// One tensor per parameter in store order; unreachable ones are zero.
    pub fn aligned(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, _, t)| {
                self.by_param
                    .get(&id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}

impl Tape {
    /// A tape that records operations for [`Tape::backward`].
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            record: true,
            consumed: false,
        }
    }

    /// A tape that only evaluates values; `backward` is rejected.
    pub fn no_grad() -> Self {
        Tape {
            nodes: Vec::new(),
            record: false,
            consumed: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = self.record && inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let op = if needs_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a constant (never differentiated).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Adds a parameter leaf whose gradient is reported by `backward`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.get(id).clone(),
            op: Op::Leaf,
            param: Some(id),
            needs_grad: self.record,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    /// `a + 1ᵀb` for a `1 × n` row `b`.
    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::shape("add_row_broadcast", av.shape(), bv.shape()));
        }
        let mut value = av.clone();
        let n = av.cols();
        for (i, x) in value.data_mut().iter_mut().enumerate() {
            *x += bv.data()[i % n];
        }
        Ok(self.push(value, Op::AddRowBroadcast(a, b), &[a, b]))
    }

    /// `a + b1ᵀ` for an `m × 1` column `b`.
    pub fn add_col_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.cols() != 1 || bv.rows() != av.rows() {
            return Err(Error::shape("add_col_broadcast", av.shape(), bv.shape()));
        }
        let mut value = av.clone();
        let n = av.cols();
        for (i, x) in value.data_mut().iter_mut().enumerate() {
            *x += bv.data()[i / n.max(1)];
        }
        Ok(self.push(value, Op::AddColBroadcast(a, b), &[a, b]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax_rows();
        self.push(value, Op::SoftmaxRows(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(value, Op::ConcatCols(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Leading `rows × cols` block of a matrix.
    pub fn block(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rows() == rows && av.cols() == cols {
            return Ok(a);
        }
        let value = av.block(rows, cols)?;
        Ok(self.push(value, Op::Block(a), &[a]))
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        let value = self.value(a).mul(&mask)?;
        Ok(self.push(value, Op::MaskMul(a, mask), &[a]))
    }

    /// Divides each row by its sum; rows summing to zero stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        let mut value = av.clone();
        for r in 0..m {
            let s: f64 = av.row(r).iter().sum();
            for c in 0..n {
                let x = if s != 0.0 { av.get(r, c) / s } else { 0.0 };
                value.set(r, c, x);
            }
        }
        self.push(value, Op::RowNormalize(a), &[a])
    }

    /// Applies `f` elementwise with user-supplied derivative `df`.
    pub fn map_elementwise(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Var {
        let av = self.value(a);
        let value = av.map(&f);
        let deriv = av.map(&df);
        self.push(value, Op::Elementwise(a, deriv), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::shape("mse", p.shape(), t.shape()));
        }
        let n = p.len().max(1) as f64;
        let loss = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target), &[pred, target]))
    }

    /// Propagates d`loss` back through the recorded primitives.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if !self.record {
            return Err(Error::State("backward on a tape without gradient recording".into()));
        }
        if self.consumed {
            return Err(Error::State(
                "backward already called on this tape; run a fresh forward pass".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", self.value(loss).shape(), &[1, 1]));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Some(id) = node.param {
                match out.by_param.get_mut(&id) {
                    Some(acc) => acc.accumulate(&g)?,
                    None => {
                        out.by_param.insert(id, g);
                    }
                }
                continue;
            }
            for (var, local) in self.local_grads(i, &g)? {
                if !self.nodes[var.0].needs_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.accumulate(&local)?,
                    slot @ None => *slot = Some(local),
                }
            }
        }
        Ok(out)
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        let v = |var: Var| &self.nodes[var.0].value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => vec![
                (*a, g.matmul(&v(*b).transpose())?),
                (*b, v(*a).transpose().matmul(g)?),
            ],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Op::Mul(a, b) => vec![(*a, g.mul(v(*b))?), (*b, g.mul(v(*a))?)],
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::AddRowBroadcast(a, b) => {
                let n = g.cols();
                let mut db = Tensor::zeros(&[1, n]);
                for r in 0..g.rows() {
                    for (acc, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                vec![(*a, g.clone()), (*b, db)]
            }
            Op::AddColBroadcast(a, b) => {
                let m = g.rows();
                let db = Tensor::new(vec![m, 1], (0..m).map(|r| g.row(r).iter().sum()).collect())?;
                vec![(*a, g.clone()), (*b, db)]
            }
            Op::Tanh(a) => vec![(*a, g.zip_map(y, "tanh'", |gi, yi| gi * (1.0 - yi * yi))?)],
            Op::Relu(a) => vec![(
                *a,
                g.zip_map(v(*a), "relu'", |gi, xi| if xi > 0.0 { gi } else { 0.0 })?,
            )],
            Op::SoftmaxRows(a) => {
                let (m, n) = (y.rows(), y.cols());
                let mut dx = Tensor::zeros(&[m, n]);
                for r in 0..m {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                vec![(*a, dx)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (v(*a).cols(), v(*b).cols());
                let m = g.rows();
                let mut da = Vec::with_capacity(m * ca);
                let mut db = Vec::with_capacity(m * cb);
                for r in 0..m {
                    da.extend_from_slice(&g.row(r)[..ca]);
                    db.extend_from_slice(&g.row(r)[ca..]);
                }
                vec![
                    (*a, Tensor::new(vec![m, ca], da)?),
                    (*b, Tensor::new(vec![m, cb], db)?),
                ]
            }
            Op::Reshape(a) => vec![(*a, g.reshape(v(*a).shape())?)],
            Op::Block(a) => {
                let mut dx = Tensor::zeros(v(*a).shape());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx.set(r, c, g.get(r, c));
                    }
                }
                vec![(*a, dx)]
            }
            Op::MaskMul(a, mask) => vec![(*a, g.mul(mask)?)],
            Op::RowNormalize(a) => {
                let x = v(*a);
                let (m, n) = (x.rows(), x.cols());
                let mut dx = Tensor::zeros(&[m, n]);
                for r in 0..m {
                    let s: f64 = x.row(r).iter().sum();
                    if s == 0.0 {
                        continue;
                    }
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        dx.set(r, c, (g.get(r, c) - dot) / s);
                    }
                }
                vec![(*a, dx)]
            }
            Op::Elementwise(a, deriv) => vec![(*a, g.mul(deriv)?)],
            Op::Sum(a) => vec![(*a, Tensor::filled(v(*a).shape(), g.data()[0]))],
            Op::Mse(p, t) => {
                let (pv, tv) = (v(*p), v(*t));
                let k = 2.0 * g.data()[0] / pv.len().max(1) as f64;
                let dp = pv.zip_map(tv, "mse'", |a, b| k * (a - b))?;
                let dt = dp.scale(-1.0);
                vec![(*p, dp), (*t, dt)]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_all_ones() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum(wv);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn scalar_mse_closed_form() {
        let (w0, x, y) = (0.7, 1.3, -0.4);
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(w0));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let xv = tape.constant(Tensor::scalar(x));
        let yv = tape.constant(Tensor::scalar(y));
        let pred = tape.matmul(wv, xv).unwrap();
        let loss = tape.mse(pred, yv).unwrap();
        let g = tape.backward(loss).unwrap();
        let expected = 2.0 * x * (w0 * x - y);
        assert!((g.get(w).unwrap().data()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn unreachable_parameter_has_zero_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let b = store.add("b", Tensor::filled(&[1, 3], 5.0));
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let _bv = tape.param(&store, b);
        let loss = tape.sum(av);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(b).is_none());
        let aligned = g.aligned(&store);
        assert_eq!(aligned[1], Tensor::zeros(&[1, 3]));
        assert_eq!(aligned[0].data(), &[1.0]);
    }

    #[test]
    fn second_backward_is_a_state_error() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let loss = tape.sum(av);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::State(_))));
        let mut frozen = Tape::no_grad();
        let av = frozen.param(&store, a);
        let loss = frozen.sum(av);
        assert!(matches!(frozen.backward(loss), Err(Error::State(_))));
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(2, 3, vec![0.1, -0.3, 0.5, 0.7, 0.2, -0.9]).unwrap());
        let x = Tensor::matrix(3, 2, vec![0.4, -0.2, 0.3, 0.8, -0.5, 0.6]).unwrap();
        let build = |tape: &mut Tape, which: u8| -> Var {
            let wv = tape.param(&store, w);
            let xv = tape.constant(x.clone());
            let p = tape.matmul(wv, xv).unwrap();
            let t = tape.tanh(p);
            let l1 = tape.sum(t);
            let target = tape.constant(Tensor::filled(&[2, 2], 0.25));
            let l2 = tape.mse(p, target).unwrap();
            match which {
                1 => l1,
                2 => l2,
                _ => tape.add(l1, l2).unwrap(),
            }
        };
        let grad = |which| {
            let mut tape = Tape::new();
            let l = build(&mut tape, which);
            tape.backward(l).unwrap().aligned(&store).remove(0)
        };
        let (g1, g2, g12) = (grad(1), grad(2), grad(3));
        for i in 0..g12.len() {
            assert!((g12.data()[i] - g1.data()[i] - g2.data()[i]).abs() < 1e-12);
        }
    }
}
