//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation as it executes. Nodes are appended in
//! evaluation order, so insertion order is a topological order and
//! [`Tape::backward`] simply walks the list in reverse. A fresh tape is built
//! for every training step.

use crate::error::{Error, Result};
use crate::ndnum::Matrix;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Detach(Var),
    Sum(Var),
    Mse(Var, Matrix<T>),
    Gather(Var, Vec<usize>),
    RowNorm(Var),
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Detach(a)
            | Op::Sum(a)
            | Op::Mse(a, _)
            | Op::Gather(a, _)
            | Op::RowNorm(a) => vec![*a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Matrix<T>,
    grad: Option<Matrix<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only computation graph.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

// Row norms are clamped away from zero so the derivative stays finite.
const NORM_FLOOR: f64 = 1e-12;

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf | Op::Detach(_) => false,
            other => other
                .parents()
                .iter()
                .any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable input; receives a gradient in [`Tape::backward`].
    pub fn param(&mut self, value: Matrix<T>) -> Result<Var> {
        let v = self.push(value, Op::Leaf, "param")?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Matrix<T>) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass; zeros for unreached nodes.
    pub fn grad(&self, v: Var) -> Matrix<T> {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            left: self.value(a).shape(),
            right: self.value(b).shape(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    /// `x + 1ᵀ·bias` for a `1 x cols` bias row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let v = self.value(x).add_row(self.value(bias))?;
        self.push(v, Op::AddBias(x, bias), "add_bias")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b)).map_err(|_| self.shape_err("add", a, b))?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b)).map_err(|_| self.shape_err("sub", a, b))?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self
            .value(a)
            .hadamard(self.value(b))
            .map_err(|_| self.shape_err("mul", a, b))?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s), "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(T::tanh);
        self.push(v, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    /// Same value, but no gradient flows back through this edge.
    pub fn detach(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).clone();
        self.push(v, Op::Detach(a), "detach")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), "sum")
    }

    /// Mean squared difference against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Matrix<T>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.is_empty() {
            return Err(Error::Shape {
                op: "mse",
                left: p.shape(),
                right: target.shape(),
            });
        }
        let n = T::lit(p.len() as f64);
        let s = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            / n;
        self.push(Matrix::filled(1, 1, s), Op::Mse(pred, target.clone()), "mse")
    }

    /// Rows of `a` picked by `idx` (repeats allowed).
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let src = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::invalid(format!(
                "gather index {bad} out of range for {} rows",
                src.rows()
            )));
        }
        let v = src.select_rows(idx);
        self.push(v, Op::Gather(a, idx.to_vec()), "gather")
    }

    /// Euclidean norm of each row, as an `n x 1` column.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let floor = T::lit(NORM_FLOOR);
        let v = Matrix::from_fn(src.rows(), 1, |r, _| {
            src.row(r).iter().map(|&x| x * x).sum::<T>().sqrt().max(floor)
        });
        self.push(v, Op::RowNorm(a), "row_norm")
    }

    /// Reverse sweep from a `1 x 1` loss. Clears gradients of earlier sweeps.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Matrix::filled(1, 1, T::one()));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &g)?;
            self.nodes[i].grad = Some(g);
            for (parent, delta) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[parent.0].grad {
                    Some(acc) => acc.add_assign(&delta)?,
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Matrix<T>) -> Result<Vec<(Var, Matrix<T>)>> {
        let node = &self.nodes[i];
        let out = match &node.op {
            Op::Leaf | Op::Detach(_) => vec![],
            Op::MatMul(a, b) => {
                let da = g.matmul_t(false, self.value(*b), true)?;
                let db = self.value(*a).matmul_t(true, g, false)?;
                vec![(*a, da), (*b, db)]
            }
            Op::AddBias(x, b) => vec![(*x, g.clone()), (*b, g.sum_rows())],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-T::one()))],
            Op::Mul(a, b) => vec![
                (*a, g.hadamard(self.value(*b))?),
                (*b, g.hadamard(self.value(*a))?),
            ],
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), "relu", |gi, x| {
                    if x > T::zero() {
                        gi
                    } else {
                        T::zero()
                    }
                })?;
                vec![(*a, d)]
            }
            Op::Tanh(a) => {
                let d = g.zip_map(&node.value, "tanh", |gi, y| gi * (T::one() - y * y))?;
                vec![(*a, d)]
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, "sigmoid", |gi, y| gi * y * (T::one() - y))?;
                vec![(*a, d)]
            }
            Op::Sum(a) => {
                let v = self.value(*a);
                vec![(*a, Matrix::filled(v.rows(), v.cols(), g.get(0, 0)))]
            }
            Op::Mse(p, target) => {
                let pv = self.value(*p);
                let c = g.get(0, 0) * T::lit(2.0) / T::lit(pv.len() as f64);
                let d = pv.zip_map(target, "mse", |a, b| c * (a - b))?;
                vec![(*p, d)]
            }
            Op::Gather(a, idx) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (acc, &x) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                vec![(*a, d)]
            }
            Op::RowNorm(a) => {
                let src = self.value(*a);
                let floor = T::lit(NORM_FLOOR);
                let d = Matrix::from_fn(src.rows(), src.cols(), |r, c| {
                    let n = node.value.get(r, 0);
                    if n <= floor {
                        T::zero()
                    } else {
                        g.get(r, 0) * src.get(r, c) / n
                    }
                });
                vec![(*a, d)]
            }
        };
        Ok(out)
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn elementwise_definitions() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(M::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
        let r = t.relu(x).unwrap();
        assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = t.constant(M::zeros(1, 1)).unwrap();
        let th = t.tanh(z).unwrap();
        let sg = t.sigmoid(z).unwrap();
        assert_eq!(t.value(th).get(0, 0), 0.0);
        assert_eq!(t.value(sg).get(0, 0), 0.5);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.param(M::zeros(1, 1)).unwrap();
        let r = t.relu(x).unwrap();
        let s = t.sum(r).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).get(0, 0), 0.0);
    }

    #[test]
    fn mse_values() {
        let mut t = Tape::<f64>::new();
        let x = t.param(M::from_vec(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        let l = t.mse(x, &M::zeros(1, 2)).unwrap();
        assert_eq!(t.value(l).get(0, 0), 2.5);
        let same = t.mse(x, &M::from_vec(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(t.value(same).get(0, 0), 0.0);
        t.backward(l).unwrap();
        // 2 (pred - target) / n
        assert_eq!(t.grad(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn constant_loss_has_zero_grads() {
        let mut t = Tape::<f64>::new();
        let w = t.param(M::filled(2, 2, 3.0)).unwrap();
        let c = t.constant(M::filled(1, 1, 4.0)).unwrap();
        t.backward(c).unwrap();
        assert_eq!(t.grad(w), M::zeros(2, 2));
    }

    #[test]
    fn detached_input_gets_no_gradient() {
        let mut t = Tape::<f64>::new();
        let w = t.param(M::from_fn(2, 3, |i, j| (i + j) as f64 + 0.5)).unwrap();
        let x0 = t.param(M::from_fn(3, 1, |i, _| i as f64 - 1.0)).unwrap();
        let x = t.detach(x0).unwrap();
        assert_eq!(t.value(x), t.value(x0));
        let y = t.matmul(w, x).unwrap();
        let l = t.sum(y).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(x0), M::zeros(3, 1));
        assert!(t.grad(w).data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::<f64>::new();
        let w = t.param(M::zeros(2, 1)).unwrap();
        assert!(matches!(t.backward(w), Err(Error::NonScalarLoss((2, 1)))));
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut t = Tape::<f64>::new();
        assert!(t.param(M::filled(1, 1, f64::NAN)).is_err());
        let a = t.param(M::filled(1, 1, f64::MAX)).unwrap();
        assert!(matches!(t.scale(a, 10.0), Err(Error::NonFinite("scale"))));
    }

    #[test]
    fn binary_shape_mismatch() {
        let mut t = Tape::<f64>::new();
        let a = t.param(M::zeros(2, 2)).unwrap();
        let b = t.param(M::zeros(2, 3)).unwrap();
        assert!(t.add(a, b).is_err());
        assert!(t.mul(a, b).is_err());
        assert!(t.sub(a, b).is_err());
        assert!(t.matmul(b, a).is_err());
        assert!(t.mse(a, &M::zeros(3, 3)).is_err());
    }

    #[test]
    fn reused_operand_accumulates() {
        // d/dx sum(x*x) = 2x
        let mut t = Tape::<f64>::new();
        let x = t.param(M::from_vec(1, 2, vec![3.0, -1.5]).unwrap()).unwrap();
        let sq = t.mul(x, x).unwrap();
        let l = t.sum(sq).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).data(), &[6.0, -3.0]);
    }
}
