//! A tiny op vocabulary shared by recorded and eager evaluation.
//!
//! Network code is written once against [`Graph`]. Running it on a [`Tape`]
//! records a differentiable graph; running it on [`Eager`] computes plain
//! matrices with no bookkeeping (inference, target embeddings).

use crate::error::Result;
use crate::ndnum::{Matrix, Tape, Var};
use crate::scalar::Scalar;

pub trait Graph<T: Scalar> {
    type V: Clone;

    /// Registers a learnable tensor.
    fn param(&mut self, m: &Matrix<T>) -> Result<Self::V>;
    fn constant(&mut self, m: Matrix<T>) -> Result<Self::V>;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Matrix<T>;

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add_bias(&mut self, x: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale(&mut self, a: &Self::V, s: T) -> Result<Self::V>;
    fn relu(&mut self, a: &Self::V) -> Result<Self::V>;
    fn tanh(&mut self, a: &Self::V) -> Result<Self::V>;
    fn sigmoid(&mut self, a: &Self::V) -> Result<Self::V>;
}

impl<T: Scalar> Graph<T> for Tape<T> {
    type V = Var;

    fn param(&mut self, m: &Matrix<T>) -> Result<Var> {
        Tape::param(self, m.clone())
    }
    fn constant(&mut self, m: Matrix<T>) -> Result<Var> {
        Tape::constant(self, m)
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a Matrix<T> {
        Tape::value(self, *v)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::matmul(self, *a, *b)
    }
    fn add_bias(&mut self, x: &Var, b: &Var) -> Result<Var> {
        Tape::add_bias(self, *x, *b)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::sub(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::mul(self, *a, *b)
    }
    fn scale(&mut self, a: &Var, s: T) -> Result<Var> {
        Tape::scale(self, *a, s)
    }
    fn relu(&mut self, a: &Var) -> Result<Var> {
        Tape::relu(self, *a)
    }
    fn tanh(&mut self, a: &Var) -> Result<Var> {
        Tape::tanh(self, *a)
    }
    fn sigmoid(&mut self, a: &Var) -> Result<Var> {
        Tape::sigmoid(self, *a)
    }
}

/// Immediate evaluation on owned matrices.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

fn checked<T: Scalar>(m: Matrix<T>, name: &'static str) -> Result<Matrix<T>> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(crate::Error::NonFinite(name))
    }
}

impl<T: Scalar> Graph<T> for Eager {
    type V = Matrix<T>;

    fn param(&mut self, m: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(m.clone())
    }
    fn constant(&mut self, m: Matrix<T>) -> Result<Matrix<T>> {
        Ok(m)
    }
    fn value<'a>(&'a self, v: &'a Matrix<T>) -> &'a Matrix<T> {
        v
    }
    fn matmul(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
        checked(a.matmul(b)?, "matmul")
    }
    fn add_bias(&mut self, x: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
        checked(x.add_row(b)?, "add_bias")
    }
    fn add(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
        checked(a.add(b)?, "add")
    }
    fn sub(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
        checked(a.sub(b)?, "sub")
    }
    fn mul(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
        checked(a.hadamard(b)?, "mul")
    }
    fn scale(&mut self, a: &Matrix<T>, s: T) -> Result<Matrix<T>> {
        checked(a.scale(s), "scale")
    }
    fn relu(&mut self, a: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(a.map(|x| if x > T::zero() { x } else { T::zero() }))
    }
    fn tanh(&mut self, a: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(a.map(T::tanh))
    }
    fn sigmoid(&mut self, a: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(a.map(crate::ndnum::tape::sigmoid))
    }
}
