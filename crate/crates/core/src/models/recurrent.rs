//! Velocity-conditioned recurrent predictor.
//!
//! The predictor never sees the chart point itself: its hidden state starts at
//! zero and is driven by per-slot displacements. The head turns each hidden
//! state into a pseudo-velocity which is integrated onto the context embedding,
//! `ẑ_t = ẑ_{t-1} + head(h_t)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::init::{glorot_uniform, orthogonal};
use crate::models::mlp::{BoundMlp, Mlp};
use crate::models::{ChartPoint, Params};
use crate::ndnum::{Eager, Graph, Matrix};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Rnn, CellKind::Gru, CellKind::Lstm];

    fn gate_count(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Rnn => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(CellKind::Rnn),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::invalid(format!("unknown cell kind '{other}'"))),
        }
    }
}

/// One gate's pre-activation `x · w + h · u + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Matrix<T>,
}

/// Gates are ordered: RNN `[h]`, GRU `[update, reset, candidate]`,
/// LSTM `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentCell<T> {
    pub kind: CellKind,
    pub gates: Vec<Gate<T>>,
}

impl<T: Scalar> RecurrentCell<T> {
    pub fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let gates = (0..kind.gate_count())
            .map(|i| {
                let bias = if kind == CellKind::Lstm && i == 1 {
                    T::one()
                } else {
                    T::zero()
                };
                Gate {
                    w: glorot_uniform(input, hidden, rng),
                    u: orthogonal(hidden, rng),
                    b: Matrix::filled(1, hidden, bias),
                }
            })
            .collect();
        RecurrentCell { kind, gates }
    }

    pub fn hidden(&self) -> usize {
        self.gates[0].u.rows()
    }

    pub fn input(&self) -> usize {
        self.gates[0].w.rows()
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> Result<BoundCell<G::V>> {
        let gates = self
            .gates
            .iter()
            .map(|gt| Ok([g.param(&gt.w)?, g.param(&gt.u)?, g.param(&gt.b)?]))
            .collect::<Result<_>>()?;
        Ok(BoundCell {
            kind: self.kind,
            gates,
        })
    }
}

impl<T: Scalar> Params<T> for RecurrentCell<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        self.gates.iter().flat_map(|g| [&g.w, &g.u, &g.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.gates
            .iter_mut()
            .flat_map(|g| [&mut g.w, &mut g.u, &mut g.b])
            .collect()
    }
}

/// Recurrent state: hidden output plus the LSTM memory cell.
#[derive(Clone, Debug)]
pub struct CellState<V> {
    pub h: V,
    pub c: Option<V>,
}

#[derive(Clone, Debug)]
pub struct BoundCell<V> {
    kind: CellKind,
    gates: Vec<[V; 3]>,
}

impl<V: Clone> BoundCell<V> {
    fn pre<T: Scalar, G: Graph<T, V = V>>(&self, g: &mut G, i: usize, x: &V, h: &V) -> Result<V> {
        let [w, u, b] = &self.gates[i];
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(&xw, &hu)?;
        g.add_bias(&s, b)
    }

    pub fn step<T: Scalar, G: Graph<T, V = V>>(
        &self,
        g: &mut G,
        x: &V,
        state: &CellState<V>,
    ) -> Result<CellState<V>> {
        let h = &state.h;
        match self.kind {
            CellKind::Rnn => {
                let a = self.pre(g, 0, x, h)?;
                Ok(CellState {
                    h: g.tanh(&a)?,
                    c: None,
                })
            }
            CellKind::Gru => {
                let za = self.pre(g, 0, x, h)?;
                let z = g.sigmoid(&za)?;
                let ra = self.pre(g, 1, x, h)?;
                let r = g.sigmoid(&ra)?;
                let rh = g.mul(&r, h)?;
                let na = self.pre(g, 2, x, &rh)?;
                let n = g.tanh(&na)?;
                // h' = (1 - z) ⊙ n + z ⊙ h = n + z ⊙ (h - n)
                let d = g.sub(h, &n)?;
                let zd = g.mul(&z, &d)?;
                Ok(CellState {
                    h: g.add(&n, &zd)?,
                    c: None,
                })
            }
            CellKind::Lstm => {
                let c = state
                    .c
                    .as_ref()
                    .ok_or_else(|| Error::invalid("LSTM step without a memory cell"))?;
                let ia = self.pre(g, 0, x, h)?;
                let i = g.sigmoid(&ia)?;
                let fa = self.pre(g, 1, x, h)?;
                let f = g.sigmoid(&fa)?;
                let ca = self.pre(g, 2, x, h)?;
                let cand = g.tanh(&ca)?;
                let oa = self.pre(g, 3, x, h)?;
                let o = g.sigmoid(&oa)?;
                let fc = g.mul(&f, c)?;
                let ic = g.mul(&i, &cand)?;
                let c_next = g.add(&fc, &ic)?;
                let tc = g.tanh(&c_next)?;
                Ok(CellState {
                    h: g.mul(&o, &tc)?,
                    c: Some(c_next),
                })
            }
        }
    }

    pub fn initial_state<T: Scalar, G: Graph<T, V = V>>(
        &self,
        g: &mut G,
        batch: usize,
        hidden: usize,
    ) -> Result<CellState<V>> {
        let h = g.constant(Matrix::zeros(batch, hidden))?;
        let c = match self.kind {
            CellKind::Lstm => Some(g.constant(Matrix::zeros(batch, hidden))?),
            _ => None,
        };
        Ok(CellState { h, c })
    }

    pub fn vars(&self) -> Vec<V> {
        self.gates.iter().flat_map(|g| g.iter().cloned()).collect()
    }
}

/// Recurrent predictor: cell over per-slot displacement inputs, two-layer head
/// producing a pseudo-velocity per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor<T> {
    pub cell: RecurrentCell<T>,
    pub head: Mlp<T>,
    /// Multiplies `v · Δt` before it enters the cell.
    pub input_gain: T,
}

#[derive(Clone, Debug)]
pub struct BoundPredictor<V> {
    pub cell: BoundCell<V>,
    pub head: BoundMlp<V>,
    hidden: usize,
}

impl<V: Clone> BoundPredictor<V> {
    /// Autoregressive rollout over `inputs` (each `batch x 2`, already scaled).
    /// The head output is a pseudo-velocity, so each step adds `dt · u_t`.
    /// Returns `ẑ_1..ẑ_H`.
    pub fn rollout<T: Scalar, G: Graph<T, V = V>>(
        &self,
        g: &mut G,
        z0: &V,
        inputs: &[V],
        dt: T,
    ) -> Result<Vec<V>> {
        if inputs.is_empty() {
            return Err(Error::invalid("rollout needs at least one velocity"));
        }
        let batch = g.value(z0).rows();
        let mut state = self.cell.initial_state(g, batch, self.hidden)?;
        let mut z = z0.clone();
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            state = self.cell.step(g, x, &state)?;
            let u = self.head.forward(g, &state.h)?;
            let step = g.scale(&u, dt)?;
            z = g.add(&z, &step)?;
            out.push(z.clone());
        }
        Ok(out)
    }

    pub fn vars(&self) -> Vec<V> {
        let mut v = self.cell.vars();
        v.extend(self.head.vars());
        v
    }
}

impl<T: Scalar> Predictor<T> {
    pub fn init(
        kind: CellKind,
        hidden: usize,
        head_hidden: usize,
        input_gain: T,
        rng: &mut Rng,
    ) -> Result<Self> {
        if hidden == 0 || head_hidden == 0 {
            return Err(Error::invalid("predictor sizes must be positive"));
        }
        Ok(Predictor {
            cell: RecurrentCell::init(kind, 2, hidden, rng),
            head: Mlp::init(&[hidden, head_hidden, 2], rng)?,
            input_gain,
        })
    }

    pub fn kind(&self) -> CellKind {
        self.cell.kind
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn head_hidden(&self) -> usize {
        self.head.layers[0].fan_out()
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> Result<BoundPredictor<G::V>> {
        Ok(BoundPredictor {
            cell: self.cell.bind(g)?,
            head: self.head.bind(g)?,
            hidden: self.hidden(),
        })
    }

    /// Cell inputs for one step: `v · Δt · gain` for each row.
    pub fn scaled_inputs(&self, velocities: &Matrix<T>, dt: T) -> Matrix<T> {
        velocities.scale(dt * self.input_gain)
    }

    /// Batched eager rollout. `velocities[t]` is `batch x 2`.
    pub fn rollout_batch(
        &self,
        z0: &Matrix<T>,
        velocities: &[Matrix<T>],
        dt: T,
    ) -> Result<Vec<Matrix<T>>> {
        if z0.cols() != 2 {
            return Err(Error::Shape {
                op: "rollout z0",
                left: z0.shape(),
                right: (z0.rows(), 2),
            });
        }
        let mut g = Eager;
        let bound = self.bind(&mut g)?;
        let inputs: Vec<Matrix<T>> = velocities
            .iter()
            .map(|v| {
                if v.shape() != z0.shape() {
                    Err(Error::Shape {
                        op: "rollout velocity",
                        left: v.shape(),
                        right: z0.shape(),
                    })
                } else {
                    Ok(self.scaled_inputs(v, dt))
                }
            })
            .collect::<Result<_>>()?;
        bound.rollout(&mut g, z0, &inputs, dt)
    }

    /// Rolls one chart point forward over `velocities` (length = horizon).
    pub fn rollout(
        &self,
        z0: ChartPoint<T>,
        velocities: &[[T; 2]],
        dt: T,
    ) -> Result<Vec<ChartPoint<T>>> {
        let z = Matrix::from_vec(1, 2, z0.0.to_vec())?;
        let vs: Vec<Matrix<T>> = velocities
            .iter()
            .map(|v| Matrix::from_vec(1, 2, v.to_vec()))
            .collect::<Result<_>>()?;
        Ok(self
            .rollout_batch(&z, &vs, dt)?
            .into_iter()
            .map(|m| ChartPoint([m.get(0, 0), m.get(0, 1)]))
            .collect())
    }
}

impl<T: Scalar> Params<T> for Predictor<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut v = self.cell.tensors();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = self.cell.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}
