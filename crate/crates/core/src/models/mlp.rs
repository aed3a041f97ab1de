use crate::error::{Error, Result};
use crate::models::init::glorot_uniform;
use crate::models::{ChartPoint, Params};
use crate::ndnum::{Eager, Graph, Matrix};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Affine layer `x · w + b` with `w: in x out` and `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Linear {
            w: glorot_uniform(fan_in, fan_out, rng),
            b: Matrix::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.cols()
    }
}

/// Multi-layer perceptron with ReLU on every hidden layer and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// An [`Mlp`] whose tensors live in some [`Graph`].
#[derive(Clone, Debug)]
pub struct BoundMlp<V> {
    layers: Vec<(V, V)>,
}

impl<V: Clone> BoundMlp<V> {
    pub fn forward<T: Scalar, G: Graph<T, V = V>>(&self, g: &mut G, x: &V) -> Result<V> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let a = g.matmul(&h, w)?;
            h = g.add_bias(&a, b)?;
            if i < last {
                h = g.relu(&h)?;
            }
        }
        Ok(h)
    }

    /// Bound tensors in declaration order.
    pub fn vars(&self) -> Vec<V> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [input, hidden..., output]`.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|p| Linear::init(p[0], p[1], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> Result<BoundMlp<G::V>> {
        let layers = self
            .layers
            .iter()
            .map(|l| Ok((g.param(&l.w)?, g.param(&l.b)?)))
            .collect::<Result<_>>()?;
        Ok(BoundMlp { layers })
    }

    /// Eager forward pass over a batch of rows.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "mlp input",
                left: x.shape(),
                right: (self.input_dim(), self.output_dim()),
            });
        }
        // Borrow-based loop; avoids cloning the weights through `bind`.
        let mut h: Option<Matrix<T>> = None;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let input = h.as_ref().unwrap_or(x);
            let mut a = Graph::<T>::matmul(&mut Eager, input, &l.w)?;
            a = a.add_row(&l.b)?;
            if i < last {
                a = Graph::<T>::relu(&mut Eager, &a)?;
            }
            h = Some(a);
        }
        Ok(h.expect("at least one layer"))
    }
}

impl<T: Scalar> Params<T> for Mlp<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}

/// Channel encoder: feature vector to 2-D chart point.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub mlp: Mlp<T>,
}

impl<T: Scalar> Encoder<T> {
    /// MLP `input_dim -> widths... -> 2`.
    pub fn init(input_dim: usize, widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut sizes = Vec::with_capacity(widths.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(widths);
        sizes.push(2);
        Ok(Encoder {
            mlp: Mlp::init(&sizes, rng)?,
        })
    }

    pub fn from_mlp(mlp: Mlp<T>) -> Result<Self> {
        if mlp.output_dim() != 2 {
            return Err(Error::invalid(format!(
                "encoder must output 2 dimensions, got {}",
                mlp.output_dim()
            )));
        }
        Ok(Encoder { mlp })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.mlp.layers[..self.mlp.layers.len() - 1]
            .iter()
            .map(Linear::fan_out)
            .collect()
    }

    pub fn encode(&self, x: &[T]) -> Result<ChartPoint<T>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let z = self.encode_batch(&m)?;
        Ok(ChartPoint([z.get(0, 0), z.get(0, 1)]))
    }

    /// One chart point per input row (`n x 2`).
    pub fn encode_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.mlp.forward(x)
    }

    /// Output-layer bias, the chart's translation.
    pub fn output_bias_mut(&mut self) -> &mut Matrix<T> {
        let last = self.mlp.layers.len() - 1;
        &mut self.mlp.layers[last].b
    }
}

impl<T: Scalar> Params<T> for Encoder<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        self.mlp.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.mlp.tensors_mut()
    }
}
