use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::Matrix;

use super::graph::{Graph, Var};

/// Default leaky-rectifier slope.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }
}

/// One affine layer `x W + b` followed by an activation. `weight` is
/// `in x out`, `bias` is `1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("MlpParams::new"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(dim_mismatch("MlpParams bias", format!("1x{}", l.weight.cols()), format!("{:?}", l.bias.shape())));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(dim_mismatch("MlpParams chain", layers[i - 1].weight.cols(), l.weight.rows()));
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::NonFinite("MlpParams::new"));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `widths` lists every layer
    /// boundary, input first; hidden layers use `hidden`, the last layer is
    /// linear.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, widths: &[usize], hidden: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("an MLP needs at least input and output widths".into()));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Layer {
                    weight: Matrix::from_vec(fan_in, fan_out, data),
                    bias: Matrix::zeros(1, fan_out),
                    activation: if i + 1 == n { Activation::Identity } else { hidden },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.cols()
    }

    /// Parameter tensors in a fixed order: w0, b0, w1, b1, ...
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    /// Records every parameter as a graph leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        let vars = self
            .layers
            .iter()
            .map(|l| (g.leaf(l.weight.clone()), g.leaf(l.bias.clone()), l.activation))
            .collect();
        BoundMlp { layers: vars }
    }

    /// Graph-free forward pass on a batch.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.input_dim() {
            return Err(dim_mismatch("MlpParams::forward", self.input_dim(), input.cols()));
        }
        let mut h = input.clone();
        for l in &self.layers {
            let mut next = h.matmul(&l.weight)?;
            for r in 0..next.rows() {
                for (v, b) in next.row_mut(r).iter_mut().zip(l.bias.as_slice()) {
                    *v = l.activation.apply(*v + b);
                }
            }
            h = next;
        }
        Ok(h)
    }
}

/// Graph handles for an [`MlpParams`], in the same order as
/// [`MlpParams::tensors`].
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var, Activation)>,
}

impl BoundMlp {
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }

    /// Rebuilds a bound MLP from parameter leaves already on the graph.
    pub fn from_vars(vars: &[Var], activations: &[Activation]) -> Result<Self> {
        if vars.len() != 2 * activations.len() {
            return Err(dim_mismatch("BoundMlp::from_vars", 2 * activations.len(), vars.len()));
        }
        Ok(Self {
            layers: activations
                .iter()
                .enumerate()
                .map(|(i, &a)| (vars[2 * i], vars[2 * i + 1], a))
                .collect(),
        })
    }
}

/// Batched forward pass recorded on the graph: N x d_in -> N x d_out.
pub fn forward_mlp(g: &mut Graph, mlp: &BoundMlp, input: Var) -> Result<Var> {
    let mut h = input;
    for &(w, b, act) in &mlp.layers {
        let lin = g.matmul(h, w)?;
        let affine = g.add_row(lin, b)?;
        h = match act {
            Activation::Identity => affine,
            Activation::LeakyRelu { slope } => g.leaky_relu(affine, slope),
        };
    }
    Ok(h)
}
