use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseRow;
use crate::error::{Error, Result};
use crate::real::Real;

/// `y = x W + b` with `W` stored `inputs x outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> DenseGrad<T> {
    pub fn sq_norm(&self) -> f64 {
        self.weight.iter().chain(self.bias.iter()).map(|v| v.as_f64() * v.as_f64()).sum()
    }
}

impl<T: Real> DenseLayer<T> {
    /// Weights uniform in `(-scale, scale)`, zero bias.
    pub fn uniform(inputs: usize, outputs: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || T::of(rng.random_range(-scale..=scale)));
        DenseLayer { weight, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.inputs() {
            return Err(Error::shape(format!("dense layer expects {} inputs, got {}", self.inputs(), x.ncols())));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }

    /// Sparse-input forward: row `b` is `sum_f v_f W[f, :] + bias`.
    pub fn forward_sparse(&self, rows: &[&SparseRow]) -> Result<Array2<T>> {
        let mut out = Array2::zeros((rows.len(), self.outputs()));
        for (mut o, row) in out.rows_mut().into_iter().zip(rows) {
            o.assign(&self.bias);
            for (f, v) in row.iter() {
                if f as usize >= self.inputs() {
                    return Err(Error::shape(format!("feature id {f} out of range {}", self.inputs())));
                }
                o.scaled_add(T::of(v as f64), &self.weight.row(f as usize));
            }
        }
        Ok(out)
    }

    /// Parameter gradients and the input gradient for upstream `dy`.
    pub fn backward(
        &self,
        x: ArrayView2<T>,
        dy: ArrayView2<T>,
        need_input_grad: bool,
    ) -> (DenseGrad<T>, Option<Array2<T>>) {
        let grad = DenseGrad { weight: x.t().dot(&dy), bias: dy.sum_axis(Axis(0)) };
        let dx = need_input_grad.then(|| dy.dot(&self.weight.t()));
        (grad, dx)
    }

    pub fn backward_sparse(&self, rows: &[&SparseRow], dy: ArrayView2<T>) -> DenseGrad<T> {
        let mut weight = Array2::zeros(self.weight.raw_dim());
        for (row, d) in rows.iter().zip(dy.rows()) {
            for (f, v) in row.iter() {
                weight.row_mut(f as usize).scaled_add(T::of(v as f64), &d);
            }
        }
        DenseGrad { weight, bias: dy.sum_axis(Axis(0)) }
    }
}

/// Multi-layer perceptron over sparse inputs. ReLU follows every layer but
/// the last; inverted dropout is applied to the output embedding in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EncoderMlp<T> {
    pub layers: Vec<DenseLayer<T>>,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    /// Pre-activation output of every layer.
    pub pre: Vec<Array2<T>>,
    pub dropout_mask: Option<Array2<T>>,
}

impl<T: Real> EncoderMlp<T> {
    /// `dims = [d_in, hidden..., d]`. The sparse input layer draws weights with
    /// unit variance, so a unit-norm input row yields unit-variance
    /// pre-activations; the dense layers use He-uniform scaling.
    pub fn new(dims: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config(format!("encoder dims need an input and an output size, got {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::config(format!("dropout must be in [0, 1), got {dropout}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let scale = if i == 0 { 3f64.sqrt() } else { (6.0 / w[0] as f64).sqrt() };
                DenseLayer::uniform(w[0], w[1], scale, &mut rng)
            })
            .collect();
        Ok(EncoderMlp { layers, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, rows: &[&SparseRow], rng: Option<&mut ChaCha8Rng>) -> Result<(Array2<T>, EncoderCache<T>)> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = self.layers[0].forward_sparse(rows)?;
        for layer in &self.layers[1..] {
            let act = h.mapv(|v| v.max(T::zero()));
            pre.push(h);
            h = layer.forward(act.view())?;
        }
        pre.push(h.clone());
        let mut dropout_mask = None;
        if let Some(rng) = rng {
            if self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                let inv = T::of(1.0 / keep);
                let mask =
                    Array2::from_shape_simple_fn(h.raw_dim(), || if rng.random_bool(keep) { inv } else { T::zero() });
                h = h * &mask;
                dropout_mask = Some(mask);
            }
        }
        Ok((h, EncoderCache { pre, dropout_mask }))
    }

    /// Gradients of every layer given the gradient at the (post-dropout)
    /// embedding.
    pub fn backward(&self, rows: &[&SparseRow], cache: &EncoderCache<T>, d_embedding: Array2<T>) -> Vec<DenseGrad<T>> {
        let mut dy = match &cache.dropout_mask {
            Some(mask) => d_embedding * mask,
            None => d_embedding,
        };
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        for i in (1..n).rev() {
            let x = cache.pre[i - 1].mapv(|v| v.max(T::zero()));
            let (g, dx) = self.layers[i].backward(x.view(), dy.view(), true);
            grads.push(g);
            let mut dx = dx.unwrap();
            dx.zip_mut_with(&cache.pre[i - 1], |d, &p| {
                if p <= T::zero() {
                    *d = T::zero();
                }
            });
            dy = dx;
        }
        grads.push(self.layers[0].backward_sparse(rows, dy.view()));
        grads.reverse();
        grads
    }
}
