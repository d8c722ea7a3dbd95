use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Dense feed-forward network with rectifier hidden layers and a linear
/// output layer.
///
/// Parameters live in one flat vector. Layer `l` stores its weights as an
/// `in x out` row-major block followed by `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Mlp<F> {
    widths: Vec<usize>,
    params: Vec<F>,
}

/// Activations recorded by a forward pass, needed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Cache<F> {
    batch: usize,
    /// `acts[0]` is the input, `acts[l]` the (rectified) output of layer `l`.
    acts: Vec<Vec<F>>,
}

impl<F: Scalar> Cache<F> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output rows, `batch x out` row-major.
    pub fn outputs(&self) -> &[F] {
        self.acts.last().expect("cache has an input layer")
    }

    pub fn output(&self, b: usize) -> &[F] {
        let out = self.outputs();
        let w = out.len() / self.batch;
        &out[b * w..(b + 1) * w]
    }
}

struct Layer {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

impl<F: Scalar> Mlp<F> {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for layer in net.layers() {
            let a = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for p in &mut net.params[layer.w..layer.b] {
                *p = F::of(rng.random_range(-a..a));
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Usage(format!("invalid layer widths {widths:?}")));
        }
        let n = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![F::zero(); n],
        })
    }

    /// Rebuilds a network from widths and a flat parameter vector.
    pub fn from_params(widths: &[usize], params: Vec<F>) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        if params.len() != net.params.len() {
            return Err(Error::Usage(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Usage("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    /// Weight `(i, o)` of layer `l`, for hand-built networks in tests and tools.
    pub fn set_weight(&mut self, l: usize, i: usize, o: usize, value: F) {
        let layer = &self.layers()[l];
        let idx = layer.w + i * layer.n_out + o;
        self.params[idx] = value;
    }

    pub fn set_bias(&mut self, l: usize, o: usize, value: F) {
        let idx = self.layers()[l].b + o;
        self.params[idx] = value;
    }

    fn layers(&self) -> Vec<Layer> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    w: off,
                    b: off + w[0] * w[1],
                    n_in: w[0],
                    n_out: w[1],
                };
                off = layer.b + w[1];
                layer
            })
            .collect()
    }

    pub fn forward(&self, x: &[F]) -> Result<Cache<F>> {
        self.forward_batch(x, 1)
    }

    /// Forward pass over `batch` inputs stored row-major.
    pub fn forward_batch(&self, x: &[F], batch: usize) -> Result<Cache<F>> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::Usage(format!(
                "input length {} does not match batch {batch} x width {}",
                x.len(),
                self.input_dim()
            )));
        }
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in layers.iter().enumerate() {
            let w = &self.params[layer.w..layer.b];
            let bias = &self.params[layer.b..layer.b + layer.n_out];
            let prev = &acts[l];
            let mut next = vec![F::zero(); batch * layer.n_out];
            for b in 0..batch {
                let xin = &prev[b * layer.n_in..(b + 1) * layer.n_in];
                let out = &mut next[b * layer.n_out..(b + 1) * layer.n_out];
                out.copy_from_slice(bias);
                for (i, &xi) in xin.iter().enumerate() {
                    if xi == F::zero() {
                        continue;
                    }
                    let row = &w[i * layer.n_out..(i + 1) * layer.n_out];
                    for (o, &wi) in out.iter_mut().zip(row) {
                        *o += xi * wi;
                    }
                }
                if l < last {
                    for o in out.iter_mut() {
                        if *o < F::zero() {
                            *o = F::zero();
                        }
                    }
                }
            }
            acts.push(next);
        }
        Ok(Cache { batch, acts })
    }

    /// Convenience forward pass returning only the output of one input.
    pub fn predict(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(self.forward(x)?.outputs().to_vec())
    }

    /// Accumulates the gradient of a scalar loss into `grads`, given the
    /// loss gradient with respect to the outputs recorded in `cache`.
    pub fn backward(&self, cache: &Cache<F>, grad_out: &[F], grads: &mut [F]) -> Result<()> {
        let layers = self.layers();
        let batch = cache.batch;
        if cache.acts.len() != layers.len() + 1
            || cache.acts.iter().zip(&self.widths).any(|(a, &w)| a.len() != batch * w)
        {
            return Err(Error::Usage("cache was recorded by a different network".into()));
        }
        if grad_out.len() != batch * self.output_dim() {
            return Err(Error::Usage(format!(
                "output gradient length {} does not match batch {batch} x width {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Usage("gradient buffer has the wrong length".into()));
        }
        let mut delta = grad_out.to_vec();
        for (l, layer) in layers.iter().enumerate().rev() {
            let x = &cache.acts[l];
            let (gw, rest) = grads[layer.w..].split_at_mut(layer.b - layer.w);
            let gb = &mut rest[..layer.n_out];
            for b in 0..batch {
                let d = &delta[b * layer.n_out..(b + 1) * layer.n_out];
                for (g, &di) in gb.iter_mut().zip(d) {
                    *g += di;
                }
                let xin = &x[b * layer.n_in..(b + 1) * layer.n_in];
                for (i, &xi) in xin.iter().enumerate() {
                    if xi == F::zero() {
                        continue;
                    }
                    let row = &mut gw[i * layer.n_out..(i + 1) * layer.n_out];
                    for (g, &di) in row.iter_mut().zip(d) {
                        *g += xi * di;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[layer.w..layer.b];
            let mut prev = vec![F::zero(); batch * layer.n_in];
            for b in 0..batch {
                let d = &delta[b * layer.n_out..(b + 1) * layer.n_out];
                let xin = &x[b * layer.n_in..(b + 1) * layer.n_in];
                let p = &mut prev[b * layer.n_in..(b + 1) * layer.n_in];
                for i in 0..layer.n_in {
                    // Rectifier mask: the stored activation is zero exactly
                    // when the pre-activation was not positive.
                    if xin[i] > F::zero() {
                        let row = &w[i * layer.n_out..(i + 1) * layer.n_out];
                        p[i] = dot(row, d);
                    }
                }
            }
            delta = prev;
        }
        Ok(())
    }

    /// Which hidden units are active for each input; a change in this
    /// pattern means a parameter perturbation crossed a rectifier kink.
    pub fn activation_pattern(&self, x: &[F], batch: usize) -> Result<Vec<bool>> {
        let cache = self.forward_batch(x, batch)?;
        let n = cache.acts.len();
        Ok(cache.acts[1..n - 1]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > F::zero()))
            .collect())
    }

    /// Copy of this network with a different parameter vector.
    pub fn with_params(&self, params: &[F]) -> Self {
        assert_eq!(params.len(), self.params.len());
        Self {
            widths: self.widths.clone(),
            params: params.to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    // Four partial sums let the compiler keep several lanes busy.
    let mut acc = [F::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * c + j] * b[4 * c + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}
