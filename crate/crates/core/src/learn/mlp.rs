//! Feed-forward network with rectified hidden layers and a linear output.
//!
//! All parameters live in one flat vector; layer `k` stores its weight matrix
//! (`out x in`, row-major) followed by its bias.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::LearnError;
use crate::math;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a batched forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input, `acts[k]` the output of layer `k`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Weights and biases drawn uniformly from `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, LearnError> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / math::sqrt(w[0] as f64);
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + n] {
                *p = rng.random_range(-bound..bound);
            }
            off += n;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, LearnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(LearnError::Shape("a network needs at least two non-empty layers".into()));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Rebuilds a network from saved sizes and parameters.
    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self, LearnError> {
        let mut net = Self::zeros(&sizes)?;
        if params.len() != net.params.len() {
            return Err(LearnError::Shape(alloc::format!(
                "{} parameters for a network that needs {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LearnError::Shape("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, LearnError> {
        Ok(self.forward_batch(input, 1)?.acts.pop().unwrap_or_default())
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Tape, LearnError> {
        if input.len() != batch * self.input_len() {
            return Err(LearnError::Shape(alloc::format!(
                "input of length {} for batch {} of width {}",
                input.len(),
                batch,
                self.input_len()
            )));
        }
        let last = self.sizes.len() - 2;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for (k, (off, n_in, n_out)) in self.layers().enumerate() {
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let x = &acts[k];
            let mut y = vec![0.0; batch * n_out];
            for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
                for (o, yo) in yr.iter_mut().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let mut s = b[o];
                    for (a, c) in row.iter().zip(xr) {
                        s += a * c;
                    }
                    *yo = if k < last { s.max(0.0) } else { s };
                }
            }
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input batch.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grad: &mut [f64]) -> Result<Vec<f64>, LearnError> {
        let batch = tape.batch;
        if grad_out.len() != batch * self.output_len() || grad.len() != self.params.len() {
            return Err(LearnError::Shape("gradient buffers do not match the network".into()));
        }
        let layers: Vec<_> = self.layers().collect();
        let last = layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for (k, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
            if k < last {
                for (d, &a) in delta.iter_mut().zip(&tape.acts[k + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &tape.acts[k];
            let w = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut dx = vec![0.0; batch * n_in];
            for ((dr, xr), dxr) in delta
                .chunks_exact(n_out)
                .zip(x.chunks_exact(n_in))
                .zip(dx.chunks_exact_mut(n_in))
            {
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, &xi) in grow.iter_mut().zip(xr) {
                        *g += d * xi;
                    }
                    let wrow = &w[o * n_in..(o + 1) * n_in];
                    for (g, &wi) in dxr.iter_mut().zip(wrow) {
                        *g += d * wi;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// `self <- (1 - tau) * self + tau * source`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) {
        debug_assert_eq!(self.sizes, source.sizes);
        for (t, &s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}
