//! Dense feedforward network u(x; θ) with tanh hidden layers and an
//! identity output, plus analytic reverse-mode differentiation over the
//! parameters.
//!
//! Gradients are only ever taken with respect to parameters; derivatives
//! with respect to *inputs* are handled by the Monte Carlo estimators as
//! plain function evaluations. Parameters live in one flat vector (per
//! layer: row-major weights, then biases) so optimizers and checkpoints
//! can treat θ as a single array.

use crate::qmc::UniformStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("network needs at least 2 layers, got {0}")]
    TooFewLayers(usize),
    #[error("layer width must be positive")]
    ZeroWidthLayer,
    #[error("input length {got} does not match input layer width {want}")]
    InputMismatch { got: usize, want: usize },
    #[error("parameter vector length {got} does not match layout {want}")]
    ParamMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations of one forward pass, reused by backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// activations[0] is the input; last entry is the output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

impl Mlp {
    pub fn param_count_for(layer_sizes: &[usize]) -> usize {
        layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Xavier/Glorot uniform init: weights in ±sqrt(6/(fan_in+fan_out)),
    /// biases zero. Deterministic under the stream's seed.
    pub fn xavier_init(layer_sizes: &[usize], stream: &mut UniformStream) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers(layer_sizes.len()));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(NnError::ZeroWidthLayer);
        }
        let mut params = Vec::with_capacity(Self::param_count_for(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let u = stream.next_value().expect("init stream exhausted");
                params.push(bound * (2.0 * u - 1.0));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::ParamMismatch {
                got: params.len(),
                want: self.params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Forward pass keeping per-layer activations for backprop.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::InputMismatch {
                got: input.len(),
                want: self.input_dim(),
            });
        }
        let n_layers = self.layer_sizes.len();
        let mut activations = Vec::with_capacity(n_layers);
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers - 1 {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let prev = &activations[l];
            let mut next = Vec::with_capacity(n_out);
            let last = l == n_layers - 2;
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut z = biases[o];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                next.push(if last { z } else { z.tanh() });
            }
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(input)?.output().to_vec())
    }

    /// Scalar convenience for d-dimensional fields with a 1-wide output.
    pub fn eval_scalar(&self, input: &[f64]) -> f64 {
        self.forward_cached(input).expect("input width").output()[0]
    }

    /// Accumulates dθ of (cotangent · output) for the recorded forward
    /// pass into `grad`, which must have `param_count` entries.
    pub fn backprop(&self, cache: &ForwardCache, cotangent: &[f64], grad: &mut [f64]) {
        assert_eq!(cotangent.len(), self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let n_layers = self.layer_sizes.len();
        // delta on the *pre-activation* of the current layer
        let mut delta = cotangent.to_vec();
        let mut offset = self.params.len();
        for l in (0..n_layers - 1).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            offset -= (n_in + 1) * n_out;
            let weights = &self.params[offset..offset + n_in * n_out];
            let prev = &cache.activations[l];
            if l < n_layers - 2 {
                // convert output-side delta through tanh': a' = 1 - a²
                let act = &cache.activations[l + 1];
                for (d, a) in delta.iter_mut().zip(act) {
                    *d *= 1.0 - a * a;
                }
            }
            let (gw, gb) = grad[offset..offset + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g += d * a;
                }
            }
            // propagate to the previous layer's activations
            if l > 0 {
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += d * w;
                    }
                }
                delta = prev_delta;
            }
        }
    }
}
