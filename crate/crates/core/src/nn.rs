//! Fully connected networks with hand-written reverse mode and Adam.
//!
//! Parameters live in one flat `f32` vector. Layer `l` contributes its weight
//! matrix (`out x in`, row-major) followed by its bias vector, layers in input
//! to output order. The same layout is used for serialized parameter blobs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FlatParams = Vec<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f32) -> f32 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    weights: usize,
    biases: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Activations recorded by [`MlpSpec::forward_batch`], consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `activations[0]` is the input, the last entry is the network output.
    activations: Vec<Vec<f32>>,
}

impl Tape {
    pub fn output(&self) -> &[f32] {
        self.activations
            .last()
            .expect("tape always holds the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::contract(
                "an MLP needs at least an input and an output layer",
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::contract("layer sizes must be positive"));
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden_activation: hidden,
            output_activation: output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let layer = Layer {
                weights: offset,
                biases: offset + w[0] * w[1],
                fan_in: w[0],
                fan_out: w[1],
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_sizes.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> FlatParams {
        let mut params = vec![0.0; self.param_count()];
        for layer in self.layers() {
            let bound = 1.0 / (layer.fan_in as f32).sqrt();
            let end = layer.biases + layer.fan_out;
            for p in &mut params[layer.weights..end] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        params
    }

    fn check_params(&self, params: &[f32]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, network needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f32], input: &[f32]) -> Result<Vec<f32>> {
        if input.len() != self.input_dim() {
            return Err(Error::contract(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(self
            .forward_batch(params, input, 1)?
            .activations
            .pop()
            .unwrap())
    }

    /// Evaluates `batch` row-major inputs at once.
    pub fn forward_batch(&self, params: &[f32], inputs: &[f32], batch: usize) -> Result<Tape> {
        self.check_params(params)?;
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::contract(format!(
                "batch input has {} entries, expected {batch} x {}",
                inputs.len(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(inputs.to_vec());
        for (l, layer) in self.layers().enumerate() {
            let prev = activations.last().unwrap();
            let mut out = vec![0.0f32; batch * layer.fan_out];
            let bias = &params[layer.biases..layer.biases + layer.fan_out];
            for row in out.chunks_exact_mut(layer.fan_out) {
                row.copy_from_slice(bias);
            }
            // out[b, j] += sum_k prev[b, k] * W[j, k]
            gemm(
                batch,
                layer.fan_in,
                layer.fan_out,
                prev,
                (layer.fan_in, 1),
                &params[layer.weights..layer.biases],
                (1, layer.fan_in),
                &mut out,
                1.0,
            );
            let act = self.activation(l);
            if act != Activation::Identity {
                for x in &mut out {
                    *x = act.apply(*x);
                }
            }
            activations.push(out);
        }
        Ok(Tape { batch, activations })
    }

    /// Gradient of `sum(output . upstream)` with respect to every parameter and
    /// the input, for a single input vector.
    pub fn backward(
        &self,
        params: &[f32],
        input: &[f32],
        upstream: &[f32],
    ) -> Result<(FlatParams, Vec<f32>)> {
        let tape = self.forward_batch(params, input, 1)?;
        let mut grad = vec![0.0; self.param_count()];
        let input_grad = self.backward_batch(params, &tape, upstream, &mut grad, true)?;
        Ok((grad, input_grad.unwrap()))
    }

    /// Accumulates into `param_grad` the gradient of `sum_b output_b . upstream_b`.
    /// Returns the per-row input gradient when requested.
    pub fn backward_batch(
        &self,
        params: &[f32],
        tape: &Tape,
        upstream: &[f32],
        param_grad: &mut [f32],
        want_input_grad: bool,
    ) -> Result<Option<Vec<f32>>> {
        self.check_params(params)?;
        let batch = tape.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::contract(format!(
                "upstream gradient has {} entries, expected {batch} x {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if param_grad.len() != params.len() {
            return Err(Error::contract(
                "gradient buffer does not match the parameter count",
            ));
        }
        let layers: Vec<Layer> = self.layers().collect();
        let mut delta = upstream.to_vec();
        for (l, layer) in layers.iter().enumerate().rev() {
            let act = self.activation(l);
            let out = &tape.activations[l + 1];
            if act != Activation::Identity {
                for (d, &y) in delta.iter_mut().zip(out) {
                    *d *= act.derivative_from_output(y);
                }
            }
            let input = &tape.activations[l];
            // dW[j, k] += sum_b delta[b, j] * input[b, k]
            gemm(
                layer.fan_out,
                batch,
                layer.fan_in,
                &delta,
                (1, layer.fan_out),
                input,
                (layer.fan_in, 1),
                &mut param_grad[layer.weights..layer.biases],
                1.0,
            );
            let db = &mut param_grad[layer.biases..layer.biases + layer.fan_out];
            for row in delta.chunks_exact(layer.fan_out) {
                for (g, &d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            // prev[b, k] = sum_j delta[b, j] * W[j, k]
            let mut prev = vec![0.0f32; batch * layer.fan_in];
            gemm(
                batch,
                layer.fan_out,
                layer.fan_in,
                &delta,
                (layer.fan_out, 1),
                &params[layer.weights..layer.biases],
                (layer.fan_in, 1),
                &mut prev,
                0.0,
            );
            delta = prev;
        }
        Ok(Some(delta))
    }
}

/// `c = a * b + beta * c` for row-major `c` (`m x n`); `a` (`m x k`) and `b`
/// (`k x n`) are addressed through `(row_stride, col_stride)` pairs.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (usize, usize),
    b: &[f32],
    b_strides: (usize, usize),
    c: &mut [f32],
    beta: f32,
) {
    let max_index = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= max_index(m, k, a_strides));
    assert!(b.len() >= max_index(k, n, b_strides));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
    pub step_count: u64,
}

/// Result of a pure Adam step.
#[derive(Debug, Clone)]
pub struct AdamUpdate {
    pub state: AdamState,
    pub params: FlatParams,
    /// `false` when the gradient held a non-finite value and nothing moved.
    pub applied: bool,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    /// In-place bias-corrected Adam update. Returns `false` (and changes
    /// nothing) if any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) -> Result<bool> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::contract(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::contract(format!("adam: invalid learning rate {lr}")));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Ok(false);
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = ADAM_BETA1 * self.first_moment[i] + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * self.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(true)
    }
}

/// Pure Adam step: returns the new state and parameters, inputs untouched.
pub fn adam_step(state: &AdamState, params: &[f32], grads: &[f32], lr: f32) -> Result<AdamUpdate> {
    let mut next = state.clone();
    let mut out = params.to_vec();
    let applied = next.step(&mut out, grads, lr)?;
    Ok(AdamUpdate {
        state: next,
        params: out,
        applied,
    })
}

/// `target <- tau * source + (1 - tau) * target`.
pub fn polyak_update(target: &mut [f32], source: &[f32], tau: f32) {
    for (t, &s) in target.iter_mut().zip(source) {
        if *t != s {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}
