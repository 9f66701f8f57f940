//! Minimal dense feed-forward networks with reverse-mode gradients and Adam,
//! written from scratch for the tabular GAN.
//!
//! Conventions that keep the gradient algebra honest end to end:
//!
//! * `backward` computes pure vector-Jacobian products — weight and bias
//!   gradients are *sums* over the batch and the input gradient is per-row.
//!   Any `1/batch` factor from a mean-style loss belongs in the upstream
//!   seed (the fused helpers below include it), so chaining one network's
//!   input gradient into another's backward pass needs no extra scaling.
//! * Forward passes return a cache stamped with the network's parameter
//!   version; using a cache after the parameters changed is a contract
//!   error instead of silently wrong gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Element-wise nonlinearity applied after a layer's affine transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
    /// Softmax within each `[start, end)` segment, tanh everywhere else.
    /// Matches the mixed continuous/one-hot layout of encoded table rows.
    SoftmaxSegments { segments: Vec<(usize, usize)> },
}

impl Activation {
    /// Validate segment bounds against the layer width.
    fn validate(&self, width: usize) -> Result<()> {
        if let Activation::SoftmaxSegments { segments } = self {
            let mut previous_end = 0usize;
            for &(start, end) in segments {
                if start >= end || end > width || start < previous_end {
                    return Err(Error::Contract(format!(
                        "softmax segment [{start}, {end}) invalid for width {width} \
                         (segments must be sorted, non-overlapping, non-empty)"
                    )));
                }
                previous_end = end;
            }
        }
        Ok(())
    }

    /// Apply the activation to one row of pre-activations.
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = x.max(0.0);
                }
            }
            Activation::Tanh => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = x.tanh();
                }
            }
            Activation::Sigmoid => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = sigmoid(x);
                }
            }
            Activation::Linear => out.copy_from_slice(z),
            Activation::SoftmaxSegments { segments } => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = x.tanh();
                }
                for &(start, end) in segments {
                    let max = z[start..end]
                        .iter()
                        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let mut total = 0.0;
                    for i in start..end {
                        let e = (z[i] - max).exp();
                        out[i] = e;
                        total += e;
                    }
                    for value in &mut out[start..end] {
                        *value /= total;
                    }
                }
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One dense layer: `z = a_prev * W^T + b`, then the activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// out x in weight matrix.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

/// Fully connected feed-forward network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
    /// Bumped on every parameter update; forward caches carry a snapshot.
    #[serde(skip)]
    params_version: u64,
}

/// Equality is parameter equality; the internal cache-invalidation counter
/// does not participate (a reloaded checkpoint equals its source).
impl PartialEq for DenseNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Everything `backward` needs from a forward pass.
pub struct ForwardCache {
    input: Matrix,
    /// Per-layer pre-activations, batch x width.
    pre: Vec<Matrix>,
    /// Per-layer post-activations.
    post: Vec<Matrix>,
    version: u64,
}

impl ForwardCache {
    /// Network output for the cached batch.
    pub fn output(&self) -> &Matrix {
        self.post.last().expect("network has at least one layer")
    }

    /// Pre-activations of the final layer (the logits when the head is a
    /// sigmoid or softmax). Lets fused loss derivatives bypass the head.
    pub fn final_pre_activation(&self) -> &Matrix {
        self.pre.last().expect("network has at least one layer")
    }
}

/// Gradients from one backward pass. Weight and bias entries are summed
/// over the batch; `input_grad` is per-row.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weight_grads: Vec<Matrix>,
    pub bias_grads: Vec<Vec<f64>>,
    pub input_grad: Matrix,
}

impl DenseNetwork {
    /// Build a network with Xavier-uniform weights and zero biases.
    /// `layer_sizes` lists widths input-first; `activations` has one entry
    /// per layer (so `layer_sizes.len() - 1` of them).
    pub fn new(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Contract(
                "a network needs an input and an output size".into(),
            ));
        }
        if layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::Contract("layer widths must be positive".into()));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::Contract(format!(
                "{} layers need {} activations, got {}",
                layer_sizes.len() - 1,
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (idx, activation) in activations.iter().enumerate() {
            let fan_in = layer_sizes[idx];
            let fan_out = layer_sizes[idx + 1];
            activation.validate(fan_out)?;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weights = Matrix::zeros(fan_out, fan_in);
            for value in weights.as_mut_slice() {
                *value = rng.gen_range(-limit..limit);
            }
            layers.push(Layer {
                weights,
                biases: vec![0.0; fan_out],
                activation: activation.clone(),
            });
        }
        Ok(DenseNetwork {
            layers,
            params_version: 0,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weights.n_cols()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").weights.n_rows()
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.n_rows() * l.weights.n_cols() + l.biases.len())
            .sum()
    }

    /// Run a batch (rows are samples) through the network.
    pub fn forward(&self, input: &Matrix) -> Result<ForwardCache> {
        if input.n_cols() != self.input_size() {
            return Err(Error::Contract(format!(
                "network expects {} inputs, batch has {} columns",
                self.input_size(),
                input.n_cols()
            )));
        }
        let batch = input.n_rows();
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let mut z = current.matmul_nt(&layer.weights)?;
            for r in 0..batch {
                let row = z.row_mut(r);
                for (value, bias) in row.iter_mut().zip(&layer.biases) {
                    *value += bias;
                }
            }
            let mut a = Matrix::zeros(batch, z.n_cols());
            for r in 0..batch {
                layer.activation.apply(z.row(r), a.row_mut(r));
            }
            pre.push(z);
            post.push(a.clone());
            current = a;
        }
        Ok(ForwardCache {
            input: input.clone(),
            pre,
            post,
            version: self.params_version,
        })
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.version != self.params_version {
            return Err(Error::Contract(
                "forward cache is stale: parameters changed since the pass".into(),
            ));
        }
        Ok(())
    }

    /// Backpropagate from `upstream = dL/d(output)` (same shape as the
    /// output batch).
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients> {
        self.check_cache(cache)?;
        let last = self.layers.len() - 1;
        let delta = activation_vjp(
            &self.layers[last].activation,
            &cache.pre[last],
            &cache.post[last],
            upstream,
        )?;
        self.backprop(cache, delta)
    }

    /// Backpropagate starting from `delta = dL/d(z_final)`, the gradient at
    /// the final *pre*-activation. Used with fused loss derivatives such as
    /// sigmoid + binary cross-entropy, where the combined derivative is
    /// simpler and numerically safer than composing the two.
    pub fn backward_from_final_delta(
        &self,
        cache: &ForwardCache,
        delta: &Matrix,
    ) -> Result<Gradients> {
        self.check_cache(cache)?;
        self.backprop(cache, delta.clone())
    }

    fn backprop(&self, cache: &ForwardCache, mut delta: Matrix) -> Result<Gradients> {
        let n_layers = self.layers.len();
        if delta.n_rows() != cache.input.n_rows() || delta.n_cols() != self.output_size() {
            return Err(Error::Contract(format!(
                "delta shape {}x{} does not match output batch {}x{}",
                delta.n_rows(),
                delta.n_cols(),
                cache.input.n_rows(),
                self.output_size()
            )));
        }
        let mut weight_grads = vec![Matrix::zeros(0, 0); n_layers];
        let mut bias_grads = vec![Vec::new(); n_layers];
        for idx in (0..n_layers).rev() {
            let prev_activation: &Matrix = if idx == 0 {
                &cache.input
            } else {
                &cache.post[idx - 1]
            };
            weight_grads[idx] = delta.matmul_tn(prev_activation)?;
            let mut bias = vec![0.0; delta.n_cols()];
            for r in 0..delta.n_rows() {
                for (b, &d) in bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            bias_grads[idx] = bias;
            // Gradient w.r.t. the layer's input.
            let upstream_prev = delta.matmul(&self.layers[idx].weights)?;
            if idx == 0 {
                return Ok(Gradients {
                    weight_grads,
                    bias_grads,
                    input_grad: upstream_prev,
                });
            }
            delta = activation_vjp(
                &self.layers[idx - 1].activation,
                &cache.pre[idx - 1],
                &cache.post[idx - 1],
                &upstream_prev,
            )?;
        }
        unreachable!("loop returns at layer 0")
    }
}

/// Vector-Jacobian product of an activation: given pre-activations `z`,
/// post-activations `a`, and `upstream = dL/da`, return `dL/dz`.
pub fn activation_vjp(
    activation: &Activation,
    z: &Matrix,
    a: &Matrix,
    upstream: &Matrix,
) -> Result<Matrix> {
    if z.n_rows() != upstream.n_rows() || z.n_cols() != upstream.n_cols() {
        return Err(Error::Contract(format!(
            "upstream shape {}x{} does not match activations {}x{}",
            upstream.n_rows(),
            upstream.n_cols(),
            z.n_rows(),
            z.n_cols()
        )));
    }
    let rows = z.n_rows();
    let cols = z.n_cols();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let zr = z.row(r);
        let ar = a.row(r);
        let ur = upstream.row(r);
        let or = out.row_mut(r);
        match activation {
            Activation::Relu => {
                for c in 0..cols {
                    or[c] = if zr[c] > 0.0 { ur[c] } else { 0.0 };
                }
            }
            Activation::Tanh => {
                for c in 0..cols {
                    or[c] = ur[c] * (1.0 - ar[c] * ar[c]);
                }
            }
            Activation::Sigmoid => {
                for c in 0..cols {
                    or[c] = ur[c] * ar[c] * (1.0 - ar[c]);
                }
            }
            Activation::Linear => or.copy_from_slice(ur),
            Activation::SoftmaxSegments { segments } => {
                for c in 0..cols {
                    or[c] = ur[c] * (1.0 - ar[c] * ar[c]);
                }
                for &(start, end) in segments {
                    let mut dot = 0.0;
                    for c in start..end {
                        dot += ur[c] * ar[c];
                    }
                    for c in start..end {
                        or[c] = ar[c] * (ur[c] - dot);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mean binary cross-entropy against logits, with the fused gradient at the
/// logits. Returns `(loss, delta)` where `delta = (sigmoid(z) - target) / B`
/// — exactly `dL/dz` for the batch-mean loss, ready for
/// [`DenseNetwork::backward_from_final_delta`].
pub fn bce_with_logits(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if logits.n_rows() != targets.n_rows() || logits.n_cols() != targets.n_cols() {
        return Err(Error::Contract("logits and targets differ in shape".into()));
    }
    let batch = logits.n_rows();
    if batch == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut delta = Matrix::zeros(batch, logits.n_cols());
    let scale = 1.0 / batch as f64;
    for r in 0..batch {
        for c in 0..logits.n_cols() {
            let z = logits.get(r, c);
            let t = targets.get(r, c);
            // -[t log s(z) + (1-t) log(1-s(z))] = softplus(z) - t z.
            loss += softplus(z) - t * z;
            delta.set(r, c, (sigmoid(z) - t) * scale);
        }
    }
    Ok((loss * scale, delta))
}

/// Mean cross-entropy of softmax segments against one-hot targets, with the
/// fused gradient at the logits: within each listed segment,
/// `delta = (softmax(z) - target) / B`; zero outside the segments.
///
/// `targets` must be one-hot within each segment. The loss is summed over
/// segments and averaged over the batch.
pub fn segment_ce_with_logits(
    logits: &Matrix,
    targets: &Matrix,
    segments: &[(usize, usize)],
) -> Result<(f64, Matrix)> {
    if logits.n_rows() != targets.n_rows() || logits.n_cols() != targets.n_cols() {
        return Err(Error::Contract("logits and targets differ in shape".into()));
    }
    let batch = logits.n_rows();
    if batch == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut delta = Matrix::zeros(batch, logits.n_cols());
    for r in 0..batch {
        let zr = logits.row(r);
        for &(start, end) in segments {
            if end > logits.n_cols() || start >= end {
                return Err(Error::Contract(format!(
                    "segment [{start}, {end}) out of range for width {}",
                    logits.n_cols()
                )));
            }
            let max = zr[start..end]
                .iter()
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let logsumexp = max
                + zr[start..end]
                    .iter()
                    .map(|&z| (z - max).exp())
                    .sum::<f64>()
                    .ln();
            for c in start..end {
                let t = targets.get(r, c);
                let p = (zr[c] - logsumexp).exp();
                loss -= t * (zr[c] - logsumexp);
                delta.set(r, c, (p - t) * scale);
            }
        }
    }
    Ok((loss * scale, delta))
}

/// First and second moment accumulators for Adam, one pair per parameter
/// tensor, plus the shared step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    weight_m: Vec<Matrix>,
    weight_v: Vec<Matrix>,
    bias_m: Vec<Vec<f64>>,
    bias_v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(network: &DenseNetwork) -> Self {
        let weight_m = network
            .layers
            .iter()
            .map(|l| Matrix::zeros(l.weights.n_rows(), l.weights.n_cols()))
            .collect::<Vec<_>>();
        let weight_v = weight_m.clone();
        let bias_m = network
            .layers
            .iter()
            .map(|l| vec![0.0; l.biases.len()])
            .collect::<Vec<_>>();
        let bias_v = bias_m.clone();
        AdamState {
            weight_m,
            weight_v,
            bias_m,
            bias_v,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Checks every parameter stays finite and
/// names the offending layer otherwise.
pub fn adam_step(
    network: &mut DenseNetwork,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if grads.weight_grads.len() != network.layers.len() {
        return Err(Error::Contract(
            "gradient layer count does not match the network".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (idx, layer) in network.layers.iter_mut().enumerate() {
        let wg = &grads.weight_grads[idx];
        if wg.n_rows() != layer.weights.n_rows() || wg.n_cols() != layer.weights.n_cols() {
            return Err(Error::Contract(format!(
                "weight gradient shape mismatch at layer {idx}"
            )));
        }
        let m = state.weight_m[idx].as_mut_slice();
        let v = state.weight_v[idx].as_mut_slice();
        for (i, value) in layer.weights.as_mut_slice().iter_mut().enumerate() {
            let g = wg.as_slice()[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            *value -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
        }
        let bm = &mut state.bias_m[idx];
        let bv = &mut state.bias_v[idx];
        for (i, value) in layer.biases.iter_mut().enumerate() {
            let g = grads.bias_grads[idx][i];
            bm[i] = beta1 * bm[i] + (1.0 - beta1) * g;
            bv[i] = beta2 * bv[i] + (1.0 - beta2) * g * g;
            *value -= lr * (bm[i] / bc1) / ((bv[i] / bc2).sqrt() + eps);
        }
        if !layer.weights.is_finite() || layer.biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric(format!(
                "layer {idx} parameters became non-finite during the update"
            )));
        }
    }
    network.params_version += 1;
    Ok(())
}
