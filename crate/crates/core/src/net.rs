//! Fixed-architecture multilayer policy network.
//!
//! Parameters live in a single flat vector with a canonical layout so the
//! whole network is one memorizable object: layers in order, each layer's
//! weight matrix row-major (rows = output units) followed by its bias
//! vector. Forward evaluation, exact reverse-mode gradients, and the Adam
//! update are implemented directly over that layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;
use crate::scalar::Real;

/// Network architecture: `layer_dims = [d0, d1, .., dL]`, tanh on hidden
/// layers, identity on the output, optional per-entry output clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec<T> {
    pub layer_dims: Vec<usize>,
    /// Per-output clip bounds applied after the final affine layer; `None`
    /// leaves outputs unclipped. Clipping is never part of the training
    /// graph.
    pub bounds: Option<Vec<(T, T)>>,
}

impl<T: Real> PolicySpec<T> {
    pub fn new(layer_dims: Vec<usize>, bounds: Option<Vec<(T, T)>>) -> Self {
        Self { layer_dims, bounds }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "policy needs at least one layer".into(),
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.output_dim() {
                return Err(Error::DimensionMismatch {
                    context: "policy bounds",
                    expected: self.output_dim(),
                    got: b.len(),
                });
            }
            if b.iter().any(|(lo, hi)| !(*lo < *hi)) {
                return Err(Error::InvalidConfig("bounds need lo < hi".into()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Total parameter count m = sum over layers of (in*out + out).
    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Flattened parameters W in the canonical layout of a [`PolicySpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<T> {
    pub data: Vec<T>,
}

impl<T: Real> ParamVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> T {
        let mut acc = T::zero();
        for &x in &self.data {
            acc = acc + x * x;
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Gradient aligned entry-for-entry with a [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradVector<T> {
    pub data: Vec<T>,
}

impl<T: Real> GradVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }
}

/// Supervised pairs with dims matching the policy endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self, spec: &PolicySpec<T>) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::DimensionMismatch {
                context: "batch inputs vs targets",
                expected: self.inputs.len(),
                got: self.targets.len(),
            });
        }
        for x in &self.inputs {
            if x.len() != spec.input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "batch input",
                    expected: spec.input_dim(),
                    got: x.len(),
                });
            }
        }
        for y in &self.targets {
            if y.len() != spec.output_dim() {
                return Err(Error::DimensionMismatch {
                    context: "batch target",
                    expected: spec.output_dim(),
                    got: y.len(),
                });
            }
        }
        Ok(())
    }
}

/// Per-layer tensors used by [`flatten`] / [`unflatten`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    /// `weights[row][col]`, row = output unit.
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

/// Concatenates per-layer tensors into the canonical flat layout.
pub fn flatten<T: Real>(layers: &[LayerParams<T>]) -> ParamVector<T> {
    let mut data = Vec::new();
    for layer in layers {
        for row in &layer.weights {
            data.extend_from_slice(row);
        }
        data.extend_from_slice(&layer.bias);
    }
    ParamVector { data }
}

/// Splits a flat parameter vector back into per-layer tensors.
pub fn unflatten<T: Real>(spec: &PolicySpec<T>, w: &ParamVector<T>) -> Result<Vec<LayerParams<T>>> {
    check_param_len(spec, w)?;
    let mut layers = Vec::with_capacity(spec.num_layers());
    let mut off = 0;
    for dims in spec.layer_dims.windows(2) {
        let (fan_in, fan_out) = (dims[0], dims[1]);
        let mut weights = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            weights.push(w.data[off..off + fan_in].to_vec());
            off += fan_in;
        }
        let bias = w.data[off..off + fan_out].to_vec();
        off += fan_out;
        layers.push(LayerParams { weights, bias });
    }
    Ok(layers)
}

fn check_param_len<T: Real>(spec: &PolicySpec<T>, w: &ParamVector<T>) -> Result<()> {
    if w.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            context: "parameter vector",
            expected: spec.param_count(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Borrowed view of one layer inside the flat layout.
struct LayerView<'a, T> {
    w: &'a [T],
    b: &'a [T],
    fan_in: usize,
    fan_out: usize,
}

fn layer_views<'a, T: Real>(spec: &PolicySpec<T>, data: &'a [T]) -> Vec<LayerView<'a, T>> {
    let mut views = Vec::with_capacity(spec.num_layers());
    let mut off = 0;
    for dims in spec.layer_dims.windows(2) {
        let (fan_in, fan_out) = (dims[0], dims[1]);
        let w = &data[off..off + fan_in * fan_out];
        off += fan_in * fan_out;
        let b = &data[off..off + fan_out];
        off += fan_out;
        views.push(LayerView {
            w,
            b,
            fan_in,
            fan_out,
        });
    }
    views
}

/// Glorot-uniform weights, zero biases, drawn in canonical layout order
/// from xoshiro256** seeded with `seed`.
pub fn init_params<T: Real>(spec: &PolicySpec<T>, seed: u64) -> ParamVector<T> {
    let mut rng = Xoshiro256StarStar::new(seed);
    let mut data = Vec::with_capacity(spec.param_count());
    for dims in spec.layer_dims.windows(2) {
        let (fan_in, fan_out) = (dims[0], dims[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            data.push(T::lit(rng.uniform(-bound, bound)));
        }
        for _ in 0..fan_out {
            data.push(T::zero());
        }
    }
    ParamVector { data }
}

fn affine<T: Real>(layer: &LayerView<'_, T>, input: &[T], out: &mut Vec<T>) {
    out.clear();
    for row in 0..layer.fan_out {
        let mut acc = layer.b[row];
        let w_row = &layer.w[row * layer.fan_in..(row + 1) * layer.fan_in];
        for (wi, xi) in w_row.iter().zip(input) {
            acc = acc + *wi * *xi;
        }
        out.push(acc);
    }
}

/// Forward pass without output clipping.
pub fn forward_unclipped<T: Real>(
    spec: &PolicySpec<T>,
    w: &ParamVector<T>,
    input: &[T],
) -> Result<Vec<T>> {
    check_param_len(spec, w)?;
    if input.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: spec.input_dim(),
            got: input.len(),
        });
    }
    let views = layer_views(spec, &w.data);
    let mut cur = input.to_vec();
    let mut next = Vec::new();
    for (i, layer) in views.iter().enumerate() {
        affine(layer, &cur, &mut next);
        if i + 1 < views.len() {
            for v in next.iter_mut() {
                *v = v.tanh();
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Forward pass with the policy's output clipping applied.
pub fn forward<T: Real>(spec: &PolicySpec<T>, w: &ParamVector<T>, input: &[T]) -> Result<Vec<T>> {
    let mut out = forward_unclipped(spec, w, input)?;
    if let Some(bounds) = &spec.bounds {
        for (v, (lo, hi)) in out.iter_mut().zip(bounds) {
            if *v < *lo {
                *v = *lo;
            } else if *v > *hi {
                *v = *hi;
            }
        }
    }
    Ok(out)
}

/// Forward pass storing all activations: `acts[0]` is the input, `acts[i]`
/// the post-activation output of layer i (output layer is identity).
pub(crate) fn forward_trace<T: Real>(
    spec: &PolicySpec<T>,
    w: &ParamVector<T>,
    input: &[T],
) -> Vec<Vec<T>> {
    let views = layer_views(spec, &w.data);
    let mut acts = Vec::with_capacity(views.len() + 1);
    acts.push(input.to_vec());
    for (i, layer) in views.iter().enumerate() {
        let mut out = Vec::new();
        affine(layer, acts.last().unwrap(), &mut out);
        if i + 1 < views.len() {
            for v in out.iter_mut() {
                *v = v.tanh();
            }
        }
        acts.push(out);
    }
    acts
}

/// Reverse-mode sweep from `d_out` (gradient at the unclipped output).
/// Parameter gradients are accumulated into `grad`; returns the gradient
/// with respect to the input.
pub(crate) fn backward_from_trace<T: Real>(
    spec: &PolicySpec<T>,
    w: &ParamVector<T>,
    acts: &[Vec<T>],
    d_out: &[T],
    grad: &mut [T],
) -> Vec<T> {
    let views = layer_views(spec, &w.data);
    debug_assert_eq!(grad.len(), w.len());

    // Offsets of each layer inside the flat layout.
    let mut offsets = Vec::with_capacity(views.len());
    let mut off = 0;
    for v in &views {
        offsets.push(off);
        off += v.fan_in * v.fan_out + v.fan_out;
    }

    let mut delta = d_out.to_vec();
    for (i, layer) in views.iter().enumerate().rev() {
        // delta currently holds dL/d(post-activation of layer i); convert
        // to dL/d(pre-activation). The output layer is identity.
        if i + 1 < views.len() {
            let a = &acts[i + 1];
            for (d, ai) in delta.iter_mut().zip(a) {
                *d = *d * (T::one() - *ai * *ai);
            }
        }
        let input = &acts[i];
        let base = offsets[i];
        for row in 0..layer.fan_out {
            let g_row = &mut grad[base + row * layer.fan_in..base + (row + 1) * layer.fan_in];
            for (g, xi) in g_row.iter_mut().zip(input) {
                *g = *g + delta[row] * *xi;
            }
        }
        let b_base = base + layer.fan_in * layer.fan_out;
        for row in 0..layer.fan_out {
            grad[b_base + row] = grad[b_base + row] + delta[row];
        }
        // dL/d(input of layer i) = W^T delta
        let mut d_in = vec![T::zero(); layer.fan_in];
        for (row, d_row) in delta.iter().enumerate() {
            let w_row = &layer.w[row * layer.fan_in..(row + 1) * layer.fan_in];
            for (di, wi) in d_in.iter_mut().zip(w_row) {
                *di = *di + *wi * *d_row;
            }
        }
        delta = d_in;
    }
    delta
}

/// Mean squared error over the batch: sum over action entries, mean over
/// samples, evaluated on unclipped outputs.
pub fn mse<T: Real>(spec: &PolicySpec<T>, w: &ParamVector<T>, batch: &Batch<T>) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.validate(spec)?;
    check_param_len(spec, w)?;
    let mut total = T::zero();
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let out = forward_unclipped(spec, w, x)?;
        for (o, t) in out.iter().zip(y) {
            let d = *o - *t;
            total = total + d * d;
        }
    }
    Ok(total / T::from_usize(batch.len()).unwrap())
}

/// MSE loss and its exact gradient by reverse-mode accumulation through the
/// unclipped outputs. Samples are accumulated sequentially in batch order.
pub fn loss_and_grad<T: Real>(
    spec: &PolicySpec<T>,
    w: &ParamVector<T>,
    batch: &Batch<T>,
) -> Result<(T, GradVector<T>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.validate(spec)?;
    check_param_len(spec, w)?;

    let n = T::from_usize(batch.len()).unwrap();
    let two = T::lit(2.0);
    let mut grad = GradVector::zeros(w.len());
    let mut loss = T::zero();
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let acts = forward_trace(spec, w, x);
        let out = acts.last().unwrap();
        let mut d_out = Vec::with_capacity(out.len());
        for (o, t) in out.iter().zip(y) {
            let d = *o - *t;
            loss = loss + d * d;
            d_out.push(two * d / n);
        }
        backward_from_trace(spec, w, &acts, &d_out, &mut grad.data);
    }
    Ok((loss / n, grad))
}

/// Adam hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamHyper<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Default for AdamHyper<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

impl<T: Real> AdamHyper<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(
    w: &mut ParamVector<T>,
    grad: &GradVector<T>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper<T>,
) {
    assert_eq!(w.len(), grad.data.len(), "grad length mismatch");
    assert_eq!(w.len(), state.m.len(), "moment length mismatch");
    state.step += 1;
    let t = T::from_u64(state.step).unwrap();
    let bc1 = T::one() - hyper.beta1.powf(t);
    let bc2 = T::one() - hyper.beta2.powf(t);
    for i in 0..w.len() {
        let g = grad.data[i];
        state.m[i] = hyper.beta1 * state.m[i] + (T::one() - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (T::one() - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        w.data[i] = w.data[i] - hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}
