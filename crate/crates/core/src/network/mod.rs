//! Feature-extraction network: three locally connected sigmoid branches
//! over the (s0, dop, aop) feature maps, fused by two global sigmoid layers
//! into the orientation-encoding output, with analytic backpropagation of
//! the summed-squared-error loss.
//!
//! Layer order is fixed throughout (branch s0 x2, branch dop x2, branch
//! aop x2, fusion x2, output); the checkpoint format serializes weights in
//! exactly this order.

pub mod checkpoint;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Model};
pub use train::{fit, FitResult, TrainConfig, TrainReport, TrainSample};

use crate::encoding::{CodeVector, EncodingScheme, EncodingSpec};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAYER_COUNT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Sigmoid,
    Linear,
}

/// Widths of the network; the output activation is sigmoid for every
/// scheme except the unnormalized raw-degrees output, which is linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub branch_hidden1: usize,
    pub branch_hidden2: usize,
    pub fusion_hidden: usize,
    pub output_size: usize,
    pub output_activation: ActivationKind,
}

impl NetworkConfig {
    /// Desk-scale defaults (128/64 branch units, 256 fusion units) sized
    /// for the given feature grid and encoding spec.
    pub fn for_spec(grid_h: usize, grid_w: usize, spec: &EncodingSpec) -> Self {
        Self {
            grid_h,
            grid_w,
            branch_hidden1: 128,
            branch_hidden2: 64,
            fusion_hidden: 256,
            output_size: spec.code_len(),
            output_activation: if spec.scheme == EncodingScheme::Raw360 {
                ActivationKind::Linear
            } else {
                ActivationKind::Sigmoid
            },
        }
    }

    pub fn branch_input(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn feature_len(&self) -> usize {
        3 * self.branch_input()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("branch_hidden1", self.branch_hidden1),
            ("branch_hidden2", self.branch_hidden2),
            ("fusion_hidden", self.fusion_hidden),
            ("output_size", self.output_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be non-zero")));
            }
        }
        Ok(())
    }

    /// `(rows, cols)` of every layer in the fixed serialization order.
    pub fn layer_dims(&self) -> [(usize, usize); LAYER_COUNT] {
        let g = self.branch_input();
        let (b1, b2, f) = (self.branch_hidden1, self.branch_hidden2, self.fusion_hidden);
        [
            (b1, g),
            (b2, b1),
            (b1, g),
            (b2, b1),
            (b1, g),
            (b2, b1),
            (f, 3 * b2),
            (f, f),
            (self.output_size, f),
        ]
    }

    /// Whether a checkpoint trained under this config pairs with `spec`.
    pub fn matches_spec(&self, spec: &EncodingSpec) -> bool {
        self.output_size == spec.code_len()
            && self.output_activation
                == if spec.scheme == EncodingScheme::Raw360 {
                    ActivationKind::Linear
                } else {
                    ActivationKind::Sigmoid
                }
    }
}

/// One dense layer, weights row-major `[rows x cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
            rows,
            cols,
        }
    }

    fn forward_into(&self, input: &[f64], activation: ActivationKind, out: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.cols);
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut z = self.bias[r];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            out.push(match activation {
                ActivationKind::Sigmoid => sigmoid(z),
                ActivationKind::Linear => z,
            });
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// All trainable parameters, layers in the fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self {
            layers: config
                .layer_dims()
                .iter()
                .map(|&(r, c)| Layer::zeros(r, c))
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Read parameter `i` of the flattened (weights then bias, layer by
    /// layer) vector. Used by the finite-difference oracle.
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for layer in &self.layers {
            if i < layer.weights.len() {
                return layer.weights[i];
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for layer in &mut self.layers {
            if i < layer.weights.len() {
                layer.weights[i] = value;
                return;
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                layer.bias[i] = value;
                return;
            }
            i -= layer.bias.len();
        }
        panic!("flat index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Glorot-uniform initialization, `U(+-sqrt(6 / (fan_in + fan_out)))`,
/// zero biases; fully determined by the seed.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layer_dims()
        .iter()
        .map(|&(rows, cols)| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Layer {
                weights: (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
                bias: vec![0.0; rows],
                rows,
                cols,
            }
        })
        .collect();
    Ok(NetworkParams { layers })
}

/// Post-activation values of every layer, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub features: Vec<f64>,
    /// Outputs of the 9 layers in order; `activations[8]` is the network output.
    pub activations: Vec<Vec<f64>>,
    /// Concatenated branch outputs feeding the first fusion layer.
    pub fused_input: Vec<f64>,
}

fn check_shapes(params: &NetworkParams, config: &NetworkConfig, features: &[f64]) -> Result<()> {
    if features.len() != config.feature_len() {
        return Err(Error::DimensionMismatch(format!(
            "feature length {} does not match 3 x {} x {}",
            features.len(),
            config.grid_h,
            config.grid_w
        )));
    }
    if params.layers.len() != LAYER_COUNT {
        return Err(Error::DimensionMismatch(format!(
            "expected {LAYER_COUNT} layers, got {}",
            params.layers.len()
        )));
    }
    for (layer, (rows, cols)) in params.layers.iter().zip(config.layer_dims()) {
        if layer.rows != rows || layer.cols != cols {
            return Err(Error::DimensionMismatch(format!(
                "layer is {}x{}, config wants {rows}x{cols}",
                layer.rows, layer.cols
            )));
        }
    }
    Ok(())
}

/// Run the network, returning the output and the activation cache.
///
/// Each branch sees only its own map: s0 cells feed layers 0-1, dop cells
/// layers 2-3, aop cells layers 4-5.
pub fn forward_cached(
    params: &NetworkParams,
    config: &NetworkConfig,
    features: &[f64],
) -> Result<(CodeVector, ForwardCache)> {
    check_shapes(params, config, features)?;
    let g = config.branch_input();
    let mut activations: Vec<Vec<f64>> = vec![Vec::new(); LAYER_COUNT];
    for branch in 0..3 {
        let input = &features[branch * g..(branch + 1) * g];
        let (l1, l2) = (2 * branch, 2 * branch + 1);
        let mut a1 = Vec::new();
        params.layers[l1].forward_into(input, ActivationKind::Sigmoid, &mut a1);
        let mut a2 = Vec::new();
        params.layers[l2].forward_into(&a1, ActivationKind::Sigmoid, &mut a2);
        activations[l1] = a1;
        activations[l2] = a2;
    }
    let mut fused_input = Vec::with_capacity(3 * config.branch_hidden2);
    for branch in 0..3 {
        fused_input.extend_from_slice(&activations[2 * branch + 1]);
    }
    let mut f1 = Vec::new();
    params.layers[6].forward_into(&fused_input, ActivationKind::Sigmoid, &mut f1);
    let mut f2 = Vec::new();
    params.layers[7].forward_into(&f1, ActivationKind::Sigmoid, &mut f2);
    let mut out = Vec::new();
    params.layers[8].forward_into(&f2, config.output_activation, &mut out);
    activations[6] = f1;
    activations[7] = f2;
    activations[8] = out.clone();
    Ok((
        CodeVector(out),
        ForwardCache {
            features: features.to_vec(),
            activations,
            fused_input,
        },
    ))
}

/// Run the network without keeping activations.
pub fn forward(
    params: &NetworkParams,
    config: &NetworkConfig,
    features: &[f64],
) -> Result<CodeVector> {
    forward_cached(params, config, features).map(|(code, _)| code)
}

/// Gradients share the parameter layout.
pub type Gradients = NetworkParams;

fn layer_grad(
    input: &[f64],
    delta: &[f64],
    grad: &mut Layer,
) {
    for (r, &d) in delta.iter().enumerate() {
        let row = &mut grad.weights[r * grad.cols..(r + 1) * grad.cols];
        for (w, &x) in row.iter_mut().zip(input) {
            *w += d * x;
        }
        grad.bias[r] += d;
    }
}

/// Propagate `delta` (dL/dz of a layer) back to dL/d(input activation).
fn backprop_delta(layer: &Layer, delta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; layer.cols];
    for (r, &d) in delta.iter().enumerate() {
        let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += d * w;
        }
    }
    out
}

fn sigmoid_backward(upstream: &[f64], activation: &[f64]) -> Vec<f64> {
    upstream
        .iter()
        .zip(activation)
        .map(|(u, a)| u * a * (1.0 - a))
        .collect()
}

/// Analytic gradients of the summed-squared-error loss with respect to all
/// parameters, accumulated into `grads` (callers zero or reuse across a
/// batch).
pub fn backward_accumulate(
    params: &NetworkParams,
    config: &NetworkConfig,
    cache: &ForwardCache,
    target: &CodeVector,
    grads: &mut Gradients,
) -> Result<f64> {
    let output = &cache.activations[8];
    if target.len() != output.len() {
        return Err(Error::DimensionMismatch(format!(
            "target length {} does not match output {}",
            target.len(),
            output.len()
        )));
    }
    let mut loss = 0.0;
    let residual: Vec<f64> = output
        .iter()
        .zip(&target.0)
        .map(|(y, t)| {
            let r = y - t;
            loss += r * r;
            2.0 * r
        })
        .collect();
    let delta_out = match config.output_activation {
        ActivationKind::Sigmoid => sigmoid_backward(&residual, output),
        ActivationKind::Linear => residual,
    };
    layer_grad(&cache.activations[7], &delta_out, &mut grads.layers[8]);

    let up_f2 = backprop_delta(&params.layers[8], &delta_out);
    let delta_f2 = sigmoid_backward(&up_f2, &cache.activations[7]);
    layer_grad(&cache.activations[6], &delta_f2, &mut grads.layers[7]);

    let up_f1 = backprop_delta(&params.layers[7], &delta_f2);
    let delta_f1 = sigmoid_backward(&up_f1, &cache.activations[6]);
    layer_grad(&cache.fused_input, &delta_f1, &mut grads.layers[6]);

    let up_fused = backprop_delta(&params.layers[6], &delta_f1);
    let g = config.branch_input();
    let b2 = config.branch_hidden2;
    for branch in 0..3 {
        let (l1, l2) = (2 * branch, 2 * branch + 1);
        let up_a2 = &up_fused[branch * b2..(branch + 1) * b2];
        let delta_a2 = sigmoid_backward(up_a2, &cache.activations[l2]);
        layer_grad(&cache.activations[l1], &delta_a2, &mut grads.layers[l2]);

        let up_a1 = backprop_delta(&params.layers[l2], &delta_a2);
        let delta_a1 = sigmoid_backward(&up_a1, &cache.activations[l1]);
        layer_grad(&cache.features[branch * g..(branch + 1) * g], &delta_a1, &mut grads.layers[l1]);
    }
    Ok(loss)
}

/// Single-sample gradients of the loss.
pub fn backward(
    params: &NetworkParams,
    config: &NetworkConfig,
    cache: &ForwardCache,
    target: &CodeVector,
) -> Result<Gradients> {
    let mut grads = NetworkParams::zeros(config);
    backward_accumulate(params, config, cache, target, &mut grads)?;
    Ok(grads)
}
