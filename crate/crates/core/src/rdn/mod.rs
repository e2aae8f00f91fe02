//! PowerRDN: a residual dense network predicting optimal transmit powers.
//!
//! The network maps the `users x (aps+1)` input matrix (pilot order column
//! plus normalized fading features) to one power per user:
//!
//! * feature extraction: a `1 x (aps+1)` convolution collapses each user's
//!   feature row into `growth` channels (valid padding, inner activation);
//! * one residual dense block: `dense_layers` densely connected `3x3`
//!   convolutions (same padding; the width axis is singleton, so each layer
//!   mixes a user with its two neighbors), a `1x1` linear fusion back to
//!   `growth` channels, and a local residual add;
//! * feature reinforcement: a `3x3` convolution to a single channel and a
//!   bounded output activation, keeping every predicted power in `(0, 1)`.
//!
//! Kernels are allocated at their full `3x3` footprint; with a width-one
//! feature map only the center column ever touches data, and the parameter
//! accounting in [`count_parameters`] counts the full footprint.
//!
//! The backward pass is exact (see [`backward`]), training uses Adam on the
//! batch-mean squared error, and everything is deterministic in its seeds.

mod net;
mod train;

pub use net::{backward, forward, ForwardCache};
pub use train::{predict_and_refine, train, EpochStats, Refinement, TrainOutcome, TrainingSet};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::solver::SolverError;

/// Inner (hidden-layer) activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub(crate) fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output activation; both map into `(0, 1)` so the power constraint holds
/// by construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Sigmoid,
    /// `(tanh(z) + 1) / 2`.
    TanhRescaled,
}

impl OutputActivation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            OutputActivation::TanhRescaled => (libm::tanh(z) + 1.0) / 2.0,
        }
    }

    #[inline]
    pub(crate) fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => a * (1.0 - a),
            OutputActivation::TanhRescaled => {
                let t = 2.0 * a - 1.0;
                (1.0 - t * t) / 2.0
            }
        }
    }
}

/// Network architecture and the geometry it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdnConfig {
    /// Growth rate: feature maps contributed by every convolution.
    pub growth: usize,
    /// Dense layers inside the residual dense block.
    pub dense_layers: usize,
    /// AP count the input features correspond to.
    pub aps: usize,
    /// User count (input rows, output length).
    pub users: usize,
    /// Pilot count, fixed by the pilot-order input column.
    pub pilot_len: usize,
    pub inner_activation: Activation,
    pub output_activation: OutputActivation,
}

impl RdnConfig {
    pub fn validate(&self) -> Result<(), RdnError> {
        if self.growth == 0 || self.dense_layers == 0 {
            return Err(RdnError::InvalidConfig(
                "growth and dense_layers must be >= 1",
            ));
        }
        if self.aps == 0 || self.users == 0 || self.pilot_len == 0 {
            return Err(RdnError::InvalidConfig("geometry must be nonzero"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RdnError {
    InvalidConfig(&'static str),
    /// Input dimensions disagree with the configuration.
    ShapeMismatch,
    /// A training split is empty.
    EmptySplit,
    /// The refinement step's solver failed.
    Solver(SolverError),
}

impl fmt::Display for RdnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RdnError::InvalidConfig(msg) => write!(f, "invalid network config: {msg}"),
            RdnError::ShapeMismatch => write!(f, "input shape mismatch"),
            RdnError::EmptySplit => write!(f, "training split is empty"),
            RdnError::Solver(e) => write!(f, "filter refinement failed: {e}"),
        }
    }
}

impl core::error::Error for RdnError {}

impl From<SolverError> for RdnError {
    fn from(e: SolverError) -> Self {
        RdnError::Solver(e)
    }
}

/// Parameter accounting split into weights and biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterCount {
    pub weights: usize,
    pub biases: usize,
    pub total: usize,
}

/// Trainable-parameter count per the layer-by-layer accounting:
/// `G(M+1) + 9 G^2 L(L+1)/2 + (L+1)G^2 + 9G` weights and
/// `G + LG + G + 1` biases.
pub fn count_parameters(cfg: &RdnConfig) -> ParameterCount {
    let g = cfg.growth;
    let l = cfg.dense_layers;
    let m = cfg.aps;
    let weights = g * (m + 1) + 9 * g * g * (l * (l + 1) / 2) + (l + 1) * g * g + 9 * g;
    let biases = g + l * g + g + 1;
    ParameterCount {
        weights,
        biases,
        total: weights + biases,
    }
}

/// All trainable parameters in one flat buffer.
///
/// Declaration order (also the checkpoint serialization order): feature
/// extraction kernel and bias, each dense layer's kernel and bias, fusion
/// kernel and bias, reinforcement kernel and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTensors {
    pub cfg: RdnConfig,
    data: Vec<f64>,
}

/// Byte offsets of each tensor inside the flat buffer.
pub(crate) struct Layout {
    pub fel_w: usize,
    pub fel_b: usize,
    /// Per dense layer: (kernel offset, bias offset, input channels).
    pub rdb: Vec<(usize, usize, usize)>,
    pub fus_w: usize,
    pub fus_b: usize,
    pub frl_w: usize,
    pub frl_b: usize,
    pub total: usize,
}

pub(crate) fn layout(cfg: &RdnConfig) -> Layout {
    let g = cfg.growth;
    let m = cfg.aps;
    let mut off = 0;
    let fel_w = off;
    off += g * (m + 1);
    let fel_b = off;
    off += g;
    let mut rdb = Vec::with_capacity(cfg.dense_layers);
    for layer in 1..=cfg.dense_layers {
        let cin = layer * g;
        let w = off;
        off += g * 9 * cin;
        let b = off;
        off += g;
        rdb.push((w, b, cin));
    }
    let fus_w = off;
    off += g * (cfg.dense_layers + 1) * g;
    let fus_b = off;
    off += g;
    let frl_w = off;
    off += 9 * g;
    let frl_b = off;
    off += 1;
    Layout {
        fel_w,
        fel_b,
        rdb,
        fus_w,
        fus_b,
        frl_w,
        frl_b,
        total: off,
    }
}

impl ParameterTensors {
    /// Zero-initialized tensors (useful for tests and as an Adam template).
    pub fn zeros(cfg: RdnConfig) -> Self {
        let total = layout(&cfg).total;
        Self {
            cfg,
            data: vec![0.0; total],
        }
    }

    pub fn from_flat(cfg: RdnConfig, data: Vec<f64>) -> Result<Self, RdnError> {
        if data.len() != layout(&cfg).total {
            return Err(RdnError::ShapeMismatch);
        }
        Ok(Self { cfg, data })
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Draws fresh parameters: every kernel uniform on `(-s, s)` with
/// `s = sqrt(6 / (fan_in + fan_out))` (fans include the kernel footprint),
/// biases zero. Deterministic in `seed`.
pub fn init_parameters(cfg: &RdnConfig, seed: u64) -> ParameterTensors {
    let lay = layout(cfg);
    let g = cfg.growth;
    let m = cfg.aps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; lay.total];
    let fill = |range: core::ops::Range<usize>,
                fan_in: usize,
                fan_out: usize,
                data: &mut [f64],
                rng: &mut ChaCha8Rng| {
        let s = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        for v in &mut data[range] {
            *v = s * (2.0 * rng.random::<f64>() - 1.0);
        }
    };
    fill(
        lay.fel_w..lay.fel_w + g * (m + 1),
        m + 1,
        g * (m + 1),
        &mut data,
        &mut rng,
    );
    for &(w, _, cin) in &lay.rdb {
        fill(w..w + g * 9 * cin, 9 * cin, 9 * g, &mut data, &mut rng);
    }
    let fus_cin = (cfg.dense_layers + 1) * g;
    fill(
        lay.fus_w..lay.fus_w + g * fus_cin,
        fus_cin,
        g,
        &mut data,
        &mut rng,
    );
    fill(lay.frl_w..lay.frl_w + 9 * g, 9 * g, 9, &mut data, &mut rng);
    ParameterTensors {
        cfg: cfg.clone(),
        data,
    }
}

/// Euclidean norm of the prediction error.
pub fn rmse(target: &[f64], predicted: &[f64]) -> f64 {
    debug_assert_eq!(target.len(), predicted.len());
    libm::sqrt(
        target
            .iter()
            .zip(predicted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
    )
}

/// Adam moment estimates mirroring one parameter buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    /// Completed steps; drives bias correction.
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParameterTensors,
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    debug_assert_eq!(grads.len(), params.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(beta1, t as f64);
    let bc2 = 1.0 - libm::pow(beta2, t as f64);
    for ((p, g), (m, v)) in params
        .data
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
    }
}

/// Hyperparameters of the training loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied every `lr_drop_period` epochs.
    pub lr_drop_factor: f64,
    /// Epochs between drops; 0 disables the schedule.
    pub lr_drop_period: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Epoch-shuffle seed; derived from the training seed when absent.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 128,
            learning_rate: 1e-4,
            lr_drop_factor: 0.1,
            lr_drop_period: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            shuffle_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RdnError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(RdnError::InvalidConfig(
                "epochs and batch_size must be >= 1",
            ));
        }
        if self.learning_rate <= 0.0 || self.lr_drop_factor <= 0.0 {
            return Err(RdnError::InvalidConfig("learning rates must be > 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(RdnError::InvalidConfig("adam betas must be in [0,1)"));
        }
        if self.adam_epsilon <= 0.0 {
            return Err(RdnError::InvalidConfig("adam_epsilon must be > 0"));
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch index under the step-drop schedule.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        if self.lr_drop_period == 0 {
            return self.learning_rate;
        }
        let drops = (epoch - 1) / self.lr_drop_period;
        self.learning_rate * libm::pow(self.lr_drop_factor, drops as f64)
    }
}
