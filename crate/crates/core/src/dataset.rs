//! Labeled samples, deterministic splits, and input normalization.
//!
//! A sample pairs the network input matrix (pilot order column plus
//! large-scale fading in dB) with the solver's optimal power vector. The
//! on-disk container and parallel generation live in the companion crate;
//! this module owns the in-memory layout and the math.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::channel::NetworkRealization;
use crate::mat::Mat;

/// One labeled sample.
///
/// `input` is `users x (aps + 1)`: column 0 holds the pilot order vector as
/// reals, columns `1..=aps` the fading to each AP in dB. Only the fields
/// below are persisted by the container; derived quantities (per-user rates,
/// convergence flags) stay with the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Mat,
    /// Solver powers, each in `[p_min, 1]`.
    pub label: Vec<f64>,
    /// Seed the underlying realization was drawn from.
    pub seed: u64,
    /// Solver objective at the label (with filters re-derived from it).
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetError {
    /// Requested split sizes exceed the available sample count.
    SplitOverflow,
    /// A split that must be nonempty is empty.
    EmptySplit,
    /// A fading column has (numerically) zero variance; carries the AP index.
    DegenerateColumn(usize),
    /// Inputs disagree on their dimensions.
    ShapeMismatch,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::SplitOverflow => write!(f, "split sizes exceed sample count"),
            DatasetError::EmptySplit => write!(f, "split must be nonempty"),
            DatasetError::DegenerateColumn(c) => {
                write!(f, "fading column {c} has zero variance")
            }
            DatasetError::ShapeMismatch => write!(f, "inconsistent input dimensions"),
        }
    }
}

impl core::error::Error for DatasetError {}

/// Builds the network input matrix for a realization: row k is
/// `[mu_k, 10*log10(beta_1k), ..., 10*log10(beta_Mk)]`.
///
/// Fading goes in as dB because the linear coefficients span ten orders of
/// magnitude, which would saturate any bounded activation.
pub fn build_input(real: &NetworkRealization) -> Mat {
    let aps = real.beta.rows();
    let users = real.beta.cols();
    let mut input = Mat::zeros(users, aps + 1);
    for k in 0..users {
        let row = input.row_mut(k);
        row[0] = real.mu[k] as f64;
        for m in 0..aps {
            row[m + 1] = 10.0 * libm::log10(real.beta.at(m, k));
        }
    }
    input
}

/// Train, validation, and test index ranges, in file order.
pub type SplitRanges = (Range<usize>, Range<usize>, Range<usize>);

/// Deterministic, order-preserving index split: the first `train_n` samples,
/// then `val_n`, then `test_n`.
pub fn split(
    count: usize,
    train_n: usize,
    val_n: usize,
    test_n: usize,
) -> Result<SplitRanges, DatasetError> {
    let total = train_n
        .checked_add(val_n)
        .and_then(|s| s.checked_add(test_n))
        .ok_or(DatasetError::SplitOverflow)?;
    if total > count {
        return Err(DatasetError::SplitOverflow);
    }
    Ok((0..train_n, train_n..train_n + val_n, train_n + val_n..total))
}

/// Input scaling fitted on the training split only.
///
/// Fading columns are z-scored per AP (statistics pooled over training
/// samples and users); the pilot order column is mapped to `mu / pilot_len`,
/// landing in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    /// Per-AP mean of the dB fading features.
    pub mean: Vec<f64>,
    /// Per-AP standard deviation (population), strictly positive.
    pub std: Vec<f64>,
    /// `1 / pilot_len`.
    pub pov_scale: f64,
}

impl NormalizationStats {
    /// Fits statistics over the given training inputs.
    pub fn fit(inputs: &[&Mat], pilot_len: usize) -> Result<Self, DatasetError> {
        let first = inputs.first().ok_or(DatasetError::EmptySplit)?;
        let users = first.rows();
        let width = first.cols();
        let aps = width - 1;
        let n = (inputs.len() * users) as f64;
        let mut mean = vec![0.0; aps];
        let mut sq = vec![0.0; aps];
        for input in inputs {
            if input.rows() != users || input.cols() != width {
                return Err(DatasetError::ShapeMismatch);
            }
            for k in 0..users {
                let row = input.row(k);
                for m in 0..aps {
                    mean[m] += row[m + 1];
                    sq[m] += row[m + 1] * row[m + 1];
                }
            }
        }
        let mut std = vec![0.0; aps];
        for m in 0..aps {
            mean[m] /= n;
            let var = (sq[m] / n - mean[m] * mean[m]).max(0.0);
            std[m] = libm::sqrt(var);
            if std[m] < 1e-12 {
                return Err(DatasetError::DegenerateColumn(m));
            }
        }
        Ok(Self {
            mean,
            std,
            pov_scale: 1.0 / pilot_len as f64,
        })
    }

    /// Normalizes an input matrix.
    pub fn apply(&self, input: &Mat) -> Mat {
        let users = input.rows();
        let width = input.cols();
        let mut out = Mat::zeros(users, width);
        for k in 0..users {
            let src = input.row(k);
            let dst = out.row_mut(k);
            dst[0] = src[0] * self.pov_scale;
            for m in 0..width - 1 {
                dst[m + 1] = (src[m + 1] - self.mean[m]) / self.std[m];
            }
        }
        out
    }

    /// Exact inverse of [`apply`](Self::apply).
    pub fn invert(&self, normalized: &Mat) -> Mat {
        let users = normalized.rows();
        let width = normalized.cols();
        let mut out = Mat::zeros(users, width);
        for k in 0..users {
            let src = normalized.row(k);
            let dst = out.row_mut(k);
            dst[0] = src[0] / self.pov_scale;
            for m in 0..width - 1 {
                dst[m + 1] = src[m + 1] * self.std[m] + self.mean[m];
            }
        }
        out
    }
}
