//! Mini-batch Adam training and the inference-plus-refinement path.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{NetworkConfig, NetworkRealization};
use crate::dataset::NormalizationStats;
use crate::mat::Mat;
use crate::metrics::net_se;
use crate::seed::mix_seed;
use crate::solver;

use super::net::{backward, forward};
use super::{adam_step, AdamState, ParameterTensors, RdnConfig, RdnError, TrainConfig};

/// Normalized inputs paired with their power labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<Mat>,
    pub labels: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Per-epoch bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

/// Trained parameters plus the learning curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub params: ParameterTensors,
    pub curve: Vec<EpochStats>,
}

/// Root of the mean squared per-sample error norm over a whole set.
fn set_rmse(params: &ParameterTensors, set: &TrainingSet) -> f64 {
    let mut acc = 0.0;
    for (input, label) in set.inputs.iter().zip(&set.labels) {
        let (out, _) = forward(params, input).expect("validated shapes");
        acc += out
            .iter()
            .zip(label)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    libm::sqrt(acc / set.len() as f64)
}

fn validate_set(set: &TrainingSet, cfg: &RdnConfig) -> Result<(), RdnError> {
    if set.is_empty() {
        return Err(RdnError::EmptySplit);
    }
    if set.inputs.len() != set.labels.len() {
        return Err(RdnError::ShapeMismatch);
    }
    for (input, label) in set.inputs.iter().zip(&set.labels) {
        if input.rows() != cfg.users || input.cols() != cfg.aps + 1 || label.len() != cfg.users {
            return Err(RdnError::ShapeMismatch);
        }
    }
    Ok(())
}

/// Trains the network on pre-normalized inputs.
///
/// Mini-batches are drawn by a seeded shuffle each epoch, the final partial
/// batch is kept (gradients average over the actual batch size), the
/// learning rate follows the step-drop schedule, and the parameters of the
/// best-validation epoch are returned. Fully deterministic in
/// `(sets, configs, seed)`.
pub fn train(
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    cfg: &RdnConfig,
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, RdnError> {
    cfg.validate()?;
    tcfg.validate()?;
    validate_set(train_set, cfg)?;
    validate_set(val_set, cfg)?;

    let mut params = super::init_parameters(cfg, mix_seed(seed, 0));
    let shuffle_seed = tcfg.shuffle_seed.unwrap_or_else(|| mix_seed(seed, 1));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut state = AdamState::new(params.len());

    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();

    for epoch in 1..=tcfg.epochs {
        let lr = tcfg.lr_at_epoch(epoch);
        indices.shuffle(&mut shuffle_rng);
        for batch in indices.chunks(tcfg.batch_size) {
            let mut grads = vec![0.0; params.len()];
            for &i in batch {
                let input = &train_set.inputs[i];
                let (_, cache) = forward(&params, input).expect("validated shapes");
                let sample_grad = backward(&params, input, &cache, &train_set.labels[i]);
                for (acc, g) in grads.iter_mut().zip(&sample_grad) {
                    *acc += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            adam_step(
                &mut params,
                &grads,
                &mut state,
                lr,
                tcfg.adam_beta1,
                tcfg.adam_beta2,
                tcfg.adam_epsilon,
            );
        }
        let train_rmse = set_rmse(&params, train_set);
        let val_rmse = set_rmse(&params, val_set);
        curve.push(EpochStats {
            epoch,
            lr,
            train_rmse,
            val_rmse,
        });
        if val_rmse < best_val {
            best_val = val_rmse;
            best_params = params.clone();
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        curve,
    })
}

/// Predicted powers with the filters and rates they earn.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub powers: Vec<f64>,
    pub filters: solver::ReceiverFilters,
    /// Per-user net spectral efficiencies (bits/s/Hz).
    pub net_rates: Vec<f64>,
}

/// Runs the network on a realization and refines: predicted powers feed one
/// closed-form filter pass, and the reported rates are evaluated at that
/// filter/power pair with the pilot-overhead discount applied.
pub fn predict_and_refine(
    params: &ParameterTensors,
    stats: &NormalizationStats,
    real: &NetworkRealization,
    net_cfg: &NetworkConfig,
) -> Result<Refinement, RdnError> {
    let cfg = &params.cfg;
    if real.beta.rows() != cfg.aps || real.beta.cols() != cfg.users {
        return Err(RdnError::ShapeMismatch);
    }
    let input = stats.apply(&crate::dataset::build_input(real));
    let (powers, _) = forward(params, &input)?;
    let forms = solver::build_quadratic_forms(real)?;
    let filters = solver::compute_filters(&powers, &forms, real.rho)?;
    let coeffs = solver::sinr_coefficients(&filters, &forms, real.rho);
    let net_rates: Vec<f64> = (0..cfg.users)
        .map(|k| {
            net_se(
                solver::rate(&powers, &coeffs, k),
                net_cfg.pilot_len,
                net_cfg.coherence_len,
            )
        })
        .collect();
    Ok(Refinement {
        powers,
        filters,
        net_rates,
    })
}
