//! Forward pass and exact analytic backward pass.
//!
//! Feature maps are stored channel-major: `map[c * users + k]`. The dense
//! block keeps all activations in one growing stack, so "concatenation" is
//! just reading a longer prefix of the stack and no copies are made. The
//! width-3 convolutions stream over contiguous channel rows, one kernel tap
//! at a time.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;

use super::{layout, ParameterTensors, RdnError};

/// `z[k] += w * src[k + dy - 1]` with zero padding, one tap of a width-3
/// kernel along the user axis.
#[inline]
fn conv3_tap(z: &mut [f64], src: &[f64], w: f64, dy: usize) {
    let n = z.len();
    match dy {
        0 => {
            for k in 1..n {
                z[k] += w * src[k - 1];
            }
        }
        1 => {
            for k in 0..n {
                z[k] += w * src[k];
            }
        }
        _ => {
            for k in 0..n.saturating_sub(1) {
                z[k] += w * src[k + 1];
            }
        }
    }
}

/// Transposed tap: scatters `dz` back into `d_src` and returns the weight
/// gradient `sum_k dz[k] * src[k + dy - 1]`.
#[inline]
fn conv3_tap_backward(dz: &[f64], src: &[f64], d_src: &mut [f64], w: f64, dy: usize) -> f64 {
    let n = dz.len();
    let mut acc = 0.0;
    match dy {
        0 => {
            for k in 1..n {
                acc += dz[k] * src[k - 1];
                d_src[k - 1] += dz[k] * w;
            }
        }
        1 => {
            for k in 0..n {
                acc += dz[k] * src[k];
                d_src[k] += dz[k] * w;
            }
        }
        _ => {
            for k in 0..n.saturating_sub(1) {
                acc += dz[k] * src[k + 1];
                d_src[k + 1] += dz[k] * w;
            }
        }
    }
    acc
}

/// Activations retained by [`forward`] for the backward pass.
pub struct ForwardCache {
    /// All dense-block activations: blocks `0..=dense_layers`, each
    /// `growth x users`, block 0 being the feature-extraction output.
    stack: Vec<f64>,
    /// Residual output (block 0 plus fusion), `growth x users`.
    fused: Vec<f64>,
    /// Network output, one power per user.
    output: Vec<f64>,
}

impl ForwardCache {
    #[inline]
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Runs the network on a normalized input matrix, returning the predicted
/// powers and the cached activations.
pub fn forward(
    params: &ParameterTensors,
    input: &Mat,
) -> Result<(Vec<f64>, ForwardCache), RdnError> {
    let cfg = &params.cfg;
    if input.cols() != cfg.aps + 1 || input.rows() != cfg.users {
        return Err(RdnError::ShapeMismatch);
    }
    let g = cfg.growth;
    let users = cfg.users;
    let layers = cfg.dense_layers;
    let width = cfg.aps + 1;
    let lay = layout(cfg);
    let w = params.as_slice();
    let act = cfg.inner_activation;

    let mut stack = vec![0.0; (layers + 1) * g * users];
    let mut z = vec![0.0; users];

    // Feature extraction: one valid 1 x (aps+1) kernel per channel collapses
    // each user's feature row to a scalar.
    for c in 0..g {
        let kernel = &w[lay.fel_w + c * width..lay.fel_w + (c + 1) * width];
        let bias = w[lay.fel_b + c];
        let out = &mut stack[c * users..(c + 1) * users];
        for (k, o) in out.iter_mut().enumerate() {
            let dot: f64 = kernel.iter().zip(input.row(k)).map(|(a, b)| a * b).sum();
            *o = act.apply(bias + dot);
        }
    }

    // Dense layers: layer l reads the first l*growth channels of the stack
    // and appends growth more. Same padding along users; only the center
    // kernel column sees data because the width axis is singleton.
    for (layer, &(w_off, b_off, cin)) in lay.rdb.iter().enumerate() {
        let (read, write) = stack.split_at_mut((layer + 1) * g * users);
        for c in 0..g {
            z.fill(w[b_off + c]);
            for dy in 0..3usize {
                let kbase = w_off + ((c * 3 + dy) * 3 + 1) * cin;
                for ci in 0..cin {
                    conv3_tap(
                        &mut z,
                        &read[ci * users..(ci + 1) * users],
                        w[kbase + ci],
                        dy,
                    );
                }
            }
            let out = &mut write[c * users..(c + 1) * users];
            for (o, &zv) in out.iter_mut().zip(z.iter()) {
                *o = act.apply(zv);
            }
        }
    }

    // Linear 1x1 fusion over all blocks, then the local residual add.
    let fus_cin = (layers + 1) * g;
    let mut fused = vec![0.0; g * users];
    for c in 0..g {
        z.fill(w[lay.fus_b + c]);
        let kernel = &w[lay.fus_w + c * fus_cin..lay.fus_w + (c + 1) * fus_cin];
        for (ci, &kw) in kernel.iter().enumerate() {
            conv3_tap(&mut z, &stack[ci * users..(ci + 1) * users], kw, 1);
        }
        let out = &mut fused[c * users..(c + 1) * users];
        let block0 = &stack[c * users..(c + 1) * users];
        for k in 0..users {
            out[k] = block0[k] + z[k];
        }
    }

    // Feature reinforcement down to a single channel.
    let mut zout = vec![w[lay.frl_b]; users];
    for dy in 0..3usize {
        let kbase = lay.frl_w + (dy * 3 + 1) * g;
        for c in 0..g {
            conv3_tap(
                &mut zout,
                &fused[c * users..(c + 1) * users],
                w[kbase + c],
                dy,
            );
        }
    }
    let output: Vec<f64> = zout
        .iter()
        .map(|&zv| cfg.output_activation.apply(zv))
        .collect();

    let cache = ForwardCache {
        stack,
        fused,
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Gradient of the squared error `||output - target||^2` with respect to
/// every parameter, in the flat parameter layout.
///
/// Dense concatenation fans the gradient of each block out to every later
/// consumer: the dense layers that read it, the fusion, and (for block 0)
/// the residual connection.
pub fn backward(
    params: &ParameterTensors,
    input: &Mat,
    cache: &ForwardCache,
    target: &[f64],
) -> Vec<f64> {
    let cfg = &params.cfg;
    let g = cfg.growth;
    let users = cfg.users;
    let layers = cfg.dense_layers;
    let width = cfg.aps + 1;
    let lay = layout(cfg);
    let w = params.as_slice();
    let act = cfg.inner_activation;
    debug_assert_eq!(target.len(), users);

    let mut grad = vec![0.0; lay.total];

    // Loss and output activation.
    let mut d_z_out = vec![0.0; users];
    for k in 0..users {
        let a = cache.output[k];
        let d_loss = 2.0 * (a - target[k]);
        d_z_out[k] = d_loss * cfg.output_activation.derivative_from_output(a);
    }

    // Feature reinforcement.
    grad[lay.frl_b] = d_z_out.iter().sum();
    let mut d_fused = vec![0.0; g * users];
    for dy in 0..3usize {
        let kbase = lay.frl_w + (dy * 3 + 1) * g;
        for c in 0..g {
            grad[kbase + c] = conv3_tap_backward(
                &d_z_out,
                &cache.fused[c * users..(c + 1) * users],
                &mut d_fused[c * users..(c + 1) * users],
                w[kbase + c],
                dy,
            );
        }
    }

    // Residual add feeds block 0 directly and the fusion output.
    let mut d_stack = vec![0.0; (layers + 1) * g * users];
    d_stack[..g * users].copy_from_slice(&d_fused);

    // Fusion (linear).
    let fus_cin = (layers + 1) * g;
    for c in 0..g {
        let dz = &d_fused[c * users..(c + 1) * users];
        grad[lay.fus_b + c] = dz.iter().sum();
        let kernel = &w[lay.fus_w + c * fus_cin..lay.fus_w + (c + 1) * fus_cin];
        for ci in 0..fus_cin {
            grad[lay.fus_w + c * fus_cin + ci] = conv3_tap_backward(
                dz,
                &cache.stack[ci * users..(ci + 1) * users],
                &mut d_stack[ci * users..(ci + 1) * users],
                kernel[ci],
                1,
            );
        }
    }

    // Dense layers, deepest first: by the time layer l is processed every
    // later consumer of its block has already deposited its gradient.
    let mut dz = vec![0.0; users];
    for (layer, &(w_off, b_off, cin)) in lay.rdb.iter().enumerate().rev() {
        let block = (layer + 1) * g * users;
        for c in 0..g {
            let acts = &cache.stack[block + c * users..block + (c + 1) * users];
            let ds = &d_stack[block + c * users..block + (c + 1) * users];
            for k in 0..users {
                dz[k] = ds[k] * act.derivative_from_output(acts[k]);
            }
            grad[b_off + c] = dz.iter().sum();
            for dy in 0..3usize {
                let kbase = w_off + ((c * 3 + dy) * 3 + 1) * cin;
                for ci in 0..cin {
                    grad[kbase + ci] = conv3_tap_backward(
                        &dz,
                        &cache.stack[ci * users..(ci + 1) * users],
                        &mut d_stack[ci * users..(ci + 1) * users],
                        w[kbase + ci],
                        dy,
                    );
                }
            }
        }
    }

    // Feature extraction.
    for c in 0..g {
        let acts = &cache.stack[c * users..(c + 1) * users];
        let ds = &d_stack[c * users..(c + 1) * users];
        let base = lay.fel_w + c * width;
        let mut bias_grad = 0.0;
        for k in 0..users {
            let d = ds[k] * act.derivative_from_output(acts[k]);
            if d == 0.0 {
                continue;
            }
            bias_grad += d;
            for (gw, &x) in grad[base..base + width].iter_mut().zip(input.row(k)) {
                *gw += d * x;
            }
        }
        grad[lay.fel_b + c] = bias_grad;
    }

    grad
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_cfg;
    use super::super::{init_parameters, layout, OutputActivation, ParameterTensors};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(users: usize, width: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_vec(
            users,
            width,
            (0..users * width)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        )
    }

    #[test]
    fn zero_parameters_give_half_with_sigmoid() {
        let cfg = tiny_cfg(4, 2, 6, 5);
        let params = ParameterTensors::zeros(cfg.clone());
        let input = random_input(5, 7, 1);
        let (out, _) = forward(&params, &input).unwrap();
        assert!(out.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn output_stays_in_open_unit_interval() {
        for seed in 0..5 {
            let cfg = tiny_cfg(8, 3, 10, 6);
            let params = init_parameters(&cfg, seed);
            let input = random_input(6, 11, seed + 100);
            let (out, _) = forward(&params, &input).unwrap();
            assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let cfg = tiny_cfg(4, 2, 6, 5);
        let params = ParameterTensors::zeros(cfg);
        let input = random_input(5, 6, 2);
        assert!(forward(&params, &input).is_err());
    }

    #[test]
    fn zeroed_fusion_kernel_degenerates_to_identity_residual() {
        // With the fusion kernel (and its zero-initialized bias) removed the
        // residual output must equal block 0 exactly.
        let cfg = tiny_cfg(4, 2, 5, 4);
        let mut params = init_parameters(&cfg, 3);
        let lay = layout(&cfg);
        let fus_cin = (cfg.dense_layers + 1) * cfg.growth;
        for v in &mut params.as_mut_slice()[lay.fus_w..lay.fus_w + cfg.growth * fus_cin] {
            *v = 0.0;
        }
        let input = random_input(4, 6, 4);
        let (_, cache) = forward(&params, &input).unwrap();
        let block0 = &cache.stack[..cfg.growth * cfg.users];
        assert_eq!(&cache.fused[..], block0);
    }

    #[test]
    fn receptive_field_radius_is_depth_plus_one() {
        let users = 12;
        let cfg = tiny_cfg(4, 2, 5, users);
        let radius = cfg.dense_layers + 1;
        let params = init_parameters(&cfg, 5);
        let input = random_input(users, 6, 6);
        let (base, _) = forward(&params, &input).unwrap();

        let probe = 5usize; // center row, avoids padding truncation
        let mut perturbed = input.clone();
        for v in perturbed.row_mut(probe) {
            *v += 0.25;
        }
        let (out, _) = forward(&params, &perturbed).unwrap();
        for k in 0..users {
            let dist = k.abs_diff(probe);
            let changed = (out[k] - base[k]).abs() > 1e-12;
            if dist > radius {
                assert!(!changed, "row {k} outside radius changed");
            }
            if dist <= radius {
                assert!(changed, "row {k} inside radius unaffected");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = tiny_cfg(4, 2, 6, 4);
        let params = init_parameters(&cfg, 11);
        let input = random_input(4, 7, 12);
        let target = vec![0.2, 0.8, 0.5, 0.9];

        let (_, cache) = forward(&params, &input).unwrap();
        let analytic = backward(&params, &input, &cache, &target);

        let loss = |p: &ParameterTensors| {
            let (out, _) = forward(p, &input).unwrap();
            out.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let mut hi = params.clone();
            hi.as_mut_slice()[i] += h;
            let mut lo = params.clone();
            lo.as_mut_slice()[i] -= h;
            let fd = (loss(&hi) - loss(&lo)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs());
            let err = if denom < 1e-8 {
                (analytic[i] - fd).abs()
            } else {
                (analytic[i] - fd).abs() / denom
            };
            worst = worst.max(err);
            assert!(err < 1e-4, "param {i}: analytic {} fd {fd}", analytic[i]);
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn gradients_vanish_at_exact_fit() {
        let cfg = tiny_cfg(3, 2, 4, 3);
        let params = init_parameters(&cfg, 21);
        let input = random_input(3, 5, 22);
        let (out, cache) = forward(&params, &input).unwrap();
        let grads = backward(&params, &input, &cache, &out);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_reinforcement_kernel_blocks_all_upstream_gradients() {
        // The reinforcement layer is the only path to the loss, so zeroing
        // its kernel leaves every upstream gradient zero.
        let cfg = tiny_cfg(3, 2, 4, 3);
        let mut params = init_parameters(&cfg, 31);
        let lay = layout(&cfg);
        for v in &mut params.as_mut_slice()[lay.frl_w..lay.frl_w + 9 * cfg.growth] {
            *v = 0.0;
        }
        let input = random_input(3, 5, 32);
        let target = vec![0.1, 0.2, 0.3];
        let (_, cache) = forward(&params, &input).unwrap();
        let grads = backward(&params, &input, &cache, &target);
        for i in 0..lay.frl_w {
            assert_eq!(grads[i], 0.0, "upstream gradient {i} leaked");
        }
        // The reinforcement kernel itself still learns.
        assert!(grads[lay.frl_w..].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn tanh_rescaled_output_gradcheck() {
        let cfg = super::super::RdnConfig {
            output_activation: OutputActivation::TanhRescaled,
            ..tiny_cfg(3, 2, 4, 3)
        };
        let params = init_parameters(&cfg, 41);
        let input = random_input(3, 5, 42);
        let target = vec![0.4, 0.6, 0.2];
        let (_, cache) = forward(&params, &input).unwrap();
        let analytic = backward(&params, &input, &cache, &target);
        let h = 1e-5;
        for i in (0..params.len()).step_by(7) {
            let mut hi = params.clone();
            hi.as_mut_slice()[i] += h;
            let mut lo = params.clone();
            lo.as_mut_slice()[i] -= h;
            let f = |p: &ParameterTensors| {
                let (out, _) = forward(p, &input).unwrap();
                out.iter()
                    .zip(&target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            };
            let fd = (f(&hi) - f(&lo)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            assert!((analytic[i] - fd).abs() / denom < 1e-4);
        }
    }
}
