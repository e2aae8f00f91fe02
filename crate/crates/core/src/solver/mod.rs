//! Proportional-fairness spectral-efficiency maximization.
//!
//! The objective `f(t, p) = sum_k log2(R_k)` couples per-user receiver
//! filters `t_k` (unit norm) with transmit powers `p_k` (box constrained).
//! It is maximized by alternating two exact subproblem solves:
//!
//! * filters: each `SINR_k` is a Rayleigh quotient of a rank-one numerator
//!   against a positive-definite denominator, so the optimal filter is the
//!   closed form `t_k = D_k^{-1} xi_k / ||D_k^{-1} xi_k||`;
//! * powers: gradient projection on the box `[p_min, 1]^K` with Armijo
//!   backtracking, which never decreases the objective.
//!
//! Both substeps are ascent steps, so the per-iteration objective trace is
//! nondecreasing and the alternation stops on relative improvement.

pub mod linalg;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{NetworkRealization, PilotGram};
use crate::mat::Mat;

use linalg::{cholesky_in_place, solve_with_factor, LinalgError};

const LN2: f64 = core::f64::consts::LN_2;
/// Armijo step collapse threshold: below this the iterate is stationary.
const STEP_FLOOR: f64 = 1e-12;
/// Guard for relative-improvement tests when the objective is near zero.
const OBJ_GUARD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum SolverError {
    /// Large-scale fading must be strictly positive (it divides the
    /// cross-pilot leakage terms).
    NonPositiveFading,
    /// The filter subproblem matrix failed its positive-definite
    /// factorization; inputs are corrupt.
    FilterFactorization(LinalgError),
    /// A solver option violates its documented range.
    InvalidOptions(&'static str),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::NonPositiveFading => {
                write!(f, "large-scale fading must be strictly positive")
            }
            SolverError::FilterFactorization(e) => write!(f, "filter subproblem: {e}"),
            SolverError::InvalidOptions(msg) => write!(f, "invalid solver options: {msg}"),
        }
    }
}

impl core::error::Error for SolverError {}

impl From<LinalgError> for SolverError {
    fn from(e: LinalgError) -> Self {
        SolverError::FilterFactorization(e)
    }
}

/// Per-user quadratic forms of the SINR expression, precomputed from a
/// realization's large-scale statistics.
///
/// For user `k` and interferer `i` (all user-major, AP index inside):
/// `y_ki[m] = xi_mk * beta_mi`, `zeta_ki[m] = gram[k][i] * xi_mk *
/// beta_mi / beta_mk` (zero on the diagonal and for orthogonal pilots).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForms {
    aps: usize,
    users: usize,
    /// `xi[k*aps + m]`.
    xi: Vec<f64>,
    /// `y[(k*users + i)*aps + m]`.
    y: Vec<f64>,
    /// `zeta[(k*users + i)*aps + m]`; zero unless `i != k` share a pilot.
    zeta: Vec<f64>,
    gram: PilotGram,
}

impl QuadraticForms {
    #[inline]
    pub fn num_aps(&self) -> usize {
        self.aps
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.users
    }

    /// Estimation-quality vector of user `k`.
    #[inline]
    pub fn xi_vec(&self, k: usize) -> &[f64] {
        &self.xi[k * self.aps..(k + 1) * self.aps]
    }

    #[inline]
    pub fn y_vec(&self, k: usize, i: usize) -> &[f64] {
        let base = (k * self.users + i) * self.aps;
        &self.y[base..base + self.aps]
    }

    #[inline]
    pub fn zeta_vec(&self, k: usize, i: usize) -> &[f64] {
        let base = (k * self.users + i) * self.aps;
        &self.zeta[base..base + self.aps]
    }

    #[inline]
    pub fn shares_pilot(&self, k: usize, i: usize) -> bool {
        self.gram.shares_pilot(k, i)
    }
}

/// Builds the quadratic forms from raw statistics (`beta`, `xi` are
/// `aps x users`).
pub fn quadratic_forms_from_stats(
    beta: &Mat,
    xi: &Mat,
    gram: &PilotGram,
) -> Result<QuadraticForms, SolverError> {
    let aps = beta.rows();
    let users = beta.cols();
    if beta.as_slice().iter().any(|&b| b <= 0.0) {
        return Err(SolverError::NonPositiveFading);
    }
    let mut xi_um = vec![0.0; users * aps];
    for k in 0..users {
        for m in 0..aps {
            xi_um[k * aps + m] = xi.at(m, k);
        }
    }
    let mut y = vec![0.0; users * users * aps];
    let mut zeta = vec![0.0; users * users * aps];
    for k in 0..users {
        for i in 0..users {
            let base = (k * users + i) * aps;
            let copilot = i != k && gram.0.at(k, i) != 0.0;
            for m in 0..aps {
                let xk = xi_um[k * aps + m];
                let bi = beta.at(m, i);
                y[base + m] = xk * bi;
                if copilot {
                    zeta[base + m] = gram.0.at(k, i) * xk * bi / beta.at(m, k);
                }
            }
        }
    }
    Ok(QuadraticForms {
        aps,
        users,
        xi: xi_um,
        y,
        zeta,
        gram: gram.clone(),
    })
}

/// Builds the quadratic forms for a dropped network.
pub fn build_quadratic_forms(real: &NetworkRealization) -> Result<QuadraticForms, SolverError> {
    let gram = PilotGram::from_pilot_orders(&real.mu);
    quadratic_forms_from_stats(&real.beta, &real.xi, &gram)
}

/// Receiver filters, one unit-norm column per user (stored user-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverFilters {
    aps: usize,
    users: usize,
    t: Vec<f64>,
}

impl ReceiverFilters {
    #[inline]
    pub fn num_aps(&self) -> usize {
        self.aps
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.users
    }

    /// Filter vector of user `k`.
    #[inline]
    pub fn col(&self, k: usize) -> &[f64] {
        &self.t[k * self.aps..(k + 1) * self.aps]
    }

    pub fn from_columns(aps: usize, columns: Vec<f64>) -> Self {
        let users = columns.len() / aps;
        debug_assert_eq!(columns.len(), users * aps);
        Self {
            aps,
            users,
            t: columns,
        }
    }
}

/// SINR coefficients for a fixed filter set: `SINR_k(p) = alpha_k p_k /
/// (sum_i chi_ki p_i + sum_{i != k} eta_ki p_i + delta_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SinrCoefficients {
    pub alpha: Vec<f64>,
    pub chi: Mat,
    /// Cross-pilot leakage; diagonal identically zero.
    pub eta: Mat,
    pub delta: Vec<f64>,
}

/// Stopping rules and line-search constants for the alternating solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative-improvement tolerance shared by both loops.
    pub epsilon: f64,
    /// Cap on alternating (outer) iterations.
    pub max_outer: usize,
    /// Cap on gradient-projection iterations per power solve.
    pub gp_max_iter: usize,
    /// Armijo sufficient-increase coefficient.
    pub armijo_sigma: f64,
    /// Armijo backtracking shrink factor.
    pub armijo_shrink: f64,
    /// Initial step size, re-set at every gradient-projection iteration.
    pub initial_step: f64,
    /// Lower power bound replacing 0: keeps every `log2(R_k)` finite.
    pub p_min: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_outer: 100,
            gp_max_iter: 500,
            armijo_sigma: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            p_min: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.epsilon <= 0.0 {
            return Err(SolverError::InvalidOptions("epsilon must be > 0"));
        }
        if self.max_outer == 0 || self.gp_max_iter == 0 {
            return Err(SolverError::InvalidOptions("iteration caps must be >= 1"));
        }
        if !(0.0 < self.armijo_sigma && self.armijo_sigma < 1.0) {
            return Err(SolverError::InvalidOptions("armijo_sigma must be in (0,1)"));
        }
        if !(0.0 < self.armijo_shrink && self.armijo_shrink < 1.0) {
            return Err(SolverError::InvalidOptions(
                "armijo_shrink must be in (0,1)",
            ));
        }
        if self.initial_step <= 0.0 {
            return Err(SolverError::InvalidOptions("initial_step must be > 0"));
        }
        if !(0.0 < self.p_min && self.p_min < 1.0) {
            return Err(SolverError::InvalidOptions("p_min must be in (0,1)"));
        }
        Ok(())
    }
}

/// Output of one alternating solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub filters: ReceiverFilters,
    pub powers: Vec<f64>,
    /// Gross per-user rates `log2(1 + SINR_k)` at `(filters, powers)`.
    pub rates: Vec<f64>,
    /// Objective at `(filters, powers)`; at least the last trace entry.
    pub objective: f64,
    /// Objective after each outer iteration; nondecreasing.
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    /// False when `max_outer` was exhausted before the tolerance was met.
    pub converged: bool,
}

/// Closed-form max-SINR filter for user `k` at fixed powers.
///
/// Assembles `D_k = sum_i rho p_i diag(y_ki) + sum_{i != k} rho p_i
/// zeta_ki zeta_ki^T + diag(xi_k)` and returns the normalized solution of
/// `D_k t = xi_k`, the maximizer of the SINR Rayleigh quotient.
pub fn optimal_filter(
    k: usize,
    powers: &[f64],
    forms: &QuadraticForms,
    rho: f64,
) -> Result<Vec<f64>, SolverError> {
    let aps = forms.aps;
    let users = forms.users;
    let mut d = Mat::zeros(aps, aps);
    let mut diag = forms.xi_vec(k).to_vec();
    for i in 0..users {
        let w = rho * powers[i];
        for (dm, ym) in diag.iter_mut().zip(forms.y_vec(k, i)) {
            *dm += w * ym;
        }
    }
    for (m, &v) in diag.iter().enumerate() {
        *d.at_mut(m, m) = v;
    }
    for i in 0..users {
        if i == k || !forms.shares_pilot(k, i) {
            continue;
        }
        let z = forms.zeta_vec(k, i);
        let w = rho * powers[i];
        // Lower triangle only; the factorization never reads above it.
        for m in 0..aps {
            let wzm = w * z[m];
            let row = &mut d.row_mut(m)[..=m];
            for (rn, zn) in row.iter_mut().zip(&z[..=m]) {
                *rn += wzm * zn;
            }
        }
    }
    cholesky_in_place(&mut d)?;
    let mut t = forms.xi_vec(k).to_vec();
    solve_with_factor(&d, &mut t);
    let norm = libm::sqrt(t.iter().map(|x| x * x).sum());
    for x in &mut t {
        *x /= norm;
    }
    Ok(t)
}

/// Filters for every user at fixed powers.
pub fn compute_filters(
    powers: &[f64],
    forms: &QuadraticForms,
    rho: f64,
) -> Result<ReceiverFilters, SolverError> {
    let mut t = Vec::with_capacity(forms.users * forms.aps);
    for k in 0..forms.users {
        t.extend_from_slice(&optimal_filter(k, powers, forms, rho)?);
    }
    Ok(ReceiverFilters::from_columns(forms.aps, t))
}

/// SINR of user `k` under an arbitrary filter `t` (not necessarily optimal
/// or unit norm — the quotient is scale invariant).
pub fn sinr_of_filter(
    t: &[f64],
    k: usize,
    powers: &[f64],
    forms: &QuadraticForms,
    rho: f64,
) -> f64 {
    let xi = forms.xi_vec(k);
    let signal: f64 = t.iter().zip(xi).map(|(a, b)| a * b).sum();
    let mut den = 0.0;
    for i in 0..forms.users {
        let y = forms.y_vec(k, i);
        let quad: f64 = t.iter().zip(y).map(|(a, b)| a * a * b).sum();
        den += rho * powers[i] * quad;
        if i != k && forms.shares_pilot(k, i) {
            let z = forms.zeta_vec(k, i);
            let leak: f64 = t.iter().zip(z).map(|(a, b)| a * b).sum();
            den += rho * powers[i] * leak * leak;
        }
    }
    den += t.iter().zip(xi).map(|(a, b)| a * a * b).sum::<f64>();
    rho * powers[k] * signal * signal / den
}

/// Scalar SINR coefficients for a fixed filter set.
pub fn sinr_coefficients(
    filters: &ReceiverFilters,
    forms: &QuadraticForms,
    rho: f64,
) -> SinrCoefficients {
    let users = forms.users;
    let mut alpha = vec![0.0; users];
    let mut chi = Mat::zeros(users, users);
    let mut eta = Mat::zeros(users, users);
    let mut delta = vec![0.0; users];
    for k in 0..users {
        let t = filters.col(k);
        let xi = forms.xi_vec(k);
        let signal: f64 = t.iter().zip(xi).map(|(a, b)| a * b).sum();
        alpha[k] = rho * signal * signal;
        delta[k] = t.iter().zip(xi).map(|(a, b)| a * a * b).sum();
        for i in 0..users {
            let y = forms.y_vec(k, i);
            *chi.at_mut(k, i) = rho * t.iter().zip(y).map(|(a, b)| a * a * b).sum::<f64>();
            if i != k && forms.shares_pilot(k, i) {
                let z = forms.zeta_vec(k, i);
                let leak: f64 = t.iter().zip(z).map(|(a, b)| a * b).sum();
                *eta.at_mut(k, i) = rho * leak * leak;
            }
        }
    }
    SinrCoefficients {
        alpha,
        chi,
        eta,
        delta,
    }
}

/// Interference-plus-noise denominator of user `k`'s SINR.
#[inline]
fn sinr_denominator(powers: &[f64], coeffs: &SinrCoefficients, k: usize) -> f64 {
    let chi = coeffs.chi.row(k);
    let eta = coeffs.eta.row(k);
    let mut den = coeffs.delta[k];
    for i in 0..powers.len() {
        den += (chi[i] + eta[i]) * powers[i];
    }
    den
}

/// SINR of user `k` at powers `p` (filters fixed inside `coeffs`).
pub fn sinr(powers: &[f64], coeffs: &SinrCoefficients, k: usize) -> f64 {
    coeffs.alpha[k] * powers[k] / sinr_denominator(powers, coeffs, k)
}

/// Achievable rate `log2(1 + SINR_k)`.
pub fn rate(powers: &[f64], coeffs: &SinrCoefficients, k: usize) -> f64 {
    libm::log2(1.0 + sinr(powers, coeffs, k))
}

/// Proportional-fairness objective `sum_k log2(R_k)`.
///
/// Returns `-inf` when some `R_k` is zero, which only happens for powers
/// below the feasible floor — callers treat a non-finite value as an
/// infeasible input.
pub fn pf_objective(powers: &[f64], coeffs: &SinrCoefficients) -> f64 {
    (0..powers.len())
        .map(|k| libm::log2(rate(powers, coeffs, k)))
        .sum()
}

/// Exact gradient of the proportional-fairness objective in the powers.
pub fn pf_gradient(powers: &[f64], coeffs: &SinrCoefficients) -> Vec<f64> {
    let users = powers.len();
    let mut grad = vec![0.0; users];
    for k in 0..users {
        let den = sinr_denominator(powers, coeffs, k);
        let s = coeffs.alpha[k] * powers[k] / den;
        let r = libm::log2(1.0 + s);
        // d f / d SINR_k through both logs.
        let weight = 1.0 / (r * (1.0 + s) * LN2 * LN2);
        let den2 = den * den;
        let chi = coeffs.chi.row(k);
        let eta = coeffs.eta.row(k);
        for j in 0..users {
            let dsinr = if j == k {
                coeffs.alpha[k] * (den - powers[k] * chi[k]) / den2
            } else {
                -coeffs.alpha[k] * powers[k] * (chi[j] + eta[j]) / den2
            };
            grad[j] += weight * dsinr;
        }
    }
    grad
}

/// Componentwise clamp onto `[p_min, 1]`.
pub fn project_box(powers: &[f64], p_min: f64) -> Vec<f64> {
    powers.iter().map(|&p| p.clamp(p_min, 1.0)).collect()
}

/// Outcome of one gradient-projection power solve.
#[derive(Clone, Debug, PartialEq)]
pub struct GpOutcome {
    pub powers: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Gradient projection with Armijo backtracking on the power box.
///
/// Each iteration takes the projected ascent step `project(p + step * g)`,
/// shrinking `step` until `f(p_new) >= f(p) + sigma * <g, p_new - p>`. The
/// returned objective never falls below `f(p0)`; the loop stops when the
/// relative improvement drops to `epsilon` or the step size collapses
/// (stationary point).
pub fn solve_powers(p0: &[f64], coeffs: &SinrCoefficients, opts: &SolverOptions) -> GpOutcome {
    let mut p = project_box(p0, opts.p_min);
    let mut f = pf_objective(&p, coeffs);
    for it in 1..=opts.gp_max_iter {
        let g = pf_gradient(&p, coeffs);
        let mut step = opts.initial_step;
        let accepted = loop {
            let cand: Vec<f64> = p
                .iter()
                .zip(&g)
                .map(|(&pi, &gi)| (pi + step * gi).clamp(opts.p_min, 1.0))
                .collect();
            let inner: f64 = g
                .iter()
                .zip(cand.iter().zip(&p))
                .map(|(&gi, (&ci, &pi))| gi * (ci - pi))
                .sum();
            let f_cand = pf_objective(&cand, coeffs);
            if f_cand >= f + opts.armijo_sigma * inner {
                break Some((cand, f_cand));
            }
            step *= opts.armijo_shrink;
            if step < STEP_FLOOR {
                break None;
            }
        };
        let Some((cand, f_cand)) = accepted else {
            // Step collapsed without sufficient increase: stationary.
            return GpOutcome {
                powers: p,
                objective: f,
                iterations: it - 1,
            };
        };
        let rel = (f_cand - f) / f.abs().max(OBJ_GUARD);
        p = cand;
        f = f_cand;
        if rel <= opts.epsilon {
            return GpOutcome {
                powers: p,
                objective: f,
                iterations: it,
            };
        }
    }
    GpOutcome {
        powers: p,
        objective: f,
        iterations: opts.gp_max_iter,
    }
}

/// Alternating filter/power maximization.
///
/// Starts from full power, alternates the closed-form filter update with a
/// gradient-projection power solve, and stops when the outer relative
/// improvement falls to `epsilon` (at least one full iteration always runs).
/// After termination the filters are refreshed once at the final powers, so
/// the reported rates and objective are exactly reproducible from the power
/// vector alone.
pub fn solve_alternating(
    real: &NetworkRealization,
    opts: &SolverOptions,
) -> Result<SolverResult, SolverError> {
    opts.validate()?;
    let forms = build_quadratic_forms(real)?;
    let rho = real.rho;
    let users = forms.num_users();

    let mut powers = vec![1.0; users];
    let mut trace = Vec::new();
    let mut prev_f: Option<f64> = None;
    let mut converged = false;
    let mut outer_used = 0;
    for outer in 1..=opts.max_outer {
        outer_used = outer;
        let filters = compute_filters(&powers, &forms, rho)?;
        let coeffs = sinr_coefficients(&filters, &forms, rho);
        let gp = solve_powers(&powers, &coeffs, opts);
        powers = gp.powers;
        let f = gp.objective;
        trace.push(f);
        if let Some(pf) = prev_f {
            if (f - pf) / pf.abs().max(OBJ_GUARD) <= opts.epsilon {
                converged = true;
                break;
            }
        }
        prev_f = Some(f);
    }

    let filters = compute_filters(&powers, &forms, rho)?;
    let coeffs = sinr_coefficients(&filters, &forms, rho);
    let rates: Vec<f64> = (0..users).map(|k| rate(&powers, &coeffs, k)).collect();
    let objective = pf_objective(&powers, &coeffs);
    Ok(SolverResult {
        filters,
        powers,
        rates,
        objective,
        trace,
        outer_iterations: outer_used,
        converged,
    })
}
