//! Network realizations and large-scale channel statistics.
//!
//! A "drop" places access points and users uniformly on a wrapped-around
//! square, derives large-scale fading from a three-slope path-loss model with
//! log-normal shadowing, assigns pilots, and computes the MMSE channel
//! estimation quality `xi`. Only large-scale statistics are produced; no
//! small-scale channel realizations are ever drawn, because all rate
//! expressions downstream depend on the channel only through `beta` and `xi`.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mat::Mat;

/// How pilots are assigned to users.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotAssignment {
    /// Every user draws its pilot index i.i.d. uniform over the pilot set.
    Uniform,
    /// The first `pilot_len` users receive distinct pilots (a random
    /// permutation); any remaining users draw uniformly.
    OrthogonalFirst,
}

/// Static description of a simulated network.
///
/// Distances are in km, powers in mW, noise in dBm, and the path-loss and
/// shadowing constants in dB. `noise_figure_db` and `bandwidth_mhz` are
/// recorded for provenance but enter no computation: the noise power is
/// given directly by `noise_dbm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of access points (M).
    pub aps: usize,
    /// Number of users (K).
    pub users: usize,
    /// Pilot sequence length = number of orthogonal pilots (tau).
    pub pilot_len: usize,
    /// Side of the square coverage area (km).
    pub area_km: f64,
    /// Far path-loss breakpoint d1 (km).
    pub d1_km: f64,
    /// Near path-loss breakpoint d0 (km).
    pub d0_km: f64,
    /// Path-loss constant L (dB).
    pub path_loss_db: f64,
    /// Shadowing standard deviation (dB).
    pub shadow_std_db: f64,
    /// Per-symbol pilot transmit power (mW).
    pub pilot_power_mw: f64,
    /// Uplink data transmit power (mW).
    pub data_power_mw: f64,
    /// Noise power (dBm).
    pub noise_dbm: f64,
    /// Coherence interval length in samples (tau_c).
    pub coherence_len: usize,
    /// Pilot assignment scheme.
    pub pilot_assignment: PilotAssignment,
    /// Receiver noise figure (dB); recorded only.
    pub noise_figure_db: f64,
    /// System bandwidth (MHz); recorded only.
    pub bandwidth_mhz: f64,
}

impl Default for NetworkConfig {
    /// Full-scale reference scenario: 80 APs, 20 users, 10 pilots on a
    /// 1 km x 1 km wrap-around square.
    fn default() -> Self {
        Self {
            aps: 80,
            users: 20,
            pilot_len: 10,
            area_km: 1.0,
            d1_km: 0.05,
            d0_km: 0.01,
            path_loss_db: 140.7,
            shadow_std_db: 8.0,
            pilot_power_mw: 200.0,
            data_power_mw: 200.0,
            noise_dbm: -92.0,
            coherence_len: 200,
            pilot_assignment: PilotAssignment::Uniform,
            noise_figure_db: 9.0,
            bandwidth_mhz: 20.0,
        }
    }
}

/// Validation and channel-statistics errors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChannelError {
    /// A configuration invariant is violated; the message names it.
    InvalidConfig(&'static str),
    /// A large-scale fading coefficient was not strictly positive.
    NonPositiveFading,
}

impl fmt::Display for ChannelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelError::InvalidConfig(msg) => write!(f, "invalid network config: {msg}"),
            ChannelError::NonPositiveFading => {
                write!(f, "large-scale fading must be strictly positive")
            }
        }
    }
}

impl core::error::Error for ChannelError {}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.aps == 0 {
            return Err(ChannelError::InvalidConfig("aps must be >= 1"));
        }
        if self.users == 0 {
            return Err(ChannelError::InvalidConfig("users must be >= 1"));
        }
        if self.pilot_len == 0 {
            return Err(ChannelError::InvalidConfig("pilot_len must be >= 1"));
        }
        if self.pilot_len >= self.coherence_len {
            return Err(ChannelError::InvalidConfig(
                "pilot_len must be < coherence_len",
            ));
        }
        if !(self.d0_km > 0.0 && self.d0_km < self.d1_km && self.d1_km < self.area_km) {
            return Err(ChannelError::InvalidConfig(
                "breakpoints must satisfy 0 < d0 < d1 < area",
            ));
        }
        if self.pilot_power_mw <= 0.0 || self.data_power_mw <= 0.0 {
            return Err(ChannelError::InvalidConfig("powers must be > 0"));
        }
        if self.shadow_std_db < 0.0 {
            return Err(ChannelError::InvalidConfig("shadow_std_db must be >= 0"));
        }
        Ok(())
    }
}

/// One dropped network: geometry, large-scale fading, pilot assignment, and
/// estimation quality, all deterministic in `(config, seed)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkRealization {
    /// AP coordinates (km), `aps` entries.
    pub ap_pos: Vec<[f64; 2]>,
    /// User coordinates (km), `users` entries.
    pub user_pos: Vec<[f64; 2]>,
    /// Large-scale fading, `aps x users`, linear scale.
    pub beta: Mat,
    /// Pilot order vector: entry k is user k's pilot index in `1..=pilot_len`.
    pub mu: Vec<u32>,
    /// Channel-estimate variance, `aps x users`, linear scale.
    pub xi: Mat,
    /// Normalized pilot SNR (dimensionless).
    pub rho_p: f64,
    /// Normalized data SNR (dimensionless).
    pub rho: f64,
    /// RNG seed this realization was drawn from.
    pub seed: u64,
}

/// Squared pilot inner products `|phi_k^H phi_i|^2`.
///
/// With the canonical orthonormal pilot set these are exactly 0 or 1, so the
/// gram matrix doubles as a co-pilot indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotGram(pub Mat);

impl PilotGram {
    /// Builds the gram matrix from a pilot order vector.
    pub fn from_pilot_orders(mu: &[u32]) -> Self {
        let k = mu.len();
        let mut g = Mat::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                if mu[a] == mu[b] {
                    *g.at_mut(a, b) = 1.0;
                }
            }
        }
        PilotGram(g)
    }

    #[inline]
    pub fn shares_pilot(&self, a: usize, b: usize) -> bool {
        self.0.at(a, b) != 0.0
    }
}

/// Euclidean distance on the `side x side` torus.
pub fn wrapped_distance(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let mut acc = 0.0;
    for axis in 0..2 {
        let d = (a[axis] - b[axis]).abs();
        let d = d.min(side - d);
        acc += d * d;
    }
    libm::sqrt(acc)
}

/// Three-slope path loss in dB for a distance in km.
///
/// Continuous at both breakpoints and constant below `d0_km`.
pub fn path_loss_db(d_km: f64, cfg: &NetworkConfig) -> f64 {
    let l = cfg.path_loss_db;
    let d1 = cfg.d1_km;
    let d0 = cfg.d0_km;
    if d_km > d1 {
        -l - 35.0 * libm::log10(d_km)
    } else if d_km > d0 {
        -l - 15.0 * libm::log10(d1) - 20.0 * libm::log10(d_km)
    } else {
        -l - 15.0 * libm::log10(d1) - 20.0 * libm::log10(d0)
    }
}

/// Combines path loss with a shadowing draw into a linear fading coefficient:
/// `10^((pl + sigma*v)/10)`.
///
/// The shadowing term is applied at every distance; the path-loss model
/// already flattens below the near breakpoint.
pub fn large_scale_fading(pl_db: f64, shadow_draw: f64, shadow_std_db: f64) -> f64 {
    libm::pow(10.0, (pl_db + shadow_std_db * shadow_draw) / 10.0)
}

/// Draws the pilot order vector.
pub fn assign_pilots<R: Rng>(
    users: usize,
    pilot_len: usize,
    scheme: PilotAssignment,
    rng: &mut R,
) -> Vec<u32> {
    let tau = pilot_len as u32;
    let mut mu = Vec::with_capacity(users);
    match scheme {
        PilotAssignment::Uniform => {
            for _ in 0..users {
                mu.push(rng.random_range(1..=tau));
            }
        }
        PilotAssignment::OrthogonalFirst => {
            let mut pool: Vec<u32> = (1..=tau).collect();
            pool.shuffle(rng);
            for k in 0..users {
                if k < pilot_len {
                    mu.push(pool[k]);
                } else {
                    mu.push(rng.random_range(1..=tau));
                }
            }
        }
    }
    mu
}

/// MMSE estimation quality for user `k` at every AP:
/// `xi_mk = tau*rho_p*beta_mk^2 / (tau*rho_p * sum_i beta_mi*gram[k][i] + 1)`.
///
/// The denominator keeps only co-pilot users, so pilot contamination shows
/// up as a loss of estimation quality.
pub fn estimation_quality(
    beta: &Mat,
    k: usize,
    gram: &PilotGram,
    rho_p: f64,
    pilot_len: usize,
) -> Result<Vec<f64>, ChannelError> {
    let aps = beta.rows();
    let users = beta.cols();
    let trp = pilot_len as f64 * rho_p;
    let mut col = Vec::with_capacity(aps);
    for m in 0..aps {
        let mut contamination = 0.0;
        for i in 0..users {
            let b = beta.at(m, i);
            if b <= 0.0 {
                return Err(ChannelError::NonPositiveFading);
            }
            contamination += b * gram.0.at(k, i);
        }
        let b_mk = beta.at(m, k);
        col.push(trp * b_mk * b_mk / (trp * contamination + 1.0));
    }
    Ok(col)
}

/// Normalized pilot and data SNRs `(rho_p, rho)`: transmit power divided by
/// the noise power implied by `noise_dbm`.
pub fn normalized_snrs(cfg: &NetworkConfig) -> (f64, f64) {
    let noise_mw = libm::pow(10.0, cfg.noise_dbm / 10.0);
    (cfg.pilot_power_mw / noise_mw, cfg.data_power_mw / noise_mw)
}

/// Draws one network realization, a pure function of `(cfg, seed)`.
///
/// RNG consumption order is fixed: AP coordinates (x, y per AP), user
/// coordinates, shadowing draws (AP-major), then pilot assignment.
pub fn drop_network(cfg: &NetworkConfig, seed: u64) -> Result<NetworkRealization, ChannelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aps = cfg.aps;
    let users = cfg.users;

    let mut ap_pos = Vec::with_capacity(aps);
    for _ in 0..aps {
        ap_pos.push([
            cfg.area_km * rng.random::<f64>(),
            cfg.area_km * rng.random::<f64>(),
        ]);
    }
    let mut user_pos = Vec::with_capacity(users);
    for _ in 0..users {
        user_pos.push([
            cfg.area_km * rng.random::<f64>(),
            cfg.area_km * rng.random::<f64>(),
        ]);
    }

    let mut beta = Mat::zeros(aps, users);
    for m in 0..aps {
        for k in 0..users {
            let d = wrapped_distance(ap_pos[m], user_pos[k], cfg.area_km);
            let pl = path_loss_db(d, cfg);
            let v: f64 = rng.sample(StandardNormal);
            *beta.at_mut(m, k) = large_scale_fading(pl, v, cfg.shadow_std_db);
        }
    }

    let mu = assign_pilots(users, cfg.pilot_len, cfg.pilot_assignment, &mut rng);
    let gram = PilotGram::from_pilot_orders(&mu);
    let (rho_p, rho) = normalized_snrs(cfg);

    let mut xi = Mat::zeros(aps, users);
    for k in 0..users {
        let col = estimation_quality(&beta, k, &gram, rho_p, cfg.pilot_len)?;
        for m in 0..aps {
            *xi.at_mut(m, k) = col[m];
        }
    }

    Ok(NetworkRealization {
        ap_pos,
        user_pos,
        beta,
        mu,
        xi,
        rho_p,
        rho,
        seed,
    })
}

/// Rebuilds a realization from stored large-scale statistics.
///
/// Geometry is not recoverable from `beta`, so positions are left empty;
/// every solver-facing field (`beta`, `mu`, `xi`, SNRs) is reconstructed
/// exactly as `drop_network` would produce it.
pub fn realization_from_stats(
    cfg: &NetworkConfig,
    beta: Mat,
    mu: Vec<u32>,
    seed: u64,
) -> Result<NetworkRealization, ChannelError> {
    cfg.validate()?;
    let gram = PilotGram::from_pilot_orders(&mu);
    let (rho_p, rho) = normalized_snrs(cfg);
    let aps = beta.rows();
    let users = beta.cols();
    let mut xi = Mat::zeros(aps, users);
    for k in 0..users {
        let col = estimation_quality(&beta, k, &gram, rho_p, cfg.pilot_len)?;
        for m in 0..aps {
            *xi.at_mut(m, k) = col[m];
        }
    }
    Ok(NetworkRealization {
        ap_pos: Vec::new(),
        user_pos: Vec::new(),
        beta,
        mu,
        xi,
        rho_p,
        rho,
        seed,
    })
}
