//! Net spectral efficiency, Jain's fairness index, and evaluation summaries.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Which pipeline produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The iterative alternating solver.
    Solver,
    /// The trained power-prediction network plus one filter refinement.
    Network,
}

/// Per-sample evaluation outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub method: Method,
    /// Sum of per-user net spectral efficiencies (bits/s/Hz).
    pub sum_net_se: f64,
    /// Jain index of the net rates.
    pub jain: f64,
    /// Per-user net rates (bits/s/Hz).
    pub net_rates: Vec<f64>,
    /// Wall time spent producing the powers for this sample (s).
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MetricsError {
    EmptyInput,
    /// Jain's index is undefined for an all-zero rate vector.
    AllZeroRates,
    /// Ratios need at least one record from each method.
    MissingMethod(Method),
    InvalidOverhead,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::EmptyInput => write!(f, "no records to summarize"),
            MetricsError::AllZeroRates => write!(f, "all rates are zero"),
            MetricsError::MissingMethod(m) => write!(f, "no records for method {m:?}"),
            MetricsError::InvalidOverhead => {
                write!(f, "pilot overhead requires 0 < pilot_len < coherence_len")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// Net spectral efficiency: the gross rate discounted by the pilot overhead
/// prefactor `(1 - pilot_len/coherence_len) / 2`.
pub fn net_se(rate: f64, pilot_len: usize, coherence_len: usize) -> f64 {
    (1.0 - pilot_len as f64 / coherence_len as f64) / 2.0 * rate
}

/// Jain's fairness index `(sum R)^2 / (K * sum R^2)`, in `[1/K, 1]`.
pub fn jain(rates: &[f64]) -> Result<f64, MetricsError> {
    if rates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|r| r * r).sum();
    if sq == 0.0 {
        return Err(MetricsError::AllZeroRates);
    }
    Ok(sum * sum / (rates.len() as f64 * sq))
}

/// Aggregates for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub count: usize,
    pub mean_sum_net_se: f64,
    pub mean_jain: f64,
    pub mean_wall_time_s: f64,
}

/// Network-over-solver ratios of the method means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub sum_net_se: f64,
    pub jain: f64,
    pub wall_time: f64,
}

/// One point of an empirical CDF.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub quantile: f64,
}

/// Shared-bin histogram of the per-sample sum net-SE values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges, equal width over the pooled value range.
    pub edges: Vec<f64>,
    pub solver_counts: Vec<u64>,
    pub network_counts: Vec<u64>,
}

/// Full evaluation summary: per-method means, network/solver ratios, and
/// plot-ready distribution data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub solver: MethodStats,
    pub network: MethodStats,
    pub ratios: Ratios,
    pub cdf_solver: Vec<CdfPoint>,
    pub cdf_network: Vec<CdfPoint>,
    pub histogram: Histogram,
}

fn method_stats(records: &[&EvaluationRecord]) -> MethodStats {
    let n = records.len() as f64;
    MethodStats {
        count: records.len(),
        mean_sum_net_se: records.iter().map(|r| r.sum_net_se).sum::<f64>() / n,
        mean_jain: records.iter().map(|r| r.jain).sum::<f64>() / n,
        mean_wall_time_s: records.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
    }
}

fn empirical_cdf(mut values: Vec<f64>) -> Vec<CdfPoint> {
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in CDF"));
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| CdfPoint {
            value,
            quantile: (i + 1) as f64 / n,
        })
        .collect()
}

/// Summarizes a mixed record set. Both methods must be present; the
/// histogram uses `bins` equal-width bins over the pooled value range so the
/// two methods share bin edges.
pub fn summarize(records: &[EvaluationRecord], bins: usize) -> Result<Summary, MetricsError> {
    if records.is_empty() || bins == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let solver: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.method == Method::Solver)
        .collect();
    let network: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.method == Method::Network)
        .collect();
    if solver.is_empty() {
        return Err(MetricsError::MissingMethod(Method::Solver));
    }
    if network.is_empty() {
        return Err(MetricsError::MissingMethod(Method::Network));
    }

    let solver_stats = method_stats(&solver);
    let network_stats = method_stats(&network);
    let ratios = Ratios {
        sum_net_se: network_stats.mean_sum_net_se / solver_stats.mean_sum_net_se,
        jain: network_stats.mean_jain / solver_stats.mean_jain,
        wall_time: network_stats.mean_wall_time_s / solver_stats.mean_wall_time_s,
    };

    let pooled: Vec<f64> = records.iter().map(|r| r.sum_net_se).collect();
    let min = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Degenerate pooled range still gets a well-formed single-width bin set.
    let width = if max > min {
        (max - min) / bins as f64
    } else {
        1.0
    };
    let edges: Vec<f64> = (0..=bins).map(|i| min + i as f64 * width).collect();
    let mut solver_counts = vec![0u64; bins];
    let mut network_counts = vec![0u64; bins];
    for r in records {
        let mut idx = ((r.sum_net_se - min) / width) as usize;
        if idx >= bins {
            idx = bins - 1; // max lands in the last bin
        }
        match r.method {
            Method::Solver => solver_counts[idx] += 1,
            Method::Network => network_counts[idx] += 1,
        }
    }

    Ok(Summary {
        solver: solver_stats,
        network: network_stats,
        ratios,
        cdf_solver: empirical_cdf(solver.iter().map(|r| r.sum_net_se).collect()),
        cdf_network: empirical_cdf(network.iter().map(|r| r.sum_net_se).collect()),
        histogram: Histogram {
            edges,
            solver_counts,
            network_counts,
        },
    })
}
