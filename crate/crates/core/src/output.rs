//! Monte Carlo averages, batch-means covariance, effective sample size and
//! chain summaries.
//!
//! Samples are N × d matrices with one row per stored iterate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{ChainConfig, ChainOutput};

/// Sum with Neumaier compensation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn column_mean(samples: &DMatrix<f64>, j: usize) -> f64 {
    compensated_sum(samples.column(j).iter().copied()) / samples.nrows() as f64
}

/// Column means of `samples`.
pub fn sample_mean(samples: &DMatrix<f64>) -> Result<Vec<f64>> {
    if samples.nrows() == 0 {
        return Err(Error::TooFewSamples("the chain has no stored iterates".into()));
    }
    Ok((0..samples.ncols()).map(|j| column_mean(samples, j)).collect())
}

/// Mean of the selected columns of a chain.
pub fn monte_carlo_mean(chain: &ChainOutput, columns: &[usize]) -> Result<Vec<f64>> {
    check_columns(chain, columns)?;
    sample_mean(&chain.matrix(columns))
}

fn check_columns(chain: &ChainOutput, columns: &[usize]) -> Result<()> {
    if let Some(&j) = columns.iter().find(|&&j| j >= chain.labels.len()) {
        return Err(Error::Dimension(format!(
            "column {j} out of range for {} columns",
            chain.labels.len()
        )));
    }
    Ok(())
}

/// Unbiased sample covariance.
pub fn sample_covariance(samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples(format!("need at least 2 rows, got {n}")));
    }
    let mean = sample_mean(samples)?;
    let centered = DMatrix::from_fn(n, samples.ncols(), |i, j| samples[(i, j)] - mean[j]);
    Ok(centered.transpose() * &centered / (n - 1) as f64)
}

/// ⌊√N⌋
pub fn default_batch_size(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// Non-overlapping batch-means estimate of the asymptotic covariance Σ in
/// √N(θ_N − θ) → N(0, Σ). Trailing rows that do not fill a batch are
/// dropped.
pub fn batch_means_cov(samples: &DMatrix<f64>, batch_size: Option<usize>) -> Result<DMatrix<f64>> {
    let n = samples.nrows();
    if n < 4 {
        return Err(Error::TooFewSamples(format!(
            "batch means need at least 4 rows, got {n}"
        )));
    }
    let b = batch_size.unwrap_or_else(|| default_batch_size(n));
    if b == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let a = n / b;
    if a < 2 {
        return Err(Error::TooFewSamples(format!(
            "batch size {b} leaves {a} batch(es) from {n} rows"
        )));
    }
    let d = samples.ncols();
    let means = DMatrix::from_fn(a, d, |k, j| {
        compensated_sum((k * b..(k + 1) * b).map(|i| samples[(i, j)])) / b as f64
    });
    let grand: Vec<f64> = (0..d).map(|j| column_mean(&means, j)).collect();
    let centered = DMatrix::from_fn(a, d, |k, j| means[(k, j)] - grand[j]);
    let cov = centered.transpose() * &centered * (b as f64 / (a - 1) as f64);
    // exact symmetry
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Monte Carlo standard errors √(Σ̂ⱼⱼ/N) of the column means.
pub fn mcse(samples: &DMatrix<f64>, batch_size: Option<usize>) -> Result<Vec<f64>> {
    let cov = batch_means_cov(samples, batch_size)?;
    let n = samples.nrows() as f64;
    Ok((0..samples.ncols()).map(|j| (cov[(j, j)].max(0.0) / n).sqrt()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssMethod {
    Multivariate,
    /// Smallest per-coordinate ESS, used when a covariance is singular.
    UnivariateFallback,
    /// Every coordinate is constant; the value is N.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    pub method: EssMethod,
}

fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let scale: f64 = (0..m.nrows()).map(|i| m[(i, i)]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let chol = nalgebra::Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut log_det = 0.0;
    for i in 0..m.nrows() {
        let v = l[(i, i)];
        // relative pivot check against the largest diagonal entry
        if !(v * v > 1e-13 * scale) {
            return None;
        }
        log_det += 2.0 * v.ln();
    }
    Some(log_det)
}

/// Univariate ESS N·λ²/σ²; `None` for a constant column.
fn univariate_ess(n: f64, var: f64, asym_var: f64) -> Option<f64> {
    if var <= 0.0 {
        return None;
    }
    if asym_var <= 0.0 {
        return Some(n);
    }
    Some(n * var / asym_var)
}

/// Multivariate ESS N·(det Λ̂ / det Σ̂)^{1/d}, with Λ̂ the sample covariance
/// and Σ̂ the batch-means covariance.
pub fn effective_sample_size(samples: &DMatrix<f64>, batch_size: Option<usize>) -> Result<Ess> {
    let n = samples.nrows() as f64;
    let d = samples.ncols();
    let lambda = sample_covariance(samples)?;
    let sigma = batch_means_cov(samples, batch_size)?;
    if d == 0 {
        return Err(Error::Dimension("no columns selected".into()));
    }
    if let (Some(ll), Some(ls)) = (log_det_spd(&lambda), log_det_spd(&sigma)) {
        return Ok(Ess {
            value: n * ((ll - ls) / d as f64).exp(),
            method: EssMethod::Multivariate,
        });
    }
    let per: Vec<f64> = (0..d)
        .filter_map(|j| univariate_ess(n, lambda[(j, j)], sigma[(j, j)]))
        .collect();
    Ok(match per.iter().copied().reduce(f64::min) {
        Some(v) => Ess {
            value: v,
            method: EssMethod::UnivariateFallback,
        },
        None => Ess {
            value: n,
            method: EssMethod::Degenerate,
        },
    })
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q2_5: f64,
    pub q50: f64,
    pub q97_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub label: String,
    pub mean: f64,
    /// `None` for a single row.
    pub sd: Option<f64>,
    pub quantiles: Quantiles,
    /// `None` when there are fewer than 4 rows.
    pub mcse: Option<f64>,
    pub ess: Option<f64>,
    /// The column is constant: mcse is 0 and ess is N by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSummary {
    pub labels: Vec<String>,
    pub batch_size: usize,
    pub covariance: Vec<Vec<f64>>,
    pub ess: Ess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub n_draws: usize,
    pub parameters: Vec<ParameterSummary>,
    pub multivariate: Option<MultivariateSummary>,
    pub config: Option<ChainConfig>,
    /// Caveats attached to the standard errors.
    pub notes: Vec<String>,
}

const MOMENT_NOTE: &str = "standard errors assume a Markov chain CLT, which needs \
     finite 2+δ moments of each summarized quantity under the posterior; this is not checked";

/// Summary of every column of `samples`.
pub fn summarize_matrix(labels: &[String], samples: &DMatrix<f64>) -> Result<SummaryReport> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::TooFewSamples("the chain has no stored iterates".into()));
    }
    if labels.len() != samples.ncols() {
        return Err(Error::Dimension(format!(
            "{} labels for {} columns",
            labels.len(),
            samples.ncols()
        )));
    }
    let means = sample_mean(samples)?;
    let asym = if n >= 4 {
        Some(batch_means_cov(samples, None)?)
    } else {
        None
    };
    let parameters = (0..samples.ncols())
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<f64> = samples.column(j).iter().copied().collect();
            let mean = means[j];
            let var = if n >= 2 {
                Some(compensated_sum(col.iter().map(|x| (x - mean).powi(2))) / (n - 1) as f64)
            } else {
                None
            };
            col.sort_by(f64::total_cmp);
            let degenerate = col[0] == col[n - 1];
            let (mcse, ess) = match &asym {
                Some(_) if degenerate => (Some(0.0), Some(n as f64)),
                Some(cov) => {
                    let s = cov[(j, j)].max(0.0);
                    (
                        Some((s / n as f64).sqrt()),
                        univariate_ess(n as f64, var.unwrap_or(0.0), s),
                    )
                }
                None => (None, None),
            };
            ParameterSummary {
                label: labels[j].clone(),
                mean,
                sd: var.map(f64::sqrt),
                quantiles: Quantiles {
                    q2_5: quantile_sorted(&col, 0.025),
                    q50: quantile_sorted(&col, 0.5),
                    q97_5: quantile_sorted(&col, 0.975),
                },
                mcse,
                ess,
                degenerate,
            }
        })
        .collect();
    let multivariate = match asym {
        Some(cov) => Some(MultivariateSummary {
            labels: labels.to_vec(),
            batch_size: default_batch_size(n),
            covariance: (0..cov.nrows())
                .map(|i| cov.row(i).iter().copied().collect())
                .collect(),
            ess: effective_sample_size(samples, None)?,
        }),
        None => None,
    };
    Ok(SummaryReport {
        n_draws: n,
        parameters,
        multivariate,
        config: None,
        notes: vec![MOMENT_NOTE.to_string()],
    })
}

pub fn summarize(chain: &ChainOutput) -> Result<SummaryReport> {
    let columns: Vec<usize> = (0..chain.labels.len()).collect();
    let mut report = summarize_matrix(&chain.labels, &chain.matrix(&columns))?;
    report.config = Some(chain.config.clone());
    Ok(report)
}

/// Per-parameter comparison of several chains over the same parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetweenWithin {
    pub label: String,
    pub chain_means: Vec<f64>,
    pub pooled_mean: f64,
    /// Variance of the chain means.
    pub between: f64,
    /// Average within-chain variance.
    pub within: f64,
}

pub fn between_within(labels: &[String], chains: &[DMatrix<f64>]) -> Result<Vec<BetweenWithin>> {
    if chains.len() < 2 {
        return Err(Error::TooFewSamples("need at least two chains".into()));
    }
    if chains.iter().any(|c| c.ncols() != labels.len()) {
        return Err(Error::Dimension("chains have different columns".into()));
    }
    let m = chains.len() as f64;
    (0..labels.len())
        .map(|j| {
            let mut chain_means = Vec::new();
            let mut within = 0.0;
            for c in chains {
                let col = DMatrix::from_column_slice(c.nrows(), 1, c.column(j).as_slice());
                chain_means.push(sample_mean(&col)?[0]);
                within += sample_covariance(&col)?[(0, 0)];
            }
            let pooled = chain_means.iter().sum::<f64>() / m;
            let between =
                chain_means.iter().map(|x| (x - pooled).powi(2)).sum::<f64>() / (m - 1.0);
            Ok(BetweenWithin {
                label: labels[j].clone(),
                chain_means,
                pooled_mean: pooled,
                between,
                within: within / m,
            })
        })
        .collect()
}

/// Column vector helper.
pub fn column_matrix(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// d-vector helper for tests and reports.
pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
