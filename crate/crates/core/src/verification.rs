//! Correctness checks for the samplers and the priors they target.
//!
//! - [`geweke_joint_test`] compares a marginal-conditional simulator (exact
//!   draws from the joint prior) with a successive-conditional simulator that
//!   alternates Gibbs sweeps with fresh responses.
//! - [`fused_prior_propriety_check`] and [`fused_marginal_prior_check`]
//!   integrate the fused lasso scale prior by importance sampling.
//! - [`posterior_oracle_1d`] computes posterior moments of a one-coefficient
//!   model by nested Gauss–Legendre quadrature.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    sample_gamma, sample_gaussian_regression_conditional, sample_inverse_gamma,
    sample_inverse_gaussian, GaussianMethod, PriorPrecision, RngStream,
};
use crate::error::{Error, Result};
use crate::gibbs::{robust_norm, step, KernelOptions, ScaleConditional, ZERO_NORM};
use crate::model::{
    build_fused_precision, require_groups, Dataset, FusedState, GroupState, GroupStructure,
    Hyperparameters, ModelKind, SparseGroupState, State,
};
use crate::output::batch_means_cov;
use crate::quadrature::GaussLegendre;

/// One compared quantity of a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Estimated and reference quantity behind `value`, when it compares two.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl Statistic {
    fn new(name: impl Into<String>, value: f64, threshold: f64, passed: bool) -> Self {
        Statistic {
            name: name.into(),
            value,
            threshold,
            passed,
            estimate: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub statistics: Vec<Statistic>,
    pub notes: Vec<String>,
}

impl CheckResult {
    fn from_statistics(name: impl Into<String>, statistics: Vec<Statistic>) -> Self {
        CheckResult {
            name: name.into(),
            passed: statistics.iter().all(|s| s.passed),
            statistics,
            notes: Vec::new(),
        }
    }

    pub fn max_abs_statistic(&self) -> f64 {
        self.statistics.iter().map(|s| s.value.abs()).fold(0.0, f64::max)
    }
}

/// Laplace(0, scale) draw.
fn laplace(scale: f64, rng: &mut RngStream) -> f64 {
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

fn draw_scale(lambda: f64, sigma2: f64, norm: f64, rng: &mut RngStream) -> Result<f64> {
    ScaleConditional::new(lambda, sigma2, norm).draw_scale(rng)
}

fn check_proper_prior(hyper: &Hyperparameters) -> Result<()> {
    if !(hyper.alpha > 1.0 && hyper.xi > 0.0) {
        return Err(Error::Config(format!(
            "the joint simulator needs a proper σ² prior with a finite mean: \
             alpha > 1 and xi > 0 (got alpha = {}, xi = {})",
            hyper.alpha, hyper.xi
        )));
    }
    Ok(())
}

/// Exact draw of (β, scales, σ²) from the model's prior.
pub fn sample_joint_prior(
    model: ModelKind,
    p: usize,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
    rng: &mut RngStream,
) -> Result<State> {
    let sigma2 = sample_inverse_gamma(hyper.alpha, hyper.xi, rng)?;
    let sigma = sigma2.sqrt();
    Ok(match model {
        ModelKind::Bfl => {
            // β | σ² ∝ exp(−λ₁/σ Σ|βⱼ| − λ₂/σ Σ|Δβⱼ|): Laplace proposal,
            // accept with probability exp(−λ₂/σ Σ|Δβⱼ|)
            let beta = loop {
                let b: Vec<f64> = (0..p).map(|_| laplace(sigma / hyper.lambda1, rng)).collect();
                let tv: f64 = b.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
                if rng.random::<f64>() < (-hyper.lambda2 * tv / sigma).exp() {
                    break b;
                }
            };
            let mut tau2 = Vec::with_capacity(p);
            for b in &beta {
                tau2.push(draw_scale(hyper.lambda1, sigma2, b.abs(), rng)?);
            }
            let mut w2 = Vec::with_capacity(p.saturating_sub(1));
            for w in beta.windows(2) {
                w2.push(draw_scale(hyper.lambda2, sigma2, (w[1] - w[0]).abs(), rng)?);
            }
            State::Bfl(FusedState {
                beta,
                tau2,
                w2,
                sigma2,
            })
        }
        ModelKind::Bgl => {
            let groups = require_groups(groups)?;
            let lambda2 = hyper.lambda1 * hyper.lambda1;
            let mut beta = Vec::with_capacity(p);
            let mut tau2 = Vec::with_capacity(groups.k());
            for &m in groups.sizes() {
                let t = sample_gamma((m as f64 + 1.0) / 2.0, lambda2 / 2.0, rng)?;
                let sd = (sigma2 * t).sqrt();
                beta.extend((0..m).map(|_| sd * rng.standard_normal()));
                tau2.push(t);
            }
            State::Bgl(GroupState { beta, tau2, sigma2 })
        }
        ModelKind::Bsgl => {
            // β_G | σ² ∝ exp(−λ₁‖β_G‖/σ − λ₂‖β_G‖₁/σ): Laplace proposal,
            // accept with probability exp(−λ₁‖β_G‖/σ)
            let groups = require_groups(groups)?;
            let mut beta = Vec::with_capacity(p);
            for &m in groups.sizes() {
                let block = loop {
                    let b: Vec<f64> = (0..m).map(|_| laplace(sigma / hyper.lambda2, rng)).collect();
                    if rng.random::<f64>() < (-hyper.lambda1 * robust_norm(&b) / sigma).exp() {
                        break b;
                    }
                };
                beta.extend(block);
            }
            let mut tau2 = Vec::with_capacity(groups.k());
            for r in groups.ranges() {
                tau2.push(draw_scale(hyper.lambda1, sigma2, robust_norm(&beta[r]), rng)?);
            }
            let mut gamma2 = Vec::with_capacity(p);
            for b in &beta {
                gamma2.push(draw_scale(hyper.lambda2, sigma2, b.abs(), rng)?);
            }
            State::Bsgl(SparseGroupState {
                beta,
                tau2,
                gamma2,
                sigma2,
            })
        }
    })
}

/// y ~ N(Xβ, σ²I)
pub fn sample_response(x: &DMatrix<f64>, state: &State, rng: &mut RngStream) -> DVector<f64> {
    let sigma = state.sigma2().sqrt();
    let mean = x * DVector::from_column_slice(state.beta());
    mean.map(|m| m + sigma * rng.standard_normal())
}

pub const GEWEKE_TEST_FUNCTIONS: [&str; 6] = ["beta1", "beta1^2", "sigma2", "log_sigma2", "tau2_1", "beta1*sigma2"];

fn test_functions(s: &State) -> [f64; 6] {
    let b = s.beta()[0];
    let s2 = s.sigma2();
    [b, b * b, s2, s2.ln(), s.tau2()[0], b * s2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    /// Draws from each simulator.
    pub replicates: usize,
    /// Gibbs sweeps between response redraws.
    pub gibbs_substeps: usize,
    /// Independent successive-conditional chains sharing the replicates.
    pub sc_chains: usize,
    pub z_threshold: f64,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        GewekeConfig {
            replicates: 10_000,
            gibbs_substeps: 1,
            sc_chains: 4,
            z_threshold: 4.0,
        }
    }
}

pub const MIN_GEWEKE_REPLICATES: usize = 10_000;

/// Joint-distribution test of one sampler on an n × p standard normal design.
pub fn geweke_joint_test(
    model: ModelKind,
    n: usize,
    p: usize,
    groups: Option<&GroupStructure>,
    hyper: &Hyperparameters,
    config: &GewekeConfig,
    kernel: &KernelOptions,
    rng: &RngStream,
) -> Result<CheckResult> {
    check_proper_prior(hyper)?;
    hyper.validate(model)?;
    if config.replicates < MIN_GEWEKE_REPLICATES {
        return Err(Error::Config(format!(
            "at least {MIN_GEWEKE_REPLICATES} replicates are required, got {}",
            config.replicates
        )));
    }
    if config.gibbs_substeps == 0 || config.sc_chains == 0 {
        return Err(Error::Config("gibbs_substeps and sc_chains must be positive".into()));
    }
    let groups = if model.needs_groups() {
        let g = require_groups(groups)?;
        g.check_dimension(p)?;
        Some(g)
    } else {
        None
    };
    let mut design_rng = rng.split(0);
    let x = DMatrix::from_fn(n, p, |_, _| design_rng.standard_normal());

    // marginal-conditional
    const BLOCK: usize = 1000;
    let blocks = config.replicates.div_ceil(BLOCK);
    let mc_root = rng.split(1);
    let mc: Vec<[f64; 6]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = mc_root.split(b as u64);
            let count = BLOCK.min(config.replicates - b * BLOCK);
            (0..count)
                .map(|_| sample_joint_prior(model, p, hyper, groups, &mut r).map(|s| test_functions(&s)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // successive-conditional
    let sc_root = rng.split(2);
    let per_chain = config.replicates.div_ceil(config.sc_chains);
    let sc: Vec<Result<Vec<[f64; 6]>>> = (0..config.sc_chains)
        .into_par_iter()
        .map(|c| {
            let mut r = sc_root.split(c as u64);
            let mut state = sample_joint_prior(model, p, hyper, groups, &mut r)?;
            let mut data = Dataset::new(sample_response(&x, &state, &mut r), x.clone())?;
            let mut out = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                for _ in 0..config.gibbs_substeps {
                    state = step(&state, &data, hyper, groups, &mut r, kernel)?;
                }
                data = data.with_response(sample_response(&x, &state, &mut r))?;
                out.push(test_functions(&state));
            }
            Ok(out)
        })
        .collect();
    // a numerical breakdown of the successive-conditional chain is a failure
    // of the sampler under test, not of the harness
    if let Some(Err(e)) = sc.iter().find(|c| c.is_err()) {
        let mut result = CheckResult::from_statistics(
            format!("geweke_{model}"),
            vec![Statistic::new("successive_conditional_breakdown", f64::INFINITY, config.z_threshold, false)],
        );
        result.notes.push(format!("successive-conditional chain failed: {e}"));
        return Ok(result);
    }
    let sc: Vec<Vec<[f64; 6]>> = sc.into_iter().map(|c| c.expect("checked above")).collect();

    let mut statistics = Vec::with_capacity(6);
    for (j, name) in GEWEKE_TEST_FUNCTIONS.iter().enumerate() {
        let vals: Vec<f64> = mc.iter().map(|g| g[j]).collect();
        let m = vals.len() as f64;
        let mean_mc = vals.iter().sum::<f64>() / m;
        let var_mc = vals.iter().map(|v| (v - mean_mc).powi(2)).sum::<f64>() / (m - 1.0);
        let (mut mean_sc, mut var_sc) = (0.0, 0.0);
        let c = sc.len() as f64;
        for chain in &sc {
            let col = DMatrix::from_iterator(chain.len(), 1, chain.iter().map(|g| g[j]));
            let cm = col.mean();
            let asym = batch_means_cov(&col, None)?[(0, 0)];
            mean_sc += cm / c;
            var_sc += asym / chain.len() as f64 / (c * c);
        }
        let se = (var_mc / m + var_sc).sqrt();
        let z = if se > 0.0 { (mean_sc - mean_mc) / se } else { 0.0 };
        statistics.push(Statistic {
            estimate: Some(mean_sc),
            reference: Some(mean_mc),
            ..Statistic::new(format!("z[{name}]"), z, config.z_threshold, z.abs() < config.z_threshold)
        });
    }
    let mut result = CheckResult::from_statistics(format!("geweke_{model}"), statistics);
    if let Some(m) = kernel.mutation {
        result.notes.push(format!("kernel mutation {} enabled", m.as_str()));
    }
    Ok(result)
}

/// Normalizing constant of the dominating scale density: independent
/// τ²ᵢ ~ Exp(λ₁²/2) and wᵢ² with density ∝ (w²)^{−1/2} e^{−λ₂² w²/2}.
fn dominating_constant(p: usize, lambda1: f64, lambda2: f64) -> f64 {
    let tau = 2.0 / (lambda1 * lambda1);
    let w = (2.0 * std::f64::consts::PI).sqrt() / lambda2;
    tau.powi(p as i32) * w.powi(p as i32 - 1)
}

/// A sweep begins with the σ² draw, so its output must not depend on the σ²
/// it is handed. From `trials` prior draws, steps each state twice with the
/// same stream, once with its own σ² and once with an unrelated one, and
/// counts transitions whose output differs in any bit.
pub fn sigma2_entry_invariance_check(
    model: ModelKind,
    n: usize,
    p: usize,
    groups: Option<&GroupStructure>,
    hyper: &Hyperparameters,
    kernel: &KernelOptions,
    trials: usize,
    rng: &RngStream,
) -> Result<CheckResult> {
    check_proper_prior(hyper)?;
    hyper.validate(model)?;
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let mut design = rng.split(0);
    let x = DMatrix::from_fn(n, p, |_, _| design.standard_normal());
    let mut draws = rng.split(1);
    let mut mismatches = 0usize;
    for t in 0..trials {
        let state = sample_joint_prior(model, p, hyper, groups, &mut draws)?;
        let data = Dataset::new(sample_response(&x, &state, &mut draws), x.clone())?;
        let mut other = state.clone();
        other.set_sigma2(sample_inverse_gamma(hyper.alpha, hyper.xi, &mut draws)?);
        let stream = rng.split(2 + t as u64);
        let a = step(&state, &data, hyper, groups, &mut stream.clone(), kernel)?;
        let b = step(&other, &data, hyper, groups, &mut stream.clone(), kernel)?;
        let same = a.flatten().iter().zip(b.flatten()).all(|(u, v)| u.to_bits() == v.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    let mut result = CheckResult::from_statistics(
        format!("sigma2_entry_invariance_{model}"),
        vec![Statistic::new("differing_transitions", mismatches as f64, 0.0, mismatches == 0)],
    );
    result.notes.push(format!("{mismatches} of {trials} transitions read the incoming sigma2"));
    Ok(result)
}

fn check_fused_sizes(p: usize, max_p: usize, lambda1: f64, lambda2: f64) -> Result<()> {
    if p == 0 || p > max_p {
        return Err(Error::Config(format!("p must lie in 1..={max_p}, got {p}")));
    }
    if !(lambda1 > 0.0 && lambda1.is_finite() && lambda2 > 0.0 && lambda2.is_finite()) {
        return Err(Error::InvalidParameter("penalties must be positive".into()));
    }
    Ok(())
}

/// Importance-sampling estimate of the total mass of the fused lasso scale
/// prior det(Σ)^{1/2} Πᵢ(τ²ᵢ)^{−1/2}e^{−λ₁²τ²ᵢ/2} Πᵢ(wᵢ²)^{−1/2}e^{−λ₂²wᵢ²/2},
/// together with the pointwise bound det(Σ⁻¹) Πᵢ 2τ²ᵢ ≥ 1 at every sample.
pub fn fused_prior_propriety_check(
    p: usize,
    lambda1: f64,
    lambda2: f64,
    mc_samples: usize,
    rng: &RngStream,
) -> Result<CheckResult> {
    check_fused_sizes(p, 6, lambda1, lambda2)?;
    if mc_samples < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    const BLOCK: usize = 10_000;
    let blocks = mc_samples.div_ceil(BLOCK);
    // per block: (Σh, Σh², min log-margin)
    let parts: Vec<(f64, f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.split(b as u64);
            let (mut s, mut s2, mut margin) = (0.0, 0.0, f64::INFINITY);
            for _ in 0..BLOCK.min(mc_samples - b * BLOCK) {
                let tau2: Vec<f64> = (0..p)
                    .map(|_| sample_gamma(1.0, lambda1 * lambda1 / 2.0, &mut r))
                    .collect::<Result<_>>()?;
                let w2: Vec<f64> = (0..p - 1)
                    .map(|_| sample_gamma(0.5, lambda2 * lambda2 / 2.0, &mut r))
                    .collect::<Result<_>>()?;
                let prec = build_fused_precision(&tau2, &w2)?;
                // log(det Σ⁻¹ Π τ²)
                let log_dt = log_tridiagonal_det(&prec.diag, &prec.off)
                    + tau2.iter().map(|t| t.ln()).sum::<f64>();
                margin = margin.min(log_dt + p as f64 * std::f64::consts::LN_2);
                let h = (-0.5 * log_dt).exp();
                s += h;
                s2 += h * h;
            }
            Ok((s, s2, margin))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = mc_samples as f64;
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let margin = parts.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    let mean = s / m;
    let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
    let zg = dominating_constant(p, lambda1, lambda2);
    let estimate = zg * mean;
    let rel_err = (var / m).sqrt() / mean;
    let bound = 2f64.powf(p as f64 / 2.0) * zg;
    let mut result = CheckResult::from_statistics(
        format!("fused_prior_propriety_p{p}"),
        vec![
            Statistic::new("relative_mc_error", rel_err, 0.05, estimate.is_finite() && rel_err < 0.05),
            Statistic::new("min_log_dominance_margin", margin, 0.0, margin >= -1e-12),
        ],
    );
    result.notes.push(format!("estimated mass {estimate:.6e}, upper bound {bound:.6e}"));
    result.statistics.push(Statistic::new(
        "estimated_mass",
        estimate,
        bound,
        estimate <= bound * (1.0 + 1e-12),
    ));
    result.passed = result.statistics.iter().all(|s| s.passed);
    Ok(result)
}

/// log det of a symmetric tridiagonal matrix by the scaled three-term
/// recurrence.
fn log_tridiagonal_det(diag: &[f64], off: &[f64]) -> f64 {
    // fᵢ = dᵢ − eᵢ₋₁²/fᵢ₋₁ (pivots of the LDLᵀ factorization)
    let mut log_det = 0.0;
    let mut prev = 1.0;
    for i in 0..diag.len() {
        let f = if i == 0 { diag[0] } else { diag[i] - off[i - 1] * off[i - 1] / prev };
        log_det += f.ln();
        prev = f;
    }
    log_det
}

/// Unnormalized Laplace-form marginal log-density
/// −λ₁/σ Σ|βⱼ| − λ₂/σ Σ|βⱼ₊₁ − βⱼ|.
pub fn fused_laplace_log_density(beta: &[f64], lambda1: f64, lambda2: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let tv: f64 = beta.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    -(lambda1 * l1 + lambda2 * tv) / sigma
}

/// Σ⁻¹_{τ,w} filled entry by entry into a fixed 4 × 4 block.
fn dense_fused_precision(tau2: &[f64], w2: &[f64]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, t) in tau2.iter().enumerate() {
        m[i][i] += 1.0 / t;
    }
    for (i, w) in w2.iter().enumerate() {
        m[i][i] += 1.0 / w;
        m[i + 1][i + 1] += 1.0 / w;
        m[i][i + 1] -= 1.0 / w;
        m[i + 1][i] -= 1.0 / w;
    }
    m
}

fn dense_quad_form(m: &[[f64; 4]; 4], v: &[f64]) -> f64 {
    let mut q = 0.0;
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            q += vi * m[i][j] * vj;
        }
    }
    q
}

/// Compares π(β|σ²)/π(β′|σ²) obtained by integrating N(β; 0, σ²Σ) against the
/// scale prior with the Laplace-form ratio. Scales are drawn as
/// τ²ᵢ ~ Gamma(1/2, λ₁²/2), wᵢ² ~ Gamma(1/2, λ₂²/2), shared by β and β′.
pub fn fused_marginal_prior_check(
    p: usize,
    lambda1: f64,
    lambda2: f64,
    sigma2: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    mc_samples: usize,
    rng: &RngStream,
) -> Result<CheckResult> {
    check_fused_sizes(p, 4, lambda1, lambda2)?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    if mc_samples < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    for (a, b) in pairs {
        if a.len() != p || b.len() != p {
            return Err(Error::Dimension(format!("β points must have length {p}")));
        }
    }
    let statistics = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let mut r = rng.split(i as u64);
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let (mut tau2, mut w2) = ([0.0; 4], [0.0; 3]);
            for _ in 0..mc_samples {
                for t in &mut tau2[..p] {
                    *t = sample_gamma(0.5, lambda1 * lambda1 / 2.0, &mut r)?;
                }
                for w in &mut w2[..p - 1] {
                    *w = sample_gamma(0.5, lambda2 * lambda2 / 2.0, &mut r)?;
                }
                let dense = dense_fused_precision(&tau2[..p], &w2[..p - 1]);
                let ha = (-dense_quad_form(&dense, a) / (2.0 * sigma2)).exp();
                let hb = (-dense_quad_form(&dense, b) / (2.0 * sigma2)).exp();
                sa += ha;
                sb += hb;
                saa += ha * ha;
                sbb += hb * hb;
                sab += ha * hb;
            }
            let m = mc_samples as f64;
            let (ma, mb) = (sa / m, sb / m);
            let va = (saa / m - ma * ma) * m / (m - 1.0);
            let vb = (sbb / m - mb * mb) * m / (m - 1.0);
            let cab = (sab / m - ma * mb) * m / (m - 1.0);
            let ratio = ma / mb;
            // delta method for a ratio of correlated means
            let var_ratio = (va / (mb * mb) - 2.0 * ma * cab / mb.powi(3) + ma * ma * vb / mb.powi(4)) / m;
            let exact = (fused_laplace_log_density(a, lambda1, lambda2, sigma2)
                - fused_laplace_log_density(b, lambda1, lambda2, sigma2))
            .exp();
            let se = var_ratio.max(0.0).sqrt();
            let z = if se > 0.0 {
                (ratio - exact) / se
            } else if ratio == exact {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(Statistic {
                estimate: Some(ratio),
                reference: Some(exact),
                ..Statistic::new(format!("pair{i}"), z, 3.0, z.abs() <= 3.0)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckResult::from_statistics(format!("fused_marginal_prior_p{p}"), statistics))
}

/// Grid controls for [`posterior_oracle_1d`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Starting number of panels; doubled until the moments settle.
    pub panels: usize,
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            nodes: 20,
            panels: 4,
            rel_tol: 1e-9,
            max_refinements: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub beta_mean: f64,
    pub beta_var: f64,
    pub sigma2_mean: f64,
    pub sigma2_var: f64,
    /// Largest relative change between the last two refinements.
    pub rel_error: f64,
    pub refinements: usize,
}

/// Posterior moments of (β, σ²) for a single coefficient with prior
/// β | σ² ~ Laplace(σ/λ) and σ² ~ Inverse-Gamma(α, ξ), where λ = `lambda1`.
/// This is the p = 1 case of both the fused and the group model; the scale
/// τ² is integrated out in closed form.
pub fn posterior_oracle_1d(
    data: &Dataset,
    hyper: &Hyperparameters,
    spec: &OracleSpec,
) -> Result<PosteriorMoments> {
    if data.p() != 1 {
        return Err(Error::Dimension(format!("the oracle needs p = 1, got {}", data.p())));
    }
    if data.n() > 10 {
        return Err(Error::Config(format!("the oracle is limited to n ≤ 10, got {}", data.n())));
    }
    if !(hyper.lambda1 > 0.0 && hyper.alpha >= 0.0 && hyper.xi >= 0.0) {
        return Err(Error::InvalidParameter("need lambda1 > 0, alpha ≥ 0, xi ≥ 0".into()));
    }
    let xtx = data.xtx()[(0, 0)];
    let xty = data.xty()[0];
    let yty = data.yty();
    let n = data.n() as f64;
    let lambda = hyper.lambda1;
    let m = xty / xtx;

    // log joint density in (β, u = log σ²), Jacobian included
    let log_joint = |beta: f64, u: f64| -> f64 {
        let s2 = u.exp();
        let rss = yty - 2.0 * beta * xty + beta * beta * xtx;
        -(n / 2.0) * u - rss / (2.0 * s2) + lambda.ln() - std::f64::consts::LN_2 - u / 2.0
            - lambda * beta.abs() / s2.sqrt()
            - (hyper.alpha + 1.0) * u
            - hyper.xi / s2
            + u
    };
    let rule = GaussLegendre::new(spec.nodes);

    // inner integral over β at fixed u: (log mass, E[β|u], E[β²|u])
    let inner = |u: f64, panels: usize| -> (f64, f64, f64) {
        let s = (u.exp() / xtx).sqrt();
        let lo = m.min(0.0) - 15.0 * s;
        let hi = m.max(0.0) + 15.0 * s;
        let mut pts = rule.composite_points(lo, 0.0, panels);
        pts.extend(rule.composite_points(0.0, hi, panels));
        let logs: Vec<f64> = pts.iter().map(|(b, _)| log_joint(*b, u)).collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut e1, mut e2) = (0.0, 0.0, 0.0);
        for ((b, w), l) in pts.iter().zip(&logs) {
            let f = w * (l - mx).exp();
            z += f;
            e1 += f * b;
            e2 += f * b * b;
        }
        (mx + z.ln(), e1 / z, e2 / z)
    };

    // locate the σ² mass on a coarse scan
    let scan: Vec<(f64, f64)> = (0..=640)
        .map(|i| {
            let u = -40.0 + 0.125 * i as f64;
            (u, inner(u, 2).0)
        })
        .collect();
    let peak = scan.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<f64> = scan.iter().filter(|x| x.1 > peak - 60.0).map(|x| x.0).collect();
    let (u_lo, u_hi) = (keep[0] - 0.5, keep[keep.len() - 1] + 0.5);

    let moments = |panels: usize| -> [f64; 4] {
        let pts = rule.composite_points(u_lo, u_hi, panels * 4);
        let vals: Vec<(f64, f64, f64, f64)> = pts
            .iter()
            .map(|(u, w)| {
                let (lm, e1, e2) = inner(*u, panels);
                (lm + w.ln(), e1, e2, *u)
            })
            .collect();
        let mx = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut b1, mut b2, mut s1, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (lw, e1, e2, u) in vals {
            let f = (lw - mx).exp();
            let sig = u.exp();
            z += f;
            b1 += f * e1;
            b2 += f * e2;
            s1 += f * sig;
            s2 += f * sig * sig;
        }
        let (b1, b2, s1, s2) = (b1 / z, b2 / z, s1 / z, s2 / z);
        [b1, b2 - b1 * b1, s1, s2 - s1 * s1]
    };

    let mut panels = spec.panels.max(1);
    let mut prev = moments(panels);
    for refinement in 1..=spec.max_refinements {
        panels *= 2;
        let cur = moments(panels);
        let scale = [prev[1].sqrt(), prev[1], prev[2], prev[3]];
        let rel = (0..4)
            .map(|i| (cur[i] - prev[i]).abs() / scale[i].abs().max(1e-300))
            .fold(0.0, f64::max);
        if rel < spec.rel_tol {
            return Ok(PosteriorMoments {
                beta_mean: cur[0],
                beta_var: cur[1],
                sigma2_mean: cur[2],
                sigma2_var: cur[3],
                rel_error: rel,
                refinements: refinement,
            });
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!(
        "posterior moments did not settle to {:e} after {} refinements",
        spec.rel_tol, spec.max_refinements
    )))
}

/// State of the Bayesian lasso: one scale per coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoState {
    pub beta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sigma2: f64,
}

/// One sweep of the Bayesian lasso sampler written directly for
/// D_τ = diag(τ²ᵢ), with λ = `hyper.lambda1`.
pub fn bayesian_lasso_step(
    state: &LassoState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
    method: GaussianMethod,
) -> Result<LassoState> {
    let p = state.beta.len();
    let lambda = hyper.lambda1;
    let inv: Vec<f64> = state.tau2.iter().map(|t| 1.0 / t).collect();
    let quad: f64 = inv.iter().zip(&state.beta).map(|(d, b)| d * b * b).sum();
    let shape = (data.n() as f64 + p as f64 + 2.0 * hyper.alpha) / 2.0;
    let rate = (data.residual_sum_of_squares(&state.beta) + quad + 2.0 * hyper.xi) / 2.0;
    let sigma2 = sample_inverse_gamma(shape, rate, rng)?;

    let mut tau2 = Vec::with_capacity(p);
    for b in &state.beta {
        let a = b.abs();
        tau2.push(if a < ZERO_NORM {
            sample_gamma(0.5, lambda * lambda / 2.0, rng)?
        } else {
            1.0 / sample_inverse_gaussian(lambda * sigma2.sqrt() / a, lambda * lambda, rng)?
        });
    }
    let prior = PriorPrecision::Diagonal(tau2.iter().map(|t| 1.0 / t).collect());
    let beta = sample_gaussian_regression_conditional(data, &prior, sigma2, rng, method)?;
    Ok(LassoState { beta, tau2, sigma2 })
}
