//! Penalized least-squares solvers and the default starting values built from
//! them.
//!
//! All objectives have the form ‖y − Xβ‖² + penalty(β) and are minimized by
//! monotone FISTA with backtracking.

pub mod prox;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::robust_norm;
use crate::model::{
    Dataset, FusedState, GroupState, GroupStructure, Hyperparameters, SparseGroupState,
};

/// Lower bound for starting variance components whose minimizing value is 0.
pub const EPS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative objective change tolerance.
    pub obj_tol: f64,
    /// Tolerance on the gradient-mapping norm.
    pub kkt_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            obj_tol: 1e-8,
            kkt_tol: 1e-6,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedSolution {
    pub beta_hat: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
}

/// Penalty of one of the supported objectives.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    Lasso { lambda: f64 },
    Fused { lambda1: f64, lambda2: f64 },
    Group { groups: GroupStructure, lambda: f64 },
    SparseGroup { groups: GroupStructure, l1: f64, group: f64 },
}

impl Penalty {
    pub fn value(&self, beta: &[f64]) -> f64 {
        let l1 = |b: &[f64]| b.iter().map(|x| x.abs()).sum::<f64>();
        let group_sum =
            |g: &GroupStructure| g.ranges().into_iter().map(|r| robust_norm(&beta[r])).sum::<f64>();
        match self {
            Penalty::Lasso { lambda } => lambda * l1(beta),
            Penalty::Fused { lambda1, lambda2 } => {
                lambda1 * l1(beta)
                    + lambda2 * beta.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
            }
            Penalty::Group { groups, lambda } => lambda * group_sum(groups),
            Penalty::SparseGroup { groups, l1: a, group } => a * l1(beta) + group * group_sum(groups),
        }
    }

    /// prox of step·penalty at v.
    pub fn prox(&self, v: &[f64], step: f64) -> Vec<f64> {
        match self {
            Penalty::Lasso { lambda } => {
                let mut x = v.to_vec();
                prox::soft_threshold_in_place(&mut x, step * lambda);
                x
            }
            Penalty::Fused { lambda1, lambda2 } => {
                let mut x = prox::tv1d(v, step * lambda2);
                prox::soft_threshold_in_place(&mut x, step * lambda1);
                x
            }
            Penalty::Group { groups, lambda } => {
                let mut x = v.to_vec();
                prox::block_soft_threshold_in_place(&mut x, &groups.ranges(), step * lambda);
                x
            }
            Penalty::SparseGroup { groups, l1, group } => {
                let mut x = v.to_vec();
                prox::soft_threshold_in_place(&mut x, step * l1);
                prox::block_soft_threshold_in_place(&mut x, &groups.ranges(), step * group);
                x
            }
        }
    }
}

fn smooth_value(data: &Dataset, beta: &[f64]) -> f64 {
    data.residual_sum_of_squares(beta)
}

fn smooth_gradient(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    let b = nalgebra::DVector::from_column_slice(beta);
    let g = (data.xtx() * b - data.xty()) * 2.0;
    g.iter().copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// ‖y − Xβ‖² + penalty(β).
pub fn objective(data: &Dataset, penalty: &Penalty, beta: &[f64]) -> f64 {
    smooth_value(data, beta) + penalty.value(beta)
}

/// Gradient-mapping norm L‖β − prox(β − ∇f/L, 1/L)‖, zero exactly at a
/// minimizer.
pub fn kkt_residual(data: &Dataset, penalty: &Penalty, beta: &[f64], lipschitz: f64) -> f64 {
    let g = smooth_gradient(data, beta);
    let v: Vec<f64> = beta.iter().zip(&g).map(|(b, g)| b - g / lipschitz).collect();
    let z = penalty.prox(&v, 1.0 / lipschitz);
    lipschitz * dist_sq(beta, &z).sqrt()
}

fn check_lambda(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

/// Minimizes ‖y − Xβ‖² + penalty(β) from β = 0.
pub fn solve(data: &Dataset, penalty: &Penalty, opts: &SolverOptions) -> Result<PenalizedSolution> {
    let p = data.p();
    let mut x = vec![0.0; p];
    let mut fx = objective(data, penalty, &x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    // largest diagonal entry of 2XᵀX is a lower bound on the Lipschitz constant
    let mut lip = (0..p).map(|j| 2.0 * data.xtx()[(j, j)]).fold(1e-12, f64::max);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;

    while iterations < opts.max_iter {
        iterations += 1;
        let fy = smooth_value(data, &y);
        let gy = smooth_gradient(data, &y);
        let z = loop {
            let v: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let z = penalty.prox(&v, 1.0 / lip);
            let diff: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy + dot(&gy, &diff) + lip / 2.0 * dot(&diff, &diff);
            let fz = smooth_value(data, &z);
            if fz <= model + 1e-12 * fy.abs().max(1.0) || lip > 1e300 {
                break z;
            }
            lip *= 2.0;
        };
        let fz = objective(data, penalty, &z);
        let x_prev = x.clone();
        let f_prev = fx;
        let restart = fz > fx;
        if !restart {
            x = z.clone();
            fx = fz;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = (0..p)
            .map(|i| {
                x[i] + (t / t_next) * (z[i] - x[i]) + ((t - 1.0) / t_next) * (x[i] - x_prev[i])
            })
            .collect();
        t = if restart { 1.0 } else { t_next };
        if restart {
            y = x.clone();
        }
        trace.push(fx);

        let rel_change = (f_prev - fx).abs() / fx.abs().max(1e-300);
        if rel_change <= opts.obj_tol {
            kkt = kkt_residual(data, penalty, &x, lip);
            if kkt <= opts.kkt_tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_residual(data, penalty, &x, lip);
    }
    Ok(PenalizedSolution {
        objective: objective(data, penalty, &x),
        beta_hat: x,
        iterations,
        converged,
        kkt_residual: kkt,
        objective_trace: trace,
    })
}

/// ‖y − Xβ‖² + λΣ|βⱼ|
pub fn lasso_solve(data: &Dataset, lambda: f64, opts: &SolverOptions) -> Result<PenalizedSolution> {
    check_lambda("lambda", lambda)?;
    solve(data, &Penalty::Lasso { lambda }, opts)
}

/// ‖y − Xβ‖² + λ₁Σ|βⱼ| + λ₂Σ|βⱼ₊₁ − βⱼ|
pub fn fused_lasso_solve(
    data: &Dataset,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution> {
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    solve(data, &Penalty::Fused { lambda1, lambda2 }, opts)
}

/// ‖y − Xβ‖² + λΣₖ‖β_{Gₖ}‖
pub fn group_lasso_solve(
    data: &Dataset,
    groups: &GroupStructure,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution> {
    check_lambda("lambda", lambda)?;
    groups.check_dimension(data.p())?;
    solve(
        data,
        &Penalty::Group {
            groups: groups.clone(),
            lambda,
        },
        opts,
    )
}

/// ‖y − Xβ‖² + λ₁‖β‖₁ + λ₂Σₖ‖β_{Gₖ}‖
pub fn sparse_group_lasso_solve(
    data: &Dataset,
    groups: &GroupStructure,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution> {
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    groups.check_dimension(data.p())?;
    solve(
        data,
        &Penalty::SparseGroup {
            groups: groups.clone(),
            l1: lambda1,
            group: lambda2,
        },
        opts,
    )
}

fn scale_start(norm: f64, lambda: f64) -> f64 {
    (2.0 * norm / lambda).max(EPS_FLOOR)
}

/// Fused lasso estimate with τ²ᵢ = 2|βᵢ|/λ₁ and wᵢ² = 2|βᵢ₊₁ − βᵢ|/λ₂, floored
/// at [`EPS_FLOOR`]. σ² is set to 1 and is not part of the start.
pub fn default_start_bfl(data: &Dataset, hyper: &Hyperparameters) -> Result<FusedState> {
    hyper.validate(crate::ModelKind::Bfl)?;
    let sol = fused_lasso_solve(data, hyper.lambda1, hyper.lambda2, &SolverOptions::default())?;
    Ok(fused_start_from_beta(sol.beta_hat, hyper))
}

pub fn fused_start_from_beta(beta: Vec<f64>, hyper: &Hyperparameters) -> FusedState {
    let tau2 = beta.iter().map(|b| scale_start(b.abs(), hyper.lambda1)).collect();
    let w2 = beta
        .windows(2)
        .map(|w| scale_start((w[1] - w[0]).abs(), hyper.lambda2))
        .collect();
    FusedState {
        beta,
        tau2,
        w2,
        sigma2: 1.0,
    }
}

/// Group lasso estimate (λ = `hyper.lambda1`) with τ²ₖ = 2‖β_{Gₖ}‖/λ.
pub fn default_start_bgl(
    data: &Dataset,
    groups: &GroupStructure,
    hyper: &Hyperparameters,
) -> Result<GroupState> {
    hyper.validate(crate::ModelKind::Bgl)?;
    let sol = group_lasso_solve(data, groups, hyper.lambda1, &SolverOptions::default())?;
    Ok(group_start_from_beta(sol.beta_hat, groups, hyper))
}

pub fn group_start_from_beta(
    beta: Vec<f64>,
    groups: &GroupStructure,
    hyper: &Hyperparameters,
) -> GroupState {
    let tau2 = groups
        .ranges()
        .into_iter()
        .map(|r| scale_start(robust_norm(&beta[r]), hyper.lambda1))
        .collect();
    GroupState {
        beta,
        tau2,
        sigma2: 1.0,
    }
}

/// Minimizer of the sparse group lasso drift function: β₀ solves
/// ‖y − Xβ‖² + λ₁Σₖ‖β_{Gₖ}‖ + λ₂‖β‖₁, τ²ₖ = 2‖β_{Gₖ}‖/λ₁ and
/// γ²ⱼ = 2|βⱼ|/λ₂.
pub fn default_start_bsgl(
    data: &Dataset,
    groups: &GroupStructure,
    hyper: &Hyperparameters,
) -> Result<SparseGroupState> {
    hyper.validate(crate::ModelKind::Bsgl)?;
    let sol = sparse_group_lasso_solve(
        data,
        groups,
        hyper.lambda2,
        hyper.lambda1,
        &SolverOptions::default(),
    )?;
    Ok(sparse_group_start_from_beta(sol.beta_hat, groups, hyper))
}

pub fn sparse_group_start_from_beta(
    beta: Vec<f64>,
    groups: &GroupStructure,
    hyper: &Hyperparameters,
) -> SparseGroupState {
    let tau2 = groups
        .ranges()
        .into_iter()
        .map(|r| scale_start(robust_norm(&beta[r]), hyper.lambda1))
        .collect();
    let gamma2 = beta.iter().map(|b| scale_start(b.abs(), hyper.lambda2)).collect();
    SparseGroupState {
        beta,
        tau2,
        gamma2,
        sigma2: 1.0,
    }
}
