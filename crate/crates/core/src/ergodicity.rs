//! Drift functions, drift rates and constants, minorization constants and an
//! empirical check of the drift inequality.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::RngStream;
use crate::error::{Error, Result};
use crate::gibbs::{robust_norm, step, KernelOptions};
use crate::model::{
    build_fused_precision, build_group_precision, build_sparse_precision, require_groups, Dataset,
    GroupStructure, Hyperparameters, ModelKind, State,
};

/// Evaluates the model's drift function V at `state`. V has no σ² term.
pub fn drift_value(
    state: &State,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
) -> Result<f64> {
    state.validate(groups)?;
    if state.beta().len() != data.p() {
        return Err(Error::Dimension(format!(
            "state has p = {} but the data have p = {}",
            state.beta().len(),
            data.p()
        )));
    }
    let beta = state.beta();
    let rss = data.residual_sum_of_squares(beta);
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let (l1sq, l2sq) = (hyper.lambda1.powi(2), hyper.lambda2.powi(2));
    Ok(match state {
        State::Bfl(s) => {
            let q = build_fused_precision(&s.tau2, &s.w2)?.quad_form(beta);
            rss + q + l1sq / 4.0 * sum(&s.tau2) + l2sq / 4.0 * sum(&s.w2)
        }
        State::Bgl(s) => {
            let d = build_group_precision(&s.tau2, require_groups(groups)?)?;
            let q: f64 = d.iter().zip(beta).map(|(d, b)| d * b * b).sum();
            rss + q + l1sq / 4.0 * sum(&s.tau2)
        }
        State::Bsgl(s) => {
            let d = build_sparse_precision(&s.tau2, &s.gamma2, require_groups(groups)?)?;
            let q: f64 = d.iter().zip(beta).map(|(d, b)| d * b * b).sum();
            rss + q + l1sq / 4.0 * sum(&s.tau2) + l2sq / 4.0 * sum(&s.gamma2)
        }
    })
}

/// Everything the closed-form drift and minorization constants depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftInputs {
    pub n: usize,
    pub p: usize,
    /// Number of groups (p for the fused model).
    pub k: usize,
    /// Largest group size (1 for the fused model).
    pub m: usize,
    pub alpha: f64,
    pub xi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub yty: f64,
}

impl DriftInputs {
    pub fn from_data(
        model: ModelKind,
        data: &Dataset,
        hyper: &Hyperparameters,
        groups: Option<&GroupStructure>,
    ) -> Result<Self> {
        let (k, m) = if model.needs_groups() {
            let g = require_groups(groups)?;
            g.check_dimension(data.p())?;
            (g.k(), g.max_size())
        } else {
            (data.p(), 1)
        };
        Ok(DriftInputs {
            n: data.n(),
            p: data.p(),
            k,
            m,
            alpha: hyper.alpha,
            xi: hyper.xi,
            lambda1: hyper.lambda1,
            lambda2: hyper.lambda2,
            yty: data.yty(),
        })
    }

    fn shifted_denominator(&self) -> Result<f64> {
        let den = self.n as f64 + self.p as f64 + 2.0 * self.alpha - 2.0;
        if den <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "n + p + 2α − 2 must be positive, got {den}"
            )));
        }
        Ok(den)
    }
}

/// Drift rate φ. For the sparse group model the three-term maximum uses the
/// denominators 8(·) and 8M(·).
pub fn drift_rate(model: ModelKind, inputs: &DriftInputs) -> Result<f64> {
    let first = inputs.p as f64 / inputs.shifted_denominator()?;
    Ok(match model {
        ModelKind::Bfl | ModelKind::Bgl => first.max(0.5),
        ModelKind::Bsgl => bsgl_rate(inputs, 8.0)?.max(first),
    })
}

/// The sparse group rate with denominators 2(·) and 2M(·), as displayed
/// alongside the main result. Reported for comparison only.
pub fn drift_rate_bsgl_remark(inputs: &DriftInputs) -> Result<f64> {
    let first = inputs.p as f64 / inputs.shifted_denominator()?;
    Ok(bsgl_rate(inputs, 2.0)?.max(first))
}

fn bsgl_rate(inputs: &DriftInputs, c: f64) -> Result<f64> {
    let (l1, l2) = lambda_pair(inputs)?;
    let r12 = l1 * l1 / (l2 * l2);
    let r21 = l2 * l2 / (l1 * l1);
    let s = 1.0 + r12 + r21;
    let m = inputs.m.max(1) as f64;
    Ok(((1.0 + r21) / (c * s)).max((1.0 + r12) / (c * m * s)))
}

fn lambda_pair(inputs: &DriftInputs) -> Result<(f64, f64)> {
    if !(inputs.lambda1 > 0.0 && inputs.lambda2 > 0.0) {
        return Err(Error::InvalidParameter(
            "both penalties must be positive for the sparse group model".into(),
        ));
    }
    Ok((inputs.lambda1, inputs.lambda2))
}

/// Drift constant L.
pub fn drift_constant(model: ModelKind, inputs: &DriftInputs) -> Result<f64> {
    let den = inputs.shifted_denominator()?;
    let (n, p, a) = (inputs.n as f64, inputs.p as f64, inputs.alpha);
    let m = inputs.m.max(1) as f64;
    let xi_term = 2.0 * p * inputs.xi / den;
    let middle = match model {
        ModelKind::Bfl => p / 2.0 * (n + p + 2.0 * a + 2.0),
        ModelKind::Bgl => p / 4.0 * (1.0 + m * (n + p + 2.0 * a) / 2.0),
        ModelKind::Bsgl => {
            let (l1, l2) = lambda_pair(inputs)?;
            let big_a = (1.0 + l1 * l1 / (l2 * l2) + l2 * l2 / (l1 * l1)) * (n + p + 2.0 * a);
            p / 4.0 * (2.0 + big_a * m)
        }
    };
    Ok(inputs.yty + middle + xi_term)
}

/// multiplier · 2L/(1 − φ)
pub fn small_set_radius(phi: f64, l: f64, multiplier: f64) -> Result<f64> {
    if !(phi >= 0.0 && phi < 1.0) {
        return Err(Error::InvalidParameter(format!("phi must lie in [0, 1), got {phi}")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {l}")));
    }
    if !(multiplier >= 1.0 && multiplier.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "multiplier must be at least 1, got {multiplier}"
        )));
    }
    Ok(multiplier * 2.0 * l / (1.0 - phi))
}

/// Minorization constant of the small set {V ≤ d}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minorization {
    pub epsilon: f64,
    pub log_epsilon: f64,
    /// y'y − y'X(X'X + cI)⁻¹X'y + 2ξ
    pub numerator: f64,
    pub denominator: f64,
    pub ridge: f64,
    pub exponent: f64,
}

pub fn minorization_epsilon(
    model: ModelKind,
    d: f64,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
) -> Result<Minorization> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("d must be positive, got {d}")));
    }
    hyper.validate(model)?;
    let inputs = DriftInputs::from_data(model, data, hyper, groups)?;
    let (p, k) = (inputs.p as f64, inputs.k as f64);
    let (l1sq, l2sq) = (hyper.lambda1.powi(2), hyper.lambda2.powi(2));
    let d1sq = 4.0 * d * d / l1sq;
    let (ridge, denominator, log_pref) = match model {
        ModelKind::Bfl => {
            let d2sq = 4.0 * d * d / l2sq;
            (
                l1sq / (8.0 * d),
                d + 2.0 * hyper.xi + p * p * l2sq * d2sq + p * p * l1sq * d1sq,
                -1.0,
            )
        }
        ModelKind::Bgl => (l1sq / (4.0 * d), d + 2.0 * hyper.xi + 4.0 * k * k * d * d, -0.5),
        ModelKind::Bsgl => {
            let d2sq = 4.0 * d * d / l2sq;
            (
                (l1sq + l2sq) / (4.0 * d),
                d + 2.0 * hyper.xi + p * p * l2sq * d2sq + k * k * l1sq * d1sq,
                -1.0,
            )
        }
    };
    let mut a = data.xtx().clone();
    for i in 0..data.p() {
        a[(i, i)] += ridge;
    }
    let chol = nalgebra::Cholesky::new(a)
        .ok_or_else(|| Error::Decomposition("X'X + cI is not positive definite".into()))?;
    let sol = chol.solve(data.xty());
    let numerator = data.yty() - data.xty().dot(&sol) + 2.0 * hyper.xi;
    if !(numerator > 0.0) {
        return Err(Error::DegenerateEpsilon(format!(
            "y'y − y'X(X'X + {ridge:e} I)⁻¹X'y + 2ξ = {numerator:e} is not positive; \
             set ξ > 0 or check that y is not fit exactly"
        )));
    }
    let exponent = (inputs.n as f64 + p) / 2.0 + hyper.alpha;
    let log_epsilon = (log_pref + exponent * (numerator.ln() - denominator.ln())).min(0.0);
    Ok(Minorization {
        epsilon: log_epsilon.exp(),
        log_epsilon,
        numerator,
        denominator,
        ridge,
        exponent,
    })
}

/// Closed-form ergodicity constants for one model and data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub model: ModelKind,
    pub phi: f64,
    /// Sparse group model only: the rate with denominators 2(·) and 2M(·).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_alternative: Option<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    pub d: f64,
    pub radius_multiplier: f64,
    pub epsilon: f64,
    pub log_epsilon: f64,
    /// False when n < 3, where the rates are not covered by the theory.
    pub n_at_least_three: bool,
    pub inputs: DriftInputs,
}

pub fn drift_report(
    model: ModelKind,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
    radius_multiplier: f64,
) -> Result<DriftReport> {
    hyper.validate(model)?;
    let inputs = DriftInputs::from_data(model, data, hyper, groups)?;
    let phi = drift_rate(model, &inputs)?;
    let l = drift_constant(model, &inputs)?;
    let d = small_set_radius(phi, l, radius_multiplier)?;
    let m = minorization_epsilon(model, d, data, hyper, groups)?;
    Ok(DriftReport {
        model,
        phi,
        phi_alternative: match model {
            ModelKind::Bsgl => Some(drift_rate_bsgl_remark(&inputs)?),
            _ => None,
        },
        l,
        d,
        radius_multiplier,
        epsilon: m.epsilon,
        log_epsilon: m.log_epsilon,
        n_at_least_three: data.n() >= 3,
        inputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub v: f64,
    pub expected_next_v: f64,
    pub mc_se: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDriftResult {
    pub phi: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub replicates: usize,
    pub rows: Vec<DriftRow>,
}

impl EmpiricalDriftResult {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.satisfied).count()
    }
}

pub const MIN_DRIFT_REPLICATES: usize = 1000;

/// Averages V over `replicates` independent one-step transitions from each
/// state and compares with φV + L, allowing 3 Monte Carlo standard errors.
/// State i uses the stream `rng.split(i)`.
pub fn empirical_drift_check(
    model: ModelKind,
    states: &[State],
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
    replicates: usize,
    rng: &RngStream,
) -> Result<EmpiricalDriftResult> {
    if replicates < MIN_DRIFT_REPLICATES {
        return Err(Error::Config(format!(
            "at least {MIN_DRIFT_REPLICATES} replicates are required, got {replicates}"
        )));
    }
    let inputs = DriftInputs::from_data(model, data, hyper, groups)?;
    let phi = drift_rate(model, &inputs)?;
    let l = drift_constant(model, &inputs)?;
    let opts = KernelOptions::default();
    let rows = states
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.model() != model {
                return Err(Error::StateMismatch(format!(
                    "state {i} belongs to {} but the check is for {model}",
                    s.model()
                )));
            }
            let v = drift_value(s, data, hyper, groups)?;
            let mut stream = rng.split(i as u64);
            let mut acc = Welford::default();
            for _ in 0..replicates {
                let next = step(s, data, hyper, groups, &mut stream, &opts)?;
                acc.push(drift_value(&next, data, hyper, groups)?);
            }
            let mc_se = (acc.variance() / replicates as f64).sqrt();
            let bound = phi * v + l;
            Ok(DriftRow {
                v,
                expected_next_v: acc.mean,
                mc_se,
                bound,
                satisfied: acc.mean <= bound + 3.0 * mc_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalDriftResult {
        phi,
        l,
        replicates,
        rows,
    })
}

#[derive(Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// y'y − y'X(X'X + Σ⁻¹)⁻¹X'y, the minimum over β of
/// (y − Xβ)'(y − Xβ) + β'Σ⁻¹β.
pub fn completed_square_minimum(data: &Dataset, precision: &DMatrix<f64>) -> Result<f64> {
    let a = data.xtx() + precision;
    let chol = nalgebra::Cholesky::new(a)
        .ok_or_else(|| Error::Decomposition("X'X + Σ⁻¹ is not positive definite".into()))?;
    Ok(data.yty() - data.xty().dot(&chol.solve(data.xty())))
}

/// Group norm helper used by the report code.
pub fn group_norms(beta: &[f64], groups: &GroupStructure) -> Vec<f64> {
    groups.ranges().into_iter().map(|r| robust_norm(&beta[r])).collect()
}
