//! Data, hyperparameter and state containers plus the prior precision
//! constructors shared by the three models.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_all_positive, check_positive, Error, Result};

/// Which of the three penalized regression models a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Bayesian fused lasso.
    Bfl,
    /// Bayesian group lasso.
    Bgl,
    /// Bayesian sparse group lasso.
    Bsgl,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bfl => "bfl",
            ModelKind::Bgl => "bgl",
            ModelKind::Bsgl => "bsgl",
        }
    }

    pub fn needs_groups(self) -> bool {
        !matches!(self, ModelKind::Bfl)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bfl" => Ok(ModelKind::Bfl),
            "bgl" => Ok(ModelKind::Bgl),
            "bsgl" => Ok(ModelKind::Bsgl),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Response vector and model matrix, with the cross products every sampler
/// needs cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() || x.ncols() == 0 {
            return Err(Error::Dimension("need n >= 1 and p >= 1".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "X has {} rows but y has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("data contain non-finite values".into()));
        }
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let yty = y.dot(&y);
        Ok(Dataset { y, x, xtx, xty, yty })
    }

    /// Builds a dataset from row-major predictor rows.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged predictor rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::new(DVector::from_vec(y), x)
    }

    /// Same design, new response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension("response length changed".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("response contains non-finite values".into()));
        }
        let xty = self.x.transpose() * &y;
        let yty = y.dot(&y);
        Ok(Dataset {
            y,
            x: self.x.clone(),
            xtx: self.xtx.clone(),
            xty,
            yty,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn xtx(&self) -> &DMatrix<f64> {
        &self.xtx
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// (y - Xβ)ᵀ(y - Xβ)
    pub fn residual_sum_of_squares(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        (&self.y - &self.x * b).norm_squared()
    }
}

/// Consecutive coefficient groups of sizes m_1, ..., m_K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    sizes: Vec<usize>,
}

impl GroupStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Structure("at least one group is required".into()));
        }
        if let Some(k) = sizes.iter().position(|&m| m == 0) {
            return Err(Error::Structure(format!("group {} has size zero", k + 1)));
        }
        Ok(GroupStructure { sizes })
    }

    /// K groups of size one: the Bayesian lasso.
    pub fn singletons(p: usize) -> Result<Self> {
        GroupStructure::new(vec![1; p])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn p(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// M = max_k m_k.
    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Index ranges of each group in coefficient order.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.sizes
            .iter()
            .map(|&m| {
                let r = start..start + m;
                start += m;
                r
            })
            .collect()
    }

    /// Group index of every coefficient.
    pub fn membership(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &m)| std::iter::repeat_n(k, m))
            .collect()
    }

    pub fn check_dimension(&self, p: usize) -> Result<()> {
        if self.p() != p {
            return Err(Error::Structure(format!(
                "group sizes sum to {} but p = {p}",
                self.p()
            )));
        }
        Ok(())
    }

    /// Squared Euclidean norm of each group of `beta`.
    pub fn group_norms_sq(&self, beta: &[f64]) -> Vec<f64> {
        self.ranges()
            .into_iter()
            .map(|r| beta[r].iter().map(|b| b * b).sum())
            .collect()
    }
}

/// Fixed hyperparameters. The group lasso reads `lambda1` as its single λ
/// and ignores `lambda2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub xi: f64,
}

impl Hyperparameters {
    pub fn new(lambda1: f64, lambda2: f64, alpha: f64, xi: f64) -> Self {
        Hyperparameters {
            lambda1,
            lambda2,
            alpha,
            xi,
        }
    }

    pub fn validate(&self, model: ModelKind) -> Result<()> {
        check_positive("lambda1", self.lambda1)?;
        if model != ModelKind::Bgl {
            check_positive("lambda2", self.lambda2)?;
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::InvalidParameter(format!("xi must be >= 0, got {}", self.xi)));
        }
        Ok(())
    }
}

/// (β, τ², w², σ²) of the fused lasso chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedState {
    pub beta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub w2: Vec<f64>,
    pub sigma2: f64,
}

/// (β, τ², σ²) of the group lasso chain; τ² has one entry per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    pub beta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sigma2: f64,
}

/// (β, τ², γ², σ²) of the sparse group lasso chain; γ² is stored in
/// coefficient order, grouped by the model's `GroupStructure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGroupState {
    pub beta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub sigma2: f64,
}

impl FusedState {
    pub fn validate(&self) -> Result<()> {
        let p = self.beta.len();
        if p == 0 || self.tau2.len() != p || self.w2.len() + 1 != p {
            return Err(Error::Dimension(format!(
                "fused state needs |tau2| = p and |w2| = p - 1 (p = {p}, |tau2| = {}, |w2| = {})",
                self.tau2.len(),
                self.w2.len()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        check_all_positive("tau2", &self.tau2)?;
        check_all_positive("w2", &self.w2)?;
        check_positive("sigma2", self.sigma2)
    }
}

impl GroupState {
    pub fn validate(&self, groups: &GroupStructure) -> Result<()> {
        groups.check_dimension(self.beta.len())?;
        if self.tau2.len() != groups.k() {
            return Err(Error::Dimension(format!(
                "tau2 has {} entries for {} groups",
                self.tau2.len(),
                groups.k()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        check_all_positive("tau2", &self.tau2)?;
        check_positive("sigma2", self.sigma2)
    }
}

impl SparseGroupState {
    pub fn validate(&self, groups: &GroupStructure) -> Result<()> {
        groups.check_dimension(self.beta.len())?;
        if self.tau2.len() != groups.k() || self.gamma2.len() != self.beta.len() {
            return Err(Error::Dimension(
                "sparse group state needs |tau2| = K and |gamma2| = p".into(),
            ));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        check_all_positive("tau2", &self.tau2)?;
        check_all_positive("gamma2", &self.gamma2)?;
        check_positive("sigma2", self.sigma2)
    }
}

/// A state of any of the three chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum State {
    Bfl(FusedState),
    Bgl(GroupState),
    Bsgl(SparseGroupState),
}

impl State {
    pub fn model(&self) -> ModelKind {
        match self {
            State::Bfl(_) => ModelKind::Bfl,
            State::Bgl(_) => ModelKind::Bgl,
            State::Bsgl(_) => ModelKind::Bsgl,
        }
    }

    pub fn beta(&self) -> &[f64] {
        match self {
            State::Bfl(s) => &s.beta,
            State::Bgl(s) => &s.beta,
            State::Bsgl(s) => &s.beta,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            State::Bfl(s) => s.sigma2,
            State::Bgl(s) => s.sigma2,
            State::Bsgl(s) => s.sigma2,
        }
    }

    pub fn set_sigma2(&mut self, sigma2: f64) {
        match self {
            State::Bfl(s) => s.sigma2 = sigma2,
            State::Bgl(s) => s.sigma2 = sigma2,
            State::Bsgl(s) => s.sigma2 = sigma2,
        }
    }

    pub fn tau2(&self) -> &[f64] {
        match self {
            State::Bfl(s) => &s.tau2,
            State::Bgl(s) => &s.tau2,
            State::Bsgl(s) => &s.tau2,
        }
    }

    pub fn validate(&self, groups: Option<&GroupStructure>) -> Result<()> {
        match self {
            State::Bfl(s) => s.validate(),
            State::Bgl(s) => s.validate(require_groups(groups)?),
            State::Bsgl(s) => s.validate(require_groups(groups)?),
        }
    }

    /// State as one row: β, τ², then w² or γ², then σ².
    pub fn flatten(&self) -> Vec<f64> {
        let mut row = Vec::new();
        match self {
            State::Bfl(s) => {
                row.extend_from_slice(&s.beta);
                row.extend_from_slice(&s.tau2);
                row.extend_from_slice(&s.w2);
                row.push(s.sigma2);
            }
            State::Bgl(s) => {
                row.extend_from_slice(&s.beta);
                row.extend_from_slice(&s.tau2);
                row.push(s.sigma2);
            }
            State::Bsgl(s) => {
                row.extend_from_slice(&s.beta);
                row.extend_from_slice(&s.tau2);
                row.extend_from_slice(&s.gamma2);
                row.push(s.sigma2);
            }
        }
        row
    }

    /// Column labels matching [`State::flatten`].
    pub fn labels(model: ModelKind, p: usize, groups: Option<&GroupStructure>) -> Vec<String> {
        let mut labels: Vec<String> = (1..=p).map(|i| format!("beta.{i}")).collect();
        match model {
            ModelKind::Bfl => {
                labels.extend((1..=p).map(|i| format!("tau2.{i}")));
                labels.extend((1..p).map(|i| format!("w2.{i}")));
            }
            ModelKind::Bgl => {
                let k = groups.map_or(p, GroupStructure::k);
                labels.extend((1..=k).map(|i| format!("tau2.{i}")));
            }
            ModelKind::Bsgl => {
                let k = groups.map_or(p, GroupStructure::k);
                labels.extend((1..=k).map(|i| format!("tau2.{i}")));
                labels.extend((1..=p).map(|i| format!("gamma2.{i}")));
            }
        }
        labels.push("sigma2".into());
        labels
    }

    /// Inverse of [`State::flatten`].
    pub fn unflatten(
        model: ModelKind,
        row: &[f64],
        p: usize,
        groups: Option<&GroupStructure>,
    ) -> Result<State> {
        let expected = State::labels(model, p, groups).len();
        if row.len() != expected {
            return Err(Error::Dimension(format!(
                "state row has {} values, expected {expected}",
                row.len()
            )));
        }
        let beta = row[..p].to_vec();
        let sigma2 = row[row.len() - 1];
        let state = match model {
            ModelKind::Bfl => State::Bfl(FusedState {
                beta,
                tau2: row[p..2 * p].to_vec(),
                w2: row[2 * p..3 * p - 1].to_vec(),
                sigma2,
            }),
            ModelKind::Bgl => {
                let k = require_groups(groups)?.k();
                State::Bgl(GroupState {
                    beta,
                    tau2: row[p..p + k].to_vec(),
                    sigma2,
                })
            }
            ModelKind::Bsgl => {
                let k = require_groups(groups)?.k();
                State::Bsgl(SparseGroupState {
                    beta,
                    tau2: row[p..p + k].to_vec(),
                    gamma2: row[p + k..p + k + p].to_vec(),
                    sigma2,
                })
            }
        };
        Ok(state)
    }
}

pub(crate) fn require_groups(groups: Option<&GroupStructure>) -> Result<&GroupStructure> {
    groups.ok_or_else(|| Error::Structure("group structure required for this model".into()))
}

/// Symmetric tridiagonal matrix stored as its main and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Dimension(
                "tridiagonal needs p >= 1 diagonal and p - 1 off-diagonal entries".into(),
            ));
        }
        Ok(Tridiagonal { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            m[(i, i)] = self.diag[i];
        }
        for (i, &o) in self.off.iter().enumerate() {
            m[(i, i + 1)] = o;
            m[(i + 1, i)] = o;
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        (0..p)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < p {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Determinant by the three-term recurrence
    /// f_i = a_i f_{i-1} - b_{i-1}² f_{i-2}.
    pub fn determinant(&self) -> f64 {
        let mut prev2 = 1.0;
        let mut prev = self.diag[0];
        for i in 1..self.dim() {
            let cur = self.diag[i] * prev - self.off[i - 1] * self.off[i - 1] * prev2;
            prev2 = prev;
            prev = cur;
        }
        prev
    }

    /// Lower bidiagonal Cholesky factor: (diagonal, sub-diagonal).
    pub fn cholesky(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.dim();
        let mut d = vec![0.0; p];
        let mut l = vec![0.0; p.saturating_sub(1)];
        for i in 0..p {
            let mut a = self.diag[i];
            if i > 0 {
                l[i - 1] = self.off[i - 1] / d[i - 1];
                a -= l[i - 1] * l[i - 1];
            }
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Decomposition(format!(
                    "tridiagonal matrix is not positive definite (pivot {i})"
                )));
            }
            d[i] = a.sqrt();
        }
        Ok((d, l))
    }

    /// Solves T x = b with the Thomas algorithm.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let p = self.dim();
        let mut c = vec![0.0; p];
        let mut x = b.to_vec();
        let mut denom = self.diag[0];
        if denom == 0.0 {
            return Err(Error::Decomposition("singular tridiagonal system".into()));
        }
        if p > 1 {
            c[0] = self.off[0] / denom;
        }
        x[0] /= denom;
        for i in 1..p {
            denom = self.diag[i] - self.off[i - 1] * c[i - 1];
            if denom == 0.0 {
                return Err(Error::Decomposition("singular tridiagonal system".into()));
            }
            if i + 1 < p {
                c[i] = self.off[i] / denom;
            }
            x[i] = (x[i] - self.off[i - 1] * x[i - 1]) / denom;
        }
        for i in (0..p.saturating_sub(1)).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}

/// Σ⁻¹_{τ,w}: diagonal 1/τ²_i plus the adjacent 1/w² terms, off-diagonal
/// -1/w²_i.
pub fn build_fused_precision(tau2: &[f64], w2: &[f64]) -> Result<Tridiagonal> {
    let p = tau2.len();
    if p == 0 || w2.len() + 1 != p {
        return Err(Error::Dimension(format!(
            "need |w2| = |tau2| - 1, got |tau2| = {p}, |w2| = {}",
            w2.len()
        )));
    }
    check_all_positive("tau2", tau2)?;
    check_all_positive("w2", w2)?;
    let mut diag: Vec<f64> = tau2.iter().map(|t| 1.0 / t).collect();
    let mut off = Vec::with_capacity(p - 1);
    for (i, &w) in w2.iter().enumerate() {
        let inv = 1.0 / w;
        diag[i] += inv;
        diag[i + 1] += inv;
        off.push(-inv);
    }
    Tridiagonal::new(diag, off)
}

/// βᵀΣ⁻¹_{τ,w}β through the expansion Σβ_i²/τ²_i + Σ(β_{i+1}-β_i)²/w²_i.
pub fn fused_quadratic_form(beta: &[f64], tau2: &[f64], w2: &[f64]) -> Result<f64> {
    let p = beta.len();
    if tau2.len() != p || w2.len() + 1 != p {
        return Err(Error::Dimension("beta, tau2, w2 lengths disagree".into()));
    }
    check_all_positive("tau2", tau2)?;
    check_all_positive("w2", w2)?;
    let shrink: f64 = beta.iter().zip(tau2).map(|(b, t)| b * b / t).sum();
    let fuse: f64 = beta
        .windows(2)
        .zip(w2)
        .map(|(b, w)| (b[1] - b[0]).powi(2) / w)
        .sum();
    Ok(shrink + fuse)
}

/// Diagonal of D_τ⁻¹: 1/τ²_k repeated m_k times.
pub fn build_group_precision(tau2: &[f64], groups: &GroupStructure) -> Result<Vec<f64>> {
    if tau2.len() != groups.k() {
        return Err(Error::Structure(format!(
            "{} tau2 values for {} groups",
            tau2.len(),
            groups.k()
        )));
    }
    check_all_positive("tau2", tau2)?;
    Ok(groups.membership().into_iter().map(|k| 1.0 / tau2[k]).collect())
}

/// Diagonal of V⁻¹_{τ,γ}: 1/τ²_k + 1/γ²_{k,j}.
pub fn build_sparse_precision(
    tau2: &[f64],
    gamma2: &[f64],
    groups: &GroupStructure,
) -> Result<Vec<f64>> {
    if tau2.len() != groups.k() || gamma2.len() != groups.p() {
        return Err(Error::Structure("tau2/gamma2 do not match the group structure".into()));
    }
    check_all_positive("tau2", tau2)?;
    check_all_positive("gamma2", gamma2)?;
    Ok(groups
        .membership()
        .into_iter()
        .zip(gamma2)
        .map(|(k, g)| 1.0 / tau2[k] + 1.0 / g)
        .collect())
}
