//! Deterministic-scan Gibbs kernels and the chain runner.
//!
//! Every kernel updates σ² first (from the previous β and scales), then the
//! scale block (from the previous β and the new σ²), then β (from the new
//! scales and σ²). The incoming σ² is never read.

use serde::{Deserialize, Serialize};

use crate::distributions::{
    sample_gamma, sample_gaussian_regression_conditional, sample_inverse_gamma,
    sample_inverse_gaussian, GaussianMethod, PriorPrecision, RngStream,
};
use crate::error::{Error, Result};
use crate::model::{
    build_fused_precision, build_group_precision, build_sparse_precision, require_groups,
    Dataset, FusedState, GroupState, GroupStructure, Hyperparameters, ModelKind,
    SparseGroupState, State, Tridiagonal,
};
use crate::solvers;

/// Norms below this are treated as exactly zero when forming
/// Inverse-Gaussian mean parameters.
pub const ZERO_NORM: f64 = 1e-300;

/// Full conditional of one reciprocal scale 1/s given β and σ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleConditional {
    /// 1/s ~ Inverse-Gaussian(mean, shape).
    InverseGaussian { mean: f64, shape: f64 },
    /// Zero-norm limit of the family: 1/s ~ Inverse-Gamma(1/2, λ²/2).
    InverseGammaLimit { shape: f64, rate: f64 },
}

impl ScaleConditional {
    /// Conditional of 1/s with penalty `lambda` for a coefficient block of
    /// Euclidean norm `norm`: IG(sqrt(λ²σ²/norm²), λ²).
    pub fn new(lambda: f64, sigma2: f64, norm: f64) -> Self {
        let lambda2 = lambda * lambda;
        if norm < ZERO_NORM {
            ScaleConditional::InverseGammaLimit {
                shape: 0.5,
                rate: lambda2 / 2.0,
            }
        } else {
            ScaleConditional::InverseGaussian {
                mean: lambda * sigma2.sqrt() / norm,
                shape: lambda2,
            }
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, ScaleConditional::InverseGammaLimit { .. })
    }

    /// Draws the scale s itself (the reciprocal of the conditional's variate).
    pub fn draw_scale(&self, rng: &mut RngStream) -> Result<f64> {
        match *self {
            ScaleConditional::InverseGaussian { mean, shape } => {
                Ok(1.0 / sample_inverse_gaussian(mean, shape, rng)?)
            }
            // 1/s ~ Inverse-Gamma(a, b)  <=>  s ~ Gamma(a, b)
            ScaleConditional::InverseGammaLimit { shape, rate } => sample_gamma(shape, rate, rng),
        }
    }
}

/// Inverse-Gamma full conditional of σ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Conditional {
    pub shape: f64,
    pub rate: f64,
}

impl Sigma2Conditional {
    fn draw(&self, rng: &mut RngStream) -> Result<f64> {
        sample_inverse_gamma(self.shape, self.rate, rng)
    }
}

/// Mean and covariance factor of the β full conditional: β ~ N(mean,
/// σ²(L Lᵀ)⁻¹) where L is the lower Cholesky factor of XᵀX + Σ⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaConditional {
    pub mean: Vec<f64>,
    pub precision_factor: nalgebra::DMatrix<f64>,
    pub sigma2: f64,
}

/// All full-conditional parameters of the fused lasso kernel, evaluated at a
/// single state.
#[derive(Debug, Clone, PartialEq)]
pub struct BflConditionals {
    pub sigma2: Sigma2Conditional,
    pub tau2: Vec<ScaleConditional>,
    pub w2: Vec<ScaleConditional>,
    pub beta: BetaConditional,
}

/// Single-formula faults used to show that the verification suite detects
/// broken kernels. Never enabled by the normal samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// σ² shape (n + 2α)/2 instead of (n + p + 2α)/2.
    SigmaShape,
    /// Inverse-Gaussian mean sqrt(λ²/‖β‖²), σ² dropped.
    ScaleMean,
    /// Scale block drawn before σ² from the previous σ², and σ² drawn from the
    /// previous scales: the two middle updates swapped.
    UpdateOrder,
    /// σ² rate without the +2ξ term.
    MissingXi,
    /// Off-diagonal entries of the fused precision dropped.
    DroppedOffDiagonal,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::SigmaShape,
        Mutation::ScaleMean,
        Mutation::UpdateOrder,
        Mutation::MissingXi,
        Mutation::DroppedOffDiagonal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mutation::SigmaShape => "sigma-shape",
            Mutation::ScaleMean => "scale-mean",
            Mutation::UpdateOrder => "update-order",
            Mutation::MissingXi => "missing-xi",
            Mutation::DroppedOffDiagonal => "dropped-off-diagonal",
        }
    }

    pub fn parse(s: &str) -> Result<Mutation> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mutation '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub method: GaussianMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
}

impl KernelOptions {
    pub fn with_method(method: GaussianMethod) -> Self {
        KernelOptions {
            method,
            mutation: None,
        }
    }

    fn has(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }
}

/// Parameters actually consumed by one kernel step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub sigma2: Sigma2Conditional,
    /// σ² plugged into the scale conditionals.
    pub scale_sigma2: f64,
    /// β the scale conditionals were formed from.
    pub scale_beta: Vec<f64>,
    pub scales: Vec<ScaleConditional>,
    /// Prior precision used for the β draw.
    pub beta_precision: PriorPrecision,
    /// σ² used for the β draw.
    pub beta_sigma2: f64,
}

/// Euclidean norm without underflow for tiny entries.
pub(crate) fn robust_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

fn sigma2_conditional(
    data: &Dataset,
    beta: &[f64],
    prior_quad: f64,
    hyper: &Hyperparameters,
    opts: &KernelOptions,
) -> Sigma2Conditional {
    let (n, p) = (data.n() as f64, data.p() as f64);
    let shape = if opts.has(Mutation::SigmaShape) {
        (n + 2.0 * hyper.alpha) / 2.0
    } else {
        (n + p + 2.0 * hyper.alpha) / 2.0
    };
    let xi_term = if opts.has(Mutation::MissingXi) {
        0.0
    } else {
        2.0 * hyper.xi
    };
    let rate = (data.residual_sum_of_squares(beta) + prior_quad + xi_term) / 2.0;
    Sigma2Conditional { shape, rate }
}

fn scale_conditional(lambda: f64, sigma2: f64, norm: f64, opts: &KernelOptions) -> ScaleConditional {
    if opts.has(Mutation::ScaleMean) {
        ScaleConditional::new(lambda, 1.0, norm)
    } else {
        ScaleConditional::new(lambda, sigma2, norm)
    }
}

fn fused_precision(tau2: &[f64], w2: &[f64], opts: &KernelOptions) -> Result<Tridiagonal> {
    let mut t = build_fused_precision(tau2, w2)?;
    if opts.has(Mutation::DroppedOffDiagonal) {
        t.off.iter_mut().for_each(|o| *o = 0.0);
    }
    Ok(t)
}

fn beta_conditional(
    data: &Dataset,
    precision: &PriorPrecision,
    sigma2: f64,
) -> Result<BetaConditional> {
    let (mean, l) = crate::distributions::regression_conditional_moments(data, precision)?;
    Ok(BetaConditional {
        mean: mean.iter().copied().collect(),
        precision_factor: l,
        sigma2,
    })
}

/// Full-conditional parameters of the fused lasso kernel at `state`, all
/// evaluated with the state's own σ².
pub fn bfl_full_conditional_params(
    state: &FusedState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<BflConditionals> {
    state.validate()?;
    check_p(data, state.beta.len())?;
    let opts = KernelOptions::default();
    let prec = fused_precision(&state.tau2, &state.w2, &opts)?;
    let sigma2 = sigma2_conditional(data, &state.beta, prec.quad_form(&state.beta), hyper, &opts);
    let tau2 = state
        .beta
        .iter()
        .map(|b| ScaleConditional::new(hyper.lambda1, state.sigma2, b.abs()))
        .collect();
    let w2 = state
        .beta
        .windows(2)
        .map(|b| ScaleConditional::new(hyper.lambda2, state.sigma2, (b[1] - b[0]).abs()))
        .collect();
    let beta = beta_conditional(data, &PriorPrecision::Tridiagonal(prec), state.sigma2)?;
    Ok(BflConditionals {
        sigma2,
        tau2,
        w2,
        beta,
    })
}

fn check_p(data: &Dataset, p: usize) -> Result<()> {
    if data.p() != p {
        return Err(Error::Dimension(format!(
            "state has p = {p} but the data have p = {}",
            data.p()
        )));
    }
    Ok(())
}

/// One fused lasso sweep, returning the parameters it consumed.
pub fn bfl_step_traced(
    state: &FusedState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<(FusedState, StepTrace)> {
    check_p(data, state.beta.len())?;
    let beta0 = &state.beta;

    let prec0 = fused_precision(&state.tau2, &state.w2, opts)?;
    let sigma_cond = sigma2_conditional(data, beta0, prec0.quad_form(beta0), hyper, opts);

    let (sigma2, scale_sigma2) = if opts.has(Mutation::UpdateOrder) {
        (sigma_cond.draw(rng)?, state.sigma2)
    } else {
        let s = sigma_cond.draw(rng)?;
        (s, s)
    };

    let mut scales: Vec<ScaleConditional> = beta0
        .iter()
        .map(|b| scale_conditional(hyper.lambda1, scale_sigma2, b.abs(), opts))
        .collect();
    scales.extend(
        beta0
            .windows(2)
            .map(|b| scale_conditional(hyper.lambda2, scale_sigma2, (b[1] - b[0]).abs(), opts)),
    );
    let mut draws = Vec::with_capacity(scales.len());
    for c in &scales {
        draws.push(c.draw_scale(rng)?);
    }
    let w2 = draws.split_off(beta0.len());
    let tau2 = draws;

    let precision = PriorPrecision::Tridiagonal(fused_precision(&tau2, &w2, opts)?);
    let beta = sample_gaussian_regression_conditional(data, &precision, sigma2, rng, opts.method)?;

    let trace = StepTrace {
        sigma2: sigma_cond,
        scale_sigma2,
        scale_beta: beta0.clone(),
        scales,
        beta_precision: precision,
        beta_sigma2: sigma2,
    };
    Ok((
        FusedState {
            beta,
            tau2,
            w2,
            sigma2,
        },
        trace,
    ))
}

pub fn bfl_step(
    state: &FusedState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<FusedState> {
    bfl_step_traced(state, data, hyper, rng, opts).map(|(s, _)| s)
}

/// One group lasso sweep (λ = `hyper.lambda1`).
pub fn bgl_step_traced(
    state: &GroupState,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: &GroupStructure,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<(GroupState, StepTrace)> {
    check_p(data, state.beta.len())?;
    groups.check_dimension(state.beta.len())?;
    let beta0 = &state.beta;

    let prec0 = PriorPrecision::Diagonal(build_group_precision(&state.tau2, groups)?);
    let sigma_cond = sigma2_conditional(data, beta0, prec0.quad_form(beta0), hyper, opts);
    let sigma2 = sigma_cond.draw(rng)?;
    let scale_sigma2 = if opts.has(Mutation::UpdateOrder) {
        state.sigma2
    } else {
        sigma2
    };

    let scales: Vec<ScaleConditional> = groups
        .ranges()
        .into_iter()
        .map(|r| scale_conditional(hyper.lambda1, scale_sigma2, robust_norm(&beta0[r]), opts))
        .collect();
    let mut tau2 = Vec::with_capacity(scales.len());
    for c in &scales {
        tau2.push(c.draw_scale(rng)?);
    }

    let precision = PriorPrecision::Diagonal(build_group_precision(&tau2, groups)?);
    let beta = sample_gaussian_regression_conditional(data, &precision, sigma2, rng, opts.method)?;
    let trace = StepTrace {
        sigma2: sigma_cond,
        scale_sigma2,
        scale_beta: beta0.clone(),
        scales,
        beta_precision: precision,
        beta_sigma2: sigma2,
    };
    Ok((GroupState { beta, tau2, sigma2 }, trace))
}

pub fn bgl_step(
    state: &GroupState,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: &GroupStructure,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<GroupState> {
    bgl_step_traced(state, data, hyper, groups, rng, opts).map(|(s, _)| s)
}

/// One sparse group lasso sweep: λ₁ drives the group scales τ², λ₂ the
/// coefficient scales γ².
pub fn bsgl_step_traced(
    state: &SparseGroupState,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: &GroupStructure,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<(SparseGroupState, StepTrace)> {
    check_p(data, state.beta.len())?;
    groups.check_dimension(state.beta.len())?;
    let beta0 = &state.beta;

    let prec0 = PriorPrecision::Diagonal(build_sparse_precision(&state.tau2, &state.gamma2, groups)?);
    let sigma_cond = sigma2_conditional(data, beta0, prec0.quad_form(beta0), hyper, opts);
    let sigma2 = sigma_cond.draw(rng)?;
    let scale_sigma2 = if opts.has(Mutation::UpdateOrder) {
        state.sigma2
    } else {
        sigma2
    };

    let mut scales: Vec<ScaleConditional> = groups
        .ranges()
        .into_iter()
        .map(|r| scale_conditional(hyper.lambda1, scale_sigma2, robust_norm(&beta0[r]), opts))
        .collect();
    scales.extend(
        beta0
            .iter()
            .map(|b| scale_conditional(hyper.lambda2, scale_sigma2, b.abs(), opts)),
    );
    let mut draws = Vec::with_capacity(scales.len());
    for c in &scales {
        draws.push(c.draw_scale(rng)?);
    }
    let gamma2 = draws.split_off(groups.k());
    let tau2 = draws;

    let precision = PriorPrecision::Diagonal(build_sparse_precision(&tau2, &gamma2, groups)?);
    let beta = sample_gaussian_regression_conditional(data, &precision, sigma2, rng, opts.method)?;
    let trace = StepTrace {
        sigma2: sigma_cond,
        scale_sigma2,
        scale_beta: beta0.clone(),
        scales,
        beta_precision: precision,
        beta_sigma2: sigma2,
    };
    Ok((
        SparseGroupState {
            beta,
            tau2,
            gamma2,
            sigma2,
        },
        trace,
    ))
}

pub fn bsgl_step(
    state: &SparseGroupState,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: &GroupStructure,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<SparseGroupState> {
    bsgl_step_traced(state, data, hyper, groups, rng, opts).map(|(s, _)| s)
}

/// One sweep of whichever model `state` belongs to.
pub fn step(
    state: &State,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
    rng: &mut RngStream,
    opts: &KernelOptions,
) -> Result<State> {
    Ok(match state {
        State::Bfl(s) => State::Bfl(bfl_step(s, data, hyper, rng, opts)?),
        State::Bgl(s) => State::Bgl(bgl_step(s, data, hyper, require_groups(groups)?, rng, opts)?),
        State::Bsgl(s) => {
            State::Bsgl(bsgl_step(s, data, hyper, require_groups(groups)?, rng, opts)?)
        }
    })
}

/// Where a chain starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Penalized-regression estimate and the scales minimizing the drift
    /// function.
    #[default]
    Default,
    /// β = 0 with unit scales.
    Zero,
    Custom(State),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub kernel: KernelOptions,
}

impl ChainConfig {
    /// Burn-in of 10% of `n_iter`, no thinning, default start.
    pub fn new(n_iter: usize, seed: u64) -> Self {
        ChainConfig {
            n_iter,
            burn_in: n_iter / 10,
            thin: 1,
            seed,
            stream_id: 0,
            init: InitMode::Default,
            kernel: KernelOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// ⌊(n_iter − burn_in)/thin⌋
    pub fn kept_rows(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Stored iterates of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub model: ModelKind,
    pub labels: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub config: ChainConfig,
    pub hyper: Hyperparameters,
    pub group_sizes: Option<Vec<usize>>,
    pub initial_state: State,
}

impl ChainOutput {
    pub fn n_rows(&self) -> usize {
        self.draws.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_label(&self, label: &str) -> Option<Vec<f64>> {
        self.labels.iter().position(|l| l == label).map(|j| self.column(j))
    }

    /// N × d matrix of the rows, keeping only `columns`.
    pub fn matrix(&self, columns: &[usize]) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n_rows(), columns.len(), |i, j| {
            self.draws[i][columns[j]]
        })
    }

    /// Whether column `j` holds a variance component.
    pub fn is_variance_column(&self, j: usize) -> bool {
        !self.labels[j].starts_with("beta.")
    }
}

/// Initial state for `config.init`; σ² is set to 1 and is never read by the
/// kernels.
pub fn initial_state(
    model: ModelKind,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
    init: &InitMode,
) -> Result<State> {
    let p = data.p();
    let state = match init {
        InitMode::Custom(s) => {
            if s.model() != model {
                return Err(Error::StateMismatch(model.to_string()));
            }
            s.clone()
        }
        InitMode::Zero => match model {
            ModelKind::Bfl => State::Bfl(FusedState {
                beta: vec![0.0; p],
                tau2: vec![1.0; p],
                w2: vec![1.0; p - 1],
                sigma2: 1.0,
            }),
            ModelKind::Bgl => State::Bgl(GroupState {
                beta: vec![0.0; p],
                tau2: vec![1.0; require_groups(groups)?.k()],
                sigma2: 1.0,
            }),
            ModelKind::Bsgl => State::Bsgl(SparseGroupState {
                beta: vec![0.0; p],
                tau2: vec![1.0; require_groups(groups)?.k()],
                gamma2: vec![1.0; p],
                sigma2: 1.0,
            }),
        },
        InitMode::Default => match model {
            ModelKind::Bfl => State::Bfl(solvers::default_start_bfl(data, hyper)?),
            ModelKind::Bgl => {
                State::Bgl(solvers::default_start_bgl(data, require_groups(groups)?, hyper)?)
            }
            ModelKind::Bsgl => {
                State::Bsgl(solvers::default_start_bsgl(data, require_groups(groups)?, hyper)?)
            }
        },
    };
    state.validate(groups)?;
    check_p(data, state.beta().len())?;
    Ok(state)
}

/// Runs `config.n_iter` sweeps and keeps every `thin`-th iterate after
/// burn-in.
pub fn run_chain(
    model: ModelKind,
    data: &Dataset,
    hyper: &Hyperparameters,
    groups: Option<&GroupStructure>,
    config: &ChainConfig,
) -> Result<ChainOutput> {
    config.validate()?;
    hyper.validate(model)?;
    if model.needs_groups() {
        require_groups(groups)?.check_dimension(data.p())?;
    }
    let groups = if model.needs_groups() { groups } else { None };
    let init = initial_state(model, data, hyper, groups, &config.init)?;
    let mut rng = RngStream::new(config.seed, config.stream_id);
    let mut state = init.clone();
    let mut draws = Vec::with_capacity(config.kept_rows());
    for t in 1..=config.n_iter {
        state = step(&state, data, hyper, groups, &mut rng, &config.kernel)?;
        if t > config.burn_in && (t - config.burn_in) % config.thin == 0 {
            draws.push(state.flatten());
        }
    }
    Ok(ChainOutput {
        model,
        labels: State::labels(model, data.p(), groups),
        draws,
        config: config.clone(),
        hyper: *hyper,
        group_sizes: groups.map(|g| g.sizes().to_vec()),
        initial_state: init,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn toy_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 99);
        let x = DMatrix::from_fn(n, p, |_, _| rng.standard_normal());
        let beta: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let y = &x * DVector::from_vec(beta) + DVector::from_fn(n, |_, _| 0.5 * rng.standard_normal());
        Dataset::new(y, x).unwrap()
    }

    #[test]
    fn sigma2_conditional_hand_example() {
        let data = Dataset::from_rows(vec![1.0, 0.0], &[vec![1.0], vec![0.0]]).unwrap();
        let state = FusedState {
            beta: vec![0.0],
            tau2: vec![1.0],
            w2: vec![],
            sigma2: 1.0,
        };
        let hyper = Hyperparameters::new(1.0, 1.0, 0.0, 0.0);
        let c = bfl_full_conditional_params(&state, &data, &hyper).unwrap();
        assert_eq!(c.sigma2.shape, 1.5);
        assert_eq!(c.sigma2.rate, 0.5);
    }

    #[test]
    fn zero_beta_flags_every_scale_fallback() {
        let data = toy_data(6, 4, 1);
        let state = FusedState {
            beta: vec![0.0; 4],
            tau2: vec![1.0; 4],
            w2: vec![1.0; 3],
            sigma2: 2.0,
        };
        let hyper = Hyperparameters::new(1.5, 0.7, 1.0, 1.0);
        let c = bfl_full_conditional_params(&state, &data, &hyper).unwrap();
        for s in c.tau2.iter() {
            assert_eq!(
                *s,
                ScaleConditional::InverseGammaLimit {
                    shape: 0.5,
                    rate: 1.5 * 1.5 / 2.0
                }
            );
        }
        for s in c.w2.iter() {
            assert!(s.is_fallback());
        }
    }

    #[test]
    fn scale_conditional_hand_example() {
        let data = toy_data(5, 1, 2);
        let state = FusedState {
            beta: vec![1.0],
            tau2: vec![1.0],
            w2: vec![],
            sigma2: 4.0,
        };
        let hyper = Hyperparameters::new(2.0, 1.0, 0.0, 0.0);
        let c = bfl_full_conditional_params(&state, &data, &hyper).unwrap();
        assert_eq!(
            c.tau2[0],
            ScaleConditional::InverseGaussian {
                mean: 4.0,
                shape: 4.0
            }
        );
    }

    #[test]
    fn tiny_coefficient_treated_as_zero() {
        assert!(ScaleConditional::new(1.0, 1.0, 1e-301).is_fallback());
        assert!(!ScaleConditional::new(1.0, 1.0, 1e-299).is_fallback());
        assert_eq!(robust_norm(&[3e-200, 4e-200]), 5e-200);
    }

    #[test]
    fn steps_are_deterministic() {
        let data = toy_data(8, 4, 3);
        let hyper = Hyperparameters::new(1.0, 1.0, 1.0, 1.0);
        let groups = GroupStructure::new(vec![2, 2]).unwrap();
        for model in [ModelKind::Bfl, ModelKind::Bgl, ModelKind::Bsgl] {
            let s0 = initial_state(model, &data, &hyper, Some(&groups), &InitMode::Zero).unwrap();
            let a = step(&s0, &data, &hyper, Some(&groups), &mut RngStream::new(5, 0), &Default::default())
                .unwrap();
            let b = step(&s0, &data, &hyper, Some(&groups), &mut RngStream::new(5, 0), &Default::default())
                .unwrap();
            assert_eq!(a, b);
            a.validate(Some(&groups)).unwrap();
        }
    }

    #[test]
    fn incoming_sigma2_is_ignored() {
        let data = toy_data(8, 3, 4);
        let hyper = Hyperparameters::new(1.0, 1.0, 1.0, 1.0);
        let mut s = FusedState {
            beta: vec![0.3, -0.2, 0.5],
            tau2: vec![1.0, 2.0, 0.5],
            w2: vec![1.0, 3.0],
            sigma2: 1.0,
        };
        let a = bfl_step(&s, &data, &hyper, &mut RngStream::new(9, 0), &Default::default()).unwrap();
        s.sigma2 = 1234.5;
        let b = bfl_step(&s, &data, &hyper, &mut RngStream::new(9, 0), &Default::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn update_order_is_respected() {
        let data = toy_data(10, 4, 5);
        let hyper = Hyperparameters::new(1.2, 0.8, 1.0, 0.5);
        let s0 = FusedState {
            beta: vec![0.5, 0.4, -0.3, 0.0],
            tau2: vec![1.0, 0.5, 2.0, 1.5],
            w2: vec![0.3, 1.0, 2.0],
            sigma2: 3.0,
        };
        let (s1, trace) =
            bfl_step_traced(&s0, &data, &hyper, &mut RngStream::new(1, 1), &Default::default()).unwrap();
        // σ² from the previous state only
        let prec0 = build_fused_precision(&s0.tau2, &s0.w2).unwrap();
        let rate = (data.residual_sum_of_squares(&s0.beta) + prec0.quad_form(&s0.beta) + 2.0 * hyper.xi) / 2.0;
        assert_eq!(trace.sigma2.rate, rate);
        assert_eq!(trace.sigma2.shape, (10.0 + 4.0 + 2.0) / 2.0);
        // scales from the previous β and the new σ²
        assert_eq!(trace.scale_beta, s0.beta);
        assert_eq!(trace.scale_sigma2, s1.sigma2);
        // β from the new scales and σ²
        assert_eq!(
            trace.beta_precision,
            PriorPrecision::Tridiagonal(build_fused_precision(&s1.tau2, &s1.w2).unwrap())
        );
        assert_eq!(trace.beta_sigma2, s1.sigma2);
    }

    #[test]
    fn group_sigma2_shape_is_state_independent() {
        let data = toy_data(7, 4, 6);
        let hyper = Hyperparameters::new(1.0, 1.0, 2.0, 1.0);
        let groups = GroupStructure::new(vec![1, 3]).unwrap();
        let mut s = GroupState {
            beta: vec![0.0; 4],
            tau2: vec![1.0, 1.0],
            sigma2: 1.0,
        };
        let mut rng = RngStream::new(2, 2);
        for _ in 0..20 {
            let (next, trace) = bgl_step_traced(&s, &data, &hyper, &groups, &mut rng, &Default::default()).unwrap();
            assert_eq!(trace.sigma2.shape, (7.0 + 4.0 + 4.0) / 2.0);
            s = next;
        }
    }

    #[test]
    fn degenerate_start_stays_positive() {
        let data = toy_data(6, 5, 7);
        let hyper = Hyperparameters::new(0.5, 0.5, 0.0, 0.0);
        let groups = GroupStructure::new(vec![2, 3]).unwrap();
        for model in [ModelKind::Bfl, ModelKind::Bgl, ModelKind::Bsgl] {
            let s0 = initial_state(model, &data, &hyper, Some(&groups), &InitMode::Zero).unwrap();
            let s1 = step(&s0, &data, &hyper, Some(&groups), &mut RngStream::new(3, 0), &Default::default())
                .unwrap();
            s1.validate(Some(&groups)).unwrap();
        }
    }

    /// Straight transcription of the one-group sparse group lasso sweep.
    fn one_group_reference_step(
        s: &SparseGroupState,
        data: &Dataset,
        lambda: f64,
        alpha: f64,
        xi: f64,
        rng: &mut RngStream,
    ) -> SparseGroupState {
        let p = s.beta.len();
        let d0: Vec<f64> = s.gamma2.iter().map(|g| 1.0 / s.tau2[0] + 1.0 / g).collect();
        let quad: f64 = d0.iter().zip(&s.beta).map(|(d, b)| d * b * b).sum();
        let shape = (data.n() as f64 + p as f64 + 2.0 * alpha) / 2.0;
        let rate = (data.residual_sum_of_squares(&s.beta) + quad + 2.0 * xi) / 2.0;
        let sigma2 = sample_inverse_gamma(shape, rate, rng).unwrap();
        let norm = robust_norm(&s.beta);
        let tau = if norm < ZERO_NORM {
            sample_gamma(0.5, lambda * lambda / 2.0, rng).unwrap()
        } else {
            1.0 / sample_inverse_gaussian(lambda * sigma2.sqrt() / norm, lambda * lambda, rng).unwrap()
        };
        let mut gamma2 = Vec::new();
        for b in &s.beta {
            let a = b.abs();
            gamma2.push(if a < ZERO_NORM {
                sample_gamma(0.5, lambda * lambda / 2.0, rng).unwrap()
            } else {
                1.0 / sample_inverse_gaussian(lambda * sigma2.sqrt() / a, lambda * lambda, rng).unwrap()
            });
        }
        let d: Vec<f64> = gamma2.iter().map(|g| 1.0 / tau + 1.0 / g).collect();
        let beta = sample_gaussian_regression_conditional(
            data,
            &PriorPrecision::Diagonal(d),
            sigma2,
            rng,
            GaussianMethod::Cholesky,
        )
        .unwrap();
        SparseGroupState {
            beta,
            tau2: vec![tau],
            gamma2,
            sigma2,
        }
    }

    #[test]
    fn one_group_sparse_matches_reference_draw_for_draw() {
        let data = toy_data(9, 3, 8);
        let hyper = Hyperparameters::new(1.3, 1.3, 1.0, 0.5);
        let groups = GroupStructure::new(vec![3]).unwrap();
        let mut a = SparseGroupState {
            beta: vec![0.0, 0.2, -0.1],
            tau2: vec![1.0],
            gamma2: vec![1.0; 3],
            sigma2: 1.0,
        };
        let mut b = a.clone();
        let mut ra = RngStream::new(17, 0);
        let mut rb = RngStream::new(17, 0);
        for _ in 0..500 {
            a = bsgl_step(&a, &data, &hyper, &groups, &mut ra, &Default::default()).unwrap();
            b = one_group_reference_step(&b, &data, 1.3, 1.0, 0.5, &mut rb);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sparse_zero_start_uses_both_fallbacks() {
        let data = toy_data(6, 4, 10);
        let hyper = Hyperparameters::new(0.9, 1.7, 1.0, 1.0);
        let groups = GroupStructure::new(vec![2, 2]).unwrap();
        let s = SparseGroupState {
            beta: vec![0.0; 4],
            tau2: vec![1.0; 2],
            gamma2: vec![1.0; 4],
            sigma2: 1.0,
        };
        let (_, trace) =
            bsgl_step_traced(&s, &data, &hyper, &groups, &mut RngStream::new(4, 4), &Default::default()).unwrap();
        let (tau, gamma) = trace.scales.split_at(2);
        for c in tau {
            assert_eq!(*c, ScaleConditional::InverseGammaLimit { shape: 0.5, rate: 0.81 / 2.0 });
        }
        for c in gamma {
            assert_eq!(*c, ScaleConditional::InverseGammaLimit { shape: 0.5, rate: 1.7 * 1.7 / 2.0 });
        }
    }

    #[test]
    fn chain_shape_and_reproducibility() {
        let data = toy_data(10, 3, 11);
        let hyper = Hyperparameters::new(1.0, 1.0, 1.0, 1.0);
        let mut config = ChainConfig::new(10, 42);
        config.burn_in = 0;
        let a = run_chain(ModelKind::Bfl, &data, &hyper, None, &config).unwrap();
        assert_eq!(a.n_rows(), 10);
        assert_eq!(a.labels.len(), 3 + 3 + 2 + 1);
        let b = run_chain(ModelKind::Bfl, &data, &hyper, None, &config).unwrap();
        assert_eq!(a, b);

        config.n_iter = 105;
        config.burn_in = 10;
        config.thin = 4;
        let c = run_chain(ModelKind::Bfl, &data, &hyper, None, &config).unwrap();
        assert_eq!(c.n_rows(), (105 - 10) / 4);
    }

    #[test]
    fn chain_config_validation() {
        let mut c = ChainConfig::new(10, 0);
        c.burn_in = 10;
        assert!(c.validate().is_err());
        c.burn_in = 0;
        c.thin = 0;
        assert!(c.validate().is_err());
        assert_eq!(ChainConfig::new(1000, 0).burn_in, 100);
    }

    #[test]
    fn group_model_requires_groups() {
        let data = toy_data(6, 2, 12);
        let hyper = Hyperparameters::new(1.0, 1.0, 1.0, 1.0);
        let config = ChainConfig::new(10, 1);
        assert!(matches!(
            run_chain(ModelKind::Bgl, &data, &hyper, None, &config),
            Err(Error::Structure(_))
        ));
    }
}
