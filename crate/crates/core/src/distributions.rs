//! Random variates for the samplers: Inverse-Gaussian, Inverse-Gamma and the
//! Gaussian full conditional of the regression coefficients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::model::{Dataset, Tridiagonal};

/// Counter-based random stream identified by `(seed, stream_id)`.
///
/// Streams with the same seed and different ids are independent ChaCha20
/// streams, so chains and replicate loops can share one seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for sub-task `index`; depends only on `(seed, stream_id, index)`.
    pub fn split(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draw from Inverse-Gaussian(mean, shape), density
/// ∝ x^{-3/2} exp(-shape (x - mean)² / (2 mean² x)).
///
/// Michael–Schucany–Haas transformation. The smaller root is evaluated as
/// 4 shape v / (v + sqrt(v² + 4 shape v / mean))² with v = χ²₁, which stays
/// finite and positive for means far beyond 10¹⁵.
pub fn sample_inverse_gaussian(mean: f64, shape: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("inverse-gaussian mean", mean)?;
    check_positive("inverse-gaussian shape", shape)?;
    let z = rng.standard_normal();
    let v = z * z;
    let x = if v > 0.0 {
        let root = v + (v * v + 4.0 * shape * v / mean).sqrt();
        4.0 * shape * v / (root * root)
    } else {
        mean
    };
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        Ok(x)
    } else {
        Ok(mean * (mean / x))
    }
}

/// Draw from Inverse-Gamma(shape, rate), density ∝ x^{-shape-1} exp(-rate/x).
pub fn sample_inverse_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, rate, rng)?)
}

/// Draw from Gamma(shape, rate), density ∝ x^{shape-1} exp(-rate x).
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {rate}): {e}")))?;
    // a standard draw of exactly 0 is possible for small shapes; redraw a few times
    for _ in 0..64 {
        let v = g.sample(rng) / rate;
        if v > 0.0 && v.is_finite() {
            return Ok(v);
        }
        if v.is_infinite() {
            break;
        }
    }
    Err(Error::InvalidParameter(format!(
        "gamma({shape}, {rate}) draw is not representable as a positive finite number"
    )))
}

/// Prior precision Σ⁻¹ of the coefficient vector, in the two structured forms
/// the models produce.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorPrecision {
    Diagonal(Vec<f64>),
    Tridiagonal(Tridiagonal),
}

impl PriorPrecision {
    pub fn dim(&self) -> usize {
        match self {
            PriorPrecision::Diagonal(d) => d.len(),
            PriorPrecision::Tridiagonal(t) => t.dim(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            PriorPrecision::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            PriorPrecision::Tridiagonal(t) => t.to_dense(),
        }
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            PriorPrecision::Diagonal(d) => d.iter().zip(v).map(|(a, b)| a * b * b).sum(),
            PriorPrecision::Tridiagonal(t) => t.quad_form(v),
        }
    }

    /// Σ v, i.e. a solve against the precision.
    pub fn apply_covariance(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            PriorPrecision::Diagonal(d) => Ok(v.iter().zip(d).map(|(a, b)| a / b).collect()),
            PriorPrecision::Tridiagonal(t) => t.solve(v),
        }
    }

    /// Draw from N(0, Σ).
    pub fn sample_prior(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        match self {
            PriorPrecision::Diagonal(d) => {
                Ok(d.iter().map(|v| rng.standard_normal() / v.sqrt()).collect())
            }
            PriorPrecision::Tridiagonal(t) => {
                // Σ⁻¹ = L Lᵀ with L lower bidiagonal; u = L⁻ᵀ z has covariance Σ.
                let (d, l) = t.cholesky()?;
                let p = d.len();
                let z: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
                let mut u = vec![0.0; p];
                for i in (0..p).rev() {
                    let mut s = z[i];
                    if i + 1 < p {
                        s -= l[i] * u[i + 1];
                    }
                    u[i] = s / d[i];
                }
                Ok(u)
            }
        }
    }
}

/// How to draw from N_p((XᵀX + Σ⁻¹)⁻¹Xᵀy, σ²(XᵀX + Σ⁻¹)⁻¹).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianMethod {
    /// Dense Cholesky of the p×p posterior precision, O(p³).
    #[default]
    Cholesky,
    /// Prior-plus-noise perturbation with an n×n solve, O(n²p); preferable
    /// when p ≫ n.
    FastNp,
}

/// Lower Cholesky factor of `a`, retrying once with 10⁻¹⁰·trace/p jitter.
pub(crate) fn cholesky_with_jitter(a: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let p = a.nrows();
    let trace = a.trace();
    match a.clone().cholesky() {
        Some(c) => Ok(c),
        None => {
            let jitter = 1e-10 * trace.abs() / p as f64;
            let mut b = a;
            for i in 0..p {
                b[(i, i)] += jitter;
            }
            b.cholesky().ok_or_else(|| {
                Error::Decomposition("matrix is not positive definite after jitter".into())
            })
        }
    }
}

/// Posterior mean (XᵀX + Σ⁻¹)⁻¹Xᵀy and the Cholesky factor of XᵀX + Σ⁻¹.
pub fn regression_conditional_moments(
    data: &Dataset,
    precision: &PriorPrecision,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dims(data, precision)?;
    let mut a = data.xtx().clone();
    match precision {
        PriorPrecision::Diagonal(d) => {
            for (i, v) in d.iter().enumerate() {
                a[(i, i)] += v;
            }
        }
        PriorPrecision::Tridiagonal(t) => {
            for (i, v) in t.diag.iter().enumerate() {
                a[(i, i)] += v;
            }
            for (i, v) in t.off.iter().enumerate() {
                a[(i, i + 1)] += v;
                a[(i + 1, i)] += v;
            }
        }
    }
    let chol = cholesky_with_jitter(a)?;
    let mean = chol.solve(data.xty());
    Ok((mean, chol.l()))
}

fn check_dims(data: &Dataset, precision: &PriorPrecision) -> Result<()> {
    if precision.dim() != data.p() {
        return Err(Error::Dimension(format!(
            "prior precision is {}×{} but p = {}",
            precision.dim(),
            precision.dim(),
            data.p()
        )));
    }
    Ok(())
}

/// Exact draw of β | rest ~ N_p((XᵀX + Σ⁻¹)⁻¹Xᵀy, σ²(XᵀX + Σ⁻¹)⁻¹).
pub fn sample_gaussian_regression_conditional(
    data: &Dataset,
    precision: &PriorPrecision,
    sigma2: f64,
    rng: &mut RngStream,
    method: GaussianMethod,
) -> Result<Vec<f64>> {
    check_positive("sigma2", sigma2)?;
    check_dims(data, precision)?;
    match method {
        GaussianMethod::Cholesky => sample_by_cholesky(data, precision, sigma2, rng),
        GaussianMethod::FastNp => sample_by_perturbation(data, precision, sigma2, rng),
    }
}

fn sample_by_cholesky(
    data: &Dataset,
    precision: &PriorPrecision,
    sigma2: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let (mean, l) = regression_conditional_moments(data, precision)?;
    let p = mean.len();
    let z = DVector::from_fn(p, |_, _| rng.standard_normal());
    // Lᵀ e = z gives e ~ N(0, (L Lᵀ)⁻¹).
    let e = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Decomposition("singular Cholesky factor".into()))?;
    let sigma = sigma2.sqrt();
    Ok(mean.iter().zip(e.iter()).map(|(m, e)| m + sigma * e).collect())
}

fn sample_by_perturbation(
    data: &Dataset,
    precision: &PriorPrecision,
    sigma2: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let x = data.x();
    let (n, p) = (data.n(), data.p());
    let sigma = sigma2.sqrt();

    let u = precision.sample_prior(rng)?;
    let delta: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();

    // ΣXᵀ, column by column.
    let mut sxt = DMatrix::zeros(p, n);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let col = precision.apply_covariance(&row)?;
        for j in 0..p {
            sxt[(j, i)] = col[j];
        }
    }
    let mut gram = x * &sxt;
    for i in 0..n {
        gram[(i, i)] += 1.0;
    }
    let u_vec = DVector::from_column_slice(&u);
    let xu = x * &u_vec;
    let rhs = DVector::from_fn(n, |i, _| data.y()[i] / sigma - xu[i] - delta[i]);
    let w = cholesky_with_jitter(gram)?.solve(&rhs);
    let shift = &sxt * w;
    Ok((0..p).map(|j| sigma * (u[j] + shift[j])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn equal_streams_are_identical() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let xs: Vec<f64> = (0..100)
            .map(|_| sample_inverse_gaussian(1.5, 2.0, &mut a).unwrap())
            .collect();
        let ys: Vec<f64> = (0..100)
            .map(|_| sample_inverse_gaussian(1.5, 2.0, &mut b).unwrap())
            .collect();
        assert_eq!(xs, ys);
        let mut c = RngStream::new(7, 4);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 1);
        let n = 100_000;
        let prod: f64 = (0..n).map(|_| a.standard_normal() * b.standard_normal()).sum();
        // sd of the mean of products is 1/sqrt(n)
        assert!((prod / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_inverse_gaussian(0.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gaussian(1.0, f64::INFINITY, &mut rng).is_err());
        assert!(sample_inverse_gamma(-1.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(1.0, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn inverse_gaussian_concentrates_for_huge_shape() {
        let mut rng = RngStream::new(2, 0);
        let n = 100_000;
        let m = (0..n)
            .map(|_| sample_inverse_gaussian(1.0, 1e8, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((m - 1.0).abs() < 1e-3);
    }

    #[test]
    fn inverse_gaussian_positive_for_huge_means() {
        let mut rng = RngStream::new(3, 0);
        for mean in [1e3, 1e8, 1e12, 1e15, 1e100] {
            for _ in 0..10_000 {
                let x = sample_inverse_gaussian(mean, 0.7, &mut rng).unwrap();
                assert!(x > 0.0 && x.is_finite(), "mean {mean} gave {x}");
            }
        }
    }

    #[test]
    fn inverse_gamma_support() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..100_000 {
            let x = sample_inverse_gamma(0.5, 0.5, &mut rng).unwrap();
            assert!(x > 0.0 && x.is_finite());
        }
    }

    #[test]
    fn prior_only_gaussian_draw() {
        let data = Dataset::new(DVector::from_vec(vec![0.0]), DMatrix::zeros(1, 1)).unwrap();
        let prec = PriorPrecision::Diagonal(vec![1.0]);
        let mut rng = RngStream::new(5, 0);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                sample_gaussian_regression_conditional(
                    &data,
                    &prec,
                    1.0,
                    &mut rng,
                    GaussianMethod::Cholesky,
                )
                .unwrap()[0]
            })
            .collect();
        let (m, se) = mean_and_se(&xs);
        assert!(m.abs() < 3.0 * se);
    }

    #[test]
    fn tridiagonal_prior_draw_has_inverse_precision_covariance() {
        let t = crate::model::build_fused_precision(&[1.0, 0.5, 2.0], &[0.5, 1.0]).unwrap();
        let cov = t.to_dense().try_inverse().unwrap();
        let prec = PriorPrecision::Tridiagonal(t);
        let mut rng = RngStream::new(6, 0);
        let n = 200_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            let u = DVector::from_vec(prec.sample_prior(&mut rng).unwrap());
            acc += &u * u.transpose();
        }
        acc /= n as f64;
        for i in 0..3 {
            for j in 0..3 {
                let tol = 5.0 * (cov[(i, i)] * cov[(j, j)] * 2.0 / n as f64).sqrt();
                assert!((acc[(i, j)] - cov[(i, j)]).abs() < tol);
            }
        }
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_with_jitter(a).is_ok());
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_with_jitter(b), Err(Error::Decomposition(_))));
    }
}
