//! Seeded synthetic generators: Gaussian, Laplace marginals through a
//! Gaussian copula, and white uniform covariates; sparse or dense linear
//! models; and responses with an optional quadratic term `ψ ‖x‖²`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::LinearModel;
use crate::numerics::{check_spd, eig_sym, normal_cdf, Matrix, SymMatrix};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    Gaussian,
    LaplaceCopula,
    UniformWhite,
}

/// Covariate distribution. For `LaplaceCopula` the matrix is the latent
/// Gaussian covariance; it is rescaled to a correlation before use.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    kind: DistributionKind,
    covariance: SymMatrix,
    // U D^{1/2}, maps iid standard normals to the target covariance
    factor: Matrix,
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, covariance: SymMatrix) -> Result<Self> {
        let covariance = match kind {
            DistributionKind::UniformWhite => covariance,
            DistributionKind::Gaussian => covariance,
            DistributionKind::LaplaceCopula => to_correlation(&covariance)?,
        };
        let eig = eig_sym(&covariance)?;
        if kind != DistributionKind::UniformWhite {
            check_spd(&eig)?;
        }
        let d = covariance.dim();
        let mut factor = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                factor[(i, j)] = eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt();
            }
        }
        Ok(Self {
            kind,
            covariance,
            factor,
        })
    }

    pub fn white(kind: DistributionKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        Self::new(kind, SymMatrix::identity(dim))
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }

    /// Covariance of the generated covariates (identity for uniform-white,
    /// the latent correlation for the copula is only approximate and is not
    /// returned here).
    pub fn population_covariance(&self) -> Option<&SymMatrix> {
        match self.kind {
            DistributionKind::Gaussian => Some(&self.covariance),
            DistributionKind::UniformWhite => Some(&self.covariance),
            DistributionKind::LaplaceCopula => {
                if is_identity(&self.covariance) {
                    Some(&self.covariance)
                } else {
                    None
                }
            }
        }
    }
}

fn is_identity(s: &SymMatrix) -> bool {
    let d = s.dim();
    (0..d).all(|i| (0..d).all(|j| s[(i, j)] == if i == j { 1.0 } else { 0.0 }))
}

fn to_correlation(c: &SymMatrix) -> Result<SymMatrix> {
    let d = c.dim();
    let diag = c.diagonal();
    if diag.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::RankDeficient(
            "copula covariance has a non-positive variance".into(),
        ));
    }
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = if i == j {
                1.0
            } else {
                c[(i, j)] / (diag[i] * diag[j]).sqrt()
            };
        }
    }
    SymMatrix::new(m)
}

/// Unit-variance Laplace inverse CDF, scale `b = 1/√2`.
pub fn laplace_inverse_cdf(u: f64) -> f64 {
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let c = u - 0.5;
    -b * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

pub fn sample_observations(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Matrix> {
    sample_observations_with(spec, n, &mut rng::stream(seed, &[]))
}

pub fn sample_observations_with(
    spec: &DistributionSpec,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let d = spec.dim();
    let mut out = Matrix::zeros(n, d);
    match spec.kind {
        DistributionKind::UniformWhite => {
            let a = 3f64.sqrt();
            for v in out.row_mut(0).iter_mut() {
                *v = rng.random_range(-a..a);
            }
            for i in 1..n {
                for v in out.row_mut(i).iter_mut() {
                    *v = rng.random_range(-a..a);
                }
            }
        }
        DistributionKind::Gaussian | DistributionKind::LaplaceCopula => {
            let mut z = vec![0.0; d];
            for i in 0..n {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let row = out.row_mut(i);
                for (a, r) in row.iter_mut().enumerate() {
                    *r = (0..d).map(|j| spec.factor[(a, j)] * z[j]).sum();
                }
                if spec.kind == DistributionKind::LaplaceCopula {
                    for r in row.iter_mut() {
                        *r = laplace_inverse_cdf(normal_cdf(*r));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Coefficient law for [`make_model`]: uniform on `[low, high]`, redrawn
/// while `|β| < min_abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRange {
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub min_abs: f64,
}

impl Default for CoefficientRange {
    fn default() -> Self {
        Self {
            low: -5.0,
            high: 5.0,
            min_abs: 0.0,
        }
    }
}

/// Model with `s` uniformly chosen nonzero coefficients.
pub fn make_model(
    d: usize,
    s: usize,
    range: CoefficientRange,
    noise_sigma: f64,
    rng: &mut StreamRng,
) -> Result<LinearModel> {
    if s == 0 || s > d {
        return Err(Error::Domain(format!(
            "support size must satisfy 1 <= s <= d, got s={s}, d={d}"
        )));
    }
    if !(range.low < range.high) || range.min_abs < 0.0 {
        return Err(Error::Domain(format!(
            "invalid coefficient range {range:?}"
        )));
    }
    if range.min_abs > 0.0 && range.min_abs >= range.high.max(-range.low) {
        return Err(Error::Domain(format!(
            "coefficient range {range:?} has no values with |β| >= {}",
            range.min_abs
        )));
    }
    let mut support = index::sample(rng, d, s).into_vec();
    support.sort_unstable();
    let mut beta = vec![0.0; d];
    for j in support {
        beta[j] = loop {
            let b: f64 = rng.random_range(range.low..range.high);
            if b.abs() >= range.min_abs && b != 0.0 {
                break b;
            }
        };
    }
    LinearModel::new(beta, noise_sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSpec {
    pub model: LinearModel,
    /// Coefficient of the quadratic term `ψ ‖x‖²`; 0 for a linear response.
    pub nonlinearity: f64,
}

/// `y = Xβ* + ψ ‖x‖² + σ ε` row by row.
pub fn gen_responses(x: &Matrix, resp: &ResponseSpec, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if x.ncols() != resp.model.dim() {
        return Err(Error::Shape(format!(
            "{}-dim covariates for a {}-dim model",
            x.ncols(),
            resp.model.dim()
        )));
    }
    if !resp.nonlinearity.is_finite() {
        return Err(Error::Domain("nonlinearity must be finite".into()));
    }
    let sigma = resp.model.noise_sigma;
    Ok(x.rows_iter()
        .map(|r| {
            let mut y: f64 = r.iter().zip(&resp.model.beta).map(|(a, b)| a * b).sum();
            if resp.nonlinearity != 0.0 {
                y += resp.nonlinearity * r.iter().map(|v| v * v).sum::<f64>();
            }
            if sigma > 0.0 {
                y += sigma * rng.sample::<f64, _>(StandardNormal);
            }
            y
        })
        .collect())
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with a Haar-like orthogonal `Q` and
/// eigenvalues spread evenly over `[lambda_min, lambda_max]`.
pub fn random_spd(
    d: usize,
    lambda_min: f64,
    lambda_max: f64,
    rng: &mut StreamRng,
) -> Result<SymMatrix> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
        return Err(Error::Domain(format!(
            "spectrum [{lambda_min}, {lambda_max}] must be positive and ordered"
        )));
    }
    // Gram-Schmidt on a Gaussian matrix
    let mut q = Matrix::zeros(d, d);
    for j in 0..d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _pass in 0..2 {
            for p in 0..j {
                let proj: f64 = (0..d).map(|i| q[(i, p)] * v[i]).sum();
                for i in 0..d {
                    v[i] -= proj * q[(i, p)];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..d {
            q[(i, j)] = v[i] / norm;
        }
    }
    let lambdas: Vec<f64> = (0..d)
        .map(|j| {
            if d == 1 {
                lambda_max
            } else {
                lambda_min + (lambda_max - lambda_min) * j as f64 / (d - 1) as f64
            }
        })
        .collect();
    let mut m = Matrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            m[(a, b)] = (0..d).map(|j| q[(a, j)] * lambdas[j] * q[(b, j)]).sum();
        }
    }
    SymMatrix::new(m)
}

/// Per-coordinate `E x⁴` of a sample.
pub fn fourth_moments(x: &Matrix) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut m = vec![0.0; x.ncols()];
    for r in x.rows_iter() {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v.powi(4);
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitening::sample_covariance;

    fn max_dev_from_identity(s: &SymMatrix) -> f64 {
        let d = s.dim();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (s[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gaussian_identity_covariance() {
        let spec = DistributionSpec::white(DistributionKind::Gaussian, 5).unwrap();
        let x = sample_observations(&spec, 100_000, 1).unwrap();
        assert!(max_dev_from_identity(&sample_covariance(&x).unwrap()) < 0.05);
    }

    #[test]
    fn uniform_fourth_moment() {
        let spec = DistributionSpec::white(DistributionKind::UniformWhite, 3).unwrap();
        let x = sample_observations(&spec, 200_000, 2).unwrap();
        for m in fourth_moments(&x) {
            assert!((m - 9.0 / 5.0).abs() < 0.05);
        }
        let a = 3f64.sqrt();
        assert!(x.as_slice().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn laplace_copula_fourth_moment() {
        // Oracle: ∫ x⁴ (1/2b) e^{-|x|/b} dx with b = 1/√2, by Simpson's rule.
        let b = std::f64::consts::FRAC_1_SQRT_2;
        let (lo, hi, steps) = (0.0f64, 60.0f64, 200_000usize);
        let h = (hi - lo) / steps as f64;
        let f = |x: f64| x.powi(4) * (-x / b).exp() / (2.0 * b);
        let mut s = f(lo) + f(hi);
        for i in 1..steps {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = 2.0 * s * h / 3.0;
        assert!((oracle - 6.0).abs() < 1e-6);

        let spec = DistributionSpec::white(DistributionKind::LaplaceCopula, 3).unwrap();
        let x = sample_observations(&spec, 400_000, 3).unwrap();
        let cov = sample_covariance(&x).unwrap();
        assert!(max_dev_from_identity(&cov) < 0.05);
        for m in fourth_moments(&x) {
            assert!((m - oracle).abs() / oracle < 0.05, "fourth moment {m}");
        }
    }

    #[test]
    fn laplace_inverse_cdf_symmetry() {
        assert_eq!(laplace_inverse_cdf(0.5), 0.0);
        for u in [0.1, 0.3, 0.45] {
            assert!((laplace_inverse_cdf(u) + laplace_inverse_cdf(1.0 - u)).abs() < 1e-12);
        }
        assert!(laplace_inverse_cdf(0.9) > 0.0);
    }

    #[test]
    fn correlated_gaussian_matches_covariance() {
        let mut r = rng::stream(4, &[]);
        let sigma = random_spd(4, 0.5, 3.0, &mut r).unwrap();
        let e = eig_sym(&sigma).unwrap();
        assert!((e.max_eigenvalue() - 3.0).abs() < 1e-10);
        assert!((e.min_eigenvalue() - 0.5).abs() < 1e-10);
        let spec = DistributionSpec::new(DistributionKind::Gaussian, sigma.clone()).unwrap();
        let x = sample_observations(&spec, 200_000, 5).unwrap();
        let c = sample_covariance(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((c[(i, j)] - sigma[(i, j)]).abs() < 0.05);
            }
        }
    }

    #[test]
    fn non_spd_rejected() {
        let bad = SymMatrix::from_diag(&[1.0, -1.0]).unwrap();
        assert!(DistributionSpec::new(DistributionKind::Gaussian, bad.clone()).is_err());
        let singular = SymMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(DistributionSpec::new(DistributionKind::Gaussian, singular).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = DistributionSpec::white(DistributionKind::LaplaceCopula, 4).unwrap();
        let a = sample_observations(&spec, 100, 9).unwrap();
        let b = sample_observations(&spec, 100, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_observations(&spec, 100, 10).unwrap());
    }

    #[test]
    fn model_supports() {
        let mut r = rng::stream(1, &[]);
        let dense = make_model(6, 6, CoefficientRange::default(), 1.0, &mut r).unwrap();
        assert_eq!(dense.support(), (0..6).collect::<Vec<_>>());
        let sparse = make_model(100, 7, CoefficientRange::default(), 1.0, &mut r).unwrap();
        assert_eq!(sparse.support().len(), 7);
        assert!(sparse.beta.iter().all(|b| b.abs() < 5.0));
        let gapped = make_model(
            50,
            10,
            CoefficientRange {
                low: -5.0,
                high: 5.0,
                min_abs: 1.0,
            },
            1.0,
            &mut r,
        )
        .unwrap();
        assert!(gapped
            .beta
            .iter()
            .filter(|b| **b != 0.0)
            .all(|b| b.abs() >= 1.0));
        assert!(make_model(5, 6, CoefficientRange::default(), 1.0, &mut r).is_err());
        assert!(make_model(5, 0, CoefficientRange::default(), 1.0, &mut r).is_err());
    }

    #[test]
    fn responses() {
        let mut r = rng::stream(2, &[]);
        let spec = DistributionSpec::white(DistributionKind::Gaussian, 3).unwrap();
        let x = sample_observations(&spec, 50, 3).unwrap();
        let model = LinearModel::new(vec![1.0, -2.0, 0.5], 0.0).unwrap();
        let y = gen_responses(
            &x,
            &ResponseSpec {
                model: model.clone(),
                nonlinearity: 0.0,
            },
            &mut r,
        )
        .unwrap();
        assert_eq!(y, x.mat_vec(&model.beta).unwrap());

        let zero = LinearModel::new(vec![0.0; 3], 0.0).unwrap();
        let y = gen_responses(
            &x,
            &ResponseSpec {
                model: zero,
                nonlinearity: 1.0,
            },
            &mut r,
        )
        .unwrap();
        for (yi, row) in y.iter().zip(x.rows_iter()) {
            assert!((yi - row.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-12);
        }

        let noisy = LinearModel::new(vec![1.0, 1.0, 1.0], 1.0).unwrap();
        let x = sample_observations(&spec, 100_000, 4).unwrap();
        let y = gen_responses(
            &x,
            &ResponseSpec {
                model: noisy.clone(),
                nonlinearity: 0.0,
            },
            &mut r,
        )
        .unwrap();
        let mean_y = x.mat_vec(&noisy.beta).unwrap();
        let var = y
            .iter()
            .zip(&mean_y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 1e5;
        assert!((var - 1.0).abs() < 0.03);

        let wrong = LinearModel::new(vec![1.0; 2], 0.0).unwrap();
        assert!(gen_responses(
            &x,
            &ResponseSpec {
                model: wrong,
                nonlinearity: 0.0
            },
            &mut r
        )
        .is_err());
    }
}
