//! Linear estimators: OLS, Ridge (closed form), Lasso (cyclic coordinate
//! descent), plus the Lasso penalty rule of the sparse selector and the Ridge
//! MSE bound `f(λ_min)`.
//!
//! The Lasso objective is `(1/2k)‖y − Xβ‖² + λ‖β‖₁` with `k` the number of rows.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{dot, Cholesky, Matrix, SymMatrix};

pub const LASSO_TOL: f64 = 1e-10;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Ols,
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    /// Coefficients over `dims_used`, in that order.
    pub coefficients: Vec<f64>,
    pub method: FitMethod,
    pub regularization: f64,
    pub design_rows: usize,
    pub dims_used: Vec<usize>,
    /// Set when coordinate descent stopped at the sweep cap.
    pub warning: Option<String>,
}

impl LinearFit {
    /// Coefficients embedded into `dim` dimensions, zero off `dims_used`.
    pub fn embedded(&self, dim: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; dim];
        for (&j, &b) in self.dims_used.iter().zip(&self.coefficients) {
            if j >= dim {
                return Err(Error::Shape(format!("fit uses dim {j} beyond {dim}")));
            }
            out[j] = b;
        }
        Ok(out)
    }
}

/// True model `y = xᵀβ* + ε`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub beta: Vec<f64>,
    pub noise_sigma: f64,
}

impl LinearModel {
    pub fn new(beta: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0) {
            return Err(Error::Domain(format!(
                "noise sd must be >= 0, got {noise_sigma}"
            )));
        }
        Ok(Self { beta, noise_sigma })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// `{ j : β*ⱼ ≠ 0 }`.
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn beta_norm_sq(&self) -> f64 {
        dot(&self.beta, &self.beta)
    }
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} responses for {} design rows",
            y.len(),
            x.nrows()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Shape("empty design matrix".into()));
    }
    Ok(())
}

pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearFit> {
    check_xy(x, y)?;
    if x.nrows() <= x.ncols() {
        return Err(Error::RankDeficient(format!(
            "OLS needs more rows than columns, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let coefficients = Cholesky::new(&x.gram())?.solve(&x.t_mat_vec(y)?)?;
    Ok(LinearFit {
        coefficients,
        method: FitMethod::Ols,
        regularization: 0.0,
        design_rows: x.nrows(),
        dims_used: (0..x.ncols()).collect(),
        warning: None,
    })
}

/// `(XᵀX + λI)⁻¹ Xᵀy`; `λ = 0` falls through to OLS.
pub fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearFit> {
    check_xy(x, y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "ridge penalty must be >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return fit_ols(x, y);
    }
    let mut g = x.gram().into_matrix();
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    let coefficients = Cholesky::new(&SymMatrix::new(g)?)?.solve(&x.t_mat_vec(y)?)?;
    Ok(LinearFit {
        coefficients,
        method: FitMethod::Ridge,
        regularization: lambda,
        design_rows: x.nrows(),
        dims_used: (0..x.ncols()).collect(),
        warning: None,
    })
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `(1/2k)‖y − Xβ‖² + λ‖β‖₁`.
pub fn fit_lasso(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearFit> {
    check_xy(x, y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "lasso penalty must be >= 0, got {lambda}"
        )));
    }
    let k = x.nrows();
    let d = x.ncols();
    let kf = k as f64;

    let xt = x.transpose();
    let col_sq: Vec<f64> = (0..d).map(|j| dot(xt.row(j), xt.row(j)) / kf).collect();
    let mut beta = vec![0.0; d];
    let mut resid = y.to_vec();
    let mut warning = None;
    let mut converged = false;

    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = xt.row(j);
            let old = beta[j];
            let rho = dot(col, &resid) / kf + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                for (r, c) in resid.iter_mut().zip(col) {
                    *r -= delta * c;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        warning = Some(format!(
            "coordinate descent stopped at the {LASSO_MAX_SWEEPS}-sweep cap"
        ));
    }
    Ok(LinearFit {
        coefficients: beta,
        method: FitMethod::Lasso,
        regularization: lambda,
        design_rows: k,
        dims_used: (0..d).collect(),
        warning,
    })
}

/// Lasso objective value at `beta`.
pub fn lasso_objective(x: &Matrix, y: &[f64], beta: &[f64], lambda: f64) -> Result<f64> {
    let pred = x.mat_vec(beta)?;
    let rss: f64 = pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(rss / (2.0 * x.nrows() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>())
}

/// `λ = √(4σ² log d / (γ² k₁))` with `γ = 1/2`, i.e. `√(16σ² log d / k₁)`.
pub fn lasso_regularization(sigma: f64, d: usize, k1: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "need d >= 2 so that log d > 0, got {d}"
        )));
    }
    if k1 == 0 {
        return Err(Error::Domain("stage-one size must be >= 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("noise sd must be >= 0, got {sigma}")));
    }
    let gamma: f64 = 0.5;
    Ok((4.0 * sigma * sigma * (d as f64).ln() / (gamma * gamma * k1 as f64)).sqrt())
}

/// Ridge MSE bound for `λ* ~ U[0, R]`:
/// `σ²d/(λ_min+R) + ‖β*‖² (1 − (2λ_min/R) log(1 + R/λ_min) + λ_min/(λ_min+R))`.
///
/// At `λ_min = 0` the bias factor takes its limit value 1.
pub fn ridge_mse_bound(lambda_min: f64, r: f64, sigma: f64, d: usize, beta_norm_sq: f64) -> f64 {
    let variance = sigma * sigma * d as f64 / (lambda_min + r);
    let bias_factor = if lambda_min == 0.0 {
        1.0
    } else if lambda_min.is_infinite() {
        0.0
    } else {
        let a = lambda_min / r;
        // 1 - 2a log(1 + 1/a) + a/(a+1), with ln_1p for large a
        (1.0 - 2.0 * a * (1.0 / a).ln_1p() + a / (a + 1.0)).max(0.0)
    };
    variance + beta_norm_sq * bias_factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(k: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(
            k,
            d,
            (0..k * d).map(|_| rng.sample(StandardNormal)).collect(),
        )
        .unwrap();
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut y = x.mat_vec(&beta).unwrap();
        for v in &mut y {
            *v += rng.sample::<f64, _>(StandardNormal);
        }
        (x, y, beta)
    }

    #[test]
    fn ols_exact_one_dimensional() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let f = fit_ols(&x, &[2.0, 4.0]).unwrap();
        assert!((f.coefficients[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ols_noiseless_recovers_beta() {
        let (x, _, beta) = random_problem(40, 6, 1);
        let y = x.mat_vec(&beta).unwrap();
        let f = fit_ols(&x, &y).unwrap();
        for (a, b) in f.coefficients.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ols_normal_equation_residual() {
        let (x, y, _) = random_problem(50, 5, 2);
        let f = fit_ols(&x, &y).unwrap();
        let lhs = x.gram().matrix().mat_vec(&f.coefficients).unwrap();
        let rhs = x.t_mat_vec(&y).unwrap();
        let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn ols_singular_design() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            fit_ols(&x, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient(_))
        ));
        let short = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(fit_ols(&short, &[1.0]).is_err());
        assert!(matches!(fit_ols(&x, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn ridge_limits() {
        let (x, y, _) = random_problem(50, 5, 3);
        let ols = fit_ols(&x, &y).unwrap();
        for lam in [1e-6, 1e-8, 1e-10] {
            let r = fit_ridge(&x, &y, lam).unwrap();
            for (a, b) in r.coefficients.iter().zip(&ols.coefficients) {
                assert!((a - b).abs() < 1e-5);
            }
        }
        let big = fit_ridge(&x, &y, 1e12).unwrap();
        assert!(dot(&big.coefficients, &big.coefficients).sqrt() <= 1e-6);
        assert_eq!(fit_ridge(&x, &y, 0.0).unwrap().method, FitMethod::Ols);
    }

    #[test]
    fn ridge_regularizes_singular_design() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(fit_ridge(&x, &[1.0, 2.0, 3.0], 0.5).is_ok());
    }

    #[test]
    fn lasso_zero_penalty_is_ols() {
        let (x, y, _) = random_problem(60, 5, 4);
        let ols = fit_ols(&x, &y).unwrap();
        let l = fit_lasso(&x, &y, 0.0).unwrap();
        for (a, b) in l.coefficients.iter().zip(&ols.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn lasso_orthonormal_soft_threshold() {
        // XᵀX/k = I with k = 4, so β̂ = soft(Xᵀy/k, λ)
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]).unwrap();
        let y = [1.0, 1.0, -1.0, -1.0]; // Xᵀy/k = (1, 0)
        let f = fit_lasso(&x, &y, 0.3).unwrap();
        assert!((f.coefficients[0] - 0.7).abs() < 1e-12);
        assert_eq!(f.coefficients[1], 0.0);

        // brute-force grid over the 1-d objective ½(b - 1)² + 0.3|b|
        let best = (0..=200_000)
            .map(|i| -1.0 + i as f64 * 1e-5)
            .min_by(|a, b| {
                let fa = 0.5 * (a - 1.0f64).powi(2) + 0.3 * a.abs();
                let fb = 0.5 * (b - 1.0f64).powi(2) + 0.3 * b.abs();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((best - 0.7).abs() < 1e-4);
    }

    #[test]
    fn lasso_large_penalty_zero() {
        let (x, y, _) = random_problem(30, 8, 5);
        let kf = 30.0;
        let lam_max = x
            .t_mat_vec(&y)
            .unwrap()
            .iter()
            .fold(0.0_f64, |m, v| m.max((v / kf).abs()));
        let f = fit_lasso(&x, &y, lam_max).unwrap();
        assert!(f.coefficients.iter().all(|&b| b == 0.0));
        let g = fit_lasso(&x, &y, lam_max * 0.9).unwrap();
        assert!(g.coefficients.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn lasso_kkt_conditions() {
        for seed in 0..10 {
            let (x, y, _) = random_problem(40, 15, 100 + seed);
            let lam = 0.5;
            let f = fit_lasso(&x, &y, lam).unwrap();
            assert!(f.warning.is_none());
            let pred = x.mat_vec(&f.coefficients).unwrap();
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            let grad = x.t_mat_vec(&resid).unwrap();
            for (j, g) in grad.iter().enumerate() {
                let g = g / 40.0;
                let b = f.coefficients[j];
                if b == 0.0 {
                    assert!(g.abs() <= lam + 1e-6);
                } else {
                    assert!((g - lam * b.signum()).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn lasso_penalty_rule() {
        let lam = lasso_regularization(1.0, 3, 16).unwrap();
        assert!((lam - (16.0 * 3f64.ln() / 16.0).sqrt()).abs() < 1e-15);
        assert!(
            (lasso_regularization(2.0, 50, 20).unwrap()
                - 2.0 * lasso_regularization(1.0, 50, 20).unwrap())
            .abs()
                < 1e-14
        );
        let v = lasso_regularization(1.0, 100, 110).unwrap();
        assert!((v - (16.0 * 100f64.ln() / 110.0).sqrt()).abs() < 1e-15);
        assert!(lasso_regularization(1.0, 1, 10).is_err());
    }

    #[test]
    fn ridge_bound_shape() {
        let (r, s, d, b2) = (10.0, 1.0, 5, 20.0);
        assert!((ridge_mse_bound(0.0, r, s, d, b2) - (5.0 / 10.0 + 20.0)).abs() < 1e-12);
        assert!(ridge_mse_bound(1e12, r, s, d, b2) < 1e-6);
        let grid: Vec<f64> = (0..200).map(|i| 0.01 * 1.07f64.powi(i)).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&l| ridge_mse_bound(l, r, s, d, b2))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        // continuity at zero
        assert!(
            (ridge_mse_bound(1e-12, r, s, d, b2) - ridge_mse_bound(0.0, r, s, d, b2)).abs() < 1e-6
        );
    }

    #[test]
    fn embedded_support_fit() {
        let f = LinearFit {
            coefficients: vec![1.5, -2.0],
            method: FitMethod::Ols,
            regularization: 0.0,
            design_rows: 10,
            dims_used: vec![1, 3],
            warning: None,
        };
        assert_eq!(f.embedded(5).unwrap(), vec![0.0, 1.5, 0.0, -2.0, 0.0]);
        assert!(f.embedded(3).is_err());
    }

    #[test]
    fn model_support() {
        let m = LinearModel::new(vec![0.0, 2.0, 0.0, -1.0], 1.0).unwrap();
        assert_eq!(m.support(), vec![1, 3]);
        assert_eq!(m.beta_norm_sq(), 5.0);
    }
}
