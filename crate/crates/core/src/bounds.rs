//! Closed-form MSE bounds for threshold selection and the trace-diagonal
//! inequality `Tr(X⁻¹) ≥ Tr(Diag(X)⁻¹)`.
//!
//! High-probability statements involve absolute constants (`c`, `C`) and a
//! deviation `t` that are never specified. Reports evaluate only the
//! deterministic right-hand side and list what was left out in `caveats`.
//!
//! The expectation form of the Gaussian lower bound uses the denominator
//! `2 log(n)/d + log log n`. A longer derivation of the same bound carries
//! `(d − 2) log log n` inside the Gumbel location; the shorter form is kept.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::ridge_mse_bound;
use crate::numerics::{check_spd, eig_sym, ln_gamma, Cholesky, Matrix, SymMatrix};

/// Default confidence parameter for high-probability forms.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    UpperMain,
    UpperGaussian,
    UpperSparse,
    LowerPointwise,
    LowerGaussian,
    LowerClt,
    RidgeF,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    pub parameters: BTreeMap<String, f64>,
    pub caveats: Vec<String>,
}

impl BoundReport {
    fn new(kind: BoundKind, value: f64, params: &[(&str, f64)], caveats: &[&str]) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NumericFailure(format!(
                "{kind:?} evaluated to {value}"
            )));
        }
        Ok(Self {
            kind,
            value,
            parameters: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            caveats: caveats.iter().map(|c| c.to_string()).collect(),
        })
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).copied()
    }
}

const CAVEAT_PROBABILITY: &str =
    "holds with probability at least 1 - 2exp(-c t^2); absolute constants c, C and deviation t are not evaluated";
const CAVEAT_SAMPLE_SIZE: &str =
    "requires alpha*sqrt(k) - C*sqrt(d) > 0 for an unspecified constant C; not checked";
const CAVEAT_SPARSE_STAGE1: &str =
    "assumes stage 1 recovered the true support (Lasso recovery conditions on k1, beta_min)";
const CAVEAT_GUMBEL: &str =
    "asymptotic in n: the maximum of n chi-square norms is replaced by its Gumbel limit (large n)";
const CAVEAT_CLT: &str =
    "squared norms approximated as normal with mean d and spread gamma; maximum via the Gaussian extreme-value rate (large n)";
const CAVEAT_RIDGE: &str = "expectation over lambda* ~ U(0, R) and the noise for a fixed design";

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_phi(phi: f64) -> Result<()> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Domain(format!("φ must be positive, got {phi}")));
    }
    Ok(())
}

/// `d / ((1 − α)² φ k)`.
pub fn upper_bound_main(d: usize, k: usize, alpha: f64, phi: f64) -> Result<BoundReport> {
    check_alpha(alpha)?;
    check_phi(phi)?;
    if d == 0 || k <= d {
        return Err(Error::Domain(format!("need 1 <= d < k, got d={d}, k={k}")));
    }
    let value = d as f64 / ((1.0 - alpha).powi(2) * phi * k as f64);
    BoundReport::new(
        BoundKind::UpperMain,
        value,
        &[
            ("d", d as f64),
            ("k", k as f64),
            ("alpha", alpha),
            ("phi", phi),
        ],
        &[CAVEAT_PROBABILITY, CAVEAT_SAMPLE_SIZE],
    )
}

/// Main bound with the Gaussian gain `φ = 1 + 2 log(n/k)/d`.
pub fn upper_bound_gaussian(d: usize, k: usize, n: usize, alpha: f64) -> Result<BoundReport> {
    if n < k {
        return Err(Error::Domain(format!("need k <= n, got k={k}, n={n}")));
    }
    let log_factor = 2.0 * (n as f64 / k as f64).ln() / d.max(1) as f64;
    let main = upper_bound_main(d, k, alpha, 1.0 + log_factor)?;
    BoundReport::new(
        BoundKind::UpperGaussian,
        main.value,
        &[
            ("d", d as f64),
            ("k", k as f64),
            ("n", n as f64),
            ("alpha", alpha),
            ("phi", 1.0 + log_factor),
            ("log_factor", log_factor),
        ],
        &[CAVEAT_PROBABILITY, CAVEAT_SAMPLE_SIZE],
    )
}

/// `s / ((1 − α)² (1 + 2 log(n₂/k₂)/s) k₂)`.
pub fn upper_bound_sparse(s: usize, k2: usize, n2: usize, alpha: f64) -> Result<BoundReport> {
    check_alpha(alpha)?;
    if s == 0 || k2 <= s || n2 < k2 {
        return Err(Error::Domain(format!(
            "need 1 <= s < k2 <= n2, got s={s}, k2={k2}, n2={n2}"
        )));
    }
    let log_factor = 2.0 * (n2 as f64 / k2 as f64).ln() / s as f64;
    let value = s as f64 / ((1.0 - alpha).powi(2) * (1.0 + log_factor) * k2 as f64);
    BoundReport::new(
        BoundKind::UpperSparse,
        value,
        &[
            ("s", s as f64),
            ("k2", k2 as f64),
            ("n2", n2 as f64),
            ("alpha", alpha),
            ("log_factor", log_factor),
        ],
        &[CAVEAT_PROBABILITY, CAVEAT_SAMPLE_SIZE, CAVEAT_SPARSE_STAGE1],
    )
}

/// `d² / Σᵢ ‖x̄ᵢ‖²` over whitened selected rows; a lower bound on
/// `Tr((X̄ᵀX̄)⁻¹)`.
pub fn lower_bound_pointwise(whitened: &Matrix) -> Result<f64> {
    if whitened.nrows() == 0 || whitened.ncols() == 0 {
        return Err(Error::State("no selected rows".into()));
    }
    let total: f64 = whitened.as_slice().iter().map(|v| v * v).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("selected rows are all zero".into()));
    }
    let d = whitened.ncols() as f64;
    Ok(d * d / total)
}

pub fn lower_bound_pointwise_report(whitened: &Matrix) -> Result<BoundReport> {
    let value = lower_bound_pointwise(whitened)?;
    BoundReport::new(
        BoundKind::LowerPointwise,
        value,
        &[
            ("d", whitened.ncols() as f64),
            ("k", whitened.nrows() as f64),
        ],
        &[],
    )
}

/// Gaussian lower bound. Without `alpha`, the expectation form
/// `d / (k (2 log(n)/d + log log n))`; with `alpha`, the high-probability
/// form `(d/k) / (2 log(n)/d + log log n − (1/d) log log(1/(1−α)) − C)`
/// with `C = 2 log Γ(d/2) / d`.
pub fn lower_bound_gaussian(
    d: usize,
    k: usize,
    n: usize,
    alpha: Option<f64>,
) -> Result<BoundReport> {
    if n < 3 {
        return Err(Error::Domain(format!(
            "need n >= 3 so that log log n > 0, got n={n}"
        )));
    }
    if d == 0 || k == 0 {
        return Err(Error::Domain(format!("need d, k >= 1, got d={d}, k={k}")));
    }
    let (df, kf, nf) = (d as f64, k as f64, n as f64);
    let log_factor = 2.0 * nf.ln() / df + nf.ln().ln();
    match alpha {
        None => BoundReport::new(
            BoundKind::LowerGaussian,
            df / (kf * log_factor),
            &[("d", df), ("k", kf), ("n", nf), ("log_factor", log_factor)],
            &[CAVEAT_GUMBEL],
        ),
        Some(a) => {
            check_alpha(a)?;
            let c = 2.0 * ln_gamma(df / 2.0)? / df;
            let denom = log_factor - (1.0 / (1.0 - a)).ln().ln() / df - c;
            if !(denom > 0.0) {
                return Err(Error::Domain(format!(
                    "high-probability denominator {denom:.4} is not positive for d={d}, n={n}, α={a}"
                )));
            }
            BoundReport::new(
                BoundKind::LowerGaussian,
                df / kf / denom,
                &[
                    ("d", df),
                    ("k", kf),
                    ("n", nf),
                    ("alpha", a),
                    ("log_factor", log_factor),
                    ("C", c),
                ],
                &[CAVEAT_GUMBEL],
            )
        }
    }
}

/// `d / ((1 + (γ/d) √(2 log n)) k)`.
pub fn lower_bound_clt(d: usize, k: usize, n: usize, gamma: f64) -> Result<BoundReport> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "spread γ must be non-negative, got {gamma}"
        )));
    }
    if n < 2 || d == 0 || k == 0 {
        return Err(Error::Domain(format!(
            "need n >= 2 and d, k >= 1, got d={d}, k={k}, n={n}"
        )));
    }
    let (df, kf) = (d as f64, k as f64);
    let value = df / ((1.0 + gamma / df * (2.0 * (n as f64).ln()).sqrt()) * kf);
    BoundReport::new(
        BoundKind::LowerClt,
        value,
        &[("d", df), ("k", kf), ("n", n as f64), ("gamma", gamma)],
        &[CAVEAT_CLT],
    )
}

/// Ridge bound `f(λ_min)` as a report.
pub fn ridge_bound(
    lambda_min: f64,
    r: f64,
    sigma: f64,
    d: usize,
    beta_norm_sq: f64,
) -> Result<BoundReport> {
    if !(lambda_min >= 0.0) || !(r > 0.0) || !(sigma >= 0.0) || !(beta_norm_sq >= 0.0) {
        return Err(Error::Domain(format!(
            "need λ_min >= 0, R > 0, σ >= 0, ‖β‖² >= 0; got {lambda_min}, {r}, {sigma}, {beta_norm_sq}"
        )));
    }
    BoundReport::new(
        BoundKind::RidgeF,
        ridge_mse_bound(lambda_min, r, sigma, d, beta_norm_sq),
        &[
            ("lambda_min", lambda_min),
            ("R", r),
            ("sigma", sigma),
            ("d", d as f64),
            ("beta_norm_sq", beta_norm_sq),
        ],
        &[CAVEAT_RIDGE],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagTraceCheck {
    /// `Tr(X⁻¹)`.
    pub inverse_trace: f64,
    /// `Σ 1/Xᵢᵢ`.
    pub diagonal_inverse_trace: f64,
    pub holds: bool,
}

/// Evaluates both sides of `Tr(X⁻¹) ≥ Σᵢ 1/Xᵢᵢ`. A relative slack of
/// `1e-12` absorbs rounding when the two sides coincide (diagonal input).
pub fn check_diag_trace_lemma(a: &SymMatrix) -> Result<DiagTraceCheck> {
    check_spd(&eig_sym(a)?)?;
    let inv = Cholesky::new(a)?.inverse();
    let inverse_trace: f64 = inv.diagonal().iter().sum();
    let diagonal_inverse_trace: f64 = a.diagonal().iter().map(|v| 1.0 / v).sum();
    Ok(DiagTraceCheck {
        inverse_trace,
        diagonal_inverse_trace,
        holds: inverse_trace >= diagonal_inverse_trace * (1.0 - 1e-12),
    })
}
