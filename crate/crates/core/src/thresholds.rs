//! Selection rules `(ξ, Γ)`: an observation is selected when its whitened,
//! ξ-weighted squared norm `Σⱼ ξⱼ x̄ⱼ²` is at least `Γ²`.
//!
//! Rules come from the Gaussian chi-square quantile (exact or the
//! `√(d + 2 log(n/k))` closed form), a CLT approximation driven by fourth
//! moments, or an empirical fixed-point solve on a whitened sample that
//! equalizes the conditional second moments `φⱼ = E[x̄ⱼ² | selected]`.
//!
//! Ties (`‖x̄‖_ξ = Γ` exactly) are selected.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{chi2_quantile, normal_quantile, Matrix};

/// Convergence target for the empirical solver: `max φⱼ / min φⱼ`.
pub const PHI_SPREAD_TARGET: f64 = 1.1;
pub const DEFAULT_WEIGHT_ITERATIONS: usize = 50;
/// Minimum rows above threshold the empirical solver accepts.
pub const MIN_SOLVER_EXCEEDANCES: usize = 10;
/// Minimum rows above threshold for a φ estimate.
pub const MIN_PHI_EXCEEDANCES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMethod {
    GaussianExact,
    GaussianClosedForm,
    Clt,
    Empirical,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianMode {
    /// `Γ² = F⁻¹_{χ²_d}(1 − k/n)`.
    Exact,
    /// `Γ = C̄ √(d + 2 log(n/k))`.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRule {
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub phi_estimate: Option<f64>,
    pub method: ThresholdMethod,
    /// CLT spread `γ = √(Σ ξⱼ² (E x̄ⱼ⁴ − 1))`, CLT rules only.
    pub clt_spread: Option<f64>,
    /// Achieved `max φⱼ / min φⱼ`, empirical rules only.
    pub phi_spread: Option<f64>,
    pub converged: bool,
}

impl ThresholdRule {
    /// `Γ = 0` with unit weights: every observation passes.
    pub fn random_sampling(dim: usize) -> Self {
        Self {
            weights: vec![1.0; dim],
            gamma: 0.0,
            phi_estimate: Some(1.0),
            method: ThresholdMethod::Zero,
            clt_spread: None,
            phi_spread: None,
            converged: true,
        }
    }

    /// A rule with explicit weights and threshold.
    pub fn manual(weights: Vec<f64>, gamma: f64) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "threshold must be finite and >= 0, got {gamma}"
            )));
        }
        let method = if gamma == 0.0 {
            ThresholdMethod::Zero
        } else {
            ThresholdMethod::Empirical
        };
        Ok(Self {
            weights,
            gamma,
            phi_estimate: None,
            method,
            clt_spread: None,
            phi_spread: None,
            converged: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `Σ ξⱼ`, equal to `d` for dense rules and `s` for support rules.
    pub fn weight_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn gamma_sq(&self) -> f64 {
        self.gamma * self.gamma
    }

    /// `‖x̄‖²_ξ`.
    pub fn weighted_sq_norm(&self, xbar: &[f64]) -> f64 {
        weighted_sq_norm(&self.weights, xbar)
    }

    pub fn selects(&self, xbar: &[f64]) -> bool {
        self.weighted_sq_norm(xbar) >= self.gamma_sq()
    }

    /// Rescales to `(c ξ, √c Γ)`, which selects the same observations.
    pub fn scaled(&self, c: f64) -> Self {
        let mut r = self.clone();
        r.weights.iter_mut().for_each(|w| *w *= c);
        r.gamma *= c.sqrt();
        r
    }
}

#[inline]
pub fn weighted_sq_norm(weights: &[f64], xbar: &[f64]) -> f64 {
    weights.iter().zip(xbar).map(|(w, x)| w * x * x).sum()
}

fn check_budget(n: usize, k: usize, allow_equal: bool) -> Result<()> {
    if k == 0 {
        return Err(Error::Budget("budget k must be at least 1".into()));
    }
    if k > n || (!allow_equal && k == n) {
        return Err(Error::Budget(format!(
            "budget k={k} must be smaller than the stream length n={n}"
        )));
    }
    Ok(())
}

/// Gaussian rule with unit weights.
pub fn gaussian_threshold(
    d: usize,
    n: usize,
    k: usize,
    mode: GaussianMode,
    c_bar: f64,
) -> Result<ThresholdRule> {
    check_budget(n, k, mode == GaussianMode::ClosedForm)?;
    gaussian_threshold_for_ratio(d, n as f64 / k as f64, mode, c_bar)
}

/// Gaussian rule from the stream-to-budget ratio `n/k` directly. The exact
/// mode needs `ratio > 1`, the closed form `ratio ≥ 1`.
pub fn gaussian_threshold_for_ratio(
    d: usize,
    ratio: f64,
    mode: GaussianMode,
    c_bar: f64,
) -> Result<ThresholdRule> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let (gamma, method) = match mode {
        GaussianMode::Exact => {
            if !(ratio > 1.0) || !ratio.is_finite() {
                return Err(Error::Budget(format!("n/k must exceed 1, got {ratio}")));
            }
            (
                chi2_quantile(d as u32, 1.0 - 1.0 / ratio)?.sqrt(),
                ThresholdMethod::GaussianExact,
            )
        }
        GaussianMode::ClosedForm => {
            if !(ratio >= 1.0) || !ratio.is_finite() {
                return Err(Error::Budget(format!(
                    "n/k must be at least 1, got {ratio}"
                )));
            }
            if !(c_bar > 0.0) {
                return Err(Error::Domain(format!("C̄ must be positive, got {c_bar}")));
            }
            (
                c_bar * (d as f64 + 2.0 * ratio.ln()).sqrt(),
                ThresholdMethod::GaussianClosedForm,
            )
        }
    };
    Ok(ThresholdRule {
        weights: vec![1.0; d],
        gamma,
        phi_estimate: Some(gamma * gamma / d as f64),
        method,
        clt_spread: None,
        phi_spread: None,
        converged: true,
    })
}

/// `γ = √(Σ ξⱼ² (E x̄ⱼ⁴ − 1))`.
pub fn clt_spread(fourth_moments: &[f64], weights: &[f64]) -> Result<f64> {
    if fourth_moments.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} fourth moments for {} weights",
            fourth_moments.len(),
            weights.len()
        )));
    }
    if let Some((j, m)) = fourth_moments
        .iter()
        .enumerate()
        .find(|(_, &m)| !(m >= 1.0))
    {
        return Err(Error::MomentInconsistency(format!(
            "coordinate {j} has fourth moment {m} < 1, impossible for a unit-variance variable"
        )));
    }
    Ok(weights
        .iter()
        .zip(fourth_moments)
        .map(|(w, m)| w * w * (m - 1.0))
        .sum::<f64>()
        .sqrt())
}

/// CLT threshold `Γ² = Σξ + Φ⁻¹(1 − k/n) γ`.
pub fn clt_threshold(
    d: usize,
    n: usize,
    k: usize,
    fourth_moments: &[f64],
    weights: &[f64],
) -> Result<ThresholdRule> {
    if weights.len() != d {
        return Err(Error::Shape(format!(
            "{} weights for dimension {d}",
            weights.len()
        )));
    }
    check_budget(n, k, false)?;
    let spread = clt_spread(fourth_moments, weights)?;
    let mass: f64 = weights.iter().sum();
    let z = normal_quantile(1.0 - k as f64 / n as f64)?;
    let gamma_sq = mass + z * spread;
    if !(gamma_sq > 0.0) {
        return Err(Error::Domain(format!(
            "CLT approximation gives a non-positive squared threshold ({gamma_sq})"
        )));
    }
    Ok(ThresholdRule {
        weights: weights.to_vec(),
        gamma: gamma_sq.sqrt(),
        phi_estimate: Some(gamma_sq / mass),
        method: ThresholdMethod::Clt,
        clt_spread: Some(spread),
        phi_spread: None,
        converged: true,
    })
}

/// Empirical quantile: order statistic at `ceil(p·m)` (1-based), no
/// interpolation. `sorted` must be ascending and non-empty.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let rank = ((p * m as f64).ceil() as usize).clamp(1, m);
    sorted[rank - 1]
}

/// Fixed-point solve for weights equalizing the conditional second moments,
/// with `Γ` pinned to the empirical `(1 − k/n)` quantile at each iterate.
pub fn solve_threshold_empirical(
    sample: &Matrix,
    k: usize,
    n: usize,
    weight_iterations: usize,
) -> Result<ThresholdRule> {
    let d = sample.ncols();
    let m = sample.nrows();
    if d == 0 {
        return Err(Error::Shape("sample has no columns".into()));
    }
    if m < 50 * d {
        return Err(Error::SampleTooSmall(format!(
            "empirical solve needs at least {} rows in dimension {d}, got {m}",
            50 * d
        )));
    }
    check_budget(n, k, false)?;
    let p = 1.0 - k as f64 / n as f64;

    let mut weights = vec![1.0; d];
    let mut norms = vec![0.0; m];
    let mut sorted = vec![0.0; m];
    let mut phi = vec![0.0; d];
    let mut gamma_sq = 0.0;
    let mut spread = f64::INFINITY;
    let mut converged = false;

    for iter in 0..=weight_iterations {
        for (z, r) in norms.iter_mut().zip(sample.rows_iter()) {
            *z = weighted_sq_norm(&weights, r);
        }
        sorted.copy_from_slice(&norms);
        sorted.sort_by(f64::total_cmp);
        gamma_sq = empirical_quantile(&sorted, p);

        phi.iter_mut().for_each(|v| *v = 0.0);
        let mut count = 0usize;
        for (z, r) in norms.iter().zip(sample.rows_iter()) {
            if *z >= gamma_sq {
                count += 1;
                for (f, x) in phi.iter_mut().zip(r) {
                    *f += x * x;
                }
            }
        }
        if count < MIN_SOLVER_EXCEEDANCES {
            return Err(Error::SampleTooSmall(format!(
                "only {count} sample rows above threshold at iteration {iter}"
            )));
        }
        phi.iter_mut().for_each(|v| *v /= count as f64);
        let max = phi.iter().cloned().fold(f64::MIN, f64::max);
        let min = phi.iter().cloned().fold(f64::MAX, f64::min);
        spread = max / min;
        if spread <= PHI_SPREAD_TARGET {
            converged = true;
            break;
        }
        if iter == weight_iterations {
            break;
        }
        let mean_phi = phi.iter().sum::<f64>() / d as f64;
        for (w, f) in weights.iter_mut().zip(&phi) {
            *w *= (mean_phi / f).sqrt();
        }
        let mass: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w *= d as f64 / mass);
    }

    Ok(ThresholdRule {
        weights,
        gamma: gamma_sq.sqrt(),
        phi_estimate: Some(phi.iter().sum::<f64>() / d as f64),
        method: ThresholdMethod::Empirical,
        clt_spread: None,
        phi_spread: Some(spread),
        converged,
    })
}

/// Stream and budget counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BudgetState {
    pub n_total: usize,
    pub k_total: usize,
    /// Observations already seen (`i − 1` for the current observation `i`).
    pub seen: usize,
    pub selected: usize,
}

impl BudgetState {
    pub fn new(n_total: usize, k_total: usize) -> Result<Self> {
        if k_total == 0 || k_total > n_total {
            return Err(Error::Budget(format!(
                "need 1 <= k <= n, got k={k_total}, n={n_total}"
            )));
        }
        Ok(Self {
            n_total,
            k_total,
            seen: 0,
            selected: 0,
        })
    }

    pub fn remaining_budget(&self) -> usize {
        self.k_total - self.selected
    }

    pub fn remaining_stream(&self) -> usize {
        self.n_total - self.seen
    }

    pub fn is_finished(&self) -> bool {
        self.selected >= self.k_total || self.seen >= self.n_total
    }

    /// Remaining budget equals remaining stream: everything left is selected.
    pub fn must_select(&self) -> bool {
        !self.is_finished() && self.remaining_budget() == self.remaining_stream()
    }
}

/// Tail probability for the next observation: `(k − |S|) / (n − i + 1)`.
pub fn adaptive_selection_quantile(b: &BudgetState) -> Result<f64> {
    if b.seen >= b.n_total {
        return Err(Error::State(format!(
            "stream exhausted after {} rows",
            b.n_total
        )));
    }
    if b.selected >= b.k_total {
        return Err(Error::State(format!(
            "budget of {} labels exhausted",
            b.k_total
        )));
    }
    let q = b.remaining_budget() as f64 / b.remaining_stream() as f64;
    Ok(q.clamp(0.0, 1.0))
}

/// Maps a tail probability `q` to a threshold `Γ` for a fixed weight vector.
/// Used by the adaptive selector to re-solve `Γᵢ` at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    Gaussian {
        mode: GaussianMode,
        c_bar: f64,
    },
    Clt {
        spread: f64,
    },
    /// Ascending weighted squared norms of a whitened reference sample.
    Empirical {
        sorted_sq_norms: Vec<f64>,
    },
    Zero,
}

impl Calibration {
    /// Threshold selecting a fraction `q` of observations. `q ≥ 1` gives 0.
    pub fn gamma_for_tail(&self, weight_mass: f64, dof: usize, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!(
                "tail probability must be positive, got {q}"
            )));
        }
        if q >= 1.0 {
            return Ok(0.0);
        }
        let gamma = match self {
            Calibration::Zero => 0.0,
            Calibration::Gaussian {
                mode: GaussianMode::Exact,
                ..
            } => chi2_quantile(dof as u32, 1.0 - q)?.sqrt(),
            Calibration::Gaussian {
                mode: GaussianMode::ClosedForm,
                c_bar,
            } => c_bar * (weight_mass + 2.0 * (1.0 / q).ln()).sqrt(),
            Calibration::Clt { spread } => (weight_mass + normal_quantile(1.0 - q)? * spread)
                .max(0.0)
                .sqrt(),
            Calibration::Empirical { sorted_sq_norms } => {
                if sorted_sq_norms.is_empty() {
                    return Err(Error::SampleTooSmall("empty reference sample".into()));
                }
                empirical_quantile(sorted_sq_norms, 1.0 - q).sqrt()
            }
        };
        Ok(gamma)
    }
}

/// Monte-Carlo φ estimate with its analytic floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiEstimate {
    /// `E[Z_ξ | Z_ξ ≥ Γ²] / Σξ`.
    pub estimate: f64,
    /// `Γ² / Σξ`.
    pub floor: f64,
    pub std_error: f64,
    pub exceedances: usize,
}

pub fn estimate_phi(rule: &ThresholdRule, sample: &Matrix) -> Result<PhiEstimate> {
    if sample.ncols() != rule.dim() {
        return Err(Error::Shape(format!(
            "sample dim {} for a {}-dim rule",
            sample.ncols(),
            rule.dim()
        )));
    }
    let g2 = rule.gamma_sq();
    let above: Vec<f64> = sample
        .rows_iter()
        .map(|r| rule.weighted_sq_norm(r))
        .filter(|&z| z >= g2)
        .collect();
    if above.len() < MIN_PHI_EXCEEDANCES {
        return Err(Error::SampleTooSmall(format!(
            "{} rows exceed the threshold, need {MIN_PHI_EXCEEDANCES}",
            above.len()
        )));
    }
    let mass = rule.weight_mass();
    let m = above.len() as f64;
    let mean = above.iter().sum::<f64>() / m;
    let var = above.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(PhiEstimate {
        estimate: mean / mass,
        floor: g2 / mass,
        std_error: (var / m).sqrt() / mass,
        exceedances: above.len(),
    })
}
