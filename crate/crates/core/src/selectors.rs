//! Streaming selectors: fixed threshold, adaptive threshold with an optional
//! online covariance estimate, and the sparse two-stage procedure.
//!
//! A machine sees one observation at a time and decides immediately. Once
//! the remaining budget equals the remaining stream, every row is selected.
//! Decisions are compared on the squared scale (`Σ ξⱼ x̄ⱼ² ≥ Γ²`).

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_lasso, fit_ols, lasso_regularization, LinearFit};
use crate::numerics::{Matrix, SymMatrix};
use crate::thresholds::{
    adaptive_selection_quantile, gaussian_threshold, BudgetState, Calibration, GaussianMode,
    ThresholdRule,
};
use crate::whitening::{fit_covariance_batch, warmup_rows, OnlineCovariance, WhiteningTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Fixed,
    Adaptive,
    SparseStage1,
    SparseStage2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionDecision {
    pub selected: bool,
    /// `Σ ξⱼ x̄ⱼ²`.
    pub weighted_norm: f64,
    /// `Γ²` in force for this observation.
    pub threshold_used: f64,
    pub forced: bool,
}

/// Covariance handling for the adaptive machine.
#[derive(Debug, Clone)]
pub enum AdaptiveWhitening {
    Known(WhiteningTransform),
    /// Estimate Σ from every row seen so far. Until the warm-up length is
    /// reached the identity is used. The eigendecomposition is refreshed every
    /// `refresh_interval` rows.
    Online {
        refresh_interval: usize,
    },
}

#[derive(Debug, Clone)]
enum Whitener {
    Fixed(WhiteningTransform),
    Online {
        state: OnlineCovariance,
        current: WhiteningTransform,
        refresh_interval: usize,
        since_refresh: usize,
    },
}

impl Whitener {
    fn transform(&self) -> &WhiteningTransform {
        match self {
            Whitener::Fixed(t) => t,
            Whitener::Online { current, .. } => current,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectorState {
    budget: BudgetState,
    rule: ThresholdRule,
    whitener: Whitener,
    /// Coordinates fed to the whitener; `None` means all of them.
    coordinates: Option<Vec<usize>>,
    calibration: Option<Calibration>,
    epsilon: f64,
    variant: Variant,
    input_dim: usize,
    selected: Vec<(Vec<f64>, Vec<f64>)>,
    selected_indices: Vec<usize>,
    scratch: Vec<f64>,
}

impl SelectorState {
    /// Fixed-rule machine. `transform` whitens incoming rows.
    pub fn fixed(
        n: usize,
        k: usize,
        rule: ThresholdRule,
        transform: WhiteningTransform,
    ) -> Result<Self> {
        if rule.dim() != transform.dim() {
            return Err(Error::Shape(format!(
                "{}-dim rule with a {}-dim whitening transform",
                rule.dim(),
                transform.dim()
            )));
        }
        let d = transform.dim();
        Self::build(
            n,
            k,
            rule,
            Whitener::Fixed(transform),
            None,
            None,
            0.0,
            Variant::Fixed,
            d,
        )
    }

    /// Adaptive machine: before each row the threshold is re-solved for the
    /// tail probability `(1 + ε)(k − |S|)/(n − i + 1)` using `calibration`
    /// and the weights of `rule`.
    pub fn adaptive(
        n: usize,
        k: usize,
        rule: ThresholdRule,
        calibration: Calibration,
        whitening: AdaptiveWhitening,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!(
                "ε must be finite and non-negative, got {epsilon}"
            )));
        }
        let d = rule.dim();
        let whitener = match whitening {
            AdaptiveWhitening::Known(t) => {
                if t.dim() != d {
                    return Err(Error::Shape(format!(
                        "{d}-dim rule with a {}-dim whitening transform",
                        t.dim()
                    )));
                }
                Whitener::Fixed(t)
            }
            AdaptiveWhitening::Online { refresh_interval } => Whitener::Online {
                state: OnlineCovariance::new(d),
                current: WhiteningTransform::identity(d),
                refresh_interval: refresh_interval.max(1),
                since_refresh: 0,
            },
        };
        Self::build(
            n,
            k,
            rule,
            whitener,
            None,
            Some(calibration),
            epsilon,
            Variant::Adaptive,
            d,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        n: usize,
        k: usize,
        rule: ThresholdRule,
        whitener: Whitener,
        coordinates: Option<Vec<usize>>,
        calibration: Option<Calibration>,
        epsilon: f64,
        variant: Variant,
        input_dim: usize,
    ) -> Result<Self> {
        let budget = BudgetState::new(n, k)?;
        let d = rule.dim();
        Ok(Self {
            budget,
            rule,
            whitener,
            coordinates,
            calibration,
            epsilon,
            variant,
            input_dim,
            selected: Vec::with_capacity(k),
            selected_indices: Vec::with_capacity(k),
            scratch: vec![0.0; d],
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn budget(&self) -> &BudgetState {
        &self.budget
    }

    pub fn rule(&self) -> &ThresholdRule {
        &self.rule
    }

    pub fn transform(&self) -> &WhiteningTransform {
        self.whitener.transform()
    }

    pub fn is_finished(&self) -> bool {
        self.budget.is_finished()
    }

    /// Selected `(raw, whitened)` pairs in arrival order.
    pub fn selected(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.selected
    }

    /// Stream positions (0-based) of the selected rows.
    pub fn selected_indices(&self) -> &[usize] {
        &self.selected_indices
    }

    /// Processes one observation.
    pub fn step(&mut self, x: &[f64]) -> Result<SelectionDecision> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "observation has {} coordinates, selector expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if self.budget.is_finished() {
            return Err(Error::State(format!(
                "selector finished after {} rows with {} of {} labels",
                self.budget.seen, self.budget.selected, self.budget.k_total
            )));
        }
        if self.variant == Variant::Adaptive {
            self.prepare_adaptive(x)?;
        }
        let local: Vec<f64> = match &self.coordinates {
            Some(idx) => idx.iter().map(|&j| x[j]).collect(),
            None => x.to_vec(),
        };
        self.whitener
            .transform()
            .apply_into(&local, &mut self.scratch)?;
        let z = self.rule.weighted_sq_norm(&self.scratch);
        let g2 = self.rule.gamma_sq();
        let forced = self.budget.must_select();
        let selected = z >= g2 || forced;
        if selected {
            self.selected.push((x.to_vec(), self.scratch.clone()));
            self.selected_indices.push(self.budget.seen);
            self.budget.selected += 1;
        }
        self.budget.seen += 1;
        Ok(SelectionDecision {
            selected,
            weighted_norm: z,
            threshold_used: g2,
            forced,
        })
    }

    fn prepare_adaptive(&mut self, x: &[f64]) -> Result<()> {
        if let Whitener::Online {
            state,
            current,
            refresh_interval,
            since_refresh,
        } = &mut self.whitener
        {
            state.update(x)?;
            *since_refresh += 1;
            if state.count() >= warmup_rows(state.dim()) && *since_refresh >= *refresh_interval {
                *since_refresh = 0;
                // a singular running estimate keeps the previous transform
                if let Ok(t) = state.finalize() {
                    *current = t;
                }
            }
        }
        let q = adaptive_selection_quantile(&self.budget)?;
        let q = (q * (1.0 + self.epsilon)).min(1.0);
        let dof = self.rule.weights.iter().filter(|w| **w > 0.0).count();
        let mass = self.rule.weight_mass();
        if let Some(cal) = &self.calibration {
            self.rule.gamma = cal.gamma_for_tail(mass, dof, q)?;
        }
        Ok(())
    }

    /// Steps through `rows` until the stream or the budget runs out.
    pub fn run(&mut self, rows: &Matrix) -> Result<Vec<SelectionDecision>> {
        let mut out = Vec::with_capacity(rows.nrows().min(self.budget.remaining_stream()));
        for r in rows.rows_iter() {
            if self.is_finished() {
                break;
            }
            out.push(self.step(r)?);
        }
        Ok(out)
    }

    /// Raw selected rows as a matrix.
    pub fn selected_raw(&self) -> Matrix {
        rows_to_matrix(
            self.selected.iter().map(|(r, _)| r.as_slice()),
            self.input_dim,
        )
    }

    /// Whitened selected rows as a matrix.
    pub fn selected_whitened(&self) -> Matrix {
        rows_to_matrix(
            self.selected.iter().map(|(_, w)| w.as_slice()),
            self.rule.dim(),
        )
    }
}

fn rows_to_matrix<'a>(rows: impl Iterator<Item = &'a [f64]>, cols: usize) -> Matrix {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        data.extend_from_slice(r);
        n += 1;
    }
    Matrix::from_vec(n, cols, data).expect("rows have the selector dimension")
}

/// Number of rows of `x` whose whitened weighted norm reaches `Γ²`,
/// ignoring any budget.
pub fn count_exceedances(
    rule: &ThresholdRule,
    transform: &WhiteningTransform,
    x: &Matrix,
) -> Result<usize> {
    let mut buf = vec![0.0; transform.dim()];
    let mut count = 0;
    for r in x.rows_iter() {
        transform.apply_into(r, &mut buf)?;
        if rule.selects(&buf) {
            count += 1;
        }
    }
    Ok(count)
}

/// Covariance used to whiten the recovered support in stage 2.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportCovariance {
    /// Full population covariance; the support block is extracted.
    Exact(SymMatrix),
    /// Sample covariance of the stage-1 rows on the support.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseConfig {
    pub k1: usize,
    pub k2: usize,
    /// Noise level used in the Lasso penalty.
    pub sigma: f64,
    /// `|β̂ⱼ|` above this value puts `j` in the support.
    pub support_threshold: f64,
    /// Constant in `Γ = C √(s + 2 log(n₂/k₂))`.
    pub c_bar: f64,
    /// Penalty override; `None` uses `√(16 σ² log d / k₁)`.
    pub lambda: Option<f64>,
    pub covariance: SupportCovariance,
    /// Fit the final OLS on all `k₁ + k₂` labeled rows instead of stage 2 only.
    pub refit_all: bool,
}

impl SparseConfig {
    pub fn new(k1: usize, k2: usize, sigma: f64) -> Self {
        Self {
            k1,
            k2,
            sigma,
            support_threshold: 1e-8,
            c_bar: 1.0,
            lambda: None,
            covariance: SupportCovariance::Estimated,
            refit_all: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseOutcome {
    pub support: Vec<usize>,
    pub stage1_fit: LinearFit,
    /// Stage-2 rule on the support coordinates (`ξ = 1` there); `None` after
    /// a degenerate-support fallback.
    pub stage2_rule: Option<ThresholdRule>,
    /// Stream positions of every labeled row, stage 1 first.
    pub labeled: Vec<usize>,
    /// Final estimate; `dims_used` is the support.
    pub fit: LinearFit,
    /// Selected stage-2 rows whitened within the support, for diagnostics.
    pub stage2_whitened: Matrix,
    /// Set when stage 1 recovered nothing and stage 2 fell back to the next
    /// `k₂` rows.
    pub fallback: Option<String>,
}

/// Two-stage sparse selection over `stream`. Responses are read only for
/// rows that get labeled.
pub fn run_sparse_two_stage(stream: &Dataset, config: &SparseConfig) -> Result<SparseOutcome> {
    let n = stream.len();
    let d = stream.dim();
    let y_all = stream.responses()?;
    let (k1, k2) = (config.k1, config.k2);
    if k1 == 0 || k2 == 0 || k1 + k2 > n {
        return Err(Error::Budget(format!(
            "need k1, k2 >= 1 and k1 + k2 <= n, got k1={k1}, k2={k2}, n={n}"
        )));
    }

    // stage 1: label the first k1 rows
    let mut s1 = SelectorState::build(
        k1,
        k1,
        ThresholdRule::random_sampling(d),
        Whitener::Fixed(WhiteningTransform::identity(d)),
        None,
        None,
        0.0,
        Variant::SparseStage1,
        d,
    )?;
    for i in 0..k1 {
        s1.step(stream.row(i))?;
    }
    let x1 = s1.selected_raw();
    let y1: Vec<f64> = s1.selected_indices().iter().map(|&i| y_all[i]).collect();
    let lambda = match config.lambda {
        Some(l) => l,
        None => lasso_regularization(config.sigma, d, k1)?,
    };
    let stage1_fit = fit_lasso(&x1, &y1, lambda)?;
    let support: Vec<usize> = stage1_fit
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > config.support_threshold)
        .map(|(j, _)| j)
        .collect();
    let s = support.len();
    let rest = Matrix::from_vec(n - k1, d, stream.x.as_slice()[k1 * d..].to_vec())?;

    if s == 0 {
        let labeled: Vec<usize> = (0..k1 + k2).collect();
        let x = stream.x.select_rows(&labeled);
        let y: Vec<f64> = labeled.iter().map(|&i| y_all[i]).collect();
        let lam = match config.lambda {
            Some(l) => l,
            None => lasso_regularization(config.sigma, d, k1 + k2)?,
        };
        let fit = fit_lasso(&x, &y, lam)?;
        return Ok(SparseOutcome {
            support: fit
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, b)| b.abs() > config.support_threshold)
                .map(|(j, _)| j)
                .collect(),
            stage1_fit,
            stage2_rule: None,
            labeled,
            fit,
            stage2_whitened: Matrix::zeros(0, 0),
            fallback: Some(
                Error::DegenerateSupport(format!(
                    "stage-1 Lasso (λ={lambda:.4}) kept no coefficients; next {k2} rows labeled"
                ))
                .to_string(),
            ),
        });
    }
    if k2 <= s {
        return Err(Error::Budget(format!(
            "stage-2 budget k2={k2} must exceed the recovered support size {s}"
        )));
    }

    let transform = match &config.covariance {
        SupportCovariance::Exact(sigma) => {
            if sigma.dim() != d {
                return Err(Error::Shape(format!(
                    "{}-dim covariance for {d}-dim rows",
                    sigma.dim()
                )));
            }
            WhiteningTransform::from_covariance(&sigma.submatrix(&support))?
        }
        SupportCovariance::Estimated => fit_covariance_batch(&x1.select_columns(&support))?,
    };
    let n2 = n - k1;
    let rule = gaussian_threshold(s, n2, k2, GaussianMode::ClosedForm, config.c_bar)?;
    let mut s2 = SelectorState::build(
        n2,
        k2,
        rule.clone(),
        Whitener::Fixed(transform),
        Some(support.clone()),
        None,
        0.0,
        Variant::SparseStage2,
        d,
    )?;
    s2.run(&rest)?;

    let mut labeled: Vec<usize> = s1.selected_indices().to_vec();
    labeled.extend(s2.selected_indices().iter().map(|i| i + k1));
    let fit_rows: Vec<usize> = if config.refit_all {
        labeled.clone()
    } else {
        labeled[k1..].to_vec()
    };
    let x = stream.x.select_rows(&fit_rows).select_columns(&support);
    let y: Vec<f64> = fit_rows.iter().map(|&i| y_all[i]).collect();
    let mut fit = fit_ols(&x, &y)?;
    fit.dims_used = support.clone();
    Ok(SparseOutcome {
        support,
        stage1_fit,
        stage2_rule: Some(rule),
        labeled,
        fit,
        stage2_whitened: s2.selected_whitened(),
        fallback: None,
    })
}
