//! Experiment configuration, read from JSON.
//!
//! ```json
//! {
//!   "scenario": "synthetic-linear",
//!   "synthetic": { "d": 10 },
//!   "variants": ["random-sampling", "fixed"],
//!   "n": [900, 2500, 10000],
//!   "k": "sqrt",
//!   "replications": 200
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::datagen::{CoefficientRange, DistributionKind};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    SyntheticLinear,
    SyntheticNonlinear,
    SyntheticSparse,
    CsvDataset,
}

impl ScenarioKind {
    pub fn is_synthetic(self) -> bool {
        self != ScenarioKind::CsvDataset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    /// First `k` rows (`Γ = 0`).
    RandomSampling,
    /// Fixed threshold with a known (synthetic) or batch-estimated (CSV) covariance.
    Fixed,
    /// Adaptive threshold, same covariance as `Fixed`.
    Adaptive,
    /// Adaptive threshold with the covariance estimated online from the stream.
    AdaptiveOnline,
    /// Two-stage sparse selection, final OLS on stage-2 rows.
    Sparse,
    /// Two-stage sparse selection, final OLS on all labeled rows.
    SparseRefit,
    /// First `k` rows fitted by Lasso.
    RandomLasso,
}

impl VariantKind {
    pub fn name(self) -> &'static str {
        match self {
            VariantKind::RandomSampling => "random-sampling",
            VariantKind::Fixed => "fixed",
            VariantKind::Adaptive => "adaptive",
            VariantKind::AdaptiveOnline => "adaptive-online",
            VariantKind::Sparse => "sparse",
            VariantKind::SparseRefit => "sparse-refit",
            VariantKind::RandomLasso => "random-lasso",
        }
    }

    fn is_sparse(self) -> bool {
        matches!(self, VariantKind::Sparse | VariantKind::SparseRefit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KRule {
    /// `k = ⌈√n⌉`.
    Sqrt,
    Fixed(usize),
    /// `k = ⌈c · s · ln d⌉` (synthetic scenarios; `s = d` when dense).
    SparseLog {
        c: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    #[default]
    Ols,
    Ridge {
        lambda: f64,
    },
    /// `lambda: null` uses `√(16 σ² log d / k)` with the scenario's σ.
    Lasso {
        lambda: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdChoice {
    #[default]
    GaussianExact,
    GaussianClosedForm,
    Clt,
    Empirical,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovarianceChoice {
    #[default]
    Identity,
    /// One random SPD matrix per experiment with eigenvalues evenly spread
    /// over `[lambda_min, lambda_max]`.
    Random { lambda_min: f64, lambda_max: f64 },
}

fn one() -> f64 {
    1.0
}

fn zero_psi() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub d: usize,
    #[serde(default = "default_distribution")]
    pub distribution: DistributionKind,
    #[serde(default)]
    pub covariance: CovarianceChoice,
    /// Noise standard deviation.
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub coefficients: CoefficientRange,
    /// Support size; `None` means dense.
    #[serde(default)]
    pub s: Option<usize>,
    /// Quadratic-term coefficients swept by the nonlinear scenario.
    #[serde(default = "zero_psi")]
    pub psi: Vec<f64>,
}

fn default_distribution() -> DistributionKind {
    DistributionKind::Gaussian
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Means of the whole file.
    #[default]
    Full,
    /// Means of the training rows only.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    pub path: String,
    pub response_column: String,
    #[serde(default)]
    pub centering: Centering,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportCovarianceChoice {
    Exact,
    #[default]
    Estimated,
}

fn two_thirds() -> f64 {
    2.0 / 3.0
}

fn support_threshold() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseSettings {
    /// `k₁ = round(fraction · k)`.
    #[serde(default = "two_thirds")]
    pub k1_fraction: f64,
    #[serde(default = "support_threshold")]
    pub support_threshold: f64,
    #[serde(default)]
    pub covariance: SupportCovarianceChoice,
    #[serde(default = "one")]
    pub c_bar: f64,
}

impl Default for SparseSettings {
    fn default() -> Self {
        Self {
            k1_fraction: two_thirds(),
            support_threshold: support_threshold(),
            covariance: SupportCovarianceChoice::default(),
            c_bar: 1.0,
        }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_quantiles() -> Vec<(f64, f64)> {
    vec![(0.05, 0.95), (0.25, 0.75)]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub csv: Option<CsvSpec>,
    pub variants: Vec<VariantKind>,
    /// Stream lengths.
    pub n: Vec<usize>,
    pub k: KRule,
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default)]
    pub threshold: ThresholdChoice,
    /// Inflation `ε` of the adaptive tail probability.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub sparse: SparseSettings,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<(f64, f64)>,
    /// Share one dataset per replication across variants.
    #[serde(default = "yes")]
    pub paired: bool,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// One `(n, k, ψ)` point of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchedulePoint {
    pub index: usize,
    pub n: usize,
    pub k: usize,
    pub psi: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Dense dimension of a synthetic scenario.
    fn dims(&self) -> Option<(usize, usize)> {
        self.synthetic.as_ref().map(|s| (s.d, s.s.unwrap_or(s.d)))
    }

    pub fn k_for(&self, n: usize) -> Result<usize> {
        let k = match self.k {
            KRule::Sqrt => (n as f64).sqrt().ceil() as usize,
            KRule::Fixed(k) => k,
            KRule::SparseLog { c } => {
                let (d, s) = self.dims().ok_or_else(|| {
                    Error::Config("k rule sparse-log needs a synthetic scenario".into())
                })?;
                if !(c > 0.0) || d < 2 {
                    return Err(Error::Config(format!(
                        "sparse-log needs c > 0 and d >= 2, got c={c}, d={d}"
                    )));
                }
                (c * s as f64 * (d as f64).ln()).ceil() as usize
            }
        };
        if k == 0 || k >= n {
            return Err(Error::Config(format!(
                "budget k={k} must satisfy 1 <= k < n={n}"
            )));
        }
        Ok(k)
    }

    pub fn schedule(&self) -> Result<Vec<SchedulePoint>> {
        let psis = match (self.scenario, &self.synthetic) {
            (ScenarioKind::SyntheticNonlinear, Some(s)) => s.psi.clone(),
            _ => vec![0.0],
        };
        let mut out = Vec::new();
        for &n in &self.n {
            let k = self.k_for(n)?;
            for &psi in &psis {
                out.push(SchedulePoint {
                    index: out.len(),
                    n,
                    k,
                    psi,
                });
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.variants.is_empty() {
            return bad("at least one variant is required".into());
        }
        if self.n.is_empty() {
            return bad("the n schedule is empty".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return bad(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            ));
        }
        for &(lo, hi) in &self.quantiles {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return bad(format!("invalid quantile pair ({lo}, {hi})"));
            }
        }
        match self.estimator {
            EstimatorChoice::Ridge { lambda } if !(lambda >= 0.0) => {
                return bad(format!("ridge lambda must be non-negative, got {lambda}"));
            }
            EstimatorChoice::Lasso { lambda: Some(l) } if !(l >= 0.0) => {
                return bad(format!("lasso lambda must be non-negative, got {l}"));
            }
            _ => {}
        }
        if self.scenario.is_synthetic() {
            let Some(s) = &self.synthetic else {
                return bad("synthetic scenarios need a \"synthetic\" section".into());
            };
            if s.d == 0 {
                return bad("d must be at least 1".into());
            }
            if !(s.sigma >= 0.0) || !s.sigma.is_finite() {
                return bad(format!(
                    "sigma must be finite and non-negative, got {}",
                    s.sigma
                ));
            }
            if let Some(sz) = s.s {
                if sz == 0 || sz > s.d {
                    return bad(format!("support size s={sz} must lie in 1..={}", s.d));
                }
            }
            if s.psi.is_empty() || s.psi.iter().any(|p| !p.is_finite()) {
                return bad("psi must be a non-empty list of finite values".into());
            }
            if self.scenario == ScenarioKind::SyntheticSparse && s.s.is_none() {
                return bad("synthetic-sparse needs a support size s".into());
            }
        } else if self.csv.is_none() {
            return bad("csv-dataset needs a \"csv\" section".into());
        }
        if self.scenario != ScenarioKind::SyntheticSparse
            && self.variants.iter().any(|v| v.is_sparse())
        {
            return bad("sparse variants need the synthetic-sparse scenario".into());
        }
        if !(self.sparse.k1_fraction > 0.0 && self.sparse.k1_fraction < 1.0) {
            return bad(format!(
                "k1_fraction must lie in (0, 1), got {}",
                self.sparse.k1_fraction
            ));
        }
        self.schedule().map(|_| ())
    }
}
