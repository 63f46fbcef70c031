//! Replication loop: for every schedule point and replication, generate or
//! split data, stream it through each variant, fit, and score.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::Dataset;
use crate::datagen::{
    fourth_moments, gen_responses, make_model, random_spd, sample_observations_with,
    DistributionKind, DistributionSpec, ResponseSpec,
};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_lasso, fit_ols, fit_ridge, lasso_regularization, LinearFit, LinearModel,
};
use crate::harness::config::{
    CovarianceChoice, EstimatorChoice, ExperimentConfig, ScenarioKind, SchedulePoint,
    SupportCovarianceChoice, ThresholdChoice, VariantKind,
};
use crate::harness::csvdata::{read_csv_table, split_table, CsvTable, Split};
use crate::harness::metrics::{describe, mse_sigma_norm, test_mse, QuantileBand};
use crate::numerics::{Matrix, SymMatrix};
use crate::par::map_indexed;
use crate::rng::{self, derive_seed};
use crate::selectors::{
    run_sparse_two_stage, AdaptiveWhitening, SelectorState, SparseConfig, SupportCovariance,
};
use crate::thresholds::{
    clt_threshold, gaussian_threshold, solve_threshold_empirical, Calibration, GaussianMode,
    ThresholdRule, DEFAULT_WEIGHT_ITERATIONS,
};
use crate::whitening::{fit_covariance_batch, sample_covariance, WhiteningTransform};

// seed-path tags
const TAG_DATA: u64 = 0;
const TAG_UNPAIRED: u64 = 1;
const TAG_REFERENCE: u64 = 2;
const TAG_COVARIANCE: u64 = 3;

/// Rows drawn to approximate the covariance of a correlated copula.
const COPULA_COVARIANCE_ROWS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

/// One `(point, variant, replication)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub point: usize,
    pub n: usize,
    pub k: usize,
    pub psi: f64,
    pub variant: VariantKind,
    pub replication: usize,
    pub status: Status,
    /// Σ-norm error (synthetic) or test MSE (CSV).
    pub metric: Option<f64>,
    /// Responses revealed.
    pub labels: usize,
    /// Exact support recovery, sparse scenario only.
    pub support_recovered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub point: usize,
    pub n: usize,
    pub k: usize,
    pub psi: f64,
    pub variant: VariantKind,
    pub successes: usize,
    pub failures: usize,
    /// Failure counts by error kind.
    pub failure_kinds: BTreeMap<String, usize>,
    /// `None` when every replication failed.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub quantiles: Vec<QuantileBand>,
    pub support_recovery_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub schedule: Vec<SchedulePoint>,
    pub records: Vec<ReplicationRecord>,
    pub summaries: Vec<CellSummary>,
}

impl ExperimentReport {
    pub fn cell(&self, point: usize, variant: VariantKind) -> Option<&CellSummary> {
        self.summaries
            .iter()
            .find(|c| c.point == point && c.variant == variant)
    }

    pub fn records_for(
        &self,
        point: usize,
        variant: VariantKind,
    ) -> impl Iterator<Item = &ReplicationRecord> {
        self.records
            .iter()
            .filter(move |r| r.point == point && r.variant == variant)
    }
}

/// Summaries per `(point, variant)` over successful replications.
pub fn summarize_report(
    records: &[ReplicationRecord],
    schedule: &[SchedulePoint],
    variants: &[VariantKind],
    quantile_pairs: &[(f64, f64)],
) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for p in schedule {
        for &v in variants {
            let cell: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.point == p.index && r.variant == v)
                .collect();
            let values: Vec<f64> = cell.iter().filter_map(|r| r.metric).collect();
            let mut failure_kinds = BTreeMap::new();
            for r in cell.iter().filter(|r| r.status == Status::Failed) {
                let kind = r
                    .error
                    .as_deref()
                    .and_then(|e| e.split(':').next())
                    .unwrap_or("unknown")
                    .to_string();
                *failure_kinds.entry(kind).or_insert(0) += 1;
            }
            let recov: Vec<bool> = cell
                .iter()
                .filter(|r| r.status == Status::Ok)
                .filter_map(|r| r.support_recovered)
                .collect();
            let stats = describe(&values, quantile_pairs);
            out.push(CellSummary {
                point: p.index,
                n: p.n,
                k: p.k,
                psi: p.psi,
                variant: v,
                successes: values.len(),
                failures: cell.len() - values.len(),
                failure_kinds,
                mean: stats.as_ref().map(|s| s.mean),
                median: stats.as_ref().map(|s| s.median),
                quantiles: stats.map(|s| s.bands).unwrap_or_default(),
                support_recovery_rate: if recov.is_empty() {
                    None
                } else {
                    Some(recov.iter().filter(|b| **b).count() as f64 / recov.len() as f64)
                },
            });
        }
    }
    out
}

/// Experiment-wide inputs.
struct Setup {
    spec: Option<DistributionSpec>,
    /// Population covariance used for known-Σ whitening and the Σ-norm metric.
    population: Option<SymMatrix>,
    known_transform: Option<WhiteningTransform>,
    table: Option<CsvTable>,
}

/// Per-point threshold state shared by all replications (synthetic only).
struct PointContext {
    rule: ThresholdRule,
    calibration: Calibration,
}

struct Outcome {
    fit: LinearFit,
    labels: usize,
    support: Option<Vec<usize>>,
}

/// Inputs for one variant on one replication.
struct RepInput<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    k: usize,
    transform: &'a WhiteningTransform,
    rule: &'a ThresholdRule,
    calibration: &'a Calibration,
    noise_sigma: Option<f64>,
    population: Option<&'a SymMatrix>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let schedule = config.schedule()?;
    let setup = prepare(config)?;
    let contexts: Vec<Result<PointContext>> = schedule
        .iter()
        .map(|p| point_context(config, &setup, p))
        .collect();

    let reps = config.replications;
    let tasks = schedule.len() * reps;
    let per_task = map_indexed(tasks, config.execution, config.workers, |t| {
        let point = &schedule[t / reps];
        let rep = t % reps;
        run_task(config, &setup, point, contexts[point.index].as_ref(), rep)
    })?;

    // reorder to point → variant → replication
    let mut records = Vec::with_capacity(tasks * config.variants.len());
    for p in &schedule {
        for vi in 0..config.variants.len() {
            for rep in 0..reps {
                records.push(per_task[p.index * reps + rep][vi].clone());
            }
        }
    }
    let summaries = summarize_report(&records, &schedule, &config.variants, &config.quantiles);
    Ok(ExperimentReport {
        config: config.clone(),
        schedule,
        records,
        summaries,
    })
}

fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    if config.scenario == ScenarioKind::CsvDataset {
        let csv = config.csv.as_ref().expect("validated");
        let table = read_csv_table(&csv.path, &csv.response_column)?;
        return Ok(Setup {
            spec: None,
            population: None,
            known_transform: None,
            table: Some(table),
        });
    }
    let syn = config.synthetic.as_ref().expect("validated");
    let latent = match syn.covariance {
        CovarianceChoice::Identity => SymMatrix::identity(syn.d),
        CovarianceChoice::Random {
            lambda_min,
            lambda_max,
        } => random_spd(
            syn.d,
            lambda_min,
            lambda_max,
            &mut rng::stream(config.seed, &[TAG_COVARIANCE]),
        )?,
    };
    if syn.distribution == DistributionKind::UniformWhite
        && syn.covariance != CovarianceChoice::Identity
    {
        return Err(Error::Config(
            "uniform-white covariates only support identity covariance".into(),
        ));
    }
    let spec = DistributionSpec::new(syn.distribution, latent)?;
    let population = match spec.population_covariance() {
        Some(c) => c.clone(),
        None => {
            let x = sample_observations_with(
                &spec,
                COPULA_COVARIANCE_ROWS,
                &mut rng::stream(config.seed, &[TAG_COVARIANCE, 1]),
            )?;
            sample_covariance(&x)?
        }
    };
    let known = WhiteningTransform::from_covariance(&population)?;
    Ok(Setup {
        spec: Some(spec),
        population: Some(population),
        known_transform: Some(known),
        table: None,
    })
}

pub fn needs_reference(choice: ThresholdChoice) -> bool {
    matches!(choice, ThresholdChoice::Clt | ThresholdChoice::Empirical)
}

/// Reference sample size for the CLT and empirical methods.
pub fn reference_rows(d: usize, n: usize, k: usize) -> usize {
    (50 * d).max(100 * n / k.max(1)).max(10_000)
}

/// Rule and calibration for a `d`-dim whitened stream; `reference` is a
/// whitened sample for the CLT and empirical methods.
pub fn threshold_setup(
    choice: ThresholdChoice,
    d: usize,
    n: usize,
    k: usize,
    reference: Option<&Matrix>,
) -> Result<(ThresholdRule, Calibration)> {
    let need = || reference.ok_or_else(|| Error::State("reference sample required".into()));
    Ok(match choice {
        ThresholdChoice::GaussianExact => (
            gaussian_threshold(d, n, k, GaussianMode::Exact, 1.0)?,
            Calibration::Gaussian {
                mode: GaussianMode::Exact,
                c_bar: 1.0,
            },
        ),
        ThresholdChoice::GaussianClosedForm => (
            gaussian_threshold(d, n, k, GaussianMode::ClosedForm, 1.0)?,
            Calibration::Gaussian {
                mode: GaussianMode::ClosedForm,
                c_bar: 1.0,
            },
        ),
        ThresholdChoice::Clt => {
            let m4 = fourth_moments(need()?);
            let rule = clt_threshold(d, n, k, &m4, &vec![1.0; d])?;
            let spread = rule.clt_spread.unwrap_or(0.0);
            (rule, Calibration::Clt { spread })
        }
        ThresholdChoice::Empirical => {
            let sample = need()?;
            let rule = solve_threshold_empirical(sample, k, n, DEFAULT_WEIGHT_ITERATIONS)?;
            let mut norms: Vec<f64> = sample
                .rows_iter()
                .map(|r| rule.weighted_sq_norm(r))
                .collect();
            norms.sort_by(f64::total_cmp);
            (
                rule,
                Calibration::Empirical {
                    sorted_sq_norms: norms,
                },
            )
        }
    })
}

fn point_context(
    config: &ExperimentConfig,
    setup: &Setup,
    p: &SchedulePoint,
) -> Result<PointContext> {
    let Some(spec) = &setup.spec else {
        // CSV rules depend on the split and are built per replication
        return Ok(PointContext {
            rule: ThresholdRule::random_sampling(0),
            calibration: Calibration::Zero,
        });
    };
    let d = spec.dim();
    let reference = if needs_reference(config.threshold) {
        let m = reference_rows(d, p.n, p.k);
        let raw = sample_observations_with(
            spec,
            m,
            &mut rng::stream(config.seed, &[TAG_REFERENCE, p.index as u64]),
        )?;
        Some(
            setup
                .known_transform
                .as_ref()
                .expect("synthetic")
                .apply_rows(&raw)?,
        )
    } else {
        None
    };
    let (rule, calibration) = threshold_setup(config.threshold, d, p.n, p.k, reference.as_ref())?;
    Ok(PointContext { rule, calibration })
}

fn synthetic_data(
    config: &ExperimentConfig,
    setup: &Setup,
    p: &SchedulePoint,
    path: &[u64],
) -> Result<(Matrix, Vec<f64>, LinearModel)> {
    let syn = config.synthetic.as_ref().expect("synthetic");
    let spec = setup.spec.as_ref().expect("synthetic");
    let mut r = rng::stream(config.seed, path);
    let model = make_model(
        syn.d,
        syn.s.unwrap_or(syn.d),
        syn.coefficients,
        syn.sigma,
        &mut r,
    )?;
    let x = sample_observations_with(spec, p.n, &mut r)?;
    let y = gen_responses(
        &x,
        &ResponseSpec {
            model: model.clone(),
            nonlinearity: p.psi,
        },
        &mut r,
    )?;
    Ok((x, y, model))
}

fn failed(p: &SchedulePoint, v: VariantKind, rep: usize, e: &Error) -> ReplicationRecord {
    ReplicationRecord {
        point: p.index,
        n: p.n,
        k: p.k,
        psi: p.psi,
        variant: v,
        replication: rep,
        status: Status::Failed,
        metric: None,
        labels: 0,
        support_recovered: None,
        error: Some(format!("{}: {e}", e.kind())),
    }
}

fn run_task(
    config: &ExperimentConfig,
    setup: &Setup,
    p: &SchedulePoint,
    ctx: std::result::Result<&PointContext, &Error>,
    rep: usize,
) -> Vec<ReplicationRecord> {
    let ctx = match ctx {
        Ok(c) => c,
        Err(e) => {
            return config
                .variants
                .iter()
                .map(|&v| failed(p, v, rep, e))
                .collect()
        }
    };
    let shared_path = [TAG_DATA, p.index as u64, rep as u64];
    let unpaired_path = |vi: usize| [TAG_UNPAIRED, p.index as u64, vi as u64, rep as u64];

    if setup.table.is_some() {
        return run_csv_task(config, setup, p, rep, &shared_path, &unpaired_path);
    }

    let shared = if config.paired {
        Some(synthetic_data(config, setup, p, &shared_path))
    } else {
        None
    };
    config
        .variants
        .iter()
        .enumerate()
        .map(|(vi, &v)| {
            let owned;
            let data = match &shared {
                Some(d) => d.as_ref(),
                None => {
                    owned = synthetic_data(config, setup, p, &unpaired_path(vi));
                    owned.as_ref()
                }
            };
            let result = data.map_err(Clone::clone).and_then(|(x, y, model)| {
                let population = setup.population.as_ref().expect("synthetic");
                let input = RepInput {
                    x,
                    y,
                    k: p.k,
                    transform: setup.known_transform.as_ref().expect("synthetic"),
                    rule: &ctx.rule,
                    calibration: &ctx.calibration,
                    noise_sigma: Some(model.noise_sigma),
                    population: Some(population),
                };
                let out = run_variant(config, v, &input)?;
                let metric = mse_sigma_norm(&out.fit, model, population)?;
                let recovered = out.support.map(|s| s == model.support());
                Ok((metric, out.labels, recovered))
            });
            record(p, v, rep, result)
        })
        .collect()
}

fn record(
    p: &SchedulePoint,
    v: VariantKind,
    rep: usize,
    result: Result<(f64, usize, Option<bool>)>,
) -> ReplicationRecord {
    match result {
        Ok((metric, labels, recovered)) => ReplicationRecord {
            point: p.index,
            n: p.n,
            k: p.k,
            psi: p.psi,
            variant: v,
            replication: rep,
            status: Status::Ok,
            metric: Some(metric),
            labels,
            support_recovered: recovered,
            error: None,
        },
        Err(e) => failed(p, v, rep, &e),
    }
}

fn run_csv_task(
    config: &ExperimentConfig,
    setup: &Setup,
    p: &SchedulePoint,
    rep: usize,
    shared_path: &[u64],
    unpaired_path: &dyn Fn(usize) -> [u64; 4],
) -> Vec<ReplicationRecord> {
    let table = setup.table.as_ref().expect("csv");
    let centering = config.csv.as_ref().expect("csv").centering;
    let one = |path: &[u64], v: VariantKind| -> Result<(f64, usize, Option<bool>)> {
        let split = split_table(
            table,
            Split::Count(p.n),
            derive_seed(config.seed, path),
            centering,
        )?;
        let x = &split.train.x;
        let transform = fit_covariance_batch(x)?;
        let reference = if needs_reference(config.threshold) {
            Some(transform.apply_rows(x)?)
        } else {
            None
        };
        let (rule, calibration) =
            threshold_setup(config.threshold, x.ncols(), p.n, p.k, reference.as_ref())?;
        let input = RepInput {
            x,
            y: split.train.responses()?,
            k: p.k,
            transform: &transform,
            rule: &rule,
            calibration: &calibration,
            noise_sigma: None,
            population: None,
        };
        let out = run_variant(config, v, &input)?;
        Ok((test_mse(&out.fit, &split.test)?, out.labels, None))
    };
    config
        .variants
        .iter()
        .enumerate()
        .map(|(vi, &v)| {
            let result = if config.paired {
                one(shared_path, v)
            } else {
                one(&unpaired_path(vi), v)
            };
            record(p, v, rep, result)
        })
        .collect()
}

fn fit_estimator(
    choice: EstimatorChoice,
    x: &Matrix,
    y: &[f64],
    noise_sigma: Option<f64>,
) -> Result<LinearFit> {
    match choice {
        EstimatorChoice::Ols => fit_ols(x, y),
        EstimatorChoice::Ridge { lambda } => fit_ridge(x, y, lambda),
        EstimatorChoice::Lasso { lambda } => {
            let lambda = match (lambda, noise_sigma) {
                (Some(l), _) => l,
                (None, Some(s)) => lasso_regularization(s, x.ncols(), x.nrows())?,
                (None, None) => {
                    return Err(Error::Config(
                        "lasso on CSV data needs an explicit lambda".into(),
                    ))
                }
            };
            fit_lasso(x, y, lambda)
        }
    }
}

/// Runs a selector over the stream and reveals the selected responses.
fn select_and_fit(
    config: &ExperimentConfig,
    mut sel: SelectorState,
    input: &RepInput,
) -> Result<Outcome> {
    sel.run(input.x)?;
    let idx = sel.selected_indices();
    let y: Vec<f64> = idx.iter().map(|&i| input.y[i]).collect();
    let fit = fit_estimator(config.estimator, &sel.selected_raw(), &y, input.noise_sigma)?;
    Ok(Outcome {
        fit,
        labels: idx.len(),
        support: None,
    })
}

fn run_variant(config: &ExperimentConfig, v: VariantKind, input: &RepInput) -> Result<Outcome> {
    let n = input.x.nrows();
    let d = input.x.ncols();
    let k = input.k;
    match v {
        VariantKind::RandomSampling => select_and_fit(
            config,
            SelectorState::fixed(
                n,
                k,
                ThresholdRule::random_sampling(d),
                WhiteningTransform::identity(d),
            )?,
            input,
        ),
        VariantKind::Fixed => select_and_fit(
            config,
            SelectorState::fixed(n, k, input.rule.clone(), input.transform.clone())?,
            input,
        ),
        VariantKind::Adaptive => select_and_fit(
            config,
            SelectorState::adaptive(
                n,
                k,
                input.rule.clone(),
                input.calibration.clone(),
                AdaptiveWhitening::Known(input.transform.clone()),
                config.epsilon,
            )?,
            input,
        ),
        VariantKind::AdaptiveOnline => select_and_fit(
            config,
            SelectorState::adaptive(
                n,
                k,
                input.rule.clone(),
                input.calibration.clone(),
                AdaptiveWhitening::Online {
                    refresh_interval: 1,
                },
                config.epsilon,
            )?,
            input,
        ),
        VariantKind::Sparse | VariantKind::SparseRefit => {
            let sigma = input
                .noise_sigma
                .ok_or_else(|| Error::Config("sparse variants need a known noise level".into()))?;
            let k1 = ((config.sparse.k1_fraction * k as f64).round() as usize).clamp(1, k - 1);
            let covariance = match config.sparse.covariance {
                SupportCovarianceChoice::Estimated => SupportCovariance::Estimated,
                SupportCovarianceChoice::Exact => SupportCovariance::Exact(
                    input
                        .population
                        .ok_or_else(|| {
                            Error::Config("exact support covariance needs a population Σ".into())
                        })?
                        .clone(),
                ),
            };
            let cfg = SparseConfig {
                support_threshold: config.sparse.support_threshold,
                c_bar: config.sparse.c_bar,
                covariance,
                refit_all: v == VariantKind::SparseRefit,
                ..SparseConfig::new(k1, k - k1, sigma)
            };
            let stream = Dataset::new(input.x.clone(), Some(input.y.to_vec()))?;
            let out = run_sparse_two_stage(&stream, &cfg)?;
            Ok(Outcome {
                labels: out.labeled.len(),
                support: Some(out.support.clone()),
                fit: out.fit,
            })
        }
        VariantKind::RandomLasso => {
            let rows: Vec<usize> = (0..k).collect();
            let x = input.x.select_rows(&rows);
            let y = &input.y[..k];
            let lambda = match (config.estimator, input.noise_sigma) {
                (EstimatorChoice::Lasso { lambda: Some(l) }, _) => l,
                (_, Some(s)) => lasso_regularization(s, d, k)?,
                _ => {
                    return Err(Error::Config(
                        "random-lasso on CSV data needs an explicit lambda".into(),
                    ))
                }
            };
            let fit = fit_lasso(&x, y, lambda)?;
            let support = fit
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, b)| b.abs() > config.sparse.support_threshold)
                .map(|(j, _)| j)
                .collect();
            Ok(Outcome {
                fit,
                labels: k,
                support: Some(support),
            })
        }
    }
}
