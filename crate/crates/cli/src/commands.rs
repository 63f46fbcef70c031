use std::fs::File;
use std::io::{BufRead, BufWriter, Write};

use oal_core::bounds::{
    lower_bound_clt, lower_bound_gaussian, lower_bound_pointwise_report, ridge_bound,
    upper_bound_gaussian, upper_bound_main, upper_bound_sparse, BoundReport, DEFAULT_ALPHA,
};
use oal_core::datagen::{sample_observations, DistributionSpec};
use oal_core::error::Error;
use oal_core::harness::{
    needs_reference, read_csv_table, reference_rows, run_experiment, split_table, threshold_setup,
    write_records_csv, write_summary_json, ExperimentConfig, Split,
};
use oal_core::numerics::{Matrix, SymMatrix};
use oal_core::par::Execution;
use oal_core::rng::derive_seed;
use oal_core::selectors::{AdaptiveWhitening, SelectorState};
use oal_core::thresholds::{gaussian_threshold_for_ratio, GaussianMode, ThresholdRule};
use oal_core::whitening::WhiteningTransform;
use serde_json::json;

use crate::rows::{parse_row, read_matrix};
use crate::{
    BoundsArgs, DatasetArgs, DistributionArg, ExperimentArgs, Failure, MethodArg, SelectArgs,
    ThresholdArgs,
};

type Outcome = std::result::Result<(), Failure>;

fn emit(text: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn create(path: &std::path::Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(Error::Io(format!("{}: {e}", path.display()))))
}

pub fn experiment(a: ExperimentArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Error::Io(format!("{}: {e}", a.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if a.sequential {
        cfg.execution = Execution::Sequential;
    }
    let report = run_experiment(&cfg)?;
    if let Some(p) = &a.records {
        let mut w = create(p)?;
        write_records_csv(&report, &mut w)?;
        w.flush()?;
    }
    match &a.summary {
        Some(p) => {
            let mut w = create(p)?;
            write_summary_json(&report, &mut w)?;
            w.flush()?;
        }
        None => write_summary_json(&report, std::io::stdout().lock())?,
    }
    Ok(())
}

/// White reference sample for the CLT and empirical methods.
fn reference(dist: DistributionArg, d: usize, m: usize, seed: u64) -> Result<Matrix, Failure> {
    let spec = DistributionSpec::white(dist.into(), d)?;
    Ok(sample_observations(&spec, m, derive_seed(seed, &[2]))?)
}

fn rule_json(rule: &ThresholdRule) -> serde_json::Value {
    let mut v = serde_json::to_value(rule).expect("rule serializes");
    v["d"] = json!(rule.dim());
    v["gamma_sq"] = json!(rule.gamma_sq());
    v
}

pub fn threshold(a: ThresholdArgs) -> Outcome {
    let rule = match (a.ratio, a.n, a.k) {
        (Some(ratio), _, _) => {
            let mode = match a.method {
                MethodArg::GaussianExact => GaussianMode::Exact,
                MethodArg::GaussianClosedForm => GaussianMode::ClosedForm,
                _ => {
                    return Err(Failure::Usage(
                        "--ratio only applies to the Gaussian methods; give --n and --k".into(),
                    ))
                }
            };
            gaussian_threshold_for_ratio(a.d, ratio, mode, a.c_bar)?
        }
        (None, Some(n), Some(k)) => {
            if a.method == MethodArg::GaussianClosedForm {
                oal_core::thresholds::gaussian_threshold(
                    a.d,
                    n,
                    k,
                    GaussianMode::ClosedForm,
                    a.c_bar,
                )?
            } else {
                let sample = if needs_reference(a.method.into()) {
                    let m = a
                        .samples
                        .unwrap_or_else(|| reference_rows(a.d, n, k.max(1)));
                    Some(reference(a.distribution, a.d, m, a.seed)?)
                } else {
                    None
                };
                threshold_setup(a.method.into(), a.d, n, k, sample.as_ref())?.0
            }
        }
        _ => return Err(Failure::Usage("give either --n and --k, or --ratio".into())),
    };
    emit(&serde_json::to_string_pretty(&rule_json(&rule)).expect("json"))
}

fn need<T: Copy>(v: Option<T>, flag: &str, bound: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("{bound} needs --{flag}")))
}

pub fn bounds(a: BoundsArgs) -> Outcome {
    let mut out: Vec<BoundReport> = Vec::new();
    let alpha = a.alpha.unwrap_or(DEFAULT_ALPHA);
    if a.upper_main {
        let b = "--upper-main";
        out.push(upper_bound_main(
            need(a.d, "d", b)?,
            need(a.k, "k", b)?,
            alpha,
            need(a.phi, "phi", b)?,
        )?);
    }
    if a.upper_gaussian {
        let b = "--upper-gaussian";
        out.push(upper_bound_gaussian(
            need(a.d, "d", b)?,
            need(a.k, "k", b)?,
            need(a.n, "n", b)?,
            alpha,
        )?);
    }
    if a.upper_sparse {
        let b = "--upper-sparse";
        out.push(upper_bound_sparse(
            need(a.s, "s", b)?,
            need(a.k2, "k2", b)?,
            need(a.n2, "n2", b)?,
            alpha,
        )?);
    }
    if a.lower_gaussian {
        let b = "--lower-gaussian";
        out.push(lower_bound_gaussian(
            need(a.d, "d", b)?,
            need(a.k, "k", b)?,
            need(a.n, "n", b)?,
            a.alpha,
        )?);
    }
    if a.lower_clt {
        let b = "--lower-clt";
        out.push(lower_bound_clt(
            need(a.d, "d", b)?,
            need(a.k, "k", b)?,
            need(a.n, "n", b)?,
            need(a.spread, "spread", b)?,
        )?);
    }
    if a.ridge {
        let b = "--ridge";
        out.push(ridge_bound(
            need(a.lambda_min, "lambda-min", b)?,
            need(a.radius, "radius", b)?,
            need(a.sigma, "sigma", b)?,
            need(a.d, "d", b)?,
            need(a.beta_norm_sq, "beta-norm-sq", b)?,
        )?);
    }
    if let Some(p) = &a.pointwise {
        out.push(lower_bound_pointwise_report(&read_matrix(p)?)?);
    }
    if out.is_empty() {
        return Err(Failure::Usage(
            "choose at least one bound, e.g. --lower-gaussian".into(),
        ));
    }
    emit(&serde_json::to_string_pretty(&out).expect("json"))
}

fn build_selector(a: &SelectArgs, d: usize) -> Result<SelectorState, Failure> {
    if let Some(d_flag) = a.d {
        if d_flag != d {
            return Err(Failure::Runtime(Error::Shape(format!(
                "first row has {d} values but --d is {d_flag}"
            ))));
        }
    }
    let transform = match &a.sigma_file {
        Some(p) => WhiteningTransform::from_covariance(&SymMatrix::new(read_matrix(p)?)?)?,
        None => WhiteningTransform::identity(d),
    };
    if transform.dim() != d {
        return Err(Failure::Runtime(Error::Shape(format!(
            "Σ is {0}x{0} but rows have {d} values",
            transform.dim()
        ))));
    }
    if let Some(gamma) = a.gamma {
        let rule = ThresholdRule::manual(vec![1.0; d], gamma)?;
        return Ok(SelectorState::fixed(a.n, a.k, rule, transform)?);
    }
    let sample = if needs_reference(a.method.into()) {
        Some(reference(
            a.distribution,
            d,
            reference_rows(d, a.n, a.k.max(1)),
            a.seed,
        )?)
    } else {
        None
    };
    let (rule, calibration) = threshold_setup(a.method.into(), d, a.n, a.k, sample.as_ref())?;
    if a.online_sigma {
        let w = AdaptiveWhitening::Online {
            refresh_interval: a.refresh_interval,
        };
        Ok(SelectorState::adaptive(
            a.n,
            a.k,
            rule,
            calibration,
            w,
            a.epsilon,
        )?)
    } else if a.adaptive {
        let w = AdaptiveWhitening::Known(transform);
        Ok(SelectorState::adaptive(
            a.n,
            a.k,
            rule,
            calibration,
            w,
            a.epsilon,
        )?)
    } else {
        Ok(SelectorState::fixed(a.n, a.k, rule, transform)?)
    }
}

pub fn select_stream(a: SelectArgs) -> Outcome {
    let stdin = std::io::stdin().lock();
    let mut out = std::io::stdout().lock();
    let mut selector: Option<SelectorState> = None;
    let mut seen = 0usize;
    let mut buf = Vec::new();
    for (i, line) in stdin.lines().enumerate() {
        let line = line?;
        let Some(row) = parse_row(&line, i + 1)? else {
            continue;
        };
        if seen == a.n {
            return Err(Failure::Runtime(Error::State(format!(
                "line {}: stream longer than --n {}",
                i + 1,
                a.n
            ))));
        }
        seen += 1;
        let sel = match &mut selector {
            Some(s) => s,
            None => selector.insert(build_selector(&a, row.len())?),
        };
        let at_line = |e: Error| match e {
            Error::Shape(m) => Error::Shape(format!("line {}: {m}", i + 1)),
            other => other,
        };
        if sel.is_finished() {
            // budget spent: the machine takes no more rows, the rest are skipped
            if row.len() != sel.transform().dim() {
                return Err(Failure::Runtime(at_line(Error::Shape(format!(
                    "observation has {} coordinates, selector expects {}",
                    row.len(),
                    sel.transform().dim()
                )))));
            }
            buf.resize(row.len(), 0.0);
            sel.transform().apply_into(&row, &mut buf)?;
            writeln!(
                out,
                "SKIP {} {}",
                sel.rule().weighted_sq_norm(&buf),
                sel.rule().gamma_sq()
            )?;
        } else {
            let dec = sel.step(&row).map_err(at_line)?;
            let tag = if dec.selected { "SELECT" } else { "SKIP" };
            writeln!(out, "{tag} {} {}", dec.weighted_norm, dec.threshold_used)?;
        }
        out.flush()?;
    }
    Ok(())
}

pub fn dataset_check(a: DatasetArgs) -> Outcome {
    let table = read_csv_table(&a.csv, &a.response)?;
    let split = split_table(
        &table,
        Split::Fraction(a.train_fraction),
        a.seed,
        a.centering.into(),
    )?;
    let train_means: Vec<f64> = (0..table.dim())
        .map(|j| {
            let c = split.train.x.column(j);
            c.iter().sum::<f64>() / c.len() as f64
        })
        .collect();
    let report = json!({
        "rows": table.len(),
        "covariates": table.dim(),
        "covariate_names": table.covariate_names,
        "response": table.response_name,
        "train_rows": split.train.len(),
        "test_rows": split.test.len(),
        "centering": match a.centering { crate::CenteringArg::Full => "full", crate::CenteringArg::Train => "train" },
        "covariate_means": split.covariate_means,
        "response_mean": split.response_mean,
        "degenerate_columns": split.degenerate_columns.iter().map(|&j| &table.covariate_names[j]).collect::<Vec<_>>(),
        "max_abs_train_mean_after_centering": train_means.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    });
    emit(&serde_json::to_string_pretty(&report).expect("json"))
}
