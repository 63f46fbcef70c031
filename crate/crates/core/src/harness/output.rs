//! Report serialization.
//!
//! Records CSV columns, one row per `(point, variant, replication)`:
//!
//! | column | meaning |
//! |---|---|
//! | `point` | schedule index |
//! | `n`, `k`, `psi` | stream length, budget, quadratic coefficient |
//! | `variant` | selector variant name |
//! | `replication` | replication index |
//! | `status` | `ok` or `failed` |
//! | `metric` | Σ-norm error (synthetic) or test MSE (CSV); empty on failure |
//! | `labels` | responses revealed |
//! | `support_recovered` | `true`/`false` for sparse-aware variants, else empty |
//! | `error` | `kind: message` on failure, else empty |
//!
//! The summary JSON holds `schedule`, `summaries` (one object per
//! `(point, variant)` with `successes`, `failures`, `failure_kinds`, `mean`,
//! `median`, `quantiles` as `{lower_p, upper_p, lower, upper}` and
//! `support_recovery_rate`) and the echoed `config`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, SchedulePoint};
use crate::harness::run::{CellSummary, ExperimentReport, Status};

pub const RECORD_COLUMNS: [&str; 11] = [
    "point",
    "n",
    "k",
    "psi",
    "variant",
    "replication",
    "status",
    "metric",
    "labels",
    "support_recovered",
    "error",
];

pub fn write_records_csv(report: &ExperimentReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(RECORD_COLUMNS).map_err(io)?;
    for r in &report.records {
        w.write_record([
            r.point.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.psi.to_string(),
            r.variant.name().to_string(),
            r.replication.to_string(),
            match r.status {
                Status::Ok => "ok".to_string(),
                Status::Failed => "failed".to_string(),
            },
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
            r.labels.to_string(),
            r.support_recovered
                .map(|b| b.to_string())
                .unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    schedule: &'a [SchedulePoint],
    summaries: &'a [CellSummary],
    config: &'a ExperimentConfig,
}

pub fn summary_json(report: &ExperimentReport) -> String {
    serde_json::to_string_pretty(&SummaryDocument {
        schedule: &report.schedule,
        summaries: &report.summaries,
        config: &report.config,
    })
    .expect("summary serializes")
}

pub fn write_summary_json(report: &ExperimentReport, mut out: impl Write) -> Result<()> {
    out.write_all(summary_json(report).as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}
