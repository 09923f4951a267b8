//! Mediation trace export.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mediator::MediationReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl TraceFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParams(format!("unknown trace format '{other}'"))),
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    psi: f64,
    grad_norm: f64,
    inner_iters: usize,
}

/// Writes one row per outer iteration (`iter,psi,grad_norm,inner_iters`) as
/// CSV, or the whole report as JSON.
pub fn export_trace<W: Write>(report: &MediationReport, format: TraceFormat, out: W) -> Result<()> {
    match format {
        TraceFormat::Json => {
            serde_json::to_writer_pretty(out, report)?;
        }
        TraceFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for (k, &psi) in report.psi_trace.iter().enumerate() {
                w.serialize(TraceRow {
                    iter: k,
                    psi,
                    grad_norm: report.grad_norms.get(k).copied().unwrap_or(f64::NAN),
                    inner_iters: report.inner_iterations.get(k).copied().unwrap_or(0),
                })
                .map_err(|e| Error::InvalidParams(format!("csv: {e}")))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
