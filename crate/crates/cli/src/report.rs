//! Machine-readable output. JSON goes to stdout pretty-printed; CSV is a
//! header line plus one row with the same fields.

use std::io::Write;

use serde::Serialize;

use dvsim_core::verify::VerifyReport;

use crate::{CliError, CliResult, ReportFormat};

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub ranks: usize,
    pub circuit: String,
    pub seed: Option<u64>,
    /// Non-swap gates of the source circuit.
    pub gate_count: u64,
    pub fuse_width: Option<usize>,
    pub inserted_swaps: usize,
    pub mode: String,
    pub runs: usize,
    /// Mean wall-clock seconds of runs 2 to 6.
    pub elapsed_mean_s: f64,
    pub comm_bytes_measured: u64,
    pub comm_bytes_predicted: u64,
    /// bytes per second
    pub effective_bandwidth: Option<f64>,
    pub total_flops: Option<f64>,
    pub qbf: Option<f64>,
    pub state_norm: f64,
    pub state_digest: String,
    pub verified: Option<bool>,
    pub reference_digest: Option<String>,
    pub max_abs_diff: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub n: usize,
    pub ranks: usize,
    pub fuse_width: Option<usize>,
    pub inserted_swaps: usize,
    pub total_bytes: u64,
    /// `[op index, bytes]` pairs over the executed circuit.
    pub per_gate: Vec<(usize, u64)>,
}

#[derive(Debug, Serialize)]
pub struct VerifySummary {
    pub n: usize,
    pub ranks: usize,
    pub passed: bool,
    pub max_abs_diff: f64,
    pub norm: f64,
    pub digest: String,
    pub reference_digest: String,
    pub divergent_op: Option<usize>,
    pub divergent_source_op: Option<usize>,
}

impl From<&VerifyReport> for VerifySummary {
    fn from(v: &VerifyReport) -> Self {
        Self {
            n: v.n,
            ranks: v.ranks,
            passed: v.passed,
            max_abs_diff: v.max_abs_diff,
            norm: v.norm,
            digest: v.digest.clone(),
            reference_digest: v.reference_digest.clone(),
            divergent_op: v.divergence.map(|d| d.op_index),
            divergent_source_op: v.divergence.and_then(|d| d.source_index),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct QbfReport {
    pub n: usize,
    pub gates: u64,
    pub exetime: f64,
    pub total_flops: f64,
    pub qbf: f64,
    pub effective_bandwidth: f64,
}

pub fn emit<T: Serialize>(value: &T, format: ReportFormat) -> CliResult<()> {
    let out = match format {
        ReportFormat::Json => serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?,
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.serialize(value).map_err(|e| CliError::Config(e.to_string()))?;
            let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", out.trim_end()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Config(e.to_string())),
        _ => Ok(()),
    }
}
