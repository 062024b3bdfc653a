//! `dvsim`: run, predict, verify and rate circuits on a simulated cluster.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dvsim_core::circuits::{gen_hadamard_bench, gen_qsb, gen_qv, QV_DEFAULT_DEPTH};
use dvsim_core::cluster::{ExecConfig, Mode};
use dvsim_core::dist_ops::DistConfig;
use dvsim_core::metrics::{effective_bandwidth, flops_preset, predict_comm_bytes, qbf, QbfInput};
use dvsim_core::transpile::{localize, Localized, TranspileConfig};
use dvsim_core::verify::{
    corrupt_drop_first_inserted, state_digest, to_logical, verify_localized, VerifyConfig, DEFAULT_ORACLE_LIMIT,
};
use dvsim_core::{Circuit, Cluster, GlobalLayout, SimError};

use report::{emit, PredictReport, QbfReport, RunReport, VerifySummary};

const TIMED_RUNS: usize = 6;

#[derive(Parser)]
#[command(
    name = "dvsim",
    version,
    about = "Distributed state-vector simulator on in-process ranks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a circuit six times and report the mean of the last five runs.
    Run(RunArgs),
    /// Predict the communication volume of a circuit.
    Predict(PredictArgs),
    /// Compare a distributed run against a single-rank run.
    Verify(VerifyArgs),
    /// Quantum B/F ratio for a measured execution time.
    Qbf(QbfArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CircuitKind {
    Hadamard,
    Qv,
    Qsb,
    File,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Threaded,
    Sequential,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct CircuitArgs {
    #[arg(long, value_enum, default_value = "hadamard")]
    circuit: CircuitKind,
    /// Circuit JSON for `--circuit file`.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Quantum Volume depth.
    #[arg(long, default_value_t = QV_DEFAULT_DEPTH)]
    depth: usize,
}

#[derive(Args, Clone)]
struct LayoutArgs {
    /// Rank count, a power of two.
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    /// Fused-swap width: `auto` (global qubit count, capped at the local count), `off`, or a number.
    #[arg(long, default_value = "auto")]
    fuse: String,
}

#[derive(Args, Clone)]
struct ExecArgs {
    /// Chunks per global one-qubit exchange (power of two).
    #[arg(long)]
    chunks: Option<usize>,
    #[arg(long, value_enum, default_value = "threaded")]
    mode: ModeArg,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Peak FLOP/s of one rank: a number or a preset (a64fx, a100, v100).
    #[arg(long)]
    flops: Option<String>,
    /// Also compare the final state with a single-rank run.
    #[arg(long)]
    verify: bool,
    #[arg(long, value_enum, default_value = "json")]
    report: ReportFormat,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    #[command(flatten)]
    layout: LayoutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
    oracle_limit: usize,
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
    /// Drop the first inserted fused swap before running (negative control).
    #[arg(long, hide = true)]
    corrupt_transpile: bool,
}

#[derive(Args)]
struct QbfArgs {
    #[arg(long)]
    qubits: usize,
    #[arg(long)]
    gates: u64,
    /// Execution time in seconds.
    #[arg(long)]
    exetime: f64,
    /// Peak FLOP/s of one computing unit: a number or a preset.
    #[arg(long)]
    flops: String,
    /// Number of computing units sharing the run.
    #[arg(long, default_value_t = 1)]
    ranks: usize,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Protocol(String),
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Protocol(_) => CliError::Protocol(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_circuit(args: &CircuitArgs) -> CliResult<(Circuit, &'static str)> {
    let need_qubits = || {
        args.qubits
            .ok_or_else(|| CliError::Config("--qubits is required for generated circuits".into()))
    };
    if args.file.is_some() && args.circuit != CircuitKind::File {
        return Err(CliError::Config("--file needs --circuit file".into()));
    }
    Ok(match args.circuit {
        CircuitKind::Hadamard => (gen_hadamard_bench(need_qubits()?)?, "hadamard"),
        CircuitKind::Qv => (gen_qv(need_qubits()?, args.depth, args.seed)?, "qv"),
        CircuitKind::Qsb => (gen_qsb(need_qubits()?, args.seed)?, "qsb"),
        CircuitKind::File => {
            let path = args
                .file
                .as_ref()
                .ok_or_else(|| CliError::Config("--circuit file needs --file".into()))?;
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let c = Circuit::from_json(&text)?;
            if let Some(n) = args.qubits {
                if n != c.n {
                    return Err(CliError::Config(format!(
                        "--qubits {n} but the file has {} qubits",
                        c.n
                    )));
                }
            }
            (c, "file")
        }
    })
}

/// `None` disables transpiling.
fn fuse_config(fuse: &str) -> CliResult<Option<TranspileConfig>> {
    match fuse {
        "auto" => Ok(Some(TranspileConfig::default())),
        "off" => Ok(None),
        s => s
            .parse::<usize>()
            .map(|w| Some(TranspileConfig::with_width(w)))
            .map_err(|_| CliError::Config(format!("--fuse expects auto, off or a width, got {s:?}"))),
    }
}

fn parse_flops(s: &str) -> CliResult<f64> {
    let v = match flops_preset(s) {
        Some(v) => v,
        None => s
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("--flops expects a number or a64fx|a100|v100, got {s:?}")))?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config("--flops must be positive".into()))
    }
}

struct Prepared {
    source: Circuit,
    kind: &'static str,
    layout: GlobalLayout,
    localized: Localized,
    fuse_width: Option<usize>,
}

fn prepare(circuit: &CircuitArgs, layout: &LayoutArgs) -> CliResult<Prepared> {
    let (source, kind) = load_circuit(circuit)?;
    let gl = GlobalLayout::with_ranks(source.n, layout.ranks)?;
    let (localized, fuse_width) = match fuse_config(&layout.fuse)? {
        Some(cfg) => (localize(&source, &gl, &cfg)?, Some(cfg.width(&gl)?)),
        None => (
            Localized {
                circuit: source.clone(),
                origins: (0..source.ops.len())
                    .map(dvsim_core::transpile::Origin::Source)
                    .collect(),
                final_layout: gl.clone(),
                inserted_swaps: 0,
            },
            None,
        ),
    };
    Ok(Prepared {
        source,
        kind,
        layout: gl,
        localized,
        fuse_width,
    })
}

fn exec_config(args: &ExecArgs) -> ExecConfig {
    ExecConfig {
        mode: match args.mode {
            ModeArg::Threaded => Mode::Threaded,
            ModeArg::Sequential => Mode::Sequential,
        },
        dist: DistConfig {
            chunks: args.chunks,
            swap_block: None,
        },
        ..ExecConfig::default()
    }
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let prep = prepare(&args.circuit, &args.layout)?;
    let flops = args.flops.as_deref().map(parse_flops).transpose()?;
    let exec = exec_config(&args.exec);
    let predicted = predict_comm_bytes(&prep.localized.circuit, &prep.layout)?.total_bytes;

    let mut cluster = Cluster::new(&prep.layout, exec)?;
    let mut elapsed = Vec::with_capacity(TIMED_RUNS);
    let mut measured = None;
    for _ in 0..TIMED_RUNS {
        cluster.reset()?;
        let out = cluster.run(&prep.localized.circuit)?;
        elapsed.push(out.elapsed.as_secs_f64());
        match measured {
            None => measured = Some(out.stats.bytes_total),
            Some(b) if b != out.stats.bytes_total => {
                return Err(CliError::Protocol(format!(
                    "traffic changed between runs: {b} then {}",
                    out.stats.bytes_total
                )));
            }
            Some(_) => {}
        }
    }
    let measured = measured.unwrap_or(0);
    if measured != predicted {
        return Err(CliError::Protocol(format!(
            "measured {measured} bytes, predicted {predicted}"
        )));
    }
    let mean = elapsed[1..].iter().sum::<f64>() / (TIMED_RUNS - 1) as f64;
    let logical = to_logical(&cluster.state(), &prep.localized.final_layout);
    let gates = prep.source.gate_count() as u64;
    let n = prep.layout.n();
    let total_flops = flops.map(|f| f * prep.layout.ranks() as f64);

    let mut report = RunReport {
        n,
        p: prep.layout.p(),
        m: prep.layout.m(),
        ranks: prep.layout.ranks(),
        circuit: prep.kind.to_string(),
        seed: prep.source.seed,
        gate_count: gates,
        fuse_width: prep.fuse_width,
        inserted_swaps: prep.localized.inserted_swaps,
        mode: format!("{:?}", exec.mode).to_lowercase(),
        runs: TIMED_RUNS,
        elapsed_mean_s: mean,
        comm_bytes_measured: measured,
        comm_bytes_predicted: predicted,
        effective_bandwidth: effective_bandwidth(n, gates, mean).ok(),
        total_flops,
        qbf: total_flops.and_then(|f| {
            qbf(&QbfInput {
                n,
                gates,
                exetime: mean,
                total_flops: f,
            })
            .ok()
        }),
        state_norm: dvsim_core::verify::norm(&logical),
        state_digest: state_digest(&logical),
        verified: None,
        reference_digest: None,
        max_abs_diff: None,
    };

    let mut failure = None;
    if args.verify {
        let v = verify_localized(
            &prep.source,
            &prep.localized,
            &prep.layout,
            &exec,
            &VerifyConfig::default(),
        )?;
        report.verified = Some(v.passed);
        report.reference_digest = Some(v.reference_digest.clone());
        report.max_abs_diff = Some(v.max_abs_diff);
        if !v.passed {
            failure = Some(format!("max |d| = {:e}", v.max_abs_diff));
        }
    }
    emit(&report, args.report)?;
    match failure {
        Some(why) => Err(CliError::Verification(why)),
        None => Ok(()),
    }
}

fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let prep = prepare(&args.circuit, &args.layout)?;
    let pred = predict_comm_bytes(&prep.localized.circuit, &prep.layout)?;
    let report = PredictReport {
        n: prep.layout.n(),
        ranks: prep.layout.ranks(),
        fuse_width: prep.fuse_width,
        inserted_swaps: prep.localized.inserted_swaps,
        total_bytes: pred.total_bytes,
        per_gate: pred.per_gate,
    };
    emit(&report, ReportFormat::Json)
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let mut prep = prepare(&args.circuit, &args.layout)?;
    if prep.source.n > args.oracle_limit {
        return Err(CliError::Config(format!(
            "{} qubits exceeds --oracle-limit {}",
            prep.source.n, args.oracle_limit
        )));
    }
    if args.corrupt_transpile && corrupt_drop_first_inserted(&mut prep.localized).is_none() {
        return Err(CliError::Config("no inserted swap to drop".into()));
    }
    let cfg = VerifyConfig {
        tolerance: args.tolerance,
        oracle_limit: args.oracle_limit,
        locate: true,
    };
    let v = verify_localized(
        &prep.source,
        &prep.localized,
        &prep.layout,
        &exec_config(&args.exec),
        &cfg,
    )?;
    let summary = VerifySummary::from(&v);
    emit(&summary, ReportFormat::Json)?;
    if v.passed {
        Ok(())
    } else {
        Err(CliError::Verification(match v.divergence {
            Some(d) => format!("first divergence after op {}", d.op_index),
            None => format!("max |d| = {:e}", v.max_abs_diff),
        }))
    }
}

fn cmd_qbf(args: &QbfArgs) -> CliResult<()> {
    let flops = parse_flops(&args.flops)?;
    if args.ranks == 0 {
        return Err(CliError::Config("--ranks must be positive".into()));
    }
    let input = QbfInput {
        n: args.qubits,
        gates: args.gates,
        exetime: args.exetime,
        total_flops: flops * args.ranks as f64,
    };
    let report = QbfReport {
        n: input.n,
        gates: input.gates,
        exetime: input.exetime,
        total_flops: input.total_flops,
        qbf: qbf(&input)?,
        effective_bandwidth: effective_bandwidth(input.n, input.gates, input.exetime)?,
    };
    emit(&report, ReportFormat::Json)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Qbf(a) => cmd_qbf(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Config(msg) | CliError::Protocol(msg) | CliError::Verification(msg)) = &e;
            eprintln!("dvsim: {msg}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_values() {
        assert_eq!(fuse_config("auto").unwrap(), Some(TranspileConfig::default()));
        assert_eq!(fuse_config("off").unwrap(), None);
        assert_eq!(fuse_config("3").unwrap(), Some(TranspileConfig::with_width(3)));
        assert!(fuse_config("wide").is_err());
    }

    #[test]
    fn flops_values() {
        assert_eq!(parse_flops("a100").unwrap(), 19.5e12);
        assert_eq!(parse_flops("2.5e9").unwrap(), 2.5e9);
        assert!(parse_flops("-1").is_err());
        assert!(parse_flops("inf").is_err());
        assert!(parse_flops("gpu").is_err());
    }

    #[test]
    fn exit_codes() {
        let protocol = SimError::Protocol(dvsim_core::ProtocolError::Aborted("x".into()));
        assert_eq!(CliError::from(protocol).code(), 3);
        assert_eq!(CliError::from(SimError::Config("x".into())).code(), 2);
        assert_eq!(CliError::Verification("x".into()).code(), 4);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
