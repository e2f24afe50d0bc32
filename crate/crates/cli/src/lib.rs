//! Command-line front end: generate and analyze frames, compute
//! preconditioners and certificates, run recovery and experiments.
//!
//! Exit codes: 0 on success, 1 on runtime failure (including a solver that
//! stops short of optimality without `--allow-inexact`), 2 on usage errors.

pub mod io;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use framecond::conic::{SolveStatus, SolverSettings};
use framecond::experiments::{self, Decoder, PhaseConfig, Pipeline, SweepMode, TableConfig};
use framecond::frames::{self, Frame};
use framecond::precondition::{self, PreconditionResult, Verdict};
use framecond::recovery;

use report::{ReportFile, SolverReport, Versions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Matrix(#[from] io::MatrixFileError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config file: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Frame(#[from] frames::FrameError),
    #[error(transparent)]
    Precondition(#[from] precondition::PreconditionError),
    #[error(transparent)]
    Recovery(#[from] recovery::RecoveryError),
    #[error(transparent)]
    Numerics(#[from] framecond::numerics::NumericsError),
    #[error(transparent)]
    Experiment(#[from] experiments::ExperimentError),
    #[error("solver stopped with status {status}; rerun with --allow-inexact to keep the result")]
    Inexact { status: SolveStatus },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "framecond",
    version,
    about = "Coherence-minimizing frame preconditioners"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Draw a seeded Gaussian frame with unit-norm columns.
    Gen(GenArgs),
    /// Report coherence, Welch bound, frame potential and tightness.
    Analyze(AnalyzeArgs),
    /// Compute the coherence-minimizing preconditioner G.
    Precondition(PreconditionArgs),
    /// Compute the best diagonal preconditioner.
    DiagLp(PreconditionArgs),
    /// Project GΦ onto the nearest M/m-tight frame.
    Tighten(TightenArgs),
    /// Decide whether any preconditioner strictly lowers the coherence.
    Certify(CertifyArgs),
    /// Recover a sparse signal with OMP or basis pursuit.
    Recover(RecoverArgs),
    /// Sparse recovery phase diagram over (m, sparsity).
    Phase(PhaseArgs),
    /// Coherence against a condition-number bound on G.
    Sweep(SweepArgs),
    /// Mean coherence before and after preconditioning.
    Table(TableArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Primal/dual feasibility tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Duality gap tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Keep results of solves that stopped short of optimality.
    #[arg(long)]
    pub allow_inexact: bool,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            gap_tol: self.gap_tol,
            feas_tol: self.tol,
            max_iter: self.max_iter,
            ..SolverSettings::default()
        }
    }

    fn check(&self, status: SolveStatus) -> Result<()> {
        if status != SolveStatus::Optimal && !self.allow_inexact {
            return Err(CliError::Inexact { status });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long = "M")]
    pub big_m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    pub frame: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreconditionArgs {
    pub frame: PathBuf,
    /// Where to write G.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TightenArgs {
    pub frame: PathBuf,
    /// Precomputed preconditioner; solved for when absent.
    #[arg(long)]
    pub g: Option<PathBuf>,
    /// Where to write the tight frame G₁Φ.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write G₁.
    #[arg(long)]
    pub g_out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CertifyArgs {
    pub frame: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderArg {
    Omp,
    Bp,
}

impl From<DecoderArg> for Decoder {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::Omp => Decoder::Omp,
            DecoderArg::Bp => Decoder::Bp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineArg {
    Phi,
    Gphi,
    G1phi,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Phi => Pipeline::Phi,
            PipelineArg::Gphi => Pipeline::Gphi,
            PipelineArg::G1phi => Pipeline::G1phi,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecoverArgs {
    pub frame: PathBuf,
    /// Measurements as an m×1 matrix file; a k-sparse signal is planted when
    /// absent.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Sparsity of the planted signal, and the OMP atom budget.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DecoderArg::Bp)]
    pub decoder: DecoderArg,
    #[arg(long, value_enum, default_value_t = PipelineArg::Phi)]
    pub pipeline: PipelineArg,
    /// Where to write the estimate (M×1).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhaseArgs {
    /// JSON experiment config; overrides the grid options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "M", default_value_t = 32)]
    pub big_m: usize,
    /// Comma-separated m values; defaults to 2..M-1.
    #[arg(long = "m", value_delimiter = ',')]
    pub m_grid: Vec<usize>,
    #[arg(long)]
    pub s_max: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PipelineArg::Phi)]
    pub pipeline: PipelineArg,
    #[arg(long, value_enum, default_value_t = DecoderArg::Bp)]
    pub decoder: DecoderArg,
    /// CSV of success rates; the 50% curve goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Frame file; a Gaussian frame is drawn from --m/--M/--seed when absent.
    pub frame: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "M")]
    pub big_m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub t2: f64,
    /// First t1 of the grid; defaults to t2.
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub t1_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t1_step: f64,
    /// Use the absolute bounds t2·I ⪯ X ⪯ t1·I instead of bounds relative to
    /// a free scale.
    #[arg(long)]
    pub fixed_scale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TableArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated m values.
    #[arg(long = "m", value_delimiter = ',', default_values_t = [12, 18, 24])]
    pub m_list: Vec<usize>,
    #[arg(long = "M", default_value_t = 64)]
    pub big_m: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PipelineArg::Gphi)]
    pub pipeline: PipelineArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => gen(cmd, a),
        Command::Analyze(a) => analyze(cmd, a),
        Command::Precondition(a) => precondition_cmd(cmd, a, false),
        Command::DiagLp(a) => precondition_cmd(cmd, a, true),
        Command::Tighten(a) => tighten(cmd, a),
        Command::Certify(a) => certify(cmd, a),
        Command::Recover(a) => recover(cmd, a),
        Command::Phase(a) => phase(cmd, a),
        Command::Sweep(a) => sweep(cmd, a),
        Command::Table(a) => table(cmd, a),
    }
}

fn load_frame(path: &Path) -> Result<Frame> {
    Ok(Frame::new(io::read_matrix(path)?)?)
}

fn config_of(cmd: &Command) -> Value {
    serde_json::to_value(cmd).unwrap_or(Value::Null)
}

fn emit(path: Option<&PathBuf>, report: ReportFile) -> Result<()> {
    let text = report::to_json(&report)?;
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn base_report(cmd: &Command, seed: Option<u64>, frame: Option<&Frame>) -> Result<ReportFile> {
    let frame_stats = match frame {
        Some(f) => Some(frames::frame_report(f)?),
        None => None,
    };
    Ok(ReportFile {
        config: config_of(cmd),
        seed,
        frame_stats,
        result: Value::Null,
        solver: None,
        versions: Versions::default(),
    })
}

fn gen(cmd: &Command, a: &GenArgs) -> Result<()> {
    let frame = frames::random_gaussian_frame(a.m, a.big_m, a.seed)?;
    io::write_matrix(&a.out, frame.matrix())?;
    if let Some(p) = &a.report {
        let mut r = base_report(cmd, Some(a.seed), Some(&frame))?;
        r.result = json!({ "frame": a.out });
        emit(Some(p), r)?;
    }
    Ok(())
}

fn analyze(cmd: &Command, a: &AnalyzeArgs) -> Result<()> {
    let frame = load_frame(&a.frame)?;
    let stats = frames::frame_report(&frame)?;
    let mut r = base_report(cmd, None, Some(&frame))?;
    let bound = if stats.coherence > 0.0 {
        Some(frames::recovery_bound(stats.coherence)?)
    } else {
        None
    };
    r.result = json!({
        "coherence": stats.coherence,
        "welch_bound": stats.welch_bound,
        "recovery_bound": bound,
        "squared_span_dimension": precondition::squared_span_dimension(&frame),
    });
    emit(a.report.as_ref(), r)
}

fn precondition_summary(frame: &Frame, res: &PreconditionResult) -> Value {
    json!({
        "q": res.q,
        "coherence_before": res.coherence_before,
        "coherence_after": res.verified_coherence,
        "welch_bound": res.welch_bound,
        "kappa": res.kappa_g,
        "kappa_x": res.kappa_x,
        "min_eig_x": res.min_eig_x,
        "near_singular": res.near_singular,
        "jitter": res.jitter,
        "d_plus": res.active_sets.plus.len(),
        "d_minus": res.active_sets.minus.len(),
        "dual_sum": res.diag_duals.sum(),
        "kkt": res.kkt,
        "rows": frame.dim(),
        "cols": frame.len(),
    })
}

fn solver_report(res: &PreconditionResult) -> SolverReport {
    SolverReport {
        status: res.status,
        iterations: res.iterations,
        gap: res.gap,
    }
}

fn precondition_cmd(cmd: &Command, a: &PreconditionArgs, diagonal: bool) -> Result<()> {
    let frame = load_frame(&a.frame)?;
    let settings = a.solver.settings();
    let res = if diagonal {
        precondition::diagonal_lp(&frame, &settings)?
    } else {
        precondition::solve_coherence(&frame, &settings)?
    };
    a.solver.check(res.status)?;
    if let Some(out) = &a.out {
        io::write_matrix(out, &res.g)?;
    }
    let mut r = base_report(cmd, None, Some(&frame))?;
    r.result = precondition_summary(&frame, &res);
    r.solver = Some(solver_report(&res));
    emit(a.report.as_ref(), r)
}

fn tighten(cmd: &Command, a: &TightenArgs) -> Result<()> {
    let frame = load_frame(&a.frame)?;
    let (g, solver) = match &a.g {
        Some(p) => (io::read_matrix(p)?, None),
        None => {
            let res = precondition::solve_coherence(&frame, &a.solver.settings())?;
            a.solver.check(res.status)?;
            let s = solver_report(&res);
            (res.g, Some(s))
        }
    };
    let (g1, tight) = precondition::compose_tight_preconditioner(&g, &frame)?;
    io::write_matrix(&a.out, tight.matrix())?;
    if let Some(p) = &a.g_out {
        io::write_matrix(p, &g1)?;
    }
    let stats = frames::frame_report(&tight)?;
    let mut r = base_report(cmd, None, Some(&frame))?;
    r.result = json!({
        "coherence_before": frames::coherence(&frame)?.value,
        "coherence_after": stats.coherence,
        "tight_defect": stats.tight_defect,
        "kappa": framecond::numerics::condition_number(&g1)?,
    });
    r.solver = solver;
    emit(a.report.as_ref(), r)
}

fn certify(cmd: &Command, a: &CertifyArgs) -> Result<()> {
    let frame = load_frame(&a.frame)?;
    let cert = precondition::certify_identity(&frame)?;
    let message = match &cert.verdict {
        Verdict::Feasible(_) => "feasible: no strict improvement",
        Verdict::Infeasible { .. } => "infeasible: strict improvement possible",
    };
    eprintln!("{message}");
    let mut r = base_report(cmd, None, Some(&frame))?;
    r.result = json!({
        "verdict": if cert.verdict.is_feasible() { "feasible" } else { "infeasible" },
        "message": message,
        "min_violation": cert.min_violation,
        "d_plus": cert.sets.plus.len(),
        "d_minus": cert.sets.minus.len(),
        "certificate": cert.verdict,
    });
    r.solver = Some(SolverReport {
        status: cert.status,
        iterations: 0,
        gap: 0.0,
    });
    emit(a.report.as_ref(), r)
}

fn recover(cmd: &Command, a: &RecoverArgs) -> Result<()> {
    let frame = load_frame(&a.frame)?;
    let settings = a.solver.settings();
    let pre = experiments::apply_pipeline(&frame, a.pipeline.into(), &settings)?;
    a.solver.check(pre.status)?;
    let (y, truth) = match &a.y {
        Some(p) => {
            let y = io::read_matrix(p)?;
            if y.ncols() != 1 || y.nrows() != frame.dim() {
                return Err(CliError::Usage(format!(
                    "measurements must be {}x1, found {}x{}",
                    frame.dim(),
                    y.nrows(),
                    y.ncols()
                )));
            }
            (y.column(0).clone_owned(), None)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let x = recovery::plant_sparse(frame.len(), a.k, &mut rng);
            (frame.matrix() * &x, Some(x))
        }
    };
    let gy = &pre.g * &y;
    let res = match a.decoder {
        DecoderArg::Omp => recovery::omp(pre.frame.matrix(), &gy, a.k, 1e-10 * gy.norm())?,
        DecoderArg::Bp => {
            recovery::basis_pursuit(pre.frame.matrix(), &gy, &recovery::basis_pursuit_settings())?
        }
    };
    if let Some(s) = res.status {
        a.solver.check(s)?;
    }
    if let Some(out) = &a.out {
        io::write_matrix(
            out,
            &DMatrix::from_column_slice(res.estimate.len(), 1, res.estimate.as_slice()),
        )?;
    }
    let mut r = base_report(cmd, Some(a.seed), Some(&frame))?;
    r.result = json!({
        "support": res.support,
        "residual_norm": res.residual_norm,
        "iterations": res.iterations,
        "planted_support": truth.as_ref().map(recovery::support_of),
        "success": truth.as_ref().map(|x| recovery::is_success(&res.estimate, x)),
        "estimate": res.estimate.as_slice(),
    });
    r.solver = res.status.map(|status| SolverReport {
        status,
        iterations: res.iterations,
        gap: 0.0,
    });
    emit(a.report.as_ref(), r)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn phase(cmd: &Command, a: &PhaseArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => serde_json::from_str::<PhaseConfig>(&fs::read_to_string(p)?)?,
        None => {
            let m_grid = if a.m_grid.is_empty() {
                (2..a.big_m).collect()
            } else {
                a.m_grid.clone()
            };
            PhaseConfig {
                big_m: a.big_m,
                m_grid,
                s_max: a.s_max,
                trials: a.trials,
                seed: a.seed,
                pipeline: a.pipeline.into(),
                decoder: a.decoder.into(),
                settings: a.solver.settings(),
            }
        }
    };
    let diagram = experiments::phase_diagram(&config)?;
    if diagram.inexact > 0 && !a.solver.allow_inexact {
        return Err(CliError::Inexact {
            status: SolveStatus::MaxIter,
        });
    }
    fs::write(&a.out, diagram.to_csv())?;
    let curve_path = sidecar(&a.out, "_curve.csv");
    fs::write(&curve_path, diagram.curve_csv())?;
    let script_path = sidecar(&a.out, ".gp");
    let curve_name = curve_path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("curve.csv");
    let label = format!("{} / {}", config.pipeline, config.decoder);
    fs::write(
        &script_path,
        experiments::gnuplot_script("50% recovery curve", &[(curve_name, label.as_str())]),
    )?;
    let mut r = base_report(cmd, Some(config.seed), None)?;
    r.config = json!({ "command": "phase", "experiment": config });
    r.result = json!({
        "csv": a.out,
        "curve_csv": curve_path,
        "gnuplot": script_path,
        "m_grid": config.m_grid,
        "curve": diagram.curve,
        "inexact_trials": diagram.inexact,
    });
    emit(a.report.as_ref(), r)
}

fn sweep(cmd: &Command, a: &SweepArgs) -> Result<()> {
    let frame = match (&a.frame, a.m, a.big_m) {
        (Some(p), _, _) => load_frame(p)?,
        (None, Some(m), Some(big_m)) => frames::random_gaussian_frame(m, big_m, a.seed)?,
        _ => {
            return Err(CliError::Usage(
                "sweep needs a frame file or both --m and --M".into(),
            ))
        }
    };
    let start = a.t1.unwrap_or(a.t2);
    let grid = experiments::linear_grid(start, a.t1_max, a.t1_step);
    let mode = if a.fixed_scale {
        SweepMode::Fixed
    } else {
        SweepMode::Relative
    };
    let settings = a.solver.settings();
    let rec = experiments::condition_sweep(&frame, a.t2, &grid, mode, &settings)?;
    if let Some(bad) = rec.status.iter().find(|s| **s != SolveStatus::Optimal) {
        a.solver.check(*bad)?;
    }
    if let Some(out) = &a.out {
        fs::write(out, rec.to_csv())?;
    }
    let mut r = base_report(cmd, Some(a.seed), Some(&frame))?;
    r.result = serde_json::to_value(&rec)?;
    emit(a.report.as_ref(), r)
}

fn table(cmd: &Command, a: &TableArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => serde_json::from_str::<TableConfig>(&fs::read_to_string(p)?)?,
        None => TableConfig {
            m_list: a.m_list.clone(),
            big_m: a.big_m,
            trials: a.trials,
            seed: a.seed,
            variant: a.pipeline.into(),
            settings: a.solver.settings(),
        },
    };
    let t = experiments::coherence_table(&config)?;
    let inexact: usize = t.rows.iter().map(|r| r.inexact).sum();
    if inexact > 0 && !a.solver.allow_inexact {
        return Err(CliError::Inexact {
            status: SolveStatus::MaxIter,
        });
    }
    if let Some(out) = &a.out {
        fs::write(out, t.to_csv())?;
    }
    let mut r = base_report(cmd, Some(config.seed), None)?;
    r.config = json!({ "command": "table", "experiment": config });
    r.result = serde_json::to_value(&t)?;
    emit(a.report.as_ref(), r)
}
