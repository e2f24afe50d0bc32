//! Seeded experiment drivers: coherence tables, recovery phase diagrams and
//! condition-number sweeps. Every output is a pure function of its config.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::conic::{EigenBounds, SolveStatus, SolverSettings};
use crate::frames::{self, Frame};
use crate::numerics::{Matrix, Vector};
use crate::precondition::{self, PreconditionError};
use crate::recovery::{self, RecoveryError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Precondition(#[from] PreconditionError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Frame(#[from] frames::FrameError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: `seed ⊕ h(m, s, trial)` with `h` a chained splitmix64
/// hash. Frames use `s = 0`, so every sparsity level and every pipeline sees
/// the same frame for a given `(m, trial)`.
pub fn trial_seed(seed: u64, m: usize, s: usize, trial: usize) -> u64 {
    let h = splitmix64(splitmix64(splitmix64(m as u64) ^ s as u64) ^ trial as u64);
    seed ^ h
}

pub fn trial_frame(seed: u64, m: usize, big_m: usize, trial: usize) -> Result<Frame> {
    Ok(frames::random_gaussian_frame(
        m,
        big_m,
        trial_seed(seed, m, 0, trial),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// The frame as drawn.
    Phi,
    /// The coherence-minimizing preconditioner.
    Gphi,
    /// The preconditioner followed by the nearest tight frame projection.
    G1phi,
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pipeline::Phi => "phi",
            Pipeline::Gphi => "gphi",
            Pipeline::G1phi => "g1phi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    Omp,
    Bp,
}

impl std::fmt::Display for Decoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decoder::Omp => "omp",
            Decoder::Bp => "bp",
        })
    }
}

/// Preconditioner and preconditioned frame for a pipeline; the status is
/// that of the coherence program (optimal for the identity pipeline).
pub struct Preconditioned {
    pub g: Matrix,
    pub frame: Frame,
    pub status: SolveStatus,
}

pub fn apply_pipeline(
    frame: &Frame,
    pipeline: Pipeline,
    settings: &SolverSettings,
) -> Result<Preconditioned> {
    let m = frame.dim();
    if pipeline == Pipeline::Phi {
        return Ok(Preconditioned {
            g: Matrix::identity(m, m),
            frame: frame.clone(),
            status: SolveStatus::Optimal,
        });
    }
    let res = precondition::solve_coherence(frame, settings)?;
    if pipeline == Pipeline::Gphi {
        let out = res.apply(frame)?;
        return Ok(Preconditioned {
            g: res.g,
            frame: out,
            status: res.status,
        });
    }
    let (g1, out) = precondition::compose_tight_preconditioner(&res.g, frame)?;
    Ok(Preconditioned {
        g: g1,
        frame: out,
        status: res.status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub m_list: Vec<usize>,
    pub big_m: usize,
    pub trials: usize,
    pub seed: u64,
    pub variant: Pipeline,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub m: usize,
    pub mean_mu_phi: f64,
    pub mean_mu_variant: f64,
    pub welch_bound: f64,
    /// Trials whose coherence program did not reach optimality.
    pub inexact: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTable {
    pub config: TableConfig,
    pub rows: Vec<TableRow>,
    pub note: Option<String>,
}

impl CoherenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,mean_mu_phi,mean_mu_variant,welch_bound\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                r.m, r.mean_mu_phi, r.mean_mu_variant, r.welch_bound
            );
        }
        out
    }
}

/// Mean coherence before and after preconditioning over seeded Gaussian
/// frames, one row per `m`.
pub fn coherence_table(config: &TableConfig) -> Result<CoherenceTable> {
    if config.trials == 0 {
        return Err(ExperimentError::InvalidConfig(
            "trials must be positive".into(),
        ));
    }
    if config.variant == Pipeline::Phi {
        return Err(ExperimentError::InvalidConfig(
            "table variant must be gphi or g1phi".into(),
        ));
    }
    let mut rows = Vec::new();
    for &m in &config.m_list {
        if m == 0 || m > config.big_m {
            return Err(ExperimentError::InvalidConfig(format!(
                "m = {m} outside 1..={}",
                config.big_m
            )));
        }
        let per_trial: Vec<Result<(f64, f64, bool)>> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let frame = trial_frame(config.seed, m, config.big_m, t)?;
                let before = frames::coherence(&frame)?.value;
                let out = apply_pipeline(&frame, config.variant, &config.settings)?;
                let after = frames::coherence(&out.frame)?.value;
                Ok((before, after, out.status == SolveStatus::Optimal))
            })
            .collect();
        let mut sum_before = 0.0;
        let mut sum_after = 0.0;
        let mut inexact = 0;
        for r in per_trial {
            let (b, a, ok) = r?;
            sum_before += b;
            sum_after += a;
            inexact += usize::from(!ok);
        }
        let n = config.trials as f64;
        rows.push(TableRow {
            m,
            mean_mu_phi: sum_before / n,
            mean_mu_variant: sum_after / n,
            welch_bound: frames::welch_bound(m, config.big_m)?,
            inexact,
        });
    }
    let note = (config.variant == Pipeline::G1phi).then(|| {
        format!(
            "tight-projection reference values come from a table whose caption gives 49 \
             columns while the runs it reports use 64; this table uses M = {}",
            config.big_m
        )
    });
    Ok(CoherenceTable {
        config: config.clone(),
        rows,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub big_m: usize,
    pub m_grid: Vec<usize>,
    /// Largest sparsity tried at each `m`; defaults to `m`.
    pub s_max: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub pipeline: Pipeline,
    pub decoder: Decoder,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub config: PhaseConfig,
    /// Sparsity levels `1..=s_max(m)` for each `m`.
    pub sparsities: Vec<Vec<usize>>,
    pub success_rate: Vec<Vec<f64>>,
    /// Largest sparsity with success rate at least 1/2, 0 if none.
    pub curve: Vec<usize>,
    /// Trials whose coherence program did not reach optimality.
    pub inexact: usize,
}

impl PhaseDiagram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,s,success_rate\n");
        for (k, &m) in self.config.m_grid.iter().enumerate() {
            for (s, r) in self.sparsities[k].iter().zip(&self.success_rate[k]) {
                let _ = writeln!(out, "{m},{s},{r:.6}");
            }
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("m,curve\n");
        for (m, c) in self.config.m_grid.iter().zip(&self.curve) {
            let _ = writeln!(out, "{m},{c}");
        }
        out
    }
}

fn decode(
    decoder: Decoder,
    a: &Matrix,
    y: &Vector,
    s: usize,
    settings: &SolverSettings,
) -> Result<Vector> {
    Ok(match decoder {
        Decoder::Omp => recovery::omp(a, y, s, 1e-10 * y.norm())?.estimate,
        Decoder::Bp => recovery::basis_pursuit(a, y, settings)?.estimate,
    })
}

/// Success rates of sparse recovery over `(m, s)`. For each `(m, trial)` a
/// Gaussian frame is drawn and preconditioned once; each sparsity level
/// plants its own signal, measures `y = Φx` and decodes `(AΦ, Ay)` for the
/// pipeline's `A`.
pub fn phase_diagram(config: &PhaseConfig) -> Result<PhaseDiagram> {
    if config.trials == 0 {
        return Err(ExperimentError::InvalidConfig(
            "trials must be positive".into(),
        ));
    }
    let bp_settings = recovery::basis_pursuit_settings();
    let mut sparsities = Vec::new();
    let mut success_rate = Vec::new();
    let mut curve = Vec::new();
    let mut inexact = 0;
    for &m in &config.m_grid {
        if m < 1 || m > config.big_m {
            return Err(ExperimentError::InvalidConfig(format!(
                "m = {m} outside 1..={}",
                config.big_m
            )));
        }
        let s_max = config.s_max.unwrap_or(m).min(m).max(1);
        let levels: Vec<usize> = (1..=s_max).collect();
        let per_trial: Vec<Result<(Vec<bool>, bool)>> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let frame = trial_frame(config.seed, m, config.big_m, t)?;
                let pre = apply_pipeline(&frame, config.pipeline, &config.settings)?;
                let mut hits = Vec::with_capacity(levels.len());
                for &s in &levels {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, m, s, t));
                    let x = recovery::plant_sparse(config.big_m, s, &mut rng);
                    let y = &pre.g * (frame.matrix() * &x);
                    let est = decode(config.decoder, pre.frame.matrix(), &y, s, &bp_settings)?;
                    hits.push(recovery::is_success(&est, &x));
                }
                Ok((hits, pre.status == SolveStatus::Optimal))
            })
            .collect();
        let mut counts = vec![0usize; levels.len()];
        for r in per_trial {
            let (hits, ok) = r?;
            inexact += usize::from(!ok);
            for (c, h) in counts.iter_mut().zip(hits) {
                *c += usize::from(h);
            }
        }
        let rates: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / config.trials as f64)
            .collect();
        let c = levels
            .iter()
            .zip(&rates)
            .filter(|(_, &r)| r >= 0.5)
            .map(|(&s, _)| s)
            .max()
            .unwrap_or(0);
        sparsities.push(levels);
        success_rate.push(rates);
        curve.push(c);
    }
    Ok(PhaseDiagram {
        config: config.clone(),
        sparsities,
        success_rate,
        curve,
        inexact,
    })
}

/// Fraction of grid points where `curve` is at least `reference`.
pub fn dominance(curve: &[usize], reference: &[usize]) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    let hits = curve.iter().zip(reference).filter(|(a, b)| a >= b).count();
    hits as f64 / curve.len() as f64
}

/// gnuplot script drawing the 50% curves from `m,curve` CSV files.
pub fn gnuplot_script(title: &str, curves: &[(&str, &str)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(out, "set title '{title}'");
    let _ = writeln!(out, "set xlabel 'm'");
    let _ = writeln!(out, "set ylabel 'sparsity'");
    let _ = writeln!(out, "set key left top");
    let plots: Vec<String> = curves
        .iter()
        .map(|(file, label)| format!("'{file}' using 1:2 skip 1 with linespoints title '{label}'"))
        .collect();
    let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// `t₂ I ⪯ X ⪯ t₁ I`.
    Fixed,
    /// `τ t₂ I ⪯ X ⪯ τ t₁ I` with free `τ`.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub mode: SweepMode,
    pub t2: f64,
    pub t1_grid: Vec<f64>,
    pub q: Vec<f64>,
    pub kappa: Vec<f64>,
    pub status: Vec<SolveStatus>,
    pub coherence: f64,
    /// Optimum without eigenvalue bounds.
    pub unconstrained_q: f64,
}

impl SweepRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t1,q,kappa\n");
        for ((t, q), k) in self.t1_grid.iter().zip(&self.q).zip(&self.kappa) {
            let _ = writeln!(out, "{t},{q:.9},{k:.6}");
        }
        out
    }
}

/// Solves the bounded coherence program for every `t₁` in an ascending grid.
pub fn condition_sweep(
    frame: &Frame,
    t2: f64,
    t1_grid: &[f64],
    mode: SweepMode,
    settings: &SolverSettings,
) -> Result<SweepRecord> {
    if t1_grid.is_empty() {
        return Err(ExperimentError::InvalidConfig("empty t1 grid".into()));
    }
    if t1_grid.windows(2).any(|w| w[1] < w[0]) || t1_grid.iter().any(|&t| !(t >= t2)) {
        return Err(ExperimentError::InvalidConfig(
            "t1 grid must be ascending with every t1 >= t2".into(),
        ));
    }
    let coherence = frames::coherence(frame)?.value;
    let unconstrained_q = precondition::solve_coherence(frame, settings)?.q;
    let results: Vec<Result<(f64, f64, SolveStatus)>> = t1_grid
        .par_iter()
        .map(|&t1| {
            let bounds = match mode {
                SweepMode::Fixed => EigenBounds::Fixed { t1, t2 },
                SweepMode::Relative => EigenBounds::Relative { t1, t2 },
            };
            let r = precondition::solve_bounded(frame, bounds, settings)?;
            Ok((r.q, r.kappa_g, r.status))
        })
        .collect();
    let mut q = Vec::new();
    let mut kappa = Vec::new();
    let mut status = Vec::new();
    for r in results {
        let (a, b, c) = r?;
        q.push(a);
        kappa.push(b);
        status.push(c);
    }
    Ok(SweepRecord {
        mode,
        t2,
        t1_grid: t1_grid.to_vec(),
        q,
        kappa,
        status,
        coherence,
        unconstrained_q,
    })
}

/// `start, start + step, …` up to and including `stop` (within rounding).
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(step > 0.0) || !(stop >= start) {
        return vec![start];
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    for k in 0..=n {
        out.push(start + k as f64 * step);
    }
    out
}
