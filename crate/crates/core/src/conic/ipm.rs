//! Infeasible-start primal-dual path following with the HKM search direction
//! and Mehrotra's predictor-corrector.
//!
//! For a slack/multiplier pair `(S, Z)` the linearized complementarity
//! condition `Z S = σμ I` gives
//!
//! ```text
//! ΔZ = σμ S⁻¹ − Z − sym(Z ΔS S⁻¹) − sym(ΔZₐ ΔSₐ S⁻¹)
//! ```
//!
//! where the last term is the Mehrotra second-order correction. Eliminating
//! `Δs` and `Δz` leaves the reduced system
//!
//! ```text
//! [ Gᵀ H G   Aᵀ ] [Δx]   [ −r_d − Gᵀ(R_c + H r_g) ]
//! [ A        0  ] [Δy] = [ −r_p                   ]
//! ```
//!
//! with `H = sym(Z · S⁻¹)` per cone, whose size depends only on the number of
//! variables and equality rows. This keeps the slack-heavy coherence
//! programs cheap: thousands of inequality rows only enter through `Gᵀ H G`.

use nalgebra::LU;

use super::cone::{self, smat, svec, sym_kron};
use super::program::{
    independent_rows, ConeProgram, IterationLog, ProgramSolution, SolveStatus, SolverSettings,
};
use super::ConicError;
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone)]
struct Iterate {
    x: Vector,
    y: Vector,
    s_lin: Vector,
    z_lin: Vector,
    s_psd: Vec<Matrix>,
    z_psd: Vec<Matrix>,
}

#[derive(Debug, Clone)]
struct Step {
    dx: Vector,
    dy: Vector,
    ds_lin: Vector,
    dz_lin: Vector,
    ds_psd: Vec<Matrix>,
    dz_psd: Vec<Matrix>,
}

struct Residuals {
    r_d: Vector,
    r_p: Vector,
    r_g_lin: Vector,
    r_g_psd: Vec<Vector>,
    pobj: f64,
    dobj: f64,
    gap: f64,
    pres: f64,
    dres: f64,
    /// Largest `‖S Z‖_F` over the semidefinite blocks.
    comp: f64,
}

/// Per-iteration scaling: `d = z/s` on the orthant, `S⁻¹` and the packed
/// operator `H` on each semidefinite block, plus Cholesky factors for the
/// step-length computation.
struct Scaling {
    d: Vector,
    s_inv: Vec<Matrix>,
    h: Vec<Matrix>,
    s_chol: Vec<Matrix>,
    z_chol: Vec<Matrix>,
}

struct Kkt {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    exact: Matrix,
}

struct Workspace<'a> {
    prog: &'a ConeProgram,
    a: Matrix,
    b: Vector,
    g_lin_t: Matrix,
    psd_t: Vec<Matrix>,
    degree: f64,
    norm_b: f64,
    norm_c: f64,
    norm_h: f64,
}

impl<'a> Workspace<'a> {
    fn new(prog: &'a ConeProgram, kept: &[usize]) -> Self {
        let n = prog.num_vars();
        let a = Matrix::from_fn(kept.len(), n, |r, c| prog.a[(kept[r], c)]);
        let b = Vector::from_iterator(kept.len(), kept.iter().map(|&i| prog.b[i]));
        let norm_h = (prog.h_lin.norm_squared()
            + prog.psd.iter().map(|c| c.h.norm_squared()).sum::<f64>())
        .sqrt();
        Self {
            prog,
            norm_b: b.norm(),
            a,
            b,
            g_lin_t: prog.g_lin.transpose(),
            psd_t: prog.psd.iter().map(|c| c.g.transpose()).collect(),
            degree: prog.degree() as f64,
            norm_c: prog.c.norm(),
            norm_h,
        }
    }

    fn g_mul(&self, x: &Vector) -> (Vector, Vec<Vector>) {
        let lin = &self.prog.g_lin * x;
        let psd = self.prog.psd.iter().map(|c| &c.g * x).collect();
        (lin, psd)
    }

    fn gt_mul(&self, lin: &Vector, psd: &[Vector]) -> Vector {
        let mut out = &self.g_lin_t * lin;
        for (gt, v) in self.psd_t.iter().zip(psd) {
            out += gt * v;
        }
        out
    }

    fn gap(s_lin: &Vector, z_lin: &Vector, s_psd: &[Matrix], z_psd: &[Matrix]) -> f64 {
        s_lin.dot(z_lin)
            + s_psd
                .iter()
                .zip(z_psd)
                .map(|(s, z)| s.component_mul(z).sum())
                .sum::<f64>()
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let prog = self.prog;
        let z_psd_vec: Vec<Vector> = it.z_psd.iter().map(svec).collect();
        let r_d = &prog.c + self.a.transpose() * &it.y + self.gt_mul(&it.z_lin, &z_psd_vec);
        let r_p = &self.a * &it.x - &self.b;
        let (gx_lin, gx_psd) = self.g_mul(&it.x);
        let r_g_lin = gx_lin + &it.s_lin - &prog.h_lin;
        let r_g_psd: Vec<Vector> = gx_psd
            .into_iter()
            .zip(&it.s_psd)
            .zip(&prog.psd)
            .map(|((gx, s), blk)| gx + svec(s) - &blk.h)
            .collect();
        let pobj = prog.c.dot(&it.x);
        let dobj = -self.b.dot(&it.y)
            - prog.h_lin.dot(&it.z_lin)
            - prog
                .psd
                .iter()
                .zip(&z_psd_vec)
                .map(|(blk, z)| blk.h.dot(z))
                .sum::<f64>();
        let gap = Self::gap(&it.s_lin, &it.z_lin, &it.s_psd, &it.z_psd);
        let rg_norm =
            (r_g_lin.norm_squared() + r_g_psd.iter().map(|v| v.norm_squared()).sum::<f64>()).sqrt();
        let pres = (r_p.norm() / (1.0 + self.norm_b)).max(rg_norm / (1.0 + self.norm_h));
        let dres = r_d.norm() / (1.0 + self.norm_c);
        let comp = it
            .s_psd
            .iter()
            .zip(&it.z_psd)
            .map(|(s, z)| (s * z).norm())
            .fold(0.0, f64::max);
        Residuals {
            r_d,
            r_p,
            r_g_lin,
            r_g_psd,
            pobj,
            dobj,
            gap,
            pres,
            dres,
            comp,
        }
    }

    fn scaling(&self, it: &Iterate) -> Option<Scaling> {
        let d = it.z_lin.component_div(&it.s_lin);
        let mut s_inv = Vec::new();
        let mut h = Vec::new();
        let mut s_chol = Vec::new();
        let mut z_chol = Vec::new();
        for (s, z) in it.s_psd.iter().zip(&it.z_psd) {
            let ls = s.clone().cholesky()?;
            let lz = z.clone().cholesky()?;
            let inv = ls.inverse();
            let inv = (&inv + inv.transpose()) * 0.5;
            h.push(sym_kron(z, &inv));
            s_inv.push(inv);
            s_chol.push(ls.l());
            z_chol.push(lz.l());
        }
        Some(Scaling {
            d,
            s_inv,
            h,
            s_chol,
            z_chol,
        })
    }

    fn factor(&self, sc: &Scaling) -> Option<Kkt> {
        let n = self.prog.num_vars();
        let p = self.a.nrows();
        let mut scaled = self.g_lin_t.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= sc.d[j];
        }
        let mut hess = &scaled * &self.prog.g_lin;
        for (blk, (gt, hk)) in self.prog.psd.iter().zip(self.psd_t.iter().zip(&sc.h)) {
            let hg = hk * &blk.g;
            hess += gt * hg;
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let max_diag = hess.diagonal().amax();
        let reg = 10.0 * f64::EPSILON * (1.0 + max_diag);

        let mut exact = Matrix::zeros(n + p, n + p);
        exact.view_mut((0, 0), (n, n)).copy_from(&hess);
        exact.view_mut((n, 0), (p, n)).copy_from(&self.a);
        exact
            .view_mut((0, n), (n, p))
            .copy_from(&self.a.transpose());
        let mut reg_kkt = exact.clone();
        for i in 0..n {
            reg_kkt[(i, i)] += reg;
        }
        for i in n..n + p {
            reg_kkt[(i, i)] -= reg;
        }
        if !reg_kkt.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Kkt {
            lu: reg_kkt.lu(),
            exact,
        })
    }

    fn solve_kkt(&self, kkt: &Kkt, rhs: &Vector) -> Option<Vector> {
        let mut sol = kkt.lu.solve(rhs)?;
        for _ in 0..3 {
            let r = rhs - &kkt.exact * &sol;
            if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                break;
            }
            sol += kkt.lu.solve(&r)?;
        }
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    /// Newton direction for the complementarity targets `rc_lin`, `rc_psd`.
    fn direction(
        &self,
        sc: &Scaling,
        kkt: &Kkt,
        res: &Residuals,
        rc_lin: &Vector,
        rc_psd: &[Matrix],
    ) -> Option<Step> {
        let n = self.prog.num_vars();
        let p = self.a.nrows();
        let t_lin = rc_lin + sc.d.component_mul(&res.r_g_lin);
        let t_psd: Vec<Vector> = rc_psd
            .iter()
            .zip(&sc.h)
            .zip(&res.r_g_psd)
            .map(|((rc, h), rg)| svec(rc) + h * rg)
            .collect();
        let rhs_x = -&res.r_d - self.gt_mul(&t_lin, &t_psd);
        let mut rhs = Vector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&rhs_x);
        rhs.rows_mut(n, p).copy_from(&(-&res.r_p));
        let sol = self.solve_kkt(kkt, &rhs)?;
        let dx = sol.rows(0, n).clone_owned();
        let dy = sol.rows(n, p).clone_owned();
        let (gdx_lin, gdx_psd) = self.g_mul(&dx);
        let ds_lin = -&res.r_g_lin - gdx_lin;
        let dz_lin = rc_lin - sc.d.component_mul(&ds_lin);
        let mut ds_psd = Vec::new();
        let mut dz_psd = Vec::new();
        for (k, blk) in self.prog.psd.iter().enumerate() {
            let ds = -&res.r_g_psd[k] - &gdx_psd[k];
            let dz = svec(&rc_psd[k]) - &sc.h[k] * &ds;
            ds_psd.push(smat(ds.as_slice(), blk.order));
            dz_psd.push(smat(dz.as_slice(), blk.order));
        }
        Some(Step {
            dx,
            dy,
            ds_lin,
            dz_lin,
            ds_psd,
            dz_psd,
        })
    }

    fn max_step(&self, it: &Iterate, sc: &Scaling, st: &Step) -> f64 {
        let mut alpha = cone::max_step_orthant(&it.s_lin, &st.ds_lin, f64::INFINITY);
        alpha = cone::max_step_orthant(&it.z_lin, &st.dz_lin, alpha);
        for k in 0..it.s_psd.len() {
            alpha = cone::max_step_psd(&sc.s_chol[k], &st.ds_psd[k], alpha);
            alpha = cone::max_step_psd(&sc.z_chol[k], &st.dz_psd[k], alpha);
        }
        alpha
    }
}

fn advance(it: &Iterate, st: &Step, alpha: f64) -> Iterate {
    let sym = |m: Matrix| (&m + m.transpose()) * 0.5;
    Iterate {
        x: &it.x + &st.dx * alpha,
        y: &it.y + &st.dy * alpha,
        s_lin: &it.s_lin + &st.ds_lin * alpha,
        z_lin: &it.z_lin + &st.dz_lin * alpha,
        s_psd: it
            .s_psd
            .iter()
            .zip(&st.ds_psd)
            .map(|(s, d)| sym(s + d * alpha))
            .collect(),
        z_psd: it
            .z_psd
            .iter()
            .zip(&st.dz_psd)
            .map(|(z, d)| sym(z + d * alpha))
            .collect(),
    }
}

fn interior(it: &Iterate) -> bool {
    it.s_lin.iter().chain(it.z_lin.iter()).all(|&v| v > 0.0)
        && it
            .s_psd
            .iter()
            .chain(&it.z_psd)
            .all(|m| m.clone().cholesky().is_some())
}

fn min_slack(it: &Iterate) -> f64 {
    let lin = it.s_lin.iter().cloned().fold(f64::INFINITY, f64::min);
    it.s_psd.iter().map(cone::min_eig).fold(lin, f64::min)
}

/// Shifts `v` along the cone identity until it is strictly interior.
fn shift_lin(v: &mut Vector) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lo > 1e-8) {
        let shift = if lo.is_finite() { 1.0 - lo } else { 1.0 };
        v.add_scalar_mut(shift);
    }
}

fn shift_psd(m: &mut Matrix) {
    let lo = cone::min_eig(m);
    if !(lo > 1e-8) {
        let shift = if lo.is_finite() {
            1.0 - lo.min(0.0)
        } else {
            1.0
        };
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
    }
}

fn initial_point(prog: &ConeProgram, kept: &[usize]) -> Iterate {
    let n = prog.num_vars();
    let x = prog.start.x.clone().unwrap_or_else(|| Vector::zeros(n));
    let y_full = prog
        .start
        .y
        .clone()
        .unwrap_or_else(|| Vector::zeros(prog.a.nrows()));
    let y = Vector::from_iterator(kept.len(), kept.iter().map(|&i| y_full[i]));
    let mut s_lin = &prog.h_lin - &prog.g_lin * &x;
    shift_lin(&mut s_lin);
    let mut z_lin = match &prog.start.z_lin {
        Some(z) if z.len() == s_lin.len() => z.clone(),
        _ => Vector::from_element(s_lin.len(), 1.0),
    };
    shift_lin(&mut z_lin);
    let mut s_psd = Vec::new();
    let mut z_psd = Vec::new();
    for (k, blk) in prog.psd.iter().enumerate() {
        let mut s = smat((&blk.h - &blk.g * &x).as_slice(), blk.order);
        shift_psd(&mut s);
        let mut z = prog
            .start
            .z_psd
            .as_ref()
            .and_then(|zs| zs.get(k).cloned())
            .filter(|z| z.nrows() == blk.order)
            .unwrap_or_else(|| Matrix::identity(blk.order, blk.order));
        shift_psd(&mut z);
        s_psd.push(s);
        z_psd.push(z);
    }
    Iterate {
        x,
        y,
        s_lin,
        z_lin,
        s_psd,
        z_psd,
    }
}

fn merit(res: &Residuals) -> f64 {
    res.pres
        .max(res.dres)
        .max(res.gap / (1.0 + res.pobj.abs()))
        .max(res.comp / (1.0 + res.pobj.abs()))
        .max((res.pobj - res.dobj).abs())
}

/// Solves a [`ConeProgram`]. Invalid input is an error; failure to converge is
/// reported through [`ProgramSolution::status`] with the best iterate seen.
pub fn solve_program(
    prog: &ConeProgram,
    settings: &SolverSettings,
) -> Result<ProgramSolution, ConicError> {
    prog.validate()?;
    let kept = independent_rows(&prog.a, &prog.b)?;
    let dropped: Vec<usize> = (0..prog.a.nrows()).filter(|i| !kept.contains(i)).collect();
    let ws = Workspace::new(prog, &kept);

    let mut it = initial_point(prog, &kept);
    let mut history = Vec::new();
    let mut best: Option<(f64, Iterate, usize)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;

    for iter in 0..=settings.max_iter {
        let res = ws.residuals(&it);
        let score = merit(&res);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, it.clone(), iter));
        }
        let converged = res.pres <= settings.feas_tol
            && res.dres <= settings.feas_tol
            && res.gap <= settings.gap_tol * (1.0 + res.pobj.abs())
            && res.comp <= settings.gap_tol * (1.0 + res.pobj.abs())
            && (res.pobj - res.dobj).abs() <= settings.gap_tol;
        let mut log_entry = IterationLog {
            iteration: iter,
            primal_objective: res.pobj,
            dual_objective: res.dobj,
            gap: res.gap,
            primal_infeasibility: res.pres,
            dual_infeasibility: res.dres,
            min_slack: min_slack(&it),
            step: 0.0,
            sigma: 0.0,
        };
        iterations = iter;
        if converged {
            history.push(log_entry);
            status = SolveStatus::Optimal;
            best = Some((score, it.clone(), iter));
            break;
        }
        if iter == settings.max_iter {
            history.push(log_entry);
            break;
        }

        let Some(sc) = ws.scaling(&it) else {
            history.push(log_entry);
            status = SolveStatus::NumericalFailure;
            break;
        };
        let Some(kkt) = ws.factor(&sc) else {
            history.push(log_entry);
            status = SolveStatus::NumericalFailure;
            break;
        };
        let mu = res.gap / ws.degree;

        // Predictor: pure Newton step towards complementarity zero.
        let rc_lin = -&it.z_lin;
        let rc_psd: Vec<Matrix> = it.z_psd.iter().map(|z| -z).collect();
        let Some(aff) = ws.direction(&sc, &kkt, &res, &rc_lin, &rc_psd) else {
            history.push(log_entry);
            status = SolveStatus::NumericalFailure;
            break;
        };
        let alpha_aff = ws.max_step(&it, &sc, &aff).min(1.0);
        let trial = advance(&it, &aff, alpha_aff);
        let mu_aff =
            Workspace::gap(&trial.s_lin, &trial.z_lin, &trial.s_psd, &trial.z_psd) / ws.degree;
        let sigma = if mu > 0.0 {
            (mu_aff.max(0.0) / mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };

        // Corrector: centering plus the second-order term.
        let smu = sigma * mu;
        let rc_lin = Vector::from_fn(it.s_lin.len(), |i, _| {
            (smu - aff.dz_lin[i] * aff.ds_lin[i]) / it.s_lin[i] - it.z_lin[i]
        });
        let rc_psd: Vec<Matrix> = (0..it.s_psd.len())
            .map(|k| {
                let w = &sc.s_inv[k];
                let corr = &aff.dz_psd[k] * &aff.ds_psd[k] * w;
                let corr = (&corr + corr.transpose()) * 0.5;
                w * smu - &it.z_psd[k] - corr
            })
            .collect();
        let Some(step) = ws.direction(&sc, &kkt, &res, &rc_lin, &rc_psd) else {
            history.push(log_entry);
            status = SolveStatus::NumericalFailure;
            break;
        };
        let mut alpha = (settings.step_fraction * ws.max_step(&it, &sc, &step)).min(1.0);

        // Keep the iterate interior and the complementarity non-increasing.
        let mut next = advance(&it, &step, alpha);
        let mut tries = 0;
        loop {
            let g = Workspace::gap(&next.s_lin, &next.z_lin, &next.s_psd, &next.z_psd);
            if interior(&next) && g <= res.gap + 1e-12 {
                break;
            }
            tries += 1;
            if tries > 60 {
                alpha = 0.0;
                break;
            }
            alpha *= 0.7;
            next = advance(&it, &step, alpha);
        }
        log_entry.step = alpha;
        log_entry.sigma = sigma;
        history.push(log_entry);
        if alpha < 1e-12 {
            status = SolveStatus::NumericalFailure;
            iterations = iter + 1;
            break;
        }
        it = next;
    }

    let (_, it, _) = best.expect("at least one iterate was scored");
    let res = ws.residuals(&it);
    let mut y = Vector::zeros(prog.a.nrows());
    for (k, &i) in kept.iter().enumerate() {
        y[i] = it.y[k];
    }
    Ok(ProgramSolution {
        x: it.x,
        y,
        s_lin: it.s_lin,
        z_lin: it.z_lin,
        s_psd: it.s_psd,
        z_psd: it.z_psd,
        status,
        iterations,
        primal_objective: res.pobj,
        dual_objective: res.dobj,
        gap: res.gap,
        primal_infeasibility: res.pres,
        dual_infeasibility: res.dres,
        dropped_rows: dropped,
        history,
    })
}
