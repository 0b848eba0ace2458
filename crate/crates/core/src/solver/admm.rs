use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::matrix::{inf_norm, CsrMatrix};
use super::polish::{polish, Active};
use super::program::CanonicalProgram;
use super::{Residuals, SolveResult, SolveStatus, SolverSettings, WarmStart};
use crate::error::{Error, Result};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const RHO_ADAPT_RATIO: f64 = 5.0;
const EQ_TOL: f64 = 1e-4;
const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const DIV_TOL: f64 = 1e-10;
const CHECK_EVERY: usize = 5;
const ADAPT_EVERY: usize = 200;
const POLISH_EVERY: usize = 50;
const EARLY_POLISH_SLACK: f64 = 1e4;
/// Active-set corrections per polish attempt. Early attempts are cheap
/// guesses; the last one, after the iteration has stopped, may work harder.
const EARLY_POLISH_ROUNDS: usize = 2;
const FINAL_POLISH_ROUNDS: usize = 16;
const FALLBACK_TIGHTENING: f64 = 1e-2;

/// Ruiz-equilibrated copy of a program: `Q_s = c D Q D`, `q_s = c D q`,
/// `A_s = E A D`, `l_s = E l`, `u_s = E u`.
struct Scaled {
    p: CsrMatrix,
    q: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

impl Scaled {
    fn new(program: &CanonicalProgram, iters: usize) -> Self {
        let n = program.num_vars();
        let m = program.num_rows();
        let mut p = program.quad.clone();
        let mut a = program.constraints.clone();
        let mut q = program.lin.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];

        for _ in 0..iters {
            let p_cols = p.col_inf_norms();
            let a_cols = a.col_inf_norms();
            let dt: Vec<f64> = p_cols
                .iter()
                .zip(&a_cols)
                .map(|(pc, ac)| 1.0 / limit_scaling(pc.max(*ac)).sqrt())
                .collect();
            let et: Vec<f64> = a
                .row_inf_norms()
                .iter()
                .map(|r| 1.0 / limit_scaling(*r).sqrt())
                .collect();
            p.scale(&dt, &dt);
            a.scale(&et, &dt);
            q.iter_mut().zip(&dt).for_each(|(v, s)| *v *= s);
            d.iter_mut().zip(&dt).for_each(|(v, s)| *v *= s);
            e.iter_mut().zip(&et).for_each(|(v, s)| *v *= s);
        }

        let p_cols = p.col_inf_norms();
        let mean_p = if n == 0 {
            0.0
        } else {
            p_cols.iter().sum::<f64>() / n as f64
        };
        let c = 1.0 / limit_scaling(mean_p.max(inf_norm(&q)));
        p.scale_all(c);
        q.iter_mut().for_each(|v| *v *= c);

        let l = program.lower.iter().zip(&e).map(|(b, s)| b * s).collect();
        let u = program.upper.iter().zip(&e).map(|(b, s)| b * s).collect();
        Self {
            p,
            q,
            a,
            l,
            u,
            d,
            e,
            c,
        }
    }

    fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(v, s)| v * s).collect()
    }

    fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(v, s)| v * s / self.c).collect()
    }
}

/// Residuals and tolerances of an unscaled triple `(x, z, y)`.
pub(super) fn unscaled_residuals(
    program: &CanonicalProgram,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    settings: &SolverSettings,
) -> Residuals {
    let n = program.num_vars();
    let mut ax = vec![0.0; program.num_rows()];
    program.constraints.mul_vec(x, &mut ax);
    let primal = ax
        .iter()
        .zip(z)
        .fold(0.0f64, |m, (a, z)| m.max((a - z).abs()));
    let mut px = vec![0.0; n];
    program.quad.mul_vec(x, &mut px);
    let mut aty = vec![0.0; n];
    program.constraints.tmul_vec(y, &mut aty);
    let dual = (0..n).fold(0.0f64, |m, j| {
        m.max((px[j] + program.lin[j] + aty[j]).abs())
    });
    Residuals {
        primal,
        dual,
        eps_primal: settings.eps_abs + settings.eps_rel * inf_norm(&ax).max(inf_norm(z)),
        eps_dual: settings.eps_abs
            + settings.eps_rel
                * inf_norm(&px)
                    .max(inf_norm(&aty))
                    .max(inf_norm(&program.lin)),
    }
}

fn check_psd(q: &CsrMatrix) -> Result<()> {
    if !q.has_nonzero() {
        return Ok(());
    }
    if q.is_diagonal() {
        return match (0..q.nrows()).find(|&i| q.get(i, i) < 0.0) {
            Some(i) => Err(Error::argument(format!(
                "Q has negative diagonal entry at {i}"
            ))),
            None => Ok(()),
        };
    }
    let n = q.nrows();
    let reg = 1e-9 * inf_norm(q.values()).max(1.0);
    let mut dense = DMatrix::<f64>::identity(n, n) * reg;
    for (i, j, v) in q.triplets() {
        dense[(i, j)] += v;
    }
    match dense.cholesky() {
        Some(_) => Ok(()),
        None => Err(Error::argument("Q is not positive semidefinite")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowClass {
    Free,
    Equality,
    Inequality,
}

fn row_classes(program: &CanonicalProgram) -> Vec<RowClass> {
    program
        .lower
        .iter()
        .zip(&program.upper)
        .map(|(l, u)| {
            if *l == f64::NEG_INFINITY && *u == f64::INFINITY {
                RowClass::Free
            } else if u - l < EQ_TOL {
                RowClass::Equality
            } else {
                RowClass::Inequality
            }
        })
        .collect()
}

fn rho_of(class: RowClass, rho: f64) -> f64 {
    match class {
        RowClass::Free => RHO_MIN,
        RowClass::Equality => RHO_EQ_SCALE * rho,
        RowClass::Inequality => rho,
    }
}

/// `Q_s + sigma I + A_s' diag(rho) A_s`, assembled from per-class Gram
/// matrices so that a change of `rho` costs one dense sum and one
/// factorisation.
struct KktFactory {
    base: DMatrix<f64>,
    free: DMatrix<f64>,
    equality: DMatrix<f64>,
    inequality: DMatrix<f64>,
}

impl KktFactory {
    fn new(s: &Scaled, classes: &[RowClass], sigma: f64) -> Self {
        let n = s.q.len();
        let mut base = DMatrix::<f64>::zeros(n, n);
        for (i, j, v) in s.p.triplets() {
            base[(i, j)] += v;
        }
        for j in 0..n {
            base[(j, j)] += sigma;
        }
        let mut grams = [
            DMatrix::<f64>::zeros(n, n),
            DMatrix::<f64>::zeros(n, n),
            DMatrix::<f64>::zeros(n, n),
        ];
        for (r, class) in classes.iter().enumerate() {
            let g = &mut grams[*class as usize];
            let (cols, vals) = s.a.row(r);
            for (&j1, &v1) in cols.iter().zip(vals) {
                for (&j2, &v2) in cols.iter().zip(vals) {
                    g[(j1, j2)] += v1 * v2;
                }
            }
        }
        let [free, equality, inequality] = grams;
        Self {
            base,
            free,
            equality,
            inequality,
        }
    }

    fn factor(&self, rho: f64) -> Result<Cholesky<f64, Dyn>> {
        let mut k = self.base.clone();
        let (wf, we, wi) = (RHO_MIN, RHO_EQ_SCALE * rho, rho);
        for (((kv, f), e), i) in k
            .as_mut_slice()
            .iter_mut()
            .zip(self.free.as_slice())
            .zip(self.equality.as_slice())
            .zip(self.inequality.as_slice())
        {
            *kv += wf * f + we * e + wi * i;
        }
        k.cholesky()
            .ok_or_else(|| Error::Internal("KKT factorisation failed".into()))
    }
}

/// Residual quantities of the scaled iterate, both in scaled units (for rho
/// adaptation) and unscaled units (for termination).
struct Check {
    unscaled: Residuals,
    prim_scaled: f64,
    prim_norm_scaled: f64,
    dual_scaled: f64,
    dual_norm_scaled: f64,
}

fn check(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], settings: &SolverSettings) -> Check {
    let n = x.len();
    let m = z.len();
    let mut ax = vec![0.0; m];
    s.a.mul_vec(x, &mut ax);
    let mut px = vec![0.0; n];
    s.p.mul_vec(x, &mut px);
    let mut aty = vec![0.0; n];
    s.a.tmul_vec(y, &mut aty);

    let mut prim = 0.0f64;
    let mut prim_s = 0.0f64;
    let mut ax_n = 0.0f64;
    let mut z_n = 0.0f64;
    let mut ax_ns = 0.0f64;
    let mut z_ns = 0.0f64;
    for i in 0..m {
        let inv = 1.0 / s.e[i];
        let r = ax[i] - z[i];
        prim = prim.max((r * inv).abs());
        prim_s = prim_s.max(r.abs());
        ax_n = ax_n.max((ax[i] * inv).abs());
        z_n = z_n.max((z[i] * inv).abs());
        ax_ns = ax_ns.max(ax[i].abs());
        z_ns = z_ns.max(z[i].abs());
    }

    let cinv = 1.0 / s.c;
    let mut dual = 0.0f64;
    let mut dual_s = 0.0f64;
    let (mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64);
    let (mut px_ns, mut aty_ns, mut q_ns) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..n {
        let inv = cinv / s.d[j];
        let r = px[j] + s.q[j] + aty[j];
        dual = dual.max((r * inv).abs());
        dual_s = dual_s.max(r.abs());
        px_n = px_n.max((px[j] * inv).abs());
        aty_n = aty_n.max((aty[j] * inv).abs());
        q_n = q_n.max((s.q[j] * inv).abs());
        px_ns = px_ns.max(px[j].abs());
        aty_ns = aty_ns.max(aty[j].abs());
        q_ns = q_ns.max(s.q[j].abs());
    }

    Check {
        unscaled: Residuals {
            primal: prim,
            dual,
            eps_primal: settings.eps_abs + settings.eps_rel * ax_n.max(z_n),
            eps_dual: settings.eps_abs + settings.eps_rel * px_n.max(aty_n).max(q_n),
        },
        prim_scaled: prim_s,
        prim_norm_scaled: ax_ns.max(z_ns),
        dual_scaled: dual_s,
        dual_norm_scaled: px_ns.max(aty_ns).max(q_ns),
    }
}

/// Primal infeasibility certificate on the last dual step `dy` (scaled).
fn certifies_infeasibility(s: &Scaled, program: &CanonicalProgram, dy: &[f64], eps: f64) -> bool {
    let m = dy.len();
    // project onto the directions allowed by finite bounds, then unscale
    let dy_u: Vec<f64> = (0..m)
        .map(|i| {
            let mut v = dy[i] * s.e[i];
            if program.upper[i] == f64::INFINITY {
                v = v.min(0.0);
            }
            if program.lower[i] == f64::NEG_INFINITY {
                v = v.max(0.0);
            }
            v
        })
        .collect();
    let norm = inf_norm(&dy_u);
    if norm <= DIV_TOL {
        return false;
    }
    let support: f64 = (0..m)
        .map(|i| {
            if dy_u[i] > 0.0 {
                program.upper[i] * dy_u[i]
            } else if dy_u[i] < 0.0 {
                program.lower[i] * dy_u[i]
            } else {
                0.0
            }
        })
        .sum();
    if support >= -eps * norm {
        return false;
    }
    // A' dy_u = D^-1 A_s' E^-1 dy_u = D^-1 A_s' dy_proj
    let dy_proj: Vec<f64> = dy_u.iter().zip(&s.e).map(|(v, e)| v / e).collect();
    let mut aty = vec![0.0; program.num_vars()];
    s.a.tmul_vec(&dy_proj, &mut aty);
    let at_norm = aty
        .iter()
        .zip(&s.d)
        .fold(0.0f64, |m, (v, d)| m.max((v / d).abs()));
    at_norm <= eps * norm
}

fn active_set(s: &Scaled, z: &[f64], y: &[f64]) -> Vec<Active> {
    (0..z.len())
        .map(|i| {
            if z[i] - s.l[i] < -y[i] {
                Active::Lower
            } else if s.u[i] - z[i] < y[i] {
                Active::Upper
            } else {
                Active::Inactive
            }
        })
        .collect()
}

/// Solves `min 1/2 x'Qx + q'x  s.t.  l <= Ax <= u`.
///
/// Deterministic: the same program and settings always produce the same
/// bits.
pub fn solve(program: &CanonicalProgram, settings: &SolverSettings) -> Result<SolveResult> {
    solve_warm(program, settings, None)
}

/// [`solve`] starting from a guessed primal-dual pair instead of zero. The
/// guess only changes how fast the iteration gets there; termination uses
/// the same tests.
pub fn solve_warm(
    program: &CanonicalProgram,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<SolveResult> {
    settings.validate()?;
    program.validate()?;
    check_psd(&program.quad)?;
    if let Some(w) = warm {
        if w.x.len() != program.num_vars() || w.y.len() != program.num_rows() {
            return Err(Error::argument(format!(
                "warm start has {} variables and {} rows, program has {} and {}",
                w.x.len(),
                w.y.len(),
                program.num_vars(),
                program.num_rows()
            )));
        }
        if w.x.iter().chain(&w.y).any(|v| !v.is_finite()) {
            return Err(Error::argument("warm start has non-finite entries"));
        }
    }

    let n = program.num_vars();
    let m = program.num_rows();
    let s = Scaled::new(program, settings.scaling_iters);

    let classes = row_classes(program);
    let kkt = KktFactory::new(&s, &classes, settings.sigma);
    let mut rho_scalar = settings.rho;
    let mut rho: Vec<f64> = classes.iter().map(|c| rho_of(*c, rho_scalar)).collect();
    let mut chol = kkt.factor(rho_scalar)?;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some(w) = warm {
        x = w.x.iter().zip(&s.d).map(|(v, d)| v / d).collect();
        y = w.y.iter().zip(&s.e).map(|(v, e)| v * s.c / e).collect();
        s.a.mul_vec(&x, &mut z);
        for i in 0..m {
            z[i] = z[i].clamp(s.l[i], s.u[i]);
        }
    }
    let mut dy = vec![0.0; m];
    let mut rhs = DVector::<f64>::zeros(n);
    let mut zt = vec![0.0; m];
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];

    let alpha = settings.alpha;
    let sigma = settings.sigma;
    let mut status = SolveStatus::MaxIterations;
    let mut residuals = Residuals::default();
    let mut iterations = 0;
    let mut polished = None;
    let mut last_polish = 0usize;

    let mut last_active: Vec<Active> = Vec::new();
    let mut try_polish = |x_s: &[f64], z_s: &[f64], y_s: &[f64], rounds: usize| {
        let active = active_set(&s, z_s, y_s);
        if active == last_active && rounds == EARLY_POLISH_ROUNDS {
            return None;
        }
        let out = polish(program, &s.unscale_x(x_s), &active, settings, rounds);
        last_active = active;
        out
    };

    // When the iterate meets the tolerance but polish fails, iterate on to a
    // tighter one so the unpolished answer is more accurate.
    let mut target = *settings;
    let mut fallback: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;

    if warm.is_some() && settings.polish {
        polished = try_polish(&x, &z, &y, EARLY_POLISH_ROUNDS);
    }

    for k in 1..=settings.max_iter {
        if polished.is_some() {
            status = SolveStatus::Solved;
            break;
        }
        iterations = k;

        // x-update through the reduced KKT system
        for i in 0..m {
            tmp_m[i] = rho[i] * z[i] - y[i];
        }
        s.a.tmul_vec(&tmp_m, &mut tmp_n);
        for j in 0..n {
            rhs[j] = sigma * x[j] - s.q[j] + tmp_n[j];
        }
        chol.solve_mut(&mut rhs);
        s.a.mul_vec(rhs.as_slice(), &mut zt);

        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let zr = alpha * zt[i] + (1.0 - alpha) * z[i];
            let z_new = (zr + y[i] / rho[i]).clamp(s.l[i], s.u[i]);
            dy[i] = rho[i] * (zr - z_new);
            y[i] += dy[i];
            z[i] = z_new;
        }

        let adapt_now = settings.adaptive_rho && k % ADAPT_EVERY == 0;
        if k % CHECK_EVERY != 0 && k != settings.max_iter && !adapt_now {
            continue;
        }
        let c = check(&s, &x, &z, &y, &target);
        residuals = c.unscaled;
        if residuals.converged() {
            if settings.polish && fallback.is_none() {
                if let Some(p) = try_polish(&x, &z, &y, FINAL_POLISH_ROUNDS) {
                    polished = Some(p);
                    status = SolveStatus::Solved;
                    break;
                }
                fallback = Some((x.clone(), z.clone(), y.clone()));
                target.eps_abs *= FALLBACK_TIGHTENING;
                target.eps_rel *= FALLBACK_TIGHTENING;
                continue;
            }
            status = SolveStatus::Solved;
            break;
        }
        if certifies_infeasibility(&s, program, &dy, settings.eps_prim_inf) {
            status = SolveStatus::PrimalInfeasible;
            break;
        }
        if settings.polish
            && k >= last_polish + POLISH_EVERY
            && residuals.primal <= EARLY_POLISH_SLACK * residuals.eps_primal
            && residuals.dual <= EARLY_POLISH_SLACK * residuals.eps_dual
        {
            last_polish = k;
            if let Some(p) = try_polish(&x, &z, &y, EARLY_POLISH_ROUNDS) {
                polished = Some(p);
                status = SolveStatus::Solved;
                break;
            }
        }
        if adapt_now && c.dual_scaled > DIV_TOL {
            let ratio = (c.prim_scaled / (c.prim_norm_scaled + DIV_TOL))
                / (c.dual_scaled / (c.dual_norm_scaled + DIV_TOL));
            let new_rho = (rho_scalar * ratio.sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho > RHO_ADAPT_RATIO * rho_scalar || new_rho < rho_scalar / RHO_ADAPT_RATIO {
                rho_scalar = new_rho;
                rho = classes.iter().map(|c| rho_of(*c, rho_scalar)).collect();
                chol = kkt.factor(rho_scalar)?;
            }
        }
    }

    if polished.is_none() && settings.polish && status != SolveStatus::PrimalInfeasible {
        if let Some(p) = try_polish(&x, &z, &y, FINAL_POLISH_ROUNDS) {
            polished = Some(p);
            status = SolveStatus::Solved;
        }
    }
    if polished.is_none() {
        if let Some((fx, fz, fy)) = fallback {
            if status != SolveStatus::Solved {
                // The tightened run stalled; the point that met the requested
                // tolerance stands.
                (x, z, y) = (fx, fz, fy);
                status = SolveStatus::Solved;
            }
            residuals = check(&s, &x, &z, &y, settings).unscaled;
        }
    }

    let (x_out, y_out, was_polished) = match polished {
        Some(p) => {
            residuals = p.residuals;
            (p.x, p.y, true)
        }
        None => (s.unscale_x(&x), s.unscale_y(&y), false),
    };
    let objective = program.objective(&x_out);
    Ok(SolveResult {
        x: x_out,
        y: y_out,
        status,
        iterations,
        objective,
        residuals,
        polished: was_polished,
    })
}
