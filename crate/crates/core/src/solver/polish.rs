//! Active-set refinement of an ADMM iterate.
//!
//! Given a guess of which rows sit on their lower or upper bound, solve the
//! equality-constrained QP on that set through the regularised KKT system
//!
//! ```text
//! [ Q + dI   A_act' ] [x]   [ -q + d x_hat ]
//! [ A_act    -dI    ] [y] = [ b_act        ]
//! ```
//!
//! followed by iterative refinement against the unregularised system. The
//! result is accepted only if it meets the solver tolerances and the duals
//! carry the sign their bound requires.

use nalgebra::{DMatrix, DVector};

use super::admm::unscaled_residuals;
use super::nnls::{nnls, Column};
use super::program::CanonicalProgram;
use super::{Residuals, SolverSettings};

const DELTA: f64 = 1e-6;
const REFINE_ITERS: usize = 8;
const VIOLATION_TOL: f64 = 1e-9;
/// Relative slack within which a row counts as active for dual repair.
const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Active {
    Inactive,
    Lower,
    Upper,
}

pub(super) struct Polished {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residuals: Residuals,
}

/// Polishes on `active`, then corrects the guess: rows whose duals carry
/// the wrong sign are released and inactive rows the point violates are
/// added. Degenerate vertices have redundant active rows whose regularised
/// duals spread without regard to sign, so a primal-feasible point with bad
/// duals first gets its multipliers recomputed by nonnegative least squares
/// over every row it touches.
pub(super) fn polish(
    program: &CanonicalProgram,
    x_hat: &[f64],
    active: &[Active],
    settings: &SolverSettings,
    max_rounds: usize,
) -> Option<Polished> {
    let mut active = active.to_vec();
    for _ in 0..max_rounds {
        let attempt = polish_once(program, x_hat, &active, settings)?;
        if attempt.residuals.converged() && attempt.wrong_sign.is_empty() {
            return Some(Polished {
                x: attempt.x,
                y: attempt.y,
                residuals: attempt.residuals,
            });
        }
        if attempt.residuals.primal <= attempt.residuals.eps_primal {
            if let Some(p) = repair_duals(program, attempt.x.clone(), &attempt.ax, settings) {
                return Some(p);
            }
        }
        let mut changed = false;
        for &r in &attempt.wrong_sign {
            active[r] = Active::Inactive;
            changed = true;
        }
        for (r, &v) in attempt.ax.iter().enumerate() {
            if active[r] != Active::Inactive {
                continue;
            }
            let (l, u) = (program.lower[r], program.upper[r]);
            if v > u + VIOLATION_TOL * (1.0 + u.abs()) {
                active[r] = Active::Upper;
                changed = true;
            } else if v < l - VIOLATION_TOL * (1.0 + l.abs()) {
                active[r] = Active::Lower;
                changed = true;
            }
        }
        if !changed {
            return None;
        }
    }
    None
}

struct Attempt {
    x: Vec<f64>,
    y: Vec<f64>,
    ax: Vec<f64>,
    residuals: Residuals,
    wrong_sign: Vec<usize>,
}

fn polish_once(
    program: &CanonicalProgram,
    x_hat: &[f64],
    active: &[Active],
    settings: &SolverSettings,
) -> Option<Attempt> {
    let n = program.num_vars();
    let a = &program.constraints;
    let rows: Vec<(usize, f64)> = active
        .iter()
        .enumerate()
        .filter_map(|(i, act)| match act {
            Active::Inactive => None,
            Active::Lower => Some((i, program.lower[i])),
            Active::Upper => Some((i, program.upper[i])),
        })
        .collect();

    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in program.quad.triplets() {
        m[(i, j)] += v;
    }
    for j in 0..n {
        m[(j, j)] += DELTA;
    }
    let mut a_act_t = DMatrix::<f64>::zeros(n, rows.len());
    for (k, &(r, _)) in rows.iter().enumerate() {
        let (cols, vals) = a.row(r);
        for (&j, &v) in cols.iter().zip(vals) {
            a_act_t[(j, k)] = v;
        }
    }
    m.gemm(1.0 / DELTA, &a_act_t, &a_act_t.transpose(), 1.0);
    let chol = m.cholesky()?;

    let a_act_mul = |x: &[f64]| -> Vec<f64> {
        rows.iter()
            .map(|&(r, _)| {
                let (cols, vals) = a.row(r);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    };
    let a_act_tmul = |y: &[f64], out: &mut [f64]| {
        for (&(r, _), &yr) in rows.iter().zip(y) {
            let (cols, vals) = a.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                out[j] += v * yr;
            }
        }
    };
    let solve_reg = |r1: &[f64], r2: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut rhs = DVector::from_column_slice(r1);
        let scaled: Vec<f64> = r2.iter().map(|v| v / DELTA).collect();
        a_act_tmul(&scaled, rhs.as_mut_slice());
        chol.solve_mut(&mut rhs);
        let x: Vec<f64> = rhs.as_slice().to_vec();
        let y = a_act_mul(&x)
            .iter()
            .zip(r2)
            .map(|(ax, b)| (ax - b) / DELTA)
            .collect();
        (x, y)
    };

    let b: Vec<f64> = rows.iter().map(|&(_, b)| b).collect();
    let r1: Vec<f64> = program
        .lin
        .iter()
        .zip(x_hat)
        .map(|(q, xh)| -q + DELTA * xh)
        .collect();
    let (mut x, mut y_act) = solve_reg(&r1, &b);

    let mut qx = vec![0.0; n];
    let mut last_size = f64::INFINITY;
    for _ in 0..REFINE_ITERS {
        program.quad.mul_vec(&x, &mut qx);
        let mut r1: Vec<f64> = program.lin.iter().zip(&qx).map(|(q, px)| -q - px).collect();
        let mut aty = vec![0.0; n];
        a_act_tmul(&y_act, &mut aty);
        r1.iter_mut().zip(&aty).for_each(|(r, v)| *r -= v);
        let r2: Vec<f64> = b.iter().zip(a_act_mul(&x)).map(|(b, ax)| b - ax).collect();
        let size = r1.iter().chain(&r2).fold(0.0f64, |m, v| m.max(v.abs()));
        if size <= 1e-13 || size >= last_size {
            break;
        }
        last_size = size;
        let (dx, dy) = solve_reg(&r1, &r2);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        y_act.iter_mut().zip(&dy).for_each(|(a, d)| *a += d);
    }

    if x.iter().chain(&y_act).any(|v| !v.is_finite()) {
        return None;
    }
    let mut y = vec![0.0; program.num_rows()];
    for (&(r, _), &yr) in rows.iter().zip(&y_act) {
        y[r] = yr;
    }

    let mut ax = vec![0.0; program.num_rows()];
    a.mul_vec(&x, &mut ax);
    let z: Vec<f64> = ax
        .iter()
        .zip(program.lower.iter().zip(&program.upper))
        .map(|(v, (l, u))| v.clamp(*l, *u))
        .collect();
    let residuals = unscaled_residuals(program, &x, &z, &y, settings);
    let wrong_sign = rows
        .iter()
        .zip(&y_act)
        .filter(|(&(r, _), &yr)| {
            program.lower[r] != program.upper[r]
                && match active[r] {
                    Active::Lower => yr > residuals.eps_dual,
                    _ => yr < -residuals.eps_dual,
                }
        })
        .map(|(&(r, _), _)| r)
        .collect();
    Some(Attempt {
        x,
        y,
        ax,
        residuals,
        wrong_sign,
    })
}

/// Searches for sign-correct multipliers supported on the rows active at `x`
/// and accepts `x` if they certify optimality.
fn repair_duals(
    program: &CanonicalProgram,
    x: Vec<f64>,
    ax: &[f64],
    settings: &SolverSettings,
) -> Option<Polished> {
    let n = program.num_vars();
    let mut grad = vec![0.0; n];
    program.quad.mul_vec(&x, &mut grad);
    let b: Vec<f64> = grad
        .iter()
        .zip(&program.lin)
        .map(|(g, q)| -(g + q))
        .collect();

    // (row, sign, scale) per candidate column.
    let mut support = Vec::new();
    let mut cols = Vec::new();
    for (r, &v) in ax.iter().enumerate() {
        let (l, u) = (program.lower[r], program.upper[r]);
        let mut signs = Vec::with_capacity(2);
        if u.is_finite() && v >= u - ACTIVE_TOL * (1.0 + u.abs()) {
            signs.push(1.0);
        }
        if l.is_finite() && v <= l + ACTIVE_TOL * (1.0 + l.abs()) {
            signs.push(-1.0);
        }
        if signs.is_empty() {
            continue;
        }
        let (idx, vals) = program.constraints.row(r);
        let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for sign in signs {
            cols.push(Column {
                idx: idx.to_vec(),
                val: vals.iter().map(|v| sign * v / norm).collect(),
            });
            support.push((r, sign / norm));
        }
    }
    let w = nnls(&cols, &b, 3 * cols.len() + 10);
    let mut y = vec![0.0; program.num_rows()];
    for (&(r, scale), &wr) in support.iter().zip(&w) {
        y[r] += scale * wr;
    }
    let z: Vec<f64> = ax
        .iter()
        .zip(program.lower.iter().zip(&program.upper))
        .map(|(v, (l, u))| v.clamp(*l, *u))
        .collect();
    let residuals = unscaled_residuals(program, &x, &z, &y, settings);
    residuals
        .converged()
        .then_some(Polished { x, y, residuals })
}
