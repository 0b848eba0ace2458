use super::matrix::inf_norm;
use super::program::CanonicalProgram;
use crate::error::{Error, Result};

/// Optimality diagnostics for a primal/dual pair, all in infinity norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest violation of `l <= Ax <= u`.
    pub primal: f64,
    /// `||Qx + q + A'y||`.
    pub stationarity: f64,
    /// Largest `y_i` weighted distance to the bound it claims to be active
    /// on. Positive `y_i` pairs with the upper bound, negative with the lower.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.complementarity)
    }
}

pub fn kkt_residuals(program: &CanonicalProgram, x: &[f64], y: &[f64]) -> Result<KktReport> {
    let n = program.num_vars();
    let m = program.num_rows();
    if x.len() != n || y.len() != m {
        return Err(Error::argument(format!(
            "expected x of length {n} and y of length {m}, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut ax = vec![0.0; m];
    program.constraints.mul_vec(x, &mut ax);
    let primal = ax
        .iter()
        .zip(program.lower.iter().zip(&program.upper))
        .map(|(a, (l, u))| (l - a).max(a - u).max(0.0))
        .fold(0.0, f64::max);

    let mut grad = vec![0.0; n];
    program.quad.mul_vec(x, &mut grad);
    let mut aty = vec![0.0; n];
    program.constraints.tmul_vec(y, &mut aty);
    for ((g, q), a) in grad.iter_mut().zip(&program.lin).zip(&aty) {
        *g += q + a;
    }
    let stationarity = inf_norm(&grad);

    let complementarity = y
        .iter()
        .zip(&ax)
        .zip(program.lower.iter().zip(&program.upper))
        .map(|((&yi, &a), (&l, &u))| {
            if yi > 0.0 {
                yi * (u - a).abs()
            } else if yi < 0.0 {
                -yi * (a - l).abs()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);

    Ok(KktReport {
        primal,
        stationarity,
        complementarity,
    })
}
