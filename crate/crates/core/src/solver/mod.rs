//! Dense operator-splitting (ADMM) solver for convex LPs and QPs in the form
//! `min 1/2 x'Qx + q'x  s.t.  l <= Ax <= u`.
//!
//! The iteration follows the OSQP splitting: Ruiz equilibration, a cached
//! factorisation of `Q + sigma I + A' diag(rho) A`, over-relaxation, adaptive
//! `rho`, primal infeasibility certificates and an active-set polish step.
//! Problems here have at most a few hundred variables, so the KKT matrix is
//! factored densely.

mod admm;
mod kkt;
pub mod matrix;
mod nnls;
mod polish;
mod program;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::{solve, solve_warm};
pub use kkt::{kkt_residuals, KktReport};
pub use matrix::CsrMatrix;
pub use program::{read_program_dump, CanonicalProgram, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Tolerance of the primal infeasibility certificate.
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    /// Initial penalty parameter.
    pub rho: f64,
    pub adaptive_rho: bool,
    pub sigma: f64,
    pub alpha: f64,
    pub polish: bool,
    pub scaling_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-5,
            max_iter: 20_000,
            rho: 0.1,
            adaptive_rho: true,
            sigma: 1e-6,
            alpha: 1.6,
            polish: true,
            scaling_iters: 10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::argument(format!(
                    "solver {name} must be positive, got {v}"
                )))
            }
        };
        positive("eps_abs", self.eps_abs)?;
        positive("eps_rel", self.eps_rel)?;
        positive("eps_prim_inf", self.eps_prim_inf)?;
        positive("rho", self.rho)?;
        positive("sigma", self.sigma)?;
        if self.max_iter < 1 {
            return Err(Error::argument("solver max_iter must be at least 1"));
        }
        if !(1.0..2.0).contains(&self.alpha) {
            return Err(Error::argument(format!(
                "solver alpha must lie in [1, 2), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Solved => "solved",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::PrimalInfeasible => "primal_infeasible",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unscaled residual norms at exit, with the tolerances they were tested against.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
}

impl Residuals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }
}

/// Unscaled primal and dual guesses for [`solve_warm`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub residuals: Residuals,
    pub polished: bool,
}
