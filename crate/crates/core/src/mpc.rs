//! Arbitrage MPC as a canonical LP/QP.
//!
//! Variables are laid out as `[P_1..P_T, u_1..u_T]` where `u_n >= |P_n|` is
//! the absolute-value epigraph used by the throughput limit and by the
//! L1 regulariser. SOC is eliminated by substitution, so the constraint rows
//! are, in order:
//!
//! | rows      | meaning                                                     |
//! |-----------|-------------------------------------------------------------|
//! | `T`       | `E_l - soc0 <= -k sum_{m<=n} P_m <= E_u - soc0`              |
//! | `2T`      | per step `n`: `u_n - P_n >= 0`, then `u_n + P_n >= 0`         |
//! | `1`       | `dt sum u_n <= (T/48) E_nom`                                 |
//! | `T`       | `P_l <= P_n <= P_u`                                          |
//! | `T`       | `0 <= u_n <= max(|P_l|, |P_u|)`                              |
//!
//! with `k = eta dt / E_nom`. The objective is maximised, so the program
//! minimises its negation.

use crate::discount::{DiscountSpec, GammaVector, Scheme};
use crate::domain::{soc_step, BatteryParams, INTERVALS_PER_DAY};
use crate::error::{Error, Result};
use crate::solver::{CanonicalProgram, CsrMatrix, Segment, SolveResult, SolveStatus, WarmStart};

/// Slack on `soc0` that absorbs rounding in the executed SOC chain.
const SOC0_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcInstance {
    pub prices: Vec<f64>,
    pub gamma: GammaVector,
    pub spec: DiscountSpec,
    pub params: BatteryParams,
    pub soc0: f64,
}

impl MpcInstance {
    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        if t == 0 {
            return Err(Error::argument("empty price vector"));
        }
        if self.gamma.horizon() != t {
            return Err(Error::argument(format!(
                "gamma has length {}, prices have length {t}",
                self.gamma.horizon()
            )));
        }
        if let Some(i) = self.prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::argument(format!(
                "non-finite price at lead {}",
                i + 1
            )));
        }
        self.spec.validate()?;
        self.params
            .validate()
            .map_err(|e| Error::argument(e.to_string()))?;
        let p = &self.params;
        if !(self.soc0 >= p.soc_lower - SOC0_SLACK && self.soc0 <= p.soc_upper + SOC0_SLACK) {
            return Err(Error::argument(format!(
                "initial soc {} outside [{}, {}]",
                self.soc0, p.soc_lower, p.soc_upper
            )));
        }
        Ok(())
    }

    /// Throughput cap of one plan, MWh.
    pub fn throughput_limit(&self) -> f64 {
        self.horizon() as f64 / INTERVALS_PER_DAY as f64 * self.params.e_nom
    }
}

pub const POWER_SEGMENT: &str = "power";
pub const ABS_SEGMENT: &str = "abs";

/// Standard arbitrage MPC, `max sum c_n P_n`.
pub fn build_standard(instance: &MpcInstance) -> Result<CanonicalProgram> {
    instance.validate()?;
    if instance.spec.scheme != Scheme::None {
        return Err(Error::argument(format!(
            "standard MPC needs scheme none, got {}",
            instance.spec.scheme
        )));
    }
    let cost: Vec<f64> = instance.prices.iter().map(|c| -c).collect();
    assemble(instance, cost, vec![0.0; instance.horizon()], None)
}

/// Discounted MPC, `max sum c_n g_n P_n - lambda R(P)` with
/// `R = sum |P_n| / g_n` for `s = 1` and `R = sum (P_n / g_n)^2` for `s = 2`.
pub fn build_discounted(instance: &MpcInstance) -> Result<CanonicalProgram> {
    instance.validate()?;
    let t = instance.horizon();
    let g = instance.gamma.weights();
    let lambda = instance.spec.effective_lambda();

    let cost: Vec<f64> = instance
        .prices
        .iter()
        .zip(g)
        .map(|(c, w)| -(c * w))
        .collect();
    let mut abs_cost = vec![0.0; t];
    let mut quad = None;
    if lambda > 0.0 {
        match instance.spec.s {
            1 => abs_cost
                .iter_mut()
                .zip(g)
                .for_each(|(a, w)| *a = lambda / w),
            _ => quad = Some(g.iter().map(|w| 2.0 * lambda / (w * w)).collect::<Vec<_>>()),
        }
    }
    assemble(instance, cost, abs_cost, quad)
}

fn assemble(
    instance: &MpcInstance,
    power_cost: Vec<f64>,
    abs_cost: Vec<f64>,
    power_quad: Option<Vec<f64>>,
) -> Result<CanonicalProgram> {
    let t = instance.horizon();
    let p = &instance.params;
    let n = 2 * t;
    let k = p.soc_per_mw();
    let pw = |i: usize| i;
    let ab = |i: usize| t + i;

    let mut trip = Vec::with_capacity(t * (t + 1) / 2 + 7 * t);
    let mut lower = Vec::with_capacity(5 * t + 1);
    let mut upper = Vec::with_capacity(5 * t + 1);
    let mut row = 0;

    for i in 0..t {
        for m in 0..=i {
            trip.push((row, pw(m), -k));
        }
        lower.push(p.soc_lower - instance.soc0);
        upper.push(p.soc_upper - instance.soc0);
        row += 1;
    }
    for i in 0..t {
        trip.push((row, ab(i), 1.0));
        trip.push((row, pw(i), -1.0));
        trip.push((row + 1, ab(i), 1.0));
        trip.push((row + 1, pw(i), 1.0));
        lower.extend([0.0, 0.0]);
        upper.extend([f64::INFINITY, f64::INFINITY]);
        row += 2;
    }
    for i in 0..t {
        trip.push((row, ab(i), p.dt));
    }
    lower.push(f64::NEG_INFINITY);
    upper.push(instance.throughput_limit());
    row += 1;
    for i in 0..t {
        trip.push((row, pw(i), 1.0));
        lower.push(p.p_lower);
        upper.push(p.p_upper);
        row += 1;
    }
    for i in 0..t {
        trip.push((row, ab(i), 1.0));
        lower.push(0.0);
        upper.push(p.max_abs_power());
        row += 1;
    }

    let mut lin = power_cost;
    lin.extend(abs_cost);
    let quad = match power_quad {
        Some(d) => {
            let trip: Vec<_> = d
                .into_iter()
                .enumerate()
                .map(|(i, v)| (pw(i), pw(i), v))
                .collect();
            CsrMatrix::from_triplets(n, n, &trip)?
        }
        None => CsrMatrix::zeros(n, n),
    };
    Ok(CanonicalProgram {
        quad,
        lin,
        constraints: CsrMatrix::from_triplets(row, n, &trip)?,
        lower,
        upper,
        layout: vec![
            Segment {
                name: POWER_SEGMENT,
                start: 0,
                len: t,
            },
            Segment {
                name: ABS_SEGMENT,
                start: t,
                len: t,
            },
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

impl PlanStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanStatus::Solved => "solved",
            PlanStatus::MaxIterations => "max_iterations",
            PlanStatus::Infeasible => "infeasible",
        }
    }
}

impl From<SolveStatus> for PlanStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Solved => PlanStatus::Solved,
            SolveStatus::MaxIterations => PlanStatus::MaxIterations,
            SolveStatus::PrimalInfeasible => PlanStatus::Infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub powers: Vec<f64>,
    /// Epigraph values `u_n` as returned by the solver.
    pub abs_powers: Vec<f64>,
    /// SOC after each planned step.
    pub soc_path: Vec<f64>,
    /// Discounted objective recomputed from the powers; NaN when infeasible.
    pub objective: f64,
    pub status: PlanStatus,
}

impl MpcPlan {
    pub fn first_power(&self) -> Option<f64> {
        self.powers.first().copied()
    }

    /// Largest violation, in natural units, of the SOC bounds, power box,
    /// epigraph and throughput constraints. Zero for an empty plan.
    pub fn max_violation(&self, instance: &MpcInstance) -> f64 {
        let p = &instance.params;
        let mut worst = 0.0f64;
        for &s in &self.soc_path {
            worst = worst.max(p.soc_lower - s).max(s - p.soc_upper);
        }
        for (&pw, &u) in self.powers.iter().zip(&self.abs_powers) {
            worst = worst
                .max(p.p_lower - pw)
                .max(pw - p.p_upper)
                .max(pw.abs() - u);
        }
        if !self.abs_powers.is_empty() {
            let used: f64 = self.abs_powers.iter().map(|u| u * p.dt).sum();
            worst = worst.max(used - instance.throughput_limit());
        }
        worst.max(0.0)
    }
}

/// Discounted objective of a power schedule, independent of any solver.
pub fn plan_objective(instance: &MpcInstance, powers: &[f64]) -> f64 {
    let g = instance.gamma.weights();
    let lambda = instance.spec.effective_lambda();
    let gain: f64 = instance
        .prices
        .iter()
        .zip(g)
        .zip(powers)
        .map(|((c, w), p)| c * w * p)
        .sum();
    if lambda == 0.0 {
        return gain;
    }
    let reg: f64 = match instance.spec.s {
        1 => powers.iter().zip(g).map(|(p, w)| p.abs() / w).sum(),
        _ => powers.iter().zip(g).map(|(p, w)| (p / w) * (p / w)).sum(),
    };
    gain - lambda * reg
}

pub fn extract_plan(instance: &MpcInstance, solution: &SolveResult) -> Result<MpcPlan> {
    let t = instance.horizon();
    let status = PlanStatus::from(solution.status);
    if status == PlanStatus::Infeasible {
        return Ok(MpcPlan {
            powers: Vec::new(),
            abs_powers: Vec::new(),
            soc_path: Vec::new(),
            objective: f64::NAN,
            status,
        });
    }
    if solution.x.len() != 2 * t {
        return Err(Error::Internal(format!(
            "solution has {} entries, layout needs {}",
            solution.x.len(),
            2 * t
        )));
    }
    let powers = solution.x[..t].to_vec();
    let abs_powers = solution.x[t..].to_vec();
    let mut soc = instance.soc0;
    let soc_path = powers
        .iter()
        .map(|&p| {
            soc = soc_step(soc, p, &instance.params);
            soc
        })
        .collect();
    let objective = plan_objective(instance, &powers);
    Ok(MpcPlan {
        powers,
        abs_powers,
        soc_path,
        objective,
        status,
    })
}

/// Receding-horizon warm start: the previous solution with its first step
/// dropped, each step's variables and rows moved one place earlier, and
/// zeros for steps the previous horizon did not reach. Returns `None` if
/// `previous` does not fit a horizon of `previous_horizon`.
pub fn shifted_warm_start(
    previous: &SolveResult,
    previous_horizon: usize,
    horizon: usize,
) -> Option<WarmStart> {
    let (pt, t) = (previous_horizon, horizon);
    if previous.x.len() != 2 * pt || previous.y.len() != 5 * pt + 1 {
        return None;
    }
    let from = |i: usize| (i + 1 < pt).then_some(i + 1);
    let mut x = vec![0.0; 2 * t];
    let mut y = vec![0.0; 5 * t + 1];
    for i in 0..t {
        let Some(j) = from(i) else { continue };
        x[i] = previous.x[j];
        x[t + i] = previous.x[pt + j];
        y[i] = previous.y[j];
        y[t + 2 * i] = previous.y[pt + 2 * j];
        y[t + 2 * i + 1] = previous.y[pt + 2 * j + 1];
        y[3 * t + 1 + i] = previous.y[3 * pt + 1 + j];
        y[4 * t + 1 + i] = previous.y[4 * pt + 1 + j];
    }
    y[3 * t] = previous.y[3 * pt];
    Some(WarmStart { x, y })
}
