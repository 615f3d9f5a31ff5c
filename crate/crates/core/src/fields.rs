//! Second-stage magnetic field learning with couplings and structure held
//! fixed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LocalParams;
use crate::moments::MomentTable;
use crate::optimizer::{ceil_u64, projected_gd, taylor_degree, Overrides, Schedule, ScheduleMode, DEFAULT_EPSILON, DEFAULT_ITERATIONS};
use crate::polyexpand::{approx_field_derivative, field_moment_degree};
use crate::screening::{trace_stride, CouplingEstimate, NodeDiagnostics};
use crate::structure::EdgeSet;

/// Achieved-error bound `eps_h + sqrt(8 gamma (1+gamma) e^{3 gamma} D eps_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldBound {
    pub epsilon_h: f64,
    pub epsilon_couplings: f64,
    pub max_degree: usize,
    pub coupling_term: f64,
    pub bound: f64,
}

impl FieldBound {
    pub fn new(gamma: f64, max_degree: usize, epsilon_couplings: f64, epsilon_h: f64) -> Self {
        let coupling_term = (8.0 * gamma * (1.0 + gamma) * (3.0 * gamma).exp() * max_degree as f64 * epsilon_couplings).sqrt();
        Self {
            epsilon_h,
            epsilon_couplings,
            max_degree,
            coupling_term,
            bound: epsilon_h + coupling_term,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    pub fields: Vec<f64>,
    pub schedule: Schedule,
    /// Method that produced the couplings the fields were fit against.
    pub couplings_from: String,
    /// `max_u |N_u|` over the edge set used.
    pub max_degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<FieldBound>,
    pub diagnostics: Vec<NodeDiagnostics>,
    pub max_moment_degree: usize,
}

/// Approximate `dR/dtheta` for node `u` at field `theta`, using the degree-`d`
/// Taylor surrogate of `exp(-sigma_u (theta + sum_j J_uj sigma_j))`.
/// `couplings` must be zero outside the neighborhood.
pub fn field_gradient(
    u: usize,
    theta: f64,
    couplings: &LocalParams,
    d: usize,
    table: &MomentTable,
) -> Result<f64> {
    if couplings.node != u {
        return Err(Error::invalid(format!(
            "coupling vector belongs to node {}, not {u}",
            couplings.node
        )));
    }
    let mut lp = couplings.clone();
    lp.field = theta;
    approx_field_derivative(&lp, d, table)
}

/// Couplings of `u` restricted to its neighbors in `edges`, taken from the
/// symmetrized estimate.
pub fn neighborhood_couplings(u: usize, est: &CouplingEstimate, edges: &EdgeSet) -> LocalParams {
    let mut lp = LocalParams::zero(est.p, u);
    for v in edges.neighbors(u) {
        lp.set_coupling(v, est.coupling(u, v));
    }
    lp
}

fn fit_field(
    u: usize,
    couplings: &LocalParams,
    table: &MomentTable,
    sched: &Schedule,
) -> Result<(f64, NodeDiagnostics)> {
    let oracle = |x: &[f64]| Ok(vec![field_gradient(u, x[0], couplings, sched.d, table)?]);
    let out = projected_gd(
        oracle,
        sched.gamma,
        sched.eta,
        sched.t,
        &[0.0],
        &sched.gd_options(Some(trace_stride(sched.t))),
    )?;
    Ok((out.average[0], NodeDiagnostics::from_outcome(u, &out)))
}

/// One-dimensional projected GD (clamp to `[-gamma, gamma]`) on the field of
/// node `u` from zero.
pub fn learn_field(
    u: usize,
    est: &CouplingEstimate,
    edges: &EdgeSet,
    table: &MomentTable,
    sched: &Schedule,
) -> Result<f64> {
    if u >= est.p {
        return Err(Error::IndexOutOfRange { index: u, p: est.p });
    }
    sched.validate()?;
    let lp = neighborhood_couplings(u, est, edges);
    Ok(fit_field(u, &lp, table, sched)?.0)
}

/// Fits every node's field in parallel. When `epsilon_couplings` is given and
/// the schedule carries an `epsilon` (read as `eps_h`), the achieved-error
/// bound is attached.
pub fn learn_fields(
    est: &CouplingEstimate,
    edges: &EdgeSet,
    table: &MomentTable,
    sched: &Schedule,
    epsilon_couplings: Option<f64>,
) -> Result<FieldEstimate> {
    if table.p() != est.p {
        return Err(Error::DimensionMismatch {
            expected: est.p,
            found: table.p(),
        });
    }
    edges.check_range(est.p)?;
    sched.validate()?;
    let need = field_moment_degree(sched.d);
    if !table.covers(need) {
        return Err(Error::MissingMoment {
            degree: need,
            table_degree: table.degree(),
        });
    }
    table.reset_query_log();
    let fits: Vec<(f64, NodeDiagnostics)> = (0..est.p)
        .into_par_iter()
        .map(|u| fit_field(u, &neighborhood_couplings(u, est, edges), table, sched))
        .collect::<Result<_>>()?;
    let max_degree = edges.max_degree(est.p);
    let (fields, diagnostics) = fits.into_iter().unzip();
    let mut schedule = sched.clone();
    if schedule.n.is_none() {
        schedule.n = table.n();
    }
    Ok(FieldEstimate {
        fields,
        bound: match (epsilon_couplings, sched.epsilon) {
            (Some(ec), Some(eh)) => Some(FieldBound::new(sched.gamma, max_degree, ec, eh)),
            _ => None,
        },
        schedule,
        couplings_from: est.method.to_string(),
        max_degree,
        diagnostics,
        max_moment_degree: table.max_queried_degree(),
    })
}

fn field_degree(gamma: f64, epsilon_h: f64) -> Result<usize> {
    let arg = 8.0 * gamma * (1.0 + gamma) / (epsilon_h * epsilon_h);
    if !(arg.ln() > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon_h = {epsilon_h} too large for gamma = {gamma}: log(8 gamma (1+gamma) / eps_h^2) <= 0"
        )));
    }
    taylor_degree(2.0 * gamma, gamma + arg.ln())
}

/// Field-learning schedule with worst-case guarantee constants:
/// `eps = eps_h^2 e^-gamma / (2(1+gamma))`, `L = (1 + D eps_c) e^{2 gamma} + eps/(4 gamma)`,
/// `T = ceil(16 gamma^2 L^2 / eps^2)`, `eta = 2 gamma / (L sqrt T)`.
pub fn schedule_fields(
    gamma: f64,
    max_degree: usize,
    epsilon_couplings: f64,
    epsilon_h: f64,
    delta: f64,
    p: usize,
) -> Result<Schedule> {
    if !(gamma > 0.0) || !(epsilon_couplings >= 0.0) || !(epsilon_h > 0.0) || p == 0 {
        return Err(Error::invalid("gamma, eps_h and p must be positive and eps_c nonnegative"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let g = gamma;
    let d = field_degree(g, epsilon_h)?;
    let eps = epsilon_h * epsilon_h * (-g).exp() / (2.0 * (1.0 + g));
    let l = (1.0 + max_degree as f64 * epsilon_couplings) * (2.0 * g).exp() + eps / (4.0 * g);
    let t = ceil_u64(16.0 * g * g * l * l / (eps * eps), "T")?;
    let eta = 2.0 * g / (l * (t as f64).sqrt());
    let d1 = (d + 1) as f64;
    let logs = d1 * (std::f64::consts::E * p as f64).ln() + (2.0 * d1 / delta).ln();
    let n = ceil_u64(
        32.0 * g * g * (1.0 + g).powi(2) * (6.0 * g).exp() * logs / epsilon_h.powi(4),
        "n",
    )?;
    Ok(Schedule {
        d,
        t,
        eta,
        n: Some(n),
        gamma,
        epsilon: Some(epsilon_h),
        delta: Some(delta),
        mode: ScheduleMode::Theory,
        lipschitz: Some(l),
        early_stop: None,
    })
}

/// Practical field schedule: `d` from the field degree formula at
/// `eps_h` (default 0.1), `T = 5000`, `eta = 2 gamma / (L sqrt T)` with
/// `L = e^{2 gamma}`.
pub fn schedule_fields_practical(gamma: f64, overrides: &Overrides, data_n: Option<u64>) -> Result<Schedule> {
    let epsilon_h = overrides.epsilon.unwrap_or(DEFAULT_EPSILON);
    let d = match overrides.d {
        Some(d) => d,
        None => field_degree(gamma, epsilon_h)?,
    };
    let t = overrides.t.unwrap_or(DEFAULT_ITERATIONS);
    let l = (2.0 * gamma).exp();
    let sched = Schedule {
        d,
        t,
        eta: overrides.eta.unwrap_or(2.0 * gamma / (l * (t as f64).sqrt())),
        n: overrides.n.or(data_n),
        gamma,
        epsilon: Some(epsilon_h),
        delta: overrides.delta,
        mode: ScheduleMode::Practical,
        lipschitz: overrides.eta.is_none().then_some(l),
        early_stop: overrides.early_stop,
    };
    sched.validate()?;
    Ok(sched)
}
