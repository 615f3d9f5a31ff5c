//! ℓ1-ball projection, averaged projected gradient descent under an inexact
//! gradient oracle, Lambert W, and step/degree/sample-size schedules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iterations used by practical schedules unless overridden.
pub const DEFAULT_ITERATIONS: u64 = 5000;

/// Target parameter error used to pick a default Taylor degree in practical mode.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Consecutive small-gradient iterations required before an early stop.
const EARLY_STOP_RUN: u32 = 10;

/// Euclidean projection of `v` onto `{x : ||x||_1 <= gamma}`.
pub fn project_l1(v: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("radius must be finite and nonnegative, got {gamma}")));
    }
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= gamma {
        return Ok(v.to_vec());
    }
    if gamma == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - gamma) / (j + 1) as f64;
        if m > t {
            tau = t;
        } else {
            break;
        }
    }
    Ok(v.iter().map(|&x| x.signum() * (x.abs() - tau).max(0.0)).collect())
}

/// Options for [`projected_gd`].
#[derive(Debug, Clone, Default)]
pub struct GdOptions {
    /// Stop once `||g||_inf` stays below this for ten consecutive iterations.
    pub early_stop: Option<f64>,
    /// Record `||g||_inf` every this many iterations.
    pub trace_every: Option<u64>,
}

/// Output of [`projected_gd`].
#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub average: Vec<f64>,
    pub last: Vec<f64>,
    pub iterations: u64,
    pub early_stopped: bool,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
    /// `(iteration, ||g||_inf)` samples.
    pub trace: Vec<(u64, f64)>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs `x^{t+1} = P(x^t - eta * g(x^t))` for `t = 1..T` from `x1` and returns
/// the average of `x^1..x^T`.
pub fn projected_gd<F>(
    mut oracle: F,
    gamma: f64,
    eta: f64,
    t: u64,
    x1: &[f64],
    opts: &GdOptions,
) -> Result<GdOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {eta}")));
    }
    if t == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }
    let l1: f64 = x1.iter().map(|x| x.abs()).sum();
    if l1 > gamma + 1e-12 {
        return Err(Error::invalid(format!("start point has l1 norm {l1} > {gamma}")));
    }
    let mut x = x1.to_vec();
    let mut sum = vec![0.0; x.len()];
    let mut out = GdOutcome {
        average: Vec::new(),
        last: Vec::new(),
        iterations: 0,
        early_stopped: false,
        initial_grad_norm: 0.0,
        final_grad_norm: 0.0,
        trace: Vec::new(),
    };
    let mut small_run = 0u32;
    for it in 1..=t {
        for (s, xi) in sum.iter_mut().zip(&x) {
            *s += xi;
        }
        out.iterations = it;
        let g = oracle(&x)?;
        if g.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: g.len(),
            });
        }
        let gn = inf_norm(&g);
        if it == 1 {
            out.initial_grad_norm = gn;
        }
        out.final_grad_norm = gn;
        if let Some(every) = opts.trace_every {
            if every > 0 && (it - 1) % every == 0 {
                out.trace.push((it, gn));
            }
        }
        if let Some(tol) = opts.early_stop {
            small_run = if gn < tol { small_run + 1 } else { 0 };
            if small_run >= EARLY_STOP_RUN {
                out.early_stopped = it < t;
                break;
            }
        }
        if it < t {
            let step: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
            x = project_l1(&step, gamma)?;
        }
    }
    let k = out.iterations as f64;
    out.average = sum.into_iter().map(|s| s / k).collect();
    out.last = x;
    Ok(out)
}

/// Principal branch of the Lambert W function on `[0, inf)`.
pub fn lambert_w(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("lambert_w needs a finite x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // w e^w is increasing; (1+x) ln(1+x) >= x brackets the root.
    let (mut lo, mut hi) = (0.0f64, x.ln_1p());
    let mut w = if x < 1.0 { x.ln_1p() * 0.7 } else { x.ln() - x.ln().max(1.0).ln() };
    w = w.clamp(lo, hi);
    for _ in 0..200 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            return Ok(w);
        }
        if f < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let fp = ew * (w + 1.0);
        let fpp = ew * (w + 2.0);
        let denom = fp - f * fpp / (2.0 * fp);
        let mut next = w - f / denom;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 1e-16 * w.max(1e-300) || hi - lo <= 1e-16 * hi {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// Smallest `d` (per the Lambert W inversion) with
/// `exp(-(d+1)(log((d+1)/width) - 1)) <= exp(-c)`, i.e. `d = ceil(c / W(c/(width e))) - 1`.
pub fn taylor_degree(width: f64, c: f64) -> Result<usize> {
    if !(width > 0.0) || !(c > 0.0) {
        return Err(Error::invalid(format!(
            "degree inversion needs width > 0 and a positive log target, got {width}, {c}"
        )));
    }
    let w = lambert_w(c / (width * std::f64::consts::E))?;
    let d1 = (c / w).ceil();
    Ok((d1 as usize).saturating_sub(1))
}

fn check_epsilon(gamma: f64, epsilon: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if !(epsilon > 0.0) || epsilon > 4.0 * gamma {
        return Err(Error::invalid(format!("epsilon must lie in (0, 4 gamma], got {epsilon}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Taylor degree for coupling learning: `C = 3 gamma + log(16 gamma (1+gamma) / eps^2)`,
/// `d = ceil(C / W(C / (gamma e))) - 1`.
pub fn degree_for_error(gamma: f64, epsilon: f64) -> Result<usize> {
    check_epsilon(gamma, epsilon)?;
    let c = 3.0 * gamma + (16.0 * gamma * (1.0 + gamma) / (epsilon * epsilon)).ln();
    taylor_degree(gamma, c)
}

/// `ceil(x)` as a u64, rejecting values outside the 64-bit range.
pub(crate) fn ceil_u64(x: f64, what: &str) -> Result<u64> {
    let c = x.ceil();
    if !c.is_finite() || !(0.0..1.8e19).contains(&c) {
        return Err(Error::invalid(format!("{what} = {x:e} does not fit in 64 bits")));
    }
    Ok(c as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Theory,
    Practical,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::Theory => "theory",
            ScheduleMode::Practical => "practical",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(ScheduleMode::Theory),
            "practical" => Ok(ScheduleMode::Practical),
            _ => Err(Error::invalid(format!("unknown schedule mode {s:?}"))),
        }
    }
}

/// Optimization schedule echoed into every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Taylor degree (unused by the known-structure estimator).
    pub d: usize,
    #[serde(rename = "T")]
    pub t: u64,
    pub eta: f64,
    /// Observation count; `None` for exact (infinite-sample) tables.
    pub n: Option<u64>,
    pub gamma: f64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub mode: ScheduleMode,
    /// Gradient-norm bound the step size was derived from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<f64>,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.t == 0 {
            return Err(Error::invalid("T must be positive"));
        }
        if let Some(delta) = self.delta {
            check_delta(delta)?;
        }
        if self.mode == ScheduleMode::Theory {
            if let Some(eps) = self.epsilon {
                check_epsilon(self.gamma, eps)?;
            }
        }
        Ok(())
    }

    pub fn gd_options(&self, trace_every: Option<u64>) -> GdOptions {
        GdOptions {
            early_stop: self.early_stop,
            trace_every,
        }
    }
}

/// Step size and iteration count for averaged projected GD with gradient
/// norm bound `lipschitz`: `T = ceil(16 gamma^2 L^2 / eps^2)`, `eta = 2 gamma / (L sqrt T)`.
/// The tolerated per-call oracle error in ∞-norm is `eps / (4 gamma)`.
pub fn robust_gd_schedule(gamma: f64, lipschitz: f64, epsilon: f64) -> Result<(u64, f64)> {
    if !(gamma > 0.0) || !(lipschitz > 0.0) || !(epsilon > 0.0) {
        return Err(Error::invalid("gamma, L and epsilon must be positive"));
    }
    let t = ceil_u64(16.0 * gamma * gamma * lipschitz * lipschitz / (epsilon * epsilon), "T")?;
    let eta = 2.0 * gamma / (lipschitz * (t as f64).sqrt());
    Ok((t, eta))
}

/// Coupling-learning schedule with worst-case guarantee constants.
pub fn schedule_theory(p: usize, gamma: f64, epsilon: f64, delta: f64) -> Result<Schedule> {
    if p == 0 {
        return Err(Error::invalid("p must be positive"));
    }
    check_epsilon(gamma, epsilon)?;
    check_delta(delta)?;
    let pf = p as f64;
    let g = gamma;
    let e8 = (8.0 * g).exp();
    let t = ceil_u64(576.0 * pf * g * g * e8 * (1.0 + g).powi(2) / epsilon.powi(4), "T")?;
    let eta = 2.0 * g * (-g).exp() / (3.0 * (pf * t as f64).sqrt());
    let d = degree_for_error(g, epsilon)?;
    let d2 = (d + 2) as f64;
    let logs = d2 * (std::f64::consts::E * pf).ln() + (2.0 * pf * d2 / delta).ln();
    let n = ceil_u64(128.0 * e8 * g * g * (1.0 + g).powi(2) * logs / epsilon.powi(4), "n")?;
    Ok(Schedule {
        d,
        t,
        eta,
        n: Some(n),
        gamma,
        epsilon: Some(epsilon),
        delta: Some(delta),
        mode: ScheduleMode::Theory,
        lipschitz: Some(3.0 * pf.sqrt() * g.exp()),
        early_stop: None,
    })
}

/// User overrides for a practical schedule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default, rename = "T")]
    pub t: Option<u64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub early_stop: Option<f64>,
}

/// Coupling-learning schedule with desk-scale defaults: `d` from
/// [`degree_for_error`], `T = 5000`, `eta = 2 gamma e^-gamma / (3 sqrt(p T))`,
/// `n` from the data.
pub fn schedule_practical(
    p: usize,
    gamma: f64,
    overrides: &Overrides,
    data_n: Option<u64>,
) -> Result<Schedule> {
    if p == 0 {
        return Err(Error::invalid("p must be positive"));
    }
    let epsilon = overrides.epsilon.unwrap_or(DEFAULT_EPSILON.min(4.0 * gamma));
    let d = match overrides.d {
        Some(d) => d,
        None => degree_for_error(gamma, epsilon)?,
    };
    let t = overrides.t.unwrap_or(DEFAULT_ITERATIONS);
    let lipschitz = 3.0 * (p as f64).sqrt() * gamma.exp();
    let eta = match overrides.eta {
        Some(eta) => eta,
        None => 2.0 * gamma * (-gamma).exp() / (3.0 * (p as f64 * t as f64).sqrt()),
    };
    let sched = Schedule {
        d,
        t,
        eta,
        n: overrides.n.or(data_n),
        gamma,
        epsilon: Some(epsilon),
        delta: overrides.delta,
        mode: ScheduleMode::Practical,
        lipschitz: overrides.eta.is_none().then_some(lipschitz),
        early_stop: overrides.early_stop,
    };
    sched.validate()?;
    Ok(sched)
}
