//! Numerical checks of the approximation, curvature, and optimization bounds
//! the estimators rely on. Each check produces a [`CheckReport`].

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::generate::{generate_model, GeneratorSpec, Topology};
use crate::model::{l1_width, Enumeration, IsingModel, LocalParams};
use crate::moments::{exact_table_from, MomentTable};
use crate::optimizer::{degree_for_error, project_l1, projected_gd, robust_gd_schedule, GdOptions};
use crate::polyexpand::approx_gradient;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub parameters: Value,
    pub observed: f64,
    pub bound: f64,
    /// Slack allowed on top of `bound` for floating-point error.
    pub tolerance: f64,
    /// `None` for report-only runs outside a bound's hypotheses.
    pub pass: Option<bool>,
    pub runtime_secs: f64,
    #[serde(default)]
    pub details: Value,
}

impl CheckReport {
    fn new(name: &str, parameters: Value, observed: f64, bound: f64, tolerance: f64, started: Instant) -> Self {
        Self {
            name: name.to_string(),
            parameters,
            observed,
            bound,
            tolerance,
            pass: Some(observed <= bound + tolerance),
            runtime_secs: started.elapsed().as_secs_f64(),
            details: Value::Null,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn passed(&self) -> bool {
        self.pass != Some(false)
    }
}

/// Degree-`d` Taylor polynomial of `exp(-x)`.
pub fn taylor_exp_neg(x: f64, d: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=d {
        term *= -x / k as f64;
        sum += term;
    }
    sum
}

/// `(e gamma / (d+1))^{d+1}`.
pub fn taylor_tail_bound(gamma: f64, d: usize) -> f64 {
    let d1 = (d + 1) as f64;
    (std::f64::consts::E * gamma / d1).powf(d1)
}

/// Max over a uniform grid on `[-gamma, gamma]` of the Taylor remainder,
/// against `(e gamma / (d+1))^{d+1}`.
pub fn check_poly_bound(gamma: f64, d: usize, grid_size: usize) -> CheckReport {
    let started = Instant::now();
    let n = grid_size.max(2);
    let observed = (0..n)
        .map(|i| {
            let x = -gamma + 2.0 * gamma * i as f64 / (n - 1) as f64;
            ((-x).exp() - taylor_exp_neg(x, d)).abs()
        })
        .fold(0.0, f64::max);
    CheckReport::new(
        "poly_bound",
        json!({"gamma": gamma, "d": d, "grid_size": n}),
        observed,
        taylor_tail_bound(gamma, d),
        0.0,
        started,
    )
}

/// `g(x) = e^{-x} - 1 + x`.
pub fn g_fn(x: f64) -> f64 {
    (-x).exp_m1() + x
}

/// `g(x) >= x^2 / (2 + |x|)` on random points of `[-20, 20]` plus edge cases.
/// Observed value is the largest `x^2/(2+|x|) - g(x)`.
pub fn check_g_inequality(sample_count: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = SplitMix64::new(seed);
    let mut xs = vec![0.0, 1e-12, -1e-12, 1e-6, -1e-6, 1.0, -1.0, 20.0, -20.0];
    xs.extend((0..sample_count).map(|_| rng.uniform(-20.0, 20.0)));
    let (mut worst, mut at) = (f64::NEG_INFINITY, 0.0);
    for &x in &xs {
        let gap = x * x / (2.0 + x.abs()) - g_fn(x);
        if gap > worst {
            worst = gap;
            at = x;
        }
    }
    CheckReport::new(
        "g_inequality",
        json!({"samples": xs.len(), "seed": seed}),
        worst,
        0.0,
        1e-15,
        started,
    )
    .with_details(json!({"worst_x": at}))
}

/// `P(Poisson(b) >= a)` by direct summation from `k = a`.
pub fn poisson_tail(b: f64, a: u64) -> f64 {
    if b == 0.0 {
        return if a == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=a).map(|k| (k as f64).ln()).sum();
    let mut term = (-b + a as f64 * b.ln() - ln_fact).exp();
    let mut sum = 0.0;
    let mut k = a;
    loop {
        sum += term;
        k += 1;
        term *= b / k as f64;
        if term < 1e-18 * sum || term == 0.0 {
            return sum;
        }
    }
}

/// `e^{-b} (e b / a)^a`.
pub fn poisson_chernoff(b: f64, a: u64) -> f64 {
    let af = a as f64;
    (-b).exp() * (std::f64::consts::E * b / af).powf(af)
}

/// Exact tail against the Chernoff bound for every integer `a` in
/// `a_min..=a_max`; all must exceed `b`. Observed value is the largest
/// `tail - bound`.
pub fn check_poisson_tail(b: f64, a_min: u64, a_max: u64) -> Result<CheckReport> {
    let started = Instant::now();
    if !(b >= 0.0) || (a_min as f64) <= b {
        return Err(Error::invalid(format!("need integer a > b, got a = {a_min}, b = {b}")));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut rows = Vec::new();
    for a in a_min..=a_max {
        let tail = poisson_tail(b, a);
        let bound = poisson_chernoff(b, a);
        worst = worst.max(tail - bound);
        rows.push(json!([a, tail, bound]));
    }
    Ok(CheckReport::new(
        "poisson_tail",
        json!({"b": b, "a_min": a_min, "a_max": a_max}),
        worst,
        0.0,
        0.0,
        started,
    )
    .with_details(json!({"a_tail_bound": rows})))
}

fn random_in_ball(rng: &mut SplitMix64, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    let r = radius * rng.next_f64();
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x * r / norm).collect()
}

/// Second-order remainders of the exact screening loss at the truth.
///
/// For random feasible `theta_hat` (ℓ1 ≤ width of the model):
/// `dL >= e^{-3 gamma} / (2 + 2 gamma) * max_v |theta_hat_uv - theta*_uv|^2`, and
/// for the one-dimensional field objective with true couplings,
/// `dR >= e^{-gamma} / (2 + 2 gamma) * (theta - theta*_u)^2` on `[-gamma, gamma]`.
/// Observed value is the largest `rhs - lhs`.
pub fn check_curvature(model: &IsingModel, trials: usize, seed: u64) -> Result<CheckReport> {
    let started = Instant::now();
    let en = Enumeration::new(model)?;
    let p = model.p();
    let gamma = l1_width(model).max(1e-3);
    let mut rng = SplitMix64::new(seed);
    let cl = (-3.0 * gamma).exp() / (2.0 + 2.0 * gamma);
    let cf = (-gamma).exp() / (2.0 + 2.0 * gamma);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let u = rng.below(p as u64) as usize;
        let truth = model.local_params(u);
        let x_star = truth.to_vec();
        let l_star = en.is_loss(&truth)?;
        let g_star = en.is_gradient(&truth)?;

        let x_hat = if trial % 4 == 3 && p > 1 {
            // single-coordinate perturbation kept inside the ball
            let mut x = x_star.clone();
            let slot = 1 + rng.below((p - 1) as u64) as usize;
            x[slot] += rng.uniform(-gamma, gamma);
            project_l1(&x, gamma)?
        } else {
            random_in_ball(&mut rng, p, gamma)
        };
        let hat = LocalParams::from_vec(u, &x_hat);
        let lin: f64 = g_star.iter().zip(x_hat.iter().zip(&x_star)).map(|(g, (a, b))| g * (a - b)).sum();
        let dl = en.is_loss(&hat)? - l_star - lin;
        let max_dc = x_hat[1..]
            .iter()
            .zip(&x_star[1..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(cl * max_dc * max_dc - dl);

        let mut field_hat = truth.clone();
        field_hat.field = rng.uniform(-gamma, gamma);
        let dh = field_hat.field - truth.field;
        let dr = en.is_loss(&field_hat)? - l_star - g_star[0] * dh;
        worst = worst.max(cf * dh * dh - dr);
    }
    Ok(CheckReport::new(
        "curvature",
        json!({"p": p, "gamma": gamma, "trials": trials, "seed": seed}),
        worst,
        0.0,
        1e-12,
        started,
    ))
}

/// Sup over random `theta` with `||theta||_1 <= gamma` of
/// `||approx_gradient - exact gradient||_inf`, against the Taylor remainder
/// bound at `||theta||_1`, plus (for sampled tables) the measured statistical
/// error `||approx(table) - approx(exact table)||_inf`. Observed value is the
/// largest `deviation - bound`.
pub fn check_gradient_deviation(
    model: &IsingModel,
    table: &MomentTable,
    d: usize,
    trials: usize,
    gamma: f64,
    seed: u64,
) -> Result<CheckReport> {
    let started = Instant::now();
    let en = Enumeration::new(model)?;
    let p = model.p();
    let oracle = match table.n() {
        Some(_) => Some(exact_table_from(&en, table.degree().min(p))?),
        None => None,
    };
    let mut rng = SplitMix64::new(seed);
    let (mut worst, mut max_dev) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..trials {
        let u = rng.below(p as u64) as usize;
        let lp = LocalParams::from_vec(u, &random_in_ball(&mut rng, p, gamma));
        let approx = approx_gradient(&lp, d, table)?;
        let exact = en.is_gradient(&lp)?;
        let dev = approx.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut bound = taylor_tail_bound(lp.l1_norm(), d);
        if let Some(t) = &oracle {
            let clean = approx_gradient(&lp, d, t)?;
            bound += approx.iter().zip(&clean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        }
        max_dev = max_dev.max(dev);
        worst = worst.max(dev - bound);
    }
    Ok(CheckReport::new(
        "gradient_deviation",
        json!({"p": p, "d": d, "trials": trials, "gamma": gamma, "sampled": table.n().is_some(), "seed": seed}),
        worst,
        0.0,
        1e-13,
        started,
    )
    .with_details(json!({"max_deviation": max_dev})))
}

/// `max_u ||exact gradient at the true local parameters||_inf <= 1e-12`.
pub fn check_screening_identity(model: &IsingModel) -> Result<CheckReport> {
    let started = Instant::now();
    let en = Enumeration::new(model)?;
    let mut worst = 0.0f64;
    for u in 0..model.p() {
        let g = en.is_gradient(&model.local_params(u))?;
        worst = g.iter().fold(worst, |m, x| m.max(x.abs()));
    }
    Ok(CheckReport::new(
        "screening_identity",
        json!({"p": model.p(), "gamma": l1_width(model)}),
        worst,
        1e-12,
        0.0,
        started,
    ))
}

/// Averaged projected GD on `f(x) = sum_i a_i (x_i - x*_i)^2 / 2` with
/// `a_i` in `[0.5, 1.5]`, `x*` inside the ball, and an adversarial oracle
/// error of ∞-norm `noise_factor * eps / (4 gamma)` opposing progress.
/// Step size and `T` follow the robust GD schedule. With `noise_factor > 1`
/// the bound does not apply and the report carries no pass claim.
pub fn check_robust_gd(dimension: usize, gamma: f64, epsilon: f64, seeds: u64, noise_factor: f64) -> Result<CheckReport> {
    let started = Instant::now();
    let budget = noise_factor * epsilon / (4.0 * gamma);
    let lipschitz = 2.0 * gamma * 1.5 + (dimension as f64).sqrt() * budget;
    let (t, eta) = robust_gd_schedule(gamma, lipschitz, epsilon)?;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = SplitMix64::new(seed);
        let a: Vec<f64> = (0..dimension).map(|_| rng.uniform(0.5, 1.5)).collect();
        let target = random_in_ball(&mut rng, dimension, gamma);
        let oracle = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(x.iter()
                .zip(&target)
                .zip(&a)
                .map(|((xi, ti), ai)| ai * (xi - ti) - budget * (xi - ti).signum())
                .collect())
        };
        let out = projected_gd(oracle, gamma, eta, t, &vec![0.0; dimension], &GdOptions::default())?;
        let gap: f64 = out
            .average
            .iter()
            .zip(&target)
            .zip(&a)
            .map(|((x, s), ai)| 0.5 * ai * (x - s).powi(2))
            .sum();
        worst = worst.max(gap);
    }
    let mut report = CheckReport::new(
        "robust_gd",
        json!({"dimension": dimension, "gamma": gamma, "epsilon": epsilon, "seeds": seeds, "noise_factor": noise_factor, "T": t, "eta": eta}),
        worst,
        epsilon,
        0.0,
        started,
    );
    if noise_factor > 1.0 {
        report.pass = None;
    }
    Ok(report)
}

/// Random model with `2 <= p <= p_max` on an Erdős–Rényi graph, width `gamma`.
pub fn random_model(rng: &mut SplitMix64, p_max: usize, gamma: f64) -> Result<IsingModel> {
    let p = 2 + rng.below((p_max - 1) as u64) as usize;
    let mut spec = GeneratorSpec::new(p, Topology::Er, gamma, 0.0, rng.next_u64());
    spec.degree = 2;
    generate_model(&spec)
}

pub const SUITES: &[&str] = &[
    "poly_bound",
    "g_inequality",
    "poisson_tail",
    "curvature",
    "gradient_deviation",
    "screening_identity",
    "robust_gd",
];

/// Runs a named check family at desk-scale defaults, or every family for `"all"`.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CheckReport>> {
    if name == "all" {
        let mut out = Vec::new();
        for s in SUITES {
            out.extend(run_suite(s, seed)?);
        }
        return Ok(out);
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    match name {
        "poly_bound" => {
            for gamma in [0.5, 1.0, 2.0] {
                let d = degree_for_error(gamma, 0.5 * gamma)?;
                out.push(check_poly_bound(gamma, d, 10_000));
            }
        }
        "g_inequality" => out.push(check_g_inequality(100_000, seed)),
        "poisson_tail" => {
            for b in [0.5f64, 1.0, 2.0, 4.0] {
                let a_min = b.floor() as u64 + 1;
                out.push(check_poisson_tail(b, a_min, (b + 20.0).floor() as u64)?);
            }
        }
        "curvature" => {
            for _ in 0..10 {
                let gamma = rng.uniform(0.2, 1.5);
                let m = random_model(&mut rng, 6, gamma)?;
                out.push(check_curvature(&m, 10, rng.next_u64())?);
            }
        }
        "gradient_deviation" => {
            for _ in 0..5 {
                let gamma = rng.uniform(0.2, 1.0);
                let m = random_model(&mut rng, 6, gamma)?;
                let t = exact_table_from(&Enumeration::new(&m)?, m.p())?;
                out.push(check_gradient_deviation(&m, &t, 30, 10, gamma, rng.next_u64())?);
            }
        }
        "screening_identity" => {
            for _ in 0..20 {
                let gamma = rng.uniform(0.1, 2.0);
                out.push(check_screening_identity(&random_model(&mut rng, 8, gamma)?)?);
            }
        }
        "robust_gd" => {
            out.push(check_robust_gd(10, 1.0, 0.1, 50, 0.0)?);
            out.push(check_robust_gd(10, 1.0, 0.1, 50, 1.0)?);
            out.push(check_robust_gd(10, 1.0, 0.1, 10, 10.0)?);
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown suite {other:?}; expected all or one of {}",
                SUITES.join(", ")
            )))
        }
    }
    Ok(out)
}

/// Plain-text table of reports.
pub fn format_table(reports: &[CheckReport]) -> String {
    let mut s = format!(
        "{:<20} {:>14} {:>14} {:>6} {:>9}\n",
        "check", "observed", "bound", "pass", "secs"
    );
    for r in reports {
        let pass = match r.pass {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "-",
        };
        s.push_str(&format!(
            "{:<20} {:>14.6e} {:>14.6e} {:>6} {:>9.3}\n",
            r.name, r.observed, r.bound, pass, r.runtime_secs
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_bound_examples() {
        let r = check_poly_bound(1.0, 7, 10_000);
        assert!((r.bound - (std::f64::consts::E / 8.0).powi(8)).abs() < 1e-18);
        assert_eq!(r.pass, Some(true));
        let r = check_poly_bound(0.0, 3, 100);
        assert_eq!(r.observed, 0.0);
        let mut prev = f64::INFINITY;
        for d in 0..20 {
            let r = check_poly_bound(1.5, d, 1000);
            assert!(r.observed <= prev);
            prev = r.observed;
        }
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_fn(0.0), 0.0);
        assert!(g_fn(1.0) >= 1.0 / 3.0);
        assert!((g_fn(-1.0) - (std::f64::consts::E - 2.0)).abs() < 1e-15);
        assert_eq!(check_g_inequality(1000, 1).pass, Some(true));
    }

    #[test]
    fn poisson_examples() {
        let e1 = (-1.0f64).exp();
        assert!((poisson_tail(1.0, 2) - (1.0 - 2.0 * e1)).abs() < 1e-15);
        assert!((poisson_chernoff(1.0, 2) - e1 * (std::f64::consts::E / 2.0).powi(2)).abs() < 1e-15);
        assert_eq!(poisson_tail(0.0, 1), 0.0);
        assert!(check_poisson_tail(2.0, 2, 5).is_err());
        assert_eq!(check_poisson_tail(2.0, 3, 22).unwrap().pass, Some(true));
    }

    #[test]
    fn identity_and_curvature_on_small_models() {
        let zero = IsingModel::new(3).unwrap();
        assert_eq!(check_screening_identity(&zero).unwrap().observed, 0.0);
        let m = IsingModel::new(3)
            .unwrap()
            .with_coupling(0, 1, 0.7)
            .unwrap()
            .with_coupling(1, 2, -0.6)
            .unwrap()
            .with_field(1, 0.4)
            .unwrap();
        assert_eq!(check_screening_identity(&m).unwrap().pass, Some(true));
        assert_eq!(check_curvature(&m, 50, 2).unwrap().pass, Some(true));
    }

    #[test]
    fn conditional_variance_floor() {
        for i in 0..=100 {
            let g = 3.0 * i as f64 / 100.0;
            assert!(1.0 - g.tanh().powi(2) >= (-2.0 * g).exp());
        }
    }

    #[test]
    fn robust_gd_report_only_above_budget() {
        let r = check_robust_gd(3, 1.0, 0.2, 2, 10.0).unwrap();
        assert_eq!(r.pass, None);
        assert!(r.passed());
    }

    #[test]
    fn unknown_suite() {
        assert!(run_suite("nope", 0).is_err());
    }
}
