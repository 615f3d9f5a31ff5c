//! Screening with a known edge set: the exact empirical loss and gradient are
//! linear in the moments of `{u} ∪ N_u` through the Walsh expansion of
//! `f_u(tau) = exp(-tau_u (theta_u + sum_v theta_uv tau_v))`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hadamard::fwht;
use crate::model::LocalParams;
use crate::moments::MomentTable;
use crate::optimizer::{ceil_u64, projected_gd, Schedule, ScheduleMode};
use crate::screening::{trace_stride, CouplingEstimate, Diagnostics, EstimateMethod, NodeDiagnostics};
use crate::structure::EdgeSet;

/// Largest neighborhood handled by the Walsh expansion.
pub const MAX_NEIGHBORHOOD: usize = 20;

/// Walsh coefficients of `f_u` over the hypercube on `{u} ∪ N_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshTable {
    pub node: usize,
    pub neighborhood: Vec<usize>,
    /// Sorted `{u} ∪ N_u`; bit `i` of a coefficient index refers to `vars[i]`.
    vars: Vec<usize>,
    coeffs: Vec<f64>,
}

impl WalshTable {
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    /// Coefficient array of length `2^{D+1}`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of the subset `K` (global indices, any order).
    pub fn coefficient(&self, subset: &[usize]) -> Option<f64> {
        let mut mask = 0usize;
        for i in subset {
            mask |= 1 << self.vars.binary_search(i).ok()?;
        }
        Some(self.coeffs[mask])
    }

    /// `sum_K f_K tau_K` at a local configuration mask (bit set = spin -1).
    pub fn reconstruct(&self, local_mask: u64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * crate::hadamard::parity_sign(local_mask, k as u64))
            .sum()
    }

    pub fn l1_mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

/// Local layout shared by the Walsh routines.
struct Frame {
    node: usize,
    neighborhood: Vec<usize>,
    vars: Vec<usize>,
    bit_u: usize,
    bits: Vec<usize>,
}

impl Frame {
    fn new(node: usize, neighborhood: &[usize], p: usize) -> Result<Self> {
        if neighborhood.len() > MAX_NEIGHBORHOOD {
            return Err(Error::invalid(format!(
                "neighborhood of size {} exceeds the cap of {MAX_NEIGHBORHOOD}",
                neighborhood.len()
            )));
        }
        let mut vars = neighborhood.to_vec();
        vars.push(node);
        vars.sort_unstable();
        if vars.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("neighborhood repeats a spin or contains the node"));
        }
        if let Some(&bad) = vars.iter().find(|&&v| v >= p) {
            return Err(Error::IndexOutOfRange { index: bad, p });
        }
        let pos = |v: usize| vars.binary_search(&v).unwrap();
        Ok(Self {
            node,
            neighborhood: neighborhood.to_vec(),
            bit_u: 1 << pos(node),
            bits: neighborhood.iter().map(|&v| 1 << pos(v)).collect(),
            vars,
        })
    }

    fn size(&self) -> usize {
        1 << self.vars.len()
    }

    /// `x = [theta_u, theta_{u, N_u[0]}, ...]` to Walsh coefficients.
    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let size = self.size();
        let mut f = vec![0.0; size];
        for (mask, slot) in f.iter_mut().enumerate() {
            let spin = |bit: usize| if mask & bit == 0 { 1.0 } else { -1.0 };
            let lin: f64 = x[0] + self.bits.iter().zip(&x[1..]).map(|(&b, &t)| t * spin(b)).sum::<f64>();
            *slot = (-spin(self.bit_u) * lin).exp();
        }
        fwht(&mut f);
        let scale = 1.0 / size as f64;
        f.iter_mut().for_each(|c| *c *= scale);
        f
    }

    /// Table moments for every subset of `vars`, indexed by local mask.
    fn moments(&self, table: &MomentTable) -> Result<Vec<f64>> {
        table.record_degree(self.vars.len());
        let mut key = Vec::with_capacity(self.vars.len());
        (0..self.size())
            .map(|mask| {
                key.clear();
                key.extend((0..self.vars.len()).filter(|b| mask >> b & 1 == 1).map(|b| self.vars[b]));
                table.value_sorted(&key)
            })
            .collect()
    }

    /// Gradient `[-E(tau_u f), -E(tau_u tau_v f) ...]` from coefficients and moments.
    fn gradient(&self, coeffs: &[f64], moments: &[f64]) -> Vec<f64> {
        let dot = |shift: usize| -> f64 {
            coeffs.iter().enumerate().map(|(k, c)| c * moments[k ^ shift]).sum()
        };
        let mut g = Vec::with_capacity(self.bits.len() + 1);
        g.push(-dot(self.bit_u));
        for &b in &self.bits {
            g.push(-dot(self.bit_u | b));
        }
        g
    }

    fn local_vector(&self, lp: &LocalParams) -> Vec<f64> {
        let mut x = vec![lp.field];
        x.extend(self.neighborhood.iter().map(|&v| lp.coupling(v)));
        x
    }
}

fn require(table: &MomentTable, degree: usize) -> Result<()> {
    if table.covers(degree) {
        Ok(())
    } else {
        Err(Error::MissingMoment {
            degree,
            table_degree: table.degree(),
        })
    }
}

/// Walsh coefficients of `f_u` for `lp`'s field and its couplings to
/// `neighborhood` (other couplings are ignored).
pub fn walsh_coefficients(lp: &LocalParams, neighborhood: &[usize]) -> Result<WalshTable> {
    let frame = Frame::new(lp.node, neighborhood, lp.p())?;
    let coeffs = frame.coefficients(&frame.local_vector(lp));
    Ok(WalshTable {
        node: frame.node,
        neighborhood: frame.neighborhood,
        vars: frame.vars,
        coeffs,
    })
}

/// `sum_K f_K * E_n[tau_K]`, the empirical screening loss.
pub fn loss_from_moments(wt: &WalshTable, table: &MomentTable) -> Result<f64> {
    let frame = Frame::new(wt.node, &wt.neighborhood, table.p())?;
    require(table, frame.vars.len())?;
    let m = frame.moments(table)?;
    Ok(wt.coeffs.iter().zip(&m).map(|(c, x)| c * x).sum())
}

/// Empirical screening gradient in the layout `[field, couplings to
/// neighborhood[0], neighborhood[1], ...]`.
pub fn gradient_from_moments(lp: &LocalParams, neighborhood: &[usize], table: &MomentTable) -> Result<Vec<f64>> {
    let frame = Frame::new(lp.node, neighborhood, lp.p())?;
    require(table, frame.vars.len())?;
    let m = frame.moments(table)?;
    let coeffs = frame.coefficients(&frame.local_vector(lp));
    Ok(frame.gradient(&coeffs, &m))
}

/// Averaged projected GD per node over `(field, couplings to N_u)`.
pub fn learn_known_structure(
    table: &MomentTable,
    edges: &EdgeSet,
    gamma: f64,
    t: u64,
    eta: f64,
) -> Result<CouplingEstimate> {
    let p = table.p();
    edges.check_range(p)?;
    let schedule = Schedule {
        d: 0,
        t,
        eta,
        n: table.n(),
        gamma,
        epsilon: None,
        delta: None,
        mode: ScheduleMode::Practical,
        lipschitz: None,
        early_stop: None,
    };
    schedule.validate()?;
    require(table, edges.max_degree(p) + 1)?;
    table.reset_query_log();
    let fits: Vec<(LocalParams, NodeDiagnostics)> = (0..p)
        .into_par_iter()
        .map(|u| {
            let frame = Frame::new(u, &edges.neighbors(u), p)?;
            let m = frame.moments(table)?;
            let oracle = |x: &[f64]| Ok(frame.gradient(&frame.coefficients(x), &m));
            let out = projected_gd(
                oracle,
                gamma,
                eta,
                t,
                &vec![0.0; frame.bits.len() + 1],
                &schedule.gd_options(Some(trace_stride(t))),
            )?;
            let mut lp = LocalParams::zero(p, u);
            lp.field = out.average[0];
            for (&v, &x) in frame.neighborhood.iter().zip(&out.average[1..]) {
                lp.set_coupling(v, x);
            }
            Ok((lp, NodeDiagnostics::from_outcome(u, &out)))
        })
        .collect::<Result<_>>()?;
    let (nodes, diags) = fits.into_iter().unzip();
    Ok(CouplingEstimate {
        p,
        nodes,
        schedule,
        method: EstimateMethod::KnownStructure,
        diagnostics: Diagnostics {
            nodes: diags,
            max_moment_degree: table.max_queried_degree(),
        },
        fields_stage2: None,
    })
}

/// Theory schedule for the known-structure estimator with maximum degree `D`:
/// `T = ceil(2^8 (D+1) gamma^2 (1+gamma)^2 e^{8 gamma} / eps^4)`,
/// `L = 2 sqrt(D+1) e^gamma`, `eta = 2 gamma / (L sqrt T)`,
/// `n = ceil(2^{2D+7} gamma^2 (1+gamma)^2 e^{8 gamma} ((D+2) log 2 + log(1/delta)) / eps^4)`.
pub fn schedule_known_theory(max_degree: usize, gamma: f64, epsilon: f64, delta: f64) -> Result<Schedule> {
    if !(gamma > 0.0) || !(epsilon > 0.0) {
        return Err(Error::invalid("gamma and epsilon must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let g = gamma;
    let dd = max_degree as f64;
    let core = g * g * (1.0 + g).powi(2) * (8.0 * g).exp() / epsilon.powi(4);
    let t = ceil_u64(256.0 * (dd + 1.0) * core, "T")?;
    let l = 2.0 * (dd + 1.0).sqrt() * g.exp();
    let eta = 2.0 * g / (l * (t as f64).sqrt());
    let logs = (dd + 2.0) * std::f64::consts::LN_2 + (1.0 / delta).ln();
    let n = ceil_u64(2f64.powf(2.0 * dd + 7.0) * core * logs, "n")?;
    Ok(Schedule {
        d: 0,
        t,
        eta,
        n: Some(n),
        gamma,
        epsilon: Some(epsilon),
        delta: Some(delta),
        mode: ScheduleMode::Theory,
        lipschitz: Some(l),
        early_stop: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{local_energy, IsingModel, SpinConfig};
    use crate::moments::{build_moments, exact_table};
    use crate::rng::SplitMix64;
    use crate::sampling::sample_exact;

    #[test]
    fn zero_params_constant_one() {
        let lp = LocalParams::zero(5, 2);
        let wt = walsh_coefficients(&lp, &[0, 4]).unwrap();
        assert_eq!(wt.coefficients().len(), 8);
        assert!((wt.coefficients()[0] - 1.0).abs() < 1e-15);
        assert!(wt.coefficients()[1..].iter().all(|c| c.abs() < 1e-15));
        let m = IsingModel::new(5).unwrap().with_coupling(0, 2, 0.4).unwrap();
        let t = exact_table(&m, 3).unwrap();
        assert_eq!(loss_from_moments(&wt, &t).unwrap(), 1.0);
    }

    #[test]
    fn inversion_and_parseval() {
        let mut rng = SplitMix64::new(17);
        let mut lp = LocalParams::zero(6, 3);
        lp.field = 0.2;
        let nb = [0, 2, 5];
        for &v in &nb {
            lp.set_coupling(v, rng.uniform(-0.4, 0.4));
        }
        let wt = walsh_coefficients(&lp, &nb).unwrap();
        let mut sq = 0.0;
        for mask in 0..16u64 {
            let mut spins = vec![1i8; 6];
            for (b, &v) in wt.vars().iter().enumerate() {
                if mask >> b & 1 == 1 {
                    spins[v] = -1;
                }
            }
            let f = (-local_energy(&lp, &SpinConfig::new(spins).unwrap()).unwrap()).exp();
            assert!((wt.reconstruct(mask) - f).abs() < 1e-12);
            sq += f * f;
        }
        let parseval: f64 = wt.coefficients().iter().map(|c| c * c).sum();
        assert!((parseval - sq / 16.0).abs() < 1e-12);
        assert!(wt.l1_mass() <= 16.0 * lp.l1_norm().exp());
    }

    #[test]
    fn matches_direct_empirical_average() {
        let m = IsingModel::new(5)
            .unwrap()
            .with_coupling(0, 1, 0.3)
            .unwrap()
            .with_coupling(1, 3, -0.2)
            .unwrap()
            .with_field(1, 0.1)
            .unwrap();
        let data = sample_exact(&m, 3000, 9).unwrap();
        let table = build_moments(&data, 4).unwrap();
        let mut lp = LocalParams::zero(5, 1);
        lp.field = -0.15;
        lp.set_coupling(0, 0.25);
        lp.set_coupling(3, 0.1);
        lp.set_coupling(4, -0.2);
        let nb = [0, 3, 4];
        let wt = walsh_coefficients(&lp, &nb).unwrap();
        let (mut loss, mut g) = (0.0, vec![0.0; 4]);
        for row in data.rows() {
            let cfg = SpinConfig::new(row.to_vec()).unwrap();
            let f = (-local_energy(&lp, &cfg).unwrap()).exp();
            let su = cfg.get(1);
            loss += f;
            g[0] -= su * f;
            for (i, &v) in nb.iter().enumerate() {
                g[i + 1] -= su * cfg.get(v) * f;
            }
        }
        let n = data.n() as f64;
        assert!((loss_from_moments(&wt, &table).unwrap() - loss / n).abs() < 1e-10);
        let got = gradient_from_moments(&lp, &nb, &table).unwrap();
        for (a, b) in got.iter().zip(&g) {
            assert!((a - b / n).abs() < 1e-10);
        }
    }

    #[test]
    fn needs_degree_d_plus_one() {
        let m = IsingModel::new(6).unwrap();
        let edges = EdgeSet::from_pairs([(0, 1), (1, 2)]).unwrap();
        let t = exact_table(&m, 2).unwrap();
        assert!(matches!(
            learn_known_structure(&t, &edges, 1.0, 10, 0.1),
            Err(Error::MissingMoment { degree: 3, table_degree: 2 })
        ));
        let t = exact_table(&m, 3).unwrap();
        let est = learn_known_structure(&t, &edges, 1.0, 10, 0.1).unwrap();
        assert_eq!(est.diagnostics.max_moment_degree, 3);
    }

    #[test]
    fn theory_schedule_identity() {
        let s = schedule_known_theory(2, 0.9, 0.3, 0.05).unwrap();
        let l = s.lipschitz.unwrap();
        assert!((s.eta * l * (s.t as f64).sqrt() - 1.8).abs() < 1e-12);
    }
}
