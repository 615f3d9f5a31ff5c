//! Sparse multilinear polynomials over ±1 spins and the degree-`d` Taylor
//! surrogate of the screening weight `exp(-E_u)`.
//!
//! Powers of the local linear form are expanded by repeated multiplication
//! with `sigma_i^2 = 1` reduction after every product. This yields the same
//! coefficients as summing multinomial terms over all exponent vectors of
//! total degree `k`, but only ever stores reduced monomials.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{LocalParams, SpinConfig};
use crate::moments::{MomentTable, MonomialKey};

/// Coefficients with magnitude below this are dropped after each product.
pub const DROP_TOLERANCE: f64 = 1e-15;

/// Polynomials over at most this many variables use a dense coefficient array.
const DENSE_MAX_VARS: usize = 12;

/// `constant + sum_i coeff_i * sigma_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn new(constant: f64, terms: Vec<(usize, f64)>) -> Self {
        Self { constant, terms }
    }

    /// `h + sum_{v != u} J_v sigma_v`, keeping only nonzero couplings.
    pub fn from_local(lp: &LocalParams) -> Self {
        Self {
            constant: lp.field,
            terms: lp.couplings().filter(|&(_, x)| x != 0.0).collect(),
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|(_, x)| x.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Coeffs {
    Dense(Vec<f64>),
    Sparse(BTreeMap<u64, f64>),
}

/// Multilinear polynomial `sum_K c_K prod_{i in K} sigma_i` over a fixed,
/// sorted list of at most 64 spin variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearPoly {
    vars: Vec<usize>,
    coeffs: Coeffs,
}

impl MultilinearPoly {
    /// The constant polynomial `c` over the given variables.
    pub fn constant(vars: &[usize], c: f64) -> Result<Self> {
        let mut vars = vars.to_vec();
        vars.sort_unstable();
        vars.dedup();
        if vars.len() > 64 {
            return Err(Error::SupportTooLarge(vars.len()));
        }
        let mut poly = Self {
            coeffs: Self::zero_coeffs(vars.len()),
            vars,
        };
        if c.abs() >= DROP_TOLERANCE {
            poly.add_mask(0, c);
        }
        Ok(poly)
    }

    fn zero_coeffs(nvars: usize) -> Coeffs {
        if nvars <= DENSE_MAX_VARS {
            Coeffs::Dense(vec![0.0; 1 << nvars])
        } else {
            Coeffs::Sparse(BTreeMap::new())
        }
    }

    fn add_mask(&mut self, mask: u64, c: f64) {
        match &mut self.coeffs {
            Coeffs::Dense(v) => v[mask as usize] += c,
            Coeffs::Sparse(m) => *m.entry(mask).or_insert(0.0) += c,
        }
    }

    fn prune(&mut self) {
        match &mut self.coeffs {
            Coeffs::Dense(v) => {
                for c in v.iter_mut() {
                    if c.abs() < DROP_TOLERANCE {
                        *c = 0.0;
                    }
                }
            }
            Coeffs::Sparse(m) => m.retain(|_, c| c.abs() >= DROP_TOLERANCE),
        }
    }

    /// Nonzero `(local mask, coefficient)` pairs in ascending mask order.
    fn for_each(&self, mut f: impl FnMut(u64, f64)) {
        match &self.coeffs {
            Coeffs::Dense(v) => {
                for (m, &c) in v.iter().enumerate() {
                    if c != 0.0 {
                        f(m as u64, c);
                    }
                }
            }
            Coeffs::Sparse(map) => {
                for (&m, &c) in map {
                    f(m, c);
                }
            }
        }
    }

    fn bit_of(&self, var: usize) -> Option<u64> {
        self.vars.binary_search(&var).ok().map(|pos| 1u64 << pos)
    }

    fn key_of(&self, mask: u64) -> MonomialKey {
        let idx = (0..self.vars.len())
            .filter(|&b| mask >> b & 1 == 1)
            .map(|b| self.vars[b])
            .collect();
        MonomialKey::new(idx).expect("distinct variables")
    }

    /// Re-expresses the polynomial over a superset of its variables.
    fn widen(&self, extra: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut vars = self.vars.clone();
        vars.extend(extra);
        vars.sort_unstable();
        vars.dedup();
        if vars.len() == self.vars.len() {
            return Ok(self.clone());
        }
        let mut out = Self::constant(&vars, 0.0)?;
        let bits: Vec<u64> = self.vars.iter().map(|&v| out.bit_of(v).unwrap()).collect();
        self.for_each(|m, c| {
            let wide = (0..bits.len())
                .filter(|&b| m >> b & 1 == 1)
                .fold(0u64, |acc, b| acc | bits[b]);
            out.add_mask(wide, c);
        });
        Ok(out)
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    /// Nonzero terms as `(key, coefficient)`.
    pub fn terms(&self) -> Vec<(MonomialKey, f64)> {
        let mut out = Vec::new();
        self.for_each(|m, c| out.push((self.key_of(m), c)));
        out
    }

    pub fn num_terms(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _| n += 1);
        n
    }

    pub fn coefficient(&self, key: &MonomialKey) -> f64 {
        let mut mask = 0u64;
        for &i in key.indices() {
            match self.bit_of(i) {
                Some(b) => mask |= b,
                None => return 0.0,
            }
        }
        match &self.coeffs {
            Coeffs::Dense(v) => v[mask as usize],
            Coeffs::Sparse(m) => m.get(&mask).copied().unwrap_or(0.0),
        }
    }

    /// Largest monomial degree with a nonzero coefficient.
    pub fn degree(&self) -> usize {
        let mut d = 0;
        self.for_each(|m, _| d = d.max(m.count_ones() as usize));
        d
    }

    /// Sum of absolute coefficients.
    pub fn l1_mass(&self) -> f64 {
        let mut s = 0.0;
        self.for_each(|_, c| s += c.abs());
        s
    }

    pub fn evaluate(&self, config: &SpinConfig) -> f64 {
        let mut neg = 0u64;
        for (b, &v) in self.vars.iter().enumerate() {
            if config.get(v) < 0.0 {
                neg |= 1 << b;
            }
        }
        let mut s = 0.0;
        self.for_each(|m, c| s += c * crate::hadamard::parity_sign(neg, m));
        s
    }

    pub fn scale(&mut self, factor: f64) {
        match &mut self.coeffs {
            Coeffs::Dense(v) => v.iter_mut().for_each(|c| *c *= factor),
            Coeffs::Sparse(m) => m.values_mut().for_each(|c| *c *= factor),
        }
        self.prune();
    }

    /// Adds `other` (same or narrower variable set) into `self`.
    pub fn add_assign(&mut self, other: &MultilinearPoly) -> Result<()> {
        let other = if other.vars == self.vars {
            other.clone()
        } else {
            *self = self.widen(other.vars.iter().copied())?;
            other.widen(self.vars.iter().copied())?
        };
        other.for_each(|m, c| self.add_mask(m, c));
        self.prune();
        Ok(())
    }

    /// Multiplies by a single spin `sigma_var` (toggles it in every monomial).
    pub fn mul_spin(&self, var: usize) -> Result<Self> {
        let base = self.widen([var])?;
        let bit = base.bit_of(var).unwrap();
        let mut out = Self::constant(&base.vars, 0.0)?;
        base.for_each(|m, c| out.add_mask(m ^ bit, c));
        Ok(out)
    }

    /// `self * lf` with every product monomial parity-reduced and like terms
    /// combined.
    pub fn mul_linear_reduce(&self, lf: &LinearForm) -> Result<Self> {
        let base = self.widen(lf.terms.iter().map(|&(v, _)| v))?;
        let bits: Vec<(u64, f64)> = lf
            .terms
            .iter()
            .filter(|&&(_, x)| x != 0.0)
            .map(|&(v, x)| (base.bit_of(v).unwrap(), x))
            .collect();
        let mut out = Self::constant(&base.vars, 0.0)?;
        base.for_each(|m, c| {
            if lf.constant != 0.0 {
                out.add_mask(m, c * lf.constant);
            }
            for &(b, x) in &bits {
                out.add_mask(m ^ b, c * x);
            }
        });
        out.prune();
        Ok(out)
    }
}

/// Support variables of the surrogate for node `u`: `u` plus every spin with
/// a nonzero coupling.
fn surrogate_vars(lp: &LocalParams) -> Vec<usize> {
    let mut vars = lp.support();
    vars.push(lp.node);
    vars.sort_unstable();
    vars
}

/// `Q(sigma) = sum_{k <= d} (-1)^k / k! * (sigma_u * lf(sigma))^k`, built by
/// `P_0 = 1`, `P_k = P_{k-1} * (sigma_u lf) * (-1/k)`, `Q = sum_k P_k`.
pub fn taylor_screen_poly(lp: &LocalParams, d: usize) -> Result<MultilinearPoly> {
    let lf = LinearForm::from_local(lp);
    let vars = surrogate_vars(lp);
    let mut term = MultilinearPoly::constant(&vars, 1.0)?;
    let mut q = term.clone();
    for k in 1..=d {
        term = term.mul_linear_reduce(&lf)?.mul_spin(lp.node)?;
        term.scale(-1.0 / k as f64);
        q.add_assign(&term)?;
    }
    Ok(q)
}

/// Moment degree an order-`d` coupling gradient touches: `d + 2 - (d mod 2)`.
pub fn coupling_moment_degree(d: usize) -> usize {
    d + 2 - d % 2
}

/// Moment degree an order-`d` field gradient touches: `d + 1 - (d mod 2)`.
pub fn field_moment_degree(d: usize) -> usize {
    d + 1 - d % 2
}

/// Sorted symmetric difference of a sorted list with `{v}`, written to `out`.
fn toggle_into(sorted: &[usize], v: usize, out: &mut Vec<usize>) {
    out.clear();
    match sorted.binary_search(&v) {
        Ok(pos) => {
            out.extend_from_slice(&sorted[..pos]);
            out.extend_from_slice(&sorted[pos + 1..]);
        }
        Err(pos) => {
            out.extend_from_slice(&sorted[..pos]);
            out.push(v);
            out.extend_from_slice(&sorted[pos..]);
        }
    }
}

/// Contracts `sigma_u Q` (and, when `couplings` is set, `sigma_u sigma_v Q`
/// for every `v != u`) against the table. Returns `E_n[sigma_u Q]` followed
/// by `E_n[sigma_u sigma_v Q]` in the `LocalParams` layout, plus the largest
/// reduced degree queried.
fn contract(
    q: &MultilinearPoly,
    u: usize,
    p: usize,
    table: &MomentTable,
    couplings: bool,
) -> Result<(Vec<f64>, usize)> {
    let width = if couplings { p } else { 1 };
    let mut acc = vec![0.0; width];
    let mut max_deg = 0usize;
    let mut key = Vec::with_capacity(q.vars.len() + 2);
    let mut with_u = Vec::with_capacity(q.vars.len() + 2);
    let mut with_v = Vec::with_capacity(q.vars.len() + 2);
    let mut err = None;
    q.for_each(|m, c| {
        if err.is_some() {
            return;
        }
        key.clear();
        key.extend((0..q.vars.len()).filter(|&b| m >> b & 1 == 1).map(|b| q.vars[b]));
        toggle_into(&key, u, &mut with_u);
        max_deg = max_deg.max(with_u.len());
        match table.value_sorted(&with_u) {
            Ok(val) => acc[0] += c * val,
            Err(e) => {
                err = Some(e);
                return;
            }
        }
        if couplings {
            let mut slot = 1;
            for v in (0..p).filter(|&v| v != u) {
                toggle_into(&with_u, v, &mut with_v);
                max_deg = max_deg.max(with_v.len());
                match table.value_sorted(&with_v) {
                    Ok(val) => acc[slot] += c * val,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                }
                slot += 1;
            }
        }
    });
    table.record_degree(max_deg);
    match err {
        Some(e) => Err(e),
        None => Ok((acc, max_deg)),
    }
}

fn require_degree(table: &MomentTable, needed: usize) -> Result<()> {
    if table.covers(needed) {
        Ok(())
    } else {
        Err(Error::MissingMoment {
            degree: needed,
            table_degree: table.degree(),
        })
    }
}

/// Moment-based approximate gradient of the screening loss at `lp`:
/// `-E_n[sigma_u Q]` for the field and `-E_n[sigma_u sigma_v Q]` for each
/// coupling, in the `LocalParams` layout.
pub fn approx_gradient(lp: &LocalParams, d: usize, table: &MomentTable) -> Result<Vec<f64>> {
    if table.p() != lp.p() {
        return Err(Error::DimensionMismatch {
            expected: table.p(),
            found: lp.p(),
        });
    }
    require_degree(table, coupling_moment_degree(d))?;
    let q = taylor_screen_poly(lp, d)?;
    let (mut g, _) = contract(&q, lp.node, lp.p(), table, true)?;
    g.iter_mut().for_each(|x| *x = -*x);
    Ok(g)
}

/// Field-only contraction: approximate `dR/dtheta = -E_n[sigma_u Q]` for the
/// surrogate built from `lp`.
pub(crate) fn approx_field_derivative(lp: &LocalParams, d: usize, table: &MomentTable) -> Result<f64> {
    require_degree(table, field_moment_degree(d))?;
    let q = taylor_screen_poly(lp, d)?;
    let (acc, _) = contract(&q, lp.node, lp.p(), table, false)?;
    Ok(-acc[0])
}
