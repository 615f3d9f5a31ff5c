//! Ising model parameters, energies, and the brute-force enumeration oracle.
//!
//! The Gibbs measure is `mu(sigma) ∝ exp(E(sigma))` with
//! `E(sigma) = sum_{u<v} J_uv sigma_u sigma_v + sum_u h_u sigma_u`: every
//! stored pair enters the exponent once. Under this convention the single-site
//! conditional is `P(sigma_u = +1 | rest) = (1 + tanh(h_u + sum_v J_uv sigma_v)) / 2`,
//! the local energy `E_u = sigma_u (h_u + sum_v J_uv sigma_v)` is exactly the
//! conditional exponent, and the interaction screening loss is minimized at
//! the stored parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MonomialKey;

/// Largest `p` accepted by the enumeration oracle (table of `2^p` doubles).
pub const ENUMERATION_CAP: usize = 24;

/// A configuration of `p` spins, each exactly `-1` or `+1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!("spin value {bad} is not ±1")));
        }
        Ok(Self(spins))
    }

    /// Decode a bitmask configuration: bit `i` set means `sigma_i = -1`.
    pub fn from_mask(mask: u64, p: usize) -> Self {
        Self((0..p).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s < 0)
            .fold(0u64, |m, (i, _)| m | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i] as f64
    }
}

/// Provenance attached to a model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// Ground-truth parameters over `p` spins. Couplings are stored once per
/// unordered pair under the canonical key `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    p: usize,
    couplings: BTreeMap<(usize, usize), f64>,
    fields: Vec<f64>,
    pub meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    p: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    #[serde(default)]
    meta: ModelMeta,
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl IsingModel {
    /// The zero model on `p` spins.
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("p must be positive"));
        }
        Ok(Self {
            p,
            couplings: BTreeMap::new(),
            fields: vec![0.0; p],
            meta: ModelMeta::default(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.p {
            Err(Error::IndexOutOfRange { index: i, p: self.p })
        } else {
            Ok(())
        }
    }

    /// Sets `J_uv`; a zero value removes the pair.
    pub fn set_coupling(&mut self, u: usize, v: usize, value: f64) -> Result<()> {
        self.check_index(u)?;
        self.check_index(v)?;
        if u == v {
            return Err(Error::invalid(format!("self-coupling ({u}, {u})")));
        }
        if !value.is_finite() {
            return Err(Error::invalid("coupling must be finite"));
        }
        if value == 0.0 {
            self.couplings.remove(&canonical(u, v));
        } else {
            self.couplings.insert(canonical(u, v), value);
        }
        Ok(())
    }

    pub fn set_field(&mut self, u: usize, value: f64) -> Result<()> {
        self.check_index(u)?;
        if !value.is_finite() {
            return Err(Error::invalid("field must be finite"));
        }
        self.fields[u] = value;
        Ok(())
    }

    pub fn with_coupling(mut self, u: usize, v: usize, value: f64) -> Result<Self> {
        self.set_coupling(u, v, value)?;
        Ok(self)
    }

    pub fn with_field(mut self, u: usize, value: f64) -> Result<Self> {
        self.set_field(u, value)?;
        Ok(self)
    }

    pub fn coupling(&self, u: usize, v: usize) -> f64 {
        self.couplings.get(&canonical(u, v)).copied().unwrap_or(0.0)
    }

    pub fn field(&self, u: usize) -> f64 {
        self.fields[u]
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// Nonzero couplings in canonical `(u, v, value)` order.
    pub fn couplings(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.couplings.iter().map(|(&(u, v), &x)| (u, v, x))
    }

    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        (0..self.p)
            .filter(|&v| v != u && self.coupling(u, v) != 0.0)
            .collect()
    }

    /// Per-node adjacency lists `(neighbor, J_uv)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.p];
        for (u, v, x) in self.couplings() {
            adj[u].push((v, x));
            adj[v].push((u, x));
        }
        adj
    }

    /// True local parameter vector of node `u`.
    pub fn local_params(&self, u: usize) -> LocalParams {
        let mut lp = LocalParams::zero(self.p, u);
        lp.field = self.fields[u];
        for v in (0..self.p).filter(|&v| v != u) {
            lp.set_coupling(v, self.coupling(u, v));
        }
        lp
    }

    pub fn scale(&mut self, factor: f64) {
        for x in self.couplings.values_mut() {
            *x *= factor;
        }
        for h in &mut self.fields {
            *h *= factor;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            p: self.p,
            couplings: self.couplings().collect(),
            fields: self.fields.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.fields.len() != file.p {
            return Err(Error::schema(format!(
                "fields has length {}, expected p = {}",
                file.fields.len(),
                file.p
            )));
        }
        let mut model = Self::new(file.p).map_err(|e| Error::schema(e.to_string()))?;
        for (u, v, x) in file.couplings {
            if u >= v {
                return Err(Error::schema(format!("coupling ({u}, {v}) is not canonical u < v")));
            }
            model
                .set_coupling(u, v, x)
                .map_err(|e| Error::schema(e.to_string()))?;
        }
        for (u, h) in file.fields.into_iter().enumerate() {
            model.set_field(u, h).map_err(|e| Error::schema(e.to_string()))?;
        }
        model.meta = file.meta;
        Ok(model)
    }
}

/// Per-node optimization variable: the field `h_u` and the couplings
/// `J_uv` for every `v != u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalParams {
    pub node: usize,
    pub field: f64,
    couplings: Vec<f64>,
}

impl LocalParams {
    pub fn zero(p: usize, node: usize) -> Self {
        assert!(node < p, "node {node} out of range for p = {p}");
        Self {
            node,
            field: 0.0,
            couplings: vec![0.0; p - 1],
        }
    }

    pub fn p(&self) -> usize {
        self.couplings.len() + 1
    }

    fn slot(&self, v: usize) -> usize {
        assert_ne!(v, self.node, "no self-coupling slot");
        if v < self.node {
            v
        } else {
            v - 1
        }
    }

    fn spin_of_slot(&self, slot: usize) -> usize {
        if slot < self.node {
            slot
        } else {
            slot + 1
        }
    }

    pub fn coupling(&self, v: usize) -> f64 {
        self.couplings[self.slot(v)]
    }

    pub fn set_coupling(&mut self, v: usize, value: f64) {
        let s = self.slot(v);
        self.couplings[s] = value;
    }

    /// `(v, J_uv)` for every `v != u`, ascending in `v`.
    pub fn couplings(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.couplings
            .iter()
            .enumerate()
            .map(|(s, &x)| (self.spin_of_slot(s), x))
    }

    pub fn l1_norm(&self) -> f64 {
        self.field.abs() + self.couplings.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Flattened layout `[field, J_u0, J_u1, ...]` skipping `v = u`; the same
    /// layout is used by every gradient vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p());
        out.push(self.field);
        out.extend_from_slice(&self.couplings);
        out
    }

    pub fn from_vec(node: usize, x: &[f64]) -> Self {
        assert!(!x.is_empty());
        Self {
            node,
            field: x[0],
            couplings: x[1..].to_vec(),
        }
    }

    /// Position of the coupling to `v` in the flattened layout.
    pub fn index_of(&self, v: usize) -> usize {
        self.slot(v) + 1
    }

    /// Spins with nonzero coefficients (excluding `u` itself).
    pub fn support(&self) -> Vec<usize> {
        self.couplings()
            .filter(|&(_, x)| x != 0.0)
            .map(|(v, _)| v)
            .collect()
    }
}

fn check_len(config: &SpinConfig, p: usize) -> Result<()> {
    if config.len() != p {
        Err(Error::DimensionMismatch {
            expected: p,
            found: config.len(),
        })
    } else {
        Ok(())
    }
}

/// `E(sigma) = sum_{u<v} J_uv sigma_u sigma_v + sum_u h_u sigma_u`.
pub fn energy(model: &IsingModel, config: &SpinConfig) -> Result<f64> {
    check_len(config, model.p)?;
    let pair: f64 = model
        .couplings()
        .map(|(u, v, x)| x * config.get(u) * config.get(v))
        .sum();
    let lin: f64 = (0..model.p).map(|u| model.fields[u] * config.get(u)).sum();
    Ok(pair + lin)
}

/// `E_u(sigma, theta_u) = sigma_u (h + sum_{v != u} J_v sigma_v)`.
pub fn local_energy(lp: &LocalParams, config: &SpinConfig) -> Result<f64> {
    check_len(config, lp.p())?;
    let inner: f64 = lp.field + lp.couplings().map(|(v, x)| x * config.get(v)).sum::<f64>();
    Ok(config.get(lp.node) * inner)
}

/// `max_u (sum_{v != u} |J_uv| + |h_u|)`.
pub fn l1_width(model: &IsingModel) -> f64 {
    let mut rows: Vec<f64> = model.fields.iter().map(|h| h.abs()).collect();
    for (u, v, x) in model.couplings() {
        rows[u] += x.abs();
        rows[v] += x.abs();
    }
    rows.into_iter().fold(0.0, f64::max)
}

/// Exact Gibbs distribution over all `2^p` configurations, computed once and
/// reused for moments and interaction screening quantities.
#[derive(Debug, Clone)]
pub struct Enumeration {
    p: usize,
    probs: Vec<f64>,
}

impl Enumeration {
    pub fn new(model: &IsingModel) -> Result<Self> {
        Self::with_cap(model, ENUMERATION_CAP)
    }

    pub fn with_cap(model: &IsingModel, cap: usize) -> Result<Self> {
        let p = model.p;
        if p > cap || p > 62 {
            return Err(Error::EnumerationCap { p, cap });
        }
        let size = 1usize << p;
        let pairs: Vec<(usize, usize, f64)> = model.couplings().collect();
        let spin = |x: usize, i: usize| if x >> i & 1 == 1 { -1.0 } else { 1.0 };
        let mut log_w: Vec<f64> = (0..size)
            .map(|x| {
                let pair: f64 = pairs.iter().map(|&(u, v, j)| j * spin(x, u) * spin(x, v)).sum();
                let lin: f64 = (0..p).map(|u| model.fields[u] * spin(x, u)).sum();
                pair + lin
            })
            .collect();
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in &mut log_w {
            *w = (*w - max).exp();
            total += *w;
        }
        for w in &mut log_w {
            *w /= total;
        }
        Ok(Self { p, probs: log_w })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Probability table indexed by configuration bitmask (bit set = spin -1).
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn moment(&self, key: &MonomialKey) -> Result<f64> {
        let mut mask = 0u64;
        for &i in key.indices() {
            if i >= self.p {
                return Err(Error::IndexOutOfRange { index: i, p: self.p });
            }
            mask |= 1 << i;
        }
        Ok(self
            .probs
            .iter()
            .enumerate()
            .map(|(x, &q)| q * crate::hadamard::parity_sign(x as u64, mask))
            .sum())
    }

    /// All moments `E[prod_{i in K} sigma_i]`, indexed by subset bitmask `K`.
    pub fn all_moments(&self) -> Vec<f64> {
        let mut m = self.probs.clone();
        crate::hadamard::fwht(&mut m);
        m
    }

    fn check_lp(&self, lp: &LocalParams) -> Result<()> {
        if lp.p() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: lp.p(),
            });
        }
        Ok(())
    }

    /// `sigma_u` and `exp(-E_u)` for configuration `x`.
    fn screen_weight(&self, lp: &LocalParams, x: usize) -> (f64, f64) {
        let spin = |i: usize| if x >> i & 1 == 1 { -1.0 } else { 1.0 };
        let su = spin(lp.node);
        let inner = lp.field + lp.couplings().map(|(v, j)| j * spin(v)).sum::<f64>();
        (su, (-su * inner).exp())
    }

    /// Ideal interaction screening loss `E[exp(-E_u(sigma, theta_u))]`.
    pub fn is_loss(&self, lp: &LocalParams) -> Result<f64> {
        self.check_lp(lp)?;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .map(|(x, &q)| q * self.screen_weight(lp, x).1)
            .sum())
    }

    /// Exact gradient in the `[field, couplings...]` layout:
    /// `-E[sigma_u e^{-E_u}]` and `-E[sigma_u sigma_v e^{-E_u}]`.
    pub fn is_gradient(&self, lp: &LocalParams) -> Result<Vec<f64>> {
        self.check_lp(lp)?;
        let u = lp.node;
        let mut grad = vec![0.0; self.p];
        for (x, &q) in self.probs.iter().enumerate() {
            let (su, w) = self.screen_weight(lp, x);
            let base = -q * su * w;
            grad[0] += base;
            let mut slot = 1;
            for v in (0..self.p).filter(|&v| v != u) {
                let sv = if x >> v & 1 == 1 { -1.0 } else { 1.0 };
                grad[slot] += base * sv;
                slot += 1;
            }
        }
        Ok(grad)
    }
}

pub fn exact_distribution(model: &IsingModel) -> Result<Vec<f64>> {
    Ok(Enumeration::new(model)?.probs)
}

pub fn exact_moment(model: &IsingModel, key: &MonomialKey) -> Result<f64> {
    Enumeration::new(model)?.moment(key)
}

pub fn exact_is_loss(model: &IsingModel, lp: &LocalParams) -> Result<f64> {
    Enumeration::new(model)?.is_loss(lp)
}

pub fn exact_is_gradient(model: &IsingModel, lp: &LocalParams) -> Result<Vec<f64>> {
    Enumeration::new(model)?.is_gradient(lp)
}
