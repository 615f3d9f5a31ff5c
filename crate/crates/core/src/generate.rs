//! Random ground-truth models on common topologies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{l1_width, IsingModel, ModelMeta};
use crate::rng::SplitMix64;
use crate::structure::EdgeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Erdős–Rényi with edge probability `degree / (p - 1)`.
    Er,
    /// Uniform random `degree`-regular graph.
    Regular,
    Ring,
    /// Open-boundary grid with `ceil(sqrt(p))` columns.
    Grid,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Er => "er",
            Topology::Regular => "regular",
            Topology::Ring => "ring",
            Topology::Grid => "grid",
        })
    }
}

impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "er" => Ok(Topology::Er),
            "regular" => Ok(Topology::Regular),
            "ring" => Ok(Topology::Ring),
            "grid" => Ok(Topology::Grid),
            _ => Err(Error::invalid(format!("unknown topology {s:?}"))),
        }
    }
}

/// Generator settings. With `coupling` and `field` unset, coupling
/// magnitudes are drawn from `[alpha, gamma / max_degree]`, fields fill part
/// of each node's remaining budget, and the model is scaled up so its width
/// is exactly `gamma`. With `coupling` set, every edge gets that magnitude
/// and a random sign, and the width must not exceed `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub p: usize,
    pub topology: Topology,
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Target degree for `er` (expected) and `regular` (exact).
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub coupling: Option<f64>,
    #[serde(default)]
    pub field: Option<f64>,
}

fn default_degree() -> usize {
    3
}

impl GeneratorSpec {
    pub fn new(p: usize, topology: Topology, gamma: f64, alpha: f64, seed: u64) -> Self {
        Self {
            p,
            topology,
            gamma,
            alpha,
            seed,
            degree: default_degree(),
            coupling: None,
            field: None,
        }
    }
}

fn ring(p: usize) -> Vec<(usize, usize)> {
    match p {
        0 | 1 => vec![],
        2 => vec![(0, 1)],
        _ => (0..p).map(|i| (i, (i + 1) % p)).collect(),
    }
}

fn grid(p: usize) -> Vec<(usize, usize)> {
    let cols = (p as f64).sqrt().ceil().max(1.0) as usize;
    let mut out = Vec::new();
    for i in 0..p {
        if (i + 1) % cols != 0 && i + 1 < p {
            out.push((i, i + 1));
        }
        if i + cols < p {
            out.push((i, i + cols));
        }
    }
    out
}

fn erdos_renyi(p: usize, degree: usize, rng: &mut SplitMix64) -> Vec<(usize, usize)> {
    if p < 2 {
        return vec![];
    }
    let q = (degree as f64 / (p - 1) as f64).min(1.0);
    let mut out = Vec::new();
    for u in 0..p {
        for v in u + 1..p {
            if rng.next_f64() < q {
                out.push((u, v));
            }
        }
    }
    out
}

fn regular(p: usize, degree: usize, rng: &mut SplitMix64) -> Result<Vec<(usize, usize)>> {
    if degree >= p || (p * degree) % 2 == 1 {
        return Err(Error::Infeasible(format!("no {degree}-regular graph on {p} nodes")));
    }
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<usize> = (0..p).flat_map(|u| std::iter::repeat_n(u, degree)).collect();
        rng.shuffle(&mut stubs);
        let mut set = EdgeSet::new();
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || set.contains(u, v) {
                continue 'attempt;
            }
            set.insert(u, v)?;
        }
        return Ok(set.iter().collect());
    }
    Err(Error::Infeasible(format!(
        "failed to draw a simple {degree}-regular graph on {p} nodes"
    )))
}

/// Draws a model according to `spec`.
pub fn generate_model(spec: &GeneratorSpec) -> Result<IsingModel> {
    if !(spec.gamma > 0.0) || !spec.gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be positive, got {}", spec.gamma)));
    }
    if !(spec.alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be nonnegative, got {}", spec.alpha)));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let edges = match spec.topology {
        Topology::Ring => ring(spec.p),
        Topology::Grid => grid(spec.p),
        Topology::Er => erdos_renyi(spec.p, spec.degree, &mut rng),
        Topology::Regular => regular(spec.p, spec.degree, &mut rng)?,
    };
    let edge_set = EdgeSet::from_pairs(edges.iter().copied())?;
    let max_deg = edge_set.max_degree(spec.p);
    let mut model = IsingModel::new(spec.p)?;

    if let Some(mag) = spec.coupling {
        if mag < spec.alpha {
            return Err(Error::Infeasible(format!(
                "coupling magnitude {mag} is below alpha = {}",
                spec.alpha
            )));
        }
        for (u, v) in edge_set.iter() {
            model.set_coupling(u, v, rng.sign() * mag)?;
        }
        let h = spec.field.unwrap_or(0.0);
        for u in 0..spec.p {
            model.set_field(u, h)?;
        }
        let w = l1_width(&model);
        if w > spec.gamma + 1e-12 {
            return Err(Error::Infeasible(format!("width {w} exceeds gamma = {}", spec.gamma)));
        }
    } else {
        if spec.alpha * max_deg as f64 > spec.gamma {
            return Err(Error::Infeasible(format!(
                "alpha * max degree = {} exceeds gamma = {}",
                spec.alpha * max_deg as f64,
                spec.gamma
            )));
        }
        let beta = if max_deg > 0 { spec.gamma / max_deg as f64 } else { 0.0 };
        for (u, v) in edge_set.iter() {
            let mag = rng.uniform(spec.alpha, beta);
            model.set_coupling(u, v, rng.sign() * mag)?;
        }
        for u in 0..spec.p {
            let h = match spec.field {
                Some(h) => h,
                None => {
                    let used: f64 = model.neighbors(u).iter().map(|&v| model.coupling(u, v).abs()).sum();
                    let slack = (spec.gamma - used).max(0.0);
                    rng.sign() * rng.uniform(0.0, 0.5 * slack)
                }
            };
            model.set_field(u, h)?;
        }
        let w = l1_width(&model);
        if w > spec.gamma + 1e-12 {
            return Err(Error::Infeasible(format!("width {w} exceeds gamma = {}", spec.gamma)));
        }
        if w > 0.0 && spec.field.is_none() {
            model.scale(spec.gamma / w);
        }
    }
    model.meta = ModelMeta {
        generator: Some(spec.topology.to_string()),
        seed: Some(spec.seed),
        gamma: Some(spec.gamma),
    };
    Ok(model)
}
