//! Edge sets, recovery by thresholding at `alpha / 2`, and comparison
//! against a reference structure.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IsingModel;
use crate::screening::CouplingEstimate;

/// Unordered pairs stored as `(u, v)` with `u < v`, in lexicographic order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeSet {
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out = Self::new();
        for (u, v) in pairs {
            out.insert(u, v)?;
        }
        Ok(out)
    }

    /// Support of the model's couplings.
    pub fn from_model(model: &IsingModel) -> Self {
        Self {
            edges: model.couplings().map(|(u, v, _)| (u, v)).collect(),
        }
    }

    pub fn insert(&mut self, u: usize, v: usize) -> Result<bool> {
        if u == v {
            return Err(Error::invalid(format!("self-loop ({u}, {u})")));
        }
        Ok(self.edges.insert((u.min(v), u.max(v))))
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Sorted neighbors of `u`.
    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == u {
                    Some(b)
                } else if b == u {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Largest node degree among nodes `0..p`.
    pub fn max_degree(&self, p: usize) -> usize {
        let mut deg = vec![0usize; p];
        for &(u, v) in &self.edges {
            if v < p {
                deg[u] += 1;
                deg[v] += 1;
            }
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Checks every index is below `p`.
    pub fn check_range(&self, p: usize) -> Result<()> {
        match self.edges.iter().find(|&&(_, v)| v >= p) {
            Some(&(_, v)) => Err(Error::IndexOutOfRange { index: v, p }),
            None => Ok(()),
        }
    }

    /// JSON array of `[u, v]` pairs.
    pub fn to_json(&self) -> Result<String> {
        let pairs: Vec<[usize; 2]> = self.edges.iter().map(|&(u, v)| [u, v]).collect();
        Ok(serde_json::to_string(&pairs)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pairs: Vec<[usize; 2]> = serde_json::from_str(text)?;
        let mut out = Self::new();
        for [u, v] in pairs {
            if u >= v {
                return Err(Error::schema(format!("edge [{u}, {v}] is not ordered u < v")));
            }
            if !out.edges.insert((u, v)) {
                return Err(Error::schema(format!("duplicate edge [{u}, {v}]")));
            }
        }
        Ok(out)
    }
}

/// `{(u, v) : |J_uv| >= alpha / 2}` over the symmetrized estimate.
pub fn threshold_edges(est: &CouplingEstimate, alpha: f64) -> Result<EdgeSet> {
    threshold_pairs(est.symmetric_couplings(), alpha)
}

/// Thresholding on arbitrary `(u, v, value)` triples.
pub fn threshold_pairs(
    pairs: impl IntoIterator<Item = (usize, usize, f64)>,
    alpha: f64,
) -> Result<EdgeSet> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let mut out = EdgeSet::new();
    for (u, v, x) in pairs {
        if x.abs() >= alpha / 2.0 {
            out.insert(u, v)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeComparison {
    pub false_positives: Vec<(usize, usize)>,
    pub false_negatives: Vec<(usize, usize)>,
}

impl EdgeComparison {
    pub fn counts(&self) -> (usize, usize) {
        (self.false_positives.len(), self.false_negatives.len())
    }

    pub fn exact(&self) -> bool {
        self.false_positives.is_empty() && self.false_negatives.is_empty()
    }
}

pub fn compare_edges(predicted: &EdgeSet, truth: &EdgeSet) -> EdgeComparison {
    EdgeComparison {
        false_positives: predicted.edges.difference(&truth.edges).copied().collect(),
        false_negatives: truth.edges.difference(&predicted.edges).copied().collect(),
    }
}
