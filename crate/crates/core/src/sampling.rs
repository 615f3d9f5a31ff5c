//! Spin configurations drawn from an [`IsingModel`]: exact i.i.d. draws by
//! inverse CDF over the enumerated distribution, or single-site Gibbs sweeps
//! for models beyond the enumeration cap (correlated draws).

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Enumeration, IsingModel, SpinConfig};
use crate::rng::SplitMix64;

/// Draws per independently seeded block in the exact sampler.
const EXACT_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Exact,
    Gibbs,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Exact => "exact",
            SamplerKind::Gibbs => "gibbs",
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SamplerKind::Exact),
            "gibbs" => Ok(SamplerKind::Gibbs),
            other => Err(Error::invalid(format!("unknown sampler {other:?}"))),
        }
    }
}

/// `n` rows of `p` spins plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    spins: Vec<i8>,
    pub seed: u64,
    pub method: SamplerKind,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    n: usize,
    p: usize,
    seed: u64,
    method: SamplerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thinning: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<i8>>, seed: u64, method: SamplerKind) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut spins = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            spins.extend(SpinConfig::new(row)?.spins());
        }
        Ok(Self {
            p,
            spins,
            seed,
            method,
            burn_in: None,
            thinning: None,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        if self.p == 0 {
            0
        } else {
            self.spins.len() / self.p
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> + '_ {
        self.spins.chunks_exact(self.p.max(1))
    }

    pub fn row(&self, t: usize) -> &[i8] {
        &self.spins[t * self.p..(t + 1) * self.p]
    }

    /// `E_n[sigma_i]` directly from the rows.
    pub fn mean(&self, i: usize) -> f64 {
        self.rows().map(|r| r[i] as f64).sum::<f64>() / self.n() as f64
    }

    /// `E_n[sigma_i sigma_j]` directly from the rows.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.rows().map(|r| (r[i] * r[j]) as f64).sum::<f64>() / self.n() as f64
    }

    /// JSON header line followed by one comma-separated `±1` row per sample.
    pub fn to_csv(&self) -> Result<String> {
        let header = DatasetHeader {
            n: self.n(),
            p: self.p,
            seed: self.seed,
            method: self.method,
            burn_in: self.burn_in,
            thinning: self.thinning,
            note: (self.method == SamplerKind::Gibbs)
                .then(|| "approximate: Markov chain draws are not independent".to_string()),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for row in self.rows() {
            for (i, s) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{s}").expect("write to String");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: DatasetHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::schema("dataset file is empty"))?,
        )?;
        let mut spins = Vec::with_capacity(header.n * header.p);
        let mut rows = 0;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let before = spins.len();
            for field in line.split(',') {
                match field.trim() {
                    "1" | "+1" => spins.push(1),
                    "-1" => spins.push(-1),
                    other => {
                        return Err(Error::schema(format!(
                            "row {}: entry {other:?} is not ±1",
                            lineno + 1
                        )))
                    }
                }
            }
            if spins.len() - before != header.p {
                return Err(Error::schema(format!(
                    "row {} has {} entries, expected {}",
                    lineno + 1,
                    spins.len() - before,
                    header.p
                )));
            }
            rows += 1;
        }
        if rows != header.n {
            return Err(Error::schema(format!("header says n = {}, found {rows} rows", header.n)));
        }
        Ok(Self {
            p: header.p,
            spins,
            seed: header.seed,
            method: header.method,
            burn_in: header.burn_in,
            thinning: header.thinning,
        })
    }
}

/// `n` i.i.d. draws by inverse CDF over the exact probability table.
/// Blocks of draws use split seeds, so the output does not depend on the
/// number of worker threads.
pub fn sample_exact(model: &IsingModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let en = Enumeration::new(model)?;
    let p = model.p();
    let mut cdf = Vec::with_capacity(en.probabilities().len());
    let mut acc = 0.0;
    for &q in en.probabilities() {
        acc += q;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    let blocks = n.div_ceil(EXACT_BLOCK);
    let spins: Vec<i8> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let count = EXACT_BLOCK.min(n - b * EXACT_BLOCK);
            let mut rng = SplitMix64::split(seed, b as u64);
            let mut out = Vec::with_capacity(count * p);
            for _ in 0..count {
                let r = rng.next_f64() * acc;
                let x = cdf.partition_point(|&c| c <= r).min(last);
                out.extend((0..p).map(|i| if x >> i & 1 == 1 { -1i8 } else { 1 }));
            }
            out
        })
        .collect();
    Ok(Dataset {
        p,
        spins,
        seed,
        method: SamplerKind::Exact,
        burn_in: None,
        thinning: None,
    })
}

/// Default Gibbs burn-in: `10 p` sweeps.
pub fn default_burn_in(p: usize) -> usize {
    10 * p
}

/// Default Gibbs thinning: one recorded configuration every `p` sweeps.
pub fn default_thinning(p: usize) -> usize {
    p.max(1)
}

/// Probability that spin `v` is `+1` given the rest of `state`.
pub fn conditional_plus(adj: &[(usize, f64)], field: f64, state: &[i8]) -> f64 {
    let h = field + adj.iter().map(|&(j, x)| x * state[j] as f64).sum::<f64>();
    0.5 * (1.0 + h.tanh())
}

/// Single-site Gibbs sampler: `burn_in` full sweeps, then one recorded
/// configuration every `thinning` sweeps.
pub fn sample_gibbs(
    model: &IsingModel,
    n: usize,
    seed: u64,
    burn_in: usize,
    thinning: usize,
) -> Result<Dataset> {
    if thinning == 0 {
        return Err(Error::invalid("thinning must be at least 1"));
    }
    let p = model.p();
    let adj = model.adjacency();
    let mut rng = SplitMix64::new(seed);
    let mut state: Vec<i8> = (0..p).map(|_| if rng.next_u64() >> 63 == 0 { 1 } else { -1 }).collect();
    let sweep = |state: &mut Vec<i8>, rng: &mut SplitMix64| {
        for v in 0..p {
            let prob = conditional_plus(&adj[v], model.field(v), state);
            state[v] = if rng.next_f64() < prob { 1 } else { -1 };
        }
    };
    for _ in 0..burn_in {
        sweep(&mut state, &mut rng);
    }
    let mut spins = Vec::with_capacity(n * p);
    for _ in 0..n {
        for _ in 0..thinning {
            sweep(&mut state, &mut rng);
        }
        spins.extend_from_slice(&state);
    }
    Ok(Dataset {
        p,
        spins,
        seed,
        method: SamplerKind::Gibbs,
        burn_in: Some(burn_in),
        thinning: Some(thinning),
    })
}
