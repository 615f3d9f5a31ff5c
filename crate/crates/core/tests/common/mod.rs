//! Brute-force reference computations written independently of the library:
//! spins are explicit ±1 vectors and every expectation is a plain sum over
//! all 2^p configurations.

#![allow(dead_code)]

use ising_moments::model::IsingModel;

pub struct Reference {
    pub p: usize,
    pub configs: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

fn all_configs(p: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..p {
        let mut next = Vec::with_capacity(out.len() * 2);
        for c in &out {
            for s in [1.0, -1.0] {
                let mut d = c.clone();
                d.push(s);
                next.push(d);
            }
        }
        out = next;
    }
    out
}

impl Reference {
    pub fn new(model: &IsingModel) -> Self {
        let p = model.p();
        let configs = all_configs(p);
        let pairs: Vec<(usize, usize, f64)> = model.couplings().collect();
        let weights: Vec<f64> = configs
            .iter()
            .map(|s| {
                let mut e = 0.0;
                for &(u, v, j) in &pairs {
                    e += j * s[u] * s[v];
                }
                for u in 0..p {
                    e += model.field(u) * s[u];
                }
                e.exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        let probs = weights.iter().map(|w| w / z).collect();
        Self { p, configs, probs }
    }

    /// `E[prod_{i in set} sigma_i]`.
    pub fn moment(&self, set: &[usize]) -> f64 {
        self.configs
            .iter()
            .zip(&self.probs)
            .map(|(s, q)| q * set.iter().map(|&i| s[i]).product::<f64>())
            .sum()
    }

    /// Screening loss of node `u` for parameters `x = [field, couplings to v != u ascending]`.
    pub fn loss(&self, u: usize, x: &[f64]) -> f64 {
        self.configs
            .iter()
            .zip(&self.probs)
            .map(|(s, q)| q * (-local(u, x, s)).exp())
            .sum()
    }

    /// Gradient of [`Reference::loss`] in the same layout.
    pub fn gradient(&self, u: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        for (s, q) in self.configs.iter().zip(&self.probs) {
            let w = q * (-local(u, x, s)).exp();
            g[0] -= w * s[u];
            for (k, v) in others(self.p, u).enumerate() {
                g[k + 1] -= w * s[u] * s[v];
            }
        }
        g
    }
}

pub fn others(p: usize, u: usize) -> impl Iterator<Item = usize> {
    (0..p).filter(move |&v| v != u)
}

/// `sigma_u (x[0] + sum_v x[v] sigma_v)`.
pub fn local(u: usize, x: &[f64], s: &[f64]) -> f64 {
    let mut inner = x[0];
    for (k, v) in others(s.len(), u).enumerate() {
        inner += x[k + 1] * s[v];
    }
    s[u] * inner
}

/// True local parameters of `u` in the `[field, couplings]` layout.
pub fn truth_vec(model: &IsingModel, u: usize) -> Vec<f64> {
    let mut x = vec![model.field(u)];
    x.extend(others(model.p(), u).map(|v| model.coupling(u, v)));
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Small deterministic generator for test inputs (xorshift64*).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Uniform direction scaled to a uniform ℓ1 radius in `[0, radius]`.
    pub fn in_l1_ball(&mut self, dim: usize, radius: f64) -> Vec<f64> {
        let raw: Vec<f64> = (0..dim).map(|_| self.uniform(-1.0, 1.0)).collect();
        let norm: f64 = raw.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
        let r = radius * self.unit();
        raw.iter().map(|x| x * r / norm).collect()
    }
}

/// Random model with couplings on a random graph, scaled to width `gamma`.
pub fn random_model(rng: &mut TestRng, p: usize, gamma: f64, edge_prob: f64) -> IsingModel {
    let mut m = IsingModel::new(p).unwrap();
    for u in 0..p {
        for v in u + 1..p {
            if rng.unit() < edge_prob {
                m.set_coupling(u, v, rng.uniform(-1.0, 1.0)).unwrap();
            }
        }
        m.set_field(u, rng.uniform(-0.5, 0.5)).unwrap();
    }
    let w = ising_moments::model::l1_width(&m);
    if w > 0.0 {
        m.scale(gamma / w);
    }
    m
}
