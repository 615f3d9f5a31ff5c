//! The reduced statistics set: empirical (or exact) expectations of every
//! spin monomial of degree at most `D`.
//!
//! Tables are dense. A key `K = {c_0 < c_1 < ... < c_{k-1}}` lives at
//! `offset(k) + sum_i C(c_i, i + 1)` (size-major, colex within a size), so a
//! lookup is a handful of integer additions and no hashing.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Enumeration, IsingModel};
use crate::sampling::Dataset;

/// Largest number of entries a dense table may hold.
pub const MAX_TABLE_ENTRIES: usize = 1 << 28;

/// Histogram + Walsh–Hadamard construction is used up to this many spins.
const HISTOGRAM_MAX_P: usize = 20;

/// A monomial `prod_{i in K} sigma_i` identified by its sorted, distinct
/// spin indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MonomialKey(Vec<usize>);

impl MonomialKey {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a key from distinct indices in any order.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("monomial key indices must be distinct"));
        }
        Ok(Self(indices))
    }

    /// Parity-reduces a product of (possibly repeated) spin indices.
    pub fn from_product(indices: &[usize]) -> Self {
        reduce_multiset(indices.iter().map(|&i| (i, 1)))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    /// Semicolon-joined decimal encoding; the empty key encodes as `""`.
    pub fn encode(&self) -> String {
        self.0
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn decode(text: &str) -> Result<Self> {
        if text.is_empty() {
            return Ok(Self::empty());
        }
        let indices = text
            .split(';')
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::schema(format!("bad monomial key {text:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::schema(format!("monomial key {text:?} is not strictly increasing")));
        }
        Ok(Self(indices))
    }
}

impl fmt::Display for MonomialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.encode().replace(';', ","))
    }
}

/// Keeps exactly the indices of odd total multiplicity (`sigma_i^2 = 1`).
pub fn reduce_multiset<I>(items: I) -> MonomialKey
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut odd: Vec<usize> = Vec::new();
    for (i, mult) in items {
        if mult % 2 == 1 {
            match odd.binary_search(&i) {
                Ok(pos) => {
                    odd.remove(pos);
                }
                Err(pos) => odd.insert(pos, i),
            }
        }
    }
    MonomialKey(odd)
}

/// Where a table's numbers came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

/// Dense table of monomial expectations up to degree `D`.
#[derive(Debug)]
pub struct MomentTable {
    p: usize,
    degree: usize,
    n: Option<u64>,
    values: Vec<f64>,
    offsets: Vec<usize>,
    binom: Binomials,
    max_queried: AtomicUsize,
    pub meta: TableMeta,
}

impl Clone for MomentTable {
    fn clone(&self) -> Self {
        Self {
            p: self.p,
            degree: self.degree,
            n: self.n,
            values: self.values.clone(),
            offsets: self.offsets.clone(),
            binom: self.binom.clone(),
            max_queried: AtomicUsize::new(self.max_queried.load(Ordering::Relaxed)),
            meta: self.meta.clone(),
        }
    }
}

impl PartialEq for MomentTable {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.degree == other.degree
            && self.n == other.n
            && self.values == other.values
            && self.meta == other.meta
    }
}

#[derive(Debug, Clone)]
struct Binomials {
    rows: usize,
    cols: usize,
    table: Vec<usize>,
}

impl Binomials {
    /// `C(n, k)` for `n < rows`, `k < cols`, saturating on overflow.
    fn new(rows: usize, cols: usize) -> Self {
        let mut table = vec![0usize; rows * cols];
        for n in 0..rows {
            for k in 0..cols {
                table[n * cols + k] = if k == 0 {
                    1
                } else if n == 0 {
                    0
                } else {
                    table[(n - 1) * cols + k - 1].saturating_add(table[(n - 1) * cols + k])
                };
            }
        }
        Self { rows, cols, table }
    }

    #[inline]
    fn get(&self, n: usize, k: usize) -> usize {
        if k >= self.cols || n >= self.rows {
            return 0;
        }
        self.table[n * self.cols + k]
    }
}

impl MomentTable {
    fn empty(p: usize, degree: usize, n: Option<u64>) -> Result<Self> {
        let kmax = degree.min(p);
        let binom = Binomials::new(p + 1, kmax + 2);
        let mut offsets = Vec::with_capacity(kmax + 2);
        let mut total = 0usize;
        for k in 0..=kmax {
            offsets.push(total);
            total = total.saturating_add(binom.get(p, k));
        }
        offsets.push(total);
        if total > MAX_TABLE_ENTRIES {
            return Err(Error::invalid(format!(
                "moment table for p = {p}, degree {degree} would hold {total} entries"
            )));
        }
        Ok(Self {
            p,
            degree,
            n,
            values: vec![0.0; total],
            offsets,
            binom,
            max_queried: AtomicUsize::new(0),
            meta: TableMeta::default(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Largest monomial degree served.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Sample count, or `None` for an exact (infinite-sample) table.
    pub fn n(&self) -> Option<u64> {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Whether every monomial of reduced degree `degree` is available.
    pub fn covers(&self, degree: usize) -> bool {
        degree <= self.degree || self.degree >= self.p
    }

    #[inline]
    fn index_sorted(&self, sorted: &[usize]) -> usize {
        let mut idx = self.offsets[sorted.len()];
        for (i, &c) in sorted.iter().enumerate() {
            idx += self.binom.get(c, i + 1);
        }
        idx
    }

    /// Value for a sorted, distinct index list, without touching the query log.
    #[inline]
    pub(crate) fn value_sorted(&self, sorted: &[usize]) -> Result<f64> {
        if sorted.len() > self.degree {
            return Err(Error::MissingMoment {
                degree: sorted.len(),
                table_degree: self.degree,
            });
        }
        if let Some(&last) = sorted.last() {
            if last >= self.p {
                return Err(Error::IndexOutOfRange { index: last, p: self.p });
            }
        }
        Ok(self.values[self.index_sorted(sorted)])
    }

    pub fn get(&self, key: &MonomialKey) -> Result<f64> {
        self.value_sorted(key.indices())
    }

    /// Parity-reduces the product of `indices` (repeats allowed) and returns
    /// its moment, recording the reduced degree in the query log.
    pub fn query(&self, indices: &[usize]) -> Result<f64> {
        let key = MonomialKey::from_product(indices);
        self.record_degree(key.degree());
        self.get(&key)
    }

    pub(crate) fn record_degree(&self, degree: usize) {
        self.max_queried.fetch_max(degree, Ordering::Relaxed);
    }

    /// Largest reduced degree requested since construction or the last reset.
    pub fn max_queried_degree(&self) -> usize {
        self.max_queried.load(Ordering::Relaxed)
    }

    pub fn reset_query_log(&self) {
        self.max_queried.store(0, Ordering::Relaxed);
    }

    fn unrank(&self, index: usize) -> MonomialKey {
        let k = self.offsets.partition_point(|&o| o <= index) - 1;
        let mut r = index - self.offsets[k];
        let mut out = vec![0usize; k];
        let mut hi = self.p;
        for i in (1..=k).rev() {
            let mut c = i - 1;
            while c + 1 < hi && self.binom.get(c + 1, i) <= r {
                c += 1;
            }
            out[i - 1] = c;
            r -= self.binom.get(c, i);
            hi = c;
        }
        MonomialKey(out)
    }

    /// Every `(key, value)` pair in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (MonomialKey, f64)> + '_ {
        (0..self.values.len()).map(move |i| (self.unrank(i), self.values[i]))
    }

    fn fill_from_subset_moments(&mut self, by_mask: &[f64]) {
        for i in 0..self.values.len() {
            let mask = self
                .unrank(i)
                .indices()
                .iter()
                .fold(0usize, |m, &c| m | 1 << c);
            self.values[i] = by_mask[mask];
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MomentFile {
            p: self.p,
            degree: self.degree,
            n: self.n,
            entries: self.entries().map(|(k, v)| (k.encode(), v)).collect(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MomentFile = serde_json::from_str(text)?;
        let mut table = Self::empty(file.p, file.degree, file.n)
            .map_err(|e| Error::schema(e.to_string()))?;
        if file.entries.len() != table.values.len() {
            return Err(Error::schema(format!(
                "expected {} entries for p = {}, degree {}, found {}",
                table.values.len(),
                file.p,
                file.degree,
                file.entries.len()
            )));
        }
        let mut seen = vec![false; table.values.len()];
        for (text_key, value) in file.entries {
            let key = MonomialKey::decode(&text_key)?;
            if key.degree() > file.degree || key.indices().iter().any(|&i| i >= file.p) {
                return Err(Error::schema(format!("key {text_key:?} outside the table")));
            }
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::schema(format!("moment {value} for {text_key:?} outside [-1, 1]")));
            }
            let idx = table.index_sorted(key.indices());
            if seen[idx] {
                return Err(Error::schema(format!("duplicate key {text_key:?}")));
            }
            seen[idx] = true;
            table.values[idx] = value;
        }
        if table.values[0] != 1.0 {
            return Err(Error::schema("empty-key moment must be exactly 1"));
        }
        table.meta = file.meta;
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct MomentFile {
    p: usize,
    degree: usize,
    n: Option<u64>,
    entries: Vec<(String, f64)>,
    #[serde(default)]
    meta: TableMeta,
}

/// Empirical moments of every monomial of degree `<= degree`.
pub fn build_moments(data: &Dataset, degree: usize) -> Result<MomentTable> {
    let p = data.p();
    if degree > p {
        return Err(Error::invalid(format!("degree {degree} exceeds p = {p}")));
    }
    if data.n() == 0 {
        return Err(Error::invalid("dataset is empty"));
    }
    let table = if p <= HISTOGRAM_MAX_P {
        build_by_histogram(data, degree)?
    } else {
        build_by_rows(data, degree)?
    };
    Ok(table)
}

fn finish_meta(table: &mut MomentTable, data: &Dataset) {
    table.meta = TableMeta {
        source: Some("samples".into()),
        seed: Some(data.seed),
        method: Some(data.method.as_str().into()),
    };
}

fn build_by_histogram(data: &Dataset, degree: usize) -> Result<MomentTable> {
    let p = data.p();
    let mut table = MomentTable::empty(p, degree, Some(data.n() as u64))?;
    let mut counts = vec![0.0f64; 1 << p];
    for row in data.rows() {
        let mask = row
            .iter()
            .enumerate()
            .filter(|(_, &s)| s < 0)
            .fold(0usize, |m, (i, _)| m | 1 << i);
        counts[mask] += 1.0;
    }
    crate::hadamard::fwht(&mut counts);
    let n = data.n() as f64;
    for c in &mut counts {
        *c /= n;
    }
    table.fill_from_subset_moments(&counts);
    finish_meta(&mut table, data);
    Ok(table)
}

/// Per-row subset-product recursion: each row adds `prod_{i in K} sigma_i`
/// to every key of size `<= degree`, extending products incrementally.
fn build_by_rows(data: &Dataset, degree: usize) -> Result<MomentTable> {
    let p = data.p();
    let mut table = MomentTable::empty(p, degree, Some(data.n() as u64))?;
    let mut sums = vec![0i64; table.values.len()];
    for row in data.rows() {
        accumulate_row(&table, row, degree, &mut sums);
    }
    let n = data.n() as f64;
    for (v, s) in table.values.iter_mut().zip(sums) {
        *v = s as f64 / n;
    }
    finish_meta(&mut table, data);
    Ok(table)
}

fn accumulate_row(table: &MomentTable, row: &[i8], degree: usize, sums: &mut [i64]) {
    // Explicit stack of (next candidate index, size, colex partial rank, product).
    sums[0] += 1;
    let mut stack: Vec<(usize, usize, usize, i64)> = vec![(0, 0, 0, 1)];
    while let Some((start, size, rank, prod)) = stack.pop() {
        if size == degree {
            continue;
        }
        for c in start..row.len() {
            let r = rank + table.binom.get(c, size + 1);
            let pr = prod * row[c] as i64;
            sums[table.offsets[size + 1] + r] += pr;
            stack.push((c + 1, size + 1, r, pr));
        }
    }
}

/// Exact moments of `model` for every key of degree `<= degree` (the
/// zero-statistical-error table). Degrees above `p` give the complete table.
pub fn exact_table(model: &IsingModel, degree: usize) -> Result<MomentTable> {
    let en = Enumeration::new(model)?;
    exact_table_from(&en, degree)
}

pub fn exact_table_from(en: &Enumeration, degree: usize) -> Result<MomentTable> {
    let mut table = MomentTable::empty(en.p(), degree, None)?;
    table.fill_from_subset_moments(&en.all_moments());
    table.values[0] = 1.0;
    table.meta = TableMeta {
        source: Some("exact".into()),
        seed: None,
        method: None,
    };
    Ok(table)
}

/// Samples needed so that every moment of degree `<= degree` is within `t`
/// of its mean with probability `1 - delta`: Hoeffding for a `±1` variable,
/// `P(|dev| >= t) <= 2 exp(-n t^2 / 2)`, with a union bound over at most
/// `(e p)^(degree + 1)` monomials.
pub fn hoeffding_sample_size(p: usize, degree: usize, t: f64, delta: f64) -> u64 {
    let e = std::f64::consts::E;
    let count = (degree as f64 + 1.0) * (e * p as f64).ln() + (2.0 / delta).ln();
    (2.0 * count / (t * t)).ceil() as u64
}
