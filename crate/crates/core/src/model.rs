//! Categorical random vectors, Poisson multinomial distributions and the
//! brute-force oracles every other module is checked against.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Tolerance on the probability sum of a freshly built CRV.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance on the total mass of a convolved or normalized PMF.
pub const PMF_TOL: f64 = 1e-9;
/// Upper bound on the number of cells of a dense grid.
pub const GRID_LIMIT: u128 = 100_000_000;

/// A k-categorical random vector: takes value `e_j` with probability `probs[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CategoricalRv {
    probs: Vec<f64>,
}

impl CategoricalRv {
    /// Validates and wraps a probability vector.
    ///
    /// ```
    /// use pmd_toolkit::model::CategoricalRv;
    /// assert!(CategoricalRv::new(vec![0.25, 0.75]).is_ok());
    /// assert!(CategoricalRv::new(vec![0.5, 0.6]).is_err());
    /// ```
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::TooFewOutcomes(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::SumNotOne { sum });
        }
        Ok(CategoricalRv { probs })
    }

    /// The deterministic CRV on `e_j`.
    pub fn point_mass(k: usize, j: usize) -> Self {
        assert!(k >= 2 && j < k, "point_mass({k}, {j})");
        let mut probs = vec![0.0; k];
        probs[j] = 1.0;
        CategoricalRv { probs }
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2);
        CategoricalRv { probs: vec![1.0 / k as f64; k] }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, j: usize) -> f64 {
        self.probs[j]
    }

    /// Index of the most likely outcome, lowest index on ties.
    pub fn maximal_index(&self) -> usize {
        let mut best = 0;
        for j in 1..self.probs.len() {
            if self.probs[j] > self.probs[best] {
                best = j;
            }
        }
        best
    }

    /// Draws an outcome index by inverse CDF.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (j, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = j;
                if u < acc {
                    return j;
                }
            }
        }
        last
    }

    /// Total variation distance between two CRVs of equal dimension.
    pub fn tv(&self, other: &CategoricalRv) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for CategoricalRv {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        CategoricalRv::new(v)
    }
}

impl From<CategoricalRv> for Vec<f64> {
    fn from(c: CategoricalRv) -> Self {
        c.probs
    }
}

/// A Poisson multinomial distribution: the law of a sum of independent CRVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmdFile", into = "PmdFile")]
pub struct Pmd {
    k: usize,
    components: Vec<CategoricalRv>,
}

#[derive(Serialize, Deserialize)]
struct PmdFile {
    k: usize,
    components: Vec<CategoricalRv>,
}

impl TryFrom<PmdFile> for Pmd {
    type Error = Error;
    fn try_from(f: PmdFile) -> Result<Self> {
        let pmd = Pmd::new(f.components)?;
        if pmd.k != f.k {
            return Err(Error::DimensionMismatch { expected: f.k, found: pmd.k });
        }
        Ok(pmd)
    }
}

impl From<Pmd> for PmdFile {
    fn from(p: Pmd) -> Self {
        PmdFile { k: p.k, components: p.components }
    }
}

impl Pmd {
    pub fn new(components: Vec<CategoricalRv>) -> Result<Self> {
        let first = components.first().ok_or(Error::EmptyPmd)?;
        let k = first.k();
        for c in &components {
            if c.k() != k {
                return Err(Error::DimensionMismatch { expected: k, found: c.k() });
            }
        }
        Ok(Pmd { k, components })
    }

    pub fn from_probs(rows: Vec<Vec<f64>>) -> Result<Self> {
        Pmd::new(rows.into_iter().map(CategoricalRv::new).collect::<Result<Vec<_>>>()?)
    }

    /// `n` independent copies of `crv`.
    pub fn iid(crv: &CategoricalRv, n: usize) -> Result<Self> {
        Pmd::new(vec![crv.clone(); n])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[CategoricalRv] {
        &self.components
    }

    pub fn into_components(self) -> Vec<CategoricalRv> {
        self.components
    }

    /// Syntax problems surface as `Parse`; invalid probabilities keep their own error.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            k: usize,
            components: Vec<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let pmd = Pmd::from_probs(raw.components)?;
        if pmd.k != raw.k {
            return Err(Error::DimensionMismatch { expected: raw.k, found: pmd.k });
        }
        Ok(pmd)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("PMD serialization cannot fail")
    }
}

/// A multi-index `m` for parameter moments, with degree `|m|_1 >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MomentIndex(Vec<u32>);

impl MomentIndex {
    pub fn new(m: Vec<u32>) -> Result<Self> {
        if m.iter().all(|&x| x == 0) {
            return Err(Error::InvalidParameter("moment index must have degree >= 1".into()));
        }
        Ok(MomentIndex(m))
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// Exact probability mass on a box of the integer lattice.
///
/// Entries are stored row-major, so iteration order is lexicographic with the
/// first coordinate most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePmf {
    origin: Vec<i64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DensePmf {
    pub fn new(origin: Vec<i64>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if origin.len() != shape.len() || origin.is_empty() {
            return Err(Error::InvalidShape("origin and shape lengths differ".into()));
        }
        let cells: usize = shape.iter().product();
        if cells != values.len() {
            return Err(Error::InvalidShape(format!("{} values for {} cells", values.len(), cells)));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeProbability { index, value });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(Error::SumNotOne { sum });
        }
        Ok(DensePmf { origin, shape, values })
    }

    /// Builds the bounding-box PMF of a list of weighted points. Repeated points add up.
    pub fn from_points(k: usize, points: &[(Vec<i64>, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidShape("no points".into()));
        }
        let mut lo = vec![i64::MAX; k];
        let mut hi = vec![i64::MIN; k];
        for (x, _) in points {
            if x.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: x.len() });
            }
            for i in 0..k {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        let shape: Vec<usize> = (0..k).map(|i| (hi[i] - lo[i] + 1) as usize).collect();
        check_grid(&shape)?;
        let mut values = vec![0.0; shape.iter().product()];
        let mut pmf = DensePmf { origin: lo, shape, values: Vec::new() };
        for (x, w) in points {
            let idx = pmf.index_of(x).expect("inside bounding box");
            values[idx] += w;
        }
        pmf = DensePmf::new(pmf.origin, pmf.shape, values)?;
        Ok(pmf)
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.shape.len() {
            return None;
        }
        let mut idx = 0usize;
        for i in 0..x.len() {
            let off = x[i] - self.origin[i];
            if off < 0 || off as usize >= self.shape[i] {
                return None;
            }
            idx = idx * self.shape[i] + off as usize;
        }
        Some(idx)
    }

    pub fn point_of(&self, mut idx: usize) -> Vec<i64> {
        let k = self.shape.len();
        let mut x = vec![0i64; k];
        for i in (0..k).rev() {
            x[i] = self.origin[i] + (idx % self.shape[i]) as i64;
            idx /= self.shape[i];
        }
        x
    }

    /// Mass at `x`; zero outside the box.
    pub fn get(&self, x: &[i64]) -> f64 {
        self.index_of(x).map_or(0.0, |i| self.values[i])
    }

    /// Nonzero entries in lexicographic order.
    pub fn support(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (self.point_of(i), *v))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Writes `x1 ... xk prob` lines for the support, 17 significant digits.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::new();
        for (x, p) in self.support() {
            line.clear();
            for c in &x {
                write!(line, "{c} ").unwrap();
            }
            writeln!(line, "{p:.16e}").unwrap();
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

pub(crate) fn check_grid(shape: &[usize]) -> Result<()> {
    let cells = shape.iter().fold(1u128, |a, &s| a.saturating_mul(s as u128));
    if cells > GRID_LIMIT {
        return Err(Error::GridTooLarge { cells });
    }
    Ok(())
}

/// Calls `f` on every vector of `k` nonnegative integers summing to `total`,
/// in lexicographic order.
pub fn for_each_composition(total: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(pos: usize, left: usize, buf: &mut [usize], f: &mut dyn FnMut(&[usize])) {
        let k = buf.len();
        if pos + 1 == k {
            buf[pos] = left;
            f(buf);
            return;
        }
        for v in 0..=left {
            buf[pos] = v;
            rec(pos + 1, left - v, buf, f);
        }
    }
    assert!(k >= 1);
    let mut buf = vec![0usize; k];
    rec(0, total, &mut buf, &mut f);
}

/// Exact PMF of a PMD by sequential convolution on the `(n+1)^k` grid.
pub fn exact_pmf(pmd: &Pmd) -> Result<DensePmf> {
    exact_pmf_of(pmd.components(), pmd.k())
}

/// Exact PMF of the sum of `crvs` (the empty sum is the point mass at 0).
pub fn exact_pmf_of(crvs: &[CategoricalRv], k: usize) -> Result<DensePmf> {
    let n = crvs.len();
    let shape = vec![n + 1; k];
    check_grid(&shape)?;
    let mut strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * (n + 1);
    }
    let mut buf = vec![0.0f64; shape.iter().product()];
    buf[0] = 1.0;
    for (h, crv) in crvs.iter().enumerate() {
        if crv.k() != k {
            return Err(Error::DimensionMismatch { expected: k, found: crv.k() });
        }
        // Sources have coordinate sum h, targets h + 1, so one buffer suffices.
        for_each_composition(h, k, |y| {
            let idx: usize = y.iter().zip(&strides).map(|(a, s)| a * s).sum();
            let v = buf[idx];
            if v == 0.0 {
                return;
            }
            buf[idx] = 0.0;
            for (j, &p) in crv.probs().iter().enumerate() {
                if p != 0.0 {
                    buf[idx + strides[j]] += p * v;
                }
            }
        });
    }
    DensePmf::new(vec![0; k], shape, buf)
}

/// Total variation distance `(1/2) * ||p - q||_1` between two PMFs.
pub fn tv_distance(p: &DensePmf, q: &DensePmf) -> Result<f64> {
    if p.dims() != q.dims() {
        return Err(Error::DimensionMismatch { expected: p.dims(), found: q.dims() });
    }
    let mut s = 0.0;
    for (i, &pv) in p.values.iter().enumerate() {
        let x = p.point_of(i);
        s += (pv - q.get(&x)).abs();
    }
    for (i, &qv) in q.values.iter().enumerate() {
        if qv != 0.0 && p.index_of(&q.point_of(i)).is_none() {
            s += qv;
        }
    }
    Ok((0.5 * s).min(1.0))
}

/// Draws `count` i.i.d. samples of the PMD.
pub fn sample<R: Rng + ?Sized>(pmd: &Pmd, rng: &mut R, count: usize) -> Vec<Vec<i64>> {
    (0..count)
        .map(|_| {
            let mut x = vec![0i64; pmd.k()];
            for c in pmd.components() {
                x[c.sample_index(rng)] += 1;
            }
            x
        })
        .collect()
}

const SAMPLE_CHUNK: usize = 4096;

/// Parallel sampling with one named stream per fixed-size chunk, so the output
/// depends only on `seed` and not on the thread count.
pub fn sample_parallel(pmd: &Pmd, seed: u64, count: usize) -> Vec<Vec<i64>> {
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream_rng(seed, &format!("sample/{c}"));
            let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            sample(pmd, &mut rng, len)
        })
        .collect()
}

/// PMD with `n` components whose probabilities are normalized uniform weights.
pub fn random_pmd<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Pmd {
    let rows = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let rest: f64 = p[..k - 1].iter().sum();
            p[k - 1] = (1.0 - rest).max(0.0);
            p
        })
        .collect();
    Pmd::from_probs(rows).expect("normalized rows")
}

/// `M_m(X) = sum_i prod_j p_{i,j}^{m_j}`.
pub fn parameter_moment(pmd: &Pmd, m: &MomentIndex) -> f64 {
    moment_of(pmd.components(), m.as_slice())
}

pub(crate) fn moment_of(crvs: &[CategoricalRv], m: &[u32]) -> f64 {
    crvs.iter()
        .map(|c| c.probs().iter().zip(m).map(|(p, &e)| p.powi(e as i32)).product::<f64>())
        .sum()
}

/// Splits components by their maximal outcome; group `j` is `j`-maximal.
pub fn maximal_decomposition(pmd: &Pmd) -> Vec<Vec<CategoricalRv>> {
    let mut groups = vec![Vec::new(); pmd.k()];
    for c in pmd.components() {
        groups[c.maximal_index()].push(c.clone());
    }
    groups
}

/// Exact mean and covariance of the PMD.
pub fn mean_cov(pmd: &Pmd) -> (Vec<f64>, DMatrix<f64>) {
    let k = pmd.k();
    let mut mean = vec![0.0; k];
    let mut cov = DMatrix::zeros(k, k);
    for c in pmd.components() {
        let p = c.probs();
        for a in 0..k {
            mean[a] += p[a];
            cov[(a, a)] += p[a];
            for b in 0..k {
                cov[(a, b)] -= p[a] * p[b];
            }
        }
    }
    (mean, cov)
}

/// Sample mean and unbiased sample covariance.
pub fn estimate_mean_cov(samples: &[Vec<i64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    let k = samples[0].len();
    let m = samples.len() as f64;
    let mut mean = vec![0.0; k];
    for s in samples {
        if s.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: s.len() });
        }
        for i in 0..k {
            mean[i] += s[i] as f64;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut cov = DMatrix::zeros(k, k);
    let mut d = vec![0.0; k];
    for s in samples {
        for i in 0..k {
            d[i] = s[i] as f64 - mean[i];
        }
        for a in 0..k {
            for b in a..k {
                cov[(a, b)] += d[a] * d[b];
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            cov[(a, b)] /= m - 1.0;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    Ok((mean, cov))
}
