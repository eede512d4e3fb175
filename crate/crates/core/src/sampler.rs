//! Sampling from a DFT hypothesis by inverting closed-form CDFs.
//!
//! The fundamental domain of `L = M Z^k` is mapped onto the box
//! `prod_i [a_i, a_i + |D_i|)` through `g(x) = U^{-1} x mod D Z^k`, where
//! `M = U D V` is a Smith-type factorization. The transported hypothesis is a
//! trigonometric sum on a rectangular box, so its lexicographic CDF is a sum of
//! geometric series. Ranks `f(y)` enumerate the box lexicographically.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fourier::{e_ratio, DftHypothesis};
use crate::linalg::{floor_affine, smith_normal_form, IntegerMatrix};

/// Largest lazy-bit depth; `j / 2^r` stays exact in an `f64`.
pub const MAX_BITS: u32 = 52;

/// Number of random bits `r = ceil(log2(10 |det M| / eps))`.
pub fn bits_for(domain_size: i64, epsilon: f64) -> u32 {
    let r = (10.0 * domain_size as f64 / epsilon).log2().ceil();
    (r.max(1.0) as u32).min(MAX_BITS)
}

#[derive(Debug, Clone)]
struct Term {
    value: Complex64,
    /// `nu_j * N` for the common denominator `N = |det M|`.
    w: Vec<i64>,
    /// `nu_j * |D_j|`, in `[0, |D_j|)`.
    c: Vec<i64>,
    /// Largest index with `c_j != 0`.
    last: Option<usize>,
}

/// CDF and sampling oracle for a [`DftHypothesis`].
#[derive(Debug, Clone)]
pub struct CdfOracle {
    hyp: DftHypothesis,
    u: IntegerMatrix,
    u_inv: IntegerMatrix,
    size: Vec<i64>,
    lo: Vec<i64>,
    /// `prod_{j > i} |D_j|`.
    place: Vec<i64>,
    terms: Vec<Term>,
    table: Vec<Complex64>,
    bits: u32,
}

impl CdfOracle {
    /// General oracle through the Smith-type factorization of `M`.
    pub fn new(hyp: &DftHypothesis, epsilon: f64) -> Result<Self> {
        let snf = smith_normal_form(hyp.matrix())?;
        let d = snf.diag();
        Self::build(hyp, snf.u, d, epsilon)
    }

    /// Oracle for diagonal `M` with the plain lexicographic order (`U = V = I`).
    pub fn diagonal(hyp: &DftHypothesis, epsilon: f64) -> Result<Self> {
        let m = hyp.matrix();
        if !m.is_diagonal() {
            return Err(Error::NotDiagonal);
        }
        let d = (0..m.k()).map(|i| m.get(i, i)).collect();
        Self::build(hyp, IntegerMatrix::identity(m.k()), d, epsilon)
    }

    fn build(hyp: &DftHypothesis, u: IntegerMatrix, d: Vec<i64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1)")));
        }
        let k = hyp.k();
        let u_inv = u.inverse_unimodular()?;
        let n = hyp.domain_size();
        let size: Vec<i64> = d.iter().map(|x| x.abs()).collect();
        let m = hyp.anchor();
        let lo: Vec<i64> = (0..k)
            .map(|i| {
                let row: Vec<i128> = (0..k).map(|j| 2 * u_inv.get(i, j) as i128).collect();
                if d[i] > 0 {
                    // b_i = floor(u_i + D_i / 2), a_i = b_i - D_i + 1.
                    floor_affine(&row, m, d[i] as i128, 2) - d[i] + 1
                } else {
                    // a_i = ceil(u_i - |D_i| / 2).
                    let neg: Vec<i128> = row.iter().map(|x| -x).collect();
                    -floor_affine(&neg, m, size[i] as i128, 2)
                }
            })
            .collect();
        let mut place = vec![1i64; k];
        for i in (0..k.saturating_sub(1)).rev() {
            place[i] = place[i + 1] * size[i + 1];
        }
        let den = n as i128;
        let terms = hyp
            .support()
            .iter()
            .zip(hyp.values())
            .map(|(cls, &value)| {
                // nu = U^T xi, with xi = num / N.
                let w: Vec<i64> = (0..k)
                    .map(|i| {
                        let s: i128 = (0..k).map(|j| u.get(j, i) as i128 * cls.num[j] as i128).sum();
                        s.rem_euclid(den) as i64
                    })
                    .collect();
                let c: Vec<i64> = (0..k)
                    .map(|i| {
                        let scaled = w[i] as i128 * size[i] as i128;
                        debug_assert_eq!(scaled % den, 0);
                        (scaled / den) as i64
                    })
                    .collect();
                let last = (0..k).rev().find(|&i| c[i] != 0);
                Term { value, w, c, last }
            })
            .collect();
        let table = (0..n).map(|t| e_ratio(t, n)).collect();
        Ok(CdfOracle {
            hyp: hyp.clone(),
            u,
            u_inv,
            size,
            lo,
            place,
            terms,
            table,
            bits: bits_for(n, epsilon),
        })
    }

    pub fn hypothesis(&self) -> &DftHypothesis {
        &self.hyp
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Overrides the lazy-bit depth.
    pub fn with_bits(mut self, bits: u32) -> Self {
        self.bits = bits.clamp(1, MAX_BITS);
        self
    }

    pub fn domain_size(&self) -> i64 {
        self.hyp.domain_size()
    }

    /// Lower corner `a` of the box.
    pub fn box_lower(&self) -> &[i64] {
        &self.lo
    }

    pub fn box_sizes(&self) -> &[i64] {
        &self.size
    }

    /// `g(x)`: box coordinates of a domain point.
    pub fn g(&self, x: &[i64]) -> Vec<i64> {
        let z = self.u_inv.mul_vec(x);
        (0..z.len())
            .map(|i| {
                let s = self.size[i] as i128;
                (self.lo[i] as i128 + (z[i] - self.lo[i] as i128).rem_euclid(s)) as i64
            })
            .collect()
    }

    /// `g^{-1}(y)`: the domain point congruent to `U y` modulo `L`.
    pub fn g_inv(&self, y: &[i64]) -> Vec<i64> {
        let uy: Vec<i64> = self.u.mul_vec(y).into_iter().map(|v| v as i64).collect();
        self.hyp.lattice().reduce(self.hyp.anchor(), &uy)
    }

    /// `f(g(x))`, the position of `x` in the sampling order.
    pub fn rank(&self, x: &[i64]) -> i64 {
        let y = self.g(x);
        self.rank_of_box(&y)
    }

    fn rank_of_box(&self, y: &[i64]) -> i64 {
        y.iter().zip(&self.lo).zip(&self.place).map(|((yi, ai), p)| (yi - ai) * p).sum()
    }

    fn box_of_rank(&self, mut r: i64) -> Vec<i64> {
        let k = self.size.len();
        let mut y = vec![0i64; k];
        for i in (0..k).rev() {
            y[i] = self.lo[i] + r.rem_euclid(self.size[i]);
            r = r.div_euclid(self.size[i]);
        }
        y
    }

    /// Domain point with the given rank.
    pub fn unrank(&self, r: i64) -> Vec<i64> {
        self.g_inv(&self.box_of_rank(r))
    }

    /// `sum_{t = a}^{b} exp(2 pi i c t / s)` in closed form.
    fn geometric(c: i64, s: i64, a: i64, b: i64) -> Complex64 {
        if b < a {
            return Complex64::default();
        }
        if c == 0 {
            return Complex64::new((b - a + 1) as f64, 0.0);
        }
        let ph = |t: i64| e_ratio(((-(c as i128) * t as i128).rem_euclid(s as i128)) as i64, s);
        (ph(a) - ph(b + 1)) / (Complex64::new(1.0, 0.0) - ph(1))
    }

    /// CDF at box point `y` under the lexicographic order of the box.
    fn cdf_box(&self, y: &[i64]) -> f64 {
        let n = self.domain_size();
        let k = y.len();
        let mut total = Complex64::default();
        for t in &self.terms {
            let start = t.last.map_or(0, |l| l + 1);
            // Cells that agree with y up to coordinate i and are smaller there,
            // for coordinates past the last nonzero frequency (full periods
            // of a nonzero frequency sum to zero).
            let mut count: i64 = 1;
            for i in start..k {
                count += (y[i] - self.lo[i]) * self.place[i];
            }
            let full = self.phase(&t.w, y, k);
            let mut acc = full * count as f64;
            if let Some(l) = t.last {
                let prefix = self.phase(&t.w, y, l);
                let s = Self::geometric(t.c[l], self.size[l], self.lo[l], y[l] - 1);
                acc += prefix * s * self.place[l] as f64;
            }
            total += t.value * acc;
        }
        total.re / n as f64
    }

    /// `e(-sum_{j < upto} nu_j y_j)`.
    fn phase(&self, w: &[i64], y: &[i64], upto: usize) -> Complex64 {
        let n = self.domain_size() as i128;
        let mut s: i128 = 0;
        for j in 0..upto {
            s = (s + w[j] as i128 * (y[j] as i128).rem_euclid(n)).rem_euclid(n);
        }
        self.table[((n - s) % n) as usize]
    }

    /// CDF of the element with rank `r`; `-1` gives 0 and the last rank gives 1.
    pub fn cdf_rank(&self, r: i64) -> f64 {
        if r < 0 {
            0.0
        } else if r >= self.domain_size() - 1 {
            1.0
        } else {
            self.cdf_box(&self.box_of_rank(r))
        }
    }

    /// Unclamped closed-form CDF at the element with rank `r`.
    pub fn cdf_rank_raw(&self, r: i64) -> f64 {
        self.cdf_box(&self.box_of_rank(r))
    }

    /// CDF at a domain point.
    pub fn cdf(&self, x: &[i64]) -> Result<f64> {
        if !self.hyp.in_domain(x) {
            return Err(Error::OutOfDomain);
        }
        Ok(self.cdf_box(&self.g(x)))
    }

    /// Binary search for the sampled rank given a comparison oracle `y < c`.
    /// Resolves `y == c` toward the higher cell.
    pub fn search(&self, mut y_lt: impl FnMut(f64) -> bool) -> i64 {
        let mut lo = -1i64;
        let mut clo = 0.0;
        let mut hi = self.domain_size() - 1;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let cm = self.cdf_rank(mid);
            if clo < cm && y_lt(cm) {
                hi = mid;
            } else {
                lo = mid;
                clo = cm;
            }
        }
        hi
    }

    /// Rank selected for a fully known uniform value `y`.
    pub fn invert(&self, y: f64) -> i64 {
        self.search(|c| y < c)
    }

    /// Exact law of the sampler over ranks, by enumerating all `2^r` bit strings.
    pub fn exhaustive_law(&self) -> Result<Vec<f64>> {
        if self.bits > 24 {
            return Err(Error::InvalidParameter(format!("2^{} bit strings is too many", self.bits)));
        }
        let n = self.domain_size() as usize;
        let mut law = vec![0.0; n];
        let scale = (self.bits as f64).exp2();
        for j in 0..(1u64 << self.bits) {
            let y = j as f64 / scale;
            law[self.invert(y) as usize] += 1.0 / scale;
        }
        Ok(law)
    }

    /// Hypothesis values at every domain point, indexed by rank, computed with
    /// one mixed-radix inverse FFT on the box.
    pub fn masses_by_rank(&self) -> Vec<f64> {
        let n = self.domain_size() as usize;
        let k = self.size.len();
        let mut grid = vec![Complex64::default(); n];
        for t in &self.terms {
            // Shift to the box origin: exp(2 pi i c . a / |D|).
            let mut idx = 0usize;
            let mut s: i128 = 0;
            let nn = n as i128;
            for i in 0..k {
                idx = idx * self.size[i] as usize + t.c[i] as usize;
                s = (s + t.w[i] as i128 * (self.lo[i] as i128).rem_euclid(nn)).rem_euclid(nn);
            }
            grid[idx] += t.value * self.table[((nn - s) % nn) as usize];
        }
        let mut planner = FftPlanner::<f64>::new();
        let total = n;
        for axis in 0..k {
            let len = self.size[axis] as usize;
            if len == 1 {
                continue;
            }
            let stride = self.place[axis] as usize;
            let fft = planner.plan_fft_inverse(len);
            let mut line = vec![Complex64::default(); len];
            for outer in 0..total / (len * stride) {
                for inner in 0..stride {
                    let base = outer * len * stride + inner;
                    for t in 0..len {
                        line[t] = grid[base + t * stride];
                    }
                    fft.process(&mut line);
                    for t in 0..len {
                        grid[base + t * stride] = line[t];
                    }
                }
            }
        }
        grid.iter().map(|v| v.re / n as f64).collect()
    }

    /// Domain points in rank order.
    pub fn points_by_rank(&self) -> Vec<Vec<i64>> {
        (0..self.domain_size()).map(|r| self.unrank(r)).collect()
    }
}

/// CDF of a one-dimensional hypothesis at `x`.
pub fn cdf_1d(hyp: &DftHypothesis, x: i64) -> Result<f64> {
    if hyp.k() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: hyp.k() });
    }
    CdfOracle::diagonal(hyp, 0.5)?.cdf(&[x])
}

/// Lexicographic CDF of a hypothesis with diagonal `M`.
pub fn cdf_lex_diag(hyp: &DftHypothesis, x: &[i64]) -> Result<f64> {
    CdfOracle::diagonal(hyp, 0.5)?.cdf(x)
}

/// CDF under the order induced by `f(g(x))`.
pub fn cdf_general(oracle: &CdfOracle, x: &[i64]) -> Result<f64> {
    oracle.cdf(x)
}

struct LazyUniform<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    value: u64,
    known: u32,
    bits: u32,
}

impl<R: Rng + ?Sized> LazyUniform<'_, R> {
    fn less_than(&mut self, c: f64) -> bool {
        loop {
            let scale = (self.known as f64).exp2();
            let low = self.value as f64 / scale;
            if self.known == self.bits {
                return low < c;
            }
            if (self.value + 1) as f64 / scale <= c {
                return true;
            }
            if low >= c {
                return false;
            }
            self.value = 2 * self.value + u64::from(self.rng.random::<bool>());
            self.known += 1;
        }
    }
}

/// One draw: binary search on the CDF with a lazily generated `r`-bit uniform.
pub fn draw<R: Rng + ?Sized>(oracle: &CdfOracle, rng: &mut R) -> Vec<i64> {
    let mut y = LazyUniform { rng, value: 0, known: 0, bits: oracle.bits };
    let r = oracle.search(|c| y.less_than(c));
    oracle.unrank(r)
}

pub fn draw_many<R: Rng + ?Sized>(oracle: &CdfOracle, rng: &mut R, count: usize) -> Vec<Vec<i64>> {
    (0..count).map(|_| draw(oracle, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{e, inverse_dft_at};
    use crate::linalg::Lattice;
    use crate::rng::stream_rng;

    fn uniform_hyp(m: IntegerMatrix, anchor: Vec<f64>) -> DftHypothesis {
        let k = m.k();
        DftHypothesis::new(m, anchor, &[vec![0; k]], vec![Complex64::new(1.0, 0.0)]).unwrap()
    }

    fn random_hyp(rng: &mut impl Rng, m: IntegerMatrix, anchor: Vec<f64>) -> DftHypothesis {
        let lat = Lattice::new(m.clone()).unwrap();
        let classes = lat.all_classes().unwrap();
        // Conjugate-symmetric random values with modulus at most 1/2.
        let mut vals = vec![Complex64::default(); classes.len()];
        for (i, c) in classes.iter().enumerate() {
            let neg: Vec<i64> = c.v.iter().map(|x| -x).collect();
            let j = classes.iter().position(|d| *d == lat.class_of(&neg)).unwrap();
            if j < i {
                vals[i] = vals[j].conj();
            } else if j == i {
                vals[i] = Complex64::new(rng.random::<f64>() - 0.5, 0.0);
            } else {
                vals[i] = Complex64::from_polar(0.5 * rng.random::<f64>(), rng.random::<f64>() * 6.0);
            }
        }
        let vs: Vec<Vec<i64>> = classes.iter().map(|c| c.v.clone()).collect();
        DftHypothesis::new(m, anchor, &vs, vals).unwrap()
    }

    #[test]
    fn one_dim_uniform() {
        let h = uniform_hyp(IntegerMatrix::new(vec![vec![5]]).unwrap(), vec![10.2]);
        // Domain (7.7, 12.7] = 8..=12.
        for (i, x) in (8..=12).enumerate() {
            assert!((cdf_1d(&h, x).unwrap() - (i + 1) as f64 / 5.0).abs() < 1e-12);
        }
        assert_eq!(cdf_1d(&h, 13), Err(Error::OutOfDomain));
    }

    #[test]
    fn one_dim_matches_prefix_sums() {
        let mut rng = stream_rng(11, "cdf1d");
        for _ in 0..50 {
            let mm = rng.random_range(1..40i64) * if rng.random::<bool>() { 1 } else { -1 };
            let anchor = rng.random_range(-20.0..20.0);
            let h = random_hyp(&mut rng, IntegerMatrix::new(vec![vec![mm]]).unwrap(), vec![anchor]);
            let lo = (anchor - mm.abs() as f64 / 2.0).floor() as i64 - 1;
            let mut acc = 0.0;
            for x in lo..lo + mm.abs() + 3 {
                if h.in_domain(&[x]) {
                    acc += inverse_dft_at(&h, &[x]);
                    assert!((cdf_1d(&h, x).unwrap() - acc).abs() < 1e-9);
                }
            }
            assert!((acc - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn diag_uniform_two_by_two() {
        let h = uniform_hyp(IntegerMatrix::diagonal(&[2, 2]), vec![0.0, 0.0]);
        let o = CdfOracle::diagonal(&h, 0.1).unwrap();
        let pts = o.points_by_rank();
        assert_eq!(pts, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        for (r, x) in pts.iter().enumerate() {
            assert!((cdf_lex_diag(&h, x).unwrap() - (r + 1) as f64 / 4.0).abs() < 1e-12);
        }
        let h = uniform_hyp(IntegerMatrix::new(vec![vec![2, 1], vec![0, 2]]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(cdf_lex_diag(&h, &[0, 0]), Err(Error::NotDiagonal));
    }

    #[test]
    fn general_cdf_matches_prefix_sums() {
        let mut rng = stream_rng(12, "cdfgen");
        for trial in 0..30 {
            let k = 1 + trial % 3;
            let m = loop {
                let rows: Vec<Vec<i64>> =
                    (0..k).map(|_| (0..k).map(|_| rng.random_range(-6..=6i64)).collect()).collect();
                let m = IntegerMatrix::new(rows).unwrap();
                let d = m.det().unwrap().abs();
                if d > 0 && d <= 500 {
                    break m;
                }
            };
            let anchor: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            let h = random_hyp(&mut rng, m, anchor);
            let o = CdfOracle::new(&h, 0.1).unwrap();
            let pts = o.points_by_rank();
            let masses = o.masses_by_rank();
            let mut acc = 0.0;
            let mut seen = std::collections::HashSet::new();
            for (r, x) in pts.iter().enumerate() {
                assert!(h.in_domain(x));
                assert!(seen.insert(x.clone()));
                assert_eq!(o.rank(x), r as i64);
                assert_eq!(o.g_inv(&o.g(x)), *x);
                let direct = inverse_dft_at(&h, x);
                assert!((masses[r] - direct).abs() < 1e-9);
                acc += direct;
                assert!((cdf_general(&o, x).unwrap() - acc).abs() < 1e-9);
            }
            assert!((acc - 1.0).abs() < 1e-9);
            if h.matrix().is_diagonal() {
                for x in &pts {
                    let a = cdf_lex_diag(&h, x).unwrap();
                    let b = CdfOracle::diagonal(&h, 0.1).unwrap().cdf(x).unwrap();
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn point_mass_always_drawn() {
        let m = IntegerMatrix::new(vec![vec![3, 1], vec![1, 4]]).unwrap();
        let lat = Lattice::new(m.clone()).unwrap();
        let anchor = vec![2.0, 1.0];
        let x0 = lat.reduce(&anchor, &[5, 2]);
        let classes = lat.all_classes().unwrap();
        let vals = classes.iter().map(|c| e(c.phase(&x0))).collect();
        let vs: Vec<Vec<i64>> = classes.iter().map(|c| c.v.clone()).collect();
        let h = DftHypothesis::new(m, anchor, &vs, vals).unwrap();
        let o = CdfOracle::new(&h, 0.01).unwrap();
        let mut rng = stream_rng(1, "pm");
        for _ in 0..200 {
            assert_eq!(draw(&o, &mut rng), x0);
        }
    }

    #[test]
    fn uniform_frequencies() {
        let h = uniform_hyp(IntegerMatrix::diagonal(&[2, 2]), vec![0.5, 0.5]);
        let o = CdfOracle::new(&h, 0.01).unwrap();
        let mut rng = stream_rng(2, "freq");
        let mut counts = std::collections::HashMap::new();
        for x in draw_many(&o, &mut rng, 100_000) {
            *counts.entry(x).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 4);
        for c in counts.values() {
            assert!((*c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn lazy_bits_agree_with_full_value() {
        let mut rng = stream_rng(3, "lazy");
        let m = IntegerMatrix::new(vec![vec![4, 1], vec![-2, 5]]).unwrap();
        let h = random_hyp(&mut rng, m, vec![0.3, 0.1]);
        let o = CdfOracle::new(&h, 0.2).unwrap();
        for _ in 0..300 {
            // Record the bits a lazy draw consumes, then replay them in full.
            let seed: u64 = rng.random();
            let mut a = stream_rng(seed, "x");
            let mut y = LazyUniform { rng: &mut a, value: 0, known: 0, bits: o.bits };
            let lazy = o.search(|c| y.less_than(c));
            let mut full = 0u64;
            let mut b = stream_rng(seed, "x");
            for _ in 0..o.bits {
                full = 2 * full + u64::from(b.random::<bool>());
            }
            let exact = o.invert(full as f64 / (o.bits as f64).exp2());
            // The lazy search may stop before consuming every bit; the
            // remaining bits cannot change the outcome.
            assert_eq!(lazy, exact);
        }
    }

    #[test]
    fn negative_cells_never_emitted() {
        let mut rng = stream_rng(4, "neg");
        for _ in 0..10 {
            let m = IntegerMatrix::new(vec![vec![3, 1], vec![1, 3]]).unwrap();
            let h = random_hyp(&mut rng, m, vec![0.0, 0.0]);
            let o = CdfOracle::new(&h, 0.1).unwrap();
            let masses = o.masses_by_rank();
            let law = o.exhaustive_law().unwrap();
            for (q, hm) in law.iter().zip(&masses) {
                if *hm <= 0.0 {
                    assert_eq!(*q, 0.0);
                }
            }
        }
    }
}
