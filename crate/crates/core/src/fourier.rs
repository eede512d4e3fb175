//! Fourier transforms of PMDs, empirical DFTs over dual classes, succinct
//! DFT hypotheses and a radix-2 multidimensional FFT.
//!
//! Throughout, `e(t) = exp(-2 pi i t)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DualClass, IntegerMatrix, Lattice};
use crate::model::{check_grid, CategoricalRv, DensePmf, Pmd};

/// Largest number of points accepted by [`fft_kdim`].
pub const FFT_LIMIT: usize = 1 << 26;
/// Imaginary residue above which [`inverse_dft_at`] logs a warning.
pub const RESIDUE_WARN: f64 = 1e-6;

/// `e(t)` after reducing `t` modulo 1.
pub fn e(t: f64) -> Complex64 {
    let r = t - t.floor();
    Complex64::from_polar(1.0, -TAU * r)
}

/// `e(num / den)` with exact integer argument reduction.
pub fn e_ratio(num: i64, den: i64) -> Complex64 {
    let r = num.rem_euclid(den);
    Complex64::from_polar(1.0, -TAU * (r as f64 / den as f64))
}

/// `xi . x mod 1`, with each product split into integer and fractional parts
/// so that large `x` loses no accuracy.
pub fn phase_dot(xi: &[f64], x: &[i64]) -> f64 {
    let mut acc = 0.0f64;
    for (&a, &b) in xi.iter().zip(x) {
        let bf = b as f64;
        let p = a * bf;
        let err = a.mul_add(bf, -p);
        acc += p - p.floor();
        acc += err;
        acc -= acc.floor();
    }
    acc - acc.floor()
}

/// Characteristic function of a CRV: `sum_j e(xi_j) p_j`.
pub fn crv_ft(crv: &CategoricalRv, xi: &[f64]) -> Complex64 {
    crv.probs().iter().zip(xi).map(|(p, x)| e(*x) * p).sum()
}

/// Product of the component transforms.
pub fn pmd_ft(pmd: &Pmd, xi: &[f64]) -> Complex64 {
    pmd.components().iter().map(|c| crv_ft(c, xi)).product()
}

/// [`pmd_ft`] at a dual class, with exact phases.
pub fn pmd_ft_class(pmd: &Pmd, class: &DualClass) -> Complex64 {
    let ph: Vec<Complex64> = class.num.iter().map(|&n| e_ratio(n, class.den)).collect();
    pmd.components()
        .iter()
        .map(|c| c.probs().iter().zip(&ph).map(|(p, z)| z * p).sum::<Complex64>())
        .product()
}

fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Table of `e(t / den)` for `t = 0..den`.
fn phase_table(den: i64) -> Vec<Complex64> {
    (0..den).map(|t| e_ratio(t, den)).collect()
}

/// `(1/m) sum_i e(xi . s_i)` for every class of `support`; exactly 1 at the zero class.
///
/// Each class is summed independently in a fixed order, so the result does
/// not depend on the number of threads.
pub fn empirical_dft(samples: &[Vec<i64>], support: &[DualClass]) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut hist: BTreeMap<&[i64], u64> = BTreeMap::new();
    for s in samples {
        *hist.entry(s.as_slice()).or_default() += 1;
    }
    let distinct: Vec<(&[i64], f64)> = hist.into_iter().map(|(x, c)| (x, c as f64)).collect();
    let m = samples.len() as f64;
    let den = support.first().map_or(1, |c| c.den);
    let table = phase_table(den);
    Ok(support
        .par_iter()
        .map(|cls| {
            if cls.is_zero() {
                return Complex64::new(1.0, 0.0);
            }
            let terms: Vec<Complex64> =
                distinct.iter().map(|(x, c)| table[cls.phase_numerator(x) as usize] * *c).collect();
            pairwise_sum(&terms) / m
        })
        .collect())
}

/// A pseudo-distribution given by its DFT on a set `T` of dual classes of
/// `L = M Z^k`, supported on the fundamental domain `anchor + M(-1/2, 1/2]^k`.
#[derive(Debug, Clone)]
pub struct DftHypothesis {
    lattice: Lattice,
    anchor: Vec<f64>,
    support: Vec<DualClass>,
    values: Vec<Complex64>,
    table: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct HypothesisFile {
    #[serde(rename = "M")]
    m: IntegerMatrix,
    anchor: Vec<f64>,
    support: Vec<Vec<i64>>,
    values: Vec<[f64; 2]>,
}

impl DftHypothesis {
    /// Builds a hypothesis from support vectors `v` (classes `(M^T)^{-1} v`).
    /// Vectors in the same class must not repeat; the zero class is required
    /// and its value is set to 1.
    pub fn new(m: IntegerMatrix, anchor: Vec<f64>, support: &[Vec<i64>], values: Vec<Complex64>) -> Result<Self> {
        let lattice = Lattice::new(m)?;
        let classes = support.iter().map(|v| {
            if v.len() != lattice.k() {
                return Err(Error::DimensionMismatch { expected: lattice.k(), found: v.len() });
            }
            Ok(lattice.class_of(v))
        });
        let classes = classes.collect::<Result<Vec<_>>>()?;
        Self::from_classes(lattice, anchor, classes, values)
    }

    pub fn from_classes(
        lattice: Lattice,
        anchor: Vec<f64>,
        support: Vec<DualClass>,
        mut values: Vec<Complex64>,
    ) -> Result<Self> {
        let k = lattice.k();
        if anchor.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: anchor.len() });
        }
        if anchor.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidHypothesis("anchor must be finite".into()));
        }
        if support.len() != values.len() {
            return Err(Error::InvalidHypothesis(format!(
                "{} support classes but {} values",
                support.len(),
                values.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let mut zero = None;
        for (i, c) in support.iter().enumerate() {
            if c.den != lattice.abs_det() || lattice.class_of(&c.v) != *c {
                return Err(Error::InvalidHypothesis("class does not belong to this lattice".into()));
            }
            if !seen.insert(&c.num) {
                return Err(Error::InvalidHypothesis("repeated dual class".into()));
            }
            if c.is_zero() {
                zero = Some(i);
            }
        }
        let zero = zero.ok_or_else(|| Error::InvalidHypothesis("support lacks the zero class".into()))?;
        values[zero] = Complex64::new(1.0, 0.0);
        if let Some(v) = values.iter().find(|v| !(v.norm() <= 1.0 + 1e-9)) {
            return Err(Error::InvalidHypothesis(format!("DFT value {v} has modulus above 1")));
        }
        let table = phase_table(lattice.abs_det());
        Ok(DftHypothesis { lattice, anchor, support, values, table })
    }

    pub fn k(&self) -> usize {
        self.lattice.k()
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        self.lattice.matrix()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn support(&self) -> &[DualClass] {
        &self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Number of domain points, `|det M|`.
    pub fn domain_size(&self) -> i64 {
        self.lattice.abs_det()
    }

    pub fn in_domain(&self, x: &[i64]) -> bool {
        x.len() == self.k() && self.lattice.in_domain(&self.anchor, x)
    }

    /// Real part and imaginary residue of `(1/|det M|) sum_T H(xi) e(-xi . x)`,
    /// without checking the domain.
    pub fn inverse_dft_with_residue(&self, x: &[i64]) -> (f64, f64) {
        let den = self.lattice.abs_det();
        let terms: Vec<Complex64> = self
            .support
            .iter()
            .zip(&self.values)
            .map(|(c, v)| {
                let t = c.phase_numerator(x);
                v * self.table[((den - t) % den) as usize]
            })
            .collect();
        let s = pairwise_sum(&terms) / den as f64;
        (s.re, s.im)
    }

    pub fn to_json(&self) -> String {
        let f = HypothesisFile {
            m: self.matrix().clone(),
            anchor: self.anchor.clone(),
            support: self.support.iter().map(|c| c.v.clone()).collect(),
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        };
        serde_json::to_string(&f).expect("hypothesis serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: HypothesisFile = serde_json::from_str(text)?;
        let values = f.values.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        DftHypothesis::new(f.m, f.anchor, &f.support, values)
    }
}

/// `H(x)` for `x` in the fundamental domain, 0 outside. May be negative.
pub fn inverse_dft_at(hyp: &DftHypothesis, x: &[i64]) -> f64 {
    if !hyp.in_domain(x) {
        return 0.0;
    }
    let (re, im) = hyp.inverse_dft_with_residue(x);
    if im.abs() > RESIDUE_WARN {
        log::warn!("inverse DFT at {x:?} has imaginary residue {im:e}");
    }
    re
}

fn fft_1d(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let w = Complex64::from_polar(1.0, sign * TAU / len as f64);
        for start in (0..n).step_by(len) {
            let mut wk = Complex64::new(1.0, 0.0);
            for t in 0..len / 2 {
                // Recompute the twiddle directly every few steps to bound drift.
                if t % 64 == 0 {
                    wk = Complex64::from_polar(1.0, sign * TAU * t as f64 / len as f64);
                }
                let a = buf[start + t];
                let b = buf[start + t + len / 2] * wk;
                buf[start + t] = a + b;
                buf[start + t + len / 2] = a - b;
                wk *= w;
            }
        }
        len <<= 1;
    }
}

/// Multidimensional DFT `F(w) = sum_x f(x) e(w . x / N)` on a row-major array.
/// The inverse is normalized so that a round trip returns the input.
/// Every axis length must be a power of two; see [`pad_pow2`].
pub fn fft_kdim(values: &[Complex64], shape: &[usize], inverse: bool) -> Result<Vec<Complex64>> {
    let total: usize = shape.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).ok_or(Error::SizeOverflow(usize::MAX))?;
    if total > FFT_LIMIT {
        return Err(Error::SizeOverflow(total));
    }
    if total != values.len() || shape.iter().any(|s| !s.is_power_of_two()) {
        return Err(Error::InvalidShape(format!("shape {shape:?} for {} values", values.len())));
    }
    let mut data = values.to_vec();
    let k = shape.len();
    let mut line = Vec::new();
    for axis in 0..k {
        let len = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let outer = total / (len * stride);
        line.resize(len, Complex64::default());
        for o in 0..outer {
            for s in 0..stride {
                let base = o * len * stride + s;
                for t in 0..len {
                    line[t] = data[base + t * stride];
                }
                fft_1d(&mut line, inverse);
                for t in 0..len {
                    data[base + t * stride] = line[t];
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(data)
}

/// Zero-pads a row-major array so every axis has length `target[i]`.
pub fn pad_pow2(values: &[Complex64], shape: &[usize], target: &[usize]) -> Vec<Complex64> {
    let k = shape.len();
    let mut out = vec![Complex64::default(); target.iter().product()];
    let mut idx = vec![0usize; k];
    for v in values {
        let flat = idx.iter().zip(target).fold(0, |a, (i, t)| a * t + i);
        out[flat] = *v;
        for ax in (0..k).rev() {
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

fn clamp_to_pmf(origin: Vec<i64>, shape: Vec<usize>, vals: impl Iterator<Item = f64>) -> Result<DensePmf> {
    DensePmf::new(origin, shape, vals.map(|v| v.max(0.0)).collect())
}

/// Convolution of two PMFs through [`fft_kdim`]. Round-off below zero is clamped.
pub fn fft_convolve(a: &DensePmf, b: &DensePmf) -> Result<DensePmf> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { expected: a.dims(), found: b.dims() });
    }
    let shape: Vec<usize> = a.shape().iter().zip(b.shape()).map(|(x, y)| x + y - 1).collect();
    check_grid(&shape)?;
    let padded: Vec<usize> = shape.iter().map(|s| s.next_power_of_two()).collect();
    let to_c = |p: &DensePmf| -> Vec<Complex64> {
        let v: Vec<Complex64> = p.values().iter().map(|x| Complex64::new(*x, 0.0)).collect();
        pad_pow2(&v, p.shape(), &padded)
    };
    let fa = fft_kdim(&to_c(a), &padded, false)?;
    let fb = fft_kdim(&to_c(b), &padded, false)?;
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let back = fft_kdim(&prod, &padded, true)?;
    let origin: Vec<i64> = a.origin().iter().zip(b.origin()).map(|(x, y)| x + y).collect();
    let k = shape.len();
    let mut out = Vec::with_capacity(shape.iter().product());
    let mut idx = vec![0usize; k];
    loop {
        let flat = idx.iter().zip(&padded).fold(0, |acc, (i, t)| acc * t + i);
        out.push(back[flat].re);
        let mut ax = k;
        loop {
            if ax == 0 {
                return clamp_to_pmf(origin, shape, out.into_iter());
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

/// PMF of a sum of CRVs via one inverse FFT of the product of their
/// transforms on the `[0, n]^k` grid (padded to powers of two).
pub fn exact_pmf_fft(crvs: &[CategoricalRv], k: usize) -> Result<DensePmf> {
    let n = crvs.len();
    let side = (n + 1).next_power_of_two();
    let shape = vec![side; k];
    check_grid(&shape)?;
    let total: usize = shape.iter().product();
    if total > FFT_LIMIT {
        return Err(Error::SizeOverflow(total));
    }
    let unit: Vec<Complex64> = (0..side).map(|w| e_ratio(w as i64, side as i64)).collect();
    let mut spec = vec![Complex64::new(1.0, 0.0); total];
    let mut w = vec![0usize; k];
    for cell in spec.iter_mut() {
        for c in crvs {
            *cell *= c.probs().iter().zip(&w).map(|(p, &wi)| unit[wi] * p).sum::<Complex64>();
        }
        for ax in (0..k).rev() {
            w[ax] += 1;
            if w[ax] < side {
                break;
            }
            w[ax] = 0;
        }
    }
    let back = fft_kdim(&spec, &shape, true)?;
    // Crop to the (n+1)^k box.
    let crop = vec![n + 1; k];
    let mut out = Vec::with_capacity(crop.iter().product());
    let mut idx = vec![0usize; k];
    loop {
        let flat = idx.iter().fold(0, |acc, i| acc * side + i);
        out.push(back[flat].re);
        let mut ax = k;
        loop {
            if ax == 0 {
                return clamp_to_pmf(vec![0; k], crop, out.into_iter());
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] <= n {
                break;
            }
            idx[ax] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exact_pmf;
    use crate::model::random_pmd;
    use rand::Rng;
    use crate::rng::stream_rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn crv_ft_examples() {
        let u = CategoricalRv::uniform(2);
        assert!(close(crv_ft(&u, &[0.0, 0.0]), Complex64::new(1.0, 0.0), 1e-15));
        assert!(close(crv_ft(&u, &[0.5, 0.0]), Complex64::new(0.0, 0.0), 1e-15));
        let d = CategoricalRv::point_mass(3, 0);
        assert!(close(crv_ft(&d, &[0.5, 0.0, 0.0]), Complex64::new(-1.0, 0.0), 1e-15));
    }

    #[test]
    fn pmd_ft_matches_definition() {
        let mut rng = stream_rng(3, "ft");
        for _ in 0..20 {
            let pmd = random_pmd(&mut rng, 5, 3);
            let pmf = exact_pmf(&pmd).unwrap();
            let xi: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let direct: Complex64 = pmf.support().map(|(x, p)| e(phase_dot(&xi, &x)) * p).sum();
            assert!(close(pmd_ft(&pmd, &xi), direct, 1e-9));
            assert!(pmd_ft(&pmd, &xi).norm() <= 1.0 + 1e-12);
        }
        let c = CategoricalRv::new(vec![0.2, 0.5, 0.3]).unwrap();
        let pmd = Pmd::iid(&c, 7).unwrap();
        let xi = [0.1, 0.7, 0.35];
        assert!(close(pmd_ft(&pmd, &xi), crv_ft(&c, &xi).powu(7), 1e-12));
    }

    #[test]
    fn phase_reduction_for_large_arguments() {
        use num_rational::BigRational;
        use num_traits::{FromPrimitive, ToPrimitive};
        assert_eq!(phase_dot(&[0.25], &[1_000_000_000_000_003]), 0.75);
        let xi = 1.0 / 3.0;
        let x = 3_000_000_000_001i64;
        let exact = BigRational::from_f64(xi).unwrap() * BigRational::from_integer(x.into());
        let frac = (exact.clone() - exact.floor()).to_f64().unwrap();
        assert!((phase_dot(&[xi], &[x]) - frac).abs() < 1e-12);
    }

    #[test]
    fn empirical_dft_examples() {
        let m = IntegerMatrix::new(vec![vec![3, 1], vec![0, 4]]).unwrap();
        let lat = Lattice::new(m).unwrap();
        let classes = lat.all_classes().unwrap();
        let samples = vec![vec![5, -2]; 10];
        let h = empirical_dft(&samples, &classes).unwrap();
        for (c, v) in classes.iter().zip(&h) {
            assert!(close(*v, e(c.phase(&[5, -2])), 1e-12));
        }
        assert_eq!(h[0], Complex64::new(1.0, 0.0));
        assert!(matches!(empirical_dft(&[], &classes), Err(Error::EmptySampleSet)));
    }

    #[test]
    fn uniform_and_point_mass_hypotheses() {
        let m = IntegerMatrix::new(vec![vec![3, 1], vec![-1, 2]]).unwrap();
        let lat = Lattice::new(m.clone()).unwrap();
        let anchor = vec![0.3, -0.2];
        let h = DftHypothesis::new(m.clone(), anchor.clone(), &[vec![0, 0]], vec![Complex64::new(1.0, 0.0)]).unwrap();
        let x0 = lat.reduce(&anchor, &[0, 0]);
        assert!((inverse_dft_at(&h, &x0) - 1.0 / 7.0).abs() < 1e-12);

        let classes = lat.all_classes().unwrap();
        let vals: Vec<Complex64> = classes.iter().map(|c| e(c.phase(&x0))).collect();
        let vs: Vec<Vec<i64>> = classes.iter().map(|c| c.v.clone()).collect();
        let h = DftHypothesis::new(m, anchor.clone(), &vs, vals).unwrap();
        let mut total = 0.0;
        for a in -6..=6 {
            for b in -6..=6 {
                let x = [a, b];
                let v = inverse_dft_at(&h, &x);
                if h.in_domain(&x) {
                    total += v;
                    let want = if x.as_slice() == x0.as_slice() { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-9);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-9);
        let round = DftHypothesis::from_json(&h.to_json()).unwrap();
        assert_eq!(round.values(), h.values());
        assert_eq!(round.support(), h.support());
    }

    #[test]
    fn hypothesis_validation() {
        let m = IntegerMatrix::diagonal(&[2, 2]);
        let one = Complex64::new(1.0, 0.0);
        assert!(DftHypothesis::new(m.clone(), vec![0.0, 0.0], &[vec![1, 0]], vec![one]).is_err());
        assert!(DftHypothesis::new(m.clone(), vec![0.0, 0.0], &[vec![0, 0], vec![2, 0]], vec![one, one]).is_err());
        assert!(DftHypothesis::new(m.clone(), vec![0.0, 0.0], &[vec![0, 0], vec![1, 0]], vec![one, one * 2.0]).is_err());
        let h = DftHypothesis::new(m, vec![0.0, 0.0], &[vec![0, 0]], vec![one * 0.5]).unwrap();
        assert_eq!(h.values()[0], one);
    }

    #[test]
    fn fft_basics() {
        let mut delta = vec![Complex64::default(); 16];
        delta[0] = Complex64::new(1.0, 0.0);
        let f = fft_kdim(&delta, &[4, 4], false).unwrap();
        assert!(f.iter().all(|v| close(*v, Complex64::new(1.0, 0.0), 1e-15)));
        let ones = vec![Complex64::new(1.0, 0.0); 64];
        let f = fft_kdim(&ones, &[4, 4, 4], false).unwrap();
        assert!(close(f[0], Complex64::new(64.0, 0.0), 1e-12));
        assert!(f[1..].iter().all(|v| v.norm() < 1e-12));
        assert!(matches!(fft_kdim(&ones[..48], &[4, 3, 4], false), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn fft_round_trip_and_convolution() {
        let mut rng = stream_rng(5, "fft");
        let data: Vec<Complex64> = (0..256).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let f = fft_kdim(&data, &[8, 32], false).unwrap();
        let b = fft_kdim(&f, &[8, 32], true).unwrap();
        for (x, y) in data.iter().zip(&b) {
            assert!((x - y).norm() <= 1e-9 * x.norm().max(1.0));
        }
        for _ in 0..10 {
            let p = exact_pmf(&random_pmd(&mut rng, 4, 3)).unwrap();
            let q = exact_pmf(&random_pmd(&mut rng, 5, 3)).unwrap();
            let conv = fft_convolve(&p, &q).unwrap();
            // Direct convolution oracle.
            let mut direct = std::collections::HashMap::new();
            for (x, px) in p.support() {
                for (y, qy) in q.support() {
                    let z: Vec<i64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                    *direct.entry(z).or_insert(0.0) += px * qy;
                }
            }
            for (z, v) in &direct {
                assert!((conv.get(z) - v).abs() < 1e-9);
            }
            assert!((conv.total() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fft_pmf_matches_sequential() {
        let mut rng = stream_rng(6, "fftpmf");
        for n in [1, 3, 6] {
            let pmd = random_pmd(&mut rng, n, 3);
            let a = exact_pmf(&pmd).unwrap();
            let b = exact_pmf_fft(pmd.components(), 3).unwrap();
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-9));
        }
    }
}
