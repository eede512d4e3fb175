//! Learning a PMD from samples: moment estimation, lattice construction from
//! the estimated covariance, and an empirical DFT on a ball of dual classes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{empirical_dft, inverse_dft_at, pmd_ft_class, DftHypothesis};
use crate::linalg::{sym_eigen, DualClass, EigenDecomposition, IntegerMatrix, Lattice};
use crate::model::{estimate_mean_cov, exact_pmf, sample_parallel, DensePmf, Pmd};
use crate::rng::stream_seed;
use crate::sampler::CdfOracle;

/// Tuning knobs of the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub epsilon: f64,
    /// Stand-in for the universal constant in the lattice and support sizes.
    pub c: f64,
    /// Moment-estimation sample count; `max(200, 20 k^4)` when unset.
    pub m0: Option<usize>,
    /// DFT sample count; `min(m_cap, (k^2 ln(k/eps))^k / eps^2)` when unset.
    pub m: Option<usize>,
    pub m_cap: usize,
    pub seed: u64,
}

impl LearnerParams {
    pub fn new(epsilon: f64) -> Self {
        LearnerParams { epsilon, c: 2.0, m0: None, m: None, m_cap: 50_000, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(format!("C = {} must be positive", self.c)));
        }
        Ok(())
    }

    pub fn m0_for(&self, k: usize) -> usize {
        self.m0.unwrap_or_else(|| 200.max(20 * k.pow(4)))
    }

    pub fn m_for(&self, k: usize) -> usize {
        self.m.unwrap_or_else(|| {
            let l = self.log_term(k);
            let shape = (k as f64 * k as f64 * l).powi(k as i32) / (self.epsilon * self.epsilon);
            (shape.ceil() as usize).clamp(1, self.m_cap)
        })
    }

    /// `ln(k / eps)`.
    pub fn log_term(&self, k: usize) -> f64 {
        (k as f64 / self.epsilon).ln()
    }

    /// Radius `C^2 k^2 ln(k/eps)` of the Fourier support ball.
    pub fn support_radius(&self, k: usize) -> f64 {
        self.c * self.c * (k * k) as f64 * self.log_term(k)
    }
}

/// Source of i.i.d. samples for [`learn`].
pub trait SampleSource {
    fn draw(&mut self, count: usize) -> Result<Vec<Vec<i64>>>;
}

/// Samples from a known PMD, one named stream per batch.
pub struct PmdSource<'a> {
    pmd: &'a Pmd,
    seed: u64,
    batch: u64,
}

impl<'a> PmdSource<'a> {
    pub fn new(pmd: &'a Pmd, seed: u64) -> Self {
        PmdSource { pmd, seed, batch: 0 }
    }
}

impl SampleSource for PmdSource<'_> {
    fn draw(&mut self, count: usize) -> Result<Vec<Vec<i64>>> {
        let s = stream_seed(self.seed, &format!("learn/batch{}", self.batch));
        self.batch += 1;
        Ok(sample_parallel(self.pmd, s, count))
    }
}

/// Samples read from memory in order.
pub struct VecSource {
    samples: Vec<Vec<i64>>,
    pos: usize,
}

impl VecSource {
    pub fn new(samples: Vec<Vec<i64>>) -> Self {
        VecSource { samples, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.samples.len() - self.pos
    }
}

impl SampleSource for VecSource {
    fn draw(&mut self, count: usize) -> Result<Vec<Vec<i64>>> {
        if self.remaining() < count {
            return Err(Error::TooFewSamples { needed: self.pos + count, got: self.samples.len() });
        }
        let out = self.samples[self.pos..self.pos + count].to_vec();
        self.pos += count;
        Ok(out)
    }
}

/// Symmetrizes a covariance estimate and clamps its eigenvalues at zero.
pub fn clamped_eigen(cov: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let sym = (cov + cov.transpose()) * 0.5;
    let mut eig = sym_eigen(&sym)?;
    eig.values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(eig)
}

/// Column `i` is the integer point nearest to
/// `C sqrt(k ln(k/eps) lambda_i + k^2 ln^2(k/eps)) v_i`.
pub fn build_lattice_matrix(eig: &EigenDecomposition, k: usize, params: &LearnerParams) -> Result<IntegerMatrix> {
    let l = params.log_term(k);
    let kf = k as f64;
    let cols: Vec<Vec<i64>> = (0..k)
        .map(|i| {
            let lambda = eig.values[i].max(0.0);
            let scale = params.c * (kf * l * lambda + kf * kf * l * l).sqrt();
            eig.vector(i).iter().map(|x| (scale * x).round() as i64).collect()
        })
        .collect();
    let m = IntegerMatrix::from_columns(&cols)?;
    if m.det()? == 0 {
        return Err(Error::SingularAfterRounding);
    }
    Ok(m)
}

/// Dual classes of the ball of radius `C^2 k^2 ln(k/eps)`, zero class first.
pub fn build_support_t(m: &IntegerMatrix, params: &LearnerParams) -> Result<Vec<DualClass>> {
    crate::linalg::enumerate_dual_ball(m, params.support_radius(m.k()))
}

/// Everything the learner computed, for diagnostics.
#[derive(Debug, Clone)]
pub struct LearnReport {
    pub hypothesis: DftHypothesis,
    pub c_used: f64,
    pub m0: usize,
    pub m: usize,
    pub eigenvalues: Vec<f64>,
}

/// Lattice and support from moment estimates, escalating `C` by 1.5 (at most
/// three times) while rounding makes `M` singular.
pub fn lattice_and_support(
    cov: &DMatrix<f64>,
    k: usize,
    params: &LearnerParams,
) -> Result<(Lattice, Vec<DualClass>, f64, EigenDecomposition)> {
    params.validate()?;
    let eig = clamped_eigen(cov)?;
    let mut p = params.clone();
    for attempt in 0..=3 {
        match build_lattice_matrix(&eig, k, &p) {
            Ok(m) => {
                let lat = Lattice::new(m.clone())?;
                let t = crate::linalg::enumerate_dual_ball(&m, p.support_radius(k))?;
                return Ok((lat, t, p.c, eig));
            }
            Err(Error::SingularAfterRounding) if attempt < 3 => p.c *= 1.5,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

pub fn learn_detailed(source: &mut dyn SampleSource, k: usize, params: &LearnerParams) -> Result<LearnReport> {
    params.validate()?;
    let m0 = params.m0_for(k);
    let m = params.m_for(k);
    let first = source.draw(m0)?;
    if first.iter().any(|s| s.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: first.iter().find(|s| s.len() != k).unwrap().len() });
    }
    let (mean, cov) = estimate_mean_cov(&first)?;
    let (lattice, support, c_used, eig) = lattice_and_support(&cov, k, params)?;
    let second = source.draw(m)?;
    let values = empirical_dft(&second, &support)?;
    let hypothesis = DftHypothesis::from_classes(lattice, mean, support, values)?;
    Ok(LearnReport { hypothesis, c_used, m0, m, eigenvalues: eig.values })
}

/// Learns a DFT hypothesis from `m0 + m` samples.
pub fn learn(source: &mut dyn SampleSource, k: usize, params: &LearnerParams) -> Result<DftHypothesis> {
    Ok(learn_detailed(source, k, params)?.hypothesis)
}

/// `H(x)` inside the fundamental domain, 0 elsewhere.
pub fn evaluate(hyp: &DftHypothesis, x: &[i64]) -> f64 {
    inverse_dft_at(hyp, x)
}

/// The hypothesis as a PMF with negative values clipped and the rest
/// renormalized, together with the clipped (negative) mass.
pub fn clip_renormalize(hyp: &DftHypothesis) -> Result<(DensePmf, f64)> {
    let oracle = CdfOracle::new(hyp, 0.5)?;
    let masses = oracle.masses_by_rank();
    let points = oracle.points_by_rank();
    let negative: f64 = masses.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let positive: f64 = masses.iter().filter(|v| **v > 0.0).sum();
    if positive <= 0.0 {
        return Err(Error::InvalidHypothesis("no positive mass".into()));
    }
    let pts: Vec<(Vec<i64>, f64)> = points
        .into_iter()
        .zip(masses)
        .filter(|(_, v)| *v > 0.0)
        .map(|(x, v)| (x, v / positive))
        .collect();
    Ok((DensePmf::from_points(hyp.k(), &pts)?, negative))
}

/// Hypothesis whose values are the exact DFT of `pmd` on `support`.
pub fn exact_dft_hypothesis(pmd: &Pmd, lattice: Lattice, anchor: Vec<f64>, support: Vec<DualClass>) -> Result<DftHypothesis> {
    let values: Vec<Complex64> = support.iter().map(|c| pmd_ft_class(pmd, c)).collect();
    DftHypothesis::from_classes(lattice, anchor, support, values)
}

/// `sum |P(xi)|` over the dual classes of `lattice` outside `support`.
pub fn dft_mass_outside(pmd: &Pmd, lattice: &Lattice, support: &[DualClass]) -> Result<f64> {
    let inside: std::collections::HashSet<&Vec<i64>> = support.iter().map(|c| &c.num).collect();
    Ok(lattice
        .all_classes()?
        .iter()
        .filter(|c| !inside.contains(&c.num))
        .map(|c| pmd_ft_class(pmd, c).norm())
        .sum())
}

/// Exact probability that `pmd` lands in `anchor + M(-1/2, 1/2]^k`.
pub fn captured_mass(pmd: &Pmd, lattice: &Lattice, anchor: &[f64]) -> Result<f64> {
    let pmf = exact_pmf(pmd)?;
    Ok(pmf.support().filter(|(x, _)| lattice.in_domain(anchor, x)).map(|(_, p)| p).sum())
}

/// Outcome of [`calibrate`].
#[derive(Debug, Clone)]
pub struct Calibration {
    pub lattice: Lattice,
    pub support: Vec<DualClass>,
    pub c: f64,
    pub outside_mass: f64,
    pub captured: f64,
}

/// Oracle-side calibration of `C`: starting from `params.c`, multiply by 1.5
/// (at most three times) until the DFT mass outside the support is below
/// `eps / 10` and the domain captures `1 - eps` of the exact mass.
pub fn calibrate(pmd: &Pmd, anchor: &[f64], cov: &DMatrix<f64>, params: &LearnerParams) -> Result<Calibration> {
    let mut p = params.clone();
    let k = pmd.k();
    let mut last = None;
    for _ in 0..=3 {
        let (lattice, support, c, _) = lattice_and_support(cov, k, &p)?;
        let outside_mass = dft_mass_outside(pmd, &lattice, &support)?;
        let captured = captured_mass(pmd, &lattice, anchor)?;
        let cal = Calibration { lattice, support, c, outside_mass, captured };
        if outside_mass < p.epsilon / 10.0 && captured >= 1.0 - p.epsilon {
            return Ok(cal);
        }
        last = Some(cal);
        p.c = c * 1.5;
    }
    Ok(last.expect("at least one attempt"))
}
