//! Discrete Gaussians on the hyperplane `sum_j x_j = n` and numerical checks
//! of how far a PMD sits from its matched Gaussian as the sum grows.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::model::{exact_pmf, mean_cov, tv_distance, CategoricalRv, DensePmf, Pmd};

/// Default bound on the mass discarded by truncation.
pub const DEFAULT_TAIL: f64 = 1e-12;
/// Smallest non-trivial eigenvalue accepted as non-degenerate.
pub const MIN_SIGMA: f64 = 1e-9;

/// Orthonormal basis of the complement of the all-ones vector (Helmert
/// contrasts), as the columns of a `k x (k - 1)` matrix.
pub fn helmert_basis(k: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(k, k.saturating_sub(1));
    for c in 0..k.saturating_sub(1) {
        let m = (c + 1) as f64;
        let norm = (m * (m + 1.0)).sqrt();
        for r in 0..=c {
            b[(r, c)] = 1.0 / norm;
        }
        b[(c + 1, c)] = -m / norm;
    }
    b
}

fn check_hyperplane(cov: &DMatrix<f64>) -> Result<usize> {
    let k = cov.nrows();
    if k != cov.ncols() {
        return Err(Error::InvalidShape("covariance is not square".into()));
    }
    if k < 2 {
        return Err(Error::TooFewOutcomes(k));
    }
    let ones = DVector::from_element(k, 1.0);
    if (cov * ones).norm() > 1e-6 * cov.norm() {
        return Err(Error::NotHyperplaneDegenerate);
    }
    Ok(k)
}

/// Smallest eigenvalue of `cov` on the complement of the all-ones vector.
pub fn min_nontrivial_eigenvalue(cov: &DMatrix<f64>) -> Result<f64> {
    let k = check_hyperplane(cov)?;
    let b = helmert_basis(k);
    let reduced = b.transpose() * cov * &b;
    let eig = sym_eigen(&reduced)?;
    Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0))
}

/// Smallest eigenvalue of the covariance of the first `k - 1` coordinates.
pub fn projected_min_eigenvalue(cov: &DMatrix<f64>) -> Result<f64> {
    let k = cov.nrows();
    if k < 2 {
        return Err(Error::TooFewOutcomes(k));
    }
    let eig = sym_eigen(&cov.view((0, 0), (k - 1, k - 1)).into_owned())?;
    Ok(eig.values.last().copied().unwrap_or(0.0))
}

/// Chi-square radius `R^2` with `P(chi^2_d >= R^2) <= tail` (Laurent-Massart).
fn chi_square_radius(d: usize, tail: f64) -> f64 {
    let t = (1.0 / tail).ln();
    let d = d as f64;
    d + 2.0 * (d * t).sqrt() + 2.0 * t
}

/// Lattice Gaussian on `{x in Z^k : sum x = n}` with weights `exp(-Q(x) / 2)`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteGaussian {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub total: i64,
    /// Sum of the unnormalized weights over the kept points.
    pub normalizer: f64,
    /// Smallest non-trivial eigenvalue of the covariance.
    pub sigma: f64,
    /// Points with `Q(x) > radius^2` are dropped.
    pub radius: f64,
    pub tail: f64,
    #[serde(skip)]
    pub pmf: DensePmf,
}

/// Quadratic form `Q(x) = |W (x - c)|^2` of the hyperplane pseudo-inverse.
struct HyperplaneForm {
    w: DMatrix<f64>,
    center: Vec<f64>,
    sigma: f64,
    lambda_max: f64,
}

impl HyperplaneForm {
    fn new(mean: &[f64], cov: &DMatrix<f64>, n: i64) -> Result<Self> {
        let k = check_hyperplane(cov)?;
        if mean.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: mean.len() });
        }
        let b = helmert_basis(k);
        let eig = sym_eigen(&(b.transpose() * cov * &b))?;
        let sigma = eig.values.last().copied().unwrap_or(0.0);
        if !(sigma > MIN_SIGMA) {
            return Err(Error::DegenerateCovariance(sigma.max(0.0)));
        }
        let scale = DMatrix::from_diagonal(&DVector::from_iterator(k - 1, eig.values.iter().map(|l| 1.0 / l.sqrt())));
        let w = scale * eig.vectors.transpose() * b.transpose();
        // Shift the mean onto the hyperplane along the all-ones direction.
        let shift = (n as f64 - mean.iter().sum::<f64>()) / k as f64;
        let center = mean.iter().map(|m| m + shift).collect();
        Ok(HyperplaneForm { w, center, sigma, lambda_max: eig.values[0] })
    }

    fn q(&self, x: &[i64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, c)| *a as f64 - c));
        (&self.w * d).norm_squared()
    }
}

/// Calls `f` on every integer point of the box `lo..=hi`, lexicographically.
fn for_each_box_point(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return;
    }
    let mut x = lo.to_vec();
    loop {
        f(&x);
        let mut ax = x.len();
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            if x[ax] < hi[ax] {
                x[ax] += 1;
                break;
            }
            x[ax] = lo[ax];
        }
    }
}

/// Discrete Gaussian with the given mean and covariance on the hyperplane
/// `sum x = n`, truncated where the Gaussian tail bound drops below `tail`.
pub fn discrete_gaussian(mean: &[f64], cov: &DMatrix<f64>, n: i64, tail: f64) -> Result<DiscreteGaussian> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::InvalidParameter(format!("tail {tail} outside (0, 1)")));
    }
    let form = HyperplaneForm::new(mean, cov, n)?;
    let k = mean.len();
    let r2 = chi_square_radius(k - 1, tail);
    let reach = (r2 * form.lambda_max).sqrt();
    let lo: Vec<i64> = form.center[..k - 1].iter().map(|c| (c - reach).ceil() as i64).collect();
    let hi: Vec<i64> = form.center[..k - 1].iter().map(|c| (c + reach).floor() as i64).collect();
    let mut points = Vec::new();
    let mut x = vec![0i64; k];
    for_each_box_point(&lo, &hi, |head| {
        x[..k - 1].copy_from_slice(head);
        x[k - 1] = n - head.iter().sum::<i64>();
        let q = form.q(&x);
        if q <= r2 {
            points.push((x.clone(), (-q / 2.0).exp()));
        }
    });
    let normalizer: f64 = points.iter().map(|(_, w)| w).sum();
    if points.is_empty() || !(normalizer > 0.0) {
        return Err(Error::DegenerateCovariance(form.sigma));
    }
    points.iter_mut().for_each(|(_, w)| *w /= normalizer);
    let pmf = DensePmf::from_points(k, &points)?;
    Ok(DiscreteGaussian {
        mean: mean.to_vec(),
        covariance: (0..k).map(|i| cov.row(i).iter().copied().collect()).collect(),
        total: n,
        normalizer,
        sigma: form.sigma,
        radius: r2.sqrt(),
        tail,
        pmf,
    })
}

/// Total variation between the PMD and the discrete Gaussian with the same
/// mean and covariance, together with the smallest non-trivial eigenvalue.
pub fn clt_tv(pmd: &Pmd) -> Result<(f64, f64)> {
    let (mean, cov) = mean_cov(pmd);
    let sigma = min_nontrivial_eigenvalue(&cov)?;
    if sigma <= MIN_SIGMA {
        return Err(Error::DegenerateCovariance(sigma));
    }
    let g = discrete_gaussian(&mean, &cov, pmd.n() as i64, DEFAULT_TAIL)?;
    Ok((tv_distance(&exact_pmf(pmd)?, &g.pmf)?, sigma))
}

/// One point of a CLT sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltPoint {
    pub n: usize,
    pub sigma: f64,
    pub tv: f64,
}

/// [`clt_tv`] for the PMDs of `n` components cycling through `crvs`, for each `n` in `ns`.
pub fn clt_sweep(crvs: &[CategoricalRv], ns: &[usize]) -> Result<Vec<CltPoint>> {
    if crvs.is_empty() {
        return Err(Error::EmptyPmd);
    }
    ns.iter()
        .map(|&n| {
            let pmd = Pmd::new(crvs.iter().cycle().take(n).cloned().collect())?;
            let (tv, sigma) = clt_tv(&pmd)?;
            Ok(CltPoint { n, sigma, tv })
        })
        .collect()
}

/// Least-squares slope of `ln tv` against `ln sigma`.
pub fn loglog_slope(points: &[CltPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.sigma.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.tv.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Full-rank Gaussian on `R^d` and its two lattice discretizations.
struct FullRank {
    w: DMatrix<f64>,
    mean: Vec<f64>,
    lo: Vec<i64>,
    hi: Vec<i64>,
    r2: f64,
}

impl FullRank {
    fn new(mean: &[f64], cov: &DMatrix<f64>, tail: f64) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: cov.nrows() });
        }
        let eig = sym_eigen(cov)?;
        let sigma = eig.values.last().copied().unwrap_or(0.0);
        if !(sigma > MIN_SIGMA) {
            return Err(Error::DegenerateCovariance(sigma.max(0.0)));
        }
        let scale = DMatrix::from_diagonal(&DVector::from_iterator(d, eig.values.iter().map(|l| 1.0 / l.sqrt())));
        let w = scale * eig.vectors.transpose();
        let r2 = chi_square_radius(d, tail);
        // One extra cell so rounding mass near the boundary is kept.
        let reach = (r2 * eig.values[0]).sqrt() + 1.0;
        let lo = mean.iter().map(|m| (m - reach).floor() as i64).collect();
        let hi = mean.iter().map(|m| (m + reach).ceil() as i64).collect();
        Ok(FullRank { w, mean: mean.to_vec(), lo, hi, r2 })
    }

    fn q(&self, y: &[f64]) -> f64 {
        let d = DVector::from_iterator(y.len(), y.iter().zip(&self.mean).map(|(a, m)| a - m));
        (&self.w * d).norm_squared()
    }

    fn normalized(&self, mut weight: impl FnMut(&[i64]) -> f64) -> Result<DensePmf> {
        let mut points = Vec::new();
        for_each_box_point(&self.lo, &self.hi, |x| {
            let w = weight(x);
            if w > 0.0 {
                points.push((x.to_vec(), w));
            }
        });
        let total: f64 = points.iter().map(|(_, w)| w).sum();
        points.iter_mut().for_each(|(_, w)| *w /= total);
        DensePmf::from_points(self.mean.len(), &points)
    }
}

/// Lattice points weighted by the Gaussian density (`G''`).
pub fn lattice_weight_gaussian(mean: &[f64], cov: &DMatrix<f64>, tail: f64) -> Result<DensePmf> {
    let g = FullRank::new(mean, cov, tail)?;
    g.normalized(|x| {
        let y: Vec<f64> = x.iter().map(|v| *v as f64).collect();
        let q = g.q(&y);
        if q <= g.r2 { (-q / 2.0).exp() } else { 0.0 }
    })
}

/// The Gaussian rounded to the nearest lattice point (`G'`): each cell mass
/// is the density integrated over the unit cube around the point, by the
/// midpoint rule with `steps` nodes per axis.
pub fn rounded_gaussian(mean: &[f64], cov: &DMatrix<f64>, tail: f64, steps: usize) -> Result<DensePmf> {
    let g = FullRank::new(mean, cov, tail)?;
    let d = mean.len();
    let steps = steps.max(1) as i64;
    let offsets: Vec<f64> = (0..steps).map(|s| -0.5 + (s as f64 + 0.5) / steps as f64).collect();
    let lo = vec![0i64; d];
    let hi = vec![steps - 1; d];
    g.normalized(|x| {
        let mut sum = 0.0;
        for_each_box_point(&lo, &hi, |node| {
            let y: Vec<f64> = x.iter().zip(node).map(|(v, s)| *v as f64 + offsets[*s as usize]).collect();
            sum += (-g.q(&y) / 2.0).exp();
        });
        sum
    })
}

/// Total variation between the rounded and the lattice-weighted discretizations.
pub fn rounding_tv(mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let a = rounded_gaussian(mean, cov, DEFAULT_TAIL, 8)?;
    let b = lattice_weight_gaussian(mean, cov, DEFAULT_TAIL)?;
    tv_distance(&a, &b)
}
