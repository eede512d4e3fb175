//! A family of `k`-maximal PMDs that pairwise differ in some parameter
//! moment, with every parameter an exact rational.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CategoricalRv, MomentIndex, Pmd};

/// Largest family that will be materialized.
pub const FAMILY_LIMIT: u128 = 10_000;

/// Members are indexed by `f : [a]^{k-1} -> [t]`. The CRV for cell `s` has
/// `p_j = (s_j + [j = 1] e f(s)) / L` for `j < k`, where `e` is a rational
/// stand-in for `eps^{3c}` and `L` an integer stand-in for `ln^k(1/eps)`.
#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundFamily {
    pub k: usize,
    pub a: u32,
    pub t: u32,
    #[serde(serialize_with = "ser_ratio")]
    pub epsilon: BigRational,
    #[serde(serialize_with = "ser_ratio")]
    pub c: BigRational,
    #[serde(serialize_with = "ser_ratio")]
    pub perturbation: BigRational,
    #[serde(serialize_with = "ser_int")]
    pub scale: BigInt,
    cells: Vec<Vec<u32>>,
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ser_int<S: serde::Serializer>(r: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Builds the family; fails with `FamilyTooLarge` beyond [`FAMILY_LIMIT`] members.
pub fn lower_bound_family(k: usize, a: u32, t: u32, epsilon: BigRational, c: BigRational) -> Result<LowerBoundFamily> {
    if k < 2 || a == 0 || t == 0 {
        return Err(Error::InvalidParameter("need k >= 2, a >= 1 and t >= 1".into()));
    }
    if !(epsilon > BigRational::zero() && epsilon < BigRational::one()) || c <= BigRational::zero() {
        return Err(Error::InvalidParameter("need 0 < eps < 1 and c > 0".into()));
    }
    let cells_count = (a as u128).checked_pow(k as u32 - 1).ok_or(Error::FamilyTooLarge(u128::MAX))?;
    let size = u32::try_from(cells_count)
        .ok()
        .and_then(|e| (t as u128).checked_pow(e))
        .ok_or(Error::FamilyTooLarge(u128::MAX))?;
    if size > FAMILY_LIMIT {
        return Err(Error::FamilyTooLarge(size));
    }
    let eps = ratio_to_f64(&epsilon);
    let pert = eps.powf(3.0 * ratio_to_f64(&c));
    let perturbation = BigRational::from_float(pert).ok_or(Error::InvalidParameter("eps^(3c) not finite".into()))?;
    // L bounds ln^k(1/eps) and keeps every p_j at most 1/k.
    let log_pow = (1.0 / eps).ln().powi(k as i32).ceil();
    let top = BigRational::from_integer(BigInt::from(a)) + &perturbation * BigRational::from_integer(BigInt::from(t));
    let need = (top * BigRational::from_integer(BigInt::from(k))).ceil().to_integer();
    let scale = BigInt::from(log_pow as u64).max(need).max(BigInt::one());
    let mut cells = Vec::new();
    let mut cur = vec![1u32; k - 1];
    loop {
        cells.push(cur.clone());
        let mut pos = k - 1;
        loop {
            if pos == 0 {
                return Ok(LowerBoundFamily { k, a, t, epsilon, c, perturbation, scale, cells });
            }
            pos -= 1;
            if cur[pos] < a {
                cur[pos] += 1;
                cur[pos + 1..].iter_mut().for_each(|x| *x = 1);
                break;
            }
        }
    }
}

impl LowerBoundFamily {
    /// Cells `s` in lexicographic order.
    pub fn cells(&self) -> &[Vec<u32>] {
        &self.cells
    }

    pub fn size(&self) -> usize {
        (self.t as usize).pow(self.cells.len() as u32)
    }

    /// The function with index `idx`, as values in `1..=t` per cell (base-`t` digits).
    pub fn function(&self, idx: usize) -> Vec<u32> {
        let mut out = vec![1u32; self.cells.len()];
        let mut rest = idx;
        for v in out.iter_mut().rev() {
            *v = 1 + (rest % self.t as usize) as u32;
            rest /= self.t as usize;
        }
        out
    }

    pub fn functions(&self) -> Vec<Vec<u32>> {
        (0..self.size()).map(|i| self.function(i)).collect()
    }

    /// Exact parameters `p_1..p_k` of each CRV of member `f`.
    pub fn parameters(&self, f: &[u32]) -> Result<Vec<Vec<BigRational>>> {
        if f.len() != self.cells.len() || f.iter().any(|v| *v == 0 || *v > self.t) {
            return Err(Error::InvalidParameter("function outside [a]^(k-1) -> [t]".into()));
        }
        let scale = BigRational::from_integer(self.scale.clone());
        Ok(self
            .cells
            .iter()
            .zip(f)
            .map(|(s, &fv)| {
                let mut p: Vec<BigRational> = s
                    .iter()
                    .enumerate()
                    .map(|(j, &sj)| {
                        let mut num = BigRational::from_integer(BigInt::from(sj));
                        if j == 0 {
                            num += &self.perturbation * BigRational::from_integer(BigInt::from(fv));
                        }
                        num / &scale
                    })
                    .collect();
                let rest = p.iter().fold(BigRational::one(), |acc, x| acc - x);
                p.push(rest);
                p
            })
            .collect())
    }

    /// Member `f` as a floating-point PMD.
    pub fn pmd(&self, f: &[u32]) -> Result<Pmd> {
        let crvs = self
            .parameters(f)?
            .iter()
            .map(|p| CategoricalRv::new(p.iter().map(ratio_to_f64).collect()))
            .collect::<Result<Vec<_>>>()?;
        Pmd::new(crvs)
    }

    /// Exact `M_m(X^f) = sum_s prod_{j<k} p_{s,j}^{m_j}`.
    pub fn moment(&self, f: &[u32], m: &[u32]) -> Result<BigRational> {
        Ok(self
            .parameters(f)?
            .iter()
            .map(|p| m.iter().zip(p).fold(BigRational::one(), |acc, (e, x)| acc * num_traits::pow(x.clone(), *e as usize)))
            .fold(BigRational::zero(), |acc, x| acc + x))
    }

    /// Indices in `{0..a}^{k-1}` other than zero, by degree then lexicographically.
    pub fn search_order(&self) -> Vec<Vec<u32>> {
        let d = self.k - 1;
        let mut all: Vec<Vec<u32>> = Vec::new();
        let total = (self.a as usize + 1).pow(d as u32);
        for mut idx in 1..total {
            let mut m = vec![0u32; d];
            for v in m.iter_mut().rev() {
                *v = (idx % (self.a as usize + 1)) as u32;
                idx /= self.a as usize + 1;
            }
            all.push(m);
        }
        all.sort_by(|x, y| x.iter().sum::<u32>().cmp(&y.iter().sum::<u32>()).then_with(|| x.cmp(y)));
        all
    }
}

/// First moment index (padded with `m_k = 0`) on which members `f` and `g`
/// differ, with the exact absolute difference.
pub fn verify_moment_separation(family: &LowerBoundFamily, f: &[u32], g: &[u32]) -> Result<(MomentIndex, BigRational)> {
    if f == g {
        return Err(Error::IdenticalMembers);
    }
    for m in family.search_order() {
        let diff = (family.moment(f, &m)? - family.moment(g, &m)?).abs();
        if !diff.is_zero() {
            let mut full = m;
            full.push(0);
            return Ok((MomentIndex::new(full)?, diff));
        }
    }
    Err(Error::NoSeparatingMoment)
}
