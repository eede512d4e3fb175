use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{floor_affine, smith_normal_form, IntegerMatrix};
use crate::error::{Error, Result};

/// Cap on the number of integer points visited by [`enumerate_dual_ball`].
pub const BALL_LIMIT: u64 = 10_000_000;

/// A class of `L* / Z^k` for `L = M Z^k`.
///
/// The class is stored through its canonical representative
/// `xi = num / den` with `0 <= num_i < den = |det M|`, together with the
/// integer vector `v = M^T xi`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualClass {
    pub num: Vec<i64>,
    pub den: i64,
    pub v: Vec<i64>,
}

impl DualClass {
    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&x| x == 0)
    }

    pub fn xi(&self) -> Vec<f64> {
        self.num.iter().map(|&n| n as f64 / self.den as f64).collect()
    }

    /// `(den * xi . x) mod den`, exact.
    pub fn phase_numerator(&self, x: &[i64]) -> i64 {
        let d = self.den as i128;
        let mut s: i128 = 0;
        for (n, xi) in self.num.iter().zip(x) {
            s = (s + (*n as i128) * (*xi as i128).rem_euclid(d)).rem_euclid(d);
        }
        s as i64
    }

    /// `xi . x mod 1` in `[0, 1)`.
    pub fn phase(&self, x: &[i64]) -> f64 {
        self.phase_numerator(x) as f64 / self.den as f64
    }
}

/// A nonsingular lattice basis with the exact data needed for reductions.
#[derive(Debug, Clone)]
pub struct Lattice {
    m: IntegerMatrix,
    det: i128,
    adj: Vec<i128>,
}

impl Lattice {
    pub fn new(m: IntegerMatrix) -> Result<Self> {
        let det = m.det()?;
        if det == 0 {
            return Err(Error::SingularMatrix);
        }
        let adj = m.adjugate()?;
        if i64::try_from(det.abs()).is_err() {
            return Err(Error::Overflow);
        }
        Ok(Lattice { m, det, adj })
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        &self.m
    }

    pub fn k(&self) -> usize {
        self.m.k()
    }

    pub fn det(&self) -> i128 {
        self.det
    }

    /// `|det M|`, the number of dual classes and of domain points.
    pub fn abs_det(&self) -> i64 {
        self.det.abs() as i64
    }

    /// Canonical class of `xi = (M^T)^{-1} v`.
    pub fn class_of(&self, v: &[i64]) -> DualClass {
        let k = self.k();
        let den = self.det.abs();
        let sign = self.det.signum();
        // (M^T)^{-1} = adj(M)^T / det.
        let num: Vec<i64> = (0..k)
            .map(|i| {
                let w: i128 = (0..k).map(|j| self.adj[j * k + i] * v[j] as i128).sum();
                (sign * w).rem_euclid(den) as i64
            })
            .collect();
        let v = (0..k)
            .map(|i| {
                let s: i128 = (0..k).map(|j| self.m.get(j, i) as i128 * num[j] as i128).sum();
                debug_assert_eq!(s % den, 0);
                (s / den) as i64
            })
            .collect();
        DualClass { num, den: den as i64, v }
    }

    /// `R(M^{-1}(m - x))` with `R(z) = floor(z + 1/2)`.
    pub fn rounding_vector(&self, anchor: &[f64], x: &[i64]) -> Vec<i64> {
        let k = self.k();
        let s = self.det.signum();
        (0..k)
            .map(|i| {
                let row: Vec<i128> = (0..k).map(|j| 2 * s * self.adj[i * k + j]).collect();
                let ax: i128 = (0..k).map(|j| self.adj[i * k + j] * x[j] as i128).sum();
                floor_affine(&row, anchor, -2 * s * ax + self.det.abs(), 2 * self.det.abs())
            })
            .collect()
    }

    /// Representative of `x + L` in `anchor + M(-1/2, 1/2]^k`.
    pub fn reduce(&self, anchor: &[f64], x: &[i64]) -> Vec<i64> {
        let r = self.rounding_vector(anchor, x);
        let shift = self.m.mul_vec(&r);
        x.iter().zip(shift).map(|(a, b)| (*a as i128 + b) as i64).collect()
    }

    pub fn in_domain(&self, anchor: &[f64], x: &[i64]) -> bool {
        self.rounding_vector(anchor, x).iter().all(|&r| r == 0)
    }

    /// One class per element of `L* / Z^k`, zero class first.
    pub fn all_classes(&self) -> Result<Vec<DualClass>> {
        let snf = smith_normal_form(&self.m)?;
        let d = snf.diag();
        let k = self.k();
        let vt = snf.v.transpose();
        let mut out = BTreeMap::new();
        let mut c = vec![0i64; k];
        loop {
            let v: Vec<i64> = vt.mul_vec(&c).into_iter().map(|x| x as i64).collect();
            let cls = self.class_of(&v);
            out.insert(cls.num.clone(), cls);
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(out.into_values().collect());
                }
                i -= 1;
                c[i] += 1;
                if c[i] < d[i] {
                    break;
                }
                c[i] = 0;
            }
        }
    }
}

/// See [`Lattice::reduce`].
pub fn reduce_to_fundamental_domain(m: &IntegerMatrix, anchor: &[f64], x: &[i64]) -> Result<Vec<i64>> {
    Ok(Lattice::new(m.clone())?.reduce(anchor, x))
}

/// Visits every `v` with `max_i |v_i| = s` in lexicographic order.
fn for_each_shell(k: usize, s: i64, f: &mut dyn FnMut(&[i64]) -> bool) -> bool {
    if s == 0 {
        return f(&vec![0; k]);
    }
    let mut v = vec![0i64; k];
    for first in 0..k {
        for sign in [-1i64, 1] {
            let lo: Vec<i64> = (0..k)
                .map(|i| match i.cmp(&first) {
                    std::cmp::Ordering::Less => -(s - 1),
                    std::cmp::Ordering::Equal => sign * s,
                    std::cmp::Ordering::Greater => -s,
                })
                .collect();
            let hi: Vec<i64> = (0..k)
                .map(|i| match i.cmp(&first) {
                    std::cmp::Ordering::Less => s - 1,
                    std::cmp::Ordering::Equal => sign * s,
                    std::cmp::Ordering::Greater => s,
                })
                .collect();
            v.copy_from_slice(&lo);
            loop {
                if !f(&v) {
                    return false;
                }
                let mut i = k;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    if v[i] < hi[i] {
                        v[i] += 1;
                        for j in i + 1..k {
                            v[j] = lo[j];
                        }
                        i = usize::MAX;
                        break;
                    }
                }
                if i != usize::MAX {
                    break;
                }
            }
        }
    }
    true
}

/// One representative per class of `{ (M^T)^{-1} v : |v|_2 <= radius }` modulo `Z^k`.
///
/// The zero class comes first, the rest follow in lexicographic order of
/// their canonical numerators. Enumeration stops early once every one of the
/// `|det M|` classes has been seen.
pub fn enumerate_dual_ball(m: &IntegerMatrix, radius: f64) -> Result<Vec<DualClass>> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter("radius must be nonnegative".into()));
    }
    let lat = Lattice::new(m.clone())?;
    lattice_ball(&lat, radius)
}

pub(crate) fn lattice_ball(lat: &Lattice, radius: f64) -> Result<Vec<DualClass>> {
    let k = lat.k();
    let total = lat.abs_det() as usize;
    let r2 = radius * radius;
    let mut found: BTreeMap<Vec<i64>, DualClass> = BTreeMap::new();
    let mut visited: u64 = 0;
    let mut overflow = false;
    let smax = radius.floor() as i64;
    for s in 0..=smax {
        let keep_going = for_each_shell(k, s, &mut |v| {
            visited += 1;
            if visited > BALL_LIMIT {
                overflow = true;
                return false;
            }
            let n2: i128 = v.iter().map(|&x| (x as i128) * (x as i128)).sum();
            if (n2 as f64) <= r2 {
                let c = lat.class_of(v);
                found.entry(c.num.clone()).or_insert(c);
            }
            found.len() < total
        });
        if overflow {
            return Err(Error::BallTooLarge(BALL_LIMIT));
        }
        if !keep_going {
            break;
        }
    }
    Ok(found.into_values().collect())
}
