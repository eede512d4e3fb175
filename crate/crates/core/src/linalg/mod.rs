//! Integer matrices, symmetric eigendecomposition, Smith normal form and
//! lattice utilities (fundamental domains and dual classes).

mod eigen;
mod lattice;
mod snf;

pub use eigen::{sym_eigen, EigenDecomposition};
pub use lattice::{enumerate_dual_ball, reduce_to_fundamental_domain, DualClass, Lattice, BALL_LIMIT};
pub use snf::{smith_normal_form, SnfDecomposition};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A square integer matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntegerMatrix {
    k: usize,
    data: Vec<i64>,
}

impl TryFrom<Vec<Vec<i64>>> for IntegerMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        IntegerMatrix::new(rows)
    }
}

impl From<IntegerMatrix> for Vec<Vec<i64>> {
    fn from(m: IntegerMatrix) -> Self {
        m.rows()
    }
}

impl IntegerMatrix {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidShape("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(k * k);
        for r in rows {
            if r.len() != k {
                return Err(Error::InvalidShape("matrix is not square".into()));
            }
            data.extend(r);
        }
        Ok(IntegerMatrix { k, data })
    }

    pub fn identity(k: usize) -> Self {
        let mut data = vec![0; k * k];
        for i in 0..k {
            data[i * k + i] = 1;
        }
        IntegerMatrix { k, data }
    }

    pub fn diagonal(d: &[i64]) -> Self {
        let k = d.len();
        let mut data = vec![0; k * k];
        for i in 0..k {
            data[i * k + i] = d[i];
        }
        IntegerMatrix { k, data }
    }

    pub fn from_columns(cols: &[Vec<i64>]) -> Result<Self> {
        let k = cols.len();
        let mut rows = vec![vec![0; k]; k];
        for (j, c) in cols.iter().enumerate() {
            if c.len() != k {
                return Err(Error::InvalidShape("column length differs from column count".into()));
            }
            for i in 0..k {
                rows[i][j] = c[i];
            }
        }
        IntegerMatrix::new(rows)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.k + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.data.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        (0..self.k).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let k = self.k;
        let mut data = vec![0; k * k];
        for i in 0..k {
            for j in 0..k {
                data[j * k + i] = self.data[i * k + j];
            }
        }
        IntegerMatrix { k, data }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| i == j || self.get(i, j) == 0))
    }

    /// Exact product; `Overflow` if an entry leaves the i64 range.
    pub fn mul(&self, other: &IntegerMatrix) -> Result<IntegerMatrix> {
        let k = self.k;
        let mut data = vec![0i64; k * k];
        for i in 0..k {
            for j in 0..k {
                let s: i128 = (0..k).map(|t| self.get(i, t) as i128 * other.get(t, j) as i128).sum();
                data[i * k + j] = i64::try_from(s).map_err(|_| Error::Overflow)?;
            }
        }
        Ok(IntegerMatrix { k, data })
    }

    /// `M x` in 128-bit arithmetic.
    pub fn mul_vec(&self, x: &[i64]) -> Vec<i128> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j) as i128 * x[j] as i128).sum())
            .collect()
    }

    fn big_rows(&self) -> Vec<Vec<BigInt>> {
        self.rows().into_iter().map(|r| r.into_iter().map(BigInt::from).collect()).collect()
    }

    /// Exact determinant (fraction-free Gaussian elimination).
    pub fn det_big(&self) -> BigInt {
        bareiss_det(self.big_rows())
    }

    pub fn det(&self) -> Result<i128> {
        self.det_big().to_i128().ok_or(Error::Overflow)
    }

    /// Adjugate matrix, so that `M * adj(M) = det(M) * I`. Row-major.
    pub fn adjugate(&self) -> Result<Vec<i128>> {
        let k = self.k;
        if k == 1 {
            return Ok(vec![1]);
        }
        let rows = self.big_rows();
        let mut adj = vec![0i128; k * k];
        for i in 0..k {
            for j in 0..k {
                let minor: Vec<Vec<BigInt>> = rows
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| *r != i)
                    .map(|(_, row)| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect())
                    .collect();
                let mut c = bareiss_det(minor);
                if (i + j) % 2 == 1 {
                    c = -c;
                }
                // adj(M)_{j,i} is the (i,j) cofactor.
                adj[j * k + i] = c.to_i128().ok_or(Error::Overflow)?;
            }
        }
        Ok(adj)
    }

    /// Inverse of a unimodular matrix.
    pub fn inverse_unimodular(&self) -> Result<IntegerMatrix> {
        let det = self.det()?;
        if det.abs() != 1 {
            return Err(Error::InvalidParameter("matrix is not unimodular".into()));
        }
        let adj = self.adjugate()?;
        let data = adj
            .into_iter()
            .map(|a| i64::try_from(a * det).map_err(|_| Error::Overflow))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntegerMatrix { k: self.k, data })
    }
}

fn bareiss_det(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::from(1);
    }
    let mut sign = BigInt::from(1);
    let mut prev = BigInt::from(1);
    for p in 0..n {
        if a[p][p].is_zero() {
            match (p + 1..n).find(|&r| !a[r][p].is_zero()) {
                Some(r) => {
                    a.swap(p, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in p + 1..n {
            for j in p + 1..n {
                let v = &a[i][j] * &a[p][p] - &a[i][p] * &a[p][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[p][p].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// `floor((sum_j c_j * m_j + t) / d)` for integer `c`, `t` and `d > 0` and real
/// `m`, exact even at ties. A floating-point estimate is used unless it lies
/// too close to an integer, in which case the value is recomputed over the
/// rationals from the exact binary values of `m`.
pub fn floor_affine(c: &[i128], m: &[f64], t: i128, d: i128) -> i64 {
    debug_assert!(d > 0);
    let mut s = t as f64;
    let mut mag = (t as f64).abs();
    for (ci, mi) in c.iter().zip(m) {
        let term = *ci as f64 * mi;
        s += term;
        mag += term.abs();
    }
    let val = s / d as f64;
    let tol = 1e-9 * (1.0 + mag / d as f64);
    let fl = val.floor();
    if val - fl > tol && fl + 1.0 - val > tol {
        return fl as i64;
    }
    let mut acc = BigRational::from_integer(BigInt::from(t));
    for (ci, mi) in c.iter().zip(m) {
        if *ci != 0 {
            let mr = BigRational::from_f64(*mi).expect("finite anchor");
            acc += mr * BigRational::from_integer(BigInt::from(*ci));
        }
    }
    acc /= BigRational::from_integer(BigInt::from(d));
    let f = acc.floor().to_integer();
    f.to_i64().expect("rounded coordinate fits in i64")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_and_adjugate() {
        let m = IntegerMatrix::new(vec![vec![2, 1], vec![0, 3]]).unwrap();
        assert_eq!(m.det().unwrap(), 6);
        assert_eq!(m.adjugate().unwrap(), vec![3, -1, 0, 2]);
        let m = IntegerMatrix::new(vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 9]]).unwrap();
        assert_eq!(m.det().unwrap(), -3);
        let adj = m.adjugate().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: i128 = (0..3).map(|t| m.get(i, t) as i128 * adj[t * 3 + j]).sum();
                assert_eq!(s, if i == j { -3 } else { 0 });
            }
        }
    }

    #[test]
    fn floor_affine_ties_are_exact() {
        // 0.1 + 0.2 in binary is slightly above 0.3; (0.5 * 2 + 0) / 2 is exactly 0.5.
        assert_eq!(floor_affine(&[2], &[0.5], 1, 2), 1);
        assert_eq!(floor_affine(&[1, 1], &[0.25, 0.75], 0, 1), 1);
        assert_eq!(floor_affine(&[1], &[-0.5], 0, 1), -1);
        assert_eq!(floor_affine(&[3], &[1.0 / 3.0], 0, 1), 0);
    }
}
