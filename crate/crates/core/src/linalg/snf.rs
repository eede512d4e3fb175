use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::IntegerMatrix;
use crate::error::{Error, Result};

/// `M = U * D * V` with `U`, `V` unimodular and `D` diagonal with positive
/// entries. No divisibility chain is imposed on `D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnfDecomposition {
    pub u: IntegerMatrix,
    pub d: IntegerMatrix,
    pub v: IntegerMatrix,
}

impl SnfDecomposition {
    pub fn diag(&self) -> Vec<i64> {
        (0..self.d.k()).map(|i| self.d.get(i, i)).collect()
    }
}

const SMALL_LIMIT: i64 = 1 << 62;

trait Entry: Clone + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn abs_lt(&self, other: &Self) -> bool;
    /// Nearest-integer quotient `round(p / q)`.
    fn nearest(p: &Self, q: &Self) -> Self;
    /// `x a + y b`, or `None` when the small representation would overflow.
    fn lin(x: &Self, a: &Self, y: &Self, b: &Self) -> Option<Self>;
    fn neg(&self) -> Self;
}

impl Entry for i64 {
    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn is_neg(&self) -> bool {
        *self < 0
    }
    fn abs_lt(&self, other: &Self) -> bool {
        self.unsigned_abs() < other.unsigned_abs()
    }
    fn nearest(p: &Self, q: &Self) -> Self {
        let (a, b) = (*p as i128, *q as i128);
        let f = a.div_euclid(b);
        let r = a - f * b;
        (if 2 * r > b.abs() { f + b.signum() } else { f }) as i64
    }
    fn lin(x: &Self, a: &Self, y: &Self, b: &Self) -> Option<Self> {
        let r = *x as i128 * *a as i128 + *y as i128 * *b as i128;
        (r.unsigned_abs() <= SMALL_LIMIT as u128).then_some(r as i64)
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl Entry for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn abs_lt(&self, other: &Self) -> bool {
        self.abs() < other.abs()
    }
    fn nearest(p: &Self, q: &Self) -> Self {
        let f = p.div_floor(q);
        let r = p - &f * q;
        if BigInt::from(2) * r.abs() > q.abs() {
            f + 1
        } else {
            f
        }
    }
    fn lin(x: &Self, a: &Self, y: &Self, b: &Self) -> Option<Self> {
        Some(x * a + y * b)
    }
    fn neg(&self) -> Self {
        -self
    }
}

type Mat<T> = Vec<Vec<T>>;

fn ident<T: Entry>(k: usize) -> Mat<T> {
    (0..k).map(|i| (0..k).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect()
}

/// Nearest-integer quotient `round(p / q)`.
fn nearest_quot<T: Entry>(p: &T, q: &T) -> T {
    T::nearest(p, q)
}

/// Elimination with nearest-integer quotients, always pivoting on the
/// smallest nonzero entry of the trailing block. Maintains `M = U * A * V`.
fn reduce<T: Entry>(mut a: Mat<T>) -> Option<std::result::Result<(Mat<T>, Mat<T>, Mat<T>), ()>> {
    let k = a.len();
    let mut u = ident::<T>(k);
    let mut v = ident::<T>(k);
    for t in 0..k {
        loop {
            let mut piv: Option<(usize, usize)> = None;
            for i in t..k {
                for j in t..k {
                    if !a[i][j].is_zero() && piv.is_none_or(|(pi, pj)| a[i][j].abs_lt(&a[pi][pj])) {
                        piv = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = piv else {
                return Some(Err(()));
            };
            if pi != t {
                a.swap(pi, t);
                for row in u.iter_mut() {
                    row.swap(pi, t);
                }
            }
            if pj != t {
                for row in a.iter_mut() {
                    row.swap(pj, t);
                }
                v.swap(pj, t);
            }
            let mut done = true;
            for i in t + 1..k {
                if a[i][t].is_zero() {
                    continue;
                }
                // row_i -= q row_t, compensated by col_t(U) += q col_i(U).
                let q = nearest_quot(&a[i][t], &a[t][t]);
                let nq = q.neg();
                for j in t..k {
                    a[i][j] = T::lin(&T::one(), &a[i][j], &nq, &a[t][j])?;
                }
                for row in u.iter_mut() {
                    row[t] = T::lin(&T::one(), &row[t], &q, &row[i])?;
                }
                if !a[i][t].is_zero() {
                    done = false;
                }
            }
            for j in t + 1..k {
                if a[t][j].is_zero() {
                    continue;
                }
                // col_j -= q col_t, compensated by row_t(V) += q row_j(V).
                let q = nearest_quot(&a[t][j], &a[t][t]);
                let nq = q.neg();
                for row in a.iter_mut().skip(t) {
                    row[j] = T::lin(&T::one(), &row[j], &nq, &row[t])?;
                }
                for c in 0..k {
                    v[t][c] = T::lin(&T::one(), &v[t][c], &q, &v[j][c])?;
                }
                if !a[t][j].is_zero() {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if a[t][t].is_neg() {
            for j in t..k {
                a[t][j] = a[t][j].neg();
            }
            for row in u.iter_mut() {
                row[t] = row[t].neg();
            }
        }
    }
    Some(Ok((u, a, v)))
}

fn to_matrix<T: Clone>(m: Mat<T>, conv: impl Fn(T) -> Option<i64>) -> Result<IntegerMatrix> {
    let rows = m
        .into_iter()
        .map(|r| r.into_iter().map(|x| conv(x).ok_or(Error::Overflow)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    IntegerMatrix::new(rows)
}

/// Diagonalizes `M` by unimodular row and column operations.
///
/// ```
/// use pmd_toolkit::linalg::{smith_normal_form, IntegerMatrix};
/// let m = IntegerMatrix::new(vec![vec![2, 1], vec![0, 3]]).unwrap();
/// let s = smith_normal_form(&m).unwrap();
/// assert_eq!(s.u.mul(&s.d).unwrap().mul(&s.v).unwrap(), m);
/// ```
pub fn smith_normal_form(m: &IntegerMatrix) -> Result<SnfDecomposition> {
    let k = m.k();
    if m.is_diagonal() {
        let d: Vec<i64> = (0..k).map(|i| m.get(i, i)).collect();
        if d.contains(&0) {
            return Err(Error::SingularMatrix);
        }
        let signs: Vec<i64> = d.iter().map(|x| x.signum()).collect();
        let abs: Vec<i64> = d.iter().map(|x| x.checked_abs().ok_or(Error::Overflow)).collect::<Result<_>>()?;
        return Ok(SnfDecomposition {
            u: IntegerMatrix::diagonal(&signs),
            d: IntegerMatrix::diagonal(&abs),
            v: IntegerMatrix::identity(k),
        });
    }
    let small = m.rows();
    let fits = small.iter().flatten().all(|x| x.unsigned_abs() <= SMALL_LIMIT as u64);
    if fits {
        match reduce::<i64>(small) {
            Some(Ok((u, d, v))) => {
                return Ok(SnfDecomposition {
                    u: to_matrix(u, Some)?,
                    d: to_matrix(d, Some)?,
                    v: to_matrix(v, Some)?,
                })
            }
            Some(Err(())) => return Err(Error::SingularMatrix),
            None => {}
        }
    }
    let big: Mat<BigInt> = m.rows().into_iter().map(|r| r.into_iter().map(BigInt::from).collect()).collect();
    match reduce::<BigInt>(big) {
        Some(Ok((u, d, v))) => Ok(SnfDecomposition {
            u: to_matrix(u, |x| x.to_i64())?,
            d: to_matrix(d, |x| x.to_i64())?,
            v: to_matrix(v, |x| x.to_i64())?,
        }),
        Some(Err(())) => Err(Error::SingularMatrix),
        None => unreachable!("big-integer reduction cannot overflow"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wide_product(a: &IntegerMatrix, b: &IntegerMatrix) -> Vec<Vec<BigInt>> {
        let n = a.k();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|t| BigInt::from(a.get(i, t)) * b.get(t, j)).sum()).collect())
            .collect()
    }

    fn check(m: &IntegerMatrix, s: &SnfDecomposition) {
        // U D is a column scaling of U; only the final product is compared exactly.
        let ud = wide_product(&s.u, &s.d);
        let n = m.k();
        for i in 0..n {
            for j in 0..n {
                let x: BigInt = (0..n).map(|t| &ud[i][t] * s.v.get(t, j)).sum();
                assert_eq!(x, BigInt::from(m.get(i, j)));
            }
        }
        assert_eq!(s.u.det_big().abs(), BigInt::from(1));
        assert_eq!(s.v.det_big().abs(), BigInt::from(1));
        assert!(s.d.is_diagonal());
        assert!(s.diag().iter().all(|&x| x > 0));
        assert_eq!(s.d.det().unwrap().abs(), m.det().unwrap().abs());
    }

    #[test]
    fn examples() {
        let i = IntegerMatrix::identity(3);
        let s = smith_normal_form(&i).unwrap();
        assert_eq!(s.u, i);
        assert_eq!(s.d, i);
        assert_eq!(s.v, i);

        let m = IntegerMatrix::diagonal(&[2, 4]);
        let s = smith_normal_form(&m).unwrap();
        check(&m, &s);
        assert_eq!(s.diag().iter().product::<i64>(), 8);

        let m = IntegerMatrix::new(vec![vec![2, 1], vec![0, 3]]).unwrap();
        check(&m, &smith_normal_form(&m).unwrap());

        let m = IntegerMatrix::new(vec![vec![-3, 0], vec![0, 5]]).unwrap();
        check(&m, &smith_normal_form(&m).unwrap());
    }

    #[test]
    fn singular_is_rejected() {
        let m = IntegerMatrix::new(vec![vec![1, 2], vec![2, 4]]).unwrap();
        assert_eq!(smith_normal_form(&m), Err(Error::SingularMatrix));
    }

    #[test]
    fn huge_entries_fall_back_to_bigint() {
        let big = 1i64 << 61;
        let m = IntegerMatrix::new(vec![vec![big, 3], vec![5, big - 1]]).unwrap();
        match smith_normal_form(&m) {
            Ok(s) => check(&m, &s),
            Err(e) => assert_eq!(e, Error::Overflow),
        }
        let m = IntegerMatrix::new(vec![vec![i64::MAX, 1], vec![1, 1]]).unwrap();
        match smith_normal_form(&m) {
            Ok(s) => assert_eq!(s.u.mul(&s.d).unwrap().mul(&s.v).unwrap(), m),
            Err(e) => assert_eq!(e, Error::Overflow),
        }
    }

    proptest! {
        #[test]
        fn round_trip(k in 1usize..=5, entries in prop::collection::vec(-20i64..=20, 25)) {
            let rows: Vec<Vec<i64>> = (0..k).map(|i| entries[i * 5..i * 5 + k].to_vec()).collect();
            let m = IntegerMatrix::new(rows).unwrap();
            prop_assume!(m.det().unwrap() != 0);
            // Transform entries can outgrow i64 for k = 5; that must surface as Overflow.
            match smith_normal_form(&m) {
                Ok(s) => check(&m, &s),
                Err(Error::Overflow) if k == 5 => {}
                Err(e) => panic!("k = {k}: {e}"),
            }
        }
    }
}
