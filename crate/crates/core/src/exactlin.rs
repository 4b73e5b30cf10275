//! Exact linear algebra over the rationals.
//!
//! Everything here is exact: ranks and determinants go through fraction-free
//! (Bareiss) elimination on an integer rescaling of the input, RREF is plain
//! Gauss–Jordan over `BigRational`.

use std::fmt;

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational scalar.
pub type Scalar = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("minor order {order} exceeds min({rows}, {cols})")]
    MinorOrder { order: usize, rows: usize, cols: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed rational {0:?}")]
    Parse(String),
}

/// Integer as a scalar.
pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

/// `n / d` as a scalar. Panics on `d == 0`.
pub fn q(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

/// `2^-k`.
pub fn dyadic(k: u32) -> Scalar {
    Scalar::new(BigInt::one(), BigInt::one() << k)
}

/// Parses `"p/q"`, `"p"` or a plain decimal such as `"-0.125"`.
pub fn parse_scalar(s: &str) -> Result<Scalar, LinError> {
    let t = s.trim();
    let bad = || LinError::Parse(s.to_string());
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Scalar::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let v = Scalar::new(n, d);
        return Ok(if neg { -v } else { v });
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(Scalar::from_integer(n))
}

/// Canonical `"p/q"` (or `"p"`) rendering.
pub fn fmt_scalar(x: &Scalar) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn to_f64(x: &Scalar) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// vectors

pub fn dot(a: &[Scalar], b: &[Scalar]) -> Scalar {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(Scalar::zero(), |acc, (x, y)| acc + x * y)
}

pub fn norm_sq(a: &[Scalar]) -> Scalar {
    dot(a, a)
}

pub fn sub(a: &[Scalar], b: &[Scalar]) -> Vec<Scalar> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[Scalar], b: &[Scalar]) -> Vec<Scalar> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[Scalar], s: &Scalar) -> Vec<Scalar> {
    a.iter().map(|x| x * s).collect()
}

pub fn is_zero_vec(a: &[Scalar]) -> bool {
    a.iter().all(Zero::is_zero)
}

/// Gram–Schmidt without normalisation: returns mutually orthogonal vectors
/// spanning the same space (zero vectors dropped) and their squared norms.
pub fn orthogonal_basis(vs: &[Vec<Scalar>]) -> (Vec<Vec<Scalar>>, Vec<Scalar>) {
    let mut out: Vec<Vec<Scalar>> = Vec::new();
    let mut norms: Vec<Scalar> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for (u, nu) in out.iter().zip(&norms) {
            let c = dot(&w, u) / nu;
            if !c.is_zero() {
                w = sub(&w, &scale(u, &c));
            }
        }
        if !is_zero_vec(&w) {
            norms.push(norm_sq(&w));
            out.push(w);
        }
    }
    (out, norms)
}

// ---------------------------------------------------------------------------
// matrices

/// Dense row-major rational matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(fmt_scalar).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![Scalar::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Scalar::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>) -> Result<Self, LinError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinError::Shape("ragged rows".into()));
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    /// Builds a matrix whose columns are the given vectors, all of length `rows`.
    pub fn from_cols(rows: usize, cols: &[Vec<Scalar>]) -> Result<Self, LinError> {
        if cols.iter().any(|c| c.len() != rows) {
            return Err(LinError::Shape(format!("column length differs from {rows}")));
        }
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, x) in c.iter().enumerate() {
                m[(i, j)] = x.clone();
            }
        }
        Ok(m)
    }

    /// Small-integer convenience constructor, mostly for tests.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect())
            .expect("ragged integer matrix")
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<Scalar> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn cols_vec(&self) -> Vec<Vec<Scalar>> {
        (0..self.cols).map(|j| self.col(j)).collect()
    }

    pub fn rows_vec(&self) -> Vec<Vec<Scalar>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, LinError> {
        if self.cols != other.rows {
            return Err(LinError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(v.len(), self.cols, "vector length");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix, LinError> {
        if self.rows != other.rows && self.cols > 0 && other.cols > 0 {
            return Err(LinError::Shape("hcat row mismatch".into()));
        }
        let rows = if self.cols == 0 { other.rows } else { self.rows };
        let mut cols = self.cols_vec();
        cols.extend(other.cols_vec());
        Matrix::from_cols(rows, &cols)
    }

    /// Submatrix on the given (ordered) row and column indices.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m[(a, b)] = self[(i, j)].clone();
            }
        }
        m
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = Scalar;
    fn index(&self, (i, j): (usize, usize)) -> &Scalar {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Scalar {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// fraction-free elimination

/// Rescales each row to integers. Returns the integer rows and the product of
/// the row multipliers (so `det(m) = det(int) / factor`).
fn integerize(m: &Matrix) -> (Vec<Vec<BigInt>>, BigInt) {
    let mut factor = BigInt::one();
    let rows = (0..m.rows)
        .map(|i| {
            let row = m.row(i);
            let l = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            factor *= &l;
            row.iter().map(|x| (x * Scalar::from_integer(l.clone())).to_integer()).collect()
        })
        .collect();
    (rows, factor)
}

/// Bareiss elimination in place. Returns (rank, sign of row permutation,
/// last pivot). For a square full-rank input the last pivot is the determinant.
fn bareiss(a: &mut [Vec<BigInt>], cols: usize) -> (usize, i32, BigInt) {
    let rows = a.len();
    let mut prev = BigInt::one();
    let mut sign = 1;
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        if p != r {
            a.swap(p, r);
            sign = -sign;
        }
        for i in r + 1..rows {
            for j in c + 1..cols {
                let v = (&a[r][c] * &a[i][j] - &a[i][c] * &a[r][j]) / &prev;
                a[i][j] = v;
            }
            a[i][c] = BigInt::zero();
        }
        prev = a[r][c].clone();
        r += 1;
    }
    (r, sign, prev)
}

/// Rank over Q.
pub fn rank(m: &Matrix) -> usize {
    if m.rows == 0 || m.cols == 0 {
        return 0;
    }
    // eliminate along the shorter side
    let m = if m.rows > m.cols { m.transpose() } else { m.clone() };
    let (mut a, _) = integerize(&m);
    bareiss(&mut a, m.cols).0
}

/// Determinant of a square matrix (`det` of the 0x0 matrix is 1).
pub fn det(m: &Matrix) -> Result<Scalar, LinError> {
    if m.rows != m.cols {
        return Err(LinError::NotSquare { rows: m.rows, cols: m.cols });
    }
    if m.rows == 0 {
        return Ok(Scalar::one());
    }
    let (mut a, factor) = integerize(m);
    let (r, sign, last) = bareiss(&mut a, m.cols);
    if r < m.rows {
        return Ok(Scalar::zero());
    }
    let d = Scalar::new(last, factor);
    Ok(if sign < 0 { -d } else { d })
}

/// Largest absolute value of an `r x r` minor; `M_0 = 1`.
pub fn max_minor(m: &Matrix, r: usize) -> Result<Scalar, LinError> {
    if r > m.rows.min(m.cols) {
        return Err(LinError::MinorOrder { order: r, rows: m.rows, cols: m.cols });
    }
    if r == 0 {
        return Ok(Scalar::one());
    }
    let mut best = Scalar::zero();
    for rs in (0..m.rows).combinations(r) {
        for cs in (0..m.cols).combinations(r) {
            let d = det(&m.select(&rs, &cs))?.abs();
            if d > best {
                best = d;
            }
        }
    }
    Ok(best)
}

/// Largest `det(m[R, S])^2 / prod_{c in S} |m_c|^2` over `r`-subsets; this is
/// the squared `r`-minor of `m` after normalising every column to unit length.
/// Zero columns contribute nothing. `r = 0` gives 1.
pub fn max_normalized_minor_sq(m: &Matrix, r: usize) -> Result<Scalar, LinError> {
    if r > m.rows.min(m.cols) {
        return Err(LinError::MinorOrder { order: r, rows: m.rows, cols: m.cols });
    }
    if r == 0 {
        return Ok(Scalar::one());
    }
    let norms: Vec<Scalar> = (0..m.cols).map(|j| norm_sq(&m.col(j))).collect();
    let (all, approx) = minor_candidates(m, r, &norms);
    let top = approx.iter().copied().fold(0.0, f64::max);
    let keep = |v: f64| top < 1e-8 || !top.is_finite() || v >= top * (1.0 - 1e-6);
    let mut best = Scalar::zero();
    for ((rs, cs), v) in all.iter().zip(&approx) {
        if !keep(*v) {
            continue;
        }
        let d = det(&m.select(rs, cs))?;
        if d.is_zero() {
            continue;
        }
        let denom = cs.iter().fold(Scalar::one(), |acc, &j| acc * &norms[j]);
        let v = &d * &d / &denom;
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Every `(rows, cols)` choice of an `r`-minor over nonzero columns, with
/// its normalised square in floating point.
fn minor_candidates(m: &Matrix, r: usize, norms: &[Scalar]) -> (Vec<(Vec<usize>, Vec<usize>)>, Vec<f64>) {
    let live: Vec<usize> = (0..m.cols).filter(|&j| !norms[j].is_zero()).collect();
    let all: Vec<(Vec<usize>, Vec<usize>)> = live
        .iter()
        .copied()
        .combinations(r)
        .flat_map(|cs| (0..m.rows).combinations(r).map(move |rs| (rs, cs.clone())))
        .collect();
    let unit: Vec<Vec<f64>> = (0..m.cols)
        .map(|j| {
            let len = to_f64(&norms[j]).sqrt();
            m.col(j).iter().map(|x| if len > 0.0 { to_f64(x) / len } else { 0.0 }).collect()
        })
        .collect();
    let approx = all
        .iter()
        .map(|(rs, cs)| {
            let mut a: Vec<Vec<f64>> = rs.iter().map(|&i| cs.iter().map(|&j| unit[j][i]).collect()).collect();
            let d = det_f64(&mut a);
            d * d
        })
        .collect();
    (all, approx)
}

/// Determinant by partial pivoting; destroys `a`.
fn det_f64(a: &mut [Vec<f64>]) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(p, k);
            d = -d;
        }
        d *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    d
}

/// Whether some `r x r` minor has normalised square (as in
/// [`max_normalized_minor_sq`]) at least `c2`. Tries the pivot columns and
/// rows first and stops at the first hit.
pub fn has_normalized_minor_at_least(m: &Matrix, r: usize, c2: &Scalar) -> Result<bool, LinError> {
    if r > m.rows.min(m.cols) {
        return Err(LinError::MinorOrder { order: r, rows: m.rows, cols: m.cols });
    }
    if r == 0 {
        return Ok(&Scalar::one() >= c2);
    }
    let norms: Vec<Scalar> = (0..m.cols).map(|j| norm_sq(&m.col(j))).collect();
    let check = |rs: &[usize], cs: &[usize]| -> Result<bool, LinError> {
        let d = det(&m.select(rs, cs))?;
        if d.is_zero() {
            return Ok(false);
        }
        let denom = cs.iter().fold(Scalar::one(), |acc, &j| acc * &norms[j]);
        Ok(&(&d * &d / denom) >= c2)
    };
    let (all, approx) = minor_candidates(m, r, &norms);
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| approx[b].total_cmp(&approx[a]));
    let top = order.first().map_or(0.0, |&i| approx[i]);
    let c2f = to_f64(c2);
    let trusted = top >= 1e-8 && top.is_finite() && c2f >= 1e-10;
    for i in order {
        // below the float cut nothing can reach c2
        if trusted && approx[i] < c2f * (1.0 - 1e-6) {
            break;
        }
        if check(&all[i].0, &all[i].1)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `det(m^T m)`, the squared volume spanned by the columns.
pub fn gram_det(m: &Matrix) -> Scalar {
    let g = m.transpose().mul(m).expect("m^T m is square");
    det(&g).expect("gram matrix is square")
}

/// Reduced row echelon form together with the pivot columns.
pub fn rref_with_pivots(m: &Matrix) -> (Matrix, Vec<usize>) {
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..a.cols {
        if r == a.rows {
            break;
        }
        let Some(p) = (r..a.rows).find(|&i| !a[(i, c)].is_zero()) else { continue };
        a.swap_rows(p, r);
        let inv = a[(r, c)].recip();
        for j in c..a.cols {
            let v = &a[(r, j)] * &inv;
            a[(r, j)] = v;
        }
        for i in 0..a.rows {
            if i == r || a[(i, c)].is_zero() {
                continue;
            }
            let f = a[(i, c)].clone();
            for j in c..a.cols {
                let v = &a[(r, j)] * &f;
                a[(i, j)] -= v;
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

/// Canonical RREF; zero rows stay at the bottom so the shape is preserved.
pub fn canonical_rref(m: &Matrix) -> Matrix {
    rref_with_pivots(m).0
}

/// Basis of the right kernel `{x : m x = 0}`.
pub fn nullspace(m: &Matrix) -> Vec<Vec<Scalar>> {
    let (r, pivots) = rref_with_pivots(m);
    let free: Vec<usize> = (0..m.cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Scalar::zero(); m.cols];
            v[f] = Scalar::one();
            for (i, &p) in pivots.iter().enumerate() {
                v[p] = -r[(i, f)].clone();
            }
            v
        })
        .collect()
}

/// One solution of `m x = b`, or `None` if the system is inconsistent.
pub fn solve(m: &Matrix, b: &[Scalar]) -> Option<Vec<Scalar>> {
    assert_eq!(b.len(), m.rows, "right-hand side length");
    let aug = m.hcat(&Matrix::from_cols(m.rows, &[b.to_vec()]).ok()?).ok()?;
    let (r, pivots) = rref_with_pivots(&aug);
    if pivots.last() == Some(&m.cols) {
        return None;
    }
    let mut x = vec![Scalar::zero(); m.cols];
    for (i, &p) in pivots.iter().enumerate() {
        x[p] = r[(i, m.cols)].clone();
    }
    Some(x)
}

/// A maximal independent subset of the columns, as column vectors.
pub fn column_basis(m: &Matrix) -> Vec<Vec<Scalar>> {
    let (_, pivots) = rref_with_pivots(m);
    pivots.iter().map(|&j| m.col(j)).collect()
}

/// Inverse of a square matrix, `None` if singular.
pub fn inverse(m: &Matrix) -> Option<Matrix> {
    let n = m.rows;
    if n != m.cols {
        return None;
    }
    let aug = m.hcat(&Matrix::identity(n)).ok()?;
    let (r, pivots) = rref_with_pivots(&aug);
    if pivots.len() < n || pivots[n - 1] != n - 1 {
        return None;
    }
    let idx: Vec<usize> = (0..n).collect();
    let right: Vec<usize> = (n..2 * n).collect();
    Some(r.select(&idx, &right))
}
