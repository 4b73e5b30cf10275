//! Affine flats in `Q^n` with a canonical form, joins, meets and
//! neighbourhood tests.
//!
//! A flat is stored canonically: stack the homogeneous spanning vectors
//! `(1, p)` and `(0, d_i)` as rows, take the RREF, and read the basepoint and
//! direction basis back off it. Two flats are equal iff their canonical forms
//! agree, so the derived `Eq`/`Hash` are geometric equality.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::exactlin::{
    self, dot, fmt_scalar, gram_det, norm_sq, orthogonal_basis, rank, sub, to_f64, Matrix, Scalar,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlatError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("join of an empty family")]
    EmptyJoin,
    #[error("degenerate factor")]
    DegenerateFactor,
    #[error("spanning set has no affine point (all directions)")]
    NoAffinePoint,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffineFlat {
    ambient: usize,
    basepoint: Vec<Scalar>,
    directions: Vec<Vec<Scalar>>,
}

impl std::fmt::Debug for AffineFlat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p: Vec<String> = self.basepoint.iter().map(fmt_scalar).collect();
        let d: Vec<Vec<String>> =
            self.directions.iter().map(|v| v.iter().map(fmt_scalar).collect()).collect();
        write!(f, "Flat(dim {} in Q^{}; p=[{}]; dirs={:?})", self.dim(), self.ambient, p.join(","), d)
    }
}

impl AffineFlat {
    /// `p + span(directions)`; directions may be dependent.
    pub fn new(basepoint: Vec<Scalar>, directions: Vec<Vec<Scalar>>) -> Result<Self, FlatError> {
        let n = basepoint.len();
        if directions.iter().any(|d| d.len() != n) {
            return Err(FlatError::DimensionMismatch(format!("direction length differs from {n}")));
        }
        let mut rows = Vec::with_capacity(directions.len() + 1);
        rows.push(homog(&basepoint, Scalar::one()));
        rows.extend(directions.iter().map(|d| homog(d, Scalar::zero())));
        Self::from_homogeneous_rows(n, rows)
    }

    pub fn point(p: Vec<Scalar>) -> Self {
        Self::new(p, vec![]).expect("a point is a flat")
    }

    /// All of `Q^n`.
    pub fn full(n: usize) -> Self {
        let dirs = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Scalar::one() } else { Scalar::zero() }).collect())
            .collect();
        Self::new(vec![Scalar::zero(); n], dirs).expect("full space")
    }

    /// Affine span of a nonempty point set.
    pub fn through_points(pts: &[Vec<Scalar>]) -> Result<Self, FlatError> {
        let first = pts.first().ok_or(FlatError::EmptyJoin)?;
        let n = first.len();
        if pts.iter().any(|p| p.len() != n) {
            return Err(FlatError::DimensionMismatch("points of different lengths".into()));
        }
        Self::new(first.clone(), pts[1..].iter().map(|p| sub(p, first)).collect())
    }

    /// Builds a flat from homogeneous vectors `(h, x)` (homogeneous coordinate
    /// first). Fails if every vector has `h = 0`.
    fn from_homogeneous_rows(n: usize, rows: Vec<Vec<Scalar>>) -> Result<Self, FlatError> {
        if rows.is_empty() {
            return Err(FlatError::NoAffinePoint);
        }
        let (r, pivots) = exactlin::rref_with_pivots(&Matrix::from_rows(rows).expect("uniform rows"));
        if pivots.first() != Some(&0) {
            return Err(FlatError::NoAffinePoint);
        }
        let basepoint = r.row(0)[1..].to_vec();
        let directions = (1..pivots.len()).map(|i| r.row(i)[1..].to_vec()).collect();
        Ok(AffineFlat { ambient: n, basepoint, directions })
    }

    /// Solution set of `a x = c`, or `None` if inconsistent.
    pub fn from_equations(a: &Matrix, c: &[Scalar]) -> Option<Self> {
        let n = a.ncols();
        let p = if a.nrows() == 0 { vec![Scalar::zero(); n] } else { exactlin::solve(a, c)? };
        let dirs = if a.nrows() == 0 { Self::full(n).directions } else { exactlin::nullspace(a) };
        Some(Self::new(p, dirs).expect("consistent shapes"))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Canonical basepoint.
    pub fn basepoint(&self) -> &[Scalar] {
        &self.basepoint
    }

    /// Canonical (reduced) direction basis.
    pub fn directions(&self) -> &[Vec<Scalar>] {
        &self.directions
    }

    /// Homogeneous spanning vectors in the `(x; 1)`, `(d; 0)` convention.
    pub fn linear_span(&self) -> Vec<Vec<Scalar>> {
        let mut v = vec![lift(&self.basepoint)];
        v.extend(self.directions.iter().map(|d| {
            let mut d = d.clone();
            d.push(Scalar::zero());
            d
        }));
        v
    }

    /// `(n+1) x (dim+1)` matrix with columns `(p; 1)`, `(d_i; 0)`.
    pub fn linearize(&self) -> Matrix {
        Matrix::from_cols(self.ambient + 1, &self.linear_span()).expect("uniform columns")
    }

    /// Orthogonal (unnormalised) basis of the linearisation and squared norms.
    pub fn orthogonal_linear_basis(&self) -> (Vec<Vec<Scalar>>, Vec<Scalar>) {
        orthogonal_basis(&self.linear_span())
    }

    pub fn contains_point(&self, x: &[Scalar]) -> bool {
        x.len() == self.ambient && self.projector().sq_dist(x).is_zero()
    }

    /// `self ⊆ other`.
    pub fn is_subflat_of(&self, other: &AffineFlat) -> bool {
        self.ambient == other.ambient
            && other.contains_point(&self.basepoint)
            && self.directions.iter().all(|d| {
                let mut cols = other.directions.clone();
                cols.push(d.clone());
                rank(&Matrix::from_cols(self.ambient, &cols).unwrap()) == other.dim()
            })
    }

    /// Equations `a x = c` cutting out the flat (`n - dim` rows).
    pub fn equations(&self) -> (Matrix, Vec<Scalar>) {
        let n = self.ambient;
        let normals = if self.directions.is_empty() {
            Self::full(n).directions
        } else {
            exactlin::nullspace(&Matrix::from_rows(self.directions.clone()).unwrap())
        };
        let c = normals.iter().map(|v| dot(v, &self.basepoint)).collect();
        let a = if normals.is_empty() { Matrix::zeros(0, n) } else { Matrix::from_rows(normals).unwrap() };
        (a, c)
    }

    pub fn projector(&self) -> FlatProjector {
        FlatProjector::new(self)
    }

    /// Image under `x -> origin + lin * x` (lin is `m x n`).
    pub fn map_affine(&self, origin: &[Scalar], lin: &Matrix) -> AffineFlat {
        let p = exactlin::add(origin, &lin.mul_vec(&self.basepoint));
        let dirs = self.directions.iter().map(|d| lin.mul_vec(d)).collect();
        AffineFlat::new(p, dirs).expect("affine image")
    }

    /// Pretty form used in reports: basepoint and directions as rational strings.
    pub fn to_strings(&self) -> (Vec<String>, Vec<Vec<String>>) {
        (
            self.basepoint.iter().map(fmt_scalar).collect(),
            self.directions.iter().map(|d| d.iter().map(fmt_scalar).collect()).collect(),
        )
    }
}

fn homog(x: &[Scalar], h: Scalar) -> Vec<Scalar> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(h);
    v.extend_from_slice(x);
    v
}

/// `(x; 1)`.
pub fn lift(x: &[Scalar]) -> Vec<Scalar> {
    let mut v = x.to_vec();
    v.push(Scalar::one());
    v
}

fn check_ambient(fs: &[&AffineFlat]) -> Result<usize, FlatError> {
    let n = fs.first().ok_or(FlatError::EmptyJoin)?.ambient;
    if fs.iter().any(|f| f.ambient != n) {
        return Err(FlatError::DimensionMismatch("flats live in different ambient spaces".into()));
    }
    Ok(n)
}

/// Affine span of a nonempty family.
pub fn join(fs: &[&AffineFlat]) -> Result<AffineFlat, FlatError> {
    let n = check_ambient(fs)?;
    let mut rows = Vec::new();
    for f in fs {
        rows.push(homog(&f.basepoint, Scalar::one()));
        rows.extend(f.directions.iter().map(|d| homog(d, Scalar::zero())));
    }
    AffineFlat::from_homogeneous_rows(n, rows)
}

/// `dim join(fs)` without building the canonical form.
pub fn join_dim(fs: &[&AffineFlat]) -> Result<usize, FlatError> {
    let n = check_ambient(fs)?;
    let cols: Vec<Vec<Scalar>> = fs.iter().flat_map(|f| f.linear_span()).collect();
    Ok(rank(&Matrix::from_cols(n + 1, &cols).unwrap()) - 1)
}

/// Intersection, `None` when empty.
pub fn meet(f: &AffineFlat, g: &AffineFlat) -> Result<Option<AffineFlat>, FlatError> {
    let n = check_ambient(&[f, g])?;
    let a = f.linear_span();
    let b = g.linear_span();
    // kernel of [A | -B] parametrises the common vectors A s = B t
    let mut cols = a.clone();
    cols.extend(b.iter().map(|v| v.iter().map(|x| -x).collect::<Vec<_>>()));
    let ker = exactlin::nullspace(&Matrix::from_cols(n + 1, &cols).unwrap());
    let common: Vec<Vec<Scalar>> = ker
        .iter()
        .map(|k| {
            let mut v = vec![Scalar::zero(); n + 1];
            for (s, col) in k.iter().zip(&a) {
                if !s.is_zero() {
                    v = exactlin::add(&v, &exactlin::scale(col, s));
                }
            }
            // back to homogeneous-first order
            let mut h = vec![v[n].clone()];
            h.extend_from_slice(&v[..n]);
            h
        })
        .collect();
    match AffineFlat::from_homogeneous_rows(n, common) {
        Ok(m) => Ok(Some(m)),
        Err(FlatError::NoAffinePoint) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `dist(x, f) <= w`.
pub fn in_neighborhood(x: &[Scalar], f: &AffineFlat, w: &Scalar) -> bool {
    f.projector().sq_dist(x) <= w * w
}

/// `det((b,a)^T (b,a)) / (gram(b) gram(a))`: the squared sine of the angle
/// between the column spaces. Zero when `(b, a)` is rank deficient.
pub fn wedge_angle_sin2(b: &Matrix, a: &Matrix) -> Result<Scalar, FlatError> {
    if b.nrows() != a.nrows() {
        return Err(FlatError::DimensionMismatch(format!("{} vs {} rows", b.nrows(), a.nrows())));
    }
    if b.ncols() + a.ncols() > b.nrows() {
        return Err(FlatError::DimensionMismatch("more columns than rows".into()));
    }
    let gb = gram_det(b);
    let ga = gram_det(a);
    if gb.is_zero() || ga.is_zero() {
        return Err(FlatError::DegenerateFactor);
    }
    let ba = b.hcat(a).map_err(|e| FlatError::DimensionMismatch(e.to_string()))?;
    Ok(gram_det(&ba) / (gb * ga))
}

/// Precomputed orthogonal projection onto a flat, with a float shadow used to
/// skip the exact comparison when it is clearly not needed.
#[derive(Debug, Clone)]
pub struct FlatProjector {
    base: Vec<Scalar>,
    basis: Vec<Vec<Scalar>>,
    norms: Vec<Scalar>,
    base_f: Vec<f64>,
    unit_f: Vec<Vec<f64>>,
}

impl FlatProjector {
    pub fn new(f: &AffineFlat) -> Self {
        let (basis, norms) = orthogonal_basis(&f.directions);
        let unit_f = basis
            .iter()
            .zip(&norms)
            .map(|(u, nu)| {
                let s = to_f64(nu).sqrt();
                u.iter().map(|x| to_f64(x) / s).collect()
            })
            .collect();
        FlatProjector { base_f: f.basepoint.iter().map(to_f64).collect(), base: f.basepoint.clone(), basis, norms, unit_f }
    }

    /// Exact squared distance.
    pub fn sq_dist(&self, x: &[Scalar]) -> Scalar {
        let v = sub(x, &self.base);
        let mut d = norm_sq(&v);
        for (u, nu) in self.basis.iter().zip(&self.norms) {
            let c = dot(&v, u);
            if !c.is_zero() {
                d -= &c * &c / nu;
            }
        }
        d
    }

    /// Exact nearest point.
    pub fn project(&self, x: &[Scalar]) -> Vec<Scalar> {
        let v = sub(x, &self.base);
        let mut p = self.base.clone();
        for (u, nu) in self.basis.iter().zip(&self.norms) {
            let c = dot(&v, u) / nu;
            p = exactlin::add(&p, &exactlin::scale(u, &c));
        }
        p
    }

    pub fn sq_dist_f64(&self, xf: &[f64]) -> f64 {
        let v: Vec<f64> = xf.iter().zip(&self.base_f).map(|(a, b)| a - b).collect();
        let mut d: f64 = v.iter().map(|t| t * t).sum();
        for u in &self.unit_f {
            let c: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            d -= c * c;
        }
        d
    }

    /// `dist(x, flat)^2 <= r2`, deciding in floats when the margin is wide
    /// and falling back to exact arithmetic otherwise.
    pub fn within(&self, x: &[Scalar], xf: &[f64], r2: &Scalar, r2f: f64) -> bool {
        let est = self.sq_dist_f64(xf);
        let scale: f64 = 1.0 + r2f.abs() + xf.iter().map(|t| t * t).sum::<f64>();
        let slack = 1e-9 * scale;
        if est.is_finite() && r2f.is_finite() {
            if est < r2f - slack {
                return true;
            }
            if est > r2f + slack {
                return false;
            }
        }
        &self.sq_dist(x) <= r2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlin::{int, q};

    fn pt(xs: &[i64]) -> Vec<Scalar> {
        xs.iter().map(|&x| int(x)).collect()
    }

    fn line(p: &[i64], d: &[i64]) -> AffineFlat {
        AffineFlat::new(pt(p), vec![pt(d)]).unwrap()
    }

    #[test]
    fn canonical_equality() {
        let a = line(&[0, 0], &[1, 1]);
        let b = line(&[3, 3], &[-2, -2]);
        assert_eq!(a, b);
        assert_ne!(a, line(&[0, 1], &[1, 1]));
    }

    #[test]
    fn join_of_skew_lines_is_space() {
        let l1 = line(&[0, 0, 0], &[1, 0, 0]);
        let l2 = line(&[0, 0, 1], &[0, 1, 0]);
        let j = join(&[&l1, &l2]).unwrap();
        assert_eq!(j.dim(), 3);
        assert_eq!(join_dim(&[&l1, &l2]).unwrap(), 3);
    }

    #[test]
    fn parallel_lines_meet_empty_join_plane() {
        let a = line(&[0, 0], &[1, 0]);
        let b = line(&[0, 1], &[1, 0]);
        assert_eq!(meet(&a, &b).unwrap(), None);
        assert_eq!(join(&[&a, &b]).unwrap().dim(), 2);
    }

    #[test]
    fn meet_of_crossing_lines() {
        let a = line(&[0, 0], &[1, 0]);
        let b = line(&[2, -1], &[0, 1]);
        assert_eq!(meet(&a, &b).unwrap(), Some(AffineFlat::point(pt(&[2, 0]))));
    }

    #[test]
    fn neighbourhood() {
        let f = line(&[0, 0], &[1, 0]);
        assert!(in_neighborhood(&[int(5), q(1, 2)], &f, &q(1, 2)));
        assert!(!in_neighborhood(&[int(5), q(1, 2)], &f, &q(1, 3)));
    }

    #[test]
    fn wedge_examples() {
        let e1 = Matrix::from_i64(&[&[1], &[0]]);
        let e2 = Matrix::from_i64(&[&[0], &[1]]);
        assert_eq!(wedge_angle_sin2(&e1, &e2).unwrap(), int(1));
        assert_eq!(wedge_angle_sin2(&e1, &e1).unwrap(), int(0));
        let z = Matrix::from_i64(&[&[0], &[0]]);
        assert_eq!(wedge_angle_sin2(&e1, &z), Err(FlatError::DegenerateFactor));
        let diag = Matrix::from_i64(&[&[1], &[1]]);
        assert_eq!(wedge_angle_sin2(&e1, &diag).unwrap(), q(1, 2));
    }

    #[test]
    fn equations_round_trip() {
        let f = AffineFlat::new(pt(&[1, 2, 3]), vec![pt(&[1, 0, 1])]).unwrap();
        let (a, c) = f.equations();
        assert_eq!(a.nrows(), 2);
        assert_eq!(AffineFlat::from_equations(&a, &c).unwrap(), f);
    }
}
