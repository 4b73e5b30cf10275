//! Finitely supported measures with exact rational atoms and weights, and
//! the quantities measured on them: plate masses, Frostman fits, the
//! irreducibility modulus and the good-position margin.

use std::collections::HashSet;

use itertools::Itertools;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use thiserror::Error;

use crate::exactlin::{fmt_scalar, gram_det, norm_sq, to_f64, Matrix, Scalar};
use crate::flats::{lift, AffineFlat, FlatError, FlatProjector};
use crate::rng::{self, tuple_plan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weights must be positive (atom {0})")]
    NonPositiveWeight(usize),
    #[error("resolution must be positive")]
    BadResolution,
    #[error("zero mass after restriction")]
    ZeroMass,
    #[error("need at least two distinct scales")]
    TooFewScales,
    #[error("scale {0} is below the resolution {1}")]
    ScaleBelowResolution(String, String),
    #[error("modulus is undefined on a 0-dimensional flat")]
    PointFlat,
    #[error(transparent)]
    Flat(#[from] FlatError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub point: Vec<Scalar>,
    pub weight: Scalar,
}

/// Finitely supported positive measure on `Q^n` with a nominal resolution.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    approx: Vec<Vec<f64>>,
    resolution: Scalar,
    total: Scalar,
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim && self.atoms == o.atoms && self.resolution == o.resolution
    }
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>, resolution: Scalar) -> Result<Self, MeasureError> {
        if !resolution.is_positive() {
            return Err(MeasureError::BadResolution);
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.point.len() != dim {
                return Err(MeasureError::DimensionMismatch(format!(
                    "atom {i} has {} coordinates, expected {dim}",
                    a.point.len()
                )));
            }
            if !a.weight.is_positive() {
                return Err(MeasureError::NonPositiveWeight(i));
            }
        }
        let total = atoms.iter().fold(Scalar::zero(), |acc, a| acc + &a.weight);
        let approx = atoms.iter().map(|a| a.point.iter().map(to_f64).collect()).collect();
        Ok(DiscreteMeasure { dim, atoms, approx, resolution, total })
    }

    /// Equal weights `1/N` on the given points.
    pub fn uniform(points: Vec<Vec<Scalar>>, resolution: Scalar) -> Result<Self, MeasureError> {
        let dim = points.first().map_or(0, Vec::len);
        let w = Scalar::new(1.into(), points.len().max(1).into());
        Self::new(dim, points.into_iter().map(|point| Atom { point, weight: w.clone() }).collect(), resolution)
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn approx(&self, i: usize) -> &[f64] {
        &self.approx[i]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> &Scalar {
        &self.total
    }

    pub fn resolution(&self) -> &Scalar {
        &self.resolution
    }

    pub fn with_resolution(&self, resolution: Scalar) -> Result<Self, MeasureError> {
        Self::new(self.dim, self.atoms.clone(), resolution)
    }

    /// Same atoms rescaled to total mass 1.
    pub fn normalized(&self) -> Result<Self, MeasureError> {
        if self.total.is_zero() {
            return Err(MeasureError::ZeroMass);
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { point: a.point.clone(), weight: &a.weight / &self.total })
            .collect();
        Self::new(self.dim, atoms, self.resolution.clone())
    }

    /// Atoms kept by `keep(index, atom)`; may be empty.
    pub fn restrict<F: Fn(usize, &Atom) -> bool>(&self, keep: F) -> Self {
        let idx: Vec<usize> = (0..self.atoms.len()).filter(|&i| keep(i, &self.atoms[i])).collect();
        self.subset(&idx)
    }

    /// Atoms at the given indices.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let atoms: Vec<Atom> = idx.iter().map(|&i| self.atoms[i].clone()).collect();
        let approx = idx.iter().map(|&i| self.approx[i].clone()).collect();
        let total = atoms.iter().fold(Scalar::zero(), |acc, a| acc + &a.weight);
        DiscreteMeasure { dim: self.dim, atoms, approx, resolution: self.resolution.clone(), total }
    }

    /// Mass of the closed `w`-neighbourhood of a flat.
    pub fn mass_near(&self, f: &AffineFlat, w: &Scalar) -> Scalar {
        self.mass_near_with(&f.projector(), w)
    }

    pub fn mass_near_with(&self, p: &FlatProjector, w: &Scalar) -> Scalar {
        let r2 = w * w;
        let r2f = to_f64(&r2);
        self.atoms
            .iter()
            .zip(&self.approx)
            .filter(|(a, af)| p.within(&a.point, af, &r2, r2f))
            .fold(Scalar::zero(), |acc, (a, _)| acc + &a.weight)
    }

    /// Indices of atoms within distance `w` of a flat.
    pub fn indices_near(&self, f: &AffineFlat, w: &Scalar) -> Vec<usize> {
        let p = f.projector();
        let r2 = w * w;
        let r2f = to_f64(&r2);
        (0..self.atoms.len()).filter(|&i| p.within(&self.atoms[i].point, &self.approx[i], &r2, r2f)).collect()
    }
}

/// Restricts to the atoms kept by `keep` and renormalises to mass 1.
pub fn restrict_and_normalize<F: Fn(usize, &Atom) -> bool>(
    mu: &DiscreteMeasure,
    keep: F,
) -> Result<DiscreteMeasure, MeasureError> {
    let r = mu.restrict(keep);
    if r.total.is_zero() {
        return Err(MeasureError::ZeroMass);
    }
    r.normalized()
}

/// `V(r)`: closed `r`-neighbourhood of a core flat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plate {
    pub core: AffineFlat,
    pub radius: Scalar,
}

pub fn mass_in_plate(mu: &DiscreteMeasure, plate: &Plate) -> Result<Scalar, MeasureError> {
    if plate.core.ambient_dim() != mu.dim {
        return Err(MeasureError::DimensionMismatch(format!(
            "plate in Q^{}, measure in Q^{}",
            plate.core.ambient_dim(),
            mu.dim
        )));
    }
    Ok(mu.mass_near(&plate.core, &plate.radius))
}

/// Filtered test `|x - y|^2 <= r2`.
pub(crate) fn sq_dist_le(x: &[Scalar], xf: &[f64], y: &[Scalar], yf: &[f64], r2: &Scalar, r2f: f64) -> bool {
    let est: f64 = xf.iter().zip(yf).map(|(a, b)| (a - b) * (a - b)).sum();
    let scale = 1.0 + r2f + xf.iter().chain(yf).map(|t| t * t).sum::<f64>();
    let slack = 1e-9 * scale;
    if est.is_finite() {
        if est < r2f - slack {
            return true;
        }
        if est > r2f + slack {
            return false;
        }
    }
    let d = x.iter().zip(y).fold(Scalar::zero(), |acc, (a, b)| {
        let t = a - b;
        acc + &t * &t
    });
    &d <= r2
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrostmanRow {
    pub scale: Scalar,
    /// `max_x μ(B(x, r))` over atom centres.
    pub max_mass: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrostmanFit {
    /// Fitted constant in `μ(B(x,r)) ≈ C r^s`.
    pub c: f64,
    pub s: f64,
    pub table: Vec<FrostmanRow>,
}

/// Least-squares fit of `log y = log C + s log x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let s = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    ((my - s * mx).exp(), s)
}

/// Fits `max_x μ(B(x,r)) ≈ C r^s` over the given scales (ball centres at atoms).
pub fn frostman_fit(mu: &DiscreteMeasure, scales: &[Scalar]) -> Result<FrostmanFit, MeasureError> {
    let distinct: HashSet<&Scalar> = scales.iter().collect();
    if distinct.len() < 2 {
        return Err(MeasureError::TooFewScales);
    }
    if mu.is_empty() {
        return Err(MeasureError::ZeroMass);
    }
    for r in scales {
        if r < &mu.resolution {
            return Err(MeasureError::ScaleBelowResolution(fmt_scalar(r), fmt_scalar(&mu.resolution)));
        }
    }
    let r2: Vec<Scalar> = scales.iter().map(|r| r * r).collect();
    let r2f: Vec<f64> = r2.iter().map(to_f64).collect();
    let mut best = vec![Scalar::zero(); scales.len()];
    let mut mass = vec![Scalar::zero(); scales.len()];
    for (x, xf) in mu.atoms.iter().zip(&mu.approx) {
        mass.iter_mut().for_each(|m| *m = Scalar::zero());
        for (y, yf) in mu.atoms.iter().zip(&mu.approx) {
            for k in 0..scales.len() {
                if sq_dist_le(&x.point, xf, &y.point, yf, &r2[k], r2f[k]) {
                    mass[k] += &y.weight;
                }
            }
        }
        for k in 0..scales.len() {
            if mass[k] > best[k] {
                best[k] = mass[k].clone();
            }
        }
    }
    let xs: Vec<f64> = scales.iter().map(to_f64).collect();
    let ys: Vec<f64> = best.iter().map(to_f64).collect();
    let (c, s) = fit_power_law(&xs, &ys);
    let table = scales.iter().cloned().zip(best).map(|(scale, max_mass)| FrostmanRow { scale, max_mass }).collect();
    Ok(FrostmanFit { c, s, table })
}

/// Search limits for the modulus.
#[derive(Debug, Clone)]
pub struct ModulusConfig {
    /// Cap on atom subsets examined; beyond it subsets are sampled.
    pub max_subsets: usize,
    /// Extra seeded random hyperplanes of the host flat.
    pub random_hyperplanes: usize,
    pub seed: u64,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        ModulusConfig { max_subsets: 200_000, random_hyperplanes: 16, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ModulusReport {
    /// `max_H μ(H(w)) / μ(total)` over the candidate proper subflats.
    pub tau: Scalar,
    pub witness: Option<AffineFlat>,
    pub candidates: usize,
    /// True when every atom-spanned subflat was examined.
    pub exhaustive: bool,
}

/// Largest relative mass of a `w`-neighbourhood of a proper subflat of `v`.
///
/// Candidates are the proper subflats spanned by atoms (projected to `v`)
/// plus a few seeded random hyperplanes of `v`. Every candidate is a genuine
/// subflat, so the result is a certified lower bound; for `w = 0` and an
/// exhaustive search it is exact.
pub fn irreducibility_modulus(
    mu: &DiscreteMeasure,
    v: &AffineFlat,
    w: &Scalar,
    cfg: &ModulusConfig,
) -> Result<ModulusReport, MeasureError> {
    if v.dim() == 0 {
        return Err(MeasureError::PointFlat);
    }
    if v.ambient_dim() != mu.dim {
        return Err(MeasureError::DimensionMismatch("host flat and measure".into()));
    }
    if mu.total.is_zero() {
        return Err(MeasureError::ZeroMass);
    }
    let proj = v.projector();
    let mut pts: Vec<Vec<Scalar>> = Vec::new();
    let mut seen = HashSet::new();
    for a in &mu.atoms {
        let p = proj.project(&a.point);
        if seen.insert(p.clone()) {
            pts.push(p);
        }
    }
    let k = v.dim();
    let mut budget_needed = 0usize;
    for s in 1..=k.min(pts.len()) {
        budget_needed = budget_needed.saturating_add(binomial(pts.len(), s));
    }
    let exhaustive = budget_needed <= cfg.max_subsets;
    let mut cands: HashSet<AffineFlat> = HashSet::new();
    let mut add = |sub: Vec<Vec<Scalar>>| -> Result<(), MeasureError> {
        let f = AffineFlat::through_points(&sub)?;
        if f.dim() < k {
            cands.insert(f);
        }
        Ok(())
    };
    let mut rng = rng::seeded(cfg.seed);
    if exhaustive {
        for s in 1..=k.min(pts.len()) {
            for c in (0..pts.len()).combinations(s) {
                add(c.iter().map(|&i| pts[i].clone()).collect())?;
            }
        }
    } else {
        let s = k.min(pts.len());
        for _ in 0..cfg.max_subsets {
            let idx = rand::seq::index::sample(&mut rng, pts.len(), s);
            add(idx.iter().map(|i| pts[i].clone()).collect())?;
        }
    }
    // random hyperplanes of v through a random atom
    for _ in 0..cfg.random_hyperplanes {
        if pts.is_empty() || k == 0 {
            break;
        }
        let base = pts[rng.gen_range(0..pts.len())].clone();
        let dirs: Vec<Vec<Scalar>> = (0..k - 1)
            .map(|_| {
                v.directions().iter().fold(vec![Scalar::zero(); mu.dim], |acc, d| {
                    crate::exactlin::add(&acc, &crate::exactlin::scale(d, &rng::rational(&mut rng, 64, 17)))
                })
            })
            .collect();
        let h = AffineFlat::new(base, dirs)?;
        if h.dim() < k {
            cands.insert(h);
        }
    }
    let mut best = Scalar::zero();
    let mut witness = None;
    let mut ordered: Vec<AffineFlat> = cands.into_iter().collect();
    ordered.sort();
    for h in &ordered {
        let m = mu.mass_near(h, w);
        if m > best || witness.is_none() {
            best = m;
            witness = Some(h.clone());
        }
    }
    Ok(ModulusReport { tau: best / &mu.total, witness, candidates: ordered.len(), exhaustive })
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = match r.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
    }
    r
}

#[derive(Debug, Clone)]
pub struct GoodPositionReport {
    /// Minimum over support tuples of `gram(lifted tuple) / Π |(x_i;1)|^2`.
    pub margin: Scalar,
    /// Atom index per measure attaining the minimum.
    pub witness: Vec<usize>,
    pub tuples: usize,
    pub exhaustive: bool,
}

/// Normalised squared volume of the lifted tuple `(x_0;1),...,(x_k;1)`; zero
/// iff the points are affinely dependent.
pub fn lifted_volume_ratio(points: &[&[Scalar]]) -> Scalar {
    let cols: Vec<Vec<Scalar>> = points.iter().map(|p| lift(p)).collect();
    let n = cols.first().map_or(0, Vec::len);
    let denom = cols.iter().fold(Scalar::one(), |acc, c| acc * norm_sq(c));
    gram_det(&Matrix::from_cols(n, &cols).expect("uniform")) / denom
}

/// Minimum lifted volume ratio over support tuples `(x_0 ∈ supp μ_0, ...)`.
pub fn good_position_margin(
    mus: &[DiscreteMeasure],
    max_tuples: usize,
    seed: u64,
) -> Result<GoodPositionReport, MeasureError> {
    let Some(first) = mus.first() else {
        return Ok(GoodPositionReport { margin: Scalar::one(), witness: vec![], tuples: 0, exhaustive: true });
    };
    if mus.iter().any(|m| m.dim != first.dim) {
        return Err(MeasureError::DimensionMismatch("measures in different ambient spaces".into()));
    }
    let sizes: Vec<usize> = mus.iter().map(DiscreteMeasure::len).collect();
    let (plan, exhaustive) = tuple_plan(&sizes, max_tuples, seed);
    if plan.is_empty() {
        return Err(MeasureError::ZeroMass);
    }
    let mut margin: Option<Scalar> = None;
    let mut witness = vec![];
    for t in &plan {
        let pts: Vec<&[Scalar]> = t.iter().zip(mus).map(|(&i, m)| m.atoms[i].point.as_slice()).collect();
        let r = lifted_volume_ratio(&pts);
        if margin.as_ref().is_none_or(|m| &r < m) {
            margin = Some(r);
            witness = t.clone();
        }
    }
    Ok(GoodPositionReport { margin: margin.unwrap(), witness, tuples: plan.len(), exhaustive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlin::{dyadic, int, q};

    fn pts(v: &[&[i64]]) -> Vec<Vec<Scalar>> {
        v.iter().map(|p| p.iter().map(|&x| int(x)).collect()).collect()
    }

    #[test]
    fn plate_mass() {
        let mu = DiscreteMeasure::uniform(pts(&[&[0, 0], &[1, 0], &[0, 1], &[5, 5]]), q(1, 8)).unwrap();
        let x_axis = AffineFlat::new(vec![int(0), int(0)], vec![vec![int(1), int(0)]]).unwrap();
        let plate = Plate { core: x_axis, radius: int(1) };
        assert_eq!(mass_in_plate(&mu, &plate).unwrap(), q(3, 4));
    }

    #[test]
    fn modulus_of_simplex() {
        let mu = DiscreteMeasure::uniform(pts(&[&[0, 0, 0], &[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]), q(1, 8)).unwrap();
        let r = irreducibility_modulus(&mu, &AffineFlat::full(3), &int(0), &ModulusConfig::default()).unwrap();
        assert_eq!(r.tau, q(3, 4));
        assert!(r.exhaustive);
    }

    #[test]
    fn modulus_on_point_flat_errors() {
        let mu = DiscreteMeasure::uniform(pts(&[&[0, 0]]), q(1, 8)).unwrap();
        let p = AffineFlat::point(vec![int(0), int(0)]);
        assert_eq!(
            irreducibility_modulus(&mu, &p, &int(0), &ModulusConfig::default()).unwrap_err(),
            MeasureError::PointFlat
        );
    }

    #[test]
    fn good_position_detects_collinear() {
        let m = |p: &[i64]| DiscreteMeasure::uniform(pts(&[p]), q(1, 8)).unwrap();
        let bad = good_position_margin(&[m(&[0, 0]), m(&[1, 1]), m(&[2, 2])], 100, 0).unwrap();
        assert_eq!(bad.margin, int(0));
        let good = good_position_margin(&[m(&[0, 0]), m(&[1, 0]), m(&[0, 1])], 100, 0).unwrap();
        assert!(good.margin > int(0));
    }

    #[test]
    fn restrict_to_nothing_errors() {
        let mu = DiscreteMeasure::uniform(pts(&[&[0, 0]]), q(1, 8)).unwrap();
        assert_eq!(restrict_and_normalize(&mu, |_, _| false).unwrap_err(), MeasureError::ZeroMass);
    }

    #[test]
    fn frostman_single_atom_is_flat() {
        let mu = DiscreteMeasure::uniform(pts(&[&[0, 0]]), dyadic(10)).unwrap();
        let f = frostman_fit(&mu, &[dyadic(1), dyadic(3), dyadic(5)]).unwrap();
        assert!(f.s.abs() < 1e-12);
        assert_eq!(frostman_fit(&mu, &[dyadic(1)]).unwrap_err(), MeasureError::TooFewScales);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(30, 3), 4060);
        assert_eq!(binomial(3, 4), 0);
    }
}
