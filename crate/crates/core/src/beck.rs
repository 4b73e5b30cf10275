//! Discrete Beck: spanned flats of a finite point set and the dichotomy
//! between concentration on a few low-dimensional flats and many spanned
//! hyperplanes.

use std::collections::{BTreeSet, HashSet};

use itertools::Itertools;
use num_traits::Zero;
use thiserror::Error;

use crate::exactlin::Scalar;
use crate::flats::{join, AffineFlat, FlatError};
use crate::measures::binomial;

/// Default cap on enumerated point subsets (`C(60, 3) = 34220`).
pub const DEFAULT_BUDGET: usize = 40_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeckError {
    #[error("points must be distinct (repeat of point {0})")]
    Repeated(usize),
    #[error("points must lie in Q^{n} (point {i})")]
    DimensionMismatch { i: usize, n: usize },
    #[error("k must be in 1..={max}, got {k}")]
    BadK { k: usize, max: usize },
    #[error("flat must be proper")]
    NotProper,
    #[error("enumeration needs {needed} subsets, budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error(transparent)]
    Flat(#[from] FlatError),
}

/// Distinct points of `Q^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointConfig {
    n: usize,
    points: Vec<Vec<Scalar>>,
}

impl PointConfig {
    pub fn new(n: usize, points: Vec<Vec<Scalar>>) -> Result<Self, BeckError> {
        let mut seen = HashSet::new();
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(BeckError::DimensionMismatch { i, n });
            }
            if !seen.insert(p) {
                return Err(BeckError::Repeated(i));
            }
        }
        Ok(PointConfig { n, points })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[Vec<Scalar>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn spans_of_dim(x: &PointConfig, k: usize, budget: usize) -> Result<BTreeSet<AffineFlat>, BeckError> {
    let needed = binomial(x.len(), k + 1);
    if needed > budget {
        return Err(BeckError::BudgetExceeded { needed, budget });
    }
    let mut out = BTreeSet::new();
    for c in (0..x.len()).combinations(k + 1) {
        let f = AffineFlat::through_points(&c.iter().map(|&i| x.points[i].clone()).collect::<Vec<_>>())?;
        if f.dim() == k {
            out.insert(f);
        }
    }
    Ok(out)
}

/// `P^k(X)`: distinct `k`-flats spanned by affinely independent `(k+1)`-subsets.
pub fn enumerate_spanned_flats(x: &PointConfig, k: usize, budget: usize) -> Result<Vec<AffineFlat>, BeckError> {
    if k == 0 || k + 1 > x.n {
        return Err(BeckError::BadK { k, max: x.n.saturating_sub(1) });
    }
    Ok(spans_of_dim(x, k, budget)?.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyReport {
    pub n_points: usize,
    /// Coverage threshold `⌈(1-ε) N⌉`.
    pub needed: usize,
    /// Concentration family (dims ≥ 1, summing to at most `n-1`) covering
    /// at least `needed` points, if any.
    pub family: Option<Vec<AffineFlat>>,
    /// Best coverage found over all admissible families.
    pub best_cover: usize,
    /// `|P^{n-1}(X)|` when no family exists.
    pub hyperplanes: Option<usize>,
    /// `|P^{n-1}(X)| / N^n`.
    pub ratio: Option<f64>,
    /// Set when some candidate dimension was over budget.
    pub partial: bool,
}

struct Cand {
    dim: usize,
    cover: Vec<u64>,
    count: usize,
    flat: AffineFlat,
}

fn bits(n: usize, members: impl Iterator<Item = usize>) -> Vec<u64> {
    let mut b = vec![0u64; n.div_ceil(64)];
    for i in members {
        b[i / 64] |= 1 << (i % 64);
    }
    b
}

fn union_count(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x | y).count_ones() as usize).sum()
}

struct Search<'a> {
    cands: &'a [Cand],
    needed: usize,
    max_cover: usize,
    best: (usize, Vec<usize>),
}

impl Search<'_> {
    fn run(&mut self, start: usize, budget: usize, covered: &[u64], count: usize, chosen: &mut Vec<usize>) {
        if count > self.best.0 {
            self.best = (count, chosen.clone());
        }
        if self.best.0 >= self.needed || budget == 0 || count + budget * self.max_cover <= self.best.0 {
            return;
        }
        for c in start..self.cands.len() {
            let cand = &self.cands[c];
            // candidates are sorted by coverage, so nothing later can help
            if count + budget * cand.count <= self.best.0 {
                break;
            }
            if cand.dim > budget {
                continue;
            }
            let merged: Vec<u64> = covered.iter().zip(&cand.cover).map(|(a, b)| a | b).collect();
            let m = union_count(covered, &cand.cover);
            if m == count {
                continue;
            }
            chosen.push(c);
            self.run(c + 1, budget - cand.dim, &merged, m, chosen);
            chosen.pop();
            if self.best.0 >= self.needed {
                return;
            }
        }
    }
}

/// Searches flats spanned by the points (dimensions `1..n-1`) for a family
/// with `Σ dim ≤ n-1` covering `⌈(1-ε)N⌉` points; without one, counts the
/// spanned hyperplanes.
pub fn dichotomy_report(x: &PointConfig, eps: f64, budget: usize) -> Result<DichotomyReport, BeckError> {
    let n = x.n;
    let big_n = x.len();
    let needed = ((1.0 - eps) * big_n as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut partial = false;
    let mut cands = Vec::new();
    for d in 1..n {
        match spans_of_dim(x, d, budget) {
            Ok(fs) => {
                for f in fs {
                    let p = f.projector();
                    let members: Vec<usize> =
                        (0..big_n).filter(|&i| p.sq_dist(&x.points[i]).is_zero()).collect();
                    cands.push(Cand { dim: d, count: members.len(), cover: bits(big_n, members.into_iter()), flat: f });
                }
            }
            Err(BeckError::BudgetExceeded { .. }) => partial = true,
            Err(e) => return Err(e),
        }
    }
    // richest candidates first; ties by dimension then canonical order
    cands.sort_by(|a, b| b.count.cmp(&a.count).then(a.dim.cmp(&b.dim)).then(a.flat.cmp(&b.flat)));
    let max_cover = cands.first().map_or(0, |c| c.count);
    let mut s = Search { cands: &cands, needed, max_cover, best: (0, vec![]) };
    s.run(0, n.saturating_sub(1), &vec![0; big_n.div_ceil(64)], 0, &mut vec![]);
    let (best_cover, chosen) = s.best;
    if best_cover >= needed && big_n > 0 {
        let family = chosen.iter().map(|&c| cands[c].flat.clone()).collect();
        return Ok(DichotomyReport { n_points: big_n, needed, family: Some(family), best_cover, hyperplanes: None, ratio: None, partial });
    }
    let (hyperplanes, ratio) = match spans_of_dim(x, n - 1, budget) {
        Ok(h) => (Some(h.len()), Some(h.len() as f64 / (big_n as f64).powi(n as i32))),
        Err(BeckError::BudgetExceeded { .. }) => {
            partial = true;
            (None, None)
        }
        Err(e) => return Err(e),
    };
    Ok(DichotomyReport { n_points: big_n, needed, family: None, best_cover, hyperplanes, ratio, partial })
}

/// `|P^{n-1}_F(X)|`: distinct hyperplanes `⟨F, x_1, …, x_m⟩` with
/// `m = n-1-dim F` points of `X`.
pub fn concentrated_span_count(x: &PointConfig, f: &AffineFlat, budget: usize) -> Result<usize, BeckError> {
    let n = x.n;
    if f.ambient_dim() != n {
        return Err(FlatError::DimensionMismatch(format!("flat in Q^{}, points in Q^{n}", f.ambient_dim())).into());
    }
    if f.dim() >= n {
        return Err(BeckError::NotProper);
    }
    let m = n - 1 - f.dim();
    let needed = binomial(x.len(), m);
    if needed > budget {
        return Err(BeckError::BudgetExceeded { needed, budget });
    }
    let mut out = HashSet::new();
    for c in (0..x.len()).combinations(m) {
        let pts: Vec<AffineFlat> = c.iter().map(|&i| AffineFlat::point(x.points[i].clone())).collect();
        let mut parts: Vec<&AffineFlat> = vec![f];
        parts.extend(pts.iter());
        let h = join(&parts)?;
        if h.dim() + 1 == n {
            out.insert(h);
        }
    }
    Ok(out.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlin::int;

    fn cfg(n: usize, pts: &[&[i64]]) -> PointConfig {
        PointConfig::new(n, pts.iter().map(|p| p.iter().map(|&x| int(x)).collect()).collect()).unwrap()
    }

    #[test]
    fn triangle_lines() {
        let x = cfg(2, &[&[0, 0], &[1, 0], &[0, 1]]);
        assert_eq!(enumerate_spanned_flats(&x, 1, DEFAULT_BUDGET).unwrap().len(), 3);
    }

    #[test]
    fn collinear_points_span_one_line() {
        let x = cfg(2, &[&[0, 0], &[1, 1], &[2, 2], &[5, 5]]);
        assert_eq!(enumerate_spanned_flats(&x, 1, DEFAULT_BUDGET).unwrap().len(), 1);
    }

    #[test]
    fn bad_k_and_repeats() {
        let x = cfg(2, &[&[0, 0], &[1, 1]]);
        assert!(matches!(enumerate_spanned_flats(&x, 2, DEFAULT_BUDGET), Err(BeckError::BadK { .. })));
        assert!(PointConfig::new(1, vec![vec![int(1)], vec![int(1)]]).is_err());
    }

    #[test]
    fn line_through_generic_points() {
        let x = cfg(3, &[&[1, 0, 0], &[0, 1, 0], &[2, 3, 1], &[5, 1, 7], &[3, 8, 2]]);
        let z = AffineFlat::new(vec![int(0), int(0), int(0)], vec![vec![int(0), int(0), int(1)]]).unwrap();
        assert_eq!(concentrated_span_count(&x, &z, DEFAULT_BUDGET).unwrap(), 5);
    }

    #[test]
    fn plane_is_its_own_family() {
        let x = cfg(3, &[&[0, 0, 0], &[1, 0, 0], &[0, 1, 0], &[3, 5, 0], &[2, 7, 0]]);
        let r = dichotomy_report(&x, 0.1, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.family.unwrap().len(), 1);
        let plane = AffineFlat::through_points(&x.points()[..3]).unwrap();
        assert_eq!(concentrated_span_count(&x, &plane, DEFAULT_BUDGET).unwrap(), 1);
    }
}
