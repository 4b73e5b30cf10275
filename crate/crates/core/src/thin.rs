//! Thin-tube and thin-plane graphs on products of discrete measures.
//!
//! A graph is a set of index tuples, one atom per measure. Masses are always
//! taken relative to each measure's total, so non-probability inputs behave
//! like their normalisations. Set membership and masses are exact; only the
//! bound `K δ^σ` and the fitted exponents are floating point.

use std::collections::{BTreeSet, HashMap};

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::exactlin::{dyadic, fmt_scalar, to_f64, Scalar};
use crate::flatcollect::{partition_cost, CollectError};
use crate::flats::{AffineFlat, FlatError, FlatProjector};
use crate::measures::{fit_power_law, DiscreteMeasure, MeasureError};
use crate::rng::sample_tuples;
use crate::stability::{rank_r, IndexPair, RankOutcome, StabilityConfig, StabilityError, StableFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThinError {
    #[error("tuple in S_k: {0:?} is affinely dependent")]
    TupleInSk(Vec<usize>),
    #[error("invalid graph: {0}")]
    BadGraph(String),
    #[error("supports are not separated")]
    NotSeparated,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("removed mass {removed} exceeds budget {budget}")]
    Budget { removed: String, budget: String },
    #[error("no chart for {k}-planes in Q^{n}: only hyperplanes are supported")]
    ChartUndefined { k: usize, n: usize },
    #[error("not minimal/stable: {0}")]
    NotMinimalStable(String),
    #[error("need at least two distinct scales")]
    TooFewScales,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Flat(#[from] FlatError),
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

/// A tuple set `G ⊂ supp μ_0 × … × supp μ_k` with claimed parameters
/// `(σ, K, c)`. The density is recomputed from the tuples on demand.
#[derive(Debug, Clone)]
pub struct ThinGraph {
    measures: Vec<DiscreteMeasure>,
    tuples: Vec<Vec<usize>>,
    pub sigma: f64,
    pub big_k: f64,
    /// Claimed lower bound on the density.
    pub c: f64,
}

impl ThinGraph {
    /// Tuples are sorted and deduplicated.
    pub fn new(
        measures: Vec<DiscreteMeasure>,
        tuples: impl IntoIterator<Item = Vec<usize>>,
        sigma: f64,
        big_k: f64,
        c: f64,
    ) -> Result<Self, ThinError> {
        if measures.len() < 2 {
            return Err(ThinError::BadGraph(format!("need at least two measures, got {}", measures.len())));
        }
        let n = measures[0].ambient_dim();
        if let Some(j) = measures.iter().position(|m| m.ambient_dim() != n) {
            return Err(MeasureError::DimensionMismatch(format!("measure {j} not in Q^{n}")).into());
        }
        let tuples: BTreeSet<Vec<usize>> = tuples.into_iter().collect();
        for t in &tuples {
            if t.len() != measures.len() {
                return Err(ThinError::BadGraph(format!("tuple {t:?} has arity {}, expected {}", t.len(), measures.len())));
            }
            if let Some(j) = (0..t.len()).find(|&j| t[j] >= measures[j].len()) {
                return Err(ThinError::BadGraph(format!("tuple {t:?}: no atom {} in measure {j}", t[j])));
            }
        }
        Ok(ThinGraph { measures, tuples: tuples.into_iter().collect(), sigma, big_k, c })
    }

    /// The whole product of supports.
    pub fn full(measures: Vec<DiscreteMeasure>, sigma: f64, big_k: f64, c: f64) -> Result<Self, ThinError> {
        let tuples: Vec<Vec<usize>> = measures.iter().map(|m| 0..m.len()).multi_cartesian_product().collect();
        Self::new(measures, tuples, sigma, big_k, c)
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn arity(&self) -> usize {
        self.measures.len()
    }

    /// Dimension `k` of the spanned planes.
    pub fn k(&self) -> usize {
        self.measures.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.measures[0].ambient_dim()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, t: &[usize]) -> bool {
        self.tuples.binary_search_by(|x| x.as_slice().cmp(t)).is_ok()
    }

    /// Product mass of the tuples over the product of total masses.
    pub fn density(&self) -> Scalar {
        let ws: Vec<Weights> = self.measures.iter().map(Weights::new).collect();
        let num = self.tuples.iter().fold(BigInt::zero(), |acc, t| acc + tuple_weight(&ws, t));
        let den = ws.iter().fold(BigInt::one(), |acc, w| acc * &w.total);
        Scalar::new(num, den)
    }

    /// Same measures and parameters, keeping the tuples accepted by `keep`.
    pub fn retain<F: FnMut(&[usize]) -> bool>(&self, mut keep: F) -> ThinGraph {
        let tuples = self.tuples.iter().filter(|t| keep(t)).cloned().collect();
        ThinGraph { tuples, ..self.clone() }
    }

    pub fn with_params(mut self, sigma: f64, big_k: f64, c: f64) -> ThinGraph {
        self.sigma = sigma;
        self.big_k = big_k;
        self.c = c;
        self
    }

    /// The graph with its two measures swapped; only for arity 2.
    pub fn transposed(&self) -> Result<ThinGraph, ThinError> {
        if self.arity() != 2 {
            return Err(ThinError::BadGraph("transpose needs arity 2".into()));
        }
        let tuples = self.tuples.iter().map(|t| vec![t[1], t[0]]);
        ThinGraph::new(vec![self.measures[1].clone(), self.measures[0].clone()], tuples, self.sigma, self.big_k, self.c)
    }

    fn points(&self, t: &[usize]) -> Vec<Vec<Scalar>> {
        t.iter().zip(&self.measures).map(|(&i, m)| m.atoms()[i].point.clone()).collect()
    }

    /// Affine span of a tuple; errors on affinely dependent tuples.
    pub fn span(&self, t: &[usize]) -> Result<AffineFlat, ThinError> {
        let f = AffineFlat::through_points(&self.points(t))?;
        if f.dim() != self.k() {
            return Err(ThinError::TupleInSk(t.to_vec()));
        }
        Ok(f)
    }
}

/// Weights of a measure as integers over a common denominator.
struct Weights {
    num: Vec<BigInt>,
    small: Option<Vec<u64>>,
    total: BigInt,
}

impl Weights {
    fn new(mu: &DiscreteMeasure) -> Self {
        let den = mu.atoms().iter().fold(BigInt::one(), |acc, a| acc.lcm(a.weight.denom()));
        let num: Vec<BigInt> = mu.atoms().iter().map(|a| a.weight.numer() * (&den / a.weight.denom())).collect();
        let total = num.iter().sum();
        let small = num.iter().map(ToPrimitive::to_u64).collect::<Option<Vec<u64>>>().filter(|_| num.len() < 1 << 32);
        Weights { num, small, total }
    }

    fn ratio(&self, num: BigInt) -> Scalar {
        Scalar::new(num, self.total.clone())
    }
}

/// Per-scale exact accumulator, in `u128` when the weights allow it.
enum Acc {
    Small(Vec<u128>),
    Big(Vec<BigInt>),
}

impl Acc {
    fn new(w: &Weights, len: usize) -> Self {
        match w.small {
            Some(_) => Acc::Small(vec![0; len]),
            None => Acc::Big(vec![BigInt::zero(); len]),
        }
    }

    /// Adds atom `i` to the first `upto` slots.
    fn add(&mut self, w: &Weights, i: usize, upto: usize) {
        match self {
            Acc::Small(v) => {
                let x = w.small.as_ref().unwrap()[i] as u128;
                v[..upto].iter_mut().for_each(|s| *s += x);
            }
            Acc::Big(v) => v[..upto].iter_mut().for_each(|s| *s += &w.num[i]),
        }
    }

    fn get(&self, k: usize) -> BigInt {
        match self {
            Acc::Small(v) => BigInt::from(v[k]),
            Acc::Big(v) => v[k].clone(),
        }
    }

    fn get_f64(&self, k: usize, total: &BigInt) -> f64 {
        match self {
            Acc::Small(v) => v[k] as f64 / total.to_f64().unwrap_or(f64::INFINITY),
            Acc::Big(v) => to_f64(&Scalar::new(v[k].clone(), total.clone())),
        }
    }
}

fn tuple_weight(ws: &[Weights], t: &[usize]) -> BigInt {
    t.iter().zip(ws).fold(BigInt::one(), |acc, (&i, w)| acc * &w.num[i])
}

/// Dyadic scales `2^-1, 2^-2, …` down to the coarsest resolution among the
/// measures.
pub fn dyadic_window(measures: &[DiscreteMeasure]) -> Vec<Scalar> {
    let floor = measures.iter().map(|m| m.resolution().clone()).max().unwrap_or_else(|| dyadic(1));
    (1..64).map(dyadic).take_while(|d| d >= &floor).collect()
}

fn sorted_scales(scales: &[Scalar]) -> Vec<Scalar> {
    let mut s: Vec<Scalar> = scales.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    s.reverse();
    s
}

/// Number of leading (descending) radii whose neighbourhood contains the atom.
fn depth(p: &FlatProjector, x: &[Scalar], xf: &[f64], r2: &[Scalar], r2f: &[f64]) -> usize {
    (0..r2.len()).take_while(|&s| p.within(x, xf, &r2[s], r2f[s])).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRow {
    pub scale: Scalar,
    /// Largest relative mass seen at this scale.
    pub max_mass: Scalar,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinWitness {
    pub tuple: Vec<usize>,
    /// Which measure (or, for tubes, the direction atom of `μ_1`).
    pub j: usize,
    pub scale: Scalar,
    pub mass: Scalar,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinReport {
    pub passed: bool,
    pub density: Scalar,
    pub density_ok: bool,
    /// Largest `mass / bound` over everything checked.
    pub worst: Option<ThinWitness>,
    pub rows: Vec<ScaleRow>,
    pub checked: usize,
    pub exhaustive: bool,
}

#[derive(Debug, Clone)]
pub struct ThinConfig {
    /// Tuples beyond this count are sampled rather than enumerated.
    pub max_tuples: usize,
    pub seed: u64,
}

impl Default for ThinConfig {
    fn default() -> Self {
        ThinConfig { max_tuples: 1 << 17, seed: 0 }
    }
}

struct Tracker {
    scales: Vec<Scalar>,
    bounds: Vec<f64>,
    rows: Vec<(f64, Scalar)>,
    worst: Option<ThinWitness>,
}

impl Tracker {
    fn new(scales: Vec<Scalar>, sigma: f64, big_k: f64) -> Self {
        let bounds = scales.iter().map(|d| big_k * to_f64(d).powf(sigma)).collect();
        let rows = vec![(f64::NEG_INFINITY, Scalar::zero()); scales.len()];
        Tracker { scales, bounds, rows, worst: None }
    }

    fn record(&mut self, acc: &Acc, w: &Weights, tuple: &[usize], j: usize) {
        for s in 0..self.scales.len() {
            let m = acc.get_f64(s, &w.total);
            if m > self.rows[s].0 {
                self.rows[s] = (m, w.ratio(acc.get(s)));
            }
            let ratio = m / self.bounds[s];
            if self.worst.as_ref().is_none_or(|x| ratio > x.ratio) {
                self.worst = Some(ThinWitness {
                    tuple: tuple.to_vec(),
                    j,
                    scale: self.scales[s].clone(),
                    mass: w.ratio(acc.get(s)),
                    bound: self.bounds[s],
                    ratio,
                });
            }
        }
    }

    fn finish(self, density: Scalar, c: f64, checked: usize, exhaustive: bool) -> ThinReport {
        let density_ok = to_f64(&density) >= c;
        let within = self.worst.as_ref().is_none_or(|w| w.ratio <= 1.0);
        let rows = self
            .scales
            .into_iter()
            .zip(self.bounds)
            .zip(self.rows)
            .map(|((scale, bound), (m, max_mass))| ScaleRow { scale, max_mass, bound, ratio: m.max(0.0) / bound })
            .collect();
        ThinReport { passed: within && density_ok, density, density_ok, worst: self.worst, rows, checked, exhaustive }
    }
}

fn plan(g: &ThinGraph, cfg: &ThinConfig) -> (Vec<Vec<usize>>, bool) {
    if g.len() <= cfg.max_tuples {
        return (g.tuples.clone(), true);
    }
    let picks = sample_tuples(&[g.len()], cfg.max_tuples, cfg.seed);
    (picks.into_iter().map(|p| g.tuples[p[0]].clone()).collect(), false)
}

/// Checks `μ_j(V_t(δ)) ≤ K δ^σ` for every tuple `t`, measure `j` and scale
/// `δ`, plus the density claim.
pub fn verify_thin_planes(g: &ThinGraph, scales: &[Scalar], cfg: &ThinConfig) -> Result<ThinReport, ThinError> {
    let scales = sorted_scales(scales);
    let r2: Vec<Scalar> = scales.iter().map(|d| d * d).collect();
    let r2f: Vec<f64> = r2.iter().map(to_f64).collect();
    let ws: Vec<Weights> = g.measures.iter().map(Weights::new).collect();
    let mut tr = Tracker::new(scales.clone(), g.sigma, g.big_k);
    let (tuples, exhaustive) = plan(g, cfg);
    for t in &tuples {
        let p = g.span(t)?.projector();
        for (j, mu) in g.measures.iter().enumerate() {
            let mut acc = Acc::new(&ws[j], scales.len());
            for (i, a) in mu.atoms().iter().enumerate() {
                let d = depth(&p, &a.point, mu.approx(i), &r2, &r2f);
                if d > 0 {
                    acc.add(&ws[j], i, d);
                }
            }
            tr.record(&acc, &ws[j], t, j);
        }
    }
    Ok(tr.finish(g.density(), g.c, tuples.len(), exhaustive))
}

/// Checks `μ_1(T ∩ G|_{x_0}) ≤ K r^σ` for tubes `T` through each `x_0`,
/// with axes through the atoms of `μ_1` and dyadic radii. The witness
/// `tuple` is `[x_0, direction atom]`.
pub fn verify_thin_tubes(g: &ThinGraph, scales: &[Scalar]) -> Result<ThinReport, ThinError> {
    if g.arity() != 2 {
        return Err(ThinError::BadGraph("thin tubes need arity 2".into()));
    }
    let (mu0, mu1) = (&g.measures[0], &g.measures[1]);
    let scales = sorted_scales(scales);
    let r2: Vec<Scalar> = scales.iter().map(|d| d * d).collect();
    let r2f: Vec<f64> = r2.iter().map(to_f64).collect();
    let w1 = Weights::new(mu1);
    let mut tr = Tracker::new(scales.clone(), g.sigma, g.big_k);
    let mut checked = 0;
    for (x0, section) in &g.tuples.iter().chunk_by(|t| t[0]) {
        let section: Vec<usize> = section.map(|t| t[1]).collect();
        let p0 = &mu0.atoms()[x0].point;
        for (d, a) in mu1.atoms().iter().enumerate() {
            if &a.point == p0 {
                continue;
            }
            let p = AffineFlat::through_points(&[p0.clone(), a.point.clone()])?.projector();
            let mut acc = Acc::new(&w1, scales.len());
            for &i in &section {
                let k = depth(&p, &mu1.atoms()[i].point, mu1.approx(i), &r2, &r2f);
                if k > 0 {
                    acc.add(&w1, i, k);
                }
            }
            tr.record(&acc, &w1, &[x0, d], d);
            checked += 1;
        }
    }
    Ok(tr.finish(g.density(), g.c, checked, true))
}

/// `Σ_{m≥1} 2^{-mε}`, the dyadic series behind every pruning budget.
pub fn dyadic_series(eps: f64) -> f64 {
    let q = 2f64.powf(-eps);
    q / (1.0 - q)
}

/// Relative masses `μ_j(V_t(δ))` at each (descending) scale.
fn plate_masses(p: &FlatProjector, mu: &DiscreteMeasure, w: &Weights, r2: &[Scalar], r2f: &[f64]) -> Acc {
    let mut acc = Acc::new(w, r2.len());
    for (i, a) in mu.atoms().iter().enumerate() {
        let d = depth(p, &a.point, mu.approx(i), r2, r2f);
        if d > 0 {
            acc.add(w, i, d);
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    /// Multiplier on `K` in the output graph.
    pub c1: f64,
    /// Removed tuples and their relative product mass.
    pub removed: Vec<Vec<usize>>,
    pub removed_mass: Scalar,
    pub budget: f64,
}

/// Removes every tuple with `μ_i(V_t(δ)) > C_1 K δ^{σ-ε}` for some `i` and
/// dyadic `δ`. `C_1 = 2 (k+1) A^σ Σ_δ δ^ε / ε`, so that each `E_i` has mass
/// below `ε/(k+1)` when `A` is the covering constant of the configuration.
/// The result claims `(σ-ε, C_1 K, c-ε)`.
pub fn prune_planes(g: &ThinGraph, eps: f64, a_cover: f64, scales: &[Scalar]) -> Result<(ThinGraph, PruneReport), ThinError> {
    let k = g.k() as f64;
    let c1 = 2.0 * (k + 1.0) * a_cover.powf(g.sigma) * dyadic_series(eps) / eps;
    let scales = sorted_scales(scales);
    let r2: Vec<Scalar> = scales.iter().map(|d| d * d).collect();
    let r2f: Vec<f64> = r2.iter().map(to_f64).collect();
    let bounds: Vec<f64> = scales.iter().map(|d| c1 * g.big_k * to_f64(d).powf(g.sigma - eps)).collect();
    let ws: Vec<Weights> = g.measures.iter().map(Weights::new).collect();
    let mut removed = Vec::new();
    for t in &g.tuples {
        let p = g.span(t)?.projector();
        let heavy = g.measures.iter().enumerate().any(|(j, mu)| {
            let acc = plate_masses(&p, mu, &ws[j], &r2, &r2f);
            (0..scales.len()).any(|s| acc.get_f64(s, &ws[j].total) > bounds[s])
        });
        if heavy {
            removed.push(t.clone());
        }
    }
    let out = drop_tuples(g, &removed).with_params(g.sigma - eps, c1 * g.big_k, g.c - eps);
    let removed_mass = relative_mass(g, &removed);
    if to_f64(&removed_mass) > eps {
        return Err(ThinError::Budget { removed: fmt_scalar(&removed_mass), budget: eps.to_string() });
    }
    Ok((out, PruneReport { c1, removed, removed_mass, budget: eps }))
}

fn drop_tuples(g: &ThinGraph, removed: &[Vec<usize>]) -> ThinGraph {
    let gone: BTreeSet<&Vec<usize>> = removed.iter().collect();
    g.retain(|t| !gone.contains(&t.to_vec()))
}

/// Product mass of the given tuples relative to the product of totals.
fn relative_mass(g: &ThinGraph, tuples: &[Vec<usize>]) -> Scalar {
    let ws: Vec<Weights> = g.measures.iter().map(Weights::new).collect();
    let num = tuples.iter().fold(BigInt::zero(), |acc, t| acc + tuple_weight(&ws, t));
    let den = ws.iter().fold(BigInt::one(), |acc, w| acc * &w.total);
    Scalar::new(num, den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionReport {
    /// `C` with `dist(X_0, X_1) = 1/C`.
    pub c_sep: f64,
    /// `K` multiplier `10^{1+σ-ε} C ε^{-2}`.
    pub a: f64,
    /// Density loss factor: output density is at least `1 - B ε`.
    pub b: f64,
    pub removed: Vec<Vec<usize>>,
    pub removed_mass: Scalar,
    /// `(B - 1) ε`, the bound on the removed mass.
    pub loss_bound: f64,
    pub loss_ok: bool,
}

/// Converts a graph with thin tubes in both orders at `(σ, K, 1-ε)` into a
/// thin 1-plane graph at `(σ-ε, A K, 1-B ε)`, by removing the pairs whose
/// tube `T_{x_0,x_1}(r)` carries more than `10 ε^{-2} C K r^{σ-ε}` of either
/// measure at some dyadic `r`. Each of the two removals costs at most
/// `2^σ ε^2 Σ_r r^ε`, hence `B = 1 + 2^{1+σ} ε Σ_r r^ε`.
pub fn tubes_to_planes(g: &ThinGraph, eps: f64, scales: &[Scalar]) -> Result<(ThinGraph, ConversionReport), ThinError> {
    if g.arity() != 2 {
        return Err(ThinError::BadGraph("tubes to planes needs arity 2".into()));
    }
    let sep2 = min_sq_separation(&g.measures[0], &g.measures[1]);
    if sep2.is_zero() {
        return Err(ThinError::NotSeparated);
    }
    let pre = g.clone().with_params(g.sigma, g.big_k, 1.0 - eps);
    for (name, h) in [("(mu0, mu1)", pre.clone()), ("(mu1, mu0)", pre.transposed()?)] {
        let r = verify_thin_tubes(&h, scales)?;
        if !r.passed {
            let why = match (&r.worst, r.density_ok) {
                (_, false) => format!("density {} below {}", fmt_scalar(&r.density), 1.0 - eps),
                (Some(w), _) => format!("tube ratio {:.3} at r={} (x0={}, dir={})", w.ratio, fmt_scalar(&w.scale), w.tuple[0], w.tuple[1]),
                (None, _) => "no tubes checked".into(),
            };
            return Err(ThinError::Precondition(format!("{name} thin tubes: {why}")));
        }
    }
    let c_sep = 1.0 / to_f64(&sep2).sqrt();
    let a = 10f64.powf(1.0 + g.sigma - eps) * c_sep / (eps * eps);
    let b = 1.0 + 2f64.powf(1.0 + g.sigma) * eps * dyadic_series(eps);
    let scales = sorted_scales(scales);
    let r2: Vec<Scalar> = scales.iter().map(|d| d * d).collect();
    let r2f: Vec<f64> = r2.iter().map(to_f64).collect();
    let thresh: Vec<f64> =
        scales.iter().map(|r| 10.0 * c_sep * g.big_k * to_f64(r).powf(g.sigma - eps) / (eps * eps)).collect();
    let ws: Vec<Weights> = g.measures.iter().map(Weights::new).collect();
    let mut removed = Vec::new();
    for t in &g.tuples {
        let p = g.span(t)?.projector();
        let heavy = (0..2).any(|j| {
            let acc = plate_masses(&p, &g.measures[j], &ws[j], &r2, &r2f);
            (0..scales.len()).any(|s| acc.get_f64(s, &ws[j].total) > thresh[s])
        });
        if heavy {
            removed.push(t.clone());
        }
    }
    let removed_mass = relative_mass(g, &removed);
    let loss_bound = (b - 1.0) * eps;
    let loss_ok = to_f64(&removed_mass) <= loss_bound;
    let out = drop_tuples(g, &removed).with_params(g.sigma - eps, a * g.big_k, 1.0 - b * eps);
    Ok((out, ConversionReport { c_sep, a, b, removed, removed_mass, loss_bound, loss_ok }))
}

fn min_sq_separation(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Scalar {
    let fd = |i: usize, j: usize| -> f64 { a.approx(i).iter().zip(b.approx(j)).map(|(p, q)| (p - q) * (p - q)).sum() };
    let pairs = || (0..a.len()).cartesian_product(0..b.len());
    let Some(m) = pairs().map(|(i, j)| fd(i, j)).min_by(f64::total_cmp) else { return Scalar::zero() };
    // floats pick the candidates, exact arithmetic settles near-ties
    pairs()
        .filter(|&(i, j)| fd(i, j) <= m * (1.0 + 1e-9) + 1e-12)
        .map(|(i, j)| a.atoms()[i].point.iter().zip(&b.atoms()[j].point).map(|(p, q)| (p - q) * (p - q)).sum::<Scalar>())
        .min()
        .unwrap_or_else(Scalar::zero)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapReport {
    /// Independence margin: every kept tuple has `dist(x_j, span of the
    /// others) ≥ δ_0`.
    pub delta0: Scalar,
    pub k_prime: f64,
    pub removed_degenerate: Scalar,
    pub removed_heavy: Scalar,
}

/// Keeps the tuples whose span neighbourhoods carry little `ν` mass:
/// `ν(⟨t⟩(δ)) ≤ K' δ^{σ-ε}` for dyadic `δ ≤ δ_0`. `δ_0` is the largest
/// window scale whose independence cut costs at most `ε/2`, and
/// `K' = 2 K δ_0^{-2σ} Σ_δ δ^ε / ε`. Both cuts must stay within `ε/2`.
pub fn prune_against_measure(
    g: &ThinGraph,
    nu: &DiscreteMeasure,
    eps: f64,
    scales: &[Scalar],
) -> Result<(ThinGraph, SwapReport), ThinError> {
    if nu.ambient_dim() != g.ambient_dim() {
        return Err(MeasureError::DimensionMismatch(format!("nu in Q^{}, graph in Q^{}", nu.ambient_dim(), g.ambient_dim())).into());
    }
    let scales = sorted_scales(scales);
    // minimal leave-one-out squared distance per tuple
    let mut margins = Vec::with_capacity(g.len());
    for t in &g.tuples {
        let pts = g.points(t);
        let mut m: Option<Scalar> = None;
        for j in 0..pts.len() {
            let others: Vec<Vec<Scalar>> = pts.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, p)| p.clone()).collect();
            let d = AffineFlat::through_points(&others)?.projector().sq_dist(&pts[j]);
            if m.as_ref().is_none_or(|x| &d < x) {
                m = Some(d);
            }
        }
        margins.push(m.unwrap_or_else(Scalar::zero));
    }
    let half = eps / 2.0;
    let mut chosen = None;
    for d0 in &scales {
        let d2 = d0 * d0;
        let cut: Vec<Vec<usize>> = g.tuples.iter().zip(&margins).filter(|(_, m)| *m < &d2).map(|(t, _)| t.clone()).collect();
        let mass = relative_mass(g, &cut);
        if to_f64(&mass) <= half {
            chosen = Some((d0.clone(), cut, mass));
            break;
        }
    }
    let Some((delta0, cut, removed_degenerate)) = chosen else {
        return Err(ThinError::Budget { removed: "independence cut at every scale".into(), budget: half.to_string() });
    };
    let k_prime = 2.0 * g.big_k * to_f64(&delta0).powf(-2.0 * g.sigma) * dyadic_series(eps) / eps;
    let kept = drop_tuples(g, &cut);
    let small: Vec<Scalar> = scales.iter().filter(|d| *d <= &delta0).cloned().collect();
    let r2: Vec<Scalar> = small.iter().map(|d| d * d).collect();
    let r2f: Vec<f64> = r2.iter().map(to_f64).collect();
    let bounds: Vec<f64> = small.iter().map(|d| k_prime * to_f64(d).powf(g.sigma - eps)).collect();
    let wn = Weights::new(nu);
    let mut heavy = Vec::new();
    for t in &kept.tuples {
        let p = kept.span(t)?.projector();
        let acc = plate_masses(&p, nu, &wn, &r2, &r2f);
        if (0..small.len()).any(|s| acc.get_f64(s, &wn.total) > bounds[s]) {
            heavy.push(t.clone());
        }
    }
    let removed_heavy = relative_mass(g, &heavy);
    if to_f64(&removed_heavy) > half {
        return Err(ThinError::Budget { removed: fmt_scalar(&removed_heavy), budget: half.to_string() });
    }
    let out = drop_tuples(&kept, &heavy).with_params(g.sigma, g.big_k, g.c - eps);
    Ok((out, SwapReport { delta0, k_prime, removed_degenerate, removed_heavy }))
}

/// Concatenates per-flat graphs `G_j` (thin `(n_j-1)`-planes inside `F_j`)
/// into the product graph for thin `(n-1)`-planes in `Q^n`. The frame's
/// rank conditions `r([k], ∅) = n` and `r([k]∖{j}, {j}) = n+1` are checked
/// first. The result claims `(min σ_j, ratio^σ max K_j, 1 - Σ(1 - c_j))`
/// where `ratio = C/c`; callers re-verify it.
pub fn product_graph(gs: &[ThinGraph], frame: &StableFrame, ratio: f64, cfg: &StabilityConfig) -> Result<ThinGraph, ThinError> {
    let n = frame.ambient_dim();
    if gs.len() != frame.flats().len() {
        return Err(ThinError::BadGraph(format!("{} graphs for {} flats", gs.len(), frame.flats().len())));
    }
    for (j, g) in gs.iter().enumerate() {
        if frame.measures()[j].as_slice() != g.measures() {
            return Err(ThinError::BadGraph(format!("graph {j} does not carry the frame's measures on flat {j}")));
        }
    }
    let arity: usize = gs.iter().map(ThinGraph::arity).sum();
    if arity != n {
        return Err(ThinError::NotMinimalStable(format!("{arity} measures in total, need {n}")));
    }
    let all = frame.slots();
    let rank_of = |idx: IndexPair| -> Result<usize, ThinError> {
        match rank_r(frame, &idx, cfg)? {
            RankOutcome::Constant { rank, .. } => Ok(rank),
            RankOutcome::Inconsistent { .. } => Err(ThinError::NotMinimalStable(format!("rank of {idx} depends on atoms"))),
        }
    };
    let r = rank_of(IndexPair::new(all.iter().copied(), []))?;
    if r != n {
        return Err(ThinError::NotMinimalStable(format!("r([k], {{}}) = {r}, expected {n}")));
    }
    for j in 0..gs.len() {
        let r = rank_of(IndexPair::new(all.iter().copied().filter(|s| s.0 != j), [j]))?;
        if r != n + 1 {
            return Err(ThinError::NotMinimalStable(format!("r([k]\\{{{j}}}, {{{j}}}) = {r}, expected {}", n + 1)));
        }
    }
    let sigma = gs.iter().map(|g| g.sigma).fold(f64::INFINITY, f64::min);
    let kmax = gs.iter().map(|g| g.big_k).fold(0.0, f64::max);
    let c = 1.0 - gs.iter().map(|g| 1.0 - g.c).sum::<f64>();
    let measures: Vec<DiscreteMeasure> = gs.iter().flat_map(|g| g.measures().iter().cloned()).collect();
    let tuples = gs.iter().map(|g| g.tuples().iter()).multi_cartesian_product().map(|parts| parts.into_iter().flatten().copied().collect::<Vec<usize>>());
    ThinGraph::new(measures, tuples, sigma, ratio.powf(sigma) * kmax, c)
}

/// A hyperplane `{x : a·x = b}` in the graph chart of its largest normal
/// coordinate: `a` is scaled so that `a[pivot] = 1`, and the chart
/// coordinates are the other entries of `a` followed by `b`. All coordinates
/// share the positive denominator `den`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HyperplaneChartPoint {
    pub pivot: usize,
    pub num: Vec<BigInt>,
    pub den: BigInt,
}

impl HyperplaneChartPoint {
    pub fn coords(&self) -> Vec<Scalar> {
        self.num.iter().map(|x| Scalar::new(x.clone(), self.den.clone())).collect()
    }

    /// Index of the dyadic cube of side `2^-j` containing the point.
    fn cube(&self, j: u32) -> Vec<BigInt> {
        self.num.iter().map(|x| (x << j).div_floor(&self.den)).collect()
    }
}

/// `(X; D)` with `x = X / D` integral.
fn integer_lift(x: &[Scalar]) -> Vec<BigInt> {
    let d = x.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let mut v: Vec<BigInt> = x.iter().map(|c| c.numer() * (&d / c.denom())).collect();
    v.push(d);
    v
}

/// Determinant of a small integer matrix by fraction-free elimination.
fn int_det(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        let Some(p) = (k..n).find(|&r| !m[r][k].is_zero()) else { return BigInt::zero() };
        if p != k {
            m.swap(p, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

/// Chart point of the hyperplane through `n` points of `Q^n`.
pub fn hyperplane_chart(points: &[Vec<Scalar>]) -> Result<HyperplaneChartPoint, ThinError> {
    let n = points.first().map_or(0, Vec::len);
    if points.len() != n || n == 0 {
        return Err(ThinError::ChartUndefined { k: points.len().saturating_sub(1), n });
    }
    let lifts: Vec<Vec<BigInt>> = points.iter().map(|p| integer_lift(p)).collect();
    chart_from_lifts(&lifts).ok_or(ThinError::TupleInSk(vec![]))
}

/// Normal `(a, -b)` spans the kernel of the lifted rows: its entries are the
/// signed maximal minors.
fn chart_from_lifts(lifts: &[Vec<BigInt>]) -> Option<HyperplaneChartPoint> {
    let n = lifts.len();
    let mut normal = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let minor: Vec<Vec<BigInt>> =
            lifts.iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != m).map(|(_, v)| v.clone()).collect()).collect();
        let d = int_det(minor);
        normal.push(if m % 2 == 0 { d } else { -d });
    }
    let a = &normal[..n];
    let pivot = (0..n).fold(None, |best: Option<usize>, i| match best {
        Some(b) if a[b].abs() >= a[i].abs() => Some(b),
        _ => Some(i),
    })?;
    if a[pivot].is_zero() {
        return None;
    }
    let mut den = a[pivot].clone();
    let sgn = if den.is_negative() { -BigInt::one() } else { BigInt::one() };
    den *= &sgn;
    let mut num: Vec<BigInt> = (0..n).filter(|&i| i != pivot).map(|i| &a[i] * &sgn).collect();
    // a·x + normal[n] = 0, so b = -normal[n]
    num.push(-&normal[n] * &sgn);
    let g = num.iter().fold(den.clone(), |acc, x| acc.gcd(x));
    if !g.is_one() && !g.is_zero() {
        num.iter_mut().for_each(|x| *x /= &g);
        den /= &g;
    }
    Some(HyperplaneChartPoint { pivot, num, den })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardRow {
    pub scale: Scalar,
    /// Largest relative mass of a dyadic chart cube of this side.
    pub max_mass: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardFit {
    pub c: f64,
    pub s: f64,
    pub table: Vec<PushforwardRow>,
    pub atoms: usize,
}

/// Pushes `μ_0 × … × μ_k |_G` to the space of hyperplanes (`k = n-1`) and
/// fits `max_Q ν(Q) ≈ C r^s` over dyadic chart cubes `Q` of side `r`.
/// Scales must be powers of two.
pub fn pushforward_frostman(g: &ThinGraph, scales: &[Scalar]) -> Result<PushforwardFit, ThinError> {
    let n = g.ambient_dim();
    if g.k() + 1 != n {
        return Err(ThinError::ChartUndefined { k: g.k(), n });
    }
    if g.is_empty() {
        return Err(MeasureError::ZeroMass.into());
    }
    let exps: Vec<u32> = scales.iter().map(dyadic_exponent).collect::<Option<_>>().ok_or_else(|| {
        ThinError::BadGraph("pushforward scales must be 2^-j".into())
    })?;
    if exps.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(ThinError::TooFewScales);
    }
    let ws: Vec<Weights> = g.measures.iter().map(Weights::new).collect();
    let lifts: Vec<Vec<Vec<BigInt>>> = g.measures.iter().map(|m| m.atoms().iter().map(|a| integer_lift(&a.point)).collect()).collect();
    let mut cubes: Vec<HashMap<(usize, Vec<BigInt>), BigInt>> = vec![HashMap::new(); exps.len()];
    let mut total = BigInt::zero();
    for t in &g.tuples {
        let rows: Vec<Vec<BigInt>> = t.iter().enumerate().map(|(j, &i)| lifts[j][i].clone()).collect();
        let h = chart_from_lifts(&rows).ok_or_else(|| ThinError::TupleInSk(t.clone()))?;
        let w = tuple_weight(&ws, t);
        for (s, &j) in exps.iter().enumerate() {
            *cubes[s].entry((h.pivot, h.cube(j))).or_insert_with(BigInt::zero) += &w;
        }
        total += w;
    }
    let table: Vec<PushforwardRow> = scales
        .iter()
        .zip(&cubes)
        .map(|(r, c)| {
            let m = c.values().max().cloned().unwrap_or_default();
            PushforwardRow { scale: r.clone(), max_mass: Scalar::new(m, total.clone()) }
        })
        .collect();
    let xs: Vec<f64> = table.iter().map(|r| to_f64(&r.scale)).collect();
    let ys: Vec<f64> = table.iter().map(|r| to_f64(&r.max_mass)).collect();
    let (c, s) = fit_power_law(&xs, &ys);
    Ok(PushforwardFit { c, s, table, atoms: g.len() })
}

fn dyadic_exponent(r: &Scalar) -> Option<u32> {
    if !r.numer().is_one() {
        return None;
    }
    let d = r.denom();
    let j = d.bits().checked_sub(1)? as u32;
    (BigInt::one() << j == *d).then_some(j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    /// Atoms of measure `i` whose section mass reaches the threshold.
    pub atoms: Vec<usize>,
    /// Relative mass of `G|_x` under `Π_{j≠i} μ_j`, per atom of `μ_i`.
    pub section_mass: Vec<Scalar>,
    /// `Σ_x μ_i(x) · section(x)`; equals the density by Fubini.
    pub fubini: Scalar,
    pub density: Scalar,
}

/// Atoms of measure `i` whose section `G|_x` carries at least `threshold`
/// of the product of the other measures.
pub fn marginal_heavy_set(g: &ThinGraph, i: usize, threshold: &Scalar) -> Result<MarginalReport, ThinError> {
    if i >= g.arity() {
        return Err(ThinError::BadGraph(format!("no measure {i}")));
    }
    let ws: Vec<Weights> = g.measures.iter().map(Weights::new).collect();
    let mut sec = vec![BigInt::zero(); g.measures[i].len()];
    for t in &g.tuples {
        let w = t.iter().enumerate().filter(|(j, _)| *j != i).fold(BigInt::one(), |acc, (j, &a)| acc * &ws[j].num[a]);
        sec[t[i]] += w;
    }
    let den = ws.iter().enumerate().filter(|(j, _)| *j != i).fold(BigInt::one(), |acc, (_, w)| acc * &w.total);
    let section_mass: Vec<Scalar> = sec.into_iter().map(|s| Scalar::new(s, den.clone())).collect();
    let atoms = (0..section_mass.len()).filter(|&x| &section_mass[x] >= threshold).collect();
    let fubini = section_mass
        .iter()
        .zip(&ws[i].num)
        .fold(Scalar::zero(), |acc, (s, w)| acc + s * Scalar::new(w.clone(), ws[i].total.clone()));
    Ok(MarginalReport { atoms, section_mass, fubini, density: g.density() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcCheck {
    pub flats: Vec<AffineFlat>,
    pub cost: usize,
    pub nc: bool,
}

/// The flats `aff supp μ_j` of a graph and whether they are NC in `Q^n`.
pub fn support_flats_nc(g: &ThinGraph) -> Result<NcCheck, ThinError> {
    let flats: Vec<AffineFlat> = g
        .measures
        .iter()
        .map(|m| AffineFlat::through_points(&m.atoms().iter().map(|a| a.point.clone()).collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    let cost = partition_cost(&flats)?.cost;
    Ok(NcCheck { nc: cost >= g.ambient_dim(), flats, cost })
}
