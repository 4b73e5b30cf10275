//! Greedy decomposition of a finitely supported measure into irreducible
//! pieces supported near an NC collection of flats.
//!
//! Each round computes the partition cost of the flats found so far, strips
//! the atoms near the joins of the least minimising partition, and adds the
//! lowest-dimensional flat carrying a `θ` fraction of what is left.

use std::collections::HashSet;

use itertools::Itertools;
use num_traits::Zero;
use thiserror::Error;

use crate::exactlin::{fmt_scalar, q, Scalar};
use crate::flatcollect::{partition_cost, CollectError, Partition};
use crate::flats::{join, AffineFlat, FlatError};
use crate::measures::{binomial, irreducibility_modulus, DiscreteMeasure, MeasureError, ModulusConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecomposeError {
    #[error("input not discretely NC at scale w={0}")]
    NotDiscretelyNc(String),
    #[error("no progress after {0} steps")]
    StepLimit(usize),
    #[error("empty measure")]
    Empty,
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Flat(#[from] FlatError),
}

#[derive(Debug, Clone)]
pub struct DecomposeConfig {
    /// Neighbourhood width used for every membership test.
    pub w: Scalar,
    /// Fraction of the remaining mass a new flat must carry.
    pub theta: Scalar,
    /// Smallest dimension searched for new flats. Defaults to 1: a measure
    /// with positive Frostman exponent puts no mass on points, so 0-dim flats
    /// are an artefact of discretisation and break the cost progress.
    pub min_flat_dim: usize,
    pub max_steps: usize,
    /// Cap on atom subsets per dimension; beyond it the search samples.
    pub max_subsets: usize,
    pub seed: u64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig { w: Scalar::zero(), theta: q(1, 2), min_flat_dim: 1, max_steps: 64, max_subsets: 100_000, seed: 0 }
    }
}

/// One round: the state of the collection *before* the next flat is added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub step: usize,
    pub cost: usize,
    pub n_count: usize,
    pub partition: Partition,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub flats: Vec<AffineFlat>,
    pub pieces: Vec<DiscreteMeasure>,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone)]
pub struct Concentration {
    pub flat: AffineFlat,
    pub mass: Scalar,
}

/// Lowest-dimensional atom-spanned flat `V` with `μ(V(w)) ≥ θ μ(total)`,
/// searching dimensions from 0. Falls back to the whole space.
pub fn minimal_concentration_flat(mu: &DiscreteMeasure, w: &Scalar, theta: &Scalar) -> Result<AffineFlat, DecomposeError> {
    let cfg = DecomposeConfig { w: w.clone(), theta: theta.clone(), min_flat_dim: 0, ..Default::default() };
    Ok(concentration_flat(mu, &cfg)?.flat)
}

/// As [`minimal_concentration_flat`] but starting at `cfg.min_flat_dim`.
/// Ties at the winning dimension go to the heaviest flat, then the least in
/// canonical order.
pub fn concentration_flat(mu: &DiscreteMeasure, cfg: &DecomposeConfig) -> Result<Concentration, DecomposeError> {
    if mu.is_empty() {
        return Err(DecomposeError::Empty);
    }
    let n = mu.ambient_dim();
    let need = &cfg.theta * mu.total_mass();
    let mut pts: Vec<Vec<Scalar>> = Vec::new();
    let mut seen = HashSet::new();
    for a in mu.atoms() {
        if seen.insert(a.point.clone()) {
            pts.push(a.point.clone());
        }
    }
    let mut rng = crate::rng::seeded(cfg.seed);
    for d in cfg.min_flat_dim..n {
        if d + 1 > pts.len() {
            break;
        }
        let mut cands: HashSet<AffineFlat> = HashSet::new();
        let mut consider = |idx: &[usize]| -> Result<(), FlatError> {
            let sub: Vec<Vec<Scalar>> = idx.iter().map(|&i| pts[i].clone()).collect();
            let f = AffineFlat::through_points(&sub)?;
            if f.dim() == d {
                cands.insert(f);
            }
            Ok(())
        };
        if binomial(pts.len(), d + 1) <= cfg.max_subsets {
            for c in (0..pts.len()).combinations(d + 1) {
                consider(&c)?;
            }
        } else {
            for _ in 0..cfg.max_subsets {
                let idx = rand::seq::index::sample(&mut rng, pts.len(), d + 1).into_vec();
                consider(&idx)?;
            }
        }
        let mut ordered: Vec<AffineFlat> = cands.into_iter().collect();
        ordered.sort();
        let mut best: Option<Concentration> = None;
        for f in ordered {
            let m = mu.mass_near(&f, &cfg.w);
            if m >= need && best.as_ref().is_none_or(|b| m > b.mass) {
                best = Some(Concentration { flat: f, mass: m });
            }
        }
        if let Some(b) = best {
            return Ok(b);
        }
    }
    Ok(Concentration { flat: AffineFlat::full(n), mass: mu.total_mass().clone() })
}

/// Runs the decomposition loop until the collection of flats is NC in `Q^n`.
pub fn decompose(x: &DiscreteMeasure, n: usize, cfg: &DecomposeConfig) -> Result<Decomposition, DecomposeError> {
    if x.ambient_dim() != n {
        return Err(MeasureError::DimensionMismatch(format!("measure in Q^{}, expected Q^{n}", x.ambient_dim())).into());
    }
    if x.is_empty() {
        return Err(DecomposeError::Empty);
    }
    let mut flats: Vec<AffineFlat> = Vec::new();
    let mut pieces: Vec<DiscreteMeasure> = Vec::new();
    let mut trace = Vec::new();
    for step in 0..cfg.max_steps {
        let c = partition_cost(&flats)?;
        let part = c.least_minimizer().clone();
        trace.push(TraceStep { step, cost: c.cost, n_count: c.n_count, partition: part.clone() });
        if c.cost >= n {
            return Ok(Decomposition { flats, pieces, trace });
        }
        let joins: Vec<AffineFlat> = part
            .blocks()
            .iter()
            .map(|b| join(&b.iter().map(|&i| &flats[i]).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()?;
        let projs: Vec<_> = joins.iter().map(AffineFlat::projector).collect();
        let r2 = &cfg.w * &cfg.w;
        let r2f = crate::exactlin::to_f64(&r2);
        let rest = x.restrict(|i, a| !projs.iter().any(|p| p.within(&a.point, x.approx(i), &r2, r2f)));
        if rest.is_empty() {
            return Err(DecomposeError::NotDiscretelyNc(fmt_scalar(&cfg.w)));
        }
        let conc = concentration_flat(&rest, cfg)?;
        let keep = rest.indices_near(&conc.flat, &cfg.w);
        pieces.push(rest.subset(&keep));
        flats.push(conc.flat);
    }
    Err(DecomposeError::StepLimit(cfg.max_steps))
}

/// Violations of the trace invariants: the cost never decreases, and while it
/// stays flat the number of minimising partitions strictly drops.
pub fn trace_violations(trace: &[TraceStep]) -> Vec<String> {
    let mut out = Vec::new();
    for (a, b) in trace.iter().tuple_windows() {
        if b.cost < a.cost {
            out.push(format!("cost dropped from {} to {} at step {}", a.cost, b.cost, b.step));
        } else if b.cost == a.cost && b.n_count >= a.n_count {
            out.push(format!(
                "cost plateau at {} without progress: N {} -> {} at step {}",
                a.cost, a.n_count, b.n_count, b.step
            ));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PieceCheck {
    pub flat_dim: usize,
    /// `None` for 0-dimensional flats, which have no proper subflats.
    pub tau: Option<Scalar>,
    pub witness: Option<AffineFlat>,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct DecompositionVerdict {
    pub pieces: Vec<PieceCheck>,
    /// Two pieces sharing an atom location, if any.
    pub overlap: Option<(usize, usize, Vec<Scalar>)>,
    pub cost: usize,
    pub cost_ok: bool,
}

impl DecompositionVerdict {
    pub fn passed(&self) -> bool {
        self.pieces.iter().all(|p| p.ok) && self.overlap.is_none() && self.cost_ok
    }
}

/// Checks irreducibility of each piece (modulus at most `tau`), pairwise
/// disjoint supports, and that the flats are NC in `Q^n`.
pub fn verify_decomposition(
    r: &Decomposition,
    n: usize,
    w: &Scalar,
    tau: &Scalar,
    mcfg: &ModulusConfig,
) -> Result<DecompositionVerdict, DecomposeError> {
    let mut pieces = Vec::new();
    for (f, mu) in r.flats.iter().zip(&r.pieces) {
        if f.dim() == 0 {
            pieces.push(PieceCheck { flat_dim: 0, tau: None, witness: None, ok: true });
            continue;
        }
        let rep = irreducibility_modulus(mu, f, w, mcfg)?;
        let ok = &rep.tau <= tau;
        pieces.push(PieceCheck { flat_dim: f.dim(), tau: Some(rep.tau), witness: rep.witness, ok });
    }
    let mut overlap = None;
    'outer: for (i, a) in r.pieces.iter().enumerate() {
        let pa: HashSet<&Vec<Scalar>> = a.atoms().iter().map(|t| &t.point).collect();
        for (j, b) in r.pieces.iter().enumerate().skip(i + 1) {
            if let Some(t) = b.atoms().iter().find(|t| pa.contains(&t.point)) {
                overlap = Some((i, j, t.point.clone()));
                break 'outer;
            }
        }
    }
    let cost = partition_cost(&r.flats)?.cost;
    Ok(DecompositionVerdict { pieces, overlap, cost, cost_ok: cost >= n })
}
