//! Stable-position certificates for frames `(V_j, μ_{j,i})`.
//!
//! For an index pair `(Ī, J)` and a choice of one atom per slot in `Ī`, the
//! matrix `B_Ī(x̄) | A_J` has the lifted atoms `(x;1)` followed by an
//! orthogonal basis of each linearisation `V̄_j`, `j ∈ J`. A frame is certified
//! at level `c2` when, for every index pair, the rank does not depend on the
//! atom choice and some maximal minor of the column-normalised matrix has
//! square at least `c2`.
//!
//! Bases are orthogonal but not normalised (normalising needs square roots);
//! the minor test divides by the column norms instead, which gives exactly
//! the orthonormal value for basis columns. Atom columns are normalised too,
//! which differs from the raw `(x;1)` convention by at most a factor 2 per
//! column inside the unit ball.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::exactlin::{self, fmt_scalar, max_normalized_minor_sq, norm_sq, rank, sub, Matrix, Scalar};
use crate::flats::{join, lift, meet, wedge_angle_sin2, AffineFlat, FlatError};
use crate::measures::{DiscreteMeasure, MeasureError};
use crate::project::{join_meet, ProjectError};
use crate::rng::tuple_plan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StabilityError {
    #[error("index ({0}, {1}) is not a slot of the frame")]
    BadSlot(usize, usize),
    #[error("flat index {0} out of range")]
    BadFlat(usize),
    #[error("missing or out-of-range atom pick for slot ({0}, {1})")]
    MissingPick(usize, usize),
    #[error("atom {atom} of measure ({j}, {i}) does not lie on its flat")]
    NotOnFlat { j: usize, i: usize, atom: usize },
    #[error("budget exceeded: {untested} of {total} evaluations would go untested")]
    BudgetExceeded { untested: usize, total: usize },
    #[error("cannot stabilize at configured ball radii")]
    CannotStabilize,
    #[error("projection needs a nonempty centre set")]
    EmptyCentre,
    #[error("screen is not transversal to the centre span")]
    NotTransversal,
    #[error(transparent)]
    Flat(#[from] FlatError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Project(#[from] ProjectError),
}

/// Slot `(j, i)`: measure `i` on flat `j`.
pub type Slot = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct IndexPair {
    pub atoms: BTreeSet<Slot>,
    pub flats: BTreeSet<usize>,
}

impl IndexPair {
    pub fn new(atoms: impl IntoIterator<Item = Slot>, flats: impl IntoIterator<Item = usize>) -> Self {
        IndexPair { atoms: atoms.into_iter().collect(), flats: flats.into_iter().collect() }
    }
}

impl std::fmt::Display for IndexPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "I={:?} J={:?}", self.atoms, self.flats)
    }
}

/// One atom index per slot, `pick[j][i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AtomPick(pub Vec<Vec<usize>>);

#[derive(Debug, Clone)]
pub struct StableFrame {
    n: usize,
    flats: Vec<AffineFlat>,
    bases: Vec<Vec<Vec<Scalar>>>,
    basis_norms: Vec<Vec<Scalar>>,
    measures: Vec<Vec<DiscreteMeasure>>,
}

impl StableFrame {
    /// `measures[j]` are supported on `flats[j]`.
    pub fn new(flats: Vec<AffineFlat>, measures: Vec<Vec<DiscreteMeasure>>) -> Result<Self, StabilityError> {
        let n = flats.first().map_or(0, AffineFlat::ambient_dim);
        if measures.len() != flats.len() {
            return Err(FlatError::DimensionMismatch(format!("{} flats but {} measure lists", flats.len(), measures.len())).into());
        }
        for (j, (f, ms)) in flats.iter().zip(&measures).enumerate() {
            if f.ambient_dim() != n {
                return Err(FlatError::DimensionMismatch("flats in different ambient spaces".into()).into());
            }
            let p = f.projector();
            for (i, m) in ms.iter().enumerate() {
                if m.ambient_dim() != n {
                    return Err(MeasureError::DimensionMismatch(format!("measure ({j}, {i})")).into());
                }
                if let Some(atom) = m.atoms().iter().position(|a| !p.sq_dist(&a.point).is_zero()) {
                    return Err(StabilityError::NotOnFlat { j, i, atom });
                }
            }
        }
        let (bases, basis_norms) = flats.iter().map(AffineFlat::orthogonal_linear_basis).unzip();
        Ok(StableFrame { n, flats, bases, basis_norms, measures })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn flats(&self) -> &[AffineFlat] {
        &self.flats
    }

    pub fn measures(&self) -> &[Vec<DiscreteMeasure>] {
        &self.measures
    }

    /// Orthogonal basis of `V̄_j` and its squared norms.
    pub fn basis(&self, j: usize) -> (&[Vec<Scalar>], &[Scalar]) {
        (&self.bases[j], &self.basis_norms[j])
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.measures.iter().enumerate().flat_map(|(j, ms)| (0..ms.len()).map(move |i| (j, i))).collect()
    }

    /// Every slot of the flats in `I`.
    pub fn slots_of(&self, flats: &BTreeSet<usize>) -> BTreeSet<Slot> {
        self.slots().into_iter().filter(|(j, _)| flats.contains(j)).collect()
    }

    fn check(&self, idx: &IndexPair) -> Result<(), StabilityError> {
        for &(j, i) in &idx.atoms {
            if j >= self.measures.len() || i >= self.measures[j].len() {
                return Err(StabilityError::BadSlot(j, i));
            }
        }
        if let Some(&j) = idx.flats.iter().find(|&&j| j >= self.flats.len()) {
            return Err(StabilityError::BadFlat(j));
        }
        Ok(())
    }

    fn matrix_for(&self, slots: &[Slot], atoms: &[usize], flats: &BTreeSet<usize>) -> Matrix {
        let mut cols: Vec<Vec<Scalar>> = slots
            .iter()
            .zip(atoms)
            .map(|(&(j, i), &a)| lift(&self.measures[j][i].atoms()[a].point))
            .collect();
        for &j in flats {
            cols.extend(self.bases[j].iter().cloned());
        }
        Matrix::from_cols(self.n + 1, &cols).expect("uniform columns")
    }

    /// Frame with every measure restricted to the atoms kept by `keep`.
    pub fn restrict<F: Fn(Slot, usize) -> bool>(&self, keep: F) -> StableFrame {
        let measures = self
            .measures
            .iter()
            .enumerate()
            .map(|(j, ms)| ms.iter().enumerate().map(|(i, m)| m.restrict(|a, _| keep((j, i), a))).collect())
            .collect();
        StableFrame { measures, ..self.clone() }
    }
}

/// `B_Ī(x̄) | A_J` for the atoms chosen by `pick`.
pub fn build_matrix(frame: &StableFrame, pick: &AtomPick, idx: &IndexPair) -> Result<Matrix, StabilityError> {
    frame.check(idx)?;
    let slots: Vec<Slot> = idx.atoms.iter().copied().collect();
    let atoms = slots
        .iter()
        .map(|&(j, i)| {
            pick.0
                .get(j)
                .and_then(|r| r.get(i))
                .copied()
                .filter(|&a| a < frame.measures[j][i].len())
                .ok_or(StabilityError::MissingPick(j, i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(frame.matrix_for(&slots, &atoms, &idx.flats))
}

#[derive(Debug, Clone)]
pub struct StabilityConfig {
    /// Largest support for which atom choices are enumerated exhaustively.
    pub max_support: usize,
    /// Cap on atom choices per index pair for `rank_r`; beyond it, sampled.
    pub max_picks: usize,
    /// Cap on total (index pair, atom choice) evaluations in a certificate.
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { max_support: 64, max_picks: 4096, max_evals: 2_000_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankOutcome {
    Constant { rank: usize, picks: usize, exhaustive: bool },
    Inconsistent { first: (Vec<usize>, usize), second: (Vec<usize>, usize) },
}

fn slot_sizes(frame: &StableFrame, slots: &[Slot]) -> Vec<usize> {
    slots.iter().map(|&(j, i)| frame.measures[j][i].len()).collect()
}

/// `r(Ī, J)`: the rank, if it is the same for every atom choice in `Ī`.
pub fn rank_r(frame: &StableFrame, idx: &IndexPair, cfg: &StabilityConfig) -> Result<RankOutcome, StabilityError> {
    frame.check(idx)?;
    let slots: Vec<Slot> = idx.atoms.iter().copied().collect();
    let sizes = slot_sizes(frame, &slots);
    let small = sizes.iter().all(|&s| s <= cfg.max_support);
    let (plan, exhaustive) = if small {
        tuple_plan(&sizes, cfg.max_picks, cfg.seed)
    } else {
        (crate::rng::sample_tuples(&sizes, cfg.max_picks, cfg.seed), false)
    };
    let mut first: Option<(Vec<usize>, usize)> = None;
    for t in &plan {
        let r = rank(&frame.matrix_for(&slots, t, &idx.flats));
        match &first {
            None => first = Some((t.clone(), r)),
            Some((_, r0)) if *r0 != r => {
                return Ok(RankOutcome::Inconsistent { first: first.unwrap(), second: (t.clone(), r) });
            }
            _ => {}
        }
    }
    let rank = first.map_or(0, |f| f.1);
    Ok(RankOutcome::Constant { rank, picks: plan.len(), exhaustive })
}

/// All index pairs `(Ī, J)` of a frame.
pub fn all_index_pairs(frame: &StableFrame) -> Vec<IndexPair> {
    let slots = frame.slots();
    let m = frame.flats.len();
    let mut out = Vec::with_capacity(1 << (slots.len() + m));
    for am in 0..1usize << slots.len() {
        for fm in 0..1usize << m {
            out.push(IndexPair::new(
                (0..slots.len()).filter(|b| am >> b & 1 == 1).map(|b| slots[b]),
                (0..m).filter(|b| fm >> b & 1 == 1),
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RankJump { idx: IndexPair, first: (Vec<usize>, usize), second: (Vec<usize>, usize) },
    SmallMinor { idx: IndexPair, atoms: Vec<usize>, rank: usize, value: Scalar },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RankJump { idx, first, second } => write!(
                f,
                "rank jump at {idx}: atoms {:?} give {}, atoms {:?} give {}",
                first.0, first.1, second.0, second.1
            ),
            Violation::SmallMinor { idx, atoms, rank, value } => {
                write!(f, "normalised {rank}-minor {} below c2 at {idx}, atoms {atoms:?}", fmt_scalar(value))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub certified: bool,
    pub c2: Scalar,
    pub violation: Option<Violation>,
    pub pairs: usize,
    pub evaluations: usize,
}

fn eval_count(frame: &StableFrame, pairs: &[IndexPair]) -> Option<usize> {
    pairs.iter().try_fold(0usize, |acc, p| {
        let slots: Vec<Slot> = p.atoms.iter().copied().collect();
        let prod = slot_sizes(frame, &slots).iter().try_fold(1usize, |a, &s| a.checked_mul(s))?;
        acc.checked_add(prod)
    })
}

fn budget(frame: &StableFrame, cfg: &StabilityConfig) -> Result<Vec<IndexPair>, StabilityError> {
    let slots = frame.slots();
    if slots.len() + frame.flats.len() > 20 {
        return Err(StabilityError::BudgetExceeded { untested: usize::MAX, total: usize::MAX });
    }
    let pairs = all_index_pairs(frame);
    let total = eval_count(frame, &pairs).unwrap_or(usize::MAX);
    let big = slots.iter().any(|&(j, i)| frame.measures[j][i].len() > cfg.max_support);
    if total > cfg.max_evals || big {
        let tested = if big { 0 } else { cfg.max_evals };
        return Err(StabilityError::BudgetExceeded { untested: total.saturating_sub(tested), total });
    }
    Ok(pairs)
}

/// Exhaustive certificate at level `c2`; fails with the first violation.
pub fn certify_stability(frame: &StableFrame, c2: &Scalar, cfg: &StabilityConfig) -> Result<StabilityCertificate, StabilityError> {
    let pairs = budget(frame, cfg)?;
    let mut evaluations = 0;
    for idx in &pairs {
        let slots: Vec<Slot> = idx.atoms.iter().copied().collect();
        let (plan, _) = tuple_plan(&slot_sizes(frame, &slots), usize::MAX, 0);
        let mut first: Option<(Vec<usize>, usize)> = None;
        for t in plan {
            evaluations += 1;
            let m = frame.matrix_for(&slots, &t, &idx.flats);
            let r = rank(&m);
            if let Some(f) = &first {
                if f.1 != r {
                    let violation = Violation::RankJump { idx: idx.clone(), first: f.clone(), second: (t, r) };
                    return Ok(StabilityCertificate { certified: false, c2: c2.clone(), violation: Some(violation), pairs: pairs.len(), evaluations });
                }
            } else {
                first = Some((t.clone(), r));
            }
            if !exactlin::has_normalized_minor_at_least(&m, r, c2).expect("r <= min dims") {
                let value = max_normalized_minor_sq(&m, r).expect("r <= min dims");
                let violation = Violation::SmallMinor { idx: idx.clone(), atoms: t, rank: r, value };
                return Ok(StabilityCertificate { certified: false, c2: c2.clone(), violation: Some(violation), pairs: pairs.len(), evaluations });
            }
        }
    }
    Ok(StabilityCertificate { certified: true, c2: c2.clone(), violation: None, pairs: pairs.len(), evaluations })
}

/// `min` over index pairs of the largest normalised squared `r`-minor at a
/// fixed atom choice (`r` the rank there).
pub fn floor_at(frame: &StableFrame, pick: &AtomPick) -> Result<Scalar, StabilityError> {
    let mut floor = Scalar::one();
    for idx in all_index_pairs(frame) {
        let m = build_matrix(frame, pick, &idx)?;
        let v = max_normalized_minor_sq(&m, rank(&m)).expect("rank <= min dims");
        if v < floor {
            floor = v;
        }
    }
    Ok(floor)
}

/// `min` of [`floor_at`] over every atom choice, provided ranks are constant.
pub fn achieved_floor(frame: &StableFrame, cfg: &StabilityConfig) -> Result<Option<Scalar>, StabilityError> {
    let pairs = budget(frame, cfg)?;
    let mut floor = Scalar::one();
    for idx in &pairs {
        let slots: Vec<Slot> = idx.atoms.iter().copied().collect();
        let (plan, _) = tuple_plan(&slot_sizes(frame, &slots), usize::MAX, 0);
        let mut r0 = None;
        for t in plan {
            let m = frame.matrix_for(&slots, &t, &idx.flats);
            let r = rank(&m);
            if *r0.get_or_insert(r) != r {
                return Ok(None);
            }
            let v = max_normalized_minor_sq(&m, r).expect("rank <= min dims");
            if v < floor {
                floor = v;
            }
        }
    }
    Ok(Some(floor))
}

#[derive(Debug, Clone)]
pub struct StabilizeConfig {
    pub stability: StabilityConfig,
    /// Cap on candidate centre tuples scored by total rank.
    pub max_tuples: usize,
    /// Smallest ball radius tried; `None` shrinks until every measure is a
    /// single atom.
    pub min_radius: Option<Scalar>,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        StabilizeConfig { stability: StabilityConfig::default(), max_tuples: 256, min_radius: None }
    }
}

#[derive(Debug, Clone)]
pub struct Stabilized {
    pub frame: StableFrame,
    pub c2: Scalar,
    pub centre: AtomPick,
    /// Ball radius `2^-k` as an exact scalar.
    pub radius: Scalar,
}

fn pick_from_tuple(frame: &StableFrame, t: &[usize]) -> AtomPick {
    let mut it = t.iter();
    AtomPick(frame.measures.iter().map(|ms| ms.iter().map(|_| *it.next().unwrap()).collect()).collect())
}

/// Picks the atom tuple with the largest total rank, then restricts every
/// measure to a dyadic ball around its chosen atom, halving the radius until
/// the frame certifies at half the floor achieved at that tuple.
pub fn stabilize(frame: &StableFrame, cfg: &StabilizeConfig) -> Result<Stabilized, StabilityError> {
    let slots = frame.slots();
    let sizes = slot_sizes(frame, &slots);
    let (plan, _) = tuple_plan(&sizes, cfg.max_tuples, cfg.stability.seed);
    if plan.is_empty() {
        return Err(StabilityError::CannotStabilize);
    }
    let pairs = all_index_pairs(frame);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for t in &plan {
        let pick = pick_from_tuple(frame, t);
        let mut score = 0;
        for idx in &pairs {
            score += rank(&build_matrix(frame, &pick, idx)?);
        }
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, t.clone()));
        }
    }
    let centre = pick_from_tuple(frame, &best.unwrap().1);
    let c2 = floor_at(frame, &centre)? / Scalar::from_integer(2.into());

    // starting radius: smallest power of two covering every support
    let mut far = Scalar::zero();
    for &(j, i) in &slots {
        let x = &frame.measures[j][i].atoms()[centre.0[j][i]].point;
        for a in frame.measures[j][i].atoms() {
            let d = norm_sq(&sub(&a.point, x));
            if d > far {
                far = d;
            }
        }
    }
    let mut radius = Scalar::one();
    while &radius * &radius < far {
        radius *= Scalar::from_integer(2.into());
    }
    let half = Scalar::new(1.into(), 2.into());
    loop {
        if let Some(min) = &cfg.min_radius {
            if &radius < min {
                return Err(StabilityError::CannotStabilize);
            }
        }
        let r2 = &radius * &radius;
        let restricted = frame.restrict(|(j, i), a| {
            let x = &frame.measures[j][i].atoms()[centre.0[j][i]].point;
            norm_sq(&sub(&frame.measures[j][i].atoms()[a].point, x)) <= r2
        });
        let cert = certify_stability(&restricted, &c2, &cfg.stability)?;
        if cert.certified {
            // re-index the centre inside the restricted measures
            let centre_r = AtomPick(
                restricted
                    .measures
                    .iter()
                    .enumerate()
                    .map(|(j, ms)| {
                        ms.iter()
                            .enumerate()
                            .map(|(i, m)| {
                                let x = &frame.measures[j][i].atoms()[centre.0[j][i]].point;
                                m.atoms().iter().position(|a| &a.point == x).expect("centre kept")
                            })
                            .collect()
                    })
                    .collect(),
            );
            return Ok(Stabilized { frame: restricted, c2, centre: centre_r, radius });
        }
        if restricted.measures.iter().flatten().all(|m| m.len() <= 1) {
            return Err(StabilityError::CannotStabilize);
        }
        radius *= &half;
    }
}

#[derive(Debug, Clone)]
pub struct ProjectedStability {
    /// Ranks constant on the image frame.
    pub ranks_constant: bool,
    /// Achieved floor on the image frame, when ranks are constant.
    pub c2_prime: Option<Scalar>,
    /// Squared sine between the centre span and the screen.
    pub sin2_theta: Scalar,
    pub image: StableFrame,
}

/// Projects the frame from `Q = ⟨x̄_{I₀}⟩` (atom 0 of each slot in `I₀`) onto
/// the screen `u` and certifies the image frame built from the remaining
/// slots. `u` must be complementary to `Q`.
pub fn projected_stability_check(
    frame: &StableFrame,
    i0: &BTreeSet<Slot>,
    u: &AffineFlat,
    cfg: &StabilityConfig,
) -> Result<ProjectedStability, StabilityError> {
    if i0.is_empty() {
        return Err(StabilityError::EmptyCentre);
    }
    frame.check(&IndexPair { atoms: i0.clone(), flats: BTreeSet::new() })?;
    let centre_pts: Vec<Vec<Scalar>> = i0
        .iter()
        .map(|&(j, i)| frame.measures[j][i].atoms().first().map(|a| a.point.clone()).ok_or(StabilityError::MissingPick(j, i)))
        .collect::<Result<_, _>>()?;
    let q = AffineFlat::through_points(&centre_pts)?;
    let n = frame.n;
    if q.dim() + u.dim() + 1 != n {
        return Err(StabilityError::NotTransversal);
    }
    let qm = q.linearize();
    let um = u.linearize();
    if rank(&qm.hcat(&um).expect("same rows")) != n + 1 {
        return Err(StabilityError::NotTransversal);
    }
    let sin2_theta = wedge_angle_sin2(&qm, &um)?;

    let mut flats = Vec::new();
    let mut measures = Vec::new();
    for (j, ms) in frame.measures.iter().enumerate() {
        let rest: Vec<&DiscreteMeasure> = ms.iter().enumerate().filter(|(i, _)| !i0.contains(&(j, *i))).map(|(_, m)| m).collect();
        if rest.is_empty() {
            continue;
        }
        let img = meet(&join(&[&frame.flats[j], &q])?, u)?.ok_or(StabilityError::NotTransversal)?;
        let mut pushed = Vec::new();
        for m in rest {
            let atoms = m
                .atoms()
                .iter()
                .map(|a| {
                    Ok(crate::measures::Atom { point: join_meet(&q, u, &a.point)?, weight: a.weight.clone() })
                })
                .collect::<Result<Vec<_>, ProjectError>>()?;
            pushed.push(crate::project::merge_atoms(n, atoms, m.resolution().clone())?);
        }
        flats.push(img);
        measures.push(pushed);
    }
    let image = StableFrame::new(flats, measures)?;
    let c2_prime = achieved_floor(&image, cfg)?;
    Ok(ProjectedStability { ranks_constant: c2_prime.is_some(), c2_prime, sin2_theta, image })
}

/// `D(n)` in `sin² ∠(F̄_j, P̄_{[k]∖j}) ≥ c2 / D(n)` on certified minimal
/// frames. The certified minor of the square matrix `B | A_j` is
/// `det² / Π|col|²`, and Hadamard bounds each block's Gram determinant by its
/// column norms, so 1 works in every dimension.
pub fn angle_constant(_n: usize) -> Scalar {
    Scalar::one()
}

/// Squared sine between `F̄_j` and the span of the picked atoms on every
/// other flat.
pub fn complement_angle_sin2(frame: &StableFrame, pick: &AtomPick, j: usize) -> Result<Scalar, StabilityError> {
    if j >= frame.flats.len() {
        return Err(StabilityError::BadFlat(j));
    }
    let others: BTreeSet<usize> = (0..frame.flats.len()).filter(|&i| i != j).collect();
    let p = build_matrix(frame, pick, &IndexPair { atoms: frame.slots_of(&others), flats: BTreeSet::new() })?;
    let f = Matrix::from_cols(frame.n + 1, &frame.bases[j]).expect("uniform columns");
    Ok(wedge_angle_sin2(&f, &p)?)
}

/// `r(Ī, J)` at a fixed atom choice, for rank tables.
pub fn rank_at(frame: &StableFrame, pick: &AtomPick, idx: &IndexPair) -> Result<usize, StabilityError> {
    Ok(rank(&build_matrix(frame, pick, idx)?))
}
