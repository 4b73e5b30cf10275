//! Projections: radial projection to a hyperplane, join–meet projection
//! from a centre flat to a screen, the `(u, t, w)` chart of a flat, lifting
//! screen hyperplanes, and the hyperplane map `W ↦ ψ(W)` of a minimal frame.

use std::collections::HashMap;

use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

use crate::exactlin::{self, add, dot, inverse, rank, scale, solve, sub, Matrix, Scalar};
use crate::flats::{join, meet, AffineFlat, FlatError};
use crate::measures::{Atom, DiscreteMeasure, MeasureError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProjectError {
    #[error("parallel ray")]
    ParallelRay,
    #[error("centre lies on the screen")]
    CentreOnScreen,
    #[error("screen must be a hyperplane (dim {dim} in Q^{n})")]
    NotHyperplane { dim: usize, n: usize },
    #[error("point lies in the centre flat")]
    PointInCentre,
    #[error("non-generic screen")]
    NonGenericScreen,
    #[error("center fiber")]
    CenterFiber,
    #[error("degenerate chart: {0}")]
    BadChart(String),
    #[error("hyperplane normal must be nonzero")]
    ZeroNormal,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Flat(#[from] FlatError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

fn hyperplane_equation(h: &AffineFlat) -> Result<(Vec<Scalar>, Scalar), ProjectError> {
    let n = h.ambient_dim();
    if n == 0 || h.dim() + 1 != n {
        return Err(ProjectError::NotHyperplane { dim: h.dim(), n });
    }
    let (a, c) = h.equations();
    Ok((a.row(0).to_vec(), c[0].clone()))
}

/// Point where the line through `x` and `y` meets the hyperplane `h`.
pub fn radial_to_hyperplane(x: &[Scalar], h: &AffineFlat, y: &[Scalar]) -> Result<Vec<Scalar>, ProjectError> {
    let (a, b) = hyperplane_equation(h)?;
    let ax = dot(&a, x);
    if ax == b {
        return Err(ProjectError::CentreOnScreen);
    }
    let dir = sub(y, x);
    let den = dot(&a, &dir);
    if den.is_zero() {
        return Err(ProjectError::ParallelRay);
    }
    Ok(add(x, &scale(&dir, &((b - ax) / den))))
}

/// Radial projection of `y` to the unit sphere around `x` (floating point;
/// only used for plots and fits).
pub fn radial_to_sphere(x: &[Scalar], y: &[Scalar]) -> Option<Vec<f64>> {
    let d: Vec<f64> = sub(y, x).iter().map(exactlin::to_f64).collect();
    let n = d.iter().map(|t| t * t).sum::<f64>().sqrt();
    (n > 0.0).then(|| d.iter().map(|t| t / n).collect())
}

/// The single point `aff(v, q) ∩ z`.
pub fn join_meet(q: &AffineFlat, z: &AffineFlat, v: &[Scalar]) -> Result<Vec<Scalar>, ProjectError> {
    if q.contains_point(v) {
        return Err(ProjectError::PointInCentre);
    }
    let j = join(&[&AffineFlat::point(v.to_vec()), q])?;
    match meet(&j, z)? {
        Some(m) if m.dim() == 0 => Ok(m.basepoint().to_vec()),
        _ => Err(ProjectError::NonGenericScreen),
    }
}

/// Builds a measure from atoms, merging coincident locations (first
/// occurrence order is kept).
pub fn merge_atoms(n: usize, atoms: Vec<Atom>, resolution: Scalar) -> Result<DiscreteMeasure, MeasureError> {
    let mut index: HashMap<Vec<Scalar>, usize> = HashMap::new();
    let mut out: Vec<Atom> = Vec::new();
    for a in atoms {
        match index.get(&a.point) {
            Some(&k) => out[k].weight += a.weight,
            None => {
                index.insert(a.point.clone(), out.len());
                out.push(a);
            }
        }
    }
    DiscreteMeasure::new(n, out, resolution)
}

/// `f#μ`; fails if `f` fails on any atom.
pub fn pushforward<F>(mu: &DiscreteMeasure, out_dim: usize, f: F) -> Result<DiscreteMeasure, ProjectError>
where
    F: Fn(&[Scalar]) -> Result<Vec<Scalar>, ProjectError>,
{
    let atoms = mu
        .atoms()
        .iter()
        .map(|a| Ok(Atom { point: f(&a.point)?, weight: a.weight.clone() }))
        .collect::<Result<Vec<_>, ProjectError>>()?;
    Ok(merge_atoms(out_dim, atoms, mu.resolution().clone())?)
}

/// Image of a flat under projection from the point `x` to the hyperplane `h`.
pub fn project_flat(v: &AffineFlat, x: &[Scalar], h: &AffineFlat) -> Result<AffineFlat, ProjectError> {
    hyperplane_equation(h)?;
    if h.contains_point(x) {
        return Err(ProjectError::CentreOnScreen);
    }
    let j = join(&[v, &AffineFlat::point(x.to_vec())])?;
    meet(&j, h)?.ok_or(ProjectError::NonGenericScreen)
}

/// `min_y λ(y)² sin²∠(y - x, V)` over `points ⊂ V`, where `λ(y)` is the
/// ratio of the homothety about `x` taking `y` onto `h`. At `y` the projection
/// `V → h` shrinks no direction of `V` by more than `λ(y) sin∠(y - x, V)`.
pub fn contraction_floor_sq(v: &AffineFlat, x: &[Scalar], h: &AffineFlat, points: &[Vec<Scalar>]) -> Result<Scalar, ProjectError> {
    let (a, c) = hyperplane_equation(h)?;
    if h.contains_point(x) {
        return Err(ProjectError::CentreOnScreen);
    }
    let n = h.ambient_dim();
    let dirs = Matrix::from_cols(n, v.directions()).expect("uniform columns");
    let height = &c - dot(&a, x);
    let mut best: Option<Scalar> = None;
    for y in points {
        let r = sub(y, x);
        let den = dot(&a, &r);
        if den.is_zero() {
            return Err(ProjectError::ParallelRay);
        }
        let lam = &height / &den;
        let s2 = crate::flats::wedge_angle_sin2(&Matrix::from_cols(n, &[r]).expect("one column"), &dirs)?;
        let v2 = &lam * &lam * s2;
        if best.as_ref().is_none_or(|b| &v2 < b) {
            best = Some(v2);
        }
    }
    best.ok_or_else(|| ProjectError::Precondition("no points".into()))
}

/// Affine chart of a flat `F` adapted to a screen `U ⊂ F` (dim `p`) and a
/// centre `C ⊂ F` (dim `dim F - p - 1`) with `U ∩ C = ∅`: coordinates
/// `(u, t, w)` with `U = {(u,0,0)}` and `C = {(0,1,w)}`.
#[derive(Debug, Clone)]
pub struct ChartFrame {
    host: AffineFlat,
    screen: AffineFlat,
    centre: AffineFlat,
    origin: Vec<Scalar>,
    /// `n x dim F`: columns are the `u`, `t`, `w` directions.
    basis: Matrix,
}

impl ChartFrame {
    pub fn new(host: &AffineFlat, screen: &AffineFlat, centre: &AffineFlat) -> Result<Self, ProjectError> {
        let p = screen.dim();
        if !screen.is_subflat_of(host) || !centre.is_subflat_of(host) {
            return Err(ProjectError::BadChart("screen and centre must lie in the host flat".into()));
        }
        if p + centre.dim() + 1 != host.dim() {
            return Err(ProjectError::BadChart(format!(
                "dims {} + {} + 1 != {}",
                p,
                centre.dim(),
                host.dim()
            )));
        }
        let origin = screen.basepoint().to_vec();
        let mut cols: Vec<Vec<Scalar>> = screen.directions().to_vec();
        cols.push(sub(centre.basepoint(), &origin));
        cols.extend(centre.directions().iter().cloned());
        let basis = Matrix::from_cols(host.ambient_dim(), &cols).expect("uniform");
        if rank(&basis) != host.dim() {
            return Err(ProjectError::BadChart("screen and centre are not skew".into()));
        }
        Ok(ChartFrame { host: host.clone(), screen: screen.clone(), centre: centre.clone(), origin, basis })
    }

    pub fn host(&self) -> &AffineFlat {
        &self.host
    }

    pub fn screen(&self) -> &AffineFlat {
        &self.screen
    }

    pub fn centre(&self) -> &AffineFlat {
        &self.centre
    }

    /// Screen dimension `p`.
    pub fn p(&self) -> usize {
        self.screen.dim()
    }

    pub fn to_chart(&self, x: &[Scalar]) -> Result<Vec<Scalar>, ProjectError> {
        solve(&self.basis, &sub(x, &self.origin))
            .ok_or_else(|| ProjectError::BadChart("point is not in the host flat".into()))
    }

    pub fn from_chart(&self, y: &[Scalar]) -> Vec<Scalar> {
        add(&self.origin, &self.basis.mul_vec(y))
    }

    /// Screen point with `u`-coordinates `u`.
    pub fn screen_point(&self, u: &[Scalar]) -> Vec<Scalar> {
        let mut y = u.to_vec();
        y.resize(self.basis.ncols(), Scalar::zero());
        self.from_chart(&y)
    }

    /// Image of a chart-coordinate flat in the ambient space.
    pub fn flat_from_chart(&self, f: &AffineFlat) -> AffineFlat {
        f.map_affine(&self.origin, &self.basis)
    }
}

/// `(u, t, w) ↦ u / (1 - t)`, the projection from the centre to the screen.
pub fn chart_project(cf: &ChartFrame, y: &[Scalar]) -> Result<Vec<Scalar>, ProjectError> {
    let p = cf.p();
    if y.len() != cf.basis.ncols() {
        return Err(ProjectError::BadChart(format!("expected {} chart coordinates", cf.basis.ncols())));
    }
    let s = Scalar::one() - &y[p];
    if s.is_zero() {
        return Err(ProjectError::CenterFiber);
    }
    Ok(y[..p].iter().map(|u| u / &s).collect())
}

/// `W = {u : a·u = b}` in screen coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperplaneCoords {
    pub a: Vec<Scalar>,
    pub b: Scalar,
}

impl HyperplaneCoords {
    pub fn new(a: Vec<Scalar>, b: Scalar) -> Result<Self, ProjectError> {
        if exactlin::is_zero_vec(&a) {
            return Err(ProjectError::ZeroNormal);
        }
        Ok(HyperplaneCoords { a, b })
    }

    /// The hyperplane of `Q^p`.
    pub fn flat(&self) -> AffineFlat {
        let a = Matrix::from_rows(vec![self.a.clone()]).unwrap();
        AffineFlat::from_equations(&a, std::slice::from_ref(&self.b)).expect("nonzero normal")
    }
}

/// Screen hyperplane `W` as a flat in the ambient space.
pub fn screen_hyperplane(cf: &ChartFrame, w: &HyperplaneCoords) -> Result<AffineFlat, ProjectError> {
    if w.a.len() != cf.p() {
        return Err(ProjectError::BadChart("normal length differs from screen dimension".into()));
    }
    let f = w.flat();
    let dirs = Matrix::from_cols(cf.host.ambient_dim(), cf.screen.directions()).unwrap();
    Ok(f.map_affine(cf.screen.basepoint(), &dirs))
}

/// `H_W = {a·u + b(t - 1) = 0}`, the hyperplane of the host flat that
/// contains the centre and projects onto `W`.
pub fn lift_hyperplane(cf: &ChartFrame, w: &HyperplaneCoords) -> Result<AffineFlat, ProjectError> {
    let p = cf.p();
    if w.a.len() != p {
        return Err(ProjectError::BadChart("normal length differs from screen dimension".into()));
    }
    let mut row = w.a.clone();
    row.push(w.b.clone());
    row.resize(cf.basis.ncols(), Scalar::zero());
    let a = Matrix::from_rows(vec![row]).unwrap();
    let f = AffineFlat::from_equations(&a, std::slice::from_ref(&w.b)).expect("nonzero normal");
    Ok(cf.flat_from_chart(&f))
}

/// Data of the hyperplane map for flats `F_1..F_k` with `Σ dim F_j = n + p`
/// and an atom choice on `F_1..F_{k-1}`: `𝐈 = {1}×[p]` are the first `p`
/// atoms on `F_1`, `E = ⟨x̄_{𝐈ᶜ}⟩`, the chart centre is `C = ⟨x_{1,p+1..}⟩`,
/// `J = aff(E, F_1)` and `Q_1 = J ∩ F_k`.
#[derive(Debug, Clone)]
pub struct PsiContext {
    pub flats: Vec<AffineFlat>,
    pub p: usize,
    pub e: AffineFlat,
    pub j: AffineFlat,
    pub q1: AffineFlat,
    pub chart: ChartFrame,
}

impl PsiContext {
    /// `atoms[j]` are the `dim F_j` chosen atoms on `F_j`, `j < k - 1`.
    pub fn new(flats: Vec<AffineFlat>, p: usize, atoms: &[Vec<Vec<Scalar>>], screen: &AffineFlat) -> Result<Self, ProjectError> {
        let k = flats.len();
        let pre = |s: String| Err(ProjectError::Precondition(s));
        if k < 2 || p == 0 {
            return pre("need k >= 2 flats and p >= 1".into());
        }
        let n = flats[0].ambient_dim();
        let total: usize = flats.iter().map(AffineFlat::dim).sum();
        if total != n + p {
            return pre(format!("Σ dim F_j = {total}, expected n + p = {}", n + p));
        }
        if atoms.len() != k - 1 {
            return pre(format!("need atoms on the first {} flats", k - 1));
        }
        for (jj, (f, xs)) in flats.iter().zip(atoms).enumerate() {
            if xs.len() != f.dim() {
                return pre(format!("flat {jj} needs {} atoms, got {}", f.dim(), xs.len()));
            }
            if xs.iter().any(|x| !f.contains_point(x)) {
                return pre(format!("atom off flat {jj}"));
            }
        }
        let n1 = flats[0].dim();
        if n1 < p + 1 {
            return pre(format!("dim F_1 = {n1} < p + 1"));
        }
        let comp: Vec<Vec<Scalar>> = atoms[0][p..].iter().chain(atoms[1..].iter().flatten()).cloned().collect();
        let e = AffineFlat::through_points(&comp)?;
        let nk1: usize = flats[..k - 1].iter().map(AffineFlat::dim).sum();
        if e.dim() + p + 1 != nk1 {
            return pre(format!("dim E = {}, expected {}", e.dim(), nk1 - p - 1));
        }
        let centre = AffineFlat::through_points(&atoms[0][p..])?;
        let chart = ChartFrame::new(&flats[0], screen, &centre)?;
        let j = join(&[&e, &flats[0]])?;
        if j.dim() != nk1 {
            return pre(format!("dim J = {}, expected {nk1}", j.dim()));
        }
        let q1 = meet(&j, &flats[k - 1])?.ok_or(ProjectError::NonGenericScreen)?;
        if q1.dim() != p {
            return pre(format!("dim Q_1 = {}, expected {p}", q1.dim()));
        }
        Ok(PsiContext { flats, p, e, j, q1, chart })
    }
}

/// `ψ(W) = aff(E, H_W) ∩ F_k`.
pub fn hyperplane_map_psi(ctx: &PsiContext, w: &HyperplaneCoords) -> Result<AffineFlat, ProjectError> {
    let h = lift_hyperplane(&ctx.chart, w)?;
    let s = join(&[&ctx.e, &h])?;
    let fk = ctx.flats.last().unwrap();
    match meet(&s, fk)? {
        Some(f) if f.dim() + 1 == ctx.p => Ok(f),
        _ => Err(ProjectError::NonGenericScreen),
    }
}

/// Affine model `L#(u) = y0 + B (M u)` of the hyperplane map, where `B`
/// holds the canonical directions of `Q_1`. Predicts
/// `ψ(W(a,b)) = {y0 + B η : (M^{-T} a)·η = b}`.
#[derive(Debug, Clone)]
pub struct PsiAffine {
    pub y0: Vec<Scalar>,
    pub b: Matrix,
    pub m: Matrix,
}

impl PsiAffine {
    pub fn predict(&self, w: &HyperplaneCoords) -> Result<AffineFlat, ProjectError> {
        let minv_t = inverse(&self.m).ok_or(ProjectError::NonGenericScreen)?.transpose();
        let a2 = minv_t.mul_vec(&w.a);
        let eta = HyperplaneCoords::new(a2, w.b.clone())?.flat();
        Ok(eta.map_affine(&self.y0, &self.b))
    }
}

/// Builds `M` and `y0` from a seeded transversal `(p+1)`-flat `K ⊂ J` and a
/// line direction `ℓ ⊂ dir K`: `L# = (q_K|Q_1)^{-1} ∘ T ∘ q_K|U` where `q_K`
/// projects `J` onto `K` along `dir E` and `T` slides `q_K(U)` onto
/// `q_K(Q_1)` along `ℓ`.
pub fn psi_matrix(ctx: &PsiContext, seed: u64) -> Result<PsiAffine, ProjectError> {
    let mut g = rng::seeded(seed);
    let p = ctx.p;
    let n = ctx.j.ambient_dim();
    let dir_e: Vec<Vec<Scalar>> = ctx.e.directions().to_vec();
    let dir_j: Vec<Vec<Scalar>> = ctx.j.directions().to_vec();
    let rand_in_j = |g: &mut rng::SeededRng| -> Vec<Scalar> {
        dir_j.iter().fold(vec![Scalar::zero(); n], |acc, d| add(&acc, &scale(d, &rng::rational(g, 50, 7))))
    };
    for _ in 0..64 {
        let k0 = add(ctx.j.basepoint(), &rand_in_j(&mut g));
        let dir_k: Vec<Vec<Scalar>> = (0..p + 1).map(|_| rand_in_j(&mut g)).collect();
        let mut cols = dir_e.clone();
        cols.extend(dir_k.iter().cloned());
        let ek = Matrix::from_cols(n, &cols).unwrap();
        if rank(&ek) != ctx.j.dim() {
            continue;
        }
        // q_K(x) = k0 + (K-part of x - k0 in the basis dir E ⊕ dir K)
        let qk = |x: &[Scalar]| -> Option<Vec<Scalar>> {
            let c = solve(&ek, &sub(x, &k0))?;
            Some(dir_k.iter().zip(&c[dir_e.len()..]).fold(k0.clone(), |acc, (d, t)| add(&acc, &scale(d, t))))
        };
        let image = |f: &AffineFlat| -> Option<AffineFlat> {
            let pts: Vec<Vec<Scalar>> = std::iter::once(f.basepoint().to_vec())
                .chain(f.directions().iter().map(|d| add(f.basepoint(), d)))
                .map(|x| qk(&x))
                .collect::<Option<_>>()?;
            AffineFlat::through_points(&pts).ok()
        };
        let (Some(ub), Some(qb)) = (image(ctx.chart.screen()), image(&ctx.q1)) else { continue };
        if ub.dim() != p || qb.dim() != p {
            continue;
        }
        let ell = dir_k.iter().fold(vec![Scalar::zero(); n], |acc, d| add(&acc, &scale(d, &rng::rational(&mut g, 50, 11))));
        let in_span = |f: &AffineFlat| {
            let mut c = f.directions().to_vec();
            c.push(ell.clone());
            rank(&Matrix::from_cols(n, &c).unwrap()) == f.dim()
        };
        if exactlin::is_zero_vec(&ell) || in_span(&ub) || in_span(&qb) {
            continue;
        }
        let lsharp = |u: &[Scalar]| -> Option<Vec<Scalar>> {
            let z = qk(&ctx.chart.screen_point(u))?;
            let line = AffineFlat::new(z, vec![ell.clone()]).ok()?;
            let zp = meet(&line, &qb).ok()??;
            let fibre = AffineFlat::new(zp.basepoint().to_vec(), dir_e.clone()).ok()?;
            let y = meet(&fibre, &ctx.q1).ok()??;
            (y.dim() == 0).then(|| y.basepoint().to_vec())
        };
        let Some(y0) = lsharp(&vec![Scalar::zero(); p]) else { continue };
        let bmat = Matrix::from_cols(n, ctx.q1.directions()).unwrap();
        let mut mcols = Vec::with_capacity(p);
        for i in 0..p {
            let mut e = vec![Scalar::zero(); p];
            e[i] = Scalar::one();
            let Some(y) = lsharp(&e) else { break };
            let Some(eta) = solve(&bmat, &sub(&y, &y0)) else { break };
            mcols.push(eta);
        }
        if mcols.len() < p {
            continue;
        }
        let m = Matrix::from_cols(p, &mcols).unwrap();
        if inverse(&m).is_none() {
            continue;
        }
        return Ok(PsiAffine { y0, b: bmat, m });
    }
    Err(ProjectError::NonGenericScreen)
}

/// Exact projective form of the hyperplane map: the linear map `Λ` sending
/// screen coordinates `(u; 1)` to `Q_1` coordinates `(η; 1)` (up to scale),
/// where `Q_1 = {y0 + B η}` with `y0`, `B` the canonical basepoint and
/// directions. It is projection of `Ū` onto `F̄_k` along `Ē`.
#[derive(Debug, Clone)]
pub struct PsiProjective {
    pub y0: Vec<Scalar>,
    pub b: Matrix,
    pub lambda: Matrix,
}

impl PsiProjective {
    /// `{y0 + B η : ℓ'·(η; 1) = 0}` with `ℓ' = Λ^{-T} (a; -b)`.
    pub fn predict(&self, w: &HyperplaneCoords) -> Result<AffineFlat, ProjectError> {
        let inv_t = inverse(&self.lambda).ok_or(ProjectError::NonGenericScreen)?.transpose();
        let mut cov = w.a.clone();
        cov.push(-w.b.clone());
        let l = inv_t.mul_vec(&cov);
        let p = l.len() - 1;
        let hw = HyperplaneCoords::new(l[..p].to_vec(), -l[p].clone())
            .map_err(|_| ProjectError::Precondition("image hyperplane is at infinity".into()))?;
        Ok(hw.flat().map_affine(&self.y0, &self.b))
    }
}

pub fn psi_projective(ctx: &PsiContext) -> Result<PsiProjective, ProjectError> {
    let n = ctx.j.ambient_dim();
    let p = ctx.p;
    let fk = ctx.flats.last().unwrap();
    let ebar = ctx.e.linear_span();
    let fbar = fk.linear_span();
    let mut cols = ebar.clone();
    cols.extend(fbar.iter().cloned());
    let ef = Matrix::from_cols(n + 1, &cols).unwrap();
    if rank(&ef) != n + 1 || cols.len() != n + 1 {
        return Err(ProjectError::Precondition("Ē and F̄_k are not complementary".into()));
    }
    // Q_1 coordinates (η; 1), homogeneous coordinate last
    let mut qcols: Vec<Vec<Scalar>> = ctx.q1.directions().iter().map(|d| {
        let mut d = d.clone();
        d.push(Scalar::zero());
        d
    }).collect();
    qcols.push(crate::flats::lift(ctx.q1.basepoint()));
    let qmat = Matrix::from_cols(n + 1, &qcols).unwrap();
    let screen = ctx.chart.screen();
    let mut ucols = screen.directions().iter().map(|d| {
        let mut d = d.clone();
        d.push(Scalar::zero());
        d
    }).collect::<Vec<_>>();
    ucols.push(crate::flats::lift(screen.basepoint()));
    let mut lam_cols = Vec::with_capacity(p + 1);
    for v in &ucols {
        let c = solve(&ef, v).expect("full rank");
        let fpart = fbar.iter().zip(&c[ebar.len()..]).fold(vec![Scalar::zero(); n + 1], |acc, (d, t)| add(&acc, &scale(d, t)));
        let eta = solve(&qmat, &fpart).ok_or_else(|| ProjectError::Precondition("projection leaves Q_1".into()))?;
        lam_cols.push(eta);
    }
    let lambda = Matrix::from_cols(p + 1, &lam_cols).unwrap();
    Ok(PsiProjective { y0: ctx.q1.basepoint().to_vec(), b: Matrix::from_cols(n, ctx.q1.directions()).unwrap(), lambda })
}

/// Uniformly random hyperplane parameters with a nonzero normal.
pub fn random_hyperplane(g: &mut rng::SeededRng, p: usize) -> HyperplaneCoords {
    loop {
        let den = g.gen_range(1..=9);
        let a = rng::vector(g, p, 20, den);
        if !exactlin::is_zero_vec(&a) {
            return HyperplaneCoords { a, b: rng::rational(g, 20, 7) };
        }
    }
}

/// Seeded random hyperplane-map configuration: flats of the given dims in
/// `Q^n` (`n = Σ dims - p`), random atoms on all but the last flat and a
/// random screen in `F_1`. Degenerate draws are retried.
pub fn random_psi_context(g: &mut rng::SeededRng, dims: &[usize], p: usize) -> Result<PsiContext, ProjectError> {
    let total: usize = dims.iter().sum();
    if total < p || dims.len() < 2 {
        return Err(ProjectError::Precondition("need at least two flats and Σ dims ≥ p".into()));
    }
    let n = total - p;
    for _ in 0..256 {
        let flats: Vec<AffineFlat> = dims.iter().map(|&d| rng::flat(g, n, d, 9, 1)).collect();
        if flats.iter().zip(dims).any(|(f, &d)| f.dim() != d) {
            continue;
        }
        let atoms: Vec<Vec<Vec<Scalar>>> = flats[..flats.len() - 1]
            .iter()
            .map(|f| (0..f.dim()).map(|_| rng::point_on(g, f, 12, 5)).collect())
            .collect();
        let f1 = &flats[0];
        let base = rng::point_on(g, f1, 12, 5);
        let dirs: Vec<Vec<Scalar>> = (0..p)
            .map(|_| f1.directions().iter().fold(vec![Scalar::zero(); n], |acc, d| add(&acc, &scale(d, &rng::rational(g, 9, 2)))))
            .collect();
        let Ok(screen) = AffineFlat::new(base, dirs) else { continue };
        if screen.dim() != p {
            continue;
        }
        if let Ok(ctx) = PsiContext::new(flats, p, &atoms, &screen) {
            return Ok(ctx);
        }
    }
    Err(ProjectError::NonGenericScreen)
}
