//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N [PASS|FAIL]` line. Run with `--nocapture` to see them.

use std::collections::{BTreeSet, HashSet};
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use flatbeck::beck::{dichotomy_report, enumerate_spanned_flats, PointConfig, DEFAULT_BUDGET};
use flatbeck::decompose::{decompose, verify_decomposition, DecomposeConfig};
use flatbeck::exactlin::{dyadic, int, q, to_f64, Matrix, Scalar};
use flatbeck::flatcollect::partition_cost;
use flatbeck::flats::{join, lift, wedge_angle_sin2, AffineFlat};
use flatbeck::measures::{frostman_fit, irreducibility_modulus, DiscreteMeasure, ModulusConfig};
use flatbeck::project::{
    contraction_floor_sq, hyperplane_map_psi, join_meet, project_flat, psi_matrix, psi_projective, pushforward,
    random_hyperplane, random_psi_context,
};
use flatbeck::rng;
use flatbeck::scene::{dyadic_scales, parse_scene_str};
use flatbeck::stability::{angle_constant, complement_angle_sin2, rank_r, AtomPick, IndexPair, RankOutcome, StabilityConfig};
use flatbeck::thin::{
    dyadic_window, pushforward_frostman, support_flats_nc, tubes_to_planes, verify_thin_planes, verify_thin_tubes,
    ThinConfig, ThinGraph,
};
use flatbeck_validation::{certified_minimal_frame, corpus, flats_where, nc_collection, scene, scene_graphs, verdict};

// Criterion 1
const RANK_FRAMES: u64 = 50;
const RANK_SECONDS: f64 = 30.0;
// Criterion 2
const PSI_CONFIGS: u64 = 25;
const PSI_HYPERPLANES: usize = 10;
// Criterion 3
const BECK_POINTS: usize = 30;
const BECK_GENERIC_COUNT: usize = 4060;
const BECK_EPS: f64 = 0.1;
const BECK_SECONDS: f64 = 10.0;
// Criterion 4
const DECOMPOSE_W: (i64, i64) = (1, 1000);
const DECOMPOSE_THETA: (i64, i64) = (1, 4);
const DECOMPOSE_TAU: (i64, i64) = (1, 4);
// Criterion 5
const PUSH_BITS: u32 = 10;
const PUSH_SCALES: (u32, u32) = (2, 6);
const PUSH_S_PRIME: (f64, f64) = (1.8, 2.1);
const PUSH_SIGMA_TOL: f64 = 0.2;
const PUSH_SECONDS: f64 = 60.0;
// Criterion 6
const TUBES_EPS: f64 = 0.25;
const TUBES_SCALES: (u32, u32) = (2, 6);
const REL_TOL: f64 = 1e-9;
// Criterion 7
const NC_SEEDS: u64 = 120;
// Criterion 8
const PROJ_CENTRES: u64 = 50;
const PROJ_W: (i64, i64) = (1, 100);
const PROJ_ATOMS: usize = 12;
// Criterion 9
const ANGLE_FRAMES: u64 = 20;
// Criterion 10
const NEG_SIGMA: f64 = 1.5;
const NEG_BITS: u32 = 5;
const NEG_K: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// The criteria carry wall-clock limits, so they run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn rat((a, b): (i64, i64)) -> Scalar {
    q(a, b)
}

fn subsets(items: &[usize]) -> Vec<BTreeSet<usize>> {
    (0..1usize << items.len()).map(|m| (0..items.len()).filter(|b| m >> b & 1 == 1).map(|b| items[b]).collect()).collect()
}

/// Σ_{m≥1} 2^{-mε}, summed term by term.
fn series(eps: f64) -> f64 {
    (1..2000).map(|m| 2f64.powf(-(m as f64) * eps)).sum()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

#[test]
fn c01_rank_tables() {
    let _serial = serial();
    let t0 = Instant::now();
    let cfg = StabilityConfig::default();
    let (n, dims) = (4, [2usize, 1, 1]);
    let ids: Vec<usize> = (0..dims.len()).collect();
    let mut entries = 0;
    let mut bad = Vec::new();
    for seed in 0..RANK_FRAMES {
        let (f, _) = certified_minimal_frame(seed, n, &dims, 2);
        for iset in subsets(&ids) {
            let n_i: usize = iset.iter().map(|&j| f.flats()[j].dim()).sum();
            let rest: Vec<usize> = ids.iter().copied().filter(|j| !iset.contains(j)).collect();
            for jset in subsets(&rest) {
                entries += 1;
                let idx = IndexPair::new(f.slots_of(&iset), jset.iter().copied());
                let rank = match rank_r(&f, &idx, &cfg).unwrap() {
                    RankOutcome::Constant { rank, .. } => rank,
                    other => {
                        bad.push(format!("seed {seed} {idx}: {other:?}"));
                        continue;
                    }
                };
                let n_ij = n_i + jset.iter().map(|&j| f.flats()[j].dim()).sum::<usize>();
                let ok = if jset.is_empty() { rank == n_i } else { rank > n_ij }
                    && (jset.len() != rest.len() || rest.is_empty() || rank == n + 1);
                if !ok {
                    bad.push(format!("seed {seed} {idx}: rank {rank}, n_I {n_i}, n_IJ {n_ij}"));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = bad.is_empty() && secs < RANK_SECONDS;
    let detail = format!("{entries} entries over {RANK_FRAMES} frames in Q^4 (dims 2+1+1), {} violations, {secs:.1}s", bad.len());
    assert!(verdict(1, "rank tables on certified minimal frames", ok, detail), "{bad:?}");
}

#[test]
fn c02_psi_parameter_map() {
    let _serial = serial();
    let (mut exact, mut projective, mut total) = (0, 0, 0);
    let mut errors = Vec::new();
    for seed in 0..PSI_CONFIGS {
        let mut g = rng::seeded(1000 + seed);
        let ctx = random_psi_context(&mut g, &[2, 1, 1], 1).unwrap();
        let affine = match psi_matrix(&ctx, seed) {
            Ok(m) => m,
            Err(e) => {
                errors.push(format!("config {seed}: {e}"));
                total += PSI_HYPERPLANES;
                continue;
            }
        };
        let proj = psi_projective(&ctx).unwrap();
        let mut done = 0;
        while done < PSI_HYPERPLANES {
            let w = random_hyperplane(&mut g, 1);
            let Ok(psi) = hyperplane_map_psi(&ctx, &w) else { continue };
            done += 1;
            total += 1;
            exact += usize::from(affine.predict(&w).ok().as_ref() == Some(&psi));
            projective += usize::from(proj.predict(&w).ok().as_ref() == Some(&psi));
        }
    }
    let ok = exact == total && errors.is_empty();
    let detail = format!(
        "{exact}/{total} exact matches of y0 + Mη with (M^-T a)·η = b (projective form: {projective}/{total}); {} config errors",
        errors.len()
    );
    assert!(verdict(2, "psi parameter map", ok, detail), "{errors:?}");
}

/// Lifted 4x4 determinant of integer points, as a 3x3 determinant of
/// differences in i128.
fn coplanar4(p: &[[i64; 3]; 4]) -> bool {
    let d: Vec<[i128; 3]> = (1..4).map(|i| std::array::from_fn(|k| (p[i][k] - p[0][k]) as i128)).collect();
    let det = d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1]) - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
        + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0]);
    det == 0
}

fn config(pts: &[[i64; 3]]) -> PointConfig {
    PointConfig::new(3, pts.iter().map(|p| p.iter().map(|&x| int(x)).collect()).collect()).unwrap()
}

#[test]
fn c03_discrete_beck() {
    let _serial = serial();
    let t0 = Instant::now();
    let mut g = rng::seeded(3);
    let mut generic: Vec<[i64; 3]> = Vec::new();
    while generic.len() < BECK_POINTS {
        let v = rng::vector(&mut g, 3, 1_000_000, 1);
        let p: [i64; 3] = std::array::from_fn(|k| v[k].to_integer().try_into().unwrap());
        if !generic.contains(&p) {
            generic.push(p);
        }
    }
    // oracle: no four points coplanar, so every triple spans its own plane
    let mut coplanar_quads = 0;
    let idx: Vec<usize> = (0..BECK_POINTS).collect();
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            for c in b + 1..idx.len() {
                for d in c + 1..idx.len() {
                    coplanar_quads += usize::from(coplanar4(&[generic[a], generic[b], generic[c], generic[d]]));
                }
            }
        }
    }
    let generic_count = enumerate_spanned_flats(&config(&generic), 2, DEFAULT_BUDGET).unwrap().len();

    let mut flat_pts: Vec<[i64; 3]> = Vec::new();
    while flat_pts.len() < BECK_POINTS {
        let v = rng::vector(&mut g, 2, 50, 1);
        let (a, b): (i64, i64) = (v[0].to_integer().try_into().unwrap(), v[1].to_integer().try_into().unwrap());
        let p = [a, b, 2 * a - 3 * b + 5];
        if !flat_pts.contains(&p) {
            flat_pts.push(p);
        }
    }
    let coplanar_count = enumerate_spanned_flats(&config(&flat_pts), 2, DEFAULT_BUDGET).unwrap().len();

    let skew: Vec<[i64; 3]> = (0..15).map(|t| [t, 0, 0]).chain((0..15).map(|t| [0, t, 1])).collect();
    let rep = dichotomy_report(&config(&skew), BECK_EPS, DEFAULT_BUDGET).unwrap();
    let concentrated = rep.family.as_ref().is_some_and(|fs| {
        let covered = skew.iter().filter(|p| {
            let p: Vec<Scalar> = p.iter().map(|&x| int(x)).collect();
            fs.iter().any(|f| f.contains_point(&p))
        });
        fs.iter().map(AffineFlat::dim).sum::<usize>() <= 2 && covered.count() >= rep.needed
    }) && rep.hyperplanes.is_none();

    let secs = t0.elapsed().as_secs_f64();
    let ok = coplanar_quads == 0
        && generic_count == BECK_GENERIC_COUNT
        && coplanar_count == 1
        && concentrated
        && secs < BECK_SECONDS;
    let detail = format!(
        "generic |P^2| = {generic_count} (oracle {BECK_GENERIC_COUNT}, {coplanar_quads} coplanar quadruples), coplanar |P^2| = {coplanar_count}, skew lines concentrated = {concentrated}, {secs:.2}s"
    );
    assert!(verdict(3, "discrete Beck dichotomy", ok, detail));
}

#[test]
fn c04_decomposition() {
    let _serial = serial();
    let sc = scene("skew_lines_cloud.json");
    let (_, mu) = sc.measure(Some("mu")).unwrap();
    let w = rat(DECOMPOSE_W);
    let tau = rat(DECOMPOSE_TAU);
    let cfg = DecomposeConfig { w: w.clone(), theta: rat(DECOMPOSE_THETA), ..Default::default() };
    let r = decompose(mu, 3, &cfg).unwrap();
    let v = verify_decomposition(&r, 3, &w, &tau, &ModulusConfig::default()).unwrap();

    // independent checks of the trace and the supports
    let monotone = r.trace.windows(2).all(|s| s[1].cost > s[0].cost || (s[1].cost == s[0].cost && s[1].n_count < s[0].n_count));
    let mut seen = HashSet::new();
    let disjoint = r.pieces.iter().all(|p| {
        let mine: HashSet<&Vec<Scalar>> = p.atoms().iter().map(|a| &a.point).collect();
        let fresh = mine.iter().all(|x| !seen.contains(*x));
        seen.extend(mine);
        fresh
    });
    let cost = partition_cost(&r.flats).unwrap().cost;
    let moduli: Vec<String> = v.pieces.iter().map(|p| p.tau.as_ref().map_or("-".into(), |t| t.to_string())).collect();
    let moduli_ok = v.pieces.iter().all(|p| p.tau.as_ref().is_none_or(|t| t <= &tau));

    let ok = cost >= 3 && disjoint && moduli_ok && monotone && v.passed();
    let detail = format!(
        "{} pieces, final cost {cost}, moduli [{}] vs tau {tau}, trace costs {:?}, disjoint {disjoint}",
        r.pieces.len(),
        moduli.join(", "),
        r.trace.iter().map(|s| (s.cost, s.n_count)).collect::<Vec<_>>()
    );
    assert!(verdict(4, "decomposition on two skew lines plus cloud", ok, detail));
}

fn segments_scene(bits: u32) -> String {
    format!(
        r#"{{"ambient_dim": 2,
            "measures": {{
              "bottom": {{"segment": {{"from": ["0", "0"], "to": ["1", "0"], "bits": {bits}}}}},
              "top": {{"segment": {{"from": ["0", "1"], "to": ["1", "1"], "bits": {bits}}}}}
            }},
            "graphs": {{"G": {{"measures": ["bottom", "top"], "tuples": "full", "sigma": 1, "K": 8, "c": 1}}}}}}"#
    )
}

#[test]
fn c05_pushforward_frostman() {
    let _serial = serial();
    let t0 = Instant::now();
    let sc = parse_scene_str(&segments_scene(PUSH_BITS)).unwrap();
    let (_, g) = scene_graphs(&sc).pop().unwrap();
    let scales = dyadic_scales(PUSH_SCALES);
    let sigma = g.measures().iter().map(|m| frostman_fit(m, &scales).unwrap().s).fold(f64::INFINITY, f64::min);
    let fit = pushforward_frostman(&g, &scales).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let ok = (PUSH_S_PRIME.0..=PUSH_S_PRIME.1).contains(&fit.s) && (sigma - 1.0).abs() <= PUSH_SIGMA_TOL && secs < PUSH_SECONDS;
    let detail = format!(
        "sigma fit {sigma:.3}, s' = {:.3} in [{}, {}] ((k+1) sigma = {:.3}) over {} tuples, {secs:.1}s",
        fit.s,
        PUSH_S_PRIME.0,
        PUSH_S_PRIME.1,
        2.0 * sigma,
        fit.atoms
    );
    assert!(verdict(5, "pushforward Frostman exponent", ok, detail));
}

#[test]
fn c06_tubes_to_planes() {
    let _serial = serial();
    let sc = scene("parallel_segments.json");
    let (_, g) = scene_graphs(&sc).into_iter().find(|(n, _)| n == "G").unwrap();
    let scales = dyadic_scales(TUBES_SCALES);
    let eps = TUBES_EPS;
    let pre = g.clone().with_params(g.sigma, g.big_k, 1.0 - eps);
    let tubes = verify_thin_tubes(&pre, &scales).unwrap().passed && verify_thin_tubes(&pre.transposed().unwrap(), &scales).unwrap().passed;
    let (out, rep) = tubes_to_planes(&g, eps, &scales).unwrap();

    // the segments are at distance 1, so C = 1
    let c_sep = 1.0;
    let a = 10f64.powf(1.0 + g.sigma - eps) * c_sep / (eps * eps);
    let b = 1.0 + 2f64.powf(1.0 + g.sigma) * eps * series(eps);
    let constants = close(rep.c_sep, c_sep) && close(rep.a, a) && close(rep.b, b);
    let params = close(out.sigma, g.sigma - eps) && close(out.big_k, a * g.big_k) && close(out.c, 1.0 - b * eps);
    let planes = verify_thin_planes(&out, &scales, &ThinConfig::default()).unwrap();
    let loss = to_f64(&(g.density() - out.density()));
    let ok = tubes && constants && params && planes.passed && loss <= b * eps;
    let detail = format!(
        "tubes both orders {tubes}; A = {a:.3}, B = {b:.4} (match {constants}); output ({}, {:.1}) verifies {}; loss {loss:.4} <= B eps = {:.4}",
        out.sigma,
        out.big_k,
        planes.passed,
        b * eps
    );
    assert!(verdict(6, "tubes to planes conversion", ok, detail));
}

fn small_int(g: &mut rng::SeededRng, lo: i64, hi: i64) -> i64 {
    let span = (hi - lo) / 2;
    let x: i64 = rng::rational(g, span, 1).to_integer().try_into().unwrap();
    lo + span + x
}

/// Seeded graph in `Q^n` of arity `n`: uniform measures on 3 to 8 points at
/// resolution 2^-4, `K` in 2..=8 so the finest scale has `K δ < 1`. Family
/// `seed % 3`: generic points, every measure on one common hyperplane, or the
/// first measure on a line.
fn seeded_graph(seed: u64, n: usize) -> Option<ThinGraph> {
    let mut g = rng::seeded(seed);
    let hyper: Vec<Scalar> = rng::vector(&mut g, n - 1, 2, 1);
    let line = (rng::vector(&mut g, n, 4, 4), rng::vector(&mut g, n, 4, 4));
    let mus: Vec<DiscreteMeasure> = (0..n)
        .map(|j| {
            let count = small_int(&mut g, 3, 8) as usize;
            let mut pts: Vec<Vec<Scalar>> = Vec::new();
            for _ in 0..4 * count {
                if pts.len() == count {
                    break;
                }
                let mut p = rng::vector(&mut g, n, 4, 4);
                match seed % 3 {
                    1 => p[n - 1] = hyper.iter().zip(&p).map(|(a, x)| a * x).sum(),
                    2 if j == 0 => {
                        let t = rng::rational(&mut g, 4, 4);
                        p = line.0.iter().zip(&line.1).map(|(b, d)| b + &t * d).collect();
                    }
                    _ => {}
                }
                if !pts.contains(&p) {
                    pts.push(p);
                }
            }
            DiscreteMeasure::uniform(pts, dyadic(4)).unwrap()
        })
        .collect();
    let big_k = small_int(&mut g, 2, 8) as f64;
    let full = ThinGraph::full(mus, 1.0, big_k, 0.0).ok()?;
    let g = full.retain(|t| full.span(t).is_ok());
    (!g.is_empty()).then_some(g)
}

#[test]
fn c07_thin_implies_nc() {
    let _serial = serial();
    let mut graphs: Vec<(String, ThinGraph, Vec<Scalar>)> = Vec::new();
    for (file, sc) in corpus() {
        let scales = sc.params.scales().unwrap().map(dyadic_scales);
        for (name, g) in scene_graphs(&sc) {
            if g.arity() == g.ambient_dim() {
                let s = scales.clone().unwrap_or_else(|| dyadic_window(g.measures()));
                graphs.push((format!("{file}:{name}"), g, s));
            }
        }
    }
    let from_corpus = graphs.len();
    for seed in 0..NC_SEEDS {
        let n = 2 + (seed % 2) as usize;
        if let Some(g) = seeded_graph(seed, n) {
            let s = dyadic_window(g.measures());
            graphs.push((format!("seed {seed} in Q^{n}"), g, s));
        }
    }
    let (mut passing, mut non_nc) = (0, 0);
    let mut bad = Vec::new();
    for (name, g, scales) in &graphs {
        let nc = support_flats_nc(g).unwrap();
        non_nc += usize::from(!nc.nc);
        if verify_thin_planes(g, scales, &ThinConfig::default()).unwrap().passed {
            passing += 1;
            if !nc.nc {
                bad.push(format!("{name}: cost {}", nc.cost));
            }
        }
    }
    let ok = bad.is_empty() && passing > 0;
    let detail = format!(
        "{} graphs ({from_corpus} from scenes, {non_nc} with non-NC supports), {passing} thin, {} thin with non-NC supports",
        graphs.len(),
        bad.len()
    );
    assert!(verdict(7, "thin planes imply NC supports", ok, detail), "{bad:?}");
}

/// A rational `c` with `c² ≤ c2`, within a relative `1e-6` of `√c2`.
fn sqrt_floor(c2: &Scalar) -> Scalar {
    let mut c = Scalar::from_float(to_f64(c2).sqrt() * (1.0 - 1e-6)).unwrap();
    while &(&c * &c) > c2 {
        c *= q(999, 1000);
    }
    c
}

#[test]
fn c08_projection_preservation() {
    let _serial = serial();
    let mut nc_fail = Vec::new();
    let mut exceptional = 0;
    let mut modulus_fail = Vec::new();
    let mut worst = 0f64;
    let w = rat(PROJ_W);
    let mcfg = ModulusConfig::default();
    for seed in 0..PROJ_CENTRES {
        let mut g = rng::seeded(8000 + seed);
        // NC collections stay NC in a generic screen
        let (n, dims): (usize, &[usize]) = if seed % 2 == 0 { (3, &[1, 1, 1]) } else { (4, &[2, 1, 1]) };
        let flats = nc_collection(&mut g, n, dims);
        let screen = flats_where(&mut g, n, &[n - 1], |_| true).pop().unwrap();
        let x = loop {
            let x = rng::vector(&mut g, n, 40, 7);
            if !screen.contains_point(&x) {
                break x;
            }
        };
        let images: Result<Vec<AffineFlat>, _> = flats.iter().map(|v| project_flat(v, &x, &screen)).collect();
        let keeps_nc = images.as_ref().is_ok_and(|im| partition_cost(im).unwrap().cost + 1 >= n);
        if !keeps_nc {
            // exceptional only if the centre lies on a proper join of a subfamily
            let ids: Vec<usize> = (0..flats.len()).collect();
            let on_join = subsets(&ids).iter().filter(|s| !s.is_empty()).any(|s| {
                let fs: Vec<&AffineFlat> = s.iter().map(|&i| &flats[i]).collect();
                let j = join(&fs).unwrap();
                j.dim() < n && j.contains_point(&x)
            });
            if on_join {
                exceptional += 1;
            } else {
                nc_fail.push(seed);
            }
        }

        // join-meet image of an irreducible piece, trimmed near the centre
        let (v, mu, tau) = loop {
            let v = flats_where(&mut g, 3, &[2], |_| true).pop().unwrap();
            let mut pts: Vec<Vec<Scalar>> = Vec::new();
            while pts.len() < PROJ_ATOMS {
                let p = rng::point_on(&mut g, &v, 8, 8);
                if !pts.contains(&p) {
                    pts.push(p);
                }
            }
            let mu = DiscreteMeasure::uniform(pts, dyadic(10)).unwrap();
            let tau = irreducibility_modulus(&mu, &v, &w, &mcfg).unwrap().tau;
            if tau <= q(1, 2) {
                break (v, mu, tau);
            }
        };
        let (centre, u) = loop {
            let c = rng::vector(&mut g, 3, 40, 7);
            let u = flats_where(&mut g, 3, &[2], |_| true).pop().unwrap();
            if !u.contains_point(&c) && !v.contains_point(&c) && !v.is_subflat_of(&u) {
                break (c, u);
            }
        };
        let qflat = AffineFlat::point(centre.clone());
        let eps2 = &w * &w;
        let nu = mu.restrict(|_, a| a.point.iter().zip(&centre).map(|(p, c)| (p - c) * (p - c)).sum::<Scalar>() > eps2);
        let pv = project_flat(&v, &centre, &u).unwrap();
        let support: Vec<Vec<Scalar>> = nu.atoms().iter().map(|a| a.point.clone()).collect();
        let image = pushforward(&nu, 3, |y| join_meet(&qflat, &u, y));
        let c = contraction_floor_sq(&v, &centre, &u, &support).map(|c2| sqrt_floor(&c2));
        match (image, c) {
            (Ok(image), Ok(c)) if !image.is_empty() && pv.dim() >= 1 => {
                let after = irreducibility_modulus(&image, &pv, &(&c * &w), &mcfg).unwrap().tau;
                let limit = &tau * int(2);
                worst = worst.max(to_f64(&after) / to_f64(&limit));
                if after > limit {
                    modulus_fail.push(format!("seed {seed}: {after} > {limit}"));
                }
            }
            (image, c) => modulus_fail.push(format!("seed {seed}: image {:?} / c {:?}", image.err(), c.err())),
        }
    }
    let ok = nc_fail.is_empty() && modulus_fail.is_empty();
    let detail = format!(
        "{PROJ_CENTRES} centres: {} NC failures off exceptional sets ({exceptional} exceptional); {} modulus failures, worst image modulus / 2 tau = {worst:.3}",
        nc_fail.len(),
        modulus_fail.len()
    );
    assert!(verdict(8, "projection preserves NC and irreducibility", ok, detail), "{nc_fail:?} {modulus_fail:?}");
}

#[test]
fn c09_angle_bound() {
    let _serial = serial();
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut tightest = f64::INFINITY;
    for seed in 0..ANGLE_FRAMES {
        let (n, dims): (usize, &[usize]) = if seed % 2 == 0 { (4, &[2, 1, 1]) } else { (3, &[1, 1, 1]) };
        let (f, c2) = certified_minimal_frame(500 + seed, n, dims, 2);
        let bound = &c2 / angle_constant(n);
        let sizes: Vec<usize> = f.slots().iter().map(|&(j, i)| f.measures()[j][i].len()).collect();
        let total: usize = sizes.iter().product();
        for code in 0..total {
            let mut rest = code;
            let mut flat_pick: Vec<usize> = Vec::new();
            for s in &sizes {
                flat_pick.push(rest % s);
                rest /= s;
            }
            let mut it = flat_pick.into_iter();
            let pick = AtomPick(f.measures().iter().map(|ms| ms.iter().map(|_| it.next().unwrap()).collect()).collect());
            for j in 0..f.flats().len() {
                let fj = Matrix::from_cols(n + 1, f.basis(j).0).unwrap();
                let p_cols: Vec<Vec<Scalar>> = f
                    .slots()
                    .iter()
                    .filter(|(jj, _)| *jj != j)
                    .map(|&(jj, i)| lift(&f.measures()[jj][i].atoms()[pick.0[jj][i]].point))
                    .collect();
                let s = wedge_angle_sin2(&fj, &Matrix::from_cols(n + 1, &p_cols).unwrap()).unwrap();
                assert_eq!(s, complement_angle_sin2(&f, &pick, j).unwrap());
                checked += 1;
                tightest = tightest.min(to_f64(&s) / to_f64(&bound));
                if s < bound {
                    bad.push(format!("seed {seed} flat {j}: sin² {s} < {bound}"));
                }
            }
        }
    }
    let ok = bad.is_empty();
    let detail = format!("D(n) = {}; {checked} angles on {ANGLE_FRAMES} certified frames, min sin²/(c2/D) = {tightest:.3}", angle_constant(4));
    assert!(verdict(9, "angle bound on certified frames", ok, detail), "{bad:?}");
}

fn grid(bits: u32, dx: i64, dy: i64) -> DiscreteMeasure {
    let m = 1i64 << bits;
    let pts = (0..=m).flat_map(|i| (0..=m).map(move |j| vec![q(i, m) + int(dx), q(j, m) + int(dy)])).collect();
    DiscreteMeasure::uniform(pts, dyadic(bits)).unwrap()
}

#[test]
fn c10_negative_control() {
    let _serial = serial();
    let scales: Vec<Scalar> = (1..=NEG_BITS).map(dyadic).collect();
    let cfg = ThinConfig { max_tuples: 4096, seed: 10 };
    let mut runs = Vec::new();
    for (dx, dy) in [(2, 0), (1, 3)] {
        let g0 = ThinGraph::full(vec![grid(NEG_BITS, 0, 0), grid(NEG_BITS, dx, dy)], NEG_SIGMA, 1.0, 0.0).unwrap();
        for big_k in NEG_K {
            let g = g0.clone().with_params(NEG_SIGMA, big_k, 0.0);
            let r = verify_thin_planes(&g, &scales, &cfg).unwrap();
            let w = r.worst.unwrap();
            runs.push((big_k, r.passed, w.ratio, w.scale));
        }
    }
    let ok = runs.iter().all(|r| !r.1);
    let detail = runs.iter().map(|(k, _, ratio, s)| format!("K={k}: ratio {ratio:.2} at {s}")).collect::<Vec<_>>().join(", ");
    assert!(verdict(10, "sigma = 1.5 rejected for lines in Q^2", ok, detail));
}
