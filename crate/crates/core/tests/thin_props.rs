use num_traits::Zero;
use proptest::prelude::*;

use flatbeck::exactlin::{dyadic, int, q, Scalar};
use flatbeck::measures::{Atom, DiscreteMeasure};
use flatbeck::thin::{
    dyadic_window, marginal_heavy_set, prune_planes, support_flats_nc, tubes_to_planes, verify_thin_planes, ThinConfig,
    ThinGraph,
};

/// Weighted grid on the horizontal segment at height `y`, `2^bits + 1` atoms.
fn weighted_segment(y: i64, bits: u32, weights: &[u32]) -> DiscreteMeasure {
    let m = 1i64 << bits;
    let atoms = (0..=m)
        .map(|i| Atom { point: vec![q(i, m), int(y)], weight: int(weights[i as usize % weights.len()] as i64 + 1) })
        .collect();
    DiscreteMeasure::new(2, atoms, dyadic(bits)).unwrap()
}

fn scales() -> Vec<Scalar> {
    (1..=4).map(dyadic).collect()
}

fn cfg() -> ThinConfig {
    ThinConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any subgraph of a passing graph passes at the same (σ, K) once its
    /// density claim is recomputed.
    #[test]
    fn subgraphs_of_thin_graphs_stay_thin(w0 in prop::collection::vec(0u32..3, 1..5), w1 in prop::collection::vec(0u32..3, 1..5), mask in any::<u64>()) {
        let g = ThinGraph::full(vec![weighted_segment(0, 4, &w0), weighted_segment(1, 4, &w1)], 1.0, 16.0, 1.0).unwrap();
        let full = verify_thin_planes(&g, &scales(), &cfg()).unwrap();
        prop_assume!(full.passed);
        let mut k = 0u32;
        let sub = g.retain(|_| { k += 1; mask.rotate_left(k) & 1 == 1 });
        prop_assume!(!sub.is_empty());
        let d = flatbeck::exactlin::to_f64(&sub.density());
        let sub = sub.with_params(g.sigma, g.big_k, d);
        prop_assert!(verify_thin_planes(&sub, &scales(), &cfg()).unwrap().passed);
    }

    /// Whenever the pruning fits its budget, the output verifies at the
    /// parameters it claims.
    #[test]
    fn pruned_graph_verifies(
        w0 in prop::collection::vec(0u32..6, 1..6),
        heavy in 0usize..33,
        mult in 0u32..48,
        k in 10u32..=30,
        eps in 2u32..=3,
    ) {
        let mut w1 = vec![0u32; 33];
        w1[heavy] += mult;
        let g = ThinGraph::full(vec![weighted_segment(0, 5, &w0), weighted_segment(1, 5, &w1)], 1.0, k as f64 / 100.0, 1.0).unwrap();
        let eps = eps as f64 / 4.0;
        let sc: Vec<Scalar> = (1..=5).map(dyadic).collect();
        if let Ok((out, rep)) = prune_planes(&g, eps, 1.0, &sc) {
            prop_assert!(flatbeck::exactlin::to_f64(&rep.removed_mass) <= eps);
            prop_assert_eq!(out.len() + rep.removed.len(), g.len());
            let r = verify_thin_planes(&out, &sc, &cfg()).unwrap();
            prop_assert!(r.passed, "{:?}", r.worst);
        }
    }

    #[test]
    fn tube_conversion_loss_within_bound(w0 in prop::collection::vec(0u32..4, 1..5), w1 in prop::collection::vec(0u32..4, 1..5), eps in 1u32..=3) {
        let g = ThinGraph::full(vec![weighted_segment(0, 3, &w0), weighted_segment(1, 3, &w1)], 1.0, 16.0, 1.0).unwrap();
        let eps = eps as f64 / 8.0;
        let Ok((out, rep)) = tubes_to_planes(&g, eps, &scales()) else { return Ok(()) };
        prop_assert!(rep.loss_ok, "removed {} > {}", rep.removed_mass, rep.loss_bound);
        prop_assert!(verify_thin_planes(&out, &scales(), &cfg()).unwrap().passed);
    }

    /// Σ_x μ_i(x) · |G|_x| equals the density, for every coordinate.
    #[test]
    fn marginal_fubini(w0 in prop::collection::vec(0u32..4, 1..4), w1 in prop::collection::vec(0u32..4, 1..4), mask in any::<u64>()) {
        let g = ThinGraph::full(vec![weighted_segment(0, 2, &w0), weighted_segment(1, 2, &w1)], 1.0, 1.0, 0.0).unwrap();
        let mut k = 0u32;
        let g = g.retain(|_| { k += 1; mask >> (k % 64) & 1 == 1 });
        for i in 0..2 {
            let r = marginal_heavy_set(&g, i, &Scalar::zero()).unwrap();
            prop_assert_eq!(&r.fubini, &r.density);
            prop_assert_eq!(r.atoms.len(), r.section_mass.len());
        }
    }

    /// A passing graph of arity n whose bound drops below 1 at some checked
    /// scale has NC support flats.
    #[test]
    fn thin_graphs_have_nc_supports(
        pts in prop::collection::vec(prop::collection::vec(prop::collection::vec(-4i64..=4, 2), 1..5), 2),
        big_k in 1u32..=8,
    ) {
        let mus: Vec<DiscreteMeasure> = pts.iter().map(|ps| {
            let mut u: Vec<Vec<Scalar>> = Vec::new();
            for p in ps {
                let v: Vec<Scalar> = p.iter().map(|&x| q(x, 4)).collect();
                if !u.contains(&v) { u.push(v); }
            }
            DiscreteMeasure::uniform(u, dyadic(4)).unwrap()
        }).collect();
        let g = ThinGraph::full(mus, 1.0, big_k as f64, 0.0).unwrap();
        let g = g.retain(|t| g.span(t).is_ok());
        prop_assume!(!g.is_empty());
        let sc = dyadic_window(g.measures());
        let margin = sc.iter().any(|d| g.big_k * flatbeck::exactlin::to_f64(d).powf(g.sigma) < 1.0);
        let r = verify_thin_planes(&g, &sc, &cfg()).unwrap();
        if r.passed && margin {
            prop_assert!(support_flats_nc(&g).unwrap().nc);
        }
    }
}

/// Squared distance from `x` to the line through `a` and `b`, by the 2-d
/// cross-product formula.
fn line_dist2(x: &[Scalar], a: &[Scalar], b: &[Scalar]) -> Scalar {
    let (dx, dy) = (&b[0] - &a[0], &b[1] - &a[1]);
    let cross = (&x[0] - &a[0]) * &dy - (&x[1] - &a[1]) * &dx;
    &cross * &cross / (&dx * &dx + &dy * &dy)
}

/// Planted heavy atom on the top segment: the removed tuples and their mass
/// agree with a brute-force count.
#[test]
fn planted_cluster_removal_matches_brute_force() {
    let mut w1 = vec![0u32; 33];
    w1[16] = 16;
    let g = ThinGraph::full(vec![weighted_segment(0, 5, &[0]), weighted_segment(1, 5, &w1)], 1.0, 0.15, 1.0).unwrap();
    let eps = 0.75;
    let sc: Vec<Scalar> = (1..=5).map(dyadic).collect();
    let (_, rep) = prune_planes(&g, eps, 1.0, &sc).unwrap();

    // C_1 = 2 (k+1) A^σ Σ_m 2^{-mε} / ε with A = 1, summed term by term
    let series: f64 = (1..400).map(|m| 2f64.powf(-(m as f64) * eps)).sum();
    let c1 = 2.0 * 2.0 * series / eps;
    let mus = g.measures();
    let totals: Vec<Scalar> = mus.iter().map(|m| m.total_mass().clone()).collect();
    let mut expected = Vec::new();
    let mut mass = Scalar::zero();
    for t in g.tuples() {
        let (a, b) = (&mus[0].atoms()[t[0]].point, &mus[1].atoms()[t[1]].point);
        let heavy = sc.iter().any(|d| {
            let bound = c1 * 0.15 * flatbeck::exactlin::to_f64(d).powf(1.0 - eps);
            (0..2).any(|j| {
                let m: Scalar = mus[j].atoms().iter().filter(|x| line_dist2(&x.point, a, b) <= d * d).map(|x| x.weight.clone()).sum();
                flatbeck::exactlin::to_f64(&(m / &totals[j])) > bound
            })
        });
        if heavy {
            mass += &mus[0].atoms()[t[0]].weight * &mus[1].atoms()[t[1]].weight / (&totals[0] * &totals[1]);
            expected.push(t.clone());
        }
    }
    assert!(!expected.is_empty());
    assert_eq!(rep.removed, expected);
    assert_eq!(rep.removed_mass, mass);
    assert!((rep.c1 - c1).abs() < 1e-9 * c1);
}
