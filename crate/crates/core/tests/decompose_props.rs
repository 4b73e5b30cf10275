use proptest::prelude::*;

use flatbeck::decompose::{decompose, trace_violations, DecomposeConfig, DecomposeError};
use flatbeck::exactlin::{int, q, Scalar};
use flatbeck::flatcollect::partition_cost;
use flatbeck::measures::DiscreteMeasure;

fn points(n: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(-4i64..=4, n), 3..=14)
}

fn measure(pts: &[Vec<i64>]) -> DiscreteMeasure {
    let mut uniq: Vec<Vec<Scalar>> = Vec::new();
    for p in pts {
        let v: Vec<Scalar> = p.iter().map(|&x| int(x)).collect();
        if !uniq.contains(&v) {
            uniq.push(v);
        }
    }
    DiscreteMeasure::uniform(uniq, q(1, 64)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Either the run halts with cost ≥ n and a clean trace, or the input is
    /// reported as not discretely NC; it never hits the step limit.
    #[test]
    fn trace_invariants_and_termination(pts in points(3), theta in 1i64..=3, w in 0i64..=2) {
        let mu = measure(&pts);
        let cfg = DecomposeConfig { w: q(w, 10), theta: q(theta, 4), ..Default::default() };
        match decompose(&mu, 3, &cfg) {
            Ok(r) => {
                prop_assert!(trace_violations(&r.trace).is_empty(), "{:?}", r.trace);
                prop_assert!(partition_cost(&r.flats).unwrap().cost >= 3);
                prop_assert!(r.trace.len() <= cfg.max_steps);
                prop_assert_eq!(r.trace.last().unwrap().cost, partition_cost(&r.flats).unwrap().cost);
                for (a, b) in r.trace.iter().zip(r.trace.iter().skip(1)) {
                    prop_assert!(b.cost >= a.cost);
                    if b.cost == a.cost {
                        prop_assert!(b.n_count < a.n_count);
                    }
                }
            }
            Err(DecomposeError::NotDiscretelyNc(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
