mod common;

use itertools::Itertools;
use num_traits::Zero;
use proptest::prelude::*;

use common::{int_matrix, leibniz, matrix, rank_by_minors, sub_rows, to_scalars};
use flatbeck::exactlin::{canonical_rref, det, gram_det, max_minor, has_normalized_minor_at_least, max_normalized_minor_sq, rank, Matrix, Scalar};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn det_matches_leibniz(n in 1usize..=5, seed in any::<u64>()) {
        let mut g = flatbeck::rng::seeded(seed);
        let rows: Vec<Vec<Scalar>> = (0..n).map(|_| flatbeck::rng::vector(&mut g, n, 4, 3)).collect();
        let m = Matrix::from_rows(rows.clone()).unwrap();
        prop_assert_eq!(det(&m).unwrap(), leibniz(&rows));
    }

    /// Largest column-normalised squared minor against a Leibniz scan over
    /// every row and column subset; rational entries with mixed scales keep
    /// the float prefilter honest.
    #[test]
    fn normalized_minor_matches_scan(rows in 1usize..=4, cols in 1usize..=5, seed in any::<u64>(), r in 0usize..=4) {
        let mut g = flatbeck::rng::seeded(seed);
        let v: Vec<Vec<Scalar>> = (0..rows).map(|_| flatbeck::rng::vector(&mut g, cols, 6, 1 + (seed % 97) as i64)).collect();
        let m = Matrix::from_rows(v.clone()).unwrap();
        let r = r.min(rows.min(cols));
        let norms: Vec<Scalar> = (0..cols).map(|j| v.iter().map(|row| &row[j] * &row[j]).sum()).collect();
        let mut want = if r == 0 { Scalar::from_integer(1.into()) } else { Scalar::zero() };
        for rs in (0..rows).combinations(r) {
            for cs in (0..cols).combinations(r).filter(|cs| cs.iter().all(|&j| !norms[j].is_zero())) {
                if r == 0 {
                    continue;
                }
                let d = leibniz(&sub_rows(&v, &rs, &cs));
                let val = &d * &d / cs.iter().map(|&j| norms[j].clone()).product::<Scalar>();
                if val > want {
                    want = val;
                }
            }
        }
        prop_assert_eq!(max_normalized_minor_sq(&m, r).unwrap(), want.clone());
        // thresholds hugging the maximum from both sides; zero minors never count
        let nudge = Scalar::new(1.into(), 1_000_000_000_000i64.into());
        let one = Scalar::from_integer(1.into());
        for c2 in [want.clone(), &want * (&one + &nudge), &want / Scalar::from_integer(3.into())] {
            let expect = c2 <= want && (r == 0 || !want.is_zero());
            prop_assert_eq!(has_normalized_minor_at_least(&m, r, &c2).unwrap(), expect, "c2 {}", c2);
        }
    }

    #[test]
    fn rank_matches_minors(v in int_matrix(1..=4, 1..=5)) {
        prop_assert_eq!(rank(&matrix(&v)), rank_by_minors(&to_scalars(&v)));
    }

    #[test]
    fn max_minor_positive_iff_rank(v in int_matrix(1..=4, 1..=4)) {
        let m = matrix(&v);
        let rk = rank(&m);
        for r in 0..=m.nrows().min(m.ncols()) {
            let mm = max_minor(&m, r).unwrap();
            prop_assert_eq!(mm > Scalar::zero(), rk >= r);
        }
    }

    #[test]
    fn gram_det_is_cauchy_binet(v in int_matrix(1..=6, 1..=3)) {
        let rows = to_scalars(&v);
        let (nr, nc) = (rows.len(), rows[0].len());
        let expected: Scalar = if nc > nr {
            Scalar::zero()
        } else {
            (0..nr).combinations(nc).map(|rs| {
                let d = leibniz(&sub_rows(&rows, &rs, &(0..nc).collect::<Vec<_>>()));
                &d * &d
            }).sum()
        };
        prop_assert_eq!(gram_det(&matrix(&v)), expected);
    }

    #[test]
    fn rref_idempotent_and_row_space_invariant(v in int_matrix(1..=4, 1..=5)) {
        let m = matrix(&v);
        let r = canonical_rref(&m);
        prop_assert_eq!(canonical_rref(&r), r.clone());
        // same row space: stacking adds no rank either way
        let stacked = Matrix::from_rows(m.rows_vec().into_iter().chain(r.rows_vec()).collect()).unwrap();
        prop_assert_eq!(rank(&stacked), rank(&m));
        prop_assert_eq!(rank(&r), rank(&m));
    }
}
