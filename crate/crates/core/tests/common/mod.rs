#![allow(dead_code)]

use itertools::Itertools;
use proptest::prelude::*;

use flatbeck::exactlin::{int, Matrix, Scalar};
use flatbeck::flats::AffineFlat;
use flatbeck::measures::DiscreteMeasure;
use flatbeck::rng;
use flatbeck::stability::{certify_stability, floor_at, AtomPick, StabilityConfig, StableFrame};
use num_traits::{One, Zero};

/// Leibniz expansion; independent of the Bareiss code under test.
pub fn leibniz(rows: &[Vec<Scalar>]) -> Scalar {
    let n = rows.len();
    let mut total = Scalar::zero();
    for perm in (0..n).permutations(n) {
        let mut inv = 0;
        for i in 0..n {
            for j in i + 1..n {
                if perm[i] > perm[j] {
                    inv += 1;
                }
            }
        }
        let mut term = Scalar::one();
        for (i, &p) in perm.iter().enumerate() {
            term *= &rows[i][p];
        }
        if inv % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

pub fn sub_rows(m: &[Vec<Scalar>], rs: &[usize], cs: &[usize]) -> Vec<Vec<Scalar>> {
    rs.iter().map(|&r| cs.iter().map(|&c| m[r][c].clone()).collect()).collect()
}

/// Rank as the largest order of a nonzero Leibniz minor.
pub fn rank_by_minors(m: &[Vec<Scalar>]) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    for r in (1..=rows.min(cols)).rev() {
        for rs in (0..rows).combinations(r) {
            for cs in (0..cols).combinations(r) {
                if !leibniz(&sub_rows(m, &rs, &cs)).is_zero() {
                    return r;
                }
            }
        }
    }
    0
}

pub fn to_scalars(v: &[Vec<i64>]) -> Vec<Vec<Scalar>> {
    v.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect()
}

pub fn matrix(v: &[Vec<i64>]) -> Matrix {
    Matrix::from_rows(to_scalars(v)).unwrap()
}

/// Small integer matrices; a narrow entry range makes singular cases common.
pub fn int_matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<i64>>> {
    (rows, cols).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-3i64..=3, c), r))
}

pub fn int_vec(n: usize, lo: i64, hi: i64) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(lo..=hi, n)
}

pub fn flat_from(base: &[i64], dirs: &[Vec<i64>]) -> AffineFlat {
    AffineFlat::new(base.iter().map(|&x| int(x)).collect(), to_scalars(dirs)).unwrap()
}

/// Seeded random frame: flats of the given dims in `Q^n` with `dim F_j`
/// slots each, every slot a uniform measure on `atoms` random points of the
/// flat. Not necessarily certified.
pub fn random_frame(seed: u64, n: usize, dims: &[usize], atoms: usize) -> StableFrame {
    let mut g = rng::seeded(seed);
    loop {
        let flats: Vec<AffineFlat> = dims.iter().map(|&d| rng::flat(&mut g, n, d, 6, 1)).collect();
        if flats.iter().zip(dims).any(|(f, &d)| f.dim() != d) {
            continue;
        }
        let measures: Vec<Vec<DiscreteMeasure>> = flats
            .iter()
            .map(|f| {
                (0..f.dim())
                    .map(|_| {
                        let pts: Vec<Vec<Scalar>> =
                            (0..atoms).map(|_| rng::point_on(&mut g, f, 8, 3)).unique().collect();
                        DiscreteMeasure::uniform(pts, flatbeck::exactlin::dyadic(10)).unwrap()
                    })
                    .collect()
            })
            .collect();
        return StableFrame::new(flats, measures).unwrap();
    }
}

/// Seeded frame that certifies at half the floor of its first atom choice;
/// returns the frame and the certified `c2`. Draws that do not certify
/// (rank jumps) are skipped.
pub fn certified_frame(seed: u64, n: usize, dims: &[usize], atoms: usize) -> (StableFrame, Scalar) {
    let cfg = StabilityConfig::default();
    for k in 0.. {
        let f = random_frame(seed.wrapping_mul(1_000_003).wrapping_add(k), n, dims, atoms);
        let pick = AtomPick(f.measures().iter().map(|ms| vec![0; ms.len()]).collect());
        let floor = floor_at(&f, &pick).unwrap();
        let c2 = floor / int(2);
        let small = flatbeck::stability::achieved_floor(&f, &cfg).unwrap();
        let Some(min) = small else { continue };
        let c2 = if min < c2 { min } else { c2 };
        if certify_stability(&f, &c2, &cfg).unwrap().certified {
            return (f, c2);
        }
    }
    unreachable!()
}
