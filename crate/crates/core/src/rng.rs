//! Seeded randomness. Every random choice in the crate goes through a
//! `ChaCha8Rng` built here so runs are reproducible from a single `u64`.

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exactlin::{add, scale, Scalar};
use crate::flats::AffineFlat;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform rational `k / den` with `|k| <= bound`.
pub fn rational(rng: &mut SeededRng, bound: i64, den: i64) -> Scalar {
    Scalar::new(BigInt::from(rng.gen_range(-bound..=bound)), BigInt::from(den))
}

pub fn vector(rng: &mut SeededRng, n: usize, bound: i64, den: i64) -> Vec<Scalar> {
    (0..n).map(|_| rational(rng, bound, den)).collect()
}

/// Random point of a flat: basepoint plus a random combination of directions.
pub fn point_on(rng: &mut SeededRng, f: &AffineFlat, bound: i64, den: i64) -> Vec<Scalar> {
    f.directions().iter().fold(f.basepoint().to_vec(), |acc, d| {
        add(&acc, &scale(d, &rational(rng, bound, den)))
    })
}

/// Random flat of the given dimension (directions may, rarely, be dependent;
/// callers that care check `dim()`).
pub fn flat(rng: &mut SeededRng, n: usize, dim: usize, bound: i64, den: i64) -> AffineFlat {
    let p = vector(rng, n, bound, den);
    let dirs = (0..dim).map(|_| vector(rng, n, bound, den)).collect();
    AffineFlat::new(p, dirs).expect("shapes agree")
}

/// Index tuples `t` with `t[i] < sizes[i]`: every tuple in odometer order when
/// there are at most `max` of them, otherwise `max` seeded draws. The flag
/// says whether the enumeration was exhaustive.
pub fn tuple_plan(sizes: &[usize], max: usize, seed: u64) -> (Vec<Vec<usize>>, bool) {
    if sizes.contains(&0) {
        return (vec![], true);
    }
    let total = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
    match total {
        Some(t) if t <= max => {
            let mut out = Vec::with_capacity(t);
            let mut cur = vec![0usize; sizes.len()];
            for _ in 0..t {
                out.push(cur.clone());
                for (c, &s) in cur.iter_mut().zip(sizes).rev() {
                    *c += 1;
                    if *c < s {
                        break;
                    }
                    *c = 0;
                }
            }
            (out, true)
        }
        _ => (sample_tuples(sizes, max, seed), false),
    }
}

/// `count` seeded uniform draws of index tuples.
pub fn sample_tuples(sizes: &[usize], count: usize, seed: u64) -> Vec<Vec<usize>> {
    if sizes.contains(&0) {
        return vec![];
    }
    let mut rng = seeded(seed);
    (0..count).map(|_| sizes.iter().map(|&s| rng.gen_range(0..s)).collect()).collect()
}
