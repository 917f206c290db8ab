//! Fixture builders shared by the benchmarks.

use fairrobust::data::FeatureMatrix;
use fairrobust::lp::LinearProgram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Rows of Gaussian-ish features with labels and groups drawn independently.
pub struct Fixture {
    pub features: FeatureMatrix,
    pub labels: Vec<u8>,
    pub groups: Vec<usize>,
}

pub fn fixture(n: usize, dim: usize, m: usize, seed: u64) -> Fixture {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut r, dim)).collect();
    let mut labels: Vec<u8> = rows.iter().map(|x| u8::from(x[0] + 0.3 * r.gen_range(-1.0..1.0) > 0.0)).collect();
    // Every group gets at least one row of each label.
    let groups = (0..n).map(|i| if i < 2 * m { i / 2 } else { r.gen_range(0..m) }).collect();
    for (i, y) in labels.iter_mut().take(2 * m).enumerate() {
        *y = (i % 2) as u8;
    }
    Fixture {
        features: FeatureMatrix::dense(&rows).expect("rectangular rows"),
        labels,
        groups,
    }
}

/// A feasible bounded program `min c·x, Ax = b, 0 <= x <= 1`.
pub fn box_lp(rng: &mut impl Rng, vars: usize, rows: usize) -> LinearProgram {
    let x0: Vec<f64> = (0..vars).map(|_| rng.gen_range(0.0..1.0)).collect();
    let a: Vec<Vec<f64>> = (0..rows).map(|_| uniform_vec(rng, vars)).collect();
    let b = a.iter().map(|r| r.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
    LinearProgram::new(uniform_vec(rng, vars), a, b).with_upper_bounds(vec![1.0; vars])
}
