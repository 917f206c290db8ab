use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::EncodedDataset;
use crate::error::{Error, Result};

/// Train/validation/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fractions: (0.6, 0.2, 0.2),
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Shuffled index sets for the three splits.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    let (a, b, c) = spec.fractions;
    if (a + b + c - 1.0).abs() > 1e-9 || a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::InvalidInput(format!(
            "split fractions ({a}, {b}, {c}) must be nonnegative and sum to 1"
        )));
    }
    if n < 5 {
        return Err(Error::InvalidInput(format!("cannot split {n} rows")));
    }
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

pub fn split(
    ds: &EncodedDataset,
    spec: &SplitSpec,
) -> Result<(EncodedDataset, EncodedDataset, EncodedDataset)> {
    let [tr, va, te] = split_indices(ds.len(), spec)?;
    Ok((ds.subset(&tr), ds.subset(&va), ds.subset(&te)))
}

/// Reassigns exactly `floor(gamma * n)` uniformly chosen rows to a uniformly
/// chosen different group.
pub fn inject_noise(groups: &[usize], m: usize, gamma: f64, seed: u64) -> Result<Vec<usize>> {
    if m < 2 {
        return Err(Error::InvalidInput("noise injection needs m >= 2".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("noise level {gamma} outside [0, 1]")));
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= m) {
        return Err(Error::InvalidInput(format!("group id {g} >= {m}")));
    }
    let n = groups.len();
    let flips = flip_count(n, gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = groups.to_vec();
    for i in index::sample(&mut rng, n, flips).into_iter() {
        let r = rng.gen_range(0..m - 1);
        out[i] = if r >= groups[i] { r + 1 } else { r };
    }
    Ok(out)
}

/// `floor(gamma * n)`, robust to representation error such as `0.3 * 10`.
pub fn flip_count(n: usize, gamma: f64) -> usize {
    ((gamma * n as f64) + 1e-9).floor() as usize
}
