use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{SI, TI};
use super::table::Dataset;
use crate::error::{Error, Result};

/// Content thresholds used for the source/target grouping.
pub const DEFAULT_CONTENT_THRESHOLD: f64 = 85.0;

/// Rows with `TI < ti_threshold && SI < si_threshold` go to the first group,
/// everything else to the second. Row order is preserved inside each group.
pub fn content_split(data: &Dataset, ti_threshold: f64, si_threshold: f64) -> Result<(Dataset, Dataset)> {
    let ti = data
        .schema()
        .index_of(TI)
        .ok_or_else(|| Error::Schema(format!("content split needs `{TI}`")))?;
    let si = data
        .schema()
        .index_of(SI)
        .ok_or_else(|| Error::Schema(format!("content split needs `{SI}`")))?;
    let (low, high): (Vec<usize>, Vec<usize>) = (0..data.len())
        .partition(|&i| data.rows()[i].values[ti] < ti_threshold && data.rows()[i].values[si] < si_threshold);
    let tag = format!("TI<{ti_threshold}&SI<{si_threshold}");
    Ok((
        data.subset(&low, format!("{}|content:{tag}:g0", data.provenance())),
        data.subset(&high, format!("{}|content:{tag}:g1", data.provenance())),
    ))
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

pub fn random_split(data: &Dataset, g0_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if g0_size == 0 || g0_size >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "g0_size {g0_size} must lie strictly between 0 and {}",
            data.len()
        )));
    }
    let idx = shuffled_indices(data.len(), seed);
    Ok((
        data.subset(&idx[..g0_size], format!("{}|random:{seed}:g0", data.provenance())),
        data.subset(&idx[g0_size..], format!("{}|random:{seed}:g1", data.provenance())),
    ))
}

/// Train size is `round(train_fraction * n)`, halves rounded up.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    (train_fraction * n as f64 + 0.5).floor() as usize
}

pub fn train_test_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = data.len();
    let k = train_size(n, train_fraction);
    if n < 2 || k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "fraction {train_fraction} of {n} rows leaves an empty train or test set"
        )));
    }
    let idx = shuffled_indices(n, seed);
    Ok((
        data.subset(&idx[..k], format!("{}|train:{seed}", data.provenance())),
        data.subset(&idx[k..], format!("{}|test:{seed}", data.provenance())),
    ))
}
