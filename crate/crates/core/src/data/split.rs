use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.7, 0.15, 0.15];

/// Largest-remainder apportionment of `n` items over `fractions`. Equal
/// remainders favour the earlier split.
pub fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn check_fractions(fractions: &[f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::Config(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Stratified train/val/test assignment. Each class is shuffled with its own
/// seeded stream and cut by [`apportion`]; existing tags are overwritten.
pub fn split_dataset(
    manifest: &DatasetManifest,
    fractions: [f64; 3],
    seed: u64,
) -> Result<DatasetManifest> {
    check_fractions(&fractions)?;
    let mut out = manifest.clone();
    for label in 0..=1u8 {
        let mut members: Vec<usize> = (0..out.samples.len())
            .filter(|&i| out.samples[i].label == label)
            .collect();
        if members.is_empty() {
            return Err(Error::Config(format!("no samples with label {label}")));
        }
        let counts = apportion(members.len(), &fractions);
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!(
                "class {label} has {} samples, too few to give the {} split at least one",
                members.len(),
                Split::ALL[i]
            )));
        }
        members.shuffle(&mut rng_from_seed(derive_seed(seed, &[u64::from(label)])));
        let mut start = 0;
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for &i in &members[start..start + count] {
                out.samples[i].split = Some(split);
            }
            start += count;
        }
    }
    Ok(out)
}
