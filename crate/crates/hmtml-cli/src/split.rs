//! Seeded labeled/test splits with a fixed per-class label budget.

use anyhow::{bail, Result};
use hmtml::DomainData;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn subset(data: &DomainData, indices: &[usize]) -> Result<DomainData> {
    let d = data.dim();
    let mut samples = Array2::<f64>::zeros((indices.len(), d));
    let mut labels = Vec::with_capacity(indices.len());
    for (row, &i) in indices.iter().enumerate() {
        samples.row_mut(row).assign(&data.samples.row(i));
        labels.push(data.labels[i]);
    }
    Ok(DomainData::new(samples, labels, data.domain_id)?)
}

/// Draws `n_labeled` samples per class per domain (seeded, without
/// replacement); everything else becomes the test pool.
pub fn split_labeled(
    domains: &[DomainData],
    n_labeled: usize,
    seed: u64,
) -> Result<Vec<(DomainData, DomainData)>> {
    if n_labeled == 0 {
        bail!("label budget must be >= 1");
    }
    let mut out = Vec::with_capacity(domains.len());
    for data in domains {
        let c = data.num_classes();
        let n = data.num_samples();
        if n_labeled * c > n / 2 {
            bail!(
                "domain {}: label budget {}x{} classes exceeds half of {} samples",
                data.domain_id,
                n_labeled,
                c,
                n
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (data.domain_id as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F),
        );
        let mut labeled = Vec::with_capacity(n_labeled * c);
        let mut test = Vec::new();
        for class in 1..=c {
            let mut idx: Vec<usize> = (0..n).filter(|&i| data.labels[i] == class).collect();
            if idx.len() < n_labeled {
                bail!(
                    "domain {}: class {} has {} samples, fewer than budget {}",
                    data.domain_id,
                    class,
                    idx.len(),
                    n_labeled
                );
            }
            idx.shuffle(&mut rng);
            labeled.extend_from_slice(&idx[..n_labeled]);
            test.extend_from_slice(&idx[n_labeled..]);
        }
        labeled.sort_unstable();
        test.sort_unstable();
        out.push((subset(data, &labeled)?, subset(data, &test)?));
    }
    Ok(out)
}
