//! K-fold partitioning and the tree-count sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ForestParams, ModelSpec};
use crate::error::{Error, Result};
use crate::features::ModelProtocol;
use crate::ingest::LabeledDataset;
use crate::metrics::{crossval_report, Metric};

/// Splits `0..n` into `k` disjoint folds whose sizes differ by at most one.
/// The permutation is drawn from `seed`; indices within a fold are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("k-fold needs 2 <= K <= N (K = {k}, N = {n})")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = perm[at..at + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        at += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCountSweep {
    pub chosen: usize,
    /// `(n_trees, mean fold accuracy)` in candidate order.
    pub means: Vec<(usize, Metric)>,
}

/// Cross-validates a forest for every candidate tree count and keeps the
/// one with the highest mean accuracy; ties keep the smallest count.
pub fn sweep_tree_count(
    data: &LabeledDataset,
    slot: ModelProtocol,
    k: usize,
    candidates: &[usize],
    base: &ForestParams,
    seed: u64,
) -> Result<TreeCountSweep> {
    if candidates.is_empty() {
        return Err(Error::Parameter("no tree-count candidates".into()));
    }
    let mut means = Vec::with_capacity(candidates.len());
    for &n_trees in candidates {
        let spec = ModelSpec::RandomForest(ForestParams {
            n_trees,
            ..base.clone()
        });
        let report = crossval_report(data, &spec, slot, k, seed)?;
        means.push((n_trees, report.mean_accuracy));
    }
    let mut best = 0;
    for (i, (n, m)) in means.iter().enumerate() {
        let (bn, bm) = &means[best];
        if m.value() > bm.value() || (m.value() == bm.value() && n < bn) {
            best = i;
        }
    }
    Ok(TreeCountSweep {
        chosen: means[best].0,
        means,
    })
}
