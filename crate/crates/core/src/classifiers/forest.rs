//! Bagged decision-tree ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::tree::{train_decision_tree, DecisionTree, TreeParams};
use crate::classifiers::{majority, Samples};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `round(sqrt(d))`.
    pub feature_subsample: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 25,
            max_depth: 12,
            min_leaf: 1,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub seed: u64,
    pub feature_subsample: usize,
    pub n_classes: usize,
}

/// RNG stream for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl RandomForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn votes(&self, x: &[f64]) -> Vec<u64> {
        let mut v = vec![0u64; self.n_classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }

    /// Majority vote; ties go to the higher class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        majority(&self.votes(x))
    }

    pub fn vote_fraction(&self, x: &[f64], class: usize) -> f64 {
        self.votes(x)[class] as f64 / self.trees.len() as f64
    }
}

/// Trains each tree on a bootstrap resample drawn from its own
/// `(seed, tree index)` stream, so the forest is independent of scheduling.
pub fn train_random_forest(data: &Samples, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    if params.n_trees == 0 {
        return Err(Error::Parameter("n_trees must be >= 1".into()));
    }
    if data.len() < 2 {
        return Err(Error::Parameter(format!(
            "random forest needs at least 2 samples, got {}",
            data.len()
        )));
    }
    let d = data.n_features();
    let m = params
        .feature_subsample
        .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1))
        .clamp(1, d.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        feature_subsample: Some(m),
    };
    let n = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(seed, i);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let boot = data.subset(&idx);
            train_decision_tree(&boot, &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        trees,
        seed,
        feature_subsample: m,
        n_classes: data.n_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_blobs(n: usize, seed: u64) -> Samples {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let mu = if c == 1 { 1.0 } else { -1.0 };
            x.push(vec![
                mu + noise.sample(&mut rng),
                noise.sample(&mut rng),
                mu + noise.sample(&mut rng),
            ]);
            y.push(c);
        }
        Samples::binary(x, y)
    }

    #[test]
    fn single_tree_forest_matches_its_tree() {
        let s = noisy_blobs(60, 3);
        let params = ForestParams {
            n_trees: 1,
            max_depth: 64,
            ..ForestParams::default()
        };
        let f = train_random_forest(&s, &params, 9).unwrap();
        for x in &noisy_blobs(40, 4).x {
            assert_eq!(f.predict(x), f.trees[0].predict(x));
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let s = noisy_blobs(80, 5);
        let a = train_random_forest(&s, &ForestParams::default(), 42).unwrap();
        let b = train_random_forest(&s, &ForestParams::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = train_random_forest(&s, &ForestParams::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vote_equals_brute_force_majority() {
        let s = noisy_blobs(100, 6);
        let f = train_random_forest(
            &s,
            &ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            },
            1,
        )
        .unwrap();
        for x in &noisy_blobs(50, 7).x {
            let attacked = f.trees.iter().filter(|t| t.predict(x) == 1).count();
            let normal = f.trees.len() - attacked;
            let expected = if attacked >= normal { 1 } else { 0 };
            assert_eq!(f.predict(x), expected);
        }
    }

    #[test]
    fn zero_trees_rejected() {
        let s = noisy_blobs(10, 1);
        let p = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(matches!(train_random_forest(&s, &p, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn uniform_labels_predict_that_label() {
        let mut s = noisy_blobs(30, 2);
        s.y.iter_mut().for_each(|y| *y = 0);
        let f = train_random_forest(&s, &ForestParams::default(), 5).unwrap();
        for x in &noisy_blobs(30, 8).x {
            assert_eq!(f.predict(x), 0);
        }
    }
}
