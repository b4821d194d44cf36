//! CART-style decision tree over Gini impurity.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{majority, Samples};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; `None` uses every feature.
    pub feature_subsample: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_leaf: 1,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
        counts: Vec<u64>,
    },
}

/// Binary tree stored as an arena; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl DecisionTree {
    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Fraction of training samples in the reached leaf that belong to `class`.
    pub fn class_fraction(&self, x: &[f64], class: usize) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { counts, .. } => {
                let total: u64 = counts.iter().sum();
                if total == 0 {
                    0.0
                } else {
                    counts[class] as f64 / total as f64
                }
            }
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

fn gini(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Builder<'a, R: Rng> {
    data: &'a Samples,
    params: &'a TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.data.n_classes];
        for &i in idx {
            c[self.data.y[i]] += 1;
        }
        c
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_features();
        match self.params.feature_subsample {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let min_leaf = self.params.min_leaf.max(1);
        let n = idx.len();
        let k = self.data.n_classes;
        let total_counts = self.counts(idx);
        let mut best: Option<BestSplit> = None;
        for feature in self.candidate_features() {
            let mut order: Vec<usize> = idx.to_vec();
            order.sort_by(|&a, &b| {
                self.data.x[a][feature]
                    .total_cmp(&self.data.x[b][feature])
                    .then(a.cmp(&b))
            });
            let mut left = vec![0u64; k];
            for pos in 0..n - 1 {
                left[self.data.y[order[pos]]] += 1;
                let lo = self.data.x[order[pos]][feature];
                let hi = self.data.x[order[pos + 1]][feature];
                let n_left = pos + 1;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right: Vec<u64> = total_counts.iter().zip(&left).map(|(t, l)| t - l).collect();
                let impurity = (n_left as f64 * gini(&left, n_left as u64)
                    + (n - n_left) as f64 * gini(&right, (n - n_left) as u64))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if !(threshold >= lo && threshold < hi) {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
            counts: counts.clone(),
        });
        if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) {
            return slot;
        }
        let Some(split) = self.best_split(&idx) else {
            return slot;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.data.x[i][split.feature] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

/// Greedy top-down induction. Impure nodes split whenever a valid split
/// exists, even at zero impurity gain (XOR-like layouts need that).
pub fn train_decision_tree<R: Rng>(data: &Samples, params: &TreeParams, rng: &mut R) -> Result<DecisionTree> {
    if data.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut b = Builder {
        data,
        params,
        rng,
        nodes: Vec::new(),
    };
    b.build((0..data.len()).collect(), 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        n_classes: data.n_classes,
        n_features: data.n_features(),
    })
}
