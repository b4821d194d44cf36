//! Comparison classifiers: k-nearest neighbours and Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use crate::classifiers::{majority, Samples};
use crate::error::{Error, Result};

const NB_VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

pub fn train_knn(data: &Samples, k: usize) -> Result<Knn> {
    if data.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Parameter(format!("KNN k must be odd, got {k}")));
    }
    if k > data.len() {
        return Err(Error::Parameter(format!(
            "KNN k = {k} exceeds training size {}",
            data.len()
        )));
    }
    Ok(Knn {
        k,
        x: data.x.clone(),
        y: data.y.clone(),
        n_classes: data.n_classes,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl Knn {
    /// Indices of the k nearest training points; equal distances keep the
    /// lower sample index first.
    pub fn neighbours(&self, probe: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self.x.iter().enumerate().map(|(i, x)| (sq_dist(x, probe), i)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn votes(&self, probe: &[f64]) -> Vec<u64> {
        let mut v = vec![0u64; self.n_classes];
        for i in self.neighbours(probe) {
            v[self.y[i]] += 1;
        }
        v
    }

    pub fn predict(&self, probe: &[f64]) -> usize {
        majority(&self.votes(probe))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    /// `None` for classes absent from training data.
    pub log_prior: Vec<Option<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

pub fn train_naive_bayes(data: &Samples) -> Result<GaussianNb> {
    if data.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let d = data.n_features();
    let k = data.n_classes;
    let n = data.len() as f64;
    let mut log_prior = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for c in 0..k {
        let rows: Vec<&Vec<f64>> = data
            .x
            .iter()
            .zip(&data.y)
            .filter(|(_, &y)| y == c)
            .map(|(x, _)| x)
            .collect();
        if rows.is_empty() {
            log_prior.push(None);
            means.push(vec![0.0; d]);
            variances.push(vec![1.0; d]);
            continue;
        }
        let m = rows.len() as f64;
        let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
        let var: Vec<f64> = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / m;
                v.max(NB_VARIANCE_FLOOR)
            })
            .collect();
        log_prior.push(Some((m / n).ln()));
        means.push(mu);
        variances.push(var);
    }
    Ok(GaussianNb {
        log_prior,
        means,
        variances,
    })
}

impl GaussianNb {
    /// Log prior plus summed Gaussian log likelihoods, per class.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.log_prior
            .iter()
            .enumerate()
            .map(|(c, lp)| match lp {
                None => f64::NEG_INFINITY,
                Some(lp) => {
                    lp + x
                        .iter()
                        .zip(self.means[c].iter().zip(&self.variances[c]))
                        .map(|(v, (m, s2))| {
                            -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2)
                        })
                        .sum::<f64>()
                }
            })
            .collect()
    }

    /// Argmax of the log joint; ties go to the higher class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let lj = self.log_joint(x);
        let mut best = 0;
        for (c, v) in lj.iter().enumerate() {
            if *v >= lj[best] {
                best = c;
            }
        }
        best
    }

    /// Posterior probability of each class.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let max = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return vec![1.0 / lj.len() as f64; lj.len()];
        }
        let e: Vec<f64> = lj.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}
