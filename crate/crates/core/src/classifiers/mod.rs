//! Detection models: linear decision rule, decision tree, random forest,
//! linear SVM, KNN and Gaussian naive Bayes, plus the persisted
//! [`TrainedModel`] wrapper, k-fold utilities and model selection.
//!
//! Classes are dense indices. For detection, `0 = NORMAL` and
//! `1 = ATTACKED`; every vote or argmax tie resolves to the higher index.

pub mod baseline;
pub mod forest;
pub mod svm;
pub mod tree;
pub mod validation;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_vector, ModelProtocol, StandardizationParams, WindowFeatures};
use crate::ingest::LabeledDataset;
use crate::metrics::{confusion, ConfusionMatrix, Metric};
use crate::traffic::Label;

pub use self::baseline::{train_knn, train_naive_bayes, GaussianNb, Knn};
pub use self::forest::{train_random_forest, ForestParams, RandomForest};
pub use self::svm::{train_svm, LinearSvm, SvmParams};
pub use self::tree::{train_decision_tree, DecisionTree, TreeParams};
pub use self::validation::{kfold_split, sweep_tree_count, TreeCountSweep};

/// Dense training matrix with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Samples {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<usize>, n_classes: usize) -> Self {
        debug_assert_eq!(x.len(), y.len());
        Samples { x, y, n_classes }
    }

    pub fn binary(x: Vec<Vec<f64>>, y: Vec<usize>) -> Self {
        Samples::new(x, y, 2)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Samples {
        Samples {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Argmax over counts; ties resolve to the higher index.
pub fn majority(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c >= counts[best] {
            best = i;
        }
    }
    best
}

/// `ATTACKED` iff `sum(w_i * x_i) + b > threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDecisionRule {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl LinearDecisionRule {
    /// The rule induced by a trained SVM hyperplane, thresholded at 0.
    pub fn from_svm(svm: &LinearSvm) -> Self {
        LinearDecisionRule {
            weights: svm.weights.clone(),
            bias: svm.bias,
            threshold: 0.0,
        }
    }
}

pub fn apply_linear_rule(rule: &LinearDecisionRule, x: &[f64]) -> Result<Label> {
    if rule.weights.len() != x.len() {
        return Err(Error::Shape {
            expected: rule.weights.len(),
            got: x.len(),
        });
    }
    let s: f64 = rule.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + rule.bias;
    Ok(if s > rule.threshold {
        Label::Attacked
    } else {
        Label::Normal
    })
}

/// Classifier family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(ForestParams),
    LinearSvm(SvmParams),
    DecisionTree(TreeParams),
    Knn { k: usize },
    GaussianNb,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::RandomForest(_) => "RF",
            ModelSpec::LinearSvm(_) => "SVM",
            ModelSpec::DecisionTree(_) => "DT",
            ModelSpec::Knn { .. } => "KNN",
            ModelSpec::GaussianNb => "NB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest(RandomForest),
    LinearSvm(LinearSvm),
    DecisionTree(DecisionTree),
    Knn(Knn),
    GaussianNb(GaussianNb),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::RandomForest(_) => "RF",
            ModelKind::LinearSvm(_) => "SVM",
            ModelKind::DecisionTree(_) => "DT",
            ModelKind::Knn(_) => "KNN",
            ModelKind::GaussianNb(_) => "NB",
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained classifier with the standardization it was fitted under.
///
/// Persisted as versioned JSON:
///
/// ```text
/// { "format_version": 1,
///   "protocol": "tcp" | "udp" | "general",
///   "class_names": ["NORMAL", "ATTACKED"],
///   "standardization": { "mean": [..], "std": [..], "constant": [..] },
///   "model": { "kind": "random_forest" | "linear_svm" | "decision_tree" | "knn" | "gaussian_nb", ... } }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub protocol: ModelProtocol,
    pub class_names: Vec<String>,
    pub standardization: StandardizationParams,
    pub model: ModelKind,
}

pub fn detection_class_names() -> Vec<String> {
    vec![Label::Normal.to_string(), Label::Attacked.to_string()]
}

/// Converts a labeled dataset to raw vectors for one protocol slot,
/// dropping windows the slot does not accept.
pub fn detection_samples(data: &LabeledDataset, slot: ModelProtocol) -> Samples {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (f, l) in data.features.iter().zip(&data.labels) {
        if slot.accepts(f.protocol) {
            x.push(feature_vector(f, slot));
            y.push(l.class_index());
        }
    }
    Samples::binary(x, y)
}

impl TrainedModel {
    /// Trains a detection model for `slot` on the windows it accepts.
    pub fn train(spec: &ModelSpec, data: &LabeledDataset, slot: ModelProtocol, seed: u64) -> Result<Self> {
        let samples = detection_samples(data, slot);
        Self::train_samples(spec, &samples, slot, detection_class_names(), seed)
    }

    /// Trains on raw (unstandardized) vectors.
    pub fn train_samples(
        spec: &ModelSpec,
        raw: &Samples,
        slot: ModelProtocol,
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyTraining);
        }
        if class_names.len() != raw.n_classes {
            return Err(Error::Parameter(format!(
                "{} class names for {} classes",
                class_names.len(),
                raw.n_classes
            )));
        }
        let standardization = if raw.len() >= 2 {
            StandardizationParams::learn(&raw.x)?
        } else {
            StandardizationParams::identity(raw.n_features())
        };
        let data = Samples::new(standardization.apply_all(&raw.x)?, raw.y.clone(), raw.n_classes);
        let model = match spec {
            ModelSpec::RandomForest(p) => ModelKind::RandomForest(train_random_forest(&data, p, seed)?),
            ModelSpec::LinearSvm(p) => ModelKind::LinearSvm(train_svm(&data, p, seed)?),
            ModelSpec::DecisionTree(p) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                ModelKind::DecisionTree(train_decision_tree(&data, p, &mut rng)?)
            }
            ModelSpec::Knn { k } => ModelKind::Knn(train_knn(&data, *k)?),
            ModelSpec::GaussianNb => ModelKind::GaussianNb(train_naive_bayes(&data)?),
        };
        Ok(TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            protocol: slot,
            class_names,
            standardization,
            model,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dimension(&self) -> usize {
        self.standardization.dimension()
    }

    fn standardized(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.standardization.apply(raw)
    }

    /// Predicted class index for a raw feature vector.
    pub fn predict_vector(&self, raw: &[f64]) -> Result<usize> {
        let x = self.standardized(raw)?;
        Ok(match &self.model {
            ModelKind::RandomForest(m) => m.predict(&x),
            ModelKind::LinearSvm(m) => m.predict(&x),
            ModelKind::DecisionTree(m) => m.predict(&x),
            ModelKind::Knn(m) => m.predict(&x),
            ModelKind::GaussianNb(m) => m.predict(&x),
        })
    }

    /// Support for `class`: vote fraction (forest, KNN), leaf purity (tree),
    /// posterior (NB), or signed margin toward class 1 (SVM).
    pub fn class_score(&self, raw: &[f64], class: usize) -> Result<f64> {
        let x = self.standardized(raw)?;
        Ok(match &self.model {
            ModelKind::RandomForest(m) => m.vote_fraction(&x, class),
            ModelKind::LinearSvm(m) => {
                let d = m.decision(&x);
                if class == 1 {
                    d
                } else {
                    -d
                }
            }
            ModelKind::DecisionTree(m) => m.class_fraction(&x, class),
            ModelKind::Knn(m) => m.votes(&x)[class] as f64 / m.k as f64,
            ModelKind::GaussianNb(m) => m.posterior(&x)[class],
        })
    }

    /// Real-valued attack score; larger means more likely ATTACKED.
    pub fn attack_score(&self, raw: &[f64]) -> Result<f64> {
        self.class_score(raw, Label::Attacked.class_index())
    }

    /// Predicted class and its confidence in `[0, 1]`. Hard-margin SVM
    /// predictions report confidence 1.
    pub fn predict_with_confidence(&self, raw: &[f64]) -> Result<(usize, f64)> {
        let class = self.predict_vector(raw)?;
        let conf = match &self.model {
            ModelKind::LinearSvm(_) => 1.0,
            _ => self.class_score(raw, class)?,
        };
        Ok((class, conf))
    }

    pub fn predict_window(&self, f: &WindowFeatures) -> Result<Label> {
        self.check_window(f)?;
        Ok(Label::from_class_index(
            self.predict_vector(&feature_vector(f, self.protocol))?,
        ))
    }

    pub fn window_score(&self, f: &WindowFeatures) -> Result<f64> {
        self.check_window(f)?;
        self.attack_score(&feature_vector(f, self.protocol))
    }

    fn check_window(&self, f: &WindowFeatures) -> Result<()> {
        if !self.protocol.accepts(f.protocol) {
            return Err(Error::Model(format!(
                "{} model cannot score a {} window",
                self.protocol.as_str(),
                f.protocol
            )));
        }
        Ok(())
    }

    /// Confusion matrix over the windows this model's slot accepts.
    pub fn evaluate(&self, data: &LabeledDataset) -> Result<ConfusionMatrix> {
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for (f, l) in data.features.iter().zip(&data.labels) {
            if self.protocol.accepts(f.protocol) {
                preds.push(self.predict_window(f)?);
                truths.push(*l);
            }
        }
        confusion(&preds, &truths)
    }

    /// The hyperplane of an SVM model as a linear decision rule over
    /// standardized features.
    pub fn linear_rule(&self) -> Option<LinearDecisionRule> {
        match &self.model {
            ModelKind::LinearSvm(m) => Some(LinearDecisionRule::from_svm(m)),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.standardization.std.len() != m.standardization.mean.len() {
            return Err(Error::Model("inconsistent standardization parameters".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Metric used to rank candidate models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Accuracy,
    Pod,
    F1,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(Criterion::Accuracy),
            "pod" | "p_d" => Ok(Criterion::Pod),
            "f1" => Ok(Criterion::F1),
            other => Err(Error::Parameter(format!("unknown criterion {other:?}"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Accuracy => "accuracy",
            Criterion::Pod => "pod",
            Criterion::F1 => "f1",
        })
    }
}

impl Criterion {
    pub fn measure(self, m: &ConfusionMatrix) -> Metric {
        match self {
            Criterion::Accuracy => m.accuracy(),
            Criterion::Pod => m.tpr(),
            Criterion::F1 => m.f1(),
        }
    }
}

/// Index of the candidate scoring highest on `validation`; ties keep the
/// earlier candidate and undefined metrics rank below every defined one.
pub fn select_best_model(
    candidates: &[TrainedModel],
    validation: &LabeledDataset,
    criterion: Criterion,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Parameter("no candidate models".into()));
    }
    if validation.is_empty() {
        return Err(Error::Parameter("empty validation set".into()));
    }
    let mut best: Option<(usize, Metric)> = None;
    for (i, m) in candidates.iter().enumerate() {
        let score = criterion.measure(&m.evaluate(validation)?);
        let better = match &best {
            None => true,
            Some((_, b)) => score.value().is_some() && (b.value().is_none() || score.value() > b.value()),
        };
        if better {
            best = Some((i, score));
        }
    }
    Ok(best.expect("at least one candidate").0)
}
