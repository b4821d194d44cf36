//! Detection metrics computed exactly from confusion counts.
//!
//! Ratios are kept as reduced fractions of integer counts; a metric whose
//! denominator is zero is [`Metric::UNDEFINED`], never zero. Decimal
//! rendering (4 places, round-half-even) only happens at report time.

pub mod report;

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::classifiers::{kfold_split, ModelSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::features::ModelProtocol;
use crate::ingest::LabeledDataset;
use crate::traffic::Label;

/// An exact ratio in `[0, 1]`, or undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Metric(Option<Ratio<u64>>);

impl Metric {
    pub const UNDEFINED: Metric = Metric(None);

    pub fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric(None)
        } else {
            Metric(Some(Ratio::new(num, den)))
        }
    }

    pub fn from_ratio(r: Ratio<u64>) -> Metric {
        Metric(Some(r))
    }

    pub fn value(&self) -> Option<Ratio<u64>> {
        self.0
    }

    pub fn is_defined(&self) -> bool {
        self.0.is_some()
    }

    pub fn to_f64(&self) -> Option<f64> {
        self.0.map(|r| *r.numer() as f64 / *r.denom() as f64)
    }

    /// Decimal string with `places` digits, rounded half to even, or
    /// `UNDEFINED`.
    pub fn format(&self, places: u32) -> String {
        match self.0 {
            None => "UNDEFINED".to_string(),
            Some(r) => format_ratio(*r.numer() as u128, *r.denom() as u128, places),
        }
    }

    /// Like [`Metric::format`] but scaled to percent.
    pub fn format_percent(&self, places: u32) -> String {
        match self.0 {
            None => "UNDEFINED".to_string(),
            Some(r) => format_ratio(*r.numer() as u128 * 100, *r.denom() as u128, places),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format(4))
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            None => s.serialize_none(),
            Some(r) => s.serialize_some(&[*r.numer(), *r.denom()]),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Option<[u64; 2]> = Option::deserialize(d)?;
        Ok(match v {
            None => Metric::UNDEFINED,
            Some([n, den]) => Metric::ratio(n, den),
        })
    }
}

fn format_ratio(num: u128, den: u128, places: u32) -> String {
    let scale = 10u128.pow(places);
    let scaled = num * scale;
    let mut q = scaled / den;
    let rem = scaled % den;
    match (2 * rem).cmp(&den) {
        std::cmp::Ordering::Greater => q += 1,
        std::cmp::Ordering::Equal if q % 2 == 1 => q += 1,
        _ => {}
    }
    if places == 0 {
        return q.to_string();
    }
    format!("{}.{:0width$}", q / scale, q % scale, width = places as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `(TP + TN) / N`
    pub fn accuracy(&self) -> Metric {
        Metric::ratio(self.tp + self.tn, self.n())
    }

    /// `FP / (FP + TN)`
    pub fn fpr(&self) -> Metric {
        Metric::ratio(self.fp, self.fp + self.tn)
    }

    /// `TP / (TP + FN)`
    pub fn tpr(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_)
    }

    /// `(FP + FN) / N`, equal to `1 - ACC`.
    pub fn fdr(&self) -> Metric {
        Metric::ratio(self.fp + self.fn_, self.n())
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Metric {
        self.tpr()
    }

    /// Harmonic mean of precision and recall.
    pub fn f1(&self) -> Metric {
        match (self.precision().0, self.recall().0) {
            (Some(p), Some(r)) => {
                let sum = p + r;
                if *sum.numer() == 0 {
                    Metric::UNDEFINED
                } else {
                    Metric::from_ratio(Ratio::from_integer(2) * p * r / sum)
                }
            }
            _ => Metric::UNDEFINED,
        }
    }

    pub fn p_d(&self) -> Metric {
        self.tpr()
    }

    /// Probability of false alarm, `FP / (FP + TN)`.
    pub fn p_fa(&self) -> Metric {
        self.fpr()
    }

    /// Probability of misdetection, `FN / (TP + FN)`.
    pub fn p_md(&self) -> Metric {
        Metric::ratio(self.fn_, self.tp + self.fn_)
    }

    /// False-alarm probability with the alternative `FP / (TN + FN)`
    /// denominator (the undefined `T_F` symbol read as TN).
    pub fn p_fa_literal(&self) -> Metric {
        Metric::ratio(self.fp, self.tn + self.fn_)
    }

    /// Misdetection probability with the alternative `FN / (TN + FP)` denominator.
    pub fn p_md_literal(&self) -> Metric {
        Metric::ratio(self.fn_, self.tn + self.fp)
    }
}

pub fn confusion(predictions: &[Label], truths: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape {
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in predictions.iter().zip(truths) {
        match (p, t) {
            (Label::Attacked, Label::Attacked) => m.tp += 1,
            (Label::Normal, Label::Normal) => m.tn += 1,
            (Label::Attacked, Label::Normal) => m.fp += 1,
            (Label::Normal, Label::Attacked) => m.fn_ += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreMetrics {
    pub acc: Metric,
    pub fpr: Metric,
    pub tpr: Metric,
    pub fdr: Metric,
}

pub fn core_metrics(m: &ConfusionMatrix) -> CoreMetrics {
    CoreMetrics {
        acc: m.accuracy(),
        fpr: m.fpr(),
        tpr: m.tpr(),
        fdr: m.fdr(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbabilityMetrics {
    pub p_d: Metric,
    pub p_fa: Metric,
    pub p_md: Metric,
    pub acc: Metric,
}

pub fn probability_metrics(m: &ConfusionMatrix) -> ProbabilityMetrics {
    ProbabilityMetrics {
        p_d: m.p_d(),
        p_fa: m.p_fa(),
        p_md: m.p_md(),
        acc: m.accuracy(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

pub fn prf1(m: &ConfusionMatrix) -> Prf1 {
    Prf1 {
        precision: m.precision(),
        recall: m.recall(),
        f1: m.f1(),
    }
}

/// False positives per second of monitored time.
pub fn fp_rate_per_second(m: &ConfusionMatrix, duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Parameter(format!(
            "duration must be > 0 seconds, got {duration_s}"
        )));
    }
    Ok(m.fp as f64 / duration_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub fpr: Metric,
    pub detection_rate: Metric,
}

/// For each threshold `t`, predicts ATTACKED iff `score > t` and reports
/// `(fpr, detection rate)`.
pub fn threshold_sweep(scores: &[f64], truths: &[Label], thresholds: &[f64]) -> Result<Vec<SweepPoint>> {
    if thresholds.is_empty() {
        return Err(Error::Parameter("no thresholds to sweep".into()));
    }
    if scores.len() != truths.len() {
        return Err(Error::Shape {
            expected: truths.len(),
            got: scores.len(),
        });
    }
    if scores.iter().chain(thresholds).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("scores and thresholds must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("thresholds must be sorted ascending".into()));
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let mut m = ConfusionMatrix::default();
            for (&s, &truth) in scores.iter().zip(truths) {
                match (s > t, truth) {
                    (true, Label::Attacked) => m.tp += 1,
                    (false, Label::Normal) => m.tn += 1,
                    (true, Label::Normal) => m.fp += 1,
                    (false, Label::Attacked) => m.fn_ += 1,
                }
            }
            SweepPoint {
                threshold: t,
                fpr: m.fpr(),
                detection_rate: m.tpr(),
            }
        })
        .collect())
}

/// `count` evenly spaced thresholds spanning just below the minimum score to
/// the maximum score.
pub fn sweep_thresholds(scores: &[f64], count: usize) -> Vec<f64> {
    if scores.is_empty() || count == 0 {
        return Vec::new();
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = lo - 1e-9 * (1.0 + lo.abs());
    if count == 1 || hi <= start {
        return vec![start];
    }
    let step = (hi - start) / (count - 1) as f64;
    let mut t: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
    t[count - 1] = hi;
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub k: usize,
    pub seed: u64,
    pub fold_accuracies: Vec<Metric>,
    pub fold_confusions: Vec<ConfusionMatrix>,
    pub mean_accuracy: Metric,
}

impl CrossValReport {
    /// Max minus min fold accuracy.
    pub fn spread(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.fold_accuracies.iter().map(|m| m.to_f64()).collect();
        let v = v?;
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        Some(hi - lo)
    }
}

/// Trains on K-1 folds and scores the held-out fold, K times, over the
/// windows accepted by `slot`.
pub fn crossval_report(
    data: &LabeledDataset,
    spec: &ModelSpec,
    slot: ModelProtocol,
    k: usize,
    seed: u64,
) -> Result<CrossValReport> {
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| slot.accepts(data.features[i].protocol))
        .collect();
    let data = data.subset(&idx);
    let folds = kfold_split(data.len(), k, seed)?;
    let mut fold_accuracies = Vec::with_capacity(k);
    let mut fold_confusions = Vec::with_capacity(k);
    let mut sum = Ratio::from_integer(0u64);
    for (f, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let model = TrainedModel::train(spec, &data.subset(&train_idx), slot, seed)?;
        let cm = model.evaluate(&data.subset(test_idx))?;
        let acc = cm.accuracy();
        sum += acc.value().expect("non-empty fold");
        fold_accuracies.push(acc);
        fold_confusions.push(cm);
    }
    Ok(CrossValReport {
        k,
        seed,
        fold_accuracies,
        fold_confusions,
        mean_accuracy: Metric::from_ratio(sum / Ratio::from_integer(k as u64)),
    })
}

/// Every metric derived from one confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub acc: Metric,
    pub tpr: Metric,
    pub fpr: Metric,
    pub fdr: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub p_d: Metric,
    pub p_fa: Metric,
    pub p_md: Metric,
    pub fp_per_second: Option<f64>,
    pub fold_accuracies: Option<Vec<Metric>>,
    pub sweep: Option<Vec<SweepPoint>>,
}

impl EvalReport {
    pub fn from_confusion(m: &ConfusionMatrix, duration_s: Option<f64>) -> Result<Self> {
        Ok(EvalReport {
            confusion: *m,
            acc: m.accuracy(),
            tpr: m.tpr(),
            fpr: m.fpr(),
            fdr: m.fdr(),
            precision: m.precision(),
            recall: m.recall(),
            f1: m.f1(),
            p_d: m.p_d(),
            p_fa: m.p_fa(),
            p_md: m.p_md(),
            fp_per_second: duration_s.map(|d| fp_rate_per_second(m, d)).transpose()?,
            fold_accuracies: None,
            sweep: None,
        })
    }
}
