//! Python bindings: corpus generation, model training and scoring,
//! metrics, pcap parsing, the attribution rule and the CLI entry point.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rcad::classifiers::{ForestParams, ModelSpec, SvmParams, TrainedModel, TreeParams};
use rcad::features::{feature_vector, ModelProtocol, FEATURE_NAMES};
use rcad::ingest::{clean_dataset, parse_pcap_file, LabeledDataset};
use rcad::metrics::{ConfusionMatrix, Metric};
use rcad::pipeline::train_test_split;
use rcad::synthgen::{build_corpus, write_corpus_files, ScenarioConfig, SyntheticCorpus};
use rcad::telemetry::{threshold_verdict as rule_verdict, Thresholds};
use rcad::traffic::{numeric_to_ip, Label};

create_exception!(rcad_py, RcadError, PyException);

fn err(e: rcad::Error) -> PyErr {
    let (code, kind) = rcad_cli::classify(&e);
    RcadError::new_err(format!("code={code} kind={kind}: {e}"))
}

fn protocol(name: &str) -> PyResult<ModelProtocol> {
    name.parse().map_err(err)
}

fn metric(m: Metric) -> Option<f64> {
    m.to_f64()
}

/// A generated corpus held in memory.
#[pyclass(module = "rcad_py")]
struct Corpus {
    inner: SyntheticCorpus,
}

impl Corpus {
    fn dataset(&self, indices: Option<Vec<usize>>) -> PyResult<LabeledDataset> {
        let data = self.inner.dataset().map_err(err)?;
        match indices {
            None => Ok(data),
            Some(idx) => {
                if let Some(bad) = idx.iter().find(|&&i| i >= data.len()) {
                    return Err(RcadError::new_err(format!("window index {bad} out of range")));
                }
                Ok(data.subset(&idx))
            }
        }
    }
}

#[pymethods]
impl Corpus {
    #[new]
    #[pyo3(signature = (seed=42, devices=5, duration_s=600, window_secs=2))]
    fn new(seed: u64, devices: usize, duration_s: u64, window_secs: u64) -> PyResult<Self> {
        let cfg = ScenarioConfig {
            seed,
            devices,
            duration_s,
            window_secs,
            ..ScenarioConfig::default()
        };
        Ok(Corpus {
            inner: build_corpus(&cfg).map_err(err)?,
        })
    }

    #[getter]
    fn n_packets(&self) -> usize {
        self.inner.packets.len()
    }

    #[getter]
    fn n_windows(&self) -> usize {
        self.inner.windows.len()
    }

    #[getter]
    fn n_telemetry(&self) -> usize {
        self.inner.telemetry.len()
    }

    /// Ground-truth window labels, `"NORMAL"` or `"ATTACKED"`.
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|l| l.to_string()).collect()
    }

    /// One dict per window: device, start, protocol and feature values.
    fn windows<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .windows
            .iter()
            .map(|f| {
                let d = PyDict::new(py);
                d.set_item("device_id", &f.window.device_id)?;
                d.set_item("start_us", f.window.start)?;
                d.set_item("protocol", f.protocol.as_str())?;
                for (name, v) in FEATURE_NAMES.iter().zip(f.to_vector()) {
                    d.set_item(*name, v)?;
                }
                Ok(d)
            })
            .collect()
    }

    /// `(protocol, feature, overlap)` for every signature feature.
    fn separation(&self) -> Vec<(String, String, f64)> {
        self.inner
            .separation
            .iter()
            .map(|s| (s.protocol.to_string(), s.feature.clone(), s.overlap))
            .collect()
    }

    /// Seeded `(train, test)` window indices.
    #[pyo3(signature = (train_fraction=0.7, seed=42))]
    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
        train_test_split(self.inner.windows.len(), train_fraction, seed).map_err(err)
    }

    /// Writes capture.pcap, packets.csv, telemetry.csv, schedule.csv and labels.csv.
    #[pyo3(signature = (directory, header=""))]
    fn write(&self, directory: PathBuf, header: &str) -> PyResult<Vec<PathBuf>> {
        let f = write_corpus_files(&directory, &self.inner, header).map_err(err)?;
        Ok(vec![
            f.pcap,
            f.packets_csv,
            f.telemetry_csv,
            f.schedule_csv,
            f.labels_csv,
        ])
    }
}

/// A trained detection model for one protocol slot.
#[pyclass(module = "rcad_py")]
struct Model {
    inner: TrainedModel,
}

fn spec(kind: &str, n_trees: usize, max_depth: usize, c: f64, epochs: usize, k: usize) -> PyResult<ModelSpec> {
    Ok(match kind.to_ascii_lowercase().as_str() {
        "rf" => ModelSpec::RandomForest(ForestParams {
            n_trees,
            max_depth,
            ..ForestParams::default()
        }),
        "svm" => ModelSpec::LinearSvm(SvmParams { c, epochs }),
        "dt" => ModelSpec::DecisionTree(TreeParams {
            max_depth,
            ..TreeParams::default()
        }),
        "knn" => ModelSpec::Knn { k },
        "nb" => ModelSpec::GaussianNb,
        other => return Err(RcadError::new_err(format!("unknown classifier {other:?}"))),
    })
}

#[pymethods]
impl Model {
    /// Trains on the corpus windows at `indices` (all windows when omitted).
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (corpus, kind="rf", protocol="tcp", seed=42, indices=None, n_trees=25, max_depth=12, c=1.0, epochs=50, k=5))]
    fn train(
        corpus: &Corpus,
        kind: &str,
        protocol: &str,
        seed: u64,
        indices: Option<Vec<usize>>,
        n_trees: usize,
        max_depth: usize,
        c: f64,
        epochs: usize,
        k: usize,
    ) -> PyResult<Self> {
        let s = spec(kind, n_trees, max_depth, c, epochs, k)?;
        let data = corpus.dataset(indices)?;
        let inner = TrainedModel::train(&s, &data, self::protocol(protocol)?, seed).map_err(err)?;
        Ok(Model { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.model.name()
    }

    #[getter]
    fn protocol(&self) -> &'static str {
        self.inner.protocol.as_str()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn predict_vector(&self, x: Vec<f64>) -> PyResult<String> {
        let c = self.inner.predict_vector(&x).map_err(err)?;
        Ok(self.inner.class_names[c].clone())
    }

    fn score_vector(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.attack_score(&x).map_err(err)
    }

    /// `(window index, verdict, score)` for accepted windows at `indices`.
    #[pyo3(signature = (corpus, indices=None))]
    fn predict(&self, corpus: &Corpus, indices: Option<Vec<usize>>) -> PyResult<Vec<(usize, String, f64)>> {
        let all: Vec<usize> = (0..corpus.inner.windows.len()).collect();
        let mut out = Vec::new();
        for i in indices.unwrap_or(all) {
            let f = corpus
                .inner
                .windows
                .get(i)
                .ok_or_else(|| RcadError::new_err(format!("window index {i} out of range")))?;
            if self.inner.protocol.accepts(f.protocol) {
                let v = feature_vector(f, self.inner.protocol);
                let label = Label::from_class_index(self.inner.predict_vector(&v).map_err(err)?);
                out.push((i, label.to_string(), self.inner.attack_score(&v).map_err(err)?));
            }
        }
        Ok(out)
    }

    /// Confusion counts and rates over accepted windows at `indices`.
    #[pyo3(signature = (corpus, indices=None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        corpus: &Corpus,
        indices: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner.evaluate(&corpus.dataset(indices)?).map_err(err)?;
        metrics_dict(py, &m)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model {
            inner: TrainedModel::from_json(text).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: TrainedModel::load(&path).map_err(err)?,
        })
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &ConfusionMatrix) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tp", m.tp)?;
    d.set_item("tn", m.tn)?;
    d.set_item("fp", m.fp)?;
    d.set_item("fn", m.fn_)?;
    for (name, v) in [
        ("accuracy", m.accuracy()),
        ("tpr", m.tpr()),
        ("fpr", m.fpr()),
        ("fdr", m.fdr()),
        ("precision", m.precision()),
        ("recall", m.recall()),
        ("f1", m.f1()),
        ("p_d", m.p_d()),
        ("p_fa", m.p_fa()),
        ("p_md", m.p_md()),
    ] {
        d.set_item(name, metric(v))?;
    }
    Ok(d)
}

/// Every rate derived from a confusion matrix; undefined rates are `None`.
#[pyfunction]
#[pyo3(name = "metrics")]
fn confusion_metrics<'py>(py: Python<'py>, tp: u64, tn: u64, fp: u64, fn_: u64) -> PyResult<Bound<'py, PyDict>> {
    metrics_dict(py, &ConfusionMatrix::new(tp, tn, fp, fn_))
}

/// Threshold attribution verdict for a pair of z-scores.
#[pyfunction]
#[pyo3(signature = (energy_z, memory_z, tau_energy=3.0, tau_memory=3.0))]
fn threshold_verdict(energy_z: f64, memory_z: f64, tau_energy: f64, tau_memory: f64) -> String {
    let t = Thresholds {
        energy: tau_energy,
        memory: tau_memory,
    };
    rule_verdict(energy_z, memory_z, &t).to_string()
}

/// Cleaned packets of a pcap file as
/// `(timestamp_us, src_ip, dst_ip, src_port, dst_port, protocol, length, ip_id, tcp_seq)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_pcap(path: PathBuf) -> PyResult<Vec<(u64, String, String, u16, u16, String, u32, u16, Option<u32>)>> {
    let raw = clean_dataset(parse_pcap_file(&path).map_err(err)?);
    Ok(raw
        .rows
        .iter()
        .map(|p| {
            (
                p.timestamp,
                numeric_to_ip(p.src_ip),
                numeric_to_ip(p.dst_ip),
                p.src_port,
                p.dst_port,
                p.protocol.to_string(),
                p.length,
                p.ip_id,
                p.tcp_seq,
            )
        })
        .collect())
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    FEATURE_NAMES.to_vec()
}

/// Runs the `rcad` command line with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let mut argv = vec!["rcad".to_string()];
    argv.extend(args);
    py.detach(|| rcad_cli::run(argv))
}

#[pymodule]
fn rcad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RcadError", m.py().get_type::<RcadError>())?;
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(confusion_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(read_pcap, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
