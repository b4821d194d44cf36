//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 42
//! window_secs = 2
//! protocol = "tcp"            # omit to train TCP and UDP models
//! classifier = "rf"           # rf | svm | dt | knn | nb | auto
//! train_fraction = 0.7
//! folds = 5
//! sweep_points = 20
//! paper_literal = false
//! report_format = "both"      # text | csv | both
//!
//! [model]
//! n_trees = 25
//! max_depth = 12
//! c = 1.0
//! epochs = 50
//! k = 5
//!
//! [attribution]
//! tau_energy = 3.0
//! tau_memory = 3.0
//!
//! [paths]
//! out_dir = "out"
//! pcap = "capture.pcap"
//! telemetry = "telemetry.csv"
//! schedule = "schedule.csv"
//! model = "model.json"
//!
//! [scenario]                  # used by `generate`
//! devices = 5
//! duration_s = 600
//!
//! [[devices]]
//! id = "dev-0"
//! ip = "192.168.1.10"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use rcad::classifiers::{ForestParams, ModelSpec, SvmParams, TreeParams};
use rcad::features::ModelProtocol;
use rcad::pipeline::DeviceInfo;
use rcad::synthgen::{ScenarioConfig, WINDOW_CHOICES};
use rcad::telemetry::{AttributionConfig, Thresholds, DEFAULT_CONFIDENCE_CUTOFF, DEFAULT_MIN_BASELINE};
use rcad::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierChoice {
    Rf,
    Svm,
    Dt,
    Knn,
    Nb,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Both,
}

impl ReportFormat {
    pub fn text(self) -> bool {
        matches!(self, ReportFormat::Text | ReportFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: Option<usize>,
    pub c: f64,
    pub epochs: usize,
    pub k: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        let f = ForestParams::default();
        let s = SvmParams::default();
        ModelParams {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_leaf: f.min_leaf,
            feature_subsample: None,
            c: s.c,
            epochs: s.epochs,
            k: 5,
        }
    }
}

impl ModelParams {
    pub fn forest(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            feature_subsample: self.feature_subsample,
        }
    }

    pub fn spec(&self, choice: ClassifierChoice) -> Option<ModelSpec> {
        Some(match choice {
            ClassifierChoice::Rf => ModelSpec::RandomForest(self.forest()),
            ClassifierChoice::Svm => ModelSpec::LinearSvm(SvmParams {
                c: self.c,
                epochs: self.epochs,
            }),
            ClassifierChoice::Dt => ModelSpec::DecisionTree(TreeParams {
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                feature_subsample: None,
            }),
            ClassifierChoice::Knn => ModelSpec::Knn { k: self.k },
            ClassifierChoice::Nb => ModelSpec::GaussianNb,
            ClassifierChoice::Auto => return None,
        })
    }

    /// Specs to train for a classifier choice; `auto` expands to every kind.
    pub fn specs(&self, choice: ClassifierChoice) -> Vec<ModelSpec> {
        match self.spec(choice) {
            Some(s) => vec![s],
            None => [
                ClassifierChoice::Rf,
                ClassifierChoice::Svm,
                ClassifierChoice::Dt,
                ClassifierChoice::Knn,
                ClassifierChoice::Nb,
            ]
            .into_iter()
            .filter_map(|c| self.spec(c))
            .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSettings {
    pub tau_energy: f64,
    pub tau_memory: f64,
    pub confidence_cutoff: f64,
    pub min_baseline: usize,
    /// Train the pattern matcher alongside the detection models.
    pub pattern_model: bool,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        AttributionSettings {
            tau_energy: 3.0,
            tau_memory: 3.0,
            confidence_cutoff: DEFAULT_CONFIDENCE_CUTOFF,
            min_baseline: DEFAULT_MIN_BASELINE,
            pattern_model: false,
        }
    }
}

impl AttributionSettings {
    pub fn config(&self) -> AttributionConfig {
        AttributionConfig {
            thresholds: Thresholds {
                energy: self.tau_energy,
                memory: self.tau_memory,
            },
            confidence_cutoff: self.confidence_cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: Option<PathBuf>,
    pub pcap: Option<PathBuf>,
    pub packets_csv: Option<PathBuf>,
    pub telemetry: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.out_dir,
            &mut self.pcap,
            &mut self.packets_csv,
            &mut self.telemetry,
            &mut self.schedule,
            &mut self.model,
        ]
        .into_iter()
        .flatten()
        {
            if p.as_os_str() == "." {
                *p = base.to_path_buf();
            } else if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub window_secs: u64,
    /// Window origin in microseconds; defaults to the scenario start.
    pub window_origin_us: Option<u64>,
    pub protocol: Option<ModelProtocol>,
    pub classifier: ClassifierChoice,
    pub train_fraction: f64,
    pub folds: usize,
    pub sweep_points: usize,
    /// Forest sizes compared by `crossval`; empty skips the sweep.
    pub tree_counts: Vec<usize>,
    pub paper_literal: bool,
    pub report_format: ReportFormat,
    pub model: ModelParams,
    pub attribution: AttributionSettings,
    pub devices: Vec<DeviceInfo>,
    pub scenario: ScenarioConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            window_secs: 2,
            window_origin_us: None,
            protocol: None,
            classifier: ClassifierChoice::Rf,
            train_fraction: 0.7,
            folds: 5,
            sweep_points: 20,
            tree_counts: Vec::new(),
            paper_literal: false,
            report_format: ReportFormat::Both,
            model: ModelParams::default(),
            attribution: AttributionSettings::default(),
            devices: Vec::new(),
            scenario: ScenarioConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve_against(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copies the top-level seed and window into the scenario and checks ranges.
    pub fn finalize(&mut self) -> Result<()> {
        self.scenario.seed = self.seed;
        self.scenario.window_secs = self.window_secs;
        if !WINDOW_CHOICES.contains(&self.window_secs) {
            return Err(Error::Config(format!(
                "window_secs must be one of {WINDOW_CHOICES:?}, got {}",
                self.window_secs
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.sweep_points == 0 {
            return Err(Error::Config("sweep_points must be >= 1".into()));
        }
        Ok(())
    }

    pub fn window_us(&self) -> u64 {
        self.window_secs * 1_000_000
    }

    pub fn window_origin(&self) -> u64 {
        self.window_origin_us.unwrap_or(self.scenario.start_us)
    }

    pub fn device_list(&self) -> Vec<DeviceInfo> {
        if self.devices.is_empty() {
            self.scenario.device_list()
        } else {
            self.devices.clone()
        }
    }

    /// Model slots selected by `protocol`; both transport slots when unset.
    pub fn slots(&self) -> Vec<ModelProtocol> {
        match self.protocol {
            Some(p) => vec![p],
            None => vec![ModelProtocol::Tcp, ModelProtocol::Udp],
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.out_dir().join("model.json"))
    }

    /// SHA-256 over the TOML form of everything except file locations, so
    /// the same experiment hashes identically wherever it runs.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.paths = Paths::default();
        Ok(hex::encode(Sha256::digest(c.to_toml()?.as_bytes())))
    }

    /// `# config_hash=<hex> seed=<seed>`
    pub fn header(&self) -> Result<String> {
        Ok(format!("# config_hash={} seed={}", self.hash()?, self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.protocol = Some(ModelProtocol::Udp);
        c.classifier = ClassifierChoice::Auto;
        c.devices = c.scenario.device_list();
        c.paths.pcap = Some("capture.pcap".into());
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = RunConfig::from_toml("seed = 7\n[model]\nn_trees = 3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.n_trees, 3);
        assert_eq!(c.model.max_depth, 12);
        assert_eq!(c.window_secs, 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 7\n"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_paths_but_not_parameters() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = Some("/elsewhere".into());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 43;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn window_choice_checked() {
        let mut c = RunConfig {
            window_secs: 4,
            ..RunConfig::default()
        };
        assert!(c.finalize().is_err());
        c.window_secs = 5;
        c.finalize().unwrap();
        assert_eq!(c.scenario.window_secs, 5);
    }

    #[test]
    fn auto_expands_to_every_kind() {
        let names: Vec<&str> = ModelParams::default()
            .specs(ClassifierChoice::Auto)
            .iter()
            .map(|s| s.name())
            .collect();
        assert_eq!(names, vec!["RF", "SVM", "DT", "KNN", "NB"]);
    }
}
