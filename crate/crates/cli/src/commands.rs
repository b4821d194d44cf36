//! The seven pipeline commands and the model bundle they share.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rcad::classifiers::{select_best_model, sweep_tree_count, Criterion, ModelSpec, TrainedModel};
use rcad::features::{ModelProtocol, WindowFeatures};
use rcad::ingest::csv::parse_csv_with_source;
use rcad::ingest::{clean_dataset, parse_pcap_file, CsvSchema, LabeledDataset, RawDataset};
use rcad::metrics::report::{
    write_crossval_csv, write_eval_csv, write_eval_text, write_sweep_csv, CrossValEntry, EvalRow,
};
use rcad::metrics::{crossval_report, sweep_thresholds, threshold_sweep};
use rcad::pipeline::{
    extract_windows, in_attack_period, intended_verdict, label_windows, labeled_dataset, read_truth_csv,
    train_test_split, DeviceMap, TruthInterval,
};
use rcad::synthgen::{build_corpus, write_corpus_files};
use rcad::telemetry::{
    attribute_or_other, read_telemetry_csv, train_pattern_model, write_attribution_csv, AttributionResult,
    BaselineProfile, TelemetrySample, TelemetryStore, Verdict,
};
use rcad::traffic::{Label, Protocol};
use rcad::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Paths, RunConfig};
use crate::Command;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Trained candidates for one protocol slot and the index of the one used
/// for detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotModels {
    pub protocol: ModelProtocol,
    pub selected: usize,
    pub candidates: Vec<TrainedModel>,
}

impl SlotModels {
    pub fn selected_model(&self) -> &TrainedModel {
        &self.candidates[self.selected]
    }
}

/// Everything `train` persists: one entry per slot plus the optional
/// attribution pattern model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub window_secs: u64,
    pub slots: Vec<SlotModels>,
    pub pattern: Option<TrainedModel>,
}

impl ModelBundle {
    /// The slot that scores windows of `protocol`; a dedicated slot wins
    /// over the general one.
    pub fn slot_for(&self, protocol: Protocol) -> Option<&SlotModels> {
        let exact = match protocol {
            Protocol::Tcp => Some(ModelProtocol::Tcp),
            Protocol::Udp => Some(ModelProtocol::Udp),
            Protocol::Other => None,
        };
        exact
            .and_then(|e| self.slots.iter().find(|s| s.protocol == e))
            .or_else(|| {
                self.slots
                    .iter()
                    .find(|s| s.protocol == ModelProtocol::General && s.protocol.accepts(protocol))
            })
    }

    pub fn model_for(&self, protocol: Protocol) -> Option<&TrainedModel> {
        self.slot_for(protocol).map(SlotModels::selected_model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported bundle format version {} (expected {BUNDLE_FORMAT_VERSION})",
                self.format_version
            )));
        }
        for s in &self.slots {
            if s.selected >= s.candidates.len() {
                return Err(Error::Model(format!(
                    "{} slot selects candidate {} of {}",
                    s.protocol.as_str(),
                    s.selected,
                    s.candidates.len()
                )));
            }
            for m in &s.candidates {
                if m.protocol != s.protocol {
                    return Err(Error::Model(format!(
                        "{} model stored in the {} slot",
                        m.protocol.as_str(),
                        s.protocol.as_str()
                    )));
                }
                if m.dimension() != s.protocol.dimension() {
                    return Err(Error::Shape {
                        expected: s.protocol.dimension(),
                        got: m.dimension(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: ModelBundle = serde_json::from_str(text)?;
        b.validate()?;
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Output directory plus the comment header stamped on every text file.
struct Outputs {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.out_dir();
        std::fs::create_dir_all(&dir)?;
        Ok(Outputs {
            dir,
            header: cfg.header()?,
            written: Vec::new(),
        })
    }

    fn text<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", self.header)?;
        body(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn snapshot(&mut self, cfg: &RunConfig, command: Command) -> Result<()> {
        let toml = cfg.to_toml()?;
        self.text(&format!("{}.config.toml", command.name()), |w| {
            w.write_all(toml.as_bytes())?;
            Ok(())
        })
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(cfg)?;
    match command {
        Command::Generate => cmd_generate(cfg, &mut out)?,
        Command::Train => cmd_train(cfg, &mut out)?,
        Command::Detect => cmd_detect(cfg, &mut out)?,
        Command::Attribute => cmd_attribute(cfg, &mut out)?,
        Command::Evaluate => cmd_evaluate(cfg, &mut out)?,
        Command::Crossval => cmd_crossval(cfg, &mut out)?,
        Command::Sweep => cmd_sweep(cfg, &mut out)?,
    }
    out.snapshot(cfg, command)?;
    Ok(out.written)
}

fn input_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths
        .pcap
        .clone()
        .or_else(|| cfg.paths.packets_csv.clone())
        .unwrap_or_else(|| cfg.out_dir().join("capture.pcap"))
}

fn telemetry_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths
        .telemetry
        .clone()
        .unwrap_or_else(|| cfg.out_dir().join("telemetry.csv"))
}

fn schedule_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths
        .schedule
        .clone()
        .unwrap_or_else(|| cfg.out_dir().join("schedule.csv"))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Reads the configured capture (pcap or packet CSV) and cleans it.
pub fn load_packets(cfg: &RunConfig) -> Result<RawDataset> {
    let path = input_path(cfg);
    let is_csv = cfg.paths.pcap.is_none() && cfg.paths.packets_csv.is_some();
    let raw = if is_csv {
        parse_csv_with_source(open(&path)?, &CsvSchema::default(), &path.display().to_string())?
    } else {
        open(&path)?;
        parse_pcap_file(&path)?
    };
    Ok(clean_dataset(raw))
}

/// Per-device feature windows of the configured capture.
pub fn load_windows(cfg: &RunConfig) -> Result<Vec<WindowFeatures>> {
    let raw = load_packets(cfg)?;
    let map = DeviceMap::new(&cfg.device_list())?;
    let windows = extract_windows(&raw.rows, &map, cfg.window_us(), cfg.window_origin())?;
    if windows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no TCP/UDP packets of the configured devices in {}",
            raw.source
        )));
    }
    Ok(windows)
}

pub fn load_truth(cfg: &RunConfig) -> Result<Vec<TruthInterval>> {
    let path = schedule_path(cfg);
    Ok(read_truth_csv(open(&path)?)?.into_iter().map(|(_, t)| t).collect())
}

fn load_truth_if_present(cfg: &RunConfig) -> Result<Option<Vec<TruthInterval>>> {
    if cfg.paths.schedule.is_none() && !schedule_path(cfg).exists() {
        return Ok(None);
    }
    load_truth(cfg).map(Some)
}

pub fn load_telemetry(cfg: &RunConfig) -> Result<Vec<TelemetrySample>> {
    read_telemetry_csv(open(&telemetry_path(cfg))?)
}

pub fn load_bundle(cfg: &RunConfig) -> Result<ModelBundle> {
    let path = cfg.model_path();
    open(&path)?;
    let bundle = ModelBundle::load(&path)?;
    if bundle.window_secs != cfg.window_secs {
        return Err(Error::Model(format!(
            "model was trained on {} s windows, configuration uses {} s",
            bundle.window_secs, cfg.window_secs
        )));
    }
    Ok(bundle)
}

/// Windows of the configured capture labeled from the schedule.
pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    let windows = load_windows(cfg)?;
    let truth = load_truth(cfg)?;
    labeled_dataset(windows, &truth)
}

/// Train and test indices of a dataset under the configured split.
pub fn split(cfg: &RunConfig, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    train_test_split(n, cfg.train_fraction, cfg.seed)
}

fn cmd_generate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let corpus = build_corpus(&cfg.scenario)?;
    let files = write_corpus_files(&out.dir, &corpus, &out.header)?;
    out.written.extend([
        files.pcap,
        files.packets_csv,
        files.telemetry_csv,
        files.schedule_csv,
        files.labels_csv,
    ]);

    let mut corpus_cfg = cfg.clone();
    corpus_cfg.devices = corpus.devices.clone();
    corpus_cfg.paths = Paths {
        out_dir: Some(".".into()),
        pcap: Some("capture.pcap".into()),
        packets_csv: Some("packets.csv".into()),
        telemetry: Some("telemetry.csv".into()),
        schedule: Some("schedule.csv".into()),
        model: Some("model.json".into()),
    };
    let toml = corpus_cfg.to_toml()?;
    out.text("corpus.toml", |w| {
        w.write_all(toml.as_bytes())?;
        Ok(())
    })?;

    let attacked = corpus.labels.iter().filter(|l| **l == Label::Attacked).count();
    out.text("generate_report.txt", |w| {
        writeln!(w, "devices: {}", corpus.devices.len())?;
        writeln!(w, "duration_s: {}", cfg.scenario.duration_s)?;
        writeln!(w, "window_secs: {}", cfg.window_secs)?;
        writeln!(w, "packets: {}", corpus.packets.len())?;
        writeln!(w, "telemetry_samples: {}", corpus.telemetry.len())?;
        writeln!(w, "scheduled_attacks: {}", corpus.schedule.len())?;
        writeln!(w, "windows: {} ({attacked} attacked)", corpus.windows.len())?;
        writeln!(w)?;
        writeln!(w, "signature separation (overlap of normal/attack ranges)")?;
        writeln!(
            w,
            "{:<8} {:<18} {:>8} {:>24} {:>24}",
            "protocol", "feature", "overlap", "normal range", "attack range"
        )?;
        for s in &corpus.separation {
            writeln!(
                w,
                "{:<8} {:<18} {:>8.4} {:>24} {:>24}",
                s.protocol.as_str(),
                s.feature,
                s.overlap,
                format!("[{:.3}, {:.3}]", s.normal_range.0, s.normal_range.1),
                format!("[{:.3}, {:.3}]", s.attack_range.0, s.attack_range.1)
            )?;
        }
        Ok(())
    })
}

/// Trains every candidate for `slot` and picks one. With several
/// candidates, the pick is the best accuracy on a validation fifth of the
/// training windows; the kept candidates are then refit on all of them.
pub fn train_slot(cfg: &RunConfig, train: &LabeledDataset, slot: ModelProtocol) -> Result<SlotModels> {
    let specs: Vec<ModelSpec> = cfg.model.specs(cfg.classifier);
    let selected = if specs.len() == 1 {
        0
    } else {
        let (fit_idx, val_idx) = train_test_split(train.len(), 0.8, cfg.seed)?;
        let fit = train.subset(&fit_idx);
        let fitted = specs
            .iter()
            .map(|s| TrainedModel::train(s, &fit, slot, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        select_best_model(&fitted, &train.subset(&val_idx), Criterion::Accuracy)?
    };
    let candidates = specs
        .iter()
        .map(|s| TrainedModel::train(s, train, slot, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SlotModels {
        protocol: slot,
        selected,
        candidates,
    })
}

/// Baselines per device, built on first use.
struct Baselines<'a> {
    store: &'a TelemetryStore,
    min_count: usize,
    cache: BTreeMap<String, BaselineProfile>,
}

impl<'a> Baselines<'a> {
    fn new(store: &'a TelemetryStore, min_count: usize) -> Self {
        Baselines {
            store,
            min_count,
            cache: BTreeMap::new(),
        }
    }

    fn get(&mut self, device: &str) -> Result<&BaselineProfile> {
        if !self.cache.contains_key(device) {
            let p = self.store.baseline(device, self.min_count)?;
            self.cache.insert(device.to_string(), p);
        }
        Ok(&self.cache[device])
    }
}

fn train_pattern(cfg: &RunConfig, train: &LabeledDataset, truth: &[TruthInterval]) -> Result<TrainedModel> {
    let samples = load_telemetry(cfg)?;
    let store = TelemetryStore::new(&samples);
    let mut baselines = Baselines::new(&store, cfg.attribution.min_baseline);
    let mut examples = Vec::new();
    for f in &train.features {
        let Some(v) = intended_verdict(f, truth) else {
            continue;
        };
        let inside = store.in_window(&f.window);
        if inside.is_empty() {
            continue;
        }
        let profile = baselines.get(&f.window.device_id)?;
        let (ez, mz) = rcad::telemetry::deviation_scores(profile, &f.window, inside)?;
        examples.push((f.clone(), ez, mz, v));
    }
    if examples.is_empty() {
        return Err(Error::EmptyTraining);
    }
    train_pattern_model(&examples, &ModelSpec::RandomForest(cfg.model.forest()), cfg.seed)
}

fn cmd_train(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let windows = load_windows(cfg)?;
    let truth = load_truth(cfg)?;
    let data = labeled_dataset(windows, &truth)?;
    let (train_idx, test_idx) = split(cfg, data.len())?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let slots = cfg
        .slots()
        .into_iter()
        .map(|slot| train_slot(cfg, &train, slot))
        .collect::<Result<Vec<_>>>()?;
    let pattern = if cfg.attribution.pattern_model {
        Some(train_pattern(cfg, &train, &truth)?)
    } else {
        None
    };
    let bundle = ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        window_secs: cfg.window_secs,
        slots,
        pattern,
    };
    let model_path = cfg.model_path();
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&model_path, bundle.to_json()?)?;
    out.written.push(model_path);

    let mut rows = Vec::new();
    for s in &bundle.slots {
        for (i, m) in s.candidates.iter().enumerate() {
            for (split_name, part) in [("train", &train), ("test", &test), ("all", &data)] {
                rows.push((
                    split_name,
                    m.model.name(),
                    s.protocol.as_str(),
                    i == s.selected,
                    m.evaluate(part)?,
                ));
            }
        }
    }
    if cfg.report_format.csv() {
        out.text("train_report.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["split", "model", "protocol", "selected", "tp", "tn", "fp", "fn", "acc"])?;
            for (split_name, model, protocol, selected, m) in &rows {
                c.write_record([
                    split_name.to_string(),
                    model.to_string(),
                    protocol.to_string(),
                    selected.to_string(),
                    m.tp.to_string(),
                    m.tn.to_string(),
                    m.fp.to_string(),
                    m.fn_.to_string(),
                    m.accuracy().to_string(),
                ])?;
            }
            c.flush()?;
            Ok(())
        })?;
    }
    if cfg.report_format.text() {
        out.text("train_report.txt", |w| {
            writeln!(
                w,
                "windows: {} (train {}, test {}), seed {}",
                data.len(),
                train.len(),
                test.len(),
                cfg.seed
            )?;
            writeln!(
                w,
                "{:<6} {:<8} {:<6} {:>8} {:>10}",
                "split", "protocol", "model", "selected", "ACC"
            )?;
            for (split_name, model, protocol, selected, m) in &rows {
                writeln!(
                    w,
                    "{:<6} {:<8} {:<6} {:>8} {:>10}",
                    split_name,
                    protocol,
                    model,
                    if *selected { "*" } else { "" },
                    m.accuracy()
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Stage-1 verdict and attack score for every window a bundle slot accepts.
pub fn detect_windows(bundle: &ModelBundle, windows: &[WindowFeatures]) -> Result<Vec<(usize, String, Label, f64)>> {
    let mut out = Vec::new();
    for (i, f) in windows.iter().enumerate() {
        if let Some(m) = bundle.model_for(f.protocol) {
            out.push((i, m.model.name().to_string(), m.predict_window(f)?, m.window_score(f)?));
        }
    }
    Ok(out)
}

fn cmd_detect(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let bundle = load_bundle(cfg)?;
    let windows = load_windows(cfg)?;
    let detections = detect_windows(&bundle, &windows)?;
    out.text("detections.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["device_id", "window_start_us", "protocol", "model", "verdict", "score"])?;
        for (i, model, label, score) in &detections {
            let f = &windows[*i];
            c.write_record([
                f.window.device_id.clone(),
                f.window.start.to_string(),
                f.protocol.to_string(),
                model.clone(),
                label.to_string(),
                format!("{score:.6}"),
            ])?;
        }
        c.flush()?;
        Ok(())
    })
}

/// Runs stage 2 on every window stage 1 flags. Results are in window order.
pub fn attribute_windows(
    cfg: &RunConfig,
    bundle: &ModelBundle,
    windows: &[WindowFeatures],
    telemetry: &[TelemetrySample],
) -> Result<Vec<(usize, AttributionResult)>> {
    let store = TelemetryStore::new(telemetry);
    let mut baselines = Baselines::new(&store, cfg.attribution.min_baseline);
    let acfg = cfg.attribution.config();
    let mut out = Vec::new();
    for (i, _, label, _) in detect_windows(bundle, windows)? {
        if label != Label::Attacked {
            continue;
        }
        let f = &windows[i];
        let profile = baselines.get(&f.window.device_id)?;
        let r = attribute_or_other(f, profile, store.in_window(&f.window), &acfg, bundle.pattern.as_ref())?;
        out.push((i, r));
    }
    Ok(out)
}

fn cmd_attribute(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let bundle = load_bundle(cfg)?;
    let windows = load_windows(cfg)?;
    let telemetry = load_telemetry(cfg)?;
    let truth = load_truth_if_present(cfg)?;
    let results = attribute_windows(cfg, &bundle, &windows, &telemetry)?;
    let rows: Vec<(String, AttributionResult)> = results
        .iter()
        .map(|(i, r)| (windows[*i].protocol.to_string(), r.clone()))
        .collect();
    out.text("attribution.csv", |w| write_attribution_csv(w, &rows))?;
    if !cfg.report_format.text() {
        return Ok(());
    }
    out.text("attribution.txt", |w| {
        writeln!(w, "flagged windows: {}", results.len())?;
        for v in Verdict::ALL {
            let n = results.iter().filter(|(_, r)| r.verdict == v).count();
            writeln!(w, "  {:<14} {n}", v.as_str())?;
        }
        let missing = results.iter().filter(|(_, r)| r.missing_telemetry).count();
        writeln!(w, "  missing telemetry: {missing}")?;
        if let Some(truth) = &truth {
            let mut intended = 0usize;
            let mut exact = 0usize;
            let mut outside = 0usize;
            for (i, r) in &results {
                let f = &windows[*i];
                if !in_attack_period(&f.window, truth) {
                    outside += 1;
                }
                if let Some(v) = intended_verdict(f, truth) {
                    intended += 1;
                    if r.verdict == v {
                        exact += 1;
                    }
                }
            }
            writeln!(w)?;
            writeln!(w, "flagged windows outside any attack period: {outside}")?;
            let rate = if intended == 0 {
                "UNDEFINED".to_string()
            } else {
                format!("{:.4}", exact as f64 / intended as f64)
            };
            writeln!(w, "intended verdict matched: {exact}/{intended} ({rate})")?;
        }
        Ok(())
    })
}

fn slot_rows(cfg: &RunConfig, bundle: &ModelBundle, test: &LabeledDataset) -> Result<Vec<EvalRow>> {
    let secs = cfg.window_secs as f64;
    let mut rows = Vec::new();
    for s in &bundle.slots {
        let accepted: Vec<usize> = (0..test.len())
            .filter(|&i| s.protocol.accepts(test.features[i].protocol))
            .collect();
        let part = test.subset(&accepted);
        for m in &s.candidates {
            rows.push(EvalRow {
                model: m.model.name().to_string(),
                protocol: s.protocol.as_str().to_string(),
                device: "all".to_string(),
                fold: None,
                confusion: m.evaluate(&part)?,
                duration_s: Some(part.len() as f64 * secs),
            });
        }
        let m = s.selected_model();
        let mut by_device: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, f) in part.features.iter().enumerate() {
            by_device.entry(f.window.device_id.as_str()).or_default().push(i);
        }
        for (device, idx) in by_device {
            rows.push(EvalRow {
                model: m.model.name().to_string(),
                protocol: s.protocol.as_str().to_string(),
                device: device.to_string(),
                fold: None,
                confusion: m.evaluate(&part.subset(&idx))?,
                duration_s: Some(idx.len() as f64 * secs),
            });
        }
    }
    Ok(rows)
}

fn cmd_evaluate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let bundle = load_bundle(cfg)?;
    let data = load_dataset(cfg)?;
    let (_, test_idx) = split(cfg, data.len())?;
    let test = data.subset(&test_idx);
    let rows = slot_rows(cfg, &bundle, &test)?;
    if cfg.report_format.csv() {
        out.text("eval.csv", |w| write_eval_csv(w, &rows, cfg.paper_literal))?;
    }
    if cfg.report_format.text() {
        let title = format!(
            "Held-out evaluation: {} test windows of {}, seed {}, {} s windows",
            test.len(),
            data.len(),
            cfg.seed,
            cfg.window_secs
        );
        out.text("eval.txt", |w| write_eval_text(w, &title, &rows, cfg.paper_literal))?;
    }
    Ok(())
}

fn cmd_crossval(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let data = load_dataset(cfg)?;
    let mut entries = Vec::new();
    for slot in cfg.slots() {
        for spec in cfg.model.specs(cfg.classifier) {
            entries.push(CrossValEntry {
                model: spec.name().to_string(),
                protocol: slot.as_str().to_string(),
                report: crossval_report(&data, &spec, slot, cfg.folds, cfg.seed)?,
            });
        }
    }
    if cfg.report_format.csv() {
        out.text("crossval.csv", |w| write_crossval_csv(w, &entries))?;
    }
    if cfg.report_format.text() {
        out.text("crossval.txt", |w| {
            writeln!(w, "{}-fold cross-validation, seed {}", cfg.folds, cfg.seed)?;
            writeln!(
                w,
                "{:<6} {:<8} {:>10} {:>10}  folds",
                "model", "protocol", "mean", "spread"
            )?;
            for e in &entries {
                let folds: Vec<String> = e.report.fold_accuracies.iter().map(|a| a.to_string()).collect();
                let spread = e
                    .report
                    .spread()
                    .map_or_else(|| "UNDEFINED".into(), |s| format!("{s:.4}"));
                writeln!(
                    w,
                    "{:<6} {:<8} {:>10} {:>10}  {}",
                    e.model,
                    e.protocol,
                    e.report.mean_accuracy,
                    spread,
                    folds.join(" ")
                )?;
            }
            Ok(())
        })?;
    }
    if !cfg.tree_counts.is_empty() {
        let mut sweeps = Vec::new();
        for slot in cfg.slots() {
            let s = sweep_tree_count(&data, slot, cfg.folds, &cfg.tree_counts, &cfg.model.forest(), cfg.seed)?;
            sweeps.push((slot, s));
        }
        out.text("tree_sweep.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["protocol", "n_trees", "mean_accuracy", "chosen"])?;
            for (slot, s) in &sweeps {
                for (n, acc) in &s.means {
                    c.write_record([
                        slot.as_str().to_string(),
                        n.to_string(),
                        acc.to_string(),
                        (*n == s.chosen).to_string(),
                    ])?;
                }
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let bundle = load_bundle(cfg)?;
    let data = load_dataset(cfg)?;
    let (_, test_idx) = split(cfg, data.len())?;
    let test = data.subset(&test_idx);
    for s in &bundle.slots {
        for m in &s.candidates {
            let mut scores = Vec::new();
            let mut truths = Vec::new();
            for (f, l) in test.features.iter().zip(&test.labels) {
                if s.protocol.accepts(f.protocol) {
                    scores.push(m.window_score(f)?);
                    truths.push(*l);
                }
            }
            let points = threshold_sweep(&scores, &truths, &sweep_thresholds(&scores, cfg.sweep_points))?;
            let name = format!(
                "sweep_{}_{}.csv",
                s.protocol.as_str(),
                m.model.name().to_ascii_lowercase()
            );
            out.text(&name, |w| write_sweep_csv(w, &points))?;
        }
    }
    Ok(())
}

/// Ground-truth labels of `windows` from the configured schedule.
pub fn truth_labels(cfg: &RunConfig, windows: &[WindowFeatures]) -> Result<Vec<Label>> {
    label_windows(windows, &load_truth(cfg)?)
}
