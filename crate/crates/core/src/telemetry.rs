//! Second-stage attribution of attacked windows from energy and memory
//! telemetry.
//!
//! A per-device baseline (mean and population stddev of NORMAL-state
//! samples) turns the in-window mean of each metric into a z-score. The
//! threshold rule maps the pair of z-scores to a verdict; an optional
//! pattern model over the window features plus both z-scores may override
//! it when confident enough.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifiers::{ModelSpec, Samples, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{feature_vector, mean_std, ModelProtocol, WindowFeatures};
use crate::traffic::TimeWindow;

pub const DEFAULT_MIN_BASELINE: usize = 30;
pub const STD_FLOOR: f64 = 1e-6;
pub const DEFAULT_CONFIDENCE_CUTOFF: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DeviceState {
    Idle,
    Normal,
    Abnormal,
    Unknown,
}

impl DeviceState {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceState::Idle => "IDLE",
            DeviceState::Normal => "NORMAL",
            DeviceState::Abnormal => "ABNORMAL",
            DeviceState::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for DeviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IDLE" => Ok(DeviceState::Idle),
            "NORMAL" => Ok(DeviceState::Normal),
            "ABNORMAL" => Ok(DeviceState::Abnormal),
            "UNKNOWN" => Ok(DeviceState::Unknown),
            other => Err(Error::Parse(format!("unknown device state {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub timestamp: u64,
    pub device_id: String,
    pub energy_mw: f64,
    pub memory_kib: f64,
    pub state: DeviceState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub device_id: String,
    pub energy_mean: f64,
    pub energy_std: f64,
    pub memory_mean: f64,
    pub memory_std: f64,
    pub count: usize,
}

/// Baseline over the NORMAL-state samples of `device_id`; samples in any
/// other state or for other devices are ignored.
pub fn build_baseline(samples: &[TelemetrySample], device_id: &str, min_count: usize) -> Result<BaselineProfile> {
    let normal: Vec<&TelemetrySample> = samples
        .iter()
        .filter(|s| s.device_id == device_id && s.state == DeviceState::Normal)
        .collect();
    if normal.len() < min_count.max(1) {
        return Err(Error::InsufficientBaseline {
            device: device_id.to_string(),
            required: min_count.max(1),
            have: normal.len(),
        });
    }
    let energy: Vec<f64> = normal.iter().map(|s| s.energy_mw).collect();
    let memory: Vec<f64> = normal.iter().map(|s| s.memory_kib).collect();
    let (energy_mean, energy_std) = mean_std(&energy);
    let (memory_mean, memory_std) = mean_std(&memory);
    Ok(BaselineProfile {
        device_id: device_id.to_string(),
        energy_mean,
        energy_std: energy_std.max(STD_FLOOR),
        memory_mean,
        memory_std: memory_std.max(STD_FLOOR),
        count: normal.len(),
    })
}

/// Telemetry grouped per device and sorted by timestamp.
#[derive(Debug, Clone, Default)]
pub struct TelemetryStore {
    by_device: BTreeMap<String, Vec<TelemetrySample>>,
}

impl TelemetryStore {
    pub fn new(samples: &[TelemetrySample]) -> Self {
        let mut by_device: BTreeMap<String, Vec<TelemetrySample>> = BTreeMap::new();
        for s in samples {
            by_device.entry(s.device_id.clone()).or_default().push(s.clone());
        }
        for v in by_device.values_mut() {
            v.sort_by_key(|s| s.timestamp);
        }
        TelemetryStore { by_device }
    }

    pub fn devices(&self) -> impl Iterator<Item = &str> {
        self.by_device.keys().map(String::as_str)
    }

    pub fn device_samples(&self, device_id: &str) -> &[TelemetrySample] {
        self.by_device.get(device_id).map_or(&[], Vec::as_slice)
    }

    /// Samples of the window's device with timestamps inside the window.
    pub fn in_window(&self, window: &TimeWindow) -> &[TelemetrySample] {
        let v = self.device_samples(&window.device_id);
        let lo = v.partition_point(|s| s.timestamp < window.start);
        let hi = v.partition_point(|s| s.timestamp < window.end());
        &v[lo..hi]
    }

    pub fn baseline(&self, device_id: &str, min_count: usize) -> Result<BaselineProfile> {
        build_baseline(self.device_samples(device_id), device_id, min_count)
    }
}

/// `(energy_z, memory_z)` of the in-window means against the baseline.
pub fn deviation_scores(
    profile: &BaselineProfile,
    window: &TimeWindow,
    samples: &[TelemetrySample],
) -> Result<(f64, f64)> {
    let inside: Vec<&TelemetrySample> = samples
        .iter()
        .filter(|s| s.device_id == window.device_id && window.contains(s.timestamp))
        .collect();
    if inside.is_empty() {
        return Err(Error::MissingTelemetry {
            device: window.device_id.clone(),
            start: window.start,
        });
    }
    let n = inside.len() as f64;
    let e = inside.iter().map(|s| s.energy_mw).sum::<f64>() / n;
    let m = inside.iter().map(|s| s.memory_kib).sum::<f64>() / n;
    Ok((
        (e - profile.energy_mean) / profile.energy_std,
        (m - profile.memory_mean) / profile.memory_std,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    EnergyAttack,
    MemoryAttack,
    Both,
    Other,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::EnergyAttack,
        Verdict::MemoryAttack,
        Verdict::Both,
        Verdict::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::EnergyAttack => "ENERGY_ATTACK",
            Verdict::MemoryAttack => "MEMORY_ATTACK",
            Verdict::Both => "BOTH",
            Verdict::Other => "OTHER",
        }
    }

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_class_index(i: usize) -> Result<Self> {
        Verdict::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Model(format!("verdict class index {i} out of range")))
    }

    pub fn implicates_energy(self) -> bool {
        matches!(self, Verdict::EnergyAttack | Verdict::Both)
    }

    pub fn implicates_memory(self) -> bool {
        matches!(self, Verdict::MemoryAttack | Verdict::Both)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown verdict {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub energy: f64,
    pub memory: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            energy: 3.0,
            memory: 3.0,
        }
    }
}

/// Four-case rule with strict inequalities.
pub fn threshold_verdict(energy_z: f64, memory_z: f64, t: &Thresholds) -> Verdict {
    match (energy_z > t.energy, memory_z > t.memory) {
        (true, true) => Verdict::Both,
        (true, false) => Verdict::EnergyAttack,
        (false, true) => Verdict::MemoryAttack,
        (false, false) => Verdict::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub verdict: Verdict,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub window: TimeWindow,
    pub verdict: Verdict,
    pub energy_z: Option<f64>,
    pub memory_z: Option<f64>,
    pub pattern_match: Option<PatternMatch>,
    pub missing_telemetry: bool,
}

/// Input vector of the pattern model: the general-slot feature vector
/// followed by both z-scores.
pub fn pattern_vector(features: &WindowFeatures, energy_z: f64, memory_z: f64) -> Vec<f64> {
    let mut v = feature_vector(features, ModelProtocol::General);
    v.push(energy_z);
    v.push(memory_z);
    v
}

pub fn verdict_class_names() -> Vec<String> {
    Verdict::ALL.iter().map(|v| v.to_string()).collect()
}

/// Trains the pattern matcher on labeled `(features, energy_z, memory_z, verdict)` examples.
pub fn train_pattern_model(
    examples: &[(WindowFeatures, f64, f64, Verdict)],
    spec: &ModelSpec,
    seed: u64,
) -> Result<TrainedModel> {
    let x = examples.iter().map(|(f, e, m, _)| pattern_vector(f, *e, *m)).collect();
    let y = examples.iter().map(|(.., v)| v.class_index()).collect();
    let samples = Samples::new(x, y, Verdict::ALL.len());
    TrainedModel::train_samples(spec, &samples, ModelProtocol::General, verdict_class_names(), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    pub thresholds: Thresholds,
    pub confidence_cutoff: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            thresholds: Thresholds::default(),
            confidence_cutoff: DEFAULT_CONFIDENCE_CUTOFF,
        }
    }
}

/// Attributes one ATTACKED window. Fails with a missing-telemetry error when
/// no sample falls inside the window.
pub fn attribute(
    features: &WindowFeatures,
    profile: &BaselineProfile,
    samples: &[TelemetrySample],
    cfg: &AttributionConfig,
    pattern_model: Option<&TrainedModel>,
) -> Result<AttributionResult> {
    let window = &features.window;
    let (ez, mz) = deviation_scores(profile, window, samples)?;
    let mut verdict = threshold_verdict(ez, mz, &cfg.thresholds);
    let pattern_match = match pattern_model {
        None => None,
        Some(model) => {
            let (class, score) = model.predict_with_confidence(&pattern_vector(features, ez, mz))?;
            let pm = PatternMatch {
                verdict: Verdict::from_class_index(class)?,
                score,
            };
            if score >= cfg.confidence_cutoff {
                verdict = pm.verdict;
            }
            Some(pm)
        }
    };
    Ok(AttributionResult {
        window: window.clone(),
        verdict,
        energy_z: Some(ez),
        memory_z: Some(mz),
        pattern_match,
        missing_telemetry: false,
    })
}

/// Like [`attribute`], but a window without telemetry yields `OTHER` with
/// the missing-data flag set.
pub fn attribute_or_other(
    features: &WindowFeatures,
    profile: &BaselineProfile,
    samples: &[TelemetrySample],
    cfg: &AttributionConfig,
    pattern_model: Option<&TrainedModel>,
) -> Result<AttributionResult> {
    match attribute(features, profile, samples, cfg, pattern_model) {
        Err(Error::MissingTelemetry { .. }) => Ok(AttributionResult {
            window: features.window.clone(),
            verdict: Verdict::Other,
            energy_z: None,
            memory_z: None,
            pattern_match: None,
            missing_telemetry: true,
        }),
        other => other,
    }
}

pub const TELEMETRY_HEADER: [&str; 5] = ["timestamp_us", "device_id", "energy_mw", "memory_kib", "state"];

/// Reads telemetry CSV. Lines starting with `#` are comments.
pub fn read_telemetry_csv<R: Read>(input: R) -> Result<Vec<TelemetrySample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput("telemetry CSV has no header".into()));
    }
    let mut col = [0usize; 5];
    for (i, name) in TELEMETRY_HEADER.iter().enumerate() {
        col[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Schema(format!("telemetry CSV is missing column {name:?}")))?;
    }
    let mut out = Vec::new();
    let mut last: BTreeMap<String, u64> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(col[i]).unwrap_or("");
        let parse_f = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}: bad {} {:?}", TELEMETRY_HEADER[i], field(i))))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::OutOfRange(format!(
                    "row {row}: {} must be finite and >= 0, got {v}",
                    TELEMETRY_HEADER[i]
                )));
            }
            Ok(v)
        };
        let timestamp: u64 = field(0)
            .parse()
            .map_err(|_| Error::Parse(format!("row {row}: bad timestamp_us {:?}", field(0))))?;
        let device_id = field(1).to_string();
        if let Some(&prev) = last.get(&device_id) {
            if timestamp < prev {
                return Err(Error::Parse(format!(
                    "row {row}: timestamps for {device_id} decrease ({timestamp} < {prev})"
                )));
            }
        }
        last.insert(device_id.clone(), timestamp);
        out.push(TelemetrySample {
            timestamp,
            device_id,
            energy_mw: parse_f(2)?,
            memory_kib: parse_f(3)?,
            state: field(4).parse()?,
        });
    }
    Ok(out)
}

pub fn write_telemetry_csv<W: Write>(out: W, samples: &[TelemetrySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TELEMETRY_HEADER)?;
    for s in samples {
        w.write_record([
            s.timestamp.to_string(),
            s.device_id.clone(),
            format!("{:.3}", s.energy_mw),
            format!("{:.3}", s.memory_kib),
            s.state.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Attribution CSV: `device_id,window_start_us,protocol,verdict,energy_z,memory_z,pattern_verdict,pattern_score,missing_telemetry`.
pub fn write_attribution_csv<W: Write>(out: W, rows: &[(String, AttributionResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "device_id",
        "window_start_us",
        "protocol",
        "verdict",
        "energy_z",
        "memory_z",
        "pattern_verdict",
        "pattern_score",
        "missing_telemetry",
    ])?;
    let z = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
    for (protocol, r) in rows {
        w.write_record([
            r.window.device_id.clone(),
            r.window.start.to_string(),
            protocol.clone(),
            r.verdict.to_string(),
            z(r.energy_z),
            z(r.memory_z),
            r.pattern_match.map_or_else(String::new, |p| p.verdict.to_string()),
            r.pattern_match.map_or_else(String::new, |p| format!("{:.4}", p.score)),
            r.missing_telemetry.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
