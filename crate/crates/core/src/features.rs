//! Per-window protocol feature vectors and feature standardization.
//!
//! Each traffic signature maps to one number:
//!
//! | signature                     | feature                                   |
//! |-------------------------------|-------------------------------------------|
//! | packet volume                 | `num_packet`                              |
//! | length consistency            | `mean_len`, `len_stddev`                  |
//! | identification randomness     | `iden_entropy`                            |
//! | sequence regularity (TCP)     | `seq_irregularity`                        |
//! | port randomness               | `dst_port_entropy`, `dominant_port_fraction` |
//! | destination concentration     | `dst_ip_count`                            |
//! | source spread                 | `src_ip_count`                            |

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{Label, PacketRecord, Protocol, TimeWindow};

/// Column order of the numeric feature vector.
pub const FEATURE_NAMES: [&str; 9] = [
    "num_packet",
    "mean_len",
    "len_stddev",
    "iden_entropy",
    "seq_irregularity",
    "dst_port_entropy",
    "dominant_port_fraction",
    "dst_ip_count",
    "src_ip_count",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub num_packet: u64,
    pub mean_len: f64,
    pub len_stddev: f64,
    pub iden_entropy: f64,
    pub seq_irregularity: f64,
    pub dst_port_entropy: f64,
    pub dominant_port_fraction: f64,
    pub dst_ip_count: u64,
    pub src_ip_count: u64,
    pub protocol: Protocol,
    pub window: TimeWindow,
}

impl WindowFeatures {
    pub fn to_vector(&self) -> [f64; NUM_FEATURES] {
        [
            self.num_packet as f64,
            self.mean_len,
            self.len_stddev,
            self.iden_entropy,
            self.seq_irregularity,
            self.dst_port_entropy,
            self.dominant_port_fraction,
            self.dst_ip_count as f64,
            self.src_ip_count as f64,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Which traffic a model is trained for. `General` vectors carry two extra
/// one-hot protocol columns (tcp, udp).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelProtocol {
    Tcp,
    Udp,
    General,
}

impl ModelProtocol {
    pub fn dimension(self) -> usize {
        match self {
            ModelProtocol::General => NUM_FEATURES + 2,
            _ => NUM_FEATURES,
        }
    }

    pub fn accepts(self, p: Protocol) -> bool {
        match self {
            ModelProtocol::Tcp => p == Protocol::Tcp,
            ModelProtocol::Udp => p == Protocol::Udp,
            ModelProtocol::General => matches!(p, Protocol::Tcp | Protocol::Udp),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelProtocol::Tcp => "tcp",
            ModelProtocol::Udp => "udp",
            ModelProtocol::General => "general",
        }
    }
}

impl std::str::FromStr for ModelProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" => Ok(ModelProtocol::Tcp),
            "udp" => Ok(ModelProtocol::Udp),
            "general" => Ok(ModelProtocol::General),
            other => Err(Error::Parameter(format!("unknown protocol selection {other:?}"))),
        }
    }
}

/// Numeric model input for a window under the given protocol slot.
pub fn feature_vector(f: &WindowFeatures, slot: ModelProtocol) -> Vec<f64> {
    let mut v = f.to_vector().to_vec();
    if slot == ModelProtocol::General {
        v.push(if f.protocol == Protocol::Tcp { 1.0 } else { 0.0 });
        v.push(if f.protocol == Protocol::Udp { 1.0 } else { 0.0 });
    }
    v
}

/// Plug-in Shannon entropy in bits; `0 log 0 = 0`.
pub fn shannon_entropy<T: Eq + Hash>(values: impl IntoIterator<Item = T>) -> f64 {
    let mut counts: HashMap<T, u64> = HashMap::new();
    let mut n = 0u64;
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut c: Vec<u64> = counts.into_values().collect();
    // fixed summation order keeps results independent of hash iteration
    c.sort_unstable();
    let h: f64 = c
        .into_iter()
        .map(|k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sequence-number irregularity: population stddev of first differences
/// (serial-number arithmetic, so wraparound is a small step) divided by
/// `1 + mean |difference|`.
pub fn seq_irregularity(seqs: &[u32]) -> f64 {
    if seqs.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = seqs.windows(2).map(|w| w[1].wrapping_sub(w[0]) as i32 as f64).collect();
    let (_, sd) = mean_std(&diffs);
    let mean_abs = diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64;
    sd / (1.0 + mean_abs)
}

/// Computes the feature vector of one (window, protocol) packet group.
/// Packets of other protocols are ignored.
pub fn extract_features(packets: &[PacketRecord], protocol: Protocol, window: &TimeWindow) -> Result<WindowFeatures> {
    if protocol == Protocol::Other {
        return Err(Error::Parameter("OTHER packets are not featurized".into()));
    }
    let pkts: Vec<&PacketRecord> = packets.iter().filter(|p| p.protocol == protocol).collect();
    if pkts.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = pkts.len();
    let lengths: Vec<f64> = pkts.iter().map(|p| p.length as f64).collect();
    let (mean_len, len_stddev) = mean_std(&lengths);

    let seq = if protocol == Protocol::Tcp {
        let seqs: Vec<u32> = pkts.iter().filter_map(|p| p.tcp_seq).collect();
        seq_irregularity(&seqs)
    } else {
        0.0
    };

    let mut port_counts: HashMap<u16, u64> = HashMap::new();
    for p in &pkts {
        *port_counts.entry(p.dst_port).or_insert(0) += 1;
    }
    let max_port = port_counts.values().copied().max().unwrap_or(0);

    Ok(WindowFeatures {
        num_packet: n as u64,
        mean_len,
        len_stddev,
        iden_entropy: shannon_entropy(pkts.iter().map(|p| p.ip_id)),
        seq_irregularity: seq,
        dst_port_entropy: shannon_entropy(pkts.iter().map(|p| p.dst_port)),
        dominant_port_fraction: max_port as f64 / n as f64,
        dst_ip_count: pkts.iter().map(|p| p.dst_ip).collect::<HashSet<_>>().len() as u64,
        src_ip_count: pkts.iter().map(|p| p.src_ip).collect::<HashSet<_>>().len() as u64,
        protocol,
        window: window.clone(),
    })
}

/// Per-feature standardization learned on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features that were constant on the training data (stored stddev 1).
    pub constant: Vec<bool>,
}

impl StandardizationParams {
    pub fn learn(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Parameter(format!(
                "standardization needs at least 2 samples, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        let mut mean = Vec::with_capacity(d);
        let mut std = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = rows
                .iter()
                .map(|r| {
                    if r.len() != d {
                        Err(Error::Shape {
                            expected: d,
                            got: r.len(),
                        })
                    } else {
                        Ok(r[j])
                    }
                })
                .collect::<Result<_>>()?;
            let (m, s) = mean_std(&col);
            let is_const = col.iter().all(|&x| x == col[0]);
            mean.push(if is_const { col[0] } else { m });
            std.push(if is_const || s == 0.0 { 1.0 } else { s });
            constant.push(is_const);
        }
        Ok(StandardizationParams { mean, std, constant })
    }

    /// Identity transform of dimension `d`.
    pub fn identity(d: usize) -> Self {
        StandardizationParams {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            constant: vec![false; d],
        }
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Standardizes `rows`, learning parameters when `params` is `None`.
pub fn standardize(
    rows: &[Vec<f64>],
    params: Option<&StandardizationParams>,
) -> Result<(Vec<Vec<f64>>, StandardizationParams)> {
    let params = match params {
        Some(p) => p.clone(),
        None => StandardizationParams::learn(rows)?,
    };
    Ok((params.apply_all(rows)?, params))
}

/// Writes feature vectors in the documented column order, optionally with labels.
pub fn write_features_csv<W: Write>(out: W, features: &[WindowFeatures], labels: Option<&[Label]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["device_id", "window_start_us", "protocol"];
    header.extend(FEATURE_NAMES);
    if labels.is_some() {
        header.push("label");
    }
    w.write_record(&header)?;
    for (i, f) in features.iter().enumerate() {
        let mut row = vec![
            f.window.device_id.clone(),
            f.window.start.to_string(),
            f.protocol.to_string(),
        ];
        row.extend(f.to_vector().iter().map(|v| v.to_string()));
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window() -> TimeWindow {
        TimeWindow {
            start: 0,
            duration: 2_000_000,
            device_id: "dev-0".into(),
        }
    }

    fn tcp(seq: u32, len: u32, ip_id: u16, port: u16) -> PacketRecord {
        PacketRecord {
            timestamp: 1,
            src_ip: 1,
            dst_ip: 2,
            src_port: 999,
            dst_port: port,
            protocol: Protocol::Tcp,
            length: len,
            ip_id,
            tcp_seq: Some(seq),
        }
    }

    fn udp(port: u16) -> PacketRecord {
        PacketRecord {
            protocol: Protocol::Udp,
            tcp_seq: None,
            ..tcp(0, 60, 1, port)
        }
    }

    #[test]
    fn constant_sequence_deltas() {
        let pkts: Vec<_> = [100, 200, 300, 400].iter().map(|&s| tcp(s, 60, 1, 80)).collect();
        let f = extract_features(&pkts, Protocol::Tcp, &window()).unwrap();
        assert_eq!(f.seq_irregularity, 0.0);
    }

    #[test]
    fn single_port_udp() {
        let pkts: Vec<_> = (0..4).map(|_| udp(53)).collect();
        let f = extract_features(&pkts, Protocol::Udp, &window()).unwrap();
        assert_eq!(f.dst_port_entropy, 0.0);
        assert_eq!(f.dominant_port_fraction, 1.0);
        assert_eq!(f.seq_irregularity, 0.0);
    }

    #[test]
    fn uniform_ports_udp() {
        let pkts: Vec<_> = [1000, 2000, 3000, 4000].iter().map(|&p| udp(p)).collect();
        let f = extract_features(&pkts, Protocol::Udp, &window()).unwrap();
        assert_eq!(f.dst_port_entropy, 2.0);
        assert_eq!(f.dominant_port_fraction, 0.25);
    }

    #[test]
    fn lengths_and_constant_id() {
        // mean of {60, 60, 60, 1500, 60} = 1740 / 5 = 348
        let pkts: Vec<_> = [60, 60, 60, 1500, 60]
            .iter()
            .enumerate()
            .map(|(i, &l)| tcp(i as u32, l, 7, 80))
            .collect();
        let f = extract_features(&pkts, Protocol::Tcp, &window()).unwrap();
        assert_eq!(f.mean_len, 348.0);
        assert_eq!(f.iden_entropy, 0.0);
        // population stddev: sqrt(4*288^2 + 1152^2)/sqrt(5) = 576
        assert!((f.len_stddev - 576.0).abs() < 1e-9);
    }

    #[test]
    fn empty_window_errors() {
        assert!(matches!(
            extract_features(&[], Protocol::Tcp, &window()),
            Err(Error::EmptyWindow)
        ));
        // only UDP present when asking for TCP
        assert!(matches!(
            extract_features(&[udp(53)], Protocol::Tcp, &window()),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn single_packet_conventions() {
        let f = extract_features(&[tcp(5, 60, 3, 80)], Protocol::Tcp, &window()).unwrap();
        assert_eq!(f.num_packet, 1);
        assert_eq!(f.len_stddev, 0.0);
        assert_eq!(f.iden_entropy, 0.0);
        assert_eq!(f.dst_port_entropy, 0.0);
        assert_eq!(f.seq_irregularity, 0.0);
    }

    #[test]
    fn sequence_wraparound_is_a_small_step() {
        let seqs = [u32::MAX - 100, u32::MAX - 50, 0, 50];
        assert!(seq_irregularity(&seqs) < 0.05);
    }

    #[test]
    fn standardize_examples() {
        let (z, p) = standardize(&[vec![2.0], vec![4.0]], None).unwrap();
        assert_eq!(z, vec![vec![-1.0], vec![1.0]]);
        assert!(!p.constant[0]);

        let (z, p) = standardize(&[vec![5.0], vec![5.0], vec![5.0]], None).unwrap();
        assert_eq!(z, vec![vec![0.0]; 3]);
        assert!(p.constant[0]);
        assert_eq!(p.std[0], 1.0);

        let p = StandardizationParams {
            mean: vec![10.0],
            std: vec![2.0],
            constant: vec![false],
        };
        assert_eq!(p.apply(&[14.0]).unwrap(), vec![2.0]);
        assert!(matches!(p.apply(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn standardize_needs_two_samples() {
        assert!(standardize(&[vec![1.0]], None).is_err());
    }

    #[test]
    fn general_vector_one_hot() {
        let f = extract_features(&[udp(53)], Protocol::Udp, &window()).unwrap();
        let v = feature_vector(&f, ModelProtocol::General);
        assert_eq!(v.len(), 11);
        assert_eq!(&v[9..], &[0.0, 1.0]);
    }

    #[test]
    fn attack_signatures_move_features() {
        let normal: Vec<_> = (0..64u16).map(|i| tcp(i as u32 * 100, 60, i * 997, 1000 + i)).collect();
        let f = extract_features(&normal, Protocol::Tcp, &window()).unwrap();
        assert!(f.dst_port_entropy > 5.9);
        let single: Vec<_> = normal
            .iter()
            .map(|p| PacketRecord {
                dst_port: 80,
                ..p.clone()
            })
            .collect();
        let g = extract_features(&single, Protocol::Tcp, &window()).unwrap();
        assert_eq!(g.dst_port_entropy, 0.0);
        // 64 distinct ids => log2(64)
        assert!((f.iden_entropy - 6.0).abs() < 1e-12);
    }

    fn arb_packets() -> impl Strategy<Value = Vec<PacketRecord>> {
        proptest::collection::vec(
            (any::<u32>(), 54u32..1600, 0u16..50, 1u16..20, 0u32..8).prop_map(|(seq, len, id, port, dst)| {
                PacketRecord {
                    dst_ip: dst,
                    ..tcp(seq, len, id, port)
                }
            }),
            1..80,
        )
    }

    proptest! {
        #[test]
        fn entropy_bounds(pkts in arb_packets()) {
            let f = extract_features(&pkts, Protocol::Tcp, &window()).unwrap();
            let bound = (f.num_packet as f64).log2() + 1e-9;
            prop_assert!(f.dst_port_entropy >= 0.0 && f.dst_port_entropy <= bound);
            prop_assert!(f.iden_entropy >= 0.0 && f.iden_entropy <= bound);
            prop_assert!(f.dominant_port_fraction > 0.0 && f.dominant_port_fraction <= 1.0);
            prop_assert!(f.is_finite());
        }

        #[test]
        fn only_sequence_feature_is_order_sensitive(pkts in arb_packets(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pkts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = extract_features(&pkts, Protocol::Tcp, &window()).unwrap();
            let b = extract_features(&shuffled, Protocol::Tcp, &window()).unwrap();
            let (va, vb) = (a.to_vector(), b.to_vector());
            for j in 0..NUM_FEATURES {
                if FEATURE_NAMES[j] == "seq_irregularity" {
                    continue;
                }
                prop_assert!((va[j] - vb[j]).abs() <= 1e-9 * (1.0 + va[j].abs()), "{}", FEATURE_NAMES[j]);
            }
        }

        #[test]
        fn learned_standardization_is_centered(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 2..50)) {
            let (z, p) = standardize(&rows, None).unwrap();
            for j in 0..3 {
                if p.constant[j] {
                    continue;
                }
                let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
                let (m, s) = mean_std(&col);
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
