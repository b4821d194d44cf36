//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! The report is printed on every run of `cargo test`. The test fails if
//! any criterion fails.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rcad::classifiers::tree::Node;
use rcad::classifiers::{
    train_decision_tree, train_random_forest, train_svm, DecisionTree, ForestParams, ModelSpec, Samples, SvmParams,
    TrainedModel, TreeParams,
};
use rcad::features::ModelProtocol;
use rcad::ingest::{clean_dataset, parse_pcap, write_pcap, Endian, LabeledDataset, RawDataset};
use rcad::metrics::{crossval_report, sweep_thresholds, threshold_sweep, ConfusionMatrix, Metric};
use rcad::pipeline::{in_attack_period, intended_verdict, train_test_split};
use rcad::synthgen::{build_corpus, ScenarioConfig, SyntheticCorpus};
use rcad::telemetry::{attribute_or_other, AttributionConfig, TelemetryStore, Verdict, DEFAULT_MIN_BASELINE};
use rcad::traffic::{Label, PacketRecord, Protocol};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

#[derive(Default)]
struct Report {
    failures: Vec<usize>,
}

impl Report {
    fn run(&mut self, n: usize, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let o = f();
        let dt = t.elapsed();
        let in_time = limit.is_none_or(|l| dt < l);
        let pass = o.pass && in_time;
        let budget = limit.map_or_else(String::new, |l| format!(" of {}s", l.as_secs()));
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "criterion {n}: {} ({}; {:.2}s{budget}{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            dt.as_secs_f64(),
            if in_time { "" } else { "; over time limit" }
        );
        if !pass {
            self.failures.push(n);
        }
    }
}

fn r(m: Metric) -> Ratio<u64> {
    m.value().expect("defined metric")
}

fn identity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let one = Ratio::from_integer(1u64);
    let mut checked = 0;
    let mut bad = 0;
    while checked < 1000 {
        let m = ConfusionMatrix::new(
            rng.random_range(0..500),
            rng.random_range(0..500),
            rng.random_range(0..500),
            rng.random_range(0..500),
        );
        if m.tp + m.fn_ == 0 || m.fp + m.tn == 0 {
            continue;
        }
        checked += 1;
        let ok = r(m.accuracy()) + r(m.fdr()) == one
            && r(m.p_d()) + r(m.p_md()) == one
            && m.tpr() == m.recall()
            && m.recall() == m.p_d()
            && m.fpr() == m.p_fa();
        if !ok {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{checked} matrices, {bad} violations"))
}

fn table_row_identity() -> Outcome {
    // ACC 99.50, TPR 95.83, FPR 0, FDR 0.50 from tp=23, fn=1, fp=0, tn=176.
    let m = ConfusionMatrix::new(23, 176, 0, 1);
    let acc = r(m.accuracy());
    let fdr = r(m.fdr());
    let pass = acc == Ratio::new(199, 200)
        && fdr == Ratio::new(1, 200)
        && fdr == Ratio::from_integer(1) - acc
        && m.tpr().format_percent(2) == "95.83"
        && r(m.fpr()) == Ratio::from_integer(0);
    outcome(
        pass,
        format!(
            "acc {}%, fdr {}%, tpr {}%, fpr {}%",
            m.accuracy().format_percent(2),
            m.fdr().format_percent(2),
            m.tpr().format_percent(2),
            m.fpr().format_percent(2)
        ),
    )
}

/// Leaf reached by `x`, found by checking every root-to-leaf path's
/// constraints rather than walking the tree. Panics unless exactly one
/// path admits `x`.
fn exhaustive_leaf_class(t: &DecisionTree, x: &[f64]) -> usize {
    // (feature, threshold, went left) per split on the path.
    type Constraints = Vec<(usize, f64, bool)>;
    fn paths(t: &DecisionTree, i: usize, acc: &mut Constraints, out: &mut Vec<(Constraints, usize)>) {
        match &t.nodes[i] {
            Node::Leaf { class, .. } => out.push((acc.clone(), *class)),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                acc.push((*feature, *threshold, true));
                paths(t, *left, acc, out);
                acc.pop();
                acc.push((*feature, *threshold, false));
                paths(t, *right, acc, out);
                acc.pop();
            }
        }
    }
    let mut all = Vec::new();
    paths(t, 0, &mut Vec::new(), &mut all);
    let hits: Vec<usize> = all
        .iter()
        .filter(|(cons, _)| cons.iter().all(|&(f, th, le)| (x[f] <= th) == le))
        .map(|(_, c)| *c)
        .collect();
    assert_eq!(hits.len(), 1, "exactly one leaf path must admit the probe");
    hits[0]
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut probes = 0;
    for case in 0..50 {
        let n = rng.random_range(2..=64);
        let d = rng.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3i32..=3) as f64 * 0.5).collect())
            .collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let data = Samples::binary(x, y);
        let fp = ForestParams {
            n_trees: rng.random_range(1..=9),
            max_depth: rng.random_range(1..=6),
            min_leaf: 1,
            feature_subsample: None,
        };
        let forest = train_random_forest(&data, &fp, case).expect("forest");
        let tp = TreeParams {
            max_depth: rng.random_range(1..=6),
            min_leaf: 1,
            feature_subsample: None,
        };
        let tree = train_decision_tree(&data, &tp, &mut ChaCha8Rng::seed_from_u64(case)).expect("tree");
        for _ in 0..20 {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            probes += 1;
            let attacked_votes = forest
                .trees
                .iter()
                .filter(|t| exhaustive_leaf_class(t, &p) == 1)
                .count();
            let brute = usize::from(2 * attacked_votes >= forest.trees.len());
            if forest.predict(&p) != brute {
                mismatches += 1;
            }
            if tree.predict(&p) != exhaustive_leaf_class(&tree, &p) {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("50 datasets, {probes} probes, {mismatches} mismatches"),
    )
}

fn svm_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..200 {
        let c = i % 2;
        let mu = if c == 1 { 2.0 } else { -2.0 };
        x.push(vec![mu + noise.sample(&mut rng), mu + noise.sample(&mut rng)]);
        y.push(c);
    }
    let data = Samples::binary(x, y);
    let m = train_svm(&data, &SvmParams::default(), 4).expect("svm");
    let correct = data.x.iter().zip(&data.y).filter(|(x, &y)| m.predict(x) == y).count();
    let acc = correct as f64 / data.len() as f64;
    let h = &m.objective_history;
    let tol = 1e-6 * h[0];
    let monotone = h.windows(2).all(|w| w[1] <= w[0] + tol);
    outcome(
        acc >= 0.95 && monotone,
        format!(
            "training accuracy {acc:.4}, objective {:.4} -> {:.4} over {} epochs, non-increasing: {monotone}",
            h[0],
            h[h.len() - 1],
            h.len() - 1
        ),
    )
}

fn acceptance_corpus() -> SyntheticCorpus {
    let cfg = ScenarioConfig {
        seed: 42,
        devices: 5,
        duration_s: 600,
        window_secs: 2,
        ..ScenarioConfig::default()
    };
    build_corpus(&cfg).expect("acceptance corpus")
}

struct Split {
    train: LabeledDataset,
    test: LabeledDataset,
}

fn split(data: &LabeledDataset, seed: u64) -> Split {
    let (tr, te) = train_test_split(data.len(), 0.7, seed).unwrap();
    Split {
        train: data.subset(&tr),
        test: data.subset(&te),
    }
}

fn rf_spec() -> ModelSpec {
    ModelSpec::RandomForest(ForestParams {
        n_trees: 25,
        ..ForestParams::default()
    })
}

fn svm_spec() -> ModelSpec {
    ModelSpec::LinearSvm(SvmParams {
        c: 1.0,
        ..SvmParams::default()
    })
}

fn table_one_analogue(data: &LabeledDataset) -> Outcome {
    let s = split(data, 42);
    let mut pass = true;
    let mut parts = Vec::new();
    for slot in [ModelProtocol::Tcp, ModelProtocol::Udp] {
        let rf = TrainedModel::train(&rf_spec(), &s.train, slot, 42).unwrap();
        let svm = TrainedModel::train(&svm_spec(), &s.train, slot, 42).unwrap();
        let rf_m = rf.evaluate(&s.test).unwrap();
        let svm_m = svm.evaluate(&s.test).unwrap();
        let (ra, sa) = (r(rf_m.accuracy()), r(svm_m.accuracy()));
        let (rfpr, sfpr) = (r(rf_m.fpr()), r(svm_m.fpr()));
        pass &= ra >= sa && ra >= Ratio::new(99, 100) && sa >= Ratio::new(94, 100) && rfpr <= sfpr;
        parts.push(format!(
            "{}: RF acc {} fpr {} vs SVM acc {} fpr {}",
            slot.as_str(),
            rf_m.accuracy(),
            rf_m.fpr(),
            svm_m.accuracy(),
            svm_m.fpr()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn fold_analogue(data: &LabeledDataset) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for slot in [ModelProtocol::Tcp, ModelProtocol::Udp] {
        let rep = crossval_report(data, &rf_spec(), slot, 5, 42).unwrap();
        let spread = rep.spread().unwrap_or(f64::INFINITY);
        pass &= spread <= 0.02 && r(rep.mean_accuracy) >= Ratio::new(98, 100);
        let folds: Vec<String> = rep.fold_accuracies.iter().map(|a| a.to_string()).collect();
        parts.push(format!(
            "{}: folds [{}], mean {}, spread {spread:.4}",
            slot.as_str(),
            folds.join(", "),
            rep.mean_accuracy
        ));
    }
    outcome(pass, parts.join("; "))
}

fn sweep_monotone(data: &LabeledDataset) -> Outcome {
    let s = split(data, 42);
    let mut pass = true;
    let mut parts = Vec::new();
    for slot in [ModelProtocol::Tcp, ModelProtocol::Udp] {
        let svm = TrainedModel::train(&svm_spec(), &s.train, slot, 42).unwrap();
        let mut scores = Vec::new();
        let mut truths = Vec::new();
        for (f, l) in s.test.features.iter().zip(&s.test.labels) {
            if slot.accepts(f.protocol) {
                scores.push(svm.window_score(f).unwrap());
                truths.push(*l);
            }
        }
        let pts = threshold_sweep(&scores, &truths, &sweep_thresholds(&scores, 20)).unwrap();
        let mono = pts
            .windows(2)
            .all(|w| r(w[1].fpr) <= r(w[0].fpr) && r(w[1].detection_rate) <= r(w[0].detection_rate));
        let dominates = pts.iter().all(|p| r(p.detection_rate) >= r(p.fpr));
        pass &= pts.len() == 20 && mono && dominates;
        parts.push(format!(
            "{}: {} thresholds, monotone {mono}, dr >= fpr {dominates}",
            slot.as_str(),
            pts.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn attribution_correctness(corpus: &SyntheticCorpus, data: &LabeledDataset) -> Outcome {
    let s = split(data, 42);
    let truth = corpus.truth();
    let models: BTreeMap<Protocol, TrainedModel> =
        [(Protocol::Tcp, ModelProtocol::Tcp), (Protocol::Udp, ModelProtocol::Udp)]
            .into_iter()
            .map(|(p, slot)| (p, TrainedModel::train(&rf_spec(), &s.train, slot, 42).unwrap()))
            .collect();
    let store = TelemetryStore::new(&corpus.telemetry);
    let cfg = AttributionConfig::default();
    let mut flagged = 0usize;
    let mut normal_period_flagged = 0usize;
    let mut wrong_family = 0usize;
    let mut intended_total = 0usize;
    let mut exact = 0usize;
    let mut missed = 0usize;
    for f in &data.features {
        let stage1 = models[&f.protocol].predict_window(f).unwrap();
        let intended = intended_verdict(f, &truth);
        if stage1 != Label::Attacked {
            if intended.is_some() {
                missed += 1;
                intended_total += 1;
            }
            continue;
        }
        flagged += 1;
        if !in_attack_period(&f.window, &truth) {
            normal_period_flagged += 1;
        }
        let profile = store.baseline(&f.window.device_id, DEFAULT_MIN_BASELINE).unwrap();
        let res = attribute_or_other(f, &profile, store.in_window(&f.window), &cfg, None).unwrap();
        if let Some(v) = intended {
            intended_total += 1;
            if res.verdict == v {
                exact += 1;
            }
            let family_ok = res.missing_telemetry
                || match v {
                    Verdict::EnergyAttack => res.verdict.implicates_energy(),
                    Verdict::MemoryAttack => res.verdict.implicates_memory(),
                    _ => true,
                };
            if !family_ok {
                wrong_family += 1;
            }
        }
    }
    let rate = exact as f64 / intended_total.max(1) as f64;
    outcome(
        wrong_family == 0 && normal_period_flagged == 0 && rate >= 0.95,
        format!(
            "{flagged} flagged, {normal_period_flagged} from normal periods, {wrong_family} wrong family, \
             {missed} attack windows missed by stage 1, exact verdict {exact}/{intended_total} ({rate:.4})"
        ),
    )
}

fn random_packet(rng: &mut ChaCha8Rng) -> PacketRecord {
    let protocol = match rng.random_range(0..3) {
        0 => Protocol::Tcp,
        1 => Protocol::Udp,
        _ => Protocol::Other,
    };
    let transport = protocol != Protocol::Other;
    PacketRecord {
        timestamp: rng.random_range(0..4),
        src_ip: rng.random_range(0..3),
        dst_ip: rng.random_range(0..3),
        src_port: if transport { rng.random_range(0..3) } else { 0 },
        dst_port: if transport { rng.random_range(0..3) } else { 0 },
        protocol,
        length: rng.random_range(0..3),
        ip_id: rng.random_range(0..2),
        tcp_seq: (protocol == Protocol::Tcp).then(|| rng.random_range(0..2)),
    }
}

fn ingest_round_trip(corpus: &SyntheticCorpus) -> Outcome {
    let bytes = write_pcap(&corpus.packets, Endian::Little, 64).unwrap();
    let parsed = parse_pcap(&bytes).unwrap();
    let exact = parsed.rows == corpus.packets && parsed.total_dropped() == 0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut not_idempotent = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..40);
        let rows: Vec<PacketRecord> = (0..n).map(|_| random_packet(&mut rng)).collect();
        let once = clean_dataset(RawDataset::from_rows(rows));
        let twice = clean_dataset(once.clone());
        if twice.rows != once.rows {
            not_idempotent += 1;
        }
    }
    outcome(
        exact && not_idempotent == 0,
        format!(
            "{} packets round-tripped field-exact: {exact}; clean_dataset non-idempotent on {not_idempotent}/1000",
            corpus.packets.len()
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            );
        }
    }
    out
}

fn run_all(bin: &str, cfg: &Path) -> Result<(), String> {
    let dir = cfg.parent().unwrap();
    let corpus_cfg = dir.join("corpus.toml");
    for cmd in [
        "generate",
        "train",
        "detect",
        "attribute",
        "evaluate",
        "crossval",
        "sweep",
    ] {
        let config = if cmd == "generate" { cfg } else { corpus_cfg.as_path() };
        let out = Command::new(bin)
            .arg(cmd)
            .arg("--config")
            .arg(config)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rcad");
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 7\nclassifier = \"auto\"\ntree_counts = [5, 10]\n\n[model]\nn_trees = 10\n\n\
         [scenario]\ndevices = 3\nduration_s = 300\n\n[paths]\nout_dir = \".\"\n",
    )
    .unwrap();
    if let Err(e) = run_all(bin, &cfg) {
        return outcome(false, format!("first run failed: {e}"));
    }
    let first = snapshot(tmp.path());
    if let Err(e) = run_all(bin, &cfg) {
        return outcome(false, format!("second run failed: {e}"));
    }
    let second = snapshot(tmp.path());
    let differing: Vec<&String> = first.keys().filter(|k| second.get(*k) != first.get(*k)).collect();
    let pass = differing.is_empty() && first.len() == second.len();
    outcome(
        pass,
        format!(
            "7 commands run twice, {} output files compared, {} differ{}",
            first.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(": {differing:?}")
            }
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut rep = Report::default();
    rep.run(1, Some(Duration::from_secs(1)), identity_suite);
    rep.run(2, None, table_row_identity);
    rep.run(3, Some(Duration::from_secs(10)), oracle_equivalence);
    rep.run(4, Some(Duration::from_secs(5)), svm_sanity);

    let t = Instant::now();
    let corpus = acceptance_corpus();
    let data = corpus.dataset().unwrap();
    let build = t.elapsed();
    let limit5 = Duration::from_secs(60).saturating_sub(build);
    rep.run(5, Some(limit5), || {
        let mut o = table_one_analogue(&data);
        o.detail = format!("corpus built in {:.2}s; {}", build.as_secs_f64(), o.detail);
        o
    });
    rep.run(6, Some(Duration::from_secs(120)), || fold_analogue(&data));
    rep.run(7, Some(Duration::from_secs(10)), || sweep_monotone(&data));
    rep.run(8, Some(Duration::from_secs(30)), || {
        attribution_correctness(&corpus, &data)
    });
    rep.run(9, Some(Duration::from_secs(10)), || ingest_round_trip(&corpus));
    rep.run(10, None, determinism);

    assert!(rep.failures.is_empty(), "failed criteria: {:?}", rep.failures);
}
