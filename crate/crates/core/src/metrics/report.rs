//! Report emission.
//!
//! Evaluation CSV columns (one row per model × protocol × device × fold):
//!
//! ```text
//! model,protocol,device,fold,tp,tn,fp,fn,acc,tpr,fpr,fdr,precision,recall,f1,
//! p_d,p_fa,p_md[,p_fa_literal,p_md_literal],fp_per_second
//! ```
//!
//! `device` is `all` for pooled rows and `fold` is `all` outside
//! cross-validation. Ratios are printed with 4 decimals (round half to
//! even) or `UNDEFINED`. Sweep CSV columns are `threshold,fpr,detection_rate`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{fp_rate_per_second, ConfusionMatrix, CrossValReport, Metric, SweepPoint};

/// One scored slice of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub protocol: String,
    pub device: String,
    pub fold: Option<usize>,
    pub confusion: ConfusionMatrix,
    /// Monitored seconds covered by the scored windows.
    pub duration_s: Option<f64>,
}

impl EvalRow {
    pub fn fp_per_second(&self) -> Result<Option<f64>> {
        self.duration_s
            .map(|d| fp_rate_per_second(&self.confusion, d))
            .transpose()
    }
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "UNDEFINED".to_string(), |x| format!("{x:.4}"))
}

pub fn eval_csv_header(paper_literal: bool) -> Vec<&'static str> {
    let mut h = vec![
        "model",
        "protocol",
        "device",
        "fold",
        "tp",
        "tn",
        "fp",
        "fn",
        "acc",
        "tpr",
        "fpr",
        "fdr",
        "precision",
        "recall",
        "f1",
        "p_d",
        "p_fa",
        "p_md",
    ];
    if paper_literal {
        h.extend(["p_fa_literal", "p_md_literal"]);
    }
    h.push("fp_per_second");
    h
}

pub fn write_eval_csv<W: Write>(out: W, rows: &[EvalRow], paper_literal: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(eval_csv_header(paper_literal))?;
    for r in rows {
        let m = &r.confusion;
        let mut rec = vec![
            r.model.clone(),
            r.protocol.clone(),
            r.device.clone(),
            r.fold.map_or_else(|| "all".to_string(), |f| f.to_string()),
            m.tp.to_string(),
            m.tn.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
        ];
        for metric in [
            m.accuracy(),
            m.tpr(),
            m.fpr(),
            m.fdr(),
            m.precision(),
            m.recall(),
            m.f1(),
            m.p_d(),
            m.p_fa(),
            m.p_md(),
        ] {
            rec.push(metric.to_string());
        }
        if paper_literal {
            rec.push(m.p_fa_literal().to_string());
            rec.push(m.p_md_literal().to_string());
        }
        rec.push(fmt_rate(r.fp_per_second()?));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn pct(m: Metric) -> String {
    if m.is_defined() {
        format!("{}%", m.format_percent(2))
    } else {
        m.to_string()
    }
}

/// Human-readable evaluation document with a detection-metrics table
/// (ACC, TPR, FPR, FDR per model × protocol) and a probability table
/// (ACC, PoD, PoMD, PoFA, FP/s per model × device).
pub fn write_eval_text<W: Write>(mut out: W, title: &str, rows: &[EvalRow], paper_literal: bool) -> Result<()> {
    writeln!(out, "{title}")?;
    writeln!(out)?;
    writeln!(out, "Detection performance (model x protocol)")?;
    writeln!(
        out,
        "{:<6} {:<8} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "model", "protocol", "ACC", "TPR", "FPR", "FDR", "windows"
    )?;
    for r in rows.iter().filter(|r| r.device == "all" && r.fold.is_none()) {
        let m = &r.confusion;
        writeln!(
            out,
            "{:<6} {:<8} {:>10} {:>10} {:>10} {:>10} {:>8}",
            r.model,
            r.protocol,
            pct(m.accuracy()),
            pct(m.tpr()),
            pct(m.fpr()),
            pct(m.fdr()),
            m.n()
        )?;
    }
    writeln!(out)?;
    writeln!(out, "Detection probabilities (model x device)")?;
    let mut head = format!(
        "{:<6} {:<8} {:<10} {:>10} {:>10} {:>10} {:>10}",
        "model", "protocol", "device", "ACC", "PoD", "PoMD", "PoFA"
    );
    if paper_literal {
        head.push_str(&format!(" {:>12} {:>12}", "PoMD(lit)", "PoFA(lit)"));
    }
    head.push_str(&format!(" {:>10}", "FP(s)"));
    writeln!(out, "{head}")?;
    for r in rows.iter().filter(|r| r.fold.is_none()) {
        let m = &r.confusion;
        let mut line = format!(
            "{:<6} {:<8} {:<10} {:>10} {:>10} {:>10} {:>10}",
            r.model,
            r.protocol,
            r.device,
            pct(m.accuracy()),
            pct(m.p_d()),
            pct(m.p_md()),
            pct(m.p_fa())
        );
        if paper_literal {
            line.push_str(&format!(" {:>12} {:>12}", pct(m.p_md_literal()), pct(m.p_fa_literal())));
        }
        line.push_str(&format!(" {:>10}", fmt_rate(r.fp_per_second()?)));
        writeln!(out, "{line}")?;
    }
    if paper_literal {
        writeln!(out)?;
        writeln!(
            out,
            "(lit) columns use PoFA = FP/(TN+FN) and PoMD = FN/(TN+FP); the undefined T_F symbol is read as TN."
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "detection_rate"])?;
    for p in points {
        w.write_record([
            format!("{:.6}", p.threshold + 0.0),
            p.fpr.to_string(),
            p.detection_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One cross-validated model for [`write_crossval_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValEntry {
    pub model: String,
    pub protocol: String,
    pub report: CrossValReport,
}

/// Per-fold accuracy rows of every entry, each followed by a `mean` row
/// whose counts are the fold totals.
pub fn write_crossval_csv<W: Write>(out: W, entries: &[CrossValEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "protocol", "fold", "tp", "tn", "fp", "fn", "accuracy"])?;
    for e in entries {
        let r = &e.report;
        for (i, (acc, m)) in r.fold_accuracies.iter().zip(&r.fold_confusions).enumerate() {
            w.write_record([
                e.model.clone(),
                e.protocol.clone(),
                i.to_string(),
                m.tp.to_string(),
                m.tn.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                acc.to_string(),
            ])?;
        }
        let mut total = ConfusionMatrix::default();
        r.fold_confusions.iter().for_each(|m| total.add(m));
        w.write_record([
            e.model.clone(),
            e.protocol.clone(),
            "mean".to_string(),
            total.tp.to_string(),
            total.tn.to_string(),
            total.fp.to_string(),
            total.fn_.to_string(),
            r.mean_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(device: &str) -> EvalRow {
        EvalRow {
            model: "RF".into(),
            protocol: "tcp".into(),
            device: device.into(),
            fold: None,
            confusion: ConfusionMatrix::new(45, 50, 2, 3),
            duration_s: Some(200.0),
        }
    }

    #[test]
    fn csv_shape() {
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &[row("all")], false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "RF,tcp,all,all,45,50,2,3,0.9500,0.9375,0.0385,0.0500,0.9574,0.9375,0.9474,0.9375,0.0385,0.0625,0.0100"
        );
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &[row("all")], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&eval_csv_header(true).join(",")));
        // literal: 2 / (50 + 3), 3 / (50 + 2)
        assert!(text.contains(",0.0377,0.0577,"));
    }

    #[test]
    fn text_has_both_tables() {
        let mut buf = Vec::new();
        write_eval_text(&mut buf, "eval", &[row("all"), row("dev-0")], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for col in ["ACC", "TPR", "FPR", "FDR", "PoD", "PoMD", "PoFA", "FP(s)", "95.00%"] {
            assert!(text.contains(col), "{col}");
        }
    }

    #[test]
    fn crossval_csv_rows() {
        let report = CrossValReport {
            k: 2,
            seed: 0,
            fold_accuracies: vec![Metric::ratio(1, 1), Metric::ratio(1, 2)],
            fold_confusions: vec![ConfusionMatrix::new(1, 1, 0, 0), ConfusionMatrix::new(1, 0, 1, 0)],
            mean_accuracy: Metric::ratio(3, 4),
        };
        let entry = CrossValEntry {
            model: "RF".into(),
            protocol: "udp".into(),
            report,
        };
        let mut buf = Vec::new();
        write_crossval_csv(&mut buf, &[entry]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().collect::<Vec<_>>(),
            vec![
                "model,protocol,fold,tp,tn,fp,fn,accuracy",
                "RF,udp,0,1,1,0,0,1.0000",
                "RF,udp,1,1,0,1,0,0.5000",
                "RF,udp,mean,2,1,1,0,0.7500",
            ]
        );
    }

    #[test]
    fn sweep_csv_rows() {
        let pts = vec![SweepPoint {
            threshold: 0.5,
            fpr: Metric::ratio(1, 3),
            detection_rate: Metric::UNDEFINED,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &pts).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "threshold,fpr,detection_rate\n0.500000,0.3333,UNDEFINED\n"
        );
    }
}
