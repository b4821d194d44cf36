//! `rcad` command-line front end.
//!
//! Every command reads a [`RunConfig`] (TOML file plus flag overrides),
//! writes its outputs under the configured output directory, prints the
//! written paths on stdout and exits with:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage or configuration error |
//! | 2 | file could not be read or written |
//! | 3 | malformed input (schema, parse, format) |
//! | 4 | training, model or attribution failure (includes dimension mismatch) |
//! | 5 | internal error |
//!
//! Failures print one line on stderr:
//! `rcad: error code=<n> kind=<kind>: <message>`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rcad::features::ModelProtocol;
use rcad::Error;

pub use crate::commands::{ModelBundle, SlotModels};
pub use crate::config::{ClassifierChoice, ReportFormat, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "rcad",
    version,
    about = "Two-stage detection and attribution of resource-constraint attacks"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProtocolArg {
    Tcp,
    Udp,
    General,
}

impl From<ProtocolArg> for ModelProtocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Tcp => ModelProtocol::Tcp,
            ProtocolArg::Udp => ModelProtocol::Udp,
            ProtocolArg::General => ModelProtocol::General,
        }
    }
}

fn parse_window_secs(s: &str) -> Result<u64, String> {
    let v: u64 = s.parse().map_err(|_| format!("not an integer: {s:?}"))?;
    if rcad::synthgen::WINDOW_CHOICES.contains(&v) {
        Ok(v)
    } else {
        Err(format!("must be one of {:?}", rcad::synthgen::WINDOW_CHOICES))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Window length in seconds (2, 3, 5 or 10).
    #[arg(long, global = true, value_parser = parse_window_secs)]
    pub window_secs: Option<u64>,
    /// Model slot to train and apply; both transport slots when omitted.
    #[arg(long, global = true, value_enum)]
    pub protocol: Option<ProtocolArg>,
    #[arg(long, global = true, value_enum)]
    pub classifier: Option<ClassifierChoice>,
    /// Also emit the literal false-alarm and misdetection formulas.
    #[arg(long, global = true)]
    pub paper_literal: bool,
    #[arg(long, global = true, value_enum)]
    pub report_format: Option<ReportFormat>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Packet input; `.csv` files are read as packet CSV, anything else as pcap.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub telemetry: Option<PathBuf>,
    #[arg(long, global = true)]
    pub schedule: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (pcap, packet CSV, telemetry, schedule, labels).
    Generate,
    /// Train detection models and write the model bundle.
    Train,
    /// Per-window stage-1 verdicts.
    Detect,
    /// Stage-2 energy/memory attribution of flagged windows.
    Attribute,
    /// Held-out evaluation report.
    Evaluate,
    /// K-fold cross-validation report.
    Crossval,
    /// Threshold sweep of detection rate against false-positive rate.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Detect => "detect",
            Command::Attribute => "attribute",
            Command::Evaluate => "evaluate",
            Command::Crossval => "crossval",
            Command::Sweep => "sweep",
        }
    }
}

/// Builds the effective configuration: file (or defaults), then flags.
pub fn effective_config(g: &GlobalArgs) -> rcad::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.window_secs {
        cfg.window_secs = w;
    }
    if let Some(p) = g.protocol {
        cfg.protocol = Some(p.into());
    }
    if let Some(c) = g.classifier {
        cfg.classifier = c;
    }
    if g.paper_literal {
        cfg.paper_literal = true;
    }
    if let Some(f) = g.report_format {
        cfg.report_format = f;
    }
    if let Some(d) = &g.out_dir {
        cfg.paths.out_dir = Some(d.clone());
    }
    if let Some(p) = &g.input {
        let is_csv = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            cfg.paths.packets_csv = Some(p.clone());
            cfg.paths.pcap = None;
        } else {
            cfg.paths.pcap = Some(p.clone());
            cfg.paths.packets_csv = None;
        }
    }
    if let Some(p) = &g.telemetry {
        cfg.paths.telemetry = Some(p.clone());
    }
    if let Some(p) = &g.schedule {
        cfg.paths.schedule = Some(p.clone());
    }
    if let Some(p) = &g.model {
        cfg.paths.model = Some(p.clone());
    }
    cfg.finalize()?;
    Ok(cfg)
}

/// Exit code and short kind tag for an error.
pub fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Config(_) => (EXIT_USAGE, "config"),
        Error::Parameter(_) => (EXIT_USAGE, "parameter"),
        Error::Io(_) => (EXIT_IO, "io"),
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => (EXIT_IO, "io"),
        Error::Schema(_) => (EXIT_SCHEMA, "schema"),
        Error::Parse(_) => (EXIT_SCHEMA, "parse"),
        Error::Format(_) => (EXIT_SCHEMA, "format"),
        Error::Truncated { .. } => (EXIT_SCHEMA, "truncated"),
        Error::UnsupportedLinkType(_) => (EXIT_SCHEMA, "link_type"),
        Error::Csv(_) => (EXIT_SCHEMA, "csv"),
        Error::Json(_) => (EXIT_SCHEMA, "json"),
        Error::EmptyInput(_) => (EXIT_SCHEMA, "empty_input"),
        Error::OutOfRange(_) => (EXIT_SCHEMA, "out_of_range"),
        Error::Shape { .. } => (EXIT_TRAINING, "shape"),
        Error::Model(_) => (EXIT_TRAINING, "model"),
        Error::EmptyTraining => (EXIT_TRAINING, "empty_training"),
        Error::DegenerateTraining(_) => (EXIT_TRAINING, "degenerate_training"),
        Error::InsufficientBaseline { .. } => (EXIT_TRAINING, "insufficient_baseline"),
        Error::SignatureOverlap { .. } => (EXIT_TRAINING, "signature_overlap"),
        Error::EmptyWindow => (EXIT_TRAINING, "empty_window"),
        Error::MissingTelemetry { .. } => (EXIT_TRAINING, "missing_telemetry"),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
                    eprintln!("rcad: error code={EXIT_USAGE} kind=usage: {}", one_line(first));
                    EXIT_USAGE
                }
            };
        }
    };
    let result =
        std::panic::catch_unwind(|| effective_config(&cli.global).and_then(|cfg| commands::execute(cli.command, &cfg)));
    match result {
        Ok(Ok(written)) => {
            for p in written {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Ok(Err(e)) => {
            let (code, kind) = classify(&e);
            eprintln!("rcad: error code={code} kind={kind}: {}", one_line(&e.to_string()));
            code
        }
        Err(_) => {
            eprintln!("rcad: error code={EXIT_INTERNAL} kind=internal: unexpected panic");
            EXIT_INTERNAL
        }
    }
}
