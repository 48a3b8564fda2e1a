//! `tierguard` command-line pipeline.
//!
//! Exit codes: 0 success, 2 configuration or input-format error, 3 I/O
//! error, 4 model trained but incomplete, 5 attack found with
//! `--fail-on-attack`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use tierguard_core::detect::ReportDocument;
use tierguard_core::eval::{evaluate, session_labels};
use tierguard_core::simulate::{builtin_profile, AppProfile};
use tierguard_core::traffic::render_traffic_log;
use tierguard_core::{
    deserialize_model, detect_all, generate_sessions, group_by_session, inject_attacks, parse_traffic_log,
    serialize_model, train, write_attack_log, AttackKind, AttackSpec, ModelError, ParseMode, StaticExtensions,
    Threshold, TrafficError, TrafficEvent,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INCOMPLETE: i32 = 4;
pub const EXIT_ATTACK: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "tierguard", version, about = "Session-correlated HTTP/SQL intrusion detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled multitier traffic, optionally with injected attacks.
    Simulate(SimulateArgs),
    /// Learn a mapping model from benign traffic.
    Train(TrainArgs),
    /// Classify sessions against a model and write an attack log.
    Detect(DetectArgs),
    /// Score a detection report against labeled traffic.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ParseFlags {
    /// Reject malformed lines and unknown fields (default).
    #[arg(long, overrides_with = "lenient")]
    pub strict: bool,
    /// Skip malformed lines with a warning.
    #[arg(long)]
    pub lenient: bool,
}

impl ParseFlags {
    fn mode(&self) -> ParseMode {
        if self.lenient && !self.strict {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Application profile document (JSON).
    #[arg(long, conflicts_with = "builtin_profile")]
    pub profile: Option<PathBuf>,
    /// Built-in profile: `login` (default) or `login-admin`.
    #[arg(long, num_args = 0..=1, default_missing_value = "login")]
    pub builtin_profile: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub sessions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attack class to inject; repeat for several classes.
    #[arg(long = "attack")]
    pub attacks: Vec<String>,
    /// Fraction of sessions corrupted per attack class.
    #[arg(long, default_value_t = 0.1)]
    pub attack_rate: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub traffic: Option<PathBuf>,
    /// Where to write the model document.
    #[arg(long, visible_alias = "out")]
    pub model: Option<PathBuf>,
    /// A mapping needs strictly more than this many sessions of evidence.
    #[arg(long, default_value_t = 1)]
    pub threshold: u64,
    /// Static-file suffixes, comma separated.
    #[arg(long = "static-ext", value_delimiter = ',')]
    pub static_ext: Vec<String>,
    #[command(flatten)]
    pub parse: ParseFlags,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub traffic: Option<PathBuf>,
    /// Detection report (JSON); the attack log goes beside it unless `--out` is given.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Attack log path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 5 when any session is suspicious.
    #[arg(long)]
    pub fail_on_attack: bool,
    #[command(flatten)]
    pub parse: ParseFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Labeled traffic the report was produced from.
    #[arg(long)]
    pub traffic: Option<PathBuf>,
    /// Metrics document; defaults to beside the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("tierguard: {err}");
            err.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| config(format!("missing required flag --{flag}")))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_with<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    body(&mut writer)
        .and_then(|_| writer.flush())
        .map_err(|e| CliError::io(path, e))
}

fn traffic_error(path: &Path, err: TrafficError) -> CliError {
    match err {
        TrafficError::Io(source) => CliError::io(path, source),
        other => config(format!("{}: {other}", path.display())),
    }
}

pub fn read_traffic(path: &Path, mode: ParseMode) -> Result<Vec<TrafficEvent>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let parsed = parse_traffic_log(BufReader::new(file), mode).map_err(|e| traffic_error(path, e))?;
    for rejected in &parsed.rejected {
        eprintln!("tierguard: warning: {}: skipped {rejected}", path.display());
    }
    Ok(parsed.events)
}

/// `report.json` → `report.<suffix>` in the same directory.
pub fn beside(report: &Path, suffix: &str) -> PathBuf {
    report.with_extension(suffix)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let out = required(&args.out, "out")?;
    let profile = match (&args.profile, &args.builtin_profile) {
        (Some(path), _) => AppProfile::from_json(&read_text(path)?).map_err(|e| config(e.to_string()))?,
        (None, Some(name)) => builtin_profile(name).ok_or_else(|| config(format!("unknown built-in profile {name:?}")))?,
        (None, None) => tierguard_core::builtin_login_profile(),
    };
    let attacks = args
        .attacks
        .iter()
        .map(|a| a.parse::<AttackKind>().map_err(config))
        .collect::<Result<Vec<_>, _>>()?;

    let mut events = generate_sessions(&profile, args.sessions, args.seed).map_err(|e| config(e.to_string()))?;
    for (i, kind) in attacks.into_iter().enumerate() {
        let spec = AttackSpec::new(kind, args.attack_rate).map_err(|e| config(e.to_string()))?;
        let seed = args.seed.wrapping_add(i as u64 + 1);
        events = inject_attacks(&events, &spec, seed).map_err(|e| config(e.to_string()))?;
    }
    write_with(out, |w| render_traffic_log(&events, w))?;
    Ok(EXIT_OK)
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let traffic = required(&args.traffic, "traffic")?;
    let model_path = required(&args.model, "model")?;
    let threshold = Threshold::new(args.threshold).map_err(|e| config(e.to_string()))?;
    let exts = if args.static_ext.is_empty() {
        StaticExtensions::default()
    } else {
        StaticExtensions::new(&args.static_ext)
    };

    let events = read_traffic(traffic, args.parse.mode())?;
    let traces = group_by_session(&events).map_err(|e| traffic_error(traffic, e))?;
    let (model, report) = train(&traces, &exts, threshold).map_err(|e| config(e.to_string()))?;
    let document = serialize_model(&model);
    fs::write(model_path, document).map_err(|e| CliError::io(model_path, e))?;
    println!("trained on {} session(s), t = {threshold}", traces.len());
    println!("{report}");
    Ok(if report.complete { EXIT_OK } else { EXIT_INCOMPLETE })
}

pub fn cmd_detect(args: &DetectArgs) -> Result<i32, CliError> {
    let model_path = required(&args.model, "model")?;
    let traffic = required(&args.traffic, "traffic")?;
    let report_path = required(&args.report, "report")?;
    let log_path = args.out.clone().unwrap_or_else(|| beside(report_path, "attacks.jsonl"));

    let model = deserialize_model(&read_text(model_path)?).map_err(|e: ModelError| {
        config(format!("{}: {e}", model_path.display()))
    })?;
    let events = read_traffic(traffic, args.parse.mode())?;
    let traces = group_by_session(&events).map_err(|e| traffic_error(traffic, e))?;
    let report = detect_all(&model, &traces);

    write_with(&log_path, |w| write_attack_log(&report, w))?;
    let document = ReportDocument::from_report(&report);
    write_with(report_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &document)?;
        w.write_all(b"\n")
    })?;

    let totals = report.totals;
    println!(
        "sessions={} benign={} suspicious={} (missing_mapped_query={} unknown_request={} unmarked_query={})",
        totals.sessions,
        totals.benign,
        totals.suspicious,
        totals.missing_mapped_query,
        totals.unknown_request,
        totals.unmarked_query
    );
    Ok(if args.fail_on_attack && totals.suspicious > 0 {
        EXIT_ATTACK
    } else {
        EXIT_OK
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32, CliError> {
    let report_path = required(&args.report, "report")?;
    let traffic = required(&args.traffic, "traffic")?;
    let metrics_path = args.out.clone().unwrap_or_else(|| beside(report_path, "metrics.json"));

    let document: ReportDocument = serde_json::from_str(&read_text(report_path)?)
        .map_err(|e| config(format!("{}: {e}", report_path.display())))?;
    let events = read_traffic(traffic, ParseMode::Strict)?;
    let labels = session_labels(&events).map_err(|e| config(e.to_string()))?;
    let metrics = evaluate(&labels, &document.statuses()).map_err(|e| config(e.to_string()))?;

    println!("{metrics}");
    write_with(&metrics_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &metrics)?;
        w.write_all(b"\n")
    })?;
    Ok(EXIT_OK)
}
