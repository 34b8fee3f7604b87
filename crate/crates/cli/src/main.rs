//! `softalign`: drive a soft-alignment session from the command line.
//!
//! Exit codes: 0 ok, 1 usage, 2 parse/validation, 3 provider, 4 gating.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use softalign_core::canonical::{to_canonical_string, to_canonical_value};
use softalign_core::session::{
    describe_verdict, Clock, ErrorCode, InitOptions, ParseReport, ProviderKind, ProviderSettings,
    RunOptions, Session, SessionConfig, SessionError, StageStatus, STAGE_NAMES,
};
use softalign_core::verifier::Verdict;
use softalign_core::Diagnostic;
use softalign_service::{ApiEnvelope, AppState};

#[derive(Debug, Parser)]
#[command(
    name = "softalign",
    version,
    about = "Staged, human-confirmed soft alignment of two SysML v2 textual models"
)]
struct Cli {
    /// Output format for results and errors.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderChoice {
    Mock,
    Http,
    /// Heuristic engine only.
    None,
}

impl From<ProviderChoice> for ProviderKind {
    fn from(c: ProviderChoice) -> Self {
        match c {
            ProviderChoice::Mock => ProviderKind::Mock,
            ProviderChoice::Http => ProviderKind::Http,
            ProviderChoice::None => ProviderKind::None,
        }
    }
}

/// Provider selection. The API key is read from the environment variable
/// named by `--api-key-env`, never from a flag.
#[derive(Debug, Clone, Args)]
struct ProviderArgs {
    #[arg(long, value_enum)]
    provider: Option<ProviderChoice>,
    /// Base URL of an OpenAI-compatible API (http provider).
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent to the http provider.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Extra attempts after a schema-invalid provider reply.
    #[arg(long)]
    retries: Option<u32>,
}

impl ProviderArgs {
    fn is_set(&self) -> bool {
        self.provider.is_some()
            || self.base_url.is_some()
            || self.model.is_some()
            || self.api_key_env.is_some()
            || self.retries.is_some()
    }

    fn apply(&self, settings: &mut ProviderSettings) {
        if let Some(p) = self.provider {
            settings.kind = p.into();
        }
        if let Some(u) = &self.base_url {
            settings.http.base_url = u.clone();
        }
        if let Some(m) = &self.model {
            settings.http.model = m.clone();
        }
        if let Some(e) = &self.api_key_env {
            settings.http.api_key_env = e.clone();
        }
        if let Some(r) = self.retries {
            settings.retries = r;
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SessionArg {
    /// Session directory.
    #[arg(long, default_value = ".")]
    session: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a session from an OEM and a supplier model and run Stage 0.
    Init {
        #[arg(long)]
        oem: PathBuf,
        #[arg(long)]
        supplier: PathBuf,
        /// Session directory to create (must be absent or empty).
        #[arg(long)]
        out: PathBuf,
        /// Extension library; the bundled one is used when omitted.
        #[arg(long)]
        library: Option<PathBuf>,
        /// JSON object mapping OEM qualified names to uids.
        #[arg(long)]
        oem_uids: Option<PathBuf>,
        /// JSON object mapping supplier qualified names to uids.
        #[arg(long)]
        supplier_uids: Option<PathBuf>,
        /// Disable the heuristic engine (the provider alone proposes).
        #[arg(long)]
        no_heuristic: bool,
        /// Candidate score threshold in [0, 1].
        #[arg(long)]
        threshold: Option<f64>,
        /// Free-text focus forwarded to the provider.
        #[arg(long)]
        focus: Option<String>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run (or re-run) one stage.
    Run {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long)]
        stage: usize,
        /// Refuse unless the stage has been run exactly this many times.
        #[arg(long)]
        expected_attempts: Option<u32>,
        /// Provider overrides for this run only.
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Confirm a stage that awaits confirmation.
    Confirm {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        message: Option<String>,
        /// Confirm Stage 5 even though some eligible elements are unprocessed.
        #[arg(long)]
        acknowledge_unprocessed: bool,
    },
    /// Reject a stage; the message is kept and sent with the next provider request.
    Reject {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        message: String,
    },
    /// Reopen a confirmed stage; every later stage returns to Pending.
    Reopen {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        message: Option<String>,
    },
    /// Record verdicts on Stage-3 mappings.
    Verdict {
        #[command(flatten)]
        session: SessionArg,
        /// Decide every pending mapping by greedy one-to-one assignment.
        #[arg(long, conflicts_with_all = ["id", "accept", "reject", "modify"])]
        auto: bool,
        /// Mapping id, e.g. map-0123456789.
        #[arg(long, required_unless_present = "auto")]
        id: Option<String>,
        #[arg(long, conflicts_with_all = ["reject", "modify"])]
        accept: bool,
        #[arg(long, conflicts_with = "modify")]
        reject: bool,
        /// Override the proposed tag, e.g. FullyUnmatched.
        #[arg(long)]
        modify: Option<String>,
        #[arg(long, default_value = "user")]
        actor: String,
    },
    /// Show the stage table.
    Status {
        #[command(flatten)]
        session: SessionArg,
    },
    /// Run Stage 6 if needed and optionally copy the bundle elsewhere.
    Export {
        #[command(flatten)]
        session: SessionArg,
        /// Additional directory to write the bundle to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API for this session.
    Serve {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
    },
}

/// What a command produced: a line of text for humans and a JSON value for
/// `--format json`.
struct Output {
    text: String,
    data: Value,
}

impl Output {
    fn new(text: impl Into<String>, data: &impl serde::Serialize) -> Self {
        Output {
            text: text.into(),
            data: to_canonical_value(data),
        }
    }
}

enum Failure {
    Session(SessionError),
    /// Stage 0 failed during init: the session exists but its inputs do not parse.
    InitParse {
        dir: PathBuf,
        error: SessionError,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(ErrorCode::Usage.exit_code() as u8),
            };
        }
    };
    let format = cli.format;
    match execute(cli.command) {
        Ok(out) => {
            match format {
                Format::Text => println!("{}", out.text),
                Format::Json => print!("{}", to_canonical_string(&ApiEnvelope::success(out.data))),
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let (err, context) = match failure {
                Failure::Session(e) => (e, None),
                Failure::InitParse { dir, error } => (error, Some(dir)),
            };
            match format {
                Format::Text => {
                    let mut diag = Diagnostic::error(
                        &format!("session.{}", err.code().as_str()),
                        None,
                        err.to_string(),
                    );
                    if let Some(dir) = context {
                        diag.message
                            .push_str(&format!(" (session created at {})", dir.display()));
                    }
                    eprintln!("{diag}");
                    for d in err.diagnostics() {
                        eprintln!("  {d}");
                    }
                }
                Format::Json => print!("{}", to_canonical_string(&ApiEnvelope::from_error(&err))),
            }
            ExitCode::from(err.code().exit_code() as u8)
        }
    }
}

/// Parse diagnostics with the originating file prefixed to each message.
fn located(report: &ParseReport, sources: &[String; 2]) -> Vec<Diagnostic> {
    let inputs = [
        (&report.oem, sources[0].as_str()),
        (&report.supplier, sources[1].as_str()),
        (&report.library, "library"),
    ];
    let mut out: Vec<Diagnostic> = inputs
        .iter()
        .flat_map(|(analysis, file)| {
            analysis.diagnostics.iter().map(move |d| Diagnostic {
                message: format!("{file}: {}", d.message),
                ..d.clone()
            })
        })
        .collect();
    out.extend(report.session.iter().cloned());
    out
}

fn open(arg: &SessionArg) -> Result<Session, Failure> {
    Session::open(&arg.session, Clock::from_env()).map_err(Failure::Session)
}

fn execute(command: Command) -> Result<Output, Failure> {
    use Failure::Session as S;
    match command {
        Command::Init {
            oem,
            supplier,
            out,
            library,
            oem_uids,
            supplier_uids,
            no_heuristic,
            threshold,
            focus,
            provider,
        } => {
            let mut config = SessionConfig {
                heuristic: !no_heuristic,
                focus,
                ..SessionConfig::default()
            };
            provider.apply(&mut config.provider);
            if let Some(t) = threshold {
                config.matching.threshold = t;
            }
            let sources = [oem.display().to_string(), supplier.display().to_string()];
            let options = InitOptions {
                oem,
                supplier,
                library,
                oem_uids,
                supplier_uids,
                out: out.clone(),
                config,
            };
            let session = Session::init(options, Clock::from_env()).map_err(S)?;
            let stage0 = session.state().stage(0);
            if stage0.status == StageStatus::Failed {
                let diagnostics = session
                    .parse_report()
                    .map(|r| located(&r, &sources))
                    .unwrap_or_default();
                let error = SessionError::Validation {
                    message: "stage 0 failed: the inputs did not pass the syntax check".into(),
                    diagnostics,
                };
                return Err(Failure::InitParse { dir: out, error });
            }
            let last = stage0
                .transcript
                .last()
                .map(|e| e.text.clone())
                .unwrap_or_default();
            Ok(Output::new(
                format!(
                    "session {} created at {}\nstage 0: {last}\nstage 0 awaits confirmation",
                    session.state().id,
                    out.display()
                ),
                session.state(),
            ))
        }
        Command::Run {
            session,
            stage,
            expected_attempts,
            provider,
        } => {
            let mut s = open(&session)?;
            let mut options = RunOptions {
                expected_attempts,
                ..RunOptions::default()
            };
            if provider.is_set() {
                let mut settings = s.state().config.provider.clone();
                provider.apply(&mut settings);
                options.settings = Some(settings);
            }
            let report = s.run_stage(stage, &options).map_err(S)?;
            Ok(Output::new(
                format!(
                    "stage {} ({}) attempt {}: {}\nstage {} awaits confirmation",
                    report.stage, report.name, report.attempts, report.summary, report.stage
                ),
                &report,
            ))
        }
        Command::Confirm {
            session,
            stage,
            message,
            acknowledge_unprocessed,
        } => {
            let mut s = open(&session)?;
            s.confirm_stage(stage, message.as_deref(), acknowledge_unprocessed)
                .map_err(S)?;
            Ok(Output::new(
                format!("stage {stage} confirmed"),
                s.state().stage(stage),
            ))
        }
        Command::Reject {
            session,
            stage,
            message,
        } => {
            let mut s = open(&session)?;
            s.reject_stage(stage, &message).map_err(S)?;
            Ok(Output::new(
                format!("stage {stage} rejected; feedback recorded"),
                s.state().stage(stage),
            ))
        }
        Command::Reopen {
            session,
            stage,
            message,
        } => {
            let mut s = open(&session)?;
            s.reopen_stage(stage, message.as_deref()).map_err(S)?;
            Ok(Output::new(
                format!("stage {stage} reopened; later stages reset to Pending"),
                s.state(),
            ))
        }
        Command::Verdict {
            session,
            auto,
            id,
            accept,
            reject,
            modify,
            actor,
        } => {
            let mut s = open(&session)?;
            if auto {
                let summary = s.auto_verdicts(&actor).map_err(S)?;
                return Ok(Output::new(
                    format!(
                        "{} mapping(s) accepted, {} rejected",
                        summary.accepted, summary.rejected
                    ),
                    &summary,
                ));
            }
            let verdict = match (accept, reject, modify) {
                (true, _, _) => Verdict::Accepted,
                (_, true, _) => Verdict::Rejected,
                (_, _, Some(tag)) => Verdict::Modified(tag),
                _ => {
                    return Err(S(SessionError::Usage(
                        "give one of --accept, --reject or --modify TAG".into(),
                    )))
                }
            };
            let id = id.expect("clap requires --id without --auto");
            let m = s.set_verdict(&id, verdict, &actor).map_err(S)?;
            Ok(Output::new(
                format!(
                    "{}: {} -> {}: {}",
                    m.id,
                    m.candidate.source_qualified_name,
                    m.candidate.target_qualified_name,
                    describe_verdict(&m.verdict)
                ),
                &m,
            ))
        }
        Command::Status { session } => {
            let s = open(&session)?;
            let st = s.state();
            let mut text = format!(
                "session {}\n{:<3} {:<10} {:<22} {:>8}\n",
                st.id, "#", "stage", "status", "attempts"
            );
            for stage in &st.stages {
                text.push_str(&format!(
                    "{:<3} {:<10} {:<22} {:>8}\n",
                    stage.index,
                    STAGE_NAMES[stage.index as usize],
                    stage.status.to_string(),
                    stage.attempts
                ));
            }
            match st.current_stage() {
                Some(k) => text.push_str(&format!("next: stage {k} ({})", STAGE_NAMES[k])),
                None => text.push_str("all stages confirmed"),
            }
            Ok(Output::new(text, st))
        }
        Command::Export { session, out } => {
            let mut s = open(&session)?;
            if s.state().stage(6).status != StageStatus::Confirmed {
                s.run_stage(6, &RunOptions::default()).map_err(S)?;
            }
            let mut manifest = s
                .export_to(&s.dir().join(softalign_core::session::EXPORT_DIR))
                .map_err(S)?;
            let mut target = s.dir().join(softalign_core::session::EXPORT_DIR);
            if let Some(out) = out {
                manifest = s.export_to(&out).map_err(S)?;
                target = out;
            }
            let mut text = format!("bundle written to {}", target.display());
            for (name, digest) in &manifest.files {
                text.push_str(&format!("\n  {name}  sha256:{digest}"));
            }
            Ok(Output::new(
                text,
                &json!({ "dir": target.display().to_string(), "files": manifest.files }),
            ))
        }
        Command::Serve { session, addr } => {
            let s = open(&session)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| {
                S(SessionError::Io {
                    path: s.dir().to_path_buf(),
                    source: e,
                })
            })?;
            eprintln!("serving session {} on http://{addr}/api", s.state().id);
            runtime
                .block_on(softalign_service::serve(
                    AppState::new(s.dir(), Clock::from_env()),
                    addr,
                ))
                .map_err(|e| {
                    S(SessionError::Io {
                        path: s.dir().to_path_buf(),
                        source: e,
                    })
                })?;
            Ok(Output::new("server stopped", &json!({})))
        }
    }
}
