//! The seven-stage gated pipeline, persisted as a directory of canonical JSON
//! files and model texts.
//!
//! Every transition takes the exclusive lock, reloads `session.json`, mutates,
//! and writes artifacts before the state file, so a reload after a crash sees
//! either the old or the new state, never a mix.

mod export;
pub mod store;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{
    generate_alignment_package, generate_extension_demo, AlignerConfig, ALIGNMENT_FILE_NAME,
};
use crate::canonical::{sha256_hex, to_canonical_string};
use crate::checker::{check_consistency, check_coverage, CoverageReport, DiagnosisList};
use crate::diagnostic::{Diagnostic, Severity};
use crate::ir::{extract_ir, ir_to_json, json_to_ir, ExtractionReport, ModelIR, UidPolicy};
use crate::matcher::{
    merge_candidate_sets, propose_heuristic, propose_via_provider, CandidateSet, HttpProvider,
    HttpProviderConfig, MatchConfig, MockProvider, Provider, ProviderError, ProviderExchange,
    ProviderInput,
};
use crate::sysml::{
    ast::digest_source, bundled_library, library::load_named, parse_model, ElementKind,
    ExtensionLibrary, Model,
};
use crate::verifier::{
    apply_verdict, detect_conflicts, verify_all, ConflictConfig, ConflictReport, Verdict,
    VerdictError, VerifiedMapping,
};

pub use export::{ExportManifest, BUNDLE_FILES, SUMMARY_FILE, TRANSCRIPT_FILE};
pub use store::SessionLock;

use store::{io_err, read_text, remove_if_exists, write_atomic};

pub const STAGE_COUNT: usize = 7;
pub const STAGE_NAMES: [&str; STAGE_COUNT] = [
    "parse",
    "summarize",
    "match",
    "verify",
    "generate",
    "check",
    "export",
];

pub const SESSION_FILE: &str = "session.json";
pub const INPUTS_DIR: &str = "inputs";
pub const OEM_INPUT: &str = "inputs/oem.sysml";
pub const SUPPLIER_INPUT: &str = "inputs/supplier.sysml";
pub const LIBRARY_INPUT: &str = "inputs/library.sysml";
pub const OEM_UIDS_INPUT: &str = "inputs/oem.uids.json";
pub const SUPPLIER_UIDS_INPUT: &str = "inputs/supplier.uids.json";
pub const PARSE_FILE: &str = "parse.json";
pub const DEMO_FILE: &str = "extension_demo.sysml";
pub const OEM_IR_FILE: &str = "oem.ir.json";
pub const SUPPLIER_IR_FILE: &str = "supplier.ir.json";
pub const EXTRACTION_FILE: &str = "extraction.json";
pub const CANDIDATES_FILE: &str = "candidates.json";
pub const PROVIDER_LOG_FILE: &str = "provider_log.json";
pub const MAPPINGS_FILE: &str = "mappings.json";
pub const CONFLICTS_FILE: &str = "conflicts.json";
pub const ALIGNMENT_SUMMARY_FILE: &str = "alignment.json";
pub const DIAGNOSIS_FILE: &str = "diagnosis.json";
pub const COVERAGE_FILE: &str = "coverage.json";
pub const EXPORT_DIR: &str = "export";

pub const OEM_UID_PREFIX: &str = "oem-";
pub const SUPPLIER_UID_PREFIX: &str = "sup-";

/// The CLI exit-code taxonomy; API error codes use the same names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Usage,
    Validation,
    Provider,
    Gating,
}

impl ErrorCode {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCode::Usage => 1,
            ErrorCode::Validation => 2,
            ErrorCode::Provider => 3,
            ErrorCode::Gating => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Usage => "usage",
            ErrorCode::Validation => "validation",
            ErrorCode::Provider => "provider",
            ErrorCode::Gating => "gating",
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Validation {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{0}")]
    Gating(String),
    #[error("session is busy: another transition holds the lock")]
    Busy,
    #[error("{0}")]
    NotFound(String),
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error("session state is corrupt: {0}")]
    Corrupt(String),
}

impl SessionError {
    fn validation(message: impl Into<String>) -> Self {
        SessionError::Validation {
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::Usage(_) | SessionError::NotFound(_) => ErrorCode::Usage,
            SessionError::Io { .. }
            | SessionError::Validation { .. }
            | SessionError::Verdict(_)
            | SessionError::Corrupt(_) => ErrorCode::Validation,
            SessionError::Provider(_) => ErrorCode::Provider,
            SessionError::Gating(_) | SessionError::Busy => ErrorCode::Gating,
        }
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            SessionError::Validation { diagnostics, .. } => diagnostics,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Pending,
    AwaitingConfirmation,
    Confirmed,
    Failed,
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    User,
    System,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Session-wide sequence number; totally orders every accepted mutation.
    pub seq: u64,
    pub stage: u8,
    pub actor: Actor,
    pub text: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    pub index: u8,
    pub name: String,
    pub status: StageStatus,
    pub attempts: u32,
    /// Paths relative to the session directory.
    pub artifacts: Vec<String>,
    pub transcript: Vec<TranscriptEntry>,
    /// Rejection feedback, in order; Stage 2 forwards it to the provider.
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    /// Where the file was read from.
    pub origin: String,
    /// The snapshot inside the session directory.
    pub copy: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInputs {
    pub oem: InputFile,
    pub supplier: InputFile,
    pub library: Option<InputFile>,
    pub oem_uids: Option<InputFile>,
    pub supplier_uids: Option<InputFile>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Deterministic stand-in that answers with heuristic proposals.
    #[default]
    Mock,
    /// OpenAI-compatible chat-completions endpoint.
    Http,
    /// Heuristic engine only.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub http: HttpProviderConfig,
    pub retries: u32,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            kind: ProviderKind::Mock,
            http: HttpProviderConfig::default(),
            retries: 2,
        }
    }
}

impl ProviderSettings {
    pub fn build(&self) -> Option<Arc<dyn Provider>> {
        match self.kind {
            ProviderKind::Mock => Some(Arc::new(MockProvider)),
            ProviderKind::Http => Some(Arc::new(HttpProvider::new(self.http.clone()))),
            ProviderKind::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub matching: MatchConfig,
    /// Run the heuristic engine in Stage 2 (merged with the provider's proposals).
    pub heuristic: bool,
    pub provider: ProviderSettings,
    pub conflicts: ConflictConfig,
    pub aligner: AlignerConfig,
    /// Optional free-text focus forwarded to the provider.
    pub focus: Option<String>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            matching: MatchConfig::default(),
            heuristic: true,
            provider: ProviderSettings::default(),
            conflicts: ConflictConfig::default(),
            aligner: AlignerConfig::default(),
            focus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub created_at: String,
    pub inputs: SessionInputs,
    pub config: SessionConfig,
    pub stages: Vec<StageState>,
    /// Eligible kinds as they were when Stage 2 last ran; coverage uses these.
    pub frozen_eligible_kinds: Option<BTreeSet<ElementKind>>,
    /// Unprocessed uids the user acknowledged when confirming Stage 5.
    pub acknowledged_unprocessed: Vec<String>,
    pub next_seq: u64,
}

impl SessionState {
    pub fn stage(&self, k: usize) -> &StageState {
        &self.stages[k]
    }

    /// All transcript entries in sequence order.
    pub fn transcript(&self) -> Vec<&TranscriptEntry> {
        let mut all: Vec<&TranscriptEntry> =
            self.stages.iter().flat_map(|s| &s.transcript).collect();
        all.sort_by_key(|e| e.seq);
        all
    }

    /// The stage the user should act on next: the first one not Confirmed.
    pub fn current_stage(&self) -> Option<usize> {
        self.stages
            .iter()
            .position(|s| s.status != StageStatus::Confirmed)
    }

    pub fn is_complete(&self) -> bool {
        self.current_stage().is_none()
    }
}

/// Source of transcript and artifact timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// `SOURCE_DATE_EPOCH` (seconds) pins the clock for reproducible runs.
    pub fn from_env() -> Clock {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse::<i64>().ok())
            .and_then(|secs| DateTime::from_timestamp(secs, 0))
            .map(Clock::Fixed)
            .unwrap_or(Clock::System)
    }

    pub fn fixed(secs: i64) -> Clock {
        Clock::Fixed(DateTime::from_timestamp(secs, 0).expect("valid timestamp"))
    }

    pub fn now(&self) -> String {
        let t = match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        };
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone)]
pub struct InitOptions {
    pub oem: PathBuf,
    pub supplier: PathBuf,
    pub library: Option<PathBuf>,
    /// JSON objects mapping qualified names to user-supplied uids.
    pub oem_uids: Option<PathBuf>,
    pub supplier_uids: Option<PathBuf>,
    pub out: PathBuf,
    pub config: SessionConfig,
}

impl InitOptions {
    pub fn new(
        oem: impl Into<PathBuf>,
        supplier: impl Into<PathBuf>,
        out: impl Into<PathBuf>,
    ) -> Self {
        InitOptions {
            oem: oem.into(),
            supplier: supplier.into(),
            library: None,
            oem_uids: None,
            supplier_uids: None,
            out: out.into(),
            config: SessionConfig::default(),
        }
    }
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Replaces the configured provider for this run.
    pub provider: Option<Arc<dyn Provider>>,
    /// Replaces the configured provider settings for this run (ignored when
    /// `provider` is given).
    pub settings: Option<ProviderSettings>,
    /// Optimistic-concurrency guard: refuse the run unless the stage has been
    /// run exactly this many times.
    pub expected_attempts: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: u8,
    pub name: String,
    pub status: StageStatus,
    pub attempts: u32,
    pub artifacts: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoVerdictSummary {
    pub accepted: usize,
    pub rejected: usize,
}

/// What Stage 0 found in each input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputAnalysis {
    pub file: String,
    pub model_name: Option<String>,
    pub digest: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub oem: InputAnalysis,
    pub supplier: InputAnalysis,
    pub library: InputAnalysis,
    /// Cross-file findings, such as clashing model names.
    pub session: Vec<Diagnostic>,
}

impl ParseReport {
    /// Every finding, per file in input order, then the cross-file ones.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        [&self.oem, &self.supplier, &self.library]
            .iter()
            .flat_map(|a| a.diagnostics.iter().cloned())
            .chain(self.session.iter().cloned())
            .collect()
    }

    pub fn has_errors(&self) -> bool {
        self.diagnostics().iter().any(Diagnostic::is_error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFile {
    pub oem: ExtractionReport,
    pub supplier: ExtractionReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderLog {
    pub provider: Option<String>,
    pub exchanges: Vec<ProviderExchange>,
    pub diagnostics: Vec<Diagnostic>,
}

/// The models and library, re-read from the session's input snapshots.
pub struct LoadedInputs {
    pub oem: Model,
    pub supplier: Model,
    pub library: ExtensionLibrary,
}

/// A handle on a session directory. Mutating methods take the transition
/// lock and reload state from disk first, so several handles (or processes)
/// can share one directory.
#[derive(Debug, Clone)]
pub struct Session {
    dir: PathBuf,
    state: SessionState,
    clock: Clock,
}

impl Session {
    /// Creates the session directory, snapshots the inputs and runs Stage 0.
    /// A parse failure leaves Stage 0 Failed with its diagnostics recorded;
    /// the session is still returned.
    pub fn init(options: InitOptions, clock: Clock) -> Result<Session, SessionError> {
        options
            .config
            .matching
            .validate()
            .map_err(|e| SessionError::Usage(e.to_string()))?;
        if !options.config.heuristic && options.config.provider.kind == ProviderKind::None {
            return Err(SessionError::Usage(
                "no matching engine enabled: enable the heuristic or choose a provider".into(),
            ));
        }
        let dir = options.out.clone();
        if dir.exists() {
            let mut entries = fs::read_dir(&dir).map_err(io_err(&dir))?;
            if entries.next().is_some() {
                return Err(SessionError::Usage(format!(
                    "{} already exists and is not empty",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(dir.join(INPUTS_DIR)).map_err(io_err(&dir))?;

        let snapshot = |src: &Path, copy: &str| -> Result<InputFile, SessionError> {
            let text = read_text(src)?;
            write_atomic(&dir.join(copy), &text)?;
            Ok(InputFile {
                origin: src.display().to_string(),
                copy: copy.to_string(),
                digest: digest_source(&text),
            })
        };
        let optional = |src: &Option<PathBuf>, copy: &str| {
            src.as_deref().map(|p| snapshot(p, copy)).transpose()
        };
        let inputs = SessionInputs {
            oem: snapshot(&options.oem, OEM_INPUT)?,
            supplier: snapshot(&options.supplier, SUPPLIER_INPUT)?,
            library: optional(&options.library, LIBRARY_INPUT)?,
            oem_uids: optional(&options.oem_uids, OEM_UIDS_INPUT)?,
            supplier_uids: optional(&options.supplier_uids, SUPPLIER_UIDS_INPUT)?,
        };
        let library_digest = inputs
            .library
            .as_ref()
            .map(|l| l.digest.as_str())
            .unwrap_or("bundled");
        let id = format!(
            "s-{}",
            &sha256_hex(format!(
                "{}|{}|{library_digest}",
                inputs.oem.digest, inputs.supplier.digest
            ))[..12]
        );
        let stages = (0..STAGE_COUNT)
            .map(|k| StageState {
                index: k as u8,
                name: STAGE_NAMES[k].to_string(),
                status: StageStatus::Pending,
                attempts: 0,
                artifacts: Vec::new(),
                transcript: Vec::new(),
                feedback: Vec::new(),
            })
            .collect();
        let state = SessionState {
            id,
            created_at: clock.now(),
            inputs,
            config: options.config,
            stages,
            frozen_eligible_kinds: None,
            acknowledged_unprocessed: Vec::new(),
            next_seq: 0,
        };
        let mut session = Session { dir, state, clock };
        session.log(
            0,
            Actor::System,
            format!("session {} created", session.state.id),
        );
        session.persist()?;
        match session.run_stage(0, &RunOptions::default()) {
            Ok(_) | Err(SessionError::Validation { .. }) => Ok(session),
            Err(e) => Err(e),
        }
    }

    pub fn open(dir: impl Into<PathBuf>, clock: Clock) -> Result<Session, SessionError> {
        let dir = dir.into();
        let state = load_state(&dir)?;
        Ok(Session { dir, state, clock })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn reload(&mut self) -> Result<(), SessionError> {
        self.state = load_state(&self.dir)?;
        Ok(())
    }

    fn lock(&self) -> Result<SessionLock, SessionError> {
        SessionLock::try_acquire(&self.dir)
    }

    fn persist(&self) -> Result<(), SessionError> {
        write_atomic(
            &self.dir.join(SESSION_FILE),
            &to_canonical_string(&self.state),
        )
    }

    fn log(&mut self, stage: usize, actor: Actor, text: impl Into<String>) {
        let entry = TranscriptEntry {
            seq: self.state.next_seq,
            stage: stage as u8,
            actor,
            text: text.into(),
            timestamp: self.clock.now(),
        };
        self.state.next_seq += 1;
        self.state.stages[stage].transcript.push(entry);
    }

    fn write_artifact(
        &self,
        name: &str,
        contents: &str,
        produced: &mut Vec<String>,
    ) -> Result<(), SessionError> {
        write_atomic(&self.dir.join(name), contents)?;
        produced.push(name.to_string());
        Ok(())
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T, SessionError> {
        let text = read_text(&self.dir.join(name))?;
        serde_json::from_str(&text).map_err(|e| SessionError::Corrupt(format!("{name}: {e}")))
    }

    fn check_stage_index(k: usize) -> Result<(), SessionError> {
        if k >= STAGE_COUNT {
            return Err(SessionError::Usage(format!(
                "stage must be between 0 and {}, got {k}",
                STAGE_COUNT - 1
            )));
        }
        Ok(())
    }

    fn require_earlier_confirmed(&self, k: usize, action: &str) -> Result<(), SessionError> {
        if let Some(open) = (0..k).find(|&j| self.state.stages[j].status != StageStatus::Confirmed)
        {
            return Err(SessionError::Gating(format!(
                "cannot {action} stage {k}: stage {open} ({}) is {}, not Confirmed",
                STAGE_NAMES[open], self.state.stages[open].status
            )));
        }
        Ok(())
    }

    fn require_status(
        &self,
        k: usize,
        allowed: &[StageStatus],
        action: &str,
    ) -> Result<(), SessionError> {
        let status = self.state.stages[k].status;
        if !allowed.contains(&status) {
            return Err(SessionError::Gating(format!(
                "cannot {action} stage {k} ({}): it is {status}",
                STAGE_NAMES[k]
            )));
        }
        Ok(())
    }

    /// Runs (or re-runs) stage `k`. On success the stage awaits confirmation;
    /// on a stage failure it is marked Failed, the state is persisted and the
    /// error returned.
    pub fn run_stage(
        &mut self,
        k: usize,
        options: &RunOptions,
    ) -> Result<StageReport, SessionError> {
        Self::check_stage_index(k)?;
        let _lock = self.lock()?;
        self.reload_if_persisted()?;
        self.require_earlier_confirmed(k, "run")?;
        self.require_status(
            k,
            &[
                StageStatus::Pending,
                StageStatus::AwaitingConfirmation,
                StageStatus::Failed,
            ],
            "run",
        )?;
        if let Some(expected) = options.expected_attempts {
            let actual = self.state.stages[k].attempts;
            if actual != expected {
                return Err(SessionError::Gating(format!(
                    "stage {k} has been run {actual} time(s), expected {expected}; reload and retry"
                )));
            }
        }

        self.state.stages[k].attempts += 1;
        let attempt = self.state.stages[k].attempts;
        self.log(
            k,
            Actor::System,
            format!("stage {k} ({}) attempt {attempt} started", STAGE_NAMES[k]),
        );
        let mut produced = Vec::new();
        let result = self.execute(k, options, &mut produced);
        produced.sort();
        produced.dedup();
        self.state.stages[k].artifacts = produced;
        let outcome = match result {
            Ok(summary) => {
                self.state.stages[k].status = StageStatus::AwaitingConfirmation;
                self.log(k, Actor::System, summary.clone());
                Ok(summary)
            }
            Err(e) => {
                self.state.stages[k].status = StageStatus::Failed;
                let mut text = format!("stage {k} failed: {e}");
                for d in e.diagnostics() {
                    text.push_str(&format!("\n{d}"));
                }
                self.log(k, Actor::System, text);
                Err(e)
            }
        };
        self.persist()?;
        let summary = outcome?;
        let stage = &self.state.stages[k];
        Ok(StageReport {
            stage: k as u8,
            name: stage.name.clone(),
            status: stage.status,
            attempts: stage.attempts,
            artifacts: stage.artifacts.clone(),
            summary,
        })
    }

    /// During `init` the state has not been written yet when Stage 0 runs.
    fn reload_if_persisted(&mut self) -> Result<(), SessionError> {
        if self.dir.join(SESSION_FILE).exists() {
            self.reload()?;
        }
        Ok(())
    }

    fn execute(
        &mut self,
        k: usize,
        options: &RunOptions,
        produced: &mut Vec<String>,
    ) -> Result<String, SessionError> {
        match k {
            0 => self.run_parse(produced),
            1 => self.run_summarize(produced),
            2 => self.run_match(options, produced),
            3 => self.run_verify(produced),
            4 => self.run_generate(produced),
            5 => self.run_check(produced),
            _ => self.run_export(produced),
        }
    }

    /// Stage 0: re-read the inputs (from their origin when still present, so a
    /// fixed file is picked up), parse them and generate the extension demo.
    fn run_parse(&mut self, produced: &mut Vec<String>) -> Result<String, SessionError> {
        let refresh = |file: &mut InputFile, dir: &Path| -> Result<Option<String>, SessionError> {
            let origin = PathBuf::from(&file.origin);
            if !origin.is_file() {
                return Ok(None);
            }
            let text = read_text(&origin)?;
            let digest = digest_source(&text);
            if digest == file.digest {
                return Ok(None);
            }
            write_atomic(&dir.join(&file.copy), &text)?;
            let name = file.copy.clone();
            file.digest = digest;
            Ok(Some(name))
        };
        let dir = self.dir.clone();
        let mut changed = Vec::new();
        let inputs = &mut self.state.inputs;
        for file in [&mut inputs.oem, &mut inputs.supplier]
            .into_iter()
            .chain(inputs.library.as_mut())
            .chain(inputs.oem_uids.as_mut())
            .chain(inputs.supplier_uids.as_mut())
        {
            changed.extend(refresh(file, &dir)?);
        }
        for name in changed {
            self.log(
                0,
                Actor::System,
                format!("{name} refreshed from its origin (content changed)"),
            );
        }

        let analyse =
            |copy: &str, digest: &str| -> Result<(InputAnalysis, Option<Model>), SessionError> {
                let text = read_text(&dir.join(copy))?;
                let (model, diagnostics) = match parse_model(&text, copy) {
                    Ok(m) => (Some(m), Vec::new()),
                    Err(d) => (None, d.0),
                };
                let analysis = InputAnalysis {
                    file: copy.to_string(),
                    model_name: model.as_ref().map(|m| m.name().to_string()),
                    digest: digest.to_string(),
                    diagnostics,
                };
                Ok((analysis, model))
            };
        let (oem, oem_model) = analyse(OEM_INPUT, &self.state.inputs.oem.digest)?;
        let (supplier, sup_model) = analyse(SUPPLIER_INPUT, &self.state.inputs.supplier.digest)?;

        let (library, library_model) = match &self.state.inputs.library {
            Some(file) => {
                let text = read_text(&dir.join(&file.copy))?;
                match load_named(&text, LIBRARY_INPUT) {
                    Ok(lib) => (
                        InputAnalysis {
                            file: file.copy.clone(),
                            model_name: Some(lib.package_name.clone()),
                            digest: file.digest.clone(),
                            diagnostics: Vec::new(),
                        },
                        Some(lib),
                    ),
                    Err(e) => {
                        let diagnostics = match e {
                            crate::sysml::LibraryError::Parse(d) => d.0,
                            other => vec![Diagnostic::error(
                                "library.invalid",
                                None,
                                other.to_string(),
                            )],
                        };
                        let analysis = InputAnalysis {
                            file: file.copy.clone(),
                            model_name: None,
                            digest: file.digest.clone(),
                            diagnostics,
                        };
                        (analysis, None)
                    }
                }
            }
            None => {
                let lib = bundled_library();
                self.log(
                    0,
                    Actor::System,
                    format!(
                        "no extension library supplied; loaded the bundled library {}",
                        lib.package_name
                    ),
                );
                let analysis = InputAnalysis {
                    file: "(bundled)".into(),
                    model_name: Some(lib.package_name.clone()),
                    digest: digest_source(&lib.text),
                    diagnostics: Vec::new(),
                };
                (analysis, Some(lib))
            }
        };

        let mut session_diags = Vec::new();
        let names: Vec<(&str, &str)> = [
            ("OEM", oem.model_name.as_deref()),
            ("supplier", supplier.model_name.as_deref()),
            ("library", library.model_name.as_deref()),
        ]
        .into_iter()
        .filter_map(|(role, name)| name.map(|n| (role, n)))
        .collect();
        for (i, (role_a, a)) in names.iter().enumerate() {
            for (role_b, b) in &names[i + 1..] {
                if a == b {
                    session_diags.push(Diagnostic::error(
                        "session.duplicate-model-name",
                        None,
                        format!("the {role_a} and {role_b} models are both named `{a}`; qualified names would be ambiguous"),
                    ));
                }
            }
        }
        for (copy, label) in [(OEM_UIDS_INPUT, "OEM"), (SUPPLIER_UIDS_INPUT, "supplier")] {
            let path = dir.join(copy);
            if path.exists() {
                if let Err(e) = serde_json::from_str::<BTreeMap<String, String>>(&read_text(&path)?)
                {
                    session_diags.push(Diagnostic::error(
                        "session.invalid-uid-file",
                        None,
                        format!(
                            "{label} uid file is not a JSON object of qualified name to uid: {e}"
                        ),
                    ));
                }
            }
        }

        let report = ParseReport {
            oem,
            supplier,
            library,
            session: session_diags,
        };
        self.write_artifact(PARSE_FILE, &to_canonical_string(&report), produced)?;
        remove_if_exists(&dir.join(DEMO_FILE))?;
        if report.has_errors() {
            let diagnostics = report.diagnostics();
            let count = diagnostics.iter().filter(|d| d.is_error()).count();
            return Err(SessionError::Validation {
                message: format!("inputs did not pass the syntax check ({count} error(s))"),
                diagnostics,
            });
        }
        let lib = library_model.expect("library loaded when there are no errors");
        self.write_artifact(DEMO_FILE, &generate_extension_demo(&lib), produced)?;
        let (o, s) = (oem_model.expect("parsed"), sup_model.expect("parsed"));
        Ok(format!(
            "parsed {} ({} elements) and {} ({} elements); library {} defines {} tag(s): {}",
            o.name(),
            o.elements().count(),
            s.name(),
            s.elements().count(),
            lib.package_name,
            lib.tags.len(),
            lib.tags.join(", ")
        ))
    }

    /// Parses the input snapshots. Only valid after Stage 0 succeeded.
    pub fn load_inputs(&self) -> Result<LoadedInputs, SessionError> {
        let parse = |copy: &str| -> Result<Model, SessionError> {
            let text = read_text(&self.dir.join(copy))?;
            parse_model(&text, copy).map_err(|d| SessionError::Validation {
                message: format!("{copy} no longer parses"),
                diagnostics: d.0,
            })
        };
        let library = match &self.state.inputs.library {
            Some(file) => load_named(&read_text(&self.dir.join(&file.copy))?, LIBRARY_INPUT)
                .map_err(|e| SessionError::validation(e.to_string()))?,
            None => bundled_library(),
        };
        Ok(LoadedInputs {
            oem: parse(OEM_INPUT)?,
            supplier: parse(SUPPLIER_INPUT)?,
            library,
        })
    }

    fn uid_policy(&self, copy: &str, prefix: &str) -> Result<UidPolicy, SessionError> {
        let path = self.dir.join(copy);
        if !path.exists() {
            return Ok(UidPolicy::derived(prefix));
        }
        let uids: BTreeMap<String, String> = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| SessionError::validation(format!("{copy}: {e}")))?;
        Ok(UidPolicy::Provided {
            prefix: prefix.to_string(),
            uids,
        })
    }

    fn run_summarize(&mut self, produced: &mut Vec<String>) -> Result<String, SessionError> {
        let inputs = self.load_inputs()?;
        let ir_err = |e: crate::ir::IrError| SessionError::validation(e.to_string());
        let (oem_ir, oem_report) = extract_ir(
            &inputs.oem,
            &self.uid_policy(OEM_UIDS_INPUT, OEM_UID_PREFIX)?,
        )
        .map_err(ir_err)?;
        let (sup_ir, sup_report) = extract_ir(
            &inputs.supplier,
            &self.uid_policy(SUPPLIER_UIDS_INPUT, SUPPLIER_UID_PREFIX)?,
        )
        .map_err(ir_err)?;
        let oem_uids: HashSet<&str> = oem_ir.elements.iter().map(|e| e.uid.as_str()).collect();
        if let Some(clash) = sup_ir
            .elements
            .iter()
            .find(|e| oem_uids.contains(e.uid.as_str()))
        {
            return Err(SessionError::validation(format!(
                "uid `{}` is used in both models (supplier element {})",
                clash.uid, clash.qualified_name
            )));
        }
        self.write_artifact(OEM_IR_FILE, &ir_to_json(&oem_ir), produced)?;
        self.write_artifact(SUPPLIER_IR_FILE, &ir_to_json(&sup_ir), produced)?;
        let extraction = ExtractionFile {
            oem: oem_report,
            supplier: sup_report,
        };
        self.write_artifact(EXTRACTION_FILE, &to_canonical_string(&extraction), produced)?;
        let mut summary = format!(
            "extracted {} element(s) from {} and {} from {}",
            oem_ir.elements.len(),
            oem_ir.model_name,
            sup_ir.elements.len(),
            sup_ir.model_name
        );
        let skipped = extraction.oem.skipped.len() + extraction.supplier.skipped.len();
        if skipped > 0 {
            summary.push_str(&format!("; {skipped} element(s) folded into their owners"));
        }
        Ok(summary)
    }

    pub fn load_irs(&self) -> Result<(ModelIR, ModelIR), SessionError> {
        let load = |name: &str| -> Result<ModelIR, SessionError> {
            json_to_ir(&read_text(&self.dir.join(name))?)
                .map_err(|e| SessionError::Corrupt(format!("{name}: {e}")))
        };
        Ok((load(OEM_IR_FILE)?, load(SUPPLIER_IR_FILE)?))
    }

    fn run_match(
        &mut self,
        options: &RunOptions,
        produced: &mut Vec<String>,
    ) -> Result<String, SessionError> {
        let (source, target) = self.load_irs()?;
        let library = self.load_inputs()?.library;
        let config = self.state.config.clone();
        config
            .matching
            .validate()
            .map_err(|e| SessionError::validation(e.to_string()))?;
        let provider = match (&options.provider, &options.settings) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(settings)) => settings.build(),
            (None, None) => config.provider.build(),
        };
        if !config.heuristic && provider.is_none() {
            return Err(SessionError::validation("no matching engine enabled"));
        }

        let mut set: Option<CandidateSet> = None;
        let mut parts = Vec::new();
        if config.heuristic {
            let h = propose_heuristic(&source, &target, &config.matching)
                .map_err(|e| SessionError::validation(e.to_string()))?;
            parts.push(format!("heuristic {}", h.candidates.len()));
            set = Some(h);
        }

        let mut log = ProviderLog {
            provider: None,
            exchanges: Vec::new(),
            diagnostics: Vec::new(),
        };
        let mut failure = None;
        if let Some(provider) = &provider {
            log.provider = Some(provider.name().to_string());
            let feedback = self.state.stages[2].feedback.clone();
            if !feedback.is_empty() {
                self.log(
                    2,
                    Actor::System,
                    format!(
                        "forwarding {} correction(s) to the provider",
                        feedback.len()
                    ),
                );
            }
            let input = ProviderInput {
                source: &source,
                target: &target,
                library: &library,
                config: &config.matching,
                focus: config.focus.as_deref(),
                feedback: &feedback,
                retries: config.provider.retries,
            };
            let result = propose_via_provider(provider.as_ref(), &input, &mut log.exchanges);
            for ex in &log.exchanges {
                let text = match (&ex.response, &ex.error) {
                    (_, Some(err)) => format!("attempt {}: {err}", ex.attempt),
                    (Some(raw), None) => {
                        format!("attempt {}: replied with {} byte(s)", ex.attempt, raw.len())
                    }
                    (None, None) => format!("attempt {}: no reply", ex.attempt),
                };
                self.log(2, Actor::Provider, text);
            }
            match result {
                Ok(outcome) => {
                    parts.push(format!(
                        "{} {}",
                        provider.name(),
                        outcome.set.candidates.len()
                    ));
                    log.diagnostics = outcome.diagnostics;
                    set = Some(match set {
                        Some(h) => merge_candidate_sets(&h, &outcome.set)
                            .map_err(|e| SessionError::validation(e.to_string()))?,
                        None => outcome.set,
                    });
                }
                Err(e) => failure = Some(e),
            }
        }
        self.write_artifact(PROVIDER_LOG_FILE, &to_canonical_string(&log), produced)?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        let set = set.expect("at least one engine ran");
        self.write_artifact(CANDIDATES_FILE, &to_canonical_string(&set), produced)?;
        self.state.frozen_eligible_kinds = Some(config.matching.eligible_kinds.clone());
        let warnings = log.diagnostics.len();
        let mut summary = format!(
            "{} candidate(s) ({}); {} source and {} target element(s) unmatched",
            set.candidates.len(),
            parts.join(", "),
            set.unmatched_source.len(),
            set.unmatched_target.len()
        );
        if warnings > 0 {
            summary.push_str(&format!("; {warnings} provider warning(s)"));
        }
        Ok(summary)
    }

    pub fn parse_report(&self) -> Result<ParseReport, SessionError> {
        self.read_json(PARSE_FILE)
    }

    pub fn candidates(&self) -> Result<CandidateSet, SessionError> {
        self.read_json(CANDIDATES_FILE)
    }

    pub fn mappings(&self) -> Result<Vec<VerifiedMapping>, SessionError> {
        self.read_json(MAPPINGS_FILE)
    }

    pub fn conflicts(&self) -> Result<ConflictReport, SessionError> {
        self.read_json(CONFLICTS_FILE)
    }

    pub fn diagnosis(&self) -> Result<DiagnosisList, SessionError> {
        self.read_json(DIAGNOSIS_FILE)
    }

    pub fn coverage(&self) -> Result<CoverageReport, SessionError> {
        self.read_json(COVERAGE_FILE)
    }

    /// Stage 3. Verdicts from a previous run carry over to mappings whose
    /// candidate is unchanged, provided the verifier still admits them.
    fn run_verify(&mut self, produced: &mut Vec<String>) -> Result<String, SessionError> {
        let (source, target) = self.load_irs()?;
        let library = self.load_inputs()?.library;
        let set = self.candidates()?;
        let previous: BTreeMap<String, VerifiedMapping> = if self.dir.join(MAPPINGS_FILE).exists() {
            self.mappings()?
                .into_iter()
                .map(|m| (m.id.clone(), m))
                .collect()
        } else {
            BTreeMap::new()
        };
        let mut mappings = verify_all(&set.candidates, &source, &target, &library)
            .map_err(|e| SessionError::validation(e.to_string()))?;
        let mut carried = 0;
        for m in &mut mappings {
            let Some(old) = previous.get(&m.id) else {
                continue;
            };
            if old.candidate != m.candidate || old.verdict == Verdict::Pending {
                continue;
            }
            let (actor, timestamp) = match &old.verdict_record {
                Some(r) => (r.actor.clone(), r.timestamp.clone()),
                None => ("user".to_string(), self.clock.now()),
            };
            if let Ok(updated) = apply_verdict(m, old.verdict.clone(), &library, &actor, &timestamp)
            {
                *m = updated;
                carried += 1;
            }
        }
        let conflicts = detect_conflicts(&mappings, &self.state.config.conflicts);
        self.write_artifact(MAPPINGS_FILE, &to_canonical_string(&mappings), produced)?;
        self.write_artifact(CONFLICTS_FILE, &to_canonical_string(&conflicts), produced)?;
        let blocked = mappings
            .iter()
            .filter(|m| m.blocking_checks().next().is_some())
            .count();
        let mut summary = format!(
            "verified {} mapping(s): {} with blocking check failures, {} conflict(s)",
            mappings.len(),
            blocked,
            conflicts.conflicts.len()
        );
        if carried > 0 {
            summary.push_str(&format!("; {carried} earlier verdict(s) carried over"));
        }
        Ok(summary)
    }

    fn run_generate(&mut self, produced: &mut Vec<String>) -> Result<String, SessionError> {
        let inputs = self.load_inputs()?;
        let mappings = self.mappings()?;
        let package = generate_alignment_package(
            &mappings,
            &inputs.oem,
            &inputs.supplier,
            &inputs.library,
            &self.state.config.aligner,
            &self.clock.now(),
        )
        .map_err(|e| SessionError::validation(e.to_string()))?;
        let summary = package.summary();
        self.write_artifact(ALIGNMENT_FILE_NAME, &package.text, produced)?;
        self.write_artifact(
            ALIGNMENT_SUMMARY_FILE,
            &to_canonical_string(&summary),
            produced,
        )?;
        Ok(format!(
            "generated {} with {} construct(s)",
            summary.package_name, summary.constructs
        ))
    }

    fn run_check(&mut self, produced: &mut Vec<String>) -> Result<String, SessionError> {
        let inputs = self.load_inputs()?;
        let text = read_text(&self.dir.join(ALIGNMENT_FILE_NAME))?;
        let package =
            parse_model(&text, ALIGNMENT_FILE_NAME).map_err(|d| SessionError::Validation {
                message: "the alignment package does not parse".into(),
                diagnostics: d.0,
            })?;
        let diagnosis = check_consistency(&package, &inputs.oem, &inputs.supplier, &inputs.library);
        let (source, target) = self.load_irs()?;
        let kinds = self
            .state
            .frozen_eligible_kinds
            .clone()
            .unwrap_or_else(|| self.state.config.matching.eligible_kinds.clone());
        let coverage = check_coverage(&self.mappings()?, &source, &target, &kinds);
        self.write_artifact(DIAGNOSIS_FILE, &to_canonical_string(&diagnosis), produced)?;
        self.write_artifact(COVERAGE_FILE, &to_canonical_string(&coverage), produced)?;
        Ok(format!(
            "{} error(s), {} warning(s); coverage: source {}/{} matched, {} explicitly unmatched, {} unprocessed; target {}/{} matched, {} explicitly unmatched, {} unprocessed",
            diagnosis.count(Severity::Error),
            diagnosis.count(Severity::Warning),
            coverage.source.matched.len(),
            coverage.source.total_eligible,
            coverage.source.explicitly_unmatched.len(),
            coverage.source.unprocessed.len(),
            coverage.target.matched.len(),
            coverage.target.total_eligible,
            coverage.target.explicitly_unmatched.len(),
            coverage.target.unprocessed.len(),
        ))
    }

    fn run_export(&mut self, produced: &mut Vec<String>) -> Result<String, SessionError> {
        let out = self.dir.join(EXPORT_DIR);
        let manifest = self.write_bundle(&out)?;
        produced.extend(manifest.files.keys().map(|f| format!("{EXPORT_DIR}/{f}")));
        let digests: Vec<String> = manifest
            .files
            .iter()
            .map(|(f, d)| format!("{f} sha256:{d}"))
            .collect();
        Ok(format!(
            "exported {} file(s):\n{}",
            manifest.files.len(),
            digests.join("\n")
        ))
    }

    /// Writes the export bundle into `out` without touching session state.
    /// Requires Stage 5 Confirmed.
    pub fn export_to(&self, out: &Path) -> Result<ExportManifest, SessionError> {
        self.write_bundle(out)
    }

    pub fn confirm_stage(
        &mut self,
        k: usize,
        message: Option<&str>,
        acknowledge_unprocessed: bool,
    ) -> Result<(), SessionError> {
        Self::check_stage_index(k)?;
        let _lock = self.lock()?;
        self.reload()?;
        self.require_status(k, &[StageStatus::AwaitingConfirmation], "confirm")?;
        match k {
            3 => {
                let pending = self
                    .mappings()?
                    .iter()
                    .filter(|m| m.verdict == Verdict::Pending)
                    .count();
                if pending > 0 {
                    return Err(SessionError::Gating(format!(
                        "cannot confirm stage 3: {pending} mapping(s) still have no verdict"
                    )));
                }
            }
            5 => {
                let errors = self.diagnosis()?.count(Severity::Error);
                if errors > 0 {
                    return Err(SessionError::Gating(format!(
                        "cannot confirm stage 5: the diagnosis lists {errors} error(s); reopen an earlier stage to fix them"
                    )));
                }
                let coverage = self.coverage()?;
                if !coverage.is_complete() {
                    if !acknowledge_unprocessed {
                        return Err(SessionError::Gating(format!(
                            "cannot confirm stage 5: {} element(s) are unprocessed; acknowledge them explicitly to proceed",
                            coverage.unprocessed_count()
                        )));
                    }
                    let mut uids: Vec<String> = coverage
                        .source
                        .unprocessed
                        .iter()
                        .chain(&coverage.target.unprocessed)
                        .cloned()
                        .collect();
                    uids.sort();
                    self.log(
                        5,
                        Actor::User,
                        format!(
                            "acknowledged {} unprocessed element(s): {}",
                            uids.len(),
                            uids.join(", ")
                        ),
                    );
                    self.state.acknowledged_unprocessed = uids;
                }
            }
            _ => {}
        }
        self.state.stages[k].status = StageStatus::Confirmed;
        let text = match message {
            Some(m) => format!("confirmed stage {k}: {m}"),
            None => format!("confirmed stage {k}"),
        };
        self.log(k, Actor::User, text);
        self.persist()
    }

    /// Sends stage `k` back to Pending; `feedback` is kept verbatim and, for
    /// Stage 2, included in the next provider request.
    pub fn reject_stage(&mut self, k: usize, feedback: &str) -> Result<(), SessionError> {
        Self::check_stage_index(k)?;
        if feedback.trim().is_empty() {
            return Err(SessionError::Usage(
                "rejection needs a feedback message".into(),
            ));
        }
        let _lock = self.lock()?;
        self.reload()?;
        self.require_status(k, &[StageStatus::AwaitingConfirmation], "reject")?;
        self.state.stages[k].status = StageStatus::Pending;
        self.state.stages[k].feedback.push(feedback.to_string());
        self.log(k, Actor::User, format!("rejected stage {k}: {feedback}"));
        self.persist()
    }

    /// Reopens a Confirmed stage for iteration. Every later stage returns to
    /// Pending and its artifacts are removed; the transcript keeps everything.
    pub fn reopen_stage(&mut self, k: usize, message: Option<&str>) -> Result<(), SessionError> {
        Self::check_stage_index(k)?;
        let _lock = self.lock()?;
        self.reload()?;
        self.require_status(k, &[StageStatus::Confirmed], "reopen")?;
        self.state.stages[k].status = StageStatus::AwaitingConfirmation;
        for j in k + 1..STAGE_COUNT {
            let stage = &mut self.state.stages[j];
            stage.status = StageStatus::Pending;
            for artifact in std::mem::take(&mut stage.artifacts) {
                remove_if_exists(&self.dir.join(artifact))?;
            }
        }
        if k < 5 {
            self.state.acknowledged_unprocessed.clear();
        }
        let text = match message {
            Some(m) => format!("reopened stage {k}: {m}"),
            None => format!("reopened stage {k}"),
        };
        self.log(k, Actor::User, text);
        self.persist()
    }

    fn require_verdict_window(&self) -> Result<(), SessionError> {
        self.require_earlier_confirmed(3, "record verdicts in")?;
        self.require_status(
            3,
            &[StageStatus::AwaitingConfirmation],
            "record verdicts in",
        )
    }

    /// Records a verdict on one mapping while Stage 3 awaits confirmation.
    /// A refused verdict changes nothing.
    pub fn set_verdict(
        &mut self,
        id: &str,
        verdict: Verdict,
        actor: &str,
    ) -> Result<VerifiedMapping, SessionError> {
        let _lock = self.lock()?;
        self.reload()?;
        self.require_verdict_window()?;
        let library = self.load_inputs()?.library;
        let mut mappings = self.mappings()?;
        let idx = mappings
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| SessionError::NotFound(format!("no mapping with id `{id}`")))?;
        let updated = apply_verdict(&mappings[idx], verdict, &library, actor, &self.clock.now())?;
        mappings[idx] = updated.clone();
        self.store_mappings(&mappings)?;
        self.log(
            3,
            Actor::User,
            format!(
                "verdict on {id} ({} -> {}): {}",
                updated.candidate.source_qualified_name,
                updated.candidate.target_qualified_name,
                describe_verdict(&updated.verdict)
            ),
        );
        self.persist()?;
        Ok(updated)
    }

    /// Decides every Pending mapping by one-to-one greedy assignment in
    /// candidate order: a mapping is accepted when its checks all pass at the
    /// blocking level and neither end is already matched; the rest are rejected.
    pub fn auto_verdicts(&mut self, actor: &str) -> Result<AutoVerdictSummary, SessionError> {
        let _lock = self.lock()?;
        self.reload()?;
        self.require_verdict_window()?;
        let library = self.load_inputs()?.library;
        let mut mappings = self.mappings()?;
        let mut used_s: HashSet<String> = HashSet::new();
        let mut used_t: HashSet<String> = HashSet::new();
        for m in mappings.iter().filter(|m| m.is_match()) {
            used_s.insert(m.candidate.source_uid.clone());
            used_t.insert(m.candidate.target_uid.clone());
        }
        let now = self.clock.now();
        let mut summary = AutoVerdictSummary::default();
        for m in mappings
            .iter_mut()
            .filter(|m| m.verdict == Verdict::Pending)
        {
            let free = !used_s.contains(&m.candidate.source_uid)
                && !used_t.contains(&m.candidate.target_uid);
            let admissible = m.blocking_checks().next().is_none();
            let verdict = if free && admissible {
                Verdict::Accepted
            } else {
                Verdict::Rejected
            };
            if verdict == Verdict::Accepted {
                used_s.insert(m.candidate.source_uid.clone());
                used_t.insert(m.candidate.target_uid.clone());
                summary.accepted += 1;
            } else {
                summary.rejected += 1;
            }
            *m = apply_verdict(m, verdict, &library, actor, &now)?;
        }
        self.store_mappings(&mappings)?;
        self.log(
            3,
            Actor::User,
            format!(
                "automatic verdicts: {} accepted, {} rejected",
                summary.accepted, summary.rejected
            ),
        );
        self.persist()?;
        Ok(summary)
    }

    fn store_mappings(&self, mappings: &[VerifiedMapping]) -> Result<(), SessionError> {
        let conflicts = detect_conflicts(mappings, &self.state.config.conflicts);
        write_atomic(
            &self.dir.join(MAPPINGS_FILE),
            &to_canonical_string(mappings),
        )?;
        write_atomic(
            &self.dir.join(CONFLICTS_FILE),
            &to_canonical_string(&conflicts),
        )
    }

    /// Names readable through [`Session::read_artifact`]: the state file and
    /// every artifact a stage has recorded.
    pub fn artifact_names(&self) -> Vec<String> {
        let mut names: Vec<String> = std::iter::once(SESSION_FILE.to_string())
            .chain(
                self.state
                    .stages
                    .iter()
                    .flat_map(|s| s.artifacts.iter().cloned()),
            )
            .chain(
                [
                    Some(&self.state.inputs.oem),
                    Some(&self.state.inputs.supplier),
                    self.state.inputs.library.as_ref(),
                ]
                .into_iter()
                .flatten()
                .map(|f| f.copy.clone()),
            )
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn read_artifact(&self, name: &str) -> Result<String, SessionError> {
        if !self.artifact_names().iter().any(|n| n == name) {
            return Err(SessionError::NotFound(format!(
                "no artifact named `{name}`"
            )));
        }
        read_text(&self.dir.join(name))
    }
}

fn load_state(dir: &Path) -> Result<SessionState, SessionError> {
    let path = dir.join(SESSION_FILE);
    if !path.exists() {
        return Err(SessionError::NotFound(format!(
            "{} is not a session directory",
            dir.display()
        )));
    }
    let text = read_text(&path)?;
    let state: SessionState =
        serde_json::from_str(&text).map_err(|e| SessionError::Corrupt(e.to_string()))?;
    if state.stages.len() != STAGE_COUNT {
        return Err(SessionError::Corrupt(format!(
            "expected {STAGE_COUNT} stages, found {}",
            state.stages.len()
        )));
    }
    Ok(state)
}

pub fn describe_verdict(verdict: &Verdict) -> String {
    match verdict {
        Verdict::Modified(tag) => format!("Modified({tag})"),
        other => format!("{other:?}"),
    }
}

#[cfg(test)]
mod tests;
