use std::fs;
use std::path::Path;

use super::*;
use crate::corpus::{MEASUREMENT_OEM, MEASUREMENT_SUPPLIER};
use crate::matcher::{RecordingProvider, ScriptedProvider};

const CORRECTION: &str =
    "allocation extension is wrong. right form: #FullyMatched allocation element1 to element2. element cannot be definitions.";

fn write_inputs(root: &Path, supplier: &str) -> InitOptions {
    let input = root.join("in");
    fs::create_dir_all(&input).unwrap();
    fs::write(input.join("oem.sysml"), MEASUREMENT_OEM).unwrap();
    fs::write(input.join("supplier.sysml"), supplier).unwrap();
    InitOptions::new(
        input.join("oem.sysml"),
        input.join("supplier.sysml"),
        root.join("session"),
    )
}

fn fresh() -> (tempfile::TempDir, Session) {
    let tmp = tempfile::tempdir().unwrap();
    let session = Session::init(
        write_inputs(tmp.path(), MEASUREMENT_SUPPLIER),
        Clock::fixed(1_700_000_000),
    )
    .unwrap();
    (tmp, session)
}

/// Runs and confirms stages up to and including `last`.
fn drive(session: &mut Session, last: usize) {
    for k in 0..=last {
        if k > 0 {
            session
                .run_stage(k, &RunOptions::default())
                .unwrap_or_else(|e| panic!("stage {k}: {e}"));
        }
        if k == 3 {
            session.auto_verdicts("test").unwrap();
        }
        session
            .confirm_stage(k, None, true)
            .unwrap_or_else(|e| panic!("confirm {k}: {e}"));
    }
}

#[test]
fn init_parses_inputs_and_waits_for_confirmation() {
    let (_tmp, session) = fresh();
    let s = session.state();
    assert_eq!(s.stages[0].status, StageStatus::AwaitingConfirmation);
    assert!(s.stages[1..]
        .iter()
        .all(|st| st.status == StageStatus::Pending));
    assert!(session.dir().join(DEMO_FILE).exists());
    assert!(session
        .read_artifact(DEMO_FILE)
        .unwrap()
        .contains("#FullyMatched allocation"));
    assert!(s
        .transcript()
        .iter()
        .any(|e| e.text.contains("bundled library")));
}

#[test]
fn broken_supplier_fails_stage_zero_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let session = Session::init(
        write_inputs(tmp.path(), "package Broken { part def ; }"),
        Clock::fixed(0),
    )
    .unwrap();
    assert_eq!(session.state().stages[0].status, StageStatus::Failed);
    let report: ParseReport =
        serde_json::from_str(&session.read_artifact(PARSE_FILE).unwrap()).unwrap();
    assert!(report.supplier.diagnostics.iter().any(Diagnostic::is_error));
    assert!(report.oem.diagnostics.is_empty());
    assert!(!session.dir().join(DEMO_FILE).exists());
}

#[test]
fn fixing_the_input_and_rerunning_stage_zero_recovers() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = write_inputs(tmp.path(), "package Broken { part def ; }");
    let supplier = opts.supplier.clone();
    let mut session = Session::init(opts, Clock::fixed(0)).unwrap();
    fs::write(&supplier, MEASUREMENT_SUPPLIER).unwrap();
    session.run_stage(0, &RunOptions::default()).unwrap();
    assert_eq!(
        session.state().stages[0].status,
        StageStatus::AwaitingConfirmation
    );
    assert_eq!(session.state().stages[0].attempts, 2);
}

#[test]
fn full_run_completes_and_exports_seven_files() {
    let (tmp, mut session) = fresh();
    let before: Vec<_> = ["oem.sysml", "supplier.sysml"]
        .iter()
        .map(|f| digest_source(&fs::read_to_string(tmp.path().join("in").join(f)).unwrap()))
        .collect();
    drive(&mut session, 5);
    session.run_stage(6, &RunOptions::default()).unwrap();
    session.confirm_stage(6, Some("done"), false).unwrap();
    assert!(session.state().is_complete());

    let export = session.dir().join(EXPORT_DIR);
    let mut files: Vec<String> = fs::read_dir(&export)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    let mut expected: Vec<String> = BUNDLE_FILES.iter().map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(files, expected);

    let diagnosis = session.diagnosis().unwrap();
    assert_eq!(diagnosis.count(Severity::Error), 0, "{diagnosis:#?}");

    let after: Vec<_> = ["oem.sysml", "supplier.sysml"]
        .iter()
        .map(|f| digest_source(&fs::read_to_string(tmp.path().join("in").join(f)).unwrap()))
        .collect();
    assert_eq!(before, after);
    let stage6 = session.state().stages[6]
        .transcript
        .iter()
        .map(|e| e.text.clone())
        .collect::<Vec<_>>()
        .join("\n");
    assert!(stage6.contains("summary.md sha256:"));
}

#[test]
fn re_export_is_byte_identical() {
    let (tmp, mut session) = fresh();
    drive(&mut session, 5);
    session.run_stage(6, &RunOptions::default()).unwrap();
    let a = session.export_to(&tmp.path().join("a")).unwrap();
    session.run_stage(6, &RunOptions::default()).unwrap();
    let b = session.export_to(&tmp.path().join("b")).unwrap();
    assert_eq!(a, b);
    for name in BUNDLE_FILES {
        assert_eq!(
            fs::read(tmp.path().join("a").join(name)).unwrap(),
            fs::read(session.dir().join(EXPORT_DIR).join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn export_before_stage_five_is_refused() {
    let (tmp, mut session) = fresh();
    drive(&mut session, 4);
    assert!(matches!(
        session.export_to(&tmp.path().join("x")),
        Err(SessionError::Gating(_))
    ));
    assert!(matches!(
        session.run_stage(6, &RunOptions::default()),
        Err(SessionError::Gating(_))
    ));
}

#[test]
fn running_ahead_of_confirmation_is_a_gating_error() {
    let (_tmp, mut session) = fresh();
    let err = session.run_stage(3, &RunOptions::default()).unwrap_err();
    assert_eq!(err.code(), ErrorCode::Gating);
    assert!(!session.dir().join(MAPPINGS_FILE).exists());
    assert!(matches!(
        session.run_stage(9, &RunOptions::default()),
        Err(SessionError::Usage(_))
    ));
}

#[test]
fn rejection_feedback_reaches_the_next_provider_request_verbatim() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 1);
    session.run_stage(2, &RunOptions::default()).unwrap();
    session.reject_stage(2, CORRECTION).unwrap();
    assert_eq!(session.state().stages[2].status, StageStatus::Pending);

    let recorder = Arc::new(RecordingProvider::new(MockProvider));
    let options = RunOptions {
        provider: Some(recorder.clone()),
        expected_attempts: None,
        settings: None,
    };
    session.run_stage(2, &options).unwrap();
    let requests = recorder.requests();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].feedback, vec![CORRECTION.to_string()]);
    let user_entries: Vec<_> = session
        .state()
        .transcript()
        .into_iter()
        .filter(|e| e.actor == Actor::User)
        .cloned()
        .collect();
    assert!(user_entries.iter().any(|e| e.text.contains(CORRECTION)));
}

#[test]
fn reopen_resets_later_stages_and_keeps_history() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 4);
    let transcript_len = session.state().transcript().len();
    session.reopen_stage(2, Some("revisit matches")).unwrap();
    let s = session.state();
    assert_eq!(s.stages[2].status, StageStatus::AwaitingConfirmation);
    assert!(s.stages[3..]
        .iter()
        .all(|st| st.status == StageStatus::Pending && st.artifacts.is_empty()));
    assert!(!session.dir().join(MAPPINGS_FILE).exists());
    assert!(!session.dir().join(ALIGNMENT_FILE_NAME).exists());
    assert!(session.dir().join(CANDIDATES_FILE).exists());
    assert_eq!(s.transcript().len(), transcript_len + 1);
    let seqs: Vec<u64> = s.transcript().iter().map(|e| e.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn stage_three_needs_every_verdict_and_stage_five_needs_acknowledgement() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 2);
    session.run_stage(3, &RunOptions::default()).unwrap();
    assert!(matches!(
        session.confirm_stage(3, None, false),
        Err(SessionError::Gating(_))
    ));
    session.auto_verdicts("test").unwrap();
    session.confirm_stage(3, None, false).unwrap();
    session.run_stage(4, &RunOptions::default()).unwrap();
    session.confirm_stage(4, None, false).unwrap();
    session.run_stage(5, &RunOptions::default()).unwrap();
    let coverage = session.coverage().unwrap();
    assert!(
        !coverage.is_complete(),
        "the bundled pair leaves elements unmatched"
    );
    let err = session.confirm_stage(5, None, false).unwrap_err();
    assert!(err.to_string().contains("unprocessed"));
    session.confirm_stage(5, None, true).unwrap();
    assert_eq!(
        session.state().acknowledged_unprocessed.len(),
        coverage.unprocessed_count()
    );
}

#[test]
fn verdicts_are_checked_and_persisted() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 2);
    session.run_stage(3, &RunOptions::default()).unwrap();
    let mappings = session.mappings().unwrap();
    if let Some(bad) = mappings
        .iter()
        .find(|m| m.blocking_checks().next().is_some())
    {
        let err = session
            .set_verdict(&bad.id, Verdict::Accepted, "test")
            .unwrap_err();
        assert!(matches!(
            err,
            SessionError::Verdict(VerdictError::Refused { .. })
        ));
        assert_eq!(
            session.mappings().unwrap(),
            mappings,
            "a refused verdict changes nothing"
        );
    }
    let good = mappings
        .iter()
        .find(|m| m.blocking_checks().next().is_none())
        .unwrap();
    let updated = session
        .set_verdict(&good.id, Verdict::Accepted, "test")
        .unwrap();
    assert_eq!(updated.verdict, Verdict::Accepted);
    assert_eq!(
        session
            .mappings()
            .unwrap()
            .iter()
            .find(|m| m.id == good.id)
            .unwrap()
            .verdict,
        Verdict::Accepted
    );
    assert!(matches!(
        session.set_verdict("map-nothing", Verdict::Rejected, "test"),
        Err(SessionError::NotFound(_))
    ));
}

#[test]
fn one_to_many_conflict_fails_stage_four() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 2);
    session.run_stage(3, &RunOptions::default()).unwrap();
    let mappings = session.mappings().unwrap();
    // Accept two admissible mappings that share a source element.
    let mut by_source: BTreeMap<&str, Vec<&VerifiedMapping>> = BTreeMap::new();
    for m in mappings
        .iter()
        .filter(|m| m.blocking_checks().next().is_none())
    {
        by_source
            .entry(m.candidate.source_uid.as_str())
            .or_default()
            .push(m);
    }
    let pair = by_source
        .values()
        .find(|v| v.len() >= 2)
        .expect("some source has two admissible candidates");
    session
        .set_verdict(&pair[0].id, Verdict::Accepted, "test")
        .unwrap();
    session
        .set_verdict(&pair[1].id, Verdict::Accepted, "test")
        .unwrap();
    session.auto_verdicts("test").unwrap();
    session.confirm_stage(3, None, false).unwrap();
    let err = session.run_stage(4, &RunOptions::default()).unwrap_err();
    assert_eq!(err.code(), ErrorCode::Validation);
    assert!(err.to_string().contains("OneToMany"), "{err}");
    assert_eq!(session.state().stages[4].status, StageStatus::Failed);
}

#[test]
fn provider_failure_marks_stage_failed_and_is_retryable() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 1);
    let failing = Arc::new(ScriptedProvider::new([Err(ProviderError::Transport(
        "connection refused".into(),
    ))]));
    let err = session
        .run_stage(
            2,
            &RunOptions {
                provider: Some(failing),
                expected_attempts: None,
                settings: None,
            },
        )
        .unwrap_err();
    assert_eq!(err.code(), ErrorCode::Provider);
    assert_eq!(session.state().stages[2].status, StageStatus::Failed);
    assert!(!session.dir().join(CANDIDATES_FILE).exists());
    assert!(session.dir().join(PROVIDER_LOG_FILE).exists());
    session.run_stage(2, &RunOptions::default()).unwrap();
    assert_eq!(
        session.state().stages[2].status,
        StageStatus::AwaitingConfirmation
    );
}

#[test]
fn expected_attempts_guards_concurrent_reruns() {
    let (_tmp, mut session) = fresh();
    let opts = RunOptions {
        expected_attempts: Some(0),
        ..RunOptions::default()
    };
    // Stage 0 already ran once during init.
    assert!(matches!(
        session.run_stage(0, &opts),
        Err(SessionError::Gating(_))
    ));
    let opts = RunOptions {
        expected_attempts: Some(1),
        ..RunOptions::default()
    };
    session.run_stage(0, &opts).unwrap();
}

#[test]
fn busy_lock_is_a_gating_error() {
    let (_tmp, mut session) = fresh();
    let _held = SessionLock::try_acquire(session.dir()).unwrap();
    let err = session.confirm_stage(0, None, false).unwrap_err();
    assert!(matches!(err, SessionError::Busy));
    assert_eq!(err.code(), ErrorCode::Gating);
}

#[test]
fn reloading_reproduces_state() {
    let (_tmp, mut session) = fresh();
    drive(&mut session, 3);
    let reopened = Session::open(session.dir(), Clock::fixed(0)).unwrap();
    assert_eq!(reopened.state(), session.state());
}

#[test]
fn artifacts_outside_the_session_are_not_readable() {
    let (_tmp, session) = fresh();
    assert!(matches!(
        session.read_artifact("../in/oem.sysml"),
        Err(SessionError::NotFound(_))
    ));
    assert!(session.read_artifact(SESSION_FILE).is_ok());
    assert!(session.read_artifact(OEM_INPUT).is_ok());
}
