//! Seeded fixtures shared by the property and acceptance tests: random
//! models, random verified sessions and a scripted pipeline driver.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{MEASUREMENT_OEM, MEASUREMENT_SUPPLIER};
use crate::ir::{extract_ir, IrElement, ModelIR, UidPolicy};
use crate::matcher::{MatchCandidate, Origin};
use crate::session::{Clock, InitOptions, RunOptions, Session, SessionError, STAGE_COUNT};
use crate::sysml::library::FULLY_UNMATCHED;
use crate::sysml::{bundled_library, ElementKind, Model};
use crate::verifier::{verify_candidate, Verdict, VerifiedMapping};

pub use crate::sysml::generate::random_model;

pub mod oracles;

/// Runs stages `1..=last` (Stage 0 runs at init), deciding Stage 3 with
/// automatic verdicts and acknowledging unprocessed elements at Stage 5.
pub fn drive(session: &mut Session, last: usize) -> Result<(), SessionError> {
    for k in 0..=last.min(STAGE_COUNT - 1) {
        if k > 0 {
            session.run_stage(k, &RunOptions::default())?;
        }
        if k == 3 {
            session.auto_verdicts("user")?;
        }
        session.confirm_stage(k, None, true)?;
    }
    Ok(())
}

/// Copies the bundled measurement pair to `<root>/in`, creates a session in
/// `<root>/session` and drives it through every stage.
pub fn run_bundled(root: &Path, clock: Clock) -> Result<Session, SessionError> {
    let inputs = root.join("in");
    fs::create_dir_all(&inputs).map_err(|source| SessionError::Io {
        path: inputs.clone(),
        source,
    })?;
    let oem = inputs.join("measurement_oem.sysml");
    let supplier = inputs.join("measurement_supplier.sysml");
    for (path, text) in [(&oem, MEASUREMENT_OEM), (&supplier, MEASUREMENT_SUPPLIER)] {
        fs::write(path, text).map_err(|source| SessionError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let mut session = Session::init(InitOptions::new(oem, supplier, root.join("session")), clock)?;
    drive(&mut session, STAGE_COUNT - 1)?;
    Ok(session)
}

/// A candidate between two IR elements with a random confidence.
pub fn candidate_between(rng: &mut impl Rng, s: &IrElement, t: &IrElement) -> MatchCandidate {
    MatchCandidate {
        source_uid: s.uid.clone(),
        target_uid: t.uid.clone(),
        source_qualified_name: s.qualified_name.clone(),
        target_qualified_name: t.qualified_name.clone(),
        confidence: f64::from(rng.gen_range(0u32..=100)) / 100.0,
        rationale: "generated".into(),
        features: BTreeMap::new(),
        origin: Origin::Heuristic,
    }
}

/// Two random models with their IRs.
pub fn random_pair(rng: &mut impl Rng) -> (Model, ModelIR, Model, ModelIR) {
    let source = random_model(rng);
    let target = random_model(rng);
    let (sir, _) = extract_ir(&source, &UidPolicy::derived("s-")).expect("derived uids are unique");
    let (tir, _) = extract_ir(&target, &UidPolicy::derived("t-")).expect("derived uids are unique");
    (source, sir, target, tir)
}

/// Input for a coverage computation.
#[derive(Debug, Clone)]
pub struct CoverageCase {
    pub source: ModelIR,
    pub target: ModelIR,
    pub mappings: Vec<VerifiedMapping>,
    pub eligible_kinds: BTreeSet<ElementKind>,
}

/// A random session state at Stage 5: arbitrary pairs (including pairs whose
/// ends are not eligible), every kind of verdict, and a random eligible-kind
/// set. Verdicts are assigned directly; coverage is pure accounting and must
/// hold whatever the verifier would have allowed.
pub fn random_coverage_case(rng: &mut impl Rng) -> CoverageCase {
    let (_, source, _, target) = random_pair(rng);
    let library = bundled_library();
    let mut mappings = Vec::new();
    let mut seen = BTreeSet::new();
    if !source.elements.is_empty() && !target.elements.is_empty() {
        for _ in 0..rng.gen_range(0..=source.elements.len() + target.elements.len()) {
            let s = source.elements.choose(rng).expect("non-empty");
            let t = target.elements.choose(rng).expect("non-empty");
            if !seen.insert((s.uid.clone(), t.uid.clone())) {
                continue;
            }
            let candidate = candidate_between(rng, s, t);
            let mut m =
                verify_candidate(&candidate, &source, &target, &library).expect("ends exist");
            m.verdict = match rng.gen_range(0..5) {
                0 => Verdict::Pending,
                1 => Verdict::Accepted,
                2 => Verdict::Rejected,
                3 => Verdict::Modified(FULLY_UNMATCHED.to_string()),
                _ => Verdict::Modified(library.tags.choose(rng).expect("tags").clone()),
            };
            mappings.push(m);
        }
    }
    let present: BTreeSet<ElementKind> = source
        .elements
        .iter()
        .chain(&target.elements)
        .map(|e| e.kind)
        .collect();
    let eligible_kinds = present.into_iter().filter(|_| rng.gen_bool(0.6)).collect();
    CoverageCase {
        source,
        target,
        mappings,
        eligible_kinds,
    }
}
