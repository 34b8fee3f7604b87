//! Brute-force reference computations and scenario checks. Each one is
//! written from the rule it checks, not from the implementation, so that the
//! two can disagree.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{candidate_between, random_pair, CoverageCase};
use crate::aligner::{generate_alignment_package, AlignError, AlignerConfig};
use crate::checker::check_consistency;
use crate::ir::{extract_ir, IrElement, IrPort, ModelIR, UidPolicy};
use crate::matcher::similarity::PortRelation;
use crate::matcher::synthetic::{synthetic_corpus, Tier};
use crate::matcher::{greedy_assignment, propose_heuristic, MatchCandidate, MatchConfig, Origin};
use crate::sysml::render::render_qualified;
use crate::sysml::{bundled_library, parse_model, Direction, ElementKind, Model};
use crate::verifier::{
    apply_verdict, verify_candidate, Construct, Verdict, VerdictError, VerifiedMapping,
};
use crate::Severity;

const FULLY_UNMATCHED: &str = "FullyUnmatched";

/// Expected (matched, explicitly unmatched, unprocessed) uid sets for one side,
/// by set arithmetic over the raw verdicts.
pub fn coverage_oracle(case: &CoverageCase, source_side: bool) -> [BTreeSet<String>; 3] {
    let ir = if source_side {
        &case.source
    } else {
        &case.target
    };
    let eligible: BTreeSet<String> = ir
        .elements
        .iter()
        .filter(|e| case.eligible_kinds.contains(&e.kind))
        .map(|e| e.uid.clone())
        .collect();
    let end = |m: &VerifiedMapping| {
        if source_side {
            m.candidate.source_uid.clone()
        } else {
            m.candidate.target_uid.clone()
        }
    };
    let positive = |m: &&VerifiedMapping| match &m.verdict {
        Verdict::Accepted => true,
        Verdict::Modified(tag) => tag != FULLY_UNMATCHED,
        _ => false,
    };
    let negative = |m: &&VerifiedMapping| matches!(&m.verdict, Verdict::Modified(tag) if tag == FULLY_UNMATCHED);

    let matched: BTreeSet<String> =
        &eligible & &case.mappings.iter().filter(positive).map(end).collect();
    let recorded: BTreeSet<String> = case.mappings.iter().filter(negative).map(end).collect();
    let explicit: BTreeSet<String> = &(&eligible & &recorded) - &matched;
    let unprocessed: BTreeSet<String> = &(&eligible - &matched) - &explicit;
    [matched, explicit, unprocessed]
}

/// Checks the partition law and agreement with [`coverage_oracle`] on both sides.
pub fn check_coverage_case(case: &CoverageCase) -> Result<(), String> {
    let report = crate::checker::check_coverage(
        &case.mappings,
        &case.source,
        &case.target,
        &case.eligible_kinds,
    );
    for (side, cov, label) in [
        (true, &report.source, "source"),
        (false, &report.target, "target"),
    ] {
        let [m, e, u] = coverage_oracle(case, side);
        let got: [BTreeSet<String>; 3] = [
            cov.matched.iter().cloned().collect(),
            cov.explicitly_unmatched.iter().cloned().collect(),
            cov.unprocessed.iter().cloned().collect(),
        ];
        let lists = [
            cov.matched.len(),
            cov.explicitly_unmatched.len(),
            cov.unprocessed.len(),
        ];
        if lists != [got[0].len(), got[1].len(), got[2].len()] {
            return Err(format!("{label}: duplicate uids in a coverage list"));
        }
        if !(got[0].is_disjoint(&got[1])
            && got[0].is_disjoint(&got[2])
            && got[1].is_disjoint(&got[2]))
        {
            return Err(format!("{label}: coverage lists overlap"));
        }
        let union: BTreeSet<String> = got.iter().flatten().cloned().collect();
        let eligible = &(&m | &e) | &u;
        if union != eligible || cov.total_eligible != eligible.len() {
            return Err(format!(
                "{label}: lists cover {} of {} eligible uids",
                union.len(),
                eligible.len()
            ));
        }
        if got != [m, e, u] {
            return Err(format!("{label}: coverage disagrees with set arithmetic"));
        }
    }
    Ok(())
}

/// Which end-kind combination a scenario exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EndKinds {
    BothUsages,
    BothDefinitions,
    Mixed,
}

/// Whether some element below the root of `model` is named (or short-named)
/// like one of `roots`.
fn shadows(model: &Model, roots: &[&str]) -> bool {
    model.elements().skip(1).any(|e| {
        [e.name.as_deref(), e.short_name.as_deref()]
            .into_iter()
            .flatten()
            .any(|n| roots.contains(&n))
    })
}

fn forged_package(source: &Model, target: &Model, s: &str, t: &str) -> Result<String, String> {
    let q = |n: &str| {
        n.parse()
            .map(|q| render_qualified(&q))
            .map_err(|_| format!("bad name {n}"))
    };
    Ok(format!(
        "package Forged {{\n    private import {}::*;\n    private import {}::*;\n    public import AlignmentExtension::*;\n    \
         #FullyMatched allocation forged {} to {};\n    \
         comment about forged /* confidence: 0.50; rationale: forged; origin: User */\n}}\n",
        source.name(),
        target.name(),
        q(s)?,
        q(t)?,
    ))
}

/// One randomized def/usage candidate pair pushed through all three layers:
///
/// 1. the verifier refuses to accept a definition/usage pair, citing the rule;
/// 2. the aligner refuses an allocation construct with a definition end even
///    when the verdict is forged past the verifier;
/// 3. the checker reports a hand-written allocation with a definition end as
///    an Error naming the rule;
///
/// and every verdict the verifier does allow yields a package without an
/// allocation to a definition. Returns `Ok(None)` when the random models
/// have no definition or usage to pick.
pub fn end_kind_case(seed: u64) -> Result<Option<EndKinds>, String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    // A member named like the other model's root package would shadow it
    // inside the alignment package, so its references would not reach the
    // definition at all; such pairs are redrawn.
    let (s_model, sir, t_model, tir) = loop {
        let pair = random_pair(&mut r);
        let roots = [pair.0.name(), pair.2.name()];
        if !shadows(&pair.0, &roots) && !shadows(&pair.2, &roots) {
            break pair;
        }
    };
    let library = bundled_library();
    let pick = |ir: &ModelIR, r: &mut ChaCha8Rng| {
        let ends: Vec<&IrElement> = ir
            .elements
            .iter()
            .filter(|e| e.kind.is_definition() || e.kind.is_usage())
            .collect();
        ends.choose(r).map(|e| (*e).clone())
    };
    let (Some(a), Some(b)) = (pick(&sir, &mut r), pick(&tir, &mut r)) else {
        return Ok(None);
    };
    let m = verify_candidate(&candidate_between(&mut r, &a, &b), &sir, &tir, &library)
        .map_err(|e| e.to_string())?;
    let kinds = match (a.kind.is_definition(), b.kind.is_definition()) {
        (false, false) => EndKinds::BothUsages,
        (true, true) => EndKinds::BothDefinitions,
        _ => EndKinds::Mixed,
    };
    let any_def = kinds != EndKinds::BothUsages;
    let ctx = format!(
        "{} ({}) / {} ({})",
        a.qualified_name, a.kind, b.qualified_name, b.kind
    );

    // Layer 1.
    for verdict in [Verdict::Accepted, Verdict::Modified("FullyMatched".into())] {
        let outcome = apply_verdict(&m, verdict.clone(), &library, "user", "t");
        if kinds == EndKinds::Mixed {
            match outcome {
                Err(VerdictError::Refused { reasons, .. })
                    if reasons.iter().any(|r| {
                        r.starts_with("end_kind") && r.contains("cannot be definitions")
                    }) => {}
                other => {
                    return Err(format!(
                        "{ctx}: verifier let {verdict:?} through: {other:?}"
                    ))
                }
            }
        }
    }
    if kinds == EndKinds::BothDefinitions && m.construct != Construct::AliasBinding {
        return Err(format!("{ctx}: definitions not routed to an alias"));
    }
    let unmatched = apply_verdict(
        &m,
        Verdict::Modified(FULLY_UNMATCHED.into()),
        &library,
        "user",
        "t",
    )
    .map_err(|e| format!("{ctx}: FullyUnmatched refused: {e}"))?;
    if any_def && unmatched.effective_construct() != Construct::CommentRecord {
        return Err(format!(
            "{ctx}: no-match record with a definition end is not a comment"
        ));
    }

    // Allowed paths.
    for verdict in [Verdict::Accepted, Verdict::Modified(FULLY_UNMATCHED.into())] {
        let Ok(decided) = apply_verdict(&m, verdict, &library, "user", "t") else {
            continue;
        };
        let pkg = generate_alignment_package(
            &[decided],
            &s_model,
            &t_model,
            &library,
            &AlignerConfig::default(),
            "t",
        )
        .map_err(|e| format!("{ctx}: allowed verdict failed to generate: {e}"))?;
        let reparsed = parse_model(&pkg.text, "pkg").map_err(|d| format!("{ctx}: {d}"))?;
        let diagnosis = check_consistency(&reparsed, &s_model, &t_model, &library);
        if diagnosis
            .items
            .iter()
            .any(|i| i.diagnostic.code == "semantic.allocation-end-definition")
        {
            return Err(format!(
                "{ctx}: allowed path produced an allocation to a definition:\n{}",
                pkg.text
            ));
        }
        let allocations = reparsed
            .root
            .children
            .iter()
            .filter(|c| c.kind == ElementKind::AllocationUsage)
            .count();
        if any_def && allocations > 0 {
            return Err(format!("{ctx}: allocation emitted for a definition end"));
        }
    }

    // Layer 2.
    let mut forged = m.clone();
    forged.verdict = Verdict::Accepted;
    forged.construct = Construct::TaggedAllocation;
    let outcome = generate_alignment_package(
        &[forged],
        &s_model,
        &t_model,
        &library,
        &AlignerConfig::default(),
        "t",
    );
    match (&outcome, any_def) {
        (Err(AlignError::EndKindViolation { .. }), true) => {}
        (Err(AlignError::EndKindViolation { detail, .. }), false) => {
            return Err(format!("{ctx}: aligner refused two usages: {detail}"));
        }
        (_, true) => {
            return Err(format!(
                "{ctx}: aligner accepted a forged allocation to a definition"
            ))
        }
        (_, false) => {}
    }

    // Layer 3.
    let text = forged_package(&s_model, &t_model, &a.qualified_name, &b.qualified_name)?;
    let pkg = parse_model(&text, "forged").map_err(|d| format!("{ctx}: {d}\n{text}"))?;
    let diagnosis = check_consistency(&pkg, &s_model, &t_model, &library);
    let hits: Vec<_> = diagnosis
        .items
        .iter()
        .filter(|i| i.diagnostic.code == "semantic.allocation-end-definition")
        .collect();
    if hits.is_empty() == any_def {
        return Err(format!(
            "{ctx}: checker reported {} end-kind diagnostic(s)",
            hits.len()
        ));
    }
    if hits.iter().any(|h| {
        h.diagnostic.severity != Severity::Error
            || !h.diagnostic.message.contains("cannot be definitions")
    }) {
        return Err(format!(
            "{ctx}: end-kind diagnostic is not an Error citing the rule"
        ));
    }
    Ok(Some(kinds))
}

/// Frozen seed and size of the synthetic ground-truth corpus.
pub const SYNTHETIC_SEED: u64 = 20_250_601;
pub const SYNTHETIC_PAIRS_PER_TIER: usize = 8;

/// Precision and recall of the heuristic matcher's one-to-one assignment on
/// one tier of the synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierScore {
    pub tier: Tier,
    pub precision: f64,
    pub recall: f64,
    pub pairs: usize,
}

/// Micro-averaged scores per tier at the default configuration, counting
/// only ground-truth pairs whose ends are both eligible.
pub fn matcher_quality(seed: u64, pairs_per_tier: usize) -> Vec<TierScore> {
    let config = MatchConfig::default();
    let mut totals: BTreeMap<u8, (usize, usize, usize, usize)> = BTreeMap::new();
    for pair in synthetic_corpus(seed, pairs_per_tier) {
        let s = parse_model(&pair.source_text, "source").expect("synthetic source parses");
        let t = parse_model(&pair.target_text, "target").expect("synthetic target parses");
        let (sir, _) = extract_ir(&s, &UidPolicy::derived("s-")).expect("unique uids");
        let (tir, _) = extract_ir(&t, &UidPolicy::derived("t-")).expect("unique uids");
        let eligible: BTreeSet<&str> = sir
            .elements
            .iter()
            .chain(&tir.elements)
            .filter(|e| config.is_eligible(e))
            .map(|e| e.qualified_name.as_str())
            .collect();
        let truth: BTreeSet<(String, String)> = pair
            .ground_truth
            .iter()
            .filter(|(a, b)| eligible.contains(a.as_str()) && eligible.contains(b.as_str()))
            .map(|(a, b)| (a.clone(), b.clone()))
            .collect();
        let set = propose_heuristic(&sir, &tir, &config).expect("default config is valid");
        let found: BTreeSet<(String, String)> = greedy_assignment(&set)
            .into_iter()
            .map(|c| {
                (
                    c.source_qualified_name.clone(),
                    c.target_qualified_name.clone(),
                )
            })
            .collect();
        let row = totals.entry(pair.tier as u8).or_default();
        row.0 += found.intersection(&truth).count();
        row.1 += found.len();
        row.2 += truth.len();
        row.3 += 1;
    }
    Tier::ALL
        .iter()
        .map(|&tier| {
            let (hits, found, truth, pairs) =
                totals.get(&(tier as u8)).copied().unwrap_or_default();
            TierScore {
                tier,
                precision: if found == 0 {
                    1.0
                } else {
                    hits as f64 / found as f64
                },
                recall: if truth == 0 {
                    1.0
                } else {
                    hits as f64 / truth as f64
                },
                pairs,
            }
        })
        .collect()
}

fn port(name: &str, ty: &str) -> IrPort {
    IrPort {
        name: name.into(),
        direction: Some(Direction::In),
        type_name: Some(ty.into()),
    }
}

fn grid_element(uid: &str, qn: &str, kind: ElementKind, ports: Vec<IrPort>) -> ModelIR {
    let el = IrElement {
        uid: uid.into(),
        name: qn.rsplit("::").next().map(str::to_string),
        qualified_name: qn.into(),
        kind,
        owner_uid: None,
        typed_by: Vec::new(),
        specializes: Vec::new(),
        ports,
        attributes: Vec::new(),
        doc: None,
        metadata_tags: Vec::new(),
    };
    let model = qn.split("::").next().unwrap_or(qn).to_string();
    ModelIR {
        model_name: model.clone(),
        source_name: model,
        source_digest: String::new(),
        elements: vec![el],
    }
}

/// Every (port relation, kind compatibility) cell with the tag the
/// classification rules prescribe for it. The subset relation is split by
/// direction, so the grid has five rows.
pub const CLASSIFICATION_GRID: [(PortRelation, bool, &str); 10] = [
    (PortRelation::Equal, true, "FullyMatched"),
    (PortRelation::TargetSubset, true, "RequireComplement"),
    (PortRelation::SourceSubset, true, "RequireComplement"),
    (PortRelation::Partial, true, "RequireModification"),
    (PortRelation::Disjoint, true, "RequireModification"),
    (PortRelation::Equal, false, "RequireModification"),
    (PortRelation::TargetSubset, false, "RequireModification"),
    (PortRelation::SourceSubset, false, "RequireModification"),
    (PortRelation::Partial, false, "RequireModification"),
    (PortRelation::Disjoint, false, "RequireModification"),
];

/// Builds a pair realizing each grid cell, verifies it and compares the
/// tag; returns the number of cells checked.
pub fn check_classification_grid() -> Result<usize, String> {
    let library = bundled_library();
    let source_ports = || vec![port("a", "A"), port("b", "B")];
    for (relation, compatible, expected) in CLASSIFICATION_GRID {
        let target_ports = match relation {
            PortRelation::Equal => vec![port("b", "B"), port("a", "A")],
            PortRelation::TargetSubset => vec![port("a", "A")],
            PortRelation::SourceSubset => vec![port("a", "A"), port("b", "B"), port("c", "C")],
            PortRelation::Partial => vec![port("a", "A"), port("c", "C")],
            PortRelation::Disjoint => vec![port("c", "C")],
        };
        let target_kind = if compatible {
            ElementKind::PartUsage
        } else {
            ElementKind::RequirementUsage
        };
        let source = grid_element("s-1", "S::unit", ElementKind::PartUsage, source_ports());
        let target = grid_element("t-1", "T::unit", target_kind, target_ports);
        let candidate = MatchCandidate {
            source_uid: "s-1".into(),
            target_uid: "t-1".into(),
            source_qualified_name: "S::unit".into(),
            target_qualified_name: "T::unit".into(),
            confidence: 0.5,
            rationale: "grid".into(),
            features: BTreeMap::new(),
            origin: Origin::Heuristic,
        };
        let cell = format!("{relation:?}/compatible={compatible}");
        let m = verify_candidate(&candidate, &source, &target, &library)
            .map_err(|e| format!("{cell}: {e}"))?;
        if m.port_relation != relation {
            return Err(format!("{cell}: realized as {:?}", m.port_relation));
        }
        if m.proposed_tag != expected || !library.contains(&m.proposed_tag) {
            return Err(format!(
                "{cell}: tagged {} instead of {expected}",
                m.proposed_tag
            ));
        }
        if m.check("kind_compatibility").map(|c| c.passed) != Some(compatible) {
            return Err(format!("{cell}: kind compatibility check disagrees"));
        }
    }
    Ok(CLASSIFICATION_GRID.len())
}
