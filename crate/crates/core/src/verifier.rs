//! Stage 3: admissibility checks, tag classification, conflicts and verdicts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::sha256_hex;
use crate::diagnostic::Severity;
use crate::ir::{IrElement, ModelIR};
use crate::matcher::{candidate_order, port_relation, MatchCandidate, PortRelation};
use crate::sysml::library::{
    FULLY_MATCHED, FULLY_UNMATCHED, REQUIRE_COMPLEMENT, REQUIRE_MODIFICATION,
};
use crate::sysml::ExtensionLibrary;

pub const CHECK_END_KIND: &str = "end_kind";
pub const CHECK_KIND_COMPATIBILITY: &str = "kind_compatibility";
pub const CHECK_REFERENCES: &str = "references_resolve";
pub const CHECK_TAG: &str = "tag_admissible";

/// How an accepted mapping is realized in the alignment package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Construct {
    /// `alias <target-local-name> for <source>;` — definition-level correspondence.
    AliasBinding,
    /// `#Tag allocation <name> <source> to <target>;` — usage-level correspondence.
    TaggedAllocation,
    /// A structured comment about both ends — a deliberate no-match between
    /// elements that cannot be allocation ends.
    CommentRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub severity: Severity,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &str, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: true,
            severity: Severity::Info,
            detail: detail.into(),
        }
    }

    fn fail(name: &str, severity: Severity, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            severity,
            detail: detail.into(),
        }
    }

    pub fn is_blocking(&self) -> bool {
        !self.passed && self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "tag")]
pub enum Verdict {
    Pending,
    Accepted,
    Rejected,
    Modified(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub actor: String,
    pub timestamp: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiedMapping {
    /// Stable identifier derived from the uid pair.
    pub id: String,
    pub candidate: MatchCandidate,
    pub source_kind: crate::sysml::ElementKind,
    pub target_kind: crate::sysml::ElementKind,
    pub port_relation: PortRelation,
    pub checks: Vec<CheckResult>,
    pub proposed_tag: String,
    pub construct: Construct,
    pub verdict: Verdict,
    pub verdict_record: Option<VerdictRecord>,
}

impl VerifiedMapping {
    /// The tag in force: the user's override when modified, else the proposal.
    pub fn effective_tag(&self) -> &str {
        match &self.verdict {
            Verdict::Modified(tag) => tag,
            _ => &self.proposed_tag,
        }
    }

    /// The construct in force: a FullyUnmatched record becomes a tagged
    /// allocation between usages and a comment record otherwise.
    pub fn effective_construct(&self) -> Construct {
        if self.effective_tag() == FULLY_UNMATCHED {
            if self.source_kind.is_usage() && self.target_kind.is_usage() {
                Construct::TaggedAllocation
            } else {
                Construct::CommentRecord
            }
        } else {
            self.construct
        }
    }

    pub fn is_decided(&self) -> bool {
        matches!(self.verdict, Verdict::Accepted | Verdict::Modified(_))
    }

    /// Counts as an alignment: accepted, or modified to a tag other than FullyUnmatched.
    pub fn is_match(&self) -> bool {
        match &self.verdict {
            Verdict::Accepted => true,
            Verdict::Modified(tag) => tag != FULLY_UNMATCHED,
            _ => false,
        }
    }

    /// Deliberately recorded as not matching.
    pub fn is_explicit_no_match(&self) -> bool {
        matches!(&self.verdict, Verdict::Modified(tag) if tag == FULLY_UNMATCHED)
    }

    /// Participates in conflict detection: pending or a (non-FullyUnmatched) match.
    pub fn is_active(&self) -> bool {
        self.verdict == Verdict::Pending || self.is_match()
    }

    pub fn blocking_checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.is_blocking())
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn mapping_id(source_uid: &str, target_uid: &str) -> String {
    format!(
        "map-{}",
        &sha256_hex(format!("{source_uid}|{target_uid}"))[..10]
    )
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("candidate references unknown uid `{0}`")]
    UnknownUid(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VerdictError {
    #[error("a verdict cannot be reset to Pending")]
    PendingNotAllowed,
    #[error("tag `{0}` is not defined in the extension library")]
    UnknownTag(String),
    #[error("verdict refused for mapping {id}: {}", reasons.join("; "))]
    Refused { id: String, reasons: Vec<String> },
}

/// The tag the structural table assigns to a pair.
pub fn classify(kinds_compatible: bool, relation: PortRelation) -> &'static str {
    match (kinds_compatible, relation) {
        (false, _) => REQUIRE_MODIFICATION,
        (true, PortRelation::Equal) => FULLY_MATCHED,
        (true, PortRelation::TargetSubset | PortRelation::SourceSubset) => REQUIRE_COMPLEMENT,
        (true, PortRelation::Partial | PortRelation::Disjoint) => REQUIRE_MODIFICATION,
    }
}

fn end_kind_check(source: &IrElement, target: &IrElement) -> (CheckResult, Construct) {
    let (s, t) = (source.kind, target.kind);
    if s.is_usage() && t.is_usage() {
        (
            CheckResult::pass(CHECK_END_KIND, "both ends are usages: tagged allocation"),
            Construct::TaggedAllocation,
        )
    } else if s.is_definition() && t.is_definition() {
        (
            CheckResult::fail(
                CHECK_END_KIND,
                Severity::Warning,
                format!("allocation ends cannot be definitions ({s} and {t}); routed to an alias binding"),
            ),
            Construct::AliasBinding,
        )
    } else {
        (
            CheckResult::fail(
                CHECK_END_KIND,
                Severity::Error,
                format!(
                    "allocation ends cannot be definitions and a definition cannot be aliased to a usage \
                     ({} is a {s}, {} is a {t})",
                    source.qualified_name, target.qualified_name
                ),
            ),
            Construct::TaggedAllocation,
        )
    }
}

/// Runs the admissibility checks on one candidate and classifies it.
pub fn verify_candidate(
    candidate: &MatchCandidate,
    source: &ModelIR,
    target: &ModelIR,
    library: &ExtensionLibrary,
) -> Result<VerifiedMapping, VerifyError> {
    let s = source
        .get(&candidate.source_uid)
        .ok_or_else(|| VerifyError::UnknownUid(candidate.source_uid.clone()))?;
    let t = target
        .get(&candidate.target_uid)
        .ok_or_else(|| VerifyError::UnknownUid(candidate.target_uid.clone()))?;

    let mut checks = Vec::new();
    let (end_kind, construct) = end_kind_check(s, t);
    checks.push(end_kind);

    let compatible = s.kind.compatible_with(t.kind);
    checks.push(if compatible {
        CheckResult::pass(
            CHECK_KIND_COMPATIBILITY,
            format!("{} and {} are compatible", s.kind, t.kind),
        )
    } else {
        CheckResult::fail(
            CHECK_KIND_COMPATIBILITY,
            Severity::Error,
            format!("{} cannot be aligned with {}", s.kind, t.kind),
        )
    });

    checks.push(CheckResult::pass(
        CHECK_REFERENCES,
        format!("{} and {} resolve", s.qualified_name, t.qualified_name),
    ));

    let relation = port_relation(&s.ports, &t.ports);
    let tag = classify(compatible, relation);
    let relation_detail = match relation {
        PortRelation::Equal => "port signatures are equal".to_string(),
        PortRelation::TargetSubset => {
            "target ports are a strict subset of source ports".to_string()
        }
        PortRelation::SourceSubset => {
            "source ports are a strict subset of target ports".to_string()
        }
        PortRelation::Partial => "port signatures overlap partially".to_string(),
        PortRelation::Disjoint => "port signatures are disjoint".to_string(),
    };
    checks.push(if library.contains(tag) {
        CheckResult::pass(CHECK_TAG, format!("{tag}: {relation_detail}"))
    } else {
        CheckResult::fail(
            CHECK_TAG,
            Severity::Error,
            format!(
                "{tag} ({relation_detail}) is not defined in library {}",
                library.package_name
            ),
        )
    });

    Ok(VerifiedMapping {
        id: mapping_id(&candidate.source_uid, &candidate.target_uid),
        candidate: candidate.clone(),
        source_kind: s.kind,
        target_kind: t.kind,
        port_relation: relation,
        checks,
        proposed_tag: tag.to_string(),
        construct,
        verdict: Verdict::Pending,
        verdict_record: None,
    })
}

/// Verifies every candidate, in candidate order.
pub fn verify_all(
    candidates: &[MatchCandidate],
    source: &ModelIR,
    target: &ModelIR,
    library: &ExtensionLibrary,
) -> Result<Vec<VerifiedMapping>, VerifyError> {
    let mut sorted: Vec<&MatchCandidate> = candidates.iter().collect();
    sorted.sort_by(|a, b| candidate_order(a, b));
    sorted
        .into_iter()
        .map(|c| verify_candidate(c, source, target, library))
        .collect()
}

/// Records a human verdict. Accepting (or modifying to a matching tag) a
/// mapping with a failing Error-level check is refused; marking it
/// FullyUnmatched is always allowed.
pub fn apply_verdict(
    mapping: &VerifiedMapping,
    verdict: Verdict,
    library: &ExtensionLibrary,
    actor: &str,
    timestamp: &str,
) -> Result<VerifiedMapping, VerdictError> {
    let note = match &verdict {
        Verdict::Pending => return Err(VerdictError::PendingNotAllowed),
        Verdict::Modified(tag) if !library.contains(tag) => {
            return Err(VerdictError::UnknownTag(tag.clone()))
        }
        Verdict::Modified(tag) => Some(format!("user override: {} -> {tag}", mapping.proposed_tag)),
        _ => None,
    };
    let matching = match &verdict {
        Verdict::Accepted => true,
        Verdict::Modified(tag) => tag != FULLY_UNMATCHED,
        _ => false,
    };
    if matching {
        let reasons: Vec<String> = mapping
            .blocking_checks()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        if !reasons.is_empty() {
            return Err(VerdictError::Refused {
                id: mapping.id.clone(),
                reasons,
            });
        }
    }
    let mut out = mapping.clone();
    out.verdict = verdict;
    out.verdict_record = Some(VerdictRecord {
        actor: actor.to_string(),
        timestamp: timestamp.to_string(),
        note,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    ManyToOne,
    OneToMany,
    CycleViaAlias,
    AbstractionMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    /// Mapping ids, sorted.
    pub members: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicts: Vec<Conflict>,
}

impl ConflictReport {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }

    pub fn of_kind(&self, kind: ConflictKind) -> impl Iterator<Item = &Conflict> {
        self.conflicts.iter().filter(move |c| c.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictConfig {
    /// Largest tolerated difference in owner-chain depth between the two ends.
    pub depth_limit: usize,
}

impl Default for ConflictConfig {
    fn default() -> Self {
        ConflictConfig { depth_limit: 2 }
    }
}

fn depth(qualified_name: &str) -> usize {
    qualified_name.matches("::").count()
}

fn local_name(qualified_name: &str) -> &str {
    qualified_name.rsplit("::").next().unwrap_or(qualified_name)
}

/// Conflicts among the active mappings (pending, accepted or modified to a matching tag).
pub fn detect_conflicts(mappings: &[VerifiedMapping], config: &ConflictConfig) -> ConflictReport {
    let active: Vec<&VerifiedMapping> = mappings.iter().filter(|m| m.is_active()).collect();
    let mut conflicts = Vec::new();

    let mut by_source: BTreeMap<&str, Vec<&VerifiedMapping>> = BTreeMap::new();
    let mut by_target: BTreeMap<&str, Vec<&VerifiedMapping>> = BTreeMap::new();
    for m in &active {
        by_source
            .entry(&m.candidate.source_uid)
            .or_default()
            .push(m);
        by_target
            .entry(&m.candidate.target_uid)
            .or_default()
            .push(m);
    }
    for (kind, groups, side) in [
        (ConflictKind::OneToMany, &by_source, "source"),
        (ConflictKind::ManyToOne, &by_target, "target"),
    ] {
        for (uid, group) in groups {
            if group.len() >= 2 {
                let mut members: Vec<String> = group.iter().map(|m| m.id.clone()).collect();
                members.sort();
                conflicts.push(Conflict {
                    kind,
                    members,
                    detail: format!("{side} {uid} appears in {} active mappings", group.len()),
                });
            }
        }
    }

    for m in &active {
        let (ds, dt) = (
            depth(&m.candidate.source_qualified_name),
            depth(&m.candidate.target_qualified_name),
        );
        if ds.abs_diff(dt) > config.depth_limit {
            conflicts.push(Conflict {
                kind: ConflictKind::AbstractionMismatch,
                members: vec![m.id.clone()],
                detail: format!(
                    "{} (depth {ds}) and {} (depth {dt}) differ by more than {}",
                    m.candidate.source_qualified_name,
                    m.candidate.target_qualified_name,
                    config.depth_limit
                ),
            });
        }
    }

    conflicts.extend(alias_cycles(&active));
    conflicts.sort();
    ConflictReport { conflicts }
}

/// Alias bindings form a name graph: binding `m1` points at `m2` when the
/// element `m1` binds has the local name that `m2` introduces as an alias.
/// Every strongly connected component of two or more bindings is a cycle.
fn alias_cycles(active: &[&VerifiedMapping]) -> Vec<Conflict> {
    let aliases: Vec<&VerifiedMapping> = active
        .iter()
        .copied()
        .filter(|m| m.effective_construct() == Construct::AliasBinding)
        .collect();
    let n = aliases.len();
    let edges: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    i != j
                        && local_name(&aliases[i].candidate.source_qualified_name)
                            == local_name(&aliases[j].candidate.target_qualified_name)
                })
                .collect()
        })
        .collect();
    // Reachability closure; n is small (alias bindings only).
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        let mut stack = edges[i].clone();
        while let Some(j) = stack.pop() {
            if !row[j] {
                row[j] = true;
                stack.extend(&edges[j]);
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    // reach is read in both orientations, so index loops read clearer here
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        if seen.contains(&i) {
            continue;
        }
        let component: Vec<usize> = (0..n)
            .filter(|&j| j == i || (reach[i][j] && reach[j][i]))
            .collect();
        if component.len() >= 2 {
            seen.extend(component.iter().copied());
            let mut members: Vec<String> =
                component.iter().map(|&j| aliases[j].id.clone()).collect();
            members.sort();
            out.push(Conflict {
                kind: ConflictKind::CycleViaAlias,
                detail: format!(
                    "alias bindings refer to each other's names: {}",
                    members.join(", ")
                ),
                members,
            });
        }
    }
    out
}
