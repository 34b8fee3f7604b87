//! Stage 2: scored match candidates between two model IRs.
//!
//! The heuristic engine scores every eligible source/target pair as a
//! weighted sum of four features (name, kind, ports, context); pairs at or
//! above the threshold become candidates. A language-model provider can
//! propose candidates too, and the two sets merge by pair.

pub mod provider;
pub mod similarity;
#[cfg(feature = "testkit")]
pub mod synthetic;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{IrElement, ModelIR};
use crate::sysml::ElementKind;

pub use provider::{
    propose_via_provider, HttpProvider, HttpProviderConfig, MockProvider, Provider, ProviderError,
    ProviderExchange, ProviderInput, ProviderOutcome, ProviderRequest, ProviderResponse,
    RecordingProvider, ScriptedProvider,
};
pub use similarity::{
    name_doc_similarity, name_similarity, port_relation, port_similarity, PortRelation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Heuristic,
    Provider,
    User,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchCandidate {
    pub source_uid: String,
    pub target_uid: String,
    pub source_qualified_name: String,
    pub target_qualified_name: String,
    pub confidence: f64,
    pub rationale: String,
    pub features: BTreeMap<String, f64>,
    pub origin: Origin,
}

impl MatchCandidate {
    pub fn pair(&self) -> (&str, &str) {
        (&self.source_uid, &self.target_uid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSet {
    pub source_model: String,
    pub target_model: String,
    pub source_digest: String,
    pub target_digest: String,
    pub candidates: Vec<MatchCandidate>,
    pub unmatched_source: Vec<String>,
    pub unmatched_target: Vec<String>,
    pub focus: Option<String>,
}

impl CandidateSet {
    /// An empty set over the given IRs with every eligible element unmatched.
    pub fn empty(source: &ModelIR, target: &ModelIR, config: &MatchConfig) -> Self {
        let mut set = CandidateSet {
            source_model: source.model_name.clone(),
            target_model: target.model_name.clone(),
            source_digest: source.source_digest.clone(),
            target_digest: target.source_digest.clone(),
            candidates: Vec::new(),
            unmatched_source: eligible_uids(source, config),
            unmatched_target: eligible_uids(target, config),
            focus: None,
        };
        set.unmatched_source.sort();
        set.unmatched_target.sort();
        set
    }

    /// Every uid the set accounts for on each side.
    pub fn universe(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut s: BTreeSet<String> = self.unmatched_source.iter().cloned().collect();
        let mut t: BTreeSet<String> = self.unmatched_target.iter().cloned().collect();
        for c in &self.candidates {
            s.insert(c.source_uid.clone());
            t.insert(c.target_uid.clone());
        }
        (s, t)
    }

    /// Sorts candidates into the canonical order and recomputes the
    /// unmatched lists against `universe`.
    fn finish(&mut self, universe: (BTreeSet<String>, BTreeSet<String>)) {
        self.candidates.sort_by(candidate_order);
        let src: HashSet<&str> = self
            .candidates
            .iter()
            .map(|c| c.source_uid.as_str())
            .collect();
        let tgt: HashSet<&str> = self
            .candidates
            .iter()
            .map(|c| c.target_uid.as_str())
            .collect();
        self.unmatched_source = universe
            .0
            .into_iter()
            .filter(|u| !src.contains(u.as_str()))
            .collect();
        self.unmatched_target = universe
            .1
            .into_iter()
            .filter(|u| !tgt.contains(u.as_str()))
            .collect();
    }
}

/// Confidence descending, then source and target qualified names, then uids.
pub fn candidate_order(a: &MatchCandidate, b: &MatchCandidate) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.source_qualified_name.cmp(&b.source_qualified_name))
        .then_with(|| a.target_qualified_name.cmp(&b.target_qualified_name))
        .then_with(|| a.source_uid.cmp(&b.source_uid))
        .then_with(|| a.target_uid.cmp(&b.target_uid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub name: f64,
    pub kind: f64,
    pub ports: f64,
    pub context: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    pub weights: Weights,
    pub threshold: f64,
    pub eligible_kinds: BTreeSet<ElementKind>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            weights: Weights {
                name: 0.45,
                kind: 0.20,
                ports: 0.25,
                context: 0.10,
            },
            threshold: 0.55,
            eligible_kinds: [
                ElementKind::PartDef,
                ElementKind::PortDef,
                ElementKind::PartUsage,
                ElementKind::PortUsage,
                ElementKind::ItemUsage,
                ElementKind::RequirementUsage,
            ]
            .into_iter()
            .collect(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        let w = self.weights;
        let all = [w.name, w.kind, w.ports, w.context];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MatchError::InvalidConfig(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MatchError::InvalidConfig(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(MatchError::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self
            .eligible_kinds
            .iter()
            .any(|k| !k.is_definition() && !k.is_usage())
        {
            return Err(MatchError::InvalidConfig(
                "eligible kinds must be definitions or usages".into(),
            ));
        }
        Ok(())
    }

    pub fn is_eligible(&self, el: &IrElement) -> bool {
        self.eligible_kinds.contains(&el.kind)
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid match configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate sets describe different models ({0})")]
    DigestMismatch(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

pub fn eligible_uids(ir: &ModelIR, config: &MatchConfig) -> Vec<String> {
    ir.elements
        .iter()
        .filter(|e| config.is_eligible(e))
        .map(|e| e.uid.clone())
        .collect()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Feature scores of one pair, keyed `name`, `kind`, `ports`, `context`.
pub fn pair_features(a: &IrElement, b: &IrElement) -> BTreeMap<String, f64> {
    let name = similarity::name_doc_similarity(
        a.name.as_deref().unwrap_or(""),
        a.doc.as_deref(),
        b.name.as_deref().unwrap_or(""),
        b.doc.as_deref(),
    );
    let kind = if a.kind.compatible_with(b.kind) {
        1.0
    } else {
        0.0
    };
    let mut f = BTreeMap::new();
    f.insert("name".to_string(), round6(name));
    f.insert("kind".to_string(), kind);
    f.insert(
        "ports".to_string(),
        round6(similarity::port_similarity(&a.ports, &b.ports)),
    );
    f.insert(
        "context".to_string(),
        round6(similarity::context_similarity(a, b)),
    );
    f
}

pub fn score(features: &BTreeMap<String, f64>, weights: &Weights) -> f64 {
    let get = |k: &str| features.get(k).copied().unwrap_or(0.0);
    let s = weights.name * get("name")
        + weights.kind * get("kind")
        + weights.ports * get("ports")
        + weights.context * get("context");
    round6(s).clamp(0.0, 1.0)
}

fn heuristic_rationale(f: &BTreeMap<String, f64>) -> String {
    format!(
        "name similarity {:.2}, {}, port signature similarity {:.2}, context similarity {:.2}",
        f["name"],
        if f["kind"] == 1.0 {
            "compatible kinds"
        } else {
            "incompatible kinds"
        },
        f["ports"],
        f["context"]
    )
}

/// Scores every eligible source/target pair and keeps those at or above the threshold.
pub fn propose_heuristic(
    source: &ModelIR,
    target: &ModelIR,
    config: &MatchConfig,
) -> Result<CandidateSet, MatchError> {
    config.validate()?;
    let mut set = CandidateSet::empty(source, target, config);
    let universe = set.universe();
    for a in source.elements.iter().filter(|e| config.is_eligible(e)) {
        for b in target.elements.iter().filter(|e| config.is_eligible(e)) {
            let features = pair_features(a, b);
            let confidence = score(&features, &config.weights);
            if confidence >= config.threshold {
                set.candidates.push(MatchCandidate {
                    source_uid: a.uid.clone(),
                    target_uid: b.uid.clone(),
                    source_qualified_name: a.qualified_name.clone(),
                    target_qualified_name: b.qualified_name.clone(),
                    confidence,
                    rationale: heuristic_rationale(&features),
                    features,
                    origin: Origin::Heuristic,
                });
            }
        }
    }
    set.finish(universe);
    Ok(set)
}

/// Union by pair; a pair present in both keeps the higher confidence (and its
/// features and origin) and carries both rationales, each tagged by origin.
pub fn merge_candidate_sets(
    a: &CandidateSet,
    b: &CandidateSet,
) -> Result<CandidateSet, MatchError> {
    if a.source_digest != b.source_digest || a.target_digest != b.target_digest {
        return Err(MatchError::DigestMismatch(format!(
            "{}/{} vs {}/{}",
            a.source_model, a.target_model, b.source_model, b.target_model
        )));
    }
    let (mut us, mut ut) = a.universe();
    let (bs, bt) = b.universe();
    us.extend(bs);
    ut.extend(bt);

    let mut by_pair: BTreeMap<(String, String), MatchCandidate> = BTreeMap::new();
    for c in a.candidates.iter().chain(&b.candidates) {
        let key = (c.source_uid.clone(), c.target_uid.clone());
        match by_pair.get_mut(&key) {
            None => {
                by_pair.insert(key, c.clone());
            }
            Some(existing) => {
                let rationale = format!("{} | {}", tagged_rationale(existing), tagged_rationale(c));
                if c.confidence > existing.confidence {
                    *existing = c.clone();
                }
                existing.rationale = rationale;
            }
        }
    }
    let mut merged = CandidateSet {
        source_model: a.source_model.clone(),
        target_model: a.target_model.clone(),
        source_digest: a.source_digest.clone(),
        target_digest: a.target_digest.clone(),
        candidates: by_pair.into_values().collect(),
        unmatched_source: Vec::new(),
        unmatched_target: Vec::new(),
        focus: a.focus.clone().or_else(|| b.focus.clone()),
    };
    merged.finish((us, ut));
    Ok(merged)
}

fn tagged_rationale(c: &MatchCandidate) -> String {
    let prefix = format!("[{}] ", c.origin);
    if c.rationale.starts_with('[') {
        c.rationale.clone()
    } else {
        format!("{prefix}{}", c.rationale)
    }
}

/// One-to-one assignment taken greedily in candidate order: a candidate is
/// kept when neither of its ends is already assigned.
pub fn greedy_assignment(set: &CandidateSet) -> Vec<&MatchCandidate> {
    let mut used_s = HashSet::new();
    let mut used_t = HashSet::new();
    let mut out = Vec::new();
    for c in &set.candidates {
        if !used_s.contains(&c.source_uid) && !used_t.contains(&c.target_uid) {
            used_s.insert(c.source_uid.clone());
            used_t.insert(c.target_uid.clone());
            out.push(c);
        }
    }
    out
}
