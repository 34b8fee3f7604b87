//! Feature scores used by the heuristic matcher. All scores lie in `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{IrElement, IrPort};

/// Splits an identifier into lowercase tokens at case boundaries, digit runs,
/// `_`, `-` and whitespace. `HTTPServer2_port` → `[http, server, 2, port]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            flush(&mut current, &mut tokens);
            continue;
        }
        if let Some(&prev) = current.chars().last().as_ref() {
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_ascii_digit() != c.is_ascii_digit())
                || (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_uppercase()
                    && c.is_uppercase()
                    && next.is_some_and(char::is_lowercase));
            if boundary {
                flush(&mut current, &mut tokens);
            }
        }
        current.push(c);
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(current.to_lowercase());
        current.clear();
    }
}

/// Tokens joined by single spaces: the form compared by edit distance.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Multiset Jaccard: Σ min(count) / Σ max(count). Two empty inputs score 1.
pub fn token_jaccard(a: &[String], b: &[String]) -> f64 {
    let (ca, cb) = (token_counts(a), token_counts(b));
    let keys: BTreeSet<&str> = ca.keys().chain(cb.keys()).copied().collect();
    let (mut inter, mut union) = (0usize, 0usize);
    for k in keys {
        let (x, y) = (
            ca.get(k).copied().unwrap_or(0),
            cb.get(k).copied().unwrap_or(0),
        );
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn token_counts(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

/// Levenshtein distance over characters divided by the longer length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

/// `0.5·tokenJaccard + 0.5·(1 − normalizedEditDistance)` over the normalized names.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    name_doc_similarity(a, None, b, None)
}

/// Name similarity where, when both sides carry documentation, the doc tokens
/// join the name tokens in the Jaccard term. The edit-distance term always
/// compares names only.
pub fn name_doc_similarity(a: &str, a_doc: Option<&str>, b: &str, b_doc: Option<&str>) -> f64 {
    let (mut ta, mut tb) = (tokenize(a), tokenize(b));
    let edit = 1.0 - normalized_edit_distance(&ta.join(" "), &tb.join(" "));
    if let (Some(da), Some(db)) = (a_doc, b_doc) {
        ta.extend(tokenize(da));
        tb.extend(tokenize(db));
    }
    0.5 * token_jaccard(&ta, &tb) + 0.5 * edit
}

/// Comparable key of an interface feature: sorted name tokens plus sorted
/// tokens of the type's last segment, so renaming style and token order do
/// not matter.
pub fn port_key(port: &IrPort) -> (Vec<String>, Vec<String>) {
    let mut name = tokenize(&port.name);
    name.sort();
    let mut ty = port
        .type_name
        .as_deref()
        .map(|t| tokenize(t.rsplit("::").next().unwrap_or(t)))
        .unwrap_or_default();
    ty.sort();
    (name, ty)
}

pub fn port_keys(ports: &[IrPort]) -> BTreeSet<(Vec<String>, Vec<String>)> {
    ports.iter().map(port_key).collect()
}

/// Set relation between two port signatures, as seen from the first one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PortRelation {
    Equal,
    /// The second signature is a strict subset of the first.
    TargetSubset,
    /// The first signature is a strict subset of the second.
    SourceSubset,
    Partial,
    Disjoint,
}

pub fn port_relation(source: &[IrPort], target: &[IrPort]) -> PortRelation {
    let (a, b) = (port_keys(source), port_keys(target));
    if a == b {
        PortRelation::Equal
    } else if b.is_subset(&a) {
        PortRelation::TargetSubset
    } else if a.is_subset(&b) {
        PortRelation::SourceSubset
    } else if a.is_disjoint(&b) {
        PortRelation::Disjoint
    } else {
        PortRelation::Partial
    }
}

/// Set Jaccard over port keys; two portless elements score 1.
pub fn port_similarity(source: &[IrPort], target: &[IrPort]) -> f64 {
    set_jaccard(&port_keys(source), &port_keys(target))
}

fn set_jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Tokens of the owner chain (root package included) plus `#tag` tokens.
pub fn context_tokens(el: &IrElement) -> BTreeSet<String> {
    let mut tokens: BTreeSet<String> = el.owner_chain().iter().flat_map(|s| tokenize(s)).collect();
    tokens.extend(
        el.metadata_tags
            .iter()
            .map(|t| format!("#{}", normalize(t))),
    );
    tokens
}

pub fn context_similarity(a: &IrElement, b: &IrElement) -> f64 {
    set_jaccard(&context_tokens(a), &context_tokens(b))
}
