//! Stage 4: the additive alignment package.
//!
//! The package references both source models through private imports and
//! the extension library through a public import. It contains only aliases,
//! tagged allocations and structured rationale comments — never a copy of a
//! source element.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_string};
use crate::matcher::Origin;
use crate::sysml::ast::digest_source;
use crate::sysml::{
    render_model, Element, ElementKind, ExtensionLibrary, Model, QualifiedName, RelationKind,
    Visibility,
};
use crate::verifier::{
    detect_conflicts, ConflictConfig, ConflictKind, Construct, Verdict, VerifiedMapping,
};

pub const ALIGNMENT_FILE_NAME: &str = "IntegratedModel_Alignment.sysml";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignerConfig {
    /// Overrides the default `AlignmentPackage_<oem>_<supplier>`.
    pub package_name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AlignmentPackage {
    pub model: Model,
    pub text: String,
    /// Hash of the decided mappings the package was generated from.
    pub decisions_digest: String,
    pub generated_at: String,
}

/// Machine-readable companion of the package (stored as `alignment.json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub package_name: String,
    pub decisions_digest: String,
    pub generated_at: String,
    pub text_digest: String,
    pub constructs: usize,
}

impl AlignmentPackage {
    pub fn summary(&self) -> AlignmentSummary {
        AlignmentSummary {
            package_name: self.model.name().to_string(),
            decisions_digest: self.decisions_digest.clone(),
            generated_at: self.generated_at.clone(),
            text_digest: digest_source(&self.text),
            // Rationale comments are anonymous; comment records are named.
            constructs: self
                .model
                .root
                .children
                .iter()
                .filter(|c| match c.kind {
                    ElementKind::Alias | ElementKind::AllocationUsage => true,
                    ElementKind::Comment => c.name.is_some(),
                    _ => false,
                })
                .count(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("mapping {0} is still pending a verdict")]
    PendingMapping(String),
    #[error("unresolved {kind:?} conflict among {members:?}: {detail}")]
    UnresolvedConflict {
        kind: ConflictKind,
        members: Vec<String>,
        detail: String,
    },
    #[error("mapping {id} references `{name}`, which does not exist in {model}")]
    MissingElement {
        id: String,
        name: String,
        model: String,
    },
    #[error("tag `{0}` is not defined in the extension library")]
    UnknownTag(String),
    #[error("mapping {id} would allocate a definition: {detail}")]
    EndKindViolation { id: String, detail: String },
}

/// The parsed form of a structured rationale comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleComment {
    pub confidence: f64,
    pub rationale: String,
    pub origin: Origin,
}

impl fmt::Display for RationaleComment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "confidence: {:.2}; rationale: {}; origin: {}",
            self.confidence,
            sanitize_rationale(&self.rationale),
            self.origin
        )
    }
}

/// Makes free text safe inside the comment grammar: no `;` field separators,
/// no comment delimiters, single line.
pub fn sanitize_rationale(text: &str) -> String {
    let cleaned = text.replace("*/", " ").replace("/*", " ").replace(';', ",");
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `confidence: <c>; rationale: <text>; origin: <o>`.
pub fn parse_rationale_comment(text: &str) -> Option<RationaleComment> {
    let fields: Vec<&str> = text.split(';').map(str::trim).collect();
    let [c, r, o] = fields.as_slice() else {
        return None;
    };
    let confidence: f64 = c.strip_prefix("confidence:")?.trim().parse().ok()?;
    if !(0.0..=1.0).contains(&confidence) {
        return None;
    }
    let rationale = r.strip_prefix("rationale:")?.trim().to_string();
    let origin = match o.strip_prefix("origin:")?.trim() {
        "Heuristic" => Origin::Heuristic,
        "Provider" => Origin::Provider,
        "User" => Origin::User,
        _ => return None,
    };
    Some(RationaleComment {
        confidence,
        rationale,
        origin,
    })
}

fn identifier_fragment(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "x".to_string()
    } else {
        s
    }
}

pub fn default_package_name(oem: &Model, supplier: &Model) -> String {
    format!(
        "AlignmentPackage_{}_{}",
        identifier_fragment(oem.name()),
        identifier_fragment(supplier.name())
    )
}

fn decisions_digest(decided: &[&VerifiedMapping]) -> String {
    let records: Vec<serde_json::Value> = decided
        .iter()
        .map(|m| {
            serde_json::json!({
                "id": m.id,
                "source": m.candidate.source_qualified_name,
                "target": m.candidate.target_qualified_name,
                "tag": m.effective_tag(),
                "construct": m.effective_construct(),
                "verdict": m.verdict,
            })
        })
        .collect();
    sha256_hex(to_canonical_string(&records))
}

fn comment(about: Vec<QualifiedName>, name: Option<String>, text: String) -> Element {
    let mut c = Element::new(ElementKind::Comment, name);
    for target in about {
        c = c.with_relation(RelationKind::CommentAbout, target);
    }
    c.text = Some(text);
    c
}

fn import(target: &str, visibility: Visibility) -> Element {
    let mut i = Element::new(ElementKind::Import, None)
        .with_relation(RelationKind::ImportTarget, QualifiedName::single(target));
    i.visibility = Some(visibility);
    i.wildcard = true;
    i
}

/// Builds the alignment package from the decided mappings (accepted or
/// modified; rejected ones are ignored). The end-kind rule is re-checked here
/// independently of the verdict layer.
pub fn generate_alignment_package(
    mappings: &[VerifiedMapping],
    oem: &Model,
    supplier: &Model,
    library: &ExtensionLibrary,
    config: &AlignerConfig,
    generated_at: &str,
) -> Result<AlignmentPackage, AlignError> {
    if let Some(p) = mappings.iter().find(|m| m.verdict == Verdict::Pending) {
        return Err(AlignError::PendingMapping(p.id.clone()));
    }
    let mut decided: Vec<&VerifiedMapping> = mappings.iter().filter(|m| m.is_decided()).collect();
    decided.sort_by(|a, b| {
        (
            &a.candidate.source_qualified_name,
            &a.candidate.target_qualified_name,
            &a.id,
        )
            .cmp(&(
                &b.candidate.source_qualified_name,
                &b.candidate.target_qualified_name,
                &b.id,
            ))
    });

    let owned: Vec<VerifiedMapping> = decided.iter().map(|m| (*m).clone()).collect();
    let report = detect_conflicts(&owned, &ConflictConfig::default());
    if let Some(c) = report
        .conflicts
        .iter()
        .find(|c| matches!(c.kind, ConflictKind::OneToMany | ConflictKind::ManyToOne))
    {
        return Err(AlignError::UnresolvedConflict {
            kind: c.kind,
            members: c.members.clone(),
            detail: c.detail.clone(),
        });
    }

    let package_name = config
        .package_name
        .clone()
        .unwrap_or_else(|| default_package_name(oem, supplier));
    let mut root = Element::new(ElementKind::Package, Some(package_name.clone()));
    root.doc = Some(format!(
        "Soft alignment of {} (OEM) and {} (supplier).\nGenerated from {} decided mappings; both source models are referenced through imports and never modified.",
        oem.name(),
        supplier.name(),
        decided.len()
    ));
    root.children.push(import(oem.name(), Visibility::Private));
    root.children
        .push(import(supplier.name(), Visibility::Private));
    root.children
        .push(import(&library.package_name, Visibility::Public));

    let mut used_names: BTreeSet<String> = BTreeSet::new();
    for (index, m) in decided.iter().enumerate() {
        let src: QualifiedName =
            m.candidate
                .source_qualified_name
                .parse()
                .map_err(|_| AlignError::MissingElement {
                    id: m.id.clone(),
                    name: m.candidate.source_qualified_name.clone(),
                    model: oem.name().to_string(),
                })?;
        let tgt: QualifiedName =
            m.candidate
                .target_qualified_name
                .parse()
                .map_err(|_| AlignError::MissingElement {
                    id: m.id.clone(),
                    name: m.candidate.target_qualified_name.clone(),
                    model: supplier.name().to_string(),
                })?;
        let src_el = oem.find(&src).ok_or_else(|| AlignError::MissingElement {
            id: m.id.clone(),
            name: src.to_string(),
            model: oem.name().to_string(),
        })?;
        let tgt_el = supplier
            .find(&tgt)
            .ok_or_else(|| AlignError::MissingElement {
                id: m.id.clone(),
                name: tgt.to_string(),
                model: supplier.name().to_string(),
            })?;
        let tag = m.effective_tag();
        if !library.contains(tag) {
            return Err(AlignError::UnknownTag(tag.to_string()));
        }
        let origin = if matches!(m.verdict, Verdict::Modified(_)) {
            Origin::User
        } else {
            m.candidate.origin
        };
        let mut rationale = m.candidate.rationale.clone();
        if let Some(note) = m.verdict_record.as_ref().and_then(|r| r.note.as_ref()) {
            rationale = format!("{rationale} ({note})");
        }
        let note = RationaleComment {
            confidence: m.candidate.confidence,
            rationale,
            origin,
        }
        .to_string();
        let src_short = identifier_fragment(src.last().unwrap_or("x"));
        let tgt_short = identifier_fragment(tgt.last().unwrap_or("x"));

        match m.effective_construct() {
            Construct::AliasBinding => {
                if !(src_el.kind.is_definition() && tgt_el.kind.is_definition()) {
                    return Err(AlignError::EndKindViolation {
                        id: m.id.clone(),
                        detail: format!(
                            "alias bindings relate definitions, got {} and {}",
                            src_el.kind, tgt_el.kind
                        ),
                    });
                }
                let name = unique(&mut used_names, tgt.last().unwrap_or("alias").to_string());
                root.children.push(
                    Element::new(ElementKind::Alias, Some(name.clone()))
                        .with_relation(RelationKind::AliasTarget, src.clone()),
                );
                root.children
                    .push(comment(vec![QualifiedName::single(name)], None, note));
            }
            Construct::TaggedAllocation => {
                for (end, el) in [(&src, src_el), (&tgt, tgt_el)] {
                    if !el.kind.is_usage() {
                        return Err(AlignError::EndKindViolation {
                            id: m.id.clone(),
                            detail: format!(
                                "allocation end {end} is a {}; element cannot be definitions",
                                el.kind
                            ),
                        });
                    }
                }
                let name = unique(
                    &mut used_names,
                    format!("m{}_{src_short}_to_{tgt_short}", index + 1),
                );
                let mut alloc = Element::new(ElementKind::AllocationUsage, Some(name.clone()))
                    .with_relation(RelationKind::AllocatedFrom, src.clone())
                    .with_relation(RelationKind::AllocatedTo, tgt.clone());
                alloc.metadata_tags.push(tag.to_string());
                root.children.push(alloc);
                root.children
                    .push(comment(vec![QualifiedName::single(name)], None, note));
            }
            Construct::CommentRecord => {
                let name = unique(
                    &mut used_names,
                    format!("unmatched{}_{src_short}_{tgt_short}", index + 1),
                );
                root.children
                    .push(comment(vec![src.clone(), tgt.clone()], Some(name), note));
            }
        }
    }

    let own = QualifiedName::single(package_name);
    root.assign_qualified_names(own);
    let mut model = Model::new(root, ALIGNMENT_FILE_NAME, "");
    let text = render_model(&model);
    model.source_digest = digest_source(&text);
    Ok(AlignmentPackage {
        model,
        text,
        decisions_digest: decisions_digest(&decided),
        generated_at: generated_at.to_string(),
    })
}

fn unique(used: &mut BTreeSet<String>, base: String) -> String {
    let mut name = base.clone();
    let mut n = 2;
    while used.contains(&name) {
        name = format!("{base}_{n}");
        n += 1;
    }
    used.insert(name.clone());
    name
}

/// A self-contained snippet with two toy part usages and one tagged
/// allocation per library tag, used at Stage 0 to show the extension is
/// understood.
pub fn generate_extension_demo(library: &ExtensionLibrary) -> String {
    let mut root = Element::new(
        ElementKind::Package,
        Some(format!(
            "{}Demo",
            identifier_fragment(&library.package_name)
        )),
    );
    root.doc = Some(format!(
        "Usage example for the tags of {}: allocation ends are usages, never definitions.",
        library.package_name
    ));
    root.children
        .push(import(&library.package_name, Visibility::Public));
    root.children.push(Element::new(
        ElementKind::PartUsage,
        Some("oemElement".into()),
    ));
    root.children.push(Element::new(
        ElementKind::PartUsage,
        Some("supplierElement".into()),
    ));
    for (i, tag) in library.tags.iter().enumerate() {
        let name = format!("demo{}_{}", i + 1, identifier_fragment(tag));
        let mut alloc = Element::new(ElementKind::AllocationUsage, Some(name))
            .with_relation(
                RelationKind::AllocatedFrom,
                QualifiedName::single("oemElement"),
            )
            .with_relation(
                RelationKind::AllocatedTo,
                QualifiedName::single("supplierElement"),
            );
        alloc.metadata_tags.push(tag.clone());
        root.children.push(alloc);
    }
    let name = root.name.clone().expect("named");
    root.assign_qualified_names(QualifiedName::single(name));
    render_model(&Model::new(root, "extension_demo.sysml", ""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysml::{bundled_library, load_extension_library, parse_model};

    #[test]
    fn rationale_comment_round_trip() {
        let c = RationaleComment {
            confidence: 0.934,
            rationale: "same; name */ here".into(),
            origin: Origin::Provider,
        };
        let text = c.to_string();
        assert_eq!(
            text,
            "confidence: 0.93; rationale: same, name here; origin: Provider"
        );
        let parsed = parse_rationale_comment(&text).unwrap();
        assert_eq!(parsed.confidence, 0.93);
        assert_eq!(parsed.origin, Origin::Provider);
        assert!(parse_rationale_comment("confidence: high; rationale: x; origin: User").is_none());
        assert!(parse_rationale_comment("rationale: x").is_none());
    }

    #[test]
    fn demo_has_one_allocation_per_tag_and_parses() {
        let text = generate_extension_demo(&bundled_library());
        let m = parse_model(&text, "demo").unwrap_or_else(|d| panic!("{d}\n{text}"));
        let allocs: Vec<_> = m
            .elements()
            .filter(|e| e.kind == ElementKind::AllocationUsage)
            .collect();
        assert_eq!(allocs.len(), 4);
        assert!(allocs.iter().all(|a| a.metadata_tags.len() == 1));

        let single = load_extension_library("package L { metadata def Custom; }").unwrap();
        let text = generate_extension_demo(&single);
        assert_eq!(text.matches("#Custom allocation").count(), 1);
    }

    #[test]
    fn empty_decisions_give_imports_and_header_only() {
        let oem = parse_model("package Oem { part a; }", "o").unwrap();
        let sup = parse_model("package Sup { part b; }", "s").unwrap();
        let pkg = generate_alignment_package(
            &[],
            &oem,
            &sup,
            &bundled_library(),
            &AlignerConfig::default(),
            "t",
        )
        .unwrap();
        assert_eq!(pkg.model.name(), "AlignmentPackage_Oem_Sup");
        assert_eq!(pkg.model.root.children.len(), 3);
        assert!(pkg
            .model
            .root
            .children
            .iter()
            .all(|c| c.kind == ElementKind::Import));
        assert!(pkg.model.root.doc.is_some());
        assert!(pkg.text.contains("private import Oem::*;"));
        assert!(pkg.text.contains("public import AlignmentExtension::*;"));
    }
}
