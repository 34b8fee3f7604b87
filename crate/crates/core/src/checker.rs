//! Stage 5: consistency checks on the alignment package and coverage accounting.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::aligner::parse_rationale_comment;
use crate::diagnostic::{Diagnostic, Severity};
use crate::ir::ModelIR;
use crate::sysml::{
    resolve, resolve_from, resolve_from_raw, Element, ElementKind, ExtensionLibrary, Model,
    QualifiedName, RelationKind, ResolveError, Visibility,
};
use crate::verifier::VerifiedMapping;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckCategory {
    Structure,
    ReferenceScope,
    SemanticRelations,
    ExtensionConsistency,
}

impl CheckCategory {
    pub const ALL: [CheckCategory; 4] = [
        CheckCategory::Structure,
        CheckCategory::ReferenceScope,
        CheckCategory::SemanticRelations,
        CheckCategory::ExtensionConsistency,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorizedDiagnostic {
    pub category: CheckCategory,
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisList {
    pub items: Vec<CategorizedDiagnostic>,
}

impl DiagnosisList {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.items
            .iter()
            .any(|i| i.diagnostic.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &CategorizedDiagnostic> {
        self.items
            .iter()
            .filter(|i| i.diagnostic.severity == Severity::Error)
    }

    pub fn in_category(
        &self,
        category: CheckCategory,
    ) -> impl Iterator<Item = &CategorizedDiagnostic> {
        self.items.iter().filter(move |i| i.category == category)
    }

    pub fn count(&self, severity: Severity) -> usize {
        self.items
            .iter()
            .filter(|i| i.diagnostic.severity == severity)
            .count()
    }
}

struct Ctx<'a> {
    models: [&'a Model; 4],
    library: &'a ExtensionLibrary,
    items: Vec<CategorizedDiagnostic>,
}

const PKG: usize = 0;
const OEM: usize = 1;
const SUPPLIER: usize = 2;

impl Ctx<'_> {
    fn push(
        &mut self,
        category: CheckCategory,
        severity: Severity,
        code: &str,
        at: Option<&Element>,
        message: String,
    ) {
        let span = at.and_then(|e| self.models[PKG].span_of(&e.qualified_name));
        let diagnostic = Diagnostic {
            severity,
            code: code.to_string(),
            span,
            message,
        };
        self.items.push(CategorizedDiagnostic {
            category,
            diagnostic,
        });
    }

    fn pkg(&self) -> &Element {
        &self.models[PKG].root
    }
}

/// Runs the four check categories over `package` against both source models
/// and the library. Diagnostics come out grouped by category.
pub fn check_consistency(
    package: &Model,
    oem: &Model,
    supplier: &Model,
    library: &ExtensionLibrary,
) -> DiagnosisList {
    let mut ctx = Ctx {
        models: [package, oem, supplier, &library.model],
        library,
        items: Vec::new(),
    };
    check_structure(&mut ctx);
    check_references(&mut ctx);
    check_semantics(&mut ctx);
    check_extension(&mut ctx);
    ctx.items.sort_by_key(|i| i.category);
    DiagnosisList { items: ctx.items }
}

fn check_structure(ctx: &mut Ctx<'_>) {
    use CheckCategory::Structure;
    let root = ctx.pkg().clone();
    if root.doc.is_none() {
        ctx.push(
            Structure,
            Severity::Warning,
            "structure.missing-header",
            Some(&root),
            "alignment package has no header doc".into(),
        );
    }
    for child in &root.children {
        match child.kind {
            ElementKind::Import | ElementKind::Alias | ElementKind::AllocationUsage | ElementKind::Comment => {
                if !child.children.is_empty() {
                    ctx.push(
                        Structure,
                        Severity::Error,
                        "structure.nested-member",
                        Some(child),
                        format!("{} must not own members in an alignment package", child.qualified_name),
                    );
                }
            }
            kind => ctx.push(
                Structure,
                Severity::Error,
                "structure.forbidden-member",
                Some(child),
                format!(
                    "{} is a {kind}; an alignment package may contain only imports, aliases, allocations and comments",
                    child.qualified_name
                ),
            ),
        }
    }
    let imported: BTreeSet<String> = root
        .children
        .iter()
        .filter_map(Element::as_import)
        .filter_map(|i| i.target.first().map(str::to_string))
        .collect();
    let required = [
        ctx.models[OEM].name().to_string(),
        ctx.models[SUPPLIER].name().to_string(),
        ctx.library.package_name.clone(),
    ];
    for name in required {
        if !imported.contains(&name) {
            ctx.push(
                Structure,
                Severity::Error,
                "structure.missing-import",
                Some(&root),
                format!("package does not import `{name}`"),
            );
        }
    }
}

fn check_references(ctx: &mut Ctx<'_>) {
    use CheckCategory::ReferenceScope;
    let root = ctx.pkg().clone();
    for child in &root.children {
        for rel in &child.relations {
            let result = if rel.kind == RelationKind::ImportTarget {
                resolve(&ctx.models, &rel.target).map(|_| ())
            } else {
                resolve_from(&ctx.models, PKG, &root.qualified_name, &rel.target).map(|_| ())
            };
            if let Err(e) = result {
                let message = match &e {
                    ResolveError::NotFound(n) => {
                        format!("`{n}` referenced by {} does not resolve", describe(child))
                    }
                    ResolveError::Ambiguous { .. } => {
                        format!("{e} (referenced by {})", describe(child))
                    }
                };
                ctx.push(
                    ReferenceScope,
                    Severity::Error,
                    "reference.unresolved",
                    Some(child),
                    message,
                );
            }
        }
    }
}

fn describe(el: &Element) -> String {
    match &el.name {
        Some(n) => format!("{} `{n}`", el.kind),
        None => format!("an anonymous {}", el.kind),
    }
}

fn check_semantics(ctx: &mut Ctx<'_>) {
    use CheckCategory::SemanticRelations;
    let root = ctx.pkg().clone();
    for child in &root.children {
        match child.kind {
            ElementKind::AllocationUsage => {
                let mut owners = Vec::new();
                for kind in [RelationKind::AllocatedFrom, RelationKind::AllocatedTo] {
                    let Some(end) = child.target(kind) else {
                        ctx.push(
                            SemanticRelations,
                            Severity::Error,
                            "semantic.allocation-end-missing",
                            Some(child),
                            format!("{} lacks an end", describe(child)),
                        );
                        continue;
                    };
                    if let Ok(r) = resolve_from(&ctx.models, PKG, &root.qualified_name, end) {
                        owners.push(r.model);
                        if !r.element.kind.is_usage() {
                            ctx.push(
                                SemanticRelations,
                                Severity::Error,
                                "semantic.allocation-end-definition",
                                Some(child),
                                format!(
                                    "{} end `{end}` is a {}: allocation element cannot be definitions",
                                    describe(child),
                                    r.element.kind
                                ),
                            );
                        }
                    }
                }
                if owners.len() == 2 && owners[0] == owners[1] {
                    ctx.push(
                        SemanticRelations,
                        Severity::Warning,
                        "semantic.allocation-same-model",
                        Some(child),
                        format!("both ends of {} lie in the same model", describe(child)),
                    );
                }
            }
            ElementKind::Alias => {
                if let Some(chain) = alias_cycle(ctx, child) {
                    ctx.push(
                        SemanticRelations,
                        Severity::Error,
                        "semantic.alias-cycle",
                        Some(child),
                        format!("alias chain loops: {}", chain.join(" -> ")),
                    );
                }
            }
            _ => {}
        }
    }
}

/// Follows an alias through aliases (without letting resolution skip over
/// them) and reports the chain if it returns to an alias already visited.
fn alias_cycle(ctx: &Ctx<'_>, alias: &Element) -> Option<Vec<String>> {
    let mut seen: HashSet<(usize, QualifiedName)> = HashSet::new();
    let mut chain = vec![alias.qualified_name.to_string()];
    let mut current = (PKG, alias.clone());
    loop {
        if !seen.insert((current.0, current.1.qualified_name.clone())) {
            return Some(chain);
        }
        let target = current.1.target(RelationKind::AliasTarget)?.clone();
        let scope = current.1.qualified_name.parent()?;
        let next = resolve_from_raw(&ctx.models, current.0, &scope, &target).ok()?;
        if next.element.kind != ElementKind::Alias {
            return None;
        }
        chain.push(next.element.qualified_name.to_string());
        current = (next.model, next.element.clone());
    }
}

fn check_extension(ctx: &mut Ctx<'_>) {
    use CheckCategory::ExtensionConsistency;
    let root = ctx.pkg().clone();

    for import in root
        .children
        .iter()
        .filter(|c| c.kind == ElementKind::Import)
    {
        let Some(decl) = import.as_import() else {
            continue;
        };
        if decl.target.first() == Some(ctx.library.package_name.as_str())
            && decl.visibility == Visibility::Private
        {
            ctx.push(
                ExtensionConsistency,
                Severity::Warning,
                "extension.private-library-import",
                Some(import),
                format!(
                    "`{}` is imported privately; consumers of the alignment package will not see its tags",
                    ctx.library.package_name
                ),
            );
        }
    }

    // Rationale comments keyed by the single construct they are about.
    let mut rationale: BTreeMap<String, Vec<&Element>> = BTreeMap::new();
    for c in root
        .children
        .iter()
        .filter(|c| c.kind == ElementKind::Comment && c.name.is_none())
    {
        let about: Vec<&QualifiedName> = c.targets(RelationKind::CommentAbout).collect();
        if let [single] = about.as_slice() {
            if single.len() == 1 {
                rationale.entry(single.to_string()).or_default().push(c);
            }
        }
    }

    for child in &root.children {
        match child.kind {
            ElementKind::AllocationUsage => {
                let tags = &child.metadata_tags;
                if tags.len() != 1 {
                    ctx.push(
                        ExtensionConsistency,
                        Severity::Error,
                        "extension.tag-count",
                        Some(child),
                        format!(
                            "{} carries {} metadata tags; exactly one is required",
                            describe(child),
                            tags.len()
                        ),
                    );
                }
                for tag in tags {
                    let local = tag.rsplit("::").next().unwrap_or(tag);
                    if !ctx.library.contains(local) {
                        ctx.push(
                            ExtensionConsistency,
                            Severity::Error,
                            "extension.unknown-tag",
                            Some(child),
                            format!(
                                "tag `{tag}` on {} is not defined in {}",
                                describe(child),
                                ctx.library.package_name
                            ),
                        );
                    }
                }
                check_rationale(ctx, child, &rationale);
            }
            ElementKind::Alias => check_rationale(ctx, child, &rationale),
            ElementKind::Comment
                if child.name.is_some()
                    && parse_rationale_comment(child.text.as_deref().unwrap_or("")).is_none() =>
            {
                ctx.push(
                    ExtensionConsistency,
                    Severity::Error,
                    "extension.bad-rationale",
                    Some(child),
                    format!(
                        "{} is not a parseable structured rationale",
                        describe(child)
                    ),
                );
            }
            _ => {}
        }
    }
}

fn check_rationale(
    ctx: &mut Ctx<'_>,
    construct: &Element,
    rationale: &BTreeMap<String, Vec<&Element>>,
) {
    use CheckCategory::ExtensionConsistency;
    let Some(name) = &construct.name else {
        ctx.push(
            ExtensionConsistency,
            Severity::Error,
            "extension.missing-rationale",
            Some(construct),
            format!(
                "{} has no name, so no rationale comment can refer to it",
                describe(construct)
            ),
        );
        return;
    };
    let comments = rationale.get(name).map(Vec::as_slice).unwrap_or(&[]);
    match comments {
        [] => ctx.push(
            ExtensionConsistency,
            Severity::Error,
            "extension.missing-rationale",
            Some(construct),
            format!(
                "{} has no structured rationale comment",
                describe(construct)
            ),
        ),
        [one] => {
            if parse_rationale_comment(one.text.as_deref().unwrap_or("")).is_none() {
                ctx.push(
                    ExtensionConsistency,
                    Severity::Error,
                    "extension.bad-rationale",
                    Some(construct),
                    format!("rationale comment about `{name}` does not follow `confidence: <c>; rationale: <text>; origin: <o>`"),
                );
            }
        }
        many => ctx.push(
            ExtensionConsistency,
            Severity::Error,
            "extension.duplicate-rationale",
            Some(construct),
            format!(
                "{} has {} rationale comments; exactly one is required",
                describe(construct),
                many.len()
            ),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCoverage {
    pub model: String,
    pub total_eligible: usize,
    pub matched: Vec<String>,
    pub explicitly_unmatched: Vec<String>,
    pub unprocessed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub source: ModelCoverage,
    pub target: ModelCoverage,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.source.unprocessed.is_empty() && self.target.unprocessed.is_empty()
    }

    pub fn unprocessed_count(&self) -> usize {
        self.source.unprocessed.len() + self.target.unprocessed.len()
    }
}

/// Partitions each model's eligible uids into matched (in an accepted or
/// matching-modified mapping), explicitly unmatched (in a FullyUnmatched
/// record and not matched elsewhere) and unprocessed (the rest).
pub fn check_coverage(
    mappings: &[VerifiedMapping],
    source: &ModelIR,
    target: &ModelIR,
    eligible_kinds: &BTreeSet<ElementKind>,
) -> CoverageReport {
    let side = |ir: &ModelIR, pick: fn(&VerifiedMapping) -> &str| {
        let matched: HashSet<&str> = mappings.iter().filter(|m| m.is_match()).map(pick).collect();
        let explicit: HashSet<&str> = mappings
            .iter()
            .filter(|m| m.is_explicit_no_match())
            .map(pick)
            .collect();
        let mut cov = ModelCoverage {
            model: ir.model_name.clone(),
            total_eligible: 0,
            matched: Vec::new(),
            explicitly_unmatched: Vec::new(),
            unprocessed: Vec::new(),
        };
        for el in ir
            .elements
            .iter()
            .filter(|e| eligible_kinds.contains(&e.kind))
        {
            cov.total_eligible += 1;
            let uid = el.uid.clone();
            if matched.contains(uid.as_str()) {
                cov.matched.push(uid);
            } else if explicit.contains(uid.as_str()) {
                cov.explicitly_unmatched.push(uid);
            } else {
                cov.unprocessed.push(uid);
            }
        }
        cov.matched.sort();
        cov.explicitly_unmatched.sort();
        cov.unprocessed.sort();
        cov
    };
    CoverageReport {
        source: side(source, |m| m.candidate.source_uid.as_str()),
        target: side(target, |m| m.candidate.target_uid.as_str()),
    }
}
