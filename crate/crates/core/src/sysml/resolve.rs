//! Qualified-name resolution across a set of models.
//!
//! A namespace exposes its owned members (aliases resolve to their targets)
//! and, to outside queries, the members brought in by its *public* imports.
//! Private imports are visible only to lexical lookups from inside the
//! importing namespace. Owned members shadow imported ones.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::ast::{Element, ElementKind, Model, QualifiedName, RelationKind, Visibility};

/// A resolved element and the index of the model that owns it.
#[derive(Debug, Clone, Copy)]
pub struct Resolved<'a> {
    pub model: usize,
    pub element: &'a Element,
}

impl Resolved<'_> {
    fn key(&self) -> (usize, &QualifiedName) {
        (self.model, &self.element.qualified_name)
    }
}

impl PartialEq for Resolved<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguousCandidate {
    pub model: String,
    pub qualified_name: QualifiedName,
}

impl fmt::Display for AmbiguousCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (in {})", self.qualified_name, self.model)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("`{0}` not found")]
    NotFound(QualifiedName),
    #[error("`{name}` is ambiguous: {}", candidates.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Ambiguous {
        name: QualifiedName,
        candidates: Vec<AmbiguousCandidate>,
    },
}

/// Resolves a fully qualified name from outside every model.
pub fn resolve<'a>(
    models: &[&'a Model],
    name: &QualifiedName,
) -> Result<Resolved<'a>, ResolveError> {
    Resolver { models }.resolve(None, name, true)
}

/// Resolves `name` lexically from inside the namespace `scope` of model
/// `scope_model`: the scope and its enclosing namespaces first (private
/// imports included), then the global roots.
pub fn resolve_from<'a>(
    models: &[&'a Model],
    scope_model: usize,
    scope: &QualifiedName,
    name: &QualifiedName,
) -> Result<Resolved<'a>, ResolveError> {
    Resolver { models }.resolve(Some((scope_model, scope)), name, true)
}

/// Like [`resolve_from`] but returns an alias element itself when the last
/// segment names one.
pub fn resolve_from_raw<'a>(
    models: &[&'a Model],
    scope_model: usize,
    scope: &QualifiedName,
    name: &QualifiedName,
) -> Result<Resolved<'a>, ResolveError> {
    Resolver { models }.resolve(Some((scope_model, scope)), name, false)
}

type Guard = HashSet<(usize, QualifiedName, String)>;

struct Resolver<'m, 'a> {
    models: &'m [&'a Model],
}

impl<'a> Resolver<'_, 'a> {
    fn resolve(
        &self,
        scope: Option<(usize, &QualifiedName)>,
        name: &QualifiedName,
        follow_last_alias: bool,
    ) -> Result<Resolved<'a>, ResolveError> {
        let mut guard = Guard::new();
        let found = self.lookup_path(scope, name, follow_last_alias, &mut guard);
        match found.len() {
            0 => Err(ResolveError::NotFound(name.clone())),
            1 => Ok(found[0]),
            _ => Err(ResolveError::Ambiguous {
                name: name.clone(),
                candidates: found
                    .iter()
                    .map(|r| AmbiguousCandidate {
                        model: self.models[r.model].source_name.clone(),
                        qualified_name: r.element.qualified_name.clone(),
                    })
                    .collect(),
            }),
        }
    }

    fn lookup_path(
        &self,
        scope: Option<(usize, &QualifiedName)>,
        name: &QualifiedName,
        follow_last_alias: bool,
        guard: &mut Guard,
    ) -> Vec<Resolved<'a>> {
        let segments = name.segments();
        let Some((first, rest)) = segments.split_first() else {
            return Vec::new();
        };
        let single = rest.is_empty();
        let follow_first = !single || follow_last_alias;

        let mut current = Vec::new();
        if let Some((model, scope)) = scope {
            let mut namespace = Some(scope.clone());
            while let Some(ns) = namespace {
                if let Some(el) = self.models[model].find(&ns) {
                    current = self.members_named(model, el, first, true, follow_first, guard);
                    if !current.is_empty() {
                        break;
                    }
                }
                namespace = ns.parent();
            }
        }
        if current.is_empty() {
            current = self
                .models
                .iter()
                .enumerate()
                .filter(|(_, m)| m.root.answers_to(first))
                .map(|(i, m)| Resolved {
                    model: i,
                    element: &m.root,
                })
                .collect();
        }

        for (i, segment) in rest.iter().enumerate() {
            let follow = i + 1 < rest.len() || follow_last_alias;
            let mut next = Vec::new();
            for r in &current {
                for found in self.members_named(r.model, r.element, segment, false, follow, guard) {
                    push_unique(&mut next, found);
                }
            }
            current = next;
            if current.is_empty() {
                break;
            }
        }
        current
    }

    /// Members of `ns` answering to `segment`.
    fn members_named(
        &self,
        model: usize,
        ns: &'a Element,
        segment: &str,
        include_private: bool,
        follow_alias: bool,
        guard: &mut Guard,
    ) -> Vec<Resolved<'a>> {
        let key = (model, ns.qualified_name.clone(), segment.to_string());
        if !guard.insert(key.clone()) {
            return Vec::new();
        }
        let mut out = Vec::new();

        for child in ns.children.iter().filter(|c| c.answers_to(segment)) {
            if child.kind == ElementKind::Alias && follow_alias {
                if let Some(target) = child.target(RelationKind::AliasTarget) {
                    for r in
                        self.lookup_path(Some((model, &ns.qualified_name)), target, true, guard)
                    {
                        push_unique(&mut out, r);
                    }
                }
            } else {
                push_unique(
                    &mut out,
                    Resolved {
                        model,
                        element: child,
                    },
                );
            }
        }

        if out.is_empty() {
            for import in ns.children.iter().filter_map(Element::as_import) {
                if import.visibility == Visibility::Private && !include_private {
                    continue;
                }
                if import.wildcard {
                    let namespaces = self.lookup_path(
                        Some((model, &ns.qualified_name)),
                        &import.target,
                        true,
                        guard,
                    );
                    for target_ns in namespaces {
                        for r in self.members_named(
                            target_ns.model,
                            target_ns.element,
                            segment,
                            false,
                            follow_alias,
                            guard,
                        ) {
                            push_unique(&mut out, r);
                        }
                    }
                } else if import.target.last() == Some(segment) {
                    for r in self.lookup_path(
                        Some((model, &ns.qualified_name)),
                        &import.target,
                        follow_alias,
                        guard,
                    ) {
                        push_unique(&mut out, r);
                    }
                }
            }
        }

        guard.remove(&key);
        out
    }
}

fn push_unique<'a>(out: &mut Vec<Resolved<'a>>, r: Resolved<'a>) {
    if !out.contains(&r) {
        out.push(r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysml::parse_model;

    fn model(text: &str) -> Model {
        parse_model(text, "t").unwrap_or_else(|d| panic!("{d}"))
    }

    fn qn(s: &str) -> QualifiedName {
        s.parse().unwrap()
    }

    #[test]
    fn resolves_plain_path() {
        let m = model("package P { part def A; }");
        let r = resolve(&[&m], &qn("P::A")).unwrap();
        assert_eq!(r.element.kind, ElementKind::PartDef);
        assert!(matches!(
            resolve(&[&m], &qn("P::B")),
            Err(ResolveError::NotFound(_))
        ));
    }

    #[test]
    fn private_imports_are_not_reexported() {
        let lib = model("package Lib { part def Hidden; part def Shown; }");
        let user = model(
            "package User {
                private import Lib::Hidden;
                public import Lib::Shown;
                part def Inside { part h : Hidden; }
            }",
        );
        let models = [&lib, &user];
        assert!(matches!(
            resolve(&models, &qn("User::Hidden")),
            Err(ResolveError::NotFound(_))
        ));
        assert_eq!(
            resolve(&models, &qn("User::Shown"))
                .unwrap()
                .element
                .qualified_name,
            qn("Lib::Shown")
        );
        // Lexically, from inside the importing package, the private import is visible.
        let inside = resolve_from(&models, 1, &qn("User::Inside"), &qn("Hidden")).unwrap();
        assert_eq!(inside.element.qualified_name, qn("Lib::Hidden"));
    }

    #[test]
    fn wildcard_imports_and_aliases() {
        let lib = model("package Lib { part def A; part def B; }");
        let user = model(
            "package U {
                public import Lib::*;
                alias Alpha for Lib::A;
            }",
        );
        let models = [&lib, &user];
        assert_eq!(
            resolve(&models, &qn("U::B"))
                .unwrap()
                .element
                .qualified_name,
            qn("Lib::B")
        );
        assert_eq!(
            resolve(&models, &qn("U::Alpha"))
                .unwrap()
                .element
                .qualified_name,
            qn("Lib::A")
        );
        let raw = resolve_from_raw(&models, 1, &qn("U"), &qn("Alpha")).unwrap();
        assert_eq!(raw.element.kind, ElementKind::Alias);
    }

    #[test]
    fn same_name_in_two_models_is_ambiguous() {
        let a = model("package P { part def A; }");
        let b = model("package P { part def A; }");
        match resolve(&[&a, &b], &qn("P::A")) {
            Err(ResolveError::Ambiguous { candidates, .. }) => assert_eq!(candidates.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn import_cycles_terminate() {
        let a = model("package A { public import B::*; }");
        let b = model("package B { public import A::*; }");
        assert!(resolve(&[&a, &b], &qn("A::missing")).is_err());
    }

    #[test]
    fn alias_cycles_terminate() {
        let m = model("package P { alias X for Y; alias Y for X; }");
        assert!(resolve(&[&m], &qn("P::X")).is_err());
    }
}
