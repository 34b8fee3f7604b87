//! Extension libraries: packages of metadata definitions used as alignment tags.

use thiserror::Error;

use super::ast::{ElementKind, Model, RelationKind};
use super::parser::parse_model;
use crate::diagnostic::Diagnostics;

/// Text of the library shipped with the toolchain.
pub const BUNDLED_LIBRARY_TEXT: &str = include_str!("../../corpus/alignment_extension.sysml");

pub const FULLY_MATCHED: &str = "FullyMatched";
pub const REQUIRE_COMPLEMENT: &str = "RequireComplement";
pub const REQUIRE_MODIFICATION: &str = "RequireModification";
pub const FULLY_UNMATCHED: &str = "FullyUnmatched";

#[derive(Debug, Clone)]
pub struct ExtensionLibrary {
    pub package_name: String,
    /// Metadata definition names, in source order.
    pub tags: Vec<String>,
    /// Shared supertype of every tag, when they all specialize the same name.
    pub base: Option<String>,
    pub model: Model,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("extension library does not parse:\n{0}")]
    Parse(Diagnostics),
    #[error("extension library `{0}` defines no metadata definitions")]
    Empty(String),
    #[error("extension library defines tag `{0}` more than once")]
    DuplicateTag(String),
}

impl ExtensionLibrary {
    pub fn contains(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

pub fn load_extension_library(text: &str) -> Result<ExtensionLibrary, LibraryError> {
    load_named(text, "extension-library.sysml")
}

pub fn load_named(text: &str, source_name: &str) -> Result<ExtensionLibrary, LibraryError> {
    let model = parse_model(text, source_name).map_err(LibraryError::Parse)?;
    let defs: Vec<_> = model
        .elements()
        .filter(|e| e.kind == ElementKind::MetadataDef)
        .collect();
    if defs.is_empty() {
        return Err(LibraryError::Empty(model.name().to_string()));
    }
    let mut tags: Vec<String> = Vec::new();
    for def in &defs {
        let name = def.name.clone().unwrap_or_default();
        if tags.contains(&name) {
            return Err(LibraryError::DuplicateTag(name));
        }
        tags.push(name);
    }
    let supers: Vec<Option<String>> = defs
        .iter()
        .map(|d| d.target(RelationKind::Specializes).map(ToString::to_string))
        .collect();
    let base = match supers.first() {
        Some(Some(first)) if supers.iter().all(|s| s.as_ref() == Some(first)) => {
            Some(first.clone())
        }
        _ => None,
    };
    Ok(ExtensionLibrary {
        package_name: model.name().to_string(),
        tags,
        base,
        model,
        text: text.to_string(),
    })
}

pub fn bundled_library() -> ExtensionLibrary {
    load_named(BUNDLED_LIBRARY_TEXT, "alignment_extension.sysml").expect("bundled library parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_library_has_the_four_tags() {
        let lib = bundled_library();
        assert_eq!(lib.package_name, "AlignmentExtension");
        assert_eq!(
            lib.tags,
            vec![
                FULLY_MATCHED,
                REQUIRE_COMPLEMENT,
                REQUIRE_MODIFICATION,
                FULLY_UNMATCHED
            ]
        );
        assert_eq!(lib.base.as_deref(), Some("SemanticMetadata"));
    }

    #[test]
    fn single_custom_tag() {
        let lib = load_extension_library("package L { metadata def Custom; }").unwrap();
        assert_eq!(lib.tags, vec!["Custom"]);
        assert_eq!(lib.base, None);
    }

    #[test]
    fn package_without_metadata_is_empty() {
        let err = load_extension_library("package L { part def A; }").unwrap_err();
        assert!(matches!(err, LibraryError::Empty(name) if name == "L"));
    }

    #[test]
    fn parse_failure_is_reported() {
        assert!(matches!(
            load_extension_library("package L {"),
            Err(LibraryError::Parse(_))
        ));
    }

    #[test]
    fn duplicate_tags_in_nested_packages() {
        let err = load_extension_library(
            "package L { package A { metadata def T; } package B { metadata def T; } }",
        )
        .unwrap_err();
        assert!(matches!(err, LibraryError::DuplicateTag(t) if t == "T"));
    }
}
