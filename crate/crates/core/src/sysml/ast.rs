//! Syntax tree for the supported SysML v2 textual subset.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonical::sha256_hex;
use crate::diagnostic::Span;

/// A `::`-separated path. `.` is accepted as a separator on input.
///
/// Unnamed elements get a synthetic last segment `@<index>` (their position
/// among the owner's children), which can never collide with an identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct QualifiedName(Vec<String>);

impl QualifiedName {
    pub fn new(segments: Vec<String>) -> Self {
        Self(segments)
    }

    pub fn single(segment: impl Into<String>) -> Self {
        Self(vec![segment.into()])
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    pub fn last(&self) -> Option<&str> {
        self.0.last().map(String::as_str)
    }

    pub fn child(&self, segment: impl Into<String>) -> Self {
        let mut segments = self.0.clone();
        segments.push(segment.into());
        Self(segments)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.len() <= 1 {
            None
        } else {
            Some(Self(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// True for the synthetic names given to unnamed elements.
    pub fn is_synthetic(&self) -> bool {
        self.last().is_some_and(|s| s.starts_with('@'))
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("::"))
    }
}

impl FromStr for QualifiedName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized = s.replace("::", "\u{0}").replace('.', "\u{0}");
        let segments: Vec<String> = normalized
            .split('\u{0}')
            .map(|p| p.trim().to_string())
            .collect();
        if segments.iter().any(String::is_empty) {
            return Err(format!("malformed qualified name `{s}`"));
        }
        Ok(Self(segments))
    }
}

impl Serialize for QualifiedName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Package,
    PartDef,
    PartUsage,
    PortDef,
    PortUsage,
    AttributeDef,
    AttributeUsage,
    ItemDef,
    ItemUsage,
    RequirementDef,
    RequirementUsage,
    InterfaceDef,
    ConnectionUsage,
    AllocationUsage,
    MetadataDef,
    Alias,
    Import,
    Comment,
}

/// Kinds grouped by the concept they describe; definitions and usages of the
/// same concept share a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KindFamily {
    Package,
    Part,
    Port,
    Attribute,
    Item,
    Requirement,
    Interface,
    Connection,
    Allocation,
    Metadata,
    Alias,
    Import,
    Comment,
}

impl ElementKind {
    pub const ALL: [ElementKind; 18] = [
        ElementKind::Package,
        ElementKind::PartDef,
        ElementKind::PartUsage,
        ElementKind::PortDef,
        ElementKind::PortUsage,
        ElementKind::AttributeDef,
        ElementKind::AttributeUsage,
        ElementKind::ItemDef,
        ElementKind::ItemUsage,
        ElementKind::RequirementDef,
        ElementKind::RequirementUsage,
        ElementKind::InterfaceDef,
        ElementKind::ConnectionUsage,
        ElementKind::AllocationUsage,
        ElementKind::MetadataDef,
        ElementKind::Alias,
        ElementKind::Import,
        ElementKind::Comment,
    ];

    pub fn is_definition(self) -> bool {
        matches!(
            self,
            ElementKind::PartDef
                | ElementKind::PortDef
                | ElementKind::AttributeDef
                | ElementKind::ItemDef
                | ElementKind::RequirementDef
                | ElementKind::InterfaceDef
                | ElementKind::MetadataDef
        )
    }

    pub fn is_usage(self) -> bool {
        matches!(
            self,
            ElementKind::PartUsage
                | ElementKind::PortUsage
                | ElementKind::AttributeUsage
                | ElementKind::ItemUsage
                | ElementKind::RequirementUsage
                | ElementKind::ConnectionUsage
                | ElementKind::AllocationUsage
        )
    }

    /// Only usages may carry `#Tag` prefix metadata.
    pub fn admits_metadata(self) -> bool {
        self.is_usage()
    }

    pub fn family(self) -> KindFamily {
        use ElementKind::*;
        match self {
            Package => KindFamily::Package,
            PartDef | PartUsage => KindFamily::Part,
            PortDef | PortUsage => KindFamily::Port,
            AttributeDef | AttributeUsage => KindFamily::Attribute,
            ItemDef | ItemUsage => KindFamily::Item,
            RequirementDef | RequirementUsage => KindFamily::Requirement,
            InterfaceDef => KindFamily::Interface,
            ConnectionUsage => KindFamily::Connection,
            AllocationUsage => KindFamily::Allocation,
            MetadataDef => KindFamily::Metadata,
            Alias => KindFamily::Alias,
            Import => KindFamily::Import,
            Comment => KindFamily::Comment,
        }
    }

    /// Two kinds may be aligned with each other: same family and same
    /// definition/usage level.
    pub fn compatible_with(self, other: ElementKind) -> bool {
        (self.is_definition() || self.is_usage())
            && self.family() == other.family()
            && self.is_definition() == other.is_definition()
    }

    /// The keyword that introduces this kind, without `def`.
    pub fn keyword(self) -> &'static str {
        use ElementKind::*;
        match self {
            Package => "package",
            PartDef | PartUsage => "part",
            PortDef | PortUsage => "port",
            AttributeDef | AttributeUsage => "attribute",
            ItemDef | ItemUsage => "item",
            RequirementDef | RequirementUsage => "requirement",
            InterfaceDef => "interface",
            ConnectionUsage => "connection",
            AllocationUsage => "allocation",
            MetadataDef => "metadata",
            Alias => "alias",
            Import => "import",
            Comment => "comment",
        }
    }

    /// Elements that own a namespace of other elements.
    pub fn is_namespace(self) -> bool {
        self.is_definition() || self.is_usage() || self == ElementKind::Package
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementKind::ALL
            .iter()
            .copied()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown element kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    TypedBy,
    Specializes,
    Subsets,
    Redefines,
    AllocatedFrom,
    AllocatedTo,
    ConnectEnd,
    ImportTarget,
    AliasTarget,
    CommentAbout,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub target: QualifiedName,
}

impl Relation {
    pub fn new(kind: RelationKind, target: QualifiedName) -> Self {
        Self { kind, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    In,
    Out,
    InOut,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Visibility {
    Public,
    Private,
}

impl Visibility {
    pub fn keyword(self) -> &'static str {
        match self {
            Visibility::Public => "public",
            Visibility::Private => "private",
        }
    }
}

/// Import view over an `Import` element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportDecl {
    pub visibility: Visibility,
    pub target: QualifiedName,
    pub wildcard: bool,
}

/// One node of the syntax tree. Source spans live in [`Model::spans`] so that
/// elements compare structurally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub name: Option<String>,
    pub short_name: Option<String>,
    pub qualified_name: QualifiedName,
    pub children: Vec<Element>,
    pub relations: Vec<Relation>,
    pub doc: Option<String>,
    pub metadata_tags: Vec<String>,
    pub direction: Option<Direction>,
    pub is_end: bool,
    pub multiplicity: Option<String>,
    /// Import visibility; `None` on every other kind.
    pub visibility: Option<Visibility>,
    /// `::*` import.
    pub wildcard: bool,
    /// Body text of a comment.
    pub text: Option<String>,
}

impl Element {
    pub fn new(kind: ElementKind, name: Option<String>) -> Self {
        Self {
            kind,
            name,
            short_name: None,
            qualified_name: QualifiedName::default(),
            children: Vec::new(),
            relations: Vec::new(),
            doc: None,
            metadata_tags: Vec::new(),
            direction: None,
            is_end: false,
            multiplicity: None,
            visibility: None,
            wildcard: false,
            text: None,
        }
    }

    pub fn with_relation(mut self, kind: RelationKind, target: QualifiedName) -> Self {
        self.relations.push(Relation::new(kind, target));
        self
    }

    pub fn targets(&self, kind: RelationKind) -> impl Iterator<Item = &QualifiedName> {
        self.relations
            .iter()
            .filter(move |r| r.kind == kind)
            .map(|r| &r.target)
    }

    pub fn target(&self, kind: RelationKind) -> Option<&QualifiedName> {
        self.targets(kind).next()
    }

    pub fn as_import(&self) -> Option<ImportDecl> {
        if self.kind != ElementKind::Import {
            return None;
        }
        Some(ImportDecl {
            visibility: self.visibility.unwrap_or(Visibility::Public),
            target: self.target(RelationKind::ImportTarget)?.clone(),
            wildcard: self.wildcard,
        })
    }

    /// Whether `segment` names this element (by name or short name).
    pub fn answers_to(&self, segment: &str) -> bool {
        self.name.as_deref() == Some(segment) || self.short_name.as_deref() == Some(segment)
    }

    /// Recomputes qualified names below this element, given its own path.
    pub fn assign_qualified_names(&mut self, own: QualifiedName) {
        for (index, child) in self.children.iter_mut().enumerate() {
            let segment = child.name.clone().unwrap_or_else(|| format!("@{index}"));
            child.assign_qualified_names(own.child(segment));
        }
        self.qualified_name = own;
    }

    /// Depth-first, pre-order walk including `self`.
    pub fn walk(&self) -> Walk<'_> {
        Walk { stack: vec![self] }
    }

    pub fn child_named(&self, segment: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.answers_to(segment))
    }
}

pub struct Walk<'a> {
    stack: Vec<&'a Element>,
}

impl<'a> Iterator for Walk<'a> {
    type Item = &'a Element;

    fn next(&mut self) -> Option<&'a Element> {
        let next = self.stack.pop()?;
        self.stack.extend(next.children.iter().rev());
        Some(next)
    }
}

/// A parsed source file: exactly one root package.
#[derive(Debug, Clone)]
pub struct Model {
    pub root: Element,
    pub source_name: String,
    pub source_digest: String,
    pub spans: BTreeMap<QualifiedName, Span>,
}

impl Model {
    pub fn new(root: Element, source_name: impl Into<String>, source_text: &str) -> Self {
        Self {
            root,
            source_name: source_name.into(),
            source_digest: digest_source(source_text),
            spans: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        self.root.name.as_deref().unwrap_or("")
    }

    /// Element at a physical path (no alias or import traversal).
    pub fn find(&self, name: &QualifiedName) -> Option<&Element> {
        let mut segments = name.segments().iter();
        if segments.next().map(String::as_str) != self.root.name.as_deref() {
            return None;
        }
        let mut current = &self.root;
        for segment in segments {
            current = current
                .children
                .iter()
                .find(|c| c.qualified_name.last() == Some(segment.as_str()))?;
        }
        Some(current)
    }

    pub fn span_of(&self, name: &QualifiedName) -> Option<Span> {
        self.spans.get(name).copied()
    }

    pub fn elements(&self) -> Walk<'_> {
        self.root.walk()
    }

    /// Equality ignoring spans, source name and digest.
    pub fn structurally_eq(&self, other: &Model) -> bool {
        self.root == other.root
    }
}

pub fn digest_source(text: &str) -> String {
    sha256_hex(text)
}
