//! The supported SysML v2 textual subset: syntax tree, parser, renderer,
//! name resolution and extension libraries.

pub mod ast;
#[cfg(feature = "testkit")]
pub mod generate;
pub mod lexer;
pub mod library;
pub mod parser;
pub mod render;
pub mod resolve;

pub use ast::{
    Direction, Element, ElementKind, ImportDecl, KindFamily, Model, QualifiedName, Relation,
    RelationKind, Visibility,
};
pub use library::{bundled_library, load_extension_library, ExtensionLibrary, LibraryError};
pub use parser::parse_model;
pub use render::{render_element, render_model};
pub use resolve::{resolve, resolve_from, resolve_from_raw, ResolveError, Resolved};
