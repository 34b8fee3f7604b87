//! Soft alignment of independently developed SysML v2 textual models.
//!
//! The pipeline runs in seven confirmed stages: parse the inputs, summarize
//! each model to a flat intermediate representation, propose scored match
//! candidates, verify them, generate an additive alignment package, check it,
//! and export the results.

pub mod aligner;
pub mod canonical;
pub mod checker;
pub mod corpus;
pub mod diagnostic;
pub mod ir;
pub mod matcher;
pub mod session;
pub mod sysml;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod verifier;

pub use diagnostic::{Diagnostic, Diagnostics, Severity, Span};
