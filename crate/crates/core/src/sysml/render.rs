//! Canonical pretty-printer. `parse_model(render_model(m))` is structurally equal to `m`.

use std::fmt::Write;

use super::ast::{Element, ElementKind, Model, QualifiedName, RelationKind};
use super::parser::is_keyword;

const INDENT: &str = "    ";

pub fn render_model(model: &Model) -> String {
    render_element(&model.root)
}

pub fn render_element(element: &Element) -> String {
    let mut out = String::new();
    write_element(&mut out, element, 0);
    out
}

/// Quotes names that are not plain identifiers or collide with keywords.
pub fn render_name(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain && !is_keyword(name) {
        name.to_string()
    } else {
        format!("'{name}'")
    }
}

pub fn render_qualified(name: &QualifiedName) -> String {
    name.segments()
        .iter()
        .map(|s| render_name(s))
        .collect::<Vec<_>>()
        .join("::")
}

fn render_list<'a>(names: impl Iterator<Item = &'a QualifiedName>) -> String {
    names.map(render_qualified).collect::<Vec<_>>().join(", ")
}

fn write_comment_block(out: &mut String, text: &str, depth: usize) {
    if !text.contains('\n') {
        let _ = write!(out, "/* {text} */");
        return;
    }
    let pad = INDENT.repeat(depth);
    out.push_str("/*");
    for line in text.lines() {
        if line.is_empty() {
            let _ = write!(out, "\n{pad} *");
        } else {
            let _ = write!(out, "\n{pad} * {line}");
        }
    }
    let _ = write!(out, "\n{pad} */");
}

fn write_element(out: &mut String, el: &Element, depth: usize) {
    let pad = INDENT.repeat(depth);
    out.push_str(&pad);
    for tag in &el.metadata_tags {
        let tag: QualifiedName = tag
            .parse()
            .unwrap_or_else(|_| QualifiedName::single(tag.clone()));
        let _ = write!(out, "#{} ", render_qualified(&tag));
    }
    if let Some(direction) = el.direction {
        let _ = write!(out, "{} ", direction.keyword());
    }
    if el.is_end {
        out.push_str("end ");
    }

    match el.kind {
        ElementKind::Import => {
            let visibility = el.visibility.map_or("public", |v| v.keyword());
            let target = el
                .target(RelationKind::ImportTarget)
                .map(render_qualified)
                .unwrap_or_default();
            let suffix = if el.wildcard { "::*" } else { "" };
            let _ = writeln!(out, "{visibility} import {target}{suffix};");
            return;
        }
        ElementKind::Comment => {
            let about: Vec<&QualifiedName> = el.targets(RelationKind::CommentAbout).collect();
            let bare = el.name.is_none() && el.short_name.is_none() && about.is_empty();
            if !bare {
                out.push_str("comment ");
                write_short_and_name(out, el);
                if !about.is_empty() {
                    let _ = write!(out, "about {} ", render_list(about.into_iter()));
                }
            }
            write_comment_block(out, el.text.as_deref().unwrap_or(""), depth);
            out.push('\n');
            return;
        }
        ElementKind::Alias => {
            out.push_str("alias ");
            write_short_and_name(out, el);
            let target = el
                .target(RelationKind::AliasTarget)
                .map(render_qualified)
                .unwrap_or_default();
            let _ = write!(out, "for {target}");
        }
        ElementKind::AllocationUsage => {
            out.push_str("allocation ");
            write_short_and_name(out, el);
            write_usage_clauses(out, el);
            let from = el
                .target(RelationKind::AllocatedFrom)
                .map(render_qualified)
                .unwrap_or_default();
            let to = el
                .target(RelationKind::AllocatedTo)
                .map(render_qualified)
                .unwrap_or_default();
            // A bare source after a typing clause would read as part of the type list.
            if el.target(RelationKind::TypedBy).is_some() || el.multiplicity.is_some() {
                out.push_str("allocate ");
            }
            let _ = write!(out, "{from} to {to}");
        }
        ElementKind::ConnectionUsage => {
            let ends: Vec<String> = el
                .targets(RelationKind::ConnectEnd)
                .map(render_qualified)
                .collect();
            let short_form = el.name.is_none()
                && el.short_name.is_none()
                && el.metadata_tags.is_empty()
                && el.direction.is_none()
                && !el.is_end
                && el.multiplicity.is_none()
                && el
                    .relations
                    .iter()
                    .all(|r| r.kind == RelationKind::ConnectEnd);
            if !short_form {
                out.push_str("connection ");
                write_short_and_name(out, el);
                write_usage_clauses(out, el);
            }
            let _ = write!(
                out,
                "connect {} to {}",
                ends.first().cloned().unwrap_or_default(),
                ends.get(1).cloned().unwrap_or_default()
            );
        }
        kind => {
            out.push_str(kind.keyword());
            out.push(' ');
            if kind.is_definition() {
                out.push_str("def ");
            }
            write_short_and_name(out, el);
            if kind.is_definition() {
                let supers: Vec<&QualifiedName> = el.targets(RelationKind::Specializes).collect();
                if !supers.is_empty() {
                    let _ = write!(out, ":> {} ", render_list(supers.into_iter()));
                }
            } else if kind != ElementKind::Package {
                write_usage_clauses(out, el);
            }
        }
    }

    trim_trailing_space(out);
    if el.doc.is_none() && el.children.is_empty() {
        out.push_str(";\n");
        return;
    }
    out.push_str(" {\n");
    if let Some(doc) = &el.doc {
        let _ = write!(out, "{pad}{INDENT}doc ");
        write_comment_block(out, doc, depth + 1);
        out.push('\n');
    }
    for child in &el.children {
        write_element(out, child, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}

fn write_short_and_name(out: &mut String, el: &Element) {
    if let Some(short) = &el.short_name {
        let _ = write!(out, "<{}> ", render_name(short));
    }
    if let Some(name) = &el.name {
        let _ = write!(out, "{} ", render_name(name));
    }
}

fn write_usage_clauses(out: &mut String, el: &Element) {
    for (kind, op) in [
        (RelationKind::TypedBy, ":"),
        (RelationKind::Subsets, ":>"),
        (RelationKind::Redefines, ":>>"),
    ] {
        let targets: Vec<&QualifiedName> = el.targets(kind).collect();
        if !targets.is_empty() {
            let _ = write!(out, "{op} {} ", render_list(targets.into_iter()));
        }
    }
    if let Some(m) = &el.multiplicity {
        let _ = write!(out, "[{m}] ");
    }
}

fn trim_trailing_space(out: &mut String) {
    while out.ends_with(' ') {
        out.pop();
    }
}
