//! Recursive-descent parser for the supported subset (see `docs/grammar.md`).
//!
//! The parser recovers at the next `;` or matching `}` after a syntax error
//! so that one pass reports every problem in a file.

use std::collections::{BTreeMap, HashMap};

use super::ast::{
    Direction, Element, ElementKind, Model, QualifiedName, Relation, RelationKind, Visibility,
};
use super::lexer::{lex, Token, TokenKind};
use crate::diagnostic::{Diagnostic, Diagnostics, Span};

pub const KEYWORDS: &[&str] = &[
    "about",
    "alias",
    "allocate",
    "allocation",
    "attribute",
    "comment",
    "connect",
    "connection",
    "def",
    "doc",
    "end",
    "for",
    "import",
    "in",
    "inout",
    "interface",
    "item",
    "metadata",
    "out",
    "package",
    "part",
    "port",
    "private",
    "public",
    "redefines",
    "requirement",
    "specializes",
    "subsets",
    "to",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parses one source file into a [`Model`]. Any Error diagnostic fails the parse.
pub fn parse_model(text: &str, source_name: &str) -> Result<Model, Diagnostics> {
    let (tokens, mut diagnostics) = lex(text);
    let mut parser = Parser {
        tokens,
        pos: 0,
        diagnostics: Vec::new(),
        spans: BTreeMap::new(),
    };
    let root = parser.parse_root();
    diagnostics.append(&mut parser.diagnostics);
    match root {
        Some(root) if !diagnostics.iter().any(Diagnostic::is_error) => {
            let mut model = Model::new(root, source_name, text);
            model.spans = parser.spans;
            Ok(model)
        }
        _ => {
            if !diagnostics.iter().any(Diagnostic::is_error) {
                diagnostics.push(Diagnostic::error(
                    "parse.no-model",
                    None,
                    "no root package found",
                ));
            }
            Err(Diagnostics(diagnostics))
        }
    }
}

/// Normalizes the inside of a `/* ... */` block: trims lines, drops a leading
/// `*` gutter, strips blank leading/trailing lines.
pub fn normalize_comment_text(raw: &str) -> String {
    let lines: Vec<&str> = raw
        .lines()
        .map(|line| {
            let trimmed = line.trim();
            match trimmed.strip_prefix('*') {
                Some(rest) => rest.trim(),
                None => trimmed,
            }
        })
        .collect();
    let start = lines
        .iter()
        .position(|l| !l.is_empty())
        .unwrap_or(lines.len());
    let end = lines
        .iter()
        .rposition(|l| !l.is_empty())
        .map_or(start, |i| i + 1);
    lines[start..end].join("\n")
}

type PResult<T> = Result<T, ()>;

#[allow(clippy::large_enum_variant)]
enum Member {
    Element(Element, Span),
    Doc(String),
}

#[derive(Default)]
struct Prefix {
    tags: Vec<(String, Span)>,
    direction: Option<(Direction, Span)>,
    end: Option<Span>,
    visibility: Option<(Visibility, Span)>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diagnostics: Vec<Diagnostic>,
    spans: BTreeMap<QualifiedName, Span>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn bump(&mut self) -> Token {
        let token = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        token
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident { text, quoted: false } if text == kw)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here(&mut self, code: &str, message: impl Into<String>) {
        let span = self.peek().span;
        self.diagnostics
            .push(Diagnostic::error(code, Some(span), message));
    }

    fn expected<T>(&mut self, what: &str) -> PResult<T> {
        let found = self.peek().kind.describe();
        self.error_here("parse.syntax", format!("expected {what}, found {found}"));
        Err(())
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> PResult<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            self.expected(what)
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.expected(&format!("`{kw}`"))
        }
    }

    /// A non-keyword identifier, if one is next.
    fn at_name(&self) -> bool {
        match &self.peek().kind {
            TokenKind::Ident { text, quoted } => *quoted || !is_keyword(text),
            _ => false,
        }
    }

    fn expect_name(&mut self) -> PResult<String> {
        if self.at_name() {
            match self.bump().kind {
                TokenKind::Ident { text, .. } => Ok(text),
                _ => unreachable!(),
            }
        } else {
            self.expected("a name")
        }
    }

    fn parse_short_name(&mut self) -> PResult<Option<String>> {
        if !self.eat(&TokenKind::Lt) {
            return Ok(None);
        }
        let name = self.expect_name()?;
        self.expect(TokenKind::Gt, "`>`")?;
        Ok(Some(name))
    }

    /// `a::b.c`, stopping before a `::*` wildcard suffix.
    fn parse_qualified_name(&mut self) -> PResult<QualifiedName> {
        let mut segments = vec![self.expect_name()?];
        loop {
            let sep = matches!(self.peek().kind, TokenKind::ColonColon | TokenKind::Dot);
            let followed_by_name = matches!(
                self.peek_at(1),
                TokenKind::Ident { text, quoted } if *quoted || !is_keyword(text)
            );
            if sep && followed_by_name {
                self.bump();
                segments.push(self.expect_name()?);
            } else {
                break;
            }
        }
        Ok(QualifiedName::new(segments))
    }

    fn parse_name_list(&mut self) -> PResult<Vec<QualifiedName>> {
        let mut names = vec![self.parse_qualified_name()?];
        while self.eat(&TokenKind::Comma) {
            names.push(self.parse_qualified_name()?);
        }
        Ok(names)
    }

    /// Skips to just after the next `;` at this nesting level, just after a
    /// balanced `{ ... }` group, or just before the enclosing `}`.
    fn recover(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek().kind {
                TokenKind::Eof => return,
                TokenKind::Semi if depth == 0 => {
                    self.bump();
                    return;
                }
                TokenKind::LBrace => {
                    depth += 1;
                    self.bump();
                }
                TokenKind::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    self.bump();
                    if depth == 0 {
                        return;
                    }
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn parse_root(&mut self) -> Option<Element> {
        if !self.at_keyword("package") {
            let found = self.peek().kind.describe();
            self.error_here(
                "parse.expected-root-package",
                format!("a model file must contain one root `package`, found {found}"),
            );
            return None;
        }
        let start = self.bump().span;
        let root = self.parse_package(None, 0, start).ok();
        if !self.at(&TokenKind::Eof) {
            self.error_here(
                "parse.trailing-content",
                "content after the root package; a file holds exactly one root package",
            );
        }
        root
    }

    fn own_name(owner: Option<&QualifiedName>, name: Option<&str>, index: usize) -> QualifiedName {
        let segment = name.map_or_else(|| format!("@{index}"), str::to_string);
        match owner {
            Some(owner) => owner.child(segment),
            None => QualifiedName::single(segment),
        }
    }

    /// After the `package` keyword.
    fn parse_package(
        &mut self,
        owner: Option<&QualifiedName>,
        index: usize,
        start: Span,
    ) -> PResult<Element> {
        let short_name = self.parse_short_name()?;
        let name = self.expect_name()?;
        let mut el = Element::new(ElementKind::Package, Some(name));
        el.short_name = short_name;
        el.qualified_name = Self::own_name(owner, el.name.as_deref(), index);
        self.parse_body(&mut el)?;
        self.spans
            .insert(el.qualified_name.clone(), start.to(self.prev_span()));
        Ok(el)
    }

    /// `;` or `{ member* }`.
    fn parse_body(&mut self, el: &mut Element) -> PResult<()> {
        if self.eat(&TokenKind::Semi) {
            return Ok(());
        }
        if !self.at(&TokenKind::LBrace) {
            return self.expected("`;` or `{`");
        }
        self.bump();
        let mut child_spans: Vec<Span> = Vec::new();
        loop {
            match self.peek().kind {
                TokenKind::RBrace => {
                    self.bump();
                    break;
                }
                TokenKind::Eof => {
                    self.error_here(
                        "parse.unclosed-brace",
                        format!("`{}` body is not closed", el.qualified_name),
                    );
                    return Err(());
                }
                _ => {}
            }
            let index = el.children.len();
            let before = self.pos;
            match self.parse_member(&el.qualified_name, index) {
                Ok(Member::Element(child, span)) => {
                    child_spans.push(span);
                    el.children.push(child);
                }
                Ok(Member::Doc(text)) => {
                    el.doc = Some(match el.doc.take() {
                        Some(existing) => format!("{existing}\n{text}"),
                        None => text,
                    });
                }
                Err(()) => {
                    self.recover();
                    if self.pos == before && !self.at(&TokenKind::RBrace) {
                        self.bump();
                    }
                }
            }
        }
        self.check_duplicates(el, &child_spans);
        Ok(())
    }

    fn check_duplicates(&mut self, el: &Element, spans: &[Span]) {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for (child, span) in el.children.iter().zip(spans) {
            let mut names: Vec<&str> = child.name.iter().map(String::as_str).collect();
            if let Some(short) = child.short_name.as_deref() {
                if !names.contains(&short) {
                    names.push(short);
                }
            }
            for name in names {
                if seen.insert(name, ()).is_some() {
                    self.diagnostics.push(Diagnostic::error(
                        "parse.duplicate-name",
                        Some(*span),
                        format!(
                            "`{name}` is declared more than once in `{}`",
                            el.qualified_name
                        ),
                    ));
                }
            }
        }
    }

    fn parse_prefix(&mut self) -> PResult<Prefix> {
        let mut prefix = Prefix::default();
        loop {
            let span = self.peek().span;
            if self.eat(&TokenKind::Hash) {
                let tag = self.parse_qualified_name()?;
                prefix
                    .tags
                    .push((tag.to_string(), span.to(self.prev_span())));
            } else if self.eat_keyword("in") {
                prefix.direction = Some((Direction::In, span));
            } else if self.eat_keyword("out") {
                prefix.direction = Some((Direction::Out, span));
            } else if self.eat_keyword("inout") {
                prefix.direction = Some((Direction::InOut, span));
            } else if self.eat_keyword("end") {
                prefix.end = Some(span);
            } else if self.eat_keyword("public") {
                prefix.visibility = Some((Visibility::Public, span));
            } else if self.eat_keyword("private") {
                prefix.visibility = Some((Visibility::Private, span));
            } else {
                return Ok(prefix);
            }
        }
    }

    fn parse_member(&mut self, owner: &QualifiedName, index: usize) -> PResult<Member> {
        let start = self.peek().span;
        if let TokenKind::BlockComment(raw) = &self.peek().kind {
            let text = normalize_comment_text(raw);
            self.bump();
            let mut el = Element::new(ElementKind::Comment, None);
            el.text = Some(text);
            el.qualified_name = Self::own_name(Some(owner), None, index);
            self.eat(&TokenKind::Semi);
            self.spans.insert(el.qualified_name.clone(), start);
            return Ok(Member::Element(el, start));
        }

        let prefix = self.parse_prefix()?;
        let keyword = match &self.peek().kind {
            TokenKind::Ident {
                text,
                quoted: false,
            } if is_keyword(text) => text.clone(),
            _ => return self.expected("a member declaration"),
        };
        let keyword_span = self.bump().span;

        let mut el = match keyword.as_str() {
            "doc" => {
                let text = self.parse_comment_body()?;
                self.check_prefix_empty(&prefix, "doc")?;
                return Ok(Member::Doc(text));
            }
            "package" => {
                self.check_prefix_empty(&prefix, "package")?;
                let el = self.parse_package(Some(owner), index, start)?;
                return Ok(Member::Element(el, start.to(self.prev_span())));
            }
            "part" | "port" | "attribute" | "item" | "requirement" | "interface" | "metadata" => {
                if self.eat_keyword("def") {
                    self.parse_definition(&keyword)?
                } else {
                    self.parse_usage(&keyword, keyword_span)?
                }
            }
            "connection" => self.parse_connection(true)?,
            "connect" => self.parse_connection(false)?,
            "allocation" => self.parse_allocation()?,
            "alias" => self.parse_alias()?,
            "import" => self.parse_import()?,
            "comment" => self.parse_comment()?,
            other => {
                self.diagnostics.push(Diagnostic::error(
                    "parse.syntax",
                    Some(keyword_span),
                    format!("`{other}` cannot start a member declaration"),
                ));
                return Err(());
            }
        };

        self.apply_prefix(&mut el, prefix);
        el.relations.sort_by_key(|r| r.kind);
        el.qualified_name = Self::own_name(Some(owner), el.name.as_deref(), index);

        let body_ok = match el.kind {
            ElementKind::Import => self.expect(TokenKind::Semi, "`;`"),
            ElementKind::Comment => {
                self.eat(&TokenKind::Semi);
                Ok(())
            }
            _ => self.parse_body(&mut el),
        };
        body_ok?;
        let span = start.to(self.prev_span());
        self.spans.insert(el.qualified_name.clone(), span);
        Ok(Member::Element(el, span))
    }

    fn check_prefix_empty(&mut self, prefix: &Prefix, what: &str) -> PResult<()> {
        if let Some((_, span)) = prefix.tags.first() {
            self.diagnostics.push(Diagnostic::error(
                "parse.metadata-not-admitted",
                Some(*span),
                format!("prefix metadata is not allowed on `{what}`"),
            ));
        }
        let modifier = prefix
            .direction
            .map(|d| d.1)
            .or(prefix.end)
            .or(prefix.visibility.map(|v| v.1));
        if let Some(span) = modifier {
            self.diagnostics.push(Diagnostic::error(
                "parse.modifier-not-admitted",
                Some(span),
                format!("modifier is not allowed on `{what}`"),
            ));
        }
        Ok(())
    }

    fn apply_prefix(&mut self, el: &mut Element, prefix: Prefix) {
        let kind = el.kind;
        for (tag, span) in prefix.tags {
            if kind.admits_metadata() {
                el.metadata_tags.push(tag);
            } else {
                self.diagnostics.push(Diagnostic::error(
                    "parse.metadata-not-admitted",
                    Some(span),
                    format!("prefix metadata `#{tag}` is not allowed on {kind}; only usages take prefix metadata"),
                ));
            }
        }
        let reject = |p: &mut Self, span: Span, what: &str| {
            p.diagnostics.push(Diagnostic::error(
                "parse.modifier-not-admitted",
                Some(span),
                format!("`{what}` is not allowed on {kind}"),
            ));
        };
        if let Some((direction, span)) = prefix.direction {
            if kind.is_usage() {
                el.direction = Some(direction);
            } else {
                reject(self, span, direction.keyword());
            }
        }
        if let Some(span) = prefix.end {
            if kind.is_usage() {
                el.is_end = true;
            } else {
                reject(self, span, "end");
            }
        }
        match prefix.visibility {
            Some((visibility, _)) if kind == ElementKind::Import => {
                el.visibility = Some(visibility)
            }
            Some((visibility, span)) => reject(self, span, visibility.keyword()),
            None if kind == ElementKind::Import => el.visibility = Some(Visibility::Public),
            None => {}
        }
    }

    fn parse_definition(&mut self, keyword: &str) -> PResult<Element> {
        let kind = match keyword {
            "part" => ElementKind::PartDef,
            "port" => ElementKind::PortDef,
            "attribute" => ElementKind::AttributeDef,
            "item" => ElementKind::ItemDef,
            "requirement" => ElementKind::RequirementDef,
            "interface" => ElementKind::InterfaceDef,
            "metadata" => ElementKind::MetadataDef,
            _ => unreachable!(),
        };
        let short_name = self.parse_short_name()?;
        let name = self.expect_name()?;
        let mut el = Element::new(kind, Some(name));
        el.short_name = short_name;
        if self.eat(&TokenKind::Specializes) || self.eat_keyword("specializes") {
            for target in self.parse_name_list()? {
                el.relations
                    .push(Relation::new(RelationKind::Specializes, target));
            }
        }
        Ok(el)
    }

    fn parse_usage(&mut self, keyword: &str, keyword_span: Span) -> PResult<Element> {
        let kind = match keyword {
            "part" => ElementKind::PartUsage,
            "port" => ElementKind::PortUsage,
            "attribute" => ElementKind::AttributeUsage,
            "item" => ElementKind::ItemUsage,
            "requirement" => ElementKind::RequirementUsage,
            other => {
                self.diagnostics.push(Diagnostic::error(
                    "parse.unsupported",
                    Some(keyword_span),
                    format!("`{other}` usages are outside the supported subset; use `{other} def`"),
                ));
                return Err(());
            }
        };
        let short_name = self.parse_short_name()?;
        let name = self.expect_name()?;
        let mut el = Element::new(kind, Some(name));
        el.short_name = short_name;
        self.parse_usage_clauses(&mut el)?;
        Ok(el)
    }

    /// Typing, subsetting, redefinition and multiplicity, in any order.
    fn parse_usage_clauses(&mut self, el: &mut Element) -> PResult<()> {
        loop {
            let kind = if self.eat(&TokenKind::Colon) {
                RelationKind::TypedBy
            } else if self.eat(&TokenKind::Specializes)
                || self.eat_keyword("subsets")
                || self.eat_keyword("specializes")
            {
                RelationKind::Subsets
            } else if self.eat(&TokenKind::Redefines) || self.eat_keyword("redefines") {
                RelationKind::Redefines
            } else if self.at(&TokenKind::LBracket) {
                if el.multiplicity.is_some() {
                    self.error_here("parse.syntax", "multiplicity given twice");
                    return Err(());
                }
                el.multiplicity = Some(self.parse_multiplicity()?);
                continue;
            } else {
                return Ok(());
            };
            for target in self.parse_name_list()? {
                el.relations.push(Relation::new(kind, target));
            }
        }
    }

    fn parse_multiplicity(&mut self) -> PResult<String> {
        self.expect(TokenKind::LBracket, "`[`")?;
        let mut text = String::new();
        loop {
            match self.peek().kind.clone() {
                TokenKind::RBracket => {
                    self.bump();
                    break;
                }
                TokenKind::Number(n) => text.push_str(&n),
                TokenKind::Star => text.push('*'),
                TokenKind::DotDot => text.push_str(".."),
                TokenKind::Ident {
                    text: t,
                    quoted: false,
                } if !is_keyword(&t) => text.push_str(&t),
                _ => return self.expected("a multiplicity bound or `]`"),
            }
            self.bump();
        }
        if text.is_empty() {
            self.diagnostics.push(Diagnostic::error(
                "parse.syntax",
                Some(self.prev_span()),
                "empty multiplicity",
            ));
            return Err(());
        }
        Ok(text)
    }

    /// `connection [<s>] [name] clauses connect a to b` or `connect a to b`.
    fn parse_connection(&mut self, long_form: bool) -> PResult<Element> {
        let mut el = Element::new(ElementKind::ConnectionUsage, None);
        if long_form {
            el.short_name = self.parse_short_name()?;
            if self.at_name() {
                el.name = Some(self.expect_name()?);
            }
            self.parse_usage_clauses(&mut el)?;
            self.expect_keyword("connect")?;
        }
        let from = self.parse_qualified_name()?;
        self.expect_keyword("to")?;
        let to = self.parse_qualified_name()?;
        el.relations
            .push(Relation::new(RelationKind::ConnectEnd, from));
        el.relations
            .push(Relation::new(RelationKind::ConnectEnd, to));
        Ok(el)
    }

    /// `allocation [<s>] [name] [: T] [allocate] a to b`.
    fn parse_allocation(&mut self) -> PResult<Element> {
        let mut el = Element::new(ElementKind::AllocationUsage, None);
        el.short_name = self.parse_short_name()?;
        let mut source = None;
        if self.at_name() {
            let first = self.parse_qualified_name()?;
            if self.at_keyword("to") {
                source = Some(first);
            } else if first.len() == 1 {
                el.name = first.first().map(str::to_string);
            } else {
                return self.expected("`to`");
            }
        }
        if source.is_none() {
            self.parse_usage_clauses(&mut el)?;
            self.eat_keyword("allocate");
            source = Some(self.parse_qualified_name()?);
        }
        self.expect_keyword("to")?;
        let target = self.parse_qualified_name()?;
        el.relations.push(Relation::new(
            RelationKind::AllocatedFrom,
            source.expect("source set"),
        ));
        el.relations
            .push(Relation::new(RelationKind::AllocatedTo, target));
        Ok(el)
    }

    fn parse_alias(&mut self) -> PResult<Element> {
        let short_name = self.parse_short_name()?;
        let name = self.expect_name()?;
        self.expect_keyword("for")?;
        let target = self.parse_qualified_name()?;
        let mut el = Element::new(ElementKind::Alias, Some(name));
        el.short_name = short_name;
        el.relations
            .push(Relation::new(RelationKind::AliasTarget, target));
        Ok(el)
    }

    fn parse_import(&mut self) -> PResult<Element> {
        let target = self.parse_qualified_name()?;
        let mut el = Element::new(ElementKind::Import, None);
        if self.at(&TokenKind::ColonColon) && self.peek_at(1) == &TokenKind::Star {
            self.bump();
            self.bump();
            if self.at(&TokenKind::Star) {
                self.error_here(
                    "parse.unsupported",
                    "recursive `::**` imports are outside the supported subset",
                );
                return Err(());
            }
            el.wildcard = true;
        }
        el.relations
            .push(Relation::new(RelationKind::ImportTarget, target));
        Ok(el)
    }

    fn parse_comment_body(&mut self) -> PResult<String> {
        match &self.peek().kind {
            TokenKind::BlockComment(raw) => {
                let text = normalize_comment_text(raw);
                self.bump();
                Ok(text)
            }
            _ => self.expected("a `/* ... */` comment body"),
        }
    }

    /// `comment [<s>] [name] [about a, b] /* text */`.
    fn parse_comment(&mut self) -> PResult<Element> {
        let mut el = Element::new(ElementKind::Comment, None);
        el.short_name = self.parse_short_name()?;
        if self.at_name() {
            el.name = Some(self.expect_name()?);
        }
        if self.eat_keyword("about") {
            for target in self.parse_name_list()? {
                el.relations
                    .push(Relation::new(RelationKind::CommentAbout, target));
            }
        }
        el.text = Some(self.parse_comment_body()?);
        Ok(el)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(text: &str) -> Model {
        parse_model(text, "test.sysml").unwrap_or_else(|d| panic!("{d}"))
    }

    fn parse_err(text: &str) -> Diagnostics {
        parse_model(text, "test.sysml").expect_err("expected failure")
    }

    #[test]
    fn minimal_package() {
        let m = parse_ok("package P { part def A; }");
        assert_eq!(m.root.children.len(), 1);
        let a = &m.root.children[0];
        assert_eq!(a.kind, ElementKind::PartDef);
        assert_eq!(a.qualified_name.to_string(), "P::A");
    }

    #[test]
    fn tagged_allocation() {
        let m = parse_ok("package P { part a1; part b1; #FullyMatched allocation a1 to b1; }");
        let alloc = &m.root.children[2];
        assert_eq!(alloc.kind, ElementKind::AllocationUsage);
        assert_eq!(alloc.metadata_tags, vec!["FullyMatched"]);
        assert_eq!(
            alloc
                .target(RelationKind::AllocatedFrom)
                .unwrap()
                .to_string(),
            "a1"
        );
        assert_eq!(
            alloc.target(RelationKind::AllocatedTo).unwrap().to_string(),
            "b1"
        );
        assert!(alloc.name.is_none());
    }

    #[test]
    fn named_allocation_with_allocate_keyword() {
        let m = parse_ok(
            "package P { allocation m1 : Map allocate X::a to Y.b; allocation m2 X::a to Y::b; }",
        );
        let a = &m.root.children[0];
        assert_eq!(a.name.as_deref(), Some("m1"));
        assert_eq!(a.target(RelationKind::TypedBy).unwrap().to_string(), "Map");
        assert_eq!(
            a.target(RelationKind::AllocatedTo).unwrap().to_string(),
            "Y::b"
        );
        assert_eq!(m.root.children[1].name.as_deref(), Some("m2"));
    }

    #[test]
    fn nameless_definition_reports_at_brace() {
        let d = parse_err("package P {\n    part def { }\n}");
        let e = d.errors().next().unwrap();
        assert_eq!(e.code, "parse.syntax");
        let span = e.span.unwrap();
        assert_eq!((span.start.line, span.start.column), (2, 14));
    }

    #[test]
    fn recovery_reports_multiple_errors() {
        let d = parse_err("package P { part def { } part x : ; part def Ok; port def ; }");
        assert_eq!(d.errors().count(), 3, "{d}");
    }

    #[test]
    fn duplicate_sibling_is_an_error() {
        let d = parse_err("package P { part def A; part def A; }");
        assert_eq!(d.errors().next().unwrap().code, "parse.duplicate-name");
        // Same name in different scopes is fine.
        parse_ok("package P { part def A { part x; } part def B { part x; } }");
    }

    #[test]
    fn metadata_on_definition_is_rejected() {
        let d = parse_err("package P { #FullyMatched part def A; }");
        assert_eq!(
            d.errors().next().unwrap().code,
            "parse.metadata-not-admitted"
        );
        let d = parse_err("package P { #X package Q; }");
        assert_eq!(
            d.errors().next().unwrap().code,
            "parse.metadata-not-admitted"
        );
    }

    #[test]
    fn usage_clauses_and_docs() {
        let m = parse_ok(
            "package P {
                part def S :> Base, Other { doc /* temperature sensor */ }
                part <ts> s : S [0..*] :>> x subsets y;
                out port p : DataPort;
            }",
        );
        let s = &m.root.children[0];
        assert_eq!(s.doc.as_deref(), Some("temperature sensor"));
        assert_eq!(s.targets(RelationKind::Specializes).count(), 2);
        let u = &m.root.children[1];
        assert_eq!(u.short_name.as_deref(), Some("ts"));
        assert_eq!(u.multiplicity.as_deref(), Some("0..*"));
        let kinds: Vec<_> = u.relations.iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            vec![
                RelationKind::TypedBy,
                RelationKind::Subsets,
                RelationKind::Redefines
            ]
        );
        assert_eq!(m.root.children[2].direction, Some(Direction::Out));
    }

    #[test]
    fn imports_aliases_comments() {
        let m = parse_ok(
            "package P {
                private import Q::*;
                import R::x;
                alias Sensor for Q::TemperatureSensor;
                comment about Sensor /* confidence: 0.90 */
                /* free comment */
            }",
        );
        let imp = m.root.children[0].as_import().unwrap();
        assert_eq!(imp.visibility, Visibility::Private);
        assert!(imp.wildcard);
        let imp2 = m.root.children[1].as_import().unwrap();
        assert_eq!(imp2.visibility, Visibility::Public);
        assert!(!imp2.wildcard);
        assert_eq!(m.root.children[2].kind, ElementKind::Alias);
        let c = &m.root.children[3];
        assert_eq!(c.text.as_deref(), Some("confidence: 0.90"));
        assert_eq!(c.qualified_name.to_string(), "P::@3");
        assert_eq!(m.root.children[4].text.as_deref(), Some("free comment"));
    }

    #[test]
    fn one_root_package_only() {
        assert_eq!(
            parse_err("package A; package B;")
                .errors()
                .next()
                .unwrap()
                .code,
            "parse.trailing-content"
        );
        assert_eq!(
            parse_err("part def A;").errors().next().unwrap().code,
            "parse.expected-root-package"
        );
    }

    #[test]
    fn unclosed_body() {
        let d = parse_err("package P { part def A;");
        assert!(d.iter().any(|d| d.code == "parse.unclosed-brace"));
    }

    #[test]
    fn comment_text_normalization() {
        assert_eq!(
            normalize_comment_text("\n * line one\n * line two\n "),
            "line one\nline two"
        );
        assert_eq!(normalize_comment_text("  single  "), "single");
    }

    #[test]
    fn spans_are_recorded() {
        let m = parse_ok("package P {\n  part def A;\n}");
        let span = m.span_of(&"P::A".parse().unwrap()).unwrap();
        assert_eq!(span.start.line, 2);
    }

    #[test]
    fn digest_matches_source() {
        let text = "package P;";
        let m = parse_ok(text);
        assert_eq!(m.source_digest, crate::sysml::ast::digest_source(text));
    }
}
