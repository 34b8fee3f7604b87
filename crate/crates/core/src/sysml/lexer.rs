use crate::diagnostic::{Diagnostic, Position, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifier or keyword. Quoted names (`'a b'`) arrive unquoted with `quoted` set.
    Ident {
        text: String,
        quoted: bool,
    },
    Number(String),
    /// `/* ... */` with the delimiters removed.
    BlockComment(String),
    LBrace,
    RBrace,
    Semi,
    Colon,
    ColonColon,
    /// `:>`
    Specializes,
    /// `:>>`
    Redefines,
    Dot,
    DotDot,
    Comma,
    Star,
    Hash,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident { text, .. } => format!("`{text}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::BlockComment(_) => "block comment".to_string(),
            TokenKind::LBrace => "`{`".to_string(),
            TokenKind::RBrace => "`}`".to_string(),
            TokenKind::Semi => "`;`".to_string(),
            TokenKind::Colon => "`:`".to_string(),
            TokenKind::ColonColon => "`::`".to_string(),
            TokenKind::Specializes => "`:>`".to_string(),
            TokenKind::Redefines => "`:>>`".to_string(),
            TokenKind::Dot => "`.`".to_string(),
            TokenKind::DotDot => "`..`".to_string(),
            TokenKind::Comma => "`,`".to_string(),
            TokenKind::Star => "`*`".to_string(),
            TokenKind::Hash => "`#`".to_string(),
            TokenKind::LBracket => "`[`".to_string(),
            TokenKind::RBracket => "`]`".to_string(),
            TokenKind::Lt => "`<`".to_string(),
            TokenKind::Gt => "`>`".to_string(),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl Cursor<'_> {
    fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn eat(&mut self, expected: char) -> bool {
        if self.peek() == Some(expected) {
            self.bump();
            true
        } else {
            false
        }
    }
}

/// Tokenizes `text`. `//` line comments are trivia; block comments are tokens.
/// Lexical errors are reported and the offending character skipped.
pub fn lex(text: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    let mut diagnostics = Vec::new();

    loop {
        while cur.peek().is_some_and(char::is_whitespace) {
            cur.bump();
        }
        let start = cur.pos();
        let Some(c) = cur.bump() else {
            tokens.push(Token {
                kind: TokenKind::Eof,
                span: Span::new(start, start),
            });
            break;
        };
        let kind = match c {
            '/' if cur.peek() == Some('/') => {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
                continue;
            }
            '/' if cur.peek() == Some('*') => {
                cur.bump();
                let mut body = String::new();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    if c == '*' && cur.peek() == Some('/') {
                        cur.bump();
                        closed = true;
                        break;
                    }
                    body.push(c);
                }
                if !closed {
                    diagnostics.push(Diagnostic::error(
                        "lex.unterminated-comment",
                        Some(Span::new(start, cur.pos())),
                        "block comment is not terminated",
                    ));
                    continue;
                }
                TokenKind::BlockComment(body)
            }
            '\'' => {
                let mut name = String::new();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    if c == '\'' {
                        closed = true;
                        break;
                    }
                    if c == '\n' {
                        break;
                    }
                    name.push(c);
                }
                if !closed || name.is_empty() {
                    diagnostics.push(Diagnostic::error(
                        "lex.bad-quoted-name",
                        Some(Span::new(start, cur.pos())),
                        "quoted name is empty or not terminated on its line",
                    ));
                    continue;
                }
                TokenKind::Ident {
                    text: name,
                    quoted: true,
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::from(c);
                while let Some(n) = cur
                    .peek()
                    .filter(|n| n.is_ascii_alphanumeric() || *n == '_')
                {
                    text.push(n);
                    cur.bump();
                }
                TokenKind::Ident {
                    text,
                    quoted: false,
                }
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::from(c);
                while let Some(n) = cur.peek().filter(char::is_ascii_digit) {
                    digits.push(n);
                    cur.bump();
                }
                TokenKind::Number(digits)
            }
            '{' => TokenKind::LBrace,
            '}' => TokenKind::RBrace,
            ';' => TokenKind::Semi,
            ',' => TokenKind::Comma,
            '*' => TokenKind::Star,
            '#' => TokenKind::Hash,
            '[' => TokenKind::LBracket,
            ']' => TokenKind::RBracket,
            '<' => TokenKind::Lt,
            '>' => TokenKind::Gt,
            '.' => {
                if cur.eat('.') {
                    TokenKind::DotDot
                } else {
                    TokenKind::Dot
                }
            }
            ':' => {
                if cur.eat(':') {
                    TokenKind::ColonColon
                } else if cur.eat('>') {
                    if cur.eat('>') {
                        TokenKind::Redefines
                    } else {
                        TokenKind::Specializes
                    }
                } else {
                    TokenKind::Colon
                }
            }
            other => {
                diagnostics.push(Diagnostic::error(
                    "lex.unexpected-char",
                    Some(Span::new(start, cur.pos())),
                    format!("unexpected character `{other}`"),
                ));
                continue;
            }
        };
        tokens.push(Token {
            kind,
            span: Span::new(start, cur.pos()),
        });
    }

    (tokens, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        let (tokens, diags) = lex(text);
        assert!(diags.is_empty(), "{diags:?}");
        tokens.into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn relation_operators() {
        assert_eq!(
            kinds(": :> :>> :: . .."),
            vec![
                TokenKind::Colon,
                TokenKind::Specializes,
                TokenKind::Redefines,
                TokenKind::ColonColon,
                TokenKind::Dot,
                TokenKind::DotDot,
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn line_comments_are_trivia_block_comments_are_not() {
        let k = kinds("a // ignored\n/* kept */");
        assert_eq!(k.len(), 3);
        assert_eq!(k[1], TokenKind::BlockComment(" kept ".into()));
    }

    #[test]
    fn positions_are_one_based() {
        let (tokens, _) = lex("a\n  b");
        assert_eq!(tokens[1].span.start, Position { line: 2, column: 3 });
    }

    #[test]
    fn unterminated_comment_is_an_error() {
        let (_, diags) = lex("/* open");
        assert_eq!(diags[0].code, "lex.unterminated-comment");
    }

    #[test]
    fn stray_character_is_reported_and_skipped() {
        let (tokens, diags) = lex("a $ b");
        assert_eq!(diags.len(), 1);
        assert_eq!(tokens.len(), 3);
    }

    #[test]
    fn quoted_names() {
        assert_eq!(
            kinds("'Vehicle Mass'")[0],
            TokenKind::Ident {
                text: "Vehicle Mass".into(),
                quoted: true
            }
        );
    }
}
