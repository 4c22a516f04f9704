use std::fmt;

use super::ast::Span;
use super::LexError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Number(f64),
    Str(String),
    /// Operators and punctuation, e.g. `+=`, `(`, `;`.
    Punct(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Var,
    Function,
    Return,
    If,
    Else,
    True,
    False,
    Null,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Keyword> {
        Some(match word {
            "var" => Keyword::Var,
            "function" => Keyword::Function,
            "return" => Keyword::Return,
            "if" => Keyword::If,
            "else" => Keyword::Else,
            "true" => Keyword::True,
            "false" => Keyword::False,
            "null" => Keyword::Null,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Var => "var",
            Keyword::Function => "function",
            Keyword::Return => "return",
            Keyword::If => "if",
            Keyword::Else => "else",
            Keyword::True => "true",
            Keyword::False => "false",
            Keyword::Null => "null",
        }
    }
}

/// Words that belong to JavaScript but not to the subset. They lex as
/// identifiers and the parser rejects them by name.
pub const RESERVED: &[&str] = &[
    "class",
    "for",
    "while",
    "do",
    "async",
    "await",
    "let",
    "const",
    "new",
    "this",
    "try",
    "catch",
    "throw",
    "switch",
    "case",
    "break",
    "continue",
    "typeof",
    "instanceof",
    "delete",
    "yield",
    "import",
    "export",
    "with",
    "finally",
    "in",
    "of",
    "void",
    "super",
    "extends",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "kw:{}", k.as_str()),
            TokenKind::Ident(name) => write!(f, "ident:{name}"),
            TokenKind::Number(n) => write!(f, "num:{n}"),
            TokenKind::Str(s) => write!(f, "str:{s:?}"),
            TokenKind::Punct(p) => write!(f, "{p}"),
        }
    }
}

// Longest match first.
const PUNCTS: &[&str] = &[
    "+=", "==", "!=", "||", ">>", "->", "(", ")", "{", "}", "[", "]", ",", ";", ".", ":", "=", "+",
    "-", "*", "/", "!", "&",
];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    column: u32,
}

/// Splits MiniJS source into tokens. `//` comments are dropped.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut lexer = Lexer {
        src: source,
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    while let Some(token) = lexer.next_token()? {
        // A slash that cannot be division starts a regex literal.
        if token.kind == TokenKind::Punct("/") && !tokens.last().is_some_and(ends_operand) {
            return Err(LexError {
                span: token.span,
                message: "regular expression literals are not supported".into(),
            });
        }
        tokens.push(token);
    }
    Ok(tokens)
}

fn ends_operand(token: &Token) -> bool {
    match &token.kind {
        TokenKind::Ident(_) | TokenKind::Number(_) | TokenKind::Str(_) => true,
        TokenKind::Keyword(k) => matches!(k, Keyword::True | Keyword::False | Keyword::Null),
        TokenKind::Punct(p) => matches!(*p, ")" | "]"),
    }
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(offset)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn here(&self) -> Span {
        Span {
            start: self.pos,
            end: self.pos,
            line: self.line,
            column: self.column,
        }
    }

    fn error(&self, start: Span, message: impl Into<String>) -> LexError {
        let mut span = start;
        span.end = self
            .pos
            .max(start.start + 1)
            .min(self.src.len().max(start.start));
        LexError {
            span,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek_at(1) == Some('/') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>, LexError> {
        self.skip_trivia();
        let start = self.here();
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        let kind = if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let word = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$');
            match Keyword::from_word(word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word.to_string()),
            }
        } else if c.is_ascii_digit()
            || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()))
        {
            self.number(start)?
        } else if c == '\'' || c == '"' {
            self.string(start, c)?
        } else if c == '`' {
            return Err(self.error(start, "template strings are not supported"));
        } else if c == '/' && self.peek_at(1) == Some('*') {
            return Err(self.error(start, "block comments are not supported"));
        } else {
            let rest = &self.src[self.pos..];
            let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
                return Err(self.error(start, format!("unexpected character {c:?}")));
            };
            // `&&`, `===` and friends are outside the subset; reject rather than
            // silently splitting them into smaller operators.
            for bad in [
                "&&", "===", "!==", "=>", ">>=", "-=", "++", "--", "*=", "/=",
            ] {
                if rest.starts_with(bad) {
                    return Err(self.error(start, format!("operator `{bad}` is not supported")));
                }
            }
            for _ in 0..p.chars().count() {
                self.bump();
            }
            TokenKind::Punct(p)
        };
        let mut span = start;
        span.end = self.pos;
        Ok(Some(Token { kind, span }))
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let begin = self.pos;
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.bump();
        }
        &self.src[begin..self.pos]
    }

    fn number(&mut self, start: Span) -> Result<TokenKind, LexError> {
        let begin = self.pos;
        self.take_while(|c| c.is_ascii_digit());
        if self.peek() == Some('.') {
            self.bump();
            self.take_while(|c| c.is_ascii_digit());
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error(start, "malformed exponent"));
            }
            self.take_while(|c| c.is_ascii_digit());
        }
        if self
            .peek()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        {
            return Err(self.error(start, "identifier directly after number"));
        }
        let text = &self.src[begin..self.pos];
        text.parse::<f64>()
            .map(TokenKind::Number)
            .map_err(|_| self.error(start, format!("invalid number {text:?}")))
    }

    fn string(&mut self, start: Span, quote: char) -> Result<TokenKind, LexError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.error(start, "unterminated string")),
                Some(c) if c == quote => break,
                Some('\\') => {
                    let escaped = match self.bump() {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('0') => '\0',
                        Some(c @ ('\\' | '\'' | '"')) => c,
                        Some('u') => {
                            let mut code = 0u32;
                            for _ in 0..4 {
                                let d = self
                                    .bump()
                                    .and_then(|c| c.to_digit(16))
                                    .ok_or_else(|| self.error(start, "bad \\u escape"))?;
                                code = code * 16 + d;
                            }
                            char::from_u32(code)
                                .ok_or_else(|| self.error(start, "bad \\u escape"))?
                        }
                        _ => return Err(self.error(start, "unsupported escape sequence")),
                    };
                    out.push(escaped);
                }
                Some(c) => out.push(c),
            }
        }
        Ok(TokenKind::Str(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<String> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| t.kind.to_string())
            .collect()
    }

    #[test]
    fn var_declaration() {
        assert_eq!(
            kinds("var a = 1;"),
            ["kw:var", "ident:a", "=", "num:1", ";"]
        );
    }

    #[test]
    fn compound_assignment() {
        assert_eq!(kinds("count += 1;"), ["ident:count", "+=", "num:1", ";"]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("  // only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn comments_are_dropped_and_spans_track_lines() {
        let toks = tokenize("a // x\n  b").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!((toks[1].span.line, toks[1].span.column), (2, 3));
        assert_eq!(toks[1].span.start, 9);
    }

    #[test]
    fn placeholders_lex_as_arrows() {
        assert_eq!(
            kinds("f(>> a, -> b)"),
            ["ident:f", "(", ">>", "ident:a", ",", "->", "ident:b", ")"]
        );
    }

    #[test]
    fn rejects_out_of_subset_lexemes() {
        assert!(tokenize("var s = `x`;").is_err());
        assert!(tokenize("a && b").is_err());
        assert!(tokenize("a === b").is_err());
        assert!(tokenize("'open").is_err());
        assert!(tokenize("x = #y").is_err());
        assert!(tokenize("var r = /ab+c/;").is_err());
        assert!(tokenize("a / b").is_ok());
    }

    #[test]
    fn string_escapes() {
        assert_eq!(kinds(r"'a\'b'"), ["str:\"a'b\""]);
    }
}
