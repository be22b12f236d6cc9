//! Error-tolerant lexer for curly-brace source fragments.
//!
//! Unbalanced delimiters, unterminated strings and unterminated block
//! comments are all accepted: the lexer never looks for structure, only for
//! the next token. Any character it cannot classify becomes a one-character
//! operator token, so every non-whitespace character is covered exactly once.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Operator,
    Separator,
    NumericLiteral,
    StringLiteral,
    Comment,
}

impl TokenKind {
    /// Identifiers and literals count as Halstead operands.
    pub fn is_operand(self) -> bool {
        matches!(
            self,
            TokenKind::Identifier | TokenKind::NumericLiteral | TokenKind::StringLiteral
        )
    }

    pub fn is_operator(self) -> bool {
        matches!(self, TokenKind::Keyword | TokenKind::Operator | TokenKind::Separator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub line_count: usize,
    pub lines: Vec<String>,
}

impl TokenStream {
    pub fn code_tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.kind != TokenKind::Comment)
    }
}

/// Java keywords plus the reserved literals `true`, `false`, `null`.
pub const KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
    "var",
    "record",
    "yield",
    "true",
    "false",
    "null",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

const SEPARATORS: &[&str] = &["...", "::", "(", ")", "{", "}", "[", "]", ";", ",", ".", "@"];

// Every operator precedes its proper prefixes, so the first match is the longest.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "->", "++", "--", "&&", "||", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "<<", ">>", "=", "+", "-", "*", "/", "%", "!", "~", "?", ":", "&", "|", "^", "<", ">",
];

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    tokens: Vec<Token>,
}

impl Lexer {
    fn peek(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn bump(&mut self) -> char {
        let c = self.chars[self.pos];
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        c
    }

    fn push(&mut self, kind: TokenKind, start: usize, line: usize, column: usize) {
        let text: String = self.chars[start..self.pos].iter().collect();
        self.tokens.push(Token {
            text,
            kind,
            line,
            column,
        });
    }

    fn run(mut self) -> Vec<Token> {
        while let Some(c) = self.peek(0) {
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            let (start, line, column) = (self.pos, self.line, self.column);
            let kind = if self.starts_with("//") {
                while self.peek(0).is_some_and(|c| c != '\n') {
                    self.bump();
                }
                TokenKind::Comment
            } else if self.starts_with("/*") {
                self.bump();
                self.bump();
                while self.peek(0).is_some() && !self.starts_with("*/") {
                    self.bump();
                }
                if self.peek(0).is_some() {
                    self.bump();
                    self.bump();
                }
                TokenKind::Comment
            } else if self.starts_with("\"\"\"") {
                for _ in 0..3 {
                    self.bump();
                }
                while self.peek(0).is_some() && !self.starts_with("\"\"\"") {
                    if self.peek(0) == Some('\\') && self.peek(1).is_some() {
                        self.bump();
                    }
                    self.bump();
                }
                for _ in 0..3 {
                    if self.peek(0).is_some() {
                        self.bump();
                    }
                }
                TokenKind::StringLiteral
            } else if c == '"' || c == '\'' {
                self.lex_quoted(c);
                TokenKind::StringLiteral
            } else if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) {
                self.lex_number();
                TokenKind::NumericLiteral
            } else if is_ident_start(c) {
                while self.peek(0).is_some_and(is_ident_continue) {
                    self.bump();
                }
                let word: String = self.chars[start..self.pos].iter().collect();
                if is_keyword(&word) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                }
            } else if let Some(sep) = SEPARATORS.iter().find(|s| self.starts_with(s)) {
                for _ in 0..sep.chars().count() {
                    self.bump();
                }
                TokenKind::Separator
            } else if let Some(op) = OPERATORS.iter().find(|o| self.starts_with(o)) {
                for _ in 0..op.chars().count() {
                    self.bump();
                }
                TokenKind::Operator
            } else {
                self.bump();
                TokenKind::Operator
            };
            self.push(kind, start, line, column);
        }
        self.tokens
    }

    /// Ends at the closing quote or, when unterminated, at the end of the line.
    fn lex_quoted(&mut self, quote: char) {
        self.bump();
        while let Some(c) = self.peek(0) {
            match c {
                '\n' => return,
                '\\' => {
                    self.bump();
                    if self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                _ if c == quote => {
                    self.bump();
                    return;
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn lex_number(&mut self) {
        while let Some(c) = self.peek(0) {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                let was_exp = matches!(c, 'e' | 'E' | 'p' | 'P');
                self.bump();
                if was_exp
                    && matches!(self.peek(0), Some('+') | Some('-'))
                    && self.peek(1).is_some_and(|d| d.is_ascii_digit())
                {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }
}

/// Splits `source` into tokens; fails only on empty input.
pub fn tokenize(source: &str) -> Result<TokenStream, AnalysisError> {
    if source.is_empty() {
        return Err(AnalysisError::EmptySource);
    }
    let lexer = Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        tokens: Vec::new(),
    };
    let tokens = lexer.run();
    let lines: Vec<String> = source.lines().map(str::to_string).collect();
    Ok(TokenStream {
        tokens,
        line_count: lines.len().max(1),
        lines,
    })
}
