use std::fmt;

use super::ParseDiagnostic;
use crate::ids::{is_id_char, MAX_ID_LEN};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Dot,
    Assign,
    EqEq,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(_) => f.write_str("string"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Assign => f.write_str("`=`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
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

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }
}

/// Splits `src` into tokens. Lexical errors are reported and skipped; the
/// token list always ends with `Eof`.
pub(crate) fn lex(src: &str, diags: &mut Vec<ParseDiagnostic>) -> Vec<Token> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            while cur.peek().is_some_and(|c| c != '\n') {
                cur.bump();
            }
            continue;
        }
        if c == '"' {
            cur.bump();
            let mut s = String::new();
            let mut closed = false;
            while let Some(c) = cur.bump() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match cur.bump() {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('n') => s.push('\n'),
                        Some(other) => {
                            diags.push(ParseDiagnostic::error(
                                pos,
                                format!("unknown escape `\\{other}` in string"),
                            ));
                            s.push(other);
                        }
                        None => break,
                    },
                    '\n' => break,
                    c => s.push(c),
                }
            }
            if !closed {
                diags.push(ParseDiagnostic::error(pos, "unterminated string"));
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos,
            });
            continue;
        }
        if is_id_char(c) && c != '-' || c == '-' && !matches!(lookahead2(&cur), Some('>')) {
            let mut s = String::new();
            while let Some(c) = cur.peek() {
                if !is_id_char(c) || c == '-' && lookahead2(&cur) == Some('>') {
                    break;
                }
                s.push(c);
                cur.bump();
            }
            if s.chars().count() > MAX_ID_LEN {
                diags.push(ParseDiagnostic::error(
                    pos,
                    format!("identifier longer than {MAX_ID_LEN} characters"),
                ));
            }
            out.push(Token {
                tok: Tok::Ident(s),
                pos,
            });
            continue;
        }
        cur.bump();
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '.' => Tok::Dot,
            '=' if cur.peek() == Some('=') => {
                cur.bump();
                Tok::EqEq
            }
            '=' => Tok::Assign,
            '-' => {
                cur.bump();
                Tok::Arrow
            }
            other => {
                diags.push(ParseDiagnostic::error(
                    pos,
                    format!("unexpected character {other:?}"),
                ));
                continue;
            }
        };
        out.push(Token { tok, pos });
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: cur.pos(),
    });
    out
}

/// The character after the one under the cursor.
fn lookahead2(cur: &Cursor<'_>) -> Option<char> {
    let mut it = cur.chars.clone();
    it.next();
    it.next()
}
