//! Tokenizer for the mini-language.

use super::SyntaxError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Fn,
    Let,
    If,
    Else,
    For,
    While,
    Return,
    Ident(String),
    Int(String),
    Str(String),
    /// The `/*HOLE*/` completion-site marker.
    Hole,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Question,
    Colon,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Gt,
    Le,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Int(s) => format!("integer `{s}`"),
            TokenKind::Str(_) => "string literal".into(),
            TokenKind::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    pub fn text(&self) -> &str {
        match self {
            TokenKind::Fn => "fn",
            TokenKind::Let => "let",
            TokenKind::If => "if",
            TokenKind::Else => "else",
            TokenKind::For => "for",
            TokenKind::While => "while",
            TokenKind::Return => "return",
            TokenKind::Hole => "/*HOLE*/",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LBracket => "[",
            TokenKind::RBracket => "]",
            TokenKind::Comma => ",",
            TokenKind::Semi => ";",
            TokenKind::Dot => ".",
            TokenKind::Question => "?",
            TokenKind::Colon => ":",
            TokenKind::Assign => "=",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::Lt => "<",
            TokenKind::Gt => ">",
            TokenKind::Le => "<=",
            TokenKind::Ge => ">=",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::Bang => "!",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Ident(_) | TokenKind::Int(_) | TokenKind::Str(_) | TokenKind::Eof => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub col: usize,
}

pub fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    macro_rules! push {
        ($kind:expr, $len:expr) => {{
            tokens.push(Token { kind: $kind, line, col });
            i += $len;
            col += $len;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '(' => push!(TokenKind::LParen, 1),
            ')' => push!(TokenKind::RParen, 1),
            '{' => push!(TokenKind::LBrace, 1),
            '}' => push!(TokenKind::RBrace, 1),
            '[' => push!(TokenKind::LBracket, 1),
            ']' => push!(TokenKind::RBracket, 1),
            ',' => push!(TokenKind::Comma, 1),
            ';' => push!(TokenKind::Semi, 1),
            '.' => push!(TokenKind::Dot, 1),
            '?' => push!(TokenKind::Question, 1),
            ':' => push!(TokenKind::Colon, 1),
            '+' => push!(TokenKind::Plus, 1),
            '-' => push!(TokenKind::Minus, 1),
            '*' => push!(TokenKind::Star, 1),
            '/' => {
                const MARKER: &str = "/*HOLE*/";
                if chars[i..].starts_with(&MARKER.chars().collect::<Vec<_>>()[..]) {
                    push!(TokenKind::Hole, MARKER.len());
                } else {
                    push!(TokenKind::Slash, 1);
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(TokenKind::EqEq, 2);
                } else {
                    push!(TokenKind::Assign, 1);
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(TokenKind::NotEq, 2);
                } else {
                    push!(TokenKind::Bang, 1);
                }
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(TokenKind::Le, 2);
                } else {
                    push!(TokenKind::Lt, 1);
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(TokenKind::Ge, 2);
                } else {
                    push!(TokenKind::Gt, 1);
                }
            }
            '&' => {
                if chars.get(i + 1) == Some(&'&') {
                    push!(TokenKind::AndAnd, 2);
                } else {
                    return Err(SyntaxError::new(line, col, vec!["`&&`".into()], "`&`".into()));
                }
            }
            '|' => {
                if chars.get(i + 1) == Some(&'|') {
                    push!(TokenKind::OrOr, 2);
                } else {
                    return Err(SyntaxError::new(line, col, vec!["`||`".into()], "`|`".into()));
                }
            }
            '"' => {
                let start_col = col;
                let mut j = i + 1;
                let mut s = String::new();
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(SyntaxError::new(
                                line,
                                start_col,
                                vec!["closing `\"`".into()],
                                "unterminated string".into(),
                            ));
                        }
                        Some('"') => break,
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                let len = j + 1 - i;
                tokens.push(Token { kind: TokenKind::Str(s), line, col });
                i += len;
                col += len;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let len = j - i;
                tokens.push(Token { kind: TokenKind::Int(s), line, col });
                i += len;
                col += len;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric()) {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let len = j - i;
                let kind = match s.as_str() {
                    "fn" => TokenKind::Fn,
                    "let" => TokenKind::Let,
                    "if" => TokenKind::If,
                    "else" => TokenKind::Else,
                    "for" => TokenKind::For,
                    "while" => TokenKind::While,
                    "return" => TokenKind::Return,
                    _ => TokenKind::Ident(s),
                };
                tokens.push(Token { kind, line, col });
                i += len;
                col += len;
            }
            other => {
                return Err(SyntaxError::new(
                    line,
                    col,
                    vec!["a token".into()],
                    format!("`{other}`"),
                ));
            }
        }
    }
    tokens.push(Token { kind: TokenKind::Eof, line, col });
    Ok(tokens)
}
