//! A miniature Java-like language so corpora are self-contained: a
//! deterministic recursive-descent parser and a canonical printer.
//!
//! The grammar is documented in `docs/grammar.md`. Operator precedence, from
//! loosest to tightest: ternary, `||`, `&&`, comparisons, additive,
//! multiplicative, unary, postfix (call / field / index).

mod lexer;
mod parser;
mod printer;

pub use lexer::{lex, Token, TokenKind};
pub use parser::{parse, parse_expression, SyntaxError};
pub use printer::{canonical_line_count, print, print_expression, PrintError};

use crate::ast::Tree;

/// A parsed source file: one AST per method plus the line span each method
/// occupies in the original text.
#[derive(Clone, Debug)]
pub struct SourceUnit {
    pub text: String,
    pub methods: Vec<Tree>,
    /// Per-method (start_line, end_line), 1-based, inclusive.
    pub line_spans: Vec<(usize, usize)>,
}
