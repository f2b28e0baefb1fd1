//! Recursive-descent parser producing `ast::Tree` values.

use thiserror::Error;

use super::lexer::{lex, Token, TokenKind};
use super::SourceUnit;
use crate::ast::{NodeKind, NodeId, Tree};

#[derive(Clone, Debug, Error, PartialEq)]
#[error("syntax error at {line}:{col}: found {found}, expected {}", expected.join(" | "))]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl SyntaxError {
    pub fn new(line: usize, col: usize, expected: Vec<String>, found: String) -> Self {
        SyntaxError { line, col, expected, found }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_kind(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let t = self.peek();
        SyntaxError::new(
            t.line,
            t.col,
            expected.iter().map(|s| s.to_string()).collect(),
            t.kind.describe(),
        )
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, SyntaxError> {
        if *self.peek_kind() == kind {
            Ok(self.advance())
        } else {
            Err(self.error(&[&format!("`{}`", kind.text())]))
        }
    }

    fn expect_ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek_kind().clone() {
            TokenKind::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    // method ::= "fn" NAME "(" params? ")" block
    fn method(&mut self) -> Result<Tree, SyntaxError> {
        self.expect(TokenKind::Fn)?;
        let name = self.expect_ident()?;
        let mut tree = Tree::new(NodeKind::Method, None);
        tree.add_child(Tree::ROOT, NodeKind::Name, Some(name));
        self.expect(TokenKind::LParen)?;
        if *self.peek_kind() != TokenKind::RParen {
            loop {
                let p = self.expect_ident()?;
                let param = tree.add_child(Tree::ROOT, NodeKind::Param, None);
                tree.add_child(param, NodeKind::Name, Some(p));
                if *self.peek_kind() == TokenKind::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        let block = tree.add_child(Tree::ROOT, NodeKind::Block, None);
        self.block_into(&mut tree, block)?;
        Ok(tree)
    }

    fn block_into(&mut self, tree: &mut Tree, at: NodeId) -> Result<(), SyntaxError> {
        self.expect(TokenKind::LBrace)?;
        while *self.peek_kind() != TokenKind::RBrace {
            self.statement_into(tree, at)?;
        }
        self.expect(TokenKind::RBrace)?;
        Ok(())
    }

    fn statement_into(&mut self, tree: &mut Tree, at: NodeId) -> Result<(), SyntaxError> {
        match self.peek_kind().clone() {
            TokenKind::Let => {
                let decl = tree.add_child(at, NodeKind::VarDecl, None);
                self.var_decl_into(tree, decl)?;
                self.expect(TokenKind::Semi)?;
            }
            TokenKind::If => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let node = tree.add_child(at, NodeKind::If, None);
                self.expression_into(tree, node)?;
                self.expect(TokenKind::RParen)?;
                let then_block = tree.add_child(node, NodeKind::Block, None);
                self.block_into(tree, then_block)?;
                if *self.peek_kind() == TokenKind::Else {
                    self.advance();
                    let else_block = tree.add_child(node, NodeKind::Block, None);
                    self.block_into(tree, else_block)?;
                }
            }
            TokenKind::While => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let node = tree.add_child(at, NodeKind::While, None);
                self.expression_into(tree, node)?;
                self.expect(TokenKind::RParen)?;
                let body = tree.add_child(node, NodeKind::Block, None);
                self.block_into(tree, body)?;
            }
            TokenKind::For => {
                // for ( varDecl ; expr ; assign ) block
                self.advance();
                self.expect(TokenKind::LParen)?;
                let node = tree.add_child(at, NodeKind::For, None);
                let decl = tree.add_child(node, NodeKind::VarDecl, None);
                self.var_decl_into(tree, decl)?;
                self.expect(TokenKind::Semi)?;
                self.expression_into(tree, node)?;
                self.expect(TokenKind::Semi)?;
                let update = tree.add_child(node, NodeKind::Assign, None);
                self.assign_into(tree, update)?;
                self.expect(TokenKind::RParen)?;
                let body = tree.add_child(node, NodeKind::Block, None);
                self.block_into(tree, body)?;
            }
            TokenKind::Return => {
                self.advance();
                let node = tree.add_child(at, NodeKind::Return, None);
                if *self.peek_kind() != TokenKind::Semi {
                    self.expression_into(tree, node)?;
                }
                self.expect(TokenKind::Semi)?;
            }
            _ => {
                // assign | exprStmt, disambiguated by the `=` after a postfix expression
                let expr = self.expression()?;
                if *self.peek_kind() == TokenKind::Assign {
                    self.advance();
                    let node = tree.add_child(at, NodeKind::Assign, None);
                    graft(tree, node, &expr);
                    self.expression_into(tree, node)?;
                } else {
                    let node = tree.add_child(at, NodeKind::ExprStmt, None);
                    graft(tree, node, &expr);
                }
                self.expect(TokenKind::Semi)?;
            }
        }
        Ok(())
    }

    // varDecl ::= "let" NAME "=" expr (semicolon handled by caller)
    fn var_decl_into(&mut self, tree: &mut Tree, at: NodeId) -> Result<(), SyntaxError> {
        self.expect(TokenKind::Let)?;
        let name = self.expect_ident()?;
        tree.add_child(at, NodeKind::Name, Some(name));
        self.expect(TokenKind::Assign)?;
        self.expression_into(tree, at)
    }

    // assign ::= postfixExpr "=" expr (no semicolon)
    fn assign_into(&mut self, tree: &mut Tree, at: NodeId) -> Result<(), SyntaxError> {
        let lhs = self.expression()?;
        graft(tree, at, &lhs);
        self.expect(TokenKind::Assign)?;
        self.expression_into(tree, at)
    }

    fn expression_into(&mut self, tree: &mut Tree, at: NodeId) -> Result<(), SyntaxError> {
        let expr = self.expression()?;
        graft(tree, at, &expr);
        Ok(())
    }

    // expr ::= ternary;  ternary ::= or ("?" expr ":" ternary)?
    fn expression(&mut self) -> Result<Tree, SyntaxError> {
        let cond = self.or_expr()?;
        if *self.peek_kind() == TokenKind::Question {
            self.advance();
            let then = self.expression()?;
            self.expect(TokenKind::Colon)?;
            let otherwise = self.expression()?;
            let mut t = Tree::new(NodeKind::Ternary, None);
            graft_child(&mut t, &cond);
            graft_child(&mut t, &then);
            graft_child(&mut t, &otherwise);
            Ok(t)
        } else {
            Ok(cond)
        }
    }

    fn or_expr(&mut self) -> Result<Tree, SyntaxError> {
        self.left_assoc(&[(TokenKind::OrOr, NodeKind::Or)], Parser::and_expr)
    }

    fn and_expr(&mut self) -> Result<Tree, SyntaxError> {
        self.left_assoc(&[(TokenKind::AndAnd, NodeKind::And)], Parser::cmp_expr)
    }

    fn cmp_expr(&mut self) -> Result<Tree, SyntaxError> {
        self.left_assoc(
            &[
                (TokenKind::Gt, NodeKind::Greater),
                (TokenKind::Lt, NodeKind::Less),
                (TokenKind::Ge, NodeKind::GreaterEq),
                (TokenKind::Le, NodeKind::LessEq),
                (TokenKind::EqEq, NodeKind::Equals),
                (TokenKind::NotEq, NodeKind::NotEquals),
            ],
            Parser::add_expr,
        )
    }

    fn add_expr(&mut self) -> Result<Tree, SyntaxError> {
        self.left_assoc(
            &[(TokenKind::Plus, NodeKind::Plus), (TokenKind::Minus, NodeKind::Minus)],
            Parser::mul_expr,
        )
    }

    fn mul_expr(&mut self) -> Result<Tree, SyntaxError> {
        self.left_assoc(
            &[(TokenKind::Star, NodeKind::Times), (TokenKind::Slash, NodeKind::Divide)],
            Parser::unary_expr,
        )
    }

    fn left_assoc(
        &mut self,
        ops: &[(TokenKind, NodeKind)],
        next: fn(&mut Parser) -> Result<Tree, SyntaxError>,
    ) -> Result<Tree, SyntaxError> {
        let mut lhs = next(self)?;
        loop {
            let Some((_, kind)) = ops.iter().find(|(t, _)| t == self.peek_kind()) else {
                return Ok(lhs);
            };
            let kind = *kind;
            self.advance();
            let rhs = next(self)?;
            let mut t = Tree::new(kind, None);
            graft_child(&mut t, &lhs);
            graft_child(&mut t, &rhs);
            lhs = t;
        }
    }

    fn unary_expr(&mut self) -> Result<Tree, SyntaxError> {
        match self.peek_kind() {
            TokenKind::Bang => {
                self.advance();
                let inner = self.unary_expr()?;
                let mut t = Tree::new(NodeKind::Not, None);
                graft_child(&mut t, &inner);
                Ok(t)
            }
            TokenKind::Minus => {
                self.advance();
                let inner = self.unary_expr()?;
                let mut t = Tree::new(NodeKind::Neg, None);
                graft_child(&mut t, &inner);
                Ok(t)
            }
            _ => self.postfix_expr(),
        }
    }

    fn postfix_expr(&mut self) -> Result<Tree, SyntaxError> {
        let mut expr = self.primary_expr()?;
        loop {
            match self.peek_kind() {
                TokenKind::LParen => {
                    self.advance();
                    let mut t = Tree::new(NodeKind::Call, None);
                    graft_child(&mut t, &expr);
                    let args = t.add_child(Tree::ROOT, NodeKind::ArgList, None);
                    if *self.peek_kind() != TokenKind::RParen {
                        loop {
                            let arg = self.expression()?;
                            graft(&mut t, args, &arg);
                            if *self.peek_kind() == TokenKind::Comma {
                                self.advance();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(TokenKind::RParen)?;
                    expr = t;
                }
                TokenKind::Dot => {
                    self.advance();
                    let field = self.expect_ident()?;
                    let mut t = Tree::new(NodeKind::FieldAccess, None);
                    graft_child(&mut t, &expr);
                    t.add_child(Tree::ROOT, NodeKind::Name, Some(field));
                    expr = t;
                }
                TokenKind::LBracket => {
                    self.advance();
                    let mut t = Tree::new(NodeKind::Index, None);
                    graft_child(&mut t, &expr);
                    self.expression_into_root(&mut t)?;
                    self.expect(TokenKind::RBracket)?;
                    expr = t;
                }
                _ => return Ok(expr),
            }
        }
    }

    fn expression_into_root(&mut self, tree: &mut Tree) -> Result<(), SyntaxError> {
        let e = self.expression()?;
        graft_child(tree, &e);
        Ok(())
    }

    fn primary_expr(&mut self) -> Result<Tree, SyntaxError> {
        match self.peek_kind().clone() {
            TokenKind::Ident(s) => {
                self.advance();
                Ok(Tree::new(NodeKind::Name, Some(s)))
            }
            TokenKind::Int(s) => {
                self.advance();
                Ok(Tree::new(NodeKind::Int, Some(s)))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Tree::new(NodeKind::Str, Some(s)))
            }
            TokenKind::Hole => {
                self.advance();
                Ok(Tree::new(NodeKind::Hole, None))
            }
            TokenKind::LParen => {
                self.advance();
                let e = self.expression()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            _ => Err(self.error(&["identifier", "integer", "string", "`(`", "`!`", "`-`", "`/*HOLE*/`"])),
        }
    }
}

fn graft(tree: &mut Tree, at: NodeId, sub: &Tree) {
    let n = tree.add_child(at, sub.kind(Tree::ROOT), sub.value(Tree::ROOT).map(String::from));
    fn rec(tree: &mut Tree, at: NodeId, sub: &Tree, s: NodeId) {
        for &c in sub.children(s) {
            let n = tree.add_child(at, sub.kind(c), sub.value(c).map(String::from));
            rec(tree, n, sub, c);
        }
    }
    rec(tree, n, sub, Tree::ROOT);
}

fn graft_child(tree: &mut Tree, sub: &Tree) {
    graft(tree, Tree::ROOT, sub);
}

/// Parse a full source text into one AST per method.
pub fn parse(text: &str) -> Result<SourceUnit, SyntaxError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut methods = Vec::new();
    let mut line_spans = Vec::new();
    while *parser.peek_kind() != TokenKind::Eof {
        let start_line = parser.peek().line;
        let method = parser.method()?;
        let end_line = if parser.pos > 0 {
            parser.tokens[parser.pos - 1].line
        } else {
            start_line
        };
        methods.push(method);
        line_spans.push((start_line, end_line));
    }
    Ok(SourceUnit {
        text: text.to_string(),
        methods,
        line_spans,
    })
}

/// Parse a single standalone expression (used by tests and tooling).
pub fn parse_expression(text: &str) -> Result<Tree, SyntaxError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expression()?;
    if *parser.peek_kind() != TokenKind::Eof {
        return Err(parser.error(&["end of input"]));
    }
    Ok(expr)
}
