//! Canonical printer: single spaces between tokens, two-space indentation,
//! one statement per line, minimal parentheses. `parse(print(t)) == t`.

use thiserror::Error;

use crate::ast::{NodeKind, NodeId, Tree};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PrintError {
    #[error("cannot print reserved node kind {0}")]
    ReservedNode(NodeKind),
    #[error("malformed tree: {0}")]
    Malformed(String),
}

/// Precedence levels used to decide parenthesization. Higher binds tighter.
fn precedence(kind: NodeKind) -> u8 {
    match kind {
        NodeKind::Ternary => 1,
        NodeKind::Or => 2,
        NodeKind::And => 3,
        NodeKind::Greater
        | NodeKind::Less
        | NodeKind::GreaterEq
        | NodeKind::LessEq
        | NodeKind::Equals
        | NodeKind::NotEquals => 4,
        NodeKind::Plus | NodeKind::Minus => 5,
        NodeKind::Times | NodeKind::Divide => 6,
        NodeKind::Not | NodeKind::Neg => 7,
        NodeKind::Call | NodeKind::FieldAccess | NodeKind::Index => 8,
        _ => 9, // atoms
    }
}

fn binary_op(kind: NodeKind) -> Option<&'static str> {
    Some(match kind {
        NodeKind::Or => "||",
        NodeKind::And => "&&",
        NodeKind::Greater => ">",
        NodeKind::Less => "<",
        NodeKind::GreaterEq => ">=",
        NodeKind::LessEq => "<=",
        NodeKind::Equals => "==",
        NodeKind::NotEquals => "!=",
        NodeKind::Plus => "+",
        NodeKind::Minus => "-",
        NodeKind::Times => "*",
        NodeKind::Divide => "/",
        _ => return None,
    })
}

struct Printer<'t> {
    tree: &'t Tree,
    out: String,
    indent: usize,
}

impl<'t> Printer<'t> {
    fn line_start(&mut self) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn check_printable(&self, id: NodeId) -> Result<(), PrintError> {
        let kind = self.tree.kind(id);
        if kind.is_sentinel() {
            return Err(PrintError::ReservedNode(kind));
        }
        Ok(())
    }

    fn value_of(&self, id: NodeId) -> Result<&'t str, PrintError> {
        self.tree
            .value(id)
            .ok_or_else(|| PrintError::Malformed(format!("terminal node {id} has no value")))
    }

    fn child(&self, id: NodeId, i: usize) -> Result<NodeId, PrintError> {
        self.tree
            .children(id)
            .get(i)
            .copied()
            .ok_or_else(|| PrintError::Malformed(format!("{} node missing child {i}", self.tree.kind(id))))
    }

    fn method(&mut self, id: NodeId) -> Result<(), PrintError> {
        let kids = self.tree.children(id);
        if kids.len() < 2 {
            return Err(PrintError::Malformed("method needs a name and a body".into()));
        }
        self.line_start();
        self.out.push_str("fn ");
        let name = self.value_of(kids[0])?.to_string();
        self.out.push_str(&name);
        self.out.push('(');
        let params = &kids[1..kids.len() - 1];
        for (i, &p) in params.iter().enumerate() {
            if self.tree.kind(p) != NodeKind::Param {
                return Err(PrintError::Malformed("method child is not a Param".into()));
            }
            if i > 0 {
                self.out.push_str(", ");
            }
            let pname = self.value_of(self.child(p, 0)?)?.to_string();
            self.out.push_str(&pname);
        }
        self.out.push(')');
        self.out.push(' ');
        self.block(kids[kids.len() - 1])
    }

    fn block(&mut self, id: NodeId) -> Result<(), PrintError> {
        self.out.push('{');
        self.indent += 1;
        for &stmt in self.tree.children(id) {
            self.statement(stmt)?;
        }
        self.indent -= 1;
        self.line_start();
        self.out.push('}');
        Ok(())
    }

    fn statement(&mut self, id: NodeId) -> Result<(), PrintError> {
        self.check_printable(id)?;
        self.line_start();
        match self.tree.kind(id) {
            NodeKind::VarDecl => {
                self.var_decl(id)?;
                self.out.push(';');
            }
            NodeKind::Assign => {
                self.assign(id)?;
                self.out.push(';');
            }
            NodeKind::ExprStmt => {
                let e = self.child(id, 0)?;
                self.expr(e, 0)?;
                self.out.push(';');
            }
            NodeKind::Return => {
                self.out.push_str("return");
                if let Some(&e) = self.tree.children(id).first() {
                    self.out.push(' ');
                    self.expr(e, 0)?;
                }
                self.out.push(';');
            }
            NodeKind::If => {
                self.out.push_str("if (");
                self.expr(self.child(id, 0)?, 0)?;
                self.out.push_str(") ");
                self.block(self.child(id, 1)?)?;
                if let Ok(else_block) = self.child(id, 2) {
                    self.out.push_str(" else ");
                    self.block(else_block)?;
                }
            }
            NodeKind::While => {
                self.out.push_str("while (");
                self.expr(self.child(id, 0)?, 0)?;
                self.out.push_str(") ");
                self.block(self.child(id, 1)?)?;
            }
            NodeKind::For => {
                self.out.push_str("for (");
                self.var_decl(self.child(id, 0)?)?;
                self.out.push_str("; ");
                self.expr(self.child(id, 1)?, 0)?;
                self.out.push_str("; ");
                self.assign(self.child(id, 2)?)?;
                self.out.push_str(") ");
                self.block(self.child(id, 3)?)?;
            }
            other => {
                return Err(PrintError::Malformed(format!("{other} is not a statement")));
            }
        }
        Ok(())
    }

    fn var_decl(&mut self, id: NodeId) -> Result<(), PrintError> {
        self.out.push_str("let ");
        let name = self.value_of(self.child(id, 0)?)?.to_string();
        self.out.push_str(&name);
        self.out.push_str(" = ");
        self.expr(self.child(id, 1)?, 0)
    }

    fn assign(&mut self, id: NodeId) -> Result<(), PrintError> {
        self.expr(self.child(id, 0)?, 0)?;
        self.out.push_str(" = ");
        self.expr(self.child(id, 1)?, 0)
    }

    /// Print an expression; parenthesize when its precedence is below
    /// `min_prec` (or equal, for the right operand of a left-assoc chain).
    fn expr(&mut self, id: NodeId, min_prec: u8) -> Result<(), PrintError> {
        self.check_printable(id)?;
        let kind = self.tree.kind(id);
        let prec = precedence(kind);
        let parens = prec < min_prec;
        if parens {
            self.out.push('(');
        }
        match kind {
            NodeKind::Name | NodeKind::Int => {
                let v = self.value_of(id)?.to_string();
                self.out.push_str(&v);
            }
            NodeKind::Str => {
                let v = self.value_of(id)?.to_string();
                self.out.push('"');
                self.out.push_str(&v);
                self.out.push('"');
            }
            NodeKind::Not => {
                self.out.push('!');
                self.expr(self.child(id, 0)?, precedence(NodeKind::Not))?;
            }
            NodeKind::Neg => {
                self.out.push('-');
                self.expr(self.child(id, 0)?, precedence(NodeKind::Neg))?;
            }
            NodeKind::Ternary => {
                // cond at or-level; branches at full-expression level
                self.expr(self.child(id, 0)?, precedence(NodeKind::Or))?;
                self.out.push_str(" ? ");
                self.expr(self.child(id, 1)?, 0)?;
                self.out.push_str(" : ");
                self.expr(self.child(id, 2)?, precedence(NodeKind::Ternary))?;
            }
            NodeKind::Call => {
                self.expr(self.child(id, 0)?, precedence(NodeKind::Call))?;
                self.out.push('(');
                let args_node = self.child(id, 1)?;
                if self.tree.kind(args_node) != NodeKind::ArgList {
                    return Err(PrintError::Malformed("Call child 1 must be ArgList".into()));
                }
                let args: Vec<NodeId> = self.tree.children(args_node).to_vec();
                for (i, a) in args.into_iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(a, 0)?;
                }
                self.out.push(')');
            }
            NodeKind::FieldAccess => {
                self.expr(self.child(id, 0)?, precedence(NodeKind::FieldAccess))?;
                self.out.push('.');
                let field = self.value_of(self.child(id, 1)?)?.to_string();
                self.out.push_str(&field);
            }
            NodeKind::Index => {
                self.expr(self.child(id, 0)?, precedence(NodeKind::Index))?;
                self.out.push('[');
                self.expr(self.child(id, 1)?, 0)?;
                self.out.push(']');
            }
            k => match binary_op(k) {
                Some(op) => {
                    self.expr(self.child(id, 0)?, prec)?;
                    self.out.push(' ');
                    self.out.push_str(op);
                    self.out.push(' ');
                    // right operand needs strictly tighter precedence
                    self.expr(self.child(id, 1)?, prec + 1)?;
                }
                None => {
                    return Err(PrintError::Malformed(format!("{k} is not an expression")));
                }
            },
        }
        if parens {
            self.out.push(')');
        }
        Ok(())
    }
}

/// Print a method tree in canonical form.
pub fn print(tree: &Tree) -> Result<String, PrintError> {
    let mut p = Printer { tree, out: String::new(), indent: 0 };
    match tree.kind(Tree::ROOT) {
        NodeKind::Method => p.method(Tree::ROOT)?,
        _ => return print_expression(tree),
    }
    Ok(p.out)
}

/// Print a standalone expression tree.
pub fn print_expression(tree: &Tree) -> Result<String, PrintError> {
    let mut p = Printer { tree, out: String::new(), indent: 0 };
    p.expr(Tree::ROOT, 0)?;
    Ok(p.out)
}

/// Number of lines in a method's canonical form.
pub fn canonical_line_count(tree: &Tree) -> Result<usize, PrintError> {
    Ok(print(tree)?.lines().count())
}
