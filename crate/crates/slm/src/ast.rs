//! AST data model: node kinds, trees, camel-case subtoken decomposition,
//! EOS augmentation, depth-first ordering and JSON serialization.
//!
//! Trees come in two forms. A *parsed* tree carries raw token values on its
//! terminal-category nodes (`NAME`/`INT`/`STR`). An *augmented* tree replaces
//! each terminal value with a chain of `SUBTOKEN` nodes ending in `EOS_TOK`,
//! and appends an `EOS_NODE` child to every nonterminal, so that generation
//! can control arity and token depth explicitly.

use std::collections::HashSet;
use std::fmt;

use serde_json::{json, Map, Value};
use thiserror::Error;

/// Version of the closed kind set below. Bumped if the set ever changes.
pub const KIND_SET_VERSION: u32 = 1;

/// The closed set of node kinds, including terminal categories and the
/// reserved sentinels. Unknown names are rejected at deserialize time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum NodeKind {
    Method,
    Param,
    Block,
    VarDecl,
    Assign,
    ExprStmt,
    If,
    For,
    While,
    Return,
    Call,
    ArgList,
    FieldAccess,
    Index,
    Ternary,
    Not,
    Neg,
    Plus,
    Minus,
    Times,
    Divide,
    Greater,
    Less,
    GreaterEq,
    LessEq,
    Equals,
    NotEquals,
    And,
    Or,
    Name,
    Int,
    Str,
    Subtoken,
    EosNode,
    EosTok,
    Hole,
}

pub const KIND_COUNT: usize = 36;

pub const ALL_KINDS: [NodeKind; KIND_COUNT] = [
    NodeKind::Method,
    NodeKind::Param,
    NodeKind::Block,
    NodeKind::VarDecl,
    NodeKind::Assign,
    NodeKind::ExprStmt,
    NodeKind::If,
    NodeKind::For,
    NodeKind::While,
    NodeKind::Return,
    NodeKind::Call,
    NodeKind::ArgList,
    NodeKind::FieldAccess,
    NodeKind::Index,
    NodeKind::Ternary,
    NodeKind::Not,
    NodeKind::Neg,
    NodeKind::Plus,
    NodeKind::Minus,
    NodeKind::Times,
    NodeKind::Divide,
    NodeKind::Greater,
    NodeKind::Less,
    NodeKind::GreaterEq,
    NodeKind::LessEq,
    NodeKind::Equals,
    NodeKind::NotEquals,
    NodeKind::And,
    NodeKind::Or,
    NodeKind::Name,
    NodeKind::Int,
    NodeKind::Str,
    NodeKind::Subtoken,
    NodeKind::EosNode,
    NodeKind::EosTok,
    NodeKind::Hole,
];

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Method => "Method",
            NodeKind::Param => "Param",
            NodeKind::Block => "Block",
            NodeKind::VarDecl => "VarDecl",
            NodeKind::Assign => "Assign",
            NodeKind::ExprStmt => "ExprStmt",
            NodeKind::If => "If",
            NodeKind::For => "For",
            NodeKind::While => "While",
            NodeKind::Return => "Return",
            NodeKind::Call => "Call",
            NodeKind::ArgList => "ArgList",
            NodeKind::FieldAccess => "FieldAccess",
            NodeKind::Index => "Index",
            NodeKind::Ternary => "Ternary",
            NodeKind::Not => "Not",
            NodeKind::Neg => "Neg",
            NodeKind::Plus => "Plus",
            NodeKind::Minus => "Minus",
            NodeKind::Times => "Times",
            NodeKind::Divide => "Divide",
            NodeKind::Greater => "Greater",
            NodeKind::Less => "Less",
            NodeKind::GreaterEq => "GreaterEq",
            NodeKind::LessEq => "LessEq",
            NodeKind::Equals => "Equals",
            NodeKind::NotEquals => "NotEquals",
            NodeKind::And => "And",
            NodeKind::Or => "Or",
            NodeKind::Name => "NAME",
            NodeKind::Int => "INT",
            NodeKind::Str => "STR",
            NodeKind::Subtoken => "SUBTOKEN",
            NodeKind::EosNode => "EOS_NODE",
            NodeKind::EosTok => "EOS_TOK",
            NodeKind::Hole => "HOLE",
        }
    }

    pub fn from_name(name: &str) -> Option<NodeKind> {
        ALL_KINDS.iter().copied().find(|k| k.name() == name)
    }

    /// Stable dense id into the kind set, used for embedding rows.
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<NodeKind> {
        ALL_KINDS.get(id).copied()
    }

    /// `NAME`, `INT` or `STR`: a leaf category that carries a user value.
    pub fn is_terminal_category(self) -> bool {
        matches!(self, NodeKind::Name | NodeKind::Int | NodeKind::Str)
    }

    /// Structural nonterminal from the language grammar.
    pub fn is_nonterminal(self) -> bool {
        !self.is_terminal_category() && !self.is_sentinel()
    }

    pub fn is_sentinel(self) -> bool {
        matches!(
            self,
            NodeKind::Subtoken | NodeKind::EosNode | NodeKind::EosTok | NodeKind::Hole
        )
    }

    /// Kinds that may stand alone as an expression (completion targets).
    pub fn is_expression(self) -> bool {
        matches!(
            self,
            NodeKind::Call
                | NodeKind::FieldAccess
                | NodeKind::Index
                | NodeKind::Ternary
                | NodeKind::Not
                | NodeKind::Neg
                | NodeKind::Plus
                | NodeKind::Minus
                | NodeKind::Times
                | NodeKind::Divide
                | NodeKind::Greater
                | NodeKind::Less
                | NodeKind::GreaterEq
                | NodeKind::LessEq
                | NodeKind::Equals
                | NodeKind::NotEquals
                | NodeKind::And
                | NodeKind::Or
                | NodeKind::Name
                | NodeKind::Int
                | NodeKind::Str
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AstError {
    #[error("invalid token {0:?}: must be non-empty, without whitespace, and contain letters or digits")]
    InvalidToken(String),
    #[error("tree is already augmented")]
    AlreadyAugmented,
    #[error("tree is not augmented")]
    NotAugmented,
    #[error("deserialize error at {path}: {reason}")]
    Deserialize { path: String, reason: String },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type NodeId = usize;

/// One node of an arena tree. The node id is its arena index.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeData {
    pub kind: NodeKind,
    /// Subtoken text on `SUBTOKEN` nodes; raw token on unaugmented
    /// terminal-category nodes; `None` everywhere else.
    pub value: Option<String>,
    pub parent: Option<NodeId>,
    pub child_index: usize,
    pub children: Vec<NodeId>,
}

/// Arena-backed tree. Node 0 is the root; ids are unique within the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<NodeData>,
}

impl Tree {
    pub fn new(kind: NodeKind, value: Option<String>) -> Tree {
        Tree {
            nodes: vec![NodeData {
                kind,
                value,
                parent: None,
                child_index: 0,
                children: Vec::new(),
            }],
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &NodeData {
        &self.nodes[id]
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeData> {
        self.nodes.get(id)
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn value(&self, id: NodeId) -> Option<&str> {
        self.nodes[id].value.as_deref()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn add_child(&mut self, parent: NodeId, kind: NodeKind, value: Option<String>) -> NodeId {
        let id = self.nodes.len();
        let child_index = self.nodes[parent].children.len();
        self.nodes.push(NodeData {
            kind,
            value,
            parent: Some(parent),
            child_index,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Overwrite a leaf node's kind and value in place, keeping its id and
    /// position. Used to materialize a hole into the first generated node.
    pub fn replace_leaf(&mut self, id: NodeId, kind: NodeKind, value: Option<String>) {
        debug_assert!(self.nodes[id].children.is_empty());
        self.nodes[id].kind = kind;
        self.nodes[id].value = value;
    }

    /// Depth of a node: the root has depth 0.
    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[id].parent {
            id = p;
            d += 1;
        }
        d
    }

    /// Chain of ancestors from `id` up to and including the root.
    pub fn ancestors_inclusive(&self, id: NodeId) -> Vec<NodeId> {
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain
    }

    /// Copy the subtree rooted at `id` into a fresh tree with DFS-ordered ids.
    pub fn subtree(&self, id: NodeId) -> Tree {
        let mut out = Tree::new(self.nodes[id].kind, self.nodes[id].value.clone());
        self.copy_children(id, Tree::ROOT, &mut out);
        out
    }

    fn copy_children(&self, src: NodeId, dst: NodeId, out: &mut Tree) {
        for &c in &self.nodes[src].children {
            let nc = out.add_child(dst, self.nodes[c].kind, self.nodes[c].value.clone());
            self.copy_children(c, nc, out);
        }
    }

    /// Graft a copy of `sub` in place of the leaf `at` (typically a hole).
    pub fn graft(&mut self, at: NodeId, sub: &Tree) {
        self.replace_leaf(at, sub.kind(Tree::ROOT), sub.value(Tree::ROOT).map(String::from));
        self.graft_children(sub, Tree::ROOT, at);
    }

    fn graft_children(&mut self, sub: &Tree, src: NodeId, dst: NodeId) {
        for &c in sub.children(src) {
            let nc = self.add_child(dst, sub.kind(c), sub.value(c).map(String::from));
            self.graft_children(sub, c, nc);
        }
    }

    /// Number of nodes in the subtree rooted at `id`.
    pub fn subtree_size(&self, id: NodeId) -> usize {
        1 + self.nodes[id]
            .children
            .iter()
            .map(|&c| self.subtree_size(c))
            .sum::<usize>()
    }

    pub fn contains_kind(&self, kind: NodeKind) -> bool {
        self.nodes.iter().any(|n| n.kind == kind)
    }

    /// Check structural invariants: child indices, value placement, tree shape.
    pub fn validate(&self) -> Result<(), AstError> {
        for (id, n) in self.nodes.iter().enumerate() {
            for (j, &c) in n.children.iter().enumerate() {
                let child = self
                    .nodes
                    .get(c)
                    .ok_or(AstError::UnknownNode(c))?;
                if child.parent != Some(id) {
                    return Err(AstError::Invariant(format!(
                        "node {c} has parent {:?}, expected {id}",
                        child.parent
                    )));
                }
                if child.child_index != j {
                    return Err(AstError::Invariant(format!(
                        "node {c} has child_index {}, expected {j}",
                        child.child_index
                    )));
                }
            }
            let has_value = n.value.is_some();
            match n.kind {
                NodeKind::Subtoken => {
                    if !has_value {
                        return Err(AstError::Invariant(format!("subtoken node {id} has no value")));
                    }
                }
                NodeKind::Name | NodeKind::Int | NodeKind::Str => {
                    // value present before augmentation, absent after
                    if has_value && !n.children.is_empty() {
                        return Err(AstError::Invariant(format!(
                            "terminal node {id} has both value and children"
                        )));
                    }
                }
                _ => {
                    if has_value {
                        return Err(AstError::Invariant(format!(
                            "{} node {id} carries a value",
                            n.kind
                        )));
                    }
                }
            }
        }
        if self.nodes[Tree::ROOT].parent.is_some() {
            return Err(AstError::Invariant("root has a parent".into()));
        }
        Ok(())
    }
}

/// Structural equality: kinds, values and shape; ids are irrelevant.
pub fn structurally_equal(a: &Tree, b: &Tree) -> bool {
    fn eq(a: &Tree, an: NodeId, b: &Tree, bn: NodeId) -> bool {
        let (na, nb) = (a.node(an), b.node(bn));
        na.kind == nb.kind
            && na.value == nb.value
            && na.children.len() == nb.children.len()
            && na
                .children
                .iter()
                .zip(&nb.children)
                .all(|(&ca, &cb)| eq(a, ca, b, cb))
    }
    eq(a, Tree::ROOT, b, Tree::ROOT)
}

/// Equality of kinds and shape only, with all terminal values erased.
pub fn tree_shape_equal(a: &Tree, b: &Tree) -> bool {
    fn eq(a: &Tree, an: NodeId, b: &Tree, bn: NodeId) -> bool {
        let (na, nb) = (a.node(an), b.node(bn));
        na.kind == nb.kind
            && na.children.len() == nb.children.len()
            && na
                .children
                .iter()
                .zip(&nb.children)
                .all(|(&ca, &cb)| eq(a, ca, b, cb))
    }
    eq(a, Tree::ROOT, b, Tree::ROOT)
}

/// A token's camel-case decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubtokenSeq {
    /// Non-empty, lowercase parts.
    pub parts: Vec<String>,
    /// Whether an `EOS_TOK` terminator follows (set after augmentation).
    pub terminator_present: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum CharClass {
    Lower,
    Upper,
    Digit,
    Break,
}

fn classify(c: char) -> CharClass {
    if c == '_' {
        CharClass::Break
    } else if c.is_ascii_digit() {
        CharClass::Digit
    } else if c.is_uppercase() {
        CharClass::Upper
    } else {
        CharClass::Lower
    }
}

/// Split a token into lowercase subtokens.
///
/// Boundaries: lower-to-upper, any letter-digit transition, and within an
/// uppercase run followed by lowercase the split falls before the last
/// uppercase character ("HTTPServer" gives `http`, `server`). Underscores
/// split and are dropped.
pub fn split_subtokens(value: &str) -> Result<SubtokenSeq, AstError> {
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return Err(AstError::InvalidToken(value.to_string()));
    }
    let chars: Vec<char> = value.chars().collect();
    let mut parts: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<CharClass> = None;
    for (i, &c) in chars.iter().enumerate() {
        let class = classify(c);
        if class == CharClass::Break {
            if !cur.is_empty() {
                parts.push(std::mem::take(&mut cur));
            }
            prev = None;
            continue;
        }
        let boundary = match prev {
            None => false,
            Some(p) => match (p, class) {
                (CharClass::Lower, CharClass::Upper) => true,
                (CharClass::Lower | CharClass::Upper, CharClass::Digit) => true,
                (CharClass::Digit, CharClass::Lower | CharClass::Upper) => true,
                (CharClass::Upper, CharClass::Upper) => {
                    // break before the last uppercase of a run trailed by lowercase
                    matches!(chars.get(i + 1).map(|&n| classify(n)), Some(CharClass::Lower))
                }
                _ => false,
            },
        };
        if boundary && !cur.is_empty() {
            parts.push(std::mem::take(&mut cur));
        }
        cur.extend(c.to_lowercase());
        prev = Some(class);
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    if parts.is_empty() {
        return Err(AstError::InvalidToken(value.to_string()));
    }
    Ok(SubtokenSeq {
        parts,
        terminator_present: false,
    })
}

/// Rejoin subtokens into a camel-case token: every part after the first has
/// its first letter upcased. Inverse of [`split_subtokens`] on the
/// mini-language identifier charset.
pub fn camel_join(parts: &[String]) -> String {
    let mut out = String::new();
    for (i, part) in parts.iter().enumerate() {
        if i == 0 {
            out.push_str(part);
        } else {
            let mut cs = part.chars();
            if let Some(first) = cs.next() {
                out.extend(first.to_uppercase());
                out.push_str(cs.as_str());
            }
        }
    }
    out
}

/// Decompose a terminal value according to its category: `NAME` values are
/// camel-split, `INT` and `STR` values stay atomic.
pub fn terminal_subtokens(kind: NodeKind, value: &str) -> Result<Vec<String>, AstError> {
    match kind {
        NodeKind::Name => Ok(split_subtokens(value)?.parts),
        NodeKind::Int | NodeKind::Str => {
            if value.is_empty() && kind == NodeKind::Int {
                return Err(AstError::InvalidToken(value.to_string()));
            }
            Ok(vec![value.to_string()])
        }
        other => Err(AstError::Invariant(format!(
            "{other} is not a terminal category"
        ))),
    }
}

/// Augment a parsed tree: append an `EOS_NODE` child to every nonterminal and
/// replace each terminal value with its subtoken chain ending in `EOS_TOK`.
/// Existing node ids are preserved; new nodes get fresh ids.
pub fn augment_tree(tree: &Tree) -> Result<Tree, AstError> {
    if tree.contains_kind(NodeKind::Subtoken)
        || tree.contains_kind(NodeKind::EosNode)
        || tree.contains_kind(NodeKind::EosTok)
    {
        return Err(AstError::AlreadyAugmented);
    }
    let mut out = tree.clone();
    // Iterate over the original ids only; appended nodes need no processing.
    for id in 0..tree.len() {
        match out.kind(id) {
            k if k.is_nonterminal() => {
                out.add_child(id, NodeKind::EosNode, None);
            }
            k if k.is_terminal_category() => {
                let value = out.nodes[id]
                    .value
                    .take()
                    .ok_or_else(|| AstError::Invariant(format!("terminal node {id} has no value")))?;
                let parts = terminal_subtokens(k, &value)?;
                let mut tip = id;
                for part in parts {
                    tip = out.add_child(tip, NodeKind::Subtoken, Some(part));
                }
                out.add_child(tip, NodeKind::EosTok, None);
            }
            _ => {} // HOLE stays as-is
        }
    }
    Ok(out)
}

/// Inverse of [`augment_tree`]: drop EOS sentinels and collapse subtoken
/// chains back into terminal values. Ids are reassigned in DFS order.
pub fn strip_augmentation(tree: &Tree) -> Result<Tree, AstError> {
    if !tree.contains_kind(NodeKind::EosNode) && !tree.contains_kind(NodeKind::EosTok) {
        // A single-terminal tree is augmented iff its value moved into a chain.
        if !tree.contains_kind(NodeKind::Subtoken) {
            return Err(AstError::NotAugmented);
        }
    }
    fn build(tree: &Tree, id: NodeId, out: &mut Tree, dst: NodeId) -> Result<(), AstError> {
        for &c in tree.children(id) {
            match tree.kind(c) {
                NodeKind::EosNode => {}
                k if k.is_terminal_category() => {
                    let mut parts = Vec::new();
                    let mut tip = c;
                    loop {
                        let kids = tree.children(tip);
                        match kids.first() {
                            None => break,
                            Some(&n) => match tree.kind(n) {
                                NodeKind::Subtoken => {
                                    parts.push(tree.value(n).unwrap_or_default().to_string());
                                    tip = n;
                                }
                                NodeKind::EosTok => break,
                                other => {
                                    return Err(AstError::Invariant(format!(
                                        "unexpected {other} inside a subtoken chain"
                                    )))
                                }
                            },
                        }
                    }
                    out.add_child(dst, k, Some(camel_join(&parts)));
                }
                k => {
                    let nc = out.add_child(dst, k, tree.value(c).map(String::from));
                    build(tree, c, out, nc)?;
                }
            }
        }
        Ok(())
    }
    let root_kind = tree.kind(Tree::ROOT);
    if root_kind.is_terminal_category() {
        let mut parts = Vec::new();
        let mut tip = Tree::ROOT;
        while let Some(&n) = tree.children(tip).first() {
            if tree.kind(n) == NodeKind::Subtoken {
                parts.push(tree.value(n).unwrap_or_default().to_string());
                tip = n;
            } else {
                break;
            }
        }
        return Ok(Tree::new(root_kind, Some(camel_join(&parts))));
    }
    let mut out = Tree::new(root_kind, tree.value(Tree::ROOT).map(String::from));
    build(tree, Tree::ROOT, &mut out, Tree::ROOT)?;
    Ok(out)
}

/// Preorder traversal: every parent precedes its children, siblings in
/// child-index order.
pub fn dfs_order(tree: &Tree) -> Vec<NodeId> {
    let mut order = Vec::with_capacity(tree.len());
    let mut stack = vec![Tree::ROOT];
    while let Some(id) = stack.pop() {
        order.push(id);
        for &c in tree.children(id).iter().rev() {
            stack.push(c);
        }
    }
    order
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

/// Serialize a tree to the interchange format:
/// `{"kind": string, "value": string?, "children": [...]}`.
/// Children are always written, even when empty. Ids are not written; they
/// are assigned in DFS order on load.
pub fn to_json(tree: &Tree) -> Value {
    fn node_json(tree: &Tree, id: NodeId) -> Value {
        let mut obj = Map::new();
        obj.insert("kind".into(), json!(tree.kind(id).name()));
        if let Some(v) = tree.value(id) {
            obj.insert("value".into(), json!(v));
        }
        obj.insert(
            "children".into(),
            Value::Array(tree.children(id).iter().map(|&c| node_json(tree, c)).collect()),
        );
        Value::Object(obj)
    }
    node_json(tree, Tree::ROOT)
}

pub fn to_json_string(tree: &Tree) -> String {
    to_json(tree).to_string()
}

/// Deserialize a tree, assigning ids in DFS order. If the document carries
/// explicit `id` fields they must be unique and match the DFS assignment.
pub fn from_json(value: &Value) -> Result<Tree, AstError> {
    let mut seen_ids: HashSet<u64> = HashSet::new();
    let mut tree: Option<Tree> = None;
    build_node(value, "$", None, &mut tree, &mut seen_ids)?;
    Ok(tree.expect("root built"))
}

fn build_node(
    value: &Value,
    path: &str,
    parent: Option<NodeId>,
    tree: &mut Option<Tree>,
    seen_ids: &mut HashSet<u64>,
) -> Result<(), AstError> {
    let err = |reason: &str| AstError::Deserialize {
        path: path.to_string(),
        reason: reason.to_string(),
    };
    let obj = value.as_object().ok_or_else(|| err("expected an object"))?;
    let kind_name = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| err("missing string field `kind`"))?;
    let kind = NodeKind::from_name(kind_name)
        .ok_or_else(|| err(&format!("unknown kind {kind_name:?}")))?;
    let node_value = match obj.get("value") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(err("field `value` must be a string")),
    };
    if node_value.is_some()
        && !(kind.is_terminal_category() || kind == NodeKind::Subtoken)
    {
        return Err(err(&format!("kind {kind} cannot carry a value")));
    }
    if kind == NodeKind::Subtoken && node_value.is_none() {
        return Err(err("SUBTOKEN node requires a value"));
    }
    for key in obj.keys() {
        if !matches!(key.as_str(), "kind" | "value" | "children" | "id") {
            return Err(err(&format!("unknown field {key:?}")));
        }
    }
    let id = match tree {
        None => {
            *tree = Some(Tree::new(kind, node_value));
            Tree::ROOT
        }
        Some(t) => t.add_child(parent.expect("non-root has a parent"), kind, node_value),
    };
    if let Some(idv) = obj.get("id") {
        let declared = idv.as_u64().ok_or_else(|| err("field `id` must be an integer"))?;
        if !seen_ids.insert(declared) {
            return Err(err(&format!("duplicate id {declared}")));
        }
        if declared != id as u64 {
            return Err(err(&format!(
                "id {declared} does not match DFS assignment {id}"
            )));
        }
    }
    let children = obj
        .get("children")
        .ok_or_else(|| err("missing field `children`"))?
        .as_array()
        .ok_or_else(|| err("field `children` must be an array"))?;
    for (i, child) in children.iter().enumerate() {
        let child_path = format!("{path}.children[{i}]");
        build_node(child, &child_path, Some(id), tree, seen_ids)?;
    }
    Ok(())
}

pub fn from_json_str(text: &str) -> Result<Tree, AstError> {
    let value: Value = serde_json::from_str(text).map_err(|e| AstError::Deserialize {
        path: "$".into(),
        reason: format!("malformed document: {e}"),
    })?;
    from_json(&value)
}
