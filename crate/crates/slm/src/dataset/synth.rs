//! Seeded synthetic corpus generation over the mini-language grammar.
//!
//! Identifiers are camel-case compositions of a subtoken pool and are
//! reused heavily inside a method, so whole tokens are frequently
//! copyable from the context. A disjoint slice of the pool is sampled per
//! method, which keeps the global subtoken distribution broad enough that
//! small vocabularies stay incomplete and the copy mechanism carries real
//! signal.

use super::DatasetError;
use crate::ast::{NodeKind, NodeId, Tree};
use crate::minilang::print;
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct CorpusSpec {
    pub seed: u64,
    pub method_count: usize,
    /// Maximum expression nesting depth (>= 2).
    pub max_depth: usize,
    /// Statements per method body, sampled in [min, max].
    pub stmt_range: (usize, usize),
    /// Global identifier subtoken pool.
    pub identifier_pool: Vec<String>,
    /// Subtokens drawn per method from the pool.
    pub subtokens_per_method: usize,
    /// Subtokens per identifier, sampled in [1, max].
    pub max_parts_per_identifier: usize,
    /// Probability of reusing an already-declared name in expression
    /// position (drives the copy signal).
    pub reuse_p: f64,
    pub int_pool: Vec<String>,
    pub str_pool: Vec<String>,
    /// Statement family weights: let, assign, call-stmt, return, if, while.
    pub stmt_weights: [f64; 6],
    /// Expression family weights: arith, compare, call, field, index,
    /// logic, unary, ternary.
    pub expr_weights: [f64; 8],
    /// Leaf family weights: name, int, str.
    pub leaf_weights: [f64; 3],
    /// Weights over the arithmetic operators (+, -, *, /).
    pub arith_weights: [f64; 4],
    /// Weights over the comparison operators (>, <, >=, <=, ==, !=).
    pub cmp_weights: [f64; 6],
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 1,
            method_count: 50,
            max_depth: 3,
            stmt_range: (2, 5),
            identifier_pool: default_pool(),
            subtokens_per_method: 8,
            max_parts_per_identifier: 2,
            reuse_p: 0.8,
            int_pool: ["0", "1", "2", "3", "5", "10", "55", "100"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            str_pool: ["msg", "done", "empty"].iter().map(|s| s.to_string()).collect(),
            stmt_weights: [4.0, 2.0, 1.2, 1.0, 0.8, 0.8],
            expr_weights: [4.0, 3.0, 2.0, 1.5, 1.0, 1.0, 0.7, 0.6],
            leaf_weights: [5.0, 3.0, 0.5],
            arith_weights: [1.0; 4],
            cmp_weights: [1.0; 6],
        }
    }
}

impl CorpusSpec {
    /// Low-entropy variant for copy-mechanism experiments: shallow,
    /// name-heavy expressions from a narrow structural family, with heavy
    /// identifier reuse.
    pub fn name_heavy(seed: u64, method_count: usize) -> CorpusSpec {
        CorpusSpec {
            seed,
            method_count,
            max_depth: 2,
            stmt_range: (2, 4),
            reuse_p: 0.92,
            subtokens_per_method: 6,
            stmt_weights: [5.0, 3.0, 0.4, 1.5, 0.6, 0.2],
            expr_weights: [6.0, 2.5, 0.4, 0.3, 0.3, 0.2, 0.1, 0.1],
            leaf_weights: [8.0, 1.5, 0.1],
            arith_weights: [8.0, 1.5, 0.4, 0.4],
            cmp_weights: [5.0, 1.0, 0.3, 0.3, 1.4, 0.6],
            int_pool: ["0", "1", "1", "2"].iter().map(|s| s.to_string()).collect(),
            ..CorpusSpec::default()
        }
    }
}

fn default_pool() -> Vec<String> {
    [
        "get", "set", "add", "sub", "run", "read", "write", "load", "save", "find", "make",
        "count", "value", "item", "node", "list", "name", "size", "index", "key", "data",
        "total", "next", "prev", "temp", "buf", "flag", "code", "line", "word", "char", "file",
        "path", "text", "user", "group", "max", "min", "sum", "avg", "len", "pos", "row", "col",
        "left", "right", "head", "tail", "base", "step", "rate", "mark", "span", "slot", "page",
        "view", "cell", "bits", "mask", "seed", "tick", "time", "date", "year", "hour", "meta",
        "info", "spec", "kind", "mode", "plan", "task", "job", "work", "unit", "part", "half",
        "full", "best", "last", "first", "old", "new", "big", "small", "fast", "slow", "deep",
        "flat", "wide", "tall", "near", "far", "high", "low", "open", "close", "begin", "end",
        "src", "dst", "tmp", "acc", "cur", "res", "arg", "out", "input", "state", "score",
        "rank", "level", "depth", "width", "bound", "limit", "scale", "shift", "offset", "delta",
        "alpha", "beta", "gamma", "theta", "sigma", "omega", "point", "edge", "face", "grid",
        "tree", "leaf", "root", "branch", "chain", "queue", "stack", "heap", "pool", "cache",
        "store", "table", "field", "label", "token", "symbol", "entry", "block", "frame",
        "scope", "owner", "child", "parent", "local", "global", "inner", "outer", "upper",
        "lower", "front", "back", "mid", "side", "top", "bot",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

struct MethodGen<'s> {
    spec: &'s CorpusSpec,
    rng: Rng,
    /// Subtoken slice for this method.
    pool: Vec<String>,
    /// Names declared so far (params and let-bindings).
    declared: Vec<String>,
}

impl<'s> MethodGen<'s> {
    fn fresh_name(&mut self) -> String {
        for _ in 0..40 {
            let parts = 1 + self.rng.below(self.spec.max_parts_per_identifier);
            let mut words = Vec::with_capacity(parts);
            for _ in 0..parts {
                words.push(self.rng.pick(&self.pool).clone());
            }
            let name = crate::ast::camel_join(&words);
            if !name.to_lowercase().contains("test") && !self.declared.contains(&name) {
                return name;
            }
        }
        // pool exhausted: number-free fallback stays parseable
        let n = self.declared.len();
        crate::ast::camel_join(&[self.pool[0].clone(), self.pool[n % self.pool.len()].clone()])
    }

    fn name_for_use(&mut self) -> String {
        if !self.declared.is_empty() && self.rng.chance(self.spec.reuse_p) {
            self.rng.pick(&self.declared).clone()
        } else {
            self.fresh_name()
        }
    }

    fn expression(&mut self, tree: &mut Tree, at: NodeId, depth: usize) {
        let leaf = depth >= self.spec.max_depth || self.rng.chance(0.35);
        if leaf {
            match self.rng.weighted(&self.spec.leaf_weights) {
                0 => {
                    let name = self.name_for_use();
                    tree.add_child(at, NodeKind::Name, Some(name));
                }
                1 => {
                    let v = self.rng.pick(&self.spec.int_pool).clone();
                    tree.add_child(at, NodeKind::Int, Some(v));
                }
                _ => {
                    let v = self.rng.pick(&self.spec.str_pool).clone();
                    tree.add_child(at, NodeKind::Str, Some(v));
                }
            }
            return;
        }
        let choice = self.rng.weighted(&self.spec.expr_weights);
        match choice {
            0 => {
                let ops = [NodeKind::Plus, NodeKind::Minus, NodeKind::Times, NodeKind::Divide];
                let pick = self.rng.weighted(&self.spec.arith_weights);
                let op = tree.add_child(at, ops[pick], None);
                self.expression(tree, op, depth + 1);
                self.expression(tree, op, depth + 1);
            }
            1 => {
                let ops = [
                    NodeKind::Greater,
                    NodeKind::Less,
                    NodeKind::GreaterEq,
                    NodeKind::LessEq,
                    NodeKind::Equals,
                    NodeKind::NotEquals,
                ];
                let pick = self.rng.weighted(&self.spec.cmp_weights);
                let op = tree.add_child(at, ops[pick], None);
                self.expression(tree, op, depth + 1);
                self.expression(tree, op, depth + 1);
            }
            2 => {
                // call: name(args) or obj.method(args)
                let call = tree.add_child(at, NodeKind::Call, None);
                if self.rng.chance(0.5) {
                    let fa = tree.add_child(call, NodeKind::FieldAccess, None);
                    let obj = self.name_for_use();
                    tree.add_child(fa, NodeKind::Name, Some(obj));
                    let m = self.fresh_or_reuse_method();
                    tree.add_child(fa, NodeKind::Name, Some(m));
                } else {
                    let f = self.fresh_or_reuse_method();
                    tree.add_child(call, NodeKind::Name, Some(f));
                }
                let args = tree.add_child(call, NodeKind::ArgList, None);
                for _ in 0..self.rng.below(3) {
                    self.expression(tree, args, depth + 1);
                }
            }
            3 => {
                let fa = tree.add_child(at, NodeKind::FieldAccess, None);
                self.expression(tree, fa, depth + 1);
                let f = self.fresh_or_reuse_method();
                tree.add_child(fa, NodeKind::Name, Some(f));
            }
            4 => {
                let ix = tree.add_child(at, NodeKind::Index, None);
                let name = self.name_for_use();
                tree.add_child(ix, NodeKind::Name, Some(name));
                self.expression(tree, ix, depth + 1);
            }
            5 => {
                let ops = [NodeKind::And, NodeKind::Or];
                let op = tree.add_child(at, *self.rng.pick(&ops), None);
                self.expression(tree, op, depth + 1);
                self.expression(tree, op, depth + 1);
            }
            6 => {
                let op = tree.add_child(at, *self.rng.pick(&[NodeKind::Not, NodeKind::Neg]), None);
                self.expression(tree, op, depth + 1);
            }
            _ => {
                let t = tree.add_child(at, NodeKind::Ternary, None);
                self.expression(tree, t, depth + 1);
                self.expression(tree, t, depth + 1);
                self.expression(tree, t, depth + 1);
            }
        }
    }

    fn fresh_or_reuse_method(&mut self) -> String {
        // method names come from the same pool; no declaration tracking
        let parts = 1 + self.rng.below(self.spec.max_parts_per_identifier);
        let words: Vec<String> = (0..parts).map(|_| self.rng.pick(&self.pool).clone()).collect();
        crate::ast::camel_join(&words)
    }

    fn statement(&mut self, tree: &mut Tree, at: NodeId, last: bool) {
        let choice = if last {
            3 // close with a return most of the time
        } else {
            self.rng.weighted(&self.spec.stmt_weights)
        };
        match choice {
            0 => {
                let decl = tree.add_child(at, NodeKind::VarDecl, None);
                let name = self.fresh_name();
                self.declared.push(name.clone());
                tree.add_child(decl, NodeKind::Name, Some(name));
                self.expression(tree, decl, 1);
            }
            1 => {
                let assign = tree.add_child(at, NodeKind::Assign, None);
                let name = self.name_for_use();
                tree.add_child(assign, NodeKind::Name, Some(name));
                self.expression(tree, assign, 1);
            }
            2 => {
                let stmt = tree.add_child(at, NodeKind::ExprStmt, None);
                let call = tree.add_child(stmt, NodeKind::Call, None);
                let f = self.fresh_or_reuse_method();
                tree.add_child(call, NodeKind::Name, Some(f));
                let args = tree.add_child(call, NodeKind::ArgList, None);
                for _ in 0..1 + self.rng.below(2) {
                    self.expression(tree, args, 1);
                }
            }
            3 => {
                let ret = tree.add_child(at, NodeKind::Return, None);
                self.expression(tree, ret, 1);
            }
            4 => {
                let iff = tree.add_child(at, NodeKind::If, None);
                self.expression(tree, iff, 1);
                let block = tree.add_child(iff, NodeKind::Block, None);
                let ret = tree.add_child(block, NodeKind::Return, None);
                self.expression(tree, ret, 1);
            }
            _ => {
                let wh = tree.add_child(at, NodeKind::While, None);
                self.expression(tree, wh, 1);
                let block = tree.add_child(wh, NodeKind::Block, None);
                let assign = tree.add_child(block, NodeKind::Assign, None);
                let name = self.name_for_use();
                tree.add_child(assign, NodeKind::Name, Some(name));
                self.expression(tree, assign, 1);
            }
        }
    }

    fn method(&mut self, index: usize) -> Tree {
        let mut tree = Tree::new(NodeKind::Method, None);
        let name = self.fresh_name();
        let _ = index;
        tree.add_child(Tree::ROOT, NodeKind::Name, Some(name));
        let n_params = 1 + self.rng.below(3);
        for _ in 0..n_params {
            let p = self.fresh_name();
            self.declared.push(p.clone());
            let param = tree.add_child(Tree::ROOT, NodeKind::Param, None);
            tree.add_child(param, NodeKind::Name, Some(p));
        }
        let block = tree.add_child(Tree::ROOT, NodeKind::Block, None);
        let (lo, hi) = self.spec.stmt_range;
        let n = lo + self.rng.below(hi - lo + 1);
        for i in 0..n {
            self.statement(&mut tree, block, i + 1 == n);
        }
        tree
    }
}

/// Generate a corpus as canonical source text, one blank line between
/// methods. Every method parses and re-prints identically.
pub fn gen_synthetic_corpus(spec: &CorpusSpec) -> Result<String, DatasetError> {
    if spec.max_depth < 2 {
        return Err(DatasetError::InfeasibleSpec(format!(
            "max_depth {} < 2 cannot produce multi-node targets",
            spec.max_depth
        )));
    }
    if spec.identifier_pool.is_empty() {
        return Err(DatasetError::InfeasibleSpec("empty identifier pool".into()));
    }
    let mut rng = Rng::new(spec.seed);
    let mut texts = Vec::with_capacity(spec.method_count);
    for m in 0..spec.method_count {
        let method_rng = rng.fork(m as u64);
        let mut slice_rng = rng.fork(0x9000 + m as u64);
        let mut pool = spec.identifier_pool.clone();
        slice_rng.shuffle(&mut pool);
        pool.truncate(spec.subtokens_per_method.max(1));
        let mut g = MethodGen { spec, rng: method_rng, pool, declared: Vec::new() };
        // regenerate until the canonical form fits the extraction filter
        let mut tree = g.method(m);
        let mut printed = print(&tree).expect("generated methods print");
        let mut guard = 0;
        while printed.lines().count() > super::extract::MAX_METHOD_LINES && guard < 8 {
            tree = g.method(m);
            printed = print(&tree).expect("generated methods print");
            guard += 1;
        }
        texts.push(printed);
    }
    Ok(texts.join("\n\n"))
}
