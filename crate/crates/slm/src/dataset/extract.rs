//! Example extraction with the four corpus filters: test-named methods,
//! over-long methods, single-node targets, and targets that appear
//! verbatim elsewhere in their method.

use super::{DatasetError, Example};
use crate::ast::{dfs_order, NodeId, NodeKind, Tree};
use crate::minilang::{canonical_line_count, lex, print, TokenKind};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractStats {
    pub methods_seen: usize,
    pub methods_dropped_test_name: usize,
    pub methods_dropped_too_long: usize,
    pub targets_seen: usize,
    pub targets_dropped_single_node: usize,
    pub targets_dropped_in_context: usize,
    pub examples: usize,
}

/// Maximum canonical line count for a method to participate.
pub const MAX_METHOD_LINES: usize = 20;

/// Extract one example per qualifying expression subtree of each method.
pub fn extract_examples(methods: &[Tree]) -> Result<(Vec<Example>, ExtractStats), DatasetError> {
    let mut stats = ExtractStats::default();
    let mut examples = Vec::new();
    for (method_id, method) in methods.iter().enumerate() {
        stats.methods_seen += 1;
        if method_name(method).to_lowercase().contains("test") {
            stats.methods_dropped_test_name += 1;
            continue;
        }
        let printed = print(method).map_err(|e| {
            DatasetError::BadExample(format!("m{method_id}"), format!("unprintable method: {e}"))
        })?;
        if canonical_line_count(method).unwrap_or(usize::MAX) > MAX_METHOD_LINES {
            stats.methods_dropped_too_long += 1;
            continue;
        }
        let method_tokens = token_texts(&printed);
        for node in dfs_order(method) {
            if node == Tree::ROOT || !method.kind(node).is_expression() {
                continue;
            }
            // ArgList is a carrier, not an expression; skip nodes that sit
            // in non-expression positions only when they are not expressions
            // themselves (kind check above covers it).
            stats.targets_seen += 1;
            if method.subtree_size(node) < 2 {
                stats.targets_dropped_single_node += 1;
                continue;
            }
            let target_tokens = token_texts(
                &crate::minilang::print_expression(&method.subtree(node)).map_err(|e| {
                    DatasetError::BadExample(format!("m{method_id}_n{node}"), format!("{e}"))
                })?,
            );
            if count_subsequence(&method_tokens, &target_tokens) >= 2 {
                stats.targets_dropped_in_context += 1;
                continue;
            }
            let (context, hole_site) = carve_hole(method, node);
            let gold = method.subtree(node);
            examples.push(Example {
                id: format!("m{method_id:05}_n{node:04}"),
                method_id,
                context,
                hole_site,
                gold,
            });
            stats.examples += 1;
        }
    }
    examples.sort_by_key(|e| (e.method_id, e.id.clone()));
    Ok((examples, stats))
}

fn method_name(method: &Tree) -> String {
    method
        .children(Tree::ROOT)
        .first()
        .and_then(|&c| method.value(c))
        .unwrap_or_default()
        .to_string()
}

fn token_texts(text: &str) -> Vec<String> {
    match lex(text) {
        Ok(tokens) => tokens
            .into_iter()
            .filter(|t| t.kind != TokenKind::Eof)
            .map(|t| match t.kind {
                TokenKind::Ident(s) | TokenKind::Int(s) => s,
                TokenKind::Str(s) => format!("\"{s}\""),
                other => other.text().to_string(),
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Occurrences of `needle` as a contiguous subsequence of `haystack`.
fn count_subsequence(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || haystack.len() < needle.len() {
        return 0;
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| &haystack[i..i + needle.len()] == needle)
        .count()
}

/// Copy the method with the target subtree replaced by a hole, with fresh
/// DFS ids, returning the new (parent, child index) of the hole.
fn carve_hole(method: &Tree, target: NodeId) -> (Tree, (NodeId, usize)) {
    let mut out = Tree::new(method.kind(Tree::ROOT), method.value(Tree::ROOT).map(String::from));
    let mut site = (0usize, 0usize);
    fn rec(src: &Tree, node: NodeId, target: NodeId, dst: &mut Tree, dnode: NodeId, site: &mut (usize, usize)) {
        for &c in src.children(node) {
            if c == target {
                let idx = dst.children(dnode).len();
                dst.add_child(dnode, NodeKind::Hole, None);
                *site = (dnode, idx);
            } else {
                let n = dst.add_child(dnode, src.kind(c), src.value(c).map(String::from));
                rec(src, c, target, dst, n, site);
            }
        }
    }
    rec(method, Tree::ROOT, target, &mut out, Tree::ROOT, &mut site);
    (out, site)
}
