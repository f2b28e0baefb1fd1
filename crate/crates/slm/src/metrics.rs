//! Evaluation metrics over ranked candidate lists: exact match, structural
//! tree match, and the single-mistake relaxations at subtoken and token
//! granularity.

use serde_json::{json, Value};
use thiserror::Error;

use crate::ast::{structurally_equal, terminal_subtokens, tree_shape_equal, Tree};
use crate::minilang::{lex, print_expression, TokenKind};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("k must be at least 1")]
    InvalidK,
}

/// One evaluated example: candidates sorted by model score, best first.
#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub example_id: String,
    pub candidates: Vec<Tree>,
    pub gold: Tree,
}

fn rate(records: &[EvalRecord], k: usize, hit: impl Fn(&Tree, &Tree) -> bool) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| r.candidates.iter().take(k).any(|c| hit(c, &r.gold)))
        .count();
    hits as f64 / records.len() as f64
}

/// Fraction of records where a top-k candidate equals the gold tree,
/// including every terminal value.
pub fn exact_match_at_k(records: &[EvalRecord], k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    Ok(rate(records, k, structurally_equal))
}

/// As exact match, but with all leaf values erased: kinds and shape only.
pub fn tree_match_at_k(records: &[EvalRecord], k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    Ok(rate(records, k, tree_shape_equal))
}

/// Token sequence of a candidate in canonical printed form.
fn token_sequence(tree: &Tree) -> Option<Vec<String>> {
    let printed = print_expression(tree).ok()?;
    let tokens = lex(&printed).ok()?;
    Some(
        tokens
            .into_iter()
            .filter(|t| t.kind != TokenKind::Eof)
            .map(|t| match t.kind {
                TokenKind::Ident(s) | TokenKind::Int(s) => s,
                TokenKind::Str(s) => format!("\"{s}\""),
                other => other.text().to_string(),
            })
            .collect(),
    )
}

fn subtokens_of_token(token: &str) -> Vec<String> {
    // identifiers split on camel case; everything else is atomic
    if token.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && token.chars().all(|c| c.is_ascii_alphanumeric())
    {
        terminal_subtokens(crate::ast::NodeKind::Name, token).unwrap_or_else(|_| vec![token.to_string()])
    } else {
        vec![token.to_string()]
    }
}

/// Substitution-only comparison: equal token counts, every aligned token
/// pair has equal subtoken counts, and at most one subtoken differs.
fn one_subtoken_hit(candidate: &Tree, gold: &Tree) -> bool {
    let (Some(c), Some(g)) = (token_sequence(candidate), token_sequence(gold)) else {
        return false;
    };
    if c.len() != g.len() {
        return false;
    }
    let mut diffs = 0usize;
    for (ct, gt) in c.iter().zip(g.iter()) {
        if ct == gt {
            continue;
        }
        let (cs, gs) = (subtokens_of_token(ct), subtokens_of_token(gt));
        if cs.len() != gs.len() {
            return false;
        }
        diffs += cs.iter().zip(gs.iter()).filter(|(a, b)| a != b).count();
        if diffs > 1 {
            return false;
        }
    }
    diffs <= 1
}

/// Substitution-only comparison at token granularity.
fn one_token_hit(candidate: &Tree, gold: &Tree) -> bool {
    let (Some(c), Some(g)) = (token_sequence(candidate), token_sequence(gold)) else {
        return false;
    };
    if c.len() != g.len() {
        return false;
    }
    c.iter().zip(g.iter()).filter(|(a, b)| a != b).count() <= 1
}

/// Exact match relaxed by one subtoken substitution.
pub fn one_subtoken_diff_at_k(records: &[EvalRecord], k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    Ok(rate(records, k, one_subtoken_hit))
}

/// Exact match relaxed by one token substitution.
pub fn one_token_diff_at_k(records: &[EvalRecord], k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    Ok(rate(records, k, one_token_hit))
}

/// All four metrics at the requested cutoffs, as the report JSON.
pub fn eval_report(records: &[EvalRecord], ks: &[usize]) -> Result<Value, MetricsError> {
    let mut acc = serde_json::Map::new();
    let mut tree = serde_json::Map::new();
    let mut one_sub = serde_json::Map::new();
    let mut one_tok = serde_json::Map::new();
    for &k in ks {
        acc.insert(k.to_string(), json!(exact_match_at_k(records, k)?));
        tree.insert(k.to_string(), json!(tree_match_at_k(records, k)?));
        one_sub.insert(k.to_string(), json!(one_subtoken_diff_at_k(records, k)?));
        one_tok.insert(k.to_string(), json!(one_token_diff_at_k(records, k)?));
    }
    Ok(json!({
        "acc": acc,
        "tree": tree,
        "oneSubtoken": one_sub,
        "oneToken": one_tok,
        "n": records.len(),
    }))
}
