//! Dataset tooling: completion examples, extraction filters, synthetic
//! corpus generation and method-level splitting.

mod extract;
mod split;
mod synth;

pub use extract::{extract_examples, ExtractStats};
pub use split::{split, SplitRatios};
pub use synth::{gen_synthetic_corpus, CorpusSpec};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::ast::{from_json, to_json, AstError, NodeId, NodeKind, Tree};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("infeasible corpus spec: {0}")]
    InfeasibleSpec(String),
    #[error("split ratios must sum to 1, got {0}")]
    RatioMismatch(f64),
    #[error("example {0}: {1}")]
    BadExample(String, String),
    #[error(transparent)]
    Ast(#[from] AstError),
}

/// One completion example: a context tree with a single hole and the gold
/// subtree that fills it.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    /// Index of the source method; splits never separate a method's examples.
    pub method_id: usize,
    /// Unaugmented method tree with exactly one `HOLE` node.
    pub context: Tree,
    /// (parent id, child index) of the hole within `context`.
    pub hole_site: (NodeId, usize),
    /// Unaugmented gold subtree.
    pub gold: Tree,
}

impl Example {
    /// Re-insert the gold target at the hole; must reproduce the original
    /// method tree.
    pub fn reinsert(&self) -> Tree {
        let mut tree = self.context.clone();
        let hole = self.context.children(self.hole_site.0)[self.hole_site.1];
        tree.graft(hole, &self.gold);
        tree
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), json!(self.id));
        obj.insert("methodId".into(), json!(self.method_id));
        obj.insert("contextTree".into(), to_json(&self.context));
        obj.insert(
            "holeSite".into(),
            json!({"parentId": self.hole_site.0, "childIndex": self.hole_site.1}),
        );
        obj.insert("goldTarget".into(), to_json(&self.gold));
        Value::Object(obj)
    }

    pub fn from_json(value: &Value) -> Result<Example, DatasetError> {
        let bad = |id: &str, m: &str| DatasetError::BadExample(id.to_string(), m.to_string());
        let id = value["id"].as_str().unwrap_or("<missing id>").to_string();
        let method_id = value["methodId"]
            .as_u64()
            .ok_or_else(|| bad(&id, "missing methodId"))? as usize;
        let context = from_json(value.get("contextTree").ok_or_else(|| bad(&id, "missing contextTree"))?)?;
        let gold = from_json(value.get("goldTarget").ok_or_else(|| bad(&id, "missing goldTarget"))?)?;
        let site = value.get("holeSite").ok_or_else(|| bad(&id, "missing holeSite"))?;
        let parent = site["parentId"].as_u64().ok_or_else(|| bad(&id, "missing parentId"))? as usize;
        let child_index =
            site["childIndex"].as_u64().ok_or_else(|| bad(&id, "missing childIndex"))? as usize;
        let hole = context
            .get(parent)
            .and_then(|n| n.children.get(child_index).copied())
            .ok_or_else(|| bad(&id, "hole site out of range"))?;
        if context.kind(hole) != NodeKind::Hole {
            return Err(bad(&id, "hole site does not point at a HOLE node"));
        }
        Ok(Example { id, method_id, context, hole_site: (parent, child_index), gold })
    }
}

/// Serialize examples as JSON lines.
pub fn write_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&e.to_json().to_string());
        out.push('\n');
    }
    out
}

pub fn read_jsonl(text: &str) -> Result<Vec<Example>, DatasetError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let value: Value = serde_json::from_str(line).map_err(|e| {
                DatasetError::Ast(AstError::Deserialize { path: "$".into(), reason: e.to_string() })
            })?;
            Example::from_json(&value)
        })
        .collect()
}
