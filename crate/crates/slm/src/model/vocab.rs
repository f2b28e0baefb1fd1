//! Subtoken vocabulary with reserved PAD/UNK/EOS entries.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::ast::{terminal_subtokens, NodeKind, Tree};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<eos_tok>"];

#[derive(Clone, Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("vocabulary must start with the reserved entries {RESERVED:?}")]
    MissingReserved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from subtoken counts: most frequent first, ties broken
    /// lexicographically, truncated to `size` including the reserved slots.
    pub fn build(counts: &BTreeMap<String, u64>, size: usize) -> Vocab {
        let mut ranked: Vec<(&String, &u64)> = counts
            .iter()
            .filter(|(s, _)| !RESERVED.contains(&s.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut symbols: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        symbols.extend(
            ranked
                .into_iter()
                .take(size.saturating_sub(RESERVED.len()))
                .map(|(s, _)| s.clone()),
        );
        // pad to the configured size so the embedding table shape is fixed
        while symbols.len() < size {
            symbols.push(format!("<unused_{}>", symbols.len()));
        }
        Vocab::from_symbols_unchecked(symbols)
    }

    pub fn from_symbols(symbols: Vec<String>) -> Result<Vocab, VocabError> {
        if symbols.len() < RESERVED.len()
            || RESERVED.iter().zip(&symbols).any(|(r, s)| r != s)
        {
            return Err(VocabError::MissingReserved);
        }
        Ok(Vocab::from_symbols_unchecked(symbols))
    }

    fn from_symbols_unchecked(symbols: Vec<String>) -> Vocab {
        let index = symbols
            .iter()
            .enumerate()
            .skip(RESERVED.len())
            .filter(|(_, s)| !(s.starts_with("<unused_") && s.ends_with('>')))
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocab { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    /// Whether an id is a padding filler with no surface form.
    pub fn is_filler(&self, id: usize) -> bool {
        let s = &self.symbols[id];
        id >= RESERVED.len() && s.starts_with("<unused_") && s.ends_with('>')
    }

    /// Id of a plain subtoken, never a reserved slot.
    pub fn lookup(&self, subtoken: &str) -> Option<usize> {
        self.index.get(subtoken).copied()
    }

    pub fn id_or_unk(&self, subtoken: &str) -> usize {
        self.lookup(subtoken).unwrap_or(UNK_ID)
    }
}

/// Count the subtokens of every terminal in a set of unaugmented trees.
pub fn count_subtokens(trees: &[Tree]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for tree in trees {
        for id in 0..tree.len() {
            let kind = tree.kind(id);
            if kind.is_terminal_category() {
                if let Some(v) = tree.value(id) {
                    if let Ok(parts) = terminal_subtokens(kind, v) {
                        for p in parts {
                            *counts.entry(p).or_insert(0) += 1;
                        }
                    }
                }
            } else if kind == NodeKind::Subtoken {
                if let Some(v) = tree.value(id) {
                    *counts.entry(v.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}
