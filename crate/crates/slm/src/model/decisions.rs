//! The per-step decision process shared by training, scoring and decoding.
//!
//! A generation state owns a working tree (the augmented context with the
//! target growing in place of the hole) and a stack of open slots. At each
//! step the model scores a candidate set for the top slot; applying a
//! decision mutates the tree and the stack. Teacher forcing, loss
//! computation and beam search all replay exactly this process, which makes
//! their probabilities consistent by construction.

use std::collections::BTreeSet;

use super::encoder::{EncodeSession, PathCache};
use super::predict::{self, CopySource, SubtokenQuery};
use super::{CompletionSite, ModelError, SlmModel};
use crate::ast::{camel_join, terminal_subtokens, NodeId, NodeKind, Tree, ALL_KINDS};
use crate::nn::{Real, Var};
use crate::paths;

/// Caps on the decision space. Defaults follow the model hyperparameters;
/// tight caps make the target space finite and enumerable.
#[derive(Clone, Debug)]
pub struct GenerationCaps {
    /// Maximum decisions per generated subtree.
    pub budget: usize,
    /// Forced token terminator after this many subtokens.
    pub max_subtokens: usize,
    /// Maximum target depth (root = 1); deeper slots only close.
    pub max_depth: Option<usize>,
    /// Maximum children per generated nonterminal.
    pub max_children: Option<usize>,
    /// Restrict node decisions to these kinds (EOS_NODE is always kept).
    pub allowed_kinds: Option<Vec<NodeKind>>,
}

impl GenerationCaps {
    pub fn from_hyper(h: &super::Hyperparams) -> Self {
        GenerationCaps {
            budget: h.budget,
            max_subtokens: h.p_max,
            max_depth: None,
            max_children: None,
            allowed_kinds: None,
        }
    }
}

/// One generation decision.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Decision {
    /// Place a node of this kind (or close the parent with EOS_NODE).
    Kind(NodeKind),
    /// Emit a subtoken and keep the chain open.
    Sub(String),
    /// Emit the unknown-subtoken marker.
    SubUnk,
    /// Close the subtoken chain.
    SubEos,
    /// Copy a whole context token; completes the terminal.
    Tok(String),
}

/// An open slot: the next child of a structural node, or the next subtoken
/// position of a terminal chain. The hole slot places the target root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    Hole { hole: NodeId },
    Child { parent: NodeId, index: usize, depth: usize },
    Token { terminal: NodeId, tip: NodeId, position: usize, depth: usize },
}

/// Working state of one partial generation.
#[derive(Clone, Debug)]
pub struct GenState {
    pub tree: Tree,
    pub frontier: Vec<Slot>,
    pub decisions_used: usize,
    pub hole: NodeId,
    pub caps: GenerationCaps,
}

impl GenState {
    pub fn new(site: &CompletionSite, caps: GenerationCaps) -> GenState {
        GenState {
            tree: site.tree.clone(),
            frontier: vec![Slot::Hole { hole: site.hole }],
            decisions_used: 0,
            hole: site.hole,
            caps,
        }
    }

    pub fn complete(&self) -> bool {
        self.frontier.is_empty()
    }

    pub fn budget_exhausted(&self) -> bool {
        !self.complete() && self.decisions_used >= self.caps.budget
    }

    pub fn current_slot(&self) -> Option<&Slot> {
        self.frontier.last()
    }

    /// Parent being expanded at the current slot.
    pub fn expanded_parent(&self) -> Option<NodeId> {
        self.current_slot().map(|slot| match *slot {
            Slot::Hole { hole } => self.tree.parent(hole).expect("hole is never the root"),
            Slot::Child { parent, .. } => parent,
            Slot::Token { tip, .. } => tip,
        })
    }

    /// Child index of the decision at the current slot relative to its
    /// parent (subtoken chains always extend child 0).
    pub fn slot_child_index(&self) -> usize {
        match self.current_slot() {
            Some(&Slot::Hole { hole }) => self.tree.node(hole).child_index,
            Some(&Slot::Child { index, .. }) => index,
            Some(&Slot::Token { .. }) => 0,
            None => 0,
        }
    }

    /// Subtokens emitted so far for the token being generated.
    pub fn current_chain(&self) -> Vec<String> {
        match self.current_slot() {
            Some(&Slot::Token { terminal, tip, .. }) => {
                let mut parts = Vec::new();
                let mut cur = tip;
                while cur != terminal {
                    if let Some(v) = self.tree.value(cur) {
                        parts.push(v.to_string());
                    }
                    cur = self.tree.parent(cur).expect("chain node has a parent");
                }
                parts.reverse();
                parts
            }
            _ => Vec::new(),
        }
    }

    /// Apply a decision to the tree and the frontier. The caller guarantees
    /// it came from the current slot's candidate set.
    pub fn apply(&mut self, decision: &Decision) {
        self.decisions_used += 1;
        let slot = self.frontier.pop().expect("apply on a complete state");
        match (slot, decision) {
            (Slot::Hole { hole }, Decision::Kind(k)) => {
                self.tree.replace_leaf(hole, *k, None);
                self.push_slots_for(hole, *k, 1);
            }
            (Slot::Child { parent, index, depth }, Decision::Kind(k)) => {
                if *k == NodeKind::EosNode {
                    self.tree.add_child(parent, NodeKind::EosNode, None);
                } else {
                    let id = self.tree.add_child(parent, *k, None);
                    self.frontier.push(Slot::Child { parent, index: index + 1, depth });
                    self.push_slots_for(id, *k, depth);
                }
            }
            (Slot::Token { terminal, tip, position, depth }, d) => match d {
                Decision::Sub(w) => {
                    let id = self.tree.add_child(tip, NodeKind::Subtoken, Some(w.clone()));
                    self.frontier.push(Slot::Token { terminal, tip: id, position: position + 1, depth });
                }
                Decision::SubUnk => {
                    let id = self.tree.add_child(
                        tip,
                        NodeKind::Subtoken,
                        Some(crate::model::vocab::RESERVED[1].to_string()),
                    );
                    self.frontier.push(Slot::Token { terminal, tip: id, position: position + 1, depth });
                }
                Decision::SubEos => {
                    self.tree.add_child(tip, NodeKind::EosTok, None);
                }
                Decision::Tok(t) => {
                    let parts = terminal_subtokens(self.tree.kind(terminal), t)
                        .unwrap_or_else(|_| vec![t.clone()]);
                    let mut cur = tip;
                    for p in parts {
                        cur = self.tree.add_child(cur, NodeKind::Subtoken, Some(p));
                    }
                    self.tree.add_child(cur, NodeKind::EosTok, None);
                }
                Decision::Kind(_) => unreachable!("node decision at a token slot"),
            },
            (s, d) => unreachable!("decision {d:?} does not fit slot {s:?}"),
        }
    }

    fn push_slots_for(&mut self, id: NodeId, kind: NodeKind, depth: usize) {
        if kind.is_terminal_category() {
            self.frontier.push(Slot::Token { terminal: id, tip: id, position: 1, depth });
        } else {
            // a structural node opens its child sequence
            self.frontier.push(Slot::Child { parent: id, index: 0, depth: depth + 1 });
        }
    }

    /// Tokens of every completed subtoken chain in the working tree,
    /// canonically joined.
    pub fn completed_tokens(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for id in 0..self.tree.len() {
            if self.tree.kind(id) == NodeKind::EosTok {
                if let Some(info) = chain_of(&self.tree, id) {
                    out.insert(info.0);
                }
            }
        }
        out
    }

    /// Extract the generated target subtree, stripped back to plain form.
    pub fn stripped_target(&self) -> Result<Tree, ModelError> {
        let sub = self.tree.subtree(self.hole);
        if sub.kind(Tree::ROOT).is_terminal_category() {
            return Ok(crate::ast::strip_augmentation(&sub)?);
        }
        Ok(crate::ast::strip_augmentation(&sub)?)
    }
}

/// Token text and parts for the chain ending at an EOS_TOK node. Chains
/// degraded by the unknown-subtoken marker carry no copyable token.
fn chain_of(tree: &Tree, eos: NodeId) -> Option<(String, Vec<String>)> {
    let mut parts = Vec::new();
    let mut cur = tree.parent(eos)?;
    while tree.kind(cur) == NodeKind::Subtoken {
        parts.push(tree.value(cur).unwrap_or_default().to_string());
        cur = tree.parent(cur)?;
    }
    if parts.is_empty() || parts.iter().any(|p| p == crate::model::vocab::RESERVED[1]) {
        return None;
    }
    parts.reverse();
    Some((camel_join(&parts), parts))
}

/// Node kinds a child decision may choose from (before caps).
pub fn legal_child_kinds() -> Vec<NodeKind> {
    ALL_KINDS
        .iter()
        .copied()
        .filter(|k| {
            !matches!(k, NodeKind::Subtoken | NodeKind::EosTok | NodeKind::Hole)
        })
        .collect()
}

/// Candidate kinds at a node slot under the caps.
pub fn node_candidates(state: &GenState, slot: &Slot) -> Vec<NodeKind> {
    let caps = &state.caps;
    match *slot {
        Slot::Hole { .. } => legal_child_kinds()
            .into_iter()
            .filter(|k| *k != NodeKind::EosNode)
            .filter(|k| allowed(caps, *k))
            .collect(),
        Slot::Child { index, depth, .. } => {
            if caps.max_children.is_some_and(|m| index >= m)
                || caps.max_depth.is_some_and(|d| depth > d)
            {
                return vec![NodeKind::EosNode];
            }
            legal_child_kinds().into_iter().filter(|k| allowed(caps, *k)).collect()
        }
        Slot::Token { .. } => Vec::new(),
    }
}

fn allowed(caps: &GenerationCaps, k: NodeKind) -> bool {
    if k == NodeKind::EosNode {
        return true;
    }
    match &caps.allowed_kinds {
        Some(set) => set.contains(&k),
        None => true,
    }
}

/// Scored candidates for one step.
pub struct StepEval {
    pub candidates: Vec<Decision>,
    /// Log-probability per candidate, aligned with `candidates`.
    pub log_probs: Vec<f64>,
    /// Tape variable holding the log-softmax row, for loss assembly.
    pub log_prob_var: Var,
}

impl StepEval {
    pub fn index_of(&self, d: &Decision) -> Option<usize> {
        self.candidates.iter().position(|c| c == d)
    }
}

/// Run the model on the current slot of `state`.
pub fn eval_step<T: Real>(
    session: &mut EncodeSession<'_, T>,
    state: &GenState,
    overlay: &mut PathCache,
) -> Result<StepEval, ModelError> {
    let model: &SlmModel<T> = session.model;
    let slot = state
        .current_slot()
        .cloned()
        .ok_or_else(|| ModelError::InvalidGold("evaluating a complete state".into()))?;
    let parent = state.expanded_parent().expect("incomplete state has a parent");
    let set = paths::leaf_paths(&state.tree, parent)
        .map_err(|e| ModelError::InvalidGold(format!("{e}")))?;

    // Encode paths; token-carrying leaves double as copy sources.
    let mut encodings = Vec::with_capacity(set.leaf_paths.len());
    let mut sources = Vec::new();
    for p in &set.leaf_paths {
        let enc = session.encode_path(&state.tree, &p.nodes, overlay);
        encodings.push(enc);
        let leaf = p.nodes[0];
        if state.tree.kind(leaf) == NodeKind::EosTok {
            if let Some((token, parts)) = chain_of(&state.tree, leaf) {
                sources.push(CopySource { encoding: enc, token, parts });
            }
        }
    }
    let root_enc = session.encode_path(&state.tree, &set.root_path.nodes, overlay);
    let child_index = state.slot_child_index();
    let h_tilde = match &mut session.noise {
        Some(rng) if model.hyper.dropout_transformer > 0.0 => predict::aggregate(
            model,
            &mut session.tape,
            &encodings,
            root_enc,
            child_index,
            Some(rng),
        ),
        _ => predict::aggregate(model, &mut session.tape, &encodings, root_enc, child_index, None),
    };

    let (candidates, lp_var) = match &slot {
        Slot::Hole { .. } | Slot::Child { .. } => {
            let kinds = node_candidates(state, &slot);
            let lp = predict::node_log_probs(model, &mut session.tape, h_tilde, &kinds);
            (kinds.into_iter().map(Decision::Kind).collect::<Vec<_>>(), lp)
        }
        Slot::Token { position, .. } => {
            let chain = state.current_chain();
            let query = SubtokenQuery {
                position: *position,
                chain: &chain,
                force_eos: *position > state.caps.max_subtokens,
            };
            predict::subtoken_log_probs(model, &mut session.tape, h_tilde, &sources, &query)
        }
    };
    let log_probs = session.tape.value(lp_var).iter().map(|v| v.to_f64()).collect();
    Ok(StepEval { candidates, log_probs, log_prob_var: lp_var })
}
