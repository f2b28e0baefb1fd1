//! Path encoding with incremental prefix caching.
//!
//! Paths that originate from the same leaf share the ascent out of that
//! leaf, and consecutive prediction steps revisit the same prefixes. The
//! session caches the LSTM state after every encoded prefix, keyed by
//! (origin node, last node); since the tree path between two nodes is
//! unique, the key identifies the prefix exactly. A second encode of a path
//! whose prefix is cached performs exactly one cell step per suffix element.
//!
//! Cache entries are split between a context layer (valid for every
//! hypothesis of a decode) and a per-hypothesis overlay (entries whose key
//! touches generated nodes or the hole).

use std::collections::HashMap;

use super::SlmModel;
use crate::ast::{NodeId, NodeKind, Tree};
use crate::model::vocab::EOS_ID;
use crate::nn::{Real, Tape, Var};
use crate::rng::Rng;

/// Per-hypothesis cache layer: (origin, waypoint) -> packed LSTM states.
pub type PathCache = HashMap<(NodeId, NodeId), Vec<Var>>;

pub struct EncodeSession<'m, T: Real> {
    pub model: &'m SlmModel<T>,
    pub tape: Tape<T>,
    /// States whose key involves only immutable context nodes.
    context_cache: PathCache,
    /// Node ids >= this bound were generated during decoding.
    context_len: usize,
    /// The hole is context by id but mutates when filled, so it is never
    /// cached in the shared layer.
    hole: Option<NodeId>,
    /// When false, every path is encoded from scratch (oracle mode).
    pub use_cache: bool,
    /// Training-time noise source; None in evaluation mode.
    pub noise: Option<Rng>,
}

impl<'m, T: Real> EncodeSession<'m, T> {
    pub fn new(model: &'m SlmModel<T>, context_len: usize, hole: Option<NodeId>) -> Self {
        EncodeSession {
            model,
            tape: Tape::new(),
            context_cache: HashMap::new(),
            context_len,
            hole,
            use_cache: true,
            noise: None,
        }
    }

    pub fn without_cache(model: &'m SlmModel<T>) -> Self {
        let mut s = EncodeSession::new(model, usize::MAX, None);
        s.use_cache = false;
        s
    }

    fn is_context_key(&self, key: (NodeId, NodeId)) -> bool {
        key.0 < self.context_len
            && key.1 < self.context_len
            && Some(key.0) != self.hole
            && Some(key.1) != self.hole
    }

    fn cache_get(&self, overlay: &PathCache, key: (NodeId, NodeId)) -> Option<Vec<Var>> {
        if self.is_context_key(key) {
            self.context_cache.get(&key).cloned()
        } else {
            overlay.get(&key).cloned()
        }
    }

    fn cache_put(&mut self, overlay: &mut PathCache, key: (NodeId, NodeId), states: Vec<Var>) {
        if self.is_context_key(key) {
            self.context_cache.insert(key, states);
        } else {
            overlay.insert(key, states);
        }
    }

    pub fn cache_len(&self, overlay: &PathCache) -> usize {
        self.context_cache.len() + overlay.len()
    }

    /// Embed one path element: subtoken-like nodes through the subtoken
    /// table, structural nodes as [type ; child-index]. In training mode
    /// the recurrent dropout rate masks the embedding; masked prefixes
    /// freeze their noise in the cache, close to variational dropout.
    pub fn embed_element(&mut self, tree: &Tree, node: NodeId) -> Var {
        let m = self.model;
        let raw = match tree.kind(node) {
            NodeKind::Subtoken => {
                let id = m.vocab.id_or_unk(tree.value(node).unwrap_or_default());
                self.tape.gather_row(&m.params, m.embed_subtoken, id)
            }
            NodeKind::EosTok => self.tape.gather_row(&m.params, m.embed_subtoken, EOS_ID),
            kind => {
                let idx = tree.node(node).child_index.min(m.hyper.k_idx - 1);
                let t = self.tape.gather_row(&m.params, m.embed_type, kind.id());
                let i = self.tape.gather_row(&m.params, m.embed_index, idx);
                self.tape.concat(&[t, i])
            }
        };
        let rate = m.hyper.dropout_recurrent;
        match &mut self.noise {
            Some(rng) if rate > 0.0 => {
                let scale = T::from_f64(1.0 / (1.0 - rate));
                let keep: Vec<T> = (0..m.hyper.d_model)
                    .map(|_| if rng.chance(rate) { T::ZERO } else { scale })
                    .collect();
                self.tape.mask(raw, keep)
            }
            _ => raw,
        }
    }

    /// Encode a node path into its final LSTM encoding, reusing the longest
    /// cached prefix and caching every new prefix.
    pub fn encode_path(&mut self, tree: &Tree, path: &[NodeId], overlay: &mut PathCache) -> Var {
        debug_assert!(!path.is_empty());
        let origin = path[0];
        let mut states: Option<Vec<Var>> = None;
        let mut start = 0;
        if self.use_cache {
            for j in (0..path.len()).rev() {
                if let Some(s) = self.cache_get(overlay, (origin, path[j])) {
                    states = Some(s);
                    start = j + 1;
                    break;
                }
            }
        }
        for (k, &node) in path.iter().enumerate().skip(start) {
            let x = self.embed_element(tree, node);
            let next = self.model.lstm.step(&mut self.tape, &self.model.params, x, states.as_deref());
            if self.use_cache {
                self.cache_put(overlay, (origin, path[k]), next.clone());
            }
            states = Some(next);
        }
        let states = states.expect("nonempty path");
        let model = self.model;
        model.lstm.concat_hidden(&mut self.tape, &states)
    }
}
