//! The structural language model: node embeddings, LSTM path encoder with a
//! prefix cache, transformer aggregation with an index-informed root-path
//! query, and prediction heads with the syntactic copy mechanism.

pub mod check;
pub mod checkpoint;
pub mod decisions;
pub mod encoder;
pub mod hyper;
pub mod loss;
pub mod predict;
pub mod train;
pub mod vocab;

pub use decisions::{Decision, GenState, GenerationCaps, Slot, StepEval};
pub use encoder::{EncodeSession, PathCache};
pub use hyper::Hyperparams;
pub use loss::{example_loss, teacher_forced_score};
pub use vocab::Vocab;

use thiserror::Error;

use crate::ast::{augment_tree, AstError, NodeId, NodeKind, Tree};
use crate::nn::{lstm::LstmStack, transformer::TransformerEncoder, ParamId, ParamStore, Real, Tensor};
use crate::rng::Rng;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("gold subtree is invalid: {0}")]
    InvalidGold(String),
    #[error("context must contain exactly one hole, found {0}")]
    BadHoleCount(usize),
    #[error("hole must not be the root of the context tree")]
    HoleAtRoot,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    Hyper(#[from] hyper::HyperError),
}

/// An augmented context tree ready for completion: exactly one hole.
#[derive(Clone, Debug)]
pub struct CompletionSite {
    pub tree: Tree,
    pub hole: NodeId,
}

impl CompletionSite {
    /// Augment an unaugmented context tree containing exactly one hole.
    pub fn prepare(context: &Tree) -> Result<CompletionSite, ModelError> {
        let augmented = augment_tree(context)?;
        let holes: Vec<NodeId> = (0..augmented.len())
            .filter(|&i| augmented.kind(i) == NodeKind::Hole)
            .collect();
        if holes.len() != 1 {
            return Err(ModelError::BadHoleCount(holes.len()));
        }
        let hole = holes[0];
        if augmented.parent(hole).is_none() {
            return Err(ModelError::HoleAtRoot);
        }
        Ok(CompletionSite { tree: augmented, hole })
    }
}

/// All learned tensors plus the structural handles into the parameter store.
#[derive(Clone, Debug)]
pub struct SlmModel<T: Real> {
    pub hyper: Hyperparams,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
    pub embed_subtoken: ParamId,
    pub embed_type: ParamId,
    pub embed_index: ParamId,
    pub lstm: LstmStack,
    pub transformer: TransformerEncoder,
    /// Index-conditioned root transforms; child indices clamp to the last.
    pub c_index: Vec<ParamId>,
    pub w_r: ParamId,
    pub w_g: ParamId,
    pub u_type: ParamId,
    pub w_c: ParamId,
    /// Positional subtoken-copy bilinear maps, one per source position.
    pub w_c_pos: Vec<ParamId>,
}

impl<T: Real> SlmModel<T> {
    /// Deterministic initialization from a seed. Parameter creation order is
    /// stable and defines the checkpoint layout.
    pub fn new(hyper: Hyperparams, vocab: Vocab, seed: u64) -> Result<SlmModel<T>, ModelError> {
        hyper.validate()?;
        assert_eq!(vocab.len(), hyper.vocab_size, "vocabulary size must match hyperparams");
        let mut rng = Rng::new(seed ^ 0x51a3_c0de);
        let mut params = ParamStore::new();
        let d = hyper.d_model;
        let embed_subtoken = params.add(
            "embed.subtoken",
            Tensor::uniform(&[hyper.vocab_size, d], 0.05, &mut rng),
        );
        let embed_type = params.add(
            "embed.type",
            Tensor::uniform(&[crate::ast::KIND_COUNT, hyper.d_type], 0.05, &mut rng),
        );
        let embed_index = params.add(
            "embed.index",
            Tensor::uniform(&[hyper.k_idx, hyper.d_index()], 0.05, &mut rng),
        );
        let lstm = LstmStack::init(&mut params, "lstm", d, hyper.lstm_hidden(), hyper.lstm_layers, &mut rng);
        let transformer = TransformerEncoder::init(
            &mut params,
            "tx",
            d,
            hyper.ff_dim,
            hyper.transformer_layers,
            hyper.heads,
            &mut rng,
        );
        let c_index = (0..hyper.k_idx)
            .map(|i| params.add(&format!("agg.c.{i}"), Tensor::xavier(d, d, &mut rng)))
            .collect();
        let w_r = params.add("agg.w_r", Tensor::xavier(d, d, &mut rng));
        let w_g = params.add("agg.w_g", Tensor::xavier(d, 2 * d, &mut rng));
        let u_type = params.add("head.u_type", Tensor::xavier(hyper.d_type, d, &mut rng));
        let w_c = params.add("head.w_c", Tensor::xavier(d, d, &mut rng));
        let w_c_pos = (0..hyper.p_max)
            .map(|i| params.add(&format!("head.w_c_pos.{i}"), Tensor::xavier(d, d, &mut rng)))
            .collect();
        Ok(SlmModel {
            hyper,
            vocab,
            params,
            embed_subtoken,
            embed_type,
            embed_index,
            lstm,
            transformer,
            c_index,
            w_r,
            w_g,
            u_type,
            w_c,
            w_c_pos,
        })
    }

    /// Clamped child-index transform for slot `i`.
    pub fn c_for_index(&self, i: usize) -> ParamId {
        self.c_index[i.min(self.hyper.k_idx - 1)]
    }

    pub fn cast<U: Real>(&self) -> SlmModel<U> {
        SlmModel {
            hyper: self.hyper.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
            embed_subtoken: self.embed_subtoken,
            embed_type: self.embed_type,
            embed_index: self.embed_index,
            lstm: self.lstm.clone(),
            transformer: self.transformer.clone(),
            c_index: self.c_index.clone(),
            w_r: self.w_r,
            w_g: self.w_g,
            u_type: self.u_type,
            w_c: self.w_c,
            w_c_pos: self.w_c_pos.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    pub(crate) fn tiny_vocab(extra: &[&str], size: usize) -> Vocab {
        let mut counts = BTreeMap::new();
        for (i, s) in extra.iter().enumerate() {
            counts.insert(s.to_string(), 100 - i as u64);
        }
        Vocab::build(&counts, size)
    }

    #[test]
    fn model_builds_deterministically() {
        let vocab = tiny_vocab(&["x", "value", "get"], 12);
        let a: SlmModel<f32> = SlmModel::new(Hyperparams::micro(), vocab.clone(), 7).unwrap();
        let b: SlmModel<f32> = SlmModel::new(Hyperparams::micro(), vocab, 7).unwrap();
        for (ia, ib) in a.params.ids().zip(b.params.ids()) {
            assert_eq!(a.params.get(ia).data, b.params.get(ib).data);
        }
    }

    #[test]
    fn c_index_clamps() {
        let vocab = tiny_vocab(&["x"], 12);
        let m: SlmModel<f32> = SlmModel::new(Hyperparams::micro(), vocab, 1).unwrap();
        assert_eq!(m.c_for_index(99), m.c_index[m.hyper.k_idx - 1]);
        assert_eq!(m.c_for_index(1), m.c_index[1]);
    }

    #[test]
    fn site_requires_single_hole() {
        let mut t = Tree::new(NodeKind::Greater, None);
        t.add_child(Tree::ROOT, NodeKind::Name, Some("x".into()));
        t.add_child(Tree::ROOT, NodeKind::Hole, None);
        assert!(CompletionSite::prepare(&t).is_ok());
        let t2 = Tree::new(NodeKind::Block, None);
        assert!(matches!(
            CompletionSite::prepare(&t2),
            Err(ModelError::BadHoleCount(0))
        ));
    }
}
