//! Aggregation of encoded paths into a prediction state, and the two
//! prediction heads: node kinds over the type embeddings, and subtoken
//! symbols combining the vocabulary with syntactic copy scores.

use std::collections::BTreeMap;

use super::decisions::Decision;
use super::SlmModel;
use crate::ast::NodeKind;
use crate::model::vocab::{EOS_ID, RESERVED, UNK_ID};
use crate::nn::{Real, Tape, Var};
use crate::rng::Rng;

/// One copy source: the encoding of the leaf's path and the token it ends.
#[derive(Clone, Debug)]
pub struct CopySource {
    pub encoding: Var,
    pub token: String,
    pub parts: Vec<String>,
}

/// Combine the contextualized path set with the index-informed root path:
/// r~ = W_r . relu(C_i . r); attention of r~ over Z (or max pooling when
/// root attention is off); h~ = relu(W_g [z~ ; r~]).
pub fn aggregate<T: Real>(
    model: &SlmModel<T>,
    tape: &mut Tape<T>,
    path_encodings: &[Var],
    root_encoding: Var,
    child_index: usize,
    dropout_rng: Option<&mut Rng>,
) -> Var {
    let params = &model.params;
    let c_i = model.c_for_index(child_index);
    let cr = tape.affine(params, c_i, None, root_encoding);
    let cr = tape.relu(cr);
    let r_tilde = tape.affine(params, model.w_r, None, cr);
    let z_tilde = if path_encodings.is_empty() {
        tape.input_row(vec![T::ZERO; model.hyper.d_model])
    } else {
        let h = tape.stack(path_encodings);
        let rate = model.hyper.dropout_transformer;
        let z = match dropout_rng {
            Some(rng) if rate > 0.0 => model.transformer.forward(tape, params, h, Some((rate, rng))),
            _ => model.transformer.forward(tape, params, h, None),
        };
        if model.hyper.root_attention {
            let scores = tape.matmul_bt(r_tilde, z);
            let alpha = tape.softmax_rows(scores);
            tape.matmul(alpha, z)
        } else {
            tape.max_pool_rows(z)
        }
    };
    let zr = tape.concat(&[z_tilde, r_tilde]);
    let g = tape.affine(params, model.w_g, None, zr);
    tape.relu(g)
}

/// Raw node-kind logits: E_type . (U_type . h~).
pub fn node_logits<T: Real>(model: &SlmModel<T>, tape: &mut Tape<T>, h_tilde: Var) -> Var {
    let u = tape.affine(&model.params, model.u_type, None, h_tilde);
    tape.affine(&model.params, model.embed_type, None, u)
}

/// Distribution over the full kind set.
pub fn predict_node<T: Real>(model: &SlmModel<T>, tape: &mut Tape<T>, h_tilde: Var) -> Vec<T> {
    let logits = node_logits(model, tape, h_tilde);
    let dist = tape.softmax_rows(logits);
    tape.value(dist).to_vec()
}

/// Log-probabilities over an explicit candidate kind list.
pub fn node_log_probs<T: Real>(
    model: &SlmModel<T>,
    tape: &mut Tape<T>,
    h_tilde: Var,
    candidates: &[NodeKind],
) -> Var {
    let logits = node_logits(model, tape, h_tilde);
    let groups = candidates.iter().map(|k| vec![(logits, k.id())]).collect();
    let picked = tape.assemble_sum(groups);
    tape.log_softmax_row(picked)
}

/// Options shaping the subtoken candidate set at one step.
#[derive(Clone, Debug)]
pub struct SubtokenQuery<'a> {
    /// Position inside the token being generated (1-based).
    pub position: usize,
    /// Subtokens already emitted for this token.
    pub chain: &'a [String],
    /// Force the terminator (position cap reached).
    pub force_eos: bool,
}

/// Build the candidate symbol list and their grouped log-probabilities.
///
/// Symbol identity is the action: emitting a subtoken (continuing the
/// chain), emitting the terminator, or copying a whole token (which
/// completes the terminal). Scores for the same action-symbol are summed
/// over the vocabulary entry and every context occurrence, then normalized
/// together.
pub fn subtoken_log_probs<T: Real>(
    model: &SlmModel<T>,
    tape: &mut Tape<T>,
    h_tilde: Var,
    sources: &[CopySource],
    query: &SubtokenQuery,
) -> (Vec<Decision>, Var) {
    if query.force_eos {
        let logit = tape.input_row(vec![T::ZERO]);
        let lp = tape.log_softmax_row(logit);
        return (vec![Decision::SubEos], lp);
    }
    let params = &model.params;
    let copy = model.hyper.copy_enabled;
    let gen_logits = tape.affine(params, model.embed_subtoken, None, h_tilde);

    // Whole-token and positional copy scores, one bilinear form per kind.
    let mut token_scores: BTreeMap<String, Vec<(Var, usize)>> = BTreeMap::new();
    let mut part_scores: BTreeMap<String, Vec<(Var, usize)>> = BTreeMap::new();
    if copy && !sources.is_empty() {
        let u_tok = tape.affine(params, model.w_c, None, h_tilde);
        let max_parts = sources.iter().map(|s| s.parts.len()).max().unwrap_or(0);
        let u_pos: Vec<Var> = (0..max_parts.min(model.hyper.p_max))
            .map(|i| tape.affine(params, model.w_c_pos[i], None, h_tilde))
            .collect();
        for src in sources {
            if query.position == 1 {
                let s = tape.dot(src.encoding, u_tok);
                token_scores.entry(src.token.clone()).or_default().push((s, 0));
            }
            for (i, part) in src.parts.iter().enumerate().take(u_pos.len()) {
                let s = tape.dot(src.encoding, u_pos[i]);
                part_scores.entry(part.clone()).or_default().push((s, 0));
            }
        }
    }

    // The terminator cannot open a token, and it is masked when the chain
    // spells a context token exactly: that token is only reachable through
    // whole-token copy, which keeps decoding routes unique per tree.
    let eos_allowed = query.position > 1 && {
        !copy || !token_scores_contains(sources, &crate::ast::camel_join(query.chain))
    };

    let mut candidates = Vec::new();
    let mut groups: Vec<Vec<(Var, usize)>> = Vec::new();
    if eos_allowed {
        candidates.push(Decision::SubEos);
        groups.push(vec![(gen_logits, EOS_ID)]);
    }
    candidates.push(Decision::SubUnk);
    groups.push(vec![(gen_logits, UNK_ID)]);
    for id in RESERVED.len()..model.vocab.len() {
        if model.vocab.is_filler(id) {
            continue;
        }
        let w = model.vocab.symbol(id);
        let mut sources_for = vec![(gen_logits, id)];
        if let Some(extra) = part_scores.remove(w) {
            sources_for.extend(extra);
        }
        candidates.push(Decision::Sub(w.to_string()));
        groups.push(sources_for);
    }
    // Copy-only subtokens, alphabetical for determinism.
    for (part, extra) in std::mem::take(&mut part_scores) {
        candidates.push(Decision::Sub(part));
        groups.push(extra);
    }
    for (token, extra) in token_scores {
        candidates.push(Decision::Tok(token));
        groups.push(extra);
    }
    let logits = tape.assemble_sum(groups);
    let lp = tape.log_softmax_row(logits);
    (candidates, lp)
}

fn token_scores_contains(sources: &[CopySource], joined: &str) -> bool {
    sources.iter().any(|s| s.token == joined)
}

/// Probability view of the subtoken head, for audits and tests.
pub fn predict_subtoken<T: Real>(
    model: &SlmModel<T>,
    tape: &mut Tape<T>,
    h_tilde: Var,
    sources: &[CopySource],
    query: &SubtokenQuery,
) -> Vec<(Decision, f64)> {
    let (candidates, lp) = subtoken_log_probs(model, tape, h_tilde, sources, query);
    let probs: Vec<f64> = tape.value(lp).iter().map(|v| v.to_f64().exp()).collect();
    candidates.into_iter().zip(probs).collect()
}
