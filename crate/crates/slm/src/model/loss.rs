//! Teacher-forced replay of a gold target through the decision process:
//! the per-step log-probabilities give both the chain-rule score of the
//! subtree and the training loss (mean negative log-likelihood per
//! decision), from the same tape.

use std::collections::HashMap;

use super::decisions::{eval_step, Decision, GenState, GenerationCaps, Slot};
use super::encoder::{EncodeSession, PathCache};
use super::{CompletionSite, ModelError, SlmModel};
use crate::ast::{structurally_equal, terminal_subtokens, NodeId, Tree};
use crate::nn::{GradStore, Real, Var};

/// Result of replaying one gold target.
pub struct Replay<T: Real> {
    pub step_log_probs: Vec<f64>,
    pub step_vars: Vec<Var>,
    pub total_log_prob: f64,
    pub state: GenState,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> Replay<T> {
    pub fn decision_count(&self) -> usize {
        self.step_log_probs.len()
    }
}

/// Statically count the decisions a gold subtree will take on the
/// subtoken route: nodes, subtokens, and both EOS families. Used for
/// batch bucketing; whole-token copies at train time can only shrink it.
pub fn decision_count_upper_bound(gold: &Tree) -> usize {
    let mut count = 0usize;
    for id in 0..gold.len() {
        let kind = gold.kind(id);
        count += 1; // the node decision itself
        if kind.is_terminal_category() {
            if let Some(v) = gold.value(id) {
                let parts = terminal_subtokens(kind, v).map(|p| p.len()).unwrap_or(1);
                count += parts + 1; // subtokens + EOS_TOK
            }
        } else if kind.is_nonterminal() {
            count += 1; // EOS_NODE closure
        }
    }
    count
}

/// Drive the decision process along the gold target and record every
/// step's log-probability. Gold terminals route through whole-token copy
/// when the token is available in context, otherwise through subtokens
/// (unknown subtokens fall back to the UNK marker).
pub fn replay_gold<T: Real>(
    session: &mut EncodeSession<'_, T>,
    site: &CompletionSite,
    gold: &Tree,
    caps: &GenerationCaps,
) -> Result<Replay<T>, ModelError> {
    validate_gold(gold)?;
    let mut state = GenState::new(site, caps.clone());
    let mut overlay = PathCache::new();
    let mut gold_of: HashMap<NodeId, NodeId> = HashMap::new();
    let mut step_log_probs = Vec::new();
    let mut step_vars = Vec::new();

    while let Some(slot) = state.current_slot().cloned() {
        let eval = eval_step(session, &state, &mut overlay)?;
        let (decision, mirror): (Decision, Option<(NodeId, NodeId)>) = match &slot {
            Slot::Hole { hole } => {
                (Decision::Kind(gold.kind(Tree::ROOT)), Some((*hole, Tree::ROOT)))
            }
            Slot::Child { parent, index, .. } => {
                let g = gold_of[parent];
                let kids = gold.children(g);
                if *index < kids.len() {
                    let gchild = kids[*index];
                    let next_id = state.tree.len();
                    (Decision::Kind(gold.kind(gchild)), Some((next_id, gchild)))
                } else {
                    (Decision::Kind(crate::ast::NodeKind::EosNode), None)
                }
            }
            Slot::Token { terminal, position, .. } => {
                let g = gold_of[terminal];
                let value = gold
                    .value(g)
                    .ok_or_else(|| ModelError::InvalidGold("terminal without value".into()))?;
                let parts = terminal_subtokens(gold.kind(g), value)
                    .map_err(|e| ModelError::InvalidGold(format!("{e}")))?;
                if *position == 1 && eval.index_of(&Decision::Tok(value.to_string())).is_some() {
                    (Decision::Tok(value.to_string()), None)
                } else if *position <= parts.len() {
                    let part = &parts[*position - 1];
                    let sub = Decision::Sub(part.clone());
                    if eval.index_of(&sub).is_some() {
                        (sub, None)
                    } else {
                        (Decision::SubUnk, None)
                    }
                } else {
                    (Decision::SubEos, None)
                }
            }
        };
        let idx = eval.index_of(&decision).ok_or_else(|| {
            ModelError::InvalidGold(format!("gold decision {decision:?} is not a candidate at {slot:?}"))
        })?;
        step_log_probs.push(eval.log_probs[idx]);
        step_vars.push(session.tape.slice(eval.log_prob_var, idx, 1));
        state.apply(&decision);
        if let Some((target_id, gold_id)) = mirror {
            gold_of.insert(target_id, gold_id);
        }
    }
    debug_assert!({
        let produced = state.stripped_target().expect("complete target strips");
        replay_matches(gold, &produced)
    });
    let total_log_prob = step_log_probs.iter().sum();
    Ok(Replay {
        step_log_probs,
        step_vars,
        total_log_prob,
        state,
        _marker: std::marker::PhantomData,
    })
}

/// Gold reproduction check, modulo UNK fallbacks.
fn replay_matches(gold: &Tree, produced: &Tree) -> bool {
    structurally_equal(gold, produced) || {
        // unknown subtokens degrade values but never structure
        crate::ast::tree_shape_equal(gold, produced)
    }
}

fn validate_gold(gold: &Tree) -> Result<(), ModelError> {
    for id in 0..gold.len() {
        let kind = gold.kind(id);
        if kind.is_sentinel() {
            return Err(ModelError::InvalidGold(format!(
                "gold subtree contains reserved kind {kind}"
            )));
        }
        if kind.is_terminal_category() && gold.value(id).is_none() {
            return Err(ModelError::InvalidGold(format!(
                "gold terminal {id} has no value"
            )));
        }
    }
    Ok(())
}

/// Chain-rule score of a target: the sum of its decision log-probabilities.
pub fn teacher_forced_score<T: Real>(
    model: &SlmModel<T>,
    site: &CompletionSite,
    gold: &Tree,
    caps: &GenerationCaps,
) -> Result<f64, ModelError> {
    let mut session = EncodeSession::new(model, site.tree.len(), Some(site.hole));
    let replay = replay_gold(&mut session, site, gold, caps)?;
    Ok(replay.total_log_prob)
}

pub struct LossOutcome {
    pub loss: f64,
    pub decisions: usize,
    pub total_log_prob: f64,
}

/// Mean negative log-likelihood per decision, with gradients accumulated
/// into `grads` scaled by `grad_scale` (pass the reciprocal of the batch
/// decision total to average over a batch).
pub fn example_loss<T: Real>(
    model: &SlmModel<T>,
    site: &CompletionSite,
    gold: &Tree,
    caps: &GenerationCaps,
    grads: Option<(&mut GradStore<T>, f64)>,
) -> Result<LossOutcome, ModelError> {
    example_loss_seeded(model, site, gold, caps, grads, None)
}

/// As [`example_loss`], drawing dropout noise from the given seed when the
/// hyperparameters request it.
pub fn example_loss_seeded<T: Real>(
    model: &SlmModel<T>,
    site: &CompletionSite,
    gold: &Tree,
    caps: &GenerationCaps,
    grads: Option<(&mut GradStore<T>, f64)>,
    noise_seed: Option<u64>,
) -> Result<LossOutcome, ModelError> {
    let mut session = EncodeSession::new(model, site.tree.len(), Some(site.hole));
    let wants_noise =
        model.hyper.dropout_transformer > 0.0 || model.hyper.dropout_recurrent > 0.0;
    if wants_noise {
        if let Some(seed) = noise_seed {
            session.noise = Some(crate::rng::Rng::new(seed));
        }
    }
    let replay = replay_gold(&mut session, site, gold, caps)?;
    let n = replay.decision_count().max(1);
    let sum = session.tape.sum_scaled(&replay.step_vars, T::from_f64(-1.0));
    let loss_var = session.tape.scale(sum, T::from_f64(1.0 / n as f64));
    let loss = session.tape.scalar(loss_var).to_f64();
    if let Some((grads, scale)) = grads {
        // seed with n * scale so gradients correspond to the *sum* of
        // negative log-probs times `scale`
        session
            .tape
            .backward(loss_var, T::from_f64(n as f64 * scale), &model.params, grads);
    }
    Ok(LossOutcome { loss, decisions: replay.decision_count(), total_log_prob: replay.total_log_prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::NodeKind;
    use crate::minilang::{parse, parse_expression};
    use crate::model::hyper::Hyperparams;
    use crate::model::vocab::{count_subtokens, Vocab};

    fn setup(src: &str, hole_expr: &str) -> (SlmModel<f64>, CompletionSite, Tree) {
        let unit = parse(src).unwrap();
        let method = &unit.methods[0];
        let counts = count_subtokens(std::slice::from_ref(method));
        let vocab = Vocab::build(&counts, 16);
        let mut hyper = Hyperparams::micro();
        hyper.vocab_size = 16;
        let model = SlmModel::new(hyper, vocab, 5).unwrap();
        let gold = parse_expression(hole_expr).unwrap();
        // carve the hole at the subtree that matches hole_expr
        let ctx = method.clone();
        let target = (0..ctx.len())
            .find(|&i| {
                ctx.kind(i).is_expression() && {
                    let sub = ctx.subtree(i);
                    structurally_equal(&sub, &gold)
                }
            })
            .expect("gold occurs in source");
        let keep: Tree = ctx.subtree(target);
        let mut pruned = Tree::new(ctx.kind(Tree::ROOT), None);
        rebuild_with_hole(&ctx, Tree::ROOT, target, &mut pruned, Tree::ROOT);
        let site = CompletionSite::prepare(&pruned).unwrap();
        (model, site, keep)
    }

    fn rebuild_with_hole(src: &Tree, node: NodeId, hole_at: NodeId, dst: &mut Tree, dnode: NodeId) {
        for &c in src.children(node) {
            if c == hole_at {
                dst.add_child(dnode, NodeKind::Hole, None);
            } else {
                let n = dst.add_child(dnode, src.kind(c), src.value(c).map(String::from));
                rebuild_with_hole(src, c, hole_at, dst, n);
            }
        }
    }

    const SRC: &str = "fn check(value) {\n  if (value > 1) {\n    return value;\n  }\n  return 0;\n}";

    #[test]
    fn replay_scores_finite_negative() {
        let (model, site, gold) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let score = teacher_forced_score(&model, &site, &gold, &caps).unwrap();
        assert!(score.is_finite());
        assert!(score < 0.0);
    }

    #[test]
    fn score_is_deterministic() {
        let (model, site, gold) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let a = teacher_forced_score(&model, &site, &gold, &caps).unwrap();
        let b = teacher_forced_score(&model, &site, &gold, &caps).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stepwise_sum_matches_loss_identity() {
        let (model, site, gold) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let out = example_loss(&model, &site, &gold, &caps, None).unwrap();
        let score = teacher_forced_score(&model, &site, &gold, &caps).unwrap();
        let recombined = -out.loss * out.decisions as f64;
        assert!((recombined - score).abs() < 1e-9, "{recombined} vs {score}");
        assert!((out.total_log_prob - score).abs() < 1e-12);
    }

    #[test]
    fn certain_decisions_contribute_zero_loss() {
        // With node decisions restricted to a single kind, the node step is
        // a one-candidate softmax (p = 1, log p = 0); likewise a forced
        // terminator. Certain decisions add exactly nothing to the loss.
        let (model, site, _gold) = setup(SRC, "value > 1");
        let mut caps = GenerationCaps::from_hyper(&model.hyper);
        caps.allowed_kinds = Some(vec![NodeKind::Int]);
        caps.max_subtokens = 1;
        let gold = Tree::new(NodeKind::Int, Some("7".into()));
        let mut session = EncodeSession::new(&model, site.tree.len(), Some(site.hole));
        let replay = replay_gold(&mut session, &site, &gold, &caps).unwrap();
        // decisions: Kind(INT) forced, Sub("7") free, EOS forced
        assert_eq!(replay.decision_count(), 3);
        assert_eq!(replay.step_log_probs[0], 0.0);
        assert_eq!(replay.step_log_probs[2], 0.0);
        assert!(replay.step_log_probs[1] < 0.0);
    }

    #[test]
    fn gold_with_sentinel_rejected() {
        let (model, site, _) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let bad = Tree::new(NodeKind::Hole, None);
        assert!(matches!(
            teacher_forced_score(&model, &site, &bad, &caps),
            Err(ModelError::InvalidGold(_))
        ));
    }

    #[test]
    fn whole_token_route_taken_when_available() {
        let (model, site, _) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        // gold NAME("value"): "value" appears in context, so the replay is
        // exactly two decisions: Kind(NAME), Tok("value")
        let gold = Tree::new(NodeKind::Name, Some("value".into()));
        let mut session = EncodeSession::new(&model, site.tree.len(), Some(site.hole));
        let replay = replay_gold(&mut session, &site, &gold, &caps).unwrap();
        assert_eq!(replay.decision_count(), 2);
    }

    #[test]
    fn oov_subtoken_becomes_unk() {
        let (model, site, _) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let gold = Tree::new(NodeKind::Name, Some("zkfcUgi".into()));
        let mut session = EncodeSession::new(&model, site.tree.len(), Some(site.hole));
        let replay = replay_gold(&mut session, &site, &gold, &caps).unwrap();
        // Kind + two unknown subtokens + EOS
        assert_eq!(replay.decision_count(), 4);
        let produced = replay.state.stripped_target().unwrap();
        assert_eq!(produced.value(Tree::ROOT), Some("<unk><unk>"));
    }

    #[test]
    fn gradients_flow_to_every_head_family() {
        let (model, site, gold) = setup(SRC, "value > 1");
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let mut grads = GradStore::zeros_like(&model.params);
        example_loss(&model, &site, &gold, &caps, Some((&mut grads, 1.0))).unwrap();
        let nonzero = |name: &str| {
            let id = model.params.by_name(name).unwrap();
            grads.get(id).iter().any(|&g| g != 0.0)
        };
        assert!(nonzero("embed.subtoken"));
        assert!(nonzero("embed.type"));
        assert!(nonzero("embed.index"));
        assert!(nonzero("lstm.0.w_ih"));
        assert!(nonzero("tx.0.wq"));
        assert!(nonzero("agg.w_r"));
        assert!(nonzero("agg.w_g"));
        assert!(nonzero("head.u_type"));
        assert!(nonzero("head.w_c"));
    }
}
