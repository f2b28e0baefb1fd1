//! Whole-model gradient fidelity check on a micro configuration, in
//! 64-bit: reverse-mode gradients against central finite differences over
//! every parameter coordinate.

use super::loss::example_loss;
use super::vocab::{count_subtokens, Vocab};
use super::{CompletionSite, GenerationCaps, Hyperparams, ModelError, SlmModel};
use crate::ast::Tree;
use crate::minilang::parse;
use crate::nn::{grad_check, GradStore, NnError};

/// A fixture that drives every parameter family: node decisions at several
/// child indices, subtoken decisions with live copy sources, whole-token
/// and positional copies, and multi-path attention.
const CHECK_SRC: &str = "fn getValue(aVal, bxCount) {\n  let total = aVal + bxCount;\n  if (total > 1) {\n    return total;\n  }\n  return 0;\n}";

/// Gold target replacing `aVal + bxCount`: mixes copied whole tokens with
/// vocabulary subtokens.
const CHECK_GOLD: &str = "getValue(aVal, bxCount) + 2";

pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords: usize,
    pub loss: f64,
    /// Smallest |relu input| in the checked forward. Central differences
    /// need this to clear the probe step, or they straddle the kink.
    pub relu_margin: f64,
}

/// Build the micro model and fixture; returns (model, site, gold).
pub fn micro_fixture(seed: u64) -> Result<(SlmModel<f64>, CompletionSite, Tree), ModelError> {
    let unit = parse(CHECK_SRC).map_err(|e| ModelError::InvalidGold(format!("{e}")))?;
    let method = &unit.methods[0];
    let counts = count_subtokens(std::slice::from_ref(method));
    let hyper = Hyperparams::micro();
    let vocab = Vocab::build(&counts, hyper.vocab_size);
    let model = SlmModel::new(hyper, vocab, seed)?;
    let gold = crate::minilang::parse_expression(CHECK_GOLD)
        .map_err(|e| ModelError::InvalidGold(format!("{e}")))?;
    // carve the hole at `aVal + bxCount`
    let target = (0..method.len())
        .find(|&i| {
            method.kind(i) == crate::ast::NodeKind::Plus
                && crate::minilang::print_expression(&method.subtree(i))
                    .is_ok_and(|s| s == "aVal + bxCount")
        })
        .expect("fixture contains the target");
    let mut context = Tree::new(method.kind(Tree::ROOT), None);
    carve(method, Tree::ROOT, target, &mut context, Tree::ROOT);
    let site = CompletionSite::prepare(&context)?;
    Ok((model, site, gold))
}

fn carve(src: &Tree, node: usize, target: usize, dst: &mut Tree, dnode: usize) {
    for &c in src.children(node) {
        if c == target {
            dst.add_child(dnode, crate::ast::NodeKind::Hole, None);
        } else {
            let n = dst.add_child(dnode, src.kind(c), src.value(c).map(String::from));
            carve(src, c, target, dst, n);
        }
    }
}

/// The default fixture seed: its forward keeps every relu input at least
/// an order of magnitude clear of the finite-difference step.
pub const CHECK_SEED: u64 = 9;
pub const CHECK_EPS: f64 = 1e-5;

/// Run the check. Fails closed on non-finite losses; `eps` is the central
/// difference step.
pub fn gradcheck_micro(seed: u64, eps: f64) -> Result<GradCheckReport, ModelError> {
    let (model, site, gold) = micro_fixture(seed)?;
    let caps = GenerationCaps::from_hyper(&model.hyper);
    let relu_margin = {
        let mut session = super::EncodeSession::new(&model, site.tree.len(), Some(site.hole));
        super::loss::replay_gold(&mut session, &site, &gold, &caps)?;
        session.tape.min_relu_margin()
    };
    let mut grads = GradStore::zeros_like(&model.params);
    let out = example_loss(&model, &site, &gold, &caps, None)?;
    // check against the per-decision mean: its magnitude keeps the central
    // differences far from the f64 roundoff floor
    let scale = 1.0 / out.decisions as f64;
    example_loss(&model, &site, &gold, &caps, Some((&mut grads, scale)))?;
    let coords = model.params.total_values();
    let shell = model.clone();
    let mut params = model.params.clone();
    let max_rel_err = grad_check(
        &mut params,
        &grads,
        |p| {
            let mut probe = shell.clone();
            probe.params = p.clone();
            let out = example_loss(&probe, &site, &gold, &caps, None).expect("loss evaluates");
            out.loss
        },
        eps,
        None,
    )
    .map_err(|e: NnError| ModelError::InvalidGold(format!("gradient check: {e}")))?;
    Ok(GradCheckReport { max_rel_err, coords, loss: out.loss, relu_margin })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_exercises_copy_and_multiple_indices() {
        let (model, site, gold) = micro_fixture(2).unwrap();
        let caps = GenerationCaps::from_hyper(&model.hyper);
        let mut session = super::super::EncodeSession::new(&model, site.tree.len(), Some(site.hole));
        let replay = super::super::loss::replay_gold(&mut session, &site, &gold, &caps).unwrap();
        // whole-token copies keep the replay compact but present
        assert!(replay.decision_count() >= 10);
    }

    #[test]
    fn micro_gradients_match_finite_differences() {
        let report = gradcheck_micro(CHECK_SEED, CHECK_EPS).unwrap();
        // precondition: probe steps never straddle a relu kink
        assert!(report.relu_margin > 10.0 * CHECK_EPS, "margin {}", report.relu_margin);
        assert!(
            report.max_rel_err < 1e-6,
            "max relative error {} over {} coordinates",
            report.max_rel_err,
            report.coords
        );
    }
}
