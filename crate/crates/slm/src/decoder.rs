//! Node-by-node beam search over the decision process, plus teacher-forced
//! scoring re-exported from the model.
//!
//! Scores are raw log-probability sums (no length normalization), so a
//! hypothesis's score only falls as it grows; the search can stop as soon
//! as the k-th finished score dominates every active hypothesis.

use thiserror::Error;

use crate::ast::Tree;
use crate::model::{
    decisions::{eval_step, GenState},
    CompletionSite, EncodeSession, GenerationCaps, ModelError, PathCache, SlmModel,
};
use crate::nn::Real;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A partial generation owned by the beam.
#[derive(Clone)]
pub struct Hypothesis {
    pub state: GenState,
    pub score: f64,
    /// Path-encoding cache entries private to this hypothesis.
    pub cache: PathCache,
    /// Creation order, the deterministic tie-breaker.
    pub order: u64,
}

/// Completed beam results plus diagnostics.
#[derive(Clone, Debug, Default)]
pub struct BeamOutcome {
    /// (plain target subtree, log-probability), best first.
    pub results: Vec<(Tree, f64)>,
    pub steps: usize,
    pub hypotheses_expanded: usize,
    pub died_on_budget: usize,
    /// Set when no hypothesis completed within the budget.
    pub diagnostic: Option<String>,
}

/// Expand one hypothesis into scored successors, one per candidate
/// decision at its current slot.
pub fn expand<T: Real>(
    session: &mut EncodeSession<'_, T>,
    hyp: &Hypothesis,
    next_order: &mut u64,
) -> Result<Vec<(Hypothesis, f64)>, DecodeError> {
    let mut overlay = hyp.cache.clone();
    let eval = eval_step(session, &hyp.state, &mut overlay)?;
    let mut out = Vec::with_capacity(eval.candidates.len());
    for (i, decision) in eval.candidates.iter().enumerate() {
        let delta = eval.log_probs[i];
        let mut state = hyp.state.clone();
        state.apply(decision);
        let order = *next_order;
        *next_order += 1;
        out.push((
            Hypothesis { state, score: hyp.score + delta, cache: overlay.clone(), order },
            delta,
        ));
    }
    Ok(out)
}

/// Beam search for the `k` best completions of the hole.
pub fn beam_search<T: Real>(
    model: &SlmModel<T>,
    site: &CompletionSite,
    width: usize,
    k: usize,
    caps: &GenerationCaps,
) -> Result<BeamOutcome, DecodeError> {
    assert!(width >= k && k >= 1, "need width >= k >= 1");
    let mut session = EncodeSession::new(model, site.tree.len(), Some(site.hole));
    let mut next_order: u64 = 1;
    let mut active = vec![Hypothesis {
        state: GenState::new(site, caps.clone()),
        score: 0.0,
        cache: PathCache::new(),
        order: 0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut outcome = BeamOutcome::default();

    while !active.is_empty() {
        outcome.steps += 1;
        let mut pool: Vec<Hypothesis> = Vec::new();
        for hyp in &active {
            outcome.hypotheses_expanded += 1;
            for (succ, _) in expand(&mut session, hyp, &mut next_order)? {
                pool.push(succ);
            }
        }
        sort_hypotheses(&mut pool);
        pool.truncate(width);
        active = Vec::new();
        for hyp in pool {
            if hyp.state.complete() {
                finished.push(hyp);
            } else if hyp.state.budget_exhausted() {
                outcome.died_on_budget += 1;
            } else {
                active.push(hyp);
            }
        }
        // Raw log-prob sums only fall; once k finished hypotheses dominate
        // the best active score, nothing better can complete.
        if finished.len() >= k {
            sort_hypotheses(&mut finished);
            let kth = finished[k - 1].score;
            if active.iter().all(|h| h.score <= kth) {
                break;
            }
        }
    }
    sort_hypotheses(&mut finished);
    let mut seen: Vec<Tree> = Vec::new();
    for hyp in &finished {
        let tree = hyp
            .state
            .stripped_target()
            .map_err(DecodeError::Model)?;
        if seen.iter().any(|t| crate::ast::structurally_equal(t, &tree)) {
            continue;
        }
        seen.push(tree.clone());
        outcome.results.push((tree, hyp.score));
        if outcome.results.len() == k {
            break;
        }
    }
    if outcome.results.is_empty() {
        outcome.diagnostic = Some(format!(
            "no hypothesis completed within the budget of {} decisions ({} died)",
            caps.budget, outcome.died_on_budget
        ));
    }
    Ok(outcome)
}

fn sort_hypotheses(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.order.cmp(&b.order))
    });
}

/// Teacher-forced chain-rule score of an explicit target.
pub fn score_tree<T: Real>(
    model: &SlmModel<T>,
    site: &CompletionSite,
    target: &Tree,
    caps: &GenerationCaps,
) -> Result<f64, DecodeError> {
    Ok(crate::model::teacher_forced_score(model, site, target, caps)?)
}
