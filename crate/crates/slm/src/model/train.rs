//! Training loop: decision-count bucketing, Adam with the stepped learning
//! rate schedule, deterministic batch order, optional accuracy-based early
//! stop.

use super::loss::{decision_count_upper_bound, example_loss_seeded};
use super::{CompletionSite, GenerationCaps, ModelError, SlmModel};
use crate::dataset::Example;
use crate::nn::{GradStore, AdamState};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate training accuracy every n epochs (beam width 5); None skips.
    pub eval_every: Option<usize>,
    /// Stop once training acc@1 reaches this level.
    pub target_train_acc: Option<f64>,
    pub beam_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            seed: 1,
            eval_every: None,
            target_train_acc: None,
            beam_width: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
    pub train_acc: Option<f64>,
    pub dev_acc: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
    pub reached_target: bool,
}

struct Prepared {
    site: CompletionSite,
    gold: crate::ast::Tree,
    decisions: usize,
}

/// Train in place. Deterministic for a fixed seed: batch composition, batch
/// order and every reduction are fixed.
pub fn train(
    model: &mut SlmModel<f32>,
    train_set: &[Example],
    dev_set: &[Example],
    cfg: &TrainConfig,
    progress: Option<&mut dyn FnMut(&EpochLog)>,
) -> Result<TrainReport, ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let caps = GenerationCaps::from_hyper(&model.hyper);
    let mut prepared = Vec::with_capacity(train_set.len());
    for e in train_set {
        let site = CompletionSite::prepare(&e.context)?;
        let decisions = decision_count_upper_bound(&e.gold);
        prepared.push(Prepared { site, gold: e.gold.clone(), decisions });
    }
    // Bucket by decision count so batches hold comparably sized targets.
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.sort_by_key(|&i| (prepared[i].decisions, i));
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_targets = 0usize;
    for &i in &order {
        current.push(i);
        current_targets += prepared[i].decisions;
        if current_targets >= model.hyper.batch_targets {
            batches.push(std::mem::take(&mut current));
            current_targets = 0;
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }

    let mut adam = AdamState::new(&model.params, model.hyper.adam.clone());
    let mut grads = GradStore::zeros_like(&model.params);
    let mut rng = Rng::new(cfg.seed ^ 0x7ea1);
    let mut report = TrainReport::default();
    let mut progress = progress;

    for epoch in 0..cfg.epochs {
        let mut batch_order: Vec<usize> = (0..batches.len()).collect();
        rng.shuffle(&mut batch_order);
        let mut loss_sum = 0.0;
        let mut decision_sum = 0usize;
        for &b in &batch_order {
            let batch = &batches[b];
            let total: usize = batch.iter().map(|&i| prepared[i].decisions).sum();
            let scale = 1.0 / total.max(1) as f64;
            grads.zero();
            for &i in batch {
                let p = &prepared[i];
                let noise_seed = cfg.seed ^ (report.steps << 20) ^ i as u64;
                let out = example_loss_seeded(
                    model,
                    &p.site,
                    &p.gold,
                    &caps,
                    Some((&mut grads, scale)),
                    Some(noise_seed),
                )?;
                loss_sum += out.loss * out.decisions as f64;
                decision_sum += out.decisions;
            }
            adam.step(&mut model.params, &grads)
                .map_err(|e| ModelError::InvalidGold(format!("optimizer: {e}")))?;
            report.steps += 1;
        }
        let mut log = EpochLog {
            epoch,
            mean_loss: loss_sum / decision_sum.max(1) as f64,
            learning_rate: adam.effective_lr(),
            train_acc: None,
            dev_acc: None,
        };
        let due = cfg.eval_every.is_some_and(|n| n > 0 && (epoch + 1) % n == 0);
        if due {
            log.train_acc = Some(accuracy_at_1(model, train_set, cfg.beam_width)?);
            if !dev_set.is_empty() {
                log.dev_acc = Some(accuracy_at_1(model, dev_set, cfg.beam_width)?);
            }
        }
        if let Some(cb) = progress.as_deref_mut() {
            cb(&log);
        }
        let hit_target = match (cfg.target_train_acc, log.train_acc) {
            (Some(want), Some(got)) => got >= want,
            _ => false,
        };
        report.epochs.push(log);
        if hit_target {
            report.reached_target = true;
            break;
        }
    }
    Ok(report)
}

/// Beam acc@1 over a set of examples.
pub fn accuracy_at_1(
    model: &SlmModel<f32>,
    examples: &[Example],
    width: usize,
) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let caps = GenerationCaps::from_hyper(&model.hyper);
    let mut hits = 0usize;
    for e in examples {
        let site = CompletionSite::prepare(&e.context)?;
        let beam = crate::decoder::beam_search(model, &site, width, 1, &caps)
            .map_err(|err| ModelError::InvalidGold(format!("{err}")))?;
        if let Some((tree, _)) = beam.results.first() {
            if crate::ast::structurally_equal(tree, &e.gold) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}
