//! Train/dev/test splitting at method granularity.

use super::{DatasetError, Example};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<SplitRatios, DatasetError> {
        let sum = train + dev + test;
        if (sum - 1.0).abs() > 1e-9 || train < 0.0 || dev < 0.0 || test < 0.0 {
            return Err(DatasetError::RatioMismatch(sum));
        }
        Ok(SplitRatios { train, dev, test })
    }
}

/// Split so that no method's examples straddle two splits.
pub fn split(
    examples: &[Example],
    ratios: SplitRatios,
    seed: u64,
) -> (Vec<Example>, Vec<Example>, Vec<Example>) {
    let mut method_ids: Vec<usize> = examples.iter().map(|e| e.method_id).collect();
    method_ids.sort_unstable();
    method_ids.dedup();
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut method_ids);
    let n = method_ids.len();
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_dev = (ratios.dev * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_dev = n_dev.min(n - n_train);
    let is_train: std::collections::HashSet<usize> = method_ids[..n_train].iter().copied().collect();
    let is_dev: std::collections::HashSet<usize> =
        method_ids[n_train..n_train + n_dev].iter().copied().collect();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for e in examples {
        if is_train.contains(&e.method_id) {
            train.push(e.clone());
        } else if is_dev.contains(&e.method_id) {
            dev.push(e.clone());
        } else {
            test.push(e.clone());
        }
    }
    (train, dev, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::extract_examples;
    use crate::dataset::synth::{gen_synthetic_corpus, CorpusSpec};
    use crate::minilang::parse;

    fn sample_examples() -> Vec<Example> {
        let spec = CorpusSpec { method_count: 30, seed: 5, ..CorpusSpec::default() };
        let text = gen_synthetic_corpus(&spec).unwrap();
        let unit = parse(&text).unwrap();
        extract_examples(&unit.methods).unwrap().0
    }

    #[test]
    fn all_in_train_when_ratio_one() {
        let examples = sample_examples();
        let (train, dev, test) = split(&examples, SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 7);
        assert_eq!(train.len(), examples.len());
        assert!(dev.is_empty() && test.is_empty());
    }

    #[test]
    fn method_ids_disjoint_across_splits() {
        let examples = sample_examples();
        let (train, dev, test) = split(&examples, SplitRatios::new(0.6, 0.2, 0.2).unwrap(), 7);
        let ids = |v: &[Example]| {
            v.iter().map(|e| e.method_id).collect::<std::collections::HashSet<_>>()
        };
        let (a, b, c) = (ids(&train), ids(&dev), ids(&test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(train.len() + dev.len() + test.len(), examples.len());
    }

    #[test]
    fn fixed_seed_reproducible() {
        let examples = sample_examples();
        let r = SplitRatios::new(0.6, 0.2, 0.2).unwrap();
        let a = split(&examples, r, 42);
        let b = split(&examples, r, 42);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(matches!(
            SplitRatios::new(0.5, 0.2, 0.2),
            Err(DatasetError::RatioMismatch(_))
        ));
    }
}
