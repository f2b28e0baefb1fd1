//! End-to-end evaluation: beam-decode a set of examples and compute every
//! metric at the requested cutoffs.

use crate::dataset::Example;
use crate::decoder::{beam_search, DecodeError};
use crate::metrics::EvalRecord;
use crate::model::{CompletionSite, GenerationCaps, SlmModel};

/// Decode each example with the given beam and collect ranked candidates.
pub fn decode_examples(
    model: &SlmModel<f32>,
    examples: &[Example],
    width: usize,
    k: usize,
) -> Result<Vec<EvalRecord>, DecodeError> {
    let caps = GenerationCaps::from_hyper(&model.hyper);
    let mut records = Vec::with_capacity(examples.len());
    for e in examples {
        let site = CompletionSite::prepare(&e.context)?;
        let beam = beam_search(model, &site, width, k, &caps)?;
        records.push(EvalRecord {
            example_id: e.id.clone(),
            candidates: beam.results.into_iter().map(|(t, _)| t).collect(),
            gold: e.gold.clone(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::extract_examples;
    use crate::metrics;
    use crate::minilang::parse;
    use crate::model::vocab::{count_subtokens, Vocab};
    use crate::model::Hyperparams;

    #[test]
    fn random_model_produces_full_records() {
        let src = "fn compute(aVal) {\n  return aVal + 2;\n}";
        let unit = parse(src).unwrap();
        let (examples, _) = extract_examples(&unit.methods).unwrap();
        let counts = count_subtokens(&unit.methods);
        let vocab = Vocab::build(&counts, 16);
        let mut hyper = Hyperparams::micro();
        hyper.vocab_size = 16;
        let model: SlmModel<f32> = SlmModel::new(hyper, vocab, 33).unwrap();
        let records = decode_examples(&model, &examples, 3, 3).unwrap();
        assert_eq!(records.len(), examples.len());
        let report = metrics::eval_report(&records, &[1, 5]).unwrap();
        assert!(report["n"].as_u64().unwrap() as usize == examples.len());
    }
}
