//! Transformer encoder layers over an unordered set of vectors. No
//! positional embeddings: the inputs form a set, and the layers are
//! permutation-equivariant. Post-norm residual arrangement.

use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub ff1_w: ParamId,
    pub ff1_b: ParamId,
    pub ff2_w: ParamId,
    pub ff2_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    pub layers: Vec<TransformerLayer>,
    pub heads: usize,
    pub d_model: usize,
}

impl TransformerEncoder {
    pub fn init<T: Real>(
        params: &mut ParamStore<T>,
        prefix: &str,
        d_model: usize,
        ff_dim: usize,
        layers: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> TransformerEncoder {
        assert!(d_model.is_multiple_of(heads), "heads must divide d_model");
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let p = |params: &mut ParamStore<T>, name: &str, t: Tensor<T>| {
                params.add(&format!("{prefix}.{l}.{name}"), t)
            };
            let ones = Tensor { shape: vec![d_model], data: vec![T::ONE; d_model] };
            out.push(TransformerLayer {
                wq: p(params, "wq", Tensor::xavier(d_model, d_model, rng)),
                bq: p(params, "bq", Tensor::zeros(&[d_model])),
                wk: p(params, "wk", Tensor::xavier(d_model, d_model, rng)),
                bk: p(params, "bk", Tensor::zeros(&[d_model])),
                wv: p(params, "wv", Tensor::xavier(d_model, d_model, rng)),
                bv: p(params, "bv", Tensor::zeros(&[d_model])),
                wo: p(params, "wo", Tensor::xavier(d_model, d_model, rng)),
                bo: p(params, "bo", Tensor::zeros(&[d_model])),
                ln1_g: p(params, "ln1.g", ones.clone()),
                ln1_b: p(params, "ln1.b", Tensor::zeros(&[d_model])),
                ff1_w: p(params, "ff1.w", Tensor::xavier(ff_dim, d_model, rng)),
                ff1_b: p(params, "ff1.b", Tensor::zeros(&[ff_dim])),
                ff2_w: p(params, "ff2.w", Tensor::xavier(d_model, ff_dim, rng)),
                ff2_b: p(params, "ff2.b", Tensor::zeros(&[d_model])),
                ln2_g: p(params, "ln2.g", ones),
                ln2_b: p(params, "ln2.b", Tensor::zeros(&[d_model])),
            });
        }
        TransformerEncoder { layers: out, heads, d_model }
    }

    /// Contextualize an n x d set of vectors. `dropout` applies inverted
    /// dropout to sublayer outputs when a rate and generator are given.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        x: Var,
        dropout: Option<(f64, &mut Rng)>,
    ) -> Var {
        let mut rate_rng = dropout;
        let mut h = x;
        for layer in &self.layers {
            let attended = self.attention(tape, params, layer, h);
            let attended = apply_dropout(tape, attended, &mut rate_rng);
            let sum = tape.add(h, attended);
            let normed = tape.layer_norm_rows(params, sum, layer.ln1_g, layer.ln1_b);
            let ff = tape.linear_rows(params, layer.ff1_w, Some(layer.ff1_b), normed);
            let ff = tape.relu(ff);
            let ff = tape.linear_rows(params, layer.ff2_w, Some(layer.ff2_b), ff);
            let ff = apply_dropout(tape, ff, &mut rate_rng);
            let sum2 = tape.add(normed, ff);
            h = tape.layer_norm_rows(params, sum2, layer.ln2_g, layer.ln2_b);
        }
        h
    }

    fn attention<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        layer: &TransformerLayer,
        x: Var,
    ) -> Var {
        let dh = self.d_model / self.heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let q = tape.linear_rows(params, layer.wq, Some(layer.bq), x);
        let k = tape.linear_rows(params, layer.wk, Some(layer.bk), x);
        let v = tape.linear_rows(params, layer.wv, Some(layer.bv), x);
        let mut heads_out = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = tape.slice_cols(q, head * dh, dh);
            let kh = tape.slice_cols(k, head * dh, dh);
            let vh = tape.slice_cols(v, head * dh, dh);
            let scores = tape.matmul_bt(qh, kh);
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores);
            heads_out.push(tape.matmul(attn, vh));
        }
        let merged = tape.concat_cols(&heads_out);
        tape.linear_rows(params, layer.wo, Some(layer.bo), merged)
    }
}

fn apply_dropout<T: Real>(tape: &mut Tape<T>, x: Var, dropout: &mut Option<(f64, &mut Rng)>) -> Var {
    let Some((rate, rng)) = dropout else { return x };
    if *rate <= 0.0 {
        return x;
    }
    let (n, c) = tape.shape(x);
    let keep_scale = T::from_f64(1.0 / (1.0 - *rate));
    let keep: Vec<T> = (0..n * c)
        .map(|_| if rng.chance(*rate) { T::ZERO } else { keep_scale })
        .collect();
    tape.mask(x, keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_encoder(params: &mut ParamStore<f64>, rng: &mut Rng) -> TransformerEncoder {
        TransformerEncoder::init(params, "tx", 4, 8, 2, 2, rng)
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = Rng::new(4);
        let mut params = ParamStore::new();
        let enc = small_encoder(&mut params, &mut rng);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let mut tape = Tape::new();
        let x = tape.input(5, 4, rows.concat());
        let z = enc.forward(&mut tape, &params, x, None);
        let base = tape.value(z).to_vec();

        // permute rows 0..5 -> [3, 1, 4, 0, 2]
        let perm = [3usize, 1, 4, 0, 2];
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
        let mut tape2 = Tape::new();
        let x2 = tape2.input(5, 4, permuted);
        let z2 = enc.forward(&mut tape2, &params, x2, None);
        let out2 = tape2.value(z2);
        for (new_row, &old_row) in perm.iter().enumerate() {
            for k in 0..4 {
                let a = out2[new_row * 4 + k];
                let b = base[old_row * 4 + k];
                assert!((a - b).abs() < 1e-9, "row {new_row} col {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn singleton_attention_weight_is_one() {
        let mut rng = Rng::new(6);
        let mut params = ParamStore::new();
        let enc = small_encoder(&mut params, &mut rng);
        let mut tape = Tape::new();
        let x = tape.input(1, 4, vec![0.2, -0.4, 0.9, 0.1]);
        let _ = enc.forward(&mut tape, &params, x, None);
        // every softmax row in the tape is a singleton distribution == [1.0]
        assert!(tape.max_distribution_error() < 1e-12);
        assert!(tape.distribution_count() > 0);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = Rng::new(9);
        let mut params = ParamStore::new();
        let enc = small_encoder(&mut params, &mut rng);
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..6 * 4).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x = tape.input(6, 4, data);
        let _ = enc.forward(&mut tape, &params, x, None);
        assert!(tape.max_distribution_error() < 1e-6);
    }

    #[test]
    fn zero_dropout_is_identity() {
        let mut rng = Rng::new(10);
        let mut params = ParamStore::new();
        let enc = small_encoder(&mut params, &mut rng);
        let data: Vec<f64> = (0..3 * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut t1 = Tape::new();
        let x1 = t1.input(3, 4, data.clone());
        let z1 = enc.forward(&mut t1, &params, x1, None);
        let mut drop_rng = Rng::new(1);
        let mut t2 = Tape::new();
        let x2 = t2.input(3, 4, data);
        let z2 = enc.forward(&mut t2, &params, x2, Some((0.0, &mut drop_rng)));
        assert_eq!(t1.value(z1), t2.value(z2));
    }
}
