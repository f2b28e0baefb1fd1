//! Uni-directional LSTM stack over the tape.

use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::{NnError, ParamId, ParamStore, Tensor};
use crate::rng::Rng;

/// Parameter handles for one stacked LSTM. Gate layout is
/// [input; forget; candidate; output]; the forget-gate bias starts at one.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
}

impl LstmStack {
    pub fn init<T: Real>(
        params: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> LstmStack {
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let in_dim = if l == 0 { input } else { hidden };
            let w_ih = params.add(&format!("{prefix}.{l}.w_ih"), Tensor::xavier(4 * hidden, in_dim, rng));
            let w_hh = params.add(&format!("{prefix}.{l}.w_hh"), Tensor::xavier(4 * hidden, hidden, rng));
            let mut bias = Tensor::zeros(&[4 * hidden]);
            for k in 0..hidden {
                bias.data[hidden + k] = T::ONE; // forget gate
            }
            let b = params.add(&format!("{prefix}.{l}.b"), bias);
            out.push(LstmLayer { w_ih, w_hh, b });
        }
        LstmStack { layers: out, hidden }
    }

    /// Advance the whole stack by one input element. `prev` holds one packed
    /// [h; c] var per layer, or `None` at the start of a sequence.
    pub fn step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        x: Var,
        prev: Option<&[Var]>,
    ) -> Vec<Var> {
        let mut states = Vec::with_capacity(self.layers.len());
        let mut inp = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let hc_prev = prev.map(|p| p[l]);
            let hc = tape.lstm_cell(params, layer.w_ih, layer.w_hh, layer.b, inp, hc_prev, self.hidden);
            inp = tape.slice(hc, 0, self.hidden); // h feeds the next layer
            states.push(hc);
        }
        states
    }

    /// Hidden state of the top layer for a packed state vector.
    pub fn top_hidden<T: Real>(&self, tape: &mut Tape<T>, states: &[Var]) -> Var {
        tape.slice(states[states.len() - 1], 0, self.hidden)
    }

    /// Concatenation of every layer's final hidden state. Equals the
    /// top-layer state for single-layer stacks; multi-layer presets use the
    /// concatenation so the encoding dimension stays `layers * hidden`.
    pub fn concat_hidden<T: Real>(&self, tape: &mut Tape<T>, states: &[Var]) -> Var {
        if states.len() == 1 {
            return self.top_hidden(tape, states);
        }
        let hs: Vec<Var> = states.iter().map(|&s| tape.slice(s, 0, self.hidden)).collect();
        tape.concat(&hs)
    }
}

/// Run a stack over a full sequence and return the top layer's final hidden
/// state.
pub fn lstm_forward<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    stack: &LstmStack,
    inputs: &[Var],
) -> Result<Var, NnError> {
    if inputs.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let mut states: Option<Vec<Var>> = None;
    for &x in inputs {
        states = Some(stack.step(tape, params, x, states.as_deref()));
    }
    Ok(stack.top_hidden(tape, &states.expect("nonempty")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_stack(params: &mut ParamStore<f64>, input: usize, hidden: usize) -> LstmStack {
        let w_ih = params.add("l.w_ih", Tensor::zeros(&[4 * hidden, input]));
        let w_hh = params.add("l.w_hh", Tensor::zeros(&[4 * hidden, hidden]));
        let b = params.add("l.b", Tensor::zeros(&[4 * hidden]));
        LstmStack { layers: vec![LstmLayer { w_ih, w_hh, b }], hidden }
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let mut params = ParamStore::<f64>::new();
        let stack = zero_stack(&mut params, 3, 4);
        let mut tape = Tape::new();
        let xs: Vec<Var> = (0..5)
            .map(|i| tape.input_row(vec![i as f64, -1.0, 2.5]))
            .collect();
        let h = lstm_forward(&mut tape, &params, &stack, &xs).unwrap();
        assert!(tape.value(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut params = ParamStore::<f64>::new();
        let stack = zero_stack(&mut params, 3, 4);
        let mut tape = Tape::new();
        assert_eq!(
            lstm_forward(&mut tape, &params, &stack, &[]).unwrap_err(),
            NnError::EmptySequence
        );
    }

    #[test]
    fn length_one_is_single_cell_step() {
        let mut rng = Rng::new(8);
        let mut params = ParamStore::<f64>::new();
        let stack = LstmStack::init(&mut params, "l", 3, 4, 1, &mut rng);
        let mut tape = Tape::new();
        let x = tape.input_row(vec![0.3, -0.7, 1.1]);
        let seq = lstm_forward(&mut tape, &params, &stack, &[x]).unwrap();
        let mut tape2 = Tape::new();
        let x2 = tape2.input_row(vec![0.3, -0.7, 1.1]);
        let states = stack.step(&mut tape2, &params, x2, None);
        let single = stack.top_hidden(&mut tape2, &states);
        assert_eq!(tape.value(seq), tape2.value(single));
    }

    /// Scalar-loop oracle: the standard recurrence written independently,
    /// one coordinate at a time.
    fn oracle_lstm(
        params: &ParamStore<f64>,
        stack: &LstmStack,
        inputs: &[Vec<f64>],
    ) -> Vec<f64> {
        let hd = stack.hidden;
        let mut layer_inputs: Vec<Vec<f64>> = inputs.to_vec();
        let mut top_h = vec![0.0; hd];
        for layer in &stack.layers {
            let wih = params.get(layer.w_ih);
            let whh = params.get(layer.w_hh);
            let b = params.get(layer.b);
            let inp = wih.shape[1];
            let mut h = vec![0.0; hd];
            let mut c = vec![0.0; hd];
            let mut outputs = Vec::new();
            for x in &layer_inputs {
                let mut new_h = vec![0.0; hd];
                let mut new_c = vec![0.0; hd];
                for k in 0..hd {
                    let gate = |g: usize| {
                        let row = g * hd + k;
                        let mut acc = b.data[row];
                        for (j, xv) in x.iter().enumerate().take(inp) {
                            acc += wih.data[row * inp + j] * xv;
                        }
                        for (j, hv) in h.iter().enumerate() {
                            acc += whh.data[row * hd + j] * hv;
                        }
                        acc
                    };
                    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
                    let i = sig(gate(0));
                    let f = sig(gate(1));
                    let g = gate(2).tanh();
                    let o = sig(gate(3));
                    new_c[k] = f * c[k] + i * g;
                    new_h[k] = o * new_c[k].tanh();
                }
                h = new_h;
                c = new_c;
                outputs.push(h.clone());
            }
            layer_inputs = outputs;
            top_h = h;
        }
        top_h
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = Rng::new(77);
        let mut params = ParamStore::<f64>::new();
        let stack = LstmStack::init(&mut params, "l", 3, 4, 2, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let mut tape = Tape::new();
        let xs: Vec<Var> = inputs.iter().map(|v| tape.input_row(v.clone())).collect();
        let h = lstm_forward(&mut tape, &params, &stack, &xs).unwrap();
        let expect = oracle_lstm(&params, &stack, &inputs);
        for (a, b) in tape.value(h).iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
