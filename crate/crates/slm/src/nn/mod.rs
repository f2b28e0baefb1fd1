//! From-scratch numeric layer set with reverse-mode gradients: a tape
//! engine, LSTM stack, transformer encoder, Adam, and a finite-difference
//! gradient checker. Generic over 32/64-bit scalars; 64-bit is used in
//! check mode.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod real;
pub mod tape;
pub mod tensor;
pub mod transformer;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use lstm::{lstm_forward, LstmStack};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::{GradStore, NnError, ParamId, ParamStore, Tensor};
pub use transformer::TransformerEncoder;
