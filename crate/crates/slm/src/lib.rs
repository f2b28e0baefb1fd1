//! Structural language modeling for code at desk scale.
//!
//! The crate models a program's AST as a product of per-node conditional
//! probabilities and completes a missing subtree by extending partial AST
//! paths node by node. It ships the full pipeline: a self-contained
//! mini-language with parser and printer, dataset extraction and synthesis,
//! a from-scratch neural core (LSTM path encoder, transformer aggregation,
//! syntactic copy mechanism) with reverse-mode gradients and a
//! finite-difference checker, beam-search tree decoding, and evaluation
//! metrics.

pub mod ast;
pub mod dataset;
pub mod decoder;
pub mod eval;
pub mod metrics;
pub mod minilang;
pub mod model;
pub mod nn;
pub mod paths;
pub mod rng;
