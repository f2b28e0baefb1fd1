//! Model hyperparameters and the named presets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::AdamConfig;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum HyperError {
    #[error("invalid hyperparameters: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Path-encoding width; also the subtoken embedding width.
    pub d_model: usize,
    /// Type-embedding width; index embeddings get `d_model - d_type`.
    pub d_type: usize,
    /// Stacked LSTM layers; each layer has `d_model / lstm_layers` units and
    /// the final hidden states of all layers are concatenated.
    pub lstm_layers: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Subtoken vocabulary size, including the reserved PAD/UNK/EOS entries.
    pub vocab_size: usize,
    /// Child-index embedding rows; larger indices clamp to the last row.
    pub k_idx: usize,
    /// Positional subtoken-copy scorers; generation forces the token
    /// terminator after this many subtokens.
    pub p_max: usize,
    pub copy_enabled: bool,
    pub root_attention: bool,
    pub dropout_transformer: f64,
    pub dropout_recurrent: f64,
    /// Batch boundary: examples are grouped until they carry about this many
    /// prediction targets.
    pub batch_targets: usize,
    /// Decision budget per generated subtree.
    pub budget: usize,
    pub adam: AdamConfig,
}

impl Hyperparams {
    /// Desk-scale default: trains in seconds on one core.
    pub fn desk() -> Hyperparams {
        Hyperparams {
            d_model: 64,
            d_type: 48,
            lstm_layers: 1,
            transformer_layers: 2,
            heads: 2,
            ff_dim: 128,
            vocab_size: 200,
            k_idx: 32,
            p_max: 8,
            copy_enabled: true,
            root_attention: true,
            dropout_transformer: 0.0,
            dropout_recurrent: 0.0,
            batch_targets: 64,
            budget: 64,
            adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        }
    }

    /// Full-size configuration: 512-wide embeddings, two 256-unit LSTM
    /// layers, four transformer layers with eight heads, vocabulary of
    /// 1000, learning rate 1e-4 decayed by 0.95 every 20k steps, dropout
    /// 0.25 (transformer) / 0.5 (recurrent), about 512 targets per batch.
    pub fn paper() -> Hyperparams {
        Hyperparams {
            d_model: 512,
            d_type: 384,
            lstm_layers: 2,
            transformer_layers: 4,
            heads: 8,
            ff_dim: 2048,
            vocab_size: 1000,
            k_idx: 32,
            p_max: 8,
            copy_enabled: true,
            root_attention: true,
            dropout_transformer: 0.25,
            dropout_recurrent: 0.5,
            batch_targets: 512,
            budget: 64,
            adam: AdamConfig { lr: 1e-4, ..AdamConfig::default() },
        }
    }

    /// Tiny model for gradient checking: every head and every parameter
    /// family present, few coordinates.
    pub fn micro() -> Hyperparams {
        Hyperparams {
            d_model: 4,
            d_type: 2,
            lstm_layers: 1,
            transformer_layers: 1,
            heads: 2,
            ff_dim: 8,
            vocab_size: 12,
            k_idx: 5,
            p_max: 2,
            copy_enabled: true,
            root_attention: true,
            dropout_transformer: 0.0,
            dropout_recurrent: 0.0,
            batch_targets: 8,
            budget: 48,
            adam: AdamConfig::default(),
        }
    }

    pub fn d_index(&self) -> usize {
        self.d_model - self.d_type
    }

    pub fn lstm_hidden(&self) -> usize {
        self.d_model / self.lstm_layers
    }

    pub fn validate(&self) -> Result<(), HyperError> {
        let fail = |m: String| Err(HyperError::Invalid(m));
        if self.vocab_size < 3 {
            return fail("vocab_size must be at least 3 (PAD, UNK, EOS)".into());
        }
        if self.d_type == 0 || self.d_type >= self.d_model {
            return fail(format!("d_type {} must lie strictly inside d_model {}", self.d_type, self.d_model));
        }
        if self.lstm_layers == 0 || !self.d_model.is_multiple_of(self.lstm_layers) {
            return fail(format!("lstm_layers {} must divide d_model {}", self.lstm_layers, self.d_model));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!("heads {} must divide d_model {}", self.heads, self.d_model));
        }
        if self.k_idx < 5 {
            return fail("k_idx must cover the grammar's fixed arities (>= 5)".into());
        }
        if self.p_max == 0 {
            return fail("p_max must be positive".into());
        }
        if self.budget == 0 {
            return fail("budget must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        Hyperparams::desk().validate().unwrap();
        Hyperparams::paper().validate().unwrap();
        Hyperparams::micro().validate().unwrap();
    }

    #[test]
    fn bad_configs_rejected() {
        let mut h = Hyperparams::desk();
        h.vocab_size = 2;
        assert!(h.validate().is_err());
        let mut h = Hyperparams::desk();
        h.heads = 3;
        assert!(h.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = serde_json::to_value(Hyperparams::desk()).unwrap();
        let mut obj = json.as_object().unwrap().clone();
        obj.insert("bogus".into(), serde_json::json!(1));
        let back: Result<Hyperparams, _> = serde_json::from_value(serde_json::Value::Object(obj));
        assert!(back.is_err());
    }
}
