//! Training hyperparameters and their `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! dim = 200
//! gamma = 12.0
//! ```
//!
//! Keys not present in the file keep their [`TrainConfig::default`] values;
//! unknown keys are an error.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub batch_size: usize,
    pub neg_per_pos: usize,
    pub learning_rate: f32,
    pub steps: usize,
    pub gamma: f32,
    pub adversarial_temperature: f32,
    pub regularization_coeff: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            batch_size: 1024,
            neg_per_pos: 256,
            learning_rate: 0.1,
            steps: 1000,
            gamma: 12.0,
            adversarial_temperature: 1.0,
            regularization_coeff: 0.0,
            seed: 0,
        }
    }
}

const KEYS: [&str; 9] = [
    "dim",
    "batch_size",
    "neg_per_pos",
    "learning_rate",
    "steps",
    "gamma",
    "adversarial_temperature",
    "regularization_coeff",
    "seed",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(KgError::Invalid(format!("train config: {what}")));
        if self.dim == 0 || self.batch_size == 0 {
            return bad("dim and batch_size must be positive");
        }
        if self.neg_per_pos == 0 {
            return bad("neg_per_pos must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.adversarial_temperature >= 0.0 && self.adversarial_temperature.is_finite()) {
            return bad("adversarial_temperature must be non-negative");
        }
        if !(self.regularization_coeff >= 0.0 && self.regularization_coeff.is_finite()) {
            return bad("regularization_coeff must be non-negative");
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| KgError::Parse {
                path: origin.to_owned(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| perr(format!("`{key}`: `{v}` is not a number")))
            };
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>()
                    .map_err(|_| perr(format!("`{key}`: `{v}` is not a non-negative integer")))
            };
            match key {
                "dim" => cfg.dim = int(value)? as usize,
                "batch_size" => cfg.batch_size = int(value)? as usize,
                "neg_per_pos" => cfg.neg_per_pos = int(value)? as usize,
                "learning_rate" => cfg.learning_rate = num(value)? as f32,
                "steps" => cfg.steps = int(value)? as usize,
                "gamma" => cfg.gamma = num(value)? as f32,
                "adversarial_temperature" => cfg.adversarial_temperature = num(value)? as f32,
                "regularization_coeff" => cfg.regularization_coeff = num(value)? as f32,
                "seed" => cfg.seed = int(value)?,
                // model family lives next to the hyperparameters in per-family files
                "family" => {}
                other => {
                    return Err(perr(format!(
                        "unknown key `{other}` (known: family, {})",
                        KEYS.join(", ")
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KgError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Canonical `key = value` rendering, one key per line in a fixed order.
    pub fn to_canonical(&self) -> String {
        format!(
            "dim = {}\nbatch_size = {}\nneg_per_pos = {}\nlearning_rate = {}\nsteps = {}\ngamma = {}\nadversarial_temperature = {}\nregularization_coeff = {}\nseed = {}\n",
            self.dim,
            self.batch_size,
            self.neg_per_pos,
            self.learning_rate,
            self.steps,
            self.gamma,
            self.adversarial_temperature,
            self.regularization_coeff,
            self.seed
        )
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_canonical().as_bytes()))
    }

    /// Family named by a `family = ...` line, if any.
    pub fn family_in(text: &str) -> Option<String> {
        text.lines().find_map(|l| {
            let l = l.split('#').next()?.trim();
            let (k, v) = l.split_once('=')?;
            (k.trim() == "family").then(|| v.trim().to_owned())
        })
    }
}
