//! Run configuration: model and optimizer settings resolved from an
//! optional key=value file plus `--set` overrides (overrides win).

use std::path::Path;

use sbcnn_core::model::ModelConfig;
use sbcnn_core::train::TrainOptions;

/// A configuration key error; reported as a usage problem (exit 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainOptions::default(),
        }
    }
}

impl RunConfig {
    /// Loads the optional file, then applies `sets`, then the seed flag.
    pub fn resolve(
        file: Option<&Path>,
        sets: &[String],
        seed: Option<u64>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            for (lineno0, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| ConfigError(format!("line {}: expected key=value", lineno0 + 1)))?;
                cfg.apply(key.trim(), value.trim())?;
            }
        }
        for set in sets {
            let (key, value) = set
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("--set {set:?}: expected key=value")))?;
            cfg.apply(key.trim(), value.trim())?;
        }
        if let Some(seed) = seed {
            cfg.model.seed = seed;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| ConfigError(format!("{key}: bad value {value:?}: {e}")))
        }
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "d_w" => m.d_w = parse(key, value)?,
            "d_pos" => m.d_pos = parse(key, value)?,
            "d_dep" => m.d_dep = parse(key, value)?,
            "kernel_widths" => {
                m.kernel_widths = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "filters" => m.filters = parse(key, value)?,
            "hidden_dim" => m.hidden_dim = parse(key, value)?,
            "max_block_len" => m.max_block_len = parse(key, value)?,
            "max_entity_len" => m.max_entity_len = parse(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "freeze_word_embeddings" => m.freeze_word_embeddings = parse(key, value)?,
            "include_children" => m.include_children = parse(key, value)?,
            "seed" => m.seed = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "stop_at_train_acc" => t.stop_at_train_acc = Some(parse(key, value)?),
            other => return Err(ConfigError(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}
