use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::DistanceTag;
use crate::models::Activation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Network sizes. Input widths come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub video_embed_dim: usize,
    pub fmri_embed_dim: usize,
    pub emotion_embed_dim: usize,
    /// Hidden widths of every encoder; decoders mirror them.
    pub ae_hidden: Vec<usize>,
    pub map_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            video_embed_dim: 16,
            fmri_embed_dim: 16,
            emotion_embed_dim: 8,
            ae_hidden: vec![32],
            map_hidden: vec![32],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage: u8,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub lambda_map: f64,
    pub lambda_match: f64,
    pub finetune_video_encoder: bool,
    pub architecture: Architecture,
    pub distance: DistanceTag,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.0005,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            steps: 3000,
            seed: 0,
            lambda_map: 1.0,
            lambda_match: 1.0,
            finetune_video_encoder: false,
            architecture: Architecture::default(),
            distance: DistanceTag::SqEuclidean,
        }
    }
}

impl TrainConfig {
    /// Desk-scale defaults: 2000 steps for stage 1, 3000 afterwards.
    pub fn for_stage(stage: u8) -> Self {
        Self {
            stage,
            steps: if stage == 1 { 2000 } else { 3000 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.stage) {
            return bad(format!("stage must be 1, 2 or 3, got {}", self.stage));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.steps < 1 {
            return bad("steps must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be > 0, got {}", self.adam_eps));
        }
        for (name, w) in [("lambda_map", self.lambda_map), ("lambda_match", self.lambda_match)] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("{name} must be >= 0, got {w}"));
            }
        }
        let a = &self.architecture;
        if a.video_embed_dim == 0 || a.fmri_embed_dim == 0 || a.emotion_embed_dim == 0 {
            return bad("embedding dimensions must be positive".into());
        }
        if a.ae_hidden.contains(&0) || a.map_hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    /// Parses a JSON config, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
