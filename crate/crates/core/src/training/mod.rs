//! Staged optimization, configuration and checkpoints.

mod checkpoint;
mod config;
mod optim;
mod stages;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, LossRecord, LossSummary, CHECKPOINT_FORMAT_VERSION,
};
pub use config::{Architecture, OptimizerKind, TrainConfig};
pub use optim::{adam_step, sgd_step, AdamHyper, AdamState, Optimizer};
pub use stages::{
    init_stage1, init_stage2, init_stage3, prepare_prototypes, train_stage1, train_stage2, train_stage3,
};
