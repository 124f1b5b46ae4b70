//! Staged cross-modal embedding alignment.
//!
//! A video autoencoder is fit first. An fMRI autoencoder and an fMRI→video
//! mapping are then fit against the frozen video embeddings. Finally an
//! emotion autoencoder and an emotion→fMRI mapping are fit so that mapped
//! emotion embeddings land on the fMRI class prototypes. The trained chain
//! turns an emotion vector into a class posterior and a video frame.
//!
//! Everything runs on a small reverse-mode autodiff tape over `f64`.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod synthdata;
pub mod training;

pub use autodiff::{Tape, Tensor, Var};
pub use error::{Error, Result};
pub use inference::{classify, decode, decode_batch, DecodeResult};
pub use models::{Component, ModelBundle};
pub use synthdata::{generate_synthetic, read_dataset, split, write_dataset, DatasetBundle, SyntheticSpec};
pub use training::{load_checkpoint, save_checkpoint, Checkpoint, TrainConfig};
