//! Multi-source unsupervised domain adaptation on a minimal, self-contained
//! MLP stack.
//!
//! The crate is organised around the DCTN scheme: a shared feature extractor,
//! one domain discriminator and one softmax classifier per source, and a
//! non-learnable target classification operator that fuses the per-source
//! predictions with perplexity-score weights. Training alternates multi-way
//! adversarial alignment (with online hard domain batch mining) and
//! pseudo-label discriminative adaptation.
//!
//! Everything here is pure computation over `f64` buffers: no file IO, no
//! threads, and deterministic for a given seed. The crate is `no_std`
//! compatible (`alloc` required); the companion `dctn-cli` crate carries
//! CSV/JSON file formats and the experiment runner.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub(crate) mod math;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod train;

pub use data::{
    apply_category_shift, gen_synthetic_domains, make_batches, BatchStream, BatchTuple, ClassId,
    DomainDataset, ShiftMode, ShiftSpec, SourceBatch,
};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    accuracy_percent, AlphaMode, ConfidenceVector, DctnModel, ModelArch, PerplexityScores,
};
pub use nn::{Activation, DenseLayer, Mlp, ParamTensor, Sgd};
pub use train::{
    discriminative_update, pseudo_label, select_hard_source, train, update_discriminator,
    update_extractor, Phase, PseudoLabelSet, TraceRecord, TrainConfig, TrainTrace, Trainer,
};
