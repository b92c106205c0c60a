//! Core model stack for a multimodal (audio + text) transcription model:
//! a minimal reverse-mode tensor engine, transformer building blocks with
//! LoRA adapters, the encoder/adapter/decoder assembly, the joint
//! alignment + output loss, and the staged training loop.

pub mod autodiff;
pub mod error;
pub mod loss;
pub mod model;
pub mod nn;
pub mod params;
pub mod train;
pub mod vocab;

pub use autodiff::{finite_diff_check, DiffArray, Gradients, Tape};
pub use error::{CoreError, Result};
pub use loss::{alignment_loss, output_loss, total_loss, AlignmentLoss, LossBreakdown};
pub use model::{AdapterVariant, AumolModel, EmbeddingSeq, Modality, ModelConfig};
pub use params::{Param, ParamStore};
pub use train::{
    adamw_step, apply_stage, clip_grad_norm, lr_at, train, EpochMark, OptimizerState, Stage,
    StagePlan, StepRecord, TrainConfig, TrainLog, TrainSample, TrainableComponent,
};
pub use vocab::Vocabulary;
