//! Single-block transformer classifier that hosts continuous prompts.

mod checkpoint;
mod config;
mod fast;
mod model;
mod pretrain;
mod train;
mod verify;

pub use checkpoint::{load_model, save_model, ModelManifest, TensorEntry, MANIFEST};
pub use config::{Activation, ModelConfig, Readout};
pub use fast::{Example, PromptCache, ReadoutState};
pub use model::{AttentionTrace, BlockGrads, HeadWeights, ToyTransformer};
pub use pretrain::{pretrain_backbone, prompt_task, PretrainConfig, PretrainReport};
pub use train::{
    evaluate_prompt, init_prompt, p_tune, prompt_batch_grad, train_loop, CurvePoint, PromptTuneResult,
    TrainConfig, TrainOutcome,
};
pub use verify::{gradient_check, verify_span_membership, verify_two_term_split, GradCheck, FD_STEP};

pub use fast::argmax;
