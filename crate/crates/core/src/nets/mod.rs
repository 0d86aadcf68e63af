//! Manual-backprop layers, the toy generator and discriminator bank, Adam,
//! finite-difference gradient checks, checkpoints and the toy training loop.

mod adam;
mod checkpoint;
mod discriminator;
mod generator;
mod gradcheck;
mod layers;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use discriminator::{
    discriminate, BankTrace, ConvStack, DiscGrad, DiscOutput, DiscriminatorBank,
    DiscriminatorConfig,
};
pub use generator::{AmpBlock, AmpTrace, GeneratorConfig, GeneratorTrace, ToyGenerator};
pub use gradcheck::{
    grad_check, grad_check_generator, grad_check_layer, grad_check_mel_loss, grad_check_ri_loss,
    layer_cases, relative_error, GradCheckReport, DEFAULT_EPS, GRAD_TOLERANCE,
};
pub use layers::{Layer, LayerKind, LayerSpec, LEAKY_SLOPE};
pub use tensor::Tensor;
pub use train::{
    ablation_table, decimate, train_toy, train_toy_with_progress, Ablation, AblationTable,
    CorpusConfig, Example, HeldOutMetrics, StepRecord, TrainConfig, TrainMode, TrainingReport,
};
