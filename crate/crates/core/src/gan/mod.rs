//! Generator/discriminator architectures, adversarial losses, Adam and the
//! epoch-driven training loop.

mod adam;
mod arch;
mod checkpoint;
mod loss;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{
    ecg_conv_stack, shape_report, sine_conv_stack, ConvPoolStage, Discriminator, DiscriminatorKind, DiscriminatorSpec, Gan,
    GanSpec, Generator, GeneratorKind, GeneratorSpec, LayerShape, Preset, DEFAULT_HIDDEN,
    DEFAULT_MINIBATCH_KERNEL_DIM, ECG_STACK_CORRECTIONS,
};
pub use checkpoint::{content_id, sha256_hex, Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{d_loss, d_loss_graph, g_loss, g_loss_graph, PROB_CLAMP};
pub use train::{
    sample_noise, synthesize, train, EpochContext, EpochEval, EpochReport, TrainConfig, TrainOutcome, DIVERGENCE_THRESHOLD,
};

#[cfg(test)]
mod tests;
