//! The vocoder network: a two-layer bidirectional GRU conditioning stack
//! over mel frames, nearest-neighbour upsampling to the sample rate, and a
//! single forward GRU followed by two affine layers and a softmax over
//! mu-law classes.

mod checkpoint;
mod gru;
pub mod kernels;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gru::{gru_step, GruWeights};
pub use kernels::{log_softmax, softmax};
pub use network::{
    ar_step, backward, conditioning_forward, forward_teacher_forced, forward_teacher_forced_in_context, nll_loss, teacher_forced_nll,
    upsample_conditioning, ArState, FrameFeatures, TeacherForcedPass,
};
pub(crate) use network::ArStepper;
pub use params::{Affine, ModelConfig, ModelParams, Tensor, TensorMut, VocoderConfig};
