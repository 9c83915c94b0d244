//! Speaker-similarity anchor selection.
//!
//! Each candidate vocoder's training frames and the target speaker's frames
//! are summarized by diagonal GMMs over log-mel frames; the candidate with
//! the smallest Monte Carlo estimate of KL(target || candidate) is chosen.
//! The direction matters: it penalizes candidates that put little mass
//! where the target speaker lives.

mod gmm;
mod kld;

pub use gmm::{fit_gmm, stack_frames, GmmFit, SpeakerGmm, GMM_FILE_VERSION, VARIANCE_FLOOR};
pub use kld::{gmm_kld, select_anchor, AnchorSelection, DivergenceRow, KldEstimate, DEFAULT_KLD_SAMPLES};

/// Canonical mixture size.
pub const DEFAULT_COMPONENTS: usize = 32;
