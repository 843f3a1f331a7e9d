//! Robust conditional GAN training under missing and uncertain labels.
//!
//! * [`channel`]: uncertainty channels (confusion matrices), their closed-form
//!   inverses and the kappa factors.
//! * [`divergence`]: exact TV / JS / projection-distance computations on finite
//!   joints and bound verifiers.
//! * [`data`]: synthetic Gaussian-mixture datasets, corruption and CSV I/O.
//! * [`gan`]: MLP generator, projection discriminator, both adversarial losses
//!   with hand-written gradients, and the training loop.
//! * [`eval`]: generated-label accuracy and label-recovery accuracy.

pub mod channel;
pub mod data;
pub mod divergence;
pub mod eval;
pub mod gan;

pub use channel::{ChannelError, ChannelSpec, ConfusionMatrix, KappaFactors};
