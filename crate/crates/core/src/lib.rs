//! Open-set RF fingerprint authentication with generative outlier augmentation.
//!
//! The library covers the full pipeline:
//!
//! - [`sim`] — synthetic transmitter corpus: hardware-impairment fingerprints
//!   applied to a fixed preamble, plus channel effects and the `.orff` corpus
//!   format.
//! - [`nn`] — a small differentiable-computation substrate (dense, 2-D conv,
//!   transposed conv, residual blocks) with gradients w.r.t. inputs.
//! - [`generative`] — VAE / conditional-VAE outlier generators trained on
//!   known outliers, and the plain autoencoder the blind methods build on.
//! - [`mvee`] — minimum-volume enclosing ellipsoid of encoded authorized
//!   samples and shell sampling around it.
//! - [`latent_opt`] — constrained latent-space optimization against a judge
//!   classifier, with iterative judge retraining.
//! - [`openset`] — the One-vs-All open-set evaluator, split protocol, and the
//!   experiment sweeps.

pub mod arch;
pub mod generative;
pub mod latent_opt;
pub mod mvee;
pub mod nn;
pub mod openset;
pub mod seed;
pub mod sim;
