//! Adversarial training toolkit built around latent-space logit perturbation.
//!
//! The central idea: instead of crafting adversarial inputs with gradient
//! steps in pixel space, perturb the penultimate-layer logits directly with
//! a closed-form minimal perturbation that equalizes the top-2 class scores.
//! Training on these "endogenous" adversarial examples (EAEs) needs no
//! input-gradient passes at all, which is where the speedup comes from.
//!
//! The crate ships everything needed to check that claim end to end:
//!
//! - [`tensor`]: dense f64 arrays with a tape-based reverse-mode autodiff.
//! - [`nn`]: layers, models with penultimate-logit access, cross-entropy,
//!   SGD, and a cyclic learning-rate schedule.
//! - [`data`]: CIFAR-10 binary ingestion, synthetic datasets, batching.
//! - [`attacks`]: FGSM, RFGSM, BIM, PGD, and the random-init fast step.
//! - [`eae`]: logit-difference statistics, seed-example selection, and the
//!   closed-form logit delta.
//! - [`train`]: the five training loops with uniform pass/time instrumentation.
//! - [`evalbench`]: black-box transfer evaluation, threshold sweeps, reports.
//! - [`cli`]: the `eae` command-line front-end.

pub mod attacks;
pub mod cli;
pub mod config;
pub mod counters;
pub mod data;
pub mod eae;
pub mod error;
pub mod evalbench;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
