//! Progressive video coding by transmitting a diffusion trajectory with
//! reverse channel coding.
//!
//! A clip is cut into overlapping groups of pictures, mapped to a latent by
//! an orthonormal block transform and coded as the sequence of noisy latents
//! `z_T, ..., z_t*` under a Gaussian prior. Every step costs roughly the KL
//! divergence between the encoder's posterior and the shared reverse
//! process, so any prefix of the trajectory is a valid lower-rate stream.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bitstream;
pub mod config;
pub mod dct;
pub mod error;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod qctrl;
pub mod rcc;
pub mod rng;
pub mod schedule;
pub mod synthetic;

pub use error::{Error, EXIT_CODES};
