//! Reverse channel coding of diffusion steps.
//!
//! Each coded step sends a sample of the forward posterior `q` using the
//! prior's reverse conditional `p` as the shared proposal. Samples are
//! selected with [`pfr`], their indices coded with [`elias`], and the
//! coefficient partition comes from [`chunk`].

pub mod chunk;
pub mod elias;
pub mod pfr;
pub mod step;

use thiserror::Error;

use crate::prior::PriorError;
use crate::schedule::ScheduleError;

pub use chunk::{expected_kl_profile, ChunkRule, ChunkSpec};
pub use elias::{code_seed_index, decode_seed_index, seed_code_len, BitReader, BitWriter};
pub use pfr::{
    budget_for_kl, kl_bits, pfr_decode, pfr_encode, DiscretePair, GaussianPair, GaussianProposal, PfrOutcome, Proposal,
    Target,
};
pub use step::{decode_step, encode_step, initial_state, StepOutput};

#[derive(Debug, Error)]
pub enum RccError {
    #[error("seed index {0} is not a positive integer")]
    InvalidSeed(u64),
    #[error("malformed seed code at bit {bit_offset}")]
    MalformedCode { bit_offset: u64 },
    #[error("variance {0} is not positive")]
    NonpositiveVariance(f64),
    #[error("q has {q} coefficients but p has {p}")]
    LengthMismatch { q: usize, p: usize },
    #[error("probabilities must be nonnegative and sum to one")]
    InvalidDistribution,
    #[error("candidate {index} has zero density under q")]
    ZeroDensity { index: u64 },
    #[error("coefficient {coeff} alone carries {kl_bits:.3} expected bits, over the cap of {cap}")]
    ChunkTooHot { coeff: usize, kl_bits: f64, cap: f64 },
    #[error("coded step {t} outside 1..{steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// One coded PFR selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedRecord {
    pub gop: u32,
    pub step: u32,
    pub chunk: u32,
    pub seed: u64,
}
