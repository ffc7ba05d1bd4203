//! Desk-scale quantum error correction harness around the decoder.
//!
//! A distance-3 bit-flip repetition code has exactly two checks, one per chip
//! input. Traces are generated here, decoded exactly by enumeration
//! ([`lookup`]), learned by a hardware-aware software twin of the chip
//! ([`surrogate`]), and scored by Monte Carlo ([`eval`]).

pub mod code;
pub mod eval;
pub mod lookup;
pub mod surrogate;

pub use code::{sample_trace, trace_from_history, ErrorHistory, NoiseModel, RepetitionCode, SyndromeTrace};
pub use eval::{evaluate_ler, Decoder, LerEstimate};
pub use lookup::{ml_lookup_decoder, LookupDecoder};
pub use surrogate::{train_surrogate, Optimizer, SurrogateModel, SurrogateWeights, TrainConfig, TrainReport};

use crate::pipeline::PipelineError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QecError {
    #[error("{0}")]
    Invalid(String),
    #[error("instance needs {bits} enumerated bits, limit is {max}")]
    Capacity { bits: usize, max: usize },
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
