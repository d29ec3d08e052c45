//! Energy-based residual correction for masked discrete diffusion models.
//!
//! The factorized denoiser `mu(x0 | x_t)` predicts every masked position
//! independently. An energy `E(x0, x_t, t)` reweights whole candidate
//! sequences, and the sampler approximates the corrected kernel by
//! importance resampling over `k` factorized candidates.

pub mod checkpoint;
pub mod corpus;
pub mod diffusion;
pub mod energy;
pub mod error;
pub mod eval;
pub mod models;
pub mod nce;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod seq;

pub use checkpoint::Checkpoint;
pub use corpus::Vocabulary;
pub use energy::{EnergyKind, EnergyModel, NceEnergy};
pub use error::{EdlmError, Result};
pub use models::{
    ar_fit, AutoregressiveModel, Denoiser, DenoiserOutput, FactorizedDenoiser, NGramModel,
};
pub use eval::{BoundPair, MetricsRow};
pub use rng::SeedTree;
pub use sampler::SamplerConfig;
pub use schedule::NoiseSchedule;
pub use seq::{Token, TokenSeq};
