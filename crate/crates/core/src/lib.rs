//! Conceptual distance between data items through capacity-constrained
//! description distributions.
//!
//! Two items are compared by how well the optimal descriptions of one also
//! describe the other as the complexity budget of the descriptions grows.
//! Optimal description distributions form a Gibbs family
//! `q(h) ∝ p_code(h) · exp(-λ ℓ(x|h))`, estimated by importance sampling over
//! descriptions drawn from a language model.
//!
//! Module map:
//! - [`distance`]: Gibbs weights, rate curves, asymmetric deltas, distance curve and AUC.
//! - [`oracle`]: exact computations over finite hypothesis tables.
//! - [`backends`]: description-scoring models (character n-gram, remote HTTP, fixture table).
//! - [`pipeline`]: end-to-end pair comparison and explanations.
//! - [`baselines`]: trajectory distance, conditional likelihood, compression distance.
//! - [`benchmark`]: dataset loading, Spearman correlation, benchmark loops.
//! - [`descgen`]: atom generation and beam composition for qualitative curves.

pub mod backends;
pub mod baselines;
pub mod benchmark;
pub mod descgen;
pub mod distance;
pub mod error;
pub mod numeric;
pub mod oracle;
pub mod pipeline;
pub mod units;

pub use backends::{
    Backend, BackendDescriptor, BackendError, BackendKind, Description, LogProbResult,
};
pub use distance::{
    CapacityCurve, DistanceCurve, GibbsPoint, Hypothesis, LambdaGrid, LossMode, Sample, ScoredBatch,
};
pub use error::{Error, Result};
pub use oracle::FiniteHypothesisTable;
pub use pipeline::{CompareConfig, DistanceReport, PcodeMode};
pub use units::Units;
