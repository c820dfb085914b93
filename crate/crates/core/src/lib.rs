//! Core records and evaluation mathematics for a forecasting-question foundry.
//!
//! The scoring code is generic over [`Scalar`] (floats and exact rationals)
//! and the clustering code over [`num_traits::Float`]; the aliases below fix
//! the concrete types used by the pipeline.

pub mod cluster;
pub mod diversity;
pub mod domain;
pub mod forecast;
pub mod gate;
pub mod ids;
pub mod metrics;
pub mod resolution;
pub mod scalar;

pub use domain::{
    validate_question, DomainError, LifecycleBook, LifecycleEntry, LifecycleState, ProtoQuestion,
    Question, ResolutionWindow, Seed, SeedSource, ValidationReport, Violation,
};
pub use forecast::{ForecastRecord, ResearchDossier, Strategy, Subquestion, SubquestionBundle};
pub use gate::{apply_gate, GateResult, QualityLabel, Rating, ResolvabilityLabel, Verdict, VerdictKind};
pub use metrics::{MetricsError, OutcomeSet};
pub use resolution::{
    Adjudication, AgentSlot, FinalResolution, FinalVerdict, Method, ResolutionVote, VoteVerdict,
};
pub use scalar::Scalar;

/// Exact rational used by oracle checks of the scoring identities.
pub type Exact = num_rational::Ratio<i64>;

/// Embedding component type stored on disk.
pub type EmbeddingScalar = f32;

pub type BrierDecomposition = metrics::BrierDecomposition<f64>;
pub type ExactBrierDecomposition = metrics::BrierDecomposition<Exact>;
pub type ReliabilityBins = metrics::ReliabilityBins<f64>;
pub type BootstrapInterval = metrics::BootstrapInterval<f64>;
pub type KMeansResult = cluster::KMeansResult<f64>;
