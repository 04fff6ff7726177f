//! Evaluation and verification tools.
//!
//! - latent recovery quality: correlation between true and estimated
//!   latents under identity or best-permutation alignment;
//! - likelihood gaps against the generating process;
//! - grid-based checkers for the assumptions latent recovery rests on;
//! - Jacobian-support classification of residual indeterminacy.

pub mod ambiguity;
pub mod delta;
pub mod discrepancy;
pub mod mcc;

pub use ambiguity::{classify_ambiguity, fd_jacobian, AmbiguityClass, AmbiguityReport, FnMap, PointMap};
pub use delta::{log_prob_gap, LogProbGap};
pub use discrepancy::{
    check_block_discrepancy, check_interventional_discrepancy, check_variability,
    BlockDiscrepancyReport, DiscrepancyReport, GridSpec, VariabilityReport,
    ALMOST_EVERYWHERE_FRACTION,
};
pub use mcc::{average_ranks, correlation_matrix, mcc, pearson, Alignment, CorrelationKind};
