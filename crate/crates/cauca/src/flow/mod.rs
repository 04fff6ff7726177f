//! Normalizing-flow machinery for likelihood-based unmixing.
//!
//! - `spline`: monotone rational-quadratic scalar maps with exact reverse
//!   passes, the nonlinearity inside every trainable layer.
//! - `layers`: invertible batch transforms (whitening, dense LU maps,
//!   spline couplings).
//! - `base_gauss` / `base_flow`: causal base densities that factorize over
//!   an assumed graph and swap intervened factors per regime.
//! - `model`: the encoder-plus-base likelihood model, the pooled
//!   multi-regime objective with exact gradients, and constructors for the
//!   estimator variants compared in experiments.

pub mod base_flow;
pub mod base_gauss;
pub mod layers;
pub mod model;
pub mod spline;

pub use base_flow::CbnFlowBase;
pub use base_gauss::CbnGaussianBase;
pub use layers::{parity_mask, CouplingLayer, FlowLayer, LuLayer, Standardize};
pub use model::{build_encoder, BaseDensity, EncoderModel, FlowHyper, ModelKind, RegimeLogProb};
pub use spline::{Rqs, RqsScratch};
