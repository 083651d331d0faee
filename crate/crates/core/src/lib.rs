//! Differentially private synthetic tabular data.
//!
//! The engine follows a select, measure, generate loop: noisy marginals of a
//! discrete dataset are measured under a Rényi-DP ledger, a graphical model
//! consistent with the measurements is fit, and synthetic records are drawn
//! from it with minimal rounding error.

// Negated comparisons reject NaN parameters along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod census;
pub mod compression;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod generation;
pub mod marginal;
pub mod mechanisms;
pub mod par;
pub mod pipeline;
pub mod pgm;
pub mod rng;
pub mod selection;

pub use accountant::{PrivacyParams, RdpLedger};
pub use dataset::{load_dataset, Dataset};
pub use domain::{load_domain, Attribute, Clique, Domain, Values};
pub use error::{Error, ErrorKind, Result};
pub use marginal::{marginal, MarginalVector, DEFAULT_CELL_CAP};
pub use mechanisms::{Measurement, MeasurementLog, Transform};
