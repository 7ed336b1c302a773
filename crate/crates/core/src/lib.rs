//! Simulation and optimization of quantum state transfer between two
//! cascaded harmonic oscillators joined by a unidirectional transmission
//! line.
//!
//! The dynamics are linear, so the Heisenberg operators of both oscillators
//! are described completely by real coefficient functions. The crate
//! integrates those coefficients for arbitrary coupling profiles
//! ([`simulator`]), optimizes the coupling profile of the first oscillator
//! ([`optimizer`]), and checks both against closed-form results
//! ([`oracles`]). [`circuit`] maps LC-circuit parameters onto the model's
//! rates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod cli;
pub mod error;
pub mod optimizer;
pub mod oracles;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    profile_value, validate_params, CouplingProfile, FidelityReport, InfidelityTerms, Kernel, ParamIssue, ProfileKind,
    Readout, Severity, SystemParams, TimeGrid, TransferState, ValidityFlags,
};
