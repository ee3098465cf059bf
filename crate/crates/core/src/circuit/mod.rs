//! Modified nodal analysis for the non-device part of the system.

mod bdf;
mod mna;
mod model;
mod waveform;

pub use bdf::{bdf_context, BdfCoefficients, ErrorEstimator};
pub use mna::{
    mna_assemble, newton_solve_circuit, AnalysisMode, BranchKind, CircuitHistory,
    CircuitSolution, CircuitTolerances, MnaInputs, MnaLayout, MnaSystem,
};
pub use model::{is_ground, natural_cmp, Circuit, Element, ElementKind};
pub use waveform::Waveform;

use thiserror::Error;

use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("time stepping: {0}")]
    Time(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("element `{0}`: {1}")]
    Element(String, String),
    #[error("missing device stamp: {0}")]
    MissingStamp(String),
    #[error("circuit Newton did not converge: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Linear(#[from] SparseError),
}
