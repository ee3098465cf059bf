//! Device geometry, doping, material models and carrier state for the
//! one-dimensional drift-diffusion system.

mod bernoulli;
mod doping;
mod mesh;
mod models;
mod state;

pub use bernoulli::{bernoulli, bernoulli_derivative};
pub use doping::{DopantKind, DopingProfile, DopingRegion};
pub use mesh::{build_mesh, Contact, DeviceMesh, Geometry, Refinement, Side};
pub use models::{Carrier, MobilityParams, PhysicalModels, Recombination};
pub use state::{Carriers, DeviceState, History, Snapshot};

use thiserror::Error;

/// Elementary charge (C).
pub const Q: f64 = 1.602_176_634e-19;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permittivity (F/cm).
pub const EPS0: f64 = 8.854_187_812_8e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("geometry has no regions")]
    EmptyGeometry,
    #[error("non-positive length {0} cm")]
    NonPositiveLength(f64),
    #[error("invalid refinement: {0}")]
    BadRefinement(String),
    #[error("position {x} cm outside device [0, {length}] cm")]
    OutsideDevice { x: f64, length: f64 },
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositiveParameter { name: String, value: f64 },
    #[error("doping regions: {0}")]
    BadRegions(String),
    #[error("contact `{0}`: {1}")]
    BadContact(String, String),
    #[error("state: {0}")]
    BadState(String),
}
