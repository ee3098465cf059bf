//! Discrete drift-diffusion device equations, their Newton solver and the
//! Norton reduction seen by the circuit.

mod assemble;
mod model;
mod newton;
mod norton;
mod task;

pub use assemble::{assemble, electrode_currents, unknown, DeviceResidualSystem};
pub use model::{neutral_densities, ContactBc, Device, Lifetimes};
pub use newton::{
    equilibrium, newton_solve, predict, residual_norms, solve_continued, solve_predicted, LinearizedDevice,
    NewtonOptions, NewtonSolution, DENSITY_FLOOR,
};
pub use norton::{bias_sensitivities, norton_from_sensitivities, norton_reduce, NortonEquivalent};
pub use task::{DeviceTask, LteTolerances, SolveReply, SolveRequest};

use thiserror::Error;

use crate::physics::PhysicsError;
use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("bias given for {got} electrodes, device has {expected}")]
    MissingBias { expected: usize, got: usize },
    #[error("time context: {0}")]
    Time(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Linear(#[from] SparseError),
    #[error(
        "Newton did not converge in {iterations} iterations \
         (max residual: poisson {poisson:e} C, electron {electron:e} A, hole {hole:e} A)"
    )]
    NonConvergence {
        iterations: usize,
        poisson: f64,
        electron: f64,
        hole: f64,
    },
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Device;
    use crate::physics::{
        build_mesh, DopantKind, DopingProfile, DopingRegion, Geometry, PhysicalModels, Refinement,
        Side,
    };

    fn contacts(a: &str, b: &str) -> Vec<(String, Side)> {
        vec![(a.into(), Side::Left), (b.into(), Side::Right)]
    }

    /// Abrupt symmetric PN diode, p side on the left (`anode`).
    pub fn pn_diode(doping: f64, half_length: f64, vertices: usize) -> Device {
        pn_diode_with_area(doping, half_length, vertices, 1e-4)
    }

    pub fn pn_diode_with_area(doping: f64, half_length: f64, vertices: usize, area: f64) -> Device {
        let geometry = Geometry {
            region_lengths: vec![half_length, half_length],
            area,
            contacts: contacts("anode", "cathode"),
        };
        let mesh = build_mesh(&geometry, &Refinement::Uniform { vertices }).unwrap();
        let profile = DopingProfile::new(vec![
            DopingRegion {
                start: 0.0,
                end: half_length,
                kind: DopantKind::Acceptor,
                peak: doping,
                transition: 0.0,
            },
            DopingRegion {
                start: half_length,
                end: 2.0 * half_length,
                kind: DopantKind::Donor,
                peak: doping,
                transition: 0.0,
            },
        ])
        .unwrap();
        Device::new(mesh, &profile, PhysicalModels::silicon(), &[]).unwrap()
    }

    /// Uniform n-type bar between `left` and `right`.
    pub fn n_bar(doping: f64, length: f64, area: f64, vertices: usize) -> Device {
        let geometry = Geometry {
            region_lengths: vec![length],
            area,
            contacts: contacts("left", "right"),
        };
        let mesh = build_mesh(&geometry, &Refinement::Uniform { vertices }).unwrap();
        let profile = DopingProfile::new(vec![DopingRegion {
            start: 0.0,
            end: length,
            kind: DopantKind::Donor,
            peak: doping,
            transition: 0.0,
        }])
        .unwrap();
        Device::new(mesh, &profile, PhysicalModels::silicon(), &[]).unwrap()
    }
}
