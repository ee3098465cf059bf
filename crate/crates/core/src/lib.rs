//! Co-simulation of drift-diffusion semiconductor devices embedded in
//! circuits.
//!
//! Devices are discretized with a Scharfetter-Gummel finite-volume scheme on
//! one-dimensional meshes and solved with damped Newton iterations. The rest
//! of the equipment is a modified-nodal-analysis circuit. Both are coupled by
//! a Gauss-Seidel dynamic iteration: the circuit sees each device as a Norton
//! equivalent (conductance matrix plus companion current sources) obtained by
//! implicit differentiation of the converged device solution, and device
//! solves run in parallel across threads and worker processes.

pub mod bench;
pub mod circuit;
pub mod cosim;
pub mod device;
pub mod io;
pub mod parallel;
pub mod physics;
pub mod sparse;
