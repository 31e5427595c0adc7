//! Numerical core for parameter identification in ODE-based kinetic
//! reaction networks.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: the mass-action model representation with analytic
//! derivatives, a linearly implicit Euler extrapolation integrator with
//! dense output and fixed-time breakpoints, forward sensitivities, the
//! affine covariant damped Gauss-Newton solver with rank monitoring, and
//! post-fit identifiability statistics.
//!
//! File formats, reports and the command-line front end live in the `kinid`
//! crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod gnsolver;
pub mod integrator;
pub mod linalg;
mod math;
pub mod model;
pub mod sensitivity;
pub mod stats;
pub mod transform;

pub use gnsolver::{
    fit, fit_with_observer, ExperimentData, FitError, FitReport, GnConfig, JacobianMethod,
    Measurement, ObservableRef, ProtocolRow, Verdict,
};
pub use integrator::{integrate, integrate_experiments, IntegratorConfig, Side, Trajectory};
pub use linalg::Matrix;
pub use model::{Experiment, KineticModel, ModelError};
pub use transform::Transform;
