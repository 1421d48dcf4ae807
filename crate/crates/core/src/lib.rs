//! Stochastic Cucker-Smale flocking with multiplicative noise in a harmonic
//! potential: the interacting particle system, its McKean mean-field
//! process, and diagnostics for flocking, kinetic variance bounds and
//! mean-field convergence.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mckean;
pub mod model;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
pub use model::{CenteredState, KernelSpec, MacroState, ModelParams, ParticleState};
pub use io::{parse_config, to_canonical, RunConfig};
pub use sde::{em_step, fan_out, simulate, StepConfig, TrajectoryRecord};
