//! State space, parameters, communication kernels and the drift/diffusion
//! fields of the stochastic Cucker-Smale system in a harmonic potential.

mod dynamics;
mod kernel;
mod params;
mod state;

pub use dynamics::{alignment, centered_velocity_drift, diffusion, drift};
pub use kernel::{KernelSpec, KernelTable};
pub use params::{ModelParams, Summation};
pub use state::{
    macro_decompose, recompose, CenteredState, MacroState, ParticleState, CENTERED_TOL,
};

pub(crate) use state::{dist_sq, dot};
