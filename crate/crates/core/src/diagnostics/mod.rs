//! Lyapunov functionals, flocking and kinetic regime constants, the
//! second-moment oracle and log-linear rate fits.

mod fit;
mod kinetic;
mod lyapunov;
mod oracle;

pub use fit::{rate_fit, trailing_half, RateFit};
pub use kinetic::{kinetic_regime, variance_functionals, KineticRegime, KineticRegimeReport, VarianceFunctionals, WeightedSample};
pub use lyapunov::{flocking_check, generator_lv, lyapunov_v, FlockingReport, LyapunovParams};
pub use oracle::{moment_ode_oracle, Moments, ORACLE_DT};
