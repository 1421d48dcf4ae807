//! Named experiments that turn the flocking, kinetic and mean-field claims
//! into reproducible pass/fail verdicts.

mod decide;
mod presets;
mod runners;
mod spec;

pub use decide::{decide, Decision, DEGENERATE_ERR};
pub use presets::{preset, PRESET_NAMES};
pub use runners::{
    run_experiment, run_flocking_decay, run_kinetic_moments, run_mckean_decay, run_meanfield_sweep, run_paper_figure,
    run_simulation, run_uniform_in_time, ExperimentOutput,
};
pub use spec::{Expected, ExperimentKind, ExperimentSpec, KineticEstimator, Source, Table, Tolerances, Verdict};
