//! Named, fully specified experiment setups.

use super::spec::{ExperimentKind, ExperimentSpec, KineticEstimator};
use crate::error::{Error, Result};
use crate::mckean::FieldMode;
use crate::model::{KernelSpec, ModelParams};
use crate::sde::{InitSpec, StepConfig};

pub const PRESET_NAMES: [&str; 8] = [
    "fig1",
    "fig2",
    "flocking",
    "kinetic-decay",
    "kinetic-growth",
    "mckean",
    "sweep",
    "uniform",
];

fn params(kappa: f64, sigma: f64, kernel: KernelSpec, n: usize, dim: usize) -> ModelParams {
    ModelParams {
        kappa,
        sigma,
        kernel,
        n,
        dim,
        ..ModelParams::default()
    }
}

fn cfg(dt: f64, t_final: f64, record_every: usize) -> StepConfig {
    StepConfig {
        dt,
        t_final,
        record_every,
        seed: 42,
    }
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    use ExperimentKind::*;
    let spec = match name {
        "fig1" | "fig2" => {
            let kernel = if name == "fig1" {
                KernelSpec::constant(1.0)
            } else {
                KernelSpec::algebraic_quarter(None)
            };
            let mut s = ExperimentSpec::new(PaperFigure, params(100.0, 200.0, kernel, 100, 2), cfg(1e-3, 2.0, 10));
            s.init = InitSpec {
                box_half_width: 50.0,
                project: false,
            };
            s.realizations = 10;
            s
        }
        "flocking" => {
            let mut s = ExperimentSpec::new(FlockingDecay, params(2.0, 0.5, KernelSpec::constant(1.0), 16, 2), cfg(1e-3, 20.0, 40));
            s.realizations = 100;
            s.beta = Some(0.5);
            s
        }
        "kinetic-decay" => {
            let mut s = ExperimentSpec::new(KineticMoments, params(1.0, 0.01, KernelSpec::constant(1.0), 2048, 1), cfg(1e-3, 5.0, 10));
            s.estimator = KineticEstimator::Particles;
            s
        }
        "kinetic-growth" => {
            let mut s = ExperimentSpec::new(KineticMoments, params(0.1, 1.0, KernelSpec::constant(1.0), 2048, 2), cfg(1e-3, 2.0, 10));
            s.estimator = KineticEstimator::McKean;
            s
        }
        "mckean" => ExperimentSpec::new(McKeanDecay, params(2.0, 0.5, KernelSpec::constant(1.0), 1024, 1), cfg(1e-3, 5.0, 10)),
        "sweep" | "uniform" => {
            let kernel = KernelSpec::algebraic_quarter(Some(10.0));
            let mut s = if name == "sweep" {
                let mut s = ExperimentSpec::new(MeanFieldSweep, params(2.0, 0.5, kernel, 8, 1), cfg(1e-3, 1.0, 1));
                s.sweep = Some(vec![8, 16, 32, 64]);
                s.realizations = 200;
                s
            } else {
                let mut s = ExperimentSpec::new(UniformInTime, params(2.0, 0.5, kernel, 32, 1), cfg(5e-3, 10.0, 10));
                s.realizations = 100;
                s.coupling.law_size = 512;
                s
            };
            s.init = InitSpec {
                box_half_width: 3.0,
                project: true,
            };
            s.coupling.fields = FieldMode::Grid { nodes: 129 };
            s
        }
        other => {
            return Err(Error::param(
                "preset",
                format!("unknown preset `{other}`; known: {}", PRESET_NAMES.join(", ")),
            ))
        }
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("fig3").is_err());
    }

    #[test]
    fn figure_presets() {
        let f1 = preset("fig1").unwrap();
        assert_eq!((f1.params.kappa, f1.params.sigma, f1.params.n), (100.0, 200.0, 100));
        assert_eq!(f1.init.box_half_width, 50.0);
        let f2 = preset("fig2").unwrap();
        assert_eq!(f2.params.kernel.eval(0.0).unwrap(), 1.0);
    }
}
