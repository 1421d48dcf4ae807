use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mckean::CouplingOptions;
use crate::model::ModelParams;
use crate::sde::{InitSpec, StepConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FlockingDecay,
    PaperFigure,
    KineticMoments,
    McKeanDecay,
    MeanFieldSweep,
    UniformInTime,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::FlockingDecay,
        ExperimentKind::PaperFigure,
        ExperimentKind::KineticMoments,
        ExperimentKind::McKeanDecay,
        ExperimentKind::MeanFieldSweep,
        ExperimentKind::UniformInTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FlockingDecay => "flocking-decay",
            ExperimentKind::PaperFigure => "paper-figure",
            ExperimentKind::KineticMoments => "kinetic-moments",
            ExperimentKind::McKeanDecay => "mckean-decay",
            ExperimentKind::MeanFieldSweep => "mean-field-sweep",
            ExperimentKind::UniformInTime => "uniform-in-time",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::param("kind", format!("unknown experiment kind `{s}`")))
    }
}

/// Which sample stands in for the kinetic density.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticEstimator {
    /// Particles in the decay regime, McKean copies in the growth regime.
    #[default]
    Auto,
    Particles,
    McKean,
}

impl fmt::Display for KineticEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KineticEstimator::Auto => "auto",
            KineticEstimator::Particles => "particles",
            KineticEstimator::McKean => "mckean",
        })
    }
}

impl FromStr for KineticEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(KineticEstimator::Auto),
            "particles" => Ok(KineticEstimator::Particles),
            "mckean" => Ok(KineticEstimator::McKean),
            other => Err(Error::param("estimator", format!("expected auto, particles or mckean, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Additive slack on fitted log-slopes.
    pub slope: f64,
    /// Relative slack on bound comparisons.
    pub bound: f64,
    /// Fraction of realizations that must pass an almost-sure claim.
    pub fraction: f64,
    /// Standard errors allowed when comparing noisy means.
    pub se_slack: f64,
    /// Standard errors subtracted before testing an upper envelope.
    pub envelope_se: f64,
    /// Required `S(T) / S(0)` for figure reproduction.
    pub collapse: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            slope: 0.02,
            bound: 0.15,
            fraction: 0.95,
            se_slack: 1.0,
            envelope_se: 3.0,
            collapse: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("slope", self.slope),
            ("bound", self.bound),
            ("se_slack", self.se_slack),
            ("envelope_se", self.envelope_se),
            ("collapse", self.collapse),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::param("fraction", format!("must lie in (0, 1], got {}", self.fraction)));
        }
        Ok(())
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub params: ModelParams,
    pub cfg: StepConfig,
    /// Particle counts for the mean-field sweep, strictly increasing.
    pub sweep: Option<Vec<usize>>,
    pub realizations: usize,
    pub tolerances: Tolerances,
    pub init: InitSpec,
    /// Lyapunov cross weight; `None` picks half the admissible maximum.
    pub beta: Option<f64>,
    pub mass: f64,
    pub estimator: KineticEstimator,
    pub coupling: CouplingOptions,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, params: ModelParams, cfg: StepConfig) -> Self {
        Self {
            kind,
            params,
            cfg,
            sweep: None,
            realizations: 1,
            tolerances: Tolerances::default(),
            init: InitSpec::default(),
            beta: None,
            mass: 1.0,
            estimator: KineticEstimator::Auto,
            coupling: CouplingOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.cfg.validate()?;
        self.tolerances.validate()?;
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be >= 1"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::param("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.init.box_half_width.is_finite() && self.init.box_half_width > 0.0) {
            return Err(Error::param("box", "must be > 0"));
        }
        match (&self.sweep, self.kind) {
            (None, ExperimentKind::MeanFieldSweep) => {
                return Err(Error::param("sweep", "the mean-field sweep needs a list of particle counts"))
            }
            (Some(_), k) if k != ExperimentKind::MeanFieldSweep => {
                return Err(Error::param("sweep", format!("only the mean-field sweep takes a sweep, not {k}")))
            }
            (Some(list), _) => {
                if list.len() < 4 {
                    return Err(Error::param("sweep", format!("needs at least 4 values, got {}", list.len())));
                }
                if list[0] == 0 || list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::param("sweep", "values must be positive and strictly increasing"));
                }
            }
            (None, _) => {}
        }
        if self.coupling.law_size < 2 {
            return Err(Error::param("law_size", "must be >= 2"));
        }
        if self.coupling.refresh_stride == 0 {
            return Err(Error::param("refresh_stride", "must be >= 1"));
        }
        Ok(())
    }

    /// Coupling options with this spec's mass.
    pub(crate) fn coupling_options(&self) -> CouplingOptions {
        CouplingOptions {
            mass: self.mass,
            ..self.coupling.clone()
        }
    }
}

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Closed-form constant evaluated from the parameters.
    Formula,
    /// Numerical slack chosen for the check.
    Tolerance,
    /// Fixed setting of a named preset.
    Preset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub value: f64,
    pub source: Source,
}

/// Machine-readable outcome of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: ExperimentKind,
    pub pass: bool,
    pub measured: BTreeMap<String, f64>,
    pub expected: BTreeMap<String, Expected>,
    pub flags: Vec<String>,
    pub artifacts: Vec<String>,
    pub seed: u64,
}

/// A named numeric table, written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Shape(format!("table `{}` has no column `{name}`", self.name)))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}
