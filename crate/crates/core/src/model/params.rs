use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::state::ParticleState;
use crate::error::{Error, Result};

/// How the pairwise alignment sum is accumulated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Summation {
    /// Plain left-to-right accumulation in index order.
    #[default]
    Plain,
    /// Neumaier-compensated accumulation, still in index order.
    Compensated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    /// Noise intensity; the diffusion coefficient is `sqrt(2 sigma)`.
    pub sigma: f64,
    pub kernel: KernelSpec,
    pub n: usize,
    pub dim: usize,
    #[serde(default)]
    pub summation: Summation,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            sigma: 0.1,
            kernel: KernelSpec::default(),
            n: 16,
            dim: 2,
            summation: Summation::Plain,
        }
    }
}

impl ModelParams {
    pub fn new(kappa: f64, sigma: f64, kernel: KernelSpec, n: usize, dim: usize) -> Result<Self> {
        let p = Self {
            kappa,
            sigma,
            kernel,
            n,
            dim,
            summation: Summation::Plain,
        };
        p.validate()?;
        Ok(p)
    }

    /// `sigma = 0` is accepted: it is the noiseless limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::param("kappa", format!("must be > 0, got {}", self.kappa)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::param("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if self.n == 0 {
            return Err(Error::param("n", "must be >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be >= 1"));
        }
        self.kernel.validate()
    }

    #[inline]
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.sigma).sqrt()
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub(crate) fn check_shape(&self, state: &ParticleState) -> Result<()> {
        if state.n() != self.n || state.dim() != self.dim {
            return Err(Error::Shape(format!(
                "state is {}x{}, params expect {}x{}",
                state.n(),
                state.dim(),
                self.n,
                self.dim
            )));
        }
        Ok(())
    }
}
