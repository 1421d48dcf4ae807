use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{alignment, dot, CenteredState, ModelParams};

/// Weights of `V = alpha sum|x|^2 + beta sum x.v + sum|v|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub alpha: f64,
    pub beta: f64,
}

impl LyapunovParams {
    /// `alpha = 1`, which removes the `x.v` term from the generator.
    pub fn with_beta(beta: f64) -> Self {
        Self { alpha: 1.0, beta }
    }
}

pub fn lyapunov_v(state: &CenteredState, lp: &LyapunovParams) -> f64 {
    let x = state.positions();
    let v = state.velocities();
    lp.alpha * dot(x, x) + lp.beta * dot(x, v) + dot(v, v)
}

/// Exact value of the generator applied to `V` at a centered state.
///
/// ```text
/// LV = (2k/N) sum_ij psi (v_j - v_i).v_i + (k beta/N) sum_ij psi (v_j - v_i).x_i
///    + (2 alpha - 2) sum x.v + (beta + 2 sigma) sum|v|^2 - beta sum|x|^2
/// ```
pub fn generator_lv(state: &CenteredState, params: &ModelParams, lp: &LyapunovParams) -> f64 {
    let x = state.positions();
    let v = state.velocities();
    // alignment() already carries the kappa/N factor
    let align = alignment(state, params);
    let coupling: f64 = align
        .iter()
        .zip(x.iter().zip(v))
        .map(|(a, (xi, vi))| a * (2.0 * vi + lp.beta * xi))
        .sum();
    coupling + (2.0 * lp.alpha - 2.0) * dot(x, v) + (lp.beta + 2.0 * params.sigma) * dot(v, v) - lp.beta * dot(x, x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlockingReport {
    /// `kappa psi_m > sigma`.
    pub condition_holds: bool,
    pub psi_min: f64,
    pub psi_max: f64,
    /// `min{1, (2 kappa psi_m - 2 sigma) / (1 + kappa^2 psi_M^2)}`; not
    /// positive when the condition fails.
    pub beta_max: f64,
    pub beta_used: Option<f64>,
    /// `a = min{2 kappa psi_m - 2 sigma - (1 + kappa^2 psi_M^2) beta, beta / 2}`.
    pub rate_a: Option<f64>,
    /// Almost-sure exponential rate `a / 3`.
    pub decay_rate: Option<f64>,
    /// Positions must stay within this diameter for `psi_min` to bound the
    /// kernel from below.
    pub certified_radius: Option<f64>,
}

/// Flocking condition and rate constants. `beta` defaults to `beta_max / 2`;
/// a supplied `beta` must lie in `(0, beta_max)`.
pub fn flocking_check(params: &ModelParams, beta: Option<f64>) -> Result<FlockingReport> {
    params.validate()?;
    let (k, s) = (params.kappa, params.sigma);
    let psi_min = params.kernel.psi_min();
    let psi_max = params.kernel.psi_max();
    let gap = 2.0 * k * psi_min - 2.0 * s;
    let spread = 1.0 + k * k * psi_max * psi_max;
    let beta_max = (gap / spread).min(1.0);
    let condition_holds = k * psi_min > s;
    let mut report = FlockingReport {
        condition_holds,
        psi_min,
        psi_max,
        beta_max,
        beta_used: None,
        rate_a: None,
        decay_rate: None,
        certified_radius: params.kernel.certified_radius(),
    };
    if !condition_holds {
        return Ok(report);
    }
    let b = beta.unwrap_or(beta_max / 2.0);
    if !(b > 0.0 && b < beta_max) {
        return Err(Error::param("beta", format!("must lie in (0, {beta_max}), got {b}")));
    }
    let a = (gap - spread * b).min(b / 2.0);
    report.beta_used = Some(b);
    report.rate_a = Some(a);
    report.decay_rate = Some(a / 3.0);
    Ok(report)
}
