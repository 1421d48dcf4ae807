//! Euler–Maruyama integration of the particle system.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{centered_velocity_drift, drift, CenteredState, ModelParams, ParticleState};
use crate::rng::{realization_seed, rng_from_seed, NoiseStream};

/// Runs halt once any velocity component exceeds this magnitude.
pub const VELOCITY_GUARD: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `record_every`-th state (the final state is always kept).
    pub record_every: usize,
    pub seed: u64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 2.0,
            record_every: 1,
            seed: 42,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::param("t_final", format!("must be > 0, got {}", self.t_final)));
        }
        if self.dt > self.t_final {
            return Err(Error::param("dt", format!("must not exceed t_final = {}", self.t_final)));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be >= 1"));
        }
        if self.t_final / self.dt > 1e10 {
            return Err(Error::param("dt", "step count exceeds 1e10"));
        }
        Ok(())
    }

    /// `ceil(t_final / dt)`, robust to the rounding in the quotient.
    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    #[inline]
    pub(crate) fn is_recorded(&self, step: usize, n_steps: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == n_steps
    }
}

/// Why a run stopped before `t_final`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halt {
    pub step: usize,
    pub time: f64,
    pub max_abs_velocity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<ParticleState>,
    pub noise_seed: u64,
    pub params: ModelParams,
    pub centered: bool,
    /// Set when the velocity guard stopped the run.
    pub halt: Option<Halt>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &ParticleState {
        self.states.last().expect("trajectory records are never empty")
    }
}

/// One Euler–Maruyama step of the particle system.
///
/// The diffusion reference velocity is the ensemble mean of the input state,
/// or zero when `centered` is set (the fluctuation system, whose noise is
/// `sqrt(2 sigma) v_i dW`).
pub fn em_step(state: &ParticleState, params: &ModelParams, dt: f64, dw: f64, centered: bool) -> Result<ParticleState> {
    params.check_shape(state)?;
    let next = em_step_unchecked(state, params, dt, dw, centered)?;
    if !next.is_finite() {
        return Err(Error::NonFinite { step: 0, time: next.time });
    }
    Ok(next)
}

fn em_step_unchecked(state: &ParticleState, params: &ModelParams, dt: f64, dw: f64, centered: bool) -> Result<ParticleState> {
    let dim = state.dim();
    let (dv, v_ref) = if centered {
        (centered_velocity_drift(state, params), vec![0.0; dim])
    } else {
        (drift(state, params)?.1, state.mean_velocity())
    };
    let noise = params.noise_scale() * dw;
    let x: Vec<f64> = state
        .positions()
        .iter()
        .zip(state.velocities())
        .map(|(x, v)| x + v * dt)
        .collect();
    let v: Vec<f64> = state
        .velocities()
        .iter()
        .zip(&dv)
        .enumerate()
        .map(|(k, (v, a))| v + a * dt + noise * (v - v_ref[k % dim]))
        .collect();
    Ok(ParticleState::from_parts(state.time + dt, state.n(), dim, x, v))
}

/// Integrate from `initial` to `cfg.t_final` with one shared scalar noise
/// path drawn from `cfg.seed`.
pub fn simulate(initial: &ParticleState, params: &ModelParams, cfg: &StepConfig, centered: bool) -> Result<TrajectoryRecord> {
    params.validate()?;
    cfg.validate()?;
    params.check_shape(initial)?;
    if !initial.is_finite() {
        return Err(Error::NonFinite { step: 0, time: initial.time });
    }
    let n_steps = cfg.n_steps();
    let t0 = initial.time;
    let mut noise = NoiseStream::new(cfg.seed, cfg.dt);
    let mut times = vec![t0];
    let mut states = vec![initial.clone()];
    let mut current = initial.clone();
    let mut halt = None;
    for step in 1..=n_steps {
        let dw = noise.next_increment();
        let mut next = em_step_unchecked(&current, params, cfg.dt, dw, centered)?;
        next.time = t0 + step as f64 * cfg.dt;
        if !next.is_finite() {
            return Err(Error::NonFinite { step, time: next.time });
        }
        let vmax = next.max_abs_velocity();
        if vmax > VELOCITY_GUARD {
            halt = Some(Halt {
                step,
                time: next.time,
                max_abs_velocity: vmax,
            });
            times.push(next.time);
            states.push(next);
            break;
        }
        if cfg.is_recorded(step, n_steps) {
            times.push(next.time);
            states.push(next.clone());
        }
        current = next;
    }
    Ok(TrajectoryRecord {
        times,
        states,
        noise_seed: cfg.seed,
        params: params.clone(),
        centered,
        halt,
    })
}

/// Initial law: i.i.d. uniform on `[-h, h]^dim` for positions and
/// velocities, optionally centered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub box_half_width: f64,
    pub project: bool,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            box_half_width: 1.0,
            project: true,
        }
    }
}

impl InitSpec {
    pub fn draw(&self, n: usize, dim: usize, seed: u64) -> Result<ParticleState> {
        init_uniform(n, dim, self.box_half_width, seed, self.project)
    }
}

/// I.i.d. uniform positions and velocities in `[-h, h]^dim`; with `project`
/// the ensemble means are subtracted.
pub fn init_uniform(n: usize, dim: usize, box_half_width: f64, seed: u64, project: bool) -> Result<ParticleState> {
    if !(box_half_width.is_finite() && box_half_width > 0.0) {
        return Err(Error::param("box_half_width", format!("must be > 0, got {box_half_width}")));
    }
    if n == 0 || dim == 0 {
        return Err(Error::Shape("need n >= 1 and dim >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let h = box_half_width;
    let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-h..=h)).collect();
    let v: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-h..=h)).collect();
    let state = ParticleState::new(0.0, n, dim, x, v)?;
    Ok(if project {
        CenteredState::project(&state).into_inner()
    } else {
        state
    })
}

/// `m` independent realizations; realization `k` draws its noise from
/// [`realization_seed`]`(cfg.seed, k)`. Output is ordered by `k`.
pub fn fan_out(
    initial: &ParticleState,
    params: &ModelParams,
    cfg: &StepConfig,
    m: usize,
    centered: bool,
) -> Result<Vec<TrajectoryRecord>> {
    if m == 0 {
        return Err(Error::param("realizations", "must be >= 1"));
    }
    (0..m)
        .into_par_iter()
        .map(|k| simulate(initial, params, &cfg.with_seed(realization_seed(cfg.seed, k as u64)), centered))
        .collect()
}

/// Euler–Maruyama for the scalar linear SDE `dy = a y dt + b y dW`.
pub fn em_linear_scalar(y0: f64, a: f64, b: f64, dt: f64, increments: &[f64]) -> f64 {
    increments.iter().fold(y0, |y, dw| y + a * y * dt + b * y * dw)
}

/// Mean absolute endpoint error of Euler-Maruyama on
/// `dY = a Y dt + b Y dW`, `Y_0 = 1`, against the exact geometric Brownian
/// motion, for step sizes `t / (fine_steps / r)` with `r` in `ratios`.
/// All step sizes share each Brownian path. Returns `(dt, error)` pairs.
pub fn strong_error_sweep(a: f64, b: f64, t: f64, fine_steps: usize, ratios: &[usize], paths: usize, seed: u64) -> Vec<(f64, f64)> {
    let fine_dt = t / fine_steps as f64;
    let mut sums = vec![0.0; ratios.len()];
    let mut coarse = Vec::with_capacity(fine_steps);
    for p in 0..paths {
        let mut stream = NoiseStream::new(realization_seed(seed, p as u64), fine_dt);
        let fine: Vec<f64> = (0..fine_steps).map(|_| stream.next_increment()).collect();
        let w: f64 = fine.iter().sum();
        let exact = ((a - 0.5 * b * b) * t + b * w).exp();
        for (slot, &r) in sums.iter_mut().zip(ratios) {
            coarse.clear();
            coarse.extend(fine.chunks(r).map(|c| c.iter().sum::<f64>()));
            *slot += (em_linear_scalar(1.0, a, b, fine_dt * r as f64, &coarse) - exact).abs();
        }
    }
    ratios
        .iter()
        .zip(sums)
        .map(|(&r, s)| (fine_dt * r as f64, s / paths as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelSpec;
    use approx::assert_relative_eq;

    fn params(kappa: f64, sigma: f64, n: usize, dim: usize) -> ModelParams {
        ModelParams::new(kappa, sigma, KernelSpec::constant(1.0), n, dim).unwrap()
    }

    #[test]
    fn zero_state_only_advances_time() {
        let p = params(1.0, 0.5, 3, 2);
        let s = em_step(&ParticleState::zeros(3, 2), &p, 0.01, 0.0, false).unwrap();
        assert_eq!(s.time, 0.01);
        assert!(s.positions().iter().chain(s.velocities()).all(|v| *v == 0.0));
    }

    #[test]
    fn centered_single_particle_hand_values() {
        let p = params(3.7, 0.5, 1, 1);
        let s = ParticleState::new(0.0, 1, 1, vec![1.0], vec![0.0]).unwrap();
        let s = em_step(&s, &p, 0.1, 0.0, true).unwrap();
        assert_eq!(s.positions(), &[1.0]);
        assert_relative_eq!(s.velocities()[0], -0.1, epsilon = 1e-15);

        let p = params(1.0, 0.5, 1, 1);
        let s = ParticleState::new(0.0, 1, 1, vec![0.0], vec![2.0]).unwrap();
        let s = em_step(&s, &p, 0.01, 0.05, true).unwrap();
        assert_relative_eq!(s.velocities()[0], 2.08, epsilon = 1e-14);
        assert_relative_eq!(s.positions()[0], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_step_is_a_fault() {
        let p = params(1.0, 0.5, 1, 1);
        let s = ParticleState::new(0.0, 1, 1, vec![0.0], vec![1e300]).unwrap();
        assert!(matches!(em_step(&s, &p, 1.0, 1e300, true), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn single_step_record_has_two_states() {
        let p = params(1.0, 0.5, 2, 1);
        let cfg = StepConfig {
            dt: 0.1,
            t_final: 0.1,
            record_every: 1,
            seed: 3,
        };
        let rec = simulate(&ParticleState::zeros(2, 1), &p, &cfg, false).unwrap();
        assert_eq!(rec.states.len(), 2);
        assert_eq!(rec.times, vec![0.0, 0.1]);
    }

    #[test]
    fn final_time_within_one_step() {
        let p = params(1.0, 0.5, 2, 1);
        for (dt, tf) in [(1e-3, 2.0), (0.3, 1.0), (0.1, 0.7)] {
            let cfg = StepConfig {
                dt,
                t_final: tf,
                record_every: 7,
                seed: 1,
            };
            let rec = simulate(&ParticleState::zeros(2, 1), &p, &cfg, false).unwrap();
            let t_end = *rec.times.last().unwrap();
            assert!(t_end >= tf - 1e-12 && t_end < tf + dt, "{t_end} vs {tf}");
            assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
            assert!(rec.states.iter().zip(&rec.times).all(|(s, t)| s.time == *t));
        }
    }

    #[test]
    fn same_seed_same_record() {
        let p = ModelParams::new(2.0, 0.5, KernelSpec::algebraic_quarter(None), 6, 2).unwrap();
        let init = init_uniform(6, 2, 3.0, 9, true).unwrap();
        let cfg = StepConfig {
            dt: 1e-3,
            t_final: 0.5,
            record_every: 10,
            seed: 77,
        };
        let a = simulate(&init, &p, &cfg, true).unwrap();
        let b = simulate(&init, &p, &cfg, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_projection() {
        let s = init_uniform(100, 2, 50.0, 4, true).unwrap();
        for k in 0..2 {
            let sx: f64 = s.positions().iter().skip(k).step_by(2).sum();
            let sv: f64 = s.velocities().iter().skip(k).step_by(2).sum();
            assert!(sx.abs() <= 1e-10 * 50.0 && sv.abs() <= 1e-10 * 50.0);
        }
        let one = init_uniform(1, 3, 50.0, 4, true).unwrap();
        assert!(one.positions().iter().chain(one.velocities()).all(|v| *v == 0.0));
        assert_eq!(init_uniform(5, 2, 1.0, 8, false).unwrap(), init_uniform(5, 2, 1.0, 8, false).unwrap());
        assert!(init_uniform(5, 2, 0.0, 8, false).is_err());
    }

    #[test]
    fn fan_out_of_one_is_simulate() {
        let p = params(2.0, 0.5, 4, 2);
        let init = init_uniform(4, 2, 1.0, 1, true).unwrap();
        let cfg = StepConfig {
            dt: 1e-2,
            t_final: 1.0,
            record_every: 5,
            seed: 99,
        };
        let many = fan_out(&init, &p, &cfg, 1, true).unwrap();
        assert_eq!(many[0], simulate(&init, &p, &cfg, true).unwrap());
        let two = fan_out(&init, &p, &cfg, 2, true).unwrap();
        assert_ne!(two[0].last(), two[1].last());
    }

    #[test]
    fn velocity_guard_halts_cleanly() {
        // strong growth: sigma >> kappa with a large initial velocity
        let p = params(0.1, 50.0, 1, 1);
        let s = ParticleState::new(0.0, 1, 1, vec![0.0], vec![1e11]).unwrap();
        let cfg = StepConfig {
            dt: 1e-2,
            t_final: 50.0,
            record_every: 100,
            seed: 5,
        };
        let rec = simulate(&s, &p, &cfg, true).unwrap();
        let halt = rec.halt.expect("guard should trip");
        assert!(halt.max_abs_velocity > VELOCITY_GUARD);
        assert_eq!(*rec.times.last().unwrap(), halt.time);
    }

    #[test]
    fn strong_order_is_one_half() {
        let pts = strong_error_sweep(0.5, 1.0, 1.0, 1024, &[4, 8, 16, 32, 64], 2000, 11);
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        assert!((0.4..=0.6).contains(&slope), "strong order {slope}");
    }
}
