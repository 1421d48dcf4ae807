//! Particle configurations and the macro/micro split.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions and velocities of `n` agents in `dim` dimensions, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub time: f64,
    n: usize,
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl ParticleState {
    pub fn new(time: f64, n: usize, dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Shape(format!("need n >= 1 and dim >= 1, got n = {n}, dim = {dim}")));
        }
        if positions.len() != n * dim || velocities.len() != n * dim {
            return Err(Error::Shape(format!(
                "expected {n}x{dim} arrays, got {} positions and {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        if let Some(k) = positions.iter().chain(&velocities).position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite entry at flat index {k}")));
        }
        Ok(Self {
            time,
            n,
            dim,
            positions,
            velocities,
        })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        assert!(n >= 1 && dim >= 1, "empty particle state");
        Self {
            time: 0.0,
            n,
            dim,
            positions: vec![0.0; n * dim],
            velocities: vec![0.0; n * dim],
        }
    }

    /// Build from per-particle rows; convenient in tests.
    pub fn from_rows(time: f64, positions: &[Vec<f64>], velocities: &[Vec<f64>]) -> Result<Self> {
        let n = positions.len();
        let dim = positions.first().map_or(0, Vec::len);
        if velocities.len() != n || positions.iter().chain(velocities).any(|row| row.len() != dim) {
            return Err(Error::Shape("ragged particle rows".into()));
        }
        Self::new(time, n, dim, positions.concat(), velocities.concat())
    }

    /// Trusted constructor for internal stepping code; shape is the caller's
    /// responsibility and finiteness is checked by the stepper.
    pub(crate) fn from_parts(time: f64, n: usize, dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Self {
        debug_assert_eq!(positions.len(), n * dim);
        debug_assert_eq!(velocities.len(), n * dim);
        Self {
            time,
            n,
            dim,
            positions,
            velocities,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean_position(&self) -> Vec<f64> {
        column_means(&self.positions, self.n, self.dim)
    }

    pub fn mean_velocity(&self) -> Vec<f64> {
        column_means(&self.velocities, self.n, self.dim)
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|v| v.is_finite())
    }

    pub fn max_abs_velocity(&self) -> f64 {
        self.velocities.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `S = sum_i |x_i| + sum_i |v_i|` with Euclidean norms.
    pub fn norm_sum(&self) -> f64 {
        self.positions
            .chunks_exact(self.dim)
            .chain(self.velocities.chunks_exact(self.dim))
            .map(norm)
            .sum()
    }

    /// `sum_i |x_i|^2 + |v_i|^2`.
    pub fn squared_norm(&self) -> f64 {
        self.positions.iter().chain(&self.velocities).map(|v| v * v).sum()
    }

    /// Largest pairwise distance between positions.
    pub fn max_pairwise_distance(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n {
            let xi = self.position(i);
            for j in (i + 1)..self.n {
                best = best.max(dist_sq(xi, self.position(j)));
            }
        }
        best.sqrt()
    }
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn column_means(data: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / n as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    mean
}

fn column_sums_ok(data: &[f64], dim: usize, rel_tol: f64) -> bool {
    let mut sums = vec![0.0; dim];
    let mut scale = vec![1.0f64; dim];
    for row in data.chunks_exact(dim) {
        for k in 0..dim {
            sums[k] += row[k];
            scale[k] = scale[k].max(row[k].abs());
        }
    }
    sums.iter().zip(&scale).all(|(s, m)| s.abs() <= rel_tol * m)
}

/// Ensemble mean position and velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub x_c: Vec<f64>,
    pub v_c: Vec<f64>,
    pub time: f64,
}

impl MacroState {
    /// Exact flow of the mean oscillator `x' = v, v' = -x`.
    pub fn closed_form(x0: &[f64], v0: &[f64], t: f64) -> Self {
        assert_eq!(x0.len(), v0.len());
        let (s, c) = t.sin_cos();
        MacroState {
            x_c: x0.iter().zip(v0).map(|(x, v)| x * c + v * s).collect(),
            v_c: x0.iter().zip(v0).map(|(x, v)| v * c - x * s).collect(),
            time: t,
        }
    }

    /// `|x_c|^2 + |v_c|^2`, conserved by the exact flow.
    pub fn energy(&self) -> f64 {
        dot(&self.x_c, &self.x_c) + dot(&self.v_c, &self.v_c)
    }
}

/// Fluctuations about the ensemble mean; column sums vanish.
///
/// When produced by [`macro_decompose`] it also carries the per-entry
/// rounding residuals needed to recompose the original state exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredState {
    state: ParticleState,
    residual: Option<(Vec<f64>, Vec<f64>)>,
}

/// Relative tolerance for the zero-column-sum check.
pub const CENTERED_TOL: f64 = 1e-10;

impl CenteredState {
    /// Wrap a state that already has zero column sums.
    pub fn new(state: ParticleState) -> Result<Self> {
        if !column_sums_ok(&state.positions, state.dim, CENTERED_TOL)
            || !column_sums_ok(&state.velocities, state.dim, CENTERED_TOL)
        {
            return Err(Error::Domain("state does not have zero column sums".into()));
        }
        Ok(Self { state, residual: None })
    }

    /// Subtract ensemble means.
    pub fn project(state: &ParticleState) -> Self {
        macro_decompose(state).1.without_residual()
    }

    fn without_residual(mut self) -> Self {
        self.residual = None;
        self
    }

    pub fn into_inner(self) -> ParticleState {
        self.state
    }

    pub fn as_state(&self) -> &ParticleState {
        &self.state
    }
}

impl Deref for CenteredState {
    type Target = ParticleState;

    fn deref(&self) -> &ParticleState {
        &self.state
    }
}

fn split(data: &[f64], mean: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut fluct = Vec::with_capacity(data.len());
    let mut resid = Vec::with_capacity(data.len());
    for row in data.chunks_exact(dim) {
        for (v, m) in row.iter().zip(mean) {
            let f = v - m;
            fluct.push(f);
            resid.push(v - (f + m));
        }
    }
    (fluct, resid)
}

/// Split a configuration into its ensemble mean and fluctuations.
pub fn macro_decompose(state: &ParticleState) -> (MacroState, CenteredState) {
    let (n, dim) = (state.n, state.dim);
    let x_c = state.mean_position();
    let v_c = state.mean_velocity();
    let (xs, rx) = split(&state.positions, &x_c, dim);
    let (vs, rv) = split(&state.velocities, &v_c, dim);
    let centered = CenteredState {
        state: ParticleState::from_parts(state.time, n, dim, xs, vs),
        residual: Some((rx, rv)),
    };
    (
        MacroState {
            x_c,
            v_c,
            time: state.time,
        },
        centered,
    )
}

/// Inverse of [`macro_decompose`]: `x_i = x_hat_i + x_c`.
pub fn recompose(macro_state: &MacroState, centered: &CenteredState) -> ParticleState {
    let dim = centered.dim;
    let join = |fluct: &[f64], mean: &[f64], resid: Option<&Vec<f64>>| -> Vec<f64> {
        fluct
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let s = f + mean[k % dim];
                match resid {
                    Some(r) => s + r[k],
                    None => s,
                }
            })
            .collect()
    };
    let (rx, rv) = match &centered.residual {
        Some((rx, rv)) => (Some(rx), Some(rv)),
        None => (None, None),
    };
    ParticleState::from_parts(
        centered.time,
        centered.n,
        dim,
        join(&centered.positions, &macro_state.x_c, rx),
        join(&centered.velocities, &macro_state.v_c, rv),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ParticleState::new(0.0, 2, 1, vec![0.0; 2], vec![0.0; 3]).is_err());
        assert!(ParticleState::new(0.0, 0, 1, vec![], vec![]).is_err());
        assert!(ParticleState::new(0.0, 1, 1, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn identical_particles_have_zero_fluctuation() {
        let s = ParticleState::from_rows(0.0, &vec![vec![1.5, -2.0]; 4], &vec![vec![0.25, 3.0]; 4]).unwrap();
        let (m, c) = macro_decompose(&s);
        assert_eq!(m.x_c, vec![1.5, -2.0]);
        assert_eq!(m.v_c, vec![0.25, 3.0]);
        assert!(c.positions().iter().chain(c.velocities()).all(|v| *v == 0.0));
    }

    #[test]
    fn two_particle_mean() {
        let s = ParticleState::new(0.0, 2, 1, vec![-1.0, 3.0], vec![0.0, 0.0]).unwrap();
        let (m, c) = macro_decompose(&s);
        assert_eq!(m.x_c, vec![1.0]);
        assert_eq!(c.positions(), &[-2.0, 2.0]);
    }

    #[test]
    fn closed_form_values() {
        let m = MacroState::closed_form(&[0.3, -1.0], &[2.0, 0.5], 0.0);
        assert_eq!(m.x_c, vec![0.3, -1.0]);
        assert_eq!(m.v_c, vec![2.0, 0.5]);
        let m = MacroState::closed_form(&[0.3, -1.0], &[2.0, 0.5], 2.0 * PI);
        assert_relative_eq!(m.x_c[0], 0.3, epsilon = 1e-14);
        assert_relative_eq!(m.v_c[1], 0.5, epsilon = 1e-14);
        let m = MacroState::closed_form(&[1.0, 0.0], &[0.0, 0.0], PI / 2.0);
        assert!(m.x_c[0].abs() < 1e-15 && m.x_c[1] == 0.0);
        assert_relative_eq!(m.v_c[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn centered_check_uses_relative_tolerance() {
        let ok = ParticleState::new(0.0, 2, 1, vec![1e6, -1e6 + 1e-6], vec![0.0, 0.0]).unwrap();
        assert!(CenteredState::new(ok).is_ok());
        let bad = ParticleState::new(0.0, 2, 1, vec![1.0, -0.9], vec![0.0, 0.0]).unwrap();
        assert!(CenteredState::new(bad).is_err());
    }

    fn arb_state() -> impl Strategy<Value = ParticleState> {
        (1usize..12, 1usize..4).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(-1e3f64..1e3, n * d),
                prop::collection::vec(-1e3f64..1e3, n * d),
            )
                .prop_map(move |(x, v)| ParticleState::new(0.5, n, d, x, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn decompose_round_trip_is_exact(s in arb_state()) {
            let (m, c) = macro_decompose(&s);
            prop_assert_eq!(recompose(&m, &c), s);
        }

        #[test]
        fn fluctuations_sum_to_zero(s in arb_state()) {
            let c = CenteredState::project(&s);
            prop_assert!(CenteredState::new(c.into_inner()).is_ok());
        }

        #[test]
        fn closed_form_conserves_energy(x0 in -10f64..10.0, y0 in -10f64..10.0, v0 in -10f64..10.0, t in -100f64..100.0) {
            let start = MacroState::closed_form(&[x0, y0], &[v0, 0.0], 0.0);
            let later = MacroState::closed_form(&[x0, y0], &[v0, 0.0], t);
            let e0 = start.energy();
            prop_assert!((later.energy() - e0).abs() <= 1e-12 * e0.max(1e-300));
        }
    }
}
