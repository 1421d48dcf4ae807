//! Drift and diffusion fields of the particle system.

use super::params::{ModelParams, Summation};
use super::state::{dist_sq, ParticleState};
use crate::error::Result;

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// `(kappa / N) sum_j psi(|x_j - x_i|) (v_j - v_i)` for every `i`, summed
/// over `j` in index order.
pub fn alignment(state: &ParticleState, params: &ModelParams) -> Vec<f64> {
    let (n, dim) = (state.n(), state.dim());
    let scale = params.kappa / n as f64;
    let kernel = &params.kernel;
    let mut out = vec![0.0; n * dim];
    match params.summation {
        Summation::Plain => {
            let mut acc = vec![0.0; dim];
            for i in 0..n {
                let (xi, vi) = (state.position(i), state.velocity(i));
                acc.iter_mut().for_each(|a| *a = 0.0);
                for j in 0..n {
                    let w = kernel.psi_sq(dist_sq(state.position(j), xi));
                    for ((a, vj), vi) in acc.iter_mut().zip(state.velocity(j)).zip(vi) {
                        *a += w * (vj - vi);
                    }
                }
                for (o, a) in out[i * dim..(i + 1) * dim].iter_mut().zip(&acc) {
                    *o = scale * a;
                }
            }
        }
        Summation::Compensated => {
            let mut acc = vec![Neumaier::default(); dim];
            for i in 0..n {
                let (xi, vi) = (state.position(i), state.velocity(i));
                acc.iter_mut().for_each(|a| *a = Neumaier::default());
                for j in 0..n {
                    let w = kernel.psi_sq(dist_sq(state.position(j), xi));
                    for ((a, vj), vi) in acc.iter_mut().zip(state.velocity(j)).zip(vi) {
                        a.add(w * (vj - vi));
                    }
                }
                for (o, a) in out[i * dim..(i + 1) * dim].iter_mut().zip(&acc) {
                    *o = scale * a.value();
                }
            }
        }
    }
    out
}

/// Drift of the particle system: `dx_i = v_i`,
/// `dv_i = (kappa/N) sum_j psi(|x_j - x_i|)(v_j - v_i) - x_i`.
pub fn drift(state: &ParticleState, params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check_shape(state)?;
    let dx = state.velocities().to_vec();
    let mut dv = alignment(state, params);
    for (a, x) in dv.iter_mut().zip(state.positions()) {
        *a -= x;
    }
    Ok((dx, dv))
}

/// Velocity drift of the fluctuation system about a frame whose mean
/// velocity is zero.
///
/// For a constant kernel `c` the alignment sum on the zero-mean subspace is
/// exactly `-kappa c v_i`, which is what gets evaluated (O(N)). Other kernels
/// use the pairwise sum.
pub fn centered_velocity_drift(state: &ParticleState, params: &ModelParams) -> Vec<f64> {
    match params.kernel.as_constant() {
        Some(c) => {
            let rate = params.kappa * c;
            state
                .velocities()
                .iter()
                .zip(state.positions())
                .map(|(v, x)| -rate * v - x)
                .collect()
        }
        None => {
            let mut dv = alignment(state, params);
            for (a, x) in dv.iter_mut().zip(state.positions()) {
                *a -= x;
            }
            dv
        }
    }
}

/// Diffusion coefficient: row `i` is `sqrt(2 sigma) (v_i - v_ref)`. Every
/// row and component is driven by the same scalar Brownian increment.
pub fn diffusion(state: &ParticleState, params: &ModelParams, v_ref: &[f64]) -> Vec<f64> {
    assert_eq!(v_ref.len(), state.dim(), "reference velocity has wrong dimension");
    let s = params.noise_scale();
    state
        .velocities()
        .chunks_exact(state.dim())
        .flat_map(|row| row.iter().zip(v_ref).map(move |(v, r)| s * (v - r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CenteredState, KernelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(kappa: f64, sigma: f64, kernel: KernelSpec, n: usize, dim: usize) -> ModelParams {
        ModelParams::new(kappa, sigma, kernel, n, dim).unwrap()
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let p = params(3.0, 0.2, KernelSpec::algebraic_quarter(None), 5, 2);
        let (dx, dv) = drift(&ParticleState::zeros(5, 2), &p).unwrap();
        assert!(dx.iter().chain(&dv).all(|v| *v == 0.0));
    }

    #[test]
    fn two_particle_hand_evaluation() {
        let p = params(1.0, 0.1, KernelSpec::constant(1.0), 2, 1);
        let s = ParticleState::new(0.0, 2, 1, vec![0.0, 2.0], vec![1.0, -1.0]).unwrap();
        let (dx, dv) = drift(&s, &p).unwrap();
        assert_eq!(dx, vec![1.0, -1.0]);
        assert_eq!(dv, vec![-1.0, -1.0]);
    }

    #[test]
    fn single_particle_has_no_alignment() {
        let p = params(7.0, 0.1, KernelSpec::constant(1.0), 1, 3);
        let s = ParticleState::new(0.0, 1, 3, vec![1.0, -2.0, 0.5], vec![4.0, 4.0, 4.0]).unwrap();
        let (_, dv) = drift(&s, &p).unwrap();
        assert_eq!(dv, vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = params(1.0, 0.1, KernelSpec::constant(1.0), 3, 2);
        assert!(drift(&ParticleState::zeros(2, 2), &p).is_err());
    }

    #[test]
    fn diffusion_examples() {
        let p = params(1.0, 2.0, KernelSpec::constant(1.0), 1, 2);
        let s = ParticleState::new(0.0, 1, 2, vec![0.0; 2], vec![1.5, -1.0]).unwrap();
        assert_eq!(diffusion(&s, &p, &[0.5, -1.0]), vec![2.0, 0.0]);
        let p = params(1.0, 0.5, KernelSpec::constant(1.0), 1, 2);
        let s = ParticleState::new(0.0, 1, 2, vec![0.0; 2], vec![3.0, -3.0]).unwrap();
        assert_eq!(diffusion(&s, &p, &[0.0, 0.0]), vec![3.0, -3.0]);
        let consensus = ParticleState::new(0.0, 2, 2, vec![0.0; 4], vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!(diffusion(&consensus, &p, &[1.0, 2.0]).iter().all(|v| *v == 0.0));
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> ParticleState {
        let x = (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect();
        let v = (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect();
        ParticleState::new(0.0, n, dim, x, v).unwrap()
    }

    #[test]
    fn constant_kernel_reduction_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, dim) in &[(2, 1), (7, 2), (40, 3)] {
            let p = params(2.5, 0.3, KernelSpec::constant(1.3), n, dim);
            let s = CenteredState::project(&random_state(&mut rng, n, dim, 5.0));
            let reduced = centered_velocity_drift(&s, &p);
            let (_, generic) = drift(&s, &p).unwrap();
            let scale = generic.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in reduced.iter().zip(&generic) {
                assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn compensated_agrees_with_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(&mut rng, 64, 2, 10.0);
        let mut p = params(1.0, 0.1, KernelSpec::algebraic_quarter(None), 64, 2);
        let plain = alignment(&s, &p);
        p.summation = Summation::Compensated;
        let comp = alignment(&s, &p);
        for (a, b) in plain.iter().zip(&comp) {
            assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn alignment_sums_to_zero(seed in any::<u64>(), n in 1usize..40, dim in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&mut rng, n, dim, 20.0);
            let p = params(1.0, 0.1, KernelSpec::algebraic_quarter(None), n, dim);
            let a = alignment(&s, &p);
            let vmax = s.max_abs_velocity().max(1e-300);
            for k in 0..dim {
                let total: f64 = a.iter().skip(k).step_by(dim).sum::<f64>() * n as f64 / p.kappa;
                prop_assert!(total.abs() <= 1e-9 * (n * n) as f64 * vmax);
            }
        }
    }
}
