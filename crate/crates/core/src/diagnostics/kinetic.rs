use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParticleState};

/// Weighted point set over phase space, the finite stand-in for a kinetic
/// density. Total weight is the mass.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(dim: usize, positions: Vec<f64>, velocities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dim must be >= 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = weights.len();
        if positions.len() != n * dim || velocities.len() != n * dim {
            return Err(Error::Shape(format!("{n} weights need {} coordinates", n * dim)));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Domain("total weight must be positive".into()));
        }
        Ok(Self {
            dim,
            positions,
            velocities,
            weights,
        })
    }

    /// Equal weights `mass / N` on the particles of `state`.
    pub fn from_state(state: &ParticleState, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::param("mass", format!("must be > 0, got {mass}")));
        }
        let w = mass / state.n() as f64;
        Self::new(state.dim(), state.positions().to_vec(), state.velocities().to_vec(), vec![w; state.n()])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.velocities[k * self.dim..(k + 1) * self.dim]
    }

    fn weighted_means(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xc = vec![0.0; self.dim];
        let mut vc = vec![0.0; self.dim];
        for (k, w) in self.weights.iter().enumerate() {
            for d in 0..self.dim {
                xc[d] += w * self.positions[k * self.dim + d];
                vc[d] += w * self.velocities[k * self.dim + d];
            }
        }
        let m = self.mass();
        xc.iter_mut().chain(vc.iter_mut()).for_each(|c| *c /= m);
        (xc, vc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceFunctionals {
    /// `sum w (|x - x_c|^2 + |v - v_c|^2)`.
    pub l_std: f64,
    /// `sum w (|x - x_c|^2 / 2 + |v - v_c|^2 / 2 + eps (x - x_c).(v - v_c))`.
    pub l_tilde: f64,
}

/// Both variance functionals of a sample; means come from the same sample.
/// `|epsilon| <= 1/2` keeps the two functionals equivalent.
pub fn variance_functionals(sample: &WeightedSample, epsilon: f64) -> Result<VarianceFunctionals> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(epsilon.abs() <= 0.5) {
        return Err(Error::param("epsilon", format!("|epsilon| must be <= 1/2, got {epsilon}")));
    }
    let (xc, vc) = sample.weighted_means();
    let (mut sq_x, mut sq_v, mut cross) = (0.0, 0.0, 0.0);
    for (k, w) in sample.weights.iter().enumerate() {
        let (mut px, mut pv, mut pc) = (0.0, 0.0, 0.0);
        for d in 0..sample.dim {
            let dx = sample.positions[k * sample.dim + d] - xc[d];
            let dv = sample.velocities[k * sample.dim + d] - vc[d];
            px += dx * dx;
            pv += dv * dv;
            pc += dx * dv;
        }
        sq_x += w * px;
        sq_v += w * pv;
        cross += w * pc;
    }
    Ok(VarianceFunctionals {
        l_std: sq_x + sq_v,
        l_tilde: 0.5 * sq_x + 0.5 * sq_v + epsilon * cross,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticRegime {
    /// `kappa psi_m mass > d sigma`: the velocity-position variance decays.
    Decay,
    /// `kappa psi_M mass < d sigma`: the variance grows.
    Growth,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticRegimeReport {
    pub regime: KineticRegime,
    pub mass: f64,
    pub dim: usize,
    /// Decay rate constant `min{1/4, (k psi_m m - d sigma) / (4 (1 + 2 (k psi_M)^2))}`.
    pub c_m: Option<f64>,
    /// Growth rate constant, evaluated from the cross-term weight `epsilon_growth`.
    pub c_big: Option<f64>,
    /// Growth constant in the closed form `min{(1 + 2 (k psi_M)^2) / 2, (d sigma - k psi_M m) / 2}`.
    pub c_big_closed_form: Option<f64>,
    /// Set when the two growth constants disagree beyond rounding.
    pub c_big_mismatch: bool,
    /// `min{1/2, (k psi_m m - d sigma) / (2 (1 + 2 (k psi_M)^2))}`, the default cross weight in decay.
    pub epsilon_decay: Option<f64>,
    /// `max{-1/2, k psi_M m - d sigma}`.
    pub epsilon_growth: Option<f64>,
}

impl KineticRegimeReport {
    /// Cross-term weight for the modified functional: the regime's own
    /// choice, zero when indeterminate.
    pub fn default_epsilon(&self) -> f64 {
        self.epsilon_decay.or(self.epsilon_growth).unwrap_or(0.0)
    }
}

/// Regime classification and rate constants for mass `mass` in dimension
/// `params.dim`.
pub fn kinetic_regime(params: &ModelParams, mass: f64) -> Result<KineticRegimeReport> {
    params.validate()?;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::param("mass", format!("must be > 0, got {mass}")));
    }
    let d = params.dim as f64;
    let ds = d * params.sigma;
    let lo = params.kappa * params.kernel.psi_min();
    let hi = params.kappa * params.kernel.psi_max();
    let spread = 1.0 + 2.0 * hi * hi;
    let mut report = KineticRegimeReport {
        regime: KineticRegime::Indeterminate,
        mass,
        dim: params.dim,
        c_m: None,
        c_big: None,
        c_big_closed_form: None,
        c_big_mismatch: false,
        epsilon_decay: None,
        epsilon_growth: None,
    };
    if lo * mass > ds {
        let excess = lo * mass - ds;
        report.regime = KineticRegime::Decay;
        report.c_m = Some((excess / (4.0 * spread)).min(0.25));
        report.epsilon_decay = Some((excess / (2.0 * spread)).min(0.5));
    } else if hi * mass < ds {
        let deficit = ds - hi * mass;
        let eps = (-deficit).max(-0.5);
        let from_eps = (-spread * eps).min(deficit / 2.0);
        let closed = (spread / 2.0).min(deficit / 2.0);
        report.regime = KineticRegime::Growth;
        report.epsilon_growth = Some(eps);
        report.c_big = Some(from_eps);
        report.c_big_closed_form = Some(closed);
        report.c_big_mismatch = (from_eps - closed).abs() > 1e-14 * closed.abs().max(1.0);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{lyapunov_v, LyapunovParams};
    use crate::model::{CenteredState, KernelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_and_two_point_law() {
        let one = WeightedSample::new(2, vec![3.0, 1.0], vec![-2.0, 0.5], vec![1.0]).unwrap();
        let f = variance_functionals(&one, 0.3).unwrap();
        assert_eq!((f.l_std, f.l_tilde), (0.0, 0.0));
        let two = WeightedSample::new(1, vec![-1.0, 1.0], vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
        for eps in [-0.5, 0.0, 0.2] {
            let f = variance_functionals(&two, eps).unwrap();
            assert_relative_eq!(f.l_std, 1.0);
            assert_relative_eq!(f.l_tilde, 0.5);
        }
    }

    #[test]
    fn rejects_empty_and_bad_epsilon() {
        assert!(matches!(WeightedSample::new(1, vec![], vec![], vec![]), Err(Error::EmptySample)));
        let s = WeightedSample::new(1, vec![0.0], vec![0.0], vec![1.0]).unwrap();
        assert!(variance_functionals(&s, 0.6).is_err());
    }

    #[test]
    fn growth_constants() {
        let p = ModelParams::new(0.1, 1.0, KernelSpec::constant(1.0), 2048, 2).unwrap();
        let r = kinetic_regime(&p, 1.0).unwrap();
        assert_eq!(r.regime, KineticRegime::Growth);
        assert_eq!(r.epsilon_growth, Some(-0.5));
        assert_relative_eq!(r.c_big.unwrap(), 0.51, epsilon = 1e-15);
        assert!(!r.c_big_mismatch);
    }

    #[test]
    fn decay_constants() {
        let p = ModelParams::new(1.0, 0.01, KernelSpec::constant(1.0), 2048, 1).unwrap();
        let r = kinetic_regime(&p, 1.0).unwrap();
        assert_eq!(r.regime, KineticRegime::Decay);
        assert_relative_eq!(r.c_m.unwrap(), 0.0825, epsilon = 1e-15);
        assert_relative_eq!(r.epsilon_decay.unwrap(), 0.165, epsilon = 1e-15);
    }

    #[test]
    fn boundary_is_indeterminate() {
        let p = ModelParams::new(0.5, 0.25, KernelSpec::constant(1.0), 4, 2).unwrap();
        let r = kinetic_regime(&p, 1.0).unwrap();
        assert_eq!(r.regime, KineticRegime::Indeterminate);
        assert!(r.c_m.is_none() && r.c_big.is_none());
    }

    #[test]
    fn equal_weight_sample_matches_state_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 37;
        let x = (0..n * 2).map(|_| rng.random_range(-4.0..4.0)).collect();
        let v = (0..n * 2).map(|_| rng.random_range(-4.0..4.0)).collect();
        let state = ParticleState::new(0.0, n, 2, x, v).unwrap();
        let f = variance_functionals(&WeightedSample::from_state(&state, 1.0).unwrap(), 0.5).unwrap();
        let c = CenteredState::project(&state);
        assert_relative_eq!(f.l_std, c.squared_norm() / n as f64, max_relative = 1e-12);
        // with beta = 2 eps and alpha = 1, l_tilde is half of V / N
        let v = lyapunov_v(&c, &LyapunovParams::with_beta(1.0));
        assert_relative_eq!(f.l_tilde, 0.5 * v / n as f64, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn functional_sandwich(seed in any::<u64>(), n in 1usize..30, dim in 1usize..4, eps in -0.5f64..=0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = (0..n * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v = (0..n * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let w = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let s = WeightedSample::new(dim, x, v, w).unwrap();
            let f = variance_functionals(&s, eps).unwrap();
            let tol = 1e-12 * f.l_std;
            prop_assert!(3.0 / 16.0 * f.l_std <= f.l_tilde + tol);
            prop_assert!(f.l_tilde <= 0.75 * f.l_std + tol);
        }

        #[test]
        fn regimes_are_exclusive(kappa in 0.01f64..10.0, sigma in 0.0f64..5.0, dim in 1usize..4, mass in 0.1f64..3.0) {
            let p = ModelParams::new(kappa, sigma, KernelSpec::algebraic_quarter(Some(2.0)), 2, dim).unwrap();
            let r = kinetic_regime(&p, mass).unwrap();
            prop_assert!(p.kernel.psi_min() <= p.kernel.psi_max());
            match r.regime {
                KineticRegime::Decay => prop_assert!(r.c_m.unwrap() > 0.0 && r.c_big.is_none()),
                KineticRegime::Growth => prop_assert!(r.c_big.unwrap() > 0.0 && r.c_m.is_none() && !r.c_big_mismatch),
                KineticRegime::Indeterminate => prop_assert!(r.c_m.is_none() && r.c_big.is_none()),
            }
        }
    }
}
