use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Fixed RK4 step of the moment oracle.
pub const ORACLE_DT: f64 = 1e-4;

/// Per-coordinate second moments `(E[x^2], E[x v], E[v^2])` of one particle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub exx: f64,
    pub exv: f64,
    pub evv: f64,
}

impl Moments {
    pub fn new(exx: f64, exv: f64, evv: f64) -> Self {
        Self { exx, exv, evv }
    }

    fn as_array(self) -> [f64; 3] {
        [self.exx, self.exv, self.evv]
    }
}

/// Second moments of the centered constant-kernel system at time `t`.
///
/// With constant weight `c` each coordinate obeys
/// `dx = v dt, dv = -(kappa c) v dt - x dt + sqrt(2 sigma) v dW`, whose
/// second moments satisfy a closed linear system integrated here with RK4.
pub fn moment_ode_oracle(params: &ModelParams, initial: Moments, t: f64) -> Result<Moments> {
    let c = params
        .kernel
        .as_constant()
        .ok_or_else(|| Error::Unsupported("the moment oracle needs a constant kernel".into()))?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("t", format!("must be >= 0, got {t}")));
    }
    let k = params.kappa * c;
    let s = params.sigma;
    let rhs = |m: [f64; 3]| -> [f64; 3] {
        [
            2.0 * m[1],
            m[2] - m[0] - k * m[1],
            -2.0 * (k - s) * m[2] - 2.0 * m[1],
        ]
    };
    let steps = (t / ORACLE_DT).ceil() as usize;
    let mut y = initial.as_array();
    if steps == 0 {
        return Ok(initial);
    }
    let h = t / steps as f64;
    let axpy = |y: [f64; 3], a: f64, d: [f64; 3]| [y[0] + a * d[0], y[1] + a * d[1], y[2] + a * d[2]];
    for _ in 0..steps {
        let k1 = rhs(y);
        let k2 = rhs(axpy(y, h / 2.0, k1));
        let k3 = rhs(axpy(y, h / 2.0, k2));
        let k4 = rhs(axpy(y, h, k3));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(Moments::new(y[0], y[1], y[2]))
}
