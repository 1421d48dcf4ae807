//! Communication weights `psi(r)` and their certified bounds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear weight over `(radius, value)` nodes, held constant
/// past the last node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(Error::param(
                "kernel",
                "table needs matching, non-empty radius and value columns",
            ));
        }
        if radii[0] != 0.0 {
            return Err(Error::param("kernel", "table must start at r = 0"));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::param("kernel", "table radii must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("kernel", "table values must be finite and positive"));
        }
        Ok(Self { radii, values })
    }

    fn eval(&self, r: f64) -> f64 {
        let k = self.radii.partition_point(|&node| node <= r);
        if k >= self.radii.len() {
            return *self.values.last().unwrap();
        }
        // k >= 1 because radii[0] == 0 <= r
        let (r0, r1) = (self.radii[k - 1], self.radii[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Communication weight `psi`.
///
/// `AlgebraicQuarter` is `(1 + r^2)^(-1/4)`. Its infimum over all radii is
/// zero, so a positive lower bound only exists on a ball: `radius` declares
/// that ball and `psi_min` is then `(1 + R^2)^(-1/4)`. Without a radius the
/// lower bound is reported as 0 (uncertified).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelSpec {
    Constant { value: f64 },
    AlgebraicQuarter { radius: Option<f64> },
    Custom { table: KernelTable },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Constant { value: 1.0 }
    }
}

#[inline]
fn algebraic_quarter_sq(r2: f64) -> f64 {
    1.0 / (1.0 + r2).sqrt().sqrt()
}

impl KernelSpec {
    pub fn constant(value: f64) -> Self {
        KernelSpec::Constant { value }
    }

    pub fn algebraic_quarter(radius: Option<f64>) -> Self {
        KernelSpec::AlgebraicQuarter { radius }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::param("kernel", format!("constant must be positive, got {value}")));
                }
            }
            KernelSpec::AlgebraicQuarter { radius: Some(r) } => {
                if !(r.is_finite() && *r > 0.0) {
                    return Err(Error::param("kernel", format!("certification radius must be positive, got {r}")));
                }
            }
            KernelSpec::AlgebraicQuarter { radius: None } | KernelSpec::Custom { .. } => {}
        }
        Ok(())
    }

    /// `psi(r)`; errors on negative or NaN radius.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("kernel radius must be >= 0, got {r}")));
        }
        Ok(self.psi(r))
    }

    /// Unchecked evaluation for hot loops; `r` must be non-negative.
    #[inline]
    pub fn psi(&self, r: f64) -> f64 {
        match self {
            KernelSpec::Constant { value } => *value,
            KernelSpec::AlgebraicQuarter { .. } => algebraic_quarter_sq(r * r),
            KernelSpec::Custom { table } => table.eval(r),
        }
    }

    /// Evaluation from a squared distance, skipping the square root where
    /// the kernel allows it.
    #[inline]
    pub fn psi_sq(&self, r2: f64) -> f64 {
        match self {
            KernelSpec::Constant { value } => *value,
            KernelSpec::AlgebraicQuarter { .. } => algebraic_quarter_sq(r2),
            KernelSpec::Custom { table } => table.eval(r2.sqrt()),
        }
    }

    pub fn psi_min(&self) -> f64 {
        match self {
            KernelSpec::Constant { value } => *value,
            KernelSpec::AlgebraicQuarter { radius: Some(r) } => algebraic_quarter_sq(r * r),
            KernelSpec::AlgebraicQuarter { radius: None } => 0.0,
            KernelSpec::Custom { table } => table.min(),
        }
    }

    pub fn psi_max(&self) -> f64 {
        match self {
            KernelSpec::Constant { value } => *value,
            KernelSpec::AlgebraicQuarter { .. } => 1.0,
            KernelSpec::Custom { table } => table.max(),
        }
    }

    /// Radius beyond which `psi_min` is no longer a valid lower bound.
    pub fn certified_radius(&self) -> Option<f64> {
        match self {
            KernelSpec::AlgebraicQuarter { radius } => *radius,
            _ => None,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            KernelSpec::Constant { value } => Some(*value),
            _ => None,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Constant { value } => write!(f, "constant:{value:?}"),
            KernelSpec::AlgebraicQuarter { radius: None } => write!(f, "algebraic-quarter"),
            KernelSpec::AlgebraicQuarter { radius: Some(r) } => write!(f, "algebraic-quarter:{r:?}"),
            KernelSpec::Custom { table } => {
                write!(f, "table:")?;
                for (k, (r, v)) in table.radii.iter().zip(&table.values).enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{r:?}/{v:?}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// `constant:<c>`, `algebraic-quarter[:R]` or `table:r0/v0,r1/v1,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let num = |a: &str| -> Result<f64> {
            a.parse::<f64>()
                .map_err(|_| Error::param("kernel", format!("cannot parse number `{a}`")))
        };
        let spec = match (head, arg) {
            ("constant", Some(a)) => KernelSpec::constant(num(a)?),
            ("constant", None) => KernelSpec::constant(1.0),
            ("algebraic-quarter", None) => KernelSpec::algebraic_quarter(None),
            ("algebraic-quarter", Some(a)) => KernelSpec::algebraic_quarter(Some(num(a)?)),
            ("table", Some(a)) => {
                let mut radii = Vec::new();
                let mut values = Vec::new();
                for node in a.split(',') {
                    let (r, v) = node
                        .split_once('/')
                        .ok_or_else(|| Error::param("kernel", format!("table node `{node}` is not r/v")))?;
                    radii.push(num(r.trim())?);
                    values.push(num(v.trim())?);
                }
                KernelSpec::Custom {
                    table: KernelTable::new(radii, values)?,
                }
            }
            _ => return Err(Error::param("kernel", format!("unknown kernel `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_is_flat() {
        let k = KernelSpec::constant(1.0);
        assert_eq!(k.eval(17.3).unwrap(), 1.0);
        assert_eq!(k.psi_min(), 1.0);
        assert_eq!(k.psi_max(), 1.0);
    }

    #[test]
    fn algebraic_values() {
        let k = KernelSpec::algebraic_quarter(None);
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        assert_relative_eq!(k.eval(3f64.sqrt()).unwrap(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(k.psi_min(), 0.0);
        let certified = KernelSpec::algebraic_quarter(Some(10.0));
        assert_relative_eq!(certified.psi_min(), 101f64.powf(-0.25), max_relative = 1e-14);
    }

    #[test]
    fn negative_radius_is_domain_error() {
        let k = KernelSpec::constant(1.0);
        assert!(matches!(k.eval(-1e-9), Err(Error::Domain(_))));
        assert!(k.eval(f64::NAN).is_err());
    }

    #[test]
    fn algebraic_is_nonincreasing() {
        let k = KernelSpec::algebraic_quarter(None);
        let mut prev = k.psi(0.0);
        for i in 1..2000 {
            let cur = k.psi(i as f64 * 0.05);
            assert!(cur <= prev);
            assert!(cur > 0.0);
            prev = cur;
        }
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let k: KernelSpec = "table:0/1,1/0.5,2/0.25".parse().unwrap();
        assert_relative_eq!(k.psi(0.5), 0.75);
        assert_relative_eq!(k.psi(1.5), 0.375);
        assert_eq!(k.psi(9.0), 0.25);
        assert_eq!(k.psi_min(), 0.25);
        assert_eq!(k.psi_max(), 1.0);
    }

    #[test]
    fn parse_round_trips_through_display() {
        for text in ["constant:1.0", "constant:2.5", "algebraic-quarter", "algebraic-quarter:10.0", "table:0.0/1.0,3.0/0.5"] {
            let k: KernelSpec = text.parse().unwrap();
            assert_eq!(k.to_string(), text);
            assert_eq!(k.to_string().parse::<KernelSpec>().unwrap(), k);
        }
        assert!("gaussian".parse::<KernelSpec>().is_err());
        assert!("constant:-1".parse::<KernelSpec>().is_err());
    }
}
