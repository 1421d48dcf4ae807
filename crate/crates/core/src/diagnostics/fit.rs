use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Window covering the last half of `[times[0], times[last]]`.
pub fn trailing_half(times: &[f64]) -> Option<(f64, f64)> {
    let (first, last) = (*times.first()?, *times.last()?);
    Some((0.5 * (first + last), last))
}

/// Least-squares fit of `ln y` against `t` over `window` (inclusive),
/// defaulting to the trailing half of the series.
pub fn rate_fit(times: &[f64], ys: &[f64], window: Option<(f64, f64)>) -> Result<RateFit> {
    if times.len() != ys.len() {
        return Err(Error::Shape(format!("{} times but {} values", times.len(), ys.len())));
    }
    let (lo, hi) = match window.or_else(|| trailing_half(times)) {
        Some(w) => w,
        None => return Err(Error::EmptySample),
    };
    let mut pts = Vec::new();
    for (k, (&t, &y)) in times.iter().zip(ys).enumerate() {
        if t < lo || t > hi {
            continue;
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!("value at index {k} is not positive and finite: {y}")));
        }
        pts.push((t, y.ln()));
    }
    if pts.len() < 10 {
        return Err(Error::Domain(format!("fit window holds {} points, need at least 10", pts.len())));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (t, l) in &pts {
        stt += (t - tm) * (t - tm);
        stl += (t - tm) * (l - lm);
        sll += (l - lm) * (l - lm);
    }
    if stt == 0.0 {
        return Err(Error::Domain("fit window has a single distinct time".into()));
    }
    let slope = stl / stt;
    let intercept = lm - slope * tm;
    let r2 = if sll == 0.0 { 1.0 } else { stl * stl / (stt * sll) };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exponentials() {
        let t = grid(50, 4.0);
        let y: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        assert_relative_eq!(rate_fit(&t, &y, None).unwrap().slope, -1.0, epsilon = 1e-6);

        let t = grid(100, 10.0);
        let y: Vec<f64> = t.iter().map(|t| 5.0 * (-0.25 * t).exp()).collect();
        let f = rate_fit(&t, &y, Some((0.0, 10.0))).unwrap();
        assert_relative_eq!(f.slope, -0.25, epsilon = 1e-9);
        assert_relative_eq!(f.intercept, 5.0f64.ln(), epsilon = 1e-9);
        assert_relative_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert_eq!(f.points, 100);
    }

    #[test]
    fn constant_series() {
        let t = grid(30, 1.0);
        let f = rate_fit(&t, &vec![2.0; 30], None).unwrap();
        assert_eq!(f.slope, 0.0);
    }

    #[test]
    fn names_first_bad_index() {
        let t = grid(20, 1.0);
        let mut y = vec![1.0; 20];
        y[13] = 0.0;
        y[17] = -1.0;
        let err = rate_fit(&t, &y, Some((0.0, 1.0))).unwrap_err().to_string();
        assert!(err.contains("index 13"), "{err}");
    }

    #[test]
    fn too_few_points() {
        let t = grid(9, 1.0);
        assert!(rate_fit(&t, &[1.0; 9], Some((0.0, 1.0))).is_err());
    }
}
