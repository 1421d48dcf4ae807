//! Pass/fail rules. Each rule reads only the evidence tables and the
//! expected map, so a verdict can be recomputed from the files a run emits.

use std::collections::BTreeMap;

use super::spec::{Expected, ExperimentKind, Table};
use crate::diagnostics::rate_fit;
use crate::error::{Error, Result};

/// Below this every coupling error is treated as exactly zero.
pub const DEGENERATE_ERR: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub pass: bool,
    pub measured: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl Decision {
    fn new(pass: bool) -> Self {
        Self {
            pass,
            measured: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.measured.insert(key.to_string(), value);
        self
    }

    fn flag(mut self, f: &str) -> Self {
        self.flags.push(f.to_string());
        self
    }
}

fn expect(expected: &BTreeMap<String, Expected>, key: &str) -> Result<f64> {
    expected
        .get(key)
        .map(|e| e.value)
        .ok_or_else(|| Error::Shape(format!("expected value `{key}` is missing")))
}

fn table<'a>(tables: &'a [Table], name: &str) -> Result<&'a Table> {
    tables
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Shape(format!("evidence table `{name}` is missing")))
}

/// Trailing-half log slope over the strictly positive tail of a series.
fn tail_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let (t0, t1) = (*t.first()?, *t.last()?);
    let lo = 0.5 * (t0 + t1);
    let (tt, yy): (Vec<f64>, Vec<f64>) = t.iter().zip(y).filter(|(ti, yi)| **ti >= lo && **yi > 0.0).map(|(a, b)| (*a, *b)).unzip();
    rate_fit(&tt, &yy, Some((lo, t1))).ok().map(|f| f.slope)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn decide(kind: ExperimentKind, tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    match kind {
        ExperimentKind::FlockingDecay => flocking(tables, expected),
        ExperimentKind::PaperFigure => figure(tables, expected),
        ExperimentKind::KineticMoments => kinetic(tables, expected),
        ExperimentKind::McKeanDecay => mckean(tables, expected),
        ExperimentKind::MeanFieldSweep => sweep(tables, expected),
        ExperimentKind::UniformInTime => uniform(tables, expected),
    }
}

fn flocking(tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    let t = table(tables, "slopes")?;
    let slopes = t.column("slope")?;
    let s0 = t.column("s0")?;
    let rate = expect(expected, "decay_rate")?;
    let tol = expect(expected, "slope_tol")?;
    let frac = expect(expected, "fraction")?;
    if slopes.is_empty() {
        return Err(Error::EmptySample);
    }
    if s0.iter().all(|s| *s == 0.0) {
        return Ok(Decision::new(true).with("pass_fraction", 1.0).flag("consensus-initial-data"));
    }
    let ok = slopes.iter().filter(|s| **s <= -rate + tol).count();
    let share = ok as f64 / slopes.len() as f64;
    let worst = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = slopes.clone();
    Ok(Decision::new(share >= frac)
        .with("pass_fraction", share)
        .with("median_slope", median(&mut sorted))
        .with("max_slope", worst))
}

fn figure(tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    let t = table(tables, "norm_sum")?;
    let real = t.column("realization")?;
    let times = t.column("t")?;
    let s = t.column("S")?;
    let collapse = expect(expected, "collapse")?;
    if s.is_empty() {
        return Err(Error::EmptySample);
    }
    // rows are grouped by realization, in time order
    let mut worst: Option<(f64, usize, usize)> = None;
    let mut start = 0;
    let mut groups = 0;
    while start < s.len() {
        let end = (start..s.len()).find(|&i| real[i] != real[start]).unwrap_or(s.len());
        groups += 1;
        let ratio = if s[start] == 0.0 { 0.0 } else { s[end - 1] / s[start] };
        if worst.is_none_or(|(r, _, _)| ratio > r) {
            worst = Some((ratio, start, end));
        }
        start = end;
    }
    let (ratio, lo, hi) = worst.expect("at least one group");
    if s[lo] == 0.0 {
        return Ok(Decision::new(true).with("ratio", 0.0).flag("consensus-initial-data"));
    }
    let mut d = Decision::new(ratio <= collapse)
        .with("ratio", ratio)
        .with("s0", s[lo])
        .with("s_final", s[hi - 1])
        .with("realizations", groups as f64);
    match tail_slope(&times[lo..hi], &s[lo..hi]) {
        Some(slope) => {
            d = d.with("trailing_slope", slope);
            if slope >= 0.0 {
                d = d.flag("no-trailing-decay");
            }
        }
        None => d = d.flag("trailing-slope-unavailable"),
    }
    Ok(d)
}

fn kinetic(tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    let t = table(tables, "variance")?;
    let times = t.column("t")?;
    let l = t.column("L")?;
    let regime = expect(expected, "regime")?;
    let rate = expect(expected, "rate")?;
    let tol = expect(expected, "bound_tol")?;
    let l0 = *l.first().ok_or(Error::EmptySample)?;
    if l0 == 0.0 {
        return Ok(Decision::new(true).with("worst_ratio", 0.0).flag("point-mass-initial-data"));
    }
    let ratios: Vec<f64> = if regime > 0.0 {
        times.iter().zip(&l).map(|(t, l)| l / (4.0 * l0 * (-(4.0 / 3.0) * rate * t).exp())).collect()
    } else {
        times.iter().zip(&l).map(|(t, l)| l / (0.25 * l0 * ((4.0 / 3.0) * rate * t).exp())).collect()
    };
    let (worst, pass) = if regime > 0.0 {
        let w = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (w, w <= 1.0 + tol)
    } else {
        let w = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        (w, w >= 1.0 - tol)
    };
    Ok(Decision::new(pass)
        .with("worst_ratio", worst)
        .with("l0", l0)
        .with("l_final", *l.last().unwrap())
        .with("t_final", *times.last().unwrap()))
}

fn mckean(tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    let t = table(tables, "energy")?;
    let times = t.column("t")?;
    let mean = t.column("mean")?;
    let se = t.column("se")?;
    let c_star = expect(expected, "c_star")?;
    let k = expect(expected, "envelope_se")?;
    let y0 = *mean.first().ok_or(Error::EmptySample)?;
    if y0 == 0.0 {
        return Ok(Decision::new(true).with("worst_ratio", 0.0).flag("origin-initial-data"));
    }
    let worst = times
        .iter()
        .zip(mean.iter().zip(&se))
        .map(|(t, (m, s))| (m - k * s) / (y0 * (-(4.0 / 3.0) * c_star * t).exp()))
        .fold(f64::NEG_INFINITY, f64::max);
    let slope = tail_slope(&times, &mean);
    let mut d = Decision::new(worst <= 1.0 + 1e-12 && slope.is_none_or(|s| s <= 0.0)).with("worst_ratio", worst);
    match slope {
        Some(s) => d = d.with("trailing_slope", s),
        None => d = d.flag("trailing-slope-unavailable"),
    }
    Ok(d)
}

fn sweep(tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    let t = table(tables, "sweep")?;
    let n = t.column("n")?;
    let err = t.column("err")?;
    let se = t.column("se")?;
    let slack = expect(expected, "se_slack")?;
    if err.is_empty() {
        return Err(Error::EmptySample);
    }
    if err.iter().all(|e| *e <= DEGENERATE_ERR) {
        return Ok(Decision::new(true).with("max_err", err.iter().copied().fold(0.0, f64::max)).flag("degenerate-zero-error"));
    }
    let violations = (1..err.len())
        .filter(|&k| err[k] >= err[k - 1] + slack * se[k].max(se[k - 1]))
        .count();
    let pts: Vec<(f64, f64)> = n.iter().zip(&err).filter(|(_, e)| **e > 0.0).map(|(n, e)| (n.ln(), e.ln())).collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(Decision::new(violations == 0 && slope < 0.0)
        .with("loglog_slope", slope)
        .with("monotone_violations", violations as f64))
}

fn uniform(tables: &[Table], expected: &BTreeMap<String, Expected>) -> Result<Decision> {
    let t = table(tables, "coupling")?;
    let times = t.column("t")?;
    let total = t.column("total")?;
    let frac = expect(expected, "sup_before_fraction")?;
    let t_end = *times.last().ok_or(Error::EmptySample)?;
    let t0 = times[0];
    if total.iter().all(|e| *e <= DEGENERATE_ERR) {
        return Ok(Decision::new(true).flag("degenerate-zero-error"));
    }
    let (k_max, sup) = total
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(kb, vb), (k, v)| if *v > vb { (k, *v) } else { (kb, vb) });
    let t_sup = times[k_max];
    let slope = tail_slope(&times, &total);
    let early = t_sup < t0 + frac * (t_end - t0);
    let mut d = Decision::new(early && slope.is_some_and(|s| s <= 0.0))
        .with("sup_err", sup)
        .with("t_sup", t_sup)
        .with("final_err", *total.last().unwrap());
    match slope {
        Some(s) => d = d.with("trailing_slope", s),
        None => d = d.flag("trailing-slope-unavailable"),
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::spec::Source;

    fn exp(pairs: &[(&str, f64)]) -> BTreeMap<String, Expected> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Expected { value: *v, source: Source::Tolerance }))
            .collect()
    }

    #[test]
    fn figure_uses_worst_realization() {
        let mut t = Table::new("norm_sum", &["realization", "t", "S"]);
        for (k, decay) in [(0.0, 1e-8), (1.0, 1e-3)] {
            for i in 0..20 {
                let time = i as f64 * 0.1;
                t.push(vec![k, time, (decay as f64).powf(time / 1.9)]);
            }
        }
        let d = decide(ExperimentKind::PaperFigure, &[t.clone()], &exp(&[("collapse", 1e-6)])).unwrap();
        assert!(!d.pass);
        assert!((d.measured["ratio"] - 1e-3).abs() < 1e-12);
        assert_eq!(d.measured["realizations"], 2.0);
        let d = decide(ExperimentKind::PaperFigure, &[t], &exp(&[("collapse", 1e-2)])).unwrap();
        assert!(d.pass);
    }

    #[test]
    fn flocking_fraction_rule() {
        let mut t = Table::new("slopes", &["realization", "slope", "s0"]);
        for k in 0..20 {
            t.push(vec![k as f64, if k == 0 { 0.0 } else { -1.0 }, 1.0]);
        }
        let e = exp(&[("decay_rate", 0.1), ("slope_tol", 0.02), ("fraction", 0.95)]);
        assert!(decide(ExperimentKind::FlockingDecay, &[t.clone()], &e).unwrap().pass);
        t.rows[1][1] = 0.5;
        assert!(!decide(ExperimentKind::FlockingDecay, &[t], &e).unwrap().pass);
    }

    #[test]
    fn sweep_rules() {
        let mk = |errs: &[f64]| {
            let mut t = Table::new("sweep", &["n", "err", "se", "err_x", "err_v"]);
            for (k, e) in errs.iter().enumerate() {
                t.push(vec![(8 << k) as f64, *e, 0.01 * e, 0.0, 0.0]);
            }
            t
        };
        let e = exp(&[("se_slack", 1.0)]);
        assert!(decide(ExperimentKind::MeanFieldSweep, &[mk(&[4.0, 3.0, 2.0, 1.0])], &e).unwrap().pass);
        assert!(!decide(ExperimentKind::MeanFieldSweep, &[mk(&[4.0, 3.0, 3.5, 1.0])], &e).unwrap().pass);
        let d = decide(ExperimentKind::MeanFieldSweep, &[mk(&[0.0; 4])], &e).unwrap();
        assert!(d.pass && d.flags.contains(&"degenerate-zero-error".to_string()));
    }

    #[test]
    fn missing_pieces_are_errors() {
        assert!(decide(ExperimentKind::PaperFigure, &[], &exp(&[])).is_err());
        let t = Table::new("norm_sum", &["realization", "t", "S"]);
        assert!(decide(ExperimentKind::PaperFigure, &[t], &exp(&[])).is_err());
    }
}
