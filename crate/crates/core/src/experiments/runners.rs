use std::collections::BTreeMap;

use rayon::prelude::*;

use super::decide::{decide, Decision};
use super::spec::{Expected, ExperimentKind, ExperimentSpec, KineticEstimator, Source, Table, Verdict};
use crate::diagnostics::{flocking_check, kinetic_regime, rate_fit, variance_functionals, KineticRegime, WeightedSample};
use crate::error::{Error, Result};
use crate::mckean::{coupled_ensemble, law_table_for, mckean_constants, self_consistent_mckean, McKeanEnsemble};
use crate::model::{CenteredState, ParticleState};
use crate::rng::{realization_seed, substream};
use crate::sde::{simulate, StepConfig, TrajectoryRecord};

const TAG_INIT: u64 = 0x1717;
/// Recorded snapshots per run are capped near this count.
const SNAPSHOT_BUDGET: usize = 512;

/// Everything an experiment produces: the verdict, the evidence it was
/// decided from, and optional trajectories for plotting.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub verdict: Verdict,
    pub tables: Vec<Table>,
    pub trajectories: Vec<(String, TrajectoryRecord)>,
}

#[derive(Default)]
struct ExpectedMap(BTreeMap<String, Expected>);

impl ExpectedMap {
    fn add(&mut self, key: &str, value: f64, source: Source) -> &mut Self {
        self.0.insert(key.to_string(), Expected { value, source });
        self
    }
}

fn finish(spec: &ExperimentSpec, tables: Vec<Table>, expected: ExpectedMap, mut extra_flags: Vec<String>, extra: &[(&str, f64)]) -> Result<ExperimentOutput> {
    let Decision { pass, mut measured, flags } = decide(spec.kind, &tables, &expected.0)?;
    for (k, v) in extra {
        measured.entry(k.to_string()).or_insert(*v);
    }
    extra_flags.extend(flags);
    Ok(ExperimentOutput {
        verdict: Verdict {
            kind: spec.kind,
            pass,
            measured,
            expected: expected.0,
            flags: extra_flags,
            artifacts: Vec::new(),
            seed: spec.cfg.seed,
        },
        tables,
        trajectories: Vec::new(),
    })
}

fn recording(cfg: &StepConfig) -> StepConfig {
    let every = cfg.record_every.max(cfg.n_steps().div_ceil(SNAPSHOT_BUDGET));
    StepConfig {
        record_every: every,
        ..cfg.clone()
    }
}

fn init_seed(spec: &ExperimentSpec, realization: u64) -> u64 {
    substream(realization_seed(spec.cfg.seed, realization), TAG_INIT)
}

fn fluctuation_norm(state: &ParticleState) -> f64 {
    CenteredState::project(state).norm_sum()
}

fn check_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::param("kind", format!("runner for {kind} was given a {} spec", spec.kind)));
    }
    Ok(())
}

/// Decay of `S = sum|x_hat| + sum|v_hat|` for certified parameters: the
/// trailing-half log slope of every realization is compared with `-a/3`.
pub fn run_flocking_decay(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    check_kind(spec, ExperimentKind::FlockingDecay)?;
    let report = flocking_check(&spec.params, spec.beta)?;
    let rate = match report.decay_rate {
        Some(r) if report.condition_holds => r,
        _ => {
            return Err(Error::Refused(format!(
                "kappa psi_m = {} does not exceed sigma = {}; use the paper-figure kind for uncertified parameters",
                spec.params.kappa * report.psi_min,
                spec.params.sigma
            )))
        }
    };
    let cfg = recording(&spec.cfg);
    let runs: Vec<(f64, f64, f64, f64)> = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let start = spec.init.draw(spec.params.n, spec.params.dim, init_seed(spec, r as u64))?;
            let start = CenteredState::project(&start).into_inner();
            let rec = simulate(&start, &spec.params, &cfg.with_seed(realization_seed(spec.cfg.seed, r as u64)), true)?;
            let s: Vec<f64> = rec.states.iter().map(fluctuation_norm).collect();
            let diam = rec.states.iter().map(|st| st.max_pairwise_distance()).fold(0.0, f64::max);
            let slope = if s[0] == 0.0 {
                0.0
            } else if s.contains(&0.0) {
                f64::NEG_INFINITY
            } else {
                rate_fit(&rec.times, &s, None)?.slope
            };
            Ok((slope, s[0], *s.last().unwrap(), diam))
        })
        .collect::<Result<_>>()?;
    let mut slopes = Table::new("slopes", &["realization", "slope", "s0", "s_final"]);
    for (r, (slope, s0, s1, _)) in runs.iter().enumerate() {
        slopes.push(vec![r as f64, *slope, *s0, *s1]);
    }
    let mut expected = ExpectedMap::default();
    expected
        .add("decay_rate", rate, Source::Formula)
        .add("rate_a", report.rate_a.unwrap_or(f64::NAN), Source::Formula)
        .add("beta", report.beta_used.unwrap_or(f64::NAN), Source::Formula)
        .add("slope_tol", spec.tolerances.slope, Source::Tolerance)
        .add("fraction", spec.tolerances.fraction, Source::Tolerance);
    let mut flags = Vec::new();
    let diam = runs.iter().map(|r| r.3).fold(0.0, f64::max);
    if let Some(radius) = report.certified_radius {
        if diam > radius {
            flags.push("certified-radius-exceeded".to_string());
        }
    }
    if spec.params.sigma == 0.0 {
        flags.push("noiseless".to_string());
    }
    finish(spec, vec![slopes], expected, flags, &[("max_diameter", diam)])
}

/// Realization 0 of the full (uncentered) system from the spec's initial
/// data. Only the model, step and init fields of `spec` are read.
pub fn run_simulation(spec: &ExperimentSpec) -> Result<TrajectoryRecord> {
    spec.params.validate()?;
    spec.cfg.validate()?;
    let start = spec.init.draw(spec.params.n, spec.params.dim, init_seed(spec, 0))?;
    simulate(&start, &spec.params, &spec.cfg, false)
}

/// Realizations of the full (uncentered) system from uniform data; passes
/// when the fluctuation norm of every realization collapses by the preset
/// factor. The verdict reports the worst realization.
pub fn run_paper_figure(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    check_kind(spec, ExperimentKind::PaperFigure)?;
    let report = flocking_check(&spec.params, None)?;
    let runs = (0..spec.realizations as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = StepConfig {
                seed: realization_seed(spec.cfg.seed, k),
                ..spec.cfg.clone()
            };
            let start = spec.init.draw(spec.params.n, spec.params.dim, init_seed(spec, k))?;
            simulate(&start, &spec.params, &cfg, false)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut series = Table::new("norm_sum", &["realization", "t", "S"]);
    for (k, rec) in runs.iter().enumerate() {
        for (t, s) in rec.times.iter().zip(&rec.states) {
            series.push(vec![k as f64, *t, fluctuation_norm(s)]);
        }
    }
    let mut expected = ExpectedMap::default();
    expected.add("collapse", spec.tolerances.collapse, Source::Preset);
    let mut flags = Vec::new();
    if !report.condition_holds {
        flags.push("flocking-condition-not-certified".to_string());
    }
    if runs.iter().any(|r| r.halt.is_some()) {
        flags.push("velocity-guard-halt".to_string());
    }
    let mut out = finish(spec, vec![series], expected, flags, &[])?;
    out.trajectories = runs
        .into_iter()
        .enumerate()
        .map(|(k, rec)| (format!("trajectory_r{k:02}"), rec))
        .collect();
    Ok(out)
}

/// Kinetic variance bound: `L(t) <= 4 L(0) exp(-4/3 C_m t)` in the decay
/// regime, `L(t) >= L(0) exp(4/3 C_M t) / 4` in the growth regime.
pub fn run_kinetic_moments(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    check_kind(spec, ExperimentKind::KineticMoments)?;
    let regime = kinetic_regime(&spec.params, spec.mass)?;
    let (sign, rate) = match regime.regime {
        KineticRegime::Decay => (1.0, regime.c_m.unwrap()),
        KineticRegime::Growth => (-1.0, regime.c_big.unwrap()),
        KineticRegime::Indeterminate => {
            return Err(Error::Refused(format!(
                "kinetic regime is indeterminate for kappa = {}, sigma = {}, d = {}, mass = {}",
                spec.params.kappa, spec.params.sigma, spec.params.dim, spec.mass
            )))
        }
    };
    let estimator = match (spec.estimator, regime.regime) {
        (KineticEstimator::Auto, KineticRegime::Decay) => KineticEstimator::Particles,
        (KineticEstimator::Auto, _) => KineticEstimator::McKean,
        (e, _) => e,
    };
    let eps = regime.default_epsilon();
    let cfg = recording(&spec.cfg);
    let start = spec.init.draw(spec.params.n, spec.params.dim, init_seed(spec, 0))?;
    let mut flags = Vec::new();
    let (times, states): (Vec<f64>, Vec<ParticleState>) = match estimator {
        KineticEstimator::McKean => {
            let ens = McKeanEnsemble::from_state(&start, spec.mass)?;
            let tr = self_consistent_mckean(&ens, &spec.params, &cfg, spec.coupling.refresh_stride)?;
            (tr.times, tr.ensembles.iter().map(|e| e.as_state()).collect())
        }
        _ => {
            let rec = simulate(&start, &spec.params, &cfg, true)?;
            if rec.halt.is_some() {
                flags.push("velocity-guard-halt".to_string());
            }
            (rec.times, rec.states)
        }
    };
    let mut table = Table::new("variance", &["t", "L", "L_tilde"]);
    for (t, s) in times.iter().zip(&states) {
        let f = variance_functionals(&WeightedSample::from_state(s, spec.mass)?, eps)?;
        table.push(vec![*t, f.l_std, f.l_tilde]);
    }
    let mut expected = ExpectedMap::default();
    expected
        .add("regime", sign, Source::Formula)
        .add("rate", rate, Source::Formula)
        .add("epsilon", eps, Source::Formula)
        .add("bound_tol", spec.tolerances.bound, Source::Tolerance);
    if regime.c_big_mismatch {
        flags.push("growth-constant-forms-disagree".to_string());
    }
    flags.push(format!("estimator-{estimator}"));
    finish(spec, vec![table], expected, flags, &[])
}

/// Energy `E[|x|^2 + |v|^2]` of the self-consistent McKean ensemble against
/// the envelope `E_0 exp(-4/3 C_* t)`.
pub fn run_mckean_decay(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    check_kind(spec, ExperimentKind::McKeanDecay)?;
    let start = spec.init.draw(spec.params.n, spec.params.dim, init_seed(spec, 0))?;
    let ens = McKeanEnsemble::from_state(&start, spec.mass)?;
    let m2 = ens.energies().iter().sum::<f64>() / ens.m() as f64;
    let consts = mckean_constants(&spec.params, spec.mass, m2)?;
    let c_star = match consts.c_star {
        Some(c) if consts.hypotheses_hold => c,
        _ => {
            return Err(Error::Refused(format!(
                "need kappa psi_m mass > d sigma and > sigma; got kappa psi_m mass = {}",
                spec.params.kappa * spec.params.kernel.psi_min() * spec.mass
            )))
        }
    };
    let tr = self_consistent_mckean(&ens, &spec.params, &recording(&spec.cfg), spec.coupling.refresh_stride)?;
    let mut table = Table::new("energy", &["t", "mean", "se"]);
    for (t, e) in tr.times.iter().zip(&tr.ensembles) {
        let en = e.energies();
        let m = en.len() as f64;
        let mean = en.iter().sum::<f64>() / m;
        let var = en.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
        table.push(vec![*t, mean, (var / m).sqrt()]);
    }
    let mut expected = ExpectedMap::default();
    expected
        .add("c_star", c_star, Source::Formula)
        .add("eta", consts.eta, Source::Formula)
        .add("delta", consts.delta, Source::Formula)
        .add("envelope_se", spec.tolerances.envelope_se, Source::Tolerance);
    finish(spec, vec![table], expected, Vec::new(), &[])
}

fn coupling_hypothesis(spec: &ExperimentSpec) -> Result<()> {
    let p = &spec.params;
    let lhs = p.kappa * p.kernel.psi_min() * spec.mass.min(1.0);
    let rhs = p.dim as f64 * p.sigma;
    if lhs > rhs {
        Ok(())
    } else {
        Err(Error::Refused(format!(
            "kappa psi_m min(mass, 1) = {lhs} does not exceed d sigma = {rhs}"
        )))
    }
}

/// Coupling error at `t_final` for each particle count of the sweep. The
/// law table and the noise of realization `r` are shared by all counts.
pub fn run_meanfield_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    check_kind(spec, ExperimentKind::MeanFieldSweep)?;
    coupling_hypothesis(spec)?;
    let opts = spec.coupling_options();
    let law = law_table_for(&spec.params, &spec.init, &spec.cfg, &opts)?;
    let steps = spec.cfg.n_steps();
    let mut table = Table::new("sweep", &["n", "err", "se", "err_x", "err_v"]);
    for &n in spec.sweep.as_ref().expect("validated") {
        let rec = coupled_ensemble(&spec.params.with_n(n), &spec.init, &law, spec.cfg.seed, spec.realizations, steps)?;
        let k = rec.times.len() - 1;
        table.push(vec![n as f64, rec.err_x[k] + rec.err_v[k], rec.se_total[k], rec.err_x[k], rec.err_v[k]]);
    }
    let mut expected = ExpectedMap::default();
    expected.add("se_slack", spec.tolerances.se_slack, Source::Tolerance);
    let flags = if law.is_exact() { vec!["exact-fields".to_string()] } else { Vec::new() };
    finish(spec, vec![table], expected, flags, &[])
}

/// Coupling error over a long horizon: its supremum must come early and its
/// tail must not grow.
pub fn run_uniform_in_time(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    check_kind(spec, ExperimentKind::UniformInTime)?;
    coupling_hypothesis(spec)?;
    let opts = spec.coupling_options();
    let cfg = recording(&spec.cfg);
    let law = law_table_for(&spec.params, &spec.init, &cfg, &opts)?;
    let rec = coupled_ensemble(&spec.params, &spec.init, &law, cfg.seed, spec.realizations, cfg.record_every)?;
    let mut table = Table::new("coupling", &["t", "err_x", "err_v", "total", "se"]);
    for k in 0..rec.times.len() {
        table.push(vec![rec.times[k], rec.err_x[k], rec.err_v[k], rec.err_x[k] + rec.err_v[k], rec.se_total[k]]);
    }
    let mut expected = ExpectedMap::default();
    expected.add("sup_before_fraction", 0.5, Source::Tolerance);
    let flags = if law.is_exact() { vec!["exact-fields".to_string()] } else { Vec::new() };
    finish(spec, vec![table], expected, flags, &[])
}

/// Dispatch on `spec.kind`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    match spec.kind {
        ExperimentKind::FlockingDecay => run_flocking_decay(spec),
        ExperimentKind::PaperFigure => run_paper_figure(spec),
        ExperimentKind::KineticMoments => run_kinetic_moments(spec),
        ExperimentKind::McKeanDecay => run_mckean_decay(spec),
        ExperimentKind::MeanFieldSweep => run_meanfield_sweep(spec),
        ExperimentKind::UniformInTime => run_uniform_in_time(spec),
    }
}
