//! The McKean process, whose drift depends on the law of the process
//! itself through the fields
//! `a(x) = int psi(|x - y|) f(y, w) dy dw` and `b(x) = int w psi(|x - y|) f(y, w) dy dw`,
//! and synchronous couplings of it with the particle system.
//!
//! The law is approximated by an ensemble of copies with independent noise.
//! Inside the ensemble each copy sees the leave-one-out empirical measure of
//! the others; points outside the ensemble see all of it.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{kinetic_regime, KineticRegime, WeightedSample};
use crate::error::{Error, Result};
use crate::model::{dist_sq, KernelSpec, ModelParams, ParticleState};
use crate::rng::{realization_seed, rng_from_seed, substream, NoiseStream};
use crate::sde::{em_step, InitSpec, StepConfig};

const TAG_LAW: u64 = 0x4c41;
const TAG_INIT: u64 = 0x494e;

/// Field values at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    pub a: f64,
    pub b: Vec<f64>,
}

/// Empirical fields of a weighted sample at `x`.
pub fn empirical_fields(x: &[f64], sample: &WeightedSample, kernel: &KernelSpec) -> Result<FieldEstimate> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.len() != sample.dim() {
        return Err(Error::Shape(format!("point has dim {}, sample has dim {}", x.len(), sample.dim())));
    }
    let mut a = 0.0;
    let mut b = vec![0.0; x.len()];
    for (k, w) in sample.weights().iter().enumerate() {
        let p = w * kernel.psi_sq(dist_sq(x, sample.position(k)));
        a += p;
        for (bd, vd) in b.iter_mut().zip(sample.velocity(k)) {
            *bd += p * vd;
        }
    }
    Ok(FieldEstimate { a, b })
}

/// One copy `(x, v)` of the McKean process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McKeanCopy {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn advance(x: &mut [f64], v: &mut [f64], a: f64, b: &[f64], kappa: f64, noise_scale: f64, dt: f64, dw: f64) {
    let g = noise_scale * dw;
    for k in 0..x.len() {
        let (xk, vk) = (x[k], v[k]);
        x[k] = xk + vk * dt;
        v[k] = vk - kappa * (a * vk - b[k]) * dt - xk * dt + g * vk;
    }
}

/// Euler–Maruyama step with fields evaluated at the copy's position:
/// `x' = x + v dt`, `v' = v - kappa (a v - b) dt - x dt + sqrt(2 sigma) v dW`.
pub fn mckean_step(copy: &McKeanCopy, fields: &FieldEstimate, params: &ModelParams, dt: f64, dw: f64) -> Result<McKeanCopy> {
    if copy.x.len() != copy.v.len() || fields.b.len() != copy.x.len() {
        return Err(Error::Shape("copy and field dimensions differ".into()));
    }
    let mut next = copy.clone();
    advance(&mut next.x, &mut next.v, fields.a, &fields.b, params.kappa, params.noise_scale(), dt, dw);
    if next.x.iter().chain(&next.v).any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { step: 0, time: f64::NAN });
    }
    Ok(next)
}

/// `m` copies sharing a total mass, row-major like [`ParticleState`].
#[derive(Clone, Debug, PartialEq)]
pub struct McKeanEnsemble {
    pub time: f64,
    pub mass: f64,
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl McKeanEnsemble {
    pub fn new(time: f64, dim: usize, positions: Vec<f64>, velocities: Vec<f64>, mass: f64) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) || positions.len() != velocities.len() {
            return Err(Error::Shape("ensemble needs m x dim positions and velocities".into()));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::param("mass", format!("must be > 0, got {mass}")));
        }
        Ok(Self {
            time,
            mass,
            dim,
            positions,
            velocities,
        })
    }

    pub fn from_state(state: &ParticleState, mass: f64) -> Result<Self> {
        Self::new(state.time, state.dim(), state.positions().to_vec(), state.velocities().to_vec(), mass)
    }

    pub fn m(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn copy(&self, i: usize) -> McKeanCopy {
        let r = i * self.dim..(i + 1) * self.dim;
        McKeanCopy {
            x: self.positions[r.clone()].to_vec(),
            v: self.velocities[r].to_vec(),
        }
    }

    /// Empirical law with weights `mass / m`.
    pub fn sample(&self) -> WeightedSample {
        let w = self.mass / self.m() as f64;
        WeightedSample::new(self.dim, self.positions.clone(), self.velocities.clone(), vec![w; self.m()])
            .expect("ensemble invariants make a valid sample")
    }

    /// Per-copy `|x|^2 + |v|^2`.
    pub fn energies(&self) -> Vec<f64> {
        self.positions
            .chunks_exact(self.dim)
            .zip(self.velocities.chunks_exact(self.dim))
            .map(|(x, v)| x.iter().chain(v).map(|c| c * c).sum())
            .collect()
    }

    pub fn as_state(&self) -> ParticleState {
        ParticleState::from_parts(self.time, self.m(), self.dim, self.positions.clone(), self.velocities.clone())
    }

    fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|c| c.is_finite())
    }
}

/// Leave-one-out fields for every copy, written into `a` (length m) and
/// `b` (m x dim). Weights are `mass / (m - 1)`.
fn leave_one_out_fields(ens: &McKeanEnsemble, kernel: &KernelSpec, a: &mut [f64], b: &mut [f64]) {
    let (m, dim) = (ens.m(), ens.dim);
    let w = ens.mass / (m - 1) as f64;
    if let Some(c) = kernel.as_constant() {
        let mut total = vec![0.0; dim];
        for row in ens.velocities.chunks_exact(dim) {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        a.iter_mut().for_each(|ai| *ai = c * ens.mass);
        for (i, bi) in b.chunks_exact_mut(dim).enumerate() {
            for d in 0..dim {
                bi[d] = c * w * (total[d] - ens.velocities[i * dim + d]);
            }
        }
        return;
    }
    a.iter_mut().for_each(|v| *v = 0.0);
    b.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let xi = &ens.positions[i * dim..(i + 1) * dim];
        for j in (i + 1)..m {
            let p = kernel.psi_sq(dist_sq(xi, &ens.positions[j * dim..(j + 1) * dim]));
            a[i] += p;
            a[j] += p;
            for d in 0..dim {
                b[i * dim + d] += p * ens.velocities[j * dim + d];
                b[j * dim + d] += p * ens.velocities[i * dim + d];
            }
        }
    }
    a.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= w);
}

/// Advance the self-consistent ensemble, calling `visit(step, ensemble)` at
/// step 0 and after every step. Fields are refreshed every `stride` steps.
fn drive_law(
    initial: &McKeanEnsemble,
    params: &ModelParams,
    cfg: &StepConfig,
    stride: usize,
    mut visit: impl FnMut(usize, &McKeanEnsemble) -> Result<()>,
) -> Result<()> {
    params.validate()?;
    cfg.validate()?;
    if initial.m() < 2 {
        return Err(Error::param("law_size", "the ensemble needs at least 2 copies"));
    }
    if initial.dim != params.dim {
        return Err(Error::Shape(format!("ensemble dim {} but params dim {}", initial.dim, params.dim)));
    }
    if stride == 0 {
        return Err(Error::param("refresh_stride", "must be >= 1"));
    }
    let (m, dim) = (initial.m(), initial.dim);
    let steps = cfg.n_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let s = params.noise_scale();
    let mut rng = rng_from_seed(cfg.seed);
    let mut ens = initial.clone();
    let t0 = ens.time;
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m * dim];
    visit(0, &ens)?;
    for step in 1..=steps {
        if (step - 1) % stride == 0 {
            leave_one_out_fields(&ens, &params.kernel, &mut a, &mut b);
        }
        for (i, &ai) in a.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let r = i * dim..(i + 1) * dim;
            advance(
                &mut ens.positions[r.clone()],
                &mut ens.velocities[r.clone()],
                ai,
                &b[r],
                params.kappa,
                s,
                cfg.dt,
                sqrt_dt * z,
            );
        }
        ens.time = t0 + step as f64 * cfg.dt;
        if !ens.is_finite() {
            return Err(Error::NonFinite { step, time: ens.time });
        }
        visit(step, &ens)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct McKeanTrajectory {
    pub times: Vec<f64>,
    pub ensembles: Vec<McKeanEnsemble>,
    pub seed: u64,
}

/// Law-estimation run: every copy is driven by its own Brownian path and
/// feels the leave-one-out empirical law of the current ensemble.
pub fn self_consistent_mckean(
    initial: &McKeanEnsemble,
    params: &ModelParams,
    cfg: &StepConfig,
    refresh_stride: usize,
) -> Result<McKeanTrajectory> {
    let steps = cfg.n_steps();
    let mut times = Vec::new();
    let mut ensembles = Vec::new();
    drive_law(initial, params, cfg, refresh_stride, |step, ens| {
        if cfg.is_recorded(step, steps) {
            times.push(ens.time);
            ensembles.push(ens.clone());
        }
        Ok(())
    })?;
    Ok(McKeanTrajectory {
        times,
        ensembles,
        seed: cfg.seed,
    })
}

/// How coupled copies obtain their fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FieldMode {
    /// Sum over the law ensemble at every copy position.
    Direct,
    /// Tabulate the fields on a uniform grid (`nodes` per axis) spanning
    /// the law ensemble and interpolate linearly; points off the grid fall
    /// back to the direct sum. Only used for `dim <= 2`.
    Grid { nodes: usize },
    /// Constant kernel `c` in the centered frame: `a = c mass`, `b = 0`.
    Exact,
}

impl Default for FieldMode {
    fn default() -> Self {
        FieldMode::Grid { nodes: 129 }
    }
}

impl std::fmt::Display for FieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldMode::Direct => write!(f, "direct"),
            FieldMode::Grid { nodes } => write!(f, "grid:{nodes}"),
            FieldMode::Exact => write!(f, "exact"),
        }
    }
}

impl std::str::FromStr for FieldMode {
    type Err = Error;

    /// `direct`, `exact` or `grid:<nodes>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            None if s == "direct" => Ok(FieldMode::Direct),
            None if s == "exact" => Ok(FieldMode::Exact),
            None if s == "grid" => Ok(FieldMode::default()),
            Some(("grid", n)) => match n.trim().parse::<usize>() {
                Ok(nodes) if nodes >= 2 => Ok(FieldMode::Grid { nodes }),
                _ => Err(Error::param("fields", format!("grid needs an integer node count >= 2, got `{n}`"))),
            },
            _ => Err(Error::param("fields", format!("expected direct, exact or grid:<nodes>, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct FieldGrid {
    nodes: usize,
    lo: Vec<f64>,
    h: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl FieldGrid {
    fn build(frame: &LawFrame, kernel: &KernelSpec, nodes: usize, weight: f64) -> Self {
        let dim = frame.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in frame.positions.chunks_exact(dim) {
            for d in 0..dim {
                lo[d] = lo[d].min(row[d]);
                hi[d] = hi[d].max(row[d]);
            }
        }
        let mut h = vec![0.0; dim];
        for d in 0..dim {
            let pad = 0.25 * (hi[d] - lo[d]) + 1e-3;
            lo[d] -= pad;
            hi[d] += pad;
            h[d] = (hi[d] - lo[d]) / (nodes - 1) as f64;
        }
        let total = nodes.pow(dim as u32);
        let mut a = vec![0.0; total];
        let mut b = vec![0.0; total * dim];
        let mut x = vec![0.0; dim];
        for g in 0..total {
            let mut rem = g;
            for d in 0..dim {
                x[d] = lo[d] + (rem % nodes) as f64 * h[d];
                rem /= nodes;
            }
            a[g] = frame.direct(&x, kernel, weight, &mut b[g * dim..(g + 1) * dim]);
        }
        Self { nodes, lo, h, a, b }
    }

    /// Multilinear interpolation; `None` off the grid.
    fn eval(&self, x: &[f64], b_out: &mut [f64]) -> Option<f64> {
        let dim = x.len();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for d in 0..dim {
            let u = (x[d] - self.lo[d]) / self.h[d];
            if !(u >= 0.0 && u <= (self.nodes - 1) as f64) {
                return None;
            }
            let k = (u.floor() as usize).min(self.nodes - 2);
            base[d] = k;
            frac[d] = u - k as f64;
        }
        b_out.iter_mut().for_each(|v| *v = 0.0);
        let mut a = 0.0;
        for corner in 0..(1usize << dim) {
            let mut idx = 0;
            let mut stride = 1;
            let mut wt = 1.0;
            for d in 0..dim {
                let up = (corner >> d) & 1;
                idx += (base[d] + up) * stride;
                stride *= self.nodes;
                wt *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            a += wt * self.a[idx];
            for (o, bv) in b_out.iter_mut().zip(&self.b[idx * dim..(idx + 1) * dim]) {
                *o += wt * bv;
            }
        }
        Some(a)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LawFrame {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    grid: Option<FieldGrid>,
}

impl LawFrame {
    fn direct(&self, x: &[f64], kernel: &KernelSpec, weight: f64, b_out: &mut [f64]) -> f64 {
        b_out.iter_mut().for_each(|v| *v = 0.0);
        let mut a = 0.0;
        for (y, w) in self.positions.chunks_exact(self.dim).zip(self.velocities.chunks_exact(self.dim)) {
            let p = kernel.psi_sq(dist_sq(x, y));
            a += p;
            for (o, wv) in b_out.iter_mut().zip(w) {
                *o += p * wv;
            }
        }
        for o in b_out.iter_mut() {
            *o *= weight;
        }
        a * weight
    }
}

/// Field snapshots of a law-estimation run, one per refresh, for use by
/// coupled copies. Frame `k` serves steps `k*stride .. (k+1)*stride`.
#[derive(Clone, Debug, PartialEq)]
pub struct LawTable {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub mass: f64,
    pub law_size: usize,
    kernel: KernelSpec,
    frames: Vec<LawFrame>,
    exact_a: Option<f64>,
}

impl LawTable {
    /// Run the self-consistent ensemble from `initial` and tabulate its
    /// fields. `FieldMode::Exact` skips the run.
    pub fn build(initial: &McKeanEnsemble, params: &ModelParams, cfg: &StepConfig, mode: FieldMode, stride: usize) -> Result<Self> {
        if mode == FieldMode::Exact {
            return Self::exact(params, cfg, initial.mass);
        }
        let steps = cfg.n_steps();
        let weight = initial.mass / initial.m() as f64;
        let nodes = match mode {
            FieldMode::Grid { nodes } if params.dim <= 2 => {
                if nodes < 2 {
                    return Err(Error::param("fields", "grid needs at least 2 nodes per axis"));
                }
                Some(nodes)
            }
            _ => None,
        };
        let mut frames = Vec::with_capacity(steps / stride + 1);
        drive_law(initial, params, cfg, stride, |step, ens| {
            if step < steps && step % stride == 0 {
                let mut frame = LawFrame {
                    dim: ens.dim,
                    positions: ens.positions.clone(),
                    velocities: ens.velocities.clone(),
                    grid: None,
                };
                if let Some(nodes) = nodes {
                    frame.grid = Some(FieldGrid::build(&frame, &params.kernel, nodes, weight));
                }
                frames.push(frame);
            }
            Ok(())
        })?;
        Ok(Self {
            dt: cfg.dt,
            steps,
            stride,
            mass: initial.mass,
            law_size: initial.m(),
            kernel: params.kernel.clone(),
            frames,
            exact_a: None,
        })
    }

    /// Exact fields of a centered law under a constant kernel.
    pub fn exact(params: &ModelParams, cfg: &StepConfig, mass: f64) -> Result<Self> {
        let c = params
            .kernel
            .as_constant()
            .ok_or_else(|| Error::Unsupported("exact fields need a constant kernel".into()))?;
        cfg.validate()?;
        Ok(Self {
            dt: cfg.dt,
            steps: cfg.n_steps(),
            stride: 1,
            mass,
            law_size: 0,
            kernel: params.kernel.clone(),
            frames: Vec::new(),
            exact_a: Some(c * mass),
        })
    }

    pub fn is_exact(&self) -> bool {
        self.exact_a.is_some()
    }

    /// Fields used during step `step` (from `t_step` to `t_step + dt`) at `x`;
    /// returns `a` and writes `b`.
    pub fn fields_at(&self, step: usize, x: &[f64], b_out: &mut [f64]) -> f64 {
        if let Some(a) = self.exact_a {
            b_out.iter_mut().for_each(|v| *v = 0.0);
            return a;
        }
        let frame = &self.frames[(step / self.stride).min(self.frames.len() - 1)];
        let weight = self.mass / self.law_size as f64;
        if let Some(grid) = &frame.grid {
            if let Some(a) = grid.eval(x, b_out) {
                return a;
            }
        }
        frame.direct(x, &self.kernel, weight, b_out)
    }
}

/// Mean-square gaps between particles and their coupled copies along one
/// realization.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingPath {
    pub times: Vec<f64>,
    /// `(1/N) sum_i |x_i - xbar_i|^2`.
    pub err_x: Vec<f64>,
    /// `(1/N) sum_i |v_i - vbar_i|^2`.
    pub err_v: Vec<f64>,
}

/// Evolve the particle system (centered frame) and `N` McKean copies from
/// the same initial points with the same scalar Brownian path.
pub fn coupled_path(
    initial: &ParticleState,
    params: &ModelParams,
    law: &LawTable,
    noise_seed: u64,
    record_every: usize,
) -> Result<CouplingPath> {
    if record_every == 0 {
        return Err(Error::param("record_every", "must be >= 1"));
    }
    let (n, dim) = (initial.n(), initial.dim());
    let mut particles = initial.clone();
    let mut cx = initial.positions().to_vec();
    let mut cv = initial.velocities().to_vec();
    let mut noise = NoiseStream::new(noise_seed, law.dt);
    let s = params.noise_scale();
    let mut b = vec![0.0; dim];
    let mut path = CouplingPath {
        times: vec![initial.time],
        err_x: vec![0.0],
        err_v: vec![0.0],
    };
    for step in 0..law.steps {
        let dw = noise.next_increment();
        for i in 0..n {
            let r = i * dim..(i + 1) * dim;
            let a = law.fields_at(step, &cx[r.clone()], &mut b);
            advance(&mut cx[r.clone()], &mut cv[r], a, &b, params.kappa, s, law.dt, dw);
        }
        particles = em_step(&particles, params, law.dt, dw, true).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite {
                step: step + 1,
                time: initial.time + (step + 1) as f64 * law.dt,
            },
            e => e,
        })?;
        let done = step + 1;
        if done % record_every == 0 || done == law.steps {
            let ex = dist_sq(particles.positions(), &cx) / n as f64;
            let ev = dist_sq(particles.velocities(), &cv) / n as f64;
            if !(ex.is_finite() && ev.is_finite()) {
                return Err(Error::NonFinite {
                    step: done,
                    time: particles.time,
                });
            }
            path.times.push(initial.time + done as f64 * law.dt);
            path.err_x.push(ex);
            path.err_v.push(ev);
        }
    }
    Ok(path)
}

/// Realization-averaged coupling error with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub times: Vec<f64>,
    pub err_x: Vec<f64>,
    pub err_v: Vec<f64>,
    /// Standard error of `err_x + err_v` across realizations.
    pub se_total: Vec<f64>,
    pub n: usize,
    pub realizations: usize,
    pub law_size: usize,
    pub seed: u64,
}

impl CouplingRecord {
    pub fn total(&self) -> Vec<f64> {
        self.err_x.iter().zip(&self.err_v).map(|(x, v)| x + v).collect()
    }
}

/// Knobs of the law estimation used by coupled runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptions {
    pub law_size: usize,
    pub fields: FieldMode,
    pub refresh_stride: usize,
    pub mass: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            law_size: 1024,
            fields: FieldMode::default(),
            refresh_stride: 1,
            mass: 1.0,
        }
    }
}

/// Tabulate the law started from `init`, drawn from a substream of `seed`.
pub fn law_table_for(params: &ModelParams, init: &InitSpec, cfg: &StepConfig, opts: &CouplingOptions) -> Result<LawTable> {
    if opts.fields == FieldMode::Exact {
        return LawTable::exact(params, cfg, opts.mass);
    }
    let law_seed = substream(cfg.seed, TAG_LAW);
    let start = init.draw(opts.law_size, params.dim, substream(law_seed, TAG_INIT))?;
    let ensemble = McKeanEnsemble::from_state(&start, opts.mass)?;
    LawTable::build(&ensemble, params, &cfg.with_seed(law_seed), opts.fields, opts.refresh_stride)
}

/// Average `coupled_path` over `realizations` outer runs. Realization `r`
/// draws its initial configuration and its Brownian path from
/// `realization_seed(seed, r)`; the path does not depend on `N`, so runs at
/// different `N` share noise.
pub fn coupled_ensemble(
    params: &ModelParams,
    init: &InitSpec,
    law: &LawTable,
    seed: u64,
    realizations: usize,
    record_every: usize,
) -> Result<CouplingRecord> {
    if realizations == 0 {
        return Err(Error::param("realizations", "must be >= 1"));
    }
    params.validate()?;
    let paths: Vec<CouplingPath> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let rs = realization_seed(seed, r as u64);
            let start = init.draw(params.n, params.dim, substream(rs, TAG_INIT))?;
            coupled_path(&start, params, law, rs, record_every)
        })
        .collect::<Result<_>>()?;
    let times = paths[0].times.clone();
    let k = times.len();
    let rf = realizations as f64;
    let mut err_x = vec![0.0; k];
    let mut err_v = vec![0.0; k];
    for p in &paths {
        for j in 0..k {
            err_x[j] += p.err_x[j];
            err_v[j] += p.err_v[j];
        }
    }
    err_x.iter_mut().chain(err_v.iter_mut()).for_each(|e| *e /= rf);
    let se_total = (0..k)
        .map(|j| {
            if realizations < 2 {
                return 0.0;
            }
            let mean = err_x[j] + err_v[j];
            let ss: f64 = paths.iter().map(|p| (p.err_x[j] + p.err_v[j] - mean).powi(2)).sum();
            (ss / (rf - 1.0) / rf).sqrt()
        })
        .collect();
    Ok(CouplingRecord {
        times,
        err_x,
        err_v,
        se_total,
        n: params.n,
        realizations,
        law_size: law.law_size,
        seed,
    })
}

/// Build the law table and run the coupling average in one call.
pub fn coupled_run(
    params: &ModelParams,
    init: &InitSpec,
    cfg: &StepConfig,
    realizations: usize,
    opts: &CouplingOptions,
) -> Result<CouplingRecord> {
    let law = law_table_for(params, init, cfg, opts)?;
    coupled_ensemble(params, init, &law, cfg.seed, realizations, cfg.record_every)
}

/// Constants of the McKean energy and coupling estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McKeanConstants {
    /// `min{1/2, (k psi_m m - sigma) / (4 ((k psi_M m)^2 + 1))}`.
    pub epsilon: f64,
    /// `min{epsilon / 2, (k psi_m m - sigma) / 4}`.
    pub eta: f64,
    /// `(k psi_m m - sigma) / kappa`, clamped to 0 at and below the boundary.
    pub delta: f64,
    /// `(2 / delta + 4 epsilon kappa) kappa psi_M^2 m M2`; needs `delta > 0`.
    pub lambda: Option<f64>,
    /// Kinetic decay constant, present in the decay regime.
    pub c_m: Option<f64>,
    /// `min{C_m, eta}`.
    pub c_star: Option<f64>,
    /// `kappa psi_m m > d sigma`.
    pub hypotheses_hold: bool,
}

/// `second_moment` is `int (|x|^2 + |v|^2) f_0`.
pub fn mckean_constants(params: &ModelParams, mass: f64, second_moment: f64) -> Result<McKeanConstants> {
    let regime = kinetic_regime(params, mass)?;
    if !(second_moment.is_finite() && second_moment >= 0.0) {
        return Err(Error::param("second_moment", format!("must be >= 0, got {second_moment}")));
    }
    let k = params.kappa;
    let lo = k * params.kernel.psi_min() * mass;
    let hi = k * params.kernel.psi_max() * mass;
    let excess = lo - params.sigma;
    let epsilon = (0.25 * excess / (hi * hi + 1.0)).min(0.5);
    let eta = (epsilon / 2.0).min(0.25 * excess);
    let delta = if excess > 0.0 { excess / k } else { 0.0 };
    let psi_max = params.kernel.psi_max();
    let lambda = (delta > 0.0).then(|| (2.0 / delta + 4.0 * epsilon * k) * k * psi_max * psi_max * mass * second_moment);
    let c_star = regime.c_m.map(|c| c.min(eta));
    Ok(McKeanConstants {
        epsilon,
        eta,
        delta,
        lambda,
        c_m: regime.c_m,
        c_star,
        hypotheses_hold: regime.regime == KineticRegime::Decay && excess > 0.0,
    })
}
