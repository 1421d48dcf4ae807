//! Run configuration files, CSV/JSON emission and run manifests.
//!
//! Configuration is line oriented:
//!
//! ```text
//! # comment
//! [model]
//! kappa = 2
//! kernel = algebraic-quarter:10
//! [run]
//! seed = 7
//! ```
//!
//! Keys are unique across sections, so a key may also appear before any
//! section header. Unknown keys, duplicates and malformed lines are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    flocking_check, generator_lv, kinetic_regime, lyapunov_v, variance_functionals, LyapunovParams, WeightedSample,
};
use crate::error::{Error, Result};
use crate::experiments::{decide, ExperimentKind, ExperimentOutput, ExperimentSpec, KineticEstimator, Table, Tolerances, Verdict};
use crate::mckean::{CouplingOptions, FieldMode};
use crate::model::{CenteredState, KernelSpec, ModelParams, ParticleState, Summation};
use crate::sde::{Halt, InitSpec, StepConfig, TrajectoryRecord};

/// Everything a run can be configured with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kind: Option<ExperimentKind>,
    pub params: ModelParams,
    pub step: StepConfig,
    pub realizations: usize,
    pub sweep: Option<Vec<usize>>,
    pub init: InitSpec,
    pub beta: Option<f64>,
    pub mass: f64,
    pub estimator: KineticEstimator,
    pub law_size: usize,
    pub fields: FieldMode,
    pub refresh_stride: usize,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        let coupling = CouplingOptions::default();
        Self {
            kind: None,
            params: ModelParams::default(),
            step: StepConfig::default(),
            realizations: 100,
            sweep: None,
            init: InitSpec::default(),
            beta: None,
            mass: 1.0,
            estimator: KineticEstimator::Auto,
            law_size: coupling.law_size,
            fields: coupling.fields,
            refresh_stride: coupling.refresh_stride,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        Self {
            kind: Some(spec.kind),
            params: spec.params.clone(),
            step: spec.cfg.clone(),
            realizations: spec.realizations,
            sweep: spec.sweep.clone(),
            init: spec.init,
            beta: spec.beta,
            mass: spec.mass,
            estimator: spec.estimator,
            law_size: spec.coupling.law_size,
            fields: spec.coupling.fields,
            refresh_stride: spec.coupling.refresh_stride,
            tolerances: spec.tolerances.clone(),
        }
    }

    /// Resolve into a validated experiment of the given kind. A sweep list
    /// is carried only into the mean-field sweep.
    pub fn to_spec(&self, kind: ExperimentKind) -> Result<ExperimentSpec> {
        let spec = ExperimentSpec {
            kind,
            params: self.params.clone(),
            cfg: self.step.clone(),
            sweep: if kind == ExperimentKind::MeanFieldSweep { self.sweep.clone() } else { None },
            realizations: self.realizations,
            tolerances: self.tolerances.clone(),
            init: self.init,
            beta: self.beta,
            mass: self.mass,
            estimator: self.estimator,
            coupling: CouplingOptions {
                law_size: self.law_size,
                fields: self.fields,
                refresh_stride: self.refresh_stride,
                mass: self.mass,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.step.validate()?;
        self.tolerances.validate()?;
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be >= 1"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::param("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.init.box_half_width.is_finite() && self.init.box_half_width > 0.0) {
            return Err(Error::param("box", format!("must be > 0, got {}", self.init.box_half_width)));
        }
        if self.law_size < 2 {
            return Err(Error::param("law_size", "must be >= 2"));
        }
        if self.refresh_stride == 0 {
            return Err(Error::param("refresh_stride", "must be >= 1"));
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::param("beta", format!("must be > 0, got {b}")));
            }
        }
        if let Some(list) = &self.sweep {
            if list.is_empty() || list[0] == 0 || list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::param("sweep", "values must be positive and strictly increasing"));
            }
        }
        Ok(())
    }
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("model", &["kappa", "sigma", "kernel", "n", "dim", "summation"]),
    ("run", &["dt", "t_final", "record_every", "seed"]),
    (
        "experiment",
        &[
            "kind",
            "realizations",
            "sweep",
            "beta",
            "mass",
            "box",
            "project",
            "estimator",
            "law_size",
            "fields",
            "refresh_stride",
        ],
    ),
    ("tolerances", &["slope", "bound", "fraction", "se_slack", "envelope_se", "collapse"]),
];

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

fn value_err(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| value_err(key, format!("expected a number, got `{v}`")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| value_err(key, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(value_err(key, format!("expected true or false, got `{v}`"))),
    }
}

fn is_none(v: &str) -> bool {
    v == "none"
}

/// Comma-separated list of particle counts.
pub fn parse_n_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_usize(key, p.trim())).collect()
}

fn apply_key(cfg: &mut RunConfig, key: &str, v: &str) -> Result<()> {
    let wrap = |e: Error| match e {
        Error::Param { reason, .. } => value_err(key, reason),
        e => e,
    };
    match key {
        "kappa" => cfg.params.kappa = parse_f64(key, v)?,
        "sigma" => cfg.params.sigma = parse_f64(key, v)?,
        "kernel" => cfg.params.kernel = v.parse::<KernelSpec>().map_err(wrap)?,
        "n" => cfg.params.n = parse_usize(key, v)?,
        "dim" => cfg.params.dim = parse_usize(key, v)?,
        "summation" => {
            cfg.params.summation = match v {
                "plain" => Summation::Plain,
                "compensated" => Summation::Compensated,
                _ => return Err(value_err(key, format!("expected plain or compensated, got `{v}`"))),
            }
        }
        "dt" => cfg.step.dt = parse_f64(key, v)?,
        "t_final" => cfg.step.t_final = parse_f64(key, v)?,
        "record_every" => cfg.step.record_every = parse_usize(key, v)?,
        "seed" => cfg.step.seed = v.parse::<u64>().map_err(|_| value_err(key, format!("expected an unsigned 64-bit integer, got `{v}`")))?,
        "kind" => cfg.kind = if is_none(v) { None } else { Some(v.parse().map_err(wrap)?) },
        "realizations" => cfg.realizations = parse_usize(key, v)?,
        "sweep" => cfg.sweep = if is_none(v) { None } else { Some(parse_n_list(key, v)?) },
        "beta" => cfg.beta = if is_none(v) { None } else { Some(parse_f64(key, v)?) },
        "mass" => cfg.mass = parse_f64(key, v)?,
        "box" => cfg.init.box_half_width = parse_f64(key, v)?,
        "project" => cfg.init.project = parse_bool(key, v)?,
        "estimator" => cfg.estimator = v.parse().map_err(wrap)?,
        "law_size" => cfg.law_size = parse_usize(key, v)?,
        "fields" => cfg.fields = v.parse().map_err(wrap)?,
        "refresh_stride" => cfg.refresh_stride = parse_usize(key, v)?,
        "slope" => cfg.tolerances.slope = parse_f64(key, v)?,
        "bound" => cfg.tolerances.bound = parse_f64(key, v)?,
        "fraction" => cfg.tolerances.fraction = parse_f64(key, v)?,
        "se_slack" => cfg.tolerances.se_slack = parse_f64(key, v)?,
        "envelope_se" => cfg.tolerances.envelope_se = parse_f64(key, v)?,
        "collapse" => cfg.tolerances.collapse = parse_f64(key, v)?,
        _ => unreachable!("key table and setter disagree on `{key}`"),
    }
    Ok(())
}

/// Parse a configuration; missing keys take the defaults of
/// [`RunConfig::default`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_onto(RunConfig::default(), text)
}

/// Parse a configuration on top of `base`: only keys present in `text`
/// change.
pub fn parse_config_onto(base: RunConfig, text: &str) -> Result<RunConfig> {
    let mut cfg = base;
    let mut section: Option<&'static str> = None;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Syntax {
                    line: line_no,
                    msg: "section header must end with `]`".into(),
                })?
                .trim();
            section = Some(
                SECTIONS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .map(|(s, _)| *s)
                    .ok_or_else(|| Error::Syntax {
                        line: line_no,
                        msg: format!("unknown section `[{name}]`"),
                    })?,
            );
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Syntax {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Syntax {
                line: line_no,
                msg: "empty key or value".into(),
            });
        }
        let home = section_of(key).ok_or_else(|| Error::Syntax {
            line: line_no,
            msg: format!("unknown key `{key}`"),
        })?;
        if let Some(s) = section {
            if s != home {
                return Err(Error::Syntax {
                    line: line_no,
                    msg: format!("key `{key}` belongs in [{home}], not [{s}]"),
                });
            }
        }
        if let Some(prev) = seen.insert(key.to_string(), line_no) {
            return Err(Error::Syntax {
                line: line_no,
                msg: format!("duplicate key `{key}` (first set on line {prev})"),
            });
        }
        apply_key(&mut cfg, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text form; `parse_config(&to_canonical(c)) == c`.
pub fn to_canonical(cfg: &RunConfig) -> String {
    let opt_f = |v: Option<f64>| v.map_or("none".to_string(), |b| format!("{b:?}"));
    let mut s = String::new();
    let p = &cfg.params;
    let _ = writeln!(s, "[model]");
    let _ = writeln!(s, "kappa = {:?}", p.kappa);
    let _ = writeln!(s, "sigma = {:?}", p.sigma);
    let _ = writeln!(s, "kernel = {}", p.kernel);
    let _ = writeln!(s, "n = {}", p.n);
    let _ = writeln!(s, "dim = {}", p.dim);
    let _ = writeln!(
        s,
        "summation = {}",
        match p.summation {
            Summation::Plain => "plain",
            Summation::Compensated => "compensated",
        }
    );
    let _ = writeln!(s, "\n[run]");
    let _ = writeln!(s, "dt = {:?}", cfg.step.dt);
    let _ = writeln!(s, "t_final = {:?}", cfg.step.t_final);
    let _ = writeln!(s, "record_every = {}", cfg.step.record_every);
    let _ = writeln!(s, "seed = {}", cfg.step.seed);
    let _ = writeln!(s, "\n[experiment]");
    let _ = writeln!(s, "kind = {}", cfg.kind.map_or("none".to_string(), |k| k.to_string()));
    let _ = writeln!(s, "realizations = {}", cfg.realizations);
    let sweep = cfg.sweep.as_ref().map_or("none".to_string(), |l| {
        l.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    });
    let _ = writeln!(s, "sweep = {sweep}");
    let _ = writeln!(s, "beta = {}", opt_f(cfg.beta));
    let _ = writeln!(s, "mass = {:?}", cfg.mass);
    let _ = writeln!(s, "box = {:?}", cfg.init.box_half_width);
    let _ = writeln!(s, "project = {}", cfg.init.project);
    let _ = writeln!(s, "estimator = {}", cfg.estimator);
    let _ = writeln!(s, "law_size = {}", cfg.law_size);
    let _ = writeln!(s, "fields = {}", cfg.fields);
    let _ = writeln!(s, "refresh_stride = {}", cfg.refresh_stride);
    let t = &cfg.tolerances;
    let _ = writeln!(s, "\n[tolerances]");
    let _ = writeln!(s, "slope = {:?}", t.slope);
    let _ = writeln!(s, "bound = {:?}", t.bound);
    let _ = writeln!(s, "fraction = {:?}", t.fraction);
    let _ = writeln!(s, "se_slack = {:?}", t.se_slack);
    let _ = writeln!(s, "envelope_se = {:?}", t.envelope_se);
    let _ = writeln!(s, "collapse = {:?}", t.collapse);
    s
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Per-snapshot diagnostics written next to a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub s: f64,
    pub lyapunov_v: f64,
    pub generator_lv: f64,
    pub l_std: f64,
    pub l_tilde: f64,
}

/// Weights used when evaluating diagnostics on a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSettings {
    pub beta: f64,
    pub epsilon: f64,
    pub mass: f64,
}

impl DiagnosticSettings {
    /// `beta` from the flocking check when certified (0.5 otherwise),
    /// `epsilon` from the kinetic regime.
    pub fn for_params(params: &ModelParams, mass: f64) -> Result<Self> {
        let report = flocking_check(params, None)?;
        let regime = kinetic_regime(params, mass)?;
        Ok(Self {
            beta: report.beta_used.unwrap_or(0.5),
            epsilon: regime.default_epsilon(),
            mass,
        })
    }
}

pub fn diagnostics_row(state: &ParticleState, params: &ModelParams, settings: &DiagnosticSettings) -> Result<DiagnosticRow> {
    let c = CenteredState::project(state);
    let lp = LyapunovParams::with_beta(settings.beta);
    let f = variance_functionals(&WeightedSample::from_state(state, settings.mass)?, settings.epsilon)?;
    Ok(DiagnosticRow {
        t: state.time,
        s: c.norm_sum(),
        lyapunov_v: lyapunov_v(&c, &lp),
        generator_lv: generator_lv(&c, params, &lp),
        l_std: f.l_std,
        l_tilde: f.l_tilde,
    })
}

pub const DIAGNOSTICS_HEADER: &str = "t,S,lyapunov_V,generator_LV,L_std,L_tilde";

pub fn write_diagnostics(record: &TrajectoryRecord, settings: &DiagnosticSettings, path: &Path) -> Result<Vec<DiagnosticRow>> {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    let mut rows = Vec::with_capacity(record.states.len());
    for st in &record.states {
        let r = diagnostics_row(st, &record.params, settings)?;
        let _ = writeln!(out, "{:?},{:?},{:?},{:?},{:?},{:?}", r.t, r.s, r.lyapunov_v, r.generator_lv, r.l_std, r.l_tilde);
        rows.push(r);
    }
    write_file(path, out.as_bytes())?;
    Ok(rows)
}

/// JSON written beside a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub seed: u64,
    pub params: ModelParams,
    pub centered: bool,
    pub n: usize,
    pub dim: usize,
    pub snapshots: usize,
    pub halt: Option<Halt>,
    pub final_diagnostics: Option<DiagnosticRow>,
}

pub fn trajectory_header(dim: usize) -> String {
    let mut h = String::from("t,particle");
    for k in 1..=dim {
        let _ = write!(h, ",x{k}");
    }
    for k in 1..=dim {
        let _ = write!(h, ",v{k}");
    }
    h
}

/// Sidecar path: the CSV path with a `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// CSV with one row per (snapshot, particle) plus the JSON sidecar.
pub fn write_trajectory(record: &TrajectoryRecord, path: &Path, final_diagnostics: Option<DiagnosticRow>) -> Result<()> {
    let first = record.states.first().ok_or(Error::EmptySample)?;
    let (n, dim) = (first.n(), first.dim());
    let mut out = trajectory_header(dim);
    out.push('\n');
    for st in &record.states {
        for i in 0..n {
            let _ = write!(out, "{:?},{i}", st.time);
            for c in st.position(i).iter().chain(st.velocity(i)) {
                let _ = write!(out, ",{c:?}");
            }
            out.push('\n');
        }
    }
    write_file(path, out.as_bytes())?;
    let summary = TrajectorySummary {
        seed: record.noise_seed,
        params: record.params.clone(),
        centered: record.centered,
        n,
        dim,
        snapshots: record.states.len(),
        halt: record.halt.clone(),
        final_diagnostics,
    };
    write_file(&sidecar_path(path), serde_json::to_string_pretty(&summary)?.as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryRecord> {
    let summary: TrajectorySummary = serde_json::from_str(&read_file(&sidecar_path(path))?)?;
    let text = read_file(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    if header != trajectory_header(summary.dim) {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let (n, dim) = (summary.n, summary.dim);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut x = Vec::with_capacity(n * dim);
    let mut v = Vec::with_capacity(n * dim);
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + 2 * dim {
            return Err(bad(format!("row {} has {} fields", k + 1, fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("row {}: bad number `{s}`", k + 1)));
        let t = num(fields[0])?;
        let particle: usize = fields[1].parse().map_err(|_| bad(format!("row {}: bad particle index", k + 1)))?;
        if particle != k % n {
            return Err(bad(format!("row {}: particle {particle} out of order", k + 1)));
        }
        for f in &fields[2..2 + dim] {
            x.push(num(f)?);
        }
        for f in &fields[2 + dim..] {
            v.push(num(f)?);
        }
        if particle == n - 1 {
            states.push(ParticleState::new(t, n, dim, std::mem::take(&mut x), std::mem::take(&mut v))?);
            times.push(t);
        }
    }
    if !x.is_empty() {
        return Err(bad("trailing partial snapshot".into()));
    }
    Ok(TrajectoryRecord {
        times,
        states,
        noise_seed: summary.seed,
        params: summary.params,
        centered: summary.centered,
        halt: summary.halt,
    })
}

pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_table(name: &str, path: &Path) -> Result<Table> {
    let text = read_file(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let columns: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|_| bad(format!("row {}: bad number `{c}`", k + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(bad(format!("row {} has {} fields, header has {}", k + 1, row.len(), columns.len())));
        }
        rows.push(row);
    }
    Ok(Table {
        name: name.to_string(),
        columns,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Index of the files a run produced. Contains no timestamps, so identical
/// runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Hash `files` (relative to `dir`) and write `manifest.json`.
pub fn write_manifest(dir: &Path, command: &str, seed: u64, files: &[String]) -> Result<Manifest> {
    let mut sorted: Vec<&String> = files.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut entries = Vec::with_capacity(sorted.len());
    for rel in sorted {
        let p = dir.join(rel);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let digest = Sha256::digest(&bytes);
        entries.push(ManifestEntry {
            path: rel.clone(),
            bytes: bytes.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
    }
    let manifest = Manifest {
        command: command.to_string(),
        seed,
        files: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&dir.join(MANIFEST_NAME), text.as_bytes())?;
    Ok(manifest)
}

pub const VERDICT_NAME: &str = "verdict.json";
pub const CONFIG_NAME: &str = "config.ini";

/// `<name>.csv`, its sidecar and `<name>_diagnostics.csv`; returns the file
/// names relative to `dir`.
fn write_trajectory_bundle(rec: &TrajectoryRecord, mass: f64, dir: &Path, name: &str) -> Result<Vec<String>> {
    let csv = format!("{name}.csv");
    let diag = format!("{name}_diagnostics.csv");
    let settings = DiagnosticSettings::for_params(&rec.params, mass)?;
    let rows = write_diagnostics(rec, &settings, &dir.join(&diag))?;
    write_trajectory(rec, &dir.join(&csv), rows.last().copied())?;
    Ok(vec![csv, format!("{name}.json"), diag])
}

/// Write a plain simulation: trajectory, diagnostics, canonical config and
/// manifest.
pub fn write_simulation(rec: &TrajectoryRecord, config: &RunConfig, dir: &Path, command: &str) -> Result<Manifest> {
    let mut files = write_trajectory_bundle(rec, config.mass, dir, "trajectory")?;
    write_file(&dir.join(CONFIG_NAME), to_canonical(config).as_bytes())?;
    files.push(CONFIG_NAME.to_string());
    write_manifest(dir, command, rec.noise_seed, &files)
}

/// Write an experiment's evidence, trajectories, verdict, canonical config
/// and manifest under `dir`. Returns the verdict with its artifact list.
pub fn write_experiment(output: &ExperimentOutput, config: &RunConfig, dir: &Path, command: &str) -> Result<Verdict> {
    let mut files = Vec::new();
    for t in &output.tables {
        let name = format!("{}.csv", t.name);
        write_table(t, &dir.join(&name))?;
        files.push(name);
    }
    for (name, rec) in &output.trajectories {
        files.extend(write_trajectory_bundle(rec, config.mass, dir, name)?);
    }
    write_file(&dir.join(CONFIG_NAME), to_canonical(config).as_bytes())?;
    files.push(CONFIG_NAME.to_string());
    let mut verdict = output.verdict.clone();
    files.sort();
    verdict.artifacts = files.clone();
    let mut text = serde_json::to_string_pretty(&verdict)?;
    text.push('\n');
    write_file(&dir.join(VERDICT_NAME), text.as_bytes())?;
    files.push(VERDICT_NAME.to_string());
    write_manifest(dir, command, verdict.seed, &files)?;
    Ok(verdict)
}

/// Recompute pass/fail from the files of a finished experiment.
pub fn recheck_verdict(dir: &Path) -> Result<(Verdict, bool)> {
    let verdict: Verdict = serde_json::from_str(&read_file(&dir.join(VERDICT_NAME))?)?;
    let tables = verdict
        .artifacts
        .iter()
        .filter(|a| a.ends_with(".csv"))
        .map(|a| read_table(a.trim_end_matches(".csv"), &dir.join(a)))
        .collect::<Result<Vec<_>>>()?;
    let decision = decide(verdict.kind, &tables, &verdict.expected)?;
    Ok((verdict, decision.pass))
}
