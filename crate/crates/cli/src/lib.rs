//! `csmf` command-line driver.
//!
//! Exit codes: 0 on success or a passing verdict, 1 on a failing verdict,
//! 2 on bad arguments, bad configuration, refused experiments and I/O
//! failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use csmf::diagnostics::flocking_check;
use csmf::experiments::{preset, run_experiment, run_simulation, ExperimentKind, Verdict, PRESET_NAMES};
use csmf::io::{parse_config_onto, parse_n_list, write_experiment, write_simulation, RunConfig};
use csmf::{Error, KernelSpec, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "csmf", version, about = "Stochastic Cucker-Smale flocking: simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the full particle system and write its trajectory.
    Simulate(Opts),
    /// Print the flocking condition and rate constants.
    CheckFlocking(Opts),
    /// Almost-sure decay of the fluctuation norm.
    Flocking(Opts),
    /// Kinetic variance bounds (decay or growth regime).
    Moments(Opts),
    /// Energy decay of the self-consistent McKean process.
    Mckean(Opts),
    /// Mean-field error against particle count.
    Meanfield(Opts),
    /// Mean-field error over a long horizon.
    Uniform(Opts),
    /// Run a named preset.
    Preset(Opts),
}

#[derive(Args, Debug, Default, Clone)]
struct Opts {
    /// Configuration file applied on top of the subcommand's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    /// `constant:<c>`, `algebraic-quarter[:R]` or `table:r/psi,...`.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_final: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Comma-separated particle counts for the mean-field sweep.
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Base setup: fig1, fig2, flocking, kinetic-decay, kinetic-growth,
    /// mckean, sweep or uniform.
    #[arg(long)]
    preset: Option<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::CheckFlocking(_) => "check-flocking",
            Command::Flocking(_) => "flocking",
            Command::Moments(_) => "moments",
            Command::Mckean(_) => "mckean",
            Command::Meanfield(_) => "meanfield",
            Command::Uniform(_) => "uniform",
            Command::Preset(_) => "preset",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Simulate(o)
            | Command::CheckFlocking(o)
            | Command::Flocking(o)
            | Command::Moments(o)
            | Command::Mckean(o)
            | Command::Meanfield(o)
            | Command::Uniform(o)
            | Command::Preset(o) => o,
        }
    }

    /// Experiment kind and the preset used as its base when `--preset` is
    /// absent.
    fn experiment(&self) -> Option<(ExperimentKind, &'static str)> {
        use ExperimentKind::*;
        match self {
            Command::Flocking(_) => Some((FlockingDecay, "flocking")),
            Command::Moments(_) => Some((KineticMoments, "kinetic-decay")),
            Command::Mckean(_) => Some((McKeanDecay, "mckean")),
            Command::Meanfield(_) => Some((MeanFieldSweep, "sweep")),
            Command::Uniform(_) => Some((UniformInTime, "uniform")),
            _ => None,
        }
    }
}

fn base_config(cmd: &Command) -> Result<RunConfig> {
    let opts = cmd.opts();
    let name = match (&opts.preset, cmd.experiment(), cmd) {
        (Some(p), _, _) => Some(p.as_str()),
        (None, _, Command::Preset(_)) => {
            return Err(Error::ConfigValue {
                key: "preset".into(),
                msg: format!("required; one of {}", PRESET_NAMES.join(", ")),
            })
        }
        (None, Some((_, default)), _) => Some(default),
        (None, None, _) => None,
    };
    let Some(name) = name else {
        return Ok(RunConfig::default());
    };
    let spec = preset(name)?;
    if let Some((kind, _)) = cmd.experiment() {
        if spec.kind != kind {
            return Err(Error::ConfigValue {
                key: "preset".into(),
                msg: format!("`{name}` is a {} preset, `{}` runs {kind}", spec.kind, cmd.name()),
            });
        }
    }
    Ok(RunConfig::from_spec(&spec))
}

fn resolve(cmd: &Command) -> Result<RunConfig> {
    let opts = cmd.opts();
    let mut cfg = base_config(cmd)?;
    if let Some(path) = &opts.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let kind_before = cfg.kind;
        cfg = parse_config_onto(cfg, &text)?;
        if cmd.experiment().is_some() && cfg.kind != kind_before {
            return Err(Error::ConfigValue {
                key: "kind".into(),
                msg: format!("conflicts with subcommand `{}`", cmd.name()),
            });
        }
    }
    if let Some(v) = opts.seed {
        cfg.step.seed = v;
    }
    if let Some(v) = opts.n {
        cfg.params.n = v;
    }
    if let Some(v) = opts.kappa {
        cfg.params.kappa = v;
    }
    if let Some(v) = opts.sigma {
        cfg.params.sigma = v;
    }
    if let Some(v) = &opts.kernel {
        cfg.params.kernel = v.parse::<KernelSpec>()?;
    }
    if let Some(v) = opts.dt {
        cfg.step.dt = v;
    }
    if let Some(v) = opts.t_final {
        cfg.step.t_final = v;
    }
    if let Some(v) = opts.realizations {
        cfg.realizations = v;
    }
    if let Some(v) = &opts.n_list {
        cfg.sweep = Some(parse_n_list("n-list", v)?);
    }
    if let Some(v) = opts.beta {
        cfg.beta = Some(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_verdict(out: &mut dyn Write, v: &Verdict) -> std::io::Result<()> {
    writeln!(out, "kind={}", v.kind)?;
    writeln!(out, "seed={}", v.seed)?;
    for (k, m) in &v.measured {
        writeln!(out, "measured.{k}={m:?}")?;
    }
    for (k, e) in &v.expected {
        writeln!(out, "expected.{k}={:?}", e.value)?;
    }
    for f in &v.flags {
        writeln!(out, "flag={f}")?;
    }
    writeln!(out, "pass={}", v.pass)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn execute(cmd: &Command, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve(cmd)?;
    let label = cmd.name();
    match cmd {
        Command::CheckFlocking(_) => {
            let r = flocking_check(&cfg.params, cfg.beta)?;
            let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
            writeln!(out, "condition_holds={}", r.condition_holds).map_err(io_err)?;
            writeln!(out, "psi_min={:?}", r.psi_min).map_err(io_err)?;
            writeln!(out, "psi_max={:?}", r.psi_max).map_err(io_err)?;
            writeln!(out, "beta_max={:?}", r.beta_max).map_err(io_err)?;
            writeln!(out, "beta={}", opt(r.beta_used)).map_err(io_err)?;
            writeln!(out, "a={}", opt(r.rate_a)).map_err(io_err)?;
            writeln!(out, "decay_rate={}", opt(r.decay_rate)).map_err(io_err)?;
            writeln!(out, "certified_radius={}", opt(r.certified_radius)).map_err(io_err)?;
            Ok(if r.condition_holds { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Simulate(_) => {
            let kind = cfg.kind.unwrap_or(ExperimentKind::PaperFigure);
            let spec = cfg.to_spec(kind)?;
            let rec = run_simulation(&spec)?;
            let last = rec.last();
            writeln!(out, "t={:?}", last.time).map_err(io_err)?;
            writeln!(out, "snapshots={}", rec.states.len()).map_err(io_err)?;
            if let Some(h) = &rec.halt {
                writeln!(out, "halted_at_step={}", h.step).map_err(io_err)?;
            }
            if let Some(dir) = &cmd.opts().out {
                write_simulation(&rec, &cfg, dir, label)?;
                writeln!(out, "out={}", dir.display()).map_err(io_err)?;
            }
            Ok(EXIT_PASS)
        }
        _ => {
            let kind = match cmd.experiment() {
                Some((k, _)) => k,
                None => cfg.kind.ok_or_else(|| Error::ConfigValue {
                    key: "kind".into(),
                    msg: "missing".into(),
                })?,
            };
            let spec = cfg.to_spec(kind)?;
            let result = run_experiment(&spec)?;
            let verdict = match &cmd.opts().out {
                Some(dir) => write_experiment(&result, &cfg, dir, label)?,
                None => result.verdict.clone(),
            };
            print_verdict(out, &verdict).map_err(io_err)?;
            Ok(if verdict.pass { EXIT_PASS } else { EXIT_FAIL })
        }
    }
}

/// Run with the given arguments (including the program name), writing
/// results to `out` and errors to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}
