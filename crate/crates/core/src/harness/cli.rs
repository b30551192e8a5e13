//! Command-line front end.
//!
//! Settings are resolved in three layers: built-in per-system defaults, then
//! a flat `key=value` config file (`#` starts a comment line), then flags.
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use super::bench::{bench, bench_csv};
use super::csv::{float, to_csv};
use super::experiment::{
    run_experiment, run_scaling_experiment, Estimator, ExperimentConfig, InitialState, SystemId,
};
use super::surface::{emit_objective_surface, surface_csv};
use crate::dp::{
    build_action_set, expected_min_distance, gaussian_states, sample_psd, trajectory_states,
    value_iteration, ActionSpec, DpConfig, DpSampleSet, Interpolation, ValueTable,
};
use crate::error::Error;
use crate::information::{Crlb, NoiseModel};
use crate::policies::{AscentConfig, CollapseConfig, CollapseObjective, PolicyKind, StepSchedule};
use crate::rng::{stream, Stream};
use crate::systems::{IntegratorConfig, State};

#[derive(Debug, Parser)]
#[command(
    name = "dimcollapse",
    version,
    about = "Measurement selection for forecasting dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one measurement experiment and write its per-step CSV.
    Simulate(Flags),
    /// Random vs collapse on the augmented Van der Pol system across dimensions.
    Scaling(Flags),
    /// Build and save a dynamic-programming value table.
    DpTrain(Flags),
    /// Export the collapse objective over the unit sphere (M = 3).
    Surface(Flags),
    /// Time decisions and DP initialization across problem sizes.
    Bench(Flags),
}

#[derive(Debug, Default, clap::Args)]
struct Flags {
    /// linear2, static2, vdp, hopf, lorenz or augvdp.
    #[arg(long)]
    system: Option<String>,
    /// random, collapse or dp.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// I.i.d. measurement noise variance.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flow-Jacobian horizon of the collapse policy and the forecast metric.
    #[arg(long)]
    horizon: Option<f64>,
    /// DP discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Value table written by dp-train, for --policy dp.
    #[arg(long)]
    table: Option<PathBuf>,
    /// oracle or ekf.
    #[arg(long)]
    estimator: Option<String>,
    /// Comma-separated dimensions (scaling, bench).
    #[arg(long)]
    dims: Option<String>,
    /// PSD sample count (dp-train).
    #[arg(long)]
    samples: Option<usize>,
    /// Value-iteration sweeps (dp-train).
    #[arg(long)]
    iterations: Option<usize>,
    /// Grid spacing in degrees (surface).
    #[arg(long)]
    resolution: Option<f64>,
}

/// Keys accepted in config files; every flag except `--config` has one.
const KNOWN_KEYS: &[&str] = &[
    "system",
    "policy",
    "dim",
    "steps",
    "dt",
    "sigma2",
    "seed",
    "horizon",
    "gamma",
    "out",
    "table",
    "estimator",
    "dims",
    "samples",
    "iterations",
    "resolution",
    "sigma0",
    "x0",
    "k",
    "ascent_steps",
    "ascent_scale",
    "d_max",
    "interpolation",
    "action_spacing",
    "actions",
    "eigenvalue_rate",
    "panel",
    "sample_sizes",
    "repeats",
    "rtol",
    "atol",
];

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Settings(BTreeMap<String, String>);

impl Settings {
    fn resolve(flags: &Flags) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = &flags.config {
            parse_config_file(path, &mut map)?;
        }
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        set("system", flags.system.clone());
        set("policy", flags.policy.clone());
        set("dim", flags.dim.map(|v| v.to_string()));
        set("steps", flags.steps.map(|v| v.to_string()));
        set("dt", flags.dt.map(|v| v.to_string()));
        set("sigma2", flags.sigma2.map(|v| v.to_string()));
        set("seed", flags.seed.map(|v| v.to_string()));
        set("horizon", flags.horizon.map(|v| v.to_string()));
        set("gamma", flags.gamma.map(|v| v.to_string()));
        set("out", flags.out.as_ref().map(|p| p.display().to_string()));
        set(
            "table",
            flags.table.as_ref().map(|p| p.display().to_string()),
        );
        set("estimator", flags.estimator.clone());
        set("dims", flags.dims.clone());
        set("samples", flags.samples.map(|v| v.to_string()));
        set("iterations", flags.iterations.map(|v| v.to_string()));
        set("resolution", flags.resolution.map(|v| v.to_string()));
        Ok(Self(map))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.str(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| usage(format!("invalid value for {key}: {v:?}")))
            })
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        match self.str(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| usage(format!("invalid value for {key}: {v:?}")))
                })
                .collect(),
        }
    }

    fn out(&self) -> Option<PathBuf> {
        self.str("out").map(PathBuf::from)
    }

    fn system(&self, default: SystemId) -> CliResult<(SystemId, usize)> {
        let id = match self.str("system") {
            Some(s) => SystemId::parse(s).map_err(|e| usage(e.to_string()))?,
            None => default,
        };
        let dim = self.get_or("dim", id.default_dimension())?;
        if let Some(m) = id.fixed_dimension() {
            if m != dim {
                return Err(usage(format!(
                    "system {id} has dimension {m}, got --dim {dim}"
                )));
            }
        }
        Ok((id, dim))
    }
}

fn parse_config_file(path: &Path, map: &mut BTreeMap<String, String>) -> CliResult<()> {
    let text = fs::read_to_string(path).map_err(|source| {
        CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        let k = k.trim();
        if !KNOWN_KEYS.contains(&k) {
            return Err(usage(format!(
                "{}:{}: unknown key {k:?}",
                path.display(),
                i + 1
            )));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| {
            CliError::Runtime(Error::Io {
                path: p.to_path_buf(),
                source,
            })
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| {
                    CliError::Runtime(Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source,
                    })
                })
        }
    }
}

fn parse_x0(s: &str) -> CliResult<InitialState> {
    let bad = || {
        usage(format!(
            "invalid x0 {s:?}; use gaussian:<variance>, const:<value> or a comma list"
        ))
    };
    if let Some(v) = s.strip_prefix("gaussian:") {
        return Ok(InitialState::Gaussian {
            variance: v.parse().map_err(|_| bad())?,
        });
    }
    if let Some(v) = s.strip_prefix("const:") {
        return Ok(InitialState::Constant(v.parse().map_err(|_| bad())?));
    }
    let xs = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(InitialState::Explicit(State::from_vec(xs)))
}

fn collapse_config(s: &Settings, horizon: f64) -> CliResult<CollapseConfig> {
    let mut c = CollapseConfig::new(horizon);
    c.k = s.get_or("k", 1)?;
    c.ascent = AscentConfig {
        steps: s.get_or("ascent_steps", 1000)?,
        schedule: StepSchedule::Decaying {
            scale: s.get_or("ascent_scale", 1e4)?,
            exponent: 2.0 / 3.0,
        },
        ..Default::default()
    };
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn experiment_config(s: &Settings, default_system: SystemId) -> CliResult<ExperimentConfig> {
    let (id, dim) = s.system(default_system)?;
    let mut c = ExperimentConfig::new(id, dim);
    c.steps = s.get_or("steps", c.steps)?;
    c.dt = s.get_or("dt", c.dt)?;
    c.sigma2 = s.get_or("sigma2", c.sigma2)?;
    c.seed = s.get_or("seed", c.seed)?;
    c.horizon = s.get_or("horizon", c.horizon)?;
    c.sigma0 = s.get_or("sigma0", c.sigma0)?;
    if let Some(x0) = s.str("x0") {
        c.x0 = parse_x0(x0)?;
    }
    c.estimator = match s.str("estimator").unwrap_or("oracle") {
        "oracle" => Estimator::Oracle,
        "ekf" => Estimator::Ekf,
        other => {
            return Err(usage(format!(
                "unknown estimator {other:?}; use oracle or ekf"
            )))
        }
    };
    let rtol = s.get_or("rtol", c.integrator.rtol)?;
    let atol = s.get_or("atol", c.integrator.atol)?;
    c.integrator = IntegratorConfig::new(rtol, atol, c.integrator.max_steps)
        .map_err(|e| usage(e.to_string()))?;
    c.policy = match s.str("policy").unwrap_or("collapse") {
        "random" => PolicyKind::Random,
        "collapse" => PolicyKind::Collapse(collapse_config(s, c.horizon)?),
        "dp" => {
            let path = s
                .str("table")
                .ok_or_else(|| usage("--policy dp needs --table <path> from dp-train"))?;
            let table = ValueTable::load(Path::new(path))?;
            if !table.label.is_empty() && table.label != id.name() {
                log::warn!(
                    "value table was trained on {:?}, running on {}",
                    table.label,
                    id
                );
            }
            PolicyKind::DynamicProgramming(Arc::new(table))
        }
        other => {
            return Err(usage(format!(
                "unknown policy {other:?}; use random, collapse or dp"
            )))
        }
    };
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn simulate(s: &Settings) -> CliResult<()> {
    let cfg = experiment_config(s, SystemId::Linear2)?;
    let record = run_experiment(&cfg)?;
    log::info!(
        "{} on {}: {} rows, final forecast trace {:?}",
        record.policy,
        cfg.system,
        record.rows.len(),
        record.final_forecast()
    );
    write_output(s.out().as_deref(), &to_csv(&record))
}

fn scaling(s: &Settings) -> CliResult<()> {
    if let Some(sys) = s.str("system") {
        if sys != SystemId::AugVdp.name() {
            return Err(usage("scaling always runs the augvdp system"));
        }
    }
    let dims = s.list("dims", &[2, 4, 8, 16])?;
    let mut base = experiment_config(s, SystemId::AugVdp)?;
    if let PolicyKind::DynamicProgramming(_) = base.policy {
        return Err(usage(
            "scaling compares random and collapse; --policy dp is not supported",
        ));
    }
    base.policy = PolicyKind::Collapse(collapse_config(s, base.horizon)?);
    let rows = run_scaling_experiment(&dims, &base)?;
    let mut text = String::from("dim,policy,final_trace_forecast\n");
    for r in rows {
        text.push_str(&format!("{},{},", r.dim, r.policy));
        float(&mut text, r.final_trace_forecast);
        text.push('\n');
    }
    write_output(s.out().as_deref(), &text)
}

fn dp_train(s: &Settings) -> CliResult<()> {
    let (id, m) = s.system(SystemId::Linear2)?;
    let system = id.build(m)?;
    let seed = s.get_or("seed", 1234u64)?;
    let dt = s.get_or("dt", id.default_dt())?;
    let n_psd = s.get_or("samples", 30usize)?;
    let rate = s.get_or("eigenvalue_rate", 1.0)?;
    let sigma2 = s.get_or("sigma2", 1.0)?;
    let integ = IntegratorConfig::default();
    let mut rng = stream(seed, Stream::Sampling);
    let states = match id {
        SystemId::Linear2 | SystemId::Static2 => vec![State::from_element(m, 1.0)],
        SystemId::Lorenz => gaussian_states(&mut rng, m, 120, 25.0),
        _ => {
            let seeds = gaussian_states(&mut rng, m, 30, 25.0);
            trajectory_states(system.as_ref(), &seeds, 3, dt, &integ)?
        }
    };
    let samples =
        DpSampleSet::sample(&mut rng, states, n_psd, rate).map_err(|e| usage(e.to_string()))?;
    let d_max = match s.get::<f64>("d_max")? {
        Some(d) => d,
        None => {
            let mut r = stream(seed, Stream::Sampling);
            2.0 * expected_min_distance(
                &mut r,
                |r| sample_psd(r, m, rate).expect("rate validated"),
                n_psd,
                200,
            )?
        }
    };
    let actions = if m == 2 && s.str("actions").is_none() {
        build_action_set(
            2,
            ActionSpec::Spacing(s.get_or("action_spacing", 0.1)?),
            &mut rng,
        )?
    } else {
        build_action_set(m, ActionSpec::Count(s.get_or("actions", 50)?), &mut rng)?
    };
    let interpolation = Interpolation::parse(s.str("interpolation").unwrap_or("local-average"))
        .map_err(|e| usage(e.to_string()))?;
    let cfg = DpConfig {
        gamma: s.get_or("gamma", id.default_gamma())?,
        d_max,
        actions,
        iterations: s.get_or("iterations", 100)?,
        dt,
        interpolation,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    log::info!(
        "value iteration on {id}: {} points, {} actions, d_max {d_max:.4}",
        samples.len(),
        cfg.actions.len()
    );
    let mut table = value_iteration(
        samples,
        cfg,
        system.as_ref(),
        &NoiseModel::iid(m, sigma2)?,
        &integ,
    )?;
    table.label = id.name().to_string();
    write_output(s.out().as_deref(), &table.to_text())
}

fn surface(s: &Settings) -> CliResult<()> {
    if let Some(m) = s.get::<usize>("dim")? {
        if m != 3 {
            return Err(CliError::Runtime(Error::Unsupported(format!(
                "objective surfaces need M = 3, got {m}"
            ))));
        }
    }
    let v = DVector::from_element(3, 1.0).normalize();
    let sigma = match s.str("panel").unwrap_or("a") {
        "a" => DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.1 }),
        "b" => DMatrix::identity(3, 3) - &v * v.transpose() * 0.95,
        other => return Err(usage(format!("unknown panel {other:?}; use a or b"))),
    };
    let obj = CollapseObjective::single(
        Crlb::new(sigma)?,
        NoiseModel::iid(3, s.get_or("sigma2", 1.0)?)?,
        v,
    )?;
    let rows = emit_objective_surface(&obj, s.get_or("resolution", 1.0)?)?;
    write_output(s.out().as_deref(), &surface_csv(&rows))
}

fn run_bench(s: &Settings) -> CliResult<()> {
    let rows = bench(
        &s.list("dims", &[2, 8, 32])?,
        &s.list("sample_sizes", &[50, 100, 200])?,
        s.get_or("repeats", 5)?,
    )?;
    write_output(s.out().as_deref(), &bench_csv(&rows))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (flags, run): (&Flags, fn(&Settings) -> CliResult<()>) = match &cli.command {
        Command::Simulate(f) => (f, simulate),
        Command::Scaling(f) => (f, scaling),
        Command::DpTrain(f) => (f, dp_train),
        Command::Surface(f) => (f, surface),
        Command::Bench(f) => (f, run_bench),
    };
    let result = Settings::resolve(flags).and_then(|s| run(&s));
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
