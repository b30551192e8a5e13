use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimation::{ekf_predict, ekf_update, simulate_measurement, EkfState};
use crate::information::{
    crlb_measurement_update, crlb_propagate, propagated_trace, Crlb, NoiseModel,
};
use crate::policies::{policy_decide_with_jacobian, CollapseConfig, PolicyKind};
use crate::rng::{stream, Stream};
use crate::systems::{
    AugmentedVanDerPol, DynamicalSystem, Hopf, IntegratorConfig, LinearSystem, Lorenz, State,
    VanDerPol,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemId {
    /// `ẋ = diag(−10, −0.1) x`.
    Linear2,
    /// `ẋ = 0` in two dimensions.
    Static2,
    /// Van der Pol with `μ = 1`.
    VanDerPol,
    Hopf,
    Lorenz,
    /// Van der Pol plus `dim − 2` decaying coordinates.
    AugVdp,
}

impl SystemId {
    pub const ALL: [SystemId; 6] = [
        Self::Linear2,
        Self::Static2,
        Self::VanDerPol,
        Self::Hopf,
        Self::Lorenz,
        Self::AugVdp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear2 => "linear2",
            Self::Static2 => "static2",
            Self::VanDerPol => "vdp",
            Self::Hopf => "hopf",
            Self::Lorenz => "lorenz",
            Self::AugVdp => "augvdp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| invalid(format!("unknown system {s:?}")))
    }

    /// Dimension for fixed-size systems; `None` for [`SystemId::AugVdp`].
    pub fn fixed_dimension(&self) -> Option<usize> {
        match self {
            Self::Lorenz => Some(3),
            Self::AugVdp => None,
            _ => Some(2),
        }
    }

    pub fn build(&self, dim: usize) -> Result<Box<dyn DynamicalSystem>> {
        if let Some(m) = self.fixed_dimension() {
            check_dim(m, dim)?;
        }
        Ok(match self {
            Self::Linear2 => Box::new(LinearSystem::diagonal(&[-10.0, -0.1])?),
            Self::Static2 => Box::new(LinearSystem::new(DMatrix::zeros(2, 2))?),
            Self::VanDerPol => Box::new(VanDerPol::new(1.0)?),
            Self::Hopf => Box::new(Hopf),
            Self::Lorenz => Box::new(Lorenz::default()),
            Self::AugVdp => Box::new(AugmentedVanDerPol::new(dim)?),
        })
    }

    pub fn default_dimension(&self) -> usize {
        self.fixed_dimension().unwrap_or(4)
    }

    pub fn default_dt(&self) -> f64 {
        match self {
            Self::VanDerPol | Self::AugVdp => 0.05,
            _ => 0.01,
        }
    }

    /// Horizon of the flow Jacobian used by the collapse policy and the
    /// forecast metric.
    pub fn default_horizon(&self) -> f64 {
        match self {
            Self::Hopf => 30.0,
            Self::Lorenz => 1.0,
            _ => 10.0,
        }
    }

    pub fn default_gamma(&self) -> f64 {
        match self {
            Self::Lorenz => 0.9,
            _ => 0.99,
        }
    }

    /// Diagonal of `Σ₀ = s I`.
    pub fn default_sigma0(&self) -> f64 {
        match self {
            Self::Lorenz => 1.0,
            _ => 4.0,
        }
    }

    pub fn default_initial_state(&self) -> InitialState {
        match self {
            Self::Static2 | Self::AugVdp => InitialState::Constant(1.0),
            _ => InitialState::Gaussian { variance: 4.0 },
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Explicit(State),
    /// Every coordinate equal to the given value.
    Constant(f64),
    /// Independent `N(0, variance)` coordinates from the seeded init stream.
    Gaussian {
        variance: f64,
    },
}

impl InitialState {
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<State> {
        match self {
            Self::Explicit(x) => {
                check_dim(m, x.len())?;
                Ok(x.clone())
            }
            Self::Constant(c) => Ok(State::from_element(m, *c)),
            Self::Gaussian { variance } => {
                if !(*variance >= 0.0 && variance.is_finite()) {
                    return Err(invalid(format!(
                        "initial variance must be >= 0, got {variance}"
                    )));
                }
                Ok(gaussian(rng, m, variance.sqrt()))
            }
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, m: usize, sd: f64) -> State {
    State::from_fn(m, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// What the policy sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// The true state.
    Oracle,
    /// An extended Kalman filter estimate.
    Ekf,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SystemId,
    pub dim: usize,
    pub policy: PolicyKind,
    pub steps: usize,
    pub dt: f64,
    /// I.i.d. measurement noise variance.
    pub sigma2: f64,
    /// Horizon of the forecast metric.
    pub horizon: f64,
    /// `Σ₀ = sigma0 · I`.
    pub sigma0: f64,
    pub x0: InitialState,
    pub seed: u64,
    pub estimator: Estimator,
    pub integrator: IntegratorConfig,
}

impl ExperimentConfig {
    /// Per-system defaults with the collapse policy.
    pub fn new(system: SystemId, dim: usize) -> Self {
        Self {
            system,
            dim,
            policy: PolicyKind::Collapse(CollapseConfig::new(system.default_horizon())),
            steps: 1000,
            dt: system.default_dt(),
            sigma2: 1.0,
            horizon: system.default_horizon(),
            sigma0: system.default_sigma0(),
            x0: system.default_initial_state(),
            seed: 1234,
            estimator: Estimator::Oracle,
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!(
                "dt must be finite and > 0, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            )));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(invalid(format!(
                "sigma0 must be finite and >= 0, got {}",
                self.sigma0
            )));
        }
        self.integrator.validate()?;
        self.policy.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub step: usize,
    /// Simulation time of the measurement.
    pub time: f64,
    /// Trace of the bound after the measurement.
    pub trace_crlb: f64,
    /// Trace of the bound transported to `time + horizon` along the true
    /// trajectory.
    pub trace_forecast: f64,
    /// `‖x̂ − x‖` after the update, when a filter runs.
    pub err_norm: Option<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: String,
    pub dimension: usize,
    pub rows: Vec<RunRow>,
    /// Why the run stopped early, if it did.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn final_forecast(&self) -> Option<f64> {
        self.rows.last().map(|r| r.trace_forecast)
    }
}

fn propagate_checked(sigma: &Crlb, jac: &DMatrix<f64>, step: usize) -> Result<Crlb> {
    let mut next = crlb_propagate(sigma, jac)?;
    if next.clip_negative_eigenvalues() {
        log::warn!("step {step}: clipped negative eigenvalues of the bound");
    }
    Ok(next)
}

/// Measurement loop: decide, measure, update, advance by `dt`.
///
/// Integration divergence ends the run early and is reported in
/// [`RunRecord::error`]; every other error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let system = cfg.system.build(cfg.dim)?;
    let m = system.dimension();
    let noise = NoiseModel::iid(m, cfg.sigma2)?;
    let mut init_rng = stream(cfg.seed, Stream::Init);
    let mut noise_rng = stream(cfg.seed, Stream::Noise);
    let mut policy_rng = stream(cfg.seed, Stream::Policy);

    let mut x_true = cfg.x0.draw(m, &mut init_rng)?;
    let mut sigma = Crlb::scaled_identity(m, cfg.sigma0);
    let mut estimate = match cfg.estimator {
        Estimator::Oracle => None,
        Estimator::Ekf => Some(&x_true + gaussian(&mut init_rng, m, cfg.sigma0.sqrt())),
    };
    let collapse_horizon = match &cfg.policy {
        PolicyKind::Collapse(c) => Some(c.horizon),
        _ => None,
    };

    let mut record = RunRecord {
        policy: cfg.policy.name().to_string(),
        dimension: m,
        rows: Vec::with_capacity(cfg.steps),
        error: None,
    };
    let integ = &cfg.integrator;
    let outcome = (|| -> Result<()> {
        for step in 0..cfg.steps {
            let forecast_jac = system.flow_jacobian(&x_true, cfg.horizon, integ)?;
            let seen = estimate.as_ref().unwrap_or(&x_true);
            let policy_jac = match collapse_horizon {
                Some(t) if t == cfg.horizon && estimate.is_none() => None,
                Some(t) => Some(system.flow_jacobian(seen, t, integ)?),
                None => None,
            };
            let jac_for_policy = match collapse_horizon {
                Some(_) => Some(policy_jac.as_ref().unwrap_or(&forecast_jac)),
                None => None,
            };
            let u = policy_decide_with_jacobian(
                &cfg.policy,
                system.as_ref(),
                seen,
                &sigma,
                &noise,
                &mut policy_rng,
                integ,
                jac_for_policy,
            )?;
            let y = simulate_measurement(&mut noise_rng, &x_true, &u, &noise)?;
            let mut err_norm = None;
            match estimate.take() {
                Some(xh) => {
                    let st = ekf_update(
                        &EkfState {
                            estimate: xh,
                            covariance: sigma,
                        },
                        &u,
                        y,
                        &noise,
                    )?;
                    err_norm = Some((&st.estimate - &x_true).norm());
                    sigma = st.covariance;
                    estimate = Some(st.estimate);
                }
                None => sigma = crlb_measurement_update(&sigma, &u, &noise)?,
            }
            record.rows.push(RunRow {
                step,
                time: step as f64 * cfg.dt,
                trace_crlb: sigma.trace(),
                trace_forecast: propagated_trace(&sigma, &forecast_jac)?,
                err_norm,
                u: u.as_vector().iter().copied().collect(),
            });
            if step + 1 == cfg.steps {
                break;
            }
            match estimate.take() {
                Some(xh) => {
                    let st = ekf_predict(
                        system.as_ref(),
                        &EkfState {
                            estimate: xh,
                            covariance: sigma,
                        },
                        cfg.dt,
                        integ,
                    )?;
                    sigma = st.covariance;
                    if sigma.clip_negative_eigenvalues() {
                        log::warn!("step {step}: clipped negative eigenvalues of the bound");
                    }
                    estimate = Some(st.estimate);
                    x_true = system.flow(&x_true, cfg.dt, integ)?;
                }
                None => {
                    let (next, jac) = system.flow_and_jacobian(&x_true, cfg.dt, integ)?;
                    sigma = propagate_checked(&sigma, &jac, step)?;
                    x_true = next;
                }
            }
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(record),
        Err(e @ Error::Diverged { .. }) => {
            log::warn!("run truncated after {} rows: {e}", record.rows.len());
            record.error = Some(e.to_string());
            Ok(record)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub dim: usize,
    pub policy: String,
    pub final_trace_forecast: f64,
}

/// Random and collapse policies on the augmented Van der Pol system at each
/// dimension, sharing seeds (and therefore noise streams) across policies.
pub fn run_scaling_experiment(dims: &[usize], base: &ExperimentConfig) -> Result<Vec<ScalingRow>> {
    if let Some(d) = dims.iter().find(|d| !(2..=64).contains(*d)) {
        return Err(invalid(format!(
            "scaling dimensions must lie in 2..=64, got {d}"
        )));
    }
    let collapse = match &base.policy {
        PolicyKind::Collapse(c) => c.clone(),
        _ => CollapseConfig::new(base.horizon),
    };
    let jobs: Vec<(usize, PolicyKind)> = dims
        .iter()
        .flat_map(|&d| {
            [
                (d, PolicyKind::Random),
                (d, PolicyKind::Collapse(collapse.clone())),
            ]
        })
        .collect();
    jobs.par_iter()
        .map(|(d, policy)| {
            let cfg = ExperimentConfig {
                system: SystemId::AugVdp,
                dim: *d,
                policy: policy.clone(),
                ..base.clone()
            };
            let rec = run_experiment(&cfg)?;
            if let Some(e) = &rec.error {
                return Err(invalid(format!(
                    "scaling run at M = {d} stopped early: {e}"
                )));
            }
            Ok(ScalingRow {
                dim: *d,
                policy: rec.policy.clone(),
                final_trace_forecast: rec.final_forecast().unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Shares a trained table across runs.
pub fn dp_policy(table: crate::dp::ValueTable) -> PolicyKind {
    PolicyKind::DynamicProgramming(Arc::new(table))
}
