//! Approximate dynamic-programming baseline.
//!
//! The value function is represented on the product of sampled states and
//! sampled PSD matrices, `J(x, Σ) = Tr Σ + γ min_u J(x₊, Σ₊(u))`, and
//! evaluated elsewhere by nearest-neighbour or local-average interpolation.
//! Successors never change between sweeps, so value iteration first builds a
//! fixed sparse interpolation operator per (sample, action) and then iterates
//! on it.

mod interp;
mod persist;
mod sampling;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Result};
use crate::information::{
    crlb_measurement_update, crlb_propagate, Crlb, MeasurementVector, NoiseModel,
};
use crate::policies::random_unit_vector;
use crate::systems::{DynamicalSystem, IntegratorConfig, State};

pub use interp::{
    expected_min_distance, interpolate_local_average, interpolate_nearest, DpPoint, MetricPoint,
};
pub use persist::FORMAT_VERSION;
pub use sampling::{
    gaussian_states, psd_from_parts, sample_haar_orthonormal, sample_psd, sample_psd_with_spectrum,
    trajectory_states,
};

use interp::{argmin_distance, product_distance, weights_from_distances};

/// Interpolation points: every pairing of a state sample with a PSD sample.
/// Point `k · psds.len() + l` pairs state `k` with matrix `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSampleSet {
    states: Vec<State>,
    psds: Vec<DMatrix<f64>>,
    eigenvalue_rate: f64,
}

impl DpSampleSet {
    pub fn new(states: Vec<State>, psds: Vec<DMatrix<f64>>, eigenvalue_rate: f64) -> Result<Self> {
        if states.is_empty() || psds.is_empty() {
            return Err(invalid(
                "sample set needs at least one state and one PSD matrix",
            ));
        }
        if !(eigenvalue_rate > 0.0 && eigenvalue_rate.is_finite()) {
            return Err(invalid(format!(
                "eigenvalue rate must be finite and > 0, got {eigenvalue_rate}"
            )));
        }
        let m = states[0].len();
        for s in &states {
            check_dim(m, s.len())?;
        }
        for p in &psds {
            check_dim(m, p.nrows())?;
            if !Crlb::new(p.clone())?.is_psd() {
                return Err(invalid("PSD sample has a negative eigenvalue"));
            }
        }
        Ok(Self {
            states,
            psds,
            eigenvalue_rate,
        })
    }

    /// Draws `n_psd` matrices with `sample_psd` and pairs them with `states`.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        states: Vec<State>,
        n_psd: usize,
        rate: f64,
    ) -> Result<Self> {
        let m = states
            .first()
            .map(|s| s.len())
            .ok_or_else(|| invalid("no state samples"))?;
        let psds = (0..n_psd)
            .map(|_| sample_psd(rng, m, rate))
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, psds, rate)
    }

    pub fn dimension(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn psds(&self) -> &[DMatrix<f64>] {
        &self.psds
    }

    pub fn eigenvalue_rate(&self) -> f64 {
        self.eigenvalue_rate
    }

    /// Number of product points.
    pub fn len(&self) -> usize {
        self.states.len() * self.psds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> DpPoint {
        let n = self.psds.len();
        DpPoint {
            state: self.states[index / n].clone(),
            psd: self.psds[index % n].clone(),
        }
    }

    pub fn points(&self) -> Vec<DpPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    // Distances from (x, Σ) to every product point, in point order.
    fn distances(&self, x: &State, psd: &DMatrix<f64>) -> Vec<f64> {
        let ds: Vec<f64> = self.states.iter().map(|s| s.distance(x)).collect();
        let dp: Vec<f64> = self.psds.iter().map(|p| p.distance(psd)).collect();
        let mut out = Vec::with_capacity(self.len());
        for a in &ds {
            for b in &dp {
                out.push(product_distance(*a, *b));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    LocalAverage,
}

impl Interpolation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Nearest => "nearest",
            Self::LocalAverage => "local-average",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "local-average" => Ok(Self::LocalAverage),
            _ => Err(invalid(format!("unknown interpolation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpConfig {
    /// Discount in `(0, 1)`.
    pub gamma: f64,
    /// Local-averaging radius.
    pub d_max: f64,
    pub actions: Vec<DVector<f64>>,
    /// Value-iteration sweeps.
    pub iterations: usize,
    /// Time between measurements.
    pub dt: f64,
    pub interpolation: Interpolation,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(invalid(format!(
                "d_max must be finite and > 0, got {}",
                self.d_max
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!(
                "dt must be finite and > 0, got {}",
                self.dt
            )));
        }
        if self.actions.is_empty() {
            return Err(invalid("action set is empty"));
        }
        let m = self.actions[0].len();
        for a in &self.actions {
            check_dim(m, a.len())?;
            if (a.norm() - 1.0).abs() > 1e-8 {
                return Err(invalid("actions must be unit vectors"));
            }
        }
        Ok(())
    }

    fn interpolate(
        &self,
        samples: &DpSampleSet,
        values: &[f64],
        x: &State,
        psd: &DMatrix<f64>,
    ) -> f64 {
        let d = samples.distances(x, psd);
        match self.interpolation {
            Interpolation::Nearest => values[argmin_distance(&d)],
            Interpolation::LocalAverage => weights_from_distances(&d, self.d_max)
                .iter()
                .map(|(i, w)| w * values[*i])
                .sum(),
        }
    }
}

/// Cost-to-go estimates at every sample point, together with the samples and
/// configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub label: String,
    config: DpConfig,
    samples: DpSampleSet,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(samples: DpSampleSet, config: DpConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        check_dim(samples.dimension(), config.actions[0].len())?;
        check_dim(samples.len(), values.len())?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!(
                "table values must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self {
            label: String::new(),
            config,
            samples,
            values,
        })
    }

    pub fn zeros(samples: DpSampleSet, config: DpConfig) -> Result<Self> {
        let n = samples.len();
        Self::new(samples, config, vec![0.0; n])
    }

    pub fn config(&self) -> &DpConfig {
        &self.config
    }

    pub fn samples(&self) -> &DpSampleSet {
        &self.samples
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.samples.dimension()
    }

    /// Interpolated cost-to-go at `(x, Σ)`.
    pub fn evaluate(&self, x: &State, psd: &DMatrix<f64>) -> Result<f64> {
        check_dim(self.dimension(), x.len())?;
        check_dim(self.dimension(), psd.nrows())?;
        Ok(self.config.interpolate(&self.samples, &self.values, x, psd))
    }
}

// Σ₊(u) for every action, given the one-step flow Jacobian.
fn successor_bounds(
    sigma: &Crlb,
    jac: &DMatrix<f64>,
    actions: &[DVector<f64>],
    noise: &NoiseModel,
) -> Result<Vec<Crlb>> {
    actions
        .iter()
        .map(|a| {
            let u = MeasurementVector::new(a.clone())?;
            crlb_propagate(&crlb_measurement_update(sigma, &u, noise)?, jac)
        })
        .collect()
}

/// One Bellman backup at `(x, Σ)` evaluated directly against `table`:
/// `Tr Σ + γ min_u Ĵ(x₊, Σ₊(u))`.
pub fn bellman_backup(
    table: &ValueTable,
    x: &State,
    sigma: &Crlb,
    system: &dyn DynamicalSystem,
    noise: &NoiseModel,
    integ: &IntegratorConfig,
) -> Result<f64> {
    let cfg = &table.config;
    check_dim(table.dimension(), system.dimension())?;
    check_dim(table.dimension(), sigma.dimension())?;
    let (x_next, jac) = system.flow_and_jacobian(x, cfg.dt, integ)?;
    let next = successor_bounds(sigma, &jac, &cfg.actions, noise)?;
    let best = next
        .iter()
        .map(|s| cfg.interpolate(&table.samples, &table.values, &x_next, s.matrix()))
        .fold(f64::INFINITY, f64::min);
    Ok(sigma.trace() + cfg.gamma * best)
}

/// Sparse interpolation weights: `(point index, weight)`.
type Weights = Vec<(usize, f64)>;

/// The fixed Bellman operator on a sample set: per sample, its immediate cost
/// and, per action, sparse interpolation weights over the successor.
#[derive(Debug, Clone)]
pub struct DpOperator {
    gamma: f64,
    costs: Vec<f64>,
    transitions: Vec<Vec<Weights>>,
}

impl DpOperator {
    pub fn build(
        samples: &DpSampleSet,
        cfg: &DpConfig,
        system: &dyn DynamicalSystem,
        noise: &NoiseModel,
        integ: &IntegratorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let m = samples.dimension();
        check_dim(m, system.dimension())?;
        check_dim(m, noise.dimension())?;
        check_dim(m, cfg.actions[0].len())?;
        let flows = samples
            .states
            .par_iter()
            .map(|x| system.flow_and_jacobian(x, cfg.dt, integ))
            .collect::<Result<Vec<_>>>()?;
        let n_psd = samples.psds.len();
        let rows = (0..samples.len())
            .into_par_iter()
            .map(|idx| -> Result<(f64, Vec<Weights>)> {
                let (x_next, jac) = &flows[idx / n_psd];
                let sigma = Crlb::new(samples.psds[idx % n_psd].clone())?;
                let next = successor_bounds(&sigma, jac, &cfg.actions, noise)?;
                let per_action = next
                    .iter()
                    .map(|s| {
                        let d = samples.distances(x_next, s.matrix());
                        match cfg.interpolation {
                            Interpolation::Nearest => vec![(argmin_distance(&d), 1.0)],
                            Interpolation::LocalAverage => weights_from_distances(&d, cfg.d_max),
                        }
                    })
                    .collect();
                Ok((sigma.trace(), per_action))
            })
            .collect::<Result<Vec<_>>>()?;
        let (costs, transitions) = rows.into_iter().unzip();
        Ok(Self {
            gamma: cfg.gamma,
            costs,
            transitions,
        })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// One synchronous sweep.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.len(), "value vector length");
        self.costs
            .par_iter()
            .zip(&self.transitions)
            .map(|(c, actions)| {
                let best = actions
                    .iter()
                    .map(|w| w.iter().map(|(i, wi)| wi * values[*i]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                c + self.gamma * best
            })
            .collect()
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Value iteration from the zero table; also returns the sup-norm change of
/// every sweep.
pub fn value_iteration_with_history(
    samples: DpSampleSet,
    cfg: DpConfig,
    system: &dyn DynamicalSystem,
    noise: &NoiseModel,
    integ: &IntegratorConfig,
) -> Result<(ValueTable, Vec<f64>)> {
    let op = DpOperator::build(&samples, &cfg, system, noise, integ)?;
    let mut values = vec![0.0; samples.len()];
    let mut history = Vec::with_capacity(cfg.iterations);
    for sweep in 0..cfg.iterations {
        let next = op.apply(&values);
        history.push(sup_distance(&next, &values));
        values = next;
        log::debug!(
            "value iteration sweep {} change {:e}",
            sweep + 1,
            history[sweep]
        );
    }
    Ok((ValueTable::new(samples, cfg, values)?, history))
}

pub fn value_iteration(
    samples: DpSampleSet,
    cfg: DpConfig,
    system: &dyn DynamicalSystem,
    noise: &NoiseModel,
    integ: &IntegratorConfig,
) -> Result<ValueTable> {
    Ok(value_iteration_with_history(samples, cfg, system, noise, integ)?.0)
}

/// The action minimizing `Tr Σ₊(u) + γ Ĵ(x₊, Σ₊(u))`; the lowest index wins
/// ties.
pub fn dp_policy_decide(
    table: &ValueTable,
    x: &State,
    sigma: &Crlb,
    system: &dyn DynamicalSystem,
    noise: &NoiseModel,
    integ: &IntegratorConfig,
) -> Result<MeasurementVector> {
    let cfg = &table.config;
    check_dim(table.dimension(), x.len())?;
    check_dim(table.dimension(), sigma.dimension())?;
    let (x_next, jac) = system.flow_and_jacobian(x, cfg.dt, integ)?;
    let next = successor_bounds(sigma, &jac, &cfg.actions, noise)?;
    let mut best = (f64::INFINITY, 0);
    for (i, s) in next.iter().enumerate() {
        let q = s.trace()
            + cfg.gamma * cfg.interpolate(&table.samples, &table.values, &x_next, s.matrix());
        if q < best.0 {
            best = (q, i);
        }
    }
    MeasurementVector::new(cfg.actions[best.1].clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpec {
    /// Angular grid on `[0, π)` with the given spacing; two dimensions only.
    Spacing(f64),
    /// Independent uniform unit vectors.
    Count(usize),
}

pub fn build_action_set<R: Rng + ?Sized>(
    m: usize,
    spec: ActionSpec,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if m == 0 {
        return Err(invalid("action set needs m >= 1"));
    }
    match spec {
        ActionSpec::Spacing(s) => {
            if m != 2 {
                return Err(invalid("angular action grids are two-dimensional"));
            }
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(format!(
                    "action spacing must be finite and > 0, got {s}"
                )));
            }
            let pi = std::f64::consts::PI;
            // u and −u carry the same information: the grid stops short of π.
            let count = ((pi / s) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            Ok((0..count)
                .map(|k| {
                    let t = k as f64 * s;
                    DVector::from_column_slice(&[t.cos(), t.sin()])
                })
                .collect())
        }
        ActionSpec::Count(n) => {
            if n == 0 {
                return Err(invalid("action count must be >= 1"));
            }
            Ok((0..n).map(|_| random_unit_vector(rng, m)).collect())
        }
    }
}
