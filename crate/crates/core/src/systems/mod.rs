//! Dynamical systems: vector fields, flows and flow Jacobians.
//!
//! Continuous systems only need to supply their vector field; the flow and the
//! flow Jacobian are then obtained by integrating the state jointly with the
//! variational equation `dS/dt = Df(x(t)) S`, `S(0) = I`. Linear systems
//! override both with the exact matrix exponential, and discrete systems with
//! matrix powers.

mod catalog;
pub mod integrator;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Result};

pub use catalog::{
    AugmentedVanDerPol, CustomSystem, DiscreteLinear, Hopf, LienardDegree, LinearSystem, Lorenz,
    VanDerPol,
};
pub use integrator::IntegratorConfig;

/// State of a system in model coordinates.
pub type State = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDomain {
    Continuous,
    /// Only non-negative integer durations are meaningful.
    Discrete,
}

pub trait DynamicalSystem: Send + Sync + std::fmt::Debug {
    /// Ambient dimension `M`.
    fn dimension(&self) -> usize;

    fn time_domain(&self) -> TimeDomain {
        TimeDomain::Continuous
    }

    /// Writes `f(x)` into `out`. For discrete systems this is the one-step map.
    fn dynamics_into(&self, x: &[f64], out: &mut [f64]);

    /// `Df(x)`. The default uses central differences; catalog systems override
    /// it with the analytic form.
    fn dynamics_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        finite_difference_jacobian(self.dimension(), x, |p, out| self.dynamics_into(p, out))
    }

    /// Writes `Df(x) · S` into `out`, with `S` and `out` stored column-major as
    /// `M × M`.
    fn jacobian_product_into(&self, x: &[f64], s: &[f64], out: &mut [f64]) {
        let m = self.dimension();
        let jac = self.dynamics_jacobian(x);
        let s = nalgebra::DMatrixView::from_slice(s, m, m);
        let mut out = nalgebra::DMatrixViewMut::from_slice(out, m, m);
        out.gemm(1.0, &jac, &s, 0.0);
    }

    fn flow(&self, x: &State, tau: f64, cfg: &IntegratorConfig) -> Result<State> {
        check_flow_args(self, x, tau)?;
        let mut y = x.as_slice().to_vec();
        integrator::integrate(|y, dy| self.dynamics_into(y, dy), &mut y, tau, cfg)?;
        Ok(State::from_vec(y))
    }

    fn flow_jacobian(&self, x: &State, tau: f64, cfg: &IntegratorConfig) -> Result<DMatrix<f64>> {
        Ok(self.flow_and_jacobian(x, tau, cfg)?.1)
    }

    /// The advanced state together with `dφ^τ_x`.
    fn flow_and_jacobian(
        &self,
        x: &State,
        tau: f64,
        cfg: &IntegratorConfig,
    ) -> Result<(State, DMatrix<f64>)> {
        check_flow_args(self, x, tau)?;
        let m = self.dimension();
        let mut y = vec![0.0; m + m * m];
        y[..m].copy_from_slice(x.as_slice());
        for i in 0..m {
            y[m + i * m + i] = 1.0;
        }
        integrator::integrate(
            |y, dy| {
                let (state, sens) = y.split_at(m);
                let (dstate, dsens) = dy.split_at_mut(m);
                self.dynamics_into(state, dstate);
                self.jacobian_product_into(state, sens, dsens);
            },
            &mut y,
            tau,
            cfg,
        )?;
        let state = State::from_column_slice(&y[..m]);
        let jac = DMatrix::from_column_slice(m, m, &y[m..]);
        Ok((state, jac))
    }
}

/// `f(x)` with a dimension check.
pub fn eval_dynamics(system: &dyn DynamicalSystem, x: &State) -> Result<State> {
    check_dim(system.dimension(), x.len())?;
    let mut out = State::zeros(x.len());
    system.dynamics_into(x.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub(crate) fn check_flow_args<S: DynamicalSystem + ?Sized>(
    system: &S,
    x: &State,
    tau: f64,
) -> Result<()> {
    check_dim(system.dimension(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("state has non-finite entries"));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(invalid(format!(
            "flow duration must be finite and >= 0, got {tau}"
        )));
    }
    if system.time_domain() == TimeDomain::Discrete && tau.fract() != 0.0 {
        return Err(invalid(format!(
            "discrete systems need an integer duration, got {tau}"
        )));
    }
    Ok(())
}

/// Central-difference Jacobian of `f` at `x`, step `1e-6·max(1, |x_j|)`.
pub fn finite_difference_jacobian<F>(m: usize, x: &[f64], mut f: F) -> DMatrix<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut jac = DMatrix::zeros(m, m);
    let mut p = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..m {
        let h = 1e-6 * x[j].abs().max(1.0);
        p[j] = x[j] + h;
        f(&p, &mut fp);
        p[j] = x[j] - h;
        f(&p, &mut fm);
        p[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}
