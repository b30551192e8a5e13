use std::fmt;

use nalgebra::DMatrix;

use super::{check_flow_args, DynamicalSystem, IntegratorConfig, State, TimeDomain};
use crate::error::{invalid, Result};

/// `dx/dt = A x`, solved exactly with the matrix exponential.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    dynamics: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(dynamics: DMatrix<f64>) -> Result<Self> {
        if dynamics.nrows() == 0 || !dynamics.is_square() {
            return Err(invalid(format!(
                "linear dynamics must be a nonempty square matrix, got {}x{}",
                dynamics.nrows(),
                dynamics.ncols()
            )));
        }
        if dynamics.iter().any(|v| !v.is_finite()) {
            return Err(invalid("linear dynamics has non-finite entries"));
        }
        Ok(Self { dynamics })
    }

    pub fn diagonal(eigenvalues: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&State::from_column_slice(
            eigenvalues,
        )))
    }

    pub fn dynamics(&self) -> &DMatrix<f64> {
        &self.dynamics
    }

    fn propagator(&self, tau: f64) -> DMatrix<f64> {
        (&self.dynamics * tau).exp()
    }
}

impl DynamicalSystem for LinearSystem {
    fn dimension(&self) -> usize {
        self.dynamics.nrows()
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = x
                .iter()
                .enumerate()
                .map(|(j, xj)| self.dynamics[(i, j)] * xj)
                .sum();
        }
    }

    fn dynamics_jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.dynamics.clone()
    }

    fn flow(&self, x: &State, tau: f64, _cfg: &IntegratorConfig) -> Result<State> {
        check_flow_args(self, x, tau)?;
        if tau == 0.0 {
            return Ok(x.clone());
        }
        Ok(self.propagator(tau) * x)
    }

    fn flow_and_jacobian(
        &self,
        x: &State,
        tau: f64,
        _cfg: &IntegratorConfig,
    ) -> Result<(State, DMatrix<f64>)> {
        check_flow_args(self, x, tau)?;
        let m = self.dimension();
        if tau == 0.0 {
            return Ok((x.clone(), DMatrix::identity(m, m)));
        }
        let e = self.propagator(tau);
        Ok((&e * x, e))
    }
}

/// `x ↦ A x`, applied `τ ∈ ℕ` times.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLinear {
    map: DMatrix<f64>,
}

impl DiscreteLinear {
    pub fn new(map: DMatrix<f64>) -> Result<Self> {
        if map.nrows() == 0 || !map.is_square() {
            return Err(invalid("discrete map must be a nonempty square matrix"));
        }
        Ok(Self { map })
    }

    fn power(&self, steps: u64) -> DMatrix<f64> {
        let m = self.map.nrows();
        let mut result = DMatrix::identity(m, m);
        let mut base = self.map.clone();
        let mut e = steps;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }
}

impl DynamicalSystem for DiscreteLinear {
    fn dimension(&self) -> usize {
        self.map.nrows()
    }

    fn time_domain(&self) -> TimeDomain {
        TimeDomain::Discrete
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = x
                .iter()
                .enumerate()
                .map(|(j, xj)| self.map[(i, j)] * xj)
                .sum();
        }
    }

    fn dynamics_jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.map.clone()
    }

    fn flow(&self, x: &State, tau: f64, _cfg: &IntegratorConfig) -> Result<State> {
        check_flow_args(self, x, tau)?;
        let mut out = x.clone();
        for _ in 0..tau as u64 {
            out = &self.map * out;
        }
        Ok(out)
    }

    fn flow_and_jacobian(
        &self,
        x: &State,
        tau: f64,
        cfg: &IntegratorConfig,
    ) -> Result<(State, DMatrix<f64>)> {
        let state = self.flow(x, tau, cfg)?;
        Ok((state, self.power(tau as u64)))
    }
}

/// `ẋ = y`, `ẏ = μ(1 − x²)y − x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPol {
    mu: f64,
}

impl VanDerPol {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid(format!(
                "Van der Pol parameter must be positive, got {mu}"
            )));
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl DynamicalSystem for VanDerPol {
    fn dimension(&self) -> usize {
        2
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = self.mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
    }

    fn dynamics_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                0.0,
                1.0,
                -2.0 * self.mu * x[0] * x[1] - 1.0,
                self.mu * (1.0 - x[0] * x[0]),
            ],
        )
    }
}

/// Normal form of the supercritical Hopf bifurcation with a stable unit cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Hopf;

impl DynamicalSystem for Hopf {
    fn dimension(&self) -> usize {
        2
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        let g = 1.0 - (x[0] * x[0] + x[1] * x[1]);
        out[0] = x[0] * g - x[1];
        out[1] = x[1] * g + x[0];
    }

    fn dynamics_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let g = 1.0 - (x[0] * x[0] + x[1] * x[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                g - 2.0 * x[0] * x[0],
                -2.0 * x[0] * x[1] - 1.0,
                -2.0 * x[0] * x[1] + 1.0,
                g - 2.0 * x[1] * x[1],
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl DynamicalSystem for Lorenz {
    fn dimension(&self) -> usize {
        3
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * (x[1] - x[0]);
        out[1] = x[0] * (self.rho - x[2]) - x[1];
        out[2] = x[0] * x[1] - self.beta * x[2];
    }

    fn dynamics_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                -self.sigma,
                self.sigma,
                0.0,
                self.rho - x[2],
                -1.0,
                -x[0],
                x[1],
                x[0],
                -self.beta,
            ],
        )
    }
}

/// Power of `x₁` in the damping term of [`AugmentedVanDerPol`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LienardDegree {
    /// The classical oscillator, `x₁ − x₁³/3`; has a stable limit cycle.
    #[default]
    Cubic,
    /// `x₁ − x₁⁴/3`. Trajectories escape to `x₁ → −∞` in finite time.
    Quartic,
}

impl LienardDegree {
    fn power(self) -> i32 {
        match self {
            Self::Cubic => 3,
            Self::Quartic => 4,
        }
    }
}

/// A Liénard-form oscillator in the first two coordinates,
/// `ẋ₁ = 3.5(x₁ − x₁ᵖ/3 − x₂)`, `ẋ₂ = (2/7)x₁`, padded with decoupled stable
/// coordinates `ẋᵢ = −xᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedVanDerPol {
    dim: usize,
    degree: LienardDegree,
}

const AUG_GAIN: f64 = 3.5;
const AUG_COUPLING: f64 = 2.0 / 7.0;

impl AugmentedVanDerPol {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_degree(dim, LienardDegree::Cubic)
    }

    pub fn with_degree(dim: usize, degree: LienardDegree) -> Result<Self> {
        if dim < 2 {
            return Err(invalid(format!(
                "augmented Van der Pol needs dimension >= 2, got {dim}"
            )));
        }
        Ok(Self { dim, degree })
    }

    pub fn degree(&self) -> LienardDegree {
        self.degree
    }

    fn d11(&self, x1: f64) -> f64 {
        let p = self.degree.power();
        AUG_GAIN * (1.0 - p as f64 * x1.powi(p - 1) / 3.0)
    }
}

impl DynamicalSystem for AugmentedVanDerPol {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.degree.power();
        out[0] = AUG_GAIN * (x[0] - x[0].powi(p) / 3.0 - x[1]);
        out[1] = AUG_COUPLING * x[0];
        for i in 2..self.dim {
            out[i] = -x[i];
        }
    }

    fn dynamics_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::from_diagonal_element(self.dim, self.dim, -1.0);
        j[(0, 0)] = self.d11(x[0]);
        j[(0, 1)] = -AUG_GAIN;
        j[(1, 0)] = AUG_COUPLING;
        j[(1, 1)] = 0.0;
        j
    }

    // Df is block diagonal, so the product costs O(M²) instead of O(M³).
    fn jacobian_product_into(&self, x: &[f64], s: &[f64], out: &mut [f64]) {
        let m = self.dim;
        let d11 = self.d11(x[0]);
        for col in 0..m {
            let c = &s[col * m..(col + 1) * m];
            let o = &mut out[col * m..(col + 1) * m];
            o[0] = d11 * c[0] - AUG_GAIN * c[1];
            o[1] = AUG_COUPLING * c[0];
            for i in 2..m {
                o[i] = -c[i];
            }
        }
    }
}

type VectorField = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A user-supplied vector field. Its Jacobian falls back to finite differences.
pub struct CustomSystem {
    dim: usize,
    field: Box<VectorField>,
}

impl CustomSystem {
    pub fn new<F>(dim: usize, field: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(Self {
            dim,
            field: Box::new(field),
        })
    }
}

impl fmt::Debug for CustomSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSystem")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl DynamicalSystem for CustomSystem {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn dynamics_into(&self, x: &[f64], out: &mut [f64]) {
        (self.field)(x, out)
    }
}
