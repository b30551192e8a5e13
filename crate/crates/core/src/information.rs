//! Fisher information of scalar linear measurements and the Cramér–Rao bound
//! arithmetic built on it.
//!
//! A measurement `y = <u, x + ξ>` with independent natural-exponential-family
//! noise carries the rank-one information `u uᵀ / (uᵀ Λ u)`, where `Λ` is the
//! diagonal noise covariance. Adding it to a bound `Σ` is done with the
//! Sherman–Morrison identity, which never inverts `Σ` and therefore remains
//! valid when transport through a contracting flow has made `Σ` singular.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, invalid, Error, Result};
use crate::systems::{DynamicalSystem, IntegratorConfig, State};

/// Diagonal noise covariance `Λ`, strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    variances: DVector<f64>,
}

impl NoiseModel {
    pub fn new(variances: DVector<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(invalid("noise model needs at least one variance"));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid(format!(
                "noise variances must be positive and finite, got {v}"
            )));
        }
        Ok(Self { variances })
    }

    /// `σ² I` in `m` dimensions.
    pub fn iid(m: usize, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(m, variance))
    }

    pub fn dimension(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.variances)
    }

    /// `uᵀ Λ u`.
    pub fn weighted_norm_sq(&self, u: &DVector<f64>) -> f64 {
        u.iter()
            .zip(self.variances.iter())
            .map(|(a, v)| a * a * v)
            .sum()
    }
}

/// The linear functional `u` of a scalar measurement. Nonzero and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector(DVector<f64>);

impl MeasurementVector {
    pub fn new(u: DVector<f64>) -> Result<Self> {
        if u.is_empty() || u.iter().any(|v| !v.is_finite()) || u.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidMeasurement);
        }
        Ok(Self(u))
    }

    /// Normalized copy of `u`.
    pub fn unit(u: DVector<f64>) -> Result<Self> {
        let m = Self::new(u)?;
        let n = m.0.norm();
        Ok(Self(m.0 / n))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

/// Cramér–Rao bound: a symmetric positive-semidefinite matrix, possibly
/// rank deficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Crlb(DMatrix<f64>);

/// Relative asymmetry accepted by [`Crlb::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative negative-eigenvalue floor below which a bound counts as not PSD.
pub const PSD_TOL: f64 = 1e-10;

impl Crlb {
    /// Checks shape and symmetry, then stores the exactly symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || !m.is_square() {
            return Err(invalid(format!(
                "bound must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("bound has non-finite entries"));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(invalid(format!(
                "bound is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self(symmetrize(m)))
    }

    pub fn scaled_identity(m: usize, value: f64) -> Self {
        Self(DMatrix::from_diagonal_element(m, m, value))
    }

    pub fn zeros(m: usize) -> Self {
        Self(DMatrix::zeros(m, m))
    }

    pub fn dimension(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOL * self.0.amax().max(f64::MIN_POSITIVE)
    }

    /// Zeroes eigenvalues below the PSD tolerance. Returns whether anything
    /// was clipped.
    pub fn clip_negative_eigenvalues(&mut self) -> bool {
        if self.is_psd() {
            return false;
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let q = &eig.eigenvectors;
        self.0 = symmetrize(q * DMatrix::from_diagonal(&clipped) * q.transpose());
        true
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `u uᵀ / (uᵀ Λ u)`.
pub fn fisher_info(u: &MeasurementVector, noise: &NoiseModel) -> Result<DMatrix<f64>> {
    check_dim(noise.dimension(), u.dimension())?;
    let u = u.as_vector();
    let denom = noise.weighted_norm_sq(u);
    Ok(u * u.transpose() / denom)
}

/// `uᵀ W u`.
pub fn weighted_norm_sq(u: &DVector<f64>, w: &DMatrix<f64>) -> Result<f64> {
    check_dim(w.nrows(), u.len())?;
    check_dim(w.ncols(), u.len())?;
    Ok(u.dot(&(w * u)))
}

/// Intermediate products of a rank-one bound update, shared with the filter
/// so its gain and covariance use the same arithmetic.
pub(crate) struct RankOneUpdate {
    pub crlb: Crlb,
    /// `Σ u`
    pub sigma_u: DVector<f64>,
    /// `uᵀ Λ u + uᵀ Σ u`
    pub denominator: f64,
}

pub(crate) fn rank_one_update(
    sigma: &Crlb,
    u: &MeasurementVector,
    noise: &NoiseModel,
) -> Result<RankOneUpdate> {
    check_dim(sigma.dimension(), u.dimension())?;
    check_dim(noise.dimension(), u.dimension())?;
    let u = u.as_vector();
    let sigma_u = sigma.matrix() * u;
    let denominator = noise.weighted_norm_sq(u) + u.dot(&sigma_u);
    if !(denominator > 1e-300) {
        return Err(Error::DegenerateNoise(denominator));
    }
    let mut updated = sigma.matrix().clone();
    updated.ger(-1.0 / denominator, &sigma_u, &sigma_u, 1.0);
    Ok(RankOneUpdate {
        crlb: Crlb(symmetrize(updated)),
        sigma_u,
        denominator,
    })
}

/// Bound after one more measurement along `u`:
/// `Σ − Σ u uᵀ Σ / (uᵀ Λ u + uᵀ Σ u)`.
pub fn crlb_measurement_update(
    sigma: &Crlb,
    u: &MeasurementVector,
    noise: &NoiseModel,
) -> Result<Crlb> {
    Ok(rank_one_update(sigma, u, noise)?.crlb)
}

/// `J Σ Jᵀ`, re-symmetrized.
pub fn crlb_propagate(sigma: &Crlb, jacobian: &DMatrix<f64>) -> Result<Crlb> {
    check_dim(sigma.dimension(), jacobian.ncols())?;
    check_dim(sigma.dimension(), jacobian.nrows())?;
    let r = jacobian * sigma.matrix() * jacobian.transpose();
    Ok(Crlb(symmetrize(r)))
}

/// `Tr(J Σ Jᵀ)` without forming the product.
pub fn propagated_trace(sigma: &Crlb, jacobian: &DMatrix<f64>) -> Result<f64> {
    check_dim(sigma.dimension(), jacobian.ncols())?;
    let js = jacobian * sigma.matrix();
    Ok(js.component_mul(jacobian).sum())
}

/// Trace of the bound on the state `horizon` time units ahead.
pub fn forecast_crlb_trace(
    system: &dyn DynamicalSystem,
    x: &State,
    sigma: &Crlb,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    check_dim(system.dimension(), sigma.dimension())?;
    let jac = system.flow_jacobian(x, horizon, cfg)?;
    propagated_trace(sigma, &jac)
}
