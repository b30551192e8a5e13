//! Extended Kalman filter for scalar linear measurements.
//!
//! The covariance update is exactly the bound update of
//! [`crate::information::crlb_measurement_update`], and the gain is a vector
//! divided by a scalar, so the filter never inverts a matrix.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Result};
use crate::information::{crlb_propagate, rank_one_update, Crlb, MeasurementVector, NoiseModel};
use crate::systems::{DynamicalSystem, IntegratorConfig, State};

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub estimate: State,
    pub covariance: Crlb,
}

impl EkfState {
    pub fn new(estimate: State, covariance: Crlb) -> Result<Self> {
        check_dim(covariance.dimension(), estimate.len())?;
        Ok(Self {
            estimate,
            covariance,
        })
    }
}

/// Advances the estimate through the flow and transports the covariance with
/// the flow Jacobian taken at the pre-prediction estimate.
pub fn ekf_predict(
    system: &dyn DynamicalSystem,
    st: &EkfState,
    tau: f64,
    cfg: &IntegratorConfig,
) -> Result<EkfState> {
    let (estimate, jac) = system.flow_and_jacobian(&st.estimate, tau, cfg)?;
    Ok(EkfState {
        estimate,
        covariance: crlb_propagate(&st.covariance, &jac)?,
    })
}

/// Measurement update with observation `y` of the functional `u`.
pub fn ekf_update(
    st: &EkfState,
    u: &MeasurementVector,
    y: f64,
    noise: &NoiseModel,
) -> Result<EkfState> {
    check_dim(st.estimate.len(), u.dimension())?;
    let up = rank_one_update(&st.covariance, u, noise)?;
    let innovation = y - u.as_vector().dot(&st.estimate);
    let estimate = &st.estimate + &up.sigma_u * (innovation / up.denominator);
    Ok(EkfState {
        estimate,
        covariance: up.crlb,
    })
}

/// Draws `uᵀ(x + ξ)` with `ξᵢ ~ N(0, Λᵢᵢ)` independent.
pub fn simulate_measurement<R: Rng + ?Sized>(
    rng: &mut R,
    x_true: &State,
    u: &MeasurementVector,
    noise: &NoiseModel,
) -> Result<f64> {
    check_dim(x_true.len(), u.dimension())?;
    check_dim(noise.dimension(), u.dimension())?;
    let xi = DVector::from_iterator(
        x_true.len(),
        noise.variances().iter().map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            z * v.sqrt()
        }),
    );
    Ok(u.as_vector().dot(&(x_true + xi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::information::crlb_measurement_update;
    use crate::systems::LinearSystem;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mv(v: &[f64]) -> MeasurementVector {
        MeasurementVector::new(DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn predict_zero_duration_is_identity() {
        let sys = LinearSystem::diagonal(&[-1.0, -2.0]).unwrap();
        let st = EkfState::new(
            State::from_vec(vec![2.0, 1.0]),
            Crlb::scaled_identity(2, 3.0),
        )
        .unwrap();
        let out = ekf_predict(&sys, &st, 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(out, st);
    }

    #[test]
    fn predict_scalar_decay() {
        let sys = LinearSystem::diagonal(&[-1.0, -1.0]).unwrap();
        let st = EkfState::new(
            State::from_vec(vec![2.0, 0.0]),
            Crlb::scaled_identity(2, 1.0),
        )
        .unwrap();
        let out = ekf_predict(&sys, &st, 2f64.ln(), &IntegratorConfig::default()).unwrap();
        assert_relative_eq!(
            out.estimate,
            State::from_vec(vec![1.0, 0.0]),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            out.covariance.matrix(),
            &DMatrix::from_diagonal_element(2, 2, 0.25),
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_innovation_keeps_estimate() {
        let st = EkfState::new(
            State::from_vec(vec![1.0, -2.0]),
            Crlb::scaled_identity(2, 2.0),
        )
        .unwrap();
        let u = mv(&[0.6, 0.8]);
        let y = u.as_vector().dot(&st.estimate);
        let noise = NoiseModel::iid(2, 1.0).unwrap();
        let out = ekf_update(&st, &u, y, &noise).unwrap();
        assert_relative_eq!(out.estimate, st.estimate, epsilon = 1e-15);
        assert!(out.covariance.trace() < st.covariance.trace());
    }

    #[test]
    fn zero_covariance_ignores_data() {
        let st = EkfState::new(State::from_vec(vec![1.0, -2.0]), Crlb::zeros(2)).unwrap();
        let out = ekf_update(
            &st,
            &mv(&[1.0, 0.0]),
            100.0,
            &NoiseModel::iid(2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(out.estimate, st.estimate);
    }

    #[test]
    fn scalar_kalman_gain() {
        let (s0, s2) = (3.0, 0.5);
        let st = EkfState::new(State::from_vec(vec![1.0]), Crlb::scaled_identity(1, s0)).unwrap();
        let out = ekf_update(&st, &mv(&[1.0]), 2.0, &NoiseModel::iid(1, s2).unwrap()).unwrap();
        let gain = s0 / (s0 + s2);
        assert_relative_eq!(out.estimate[0], 1.0 + gain * (2.0 - 1.0), epsilon = 1e-15);
        assert_relative_eq!(
            out.covariance.matrix()[(0, 0)],
            (1.0 - gain) * s0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn covariance_matches_bound_update_bitwise() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 0.7]);
        let st =
            EkfState::new(State::from_vec(vec![0.1, 0.2, 0.3]), Crlb::new(m).unwrap()).unwrap();
        let u = mv(&[0.3, -0.5, 0.8]);
        let noise = NoiseModel::new(DVector::from_column_slice(&[1.0, 2.0, 0.5])).unwrap();
        let out = ekf_update(&st, &u, 0.7, &noise).unwrap();
        let bound = crlb_measurement_update(&st.covariance, &u, &noise).unwrap();
        assert_eq!(out.covariance, bound);
    }

    #[test]
    fn vanishing_noise_measures_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = State::from_vec(vec![1.0, 2.0]);
        let u = mv(&[0.6, 0.8]);
        let noise = NoiseModel::iid(2, 1e-12).unwrap();
        let y = simulate_measurement(&mut rng, &x, &u, &noise).unwrap();
        assert!((y - 2.2).abs() < 1e-4);
    }

    #[test]
    fn measurement_only_sees_selected_coordinate_noise() {
        let x = State::from_vec(vec![1.0, 2.0]);
        let u = mv(&[1.0, 0.0]);
        let quiet = NoiseModel::new(DVector::from_column_slice(&[1.0, 1e-12])).unwrap();
        let loud = NoiseModel::new(DVector::from_column_slice(&[1.0, 1e6])).unwrap();
        let a = simulate_measurement(&mut ChaCha8Rng::seed_from_u64(4), &x, &u, &quiet).unwrap();
        let b = simulate_measurement(&mut ChaCha8Rng::seed_from_u64(4), &x, &u, &loud).unwrap();
        assert_eq!(a, b);
    }
}
