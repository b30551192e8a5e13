//! Measurement selection: the dimensionality-collapse policy, a uniform random
//! baseline, and dispatch to the dynamic-programming policy.

mod ascent;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dp::{dp_policy_decide, ValueTable};
use crate::error::{check_dim, invalid, Result};
use crate::information::{Crlb, MeasurementVector, NoiseModel};
use crate::systems::{DynamicalSystem, IntegratorConfig, State};

pub use ascent::{
    geodesic_step, gradient_ascent, gradient_ascent_in_subspace, objective_gradient_sphere,
    objective_value, random_unit_vector, AscentConfig, CollapseObjective, InitialVector,
    StepSchedule,
};

const FALLBACK_NORM: f64 = 1e-12;
const RANK_RESIDUAL: f64 = 1e-10;

/// Right singular vectors with their singular values, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularDirections {
    pub vectors: Vec<DVector<f64>>,
    pub values: Vec<f64>,
}

/// Top `k` right singular vectors of `jac`. Each vector's first nonzero entry
/// is made positive.
pub fn right_singular_vectors(jac: &DMatrix<f64>, k: usize) -> Result<SingularDirections> {
    let m = jac.ncols();
    if k == 0 || k > m {
        return Err(invalid(format!("need 1 <= K <= {m}, got {k}")));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(invalid("flow Jacobian has non-finite entries"));
    }
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut vectors = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut v: DVector<f64> = v_t.row(i).transpose();
        if let Some(first) = v.iter().find(|c| c.abs() > FALLBACK_NORM) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.push(v);
        values.push(svd.singular_values[i]);
    }
    Ok(SingularDirections { vectors, values })
}

/// Top `k` right singular vectors of `dφ^T` at `x`.
pub fn limiting_right_singular_vectors(
    system: &dyn DynamicalSystem,
    x: &State,
    horizon: f64,
    k: usize,
    cfg: &IntegratorConfig,
) -> Result<SingularDirections> {
    if !(horizon > 0.0) {
        return Err(invalid(format!("horizon must be > 0, got {horizon}")));
    }
    right_singular_vectors(&system.flow_jacobian(x, horizon, cfg)?, k)
}

// (Σ + Λ)⁻¹ Σ v without forming the inverse. Σ + Λ is positive definite.
fn solve_shifted(sigma: &Crlb, noise: &NoiseModel, v: &DVector<f64>) -> DVector<f64> {
    let mut a = sigma.matrix().clone();
    for i in 0..a.nrows() {
        a[(i, i)] += noise.variances()[i];
    }
    let rhs = sigma.matrix() * v;
    match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(v.len())),
    }
}

/// `(Σ + Λ)⁻¹ Σ v`, normalized; `v` itself when that vector vanishes.
pub fn closed_form_measurement(
    sigma: &Crlb,
    noise: &NoiseModel,
    v: &DVector<f64>,
) -> Result<MeasurementVector> {
    check_dim(sigma.dimension(), noise.dimension())?;
    check_dim(sigma.dimension(), v.len())?;
    let u = solve_shifted(sigma, noise, v);
    if u.norm() < FALLBACK_NORM {
        return MeasurementVector::unit(v.clone());
    }
    MeasurementVector::unit(u)
}

/// Orthonormal basis of the span of `(Σ + Λ)⁻¹ Σ vᵢ`, dropping vectors whose
/// residual after Gram–Schmidt falls below `1e-10`.
pub fn informative_subspace(
    sigma: &Crlb,
    noise: &NoiseModel,
    directions: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    if directions.is_empty() {
        return Err(invalid("informative subspace needs at least one direction"));
    }
    check_dim(sigma.dimension(), noise.dimension())?;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(directions.len());
    for v in directions {
        check_dim(sigma.dimension(), v.len())?;
        let mut w = solve_shifted(sigma, noise, v);
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let n = w.norm();
        if n >= RANK_RESIDUAL {
            basis.push(w / n);
        }
    }
    Ok(basis)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseConfig {
    /// Horizon `T` at which the flow Jacobian stands in for its limit.
    pub horizon: f64,
    /// Number of singular directions `K`.
    pub k: usize,
    /// Used only when `k > 1`.
    pub ascent: AscentConfig,
}

impl CollapseConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            k: 1,
            ascent: AscentConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            )));
        }
        if self.k == 0 {
            return Err(invalid("K must be >= 1"));
        }
        self.ascent.validate()
    }
}

#[derive(Debug, Clone)]
pub enum PolicyKind {
    Random,
    Collapse(CollapseConfig),
    DynamicProgramming(Arc<ValueTable>),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Collapse(_) => "collapse",
            Self::DynamicProgramming(_) => "dp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Collapse(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

/// Chooses the next measurement vector.
pub fn policy_decide<R: Rng + ?Sized>(
    kind: &PolicyKind,
    system: &dyn DynamicalSystem,
    x: &State,
    sigma: &Crlb,
    noise: &NoiseModel,
    rng: &mut R,
    cfg: &IntegratorConfig,
) -> Result<MeasurementVector> {
    let jac = match kind {
        PolicyKind::Collapse(c) => Some(system.flow_jacobian(x, c.horizon, cfg)?),
        _ => None,
    };
    policy_decide_with_jacobian(kind, system, x, sigma, noise, rng, cfg, jac.as_ref())
}

/// As [`policy_decide`], reusing a precomputed `dφ^T` at `x` for the collapse
/// policy. Other policies ignore `jac`.
#[allow(clippy::too_many_arguments)]
pub fn policy_decide_with_jacobian<R: Rng + ?Sized>(
    kind: &PolicyKind,
    system: &dyn DynamicalSystem,
    x: &State,
    sigma: &Crlb,
    noise: &NoiseModel,
    rng: &mut R,
    cfg: &IntegratorConfig,
    jac: Option<&DMatrix<f64>>,
) -> Result<MeasurementVector> {
    let m = system.dimension();
    check_dim(m, x.len())?;
    check_dim(m, sigma.dimension())?;
    check_dim(m, noise.dimension())?;
    match kind {
        PolicyKind::Random => MeasurementVector::new(random_unit_vector(rng, m)),
        PolicyKind::DynamicProgramming(table) => {
            dp_policy_decide(table, x, sigma, system, noise, cfg)
        }
        PolicyKind::Collapse(c) => {
            c.validate()?;
            let owned;
            let jac = match jac {
                Some(j) => j,
                None => {
                    owned = system.flow_jacobian(x, c.horizon, cfg)?;
                    &owned
                }
            };
            let dirs = right_singular_vectors(jac, c.k.min(m))?;
            if dirs.vectors.len() == 1 {
                return closed_form_measurement(sigma, noise, &dirs.vectors[0]);
            }
            let basis = informative_subspace(sigma, noise, &dirs.vectors)?;
            match basis.len() {
                0 => MeasurementVector::new(dirs.vectors[0].clone()),
                1 => MeasurementVector::new(basis[0].clone()),
                _ => {
                    let total: f64 = dirs.values.iter().map(|s| s * s).sum();
                    let weights = if total > 0.0 {
                        dirs.values.iter().map(|s| s * s / total).collect()
                    } else {
                        vec![1.0 / dirs.values.len() as f64; dirs.values.len()]
                    };
                    let obj = CollapseObjective::new(
                        sigma.clone(),
                        noise.clone(),
                        dirs.vectors,
                        weights,
                    )?;
                    let u = gradient_ascent_in_subspace(&obj, &basis, &c.ascent, rng)?;
                    MeasurementVector::unit(u)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{Hopf, LinearSystem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn linear_limiting_direction_is_slow_mode() {
        let sys = LinearSystem::diagonal(&[-10.0, -0.1]).unwrap();
        let d = limiting_right_singular_vectors(&sys, &v(&[1.0, 1.0]), 10.0, 1, &cfg()).unwrap();
        assert_relative_eq!(d.vectors[0], v(&[0.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(d.values[0], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn short_horizon_singular_values_are_one() {
        let sys = Hopf;
        let d = limiting_right_singular_vectors(&sys, &v(&[0.5, 0.2]), 1e-9, 2, &cfg()).unwrap();
        for s in &d.values {
            assert_relative_eq!(*s, 1.0, epsilon = 1e-6);
        }
        assert!(d.vectors[0].dot(&d.vectors[1]).abs() < 1e-12);
    }

    #[test]
    fn hopf_limit_direction_is_tangent_to_cycle() {
        let x = v(&[1.0, 0.0]);
        let d = limiting_right_singular_vectors(&Hopf, &x, 30.0, 1, &cfg()).unwrap();
        assert!(d.vectors[0].dot(&x).abs() < 1e-2, "{:?}", d.vectors[0]);
        assert!(d.vectors[0][0] >= 0.0);
    }

    #[test]
    fn singular_vector_arguments_are_checked() {
        let sys = Hopf;
        assert!(limiting_right_singular_vectors(&sys, &v(&[1.0, 0.0]), 0.0, 1, &cfg()).is_err());
        assert!(limiting_right_singular_vectors(&sys, &v(&[1.0, 0.0]), 1.0, 3, &cfg()).is_err());
        assert!(right_singular_vectors(&DMatrix::from_element(2, 2, f64::INFINITY), 1).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let noise = NoiseModel::iid(2, 1.0).unwrap();
        let u = closed_form_measurement(&Crlb::scaled_identity(2, 1.0), &noise, &v(&[0.6, 0.8]))
            .unwrap();
        assert_relative_eq!(u.as_vector(), &v(&[0.6, 0.8]), epsilon = 1e-15);
        let s = Crlb::new(DMatrix::from_diagonal(&v(&[4.0, 1.0]))).unwrap();
        let u = closed_form_measurement(&s, &noise, &v(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(u.as_vector(), &v(&[1.0, 0.0]), epsilon = 1e-15);
        let u = closed_form_measurement(&Crlb::zeros(2), &noise, &v(&[0.0, 1.0])).unwrap();
        assert_eq!(u.as_vector(), &v(&[0.0, 1.0]));
    }

    #[test]
    fn informative_subspace_examples() {
        let s = Crlb::scaled_identity(3, 1.0);
        let noise = NoiseModel::iid(3, 1.0).unwrap();
        let e1 = v(&[1.0, 0.0, 0.0]);
        let e2 = v(&[0.0, 1.0, 0.0]);
        let b = informative_subspace(&s, &noise, &[e1.clone(), e2.clone()]).unwrap();
        assert_eq!(b.len(), 2);
        assert_relative_eq!(b[0], e1, epsilon = 1e-15);
        assert_relative_eq!(b[1], e2, epsilon = 1e-15);

        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let s = Crlb::new(m).unwrap();
        let dir = v(&[0.3, 0.4, 0.5]).normalize();
        let b = informative_subspace(&s, &noise, std::slice::from_ref(&dir)).unwrap();
        let cf = closed_form_measurement(&s, &noise, &dir).unwrap();
        assert_relative_eq!(&b[0], cf.as_vector(), epsilon = 1e-14);

        let s = Crlb::new(DMatrix::from_diagonal(&v(&[0.0, 0.0, 1.0]))).unwrap();
        assert!(informative_subspace(&s, &noise, &[e1, e2])
            .unwrap()
            .is_empty());
        assert!(informative_subspace(&s, &noise, &[]).is_err());
    }

    #[test]
    fn random_policy_matches_random_unit_vector() {
        let sys = Hopf;
        let noise = NoiseModel::iid(2, 1.0).unwrap();
        let s = Crlb::scaled_identity(2, 1.0);
        let u = policy_decide(
            &PolicyKind::Random,
            &sys,
            &v(&[1.0, 0.0]),
            &s,
            &noise,
            &mut ChaCha8Rng::seed_from_u64(3),
            &cfg(),
        )
        .unwrap();
        let expected = random_unit_vector(&mut ChaCha8Rng::seed_from_u64(3), 2);
        assert_eq!(u.as_vector(), &expected);
    }

    #[test]
    fn collapse_policy_on_linear_system() {
        let sys = LinearSystem::diagonal(&[-10.0, -0.1]).unwrap();
        let noise = NoiseModel::iid(2, 1.0).unwrap();
        let s = Crlb::scaled_identity(2, 1.0);
        let kind = PolicyKind::Collapse(CollapseConfig::new(10.0));
        let u = policy_decide(
            &kind,
            &sys,
            &v(&[1.0, 1.0]),
            &s,
            &noise,
            &mut ChaCha8Rng::seed_from_u64(0),
            &cfg(),
        )
        .unwrap();
        assert_relative_eq!(u.as_vector(), &v(&[0.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn collapse_with_k_two_stays_in_subspace() {
        let sys = LinearSystem::diagonal(&[-0.1, -0.2, -10.0]).unwrap();
        let noise = NoiseModel::iid(3, 1.0).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let s = Crlb::new(m).unwrap();
        let mut c = CollapseConfig::new(5.0);
        c.k = 2;
        c.ascent = AscentConfig {
            steps: 200,
            schedule: StepSchedule::Constant(1.0),
            ..Default::default()
        };
        let kind = PolicyKind::Collapse(c);
        let x = v(&[1.0, 1.0, 1.0]);
        let u = policy_decide(
            &kind,
            &sys,
            &x,
            &s,
            &noise,
            &mut ChaCha8Rng::seed_from_u64(5),
            &cfg(),
        )
        .unwrap();
        assert!((u.as_vector().norm() - 1.0).abs() < 1e-12);
        let dirs = limiting_right_singular_vectors(&sys, &x, 5.0, 2, &cfg()).unwrap();
        let basis = informative_subspace(&s, &noise, &dirs.vectors).unwrap();
        let proj: f64 = basis.iter().map(|b| b.dot(u.as_vector()).powi(2)).sum();
        assert_relative_eq!(proj, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn collapse_config_validation() {
        assert!(CollapseConfig::new(0.0).validate().is_err());
        let mut c = CollapseConfig::new(1.0);
        c.k = 0;
        assert!(c.validate().is_err());
    }

    fn spd(m: usize, raw: &[f64]) -> Crlb {
        let a = DMatrix::from_fn(m, m, |i, j| raw[i * 8 + j]);
        Crlb::new(&a * a.transpose() + DMatrix::identity(m, m) * 0.05).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_dominates_random_vectors(
            m in 2usize..7,
            raw in prop::collection::vec(-1.0f64..1.0, 64),
            dir in prop::collection::vec(-1.0f64..1.0, 8),
            sigma2 in 0.05f64..5.0,
            seed in any::<u64>(),
        ) {
            let d = v(&dir[..m]);
            prop_assume!(d.norm() > 1e-3);
            let d = d.normalize();
            let s = spd(m, &raw);
            let noise = NoiseModel::iid(m, sigma2).unwrap();
            let obj = CollapseObjective::single(s.clone(), noise.clone(), d.clone()).unwrap();
            let best = objective_value(closed_form_measurement(&s, &noise, &d).unwrap().as_vector(), &obj).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let u = random_unit_vector(&mut rng, m);
                prop_assert!(best >= objective_value(&u, &obj).unwrap() - 1e-9);
            }
        }

        #[test]
        fn argmax_is_scale_invariant(
            m in 2usize..6,
            raw in prop::collection::vec(-1.0f64..1.0, 64),
            dir in prop::collection::vec(-1.0f64..1.0, 8),
            c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            let d = v(&dir[..m]);
            prop_assume!(d.norm() > 1e-3);
            let d = d.normalize();
            let s = spd(m, &raw);
            let noise = NoiseModel::iid(m, 1.0).unwrap();
            let obj = CollapseObjective::single(s.clone(), noise.clone(), d.clone()).unwrap();
            let u = closed_form_measurement(&s, &noise, &d).unwrap();
            let scaled = (u.as_vector() * c).normalize();
            let a = objective_value(u.as_vector(), &obj).unwrap();
            let b = objective_value(&scaled, &obj).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn linear_singular_vectors_match_analytic_svd(
            diag in prop::collection::vec(-2.0f64..0.5, 3),
            t in 0.1f64..3.0,
        ) {
            let sys = LinearSystem::diagonal(&diag).unwrap();
            let d = limiting_right_singular_vectors(&sys, &v(&[0.0, 0.0, 0.0]), t, 3, &cfg()).unwrap();
            let mut expected: Vec<(f64, usize)> = diag.iter().enumerate().map(|(i, a)| ((a * t).exp(), i)).collect();
            expected.sort_by(|a, b| b.0.total_cmp(&a.0));
            for (k, (s, i)) in expected.iter().enumerate() {
                prop_assert!((d.values[k] - s).abs() < 1e-8);
                // Distinct singular values pin the vector down to sign.
                let gap = expected.iter().filter(|e| e.1 != *i).map(|e| (e.0 - s).abs()).fold(f64::INFINITY, f64::min);
                if gap > 1e-3 {
                    prop_assert!((d.vectors[k][*i] - 1.0).abs() < 1e-8);
                }
            }
        }
    }
}
