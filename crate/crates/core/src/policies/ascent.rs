//! Riemannian gradient ascent of the collapse objective on the unit sphere.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::information::{Crlb, NoiseModel};

/// `Σᵢ αᵢ (vᵢᵀ Σ u)² / (uᵀ Σ u + uᵀ Λ u)` for unit `u`.
#[derive(Debug, Clone)]
pub struct CollapseObjective {
    crlb: Crlb,
    noise: NoiseModel,
    directions: Vec<DVector<f64>>,
    weights: Vec<f64>,
    // Σ vᵢ, cached.
    sigma_directions: Vec<DVector<f64>>,
}

const UNIT_TOL: f64 = 1e-8;

impl CollapseObjective {
    pub fn new(
        crlb: Crlb,
        noise: NoiseModel,
        directions: Vec<DVector<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let m = crlb.dimension();
        check_dim(m, noise.dimension())?;
        if directions.is_empty() {
            return Err(invalid("collapse objective needs at least one direction"));
        }
        if directions.len() != weights.len() {
            return Err(invalid(format!(
                "{} directions but {} weights",
                directions.len(),
                weights.len()
            )));
        }
        for (i, v) in directions.iter().enumerate() {
            check_dim(m, v.len())?;
            if (v.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotUnitNorm(v.norm()));
            }
            for w in &directions[..i] {
                if v.dot(w).abs() > UNIT_TOL {
                    return Err(invalid("collapse directions must be mutually orthogonal"));
                }
            }
        }
        if let Some(a) = weights.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(invalid(format!(
                "direction weights must be finite and >= 0, got {a}"
            )));
        }
        let sigma_directions = directions.iter().map(|v| crlb.matrix() * v).collect();
        Ok(Self {
            crlb,
            noise,
            directions,
            weights,
            sigma_directions,
        })
    }

    /// A single direction with unit weight.
    pub fn single(crlb: Crlb, noise: NoiseModel, direction: DVector<f64>) -> Result<Self> {
        Self::new(crlb, noise, vec![direction], vec![1.0])
    }

    pub fn dimension(&self) -> usize {
        self.crlb.dimension()
    }

    pub fn crlb(&self) -> &Crlb {
        &self.crlb
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn directions(&self) -> &[DVector<f64>] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_unit(&self, u: &DVector<f64>) -> Result<()> {
        check_dim(self.dimension(), u.len())?;
        let n = u.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitNorm(n));
        }
        Ok(())
    }

    // Returns (value, Σu, q = uᵀ(Σ+Λ)u, projections vᵢᵀΣu).
    fn parts(&self, u: &DVector<f64>) -> (f64, DVector<f64>, f64, Vec<f64>) {
        let sigma_u = self.crlb.matrix() * u;
        let q = u.dot(&sigma_u) + self.noise.weighted_norm_sq(u);
        let proj: Vec<f64> = self.sigma_directions.iter().map(|sv| sv.dot(u)).collect();
        let num: f64 = proj.iter().zip(&self.weights).map(|(p, a)| a * p * p).sum();
        (num / q, sigma_u, q, proj)
    }
}

pub fn objective_value(u: &DVector<f64>, obj: &CollapseObjective) -> Result<f64> {
    obj.check_unit(u)?;
    Ok(obj.parts(u).0)
}

/// Euclidean gradient of [`objective_value`] projected onto the tangent space
/// of the sphere at `u`.
pub fn objective_gradient_sphere(
    u: &DVector<f64>,
    obj: &CollapseObjective,
) -> Result<DVector<f64>> {
    obj.check_unit(u)?;
    Ok(gradient_unchecked(u, obj).1)
}

fn gradient_unchecked(u: &DVector<f64>, obj: &CollapseObjective) -> (f64, DVector<f64>) {
    let (value, sigma_u, q, proj) = obj.parts(u);
    let lambda_u = u.component_mul(obj.noise.variances());
    let mut g = (sigma_u + lambda_u) * (-2.0 * value / q);
    for ((sv, p), a) in obj.sigma_directions.iter().zip(&proj).zip(&obj.weights) {
        g.axpy(2.0 * a * p / q, sv, 1.0);
    }
    let along = g.dot(u);
    g.axpy(-along, u, 1.0);
    (value, g)
}

/// Follows the great circle from `u` in direction `s` for arc length `α‖s‖`.
pub fn geodesic_step(u: &DVector<f64>, s: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let n = s.norm();
    if n == 0.0 || alpha == 0.0 {
        return u.clone();
    }
    let theta = alpha * n;
    let next = u * theta.cos() + s * (theta.sin() / n);
    let norm = next.norm();
    next / norm
}

/// Normalized vector of independent standard normals.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, m: usize) -> DVector<f64> {
    assert!(m >= 1, "random_unit_vector needs m >= 1");
    loop {
        let v = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `αᵢ = scale · i^(−exponent)`, `i = 1, 2, …`
    Decaying {
        scale: f64,
        exponent: f64,
    },
    Constant(f64),
}

impl StepSchedule {
    pub fn step(&self, i: usize) -> f64 {
        match *self {
            Self::Decaying { scale, exponent } => scale * (i as f64).powf(-exponent),
            Self::Constant(a) => a,
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self::Decaying {
            scale: 1e4,
            exponent: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialVector {
    #[default]
    Random,
    Fixed(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentConfig {
    pub steps: usize,
    pub schedule: StepSchedule,
    pub initial: InitialVector,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            schedule: StepSchedule::default(),
            initial: InitialVector::Random,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("ascent needs at least one step"));
        }
        let ok = match self.schedule {
            StepSchedule::Decaying { scale, exponent } => {
                scale > 0.0 && scale.is_finite() && exponent.is_finite()
            }
            StepSchedule::Constant(a) => a > 0.0 && a.is_finite(),
        };
        if !ok {
            return Err(invalid(format!(
                "invalid step schedule {:?}",
                self.schedule
            )));
        }
        if let InitialVector::Fixed(u) = &self.initial {
            if !(u.norm() > 0.0) {
                return Err(invalid("initial ascent vector must be nonzero"));
            }
        }
        Ok(())
    }
}

/// Maximizes the objective over the whole sphere. Returns the best iterate
/// seen.
pub fn gradient_ascent<R: Rng + ?Sized>(
    obj: &CollapseObjective,
    cfg: &AscentConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let m = obj.dimension();
    let mut u = match &cfg.initial {
        InitialVector::Random => random_unit_vector(rng, m),
        InitialVector::Fixed(u0) => {
            check_dim(m, u0.len())?;
            u0.normalize()
        }
    };
    let (mut value, mut grad) = gradient_unchecked(&u, obj);
    let mut best = (value, u.clone());
    for i in 1..=cfg.steps {
        u = geodesic_step(&u, &grad, cfg.schedule.step(i));
        (value, grad) = gradient_unchecked(&u, obj);
        if value > best.0 {
            best = (value, u.clone());
        }
    }
    Ok(best.1)
}

/// Maximizes the objective over the unit sphere of the span of the
/// orthonormal `basis`, iterating in basis coordinates.
pub fn gradient_ascent_in_subspace<R: Rng + ?Sized>(
    obj: &CollapseObjective,
    basis: &[DVector<f64>],
    cfg: &AscentConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if basis.is_empty() {
        return Err(invalid("subspace basis is empty"));
    }
    let m = obj.dimension();
    for b in basis {
        check_dim(m, b.len())?;
    }
    let b = DMatrix::from_columns(basis);
    let k = basis.len();
    let mut w = match &cfg.initial {
        InitialVector::Fixed(u0) => {
            check_dim(m, u0.len())?;
            let w = b.tr_mul(u0);
            if w.norm() > 1e-12 {
                w.normalize()
            } else {
                random_unit_vector(rng, k)
            }
        }
        InitialVector::Random => random_unit_vector(rng, k),
    };
    let eval = |w: &DVector<f64>| {
        let u = (&b * w).normalize();
        let (value, g) = gradient_unchecked(&u, obj);
        let mut gw = b.tr_mul(&g);
        let along = gw.dot(w);
        gw.axpy(-along, w, 1.0);
        (value, gw, u)
    };
    let (mut value, mut grad, mut u) = eval(&w);
    let mut best = (value, u.clone());
    for i in 1..=cfg.steps {
        w = geodesic_step(&w, &grad, cfg.schedule.step(i));
        (value, grad, u) = eval(&w);
        if value > best.0 {
            best = (value, u.clone());
        }
    }
    Ok(best.1)
}
