//! Interpolation-point sampling: Haar rotations, PSD matrices with
//! exponentially distributed eigenvalues, and state samples.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{invalid, Result};
use crate::systems::{DynamicalSystem, IntegratorConfig, State};

/// Haar-distributed orthogonal `m × m` matrix.
///
/// QR of a standard Gaussian matrix, with column `j` of `Q` multiplied by
/// `sign(R_jj)` so the distribution is exactly Haar.
pub fn sample_haar_orthonormal<R: Rng + ?Sized>(rng: &mut R, m: usize) -> DMatrix<f64> {
    assert!(m >= 1, "sample_haar_orthonormal needs m >= 1");
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Qᵀ diag(eigenvalues) Q`, symmetrized.
pub fn psd_from_parts(q: &DMatrix<f64>, eigenvalues: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| eigenvalues[i] * q[(i, j)]);
    let p = q.tr_mul(&scaled);
    (&p + p.transpose()) * 0.5
}

/// Random PSD matrix with Haar eigenvectors and `Exp(rate)` eigenvalues.
/// Returns the drawn eigenvalues alongside.
pub fn sample_psd_with_spectrum<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    rate: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!(
            "eigenvalue rate must be finite and > 0, got {rate}"
        )));
    }
    let exp = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
    let eig = DVector::from_iterator(m, (0..m).map(|_| exp.sample(rng)));
    let q = sample_haar_orthonormal(rng, m);
    Ok((psd_from_parts(&q, &eig), eig))
}

pub fn sample_psd<R: Rng + ?Sized>(rng: &mut R, m: usize, rate: f64) -> Result<DMatrix<f64>> {
    Ok(sample_psd_with_spectrum(rng, m, rate)?.0)
}

/// `n` states with independent `N(0, variance)` entries.
pub fn gaussian_states<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    n: usize,
    variance: f64,
) -> Vec<State> {
    let sd = variance.sqrt();
    (0..n)
        .map(|_| State::from_fn(m, |_, _| sd * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Each seed followed by its next `extra` flow steps of length `dt`.
pub fn trajectory_states(
    system: &dyn DynamicalSystem,
    seeds: &[State],
    extra: usize,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(seeds.len() * (extra + 1));
    for s in seeds {
        let mut x = s.clone();
        out.push(x.clone());
        for _ in 0..extra {
            x = system.flow(&x, dt, cfg)?;
            out.push(x.clone());
        }
    }
    Ok(out)
}
