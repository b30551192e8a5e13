//! Nearest-neighbour and local-average interpolation over sampled points.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, invalid, Result};
use crate::systems::State;

pub trait MetricPoint {
    fn distance(&self, other: &Self) -> f64;
}

impl MetricPoint for DVector<f64> {
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

/// Frobenius distance.
impl MetricPoint for DMatrix<f64> {
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

/// A point of the (state, bound) product space. The distance is the
/// Euclidean combination of the state distance and the Frobenius distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DpPoint {
    pub state: State,
    pub psd: DMatrix<f64>,
}

impl MetricPoint for DpPoint {
    fn distance(&self, other: &Self) -> f64 {
        product_distance(
            self.state.distance(&other.state),
            self.psd.distance(&other.psd),
        )
    }
}

pub(crate) fn product_distance(d_state: f64, d_psd: f64) -> f64 {
    d_state.hypot(d_psd)
}

/// Index of the smallest distance; the lowest index wins ties.
pub(crate) fn argmin_distance(distances: &[f64]) -> usize {
    let mut best = 0;
    for (i, d) in distances.iter().enumerate().skip(1) {
        if *d < distances[best] {
            best = i;
        }
    }
    best
}

/// Normalized hinge weights `max(0, d_max − d)`. Falls back to the nearest
/// point with weight 1 when every weight is zero.
pub(crate) fn weights_from_distances(distances: &[f64], d_max: f64) -> Vec<(usize, f64)> {
    let mut w: Vec<(usize, f64)> = distances
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let h = d_max - d;
            (h > 0.0).then_some((i, h))
        })
        .collect();
    let total: f64 = w.iter().map(|(_, h)| h).sum();
    if w.is_empty() || !(total > 0.0) {
        return vec![(argmin_distance(distances), 1.0)];
    }
    for (_, h) in &mut w {
        *h /= total;
    }
    w
}

fn check_points<P>(points: &[P], values: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(invalid("interpolation needs at least one point"));
    }
    check_dim(points.len(), values.len())
}

pub fn interpolate_nearest<P: MetricPoint>(points: &[P], values: &[f64], query: &P) -> Result<f64> {
    check_points(points, values)?;
    let d: Vec<f64> = points.iter().map(|p| p.distance(query)).collect();
    Ok(values[argmin_distance(&d)])
}

/// `Σ J(x) w(x) / Σ w(x)` with `w(x) = max(0, d_max − ‖x − query‖)`, or the
/// nearest point's value when no point lies within `d_max`.
pub fn interpolate_local_average<P: MetricPoint>(
    points: &[P],
    values: &[f64],
    query: &P,
    d_max: f64,
) -> Result<f64> {
    check_points(points, values)?;
    if !(d_max > 0.0) {
        return Err(invalid(format!("d_max must be > 0, got {d_max}")));
    }
    let d: Vec<f64> = points.iter().map(|p| p.distance(query)).collect();
    Ok(weights_from_distances(&d, d_max)
        .iter()
        .map(|(i, w)| w * values[*i])
        .sum())
}

/// Monte-Carlo estimate of `E[min over N samples of ‖x − x'‖]` with query
/// and samples drawn independently from `sampler`.
pub fn expected_min_distance<R, P, F>(
    rng: &mut R,
    mut sampler: F,
    n: usize,
    trials: usize,
) -> Result<f64>
where
    R: Rng + ?Sized,
    P: MetricPoint,
    F: FnMut(&mut R) -> P,
{
    if n == 0 || trials == 0 {
        return Err(invalid(
            "expected_min_distance needs N >= 1 and trials >= 1",
        ));
    }
    let mut total = 0.0;
    for _ in 0..trials {
        let query = sampler(rng);
        let mut best = f64::INFINITY;
        for _ in 0..n {
            best = best.min(sampler(rng).distance(&query));
        }
        total += best;
    }
    Ok(total / trials as f64)
}
