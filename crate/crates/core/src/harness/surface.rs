use nalgebra::DVector;

use super::csv::float;
use crate::error::{invalid, Error, Result};
use crate::policies::{objective_value, CollapseObjective};

/// One grid node: polar angle `θ ∈ [0°, 180°]` from `e₃`, azimuth
/// `φ ∈ [0°, 360°)`, both in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub theta: f64,
    pub phi: f64,
    pub value: f64,
}

impl SurfaceRow {
    pub fn direction(&self) -> DVector<f64> {
        sphere_point(self.theta, self.phi)
    }
}

pub fn sphere_point(theta_deg: f64, phi_deg: f64) -> DVector<f64> {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    DVector::from_column_slice(&[t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
}

/// Objective values on a latitude/longitude grid with the given spacing in
/// degrees. Three dimensions only.
pub fn emit_objective_surface(obj: &CollapseObjective, resolution: f64) -> Result<Vec<SurfaceRow>> {
    if obj.dimension() != 3 {
        return Err(Error::Unsupported(format!(
            "objective surfaces need M = 3, got {}",
            obj.dimension()
        )));
    }
    if !(resolution > 0.0 && resolution <= 180.0) {
        return Err(invalid(format!(
            "resolution must lie in (0, 180] degrees, got {resolution}"
        )));
    }
    let n_theta = (180.0 / resolution + 1e-9).floor() as usize;
    let n_phi = (360.0 / resolution - 1e-9).ceil() as usize;
    let mut rows = Vec::with_capacity((n_theta + 1) * n_phi);
    for i in 0..=n_theta {
        let theta = i as f64 * resolution;
        for j in 0..n_phi {
            let phi = j as f64 * resolution;
            let u = sphere_point(theta, phi).normalize();
            rows.push(SurfaceRow {
                theta,
                phi,
                value: objective_value(&u, obj)?,
            });
        }
    }
    Ok(rows)
}

pub fn surface_csv(rows: &[SurfaceRow]) -> String {
    let mut s = String::from("theta_deg,phi_deg,value\n");
    for r in rows {
        float(&mut s, r.theta);
        s.push(',');
        float(&mut s, r.phi);
        s.push(',');
        float(&mut s, r.value);
        s.push('\n');
    }
    s
}

/// The grid row with the largest value; the first one on ties.
pub fn surface_max(rows: &[SurfaceRow]) -> Option<SurfaceRow> {
    rows.iter().copied().fold(None, |best, r| match best {
        Some(b) if b.value >= r.value => Some(b),
        _ => Some(r),
    })
}
