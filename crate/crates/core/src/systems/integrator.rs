//! Dormand–Prince 5(4) with adaptive step control.
//!
//! Operates on flat `f64` slices so that the joint state/sensitivity system
//! (`M + M²` unknowns) can be integrated without intermediate allocation.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum number of attempted steps per call.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
            max_steps: 200_000,
        }
    }
}

impl IntegratorConfig {
    pub fn new(rtol: f64, atol: f64, max_steps: usize) -> Result<Self> {
        let cfg = Self {
            rtol,
            atol,
            max_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same relative and absolute tolerance.
    pub fn with_tolerance(tol: f64) -> Result<Self> {
        Self::new(tol, tol, Self::default().max_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(invalid(format!("rtol must be positive, got {}", self.rtol)));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(invalid(format!("atol must be positive, got {}", self.atol)));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        Ok(())
    }
}

// Butcher tableau. The system is autonomous, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrates the autonomous system `dy/dt = rhs(y)` from `t = 0` to
/// `t = t_end` in place. Returns the number of accepted steps.
pub fn integrate<F>(mut rhs: F, y: &mut [f64], t_end: f64, cfg: &IntegratorConfig) -> Result<usize>
where
    F: FnMut(&[f64], &mut [f64]),
{
    cfg.validate()?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid(format!(
            "integration horizon must be finite and >= 0, got {t_end}"
        )));
    }
    if t_end == 0.0 {
        return Ok(0);
    }

    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(y, &mut k1);
    let mut h = initial_step(&mut rhs, y, &k1, t_end, cfg, &mut tmp, &mut k2);

    let mut t = 0.0;
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut last_rejected = false;

    while t < t_end {
        if attempts >= cfg.max_steps {
            return Err(Error::Diverged { t, steps: attempts });
        }
        attempts += 1;

        // Absorb a sliver remainder into this step rather than leaving a tiny last one.
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(&tmp, &mut k5);
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(&tmp, &mut k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(&y_new, &mut k7);

        let mut err_sq = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n as f64).sqrt();

        if err.is_finite() && err <= 1.0 {
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&y_new);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h *= fac;
        } else {
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h *= fac;
            last_rejected = true;
        }

        if t < t_end
            && (!(h > f64::EPSILON * t.abs().max(1.0) * 4.0) || y.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Diverged { t, steps: attempts });
        }
    }
    Ok(accepted)
}

fn weighted_rms(v: &[f64], y: &[f64], cfg: &IntegratorConfig) -> f64 {
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let sc = cfg.atol + cfg.rtol * b.abs();
            (a / sc) * (a / sc)
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

// Hairer, Nørsett & Wanner's starting-step heuristic.
fn initial_step<F>(
    rhs: &mut F,
    y: &[f64],
    f0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    let d0 = weighted_rms(y, y, cfg);
    let d1 = weighted_rms(f0, y, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(t_end);
    for i in 0..y.len() {
        y1[i] = y[i] + h0 * f0[i];
    }
    rhs(y1, f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = weighted_rms(&diff, y, cfg);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}
