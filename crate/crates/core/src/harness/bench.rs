//! Relative-cost timings. Absolute numbers depend on the machine; only the
//! growth with problem size is meaningful.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::csv::float;
use crate::dp::{
    build_action_set, value_iteration, ActionSpec, DpConfig, DpSampleSet, Interpolation,
};
use crate::error::{invalid, Result};
use crate::information::{Crlb, NoiseModel};
use crate::policies::{
    gradient_ascent, policy_decide, AscentConfig, CollapseConfig, CollapseObjective, PolicyKind,
};
use crate::systems::{AugmentedVanDerPol, IntegratorConfig, LinearSystem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchKind {
    /// One collapse decision, flow Jacobian included, on the augmented Van
    /// der Pol system of dimension `size`.
    CollapseDecision,
    /// Default-length sphere ascent in dimension `size`.
    Ascent,
    /// Sampling plus value iteration with `size` PSD samples.
    DpInit,
}

impl BenchKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CollapseDecision => "collapse_decision",
            Self::Ascent => "ascent",
            Self::DpInit => "dp_init",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: BenchKind,
    pub size: usize,
    /// Minimum wall-clock time over the repeats.
    pub seconds: f64,
}

fn min_time<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

fn collapse_decision(dim: usize) -> Result<()> {
    let sys = AugmentedVanDerPol::new(dim)?;
    let kind = PolicyKind::Collapse(CollapseConfig::new(10.0));
    let noise = NoiseModel::iid(dim, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    policy_decide(
        &kind,
        &sys,
        &State::from_element(dim, 1.0),
        &Crlb::scaled_identity(dim, 1.0),
        &noise,
        &mut rng,
        &IntegratorConfig::default(),
    )?;
    Ok(())
}

fn ascent(dim: usize) -> Result<()> {
    let sigma = Crlb::new(DMatrix::from_fn(
        dim,
        dim,
        |i, j| if i == j { 1.0 } else { 0.1 },
    ))?;
    let v = DVector::from_element(dim, 1.0).normalize();
    let obj = CollapseObjective::single(sigma, NoiseModel::iid(dim, 1.0)?, v)?;
    gradient_ascent(
        &obj,
        &AscentConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    Ok(())
}

fn dp_init(n: usize) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sys = LinearSystem::diagonal(&[-10.0, -0.1])?;
    let samples = DpSampleSet::sample(&mut rng, vec![State::from_element(2, 1.0)], n, 1.0)?;
    let cfg = DpConfig {
        gamma: 0.99,
        d_max: 1.0,
        actions: build_action_set(2, ActionSpec::Spacing(0.1), &mut rng)?,
        iterations: 100,
        dt: 0.01,
        interpolation: Interpolation::LocalAverage,
    };
    value_iteration(
        samples,
        cfg,
        &sys,
        &NoiseModel::iid(2, 1.0)?,
        &IntegratorConfig::default(),
    )?;
    Ok(())
}

/// Times collapse decisions and ascents at each of `dims` and DP
/// initialization at each of `samples`, keeping the best of `repeats` runs.
pub fn bench(dims: &[usize], samples: &[usize], repeats: usize) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(invalid("bench needs at least one repeat"));
    }
    let mut rows = Vec::new();
    for &d in dims {
        rows.push(BenchRow {
            kind: BenchKind::CollapseDecision,
            size: d,
            seconds: min_time(repeats, || collapse_decision(d))?,
        });
        rows.push(BenchRow {
            kind: BenchKind::Ascent,
            size: d,
            seconds: min_time(repeats, || ascent(d))?,
        });
    }
    for &n in samples {
        rows.push(BenchRow {
            kind: BenchKind::DpInit,
            size: n,
            seconds: min_time(repeats, || dp_init(n))?,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Growth exponent of one benchmark kind.
pub fn fitted_exponent(rows: &[BenchRow], kind: BenchKind) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.kind == kind)
        .map(|r| (r.size as f64, r.seconds.max(1e-12)))
        .unzip();
    (xs.len() >= 2).then(|| loglog_slope(&xs, &ys))
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("kind,size,seconds\n");
    for r in rows {
        s.push_str(r.kind.name());
        s.push(',');
        s.push_str(&r.size.to_string());
        s.push(',');
        float(&mut s, r.seconds);
        s.push('\n');
    }
    for kind in [
        BenchKind::CollapseDecision,
        BenchKind::Ascent,
        BenchKind::DpInit,
    ] {
        if let Some(e) = fitted_exponent(rows, kind) {
            s.push_str(&format!("# {}_exponent={e:.3}\n", kind.name()));
        }
    }
    s
}
