//! Empirical amplitude and period exponents from limit cycles on a geometric grid.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

use crate::hlb::{scaling_row, HLBReport, HlbKind};
use crate::numerics::{geomspace, linear_fit};
use crate::poincare::{find_limit_cycle_with, CycleOptions};
use crate::pwsmodel::PWSystem;

/// Scaling-fit failures.
#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("grid needs 0 < mu_min < mu_max, got ({0}, {1})")]
    BadGrid(f64, f64),
    #[error("report has no cycle side; classify first")]
    NoSide,
    #[error("only {0} grid points produced a cycle, at least 3 are needed")]
    TooFewPoints(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cycle measurements at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub mu: f64,
    pub amplitude: f64,
    pub x_amplitude: f64,
    pub y_amplitude: f64,
    pub x_max: f64,
    pub period: f64,
    pub multiplier: f64,
}

/// Least-squares line in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    /// Prefactor `k` in `k |mu|^exponent`.
    pub k: f64,
    pub r2: f64,
}

/// Fitted exponents with the data they came from.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub schema: &'static str,
    pub kind: Option<HlbKind>,
    pub exponent_amplitude: f64,
    pub exponent_period: f64,
    /// Amplitude prefactor `k1`.
    pub k1: f64,
    /// Period prefactor `k2`.
    pub k2: f64,
    pub r2_amplitude: f64,
    pub r2_period: f64,
    pub amplitude: PowerFit,
    pub x_amplitude: PowerFit,
    pub y_amplitude: PowerFit,
    pub x_max: Option<PowerFit>,
    /// Fit of the raw period.
    pub period: PowerFit,
    /// Fit of `|period - limit|`, used when the limiting period is nonzero.
    pub period_deviation: Option<PowerFit>,
    pub period_limit: Option<f64>,
    pub mu_grid: Vec<f64>,
    pub points: Vec<ScalingPoint>,
    pub warnings: Vec<String>,
}

/// Cycle-search settings used at every grid point.
#[derive(Debug, Clone, Copy)]
pub struct ScalingOptions {
    /// Radius bracket of the cycle search.
    pub bracket: (f64, f64),
    /// Scale the bracket by `|mu - mu0|` at each grid point.
    pub relative: bool,
    pub tol: f64,
    pub cycle: CycleOptions,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self { bracket: (1e-7, 1.0), relative: false, tol: 1e-10, cycle: CycleOptions { scan_points: 64, ..CycleOptions::default() } }
    }
}

fn power_fit(mu: &[f64], v: &[f64]) -> Option<PowerFit> {
    let pairs: Vec<(f64, f64)> =
        mu.iter().zip(v).filter(|(_, y)| **y > 0.0 && y.is_finite()).map(|(m, y)| (m.abs().ln(), y.ln())).collect();
    if pairs.len() < 3 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Some(PowerFit { exponent: slope, k: intercept.exp(), r2 })
}

fn measure(sys: &PWSystem, mu: f64, dist: f64, opts: &ScalingOptions) -> Option<ScalingPoint> {
    let s = if opts.relative { dist } else { 1.0 };
    let bracket = (opts.bracket.0 * s, opts.bracket.1 * s);
    let fp = find_limit_cycle_with(sys, mu, bracket, opts.tol, &opts.cycle).ok()??;
    let e = fp.extremes;
    Some(ScalingPoint {
        mu,
        amplitude: e.diameter(),
        x_amplitude: e.x_max - e.x_min,
        y_amplitude: e.y_max - e.y_min,
        x_max: e.x_max,
        period: fp.period,
        multiplier: fp.multiplier,
    })
}

/// Fit exponents over `n_points` geometric values of `|mu - mu0|` in
/// `[mu_min, mu_max]`, on the side where `report` places the cycle.
pub fn fit_scaling(
    sys: &PWSystem,
    report: &HLBReport,
    mu_min: f64,
    mu_max: f64,
    n_points: usize,
    opts: &ScalingOptions,
) -> Result<ScalingFit, ScalingError> {
    if !(mu_min > 0.0 && mu_max > mu_min) {
        return Err(ScalingError::BadGrid(mu_min, mu_max));
    }
    let side = report.cycle_side.ok_or(ScalingError::NoSide)?;
    let grid = geomspace(mu_min, mu_max, n_points);
    let mut warnings = vec![];
    if n_points < 8 {
        warnings.push(format!("grid has {n_points} points, fewer than 8"));
    }
    if mu_max / mu_min < 100.0 * (1.0 - 1e-12) {
        warnings.push(format!("grid spans {:.2} decades, fewer than 2", (mu_max / mu_min).log10()));
    }
    let points: Vec<ScalingPoint> = grid
        .par_iter()
        .map(|&m| measure(sys, report.mu0 + side * m, m, opts).map(|p| ScalingPoint { mu: side * m, ..p }))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let dropped = grid.len() - points.len();
    if dropped > 0 {
        warnings.push(format!("{dropped} grid points had no cycle and were dropped"));
    }
    if points.len() < 8 {
        warnings.push(format!("only {} points remain", points.len()));
    }
    let mu: Vec<f64> = points.iter().map(|p| p.mu).collect();
    let col = |f: fn(&ScalingPoint) -> f64| points.iter().map(f).collect::<Vec<_>>();
    let fit = |v: Vec<f64>| power_fit(&mu, &v).ok_or(ScalingError::TooFewPoints(points.len()));
    let amplitude = fit(col(|p| p.amplitude))?;
    let x_amplitude = fit(col(|p| p.x_amplitude))?;
    let y_amplitude = fit(col(|p| p.y_amplitude))?;
    let x_max = power_fit(&mu, &col(|p| p.x_max));
    let period = fit(col(|p| p.period))?;
    let kind = report.kind;
    let zero_b = kind.map_or(false, |k| scaling_row(k).b.num == 0);
    let period_limit = report.predicted_period.as_ref().filter(|p| p.converged && p.coeff == 0.0).map(|p| p.limit);
    let period_deviation = match (zero_b, period_limit) {
        (true, Some(lim)) => power_fit(&mu, &col(|p| p.period).iter().map(|t| (t - lim).abs()).collect::<Vec<_>>()),
        _ => None,
    };
    let mixed = matches!(kind, Some(HlbKind::Hlb(7 | 10 | 17 | 18)));
    let amp = if mixed {
        if x_amplitude.exponent < y_amplitude.exponent {
            x_amplitude
        } else {
            y_amplitude
        }
    } else {
        amplitude
    };
    Ok(ScalingFit {
        schema: "hlb-scaling/1",
        kind,
        exponent_amplitude: amp.exponent,
        exponent_period: period.exponent,
        k1: amp.k,
        k2: period.k,
        r2_amplitude: amp.r2,
        r2_period: period.r2,
        amplitude,
        x_amplitude,
        y_amplitude,
        x_max,
        period,
        period_deviation,
        period_limit,
        mu_grid: grid,
        points,
        warnings,
    })
}

/// CSV of the per-point measurements.
pub fn write_scaling_csv<W: Write>(fit: &ScalingFit, w: W) -> Result<(), ScalingError> {
    let mut wr = csv::Writer::from_writer(w);
    for p in &fit.points {
        wr.serialize(p)?;
    }
    wr.flush()?;
    Ok(())
}
