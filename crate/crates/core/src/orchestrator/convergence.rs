//! Error against a reference and log-log order fits.

use crate::error::{CosimError, Result};
use crate::orchestrator::reference::DenseTrace;
use crate::orchestrator::Trace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub dt: f64,
    pub error: f64,
    pub iterations_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub points: Vec<ConvergencePoint>,
    /// `None` when the fit is degenerate (zero errors or a single dt).
    pub slope: Option<f64>,
}

/// Max over trace rows and probes of `|state - reference|`. Probes index
/// the concatenated state vector.
pub fn trace_error(trace: &Trace, reference: &DenseTrace, probes: &[usize]) -> Result<f64> {
    let mut err = 0.0f64;
    for row in &trace.rows {
        let r = reference
            .at(row.t)
            .ok_or_else(|| CosimError::Usage(format!("reference has no sample at t = {}", row.t)))?;
        for &p in probes {
            err = err.max((row.states[p] - r[p]).abs());
        }
    }
    Ok(err)
}

/// Least-squares slope of `log(error)` against `log(dt)`.
pub fn fit_slope(dts: &[f64], errors: &[f64]) -> Option<f64> {
    if dts.len() != errors.len() || dts.len() < 2 {
        return None;
    }
    if dts.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Needs at least four distinct step sizes.
pub fn measure_convergence(runs: &[(f64, &Trace)], reference: &DenseTrace, probes: &[usize]) -> Result<ConvergenceReport> {
    check_dt_list(&runs.iter().map(|r| r.0).collect::<Vec<_>>(), 4)?;
    let mut points = Vec::with_capacity(runs.len());
    for &(dt, trace) in runs {
        points.push(ConvergencePoint {
            dt,
            error: trace_error(trace, reference, probes)?,
            iterations_mean: trace.iterations_mean(),
        });
    }
    let slope = fit_slope(&points.iter().map(|p| p.dt).collect::<Vec<_>>(), &points.iter().map(|p| p.error).collect::<Vec<_>>());
    Ok(ConvergenceReport { points, slope })
}

/// Rejects short, non-positive or repeated step lists.
pub fn check_dt_list(dts: &[f64], min_len: usize) -> Result<()> {
    if dts.len() < min_len {
        return Err(CosimError::Usage(format!("need at least {min_len} step sizes, got {}", dts.len())));
    }
    for (i, a) in dts.iter().enumerate() {
        if !(*a > 0.0) || !a.is_finite() {
            return Err(CosimError::Usage(format!("step size {a} is not positive")));
        }
        if dts[..i].iter().any(|b| b == a) {
            return Err(CosimError::Usage(format!("step size {a} listed twice")));
        }
    }
    Ok(())
}
