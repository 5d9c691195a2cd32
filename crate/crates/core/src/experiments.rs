//! Sweeps behind the error-order studies: one-step estimator errors on the
//! isolated prey, and co-simulation convergence against a monolithic
//! reference.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::costarica::{ControlPolicy, Estimator, EstimatorConfig};
use crate::error::{CosimError, Result};
use crate::models::{IsolatedPrey, Model};
use crate::orchestrator::convergence::{check_dt_list, fit_slope, measure_convergence, ConvergenceReport};
use crate::orchestrator::reference::{monolithic_reference, DenseTrace};
use crate::orchestrator::{run_cosimulation, CosimConfig, CouplingGraph, ReplayMode, RunAbort, Trace};
use crate::systems::{Side, System};

/// Micro-step of every ground-truth integration.
pub const REFERENCE_MICRO_DT: f64 = 1e-5;

/// `10^(-3 + i/4)`, `i = 0..=8`.
pub fn steperror_dts() -> Vec<f64> {
    (0..=8).map(|i| 10f64.powf(-3.0 + i as f64 / 4.0)).collect()
}

pub const MECH_DTS: [f64; 5] = [5.0, 2.0, 1.0, 0.5, 0.2];
pub const LV_DTS: [f64; 7] = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3];

/// Maps `f` over `items` on up to `threads` workers, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(|r| r.expect("worker finished")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepErrorConfig {
    pub stehfest_n: usize,
    pub rich_factor: f64,
    pub micro_dt: f64,
}

impl Default for StepErrorConfig {
    fn default() -> Self {
        Self {
            stehfest_n: crate::laplace::DEFAULT_ORDER,
            rich_factor: 0.2,
            micro_dt: REFERENCE_MICRO_DT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepErrorPoint {
    pub dt: f64,
    pub estimate: f64,
    pub truth: f64,
    pub error: f64,
}

/// One estimator step of length `dt` from `t = 0` against a fine RK4
/// integration of the nonlinear prey.
pub fn step_error(prey: &IsolatedPrey, dt: f64, cfg: &StepErrorConfig) -> Result<StepErrorPoint> {
    let mut sys = System::new(prey.spec.clone(), 0.0)?;
    let u0 = prey.stimulus.eval(0.0);
    let y0 = sys.output(0.0, &sys.state().x, &u0, Side::Right);
    let mut est = Estimator::new(EstimatorConfig {
        stehfest_n: cfg.stehfest_n,
        rich_factor: cfg.rich_factor,
        policy: ControlPolicy::Zoh,
        need_derivatives: false,
    })?;
    est.update1(sys.make_linearization_point(&u0, &y0, false)?)?;
    est.update2(dt, prey.stimulus.degree())?;
    let (y, _) = est.update3(&prey.stimulus)?;
    let micro = ((dt / cfg.micro_dt) - 1e-9).ceil().max(1.0) as usize;
    let truth = sys.do_step(&prey.stimulus, dt, micro)?.x_end[0];
    Ok(StepErrorPoint {
        dt,
        estimate: y[0],
        truth,
        error: (y[0] - truth).abs(),
    })
}

pub fn step_error_sweep(
    prey: &IsolatedPrey,
    dts: &[f64],
    cfg: &StepErrorConfig,
    threads: usize,
) -> Result<(Vec<StepErrorPoint>, Option<f64>)> {
    check_dt_list(dts, 2)?;
    let points = parallel_map(dts, threads, |&dt| step_error(prey, dt, cfg)).into_iter().collect::<Result<Vec<_>>>()?;
    let slope = fit_slope(dts, &points.iter().map(|p| p.error).collect::<Vec<_>>());
    Ok((points, slope))
}

/// Largest grid step dividing every `dt` (up to 1e-9 relative), searched
/// among `min(dts) / k` for `k <= 1000`.
pub fn common_base(dts: &[f64]) -> Option<f64> {
    let lo = dts.iter().copied().fold(f64::INFINITY, f64::min);
    (1..=1000).map(|k| lo / k as f64).find(|b| {
        dts.iter().all(|d| {
            let r = d / b;
            (r - r.round()).abs() <= 1e-9 * r.max(1.0)
        })
    })
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub mode: ReplayMode,
    pub report: ConvergenceReport,
    pub traces: Vec<Trace>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Setup(#[from] CosimError),
    #[error("{mode} at dt = {dt}: {abort}")]
    Run { mode: ReplayMode, dt: f64, abort: RunAbort },
}

/// Reference on the common grid of `dts`, sampled finely enough for all
/// of them.
pub fn reference_for(model: &Model, dts: &[f64], micro_dt: f64) -> Result<DenseTrace> {
    let base = common_base(dts).ok_or_else(|| CosimError::Usage("step sizes share no common grid".into()))?;
    monolithic_reference(model, micro_dt, base)
}

/// One co-simulation per `(mode, dt)`; everything but the step size and
/// mode comes from `template`.
pub fn convergence_sweep(
    model: &Model,
    dts: &[f64],
    modes: &[ReplayMode],
    template: &CosimConfig,
    reference: &DenseTrace,
    threads: usize,
) -> std::result::Result<Vec<SweepOutcome>, SweepError> {
    check_dt_list(dts, 4)?;
    let graph = CouplingGraph::from_model(model);
    let jobs: Vec<(ReplayMode, f64)> = modes.iter().flat_map(|&m| dts.iter().map(move |&d| (m, d))).collect();
    let runs = parallel_map(&jobs, threads, |&(mode, dt)| {
        let cfg = CosimConfig { macro_dt: dt, mode, ..*template };
        run_cosimulation(&graph, &cfg).map_err(|abort| SweepError::Run { mode, dt, abort })
    });
    let mut runs = runs.into_iter();
    let mut out = Vec::new();
    for &mode in modes {
        let traces = runs.by_ref().take(dts.len()).collect::<std::result::Result<Vec<_>, _>>()?;
        let pairs: Vec<(f64, &Trace)> = dts.iter().copied().zip(traces.iter()).collect();
        let report = measure_convergence(&pairs, reference, &model.probes)?;
        out.push(SweepOutcome { mode, report, traces });
    }
    Ok(out)
}
