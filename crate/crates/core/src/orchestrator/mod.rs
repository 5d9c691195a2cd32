//! The iterative co-simulation master.
//!
//! Each macro-step iterates on the end-of-step output values and
//! derivatives of every system. Inputs over the step are cubic Hermite
//! polynomials between the left jets (fixed at the step start) and the
//! current iterate. A step is evaluated either by restoring a snapshot and
//! integrating again, or by the step estimator; in the latter case each
//! system integrates once, after convergence.

mod anderson;
pub mod convergence;
pub mod reference;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

pub use anderson::{anderson_update, REGULARIZATION};

use crate::costarica::{ControlPolicy, Estimator, EstimatorConfig};
use crate::error::{CosimError, Result};
use crate::models::Model;
use crate::signals::{hermite_cubic, PolyVecSignal};
use crate::systems::{Side, Snapshot, System, SystemSpec};

/// Mixing depth used unless configured otherwise.
pub const DEFAULT_ANDERSON_DEPTH: usize = 3;

/// Polynomial degree of the reconstructed inputs.
pub const INPUT_DEGREE: usize = 3;

/// `from = (system, output)` feeds `to = (system, input)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wire {
    pub from: (usize, usize),
    pub to: (usize, usize),
}

impl Wire {
    pub fn new(from: (usize, usize), to: (usize, usize)) -> Self {
        Self { from, to }
    }
}

#[derive(Debug, Clone)]
pub struct CouplingGraph {
    pub systems: Vec<SystemSpec>,
    pub wires: Vec<Wire>,
}

impl CouplingGraph {
    pub fn new(systems: Vec<SystemSpec>, wires: Vec<Wire>) -> Result<Self> {
        let g = Self { systems, wires };
        g.validate()?;
        Ok(g)
    }

    pub fn from_model(model: &Model) -> Self {
        Self {
            systems: model.systems.clone(),
            wires: model.wires.clone(),
        }
    }

    /// Every input wired exactly once, indices in range, and no system
    /// output fed straight back into an input it depends on directly.
    pub fn validate(&self) -> Result<()> {
        let mut seen: Vec<Vec<usize>> = self.systems.iter().map(|s| vec![0; s.n_in]).collect();
        for w in &self.wires {
            let (fs, fo) = w.from;
            let (ts, ti) = w.to;
            let bad = fs >= self.systems.len()
                || ts >= self.systems.len()
                || fo >= self.systems[fs].n_out
                || ti >= self.systems[ts].n_in;
            if bad {
                return Err(CosimError::Usage(format!("wire {:?} -> {:?} is out of range", w.from, w.to)));
            }
            seen[ts][ti] += 1;
            if fs == ts && self.feedthrough(fs, fo, ti) {
                return Err(CosimError::Usage(format!(
                    "system `{}` output {fo} feeds its own input {ti} directly",
                    self.systems[fs].name
                )));
            }
        }
        for (s, counts) in seen.iter().enumerate() {
            if let Some(i) = counts.iter().position(|&c| c != 1) {
                return Err(CosimError::Usage(format!(
                    "input {i} of system `{}` is wired {} times",
                    self.systems[s].name, counts[i]
                )));
            }
        }
        Ok(())
    }

    fn feedthrough(&self, s: usize, o: usize, i: usize) -> bool {
        let spec = &self.systems[s];
        let d = match &spec.jacobians {
            Some(j) => (j.dgdu)(0.0, &spec.x_init, &spec.u_init)[(o, i)],
            None => {
                let h = 1e-6 * spec.u_init[i].abs().max(1.0);
                let mut up = spec.u_init.clone();
                up[i] += h;
                ((spec.g)(0.0, &spec.x_init, &up)[o] - (spec.g)(0.0, &spec.x_init, &spec.u_init)[o]) / h
            }
        };
        d != 0.0
    }

    /// `sources()[s][i]` is the `(system, output)` wired to input `i` of
    /// system `s`. Assumes a validated graph.
    pub fn sources(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out: Vec<Vec<(usize, usize)>> = self.systems.iter().map(|s| vec![(0, 0); s.n_in]).collect();
        for w in &self.wires {
            out[w.to.0][w.to.1] = w.from;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplayMode {
    Rollback,
    Costarica,
    /// The estimator without state derivatives (`f_C = 0`).
    CostaricaSsr,
}

impl ReplayMode {
    pub const ALL: [ReplayMode; 3] = [ReplayMode::Rollback, ReplayMode::Costarica, ReplayMode::CostaricaSsr];

    pub fn name(self) -> &'static str {
        match self {
            ReplayMode::Rollback => "ROLLBACK",
            ReplayMode::Costarica => "COSTARICA",
            ReplayMode::CostaricaSsr => "COSTARICA_SSR",
        }
    }
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReplayMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ReplayMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosimConfig {
    pub t_init: f64,
    pub t_end: f64,
    pub macro_dt: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub mode: ReplayMode,
    /// 0 is the plain fixed-point iteration.
    pub anderson_depth: usize,
    pub stehfest_n: usize,
    pub rich_factor: f64,
    pub control_policy: ControlPolicy,
    pub micro_steps: usize,
}

impl CosimConfig {
    pub fn new(t_init: f64, t_end: f64, macro_dt: f64, mode: ReplayMode) -> Self {
        Self {
            t_init,
            t_end,
            macro_dt,
            epsilon: 1e-6,
            max_iters: 50,
            mode,
            anderson_depth: DEFAULT_ANDERSON_DEPTH,
            stehfest_n: crate::laplace::DEFAULT_ORDER,
            rich_factor: 0.2,
            control_policy: ControlPolicy::Flex,
            micro_steps: 100,
        }
    }

    pub fn for_model(model: &Model, macro_dt: f64, mode: ReplayMode) -> Self {
        Self::new(model.t_init, model.t_end, macro_dt, mode)
    }

    /// `t_end == t_init` is accepted and yields an empty trace.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CosimError::Usage(msg));
        if !self.t_init.is_finite() || !self.t_end.is_finite() || self.t_end < self.t_init {
            return bad(format!("invalid horizon [{}, {}]", self.t_init, self.t_end));
        }
        if !(self.macro_dt > 0.0) || !self.macro_dt.is_finite() {
            return bad(format!("macro_dt must be positive, got {}", self.macro_dt));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 || self.micro_steps == 0 {
            return bad("max_iters and micro_steps must be positive".into());
        }
        if !(self.rich_factor > 0.0 && self.rich_factor < 1.0) {
            return bad(format!("rich_factor must lie in (0, 1), got {}", self.rich_factor));
        }
        crate::laplace::stehfest_weights(self.stehfest_n)?;
        Ok(())
    }

    /// Macro-grid: uniform, with a shorter last step when `macro_dt` does not
    /// divide the horizon.
    pub fn grid(&self) -> Vec<f64> {
        let span = self.t_end - self.t_init;
        let n = (span / self.macro_dt - 1e-9).ceil().max(0.0) as usize;
        (0..=n).map(|k| (self.t_init + k as f64 * self.macro_dt).min(self.t_end)).collect()
    }
}

/// One accepted macro-step (or the initial point, with 0 iterations).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Outputs of all systems, concatenated in graph order.
    pub outputs: Vec<f64>,
    /// States of all systems, concatenated in graph order.
    pub states: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub mode: ReplayMode,
    /// Per system: whether the estimator ran without state derivatives.
    pub ssr: Vec<bool>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Mean iteration count over the accepted steps.
    pub fn iterations_mean(&self) -> f64 {
        let steps: Vec<usize> = self.rows.iter().skip(1).map(|r| r.iterations).collect();
        if steps.is_empty() {
            0.0
        } else {
            steps.iter().sum::<usize>() as f64 / steps.len() as f64
        }
    }
}

/// A run stopped before `t_end`.
#[derive(Debug, thiserror::Error)]
#[error("co-simulation aborted at t = {last_time}: {error}")]
pub struct RunAbort {
    pub error: CosimError,
    pub last_time: f64,
    /// Rows accepted before the failure.
    pub trace: Trace,
}

/// Relative infinity norm of the change between two evaluations.
pub fn relative_change(prev: &[f64], next: &[f64]) -> f64 {
    prev.iter().zip(next).map(|(a, b)| (b - a).abs() / (1.0 + b.abs())).fold(0.0, f64::max)
}

struct Master<'a> {
    cfg: &'a CosimConfig,
    systems: Vec<System>,
    sources: Vec<Vec<(usize, usize)>>,
    /// Offset of each system's outputs in the coupling vector.
    offsets: Vec<usize>,
    n_y: usize,
    estimators: Vec<Option<Estimator>>,
    ssr: Vec<bool>,
    counted: Vec<usize>,
}

impl<'a> Master<'a> {
    fn new(graph: &CouplingGraph, cfg: &'a CosimConfig) -> Result<Self> {
        graph.validate()?;
        cfg.validate()?;
        let systems = graph
            .systems
            .iter()
            .map(|s| System::new(s.clone(), cfg.t_init))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(systems.len());
        let mut n_y = 0;
        for s in &graph.systems {
            offsets.push(n_y);
            n_y += s.n_out;
        }
        let mut estimators = Vec::new();
        let mut ssr = Vec::new();
        for sys in &systems {
            let caps = sys.capabilities();
            let missing = |c: &'static str| CosimError::Capability {
                system: sys.name().to_string(),
                capability: c,
            };
            match cfg.mode {
                ReplayMode::Rollback => {
                    if !caps.supports_rollback {
                        return Err(missing("supports_rollback"));
                    }
                    estimators.push(None);
                    ssr.push(false);
                }
                ReplayMode::Costarica | ReplayMode::CostaricaSsr => {
                    if !caps.exposes_states {
                        return Err(missing("exposes_states"));
                    }
                    if !caps.provides_directional_derivatives {
                        return Err(missing("provides_directional_derivatives"));
                    }
                    let est = Estimator::new(EstimatorConfig {
                        stehfest_n: cfg.stehfest_n,
                        rich_factor: cfg.rich_factor,
                        policy: cfg.control_policy,
                        need_derivatives: true,
                    })?;
                    estimators.push(Some(est));
                    ssr.push(cfg.mode == ReplayMode::CostaricaSsr || !caps.exposes_state_derivatives);
                }
            }
        }
        let counted = vec![0; systems.len()];
        Ok(Self {
            cfg,
            systems,
            sources: graph.sources(),
            offsets,
            n_y,
            estimators,
            ssr,
            counted,
        })
    }

    fn wire(&self, y: &[f64]) -> Vec<DVector<f64>> {
        self.sources
            .iter()
            .map(|srcs| DVector::from_iterator(srcs.len(), srcs.iter().map(|&(s, o)| y[self.offsets[s] + o])))
            .collect()
    }

    fn slice<'v>(&self, v: &'v [f64], s: usize) -> &'v [f64] {
        &v[self.offsets[s]..self.offsets[s] + self.systems[s].spec().n_out]
    }

    /// Outputs and output derivatives at `t_init` consistent with the
    /// wiring, plus the matching inputs and input derivatives.
    fn initialize(&self) -> (Vec<f64>, Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let t = self.cfg.t_init;
        let sweeps = self.systems.len() + 2;
        let mut u: Vec<DVector<f64>> = self.systems.iter().map(|s| s.spec().u_init.clone()).collect();
        let mut y = vec![0.0; self.n_y];
        for _ in 0..sweeps {
            for (i, sys) in self.systems.iter().enumerate() {
                let yi = sys.output(t, &sys.state().x, &u[i], Side::Right);
                y[self.offsets[i]..self.offsets[i] + yi.len()].copy_from_slice(yi.as_slice());
            }
            let next = self.wire(&y);
            if next == u {
                break;
            }
            u = next;
        }
        let mut u_dot: Vec<DVector<f64>> = u.iter().map(|v| DVector::zeros(v.len())).collect();
        let mut yd = vec![0.0; self.n_y];
        for _ in 0..sweeps {
            for (i, sys) in self.systems.iter().enumerate() {
                if !sys.capabilities().provides_output_derivatives {
                    continue;
                }
                let (_, d) = sys.output_jet(t, &sys.state().x, &u[i], &u_dot[i], Side::Right);
                yd[self.offsets[i]..self.offsets[i] + d.len()].copy_from_slice(d.as_slice());
            }
            let next = self.wire(&yd);
            if next == u_dot {
                break;
            }
            u_dot = next;
        }
        (y, yd, u, u_dot)
    }

    fn row(&self, t: f64, y: &[f64], iterations: usize) -> TraceRow {
        TraceRow {
            t,
            outputs: y.to_vec(),
            states: self.systems.iter().flat_map(|s| s.state().x.iter().copied().collect::<Vec<_>>()).collect(),
            iterations,
        }
    }

    fn inputs(&self, y0: &[f64], d0: &[f64], z: &[f64], t0: f64, t1: f64) -> Result<Vec<PolyVecSignal>> {
        let (v1, d1) = z.split_at(self.n_y);
        let (a0, b0, a1, b1) = (self.wire(y0), self.wire(d0), self.wire(v1), self.wire(d1));
        (0..self.systems.len()).map(|i| hermite_cubic(&a0[i], &b0[i], &a1[i], &b1[i], t0, t1)).collect()
    }

    /// One sweep of all systems for the coupling iterate `z`. Returns the
    /// new end values followed by the end derivatives.
    fn evaluate(&mut self, inputs: &[PolyVecSignal], snaps: &[Snapshot], y0: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>> {
        let dt = t1 - t0;
        let mut out = vec![0.0; 2 * self.n_y];
        for i in 0..self.systems.len() {
            let (y, yd) = match &self.estimators[i] {
                None => {
                    let sys = &mut self.systems[i];
                    sys.restore_snapshot(&snaps[i])?;
                    let r = sys.do_step(&inputs[i], t1, self.cfg.micro_steps)?;
                    (r.y_end, r.y_dot_end)
                }
                Some(est) => est.update3(&inputs[i])?,
            };
            let o = self.offsets[i];
            let yd = yd.unwrap_or_else(|| {
                let left = DVector::from_column_slice(self.slice(y0, i));
                (&y - left) / dt
            });
            out[o..o + y.len()].copy_from_slice(y.as_slice());
            out[self.n_y + o..self.n_y + o + y.len()].copy_from_slice(yd.as_slice());
        }
        Ok(out)
    }

    fn run(&mut self, trace: &mut Trace) -> std::result::Result<(), (CosimError, f64)> {
        let grid = self.cfg.grid();
        if grid.len() < 2 {
            return Ok(());
        }
        let (mut y0, mut d0, mut u_now, mut u_dot_now) = self.initialize();
        trace.rows.push(self.row(grid[0], &y0, 0));
        let mut guess: Vec<f64> = y0.iter().copied().chain(std::iter::repeat_n(0.0, self.n_y)).collect();

        for w in grid.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let fail = |e: CosimError| {
                let t = match e.last_time() {
                    Some(t) => t,
                    None => t0,
                };
                (e, t)
            };

            // Outputs that jump here restart from their right limit.
            for i in 0..self.systems.len() {
                let sys = &self.systems[i];
                if !sys.spec().is_breakpoint(t0) {
                    continue;
                }
                let (y, d) = sys.output_jet(t0, &sys.state().x, &u_now[i], &u_dot_now[i], Side::Right);
                let o = self.offsets[i];
                y0[o..o + y.len()].copy_from_slice(y.as_slice());
                if sys.capabilities().provides_output_derivatives {
                    d0[o..o + d.len()].copy_from_slice(d.as_slice());
                }
                guess[o..o + y.len()].copy_from_slice(y.as_slice());
                if let Some(est) = &mut self.estimators[i] {
                    est.reset_history();
                }
            }

            let mut snaps = Vec::new();
            for i in 0..self.systems.len() {
                let sys = &self.systems[i];
                match &mut self.estimators[i] {
                    None => snaps.push(sys.snapshot().map_err(fail)?),
                    Some(est) => {
                        let y_now = sys.output(t0, &sys.state().x, &u_now[i], Side::Right);
                        let lin = sys.make_linearization_point(&u_now[i], &y_now, self.ssr[i]).map_err(fail)?;
                        est.update1(lin).map_err(fail)?;
                        est.update2(t1 - t0, INPUT_DEGREE).map_err(fail)?;
                    }
                }
            }

            let scale: Vec<f64> = guess.iter().map(|v| 1.0 + v.abs()).collect();
            let scaled = |v: &[f64]| DVector::from_iterator(v.len(), v.iter().zip(&scale).map(|(a, s)| a / s));
            let mut z = guess.clone();
            let mut hist_z: Vec<DVector<f64>> = Vec::new();
            let mut hist_g: Vec<DVector<f64>> = Vec::new();
            let mut m = 0;
            let (applied, image, inputs) = loop {
                let inputs = self.inputs(&y0, &d0, &z, t0, t1).map_err(fail)?;
                let g = self.evaluate(&inputs, &snaps, &y0, t0, t1).map_err(fail)?;
                // Values and derivatives both shape the inputs, so both
                // have to settle. Without mixing `z` is the previous image,
                // so this compares successive evaluations; with mixing it
                // is the residual of the applied iterate.
                if m > 0 && relative_change(&z, &g) < self.cfg.epsilon {
                    break (z, g, inputs);
                }
                if m == self.cfg.max_iters {
                    return Err((CosimError::NonConvergence { t: t0, iterations: m }, t0));
                }
                m += 1;
                z = if self.cfg.anderson_depth == 0 {
                    g
                } else {
                    hist_z.push(scaled(&z));
                    hist_g.push(scaled(&g));
                    let keep = self.cfg.anderson_depth + 1;
                    if hist_z.len() > keep {
                        hist_z.remove(0);
                        hist_g.remove(0);
                    }
                    let next = anderson_update(&hist_z, &hist_g, self.cfg.anderson_depth);
                    next.iter().zip(&scale).map(|(a, s)| a * s).collect()
                };
            };

            let mut y_end = image[..self.n_y].to_vec();
            for i in 0..self.systems.len() {
                if self.estimators[i].is_some() {
                    let r = self.systems[i].do_step(&inputs[i], t1, self.cfg.micro_steps).map_err(fail)?;
                    let o = self.offsets[i];
                    y_end[o..o + r.y_end.len()].copy_from_slice(r.y_end.as_slice());
                    self.counted[i] += 1;
                }
                u_now[i] = inputs[i].eval(t1);
                u_dot_now[i] = inputs[i].eval_derivative(t1);
            }
            y0.copy_from_slice(&applied[..self.n_y]);
            d0.copy_from_slice(&applied[self.n_y..]);
            guess = image;
            trace.rows.push(self.row(t1, &y_end, m));
        }
        Ok(())
    }
}

/// Runs the coupled graph over the configured horizon.
pub fn run_cosimulation(graph: &CouplingGraph, cfg: &CosimConfig) -> std::result::Result<Trace, RunAbort> {
    let empty = |ssr: Vec<bool>| Trace {
        mode: cfg.mode,
        ssr,
        rows: Vec::new(),
    };
    let mut master = match Master::new(graph, cfg) {
        Ok(m) => m,
        Err(error) => {
            return Err(RunAbort {
                error,
                last_time: cfg.t_init,
                trace: empty(Vec::new()),
            })
        }
    };
    let mut trace = empty(master.ssr.clone());
    match master.run(&mut trace) {
        Ok(()) => Ok(trace),
        Err((error, last_time)) => Err(RunAbort { error, last_time, trace }),
    }
}

/// Like [`run_cosimulation`], also returning the final systems, whose
/// `genuine_steps` counters record how often each one integrated.
pub fn run_with_systems(graph: &CouplingGraph, cfg: &CosimConfig) -> std::result::Result<(Trace, Vec<System>), RunAbort> {
    let mut master = Master::new(graph, cfg).map_err(|error| RunAbort {
        error,
        last_time: cfg.t_init,
        trace: Trace {
            mode: cfg.mode,
            ssr: Vec::new(),
            rows: Vec::new(),
        },
    })?;
    let mut trace = Trace {
        mode: cfg.mode,
        ssr: master.ssr.clone(),
        rows: Vec::new(),
    };
    match master.run(&mut trace) {
        Ok(()) => Ok((trace, master.systems)),
        Err((error, last_time)) => Err(RunAbort { error, last_time, trace }),
    }
}
