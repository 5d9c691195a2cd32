//! Co-simulation systems: an ODE `x' = f(t, x, u)`, `y = g(t, x, u)` wrapped
//! with a fixed-step RK4 micro-solver, snapshot/restore, and access to the
//! quantities the step estimator needs (state, state derivative, Jacobians).

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CosimError, Result};
use crate::signals::PolyVecSignal;

pub type VecFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Analytic partial derivatives of `f` and `g`.
#[derive(Clone)]
pub struct Jacobians {
    pub dfdx: MatFn,
    pub dfdu: MatFn,
    pub dgdx: MatFn,
    pub dgdu: MatFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapabilityFlags {
    pub supports_polynomial_inputs: bool,
    pub exposes_states: bool,
    pub exposes_state_derivatives: bool,
    pub provides_directional_derivatives: bool,
    pub provides_output_derivatives: bool,
    pub supports_rollback: bool,
}

impl CapabilityFlags {
    pub const ALL: Self = Self {
        supports_polynomial_inputs: true,
        exposes_states: true,
        exposes_state_derivatives: true,
        provides_directional_derivatives: true,
        provides_output_derivatives: true,
        supports_rollback: true,
    };
}

impl Default for CapabilityFlags {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub n_st: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub f: VecFn,
    pub g: VecFn,
    pub x_init: DVector<f64>,
    pub u_init: DVector<f64>,
    pub jacobians: Option<Jacobians>,
    pub capabilities: CapabilityFlags,
    /// Times at which `g` may jump. A step ending on one of them reports the
    /// output's left limit; a step starting on one sees the right limit.
    pub output_breakpoints: Vec<f64>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n_st", &self.n_st)
            .field("n_in", &self.n_in)
            .field("n_out", &self.n_out)
            .field("x_init", &self.x_init)
            .field("u_init", &self.u_init)
            .field("analytic_jacobians", &self.jacobians.is_some())
            .field("capabilities", &self.capabilities)
            .field("output_breakpoints", &self.output_breakpoints)
            .finish()
    }
}

impl SystemSpec {
    pub fn new<F, G>(name: &str, x_init: DVector<f64>, u_init: DVector<f64>, n_out: usize, f: F, g: G) -> Self
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            n_st: x_init.len(),
            n_in: u_init.len(),
            n_out,
            f: Arc::new(f),
            g: Arc::new(g),
            x_init,
            u_init,
            jacobians: None,
            capabilities: CapabilityFlags::ALL,
            output_breakpoints: Vec::new(),
        }
    }

    pub fn with_jacobians(mut self, jac: Jacobians) -> Self {
        self.jacobians = Some(jac);
        self
    }

    pub fn with_capabilities(mut self, caps: CapabilityFlags) -> Self {
        self.capabilities = caps;
        self
    }

    pub fn with_breakpoints(mut self, bps: Vec<f64>) -> Self {
        self.output_breakpoints = bps;
        self
    }

    /// Drops the analytic Jacobians so finite differences are used instead.
    pub fn without_jacobians(mut self) -> Self {
        self.jacobians = None;
        self
    }

    fn breakpoint_near(&self, t: f64) -> Option<f64> {
        self.output_breakpoints
            .iter()
            .copied()
            .find(|&bp| (t - bp).abs() <= 1e-9 * bp.abs().max(1.0))
    }

    /// True when `t` coincides with an output breakpoint.
    pub fn is_breakpoint(&self, t: f64) -> bool {
        self.breakpoint_near(t).is_some()
    }
}

/// Which one-sided limit of `g` to take at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: DVector<f64>,
    pub t_reached: f64,
    pub last_inputs: Option<PolyVecSignal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub x_end: DVector<f64>,
    pub y_end: DVector<f64>,
    pub y_dot_end: Option<DVector<f64>>,
}

/// Opaque rollback token.
#[derive(Debug, Clone)]
pub struct Snapshot {
    system_id: u64,
    state: SystemState,
}

/// Everything captured at a reached time for the step estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub t: f64,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    /// `None` when state derivatives are not exposed.
    pub f: Option<DVector<f64>>,
    /// `f - (A x + B u)`, forced to zero in the degraded mode.
    pub f_c: DVector<f64>,
    /// `y - (C x + D u)`.
    pub y_c: DVector<f64>,
    pub ssr: bool,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// A live system: its spec plus the mutable state advanced by `do_step`.
#[derive(Debug, Clone)]
pub struct System {
    spec: SystemSpec,
    state: SystemState,
    id: u64,
    genuine_steps: usize,
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Central-difference Jacobian of `h(z)` with per-component step
/// `1e-6 * max(1, |z_i|)`.
fn fd_jacobian(z: &DVector<f64>, mut h: impl FnMut(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let mut cols = Vec::with_capacity(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        let hi = 1e-6 * z[i].abs().max(1.0);
        zp[i] = z[i] + hi;
        let plus = h(&zp);
        zp[i] = z[i] - hi;
        let minus = h(&zp);
        zp[i] = z[i];
        cols.push((plus - minus) / (2.0 * hi));
    }
    if cols.is_empty() {
        return DMatrix::zeros(h(z).len(), 0);
    }
    DMatrix::from_columns(&cols)
}

impl System {
    pub fn new(spec: SystemSpec, t_init: f64) -> Result<Self> {
        if spec.x_init.len() != spec.n_st || spec.u_init.len() != spec.n_in {
            return Err(CosimError::Usage(format!("system `{}`: x_init/u_init sizes do not match n_st/n_in", spec.name)));
        }
        let y = (spec.g)(t_init, &spec.x_init, &spec.u_init);
        if y.len() != spec.n_out {
            return Err(CosimError::Usage(format!(
                "system `{}`: g returns {} values, expected {}",
                spec.name,
                y.len(),
                spec.n_out
            )));
        }
        let state = SystemState {
            x: spec.x_init.clone(),
            t_reached: t_init,
            last_inputs: None,
        };
        Ok(Self {
            spec,
            state,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            genuine_steps: 0,
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn t_reached(&self) -> f64 {
        self.state.t_reached
    }

    pub fn capabilities(&self) -> CapabilityFlags {
        self.spec.capabilities
    }

    /// Number of `do_step` integrations performed so far.
    pub fn genuine_steps(&self) -> usize {
        self.genuine_steps
    }

    fn missing(&self, capability: &'static str) -> CosimError {
        CosimError::Capability {
            system: self.spec.name.clone(),
            capability,
        }
    }

    fn output_time(&self, t: f64, side: Side) -> f64 {
        match (self.spec.breakpoint_near(t), side) {
            (Some(bp), Side::Left) => t.min(bp).next_down(),
            (Some(bp), Side::Right) => t.max(bp),
            (None, _) => t,
        }
    }

    /// `g` at `t`, taking the requested one-sided limit at breakpoints.
    pub fn output(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>, side: Side) -> DVector<f64> {
        (self.spec.g)(self.output_time(t, side), x, u)
    }

    /// Output value and time derivative along `x' = f`, `u' = u_dot`.
    pub fn output_jet(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        u_dot: &DVector<f64>,
        side: Side,
    ) -> (DVector<f64>, DVector<f64>) {
        let te = self.output_time(t, side);
        let g = &self.spec.g;
        let y = g(te, x, u);
        let fx = (self.spec.f)(t, x, u);
        let mut ydot = match &self.spec.jacobians {
            Some(j) => (j.dgdx)(te, x, u) * &fx + (j.dgdu)(te, x, u) * u_dot,
            None => {
                let scale = x.amax().max(u.amax()).max(1.0);
                let dir = fx.amax().max(u_dot.amax());
                if dir == 0.0 {
                    DVector::zeros(y.len())
                } else {
                    let h = 1e-6 * scale / dir;
                    let plus = g(te, &(x + &fx * h), &(u + u_dot * h));
                    let minus = g(te, &(x - &fx * h), &(u - u_dot * h));
                    (plus - minus) / (2.0 * h)
                }
            }
        };
        // No standard interface exposes dg/dt, so it is differenced on the
        // side of the limit being taken.
        let h = 1e-7 * te.abs().max(1.0);
        ydot += match side {
            Side::Left => (&y - g(te - h, x, u)) / h,
            Side::Right => (g(te + h, x, u) - &y) / h,
        };
        (y, ydot)
    }

    /// Advances the state to `t_end` with `micro_steps` RK4 steps.
    pub fn do_step(&mut self, u: &PolyVecSignal, t_end: f64, micro_steps: usize) -> Result<StepResult> {
        let t0 = self.state.t_reached;
        if !(t_end > t0) {
            return Err(CosimError::InvalidStep { t0, t1: t_end });
        }
        if micro_steps == 0 {
            return Err(CosimError::Usage("micro_steps must be positive".into()));
        }
        if u.n_sig() != self.spec.n_in {
            return Err(CosimError::Usage(format!(
                "system `{}` expects {} inputs, got {}",
                self.spec.name,
                self.spec.n_in,
                u.n_sig()
            )));
        }
        let held;
        let u = if self.spec.capabilities.supports_polynomial_inputs {
            u
        } else {
            held = PolyVecSignal::constant(&u.eval(t0));
            &held
        };
        let f = &self.spec.f;
        let h = (t_end - t0) / micro_steps as f64;
        let mut x = self.state.x.clone();
        let mut t = t0;
        for i in 0..micro_steps {
            let ti = t0 + i as f64 * h;
            let tn = if i + 1 == micro_steps { t_end } else { t0 + (i + 1) as f64 * h };
            let tm = ti + 0.5 * h;
            let um = u.eval(tm);
            let k1 = f(ti, &x, &u.eval(ti));
            let k2 = f(tm, &(&x + &k1 * (0.5 * h)), &um);
            let k3 = f(tm, &(&x + &k2 * (0.5 * h)), &um);
            let k4 = f(tn, &(&x + &k3 * h), &u.eval(tn));
            let xn = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if !all_finite(&xn) {
                return Err(CosimError::Divergence { last_time: t });
            }
            x = xn;
            t = tn;
        }
        let u_end = u.eval(t_end);
        let (y_end, y_dot_end) = if self.spec.capabilities.provides_output_derivatives {
            let (y, yd) = self.output_jet(t_end, &x, &u_end, &u.eval_derivative(t_end), Side::Left);
            (y, Some(yd))
        } else {
            (self.output(t_end, &x, &u_end, Side::Left), None)
        };
        if !all_finite(&y_end) {
            return Err(CosimError::Divergence { last_time: t0 });
        }
        self.state = SystemState {
            x: x.clone(),
            t_reached: t_end,
            last_inputs: Some(u.clone()),
        };
        self.genuine_steps += 1;
        Ok(StepResult { x_end: x, y_end, y_dot_end })
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        if !self.spec.capabilities.supports_rollback {
            return Err(self.missing("supports_rollback"));
        }
        Ok(Snapshot {
            system_id: self.id,
            state: self.state.clone(),
        })
    }

    pub fn restore_snapshot(&mut self, token: &Snapshot) -> Result<()> {
        if token.system_id != self.id {
            return Err(CosimError::Usage(format!(
                "snapshot belongs to another system than `{}`",
                self.spec.name
            )));
        }
        self.state = token.state.clone();
        Ok(())
    }

    /// Current state and `f(t_reached, x, u_now)`.
    pub fn state_and_derivative(&self, u_now: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let caps = self.spec.capabilities;
        if !caps.exposes_states {
            return Err(self.missing("exposes_states"));
        }
        if !caps.exposes_state_derivatives {
            return Err(self.missing("exposes_state_derivatives"));
        }
        let x = self.state.x.clone();
        let f = (self.spec.f)(self.state.t_reached, &x, u_now);
        Ok((x, f))
    }

    /// `(A, B, C, D)` at `(t_reached, x, u_now)`. The output Jacobians use
    /// the right limit of `g`, as they describe the step about to start.
    pub fn directional_derivatives(
        &self,
        u_now: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        if !self.spec.capabilities.provides_directional_derivatives {
            return Err(self.missing("provides_directional_derivatives"));
        }
        let t = self.state.t_reached;
        let tg = self.output_time(t, Side::Right);
        let x = &self.state.x;
        if let Some(j) = &self.spec.jacobians {
            return Ok(((j.dfdx)(t, x, u_now), (j.dfdu)(t, x, u_now), (j.dgdx)(tg, x, u_now), (j.dgdu)(tg, x, u_now)));
        }
        let f = &self.spec.f;
        let g = &self.spec.g;
        let a = fd_jacobian(x, |xp| f(t, xp, u_now));
        let b = fd_jacobian(u_now, |up| f(t, x, up));
        let c = fd_jacobian(x, |xp| g(tg, xp, u_now));
        let d = fd_jacobian(u_now, |up| g(tg, x, up));
        Ok((a, b, c, d))
    }

    pub fn make_linearization_point(
        &self,
        u_now: &DVector<f64>,
        y_now: &DVector<f64>,
        ssr: bool,
    ) -> Result<LinearizationPoint> {
        if !self.spec.capabilities.exposes_states {
            return Err(self.missing("exposes_states"));
        }
        let (a, b, c, d) = self.directional_derivatives(u_now)?;
        let x = self.state.x.clone();
        let (f, f_c) = if ssr {
            let f = self.state_and_derivative(u_now).ok().map(|(_, f)| f);
            (f, DVector::zeros(self.spec.n_st))
        } else {
            let (_, f) = self.state_and_derivative(u_now)?;
            let f_c = &f - (&a * &x + &b * u_now);
            (Some(f), f_c)
        };
        let y_c = y_now - (&c * &x + &d * u_now);
        Ok(LinearizationPoint {
            t: self.state.t_reached,
            a,
            b,
            c,
            d,
            x,
            u: u_now.clone(),
            y: y_now.clone(),
            f,
            f_c,
            y_c,
            ssr,
        })
    }
}
