//! Benchmark systems: the time-only "tough" case, two bodies coupled by a
//! spring, and Lotka-Volterra prey/predator (classic and with a
//! time-varying predation factor), plus the isolated-prey step tests.
//!
//! Units are SI throughout; the mechanical constants are given in kN/m in
//! most descriptions of this benchmark.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::orchestrator::Wire;
use crate::signals::PolyVecSignal;
use crate::systems::{Jacobians, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    ToughTimeOnly,
    MechTwoBody,
    LvClassic,
    LvTimeModified,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::ToughTimeOnly, ModelId::MechTwoBody, ModelId::LvClassic, ModelId::LvTimeModified];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::ToughTimeOnly => "TOUGH_TIME_ONLY",
            ModelId::MechTwoBody => "MECH_TWO_BODY",
            ModelId::LvClassic => "LV_CLASSIC",
            ModelId::LvTimeModified => "LV_TIME_MODIFIED",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

pub type MonoRhs = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// The coupled problem written as a single ODE, used as ground truth.
#[derive(Clone)]
pub struct Monolithic {
    pub x0: Vec<f64>,
    pub rhs: MonoRhs,
    /// Times where the right-hand side switches; integration never steps
    /// across them and evaluates the left limit on arrival.
    pub breakpoints: Vec<f64>,
}

impl fmt::Debug for Monolithic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Monolithic")
            .field("x0", &self.x0)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub id: ModelId,
    pub systems: Vec<SystemSpec>,
    pub wires: Vec<Wire>,
    pub monolithic: Monolithic,
    pub t_init: f64,
    pub t_end: f64,
    /// Indices into the concatenated state vector (systems in catalog
    /// order) on which convergence errors are measured.
    pub probes: Vec<usize>,
}

pub fn catalog(id: ModelId) -> Model {
    match id {
        ModelId::ToughTimeOnly => tough_model(),
        ModelId::MechTwoBody => make_mechanical(),
        ModelId::LvClassic => make_lotka_volterra(false),
        ModelId::LvTimeModified => make_lotka_volterra(true),
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn m(r: usize, c: usize, x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, x)
}

fn constant_jac(r: usize, c: usize, vals: &'static [f64]) -> crate::systems::MatFn {
    Arc::new(move |_, _, _| m(r, c, vals))
}

/// `x' = a(t)`, `y = x + b(t)`, with one input that nothing reads.
pub fn make_tough<A, B>(a: A, b: B, x0: f64) -> SystemSpec
where
    A: Fn(f64) -> f64 + Send + Sync + 'static,
    B: Fn(f64) -> f64 + Send + Sync + 'static,
{
    SystemSpec::new("tough", v(&[x0]), v(&[0.0]), 1, move |t, _, _| v(&[a(t)]), move |t, x, _| v(&[x[0] + b(t)])).with_jacobians(
        Jacobians {
            dfdx: constant_jac(1, 1, &[0.0]),
            dfdu: constant_jac(1, 1, &[0.0]),
            dgdx: constant_jac(1, 1, &[1.0]),
            dgdu: constant_jac(1, 1, &[0.0]),
        },
    )
}

fn tough_model() -> Model {
    Model {
        id: ModelId::ToughTimeOnly,
        systems: vec![make_tough(f64::cos, f64::sin, 0.0)],
        // The unused input has to be wired to something; its own output is
        // harmless since nothing depends on it.
        wires: vec![Wire::new((0, 0), (0, 0))],
        monolithic: Monolithic {
            x0: vec![0.0],
            rhs: Arc::new(|t, _, dz| dz[0] = t.cos()),
            breakpoints: vec![],
        },
        t_init: 0.0,
        t_end: 1.0,
        probes: vec![0],
    }
}

/// Physical constants of the two-body benchmark, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub m1: f64,
    pub m2: f64,
    /// From this time on the right body reports a fixed force.
    pub switch_time: f64,
    pub switched_force: f64,
}

impl Default for MechParams {
    fn default() -> Self {
        Self {
            c1: 1000.0,
            c2: 1000.0,
            c3: 1000.0,
            d1: 1000.0,
            d2: 0.0,
            d3: 1000.0,
            m1: 10000.0,
            m2: 10000.0,
            switch_time: 100.0,
            switched_force: -1000.0,
        }
    }
}

pub fn make_mechanical() -> Model {
    make_mechanical_with(MechParams::default())
}

pub fn make_mechanical_with(p: MechParams) -> Model {
    let MechParams { c1, c2, c3, d1, d2, d3, m1, m2, switch_time, switched_force } = p;
    let x1_0 = -1.0;

    let left = SystemSpec::new(
        "left",
        v(&[x1_0, 0.0]),
        v(&[c2 * x1_0]),
        2,
        move |_, x, u| v(&[x[1], (-c1 * x[0] - d1 * x[1] - u[0]) / m1]),
        |_, x, _| x.clone(),
    )
    .with_jacobians(Jacobians {
        dfdx: Arc::new(move |_, _, _| m(2, 2, &[0.0, 1.0, -c1 / m1, -d1 / m1])),
        dfdu: Arc::new(move |_, _, _| m(2, 1, &[0.0, -1.0 / m1])),
        dgdx: Arc::new(|_, _, _| DMatrix::identity(2, 2)),
        dgdu: Arc::new(|_, _, _| DMatrix::zeros(2, 1)),
    });

    let active = move |t: f64| t < switch_time;
    let right = SystemSpec::new(
        "right",
        v(&[0.0, 0.0]),
        v(&[x1_0, 0.0]),
        1,
        move |_, x, u| v(&[x[1], (-(c2 + c3) * x[0] - (d2 + d3) * x[1] + c2 * u[0] + d2 * u[1]) / m2]),
        move |t, x, u| {
            if active(t) {
                v(&[-c2 * x[0] - d2 * x[1] + c2 * u[0] + d2 * u[1]])
            } else {
                v(&[switched_force])
            }
        },
    )
    .with_jacobians(Jacobians {
        dfdx: Arc::new(move |_, _, _| m(2, 2, &[0.0, 1.0, -(c2 + c3) / m2, -(d2 + d3) / m2])),
        dfdu: Arc::new(move |_, _, _| m(2, 2, &[0.0, 0.0, c2 / m2, d2 / m2])),
        dgdx: Arc::new(move |t, _, _| if active(t) { m(1, 2, &[-c2, -d2]) } else { DMatrix::zeros(1, 2) }),
        dgdu: Arc::new(move |t, _, _| if active(t) { m(1, 2, &[c2, d2]) } else { DMatrix::zeros(1, 2) }),
    })
    .with_breakpoints(vec![switch_time]);

    let rhs: MonoRhs = Arc::new(move |t, z, dz| {
        let force = if active(t) { c2 * (z[0] - z[2]) + d2 * (z[1] - z[3]) } else { switched_force };
        dz[0] = z[1];
        dz[1] = (-c1 * z[0] - d1 * z[1] - force) / m1;
        dz[2] = z[3];
        dz[3] = (-(c2 + c3) * z[2] - (d2 + d3) * z[3] + c2 * z[0] + d2 * z[1]) / m2;
    });

    Model {
        id: ModelId::MechTwoBody,
        systems: vec![left, right],
        wires: vec![
            Wire::new((0, 0), (1, 0)),
            Wire::new((0, 1), (1, 1)),
            Wire::new((1, 0), (0, 0)),
        ],
        monolithic: Monolithic {
            x0: vec![x1_0, 0.0, 0.0, 0.0],
            rhs,
            breakpoints: vec![switch_time],
        },
        t_init: 0.0,
        t_end: 200.0,
        probes: vec![2],
    }
}

/// Lotka-Volterra constants.
pub const LV_ALPHA: f64 = 0.67;
pub const LV_BETA: f64 = 1.33;
pub const LV_GAMMA: f64 = 1.0;
pub const LV_DELTA: f64 = 1.0;

/// Time-varying predation factor of the modified model.
pub fn predation_factor(t: f64) -> f64 {
    0.55 + 0.45 * (2.0 * PI * t / 2.4).sin()
}

/// Prey `p' = p (alpha - s(t) beta u)`, `y = p`, with `s = 1` when not
/// modified.
pub fn make_prey(modified: bool, p0: f64, u0: f64) -> SystemSpec {
    let s = move |t: f64| if modified { predation_factor(t) } else { 1.0 };
    SystemSpec::new(
        "prey",
        v(&[p0]),
        v(&[u0]),
        1,
        move |t, x, u| v(&[x[0] * (LV_ALPHA - s(t) * LV_BETA * u[0])]),
        |_, x, _| x.clone(),
    )
    .with_jacobians(Jacobians {
        dfdx: Arc::new(move |t, _, u| m(1, 1, &[LV_ALPHA - s(t) * LV_BETA * u[0]])),
        dfdu: Arc::new(move |t, x, _| m(1, 1, &[-s(t) * LV_BETA * x[0]])),
        dgdx: constant_jac(1, 1, &[1.0]),
        dgdu: constant_jac(1, 1, &[0.0]),
    })
}

pub fn make_predator(p0: f64, u0: f64) -> SystemSpec {
    SystemSpec::new(
        "predator",
        v(&[p0]),
        v(&[u0]),
        1,
        |_, x, u| v(&[x[0] * (LV_DELTA * u[0] - LV_GAMMA)]),
        |_, x, _| x.clone(),
    )
    .with_jacobians(Jacobians {
        dfdx: Arc::new(|_, _, u| m(1, 1, &[LV_DELTA * u[0] - LV_GAMMA])),
        dfdu: Arc::new(|_, x, _| m(1, 1, &[LV_DELTA * x[0]])),
        dgdx: constant_jac(1, 1, &[1.0]),
        dgdu: constant_jac(1, 1, &[0.0]),
    })
}

pub fn make_lotka_volterra(modified: bool) -> Model {
    let s = move |t: f64| if modified { predation_factor(t) } else { 1.0 };
    let rhs: MonoRhs = Arc::new(move |t, z, dz| {
        dz[0] = z[0] * (LV_ALPHA - s(t) * LV_BETA * z[1]);
        dz[1] = z[1] * (LV_DELTA * z[0] - LV_GAMMA);
    });
    Model {
        id: if modified { ModelId::LvTimeModified } else { ModelId::LvClassic },
        systems: vec![make_prey(modified, 1.0, 1.0), make_predator(1.0, 1.0)],
        wires: vec![Wire::new((1, 0), (0, 0)), Wire::new((0, 0), (1, 0))],
        monolithic: Monolithic {
            x0: vec![1.0, 1.0],
            rhs,
            breakpoints: vec![],
        },
        t_init: 0.0,
        t_end: 20.0,
        probes: vec![0, 1],
    }
}

/// A lone prey driven by a known polynomial predator population.
#[derive(Debug, Clone)]
pub struct IsolatedPrey {
    pub spec: SystemSpec,
    pub stimulus: PolyVecSignal,
    pub modified: bool,
}

pub fn isolated_prey(modified: bool) -> IsolatedPrey {
    let coeffs: &[f64] = if modified {
        &[0.8, -0.448, 0.5173559185]
    } else {
        &[0.8, -0.16, -0.11008]
    };
    IsolatedPrey {
        spec: make_prey(modified, 0.8, 0.8),
        stimulus: PolyVecSignal::scalar(coeffs).expect("static stimulus"),
        modified,
    }
}
