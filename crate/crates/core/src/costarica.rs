//! Rollback-free step estimator.
//!
//! A system linearized at the start of a step, `x' = A x + B u + f_C`,
//! `y = C x + D u + y_C`, has the Laplace-domain end-of-step output
//!
//! ```text
//! Y = G U + P x~ + R f_C,   G = C (sI - A)^-1 B + D,  P = C (sI - A)^-1,  R = P / s
//! ```
//!
//! With a polynomial input `u(t) = sum_k xi_k t^k` each term inverts element
//! by element, which gives the contraction tensors of [`EstimatorTensors`].
//! The control part `y_C` is forecast separately from its history.
//!
//! Work is split into three stages so that each is redone only when its
//! inputs change: [`update1`] per time step, [`update2`] per step size,
//! [`estimate`] per coupling iteration.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use twofloat::TwoFloat;

use crate::error::{CosimError, Result};
use crate::laplace::{inverse_laplace_rational_dd, stehfest_weights, StehfestWeights};
use crate::rational::{laplace_ensemble, LaplaceEnsemble, RationalFn};
use crate::signals::{build_xi, PolyVecSignal, XiMatrix};
use crate::systems::LinearizationPoint;

/// Dense `n0 x n1 x n2` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Self {
            dims: (n0, n1, n2),
            data: vec![0.0; n0 * n1 * n2],
        }
    }

    pub fn from_fn(n0: usize, n1: usize, n2: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n0, n1, n2);
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    t.data[(i * n1 + j) * n2 + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (_, n1, n2) = self.dims;
        self.data[(i * n1 + j) * n2 + k]
    }

    /// `(sum_j sum_k T(i, j, k) xi(j, k))_i`.
    pub fn contract(&self, xi: &DMatrix<f64>) -> Result<DVector<f64>> {
        let (n0, n1, n2) = self.dims;
        if xi.nrows() != n1 || xi.ncols() != n2 {
            return Err(CosimError::Usage(format!(
                "cannot contract a {n0}x{n1}x{n2} tensor with a {}x{} coefficient matrix",
                xi.nrows(),
                xi.ncols()
            )));
        }
        Ok(DVector::from_fn(n0, |i, _| {
            let mut acc = 0.0;
            for j in 0..n1 {
                for k in 0..n2 {
                    acc += self.get(i, j, k) * xi[(j, k)];
                }
            }
            acc
        }))
    }
}

/// Inverse-Laplace-evaluated operators for one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTensors {
    pub dt: f64,
    pub g_v: Tensor3,
    pub p_v: DMatrix<f64>,
    pub r_v: DMatrix<f64>,
    pub g_d: Option<Tensor3>,
    pub p_d: Option<DMatrix<f64>>,
    pub r_d: Option<DMatrix<f64>>,
}

impl EstimatorTensors {
    pub fn degree(&self) -> usize {
        self.g_v.dims().2 - 1
    }
}

pub fn update1(lin: &LinearizationPoint) -> Result<LaplaceEnsemble> {
    laplace_ensemble(&lin.a, &lin.b, &lin.c, &lin.d)
}

/// Value at `dt` and, optionally, the time derivative by the second-order
/// Richardson formula `(X(dt - h) - 4 X(dt - h/2) + 3 X(dt)) / h`.
fn invert_with_derivative(
    r: &RationalFn,
    dt: f64,
    h: Option<f64>,
    w: &StehfestWeights,
) -> Result<(f64, Option<f64>)> {
    let v = inverse_laplace_rational_dd(r, dt, w)?;
    let d = match h {
        Some(h) => {
            let a = inverse_laplace_rational_dd(r, dt - h, w)?;
            let b = inverse_laplace_rational_dd(r, dt - 0.5 * h, w)?;
            let num: TwoFloat = a - b * 4.0 + v * 3.0;
            Some((num / h).hi())
        }
        None => None,
    };
    Ok((v.hi(), d))
}

pub fn update2(
    ens: &LaplaceEnsemble,
    dt: f64,
    n: usize,
    w: &StehfestWeights,
    need_derivatives: bool,
    rich_factor: f64,
) -> Result<EstimatorTensors> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CosimError::Usage(format!("step size must be positive, got {dt}")));
    }
    if !(rich_factor > 0.0 && rich_factor < 1.0) {
        return Err(CosimError::Usage(format!("rich_factor must lie in (0, 1), got {rich_factor}")));
    }
    let h = need_derivatives.then_some(rich_factor * dt);
    let (n_out, n_in) = (ens.g.nrows(), ens.g.ncols());
    let n_st = ens.p.ncols();

    let mut g_v = Tensor3::zeros(n_out, n_in, n + 1);
    let mut g_d = Tensor3::zeros(n_out, n_in, n + 1);
    for i in 0..n_out {
        for j in 0..n_in {
            for k in 0..=n {
                let fused = ens.g.get(i, j).times_monomial_transform(k);
                let (v, d) = invert_with_derivative(&fused, dt, h, w)?;
                let idx = (i * n_in + j) * (n + 1) + k;
                g_v.data[idx] = v;
                g_d.data[idx] = d.unwrap_or(0.0);
            }
        }
    }
    let mut p_v = DMatrix::zeros(n_out, n_st);
    let mut p_d = DMatrix::zeros(n_out, n_st);
    let mut r_v = DMatrix::zeros(n_out, n_st);
    let mut r_d = DMatrix::zeros(n_out, n_st);
    for i in 0..n_out {
        for j in 0..n_st {
            let (v, d) = invert_with_derivative(ens.p.get(i, j), dt, h, w)?;
            p_v[(i, j)] = v;
            p_d[(i, j)] = d.unwrap_or(0.0);
            let (v, d) = invert_with_derivative(ens.r.get(i, j), dt, h, w)?;
            r_v[(i, j)] = v;
            r_d[(i, j)] = d.unwrap_or(0.0);
        }
    }
    Ok(EstimatorTensors {
        dt,
        g_v,
        p_v,
        r_v,
        g_d: need_derivatives.then_some(g_d),
        p_d: need_derivatives.then_some(p_d),
        r_d: need_derivatives.then_some(r_d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlPolicy {
    Zoh,
    Foh,
    /// Per coordinate, the order 0, 1 or 2 extrapolant that best predicted
    /// the latest point from the ones before it.
    #[default]
    Flex,
}

impl ControlPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ControlPolicy::Zoh => "ZOH",
            ControlPolicy::Foh => "FOH",
            ControlPolicy::Flex => "FLEX",
        }
    }
}

impl std::str::FromStr for ControlPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [ControlPolicy::Zoh, ControlPolicy::Foh, ControlPolicy::Flex]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown control policy `{s}`"))
    }
}

/// Recent `(t, y_C)` pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlHistory {
    capacity: usize,
    entries: VecDeque<(f64, DVector<f64>)>,
}

impl Default for ControlHistory {
    fn default() -> Self {
        Self::new(4)
    }
}

impl ControlHistory {
    /// Four points are enough to score a quadratic extrapolant.
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(3),
            entries: VecDeque::new(),
        }
    }

    pub fn push(&mut self, t: f64, y_c: DVector<f64>) -> Result<()> {
        if let Some((last, _)) = self.entries.back() {
            if !(t > *last) {
                return Err(CosimError::Usage(format!(
                    "control history times must increase: {t} after {last}"
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((t, y_c));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&(f64, DVector<f64>)> {
        self.entries.back()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Value and derivative at `t` of the Lagrange polynomial through `pts`.
fn lagrange(pts: &[(f64, f64)], t: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut deriv = 0.0;
    for (i, &(ti, yi)) in pts.iter().enumerate() {
        let mut li = 1.0;
        let mut dli = 0.0;
        for (j, &(tj, _)) in pts.iter().enumerate() {
            if j == i {
                continue;
            }
            let den = ti - tj;
            dli = dli * (t - tj) / den + li / den;
            li *= (t - tj) / den;
        }
        value += yi * li;
        deriv += yi * dli;
    }
    (value, deriv)
}

fn flex_order(pts: &[(f64, f64)]) -> usize {
    // pts is newest first.
    let (t_n, y_n) = pts[0];
    let older = &pts[1..];
    let scale = pts.iter().fold(1.0f64, |m, p| m.max(p.1.abs()));
    let tol = 1e-12 * scale;
    let mut best = (0, f64::INFINITY);
    for q in 0..=2usize {
        if older.len() < q + 1 {
            break;
        }
        let (pred, _) = lagrange(&older[..=q], t_n);
        let err = (pred - y_n).abs();
        if err + tol < best.1 {
            best = (q, err);
        }
    }
    best.0
}

pub fn control_predict(
    hist: &ControlHistory,
    t_next: f64,
    policy: ControlPolicy,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (t_last, y_last) = hist
        .last()
        .ok_or_else(|| CosimError::Usage("control prediction from an empty history".into()))?;
    if !(t_next > *t_last) {
        return Err(CosimError::Usage(format!(
            "prediction time {t_next} must follow the last history time {t_last}"
        )));
    }
    let m = y_last.len();
    let mut value = y_last.clone();
    let mut deriv = DVector::zeros(m);
    if hist.len() == 1 || policy == ControlPolicy::Zoh {
        return Ok((value, deriv));
    }
    for c in 0..m {
        let pts: Vec<(f64, f64)> = hist.entries.iter().rev().map(|(t, y)| (*t, y[c])).collect();
        let order = match policy {
            ControlPolicy::Foh => 1,
            ControlPolicy::Flex => flex_order(&pts),
            ControlPolicy::Zoh => 0,
        };
        if order > 0 {
            let (v, d) = lagrange(&pts[..=order], t_next);
            value[c] = v;
            deriv[c] = d;
        }
    }
    Ok((value, deriv))
}

/// `y = G_V . xi + P_V x~ + R_V f_C + y_C`, and the same with the derivative
/// tensors when they were computed.
pub fn estimate(
    tens: &EstimatorTensors,
    xi: &XiMatrix,
    x_tilde: &DVector<f64>,
    f_c: &DVector<f64>,
    yc_hat: &DVector<f64>,
    yc_dot_hat: &DVector<f64>,
) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
    let n_out = tens.p_v.nrows();
    if x_tilde.len() != tens.p_v.ncols() || f_c.len() != tens.r_v.ncols() || yc_hat.len() != n_out || yc_dot_hat.len() != n_out
    {
        return Err(CosimError::Usage("estimate: vector sizes do not match the tensors".into()));
    }
    let y = tens.g_v.contract(&xi.entries)? + &tens.p_v * x_tilde + &tens.r_v * f_c + yc_hat;
    let y_dot = match (&tens.g_d, &tens.p_d, &tens.r_d) {
        (Some(g), Some(p), Some(r)) => Some(g.contract(&xi.entries)? + p * x_tilde + r * f_c + yc_dot_hat),
        _ => None,
    };
    Ok((y, y_dot))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub stehfest_n: usize,
    pub rich_factor: f64,
    pub policy: ControlPolicy,
    pub need_derivatives: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            stehfest_n: crate::laplace::DEFAULT_ORDER,
            rich_factor: 0.2,
            policy: ControlPolicy::Flex,
            need_derivatives: true,
        }
    }
}

/// One system's estimator, holding the artifacts of the three stages.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    weights: &'static StehfestWeights,
    history: ControlHistory,
    lin: Option<LinearizationPoint>,
    ensemble: Option<LaplaceEnsemble>,
    tensors: Option<EstimatorTensors>,
    control: Option<(DVector<f64>, DVector<f64>)>,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        Ok(Self {
            weights: stehfest_weights(cfg.stehfest_n)?,
            cfg,
            history: ControlHistory::default(),
            lin: None,
            ensemble: None,
            tensors: None,
            control: None,
        })
    }

    pub fn linearization(&self) -> Option<&LinearizationPoint> {
        self.lin.as_ref()
    }

    pub fn tensors(&self) -> Option<&EstimatorTensors> {
        self.tensors.as_ref()
    }

    pub fn history(&self) -> &ControlHistory {
        &self.history
    }

    /// Forgets the control-part history, e.g. across a discontinuity.
    pub fn reset_history(&mut self) {
        self.history.clear();
    }

    /// New time step: transfer matrices from a fresh linearization.
    pub fn update1(&mut self, lin: LinearizationPoint) -> Result<()> {
        self.ensemble = Some(update1(&lin)?);
        self.history.push(lin.t, lin.y_c.clone())?;
        self.lin = Some(lin);
        self.tensors = None;
        self.control = None;
        Ok(())
    }

    /// New step size: tensors and the control-part forecast.
    pub fn update2(&mut self, dt: f64, degree: usize) -> Result<()> {
        let (lin, ens) = match (&self.lin, &self.ensemble) {
            (Some(l), Some(e)) => (l, e),
            _ => return Err(CosimError::Usage("update2 called before update1".into())),
        };
        self.tensors = Some(update2(ens, dt, degree, self.weights, self.cfg.need_derivatives, self.cfg.rich_factor)?);
        self.control = Some(control_predict(&self.history, lin.t + dt, self.cfg.policy)?);
        Ok(())
    }

    /// New iterate: end-of-step output (and derivative) for this input.
    pub fn update3(&self, input: &PolyVecSignal) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
        let (lin, tens, (yc, yc_dot)) = match (&self.lin, &self.tensors, &self.control) {
            (Some(l), Some(t), Some(c)) => (l, t, c),
            _ => return Err(CosimError::Usage("update3 called before update2".into())),
        };
        let shifted = input.shift_coefficients(lin.t).with_degree(tens.degree())?;
        estimate(tens, &build_xi(&shifted), &lin.x, &lin.f_c, yc, yc_dot)
    }
}
