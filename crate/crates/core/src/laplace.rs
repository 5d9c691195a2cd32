//! Gaver-Stehfest inversion of Laplace transforms on the real axis.
//!
//! `f(t) ~ ln2/t * sum_k V_k F(k ln2 / t)`. The weights alternate in sign and
//! grow to ~1e12 for N = 20, so in plain doubles the sum loses most of its
//! digits. Weights are therefore kept as exact integer ratios and, for
//! rational transforms, the whole sum is carried out in double-double.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use twofloat::{consts::LN_2, TwoFloat};

use crate::dd;
use crate::error::{CosimError, Result};
use crate::rational::{RationalFn, RationalMatrix};
use crate::signals::binomial;

pub const MAX_ORDER: usize = 20;

/// Order used when none is configured. Lower orders carry a bias of
/// several 1e-7 relative on ramps (N = 14), which shows up directly in the
/// step estimates.
pub const DEFAULT_ORDER: usize = 20;

#[derive(Debug, Clone)]
pub struct StehfestWeights {
    n: usize,
    /// Signed integer numerators; `V_k = numerators[k-1] / denominator`.
    numerators: Vec<i128>,
    denominator: i128,
    v: Vec<f64>,
    v_dd: Vec<TwoFloat>,
}

impl StehfestWeights {
    fn compute(n: usize) -> Self {
        let m = n / 2;
        let mut numerators = Vec::with_capacity(n);
        for k in 1..=n {
            let lo = k.div_ceil(2);
            let hi = k.min(m);
            let mut s: i128 = 0;
            for j in lo..=hi {
                let jp = (j as i128).pow(m as u32 + 1);
                s += jp * binomial(2 * j, j) as i128 * binomial(j, k - j) as i128 * binomial(m, j) as i128;
            }
            numerators.push(if (m + k).is_multiple_of(2) { s } else { -s });
        }
        let denominator: i128 = (1..=m as i128).product();
        let den_dd = TwoFloat::from(denominator);
        let v_dd: Vec<TwoFloat> = numerators.iter().map(|&s| dd::div(TwoFloat::from(s), den_dd)).collect();
        let v = v_dd.iter().map(|x| x.hi()).collect();
        Self { n, numerators, denominator, v, v_dd }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Weights rounded to doubles.
    pub fn values(&self) -> &[f64] {
        &self.v
    }

    /// Exact weights as `(numerator, common denominator)`.
    pub fn exact(&self) -> (&[i128], i128) {
        (&self.numerators, self.denominator)
    }

    pub fn values_dd(&self) -> &[TwoFloat] {
        &self.v_dd
    }
}

/// Cached weights for an even order `2 <= n <= 20`.
pub fn stehfest_weights(n: usize) -> Result<&'static StehfestWeights> {
    static CACHE: [OnceLock<StehfestWeights>; MAX_ORDER / 2] = [const { OnceLock::new() }; MAX_ORDER / 2];
    if !(2..=MAX_ORDER).contains(&n) || !n.is_multiple_of(2) {
        return Err(CosimError::Usage(format!(
            "Stehfest order must be even and within 2..={MAX_ORDER}, got {n}"
        )));
    }
    Ok(CACHE[n / 2 - 1].get_or_init(|| StehfestWeights::compute(n)))
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(CosimError::Usage(format!("inverse Laplace needs a positive finite time, got {t}")))
    }
}

/// Inversion of an arbitrary transform evaluated in doubles.
pub fn inverse_laplace_at<F>(mut f: F, t: f64, w: &StehfestWeights) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_time(t)?;
    let a = std::f64::consts::LN_2 / t;
    let mut acc = 0.0;
    for (k, v) in w.values().iter().enumerate() {
        acc += v * f((k + 1) as f64 * a)?;
    }
    Ok(a * acc)
}

/// Inversion of a transform evaluated in double-double.
pub fn inverse_laplace_dd<F>(mut f: F, t: f64, w: &StehfestWeights) -> Result<TwoFloat>
where
    F: FnMut(TwoFloat) -> Result<TwoFloat>,
{
    check_time(t)?;
    let a = dd::div(LN_2, TwoFloat::from(t));
    let mut acc = TwoFloat::from(0.0);
    for (k, v) in w.values_dd().iter().enumerate() {
        acc += *v * f(a * ((k + 1) as f64))?;
    }
    Ok(a * acc)
}

pub fn inverse_laplace_rational_dd(r: &RationalFn, t: f64, w: &StehfestWeights) -> Result<TwoFloat> {
    inverse_laplace_dd(|s| r.eval_dd(s), t, w)
}

pub fn inverse_laplace_rational(r: &RationalFn, t: f64, w: &StehfestWeights) -> Result<f64> {
    Ok(inverse_laplace_rational_dd(r, t, w)?.hi())
}

/// Element-wise inversion. The first pole aborts the whole evaluation.
pub fn inverse_laplace_tensor(fs: &RationalMatrix, t: f64, w: &StehfestWeights) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(fs.nrows(), fs.ncols());
    for i in 0..fs.nrows() {
        for j in 0..fs.ncols() {
            out[(i, j)] = inverse_laplace_rational(fs.get(i, j), t, w)?;
        }
    }
    Ok(out)
}
