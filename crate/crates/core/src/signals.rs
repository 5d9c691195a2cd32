//! Vector-valued polynomial signals.
//!
//! A [`PolyVecSignal`] holds one polynomial per coordinate, written in powers
//! of `t - origin_time`. Keeping an explicit origin lets the master store
//! step-local polynomials without re-expanding them around `t = 0`, which
//! would cost digits for a cubic at `t = 200`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{CosimError, Result};

/// Highest polynomial degree a signal may carry.
pub const MAX_DEGREE: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyVecSignal {
    /// Row `j` holds the coefficients of coordinate `j`, ascending powers.
    coeffs: DMatrix<f64>,
    origin_time: f64,
}

/// Time-shifted input coefficients arranged one row per input, one column per
/// power of the step-local time.
#[derive(Debug, Clone, PartialEq)]
pub struct XiMatrix {
    pub entries: DMatrix<f64>,
}

fn pascal() -> &'static [[u64; MAX_DEGREE + 1]; MAX_DEGREE + 1] {
    static TABLE: OnceLock<[[u64; MAX_DEGREE + 1]; MAX_DEGREE + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut c = [[0u64; MAX_DEGREE + 1]; MAX_DEGREE + 1];
        for n in 0..=MAX_DEGREE {
            c[n][0] = 1;
            for k in 1..=n {
                c[n][k] = c[n - 1][k - 1] + if k < n { c[n - 1][k] } else { 0 };
            }
        }
        c
    })
}

/// Binomial coefficient C(n, k) for `n <= 20`, exact.
pub fn binomial(n: usize, k: usize) -> u64 {
    assert!(n <= MAX_DEGREE, "binomial table only covers n <= {MAX_DEGREE}");
    if k > n {
        0
    } else {
        pascal()[n][k]
    }
}

/// Re-expands `sum a_l x^l` as `sum b_k (x - delta)^k`, row by row.
fn binomial_shift(coeffs: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    if delta == 0.0 {
        return coeffs.clone();
    }
    let n = coeffs.ncols() - 1;
    let mut powers = vec![1.0; n + 1];
    for i in 1..=n {
        powers[i] = powers[i - 1] * delta;
    }
    DMatrix::from_fn(coeffs.nrows(), n + 1, |j, k| {
        (k..=n)
            .map(|l| coeffs[(j, l)] * binomial(l, k) as f64 * powers[l - k])
            .sum()
    })
}

impl PolyVecSignal {
    pub fn new(coeffs: DMatrix<f64>, origin_time: f64) -> Result<Self> {
        if coeffs.ncols() == 0 || coeffs.nrows() == 0 {
            return Err(CosimError::Usage("polynomial signal needs at least one row and one coefficient".into()));
        }
        if coeffs.ncols() > MAX_DEGREE + 1 {
            return Err(CosimError::Usage(format!(
                "polynomial degree {} exceeds the maximum {MAX_DEGREE}",
                coeffs.ncols() - 1
            )));
        }
        Ok(Self { coeffs, origin_time })
    }

    /// Signal written in powers of absolute time.
    pub fn absolute(coeffs: DMatrix<f64>) -> Result<Self> {
        Self::new(coeffs, 0.0)
    }

    /// Single-coordinate polynomial in absolute time.
    pub fn scalar(coeffs: &[f64]) -> Result<Self> {
        Self::absolute(DMatrix::from_row_slice(1, coeffs.len(), coeffs))
    }

    pub fn constant(values: &DVector<f64>) -> Self {
        Self {
            coeffs: DMatrix::from_column_slice(values.len(), 1, values.as_slice()),
            origin_time: 0.0,
        }
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn origin_time(&self) -> f64 {
        self.origin_time
    }

    pub fn n_sig(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let tau = t - self.origin_time;
        let n = self.degree();
        DVector::from_fn(self.n_sig(), |j, _| {
            let mut acc = self.coeffs[(j, n)];
            for k in (0..n).rev() {
                acc = acc * tau + self.coeffs[(j, k)];
            }
            acc
        })
    }

    pub fn eval_derivative(&self, t: f64) -> DVector<f64> {
        let tau = t - self.origin_time;
        let n = self.degree();
        DVector::from_fn(self.n_sig(), |j, _| {
            if n == 0 {
                return 0.0;
            }
            let mut acc = n as f64 * self.coeffs[(j, n)];
            for k in (1..n).rev() {
                acc = acc * tau + k as f64 * self.coeffs[(j, k)];
            }
            acc
        })
    }

    /// Same function, coefficients re-expanded around `new_origin`.
    pub fn rebase(&self, new_origin: f64) -> Self {
        Self {
            coeffs: binomial_shift(&self.coeffs, new_origin - self.origin_time),
            origin_time: new_origin,
        }
    }

    /// The signal `t -> self(t + t_n)`, written in powers of the shifted time.
    pub fn shift_coefficients(&self, t_n: f64) -> Self {
        Self {
            coeffs: binomial_shift(&self.coeffs, t_n - self.origin_time),
            origin_time: 0.0,
        }
    }

    /// Pads with zero coefficients up to degree `n`. Never truncates.
    pub fn with_degree(&self, n: usize) -> Result<Self> {
        if n < self.degree() {
            return Err(CosimError::Usage(format!(
                "cannot lower degree {} to {n} without truncation",
                self.degree()
            )));
        }
        let mut coeffs = DMatrix::zeros(self.n_sig(), n + 1);
        coeffs.columns_mut(0, self.degree() + 1).copy_from(&self.coeffs);
        Self::new(coeffs, self.origin_time)
    }
}

pub fn eval_signal(sig: &PolyVecSignal, t: f64) -> DVector<f64> {
    sig.eval(t)
}

pub fn shift_coefficients(sig: &PolyVecSignal, t_n: f64) -> PolyVecSignal {
    sig.shift_coefficients(t_n)
}

/// Coefficient matrix of a signal that has already been shifted to the step
/// start. Signals with a nonzero origin are re-expanded around zero first.
pub fn build_xi(shifted: &PolyVecSignal) -> XiMatrix {
    let entries = if shifted.origin_time == 0.0 {
        shifted.coeffs.clone()
    } else {
        binomial_shift(&shifted.coeffs, -shifted.origin_time)
    };
    XiMatrix { entries }
}

/// Per-coordinate cubic through `(t0, v0, d0)` and `(t1, v1, d1)`, stored
/// with origin `t0`.
pub fn hermite_cubic(
    v0: &DVector<f64>,
    d0: &DVector<f64>,
    v1: &DVector<f64>,
    d1: &DVector<f64>,
    t0: f64,
    t1: f64,
) -> Result<PolyVecSignal> {
    if !(t1 > t0) {
        return Err(CosimError::InvalidStep { t0, t1 });
    }
    let n = v0.len();
    if d0.len() != n || v1.len() != n || d1.len() != n {
        return Err(CosimError::Usage("hermite_cubic: endpoint vectors differ in length".into()));
    }
    let h = t1 - t0;
    let mut coeffs = DMatrix::zeros(n, 4);
    for j in 0..n {
        let slope = (v1[j] - v0[j]) / h;
        coeffs[(j, 0)] = v0[j];
        coeffs[(j, 1)] = d0[j];
        coeffs[(j, 2)] = (3.0 * slope - 2.0 * d0[j] - d1[j]) / h;
        coeffs[(j, 3)] = (d0[j] + d1[j] - 2.0 * slope) / (h * h);
    }
    PolyVecSignal::new(coeffs, t0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(c: &[f64]) -> PolyVecSignal {
        PolyVecSignal::scalar(c).unwrap()
    }

    #[test]
    fn stimulus_values() {
        let u = sig(&[0.8, -0.16, -0.11008]);
        assert_eq!(u.eval(0.0)[0], 0.8);
        assert!((u.eval(1.0)[0] - 0.52992).abs() < 1e-15);
        assert_eq!(sig(&[0.8]).eval(123.4)[0], 0.8);
    }

    #[test]
    fn shift_of_identity_ramp() {
        let s = sig(&[0.0, 1.0]).shift_coefficients(1.0);
        assert_eq!(s.coeffs().as_slice(), &[1.0, 1.0]);
        let z = sig(&[0.3, 2.0, -1.0]).shift_coefficients(0.0);
        assert_eq!(z.coeffs().as_slice(), &[0.3, 2.0, -1.0]);
    }

    #[test]
    fn shifted_stimulus_matches_direct_evaluation() {
        let u = sig(&[0.8, -0.16, -0.11008]);
        let s = u.shift_coefficients(2.0);
        assert!((s.eval(0.5)[0] - u.eval(2.5)[0]).abs() < 1e-14);
    }

    #[test]
    fn xi_layout() {
        let s = sig(&[0.0, 1.0]).shift_coefficients(1.0);
        assert_eq!(build_xi(&s).entries, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        let two = PolyVecSignal::absolute(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(build_xi(&two).entries.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        let zero = PolyVecSignal::absolute(DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(build_xi(&zero).entries, DMatrix::zeros(3, 4));
    }

    #[test]
    fn xi_of_offset_origin_is_expanded_around_zero() {
        let h = hermite_cubic(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 0.5),
            &DVector::from_element(1, 2.0),
            &DVector::from_element(1, -1.0),
            3.0,
            4.0,
        )
        .unwrap();
        let xi = build_xi(&h.shift_coefficients(3.0));
        assert_eq!(xi.entries, *h.coeffs());
        let shifted = h.shift_coefficients(2.5);
        let xi = build_xi(&shifted);
        let direct = PolyVecSignal::absolute(xi.entries).unwrap();
        assert!((direct.eval(1.0)[0] - h.eval(3.5)[0]).abs() < 1e-14);
    }

    #[test]
    fn flat_and_linear_hermite() {
        let c = DVector::from_vec(vec![2.5, -1.0]);
        let z = DVector::zeros(2);
        let h = hermite_cubic(&c, &z, &c, &z, 1.0, 3.0).unwrap();
        assert_eq!(h.coeffs().column(0), c.column(0));
        assert!(h.coeffs().columns(1, 3).iter().all(|&v| v == 0.0));

        let d = DVector::from_element(1, 0.5);
        let h = hermite_cubic(&DVector::zeros(1), &d, &DVector::from_element(1, 1.0), &d, 0.0, 2.0).unwrap();
        assert_eq!(h.coeffs()[(0, 2)], 0.0);
        assert_eq!(h.coeffs()[(0, 3)], 0.0);
    }

    #[test]
    fn hermite_rejects_backward_interval() {
        let v = DVector::zeros(1);
        assert!(matches!(
            hermite_cubic(&v, &v, &v, &v, 1.0, 1.0),
            Err(CosimError::InvalidStep { .. })
        ));
    }

    #[test]
    fn derivative_of_cubic() {
        let u = sig(&[1.0, 2.0, 3.0, 4.0]);
        assert!((u.eval_derivative(2.0)[0] - (2.0 + 12.0 + 48.0)).abs() < 1e-13);
        assert_eq!(sig(&[5.0]).eval_derivative(1.0)[0], 0.0);
    }

    #[test]
    fn pascal_rows() {
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn rebase_keeps_values() {
        let u = sig(&[0.8, -0.448, 0.5173559185, 0.01]);
        let r = u.rebase(150.0);
        for t in [149.0, 150.0, 150.3] {
            assert!((r.eval(t)[0] - u.eval(t)[0]).abs() < 1e-9 * (1.0 + u.eval(t)[0].abs()));
        }
    }
}
