//! Rational functions of the Laplace variable and the transfer matrices of a
//! linearized state-space system.
//!
//! Coefficients come from the Faddeev–LeVerrier recursion, which yields the
//! characteristic polynomial and the adjugate of `sI - A` as polynomial
//! matrices. No common-factor cancellation is attempted.

use nalgebra::DMatrix;
use twofloat::TwoFloat;

use crate::dd;
use crate::error::{CosimError, Result};

/// Denominators smaller than this in magnitude count as a pole.
pub const POLE_THRESHOLD: f64 = 1e-300;

/// `num(s) / den(s)`, coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFn {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn trim(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && *p.last().unwrap() == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
    p
}

fn horner(p: &[f64], s: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

fn horner_dd(p: &[f64], s: TwoFloat) -> TwoFloat {
    p.iter().rev().fold(TwoFloat::from(0.0), |acc, &c| acc * s + c)
}

impl RationalFn {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let den = trim(den);
        if den.iter().all(|&c| c == 0.0) {
            return Err(CosimError::Usage("rational function with zero denominator".into()));
        }
        Ok(Self { num: trim(num), den })
    }

    /// Polynomial `p(s) / 1`.
    pub fn polynomial(p: Vec<f64>) -> Self {
        Self { num: trim(p), den: vec![1.0] }
    }

    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        let d = horner(&self.den, s);
        if !(d.abs() > POLE_THRESHOLD) {
            return Err(CosimError::Pole { s });
        }
        Ok(horner(&self.num, s) / d)
    }

    /// Same as [`RationalFn::eval`] carried out in double-double arithmetic.
    pub fn eval_dd(&self, s: TwoFloat) -> Result<TwoFloat> {
        let d = horner_dd(&self.den, s);
        if !(d.hi().abs() > POLE_THRESHOLD) {
            return Err(CosimError::Pole { s: s.hi() });
        }
        Ok(dd::div(horner_dd(&self.num, s), d))
    }

    /// Product with the transform of `t^k`, i.e. `self(s) * k! / s^(k+1)`.
    pub fn times_monomial_transform(&self, k: usize) -> Self {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let mut den = vec![0.0; k + 1];
        den.extend_from_slice(&self.den);
        Self {
            num: self.num.iter().map(|c| c * fact).collect(),
            den,
        }
    }

    /// `self(s) / s`.
    pub fn div_s(&self) -> Self {
        let mut den = vec![0.0];
        den.extend_from_slice(&self.den);
        Self { num: self.num.clone(), den }
    }
}

pub fn eval_rational(r: &RationalFn, s: f64) -> Result<f64> {
    r.eval(s)
}

/// Dense matrix of rational functions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<RationalFn>,
}

impl RationalMatrix {
    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> RationalFn) -> Self {
        let mut entries = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                entries.push(f(i, j));
            }
        }
        Self { nrows, ncols, entries }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> &RationalFn {
        &self.entries[i * self.ncols + j]
    }

    pub fn eval(&self, s: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                out[(i, j)] = self.get(i, j).eval(s)?;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(&RationalFn) -> RationalFn) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            entries: self.entries.iter().map(f).collect(),
        }
    }
}

/// Output of the Faddeev–LeVerrier recursion for an `n x n` matrix.
#[derive(Debug, Clone)]
pub struct Resolvent {
    /// `det(sI - A)`, ascending, monic.
    pub char_poly: Vec<f64>,
    /// `adj(sI - A) = sum_p adjugate[p] * s^p` for `p = 0..n`.
    pub adjugate: Vec<DMatrix<f64>>,
    /// `A M_n + c_0 I`; zero by Cayley–Hamilton up to rounding.
    pub remainder: DMatrix<f64>,
}

pub fn faddeev_leverrier(a: &DMatrix<f64>) -> Result<Resolvent> {
    if !a.is_square() {
        return Err(CosimError::Usage(format!(
            "state matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    // c[p] is the coefficient of s^p.
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut ms: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * c[n - k + 1];
        let am = a * &m;
        c[n - k] = -am.trace() / k as f64;
        ms.push(m.clone());
    }
    let remainder = a * &m + &id * c[0];
    // M_k multiplies s^(n-k).
    let adjugate = (0..n).map(|p| ms[n - 1 - p].clone()).collect();
    Ok(Resolvent { char_poly: c, adjugate, remainder })
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let ok = a.is_square()
        && b.nrows() == n
        && c.ncols() == n
        && d.nrows() == c.nrows()
        && d.ncols() == b.ncols();
    if ok {
        Ok(())
    } else {
        Err(CosimError::Usage(format!(
            "inconsistent state-space sizes: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols(),
            d.nrows(),
            d.ncols()
        )))
    }
}

/// `C (sI - A)^-1 B + D` over the common denominator `det(sI - A)`.
pub fn resolvent_rationals(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<RationalMatrix> {
    let res = faddeev_leverrier(a)?;
    check_dims(a, b, c, d)?;
    Ok(assemble(&res, b, c, d))
}

fn assemble(res: &Resolvent, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> RationalMatrix {
    let n = res.adjugate.len();
    let blocks: Vec<DMatrix<f64>> = res.adjugate.iter().map(|m| c * m * b).collect();
    RationalMatrix::from_fn(d.nrows(), d.ncols(), |i, j| {
        let mut num: Vec<f64> = res.char_poly.iter().map(|&p| p * d[(i, j)]).collect();
        for p in 0..n {
            num[p] += blocks[p][(i, j)];
        }
        RationalFn {
            num: trim(num),
            den: res.char_poly.clone(),
        }
    })
}

/// `C (sI - A)^-1`.
pub fn p_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<RationalMatrix> {
    let n = a.nrows();
    resolvent_rationals(a, &DMatrix::identity(n, n), c, &DMatrix::zeros(c.nrows(), n))
}

/// `P(s) / s`, entry by entry.
pub fn r_from_p(p: &RationalMatrix) -> RationalMatrix {
    p.map(RationalFn::div_s)
}

/// The three transfer matrices needed by the estimator, from one recursion.
#[derive(Debug, Clone)]
pub struct LaplaceEnsemble {
    pub g: RationalMatrix,
    pub p: RationalMatrix,
    pub r: RationalMatrix,
    pub char_poly: Vec<f64>,
}

pub fn laplace_ensemble(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<LaplaceEnsemble> {
    let res = faddeev_leverrier(a)?;
    check_dims(a, b, c, d)?;
    let n = a.nrows();
    let g = assemble(&res, b, c, d);
    let p = assemble(&res, &DMatrix::identity(n, n), c, &DMatrix::zeros(c.nrows(), n));
    let r = r_from_p(&p);
    Ok(LaplaceEnsemble { g, p, r, char_poly: res.char_poly })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn tough_case_ensemble() {
        let e = laplace_ensemble(&scalar(0.0), &scalar(0.0), &scalar(1.0), &scalar(0.0)).unwrap();
        assert_eq!(e.g.get(0, 0).eval(3.0).unwrap(), 0.0);
        assert_eq!(e.p.get(0, 0).eval(4.0).unwrap(), 0.25);
        assert_eq!(e.r.get(0, 0).eval(2.0).unwrap(), 0.25);
    }

    #[test]
    fn scalar_resolvent() {
        let a = -0.7;
        let g = resolvent_rationals(&scalar(a), &scalar(1.0), &scalar(1.0), &scalar(0.0)).unwrap();
        assert_eq!(g.get(0, 0).den, vec![-a, 1.0]);
        assert_eq!(g.get(0, 0).num, vec![1.0]);
        let p = p_matrix(&scalar(a), &scalar(1.0)).unwrap();
        let r = r_from_p(&p);
        assert_eq!(r.get(0, 0).den, vec![0.0, -a, 1.0]);
    }

    #[test]
    fn simple_evaluations() {
        let one_over_s = RationalFn::new(vec![1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(one_over_s.eval(2.0).unwrap(), 0.5);
        let two = RationalFn::polynomial(vec![1.0]).times_monomial_transform(2);
        assert_eq!(two.eval(1.0).unwrap(), 2.0);
    }

    #[test]
    fn pole_is_reported() {
        let r = RationalFn::new(vec![1.0], vec![-1.0, 1.0]).unwrap();
        assert!(matches!(r.eval(1.0), Err(CosimError::Pole { .. })));
        assert!(matches!(r.eval_dd(TwoFloat::from(1.0)), Err(CosimError::Pole { .. })));
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(RationalFn::new(vec![1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn non_square_state_matrix_rejected() {
        let a = DMatrix::zeros(2, 3);
        assert!(matches!(faddeev_leverrier(&a), Err(CosimError::Usage(_))));
    }

    #[test]
    fn feedthrough_only_system() {
        let a = DMatrix::<f64>::zeros(0, 0);
        let g = resolvent_rationals(&a, &DMatrix::zeros(0, 2), &DMatrix::zeros(1, 0), &DMatrix::from_row_slice(1, 2, &[3.0, -1.0]))
            .unwrap();
        assert_eq!(g.get(0, 0).eval(5.0).unwrap(), 3.0);
        assert_eq!(g.get(0, 1).eval(5.0).unwrap(), -1.0);
    }

    #[test]
    fn second_order_characteristic_polynomial() {
        // m x'' + d x' + c x = 0 with the left-body constants.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.1, -0.1]);
        let res = faddeev_leverrier(&a).unwrap();
        assert!((res.char_poly[0] - 0.1).abs() < 1e-15);
        assert!((res.char_poly[1] - 0.1).abs() < 1e-15);
        assert_eq!(res.char_poly[2], 1.0);
        assert!(res.remainder.amax() < 1e-15);
    }
}
