//! Double-double helpers on top of `twofloat`.
//!
//! `TwoFloat / TwoFloat` in twofloat 0.8 forms its reciprocal residual
//! without a fused multiply-add and is only accurate to about one double
//! ulp. Multiplication by a double and subtraction are exact enough, so
//! division is done here by three rounds of long division.

use twofloat::TwoFloat;

pub(crate) fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds() {
        let t = div(TwoFloat::from(1.0), TwoFloat::from(3.0));
        assert!((t * 3.0 - 1.0).abs().hi() < 1e-31);
        assert!(t.lo() != 0.0);
    }

    #[test]
    fn ratio_of_wide_operands() {
        let a = TwoFloat::new_add(1.0, 1e-20);
        let b = TwoFloat::new_add(7.0, -3e-19);
        let q = div(a, b);
        assert!((q * b - a).abs().hi() < 1e-31);
    }
}
