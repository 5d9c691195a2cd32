use cosim::laplace::{inverse_laplace_rational, stehfest_weights, DEFAULT_ORDER};
use cosim::rational::{faddeev_leverrier, laplace_ensemble, resolvent_rationals, RationalFn};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
}

/// Random `(A, B, C, D)` with `A` scaled to spectral radius `rho`.
fn state_space() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=5, 1usize..=3, 1usize..=3, 0.1f64..4.9)
        .prop_flat_map(|(n, m, p, rho)| (matrix(n, n), matrix(n, m), matrix(p, n), matrix(p, m), Just(rho)))
        .prop_map(|(a, b, c, d, rho)| {
            let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let a = if radius > 0.0 { a * (rho / radius) } else { a };
            (a, b, c, d)
        })
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjugate_reconstructs_the_determinant(a in (1usize..=6).prop_flat_map(|n| matrix(n, n)), s in prop::collection::vec(-8.0f64..8.0, 10)) {
        let n = a.nrows();
        let res = faddeev_leverrier(&a).unwrap();
        for &s in &s {
            let id = DMatrix::<f64>::identity(n, n);
            let adj = res.adjugate.iter().rev().fold(DMatrix::zeros(n, n), |acc, m| acc * s + m);
            let det = res.char_poly.iter().rev().fold(0.0, |acc, c| acc * s + c);
            let lhs = (&id * s - &a) * adj;
            let scale = det.abs().max(1e-300).max(lhs.amax());
            prop_assert!((lhs - id * det).amax() <= 1e-9 * scale);
        }
        let norm = a.amax().max(1.0) * n as f64;
        prop_assert!(res.remainder.amax() <= 1e-8 * norm.powi(n as i32));
    }

    #[test]
    fn transfer_matrix_matches_a_dense_solve((a, b, c, d) in state_space(), s in 5.5f64..30.0) {
        let ens = laplace_ensemble(&a, &b, &c, &d).unwrap();
        let n = a.nrows();
        let lu = (DMatrix::<f64>::identity(n, n) * s - &a).lu();
        let g = &c * lu.solve(&b).unwrap() + &d;
        let p = &c * lu.solve(&DMatrix::identity(n, n)).unwrap();
        prop_assert!(max_rel(&ens.g.eval(s).unwrap(), &g) <= 1e-9);
        prop_assert!(max_rel(&ens.p.eval(s).unwrap(), &p) <= 1e-9);
        prop_assert!(max_rel(&ens.r.eval(s).unwrap(), &(p / s)) <= 1e-9);
    }

    #[test]
    fn feedthrough_is_the_only_improper_part((a, b, c, d) in state_space()) {
        let g = resolvent_rationals(&a, &b, &c, &d).unwrap();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let f = g.get(i, j);
                let mut rest = f.num.clone();
                rest.resize(f.den.len(), 0.0);
                for (r, q) in rest.iter_mut().zip(&f.den) {
                    *r -= d[(i, j)] * q;
                }
                prop_assert_eq!(*rest.last().unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn inversion_is_linear(p in 0.1f64..3.0, q in 0.1f64..3.0, alpha in -2.0f64..2.0, beta in -2.0f64..2.0, t in 0.1f64..5.0) {
        let w = stehfest_weights(DEFAULT_ORDER).unwrap();
        let f = RationalFn::new(vec![1.0], vec![p, 1.0]).unwrap();
        let g = RationalFn::new(vec![1.0, 2.0], vec![0.0, q, 1.0]).unwrap();
        // alpha F + beta G over the common denominator.
        let num = vec![beta * p, alpha * q + beta * (1.0 + 2.0 * p), alpha + 2.0 * beta];
        let den = vec![0.0, p * q, p + q, 1.0];
        let sum = RationalFn::new(num, den).unwrap();
        let (fi, gi) = (inverse_laplace_rational(&f, t, w).unwrap(), inverse_laplace_rational(&g, t, w).unwrap());
        let combined = inverse_laplace_rational(&sum, t, w).unwrap();
        let scale = (alpha * fi).abs() + (beta * gi).abs();
        prop_assert!((combined - (alpha * fi + beta * gi)).abs() <= 1e-10 * scale.max(1e-300));
    }
}

#[test]
fn higher_order_does_not_hurt_on_a_decay() {
    let f = RationalFn::new(vec![1.0], vec![1.0, 1.0]).unwrap();
    for t in [0.1f64, 1.0, 5.0] {
        let err = |n| (inverse_laplace_rational(&f, t, stehfest_weights(n).unwrap()).unwrap() - (-t).exp()).abs();
        assert!(err(14) <= err(8), "t = {t}: {} > {}", err(14), err(8));
    }
}

#[test]
fn lag_transform_examples() {
    let w = stehfest_weights(DEFAULT_ORDER).unwrap();
    let lag = RationalFn::new(vec![1.0], vec![0.0, 1.0, 1.0]).unwrap();
    let v = inverse_laplace_rational(&lag, 0.5, w).unwrap();
    assert!((v - (1.0 - (-0.5f64).exp())).abs() < 1e-6);
    let ramp = RationalFn::new(vec![1.0], vec![0.0, 0.0, 1.0]).unwrap();
    assert!((inverse_laplace_rational(&ramp, 0.7, w).unwrap() / 0.7 - 1.0).abs() < 1e-8);
}
