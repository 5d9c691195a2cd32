use cosim::signals::{hermite_cubic, PolyVecSignal};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn signal() -> impl Strategy<Value = PolyVecSignal> {
    (1usize..=3, 0usize..=4)
        .prop_flat_map(|(rows, deg)| prop::collection::vec(-1.0f64..1.0, rows * (deg + 1)).prop_map(move |c| (rows, deg, c)))
        .prop_map(|(rows, deg, c)| PolyVecSignal::absolute(DMatrix::from_row_slice(rows, deg + 1, &c)).unwrap())
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + scale)
}

proptest! {
    #[test]
    fn shifted_signal_is_a_time_translate(u in signal(), t_n in -3.0f64..3.0, tau in 0.0f64..2.0) {
        let s = u.shift_coefficients(t_n);
        let (a, b) = (s.eval(tau), u.eval(tau + t_n));
        for j in 0..u.n_sig() {
            prop_assert!(close(a[j], b[j], b[j].abs()), "{} vs {}", a[j], b[j]);
        }
    }

    #[test]
    fn shifts_compose(u in signal(), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let twice = u.shift_coefficients(t1).shift_coefficients(t2);
        let once = u.shift_coefficients(t1 + t2);
        let scale = once.coeffs().amax();
        for (a, b) in twice.coeffs().iter().zip(once.coeffs().iter()) {
            prop_assert!(close(*a, *b, scale), "{a} vs {b}");
        }
    }

    #[test]
    fn hermite_meets_both_endpoints(
        vals in prop::collection::vec(-10.0f64..10.0, 4),
        t0 in -50.0f64..150.0,
        h in 1e-3f64..5.0,
    ) {
        let one = |x: f64| DVector::from_element(1, x);
        let (v0, d0, v1, d1) = (one(vals[0]), one(vals[1]), one(vals[2]), one(vals[3]));
        let p = hermite_cubic(&v0, &d0, &v1, &d1, t0, t0 + h).unwrap();
        let t1 = t0 + h;
        prop_assert!(close(p.eval(t0)[0], vals[0], vals[0].abs()));
        prop_assert!(close(p.eval_derivative(t0)[0], vals[1], vals[1].abs()));
        // The end value carries the rounding of t1 - t0 times the slopes.
        let slope_scale = vals[1].abs().max(vals[3].abs()) * h + vals[2].abs();
        prop_assert!(close(p.eval(t1)[0], vals[2], slope_scale), "{} vs {}", p.eval(t1)[0], vals[2]);
        prop_assert!(close(p.eval_derivative(t1)[0], vals[3], vals[3].abs() + (vals[2] - vals[0]).abs() / h));
    }

    #[test]
    fn rebase_preserves_values(u in signal(), origin in -3.0f64..3.0, t in -1.0f64..4.0) {
        let r = u.rebase(origin);
        let (a, b) = (r.eval(t), u.eval(t));
        // Re-expansion cancels terms of size up to sum |c_k| 7^k.
        for j in 0..u.n_sig() {
            prop_assert!(close(a[j], b[j], b[j].abs() + 1e2));
        }
    }
}
