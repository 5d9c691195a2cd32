use cosim::models::{catalog, isolated_prey, ModelId};
use cosim::signals::PolyVecSignal;
use cosim::systems::{Side, System, SystemSpec};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn all_specs() -> Vec<(ModelId, SystemSpec)> {
    ModelId::ALL
        .iter()
        .flat_map(|&id| catalog(id).systems.into_iter().map(move |s| (id, s)))
        .chain([false, true].map(|m| (ModelId::LvClassic, isolated_prey(m).spec)))
        .collect()
}

fn random_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

fn random_input(rng: &mut impl Rng, n: usize, t0: f64) -> PolyVecSignal {
    let c = DMatrix::from_fn(n, 4, |_, k| rng.gen_range(-1.0..1.0) / (1 + k) as f64);
    PolyVecSignal::new(c, t0).unwrap()
}

/// Positive states for the populations, anything for the bodies.
fn state_range(id: ModelId) -> (f64, f64) {
    match id {
        ModelId::LvClassic | ModelId::LvTimeModified => (0.2, 2.0),
        _ => (-2.0, 2.0),
    }
}

fn at_state(spec: &SystemSpec, x: DVector<f64>, t: f64) -> System {
    let mut s = spec.clone();
    s.x_init = x;
    System::new(s, t).unwrap()
}

#[test]
fn rollback_is_bit_exact_on_every_benchmark() {
    let mut rng = StdRng::seed_from_u64(7);
    for (id, spec) in all_specs() {
        let (lo, hi) = state_range(id);
        let mut sys = at_state(&spec, random_vec(&mut rng, spec.n_st, lo, hi), 0.5);
        let before = sys.state().clone();
        let snap = sys.snapshot().unwrap();
        let u = random_input(&mut rng, spec.n_in, 0.5);
        let first = sys.do_step(&u, 0.9, 37).unwrap();
        sys.restore_snapshot(&snap).unwrap();
        assert_eq!(sys.state(), &before, "{}", spec.name);
        let second = sys.do_step(&u, 0.9, 37).unwrap();
        let bits = |v: &DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&first.x_end), bits(&second.x_end), "{}", spec.name);
        assert_eq!(bits(&first.y_end), bits(&second.y_end), "{}", spec.name);
    }
}

#[test]
fn finite_difference_jacobians_match_analytic_ones() {
    let mut rng = StdRng::seed_from_u64(11);
    for (id, spec) in all_specs() {
        let (lo, hi) = state_range(id);
        let m = catalog(id);
        for _ in 0..20 {
            let t = rng.gen_range(m.t_init..m.t_end);
            let x = random_vec(&mut rng, spec.n_st, lo, hi);
            let u = random_vec(&mut rng, spec.n_in, lo, hi);
            let exact = at_state(&spec, x.clone(), t).directional_derivatives(&u).unwrap();
            let fd = at_state(&spec.clone().without_jacobians(), x, t).directional_derivatives(&u).unwrap();
            for (a, b) in [(&exact.0, &fd.0), (&exact.1, &fd.1), (&exact.2, &fd.2), (&exact.3, &fd.3)] {
                assert!((a - b).amax() <= 1e-6, "{} at t = {t}: {a} vs {b}", spec.name);
            }
        }
    }
}

#[test]
fn lti_linearization_has_no_residual() {
    let mut rng = StdRng::seed_from_u64(3);
    for spec in catalog(ModelId::MechTwoBody).systems {
        let sys = at_state(&spec, random_vec(&mut rng, spec.n_st, -2.0, 2.0), 10.0);
        let u0 = random_vec(&mut rng, spec.n_in, -2.0, 2.0);
        let y0 = sys.output(10.0, &sys.state().x, &u0, Side::Right);
        let lin = sys.make_linearization_point(&u0, &y0, false).unwrap();
        for _ in 0..20 {
            let x = random_vec(&mut rng, spec.n_st, -100.0, 100.0);
            let u = random_vec(&mut rng, spec.n_in, -100.0, 100.0);
            let f = (spec.f)(10.0, &x, &u);
            let lin_f = &lin.a * &x + &lin.b * &u + &lin.f_c;
            assert!((&f - lin_f).amax() <= 1e-12 * (1.0 + f.amax()), "{}", spec.name);
        }
    }
}

/// Max state error of `n` RK4 steps over `[0, dt]` against `10 n`.
fn rk4_error(spec: &SystemSpec, u: &PolyVecSignal, dt: f64, n: usize) -> f64 {
    let run = |k| at_state(spec, spec.x_init.clone(), 0.0).do_step(u, dt, k).unwrap().x_end;
    (run(n) - run(10 * n)).amax()
}

#[test]
fn rk4_error_drops_sixteenfold_per_halving() {
    let m = catalog(ModelId::MechTwoBody);
    let cases = [
        (isolated_prey(false).spec, isolated_prey(false).stimulus, 2.0),
        (isolated_prey(true).spec, isolated_prey(true).stimulus, 2.0),
        (m.systems[0].clone(), PolyVecSignal::scalar(&[-500.0, 10.0]).unwrap(), 40.0),
    ];
    for (spec, u, dt) in cases {
        let ratio = rk4_error(&spec, &u, dt, 128) / rk4_error(&spec, &u, dt, 256);
        assert!((13.0..19.0).contains(&ratio), "{}: ratio {ratio}", spec.name);
    }
}

#[test]
fn right_body_switch_and_prey_jacobian_examples() {
    let mech = catalog(ModelId::MechTwoBody);
    let s2 = System::new(mech.systems[1].clone(), 0.0).unwrap();
    let x = DVector::from_vec(vec![0.3, -0.2]);
    let u = x.clone();
    assert_eq!(s2.output(50.0, &x, &u, Side::Right)[0], 0.0);
    assert_eq!(s2.output(100.0, &x, &DVector::from_vec(vec![5.0, 1.0]), Side::Right)[0], -1000.0);
    let prey = System::new(isolated_prey(false).spec, 0.0).unwrap();
    let (a, b, _, _) = prey.directional_derivatives(&DVector::from_element(1, 0.8)).unwrap();
    assert!((a[(0, 0)] + 0.394).abs() < 1e-12 && (b[(0, 0)] + 1.064).abs() < 1e-12);
}
