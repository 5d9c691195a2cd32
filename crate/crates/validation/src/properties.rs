//! Randomized property checks, reported as `(name, passed, detail)`.

use cosim::costarica::{ControlPolicy, Estimator, EstimatorConfig, Tensor3};
use cosim::models::{catalog, isolated_prey, ModelId};
use cosim::orchestrator::{run_with_systems, CosimConfig, CouplingGraph, ReplayMode};
use cosim::signals::{build_xi, hermite_cubic, PolyVecSignal};
use cosim::systems::{Side, System, SystemSpec};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type Check = (&'static str, bool, String);

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn vec_in(r: &mut StdRng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(lo..hi))
}

fn poly(r: &mut StdRng, rows: usize, deg: usize, origin: f64, dt: f64) -> PolyVecSignal {
    PolyVecSignal::new(DMatrix::from_fn(rows, deg + 1, |_, k| r.gen_range(-1.0..1.0) / dt.powi(k as i32)), origin).expect("degree <= 20")
}

fn at_state(spec: &SystemSpec, x: DVector<f64>, t: f64) -> System {
    let mut s = spec.clone();
    s.x_init = x;
    System::new(s, t).expect("benchmark systems are valid")
}

fn benchmark_specs() -> Vec<(ModelId, SystemSpec)> {
    let mut v: Vec<(ModelId, SystemSpec)> =
        ModelId::ALL.iter().flat_map(|&id| catalog(id).systems.into_iter().map(move |s| (id, s))).collect();
    v.extend([false, true].map(|m| (ModelId::LvClassic, isolated_prey(m).spec)));
    v
}

fn state_range(id: ModelId) -> (f64, f64) {
    match id {
        ModelId::LvClassic | ModelId::LvTimeModified => (0.2, 2.0),
        _ => (-2.0, 2.0),
    }
}

fn shifts() -> Check {
    let mut r = rng(81);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (rows, deg) = (r.gen_range(1..=3), r.gen_range(0..=4));
        let u = poly(&mut r, rows, deg, 0.0, 1.0);
        let (t_n, tau, t2) = (r.gen_range(-3.0..3.0), r.gen_range(0.0..2.0), r.gen_range(-2.0..2.0));
        let (a, b) = (u.shift_coefficients(t_n).eval(tau), u.eval(tau + t_n));
        for j in 0..rows {
            worst = worst.max((a[j] - b[j]).abs() / (1.0 + b[j].abs()));
        }
        let twice = u.shift_coefficients(t_n).shift_coefficients(t2);
        let once = u.shift_coefficients(t_n + t2);
        let scale = 1.0 + once.coeffs().amax();
        worst = worst.max((twice.coeffs() - once.coeffs()).amax() / scale);
    }
    ("shift consistency and composition", worst <= 1e-12, format!("worst {worst:.2e}"))
}

fn hermite() -> Check {
    let mut r = rng(82);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.gen_range(1..=3);
        let (v0, d0, v1, d1) = (vec_in(&mut r, n, -10.0, 10.0), vec_in(&mut r, n, -10.0, 10.0), vec_in(&mut r, n, -10.0, 10.0), vec_in(&mut r, n, -10.0, 10.0));
        let (t0, h) = (r.gen_range(-50.0..150.0), r.gen_range(1e-3..5.0));
        let p = hermite_cubic(&v0, &d0, &v1, &d1, t0, t0 + h).expect("forward interval");
        // Scales include the rounding carried by the evaluation at t1.
        let pairs = [
            (p.eval(t0), &v0, v0.amax()),
            (p.eval_derivative(t0), &d0, d0.amax()),
            (p.eval(t0 + h), &v1, v1.amax() + d0.amax().max(d1.amax()) * h),
            (p.eval_derivative(t0 + h), &d1, d1.amax() + (&v1 - &v0).amax() / h),
        ];
        for (got, want, scale) in pairs {
            worst = worst.max((got - want).amax() / (1.0 + scale));
        }
    }
    ("Hermite endpoint conditions", worst <= 1e-12, format!("worst {worst:.2e}"))
}

fn rollback() -> Check {
    let mut r = rng(83);
    let mut mismatches = 0;
    let specs = benchmark_specs();
    for (id, spec) in &specs {
        let (lo, hi) = state_range(*id);
        let mut sys = at_state(spec, vec_in(&mut r, spec.n_st, lo, hi), 1.0);
        let before = sys.state().clone();
        let u = poly(&mut r, spec.n_in, 3, 1.0, 1.0);
        let (Ok(snap), Ok(first)) = (sys.snapshot(), sys.clone().do_step(&u, 1.5, 40)) else {
            mismatches += 1;
            continue;
        };
        let _ = sys.do_step(&u, 1.5, 40);
        let restored = sys.restore_snapshot(&snap).is_ok() && sys.state() == &before;
        let second = sys.do_step(&u, 1.5, 40);
        let same = second.is_ok_and(|s| s.x_end.iter().zip(&first.x_end).all(|(a, b)| a.to_bits() == b.to_bits()));
        if !(restored && same) {
            mismatches += 1;
        }
    }
    ("rollback bit-exact determinism", mismatches == 0, format!("{} systems, {mismatches} mismatches", specs.len()))
}

fn lti_exactness() -> Check {
    let mut r = rng(84);
    let mut worst = 0.0f64;
    for spec in catalog(ModelId::MechTwoBody).systems {
        for _ in 0..10 {
            let t0 = if r.gen_bool(0.5) { r.gen_range(0.0..90.0) } else { r.gen_range(100.0..190.0) };
            let dt = r.gen_range(0.05..1.0);
            let mut sys = at_state(&spec, vec_in(&mut r, spec.n_st, -2.0, 2.0), t0);
            let u = poly(&mut r, spec.n_in, 3, t0, dt);
            let u0 = u.eval(t0);
            let y0 = sys.output(t0, &sys.state().x, &u0, Side::Right);
            let cfg = EstimatorConfig { policy: ControlPolicy::Zoh, need_derivatives: false, ..EstimatorConfig::default() };
            let estimate = Estimator::new(cfg).and_then(|mut est| {
                est.update1(sys.make_linearization_point(&u0, &y0, false)?)?;
                est.update2(dt, 3)?;
                Ok(est.update3(&u)?.0)
            });
            let truth = sys.do_step(&u, t0 + dt, 10_000);
            match (estimate, truth) {
                (Ok(y), Ok(t)) => {
                    for i in 0..y.len() {
                        worst = worst.max((y[i] - t.y_end[i]).abs() / (1.0 + t.y_end[i].abs()));
                    }
                }
                _ => worst = f64::INFINITY,
            }
        }
    }
    ("LTI estimator exactness", worst <= 5e-6, format!("mechanical bodies, dt in [0.05, 1], worst {worst:.2e}"))
}

fn contraction() -> Check {
    let mut r = rng(85);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (n0, n1, n2) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..5));
        let t = Tensor3::from_fn(n0, n1, n2, |_, _, _| r.gen_range(-10.0..10.0));
        let xi = DMatrix::from_fn(n1, n2, |_, _| r.gen_range(-10.0..10.0));
        let unfolded = DMatrix::from_fn(n0, n1 * n2, |i, c| t.get(i, c / n2, c % n2));
        let v = DVector::from_fn(n1 * n2, |c, _| xi[(c / n2, c % n2)]);
        let kron = unfolded * v;
        match t.contract(&xi) {
            Ok(direct) => worst = worst.max((direct - &kron).amax() / (1.0 + kron.amax())),
            Err(_) => worst = f64::INFINITY,
        }
    }
    ("contraction identity", worst <= 1e-12, format!("worst {worst:.2e}"))
}

fn jacobians() -> Check {
    let mut r = rng(86);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (id, spec) in benchmark_specs() {
        let (lo, hi) = state_range(id);
        let m = catalog(id);
        for _ in 0..20 {
            let t = r.gen_range(m.t_init..m.t_end);
            let (x, u) = (vec_in(&mut r, spec.n_st, lo, hi), vec_in(&mut r, spec.n_in, lo, hi));
            let exact = at_state(&spec, x.clone(), t).directional_derivatives(&u);
            let fd = at_state(&spec.clone().without_jacobians(), x, t).directional_derivatives(&u);
            match (exact, fd) {
                (Ok(e), Ok(f)) => {
                    for d in [&e.0 - &f.0, &e.1 - &f.1, &e.2 - &f.2, &e.3 - &f.3] {
                        worst = worst.max(d.amax());
                    }
                }
                _ => worst = f64::INFINITY,
            }
            count += 1;
        }
    }
    ("Jacobian finite-difference agreement", worst <= 1e-6, format!("{count} states, worst {worst:.2e}"))
}

fn control_independence() -> Check {
    let mut r = rng(87);
    let spec = SystemSpec::new(
        "bent",
        DVector::from_vec(vec![0.4, -0.3]),
        DVector::from_element(1, 0.2),
        2,
        |t, x, u| DVector::from_vec(vec![x[1], -x[0] + u[0] * t.cos()]),
        |_, x, u| DVector::from_vec(vec![x[0].sin() + u[0] * u[0], x[0] * x[1]]),
    );
    let dt = 0.1;
    let result = (|| -> cosim::Result<f64> {
        let mut sys = System::new(spec, 0.0)?;
        let mut est = Estimator::new(EstimatorConfig::default())?;
        let mut u_now = sys.spec().u_init.clone();
        for n in 0..=4 {
            let t = n as f64 * dt;
            let y = sys.output(t, &sys.state().x, &u_now, Side::Right);
            est.update1(sys.make_linearization_point(&u_now, &y, false)?)?;
            if n < 4 {
                let u = poly(&mut r, 1, 3, t, dt);
                sys.do_step(&u, t + dt, 50)?;
                u_now = u.eval(t + dt);
            }
        }
        est.update2(dt, 3)?;
        let t = sys.t_reached();
        let tens = est.tensors().expect("after update2").clone();
        let mut worst = 0.0f64;
        let base = poly(&mut r, 1, 3, t, dt);
        let (y0, d0) = est.update3(&base)?;
        let rest = |s: &PolyVecSignal, y: &DVector<f64>, g: &Tensor3| -> cosim::Result<(DVector<f64>, f64)> {
            let gx = g.contract(&build_xi(&s.shift_coefficients(t)).entries)?;
            Ok((y - &gx, 1.0 + y.amax().max(gx.amax())))
        };
        let gd = tens.g_d.as_ref().expect("derivatives on");
        let (r0, s0) = rest(&base, &y0, &tens.g_v)?;
        let (rd0, sd0) = rest(&base, d0.as_ref().expect("derivatives on"), gd)?;
        for _ in 0..20 {
            let other = poly(&mut r, 1, 3, t, dt);
            let (y, d) = est.update3(&other)?;
            let (r1, s1) = rest(&other, &y, &tens.g_v)?;
            let (rd1, sd1) = rest(&other, d.as_ref().expect("derivatives on"), gd)?;
            worst = worst.max((&r1 - &r0).amax() / s0.max(s1)).max((&rd1 - &rd0).amax() / sd0.max(sd1));
        }
        Ok(worst)
    })();
    match result {
        Ok(w) => ("control-part iteration independence", w <= 1e-12, format!("20 iterates, worst {w:.2e}")),
        Err(e) => ("control-part iteration independence", false, e.to_string()),
    }
}

fn genuine_counter() -> Check {
    let mut bad = Vec::new();
    for (id, t_end, dt) in [(ModelId::LvClassic, 2.0, 0.1), (ModelId::LvTimeModified, 2.0, 0.1), (ModelId::MechTwoBody, 120.0, 2.0), (ModelId::ToughTimeOnly, 1.0, 0.1)] {
        let m = catalog(id);
        for mode in [ReplayMode::Costarica, ReplayMode::CostaricaSsr] {
            let cfg = CosimConfig { t_end, ..CosimConfig::for_model(&m, dt, mode) };
            let steps = cfg.grid().len() - 1;
            match run_with_systems(&CouplingGraph::from_model(&m), &cfg) {
                Ok((_, systems)) if systems.iter().all(|s| s.genuine_steps() == steps) => {}
                _ => bad.push(format!("{id} {mode}")),
            }
        }
    }
    ("one genuine integration per step", bad.is_empty(), if bad.is_empty() { "4 models x 2 modes".into() } else { bad.join(", ") })
}

pub fn all() -> Vec<Check> {
    vec![shifts(), hermite(), rollback(), lti_exactness(), contraction(), jacobians(), control_independence(), genuine_counter()]
}
