//! End-to-end acceptance checks. Each check returns an [`Outcome`] instead of
//! panicking so a report can list every result, passing or not.

use std::time::{Duration, Instant};

use cosim::costarica::{Estimator, EstimatorConfig};
use cosim::experiments::{self, convergence_sweep, reference_for, step_error_sweep, StepErrorConfig, REFERENCE_MICRO_DT};
use cosim::laplace::{inverse_laplace_rational, stehfest_weights};
use cosim::models::{self, catalog, ModelId};
use cosim::orchestrator::{CosimConfig, ReplayMode};
use cosim::rational::{laplace_ensemble, RationalFn};
use cosim::signals::PolyVecSignal;
use cosim::systems::{Side, System};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub mod properties;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {}: {} [{:.2} s] {}: {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.title,
            self.detail
        )
    }
}

fn timed(id: u8, title: &'static str, budget: Option<Duration>, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (mut pass, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            pass = false;
            detail.push_str(&format!("; over the {} s budget", b.as_secs_f64()));
        }
    }
    Outcome { id, title, pass, detail, elapsed }
}

fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

fn slope_text(s: Option<f64>) -> String {
    s.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into())
}

/// Stehfest at N = 14 on the decay and on monomials.
pub fn stehfest_correctness() -> Outcome {
    timed(1, "Stehfest correctness at N = 14", Some(Duration::from_secs(1)), || {
        let w = stehfest_weights(14).expect("N = 14 is valid");
        let decay = RationalFn::new(vec![1.0], vec![1.0, 1.0]).expect("valid");
        let mut pass = true;
        let mut parts = Vec::new();
        for t in [0.1f64, 1.0, 5.0] {
            let rel = (inverse_laplace_rational(&decay, t, w).unwrap_or(f64::NAN) / (-t).exp() - 1.0).abs();
            pass &= rel <= 1e-6;
            parts.push(format!("exp t={t}: {}", sci(rel)));
        }
        let mut worst_mono = 0.0f64;
        for k in 0..=5usize {
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let mut den = vec![0.0; k + 1];
            den.push(1.0);
            let f = RationalFn::new(vec![fact], den).expect("valid");
            for t in [0.1f64, 0.7, 1.0, 3.0] {
                let rel = (inverse_laplace_rational(&f, t, w).unwrap_or(f64::NAN) / t.powi(k as i32) - 1.0).abs();
                worst_mono = worst_mono.max(rel);
            }
        }
        pass &= worst_mono <= 1e-7;
        parts.push(format!("monomials k<=5 worst: {} (limits 1e-6, 1e-7)", sci(worst_mono)));
        (pass, parts.join(", "))
    })
}

fn random_matrix(rng: &mut StdRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn normwise(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Rational G, P and R against dense solves on random systems.
pub fn resolvent_oracle() -> Outcome {
    timed(2, "resolvent vs dense solve", Some(Duration::from_secs(5)), || {
        let mut rng = StdRng::seed_from_u64(2);
        let mut worst = 0.0f64;
        let mut failures = 0;
        for _ in 0..100 {
            let n = rng.gen_range(1..=5);
            let (m, p) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let a = random_matrix(&mut rng, n, n);
            let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let a = if radius > 0.0 { a * (rng.gen_range(0.1..4.9) / radius) } else { a };
            let (b, c, d) = (random_matrix(&mut rng, n, m), random_matrix(&mut rng, p, n), random_matrix(&mut rng, p, m));
            let ens = match laplace_ensemble(&a, &b, &c, &d) {
                Ok(e) => e,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            for _ in 0..50 {
                // Log-uniform over the abscissae the inversion actually visits.
                let s = 10f64.powf(rng.gen_range(-1.0..3.0));
                let lu = (DMatrix::<f64>::identity(n, n) * s - &a).lu();
                let (Some(x), Some(y)) = (lu.solve(&b), lu.solve(&DMatrix::identity(n, n))) else {
                    failures += 1;
                    continue;
                };
                let (g, pm) = (&c * x + &d, &c * y);
                let r = &pm / s;
                match (ens.g.eval(s), ens.p.eval(s), ens.r.eval(s)) {
                    (Ok(eg), Ok(ep), Ok(er)) => {
                        worst = worst.max(normwise(&eg, &g)).max(normwise(&ep, &pm)).max(normwise(&er, &r));
                    }
                    _ => failures += 1,
                }
            }
        }
        (
            worst <= 1e-9 && failures == 0,
            format!("100 systems x 50 s, worst relative error {} (limit 1e-9), {failures} evaluation failures", sci(worst)),
        )
    })
}

/// The estimate on `x' = a(t)`, `y = x + b(t)` against its closed form.
pub fn tough_closed_form() -> Outcome {
    timed(3, "tough case closed form", None, || {
        let mut rng = StdRng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (pa, pb) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (wa, wb) = (rng.gen_range(0.2..4.0), rng.gen_range(0.2..4.0));
            let a = move |t: f64| pa * (wa * t).cos();
            let b = move |t: f64| pb * (wb * t).sin();
            let (t0, dt, x0) = (rng.gen_range(0.0..10.0), 10f64.powf(rng.gen_range(-3.0..0.5)), rng.gen_range(-2.0..2.0));
            let mut spec = models::make_tough(a, b, 0.0);
            spec.x_init = DVector::from_element(1, x0);
            let sys = System::new(spec, t0).expect("valid system");
            let u0 = DVector::zeros(1);
            let y0 = sys.output(t0, &sys.state().x, &u0, Side::Right);
            let mut est = Estimator::new(EstimatorConfig::default()).expect("default order");
            let y = sys
                .make_linearization_point(&u0, &y0, false)
                .and_then(|lin| est.update1(lin))
                .and_then(|_| est.update2(dt, 3))
                .and_then(|_| {
                    let u = PolyVecSignal::new(DMatrix::from_fn(1, 4, |_, _| rng.gen_range(-1.0..1.0)), t0)?;
                    est.update3(&u)
                });
            let err = match y {
                Ok((y, _)) => (y[0] - (x0 + dt * a(t0) + b(t0))).abs(),
                Err(_) => f64::INFINITY,
            };
            worst = worst.max(err);
        }
        (worst <= 1e-8, format!("20 instances, worst |error| {} (limit 1e-8)", sci(worst)))
    })
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn step_order(id: u8, modified: bool, band: (f64, f64)) -> Outcome {
    let title = if modified { "single-step order, modified prey" } else { "single-step order, classic prey" };
    timed(id, title, Some(Duration::from_secs(30)), || {
        let prey = models::isolated_prey(modified);
        let dts = experiments::steperror_dts();
        match step_error_sweep(&prey, &dts, &StepErrorConfig::default(), threads()) {
            Ok((points, slope)) => {
                let pass = slope.is_some_and(|s| s >= band.0 && s <= band.1);
                let errs: Vec<String> = points.iter().map(|p| sci(p.error)).collect();
                (
                    pass,
                    format!(
                        "{} dts in [1e-3, 1e-1], slope {} (band [{}, {}]), errors {}",
                        dts.len(),
                        slope_text(slope),
                        band.0,
                        band.1,
                        errs.join(" ")
                    ),
                )
            }
            Err(e) => (false, format!("sweep failed: {e}")),
        }
    })
}

pub fn classic_step_order() -> Outcome {
    step_order(4, false, (2.6, 3.4))
}

pub fn modified_step_order() -> Outcome {
    step_order(5, true, (1.7, 2.3))
}

struct ModeResult {
    mode: ReplayMode,
    errors: Vec<f64>,
    slope: Option<f64>,
}

fn sweep(id: ModelId, dts: &[f64], modes: &[ReplayMode]) -> Result<Vec<ModeResult>, String> {
    let model = catalog(id);
    let reference = reference_for(&model, dts, REFERENCE_MICRO_DT).map_err(|e| e.to_string())?;
    let template = CosimConfig::for_model(&model, dts[0], modes[0]);
    let outcomes = convergence_sweep(&model, dts, modes, &template, &reference, threads()).map_err(|e| e.to_string())?;
    Ok(outcomes
        .into_iter()
        .map(|o| ModeResult {
            mode: o.mode,
            errors: o.report.points.iter().map(|p| p.error).collect(),
            slope: o.report.slope,
        })
        .collect())
}

fn describe(r: &ModeResult) -> String {
    format!(
        "{} slope {} errors {}",
        r.mode,
        slope_text(r.slope),
        r.errors.iter().map(|e| sci(*e)).collect::<Vec<_>>().join(" ")
    )
}

/// Mechanical two-body convergence for rollback and COSTARICA.
pub fn mechanical_convergence() -> Outcome {
    timed(6, "mechanical convergence", Some(Duration::from_secs(120)), || {
        let dts = experiments::MECH_DTS;
        let res = match sweep(ModelId::MechTwoBody, &dts, &[ReplayMode::Rollback, ReplayMode::Costarica]) {
            Ok(r) => r,
            Err(e) => return (false, format!("sweep failed: {e}")),
        };
        let in_band = |r: &ModeResult| r.slope.is_some_and(|s| (2.5..=3.5).contains(&s));
        let last = dts.len() - 1;
        let ratio = res[1].errors[last] / res[0].errors[last];
        let factor_ok = (1.0 / 3.0..=3.0).contains(&ratio);
        let pass = res.iter().all(in_band) && factor_ok;
        (
            pass,
            format!(
                "{}; {}; band [2.5, 3.5]; COSTARICA/ROLLBACK at dt=0.2: {:.3} (limit factor 3)",
                describe(&res[0]),
                describe(&res[1]),
                ratio
            ),
        )
    })
}

/// Lotka-Volterra convergence and mode ordering.
pub fn lotka_volterra_convergence() -> Outcome {
    timed(7, "Lotka-Volterra convergence", Some(Duration::from_secs(300)), || {
        let dts = experiments::LV_DTS;
        let res = match sweep(ModelId::LvClassic, &dts, &ReplayMode::ALL) {
            Ok(r) => r,
            Err(e) => return (false, format!("sweep failed: {e}")),
        };
        let (rb, co, ssr) = (&res[0], &res[1], &res[2]);
        let slope_ok = co.slope.is_some_and(|s| (1.6..=2.4).contains(&s));
        let rb_ok = rb.errors.iter().zip(&co.errors).all(|(r, c)| r <= c);
        let ssr_ok = ssr.errors.iter().zip(&co.errors).all(|(s, c)| s >= c);
        (
            slope_ok && rb_ok && ssr_ok,
            format!(
                "{}; {}; {}; COSTARICA band [1.6, 2.4] {}; ROLLBACK <= COSTARICA {}; SSR >= COSTARICA {}",
                describe(rb),
                describe(co),
                describe(ssr),
                if slope_ok { "met" } else { "missed" },
                if rb_ok { "holds" } else { "violated" },
                if ssr_ok { "holds" } else { "violated" },
            ),
        )
    })
}

pub fn property_suites() -> Outcome {
    timed(8, "property suites", None, || {
        let results = properties::all();
        let failed: Vec<&str> = results.iter().filter(|(_, ok, _)| !ok).map(|(n, _, _)| *n).collect();
        let summary = results.iter().map(|(n, ok, d)| format!("{n} {} ({d})", if *ok { "ok" } else { "FAILED" })).collect::<Vec<_>>();
        (failed.is_empty(), summary.join("; "))
    })
}
