//! Monolithic reference integration with fixed-step RK4.

use std::sync::Arc;

use crate::error::{CosimError, Result};
use crate::models::{Model, MonoRhs, Monolithic};
use crate::orchestrator::CouplingGraph;

/// States sampled on a uniform base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrace {
    pub t_init: f64,
    pub base_dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl DenseTrace {
    /// The sample at `t`, if `t` lies on the base grid.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let k = ((t - self.t_init) / self.base_dt).round();
        if k < 0.0 {
            return None;
        }
        let k = k as usize;
        let tk = *self.times.get(k)?;
        ((t - tk).abs() <= 1e-9 * t.abs().max(1.0)).then(|| self.states[k].as_slice())
    }
}

fn rk4_segment(rhs: &MonoRhs, z: &mut [f64], a: f64, b: f64, n: usize, clamp_end: bool) {
    let dim = z.len();
    let h = (b - a) / n as f64;
    let tt = |t: f64| if clamp_end && t >= b { b.next_down() } else { t };
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for i in 0..n {
        let t = a + i as f64 * h;
        let tn = if i + 1 == n { b } else { a + (i + 1) as f64 * h };
        let tm = t + 0.5 * h;
        rhs(tt(t), z, &mut k1);
        for j in 0..dim {
            tmp[j] = z[j] + 0.5 * h * k1[j];
        }
        rhs(tt(tm), &tmp, &mut k2);
        for j in 0..dim {
            tmp[j] = z[j] + 0.5 * h * k2[j];
        }
        rhs(tt(tm), &tmp, &mut k3);
        for j in 0..dim {
            tmp[j] = z[j] + h * k3[j];
        }
        rhs(tt(tn), &tmp, &mut k4);
        for j in 0..dim {
            z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
}

/// Integrates `mono` from `t_init` to `t_end` with steps of at most
/// `micro_dt`, sampling every `base_dt`. Steps never straddle a sample or a
/// breakpoint; a segment ending on a breakpoint sees the left limit there.
pub fn integrate_monolithic(mono: &Monolithic, t_init: f64, t_end: f64, micro_dt: f64, base_dt: f64) -> Result<DenseTrace> {
    if !(micro_dt > 0.0) || !(base_dt > 0.0) || !(t_end >= t_init) {
        return Err(CosimError::Usage(format!(
            "reference integration needs positive steps and t_end >= t_init (micro_dt={micro_dt}, base_dt={base_dt})"
        )));
    }
    let n_samples = ((t_end - t_init) / base_dt - 1e-9).ceil().max(0.0) as usize;
    let sample = |k: usize| (t_init + k as f64 * base_dt).min(t_end);
    let mut z = mono.x0.clone();
    let mut times = vec![t_init];
    let mut states = vec![z.clone()];
    let mut bps: Vec<f64> = mono.breakpoints.iter().copied().filter(|b| *b > t_init && *b < t_end).collect();
    bps.sort_by(f64::total_cmp);
    let mut t = t_init;
    for k in 1..=n_samples {
        let next = sample(k);
        let mut stops: Vec<(f64, bool)> = bps.iter().filter(|&&b| b > t && b < next).map(|&b| (b, true)).collect();
        let near_bp = bps.iter().any(|b| (next - b).abs() <= 1e-9 * b.abs().max(1.0));
        stops.push((next, near_bp));
        for (stop, clamp) in stops {
            let n = ((stop - t) / micro_dt - 1e-9).ceil().max(1.0) as usize;
            rk4_segment(&mono.rhs, &mut z, t, stop, n, clamp);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(CosimError::Divergence { last_time: t });
            }
            t = stop;
        }
        times.push(t);
        states.push(z.clone());
    }
    Ok(DenseTrace { t_init, base_dt, times, states })
}

pub fn monolithic_reference(model: &Model, micro_dt: f64, base_dt: f64) -> Result<DenseTrace> {
    integrate_monolithic(&model.monolithic, model.t_init, model.t_end, micro_dt, base_dt)
}

/// The coupled graph as one ODE: inputs are resolved from the wired
/// outputs at every evaluation. Algebraic loops are relaxed by a fixed
/// number of sweeps, which is exact when there are none.
pub fn assemble_monolithic(graph: &CouplingGraph) -> Monolithic {
    let specs = graph.systems.clone();
    let sources = graph.sources();
    let offsets: Vec<usize> = specs
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.n_st;
            Some(o)
        })
        .collect();
    let x0 = specs.iter().flat_map(|s| s.x_init.iter().copied()).collect();
    let mut breakpoints: Vec<f64> = specs.iter().flat_map(|s| s.output_breakpoints.iter().copied()).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let sweeps = specs.len() + 1;
    let rhs: MonoRhs = Arc::new(move |t, z, dz| {
        let xs: Vec<nalgebra::DVector<f64>> = specs
            .iter()
            .zip(&offsets)
            .map(|(s, &o)| nalgebra::DVector::from_column_slice(&z[o..o + s.n_st]))
            .collect();
        let mut us: Vec<nalgebra::DVector<f64>> = specs.iter().map(|s| s.u_init.clone()).collect();
        for _ in 0..sweeps {
            let ys: Vec<_> = specs.iter().enumerate().map(|(i, s)| (s.g)(t, &xs[i], &us[i])).collect();
            for (i, srcs) in sources.iter().enumerate() {
                for (j, &(si, oi)) in srcs.iter().enumerate() {
                    us[i][j] = ys[si][oi];
                }
            }
        }
        for (i, s) in specs.iter().enumerate() {
            let f = (s.f)(t, &xs[i], &us[i]);
            dz[offsets[i]..offsets[i] + s.n_st].copy_from_slice(f.as_slice());
        }
    });
    Monolithic { x0, rhs, breakpoints }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_system() {
        let mono = Monolithic {
            x0: vec![3.0, -1.0],
            rhs: Arc::new(|_, _, dz| dz.fill(0.0)),
            breakpoints: vec![],
        };
        let tr = integrate_monolithic(&mono, 0.0, 2.0, 0.1, 0.5).unwrap();
        assert_eq!(tr.times.len(), 5);
        assert!(tr.states.iter().all(|s| s == &vec![3.0, -1.0]));
        assert_eq!(tr.at(1.5).unwrap(), &[3.0, -1.0]);
        assert!(tr.at(1.25).is_none());
    }

    #[test]
    fn breakpoint_left_limit() {
        // x' = 1 before t = 1, 0 from then on.
        let mono = Monolithic {
            x0: vec![0.0],
            rhs: Arc::new(|t, _, dz| dz[0] = if t < 1.0 { 1.0 } else { 0.0 }),
            breakpoints: vec![1.0],
        };
        let tr = integrate_monolithic(&mono, 0.0, 2.0, 0.3, 0.7).unwrap();
        assert!((tr.states.last().unwrap()[0] - 1.0).abs() < 1e-14);
        let tr = integrate_monolithic(&mono, 0.0, 2.0, 0.3, 0.5).unwrap();
        assert!((tr.at(1.0).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponential() {
        let mono = Monolithic {
            x0: vec![1.0],
            rhs: Arc::new(|_, z, dz| dz[0] = -z[0]),
            breakpoints: vec![],
        };
        let tr = integrate_monolithic(&mono, 0.0, 1.0, 1e-3, 1.0).unwrap();
        assert!((tr.states[1][0] - (-1.0f64).exp()).abs() < 1e-13);
    }
}
