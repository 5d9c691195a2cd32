//! Anderson mixing for fixed-point iterations `z = G(z)`.

use nalgebra::{DMatrix, DVector};

/// Tikhonov term added to the normal equations, relative to their scale.
pub const REGULARIZATION: f64 = 1e-12;

/// Next iterate from the history of arguments `z_k` and their images
/// `G(z_k)`, oldest first. Uses the last `min(depth, m)` residual
/// differences; falls back to the plain step `G(z_m)` whenever the least
/// squares problem is degenerate.
pub fn anderson_update(iterates: &[DVector<f64>], images: &[DVector<f64>], depth: usize) -> DVector<f64> {
    assert!(!images.is_empty() && iterates.len() == images.len(), "anderson_update: mismatched history");
    let last = images.len() - 1;
    let plain = images[last].clone();
    let m = depth.min(last);
    if m == 0 {
        return plain;
    }
    let res: Vec<DVector<f64>> = (last - m..=last).map(|k| &images[k] - &iterates[k]).collect();
    let n = plain.len();
    let mut d_res = DMatrix::zeros(n, m);
    let mut d_img = DMatrix::zeros(n, m);
    for j in 0..m {
        let k = last - m + j;
        d_res.set_column(j, &(&res[j + 1] - &res[j]));
        d_img.set_column(j, &(&images[k + 1] - &images[k]));
    }
    let mut normal = d_res.transpose() * &d_res;
    let scale = normal.diagonal().amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return plain;
    }
    for i in 0..m {
        normal[(i, i)] += REGULARIZATION * scale;
    }
    let rhs = d_res.transpose() * &res[m];
    let gamma = match normal.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => return plain,
    };
    if gamma.iter().any(|g| !g.is_finite()) {
        return plain;
    }
    let next = plain - d_img * gamma;
    if next.iter().all(|v| v.is_finite()) {
        next
    } else {
        images[last].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn single_entry_is_plain() {
        let z = anderson_update(&[s(0.0)], &[s(1.0)], 1);
        assert_eq!(z, s(1.0));
    }

    #[test]
    fn scalar_affine_map() {
        let g = |z: &DVector<f64>| z * 0.5 + s(1.0);
        for depth in 1..4 {
            let mut zs = vec![s(0.0)];
            let mut gs = vec![g(&zs[0])];
            for _ in 0..3 {
                let z = anderson_update(&zs, &gs, depth);
                gs.push(g(&z));
                zs.push(z);
            }
            // Exact up to the regularization term.
            assert!((zs[2][0] - 2.0).abs() < 1e-10, "depth {depth}: {}", zs[2][0]);
        }
    }

    #[test]
    fn rank_deficient_history_falls_back() {
        let zs = vec![s(1.0), s(1.0)];
        let gs = vec![s(2.0), s(2.0)];
        assert_eq!(anderson_update(&zs, &gs, 3), s(2.0));
    }
}
