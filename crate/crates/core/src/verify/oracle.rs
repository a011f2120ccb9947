//! An independent route to `f`, `φ` and `η_s` at a point of a quadric:
//! dense linear algebra on the ambient shape operator, no jets. Central
//! differences of it along the chart cross-check the jet derivatives.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::calibrate::{CalibratedStructure, CYCLIC};
use crate::flat_hk::{apply_j_slice, dot};
use crate::residual::Residual;
use crate::surface::{ChartPoint, Quadric};

/// Chart step for central differences.
pub const FD_STEP: f64 = 1e-5;

fn pfaffian(a: &[Vec<Complex64>], idx: &[usize]) -> Complex64 {
    if idx.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let i0 = idx[0];
    let mut acc = Complex64::new(0.0, 0.0);
    for (pos, &j) in idx.iter().enumerate().skip(1) {
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&k| k != j).collect();
        let sign = if pos % 2 == 1 { 1.0 } else { -1.0 };
        acc += a[i0][j] * pfaffian(a, &rest) * sign;
    }
    acc
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// `[f, φ, η_1, η_2, η_3]` (each `η_s` as its ambient components) at an
/// ambient point on the quadric.
pub fn closed_form_fields(q: &Quadric, x: &[f64]) -> Vec<f64> {
    let d = q.dim();
    let n = q.n;
    let grad = q.gradient(x);
    let gn = dot(&grad, &grad).sqrt();
    let mut normal: Vec<f64> = grad.iter().map(|g| g / gn).collect();
    let vert: Vec<Vec<f64>> =
        std::iter::once(normal.clone()).chain((1..=3).map(|s| apply_j_slice(s, &normal))).collect();
    // H is the unit eigenspace of the projector killing N and J_s N
    let proj = DMatrix::from_fn(d, d, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - vert.iter().map(|v| v[i] * v[j]).sum::<f64>()
    });
    let eig = SymmetricEigen::new(proj);
    let h: Vec<Vec<f64>> = (0..d)
        .filter(|&k| eig.eigenvalues[k] > 0.5)
        .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let k = h.len();
    // II(X, Y) = −G(D_X N, Y) = −(Hess F)(X, Y) / |∇F| on tangent vectors
    let hess = |u: &[f64], v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += u[i] * 2.0 * q.a_entry(i, j) * v[j];
            }
        }
        acc
    };
    let mut sign = -1.0 / gn;
    let iih = DMatrix::from_fn(k, k, |a, b| sign * hess(&h[a], &h[b]));
    if SymmetricEigen::new(iih).eigenvalues.iter().all(|&e| e > 0.0) {
        sign = -sign;
        normal.iter_mut().for_each(|v| *v = -*v);
    }
    let ii = |u: &[f64], v: &[f64]| sign * hess(u, v);
    let jh: Vec<[Vec<f64>; 3]> = h.iter().map(|v| [1, 2, 3].map(|s| apply_j_slice(s, v))).collect();
    let subs = subsets(k, 2 * n);
    let mut mu = 0.0;
    for &(_, j, kk) in CYCLIC.iter() {
        let big: Vec<Vec<Complex64>> = (0..k)
            .map(|a| (0..k).map(|b| Complex64::new(dot(&jh[a][j - 1], &h[b]), dot(&jh[a][kk - 1], &h[b]))).collect())
            .collect();
        let hat: Vec<Vec<Complex64>> = (0..k)
            .map(|a| (0..k).map(|b| Complex64::new(-ii(&jh[a][j - 1], &h[b]), -ii(&jh[a][kk - 1], &h[b]))).collect())
            .collect();
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for sub in &subs {
            let (pb, ph) = (pfaffian(&big, sub), pfaffian(&hat, sub));
            num += ph.conj() * pb;
            den += ph.norm_sqr();
        }
        mu += (num / den).re / 3.0;
    }
    let f = mu.powf(1.0 / (n as f64 + 2.0));
    let mut out = vec![f, 0.5 * f * f];
    for s in 1..=3 {
        out.extend(apply_j_slice(s, &normal).iter().map(|v| f * v));
    }
    out
}

/// The ambient point with chart coordinates `u`, solving for the implicit
/// coordinate by Newton's method in plain floating point.
pub fn chart_to_ambient(q: &Quadric, cp: &ChartPoint, u: &[f64]) -> Vec<f64> {
    let mut x = cp.base.coords.clone();
    for (c, du) in u.iter().enumerate() {
        x[cp.ambient_index(c)] += du;
    }
    let s = cp.solved_index;
    for _ in 0..50 {
        let v = q.value(&x);
        if v.abs() < 1e-15 {
            break;
        }
        x[s] -= v / q.gradient(&x)[s];
    }
    x
}

/// Compare first and second chart derivatives of `f`, `φ` and `η_s` from
/// jets against central differences of [`closed_form_fields`].
pub fn fd_oracle(q: &Quadric, cal: &CalibratedStructure) -> Residual {
    let cp = &cal.emb.chart;
    let m = cp.nvars();
    let h = FD_STEP;
    let phi = (&cal.f * &cal.f).scale(0.5);
    let mut jets = vec![cal.f.clone(), phi];
    for eta in &cal.eta {
        jets.extend(eta.0.iter().cloned());
    }
    let eval = |u: &[f64]| closed_form_fields(q, &chart_to_ambient(q, cp, u));
    let shifted = |moves: &[(usize, f64)]| {
        let mut u = vec![0.0; m];
        for &(c, t) in moves {
            u[c] += t;
        }
        eval(&u)
    };
    let centre = eval(&vec![0.0; m]);
    let plus: Vec<Vec<f64>> = (0..m).map(|c| shifted(&[(c, h)])).collect();
    let minus: Vec<Vec<f64>> = (0..m).map(|c| shifted(&[(c, -h)])).collect();
    let mut out = Residual::default();
    let grads: Vec<Vec<f64>> = jets.iter().map(|j| j.gradient()).collect();
    let hessians: Vec<Vec<Vec<f64>>> = jets.iter().map(|j| j.hessian()).collect();
    for (k, j) in jets.iter().enumerate() {
        let v = j.value();
        out.push(v - centre[k], &[v, centre[k]]);
    }
    for c in 0..m {
        for k in 0..jets.len() {
            let fd = (plus[c][k] - minus[c][k]) / (2.0 * h);
            out.push(grads[k][c] - fd, &[grads[k][c], fd]);
            let fd2 = (plus[c][k] - 2.0 * centre[k] + minus[c][k]) / (h * h);
            out.push(hessians[k][c][c] - fd2, &[hessians[k][c][c], fd2]);
        }
        for e in (c + 1)..m {
            let pp = shifted(&[(c, h), (e, h)]);
            let pm = shifted(&[(c, h), (e, -h)]);
            let mp = shifted(&[(c, -h), (e, h)]);
            let mm = shifted(&[(c, -h), (e, -h)]);
            for k in 0..jets.len() {
                let fd = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h);
                out.push(hessians[k][c][e] - fd, &[hessians[k][c][e], fd]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::calibrate_point;
    use crate::surface::{catalog, sample_points, CATALOG};

    #[test]
    fn closed_form_matches_known_values() {
        let q = catalog("sphere", 1).unwrap();
        for p in sample_points(&q, 3, 1).unwrap() {
            let v = closed_form_fields(&q, &p.coords);
            assert!((v[0] - 1.0).abs() < 1e-12);
        }
        // ellipsoid at x4 = 1/sqrt(2): mu = sqrt 2
        let q = catalog("ellipsoid", 1).unwrap();
        let mut x = vec![0.0; 8];
        x[4] = 0.5f64.sqrt();
        let v = closed_form_fields(&q, &x);
        assert!((v[0] - 2f64.sqrt().powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_agrees_with_jet_pipeline_values() {
        for name in CATALOG {
            let q = catalog(name, 1).unwrap();
            for p in sample_points(&q, 3, 2).unwrap() {
                let cal = calibrate_point(&q, &p, 2).unwrap();
                let v = closed_form_fields(&q, &p.coords);
                assert!((v[0] - cal.f.value()).abs() < 1e-10, "{name}");
                for s in 0..3 {
                    for (i, e) in cal.eta[s].value().iter().enumerate() {
                        assert!((v[2 + 8 * s + i] - e).abs() < 1e-10, "{name}");
                    }
                }
            }
        }
    }

    #[test]
    fn finite_differences_match_jets() {
        for name in CATALOG {
            let q = catalog(name, 1).unwrap();
            for p in sample_points(&q, 2, 5).unwrap() {
                let cal = calibrate_point(&q, &p, 3).unwrap();
                let r = fd_oracle(&q, &cal);
                assert!(r.passes(1e-4), "{name}: {r:?}");
            }
        }
    }
}
