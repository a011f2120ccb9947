//! The embedded qc structure read off the second fundamental form:
//! `II`, Duchemin's definiteness/invariance criterion, `η̂_s`, `ω̂_s`, `ĝ`
//! and the umbilicity defect.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::flat_hk::{apply_j_slice, dot, AmbientVector};
use crate::jets::{Jet, JetError, JetVector};
use crate::surface::{make_chart, split_frame, ChartPoint, Quadric, SplitFrame, SurfaceError};

/// Relative floor on the smallest eigenvalue of `II|_H`.
pub const DEFINITENESS_MARGIN: f64 = 1e-6;
/// Relative tolerance on `II(I_s·, I_s·) − II`.
pub const INVARIANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum QcError {
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("II restricted to H is indefinite (smallest |eigenvalue| ratio {0:e})")]
    Indefinite(f64),
    #[error("II restricted to H is not Q-invariant (residual {0:e})")]
    NotInvariant(f64),
}

/// A point of `M` with its chart, split frame and cached normal derivatives.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub quadric: Quadric,
    pub chart: ChartPoint,
    pub frame: SplitFrame,
    /// `∂N/∂u_c` for each chart variable.
    dn: Vec<JetVector>,
}

impl Embedding {
    /// Chart, frame and normal derivatives at `x0`, without orientation
    /// fixing.
    pub fn new(q: &Quadric, x0: &AmbientVector, order: usize) -> Result<Self, QcError> {
        let chart = make_chart(q, x0, order)?;
        let frame = split_frame(q, &chart)?;
        Ok(Self::from_parts(q.clone(), chart, frame))
    }

    pub fn from_parts(quadric: Quadric, chart: ChartPoint, frame: SplitFrame) -> Self {
        let dn = (0..chart.nvars()).map(|c| JetVector(frame.normal.0.iter().map(|x| x.partial(c)).collect())).collect();
        Self { quadric, chart, frame, dn }
    }

    pub fn n(&self) -> usize {
        self.quadric.n
    }

    pub fn flip(&mut self) {
        self.frame.flip();
        for v in self.dn.iter_mut() {
            *v = -&*v;
        }
    }

    /// `D_A N` for a tangent field `A`.
    pub fn d_normal(&self, a: &JetVector) -> JetVector {
        let mut acc: Option<JetVector> = None;
        for (c, dnc) in self.dn.iter().enumerate() {
            let ac = &a.0[self.chart.ambient_index(c)];
            if ac.max_abs() == 0.0 {
                continue;
            }
            acc = Some(match acc {
                None => dnc.scale(ac),
                Some(s) => s.axpy(ac, dnc),
            });
        }
        acc.unwrap_or_else(|| JetVector::constant(self.chart.space(), self.dn[0].order().min(a.order()), &vec![0.0; a.dim()]))
    }

    /// `II(A, B) = −G(D_A N, B)` for tangent fields.
    pub fn ii(&self, a: &JetVector, b: &JetVector) -> Jet {
        -self.d_normal(a).dot(b)
    }

    /// `II` on tangent vectors given by their values at the base point.
    pub fn ii_value(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut dna = vec![0.0; a.len()];
        for (c, dnc) in self.dn.iter().enumerate() {
            let ac = a[self.chart.ambient_index(c)];
            if ac != 0.0 {
                for (o, x) in dna.iter_mut().zip(&dnc.0) {
                    *o += ac * x.value();
                }
            }
        }
        -dot(&dna, b)
    }

    /// `η̂_s` as an ambient covector field, `G(J_s N, ·)`.
    pub fn eta_hat(&self, s: usize) -> &JetVector {
        &self.frame.jn[s - 1]
    }

    /// Horizontal frame values at the base point.
    pub fn horizontal_values(&self) -> Vec<Vec<f64>> {
        self.frame.horizontal.iter().map(JetVector::value).collect()
    }

    /// Matrix of `II` on a list of tangent vectors (values).
    pub fn ii_matrix(&self, basis: &[Vec<f64>]) -> DMatrix<f64> {
        let k = basis.len();
        DMatrix::from_fn(k, k, |i, j| self.ii_value(&basis[i], &basis[j]))
    }
}

/// `II` at a point, in the split frame.
#[derive(Debug, Clone)]
pub struct SecondFundamentalForm {
    /// On the tangent basis `[J_1N, J_2N, J_3N, e_1, …]`.
    pub tangent: DMatrix<f64>,
    /// Restriction to `H` in the frame `e_a`.
    pub horizontal: DMatrix<f64>,
    pub symmetry_residual: f64,
    pub flipped: bool,
}

/// Compute `II` and orient the normal so that `II|_H` is negative definite.
pub fn second_fundamental_form(emb: &mut Embedding) -> Result<SecondFundamentalForm, QcError> {
    let h = emb.horizontal_values();
    let mut hm = emb.ii_matrix(&h);
    let sym = 0.5 * (&hm + hm.transpose());
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let scale = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (lo, hi) = (eig.min(), eig.max());
    let margin = DEFINITENESS_MARGIN * scale.max(f64::MIN_POSITIVE);
    let flipped = if hi < -margin {
        false
    } else if lo > margin {
        emb.flip();
        hm = -hm;
        true
    } else {
        let ratio = if scale > 0.0 { lo.abs().min(hi.abs()) / scale } else { 0.0 };
        return Err(QcError::Indefinite(ratio));
    };
    let t: Vec<Vec<f64>> = emb.frame.tangent_basis().iter().map(JetVector::value).collect();
    let tangent = emb.ii_matrix(&t);
    let symmetry_residual = (&tangent - tangent.transpose()).amax();
    Ok(SecondFundamentalForm { tangent, horizontal: hm, symmetry_residual, flipped })
}

/// Outcome of Duchemin's criterion at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DucheminReport {
    pub is_qc: bool,
    pub invariance_residual: f64,
    pub definiteness_margin: f64,
}

/// Matrix of `J_s` on the horizontal frame: `P[b][a] = G(J_s e_a, e_b)`.
pub fn j_matrix(h: &[Vec<f64>], s: usize) -> DMatrix<f64> {
    let k = h.len();
    DMatrix::from_fn(k, k, |b, a| dot(&apply_j_slice(s, &h[a]), &h[b]))
}

pub fn duchemin_test(ii: &SecondFundamentalForm, frame: &SplitFrame) -> DucheminReport {
    let h: Vec<Vec<f64>> = frame.horizontal.iter().map(JetVector::value).collect();
    let m = &ii.horizontal;
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut invariance = 0.0f64;
    for s in 1..=3 {
        let p = j_matrix(&h, s);
        invariance = invariance.max((p.transpose() * m * &p - m).amax() / scale);
    }
    let eig = SymmetricEigen::new(-0.5 * (m + m.transpose())).eigenvalues;
    let margin = eig.min() / scale;
    DucheminReport {
        is_qc: margin > DEFINITENESS_MARGIN && invariance < INVARIANCE_TOL,
        invariance_residual: invariance,
        definiteness_margin: margin,
    }
}

/// The embedded qc structure at a point.
#[derive(Debug, Clone)]
pub struct HattedStructure {
    pub ii: SecondFundamentalForm,
    /// `η̂_s(e_a)` on the tangent basis, per `s`.
    pub eta_hat: [Vec<f64>; 3],
    /// `ω̂_s(e_a, e_b) = −II(I_s e_a, e_b)` on `H`.
    pub omega_hat: [DMatrix<f64>; 3],
    /// `ĝ(X,Y) = −ω̂_s(I_s X, Y)`, from `s = 1`.
    pub g_hat: DMatrix<f64>,
    /// Max pairwise difference of `ĝ` computed from each `s`.
    pub g_hat_spread: f64,
    /// `‖II − (tr II / (4n+3)) h‖_F` on the orthonormal tangent basis.
    pub umbilical_defect: f64,
    /// Max of `|2ĝ(I_sX,Y) − dη̂_s(X,Y)|` over `s` and horizontal pairs.
    pub compatibility_residual: f64,
}

pub fn hatted_structure(emb: &Embedding, ii: &SecondFundamentalForm) -> HattedStructure {
    let h = emb.horizontal_values();
    let k = h.len();
    let tangent = emb.frame.tangent_basis();
    let t: Vec<Vec<f64>> = tangent.iter().map(JetVector::value).collect();

    let eta_hat = [1, 2, 3].map(|s| {
        let jn = emb.eta_hat(s).value();
        t.iter().map(|v| dot(&jn, v)).collect::<Vec<f64>>()
    });
    let omega_hat = [1, 2, 3].map(|s| {
        let p = j_matrix(&h, s);
        // ω̂_s(e_a, e_b) = −II(J_s e_a, e_b) = −Σ_c P[c][a] II(e_c, e_b)
        -(p.transpose() * &ii.horizontal)
    });
    let g_from = |s: usize| {
        let p = j_matrix(&h, s);
        -(p.transpose() * &omega_hat[s - 1])
    };
    let gs = [g_from(1), g_from(2), g_from(3)];
    let g_hat_spread = (&gs[0] - &gs[1]).amax().max((&gs[1] - &gs[2]).amax()).max((&gs[0] - &gs[2]).amax());

    let dim = t.len() as f64;
    let tr = ii.tangent.trace();
    let umb = &ii.tangent - DMatrix::identity(t.len(), t.len()) * (tr / dim);
    let umbilical_defect = umb.norm();

    let mut compat = 0.0f64;
    for s in 1..=3 {
        let d = emb.chart.exterior_derivative(emb.eta_hat(s));
        let p = j_matrix(&h, s);
        let g_is = p.transpose() * &gs[0];
        for a in 0..k {
            for b in (a + 1)..k {
                let lhs = 2.0 * g_is[(a, b)];
                let rhs = d.eval(&emb.chart, &emb.frame.horizontal[a], &emb.frame.horizontal[b]).value();
                compat = compat.max((lhs - rhs).abs());
            }
        }
    }

    HattedStructure {
        ii: ii.clone(),
        eta_hat,
        omega_hat,
        g_hat: gs[0].clone(),
        g_hat_spread,
        umbilical_defect,
        compatibility_residual: compat,
    }
}

/// Build the oriented embedding and its hatted structure at `x0`, rejecting
/// points where Duchemin's criterion fails.
pub fn extract(q: &Quadric, x0: &AmbientVector, order: usize) -> Result<(Embedding, HattedStructure, DucheminReport), QcError> {
    let mut emb = Embedding::new(q, x0, order)?;
    let ii = second_fundamental_form(&mut emb)?;
    let report = duchemin_test(&ii, &emb.frame);
    if !report.is_qc {
        return Err(QcError::NotInvariant(report.invariance_residual));
    }
    let hat = hatted_structure(&emb, &ii);
    Ok((emb, hat, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{catalog, sample_points, CATALOG};

    #[test]
    fn sphere_second_fundamental_form_is_minus_metric() {
        let q = catalog("sphere", 1).unwrap();
        for p in sample_points(&q, 5, 1).unwrap() {
            let mut emb = Embedding::new(&q, &p, 2).unwrap();
            let ii = second_fundamental_form(&mut emb).unwrap();
            assert!(!ii.flipped);
            let id = DMatrix::<f64>::identity(7, 7);
            assert!((&ii.tangent + id).amax() < 1e-12);
            let hat = hatted_structure(&emb, &ii);
            assert!(hat.umbilical_defect < 1e-10);
            assert!((&hat.g_hat - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        }
    }

    #[test]
    fn catalog_surfaces_pass_duchemin() {
        for name in CATALOG {
            let q = catalog(name, 1).unwrap();
            for p in sample_points(&q, 20, 9).unwrap() {
                let (_, hat, rep) = extract(&q, &p, 2).unwrap();
                assert!(rep.is_qc, "{name}");
                assert!(rep.invariance_residual < 1e-10, "{name}: {rep:?}");
                assert!(hat.ii.symmetry_residual < 1e-10, "{name}");
                assert!(hat.g_hat_spread < 1e-10, "{name}");
                assert!(hat.compatibility_residual < 1e-8, "{name}: {}", hat.compatibility_residual);
            }
        }
    }

    #[test]
    fn ellipsoid_special_point() {
        let q = catalog("ellipsoid", 1).unwrap();
        let mut x = vec![0.0; 8];
        x[4] = 0.5f64.sqrt();
        let p = AmbientVector { coords: x, n: 1 };
        let (_, hat, rep) = extract(&q, &p, 2).unwrap();
        assert!(rep.invariance_residual < 1e-9);
        // II|_H = −(1/√2) G there
        let expect = -DMatrix::<f64>::identity(4, 4) * 0.5f64.sqrt();
        assert!((&hat.ii.horizontal - expect).amax() < 1e-12);
        assert!(hat.umbilical_defect > 0.01);
    }

    #[test]
    fn non_invariant_quadric_fails() {
        let mut a = vec![0.0; 64];
        for (i, v) in [1.0, 2.0, 3.0, 4.0, 1.0, 1.0, 1.0, 1.0].iter().enumerate() {
            a[i * 8 + i] = *v;
        }
        let q = Quadric::new("skew", 1, a, vec![0.0; 8], -1.0).unwrap();
        let pts = sample_points(&q, 10, 4).unwrap();
        let fails = pts.iter().filter(|p| extract(&q, p, 2).is_err()).count();
        assert!(fails >= 9, "{fails}");
    }

    #[test]
    fn orientation_flip_makes_negative_definite() {
        // sphere written as −|x|² + 1 = 0 has inward gradient
        let mut a = vec![0.0; 64];
        (0..8).for_each(|i| a[i * 8 + i] = -1.0);
        let q = Quadric::new("inward", 1, a, vec![0.0; 8], 1.0).unwrap();
        let p = &sample_points(&catalog("sphere", 1).unwrap(), 1, 3).unwrap()[0];
        let mut emb = Embedding::new(&q, p, 2).unwrap();
        let ii = second_fundamental_form(&mut emb).unwrap();
        assert!(ii.flipped);
        assert!(SymmetricEigen::new(ii.horizontal.clone()).eigenvalues.max() < 0.0);
        let n = emb.frame.normal.value();
        assert!(dot(&n, &p.coords) > 0.99);
    }
}
