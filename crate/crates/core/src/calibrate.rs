//! The calibrating function and the calibrated qc-Einstein structure.
//!
//! `μ` is the ratio of the top wedge powers of the ambient complex 2-forms
//! `Γ_i = G(J_j·,·) + √−1 G(J_k·,·)` and their embedded counterparts
//! `γ̂_i = ω̂_j + √−1 ω̂_k` on `H`, and `f = μ^{1/(n+2)}`. From `f` we build
//! `η_s = f η̂_s`, the transversal `ξ = f⁻¹N + r` with `r = −f⁻¹∇f`, the
//! Reeb fields `ξ_s = J_s ξ`, `λ = f G(N,·)`, the projection `π`, the
//! constant `S` and the parallel form `𝔚`.

use num_complex::Complex64;
use thiserror::Error;

use crate::flat_hk::{apply_j_slice, dot, AmbientVector};
use crate::jets::{Jet, JetError, JetVector};
use crate::qc_extract::{extract, Embedding, HattedStructure, QcError};
use crate::residual::Residual;
use crate::surface::Quadric;

/// Cyclic index triples `(i, j, k)`.
pub const CYCLIC: [(usize, usize, usize); 3] = [(1, 2, 3), (2, 3, 1), (3, 1, 2)];

/// Relative residual gate on the least-squares fit of `μ`.
pub const MU_FIT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Qc(#[from] QcError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("2n-form ratio fit residual {0:e} too large: structure is not qc")]
    MuFit(f64),
    #[error("calibration factor not positive real: mu = {0}")]
    MuNotPositive(Complex64),
}

#[derive(Clone, Debug)]
struct CJet {
    re: Jet,
    im: Jet,
}

impl CJet {
    fn mul(&self, o: &CJet) -> CJet {
        CJet { re: &(&self.re * &o.re) - &(&self.im * &o.im), im: &(&self.re * &o.im) + &(&self.im * &o.re) }
    }

    fn add(&self, o: &CJet) -> CJet {
        CJet { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    fn neg(&self) -> CJet {
        CJet { re: -&self.re, im: -&self.im }
    }

    fn conj(&self) -> CJet {
        CJet { re: self.re.clone(), im: -&self.im }
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Pfaffian of the antisymmetric submatrix on `idx`, by expansion along the
/// first row.
fn pfaffian(m: &[Vec<CJet>], idx: &[usize]) -> CJet {
    if idx.len() == 2 {
        return m[idx[0]][idx[1]].clone();
    }
    let first = idx[0];
    let mut acc: Option<CJet> = None;
    for (pos, &j) in idx.iter().enumerate().skip(1) {
        let rest: Vec<usize> = idx.iter().copied().filter(|&t| t != first && t != j).collect();
        let mut term = m[first][j].mul(&pfaffian(m, &rest));
        if pos % 2 == 0 {
            term = term.neg();
        }
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term),
        });
    }
    acc.unwrap()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// The least-squares fits `Γ_i^n = μ_i γ̂_i^n` at a point.
#[derive(Debug, Clone)]
pub struct MuFit {
    pub values: [Complex64; 3],
    /// Max relative residual of the three fits.
    pub fit_residual: f64,
    /// Max |μ_i − μ_j|.
    pub agreement: f64,
    /// Max |Im μ_i|.
    pub imaginary: f64,
    /// `Re μ` as a jet (average of the three fits).
    pub jet: Jet,
}

/// Fit `μ` from the top wedge powers over all `2n`-subsets of the
/// horizontal frame.
pub fn compute_mu(emb: &Embedding) -> Result<MuFit, CalibrationError> {
    let n = emb.n();
    let e = &emb.frame.horizontal;
    let k = e.len();
    let je: Vec<[JetVector; 3]> = e.iter().map(|v| [v.apply_j(1), v.apply_j(2), v.apply_j(3)]).collect();
    let big = |s: usize, a: usize, b: usize| je[a][s - 1].dot(&e[b]);
    let hat = |s: usize, a: usize, b: usize| -emb.ii(&je[a][s - 1], &e[b]);
    let subs = subsets(k, 2 * n);

    let mut values = [Complex64::new(0.0, 0.0); 3];
    let mut jets = Vec::with_capacity(3);
    let mut fit_residual = 0.0f64;
    for (slot, &(_, j, kk)) in CYCLIC.iter().enumerate() {
        let mut gam = vec![vec![]; k];
        let mut gh = vec![vec![]; k];
        for a in 0..k {
            for b in 0..k {
                gam[a].push(CJet { re: big(j, a, b), im: big(kk, a, b) });
                gh[a].push(CJet { re: hat(j, a, b), im: hat(kk, a, b) });
            }
        }
        let top_big: Vec<CJet> = subs.iter().map(|i| pfaffian(&gam, i)).collect();
        let top_hat: Vec<CJet> = subs.iter().map(|i| pfaffian(&gh, i)).collect();
        let mut num: Option<CJet> = None;
        let mut den: Option<Jet> = None;
        for (bg, ht) in top_big.iter().zip(&top_hat) {
            let t = ht.conj().mul(bg);
            let w = &(&ht.re * &ht.re) + &(&ht.im * &ht.im);
            num = Some(match num {
                None => t,
                Some(x) => x.add(&t),
            });
            den = Some(match den {
                None => w,
                Some(x) => &x + &w,
            });
        }
        let (num, den) = (num.unwrap(), den.unwrap());
        let inv = den.recip()?;
        let mu = CJet { re: &num.re * &inv, im: &num.im * &inv };
        let mv = mu.value();
        let scale = top_big.iter().fold(0.0f64, |m, x| m.max(x.value().norm())).max(f64::MIN_POSITIVE);
        for (bg, ht) in top_big.iter().zip(&top_hat) {
            fit_residual = fit_residual.max((bg.value() - mv * ht.value()).norm() / scale);
        }
        values[slot] = mv;
        jets.push(mu.re);
    }
    let agreement = (values[0] - values[1]).norm().max((values[1] - values[2]).norm()).max((values[0] - values[2]).norm());
    let imaginary = values.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    let jet = (&(&jets[0] + &jets[1]) + &jets[2]).scale(1.0 / 3.0);
    Ok(MuFit { values, fit_residual, agreement, imaginary, jet })
}

/// `f = μ^{1/(n+2)}`.
pub fn calibrating_function(mu: &MuFit, n: usize) -> Result<Jet, CalibrationError> {
    if !(mu.jet.value() > 0.0) {
        return Err(CalibrationError::MuNotPositive(mu.values[0]));
    }
    Ok(mu.jet.powf(1.0 / (n as f64 + 2.0))?)
}

/// The calibrated structure at a point.
#[derive(Debug, Clone)]
pub struct CalibratedStructure {
    pub emb: Embedding,
    pub hat: HattedStructure,
    pub mu: MuFit,
    pub f: Jet,
    /// `g`-orthonormal horizontal frame `(E, I_1E, I_2E, I_3E, …)`.
    pub e: Vec<JetVector>,
    pub grad_f: JetVector,
    pub r: JetVector,
    pub xi: JetVector,
    pub xi_s: [JetVector; 3],
    /// `η_s` as ambient covector fields.
    pub eta: [JetVector; 3],
    /// `λ` as an ambient covector field.
    pub lambda: JetVector,
    /// `dη_i(ξ_j, ξ_k)` for `i = 1, 2, 3`.
    pub s_each: [f64; 3],
    pub s: f64,
}

impl CalibratedStructure {
    pub fn n(&self) -> usize {
        self.emb.n()
    }

    /// `g(X,Y) = −f II(X,Y)` on horizontal fields.
    pub fn g(&self, x: &JetVector, y: &JetVector) -> Jet {
        -&(&self.f * &self.emb.ii(x, y))
    }

    pub fn eta_of(&self, s: usize, v: &JetVector) -> Jet {
        self.eta[s - 1].dot(v)
    }

    pub fn lambda_of(&self, v: &JetVector) -> Jet {
        self.lambda.dot(v)
    }

    /// `v′ = v − λ(v) ξ`.
    pub fn prime(&self, v: &JetVector) -> JetVector {
        v.axpy(&(-&self.lambda_of(v)), &self.xi)
    }

    /// `πv = v′ − Σ η_s(v′) ξ_s`.
    pub fn pi(&self, v: &JetVector) -> JetVector {
        let vp = self.prime(v);
        let mut out = vp.clone();
        for s in 1..=3 {
            out = out.axpy(&(-&self.eta_of(s, &vp)), &self.xi_s[s - 1]);
        }
        out
    }

    /// `ω_s(A,B) = g(I_s πA, πB)`.
    pub fn omega(&self, s: usize, a: &JetVector, b: &JetVector) -> Jet {
        let pa = self.pi(a);
        self.g(&pa.apply_j(s), &self.pi(b))
    }

    /// `df(A)` for a tangent field.
    pub fn df(&self, a: &JetVector) -> Jet {
        self.emb.chart.along(a, &self.f)
    }

    /// `[E_1, …, E_4n, ξ_1, ξ_2, ξ_3]`.
    pub fn tangent_frame(&self) -> Vec<JetVector> {
        let mut t = self.e.clone();
        t.extend(self.xi_s.iter().cloned());
        t
    }

    /// `I_s` on horizontal fields (the ambient `J_s`).
    pub fn i_s(&self, s: usize, x: &JetVector) -> JetVector {
        x.apply_j(s)
    }
}

/// Quaternionic Gram–Schmidt of the split-frame seeds with respect to `g`.
fn g_orthonormal_frame(emb: &Embedding, f: &Jet) -> Result<Vec<JetVector>, CalibrationError> {
    let g = |x: &JetVector, y: &JetVector| -&(f * &emb.ii(x, y));
    let mut out: Vec<JetVector> = Vec::with_capacity(4 * emb.n());
    for block in 0..emb.n() {
        let mut v = emb.frame.horizontal[4 * block].clone();
        for w in out.clone().iter() {
            let k = g(&v, w);
            v = v.axpy(&(-&k), w);
        }
        let inv = g(&v, &v).sqrt()?.recip()?;
        let e = v.scale(&inv);
        let (a, b, c) = (e.apply_j(1), e.apply_j(2), e.apply_j(3));
        out.extend([e, a, b, c]);
    }
    Ok(out)
}

/// Assemble the calibrated structure from an oriented embedding.
pub fn calibrated_structure(emb: Embedding, hat: HattedStructure) -> Result<CalibratedStructure, CalibrationError> {
    let mu = compute_mu(&emb)?;
    if mu.fit_residual > MU_FIT_TOL {
        return Err(CalibrationError::MuFit(mu.fit_residual));
    }
    let f = calibrating_function(&mu, emb.n())?;
    let e = g_orthonormal_frame(&emb, &f)?;

    let mut grad_f: Option<JetVector> = None;
    for ea in &e {
        let k = emb.chart.along(ea, &f);
        grad_f = Some(match grad_f {
            None => ea.scale(&k),
            Some(acc) => acc.axpy(&k, ea),
        });
    }
    let grad_f = grad_f.unwrap();
    let finv = f.recip()?;
    let r = grad_f.scale(&(-&finv));
    let xi = (&emb.frame.normal - &grad_f).scale(&finv);
    let xi_s = [xi.apply_j(1), xi.apply_j(2), xi.apply_j(3)];
    let eta = [1, 2, 3].map(|s| emb.eta_hat(s).scale(&f));
    let lambda = emb.frame.normal.scale(&f);

    let mut s_each = [0.0; 3];
    for (slot, &(i, j, k)) in CYCLIC.iter().enumerate() {
        let d = emb.chart.exterior_derivative(&eta[i - 1]);
        s_each[slot] = d.eval(&emb.chart, &xi_s[j - 1], &xi_s[k - 1]).value();
    }
    let s = s_each.iter().sum::<f64>() / 3.0;

    Ok(CalibratedStructure { emb, hat, mu, f, e, grad_f, r, xi, xi_s, eta, lambda, s_each, s })
}

/// Full pipeline at one point.
pub fn calibrate_point(q: &Quadric, x0: &AmbientVector, order: usize) -> Result<CalibratedStructure, CalibrationError> {
    let (emb, hat, _) = extract(q, x0, order)?;
    calibrated_structure(emb, hat)
}

/// `S` at a point, as `dη_i(ξ_j, ξ_k)` averaged over `i`, with its spread.
pub fn qc_scalar(cal: &CalibratedStructure) -> (f64, f64) {
    let lo = cal.s_each.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cal.s_each.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (cal.s, hi - lo)
}

/// Residuals of the calibrated structure's defining identities (values at
/// the base point), each paired with the magnitude of its largest term.
#[derive(Debug, Clone, Default)]
pub struct CalibrationResiduals {
    pub reeb_duality: Residual,
    pub reeb_conditions: Residual,
    pub xi_s_is_j_xi: Residual,
    pub df_xi: Residual,
    pub structure_equations: Residual,
    pub r_identity: Residual,
    pub lambda_j: Residual,
    pub frame_orthonormality: Residual,
}

/// Evaluate every calibration identity at the base point.
pub fn calibration_residuals(cal: &CalibratedStructure) -> CalibrationResiduals {
    let mut out = CalibrationResiduals::default();
    let tf = cal.tangent_frame();
    let k = cal.e.len();

    // η_s(ξ_t) = δ_st
    for s in 1..=3 {
        for t in 1..=3 {
            let v = cal.eta_of(s, &cal.xi_s[t - 1]).value();
            let target = if s == t { 1.0 } else { 0.0 };
            out.reeb_duality.push(v - target, &[v, target]);
        }
        // ξ_s = J_s ξ holds by construction; η_s vanishes on H, λ on ξ_s
        for ea in &cal.e {
            let v = cal.eta_of(s, ea).value();
            out.reeb_conditions.push(v, &[v]);
        }
        let l = cal.lambda_of(&cal.xi_s[s - 1]).value();
        out.reeb_conditions.push(l, &[l]);
        let jx = apply_j_slice(s, &cal.xi.value());
        let d = cal.xi_s[s - 1].value().iter().zip(&jx).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        out.xi_s_is_j_xi.push(d, &[1.0]);
        // df(ξ_s) = 0
        let v = cal.df(&cal.xi_s[s - 1]).value();
        out.df_xi.push(v, &[v]);
    }
    // λ(ξ) = 1 is part of the transversal normalization
    let lx = cal.lambda_of(&cal.xi).value();
    out.reeb_conditions.push(lx - 1.0, &[1.0]);

    // dη_i = 2ω_i + S η_j ∧ η_k on all frame pairs
    for &(i, j, kk) in CYCLIC.iter() {
        let d = cal.emb.chart.exterior_derivative(&cal.eta[i - 1]);
        for a in 0..tf.len() {
            for b in (a + 1)..tf.len() {
                let (x, y) = (&tf[a], &tf[b]);
                let lhs = d.eval(&cal.emb.chart, x, y).value();
                let om = 2.0 * cal.omega(i, x, y).value();
                let wedge = cal.eta_of(j, x).value() * cal.eta_of(kk, y).value()
                    - cal.eta_of(j, y).value() * cal.eta_of(kk, x).value();
                let sw = cal.s * wedge;
                out.structure_equations.push(lhs - om - sw, &[lhs, om, sw]);
            }
        }
    }

    // II(r, X) = f⁻² df(X)
    let f0 = cal.f.value();
    for ea in &cal.e {
        let lhs = cal.emb.ii(&cal.r, ea).value();
        let rhs = cal.df(ea).value() / (f0 * f0);
        out.r_identity.push(lhs - rhs, &[lhs, rhs]);
    }

    // λ(J_s v) = −η_s(v′) on ambient basis vectors
    let space = cal.emb.chart.space().clone();
    let d = cal.emb.quadric.dim();
    let ord = cal.xi.order();
    for i in 0..d {
        let mut basis = vec![0.0; d];
        basis[i] = 1.0;
        let v = JetVector::constant(&space, ord, &basis);
        let vp = cal.prime(&v);
        for s in 1..=3 {
            let lhs = cal.lambda_of(&v.apply_j(s)).value();
            let rhs = -cal.eta_of(s, &vp).value();
            out.lambda_j.push(lhs - rhs, &[lhs, rhs]);
        }
    }

    // g(E_a, E_b) = δ_ab
    for a in 0..k {
        for b in 0..k {
            let v = cal.g(&cal.e[a], &cal.e[b]).value();
            let target = if a == b { 1.0 } else { 0.0 };
            out.frame_orthonormality.push(v - target, &[1.0]);
        }
    }
    out
}

/// The symmetric form `𝔚` on `TK|_M` as an ambient matrix of jets.
#[derive(Debug, Clone)]
pub struct ParallelForm {
    pub w: Vec<Vec<Jet>>,
}

impl ParallelForm {
    pub fn value(&self) -> Vec<Vec<f64>> {
        self.w.iter().map(|row| row.iter().map(Jet::value).collect()).collect()
    }

    /// `𝔚(u, v)` for constant ambient vectors.
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let w = self.value();
        let mut acc = 0.0;
        for (i, row) in w.iter().enumerate() {
            acc += u[i] * dot(row, v);
        }
        acc
    }

    /// `𝔚` applied to a jet vector field: `(𝔚V)_i = Σ_j 𝔚_ij V_j`.
    pub fn apply(&self, v: &JetVector) -> JetVector {
        JetVector(
            self.w
                .iter()
                .map(|row| {
                    let mut acc = &row[0] * &v.0[0];
                    for (a, b) in row.iter().zip(&v.0).skip(1) {
                        acc = &acc + &(a * b);
                    }
                    acc
                })
                .collect(),
        )
    }
}

/// `𝔚(v,w) = −f II(v′,w′) + (S/2) λ(v) λ(w)`.
pub fn parallel_w(cal: &CalibratedStructure) -> ParallelForm {
    let d = cal.emb.quadric.dim();
    let space = cal.emb.chart.space().clone();
    let ord = cal.xi.order();
    let primes: Vec<JetVector> = (0..d)
        .map(|i| {
            let mut b = vec![0.0; d];
            b[i] = 1.0;
            cal.prime(&JetVector::constant(&space, ord, &b))
        })
        .collect();
    let dn: Vec<JetVector> = primes.iter().map(|v| cal.emb.d_normal(v)).collect();
    let half_s = 0.5 * cal.s;
    let w = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    // −f II(v′_i, v′_j) = f G(D_{v′_i} N, v′_j)
                    let ii_term = &cal.f * &dn[i].dot(&primes[j]);
                    let ll = &cal.lambda.0[i] * &cal.lambda.0[j];
                    ii_term.axpy(half_s, &ll)
                })
                .collect()
        })
        .collect();
    ParallelForm { w }
}

/// Residuals attached to `𝔚`, each with the size of its largest term.
#[derive(Debug, Clone, Default)]
pub struct ParallelResiduals {
    pub expansion: Residual,
    pub j_invariance: Residual,
    pub n_df: Residual,
    pub derivative: Residual,
}

pub fn parallel_residuals(cal: &CalibratedStructure, w: &ParallelForm) -> ParallelResiduals {
    let mut out = ParallelResiduals::default();
    let d = cal.emb.quadric.dim();
    let space = cal.emb.chart.space().clone();
    let ord = cal.xi.order();
    let wv = w.value();
    let half_s = 0.5 * cal.s;
    let basis = |i: usize| {
        let mut b = vec![0.0; d];
        b[i] = 1.0;
        b
    };
    let vecs: Vec<JetVector> = (0..d).map(|i| JetVector::constant(&space, ord, &basis(i))).collect();
    let pis: Vec<Vec<f64>> = vecs.iter().map(|v| cal.pi(v).value()).collect();
    let etas: Vec<[f64; 3]> = vecs
        .iter()
        .map(|v| {
            let vp = cal.prime(v);
            [1, 2, 3].map(|s| cal.eta_of(s, &vp).value())
        })
        .collect();
    let lam: Vec<f64> = cal.lambda.value();
    let f0 = cal.f.value();
    for i in 0..d {
        for j in 0..d {
            let g_pp = -f0 * cal.emb.ii_value(&pis[i], &pis[j]);
            let ee: f64 = (0..3).map(|s| etas[i][s] * etas[j][s]).sum::<f64>() * half_s;
            let ll = half_s * lam[i] * lam[j];
            let rhs = g_pp + ee + ll;
            out.expansion.push(wv[i][j] - rhs, &[wv[i][j], g_pp, ee, ll]);
        }
    }
    for s in 1..=3 {
        for i in 0..d {
            for j in 0..d {
                let lhs = w.eval(&apply_j_slice(s, &basis(i)), &apply_j_slice(s, &basis(j)));
                out.j_invariance.push(lhs - wv[i][j], &[lhs, wv[i][j]]);
            }
        }
    }
    let nv = cal.emb.frame.normal.value();
    for a in cal.tangent_frame() {
        let lhs = w.eval(&nv, &a.value());
        let rhs = cal.df(&a).value();
        out.n_df.push(lhs - rhs, &[lhs, rhs]);
        for row in &w.w {
            for x in row {
                let v = cal.emb.chart.along(&a, x).value();
                out.derivative.push(v, &[x.value()]);
            }
        }
    }
    out
}
