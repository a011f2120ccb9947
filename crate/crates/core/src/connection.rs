//! The Biquard connection of the calibrated structure, the Levi-Civita
//! family `∇^μ` of `h^μ = g + μ Σ η_s²`, covariant derivatives of
//! `φ = f²/2`, curvature, and the identity checks built on them.
//!
//! Everything is expressed in the tangent frame
//! `F = (E_1, …, E_4n, ξ_1, ξ_2, ξ_3)`: connection coefficients
//! `∇_{F_a} F_b = Σ_k Γ_ab^k F_k`, brackets `[F_a, F_b] = Σ_m β_ab^m F_m`,
//! and from these the Hessians, third derivatives and curvature.
//!
//! On horizontal fields the Biquard connection is obtained from the flat
//! ambient derivative,
//! `∇_A X = D_A X − (S/2) Σ η_t(A) I_t X + Σ ω_t(πA, X) ξ_t + g(πA, X) ξ`,
//! and on the Reeb fields through the measured `sp(1)` connection forms,
//! `∇ξ_i = −α_j ⊗ ξ_k + α_k ⊗ ξ_j`.

use nalgebra::{DMatrix, DVector};

use crate::calibrate::{parallel_w, CalibratedStructure, ParallelForm, CYCLIC};
use crate::flat_hk::apply_j_slice;
use crate::jets::{Jet, JetError, JetVector};
use crate::residual::Residual;

/// Points with `|∇φ|` at or below this are excluded from the distribution
/// checks.
pub const GRAD_PHI_THRESHOLD: f64 = 1e-4;
/// `|S|` below this counts as zero.
pub const S_ZERO: f64 = 1e-8;

/// Coefficients `gamma[a][b][k]` of a connection in the tangent frame.
#[derive(Debug, Clone)]
pub struct FrameConnection {
    pub gamma: Vec<Vec<Vec<Jet>>>,
}

/// Per-point context for covariant calculus.
#[derive(Debug, Clone)]
pub struct ConnectionContext {
    pub cal: CalibratedStructure,
    pub phi: Jet,
    /// `[E_1, …, E_4n, ξ_1, ξ_2, ξ_3]`.
    pub frame: Vec<JetVector>,
    /// `g(πU, E_a) = w_a · πU` with `w_a = f D_{E_a} N`.
    w: Vec<JetVector>,
    /// `p[s-1][(d, c)] = g(I_s E_c, E_d)`.
    pub p: [DMatrix<f64>; 3],
    /// `g(E_a, E_b)` at the base point.
    pub gv: DMatrix<f64>,
    pub biquard: FrameConnection,
    /// `β_ab^m`.
    pub brackets: Vec<Vec<Vec<Jet>>>,
    /// `α_s(F_a)` at the base point, `alpha[a][s-1]`.
    pub alpha: Vec<[f64; 3]>,
    /// Max |vertical part| of `∇_{F_a} E_b`, and of `λ` on it.
    pub horizontality: Residual,
}

fn sum_jets(it: impl IntoIterator<Item = Jet>) -> Option<Jet> {
    it.into_iter().reduce(|a, b| &a + &b)
}

impl ConnectionContext {
    pub fn new(cal: CalibratedStructure) -> Result<Self, JetError> {
        let nh = cal.e.len();
        let mut frame = cal.e.clone();
        frame.extend(cal.xi_s.iter().cloned());
        let w: Vec<JetVector> = cal.e.iter().map(|e| cal.emb.d_normal(e).scale(&cal.f)).collect();
        let p = [1, 2, 3].map(|s| {
            DMatrix::from_fn(nh, nh, |d, c| cal.g(&cal.e[c].apply_j(s), &cal.e[d]).value())
        });
        let gv = DMatrix::from_fn(nh, nh, |a, b| cal.g(&cal.e[a], &cal.e[b]).value());
        let phi = (&cal.f * &cal.f).scale(0.5);
        let mut ctx = Self {
            cal,
            phi,
            frame,
            w,
            p,
            gv,
            biquard: FrameConnection { gamma: Vec::new() },
            brackets: Vec::new(),
            alpha: Vec::new(),
            horizontality: Residual::default(),
        };
        let t = ctx.frame.len();
        let mut gamma = Vec::with_capacity(t);
        let mut alpha = Vec::with_capacity(t);
        for a in 0..t {
            let (row, al) = ctx.connection_row(&ctx.frame[a].clone(), true);
            gamma.push(row);
            alpha.push(al);
        }
        ctx.biquard = FrameConnection { gamma };
        ctx.alpha = alpha;
        ctx.brackets = (0..t)
            .map(|a| (0..t).map(|b| ctx.components(&ctx.cal.emb.chart.bracket(&ctx.frame[a], &ctx.frame[b]))).collect())
            .collect();
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.cal.n()
    }

    pub fn s(&self) -> f64 {
        self.cal.s
    }

    /// Number of horizontal frame fields.
    pub fn nh(&self) -> usize {
        self.cal.e.len()
    }

    /// Jet order available in the chart.
    pub fn order(&self) -> usize {
        self.cal.emb.chart.order()
    }

    pub fn require_order(&self, needed: usize) -> Result<(), JetError> {
        if self.order() < needed {
            Err(JetError::InsufficientOrder { needed, have: self.order() })
        } else {
            Ok(())
        }
    }

    /// Frame components of a tangent field.
    pub fn components(&self, u: &JetVector) -> Vec<Jet> {
        let pu = self.cal.pi(u);
        let mut c: Vec<Jet> = self.w.iter().map(|wa| wa.dot(&pu)).collect();
        c.extend((1..=3).map(|s| self.cal.eta_of(s, u)));
        c
    }

    /// `Σ_k c_k F_k`.
    pub fn from_components(&self, c: &[Jet]) -> JetVector {
        let mut acc = self.frame[0].scale(&c[0]);
        for (ck, fk) in c.iter().zip(&self.frame).skip(1) {
            acc = acc.axpy(ck, fk);
        }
        acc
    }

    /// Biquard derivative `∇_A X` of a horizontal field along a tangent
    /// field, via the flat ambient derivative.
    pub fn biquard_derivative(&self, a: &JetVector, x: &JetVector) -> JetVector {
        let cal = &self.cal;
        let pa = cal.pi(a);
        // g(·, X) = f G(D_X N, ·) on horizontal arguments
        let gx = cal.emb.d_normal(x).scale(&cal.f);
        let mut out = cal.emb.chart.along_vec(a, x);
        for t in 1..=3 {
            let et = cal.eta_of(t, a).scale(-0.5 * cal.s);
            out = out.axpy(&et, &x.apply_j(t));
            let om = gx.dot(&pa.apply_j(t));
            out = out.axpy(&om, &cal.xi_s[t - 1]);
        }
        out.axpy(&gx.dot(&pa), &cal.xi)
    }

    /// Frame components of `∇_U F_b` for every `b`, plus `α_s(U)`.
    fn connection_row(&mut self, u: &JetVector, track: bool) -> (Vec<Vec<Jet>>, [f64; 3]) {
        let nh = self.nh();
        let mut row: Vec<Vec<Jet>> = Vec::with_capacity(nh + 3);
        for b in 0..nh {
            let v = self.biquard_derivative(u, &self.cal.e[b]);
            let c = self.components(&v);
            if track {
                for s in 0..3 {
                    let x = c[nh + s].value();
                    self.horizontality.push(x, &[x]);
                }
                let l = self.cal.lambda_of(&v).value();
                self.horizontality.push(l, &[l]);
            }
            row.push(c);
        }
        // α_k(U) = g(∇_U(I_i X) − I_i ∇_U X, I_j X) with X = E_1, I_s X = E_{s+1}
        let mut alpha_j: [Option<Jet>; 3] = [None, None, None];
        for &(i, j, k) in CYCLIC.iter() {
            let direct = &row[i][j];
            let rotated = sum_jets((0..nh).filter_map(|c| {
                let pc = self.p[i - 1][(j, c)];
                (pc != 0.0).then(|| row[0][c].scale(pc))
            }))
            .expect("horizontal frame is nonempty");
            alpha_j[k - 1] = Some(direct - &rotated);
        }
        let alpha_j = alpha_j.map(|a| a.unwrap());
        let order = alpha_j[0].order();
        let zero = Jet::zero(self.cal.emb.chart.space(), order);
        for &(_, j, k) in CYCLIC.iter() {
            let mut c = vec![zero.clone(); nh + 3];
            c[nh + k - 1] = -&alpha_j[j - 1];
            c[nh + j - 1] = alpha_j[k - 1].clone();
            row.push(c);
        }
        let alpha_v = [alpha_j[0].value(), alpha_j[1].value(), alpha_j[2].value()];
        (row, alpha_v)
    }

    /// Covariant derivative of an arbitrary tangent field along a tangent
    /// field, decomposed in the frame.
    pub fn nabla(&mut self, a: &JetVector, y: &JetVector) -> JetVector {
        let (row, _) = self.connection_row(a, false);
        let yc = self.components(y);
        let t = self.frame.len();
        let mut out: Option<JetVector> = None;
        for b in 0..t {
            // A(y^b) F_b + y^b ∇_A F_b
            let ab = self.cal.emb.chart.along(a, &yc[b]);
            let term = self.frame[b].scale(&ab).axpy(&yc[b], &self.from_components(&row[b]));
            out = Some(match out {
                None => term,
                Some(o) => &o + &term,
            });
        }
        out.unwrap()
    }

    /// `L(A,B) = (S/2)[A]_V × [B]_V + Σ{−ω_s(A,B)ξ_s + μη_s(A)I_sB + μη_s(B)I_sA}`.
    pub fn l_tensor(&self, mu: f64, a: &JetVector, b: &JetVector) -> JetVector {
        let cal = &self.cal;
        let ea = [1, 2, 3].map(|s| cal.eta_of(s, a));
        let eb = [1, 2, 3].map(|s| cal.eta_of(s, b));
        let (pa, pb) = (cal.pi(a), cal.pi(b));
        let mut out = JetVector::constant(cal.emb.chart.space(), a.order(), &vec![0.0; a.dim()]);
        for &(i, j, k) in CYCLIC.iter() {
            let cross = &(&ea[j - 1] * &eb[k - 1]) - &(&ea[k - 1] * &eb[j - 1]);
            out = out.axpy(&cross.scale(0.5 * cal.s), &cal.xi_s[i - 1]);
        }
        for s in 1..=3 {
            let om = cal.g(&pa.apply_j(s), &pb);
            out = out.axpy(&(-&om), &cal.xi_s[s - 1]);
            out = out.axpy(&ea[s - 1].scale(mu), &pb.apply_j(s));
            out = out.axpy(&eb[s - 1].scale(mu), &pa.apply_j(s));
        }
        out
    }

    /// Coefficients of `∇^μ = ∇ + L`.
    pub fn levi_civita(&self, mu: f64) -> FrameConnection {
        let t = self.frame.len();
        let gamma = (0..t)
            .map(|a| {
                (0..t)
                    .map(|b| {
                        let l = self.components(&self.l_tensor(mu, &self.frame[a], &self.frame[b]));
                        self.biquard.gamma[a][b].iter().zip(&l).map(|(x, y)| x + y).collect()
                    })
                    .collect()
            })
            .collect();
        FrameConnection { gamma }
    }

    /// `h^μ(F_a, F_b)` as jets.
    pub fn h_mu(&self, mu: f64) -> Vec<Vec<Jet>> {
        let cal = &self.cal;
        let pis: Vec<JetVector> = self.frame.iter().map(|v| cal.pi(v)).collect();
        let etas: Vec<[Jet; 3]> = self.frame.iter().map(|v| [1, 2, 3].map(|s| cal.eta_of(s, v))).collect();
        let t = self.frame.len();
        (0..t)
            .map(|a| {
                (0..t)
                    .map(|b| {
                        let mut h = cal.g(&pis[a], &pis[b]);
                        for s in 0..3 {
                            h = h.axpy(mu, &(&etas[a][s] * &etas[b][s]));
                        }
                        h
                    })
                    .collect()
            })
            .collect()
    }

    /// `F_a` applied to a scalar jet.
    pub fn d(&self, a: usize, x: &Jet) -> Jet {
        self.cal.emb.chart.along(&self.frame[a], x)
    }

    /// `dφ(F_a)` as jets.
    pub fn dphi(&self) -> Vec<Jet> {
        (0..self.frame.len()).map(|a| self.d(a, &self.phi)).collect()
    }

    /// `∇²u(F_a, F_b) = F_a(F_b u) − Σ_k Γ_ab^k F_k u`.
    pub fn hessian(&self, conn: &FrameConnection, u: &Jet) -> Vec<Vec<Jet>> {
        let t = self.frame.len();
        let du: Vec<Jet> = (0..t).map(|a| self.d(a, u)).collect();
        (0..t)
            .map(|a| {
                (0..t)
                    .map(|b| {
                        let mut h = self.d(a, &du[b]);
                        for k in 0..t {
                            h = &h - &(&conn.gamma[a][b][k] * &du[k]);
                        }
                        h
                    })
                    .collect()
            })
            .collect()
    }

    /// `∇³u(F_a,F_b,F_c) = F_a(H_bc) − Σ_k Γ_ab^k H_kc − Σ_k Γ_ac^k H_bk`
    /// at the base point.
    pub fn third(&self, conn: &FrameConnection, h: &[Vec<Jet>]) -> Vec<Vec<Vec<f64>>> {
        let t = self.frame.len();
        let hv: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(Jet::value).collect()).collect();
        let gv: Vec<Vec<Vec<f64>>> =
            conn.gamma.iter().map(|r| r.iter().map(|c| c.iter().map(Jet::value).collect()).collect()).collect();
        (0..t)
            .map(|a| {
                (0..t)
                    .map(|b| {
                        (0..t)
                            .map(|c| {
                                let mut v = self.d(a, &h[b][c]).value();
                                for k in 0..t {
                                    v -= gv[a][b][k] * hv[k][c] + gv[a][c][k] * hv[b][k];
                                }
                                v
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `R_abc^l` at the base point for the given `c` indices:
    /// `F_a(Γ_bc^l) − F_b(Γ_ac^l) + Σ_k(Γ_bc^k Γ_ak^l − Γ_ac^k Γ_bk^l) − Σ_m β_ab^m Γ_mc^l`.
    pub fn curvature(&self, conn: &FrameConnection, cs: &[usize]) -> Vec<Vec<Vec<Vec<f64>>>> {
        let t = self.frame.len();
        let gv: Vec<Vec<Vec<f64>>> =
            conn.gamma.iter().map(|r| r.iter().map(|c| c.iter().map(Jet::value).collect()).collect()).collect();
        let bv: Vec<Vec<Vec<f64>>> =
            self.brackets.iter().map(|r| r.iter().map(|c| c.iter().map(Jet::value).collect()).collect()).collect();
        (0..t)
            .map(|a| {
                (0..t)
                    .map(|b| {
                        cs.iter()
                            .map(|&c| {
                                (0..t)
                                    .map(|l| {
                                        let mut v = self.d(a, &conn.gamma[b][c][l]).value()
                                            - self.d(b, &conn.gamma[a][c][l]).value();
                                        for k in 0..t {
                                            v += gv[b][c][k] * gv[a][k][l] - gv[a][c][k] * gv[b][k][l];
                                            v -= bv[a][b][k] * gv[k][c][l];
                                        }
                                        v
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `ω_s(E_a, E_b) = g(I_s E_a, E_b)`.
    pub fn omega_h(&self, s: usize, a: usize, b: usize) -> f64 {
        self.p[s - 1][(b, a)]
    }

    /// Frame indices `a` rotated by `I_s`: `I_s E_a = Σ_d P[d][a] E_d`.
    fn rotate(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        (0..self.nh()).filter_map(|d| {
            let v = self.p[s - 1][(d, a)];
            (v.abs() > 1e-12).then_some((d, v))
        })
        .collect()
    }
}

/// Residuals of the connection identities.
#[derive(Debug, Clone, Default)]
pub struct ConnectionResiduals {
    pub horizontal: Residual,
    pub metric: Residual,
    pub torsion_hh: Residual,
    pub torsion_vh: Residual,
    pub sp1: Residual,
    pub d_xi: Residual,
    pub d_xi_s: Residual,
}

pub fn connection_checks(ctx: &ConnectionContext) -> ConnectionResiduals {
    let mut out = ConnectionResiduals { horizontal: ctx.horizontality, ..Default::default() };
    let nh = ctx.nh();
    let t = ctx.frame.len();
    let s = ctx.s();
    let gam = &ctx.biquard.gamma;
    let g: Vec<Vec<Jet>> = (0..nh).map(|b| (0..nh).map(|c| ctx.cal.g(&ctx.cal.e[b], &ctx.cal.e[c])).collect()).collect();
    for a in 0..t {
        for b in 0..nh {
            for c in 0..nh {
                let lhs = ctx.d(a, &g[b][c]).value();
                let (x, y) = (gam[a][b][c].value(), gam[a][c][b].value());
                out.metric.push(lhs - x - y, &[lhs, x, y]);
            }
        }
    }
    for a in 0..t {
        for b in 0..t {
            if a >= nh && b >= nh {
                continue;
            }
            for k in 0..t {
                let v = gam[a][b][k].value() - gam[b][a][k].value() - ctx.brackets[a][b][k].value();
                if a < nh && b < nh {
                    let target = if k >= nh { 2.0 * ctx.omega_h(k - nh + 1, a, b) } else { 0.0 };
                    out.torsion_hh.push(v - target, &[v, target]);
                } else {
                    out.torsion_vh.push(v, &[gam[a][b][k].value(), ctx.brackets[a][b][k].value()]);
                }
            }
        }
    }
    for a in 0..t {
        for sidx in 1..=3 {
            let target = -s * ctx.cal.eta_of(sidx, &ctx.frame[a]).value();
            let v = ctx.alpha[a][sidx - 1];
            out.sp1.push(v - target, &[v, target]);
        }
    }
    let half = 0.5 * s;
    for a in &ctx.frame {
        let av = a.value();
        let dx = ctx.cal.emb.chart.along_vec(a, &ctx.cal.xi).value();
        for (l, r) in dx.iter().zip(&av) {
            out.d_xi.push(l - half * r, &[*l, half * r]);
        }
        for sidx in 1..=3 {
            let dxs = ctx.cal.emb.chart.along_vec(a, &ctx.cal.xi_s[sidx - 1]).value();
            let ja = apply_j_slice(sidx, &av);
            for (l, r) in dxs.iter().zip(&ja) {
                out.d_xi_s.push(l - half * r, &[*l, half * r]);
            }
        }
    }
    out
}

/// Residuals of the three `𝔚` formulas and its commutation with `J_s`.
#[derive(Debug, Clone, Default)]
pub struct DeltaResiduals {
    pub w_x: Residual,
    pub w_xi: Residual,
    pub w_xi_s: Residual,
    pub w_commutes_j: Residual,
}

fn push_vec(r: &mut Residual, lhs: &[f64], rhs: &[f64]) {
    for (l, x) in lhs.iter().zip(rhs) {
        r.push(l - x, &[*l, *x]);
    }
}

pub fn delta_lemma_checks(ctx: &ConnectionContext, w: &ParallelForm) -> DeltaResiduals {
    let mut out = DeltaResiduals::default();
    let cal = &ctx.cal;
    let s = ctx.s();
    let f = &cal.f;
    let f0 = f.value();
    let gradf = cal.grad_f.value();
    let xi = cal.xi.value();
    let comb = |terms: &[(f64, &[f64])]| -> Vec<f64> {
        let mut v = vec![0.0; xi.len()];
        for (k, x) in terms {
            for (o, y) in v.iter_mut().zip(x.iter()) {
                *o += k * y;
            }
        }
        v
    };
    for (a, x) in cal.e.iter().enumerate() {
        let lhs = w.apply(x).value();
        let nn = ctx.biquard_derivative(x, &cal.grad_f).value();
        let dfx = cal.df(x).value();
        let xv = x.value();
        let mut rhs = comb(&[(f0, &nn), (0.5 * s * f0 * f0, &xv), (dfx, &gradf), (f0 * dfx, &xi)]);
        for sidx in 1..=3 {
            let dfi: f64 = ctx.rotate(sidx, a).iter().map(|&(d, p)| p * ctx.cal.df(&ctx.cal.e[d]).value()).sum();
            let xs = cal.xi_s[sidx - 1].value();
            for (o, y) in rhs.iter_mut().zip(&xs) {
                *o -= f0 * dfi * y;
            }
        }
        push_vec(&mut out.w_x, &lhs, &rhs);
    }
    let lhs = w.apply(&cal.xi).value();
    let rhs = comb(&[(0.5 * s * f0, &gradf), (0.5 * s * f0 * f0, &xi)]);
    push_vec(&mut out.w_xi, &lhs, &rhs);
    for sidx in 1..=3 {
        let lhs = w.apply(&cal.xi_s[sidx - 1]).value();
        let igf = apply_j_slice(sidx, &gradf);
        let xs = cal.xi_s[sidx - 1].value();
        let rhs = comb(&[(0.5 * s * f0, &igf), (0.5 * s * f0 * f0, &xs)]);
        push_vec(&mut out.w_xi_s, &lhs, &rhs);
    }
    let wv = w.value();
    let d = wv.len();
    let apply = |v: &[f64]| -> Vec<f64> { wv.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
    for sidx in 1..=3 {
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            let lhs = apply(&apply_j_slice(sidx, &e));
            let rhs = apply_j_slice(sidx, &apply(&e));
            push_vec(&mut out.w_commutes_j, &lhs, &rhs);
        }
    }
    out
}

/// Residuals of the PDE system for `φ`.
#[derive(Debug, Clone, Default)]
pub struct PdeResiduals {
    pub eqbi1: Residual,
    pub eqbi2: Residual,
    pub eqbi3: Residual,
    pub hessian_symmetry: Residual,
    pub vertical_hessian: Residual,
}

pub fn pde_checks(ctx: &ConnectionContext) -> Result<PdeResiduals, JetError> {
    ctx.require_order(4)?;
    let mut out = PdeResiduals::default();
    let nh = ctx.nh();
    let t = ctx.frame.len();
    let s = ctx.s();
    let dphi: Vec<f64> = ctx.dphi().iter().map(Jet::value).collect();
    let h = ctx.hessian(&ctx.biquard, &ctx.phi);
    let hv: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(Jet::value).collect()).collect();

    for sidx in 0..3 {
        let v = dphi[nh + sidx];
        out.eqbi3.push(v, &[v]);
    }
    let rot: Vec<Vec<Vec<(usize, f64)>>> = (1..=3).map(|sidx| (0..nh).map(|a| ctx.rotate(sidx, a)).collect()).collect();
    let dphi_i = |sidx: usize, b: usize| -> f64 { rot[sidx - 1][b].iter().map(|&(d, p)| p * dphi[d]).sum() };
    for sidx in 1..=3 {
        for a in 0..nh {
            for b in 0..nh {
                let mut rotated = 0.0;
                for &(c, pc) in &rot[sidx - 1][a] {
                    for &(d, pd) in &rot[sidx - 1][b] {
                        rotated += pc * pd * hv[c][d];
                    }
                }
                out.eqbi2.push(hv[a][b] - rotated, &[hv[a][b], rotated]);
            }
        }
    }
    for a in 0..nh {
        for b in 0..nh {
            let lhs = hv[a][b] - hv[b][a];
            let rhs: f64 = (1..=3).map(|sidx| -2.0 * ctx.omega_h(sidx, a, b) * dphi[nh + sidx - 1]).sum();
            out.hessian_symmetry.push(lhs - rhs, &[hv[a][b], hv[b][a], rhs]);
        }
        for v in nh..t {
            out.vertical_hessian.push(hv[a][v], &[hv[a][v]]);
            out.vertical_hessian.push(hv[v][a], &[hv[v][a]]);
        }
    }
    for u in nh..t {
        for v in nh..t {
            out.vertical_hessian.push(hv[u][v], &[hv[u][v]]);
        }
    }
    let t3 = ctx.third(&ctx.biquard, &h);
    let g = &ctx.gv;
    for x in 0..nh {
        for y in 0..nh {
            for z in 0..nh {
                let mut terms = vec![
                    t3[x][y][z],
                    s * dphi[x] * g[(y, z)],
                    0.5 * s * dphi[y] * g[(z, x)],
                    0.5 * s * dphi[z] * g[(x, y)],
                ];
                let mut rhs = 0.0;
                for sidx in 1..=3 {
                    rhs += 0.5 * s * (dphi_i(sidx, y) * ctx.omega_h(sidx, x, z) + dphi_i(sidx, z) * ctx.omega_h(sidx, x, y));
                }
                let lhs: f64 = terms.iter().sum();
                terms.push(rhs);
                out.eqbi1.push(lhs - rhs, &terms);
            }
        }
    }
    Ok(out)
}

/// Residuals for the Levi-Civita family.
#[derive(Debug, Clone, Default)]
pub struct LeviCivitaResiduals {
    pub metric: Residual,
    pub torsion: Residual,
    /// `None` when `S = 0` (the reduction needs `S ≠ 0`).
    pub mixed_hessian: Option<Residual>,
    pub eqlv1: Option<Residual>,
}

pub fn levi_civita_checks(ctx: &ConnectionContext) -> Result<LeviCivitaResiduals, JetError> {
    let s = ctx.s();
    let nonzero = s.abs() > S_ZERO;
    let mu = if nonzero { 0.5 * s } else { 1.0 };
    let conn = ctx.levi_civita(mu);
    let h = ctx.h_mu(mu);
    let t = ctx.frame.len();
    let nh = ctx.nh();
    let mut out = LeviCivitaResiduals::default();
    for a in 0..t {
        for b in 0..t {
            for c in 0..t {
                let lhs = ctx.d(a, &h[b][c]).value();
                let x: f64 = (0..t).map(|k| conn.gamma[a][b][k].value() * h[k][c].value()).sum();
                let y: f64 = (0..t).map(|k| conn.gamma[a][c][k].value() * h[b][k].value()).sum();
                out.metric.push(lhs - x - y, &[lhs, x, y]);
            }
            for k in 0..t {
                let v = conn.gamma[a][b][k].value() - conn.gamma[b][a][k].value() - ctx.brackets[a][b][k].value();
                out.torsion.push(v, &[conn.gamma[a][b][k].value(), ctx.brackets[a][b][k].value()]);
            }
        }
    }
    if !nonzero {
        return Ok(out);
    }
    ctx.require_order(4)?;
    let hphi = ctx.hessian(&conn, &ctx.phi);
    let dphi: Vec<f64> = ctx.dphi().iter().map(Jet::value).collect();
    let mut mixed = Residual::default();
    for a in 0..nh {
        for sidx in 1..=3 {
            // ∇^μ_X ξ_s = μ I_s X, so the mixed Hessian is −(S/2) dφ(I_s X)
            let target: f64 = -0.5 * s * ctx.rotate(sidx, a).iter().map(|&(d, p)| p * dphi[d]).sum::<f64>();
            let v = nh + sidx - 1;
            let (x, y) = (hphi[a][v].value(), hphi[v][a].value());
            mixed.push(x - target, &[x, target]);
            mixed.push(y - target, &[y, target]);
        }
    }
    let t3 = ctx.third(&conn, &hphi);
    let hv: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(Jet::value).collect()).collect();
    let mut eq = Residual::default();
    for a in 0..t {
        for b in 0..t {
            for c in 0..t {
                let terms = [
                    t3[a][b][c],
                    s * dphi[a] * hv[b][c],
                    0.5 * s * dphi[b] * hv[c][a],
                    0.5 * s * dphi[c] * hv[a][b],
                ];
                eq.push(terms.iter().sum(), &terms);
            }
        }
    }
    out.mixed_hessian = Some(mixed);
    out.eqlv1 = Some(eq);
    Ok(out)
}

/// Residuals of the curvature identities.
#[derive(Debug, Clone, Default)]
pub struct CurvatureResiduals {
    pub pair_symmetry: Residual,
    pub ricci_einstein: Residual,
    pub rho: Residual,
    pub vertical_vanishing: Residual,
    pub closed_form: Residual,
    pub wqc: Residual,
    pub wqc_symmetry: Residual,
    /// `max |R|`, only meaningful when `S = 0`.
    pub flat: Option<Residual>,
    /// Constant curvature `S/2` of `h^{S/2}`, only when `S > 0`.
    pub riemann_constant: Option<Residual>,
}

/// Biquard curvature `R(F_a, F_b, E_c, E_d)` on the horizontal `c, d`.
pub fn biquard_curvature(ctx: &ConnectionContext) -> Result<Vec<Vec<Vec<Vec<f64>>>>, JetError> {
    ctx.require_order(3)?;
    let nh = ctx.nh();
    let hs: Vec<usize> = (0..nh).collect();
    let r = ctx.curvature(&ctx.biquard, &hs);
    let g = &ctx.gv;
    Ok(r.iter()
        .map(|ra| {
            ra.iter()
                .map(|rab| rab.iter().map(|rabc| (0..nh).map(|d| (0..nh).map(|l| rabc[l] * g[(l, d)]).sum()).collect()).collect())
                .collect()
        })
        .collect())
}

/// The qc-conformal curvature on horizontal frame 4-tuples.
pub fn wqc(ctx: &ConnectionContext, r: &[Vec<Vec<Vec<f64>>>]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let nh = ctx.nh();
    let s = ctx.s();
    let g = &ctx.gv;
    let om = |sidx: usize, a: usize, b: usize| ctx.omega_h(sidx, a, b);
    let mut w = vec![vec![vec![vec![0.0; nh]; nh]; nh]; nh];
    for x in 0..nh {
        for y in 0..nh {
            for z in 0..nh {
                for u in 0..nh {
                    let mut c = -g[(x, u)] * g[(y, z)] + g[(x, z)] * g[(y, u)];
                    for sidx in 1..=3 {
                        c += -om(sidx, x, u) * om(sidx, y, z) + om(sidx, x, z) * om(sidx, y, u)
                            + 2.0 * om(sidx, x, y) * om(sidx, z, u);
                    }
                    w[x][y][z][u] = r[x][y][z][u] + 0.5 * s * c;
                }
            }
        }
    }
    w
}

pub fn curvature_checks(ctx: &ConnectionContext) -> Result<CurvatureResiduals, JetError> {
    let r = biquard_curvature(ctx)?;
    let nh = ctx.nh();
    let t = ctx.frame.len();
    let n = ctx.n() as f64;
    let s = ctx.s();
    let g = &ctx.gv;
    let om = |sidx: usize, a: usize, b: usize| ctx.omega_h(sidx, a, b);
    let mut out = CurvatureResiduals::default();

    for x in 0..nh {
        for y in 0..nh {
            for z in 0..nh {
                for u in 0..nh {
                    let (a, b) = (r[x][y][z][u], r[z][u][x][y]);
                    out.pair_symmetry.push(a - b, &[a, b]);
                    let mut c = g[(y, z)] * g[(x, u)] - g[(y, u)] * g[(x, z)];
                    for sidx in 1..=3 {
                        c += om(sidx, y, z) * om(sidx, x, u) - om(sidx, x, z) * om(sidx, y, u)
                            - 2.0 * om(sidx, x, y) * om(sidx, z, u);
                    }
                    let closed = 0.5 * s * c;
                    out.closed_form.push(a - closed, &[a, closed]);
                }
            }
            let ric: f64 = (0..nh).map(|a| r[a][x][y][a]).sum();
            let target = 2.0 * (n + 2.0) * s * g[(x, y)];
            out.ricci_einstein.push(ric - target, &[ric, target]);
            for sidx in 1..=3 {
                let rho: f64 = (0..nh)
                    .map(|a| ctx.rotate(sidx, a).iter().map(|&(d, p)| p * r[x][y][a][d]).sum::<f64>())
                    .sum::<f64>()
                    / (4.0 * n);
                let target = -s * om(sidx, x, y);
                out.rho.push(rho - target, &[rho, target]);
            }
        }
    }
    for v in nh..t {
        for x in 0..t {
            for y in 0..nh {
                for z in 0..nh {
                    let a = r[v][x][y][z];
                    out.vertical_vanishing.push(a, &[a]);
                }
            }
        }
    }
    let w = wqc(ctx, &r);
    for x in 0..nh {
        for y in 0..nh {
            for z in 0..nh {
                for u in 0..nh {
                    let a = w[x][y][z][u];
                    out.wqc.push(a, &[a, r[x][y][z][u]]);
                    let b = w[z][u][x][y];
                    out.wqc_symmetry.push(a - b, &[a, b]);
                    for sidx in 1..=3 {
                        let mut last = 0.0;
                        let mut first = 0.0;
                        for &(c, pc) in &ctx.rotate(sidx, z) {
                            for &(d, pd) in &ctx.rotate(sidx, u) {
                                last += pc * pd * w[x][y][c][d];
                            }
                        }
                        for &(c, pc) in &ctx.rotate(sidx, x) {
                            for &(d, pd) in &ctx.rotate(sidx, y) {
                                first += pc * pd * w[c][d][z][u];
                            }
                        }
                        out.wqc_symmetry.push(a - last, &[a, last]);
                        out.wqc_symmetry.push(a - first, &[a, first]);
                    }
                }
            }
        }
    }
    if s.abs() <= S_ZERO {
        let mut flat = Residual::default();
        for ra in &r {
            for rab in ra {
                for rabc in rab {
                    for v in rabc {
                        flat.push(*v, &[]);
                    }
                }
            }
        }
        out.flat = Some(flat);
    }
    if s > S_ZERO {
        out.riemann_constant = Some(riemann_constant_curvature(ctx, 0.5 * s)?);
    }
    Ok(out)
}

/// Compare the Riemannian curvature of `h^μ` with constant curvature `μ`:
/// `R^h(A,B,C,D) = μ [h(B,C)h(A,D) − h(B,D)h(A,C)]`.
pub fn riemann_constant_curvature(ctx: &ConnectionContext, mu: f64) -> Result<Residual, JetError> {
    ctx.require_order(3)?;
    let conn = ctx.levi_civita(mu);
    let t = ctx.frame.len();
    let all: Vec<usize> = (0..t).collect();
    let r = ctx.curvature(&conn, &all);
    let h: Vec<Vec<f64>> = ctx.h_mu(mu).iter().map(|row| row.iter().map(Jet::value).collect()).collect();
    let mut out = Residual::default();
    for a in 0..t {
        for b in 0..t {
            for c in 0..t {
                for d in 0..t {
                    let lhs: f64 = (0..t).map(|l| r[a][b][c][l] * h[l][d]).sum();
                    let rhs = mu * (h[b][c] * h[a][d] - h[b][d] * h[a][c]);
                    out.push(lhs - rhs, &[lhs, rhs]);
                }
            }
        }
    }
    Ok(out)
}

/// Residuals of the sub-Laplacian identities.
#[derive(Debug, Clone, Default)]
pub struct SublaplacianResiduals {
    pub first_order: Residual,
    /// Requires jet order 5.
    pub eigen: Option<Residual>,
}

pub fn sublaplacian_checks(ctx: &ConnectionContext) -> Result<SublaplacianResiduals, JetError> {
    ctx.require_order(4)?;
    let nh = ctx.nh();
    let t = ctx.frame.len();
    let k = 4.0 * (ctx.n() as f64 + 1.0) * ctx.s();
    let h = ctx.hessian(&ctx.biquard, &ctx.phi);
    let lap = sum_jets((0..nh).map(|a| h[a][a].clone())).unwrap();
    let dphi: Vec<f64> = ctx.dphi().iter().map(Jet::value).collect();
    let mut out = SublaplacianResiduals::default();
    for a in 0..nh {
        let x = ctx.d(a, &lap).value();
        let y = k * dphi[a];
        out.first_order.push(x + y, &[x, y]);
    }
    if ctx.order() >= 5 {
        let dl: Vec<Jet> = (0..t).map(|b| ctx.d(b, &lap)).collect();
        let mut ll = 0.0;
        for a in 0..nh {
            ll += ctx.d(a, &dl[a]).value();
            for kk in 0..t {
                ll -= ctx.biquard.gamma[a][a][kk].value() * dl[kk].value();
            }
        }
        let y = k * lap.value();
        let mut r = Residual::default();
        r.push(ll + y, &[ll, y]);
        out.eigen = Some(r);
    }
    Ok(out)
}

/// Residuals of the bracket identities for `D = span{ξ_s, ∇φ, I_s∇φ}`.
#[derive(Debug, Clone, Default)]
pub struct DistributionResiduals {
    pub bracket: Residual,
    pub involutive: Residual,
    /// Whether the point was skipped for `|∇φ| ≤` threshold.
    pub excluded: bool,
}

pub fn distribution_checks(ctx: &ConnectionContext) -> DistributionResiduals {
    let cal = &ctx.cal;
    let chart = &cal.emb.chart;
    let nh = ctx.nh();
    let dphi: Vec<Jet> = (0..nh).map(|a| ctx.d(a, &ctx.phi)).collect();
    let mut grad = cal.e[0].scale(&dphi[0]);
    for a in 1..nh {
        grad = grad.axpy(&dphi[a], &cal.e[a]);
    }
    let norm2: f64 = dphi.iter().map(|x| x.value() * x.value()).sum();
    let mut out = DistributionResiduals::default();
    if norm2.sqrt() <= GRAD_PHI_THRESHOLD {
        out.excluded = true;
        return out;
    }
    let igrad = [grad.apply_j(1), grad.apply_j(2), grad.apply_j(3)];
    for i in 1..=3 {
        let br = chart.bracket(&grad, &igrad[i - 1]).value();
        let xs = cal.xi_s[i - 1].value();
        let rhs: Vec<f64> = xs.iter().map(|x| -2.0 * norm2 * x).collect();
        push_vec(&mut out.bracket, &br, &rhs);
    }
    let mut span: Vec<Vec<f64>> = cal.xi_s.iter().map(JetVector::value).collect();
    span.push(grad.value());
    span.extend(igrad.iter().map(JetVector::value));
    // orthonormal basis of D by modified Gram-Schmidt, twice for stability
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in span {
        let mut v = DVector::from_vec(v);
        for _ in 0..2 {
            for q in &basis {
                v -= q * q.dot(&v);
            }
        }
        let nv = v.norm();
        if nv > 1e-10 {
            basis.push(v / nv);
        }
    }
    for s in 0..3 {
        for v in std::iter::once(&grad).chain(igrad.iter()) {
            let mut b = DVector::from_vec(chart.bracket(&cal.xi_s[s], v).value());
            let size = b.amax();
            for _ in 0..2 {
                for q in &basis {
                    b -= q * q.dot(&b);
                }
            }
            out.involutive.push(b.amax(), &[size]);
        }
    }
    out
}

/// Everything needed from one point, bundled for convenience.
pub fn full_context(cal: CalibratedStructure) -> Result<(ConnectionContext, ParallelForm), JetError> {
    let w = parallel_w(&cal);
    Ok((ConnectionContext::new(cal)?, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::calibrate_point;
    use crate::surface::{catalog, sample_points};

    fn ctx_at(name: &str, seed: u64, order: usize, count: usize) -> Vec<ConnectionContext> {
        let q = catalog(name, 1).unwrap();
        sample_points(&q, count, seed)
            .unwrap()
            .iter()
            .map(|p| ConnectionContext::new(calibrate_point(&q, p, order).unwrap()).unwrap())
            .collect()
    }

    fn check(label: &str, r: &Residual, tol: f64) {
        assert!(r.passes(tol), "{label}: {r:?}");
    }

    #[test]
    fn frame_components_roundtrip() {
        for ctx in ctx_at("ellipsoid", 3, 3, 2) {
            for (a, f) in ctx.frame.iter().enumerate() {
                let c = ctx.components(f);
                for (k, x) in c.iter().enumerate() {
                    let target = if k == a { 1.0 } else { 0.0 };
                    assert!((x.value() - target).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn biquard_identities() {
        for name in ["sphere", "ellipsoid", "hyperboloid", "heisenberg"] {
            for ctx in ctx_at(name, 4, 3, 3) {
                let r = connection_checks(&ctx);
                for (l, x) in [
                    ("horizontal", r.horizontal),
                    ("metric", r.metric),
                    ("torsion_hh", r.torsion_hh),
                    ("torsion_vh", r.torsion_vh),
                    ("sp1", r.sp1),
                    ("d_xi", r.d_xi),
                    ("d_xi_s", r.d_xi_s),
                ] {
                    check(&format!("{name} {l}"), &x, 1e-8);
                }
            }
        }
    }

    #[test]
    fn general_nabla_agrees_with_frame_coefficients() {
        let mut ctx = ctx_at("ellipsoid", 6, 3, 1).remove(0);
        let a = ctx.frame[1].clone();
        let y = ctx.frame[5].clone();
        let v = ctx.nabla(&a, &y).value();
        let expect = ctx.from_components(&ctx.biquard.gamma[1][5]).value();
        for (x, e) in v.iter().zip(&expect) {
            assert!((x - e).abs() < 1e-10);
        }
    }

    #[test]
    fn delta_lemma_on_sphere_and_ellipsoid() {
        for name in ["sphere", "ellipsoid"] {
            for ctx in ctx_at(name, 2, 3, 3) {
                let w = parallel_w(&ctx.cal);
                let r = delta_lemma_checks(&ctx, &w);
                for (l, x) in [("x", r.w_x), ("xi", r.w_xi), ("xi_s", r.w_xi_s), ("j", r.w_commutes_j)] {
                    check(&format!("{name} {l}"), &x, 1e-8);
                }
            }
        }
    }

    #[test]
    fn pde_and_levi_civita_on_ellipsoid() {
        for ctx in ctx_at("ellipsoid", 5, 4, 2) {
            let p = pde_checks(&ctx).unwrap();
            for (l, x) in [
                ("eqbi1", p.eqbi1),
                ("eqbi2", p.eqbi2),
                ("eqbi3", p.eqbi3),
                ("sym", p.hessian_symmetry),
                ("vert", p.vertical_hessian),
            ] {
                check(l, &x, 1e-7);
            }
            let lc = levi_civita_checks(&ctx).unwrap();
            check("lc metric", &lc.metric, 1e-8);
            check("lc torsion", &lc.torsion, 1e-8);
            check("mixed", &lc.mixed_hessian.unwrap(), 1e-7);
            check("eqlv1", &lc.eqlv1.unwrap(), 1e-7);
        }
    }

    #[test]
    fn third_derivative_needs_order_four() {
        let ctx = ctx_at("ellipsoid", 5, 3, 1).remove(0);
        assert!(matches!(pde_checks(&ctx), Err(JetError::InsufficientOrder { needed: 4, have: 3 })));
    }

    #[test]
    fn curvature_identities() {
        for name in ["sphere", "ellipsoid", "heisenberg", "hyperboloid"] {
            for ctx in ctx_at(name, 7, 3, 2) {
                let c = curvature_checks(&ctx).unwrap();
                for (l, x) in [
                    ("pair", c.pair_symmetry),
                    ("ric", c.ricci_einstein),
                    ("rho", c.rho),
                    ("vert", c.vertical_vanishing),
                    ("closed", c.closed_form),
                    ("wqc", c.wqc),
                    ("wsym", c.wqc_symmetry),
                ] {
                    check(&format!("{name} {l}"), &x, 1e-7);
                }
                if let Some(f) = c.flat {
                    check("flat", &f, 1e-7);
                }
                if let Some(rc) = c.riemann_constant {
                    check(&format!("{name} riemann"), &rc, 1e-7);
                }
            }
        }
    }

    #[test]
    fn sublaplacian_eigenfunction() {
        for ctx in ctx_at("ellipsoid", 9, 5, 1) {
            let r = sublaplacian_checks(&ctx).unwrap();
            check("first", &r.first_order, 1e-7);
            check("eigen", &r.eigen.unwrap(), 1e-6);
        }
    }

    #[test]
    fn distribution_on_ellipsoid() {
        for ctx in ctx_at("ellipsoid", 10, 3, 3) {
            let r = distribution_checks(&ctx);
            if !r.excluded {
                check("bracket", &r.bracket, 1e-8);
                check("involutive", &r.involutive, 1e-8);
            }
        }
        // the sphere has φ constant, so every point is excluded
        for ctx in ctx_at("sphere", 10, 3, 2) {
            assert!(distribution_checks(&ctx).excluded);
        }
    }
}
