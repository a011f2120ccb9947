//! Every identity the suite runner knows about.

use serde::{Deserialize, Serialize};

/// Default relative tolerance.
pub const TOL_DEFAULT: f64 = 1e-6;
/// Curvature-level checks lose two more derivative levels to roundoff.
pub const TOL_CURVATURE: f64 = 1e-5;
/// Finite differences are only good to a few digits.
pub const TOL_ORACLE: f64 = 1e-4;

/// Identities sharing one stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Ambient,
    Chart,
    Frame,
    Calibration,
    Parallel,
    Connection,
    Delta,
    Pde,
    LeviCivita,
    Curvature,
    Sublaplacian,
    Obata,
    Distribution,
}

impl Group {
    /// Smallest chart jet order at which the group's derivatives exist.
    pub fn min_order(self) -> usize {
        match self {
            Group::Pde | Group::LeviCivita | Group::Sublaplacian => 4,
            Group::Obata => 5,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub id: &'static str,
    /// The identity as a formula.
    pub anchor: &'static str,
    pub group: Group,
    pub tolerance: f64,
}

const fn id(id: &'static str, anchor: &'static str, group: Group, tolerance: f64) -> Identity {
    Identity { id, anchor, group, tolerance }
}

use Group::*;

pub static IDENTITIES: &[Identity] = &[
    id("hk.j_relations", "J_1 J_2 = J_3 = -J_2 J_1, J_s^2 = -Id", Ambient, TOL_DEFAULT),
    id("hk.j_skew", "G(J_s u, v) + G(u, J_s v) = 0", Ambient, TOL_DEFAULT),
    id("hk.j_orthogonal", "G(J_s u, J_s v) = G(u, v)", Ambient, TOL_DEFAULT),
    id("jet.chart_residual", "F(chart) = 0 to jet order", Chart, TOL_DEFAULT),
    id("jet.fd_oracle", "jet derivatives of f, phi, eta_s = central differences", Chart, TOL_ORACLE),
    id("frame.orthonormality", "G(N, J_s N, e_a) orthonormal", Frame, TOL_DEFAULT),
    id("frame.h_invariance", "J_s H = H", Frame, TOL_DEFAULT),
    id("ii.symmetry", "II(A,B) = II(B,A)", Frame, TOL_DEFAULT),
    id("ii.q_invariance", "II(I_s X, I_s Y) = II(X, Y) on H", Frame, TOL_DEFAULT),
    id("hat.compatibility", "2 g^(I_s X, Y) = d eta^_s(X, Y)", Frame, TOL_DEFAULT),
    id("hat.g_consistency", "g^(X,Y) = -omega^_s(I_s X, Y) for s = 1, 2, 3", Frame, TOL_DEFAULT),
    id("mu.fit_residual", "Gamma_s^n = mu gamma^_s^n", Calibration, TOL_DEFAULT),
    id("mu.reality", "Im mu = 0", Calibration, TOL_DEFAULT),
    id("mu.agreement", "mu_1 = mu_2 = mu_3", Calibration, TOL_DEFAULT),
    id("cal.reeb_duality", "eta_s(xi_t) = delta_st", Calibration, TOL_DEFAULT),
    id("cal.reeb_conditions", "eta_s|_H = 0, lambda(xi_s) = 0, lambda(xi) = 1", Calibration, TOL_DEFAULT),
    id("cal.xi_s", "xi_s = J_s xi", Calibration, TOL_DEFAULT),
    id("cal.df_xi", "df(xi_s) = 0", Calibration, TOL_DEFAULT),
    id("cal.structure_equations", "d eta_i = 2 omega_i + S eta_j ^ eta_k", Calibration, TOL_DEFAULT),
    id("cal.s_consistency", "d eta_i(xi_j, xi_k) independent of i", Calibration, TOL_DEFAULT),
    id("cal.r_identity", "II(r, X) = f^-2 df(X), r = -f^-1 grad f", Calibration, TOL_DEFAULT),
    id("cal.lambda_j", "lambda(J_s v) = -eta_s(v')", Calibration, TOL_DEFAULT),
    id("cal.g_orthonormality", "g(E_a, E_b) = delta_ab", Calibration, TOL_DEFAULT),
    id("w.expansion", "W = f D N + (S/2) lambda (x) lambda on v'", Parallel, TOL_DEFAULT),
    id("w.j_invariance", "G(W J_s u, J_s v) = G(W u, v)", Parallel, TOL_DEFAULT),
    id("w.n_df", "W(N, A) = df(A)", Parallel, TOL_DEFAULT),
    id("w.parallel", "D_A W = 0", Parallel, TOL_DEFAULT),
    id("nabla.horizontal", "nabla_A X in H", Connection, TOL_DEFAULT),
    id("nabla.metric", "A g(X,Y) = g(nabla_A X, Y) + g(X, nabla_A Y)", Connection, TOL_DEFAULT),
    id("nabla.torsion_hh", "T(X,Y) = 2 sum omega_s(X,Y) xi_s", Connection, TOL_DEFAULT),
    id("nabla.torsion_vh", "T(xi_s, X) = 0", Connection, TOL_DEFAULT),
    id("nabla.sp1", "alpha_s = -S eta_s", Connection, TOL_DEFAULT),
    id("lemma.d_xi", "D_A xi = (S/2) A", Connection, TOL_DEFAULT),
    id("lemma.d_xi_s", "D_A xi_s = (S/2) J_s A", Connection, TOL_DEFAULT),
    id("delta.w_x", "W X = f nabla_X grad f + (S f^2/2) X + df(X) grad f - f sum df(I_s X) xi_s + f df(X) xi", Delta, TOL_DEFAULT),
    id("delta.w_xi", "W xi = (S f/2) grad f + (S f^2/2) xi", Delta, TOL_DEFAULT),
    id("delta.w_xi_s", "W xi_s = (S f/2) I_s grad f + (S f^2/2) xi_s", Delta, TOL_DEFAULT),
    id("delta.w_commutes_j", "W J_s = J_s W", Delta, TOL_DEFAULT),
    id("pde.eqbi1", "nabla^3 phi(X,Y,Z) + S dphi(X) g(Y,Z) + (S/2) dphi(Y) g(Z,X) + (S/2) dphi(Z) g(X,Y) - (S/2) sum [dphi(I_s Y) omega_s(X,Z) + dphi(I_s Z) omega_s(X,Y)] = 0", Pde, TOL_DEFAULT),
    id("pde.eqbi2", "nabla^2 phi(X,Y) = nabla^2 phi(I_s X, I_s Y)", Pde, TOL_DEFAULT),
    id("pde.eqbi3", "dphi(xi_s) = 0", Pde, TOL_DEFAULT),
    id("pde.hessian_symmetry", "nabla^2 phi(X,Y) - nabla^2 phi(Y,X) = -2 sum omega_s(X,Y) dphi(xi_s)", Pde, TOL_DEFAULT),
    id("pde.vertical_hessian", "nabla^2 phi(X, xi_s) = nabla^2 phi(xi_s, X) = nabla^2 phi(xi_s, xi_t) = 0", Pde, TOL_DEFAULT),
    id("lc.metric", "nabla^mu h^mu = 0", LeviCivita, TOL_DEFAULT),
    id("lc.torsion", "nabla^mu_A B - nabla^mu_B A = [A, B]", LeviCivita, TOL_DEFAULT),
    id("lc.mixed_hessian", "(nabla^S)^2 phi(X, xi_s) = (nabla^S)^2 phi(xi_s, X) = -(S/2) dphi(I_s X)", LeviCivita, TOL_DEFAULT),
    id("lc.eqlv1", "(nabla^S)^3 phi(A,B,C) + S dphi(A) h^S(B,C) + (S/2) dphi(B) h^S(C,A) + (S/2) dphi(C) h^S(A,B) = 0", LeviCivita, TOL_DEFAULT),
    id("curv.pair_symmetry", "R(X,Y,Z,W) = R(Z,W,X,Y)", Curvature, TOL_CURVATURE),
    id("curv.ricci_einstein", "Ric(X,Y) = 2(n+2) S g(X,Y)", Curvature, TOL_CURVATURE),
    id("curv.rho", "rho_s = -S omega_s", Curvature, TOL_CURVATURE),
    id("curv.vertical_vanishing", "R(xi_s,X,Y,Z) = R(xi_s,xi_t,X,Y) = 0", Curvature, TOL_CURVATURE),
    id("curv.closed_form", "R = (S/2)[g(Y,Z)g(X,W) - g(Y,W)g(X,Z)] + (S/2) sum [omega_s(Y,Z)omega_s(X,W) - omega_s(X,Z)omega_s(Y,W) - 2 omega_s(X,Y)omega_s(Z,W)]", Curvature, TOL_CURVATURE),
    id("curv.wqc", "W^qc = 0", Curvature, TOL_CURVATURE),
    id("curv.wqc_symmetry", "W^qc(X,Y,Z,U) = W^qc(Z,U,X,Y) = W^qc(X,Y,I_s Z,I_s U) = W^qc(I_s X,I_s Y,Z,U)", Curvature, TOL_CURVATURE),
    id("curv.flat", "R = 0 when S = 0", Curvature, TOL_CURVATURE),
    id("curv.riemann_constant", "R^h(A,B,C,D) = (S/2)[h(B,C)h(A,D) - h(B,D)h(A,C)] for h = g + (S/2) sum eta_s^2, S > 0", Curvature, TOL_CURVATURE),
    id("sub.first_order", "X(lap phi) = -4(n+1) S dphi(X)", Sublaplacian, TOL_DEFAULT),
    id("sub.eigen", "lap h = -4(n+1) S h, h = lap phi", Obata, TOL_CURVATURE),
    id("dist.bracket", "[grad phi, I_i grad phi] = -2 g(grad phi, grad phi) xi_i", Distribution, TOL_DEFAULT),
    id("dist.involutive", "[xi_s, D] in D, D = span{xi_s, grad phi, I_s grad phi}", Distribution, TOL_DEFAULT),
];

pub fn lookup(id: &str) -> Option<&'static Identity> {
    IDENTITIES.iter().find(|i| i.id == id)
}

/// Resolve a selection list of ids or `prefix.` group prefixes.
pub fn select(patterns: &[String]) -> Result<Vec<&'static Identity>, String> {
    let mut out: Vec<&'static Identity> = Vec::new();
    for p in patterns {
        let hits: Vec<&'static Identity> = IDENTITIES
            .iter()
            .filter(|i| i.id == p || (p.ends_with('.') && i.id.starts_with(p.as_str())))
            .collect();
        if hits.is_empty() {
            return Err(format!("unknown identity '{p}'"));
        }
        for h in hits {
            if !out.iter().any(|o| o.id == h.id) {
                out.push(h);
            }
        }
    }
    out.sort_by_key(|i| IDENTITIES.iter().position(|j| j.id == i.id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One entry per identity in the checked modules.
    const MANIFEST: &[(&str, usize)] = &[
        ("hk.", 3),
        ("jet.", 2),
        ("frame.", 2),
        ("ii.", 2),
        ("hat.", 2),
        ("mu.", 3),
        ("cal.", 9),
        ("w.", 4),
        ("nabla.", 5),
        ("lemma.", 2),
        ("delta.", 4),
        ("pde.", 5),
        ("lc.", 4),
        ("curv.", 9),
        ("sub.", 2),
        ("dist.", 2),
    ];

    #[test]
    fn registry_matches_manifest() {
        let total: usize = MANIFEST.iter().map(|m| m.1).sum();
        assert_eq!(IDENTITIES.len(), total);
        for (prefix, count) in MANIFEST {
            assert_eq!(IDENTITIES.iter().filter(|i| i.id.starts_with(prefix)).count(), *count, "{prefix}");
        }
    }

    #[test]
    fn ids_are_unique() {
        for (k, a) in IDENTITIES.iter().enumerate() {
            assert!(IDENTITIES[k + 1..].iter().all(|b| b.id != a.id), "{}", a.id);
        }
    }

    #[test]
    fn selection_by_prefix() {
        let s = select(&["curv.".into(), "pde.eqbi1".into()]).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s[0].id, "pde.eqbi1");
        assert!(select(&["nope".into()]).is_err());
    }
}
