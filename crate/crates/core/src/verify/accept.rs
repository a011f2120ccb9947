//! The acceptance matrix: the four model surfaces at default settings and
//! fourteen pass/fail criteria over their reports.

use serde::{Deserialize, Serialize};

use super::report::{emit_report, Format, ResidualReport};
use super::{run_suite, SuiteError, SuiteSpec, DEFAULT_JET_ORDER, DEFAULT_POINTS, DEFAULT_SEED};
use crate::surface::catalog;

pub const ACCEPT_SURFACES: [&str; 4] = ["sphere", "heisenberg", "hyperboloid", "ellipsoid"];

#[derive(Debug, Clone, Copy)]
pub struct AcceptOptions {
    pub points: usize,
    pub seed: u64,
    pub jet_order: usize,
    /// Rerun the matrix on a smaller thread pool and compare reports.
    pub determinism: bool,
}

impl Default for AcceptOptions {
    fn default() -> Self {
        Self { points: DEFAULT_POINTS, seed: DEFAULT_SEED, jet_order: DEFAULT_JET_ORDER, determinism: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub number: usize,
    pub title: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}: {} ({})",
            self.number,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptReport {
    pub criteria: Vec<CriterionOutcome>,
    pub suites: Vec<ResidualReport>,
    pub pass: bool,
}

pub fn run_matrix(opts: &AcceptOptions) -> Result<Vec<ResidualReport>, SuiteError> {
    ACCEPT_SURFACES
        .iter()
        .map(|name| {
            let mut spec = SuiteSpec::new(catalog(name, 1)?);
            spec.points = opts.points;
            spec.seed = opts.seed;
            spec.jet_order = opts.jet_order;
            run_suite(&spec)
        })
        .collect()
}

fn suite<'a>(suites: &'a [ResidualReport], name: &str) -> Option<&'a ResidualReport> {
    suites.iter().find(|s| s.surface == name)
}

/// Every listed identity passes at `tol` (relative to its scale) on every
/// listed surface, with at least one evaluated point.
fn ids_pass(suites: &[ResidualReport], names: &[&str], ids: &[&str], tol: f64) -> (bool, String) {
    let mut ok = true;
    let mut worst = (0.0f64, String::new());
    for name in names {
        let Some(s) = suite(suites, name) else {
            return (false, format!("{name} missing"));
        };
        for id in ids {
            match s.record(id) {
                Some(r) if r.evaluated > 0 => {
                    let rel = r.max_residual / r.scale;
                    let pass = r.max_residual < tol * r.scale;
                    ok &= pass;
                    if !(rel <= worst.0) {
                        worst = (rel, format!("{name} {id}"));
                    }
                }
                _ => {
                    ok = false;
                    worst = (f64::NAN, format!("{name} {id} not evaluated"));
                }
            }
        }
        if !s.errors.is_empty() {
            ok = false;
        }
    }
    (ok, format!("worst {:.2e} at {}, tolerance {tol:.0e}", worst.0, worst.1))
}

fn criterion(number: usize, title: &str, (pass, detail): (bool, String)) -> CriterionOutcome {
    CriterionOutcome { number, title: title.into(), pass, detail }
}

fn missing(name: &str) -> (bool, String) {
    (false, format!("{name} missing"))
}

/// Criteria 1 to 13, which only look at one run of the matrix.
pub fn evaluate_criteria(suites: &[ResidualReport]) -> Vec<CriterionOutcome> {
    let mut out = Vec::new();

    let c1 = {
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, expect) in [("sphere", 2.0), ("heisenberg", 0.0), ("hyperboloid", -2.0)] {
            match suite(suites, name) {
                Some(s) => {
                    let sm = &s.summary;
                    ok &= (sm.s_mean - expect).abs() < 1e-6 && sm.s_spread < 1e-6;
                    parts.push(format!("{name} S={:.9} spread {:.1e}", sm.s_mean, sm.s_spread));
                }
                None => return vec![criterion(1, "model scalar curvatures", missing(name))],
            }
        }
        (ok, parts.join(", "))
    };
    out.push(criterion(1, "model scalar curvatures", c1));

    let c2 = match (suite(suites, "sphere"), suite(suites, "ellipsoid")) {
        (Some(sp), Some(el)) => {
            let (a, b) = (&sp.summary, &el.summary);
            let f_dev = (a.f_range[0] - 1.0).abs().max((a.f_range[1] - 1.0).abs());
            let ok = a.umbilical_defect_range[1] < 1e-9
                && f_dev < 1e-8
                && b.umbilical_defect_range[1] > 1e-2
                && b.grad_f_max > 1e-3;
            (
                ok,
                format!(
                    "sphere defect <= {:.1e}, |f-1| <= {:.1e}; ellipsoid defect up to {:.3}, |grad f| up to {:.3}",
                    a.umbilical_defect_range[1], f_dev, b.umbilical_defect_range[1], b.grad_f_max
                ),
            )
        }
        _ => missing("sphere or ellipsoid"),
    };
    out.push(criterion(2, "umbilicity dichotomy", c2));

    let c3 = {
        let mut ok = true;
        let (mut im, mut agree, mut mu_min) = (0.0f64, 0.0f64, f64::INFINITY);
        for name in ACCEPT_SURFACES {
            let Some(s) = suite(suites, name) else {
                return out.into_iter().chain([criterion(3, "calibration reality", missing(name))]).collect();
            };
            let r = s.record("mu.reality").map(|r| r.max_residual).unwrap_or(f64::NAN);
            let a = s.record("mu.agreement").map(|r| r.max_residual).unwrap_or(f64::NAN);
            ok &= r < 1e-9 && a < 1e-9 && s.summary.mu_range[0] > 0.0;
            im = im.max(r);
            agree = agree.max(a);
            mu_min = mu_min.min(s.summary.mu_range[0]);
        }
        (ok, format!("max |Im mu| {im:.1e}, max fit disagreement {agree:.1e}, min mu {mu_min:.4}"))
    };
    out.push(criterion(3, "calibration reality and positivity", c3));

    out.push(criterion(4, "structure equations", ids_pass(suites, &ACCEPT_SURFACES, &["cal.structure_equations"], 1e-6)));
    out.push(criterion(5, "parallel W", ids_pass(suites, &ACCEPT_SURFACES, &["w.parallel"], 1e-6)));
    out.push(criterion(
        6,
        "connection and W lemmas",
        ids_pass(
            suites,
            &["ellipsoid", "hyperboloid"],
            &[
                "nabla.horizontal",
                "nabla.metric",
                "nabla.torsion_hh",
                "nabla.torsion_vh",
                "nabla.sp1",
                "lemma.d_xi",
                "lemma.d_xi_s",
                "delta.w_x",
                "delta.w_xi",
                "delta.w_xi_s",
                "delta.w_commutes_j",
            ],
            1e-6,
        ),
    ));
    out.push(criterion(7, "PDE system for phi", ids_pass(suites, &["ellipsoid"], &["pde.eqbi1", "pde.eqbi2", "pde.eqbi3"], 1e-6)));
    out.push(criterion(8, "Levi-Civita reduction", ids_pass(suites, &["ellipsoid"], &["lc.eqlv1"], 1e-6)));
    out.push(criterion(9, "sub-Laplacian eigenfunction", ids_pass(suites, &["ellipsoid"], &["sub.eigen"], 1e-5)));
    let c10 = {
        let (a, da) = ids_pass(suites, &["ellipsoid", "heisenberg"], &["curv.wqc"], 1e-5);
        let (b, db) = ids_pass(suites, &["heisenberg"], &["curv.flat"], 1e-5);
        (a && b, format!("W^qc: {da}; flat R: {db}"))
    };
    out.push(criterion(10, "conformal flatness", c10));
    out.push(criterion(
        11,
        "qc-Einstein curvature identities",
        ids_pass(suites, &["ellipsoid", "sphere"], &["curv.rho", "curv.vertical_vanishing", "curv.ricci_einstein"], 1e-5),
    ));
    let c12 = {
        let (ok, d) = ids_pass(suites, &["ellipsoid"], &["dist.bracket", "dist.involutive"], 1e-6);
        let ex = suite(suites, "ellipsoid").map(|s| s.summary.distribution_excluded).unwrap_or(0);
        (ok, format!("{d}; {ex} points excluded"))
    };
    out.push(criterion(12, "bracket and distribution identities", c12));
    out.push(criterion(13, "differentiation oracle", ids_pass(suites, &ACCEPT_SURFACES, &["jet.fd_oracle"], 1e-4)));
    out
}

fn machine_matrix(suites: &[ResidualReport]) -> String {
    suites.iter().map(|s| emit_report(s, Format::Machine)).collect::<Vec<_>>().join("\n")
}

pub fn run_acceptance(opts: &AcceptOptions) -> Result<AcceptReport, SuiteError> {
    let suites = run_matrix(opts)?;
    let mut criteria = evaluate_criteria(&suites);
    if opts.determinism {
        let threads = (rayon::current_num_threads() / 2).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SuiteError::Config(e.to_string()))?;
        let again = pool.install(|| run_matrix(opts))?;
        let (a, b) = (machine_matrix(&suites), machine_matrix(&again));
        let detail = if a == b {
            format!("{} bytes identical across runs ({} and {threads} threads)", a.len(), rayon::current_num_threads())
        } else {
            let at = a.bytes().zip(b.bytes()).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
            format!("machine reports differ at byte {at}")
        };
        criteria.push(criterion(14, "determinism", (a == b, detail)));
    }
    let pass = criteria.iter().all(|c| c.pass);
    Ok(AcceptReport { criteria, suites, pass })
}

pub fn emit_accept(r: &AcceptReport, format: Format) -> String {
    match format {
        Format::Machine => serde_json::to_string_pretty(r).expect("report serializes"),
        Format::Human => {
            let mut out = String::new();
            for s in &r.suites {
                out.push_str(&emit_report(s, Format::Human));
                out.push('\n');
            }
            for c in &r.criteria {
                out.push_str(&c.line());
                out.push('\n');
            }
            out.push_str(if r.pass { "ACCEPT PASS\n" } else { "ACCEPT FAIL\n" });
            out
        }
    }
}
