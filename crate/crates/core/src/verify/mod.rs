//! Identity suites: sample a surface, evaluate every registered identity at
//! every point, and reduce to a deterministic report.

pub mod accept;
pub mod oracle;
pub mod registry;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::calibrate::{calibrate_point, calibration_residuals, parallel_residuals, parallel_w, qc_scalar, ParallelForm};
use crate::connection::{
    connection_checks, curvature_checks, delta_lemma_checks, distribution_checks, levi_civita_checks, pde_checks,
    sublaplacian_checks, ConnectionContext,
};
use crate::flat_hk::{apply_j_slice, dot, AmbientVector};
use crate::qc_extract::{duchemin_test, extract, QcError};
use crate::residual::Residual;
use crate::surface::{PointStream, Quadric, SurfaceError};

use registry::{Group, Identity, IDENTITIES};
use report::{IdentityRecord, Metadata, ResidualReport, SurfaceSummary};

pub const DEFAULT_POINTS: usize = 50;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_JET_ORDER: usize = 4;
/// The finite-difference oracle runs at this many leading points.
pub const ORACLE_POINTS: usize = 10;
/// A surface with a larger share of non-qc sample points is rejected.
pub const MAX_DUCHEMIN_FAILURE_RATE: f64 = 0.1;
/// Jet order of the Duchemin screening pass.
const SCREEN_ORDER: usize = 2;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("invalid suite configuration: {0}")]
    Config(String),
    #[error(
        "surface '{surface}' is not a qc-hypersurface: {failures} of {attempts} sampled points fail the Duchemin test \
         (largest II(I_s X, I_s Y) - II(X, Y) residual {residual:e})"
    )]
    NotQc { surface: String, failures: usize, attempts: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct SuiteSpec {
    pub surface: Quadric,
    pub points: usize,
    pub seed: u64,
    pub jet_order: usize,
    /// Overrides every default tolerance.
    pub tolerance: Option<f64>,
    /// Per-identity overrides, applied after `tolerance`.
    pub tolerances: BTreeMap<String, f64>,
    /// Identity ids or `prefix.` groups; everything when `None`.
    pub only: Option<Vec<String>>,
}

impl SuiteSpec {
    pub fn new(surface: Quadric) -> Self {
        Self {
            surface,
            points: DEFAULT_POINTS,
            seed: DEFAULT_SEED,
            jet_order: DEFAULT_JET_ORDER,
            tolerance: None,
            tolerances: BTreeMap::new(),
            only: None,
        }
    }

    fn selected(&self) -> Result<Vec<&'static Identity>, SuiteError> {
        if self.points < 1 {
            return Err(SuiteError::Config("point count must be at least 1".into()));
        }
        if !(3..=5).contains(&self.jet_order) {
            return Err(SuiteError::Config(format!("jet order {} not in 3..=5", self.jet_order)));
        }
        let bad = |t: f64| !(t > 0.0 && t.is_finite());
        if let Some(t) = self.tolerance.filter(|&t| bad(t)) {
            return Err(SuiteError::Config(format!("tolerance {t} must be positive")));
        }
        for (id, &t) in &self.tolerances {
            if bad(t) {
                return Err(SuiteError::Config(format!("tolerance {t} for '{id}' must be positive")));
            }
            if registry::lookup(id).is_none() {
                return Err(SuiteError::Config(format!("unknown identity '{id}' in tolerance overrides")));
            }
        }
        match &self.only {
            None => Ok(IDENTITIES.iter().collect()),
            Some(list) => registry::select(list).map_err(SuiteError::Config),
        }
    }

    fn tolerance_for(&self, ident: &Identity) -> f64 {
        self.tolerances.get(ident.id).copied().or(self.tolerance).unwrap_or(ident.tolerance)
    }

    fn order_for(&self, group: Group) -> usize {
        self.jet_order.max(group.min_order())
    }
}

/// Sample points, screening with the Duchemin test. Degenerate candidates
/// are replaced; too many non-qc points reject the surface.
struct Sample {
    points: Vec<AmbientVector>,
    attempts: usize,
    failures: usize,
    resampled: usize,
}

fn screen(q: &Quadric, count: usize, seed: u64) -> Result<Sample, SuiteError> {
    let mut stream = PointStream::new(q, count, seed);
    let mut s = Sample { points: Vec::with_capacity(count), attempts: 0, failures: 0, resampled: 0 };
    let mut worst = 0.0f64;
    let reject = |s: &Sample, worst: f64| SuiteError::NotQc {
        surface: q.name.clone(),
        failures: s.failures,
        attempts: s.attempts,
        residual: worst,
    };
    while s.points.len() < count {
        let Some(x) = stream.next() else {
            if s.failures > 0 {
                return Err(reject(&s, worst));
            }
            return Err(SurfaceError::SamplerExhausted(s.attempts + s.resampled).into());
        };
        match extract(q, &x, SCREEN_ORDER) {
            Ok(_) => {
                s.attempts += 1;
                s.points.push(x);
            }
            Err(QcError::NotInvariant(r)) => {
                s.attempts += 1;
                s.failures += 1;
                worst = worst.max(r);
            }
            Err(QcError::Indefinite(_)) => {
                s.attempts += 1;
                s.failures += 1;
            }
            Err(_) => s.resampled += 1,
        }
        if s.attempts >= count && s.failures as f64 > MAX_DUCHEMIN_FAILURE_RATE * s.attempts as f64 {
            return Err(reject(&s, worst));
        }
    }
    if s.failures as f64 > MAX_DUCHEMIN_FAILURE_RATE * s.attempts as f64 {
        return Err(reject(&s, worst));
    }
    Ok(s)
}

fn value(v: f64) -> Residual {
    let mut r = Residual::default();
    r.push(v, &[]);
    r
}

fn poisoned() -> Residual {
    value(f64::NAN)
}

/// One calibrated context per jet order.
type Stage = Result<(ConnectionContext, ParallelForm), String>;

fn build_stage(q: &Quadric, x: &AmbientVector, order: usize) -> Stage {
    let cal = calibrate_point(q, x, order).map_err(|e| e.to_string())?;
    let w = parallel_w(&cal);
    let ctx = ConnectionContext::new(cal).map_err(|e| e.to_string())?;
    Ok((ctx, w))
}

#[derive(Debug, Default)]
struct PointEval {
    values: BTreeMap<&'static str, Residual>,
    s: f64,
    f: f64,
    mu: f64,
    grad_f: f64,
    umbilical: f64,
    excluded: bool,
    errors: Vec<String>,
}

type Entries = Vec<(&'static str, Option<Residual>)>;

fn ambient_entries(x: &AmbientVector, normal: &[f64]) -> Entries {
    let (mut rel, mut skew, mut orth) = (Residual::default(), Residual::default(), Residual::default());
    let vs = [x.coords.as_slice(), normal];
    for v in vs {
        let j = |s: usize, u: &[f64]| apply_j_slice(s, u);
        let rows = [
            (j(1, &j(2, v)), j(3, v), 1.0),
            (j(2, &j(1, v)), j(3, v), -1.0),
            (j(1, &j(1, v)), v.to_vec(), -1.0),
            (j(2, &j(2, v)), v.to_vec(), -1.0),
            (j(3, &j(3, v)), v.to_vec(), -1.0),
        ];
        for (a, b, sign) in rows {
            for (p, q) in a.iter().zip(&b) {
                rel.push(p - sign * q, &[*p, *q]);
            }
        }
    }
    for s in 1..=3 {
        let (ju, jv) = (apply_j_slice(s, vs[0]), apply_j_slice(s, vs[1]));
        let (a, b) = (dot(&ju, vs[1]), dot(vs[0], &jv));
        skew.push(a + b, &[a, b]);
        let (c, d) = (dot(&ju, &jv), dot(vs[0], vs[1]));
        orth.push(c - d, &[c, d]);
    }
    vec![("hk.j_relations", Some(rel)), ("hk.j_skew", Some(skew)), ("hk.j_orthogonal", Some(orth))]
}

fn group_entries(group: Group, q: &Quadric, index: usize, ctx: &ConnectionContext, w: &ParallelForm, ev: &mut PointEval) -> Result<Entries, String> {
    let cal = &ctx.cal;
    let some = |pairs: Vec<(&'static str, Residual)>| -> Entries { pairs.into_iter().map(|(k, v)| (k, Some(v))).collect() };
    Ok(match group {
        Group::Ambient => ambient_entries(&cal.emb.chart.base, &cal.emb.frame.normal.value()),
        Group::Chart => {
            let f = q.eval_jet(&cal.emb.chart.chart);
            let mut chart = Residual::default();
            for c in f.coeffs() {
                chart.push(*c, &[]);
            }
            let fd = (index < ORACLE_POINTS).then(|| oracle::fd_oracle(q, cal));
            vec![("jet.chart_residual", Some(chart)), ("jet.fd_oracle", fd)]
        }
        Group::Frame => {
            let frame = &cal.emb.frame;
            let duch = duchemin_test(&cal.hat.ii, frame);
            some(vec![
                ("frame.orthonormality", value(frame.orthonormality_residual())),
                ("frame.h_invariance", value(frame.invariance_residual())),
                ("ii.symmetry", value(cal.hat.ii.symmetry_residual)),
                ("ii.q_invariance", value(duch.invariance_residual)),
                ("hat.compatibility", value(cal.hat.compatibility_residual)),
                ("hat.g_consistency", value(cal.hat.g_hat_spread)),
            ])
        }
        Group::Calibration => {
            let r = calibration_residuals(cal);
            let mu = &cal.mu;
            let mut fit = Residual::default();
            fit.push(mu.fit_residual, &[]);
            some(vec![
                ("mu.fit_residual", fit),
                ("mu.reality", value(mu.imaginary)),
                ("mu.agreement", value(mu.agreement)),
                ("cal.reeb_duality", r.reeb_duality),
                ("cal.reeb_conditions", r.reeb_conditions),
                ("cal.xi_s", r.xi_s_is_j_xi),
                ("cal.df_xi", r.df_xi),
                ("cal.structure_equations", r.structure_equations),
                ("cal.s_consistency", value(qc_scalar(cal).1)),
                ("cal.r_identity", r.r_identity),
                ("cal.lambda_j", r.lambda_j),
                ("cal.g_orthonormality", r.frame_orthonormality),
            ])
        }
        Group::Parallel => {
            let r = parallel_residuals(cal, w);
            some(vec![
                ("w.expansion", r.expansion),
                ("w.j_invariance", r.j_invariance),
                ("w.n_df", r.n_df),
                ("w.parallel", r.derivative),
            ])
        }
        Group::Connection => {
            let r = connection_checks(ctx);
            some(vec![
                ("nabla.horizontal", r.horizontal),
                ("nabla.metric", r.metric),
                ("nabla.torsion_hh", r.torsion_hh),
                ("nabla.torsion_vh", r.torsion_vh),
                ("nabla.sp1", r.sp1),
                ("lemma.d_xi", r.d_xi),
                ("lemma.d_xi_s", r.d_xi_s),
            ])
        }
        Group::Delta => {
            let r = delta_lemma_checks(ctx, w);
            some(vec![
                ("delta.w_x", r.w_x),
                ("delta.w_xi", r.w_xi),
                ("delta.w_xi_s", r.w_xi_s),
                ("delta.w_commutes_j", r.w_commutes_j),
            ])
        }
        Group::Pde => {
            let r = pde_checks(ctx).map_err(|e| e.to_string())?;
            some(vec![
                ("pde.eqbi1", r.eqbi1),
                ("pde.eqbi2", r.eqbi2),
                ("pde.eqbi3", r.eqbi3),
                ("pde.hessian_symmetry", r.hessian_symmetry),
                ("pde.vertical_hessian", r.vertical_hessian),
            ])
        }
        Group::LeviCivita => {
            let r = levi_civita_checks(ctx).map_err(|e| e.to_string())?;
            vec![
                ("lc.metric", Some(r.metric)),
                ("lc.torsion", Some(r.torsion)),
                ("lc.mixed_hessian", r.mixed_hessian),
                ("lc.eqlv1", r.eqlv1),
            ]
        }
        Group::Curvature => {
            let r = curvature_checks(ctx).map_err(|e| e.to_string())?;
            vec![
                ("curv.pair_symmetry", Some(r.pair_symmetry)),
                ("curv.ricci_einstein", Some(r.ricci_einstein)),
                ("curv.rho", Some(r.rho)),
                ("curv.vertical_vanishing", Some(r.vertical_vanishing)),
                ("curv.closed_form", Some(r.closed_form)),
                ("curv.wqc", Some(r.wqc)),
                ("curv.wqc_symmetry", Some(r.wqc_symmetry)),
                ("curv.flat", r.flat),
                ("curv.riemann_constant", r.riemann_constant),
            ]
        }
        Group::Sublaplacian => {
            let r = sublaplacian_checks(ctx).map_err(|e| e.to_string())?;
            vec![("sub.first_order", Some(r.first_order))]
        }
        Group::Obata => {
            let r = sublaplacian_checks(ctx).map_err(|e| e.to_string())?;
            vec![("sub.eigen", r.eigen)]
        }
        Group::Distribution => {
            let r = distribution_checks(ctx);
            ev.excluded = r.excluded;
            if r.excluded {
                vec![("dist.bracket", None), ("dist.involutive", None)]
            } else {
                vec![("dist.bracket", Some(r.bracket)), ("dist.involutive", Some(r.involutive))]
            }
        }
    })
}

fn evaluate_point(spec: &SuiteSpec, selected: &[&'static Identity], index: usize, x: &AmbientVector) -> PointEval {
    let q = &spec.surface;
    let mut ev = PointEval::default();
    let groups: BTreeSet<Group> = selected.iter().map(|i| i.group).collect();
    let orders: BTreeSet<usize> = groups.iter().map(|&g| spec.order_for(g)).collect();
    let stages: BTreeMap<usize, Stage> = orders.iter().map(|&k| (k, build_stage(q, x, k))).collect();
    let wanted: BTreeSet<&str> = selected.iter().map(|i| i.id).collect();

    if let Some(Ok((ctx, _))) = stages.values().next() {
        let cal = &ctx.cal;
        ev.s = cal.s;
        ev.f = cal.f.value();
        ev.mu = cal.mu.jet.value();
        ev.umbilical = cal.hat.umbilical_defect;
        ev.grad_f = cal.e.iter().map(|e| cal.df(e).value().powi(2)).sum::<f64>().sqrt();
    } else {
        ev.s = f64::NAN;
        ev.f = f64::NAN;
        ev.mu = f64::NAN;
        ev.umbilical = f64::NAN;
        ev.grad_f = f64::NAN;
    }

    for &g in &groups {
        let order = spec.order_for(g);
        let result = match &stages[&order] {
            Ok((ctx, w)) => group_entries(g, q, index, ctx, w, &mut ev),
            Err(e) => Err(e.clone()),
        };
        match result {
            Ok(entries) => {
                for (id, r) in entries {
                    if let (true, Some(r)) = (wanted.contains(id), r) {
                        ev.values.insert(id, r);
                    }
                }
            }
            Err(e) => {
                ev.errors.push(format!("point {index}, {g:?} at jet order {order}: {e}"));
                for i in selected.iter().filter(|i| i.group == g) {
                    ev.values.insert(i.id, poisoned());
                }
            }
        }
    }
    ev
}

fn range(vals: impl Iterator<Item = f64>) -> [f64; 2] {
    vals.fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], v| [lo.min(v), hi.max(v)])
}

pub fn run_suite(spec: &SuiteSpec) -> Result<ResidualReport, SuiteError> {
    let start = Instant::now();
    let selected = spec.selected()?;
    let q = &spec.surface;
    let sample = screen(q, spec.points, spec.seed)?;
    let evals: Vec<PointEval> = sample
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| evaluate_point(spec, &selected, i, x))
        .collect();

    let mut records = Vec::with_capacity(selected.len());
    for ident in &selected {
        let mut acc = Residual::default();
        let mut evaluated = 0;
        for ev in &evals {
            if let Some(r) = ev.values.get(ident.id) {
                acc.merge(r);
                evaluated += 1;
            }
        }
        let tolerance = spec.tolerance_for(ident);
        let (max, scale, pass) = if evaluated == 0 {
            (0.0, 1.0, None)
        } else {
            (acc.max, acc.scale, Some(acc.passes(tolerance)))
        };
        records.push(IdentityRecord {
            id: ident.id.to_string(),
            anchor: ident.anchor.to_string(),
            jet_order: spec.order_for(ident.group),
            max_residual: max,
            scale,
            tolerance,
            pass,
            evaluated,
            skipped: evals.len() - evaluated,
        });
    }
    let s_vals: Vec<f64> = evals.iter().map(|e| e.s).collect();
    let s_range = range(s_vals.iter().copied());
    let summary = SurfaceSummary {
        s_mean: s_vals.iter().sum::<f64>() / s_vals.len() as f64,
        s_spread: s_range[1] - s_range[0],
        umbilical_defect_range: range(evals.iter().map(|e| e.umbilical)),
        f_range: range(evals.iter().map(|e| e.f)),
        mu_range: range(evals.iter().map(|e| e.mu)),
        grad_f_max: evals.iter().map(|e| e.grad_f).fold(0.0, f64::max),
        duchemin_attempts: sample.attempts,
        duchemin_failures: sample.failures,
        resampled: sample.resampled,
        distribution_excluded: evals.iter().filter(|e| e.excluded).count(),
    };
    let errors: Vec<String> = evals.iter().flat_map(|e| e.errors.iter().cloned()).collect();
    let pass = errors.is_empty() && records.iter().all(|r| r.pass != Some(false));
    Ok(ResidualReport {
        surface: q.name.clone(),
        n: q.n,
        metadata: Metadata {
            seed: spec.seed,
            jet_order: spec.jet_order,
            points: spec.points,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        summary,
        records,
        errors,
        pass,
    })
}
