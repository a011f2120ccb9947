//! Quadric hypersurfaces `M = {F = 0}` of ℍ^{n+1}, graph charts around a
//! base point, and the splitting of the ambient space along `M` into the
//! normal, its quaternionic rotations, and the horizontal space `H`.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flat_hk::{apply_j_slice, dot, AmbientVector};
use crate::jets::{implicit_solve, Jet, JetError, JetSpace, JetVector};

/// Points with |grad F| below this are treated as degenerate.
pub const GRADIENT_THRESHOLD: f64 = 1e-6;
/// Gram–Schmidt pivots below this abort frame construction.
pub const PIVOT_THRESHOLD: f64 = 1e-8;
/// On-surface tolerance for sampled points.
pub const ON_SURFACE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("unknown surface `{0}` (expected one of: sphere, heisenberg, hyperboloid, ellipsoid)")]
    UnknownSurface(String),
    #[error("quaternionic dimension n must be >= 1, got {0}")]
    BadDimension(usize),
    #[error("coefficient matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("coefficient shape mismatch: {0}")]
    Shape(String),
    #[error("sampler exhausted {0} attempts without finding enough regular points")]
    SamplerExhausted(usize),
    #[error("degenerate point: |grad F| = {0:e}")]
    DegeneratePoint(f64),
    #[error("Gram-Schmidt pivot {0:e} below threshold")]
    GramSchmidt(f64),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("surface spec parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which sampler to use; catalog quadrics get exact parametrizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Sphere,
    Heisenberg,
    Hyperboloid,
    Ellipsoid,
    General,
}

/// `F(x) = xᵀ A x + b·x + c` on ℝ^{4n+4}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadric {
    pub name: String,
    pub n: usize,
    /// Row-major symmetric matrix.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub kind: SurfaceKind,
}

pub const CATALOG: [&str; 4] = ["sphere", "heisenberg", "hyperboloid", "ellipsoid"];

impl Quadric {
    pub fn new(name: &str, n: usize, a: Vec<f64>, b: Vec<f64>, c: f64) -> Result<Self, SurfaceError> {
        Self::with_kind(name, n, a, b, c, SurfaceKind::General)
    }

    fn with_kind(name: &str, n: usize, a: Vec<f64>, b: Vec<f64>, c: f64, kind: SurfaceKind) -> Result<Self, SurfaceError> {
        if n < 1 {
            return Err(SurfaceError::BadDimension(n));
        }
        let d = 4 * n + 4;
        if a.len() != d * d {
            return Err(SurfaceError::Shape(format!("A has {} entries, expected {}", a.len(), d * d)));
        }
        if b.len() != d {
            return Err(SurfaceError::Shape(format!("b has {} entries, expected {}", b.len(), d)));
        }
        let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut asym = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                asym = asym.max((a[i * d + j] - a[j * d + i]).abs());
            }
        }
        if asym > 1e-12 * scale {
            return Err(SurfaceError::NotSymmetric(asym));
        }
        Ok(Self { name: name.to_string(), n, a, b, c, kind })
    }

    pub fn dim(&self) -> usize {
        4 * self.n + 4
    }

    pub fn a_entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.dim() + j]
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = self.c + dot(&self.b, x);
        for i in 0..d {
            for j in 0..d {
                acc += x[i] * self.a[i * d + j] * x[j];
            }
        }
        acc
    }

    /// A critical point of `F` (least-squares solution of `2Ax = −b`).
    pub fn centre(&self) -> Vec<f64> {
        let d = self.dim();
        let a = nalgebra::DMatrix::from_row_slice(d, d, &self.a) * 2.0;
        let rhs = -nalgebra::DVector::from_column_slice(&self.b);
        match a.svd(true, true).solve(&rhs, 1e-12) {
            Ok(x) => x.iter().copied().collect(),
            Err(_) => vec![0.0; d],
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| 2.0 * (0..d).map(|j| self.a[i * d + j] * x[j]).sum::<f64>() + self.b[i])
            .collect()
    }

    /// `F` evaluated on coordinate jets.
    pub fn eval_jet(&self, x: &[Jet]) -> Jet {
        let d = self.dim();
        let order = x.iter().map(Jet::order).min().unwrap();
        let mut acc = Jet::constant(x[0].space(), order, self.c);
        for i in 0..d {
            // x_i (sum_j A_ij x_j + b_i)
            let mut row = Jet::constant(x[0].space(), order, self.b[i]);
            for j in 0..d {
                let a = self.a[i * d + j];
                if a != 0.0 {
                    row = row.axpy(a, &x[j]);
                }
            }
            if row.max_abs() != 0.0 {
                acc = &acc + &(&x[i] * &row);
            }
        }
        acc
    }

    pub fn gradient_jet(&self, x: &[Jet]) -> JetVector {
        let d = self.dim();
        let order = x.iter().map(Jet::order).min().unwrap();
        JetVector(
            (0..d)
                .map(|i| {
                    let mut g = Jet::constant(x[0].space(), order, self.b[i]);
                    for j in 0..d {
                        let a = self.a[i * d + j];
                        if a != 0.0 {
                            g = g.axpy(2.0 * a, &x[j]);
                        }
                    }
                    g
                })
                .collect(),
        )
    }
}

/// The catalog of model quadrics.
pub fn catalog(name: &str, n: usize) -> Result<Quadric, SurfaceError> {
    if n < 1 {
        return Err(SurfaceError::BadDimension(n));
    }
    let d = 4 * n + 4;
    let q = 4 * n;
    let diag = |vals: &dyn Fn(usize) -> f64| {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = vals(i);
        }
        a
    };
    match name {
        "sphere" => Quadric::with_kind(name, n, diag(&|_| 1.0), vec![0.0; d], -1.0, SurfaceKind::Sphere),
        "hyperboloid" => Quadric::with_kind(
            name,
            n,
            diag(&|i| if i < q { 1.0 } else { -1.0 }),
            vec![0.0; d],
            1.0,
            SurfaceKind::Hyperboloid,
        ),
        "heisenberg" => {
            let mut b = vec![0.0; d];
            b[q] = 1.0;
            Quadric::with_kind(name, n, diag(&|i| if i < q { 1.0 } else { 0.0 }), b, 0.0, SurfaceKind::Heisenberg)
        }
        "ellipsoid" => Quadric::with_kind(
            name,
            n,
            diag(&|i| if i < q { 1.0 } else { 2.0 }),
            vec![0.0; d],
            -1.0,
            SurfaceKind::Ellipsoid,
        ),
        other => Err(SurfaceError::UnknownSurface(other.to_string())),
    }
}

/// Human-readable defining equation of a catalog surface.
pub fn catalog_equation(name: &str) -> Option<&'static str> {
    match name {
        "sphere" => Some("|q_1|^2 + ... + |q_n|^2 + |p|^2 = 1"),
        "hyperboloid" => Some("|q_1|^2 + ... + |q_n|^2 - |p|^2 = -1"),
        "heisenberg" => Some("|q_1|^2 + ... + |q_n|^2 + Re(p) = 0"),
        "ellipsoid" => Some("|q_1|^2 + ... + |q_n|^2 + 2|p|^2 = 1"),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
struct SurfaceSpecFile {
    name: String,
    n: usize,
    #[serde(rename = "A")]
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

/// Parse a surface-spec document (TOML with keys `name`, `n`, `A`
/// row-major, `b`, `c`).
pub fn parse_surface_spec(text: &str) -> Result<Quadric, SurfaceError> {
    let spec: SurfaceSpecFile = toml::from_str(text).map_err(|e| SurfaceError::Parse(e.to_string()))?;
    Quadric::new(&spec.name, spec.n, spec.a, spec.b, spec.c)
}

pub fn load_surface_spec(path: &Path) -> Result<Quadric, SurfaceError> {
    parse_surface_spec(&std::fs::read_to_string(path)?)
}

fn gaussian(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let r = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= r);
}

fn draw_candidate(q: &Quadric, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let d = q.dim();
    let nq = 4 * q.n;
    match q.kind {
        SurfaceKind::Sphere => {
            let mut x = gaussian(rng, d);
            normalize(&mut x);
            Some(x)
        }
        SurfaceKind::Heisenberg => {
            let mut x = gaussian(rng, d);
            let qq: f64 = x[..nq].iter().map(|t| t * t).sum();
            x[nq] = -qq;
            Some(x)
        }
        SurfaceKind::Hyperboloid => {
            let mut x = gaussian(rng, d);
            let qq: f64 = x[..nq].iter().map(|t| t * t).sum();
            let mut p = x[nq..].to_vec();
            normalize(&mut p);
            let r = (1.0 + qq).sqrt();
            for (k, v) in p.iter().enumerate() {
                x[nq + k] = r * v;
            }
            Some(x)
        }
        SurfaceKind::Ellipsoid => {
            // centered positive definite: scale a Gaussian direction radially
            let mut x = gaussian(rng, d);
            let xax = q.value(&x) - q.c;
            let r = (-q.c / xax).sqrt();
            x.iter_mut().for_each(|t| *t *= r);
            polish(q, &mut x);
            Some(x)
        }
        SurfaceKind::General => {
            // intersect a random line through a point near the centre
            let centre = q.centre();
            let z: Vec<f64> = gaussian(rng, d).iter().zip(&centre).map(|(g, c)| c + 0.1 * g).collect();
            let dir = gaussian(rng, d);
            let ad: Vec<f64> = (0..d).map(|i| (0..d).map(|j| q.a_entry(i, j) * dir[j]).sum()).collect();
            let qa = dot(&dir, &ad);
            let qb = 2.0 * dot(&z, &ad) + dot(&q.b, &dir);
            let qc = q.value(&z);
            let t = if qa.abs() < 1e-14 {
                if qb.abs() < 1e-14 {
                    return None;
                }
                -qc / qb
            } else {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                // numerically stable pair of roots; take the smaller one
                let sq = disc.sqrt();
                let w = -0.5 * (qb + qb.signum() * sq);
                let (r1, r2) = (w / qa, if w != 0.0 { qc / w } else { w / qa });
                if r1.abs() < r2.abs() {
                    r1
                } else {
                    r2
                }
            };
            let mut x: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            polish(q, &mut x);
            Some(x)
        }
    }
}

/// A few Newton steps along the gradient to push |F| to roundoff.
fn polish(q: &Quadric, x: &mut [f64]) {
    for _ in 0..5 {
        let f = q.value(x);
        if f.abs() < 1e-14 {
            break;
        }
        let g = q.gradient(x);
        let gg = dot(&g, &g);
        if gg == 0.0 {
            break;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= f * gi / gg);
    }
}

/// Seeded points on `q` with |F| < 1e-12 and |grad F| > 1e-6.
pub fn sample_points(q: &Quadric, count: usize, seed: u64) -> Result<Vec<AmbientVector>, SurfaceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = 10 * count.max(1);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        if let Some(x) = draw_candidate(q, &mut rng) {
            if is_regular_point(q, &x) {
                out.push(AmbientVector { coords: x, n: q.n });
            }
        }
    }
    if out.len() < count {
        return Err(SurfaceError::SamplerExhausted(budget));
    }
    Ok(out)
}

/// A stream of sample points continuing past the first `count`; used to
/// replace points that fail a downstream degeneracy check.
pub struct PointStream {
    quadric: Quadric,
    rng: ChaCha8Rng,
    drawn: usize,
    budget: usize,
}

impl PointStream {
    pub fn new(q: &Quadric, count: usize, seed: u64) -> Self {
        Self { quadric: q.clone(), rng: ChaCha8Rng::seed_from_u64(seed), drawn: 0, budget: 10 * count.max(1) }
    }
}

impl Iterator for PointStream {
    type Item = AmbientVector;
    fn next(&mut self) -> Option<AmbientVector> {
        while self.drawn < self.budget {
            self.drawn += 1;
            if let Some(x) = draw_candidate(&self.quadric, &mut self.rng) {
                if is_regular_point(&self.quadric, &x) {
                    return Some(AmbientVector { coords: x, n: self.quadric.n });
                }
            }
        }
        None
    }
}

fn is_regular_point(q: &Quadric, x: &[f64]) -> bool {
    let g = q.gradient(x);
    q.value(x).abs() < ON_SURFACE_TOL && dot(&g, &g).sqrt() > GRADIENT_THRESHOLD && x.iter().all(|t| t.is_finite())
}

/// A graph chart of `M` around a base point: ambient coordinates as jets of
/// the `4n+3` chart variables, one coordinate solved implicitly.
#[derive(Debug, Clone)]
pub struct ChartPoint {
    pub base: AmbientVector,
    pub chart: Vec<Jet>,
    pub solved_index: usize,
    space: Arc<JetSpace>,
    order: usize,
}

impl ChartPoint {
    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.chart.len()
    }

    pub fn nvars(&self) -> usize {
        self.chart.len() - 1
    }

    /// Ambient index carried by chart variable `c`.
    pub fn ambient_index(&self, c: usize) -> usize {
        if c < self.solved_index {
            c
        } else {
            c + 1
        }
    }

    /// `∂x/∂u_c` as an ambient jet vector.
    pub fn coordinate_field(&self, c: usize) -> JetVector {
        let order = self.order - 1;
        let amb = self.ambient_index(c);
        JetVector(
            (0..self.dim())
                .map(|i| {
                    if i == self.solved_index {
                        self.chart[i].partial(c)
                    } else {
                        Jet::constant(&self.space, order, if i == amb { 1.0 } else { 0.0 })
                    }
                })
                .collect(),
        )
    }

    /// Derivative of a scalar jet along a tangent field: `A(f)`.
    pub fn along(&self, a: &JetVector, f: &Jet) -> Jet {
        let m = self.nvars();
        let mut acc: Option<Jet> = None;
        for c in 0..m {
            let comp = &a.0[self.ambient_index(c)];
            if comp.max_abs() == 0.0 {
                continue;
            }
            let term = comp * &f.partial(c);
            acc = Some(match acc {
                None => term,
                Some(s) => &s + &term,
            });
        }
        acc.unwrap_or_else(|| Jet::zero(&self.space, a.order().min(f.order().saturating_sub(1))))
    }

    /// Flat derivative of an ambient jet vector along a tangent field:
    /// `D_A V`.
    pub fn along_vec(&self, a: &JetVector, v: &JetVector) -> JetVector {
        let m = self.nvars();
        let comps: Vec<(usize, &Jet)> =
            (0..m).map(|c| (c, &a.0[self.ambient_index(c)])).filter(|(_, j)| j.max_abs() != 0.0).collect();
        JetVector(
            v.0.iter()
                .map(|vi| {
                    let mut acc: Option<Jet> = None;
                    for &(c, ac) in &comps {
                        let term = ac * &vi.partial(c);
                        acc = Some(match acc {
                            None => term,
                            Some(s) => &s + &term,
                        });
                    }
                    acc.unwrap_or_else(|| Jet::zero(&self.space, a.order().min(vi.order().saturating_sub(1))))
                })
                .collect(),
        )
    }

    /// Chart components of a tangent field (its ambient components at the
    /// unsolved coordinates).
    pub fn chart_components(&self, a: &JetVector) -> Vec<Jet> {
        (0..self.nvars()).map(|c| a.0[self.ambient_index(c)].clone()).collect()
    }
}

/// A 2-form on `M` in chart components, `d[a][b]` for chart variables.
#[derive(Debug, Clone)]
pub struct TwoForm {
    pub comps: Vec<Vec<Jet>>,
}

impl TwoForm {
    /// Evaluate on two tangent fields.
    pub fn eval(&self, cp: &ChartPoint, p: &JetVector, q: &JetVector) -> Jet {
        let m = self.comps.len();
        let pc = cp.chart_components(p);
        let qc = cp.chart_components(q);
        let mut acc: Option<Jet> = None;
        for a in 0..m {
            for b in (a + 1)..m {
                let w = &(&pc[a] * &qc[b]) - &(&pc[b] * &qc[a]);
                let term = &self.comps[a][b] * &w;
                acc = Some(match acc {
                    None => term,
                    Some(s) => &s + &term,
                });
            }
        }
        acc.expect("chart has at least two variables")
    }
}

impl ChartPoint {
    /// Pull back an ambient covector field to chart components
    /// `c_b = α(∂x/∂u_b)`.
    pub fn pullback(&self, alpha: &JetVector) -> Vec<Jet> {
        (0..self.nvars())
            .map(|b| {
                let lead = &alpha.0[self.ambient_index(b)];
                let tail = &alpha.0[self.solved_index] * &self.chart[self.solved_index].partial(b);
                lead + &tail
            })
            .collect()
    }

    /// Exterior derivative of the 1-form `α|_{TM}` given by an ambient
    /// covector field: `dα_{ab} = ∂_a c_b − ∂_b c_a`.
    pub fn exterior_derivative(&self, alpha: &JetVector) -> TwoForm {
        let c = self.pullback(alpha);
        let m = self.nvars();
        let dc: Vec<Vec<Jet>> = c.iter().map(|cb| (0..m).map(|a| cb.partial(a)).collect()).collect();
        let order = dc[0][0].order();
        let comps = (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| if a == b { Jet::zero(&self.space, order) } else { &dc[b][a] - &dc[a][b] })
                    .collect()
            })
            .collect();
        TwoForm { comps }
    }

    /// Lie bracket of tangent fields, `[A,B] = D_A B − D_B A`.
    pub fn bracket(&self, a: &JetVector, b: &JetVector) -> JetVector {
        &self.along_vec(a, b) - &self.along_vec(b, a)
    }
}

/// Build a graph chart solving the coordinate with the largest |∂F|.
pub fn make_chart(q: &Quadric, x0: &AmbientVector, order: usize) -> Result<ChartPoint, SurfaceError> {
    let g = q.gradient(&x0.coords);
    let gnorm = dot(&g, &g).sqrt();
    if gnorm <= GRADIENT_THRESHOLD {
        return Err(SurfaceError::DegeneratePoint(gnorm));
    }
    let solved = g
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    make_chart_with(q, x0, order, solved)
}

/// Build a graph chart solving a prescribed coordinate.
pub fn make_chart_with(q: &Quadric, x0: &AmbientVector, order: usize, solved: usize) -> Result<ChartPoint, SurfaceError> {
    let d = q.dim();
    if x0.dim() != d {
        return Err(SurfaceError::Shape(format!("point has dimension {}, expected {}", x0.dim(), d)));
    }
    let space = JetSpace::shared(d - 1, order);
    let mut free = Vec::with_capacity(d - 1);
    for i in 0..d {
        if i != solved {
            let c = if i < solved { i } else { i - 1 };
            free.push(Jet::variable(&space, order, c, x0.coords[i]));
        }
    }
    let y = implicit_solve(|coords| q.eval_jet(coords), &free, solved, x0.coords[solved])?;
    let mut chart = free;
    chart.insert(solved, y);
    let base = AmbientVector { coords: chart.iter().map(Jet::value).collect(), n: q.n };
    Ok(ChartPoint { base, chart, solved_index: solved, space, order })
}

/// The splitting `TK|_M = H ⊕ span{J_s N} ⊕ ℝN` as smooth jet fields.
#[derive(Debug, Clone)]
pub struct SplitFrame {
    pub normal: JetVector,
    pub jn: [JetVector; 3],
    /// `G`-orthonormal, `J`-adapted: blocks `(v, J_1 v, J_2 v, J_3 v)`.
    pub horizontal: Vec<JetVector>,
    /// Ambient basis indices seeding each quaternionic block.
    pub seeds: Vec<usize>,
    /// Whether the normal is `-grad F / |grad F|`.
    pub flipped: bool,
}

impl SplitFrame {
    pub fn flip(&mut self) {
        self.normal = -&self.normal;
        for v in self.jn.iter_mut() {
            *v = -&*v;
        }
        self.flipped = !self.flipped;
    }

    /// Tangent basis `[J_1 N, J_2 N, J_3 N, e_1, ..., e_4n]`.
    pub fn tangent_basis(&self) -> Vec<JetVector> {
        let mut t: Vec<JetVector> = self.jn.to_vec();
        t.extend(self.horizontal.iter().cloned());
        t
    }

    /// Max entry of `Gram(N, J_s N, e_a) - I` at the base point.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut all = vec![self.normal.value()];
        all.extend(self.jn.iter().map(JetVector::value));
        all.extend(self.horizontal.iter().map(JetVector::value));
        let mut worst = 0.0f64;
        for i in 0..all.len() {
            for j in 0..all.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&all[i], &all[j]) - target).abs());
            }
        }
        worst
    }

    /// Residual of `J_s e_a` after projecting onto `span{e_b}`, together
    /// with `max |G(J_s e_a, N)|`.
    pub fn invariance_residual(&self) -> f64 {
        let e: Vec<Vec<f64>> = self.horizontal.iter().map(JetVector::value).collect();
        let nv = self.normal.value();
        let mut worst = 0.0f64;
        for s in 1..=3 {
            for ea in &e {
                let je = apply_j_slice(s, ea);
                let mut rest = je.clone();
                for eb in &e {
                    let k = dot(&je, eb);
                    rest.iter_mut().zip(eb).for_each(|(r, x)| *r -= k * x);
                }
                worst = worst.max(dot(&rest, &rest).sqrt()).max(dot(&je, &nv).abs());
            }
        }
        worst
    }
}

fn unit_normal(q: &Quadric, cp: &ChartPoint) -> Result<JetVector, SurfaceError> {
    let grad = q.gradient_jet(&cp.chart);
    let inv = grad.dot(&grad).sqrt()?.recip()?;
    Ok(grad.scale(&inv))
}

/// Build the split frame; horizontal seeds are chosen by largest projected
/// pivot at the base point.
pub fn split_frame(q: &Quadric, cp: &ChartPoint) -> Result<SplitFrame, SurfaceError> {
    split_frame_with(q, cp, None)
}

/// As [`split_frame`], optionally reusing the seed indices of another frame
/// so the fields agree on overlapping charts.
pub fn split_frame_with(q: &Quadric, cp: &ChartPoint, seeds: Option<&[usize]>) -> Result<SplitFrame, SurfaceError> {
    let d = q.dim();
    let normal = unit_normal(q, cp)?;
    let jn = [normal.apply_j(1), normal.apply_j(2), normal.apply_j(3)];
    let order = normal.order();
    let space = cp.space().clone();

    let project = |i: usize, frame: &[JetVector]| -> JetVector {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let mut v = JetVector::constant(&space, order, &e);
        let k = normal.0[i].clone();
        v = v.axpy(&(-&k), &normal);
        for w in jn.iter().chain(frame.iter()) {
            let k = w.0[i].clone();
            v = v.axpy(&(-&k), w);
        }
        v
    };

    let mut horizontal: Vec<JetVector> = Vec::with_capacity(4 * q.n);
    let mut used = Vec::with_capacity(q.n);
    for block in 0..q.n {
        let (seed, w) = match seeds {
            Some(s) => (s[block], project(s[block], &horizontal)),
            None => (0..d)
                .filter(|i| !used.contains(i))
                .map(|i| (i, project(i, &horizontal)))
                .fold(None::<(usize, JetVector)>, |best, cand| match best {
                    Some(b) if b.1.norm_value() >= cand.1.norm_value() => Some(b),
                    _ => Some(cand),
                })
                .unwrap(),
        };
        let pivot = w.norm_value();
        if pivot < PIVOT_THRESHOLD {
            return Err(SurfaceError::GramSchmidt(pivot));
        }
        let inv = w.dot(&w).sqrt()?.recip()?;
        let e = w.scale(&inv);
        let (j1, j2, j3) = (e.apply_j(1), e.apply_j(2), e.apply_j(3));
        horizontal.extend([e, j1, j2, j3]);
        used.push(seed);
    }
    Ok(SplitFrame { normal, jn, horizontal, seeds: used, flipped: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn catalog_coefficients() {
        let s = catalog("sphere", 1).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(s.a_entry(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(s.b, vec![0.0; 8]);
        assert_eq!(s.c, -1.0);

        let h = catalog("heisenberg", 1).unwrap();
        let diag: Vec<f64> = (0..8).map(|i| h.a_entry(i, i)).collect();
        assert_eq!(diag, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.b, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.c, 0.0);

        let e = catalog("ellipsoid", 1).unwrap();
        let diag: Vec<f64> = (0..8).map(|i| e.a_entry(i, i)).collect();
        assert_eq!(diag, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(e.c, -1.0);

        assert!(matches!(catalog("torus", 1), Err(SurfaceError::UnknownSurface(_))));
        assert!(matches!(catalog("sphere", 0), Err(SurfaceError::BadDimension(0))));
    }

    #[test]
    fn rejects_asymmetric() {
        let mut a = vec![0.0; 64];
        a[1] = 1.0;
        assert!(matches!(Quadric::new("bad", 1, a, vec![0.0; 8], 0.0), Err(SurfaceError::NotSymmetric(_))));
    }

    #[test]
    fn samples_lie_on_surface() {
        for name in CATALOG {
            let q = catalog(name, 1).unwrap();
            let pts = sample_points(&q, 20, 3).unwrap();
            assert_eq!(pts.len(), 20);
            for p in &pts {
                assert!(q.value(&p.coords).abs() < 1e-12, "{name}");
            }
            assert_eq!(pts, sample_points(&q, 20, 3).unwrap());
        }
    }

    #[test]
    fn sampler_exhausts_on_empty_quadric() {
        // |x|^2 = -1 has no real points
        let mut a = vec![0.0; 64];
        (0..8).for_each(|i| a[i * 8 + i] = 1.0);
        let q = Quadric::new("empty", 1, a, vec![0.0; 8], 1.0).unwrap();
        assert!(matches!(sample_points(&q, 3, 1), Err(SurfaceError::SamplerExhausted(30))));
    }

    #[test]
    fn sphere_chart_at_pole() {
        let q = catalog("sphere", 1).unwrap();
        let x0 = AmbientVector::basis(1, 0);
        let cp = make_chart(&q, &x0, 3).unwrap();
        assert_eq!(cp.solved_index, 0);
        assert_eq!(cp.base, x0);
        let fr = split_frame(&q, &cp).unwrap();
        let n = fr.normal.value();
        assert_abs_diff_eq!(n[0], 1.0, epsilon = 1e-15);
        for e in &fr.horizontal {
            let v = e.value();
            assert!(v[..4].iter().all(|x| x.abs() < 1e-14));
        }
        assert!(fr.orthonormality_residual() < 1e-14);
    }

    #[test]
    fn chart_residual_and_rank_on_ellipsoid() {
        let q = catalog("ellipsoid", 1).unwrap();
        let x0 = &sample_points(&q, 1, 11).unwrap()[0];
        let cp = make_chart(&q, x0, 4).unwrap();
        let f = q.eval_jet(&cp.chart);
        assert!(f.max_abs() < 1e-12);
        // linear parts: identity on the unsolved coordinates => rank 7
        let mut m = nalgebra::DMatrix::<f64>::zeros(8, 7);
        for (i, x) in cp.chart.iter().enumerate() {
            let g = x.gradient();
            for c in 0..7 {
                m[(i, c)] = g[c];
            }
        }
        assert_eq!(m.rank(1e-10), 7);
    }

    #[test]
    fn horizontal_dimension_and_invariance() {
        for name in CATALOG {
            let q = catalog(name, 1).unwrap();
            for p in sample_points(&q, 20, 5).unwrap() {
                let cp = make_chart(&q, &p, 2).unwrap();
                let fr = split_frame(&q, &cp).unwrap();
                assert_eq!(fr.horizontal.len(), 4);
                assert!(fr.orthonormality_residual() < 1e-10, "{name}");
                assert!(fr.invariance_residual() < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn exterior_derivative_matches_bracket_formula() {
        let q = catalog("ellipsoid", 1).unwrap();
        let x0 = &sample_points(&q, 1, 2).unwrap()[0];
        let cp = make_chart(&q, x0, 3).unwrap();
        let fr = split_frame(&q, &cp).unwrap();
        // a non-closed 1-form: G(J_1 N, .)
        let alpha = &fr.jn[0];
        let d = cp.exterior_derivative(alpha);
        let t = fr.tangent_basis();
        for (i, x) in t.iter().enumerate() {
            for y in &t[i + 1..] {
                let lhs = d.eval(&cp, x, y).value();
                let rhs = cp.along(x, &alpha.dot(y)).value() - cp.along(y, &alpha.dot(x)).value()
                    - alpha.dot(&cp.bracket(x, y)).value();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn spec_file_roundtrip() {
        let text = r#"
name = "shifted"
n = 1
A = [1,0,0,0,0,0,0,0, 0,1,0,0,0,0,0,0, 0,0,1,0,0,0,0,0, 0,0,0,1,0,0,0,0,
     0,0,0,0,1,0,0,0, 0,0,0,0,0,1,0,0, 0,0,0,0,0,0,1,0, 0,0,0,0,0,0,0,1]
b = [0,0,0,0,0,0,0,0]
c = -4.0
"#;
        let q = parse_surface_spec(text).unwrap();
        assert_eq!(q.name, "shifted");
        assert_eq!(q.kind, SurfaceKind::General);
        assert!(parse_surface_spec("name = 3").is_err());
        let bad = text.replace("A = [1,0", "A = [1,5");
        assert!(matches!(parse_surface_spec(&bad), Err(SurfaceError::NotSymmetric(_))));
    }
}
