//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A [`Jet`] stores the Taylor coefficients of a smooth function of `m`
//! chart variables around the chart origin, up to a total degree called the
//! jet's *order*. Coefficients are indexed by multi-indices in graded
//! lexicographic order, so truncating to a lower order is a prefix slice.
//!
//! Every jet carries its own valid order. Products take the minimum order of
//! their factors and differentiation lowers the order by one, so a jet never
//! holds a coefficient that truncation has corrupted. Reading the constant
//! term of a jet whose order has been exhausted is reported as
//! [`JetError::InsufficientOrder`] by the geometric layers above.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::flat_hk;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("jet shape mismatch: ({0} vars, order {1}) vs ({2} vars, order {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("division by a jet with zero constant term")]
    ZeroDivisor,
    #[error("non-positive constant term {0} for sqrt/pow")]
    NonPositiveBase(f64),
    #[error("insufficient jet order: need {needed}, have {have}")]
    InsufficientOrder { needed: usize, have: usize },
    #[error("Newton iteration did not converge in {0} iterations (residual {1:e})")]
    NewtonDiverged(usize, f64),
    #[error("implicit derivative {0:e} below degeneracy threshold")]
    DegenerateDerivative(f64),
    #[error("chart residual {0:e} above tolerance")]
    ChartResidual(f64),
}

/// Newton tolerance on |F| for the constant term of an implicit solve.
pub const NEWTON_TOL: f64 = 1e-13;
/// Iteration cap for the scalar Newton stage.
pub const NEWTON_MAX_ITER: usize = 50;
/// |dF/dy| below this aborts the implicit solve.
pub const IMPLICIT_DEGENERACY: f64 = 1e-10;

/// Monomial tables for jets in `nvars` variables up to `max_order`.
pub struct JetSpace {
    nvars: usize,
    max_order: usize,
    exps: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// `dims[d]` = number of monomials of total degree `<= d`.
    dims: Vec<usize>,
    /// `mul[i][j]` is the index of `exps[i] + exps[j]`, defined for
    /// `j < dims[max_order - degree[i]]`.
    mul: Vec<Vec<u32>>,
    /// Per variable: `(source, target, factor)` sorted by source.
    deriv: Vec<Vec<(u32, u32, f64)>>,
    index: HashMap<Vec<u8>, usize>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("nvars", &self.nvars)
            .field("max_order", &self.max_order)
            .field("len", &self.exps.len())
            .finish()
    }
}

impl JetSpace {
    pub fn new(nvars: usize, max_order: usize) -> Arc<Self> {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut degree = Vec::new();
        let mut dims = Vec::with_capacity(max_order + 1);
        for d in 0..=max_order {
            let mut layer = Vec::new();
            compositions(nvars, d, &mut vec![0u8; nvars], 0, &mut layer);
            // graded lex: within a degree, larger leading exponent first
            layer.sort_by(|a, b| b.cmp(a));
            for e in layer {
                exps.push(e);
                degree.push(d);
            }
            dims.push(exps.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();

        let mut mul = Vec::with_capacity(exps.len());
        for i in 0..exps.len() {
            let room = max_order - degree[i];
            let row: Vec<u32> = (0..dims[room])
                .map(|j| {
                    let sum: Vec<u8> = exps[i].iter().zip(&exps[j]).map(|(a, b)| a + b).collect();
                    index[&sum] as u32
                })
                .collect();
            mul.push(row);
        }

        let mut deriv = vec![Vec::new(); nvars];
        for (i, e) in exps.iter().enumerate() {
            for v in 0..nvars {
                if e[v] > 0 {
                    let mut lower = e.clone();
                    lower[v] -= 1;
                    deriv[v].push((i as u32, index[&lower] as u32, e[v] as f64));
                }
            }
        }

        Arc::new(Self { nvars, max_order, exps, degree, dims, mul, deriv, index })
    }

    /// Process-wide cached space for `(nvars, max_order)`.
    pub fn shared(nvars: usize, max_order: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("jet space cache poisoned");
        map.entry((nvars, max_order)).or_insert_with(|| Self::new(nvars, max_order)).clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of coefficients of a jet of the given order.
    pub fn len(&self, order: usize) -> usize {
        self.dims[order]
    }

    pub fn exponents(&self, idx: usize) -> &[u8] {
        &self.exps[idx]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }
}

fn compositions(nvars: usize, total: usize, cur: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == nvars {
        cur[pos] = total as u8;
        out.push(cur.clone());
        return;
    }
    if nvars == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in 0..=total {
        cur[pos] = k as u8;
        compositions(nvars, total - k, cur, pos + 1, out);
    }
}

/// Arithmetic selector for [`Jet::arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Mul,
    Div,
}

/// Smooth scalar functions that can be composed with a jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothFn {
    Sqrt,
    Pow(f64),
}

#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    order: usize,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(order {}, {:?})", self.order, &self.c)
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, order: usize, value: f64) -> Self {
        assert!(order <= space.max_order, "order {} exceeds space maximum {}", order, space.max_order);
        let mut c = vec![0.0; space.len(order)];
        c[0] = value;
        Self { space: space.clone(), order, c }
    }

    pub fn zero(space: &Arc<JetSpace>, order: usize) -> Self {
        Self::constant(space, order, 0.0)
    }

    /// The jet of `value + u_var`.
    pub fn variable(space: &Arc<JetSpace>, order: usize, var: usize, value: f64) -> Self {
        assert!(var < space.nvars);
        let mut j = Self::constant(space, order, value);
        if order >= 1 {
            let mut e = vec![0u8; space.nvars];
            e[var] = 1;
            j.c[space.index[&e]] = 1.0;
        }
        j
    }

    /// Build from raw coefficients in graded order.
    pub fn from_coeffs(space: &Arc<JetSpace>, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.len(order));
        Self { space: space.clone(), order, c: coeffs }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Taylor coefficient of the monomial with the given exponents, if the
    /// jet carries it.
    pub fn coeff(&self, exps: &[u8]) -> Option<f64> {
        let i = self.space.index_of(exps)?;
        self.c.get(i).copied()
    }

    /// First partial derivatives at the origin (needs order >= 1).
    pub fn gradient(&self) -> Vec<f64> {
        let m = self.space.nvars;
        (0..m)
            .map(|v| {
                let mut e = vec![0u8; m];
                e[v] = 1;
                self.coeff(&e).unwrap_or(f64::NAN)
            })
            .collect()
    }

    /// Second partial derivatives at the origin (needs order >= 2).
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let m = self.space.nvars;
        let mut h = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..m {
                let mut e = vec![0u8; m];
                e[a] += 1;
                e[b] += 1;
                let c = self.coeff(&e).unwrap_or(f64::NAN);
                h[a][b] = if a == b { 2.0 * c } else { c };
            }
        }
        h
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Self { space: self.space.clone(), order, c: self.c[..self.space.len(order)].to_vec() }
    }

    fn same_space(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
            || (self.space.nvars == other.space.nvars && self.space.max_order == other.space.max_order)
    }

    fn check_shape(&self, other: &Self) -> Result<(), JetError> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(JetError::ShapeMismatch(
                self.space.nvars,
                self.space.max_order,
                other.space.nvars,
                other.space.max_order,
            ))
        }
    }

    /// Checked binary arithmetic.
    pub fn arith(&self, other: &Self, op: ArithOp) -> Result<Self, JetError> {
        self.check_shape(other)?;
        match op {
            ArithOp::Add => Ok(self + other),
            ArithOp::Mul => Ok(self * other),
            ArithOp::Div => self.div(other),
        }
    }

    pub fn div(&self, other: &Self) -> Result<Self, JetError> {
        self.check_shape(other)?;
        Ok(self * &other.recip()?)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { space: self.space.clone(), order: self.order, c: self.c.iter().map(|x| x * k).collect() }
    }

    pub fn add_const(&self, k: f64) -> Self {
        let mut r = self.clone();
        r.c[0] += k;
        r
    }

    /// `self + k * other`, truncated to the lower order.
    pub fn axpy(&self, k: f64, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let len = self.space.len(order);
        let c = (0..len).map(|i| self.c[i] + k * other.c[i]).collect();
        Self { space: self.space.clone(), order, c }
    }

    /// Partial derivative with respect to chart variable `var`.
    ///
    /// The result has order one less than `self`. Differentiating an order-0
    /// jet yields an order-0 jet holding NaN, which flags exhaustion.
    pub fn partial(&self, var: usize) -> Self {
        if self.order == 0 {
            return Self { space: self.space.clone(), order: 0, c: vec![f64::NAN] };
        }
        let order = self.order - 1;
        let src_len = self.c.len();
        let mut c = vec![0.0; self.space.len(order)];
        for &(src, dst, k) in &self.space.deriv[var] {
            if (src as usize) >= src_len {
                break;
            }
            c[dst as usize] += k * self.c[src as usize];
        }
        Self { space: self.space.clone(), order, c }
    }

    /// Evaluate the Taylor polynomial at a chart offset.
    pub fn eval(&self, offset: &[f64]) -> f64 {
        assert_eq!(offset.len(), self.space.nvars);
        let mut acc = 0.0;
        for (i, c) in self.c.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let mut term = *c;
            for (v, &e) in self.space.exps[i].iter().enumerate() {
                if e > 0 {
                    term *= offset[v].powi(e as i32);
                }
            }
            acc += term;
        }
        acc
    }

    /// Compose with a univariate function given its Taylor coefficients
    /// `g_k = g^{(k)}(a0) / k!` at the constant term.
    fn compose(&self, taylor: &[f64]) -> Self {
        let mut nil = self.clone();
        nil.c[0] = 0.0;
        let mut acc = Self::constant(&self.space, self.order, taylor[self.order]);
        for k in (0..self.order).rev() {
            acc = &acc * &nil;
            acc.c[0] += taylor[k];
        }
        acc
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let a0 = self.c[0];
        if a0 == 0.0 || !a0.is_finite() {
            return Err(JetError::ZeroDivisor);
        }
        let inv = 1.0 / a0;
        let mut t = Vec::with_capacity(self.order + 1);
        let mut p = inv;
        for _ in 0..=self.order {
            t.push(p);
            p *= -inv;
        }
        Ok(self.compose(&t))
    }

    pub fn smooth(&self, func: SmoothFn) -> Result<Self, JetError> {
        match func {
            SmoothFn::Sqrt => self.powf(0.5),
            SmoothFn::Pow(r) => self.powf(r),
        }
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        self.powf(0.5)
    }

    /// `self^r` for real `r`; requires a positive constant term.
    pub fn powf(&self, r: f64) -> Result<Self, JetError> {
        let a0 = self.c[0];
        if !(a0 > 0.0) {
            return Err(JetError::NonPositiveBase(a0));
        }
        let mut t = Vec::with_capacity(self.order + 1);
        // binom(r, k) a0^(r-k)
        let mut binom = 1.0;
        let mut p = a0.powf(r);
        for k in 0..=self.order {
            t.push(binom * p);
            binom *= (r - k as f64) / (k as f64 + 1.0);
            p /= a0;
        }
        Ok(self.compose(&t))
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        debug_assert!(self.same_space(rhs), "jet shape mismatch");
        self.axpy(1.0, rhs)
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        debug_assert!(self.same_space(rhs), "jet shape mismatch");
        self.axpy(-1.0, rhs)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        assert!(self.same_space(rhs), "jet shape mismatch");
        let order = self.order.min(rhs.order);
        let sp = &self.space;
        let mut c = vec![0.0; sp.len(order)];
        let top = sp.len(order);
        for i in 0..top {
            let a = self.c[i];
            if a == 0.0 {
                continue;
            }
            let room = order - sp.degree[i];
            let row = &sp.mul[i];
            for (j, b) in rhs.c[..sp.dims[room]].iter().enumerate() {
                c[row[j] as usize] += a * b;
            }
        }
        Jet { space: sp.clone(), order, c }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        self.scale(k)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// An ambient vector whose components are jets over the chart.
#[derive(Clone, Debug)]
pub struct JetVector(pub Vec<Jet>);

impl JetVector {
    pub fn constant(space: &Arc<JetSpace>, order: usize, v: &[f64]) -> Self {
        Self(v.iter().map(|&x| Jet::constant(space, order, x)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn value(&self) -> Vec<f64> {
        self.0.iter().map(Jet::value).collect()
    }

    pub fn dot(&self, other: &Self) -> Jet {
        assert_eq!(self.dim(), other.dim());
        let mut acc = &self.0[0] * &other.0[0];
        for (a, b) in self.0.iter().zip(&other.0).skip(1) {
            acc = &acc + &(a * b);
        }
        acc
    }

    /// Dot product with a constant ambient vector.
    pub fn dot_const(&self, v: &[f64]) -> Jet {
        let mut acc = self.0[0].scale(v[0]);
        for (a, &k) in self.0.iter().zip(v).skip(1) {
            if k != 0.0 {
                acc = acc.axpy(k, a);
            }
        }
        acc
    }

    pub fn scale(&self, k: &Jet) -> Self {
        Self(self.0.iter().map(|x| x * k).collect())
    }

    pub fn scale_f(&self, k: f64) -> Self {
        Self(self.0.iter().map(|x| x.scale(k)).collect())
    }

    pub fn axpy(&self, k: &Jet, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + &(k * b)).collect())
    }

    pub fn axpy_f(&self, k: f64, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a.axpy(k, b)).collect())
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self(self.0.iter().map(|x| x.truncate(order)).collect())
    }

    /// Apply the ambient complex structure `J_s`.
    pub fn apply_j(&self, s: usize) -> Self {
        Self(flat_hk::apply_j_slice(s, &self.0))
    }

    pub fn norm_value(&self) -> f64 {
        self.value().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl<'a> Add<&'a JetVector> for &'a JetVector {
    type Output = JetVector;
    fn add(self, rhs: &JetVector) -> JetVector {
        JetVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl<'a> Sub<&'a JetVector> for &'a JetVector {
    type Output = JetVector;
    fn sub(self, rhs: &JetVector) -> JetVector {
        JetVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &JetVector {
    type Output = JetVector;
    fn neg(self) -> JetVector {
        self.scale_f(-1.0)
    }
}

/// Solve `F(x) = 0` for the coordinate `solved` as a jet of the chart
/// variables.
///
/// `free` holds the jets of the remaining ambient coordinates in ambient
/// order (the solved slot skipped). `builder` evaluates `F` on a full slice
/// of coordinate jets and must work over any [`JetSpace`]. The constant term
/// is found by Newton's method; higher coefficients by a chord iteration that
/// gains one order per step.
pub fn implicit_solve<F>(builder: F, free: &[Jet], solved: usize, initial_guess: f64) -> Result<Jet, JetError>
where
    F: Fn(&[Jet]) -> Jet,
{
    assert!(!free.is_empty());
    let space = free[0].space().clone();
    let order = free.iter().map(Jet::order).min().unwrap();

    // scalar Newton on a one-variable first-order space
    let line = JetSpace::new(1, 1);
    let assemble = |y: Jet, others: &dyn Fn(usize) -> Jet| -> Vec<Jet> {
        let mut coords = Vec::with_capacity(free.len() + 1);
        for i in 0..=free.len() {
            if i == solved {
                coords.push(y.clone());
            } else {
                coords.push(others(if i < solved { i } else { i - 1 }));
            }
        }
        coords
    };
    let mut y0 = initial_guess;
    let mut slope = 0.0;
    let mut converged = false;
    let mut last = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let yj = Jet::variable(&line, 1, 0, y0);
        let coords = assemble(yj, &|k| Jet::constant(&line, 1, free[k].value()));
        let fy = builder(&coords);
        let (val, der) = (fy.value(), fy.coeffs()[1]);
        last = val.abs();
        slope = der;
        if val.abs() <= NEWTON_TOL {
            converged = true;
            break;
        }
        if der.abs() < IMPLICIT_DEGENERACY {
            return Err(JetError::DegenerateDerivative(der));
        }
        y0 -= val / der;
    }
    if !converged {
        return Err(JetError::NewtonDiverged(NEWTON_MAX_ITER, last));
    }
    if slope.abs() < IMPLICIT_DEGENERACY {
        return Err(JetError::DegenerateDerivative(slope));
    }

    let mut y = Jet::constant(&space, order, y0);
    for _ in 0..=order {
        let coords = assemble(y.clone(), &|k| free[k].truncate(order));
        let r = builder(&coords);
        y = y.axpy(-1.0 / slope, &r);
    }
    let coords = assemble(y.clone(), &|k| free[k].truncate(order));
    let resid = builder(&coords).max_abs();
    if resid > 1e-12 {
        return Err(JetError::ChartResidual(resid));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rand_jet(space: &Arc<JetSpace>, order: usize, seed: &[f64]) -> Jet {
        let len = space.len(order);
        let c = (0..len).map(|i| seed[i % seed.len()] * (1.0 + i as f64).sin()).collect();
        Jet::from_coeffs(space, order, c)
    }

    #[test]
    fn table_sizes() {
        let sp = JetSpace::new(7, 4);
        assert_eq!(sp.len(4), 330);
        assert_eq!(sp.len(0), 1);
        assert_eq!(sp.len(1), 8);
    }

    #[test]
    fn square_of_t_at_three() {
        let sp = JetSpace::new(1, 2);
        let t = Jet::variable(&sp, 2, 0, 3.0);
        let sq = &t * &t;
        assert_eq!(sq.coeffs(), &[9.0, 6.0, 1.0]);
    }

    #[test]
    fn reciprocal_is_inverse() {
        let sp = JetSpace::new(3, 4);
        let a = rand_jet(&sp, 4, &[2.0, 0.3, -0.7, 1.1]);
        let one = &a * &a.recip().unwrap();
        assert_abs_diff_eq!(one.value(), 1.0, epsilon = 1e-14);
        for c in &one.coeffs()[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn add_is_coefficientwise() {
        let sp = JetSpace::new(2, 2);
        let a = Jet::from_coeffs(&sp, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Jet::from_coeffs(&sp, 2, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!((&a + &b).coeffs(), &[7.0; 6]);
    }

    #[test]
    fn zero_divisor_and_bad_base() {
        let sp = JetSpace::new(2, 2);
        let z = Jet::variable(&sp, 2, 0, 0.0);
        assert_eq!(z.recip().unwrap_err(), JetError::ZeroDivisor);
        assert!(matches!(z.sqrt(), Err(JetError::NonPositiveBase(_))));
        let other = JetSpace::new(3, 2);
        let w = Jet::constant(&other, 2, 1.0);
        assert!(matches!(z.arith(&w, ArithOp::Add), Err(JetError::ShapeMismatch(..))));
    }

    #[test]
    fn sqrt_and_cube_root() {
        let sp = JetSpace::new(1, 1);
        let a = Jet::from_coeffs(&sp, 1, vec![4.0, 1.0]);
        let r = a.smooth(SmoothFn::Sqrt).unwrap();
        assert_abs_diff_eq!(r.coeffs()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.coeffs()[1], 0.25, epsilon = 1e-15);
        let sp7 = JetSpace::new(7, 3);
        let eight = Jet::constant(&sp7, 3, 8.0);
        let c = eight.smooth(SmoothFn::Pow(1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(c.value(), 2.0, epsilon = 1e-15);
        assert!(c.coeffs()[1..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn partial_lowers_order() {
        let sp = JetSpace::new(2, 3);
        let x = Jet::variable(&sp, 3, 0, 1.0);
        let y = Jet::variable(&sp, 3, 1, 2.0);
        // p = x^2 y
        let p = &(&x * &x) * &y;
        let dx = p.partial(0);
        assert_eq!(dx.order(), 2);
        // d/dx (x^2 y) = 2 x y = 4 at (1,2)
        assert_abs_diff_eq!(dx.value(), 4.0, epsilon = 1e-14);
        let exhausted = Jet::constant(&sp, 0, 1.0).partial(0);
        assert!(exhausted.value().is_nan());
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        let sp = JetSpace::new(3, 2);
        let v: Vec<Jet> = (0..3).map(|i| Jet::variable(&sp, 2, i, 0.5 * i as f64)).collect();
        // q = 3 x0^2 + 2 x0 x1 - x2^2 + x1
        let q = &(&(&v[0] * &v[0]).scale(3.0) + &(&v[0] * &v[1]).scale(2.0)) - &(&v[2] * &v[2]);
        let q = &q + &v[1];
        let h = q.hessian();
        let expect = [[6.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -2.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert_abs_diff_eq!(h[a][b], expect[a][b], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn implicit_circle() {
        let sp = JetSpace::new(1, 2);
        let x = Jet::variable(&sp, 2, 0, 0.0);
        let y = implicit_solve(|c| (&(&c[0] * &c[0]) + &(&c[1] * &c[1])).add_const(-1.0), &[x], 1, 0.9).unwrap();
        assert_abs_diff_eq!(y.coeffs()[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(y.coeffs()[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(y.coeffs()[2], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn implicit_line() {
        let sp = JetSpace::new(1, 3);
        let x = Jet::variable(&sp, 3, 0, 0.0);
        let y = implicit_solve(|c| &c[1] - &c[0].scale(2.0), &[x], 1, 5.0).unwrap();
        assert_abs_diff_eq!(y.value(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(y.coeffs()[1], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn implicit_degenerate() {
        let sp = JetSpace::new(1, 2);
        let x = Jet::variable(&sp, 2, 0, 1.0);
        // F = x^2 + y^2 - 1 at (1, 0): dF/dy = 0
        let err = implicit_solve(|c| (&(&c[0] * &c[0]) + &(&c[1] * &c[1])).add_const(-1.0), &[x], 1, 0.0).unwrap_err();
        assert!(matches!(err, JetError::DegenerateDerivative(_)));
    }

    proptest! {
        #[test]
        fn distributive(s in prop::collection::vec(-2.0f64..2.0, 3..9)) {
            let sp = JetSpace::new(3, 3);
            let a = rand_jet(&sp, 3, &s);
            let b = rand_jet(&sp, 3, &s[1..]);
            let c = rand_jet(&sp, 2, &s[2..]);
            let lhs = &(&a + &b) * &c;
            let rhs = &(&a * &c) + &(&b * &c);
            for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn integer_pow_matches_product(s in prop::collection::vec(-1.0f64..1.0, 2..6), a0 in 0.5f64..3.0) {
            let sp = JetSpace::new(2, 4);
            let mut a = rand_jet(&sp, 4, &s);
            a = a.add_const(a0 - a.value());
            let sq = a.powf(2.0).unwrap();
            let prod = &a * &a;
            for (x, y) in sq.coeffs().iter().zip(prod.coeffs()) {
                prop_assert!((x - y).abs() < 1e-11 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn eval_matches_polynomial(x in -0.5f64..0.5, y in -0.5f64..0.5) {
            let sp = JetSpace::new(2, 3);
            let u = Jet::variable(&sp, 3, 0, 1.0);
            let v = Jet::variable(&sp, 3, 1, -2.0);
            let p = &(&u * &v) * &u;
            let exact = (1.0 + x) * (1.0 + x) * (-2.0 + y);
            prop_assert!((p.eval(&[x, y]) - exact).abs() < 1e-12);
        }
    }
}
