//! Quaternions and the flat hyper-Kähler space ℍ^{n+1} ≅ ℝ^{4n+4}.
//!
//! Coordinates are grouped in blocks of four, `(q_1, ..., q_n, p)`, each
//! block holding the components of one quaternion over `1, i, j, k`. The
//! complex structures `J_1, J_2, J_3` act by left multiplication of every
//! block by `i, j, k`, which gives `J_1 J_2 = J_3` with the Hamilton product.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HkError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("complex structure index {0} outside 1..=3")]
    BadIndex(usize),
    #[error("ambient dimension {0} is not 4(n+1) for n >= 1")]
    BadAmbientDimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ONE: Self = Self::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Self = Self::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Self = Self::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Self = Self::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sqr(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }
}

/// Hamilton product.
pub fn quat_mul(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        quat_mul(self, rhs)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, r: Quaternion) -> Quaternion {
        Quaternion::new(self.w + r.w, self.x + r.x, self.y + r.y, self.z + r.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, r: Quaternion) -> Quaternion {
        Quaternion::new(self.w - r.w, self.x - r.x, self.y - r.y, self.z - r.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Which side the imaginary units multiply from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    LeftMultiplication,
}

/// `(source offset, sign)` for each output component of left multiplication
/// by `i`, `j`, `k` on one quaternion block.
const LEFT_TABLE: [[(usize, f64); 4]; 3] = [
    [(1, -1.0), (0, 1.0), (3, -1.0), (2, 1.0)],
    [(2, -1.0), (3, 1.0), (0, 1.0), (1, -1.0)],
    [(3, -1.0), (2, -1.0), (1, 1.0), (0, 1.0)],
];

/// Apply `J_s` (s in 1..=3) to any slice of components whose length is a
/// multiple of four. Works for plain reals and for jets alike.
pub fn apply_j_slice<T>(s: usize, v: &[T]) -> Vec<T>
where
    T: Clone + Neg<Output = T>,
{
    assert!((1..=3).contains(&s), "J index {s} outside 1..=3");
    assert_eq!(v.len() % 4, 0);
    let table = &LEFT_TABLE[s - 1];
    let mut out = Vec::with_capacity(v.len());
    for block in v.chunks(4) {
        for &(src, sign) in table {
            let c = block[src].clone();
            out.push(if sign < 0.0 { -c } else { c });
        }
    }
    out
}

/// A point or tangent vector of ℍ^{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientVector {
    pub coords: Vec<f64>,
    pub n: usize,
}

impl AmbientVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, HkError> {
        let d = coords.len();
        if d < 8 || d % 4 != 0 {
            return Err(HkError::BadAmbientDimension(d));
        }
        Ok(Self { n: d / 4 - 1, coords })
    }

    pub fn zeros(n: usize) -> Self {
        Self { coords: vec![0.0; 4 * n + 4], n }
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coords[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The quaternionic view `(q_1, ..., q_n, p)`.
    pub fn quaternions(&self) -> Vec<Quaternion> {
        self.coords.chunks(4).map(Quaternion::from_slice).collect()
    }

    pub fn from_quaternions(qs: &[Quaternion]) -> Result<Self, HkError> {
        Self::new(qs.iter().flat_map(|q| q.to_array()).collect())
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// The flat hyper-Kähler structure of ℍ^{n+1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HkStructure {
    pub n: usize,
    pub convention: Convention,
}

impl HkStructure {
    pub fn new(n: usize) -> Self {
        Self { n, convention: Convention::LeftMultiplication }
    }

    pub fn ambient_dim(&self) -> usize {
        4 * self.n + 4
    }

    pub fn apply_j(&self, s: usize, v: &AmbientVector) -> Result<AmbientVector, HkError> {
        apply_j(s, v)
    }

    pub fn metric(&self, u: &AmbientVector, v: &AmbientVector) -> Result<f64, HkError> {
        metric_g(u, v)
    }
}

/// `J_s v`, left quaternionic multiplication of every block by i, j or k.
pub fn apply_j(s: usize, v: &AmbientVector) -> Result<AmbientVector, HkError> {
    if !(1..=3).contains(&s) {
        return Err(HkError::BadIndex(s));
    }
    Ok(AmbientVector { coords: apply_j_slice(s, &v.coords), n: v.n })
}

/// The flat metric `G`.
pub fn metric_g(u: &AmbientVector, v: &AmbientVector) -> Result<f64, HkError> {
    if u.dim() != v.dim() {
        return Err(HkError::DimensionMismatch(u.dim(), v.dim()));
    }
    Ok(dot(&u.coords, &v.coords))
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(v: [f64; 4]) -> Quaternion {
        Quaternion::new(v[0], v[1], v[2], v[3])
    }

    #[test]
    fn unit_relations() {
        assert_eq!(Quaternion::I * Quaternion::J, Quaternion::K);
        assert_eq!(Quaternion::J * Quaternion::K, Quaternion::I);
        assert_eq!(Quaternion::K * Quaternion::I, Quaternion::J);
        for u in [Quaternion::I, Quaternion::J, Quaternion::K] {
            assert_eq!(u * u, -Quaternion::ONE);
        }
        let a = q([0.3, -1.0, 2.0, 0.5]);
        assert_eq!(Quaternion::ONE * a, a);
        let lhs = q([1.0, 1.0, 0.0, 0.0]) * q([1.0, 0.0, 1.0, 0.0]);
        assert_eq!(lhs, q([1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn j1_moves_real_to_i() {
        let e0 = AmbientVector::basis(1, 0);
        let out = apply_j(1, &e0).unwrap();
        assert_eq!(out, AmbientVector::basis(1, 1));
    }

    #[test]
    fn j_matches_left_quaternion_product() {
        let v = AmbientVector::new((0..8).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
        for (s, unit) in [(1, Quaternion::I), (2, Quaternion::J), (3, Quaternion::K)] {
            let expect: Vec<Quaternion> = v.quaternions().into_iter().map(|x| unit * x).collect();
            assert_eq!(apply_j(s, &v).unwrap().quaternions(), expect);
        }
    }

    #[test]
    fn composition_table_on_basis() {
        for i in 0..8 {
            let e = AmbientVector::basis(1, i);
            for (a, b, c) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
                let lhs = apply_j(a, &apply_j(b, &e).unwrap()).unwrap();
                assert_eq!(lhs, apply_j(c, &e).unwrap());
                let rev = apply_j(b, &apply_j(a, &e).unwrap()).unwrap();
                let neg: Vec<f64> = apply_j(c, &e).unwrap().coords.iter().map(|x| -x).collect();
                assert_eq!(rev.coords, neg);
            }
        }
    }

    #[test]
    fn metric_basics() {
        let e0 = AmbientVector::basis(1, 0);
        let e1 = AmbientVector::basis(1, 1);
        assert_eq!(metric_g(&e0, &e0).unwrap(), 1.0);
        assert_eq!(metric_g(&e0, &e1).unwrap(), 0.0);
        let short = AmbientVector::zeros(2);
        assert!(matches!(metric_g(&e0, &short), Err(HkError::DimensionMismatch(8, 12))));
        assert!(matches!(apply_j(4, &e0), Err(HkError::BadIndex(4))));
        assert!(AmbientVector::new(vec![0.0; 6]).is_err());
    }

    fn vec8() -> impl Strategy<Value = AmbientVector> {
        prop::collection::vec(-3.0f64..3.0, 8).prop_map(|c| AmbientVector::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn norm_multiplicative(a in prop::array::uniform4(-5.0f64..5.0), b in prop::array::uniform4(-5.0f64..5.0)) {
            let (a, b) = (q(a), q(b));
            prop_assert!(((a * b).norm() - a.norm() * b.norm()).abs() < 1e-12 * (1.0 + a.norm() * b.norm()));
        }

        #[test]
        fn associative(a in prop::array::uniform4(-2.0f64..2.0), b in prop::array::uniform4(-2.0f64..2.0), c in prop::array::uniform4(-2.0f64..2.0)) {
            let (a, b, c) = (q(a), q(b), q(c));
            let d = (a * b) * c - a * (b * c);
            prop_assert!(d.norm() < 1e-12);
        }

        #[test]
        fn j_relations_on_random(v in vec8()) {
            let j1j2 = apply_j(1, &apply_j(2, &v).unwrap()).unwrap();
            let j3 = apply_j(3, &v).unwrap();
            prop_assert_eq!(j1j2, j3);
            let jj = apply_j(2, &apply_j(2, &v).unwrap()).unwrap();
            prop_assert!(jj.coords.iter().zip(&v.coords).all(|(a, b)| *a == -*b));
        }

        #[test]
        fn orthogonal_and_skew(u in vec8(), v in vec8()) {
            let scale = 1.0 + u.norm() * v.norm();
            for s in 1..=3 {
                let ju = apply_j(s, &u).unwrap();
                let jv = apply_j(s, &v).unwrap();
                let orth = metric_g(&ju, &jv).unwrap() - metric_g(&u, &v).unwrap();
                prop_assert!(orth.abs() < 1e-14 * scale);
                let skew = metric_g(&ju, &v).unwrap() + metric_g(&u, &jv).unwrap();
                prop_assert!(skew.abs() < 1e-14 * scale);
                prop_assert!(metric_g(&v, &jv).unwrap().abs() < 1e-14 * scale);
            }
        }
    }
}
