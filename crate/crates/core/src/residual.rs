//! Residual accumulation shared by every identity check.

use serde::{Deserialize, Serialize};

/// Running maximum of `|lhs − rhs|` together with the largest term seen,
/// used as the scale for relative tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub max: f64,
    pub scale: f64,
}

impl Default for Residual {
    fn default() -> Self {
        Self { max: 0.0, scale: 1.0 }
    }
}

impl Residual {
    pub fn push(&mut self, resid: f64, terms: &[f64]) {
        // NaN must poison the maximum rather than be ignored by f64::max
        if resid.is_nan() || self.max.is_nan() {
            self.max = f64::NAN;
        } else {
            self.max = self.max.max(resid.abs());
        }
        for t in terms {
            if t.is_finite() {
                self.scale = self.scale.max(t.abs());
            }
        }
    }

    pub fn merge(&mut self, other: &Residual) {
        self.push(other.max, &[other.scale]);
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max < tol * self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_floor_and_nan() {
        let mut r = Residual::default();
        r.push(1e-7, &[0.5]);
        assert_eq!(r.scale, 1.0);
        assert!(r.passes(1e-6));
        r.push(-2e-6, &[10.0]);
        assert_eq!(r.max, 2e-6);
        assert!(r.passes(1e-6));
        r.push(f64::NAN, &[]);
        assert!(!r.passes(1e-6));
        r.push(0.0, &[]);
        assert!(r.max.is_nan());
    }
}
