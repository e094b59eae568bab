use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::basin::{wrap_unit, BasinBox};
use super::DynamicalSystem;
use crate::splitting::Splitting;

/// Cat map `(x, y) ↦ (2x + y, x + y) mod 1` crossed with `z ↦ c·z`.
#[derive(Debug, Clone)]
pub struct FatCat {
    pub c: f64,
    basin: BasinBox,
}

/// Golden ratio.
pub const PHI: f64 = 1.618_033_988_749_895;

impl FatCat {
    pub fn new(c: f64) -> Self {
        assert!(c > 0.0 && c < 1.0);
        FatCat {
            c,
            basin: BasinBox::new(
                vec![0.0, 0.0, -0.5],
                vec![1.0, 1.0, 0.5],
                vec![true, true, false],
            ),
        }
    }

    /// Expanding eigenvalue `φ² = (3 + √5)/2`.
    pub fn lambda_max() -> f64 {
        PHI * PHI
    }

    /// Unit expanding eigenvector of the torus factor, embedded in ℝ³.
    pub fn unstable_vector() -> DVector<f64> {
        let n = (PHI * PHI + 1.0).sqrt();
        DVector::from_vec(vec![PHI / n, 1.0 / n, 0.0])
    }

    /// Unit contracting eigenvector of the torus factor, embedded in ℝ³.
    pub fn stable_vector() -> DVector<f64> {
        let n = (PHI * PHI + 1.0).sqrt();
        DVector::from_vec(vec![-1.0 / n, PHI / n, 0.0])
    }

    /// Number of points of period dividing `n`: `|det(Aⁿ − I)| = λⁿ + λ⁻ⁿ − 2`.
    pub fn periodic_count(n: u32) -> u64 {
        let l = Self::lambda_max();
        (l.powi(n as i32) + l.powi(-(n as i32)) - 2.0).round() as u64
    }
}

impl Default for FatCat {
    fn default() -> Self {
        FatCat::new(0.2)
    }
}

impl DynamicalSystem for FatCat {
    fn name(&self) -> &str {
        "fat-cat"
    }

    fn dim(&self) -> usize {
        3
    }

    fn unstable_dim(&self) -> usize {
        1
    }

    fn basin(&self) -> &BasinBox {
        &self.basin
    }

    fn map_into(&self, p: &[f64], out: &mut [f64]) {
        out[0] = wrap_unit(2.0 * p[0] + p[1]);
        out[1] = wrap_unit(p[0] + p[1]);
        out[2] = self.c * p[2];
    }

    fn deriv(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, self.c])
    }

    fn known_inverse(&self, y: &[f64]) -> Option<DVector<f64>> {
        Some(DVector::from_vec(vec![
            wrap_unit(y[0] - y[1]),
            wrap_unit(2.0 * y[1] - y[0]),
            y[2] / self.c,
        ]))
    }

    fn known_splitting(&self, _x: &[f64]) -> Option<Splitting> {
        let eu = DMatrix::from_columns(&[Self::unstable_vector()]);
        let ez = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let ecs = DMatrix::from_columns(&[Self::stable_vector(), ez]);
        Splitting::from_bases(&eu, &ecs).ok()
    }

    fn contraction_factor(&self) -> f64 {
        self.c
    }

    fn hyperbolicity_rate(&self) -> Option<f64> {
        let l = Self::lambda_max().ln();
        Some(l.min(-self.c.ln()) - 1e-6)
    }

    fn metadata(&self) -> serde_json::Value {
        let l = Self::lambda_max().ln();
        json!({
            "name": "fat-cat",
            "dim": 3,
            "unstable_dim": 1,
            "coordinates": ["x (periodic)", "y (periodic)", "z"],
            "c": self.c,
            "matrix": [[2, 1], [1, 1]],
            "basin": "T^2 x [-0.5,0.5]",
            "lyapunov_exponents": [
                {"value": l, "multiplicity": 1},
                {"value": -l, "multiplicity": 1},
                {"value": self.c.ln(), "multiplicity": 1},
            ],
            "unstable_jacobian": Self::lambda_max(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_data() {
        let a = FatCat::default().deriv(&[0.0; 3]);
        let u = FatCat::unstable_vector();
        let s = FatCat::stable_vector();
        assert!((&a * &u - &u * FatCat::lambda_max()).norm() < 1e-14);
        assert!((&a * &s - &s / FatCat::lambda_max()).norm() < 1e-14);
    }

    #[test]
    fn counts() {
        let want = [1, 5, 16, 45, 121, 320, 841, 2205];
        for (n, w) in (1..=8).zip(want) {
            let l = FatCat::lambda_max();
            let exact = (l.powi(n as i32) + l.powi(-(n as i32)) - 2.0).round() as u64;
            assert_eq!(FatCat::periodic_count(n), exact);
            // Lucas numbers minus 2.
            assert_eq!(exact, w);
        }
    }
}
