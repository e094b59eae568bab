use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::basin::BasinBox;
use super::DynamicalSystem;
use crate::splitting::Splitting;

/// Diagonal linear map `x ↦ diag(d)·x`. Axes with `|dᵢ| > 1` are unstable.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub diag: Vec<f64>,
    basin: BasinBox,
}

impl LinearSystem {
    pub fn new(diag: Vec<f64>) -> Self {
        assert!(diag.iter().all(|d| *d != 0.0));
        let n = diag.len();
        LinearSystem {
            diag,
            basin: BasinBox::cube(n, 1e150),
        }
    }

    fn unstable_axes(&self) -> Vec<usize> {
        (0..self.diag.len())
            .filter(|&i| self.diag[i].abs() > 1.0)
            .collect()
    }
}

impl DynamicalSystem for LinearSystem {
    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn unstable_dim(&self) -> usize {
        self.unstable_axes().len()
    }

    fn basin(&self) -> &BasinBox {
        &self.basin
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.diag[i] * x[i];
        }
    }

    fn deriv(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag))
    }

    fn known_inverse(&self, y: &[f64]) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            y.len(),
            y.iter().zip(&self.diag).map(|(v, d)| v / d),
        ))
    }

    fn known_splitting(&self, _x: &[f64]) -> Option<Splitting> {
        let d = self.dim();
        let u = self.unstable_axes();
        let axis = |i: usize| {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            v
        };
        let eu: Vec<DVector<f64>> = u.iter().map(|&i| axis(i)).collect();
        let ecs: Vec<DVector<f64>> = (0..d).filter(|i| !u.contains(i)).map(axis).collect();
        let eu = if eu.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(&eu)
        };
        let ecs = if ecs.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(&ecs)
        };
        Splitting::from_bases(&eu, &ecs).ok()
    }

    fn contraction_factor(&self) -> f64 {
        self.diag
            .iter()
            .map(|d| d.abs())
            .filter(|d| *d <= 1.0)
            .fold(0.0, f64::max)
    }

    fn hyperbolicity_rate(&self) -> Option<f64> {
        let mut rate = f64::INFINITY;
        for d in &self.diag {
            rate = rate.min(d.abs().ln().abs());
        }
        Some(rate)
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "name": "linear",
            "dim": self.dim(),
            "diag": self.diag,
            "lyapunov_exponents": self.diag.iter().map(|d| d.abs().ln()).collect::<Vec<_>>(),
        })
    }
}

/// The `k`-th iterate of another system, for additivity checks.
#[derive(Clone)]
pub struct Iterated {
    pub inner: Arc<dyn DynamicalSystem>,
    pub k: usize,
    name: String,
}

impl Iterated {
    pub fn new(inner: Arc<dyn DynamicalSystem>, k: usize) -> Self {
        assert!(k >= 1);
        let name = format!("{}^{}", inner.name(), k);
        Iterated { inner, k, name }
    }
}

impl DynamicalSystem for Iterated {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn unstable_dim(&self) -> usize {
        self.inner.unstable_dim()
    }

    fn basin(&self) -> &BasinBox {
        self.inner.basin()
    }

    fn seed_box(&self) -> &BasinBox {
        self.inner.seed_box()
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let mut cur = x.to_vec();
        for _ in 0..self.k {
            self.inner.map_into(&cur, out);
            cur.copy_from_slice(out);
        }
    }

    fn deriv(&self, x: &[f64]) -> DMatrix<f64> {
        self.map_and_deriv(x).1
    }

    fn map_and_deriv(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut cur = DVector::from_column_slice(x);
        let mut acc = DMatrix::identity(d, d);
        for _ in 0..self.k {
            let (next, df) = self.inner.map_and_deriv(cur.as_slice());
            acc = df * acc;
            cur = next;
        }
        (cur, acc)
    }

    fn known_inverse(&self, y: &[f64]) -> Option<DVector<f64>> {
        let mut cur = DVector::from_column_slice(y);
        for _ in 0..self.k {
            cur = self.inner.known_inverse(cur.as_slice())?;
        }
        Some(cur)
    }

    fn known_splitting(&self, x: &[f64]) -> Option<Splitting> {
        self.inner.known_splitting(x)
    }

    fn contraction_factor(&self) -> f64 {
        self.inner.contraction_factor().powi(self.k as i32)
    }

    fn hyperbolicity_rate(&self) -> Option<f64> {
        self.inner.hyperbolicity_rate().map(|r| r * self.k as f64)
    }

    fn metadata(&self) -> serde_json::Value {
        json!({ "iterate_of": self.inner.metadata(), "k": self.k })
    }
}
