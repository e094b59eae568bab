use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Axis-aligned box in ℝᵈ. Periodic coordinates live in `[0, 1)` and are
/// compared with the wrapped metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl BasinBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, periodic: Vec<bool>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert_eq!(lo.len(), periodic.len());
        BasinBox { lo, hi, periodic }
    }

    /// Box `[-r, r]ᵈ` with no periodic coordinates.
    pub fn cube(d: usize, r: f64) -> Self {
        BasinBox::new(vec![-r; d], vec![r; d], vec![false; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            v.is_finite() && (self.periodic[i] || (v >= self.lo[i] && v <= self.hi[i]))
        })
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let w = if self.periodic[i] {
                    0.5
                } else {
                    self.hi[i] - self.lo[i]
                };
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Reduce periodic coordinates into `[0, 1)`.
    pub fn wrap(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            if self.periodic[i] {
                *v = wrap_unit(*v);
            }
        }
    }

    /// `b - a` with periodic components taken in `[-1/2, 1/2)`.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            a.len(),
            (0..a.len()).map(|i| {
                let d = b[i] - a[i];
                if self.periodic[i] {
                    centered(d)
                } else {
                    d
                }
            }),
        )
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            let mut d = b[i] - a[i];
            if self.periodic[i] {
                d = centered(d);
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// `x + v`, wrapped.
    pub fn translate(&self, x: &[f64], v: &[f64]) -> DVector<f64> {
        let mut out: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
        self.wrap(&mut out);
        DVector::from_vec(out)
    }

    /// Map a point of the unit cube `[0,1)ᵈ` onto the box.
    pub fn from_unit(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            (0..u.len()).map(|i| self.lo[i] + u[i] * (self.hi[i] - self.lo[i])),
        )
    }

    /// Index of the cell containing `x` in a regular grid with `per_axis`
    /// cells per coordinate.
    pub fn cell_index(&self, x: &[f64], per_axis: usize) -> usize {
        let mut idx = 0;
        for i in 0..x.len() {
            let t = ((x[i] - self.lo[i]) / (self.hi[i] - self.lo[i])).clamp(0.0, 1.0 - 1e-15);
            let c = ((t * per_axis as f64) as usize).min(per_axis - 1);
            idx = idx * per_axis + c;
        }
        idx
    }
}

#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let w = v - v.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

#[inline]
pub fn centered(d: f64) -> f64 {
    d - (d + 0.5).floor()
}
