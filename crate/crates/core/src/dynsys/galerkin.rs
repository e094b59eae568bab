use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::basin::BasinBox;
use super::DynamicalSystem;

/// Time-`T` map of the sine-Galerkin truncation of `u_t = u_xx + λu − u³` on
/// `(0, π)` with Dirichlet conditions, `u = Σ_{k≤N} a_k sin kx`.
///
/// The cubic term is projected pseudo-spectrally on `M − 1` interior nodes
/// `x_m = mπ/M`; with `M ≥ 2N` and modes of `u³` up to `3N < 2M − N` the
/// discrete sine transform is exact, so the vector field is the true Galerkin
/// projection.
#[derive(Debug, Clone)]
pub struct GalerkinRd {
    pub modes: usize,
    pub lambda: f64,
    pub period: f64,
    pub dt: f64,
    nodes: usize,
    /// `sin(k x_m)` for `m = 1..M−1`, `k = 1..N`, row-major by node.
    table: Vec<f64>,
    basin: BasinBox,
    seeds: BasinBox,
}

impl GalerkinRd {
    pub fn new(modes: usize, lambda: f64, period: f64, dt: f64) -> Self {
        let nodes = (4 * modes).next_power_of_two();
        let mut table = Vec::with_capacity((nodes - 1) * modes);
        for m in 1..nodes {
            let x = m as f64 * PI / nodes as f64;
            for k in 1..=modes {
                table.push((k as f64 * x).sin());
            }
        }
        GalerkinRd {
            modes,
            lambda,
            period,
            dt,
            nodes,
            table,
            basin: BasinBox::cube(modes, 6.0),
            seeds: BasinBox::cube(modes, 0.5),
        }
    }

    fn steps(&self) -> usize {
        (self.period / self.dt).round() as usize
    }

    /// Values of `u` at the interior nodes.
    fn physical(&self, a: &[f64], u: &mut [f64]) {
        let n = self.modes;
        for (m, um) in u.iter_mut().enumerate() {
            let row = &self.table[m * n..(m + 1) * n];
            *um = row.iter().zip(a).map(|(s, c)| s * c).sum();
        }
    }

    /// Vector field `F(a)`; `u` is scratch of length `M − 1`.
    fn field(&self, a: &[f64], u: &mut [f64], out: &mut [f64]) {
        let n = self.modes;
        self.physical(a, u);
        let w = 2.0 / self.nodes as f64;
        for k in 0..n {
            let lin = (self.lambda - ((k + 1) * (k + 1)) as f64) * a[k];
            let mut cubic = 0.0;
            for (m, um) in u.iter().enumerate() {
                cubic += um * um * um * self.table[m * n + k];
            }
            out[k] = lin - w * cubic;
        }
    }

    /// Jacobian `DF(a)` given the node values `u` of `a`.
    fn field_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.modes;
        let w = 2.0 / self.nodes as f64;
        let mut j = DMatrix::zeros(n, n);
        for (m, um) in u.iter().enumerate() {
            let row = &self.table[m * n..(m + 1) * n];
            let c = 3.0 * w * um * um;
            for k in 0..n {
                let ck = c * row[k];
                for l in 0..n {
                    j[(k, l)] -= ck * row[l];
                }
            }
        }
        for k in 0..n {
            j[(k, k)] += self.lambda - ((k + 1) * (k + 1)) as f64;
        }
        j
    }

    fn rk4(&self, x: &[f64], with_deriv: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let n = self.modes;
        let h = self.dt;
        let mut a = x.to_vec();
        let mut v = if with_deriv {
            Some(DMatrix::identity(n, n))
        } else {
            None
        };
        let mut u = vec![0.0; self.nodes - 1];
        let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut tmp = vec![0.0; n];
        for _ in 0..self.steps() {
            let mut jac: [Option<DMatrix<f64>>; 4] = [None, None, None, None];
            for s in 0..4 {
                let c = match s {
                    0 => 0.0,
                    1 | 2 => 0.5 * h,
                    _ => h,
                };
                for i in 0..n {
                    tmp[i] = if s == 0 { a[i] } else { a[i] + c * k[s - 1][i] };
                }
                let mut ks = std::mem::take(&mut k[s]);
                self.field(&tmp, &mut u, &mut ks);
                k[s] = ks;
                if with_deriv {
                    jac[s] = Some(self.field_jacobian(&u));
                }
            }
            for i in 0..n {
                a[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            if let Some(vm) = v.as_mut() {
                let j: Vec<&DMatrix<f64>> = jac.iter().map(|m| m.as_ref().unwrap()).collect();
                let k1 = j[0] * &*vm;
                let k2 = j[1] * (&*vm + &k1 * (0.5 * h));
                let k3 = j[2] * (&*vm + &k2 * (0.5 * h));
                let k4 = j[3] * (&*vm + &k3 * h);
                *vm += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
        (a, v)
    }
}

impl Default for GalerkinRd {
    fn default() -> Self {
        GalerkinRd::new(16, 12.0, 0.5, 1e-3)
    }
}

impl DynamicalSystem for GalerkinRd {
    fn name(&self) -> &str {
        "galerkin-rd"
    }

    fn dim(&self) -> usize {
        self.modes
    }

    /// Number of unstable modes of the zero state, `#{k : k² < λ}`.
    fn unstable_dim(&self) -> usize {
        (1..=self.modes)
            .filter(|k| ((k * k) as f64) < self.lambda)
            .count()
            .max(1)
    }

    fn basin(&self) -> &BasinBox {
        &self.basin
    }

    fn seed_box(&self) -> &BasinBox {
        &self.seeds
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let (a, _) = self.rk4(x, false);
        out.copy_from_slice(&a);
    }

    fn deriv(&self, x: &[f64]) -> DMatrix<f64> {
        self.rk4(x, true).1.unwrap()
    }

    fn map_and_deriv(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (a, v) = self.rk4(x, true);
        (DVector::from_vec(a), v.unwrap())
    }

    fn contraction_factor(&self) -> f64 {
        // Slowest decay of the linear part of the first stable mode.
        let k = self.unstable_dim() + 1;
        ((self.lambda - (k * k) as f64) * self.period).exp().min(0.99)
    }

    fn hyperbolicity_rate(&self) -> Option<f64> {
        None
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "name": "galerkin-rd",
            "dim": self.modes,
            "unstable_dim": self.unstable_dim(),
            "pde": "u_t = u_xx + lambda u - u^3 on (0, pi), Dirichlet",
            "lambda": self.lambda,
            "modes": self.modes,
            "period": self.period,
            "rk4_step": self.dt,
            "collocation_nodes": self.nodes,
            "basin": "[-6,6]^N",
            "seed_box": "[-0.5,0.5]^N",
            "lyapunov_exponents": "not known in closed form",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_projection_is_exact() {
        // u = sin x: u³ = (3 sin x − sin 3x)/4.
        let g = GalerkinRd::new(4, 0.0, 0.5, 1e-3);
        let mut a = vec![0.0; 4];
        a[0] = 1.0;
        let mut u = vec![0.0; g.nodes - 1];
        let mut f = vec![0.0; 4];
        g.field(&a, &mut u, &mut f);
        assert!((f[0] - (-1.0 - 0.75)).abs() < 1e-13);
        assert!(f[1].abs() < 1e-13);
        assert!((f[2] - 0.25).abs() < 1e-13);
        assert!(f[3].abs() < 1e-13);
    }

    #[test]
    fn linear_regime_matches_exponential() {
        let g = GalerkinRd::new(4, 12.0, 0.1, 1e-3);
        let a = [1e-7, 0.0, 0.0, 0.0];
        let y = g.map(&DVector::from_column_slice(&a));
        let want = 1e-7 * (11.0f64 * 0.1).exp();
        assert!((y[0] - want).abs() / want < 1e-9);
    }
}
