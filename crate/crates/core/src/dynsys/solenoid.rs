use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::basin::{wrap_unit, BasinBox};
use super::DynamicalSystem;
use crate::splitting::Splitting;

/// Solid-torus solenoid `(θ, z) ↦ (g(θ), λc·z + ½(cos 2πθ, sin 2πθ))` with
/// `g(θ) = 2θ + (a/2π) sin 2πθ`. `a = 0` is the classical doubling solenoid.
#[derive(Debug, Clone)]
pub struct Solenoid {
    name: String,
    pub contraction: f64,
    pub warp: f64,
    basin: BasinBox,
}

/// Depth of the backward series used for the closed-form unstable direction.
const SPLITTING_DEPTH: usize = 60;

/// Backward steps whose branch is resolved by the fiber coordinate of a
/// double-precision point (error `4²⁴·10⁻¹⁶ ≈ 0.03` against a gap above 3).
const RELIABLE_DEPTH: usize = 24;

/// Amplitude of the rounding dither of the doubling map.
pub const DOUBLING_DITHER: f64 = 3.552713678800501e-15;

/// Uniform in `[−½, ½)·DOUBLING_DITHER`, from a SplitMix64 hash of the bits.
fn dither(theta: f64) -> f64 {
    // Keeps the fixed point θ = 0 exact.
    if theta == 0.0 {
        return 0.0;
    }
    let mut z = theta.to_bits().wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ((z >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * DOUBLING_DITHER
}

impl Solenoid {
    pub fn new(contraction: f64, warp: f64) -> Self {
        assert!(contraction > 0.0 && contraction < 0.5);
        assert!(warp.abs() < 1.0);
        let name = if warp == 0.0 {
            "solenoid"
        } else {
            "warped-solenoid"
        };
        Solenoid {
            name: name.to_string(),
            contraction,
            warp,
            basin: BasinBox::new(
                vec![0.0, -1.0, -1.0],
                vec![1.0, 1.0, 1.0],
                vec![true, false, false],
            ),
        }
    }

    pub fn classic() -> Self {
        Solenoid::new(0.25, 0.0)
    }

    pub fn warped() -> Self {
        Solenoid::new(0.25, 0.5)
    }

    /// Circle factor `g`, reduced mod 1.
    ///
    /// Exact doubling only shifts mantissa bits, so floating-point orbits of
    /// `2θ mod 1` collapse onto `0` within 53 steps, and any faithful
    /// evaluation inherits strongly biased long-time statistics. The doubling
    /// is therefore perturbed by a deterministic dither of width `2⁻⁴⁸`
    /// hashed from the bits of `θ`, which behaves like random rounding.
    pub fn circle_map(&self, theta: f64) -> f64 {
        if self.warp == 0.0 {
            wrap_unit(2.0 * theta + dither(theta))
        } else {
            wrap_unit(2.0 * theta + self.warp / (2.0 * PI) * (2.0 * PI * theta).sin())
        }
    }

    /// `g'(θ)`.
    pub fn circle_deriv(&self, theta: f64) -> f64 {
        2.0 + self.warp * (2.0 * PI * theta).cos()
    }

    /// Lift `G(t) = 2t + (a/2π) sin 2πt` on `[0, 1]`, increasing from 0 to 2.
    pub fn lift(&self, t: f64) -> f64 {
        2.0 * t + self.warp / (2.0 * PI) * (2.0 * PI * t).sin()
    }

    /// The two circle preimages of `theta`, in increasing order.
    pub fn circle_preimages(&self, theta: f64) -> [f64; 2] {
        let theta = wrap_unit(theta);
        if self.warp == 0.0 {
            return [theta / 2.0, (theta + 1.0) / 2.0];
        }
        [self.solve_lift(theta), self.solve_lift(theta + 1.0)]
    }

    /// Preimage of `t ∈ [0, 1]` on branch `b`, i.e. `G⁻¹(t + b)`; unlike
    /// [`Self::circle_preimages`] the endpoint `t = 1` is not wrapped.
    pub fn branch_preimage(&self, t: f64, b: usize) -> f64 {
        let target = t + b as f64;
        if self.warp == 0.0 {
            target / 2.0
        } else {
            self.solve_lift(target)
        }
    }

    /// Solve `G(t) = target` for `t ∈ [0, 1]`; safeguarded Newton.
    fn solve_lift(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut t = target / 2.0;
        for _ in 0..100 {
            let r = self.lift(t) - target;
            if r.abs() < 1e-16 {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let step = t - r / self.circle_deriv(t);
            t = if step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-17 {
                break;
            }
        }
        t
    }

    fn forcing(theta: f64) -> (f64, f64) {
        let a = 2.0 * PI * theta;
        (0.5 * a.cos(), 0.5 * a.sin())
    }

    /// Both candidate preimages of `y`, one per circle branch.
    pub fn preimages(&self, y: &[f64]) -> [DVector<f64>; 2] {
        let ts = self.circle_preimages(y[0]);
        ts.map(|t| {
            let (c, s) = Self::forcing(t);
            DVector::from_vec(vec![
                t,
                (y[1] - c) / self.contraction,
                (y[2] - s) / self.contraction,
            ])
        })
    }

    /// Fiber coordinate of the attractor point over `θ₀` whose backward
    /// angles are `θ₋₁, θ₋₂, …`: `z = Σ_{k≥1} λc^{k−1} ½(cos 2πθ₋ₖ, sin 2πθ₋ₖ)`.
    pub fn fiber_from_history(&self, past: &[f64]) -> [f64; 2] {
        let mut z = [0.0, 0.0];
        for &t in past.iter().rev() {
            let (c, s) = Self::forcing(t);
            z = [self.contraction * z[0] + c, self.contraction * z[1] + s];
        }
        z
    }

    /// Backward angles `θ₋₁ … θ₋ₙ` of `theta` along the branch word
    /// (`0` for the preimage in `[0, ½)`), continued with branch 0 up to
    /// depth `n`.
    pub fn angle_history(&self, theta: f64, word: &[usize], n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut t = theta;
        for k in 0..n {
            let b = word.get(k).copied().unwrap_or(0);
            t = self.circle_preimages(t)[b];
            out.push(t);
        }
        out
    }

    /// Attractor point over `theta` with backward branch word `word`,
    /// accurate to `λc^{60}`.
    pub fn point_with_history(&self, theta: f64, word: &[usize]) -> DVector<f64> {
        let past = self.angle_history(theta, word, SPLITTING_DEPTH.max(word.len()));
        let z = self.fiber_from_history(&past);
        DVector::from_vec(vec![wrap_unit(theta), z[0], z[1]])
    }

    /// Invariant density of `g` from Ulam's discretization on `bins` equal
    /// cells: `Pᵢⱼ = |cellᵢ ∩ g⁻¹(cellⱼ)| / |cellᵢ|`, with cell boundaries
    /// pulled back exactly through the monotone lift. Returns the density
    /// value on each cell (mean one).
    pub fn angular_acim(&self, bins: usize) -> Vec<f64> {
        let h = 1.0 / bins as f64;
        // Row i: (target cell, fraction of cell i).
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(bins);
        for i in 0..bins {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let (ga, gb) = (self.lift(a), self.lift(b));
            let mut row = Vec::new();
            let mut t0 = a;
            let mut c = ((ga / h).floor() + 1.0) * h;
            let mut j = (ga / h).floor() as usize;
            loop {
                let t1 = if c >= gb { b } else { self.lift_inverse(c, a, b) };
                if t1 > t0 {
                    row.push((j % bins, (t1 - t0) / h));
                }
                if c >= gb {
                    break;
                }
                t0 = t1;
                c += h;
                j += 1;
            }
            rows.push(row);
        }
        let mut mass = vec![h; bins];
        for _ in 0..10_000 {
            let mut next = vec![0.0; bins];
            for (i, row) in rows.iter().enumerate() {
                for &(j, p) in row {
                    next[j] += mass[i] * p;
                }
            }
            let total: f64 = next.iter().sum();
            let diff: f64 = next.iter().zip(&mass).map(|(a, b)| (a / total - b).abs()).sum();
            mass = next.into_iter().map(|m| m / total).collect();
            if diff < 1e-15 {
                break;
            }
        }
        mass.into_iter().map(|m| m / h).collect()
    }

    /// `G⁻¹(c)` on `[lo, hi]` by bisection.
    fn lift_inverse(&self, c: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.lift(mid) < c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Radius of the attracting tube, `½ / (1 − λc)`.
    pub fn tube_radius(&self) -> f64 {
        0.5 / (1.0 - self.contraction)
    }
}

impl DynamicalSystem for Solenoid {
    fn name(&self) -> &str {
        &self.name
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

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let (c, s) = Self::forcing(x[0]);
        out[0] = self.circle_map(x[0]);
        out[1] = self.contraction * x[1] + c;
        out[2] = self.contraction * x[2] + s;
    }

    fn deriv(&self, x: &[f64]) -> DMatrix<f64> {
        let a = 2.0 * PI * x[0];
        let l = self.contraction;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                self.circle_deriv(x[0]),
                0.0,
                0.0,
                -PI * a.sin(),
                l,
                0.0,
                PI * a.cos(),
                0.0,
                l,
            ],
        )
    }

    /// Preimage branch closest to the core circle. The wrong branch lies at
    /// fiber distance at least `1/λc − |z|` from it, far outside the basin.
    fn known_inverse(&self, y: &[f64]) -> Option<DVector<f64>> {
        let [p, q] = self.preimages(y);
        let np = p[1].hypot(p[2]);
        let nq = q[1].hypot(q[2]);
        Some(if np <= nq { p } else { q })
    }

    /// Branches up to depth `RELIABLE_DEPTH` follow stepwise inversion, whose
    /// fiber error grows by `1/λc` per step; deeper branches are below
    /// double precision and default to `0`. Fiber coordinates are then
    /// rebuilt from the angle history, so every point lies on the attractor.
    fn known_backward_orbit(&self, y: &[f64], depth: usize) -> Option<Vec<DVector<f64>>> {
        let total = depth + SPLITTING_DEPTH;
        let mut thetas = Vec::with_capacity(total);
        let mut cur = DVector::from_column_slice(y);
        for k in 0..total {
            if k < RELIABLE_DEPTH {
                cur = self.known_inverse(cur.as_slice())?;
                thetas.push(cur[0]);
            } else {
                let t = self.circle_preimages(*thetas.last().unwrap())[0];
                thetas.push(t);
            }
        }
        Some(
            (0..depth)
                .map(|k| {
                    let z = self.fiber_from_history(&thetas[k + 1..]);
                    DVector::from_vec(vec![thetas[k], z[0], z[1]])
                })
                .collect(),
        )
    }

    /// Fiber plane for `Eᶜˢ`; `Eᵘ` is the tangent `(1, dz/dθ)` of the unstable
    /// curve, summed along the backward orbit:
    /// `dz/dθ = Σ_k λc^{k-1} π(−sin 2πθ₋ₖ, cos 2πθ₋ₖ) / Π_{j≤k} g'(θ₋ⱼ)`.
    fn known_splitting(&self, x: &[f64]) -> Option<Splitting> {
        let mut w = [0.0, 0.0];
        let mut scale = 1.0;
        let mut cur = DVector::from_column_slice(x);
        for _ in 0..SPLITTING_DEPTH {
            let prev = self.known_inverse(cur.as_slice())?;
            let a = 2.0 * PI * prev[0];
            scale /= self.circle_deriv(prev[0]);
            w[0] += scale * (-PI * a.sin());
            w[1] += scale * (PI * a.cos());
            scale *= self.contraction;
            cur = prev;
        }
        let eu = DMatrix::from_column_slice(3, 1, &[1.0, w[0], w[1]]);
        let ecs = DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        Splitting::from_bases(&eu, &ecs).ok()
    }

    fn contraction_factor(&self) -> f64 {
        self.contraction
    }

    fn hyperbolicity_rate(&self) -> Option<f64> {
        Some((2.0 - self.warp.abs()).ln() - 1e-6)
    }

    fn metadata(&self) -> serde_json::Value {
        let mut m = json!({
            "name": self.name,
            "dim": 3,
            "unstable_dim": 1,
            "coordinates": ["theta (periodic)", "z1", "z2"],
            "contraction": self.contraction,
            "warp": self.warp,
            "basin": "S^1 x [-1,1]^2",
        });
        if self.warp == 0.0 {
            m["lyapunov_exponents"] = json!([
                {"value": 2f64.ln(), "multiplicity": 1},
                {"value": self.contraction.ln(), "multiplicity": 2},
            ]);
            m["unstable_jacobian"] = json!(2.0);
        } else {
            m["lyapunov_exponents"] = json!([
                {"value": "integral of log g' against the circle acim", "multiplicity": 1},
                {"value": self.contraction.ln(), "multiplicity": 2},
            ]);
            m["unstable_jacobian"] = json!("g'(theta) = 2 + a cos(2 pi theta)");
        }
        m
    }
}
