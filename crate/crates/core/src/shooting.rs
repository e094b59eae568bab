//! Newton iteration on orbit sequences (multiple shooting).
//!
//! Unknowns are all points `x₀ … xₙ`; residuals are `xᵢ₊₁ ⊖ f(xᵢ)`. Open
//! segments close the system with linear boundary rows at both ends and solve
//! a banded system; cyclic segments wrap `xₙ ≡ x₀` and solve densely.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynsys::DynamicalSystem;
use crate::error::{Error, Result};
use crate::linalg::Banded;

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct NewtonOptions {
    pub max_steps: usize,
    /// Target sup-norm of the residual vector.
    pub tol: f64,
    /// Residual still accepted when the iteration stagnates at roundoff.
    pub stagnation_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_steps: 20,
            tol: 1e-12,
            stagnation_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingSolution {
    pub points: Vec<DVector<f64>>,
    /// Linear solves performed.
    pub steps: usize,
    /// Final sup-norm residual.
    pub residual: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Residual vector: start rows, step defects, end rows.
fn open_residual(
    sys: &dyn DynamicalSystem,
    xs: &[DVector<f64>],
    anchors: &[DVector<f64>],
    start: &DMatrix<f64>,
    end: &DMatrix<f64>,
) -> Vec<f64> {
    let n = xs.len() - 1;
    let mut out = Vec::with_capacity(start.nrows() + n * sys.dim() + end.nrows());
    out.extend((start * sys.displacement(anchors[0].as_slice(), xs[0].as_slice())).iter());
    for i in 0..n {
        let fx = sys.map(&xs[i]);
        out.extend(sys.displacement(fx.as_slice(), xs[i + 1].as_slice()).iter());
    }
    out.extend((end * sys.displacement(anchors[n].as_slice(), xs[n].as_slice())).iter());
    out
}

fn cyclic_residual(sys: &dyn DynamicalSystem, xs: &[DVector<f64>]) -> Vec<f64> {
    let n = xs.len();
    let mut out = Vec::with_capacity(n * sys.dim());
    for i in 0..n {
        let fx = sys.map(&xs[i]);
        out.extend(sys.displacement(fx.as_slice(), xs[(i + 1) % n].as_slice()).iter());
    }
    out
}

fn apply(sys: &dyn DynamicalSystem, xs: &[DVector<f64>], delta: &[f64], t: f64) -> Vec<DVector<f64>> {
    let d = sys.dim();
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let step: Vec<f64> = delta[i * d..(i + 1) * d].iter().map(|v| v * t).collect();
            sys.translate(x.as_slice(), &step)
        })
        .collect()
}

/// Damped Newton driver shared by the open and cyclic solvers.
fn newton<R, S>(
    sys: &dyn DynamicalSystem,
    guess: &[DVector<f64>],
    opts: &NewtonOptions,
    residual: R,
    solve: S,
) -> Result<ShootingSolution>
where
    R: Fn(&[DVector<f64>]) -> Vec<f64>,
    S: Fn(&[DVector<f64>], &[f64]) -> Option<Vec<f64>>,
{
    let mut xs = guess.to_vec();
    let mut f = residual(&xs);
    let mut norm = sup(&f);
    let mut steps = 0;
    while norm > opts.tol && steps < opts.max_steps {
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = solve(&xs, &rhs)
            .ok_or_else(|| Error::NewtonDiverged("singular shooting matrix".into()))?;
        steps += 1;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = apply(sys, &xs, &delta, t);
            if trial.iter().any(|p| !sys.basin().contains(p.as_slice())) {
                t *= 0.5;
                continue;
            }
            let ft = residual(&trial);
            let nt = sup(&ft);
            if nt < norm {
                xs = trial;
                f = ft;
                norm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm <= opts.tol || norm <= opts.stagnation_tol {
        Ok(ShootingSolution {
            points: xs,
            steps,
            residual: norm,
        })
    } else {
        Err(Error::NewtonDiverged(format!(
            "residual {norm:.3e} after {steps} Newton steps"
        )))
    }
}

/// Solve for an orbit `x₀ … xₙ` near `anchors` with boundary conditions
/// `start·(x₀ ⊖ a₀) = 0` and `end·(xₙ ⊖ aₙ) = 0`; the boundary rows must
/// number `d` in total.
pub fn solve_open(
    sys: &dyn DynamicalSystem,
    anchors: &[DVector<f64>],
    start: &DMatrix<f64>,
    end: &DMatrix<f64>,
    opts: &NewtonOptions,
) -> Result<ShootingSolution> {
    let d = sys.dim();
    if anchors.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    if start.nrows() + end.nrows() != d || start.ncols() != d || end.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "boundary rows {}+{} do not match dimension {d}",
            start.nrows(),
            end.nrows()
        )));
    }
    let n = anchors.len() - 1;
    let ks = start.nrows();
    let size = (n + 1) * d;
    let kl = d + ks;
    let ku = 2 * d;
    newton(
        sys,
        anchors,
        opts,
        |xs| open_residual(sys, xs, anchors, start, end),
        |xs, rhs| {
            let mut a = Banded::zeros(size, kl, ku);
            for r in 0..ks {
                for c in 0..d {
                    a.set(r, c, start[(r, c)]);
                }
            }
            for i in 0..n {
                let df = sys.deriv(xs[i].as_slice());
                let row0 = ks + i * d;
                for r in 0..d {
                    for c in 0..d {
                        a.set(row0 + r, i * d + c, -df[(r, c)]);
                    }
                    a.set(row0 + r, (i + 1) * d + r, 1.0);
                }
            }
            let row0 = ks + n * d;
            for r in 0..end.nrows() {
                for c in 0..d {
                    a.set(row0 + r, n * d + c, end[(r, c)]);
                }
            }
            a.solve(rhs)
        },
    )
}

/// Solve for a periodic orbit `x₀ … x_{n−1}`, `f(x_{n−1}) = x₀`, from a guess.
pub fn solve_cyclic(
    sys: &dyn DynamicalSystem,
    guess: &[DVector<f64>],
    opts: &NewtonOptions,
) -> Result<ShootingSolution> {
    let d = sys.dim();
    let n = guess.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty cycle".into()));
    }
    newton(
        sys,
        guess,
        opts,
        |xs| cyclic_residual(sys, xs),
        |xs, rhs| {
            let mut a = DMatrix::zeros(n * d, n * d);
            for i in 0..n {
                let df = sys.deriv(xs[i].as_slice());
                let j = (i + 1) % n;
                for r in 0..d {
                    for c in 0..d {
                        a[(i * d + r, i * d + c)] -= df[(r, c)];
                    }
                    a[(i * d + r, j * d + r)] += 1.0;
                }
            }
            a.lu()
                .solve(&DVector::from_column_slice(rhs))
                .map(|v| v.as_slice().to_vec())
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{iterate, FatCat, LinearSystem};

    #[test]
    fn true_orbit_needs_no_steps() {
        let sys = FatCat::default();
        let orbit = iterate(&sys, &[0.1, 0.7, 0.01], 20).unwrap();
        let start = DMatrix::from_row_slice(2, 3, &[1.0, -1.0 / crate::dynsys::PHI, 0.0, 0.0, 0.0, 1.0]);
        let end = DMatrix::from_row_slice(1, 3, &[1.0, crate::dynsys::PHI, 0.0]);
        let sol = solve_open(&sys, &orbit.points, &start, &end, &NewtonOptions::default()).unwrap();
        assert_eq!(sol.steps, 0);
    }

    #[test]
    fn linear_cycle_closes_to_origin() {
        let sys = LinearSystem::new(vec![2.0, 0.5]);
        let guess = vec![DVector::from_vec(vec![0.1, 0.2]); 3];
        let sol = solve_cyclic(&sys, &guess, &NewtonOptions::default()).unwrap();
        assert!(sol.points.iter().all(|p| p.norm() < 1e-14));
        assert_eq!(sol.steps, 1);
    }

    #[test]
    fn mismatched_boundary_rows_rejected() {
        let sys = LinearSystem::new(vec![2.0, 0.5]);
        let pts = vec![DVector::zeros(2); 3];
        let r = solve_open(&sys, &pts, &DMatrix::zeros(2, 2), &DMatrix::zeros(1, 2), &NewtonOptions::default());
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
