//! Canonical coordinates and stable holonomy between unstable discs.
//!
//! The bracket `[x, y] = Wˢ(x) ∩ Wᵘ(y)` is computed as the true orbit
//! shadowing the spliced sequence `y₋ₘ … y₋₁, x, f(x) … fᵐ(x)`: the start
//! rows pin the orbit to the unstable direction at `y₋ₘ`, the end rows to the
//! centre-stable direction at `fᵐ(x)`. Linearisation errors at either end
//! are quadratic in distances that are already `e^{−mλ}` small, and are
//! contracted again on the way back to the middle.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynsys::{inverse_on_attractor, iterate, DynamicalSystem, InverseOptions};
use crate::error::{Error, Result};
use crate::graph_transform::{stable_graph_at_start, ChartSequence, GraphPatch};
use crate::linalg::fit_slope;
use crate::shooting::{solve_open, NewtonOptions};
use crate::splitting::SplittingProvider;
use crate::srb::UnstableDisc;

/// Slack `c` in the Lipschitz bound `1/10 + c` of the stable graph class.
pub const CLASS_SLACK: f64 = 1.0 / 40.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketConfig {
    /// Radius of the local manifolds: both shadowing half-orbits must stay
    /// within `eps` of their references.
    pub eps: f64,
    /// Largest admissible `|x − y|`.
    pub delta: f64,
    /// Newton tolerance.
    pub tol: f64,
    /// Half-window `m`; `None` picks it from the hyperbolicity rate.
    #[serde(default)]
    pub depth: Option<usize>,
}

impl Default for BracketConfig {
    fn default() -> Self {
        BracketConfig {
            eps: 0.5,
            delta: 0.15,
            tol: 1e-12,
            depth: None,
        }
    }
}

impl BracketConfig {
    /// Smallest `m` with `δ²e^{−2mλ}κᵐ < 1e-15`, kept in `[4, 20]`; longer
    /// backward windows lose accuracy to branch-amplified roundoff.
    pub fn window(&self, sys: &dyn DynamicalSystem) -> usize {
        if let Some(m) = self.depth {
            return m;
        }
        let lam = sys.hyperbolicity_rate().unwrap_or(0.1).max(1e-2);
        let kappa = sys.contraction_factor().clamp(1e-3, 1.0);
        let mut m = 4;
        while m < 20 && self.delta.powi(2) * (-2.0 * m as f64 * lam).exp() * kappa.powi(m as i32) >= 1e-15 {
            m += 1;
        }
        m
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Bracket {
    pub point: DVector<f64>,
    /// `sup_{0≤k≤m} |fᵏz ⊖ fᵏx|`.
    pub stable_sep: f64,
    /// `sup_{0≤k≤m} |z₋ₖ ⊖ y₋ₖ|`.
    pub unstable_sep: f64,
    /// `|fᵐz ⊖ fᵐx|`: how far the forward tail still is from `x`'s orbit.
    pub stable_residual: f64,
    /// `|z₋ₘ ⊖ y₋ₘ|`.
    pub unstable_residual: f64,
    pub newton_steps: usize,
    pub window: usize,
}

/// `[x, y]`, the point of `Wˢ_ε(x) ∩ Wᵘ_ε(y)`.
pub fn bracket(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    y: &[f64],
    provider: &dyn SplittingProvider,
    cfg: &BracketConfig,
) -> Result<Bracket> {
    let dist = sys.distance(x, y);
    if dist >= cfg.delta {
        return Err(Error::TooFar {
            dist,
            delta: cfg.delta,
        });
    }
    let m = cfg.window(sys);
    let back = inverse_on_attractor(sys, y, m, &InverseOptions::default())
        .map_err(|e| Error::NoIntersection(format!("backward orbit of y: {e}")))?;
    let fwd = iterate(sys, x, m).map_err(|e| Error::NoIntersection(format!("forward orbit of x: {e}")))?;
    if dist == 0.0 {
        return Ok(Bracket {
            point: DVector::from_column_slice(x),
            stable_sep: 0.0,
            unstable_sep: 0.0,
            stable_residual: 0.0,
            unstable_residual: 0.0,
            newton_steps: 0,
            window: m,
        });
    }
    let mut anchors: Vec<DVector<f64>> = back.points[1..].iter().rev().cloned().collect();
    anchors.extend(fwd.points.iter().cloned());
    let start = provider.splitting_at(sys, anchors[0].as_slice())?.normal_cs().transpose();
    let end = provider
        .splitting_at(sys, anchors[2 * m].as_slice())?
        .normal_u()
        .transpose();
    let opts = NewtonOptions {
        tol: cfg.tol,
        ..NewtonOptions::default()
    };
    let sol = solve_open(sys, &anchors, &start, &end, &opts)
        .map_err(|e| Error::NoIntersection(e.to_string()))?;
    let z = sol.points[m].clone();
    let mut stable_sep: f64 = 0.0;
    let mut unstable_sep: f64 = 0.0;
    for k in 0..=m {
        stable_sep = stable_sep.max(sys.distance(sol.points[m + k].as_slice(), fwd.points[k].as_slice()));
        unstable_sep = unstable_sep.max(sys.distance(sol.points[m - k].as_slice(), back.at(k).as_slice()));
    }
    if stable_sep > cfg.eps || unstable_sep > cfg.eps {
        return Err(Error::NoIntersection(format!(
            "shadowing orbit leaves the local manifolds (stable {stable_sep:e}, unstable {unstable_sep:e})"
        )));
    }
    Ok(Bracket {
        point: z,
        stable_sep,
        unstable_sep,
        stable_residual: sys.distance(sol.points[2 * m].as_slice(), fwd.points[m].as_slice()),
        unstable_residual: sys.distance(sol.points[0].as_slice(), back.at(m).as_slice()),
        newton_steps: sol.steps,
        window: m,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansivityPair {
    pub dist: f64,
    /// Least `k ≥ 0` with `|fᵏx − fᵏy| > ε`.
    pub forward: Option<usize>,
    /// Least `k ≥ 0` with `|x₋ₖ − y₋ₖ| > ε`.
    pub backward: Option<usize>,
    /// `N = min(forward, backward) − 1`: the pair is `ε`-close for `|k| ≤ N`.
    pub close_for: Option<usize>,
    /// `|x − y| / (ε αᴺ)`.
    pub converse_ratio: Option<f64>,
    pub identical: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansivityReport {
    pub eps: f64,
    pub alpha: f64,
    pub pairs: Vec<ExpansivityPair>,
    /// Largest converse ratio; the separation estimate holds with this
    /// constant.
    pub converse_constant: f64,
}

/// Separation times of attractor pairs in both time directions, and the
/// converse estimate `|x − y| ≤ C ε αᴺ` for pairs `ε`-close over `|k| ≤ N`.
pub fn expansivity_check(
    sys: &dyn DynamicalSystem,
    pairs: &[(DVector<f64>, DVector<f64>)],
    eps: f64,
    k_max: usize,
) -> Result<ExpansivityReport> {
    let lam = sys.hyperbolicity_rate().unwrap_or(0.1);
    let alpha = (-lam).exp();
    let mut out = Vec::with_capacity(pairs.len());
    let mut converse: f64 = 0.0;
    for (x, y) in pairs {
        let dist = sys.distance(x.as_slice(), y.as_slice());
        if dist == 0.0 {
            out.push(ExpansivityPair {
                dist,
                forward: None,
                backward: None,
                close_for: None,
                converse_ratio: None,
                identical: true,
            });
            continue;
        }
        let forward = first_separation(sys, x, y, eps, k_max, true)?;
        let backward = first_separation(sys, x, y, eps, k_max, false)?;
        let least = match (forward, backward) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => return Err(Error::KBudgetExceeded(k_max)),
        };
        let n = least.saturating_sub(1);
        let ratio = dist / (eps * alpha.powi(n as i32));
        converse = converse.max(ratio);
        out.push(ExpansivityPair {
            dist,
            forward,
            backward,
            close_for: Some(n),
            converse_ratio: Some(ratio),
            identical: false,
        });
    }
    Ok(ExpansivityReport {
        eps,
        alpha,
        pairs: out,
        converse_constant: converse,
    })
}

fn first_separation(
    sys: &dyn DynamicalSystem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eps: f64,
    k_max: usize,
    forward: bool,
) -> Result<Option<usize>> {
    let (a, b) = if forward {
        (
            iterate(sys, x.as_slice(), k_max)?.points,
            iterate(sys, y.as_slice(), k_max)?.points,
        )
    } else {
        let opts = InverseOptions::default();
        // Backward orbits stop being resolvable once branch amplification
        // reaches the separation scale; a failure there counts as unseparated.
        let a = match inverse_on_attractor(sys, x.as_slice(), k_max, &opts) {
            Ok(o) => o.points,
            Err(_) => return Ok(None),
        };
        let b = match inverse_on_attractor(sys, y.as_slice(), k_max, &opts) {
            Ok(o) => o.points,
            Err(_) => return Ok(None),
        };
        (a, b)
    };
    Ok((0..=k_max).find(|&k| sys.distance(a[k].as_slice(), b[k].as_slice()) > eps))
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyPair {
    pub base: DVector<f64>,
    pub p: DVector<f64>,
    pub tp: DVector<f64>,
    /// Arclength of `p` on `D₁`.
    pub s1: f64,
    /// Arclength of `T(p)` on `D₂`.
    pub s2: f64,
    /// Distance from `T(p)` to the nearest node of `D₂`.
    pub off_disc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyReport {
    pub pairs: Vec<HolonomyPair>,
    /// Base points without an intersection.
    pub dropped: usize,
    /// Steps `n` of the stable-contraction displacement check.
    pub contraction_steps: usize,
    /// `max |fⁿT(p) − fⁿp| / (|T(p) − p| (e^{−λ}+2δ₂)ⁿ)`.
    pub contraction_ratio: f64,
    pub contraction_ok: bool,
}

impl HolonomyReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["s1", "s2", "displacement", "off_disc"])?;
        for p in &self.pairs {
            let disp = (&p.tp - &p.p).norm();
            out.write_record([p.s1.to_string(), p.s2.to_string(), disp.to_string(), p.off_disc.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Allowed excess of the nearest-node distance over the disc's node spacing
/// before `T(p)` counts as off the disc.
const OFF_DISC_SLACK: f64 = 1e-6;

/// Stable holonomy `T : D₁ → D₂` at the given base points: `p = [y, D₁]`,
/// `T(p) = [y, D₂]`, each bracket taken with the nearest disc node.
pub fn holonomy_map(
    sys: &dyn DynamicalSystem,
    d1: &UnstableDisc,
    d2: &UnstableDisc,
    bases: &[DVector<f64>],
    provider: &dyn SplittingProvider,
    cfg: &BracketConfig,
) -> Result<HolonomyReport> {
    let nearest = |disc: &UnstableDisc, y: &DVector<f64>| -> DVector<f64> {
        disc.nodes
            .iter()
            .min_by(|a, b| {
                sys.distance(a.as_slice(), y.as_slice())
                    .partial_cmp(&sys.distance(b.as_slice(), y.as_slice()))
                    .unwrap()
            })
            .unwrap()
            .clone()
    };
    let spacing2 = max_node_gap(sys, d2);
    let delta2 = 0.05;
    let lam = sys.hyperbolicity_rate().unwrap_or(0.1);
    let rate = (-lam).exp() + 2.0 * delta2;
    let steps = 10;
    let mut pairs = Vec::with_capacity(bases.len());
    let mut dropped = 0;
    let mut ratio: f64 = 0.0;
    for y in bases {
        let p = if d1.nodes.iter().any(|n| n == y) {
            y.clone()
        } else {
            match bracket(sys, y.as_slice(), nearest(d1, y).as_slice(), provider, cfg) {
                Ok(b) => b.point,
                Err(Error::NoIntersection(_)) | Err(Error::TooFar { .. }) => {
                    dropped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        let tp = match bracket(sys, y.as_slice(), nearest(d2, y).as_slice(), provider, cfg) {
            Ok(b) => b.point,
            Err(Error::NoIntersection(_)) | Err(Error::TooFar { .. }) => {
                dropped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (s1, _) = d1.arclength_of(sys, p.as_slice());
        let (s2, off) = d2.arclength_of(sys, tp.as_slice());
        if off > spacing2 + OFF_DISC_SLACK {
            dropped += 1;
            continue;
        }
        let d0 = sys.distance(p.as_slice(), tp.as_slice());
        if d0 > 0.0 {
            let a = iterate(sys, p.as_slice(), steps)?;
            let b = iterate(sys, tp.as_slice(), steps)?;
            let dn = sys.distance(a.points[steps].as_slice(), b.points[steps].as_slice());
            ratio = ratio.max(dn / (d0 * rate.powi(steps as i32)));
        }
        pairs.push(HolonomyPair {
            base: y.clone(),
            p,
            tp,
            s1,
            s2,
            off_disc: off,
        });
    }
    Ok(HolonomyReport {
        pairs,
        dropped,
        contraction_steps: steps,
        contraction_ratio: ratio,
        contraction_ok: ratio <= 1.0,
    })
}

fn max_node_gap(sys: &dyn DynamicalSystem, d: &UnstableDisc) -> f64 {
    d.nodes
        .windows(2)
        .map(|w| sys.distance(w[0].as_slice(), w[1].as_slice()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRatios {
    pub width: f64,
    /// Cell start (source arclength) and image-to-source arclength ratio.
    pub cells: Vec<(f64, f64)>,
    pub min: f64,
    pub max: f64,
    /// `max(max, 1/min)`: all ratios lie in `[1/C, C]`.
    pub c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyJacobian {
    pub coarse: CellRatios,
    pub fine: CellRatios,
    /// Relative change of the extreme ratios under cell halving.
    pub halving_drift: f64,
    pub c: f64,
}

impl HolonomyJacobian {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["width", "cell_start", "ratio"])?;
        for r in [&self.coarse, &self.fine] {
            for (s, q) in &r.cells {
                out.write_record([r.width.to_string(), s.to_string(), q.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Minimum number of matched pairs for cell ratios.
pub const MIN_PAIRS: usize = 1000;

/// Image-cell to source-cell arclength ratios at `width` and `width / 2`.
pub fn holonomy_jacobian(report: &HolonomyReport, width: f64) -> Result<HolonomyJacobian> {
    if report.pairs.len() < MIN_PAIRS {
        return Err(Error::Insufficient(format!(
            "{} matched pairs, need {MIN_PAIRS}",
            report.pairs.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = report.pairs.iter().map(|p| (p.s1, p.s2)).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
    let coarse = cell_ratios(&pts, width)?;
    let fine = cell_ratios(&pts, width / 2.0)?;
    let drift = ((fine.max - coarse.max) / coarse.max)
        .abs()
        .max(((fine.min - coarse.min) / coarse.min).abs());
    let c = coarse.c.max(fine.c);
    Ok(HolonomyJacobian {
        coarse,
        fine,
        halving_drift: drift,
        c,
    })
}

fn cell_ratios(pts: &[(f64, f64)], width: f64) -> Result<CellRatios> {
    let lo = pts[0].0;
    let hi = pts[pts.len() - 1].0;
    let cells = ((hi - lo) / width).floor() as usize;
    if cells == 0 {
        return Err(Error::Insufficient("source range shorter than one cell".into()));
    }
    let interp = |s: f64| -> f64 {
        let i = pts.partition_point(|p| p.0 <= s).clamp(1, pts.len() - 1);
        let (a, b) = (pts[i - 1], pts[i]);
        a.1 + (s - a.0) / (b.0 - a.0) * (b.1 - a.1)
    };
    let mut out = Vec::with_capacity(cells);
    for c in 0..cells {
        let a = lo + c as f64 * width;
        let r = (interp(a + width) - interp(a)).abs() / width;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::DegenerateCocycle { step: c });
        }
        out.push((a, r));
    }
    let min = out.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max = out.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(CellRatios {
        width,
        cells: out,
        min,
        max,
        c: max.max(1.0 / min),
    })
}

/// A point of chart 0 on a graph, with the graph's tangent frame `(I; Dv)`.
fn graph_point(v: &GraphPatch, xi: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (val, dv) = v.eval(xi);
    let du = xi.len();
    let d = du + val.len();
    let mut q = DVector::zeros(d);
    q.rows_mut(0, du).copy_from(xi);
    q.rows_mut(du, d - du).copy_from(&val);
    let mut b = DMatrix::zeros(d, du);
    b.view_mut((0, 0), (du, du)).fill_with_identity();
    b.view_mut((du, 0), (d - du, du)).copy_from(&dv);
    (q, b)
}

fn volume(b: &DMatrix<f64>) -> f64 {
    (b.transpose() * b).determinant().max(0.0).sqrt()
}

/// `|det(Dgₖ restricted to the transported tangent)|` along `n` chart steps.
fn step_factors(charts: &ChartSequence, q0: DVector<f64>, b0: DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    let mut q = q0;
    let mut b = b0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let r = charts.radii[k];
        if q.amax() > r {
            return Err(Error::ConditionsViolated {
                condition: "chart radius",
                step: k,
                detail: format!("tracked point at {:e} leaves the chart of radius {r:e}", q.amax()),
            });
        }
        let g = &charts.maps[k];
        let jac = g.jacobian(&q);
        let nb = &jac * &b;
        out.push(volume(&nb) / volume(&b));
        q = g.eval(&q);
        // Renormalise the frame; volume ratios are scale free.
        let s = volume(&nb).powf(1.0 / b.ncols() as f64);
        b = nb / s;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianRatioTable {
    /// `(k, ∏_{j<k} J_j(ξ₁)/J_j(ξ₂))` for two points on one graph.
    pub same_graph: Vec<(usize, f64)>,
    /// `(k, J_k(x)/J_k(y))` for `x, y` on two graphs and one stable leaf.
    pub per_step: Vec<(usize, f64)>,
    /// `(k, ∏_{j<k} J_j(x)/J_j(y))`.
    pub cross_graph: Vec<(usize, f64)>,
    /// Fitted slope of `log|factor − 1|` in `k`; `−∞` when every factor is
    /// within roundoff of one.
    pub slope: f64,
    pub required_slope: f64,
    pub c: f64,
    pub pass: bool,
}

impl JacobianRatioTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "same_graph", "per_step", "cross_graph"])?;
        for i in 0..self.per_step.len() {
            out.write_record([
                self.per_step[i].0.to_string(),
                self.same_graph[i].1.to_string(),
                self.per_step[i].1.to_string(),
                self.cross_graph[i].1.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Determinant ratios along `n` chart steps: two points on `v1` a distance
/// `2s` apart, and the points where `v1`, `v2` cross the local stable
/// manifold of the anchor. `s = None` picks the largest separation whose
/// forward images stay inside the charts.
pub fn jacobian_ratio_bounds(
    charts: &ChartSequence,
    v1: &GraphPatch,
    v2: &GraphPatch,
    n: usize,
    s: Option<f64>,
) -> Result<JacobianRatioTable> {
    if n > charts.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} steps requested on {} charts",
            charts.len()
        )));
    }
    let du = charts.du;
    let dir = DVector::from_element(du, 1.0 / (du as f64).sqrt());
    let r_min = charts.radii[..=n].iter().cloned().fold(f64::INFINITY, f64::min);
    let growth: f64 = charts.ell_prime[..n].iter().map(|l| l.max(1.0)).product();
    let s = s.unwrap_or(0.25 * r_min / growth);
    let (qa, ba) = graph_point(v1, &(&dir * s));
    let (qb, bb) = graph_point(v1, &(&dir * -s));
    let fa = step_factors(charts, qa, ba, n)?;
    let fb = step_factors(charts, qb, bb, n)?;

    let w = stable_graph_at_start(charts)?;
    let (qx, bx) = graph_point(v1, &stable_crossing(v1, &w)?);
    let (qy, by) = graph_point(v2, &stable_crossing(v2, &w)?);
    let fx = step_factors(charts, qx, bx, n)?;
    let fy = step_factors(charts, qy, by, n)?;

    let mut same = Vec::with_capacity(n);
    let mut per = Vec::with_capacity(n);
    let mut cross = Vec::with_capacity(n);
    let (mut pa, mut px) = (1.0, 1.0);
    let mut c: f64 = 1.0;
    let mut ks = Vec::new();
    let mut logs = Vec::new();
    for k in 0..n {
        pa *= fa[k] / fb[k];
        let step = fx[k] / fy[k];
        px *= step;
        c = c.max(pa).max(1.0 / pa).max(px).max(1.0 / px);
        same.push((k, pa));
        per.push((k, step));
        cross.push((k, px));
        let e = (step - 1.0).abs();
        if e > 1e-13 {
            ks.push(k as f64);
            logs.push(e.ln());
        }
    }
    let slope = if ks.len() >= 4 { fit_slope(&ks, &logs) } else { f64::NEG_INFINITY };
    let required = -0.9 * charts.lambda1;
    Ok(JacobianRatioTable {
        same_graph: same,
        per_step: per,
        cross_graph: cross,
        slope,
        required_slope: required,
        c,
        pass: slope <= required,
    })
}

/// `ξᵘ` with `(ξᵘ, v(ξᵘ))` on the stable graph `w`: the fixed point of
/// `ξᵘ ↦ w(v(ξᵘ))`, a contraction for graphs in the Lipschitz classes.
fn stable_crossing(v: &GraphPatch, w: &GraphPatch) -> Result<DVector<f64>> {
    let mut xi = DVector::zeros(v.domain_dim);
    for step in 0..200 {
        let next = w.eval(&v.eval(&xi).0).0;
        let diff = (&next - &xi).amax();
        xi = next;
        if diff < 1e-15 {
            return Ok(xi);
        }
        if !diff.is_finite() || step == 199 {
            break;
        }
    }
    let lip = (0.1 + CLASS_SLACK) * (0.1 + CLASS_SLACK);
    Err(Error::FixedPointDiverged {
        step: (1e-15f64.ln() / lip.ln()).ceil() as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{FatCat, Solenoid, PHI};
    use crate::splitting::AnalyticSplitting;

    fn on_attractor(sys: &dyn DynamicalSystem, x: &[f64]) -> DVector<f64> {
        iterate(sys, x, 40).unwrap().points[40].clone()
    }

    #[test]
    fn bracket_of_point_with_itself() {
        let sol = Solenoid::warped();
        let x = on_attractor(&sol, &[0.3, 0.0, 0.0]);
        let b = bracket(&sol, x.as_slice(), x.as_slice(), &AnalyticSplitting, &BracketConfig::default()).unwrap();
        assert_eq!(b.point, x);
    }

    #[test]
    fn fat_cat_bracket_is_affine_intersection() {
        let cat = FatCat::default();
        let x = DVector::from_vec(vec![0.31, 0.42, 0.0]);
        let y = DVector::from_vec(vec![0.35, 0.40, 0.0]);
        let b = bracket(&cat, x.as_slice(), y.as_slice(), &AnalyticSplitting, &BracketConfig::default()).unwrap();
        // Stable plane through x: (x ⊕ t·s, any z); unstable line through y: y ⊕ r·u.
        let n = (PHI * PHI + 1.0).sqrt();
        let u = DVector::from_vec(vec![PHI / n, 1.0 / n, 0.0]);
        let d = cat.displacement(y.as_slice(), x.as_slice());
        let want = cat.translate(y.as_slice(), (&u * d.dot(&u)).as_slice());
        assert!(cat.distance(b.point.as_slice(), want.as_slice()) < 1e-10, "{} vs {}", b.point, want);
        assert!(b.newton_steps <= 3);
    }

    #[test]
    fn solenoid_bracket_keeps_angle() {
        let sol = Solenoid::classic();
        // x2 shares x's leaf; y branches off at backward depth 4.
        let x2 = sol.point_with_history(0.31, &[]);
        let y = sol.point_with_history(0.3, &[0, 0, 0, 1]);
        let b = bracket(&sol, x2.as_slice(), y.as_slice(), &AnalyticSplitting, &BracketConfig::default()).unwrap();
        assert!((b.point[0] - x2[0]).abs() < 1e-12);
        // On y's leaf: backward orbits converge.
        let bz = inverse_on_attractor(&sol, b.point.as_slice(), 10, &InverseOptions::default()).unwrap();
        let by = inverse_on_attractor(&sol, y.as_slice(), 10, &InverseOptions::default()).unwrap();
        assert!(sol.distance(bz.at(10).as_slice(), by.at(10).as_slice()) < 0.05 * 2f64.powi(-10) * 4.0);
        // Idempotence: [x, [x, y]] = [x, y].
        let again = bracket(&sol, x2.as_slice(), b.point.as_slice(), &AnalyticSplitting, &BracketConfig::default()).unwrap();
        assert!(sol.distance(again.point.as_slice(), b.point.as_slice()) < 1e-10);
    }

    #[test]
    fn far_pair_rejected() {
        let cat = FatCat::default();
        let r = bracket(&cat, &[0.1, 0.1, 0.0], &[0.5, 0.5, 0.0], &AnalyticSplitting, &BracketConfig::default());
        assert!(matches!(r, Err(Error::TooFar { .. })));
    }

    #[test]
    fn cat_pair_separates_forward_near_twelve() {
        let cat = FatCat::default();
        let n = (PHI * PHI + 1.0).sqrt();
        let x = DVector::from_vec(vec![0.2, 0.3, 0.0]);
        let y = cat.translate(x.as_slice(), &[1e-6 * PHI / n, 1e-6 / n, 0.0]);
        let r = expansivity_check(&cat, &[(x.clone(), y), (x.clone(), x)], 0.1, 40).unwrap();
        let k = r.pairs[0].forward.unwrap();
        let pred = (0.1f64 / 1e-6).ln() / FatCat::lambda_max().ln();
        assert!((k as f64 - pred).abs() <= 1.0, "{k} vs {pred}");
        assert!(r.pairs[1].identical);
        assert!(r.converse_constant < 1.0 / r.alpha);
    }

    #[test]
    fn solenoid_fiber_pair_separates_backward_only() {
        let sol = Solenoid::classic();
        let x = sol.point_with_history(0.3, &[]);
        let y = sol.point_with_history(0.3, &[0, 0, 1]);
        let r = expansivity_check(&sol, &[(x, y)], 0.1, 30).unwrap();
        assert_eq!(r.pairs[0].forward, None);
        assert!(r.pairs[0].backward.is_some());
    }

    fn charts_on(sys: Solenoid, n: usize) -> ChartSequence {
        use crate::graph_transform::{build_charts, ChartOptions};
        use std::sync::Arc;
        let x = sys.point_with_history(0.137, &[]);
        let sys: Arc<dyn DynamicalSystem> = Arc::new(sys);
        let orbit = iterate(sys.as_ref(), x.as_slice(), n).unwrap();
        build_charts(&sys, &orbit.points, &AnalyticSplitting, &ChartOptions::default()).unwrap()
    }

    fn tilted(charts: &ChartSequence) -> GraphPatch {
        let r = charts.radii[0];
        GraphPatch::from_fn(charts, crate::graph_transform::PatchKind::Unstable, 0, |xi| {
            let v = DVector::from_vec(vec![0.05 * xi[0] + 0.1 * r, -0.03 * xi[0] + 0.02 * xi[0] * xi[0] / r]);
            let d = DMatrix::from_column_slice(2, 1, &[0.05, -0.03 + 0.04 * xi[0] / r]);
            (v, d)
        })
        .unwrap()
    }

    #[test]
    fn linear_charts_give_unit_ratios() {
        use crate::graph_transform::{ChartOptions, LinearConnectingMap, PatchKind};
        use std::sync::Arc;
        let lin = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let maps = (0..20)
            .map(|_| Arc::new(LinearConnectingMap::new(lin.clone(), 1)) as Arc<dyn crate::graph_transform::ConnectingMap>)
            .collect();
        let charts = ChartSequence::assemble(maps, &ChartOptions::default()).unwrap();
        let r = charts.radii[0];
        let flat = |c: f64| {
            GraphPatch::from_fn(&charts, PatchKind::Unstable, 0, move |_| {
                (DVector::from_element(1, c * r), DMatrix::zeros(1, 1))
            })
            .unwrap()
        };
        let t = jacobian_ratio_bounds(&charts, &flat(0.1), &flat(-0.2), 20, None).unwrap();
        assert!(t.same_graph.iter().chain(&t.cross_graph).all(|(_, v)| *v == 1.0));
        assert_eq!(t.c, 1.0);
        assert!(t.pass);
    }

    #[test]
    fn solenoid_determinant_ratios_are_bounded() {
        let charts = charts_on(Solenoid::classic(), 30);
        let t = jacobian_ratio_bounds(&charts, &tilted(&charts), &GraphPatch::zero(&charts, crate::graph_transform::PatchKind::Unstable, 0).unwrap(), 30, None).unwrap();
        assert!(t.c < 2.0, "{}", t.c);
        assert!(t.pass, "slope {} required {}", t.slope, t.required_slope);
    }

    #[test]
    fn warped_per_step_factors_decay() {
        let charts = charts_on(Solenoid::warped(), 30);
        let t = jacobian_ratio_bounds(&charts, &tilted(&charts), &GraphPatch::zero(&charts, crate::graph_transform::PatchKind::Unstable, 0).unwrap(), 30, None).unwrap();
        assert!(t.slope.is_finite());
        assert!(t.pass, "slope {} required {}", t.slope, t.required_slope);
        assert!(t.c < 2.0);
    }
}
