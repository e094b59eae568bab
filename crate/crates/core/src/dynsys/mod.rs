//! Dynamical systems satisfying the standing hypotheses (injective C² map with
//! injective derivative and an attractor with a box basin), the built-in
//! instances, and orbit-level operations.

mod basin;
mod fatcat;
mod galerkin;
mod linear;
mod solenoid;

pub use basin::{centered, wrap_unit, BasinBox};
pub use fatcat::{FatCat, PHI};
pub use galerkin::GalerkinRd;
pub use linear::{Iterated, LinearSystem};
pub use solenoid::Solenoid;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{min_singular, op_norm};
use crate::splitting::{unstable_block, Splitting, SplittingProvider, UnstableNorm};

/// A C² injective map of a box basin into itself.
///
/// Periodic coordinates are stored in `[0, 1)`; `deriv` is taken in the
/// universal cover. Implementations are immutable and shareable.
pub trait DynamicalSystem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn unstable_dim(&self) -> usize;
    fn basin(&self) -> &BasinBox;

    /// Box that initial conditions are drawn from.
    fn seed_box(&self) -> &BasinBox {
        self.basin()
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]);
    fn deriv(&self, x: &[f64]) -> DMatrix<f64>;

    fn map_and_deriv(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let mut out = DVector::zeros(self.dim());
        self.map_into(x, out.as_mut_slice());
        (out, self.deriv(x))
    }

    /// Inverse valid near the attractor, when available in closed form.
    fn known_inverse(&self, _y: &[f64]) -> Option<DVector<f64>> {
        None
    }

    /// Preimages `y₋₁ … y₋ₙ` lying on the attractor at every depth, when
    /// stepwise inversion loses accuracy faster than the orbit is needed.
    fn known_backward_orbit(&self, _y: &[f64], _depth: usize) -> Option<Vec<DVector<f64>>> {
        None
    }

    fn known_splitting(&self, _x: &[f64]) -> Option<Splitting> {
        None
    }

    /// Per-step contraction towards the attractor.
    fn contraction_factor(&self) -> f64;

    /// Documented hyperbolicity rate `λ₀`, when the system is uniformly
    /// hyperbolic.
    fn hyperbolicity_rate(&self) -> Option<f64>;

    fn metadata(&self) -> serde_json::Value;

    fn map(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.map_into(x.as_slice(), out.as_mut_slice());
        out
    }

    /// `b − a` in the wrapped metric.
    fn displacement(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        self.basin().displacement(a, b)
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.basin().distance(a, b)
    }

    /// `x + v`, wrapped.
    fn translate(&self, x: &[f64], v: &[f64]) -> DVector<f64> {
        self.basin().translate(x, v)
    }

    /// Bound `ε_attr = κ^{burn_in}·diam(U)` on the distance of
    /// `f^{burn_in}(U)` to the attractor.
    fn attractor_eps(&self, burn_in: usize) -> f64 {
        self.contraction_factor().powi(burn_in as i32) * self.basin().diameter()
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["solenoid", "warped-solenoid", "fat-cat", "galerkin-rd"];

/// Construct a built-in system with default parameters, optionally overridden
/// by a JSON object of parameters.
pub fn builtin(name: &str, params: Option<&serde_json::Value>) -> Result<Arc<dyn DynamicalSystem>> {
    let get = |key: &str, default: f64| -> Result<f64> {
        match params.and_then(|p| p.get(key)) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument(format!("parameter {key} must be a number"))),
        }
    };
    let known: &[&str] = match name {
        "solenoid" => &["contraction"],
        "warped-solenoid" => &["contraction", "warp"],
        "fat-cat" => &["c"],
        "galerkin-rd" => &["modes", "lambda", "period", "dt"],
        "linear" => &["diag"],
        _ => return Err(Error::InvalidArgument(format!("unknown system {name}"))),
    };
    if let Some(obj) = params.and_then(|p| p.as_object()) {
        for k in obj.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "unknown parameter {k} for system {name}"
                )));
            }
        }
    }
    Ok(match name {
        "solenoid" => Arc::new(Solenoid::new(get("contraction", 0.25)?, 0.0)),
        "warped-solenoid" => Arc::new(Solenoid::new(get("contraction", 0.25)?, get("warp", 0.5)?)),
        "fat-cat" => Arc::new(FatCat::new(get("c", 0.2)?)),
        "galerkin-rd" => Arc::new(GalerkinRd::new(
            get("modes", 16.0)? as usize,
            get("lambda", 12.0)?,
            get("period", 0.5)?,
            get("dt", 1e-3)?,
        )),
        _ => {
            let diag = params
                .and_then(|p| p.get("diag"))
                .and_then(|d| d.as_array())
                .map(|a| a.iter().filter_map(|v| v.as_f64()).collect::<Vec<_>>())
                .unwrap_or_else(|| vec![2.0, 0.5]);
            Arc::new(LinearSystem::new(diag))
        }
    })
}

/// Forward orbit `x₀ … xₙ`, optionally with `Df` at each point.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitSegment {
    pub points: Vec<DVector<f64>>,
    pub derivative_frames: Option<Vec<DMatrix<f64>>>,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn iterate(sys: &dyn DynamicalSystem, x: &[f64], n: usize) -> Result<OrbitSegment> {
    iterate_impl(sys, x, n, false)
}

/// As [`iterate`], also recording `Df(xₖ)` for `k < n`.
pub fn iterate_with_derivatives(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    n: usize,
) -> Result<OrbitSegment> {
    iterate_impl(sys, x, n, true)
}

fn iterate_impl(sys: &dyn DynamicalSystem, x: &[f64], n: usize, frames: bool) -> Result<OrbitSegment> {
    if !sys.basin().contains(x) {
        return Err(Error::OrbitEscapesBasin {
            step: 0,
            point: x.to_vec(),
        });
    }
    let mut points = Vec::with_capacity(n + 1);
    let mut derivs = Vec::new();
    let mut cur = DVector::from_column_slice(x);
    points.push(cur.clone());
    for step in 1..=n {
        let next = if frames {
            let (y, df) = sys.map_and_deriv(cur.as_slice());
            derivs.push(df);
            y
        } else {
            sys.map(&cur)
        };
        if !sys.basin().contains(next.as_slice()) {
            return Err(Error::OrbitEscapesBasin {
                step,
                point: next.as_slice().to_vec(),
            });
        }
        points.push(next.clone());
        cur = next;
    }
    Ok(OrbitSegment {
        points,
        derivative_frames: frames.then_some(derivs),
    })
}

/// Point cloud `{f^{burn_in}(uᵢ)}` plus the points one step earlier, which
/// seed Newton inversion.
#[derive(Debug, Clone, Serialize)]
pub struct AttractorSample {
    pub points: Vec<DVector<f64>>,
    pub predecessors: Option<Vec<DVector<f64>>>,
    pub burn_in: usize,
    pub eps: f64,
}

impl AttractorSample {
    /// Indices of the `k` sample points nearest to `y`.
    pub fn nearest(&self, sys: &dyn DynamicalSystem, y: &[f64], k: usize) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (sys.distance(p.as_slice(), y), i))
            .collect();
        let k = k.min(d.len());
        if k == 0 {
            return Vec::new();
        }
        d.select_nth_unstable_by(k - 1, |a, b| a.0.partial_cmp(&b.0).unwrap());
        d.truncate(k);
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn distance_to(&self, sys: &dyn DynamicalSystem, y: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| sys.distance(p.as_slice(), y))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn attractor_sample(
    sys: &dyn DynamicalSystem,
    count: usize,
    burn_in: usize,
    seed: u64,
) -> Result<AttractorSample> {
    if count == 0 {
        return Err(Error::InvalidArgument("seed count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = sys.dim();
    let mut points = Vec::with_capacity(count);
    let mut preds = Vec::with_capacity(if burn_in > 0 { count } else { 0 });
    let mut u = vec![0.0; d];
    for _ in 0..count {
        for v in u.iter_mut() {
            *v = rng.gen::<f64>();
        }
        let mut x = sys.seed_box().from_unit(&u);
        sys.basin().wrap(x.as_mut_slice());
        let mut prev = x.clone();
        for step in 1..=burn_in {
            let y = sys.map(&x);
            if !sys.basin().contains(y.as_slice()) {
                return Err(Error::OrbitEscapesBasin {
                    step,
                    point: y.as_slice().to_vec(),
                });
            }
            prev = std::mem::replace(&mut x, y);
        }
        if burn_in > 0 {
            preds.push(prev);
        }
        points.push(x);
    }
    Ok(AttractorSample {
        points,
        predecessors: (burn_in > 0).then_some(preds),
        burn_in,
        eps: sys.attractor_eps(burn_in),
    })
}

/// Anchor `x₀` followed by preimages `x₋₁ … x₋ₙ`.
#[derive(Debug, Clone, Serialize)]
pub struct BackwardOrbit {
    pub points: Vec<DVector<f64>>,
    /// `|f(x₋ₖ) − x₋ₖ₊₁|` for `k = 1..n`.
    pub residuals: Vec<f64>,
}

impl BackwardOrbit {
    pub fn anchor(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn depth(&self) -> usize {
        self.points.len() - 1
    }

    /// `x₋ₖ`.
    pub fn at(&self, k: usize) -> &DVector<f64> {
        &self.points[k]
    }

    /// Points in forward order `x₋ₙ … x₀`.
    pub fn forward(&self) -> Vec<DVector<f64>> {
        self.points.iter().rev().cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct InverseOptions<'a> {
    pub tolerance: f64,
    pub use_known: bool,
    pub sample: Option<&'a AttractorSample>,
    /// Maximum distance from the sample for a preimage to count as lying on
    /// the attractor.
    pub attractor_tol: f64,
    pub seeds: usize,
    pub max_iter: usize,
}

impl Default for InverseOptions<'_> {
    fn default() -> Self {
        InverseOptions {
            tolerance: 1e-10,
            use_known: true,
            sample: None,
            attractor_tol: 0.05,
            seeds: 8,
            max_iter: 50,
        }
    }
}

pub fn inverse_on_attractor(
    sys: &dyn DynamicalSystem,
    y: &[f64],
    depth: usize,
    opts: &InverseOptions<'_>,
) -> Result<BackwardOrbit> {
    let mut points = Vec::with_capacity(depth + 1);
    let mut residuals = Vec::with_capacity(depth);
    points.push(DVector::from_column_slice(y));
    if opts.use_known {
        if let Some(pre) = sys.known_backward_orbit(y, depth) {
            let mut ok = true;
            for p in &pre {
                let target = points.last().unwrap();
                let r = sys.distance(sys.map(p).as_slice(), target.as_slice());
                if r > opts.tolerance * target.norm().max(1.0) {
                    ok = false;
                    break;
                }
                residuals.push(r);
                points.push(p.clone());
            }
            if ok {
                return Ok(BackwardOrbit { points, residuals });
            }
            points.truncate(1);
            residuals.clear();
        }
    }
    for _ in 0..depth {
        let target = points.last().unwrap().clone();
        let pre = match (opts.use_known, sys.known_inverse(target.as_slice())) {
            (true, Some(p)) => p,
            _ => newton_preimage(sys, target.as_slice(), opts)?,
        };
        let r = sys.distance(sys.map(&pre).as_slice(), target.as_slice());
        if r > opts.tolerance * target.norm().max(1.0) {
            return Err(Error::NoPreimageFound {
                point: target.as_slice().to_vec(),
            });
        }
        residuals.push(r);
        points.push(pre);
    }
    Ok(BackwardOrbit { points, residuals })
}

/// Damped Newton on `f(x) ⊖ y = 0` from the predecessors of the nearest
/// sample points. Step halving until the residual decreases.
fn newton_preimage(
    sys: &dyn DynamicalSystem,
    y: &[f64],
    opts: &InverseOptions<'_>,
) -> Result<DVector<f64>> {
    let sample = opts.sample.ok_or_else(|| {
        Error::InvalidArgument("Newton inversion needs an attractor sample".into())
    })?;
    let preds = sample.predecessors.as_ref().ok_or_else(|| {
        Error::InvalidArgument("attractor sample was drawn without burn-in".into())
    })?;
    let mut found: Vec<DVector<f64>> = Vec::new();
    for idx in sample.nearest(sys, y, opts.seeds) {
        let Some(x) = newton_solve(sys, &preds[idx], y, opts.tolerance * 1e-2, opts.max_iter)
        else {
            continue;
        };
        if !sys.basin().contains(x.as_slice()) {
            continue;
        }
        if sample.distance_to(sys, x.as_slice()) > opts.attractor_tol {
            continue;
        }
        if let Some(other) = found
            .iter()
            .find(|p| sys.distance(p.as_slice(), x.as_slice()) > 1e-8)
        {
            return Err(Error::BranchAmbiguous {
                a: other.as_slice().to_vec(),
                b: x.as_slice().to_vec(),
            });
        }
        if found.is_empty() {
            found.push(x);
        }
    }
    found.pop().ok_or_else(|| Error::NoPreimageFound {
        point: y.to_vec(),
    })
}

/// Newton solve of `f(x) = y` from `x0`; `None` on stagnation.
pub fn newton_solve(
    sys: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    y: &[f64],
    tol: f64,
    max_iter: usize,
) -> Option<DVector<f64>> {
    let mut x = x0.clone();
    let resid = |x: &DVector<f64>| sys.displacement(y, sys.map(x).as_slice());
    let mut r = resid(&x);
    let mut rn = r.norm();
    for _ in 0..max_iter {
        if rn <= tol {
            return Some(x);
        }
        let df = sys.deriv(x.as_slice());
        let step = df.lu().solve(&(-&r))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = sys.translate(x.as_slice(), (&step * t).as_slice());
            let rt = resid(&trial);
            if rt.norm() < rn {
                x = trial;
                r = rt;
                rn = r.norm();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return (rn <= tol).then_some(x);
        }
    }
    (rn <= tol).then_some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperbolicityMode {
    Partial,
    Uniform,
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperbolicityReport {
    pub mode: HyperbolicityMode,
    pub lambda0: f64,
    /// `min |Df ξ| / |ξ|` over `ξ ∈ Eᵘ` and all samples.
    pub min_expansion: f64,
    /// `max |Df η| / |η|` over `η ∈ Eᶜˢ` and all samples.
    pub max_contraction: f64,
    pub required_expansion: f64,
    pub required_contraction: f64,
    pub pass: bool,
    pub worst_expansion_point: Vec<f64>,
    pub worst_contraction_point: Vec<f64>,
    pub samples: usize,
    pub failures: usize,
}

/// Check the hyperbolicity rates of a splitting field on a point set.
/// Rates on `Eᵘ` use `norm`; `Eᶜˢ` always carries the Euclidean norm.
pub fn verify_hyperbolicity(
    sys: &dyn DynamicalSystem,
    field: &dyn SplittingProvider,
    lambda0: f64,
    mode: HyperbolicityMode,
    points: &[DVector<f64>],
    norm: UnstableNorm,
) -> HyperbolicityReport {
    let req_exp = lambda0.exp() * (1.0 - 1e-12);
    let req_con = match mode {
        HyperbolicityMode::Partial => 1.0,
        HyperbolicityMode::Uniform => (-lambda0).exp(),
    } * (1.0 + 1e-12);
    let mut rep = HyperbolicityReport {
        mode,
        lambda0,
        min_expansion: f64::INFINITY,
        max_contraction: 0.0,
        required_expansion: req_exp,
        required_contraction: req_con,
        pass: true,
        worst_expansion_point: Vec::new(),
        worst_contraction_point: Vec::new(),
        samples: 0,
        failures: 0,
    };
    for x in points {
        let (fx, df) = sys.map_and_deriv(x.as_slice());
        let (Ok(s0), Ok(s1)) = (
            field.splitting_at(sys, x.as_slice()),
            field.splitting_at(sys, fx.as_slice()),
        ) else {
            rep.failures += 1;
            rep.pass = false;
            continue;
        };
        rep.samples += 1;
        let exp = match unstable_block(&df, &s0, &s1, norm) {
            Some(b) => min_singular(&b),
            None => 0.0,
        };
        let con = op_norm(&(&df * &s0.ecs));
        if exp < rep.min_expansion {
            rep.min_expansion = exp;
            rep.worst_expansion_point = x.as_slice().to_vec();
        }
        if con > rep.max_contraction {
            rep.max_contraction = con;
            rep.worst_contraction_point = x.as_slice().to_vec();
        }
    }
    rep.pass &= rep.samples > 0
        && rep.min_expansion >= req_exp
        && rep.max_contraction <= req_con;
    rep
}

/// Largest relative deviation between `deriv` and central differences of the
/// map over random basin points.
pub fn derivative_consistency(sys: &dyn DynamicalSystem, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = sys.dim();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let u: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let x = sys.seed_box().from_unit(&u);
        let df = sys.deriv(x.as_slice());
        let mut fd = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = sys.displacement(sys.map(&xm).as_slice(), sys.map(&xp).as_slice()) / (2.0 * h);
            fd.set_column(j, &col);
        }
        let scale = df.norm().max(1e-300);
        worst = worst.max((&fd - &df).norm() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::{AnalyticSplitting, SwappedSplitting};

    #[test]
    fn zero_iterations_returns_start() {
        let s = Solenoid::classic();
        let seg = iterate(&s, &[0.3, 0.1, 0.2], 0).unwrap();
        assert_eq!(seg.len(), 1);
        assert_eq!(seg.points[0].as_slice(), &[0.3, 0.1, 0.2]);
    }

    #[test]
    fn fat_cat_fixed_torus_point() {
        let c = FatCat::default();
        let seg = iterate(&c, &[0.0, 0.0, 0.3], 2).unwrap();
        let last = &seg.points[2];
        assert_eq!(last[0], 0.0);
        assert_eq!(last[1], 0.0);
        assert!((last[2] - 0.3 * 0.04).abs() < 1e-16);
    }

    #[test]
    fn escape_is_reported() {
        let l = LinearSystem::new(vec![1e80]);
        let err = iterate(&l, &[1.0], 3).unwrap_err();
        assert!(matches!(err, Error::OrbitEscapesBasin { step: 2, .. }));
    }

    #[test]
    fn raw_seeds_without_burn_in() {
        let s = Solenoid::classic();
        let a = attractor_sample(&s, 5, 0, 7).unwrap();
        assert!(a.predecessors.is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let want = s.basin().from_unit(&u);
        assert!((&a.points[0] - want).norm() < 1e-15);
    }

    #[test]
    fn fat_cat_sample_fiber_contracted() {
        let c = FatCat::default();
        let a = attractor_sample(&c, 100, 30, 1).unwrap();
        let bound = 0.5 * 0.2f64.powi(30);
        assert!(a.points.iter().all(|p| p[2].abs() <= bound * (1.0 + 1e-12)));
    }

    #[test]
    fn solenoid_preimage_from_fiber() {
        let s = Solenoid::classic();
        let a = attractor_sample(&s, 50, 40, 3).unwrap();
        let x = &a.points[11];
        let y = s.map(x);
        let b = inverse_on_attractor(&s, y.as_slice(), 1, &InverseOptions::default()).unwrap();
        assert!(s.distance(b.at(1).as_slice(), x.as_slice()) < 1e-12);
        // Newton path agrees.
        let opts = InverseOptions {
            use_known: false,
            sample: Some(&a),
            ..Default::default()
        };
        let b2 = inverse_on_attractor(&s, y.as_slice(), 1, &opts).unwrap();
        assert!(s.distance(b2.at(1).as_slice(), x.as_slice()) < 1e-9);
    }

    #[test]
    fn solenoid_half_turn_branch() {
        let s = Solenoid::classic();
        // A point on the attractor at θ = 1/2 comes from θ = 1/4 or 3/4.
        // Attractor point over θ = 1/2 along the backward itinerary θ₋ₖ = 2⁻ᵏ⁻¹.
        let mut z = [0.0, 0.0];
        let mut w = 1.0;
        for k in 1..60 {
            let a = 2.0 * std::f64::consts::PI * 0.5f64.powi(k + 1);
            z[0] += w * 0.5 * a.cos();
            z[1] += w * 0.5 * a.sin();
            w *= 0.25;
        }
        let y = DVector::from_vec(vec![0.5, z[0], z[1]]);
        let b = inverse_on_attractor(&s, y.as_slice(), 1, &InverseOptions::default()).unwrap();
        let t = b.at(1)[0];
        assert!((t - 0.25).abs() < 1e-9 || (t - 0.75).abs() < 1e-9);
        let [p0, p1] = s.preimages(y.as_slice());
        let chosen = if (t - p0[0]).abs() < 1e-12 { &p0 } else { &p1 };
        let other = if (t - p0[0]).abs() < 1e-12 { &p1 } else { &p0 };
        assert!(chosen[1].hypot(chosen[2]) <= s.tube_radius());
        assert!(!s.basin().contains(other.as_slice()));
    }

    #[test]
    fn fat_cat_fixed_point_backward() {
        let c = FatCat::default();
        let b = inverse_on_attractor(&c, &[0.0, 0.0, 0.0], 5, &InverseOptions::default()).unwrap();
        assert!(b.points.iter().all(|p| p.norm() == 0.0));
    }

    #[test]
    fn hyperbolicity_examples() {
        let l = LinearSystem::new(vec![2.0, 0.5]);
        let pts = vec![DVector::from_vec(vec![0.1, 0.2])];
        let r = verify_hyperbolicity(
            &l,
            &AnalyticSplitting,
            2f64.ln(),
            HyperbolicityMode::Uniform,
            &pts,
            UnstableNorm::Quotient,
        );
        assert!(r.pass);
        assert!((r.min_expansion - 2.0).abs() < 1e-15);
        assert!((r.max_contraction - 0.5).abs() < 1e-15);

        let s = Solenoid::classic();
        let a = attractor_sample(&s, 200, 40, 5).unwrap();
        let r = verify_hyperbolicity(
            &s,
            &AnalyticSplitting,
            2f64.ln() - 1e-6,
            HyperbolicityMode::Uniform,
            &a.points,
            UnstableNorm::Quotient,
        );
        assert!(r.pass, "{r:?}");
        assert!((r.max_contraction - 0.25).abs() < 1e-14);

        let c = FatCat::default();
        let a = attractor_sample(&c, 50, 10, 5).unwrap();
        let r = verify_hyperbolicity(
            &c,
            &SwappedSplitting(AnalyticSplitting),
            0.9,
            HyperbolicityMode::Uniform,
            &a.points,
            UnstableNorm::Quotient,
        );
        assert!(!r.pass);
        assert!(r.min_expansion < 1.0);
        assert!(!r.worst_expansion_point.is_empty());
    }

    #[test]
    fn derivatives_match_differences() {
        for name in ["solenoid", "warped-solenoid", "fat-cat"] {
            let s = builtin(name, None).unwrap();
            assert!(derivative_consistency(s.as_ref(), 100, 11) < 1e-5, "{name}");
        }
    }

    #[test]
    fn unknown_parameter_rejected() {
        let p = serde_json::json!({"contraction": 0.2, "bogus": 1});
        assert!(builtin("solenoid", Some(&p)).is_err());
        assert!(builtin("nope", None).is_err());
    }
}
