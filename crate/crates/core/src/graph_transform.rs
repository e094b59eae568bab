//! Charts along orbits and the graph transform.
//!
//! Along an orbit `x₀ … xₙ` each point gets a linear frame `Lᵢ` sending `Eᵘ`
//! to the first `dᵤ` axes and `Eᶜˢ` to the rest. The connecting maps
//! `gᵢ = Lᵢ₊₁ ∘ (f(xᵢ + ·) − xᵢ₊₁) ∘ Lᵢ⁻¹` split as `Λᵢ + Gᵢ` with `Λᵢ`
//! block diagonal. Unstable graphs `v : Bᵘ → Bˢ` are pushed forward, stable
//! graphs `w : Bˢ → Bᵘ` are pulled back.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynsys::{inverse_on_attractor, iterate, DynamicalSystem, InverseOptions};
use crate::error::{Error, Result};
use crate::linalg::{fit_slope, op_norm};
use crate::splitting::{Splitting, SplittingProvider};

/// Grid points per graph axis.
pub const GRID_POINTS: usize = 17;
/// Picard iteration cap for the graph-transform fixed point.
pub const PICARD_CAP: usize = 200;
/// Residual `|πᵘgᵢ(ξ, v(ξ)) − ξ̃|` accepted as converged.
pub const PICARD_TOL: f64 = 1e-12;
/// Lipschitz bound defining the graph classes.
pub const CLASS_LIP: f64 = 0.1;
/// Largest graph-domain dimension with a tensor grid (17³ nodes).
pub const MAX_GRID_DIM: usize = 3;

/// One connecting map `gᵢ : Bᵢ → ℝᵈ` in chart coordinates.
pub trait ConnectingMap: Send + Sync {
    fn dim(&self) -> usize;
    fn du(&self) -> usize;
    fn eval(&self, xi: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, xi: &DVector<f64>) -> DMatrix<f64>;
    /// Block-diagonal linear part `Λᵢ = Λᵢᵘ ⊕ Λᵢˢ`.
    fn linear(&self) -> &DMatrix<f64>;

    /// `Gᵢ = gᵢ − Λᵢ`.
    fn nonlinear(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.eval(xi) - self.linear() * xi
    }
}

/// `gᵢ = Λᵢ`.
#[derive(Debug, Clone)]
pub struct LinearConnectingMap {
    lin: DMatrix<f64>,
    du: usize,
}

impl LinearConnectingMap {
    pub fn new(lin: DMatrix<f64>, du: usize) -> Self {
        LinearConnectingMap { lin, du }
    }
}

impl ConnectingMap for LinearConnectingMap {
    fn dim(&self) -> usize {
        self.lin.nrows()
    }
    fn du(&self) -> usize {
        self.du
    }
    fn eval(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.lin * xi
    }
    fn jacobian(&self, _xi: &DVector<f64>) -> DMatrix<f64> {
        self.lin.clone()
    }
    fn linear(&self) -> &DMatrix<f64> {
        &self.lin
    }
}

/// Connecting map of a system between two consecutive orbit points.
pub struct OrbitConnectingMap {
    sys: Arc<dyn DynamicalSystem>,
    from: DVector<f64>,
    to: DVector<f64>,
    frame_inv: DMatrix<f64>,
    next_frame: DMatrix<f64>,
    lin: DMatrix<f64>,
    du: usize,
}

impl OrbitConnectingMap {
    pub fn new(
        sys: Arc<dyn DynamicalSystem>,
        from: DVector<f64>,
        to: DVector<f64>,
        frame_inv: DMatrix<f64>,
        next_frame: DMatrix<f64>,
        du: usize,
    ) -> Self {
        let a = &next_frame * sys.deriv(from.as_slice()) * &frame_inv;
        let lin = block_diagonal(&a, du);
        OrbitConnectingMap {
            sys,
            from,
            to,
            frame_inv,
            next_frame,
            lin,
            du,
        }
    }
}

impl ConnectingMap for OrbitConnectingMap {
    fn dim(&self) -> usize {
        self.lin.nrows()
    }
    fn du(&self) -> usize {
        self.du
    }
    fn eval(&self, xi: &DVector<f64>) -> DVector<f64> {
        let p = self
            .sys
            .translate(self.from.as_slice(), (&self.frame_inv * xi).as_slice());
        let fp = self.sys.map(&p);
        &self.next_frame * self.sys.displacement(self.to.as_slice(), fp.as_slice())
    }
    fn jacobian(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let p = self
            .sys
            .translate(self.from.as_slice(), (&self.frame_inv * xi).as_slice());
        &self.next_frame * self.sys.deriv(p.as_slice()) * &self.frame_inv
    }
    fn linear(&self) -> &DMatrix<f64> {
        &self.lin
    }
}

fn block_diagonal(a: &DMatrix<f64>, du: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let mut out = DMatrix::zeros(d, d);
    out.view_mut((0, 0), (du, du))
        .copy_from(&a.view((0, 0), (du, du)));
    out.view_mut((du, du), (d - du, d - du))
        .copy_from(&a.view((du, du), (d - du, d - du)));
    out
}

/// How chart frames scale the unstable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    /// `L⁻¹ = [U(NᵀU)⁻¹ | S]`: unstable coordinates are the quotient
    /// coordinates `Nᵀv`, so `Λᵘ` is the quotient-norm cocycle.
    #[default]
    Quotient,
    /// `L⁻¹ = [U | S]` with orthonormal bundle bases: `L` is an isometry on
    /// each bundle.
    Orthonormal,
}

/// `L⁻¹` for a splitting.
pub fn chart_frame_inv(sp: &Splitting, kind: FrameKind) -> Result<DMatrix<f64>> {
    let d = sp.dim();
    let du = sp.du();
    let mut m = DMatrix::zeros(d, d);
    let u = match kind {
        FrameKind::Orthonormal => sp.eu.clone(),
        FrameKind::Quotient => {
            let n = sp.normal_u();
            let inv = (n.transpose() * &sp.eu)
                .try_inverse()
                .ok_or_else(|| Error::DimensionMismatch("Eᵘ parallel to Eᶜˢ".into()))?;
            &sp.eu * inv
        }
    };
    m.columns_mut(0, du).copy_from(&u);
    m.columns_mut(du, d - du).copy_from(&sp.ecs);
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartOptions {
    /// Required rate; `None` takes 0.95 of the weakest measured rate of `Λ`.
    pub lambda1: Option<f64>,
    pub delta1: f64,
    pub delta2: f64,
    /// Upper bound on the chart radii.
    pub r_max: f64,
    /// Random points per ball when estimating `sup‖DGᵢ‖` and `Lip(DGᵢ)`.
    pub samples: usize,
    /// Bisection steps for the maximal radius.
    pub bisection: usize,
    pub seed: u64,
    pub frame: FrameKind,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            lambda1: None,
            delta1: 0.0,
            delta2: 0.05,
            r_max: 0.5,
            samples: 16,
            bisection: 40,
            seed: 0,
            frame: FrameKind::Quotient,
        }
    }
}

/// Measured quantities of one connecting map.
#[derive(Debug, Clone, Serialize)]
pub struct ChartStepReport {
    pub lu_inv_norm: f64,
    pub ls_norm: f64,
    /// Largest radius on which the sampled `‖DGᵢ‖` stays below `δ₂`.
    pub radius_limit: f64,
    pub g_at_zero: f64,
    pub dg_sup: f64,
    pub lip_dg: f64,
    pub dg_norm: f64,
}

/// Chart data along an orbit segment of `n` maps and `n + 1` points.
#[derive(Clone)]
pub struct ChartSequence {
    pub maps: Vec<Arc<dyn ConnectingMap>>,
    /// Orbit points, when the charts come from a system.
    pub anchors: Vec<DVector<f64>>,
    /// `Lᵢ⁻¹`, when the charts come from a system.
    pub frames_inv: Vec<DMatrix<f64>>,
    pub radii: Vec<f64>,
    pub lambda1: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// `ℓᵢ`, bounds on `Lip(DGᵢ)`.
    pub ell: Vec<f64>,
    /// `l'ᵢ`, bounds on `‖Dgᵢ‖`.
    pub ell_prime: Vec<f64>,
    pub steps: Vec<ChartStepReport>,
    pub du: usize,
    pub dim: usize,
}

impl std::fmt::Debug for ChartSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartSequence")
            .field("len", &self.len())
            .field("radii", &self.radii)
            .field("lambda1", &self.lambda1)
            .field("delta1", &self.delta1)
            .field("delta2", &self.delta2)
            .finish()
    }
}

/// Build charts along `points` (forward order) and verify conditions
/// (I)–(IV). Radii are the largest admissible ones up to `opts.r_max`.
pub fn build_charts(
    sys: &Arc<dyn DynamicalSystem>,
    points: &[DVector<f64>],
    provider: &dyn SplittingProvider,
    opts: &ChartOptions,
) -> Result<ChartSequence> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("charts need at least two points".into()));
    }
    let mut frames_inv = Vec::with_capacity(points.len());
    let mut du = None;
    for p in points {
        let sp = provider.splitting_at(sys.as_ref(), p.as_slice())?;
        if *du.get_or_insert(sp.du()) != sp.du() {
            return Err(Error::DimensionMismatch("unstable dimension changes along orbit".into()));
        }
        frames_inv.push(chart_frame_inv(&sp, opts.frame)?);
    }
    let du = du.unwrap();
    let frames: Vec<DMatrix<f64>> = frames_inv
        .iter()
        .map(|m| {
            m.clone()
                .try_inverse()
                .ok_or_else(|| Error::DimensionMismatch("singular chart frame".into()))
        })
        .collect::<Result<_>>()?;
    let maps: Vec<Arc<dyn ConnectingMap>> = (0..points.len() - 1)
        .map(|i| {
            Arc::new(OrbitConnectingMap::new(
                sys.clone(),
                points[i].clone(),
                points[i + 1].clone(),
                frames_inv[i].clone(),
                frames[i + 1].clone(),
                du,
            )) as Arc<dyn ConnectingMap>
        })
        .collect();
    let mut charts = ChartSequence::assemble(maps, opts)?;
    charts.anchors = points.to_vec();
    charts.frames_inv = frames_inv;
    Ok(charts)
}

impl ChartSequence {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn ds(&self) -> usize {
        self.dim - self.du
    }

    /// Verify conditions (I)–(IV) for arbitrary connecting maps and choose
    /// radii and the constants `ℓᵢ`, `l'ᵢ`.
    pub fn assemble(maps: Vec<Arc<dyn ConnectingMap>>, opts: &ChartOptions) -> Result<Self> {
        let n = maps.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty chart sequence".into()));
        }
        let dim = maps[0].dim();
        let du = maps[0].du();
        let ds = dim - du;

        let mut lu = Vec::with_capacity(n);
        let mut ls = Vec::with_capacity(n);
        for (i, g) in maps.iter().enumerate() {
            let lin = g.linear();
            let a_uu = lin.view((0, 0), (du, du)).into_owned();
            let inv = a_uu.try_inverse().ok_or(Error::ConditionsViolated {
                condition: "I",
                step: i,
                detail: "Λᵘ is singular".into(),
            })?;
            lu.push(op_norm(&inv));
            ls.push(op_norm(&lin.view((du, du), (ds, ds)).into_owned()));
        }
        let weakest = lu
            .iter()
            .chain(ls.iter())
            .map(|v| -v.ln())
            .fold(f64::INFINITY, f64::min);
        let lambda1 = opts.lambda1.unwrap_or(0.95 * weakest);
        if !(lambda1 > 0.0) {
            return Err(Error::ConditionsViolated {
                condition: "I",
                step: 0,
                detail: format!("no positive rate: weakest measured rate {weakest}"),
            });
        }
        let bound = (-lambda1).exp() * (1.0 + 1e-9);
        for i in 0..n {
            if lu[i] > bound || ls[i] > bound {
                return Err(Error::ConditionsViolated {
                    condition: "I",
                    step: i,
                    detail: format!(
                        "‖(Λᵘ)⁻¹‖ = {:.6}, ‖Λˢ‖ = {:.6}, bound e^(-λ₁) = {:.6}",
                        lu[i], ls[i], bound
                    ),
                });
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let probes: Vec<Vec<DVector<f64>>> = (0..n)
            .map(|_| unit_probes(du, ds, opts.samples, &mut rng))
            .collect();

        let delta2 = opts.delta2;
        let dg_sup = |g: &dyn ConnectingMap, pts: &[DVector<f64>], rho: f64| -> f64 {
            pts.iter()
                .map(|p| op_norm(&(g.jacobian(&(p * rho)) - g.linear())))
                .fold(0.0, f64::max)
        };
        let admissible = |s: f64| s < delta2 || s <= 1e-12;

        let mut limit = Vec::with_capacity(n + 1);
        for (i, g) in maps.iter().enumerate() {
            let pts = &probes[i];
            if admissible(dg_sup(g.as_ref(), pts, opts.r_max)) {
                limit.push(opts.r_max);
                continue;
            }
            let mut lo = opts.r_max * 1e-10;
            let s0 = dg_sup(g.as_ref(), pts, lo);
            if !admissible(s0) {
                return Err(Error::ConditionsViolated {
                    condition: "II",
                    step: i,
                    detail: format!("‖DG‖ = {s0:.3e} ≥ δ₂ = {delta2} at the chart centre"),
                });
            }
            let mut hi = opts.r_max;
            for _ in 0..opts.bisection {
                let mid = (lo * hi).sqrt();
                if admissible(dg_sup(g.as_ref(), pts, mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            limit.push(lo);
        }
        limit.push(limit[n - 1]);

        let radii: Vec<f64> = (0..=n)
            .map(|i| {
                (0..=n)
                    .map(|j| limit[j] * (opts.delta1 * (i as f64 - j as f64).abs()).exp())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();

        let mut steps = Vec::with_capacity(n);
        let mut lip_raw = Vec::with_capacity(n);
        let mut dg_raw = Vec::with_capacity(n);
        for (i, g) in maps.iter().enumerate() {
            let r = radii[i];
            let zero = DVector::zeros(dim);
            let g0 = g.eval(&zero).norm();
            if !(g0 < delta2 * radii[i + 1] || g0 <= 1e-12) {
                return Err(Error::ConditionsViolated {
                    condition: "II",
                    step: i,
                    detail: format!("|G(0)| = {g0:.3e} ≥ δ₂·r = {:.3e}", delta2 * radii[i + 1]),
                });
            }
            let pts = &probes[i];
            let sup = dg_sup(g.as_ref(), pts, r);
            let mut lip: f64 = 0.0;
            let mut dgn: f64 = 0.0;
            for (k, p) in pts.iter().enumerate() {
                let a = p * r;
                let b = &pts[(k + 1) % pts.len()] * (0.5 * r) + &a * 0.5;
                let ja = g.jacobian(&a);
                let jb = g.jacobian(&b);
                let dist = (&a - &b).norm();
                if dist > 0.0 {
                    lip = lip.max(op_norm(&(&ja - &jb)) / dist);
                }
                dgn = dgn.max(op_norm(&ja));
            }
            lip_raw.push(lip * 1.05 + 1e-12);
            dg_raw.push(dgn * 1.05 + 1e-12);
            steps.push(ChartStepReport {
                lu_inv_norm: lu[i],
                ls_norm: ls[i],
                radius_limit: limit[i],
                g_at_zero: g0,
                dg_sup: sup,
                lip_dg: lip,
                dg_norm: dgn,
            });
        }
        let smooth = |raw: &[f64]| -> Vec<f64> {
            (0..raw.len())
                .map(|i| {
                    (0..raw.len())
                        .map(|j| raw[j] * (-opts.delta1 * (i as f64 - j as f64).abs()).exp())
                        .fold(0.0, f64::max)
                })
                .collect()
        };
        Ok(ChartSequence {
            maps,
            anchors: Vec::new(),
            frames_inv: Vec::new(),
            radii,
            lambda1,
            delta1: opts.delta1,
            delta2,
            ell: smooth(&lip_raw),
            ell_prime: smooth(&dg_raw),
            steps,
            du,
            dim,
        })
    }

    /// Charts agreeing with `self` on maps `0..n` and equal to their linear
    /// parts beyond.
    pub fn with_linear_tail(&self, n: usize) -> ChartSequence {
        let mut out = self.clone();
        for i in n.min(self.len())..self.len() {
            out.maps[i] = Arc::new(LinearConnectingMap::new(
                self.maps[i].linear().clone(),
                self.du,
            ));
        }
        out
    }

    /// Restrict to maps `from..to` (points `from..=to`).
    pub fn slice(&self, from: usize, to: usize) -> ChartSequence {
        let mut out = self.clone();
        out.maps = self.maps[from..to].to_vec();
        out.radii = self.radii[from..=to].to_vec();
        out.ell = self.ell[from..to].to_vec();
        out.ell_prime = self.ell_prime[from..to].to_vec();
        out.steps = self.steps[from..to].to_vec();
        if !self.anchors.is_empty() {
            out.anchors = self.anchors[from..=to].to_vec();
            out.frames_inv = self.frames_inv[from..=to].to_vec();
        }
        out
    }
}

/// Probe points in the unit product ball `Bᵘ(1) × Bˢ(1)`: the centre, the
/// axis endpoints and `m` uniform points.
fn unit_probes(du: usize, ds: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let d = du + ds;
    let mut out = vec![DVector::zeros(d)];
    for k in 0..d {
        for s in [-1.0, 1.0] {
            let mut v = DVector::zeros(d);
            v[k] = s;
            out.push(v);
        }
    }
    let ball = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let r = rng.gen::<f64>().powf(1.0 / n as f64);
        v.iter_mut().for_each(|x| *x *= r / norm);
        v
    };
    for _ in 0..m {
        let mut v = ball(du, rng);
        v.extend(ball(ds, rng));
        out.push(DVector::from_vec(v));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchKind {
    /// `v : Bᵘ → Bˢ`.
    Unstable,
    /// `w : Bˢ → Bᵘ`.
    Stable,
}

/// A graph over a cube of half-width `radius` in chart coordinates, sampled
/// on a tensor grid with values and derivatives.
///
/// One-dimensional graphs interpolate by cubic Hermite splines through the
/// stored derivatives; higher-dimensional ones multilinearly.
#[derive(Debug, Clone, Serialize)]
pub struct GraphPatch {
    pub kind: PatchKind,
    pub anchor: usize,
    pub radius: f64,
    pub domain_dim: usize,
    pub range_dim: usize,
    pub points_per_axis: usize,
    pub values: Vec<DVector<f64>>,
    pub derivs: Vec<DMatrix<f64>>,
    /// Chart base point and `L⁻¹`, for embedding.
    pub base: Option<DVector<f64>>,
    pub frame_inv: Option<DMatrix<f64>>,
    /// Smallest observed `|πᵘgᵢ(y₂) − πᵘgᵢ(y₁)| / |πᵘy₂ − πᵘy₁|` (unstable)
    /// or largest stable contraction ratio (stable) in the step that
    /// produced this patch.
    pub step_ratio: Option<f64>,
}

impl GraphPatch {
    fn empty(kind: PatchKind, anchor: usize, radius: f64, domain: usize, range: usize) -> Result<Self> {
        if domain == 0 || domain > MAX_GRID_DIM {
            return Err(Error::InvalidArgument(format!(
                "graph domain of dimension {domain} is not supported (1..={MAX_GRID_DIM})"
            )));
        }
        Ok(GraphPatch {
            kind,
            anchor,
            radius,
            domain_dim: domain,
            range_dim: range,
            points_per_axis: GRID_POINTS,
            values: Vec::new(),
            derivs: Vec::new(),
            base: None,
            frame_inv: None,
            step_ratio: None,
        })
    }

    /// Graph of `f` at chart index `i`; `f(ξ)` returns value and derivative.
    pub fn from_fn<F>(charts: &ChartSequence, kind: PatchKind, i: usize, f: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    {
        let (domain, range) = match kind {
            PatchKind::Unstable => (charts.du, charts.ds()),
            PatchKind::Stable => (charts.ds(), charts.du),
        };
        let mut p = GraphPatch::empty(kind, i, charts.radii[i], domain, range)?;
        for k in 0..p.num_nodes() {
            let (v, dv) = f(&p.node(k));
            p.values.push(v);
            p.derivs.push(dv);
        }
        p.attach(charts, i);
        Ok(p)
    }

    pub fn zero(charts: &ChartSequence, kind: PatchKind, i: usize) -> Result<Self> {
        let (domain, range) = match kind {
            PatchKind::Unstable => (charts.du, charts.ds()),
            PatchKind::Stable => (charts.ds(), charts.du),
        };
        GraphPatch::from_fn(charts, kind, i, |_| {
            (DVector::zeros(range), DMatrix::zeros(range, domain))
        })
    }

    fn attach(&mut self, charts: &ChartSequence, i: usize) {
        if !charts.anchors.is_empty() {
            self.base = Some(charts.anchors[i].clone());
            self.frame_inv = Some(charts.frames_inv[i].clone());
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.points_per_axis.pow(self.domain_dim as u32)
    }

    fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.points_per_axis - 1) as f64
    }

    /// Grid coordinates of node `k` (axis 0 varies fastest).
    pub fn node(&self, k: usize) -> DVector<f64> {
        let n = self.points_per_axis;
        let h = self.spacing();
        let mut rem = k;
        DVector::from_iterator(
            self.domain_dim,
            (0..self.domain_dim).map(|_| {
                let m = rem % n;
                rem /= n;
                -self.radius + h * m as f64
            }),
        )
    }

    /// Index of the grid node at the domain centre.
    pub fn center_index(&self) -> usize {
        let n = self.points_per_axis;
        let c = n / 2;
        (0..self.domain_dim).map(|a| c * n.pow(a as u32)).sum()
    }

    /// Value and derivative at `ξ`; extrapolates outside the grid.
    pub fn eval(&self, xi: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.points_per_axis;
        let h = self.spacing();
        if self.domain_dim == 1 {
            let s = (xi[0] + self.radius) / h;
            let c = (s.floor().max(0.0) as usize).min(n - 2);
            let t = s - c as f64;
            let (v0, v1) = (&self.values[c], &self.values[c + 1]);
            let (m0, m1) = (self.derivs[c].column(0), self.derivs[c + 1].column(0));
            let t2 = t * t;
            let t3 = t2 * t;
            let val = v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
                + m0 * (h * (t3 - 2.0 * t2 + t))
                + v1 * (-2.0 * t3 + 3.0 * t2)
                + m1 * (h * (t3 - t2));
            let der = (v0 * (6.0 * t2 - 6.0 * t) + v1 * (6.0 * t - 6.0 * t2)) / h
                + m0 * (3.0 * t2 - 4.0 * t + 1.0)
                + m1 * (3.0 * t2 - 2.0 * t);
            return (val, DMatrix::from_column_slice(self.range_dim, 1, der.as_slice()));
        }
        let mut cells = Vec::with_capacity(self.domain_dim);
        for a in 0..self.domain_dim {
            let s = (xi[a] + self.radius) / h;
            let c = (s.floor().max(0.0) as usize).min(n - 2);
            cells.push((c, s - c as f64));
        }
        let mut val = DVector::zeros(self.range_dim);
        let mut der = DMatrix::zeros(self.range_dim, self.domain_dim);
        for corner in 0..(1usize << self.domain_dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for (a, &(c, t)) in cells.iter().enumerate() {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { t } else { 1.0 - t };
                idx += (c + bit) * n.pow(a as u32);
            }
            val += &self.values[idx] * w;
            der += &self.derivs[idx] * w;
        }
        (val, der)
    }

    pub fn value_at_zero(&self) -> DVector<f64> {
        self.eval(&DVector::zeros(self.domain_dim)).0
    }

    pub fn deriv_at_zero(&self) -> DMatrix<f64> {
        self.eval(&DVector::zeros(self.domain_dim)).1
    }

    /// Largest stored `‖Dv‖` and neighbour difference quotient.
    pub fn lip_estimate(&self) -> f64 {
        let mut lip = self.derivs.iter().map(op_norm).fold(0.0, f64::max);
        let n = self.points_per_axis;
        let h = self.spacing();
        for k in 0..self.num_nodes() {
            for a in 0..self.domain_dim {
                let stride = n.pow(a as u32);
                if (k / stride) % n + 1 < n {
                    let q = (&self.values[k + stride] - &self.values[k]).norm() / h;
                    lip = lip.max(q);
                }
            }
        }
        lip
    }

    /// Membership in the class `|v(0)| ≤ r/2`, `Lip(v) ≤ 1/10`.
    pub fn in_class(&self) -> bool {
        self.value_at_zero().norm() <= 0.5 * self.radius * (1.0 + 1e-9)
            && self.lip_estimate() <= CLASS_LIP * (1.0 + 1e-9)
    }

    pub fn c0_distance(&self, other: &GraphPatch) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn c1_distance(&self, other: &GraphPatch) -> f64 {
        self.derivs
            .iter()
            .zip(&other.derivs)
            .map(|(a, b)| op_norm(&(a - b)))
            .fold(0.0, f64::max)
    }

    /// C¹ distance `max(‖·‖_C⁰, ‖D·‖_C⁰)` after resampling `other` on this
    /// grid.
    pub fn c1_distance_resampled(&self, other: &GraphPatch) -> f64 {
        if self.radius == other.radius && self.values.len() == other.values.len() {
            return self.c0_distance(other).max(self.c1_distance(other));
        }
        let mut d: f64 = 0.0;
        for k in 0..self.num_nodes() {
            let (v, dv) = other.eval(&self.node(k));
            d = d.max((&self.values[k] - v).norm());
            d = d.max(op_norm(&(&self.derivs[k] - dv)));
        }
        d
    }

    /// Chart coordinates of the graph point over `ξ`.
    pub fn chart_point(&self, xi: &DVector<f64>) -> DVector<f64> {
        let v = self.eval(xi).0;
        let (first, second) = match self.kind {
            PatchKind::Unstable => (xi.clone(), v),
            PatchKind::Stable => (v, xi.clone()),
        };
        let mut out = DVector::zeros(first.len() + second.len());
        out.rows_mut(0, first.len()).copy_from(&first);
        out.rows_mut(first.len(), second.len()).copy_from(&second);
        out
    }

    /// Ambient point over `ξ`.
    pub fn embed(&self, sys: &dyn DynamicalSystem, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let (base, linv) = self.base.as_ref().zip(self.frame_inv.as_ref()).ok_or_else(|| {
            Error::InvalidArgument("patch has no chart embedding".into())
        })?;
        Ok(sys.translate(base.as_slice(), (linv * self.chart_point(xi)).as_slice()))
    }

    /// Ambient tangent basis (`d × domain_dim`) over `ξ`.
    pub fn tangent(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let linv = self
            .frame_inv
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("patch has no chart embedding".into()))?;
        let dv = self.eval(xi).1;
        let k = self.domain_dim;
        let mut t = DMatrix::zeros(k + self.range_dim, k);
        match self.kind {
            PatchKind::Unstable => {
                t.view_mut((0, 0), (k, k)).fill_with_identity();
                t.view_mut((k, 0), (self.range_dim, k)).copy_from(&dv);
            }
            PatchKind::Stable => {
                t.view_mut((0, 0), (self.range_dim, k)).copy_from(&dv);
                t.view_mut((self.range_dim, 0), (k, k)).fill_with_identity();
            }
        }
        Ok(linv * t)
    }

    /// Rows `(node, ξ…, v…, Dv row-major…)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["node".to_string()];
        header.extend((0..self.domain_dim).map(|a| format!("xi{a}")));
        header.extend((0..self.range_dim).map(|a| format!("v{a}")));
        for r in 0..self.range_dim {
            for c in 0..self.domain_dim {
                header.push(format!("dv{r}_{c}"));
            }
        }
        out.write_record(&header)?;
        for k in 0..self.num_nodes() {
            let mut row = vec![k.to_string()];
            row.extend(self.node(k).iter().map(|x| format!("{x:e}")));
            row.extend(self.values[k].iter().map(|x| format!("{x:e}")));
            for r in 0..self.range_dim {
                for c in 0..self.domain_dim {
                    row.push(format!("{:e}", self.derivs[k][(r, c)]));
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn blocks(a: &DMatrix<f64>, du: usize) -> [DMatrix<f64>; 4] {
    let d = a.nrows();
    let ds = d - du;
    [
        a.view((0, 0), (du, du)).into_owned(),
        a.view((0, du), (du, ds)).into_owned(),
        a.view((du, 0), (ds, du)).into_owned(),
        a.view((du, du), (ds, ds)).into_owned(),
    ]
}

fn join(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// `Tᵢ(v)`: the graph of `gᵢ(graph v) ∩ Bᵢ₊₁`.
pub fn graph_transform_step(charts: &ChartSequence, i: usize, v: &GraphPatch) -> Result<GraphPatch> {
    if v.kind != PatchKind::Unstable || i >= charts.len() {
        return Err(Error::InvalidArgument("unstable patch and map index required".into()));
    }
    let g = charts.maps[i].as_ref();
    let du = charts.du;
    let lin = g.linear();
    let lu_inv = lin
        .view((0, 0), (du, du))
        .into_owned()
        .try_inverse()
        .ok_or(Error::FixedPointDiverged { step: i })?;
    let mut out = GraphPatch::empty(PatchKind::Unstable, i + 1, charts.radii[i + 1], du, charts.ds())?;
    let reach = charts.radii[i] * 1.5;
    let mut pre: Vec<DVector<f64>> = Vec::with_capacity(out.num_nodes());
    for k in 0..out.num_nodes() {
        let target = out.node(k);
        let mut xi = &lu_inv * &target;
        let mut converged = false;
        let mut gy = DVector::zeros(charts.dim);
        for _ in 0..PICARD_CAP {
            gy = g.eval(&join(&xi, &v.eval(&xi).0));
            let res = gy.rows(0, du) - &target;
            if res.norm() < PICARD_TOL {
                converged = true;
                break;
            }
            xi -= &lu_inv * res;
            if !xi.iter().all(|c| c.is_finite() && c.abs() <= reach) {
                break;
            }
        }
        if !converged {
            return Err(Error::FixedPointDiverged { step: i });
        }
        let (vx, dvx) = v.eval(&xi);
        let y = join(&xi, &vx);
        let [a_uu, a_us, a_su, a_ss] = blocks(&g.jacobian(&y), du);
        let m = (a_uu + a_us * &dvx)
            .try_inverse()
            .ok_or(Error::FixedPointDiverged { step: i })?;
        out.derivs.push((a_su + a_ss * dvx) * m);
        out.values.push(gy.rows(du, charts.ds()).into_owned());
        pre.push(xi);
    }

    let mut ratio = f64::INFINITY;
    let n = out.points_per_axis;
    for k in 0..out.num_nodes() {
        for a in 0..du {
            let stride = n.pow(a as u32);
            if (k / stride) % n + 1 < n {
                let num = (out.node(k + stride) - out.node(k)).norm();
                let den = (&pre[k + stride] - &pre[k]).norm();
                ratio = ratio.min(num / den);
            }
        }
    }
    let required = charts.lambda1.exp() - 1.1 * charts.delta2;
    if ratio < required * (1.0 - 1e-9) {
        return Err(Error::ConditionsViolated {
            condition: "expansion",
            step: i,
            detail: format!("unstable expansion {ratio:.6} below e^λ₁ − 1.1δ₂ = {required:.6}"),
        });
    }
    out.step_ratio = Some(ratio);
    out.attach(charts, i + 1);
    if !out.in_class() {
        return Err(Error::LeftClass(format!(
            "step {i}: |v(0)| = {:.3e}, Lip = {:.3e}, r = {:.3e}",
            out.value_at_zero().norm(),
            out.lip_estimate(),
            out.radius
        )));
    }
    Ok(out)
}

/// Backward transform: the stable graph at index `i` from the one at `i + 1`,
/// `graph wᵢ = gᵢ⁻¹(graph wᵢ₊₁) ∩ Bᵢ`.
pub fn stable_transform_step(charts: &ChartSequence, i: usize, w: &GraphPatch) -> Result<GraphPatch> {
    if w.kind != PatchKind::Stable || i >= charts.len() {
        return Err(Error::InvalidArgument("stable patch and map index required".into()));
    }
    let g = charts.maps[i].as_ref();
    let du = charts.du;
    let ds = charts.ds();
    let lu_inv = g
        .linear()
        .view((0, 0), (du, du))
        .into_owned()
        .try_inverse()
        .ok_or(Error::FixedPointDiverged { step: i })?;
    let mut out = GraphPatch::empty(PatchKind::Stable, i, charts.radii[i], ds, du)?;
    let reach = charts.radii[i] * 1.5;
    let mut images: Vec<DVector<f64>> = Vec::with_capacity(out.num_nodes());
    for k in 0..out.num_nodes() {
        let eta = out.node(k);
        let mut xi = DVector::zeros(du);
        let mut converged = false;
        for _ in 0..PICARD_CAP {
            let gy = g.eval(&join(&xi, &eta));
            let gs = gy.rows(du, ds).into_owned();
            let res = gy.rows(0, du) - w.eval(&gs).0;
            if res.norm() < PICARD_TOL {
                converged = true;
                break;
            }
            xi -= &lu_inv * res;
            if !xi.iter().all(|c| c.is_finite() && c.abs() <= reach) {
                break;
            }
        }
        if !converged {
            return Err(Error::FixedPointDiverged { step: i });
        }
        let y = join(&xi, &eta);
        let gs = g.eval(&y).rows(du, ds).into_owned();
        let dw_next = w.eval(&gs).1;
        let [a_uu, a_us, a_su, a_ss] = blocks(&g.jacobian(&y), du);
        let m = (a_uu - &dw_next * a_su)
            .try_inverse()
            .ok_or(Error::FixedPointDiverged { step: i })?;
        out.derivs.push(m * (dw_next * a_ss - a_us));
        out.values.push(xi);
        images.push(gs);
    }

    let mut ratio: f64 = 0.0;
    let n = out.points_per_axis;
    for k in 0..out.num_nodes() {
        for a in 0..ds {
            let stride = n.pow(a as u32);
            if (k / stride) % n + 1 < n {
                let num = (&images[k + stride] - &images[k]).norm();
                let den = (out.node(k + stride) - out.node(k)).norm();
                ratio = ratio.max(num / den);
            }
        }
    }
    let allowed = (-charts.lambda1).exp() + 2.0 * charts.delta2;
    if ratio > allowed * (1.0 + 1e-9) {
        return Err(Error::ConditionsViolated {
            condition: "stable-contraction",
            step: i,
            detail: format!("stable contraction {ratio:.6} above e^-λ₁ + 2δ₂ = {allowed:.6}"),
        });
    }
    out.step_ratio = Some(ratio);
    out.attach(charts, i);
    if !out.in_class() {
        return Err(Error::LeftClass(format!(
            "stable step {i}: |w(0)| = {:.3e}, Lip = {:.3e}",
            out.value_at_zero().norm(),
            out.lip_estimate()
        )));
    }
    Ok(out)
}

/// `T_{i+k−1} ∘ … ∘ Tᵢ (v)` with all intermediate graphs.
pub fn transform_sequence(
    charts: &ChartSequence,
    i: usize,
    v: &GraphPatch,
    k: usize,
) -> Result<Vec<GraphPatch>> {
    let mut out = Vec::with_capacity(k);
    let mut cur = v.clone();
    for j in i..i + k {
        cur = graph_transform_step(charts, j, &cur)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Stable graph at index 0 obtained from `w ≡ 0` at the end of the charts.
pub fn stable_graph_at_start(charts: &ChartSequence) -> Result<GraphPatch> {
    let mut w = GraphPatch::zero(charts, PatchKind::Stable, charts.len())?;
    for i in (0..charts.len()).rev() {
        w = stable_transform_step(charts, i, &w)?;
    }
    Ok(w)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldOptions {
    pub charts: ChartOptions,
    /// Extra depth of the comparison run for the convergence certificate.
    pub extra_depth: usize,
    /// Largest accepted `‖h_n − h_{n+extra}‖_C¹`.
    pub certificate_tol: f64,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        ManifoldOptions {
            charts: ChartOptions::default(),
            extra_depth: 5,
            certificate_tol: 1e-6,
        }
    }
}

/// A converged local manifold patch.
#[derive(Debug, Clone, Serialize)]
pub struct LocalManifold {
    pub patch: GraphPatch,
    /// `‖h_n − h_{n+extra}‖_C¹`.
    pub certificate: f64,
    pub lambda1: f64,
    pub depth: usize,
    /// `|h(0)|` and `‖Dh(0)‖`.
    pub offset: f64,
    pub tangency: f64,
}

/// Local unstable manifold at `x` as the limit of graph transforms of
/// `v ≡ 0` along the backward orbit of depth `n`. The radius is capped by
/// the chart conditions, so `patch.radius ≤ radius`.
pub fn unstable_manifold(
    sys: &Arc<dyn DynamicalSystem>,
    x: &[f64],
    depth: usize,
    radius: f64,
    provider: &dyn SplittingProvider,
    inverse: &InverseOptions<'_>,
    opts: &ManifoldOptions,
) -> Result<LocalManifold> {
    let total = depth + opts.extra_depth;
    let bwd = inverse_on_attractor(sys.as_ref(), x, total, inverse)?;
    let points = bwd.forward();
    let mut copts = opts.charts.clone();
    copts.r_max = radius;
    let charts = build_charts(sys, &points, provider, &copts)?;
    let run = |start: usize| -> Result<GraphPatch> {
        let v = GraphPatch::zero(&charts, PatchKind::Unstable, start)?;
        Ok(transform_sequence(&charts, start, &v, total - start)?
            .pop()
            .unwrap_or(v))
    };
    let short = run(opts.extra_depth)?;
    let long = run(0)?;
    let certificate = short.c1_distance_resampled(&long);
    if !(certificate < opts.certificate_tol) {
        return Err(Error::NotConverged(format!(
            "unstable manifold certificate {certificate:.3e}"
        )));
    }
    Ok(LocalManifold {
        offset: short.value_at_zero().norm(),
        tangency: op_norm(&short.deriv_at_zero()),
        patch: short,
        certificate,
        lambda1: charts.lambda1,
        depth,
    })
}

/// Local stable manifold at `x` from the backward graph transform seeded
/// with `w ≡ 0` at forward step `n`.
pub fn stable_manifold(
    sys: &Arc<dyn DynamicalSystem>,
    x: &[f64],
    depth: usize,
    radius: f64,
    provider: &dyn SplittingProvider,
    opts: &ManifoldOptions,
) -> Result<LocalManifold> {
    let total = depth + opts.extra_depth;
    let orbit = iterate(sys.as_ref(), x, total)?;
    let mut copts = opts.charts.clone();
    copts.r_max = radius;
    let charts = build_charts(sys, &orbit.points, provider, &copts)?;
    let short = stable_graph_at_start(&charts.slice(0, depth))?;
    let long = stable_graph_at_start(&charts)?;
    let certificate = short.c1_distance_resampled(&long);
    if !(certificate < opts.certificate_tol) {
        return Err(Error::NotConverged(format!(
            "stable manifold certificate {certificate:.3e}"
        )));
    }
    Ok(LocalManifold {
        offset: short.value_at_zero().norm(),
        tangency: op_norm(&short.deriv_at_zero()),
        patch: short,
        certificate,
        lambda1: charts.lambda1,
        depth,
    })
}

/// Decay table of `‖T₀ᵏv¹ − T₀ᵏv²‖` in C⁰ and C¹.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    /// `(k, C⁰ distance, C¹ distance)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub c0_exponent: f64,
    pub c1_exponent: f64,
    pub c0_required: f64,
    pub c1_required: f64,
    /// `(k, r̂ₖ, sup_{|ξ|≤r̂ₖ} ‖D(T₀ᵏv¹)(ξ) − D(T₀ᵏv¹)(0)‖)`.
    pub inclination: Vec<(usize, f64, f64)>,
    pub inclination_exponent: f64,
    pub inclination_required: f64,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "c0_distance", "c1_distance"])?;
        for (k, c0, c1) in &self.rows {
            out.write_record([k.to_string(), format!("{c0:e}"), format!("{c1:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Distances below these are treated as roundoff and excluded from fits.
pub const C0_FLOOR: f64 = 1e-13;
pub const C1_FLOOR: f64 = 1e-11;

/// Fitted decay exponent `−slope(log d)`; `+∞` when fewer than two values
/// lie above `floor` (the sequence collapsed to roundoff).
pub fn decay_exponent(values: &[(usize, f64)], floor: f64) -> f64 {
    let kept: Vec<(f64, f64)> = values
        .iter()
        .filter(|(_, d)| *d > floor)
        .map(|(k, d)| (*k as f64, d.ln()))
        .collect();
    if kept.len() < 2 {
        return f64::INFINITY;
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1).collect();
    -fit_slope(&xs, &ys)
}

pub fn convergence_diagnostics(
    charts: &ChartSequence,
    v1: &GraphPatch,
    v2: &GraphPatch,
    n: usize,
    fit_tol: f64,
) -> Result<ConvergenceReport> {
    let s1 = transform_sequence(charts, 0, v1, n)?;
    let s2 = transform_sequence(charts, 0, v2, n)?;
    let mut rows = Vec::with_capacity(n);
    for (k, (a, b)) in s1.iter().zip(&s2).enumerate() {
        rows.push((k + 1, a.c0_distance(b), a.c1_distance(b)));
    }
    let c0_exponent = decay_exponent(&rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(), C0_FLOOR);
    let c1_exponent = decay_exponent(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>(), C1_FLOOR);
    let lambda1 = charts.lambda1;
    let c0_required = lambda1 - 2.0 * charts.delta2;
    let c1_required = 0.9 * lambda1;

    let delta3 = 2.0 * charts.delta1 + 0.1 * lambda1;
    let mut inclination = Vec::with_capacity(n);
    for (k, p) in s1.iter().enumerate() {
        let k = k + 1;
        let rhat = (-(k as f64) * delta3).exp() * charts.radii[0];
        let rhat = rhat.min(p.radius);
        let d0 = p.deriv_at_zero();
        let mut sup: f64 = 0.0;
        for j in 0..=8 {
            let t = -1.0 + 0.25 * j as f64;
            for a in 0..p.domain_dim {
                let mut xi = DVector::zeros(p.domain_dim);
                xi[a] = t * rhat;
                sup = sup.max(op_norm(&(p.eval(&xi).1 - &d0)));
            }
        }
        inclination.push((k, rhat, sup));
    }
    let inclination_exponent = decay_exponent(
        &inclination.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>(),
        C1_FLOOR,
    );
    let inclination_required = (delta3 - charts.delta1).min(0.9 * lambda1);
    let pass = c0_exponent >= c0_required - fit_tol
        && c1_exponent >= c1_required - fit_tol
        && inclination_exponent >= inclination_required - fit_tol;
    Ok(ConvergenceReport {
        rows,
        c0_exponent,
        c1_exponent,
        c0_required,
        c1_required,
        inclination,
        inclination_exponent,
        inclination_required,
        pass,
    })
}

/// `‖h₀ˢ(A) − h₀ˢ(B)‖_C¹` for two chart sequences.
pub fn finite_determination_check(a: &ChartSequence, b: &ChartSequence) -> Result<f64> {
    let ha = stable_graph_at_start(a)?;
    let hb = stable_graph_at_start(b)?;
    Ok(ha.c1_distance_resampled(&hb))
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDeterminationReport {
    /// `(N, ‖h₀ˢ − ĥ₀ˢ‖_C¹)` against the sequence with linear tail from `N`.
    pub rows: Vec<(usize, f64)>,
    pub rate: f64,
    pub required: f64,
    pub pass: bool,
}

/// Compare `charts` with its linear-tail truncations at each `N` and fit the
/// decay rate in `N`.
pub fn finite_determination_table(
    charts: &ChartSequence,
    ns: &[usize],
    fit_tol: f64,
) -> Result<FiniteDeterminationReport> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        rows.push((n, finite_determination_check(charts, &charts.with_linear_tail(n))?));
    }
    let rate = decay_exponent(&rows, C1_FLOOR);
    let required = 0.9 * charts.lambda1;
    Ok(FiniteDeterminationReport {
        pass: rate >= required - fit_tol,
        rows,
        rate,
        required,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::kato_gap;
    use crate::dynsys::{attractor_sample, FatCat, LinearSystem, Solenoid};
    use crate::splitting::AnalyticSplitting;

    fn linear_charts(lambda: f64, n: usize, r: f64) -> ChartSequence {
        let lin = DMatrix::from_diagonal(&DVector::from_vec(vec![lambda.exp(), (-lambda).exp()]));
        let maps: Vec<Arc<dyn ConnectingMap>> = (0..n)
            .map(|_| Arc::new(LinearConnectingMap::new(lin.clone(), 1)) as Arc<dyn ConnectingMap>)
            .collect();
        let opts = ChartOptions {
            lambda1: Some(lambda),
            delta2: 0.0,
            r_max: r,
            ..Default::default()
        };
        ChartSequence::assemble(maps, &opts).unwrap()
    }

    fn solenoid_point(sys: &dyn DynamicalSystem, seed: u64) -> DVector<f64> {
        attractor_sample(sys, 1, 60, seed).unwrap().points[0].clone()
    }

    fn solenoid_charts(n: usize) -> ChartSequence {
        let sys: Arc<dyn DynamicalSystem> = Arc::new(Solenoid::classic());
        let x = solenoid_point(sys.as_ref(), 3);
        let orbit = iterate(sys.as_ref(), x.as_slice(), n).unwrap();
        let opts = ChartOptions {
            lambda1: Some(0.6),
            delta1: 0.0,
            delta2: 0.05,
            ..Default::default()
        };
        build_charts(&sys, &orbit.points, &AnalyticSplitting, &opts).unwrap()
    }

    #[test]
    fn linear_charts_have_no_nonlinearity() {
        let sys: Arc<dyn DynamicalSystem> = Arc::new(LinearSystem::new(vec![2.0, 0.5]));
        let orbit = iterate(sys.as_ref(), &[0.3, 0.1], 5).unwrap();
        let opts = ChartOptions {
            lambda1: Some(2f64.ln()),
            delta2: 0.0,
            r_max: 3.0,
            ..Default::default()
        };
        let c = build_charts(&sys, &orbit.points, &AnalyticSplitting, &opts).unwrap();
        assert!(c.radii.iter().all(|r| *r == 3.0));
        for s in &c.steps {
            assert!(s.dg_sup < 1e-14);
            assert_eq!(s.g_at_zero, 0.0);
        }
    }

    #[test]
    fn solenoid_charts_pass_with_constant_radii() {
        let c = solenoid_charts(30);
        let r0 = c.radii[0];
        assert!(r0 > 1e-4 && r0 < 0.5);
        assert!(c.radii.iter().all(|r| *r == r0));
        for s in &c.steps {
            assert!((s.lu_inv_norm - 0.5).abs() < 1e-12);
            assert!((s.ls_norm - 0.25).abs() < 1e-12);
            assert!(s.dg_sup < 0.05);
        }
    }

    #[test]
    fn aggressive_rate_is_rejected() {
        let sys: Arc<dyn DynamicalSystem> = Arc::new(Solenoid::classic());
        let x = solenoid_point(sys.as_ref(), 3);
        let orbit = iterate(sys.as_ref(), x.as_slice(), 5).unwrap();
        let opts = ChartOptions {
            lambda1: Some(0.8),
            ..Default::default()
        };
        let err = build_charts(&sys, &orbit.points, &AnalyticSplitting, &opts).unwrap_err();
        assert!(matches!(err, Error::ConditionsViolated { condition: "I", .. }));
    }

    #[test]
    fn zero_graph_is_invariant_under_linear_charts() {
        let c = linear_charts(0.7, 3, 1.0);
        let v = GraphPatch::zero(&c, PatchKind::Unstable, 0).unwrap();
        let w = graph_transform_step(&c, 0, &v).unwrap();
        assert!(w.values.iter().all(|x| x.norm() == 0.0));
        assert!(w.derivs.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn constant_graph_contracts_by_stable_factor() {
        let lambda = 0.7;
        let c = linear_charts(lambda, 3, 1.0);
        let v = GraphPatch::from_fn(&c, PatchKind::Unstable, 0, |_| {
            (DVector::from_vec(vec![0.3]), DMatrix::zeros(1, 1))
        })
        .unwrap();
        let w = graph_transform_step(&c, 0, &v).unwrap();
        for val in &w.values {
            assert!((val[0] - 0.3 * (-lambda).exp()).abs() < 1e-15);
        }
        let zero = GraphPatch::zero(&c, PatchKind::Unstable, 1).unwrap();
        let ratio = w.c0_distance(&zero) / v.c0_distance(&GraphPatch::zero(&c, PatchKind::Unstable, 0).unwrap());
        assert!((ratio - (-lambda).exp()).abs() < 1e-14);

        // Slopes compose both factors.
        let s = GraphPatch::from_fn(&c, PatchKind::Unstable, 0, |xi| {
            (xi * 0.05, DMatrix::from_element(1, 1, 0.05))
        })
        .unwrap();
        let t = graph_transform_step(&c, 0, &s).unwrap();
        for d in &t.derivs {
            assert!((d[(0, 0)] - 0.05 * (-2.0 * lambda).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn solenoid_transform_contracts_pairs() {
        let c = solenoid_charts(3);
        let r = c.radii[0];
        let bound = (-c.lambda1).exp() + 2.0 * c.delta2;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut random = || {
                let a = DVector::from_vec(vec![rng.gen_range(-0.2..0.2) * r, rng.gen_range(-0.2..0.2) * r]);
                let b = DVector::from_vec(vec![rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)]);
                GraphPatch::from_fn(&c, PatchKind::Unstable, 0, move |xi| {
                    (&a + &b * xi[0], DMatrix::from_column_slice(2, 1, b.as_slice()))
                })
                .unwrap()
            };
            let v1 = random();
            let v2 = random();
            let t1 = graph_transform_step(&c, 0, &v1).unwrap();
            let t2 = graph_transform_step(&c, 0, &v2).unwrap();
            assert!(t1.c0_distance(&t2) <= bound * v1.c0_distance(&v2) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn solenoid_unstable_manifold_is_tangent_to_eu() {
        let sys: Arc<dyn DynamicalSystem> = Arc::new(Solenoid::classic());
        let x = solenoid_point(sys.as_ref(), 5);
        let m = unstable_manifold(
            &sys,
            x.as_slice(),
            40,
            0.5,
            &AnalyticSplitting,
            &InverseOptions::default(),
            &ManifoldOptions::default(),
        )
        .unwrap();
        assert!(m.certificate < 1e-6);
        assert!(m.offset < 1e-12);
        assert!(m.tangency < 1e-8);
        assert!(m.patch.lip_estimate() <= 0.1);
        let t = m.patch.tangent(&DVector::zeros(1)).unwrap();
        let eu = sys.known_splitting(x.as_slice()).unwrap().eu;
        assert!(kato_gap(&crate::linalg::orthonormalize(&t), &eu).unwrap() < 1e-8);
        let p0 = m.patch.embed(sys.as_ref(), &DVector::zeros(1)).unwrap();
        assert!(sys.distance(p0.as_slice(), x.as_slice()) < 1e-12);
    }

    #[test]
    fn unstable_patches_are_forward_invariant() {
        let sys: Arc<dyn DynamicalSystem> = Arc::new(Solenoid::warped());
        let x = solenoid_point(sys.as_ref(), 8);
        let inv = InverseOptions::default();
        let opts = ManifoldOptions::default();
        let fx = sys.map(&x);
        let here = unstable_manifold(&sys, x.as_slice(), 30, 0.5, &AnalyticSplitting, &inv, &opts).unwrap();
        let there = unstable_manifold(&sys, fx.as_slice(), 30, 0.5, &AnalyticSplitting, &inv, &opts).unwrap();
        let frame = there.patch.frame_inv.clone().unwrap().try_inverse().unwrap();
        let mut checked = 0;
        for k in 0..here.patch.num_nodes() {
            let p = here.patch.embed(sys.as_ref(), &here.patch.node(k)).unwrap();
            let c = &frame * sys.displacement(fx.as_slice(), sys.map(&p).as_slice());
            if c[0].abs() <= there.patch.radius {
                let h = there.patch.eval(&DVector::from_vec(vec![c[0]])).0;
                assert!((c.rows(1, 2) - h).norm() < 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 3);
    }

    #[test]
    fn fat_cat_unstable_manifold_is_straight() {
        let sys: Arc<dyn DynamicalSystem> = Arc::new(FatCat::default());
        let x = attractor_sample(sys.as_ref(), 1, 40, 2).unwrap().points[0].clone();
        let m = unstable_manifold(
            &sys,
            x.as_slice(),
            40,
            0.1,
            &AnalyticSplitting,
            &InverseOptions::default(),
            &ManifoldOptions::default(),
        )
        .unwrap();
        let d0 = m.patch.deriv_at_zero();
        for (v, d) in m.patch.values.iter().zip(&m.patch.derivs) {
            assert!(v.norm() < 1e-9);
            assert!((d - &d0).norm() < 1e-9);
        }
    }

    #[test]
    fn stable_manifolds_are_flat() {
        for sys in [
            Arc::new(Solenoid::classic()) as Arc<dyn DynamicalSystem>,
            Arc::new(FatCat::default()),
        ] {
            let x = attractor_sample(sys.as_ref(), 1, 60, 4).unwrap().points[0].clone();
            let m = stable_manifold(&sys, x.as_slice(), 20, 0.05, &AnalyticSplitting, &ManifoldOptions::default())
                .unwrap();
            assert!(m.patch.values.iter().all(|v| v.norm() < 1e-9));
            assert!(m.patch.derivs.iter().all(|d| d.norm() < 1e-9));
            // Forward contraction of points on the patch.
            let rate = (-m.lambda1).exp();
            for k in [0, 40, 288] {
                let y = m.patch.embed(sys.as_ref(), &m.patch.node(k)).unwrap();
                let d0 = sys.distance(y.as_slice(), x.as_slice());
                let (mut a, mut b) = (y.clone(), x.clone());
                for n in 1..=10 {
                    a = sys.map(&a);
                    b = sys.map(&b);
                    assert!(sys.distance(a.as_slice(), b.as_slice()) <= rate.powi(n) * d0 * (1.0 + 1e-6) + 1e-14);
                }
            }
        }
    }

    #[test]
    fn solenoid_convergence_rates() {
        let c = solenoid_charts(30);
        let r = c.radii[0];
        let v1 = GraphPatch::zero(&c, PatchKind::Unstable, 0).unwrap();
        let v2 = GraphPatch::from_fn(&c, PatchKind::Unstable, 0, |xi| {
            let a = DVector::from_vec(vec![0.3 * r + 0.02 * xi[0], -0.1 * r]);
            (a, DMatrix::from_column_slice(2, 1, &[0.02, 0.0]))
        })
        .unwrap();
        let rep = convergence_diagnostics(&c, &v1, &v2, 30, 0.05).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.c1_exponent >= 0.9 * c.lambda1);
        let same = convergence_diagnostics(&c, &v1, &v1, 5, 0.05).unwrap();
        assert!(same.rows.iter().all(|r| r.1 == 0.0 && r.2 == 0.0));
    }

    /// `g(ξ, η) = (2ξ + εη₀², 0.3η + εξ²)`: a curved stable manifold.
    struct Bent {
        lin: DMatrix<f64>,
        eps: f64,
    }

    impl ConnectingMap for Bent {
        fn dim(&self) -> usize {
            3
        }
        fn du(&self) -> usize {
            1
        }
        fn eval(&self, p: &DVector<f64>) -> DVector<f64> {
            let mut out = &self.lin * p;
            out[0] += self.eps * p[1] * p[1];
            out[1] += self.eps * p[0] * p[0];
            out
        }
        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            let mut j = self.lin.clone();
            j[(0, 1)] += 2.0 * self.eps * p[1];
            j[(1, 0)] += 2.0 * self.eps * p[0];
            j
        }
        fn linear(&self) -> &DMatrix<f64> {
            &self.lin
        }
    }

    #[test]
    fn stable_graph_is_finitely_determined() {
        let lin = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.3, 0.3]));
        let maps: Vec<Arc<dyn ConnectingMap>> = (0..30)
            .map(|_| Arc::new(Bent { lin: lin.clone(), eps: 0.5 }) as Arc<dyn ConnectingMap>)
            .collect();
        let opts = ChartOptions {
            delta2: 0.05,
            r_max: 0.5,
            ..Default::default()
        };
        let c = ChartSequence::assemble(maps, &opts).unwrap();
        assert_eq!(finite_determination_check(&c, &c).unwrap(), 0.0);
        let rep = finite_determination_table(&c, &[5, 10, 15, 20], 0.05).unwrap();
        assert!(rep.rows[0].1 > 0.0);
        assert!(rep.pass, "{rep:?}");
        let w = stable_graph_at_start(&c).unwrap();
        assert!(w.values.iter().any(|v| v.norm() > 1e-6));
    }

    #[test]
    fn patch_derivatives_match_differences() {
        let c = solenoid_charts(3);
        let v = GraphPatch::zero(&c, PatchKind::Unstable, 0).unwrap();
        let w = graph_transform_step(&c, 0, &v).unwrap();
        let h = w.radius * 1e-4;
        for k in [2, 8, 13] {
            let xi = w.node(k);
            let plus = w.eval(&(&xi + DVector::from_vec(vec![h]))).0;
            let minus = w.eval(&(&xi - DVector::from_vec(vec![h]))).0;
            let fd = (plus - minus) / (2.0 * h);
            assert!((fd - w.derivs[k].column(0)).norm() < 1e-6);
        }
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), GRID_POINTS + 1);
        assert!(text.starts_with("node,xi0,v0,v1,dv0_0,dv1_0"));
    }
}
