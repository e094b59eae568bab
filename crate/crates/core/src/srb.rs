//! SRB machinery: the unstable Jacobian cocycle, leaf densities built from
//! backward cocycle products, Cesàro pushforwards of leaf measures, Birkhoff
//! averages, and the sampled checks of absolute continuity and observability.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynsys::{inverse_on_attractor, BackwardOrbit, BasinBox, DynamicalSystem, InverseOptions};
use crate::error::{Error, Result};
use crate::linalg::{abs_det, orthonormalize};
use crate::splitting::{unstable_block, Splitting, SplittingProvider, UnstableNorm};

/// Quadrature nodes per disc.
pub const DISC_NODES: usize = 257;

/// Forward steps used to straighten a seed segment onto the unstable leaf.
pub const DISC_PUSH: usize = 12;

/// `|det(Q'ᵀ·Df·Eu)|` for an orthonormal basis `eu` of `Eᵘ(x)`, where `Q'` is
/// an orthonormal basis of `Df·Eu`.
pub fn unstable_jacobian_euclidean(df: &DMatrix<f64>, eu: &DMatrix<f64>) -> Result<f64> {
    let img = df * eu;
    let q = orthonormalize(&img);
    if q.ncols() < eu.ncols() {
        return Err(Error::RankDeficient);
    }
    let j = abs_det(&(q.transpose() * img));
    if j == 0.0 || !j.is_finite() {
        return Err(Error::RankDeficient);
    }
    Ok(j)
}

/// `Jᵘ(x) = |det Df_x|Eᵘ|` in the requested norm on `Eᵘ`.
pub fn unstable_jacobian(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    provider: &dyn SplittingProvider,
    norm: UnstableNorm,
) -> Result<f64> {
    let (fx, df) = sys.map_and_deriv(x);
    let s0 = provider.splitting_at(sys, x)?;
    match norm {
        UnstableNorm::Euclidean => unstable_jacobian_euclidean(&df, &s0.eu),
        UnstableNorm::Quotient => {
            let s1 = provider.splitting_at(sys, fx.as_slice())?;
            jacobian_from(&df, &s0, &s1, norm)
        }
    }
}

fn jacobian_from(df: &DMatrix<f64>, s0: &Splitting, s1: &Splitting, norm: UnstableNorm) -> Result<f64> {
    let b = unstable_block(df, s0, s1, norm).ok_or(Error::RankDeficient)?;
    let j = abs_det(&b);
    if j == 0.0 || !j.is_finite() {
        return Err(Error::RankDeficient);
    }
    Ok(j)
}

/// `Jᵘ` at every point of a backward orbit except the anchor: entry `k − 1`
/// holds `Jᵘ(x₋ₖ)`.
fn backward_jacobians(
    sys: &dyn DynamicalSystem,
    orbit: &BackwardOrbit,
    provider: &dyn SplittingProvider,
    norm: UnstableNorm,
) -> Result<Vec<f64>> {
    let mut splits = Vec::with_capacity(orbit.points.len());
    for p in &orbit.points {
        splits.push(provider.splitting_at(sys, p.as_slice())?);
    }
    (1..orbit.points.len())
        .map(|k| {
            let df = sys.deriv(orbit.at(k).as_slice());
            jacobian_from(&df, &splits[k], &splits[k - 1], norm)
        })
        .collect()
}

/// Options shared by the cocycle-product operations.
#[derive(Clone)]
pub struct CocycleOptions<'a> {
    pub provider: &'a dyn SplittingProvider,
    pub norm: UnstableNorm,
    pub inverse: InverseOptions<'a>,
}

impl<'a> CocycleOptions<'a> {
    pub fn new(provider: &'a dyn SplittingProvider) -> Self {
        CocycleOptions {
            provider,
            norm: UnstableNorm::Quotient,
            inverse: InverseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CocycleRatio {
    /// `∏_{k=1}^{N} Jᵘ(x₋ₖ)/Jᵘ(y₋ₖ)`.
    pub value: f64,
    pub depth: usize,
    /// Bound on `|log Δ_∞ − log Δ_N|`.
    pub tail_bound: f64,
    /// Distortion constant: the full product lies in `[1/C, C]`.
    pub c: f64,
    /// Lipschitz constant of `log Jᵘ` measured along the two orbits.
    pub log_lip: f64,
    pub backward_distances: Vec<f64>,
    pub pass: bool,
}

/// Backward cocycle ratio between two points of one local unstable leaf.
pub fn cocycle_ratio(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    y: &[f64],
    depth: usize,
    opts: &CocycleOptions<'_>,
) -> Result<CocycleRatio> {
    let ox = inverse_on_attractor(sys, x, depth, &opts.inverse)
        .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
    let oy = inverse_on_attractor(sys, y, depth, &opts.inverse)
        .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
    let dists: Vec<f64> = (0..=depth)
        .map(|k| sys.distance(ox.at(k).as_slice(), oy.at(k).as_slice()))
        .collect();
    let d0 = dists[0];
    let rate = sys.hyperbolicity_rate().unwrap_or(0.1).max(1e-3);
    // On a common leaf the backward distances contract; across leaves the
    // stable component expands backwards. Inverse branches amplify roundoff
    // by 1/κ per step, which sets a floor on what can be resolved.
    if d0 > 0.0 {
        for (k, &d) in dists.iter().enumerate() {
            let allowed = d0 * (-(k as f64) * rate * 0.5).exp() * 1.5 + roundoff_floor(sys, k);
            if d > allowed {
                return Err(Error::NotOnPatch(format!(
                    "backward distance {d:e} at step {k} does not contract from {d0:e}"
                )));
            }
        }
    }
    let jx = backward_jacobians(sys, &ox, opts.provider, opts.norm)?;
    let jy = backward_jacobians(sys, &oy, opts.provider, opts.norm)?;
    let mut log_ratio = 0.0;
    let mut log_lip: f64 = 0.0;
    for k in 1..=depth {
        let l = jx[k - 1].ln() - jy[k - 1].ln();
        log_ratio += l;
        if dists[k] > 1e-14 {
            log_lip = log_lip.max(l.abs() / dists[k]);
        }
    }
    let tail_dist = geometric_tail(&dists, rate);
    let tail_bound = log_lip * tail_dist;
    let c = (log_lip * (dists[1..].iter().sum::<f64>() + tail_dist)).exp() * (1.0 + 1e-12);
    let value = log_ratio.exp();
    Ok(CocycleRatio {
        value,
        depth,
        tail_bound,
        c,
        log_lip,
        pass: value <= c && value >= 1.0 / c,
        backward_distances: dists,
    })
}

/// Resolution of a backward orbit after `k` inverse steps.
fn roundoff_floor(sys: &dyn DynamicalSystem, k: usize) -> f64 {
    let kappa = sys.contraction_factor().clamp(1e-3, 1.0);
    1e-13 * kappa.powi(-(k as i32))
}

/// `Σ_{k>N} d_k`, extrapolated at rate `e^{−rate}` from the cleanest
/// observed distance (late distances are dominated by roundoff growth).
fn geometric_tail(dists: &[f64], rate: f64) -> f64 {
    let n = dists.len() - 1;
    let r = (-rate).exp().min(0.99);
    let best = dists
        .iter()
        .enumerate()
        .map(|(k, d)| d * r.powi((n + 1 - k) as i32))
        .fold(f64::INFINITY, f64::min);
    best / (1.0 - r)
}

/// Piece of unstable leaf with a quadrature for normalized leaf volume.
///
/// The leaf is the image under `f^K` of a short segment `base + t·dir` in the
/// unstable direction at `base = x₋ₖ`; the seed segment is `O(t²)` off the
/// leaf and `f^K` contracts that defect by `λc^K`. Only `dᵤ = 1` is
/// supported.
#[derive(Debug, Clone, Serialize)]
pub struct UnstableDisc {
    pub anchor: DVector<f64>,
    pub base: DVector<f64>,
    pub dir: DVector<f64>,
    pub push: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub params: Vec<f64>,
    pub nodes: Vec<DVector<f64>>,
    pub tangents: Vec<DVector<f64>>,
    /// Leaf volume element `|dγ/dt|` in `norm`.
    pub volume: Vec<f64>,
    /// Normalized trapezoid weights.
    pub weights: Vec<f64>,
    /// Arclength from the first node, in `norm`.
    pub arclength: Vec<f64>,
    pub norm: UnstableNorm,
}

impl UnstableDisc {
    /// Leaf piece through `x` reaching about `half_width` of arclength (in
    /// `norm`) to each side, or the whole closed leaf loop when
    /// `half_width = None` and the loop closes after one turn (solenoids).
    pub fn leaf(
        sys: &dyn DynamicalSystem,
        x: &[f64],
        half_width: f64,
        provider: &dyn SplittingProvider,
        norm: UnstableNorm,
        inverse: &InverseOptions<'_>,
    ) -> Result<Self> {
        if sys.unstable_dim() != 1 {
            return Err(Error::InvalidArgument(
                "unstable discs are implemented for one-dimensional unstable bundles".into(),
            ));
        }
        let back = inverse_on_attractor(sys, x, DISC_PUSH, inverse)
            .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
        let base = back.at(DISC_PUSH).clone();
        let sp = provider.splitting_at(sys, base.as_slice())?;
        let dir = sp.eu.column(0).into_owned();
        // Linearised growth of dir under f^K in the target norm.
        let mut v = dir.clone();
        let mut p = base.clone();
        for _ in 0..DISC_PUSH {
            let (fp, df) = sys.map_and_deriv(p.as_slice());
            v = df * v;
            p = fp;
        }
        let at_x = provider.splitting_at(sys, x)?;
        let growth = leaf_speed(&v, &at_x, norm);
        let mut t = half_width / growth;
        let mut disc = Self::from_segment(sys, x, &base, &dir, -t, t, provider, norm)?;
        for _ in 0..4 {
            let mid = disc.center_arclength();
            let total = *disc.arclength.last().unwrap();
            let reach = mid.min(total - mid);
            if reach >= half_width * (1.0 - 1e-9) {
                break;
            }
            t *= half_width / reach.max(1e-300) * 1.05;
            disc = Self::from_segment(sys, x, &base, &dir, -t, t, provider, norm)?;
        }
        Ok(disc)
    }

    /// Disc from an explicit seed segment `base + t·dir`, `t ∈ [t_lo, t_hi]`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_segment(
        sys: &dyn DynamicalSystem,
        anchor: &[f64],
        base: &DVector<f64>,
        dir: &DVector<f64>,
        t_lo: f64,
        t_hi: f64,
        provider: &dyn SplittingProvider,
        norm: UnstableNorm,
    ) -> Result<Self> {
        let m = DISC_NODES;
        let mut params = Vec::with_capacity(m);
        let mut nodes = Vec::with_capacity(m);
        let mut tangents = Vec::with_capacity(m);
        let mut volume = Vec::with_capacity(m);
        for i in 0..m {
            let t = t_lo + (t_hi - t_lo) * i as f64 / (m - 1) as f64;
            let (p, v) = push_segment_point(sys, base, dir, t, DISC_PUSH)?;
            let sp = match norm {
                UnstableNorm::Quotient => Some(provider.splitting_at(sys, p.as_slice())?),
                UnstableNorm::Euclidean => None,
            };
            let speed = match &sp {
                Some(s) => leaf_speed(&v, s, norm),
                None => v.norm(),
            };
            params.push(t);
            nodes.push(p);
            tangents.push(v);
            volume.push(speed);
        }
        let h = (t_hi - t_lo) / (m - 1) as f64;
        let mut weights: Vec<f64> = volume
            .iter()
            .enumerate()
            .map(|(i, v)| v * h * if i == 0 || i == m - 1 { 0.5 } else { 1.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let mut arclength = vec![0.0; m];
        for i in 1..m {
            arclength[i] = arclength[i - 1] + 0.5 * (volume[i] + volume[i - 1]) * h;
        }
        Ok(UnstableDisc {
            anchor: DVector::from_column_slice(anchor),
            base: base.clone(),
            dir: dir.clone(),
            push: DISC_PUSH,
            t_lo,
            t_hi,
            params,
            nodes,
            tangents,
            volume,
            weights,
            arclength,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total leaf volume in `norm`.
    pub fn volume_total(&self) -> f64 {
        *self.arclength.last().unwrap_or(&0.0)
    }

    /// Arclength position of the anchor (parameter `t = 0` when present).
    pub fn center_arclength(&self) -> f64 {
        self.arclength_at_param(0.0)
    }

    fn arclength_at_param(&self, t: f64) -> f64 {
        let m = self.params.len();
        let h = (self.t_hi - self.t_lo) / (m - 1) as f64;
        let u = ((t - self.t_lo) / h).clamp(0.0, (m - 1) as f64);
        let i = (u.floor() as usize).min(m - 2);
        let f = u - i as f64;
        self.arclength[i] + f * (self.arclength[i + 1] - self.arclength[i])
    }

    /// Point of the leaf at seed parameter `t` (not restricted to nodes).
    pub fn point_at(&self, sys: &dyn DynamicalSystem, t: f64) -> Result<DVector<f64>> {
        Ok(push_segment_point(sys, &self.base, &self.dir, t, self.push)?.0)
    }

    /// Seed parameter distributed as the normalized leaf volume, by inverting
    /// the piecewise-linear cumulative weight at `u ∈ [0, 1]`.
    pub fn param_at_fraction(&self, u: f64) -> f64 {
        let total = self.volume_total();
        let target = u.clamp(0.0, 1.0) * total;
        let i = match self
            .arclength
            .binary_search_by(|a| a.partial_cmp(&target).unwrap())
        {
            Ok(i) => i.min(self.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.len() - 2),
        };
        let (a0, a1) = (self.arclength[i], self.arclength[i + 1]);
        let f = if a1 > a0 { (target - a0) / (a1 - a0) } else { 0.0 };
        self.params[i] + f * (self.params[i + 1] - self.params[i])
    }

    /// Arclength position of the leaf point nearest to `p`.
    pub fn arclength_of(&self, sys: &dyn DynamicalSystem, p: &[f64]) -> (f64, f64) {
        let (i, d) = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, sys.distance(n.as_slice(), p)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        // Refine along the tangent between neighbouring nodes.
        let tan = &self.tangents[i];
        let disp = sys.displacement(self.nodes[i].as_slice(), p);
        let h = (self.t_hi - self.t_lo) / (self.len() - 1) as f64;
        let dt = (disp.dot(tan) / tan.norm_squared()).clamp(-h, h);
        let s = self.arclength_at_param(self.params[i] + dt);
        (s, d)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.anchor.len();
        let mut header = vec!["arclength".to_string(), "weight".to_string()];
        header.extend((0..d).map(|k| format!("x{k}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.arclength[i].to_string(), self.weights[i].to_string()];
            row.extend(self.nodes[i].iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `f^K(base + t·dir)` and its derivative in `t`.
fn push_segment_point(
    sys: &dyn DynamicalSystem,
    base: &DVector<f64>,
    dir: &DVector<f64>,
    t: f64,
    k: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut p = sys.translate(base.as_slice(), (dir * t).as_slice());
    let mut v = dir.clone();
    for step in 0..k {
        let (fp, df) = sys.map_and_deriv(p.as_slice());
        if !sys.basin().contains(fp.as_slice()) {
            return Err(Error::OrbitEscapesBasin {
                step: step + 1,
                point: fp.as_slice().to_vec(),
            });
        }
        v = df * v;
        p = fp;
    }
    Ok((p, v))
}

/// Length of a tangent vector to the leaf in the chosen norm.
fn leaf_speed(v: &DVector<f64>, sp: &Splitting, norm: UnstableNorm) -> f64 {
    match norm {
        UnstableNorm::Euclidean => v.norm(),
        UnstableNorm::Quotient => (sp.normal_u().transpose() * v).norm(),
    }
}

/// Normalized leaf density sampled at the disc nodes.
#[derive(Debug, Clone, Serialize)]
pub struct DensityProfile {
    pub arclength: Vec<f64>,
    pub values: Vec<f64>,
    pub depth: usize,
    /// `sup |h_N − h_{N/2}|` after normalizing both.
    pub certificate: f64,
    /// Geometric bound on `sup |log h_∞ − log h_N|`.
    pub tail_bound: f64,
    /// `Σ wᵢ hᵢ`, equal to one up to rounding.
    pub integral: f64,
}

impl DensityProfile {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["arclength", "h"])?;
        for (s, h) in self.arclength.iter().zip(&self.values) {
            out.write_record([s.to_string(), h.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Leaf density `h(z) ∝ ∏_{k=1}^{N} Jᵘ(y₋ₖ)/Jᵘ(z₋ₖ)` on the disc nodes, with
/// `y` the disc anchor, normalized so that `∫ h dλ_L = 1`.
pub fn srb_density(
    sys: &dyn DynamicalSystem,
    disc: &UnstableDisc,
    depth: usize,
    opts: &CocycleOptions<'_>,
) -> Result<DensityProfile> {
    if depth < 2 {
        return Err(Error::InvalidArgument("density depth must be at least 2".into()));
    }
    let anchor_orbit = inverse_on_attractor(sys, disc.anchor.as_slice(), depth, &opts.inverse)
        .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
    let jy = backward_jacobians(sys, &anchor_orbit, opts.provider, opts.norm)?;
    let half = depth / 2;
    let rate = sys.hyperbolicity_rate().unwrap_or(0.1).max(1e-3);
    let mut full = Vec::with_capacity(disc.len());
    let mut halfway = Vec::with_capacity(disc.len());
    let mut tail: f64 = 0.0;
    let mut log_lip: f64 = 0.0;
    for z in &disc.nodes {
        let oz = inverse_on_attractor(sys, z.as_slice(), depth, &opts.inverse)
            .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
        let jz = backward_jacobians(sys, &oz, opts.provider, opts.norm)?;
        let mut acc = 0.0;
        let mut at_half = 0.0;
        let mut dists = Vec::with_capacity(depth + 1);
        for k in 0..=depth {
            dists.push(sys.distance(oz.at(k).as_slice(), anchor_orbit.at(k).as_slice()));
        }
        for k in 1..=depth {
            let l = jy[k - 1].ln() - jz[k - 1].ln();
            acc += l;
            if k == half {
                at_half = acc;
            }
            if dists[k] > 1e-14 {
                log_lip = log_lip.max(l.abs() / dists[k]);
            }
        }
        tail = tail.max(geometric_tail(&dists, rate));
        full.push(acc);
        halfway.push(at_half);
    }
    let values = normalize_log_density(&full, &disc.weights);
    let coarse = normalize_log_density(&halfway, &disc.weights);
    let certificate = values
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let integral = values.iter().zip(&disc.weights).map(|(h, w)| h * w).sum();
    Ok(DensityProfile {
        arclength: disc.arclength.clone(),
        values,
        depth,
        certificate,
        tail_bound: log_lip * tail,
        integral,
    })
}

fn normalize_log_density(logs: &[f64], weights: &[f64]) -> Vec<f64> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = raw.iter().zip(weights).map(|(h, w)| h * w).sum();
    raw.into_iter().map(|h| h / z).collect()
}

/// Weighted point cloud with total weight one. Coordinates are stored flat.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    /// Cesàro length.
    pub n: usize,
    /// Initial samples pushed forward.
    pub samples: usize,
    pub seed: u64,
}

impl EmpiricalMeasure {
    pub fn from_points(dim: usize, points: &[DVector<f64>], weights: Vec<f64>) -> Self {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            coords.extend(p.iter());
        }
        EmpiricalMeasure {
            dim,
            coords,
            weights,
            n: 1,
            samples: points.len(),
            seed: 0,
        }
    }

    /// Point mass at `x`.
    pub fn dirac(x: &[f64]) -> Self {
        EmpiricalMeasure {
            dim: x.len(),
            coords: x.to_vec(),
            weights: vec![1.0],
            n: 1,
            samples: 1,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, phi: &dyn Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * phi(self.point(i))).sum()
    }

    /// Masses of the `per_axis^d` cells of `basin`, flat in row-major order.
    pub fn cell_masses(&self, basin: &BasinBox, per_axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; per_axis.pow(self.dim as u32)];
        for i in 0..self.len() {
            out[basin.cell_index(self.point(i), per_axis)] += self.weights[i];
        }
        out
    }

    /// Masses of `bins` equal cells of coordinate `axis` over the basin range.
    pub fn marginal(&self, basin: &BasinBox, axis: usize, bins: usize) -> Vec<f64> {
        let (lo, hi) = (basin.lo[axis], basin.hi[axis]);
        let mut out = vec![0.0; bins];
        for i in 0..self.len() {
            let u = (self.point(i)[axis] - lo) / (hi - lo);
            let b = ((u * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
            out[b] += self.weights[i];
        }
        out
    }

    /// `½ Σ |μ(C) − ν(C)|` over the `per_axis^d` cells of `basin`.
    pub fn total_variation(&self, other: &EmpiricalMeasure, basin: &BasinBox, per_axis: usize) -> f64 {
        let a = self.cell_masses(basin, per_axis);
        let b = other.cell_masses(basin, per_axis);
        0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    /// `f_*μ`.
    pub fn push_forward(&self, sys: &dyn DynamicalSystem) -> EmpiricalMeasure {
        let mut out = self.clone();
        let mut buf = vec![0.0; self.dim];
        for i in 0..self.len() {
            sys.map_into(self.point(i), &mut buf);
            out.coords[i * self.dim..(i + 1) * self.dim].copy_from_slice(&buf);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| v.to_string()).collect();
            row.push(self.weights[i].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// How the initial leaf measure is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscSampling {
    /// The disc quadrature nodes with their weights.
    Nodes,
    /// This many stratified, jittered draws from the leaf volume, equal
    /// weights.
    Stratified(usize),
}

/// `(1/n) Σ_{k<n} f^k λ_L` as a weighted point cloud.
pub fn empirical_srb(
    sys: &dyn DynamicalSystem,
    disc: &UnstableDisc,
    n: usize,
    sampling: DiscSampling,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidArgument("Cesàro length must be at least 1".into()));
    }
    let (starts, w0): (Vec<DVector<f64>>, Vec<f64>) = match sampling {
        DiscSampling::Nodes => (disc.nodes.clone(), disc.weights.clone()),
        DiscSampling::Stratified(s) => {
            if s == 0 {
                return Err(Error::InvalidArgument("need at least one sample".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::with_capacity(s);
            for j in 0..s {
                let u = (j as f64 + rng.gen::<f64>()) / s as f64;
                pts.push(disc.point_at(sys, disc.param_at_fraction(u))?);
            }
            (pts, vec![1.0 / s as f64; s])
        }
    };
    let d = sys.dim();
    let mut coords = Vec::with_capacity(starts.len() * n * d);
    let mut weights = Vec::with_capacity(starts.len() * n);
    let mut buf = vec![0.0; d];
    for (p, w) in starts.iter().zip(&w0) {
        let mut cur = p.as_slice().to_vec();
        for k in 0..n {
            coords.extend_from_slice(&cur);
            weights.push(w / n as f64);
            if k + 1 < n {
                sys.map_into(&cur, &mut buf);
                if !sys.basin().contains(&buf) {
                    return Err(Error::OrbitEscapesBasin {
                        step: k + 1,
                        point: buf.clone(),
                    });
                }
                std::mem::swap(&mut cur, &mut buf);
            }
        }
    }
    Ok(EmpiricalMeasure {
        dim: d,
        coords,
        weights,
        n,
        samples: starts.len(),
        seed,
    })
}

/// `(1/n) Σ_{i<n} φ(fⁱx)`.
pub fn birkhoff_average(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    phi: &dyn Fn(&[f64]) -> f64,
    n: usize,
) -> Result<f64> {
    Ok(birkhoff_averages(sys, x, &[phi], n)?[0])
}

/// Several Birkhoff averages along one orbit.
pub fn birkhoff_averages(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    phis: &[&dyn Fn(&[f64]) -> f64],
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !sys.basin().contains(x) {
        return Err(Error::OrbitEscapesBasin {
            step: 0,
            point: x.to_vec(),
        });
    }
    let mut sums = vec![0.0; phis.len()];
    let mut cur = x.to_vec();
    let mut buf = vec![0.0; x.len()];
    for i in 0..n {
        for (s, phi) in sums.iter_mut().zip(phis) {
            *s += phi(&cur);
        }
        if i + 1 < n {
            sys.map_into(&cur, &mut buf);
            if !sys.basin().contains(&buf) {
                return Err(Error::OrbitEscapesBasin {
                    step: i + 1,
                    point: buf.clone(),
                });
            }
            std::mem::swap(&mut cur, &mut buf);
        }
    }
    Ok(sums.into_iter().map(|s| s / n as f64).collect())
}

/// Continuous observables that can be named in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Observable {
    Constant { value: f64 },
    /// `amplitude · cos(2π ⟨freq, x⟩ + phase)`.
    Trig {
        amplitude: f64,
        freq: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `x[axis]`.
    Coordinate { axis: usize },
}

impl Observable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::Constant { value } => *value,
            Observable::Trig {
                amplitude,
                freq,
                phase,
            } => {
                let s: f64 = freq.iter().zip(x).map(|(k, v)| k * v).sum();
                amplitude * (2.0 * std::f64::consts::PI * s + phase).cos()
            }
            Observable::Coordinate { axis } => x[*axis],
        }
    }
}

/// How points are grouped into local unstable pieces: by the cells of the
/// backward iterates `p₋₁ … p₋ₘ` along the listed coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceKey {
    pub depth: usize,
    pub cells_per_axis: usize,
    pub axes: Vec<usize>,
}

impl Default for PieceKey {
    fn default() -> Self {
        PieceKey {
            depth: 4,
            cells_per_axis: 2,
            axes: vec![0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalOptions {
    pub bins: usize,
    pub key: PieceKey,
    /// Minimum points for a piece to be histogrammed.
    pub min_points: usize,
    /// Minimum points in the whole neighbourhood.
    pub min_support: usize,
    /// Truncation depth of the comparison density.
    pub depth: usize,
}

impl Default for ConditionalOptions {
    fn default() -> Self {
        ConditionalOptions {
            bins: 32,
            key: PieceKey::default(),
            min_points: 2000,
            min_support: 100_000,
            depth: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PieceReport {
    pub key: Vec<usize>,
    pub points: usize,
    pub mass: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalReport {
    pub support: usize,
    pub pieces: Vec<PieceReport>,
    /// Pieces dropped because they were too small or did not span the
    /// neighbourhood.
    pub skipped: usize,
    pub max_l1: f64,
    pub mean_l1: f64,
    pub singular: bool,
}

/// Per-piece comparison of `μ` restricted to `V_{x,ε}` with the leaf
/// density on that piece. Pieces are `|s| < ρ` in the unstable coordinate
/// `s = N_uᵀ(p ⊖ x)` and within `ε` of `x` along `Eᶜˢ`.
pub fn conditional_density_check(
    sys: &dyn DynamicalSystem,
    mu: &EmpiricalMeasure,
    x: &[f64],
    eps: f64,
    rho: f64,
    cocycle: &CocycleOptions<'_>,
    opts: &ConditionalOptions,
) -> Result<ConditionalReport> {
    let sp = cocycle.provider.splitting_at(sys, x)?;
    let nu = sp.normal_u();
    if nu.ncols() != 1 {
        return Err(Error::InvalidArgument(
            "conditional densities are implemented for one-dimensional unstable bundles".into(),
        ));
    }
    let coord = |p: &[f64]| -> (f64, f64) {
        let dlt = sys.displacement(x, p);
        let s = (nu.transpose() * &dlt)[0];
        let st = (&sp.proj_cs * &dlt).norm();
        (s, st)
    };
    let mut inside = Vec::new();
    for i in 0..mu.len() {
        if mu.weights[i] <= 0.0 {
            continue;
        }
        let (s, st) = coord(mu.point(i));
        if s.abs() < rho && st <= eps {
            inside.push((i, s));
        }
    }
    let bins = opts.bins;
    let bin_of = |s: f64| (((s + rho) / (2.0 * rho) * bins as f64).floor() as usize).min(bins - 1);
    // Degenerate input: a single support point.
    let distinct = {
        let mut pts: Vec<&[f64]> = inside.iter().map(|(i, _)| mu.point(*i)).collect();
        pts.dedup_by(|a, b| sys.distance(a, b) < 1e-12);
        pts.len()
    };
    if distinct == 1 {
        let mut h = vec![0.0; bins];
        h[bin_of(inside[0].1)] = 1.0;
        let l1: f64 = h.iter().map(|v| (v - 1.0 / bins as f64).abs()).sum();
        return Ok(ConditionalReport {
            support: inside.len(),
            pieces: vec![PieceReport {
                key: Vec::new(),
                points: inside.len(),
                mass: 1.0,
                l1,
            }],
            skipped: 0,
            max_l1: l1,
            mean_l1: l1,
            singular: true,
        });
    }
    if inside.len() < opts.min_support {
        return Err(Error::Insufficient(format!(
            "{} points in the neighbourhood, need {}",
            inside.len(),
            opts.min_support
        )));
    }
    let mut groups: BTreeMap<Vec<usize>, Vec<(usize, f64)>> = BTreeMap::new();
    for &(i, s) in &inside {
        let key = piece_key(sys, mu.point(i), &opts.key, &cocycle.inverse)?;
        groups.entry(key).or_default().push((i, s));
    }
    let mut pieces = Vec::new();
    let mut skipped = 0;
    let edge = rho * (1.0 - 2.0 / bins as f64);
    for (key, members) in groups {
        let lo = members.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        if members.len() < opts.min_points || lo > -edge || hi < edge {
            skipped += 1;
            continue;
        }
        let mut hist = vec![0.0; bins];
        let mut mass = 0.0;
        for &(i, s) in &members {
            hist[bin_of(s)] += mu.weights[i];
            mass += mu.weights[i];
        }
        for h in hist.iter_mut() {
            *h /= mass;
        }
        // Representative leaf: the member closest to the centre line.
        let rep = members
            .iter()
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        let want = piece_bin_masses(sys, mu.point(rep.0), rep.1, rho, bins, &coord, cocycle, opts.depth)?;
        let l1 = hist.iter().zip(&want).map(|(a, b)| (a - b).abs()).sum();
        pieces.push(PieceReport {
            key,
            points: members.len(),
            mass,
            l1,
        });
    }
    if pieces.is_empty() {
        return Err(Error::Insufficient(format!(
            "no piece has {} points spanning the neighbourhood",
            opts.min_points
        )));
    }
    let total: f64 = pieces.iter().map(|p| p.mass).sum();
    let mean_l1 = pieces.iter().map(|p| p.l1 * p.mass).sum::<f64>() / total;
    let max_l1 = pieces.iter().map(|p| p.l1).fold(0.0, f64::max);
    Ok(ConditionalReport {
        support: inside.len(),
        pieces,
        skipped,
        max_l1,
        mean_l1,
        singular: max_l1 > 1.5,
    })
}

fn piece_key(
    sys: &dyn DynamicalSystem,
    p: &[f64],
    key: &PieceKey,
    inverse: &InverseOptions<'_>,
) -> Result<Vec<usize>> {
    let orbit = inverse_on_attractor(sys, p, key.depth, inverse)
        .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
    let b = sys.basin();
    Ok((1..=key.depth)
        .flat_map(|k| {
            let q = orbit.at(k);
            key.axes.iter().map(move |&a| {
                let u = (q[a] - b.lo[a]) / (b.hi[a] - b.lo[a]);
                ((u * key.cells_per_axis as f64).floor().max(0.0) as usize).min(key.cells_per_axis - 1)
            })
        })
        .collect())
}

/// Predicted bin masses of the normalized leaf density over `|s| < ρ` on the
/// leaf through `p` (unstable coordinate `s_p`).
#[allow(clippy::too_many_arguments)]
fn piece_bin_masses(
    sys: &dyn DynamicalSystem,
    p: &[f64],
    s_p: f64,
    rho: f64,
    bins: usize,
    coord: &dyn Fn(&[f64]) -> (f64, f64),
    cocycle: &CocycleOptions<'_>,
    depth: usize,
) -> Result<Vec<f64>> {
    let reach = rho + s_p.abs() + 2.0 * rho / bins as f64;
    let disc = UnstableDisc::leaf(sys, p, reach, cocycle.provider, UnstableNorm::Quotient, &cocycle.inverse)?;
    let dens = srb_density(sys, &disc, depth, cocycle)?;
    let mut out = vec![0.0; bins];
    for (i, node) in disc.nodes.iter().enumerate() {
        let (s, _) = coord(node.as_slice());
        if s.abs() >= rho {
            continue;
        }
        let b = (((s + rho) / (2.0 * rho) * bins as f64).floor() as usize).min(bins - 1);
        out[b] += dens.values[i] * disc.weights[i];
    }
    let z: f64 = out.iter().sum();
    if z <= 0.0 {
        return Err(Error::Insufficient("comparison leaf misses the neighbourhood".into()));
    }
    Ok(out.into_iter().map(|v| v / z).collect())
}

/// Finite-dimensional transversal `x₀ + span(E)` with offsets in `[−r, r]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transversal {
    pub anchor: Vec<f64>,
    /// Columns span the plane; orthonormalized before use.
    pub basis: Vec<Vec<f64>>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityRun {
    pub kato_gap: f64,
    pub fraction: f64,
    pub samples: usize,
    /// Fraction of samples passing each observable separately.
    pub per_observable: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub reference: Vec<f64>,
    pub plane: ObservabilityRun,
    pub perturbed: ObservabilityRun,
    pub tol: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObservabilityOptions {
    pub samples: usize,
    pub n: usize,
    pub tol: f64,
    /// Kato gap of the perturbed plane.
    pub delta: f64,
    pub seed: u64,
}

/// Fraction of Lebesgue-sampled points of a transversal plane whose Birkhoff
/// averages match the reference integrals, on the plane and on a plane at
/// Kato gap `delta`.
pub fn observability_test(
    sys: &dyn DynamicalSystem,
    reference: &EmpiricalMeasure,
    plane: &Transversal,
    phis: &[Observable],
    opts: &ObservabilityOptions,
) -> Result<ObservabilityReport> {
    let d = sys.dim();
    let cols: Vec<DVector<f64>> = plane
        .basis
        .iter()
        .map(|c| DVector::from_column_slice(c))
        .collect();
    if cols.is_empty() || cols.iter().any(|c| c.len() != d) || plane.anchor.len() != d {
        return Err(Error::DimensionMismatch("transversal basis".into()));
    }
    let e = orthonormalize(&DMatrix::from_columns(&cols));
    let ints: Vec<f64> = phis.iter().map(|p| reference.integrate(&|x| p.eval(x))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // Rotate every basis vector towards a random direction orthogonal to E by
    // the angle whose chord is `delta`.
    let perturbed = {
        let comp = crate::linalg::orthogonal_complement(&e);
        let mut out = e.clone();
        if comp.ncols() > 0 {
            let g: Vec<f64> = (0..comp.ncols()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let w = &comp * DVector::from_vec(g);
            let w = w.normalize();
            let theta = 2.0 * (opts.delta / 2.0).asin();
            let c0 = e.column(0).into_owned();
            let rotated = c0 * theta.cos() + w * theta.sin();
            out.set_column(0, &rotated);
        }
        out
    };
    let gap = crate::cocycle::kato_gap(&e, &perturbed)?;
    let plane_run = run_plane(sys, plane, &e, phis, &ints, opts, 0.0, opts.seed ^ 0x5eed)?;
    let perturbed_run = run_plane(sys, plane, &perturbed, phis, &ints, opts, gap, opts.seed ^ 0xbeef)?;
    Ok(ObservabilityReport {
        reference: ints,
        plane: plane_run,
        perturbed: perturbed_run,
        tol: opts.tol,
        n: opts.n,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_plane(
    sys: &dyn DynamicalSystem,
    plane: &Transversal,
    e: &DMatrix<f64>,
    phis: &[Observable],
    ints: &[f64],
    opts: &ObservabilityOptions,
    gap: f64,
    seed: u64,
) -> Result<ObservabilityRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = e.ncols();
    let fns: Vec<Box<dyn Fn(&[f64]) -> f64 + '_>> = phis
        .iter()
        .map(|p| Box::new(move |x: &[f64]| p.eval(x)) as Box<dyn Fn(&[f64]) -> f64>)
        .collect();
    let refs: Vec<&dyn Fn(&[f64]) -> f64> = fns.iter().map(|b| b.as_ref()).collect();
    let mut used = 0;
    let mut passed = 0;
    let mut per = vec![0usize; phis.len()];
    let mut attempts = 0;
    while used < opts.samples {
        attempts += 1;
        if attempts > opts.samples * 100 {
            break;
        }
        let t: Vec<f64> = (0..k).map(|_| (2.0 * rng.gen::<f64>() - 1.0) * plane.radius).collect();
        let offset = e * DVector::from_vec(t);
        let mut x = DVector::from_column_slice(&plane.anchor) + offset;
        sys.basin().wrap(x.as_mut_slice());
        if !sys.basin().contains(x.as_slice()) {
            continue;
        }
        let avgs = match birkhoff_averages(sys, x.as_slice(), &refs, opts.n) {
            Ok(a) => a,
            Err(Error::OrbitEscapesBasin { .. }) => continue,
            Err(e) => return Err(e),
        };
        used += 1;
        let mut all = true;
        for (j, (a, i)) in avgs.iter().zip(ints).enumerate() {
            if (a - i).abs() < opts.tol {
                per[j] += 1;
            } else {
                all = false;
            }
        }
        if all {
            passed += 1;
        }
    }
    if used == 0 {
        return Err(Error::PlaneMissesBasin);
    }
    Ok(ObservabilityRun {
        kato_gap: gap,
        fraction: passed as f64 / used as f64,
        samples: used,
        per_observable: per.into_iter().map(|c| c as f64 / used as f64).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{FatCat, LinearSystem, Solenoid};
    use crate::splitting::AnalyticSplitting;

    #[test]
    fn jacobian_examples() {
        let sol = Solenoid::classic();
        let cat = FatCat::default();
        for x in [[0.1, 0.2, -0.1], [0.73, -0.3, 0.4]] {
            let j = unstable_jacobian(&sol, &x, &AnalyticSplitting, UnstableNorm::Quotient).unwrap();
            assert!((j - 2.0).abs() < 1e-12, "{j}");
        }
        let j = unstable_jacobian(&cat, &[0.3, 0.6, 0.0], &AnalyticSplitting, UnstableNorm::Euclidean).unwrap();
        assert!((j - FatCat::lambda_max()).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        assert!((unstable_jacobian_euclidean(&rot, &e).unwrap() - 1.0).abs() < 1e-15);
        let sing = DMatrix::zeros(2, 2);
        assert!(matches!(unstable_jacobian_euclidean(&sing, &e), Err(Error::RankDeficient)));
    }

    #[test]
    fn disc_quadrature_is_normalized() {
        let sol = Solenoid::warped();
        let disc = UnstableDisc::leaf(
            &sol,
            &[0.3, 0.2, 0.1],
            0.1,
            &AnalyticSplitting,
            UnstableNorm::Quotient,
            &InverseOptions::default(),
        )
        .unwrap_err();
        // (0.3, 0.2, 0.1) is not on the attractor's backward-invariant tube.
        let _ = disc;
        let x = crate::dynsys::iterate(&sol, &[0.3, 0.0, 0.0], 40).unwrap().points[40].clone();
        let disc = UnstableDisc::leaf(&sol, x.as_slice(), 0.1, &AnalyticSplitting, UnstableNorm::Quotient, &InverseOptions::default()).unwrap();
        assert!((disc.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(disc.weights.iter().all(|w| *w > 0.0));
        let c = disc.center_arclength();
        assert!(c >= 0.1 * (1.0 - 1e-9) && disc.volume_total() - c >= 0.1 * (1.0 - 1e-9));
        // Quotient arclength on a solenoid leaf is the angle swept.
        let dtheta = crate::dynsys::centered(disc.nodes[disc.len() - 1][0] - disc.nodes[0][0]);
        assert!((dtheta - disc.volume_total()).abs() < 1e-6);
        // Nodes are on the leaf: pulling back keeps them within the fiber tube.
        assert!(disc.nodes.iter().all(|p| p[1].hypot(p[2]) < sol.tube_radius()));
    }

    #[test]
    fn constant_cocycle_gives_unit_ratio_and_density() {
        let sol = Solenoid::classic();
        let x = crate::dynsys::iterate(&sol, &[0.4, 0.0, 0.0], 40).unwrap().points[40].clone();
        let opts = CocycleOptions::new(&AnalyticSplitting);
        let disc = UnstableDisc::leaf(&sol, x.as_slice(), 0.05, &AnalyticSplitting, UnstableNorm::Quotient, &opts.inverse).unwrap();
        let r = cocycle_ratio(&sol, x.as_slice(), disc.nodes[200].as_slice(), 30, &opts).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(r.pass);
        let same = cocycle_ratio(&sol, x.as_slice(), x.as_slice(), 30, &opts).unwrap();
        assert_eq!(same.value, 1.0);
        let h = srb_density(&sol, &disc, 20, &opts).unwrap();
        assert!(h.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((h.integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_leaf_pair_rejected() {
        let sol = Solenoid::classic();
        let x = crate::dynsys::iterate(&sol, &[0.4, 0.0, 0.0], 40).unwrap().points[40].clone();
        let mut y = x.clone();
        y[1] += 0.01;
        let opts = CocycleOptions::new(&AnalyticSplitting);
        assert!(matches!(
            cocycle_ratio(&sol, x.as_slice(), y.as_slice(), 20, &opts),
            Err(Error::NotOnPatch(_))
        ));
    }

    #[test]
    fn one_step_measure_is_the_quadrature() {
        let cat = FatCat::default();
        let disc = UnstableDisc::leaf(&cat, &[0.2, 0.3, 0.0], 0.05, &AnalyticSplitting, UnstableNorm::Euclidean, &InverseOptions::default()).unwrap();
        let mu = empirical_srb(&cat, &disc, 1, DiscSampling::Nodes, 0).unwrap();
        assert_eq!(mu.len(), disc.len());
        for i in 0..mu.len() {
            assert_eq!(mu.weights[i], disc.weights[i]);
            assert_eq!(mu.point(i), disc.nodes[i].as_slice());
        }
        let mu = empirical_srb(&cat, &disc, 7, DiscSampling::Stratified(100), 3).unwrap();
        assert!((mu.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_trivial_cases() {
        let cat = FatCat::default();
        let c = birkhoff_average(&cat, &[0.1, 0.2, 0.0], &|_| 3.5, 100).unwrap();
        assert!((c - 3.5).abs() < 1e-14);
        let fixed = birkhoff_average(&cat, &[0.0, 0.0, 0.0], &|x| x[0] + 2.0, 50).unwrap();
        assert_eq!(fixed, 2.0);
        let lin = LinearSystem::new(vec![2.0, 0.5]);
        assert!(birkhoff_average(&lin, &[1e149, 0.0], &|_| 0.0, 10).is_err());
    }

    #[test]
    fn dirac_is_singular() {
        let sol = Solenoid::classic();
        let x = crate::dynsys::iterate(&sol, &[0.4, 0.0, 0.0], 40).unwrap().points[40].clone();
        let mu = EmpiricalMeasure::dirac(x.as_slice());
        let opts = CocycleOptions::new(&AnalyticSplitting);
        let r = conditional_density_check(&sol, &mu, x.as_slice(), 1.0, 0.1, &opts, &ConditionalOptions::default()).unwrap();
        assert!(r.singular);
        assert!((r.max_l1 - 2.0).abs() < 0.1);
    }

    #[test]
    fn observable_parsing() {
        let o: Observable = serde_json::from_str(r#"{"kind":"trig","amplitude":0.5,"freq":[1,0,0]}"#).unwrap();
        assert!((o.eval(&[0.25, 0.0, 0.0])).abs() < 1e-15);
        assert!(serde_json::from_str::<Observable>(r#"{"kind":"constant","value":1,"x":2}"#).is_err());
    }
}
