//! Derivative cocycle: Lyapunov spectra, Oseledets subspaces, the gap metric
//! between subspaces, adapted norms and Hölder exponents of the splitting.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynsys::{
    attractor_sample, inverse_on_attractor, AttractorSample, BackwardOrbit, DynamicalSystem,
    InverseOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{
    fit_slope, median, min_singular, op_norm, orthogonal_complement, orthonormalize,
    orthonormalize_with_volume,
};
use crate::splitting::{Splitting, SplittingProvider};

/// Exponents closer than this are merged into one multiplicity.
pub const CLUSTER_TOL: f64 = 0.02;

/// Steps discarded before accumulating exponents.
pub const SPECTRUM_WARMUP: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSpectrum {
    /// `(λᵢ, mᵢ)`, strictly decreasing in `λᵢ`.
    pub entries: Vec<(f64, usize)>,
    /// Unmerged exponents, decreasing.
    pub raw: Vec<f64>,
    pub steps: usize,
}

impl LyapunovSpectrum {
    pub fn total_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// `Σ λᵢ⁺ mᵢ`.
    pub fn positive_sum(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 > 0.0)
            .map(|e| e.0 * e.1 as f64)
            .sum()
    }

    /// Merge a decreasing list of exponents into clusters of width `tol`.
    pub fn from_raw(raw: Vec<f64>, steps: usize, tol: f64) -> Self {
        let mut entries: Vec<(f64, usize)> = Vec::new();
        let mut sum = 0.0;
        let mut group: Vec<f64> = Vec::new();
        for &v in &raw {
            if let Some(&last) = group.last() {
                if last - v >= tol {
                    entries.push((sum / group.len() as f64, group.len()));
                    group.clear();
                    sum = 0.0;
                }
            }
            group.push(v);
            sum += v;
        }
        if !group.is_empty() {
            entries.push((sum / group.len() as f64, group.len()));
        }
        LyapunovSpectrum {
            entries,
            raw,
            steps,
        }
    }
}

/// QR cocycle exponents along the orbit of `x`: after a warm-up the frame is
/// propagated `n` steps and re-orthonormalized every `reorth_every` steps.
pub fn lyapunov_spectrum(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    n: usize,
    reorth_every: usize,
) -> Result<LyapunovSpectrum> {
    if n == 0 || reorth_every == 0 {
        return Err(Error::InvalidArgument("steps and reorth_every must be positive".into()));
    }
    let d = sys.dim();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut cur = DVector::from_column_slice(x);
    let mut sums = vec![0.0; d];
    let mut block = DMatrix::<f64>::identity(d, d);
    let total = SPECTRUM_WARMUP + n;
    for step in 0..total {
        let (next, df) = sys.map_and_deriv(cur.as_slice());
        if !sys.basin().contains(next.as_slice()) {
            return Err(Error::OrbitEscapesBasin {
                step: step + 1,
                point: next.as_slice().to_vec(),
            });
        }
        block = df * block;
        cur = next;
        let last = step + 1 == total;
        if (step + 1) % reorth_every == 0 || step + 1 == SPECTRUM_WARMUP || last {
            let (nq, diag) = orthonormalize_with_volume(&(&block * &q));
            if step >= SPECTRUM_WARMUP {
                for (s, r) in sums.iter_mut().zip(&diag) {
                    if !(*r > 1e-300) || !r.is_finite() {
                        return Err(Error::DegenerateCocycle { step });
                    }
                    *s += r.ln();
                }
            } else if diag.iter().any(|r| !(*r > 1e-300) || !r.is_finite()) {
                return Err(Error::DegenerateCocycle { step });
            }
            q = nq;
            block = DMatrix::identity(d, d);
        }
    }
    let mut raw: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    raw.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(LyapunovSpectrum::from_raw(raw, n, CLUSTER_TOL))
}

/// Subspace estimate with its convergence certificate.
#[derive(Debug, Clone, Serialize)]
pub struct SubspaceEstimate {
    pub basis: DMatrix<f64>,
    /// Gap between the estimates from depths `n` and `n − 1`.
    pub certificate: f64,
}

/// Seeded Gaussian `d × k` frame.
pub fn random_frame(d: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, k, |_, _| standard_normal(&mut rng));
    orthonormalize(&m)
}

/// Push `frame` forward along `points` (forward order); returns the frame at
/// each point, starting with the input at `points[0]`.
pub fn push_frames(
    sys: &dyn DynamicalSystem,
    points: &[DVector<f64>],
    frame: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(points.len());
    let mut f = frame.clone();
    out.push(f.clone());
    for p in &points[..points.len().saturating_sub(1)] {
        f = orthonormalize(&(sys.deriv(p.as_slice()) * f));
        out.push(f.clone());
    }
    out
}

/// Pull a coframe back along `points` with `Dfᵀ`; returns the coframe at each
/// point, the last being the input at `points[n]`.
pub fn pull_coframes(
    sys: &dyn DynamicalSystem,
    points: &[DVector<f64>],
    coframe: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let n = points.len();
    let mut out = vec![coframe.clone(); n];
    let mut w = coframe.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        w = orthonormalize(&(sys.deriv(points[k].as_slice()).transpose() * w));
        out[k] = w.clone();
    }
    out
}

pub fn unstable_subspace(
    sys: &dyn DynamicalSystem,
    bwd: &BackwardOrbit,
    du: usize,
    seed: u64,
    tol: f64,
) -> Result<SubspaceEstimate> {
    let n = bwd.depth();
    if n < 2 || du == 0 || du > sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "unstable subspace needs depth >= 2 and 0 < du <= d (depth {n}, du {du})"
        )));
    }
    let fwd = bwd.forward();
    let frame = random_frame(sys.dim(), du, seed);
    let a = push_frames(sys, &fwd, &frame).pop().unwrap();
    let b = push_frames(sys, &fwd[1..], &frame).pop().unwrap();
    let certificate = kato_gap(&a, &b)?;
    if certificate > tol {
        return Err(Error::NotConverged(format!(
            "unstable frame gap {certificate:e} after {n} steps"
        )));
    }
    Ok(SubspaceEstimate {
        basis: a,
        certificate,
    })
}

/// `Eᶜˢ(x)` as the annihilator of the dominant `dᵤ`-dimensional subspace of
/// the adjoint cocycle.
pub fn stable_subspace(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    n: usize,
    du: usize,
    seed: u64,
    tol: f64,
) -> Result<SubspaceEstimate> {
    if n < 2 || du == 0 || du >= sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "stable subspace needs n >= 2 and 0 < du < d (n {n}, du {du})"
        )));
    }
    let orbit = crate::dynsys::iterate(sys, x, n)?;
    let co = random_frame(sys.dim(), du, seed);
    let a = pull_coframes(sys, &orbit.points, &co)[0].clone();
    let b = pull_coframes(sys, &orbit.points[..n], &co)[0].clone();
    let sa = orthogonal_complement(&a);
    let sb = orthogonal_complement(&b);
    let certificate = kato_gap(&sa, &sb)?;
    if certificate > tol {
        return Err(Error::NotConverged(format!(
            "stable frame gap {certificate:e} after {n} steps"
        )));
    }
    Ok(SubspaceEstimate {
        basis: sa,
        certificate,
    })
}

/// Splittings computed from the cocycle itself.
#[derive(Debug, Clone)]
pub struct NumericalSplitting<'a> {
    pub depth: usize,
    pub seed: u64,
    pub tol: f64,
    pub sample: Option<&'a AttractorSample>,
}

impl Default for NumericalSplitting<'_> {
    fn default() -> Self {
        NumericalSplitting {
            depth: 40,
            seed: 0,
            tol: 1e-9,
            sample: None,
        }
    }
}

impl SplittingProvider for NumericalSplitting<'_> {
    fn splitting_at(&self, sys: &dyn DynamicalSystem, x: &[f64]) -> Result<Splitting> {
        let opts = InverseOptions {
            sample: self.sample,
            ..Default::default()
        };
        let bwd = inverse_on_attractor(sys, x, self.depth, &opts)?;
        let du = sys.unstable_dim();
        let eu = unstable_subspace(sys, &bwd, du, self.seed, self.tol)?;
        let ecs = stable_subspace(sys, x, self.depth, du, self.seed ^ 0x9e37, self.tol)?;
        Splitting::from_bases(&eu.basis, &ecs.basis)
    }
}

/// Gap between subspaces `E`, `F` (column bases, any dimensions):
/// `max(δ(E,F), δ(F,E))` with `δ(E,F) = sup_{v∈E,|v|=1} inf_{w∈F,|w|=1} |v−w|`.
///
/// For a unit `v` the nearest unit vector of `F` is `P_F v/|P_F v|`, at
/// distance `√(2 − 2|P_F v|)`, so `δ(E,F) = √(2 − 2σ_min(FᵀE))` when
/// `dim E ≤ dim F` and `√2` otherwise (some unit `v ∈ E` is orthogonal to `F`).
pub fn kato_gap(e: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<f64> {
    if e.nrows() != f.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions {} and {}",
            e.nrows(),
            f.nrows()
        )));
    }
    if e.ncols() == 0 || f.ncols() == 0 {
        return Err(Error::InvalidArgument("empty subspace".into()));
    }
    let qe = orthonormalize(e);
    let qf = orthonormalize(f);
    let one_sided = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        if a.ncols() > b.ncols() {
            return 2f64.sqrt();
        }
        // Largest principal angle θ from both its cosine and its sine, so
        // that small gaps keep full precision; |e − f| = 2 sin(θ/2).
        let cos = min_singular(&(b.transpose() * a)).min(1.0);
        let sin = op_norm(&(a - b * (b.transpose() * a)));
        2.0 * (0.5 * sin.atan2(cos)).sin()
    };
    Ok(one_sided(&qe, &qf).max(one_sided(&qf, &qe)))
}

/// Inner product `⟨·,·⟩'_x` built from truncated backward/forward sums.
#[derive(Debug, Clone, Serialize)]
pub struct AdaptedNorm {
    /// Gram matrix in ambient coordinates.
    pub gram: DMatrix<f64>,
    /// Gram blocks in the orthonormal `Eᵘ`, `Eˢ` bases of `splitting`.
    pub gram_u: DMatrix<f64>,
    pub gram_s: DMatrix<f64>,
    pub splitting: Splitting,
    /// Distortion bound `K(x)`: `|p|' ≤ K|p|`.
    pub distortion: f64,
    pub lambda: f64,
    pub horizon: usize,
    /// Estimated relative weight of the omitted tail.
    pub tail: f64,
}

impl AdaptedNorm {
    pub fn norm(&self, p: &DVector<f64>) -> f64 {
        (p.transpose() * &self.gram * p)[(0, 0)].max(0.0).sqrt()
    }

    /// Isometry `L_x : (ℝᵈ, |·|'_x) → (ℝᵈ, |·|)` mapping `Eᵘ` onto the first
    /// `dᵤ` axes and `Eˢ` onto the rest.
    pub fn chart_matrix(&self) -> Option<DMatrix<f64>> {
        let sp = &self.splitting;
        let ru = self.gram_u.clone().cholesky()?.l().transpose();
        let rs = self.gram_s.clone().cholesky()?.l().transpose();
        let du = sp.du();
        let d = sp.dim();
        let mut l = DMatrix::zeros(d, d);
        l.rows_mut(0, du)
            .copy_from(&(ru * sp.eu.transpose() * &sp.proj_u));
        l.rows_mut(du, d - du)
            .copy_from(&(rs * sp.ecs.transpose() * &sp.proj_cs));
        Some(l)
    }
}

/// Outcome of the one-step checks of an adapted norm.
#[derive(Debug, Clone, Serialize)]
pub struct AdaptedNormCheck {
    pub min_expansion: f64,
    pub max_contraction: f64,
    pub required_expansion: f64,
    pub required_contraction: f64,
    pub min_lower_ratio: f64,
    pub max_upper_ratio: f64,
    pub pass: bool,
}

/// Restriction of `Df_x` to a bundle, in orthonormal frames at `x` and `fx`.
fn bundle_block(df: &DMatrix<f64>, from: &DMatrix<f64>, to: &DMatrix<f64>) -> DMatrix<f64> {
    to.transpose() * df * from
}

/// Truncated sums for the adapted norm. Frames of both bundles are taken
/// from `field` at every orbit point: propagating a single frame would let
/// roundoff components in the other bundle grow and swamp the sum.
pub fn lyapunov_norm(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    field: &dyn SplittingProvider,
    lambda: f64,
    horizon: usize,
    tail_tol: f64,
    inverse: &InverseOptions<'_>,
) -> Result<AdaptedNorm> {
    let splitting = field.splitting_at(sys, x)?;
    let du = splitting.du();
    let ds = splitting.dcs();
    let bwd = inverse_on_attractor(sys, x, horizon, inverse)?;

    // Eᵘ: Σ e^{2nλ} CₙᵀCₙ with Cₙ = Bₙ⁻¹…B₁⁻¹; c holds e^{nλ}·Cₙ.
    let mut c = DMatrix::<f64>::identity(du, du);
    let mut gu = DMatrix::<f64>::identity(du, du);
    let mut last_u = (1.0, 1.0);
    let mut upper = splitting.eu.clone();
    for k in 1..=horizon {
        let p = bwd.at(k).as_slice();
        let lower = field.splitting_at(sys, p)?.eu;
        let b = bundle_block(&sys.deriv(p), &lower, &upper);
        let binv = b.try_inverse().ok_or(Error::DegenerateCocycle { step: k })?;
        c = binv * c * lambda.exp();
        let term = c.transpose() * &c;
        last_u = (last_u.1, op_norm(&term));
        gu += term;
        upper = lower;
    }

    // Eˢ: Σ e^{2nλ} TₙᵀTₙ with Tₙ = Dfⁿ|Eˢ; t holds e^{nλ}·Tₙ.
    let orbit = crate::dynsys::iterate(sys, x, horizon)?;
    let mut t = DMatrix::<f64>::identity(ds, ds);
    let mut gs = DMatrix::<f64>::identity(ds, ds);
    let mut last_s = (1.0, 1.0);
    let mut from = splitting.ecs.clone();
    for n in 0..horizon {
        let to = field.splitting_at(sys, orbit.points[n + 1].as_slice())?.ecs;
        let a = bundle_block(&sys.deriv(orbit.points[n].as_slice()), &from, &to);
        t = a * t * lambda.exp();
        let term = t.transpose() * &t;
        last_s = (last_s.1, op_norm(&term));
        gs += term;
        from = to;
    }

    let tail_of = |(prev, last): (f64, f64), g: &DMatrix<f64>| {
        let q = if prev > 0.0 { last / prev } else { 0.0 };
        if q >= 1.0 {
            return f64::INFINITY;
        }
        let lmin = g.symmetric_eigenvalues().min();
        last * q / (1.0 - q) / lmin
    };
    let tail = tail_of(last_u, &gu).max(tail_of(last_s, &gs));
    if !(tail <= tail_tol) {
        return Err(Error::TailNotConverged { tail });
    }

    let pu = splitting.eu.transpose() * &splitting.proj_u;
    let ps = splitting.ecs.transpose() * &splitting.proj_cs;
    let gram = pu.transpose() * &gu * &pu + ps.transpose() * &gs * &ps;
    let gram = (&gram + gram.transpose()) * 0.5;
    let distortion = gram.symmetric_eigenvalues().max().sqrt();
    Ok(AdaptedNorm {
        gram,
        gram_u: gu,
        gram_s: gs,
        splitting,
        distortion,
        lambda,
        horizon,
        tail,
    })
}

/// Check `|Df u|'_{fx} ≥ e^{λ−δ₀}|u|'_x` on `Eᵘ`, `|Df v|'_{fx} ≤ e^{−λ+δ₀}|v|'_x`
/// on `Eˢ`, and `(√3/3)|p| ≤ |p|'_x ≤ K|p|` for random vectors.
pub fn check_adapted_norm(
    sys: &dyn DynamicalSystem,
    at_x: &AdaptedNorm,
    at_fx: &AdaptedNorm,
    x: &[f64],
    delta0: f64,
    vectors: usize,
    seed: u64,
) -> AdaptedNormCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let df = sys.deriv(x);
    let sp = &at_x.splitting;
    let d = sp.dim();
    let mut min_exp = f64::INFINITY;
    let mut max_con: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..vectors {
        let a = DVector::from_fn(sp.du(), |_, _| standard_normal(&mut rng));
        let b = DVector::from_fn(sp.dcs(), |_, _| standard_normal(&mut rng));
        let u = &sp.eu * a;
        let v = &sp.ecs * b;
        min_exp = min_exp.min(at_fx.norm(&(&df * &u)) / at_x.norm(&u));
        max_con = max_con.max(at_fx.norm(&(&df * &v)) / at_x.norm(&v));
        let p = DVector::from_fn(d, |_, _| standard_normal(&mut rng));
        let r = at_x.norm(&p) / p.norm();
        lo = lo.min(r);
        hi = hi.max(r / at_x.distortion);
    }
    let required_expansion = (at_x.lambda - delta0).exp();
    let required_contraction = (-at_x.lambda + delta0).exp();
    AdaptedNormCheck {
        min_expansion: min_exp,
        max_contraction: max_con,
        required_expansion,
        required_contraction,
        min_lower_ratio: lo,
        max_upper_ratio: hi,
        pass: min_exp >= required_expansion
            && max_con <= required_contraction
            && lo >= 3f64.sqrt() / 3.0
            && hi <= 1.0 + 1e-12,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bundle {
    U,
    S,
}

#[derive(Debug, Clone)]
pub struct HolderOptions {
    pub seed: u64,
    pub depth: usize,
    /// Gaps at or below this are roundoff and excluded from the fit.
    pub noise_floor: f64,
    /// `α` of the `C^{1+α}` hypothesis.
    pub alpha: f64,
    pub fit_slack: f64,
    pub spectrum_steps: usize,
}

impl Default for HolderOptions {
    fn default() -> Self {
        HolderOptions {
            seed: 0,
            depth: 40,
            noise_floor: 1e-12,
            alpha: 1.0,
            fit_slack: 0.05,
            spectrum_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub bundle: Bundle,
    /// Empirical exponent; `+∞` when every gap is below the noise floor.
    pub beta: f64,
    pub beta_star: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub a: f64,
    pub sup_df: f64,
    pub lipschitz: f64,
    /// `(|x − y|, gap)` per pair.
    pub pairs: Vec<(f64, f64)>,
    pub fitted_pairs: usize,
    pub pass: bool,
}

/// Fit the Hölder exponent of `Eᵘ` or `Eˢ` over nearby attractor pairs and
/// compare with the lower bound
/// `β* = α(λ₁−λ₂)/(log a − λ₁)` (u) or `α(λ₁−λ₂)/(log a − λ₂)` (s), where
/// `a` exceeds `sup‖Df‖·max(1, L)^α` with `L` the Lipschitz constant of `f⁻¹`
/// (u) or `f` (s) on the attractor.
pub fn holder_exponent_estimate(
    sys: &dyn DynamicalSystem,
    which: Bundle,
    n_pairs: usize,
    opts: &HolderOptions,
) -> Result<HolderEstimate> {
    let du = sys.unstable_dim();
    let sample = attractor_sample(sys, n_pairs.max(16), 60, opts.seed)?;
    let spec = lyapunov_spectrum(sys, sample.points[0].as_slice(), opts.spectrum_steps, 1)?;
    let lambda1 = spec.raw[du - 1];
    let lambda2 = spec.raw[du];

    let mut sup_df: f64 = 0.0;
    let mut lip_inv: f64 = 0.0;
    for p in &sample.points {
        let df = sys.deriv(p.as_slice());
        sup_df = sup_df.max(op_norm(&df));
        lip_inv = lip_inv.max(1.0 / min_singular(&df));
    }
    let lipschitz = match which {
        Bundle::U => lip_inv,
        Bundle::S => sup_df,
    };
    let a = sup_df * lipschitz.max(1.0).powf(opts.alpha) * (1.0 + 1e-9);
    let beta_star = match which {
        Bundle::U => opts.alpha * (lambda1 - lambda2) / (a.ln() - lambda1),
        Bundle::S => opts.alpha * (lambda1 - lambda2) / (a.ln() - lambda2),
    };

    // Pairs: perturb the backward point and return, which keeps y on the
    // attractor up to the fiber contraction.
    let back = 12usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let field = |p: &[f64]| -> Result<DMatrix<f64>> {
        match which {
            Bundle::U => {
                let bwd = inverse_on_attractor(sys, p, opts.depth, &InverseOptions::default())?;
                Ok(unstable_subspace(sys, &bwd, du, opts.seed, 1e-9)?.basis)
            }
            Bundle::S => Ok(stable_subspace(sys, p, opts.depth, du, opts.seed, 1e-9)?.basis),
        }
    };
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let x = &sample.points[i % sample.points.len()];
        let bwd = inverse_on_attractor(sys, x.as_slice(), back, &InverseOptions::default())?;
        let r = 10f64.powf(rng.gen_range(-9.0..-3.0));
        let dir = DVector::from_fn(sys.dim(), |_, _| standard_normal(&mut rng));
        let dir = &dir / dir.norm() * r;
        let mut y = sys.translate(bwd.at(back).as_slice(), dir.as_slice());
        for _ in 0..back {
            y = sys.map(&y);
        }
        let dist = sys.distance(x.as_slice(), y.as_slice());
        if dist == 0.0 || dist > 0.1 {
            continue;
        }
        let g = kato_gap(&field(x.as_slice())?, &field(y.as_slice())?)?;
        pairs.push((dist, g));
    }
    if pairs.len() < 8 {
        return Err(Error::Insufficient(format!("{} usable pairs", pairs.len())));
    }
    let fitted: Vec<(f64, f64)> = pairs
        .iter()
        .cloned()
        .filter(|p| p.1 > opts.noise_floor)
        .collect();
    let beta = if fitted.len() < 4 {
        f64::INFINITY
    } else {
        decade_median_slope(&fitted)
    };
    let pass = beta >= beta_star - opts.fit_slack;
    Ok(HolderEstimate {
        bundle: which,
        beta,
        beta_star,
        lambda1,
        lambda2,
        a,
        sup_df,
        lipschitz,
        fitted_pairs: fitted.len(),
        pairs,
        pass,
    })
}

/// Median of slopes between per-decade medians of `(log dist, log gap)`.
fn decade_median_slope(pairs: &[(f64, f64)]) -> f64 {
    use std::collections::BTreeMap;
    let mut buckets: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for &(d, g) in pairs {
        let e = buckets.entry(d.log10().floor() as i64).or_default();
        e.0.push(d.ln());
        e.1.push(g.ln());
    }
    let pts: Vec<(f64, f64)> = buckets
        .values()
        .filter(|b| b.0.len() >= 2)
        .map(|b| (median(&b.0), median(&b.1)))
        .collect();
    if pts.len() < 2 {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
        return fit_slope(&xs, &ys);
    }
    let mut slopes = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            slopes.push((pts[j].1 - pts[i].1) / (pts[j].0 - pts[i].0));
        }
    }
    median(&slopes)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
