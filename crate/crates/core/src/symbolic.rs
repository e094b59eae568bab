//! Shadowing, periodic closing, Markov partitions and the symbolic coding.
//!
//! Partitions are exact geometric objects. On the fat-cat torus factor a
//! rectangle is a product of an unstable and a stable interval in the
//! eigen-coordinates of the automorphism; on the solenoids it is an angular
//! interval times the set of attractor points with a fixed finite backward
//! branch word. Refinement intersects rectangles with images and preimages
//! of rectangles, so refined partitions stay exactly Markov.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use nalgebra::DVector;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynsys::{iterate, wrap_unit, DynamicalSystem, FatCat, OrbitSegment, Solenoid, PHI};
use crate::error::{Error, Result};
use crate::holonomy::expansivity_check;
use crate::shooting::{solve_cyclic, solve_open, NewtonOptions};
use crate::splitting::SplittingProvider;

// ---------------------------------------------------------------------------
// Pseudo-orbits and shadowing
// ---------------------------------------------------------------------------

/// Finite sequence with `|f(xᵢ) − xᵢ₊₁| ≤ α`; periodic sequences also close
/// up, `|f(x_{n−1}) − x₀| ≤ α`.
#[derive(Debug, Clone, Serialize)]
pub struct PseudoOrbit {
    pub points: Vec<DVector<f64>>,
    /// Measured defect, never above `alpha`.
    pub defect: f64,
    pub alpha: f64,
    pub periodic: bool,
}

impl PseudoOrbit {
    pub fn new(sys: &dyn DynamicalSystem, points: Vec<DVector<f64>>, alpha: f64, periodic: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty pseudo-orbit".into()));
        }
        let n = points.len();
        let steps = if periodic { n } else { n - 1 };
        let mut defect: f64 = 0.0;
        for i in 0..steps {
            let fx = sys.map(&points[i]);
            defect = defect.max(sys.distance(fx.as_slice(), points[(i + 1) % n].as_slice()));
        }
        if defect > alpha {
            return Err(Error::InvalidArgument(format!(
                "pseudo-orbit defect {defect:e} exceeds the declared {alpha:e}"
            )));
        }
        Ok(PseudoOrbit {
            points,
            defect,
            alpha,
            periodic,
        })
    }

    /// True orbit of `x` of `len` points, each step displaced by a random
    /// vector of length below `alpha`.
    pub fn perturbed(sys: &dyn DynamicalSystem, x: &[f64], len: usize, alpha: f64, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("empty pseudo-orbit".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sys.dim();
        let mut points = vec![DVector::from_column_slice(x)];
        for step in 1..len {
            let fx = sys.map(points.last().unwrap());
            let g: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let r = alpha * 0.999 * rng.gen::<f64>();
            let noise = g.normalize() * r;
            let y = sys.translate(fx.as_slice(), noise.as_slice());
            if !sys.basin().contains(y.as_slice()) {
                return Err(Error::OrbitEscapesBasin {
                    step,
                    point: y.as_slice().to_vec(),
                });
            }
            points.push(y);
        }
        PseudoOrbit::new(sys, points, alpha, false)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ShadowOptions {
    pub newton: NewtonOptions,
    /// Exact backward iterates prepended to an open pseudo-orbit, so that the
    /// shadow starts on the attractor.
    pub extend_backward: usize,
}


#[derive(Debug, Clone, Serialize)]
pub struct Shadow {
    pub orbit: OrbitSegment,
    /// `sup |yᵢ − xᵢ|` over the pseudo-orbit.
    pub beta: f64,
    pub newton_steps: usize,
    pub residual: f64,
    pub periodic: bool,
}

/// True orbit within `beta_target` of a pseudo-orbit. Open segments pin the
/// centre-stable part of the first point and the unstable part of the last;
/// periodic ones are solved on the cyclic system.
pub fn shadow(
    sys: &dyn DynamicalSystem,
    pseudo: &PseudoOrbit,
    beta_target: f64,
    provider: &dyn SplittingProvider,
    opts: &ShadowOptions,
) -> Result<Shadow> {
    let (anchors, pre) = if !pseudo.periodic && opts.extend_backward > 0 {
        let back = crate::dynsys::inverse_on_attractor(
            sys,
            pseudo.points[0].as_slice(),
            opts.extend_backward,
            &Default::default(),
        )
        .map_err(|e| Error::BackwardOrbitFailure(e.to_string()))?;
        let mut v = back.forward();
        v.pop();
        let pre = v.len();
        v.extend(pseudo.points.iter().cloned());
        (v, pre)
    } else {
        (pseudo.points.clone(), 0)
    };
    let sol = if pseudo.periodic {
        solve_cyclic(sys, &anchors, &opts.newton)?
    } else if anchors.len() == 1 {
        crate::shooting::ShootingSolution {
            points: anchors.clone(),
            steps: 0,
            residual: 0.0,
        }
    } else {
        let first = provider.splitting_at(sys, anchors[0].as_slice())?;
        let last = provider.splitting_at(sys, anchors.last().unwrap().as_slice())?;
        solve_open(
            sys,
            &anchors,
            &first.normal_cs().transpose(),
            &last.normal_u().transpose(),
            &opts.newton,
        )?
    };
    let points: Vec<DVector<f64>> = sol.points[pre..].to_vec();
    let beta = points
        .iter()
        .zip(&pseudo.points)
        .map(|(y, x)| sys.distance(y.as_slice(), x.as_slice()))
        .fold(0.0, f64::max);
    if beta > beta_target {
        return Err(Error::NewtonDiverged(format!(
            "shadow distance {beta:e} exceeds the target {beta_target:e}"
        )));
    }
    Ok(Shadow {
        orbit: OrbitSegment {
            points,
            derivative_frames: None,
        },
        beta,
        newton_steps: sol.steps,
        residual: sol.residual,
        periodic: pseudo.periodic,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicPoint {
    pub point: DVector<f64>,
    pub orbit: Vec<DVector<f64>>,
    pub period: usize,
    /// `|fⁿx − x|` of the starting point.
    pub return_defect: f64,
    /// `|y − x|`.
    pub closing_distance: f64,
    /// `|fⁿy − y|`.
    pub residual: f64,
}

/// Periodic point near a near-return `|fⁿx − x| < α`, from the cyclic
/// pseudo-orbit `x, fx, …, fⁿ⁻¹x`.
pub fn close_periodic(
    sys: &dyn DynamicalSystem,
    x: &[f64],
    n: usize,
    alpha: f64,
    eps: f64,
    opts: &NewtonOptions,
) -> Result<PeriodicPoint> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let orbit = iterate(sys, x, n)?.points;
    let return_defect = sys.distance(orbit[n].as_slice(), x);
    if return_defect >= alpha {
        return Err(Error::InvalidArgument(format!(
            "return defect {return_defect:e} is not below {alpha:e}"
        )));
    }
    let pseudo = PseudoOrbit::new(sys, orbit[..n].to_vec(), alpha, true)?;
    let sol = solve_cyclic(sys, &pseudo.points, opts)?;
    let y = sol.points[0].clone();
    let back = iterate(sys, y.as_slice(), n)?.points;
    let residual = sys.distance(back[n].as_slice(), y.as_slice());
    if residual > 1e-10 {
        return Err(Error::NewtonDiverged(format!("closing residual {residual:e}")));
    }
    let closing_distance = sys.distance(y.as_slice(), x);
    if closing_distance >= eps {
        return Err(Error::NewtonDiverged(format!(
            "closing moved {closing_distance:e}, not below {eps:e}"
        )));
    }
    Ok(PeriodicPoint {
        point: y,
        orbit: sol.points,
        period: n,
        return_defect,
        closing_distance,
        residual,
    })
}

/// Distinct points of period dividing `n` found by closing every near-return
/// of a sample.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicCensus {
    pub period: usize,
    pub samples: usize,
    pub near_returns: usize,
    pub failures: usize,
    pub points: Vec<DVector<f64>>,
}

impl PeriodicCensus {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Points closer than this are one periodic point.
const DEDUP_TOL: f64 = 1e-8;

pub fn periodic_census(
    sys: &dyn DynamicalSystem,
    samples: &[DVector<f64>],
    n: usize,
    alpha: f64,
    eps: f64,
    opts: &NewtonOptions,
) -> Result<PeriodicCensus> {
    let periodic = sys.basin().periodic.clone();
    let grid: f64 = 1e-6;
    let cells_per_unit = (1.0 / grid).round() as i64;
    let key_of = |p: &[f64]| -> Vec<i64> {
        p.iter()
            .enumerate()
            .map(|(i, v)| {
                let k = (v / grid).round() as i64;
                if periodic[i] {
                    k.rem_euclid(cells_per_unit)
                } else {
                    k
                }
            })
            .collect()
    };
    let mut table: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut near = 0;
    let mut failures = 0;
    let d = sys.dim();
    for x in samples {
        let orbit = iterate(sys, x.as_slice(), n)?;
        if sys.distance(orbit.points[n].as_slice(), x.as_slice()) >= alpha {
            continue;
        }
        near += 1;
        let y = match close_periodic(sys, x.as_slice(), n, alpha, eps, opts) {
            Ok(p) => p.point,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let key = key_of(y.as_slice());
        let mut found = false;
        'search: for code in 0..3usize.pow(d as u32) {
            let mut nk = key.clone();
            let mut c = code;
            for (i, k) in nk.iter_mut().enumerate() {
                *k += (c % 3) as i64 - 1;
                c /= 3;
                if periodic[i] {
                    *k = k.rem_euclid(cells_per_unit);
                }
            }
            if let Some(ids) = table.get(&nk) {
                for &id in ids {
                    if sys.distance(points[id].as_slice(), y.as_slice()) < DEDUP_TOL {
                        found = true;
                        break 'search;
                    }
                }
            }
        }
        if !found {
            table.entry(key).or_default().push(points.len());
            points.push(y);
        }
    }
    Ok(PeriodicCensus {
        period: n,
        samples: samples.len(),
        near_returns: near,
        failures,
        points,
    })
}

// ---------------------------------------------------------------------------
// Partition geometry
// ---------------------------------------------------------------------------

/// Closure tolerance in local rectangle coordinates.
const CLOSURE_TOL: f64 = 1e-9;

/// Default rectangle budget of the refinement.
pub const REFINEMENT_BUDGET: usize = 4096;

/// Unit eigenvectors `(eᵘ, eˢ)` of the fat-cat torus factor.
fn torus_frame() -> ([f64; 2], [f64; 2]) {
    let n = (PHI * PHI + 1.0).sqrt();
    ([PHI / n, 1.0 / n], [-1.0 / n, PHI / n])
}

fn to_plane(xy: [f64; 2]) -> [f64; 2] {
    let (eu, es) = torus_frame();
    [xy[0] * eu[0] + xy[1] * eu[1], xy[0] * es[0] + xy[1] * es[1]]
}

fn from_plane(us: [f64; 2]) -> [f64; 2] {
    let (eu, es) = torus_frame();
    [us[0] * eu[0] + us[1] * es[0], us[0] * eu[1] + us[1] * es[1]]
}

/// Geometric description of one rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cell {
    /// `corner + [0, w]·eᵘ + [0, h]·eˢ` in the eigen-plane of the torus
    /// factor, modulo the integer lattice; `z = 0`.
    Torus { corner: [f64; 2], w: f64, h: f64 },
    /// Angles in `[lo, hi]` with backward half-itinerary `word` (`word[k]`
    /// is the half containing `θ₋ₖ₋₁`).
    Solenoid { lo: f64, hi: f64, word: Vec<usize> },
    /// Axis-aligned box on the torus factor; not a rectangle of the
    /// dynamics, used as a negative control.
    Box { lo: [f64; 2], hi: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartitionKind {
    /// Fat-cat attractor `T² × {0}`.
    Torus,
    Solenoid { contraction: f64, warp: f64 },
    /// Boxes on the fat-cat torus.
    Boxes,
}

/// Where a point sits relative to one rectangle: distances to `∂ˢR` (along
/// the unstable direction) and to `∂ᵘR` (along the stable direction), and
/// the local coordinates used to rebuild fibers.
#[derive(Debug, Clone, Copy)]
struct Local {
    to_s: f64,
    to_u: f64,
    a: f64,
    b: f64,
    shift: [f64; 2],
}

impl Local {
    fn depth(&self) -> f64 {
        self.to_s.min(self.to_u)
    }
}

/// Coordinates of a point needed by every rectangle test.
#[derive(Debug, Clone)]
enum Probe {
    Plane { xy: [f64; 2], z: f64 },
    Circle {
        theta: f64,
        back: Vec<usize>,
        /// First backward step whose half is not resolvable.
        ambiguous: usize,
    },
}

/// Solenoid backward words are resolved this deep.
const PROBE_DEPTH: usize = 24;

/// Length of random branch words used to place sample points.
const WORD_SAMPLE: usize = 40;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rectangle {
    pub id: usize,
    pub cell: Cell,
    pub center: Vec<f64>,
    pub diameter: f64,
    /// Samples of `Wᵘ(center, R)`.
    pub u_fiber: Vec<Vec<f64>>,
    /// Samples of `Wˢ(center, R)`.
    pub s_fiber: Vec<Vec<f64>>,
    /// Samples of `∂ˢR`, the stable fibers bounding the unstable extent.
    pub boundary_s: Vec<Vec<f64>>,
    /// Samples of `∂ᵘR`.
    pub boundary_u: Vec<Vec<f64>>,
    /// Closure of its interior (positive extent in both directions).
    pub proper: bool,
}

/// Membership of a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Membership {
    Interior(usize),
    /// In the closure of some rectangle but interior to none.
    Boundary,
    /// Interior to several rectangles.
    Overlap(Vec<usize>),
    Outside,
}

/// Finite cover of the attractor by rectangles with disjoint interiors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovPartition {
    pub kind: PartitionKind,
    pub rectangles: Vec<Rectangle>,
    /// Largest rectangle diameter.
    pub beta: f64,
    /// Interiority margin in local coordinates.
    pub margin: f64,
    #[serde(skip)]
    index: Vec<Vec<usize>>,
    #[serde(skip)]
    sol: Option<Solenoid>,
}

const GRID: usize = 32;

impl MarkovPartition {
    pub fn from_cells(kind: PartitionKind, cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidArgument("partition needs a rectangle".into()));
        }
        let mut p = MarkovPartition {
            kind,
            rectangles: Vec::new(),
            beta: 0.0,
            margin: 0.0,
            index: Vec::new(),
            sol: None,
        };
        p.reindex_solenoid();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut rects = Vec::with_capacity(cells.len());
        for (id, cell) in cells.into_iter().enumerate() {
            rects.push(p.describe(id, cell, &mut rng));
        }
        p.beta = rects.iter().map(|r| r.diameter).fold(0.0, f64::max);
        p.margin = 1e-4 * p.beta;
        p.rectangles = rects;
        p.reindex();
        Ok(p)
    }

    /// The two Adler–Weiss squares of the cat automorphism, with sides
    /// `φ/√(1+φ²)` and `1/√(1+φ²)`, cornered at the fixed point.
    pub fn cat_adler_weiss() -> Result<Self> {
        let n = (PHI * PHI + 1.0).sqrt();
        let (a, b) = (PHI / n, 1.0 / n);
        MarkovPartition::from_cells(
            PartitionKind::Torus,
            vec![
                Cell::Torus {
                    corner: [0.0, 0.0],
                    w: a,
                    h: a,
                },
                Cell::Torus {
                    corner: [0.0, a],
                    w: b,
                    h: b,
                },
            ],
        )
    }

    /// Adler–Weiss squares with the large square cut along a preimage of the
    /// stable boundary so that every transition is realized once: three
    /// rectangles and a 0/1 transition matrix.
    pub fn cat_classic() -> Result<Self> {
        let aw = MarkovPartition::cat_adler_weiss()?;
        let mut cells = Vec::new();
        for r in &aw.rectangles {
            let mut pieces: Vec<(usize, Cell)> = Vec::new();
            for (j, t) in aw.rectangles.iter().enumerate() {
                for c in aw.intersect(&r.cell, &t.cell, true) {
                    pieces.push((j, c));
                }
            }
            pieces.sort_by(|x, y| torus_u(&x.1).partial_cmp(&torus_u(&y.1)).unwrap());
            // Merge runs of adjacent strips with distinct targets.
            let mut group: Vec<(usize, Cell)> = Vec::new();
            for (j, c) in pieces {
                let fits = group.iter().all(|(k, _)| *k != j);
                if !fits {
                    cells.push(merge_strips(&group));
                    group.clear();
                }
                group.push((j, c));
            }
            if !group.is_empty() {
                cells.push(merge_strips(&group));
            }
        }
        MarkovPartition::from_cells(PartitionKind::Torus, cells)
    }

    /// Angular halves `[0, ½]`, `[½, 1]` of a solenoid.
    pub fn solenoid_halves(sys: &Solenoid) -> Result<Self> {
        MarkovPartition::from_cells(
            PartitionKind::Solenoid {
                contraction: sys.contraction,
                warp: sys.warp,
            },
            vec![
                Cell::Solenoid {
                    lo: 0.0,
                    hi: 0.5,
                    word: vec![],
                },
                Cell::Solenoid {
                    lo: 0.5,
                    hi: 1.0,
                    word: vec![],
                },
            ],
        )
    }

    /// `k × k` grid of boxes on the torus.
    pub fn boxes(k: usize) -> Result<Self> {
        let h = 1.0 / k as f64;
        let mut cells = Vec::new();
        for i in 0..k {
            for j in 0..k {
                cells.push(Cell::Box {
                    lo: [i as f64 * h, j as f64 * h],
                    hi: [(i + 1) as f64 * h, (j + 1) as f64 * h],
                });
            }
        }
        MarkovPartition::from_cells(PartitionKind::Boxes, cells)
    }

    pub fn len(&self) -> usize {
        self.rectangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    /// Restore the lookup structures after deserialization.
    pub fn reindex(&mut self) {
        self.reindex_solenoid();
        let g = GRID;
        let mut index = vec![Vec::new(); if self.is_circle() { g } else { g * g }];
        for (id, r) in self.rectangles.iter().enumerate() {
            match &r.cell {
                Cell::Solenoid { lo, hi, .. } => {
                    let a = ((lo - 1e-6) * g as f64).floor() as i64;
                    let b = ((hi + 1e-6) * g as f64).floor() as i64;
                    for k in a..=b {
                        let k = k.rem_euclid(g as i64) as usize;
                        if !index[k].contains(&id) {
                            index[k].push(id);
                        }
                    }
                }
                Cell::Torus { .. } | Cell::Box { .. } => {
                    let (lo, hi) = plane_bbox(&r.cell);
                    let lo = [lo[0] - 1e-6, lo[1] - 1e-6];
                    let hi = [hi[0] + 1e-6, hi[1] + 1e-6];
                    let x0 = (lo[0] * g as f64).floor() as i64;
                    let x1 = (hi[0] * g as f64).floor() as i64;
                    let y0 = (lo[1] * g as f64).floor() as i64;
                    let y1 = (hi[1] * g as f64).floor() as i64;
                    for i in x0..=x1.min(x0 + g as i64 - 1) {
                        for j in y0..=y1.min(y0 + g as i64 - 1) {
                            let k = i.rem_euclid(g as i64) as usize * g + j.rem_euclid(g as i64) as usize;
                            if !index[k].contains(&id) {
                                index[k].push(id);
                            }
                        }
                    }
                }
            }
        }
        self.index = index;
    }

    fn reindex_solenoid(&mut self) {
        self.sol = match self.kind {
            PartitionKind::Solenoid { contraction, warp } => Some(Solenoid::new(contraction, warp)),
            _ => None,
        };
    }

    fn is_circle(&self) -> bool {
        matches!(self.kind, PartitionKind::Solenoid { .. })
    }

    fn solenoid(&self) -> &Solenoid {
        self.sol.as_ref().expect("solenoid partition")
    }

    fn max_word(&self) -> usize {
        self.rectangles
            .iter()
            .map(|r| match &r.cell {
                Cell::Solenoid { word, .. } => word.len(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    fn probe(&self, sys: &dyn DynamicalSystem, x: &[f64], depth: usize) -> Probe {
        match self.kind {
            PartitionKind::Torus | PartitionKind::Boxes => Probe::Plane {
                xy: [wrap_unit(x[0]), wrap_unit(x[1])],
                z: x.get(2).copied().unwrap_or(0.0),
            },
            PartitionKind::Solenoid { .. } => {
                let mut back = Vec::with_capacity(depth);
                let mut ambiguous = usize::MAX;
                let mut cur = DVector::from_column_slice(x);
                for k in 0..depth {
                    let pre = match sys.known_inverse(cur.as_slice()) {
                        Some(p) => p,
                        None => match crate::dynsys::inverse_on_attractor(sys, cur.as_slice(), 1, &Default::default()) {
                            Ok(o) => o.at(1).clone(),
                            Err(_) => {
                                ambiguous = ambiguous.min(k);
                                break;
                            }
                        },
                    };
                    let t = wrap_unit(pre[0]);
                    if (t.min(1.0 - t)).min((t - 0.5).abs()) < 1e-12 {
                        ambiguous = ambiguous.min(k);
                    }
                    back.push(usize::from(t >= 0.5));
                    cur = pre;
                }
                Probe::Circle {
                    theta: wrap_unit(x[0]),
                    back,
                    ambiguous,
                }
            }
        }
    }

    fn local(&self, cell: &Cell, probe: &Probe) -> Option<Local> {
        match (cell, probe) {
            (Cell::Torus { corner, w, h }, Probe::Plane { xy, .. }) => torus_local(*corner, *w, *h, *xy),
            (Cell::Box { lo, hi }, Probe::Plane { xy, .. }) => {
                let (wd, ht) = (hi[0] - lo[0], hi[1] - lo[1]);
                let q = [xy[0] - lo[0], xy[1] - lo[1]];
                let mut best: Option<Local> = None;
                for m0 in [q[0].floor() - 1.0, q[0].floor(), q[0].floor() + 1.0] {
                    for m1 in [q[1].floor() - 1.0, q[1].floor(), q[1].floor() + 1.0] {
                        let (a, b) = (q[0] - m0, q[1] - m1);
                        let l = Local {
                            to_s: a.min(wd - a),
                            to_u: b.min(ht - b),
                            a,
                            b,
                            shift: [m0, m1],
                        };
                        if l.to_s >= -CLOSURE_TOL
                            && l.to_u >= -CLOSURE_TOL
                            && best.is_none_or(|bb| l.depth() > bb.depth())
                        {
                            best = Some(l);
                        }
                    }
                }
                best
            }
            (Cell::Solenoid { lo, hi, word }, Probe::Circle { theta, back, ambiguous }) => {
                let mut to_u = f64::INFINITY;
                for (k, &w) in word.iter().enumerate() {
                    match back.get(k) {
                        Some(&b) if b == w => {}
                        _ if k >= *ambiguous => {
                            to_u = 0.0;
                            break;
                        }
                        _ => return None,
                    }
                }
                let mut best: Option<Local> = None;
                for t in [*theta, theta + 1.0] {
                    let to_s = (t - lo).min(hi - t);
                    if to_s >= -CLOSURE_TOL && best.is_none_or(|bb| to_s > bb.to_s) {
                        best = Some(Local {
                            to_s,
                            to_u,
                            a: t - lo,
                            b: 0.0,
                            shift: [0.0, 0.0],
                        });
                    }
                }
                best
            }
            _ => None,
        }
    }

    fn candidates(&self, probe: &Probe) -> Vec<usize> {
        if self.index.is_empty() {
            return (0..self.len()).collect();
        }
        let g = GRID;
        let k = match probe {
            Probe::Plane { xy, .. } => {
                let i = ((xy[0] * g as f64) as usize).min(g - 1);
                let j = ((xy[1] * g as f64) as usize).min(g - 1);
                i * g + j
            }
            Probe::Circle { theta, .. } => ((theta * g as f64) as usize).min(g - 1),
        };
        self.index[k].clone()
    }

    /// Rectangles whose closure contains the probe, with local data.
    fn locate(&self, probe: &Probe) -> Vec<(usize, Local)> {
        self.candidates(probe)
            .into_iter()
            .filter_map(|id| self.local(&self.rectangles[id].cell, probe).map(|l| (id, l)))
            .collect()
    }

    /// Backward steps needed to classify a point.
    fn probe_depth(&self) -> usize {
        self.max_word()
    }

    /// Backward steps needed to rebuild the unstable fiber of a point.
    fn fiber_depth(&self) -> usize {
        if self.is_circle() {
            PROBE_DEPTH.max(self.max_word())
        } else {
            0
        }
    }

    pub fn classify(&self, sys: &dyn DynamicalSystem, x: &[f64]) -> Membership {
        let probe = self.probe(sys, x, self.probe_depth());
        self.classify_probe(&probe)
    }

    fn classify_probe(&self, probe: &Probe) -> Membership {
        let hits = self.locate(probe);
        if hits.is_empty() {
            return Membership::Outside;
        }
        let inner: Vec<usize> = hits
            .iter()
            .filter(|(_, l)| l.depth() > self.margin)
            .map(|(id, _)| *id)
            .collect();
        match inner.len() {
            0 => Membership::Boundary,
            1 => Membership::Interior(inner[0]),
            _ => Membership::Overlap(inner),
        }
    }

    /// Rectangle whose closure contains `x` most deeply; ties go to the
    /// lower id. Used to assign symbols to boundary points.
    pub fn symbol(&self, sys: &dyn DynamicalSystem, x: &[f64]) -> Option<usize> {
        let probe = self.probe(sys, x, self.probe_depth());
        self.locate(&probe)
            .into_iter()
            .fold(None::<(usize, f64)>, |best, (id, l)| match best {
                Some((_, d)) if d >= l.depth() => best,
                _ => Some((id, l.depth())),
            })
            .map(|(id, _)| id)
    }

    fn closure_contains(&self, id: usize, probe: &Probe) -> bool {
        self.local(&self.rectangles[id].cell, probe).is_some()
    }

    fn on_stable_boundary(&self, probe: &Probe) -> bool {
        self.locate(probe).iter().any(|(_, l)| l.to_s.abs() <= CLOSURE_TOL)
    }

    fn on_unstable_boundary(&self, probe: &Probe) -> bool {
        self.locate(probe).iter().any(|(_, l)| l.to_u.abs() <= CLOSURE_TOL)
    }

    fn plane_point(xy: [f64; 2], z: f64) -> DVector<f64> {
        DVector::from_vec(vec![wrap_unit(xy[0]), wrap_unit(xy[1]), z])
    }

    fn random_word(&self, prefix: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut w = prefix.to_vec();
        while w.len() < WORD_SAMPLE {
            w.push(rng.gen_range(0..2));
        }
        w
    }

    /// Point of a rectangle at unstable fraction `u ∈ [0, 1]` and stable
    /// fraction `v ∈ [0, 1]` (random branch word on the solenoid).
    fn point_in(&self, cell: &Cell, u: f64, v: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match cell {
            Cell::Torus { corner, w, h } => {
                let xy = from_plane([corner[0] + u * w, corner[1] + v * h]);
                Self::plane_point(xy, 0.0)
            }
            Cell::Box { lo, hi } => Self::plane_point(
                [lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])],
                0.0,
            ),
            Cell::Solenoid { lo, hi, word } => {
                let word = self.random_word(word, rng);
                self.solenoid().point_with_history(lo + u * (hi - lo), &word)
            }
        }
    }

    /// Random point of the attractor, uniform in the natural coordinates.
    pub fn sample_attractor(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self.kind {
            PartitionKind::Torus | PartitionKind::Boxes => {
                Self::plane_point([rng.gen::<f64>(), rng.gen::<f64>()], 0.0)
            }
            PartitionKind::Solenoid { .. } => {
                let word = self.random_word(&[], rng);
                self.solenoid().point_with_history(rng.gen::<f64>(), &word)
            }
        }
    }

    /// Interior sample of rectangle `id` at unstable fraction `u`.
    pub fn sample_in(&self, id: usize, u: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let v = 0.02 + 0.96 * rng.gen::<f64>();
        let u = 0.01 + 0.98 * u;
        self.point_in(&self.rectangles[id].cell, u, v, rng)
    }

    /// Samples of `Wᵘ(x, R)` for `x` with local data `l`.
    fn unstable_fiber(&self, cell: &Cell, x: &[f64], probe: &Probe, l: &Local, k: usize) -> Vec<DVector<f64>> {
        let fr = |i: usize| (i as f64 + 0.5) / k as f64;
        match (cell, probe) {
            (Cell::Torus { corner, w, .. }, Probe::Plane { z, .. }) => (0..k)
                .map(|i| {
                    let p = from_plane([corner[0] + fr(i) * w, corner[1] + l.b]);
                    Self::plane_point([p[0] + l.shift[0], p[1] + l.shift[1]], *z)
                })
                .collect(),
            (Cell::Box { lo, hi }, Probe::Plane { z, .. }) => {
                let (eu, _) = torus_frame();
                chord(l.a, l.b, hi[0] - lo[0], hi[1] - lo[1], eu)
                    .map(|(t0, t1)| {
                        (0..k)
                            .map(|i| {
                                let t = t0 + fr(i) * (t1 - t0);
                                Self::plane_point(
                                    [lo[0] + l.shift[0] + l.a + t * eu[0], lo[1] + l.shift[1] + l.b + t * eu[1]],
                                    *z,
                                )
                            })
                            .collect()
                    })
                    .unwrap_or_default()
            }
            (Cell::Solenoid { lo, hi, .. }, Probe::Circle { back, .. }) => (0..k)
                .map(|i| self.solenoid().point_with_history(lo + fr(i) * (hi - lo), back))
                .collect(),
            _ => {
                let _ = x;
                Vec::new()
            }
        }
    }

    /// Samples of `Wˢ(x, R)`.
    fn stable_fiber(&self, cell: &Cell, probe: &Probe, l: &Local, k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let fr = |i: usize| (i as f64 + 0.5) / k as f64;
        match (cell, probe) {
            (Cell::Torus { corner, h, .. }, Probe::Plane { .. }) => (0..k)
                .map(|i| {
                    let p = from_plane([corner[0] + l.a, corner[1] + fr(i) * h]);
                    Self::plane_point([p[0] + l.shift[0], p[1] + l.shift[1]], 0.0)
                })
                .collect(),
            (Cell::Box { lo, hi }, Probe::Plane { .. }) => {
                let (_, es) = torus_frame();
                chord(l.a, l.b, hi[0] - lo[0], hi[1] - lo[1], es)
                    .map(|(t0, t1)| {
                        (0..k)
                            .map(|i| {
                                let t = t0 + fr(i) * (t1 - t0);
                                Self::plane_point(
                                    [lo[0] + l.shift[0] + l.a + t * es[0], lo[1] + l.shift[1] + l.b + t * es[1]],
                                    0.0,
                                )
                            })
                            .collect()
                    })
                    .unwrap_or_default()
            }
            (Cell::Solenoid { lo, word, .. }, Probe::Circle { .. }) => (0..k)
                .map(|_| {
                    let w = self.random_word(word, rng);
                    self.solenoid().point_with_history(lo + l.a, &w)
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    fn boundary_samples(&self, cell: &Cell, k: usize, rng: &mut ChaCha8Rng) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut bs = Vec::new();
        let mut bu = Vec::new();
        for i in 0..k {
            let t = (i as f64 + rng.gen::<f64>()) / k as f64;
            let side = if i % 2 == 0 { 0.0 } else { 1.0 };
            match cell {
                Cell::Solenoid { .. } => bs.push(self.point_in(cell, side, 0.0, rng)),
                _ => {
                    bs.push(self.point_in(cell, side, t, rng));
                    bu.push(self.point_in(cell, t, side, rng));
                }
            }
        }
        (bs, bu)
    }

    pub fn diameter(&self, cell: &Cell) -> f64 {
        match cell {
            Cell::Torus { w, h, .. } => w.hypot(*h),
            Cell::Box { lo, hi } => (hi[0] - lo[0]).hypot(hi[1] - lo[1]),
            Cell::Solenoid { lo, hi, word } => {
                let s = self.solenoid();
                let gmin = 2.0 - s.warp.abs();
                let slope = (std::f64::consts::PI / gmin) / (1.0 - s.contraction / gmin);
                let fiber = s.contraction.powi(word.len() as i32) / (1.0 - s.contraction);
                let w = hi - lo;
                w.hypot(slope * w + fiber)
            }
        }
    }

    pub fn center(&self, cell: &Cell) -> DVector<f64> {
        match cell {
            Cell::Torus { corner, w, h } => Self::plane_point(from_plane([corner[0] + w / 2.0, corner[1] + h / 2.0]), 0.0),
            Cell::Box { lo, hi } => Self::plane_point([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0], 0.0),
            Cell::Solenoid { lo, hi, word } => self.solenoid().point_with_history((lo + hi) / 2.0, word),
        }
    }

    fn describe(&self, id: usize, cell: Cell, rng: &mut ChaCha8Rng) -> Rectangle {
        let center = self.center(&cell);
        let probe = self.probe_for_cell(&cell, &center);
        let l = self.local(&cell, &probe).unwrap_or(Local {
            to_s: 0.0,
            to_u: 0.0,
            a: 0.0,
            b: 0.0,
            shift: [0.0, 0.0],
        });
        let to_vecs = |v: Vec<DVector<f64>>| v.into_iter().map(|p| p.as_slice().to_vec()).collect();
        let u_fiber = to_vecs(self.unstable_fiber(&cell, center.as_slice(), &probe, &l, 9));
        let s_fiber = to_vecs(self.stable_fiber(&cell, &probe, &l, 9, rng));
        let (bs, bu) = self.boundary_samples(&cell, 8, rng);
        let proper = match &cell {
            Cell::Torus { w, h, .. } => *w > 1e-12 && *h > 1e-12,
            Cell::Box { lo, hi } => hi[0] > lo[0] && hi[1] > lo[1],
            Cell::Solenoid { lo, hi, .. } => hi > lo,
        };
        Rectangle {
            id,
            diameter: self.diameter(&cell),
            center: center.as_slice().to_vec(),
            cell,
            u_fiber,
            s_fiber,
            boundary_s: to_vecs(bs),
            boundary_u: to_vecs(bu),
            proper,
        }
    }

    /// Probe of a point built from a cell description (its word is known
    /// exactly, so no inversion is needed).
    fn probe_for_cell(&self, cell: &Cell, x: &DVector<f64>) -> Probe {
        match cell {
            Cell::Solenoid { word, .. } => Probe::Circle {
                theta: wrap_unit(x[0]),
                back: word.clone(),
                ambiguous: usize::MAX,
            },
            _ => Probe::Plane {
                xy: [x[0], x[1]],
                z: x[2],
            },
        }
    }

    /// `A ∩ f⁻¹(B)` (forward) or `A ∩ f(B)` (backward), one cell per
    /// connected piece.
    fn intersect(&self, a: &Cell, b: &Cell, forward: bool) -> Vec<Cell> {
        match (a, b) {
            (Cell::Torus { corner: ca, w: wa, h: ha }, Cell::Torus { corner: cb, w: wb, h: hb }) => {
                torus_intersections((*ca, *wa, *ha), (*cb, *wb, *hb), FatCat::lambda_max(), forward)
            }
            (Cell::Solenoid { lo: la, hi: ha, word: wa }, Cell::Solenoid { lo: lb, hi: hb, word: wb }) => {
                let s = self.solenoid();
                let half_a = usize::from((la + ha) / 2.0 >= 0.5);
                let half_b = usize::from((lb + hb) / 2.0 >= 0.5);
                let (lo, hi, word) = if forward {
                    // Points of A map to words [half_a] ++ wa.
                    let img = prepend(half_a, wa);
                    let Some(word) = merge_words(&img, wb) else {
                        return Vec::new();
                    };
                    let lo = s.branch_preimage(*lb, half_a).max(*la);
                    let hi = s.branch_preimage(*hb, half_a).min(*ha);
                    (lo, hi, word[1..].to_vec())
                } else {
                    let img = prepend(half_b, wb);
                    let Some(word) = merge_words(wa, &img) else {
                        return Vec::new();
                    };
                    let lo = (s.lift(*lb) - half_b as f64).max(*la);
                    let hi = (s.lift(*hb) - half_b as f64).min(*ha);
                    (lo, hi, word)
                };
                if hi - lo > 1e-15 {
                    vec![Cell::Solenoid { lo, hi, word }]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }

    /// Common part of two cells given in the same local frame.
    fn meet(a: &Cell, b: &Cell) -> Option<Cell> {
        match (a, b) {
            (Cell::Torus { corner: ca, w: wa, h: ha }, Cell::Torus { corner: cb, w: wb, h: hb }) => {
                let u0 = ca[0].max(cb[0]);
                let u1 = (ca[0] + wa).min(cb[0] + wb);
                let s0 = ca[1].max(cb[1]);
                let s1 = (ca[1] + ha).min(cb[1] + hb);
                (u1 - u0 > 1e-15 && s1 - s0 > 1e-15).then(|| Cell::Torus {
                    corner: [u0, s0],
                    w: u1 - u0,
                    h: s1 - s0,
                })
            }
            (Cell::Solenoid { lo: la, hi: ha, word: wa }, Cell::Solenoid { lo: lb, hi: hb, word: wb }) => {
                let lo = la.max(*lb);
                let hi = ha.min(*hb);
                let word = merge_words(wa, wb)?;
                (hi - lo > 1e-15).then_some(Cell::Solenoid { lo, hi, word })
            }
            _ => None,
        }
    }

    /// One refinement step: every rectangle is cut by the preimages
    /// (forward) or images (backward) of all rectangles.
    pub fn refine(&self, forward: bool) -> Result<Self> {
        if matches!(self.kind, PartitionKind::Boxes) {
            return Err(Error::InvalidArgument("box partitions cannot be refined".into()));
        }
        let mut cells = Vec::new();
        for a in &self.rectangles {
            for b in &self.rectangles {
                cells.extend(self.intersect(&a.cell, &b.cell, forward));
            }
        }
        MarkovPartition::from_cells(self.kind.clone(), cells)
    }

    pub fn write_json<W: Write>(&self, w: W, matrix: Option<&TransitionMatrix>) -> Result<()> {
        let v = serde_json::json!({
            "partition": self,
            "transition_matrix": matrix,
        });
        serde_json::to_writer_pretty(w, &v).map_err(|e| Error::Io(e.to_string()))
    }
}

fn torus_u(c: &Cell) -> f64 {
    match c {
        Cell::Torus { corner, .. } => corner[0],
        _ => 0.0,
    }
}

fn merge_strips(group: &[(usize, Cell)]) -> Cell {
    let mut u0 = f64::INFINITY;
    let mut u1 = f64::NEG_INFINITY;
    let mut s = (0.0, 0.0);
    for (_, c) in group {
        if let Cell::Torus { corner, w, h } = c {
            u0 = u0.min(corner[0]);
            u1 = u1.max(corner[0] + w);
            s = (corner[1], *h);
        }
    }
    Cell::Torus {
        corner: [u0, s.0],
        w: u1 - u0,
        h: s.1,
    }
}

fn prepend(h: usize, w: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(w.len() + 1);
    v.push(h);
    v.extend_from_slice(w);
    v
}

/// The longer of two words if one extends the other.
fn merge_words(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().min(b.len());
    if a[..n] != b[..n] {
        return None;
    }
    Some(if a.len() >= b.len() { a.to_vec() } else { b.to_vec() })
}

/// Parameter range `t` with `(a, b) + t·dir` inside `[0, w] × [0, h]`.
fn chord(a: f64, b: f64, w: f64, h: f64, dir: [f64; 2]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (p, len, d) in [(a, w, dir[0]), (b, h, dir[1])] {
        if d.abs() < 1e-15 {
            continue;
        }
        let (x, y) = ((0.0 - p) / d, (len - p) / d);
        t0 = t0.max(x.min(y));
        t1 = t1.min(x.max(y));
    }
    (t1 > t0).then_some((t0, t1))
}

/// Bounding box in `(x, y)` of a cell placed at its stored position.
fn plane_bbox(cell: &Cell) -> ([f64; 2], [f64; 2]) {
    match cell {
        Cell::Torus { corner, w, h } => {
            let pts = [
                from_plane(*corner),
                from_plane([corner[0] + w, corner[1]]),
                from_plane([corner[0], corner[1] + h]),
                from_plane([corner[0] + w, corner[1] + h]),
            ];
            let lo = [
                pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
                pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
            ];
            let hi = [
                pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
                pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
            ];
            (lo, hi)
        }
        Cell::Box { lo, hi } => (*lo, *hi),
        Cell::Solenoid { .. } => ([0.0, 0.0], [1.0, 1.0]),
    }
}

fn torus_local(corner: [f64; 2], w: f64, h: f64, xy: [f64; 2]) -> Option<Local> {
    let c = from_plane(corner);
    let q = [xy[0] - c[0], xy[1] - c[1]];
    let (lo, hi) = plane_bbox(&Cell::Torus {
        corner: [0.0, 0.0],
        w,
        h,
    });
    let mut best: Option<Local> = None;
    let m0a = (q[0] - hi[0] - 1e-9).ceil() as i64;
    let m0b = (q[0] - lo[0] + 1e-9).floor() as i64;
    let m1a = (q[1] - hi[1] - 1e-9).ceil() as i64;
    let m1b = (q[1] - lo[1] + 1e-9).floor() as i64;
    for m0 in m0a..=m0b {
        for m1 in m1a..=m1b {
            let r = to_plane([q[0] - m0 as f64, q[1] - m1 as f64]);
            let l = Local {
                to_s: r[0].min(w - r[0]),
                to_u: r[1].min(h - r[1]),
                a: r[0],
                b: r[1],
                shift: [m0 as f64, m1 as f64],
            };
            if l.to_s >= -CLOSURE_TOL && l.to_u >= -CLOSURE_TOL && best.is_none_or(|bb| l.depth() > bb.depth()) {
                best = Some(l);
            }
        }
    }
    best
}

/// Pieces of `A ∩ f⁻¹(B + m)` (forward) or `A ∩ f(B + m)` over lattice
/// translates `m`, in the frame of `A`. `f` acts on the eigen-plane as
/// `(u, s) ↦ (λu, s/λ)`.
fn torus_intersections(a: ([f64; 2], f64, f64), b: ([f64; 2], f64, f64), lam: f64, forward: bool) -> Vec<Cell> {
    let ([ua, sa], wa, ha) = a;
    let ([ub, sb], wb, hb) = b;
    // Range of lattice translates (mu, ms) in the plane that can overlap.
    let (mu_lo, mu_hi, ms_lo, ms_hi) = if forward {
        (lam * ua - ub - wb, lam * (ua + wa) - ub, sa / lam - sb - hb, (sa + ha) / lam - sb)
    } else {
        (ua / lam - ub - wb, (ua + wa) / lam - ub, lam * sa - sb - hb, lam * (sa + ha) - sb)
    };
    let corners = [
        from_plane([mu_lo, ms_lo]),
        from_plane([mu_hi, ms_lo]),
        from_plane([mu_lo, ms_hi]),
        from_plane([mu_hi, ms_hi]),
    ];
    let x0 = corners.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor() as i64;
    let x1 = corners.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let y0 = corners.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor() as i64;
    let y1 = corners.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let mut out = Vec::new();
    for mx in x0..=x1 {
        for my in y0..=y1 {
            let [mu, ms] = to_plane([mx as f64, my as f64]);
            let (u0, u1, s0, s1) = if forward {
                ((ub + mu) / lam, (ub + mu + wb) / lam, lam * (sb + ms), lam * (sb + ms + hb))
            } else {
                (lam * (ub + mu), lam * (ub + mu + wb), (sb + ms) / lam, (sb + ms + hb) / lam)
            };
            let lo_u = u0.max(ua);
            let hi_u = u1.min(ua + wa);
            let lo_s = s0.max(sa);
            let hi_s = s1.min(sa + ha);
            if hi_u - lo_u > 1e-12 && hi_s - lo_s > 1e-12 {
                out.push(Cell::Torus {
                    corner: [lo_u, lo_s],
                    w: hi_u - lo_u,
                    h: hi_s - lo_s,
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Transition matrices and spectral decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub a: Vec<Vec<u8>>,
    pub irreducible: bool,
    pub aperiodic: bool,
    pub spectral_radius: f64,
}

impl TransitionMatrix {
    pub fn from_rows(a: Vec<Vec<u8>>) -> Result<Self> {
        let m = a.len();
        if a.iter().any(|r| r.len() != m || r.iter().any(|&v| v > 1)) {
            return Err(Error::InvalidArgument("transition matrix must be square 0/1".into()));
        }
        let dec = spectral_decomposition(&a);
        let irreducible = dec.wandering.is_empty() && dec.components.len() == 1;
        let aperiodic = irreducible && dec.components[0].period == 1;
        let spectral_radius = perron_root(&a);
        Ok(TransitionMatrix {
            a,
            irreducible,
            aperiodic,
            spectral_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn mixing(&self) -> bool {
        self.irreducible && self.aperiodic
    }

    /// `log ρ(A)`.
    pub fn entropy(&self) -> f64 {
        self.spectral_radius.ln()
    }

    /// Error at the first forbidden transition.
    pub fn check_word(&self, word: &[usize]) -> Result<()> {
        for (i, &s) in word.iter().enumerate() {
            if s >= self.len() {
                return Err(Error::InadmissibleWord(i));
            }
            if i + 1 < word.len() && (word[i + 1] >= self.len() || self.a[s][word[i + 1]] == 0) {
                return Err(Error::InadmissibleWord(i));
            }
        }
        Ok(())
    }

    /// Shortest admissible path `from → … → to` with at least one step,
    /// excluding `from`, ending with `to`.
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let m = self.len();
        let mut prev = vec![usize::MAX; m];
        let mut q = VecDeque::new();
        for j in 0..m {
            if self.a[from][j] == 1 && prev[j] == usize::MAX {
                prev[j] = from;
                q.push_back(j);
            }
        }
        while let Some(i) = q.pop_front() {
            if i == to {
                let mut path = vec![to];
                let mut cur = to;
                while prev[cur] != from || (path.len() > 1 && cur == from) {
                    cur = prev[cur];
                    if cur == from {
                        break;
                    }
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for j in 0..m {
                if self.a[i][j] == 1 && prev[j] == usize::MAX {
                    prev[j] = i;
                    q.push_back(j);
                }
            }
        }
        None
    }
}

/// Perron root of a nonnegative 0/1 matrix by power iteration on `A + I`.
fn perron_root(a: &[Vec<u8>]) -> f64 {
    let m = a.len();
    if m == 0 {
        return 0.0;
    }
    let adj: Vec<Vec<usize>> = a
        .iter()
        .map(|r| r.iter().enumerate().filter(|(_, &v)| v == 1).map(|(j, _)| j).collect())
        .collect();
    let mut v = vec![1.0 / m as f64; m];
    let mut rho = 0.0;
    for _ in 0..200_000 {
        let mut w = v.clone();
        for (i, row) in adj.iter().enumerate() {
            for &j in row {
                w[i] += v[j];
            }
        }
        let s: f64 = w.iter().sum();
        let next = s / v.iter().sum::<f64>();
        for x in w.iter_mut() {
            *x /= s;
        }
        let change = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        let done = (next - rho).abs() < 1e-15 * next && change < 1e-15;
        rho = next;
        if done {
            break;
        }
    }
    rho - 1.0
}

/// Sampled transition matrix: `A_ij = 1` iff an interior sample of `Rᵢ` maps
/// into the interior of `R_j`. Samples are stratified along the unstable
/// direction.
pub fn transition_matrix(
    sys: &dyn DynamicalSystem,
    partition: &MarkovPartition,
    per_rectangle: usize,
    seed: u64,
) -> Result<TransitionMatrix> {
    let m = partition.len();
    let mut a = vec![vec![0u8; m]; m];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, row) in a.iter_mut().enumerate() {
        for k in 0..per_rectangle {
            let u = (k as f64 + rng.gen::<f64>()) / per_rectangle as f64;
            let x = partition.sample_in(i, u, &mut rng);
            if partition.classify(sys, x.as_slice()) != Membership::Interior(i) {
                continue;
            }
            if let Membership::Interior(j) = partition.classify(sys, sys.map(&x).as_slice()) {
                row[j] = 1;
            }
        }
    }
    TransitionMatrix::from_rows(a)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Component {
    pub states: Vec<usize>,
    /// Gcd of the cycle lengths.
    pub period: usize,
    /// `classes[j]` maps into `classes[(j + 1) % period]`.
    pub cyclic_classes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectralDecomposition {
    pub components: Vec<Component>,
    /// States on no cycle; excluded from the components.
    pub wandering: Vec<usize>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Transitive pieces (strongly connected components carrying a cycle),
/// their periods and cyclic classes.
pub fn spectral_decomposition(a: &[Vec<u8>]) -> SpectralDecomposition {
    let m = a.len();
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..m).map(|_| g.add_node(())).collect();
    for i in 0..m {
        for j in 0..m {
            if a[i][j] == 1 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut components = Vec::new();
    let mut wandering = Vec::new();
    for scc in tarjan_scc(&g) {
        let mut states: Vec<usize> = scc.iter().map(|n| n.index()).collect();
        states.sort_unstable();
        if states.len() == 1 && a[states[0]][states[0]] == 0 {
            wandering.push(states[0]);
            continue;
        }
        let inside = |s: usize| states.binary_search(&s).is_ok();
        let mut level = vec![usize::MAX; m];
        level[states[0]] = 0;
        let mut q = VecDeque::from([states[0]]);
        let mut period = 0;
        while let Some(i) = q.pop_front() {
            for j in 0..m {
                if a[i][j] == 1 && inside(j) {
                    if level[j] == usize::MAX {
                        level[j] = level[i] + 1;
                        q.push_back(j);
                    } else {
                        let diff = (level[i] + 1).abs_diff(level[j]);
                        period = gcd(period, diff);
                    }
                }
            }
        }
        let period = period.max(1);
        let mut classes = vec![Vec::new(); period];
        for &s in &states {
            classes[level[s] % period].push(s);
        }
        components.push(Component {
            states,
            period,
            cyclic_classes: classes,
        });
    }
    components.sort_by_key(|c| c.states[0]);
    wandering.sort_unstable();
    SpectralDecomposition { components, wandering }
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MarkovViolation {
    pub kind: String,
    pub point: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct MarkovReport {
    pub samples: usize,
    pub overlaps: usize,
    pub uncovered: usize,
    /// `f Wᵘ(x, Rᵢ) ⊃ Wᵘ(fx, R_j)` failures.
    pub unstable_inclusion: usize,
    /// `f Wˢ(x, Rᵢ) ⊂ Wˢ(fx, R_j)` failures.
    pub stable_inclusion: usize,
    /// `f(∂ˢR) ⊂ ∂ˢR` failures.
    pub stable_boundary: usize,
    /// `f⁻¹(∂ᵘR) ⊂ ∂ᵘR` failures.
    pub unstable_boundary: usize,
    pub interior_pairs: usize,
    pub boundary_samples: usize,
    pub witnesses: Vec<MarkovViolation>,
}

impl MarkovReport {
    pub fn violations(&self) -> usize {
        self.overlaps
            + self.uncovered
            + self.unstable_inclusion
            + self.stable_inclusion
            + self.stable_boundary
            + self.unstable_boundary
    }

    fn witness(&mut self, kind: &str, p: &[f64], detail: String) {
        if self.witnesses.len() < 20 {
            self.witnesses.push(MarkovViolation {
                kind: kind.into(),
                point: p.to_vec(),
                detail,
            });
        }
    }
}

fn preimage(sys: &dyn DynamicalSystem, y: &[f64]) -> Option<DVector<f64>> {
    sys.known_inverse(y).or_else(|| {
        crate::dynsys::inverse_on_attractor(sys, y, 1, &Default::default())
            .ok()
            .map(|o| o.at(1).clone())
    })
}

/// Sampled check of the Markov conditions: disjoint interiors and cover,
/// both fiber inclusions at interior pairs, and invariance of the stable
/// and unstable boundaries.
pub fn verify_markov(
    sys: &dyn DynamicalSystem,
    partition: &MarkovPartition,
    n_samples: usize,
    seed: u64,
) -> MarkovReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = MarkovReport {
        samples: n_samples,
        ..Default::default()
    };
    let depth = partition.fiber_depth();
    const FIBER: usize = 4;
    for _ in 0..n_samples {
        let x = partition.sample_attractor(&mut rng);
        let px = partition.probe(sys, x.as_slice(), depth);
        let i = match partition.classify_probe(&px) {
            Membership::Interior(i) => i,
            Membership::Boundary => continue,
            Membership::Overlap(ids) => {
                rep.overlaps += 1;
                rep.witness("overlap", x.as_slice(), format!("interior to {ids:?}"));
                continue;
            }
            Membership::Outside => {
                rep.uncovered += 1;
                rep.witness("uncovered", x.as_slice(), "in no rectangle".into());
                continue;
            }
        };
        let fx = sys.map(&x);
        let pf = partition.probe(sys, fx.as_slice(), depth);
        let j = match partition.classify_probe(&pf) {
            Membership::Interior(j) => j,
            _ => continue,
        };
        rep.interior_pairs += 1;
        let ci = &partition.rectangles[i].cell;
        let cj = &partition.rectangles[j].cell;
        let lf = partition.local(cj, &pf).expect("interior point has local data");
        for z in partition.unstable_fiber(cj, fx.as_slice(), &pf, &lf, FIBER) {
            let ok = preimage(sys, z.as_slice())
                .map(|p| partition.closure_contains(i, &partition.probe(sys, p.as_slice(), depth)))
                .unwrap_or(false);
            if !ok {
                rep.unstable_inclusion += 1;
                rep.witness("unstable-inclusion", z.as_slice(), format!("preimage leaves R{i} (image rectangle R{j})"));
            }
        }
        let lx = partition.local(ci, &px).expect("interior point has local data");
        for y in partition.stable_fiber(ci, &px, &lx, FIBER, &mut rng) {
            let fy = sys.map(&y);
            if !partition.closure_contains(j, &partition.probe(sys, fy.as_slice(), depth)) {
                rep.stable_inclusion += 1;
                rep.witness("stable-inclusion", y.as_slice(), format!("image leaves R{j} (from R{i})"));
            }
        }
    }
    let per = (n_samples / (4 * partition.len().max(1))).max(2);
    for r in &partition.rectangles {
        let (bs, bu) = partition.boundary_samples(&r.cell, per, &mut rng);
        for p in bs {
            rep.boundary_samples += 1;
            let fp = sys.map(&p);
            if !partition.on_stable_boundary(&partition.probe(sys, fp.as_slice(), depth)) {
                rep.stable_boundary += 1;
                rep.witness("stable-boundary", p.as_slice(), format!("image of ∂ˢR{} is off ∂ˢ", r.id));
            }
        }
        for p in bu {
            rep.boundary_samples += 1;
            let ok = preimage(sys, p.as_slice())
                .map(|q| partition.on_unstable_boundary(&partition.probe(sys, q.as_slice(), depth)))
                .unwrap_or(false);
            if !ok {
                rep.unstable_boundary += 1;
                rep.witness("unstable-boundary", p.as_slice(), format!("preimage of ∂ᵘR{} is off ∂ᵘ", r.id));
            }
        }
    }
    rep
}

/// Fraction of sampled pairs `x, y ∈ R` with `[x, y] ∈ R`, taking
/// `[x, y]` as the point with the stable coordinate of `y` on the stable
/// fiber of `x`.
pub fn bracket_closure(sys: &dyn DynamicalSystem, partition: &MarkovPartition, id: usize, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = &partition.rectangles[id].cell;
    let depth = partition.probe_depth();
    let mut ok = 0;
    for _ in 0..pairs {
        let (u1, v1, u2, v2) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
        let z = match cell {
            Cell::Torus { .. } => partition.point_in(cell, u1, v2, &mut rng),
            Cell::Solenoid { lo, hi, .. } => {
                let y = partition.point_in(cell, u2, v2, &mut rng);
                let py = partition.probe(sys, y.as_slice(), PROBE_DEPTH);
                let Probe::Circle { back, .. } = py else { unreachable!() };
                partition.solenoid().point_with_history(lo + u1 * (hi - lo), &back)
            }
            Cell::Box { lo, hi } => {
                // Intersection of the stable line of x with the unstable line of y.
                let (eu, es) = torus_frame();
                let x = [lo[0] + u1 * (hi[0] - lo[0]), lo[1] + v1 * (hi[1] - lo[1])];
                let y = [lo[0] + u2 * (hi[0] - lo[0]), lo[1] + v2 * (hi[1] - lo[1])];
                let d = [y[0] - x[0], y[1] - x[1]];
                let s = d[0] * es[0] + d[1] * es[1];
                let _ = eu;
                MarkovPartition::plane_point([x[0] + s * es[0], x[1] + s * es[1]], 0.0)
            }
        };
        if partition.closure_contains(id, &partition.probe(sys, z.as_slice(), depth)) {
            ok += 1;
        }
    }
    ok as f64 / pairs.max(1) as f64
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarkovConfig {
    /// Density of the dense point set.
    pub gamma: f64,
    /// Pseudo-orbit defect of the shadowing trials.
    pub alpha: f64,
    /// Target rectangle diameter, also the expansivity scale.
    pub beta: f64,
    pub budget: usize,
    pub shadow_trials: usize,
    pub expansivity_pairs: usize,
    pub seed: u64,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        MarkovConfig {
            gamma: 0.004,
            alpha: 0.01,
            beta: 0.2,
            budget: REFINEMENT_BUDGET,
            shadow_trials: 10,
            expansivity_pairs: 40,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Least number of steps after which every expansivity pair separated.
    pub max_separation_time: usize,
    pub worst_shadow: f64,
    pub dense_points: usize,
    /// Dense points in no rectangle closure.
    pub uncovered: usize,
    pub refinements: usize,
    pub rectangles: usize,
    pub max_diameter: f64,
}

/// Markov partition of diameter at most `β` for the fat-cat or a solenoid.
///
/// The smallness chain is checked first: `γ < α/2`, `α`-pseudo-orbits are
/// `β`-shadowed in trials, and distinct attractor points closer than `β/2`
/// separate by more than `β` under some iterate. The seed partition (three
/// Adler–Weiss rectangles, or angular halves) is then refined alternately by
/// preimages and images until every diameter is at most `β`.
pub fn build_markov_partition(
    sys: &dyn DynamicalSystem,
    provider: &dyn SplittingProvider,
    cfg: &MarkovConfig,
) -> Result<(MarkovPartition, BuildReport)> {
    let seed_partition = match sys.name() {
        "fat-cat" => MarkovPartition::cat_classic()?,
        "solenoid" | "warped-solenoid" => {
            let meta = sys.metadata();
            let c = meta["contraction"].as_f64().unwrap_or(0.25);
            let w = meta["warp"].as_f64().unwrap_or(0.0);
            MarkovPartition::solenoid_halves(&Solenoid::new(c, w))?
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "Markov partitions are built for fat-cat and the solenoids, not {other}"
            )))
        }
    };
    if !(cfg.gamma > 0.0 && cfg.alpha > 0.0 && cfg.beta > 0.0) {
        return Err(Error::InvalidArgument("γ, α and β must be positive".into()));
    }
    if cfg.gamma >= cfg.alpha / 2.0 {
        return Err(Error::SmallnessChainViolated(format!(
            "γ = {} is not below α/2 = {}",
            cfg.gamma,
            cfg.alpha / 2.0
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Expansivity at scale β.
    let mut pairs = Vec::with_capacity(cfg.expansivity_pairs);
    for _ in 0..cfg.expansivity_pairs {
        let x = seed_partition.sample_attractor(&mut rng);
        let y = nearby(&seed_partition, &x, cfg.beta / 2.0, &mut rng);
        pairs.push((x, y));
    }
    let exp = expansivity_check(sys, &pairs, cfg.beta, 80).map_err(|e| match e {
        Error::KBudgetExceeded(k) => Error::SmallnessChainViolated(format!(
            "pairs stay β-close for {k} steps in both directions; β = {} is not an expansivity scale",
            cfg.beta
        )),
        other => other,
    })?;
    let max_sep = exp
        .pairs
        .iter()
        .filter_map(|p| match (p.forward, p.backward) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) | (None, Some(a)) => Some(a),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    // Shadowing trials.
    let mut worst: f64 = 0.0;
    for t in 0..cfg.shadow_trials {
        let x = seed_partition.sample_attractor(&mut rng);
        let pseudo = PseudoOrbit::perturbed(sys, x.as_slice(), 30, cfg.alpha, cfg.seed ^ (t as u64 + 1))?;
        let sh = shadow(sys, &pseudo, cfg.beta, provider, &ShadowOptions::default()).map_err(|e| {
            Error::SmallnessChainViolated(format!("α = {} pseudo-orbit not β-shadowed: {e}", cfg.alpha))
        })?;
        worst = worst.max(sh.beta);
    }
    // Refinement.
    let mut part = seed_partition;
    let mut refinements = 0;
    while part.beta > cfg.beta {
        let forward = refinements % 2 == 0;
        let next = part.refine(forward)?;
        refinements += 1;
        if next.len() > cfg.budget {
            return Err(Error::RefinementExplosion(next.len()));
        }
        part = next;
    }
    // Dense set coverage.
    let dense = (((1.0 / cfg.gamma).powi(2)).ceil() as usize).clamp(100, 20_000);
    let mut uncovered = 0;
    for _ in 0..dense {
        let p = part.sample_attractor(&mut rng);
        if part.classify(sys, p.as_slice()) == Membership::Outside {
            uncovered += 1;
        }
    }
    let report = BuildReport {
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        beta: cfg.beta,
        max_separation_time: max_sep,
        worst_shadow: worst,
        dense_points: dense,
        uncovered,
        refinements,
        rectangles: part.len(),
        max_diameter: part.beta,
    };
    Ok((part, report))
}

/// Attractor point at distance of order `r` from `x`.
fn nearby(partition: &MarkovPartition, x: &DVector<f64>, r: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match partition.kind {
        PartitionKind::Torus | PartitionKind::Boxes => {
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            let d = r * (0.1 + 0.9 * rng.gen::<f64>());
            MarkovPartition::plane_point([x[0] + d * a.cos(), x[1] + d * a.sin()], 0.0)
        }
        PartitionKind::Solenoid { .. } => {
            let s = partition.solenoid();
            let mut word = s_word(partition, x);
            // Flip one branch deep enough that the fiber offset is below r.
            let k0 = ((r * (1.0 - s.contraction)).ln() / s.contraction.ln()).ceil().max(1.0) as usize;
            let k = (k0 + rng.gen_range(0..3)).min(word.len() - 1);
            word[k] ^= 1;
            let dt = r * 0.3 * (2.0 * rng.gen::<f64>() - 1.0);
            s.point_with_history(x[0] + dt, &word)
        }
    }
}

fn s_word(partition: &MarkovPartition, x: &DVector<f64>) -> Vec<usize> {
    let s = partition.solenoid();
    let mut word = Vec::with_capacity(WORD_SAMPLE);
    let mut cur = x.clone();
    for _ in 0..WORD_SAMPLE.min(PROBE_DEPTH) {
        let pre = crate::dynsys::DynamicalSystem::known_inverse(s, cur.as_slice()).expect("solenoid inverse");
        word.push(usize::from(wrap_unit(pre[0]) >= 0.5));
        cur = pre;
    }
    word
}

// ---------------------------------------------------------------------------
// Coding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Coding {
    pub point: DVector<f64>,
    /// Diameter of `⋂ f⁻ʲ R_{a_j}`; the coded point lies within it.
    pub diameter: f64,
    pub cell: Cell,
    /// `|f(π(a)) − π(σa)|` on the same truncation.
    pub semiconjugacy: Option<f64>,
    /// Whether `f(π(a))` lies in the shifted cylinder.
    pub semiconjugacy_ok: Option<bool>,
}

/// Centre and diameter of the cylinder `⋂_j f⁻ʲ R_{a_j}` for the word
/// `a = word` with `a₀ = word[zero]`, built by intersecting preimages of the
/// future and images of the past inside `R_{a₀}`.
pub fn coding_map(
    sys: &dyn DynamicalSystem,
    partition: &MarkovPartition,
    matrix: &TransitionMatrix,
    word: &[usize],
    zero: usize,
) -> Result<Coding> {
    let mut c = cylinder(partition, matrix, word, zero)?;
    if zero + 1 < word.len() {
        let next = cylinder(partition, matrix, word, zero + 1)?;
        let fp = sys.map(&c.point);
        let gap = sys.distance(fp.as_slice(), next.point.as_slice());
        let probe = partition.probe(sys, fp.as_slice(), partition.probe_depth());
        let inside = partition
            .local(&next.cell, &probe)
            .is_some_and(|l| l.to_s >= -1e-9 && l.to_u >= -1e-9);
        c.semiconjugacy = Some(gap);
        c.semiconjugacy_ok = Some(inside || gap <= next.diameter + 1e-9);
    }
    Ok(c)
}

fn single(mut pieces: Vec<Cell>, what: &str) -> Result<Cell> {
    match pieces.len() {
        0 => Err(Error::EmptyIntersection(format!("{what} is empty"))),
        1 => Ok(pieces.pop().unwrap()),
        n => Err(Error::EmptyIntersection(format!("{what} has {n} components"))),
    }
}

fn cylinder(partition: &MarkovPartition, matrix: &TransitionMatrix, word: &[usize], zero: usize) -> Result<Coding> {
    if word.is_empty() || zero >= word.len() {
        return Err(Error::InvalidArgument("word must contain position zero".into()));
    }
    if matrix.len() != partition.len() {
        return Err(Error::DimensionMismatch("matrix and partition sizes differ".into()));
    }
    matrix.check_word(word)?;
    let cell = |k: usize| &partition.rectangles[word[k]].cell;
    let last = word.len() - 1;
    let mut fwd = cell(last).clone();
    for j in (zero..last).rev() {
        fwd = single(partition.intersect(cell(j), &fwd, true), "forward cylinder")?;
    }
    let mut back = cell(0).clone();
    for j in 1..=zero {
        back = single(partition.intersect(cell(j), &back, false), "backward cylinder")?;
    }
    let cell = MarkovPartition::meet(&fwd, &back)
        .ok_or_else(|| Error::EmptyIntersection("past and future cylinders are disjoint".into()))?;
    Ok(Coding {
        point: partition.center(&cell),
        diameter: partition.diameter(&cell),
        cell,
        semiconjugacy: None,
        semiconjugacy_ok: None,
    })
}

/// Periodic point with repeating block `block`, coded on a long
/// truncation and closed by the cyclic shadowing solver.
pub fn periodic_from_block(
    sys: &dyn DynamicalSystem,
    partition: &MarkovPartition,
    matrix: &TransitionMatrix,
    block: &[usize],
) -> Result<PeriodicPoint> {
    let n = block.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty block".into()));
    }
    let mut cyc = block.to_vec();
    cyc.push(block[0]);
    matrix.check_word(&cyc)?;
    // Deep enough to land in the closing basin, shallow enough that the
    // torus cylinders stay wider than the refinement cutoff.
    let reps = (16 / n).max(1);
    let word: Vec<usize> = (0..(2 * reps + 1) * n).map(|i| block[i % n]).collect();
    let zero = reps * n;
    let c = cylinder(partition, matrix, &word, zero)?;
    close_periodic(sys, c.point.as_slice(), n, 0.5, 0.5, &NewtonOptions::default())
}

/// Forward itinerary `a₀ … a_{n−1}` of `x`; `None` marks boundary points.
pub fn itinerary(sys: &dyn DynamicalSystem, partition: &MarkovPartition, x: &[f64], n: usize) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(n);
    let mut cur = DVector::from_column_slice(x);
    for k in 0..n {
        out.push(match partition.classify(sys, cur.as_slice()) {
            Membership::Interior(i) => Some(i),
            _ => None,
        });
        if k + 1 < n {
            cur = sys.map(&cur);
        }
    }
    out
}

/// One row per start point: coordinates, then the itinerary (`-1` on the
/// boundary).
pub fn write_itineraries_csv<W: Write>(w: W, rows: &[(Vec<f64>, Vec<Option<usize>>)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if let Some((x, it)) = rows.first() {
        let mut head: Vec<String> = (0..x.len()).map(|i| format!("x{i}")).collect();
        head.extend((0..it.len()).map(|k| format!("a{k}")));
        out.write_record(&head)?;
    }
    for (x, it) in rows {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.extend(it.iter().map(|s| s.map_or("-1".to_string(), |v| v.to_string())));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{BasinBox, FatCat};
    use crate::splitting::AnalyticSplitting;
    use nalgebra::DMatrix;

    fn torus_point(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y, 0.0])
    }

    #[test]
    fn true_orbit_is_its_own_shadow() {
        let sys = FatCat::default();
        let pts = iterate(&sys, &[0.3, 0.6, 0.0], 30).unwrap().points;
        let p = PseudoOrbit::new(&sys, pts, 1e-12, false).unwrap();
        let s = shadow(&sys, &p, 1e-9, &AnalyticSplitting, &ShadowOptions::default()).unwrap();
        assert_eq!(s.newton_steps, 0);
        assert_eq!(s.beta, 0.0);
    }

    #[test]
    fn declared_defect_is_enforced() {
        let sys = FatCat::default();
        let pts = vec![torus_point(0.1, 0.2), torus_point(0.5, 0.5)];
        assert!(PseudoOrbit::new(&sys, pts, 1e-3, false).is_err());
    }

    #[test]
    fn noisy_cat_orbit_is_shadowed() {
        let sys = FatCat::default();
        let p = PseudoOrbit::perturbed(&sys, &[0.21, 0.47, 0.0], 200, 1e-4, 3).unwrap();
        let s = shadow(&sys, &p, 1e-3, &AnalyticSplitting, &ShadowOptions::default()).unwrap();
        assert!(s.beta <= 1e-3 && s.newton_steps <= 10, "{} {}", s.beta, s.newton_steps);
    }

    #[test]
    fn cat_fixed_point_closes_to_itself() {
        let sys = FatCat::default();
        let p = close_periodic(&sys, &[0.0, 0.0, 0.0], 1, 0.1, 0.1, &NewtonOptions::default()).unwrap();
        assert!(p.point.norm() < 1e-15);
    }

    #[test]
    fn solenoid_period_three_angle_is_sevenths() {
        let sys = Solenoid::classic();
        // 3/7 has period three under doubling; perturb and close.
        let x = sys.point_with_history(3.0 / 7.0 + 1e-4, &[1, 1, 0, 1, 1, 0]);
        let p = close_periodic(&sys, x.as_slice(), 3, 0.05, 0.05, &NewtonOptions::default()).unwrap();
        let k = p.point[0] * 7.0;
        assert!((k - k.round()).abs() < 1e-9, "{}", p.point[0]);
    }

    #[test]
    fn cat_period_five_census() {
        let sys = FatCat::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<_> = (0..12_000).map(|_| torus_point(rng.gen(), rng.gen())).collect();
        let c = periodic_census(&sys, &samples, 5, 0.25, 1.0, &NewtonOptions::default()).unwrap();
        assert_eq!(c.count() as u64, FatCat::periodic_count(5));
    }

    #[test]
    fn spectral_decomposition_examples() {
        let swap = spectral_decomposition(&[vec![0, 1], vec![1, 0]]);
        assert_eq!(swap.components.len(), 1);
        assert_eq!(swap.components[0].period, 2);
        assert_eq!(swap.components[0].cyclic_classes, vec![vec![0], vec![1]]);
        let full = spectral_decomposition(&vec![vec![1; 4]; 4]);
        assert_eq!(full.components[0].period, 1);
        let blocks = spectral_decomposition(&[
            vec![1, 1, 0, 0],
            vec![1, 0, 0, 0],
            vec![0, 0, 1, 1],
            vec![0, 0, 1, 1],
        ]);
        assert_eq!(blocks.components.len(), 2);
        assert!(blocks.components.iter().all(|c| c.period == 1));
        let transient = spectral_decomposition(&[vec![0, 1], vec![0, 1]]);
        assert_eq!(transient.wandering, vec![0]);
    }

    #[test]
    fn golden_matrix_radius() {
        let t = TransitionMatrix::from_rows(vec![vec![1, 1], vec![1, 0]]).unwrap();
        assert!((t.spectral_radius - PHI).abs() < 1e-12);
        assert!(t.mixing());
        assert_eq!(t.path(1, 1), Some(vec![0, 1]));
    }

    #[test]
    fn adler_weiss_squares_tile_the_torus() {
        let sys = FatCat::default();
        let p = MarkovPartition::cat_adler_weiss().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let x = torus_point(rng.gen(), rng.gen());
            assert!(!matches!(p.classify(&sys, x.as_slice()), Membership::Outside | Membership::Overlap(_)));
        }
    }

    #[test]
    fn classic_cat_partition_is_markov() {
        let sys = FatCat::default();
        let p = MarkovPartition::cat_classic().unwrap();
        assert_eq!(p.len(), 3);
        let rep = verify_markov(&sys, &p, 2000, 4);
        assert_eq!(rep.violations(), 0, "{:?}", rep.witnesses);
        let t = transition_matrix(&sys, &p, 64, 5).unwrap();
        assert!((t.spectral_radius - FatCat::lambda_max()).abs() < 1e-6, "{:?}", t);
        assert!(t.mixing());
    }

    #[test]
    fn boxes_are_not_markov() {
        let sys = FatCat::default();
        let p = MarkovPartition::boxes(3).unwrap();
        let rep = verify_markov(&sys, &p, 500, 4);
        assert!(rep.violations() > 0);
        assert!(bracket_closure(&sys, &p, 0, 200, 1) < 1.0);
    }

    #[test]
    fn one_rectangle_gives_unit_matrix() {
        let sys = Solenoid::classic();
        let p = MarkovPartition::from_cells(
            PartitionKind::Solenoid {
                contraction: 0.25,
                warp: 0.0,
            },
            vec![Cell::Solenoid {
                lo: 0.0,
                hi: 1.0,
                word: vec![],
            }],
        )
        .unwrap();
        let t = transition_matrix(&sys, &p, 16, 1).unwrap();
        assert_eq!(t.a, vec![vec![1]]);
    }

    /// Rotation by a half turn on the circle factor.
    struct HalfTurn(BasinBox);

    impl DynamicalSystem for HalfTurn {
        fn name(&self) -> &str {
            "half-turn"
        }
        fn dim(&self) -> usize {
            3
        }
        fn unstable_dim(&self) -> usize {
            1
        }
        fn basin(&self) -> &BasinBox {
            &self.0
        }
        fn map_into(&self, x: &[f64], out: &mut [f64]) {
            out[0] = wrap_unit(x[0] + 0.5);
            out[1] = x[1];
            out[2] = x[2];
        }
        fn deriv(&self, _x: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(3, 3)
        }
        fn contraction_factor(&self) -> f64 {
            1.0
        }
        fn hyperbolicity_rate(&self) -> Option<f64> {
            None
        }
        fn metadata(&self) -> serde_json::Value {
            serde_json::json!({})
        }
    }

    #[test]
    fn two_piece_rotation_swaps() {
        let sys = HalfTurn(BasinBox::new(vec![0.0, -1.0, -1.0], vec![1.0, 1.0, 1.0], vec![true, false, false]));
        let p = MarkovPartition::solenoid_halves(&Solenoid::classic()).unwrap();
        let t = transition_matrix(&sys, &p, 16, 1).unwrap();
        assert_eq!(t.a, vec![vec![0, 1], vec![1, 0]]);
        assert!(t.irreducible && !t.aperiodic);
    }

    #[test]
    fn solenoid_halves_are_markov() {
        for sys in [Solenoid::classic(), Solenoid::warped()] {
            let p = MarkovPartition::solenoid_halves(&sys).unwrap().refine(true).unwrap().refine(false).unwrap();
            assert_eq!(p.len(), 8);
            let rep = verify_markov(&sys, &p, 1000, 7);
            assert_eq!(rep.violations(), 0, "{:?}", rep.witnesses);
            let t = transition_matrix(&sys, &p, 32, 1).unwrap();
            assert!((t.spectral_radius - 2.0).abs() < 1e-9);
            assert_eq!(bracket_closure(&sys, &p, 3, 200, 2), 1.0);
        }
    }

    #[test]
    fn constant_word_codes_the_fixed_point() {
        let sys = FatCat::default();
        let p = MarkovPartition::cat_classic().unwrap();
        let t = transition_matrix(&sys, &p, 64, 5).unwrap();
        let i = (0..p.len()).find(|&i| t.a[i][i] == 1).unwrap();
        let c = coding_map(&sys, &p, &t, &[i; 25], 12).unwrap();
        assert!(sys.distance(c.point.as_slice(), &[0.0, 0.0, 0.0]) <= c.diameter + 1e-12);
        assert!(c.diameter < 1e-4);
        assert_eq!(c.semiconjugacy_ok, Some(true));
    }

    #[test]
    fn inadmissible_word_rejected() {
        let sys = Solenoid::classic();
        let p = MarkovPartition::solenoid_halves(&sys).unwrap().refine(true).unwrap();
        let t = transition_matrix(&sys, &p, 32, 1).unwrap();
        let (i, j) = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .find(|&(i, j)| t.a[i][j] == 0)
            .unwrap();
        assert!(matches!(coding_map(&sys, &p, &t, &[i, j], 0), Err(Error::InadmissibleWord(0))));
    }

    #[test]
    fn period_two_word_gives_period_two_point() {
        let sys = FatCat::default();
        let p = MarkovPartition::cat_classic().unwrap();
        let t = transition_matrix(&sys, &p, 64, 5).unwrap();
        let (i, j) = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && t.a[i][j] == 1 && t.a[j][i] == 1)
            .unwrap();
        let q = periodic_from_block(&sys, &p, &t, &[i, j]).unwrap();
        assert!(q.residual < 1e-9);
    }

    #[test]
    fn build_rejects_large_gamma_and_refines() {
        let sys = FatCat::default();
        let bad = MarkovConfig {
            gamma: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            build_markov_partition(&sys, &AnalyticSplitting, &bad),
            Err(Error::SmallnessChainViolated(_))
        ));
        let cfg = MarkovConfig {
            beta: 0.5,
            ..Default::default()
        };
        let (p, rep) = build_markov_partition(&sys, &AnalyticSplitting, &cfg).unwrap();
        assert!(p.beta <= 0.5 && rep.uncovered == 0);
    }
}
