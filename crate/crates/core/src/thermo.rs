//! Subshifts of finite type, pressure and Gibbs measures of k-step
//! potentials, equilibrium states and the entropy formulas.
//!
//! A k-step potential is a function of the first `k` symbols. Its transfer
//! operator acts exactly on functions of `L = max(k − 1, 1)` symbols, so
//! pressure and the Gibbs measure come from a finite nonnegative matrix over
//! admissible L-blocks: `M[b][c] = exp φ(b ++ c_last)` when `c` continues
//! `b`. The Gibbs measure is the stationary Markov measure of the normalized
//! matrix `P_bc = M_bc r_c / (ρ r_b)`.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynsys::DynamicalSystem;
use crate::error::{Error, Result};
use crate::splitting::{SplittingProvider, UnstableNorm};
use crate::srb::{unstable_jacobian, EmpiricalMeasure};
use crate::symbolic::{coding_map, spectral_decomposition, Component, MarkovPartition, TransitionMatrix};

/// Convergence tolerance of the eigenvector iterations.
pub const POWER_TOL: f64 = 1e-13;

/// Subshift of finite type `Σ_A`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sft {
    pub n: usize,
    pub a: Vec<Vec<u8>>,
    /// `d_β(x, y) = β^{min{|i| : xᵢ ≠ yᵢ}}`.
    pub beta_metric: f64,
    pub irreducible: bool,
    pub mixing: bool,
}

impl Sft {
    pub fn new(a: Vec<Vec<u8>>, beta_metric: f64) -> Result<Self> {
        if !(beta_metric > 0.0 && beta_metric < 1.0) {
            return Err(Error::InvalidArgument("metric parameter must lie in (0, 1)".into()));
        }
        let t = TransitionMatrix::from_rows(a)?;
        Ok(Sft {
            n: t.len(),
            irreducible: t.irreducible,
            mixing: t.mixing(),
            a: t.a,
            beta_metric,
        })
    }

    pub fn full(n: usize) -> Self {
        Sft::new(vec![vec![1; n]; n], 0.5).expect("full shift")
    }

    /// `A = [[1, 1], [1, 0]]`.
    pub fn golden_mean() -> Self {
        Sft::new(vec![vec![1, 1], vec![1, 0]], 0.5).expect("golden mean shift")
    }

    pub fn from_matrix(t: &TransitionMatrix) -> Self {
        Sft {
            n: t.len(),
            a: t.a.clone(),
            beta_metric: 0.5,
            irreducible: t.irreducible,
            mixing: t.mixing(),
        }
    }

    pub fn admissible(&self, w: &[usize]) -> bool {
        w.iter().all(|&s| s < self.n) && w.windows(2).all(|p| self.a[p[0]][p[1]] == 1)
    }

    /// Admissible words of length `len`, in lexicographic order.
    pub fn words(&self, len: usize) -> Vec<Vec<usize>> {
        if len == 0 {
            return vec![vec![]];
        }
        let mut out: Vec<Vec<usize>> = (0..self.n).map(|s| vec![s]).collect();
        for _ in 1..len {
            let mut next = Vec::with_capacity(out.len() * 2);
            for w in &out {
                let last = *w.last().unwrap();
                for s in 0..self.n {
                    if self.a[last][s] == 1 {
                        let mut v = w.clone();
                        v.push(s);
                        next.push(v);
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Number of admissible words of length `len`.
    pub fn count(&self, len: usize) -> f64 {
        if len == 0 {
            return 1.0;
        }
        let mut v = vec![1.0; self.n];
        for _ in 1..len {
            v = (0..self.n)
                .map(|i| (0..self.n).filter(|&j| self.a[i][j] == 1).map(|j| v[j]).sum())
                .collect();
        }
        v.iter().sum()
    }
}

/// Potential depending on the first `k` symbols.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    pub k: usize,
    /// Admissible k-blocks in lexicographic order.
    pub blocks: Vec<Vec<usize>>,
    pub values: Vec<f64>,
    /// `var_j φ ≤ b αʲ`; zero for `j ≥ k`.
    pub var_b: f64,
    pub var_alpha: f64,
}

impl Potential {
    pub fn from_fn(sft: &Sft, k: usize, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("potential depth must be at least 1".into()));
        }
        let blocks = sft.words(k);
        let values: Vec<f64> = blocks.iter().map(|w| f(w)).collect();
        Potential::from_table(k, blocks, values)
    }

    pub fn from_table(k: usize, blocks: Vec<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        if blocks.len() != values.len() || blocks.iter().any(|b| b.len() != k) {
            return Err(Error::DimensionMismatch("potential table".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("potential values must be finite".into()));
        }
        let mut pairs: Vec<_> = blocks.into_iter().zip(values).collect();
        pairs.sort_by(|x, y| x.0.cmp(&y.0));
        let (blocks, values): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        // var_j ≤ spread for j < k, and 0 beyond: b = spread·2^k, α = ½ is a
        // valid (loose) certificate.
        Ok(Potential {
            k,
            blocks,
            values,
            var_b: spread * 2f64.powi(k as i32),
            var_alpha: 0.5,
        })
    }

    pub fn constant(sft: &Sft, c: f64) -> Self {
        Potential::from_fn(sft, 1, |_| c).expect("constant potential")
    }

    /// `φ` on the first `k` symbols of `w`.
    pub fn eval(&self, w: &[usize]) -> Option<f64> {
        let w = w.get(..self.k)?;
        self.blocks.binary_search_by(|b| b.as_slice().cmp(w)).ok().map(|i| self.values[i])
    }

    pub fn shifted(&self, c: f64) -> Self {
        let mut p = self.clone();
        for v in p.values.iter_mut() {
            *v += c;
        }
        p
    }

    /// `Σ φ(σⁱw)` over the k-blocks inside `w`.
    pub fn birkhoff(&self, w: &[usize]) -> f64 {
        if w.len() < self.k {
            return 0.0;
        }
        (0..=w.len() - self.k).map(|i| self.eval(&w[i..]).unwrap_or(f64::NAN)).sum()
    }
}

/// Sparse transfer matrix over admissible L-blocks.
#[derive(Debug, Clone)]
struct Transfer {
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    /// `(c, M_bc, φ)` for each `b`.
    edges: Vec<Vec<(usize, f64, f64)>>,
}

impl Transfer {
    fn new(sft: &Sft, phi: &Potential) -> Result<Self> {
        let l = phi.k.saturating_sub(1).max(1);
        let states = sft.words(l);
        let index: HashMap<Vec<usize>, usize> = states.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        let mut edges = vec![Vec::new(); states.len()];
        for (b, w) in states.iter().enumerate() {
            let last = *w.last().unwrap();
            for s in 0..sft.n {
                if sft.a[last][s] == 0 {
                    continue;
                }
                let mut ext = w.clone();
                ext.push(s);
                let v = phi.eval(&ext).ok_or_else(|| {
                    Error::InvalidArgument(format!("potential undefined on block {ext:?}"))
                })?;
                let c = index[&ext[1..]];
                edges[b].push((c, v.exp(), v));
            }
        }
        Ok(Transfer { states, index, edges })
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    fn adjacency(&self) -> Vec<Vec<u8>> {
        let m = self.len();
        let mut a = vec![vec![0u8; m]; m];
        for (b, row) in self.edges.iter().enumerate() {
            for &(c, _, _) in row {
                a[b][c] = 1;
            }
        }
        a
    }

    fn apply(&self, v: &[f64], transpose: bool, only: Option<&[bool]>) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (b, row) in self.edges.iter().enumerate() {
            if only.is_some_and(|m| !m[b]) {
                continue;
            }
            for &(c, m, _) in row {
                if only.is_some_and(|mask| !mask[c]) {
                    continue;
                }
                if transpose {
                    out[c] += m * v[b];
                } else {
                    out[b] += m * v[c];
                }
            }
        }
        out
    }

    /// Perron eigenvalue and positive eigenvector by power iteration on the
    /// shifted matrix `M + sI`, which is primitive for irreducible `M`.
    fn perron(&self, transpose: bool, start: Option<&[f64]>, only: Option<&[bool]>) -> Result<(f64, Vec<f64>)> {
        let m = self.len();
        let active = |i: usize| only.is_none_or(|mask| mask[i]);
        let shift = {
            let sums: Vec<f64> = (0..m)
                .filter(|&b| active(b))
                .map(|b| self.edges[b].iter().filter(|e| active(e.0)).map(|e| e.1).sum())
                .collect();
            0.5 * sums.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300)
        };
        let mut v: Vec<f64> = match start {
            Some(s) => s.iter().enumerate().map(|(i, x)| if active(i) { x.abs() } else { 0.0 }).collect(),
            None => (0..m).map(|i| if active(i) { 1.0 } else { 0.0 }).collect(),
        };
        normalize1(&mut v);
        let mut rho = 0.0;
        for _ in 0..1_000_000 {
            let mv = self.apply(&v, transpose, only);
            let mut w: Vec<f64> = mv.iter().zip(&v).map(|(a, b)| a + shift * b).collect();
            let next = w.iter().sum::<f64>() - shift;
            normalize1(&mut w);
            let change = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs() / a.max(1e-300))
                .fold(0.0, f64::max);
            v = w;
            let settled = (next - rho).abs() <= POWER_TOL * next.abs() && change <= POWER_TOL;
            rho = next;
            if settled {
                // One polish step with the exact Rayleigh-type quotient.
                let mv = self.apply(&v, transpose, only);
                let rho = mv.iter().sum::<f64>() / v.iter().sum::<f64>();
                return Ok((rho, v));
            }
        }
        Err(Error::NotConverged("transfer matrix eigenvector".into()))
    }
}

fn normalize1(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

/// Pressure, eigendata and the Gibbs measure of a k-step potential.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsData {
    pub pressure: f64,
    /// States of the transfer matrix (admissible L-blocks).
    pub states: Vec<Vec<usize>>,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    /// Stationary distribution on states.
    pub stationary: Vec<f64>,
    /// `(b, c, P_bc, φ)` for each transition of the normalized chain.
    pub transitions: Vec<(usize, usize, f64, f64)>,
    /// Masses of the (L + 1)-cylinders.
    pub cylinders: Vec<(Vec<usize>, f64)>,
    pub entropy: f64,
    /// `∫ φ dμ`.
    pub mean_potential: f64,
    /// Empirical Gibbs constants, set by `gibbs_bounds_check`.
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    #[serde(skip)]
    chain: Vec<Vec<(usize, f64)>>,
    #[serde(skip)]
    index: HashMap<Vec<usize>, usize>,
}

impl GibbsData {
    pub fn block_len(&self) -> usize {
        self.states.first().map_or(1, |s| s.len())
    }

    /// `μ[w]` of the cylinder `{x : x_i = w_i, 0 ≤ i < |w|}`.
    pub fn mass(&self, w: &[usize]) -> f64 {
        let l = self.block_len();
        if w.len() < l {
            return self
                .states
                .iter()
                .zip(&self.stationary)
                .filter(|(s, _)| s.starts_with(w))
                .map(|(_, p)| p)
                .sum();
        }
        let Some(&mut_b) = self.index.get(&w[..l]) else {
            return 0.0;
        };
        let mut b = mut_b;
        let mut m = self.stationary[b];
        for i in l..w.len() {
            let Some(&c) = self.index.get(&w[i + 1 - l..=i]) else {
                return 0.0;
            };
            let Some(&(_, p)) = self.chain[b].iter().find(|(cc, _)| *cc == c) else {
                return 0.0;
            };
            m *= p;
            b = c;
        }
        m
    }

    /// Random word of length `len` distributed as `μ`.
    pub fn sample_word(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let pick = |probs: &mut dyn Iterator<Item = (usize, f64)>, rng: &mut ChaCha8Rng| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, p) in probs {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        };
        let mut b = pick(&mut self.stationary.iter().cloned().enumerate(), rng);
        let mut w = self.states[b].clone();
        while w.len() < len {
            let c = pick(&mut self.chain[b].iter().cloned(), rng);
            w.push(*self.states[c].last().unwrap());
            b = c;
        }
        w.truncate(len);
        w
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Word, mass and Gibbs ratio of each (L + 1)-cylinder.
    pub fn write_cylinders_csv<W: Write>(&self, w: W, phi: &Potential) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["word", "mass", "gibbs_ratio"])?;
        for (word, m) in &self.cylinders {
            let r = gibbs_ratio(self, phi, word, *m);
            let s: Vec<String> = word.iter().map(|v| v.to_string()).collect();
            out.write_record([s.join(" "), m.to_string(), r.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn gibbs_ratio(g: &GibbsData, phi: &Potential, w: &[usize], mass: f64) -> f64 {
    let n_eff = (w.len() + 1).saturating_sub(phi.k) as f64;
    mass / (-g.pressure * n_eff + phi.birkhoff(w)).exp()
}

/// Pressure `P(φ) = log ρ(M)` and the Gibbs measure of `φ` on an
/// irreducible subshift. Reducible shifts fail with the number of
/// transitive components; see `pressure_per_component`.
pub fn pressure_gibbs(sft: &Sft, phi: &Potential) -> Result<GibbsData> {
    pressure_gibbs_from(sft, phi, None)
}

/// As `pressure_gibbs`, with a caller-chosen positive start vector for the
/// right eigenvector iteration.
pub fn pressure_gibbs_from(sft: &Sft, phi: &Potential, start: Option<&[f64]>) -> Result<GibbsData> {
    let t = Transfer::new(sft, phi)?;
    let dec = spectral_decomposition(&t.adjacency());
    if dec.components.len() != 1 || !dec.wandering.is_empty() {
        return Err(Error::ReducibleChain(dec.components.len()));
    }
    if let Some(s) = start {
        if s.len() != t.len() {
            return Err(Error::DimensionMismatch(format!("start vector has {} entries, need {}", s.len(), t.len())));
        }
    }
    let (rho, r) = t.perron(false, start, None)?;
    let (_, l) = t.perron(true, None, None)?;
    let norm: f64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
    let stationary: Vec<f64> = l.iter().zip(&r).map(|(a, b)| a * b / norm).collect();
    let mut chain = vec![Vec::new(); t.len()];
    let mut transitions = Vec::new();
    let mut cylinders = Vec::new();
    let mut entropy = 0.0;
    let mut mean_potential = 0.0;
    for (b, row) in t.edges.iter().enumerate() {
        for &(c, m, v) in row {
            let p = m * r[c] / (rho * r[b]);
            chain[b].push((c, p));
            transitions.push((b, c, p, v));
            let mass = stationary[b] * p;
            if p > 0.0 {
                entropy -= mass * p.ln();
            }
            mean_potential += mass * v;
            let mut w = t.states[b].clone();
            w.push(*t.states[c].last().unwrap());
            cylinders.push((w, mass));
        }
    }
    Ok(GibbsData {
        pressure: rho.ln(),
        states: t.states.clone(),
        right: r,
        left: l,
        stationary,
        transitions,
        cylinders,
        entropy,
        mean_potential,
        c1: None,
        c2: None,
        chain,
        index: t.index,
    })
}

/// Pressure restricted to each transitive component of the block graph.
pub fn pressure_per_component(sft: &Sft, phi: &Potential) -> Result<Vec<(Component, f64)>> {
    let t = Transfer::new(sft, phi)?;
    let dec = spectral_decomposition(&t.adjacency());
    let mut out = Vec::new();
    for comp in dec.components {
        let mut mask = vec![false; t.len()];
        for &s in &comp.states {
            mask[s] = true;
        }
        let (rho, _) = t.perron(false, None, Some(&mask))?;
        out.push((comp, rho.ln()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GibbsBounds {
    pub c1: f64,
    pub c2: f64,
    /// `(length, min ratio, max ratio, words examined)`.
    pub per_length: Vec<(usize, f64, f64, usize)>,
    /// Largest change of `log c₁` or `log c₂` between a length and the
    /// longest one, over the upper half of the lengths past the potential
    /// depth (short words do not yet realize every pair of end blocks).
    pub drift: f64,
    pub sampled: bool,
}

/// Words enumerated exhaustively up to this many per length.
const ENUMERATION_CAP: usize = 100_000;

/// Empirical Gibbs constants: extremes of
/// `μ[w] / exp(−P·n + Σ φ(σⁱw))` over words of each length up to `max_len`.
pub fn gibbs_bounds_check(gibbs: &mut GibbsData, sft: &Sft, phi: &Potential, max_len: usize, seed: u64) -> GibbsBounds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_length = Vec::new();
    let mut sampled = false;
    for len in 1..=max_len {
        let words = if sft.count(len) <= ENUMERATION_CAP as f64 {
            sft.words(len)
        } else {
            sampled = true;
            (0..10_000).map(|_| gibbs.sample_word(len, &mut rng)).collect()
        };
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for w in &words {
            let m = gibbs.mass(w);
            if m <= 0.0 {
                continue;
            }
            let r = gibbs_ratio(gibbs, phi, w, m);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        per_length.push((len, lo, hi, words.len()));
    }
    let c1 = per_length.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let c2 = per_length.iter().map(|p| p.2).fold(0.0, f64::max);
    let last = per_length.last().copied().unwrap_or((0, 1.0, 1.0, 0));
    let drift = per_length
        .iter()
        .filter(|p| p.0 > phi.k && 2 * p.0 >= max_len)
        .map(|p| (p.1.ln() - last.1.ln()).abs().max((p.2.ln() - last.2.ln()).abs()))
        .fold(0.0, f64::max);
    gibbs.c1 = Some(c1);
    gibbs.c2 = Some(c2);
    GibbsBounds {
        c1,
        c2,
        per_length,
        drift,
        sampled,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationalReport {
    pub pressure: f64,
    pub entropy: f64,
    pub mean_potential: f64,
    /// `|h + ∫φ − P|`.
    pub identity_error: f64,
    /// `h + ∫φ − P` of each perturbed Markov measure.
    pub perturbed_gaps: Vec<f64>,
    pub inequality_holds: bool,
}

/// Entropy and `∫φ` of a Markov measure on the transfer graph given by
/// transition probabilities `q[b]`.
fn markov_free_energy(chain: &[Vec<(usize, f64, f64)>]) -> Result<(f64, f64)> {
    let m = chain.len();
    let mut pi = vec![1.0 / m as f64; m];
    for it in 0..1_000_000 {
        let mut next = vec![0.0; m];
        for (b, row) in chain.iter().enumerate() {
            for &(c, p, _) in row {
                next[c] += 0.5 * pi[b] * p;
            }
            next[b] += 0.5 * pi[b];
        }
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < 1e-16 {
            break;
        }
        if it == 999_999 {
            return Err(Error::NotConverged("stationary distribution".into()));
        }
    }
    let mut h = 0.0;
    let mut e = 0.0;
    for (b, row) in chain.iter().enumerate() {
        for &(_, p, v) in row {
            if p > 0.0 {
                h -= pi[b] * p * p.ln();
                e += pi[b] * p * v;
            }
        }
    }
    Ok((h, e))
}

/// Variational identity `h_μ + ∫φ dμ = P` for the Gibbs measure, and the
/// inequality `h_ν + ∫φ dν ≤ P` for `perturbations` random Markov measures
/// `ν` on the same transfer graph.
pub fn entropy_and_variational(gibbs: &GibbsData, perturbations: usize, seed: u64) -> Result<VariationalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = gibbs.states.len();
    let mut base: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); m];
    for &(b, c, p, v) in &gibbs.transitions {
        base[b].push((c, p, v));
    }
    let mut gaps = Vec::with_capacity(perturbations);
    for i in 0..perturbations {
        let scale = 0.1 + 1.5 * i as f64 / perturbations.max(1) as f64;
        let chain: Vec<Vec<(usize, f64, f64)>> = base
            .iter()
            .map(|row| {
                let mut r: Vec<(usize, f64, f64)> = row
                    .iter()
                    .map(|&(c, p, v)| (c, p * (scale * (2.0 * rng.gen::<f64>() - 1.0)).exp(), v))
                    .collect();
                let s: f64 = r.iter().map(|x| x.1).sum();
                for x in r.iter_mut() {
                    x.1 /= s;
                }
                r
            })
            .collect();
        let (h, e) = markov_free_energy(&chain)?;
        gaps.push(h + e - gibbs.pressure);
    }
    let identity_error = (gibbs.entropy + gibbs.mean_potential - gibbs.pressure).abs();
    Ok(VariationalReport {
        pressure: gibbs.pressure,
        entropy: gibbs.entropy,
        mean_potential: gibbs.mean_potential,
        identity_error,
        inequality_holds: gaps.iter().all(|&g| g <= 1e-12),
        perturbed_gaps: gaps,
    })
}

// ---------------------------------------------------------------------------
// SRB measure as an equilibrium state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    /// Potential depth `k`.
    pub depth: usize,
    /// Past symbols of the two-sided words pushed to phase space.
    pub push_past: usize,
    /// Future symbols (including position zero) of the pushed words.
    pub push_future: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            depth: 8,
            push_past: 6,
            push_future: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub depth: usize,
    /// `P(φ*_k)` with `φ*_k = −log Jᵘ` at forward-cylinder centres.
    pub pressure: f64,
    /// `0.5·α_cᵏ`, with `α_c` the cylinder contraction rate.
    pub tolerance: f64,
    pub pass: bool,
    /// `∫ −φ*_k dμ`: mean log unstable Jacobian under the Gibbs measure.
    pub mean_log_jacobian: f64,
    pub entropy: f64,
    pub potential_min: f64,
    pub potential_max: f64,
    #[serde(skip)]
    pub gibbs: GibbsData,
    #[serde(skip)]
    pub potential: Potential,
    #[serde(skip)]
    pub pushforward: EmpiricalMeasure,
}

/// The SRB measure as the equilibrium state of `−log Jᵘ ∘ π`: computes the
/// pressure of the k-step truncation on the coding shift and pushes the
/// Gibbs measure to phase space through the coding map.
pub fn srb_via_equilibrium(
    sys: &dyn DynamicalSystem,
    partition: &MarkovPartition,
    matrix: &TransitionMatrix,
    provider: &dyn SplittingProvider,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumReport> {
    if !matrix.mixing() {
        return Err(Error::PartitionNotMixing);
    }
    if opts.depth == 0 || opts.push_future == 0 {
        return Err(Error::InvalidArgument("depth and pushed future length must be positive".into()));
    }
    let sft = Sft::from_matrix(matrix);
    let k = opts.depth;
    let mut err = None;
    let phi = Potential::from_fn(&sft, k, |w| {
        let c = coding_map(sys, partition, matrix, w, 0)
            .and_then(|c| unstable_jacobian(sys, c.point.as_slice(), provider, UnstableNorm::Quotient));
        match c {
            Ok(j) => -j.ln(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let gibbs = pressure_gibbs(&sft, &phi)?;
    let alpha_c = (-sys.hyperbolicity_rate().unwrap_or(0.0)).exp();
    let tolerance = 0.5 * alpha_c.powi(k as i32);
    // Push two-sided cylinders through the coding map.
    let len = opts.push_past + opts.push_future;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for w in sft.words(len) {
        let m = gibbs.mass(&w);
        if m <= 0.0 {
            continue;
        }
        let c = coding_map(sys, partition, matrix, &w, opts.push_past)?;
        points.push(c.point);
        weights.push(m);
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let pushforward = EmpiricalMeasure::from_points(sys.dim(), &points, weights);
    Ok(EquilibriumReport {
        depth: k,
        pressure: gibbs.pressure,
        tolerance,
        pass: gibbs.pressure.abs() < tolerance,
        mean_log_jacobian: -gibbs.mean_potential,
        entropy: gibbs.entropy,
        potential_min: phi.values.iter().cloned().fold(f64::INFINITY, f64::min),
        potential_max: phi.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        gibbs,
        potential: phi,
        pushforward,
    })
}

// ---------------------------------------------------------------------------
// Entropy formulas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EntropyOptions {
    /// Largest cylinder length is `depth + 1`.
    pub depth: usize,
    /// Orbit length of the Lyapunov-sum average.
    pub orbit: usize,
    /// Points drawn from the measure for the Lyapunov sum.
    pub lyapunov_samples: usize,
    /// Allowed spread of the last entropy increments.
    pub slope_tol: f64,
    /// Pesin gap tolerance.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions {
            depth: 8,
            orbit: 20,
            lyapunov_samples: 2000,
            slope_tol: 0.05,
            tol: 0.02,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    /// Cylinder-entropy increment at the largest length.
    pub entropy: f64,
    /// `H_{m+1} − H_m` for `m = depth − 3 … depth`.
    pub increments: Vec<f64>,
    /// `∫ Σ λᵢ⁺ mᵢ dμ`.
    pub lyapunov_sum: f64,
    /// `Σλ⁺ − h`.
    pub gap: f64,
    /// `h ≤ Σλ⁺ + tol`.
    pub ruelle: bool,
    /// `|h − Σλ⁺| < tol`.
    pub pesin: bool,
}

/// Ruelle inequality and Pesin formula: metric entropy from itinerary
/// cylinders of the partition versus the mean log unstable Jacobian.
pub fn ruelle_pesin_check(
    sys: &dyn DynamicalSystem,
    mu: &EmpiricalMeasure,
    partition: &MarkovPartition,
    provider: &dyn SplittingProvider,
    opts: &EntropyOptions,
) -> Result<EntropyReport> {
    if opts.depth < 3 {
        return Err(Error::InvalidArgument("entropy depth must be at least 3".into()));
    }
    if mu.is_empty() {
        return Err(Error::InvalidArgument("empty measure".into()));
    }
    let total = mu.total_weight();
    let top = opts.depth + 1;
    // Itineraries of length `top` for every atom.
    let mut itins: Vec<Vec<u16>> = Vec::with_capacity(mu.len());
    for i in 0..mu.len() {
        let mut cur = DVector::from_column_slice(mu.point(i));
        let mut it = Vec::with_capacity(top);
        for s in 0..top {
            let sym = partition
                .symbol(sys, cur.as_slice())
                .ok_or_else(|| Error::InvalidArgument("measure charges points outside the partition".into()))?;
            it.push(sym as u16);
            if s + 1 < top {
                cur = sys.map(&cur);
            }
        }
        itins.push(it);
    }
    let block_entropy = |m: usize| -> f64 {
        let mut masses: HashMap<&[u16], f64> = HashMap::new();
        for (i, it) in itins.iter().enumerate() {
            *masses.entry(&it[..m]).or_default() += mu.weights[i] / total;
        }
        masses.values().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
    };
    let hs: Vec<f64> = (opts.depth - 3..=top).map(block_entropy).collect();
    let increments: Vec<f64> = hs.windows(2).map(|w| w[1] - w[0]).collect();
    let lo = increments.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = increments.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > opts.slope_tol {
        return Err(Error::EntropyNotConverged(format!(
            "entropy increments {increments:?} spread by {:.3}",
            hi - lo
        )));
    }
    let entropy = *increments.last().unwrap();
    // Lyapunov sum on a weighted resample.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cum: Vec<f64> = mu
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let mut sum = 0.0;
    let draws = opts.lyapunov_samples.max(1);
    for _ in 0..draws {
        let u: f64 = rng.gen();
        let i = cum.partition_point(|&c| c < u).min(mu.len() - 1);
        let mut cur = DVector::from_column_slice(mu.point(i));
        let mut acc = 0.0;
        for _ in 0..opts.orbit.max(1) {
            acc += unstable_jacobian(sys, cur.as_slice(), provider, UnstableNorm::Quotient)?.ln();
            cur = sys.map(&cur);
        }
        sum += acc / opts.orbit.max(1) as f64;
    }
    let lyapunov_sum = sum / draws as f64;
    let gap = lyapunov_sum - entropy;
    Ok(EntropyReport {
        entropy,
        increments,
        lyapunov_sum,
        gap,
        ruelle: entropy <= lyapunov_sum + opts.tol,
        pesin: gap.abs() < opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{FatCat, Solenoid, PHI};
    use crate::splitting::AnalyticSplitting;
    use crate::symbolic::transition_matrix;

    #[test]
    fn full_two_shift_is_fair_coin() {
        let sft = Sft::full(2);
        let g = pressure_gibbs(&sft, &Potential::constant(&sft, 0.0)).unwrap();
        assert!((g.pressure - 2f64.ln()).abs() < 1e-14);
        assert!((g.entropy - 2f64.ln()).abs() < 1e-14);
        assert!((g.mass(&[0, 1, 1]) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn single_symbol_potential_is_bernoulli() {
        let sft = Sft::full(3);
        let vals = [0.3, -1.0, 0.7];
        let phi = Potential::from_fn(&sft, 1, |w| vals[w[0]]).unwrap();
        let mut g = pressure_gibbs(&sft, &phi).unwrap();
        let z: f64 = vals.iter().map(|v: &f64| v.exp()).sum();
        assert!((g.pressure - z.ln()).abs() < 1e-13);
        assert!((g.mass(&[2]) - vals[2].exp() / z).abs() < 1e-13);
        let b = gibbs_bounds_check(&mut g, &sft, &phi, 6, 1);
        assert!((b.c2 / b.c1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_mean_pressure_and_band() {
        let sft = Sft::golden_mean();
        let phi = Potential::constant(&sft, 0.0);
        let mut g = pressure_gibbs(&sft, &phi).unwrap();
        assert!((g.pressure - PHI.ln()).abs() < 1e-12);
        let b = gibbs_bounds_check(&mut g, &sft, &phi, 14, 1);
        assert!(b.drift < 1e-9, "{b:?}");
        assert!(b.c1 > 0.0 && b.c2.is_finite());
    }

    #[test]
    fn cylinder_masses_are_consistent() {
        let sft = Sft::full(2);
        let phi = Potential::from_fn(&sft, 3, |w| (w[0] as f64 - 0.3 * w[1] as f64 + 0.7 * w[2] as f64).sin()).unwrap();
        let g = pressure_gibbs(&sft, &phi).unwrap();
        for w in sft.words(4) {
            let split: f64 = (0..2).map(|s| g.mass(&[w.clone(), vec![s]].concat())).sum();
            assert!((g.mass(&w) - split).abs() < 1e-12);
        }
        let total: f64 = g.cylinders.iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variational_identity_and_inequality() {
        let sft = Sft::full(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let table: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() - 0.5).collect();
        let phi = Potential::from_fn(&sft, 3, |w| table[w[0] * 4 + w[1] * 2 + w[2]]).unwrap();
        let g = pressure_gibbs(&sft, &phi).unwrap();
        let v = entropy_and_variational(&g, 20, 4).unwrap();
        assert!(v.identity_error < 1e-10);
        assert!(v.inequality_holds, "{:?}", v.perturbed_gaps);
    }

    #[test]
    fn biased_coin_entropy_below_log_two() {
        let sft = Sft::full(2);
        let g = pressure_gibbs(&sft, &Potential::constant(&sft, 0.0)).unwrap();
        for p in [0.1, 0.3, 0.5] {
            let chain = vec![vec![(0, p, 0.0), (1, 1.0 - p, 0.0)]; 2];
            let (h, _) = markov_free_energy(&chain).unwrap();
            let exact = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
            assert!((h - exact).abs() < 1e-12);
            assert!(h <= g.pressure + 1e-15);
        }
    }

    #[test]
    fn pressure_shift_and_monotonicity() {
        let sft = Sft::golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let bump: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let phi = Potential::from_fn(&sft, 2, |w| t[w[0] * 2 + w[1]]).unwrap();
            let psi = Potential::from_fn(&sft, 2, |w| t[w[0] * 2 + w[1]] + bump[w[0] * 2 + w[1]]).unwrap();
            let p = pressure_gibbs(&sft, &phi).unwrap();
            assert!(p.pressure <= pressure_gibbs(&sft, &psi).unwrap().pressure);
            let s = pressure_gibbs(&sft, &phi.shifted(1.7)).unwrap();
            assert!((s.pressure - p.pressure - 1.7).abs() < 1e-12);
            for (a, b) in p.cylinders.iter().zip(&s.cylinders) {
                assert!((a.1 - b.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn start_vector_does_not_matter() {
        let sft = Sft::full(2);
        let phi = Potential::from_fn(&sft, 4, |w| 0.2 * w.iter().sum::<usize>() as f64 - 0.1 * w[3] as f64).unwrap();
        let a = pressure_gibbs(&sft, &phi).unwrap();
        let start: Vec<f64> = (0..8).map(|i| 1.0 + i as f64 * 10.0).collect();
        let b = pressure_gibbs_from(&sft, &phi, Some(&start)).unwrap();
        for (x, y) in a.cylinders.iter().zip(&b.cylinders) {
            assert!((x.1 - y.1).abs() < 1e-11);
        }
    }

    #[test]
    fn reducible_chain_reports_components() {
        let sft = Sft::new(vec![vec![1, 1, 0], vec![1, 1, 0], vec![0, 0, 1]], 0.5).unwrap();
        let phi = Potential::constant(&sft, 0.0);
        assert!(matches!(pressure_gibbs(&sft, &phi), Err(Error::ReducibleChain(2))));
        let per = pressure_per_component(&sft, &phi).unwrap();
        let mut ps: Vec<f64> = per.iter().map(|p| p.1).collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ps[0].abs() < 1e-13 && (ps[1] - 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn fat_cat_equilibrium_pressure_vanishes() {
        let sys = FatCat::default();
        let p = MarkovPartition::cat_classic().unwrap();
        let t = transition_matrix(&sys, &p, 64, 5).unwrap();
        let opts = EquilibriumOptions {
            depth: 3,
            push_past: 3,
            push_future: 3,
        };
        let r = srb_via_equilibrium(&sys, &p, &t, &AnalyticSplitting, &opts).unwrap();
        assert!(r.pressure.abs() < 1e-12, "{}", r.pressure);
        assert!((r.mean_log_jacobian - FatCat::lambda_max().ln()).abs() < 1e-12);
    }

    #[test]
    fn classic_solenoid_equilibrium_is_uniform() {
        let sys = Solenoid::classic();
        let p = MarkovPartition::solenoid_halves(&sys).unwrap();
        let t = transition_matrix(&sys, &p, 32, 1).unwrap();
        let opts = EquilibriumOptions {
            depth: 6,
            push_past: 2,
            push_future: 6,
        };
        let r = srb_via_equilibrium(&sys, &p, &t, &AnalyticSplitting, &opts).unwrap();
        assert!(r.pressure.abs() < 0.01);
        assert!((r.entropy - 2f64.ln()).abs() < 0.01);
    }

    #[test]
    fn dirac_at_fixed_point_has_no_entropy() {
        let sys = FatCat::default();
        let p = MarkovPartition::cat_classic().unwrap();
        let mu = EmpiricalMeasure::dirac(&[0.0, 0.0, 0.0]);
        let r = ruelle_pesin_check(&sys, &mu, &p, &AnalyticSplitting, &EntropyOptions::default()).unwrap();
        assert_eq!(r.entropy, 0.0);
        assert!(r.gap > 0.5 && r.ruelle && !r.pesin);
    }
}
