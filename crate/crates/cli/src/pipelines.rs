use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srbkit::cocycle::{holder_exponent_estimate, lyapunov_spectrum, HolderOptions};
use srbkit::dynsys::{attractor_sample, inverse_on_attractor, wrap_unit, DynamicalSystem, FatCat, Solenoid};
use srbkit::graph_transform::{build_charts, convergence_diagnostics, ChartOptions, GraphPatch, PatchKind};
use srbkit::holonomy::{holonomy_jacobian, holonomy_map, jacobian_ratio_bounds, BracketConfig};
use srbkit::splitting::{AnalyticSplitting, UnstableNorm};
use srbkit::srb::{
    cocycle_ratio, empirical_srb, observability_test, srb_density, CocycleOptions, DiscSampling, EmpiricalMeasure,
    ObservabilityOptions, Transversal, UnstableDisc,
};
use srbkit::symbolic::{
    build_markov_partition, coding_map, itinerary, periodic_census, shadow, transition_matrix, verify_markov,
    write_itineraries_csv, MarkovConfig, MarkovPartition, PseudoOrbit, ShadowOptions, TransitionMatrix,
};
use srbkit::thermo::{
    entropy_and_variational, gibbs_bounds_check, pressure_gibbs, ruelle_pesin_check, srb_via_equilibrium,
    EntropyOptions, EquilibriumOptions, Potential, Sft,
};
use srbkit::{Error, Result};

use crate::config::*;
use crate::report::Report;

/// Burn-in for attractor seed points.
const BURN_IN: usize = 200;

pub fn run(sys: Option<&Arc<dyn DynamicalSystem>>, seed: u64, pipeline: &Pipeline) -> Result<Report> {
    let mut r = Report::default();
    if let Pipeline::Gibbs(p) = pipeline {
        gibbs(p, seed, &mut r)?;
        return Ok(r);
    }
    let sys = sys.expect("validated: system present");
    match pipeline {
        Pipeline::Lyapunov(p) => lyapunov(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Manifold(p) => manifold(sys, seed, p, &mut r)?,
        Pipeline::SrbDensity(p) => density(sys, seed, p, &mut r)?,
        Pipeline::Empirical(p) => empirical(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Holonomy(p) => holonomy(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Shadow(p) => shadowing(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Markov(p) => markov(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Equilibrium(p) => equilibrium(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::EntropyCheck(p) => entropy(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Observability(p) => observability(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Hoelder(p) => hoelder(sys.as_ref(), seed, p, &mut r)?,
        Pipeline::Gibbs(_) => unreachable!(),
    }
    Ok(r)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        out.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn attractor_point(sys: &dyn DynamicalSystem, seed: u64) -> Result<DVector<f64>> {
    // A linear saddle has no attractor; its invariant set is the origin.
    if sys.name() == "linear" {
        return Ok(DVector::zeros(sys.dim()));
    }
    Ok(attractor_sample(sys, 1, BURN_IN, seed)?.points.swap_remove(0))
}

/// The concrete solenoid behind a built-in, for its closed-form geometry.
fn solenoid_of(sys: &dyn DynamicalSystem) -> Option<Solenoid> {
    let m = sys.metadata();
    match sys.name() {
        "solenoid" | "warped-solenoid" => Some(Solenoid::new(m["contraction"].as_f64()?, m["warp"].as_f64()?)),
        _ => None,
    }
}

fn fat_cat_c(sys: &dyn DynamicalSystem) -> Option<f64> {
    (sys.name() == "fat-cat").then(|| sys.metadata()["c"].as_f64()).flatten()
}

/// Hand-built Markov partition of a built-in: the two angular halves for
/// solenoids, the three-rectangle partition for the cat factor.
fn seed_partition(sys: &dyn DynamicalSystem) -> Result<MarkovPartition> {
    if let Some(s) = solenoid_of(sys) {
        return MarkovPartition::solenoid_halves(&s);
    }
    if fat_cat_c(sys).is_some() {
        return MarkovPartition::cat_classic();
    }
    Err(Error::InvalidArgument(format!("no Markov partition for {}", sys.name())))
}

fn leaf_disc(sys: &dyn DynamicalSystem, x: &[f64], half_width: f64) -> Result<UnstableDisc> {
    let prov = AnalyticSplitting;
    let opts = CocycleOptions::new(&prov);
    UnstableDisc::leaf(sys, x, half_width, &prov, UnstableNorm::Quotient, &opts.inverse)
}

fn srb_sample(sys: &dyn DynamicalSystem, seed: u64, half_width: f64, n: usize, samples: usize) -> Result<EmpiricalMeasure> {
    let x = attractor_point(sys, seed)?;
    let disc = leaf_disc(sys, x.as_slice(), half_width)?;
    empirical_srb(sys, &disc, n, DiscSampling::Stratified(samples), seed)
}

/// Known Lyapunov exponents, repeated by multiplicity; solenoid exponents
/// without a closed form are integrated against the angular acim.
fn exponent_oracle(sys: &dyn DynamicalSystem) -> Option<Vec<f64>> {
    let m = sys.metadata();
    let mut out = Vec::new();
    for e in m["lyapunov_exponents"].as_array()? {
        let v = match e["value"].as_f64() {
            Some(v) => v,
            None => {
                let s = solenoid_of(sys)?;
                let bins = 4096;
                let rho = s.angular_acim(bins);
                rho.iter()
                    .enumerate()
                    .map(|(i, p)| p * s.circle_deriv((i as f64 + 0.5) / bins as f64).ln())
                    .sum::<f64>()
                    / bins as f64
            }
        };
        for _ in 0..e["multiplicity"].as_u64()? {
            out.push(v);
        }
    }
    Some(out)
}

fn lyapunov(sys: &dyn DynamicalSystem, seed: u64, p: &LyapunovParams, r: &mut Report) -> Result<()> {
    let x = match &p.x0 {
        Some(x) => DVector::from_vec(x.clone()),
        None => attractor_point(sys, seed)?,
    };
    let s = lyapunov_spectrum(sys, x.as_slice(), p.n, p.reorth_every)?;
    let oracle = exponent_oracle(sys);
    if let Some(o) = &oracle {
        for (i, (a, b)) in s.raw.iter().zip(o).enumerate() {
            r.below(format!("exponent {} error", i + 1), "oseledets-spectrum", (a - b).abs(), p.tol);
        }
    }
    r.data("spectrum", &s);
    r.data("expected", &oracle);
    let rows = s.raw.iter().enumerate().map(|(i, v)| {
        let e = oracle.as_ref().and_then(|o| o.get(i)).map(|e| e.to_string()).unwrap_or_default();
        vec![(i + 1).to_string(), v.to_string(), e]
    });
    r.file("lyapunov.csv", table(&["index", "exponent", "expected"], rows)?);
    Ok(())
}

fn manifold(sys: &Arc<dyn DynamicalSystem>, seed: u64, p: &ManifoldParams, r: &mut Report) -> Result<()> {
    let x = attractor_point(sys.as_ref(), seed)?;
    let orbit = srbkit::dynsys::iterate(sys.as_ref(), x.as_slice(), p.steps)?;
    let opts = ChartOptions {
        lambda1: Some(p.lambda1),
        delta1: p.delta1,
        delta2: p.delta2,
        ..Default::default()
    };
    let charts = build_charts(sys, &orbit.points, &AnalyticSplitting, &opts)?;
    let rad = charts.radii[0];
    let (du, ds) = (charts.du, charts.dim - charts.du);
    let v1 = GraphPatch::zero(&charts, PatchKind::Unstable, 0)?;
    let v2 = GraphPatch::from_fn(&charts, PatchKind::Unstable, 0, |xi| {
        let v = DVector::from_fn(ds, |i, _| if i == 0 { p.offset * rad + p.slope * xi[0] } else { -0.1 * rad });
        let mut d = DMatrix::zeros(ds, du);
        d[(0, 0)] = p.slope;
        (v, d)
    })?;
    let rep = convergence_diagnostics(&charts, &v1, &v2, p.steps, p.fit_tol)?;
    r.at_least("C0 decay exponent", "graph-transform-c0-contraction", rep.c0_exponent, rep.c0_required);
    r.at_least("C1 decay exponent", "graph-transform-c1-contraction", rep.c1_exponent, rep.c1_required);
    r.data("convergence", &rep);
    r.file("convergence.csv", csv_bytes(|b| rep.write_csv(b))?);
    Ok(())
}

fn density(sys: &Arc<dyn DynamicalSystem>, seed: u64, p: &DensityParams, r: &mut Report) -> Result<()> {
    let prov = AnalyticSplitting;
    let opts = CocycleOptions::new(&prov);
    let x = attractor_point(sys.as_ref(), seed)?;
    let disc = leaf_disc(sys.as_ref(), x.as_slice(), p.half_width)?;
    let d = srb_density(sys.as_ref(), &disc, p.depth, &opts)?;
    let constant_jacobian = sys.metadata()["unstable_jacobian"].is_number();
    if constant_jacobian {
        let dev = d.values.iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max);
        r.below("sup |h - 1| on the leaf", "leaf-density-formula", dev, p.uniform_tol);
    } else if let Some(s) = solenoid_of(sys.as_ref()) {
        // h ∝ ρ(θ₋ₘ) ∏ 1/g'(θ₋ₖ): the acim pulled back along the leaf.
        let rho = s.angular_acim(p.oracle_bins);
        let bins = p.oracle_bins;
        let mut oracle = Vec::with_capacity(disc.len());
        for node in &disc.nodes {
            let back = inverse_on_attractor(&s, node.as_slice(), p.oracle_steps, &opts.inverse)?;
            let mut v = 1.0;
            for k in 1..=p.oracle_steps {
                v /= s.circle_deriv(wrap_unit(back.at(k)[0]));
            }
            let t = wrap_unit(back.at(p.oracle_steps)[0]);
            oracle.push(v * rho[((t * bins as f64) as usize).min(bins - 1)]);
        }
        let z: f64 = oracle.iter().zip(&disc.weights).map(|(o, w)| o * w).sum();
        let l1: f64 = d
            .values
            .iter()
            .zip(&oracle)
            .zip(&disc.weights)
            .map(|((h, o), w)| w * (h - o / z).abs())
            .sum();
        r.below("L1 distance to the transfer-operator oracle", "leaf-density-formula", l1, p.l1_tol);
    }
    r.data("density", &d);
    r.file("density.csv", csv_bytes(|b| d.write_csv(b))?);

    // Distortion: cocycle ratios between nodes of one leaf piece, and
    // determinant ratios along a graph pair.
    let piece = leaf_disc(sys.as_ref(), x.as_slice(), p.distortion_half_width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd157);
    let mut c: f64 = 1.0;
    let mut tails_ok = true;
    let mut rows = Vec::with_capacity(p.distortion_pairs);
    for _ in 0..p.distortion_pairs {
        let i = rng.gen_range(0..piece.len());
        let j = rng.gen_range(0..piece.len());
        let q = cocycle_ratio(sys.as_ref(), piece.nodes[i].as_slice(), piece.nodes[j].as_slice(), p.depth, &opts)?;
        c = c.max(q.c);
        tails_ok &= q.pass;
        rows.push(vec![i.to_string(), j.to_string(), q.value.to_string(), q.c.to_string()]);
    }
    let orbit = srbkit::dynsys::iterate(sys.as_ref(), x.as_slice(), p.depth)?;
    let charts = build_charts(sys, &orbit.points, &prov, &ChartOptions::default())?;
    let rad = charts.radii[0];
    let (du, ds) = (charts.du, charts.dim - charts.du);
    let tilted = GraphPatch::from_fn(&charts, PatchKind::Unstable, 0, |xi| {
        let v = DVector::from_fn(ds, |i, _| 0.1 * rad * (i as f64 + 1.0) + 0.05 * xi[0] - 0.03 * xi[0] * xi[0] / rad);
        let d = DMatrix::from_fn(ds, du, |_, _| 0.05 - 0.06 * xi[0] / rad);
        (v, d)
    })?;
    let zero = GraphPatch::zero(&charts, PatchKind::Unstable, 0)?;
    let t = jacobian_ratio_bounds(&charts, &tilted, &zero, p.depth, None)?;
    c = c.max(t.c);
    r.holds("cocycle products converged", "cocycle-distortion", tails_ok);
    r.holds("per-step determinant factors decay", "determinant-ratio-distortion", t.pass);
    r.below("global distortion constant C", "bounded-distortion", c, p.c_max);
    r.data("determinant_ratios", &t);
    r.file("distortion.csv", table(&["i", "j", "ratio", "c"], rows)?);
    r.file("determinant_ratios.csv", csv_bytes(|b| t.write_csv(b))?);
    Ok(())
}

/// Oracle bin masses of the first coordinate's marginal, when known.
fn marginal_oracle(sys: &dyn DynamicalSystem, bins: usize) -> Option<Vec<f64>> {
    if let Some(s) = solenoid_of(sys) {
        let fine = 64 * bins;
        let rho = s.angular_acim(fine);
        return Some(rho.chunks(64).map(|c| c.iter().sum::<f64>() / fine as f64).collect());
    }
    fat_cat_c(sys).map(|_| vec![1.0 / bins as f64; bins])
}

fn empirical(sys: &dyn DynamicalSystem, seed: u64, p: &EmpiricalParams, r: &mut Report) -> Result<()> {
    let a = srb_sample(sys, seed, p.half_width, p.n, p.samples)?;
    let b = srb_sample(sys, seed.wrapping_add(1), p.half_width, p.n, p.samples)?;
    let tv = a.total_variation(&b, sys.basin(), p.cells);
    r.below("two-disc total variation", "srb-uniqueness", tv, p.tv_tol);
    let m = a.marginal(sys.basin(), 0, p.bins);
    let oracle = marginal_oracle(sys, p.bins);
    if let Some(o) = &oracle {
        let dev = m.iter().zip(o).map(|(x, y)| (x / y - 1.0).abs()).fold(0.0, f64::max);
        r.below("max relative marginal deviation", "srb-construction", dev, p.marginal_tol);
    }
    r.data("total_variation", tv);
    r.data("marginal", &m);
    let rows = m.iter().enumerate().map(|(i, v)| {
        let e = oracle.as_ref().map(|o| o[i].to_string()).unwrap_or_default();
        vec![i.to_string(), v.to_string(), e]
    });
    r.file("marginal.csv", table(&["bin", "mass", "expected"], rows)?);
    r.file("points.csv", csv_bytes(|w| a.write_csv(w))?);
    Ok(())
}

fn holonomy(sys: &dyn DynamicalSystem, seed: u64, p: &HolonomyParams, r: &mut Report) -> Result<()> {
    let x = attractor_point(sys, seed)?;
    // Two nearby leaves through one local stable manifold.
    let (x1, x2) = if let Some(s) = solenoid_of(sys) {
        let mut word = vec![0; p.split_depth];
        let a = s.point_with_history(x[0], &word);
        if let Some(last) = word.last_mut() {
            *last = 1;
        }
        (a, s.point_with_history(x[0], &word))
    } else {
        let es = FatCat::stable_vector();
        let y = sys.translate(x.as_slice(), (&es * p.stable_offset).as_slice());
        (x, y)
    };
    let d1 = leaf_disc(sys, x1.as_slice(), p.half_width)?;
    let d2 = leaf_disc(sys, x2.as_slice(), p.target_half_width)?;
    let bases: Vec<DVector<f64>> = (0..p.bases)
        .map(|i| d1.point_at(sys, d1.param_at_fraction((i as f64 + 0.5) / p.bases as f64)))
        .collect::<Result<_>>()?;
    let rep = holonomy_map(sys, &d1, &d2, &bases, &AnalyticSplitting, &BracketConfig::default())?;
    let j = holonomy_jacobian(&rep, p.width)?;
    r.holds("stable displacement contracts", "stable-holonomy", rep.contraction_ok);
    r.below("cell ratio max/min", "holonomy-absolute-continuity", j.coarse.max / j.coarse.min, p.spread_max);
    r.below("relative drift under cell halving", "holonomy-absolute-continuity", j.halving_drift, p.drift_max);
    r.data("pairs", rep.pairs.len());
    r.data("dropped", rep.dropped);
    r.data("jacobian", &j);
    r.file("holonomy.csv", csv_bytes(|b| rep.write_csv(b))?);
    r.file("cells.csv", csv_bytes(|b| j.write_csv(b))?);
    Ok(())
}

/// Number of period-`n` points, when known in closed form.
fn periodic_oracle(sys: &dyn DynamicalSystem, n: usize) -> Option<u64> {
    if solenoid_of(sys).is_some() {
        return Some((1u64 << n) - 1);
    }
    fat_cat_c(sys).map(|_| FatCat::periodic_count(n as u32))
}

fn shadowing(sys: &dyn DynamicalSystem, seed: u64, p: &ShadowParams, r: &mut Report) -> Result<()> {
    let x = attractor_point(sys, seed)?;
    let pseudo = PseudoOrbit::perturbed(sys, x.as_slice(), p.length, p.alpha, seed)?;
    let sh = shadow(sys, &pseudo, p.beta, &AnalyticSplitting, &ShadowOptions::default())?;
    r.at_most("shadowing distance", "shadowing-lemma", sh.beta, p.beta);
    r.at_most("Newton steps", "shadowing-lemma", sh.newton_steps as f64, p.max_newton as f64);
    r.data("shadow_beta", sh.beta);
    r.data("pseudo_orbit_defect", pseudo.defect);
    r.data("newton_steps", sh.newton_steps);
    let rows = pseudo.points.iter().zip(&sh.orbit.points).enumerate().map(|(i, (a, b))| {
        let mut row = vec![i.to_string()];
        row.extend(a.iter().map(|v| v.to_string()));
        row.extend(b.iter().map(|v| v.to_string()));
        row.push(sys.distance(a.as_slice(), b.as_slice()).to_string());
        row
    });
    let d = sys.dim();
    let mut header: Vec<String> = vec!["step".into()];
    header.extend((0..d).map(|i| format!("pseudo{i}")));
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("distance".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    r.file("shadow.csv", table(&header, rows)?);

    if p.census_max_period == 0 || periodic_oracle(sys, 1).is_none() {
        return Ok(());
    }
    let g = p.census_grid;
    let samples: Vec<DVector<f64>> = if fat_cat_c(sys).is_some() {
        (0..g * g)
            .map(|i| DVector::from_vec(vec![((i / g) as f64 + 0.5) / g as f64, ((i % g) as f64 + 0.5) / g as f64, 0.0]))
            .collect()
    } else {
        attractor_sample(sys, g * g, BURN_IN, seed)?.points
    };
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for n in 1..=p.census_max_period {
        let c = periodic_census(sys, &samples, n, p.census_alpha, p.census_eps, &Default::default())?;
        let want = periodic_oracle(sys, n).unwrap();
        r.at_most(format!("period-{n} count error"), "periodic-closing", (c.count() as f64 - want as f64).abs(), 0.0);
        rows.push(vec![n.to_string(), c.count().to_string(), want.to_string(), c.failures.to_string()]);
        counts.push(c.count());
    }
    r.data("periodic_counts", &counts);
    r.file("census.csv", table(&["period", "count", "expected", "failures"], rows)?);
    Ok(())
}

/// Fitted slope of `−log diameter` against the half-length `m` of centred
/// cylinders, worst case over random admissible words.
fn coding_decay(
    sys: &dyn DynamicalSystem,
    part: &MarkovPartition,
    t: &TransitionMatrix,
    p: &MarkovParams,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Vec<String>>)> {
    let mut pts = Vec::new();
    let mut rows = Vec::new();
    for m in 1..=p.max_half_length {
        let mut worst: f64 = 0.0;
        for _ in 0..p.words_per_length {
            let mut w = vec![rng.gen_range(0..part.len())];
            while w.len() < 2 * m + 1 {
                let last = *w.last().unwrap();
                let next: Vec<usize> = (0..part.len()).filter(|&j| t.a[last][j] == 1).collect();
                w.push(next[rng.gen_range(0..next.len())]);
            }
            worst = worst.max(coding_map(sys, part, t, &w, m)?.diameter);
        }
        pts.push((m as f64, -worst.ln()));
        rows.push(vec![m.to_string(), worst.to_string()]);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|q| q.0).sum::<f64>() / n;
    let my = pts.iter().map(|q| q.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    let den: f64 = pts.iter().map(|q| (q.0 - mx).powi(2)).sum();
    Ok((num / den, rows))
}

fn markov(sys: &dyn DynamicalSystem, seed: u64, p: &MarkovParams, r: &mut Report) -> Result<()> {
    let cfg = MarkovConfig {
        gamma: p.gamma,
        alpha: p.alpha,
        beta: p.beta,
        seed,
        ..Default::default()
    };
    let (part, build) = build_markov_partition(sys, &AnalyticSplitting, &cfg)?;
    let v = verify_markov(sys, &part, p.samples, seed);
    let t = transition_matrix(sys, &part, p.per_rectangle, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
    let (rate, rows) = coding_decay(sys, &part, &t, p, &mut rng)?;
    let predicted = sys.hyperbolicity_rate().unwrap_or(0.0);
    let entropy = if fat_cat_c(sys).is_some() { FatCat::lambda_max().ln() } else { 2f64.ln() };
    r.at_most("Markov property violations", "markov-partition", v.violations() as f64, 0.0);
    r.at_least("coding diameter decay rate", "coding-map-contraction", rate, predicted - p.rate_slack);
    r.below("|log spectral radius - topological entropy|", "partition-entropy", (t.entropy() - entropy).abs(), p.entropy_tol);
    r.data("build", &build);
    r.data("verification", &v);
    r.data("matrix", &t);
    let mut json = Vec::new();
    part.write_json(&mut json, Some(&t))?;
    r.file("partition.json", json);
    let mut header: Vec<String> = vec!["from".into()];
    header.extend((0..part.len()).map(|j| format!("to{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let trows = t.a.iter().enumerate().map(|(i, row)| {
        let mut v = vec![i.to_string()];
        v.extend(row.iter().map(|x| x.to_string()));
        v
    });
    r.file("transition.csv", table(&header, trows)?);
    r.file("coding_diameters.csv", table(&["half_length", "max_diameter"], rows)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x171);
    let mut its = Vec::with_capacity(p.itineraries);
    for _ in 0..p.itineraries {
        let x = part.sample_attractor(&mut rng);
        let it = itinerary(sys, &part, x.as_slice(), p.itinerary_length);
        its.push((x.as_slice().to_vec(), it));
    }
    r.file("itineraries.csv", csv_bytes(|b| write_itineraries_csv(b, &its))?);
    Ok(())
}

fn gibbs(p: &GibbsParams, seed: u64, r: &mut Report) -> Result<()> {
    let sft = Sft::new(p.matrix.clone(), p.beta_metric)?;
    let phi = if p.potential.is_empty() {
        Potential::constant(&sft, 0.0)
    } else {
        let blocks = sft.words(p.k);
        if blocks.len() != p.potential.len() {
            return Err(Error::InvalidArgument(format!(
                "potential needs {} values, one per admissible {}-block",
                blocks.len(),
                p.k
            )));
        }
        Potential::from_fn(&sft, p.k, |w| p.potential[blocks.iter().position(|b| b == w).unwrap()])?
    };
    let mut g = pressure_gibbs(&sft, &phi)?;
    let expected = match p.pressure {
        Some(v) => Some(v),
        None if p.potential.is_empty() => Some(TransitionMatrix::from_rows(p.matrix.clone())?.entropy()),
        None => None,
    };
    if let Some(e) = expected {
        r.below("|P - expected pressure|", "pressure", (g.pressure - e).abs(), p.pressure_tol);
    }
    let b = gibbs_bounds_check(&mut g, &sft, &phi, p.max_len, seed);
    r.below("Gibbs constant drift across word lengths", "gibbs-property", b.drift, p.drift_tol);
    let v = entropy_and_variational(&g, p.perturbations, seed)?;
    r.below("|h + integral phi - P|", "variational-principle", v.identity_error, p.identity_tol);
    let worst = v.perturbed_gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    r.at_most("max over perturbed measures of h + integral phi - P", "variational-principle", worst, 0.0);
    r.data("pressure", g.pressure);
    r.data("gibbs_bounds", &b);
    r.data("variational", &v);
    r.file("cylinders.csv", csv_bytes(|w| g.write_cylinders_csv(w, &phi))?);
    let rows = b
        .per_length
        .iter()
        .map(|(n, lo, hi, k)| vec![n.to_string(), lo.to_string(), hi.to_string(), k.to_string()]);
    r.file("gibbs_ratios.csv", table(&["length", "min_ratio", "max_ratio", "words"], rows)?);
    Ok(())
}

fn equilibrium(sys: &dyn DynamicalSystem, seed: u64, p: &EquilibriumParams, r: &mut Report) -> Result<()> {
    let part = seed_partition(sys)?;
    let t = transition_matrix(sys, &part, 64, seed)?;
    let opts = EquilibriumOptions {
        depth: p.depth,
        push_past: p.push_past,
        push_future: p.push_future,
    };
    let e = srb_via_equilibrium(sys, &part, &t, &AnalyticSplitting, &opts)?;
    r.below("|P(-log Ju)|", "srb-equilibrium-pressure", e.pressure.abs(), p.pressure_tol);
    let mu = srb_sample(sys, seed, p.half_width, p.n, p.samples)?;
    let tv = e.pushforward.total_variation(&mu, sys.basin(), p.cells);
    r.below("pushforward vs empirical SRB total variation", "srb-equilibrium-state", tv, p.tv_tol);
    r.data("equilibrium", &e);
    r.data("total_variation", tv);
    let a = e.pushforward.cell_masses(sys.basin(), p.cells);
    let b = mu.cell_masses(sys.basin(), p.cells);
    let rows = a
        .iter()
        .zip(&b)
        .enumerate()
        .filter(|(_, (x, y))| **x > 0.0 || **y > 0.0)
        .map(|(i, (x, y))| vec![i.to_string(), x.to_string(), y.to_string()]);
    r.file("cells.csv", table(&["cell", "equilibrium", "empirical"], rows)?);
    r.file("cylinders.csv", csv_bytes(|w| e.gibbs.write_cylinders_csv(w, &e.potential))?);
    Ok(())
}

fn entropy(sys: &dyn DynamicalSystem, seed: u64, p: &EntropyParams, r: &mut Report) -> Result<()> {
    let part = seed_partition(sys)?;
    let mu = match p.measure {
        TestMeasure::Srb => srb_sample(sys, seed, p.half_width, p.n, p.samples)?,
        // θ = 0 and the origin are fixed for every built-in with a partition.
        TestMeasure::FixedPoint => {
            let x = match solenoid_of(sys) {
                Some(s) => s.point_with_history(0.0, &[]),
                None => DVector::zeros(sys.dim()),
            };
            EmpiricalMeasure::dirac(x.as_slice())
        }
    };
    let opts = EntropyOptions {
        depth: p.depth,
        orbit: p.orbit,
        lyapunov_samples: p.lyapunov_samples,
        slope_tol: p.slope_tol,
        tol: p.tol,
        seed,
    };
    let e = ruelle_pesin_check(sys, &mu, &part, &AnalyticSplitting, &opts)?;
    r.holds("Ruelle inequality h <= sum of positive exponents", "ruelle-inequality", e.ruelle);
    match p.measure {
        TestMeasure::Srb => r.below("|sum of positive exponents - h|", "pesin-formula", e.gap.abs(), p.tol),
        TestMeasure::FixedPoint => r.above("sum of positive exponents - h", "ruelle-inequality-strict", e.gap, p.ruelle_gap),
    }
    r.data("h", e.entropy);
    r.data("lyapunov_sum", e.lyapunov_sum);
    r.data("gap", e.gap);
    r.data("increments", &e.increments);
    let rows = e.increments.iter().enumerate().map(|(i, v)| vec![(p.depth + i + 1 - e.increments.len()).to_string(), v.to_string()]);
    r.file("entropy_increments.csv", table(&["length", "increment"], rows)?);
    Ok(())
}

fn observability(sys: &dyn DynamicalSystem, seed: u64, p: &ObservabilityParams, r: &mut Report) -> Result<()> {
    let reference = srb_sample(sys, seed, p.half_width, p.reference_n, p.reference_samples)?;
    let plane = Transversal {
        anchor: p.anchor.clone(),
        basis: p.basis.clone(),
        radius: p.radius,
    };
    let opts = ObservabilityOptions {
        samples: p.samples,
        n: p.n,
        tol: p.tol,
        delta: p.delta,
        seed,
    };
    let o = observability_test(sys, &reference, &plane, &p.observables, &opts)?;
    r.at_least("fraction of plane samples with SRB averages", "observability", o.plane.fraction, p.fraction);
    r.at_least("fraction on the perturbed plane", "observability-robustness", o.perturbed.fraction, p.fraction);
    r.data("observability", &o);
    let rows = p.observables.iter().enumerate().map(|(i, _)| {
        vec![
            i.to_string(),
            o.reference[i].to_string(),
            o.plane.per_observable[i].to_string(),
            o.perturbed.per_observable[i].to_string(),
        ]
    });
    r.file("observability.csv", table(&["observable", "srb_integral", "plane_fraction", "perturbed_fraction"], rows)?);
    Ok(())
}

fn hoelder(sys: &dyn DynamicalSystem, seed: u64, p: &HoelderParams, r: &mut Report) -> Result<()> {
    let opts = HolderOptions {
        seed,
        depth: p.depth,
        noise_floor: p.noise_floor,
        alpha: p.alpha,
        fit_slack: p.fit_slack,
        spectrum_steps: p.spectrum_steps,
    };
    let e = holder_exponent_estimate(sys, p.bundle, p.pairs, &opts)?;
    r.at_least("fitted Hoelder exponent", "splitting-hoelder-continuity", e.beta, e.beta_star - p.fit_slack);
    r.data("estimate", &e);
    Ok(())
}
