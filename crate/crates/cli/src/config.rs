//! Experiment configuration. Every struct rejects unknown keys and carries
//! its defaults, so the echoed effective config is complete.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use srbkit::cocycle::Bundle;
use srbkit::dynsys::{builtin, DynamicalSystem};
use srbkit::srb::Observable;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Absent only for pipelines on abstract shifts (`gibbs`).
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub pipeline: Pipeline,
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_seed() -> u64 {
    1
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Solenoid {
        #[serde(default = "quarter")]
        contraction: f64,
    },
    WarpedSolenoid {
        #[serde(default = "quarter")]
        contraction: f64,
        #[serde(default = "half")]
        warp: f64,
    },
    FatCat {
        #[serde(default = "fifth")]
        c: f64,
    },
    GalerkinRd {
        #[serde(default = "sixteen")]
        modes: usize,
        #[serde(default = "twelve")]
        lambda: f64,
        #[serde(default = "half")]
        period: f64,
        #[serde(default = "milli")]
        dt: f64,
    },
    Linear {
        #[serde(default = "linear_diag")]
        diag: Vec<f64>,
    },
}

fn quarter() -> f64 {
    0.25
}
fn half() -> f64 {
    0.5
}
fn fifth() -> f64 {
    0.2
}
fn sixteen() -> usize {
    16
}
fn twelve() -> f64 {
    12.0
}
fn milli() -> f64 {
    1e-3
}
fn linear_diag() -> Vec<f64> {
    vec![2.0, 0.5]
}

impl SystemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SystemConfig::Solenoid { .. } => "solenoid",
            SystemConfig::WarpedSolenoid { .. } => "warped-solenoid",
            SystemConfig::FatCat { .. } => "fat-cat",
            SystemConfig::GalerkinRd { .. } => "galerkin-rd",
            SystemConfig::Linear { .. } => "linear",
        }
    }

    /// Parameter ranges the constructors assume.
    pub fn validate(&self) -> Result<(), String> {
        let ok = match self {
            SystemConfig::Solenoid { contraction } => *contraction > 0.0 && *contraction < 0.5,
            SystemConfig::WarpedSolenoid { contraction, warp } => {
                *contraction > 0.0 && *contraction < 0.5 && *warp != 0.0 && warp.abs() < 1.0
            }
            SystemConfig::FatCat { c } => *c > 0.0 && *c < 1.0,
            SystemConfig::GalerkinRd { modes, lambda, period, dt } => {
                *modes >= 1 && lambda.is_finite() && *period > 0.0 && *dt > 0.0 && *dt <= *period
            }
            SystemConfig::Linear { diag } => {
                diag.len() >= 2
                    && diag.iter().any(|d| d.abs() > 1.0)
                    && diag.iter().all(|d| d.abs() != 1.0 && *d != 0.0 && d.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("parameters out of range for system {}", self.name()))
        }
    }

    pub fn build(&self) -> srbkit::Result<Arc<dyn DynamicalSystem>> {
        let mut params = serde_json::to_value(self).expect("system config serializes");
        params.as_object_mut().expect("tagged struct").remove("name");
        builtin(self.name(), Some(&params))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pipeline {
    Lyapunov(LyapunovParams),
    Manifold(ManifoldParams),
    SrbDensity(DensityParams),
    Empirical(EmpiricalParams),
    Holonomy(HolonomyParams),
    Shadow(ShadowParams),
    Markov(MarkovParams),
    Gibbs(GibbsParams),
    Equilibrium(EquilibriumParams),
    EntropyCheck(EntropyParams),
    Observability(ObservabilityParams),
    Hoelder(HoelderParams),
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Lyapunov(_) => "lyapunov",
            Pipeline::Manifold(_) => "manifold",
            Pipeline::SrbDensity(_) => "srb-density",
            Pipeline::Empirical(_) => "empirical",
            Pipeline::Holonomy(_) => "holonomy",
            Pipeline::Shadow(_) => "shadow",
            Pipeline::Markov(_) => "markov",
            Pipeline::Gibbs(_) => "gibbs",
            Pipeline::Equilibrium(_) => "equilibrium",
            Pipeline::EntropyCheck(_) => "entropy-check",
            Pipeline::Observability(_) => "observability",
            Pipeline::Hoelder(_) => "hoelder",
        }
    }

    /// Systems the pipeline has the geometry for; `None` means any.
    fn supported(&self) -> Option<&'static [&'static str]> {
        const PARTITIONED: &[&str] = &["solenoid", "warped-solenoid", "fat-cat"];
        match self {
            Pipeline::Holonomy(_) | Pipeline::Markov(_) | Pipeline::Equilibrium(_) | Pipeline::EntropyCheck(_) => {
                Some(PARTITIONED)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovParams {
    pub n: usize,
    pub reorth_every: usize,
    /// Starting point; a burned-in attractor sample when absent.
    pub x0: Option<Vec<f64>>,
    pub tol: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams { n: 10_000, reorth_every: 1, x0: None, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldParams {
    pub steps: usize,
    pub lambda1: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub fit_tol: f64,
    /// Initial graph pair: zero against `offset·r + slope·ξ`.
    pub offset: f64,
    pub slope: f64,
}

impl Default for ManifoldParams {
    fn default() -> Self {
        ManifoldParams { steps: 30, lambda1: 0.6, delta1: 0.0, delta2: 0.05, fit_tol: 0.05, offset: 0.3, slope: 0.02 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityParams {
    pub depth: usize,
    pub half_width: f64,
    pub oracle_bins: usize,
    pub oracle_steps: usize,
    pub l1_tol: f64,
    pub uniform_tol: f64,
    /// Leaf pieces for the distortion constant.
    pub distortion_half_width: f64,
    pub distortion_pairs: usize,
    pub c_max: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams {
            depth: 30,
            half_width: 0.1,
            oracle_bins: 4096,
            oracle_steps: 8,
            l1_tol: 1e-2,
            uniform_tol: 1e-8,
            distortion_half_width: 0.15,
            distortion_pairs: 100,
            c_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmpiricalParams {
    pub n: usize,
    pub samples: usize,
    pub half_width: f64,
    pub bins: usize,
    pub cells: usize,
    pub marginal_tol: f64,
    pub tv_tol: f64,
}

impl Default for EmpiricalParams {
    fn default() -> Self {
        EmpiricalParams { n: 200, samples: 16_384, half_width: 0.5, bins: 64, cells: 8, marginal_tol: 0.02, tv_tol: 0.02 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyParams {
    pub half_width: f64,
    pub target_half_width: f64,
    pub bases: usize,
    pub width: f64,
    /// Backward depth at which the two solenoid leaves branch apart.
    pub split_depth: usize,
    /// Stable offset between the two fat-cat leaves.
    pub stable_offset: f64,
    pub spread_max: f64,
    pub drift_max: f64,
}

impl Default for HolonomyParams {
    fn default() -> Self {
        HolonomyParams {
            half_width: 0.3,
            target_half_width: 0.45,
            bases: 2000,
            width: 0.05,
            split_depth: 3,
            stable_offset: 0.1,
            spread_max: 3.0,
            drift_max: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowParams {
    pub length: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_newton: usize,
    /// Periods `1..=census_max_period` are counted; 0 skips the census.
    pub census_max_period: usize,
    /// Samples per axis of the census grid.
    pub census_grid: usize,
    pub census_alpha: f64,
    pub census_eps: f64,
}

impl Default for ShadowParams {
    fn default() -> Self {
        ShadowParams {
            length: 1000,
            alpha: 1e-4,
            beta: 1e-3,
            max_newton: 10,
            census_max_period: 8,
            census_grid: 600,
            census_alpha: 0.25,
            census_eps: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovParams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    pub per_rectangle: usize,
    pub entropy_tol: f64,
    pub rate_slack: f64,
    pub max_half_length: usize,
    pub words_per_length: usize,
    pub itineraries: usize,
    pub itinerary_length: usize,
}

impl Default for MarkovParams {
    fn default() -> Self {
        MarkovParams {
            gamma: 0.004,
            alpha: 0.01,
            beta: 0.2,
            samples: 10_000,
            per_rectangle: 64,
            entropy_tol: 0.01,
            rate_slack: 0.05,
            max_half_length: 8,
            words_per_length: 10,
            itineraries: 100,
            itinerary_length: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsParams {
    pub matrix: Vec<Vec<u8>>,
    pub beta_metric: f64,
    /// Block length of the potential.
    pub k: usize,
    /// One value per admissible `k`-block, in lexicographic order; empty
    /// means the zero potential.
    pub potential: Vec<f64>,
    /// Expected pressure; for the zero potential `log ρ(A)` is used when
    /// absent.
    pub pressure: Option<f64>,
    pub pressure_tol: f64,
    pub max_len: usize,
    pub drift_tol: f64,
    pub perturbations: usize,
    pub identity_tol: f64,
}

impl Default for GibbsParams {
    fn default() -> Self {
        GibbsParams {
            matrix: vec![vec![1, 1], vec![1, 0]],
            beta_metric: 0.5,
            k: 1,
            potential: Vec::new(),
            pressure: None,
            pressure_tol: 1e-10,
            max_len: 14,
            drift_tol: 1e-9,
            perturbations: 20,
            identity_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumParams {
    pub depth: usize,
    pub push_past: usize,
    pub push_future: usize,
    pub pressure_tol: f64,
    pub tv_tol: f64,
    pub cells: usize,
    pub n: usize,
    pub samples: usize,
    pub half_width: f64,
}

impl Default for EquilibriumParams {
    fn default() -> Self {
        EquilibriumParams {
            depth: 8,
            push_past: 6,
            push_future: 10,
            pressure_tol: 1e-3,
            tv_tol: 0.03,
            cells: 8,
            n: 200,
            samples: 4096,
            half_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMeasure {
    /// Empirical SRB measure from a leaf disc.
    Srb,
    /// Atom at a fixed point.
    FixedPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyParams {
    pub measure: TestMeasure,
    pub depth: usize,
    pub orbit: usize,
    pub lyapunov_samples: usize,
    pub slope_tol: f64,
    pub tol: f64,
    pub ruelle_gap: f64,
    pub n: usize,
    pub samples: usize,
    pub half_width: f64,
}

impl Default for EntropyParams {
    fn default() -> Self {
        EntropyParams {
            measure: TestMeasure::Srb,
            depth: 8,
            orbit: 20,
            lyapunov_samples: 2000,
            slope_tol: 0.05,
            tol: 0.02,
            ruelle_gap: 0.5,
            n: 200,
            samples: 4096,
            half_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityParams {
    pub observables: Vec<Observable>,
    pub anchor: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub radius: f64,
    pub samples: usize,
    pub n: usize,
    pub tol: f64,
    pub delta: f64,
    pub fraction: f64,
    pub reference_n: usize,
    pub reference_samples: usize,
    pub half_width: f64,
}

impl Default for ObservabilityParams {
    fn default() -> Self {
        ObservabilityParams {
            observables: vec![
                Observable::Trig { amplitude: 0.5, freq: vec![1.0, 0.0, 0.0], phase: 0.0 },
                Observable::Trig { amplitude: 0.5, freq: vec![2.0, 0.0, 0.0], phase: 0.7 },
                Observable::Coordinate { axis: 1 },
            ],
            anchor: vec![0.3, 0.1, -0.1],
            basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            radius: 0.3,
            samples: 1000,
            n: 20_000,
            tol: 0.02,
            delta: 0.1,
            fraction: 0.99,
            reference_n: 2000,
            reference_samples: 4096,
            half_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoelderParams {
    pub bundle: Bundle,
    pub pairs: usize,
    pub depth: usize,
    pub noise_floor: f64,
    pub alpha: f64,
    pub fit_slack: f64,
    pub spectrum_steps: usize,
}

impl Default for HoelderParams {
    fn default() -> Self {
        HoelderParams {
            bundle: Bundle::S,
            pairs: 400,
            depth: 40,
            noise_floor: 1e-12,
            alpha: 1.0,
            fit_slack: 0.05,
            spectrum_steps: 2000,
        }
    }
}

impl ExperimentConfig {
    /// Parse and check everything that can be checked before running.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        match (&self.system, &self.pipeline) {
            (None, Pipeline::Gibbs(_)) => {}
            (None, p) => return Err(format!("pipeline {} needs a system", p.name())),
            (Some(s), p) => {
                s.validate()?;
                if let Some(names) = p.supported() {
                    if !names.contains(&s.name()) {
                        return Err(format!("pipeline {} supports only {}", p.name(), names.join(", ")));
                    }
                }
            }
        }
        match &self.pipeline {
            Pipeline::Gibbs(g) => {
                let m = g.matrix.len();
                if m == 0 || g.matrix.iter().any(|r| r.len() != m || r.iter().any(|&v| v > 1)) {
                    return Err("gibbs matrix must be square 0/1".into());
                }
                if g.k == 0 {
                    return Err("gibbs block length k must be positive".into());
                }
            }
            Pipeline::Observability(o) => {
                if o.observables.is_empty() || o.basis.is_empty() || o.radius <= 0.0 {
                    return Err("observability needs observables, a basis and a positive radius".into());
                }
            }
            Pipeline::Lyapunov(l) if l.n == 0 || l.reorth_every == 0 => {
                return Err("lyapunov needs n > 0 and reorth_every > 0".into());
            }
            _ => {}
        }
        Ok(())
    }
}
