//! TOML experiment configuration: parsing, validation, and translation
//! into problem specs and training configs.
//!
//! A config file has typed sections; two modes exist:
//!
//! * `mode = "train"` — full collocation-solver run on one benchmark.
//! * `mode = "estimate"` — standalone estimator sweep (the Fig. 2/3
//!   style single-derivative accuracy measurements).

use crate::estimator::Side;
use crate::geometry::{Domain, HEART_COEFFS};
use crate::problems::{BenchmarkId, ProblemSpec};
use crate::qmc::{StreamKind, UniformStream};
use crate::solver::{LossWeights, NodePolicy, TrainConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown problem '{0}' (expected poisson2d_frac, diffusion2d_tsfrac, bloch_torrey3d, or fuzzy_boundary)")]
    UnknownProblem(String),
    #[error("unknown domain shape '{0}' (expected disk, ball, or heart)")]
    UnknownShape(String),
    #[error("order {0} hits the cos(pi a/2) pole of the Riesz coefficient: spatial orders must lie strictly inside (1,2)")]
    RieszPole(f64),
    #[error("time order {0} must lie strictly inside (0,1)")]
    BadTimeOrder(f64),
    #[error("field '{field}' is invalid: {reason}")]
    BadField { field: &'static str, reason: String },
    #[error("unknown stream kind '{0}' (expected pseudo, sobol, or halton)")]
    UnknownStream(String),
    #[error("unknown estimate function '{0}' (expected x_sq or one_minus_x_sq)")]
    UnknownFunction(String),
    #[error("unknown side '{0}' (expected left or right)")]
    UnknownSide(String),
    #[error("mode '{0}' requires its matching section ([training] or [estimate])")]
    MissingSection(String),
    #[error("unknown mode '{0}' (expected train or estimate)")]
    UnknownMode(String),
}

fn default_mode() -> String {
    "train".into()
}

fn default_stream() -> String {
    "pseudo".into()
}

fn default_seed() -> u64 {
    7
}

fn default_workers() -> usize {
    1
}

fn default_output() -> String {
    "runs/out".into()
}

/// Top-level experiment configuration (mirrors the TOML layout).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub problem: Option<ProblemSection>,
    #[serde(default)]
    pub domain: Option<DomainSection>,
    #[serde(default)]
    pub training: Option<TrainingSection>,
    #[serde(default)]
    pub estimate: Option<EstimateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    /// Caputo time order for time-fractional problems.
    pub alpha: Option<f64>,
    /// Spatial orders: `beta` for poisson (axis x, axis y = `beta2` or
    /// reuse), `two_beta` for the Bloch-Torrey family.
    pub beta: Option<f64>,
    pub beta2: Option<f64>,
    pub two_beta: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k_alpha: Option<f64>,
    pub k_beta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub shape: String,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub iterations: usize,
    #[serde(default = "TrainingSection::default_adam_fraction")]
    pub adam_fraction: f64,
    #[serde(default = "TrainingSection::default_learning_rate")]
    pub learning_rate: f64,
    /// Geometric decay factor reached at the end of the Adam phase
    /// (1.0 = constant rate).
    #[serde(default = "TrainingSection::default_lr_decay")]
    pub lr_decay: f64,
    /// Rescale each equation residual to unit functional norm.
    #[serde(default)]
    pub normalize_residuals: bool,
    /// "fixed" or "per_iteration"
    #[serde(default = "TrainingSection::default_node_policy")]
    pub node_policy: String,
    #[serde(default = "TrainingSection::default_redraw")]
    pub node_redraw_every: u32,
    #[serde(default)]
    pub weights: WeightsSection,
    pub n_points: usize,
    pub repeats: usize,
    #[serde(default = "TrainingSection::default_n_equation")]
    pub n_equation: usize,
    #[serde(default)]
    pub n_initial: Option<usize>,
    #[serde(default = "TrainingSection::default_n_boundary")]
    pub n_boundary: usize,
    #[serde(default = "TrainingSection::default_n_validation")]
    pub n_validation: usize,
    /// Full layer sizes including input/output; empty = derived default.
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl TrainingSection {
    fn default_adam_fraction() -> f64 {
        0.8
    }
    fn default_learning_rate() -> f64 {
        1e-3
    }
    fn default_lr_decay() -> f64 {
        1.0
    }
    fn default_node_policy() -> String {
        "per_iteration".into()
    }
    fn default_redraw() -> u32 {
        1
    }
    fn default_n_equation() -> usize {
        1000
    }
    fn default_n_boundary() -> usize {
        400
    }
    fn default_n_validation() -> usize {
        400
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub w_e: f64,
    pub w_i: f64,
    pub w_b: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self { w_e: 1.0, w_i: 1.0, w_b: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// "x_sq" (left derivative target) or "one_minus_x_sq" (right).
    pub function: String,
    pub alpha: f64,
    pub side: String,
    pub n_points: usize,
    pub repeats: usize,
    #[serde(default = "default_stream")]
    pub stream: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Number of seeds; the summary reports the median L² error.
    #[serde(default = "EstimateSection::default_n_seeds")]
    pub n_seeds: usize,
}

impl EstimateSection {
    fn default_n_seeds() -> usize {
        10
    }
}

/// A fully validated run plan derived from an [`ExperimentConfig`].
#[derive(Debug)]
pub enum RunPlan {
    Train {
        problem: ProblemSpec,
        train: TrainConfig,
    },
    Estimate(EstimatePlan),
}

#[derive(Debug)]
pub struct EstimatePlan {
    pub function: EstimateFunction,
    pub alpha: f64,
    pub side: Side,
    pub n_points: usize,
    pub repeats: usize,
    pub stream: StreamKind,
    pub seed: u64,
    pub n_seeds: usize,
}

/// The two Fig. 2/3 test integrands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateFunction {
    /// f(x) = x² on (0,1); natural target of the left derivative.
    XSq,
    /// f(x) = (1−x)² on (0,1); natural target of the right derivative.
    OneMinusXSq,
}

impl EstimateFunction {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "x_sq" => Ok(Self::XSq),
            "one_minus_x_sq" => Ok(Self::OneMinusXSq),
            other => Err(ConfigError::UnknownFunction(other.into())),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::XSq => x * x,
            Self::OneMinusXSq => (1.0 - x) * (1.0 - x),
        }
    }

    /// Exact fractional derivative on the natural side:
    /// Γ(3)/Γ(3−a)·ξ^{2−a} with ξ = x (left of x²) or 1−x (right of (1−x)²).
    pub fn exact_derivative(&self, alpha: f64, x: f64) -> f64 {
        let xi = match self {
            Self::XSq => x,
            Self::OneMinusXSq => 1.0 - x,
        };
        crate::gamma::gamma(3.0) / crate::gamma::gamma(3.0 - alpha) * xi.powf(2.0 - alpha)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::XSq => "x_sq",
            Self::OneMinusXSq => "one_minus_x_sq",
        }
    }
}

pub fn parse_side(s: &str) -> Result<Side, ConfigError> {
    match s {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(ConfigError::UnknownSide(other.into())),
    }
}

pub fn parse_stream(kind: &str, seed: u64) -> Result<StreamKind, ConfigError> {
    match kind {
        "pseudo" => Ok(StreamKind::PseudoRandom { seed }),
        "sobol" => Ok(UniformStream::sobol().kind()),
        "halton" => Ok(UniformStream::halton(3).kind()),
        other => Err(ConfigError::UnknownStream(other.into())),
    }
}

fn check_spatial_order(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if !(1.0 < v && v < 2.0) {
        if v == 1.0 || v == 2.0 || (0.0..=3.0).contains(&v) {
            return Err(ConfigError::RieszPole(v));
        }
        return Err(ConfigError::BadField {
            field,
            reason: format!("{v} outside (1,2)"),
        });
    }
    Ok(v)
}

fn check_time_order(v: f64) -> Result<f64, ConfigError> {
    if !(0.0 < v && v < 1.0) {
        return Err(ConfigError::BadTimeOrder(v));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn build_domain(&self) -> Result<Domain, ConfigError> {
        let section = self.domain.as_ref();
        let shape = section.map(|d| d.shape.as_str()).unwrap_or("disk");
        let radius = section.and_then(|d| d.radius);
        match shape {
            "disk" => Ok(Domain::disk(radius.unwrap_or(1.0))),
            "ball" => Ok(Domain::ball(radius.unwrap_or(0.5))),
            "heart" => Ok(Domain::heart(HEART_COEFFS)),
            other => Err(ConfigError::UnknownShape(other.into())),
        }
    }

    fn build_problem(&self) -> Result<ProblemSpec, ConfigError> {
        let p = self
            .problem
            .as_ref()
            .ok_or_else(|| ConfigError::MissingSection("train".into()))?;
        let id = BenchmarkId::from_name(&p.name)
            .ok_or_else(|| ConfigError::UnknownProblem(p.name.clone()))?;
        match id {
            BenchmarkId::Poisson2dFrac => {
                let a = check_spatial_order("alpha", p.alpha.unwrap_or(1.7))?;
                let b = check_spatial_order("beta", p.beta.unwrap_or(1.5))?;
                Ok(ProblemSpec::poisson2d_frac(a, b, self.build_domain()?))
            }
            BenchmarkId::Diffusion2dTsfrac => {
                let a = check_time_order(p.alpha.unwrap_or(0.3))?;
                let b1 = check_spatial_order("beta", p.beta.unwrap_or(1.6))?;
                let b2 = check_spatial_order("beta2", p.beta2.or(p.beta).unwrap_or(1.6))?;
                Ok(ProblemSpec::diffusion2d_tsfrac(
                    a,
                    b1,
                    b2,
                    p.k1.unwrap_or(1.0),
                    p.k2.unwrap_or(1.0),
                ))
            }
            BenchmarkId::BlochTorrey3d => {
                let a = check_time_order(p.alpha.unwrap_or(0.9))?;
                let tb = check_spatial_order("two_beta", p.two_beta.unwrap_or(1.9))?;
                Ok(ProblemSpec::bloch_torrey3d(
                    a,
                    tb,
                    p.k_alpha.unwrap_or(1.0),
                    p.k_beta.unwrap_or(1.0),
                ))
            }
            BenchmarkId::FuzzyBoundary => {
                let a = check_time_order(p.alpha.unwrap_or(0.9))?;
                let tb = check_spatial_order("two_beta", p.two_beta.unwrap_or(1.9))?;
                Ok(ProblemSpec::fuzzy_boundary(a, tb))
            }
        }
    }

    /// Validates the whole config and produces a run plan.
    pub fn plan(&self) -> Result<RunPlan, ConfigError> {
        match self.mode.as_str() {
            "train" => {
                let problem = self.build_problem()?;
                let t = self
                    .training
                    .as_ref()
                    .ok_or_else(|| ConfigError::MissingSection("train".into()))?;
                if t.n_points == 0 || t.repeats == 0 {
                    return Err(ConfigError::BadField {
                        field: "n_points/repeats",
                        reason: "must be positive".into(),
                    });
                }
                if !(0.0..=1.0).contains(&t.adam_fraction) {
                    return Err(ConfigError::BadField {
                        field: "adam_fraction",
                        reason: format!("{} outside [0,1]", t.adam_fraction),
                    });
                }
                if !(t.learning_rate > 0.0) {
                    return Err(ConfigError::BadField {
                        field: "learning_rate",
                        reason: "must be positive".into(),
                    });
                }
                if !(t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
                    return Err(ConfigError::BadField {
                        field: "lr_decay",
                        reason: format!("{} outside (0,1]", t.lr_decay),
                    });
                }
                let weights = LossWeights {
                    w_e: t.weights.w_e,
                    w_i: t.weights.w_i,
                    w_b: t.weights.w_b,
                };
                weights.validate().map_err(|e| ConfigError::BadField {
                    field: "weights",
                    reason: e.to_string(),
                })?;
                let node_policy = match t.node_policy.as_str() {
                    "fixed" => NodePolicy::Fixed,
                    "per_iteration" => NodePolicy::PerIteration(t.node_redraw_every.max(1)),
                    other => {
                        return Err(ConfigError::BadField {
                            field: "node_policy",
                            reason: format!("unknown policy '{other}'"),
                        })
                    }
                };
                let input = problem.spatial_dim() + usize::from(problem.is_time_fractional());
                let layers = if t.layers.is_empty() {
                    vec![input, 20, 20, 1]
                } else {
                    if t.layers.len() < 2 || t.layers[0] != input || *t.layers.last().unwrap() != 1
                    {
                        return Err(ConfigError::BadField {
                            field: "layers",
                            reason: format!(
                                "must start with input size {input} and end with 1, got {:?}",
                                t.layers
                            ),
                        });
                    }
                    t.layers.clone()
                };
                let n_initial = t
                    .n_initial
                    .unwrap_or(if problem.is_time_fractional() { 400 } else { 0 });
                if problem.is_time_fractional() && n_initial == 0 {
                    return Err(ConfigError::BadField {
                        field: "n_initial",
                        reason: "time-fractional problems need initial points".into(),
                    });
                }
                let train = TrainConfig {
                    iterations: t.iterations,
                    adam_fraction: t.adam_fraction,
                    learning_rate: t.learning_rate,
                    lr_decay: t.lr_decay,
                    normalize_residuals: t.normalize_residuals,
                    node_policy,
                    weights,
                    n_points: t.n_points,
                    repeats: t.repeats,
                    n_equation: t.n_equation,
                    n_initial,
                    n_boundary: t.n_boundary,
                    n_validation: t.n_validation,
                    layer_sizes: layers,
                    seed: t.seed,
                    workers: t.workers.max(1),
                };
                Ok(RunPlan::Train { problem, train })
            }
            "estimate" => {
                let e = self
                    .estimate
                    .as_ref()
                    .ok_or_else(|| ConfigError::MissingSection("estimate".into()))?;
                let function = EstimateFunction::parse(&e.function)?;
                let alpha = check_spatial_order("alpha", e.alpha)?;
                let side = parse_side(&e.side)?;
                if e.n_points == 0 || e.repeats == 0 || e.n_seeds == 0 {
                    return Err(ConfigError::BadField {
                        field: "n_points/repeats/n_seeds",
                        reason: "must be positive".into(),
                    });
                }
                Ok(RunPlan::Estimate(EstimatePlan {
                    function,
                    alpha,
                    side,
                    n_points: e.n_points,
                    repeats: e.repeats,
                    stream: parse_stream(&e.stream, e.seed)?,
                    seed: e.seed,
                    n_seeds: e.n_seeds,
                }))
            }
            other => Err(ConfigError::UnknownMode(other.into())),
        }
    }

    /// Overrides from the environment: FRACMC_SEED and FRACMC_WORKERS.
    pub fn apply_env_overrides(&mut self) -> Result<(), ConfigError> {
        if let Ok(seed) = std::env::var("FRACMC_SEED") {
            let seed: u64 = seed.parse().map_err(|_| ConfigError::BadField {
                field: "FRACMC_SEED",
                reason: format!("'{seed}' is not a nonnegative integer"),
            })?;
            if let Some(t) = self.training.as_mut() {
                t.seed = seed;
            }
            if let Some(e) = self.estimate.as_mut() {
                e.seed = seed;
            }
        }
        if let Ok(w) = std::env::var("FRACMC_WORKERS") {
            let w: usize = w.parse().map_err(|_| ConfigError::BadField {
                field: "FRACMC_WORKERS",
                reason: format!("'{w}' is not a positive integer"),
            })?;
            if let Some(t) = self.training.as_mut() {
                t.workers = w.max(1);
            }
        }
        Ok(())
    }
}
