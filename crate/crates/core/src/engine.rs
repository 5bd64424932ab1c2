//! Ask/tell optimization campaigns with interchangeable surrogate strategies
//! and a versioned JSON document as their durable state.
//!
//! Models work on the unit cube in the maximization convention, with outputs
//! optionally standardized; the campaign converts at its boundary.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::acquisition::{AcquisitionKind, AcquisitionSpec};
use crate::bench::{Benchmark, Sense};
use crate::data::{Dataset, GradientObs, DERIVATIVE_NOISE};
use crate::direct::{self, SearchSpace};
use crate::error::{Error, Result};
use crate::fic::{self, InducingMode};
use crate::gmd::{self, GmdMethod, RssgpConfig};
use crate::gp::{self, HyperBounds, Prediction, Preset};
use crate::gpd;
use crate::kernel::KernelSpec;
use crate::meta::{self, MetaConfig};
use crate::quasi::{halton, mix_seed};
use crate::spectrum::{self, FrequencyOptions};
use crate::surrogate::{Posterior, Surrogate};

pub const SCHEMA_VERSION: u32 = 1;

/// Observations closer than this (unit-cube distance) count as duplicates.
const DUPLICATE_RADIUS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Exact GP on function values.
    #[serde(alias = "standard")]
    StandardBo,
    /// Exact GP on values and observed gradients.
    Botd,
    /// Exact GP on values and meta-model derivative estimates.
    Bodmm,
    /// Sparse GP with derivatives on a subset of inducing inputs.
    Bosgpd,
    /// Sparse-spectrum GP with likelihood-optimized frequencies.
    #[serde(alias = "ssgp")]
    SsgpBo,
    /// Sparse-spectrum GP with entropy-regularized frequencies.
    #[serde(alias = "rssgp")]
    RssgpBo,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::StandardBo,
        Strategy::Botd,
        Strategy::Bodmm,
        Strategy::Bosgpd,
        Strategy::SsgpBo,
        Strategy::RssgpBo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::StandardBo => "standard",
            Strategy::Botd => "botd",
            Strategy::Bodmm => "bodmm",
            Strategy::Bosgpd => "bosgpd",
            Strategy::SsgpBo => "ssgp",
            Strategy::RssgpBo => "rssgp",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase().replace('-', "_");
        let key = key.strip_suffix("_bo").unwrap_or(&key);
        Self::ALL
            .into_iter()
            .find(|s| s.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{name}`")))
    }

    pub fn default_preset(self) -> Preset {
        match self {
            Strategy::StandardBo | Strategy::Botd | Strategy::Bodmm => Preset::MetaModel,
            Strategy::Bosgpd => Preset::SparseDerivative,
            Strategy::SsgpBo | Strategy::RssgpBo => Preset::Spectrum,
        }
    }

    /// Whether told gradients reach the model.
    pub fn consumes_gradients(self, cfg: &ModelConfig) -> bool {
        match self {
            Strategy::Botd => true,
            Strategy::Bosgpd => cfg.derivative_source == DerivativeSource::Observed,
            _ => false,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the sparse strategy takes its derivative observations from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Observed,
    Estimated,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Kernel hyperparameter preset; the strategy's default when absent.
    pub preset: Option<Preset>,
    pub lengthscale: Option<f64>,
    pub signal_variance: Option<f64>,
    /// Noise variance on model outputs, added to every observation.
    pub noise_var: f64,
    /// Center and scale outputs before fitting; otherwise the zero-mean
    /// prior sees raw (sign-adjusted) values.
    pub standardize: bool,
    pub fit_hyperparams: bool,
    pub hyper: HyperBounds,
    pub acquisition: AcquisitionSpec,
    /// Size of the quasi-random initial design; dimension + 1 when absent.
    pub n_init: Option<usize>,
    pub direct_budget: usize,
    pub meta: MetaConfig,
    /// Noise variance attached to told gradients.
    pub derivative_noise: f64,
    pub derivative_source: DerivativeSource,
    /// Inducing inputs as a fraction of the observations.
    pub inducing_fraction: f64,
    pub inducing_mode: InducingMode,
    pub inducing_budget: usize,
    pub frequencies: usize,
    pub frequency_fit: FrequencyOptions,
    pub rssgp: RssgpConfig,
    /// Known optimum of the objective, enabling regret traces.
    pub reference_optimum: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            preset: None,
            lengthscale: None,
            signal_variance: None,
            noise_var: 1e-4,
            standardize: true,
            fit_hyperparams: false,
            hyper: HyperBounds::default(),
            acquisition: AcquisitionSpec::default(),
            n_init: None,
            direct_budget: 2000,
            meta: MetaConfig::default(),
            derivative_noise: DERIVATIVE_NOISE,
            derivative_source: DerivativeSource::Estimated,
            inducing_fraction: 1.0,
            inducing_mode: InducingMode::Optimized,
            inducing_budget: 200,
            frequencies: 20,
            frequency_fit: FrequencyOptions::default(),
            rssgp: RssgpConfig {
                gmd: GmdMethod::EiProxy,
                ..RssgpConfig::default()
            },
            reference_optimum: None,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.noise_var) || !positive(self.derivative_noise) {
            return Err(Error::InvalidArgument("noise variances must be positive".into()));
        }
        if self.lengthscale.is_some_and(|v| !positive(v)) || self.signal_variance.is_some_and(|v| !positive(v)) {
            return Err(Error::InvalidArgument("kernel hyperparameters must be positive".into()));
        }
        if !(self.inducing_fraction > 0.0 && self.inducing_fraction <= 1.0) {
            return Err(Error::InvalidArgument("inducing_fraction must lie in (0, 1]".into()));
        }
        if self.frequencies == 0 {
            return Err(Error::InvalidArgument("frequencies must be positive".into()));
        }
        if !(self.rssgp.lambda >= 0.0) {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<Vec<f64>>,
    /// Extra noise variance in objective units.
    #[serde(default)]
    pub noise_var: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionState {
    Pending,
    Observed,
    Skipped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Model,
    /// The model could not be fitted; a random point was suggested.
    Fallback,
    /// An observation told without a preceding suggestion.
    OutOfBand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub point: Vec<f64>,
    pub state: SuggestionState,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default)]
    pub timestamp_ms: u64,
}

/// A suggestion before it is committed to the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub origin: Origin,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TellRequest {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(default)]
    pub grad: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_var: f64,
    /// Record an observation that was not suggested.
    #[serde(default)]
    pub out_of_band: bool,
    #[serde(default)]
    pub allow_out_of_bounds: bool,
}

impl TellRequest {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self {
            x,
            y,
            grad: None,
            noise_var: 0.0,
            out_of_band: false,
            allow_out_of_bounds: false,
        }
    }

    pub fn with_gradient(mut self, grad: Vec<f64>) -> Self {
        self.grad = Some(grad);
        self
    }
}

/// Everything needed to start a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub bounds: Vec<[f64; 2]>,
    #[serde(default = "default_sense")]
    pub sense: Sense,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub model_config: ModelConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_sense() -> Sense {
    Sense::Maximize
}

fn default_strategy() -> Strategy {
    Strategy::StandardBo
}

impl CampaignConfig {
    pub fn new(bounds: Vec<[f64; 2]>, sense: Sense, strategy: Strategy, seed: u64) -> Self {
        Self {
            id: None,
            bounds,
            sense,
            strategy,
            model_config: ModelConfig::default(),
            seed,
        }
    }

    pub fn for_benchmark(bench: &Benchmark, strategy: Strategy, model_config: ModelConfig, seed: u64) -> Self {
        let mut model_config = model_config;
        model_config.reference_optimum = Some(bench.optimum_value);
        Self {
            id: Some(format!("{}-{}-{}", bench.name(), strategy, seed)),
            bounds: bench.lower.iter().zip(&bench.upper).map(|(l, u)| [*l, *u]).collect(),
            sense: bench.sense,
            strategy,
            model_config,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignStatus {
    pub id: String,
    pub strategy: Strategy,
    pub sense: Sense,
    pub dim: usize,
    pub observations: usize,
    pub pending: Option<Vec<f64>>,
    pub incumbent: Option<Incumbent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub schema_version: u32,
    pub id: String,
    pub bounds: Vec<[f64; 2]>,
    pub sense: Sense,
    pub strategy: Strategy,
    pub model_config: ModelConfig,
    pub seed: u64,
    pub observations: Vec<Observation>,
    pub log: Vec<SuggestionRecord>,
    /// Fields written by newer versions, kept for the round trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self> {
        if config.bounds.is_empty() {
            return Err(Error::InvalidArgument("bounds must be nonempty".into()));
        }
        for [l, u] in &config.bounds {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidArgument(format!("invalid bound [{l}, {u}]")));
            }
        }
        config.model_config.validate()?;
        let id = config
            .id
            .unwrap_or_else(|| format!("{:016x}", mix_seed(config.seed, now_ms(), config.bounds.len() as u64)));
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::InvalidArgument("id may contain only letters, digits, '-' and '_'".into()));
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            id,
            bounds: config.bounds,
            sense: config.sense,
            strategy: config.strategy,
            model_config: config.model_config,
            seed: config.seed,
            observations: Vec::new(),
            log: Vec::new(),
            extra: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b[0]).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b[1]).collect()
    }

    pub fn n_init(&self) -> usize {
        self.model_config.n_init.unwrap_or(self.dim() + 1)
    }

    pub fn pending(&self) -> Option<&SuggestionRecord> {
        self.log.last().filter(|r| r.state == SuggestionState::Pending)
    }

    pub fn incumbent(&self) -> Option<Incumbent> {
        let mut best: Option<&Observation> = None;
        for o in &self.observations {
            if best.is_none_or(|b| self.sense.better(o.y, b.y)) {
                best = Some(o);
            }
        }
        best.map(|o| Incumbent { x: o.x.clone(), y: o.y })
    }

    pub fn status(&self) -> CampaignStatus {
        CampaignStatus {
            id: self.id.clone(),
            strategy: self.strategy,
            sense: self.sense,
            dim: self.dim(),
            observations: self.observations.len(),
            pending: self.pending().map(|r| r.point.clone()),
            incumbent: self.incumbent(),
        }
    }

    /// Best value observed after each observation.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best: Option<f64> = None;
        self.observations
            .iter()
            .map(|o| {
                let b = match best {
                    Some(b) if !self.sense.better(o.y, b) => b,
                    _ => o.y,
                };
                best = Some(b);
                b
            })
            .collect()
    }

    /// Simple regret after each observation, when the optimum is known.
    pub fn regret_trace(&self) -> Option<Vec<f64>> {
        let opt = self.model_config.reference_optimum?;
        Some(
            self.incumbent_trace()
                .into_iter()
                .map(|b| (self.sense.to_max(opt) - self.sense.to_max(b)).max(0.0))
                .collect(),
        )
    }

    fn transform(&self) -> Transform {
        let ys: Vec<f64> = self.observations.iter().map(|o| self.sense.to_max(o.y)).collect();
        let n = ys.len();
        let raw = !self.model_config.standardize;
        let mean = if raw {
            0.0
        } else if n > 0 { ys.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let var = if n > 1 {
            ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let scale = if !raw && var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Transform {
            lower: self.lower(),
            upper: self.upper(),
            sense: self.sense,
            mean,
            scale,
        }
    }

    fn kernel(&self) -> KernelSpec {
        let preset = self.model_config.preset.unwrap_or_else(|| self.strategy.default_preset());
        KernelSpec::se(
            self.dim(),
            self.model_config.lengthscale.unwrap_or(preset.lengthscale()),
            self.model_config.signal_variance.unwrap_or(preset.signal_variance()),
        )
    }

    /// Model-space dataset: unit-cube inputs, standardized maximization targets.
    fn model_data(&self, tr: &Transform) -> Result<Dataset> {
        let cfg = &self.model_config;
        let mut data = Dataset::with_noise(
            self.observations.iter().map(|o| tr.to_unit(&o.x)).collect(),
            self.observations.iter().map(|o| tr.target(o.y)).collect(),
            self.observations
                .iter()
                .map(|o| cfg.noise_var + o.noise_var / (tr.scale * tr.scale))
                .collect(),
        )?;
        if self.strategy.consumes_gradients(cfg) {
            for (i, o) in self.observations.iter().enumerate() {
                if let Some(g) = &o.grad {
                    data.gradients.push(GradientObs {
                        point: data.inputs[i].clone(),
                        gradient: tr.gradient(g),
                        noise_var: cfg.derivative_noise,
                    });
                }
            }
        }
        Ok(data)
    }

    fn ask_seed(&self) -> u64 {
        mix_seed(self.seed, 2, self.log.len() as u64)
    }

    /// Fits the strategy's surrogate on the current observations.
    pub fn fit(&self) -> Result<Fitted> {
        if self.observations.is_empty() {
            return Err(Error::InvalidArgument("no observations to fit".into()));
        }
        let tr = self.transform();
        let data = self.model_data(&tr)?;
        let cfg = &self.model_config;
        let seed = self.ask_seed();
        let mut spec = self.kernel();
        let mut notes = Vec::new();
        if cfg.fit_hyperparams {
            spec = gp::fit_hyperparams(&spec, &data.values_only(), &cfg.hyper)?.spec;
        }
        let posterior = match self.strategy {
            Strategy::StandardBo => Posterior::Exact(gp::fit(&spec, &data.values_only())?),
            Strategy::Botd => Posterior::Exact(gpd::fit_gpd(&spec, &data)?),
            Strategy::Bodmm => {
                let fit = meta::meta_posterior(&data, &spec, &cfg.meta)?;
                if fit.fell_back {
                    notes.push("meta_model_fallback".to_string());
                }
                Posterior::Exact(fit.posterior)
            }
            Strategy::Bosgpd => {
                let mut d = data.clone();
                if cfg.derivative_source == DerivativeSource::Estimated {
                    d.gradients = match meta::meta_gradients(&data, &cfg.meta) {
                        Ok(est) => est.gradients,
                        Err(e) => {
                            log::warn!("derivative estimation failed ({e}); continuing without derivatives");
                            notes.push("meta_model_fallback".to_string());
                            Vec::new()
                        }
                    };
                } else if cfg.derivative_source == DerivativeSource::None {
                    d.gradients.clear();
                }
                let t = d.len();
                let m = ((cfg.inducing_fraction * t as f64).ceil() as usize).clamp(1, t);
                if m == t && d.gradients.is_empty() {
                    // the sparse model with every input inducing is the exact GP
                    Posterior::Exact(gp::fit(&spec, &d)?)
                } else {
                    let mode = if m == t { InducingMode::AllTrainingInputs } else { cfg.inducing_mode };
                    let inducing = fic::select_inducing(&spec, &d, m, mode, cfg.inducing_budget, seed)?;
                    Posterior::Sparse(fic::fit_sgpd(&spec, &d, &inducing)?)
                }
            }
            Strategy::SsgpBo | Strategy::RssgpBo => {
                let values = data.values_only();
                let basis = spectrum::sample_frequencies_se(&spec, cfg.frequencies, cfg.noise_var, seed)?;
                if self.strategy == Strategy::SsgpBo {
                    let fit = spectrum::optimize_frequencies(&basis, &values, &cfg.frequency_fit)?;
                    Posterior::Spectrum(spectrum::fit_ssgp(&fit.basis, &values)?)
                } else {
                    let unit = vec![0.0; self.dim()];
                    let ones = vec![1.0; self.dim()];
                    let fit = gmd::fit_rssgp(&basis, &values, &unit, &ones, &cfg.rssgp, mix_seed(seed, 3, 0))?;
                    Posterior::Spectrum(fit.posterior)
                }
            }
        };
        let incumbent = data.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Fitted {
            posterior,
            spec,
            data,
            transform: tr,
            acquisition: cfg.acquisition.clone(),
            incumbent,
            notes,
        })
    }

    fn initial_point(&self) -> Vec<f64> {
        let d = self.dim();
        let k = self.log.iter().filter(|r| r.origin == Origin::Initial).count() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 1, 0));
        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let u: Vec<f64> = halton(k + 1, d).iter().zip(&shift).map(|(h, s)| (h + s).fract()).collect();
        self.transform().from_unit(&u)
    }

    /// Computes the next suggestion without changing the campaign.
    pub fn propose(&self) -> Result<Proposal> {
        if self.pending().is_some() {
            return Err(Error::PendingSuggestionExists);
        }
        if self.observations.len() < self.n_init() {
            return Ok(Proposal {
                point: self.initial_point(),
                origin: Origin::Initial,
                flags: Vec::new(),
            });
        }
        let seed = self.ask_seed();
        let tr = self.transform();
        let outcome = self.fit().and_then(|fitted| {
            let best = fitted.maximize_acquisition(self.model_config.direct_budget, mix_seed(seed, 4, 0))?;
            Ok((fitted, best))
        });
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 5, 0));
        match outcome {
            Ok((fitted, best)) => {
                let mut flags = fitted.notes;
                let mut u = best.point;
                let existing: Vec<Vec<f64>> = self.observations.iter().map(|o| tr.to_unit(&o.x)).collect();
                let near = existing
                    .iter()
                    .any(|e| e.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < DUPLICATE_RADIUS);
                if near {
                    let w = best.cell_width.max(1e-6);
                    for v in u.iter_mut() {
                        let step = if rng.random::<bool>() { w } else { -w };
                        *v = if (0.0..=1.0).contains(&(*v + step)) { *v + step } else { *v - step };
                    }
                    flags.push("duplicate_perturbed".to_string());
                }
                Ok(Proposal {
                    point: tr.from_unit(&u),
                    origin: Origin::Model,
                    flags,
                })
            }
            Err(e) => {
                log::warn!("campaign {}: model fit failed ({e}); suggesting a random point", self.id);
                let u: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
                Ok(Proposal {
                    point: tr.from_unit(&u),
                    origin: Origin::Fallback,
                    flags: vec![format!("model_failure: {e}")],
                })
            }
        }
    }

    /// Commits a proposal computed by [`Campaign::propose`] on this same state.
    pub fn commit(&mut self, proposal: Proposal) -> Result<Vec<f64>> {
        if self.pending().is_some() {
            return Err(Error::PendingSuggestionExists);
        }
        self.log.push(SuggestionRecord {
            point: proposal.point.clone(),
            state: SuggestionState::Pending,
            origin: proposal.origin,
            flags: proposal.flags,
            timestamp_ms: now_ms(),
        });
        Ok(proposal.point)
    }

    pub fn ask(&mut self) -> Result<Proposal> {
        let p = self.propose()?;
        self.commit(p.clone())?;
        Ok(p)
    }

    pub fn tell(&mut self, req: TellRequest) -> Result<()> {
        let d = self.dim();
        if req.x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: req.x.len() });
        }
        if !req.y.is_finite() {
            return Err(Error::NonFiniteValue(req.y));
        }
        if let Some(g) = &req.grad {
            if g.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: g.len() });
            }
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue(*bad));
            }
        }
        if !(req.noise_var >= 0.0 && req.noise_var.is_finite()) {
            return Err(Error::InvalidArgument("noise_var must be finite and >= 0".into()));
        }
        let x = if req.out_of_band {
            let inside = req.x.iter().zip(&self.bounds).all(|(v, [l, u])| v >= l && v <= u);
            if !inside && !req.allow_out_of_bounds {
                return Err(Error::OutOfBounds);
            }
            if req.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("point must be finite".into()));
            }
            // an out-of-band observation goes before any pending suggestion
            let at = if self.pending().is_some() { self.log.len() - 1 } else { self.log.len() };
            self.log.insert(
                at,
                SuggestionRecord {
                    point: req.x.clone(),
                    state: SuggestionState::Observed,
                    origin: Origin::OutOfBand,
                    flags: Vec::new(),
                    timestamp_ms: now_ms(),
                },
            );
            req.x
        } else {
            let pending = self.pending().ok_or(Error::NoPendingSuggestion)?;
            let matches = pending
                .point
                .iter()
                .zip(&req.x)
                .zip(&self.bounds)
                .all(|((p, v), [l, u])| (p - v).abs() <= 1e-9 * (u - l));
            if !matches {
                return Err(Error::PointMismatch);
            }
            let point = pending.point.clone();
            self.log.last_mut().unwrap().state = SuggestionState::Observed;
            point
        };
        self.observations.push(Observation {
            x,
            y: req.y,
            grad: req.grad,
            noise_var: req.noise_var,
        });
        Ok(())
    }

    /// Abandons the pending suggestion.
    pub fn skip(&mut self) -> Result<()> {
        if self.pending().is_none() {
            return Err(Error::NoPendingSuggestion);
        }
        self.log.last_mut().unwrap().state = SuggestionState::Skipped;
        Ok(())
    }

    pub fn save(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("missing schema_version".into()))?;
        if version != SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: version as u32,
                expected: SCHEMA_VERSION,
            });
        }
        let c: Campaign = serde_json::from_value(value)?;
        if !c.extra.is_empty() {
            let keys: Vec<&str> = c.extra.keys().map(String::as_str).collect();
            log::warn!("campaign {}: preserving unknown fields {keys:?}", c.id);
        }
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.bounds.iter().any(|[l, u]| !(l < u)) {
            return Err(Error::Parse("invalid bounds".into()));
        }
        self.model_config.validate()?;
        let pending = self.log.iter().filter(|r| r.state == SuggestionState::Pending).count();
        if pending > 1 || (pending == 1 && self.pending().is_none()) {
            return Err(Error::Parse("only the last suggestion may be pending".into()));
        }
        let observed = self.log.iter().filter(|r| r.state == SuggestionState::Observed).count();
        if observed != self.observations.len() {
            return Err(Error::Parse("observations do not match the suggestion log".into()));
        }
        if self.observations.iter().any(|o| o.x.len() != d || !o.y.is_finite()) || self.log.iter().any(|r| r.point.len() != d) {
            return Err(Error::Parse("malformed observation".into()));
        }
        Ok(())
    }

    /// Rebuilds the campaign from its configuration by re-running every
    /// logged step; fails if any suggestion differs from the log.
    pub fn replay(&self) -> Result<Campaign> {
        let mut c = Campaign {
            observations: Vec::new(),
            log: Vec::new(),
            ..self.clone()
        };
        let mut obs = self.observations.iter();
        for rec in &self.log {
            if rec.origin == Origin::OutOfBand {
                let o = obs.next().ok_or_else(|| Error::Parse("log longer than observations".into()))?;
                c.tell(TellRequest {
                    x: o.x.clone(),
                    y: o.y,
                    grad: o.grad.clone(),
                    noise_var: o.noise_var,
                    out_of_band: true,
                    allow_out_of_bounds: true,
                })?;
                c.log.last_mut().unwrap().timestamp_ms = rec.timestamp_ms;
                continue;
            }
            let p = c.ask()?;
            if p.point != rec.point {
                return Err(Error::Parse(format!("replay diverged at suggestion {}", c.log.len() - 1)));
            }
            c.log.last_mut().unwrap().timestamp_ms = rec.timestamp_ms;
            match rec.state {
                SuggestionState::Pending => {}
                SuggestionState::Skipped => c.skip()?,
                SuggestionState::Observed => {
                    let o = obs.next().ok_or_else(|| Error::Parse("log longer than observations".into()))?;
                    c.tell(TellRequest {
                        x: o.x.clone(),
                        y: o.y,
                        grad: o.grad.clone(),
                        noise_var: o.noise_var,
                        out_of_band: false,
                        allow_out_of_bounds: false,
                    })?;
                }
            }
        }
        Ok(c)
    }
}

/// Maps between objective space and model space.
#[derive(Clone, Debug, PartialEq)]
pub struct Transform {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sense: Sense,
    pub mean: f64,
    pub scale: f64,
}

impl Transform {
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(g, v)| (v - self.lower[g]) / (self.upper[g] - self.lower[g]))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(g, v)| (self.lower[g] + v * (self.upper[g] - self.lower[g])).clamp(self.lower[g], self.upper[g]))
            .collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        (self.sense.to_max(y) - self.mean) / self.scale
    }

    pub fn gradient(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(j, v)| self.sense.to_max(*v) * (self.upper[j] - self.lower[j]) / self.scale)
            .collect()
    }

    /// Converts a model-space prediction back to objective units.
    pub fn prediction(&self, p: Prediction) -> Prediction {
        Prediction {
            mean: self.sense.to_max(p.mean * self.scale + self.mean),
            var: p.var * self.scale * self.scale,
        }
    }
}

/// A fitted surrogate together with the transform it was fitted under.
#[derive(Debug)]
pub struct Fitted {
    pub posterior: Posterior,
    pub spec: KernelSpec,
    pub data: Dataset,
    pub transform: Transform,
    pub acquisition: AcquisitionSpec,
    /// Best standardized target.
    pub incumbent: f64,
    pub notes: Vec<String>,
}

impl Fitted {
    /// Prediction at `x` in objective units.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.posterior.predict(&self.transform.to_unit(x))?;
        Ok(self.transform.prediction(p))
    }

    /// Acquisition value at a unit-cube point.
    pub fn acquisition_unit(&self, u: &[f64]) -> Result<f64> {
        let p = self.posterior.predict(u)?;
        Ok(self.acquisition.score(p, self.incumbent, self.data.len()))
    }

    /// Acquisition value at `x` in objective coordinates.
    pub fn acquisition_at(&self, x: &[f64]) -> Result<f64> {
        self.acquisition_unit(&self.transform.to_unit(x))
    }

    /// Maximizes the acquisition over the unit cube.
    pub fn maximize_acquisition(&self, budget: usize, seed: u64) -> Result<direct::Maximum> {
        let space = SearchSpace::unit(self.transform.lower.len()).with_budget(budget);
        if self.acquisition.kind == AcquisitionKind::Thompson {
            return self.thompson(&space, seed);
        }
        direct::maximize(|u| self.acquisition_unit(u).unwrap_or(f64::NEG_INFINITY), &space, seed)
    }

    /// Maximizes one posterior sample. Exact and sparse posteriors are
    /// sampled through a random-feature approximation of their kernel.
    fn thompson(&self, space: &SearchSpace, seed: u64) -> Result<direct::Maximum> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 6, 0));
        let approx;
        let post = match &self.posterior {
            Posterior::Spectrum(p) => p,
            _ => {
                let noise = self.data.noise_vars.iter().cloned().fold(f64::INFINITY, f64::min);
                let basis = spectrum::sample_frequencies_se(&self.spec, self.acquisition.thompson_features, noise, mix_seed(seed, 7, 0))?;
                approx = spectrum::fit_ssgp(&basis, &self.data.values_only())?;
                &approx
            }
        };
        let w = post.sample_weights(&mut rng);
        direct::maximize(|u| post.sample_value(&w, u), space, seed)
    }
}
