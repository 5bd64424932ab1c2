//! Derivative meta-model: a polynomial-kernel GP whose posterior-mean
//! gradients are injected into the main GP as synthetic derivative
//! observations, with the polynomial degree chosen by its posterior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GradientObs, DERIVATIVE_NOISE};
use crate::error::{Error, Result};
use crate::gp::{ExactGp, PosteriorKind};
use crate::gpd;
use crate::kernel::KernelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeChoice {
    /// Posterior mode of the degree.
    Estimated,
    Fixed(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub degree: DegreeChoice,
    /// Success probability of the truncated geometric degree prior.
    pub q: f64,
    pub max_degree: u32,
    /// Kernel offset σ0².
    pub offset: f64,
    pub inject_derivatives: bool,
    /// Noise variance attached to each estimated partial derivative.
    pub derivative_noise: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            degree: DegreeChoice::Estimated,
            q: 0.5,
            max_degree: 10,
            offset: 0.25,
            inject_derivatives: true,
            derivative_noise: DERIVATIVE_NOISE,
        }
    }
}

/// Polynomial-kernel GP on the function values of `data`.
pub fn fit_gppk(data: &Dataset, degree: u32, offset: f64) -> Result<ExactGp> {
    let spec = KernelSpec::polynomial(data.dim(), degree, offset);
    ExactGp::build(&spec, &data.values_only(), PosteriorKind::Gppk)
}

/// Gradient of the meta-model's posterior mean at each point.
pub fn estimate_derivatives(gppk: &ExactGp, at: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    at.iter().map(|x| gppk.mean_gradient(x)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreePosterior {
    pub support: Vec<u32>,
    pub log_prior: Vec<f64>,
    pub log_like: Vec<f64>,
    pub posterior: Vec<f64>,
    pub mode: u32,
}

/// Log of the geometric prior `(1-q)^(d-1) q` truncated to `1..=n_max`.
pub fn log_degree_prior(q: f64, n_max: u32) -> Vec<f64> {
    let norm = (1.0 - (1.0 - q).powi(n_max as i32)).ln();
    (1..=n_max)
        .map(|d| q.ln() + (d - 1) as f64 * (1.0 - q).ln() - norm)
        .collect()
}

impl DegreePosterior {
    /// Combines the truncated geometric prior with per-degree log likelihoods
    /// (`log_like[i]` belongs to degree `i + 1`; `-inf` excludes a degree).
    pub fn from_log_likelihoods(q: f64, log_like: Vec<f64>) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {q}")));
        }
        if log_like.is_empty() {
            return Err(Error::InvalidArgument("need at least one degree".into()));
        }
        let n_max = log_like.len() as u32;
        let log_prior = log_degree_prior(q, n_max);
        let joint: Vec<f64> = log_prior.iter().zip(&log_like).map(|(p, l)| p + l).collect();
        let top = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::InvalidArgument("every degree has zero likelihood".into()));
        }
        let weights: Vec<f64> = joint.iter().map(|j| (j - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let posterior: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut mode = 0;
        for (i, p) in posterior.iter().enumerate() {
            if *p > posterior[mode] {
                mode = i;
            }
        }
        Ok(Self {
            support: (1..=n_max).collect(),
            log_prior,
            log_like,
            posterior,
            mode: mode as u32 + 1,
        })
    }
}

/// Posterior over polynomial degrees `1..=n_max` given the function values.
/// Degrees whose fit fails are excluded.
pub fn degree_posterior(data: &Dataset, q: f64, n_max: u32, offset: f64) -> Result<DegreePosterior> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let fits: Vec<Result<f64>> = (1..=n_max)
        .into_par_iter()
        .map(|d| fit_gppk(data, d, offset).map(|gp| gp.log_marginal()))
        .collect();
    let mut last_err = None;
    let log_like = fits
        .into_iter()
        .map(|r| match r {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                log::debug!("degree excluded: {e}");
                last_err = Some(e);
                f64::NEG_INFINITY
            }
        })
        .collect::<Vec<_>>();
    if log_like.iter().all(|l| *l == f64::NEG_INFINITY) {
        return Err(last_err.unwrap_or_else(|| Error::InvalidArgument("every degree failed".into())));
    }
    DegreePosterior::from_log_likelihoods(q, log_like)
}

/// Result of building the main surrogate with meta-model derivatives.
#[derive(Debug)]
pub struct MetaFit {
    pub posterior: ExactGp,
    pub degree: Option<DegreePosterior>,
    pub used_degree: Option<u32>,
    /// Set when the meta-model failed and the plain GP was used instead.
    pub fell_back: bool,
}

/// Fits the meta-model, estimates derivatives at every observed input, and
/// conditions the main SE GP on the real values plus those derivatives.
/// Existing gradient observations in `data` are replaced.
pub fn meta_posterior(data: &Dataset, main: &KernelSpec, cfg: &MetaConfig) -> Result<MetaFit> {
    let values = data.values_only();
    if !cfg.inject_derivatives {
        return Ok(MetaFit {
            posterior: crate::gp::fit(main, &values)?,
            degree: None,
            used_degree: None,
            fell_back: false,
        });
    }
    match meta_gradients(&values, cfg) {
        Ok(est) => {
            let mut aug = values;
            aug.gradients = est.gradients;
            Ok(MetaFit {
                posterior: gpd::fit_gpd(main, &aug)?,
                degree: est.degree,
                used_degree: Some(est.used_degree),
                fell_back: false,
            })
        }
        Err(e) => {
            log::warn!("meta-model failed ({e}); using the plain GP");
            Ok(MetaFit {
                posterior: crate::gp::fit(main, &values)?,
                degree: None,
                used_degree: None,
                fell_back: true,
            })
        }
    }
}

/// Meta-model derivative estimates at every observed input.
#[derive(Clone, Debug)]
pub struct EstimatedGradients {
    pub gradients: Vec<GradientObs>,
    pub degree: Option<DegreePosterior>,
    pub used_degree: u32,
}

/// Chooses the degree, fits the polynomial-kernel GP on the function values
/// and returns its mean gradients at the observed inputs.
pub fn meta_gradients(data: &Dataset, cfg: &MetaConfig) -> Result<EstimatedGradients> {
    let values = data.values_only();
    let (degree, used) = match cfg.degree {
        DegreeChoice::Fixed(d) => (None, d),
        DegreeChoice::Estimated => {
            let p = degree_posterior(&values, cfg.q, cfg.max_degree, cfg.offset)?;
            let m = p.mode;
            (Some(p), m)
        }
    };
    let gppk = fit_gppk(&values, used, cfg.offset)?;
    let grads = estimate_derivatives(&gppk, &values.inputs)?;
    Ok(EstimatedGradients {
        gradients: values
            .inputs
            .iter()
            .zip(grads)
            .map(|(p, g)| GradientObs {
                point: p.clone(),
                gradient: g,
                noise_var: cfg.derivative_noise,
            })
            .collect(),
        degree,
        used_degree: used,
    })
}
