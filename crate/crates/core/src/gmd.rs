//! Estimates of the distribution of the maximizer's location, their
//! entropy, and the entropy-regularized frequency fit built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::acquisition::ei;
use crate::data::Dataset;
use crate::direct::{self, SearchSpace};
use crate::error::{Error, Result};
use crate::gp::PosteriorKind;
use crate::quasi::{halton_points, mix_seed};
use crate::spectrum::{self, FrequencyOptions, SpectrumBasis, SpectrumGp};
use crate::surrogate::{sample_joint, Surrogate};

/// Floor applied to entropies before taking their logarithm.
pub const ENTROPY_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmdMethod {
    Thompson,
    Smc,
    EiProxy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmdEstimate {
    pub support: Vec<Vec<f64>>,
    pub pmf: Vec<f64>,
    /// Shannon entropy in nats.
    pub entropy: f64,
    pub method: GmdMethod,
    /// The estimator fell back to a uniform mass (e.g. EI vanished everywhere).
    #[serde(default)]
    pub degenerate: bool,
}

impl GmdEstimate {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.pmf.iter().enumerate() {
            if *p > self.pmf[best] {
                best = i;
            }
        }
        best
    }
}

/// `-Σ p log p` over the nonzero masses.
pub fn entropy(pmf: &[f64]) -> f64 {
    -pmf.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Bins per dimension used for histogram estimates; `None` above 3 dimensions.
pub fn bins_per_dim(dim: usize) -> Option<usize> {
    match dim {
        1 | 2 => Some(50),
        3 => Some(12),
        _ => None,
    }
}

/// Index of the histogram cell containing `x`.
pub fn cell_index(x: &[f64], lower: &[f64], upper: &[f64], bins: usize) -> usize {
    let mut idx = 0;
    for g in (0..x.len()).rev() {
        let u = (x[g] - lower[g]) / (upper[g] - lower[g]);
        let b = ((u * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
        idx = idx * bins + b;
    }
    idx
}

fn cell_centers(lower: &[f64], upper: &[f64], bins: usize) -> Vec<Vec<f64>> {
    let d = lower.len();
    let total = bins.pow(d as u32);
    (0..total)
        .map(|mut i| {
            (0..d)
                .map(|g| {
                    let b = i % bins;
                    i /= bins;
                    lower[g] + (b as f64 + 0.5) / bins as f64 * (upper[g] - lower[g])
                })
                .collect()
        })
        .collect()
}

/// Kozachenko–Leonenko nearest-neighbour estimate of differential entropy.
fn knn_entropy(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let d = points[0].len() as f64;
    let mut sum_log = 0.0;
    let mut used = 0usize;
    for (i, p) in points.iter().enumerate() {
        let nearest = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        if nearest > 0.0 {
            sum_log += nearest.ln();
            used += 1;
        }
    }
    if used == 0 {
        return f64::NEG_INFINITY;
    }
    let log_unit_ball = 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0);
    d * sum_log / used as f64 + log_unit_ball + digamma(n as f64) - digamma(1.0)
}

/// Histogram estimate from sampled maximizer locations. Up to three
/// dimensions the support is the grid of cell centres; above that the
/// samples themselves carry equal mass and the entropy is a nearest-neighbour
/// estimate converted to the scale of a 12-bins-per-dimension histogram.
pub fn histogram_estimate(samples: &[Vec<f64>], lower: &[f64], upper: &[f64], method: GmdMethod) -> GmdEstimate {
    let d = lower.len();
    if samples.is_empty() {
        return GmdEstimate {
            support: vec![],
            pmf: vec![],
            entropy: 0.0,
            method,
            degenerate: true,
        };
    }
    match bins_per_dim(d) {
        Some(bins) => {
            let mut counts = vec![0usize; bins.pow(d as u32)];
            for s in samples {
                counts[cell_index(s, lower, upper, bins)] += 1;
            }
            let n = samples.len() as f64;
            let pmf: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
            GmdEstimate {
                support: cell_centers(lower, upper, bins),
                entropy: entropy(&pmf),
                pmf,
                method,
                degenerate: false,
            }
        }
        None => {
            let unit: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| s.iter().enumerate().map(|(g, v)| (v - lower[g]) / (upper[g] - lower[g])).collect())
                .collect();
            let h = knn_entropy(&unit) + d as f64 * 12f64.ln();
            let n = samples.len();
            GmdEstimate {
                support: samples.to_vec(),
                pmf: vec![1.0 / n as f64; n],
                entropy: if h.is_finite() { h.max(0.0) } else { 0.0 },
                method,
                degenerate: false,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThompsonConfig {
    pub samples: usize,
    /// Evaluations granted to each sampled function's maximization.
    pub direct_budget: usize,
}

impl Default for ThompsonConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            direct_budget: 300,
        }
    }
}

/// Maximizer locations of `samples` functions drawn from a spectrum posterior.
pub fn thompson_argmaxes(post: &SpectrumGp, lower: &[f64], upper: &[f64], cfg: &ThompsonConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    let space = SearchSpace::new(lower.to_vec(), upper.to_vec()).with_budget(cfg.direct_budget);
    space.validate()?;
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, i as u64));
            let w = post.sample_weights(&mut rng);
            direct::maximize(|x| post.sample_value(&w, x), &space, mix_seed(seed, 2, i as u64)).map(|m| m.point)
        })
        .collect()
}

/// Thompson-sampling estimate for a spectrum posterior.
pub fn gmd_thompson(post: &SpectrumGp, lower: &[f64], upper: &[f64], cfg: &ThompsonConfig, seed: u64) -> Result<GmdEstimate> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let pts = thompson_argmaxes(post, lower, upper, cfg, seed)?;
    Ok(histogram_estimate(&pts, lower, upper, GmdMethod::Thompson))
}

/// Thompson-sampling estimate for any posterior by joint sampling on a
/// regular grid of `grid_per_dim` points per dimension (low dimensions only).
pub fn gmd_grid_thompson<S: Surrogate + ?Sized>(
    post: &S,
    lower: &[f64],
    upper: &[f64],
    grid_per_dim: usize,
    samples: usize,
    seed: u64,
) -> Result<GmdEstimate> {
    let pts = grid_argmaxes(post, lower, upper, grid_per_dim, samples, seed)?;
    Ok(histogram_estimate(&pts, lower, upper, GmdMethod::Thompson))
}

pub fn grid_argmaxes<S: Surrogate + ?Sized>(
    post: &S,
    lower: &[f64],
    upper: &[f64],
    grid_per_dim: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = lower.len();
    if grid_per_dim < 2 || d > 2 {
        return Err(Error::InvalidArgument("grid sampling needs >= 2 points per dimension and d <= 2".into()));
    }
    let grid: Vec<Vec<f64>> = (0..grid_per_dim.pow(d as u32))
        .map(|mut i| {
            (0..d)
                .map(|g| {
                    let k = i % grid_per_dim;
                    i /= grid_per_dim;
                    lower[g] + k as f64 / (grid_per_dim - 1) as f64 * (upper[g] - lower[g])
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = sample_joint(post, &grid, samples, &mut rng)?;
    Ok(draws.iter().map(|v| grid[v.argmax().0].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    pub particles: usize,
    pub challengers: usize,
    pub rounds: usize,
    /// Mixture weight of the kernel density proposal built on the particles.
    pub alpha: f64,
    /// Proposal standard deviation relative to the box width.
    pub bandwidth: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            challengers: 10,
            rounds: 10,
            alpha: 0.5,
            bandwidth: 0.1,
        }
    }
}

/// Importance weight of a challenger drawn from the mixture
/// `alpha * q + (1 - alpha) * v`, where `v` is the initial density and `q`
/// the kernel proposal density at the challenger.
pub fn challenger_weight(v: f64, q: f64, alpha: f64) -> f64 {
    v / (alpha * q + (1.0 - alpha) * v)
}

/// Low-variance resampling; returns the chosen indices.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..n {
        let u = (u0 + k as f64) / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub round: usize,
    pub seed: u64,
}

/// One challenge round for every particle followed by systematic resampling.
pub fn smc_round<S: Surrogate + ?Sized>(post: &S, set: &mut ParticleSet, lower: &[f64], upper: &[f64], cfg: &SmcConfig) -> Result<()> {
    let d = lower.len();
    let volume: f64 = lower.iter().zip(upper).map(|(l, u)| u - l).product();
    let v = 1.0 / volume;
    let stds: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| cfg.bandwidth * (u - l)).collect();
    let round = set.round as u64;
    let seed = set.seed;
    let centers = &set.particles;
    let total: f64 = set.weights.iter().sum();
    let cw: Vec<f64> = set.weights.iter().map(|w| w / total).collect();
    let norm: f64 = stds.iter().map(|s| s * (2.0 * std::f64::consts::PI).sqrt()).product();
    let density = |c: &[f64]| -> f64 {
        centers
            .iter()
            .zip(&cw)
            .map(|(x, w)| {
                let e: f64 = (0..d).map(|g| ((c[g] - x[g]) / stds[g]).powi(2)).sum();
                w * (-0.5 * e).exp()
            })
            .sum::<f64>()
            / norm
    };
    let moved: Vec<Result<(Vec<f64>, f64)>> = set
        .particles
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, round + 10, i as u64));
            let mut pts = vec![p.clone()];
            let mut ws = vec![1.0];
            for _ in 0..cfg.challengers {
                let c: Vec<f64> = if rng.random::<f64>() < cfg.alpha {
                    let u = rng.random::<f64>();
                    let mut acc = 0.0;
                    let mut j = cw.len() - 1;
                    for (k, w) in cw.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            j = k;
                            break;
                        }
                    }
                    let x = &centers[j];
                    (0..d)
                        .map(|g| (x[g] + Normal::new(0.0, stds[g]).unwrap().sample(&mut rng)).clamp(lower[g], upper[g]))
                        .collect()
                } else {
                    (0..d).map(|g| rng.random_range(lower[g]..=upper[g])).collect()
                };
                ws.push(challenger_weight(v, density(&c), cfg.alpha));
                pts.push(c);
            }
            let draw = sample_joint(post, &pts, 1, &mut rng)?.remove(0);
            let k = draw.argmax().0;
            Ok((pts.swap_remove(k), ws[k]))
        })
        .collect();
    let mut particles = Vec::with_capacity(moved.len());
    let mut weights = Vec::with_capacity(moved.len());
    for r in moved {
        let (p, w) = r?;
        particles.push(p);
        weights.push(w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, round + 10, u64::MAX));
    let idx = systematic_resample(&weights, rng.random::<f64>());
    let n = particles.len();
    set.particles = idx.iter().map(|&i| particles[i].clone()).collect();
    set.weights = vec![1.0 / n as f64; n];
    set.round += 1;
    Ok(())
}

/// Sequential Monte Carlo estimate: particles start uniform over the box and
/// are repeatedly challenged by proposals whose sampled values beat them.
pub fn gmd_smc<S: Surrogate + ?Sized>(post: &S, lower: &[f64], upper: &[f64], cfg: &SmcConfig, seed: u64) -> Result<GmdEstimate> {
    Ok(histogram_estimate(&smc_particles(post, lower, upper, cfg, seed)?.particles, lower, upper, GmdMethod::Smc))
}

pub fn smc_particles<S: Surrogate + ?Sized>(post: &S, lower: &[f64], upper: &[f64], cfg: &SmcConfig, seed: u64) -> Result<ParticleSet> {
    if cfg.particles == 0 || cfg.challengers == 0 || !(0.0..=1.0).contains(&cfg.alpha) || !(cfg.bandwidth > 0.0) {
        return Err(Error::InvalidArgument("invalid particle configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = (0..cfg.particles)
        .map(|_| lower.iter().zip(upper).map(|(l, u)| rng.random_range(*l..=*u)).collect())
        .collect();
    let mut set = ParticleSet {
        particles,
        weights: vec![1.0 / cfg.particles as f64; cfg.particles],
        round: 0,
        seed,
    };
    for _ in 0..cfg.rounds {
        smc_round(post, &mut set, lower, upper, cfg)?;
    }
    Ok(set)
}

/// Normalized expected improvement over `grid_size` Halton points.
pub fn gmd_ei_proxy<S: Surrogate + ?Sized>(post: &S, lower: &[f64], upper: &[f64], incumbent: f64, grid_size: usize) -> Result<GmdEstimate> {
    if grid_size == 0 {
        return Err(Error::InvalidArgument("grid must be nonempty".into()));
    }
    let d = lower.len();
    let grid: Vec<Vec<f64>> = halton_points(grid_size, d, None)
        .into_iter()
        .map(|u| u.iter().enumerate().map(|(g, v)| lower[g] + v * (upper[g] - lower[g])).collect())
        .collect();
    let scores: Vec<f64> = grid
        .iter()
        .map(|x| post.predict(x).map(|p| ei(p.mean, p.var, incumbent)))
        .collect::<Result<_>>()?;
    Ok(ei_pmf(grid, &scores))
}

/// Normalizes nonnegative scores into an estimate; all-zero scores give a
/// uniform mass flagged as degenerate.
pub fn ei_pmf(support: Vec<Vec<f64>>, scores: &[f64]) -> GmdEstimate {
    let total: f64 = scores.iter().sum();
    let n = scores.len();
    let (pmf, degenerate) = if total > 0.0 && total.is_finite() {
        (scores.iter().map(|s| s / total).collect::<Vec<_>>(), false)
    } else {
        (vec![1.0 / n as f64; n], true)
    };
    GmdEstimate {
        support,
        entropy: entropy(&pmf),
        pmf,
        method: GmdMethod::EiProxy,
        degenerate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RssgpConfig {
    /// Weight of the entropy regularizer.
    pub lambda: f64,
    /// Regularize with `λ·log H` (default) instead of `λ·H`.
    pub log_form: bool,
    pub gmd: GmdMethod,
    pub optimizer: FrequencyOptions,
    /// Perturbation size for the entropy gradient, relative to the RMS frequency.
    pub perturbation: f64,
    pub thompson: ThompsonConfig,
    pub smc: SmcConfig,
    pub ei_grid: usize,
}

impl Default for RssgpConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            log_form: true,
            gmd: GmdMethod::Thompson,
            optimizer: FrequencyOptions {
                steps: 30,
                learning_rate: 0.05,
            },
            perturbation: 0.05,
            thompson: ThompsonConfig::default(),
            smc: SmcConfig::default(),
            ei_grid: 1000,
        }
    }
}

impl RssgpConfig {
    /// The regularized objective given a log marginal likelihood and entropy.
    pub fn loss(&self, log_marginal: f64, entropy: f64) -> f64 {
        if self.lambda == 0.0 {
            log_marginal
        } else if self.log_form {
            log_marginal + self.lambda * entropy.max(ENTROPY_FLOOR).ln()
        } else {
            log_marginal + self.lambda * entropy
        }
    }

    fn regularizer(&self, entropy: f64) -> f64 {
        self.loss(0.0, entropy)
    }
}

/// Entropy of the maximizer distribution of the spectrum posterior fitted
/// with `basis`.
pub fn basis_entropy(basis: &SpectrumBasis, data: &Dataset, lower: &[f64], upper: &[f64], cfg: &RssgpConfig, seed: u64) -> Result<f64> {
    let post = spectrum::fit_ssgp(basis, data)?;
    let est = match cfg.gmd {
        GmdMethod::Thompson => gmd_thompson(&post, lower, upper, &cfg.thompson, seed)?,
        GmdMethod::Smc => gmd_smc(&post, lower, upper, &cfg.smc, seed)?,
        GmdMethod::EiProxy => {
            let best = data.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            gmd_ei_proxy(&post, lower, upper, best, cfg.ei_grid)?
        }
    };
    Ok(est.entropy)
}

#[derive(Debug)]
pub struct RssgpFit {
    pub posterior: SpectrumGp,
    pub loss: f64,
    pub entropy: Option<f64>,
    pub budget_exhausted: bool,
}

/// Fits frequencies to the log marginal likelihood plus the entropy
/// regularizer. The likelihood gradient is exact; the entropy gradient is a
/// simultaneous-perturbation estimate whose two evaluations share a seed.
pub fn fit_rssgp(basis0: &SpectrumBasis, data: &Dataset, lower: &[f64], upper: &[f64], cfg: &RssgpConfig, seed: u64) -> Result<RssgpFit> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidArgument("lambda must be >= 0".into()));
    }
    if cfg.lambda == 0.0 {
        let fit = spectrum::optimize_frequencies(basis0, data, &cfg.optimizer)?;
        return Ok(RssgpFit {
            posterior: spectrum::fit_ssgp(&fit.basis, data)?.relabel(PosteriorKind::Rssgp),
            loss: fit.log_marginal,
            entropy: None,
            budget_exhausted: fit.budget_exhausted,
        });
    }
    let scale = spectrum::frequency_scale(basis0);
    let c = cfg.perturbation * scale;
    let mut calls = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 3, 0));
    let (basis, loss, exhausted) = spectrum::ascend(basis0, &cfg.optimizer, |b| {
        calls += 1;
        let (lml, mut grad) = spectrum::log_marginal_with_grad(b, data)?;
        let crn = mix_seed(seed, 4, calls);
        let h = basis_entropy(b, data, lower, upper, cfg, crn)?;
        let delta: Vec<Vec<f64>> = b
            .frequencies
            .iter()
            .map(|s| s.iter().map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect();
        let shifted = |sign: f64| {
            let mut p = b.clone();
            for (s, dl) in p.frequencies.iter_mut().zip(&delta) {
                for (v, dv) in s.iter_mut().zip(dl) {
                    *v += sign * c * dv;
                }
            }
            p
        };
        let hp = basis_entropy(&shifted(1.0), data, lower, upper, cfg, crn)?;
        let hm = basis_entropy(&shifted(-1.0), data, lower, upper, cfg, crn)?;
        let slope = (cfg.regularizer(hp) - cfg.regularizer(hm)) / (2.0 * c);
        for (gr, dl) in grad.iter_mut().zip(&delta) {
            for (g, dv) in gr.iter_mut().zip(dl) {
                *g += slope * dv;
            }
        }
        Ok((cfg.loss(lml, h), grad))
    })?;
    let posterior = spectrum::fit_ssgp(&basis, data)?;
    let h = basis_entropy(&basis, data, lower, upper, cfg, mix_seed(seed, 5, 0))?;
    Ok(RssgpFit {
        posterior: posterior.relabel(PosteriorKind::Rssgp),
        loss,
        entropy: Some(h),
        budget_exhausted: exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp;
    use crate::kernel::KernelSpec;

    fn sinc(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        }
    }

    fn sinc_data(seed: u64, t: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..t).map(|_| vec![rng.random_range(-4.0..4.0)]).collect();
        let ys = xs.iter().map(|x| sinc(x[0])).collect();
        Dataset::new(xs, ys, 1e-4).unwrap()
    }

    #[test]
    fn point_mass_has_zero_entropy() {
        let pts = vec![vec![0.3]; 40];
        let e = histogram_estimate(&pts, &[0.0], &[1.0], GmdMethod::Thompson);
        assert_eq!(e.entropy, 0.0);
        assert!((e.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_histogram_entropy() {
        let pts: Vec<Vec<f64>> = (0..5000).map(|i| vec![(i as f64 + 0.5) / 5000.0]).collect();
        let e = histogram_estimate(&pts, &[0.0], &[1.0], GmdMethod::Thompson);
        assert!((e.entropy - 50f64.ln()).abs() < 0.05);
        assert!((e.entropy - entropy(&e.pmf)).abs() < 1e-12);
    }

    #[test]
    fn knn_entropy_of_uniform_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..2000).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let h = knn_entropy(&pts);
        assert!(h.abs() < 0.15, "{h}");
    }

    #[test]
    fn weight_limits() {
        assert_eq!(challenger_weight(0.25, 3.0, 0.0), 1.0);
        assert!((challenger_weight(0.25, 3.0, 1.0) - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn resampling_follows_weights() {
        let idx = systematic_resample(&[0.0, 3.0, 1.0, 0.0], 0.5);
        assert_eq!(idx, vec![1, 1, 1, 2]);
    }

    #[test]
    fn ei_proxy_flat_and_degenerate() {
        let grid: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let flat = ei_pmf(grid.clone(), &[2.0; 64]);
        assert!((flat.entropy - 64f64.ln()).abs() < 1e-12);
        let zero = ei_pmf(grid.clone(), &[0.0; 64]);
        assert!(zero.degenerate);
        let mut spike = vec![0.0; 64];
        spike[5] = 1.0;
        assert_eq!(ei_pmf(grid, &spike).entropy, 0.0);
    }

    #[test]
    fn regularized_loss_arithmetic() {
        let cfg = RssgpConfig::default();
        let loss = cfg.loss(-10.0, 50f64.ln());
        assert!((loss - 3.641).abs() < 1e-3, "{loss}");
        assert_eq!(cfg.loss(-10.0, 0.0), -10.0 + 10.0 * ENTROPY_FLOOR.ln());
        let plain = RssgpConfig { lambda: 0.0, ..cfg };
        assert_eq!(plain.loss(-10.0, 3.0), -10.0);
    }

    #[test]
    fn zero_lambda_equals_plain_frequency_fit() {
        let data = sinc_data(1, 15);
        let basis = spectrum::sample_frequencies_se(&KernelSpec::se(1, 0.5, 2.0), 10, 1e-4, 1).unwrap();
        let cfg = RssgpConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let r = fit_rssgp(&basis, &data, &[-4.0], &[4.0], &cfg, 0).unwrap();
        let f = spectrum::optimize_frequencies(&basis, &data, &cfg.optimizer).unwrap();
        assert_eq!(r.posterior.basis(), &f.basis);
        assert_eq!(r.posterior.kind(), PosteriorKind::Rssgp);
    }

    #[test]
    fn smc_is_seeded_and_resampled() {
        let data = sinc_data(2, 12);
        let post = gp::fit(&KernelSpec::se(1, 0.5, 1.0), &data).unwrap();
        let cfg = SmcConfig {
            particles: 30,
            rounds: 3,
            ..Default::default()
        };
        let a = smc_particles(&post, &[-4.0], &[4.0], &cfg, 7).unwrap();
        let b = smc_particles(&post, &[-4.0], &[4.0], &cfg, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|w| *w == 1.0 / 30.0));
        assert!(a.particles.iter().all(|p| (-4.0..=4.0).contains(&p[0])));
    }

    #[test]
    fn thompson_concentrates_near_the_peak() {
        let data = sinc_data(3, 30);
        let basis = spectrum::sample_frequencies_se(&KernelSpec::se(1, 0.5, 1.0), 60, 1e-4, 3).unwrap();
        let fit = spectrum::optimize_frequencies(&basis, &data, &FrequencyOptions::default()).unwrap();
        let post = spectrum::fit_ssgp(&fit.basis, &data).unwrap();
        let est = gmd_thompson(&post, &[-4.0], &[4.0], &ThompsonConfig { samples: 100, direct_budget: 200 }, 1).unwrap();
        let centre = &est.support[est.argmax()];
        assert!(centre[0].abs() < 0.5, "{centre:?}");
    }
}
