//! Sparse-spectrum GP: a Bayesian linear model on paired trigonometric
//! features whose frequencies can be fitted to the data.
//!
//! The posterior is kept in precision form, `P = Φ N⁻¹ Φᵀ + (m/σf²) I`, so
//! per-observation noise variances are supported.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{Prediction, PosteriorKind};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBasis {
    /// `m` frequency vectors, in cycles per input unit.
    pub frequencies: Vec<Vec<f64>>,
    pub signal_variance: f64,
    pub noise_var: f64,
}

impl SpectrumBasis {
    pub fn m(&self) -> usize {
        self.frequencies.len()
    }

    pub fn dim(&self) -> usize {
        self.frequencies.first().map_or(0, |s| s.len())
    }

    /// `[cos(2π s_r·x)]_r` followed by `[sin(2π s_r·x)]_r`.
    pub fn features(&self, x: &[f64]) -> DVector<f64> {
        let m = self.m();
        let mut phi = DVector::zeros(2 * m);
        for (r, s) in self.frequencies.iter().enumerate() {
            let arg = 2.0 * PI * s.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let (sin, cos) = arg.sin_cos();
            phi[r] = cos;
            phi[m + r] = sin;
        }
        phi
    }

    /// Feature matrix with one column per point.
    pub fn feature_matrix(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(2 * self.m(), xs.len());
        for (c, x) in xs.iter().enumerate() {
            out.set_column(c, &self.features(x));
        }
        out
    }

    /// Kernel implied by the basis: `σf²/m Σ_r cos(2π s_r·(x − x'))`.
    pub fn implied_kernel(&self, x: &[f64], x2: &[f64]) -> f64 {
        let m = self.m() as f64;
        self.signal_variance / m
            * self
                .frequencies
                .iter()
                .map(|s| (2.0 * PI * s.iter().zip(x.iter().zip(x2)).map(|(a, (u, v))| a * (u - v)).sum::<f64>()).cos())
                .sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::InvalidArgument("basis needs at least one frequency".into()));
        }
        let d = self.dim();
        if let Some(s) = self.frequencies.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        if !(self.signal_variance > 0.0) || !(self.noise_var >= 0.0) {
            return Err(Error::InvalidArgument("basis variances must be positive".into()));
        }
        Ok(())
    }
}

/// Draws `m` frequencies from the spectral density of an SE kernel: a
/// Gaussian with standard deviation `1/(2πρ_g)` per dimension.
pub fn sample_frequencies_se(spec: &KernelSpec, m: usize, noise_var: f64, seed: u64) -> Result<SpectrumBasis> {
    if spec.family != KernelFamily::SquaredExponential {
        return Err(Error::UnsupportedKernel(spec.family));
    }
    spec.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one frequency".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<Normal<f64>> = spec
        .lengthscales
        .iter()
        .map(|l| Normal::new(0.0, if l.is_infinite() { 0.0 } else { 1.0 / (2.0 * PI * l) }).unwrap())
        .collect();
    let frequencies = (0..m).map(|_| dists.iter().map(|n| n.sample(&mut rng)).collect()).collect();
    Ok(SpectrumBasis {
        frequencies,
        signal_variance: spec.signal_variance,
        noise_var,
    })
}

pub struct SpectrumGp {
    kind: PosteriorKind,
    basis: SpectrumBasis,
    chol: Cholesky<f64, Dyn>,
    weights_mean: DVector<f64>,
    log_marginal: f64,
}

impl std::fmt::Debug for SpectrumGp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumGp")
            .field("kind", &self.kind)
            .field("m", &self.basis.m())
            .field("log_marginal", &self.log_marginal)
            .finish()
    }
}

struct Fitted {
    phi: DMatrix<f64>,
    inv_noise: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    a: DVector<f64>,
    log_marginal: f64,
}

fn fit_parts(basis: &SpectrumBasis, data: &Dataset) -> Result<Fitted> {
    basis.validate()?;
    data.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("need at least one observation".into()));
    }
    if data.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: data.dim() });
    }
    if data.noise_vars.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidArgument("spectrum models need strictly positive noise".into()));
    }
    let m = basis.m();
    let t = data.len();
    let c = basis.signal_variance / m as f64;
    let phi = basis.feature_matrix(&data.inputs);
    let inv_noise = DVector::from_iterator(t, data.noise_vars.iter().map(|n| 1.0 / n));
    let y = DVector::from_column_slice(&data.values);

    let mut scaled = phi.clone();
    for (col, w) in inv_noise.iter().enumerate() {
        scaled.column_mut(col).scale_mut(w.sqrt());
    }
    let mut p = &scaled * scaled.transpose();
    for i in 0..2 * m {
        p[(i, i)] += 1.0 / c;
    }
    let chol = linalg::cholesky(p, 0.0, "sparse-spectrum precision")?;
    let ny = y.component_mul(&inv_noise);
    let b = &phi * &ny;
    let a = chol.solve(&b);

    let quad = y.dot(&ny) - b.dot(&a);
    let log_det = data.noise_vars.iter().map(|n| n.ln()).sum::<f64>()
        + linalg::log_det(&chol)
        + 2.0 * m as f64 * c.ln();
    let log_marginal = -0.5 * quad - 0.5 * log_det - 0.5 * t as f64 * (2.0 * PI).ln();
    Ok(Fitted {
        phi,
        inv_noise,
        chol,
        a,
        log_marginal,
    })
}

pub fn fit_ssgp(basis: &SpectrumBasis, data: &Dataset) -> Result<SpectrumGp> {
    let f = fit_parts(basis, data)?;
    Ok(SpectrumGp {
        kind: PosteriorKind::Ssgp,
        basis: basis.clone(),
        chol: f.chol,
        weights_mean: f.a,
        log_marginal: f.log_marginal,
    })
}

/// Log marginal likelihood and its gradient with respect to every frequency
/// coordinate (`grad[r][g]` for `s_rg`).
pub fn log_marginal_with_grad(basis: &SpectrumBasis, data: &Dataset) -> Result<(f64, Vec<Vec<f64>>)> {
    let f = fit_parts(basis, data)?;
    let m = basis.m();
    let t = data.len();
    let y = DVector::from_column_slice(&data.values);
    let resid = (y - f.phi.tr_mul(&f.a)).component_mul(&f.inv_noise);
    let mut phi_n = f.phi.clone();
    for (col, w) in f.inv_noise.iter().enumerate() {
        phi_n.column_mut(col).scale_mut(*w);
    }
    let pinv_phi_n = f.chol.solve(&phi_n);
    // ∂L/∂Φ = a rᵀ − P⁻¹ Φ N⁻¹
    let dphi = &f.a * resid.transpose() - pinv_phi_n;
    let mut grad = vec![vec![0.0; basis.dim()]; m];
    for (r, gr) in grad.iter_mut().enumerate() {
        for i in 0..t {
            let (cos, sin) = (f.phi[(r, i)], f.phi[(m + r, i)]);
            let w = 2.0 * PI * (-dphi[(r, i)] * sin + dphi[(m + r, i)] * cos);
            for (g, o) in gr.iter_mut().enumerate() {
                *o += w * data.inputs[i][g];
            }
        }
    }
    Ok((f.log_marginal, grad))
}

impl SpectrumGp {
    pub(crate) fn relabel(mut self, kind: PosteriorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> PosteriorKind {
        self.kind
    }

    pub fn basis(&self) -> &SpectrumBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior mean of the feature weights.
    pub fn weights_mean(&self) -> &DVector<f64> {
        &self.weights_mean
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Latent mean and variance `φᵀ P⁻¹ φ` (no noise floor).
    pub fn predict_latent(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let phi = self.basis.features(x);
        let v = linalg::solve_lower(&self.chol, &phi);
        Ok(Prediction {
            mean: phi.dot(&self.weights_mean),
            var: v.norm_squared(),
        })
    }

    /// Predictive mean and variance including the noise floor σn².
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.predict_latent(x)?;
        Ok(Prediction {
            mean: p.mean,
            var: p.var + self.basis.noise_var,
        })
    }

    pub fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for x in xs {
            self.check_dim(x)?;
        }
        let phi = self.basis.feature_matrix(xs);
        let v = linalg::solve_lower_mat(&self.chol, &phi);
        Ok((phi.tr_mul(&self.weights_mean), v.tr_mul(&v)))
    }

    /// One draw of the feature weights from their Gaussian posterior.
    pub fn sample_weights<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.weights_mean.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // P = L Lᵀ, so L⁻ᵀ z has covariance P⁻¹
        let mut w = z;
        self.chol.l_dirty().tr_solve_lower_triangular_mut(&mut w);
        w + &self.weights_mean
    }

    /// Value of the sampled function with weights `w` at `x`.
    pub fn sample_value(&self, w: &DVector<f64>, x: &[f64]) -> f64 {
        self.basis.features(x).dot(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencyOptions {
    pub steps: usize,
    /// Adam step size relative to the RMS of the initial frequencies.
    pub learning_rate: f64,
}

impl Default for FrequencyOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyFit {
    pub basis: SpectrumBasis,
    pub log_marginal: f64,
    pub budget_exhausted: bool,
}

pub(crate) fn frequency_scale(basis: &SpectrumBasis) -> f64 {
    let n = (basis.m() * basis.dim()).max(1) as f64;
    let rms = (basis.frequencies.iter().flatten().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms > 0.0 {
        rms
    } else {
        1.0
    }
}

/// Adam ascent over frequencies driven by `objective`, which returns the value
/// and gradient at a basis. Keeps and returns the best basis seen.
pub(crate) fn ascend<F>(basis0: &SpectrumBasis, opts: &FrequencyOptions, mut objective: F) -> Result<(SpectrumBasis, f64, bool)>
where
    F: FnMut(&SpectrumBasis) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let lr = opts.learning_rate * frequency_scale(basis0);
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-12);
    let mut cur = basis0.clone();
    let (mut value, mut grad) = objective(&cur)?;
    let mut best = (cur.clone(), value);
    let m = basis0.m();
    let d = basis0.dim();
    let mut mom = vec![vec![0.0; d]; m];
    let mut vel = vec![vec![0.0; d]; m];
    for step in 1..=opts.steps {
        let gnorm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            return Ok((best.0, best.1, false));
        }
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        for r in 0..m {
            for g in 0..d {
                mom[r][g] = b1 * mom[r][g] + (1.0 - b1) * grad[r][g];
                vel[r][g] = b2 * vel[r][g] + (1.0 - b2) * grad[r][g] * grad[r][g];
                cur.frequencies[r][g] += lr * (mom[r][g] / c1) / ((vel[r][g] / c2).sqrt() + eps);
            }
        }
        match objective(&cur) {
            Ok((v, g)) => {
                value = v;
                grad = g;
            }
            Err(e) => {
                log::debug!("frequency step {step} failed: {e}");
                break;
            }
        }
        if value > best.1 {
            best = (cur.clone(), value);
        }
    }
    Ok((best.0, best.1, true))
}

/// Maximizes the log marginal likelihood over the frequencies.
pub fn optimize_frequencies(basis0: &SpectrumBasis, data: &Dataset, opts: &FrequencyOptions) -> Result<FrequencyFit> {
    let (basis, log_marginal, budget_exhausted) = ascend(basis0, opts, |b| log_marginal_with_grad(b, data))?;
    Ok(FrequencyFit {
        basis,
        log_marginal,
        budget_exhausted,
    })
}
