//! A common interface over the fitted surrogates, plus joint posterior sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::fic::SparseGp;
use crate::gp::{ExactGp, Prediction, PosteriorKind};
use crate::linalg;
use crate::spectrum::SpectrumGp;

pub trait Surrogate: Sync {
    fn kind(&self) -> PosteriorKind;
    fn dim(&self) -> usize;
    fn log_marginal(&self) -> f64;
    /// Predictive mean and variance of the latent function (the spectrum
    /// models add their noise floor, matching their published predictive form).
    fn predict(&self, x: &[f64]) -> Result<Prediction>;
    /// Joint posterior of the latent function at `xs`.
    fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

impl Surrogate for ExactGp {
    fn kind(&self) -> PosteriorKind {
        ExactGp::kind(self)
    }
    fn dim(&self) -> usize {
        ExactGp::dim(self)
    }
    fn log_marginal(&self) -> f64 {
        ExactGp::log_marginal(self)
    }
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        ExactGp::predict(self, x)
    }
    fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        ExactGp::predict_joint(self, xs)
    }
}

impl Surrogate for SparseGp {
    fn kind(&self) -> PosteriorKind {
        SparseGp::kind(self)
    }
    fn dim(&self) -> usize {
        SparseGp::dim(self)
    }
    fn log_marginal(&self) -> f64 {
        SparseGp::log_marginal(self)
    }
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        SparseGp::predict(self, x)
    }
    fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        SparseGp::predict_joint(self, xs)
    }
}

impl Surrogate for SpectrumGp {
    fn kind(&self) -> PosteriorKind {
        SpectrumGp::kind(self)
    }
    fn dim(&self) -> usize {
        SpectrumGp::dim(self)
    }
    fn log_marginal(&self) -> f64 {
        SpectrumGp::log_marginal(self)
    }
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        SpectrumGp::predict(self, x)
    }
    fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        SpectrumGp::predict_joint(self, xs)
    }
}

/// Any fitted surrogate.
#[derive(Debug)]
pub enum Posterior {
    Exact(ExactGp),
    Sparse(SparseGp),
    Spectrum(SpectrumGp),
}

impl Posterior {
    fn inner(&self) -> &dyn Surrogate {
        match self {
            Posterior::Exact(p) => p,
            Posterior::Sparse(p) => p,
            Posterior::Spectrum(p) => p,
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

impl Surrogate for Posterior {
    fn kind(&self) -> PosteriorKind {
        self.inner().kind()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn log_marginal(&self) -> f64 {
        self.inner().log_marginal()
    }
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.inner().predict(x)
    }
    fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.inner().predict_joint(xs)
    }
}

/// Factor of a posterior covariance for sampling; escalates jitter relative
/// to the largest variance since posterior covariances are often singular.
pub fn sampling_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
    let (chol, _) = linalg::cholesky_escalating(cov.clone(), 1e-10 * scale, 1e-2 * scale, "posterior sampling")?;
    Ok(chol.l())
}

/// Draws `n` joint samples of the latent function at `xs`.
pub fn sample_joint<S: Surrogate + ?Sized, R: Rng>(
    post: &S,
    xs: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let (mean, cov) = post.predict_joint(xs)?;
    let l = sampling_factor(&cov)?;
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_iterator(xs.len(), (0..xs.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            &mean + &l * z
        })
        .collect())
}
