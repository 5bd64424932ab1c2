//! Covariance functions and the derivative cross-covariance blocks used by the
//! gradient-aware surrogates.
//!
//! Lengthscales are always stored per dimension. An isotropic kernel simply
//! repeats the same value, and an infinite lengthscale drops that dimension
//! from the distance sum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    #[serde(default = "default_degree")]
    pub poly_degree: u32,
    #[serde(default)]
    pub poly_offset: f64,
}

fn default_degree() -> u32 {
    1
}

impl KernelSpec {
    /// Isotropic squared-exponential kernel.
    pub fn se(dim: usize, lengthscale: f64, signal_variance: f64) -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            lengthscales: vec![lengthscale; dim],
            signal_variance,
            poly_degree: 1,
            poly_offset: 0.0,
        }
    }

    pub fn matern32(dim: usize, lengthscale: f64, signal_variance: f64) -> Self {
        Self {
            family: KernelFamily::Matern32,
            ..Self::se(dim, lengthscale, signal_variance)
        }
    }

    /// `(offset + x·x')^degree`; lengthscales and signal variance are not read.
    pub fn polynomial(dim: usize, degree: u32, offset: f64) -> Self {
        Self {
            family: KernelFamily::Polynomial,
            lengthscales: vec![1.0; dim],
            signal_variance: 1.0,
            poly_degree: degree,
            poly_offset: offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one dimension".into()));
        }
        match self.family {
            KernelFamily::Polynomial => {
                if self.poly_degree < 1 {
                    return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
                }
                if !(self.poly_offset >= 0.0) {
                    return Err(Error::InvalidArgument("polynomial offset must be >= 0".into()));
                }
            }
            _ => {
                if self.lengthscales.iter().any(|&l| !(l > 0.0)) {
                    return Err(Error::InvalidArgument("lengthscales must be > 0".into()));
                }
                if !(self.signal_variance > 0.0) {
                    return Err(Error::InvalidArgument("signal variance must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    fn check(&self, x: &[f64], x2: &[f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if x2.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x2.len() });
        }
        Ok(())
    }

    fn require_se(&self) -> Result<()> {
        if self.family != KernelFamily::SquaredExponential {
            return Err(Error::UnsupportedKernel(self.family));
        }
        Ok(())
    }

    /// Squared scaled distance `Σ ((x_g - x'_g) / ρ_g)²`.
    fn scaled_sq_dist(&self, x: &[f64], x2: &[f64]) -> f64 {
        x.iter()
            .zip(x2)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                if l.is_infinite() {
                    0.0
                } else {
                    let r = (a - b) / l;
                    r * r
                }
            })
            .sum()
    }

    fn inv_sq(&self, g: usize) -> f64 {
        let l = self.lengthscales[g];
        if l.is_infinite() {
            0.0
        } else {
            1.0 / (l * l)
        }
    }

    /// k(x, x').
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check(x, x2)?;
        Ok(self.eval_unchecked(x, x2))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                self.signal_variance * (-0.5 * self.scaled_sq_dist(x, x2)).exp()
            }
            KernelFamily::Matern32 => {
                let r = 3f64.sqrt() * self.scaled_sq_dist(x, x2).sqrt();
                self.signal_variance * (1.0 + r) * (-r).exp()
            }
            KernelFamily::Polynomial => {
                let dot: f64 = x.iter().zip(x2).map(|(a, b)| a * b).sum();
                (self.poly_offset + dot).powi(self.poly_degree as i32)
            }
        }
    }

    /// ∂k(x, x')/∂x'_g for every g: the value/derivative cross-covariance
    /// `cov(f(x), ∂f(x')/∂x'_g)`.
    pub fn eval_grad_block(&self, x: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
        self.require_se()?;
        self.check(x, x2)?;
        let mut out = vec![0.0; self.dim()];
        self.grad_block_into(x, x2, &mut out);
        Ok(out)
    }

    pub(crate) fn grad_block_into(&self, x: &[f64], x2: &[f64], out: &mut [f64]) {
        let k = self.eval_unchecked(x, x2);
        for (g, o) in out.iter_mut().enumerate() {
            *o = k * (x[g] - x2[g]) * self.inv_sq(g);
        }
    }

    /// ∂²k(x, x')/∂x_g∂x'_h: the covariance between partial derivatives.
    pub fn eval_hess_block(&self, x: &[f64], x2: &[f64]) -> Result<DMatrix<f64>> {
        self.require_se()?;
        self.check(x, x2)?;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let k = self.eval_unchecked(x, x2);
        for g in 0..d {
            let dg = (x[g] - x2[g]) * self.inv_sq(g);
            for h in 0..d {
                let dh = (x[h] - x2[h]) * self.inv_sq(h);
                let delta = if g == h { self.inv_sq(g) } else { 0.0 };
                out[(g, h)] = k * (delta - dg * dh);
            }
        }
        Ok(out)
    }

    /// Single entry of [`Self::eval_hess_block`] without allocating.
    pub(crate) fn hess_entry(&self, x: &[f64], x2: &[f64], g: usize, h: usize) -> f64 {
        let k = self.eval_unchecked(x, x2);
        let dg = (x[g] - x2[g]) * self.inv_sq(g);
        let dh = (x[h] - x2[h]) * self.inv_sq(h);
        let delta = if g == h { self.inv_sq(g) } else { 0.0 };
        k * (delta - dg * dh)
    }

    /// ∂k(x, x')/∂x for any family; used to differentiate posterior means.
    pub(crate) fn grad_first_arg(&self, x: &[f64], x2: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self.family {
            KernelFamily::SquaredExponential => {
                let k = self.eval_unchecked(x, x2);
                (0..d).map(|g| -k * (x[g] - x2[g]) * self.inv_sq(g)).collect()
            }
            KernelFamily::Matern32 => {
                let r = 3f64.sqrt() * self.scaled_sq_dist(x, x2).sqrt();
                let c = -3.0 * self.signal_variance * (-r).exp();
                (0..d).map(|g| c * (x[g] - x2[g]) * self.inv_sq(g)).collect()
            }
            KernelFamily::Polynomial => {
                let deg = self.poly_degree as i32;
                let dot: f64 = x.iter().zip(x2).map(|(a, b)| a * b).sum();
                let c = deg as f64 * (self.poly_offset + dot).powi(deg - 1);
                x2.iter().map(|v| c * v).collect()
            }
        }
    }

    /// Derivative of k(x, x') with respect to `log ρ_g` (ARD), one entry per dimension.
    pub(crate) fn grad_log_lengthscales(&self, x: &[f64], x2: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self.family {
            KernelFamily::SquaredExponential => {
                let k = self.eval_unchecked(x, x2);
                (0..d)
                    .map(|g| {
                        let r = (x[g] - x2[g]) * self.inv_sq(g).sqrt();
                        k * r * r
                    })
                    .collect()
            }
            KernelFamily::Matern32 => {
                let r = 3f64.sqrt() * self.scaled_sq_dist(x, x2).sqrt();
                let c = 3.0 * self.signal_variance * (-r).exp();
                (0..d)
                    .map(|g| {
                        let s = (x[g] - x2[g]) * self.inv_sq(g).sqrt();
                        c * s * s
                    })
                    .collect()
            }
            KernelFamily::Polynomial => vec![0.0; d],
        }
    }

    /// Prior variance of ∂f/∂x_g at any point (SE only).
    pub(crate) fn derivative_variance(&self, g: usize) -> f64 {
        self.signal_variance * self.inv_sq(g)
    }

    pub fn gram(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_unchecked(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}
