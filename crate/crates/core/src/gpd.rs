//! GP conditioned jointly on function values and gradient observations.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{ExactGp, PosteriorKind};
use crate::kernel::{KernelFamily, KernelSpec};

/// Row of an augmented covariance: a function value or one partial derivative
/// of a gradient observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Row {
    Value(usize),
    Partial { obs: usize, dim: usize },
}

/// Noise-free joint covariance of values and partial derivatives.
#[derive(Clone, Debug)]
pub struct AugmentedGram {
    pub matrix: DMatrix<f64>,
    pub rows: Vec<Row>,
}

/// Builds the block matrix `[[K_ff, K_f∂], [K_∂f, K_∂∂]]`: value rows first,
/// then `d` partial rows per gradient observation.
pub fn augmented_gram(spec: &KernelSpec, data: &Dataset) -> Result<AugmentedGram> {
    if !data.gradients.is_empty() && spec.family != KernelFamily::SquaredExponential {
        return Err(Error::UnsupportedKernel(spec.family));
    }
    let d = spec.dim();
    let mut rows: Vec<Row> = (0..data.len()).map(Row::Value).collect();
    for obs in 0..data.gradients.len() {
        rows.extend((0..d).map(|dim| Row::Partial { obs, dim }));
    }
    let n = rows.len();
    let gpoint = |obs: usize| data.gradients[obs].point.as_slice();
    let mut matrix = DMatrix::zeros(n, n);
    let mut gbuf = vec![0.0; d];
    for i in 0..n {
        for j in 0..=i {
            let v = match (rows[i], rows[j]) {
                (Row::Value(a), Row::Value(b)) => spec.eval_unchecked(&data.inputs[a], &data.inputs[b]),
                (Row::Partial { obs, dim }, Row::Value(b)) | (Row::Value(b), Row::Partial { obs, dim }) => {
                    spec.grad_block_into(&data.inputs[b], gpoint(obs), &mut gbuf);
                    gbuf[dim]
                }
                (Row::Partial { obs: a, dim: g }, Row::Partial { obs: b, dim: h }) => {
                    spec.hess_entry(gpoint(a), gpoint(b), g, h)
                }
            };
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(AugmentedGram { matrix, rows })
}

/// Fits the derivative-augmented GP. Value rows get their own noise
/// variances, partial rows the noise stored on each gradient observation.
pub fn fit_gpd(spec: &KernelSpec, data: &Dataset) -> Result<ExactGp> {
    ExactGp::build(spec, data, PosteriorKind::Gpd)
}
