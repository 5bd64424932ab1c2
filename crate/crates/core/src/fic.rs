//! Sparse GP with derivative observations under the fully independent
//! conditional (FIC) approximation.
//!
//! Only function values at inducing inputs act as inducing variables. Every
//! training row (value or partial derivative) is conditionally independent
//! given them, with its exact prior variance restored on the diagonal.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{Prediction, PosteriorKind};
use crate::gpd::Row;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InducingMode {
    RandomSubset,
    Optimized,
    AllTrainingInputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingSet {
    pub points: Vec<Vec<f64>>,
    pub mode: InducingMode,
    /// Optimized mode ran out of evaluations before stalling.
    #[serde(default)]
    pub budget_exhausted: bool,
}

impl InducingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub struct SparseGp {
    spec: KernelSpec,
    inducing: Vec<Vec<f64>>,
    l_m: Cholesky<f64, Dyn>,
    l_b: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    log_marginal: f64,
    jitter: f64,
    clamped: AtomicUsize,
}

impl std::fmt::Debug for SparseGp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseGp")
            .field("spec", &self.spec)
            .field("inducing", &self.inducing.len())
            .field("log_marginal", &self.log_marginal)
            .finish()
    }
}

fn training_rows(data: &Dataset, d: usize) -> Vec<Row> {
    let mut rows: Vec<Row> = (0..data.len()).map(Row::Value).collect();
    for obs in 0..data.gradients.len() {
        rows.extend((0..d).map(|dim| Row::Partial { obs, dim }));
    }
    rows
}

/// Fits the FIC sparse GP over the values and gradient observations of `data`.
pub fn fit_sgpd(spec: &KernelSpec, data: &Dataset, inducing: &InducingSet) -> Result<SparseGp> {
    spec.validate()?;
    data.validate()?;
    if spec.family != KernelFamily::SquaredExponential {
        return Err(Error::UnsupportedKernel(spec.family));
    }
    if inducing.is_empty() {
        return Err(Error::InvalidArgument("need at least one inducing point".into()));
    }
    if data.is_empty() && data.gradients.is_empty() {
        return Err(Error::InvalidArgument("need at least one observation".into()));
    }
    let d = spec.dim();
    if data.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: data.dim() });
    }
    if let Some(p) = inducing.points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: p.len() });
    }

    let m = inducing.len();
    let kmm = spec.gram(&inducing.points);
    let base = linalg::JITTER * spec.signal_variance;
    let (l_m, jitter) = linalg::cholesky_escalating(kmm, 1e-4 * base, 1e-2 * spec.signal_variance, "inducing covariance")?;

    let rows = training_rows(data, d);
    let n = rows.len();
    let mut kmr = DMatrix::zeros(m, n);
    let mut prior_diag = DVector::zeros(n);
    let mut noise = DVector::zeros(n);
    let mut targets = DVector::zeros(n);
    let mut gbuf = vec![0.0; d];
    for (c, row) in rows.iter().enumerate() {
        match *row {
            Row::Value(a) => {
                let x = &data.inputs[a];
                for (i, u) in inducing.points.iter().enumerate() {
                    kmr[(i, c)] = spec.eval_unchecked(u, x);
                }
                prior_diag[c] = spec.eval_unchecked(x, x);
                noise[c] = data.noise_vars[a];
                targets[c] = data.values[a];
            }
            Row::Partial { obs, dim } => {
                let g = &data.gradients[obs];
                for (i, u) in inducing.points.iter().enumerate() {
                    spec.grad_block_into(u, &g.point, &mut gbuf);
                    kmr[(i, c)] = gbuf[dim];
                }
                prior_diag[c] = spec.derivative_variance(dim);
                noise[c] = g.noise_var;
                targets[c] = g.gradient[dim];
            }
        }
    }
    let v = linalg::solve_lower_mat(&l_m, &kmr);
    let mut lambda = DVector::zeros(n);
    for c in 0..n {
        let q = v.column(c).norm_squared();
        lambda[c] = (prior_diag[c] - q).max(0.0) + noise[c] + base;
    }
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sparse fit needs positive noise on every row (found {l})"
        )));
    }
    let inv_lambda = lambda.map(|l| 1.0 / l);

    // B = I + V Λ⁻¹ Vᵀ
    let mut vs = v.clone();
    for (c, il) in inv_lambda.iter().enumerate() {
        vs.column_mut(c).scale_mut(il.sqrt());
    }
    let b = DMatrix::identity(m, m) + &vs * vs.transpose();
    let l_b = linalg::cholesky(b, 0.0, "sparse low-rank system")?;
    let scaled_y = targets.component_mul(&inv_lambda);
    let beta = linalg::solve_lower(&l_b, &(&v * &scaled_y));

    let quad = targets.dot(&scaled_y) - beta.norm_squared();
    let log_det = lambda.iter().map(|l| l.ln()).sum::<f64>() + linalg::log_det(&l_b);
    let log_marginal = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    Ok(SparseGp {
        spec: spec.clone(),
        inducing: inducing.points.clone(),
        l_m,
        l_b,
        beta,
        log_marginal,
        jitter,
        clamped: AtomicUsize::new(0),
    })
}

impl SparseGp {
    pub fn kind(&self) -> PosteriorKind {
        PosteriorKind::Sgpd
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn inducing_points(&self) -> &[Vec<f64>] {
        &self.inducing
    }

    /// Jitter that made the inducing covariance factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn clamp_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn project(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let k = DVector::from_iterator(self.inducing.len(), self.inducing.iter().map(|u| self.spec.eval_unchecked(u, x)));
        let v = linalg::solve_lower(&self.l_m, &k);
        let w = linalg::solve_lower(&self.l_b, &v);
        (v, w)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let (v, w) = self.project(x);
        let mean = w.dot(&self.beta);
        let var = self.spec.eval_unchecked(x, x) - v.norm_squared() + w.norm_squared();
        let var = if var < 0.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            0.0
        } else {
            var
        };
        Ok(Prediction { mean, var })
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Joint posterior at `xs`; test points are conditionally independent
    /// given the inducing values, as for training rows.
    pub fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for x in xs {
            self.check_dim(x)?;
        }
        let q = xs.len();
        let m = self.inducing.len();
        let mut ks = DMatrix::zeros(m, q);
        for (c, x) in xs.iter().enumerate() {
            for (i, u) in self.inducing.iter().enumerate() {
                ks[(i, c)] = self.spec.eval_unchecked(u, x);
            }
        }
        let v = linalg::solve_lower_mat(&self.l_m, &ks);
        let w = linalg::solve_lower_mat(&self.l_b, &v);
        let mean = w.tr_mul(&self.beta);
        let mut cov = w.tr_mul(&w);
        for (c, x) in xs.iter().enumerate() {
            cov[(c, c)] += (self.spec.eval_unchecked(x, x) - v.column(c).norm_squared()).max(0.0);
        }
        Ok((mean, cov))
    }
}

/// Chooses `m` inducing inputs among the training inputs.
///
/// `Optimized` starts from a random subset and performs swap moves between
/// inducing and non-inducing training inputs, keeping a swap only when it
/// raises the sparse log marginal likelihood. `budget` counts likelihood
/// evaluations.
pub fn select_inducing(
    spec: &KernelSpec,
    data: &Dataset,
    m: usize,
    mode: InducingMode,
    budget: usize,
    seed: u64,
) -> Result<InducingSet> {
    let t = data.len();
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one inducing point".into()));
    }
    if mode == InducingMode::AllTrainingInputs {
        return Ok(InducingSet {
            points: data.inputs.clone(),
            mode,
            budget_exhausted: false,
        });
    }
    if m > t {
        return Err(Error::InvalidArgument(format!(
            "cannot choose {m} inducing points from {t} training inputs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, t, m).into_vec();
    let pick = |idx: &[usize]| InducingSet {
        points: idx.iter().map(|&i| data.inputs[i].clone()).collect(),
        mode,
        budget_exhausted: false,
    };
    if mode == InducingMode::RandomSubset || m == t {
        return Ok(pick(&chosen));
    }

    let score = |idx: &[usize]| fit_sgpd(spec, data, &pick(idx)).map(|g| g.log_marginal()).unwrap_or(f64::NEG_INFINITY);
    let mut best = score(&chosen);
    let mut evals = 1usize;
    let mut stale = 0usize;
    const BATCH: usize = 8;
    while evals < budget {
        let inside: std::collections::HashSet<usize> = chosen.iter().copied().collect();
        let outside: Vec<usize> = (0..t).filter(|i| !inside.contains(i)).collect();
        let n = BATCH.min(budget - evals);
        let moves: Vec<(usize, usize)> = (0..n)
            .map(|_| (rng.random_range(0..m), outside[rng.random_range(0..outside.len())]))
            .collect();
        let scores: Vec<f64> = moves
            .par_iter()
            .map(|&(slot, cand)| {
                let mut idx = chosen.clone();
                idx[slot] = cand;
                score(&idx)
            })
            .collect();
        evals += n;
        let (k, s) = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, s)| if *s > acc.1 { (k, *s) } else { acc });
        if s > best {
            best = s;
            chosen[moves[k].0] = moves[k].1;
            stale = 0;
        } else {
            stale += n;
            if stale >= 4 * t.max(BATCH) {
                let mut set = pick(&chosen);
                set.budget_exhausted = false;
                return Ok(set);
            }
        }
    }
    let mut set = pick(&chosen);
    set.budget_exhausted = true;
    Ok(set)
}
