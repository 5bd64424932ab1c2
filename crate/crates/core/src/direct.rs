//! Global maximization over a box: DIRECT rectangle subdivision interleaved
//! with a compass-search polish around each new incumbent.
//!
//! All evaluations form one deterministic stream that does not depend on the
//! budget; the budget only truncates it. The returned value is therefore
//! nondecreasing in the budget for a fixed seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BUDGET: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget: usize,
    /// Smallest compass step, relative to the box width.
    pub tolerance: f64,
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            budget: DEFAULT_BUDGET,
            tolerance: 1e-7,
        }
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidArgument("evaluation budget must be >= 1".into()));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidArgument("bounds must be nonempty and of equal length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("each lower bound must be finite and below its upper bound".into()));
        }
        Ok(())
    }

    fn to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (l + v * (h - l)).clamp(*l, *h))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Smallest rectangle side created, in unit-cube coordinates.
    pub cell_width: f64,
    pub evaluations: usize,
}

struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    value: f64,
}

impl Rect {
    fn size(&self) -> f64 {
        0.5 * self.levels.iter().map(|&l| 3f64.powi(-2 * l as i32)).sum::<f64>().sqrt()
    }
}

struct Search<'a, F> {
    f: &'a F,
    space: &'a SearchSpace,
    evals: usize,
    best_u: Vec<f64>,
    best: f64,
    min_side: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Search<'_, F> {
    fn remaining(&self) -> usize {
        self.space.budget - self.evals
    }

    fn eval_value(&self, u: &[f64]) -> f64 {
        let v = (self.f)(&self.space.to_box(u));
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Evaluates a prefix of `points` that fits the budget; returns the values.
    fn eval_batch(&mut self, points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len().min(self.remaining());
        let vals: Vec<f64> = points[..n].par_iter().map(|u| self.eval_value(u)).collect();
        for (u, v) in points[..n].iter().zip(&vals) {
            self.record(u, *v);
        }
        self.evals += n;
        vals
    }

    fn eval_one(&mut self, u: &[f64]) -> Option<f64> {
        if self.remaining() == 0 {
            return None;
        }
        let v = self.eval_value(u);
        self.evals += 1;
        self.record(u, v);
        Some(v)
    }

    fn record(&mut self, u: &[f64], v: f64) {
        if v > self.best {
            self.best = v;
            self.best_u = u.to_vec();
        }
    }
}

/// Indices of the potentially optimal rectangles (minimizing `-f`).
fn potentially_optimal(rects: &[Rect], fmin: f64) -> Vec<usize> {
    // best rectangle per distinct size, ties to the lowest index
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for (i, r) in rects.iter().enumerate() {
        let s = r.size();
        let g = -r.value;
        match groups.iter_mut().find(|e| (e.0 - s).abs() <= 1e-12 * s) {
            Some(e) => {
                if g < e.1 {
                    e.1 = g;
                    e.2 = i;
                }
            }
            None => groups.push((s, g, i)),
        }
    }
    let eps = 1e-4 * fmin.abs();
    let mut out = Vec::new();
    for (j, &(dj, gj, idx)) in groups.iter().enumerate() {
        let mut k_low = 0.0f64;
        let mut k_high = f64::INFINITY;
        let mut ok = true;
        for (i, &(di, gi, _)) in groups.iter().enumerate() {
            if i == j {
                continue;
            }
            if di < dj {
                k_low = k_low.max((gj - gi) / (dj - di));
            } else if di > dj {
                k_high = k_high.min((gi - gj) / (di - dj));
            }
        }
        if k_low > k_high || k_high <= 0.0 {
            ok = false;
        }
        if ok && k_high.is_finite() && gj - k_high * dj > fmin - eps {
            ok = false;
        }
        if ok {
            out.push(idx);
        }
    }
    out.sort_unstable();
    out
}

/// Maximizes `f` over the box of `space`. `seed` drives the order of compass
/// polling; the DIRECT part is seed-independent.
pub fn maximize<F>(f: F, space: &SearchSpace, seed: u64) -> Result<Maximum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    space.validate()?;
    let d = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = vec![0.5; d];
    let mut s = Search {
        f: &f,
        space,
        evals: 0,
        best_u: center.clone(),
        best: f64::NEG_INFINITY,
        min_side: 1.0,
    };
    let v0 = s.eval_one(&center).unwrap();
    let mut rects = vec![Rect {
        center,
        levels: vec![0; d],
        value: v0,
    }];

    while s.remaining() > 0 {
        let before = s.best;
        let fmin = -s.best;
        let selected = potentially_optimal(&rects, fmin);

        // probe points of every selected rectangle, in a fixed order
        let mut plan: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut points = Vec::new();
        for &ri in &selected {
            let r = &rects[ri];
            let lmin = *r.levels.iter().min().unwrap();
            let dims: Vec<usize> = (0..d).filter(|&g| r.levels[g] == lmin).collect();
            let delta = 3f64.powi(-(lmin as i32 + 1));
            for &g in &dims {
                let mut a = r.center.clone();
                a[g] += delta;
                let mut b = r.center.clone();
                b[g] -= delta;
                points.push(a);
                points.push(b);
            }
            plan.push((ri, dims));
        }
        let vals = s.eval_batch(&points);
        if vals.len() < points.len() {
            break;
        }

        let mut offset = 0;
        let mut new_rects = Vec::new();
        for (ri, dims) in plan {
            let k = dims.len();
            let pv = &vals[offset..offset + 2 * k];
            let pp = &points[offset..offset + 2 * k];
            offset += 2 * k;
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                let wa = pv[2 * a].max(pv[2 * a + 1]);
                let wb = pv[2 * b].max(pv[2 * b + 1]);
                wb.partial_cmp(&wa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
            let mut levels = rects[ri].levels.clone();
            for &o in &order {
                levels[dims[o]] += 1;
                for side in 0..2 {
                    new_rects.push(Rect {
                        center: pp[2 * o + side].clone(),
                        levels: levels.clone(),
                        value: pv[2 * o + side],
                    });
                }
            }
            let side = 3f64.powi(-(*levels.iter().max().unwrap() as i32));
            s.min_side = s.min_side.min(side);
            rects[ri].levels = levels;
        }
        rects.extend(new_rects);

        if s.best > before {
            polish(&mut s, &mut rng);
        }
    }

    Ok(Maximum {
        point: space.to_box(&s.best_u),
        value: s.best,
        cell_width: s.min_side,
        evaluations: s.evals,
    })
}

/// Compass search from the incumbent with a bounded number of evaluations.
fn polish<F: Fn(&[f64]) -> f64 + Sync>(s: &mut Search<'_, F>, rng: &mut ChaCha8Rng) {
    let d = s.space.dim();
    let limit = 8 * d + 8;
    let mut used = 0;
    let mut step = s.min_side / 3.0;
    let mut x = s.best_u.clone();
    let mut fx = s.best;
    let mut dirs: Vec<usize> = (0..d).collect();
    while used < limit && step > s.space.tolerance {
        dirs.shuffle(rng);
        let mut moved = false;
        'poll: for &g in &dirs {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[g] = (y[g] + sign * step).clamp(0.0, 1.0);
                if y[g] == x[g] {
                    continue;
                }
                let Some(v) = s.eval_one(&y) else { return };
                used += 1;
                if v > fx {
                    x = y;
                    fx = v;
                    moved = true;
                    break 'poll;
                }
                if used >= limit {
                    break 'poll;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
}
