//! Test functions with known optima, analytic gradients and simple regret.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// Maps an objective value into the maximization convention.
    pub fn to_max(self, y: f64) -> f64 {
        match self {
            Sense::Minimize => -y,
            Sense::Maximize => y,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        self.to_max(a) > self.to_max(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    Multimodal1d,
    Branin,
    Hartmann3,
    Hartmann4,
    Hartmann6,
    Ackley2,
    GaussianPdf3,
    GaussianPdf5,
    Sinc,
    SurrogateAccuracy,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 10] = [
        BenchmarkId::Multimodal1d,
        BenchmarkId::Branin,
        BenchmarkId::Hartmann3,
        BenchmarkId::Hartmann4,
        BenchmarkId::Hartmann6,
        BenchmarkId::Ackley2,
        BenchmarkId::GaussianPdf3,
        BenchmarkId::GaussianPdf5,
        BenchmarkId::Sinc,
        BenchmarkId::SurrogateAccuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Multimodal1d => "multimodal1d",
            BenchmarkId::Branin => "branin",
            BenchmarkId::Hartmann3 => "hartmann3",
            BenchmarkId::Hartmann4 => "hartmann4",
            BenchmarkId::Hartmann6 => "hartmann6",
            BenchmarkId::Ackley2 => "ackley2",
            BenchmarkId::GaussianPdf3 => "gaussian_pdf3",
            BenchmarkId::GaussianPdf5 => "gaussian_pdf5",
            BenchmarkId::Sinc => "sinc",
            BenchmarkId::SurrogateAccuracy => "surrogate_accuracy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|b| b.name() == key || b.name().replace('_', "") == key.replace('_', ""))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark `{name}`")))
    }
}

impl std::fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

type Eval = fn(&[f64]) -> f64;
type Grad = fn(&[f64]) -> Vec<f64>;

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub optimum_x: Vec<f64>,
    pub optimum_value: f64,
    pub sense: Sense,
    eval: Eval,
    grad: Option<Grad>,
}

impl Benchmark {
    pub fn get(id: BenchmarkId) -> Self {
        let b = |lower: Vec<f64>, upper: Vec<f64>, optimum_x: Vec<f64>, optimum_value: f64, sense: Sense, eval: Eval, grad: Grad| Benchmark {
            id,
            lower,
            upper,
            optimum_x,
            optimum_value,
            sense,
            eval,
            grad: Some(grad),
        };
        match id {
            BenchmarkId::Multimodal1d => b(
                vec![1.0],
                vec![4.0],
                vec![MULTIMODAL_ARGMAX],
                multimodal(&[MULTIMODAL_ARGMAX]),
                Sense::Maximize,
                multimodal,
                multimodal_grad,
            ),
            BenchmarkId::Branin => b(
                vec![-5.0, 0.0],
                vec![10.0, 15.0],
                vec![PI, 2.275],
                0.397_887_357_729_738,
                Sense::Minimize,
                branin,
                branin_grad,
            ),
            BenchmarkId::Hartmann3 => b(
                vec![0.0; 3],
                vec![1.0; 3],
                vec![0.114_614, 0.555_649, 0.852_547],
                -3.862_78,
                Sense::Minimize,
                hartmann3,
                hartmann3_grad,
            ),
            BenchmarkId::Hartmann4 => b(
                vec![0.0; 4],
                vec![1.0; 4],
                HARTMANN4_ARGMIN.to_vec(),
                HARTMANN4_MIN,
                Sense::Minimize,
                hartmann4,
                hartmann4_grad,
            ),
            BenchmarkId::Hartmann6 => b(
                vec![0.0; 6],
                vec![1.0; 6],
                vec![0.201_69, 0.150_011, 0.476_874, 0.275_332, 0.311_652, 0.657_3],
                -3.322_37,
                Sense::Minimize,
                hartmann6,
                hartmann6_grad,
            ),
            BenchmarkId::Ackley2 => b(vec![-10.0; 2], vec![10.0; 2], vec![0.0; 2], 0.0, Sense::Minimize, ackley, ackley_grad),
            BenchmarkId::GaussianPdf3 => b(vec![0.0; 3], vec![2.0; 3], vec![1.0; 3], 1.0, Sense::Maximize, gaussian_pdf, gaussian_pdf_grad),
            BenchmarkId::GaussianPdf5 => b(vec![0.0; 5], vec![2.0; 5], vec![1.0; 5], 1.0, Sense::Maximize, gaussian_pdf, gaussian_pdf_grad),
            BenchmarkId::Sinc => b(vec![-4.0], vec![4.0], vec![0.0], 1.0, Sense::Maximize, sinc, sinc_grad),
            BenchmarkId::SurrogateAccuracy => b(
                vec![0.0; 2],
                vec![1.0; 2],
                ACCURACY_PEAK.to_vec(),
                0.95,
                Sense::Maximize,
                surrogate_accuracy,
                surrogate_accuracy_grad,
            ),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        BenchmarkId::from_name(name).map(Self::get)
    }

    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let inside = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u);
        if inside {
            Ok(())
        } else {
            Err(Error::OutOfBounds)
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok((self.eval)(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let g = self.grad.ok_or_else(|| Error::InvalidArgument(format!("{} declares no gradient", self.name())))?;
        Ok(g(x))
    }

    /// Simple regret of the best value seen so far, never negative.
    pub fn regret(&self, best: f64) -> f64 {
        (self.sense.to_max(self.optimum_value) - self.sense.to_max(best)).max(0.0)
    }

    /// Running simple regret over a sequence of observed values.
    pub fn regret_trace(&self, values: &[f64]) -> Vec<f64> {
        let mut best: Option<f64> = None;
        values
            .iter()
            .map(|y| {
                best = Some(match best {
                    Some(b) if !self.sense.better(*y, b) => b,
                    _ => *y,
                });
                self.regret(best.unwrap())
            })
            .collect()
    }
}

const MULTIMODAL_ARGMAX: f64 = 2.000_874_343_188_643;

pub fn multimodal(x: &[f64]) -> f64 {
    let x = x[0];
    (-(x - 2.0).powi(2)).exp() + (-(x - 6.0).powi(2) / 10.0).exp() + 1.0 / (x * x + 1.0)
}

pub fn multimodal_grad(x: &[f64]) -> Vec<f64> {
    let x = x[0];
    vec![
        -2.0 * (x - 2.0) * (-(x - 2.0).powi(2)).exp() - (x - 6.0) / 5.0 * (-(x - 6.0).powi(2) / 10.0).exp()
            - 2.0 * x / (x * x + 1.0).powi(2),
    ]
}

pub fn branin(x: &[f64]) -> f64 {
    let (a, b, c, r, s, t) = branin_constants();
    let inner = x[1] - b * x[0] * x[0] + c * x[0] - r;
    a * inner * inner + s * (1.0 - t) * x[0].cos() + s
}

pub fn branin_grad(x: &[f64]) -> Vec<f64> {
    let (a, b, c, r, s, t) = branin_constants();
    let inner = x[1] - b * x[0] * x[0] + c * x[0] - r;
    vec![2.0 * a * inner * (c - 2.0 * b * x[0]) - s * (1.0 - t) * x[0].sin(), 2.0 * a * inner]
}

fn branin_constants() -> (f64, f64, f64, f64, f64, f64) {
    (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI, 6.0, 10.0, 1.0 / (8.0 * PI))
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN3_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];

const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

const HARTMANN4_ARGMIN: [f64; 4] = [0.187_395_275, 0.194_151_53, 0.557_917_782, 0.264_779_622];
const HARTMANN4_MIN: f64 = -3.729_840_584_485_593;

fn hartmann_terms<const D: usize>(a: &[[f64; D]; 4], p: &[[f64; D]; 4], x: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        let s: f64 = (0..x.len()).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
        out[i] = HARTMANN_ALPHA[i] * (-s).exp();
    }
    out
}

fn hartmann_value<const D: usize>(a: &[[f64; D]; 4], p: &[[f64; D]; 4], x: &[f64]) -> f64 {
    -hartmann_terms(a, p, x).iter().sum::<f64>()
}

fn hartmann_gradient<const D: usize>(a: &[[f64; D]; 4], p: &[[f64; D]; 4], x: &[f64]) -> Vec<f64> {
    let terms = hartmann_terms(a, p, x);
    (0..x.len())
        .map(|j| (0..4).map(|i| terms[i] * 2.0 * a[i][j] * (x[j] - p[i][j])).sum())
        .collect()
}

pub fn hartmann3(x: &[f64]) -> f64 {
    hartmann_value(&HARTMANN3_A, &HARTMANN3_P, x)
}

pub fn hartmann3_grad(x: &[f64]) -> Vec<f64> {
    hartmann_gradient(&HARTMANN3_A, &HARTMANN3_P, x)
}

/// The six-dimensional coefficients restricted to the first four coordinates.
pub fn hartmann4(x: &[f64]) -> f64 {
    hartmann_value(&HARTMANN6_A, &HARTMANN6_P, x)
}

pub fn hartmann4_grad(x: &[f64]) -> Vec<f64> {
    hartmann_gradient(&HARTMANN6_A, &HARTMANN6_P, x)
}

pub fn hartmann6(x: &[f64]) -> f64 {
    hartmann_value(&HARTMANN6_A, &HARTMANN6_P, x)
}

pub fn hartmann6_grad(x: &[f64]) -> Vec<f64> {
    hartmann_gradient(&HARTMANN6_A, &HARTMANN6_P, x)
}

pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r = (x.iter().map(|v| v * v).sum::<f64>() / d).sqrt();
    let c = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    let v = -20.0 * (-0.2 * r).exp() - c.exp() + 20.0 + std::f64::consts::E;
    // the constant terms cancel to rounding at the origin
    if v.abs() < 1e-14 {
        0.0
    } else {
        v
    }
}

pub fn ackley_grad(x: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let r = (x.iter().map(|v| v * v).sum::<f64>() / d).sqrt();
    let c = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    x.iter()
        .map(|v| {
            let radial = if r > 0.0 { 4.0 * (-0.2 * r).exp() * v / (d * r) } else { 0.0 };
            radial + c.exp() * 2.0 * PI * (2.0 * PI * v).sin() / d
        })
        .collect()
}

pub fn gaussian_pdf(x: &[f64]) -> f64 {
    (-0.5 * x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>()).exp()
}

pub fn gaussian_pdf_grad(x: &[f64]) -> Vec<f64> {
    let f = gaussian_pdf(x);
    x.iter().map(|v| -(v - 1.0) * f).collect()
}

pub fn sinc(x: &[f64]) -> f64 {
    let u = PI * x[0];
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

pub fn sinc_grad(x: &[f64]) -> Vec<f64> {
    let u = PI * x[0];
    if u.abs() < 1e-4 {
        vec![-PI * u / 3.0]
    } else {
        vec![PI * (u * u.cos() - u.sin()) / (u * u)]
    }
}

const ACCURACY_PEAK: [f64; 2] = [0.62, 0.35];

/// A smooth accuracy-like response on the unit square with values in
/// [0, 1], a broad basin and shallow ripples; the peak is exactly 0.95.
pub fn surrogate_accuracy(x: &[f64]) -> f64 {
    let mut v = 0.95;
    for (xi, ci) in x.iter().zip(ACCURACY_PEAK) {
        let dx = xi - ci;
        v -= 0.5 * dx * dx + 0.05 * (1.0 - (6.0 * PI * dx).cos());
    }
    v
}

pub fn surrogate_accuracy_grad(x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(ACCURACY_PEAK)
        .map(|(xi, ci)| {
            let dx = xi - ci;
            -dx - 0.3 * PI * (6.0 * PI * dx).sin()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn declared_optima() {
        for id in BenchmarkId::ALL {
            let b = Benchmark::get(id);
            let v = b.evaluate(&b.optimum_x).unwrap();
            assert!((v - b.optimum_value).abs() < 1e-4, "{id}: {v}");
        }
        assert_eq!(ackley(&[0.0, 0.0]), 0.0);
        assert_eq!(gaussian_pdf(&[1.0; 5]), 1.0);
    }

    #[test]
    fn multimodal_peak_matches_reported_values() {
        let b = Benchmark::get(BenchmarkId::Multimodal1d);
        assert!((b.optimum_x[0] - 2.0).abs() < 5e-3);
        assert!((b.optimum_value - 1.40).abs() < 5e-3);
        assert!(multimodal_grad(&b.optimum_x)[0].abs() < 1e-10);
    }

    #[test]
    fn declared_optima_are_local_optima() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for id in BenchmarkId::ALL {
            let b = Benchmark::get(id);
            for _ in 0..200 {
                let x: Vec<f64> = b
                    .optimum_x
                    .iter()
                    .zip(b.lower.iter().zip(&b.upper))
                    .map(|(v, (l, u))| (v + rng.random_range(-1e-3..1e-3)).clamp(*l, *u))
                    .collect();
                let y = b.evaluate(&x).unwrap();
                assert!(!b.sense.better(y, b.optimum_value + b.sense.to_max(1e-5)), "{id} beaten at {x:?}");
            }
        }
    }

    #[test]
    fn surrogate_accuracy_range() {
        let b = Benchmark::get(BenchmarkId::SurrogateAccuracy);
        for i in 0..=20 {
            for j in 0..=20 {
                let v = b.evaluate(&[i as f64 / 20.0, j as f64 / 20.0]).unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let b = Benchmark::get(BenchmarkId::Branin);
        assert!(matches!(b.evaluate(&[11.0, 0.0]), Err(Error::OutOfBounds)));
        assert!(matches!(b.evaluate(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn regret_trace_is_monotone() {
        let b = Benchmark::get(BenchmarkId::Branin);
        let trace = b.regret_trace(&[5.0, 7.0, 1.0, 3.0, 0.397_887_357_729_738]);
        assert_eq!(trace[0], 5.0 - b.optimum_value);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*trace.last().unwrap(), 0.0);
        let g = Benchmark::get(BenchmarkId::GaussianPdf3);
        assert_eq!(g.regret_trace(&[0.5, 0.25]), vec![0.5, 0.5]);
    }

    #[test]
    fn names_round_trip() {
        for id in BenchmarkId::ALL {
            assert_eq!(BenchmarkId::from_name(id.name()).unwrap(), id);
        }
        assert_eq!(BenchmarkId::from_name("Hartmann-3").unwrap(), BenchmarkId::Hartmann3);
        assert!(BenchmarkId::from_name("rosenbrock").is_err());
    }
}
