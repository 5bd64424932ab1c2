//! Batch experiments: the optimization loop over many seeds, the
//! surrogate-accuracy regression protocol, and their CSV output.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{Benchmark, BenchmarkId};
use crate::data::{Dataset, GradientObs};
use crate::engine::{Campaign, CampaignConfig, ModelConfig, Strategy, TellRequest};
use crate::error::{Error, Result};
use crate::fic::{self, InducingMode};
use crate::gp;
use crate::gpd;
use crate::kernel::KernelSpec;
use crate::quasi::mix_seed;

pub const CSV_HEADER: &str = "iter,seed,metric,value,wallclock_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkId,
    pub strategy: Strategy,
    /// Iterations after the initial design.
    pub iterations: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model_config: ModelConfig,
    /// Stop a seed once its regret is within 10% of the optimum's magnitude.
    #[serde(default)]
    pub early_stop: bool,
    /// Record wall-clock times; off keeps the CSV byte-reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(benchmark: BenchmarkId, strategy: Strategy, iterations: usize, seeds: Vec<u64>) -> Self {
        Self {
            benchmark,
            strategy,
            iterations,
            seeds,
            model_config: ModelConfig {
                standardize: false,
                ..ModelConfig::default()
            },
            early_stop: false,
            timing: false,
        }
    }

    /// Short hash of the configuration.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub seed: u64,
    /// Simple regret after the initial design (index 0) and each iteration.
    pub regret: Vec<f64>,
    pub wallclock_ms: Vec<u64>,
    pub digest: String,
    /// Iterations actually run before an early stop; the trace is padded
    /// with the final regret.
    pub stopped_at: Option<usize>,
    pub error: Option<String>,
}

/// Runs one seed of the optimization loop.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> RegretTrace {
    let bench = Benchmark::get(cfg.benchmark);
    let digest = cfg.digest();
    let mut regret = Vec::with_capacity(cfg.iterations + 1);
    let mut wallclock = Vec::with_capacity(cfg.iterations + 1);
    let start = Instant::now();
    let mut stopped_at = None;
    let outcome = (|| -> Result<()> {
        let mut c = Campaign::new(CampaignConfig::for_benchmark(&bench, cfg.strategy, cfg.model_config.clone(), seed))?;
        let n_init = c.n_init().max(1);
        let gradients = cfg.strategy.consumes_gradients(&cfg.model_config);
        for step in 0..n_init + cfg.iterations {
            let p = c.ask()?;
            let y = bench.evaluate(&p.point)?;
            let mut req = TellRequest::new(p.point.clone(), y);
            if gradients {
                req = req.with_gradient(bench.gradient(&p.point)?);
            }
            c.tell(req)?;
            if step + 1 >= n_init {
                let r = *c.regret_trace().and_then(|t| t.last().copied()).as_ref().unwrap_or(&f64::NAN);
                regret.push(r);
                wallclock.push(if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 });
                let done = regret.len() - 1;
                if cfg.early_stop && done < cfg.iterations && r <= 0.1 * bench.optimum_value.abs() {
                    stopped_at = Some(done);
                    break;
                }
            }
        }
        Ok(())
    })();
    if let (Some(&last), Some(&t)) = (regret.last(), wallclock.last()) {
        while stopped_at.is_some() && regret.len() < cfg.iterations + 1 {
            regret.push(last);
            wallclock.push(t);
        }
    }
    RegretTrace {
        seed,
        regret,
        wallclock_ms: wallclock,
        digest,
        stopped_at,
        error: outcome.err().map(|e| e.to_string()),
    }
}

/// Runs every seed (in parallel); results are in seed order. A failing
/// seed is recorded in its trace and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<RegretTrace> {
    cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    iter: usize,
    seed: u64,
    metric: &'a str,
    value: f64,
    wallclock_ms: u64,
}

fn write_rows<'a>(rows: impl Iterator<Item = CsvRow<'a>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut any = false;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
        any = true;
    }
    let mut bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    if !any {
        bytes = format!("{CSV_HEADER}\n").into_bytes();
    }
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// One `regret` row per iteration and seed; a failed seed adds an `error`
/// row whose value is the number of completed iterations.
pub fn regret_csv(traces: &[RegretTrace]) -> Result<String> {
    write_rows(traces.iter().flat_map(|t| {
        let rows = t.regret.iter().zip(&t.wallclock_ms).enumerate().map(move |(i, (r, w))| CsvRow {
            iter: i,
            seed: t.seed,
            metric: "regret",
            value: *r,
            wallclock_ms: *w,
        });
        let err = t.error.as_ref().map(|_| CsvRow {
            iter: t.regret.len(),
            seed: t.seed,
            metric: "error",
            value: t.regret.len() as f64,
            wallclock_ms: t.wallclock_ms.last().copied().unwrap_or(0),
        });
        rows.chain(err)
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iter: usize,
    pub median: f64,
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-iteration median, mean and standard error over the successful seeds.
pub fn summarize(traces: &[RegretTrace]) -> Vec<Summary> {
    let len = traces.iter().map(|t| t.regret.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = traces
                .iter()
                .filter(|t| t.error.is_none())
                .filter_map(|t| t.regret.get(i).copied())
                .collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n.max(1) as f64;
            let var = if n > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            Summary {
                iter: i,
                median: median(&vals),
                mean,
                std_error: (var / n.max(1) as f64).sqrt(),
                n,
            }
        })
        .collect()
}

/// Rows of one regression case: dimension, function and training sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionCase {
    #[serde(rename = "1d")]
    D1,
    #[serde(rename = "2d")]
    D2,
    #[serde(rename = "3d")]
    D3,
    #[serde(rename = "4d")]
    D4,
    #[serde(rename = "6d")]
    D6,
}

impl RegressionCase {
    pub fn from_name(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_ascii_lowercase()))
            .map_err(|_| Error::InvalidArgument(format!("unknown regression case `{name}` (1d, 2d, 3d, 4d, 6d)")))
    }

    pub fn benchmark(self) -> BenchmarkId {
        match self {
            RegressionCase::D1 => BenchmarkId::Multimodal1d,
            RegressionCase::D2 => BenchmarkId::Branin,
            RegressionCase::D3 => BenchmarkId::Hartmann3,
            RegressionCase::D4 => BenchmarkId::Hartmann4,
            RegressionCase::D6 => BenchmarkId::Hartmann6,
        }
    }

    /// Function observations and test points; every training input also
    /// carries a full gradient.
    pub fn sizes(self) -> (usize, usize) {
        match self {
            RegressionCase::D1 => (30, 450),
            RegressionCase::D2 | RegressionCase::D3 => (200, 800),
            RegressionCase::D4 | RegressionCase::D6 => (300, 900),
        }
    }

    /// Default inducing fraction for the sparse models.
    pub fn inducing_fraction(self) -> f64 {
        match self {
            RegressionCase::D1 | RegressionCase::D2 => 0.7,
            _ => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionModel {
    /// Exact GP on values.
    StdGp,
    /// Sparse GP on values, random inducing subset.
    Sgp,
    /// Sparse GP with derivatives, random inducing subset.
    SgpdRandom,
    /// Sparse GP with derivatives, optimized inducing subset.
    SgpdOptimal,
    /// Sparse GP with derivatives, every input inducing.
    SgpdFull,
    /// Exact GP on values and derivatives.
    Gpd,
}

impl RegressionModel {
    pub const ALL: [RegressionModel; 6] = [
        RegressionModel::StdGp,
        RegressionModel::Sgp,
        RegressionModel::SgpdRandom,
        RegressionModel::SgpdOptimal,
        RegressionModel::SgpdFull,
        RegressionModel::Gpd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressionModel::StdGp => "std_gp",
            RegressionModel::Sgp => "sgp",
            RegressionModel::SgpdRandom => "sgpd_random",
            RegressionModel::SgpdOptimal => "sgpd_optimal",
            RegressionModel::SgpdFull => "sgpd_full",
            RegressionModel::Gpd => "gpd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    pub case: RegressionCase,
    pub trials: usize,
    /// Random subsets averaged per trial for the random-subset models.
    pub subset_repeats: usize,
    pub models: Vec<RegressionModel>,
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_var: f64,
    pub derivative_noise: f64,
    pub inducing_fraction: Option<f64>,
    pub inducing_budget: usize,
    /// Corrupt training values and gradients with noise of the model's variances.
    pub noisy_observations: bool,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            case: RegressionCase::D1,
            trials: 50,
            subset_repeats: 50,
            models: RegressionModel::ALL.to_vec(),
            lengthscale: 0.8,
            signal_variance: 1.0,
            noise_var: 1e-4,
            derivative_noise: 1e-4,
            inducing_fraction: None,
            inducing_budget: 200,
            noisy_observations: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub trial: usize,
    pub seed: u64,
    pub model: RegressionModel,
    pub mse: f64,
    pub wallclock_ms: u64,
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, bench: &Benchmark) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| bench.lower.iter().zip(&bench.upper).map(|(l, u)| rng.random_range(*l..=*u)).collect())
        .collect()
}

/// Training data (values and gradients at every input) and test set of
/// one regression trial.
pub fn regression_trial_data(cfg: &RegressionConfig, seed: u64) -> Result<(Dataset, Vec<Vec<f64>>, Vec<f64>)> {
    let bench = Benchmark::get(cfg.case.benchmark());
    let (t, n_test) = cfg.case.sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = random_points(&mut rng, t, &bench);
    let test = random_points(&mut rng, n_test, &bench);
    let (sv, sd) = if cfg.noisy_observations {
        (cfg.noise_var.sqrt(), cfg.derivative_noise.sqrt())
    } else {
        (0.0, 0.0)
    };
    let mut noise = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let ys = xs.iter().map(|x| Ok(bench.evaluate(x)? + noise(sv))).collect::<Result<Vec<_>>>()?;
    let mut data = Dataset::new(xs.clone(), ys, cfg.noise_var)?;
    data.gradients = xs
        .iter()
        .map(|x| {
            Ok(GradientObs {
                point: x.clone(),
                gradient: bench.gradient(x)?.into_iter().map(|g| g + noise(sd)).collect(),
                noise_var: cfg.derivative_noise,
            })
        })
        .collect::<Result<_>>()?;
    let truth = test.iter().map(|x| bench.evaluate(x)).collect::<Result<Vec<_>>>()?;
    Ok((data, test, truth))
}

fn mse_of(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Test-set MSE of one model on one trial.
pub fn regression_mse(cfg: &RegressionConfig, model: RegressionModel, data: &Dataset, test: &[Vec<f64>], truth: &[f64], seed: u64) -> Result<f64> {
    let d = data.dim();
    let spec = KernelSpec::se(d, cfg.lengthscale, cfg.signal_variance);
    let t = data.len();
    let m = ((cfg.inducing_fraction.unwrap_or(cfg.case.inducing_fraction()) * t as f64).round() as usize).clamp(1, t);
    let means = |p: &dyn Fn(&[f64]) -> Result<f64>| test.iter().map(|x| p(x)).collect::<Result<Vec<f64>>>();
    let sparse = |data: &Dataset, mode: InducingMode, m: usize, s: u64| -> Result<f64> {
        let ind = fic::select_inducing(&spec, data, m, mode, cfg.inducing_budget, s)?;
        let post = fic::fit_sgpd(&spec, data, &ind)?;
        Ok(mse_of(&means(&|x| post.predict(x).map(|p| p.mean))?, truth))
    };
    let averaged = |data: &Dataset| -> Result<f64> {
        let reps = cfg.subset_repeats.max(1);
        let total = (0..reps)
            .map(|r| sparse(data, InducingMode::RandomSubset, m, mix_seed(seed, 20, r as u64)))
            .sum::<Result<f64>>()?;
        Ok(total / reps as f64)
    };
    match model {
        RegressionModel::StdGp => {
            let post = gp::fit(&spec, &data.values_only())?;
            Ok(mse_of(&means(&|x| post.predict(x).map(|p| p.mean))?, truth))
        }
        RegressionModel::Gpd => {
            let post = gpd::fit_gpd(&spec, data)?;
            Ok(mse_of(&means(&|x| post.predict(x).map(|p| p.mean))?, truth))
        }
        RegressionModel::Sgp => averaged(&data.values_only()),
        RegressionModel::SgpdRandom => averaged(data),
        RegressionModel::SgpdOptimal => sparse(data, InducingMode::Optimized, m, mix_seed(seed, 21, 0)),
        RegressionModel::SgpdFull => sparse(data, InducingMode::AllTrainingInputs, t, 0),
    }
}

/// Runs every trial and model of a regression case.
pub fn run_regression(cfg: &RegressionConfig) -> Result<Vec<MseRecord>> {
    let per_trial: Vec<Result<Vec<MseRecord>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = mix_seed(cfg.seed, 30, trial as u64);
            let (data, test, truth) = regression_trial_data(cfg, seed)?;
            cfg.models
                .iter()
                .map(|&model| {
                    let start = Instant::now();
                    let mse = regression_mse(cfg, model, &data, &test, &truth, seed)?;
                    Ok(MseRecord {
                        trial,
                        seed,
                        model,
                        mse,
                        wallclock_ms: start.elapsed().as_millis() as u64,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Median MSE of each model across trials, in the order of `models`.
pub fn median_mse(records: &[MseRecord], models: &[RegressionModel]) -> Vec<(RegressionModel, f64)> {
    models
        .iter()
        .map(|m| {
            let v: Vec<f64> = records.iter().filter(|r| r.model == *m).map(|r| r.mse).collect();
            (*m, median(&v))
        })
        .collect()
}

/// One row per trial and model with `metric` set to `mse_<model>`; the
/// wall-clock column is zero unless `timing` is set.
pub fn mse_csv(records: &[MseRecord], timing: bool) -> Result<String> {
    let names: Vec<String> = records.iter().map(|r| format!("mse_{}", r.model.name())).collect();
    write_rows(records.iter().zip(&names).map(|(r, n)| CsvRow {
        iter: r.trial,
        seed: r.seed,
        metric: n,
        value: r.mse,
        wallclock_ms: if timing { r.wallclock_ms } else { 0 },
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(strategy: Strategy, iterations: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(BenchmarkId::Branin, strategy, iterations, vec![1, 2]);
        cfg.model_config.direct_budget = 200;
        cfg
    }

    #[test]
    fn zero_iterations_gives_initial_regret_only() {
        let cfg = quick(Strategy::StandardBo, 0);
        let traces = run_experiment(&cfg);
        for t in &traces {
            assert_eq!(t.regret.len(), 1);
            assert!(t.error.is_none());
        }
        let csv = regret_csv(&traces).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn initial_regret_matches_initial_design() {
        let cfg = quick(Strategy::StandardBo, 2);
        let t = run_seed(&cfg, 5);
        let bench = Benchmark::get(BenchmarkId::Branin);
        let mut c = Campaign::new(CampaignConfig::for_benchmark(&bench, cfg.strategy, cfg.model_config.clone(), 5)).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let p = c.ask().unwrap();
            let y = bench.evaluate(&p.point).unwrap();
            best = best.min(y);
            c.tell(TellRequest::new(p.point, y)).unwrap();
        }
        assert_eq!(t.regret[0], best - bench.optimum_value);
        assert!(t.regret.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn csv_is_reproducible() {
        let cfg = quick(Strategy::Bodmm, 3);
        let a = regret_csv(&run_experiment(&cfg)).unwrap();
        let b = regret_csv(&run_experiment(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded() {
        let mut cfg = quick(Strategy::StandardBo, 2);
        cfg.model_config.noise_var = -1.0;
        let traces = run_experiment(&cfg);
        assert!(traces.iter().all(|t| t.error.is_some()));
        let csv = regret_csv(&traces).unwrap();
        assert!(csv.contains(",error,"));
    }

    #[test]
    fn summary_statistics() {
        let mk = |seed, regret: Vec<f64>| RegretTrace {
            seed,
            wallclock_ms: vec![0; regret.len()],
            regret,
            digest: String::new(),
            stopped_at: None,
            error: None,
        };
        let s = summarize(&[mk(0, vec![3.0, 1.0]), mk(1, vec![1.0, 1.0]), mk(2, vec![2.0, 1.0])]);
        assert_eq!(s[0].median, 2.0);
        assert!((s[0].std_error - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s[1].std_error, 0.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn regression_trial_shapes() {
        let cfg = RegressionConfig {
            trials: 2,
            subset_repeats: 2,
            inducing_budget: 20,
            ..Default::default()
        };
        let recs = run_regression(&cfg).unwrap();
        assert_eq!(recs.len(), 2 * RegressionModel::ALL.len());
        assert!(recs.iter().all(|r| r.mse.is_finite() && r.mse >= 0.0));
        let csv = mse_csv(&recs, false).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.contains("mse_gpd"));
        assert_eq!(RegressionCase::from_name("6D").unwrap(), RegressionCase::D6);
    }
}
