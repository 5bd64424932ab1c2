//! Command-line front end.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsebo::bench::{Benchmark, BenchmarkId, Sense};
use sparsebo::engine::{Campaign, CampaignConfig, ModelConfig, Strategy, TellRequest};
use sparsebo::experiment::{self, ExperimentConfig, RegressionCase, RegressionConfig};
use sparsebo::gmd::{self, GmdEstimate, RssgpConfig, SmcConfig, ThompsonConfig};
use sparsebo::quasi::{halton_points, mix_seed};
use sparsebo::surrogate::Surrogate;
use sparsebo::{gp, spectrum, Dataset, KernelSpec};

use crate::api::{self, AppState, ServerConfig, Suggestion};
use crate::error::ApiError;
use crate::store::{Store, STATE_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "sparsebo", version, arg_required_else_help = true, about = "Bayesian optimization with sparse and derivative-aware Gaussian processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Benchmark experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Regression accuracy of the surrogate models on a benchmark function.
    Regress(RegressArgs),
    /// File-backed ask/tell campaigns.
    #[command(subcommand)]
    Campaign(CampaignCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Estimate the distribution of the global maximizer.
    Gmd(GmdArgs),
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Run a strategy on a benchmark for several seeds and write the regret trace.
    Run(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long = "fn")]
    pub function: String,
    #[arg(long, default_value = "standard")]
    pub strategy: String,
    /// Iterations after the initial design.
    #[arg(long, default_value_t = 40)]
    pub iters: usize,
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    /// Model configuration as a JSON object.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub early_stop: bool,
    /// Record wall-clock times (the output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long = "table1-case", value_parser = ["1d", "2d", "3d", "4d", "6d"])]
    pub case: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CampaignCommand {
    /// Create a campaign file.
    New(NewArgs),
    /// Commit and print the next suggestion.
    Ask(FileArg),
    /// Record an observation.
    Tell(TellArgs),
    /// Print a summary of the campaign.
    Status(FileArg),
}

#[derive(Debug, Args)]
pub struct FileArg {
    #[arg(long)]
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct NewArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// Box bounds such as `0:1,-5:5`.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: String,
    #[arg(long, default_value = "standard")]
    pub strategy: String,
    #[arg(long, value_enum, default_value_t = SenseArg::Maximize)]
    pub sense: SenseArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub id: Option<String>,
    /// Model configuration as a JSON object.
    #[arg(long)]
    pub config: Option<String>,
    /// Replace an existing file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SenseArg {
    Maximize,
    Minimize,
}

#[derive(Debug, Args)]
pub struct TellArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub y: f64,
    /// Evaluated point; defaults to the pending suggestion.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub grad: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub noise_var: f64,
    /// Record a point that was not suggested.
    #[arg(long)]
    pub out_of_band: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Campaign directory; defaults to the environment variable or `./sparsebo-state`.
    #[arg(long, env = STATE_DIR_ENV)]
    pub state_dir: Option<PathBuf>,
    /// How long ask waits before answering 202 with a poll token.
    #[arg(long, default_value_t = 2000)]
    pub ask_wait_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GmdMethodArg {
    Ts,
    Smc,
    Ei,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GmdModel {
    Full,
    Ssgp,
    Rssgp,
}

#[derive(Debug, Args)]
pub struct GmdArgs {
    #[arg(long, value_enum)]
    pub method: GmdMethodArg,
    #[arg(long, value_enum, default_value_t = GmdModel::Full)]
    pub model: GmdModel,
    #[arg(long = "fn", default_value = "sinc")]
    pub function: String,
    #[arg(long, default_value_t = 10)]
    pub observations: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lengthscale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub signal_variance: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 30)]
    pub frequencies: usize,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Bench(BenchCommand::Run(args)) => bench(args),
        Command::Regress(args) => regress(args),
        Command::Campaign(cmd) => campaign(cmd),
        Command::Serve(args) => serve(args),
        Command::Gmd(args) => gmd_command(args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn model_config(base: ModelConfig, json: Option<&str>) -> CliResult<ModelConfig> {
    let Some(json) = json else { return Ok(base) };
    let mut value = serde_json::to_value(&base)?;
    let patch: serde_json::Value = serde_json::from_str(json)?;
    let serde_json::Value::Object(patch) = patch else {
        return Err("--config must be a JSON object".into());
    };
    for (k, v) in patch {
        value[k] = v;
    }
    Ok(serde_json::from_value(value)?)
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let id = BenchmarkId::from_name(&args.function)?;
    let strategy = Strategy::from_name(&args.strategy)?;
    let seeds = (args.first_seed..args.first_seed + args.seeds).collect();
    let mut cfg = ExperimentConfig::new(id, strategy, args.iters, seeds);
    cfg.model_config = model_config(cfg.model_config, args.config.as_deref())?;
    cfg.early_stop = args.early_stop;
    cfg.timing = args.timing;
    log::info!("running {} on {} ({})", strategy.name(), id.name(), cfg.digest());
    let traces = experiment::run_experiment(&cfg);
    for t in &traces {
        if let Some(e) = &t.error {
            log::warn!("seed {} stopped early: {e}", t.seed);
        }
    }
    emit(args.out.as_deref(), &experiment::regret_csv(&traces)?)
}

fn regress(args: RegressArgs) -> CliResult<()> {
    let cfg = RegressionConfig {
        case: RegressionCase::from_name(&args.case)?,
        trials: args.trials,
        seed: args.seed,
        ..RegressionConfig::default()
    };
    let records = experiment::run_regression(&cfg)?;
    for (model, mse) in experiment::median_mse(&records, &cfg.models) {
        eprintln!("{:<16} median mse {mse:.6e}", model.name());
    }
    emit(args.out.as_deref(), &experiment::mse_csv(&records, args.timing)?)
}

fn parse_floats(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("cannot parse {what} value {v:?}").into()))
        .collect()
}

fn parse_bounds(text: &str) -> CliResult<Vec<[f64; 2]>> {
    text.split(',')
        .map(|pair| {
            let (l, u) = pair.split_once(':').ok_or_else(|| format!("bound {pair:?} is not lower:upper"))?;
            Ok([l.trim().parse::<f64>()?, u.trim().parse::<f64>()?])
        })
        .collect()
}

fn read_campaign(path: &Path) -> Result<Campaign, ApiError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ApiError::new(crate::ErrorCode::NotFound, "", format!("no campaign file at {}", path.display()))
        } else {
            ApiError::internal("", e)
        }
    })?;
    Campaign::load(&text).map_err(|e| ApiError::from_engine("", e))
}

fn write_campaign(path: &Path, campaign: &Campaign) -> CliResult<()> {
    let text = campaign.save()?;
    let name = path.file_name().ok_or("campaign path has no file name")?.to_string_lossy().into_owned();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn campaign(cmd: CampaignCommand) -> CliResult<()> {
    match cmd {
        CampaignCommand::New(args) => {
            if args.file.exists() && !args.force {
                return Err(ApiError::conflict("", format!("{} already exists", args.file.display())).into());
            }
            let sense = match args.sense {
                SenseArg::Maximize => Sense::Maximize,
                SenseArg::Minimize => Sense::Minimize,
            };
            let mut cfg = CampaignConfig::new(parse_bounds(&args.bounds)?, sense, Strategy::from_name(&args.strategy)?, args.seed);
            cfg.id = args.id;
            cfg.model_config = model_config(cfg.model_config, args.config.as_deref())?;
            let c = Campaign::new(cfg).map_err(|e| ApiError::from_engine("", e))?;
            write_campaign(&args.file, &c)?;
            print_json(&c.status())
        }
        CampaignCommand::Ask(args) => {
            let mut c = read_campaign(&args.file)?;
            let proposal = c.ask().map_err(|e| ApiError::from_engine(&c.id, e))?;
            write_campaign(&args.file, &c)?;
            let suggestion = Suggestion::new(&c.id, proposal);
            if let Some(w) = &suggestion.warning {
                eprintln!("warning: {w}");
            }
            print_json(&suggestion)
        }
        CampaignCommand::Tell(args) => {
            let mut c = read_campaign(&args.file)?;
            let x = match &args.x {
                Some(text) => parse_floats(text, "x")?,
                None => c
                    .pending()
                    .map(|p| p.point.clone())
                    .ok_or_else(|| ApiError::conflict(&c.id, "no pending suggestion; pass --x with --out-of-band"))?,
            };
            let mut req = TellRequest::new(x, args.y);
            req.grad = args.grad.as_deref().map(|g| parse_floats(g, "grad")).transpose()?;
            req.noise_var = args.noise_var;
            req.out_of_band = args.out_of_band;
            c.tell(req).map_err(|e| ApiError::from_engine(&c.id, e))?;
            write_campaign(&args.file, &c)?;
            print_json(&c.status())
        }
        CampaignCommand::Status(args) => print_json(&read_campaign(&args.file)?.status()),
    }
}

fn serve(args: ServeArgs) -> CliResult<()> {
    let dir = args.state_dir.unwrap_or_else(|| PathBuf::from("sparsebo-state"));
    let store = Store::open(&dir)?;
    let state = AppState::new(
        store,
        ServerConfig {
            ask_wait: Duration::from_millis(args.ask_wait_ms),
        },
    );
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr).await?;
        log::info!("listening on {} with state in {}", listener.local_addr()?, dir.display());
        api::serve(listener, state).await
    })?;
    Ok(())
}

fn gmd_data(bench: &Benchmark, n: usize, noise_var: f64, seed: u64) -> CliResult<Dataset> {
    let d = bench.dim();
    let shift: Vec<f64> = (0..d).map(|g| (mix_seed(seed, 1, g as u64) >> 11) as f64 / (1u64 << 53) as f64).collect();
    let xs: Vec<Vec<f64>> = halton_points(n, d, Some(&shift))
        .into_iter()
        .map(|u| u.iter().enumerate().map(|(g, v)| bench.lower[g] + v * (bench.upper[g] - bench.lower[g])).collect())
        .collect();
    let ys = xs.iter().map(|x| bench.evaluate(x).map(|y| bench.sense.to_max(y))).collect::<sparsebo::Result<_>>()?;
    Ok(Dataset::new(xs, ys, noise_var)?)
}

fn estimate<S: Surrogate + ?Sized>(post: &S, data: &Dataset, lo: &[f64], hi: &[f64], args: &GmdArgs, thompson: impl FnOnce() -> CliResult<GmdEstimate>) -> CliResult<GmdEstimate> {
    Ok(match args.method {
        GmdMethodArg::Ts => thompson()?,
        GmdMethodArg::Smc => gmd::gmd_smc(post, lo, hi, &SmcConfig::default(), args.seed)?,
        GmdMethodArg::Ei => {
            let best = data.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            gmd::gmd_ei_proxy(post, lo, hi, best, RssgpConfig::default().ei_grid)?
        }
    })
}

fn gmd_command(args: GmdArgs) -> CliResult<()> {
    let bench = Benchmark::by_name(&args.function)?;
    let (lo, hi) = (bench.lower.clone(), bench.upper.clone());
    let data = gmd_data(&bench, args.observations, args.noise_var, args.seed)?;
    let spec = KernelSpec::se(bench.dim(), args.lengthscale, args.signal_variance);
    let thompson = ThompsonConfig {
        samples: args.samples,
        ..ThompsonConfig::default()
    };
    let est = match args.model {
        GmdModel::Full => {
            let post = gp::fit(&spec, &data)?;
            let grid = match bench.dim() {
                1 => 401,
                2 => 50,
                3 => 12,
                d => return Err(format!("the full model supports at most 3 dimensions, {} has {d}", bench.name()).into()),
            };
            estimate(&post, &data, &lo, &hi, &args, || Ok(gmd::gmd_grid_thompson(&post, &lo, &hi, grid, args.samples, args.seed)?))?
        }
        GmdModel::Ssgp | GmdModel::Rssgp => {
            let basis = spectrum::sample_frequencies_se(&spec, args.frequencies, args.noise_var, args.seed)?;
            let post = if args.model == GmdModel::Ssgp {
                let fitted = spectrum::optimize_frequencies(&basis, &data, &Default::default())?;
                spectrum::fit_ssgp(&fitted.basis, &data)?
            } else {
                let cfg = RssgpConfig {
                    lambda: args.lambda,
                    ..RssgpConfig::default()
                };
                gmd::fit_rssgp(&basis, &data, &lo, &hi, &cfg, args.seed)?.posterior
            };
            estimate(&post, &data, &lo, &hi, &args, || Ok(gmd::gmd_thompson(&post, &lo, &hi, &thompson, args.seed)?))?
        }
    };
    eprintln!("entropy {:.6} nats over {} bins{}", est.entropy, est.pmf.len(), if est.degenerate { " (degenerate)" } else { "" });
    emit(args.out.as_deref(), &gmd_csv(&est, bench.dim()))
}

pub fn gmd_csv(est: &GmdEstimate, dim: usize) -> String {
    let mut out = String::from("bin");
    for g in 0..dim {
        out.push_str(&format!(",x{g}"));
    }
    out.push_str(",probability\n");
    for (i, (x, p)) in est.support.iter().zip(&est.pmf).enumerate() {
        out.push_str(&i.to_string());
        for v in x {
            out.push_str(&format!(",{v:?}"));
        }
        out.push_str(&format!(",{p:?}\n"));
    }
    out
}
