use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use walsh_net::anova::check_ordering;
use walsh_net::base_p::PrimeBase;
use walsh_net::dual::coset_representatives;
use walsh_net::error::WalshError;
use walsh_net::fwt::{fwt, ifwt, SampleVector, SpectralVector};
use walsh_net::io::{self, VectorData};
use walsh_net::kernel::KernelParams;
use walsh_net::net::{sobol_matrices, GeneratingMatrices, TValue, DEFAULT_POINT_CAP, DEFAULT_SOBOL_ROWS, JOE_KUO_DIRECTIONS};
use walsh_net::param_opt::{OptimizeOutcome, OptimizerConfig};
use walsh_net::pipeline::{analyze, optimize};
use walsh_net::spline::SplineModel;
use walsh_net::test_functions::{asian_payoff, multiplicative_eval, sample_on_net, AMode, AsianOptionSpec, MultiplicativeSpec};

mod meta;

use meta::Metadata;

#[derive(Parser, Serialize)]
#[command(name = "walsh-net", version, about = "Walsh transforms, spline interpolation and effective dimensions on digital nets")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    #[serde(skip)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Build generating matrices and optionally write the points
    Net(NetCmd),
    /// Forward (or inverse) fast Walsh transform of a vector file
    Transform(TransformCmd),
    /// Evaluate a fitted spline at query points
    Interp(InterpCmd),
    /// Fit a spline and report variances and effective dimensions
    Effdim(EffdimCmd),
    /// Choose kernel parameters by the nested holdout cost
    Optimize(OptimizeCmd),
}

#[derive(Args, Serialize, Clone)]
struct NetSource {
    /// Generating-matrix JSON file
    #[arg(long, conflicts_with_all = ["directions", "identity"])]
    net: Option<PathBuf>,
    /// Dimension
    #[arg(long)]
    s: Option<usize>,
    /// Points are p^m
    #[arg(long)]
    m: Option<usize>,
    /// Output digits per coordinate
    #[arg(long, default_value_t = DEFAULT_SOBOL_ROWS)]
    rows: usize,
    /// Direction-number file (default: bundled Joe-Kuo table)
    #[arg(long)]
    directions: Option<PathBuf>,
    /// Use identity matrices in base --p instead of Sobol
    #[arg(long)]
    identity: bool,
    /// Base for --identity
    #[arg(long, default_value_t = 2)]
    p: u32,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FunctionKind {
    Multiplicative,
    Asian,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AModeArg {
    Ones,
    Linear,
    Quadratic,
}

impl From<AModeArg> for AMode {
    fn from(a: AModeArg) -> AMode {
        match a {
            AModeArg::Ones => AMode::Ones,
            AModeArg::Linear => AMode::Linear,
            AModeArg::Quadratic => AMode::Quadratic,
        }
    }
}

#[derive(Args, Serialize, Clone)]
struct DataSource {
    /// Pre-sampled values in net order (vector CSV or raw file)
    #[arg(long, conflicts_with = "function")]
    data: Option<PathBuf>,
    /// Built-in function evaluated on the net
    #[arg(long, value_enum)]
    function: Option<FunctionKind>,
    /// Multiplicative weights a_k = 1, k or k^2
    #[arg(long, value_enum, default_value = "quadratic")]
    a_mode: AModeArg,
    /// Asian option spot price
    #[arg(long = "S0", default_value_t = 100.0)]
    s0: f64,
    /// Asian option strike
    #[arg(long = "K", default_value_t = 100.0)]
    strike: f64,
    /// Asian option volatility
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Asian option risk-free rate
    #[arg(long = "r", default_value_t = 0.1)]
    rate: f64,
    /// Asian option maturity in years
    #[arg(long = "T", default_value_t = 1.0)]
    maturity: f64,
    /// Include S0 in the Asian average
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    include_s0: bool,
}

#[derive(Args, Serialize, Clone)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Seed for the restart perturbation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    cost_tolerance: f64,
}

impl OptimizerArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig { max_iters: self.max_iters, restarts: self.restarts, seed: self.seed, cost_tolerance: self.cost_tolerance, ..Default::default() }
    }
}

#[derive(Args, Serialize)]
struct NetCmd {
    #[command(flatten)]
    source: NetSource,
    /// Write the matrices here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the point coordinates as CSV
    #[arg(long)]
    points: Option<PathBuf>,
    /// Compute the t-value (printed on stderr)
    #[arg(long)]
    t_value: bool,
    /// Rank computations allowed for --t-value
    #[arg(long, default_value_t = 1_000_000)]
    t_cap: u64,
    /// Write minimal coset representatives as CSV
    #[arg(long)]
    representatives: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    nu_budget: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum VectorFormat {
    Csv,
    Raw,
}

#[derive(Args, Serialize)]
struct TransformCmd {
    /// Vector file (CSV or raw, detected from its header)
    #[arg(long)]
    input: PathBuf,
    /// Inverse transform (spectral to samples)
    #[arg(long)]
    inverse: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: VectorFormat,
}

#[derive(Args, Serialize)]
struct InterpCmd {
    /// Model JSON written by --save-model
    #[arg(long, conflicts_with_all = ["params", "net", "data", "function"])]
    model: Option<PathBuf>,
    #[command(flatten)]
    source: NetSource,
    #[command(flatten)]
    data: DataSource,
    /// Kernel params JSON used to fit when no model is given
    #[arg(long)]
    params: Option<PathBuf>,
    /// Query points CSV with a header row
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EffdimCmd {
    #[command(flatten)]
    source: NetSource,
    #[command(flatten)]
    data: DataSource,
    /// Kernel params JSON
    #[arg(long, conflicts_with = "optimize", required_unless_present = "optimize")]
    params: Option<PathBuf>,
    /// Optimize params on the nested holdout first
    #[arg(long)]
    optimize: bool,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, default_value_t = walsh_net::anova::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Report JSON path (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Truncation and superposition curves as CSV
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OptimizeCmd {
    #[command(flatten)]
    source: NetSource,
    #[command(flatten)]
    data: DataSource,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Params JSON path (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes `text` to `path`, or to stdout without one.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Metadata for non-JSON outputs: a `.meta.json` sidecar next to a file, or stderr.
fn emit_sidecar(path: Option<&Path>, meta: &Metadata) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    match path {
        Some(p) => {
            let mut side = p.as_os_str().to_owned();
            side.push(".meta.json");
            std::fs::write(PathBuf::from(side), text + "\n")?;
        }
        None => eprintln!("metadata: {}", serde_json::to_string(meta)?),
    }
    Ok(())
}

fn load_net(src: &NetSource, meta: &mut Metadata) -> Result<GeneratingMatrices> {
    if let Some(path) = &src.net {
        let net = io::net_from_json(std::str::from_utf8(&meta.read_input("net", path)?)?)?;
        meta.direction_numbers = "from net file".into();
        if let Some(s) = src.s {
            if s != net.s() {
                return Err(WalshError::DimensionMismatch { expected: net.s(), found: s }.into());
            }
        }
        return Ok(net);
    }
    let (Some(s), Some(m)) = (src.s, src.m) else { bail!(WalshError::InvalidParams("give --net FILE or both --s and --m".into())) };
    if src.identity {
        meta.direction_numbers = "identity".into();
        return Ok(GeneratingMatrices::identity(PrimeBase::new(src.p)?, m, src.rows.max(m), s)?);
    }
    let text = match &src.directions {
        Some(path) => {
            meta.direction_numbers = path.display().to_string();
            String::from_utf8(meta.read_input("directions", path)?)?
        }
        None => JOE_KUO_DIRECTIONS.to_string(),
    };
    Ok(sobol_matrices(&text, s, m, src.rows)?)
}

fn read_vector(bytes: &[u8]) -> Result<VectorData> {
    Ok(if bytes.starts_with(b"WALSHVEC") { io::read_vector_raw(bytes)? } else { io::read_vector_csv(bytes)? })
}

fn load_samples(net: &GeneratingMatrices, data: &DataSource, meta: &mut Metadata) -> Result<SampleVector> {
    if let Some(path) = &data.data {
        let v = read_vector(&meta.read_input("data", path)?)?;
        if v.p != net.base() {
            return Err(WalshError::BaseMismatch { left: v.p.get(), right: net.base().get() }.into());
        }
        if v.values.len() != net.len() {
            return Err(WalshError::DimensionMismatch { expected: net.len(), found: v.values.len() }.into());
        }
        return Ok(SampleVector::new(v.p, v.values)?);
    }
    let s = net.s();
    let fvals = match data.function {
        Some(FunctionKind::Multiplicative) => {
            let spec = MultiplicativeSpec::new(s, data.a_mode.into())?;
            sample_on_net(net, |x| multiplicative_eval(&spec, x))?
        }
        Some(FunctionKind::Asian) => {
            let spec = AsianOptionSpec { s, s0: data.s0, strike: data.strike, sigma: data.sigma, rate: data.rate, maturity: data.maturity, include_s0: data.include_s0 };
            spec.validate()?;
            sample_on_net(net, |x| asian_payoff(&spec, x))?
        }
        None => bail!(WalshError::InvalidParams("give --data FILE or --function".into())),
    };
    Ok(fvals)
}

fn load_params(path: &Path, meta: &mut Metadata) -> Result<KernelParams> {
    Ok(io::params_from_json(std::str::from_utf8(&meta.read_input("params", path)?)?)?)
}

fn write_trace(path: &Path, outcome: &OptimizeOutcome) -> Result<()> {
    io::write_trace_csv(outcome, create(path)?)?;
    Ok(())
}

fn cmd_net(cmd: &NetCmd, mut meta: Metadata) -> Result<()> {
    let net = load_net(&cmd.source, &mut meta)?;
    info!("net: p = {}, m = {}, r = {}, s = {}", net.base().get(), net.m(), net.r(), net.s());
    if cmd.t_value {
        match net.t_value(cmd.t_cap) {
            TValue::Value(t) => eprintln!("t-value: {t}"),
            TValue::ExceedsCap => eprintln!("t-value: exceeds cap {}", cmd.t_cap),
        }
    }
    if let Some(path) = &cmd.points {
        let pts: Vec<Vec<f64>> = net.net_points(DEFAULT_POINT_CAP)?.into_iter().map(|p| p.coords).collect();
        io::write_points_csv(&pts, net.s(), create(path)?)?;
    }
    if let Some(path) = &cmd.representatives {
        let reps = coset_representatives(&net, cmd.nu_budget, 10_000_000)?;
        std::fs::write(path, reps.to_csv())?;
    }
    emit(cmd.out.as_deref(), &meta.attach(&io::net_to_json(&net)?, false)?)
}

fn cmd_transform(cmd: &TransformCmd, mut meta: Metadata) -> Result<()> {
    let v = read_vector(&meta.read_input("input", &cmd.input)?)?;
    let p = v.p;
    let values = if cmd.inverse { ifwt(&SpectralVector::new(p, v.values)?).into_values() } else { fwt(&SampleVector::new(p, v.values)?).into_values() };
    let out = VectorData { p, values };
    match (&cmd.output, cmd.format) {
        (Some(path), VectorFormat::Csv) => io::write_vector_csv(&out, create(path)?)?,
        (Some(path), VectorFormat::Raw) => io::write_vector_raw(&out, create(path)?)?,
        (None, VectorFormat::Csv) => io::write_vector_csv(&out, std::io::stdout().lock())?,
        (None, VectorFormat::Raw) => io::write_vector_raw(&out, std::io::stdout().lock())?,
    }
    emit_sidecar(cmd.output.as_deref(), &meta)
}

fn cmd_interp(cmd: &InterpCmd, mut meta: Metadata) -> Result<()> {
    let model = match &cmd.model {
        Some(path) => io::model_from_json(std::str::from_utf8(&meta.read_input("model", path)?)?)?,
        None => {
            let Some(ppath) = &cmd.params else { bail!(WalshError::InvalidParams("give --model FILE or --params FILE with a net and data".into())) };
            let net = load_net(&cmd.source, &mut meta)?;
            let fvals = load_samples(&net, &cmd.data, &mut meta)?;
            let params = load_params(ppath, &mut meta)?;
            SplineModel::fit(&net, &fvals, &params)?
        }
    };
    if let Some(path) = &cmd.save_model {
        std::fs::write(path, meta.attach(&io::model_to_json(&model)?, false)? + "\n")?;
    }
    let pts = io::read_points_csv(meta.read_input("points", &cmd.points)?.as_slice())?;
    let vals = model.evaluate_many(&pts)?;
    let mut text = String::from("index,value\n");
    for (i, v) in vals.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    emit(cmd.output.as_deref(), text.trim_end())?;
    emit_sidecar(cmd.output.as_deref(), &meta)
}

#[derive(Serialize)]
struct OptimizerSummary {
    converged: bool,
    cost: f64,
    failed_evaluations: usize,
    iterations: usize,
}

#[derive(Serialize)]
struct EffdimOutput {
    version: u32,
    report: walsh_net::anova::VarianceReport,
    qmc_variance: f64,
    variance_ratio: f64,
    holdout_cost: Option<f64>,
    optimizer: Option<OptimizerSummary>,
}

fn cmd_effdim(cmd: &EffdimCmd, mut meta: Metadata) -> Result<()> {
    let net = load_net(&cmd.source, &mut meta)?;
    let fvals = load_samples(&net, &cmd.data, &mut meta)?;
    let (params, outcome) = if cmd.optimize {
        let outcome = optimize(&net, &fvals, &cmd.optimizer.config())?;
        info!("optimized: cost = {:e}, converged = {}", outcome.cost, outcome.converged);
        (outcome.params.clone(), Some(outcome))
    } else {
        (load_params(cmd.params.as_ref().expect("clap requires params"), &mut meta)?, None)
    };
    let run = analyze(&net, &fvals, &params, cmd.threshold, outcome.as_ref().map(|o| o.cost))?;
    if !check_ordering(&run.report, 1e-10) {
        log::warn!("variance curves violate the ordering chain at 1e-10 relative");
    }
    if let Some(path) = &cmd.curves {
        io::write_curves_csv(&run.report, create(path)?)?;
    }
    if let (Some(path), Some(o)) = (&cmd.trace, &outcome) {
        write_trace(path, o)?;
    }
    if let Some(path) = &cmd.save_model {
        let model = SplineModel::fit(&net, &fvals, &params)?;
        std::fs::write(path, meta.attach(&io::model_to_json(&model)?, false)? + "\n")?;
    }
    let out = EffdimOutput {
        version: io::FORMAT_VERSION,
        optimizer: outcome.as_ref().map(|o| OptimizerSummary { converged: o.converged, cost: o.cost, failed_evaluations: o.failed_evaluations, iterations: o.trace.len() }),
        report: run.report,
        qmc_variance: run.qmc_variance,
        variance_ratio: run.variance_ratio,
        holdout_cost: run.holdout_cost,
    };
    emit(cmd.output.as_deref(), &meta.attach(&serde_json::to_string(&out)?, true)?)
}

fn cmd_optimize(cmd: &OptimizeCmd, mut meta: Metadata) -> Result<()> {
    let net = load_net(&cmd.source, &mut meta)?;
    let fvals = load_samples(&net, &cmd.data, &mut meta)?;
    let outcome = optimize(&net, &fvals, &cmd.optimizer.config())?;
    info!("optimized: cost = {:e}, converged = {}, failed evaluations = {}", outcome.cost, outcome.converged, outcome.failed_evaluations);
    if let Some(path) = &cmd.trace {
        write_trace(path, &outcome)?;
    }
    emit(cmd.output.as_deref(), &meta.attach(&io::params_to_json(&outcome.params)?, true)?)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let threads = rayon::current_num_threads();
    let name = match &cli.command {
        Command::Net(_) => "net",
        Command::Transform(_) => "transform",
        Command::Interp(_) => "interp",
        Command::Effdim(_) => "effdim",
        Command::Optimize(_) => "optimize",
    };
    let meta = Metadata::new(name, cli, threads)?;
    info!("{name}: config hash {}", meta.config_hash);
    match &cli.command {
        Command::Net(c) => cmd_net(c, meta),
        Command::Transform(c) => cmd_transform(c, meta),
        Command::Interp(c) => cmd_interp(c, meta),
        Command::Effdim(c) => {
            if !(c.threshold > 0.0 && c.threshold < 1.0) {
                bail!(WalshError::InvalidParams(format!("threshold must lie in (0, 1), got {}", c.threshold)));
            }
            cmd_effdim(c, meta)
        }
        Command::Optimize(c) => cmd_optimize(c, meta),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().target(env_logger::Target::Stderr).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e.chain().any(|c| c.downcast_ref::<WalshError>().is_some_and(WalshError::is_numeric));
            ExitCode::from(if numeric { 3 } else { 2 })
        }
    }
}
