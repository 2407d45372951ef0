//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::discrepancy::{ThresholdAccepting, DEFAULT_EXACT_BUDGET};
use crate::engine::{estimate, EngineConfig, MixtureRule, StarSolverConfig};
use crate::error::Error;
use crate::evaluation::{
    format_table, l2_relative_error, run_benchmark, sweep, write_csv, write_sweep_csv, BenchCase,
    BenchParams, BenchRecord, Method, SweepContext, SweepParam,
};
use crate::geometry::AxisBox;
use crate::invariance::run_invariance_suite;
use crate::io::{partition_from_json, partition_to_json, read_samples, write_samples};
use crate::models::{preset, sample, MixtureSpec, ReferenceDensity, DEFAULT_NORMALIZER_SAMPLES};
use crate::moments::MomentTolerances;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INVARIANCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "dspmix",
    version,
    about = "Adaptive piecewise-constant density estimation by sequential binary partitioning"
)]
pub struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw samples from a preset or a JSON spec file.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short = 'N', value_parser = parse_count)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; `.bin` selects the binary format.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build an estimator from a sample file and write its partition.
    Estimate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value = "dsp-mix", value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        params: ParamArgs,
        /// Domain lower corner, comma separated (default: unit cube).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lo: Option<Vec<f64>>,
        /// Domain upper corner, comma separated (default: unit cube).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        hi: Option<Vec<f64>>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the L2 relative error of a partition file against a model.
    Evaluate {
        #[arg(short, long)]
        partition: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = DEFAULT_NORMALIZER_SAMPLES)]
        normalizer_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reproduce one of the benchmark tables.
    Bench {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        table: u8,
        /// Sample sizes, comma separated (e.g. 1e4,1e5).
        #[arg(short = 'N', value_delimiter = ',', value_parser = parse_count, default_values_t = [10_000usize, 100_000, 1_000_000])]
        n: Vec<usize>,
        /// Dimensions for tables 4 and 5.
        #[arg(short = 'd', long = "dims", value_delimiter = ',', default_values_t = [2usize, 3, 4, 5, 6])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_values_t = Method::ALL)]
        methods: Vec<Method>,
        /// Number of seeds per cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = DEFAULT_NORMALIZER_SAMPLES)]
        normalizer_samples: usize,
        /// CSV output path (default: standard output).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized invariance checks.
    CheckInvariance {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Error as a function of theta, eps or N.
    Sweep {
        #[arg(long, value_parser = parse_sweep_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "dsp-mix", value_parser = parse_method)]
        method: Method,
        #[arg(short = 'N', value_parser = parse_count, default_value = "100000")]
        n: usize,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = DEFAULT_NORMALIZER_SAMPLES)]
        normalizer_samples: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// gauss2d, gaussmix2d, betamix2d, gaussmixNd or betamixNd.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Dimension for the Nd presets.
    #[arg(short = 'd', long = "dim", default_value_t = 2)]
    pub dim: usize,
    /// JSON model file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<(String, MixtureSpec), CliError> {
        match (&self.preset, &self.spec) {
            (Some(name), None) => Ok((
                name.clone(),
                preset(name, self.dim).map_err(CliError::usage)?,
            )),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::data(Error::Io(e)))?;
                let spec = MixtureSpec::from_json(&text).map_err(CliError::data)?;
                Ok((path.display().to_string(), spec))
            }
            _ => Err(CliError::usage_msg("one of --preset or --spec is required")),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    /// Compare the squared mixture discrepancy (default) or its root with the threshold.
    #[arg(long, value_enum, default_value_t = RuleArg::Squared)]
    pub mixture_rule: RuleArg,
    #[arg(short = 'm', default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps3: f64,
    #[arg(long, default_value_t = 10)]
    pub n_min: usize,
    #[arg(long, default_value_t = 50)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_leaves: usize,
    /// Seed of the star-discrepancy search.
    #[arg(long, default_value_t = 0)]
    pub star_seed: u64,
    #[arg(long, default_value_t = 100)]
    pub star_restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub star_iterations: usize,
    /// Largest exact star-discrepancy workload, in point-box tests.
    #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
    pub star_budget: f64,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleArg {
    Squared,
    Root,
}

impl From<RuleArg> for MixtureRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Squared => MixtureRule::Squared,
            RuleArg::Root => MixtureRule::Root,
        }
    }
}

impl ParamArgs {
    pub fn bench_params(&self) -> Result<BenchParams, CliError> {
        let engine = EngineConfig {
            m: self.m,
            n_min: self.n_min,
            max_depth: self.max_depth,
            max_leaves: self.max_leaves,
            workers: 0,
            ..EngineConfig::default()
        };
        engine.validate().map_err(CliError::usage)?;
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(CliError::usage_msg("--theta must be > 0"));
        }
        Ok(BenchParams {
            theta: self.theta,
            mixture_rule: self.mixture_rule.into(),
            tol: MomentTolerances::new(self.eps1, self.eps2, self.eps3).map_err(CliError::usage)?,
            engine,
            star: StarSolverConfig {
                exact_budget: self.star_budget,
                search: ThresholdAccepting {
                    restarts: self.star_restarts,
                    iterations: self.star_iterations,
                    ..ThresholdAccepting::default()
                },
                seed: self.star_seed,
            },
        })
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{s} is not a number"))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v <= 1e15) {
        return Err(format!("{s} must be a positive integer"));
    }
    Ok(v as usize)
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Everything needed to reproduce an output.
#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub model: Option<String>,
    pub method: Option<String>,
    pub params: Option<ParamArgs>,
    pub n: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<(f64, f64)>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            model: None,
            method: None,
            params: None,
            n: None,
            seed: None,
            workers: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            normalizer: None,
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(e: Error) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn usage_msg(msg: &str) -> Self {
        Self {
            code: EXIT_USAGE,
            message: msg.to_string(),
        }
    }

    fn data(e: Error) -> Self {
        let code = if matches!(e, Error::InvalidParameter(_)) {
            EXIT_USAGE
        } else {
            EXIT_DATA
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(Error::Io(e))
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn emit_manifest(m: &RunManifest, out: Option<&Path>, err: &mut dyn Write) -> Result<(), CliError> {
    let text = m.to_json();
    writeln!(err, "{text}")?;
    if let Some(out) = out {
        fs::write(manifest_path(out), text + "\n")?;
    }
    Ok(())
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.command, out, err)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(
    command: Command,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    match command {
        Command::Sample {
            model,
            n,
            seed,
            out: path,
        } => {
            let (name, spec) = model.load()?;
            let samples = sample(&spec, n, seed)?;
            write_samples(&samples, &path)?;
            writeln!(
                out,
                "wrote {} samples of dimension {} to {}",
                samples.len(),
                samples.dim(),
                path.display()
            )?;
            let mut m = RunManifest::new("sample");
            m.model = Some(name);
            m.n = Some(vec![n]);
            m.seed = Some(seed);
            m.outputs.push(path.display().to_string());
            emit_manifest(&m, Some(&path), err)?;
        }
        Command::Estimate {
            input,
            method,
            params,
            lo,
            hi,
            out: path,
        } => {
            let bench = params.bench_params()?;
            let samples = read_samples(&input)?;
            let d = samples.dim();
            let domain = match (lo, hi) {
                (None, None) => AxisBox::unit(d),
                (lo, hi) => AxisBox::new(
                    lo.unwrap_or_else(|| vec![0.0; d]),
                    hi.unwrap_or_else(|| vec![1.0; d]),
                )
                .map_err(CliError::usage)?,
            };
            if domain.dim() != d {
                return Err(CliError::data(Error::DimensionMismatch {
                    expected: d,
                    got: domain.dim(),
                }));
            }
            let criterion = bench.criterion(method, params.star_seed)?;
            let start = Instant::now();
            let pcd = estimate(&samples, &domain, &criterion, &bench.engine)?;
            let elapsed = start.elapsed().as_secs_f64();
            let json_params = serde_json::to_value(&params).expect("params serialize");
            fs::write(
                &path,
                partition_to_json(&pcd, &method.to_string(), &json_params),
            )?;
            writeln!(out, "leaves: {}", pcd.leaf_count())?;
            writeln!(out, "wall time: {elapsed:.3} s")?;
            if pcd.truncated() {
                writeln!(out, "warning: leaf limit reached, partition truncated")?;
            }
            let mut m = RunManifest::new("estimate");
            m.method = Some(method.to_string());
            m.params = Some(params);
            m.n = Some(vec![samples.len()]);
            m.inputs.push(input.display().to_string());
            m.outputs.push(path.display().to_string());
            emit_manifest(&m, Some(&path), err)?;
        }
        Command::Evaluate {
            partition,
            model,
            normalizer_samples,
            seed,
        } => {
            let (name, spec) = model.load()?;
            let text = fs::read_to_string(&partition)?;
            let file = partition_from_json(&text)?;
            let reference = ReferenceDensity::new(&spec, normalizer_samples, seed)?;
            let e = l2_relative_error(&file.density, &reference)?;
            writeln!(out, "{e}")?;
            let mut m = RunManifest::new("evaluate");
            m.model = Some(name);
            m.method = Some(file.method);
            m.seed = Some(seed);
            m.inputs.push(partition.display().to_string());
            m.normalizer = Some((reference.normalizer(), reference.normalizer_se()));
            emit_manifest(&m, None, err)?;
        }
        Command::Bench {
            table,
            n,
            dims,
            methods,
            seeds,
            seed,
            params,
            normalizer_samples,
            out: path,
        } => {
            let bench = params.bench_params()?;
            let (name, dims) = match table {
                1 => ("gauss2d", vec![2]),
                2 => ("gaussmix2d", vec![2]),
                3 => ("betamix2d", vec![2]),
                4 => ("gaussmixNd", dims),
                _ => ("betamixNd", dims),
            };
            let mut records: Vec<BenchRecord> = Vec::new();
            for &d in &dims {
                let spec = preset(name, d).map_err(CliError::usage)?;
                let case = BenchCase::new(name, spec, normalizer_samples, seed)?;
                for &size in &n {
                    for &method in &methods {
                        for s in seed..seed + seeds {
                            let r = run_benchmark(&case, method, size, s, &bench)?;
                            writeln!(
                                err,
                                "{} {} d={} N={} seed={}: error {:.4}, {:.3} s, {} leaves",
                                r.spec,
                                r.method,
                                r.d,
                                r.n,
                                r.seed,
                                r.error,
                                r.wall_time_s,
                                r.leaves
                            )?;
                            records.push(r);
                        }
                    }
                }
            }
            match &path {
                Some(p) => write_csv(&records, fs::File::create(p)?)?,
                None => write_csv(&records, &mut *out)?,
            }
            let summary = format_table(&records);
            if path.is_some() {
                write!(out, "{summary}")?;
            } else {
                write!(err, "{summary}")?;
            }
            let mut m = RunManifest::new(&format!("bench --table {table}"));
            m.model = Some(name.to_string());
            m.method = Some(
                methods
                    .iter()
                    .map(Method::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            );
            m.params = Some(params);
            m.n = Some(n);
            m.seed = Some(seed);
            m.outputs
                .extend(path.iter().map(|p| p.display().to_string()));
            emit_manifest(&m, path.as_deref(), err)?;
        }
        Command::CheckInvariance { trials, seed } => {
            let report = run_invariance_suite(trials, seed);
            writeln!(out, "{report}")?;
            return Ok(if report.passed() {
                EXIT_OK
            } else {
                EXIT_INVARIANCE
            });
        }
        Command::Sweep {
            param,
            grid,
            model,
            method,
            n,
            seeds,
            seed,
            params,
            normalizer_samples,
            out: path,
        } => {
            let bench = params.bench_params()?;
            let (name, spec) = model.load()?;
            let case = BenchCase::new(name.clone(), spec, normalizer_samples, seed)?;
            let ctx = SweepContext {
                case: &case,
                method,
                n,
                seeds: (seed..seed + seeds).collect(),
                params: bench,
            };
            let rows = sweep(param, &grid, &ctx)?;
            match &path {
                Some(p) => write_sweep_csv(param, &rows, fs::File::create(p)?)?,
                None => write_sweep_csv(param, &rows, &mut *out)?,
            }
            let mut m = RunManifest::new(&format!("sweep --param {param}"));
            m.model = Some(name);
            m.method = Some(method.to_string());
            m.params = Some(params);
            m.n = Some(vec![n]);
            m.seed = Some(seed);
            m.outputs
                .extend(path.iter().map(|p| p.display().to_string()));
            emit_manifest(&m, path.as_deref(), err)?;
        }
    }
    Ok(EXIT_OK)
}
