//! Command-line front end.
//!
//! Three subcommands: `fit` a CSV dataset, `simulate` a dataset from a known
//! model, and run an `ensemble` of simulated experiments. Every flag can
//! also be given in a TOML file passed with `--config`; values on the
//! command line take precedence over the file, which takes precedence over
//! a `--preset` (ensemble only), which takes precedence over built-in
//! defaults.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 fit failure, 4
//! inconsistent configuration. Failures print a single line
//! `error[<CODE>]: <message>` to stderr and nothing to stdout.

pub mod csvio;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::datagen::{generate_experiment, DatagenError, GridSpec, NoiseSpec, Truth};
use crate::ensemble::{parallel_coordinates_export, run_ensemble, EnsembleConfig, EnsembleError};
use crate::models::ModelBasis;
use crate::optimizer::OptimizerSettings;
use crate::priors::GaussianPrior;
use crate::varpro::{fit, parameter_errors, Chi2Norm, FitProblem};

use report::{EnsembleSummary, FitReport};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

pub const FIT_REPORT_JSON: &str = "fit_report.json";
pub const FIT_REPORT_TXT: &str = "fit_report.txt";
pub const FIT_CURVE_CSV: &str = "fit_curve.csv";
pub const ENSEMBLE_SUMMARY_JSON: &str = "ensemble_summary.json";
pub const PARALLEL_COORDINATES_CSV: &str = "parallel_coordinates.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit_code: i32,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_INPUT,
            code: "E_INPUT",
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_CONFIG,
            code: "E_CONFIG",
            message: message.into(),
        }
    }

    fn fit(kind: &str, message: impl std::fmt::Display) -> Self {
        Self {
            exit_code: EXIT_FIT,
            code: "E_FIT",
            message: format!("{kind}: {message}"),
        }
    }

    /// The single line written to stderr.
    pub fn line(&self) -> String {
        let msg = self.message.replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code, msg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "varpro-fit",
    version,
    about = "Separable nonlinear least-squares fits by variable projection"
)]
pub struct Cli {
    /// TOML file supplying defaults for any flag ([fit], [simulate],
    /// [ensemble] and [optimizer] tables).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to an x,y,dy CSV file.
    Fit(FitArgs),
    /// Generate a noisy dataset from a known model.
    Simulate(SimulateArgs),
    /// Run a batch of simulated experiments and fit each one.
    Ensemble(EnsembleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormArg {
    Euclidean,
    SquaredOneNorm,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OptimizerArgs {
    /// Absolute precision target.
    #[arg(long)]
    pub ap: Option<f64>,
    /// Relative precision target.
    #[arg(long)]
    pub rp: Option<f64>,
    /// Maximum Newton iterations.
    #[arg(long)]
    pub ns: Option<usize>,
    /// Initial steepest-descent step.
    #[arg(long)]
    pub h0: Option<f64>,
    /// Finite-difference step.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Maximum step halvings per iteration.
    #[arg(long)]
    pub max_backtracks: Option<usize>,
}

impl OptimizerArgs {
    fn merge(self, other: OptimizerArgs) -> OptimizerArgs {
        OptimizerArgs {
            ap: self.ap.or(other.ap),
            rp: self.rp.or(other.rp),
            ns: self.ns.or(other.ns),
            h0: self.h0.or(other.h0),
            fd_step: self.fd_step.or(other.fd_step),
            max_backtracks: self.max_backtracks.or(other.max_backtracks),
        }
    }

    fn settings(&self, base: OptimizerSettings) -> Result<OptimizerSettings, CliError> {
        let s = OptimizerSettings {
            ap: self.ap.unwrap_or(base.ap),
            rp: self.rp.unwrap_or(base.rp),
            ns: self.ns.unwrap_or(base.ns),
            h0: self.h0.unwrap_or(base.h0),
            fd_step: self.fd_step.unwrap_or(base.fd_step),
            max_backtracks: self.max_backtracks.unwrap_or(base.max_backtracks),
        };
        s.validate().map_err(CliError::config)?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// Input CSV with header x,y,dy.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `example1`, `expsum:<k>`, or terms such as 'x; x^2; 1/(x+b0)'.
    #[arg(long, allow_hyphen_values = true)]
    pub model: Option<String>,
    /// Starting nonlinear parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub prior_center: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub prior_width: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub chi2_norm: Option<NormArg>,
    /// Accepted for symmetry with the other subcommands; fitting is
    /// deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Samples in the fitted-curve file.
    #[arg(long)]
    pub curve_points: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Generating model (same syntax as `fit --model`).
    #[arg(long, allow_hyphen_values = true)]
    pub truth: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    /// start,step,count
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    /// Relative Gaussian noise level (0.01 = 1%).
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed uncertainty for every point instead of |y|·noise.
    #[arg(long)]
    pub dy: Option<f64>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Three exponentials with priors, 50 experiments at 2% noise.
    Example2,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EnsembleArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of experiments.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub truth: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Base seed; experiment k uses seed + k.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dy: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub prior_center: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub prior_width: Option<Vec<f64>>,
    /// Starting point (default: the prior centers).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b0: Option<Vec<f64>>,
    /// Output directory (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    fit: FitArgs,
    simulate: SimulateArgs,
    ensemble: EnsembleArgs,
    optimizer: OptimizerArgs,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn resolve_model(spec: &str) -> Result<ModelBasis, CliError> {
    ModelBasis::resolve(spec).map_err(|e| CliError::input(format!("model '{spec}': {e}")))
}

fn build_prior(
    center: Option<Vec<f64>>,
    width: Option<Vec<f64>>,
    n_b: usize,
) -> Result<Option<GaussianPrior>, CliError> {
    match (center, width) {
        (None, None) => Ok(None),
        (Some(c), Some(w)) => {
            if c.len() != n_b {
                return Err(CliError::config(format!(
                    "prior has {} components but the model has {n_b} nonlinear parameters",
                    c.len()
                )));
            }
            GaussianPrior::new(c, w)
                .map(Some)
                .map_err(|e| CliError::config(e.to_string()))
        }
        _ => Err(CliError::config(
            "--prior-center and --prior-width must be given together",
        )),
    }
}

fn parse_grid(v: &[f64]) -> Result<GridSpec, CliError> {
    let [start, step, count] = v else {
        return Err(CliError::config("--grid needs start,step,count"));
    };
    if !(*count >= 0.0 && count.fract() == 0.0 && count.is_finite()) {
        return Err(CliError::config(format!("grid count must be a whole number, got {count}")));
    }
    let grid = GridSpec {
        start: *start,
        step: *step,
        count: *count as usize,
    };
    grid.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(grid)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_fit(args: FitArgs, file: ConfigFile) -> Result<String, CliError> {
    let defaults = file.fit;
    let optimizer = args.optimizer.merge(file.optimizer);
    let model = args
        .model
        .or(defaults.model)
        .ok_or_else(|| CliError::config("missing --model"))?;
    let data_path = args
        .data
        .or(defaults.data)
        .ok_or_else(|| CliError::config("missing --data"))?;
    let reader = fs::File::open(&data_path)
        .map_err(|e| CliError::input(format!("{}: {e}", data_path.display())))?;
    let data = csvio::read_dataset(reader)
        .map_err(|e| CliError::input(format!("{}: {e}", data_path.display())))?;
    let basis = resolve_model(&model)?;
    let n_b = basis.n_b();
    if n_b == 0 {
        return Err(CliError::config(format!(
            "model '{model}' has no nonlinear parameters"
        )));
    }
    let b0 = args
        .b0
        .or(defaults.b0)
        .ok_or_else(|| CliError::config("missing --b0"))?;
    if b0.len() != n_b {
        return Err(CliError::config(format!(
            "--b0 has {} values but model '{model}' has {n_b} nonlinear parameters",
            b0.len()
        )));
    }
    let prior = build_prior(
        args.prior_center.or(defaults.prior_center),
        args.prior_width.or(defaults.prior_width),
        n_b,
    )?;
    let settings = optimizer.settings(OptimizerSettings::for_fit())?;
    let chi2_norm = match args.chi2_norm.or(defaults.chi2_norm) {
        Some(NormArg::SquaredOneNorm) => Chi2Norm::SquaredOneNorm,
        _ => Chi2Norm::Euclidean,
    };
    let curve_points = args.curve_points.or(defaults.curve_points).unwrap_or(200);
    if curve_points < 2 {
        return Err(CliError::config("--curve-points must be at least 2"));
    }

    let mut problem = FitProblem::new(data, basis, b0).with_settings(settings);
    problem.prior = prior;
    problem.chi2_norm = chi2_norm;
    problem.validate().map_err(|e| CliError::config(e.to_string()))?;
    let result = fit(&problem).map_err(|e| CliError::fit(e.kind(), &e))?;
    let errors_b = parameter_errors(&result).ok().map(|v| v.to_vec());
    let report = FitReport::new(problem.basis.name(), &result, errors_b);

    let (lo, hi) = problem.data.x_range();
    let curve: Vec<(f64, f64)> = (0..curve_points)
        .map(|k| lo + (hi - lo) * k as f64 / (curve_points - 1) as f64)
        .filter_map(|x| {
            problem
                .basis
                .evaluate(&result.a, &result.b, x)
                .ok()
                .map(|y| (x, y))
        })
        .collect();

    let dir = out_dir(args.out.or(defaults.out))?;
    let text = report.to_text();
    let mut curve_csv = Vec::new();
    csvio::write_curve(&curve, &mut curve_csv).map_err(|e| CliError::input(e.to_string()))?;
    write_file(&dir.join(FIT_REPORT_JSON), report.to_json().as_bytes())?;
    write_file(&dir.join(FIT_REPORT_TXT), text.as_bytes())?;
    write_file(&dir.join(FIT_CURVE_CSV), &curve_csv)?;
    Ok(text)
}

fn datagen_error(e: DatagenError) -> CliError {
    CliError::config(e.to_string())
}

fn cmd_simulate(args: SimulateArgs, file: ConfigFile) -> Result<String, CliError> {
    let d = file.simulate;
    let spec = args
        .truth
        .or(d.truth)
        .ok_or_else(|| CliError::config("missing --truth"))?;
    let truth = Truth {
        basis: resolve_model(&spec)?,
        a: args.a.or(d.a).ok_or_else(|| CliError::config("missing --a"))?,
        b: args.b.or(d.b).unwrap_or_default(),
    };
    truth.validate().map_err(datagen_error)?;
    let grid = parse_grid(
        &args
            .grid
            .or(d.grid)
            .ok_or_else(|| CliError::config("missing --grid"))?,
    )?;
    let noise = NoiseSpec {
        relative_sigma: args.noise.or(d.noise).unwrap_or(0.0),
        seed: args.seed.or(d.seed).unwrap_or(0),
    };
    let dy = args.dy.or(d.dy);
    let data = generate_experiment(&truth, &grid, &noise, dy).map_err(datagen_error)?;
    let csv = csvio::dataset_to_string(&data);
    match args.out.or(d.out) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
            }
            write_file(&path, csv.as_bytes())?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

fn example2_preset() -> EnsembleArgs {
    EnsembleArgs {
        n: Some(50),
        truth: Some("expsum:3".into()),
        a: Some(vec![100.0, 20.0, 4.0]),
        b: Some(vec![-0.10, -0.04, -0.02]),
        grid: Some(vec![0.0, 0.3, 100.0]),
        noise: Some(0.02),
        prior_center: Some(vec![-0.11, -0.05, -0.03]),
        prior_width: Some(vec![0.04, 0.04, 0.04]),
        optimizer: OptimizerArgs {
            ns: Some(100),
            ..OptimizerArgs::default()
        },
        ..EnsembleArgs::default()
    }
}

impl EnsembleArgs {
    fn merge(self, other: EnsembleArgs) -> EnsembleArgs {
        EnsembleArgs {
            preset: self.preset.or(other.preset),
            n: self.n.or(other.n),
            truth: self.truth.or(other.truth),
            a: self.a.or(other.a),
            b: self.b.or(other.b),
            grid: self.grid.or(other.grid),
            noise: self.noise.or(other.noise),
            seed: self.seed.or(other.seed),
            dy: self.dy.or(other.dy),
            prior_center: self.prior_center.or(other.prior_center),
            prior_width: self.prior_width.or(other.prior_width),
            b0: self.b0.or(other.b0),
            out: self.out.or(other.out),
            optimizer: self.optimizer.merge(other.optimizer),
        }
    }
}

fn cmd_ensemble(args: EnsembleArgs, file: ConfigFile) -> Result<String, CliError> {
    let mut from_file = file.ensemble;
    from_file.optimizer = file.optimizer;
    let mut args = args.merge(from_file);
    if let Some(Preset::Example2) = args.preset {
        args = args.merge(example2_preset());
    }
    let missing = |flag: &str| CliError::config(format!("missing --{flag}"));
    let spec = args.truth.ok_or_else(|| missing("truth"))?;
    let truth = Truth {
        basis: resolve_model(&spec)?,
        a: args.a.ok_or_else(|| missing("a"))?,
        b: args.b.unwrap_or_default(),
    };
    truth.validate().map_err(datagen_error)?;
    let n_b = truth.basis.n_b();
    let prior = build_prior(args.prior_center, args.prior_width, n_b)?
        .ok_or_else(|| missing("prior-center and --prior-width"))?;
    let b0 = args.b0.unwrap_or_else(|| prior.center().to_vec());
    let config = EnsembleConfig {
        n_experiments: args.n.ok_or_else(|| missing("n"))?,
        grid: parse_grid(&args.grid.ok_or_else(|| missing("grid"))?)?,
        noise: NoiseSpec {
            relative_sigma: args.noise.unwrap_or(0.0),
            seed: args.seed.unwrap_or(0),
        },
        dy_override: args.dy,
        settings: args.optimizer.settings(OptimizerSettings::for_fit())?,
        truth,
        prior,
        b0,
    };
    let report = run_ensemble(&config).map_err(|e| CliError::config(e.to_string()))?;

    let dir = out_dir(args.out)?;
    let table = match parallel_coordinates_export(&report) {
        Ok(rows) => {
            let mut buf = Vec::new();
            csvio::write_parallel_coordinates(&rows, &mut buf)
                .map_err(|e| CliError::input(e.to_string()))?;
            Some(buf)
        }
        Err(EnsembleError::EmptySelection) => None,
        Err(e) => return Err(CliError::config(e.to_string())),
    };
    let summary = EnsembleSummary::new(
        &report,
        table.as_ref().map(|_| PARALLEL_COORDINATES_CSV.to_string()),
    );
    write_file(&dir.join(ENSEMBLE_SUMMARY_JSON), summary.to_json().as_bytes())?;
    if let Some(buf) = table {
        write_file(&dir.join(PARALLEL_COORDINATES_CSV), &buf)?;
    }
    Ok(summary.to_text())
}

/// Executes a parsed command line, returning what belongs on stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(args) => cmd_fit(args, file),
        Command::Simulate(args) => cmd_simulate(args, file),
        Command::Ensemble(args) => cmd_ensemble(args, file),
    }
}

/// Outcome of a full invocation: exit code plus the stdout and stderr text.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn invoke<I, T>(argv: I) -> Invocation
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let exit_code = e.exit_code();
            let rendered = e.to_string();
            return if exit_code == 0 {
                Invocation { exit_code, stdout: rendered, stderr: String::new() }
            } else {
                let first = rendered.lines().next().unwrap_or("invalid arguments");
                let first = first.trim_start_matches("error: ");
                Invocation {
                    exit_code: EXIT_INPUT,
                    stdout: String::new(),
                    stderr: CliError::input(first).line() + "\n",
                }
            };
        }
    };
    match run(cli) {
        Ok(stdout) => Invocation { exit_code: 0, stdout, stderr: String::new() },
        Err(e) => Invocation {
            exit_code: e.exit_code,
            stdout: String::new(),
            stderr: e.line() + "\n",
        },
    }
}
