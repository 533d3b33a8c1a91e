//! The `centile` command line.
//!
//! Exit codes: 0 success, 1 validation or runtime error, 2 usage error.
//! A JSON [`RunConfig`] is read from `--config` or, failing that, the path
//! in `CENTILE_CONFIG`; command-line flags take precedence over it.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catchup::{eval_b, fit_catchup, CatchupError, CatchupOptions, DEFAULT_MIN_GAP};
use crate::charts::{fit_marginal, ChartError, ChartTable, DEFAULT_TAUS};
use crate::cohort_io::{
    load_cohort, load_marginal, load_model, save_model, simulate_cohort, write_cohort, Cohort, CohortError,
    GeneratorError, GeneratorMode, GeneratorParams, MeasurementKind, ModelFile, ModelIoError,
};
use crate::conditional::{
    fit_conditional_with, predict_conditional, screen, ConditionalError, ConditionalFitOptions, ConditionalModel,
    ConditionalModelSpec, Covariate, ScreeningThresholds, ScreeningVisit,
};
use crate::reference::{empirical_percentile, peer_comparison_report, select_peers, ReferenceCriteria, ReferenceError};
use crate::splines::{KnotSpec, KnotVector, SplineError};

pub const CONFIG_ENV: &str = "CENTILE_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Cohort { path: PathBuf, source: CohortError },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelIoError },
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Conditional(#[from] ConditionalError),
    #[error(transparent)]
    Catchup(#[from] CatchupError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Defaults for the conditional model, overridable per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionalDefaults {
    pub n_lags: usize,
    pub covariates: Vec<Covariate>,
    pub time_varying_lag: bool,
    pub min_rows_per_column: usize,
}

impl Default for ConditionalDefaults {
    fn default() -> Self {
        let spec = ConditionalModelSpec::new(0.5);
        Self {
            n_lags: spec.n_lags,
            covariates: spec.covariates,
            time_varying_lag: spec.time_varying_lag,
            min_rows_per_column: ConditionalFitOptions::default().min_rows_per_column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceDefaults {
    pub age_window: f64,
    pub weight_window: f64,
    pub target_window: f64,
    pub same_stratum: bool,
}

impl Default for ReferenceDefaults {
    fn default() -> Self {
        let c = ReferenceCriteria::new(0.0, 1.0);
        Self {
            age_window: c.age_window,
            weight_window: c.weight_window,
            target_window: c.target_window,
            same_stratum: c.same_stratum,
        }
    }
}

/// Optional run configuration (JSON).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub marginal_knots: Option<KnotSpec<f64>>,
    pub conditional_knots: Option<KnotSpec<f64>>,
    pub catchup_knots: Option<KnotSpec<f64>>,
    pub taus: Option<Vec<f64>>,
    pub conditional: ConditionalDefaults,
    pub screening: ScreeningThresholds,
    pub reference: ReferenceDefaults,
    /// Directory that relative output paths are resolved against.
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Cubic basis for `b(t)` with knots concentrated in the first year.
pub fn default_catchup_knots() -> KnotVector<f64> {
    KnotVector::new(3, (0.0, 2.0), &[0.25, 0.5, 1.0]).expect("valid default knots")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| CliError::Invalid(format!("{}: config `{}`: {}", path.display(), e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.screening.validate()?;
        for k in [&self.marginal_knots, &self.conditional_knots, &self.catchup_knots].into_iter().flatten() {
            KnotVector::try_from(k.clone())?;
        }
        if let Some(t) = &self.taus {
            let ok = !t.is_empty() && t.iter().all(|&x| x > 0.0 && x < 1.0) && t.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(ChartError::InvalidTaus.into());
            }
        }
        Ok(())
    }

    fn knots(spec: &Option<KnotSpec<f64>>, default: KnotVector<f64>) -> Result<KnotVector<f64>, CliError> {
        match spec {
            Some(s) => Ok(KnotVector::try_from(s.clone())?),
            None => Ok(default),
        }
    }

    fn output(&self, p: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "centile", version, about = "Quantile-regression growth charts")]
struct Cli {
    /// JSON run configuration (default: $CENTILE_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Marginal,
    Catchup,
    Conditional,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Table,
    Svg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit marginal quantile curves of one measurement against age
    FitMarginal {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "weight")]
        kind: MeasurementKind,
        /// Stratum label (required when the cohort has several)
        #[arg(long)]
        stratum: Option<String>,
        /// Comma-separated τ grid
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        /// Store a monotone-repaired table on this many grid ages
        #[arg(long)]
        repair: Option<usize>,
    },
    /// Fit the conditional model at one τ
    FitConditional {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long)]
        n_lags: Option<usize>,
        /// Comma-separated subset of height_linear, height_squared, age_gap
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<Covariate>>,
        #[arg(long)]
        time_varying: bool,
        #[arg(long)]
        min_rows_per_column: Option<usize>,
    },
    /// Fit the catch-up coefficient b(t) against a marginal chart's median
    FitCatchup {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        chart: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        zscores: bool,
        #[arg(long, default_value_t = DEFAULT_MIN_GAP)]
        min_gap: f64,
    },
    /// Percentile of a measurement on a marginal chart
    Percentile {
        #[arg(long)]
        chart: PathBuf,
        #[arg(long)]
        age: f64,
        #[arg(long)]
        value: f64,
    },
    /// Evaluate a model: a chart quantile, a conditional prediction or b(t)
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        age: f64,
        /// Chart models: the τ to evaluate
        #[arg(long)]
        tau: Option<f64>,
        /// Conditional models: prior visits as age:weight, oldest first
        #[arg(long, value_delimiter = ',')]
        path: Option<Vec<String>>,
        #[arg(long)]
        height: Option<f64>,
    },
    /// Screen a subject's visit against the watch and alert conditional models
    Screen {
        #[arg(long)]
        m90: PathBuf,
        #[arg(long)]
        m97: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        subject: String,
        /// Visit to screen (default: the subject's latest weighed visit)
        #[arg(long)]
        visit_age: Option<f64>,
    },
    /// Empirical percentile within a matched peer group
    Refgroup {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        anchor_age: f64,
        #[arg(long)]
        target_age: f64,
        #[arg(long)]
        age_window: Option<f64>,
        #[arg(long)]
        weight_window: Option<f64>,
        #[arg(long)]
        target_window: Option<f64>,
        #[arg(long)]
        same_stratum: bool,
    },
    /// Write a synthetic cohort CSV
    Simulate {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Generator parameters (JSON); flags override its seed and size
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Export a chart or b(t) as a table or an SVG plot
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
        /// Number of evenly spaced grid ages spanning the domain
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Sort chart values in τ at each age
        #[arg(long)]
        repair: bool,
    },
}

/// Runs the CLI with process stdout/stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing to the given streams; returns the exit code.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let path = path.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => RunConfig::load(&p),
        None => Ok(RunConfig::default()),
    }
}

fn read_cohort(path: &Path) -> Result<Cohort, CliError> {
    let f = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (cohort, _report) = load_cohort(BufReader::new(f)).map_err(|source| CliError::Cohort {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(cohort)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_model(path: &Path) -> Result<ModelFile, CliError> {
    load_model(open(path)?).map_err(|source| CliError::Model {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_model(path: &Path, model: &ModelFile) -> Result<(), CliError> {
    let mut w = create(path)?;
    save_model(model, &mut w)
        .and_then(|_| w.flush().map_err(ModelIoError::from))
        .map_err(|source| CliError::Model {
            path: path.to_path_buf(),
            source,
        })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_out(e: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn pick_stratum(cohort: &Cohort, stratum: Option<String>) -> Result<String, CliError> {
    match stratum {
        Some(s) => Ok(s),
        None if cohort.strata().len() == 1 => Ok(cohort.strata().iter().next().unwrap().clone()),
        None if cohort.strata().is_empty() => Err(CliError::Invalid("cohort is empty".into())),
        None => Err(CliError::Invalid(format!(
            "cohort has strata {:?}; pick one with --stratum",
            cohort.strata()
        ))),
    }
}

/// `n` evenly spaced points spanning `[lo, hi]`, ending exactly at `hi`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn parse_path(items: &[String]) -> Result<Vec<(f64, f64)>, CliError> {
    items
        .iter()
        .map(|s| {
            let (a, w) = s
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("path entry `{s}` is not age:weight")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("path entry `{s}` is not numeric")))
            };
            Ok((num(a)?, num(w)?))
        })
        .collect()
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli.config)?;
    match cli.command {
        Command::FitMarginal {
            cohort,
            out: dest,
            kind,
            stratum,
            taus,
            repair,
        } => {
            let c = read_cohort(&cohort)?;
            let stratum = pick_stratum(&c, stratum)?;
            let kv = RunConfig::knots(&cfg.marginal_knots, KnotVector::infancy_default())?;
            let taus = taus.or(cfg.taus.clone()).unwrap_or_else(|| DEFAULT_TAUS.to_vec());
            let (mut chart, summary) = fit_marginal(&c, kind, &stratum, &kv, &taus)?;
            if let Some(n) = repair {
                let (lo, hi) = kv.boundary();
                let table = chart.repair_crossings(&grid(lo, hi, n))?;
                chart = chart.with_repaired(table)?;
            }
            write_model(&cfg.output(&dest), &ModelFile::Marginal(chart))?;
            writeln!(
                out,
                "fitted {} {kind} observations in stratum {stratum} at {} taus ({} outside the age domain skipped)",
                summary.used,
                taus.len(),
                summary.skipped_out_of_domain
            )
            .map_err(io_out)
        }
        Command::FitConditional {
            cohort,
            out: dest,
            tau,
            stratum,
            n_lags,
            covariates,
            time_varying,
            min_rows_per_column,
        } => {
            let mut c = read_cohort(&cohort)?;
            if let Some(s) = &stratum {
                c = c.stratum(s);
            }
            let d = &cfg.conditional;
            let spec = ConditionalModelSpec {
                tau,
                n_lags: n_lags.unwrap_or(d.n_lags),
                covariates: covariates.unwrap_or_else(|| d.covariates.clone()),
                time_varying_lag: time_varying || d.time_varying_lag,
            };
            let opts = ConditionalFitOptions {
                min_rows_per_column: min_rows_per_column.unwrap_or(d.min_rows_per_column),
            };
            let kv = RunConfig::knots(&cfg.conditional_knots, KnotVector::infancy_default())?;
            let model = fit_conditional_with(&c, &spec, &kv, &opts)?;
            let rows = model.training_rows();
            let lag = model.lag_coefficient(1, kv.boundary().0)?;
            write_model(&cfg.output(&dest), &ModelFile::Conditional(model))?;
            writeln!(out, "fitted conditional model at tau {tau} on {rows} rows; lag-1 coefficient {lag}")
                .map_err(io_out)
        }
        Command::FitCatchup {
            cohort,
            chart,
            out: dest,
            zscores,
            min_gap,
        } => {
            let chart_model = load_marginal(open(&chart)?).map_err(|source| CliError::Model { path: chart, source })?;
            let c = read_cohort(&cohort)?.stratum(chart_model.stratum());
            let kv = RunConfig::knots(&cfg.catchup_knots, default_catchup_knots())?;
            let opts = CatchupOptions {
                use_zscores: zscores,
                min_gap,
            };
            let label = format!("{}/{}", chart_model.kind(), chart_model.stratum());
            let model = fit_catchup(&c, &chart_model, &label, &kv, &opts)?;
            let pairs = model.residuals().len();
            write_model(&cfg.output(&dest), &ModelFile::Catchup(model))?;
            writeln!(out, "fitted b(t) on {pairs} visit pairs against {label}").map_err(io_out)
        }
        Command::Percentile { chart, age, value } => {
            let chart = load_marginal(open(&chart)?).map_err(|source| CliError::Model { path: chart, source })?;
            let report = match chart.repaired() {
                Some(t) => t.percentile_of(age, value)?,
                None => chart.percentile_of(age, value)?,
            };
            writeln!(out, "{report}").map_err(io_out)
        }
        Command::Predict {
            model,
            age,
            tau,
            path,
            height,
        } => match read_model(&model)? {
            ModelFile::Marginal(chart) => {
                let tau = tau.ok_or_else(|| CliError::Usage("--tau is required for a chart".into()))?;
                writeln!(out, "{}", chart.eval_quantile(age, tau)?).map_err(io_out)
            }
            ModelFile::Conditional(m) => {
                let path = parse_path(&path.unwrap_or_default())?;
                writeln!(out, "{}", predict_conditional(&m, age, &path, height)?).map_err(io_out)
            }
            ModelFile::Catchup(m) => {
                let (b, dir) = eval_b(&m, age)?;
                writeln!(out, "{b}\t{dir}").map_err(io_out)
            }
        },
        Command::Screen {
            m90,
            m97,
            cohort,
            subject,
            visit_age,
        } => {
            let load = |p: &Path| -> Result<ConditionalModel, CliError> {
                match read_model(p)? {
                    ModelFile::Conditional(m) => Ok(m),
                    other => Err(CliError::Model {
                        path: p.to_path_buf(),
                        source: ModelIoError::TypeMismatch {
                            expected: "conditional-v1",
                            found: other.scheme().to_string(),
                        },
                    }),
                }
            };
            let models = [load(&m90)?, load(&m97)?];
            let c = read_cohort(&cohort)?;
            let visits = c
                .subject(&subject)
                .ok_or_else(|| CliError::Invalid(format!("subject {subject} not in cohort")))?;
            let weighed: Vec<_> = visits.iter().filter(|m| m.weight.is_some()).collect();
            let j = match visit_age {
                Some(a) => weighed
                    .iter()
                    .position(|m| m.age == a)
                    .ok_or_else(|| CliError::Invalid(format!("subject {subject} has no weighed visit at age {a}")))?,
                None => weighed
                    .len()
                    .checked_sub(1)
                    .ok_or_else(|| CliError::Invalid(format!("subject {subject} has no weights")))?,
            };
            let n = models[0].spec().n_lags;
            if j < n {
                return Err(CliError::Invalid(format!(
                    "subject {subject} has {j} earlier weighed visits; the models use {n}"
                )));
            }
            let path: Vec<(f64, f64)> = weighed[j - n..j].iter().map(|m| (m.age, m.weight.unwrap())).collect();
            let v = weighed[j];
            let flag = screen(
                &models,
                cfg.screening,
                &ScreeningVisit {
                    age: v.age,
                    observed: v.weight.unwrap(),
                    prior_path: &path,
                    height: v.height,
                },
            )?;
            let mut s = String::new();
            let _ = writeln!(s, "subject {subject} age {} observed {} kg", v.age, flag.observed);
            for (tau, q) in &flag.thresholds {
                let _ = writeln!(s, "threshold tau {tau}: {q}");
            }
            if let Some(w) = &flag.warning {
                let _ = writeln!(s, "warning: {w}");
            }
            let _ = writeln!(s, "level: {}", flag.level);
            out.write_all(s.as_bytes()).map_err(io_out)
        }
        Command::Refgroup {
            cohort,
            subject,
            anchor_age,
            target_age,
            age_window,
            weight_window,
            target_window,
            same_stratum,
        } => {
            let c = read_cohort(&cohort)?;
            let d = &cfg.reference;
            let criteria = ReferenceCriteria {
                anchor_age,
                age_window: age_window.unwrap_or(d.age_window),
                weight_window: weight_window.unwrap_or(d.weight_window),
                target_age,
                target_window: target_window.unwrap_or(d.target_window),
                same_stratum: same_stratum || d.same_stratum,
            };
            let set = select_peers(&c, &subject, &criteria)?;
            let target = set
                .probe_target
                .clone()
                .ok_or_else(|| ReferenceError::NoTarget(subject.clone()))?;
            let mut s = String::new();
            let _ = writeln!(s, "peers: {}", set.peers.len());
            if set.peers.is_empty() {
                let _ = writeln!(s, "warning: empty peer set");
            } else {
                let pct = empirical_percentile(&set.target_weights(), target.weight.unwrap())?;
                let _ = writeln!(s, "percentile: {pct}");
            }
            let report = peer_comparison_report(&set.peers, &target);
            let _ = writeln!(
                s,
                "heavier peers: {} (taller {}, shorter {}, same height {}, unknown {})",
                report.heavier.len(),
                report.taller,
                report.shorter,
                report.same_height,
                report.unknown
            );
            let _ = writeln!(s, "subject\tweight_kg\theight_diff_cm");
            for p in &report.heavier {
                let diff = p.height_diff.map_or_else(|| "NA".to_string(), |d| d.to_string());
                let _ = writeln!(s, "{}\t{}\t{diff}", p.subject, p.weight);
            }
            out.write_all(s.as_bytes()).map_err(io_out)
        }
        Command::Simulate {
            mode,
            seed,
            subjects,
            out: dest,
            params,
        } => {
            let mut p = match &params {
                Some(path) => {
                    let mut de = serde_json::Deserializer::from_reader(open(path)?);
                    serde_path_to_error::deserialize::<_, GeneratorParams>(&mut de).map_err(|e| {
                        CliError::Invalid(format!("{}: `{}`: {}", path.display(), e.path(), e.inner()))
                    })?
                }
                None => {
                    let seed = seed
                        .or(cfg.seed)
                        .ok_or_else(|| CliError::Usage("a seed is required (--seed or config `seed`)".into()))?;
                    let n = subjects.unwrap_or(500);
                    match mode {
                        Mode::Marginal => GeneratorParams::marginal(n, seed),
                        Mode::Catchup => GeneratorParams::catchup(n, seed),
                        Mode::Conditional => GeneratorParams::conditional(n, seed),
                    }
                }
            };
            let file_mode = match p.mode {
                GeneratorMode::Marginal { .. } => Mode::Marginal,
                GeneratorMode::Catchup { .. } => Mode::Catchup,
                GeneratorMode::Conditional { .. } => Mode::Conditional,
            };
            if file_mode != mode {
                return Err(CliError::Invalid(format!(
                    "--mode {mode:?} disagrees with the parameter file's mode {file_mode:?}"
                )));
            }
            if let Some(s) = seed {
                p.seed = s;
            }
            if let Some(n) = subjects {
                p.n_subjects = n;
            }
            let cohort = simulate_cohort(&p)?;
            let dest = cfg.output(&dest);
            let mut w = create(&dest)?;
            write_cohort(&cohort, &mut w)
                .and_then(|_| w.flush().map_err(CohortError::from))
                .map_err(|source| CliError::Cohort {
                    path: dest.clone(),
                    source,
                })?;
            writeln!(
                out,
                "wrote {} subjects, {} visits (seed {})",
                cohort.n_subjects(),
                cohort.n_measurements(),
                p.seed
            )
            .map_err(io_out)
        }
        Command::Export {
            model,
            format,
            out: dest,
            points,
            repair,
        } => {
            if points < 2 {
                return Err(CliError::Usage("--points must be at least 2".into()));
            }
            let (header, ages, series) = match read_model(&model)? {
                ModelFile::Marginal(chart) => {
                    let (lo, hi) = chart.knots().boundary();
                    let g = grid(lo, hi, points);
                    let t = if repair {
                        chart.repair_crossings(&g)?
                    } else {
                        chart.table(&g)?
                    };
                    let header = t.taus.iter().map(|x| x.to_string()).collect::<Vec<_>>();
                    (header, g, transpose(&t))
                }
                ModelFile::Catchup(m) => {
                    let (lo, hi) = m.knots().boundary();
                    let g = grid(lo, hi, points);
                    let b = g.iter().map(|&a| eval_b(&m, a).map(|v| v.0)).collect::<Result<Vec<_>, _>>()?;
                    (vec!["b".to_string()], g, vec![b])
                }
                ModelFile::Conditional(_) => {
                    return Err(CliError::Invalid(
                        "conditional models depend on the prior path; export a chart or catch-up model".into(),
                    ))
                }
            };
            let text = match format {
                ExportFormat::Table => table_text(&header, &ages, &series),
                ExportFormat::Svg => svg_text(&header, &ages, &series),
            };
            write_text(&cfg.output(&dest), &text)?;
            writeln!(out, "exported {} curves on {} ages", series.len(), ages.len()).map_err(io_out)
        }
    }
}

fn transpose(t: &ChartTable<f64>) -> Vec<Vec<f64>> {
    (0..t.taus.len()).map(|j| t.values.iter().map(|r| r[j]).collect()).collect()
}

/// CSV: `age` then one column per series; numbers in shortest round-trip form.
fn table_text(header: &[String], ages: &[f64], series: &[Vec<f64>]) -> String {
    let mut s = String::from("age");
    for h in header {
        s.push(',');
        s.push_str(h);
    }
    s.push('\n');
    for (i, a) in ages.iter().enumerate() {
        let _ = write!(s, "{a}");
        for col in series {
            let _ = write!(s, ",{}", col[i]);
        }
        s.push('\n');
    }
    s
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Minimal line plot: one polyline per series, a tick at every grid age.
fn svg_text(header: &[String], ages: &[f64], series: &[Vec<f64>]) -> String {
    let (x0, x1) = (ages[0], ages[ages.len() - 1]);
    let lo = series.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let px = |a: f64| MARGIN + (a - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |v: f64| SVG_H - MARGIN - (v - lo) / (hi - lo) * (SVG_H - 2.0 * MARGIN);
    let base = SVG_H - MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W} {SVG_H}" width="{SVG_W}" height="{SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base}"/>"#,
        SVG_W - MARGIN
    );
    for &a in ages {
        let _ = writeln!(s, r#"<line x1="{0}" y1="{base}" x2="{0}" y2="{1}"/>"#, px(a), base + 4.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="10" text-anchor="middle">"#);
    let step = (ages.len() / 10).max(1);
    for &a in ages.iter().step_by(step) {
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, px(a), base + 16.0, (a * 1000.0).round() / 1000.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">age (years)</text>"#, SVG_W / 2.0, SVG_H - 8.0);
    for (v, y) in [(lo, base), (hi, MARGIN)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            (v * 1000.0).round() / 1000.0
        );
    }
    let _ = writeln!(s, "</g>");
    for (name, col) in header.iter().zip(series) {
        let pts: Vec<String> = ages.iter().zip(col).map(|(&a, &v)| format!("{},{}", px(a), py(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{name}" fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
