//! Command-line front end for `prelog-core`.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use prelog_core::bound::{db_grid, prelog_sweep, SweepOptions};
use prelog_core::channel::{dft_covariance_factor, CovarianceFactor};
use prelog_core::jacobian::{run_factorization_trials, run_rank_lemma_trials};
use prelog_core::matrix::{parse_matrix, ComplexMatrix, DEFAULT_RANK_TOL};
use prelog_core::property_a::{find_admissible_subset, row_spark, satisfies_property_a};
use prelog_core::recovery::{run_round_trips, PilotMode, TrialStatus};
use prelog_core::{Error, IndexSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Invalid(_) | CliError::Io { .. } => EXIT_INVALID,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::SingularSystem { .. } | Error::ZeroSymbol(_) | Error::FactorizationPrecondition(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "prelog", version, about = "Pre-log tools for correlated block-fading SIMO channels")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check whether the leading Q+1 rows have every Q rows independent.
    CheckPropertyA(FactorSource),
    /// Size of the smallest linearly dependent row subset.
    Spark(FactorSource),
    /// Noiseless pilot-based round trips; one CSV row per trial.
    Recover(RecoverArgs),
    /// Direct versus factored Jacobian determinants; one CSV row per trial.
    VerifyJacobian(VerifyJacobianArgs),
    /// Random trials of the rank lemma for the stacked N-column construction.
    RankLemma(RankLemmaArgs),
    /// Monte Carlo lower bound over an SNR grid with fitted slope.
    PrelogSweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct FactorSource {
    /// Matrix file (`rows cols` header, then `re im` per entry).
    #[arg(long, conflicts_with_all = ["dft", "cols"])]
    pub matrix: Option<PathBuf>,
    /// DFT length T.
    #[arg(long, requires = "cols")]
    pub dft: Option<usize>,
    /// 1-based DFT columns, e.g. `1,2`.
    #[arg(long)]
    pub cols: Option<String>,
    /// Numerical-rank tolerance.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PilotArg {
    /// Pilot drawn from CN(0,1) each block.
    Sampled,
    /// Pilot fixed to 1.
    Fixed,
}

impl PilotArg {
    fn mode(self) -> PilotMode<f64> {
        match self {
            PilotArg::Sampled => PilotMode::Sampled,
            PilotArg::Fixed => PilotMode::unit(),
        }
    }
}

/// Covariance factor for the simulation subcommands: DFT columns of length
/// `T` (first `Q` by default) or a matrix file.
#[derive(Debug, Args)]
pub struct ChannelArgs {
    #[arg(long = "T", value_name = "T")]
    pub block_len: usize,
    #[arg(long = "Q", value_name = "Q")]
    pub rank: usize,
    /// 1-based DFT columns (default: 1..Q).
    #[arg(long, conflicts_with = "matrix")]
    pub cols: Option<String>,
    /// T×Q matrix file instead of DFT columns.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PilotArg::Fixed)]
    pub pilot: PilotArg,
    /// Largest tolerated fraction of trials that are not `ok`.
    #[arg(long, default_value_t = 0.01)]
    pub max_failure_rate: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyJacobianArgs {
    #[arg(long = "T", value_name = "T")]
    pub block_len: usize,
    #[arg(long = "Q", value_name = "Q")]
    pub rank: usize,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    /// Fixed DFT columns; otherwise each trial draws a Gaussian factor.
    #[arg(long)]
    pub cols: Option<String>,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankLemmaArgs {
    #[arg(long = "N", value_name = "N")]
    pub n: usize,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db_max: f64,
    #[arg(long)]
    pub points: usize,
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PilotArg::Sampled)]
    pub pilot: PilotArg,
    /// Decades below the top SNR used for the slope fit.
    #[arg(long, default_value_t = 2.0)]
    pub fit_decades: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(rendered.as_bytes()) } else { stdout.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// What a command produced: text for `out` (or standard output), plus a
/// failure to report after the text is written.
struct Report {
    text: String,
    out: Option<PathBuf>,
    failure: Option<CliError>,
}

impl Report {
    fn stdout(text: String) -> Self {
        Self { text, out: None, failure: None }
    }

    fn to(out: &Option<PathBuf>, text: String) -> Self {
        Self { text, out: out.clone(), failure: None }
    }
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    let report = pool.install(|| match &cli.command {
        Command::CheckPropertyA(a) => check_property_a(a),
        Command::Spark(a) => spark(a),
        Command::Recover(a) => recover(a),
        Command::VerifyJacobian(a) => verify_jacobian(a),
        Command::RankLemma(a) => rank_lemma(a),
        Command::PrelogSweep(a) => sweep(a),
    })?;
    emit(report.out.as_deref(), &report.text, stdout)?;
    report.failure.map_or(Ok(()), Err)
}

fn read_matrix(path: &Path) -> CliResult<ComplexMatrix<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_matrix(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn load_source(src: &FactorSource) -> CliResult<(ComplexMatrix<f64>, String)> {
    match (&src.matrix, src.dft, &src.cols) {
        (Some(path), _, _) => Ok((read_matrix(path)?, path.display().to_string())),
        (None, Some(t), Some(cols)) => {
            let keep = IndexSet::parse_list(cols, t)?;
            let a = dft_covariance_factor::<f64>(t, &keep)?;
            Ok((a.matrix().clone(), format!("DFT T={t} columns {keep}")))
        }
        _ => Err(CliError::Invalid("give --matrix FILE or --dft T --cols LIST".into())),
    }
}

fn channel_factor(args: &ChannelArgs) -> CliResult<CovarianceFactor<f64>> {
    let (t, q) = (args.block_len, args.rank);
    if q == 0 || q >= t {
        return Err(CliError::Invalid(format!("need 1 <= Q < T, got T={t}, Q={q}")));
    }
    if let Some(path) = &args.matrix {
        let m = read_matrix(path)?;
        if m.shape() != (t, q) {
            return Err(CliError::Invalid(format!("{}: expected a {t}×{q} matrix, found {}×{}", path.display(), m.rows(), m.cols())));
        }
        return Ok(CovarianceFactor::new(m)?);
    }
    dft_factor(t, q, args.cols.as_deref())
}

fn dft_factor(t: usize, q: usize, cols: Option<&str>) -> CliResult<CovarianceFactor<f64>> {
    let keep = match cols {
        Some(list) => IndexSet::parse_list(list, t)?,
        None => IndexSet::range(1, q, t)?,
    };
    if keep.len() != q {
        return Err(CliError::Invalid(format!("--cols lists {} columns but Q={q}", keep.len())));
    }
    Ok(dft_covariance_factor(t, &keep)?)
}

fn check_property_a(args: &FactorSource) -> CliResult<Report> {
    let (m, label) = load_source(args)?;
    let (rows, q) = m.shape();
    if rows < q + 1 {
        return Err(CliError::Invalid(format!("need at least Q+1 = {} rows, found {rows}", q + 1)));
    }
    let leading = m.select_rows(&(0..=q).collect::<Vec<_>>());
    let report = satisfies_property_a(&leading, args.tol);
    let spark = row_spark(&leading, args.tol)?;

    let mut out = String::new();
    writeln!(out, "matrix: {rows}x{q} ({label})").unwrap();
    writeln!(out, "verdict: {}", if report.satisfied { "SATISFIED" } else { "NOT SATISFIED" }).unwrap();
    match &report.failing_row_subset {
        Some(s) => writeln!(out, "failing subset: {s}").unwrap(),
        None => writeln!(out, "failing subset: none").unwrap(),
    }
    writeln!(out, "row-spark: {spark}").unwrap();
    if rows > q + 1 {
        let admissible = CovarianceFactor::with_tolerance(m, args.tol)
            .ok()
            .and_then(|f| find_admissible_subset(&f, args.tol));
        match admissible {
            Some(s) => writeln!(out, "admissible rows: {s}").unwrap(),
            None => writeln!(out, "admissible rows: none").unwrap(),
        }
    }
    writeln!(out, "tolerance: {:e}", args.tol).unwrap();
    Ok(Report::stdout(out))
}

fn spark(args: &FactorSource) -> CliResult<Report> {
    let (m, label) = load_source(args)?;
    let spark = row_spark(&m, args.tol)?;
    Ok(Report::stdout(format!("matrix: {}x{} ({label})\nrow-spark: {spark}\n", m.rows(), m.cols())))
}

fn recover(args: &RecoverArgs) -> CliResult<Report> {
    if !(0.0..=1.0).contains(&args.max_failure_rate) {
        return Err(CliError::Invalid("--max-failure-rate must lie in [0, 1]".into()));
    }
    let a = channel_factor(&args.channel)?;
    let trials = run_round_trips(&a, args.pilot.mode(), args.trials, args.seed);

    let failures = trials.iter().filter(|t| t.status != TrialStatus::Ok).count();
    if args.trials > 0 && failures as f64 / args.trials as f64 > args.max_failure_rate {
        return Err(CliError::Numerical(format!(
            "{failures} of {} trials failed, above the budget of {}",
            args.trials, args.max_failure_rate
        )));
    }
    let mut csv = String::from("trial,cond,max_rel_err_x,max_rel_err_s,status\n");
    for t in &trials {
        writeln!(csv, "{},{:e},{:e},{:e},{}", t.trial, t.condition, t.max_rel_err_x, t.max_rel_err_s, t.status).unwrap();
    }
    Ok(Report::to(&args.out, csv))
}

fn verify_jacobian(args: &VerifyJacobianArgs) -> CliResult<Report> {
    let (t, q) = (args.block_len, args.rank);
    let fixed = match &args.cols {
        Some(list) => Some(dft_factor(t, q, Some(list))?),
        None => None,
    };
    let trials = run_factorization_trials(t, q, fixed.as_ref(), args.trials, args.seed)?;
    if let Some(bad) = trials.iter().find(|r| !(r.discrepancy <= args.tol)) {
        return Err(CliError::Numerical(format!(
            "trial {}: relative error {:e} exceeds {:e}",
            bad.trial, bad.discrepancy, args.tol
        )));
    }
    let mut csv = String::from("trial,abs_det_direct,abs_det_factored,rel_err,rejected\n");
    for r in &trials {
        writeln!(csv, "{},{:e},{:e},{:e},{}", r.trial, r.abs_det_direct, r.abs_det_factored, r.discrepancy, r.rejected).unwrap();
    }
    Ok(Report::to(&args.out, csv))
}

fn rank_lemma(args: &RankLemmaArgs) -> CliResult<Report> {
    if args.n == 0 {
        return Err(CliError::Invalid("--N must be at least 1".into()));
    }
    let s = run_rank_lemma_trials(args.n, args.trials, args.seed, args.tol);
    let pass = s.trials - s.violations;
    let mut report = Report::stdout(format!(
        "N={} trials={} hypothesis_holds={} full_rank={} pass={} fail={}\n",
        s.n, s.trials, s.hypothesis_holds, s.mhat_full_rank, pass, s.violations
    ));
    if s.violations > 0 {
        report.failure = Some(CliError::Numerical(format!("{} trials contradict the rank lemma", s.violations)));
    }
    Ok(report)
}

fn sweep(args: &SweepArgs) -> CliResult<Report> {
    if !(args.snr_db_min.is_finite() && args.snr_db_max.is_finite() && args.snr_db_min < args.snr_db_max) {
        return Err(CliError::Invalid("need finite --snr-db-min < --snr-db-max".into()));
    }
    if args.points < 3 {
        return Err(CliError::Invalid("--points must be at least 3".into()));
    }
    if !(args.fit_decades > 0.0) {
        return Err(CliError::Invalid("--fit-decades must be positive".into()));
    }
    let a = channel_factor(&args.channel)?;
    let grid = db_grid(args.snr_db_min, args.snr_db_max, args.points);
    let options = SweepOptions { pilot: args.pilot.mode(), fit_decades: args.fit_decades };
    let curve = prelog_sweep(&a, &grid, args.samples, args.seed, options)?;

    let mut csv = String::from("snr_db,bound_bits,std_err\n");
    for p in &curve.points {
        writeln!(csv, "{},{},{}", p.snr_db(), p.bound, p.std_err).unwrap();
    }
    writeln!(
        csv,
        "# fitted_slope={} target_slope={} siso_reference={} samples={} seed={} rejected={}",
        curve.fitted_slope, curve.target_slope, curve.siso_reference, curve.mc_samples, args.seed, curve.rejected
    )
    .unwrap();
    Ok(Report::to(&args.out, csv))
}

fn write_stdout(stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

/// Writes to `out` through a sibling temporary file and a rename, or to
/// standard output when no path is given.
fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    let Some(path) = out else {
        return write_stdout(stdout, text);
    };
    let io_err = |source| CliError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(text.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
