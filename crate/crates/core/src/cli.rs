//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 numerical, 4 I/O.
//! Failures print one line `error: code=<n> kind=<kind> message="<text>"`
//! on stderr.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::covariance::{build_cov_matrix, cov_closed, TimeGrid};
use crate::error::Error;
use crate::lil::{self, Measured, RemainderMode};
use crate::output::{self, num, opt_num, Header, PlotKind, Table};
use crate::params::{derive, DerivedConstants, ModelParams};
use crate::par;
use crate::quadrature::cov_quadrature;
use crate::sampler::{sample, sample_fbm, FbmSpec, PathEnsemble};
use crate::smallball::{self, estimate_curve, fit_rate, lambda_from_fit, CurveConfig, Process, SmallBallFit};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Epsilons used to calibrate `λ̂` for the `lil` subcommand.
pub const LIL_CALIBRATION_EPSILONS: [f64; 7] = [1.0, 0.9, 0.8, 0.75, 0.7, 0.65, 0.6];

#[derive(Debug, Parser)]
#[command(name = "cllb", version, about = "Small-ball and Chung-LIL experiments for the fractional stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print the derived constants theta, C_H, c21, kappa.
    Constants(ConstantsArgs),
    /// Compare closed-form and quadrature covariances.
    CovVerify(CovVerifyArgs),
    /// Draw sample paths.
    Sample(SampleArgs),
    /// Estimate a small-ball curve and fit its rate.
    Smallball(SmallballArgs),
    /// Run the localization experiment.
    Lil(LilArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores). Falls back to CLLB_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (stdout when absent or `-`).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Model {
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    hurst: f64,
    #[arg(long, default_value_t = crate::params::DEFAULT_BETA)]
    beta: f64,
}

impl Model {
    fn params(&self) -> crate::Result<ModelParams> {
        ModelParams::new(self.alpha, self.hurst, self.beta)
    }
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: Model,
}

#[derive(Debug, Args)]
struct CovVerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated `alpha:H` pairs.
    #[arg(long, default_value = "2:0.5,1.5:0.75,1.2:0.9,1.8:0.3,2:0.95")]
    pairs: String,
    /// Points per axis; s and t range over `upper·k/points`.
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProcessKind {
    Sfhe,
    Fbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridKind {
    Uniform,
    Geometric,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Remainder {
    Coupled,
    Joint,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: Model,
    #[arg(long, value_enum, default_value_t = ProcessKind::Sfhe)]
    process: ProcessKind,
    /// Index of the fBm process.
    #[arg(long, default_value_t = 0.5)]
    hurst_index: f64,
    #[arg(long, value_enum, default_value_t = GridKind::Uniform)]
    grid: GridKind,
    #[arg(long, default_value_t = 64)]
    grid_size: usize,
    #[arg(long, default_value_t = 1.0)]
    upper: f64,
    /// Left end of a geometric grid.
    #[arg(long, default_value_t = 1e-3)]
    lower: f64,
    /// Comma-separated times for an explicit grid.
    #[arg(long)]
    points: Option<String>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write a plotting script next to the output.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Args)]
struct SmallballArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: Model,
    #[arg(long, value_enum, default_value_t = ProcessKind::Sfhe)]
    process: ProcessKind,
    #[arg(long, default_value_t = 0.5)]
    hurst_index: f64,
    /// Comma-separated radii (default `0.5·0.75^k`, k = 0..7).
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long, default_value_t = 20_000)]
    count: usize,
    #[arg(long, default_value_t = 1024)]
    grid_size: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Args)]
struct LilArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: Model,
    #[arg(long, default_value_t = 1)]
    n_min: u32,
    #[arg(long, default_value_t = 26)]
    n_max: u32,
    #[arg(long, default_value_t = 512)]
    grid_points: usize,
    /// Realizations.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Remainder::Coupled)]
    remainder: Remainder,
    /// Skip calibration and use this small-ball constant.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    lambda_stderr: f64,
    /// Paths for the calibration curve.
    #[arg(long, default_value_t = 100_000)]
    calibration_count: usize,
    #[arg(long, default_value_t = 1024)]
    calibration_grid_size: usize,
    /// Add the lemma diagnostics to the summary.
    #[arg(long)]
    lemmas: bool,
    /// Lemma threshold delta (default 10·sqrt(c21)).
    #[arg(long)]
    delta: Option<f64>,
    /// Lemma threshold gamma (default 2·kappa·lambda^theta).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    plot: bool,
}

/// Failure of a subcommand.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Lib(e) if e.is_validation() => EXIT_VALIDATION,
            Failure::Lib(_) => EXIT_NUMERICAL,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            EXIT_USAGE => "usage",
            EXIT_VALIDATION => "validation",
            EXIT_NUMERICAL => "numerical",
            _ => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Io(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Lib(Error::InvalidInput(msg.into()))
}

/// Entry point; `argv[0]` is the program name.
pub fn run(argv: &[String]) -> i32 {
    match dispatch(argv) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!(
                "error: code={} kind={} message={:?}",
                f.code(),
                f.kind(),
                f.message()
            );
            f.code()
        }
    }
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

fn dispatch(argv: &[String]) -> Result<(), Failure> {
    let argv = merge_config(argv)?;
    let matches = match command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            return Err(Failure::Usage(first.to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let echo = echo_config(sub);
    let header = |h: Header| echo.iter().fold(h, |h, (k, v)| h.field(k, v));
    let workers = |c: &Common| par::resolve_workers(c.workers);
    match cli.cmd {
        Cmd::Constants(a) => constants(&a),
        Cmd::CovVerify(a) => par::with_workers(workers(&a.common), || cov_verify(&a, header(Header::new(name)))),
        Cmd::Sample(a) => par::with_workers(workers(&a.common), || sample_cmd(&a, header(Header::new(name)))),
        Cmd::Smallball(a) => par::with_workers(workers(&a.common), || smallball_cmd(&a, header(Header::new(name)))),
        Cmd::Lil(a) => par::with_workers(workers(&a.common), || lil_cmd(&a, header(Header::new(name)))),
    }
}

/// Options that do not change the numbers and are left out of headers.
const NOT_ECHOED: [&str; 4] = ["config", "workers", "output", "plot"];

/// Every resolved option, defaults included, in a stable order.
fn echo_config(sub: &ArgMatches) -> Vec<(String, String)> {
    let mut ids: Vec<&str> = sub.ids().map(|i| i.as_str()).collect();
    ids.sort_unstable();
    ids.into_iter()
        .filter(|id| !NOT_ECHOED.contains(id))
        .filter_map(|id| {
            let raw = sub.get_raw(id)?;
            let v: Vec<String> = raw.map(|s| s.to_string_lossy().into_owned()).collect();
            Some((id.replace('_', "-"), v.join(" ")))
        })
        .collect()
}

/// Splice `--key=value` pairs from a `--config` file right after the
/// subcommand name, so later command-line flags override them.
fn merge_config(argv: &[String]) -> Result<Vec<String>, Failure> {
    let mut path = None;
    let mut iter = argv.iter().enumerate();
    while let Some((i, a)) = iter.next() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
            iter.next();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv.to_vec());
    };
    let Some(sub_pos) = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(argv.to_vec());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| invalid(format!("config file {path}: {e}")))?;
    let pairs = parse_config(&text).map_err(|e| invalid(format!("config file {path}: {e}")))?;

    let cmd = command();
    let sub = cmd
        .find_subcommand(&argv[sub_pos])
        .ok_or_else(|| Failure::Usage(format!("unrecognized subcommand '{}'", argv[sub_pos])))?;
    let mut flags = BTreeSet::new();
    let mut known = BTreeSet::new();
    for arg in sub.get_arguments() {
        if let Some(long) = arg.get_long() {
            known.insert(long.to_string());
            if !arg.get_action().takes_values() {
                flags.insert(long.to_string());
            }
        }
    }
    let mut injected = Vec::new();
    for (k, v) in pairs {
        let key = k.replace('_', "-");
        if key == "config" || !known.contains(&key) {
            return Err(invalid(format!("config file {path}: unknown key '{k}'")));
        }
        if flags.contains(&key) {
            match v.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => return Err(invalid(format!("config file {path}: '{k}' expects true or false"))),
            }
        } else {
            injected.push(format!("--{key}={v}"));
        }
    }
    let mut out = argv[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("line {}: empty key", no + 1));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("{what}: cannot parse '{}'", x.trim())))
        })
        .collect()
}

fn write_plot(kind: PlotKind, out: Option<&Path>) -> Result<(), Failure> {
    let Some(path) = out.filter(|p| *p != Path::new("-")) else {
        return Err(invalid("--plot needs --output"));
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let script = path.with_extension("plot.py");
    std::fs::write(script, output::plot_script(kind, &name))?;
    Ok(())
}

fn constants(a: &ConstantsArgs) -> Result<(), Failure> {
    let p = a.model.params()?;
    let c = derive(&p)?;
    let text = format!(
        "alpha={}\nhurst={}\nbeta={}\ntheta={}\nc_h={}\nc21={}\nkappa={}\nhurst_lower_bound={}\n",
        num(p.alpha),
        num(p.hurst),
        num(p.beta),
        num(c.theta),
        num(c.c_h),
        num(c.c21),
        num(c.kappa),
        num(p.hurst_lower_bound()),
    );
    output::emit(a.common.output.as_deref(), text.as_bytes())?;
    Ok(())
}

fn cov_verify(a: &CovVerifyArgs, header: Header) -> Result<(), Failure> {
    if a.points == 0 {
        return Err(invalid("points must be >= 1"));
    }
    let mut table = Table::new(&["alpha", "H", "s", "t", "closed", "quadrature", "rel_err"]);
    let mut worst = 0.0f64;
    for pair in a.pairs.split(',') {
        let (al, h) = pair
            .split_once(':')
            .ok_or_else(|| invalid(format!("pair '{pair}' is not alpha:H")))?;
        let al: f64 = al.trim().parse().map_err(|_| invalid(format!("bad alpha in '{pair}'")))?;
        let h: f64 = h.trim().parse().map_err(|_| invalid(format!("bad H in '{pair}'")))?;
        let p = ModelParams::with_default_beta(al, h)?;
        let c = derive(&p)?;
        let ts: Vec<f64> = (1..=a.points).map(|k| a.upper * k as f64 / a.points as f64).collect();
        let cells: Vec<(f64, f64)> = ts.iter().flat_map(|&s| ts.iter().map(move |&t| (s, t))).collect();
        let quad = par::map_indices(cells.len(), |i| cov_quadrature(cells[i].0, cells[i].1, &p));
        for (&(s, t), q) in cells.iter().zip(quad) {
            let q = q?;
            let closed = cov_closed(s, t, &c);
            let rel = (closed - q).abs() / closed.abs();
            worst = worst.max(rel);
            table.push(vec![num(al), num(h), num(s), num(t), num(closed), num(q), num(rel)]);
        }
    }
    table.trailer.push(format!("max_rel_err = {}", num(worst)));
    output::emit(a.common.output.as_deref(), table.render(&header).as_bytes())?;
    Ok(())
}

fn sample_grid(a: &SampleArgs) -> Result<TimeGrid, Failure> {
    Ok(match a.grid {
        GridKind::Uniform => TimeGrid::uniform(a.grid_size, a.upper)?,
        GridKind::Geometric => TimeGrid::geometric(a.grid_size, a.lower, a.upper)?,
        GridKind::Explicit => {
            let pts = a
                .points
                .as_deref()
                .ok_or_else(|| invalid("--grid explicit needs --points"))?;
            TimeGrid::new(parse_list(pts, "points")?)?
        }
    })
}

fn sample_cmd(a: &SampleArgs, header: Header) -> Result<(), Failure> {
    let grid = sample_grid(a)?;
    let ens: PathEnsemble = match a.process {
        ProcessKind::Sfhe => {
            let c = derive(&a.model.params()?)?;
            sample(&build_cov_matrix(&grid, &c, None)?, a.count, a.seed)?
        }
        ProcessKind::Fbm => sample_fbm(&FbmSpec::new(a.hurst_index, grid.clone())?, a.count, a.seed)?,
    };
    let n = grid.len();
    let header = header
        .field("covariance", ens.cov_provenance.tag())
        .field(
            "jitter",
            ens.jitter.map(|j| num(j.amount)).unwrap_or_else(|| "none".into()),
        )
        .field(
            "grid-points",
            grid.points().iter().map(|x| num(*x)).collect::<Vec<_>>().join(" "),
        );
    let out = a.common.output.as_deref();
    match a.format {
        Format::Csv => {
            let mut cols = vec!["path".to_string()];
            cols.extend((0..n).map(|j| format!("x{j}")));
            let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
            let mut table = Table::new(&col_refs);
            for i in 0..ens.count {
                let mut row = vec![i.to_string()];
                row.extend(ens.path(i).iter().map(|x| num(*x)));
                table.push(row);
            }
            output::emit(out, table.render(&header).as_bytes())?;
        }
        Format::Binary => {
            output::emit(out, &output::binary_dump(&ens.paths, ens.count, n))?;
            if let Some(p) = out.filter(|p| *p != Path::new("-")) {
                std::fs::write(p.with_extension("header.txt"), header.render())?;
            }
        }
    }
    if a.plot {
        if a.format == Format::Binary {
            return Err(invalid("--plot needs --format csv"));
        }
        write_plot(PlotKind::Paths, out)?;
    }
    Ok(())
}

fn fit_lines(fit: &SmallBallFit) -> Vec<String> {
    let mut v = vec![
        format!("fit.exponent = {}", num(fit.exponent)),
        format!("fit.stderr_exponent = {}", num(fit.stderr_exponent)),
        format!("fit.constant = {}", num(fit.constant)),
        format!("fit.stderr_constant = {}", num(fit.stderr_constant)),
        format!("fit.points_used = {}", fit.points_used),
    ];
    v.extend(fit.warnings.iter().map(|w| format!("fit.warning = {w}")));
    v
}

fn smallball_cmd(a: &SmallballArgs, header: Header) -> Result<(), Failure> {
    let (process, consts) = match a.process {
        ProcessKind::Sfhe => {
            let c = derive(&a.model.params()?)?;
            (Process::Sfhe(c), Some(c))
        }
        ProcessKind::Fbm => {
            if !(a.hurst_index > 0.0 && a.hurst_index < 1.0) {
                return Err(invalid(format!("hurst-index {} outside (0, 1)", a.hurst_index)));
            }
            (Process::Fbm { hurst_index: a.hurst_index }, None)
        }
    };
    let epsilons = match &a.epsilons {
        Some(s) => parse_list(s, "epsilons")?,
        None => smallball::default_schedule(),
    };
    let mut config = CurveConfig::new(epsilons, a.count, a.grid_size, a.seed);
    config.horizon = a.horizon;
    let curve = estimate_curve(&process, &config)?;
    let mut table = Table::new(&[
        "epsilon",
        "prob",
        "stderr",
        "count",
        "grid_size",
        "raw_prob",
        "raw_stderr",
        "hits",
        "coarse_prob",
    ]);
    for p in &curve.points {
        table.push(vec![
            num(p.epsilon),
            num(p.probability),
            num(p.stderr),
            curve.count.to_string(),
            curve.grid_size.to_string(),
            num(p.raw),
            num(p.raw_stderr),
            p.hits.to_string(),
            opt_num(p.coarse),
        ]);
    }
    match fit_rate(&curve, process.index()) {
        Ok(fit) => {
            table.trailer.extend(fit_lines(&fit));
            table
                .trailer
                .push(format!("fit.target_exponent = {}", num(1.0 / process.index())));
            if let Some(c) = consts {
                let (l, se) = lambda_from_fit(&fit, &c);
                table.trailer.push(format!("fit.lambda_hat = {}", num(l)));
                table.trailer.push(format!("fit.stderr_lambda_hat = {}", num(se)));
            }
        }
        Err(e) => table.trailer.push(format!("fit.unavailable = {e}")),
    }
    let out = a.common.output.as_deref();
    output::emit(out, table.render(&header).as_bytes())?;
    if out.is_some_and(|p| p != Path::new("-")) {
        for line in &table.trailer {
            println!("{line}");
        }
    }
    if a.plot {
        write_plot(PlotKind::SmallBall, out)?;
    }
    Ok(())
}

/// `λ̂ ± se` from a heat-equation small-ball curve on `[0, 1]`.
pub fn calibrate_lambda(
    consts: &DerivedConstants,
    count: usize,
    grid_size: usize,
    seed: u64,
) -> crate::Result<(Measured, SmallBallFit)> {
    let config = CurveConfig::new(LIL_CALIBRATION_EPSILONS.to_vec(), count, grid_size, seed);
    let curve = estimate_curve(&Process::Sfhe(*consts), &config)?;
    let fit = fit_rate(&curve, consts.theta)?;
    let (value, stderr) = lambda_from_fit(&fit, consts);
    Ok((Measured { value, stderr }, fit))
}

fn lil_cmd(a: &LilArgs, header: Header) -> Result<(), Failure> {
    let p = a.model.params()?;
    let c = derive(&p)?;
    let plan = lil::build_plan(&p, a.n_min, a.n_max, a.grid_points)?;
    let mode = match a.remainder {
        Remainder::Coupled => RemainderMode::Coupled,
        Remainder::Joint => RemainderMode::Joint,
    };
    let mut summary = Vec::new();
    let lambda = match a.lambda {
        Some(l) => {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("lambda {l} must be positive")));
            }
            Measured {
                value: l,
                stderr: a.lambda_stderr,
            }
        }
        None => {
            let (m, fit) = calibrate_lambda(&c, a.calibration_count, a.calibration_grid_size, a.seed)?;
            summary.push(format!("  \"calibration_exponent\": {},", num(fit.exponent)));
            summary.push(format!("  \"calibration_constant\": {},", num(fit.constant)));
            m
        }
    };
    let blocks = lil::simulate_blocks(&plan, &c, a.count, a.seed, mode)?;
    let stats = lil::compute_statistics(&blocks, &c, lambda);

    let mut table = Table::new(&[
        "realization",
        "n",
        "sup_u_over_psi",
        "sup_un_over_psi",
        "sup_yn_over_psi",
        "running_min",
        "running_min_u",
    ]);
    for r in &stats.per_n {
        table.push(vec![
            r.realization.to_string(),
            r.n.to_string(),
            num(r.sup_u_over_psi),
            num(r.sup_un_over_psi),
            num(r.sup_yn_over_psi),
            num(r.running_min),
            num(r.running_min_u),
        ]);
    }

    let pred = stats.predicted.value;
    let in_bracket = (0.5 * pred..=2.0 * pred).contains(&stats.median_running_min);
    summary.splice(
        0..0,
        [
            "{".to_string(),
            format!("  \"realizations\": {},", stats.realizations),
            format!("  \"n_min\": {},", plan.n_min),
            format!("  \"n_max\": {},", plan.n_max),
            format!("  \"n_max_clamped\": {},", plan.clamped()),
            format!("  \"lambda_hat\": {},", num(lambda.value)),
            format!("  \"lambda_hat_stderr\": {},", num(lambda.stderr)),
        ],
    );
    summary.extend([
        format!("  \"predicted_kappa_lambda_theta\": {},", num(pred)),
        format!("  \"predicted_stderr\": {},", num(stats.predicted.stderr)),
        format!("  \"bracket\": [{}, {}],", num(0.5 * pred), num(2.0 * pred)),
        format!("  \"median_running_min\": {},", num(stats.median_running_min)),
        format!("  \"median_running_min_u\": {},", num(stats.median_running_min_u)),
        format!("  \"median_running_min_half_grid\": {},", num(stats.median_running_min_half_grid)),
        format!("  \"refinement_gap\": {},", num(stats.refinement_gap())),
        format!("  \"ratio_to_predicted\": {},", num(stats.bracket_ratio())),
        format!("  \"in_bracket\": {in_bracket},"),
        format!("  \"monotone_violations\": {},", stats.monotone_violations),
        format!("  \"triangle_violations\": {}", stats.triangle_violations),
    ]);
    if a.lemmas {
        let last = summary.len() - 1;
        summary[last].push(',');
        let delta = a.delta.unwrap_or(10.0 * c.c21.sqrt());
        let gamma = a.gamma.unwrap_or(2.0 * pred);
        let head = head_sup(&c, a.count.max(1000), a.seed)?;
        let rep = lil::check_lemma_bounds(&blocks, &c, &head, delta, gamma, lambda.value);
        summary.push(format!("  \"lemma_delta\": {},", num(delta)));
        summary.push(format!("  \"lemma_gamma\": {},", num(gamma)));
        summary.push(format!("  \"lemma_slope\": {},", rep.slope.map(num).unwrap_or("null".into())));
        summary.push(format!("  \"lemma_predicted_slope\": {},", num(rep.predicted_slope)));
        summary.push(format!("  \"lemma_tail_ratio\": {},", num(rep.tail_ratio)));
        summary.push("  \"lemma_rows\": [".into());
        let k = rep.rows.len();
        for (i, r) in rep.rows.iter().enumerate() {
            summary.push(format!(
                "    {{\"n\": {}, \"head_exceed\": {}, \"head_bound\": {}, \"remainder_exceed\": {}, \"shape\": {}, \"small_ball\": {}, \"divergence_event\": {}}}{}",
                r.n,
                num(r.head_exceed),
                num(r.head_bound),
                num(r.remainder_exceed),
                num(r.shape),
                num(r.small_ball),
                num(r.divergence_event),
                if i + 1 < k { "," } else { "" }
            ));
        }
        summary.push("  ]".into());
    }
    summary.push("}".into());
    table.trailer.extend(summary.iter().cloned());

    let out = a.common.output.as_deref();
    output::emit(out, table.render(&header).as_bytes())?;
    if out.is_some_and(|p| p != Path::new("-")) {
        for line in &summary {
            println!("{line}");
        }
    }
    if a.plot {
        write_plot(PlotKind::Lil, out)?;
    }
    Ok(())
}

/// `sup_{[0,1]} |u|` per path on a 512-point grid, for the head event.
fn head_sup(c: &DerivedConstants, count: usize, seed: u64) -> crate::Result<Vec<f64>> {
    let grid = TimeGrid::uniform(512, 1.0)?;
    let (fine, _) = smallball::path_maxima(&Process::Sfhe(*c), &grid, count, seed ^ 0x5eed_4ead)?;
    Ok(fine)
}
