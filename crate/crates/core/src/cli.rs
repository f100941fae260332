//! Command-line driver.
//!
//! Exit codes: 0 on success, 2 for usage, parse and input errors, 3 for
//! numerical failures, 1 for anything else (including failed enclosure
//! checks in `casestudy`).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::expectation::{
    compute_bounds, relaxation_surface, saa_estimate, saa_surface, ExpectedValueRelaxation, SearchConfig, SurfacePoint,
};
use crate::expr::{parse_model, Model};
use crate::interval::IntervalBox;
use crate::odeint::IntegratorConfig;
use crate::staterelax::{terminal_relaxation, terminal_value, RelaxConfig};
use crate::stochastics::Partition;

#[derive(Debug, Parser)]
#[command(
    name = "stochrelax",
    version,
    about = "Relaxations and bounds for expected-value ODE costs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relaxation surface on a parameter grid, as CSV.
    Surface(SurfaceArgs),
    /// Lower and upper bounds over a parameter box, as JSON.
    Bounds(BoundsArgs),
    /// Sample-average estimate at one parameter point, as JSON.
    Saa(SaaArgs),
    /// Circuit case study: surfaces for 1, 16 and 64 cells, SAA surface and samples.
    Casestudy(CasestudyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Fixed-step RK4 with N steps instead of the adaptive method.
    #[arg(long, value_name = "N", conflicts_with_all = ["rtol", "atol"])]
    pub steps: Option<usize>,
    /// Relative tolerance of the adaptive method.
    #[arg(long, value_name = "R")]
    pub rtol: Option<f64>,
    /// Absolute tolerance of the adaptive method.
    #[arg(long, value_name = "A")]
    pub atol: Option<f64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

impl SolverArgs {
    fn integrator(&self) -> IntegratorConfig {
        match self.steps {
            Some(n) => IntegratorConfig::rk4(n),
            None => IntegratorConfig::rk45(self.rtol.unwrap_or(1e-8), self.atol.unwrap_or(1e-10)).with_mesh(2),
        }
    }

    fn relax_config(&self) -> RelaxConfig {
        RelaxConfig::default().with_integrator(self.integrator())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SurfaceArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Parameter sub-box, e.g. `0.1,0.3x0.1,0.3`.
    #[arg(long, value_name = "BOX")]
    pub pbox: Option<String>,
    /// Partition cells per uncertainty dimension, e.g. `4x4`.
    #[arg(long, value_name = "AxB")]
    pub cells: Option<String>,
    /// Grid points per parameter dimension, e.g. `11x11`.
    #[arg(long, value_name = "AxB")]
    pub grid: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output file (standard output if absent).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "BOX")]
    pub pbox: Option<String>,
    #[arg(long, value_name = "AxB")]
    pub cells: Option<String>,
    /// Evaluation budget of the lower-bounding search.
    #[arg(long, value_name = "N", default_value_t = 500)]
    pub budget: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SaaArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Parameter point, e.g. `0.2,0.2` (default: centre of the parameter box).
    #[arg(long, value_name = "P")]
    pub point: Option<String>,
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub samples: usize,
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CasestudyArgs {
    /// Model file to use instead of the built-in circuit.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Override of the final time.
    #[arg(long, value_name = "T")]
    pub tf: Option<f64>,
    #[arg(long, value_name = "AxB")]
    pub grid: Option<String>,
    /// Samples per point of the SAA surface.
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub samples: usize,
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// A failed command: message plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numeric() {
            3
        } else {
            match e {
                Error::Parse { .. }
                | Error::Dimension(_)
                | Error::InvalidInput(_)
                | Error::OutOfRange { .. }
                | Error::CellOutsideSupport(_)
                | Error::Io(_) => 2,
                _ => 1,
            }
        };
        Failure::new(code, e.to_string())
    }
}

/// Largest cell or grid-point count accepted from the command line.
const MAX_TENSOR_SIZE: usize = 1_000_000;

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses a box like `0.1,0.3x0.1,0.3`.
pub fn parse_box_spec(s: &str) -> crate::Result<IntervalBox> {
    let bad = |why: &str| Error::InvalidInput(format!("bad box `{s}`: {why}"));
    let mut bounds = Vec::new();
    for part in s.split('x') {
        let (lo, hi) = part
            .split_once(',')
            .ok_or_else(|| bad("expected `lo,hi` per component"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad("unreadable number"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("unreadable number"))?;
        bounds.push((lo, hi));
    }
    IntervalBox::from_bounds(&bounds)
}

/// Parses counts like `8x8`. Every count must be positive.
pub fn parse_counts(s: &str) -> crate::Result<Vec<usize>> {
    s.split('x')
        .map(|c| match c.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidInput(format!("bad count `{c}` in `{s}`"))),
        })
        .collect()
}

/// Parses a comma-separated point like `0.2,0.2`.
pub fn parse_point(s: &str) -> crate::Result<Vec<f64>> {
    s.split(',')
        .map(|v| match v.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::InvalidInput(format!("bad coordinate `{v}` in `{s}`"))),
        })
        .collect()
}

/// Formats like C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    const P: i32 = 17;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_fraction(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn load_model(path: &Path) -> CliResult<Model> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(2, format!("cannot read model `{}`: {e}", path.display())))?;
    parse_model(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn resolve_pbox(model: &Model, spec: Option<&str>) -> CliResult<IntervalBox> {
    let Some(spec) = spec else {
        return Ok(model.pbox.clone());
    };
    let pbox = parse_box_spec(spec)?;
    if pbox.dim() != model.dims.np {
        return Err(Error::Dimension(format!(
            "--pbox has {} components, model has {} parameters",
            pbox.dim(),
            model.dims.np
        ))
        .into());
    }
    if !pbox.is_subset_of(&model.pbox) {
        return Err(Error::InvalidInput(format!("--pbox {pbox} is not inside {}", model.pbox)).into());
    }
    Ok(pbox)
}

fn resolve_counts(spec: Option<&str>, dim: usize, default: usize, flag: &str) -> CliResult<Vec<usize>> {
    let counts = match spec {
        Some(s) => parse_counts(s)?,
        None => vec![default; dim],
    };
    if counts.len() != dim {
        return Err(Error::Dimension(format!("{flag} needs {dim} counts, got {}", counts.len())).into());
    }
    let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
    if !total.is_some_and(|t| t <= MAX_TENSOR_SIZE) {
        return Err(Error::InvalidInput(format!("{flag} asks for more than {MAX_TENSOR_SIZE} points")).into());
    }
    Ok(counts)
}

fn partition_for(model: &Model, cells: &[usize]) -> CliResult<Partition> {
    Ok(Partition::uniform(&model.wbox, &model.dist, cells)?)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut (dyn Write + Send)) -> CliResult<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::new(1, format!("cannot write `{}`: {e}", path.display())))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::new(1, format!("cannot write output: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn csv(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format_g17(*v));
        }
        s.push('\n');
    }
    s
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn surface_csv(np: usize, rows: &[SurfacePoint]) -> String {
    let mut header = names("p", np);
    header.extend(["gcv".to_string(), "gcc".to_string()]);
    csv(
        &header,
        rows.iter().map(|r| {
            let mut v = r.p.clone();
            v.extend([r.gcv, r.gcc]);
            v
        }),
    )
}

fn gap_range(rows: &[SurfacePoint]) -> (f64, f64) {
    rows.iter()
        .map(|r| r.gcc - r.gcv)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)))
}

fn cmd_surface(args: &SurfaceArgs, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> CliResult<()> {
    let start = Instant::now();
    let model = load_model(&args.model)?;
    let pbox = resolve_pbox(&model, args.pbox.as_deref())?;
    let cells = resolve_counts(args.cells.as_deref(), model.dims.nw, 1, "--cells")?;
    let grid = resolve_counts(args.grid.as_deref(), model.dims.np, 11, "--grid")?;
    let partition = partition_for(&model, &cells)?;
    let rows = relaxation_surface(&model, &pbox, &partition, &grid, &args.solver.relax_config())?;
    emit(args.out.as_deref(), &surface_csv(model.dims.np, &rows), stdout)?;
    let (min_gap, max_gap) = gap_range(&rows);
    let _ = writeln!(
        stderr,
        "rows {} cells {} min_gap {} max_gap {} seconds {:.3}",
        rows.len(),
        partition.len(),
        format_g17(min_gap),
        format_g17(max_gap),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs, stdout: &mut (dyn Write + Send)) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let pbox = resolve_pbox(&model, args.pbox.as_deref())?;
    let cells = resolve_counts(args.cells.as_deref(), model.dims.nw, 1, "--cells")?;
    let partition = partition_for(&model, &cells)?;
    let search = SearchConfig {
        evaluation_budget: args.budget,
        ..SearchConfig::default()
    };
    let report = compute_bounds(&model, &pbox, &partition, &search, &args.solver.relax_config())?;
    emit(args.out.as_deref(), &to_json(&report), stdout)
}

#[derive(Serialize)]
struct SaaReport {
    p: Vec<f64>,
    mean: f64,
    stderr: f64,
    n: usize,
    seed: u64,
}

fn cmd_saa(args: &SaaArgs, stdout: &mut (dyn Write + Send)) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let p = match &args.point {
        Some(s) => parse_point(s)?,
        None => model.pbox.midpoint(),
    };
    if p.len() != model.dims.np {
        return Err(Error::Dimension(format!(
            "--point has {} coordinates, model has {}",
            p.len(),
            model.dims.np
        ))
        .into());
    }
    let est = saa_estimate(&model, &p, args.samples, args.seed, &args.solver.integrator())?;
    let report = SaaReport {
        p,
        mean: est.mean,
        stderr: est.stderr,
        n: est.n,
        seed: est.seed,
    };
    emit(args.out.as_deref(), &to_json(&report), stdout)
}

/// Partition sizes of the case study, as cells per uncertainty dimension.
const CASE_PARTITIONS: [usize; 3] = [1, 4, 8];
const CASE_SAMPLES: usize = 50;
const SANDWICH_SLACK: f64 = 1e-6;

fn cmd_casestudy(args: &CasestudyArgs, stderr: &mut (dyn Write + Send)) -> CliResult<()> {
    let start = Instant::now();
    let mut model = match &args.model {
        Some(path) => load_model(path)?,
        None => Model::circuit(),
    };
    if let Some(tf) = args.tf {
        model = model.with_final_time(tf)?;
    }
    let grid = resolve_counts(args.grid.as_deref(), model.dims.np, 11, "--grid")?;
    let cfg = args.solver.relax_config();
    let np = model.dims.np;
    let nw = model.dims.nw;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::new(1, format!("cannot create `{}`: {e}", args.out.display())))?;
    let write = |name: &str, text: &str| {
        let path = args.out.join(name);
        std::fs::write(&path, text).map_err(|e| Failure::new(1, format!("cannot write `{}`: {e}", path.display())))
    };

    let saa = saa_surface(&model, &model.pbox, &grid, args.samples, args.seed, &cfg.integrator)?;
    let mut header = names("p", np);
    header.extend(["mean".to_string(), "stderr".to_string()]);
    write(
        &format!("saa{}.csv", args.samples),
        &csv(
            &header,
            saa.iter().map(|s| {
                let mut v = s.p.clone();
                v.extend([s.mean, s.stderr]);
                v
            }),
        ),
    )?;

    let mut failures = Vec::new();
    for per_dim in CASE_PARTITIONS {
        let partition = partition_for(&model, &vec![per_dim; nw])?;
        let rows = relaxation_surface(&model, &model.pbox, &partition, &grid, &cfg)?;
        write(
            &format!("surface_cells{}.csv", partition.len()),
            &surface_csv(np, &rows),
        )?;
        let mut bad = 0;
        for (r, s) in rows.iter().zip(&saa) {
            let slack = 3.0 * s.stderr;
            if !(r.gcv <= r.gcc && r.gcv - slack <= s.mean && s.mean <= r.gcc + slack) {
                bad += 1;
            }
        }
        let (min_gap, max_gap) = gap_range(&rows);
        let _ = writeln!(
            stderr,
            "cells {:>2}: min_gap {} max_gap {} enclosure failures {bad}",
            partition.len(),
            format_g17(min_gap),
            format_g17(max_gap)
        );
        if bad > 0 {
            failures.push(format!("{bad} SAA enclosure failures with {} cells", partition.len()));
        }
    }

    // Terminal values at random (p, w) against the terminal relaxations on
    // the full box.
    let single = Partition::single(&model.dist)?;
    let relax = ExpectedValueRelaxation::new(&model, &model.pbox, &single, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let mut rows = Vec::with_capacity(CASE_SAMPLES);
    let mut bad = 0;
    for _ in 0..CASE_SAMPLES {
        let p: Vec<f64> = model
            .pbox
            .iter()
            .map(|iv| rng.random_range(iv.lo()..=iv.hi()))
            .collect();
        let w = model.dist.sample_one(&mut rng);
        let g = terminal_value(&model, &p, &w, &cfg.integrator)?;
        let (gcv, gcc) = terminal_relaxation(&model, &p, &w, &relax.cell_bounds()[0], &cfg)?;
        if !(gcv - SANDWICH_SLACK <= g && g <= gcc + SANDWICH_SLACK) {
            bad += 1;
        }
        let mut row = p;
        row.extend(w);
        row.extend([g, gcv, gcc]);
        rows.push(row);
    }
    let mut header = names("p", np);
    header.extend(names("w", nw));
    header.extend(["g".to_string(), "gcv".to_string(), "gcc".to_string()]);
    write("samples.csv", &csv(&header, rows))?;
    let _ = writeln!(
        stderr,
        "samples: {CASE_SAMPLES} terminal values, sandwich failures {bad}"
    );
    if bad > 0 {
        failures.push(format!("{bad} terminal sandwich failures"));
    }
    let _ = writeln!(stderr, "seconds {:.3}", start.elapsed().as_secs_f64());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            1,
            format!("enclosure checks failed: {}", failures.join("; ")),
        ))
    }
}

fn jobs(command: &Command) -> Option<usize> {
    match command {
        Command::Surface(a) => a.solver.jobs,
        Command::Bounds(a) => a.solver.jobs,
        Command::Saa(a) => a.solver.jobs,
        Command::Casestudy(a) => a.solver.jobs,
    }
}

fn dispatch(cli: &Cli, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> CliResult<()> {
    let body = |stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)| match &cli.command {
        Command::Surface(a) => cmd_surface(a, stdout, stderr),
        Command::Bounds(a) => cmd_bounds(a, stdout),
        Command::Saa(a) => cmd_saa(a, stdout),
        Command::Casestudy(a) => cmd_casestudy(a, stderr),
    };
    match jobs(&cli.command) {
        None => body(stdout, stderr),
        Some(0) => Err(Failure::new(2, "--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::new(1, format!("cannot start worker pool: {e}")))?;
            pool.install(|| body(stdout, stderr))
        }
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut (dyn Write + Send) = if code == 0 { stdout } else { stderr };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["stochrelax"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn model_file(dir: &Path, name: &str, text: &str) -> String {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(1e17), "1e+17");
        assert_eq!(format_g17(1e16), "10000000000000000");
        assert_eq!(format_g17(0.0001), "0.0001");
        assert_eq!(format_g17(f64::NAN), "nan");
    }

    #[test]
    fn box_count_and_point_parsers() {
        let b = parse_box_spec("0.1,0.3x0.15,0.2").unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(b[1].lo(), 0.15);
        assert!(parse_box_spec("0.3,0.1").is_err());
        assert!(parse_box_spec("0.1;0.3").is_err());
        assert!(parse_box_spec("").is_err());
        assert_eq!(parse_counts("8x8").unwrap(), vec![8, 8]);
        assert_eq!(parse_counts("3").unwrap(), vec![3]);
        assert!(parse_counts("0x2").is_err());
        assert!(parse_counts("2x").is_err());
        assert_eq!(parse_point("0.2, 0.25").unwrap(), vec![0.2, 0.25]);
        assert!(parse_point("0.2,inf").is_err());
    }

    #[test]
    fn surface_writes_one_row_per_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let model = model_file(dir.path(), "c.model", &Model::circuit().to_model_text());
        let out = dir.path().join("s.csv");
        let (code, _, err) = run_args(&[
            "surface",
            "--model",
            &model,
            "--cells",
            "2x2",
            "--grid",
            "3x4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        let text = std::fs::read_to_string(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "p1,p2,gcv,gcc");
        assert_eq!(lines.len(), 13);
        assert!(err.contains("max_gap"));
    }

    #[test]
    fn usage_and_input_errors_exit_with_2() {
        let (code, _, err) = run_args(&["surface", "--model", "/nonexistent/x.model"]);
        assert_eq!(code, 2);
        assert!(err.contains("cannot read model"));
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        let dir = tempfile::tempdir().unwrap();
        let model = model_file(dir.path(), "c.model", &Model::circuit().to_model_text());
        assert_eq!(run_args(&["saa", "--model", &model, "--samples", "1"]).0, 2);
        assert_eq!(run_args(&["surface", "--model", &model, "--cells", "2"]).0, 2);
        assert_eq!(run_args(&["surface", "--model", &model, "--pbox", "0,1x0,1"]).0, 2);
        assert_eq!(
            run_args(&["bounds", "--model", &model, "--steps", "10", "--rtol", "1e-6"]).0,
            2
        );
        assert_eq!(run_args(&["surface", "--model", &model, "--jobs", "0"]).0, 2);
        let broken = model_file(dir.path(), "b.model", "[dims]\nnp = two\n");
        let (code, _, err) = run_args(&["surface", "--model", &broken]);
        assert_eq!(code, 2);
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn numeric_failures_exit_with_3() {
        let dir = tempfile::tempdir().unwrap();
        let text = "[dims]\nnp = 1\nnw = 1\nnx = 1\n[horizon]\nt0 = 0\ntf = 5\n[pbox]\n0.1, 0.3\n\
                    [wbox]\n1, 2\n[dist]\nuniform 1 2\n[f]\nf1 = x1^2\n[x0]\nx0_1 = w1\n[g]\ng = x1\n";
        let model = model_file(dir.path(), "blow.model", text);
        let (code, _, err) = run_args(&["surface", "--model", &model, "--grid", "2"]);
        assert_eq!(code, 3, "{err}");
        assert!(err.contains("blew up"));
    }

    #[test]
    fn bounds_on_linear_model_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let text = include_str!("../models/linear.model");
        let model = model_file(dir.path(), "lin.model", text);
        let (code, out, err) = run_args(&["bounds", "--model", &model, "--cells", "4"]);
        assert_eq!(code, 0, "{err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
        assert!((hi - lo).abs() < 1e-6, "{lo} {hi}");
        assert_eq!(v["partition_cells"], 4);
    }

    #[test]
    fn degenerate_pbox_bounds_are_the_point_relaxation() {
        let dir = tempfile::tempdir().unwrap();
        let model = model_file(dir.path(), "c.model", &Model::circuit().to_model_text());
        let (code, out, err) = run_args(&[
            "bounds",
            "--model",
            &model,
            "--pbox",
            "0.2,0.2x0.2,0.2",
            "--cells",
            "2x2",
        ]);
        assert_eq!(code, 0, "{err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let m = Model::circuit();
        let part = Partition::uniform(&m.wbox, &m.dist, &[2, 2]).unwrap();
        let point = IntervalBox::point(&[0.2, 0.2]).unwrap();
        let (cv, cc) =
            crate::expectation::relax_expected_value(&m, &point, &part, &[0.2, 0.2], &RelaxConfig::default()).unwrap();
        assert!((v["lower"].as_f64().unwrap() - cv).abs() < 1e-9);
        assert!((v["upper"].as_f64().unwrap() - cc).abs() < 1e-9);
        assert_eq!(v["evaluations"], 1);
    }

    #[test]
    fn saa_report_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let model = model_file(dir.path(), "c.model", &Model::circuit().to_model_text());
        let args = [
            "saa",
            "--model",
            &model,
            "--point",
            "0.2,0.2",
            "--samples",
            "40",
            "--seed",
            "4",
        ];
        let (code, a, err) = run_args(&args);
        assert_eq!(code, 0, "{err}");
        assert_eq!(a, run_args(&args).1);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["n"], 40);
        assert_eq!(v["seed"], 4);
        assert!(v["stderr"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn coarse_partition_has_the_larger_gap() {
        let dir = tempfile::tempdir().unwrap();
        let model = model_file(dir.path(), "c.model", &Model::circuit().to_model_text());
        let max_gap = |cells: &str| {
            let (code, out, err) = run_args(&["surface", "--model", &model, "--cells", cells, "--grid", "3x3"]);
            assert_eq!(code, 0, "{err}");
            out.lines()
                .skip(1)
                .map(|l| {
                    let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                    v[3] - v[2]
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        assert!(max_gap("1x1") > max_gap("8x8"));
    }

    #[test]
    fn casestudy_seed_only_moves_sampled_outputs() {
        let run_case = |seed: &str| {
            let dir = tempfile::tempdir().unwrap();
            let out = dir.path().to_str().unwrap().to_string();
            let (code, _, err) = run_args(&[
                "casestudy",
                "--grid",
                "2x2",
                "--samples",
                "20",
                "--seed",
                seed,
                "--out",
                &out,
            ]);
            assert_eq!(code, 0, "{err}");
            let read = |n: &str| std::fs::read_to_string(dir.path().join(n)).unwrap();
            [
                "surface_cells1.csv",
                "surface_cells16.csv",
                "surface_cells64.csv",
                "saa20.csv",
                "samples.csv",
            ]
            .map(read)
        };
        let (a, b) = (run_case("1"), run_case("2"));
        assert_eq!(a[..3], b[..3]);
        assert_ne!(a[3], b[3]);
        assert_ne!(a[4], b[4]);
        assert_eq!(a[0].lines().count(), 5);
    }

    #[test]
    fn help_exits_cleanly() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("casestudy"));
    }
}
