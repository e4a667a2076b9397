//! Command-line surface: density tables, Monte Carlo sampling, validation
//! suites, and the elliptic solver, all emitting deterministic CSV/JSON.
//!
//! Exit codes: 0 success, 1 computation or suite failure, 2 usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fapchan::analytic::fap_density;
use fapchan::model::{BoundaryOffset, ChannelParams, SourceOffset};
use fapchan::pde::{solve_bvp_2d, write_field_csv, BoundaryData, GridConfig};
use fapchan::simulate::{default_horizon, simulate_hits, write_hits_csv, SimConfig};
use fapchan::stats::fmt17;
use fapchan::suites::{run_suite, SuiteOptions, SUITE_NAMES};
use fapchan::Error;

#[derive(Parser)]
#[command(
    name = "fapchan",
    about = "First-arrival-position densities for drift-diffusion channels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form arrival density on a sweep or a point
    Density(DensityArgs),
    /// Simulate particle paths and write one CSV row per particle
    Sample(SampleArgs),
    /// Run validation suites and write their JSON reports
    Validate(ValidateArgs),
    /// Solve the absorbing-boundary BVP and write the field as CSV
    Bvp(BvpArgs),
}

/// Channel flags shared by every subcommand. Drift must list exactly one
/// component per dimension; silent padding invites sign/axis mistakes.
#[derive(Args)]
struct ChannelFlags {
    /// Spatial dimension: 2 or 3
    #[arg(long)]
    dim: usize,
    /// Drift vector, comma separated, length == dim (last entry = normal component)
    #[arg(long, allow_hyphen_values = true)]
    drift: String,
    /// Diffusion scale sigma^2 (diffusion coefficient D = sigma^2 / 2)
    #[arg(long)]
    sigma2: f64,
    /// Source distance from the receiver plane
    #[arg(long)]
    distance: f64,
}

impl ChannelFlags {
    fn build(&self) -> Result<ChannelParams, Error> {
        let drift = parse_csv_floats(&self.drift)?;
        if drift.len() != self.dim {
            return Err(Error::InvalidParams(format!(
                "--drift has {} components but --dim is {}",
                drift.len(),
                self.dim
            )));
        }
        ChannelParams::new(self.dim, drift, self.sigma2, self.distance)
    }
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    channel: ChannelFlags,
    /// Sweep of arrival offsets lo:hi:step (first tangential coordinate)
    #[arg(long, allow_hyphen_values = true, conflicts_with = "point")]
    xi_range: Option<String>,
    /// Single arrival offset: one value in 2D, "xi,eta" in 3D
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// Fixed second tangential coordinate for 3D sweeps
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    eta: f64,
    /// Source tangential offset, comma separated, length == dim - 1
    #[arg(long, allow_hyphen_values = true)]
    source: Option<String>,
    /// Output format
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    channel: ChannelFlags,
    /// Number of particles
    #[arg(short = 'n', long = "particles")]
    particles: u64,
    /// Euler-Maruyama step
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Time horizon (default 200 d^2 / sigma^2)
    #[arg(long)]
    t_max: Option<f64>,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent RNG streams (fixes the reproducibility granularity)
    #[arg(long, default_value_t = 8)]
    streams: u64,
    /// Disable the Brownian-bridge absorption correction
    #[arg(long)]
    no_bridge: bool,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suite to run: bessel, oracle2d, oracle3d, normalization, montecarlo,
    /// bvp, or all
    #[arg(long, default_value = "all")]
    suite: String,
    /// Scale sample sizes and grids down for CI; size-dependent gates widen
    #[arg(long)]
    fast: bool,
    /// Report path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BvpArgs {
    #[command(flatten)]
    channel: ChannelFlags,
    /// Receiver boundary data: indicator:center:halfwidth or
    /// gaussian:center:width
    #[arg(long, default_value = "indicator:0:1", allow_hyphen_values = true)]
    data: String,
    /// Domain half width L (solve on [-L, L] x [0, H])
    #[arg(long, default_value_t = 20.0)]
    half_width: f64,
    /// Domain height H
    #[arg(long, default_value_t = 8.0)]
    height: f64,
    /// Grid spacing h (must divide 2L and H)
    #[arg(long, default_value_t = 0.05)]
    spacing: f64,
    /// Relative residual reduction target
    #[arg(long, default_value_t = 1e-8)]
    solver_tolerance: f64,
    /// Iteration cap
    #[arg(long, default_value_t = 200_000)]
    max_iterations: usize,
    /// Output path for the field CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_csv_floats(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParams(format!("cannot parse `{part}` as a number")))
        })
        .collect()
}

/// lo:hi:step with step > 0 and lo <= hi; endpoints inclusive up to a
/// half-ulp nudge so -5:5:0.1 yields 101 rows.
fn parse_range(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParams(format!("range `{text}` is not lo:hi:step")));
    }
    let nums = parse_csv_floats(&parts.join(","))?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || hi < lo || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParams(format!(
            "range `{text}` needs finite lo <= hi and step > 0"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

fn open_output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Usage mistakes (bad flags, bad configuration) exit 2; failures inside a
/// sound computation exit 1.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidParams(_) | Error::Domain(_) | Error::EmptyInput(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Density(args) => cmd_density(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Bvp(args) => cmd_bvp(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn io_fail(err: io::Error) -> Error {
    Error::Domain(format!("output failed: {err}"))
}

fn cmd_density(args: DensityArgs) -> Result<u8, Error> {
    let params = args.channel.build()?;
    let source = match &args.source {
        Some(text) => SourceOffset::new(parse_csv_floats(text)?)?,
        None => SourceOffset::origin(params.dimension),
    };
    source.check_dimension(&params)?;

    let arrivals: Vec<BoundaryOffset> = match (&args.xi_range, &args.point) {
        (Some(range), None) => {
            let xs = parse_range(range)?;
            match params.dimension {
                2 => xs.into_iter().map(BoundaryOffset::along).collect(),
                _ => xs.into_iter().map(|x| BoundaryOffset::plane(x, args.eta)).collect(),
            }
        }
        (None, Some(point)) => {
            let coords = parse_csv_floats(point)?;
            vec![BoundaryOffset::new(coords)?]
        }
        _ => {
            return Err(Error::InvalidParams(
                "pass exactly one of --xi-range or --point".into(),
            ))
        }
    };

    let mut rows = Vec::with_capacity(arrivals.len());
    for arrival in &arrivals {
        arrival.check_dimension(&params)?;
        rows.push((arrival.coords().to_vec(), fap_density(&params, &source, arrival)?.value));
    }

    let mut out = open_output(&args.out).map_err(io_fail)?;
    if args.format == "json" {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|(coords, density)| {
                let mut obj = serde_json::Map::new();
                obj.insert("xi".into(), json!(coords[0]));
                if coords.len() > 1 {
                    obj.insert("eta".into(), json!(coords[1]));
                }
                obj.insert("density".into(), json!(density));
                serde_json::Value::Object(obj)
            })
            .collect();
        let doc = json!({
            "params": params,
            "source": source.coords(),
            "rows": json_rows,
        });
        serde_json::to_writer_pretty(&mut out, &doc)
            .map_err(|e| Error::Domain(format!("output failed: {e}")))?;
        out.write_all(b"\n").map_err(io_fail)?;
    } else {
        let header = if params.dimension == 2 { "xi,density\n" } else { "xi,eta,density\n" };
        out.write_all(header.as_bytes()).map_err(io_fail)?;
        for (coords, density) in &rows {
            let mut fields: Vec<String> = coords.iter().map(|c| fmt17(*c)).collect();
            fields.push(fmt17(*density));
            writeln!(out, "{}", fields.join(",")).map_err(io_fail)?;
        }
    }
    out.flush().map_err(io_fail)?;
    Ok(0)
}

fn cmd_sample(args: SampleArgs) -> Result<u8, Error> {
    let params = args.channel.build()?;
    let t_max = args.t_max.unwrap_or_else(|| default_horizon(&params));
    let config =
        SimConfig::new(args.particles, args.dt, t_max, args.seed, args.streams, !args.no_bridge)?;
    let records = simulate_hits(&params, &config)?;

    let absorbed: Vec<&fapchan::simulate::HitRecord> =
        records.iter().filter(|r| r.is_absorbed()).collect();
    let fraction = absorbed.len() as f64 / records.len() as f64;
    let mean_tau = if absorbed.is_empty() {
        f64::NAN
    } else {
        absorbed.iter().map(|r| r.hit_time).sum::<f64>() / absorbed.len() as f64
    };
    eprintln!(
        "absorbed fraction {fraction:.6} ({}/{}), mean hit time of absorbed {mean_tau:.6}",
        absorbed.len(),
        records.len()
    );

    let mut out = open_output(&args.out).map_err(io_fail)?;
    write_hits_csv(&records, params.dimension, &mut out).map_err(io_fail)?;
    out.flush().map_err(io_fail)?;
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, Error> {
    if args.suite != "all" && !SUITE_NAMES.contains(&args.suite.as_str()) {
        return Err(Error::InvalidParams(format!(
            "unknown suite `{}`; expected one of {SUITE_NAMES:?} or all",
            args.suite
        )));
    }
    let reports = run_suite(&args.suite, &SuiteOptions { fast: args.fast })?;
    for report in &reports {
        eprintln!("suite {}: {}", report.name, if report.pass { "pass" } else { "FAIL" });
    }
    let all_pass = reports.iter().all(|r| r.pass);
    let mut out = open_output(&args.out).map_err(io_fail)?;
    serde_json::to_writer_pretty(&mut out, &reports)
        .map_err(|e| Error::Domain(format!("output failed: {e}")))?;
    out.write_all(b"\n").map_err(io_fail)?;
    out.flush().map_err(io_fail)?;
    Ok(if all_pass { 0 } else { 1 })
}

fn parse_boundary_data(text: &str) -> Result<BoundaryData, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParams(format!(
            "boundary data `{text}` is not kind:center:width"
        )));
    }
    let nums = parse_csv_floats(&format!("{},{}", parts[1], parts[2]))?;
    match parts[0] {
        "indicator" => BoundaryData::indicator(nums[0], nums[1]),
        "gaussian" => BoundaryData::gaussian_bump(nums[0], nums[1]),
        other => Err(Error::InvalidParams(format!(
            "unknown boundary data kind `{other}`; expected indicator or gaussian"
        ))),
    }
}

fn cmd_bvp(args: BvpArgs) -> Result<u8, Error> {
    let params = args.channel.build()?;
    let data = parse_boundary_data(&args.data)?;
    let grid = GridConfig::new(
        args.half_width,
        args.height,
        args.spacing,
        args.solver_tolerance,
        args.max_iterations,
    )?;
    let field = solve_bvp_2d(&params, &data, &grid)?;
    let mut out = open_output(&args.out).map_err(io_fail)?;
    write_field_csv(&field, &mut out).map_err(io_fail)?;
    out.flush().map_err(io_fail)?;
    Ok(0)
}
