use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use volstream::abr::Scheme;
use volstream::acuity::{AcuityModel, AcuityParams, DensityModel};
use volstream::io::{self, BandwidthProfile, Config, MotionProfile, SyntheticParams};
use volstream::predictor::PredictionMode;
use volstream::sim::{self, SessionCase};
use volstream::voxelizer;
use volstream::{Error, Result};

#[derive(Parser)]
#[command(name = "volstream", version, about = "Acuity-aware volumetric video streaming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one session with one scheme.
    Run(RunArgs),
    /// Run every scheme over a set of sessions.
    Compare(CompareArgs),
    /// Measure the density map of a point cloud.
    Ladder(LadderArgs),
    /// Print the boundary density against viewing distance.
    Acuity(AcuityArgs),
    /// Trace utilities.
    #[command(subcommand)]
    Traces(TracesCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scheme: Option<String>,
    /// Bandwidth trace (`t_s,mbps`); needs `--pose` too.
    #[arg(long, requires = "pose")]
    bandwidth: Option<PathBuf>,
    /// Pose trace (`t_s,x,y,z,qw,qx,qy,qz`); needs `--bandwidth` too.
    #[arg(long, requires = "bandwidth")]
    pose: Option<PathBuf>,
    /// Feed the true future pose and bandwidth to the scheme.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict to these schemes (comma separated).
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct LadderArgs {
    /// Point cloud, one `x y z` per line.
    #[arg(long)]
    cloud: PathBuf,
    /// Reference voxel size, meters.
    #[arg(long, default_value_t = 0.002)]
    v0: f64,
    /// Voxel sizes to measure; defaults to v0 times 1, 2, 4, ... 32.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct AcuityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d0: Option<f64>,
    #[arg(long)]
    ppi_device: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    theta_arcmin: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    from: f64,
    #[arg(long, default_value_t = 5.0)]
    to: f64,
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum TracesCommand {
    /// Write a synthetic bandwidth and pose trace pair.
    Gen(GenArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "far-orbit")]
    motion: String,
    #[arg(long, default_value = "mid")]
    bandwidth: String,
    /// Media duration, seconds.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "traces")]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<(Config, PathBuf)> {
    match path {
        Some(p) => {
            let cfg = Config::load(p)?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((cfg, base))
        }
        None => Ok((Config::default(), PathBuf::from("."))),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let (cfg, base) = load_config(args.common.config.as_deref())?;
    let mut session = cfg.resolve(&base)?;
    if args.oracle {
        session.prediction = PredictionMode::Oracle;
    }
    let scheme = match &args.scheme {
        Some(s) => s.parse()?,
        None => cfg.scheme.unwrap_or(Scheme::Proposed),
    };
    let case = match (&args.bandwidth, &args.pose) {
        (Some(b), Some(p)) => SessionCase {
            name: "cli".into(),
            traces: io::SessionTraces {
                bandwidth: io::parse_bandwidth_trace(b)?,
                poses: io::parse_pose_trace(p)?,
                content: cfg.content_box()?,
            },
        },
        _ => cfg
            .sessions(&base, args.common.seed)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::InvalidInput("configuration lists no sessions".into()))?,
    };
    let report = sim::run_session(&session, &case.traces, scheme)?;
    let out = &args.common.out;
    match args.common.format {
        Format::Csv => io::write_chunks_csv(&out.join("chunks.csv"), &report.chunks)?,
        Format::Json => io::write_json(&out.join("chunks.json"), &report.chunks)?,
    }
    io::write_summary_json(&out.join("summary.json"), &report.summary)?;
    let s = &report.summary;
    println!(
        "{}: {} chunks, total QoE {:.3}, mean Q1 {:.3}, rebuffering {:.3} s, {} bytes",
        s.scheme, s.chunks, s.total_qoe, s.mean_q1, s.total_q2, s.total_bytes
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let (cfg, base) = load_config(args.common.config.as_deref())?;
    let mut session = cfg.resolve(&base)?;
    if args.oracle {
        session.prediction = PredictionMode::Oracle;
    }
    let schemes = if args.scheme.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        args.scheme.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>>>()?
    };
    let cases = cfg.sessions(&base, args.common.seed)?;
    let rows = sim::run_experiment(&session, &cases, &schemes)?;
    io::write_comparison(&args.common.out, &rows, matches!(args.common.format, Format::Json))?;
    for scheme in &schemes {
        let mine: Vec<_> = rows.iter().filter(|r| r.report.summary.scheme == *scheme).collect();
        let n = mine.len() as f64;
        println!(
            "{:<17} mean session QoE {:>10.3}  mean normalized {:.4}  mean bytes {:.0}",
            scheme.name(),
            mine.iter().map(|r| r.report.summary.total_qoe).sum::<f64>() / n,
            mine.iter().map(|r| r.normalized_qoe).sum::<f64>() / n,
            mine.iter().map(|r| r.report.summary.total_bytes as f64).sum::<f64>() / n,
        );
    }
    Ok(())
}

fn ladder(args: LadderArgs) -> Result<()> {
    let cloud = io::read_xyz_cloud(&args.cloud)?;
    let grid = if args.grid.is_empty() {
        (0..6).map(|s| args.v0 * f64::from(1u32 << s)).collect()
    } else {
        args.grid
    };
    let map = voxelizer::build_density_map(&cloud, args.v0, &grid)?;
    match (&args.out, args.format) {
        (Some(p), Format::Csv) => io::write_density_map(p, &map)?,
        (Some(p), Format::Json) => io::write_json(p, &map)?,
        (None, Format::Csv) => {
            println!("voxel_m,eta");
            for (v, eta) in map.pairs() {
                println!("{v},{eta}");
            }
        }
        (None, Format::Json) => println!("{}", serde_json::to_string_pretty(&map).expect("serializable")),
    }
    Ok(())
}

fn acuity(args: AcuityArgs) -> Result<()> {
    let (cfg, _) = load_config(args.config.as_deref())?;
    let a = &cfg.acuity;
    let params = AcuityParams {
        d0: args.d0.unwrap_or(a.d0),
        v0: args.v0.unwrap_or(a.v0),
        ppi_device: args.ppi_device.unwrap_or(a.ppi_device),
        theta_arcmin: args.theta_arcmin.unwrap_or(a.theta_arcmin),
    };
    let model = AcuityModel::new(params, DensityModel::parametric(params.v0, a.density_alpha)?)?;
    if !(args.step > 0.0 && args.from > 0.0 && args.to >= args.from) {
        return Err(Error::InvalidInput("distance sweep needs 0 < from <= to and step > 0".into()));
    }
    let n = ((args.to - args.from) / args.step + 1e-9).floor() as usize;
    let rows = (0..=n)
        .map(|k| model.evaluate(args.from + k as f64 * args.step))
        .collect::<Result<Vec<_>>>()?;
    match args.format {
        Format::Csv => {
            println!("distance_m,ppi_t,p_t,voxel_m,eta_star,clamped");
            for r in &rows {
                let clamp = r.clamped.map_or(String::new(), |c| format!("{c:?}"));
                println!("{},{},{},{},{},{}", r.distance, r.ppi_t, r.p_t, r.voxel, r.eta_star, clamp);
            }
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).expect("serializable")),
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let motion: MotionProfile = args.motion.parse()?;
    let bandwidth: BandwidthProfile = args.bandwidth.parse()?;
    let traces = io::generate_synthetic_traces(&SyntheticParams::new(motion, bandwidth, args.duration), args.seed)?;
    io::write_bandwidth_trace(&args.out.join("bandwidth.csv"), &traces.bandwidth)?;
    io::write_pose_trace(&args.out.join("pose.csv"), &traces.poses)?;
    println!(
        "wrote {} bandwidth samples and {} poses to {}",
        traces.bandwidth.samples().len(),
        traces.poses.poses().len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Ladder(a) => ladder(a),
        Command::Acuity(a) => acuity(a),
        Command::Traces(TracesCommand::Gen(a)) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
