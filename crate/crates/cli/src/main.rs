//! `snowsim`: augment a directory of LiDAR sweeps with simulated snowfall
//! and wet ground, dump single-beam echo profiles, or sort sweeps by
//! snowfall intensity.
//!
//! Exit codes: 0 on success, 1 when some frames failed or an output could
//! not be written, 2 on configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use snowsim::batch::{classify_dir, dump_profile, run_batch, Mode, RunConfig};
use snowsim::dror::{DrorConfig, SnowfallClass, SplitConfig};
use snowsim::io::{read_sweep, SweepFormat};
use snowsim::pipeline::PipelineConfig;
use snowsim::sensor::SensorCalibration;
use snowsim::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    /// x, y, z, intensity as little-endian f32.
    Xyzi,
    /// x, y, z, intensity, then the laser index as u32.
    XyziLayer,
}

impl From<Format> for SweepFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Xyzi => SweepFormat::Xyzi,
            Format::XyziLayer => SweepFormat::XyziLayer,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "snowsim", version, about = "Snowfall and wet-ground augmentation for LiDAR sweeps")]
struct Cli {
    /// Effects to simulate: snow, wet or snow+wet.
    #[arg(long, default_value = "snow", value_parser = parse_mode)]
    mode: Mode,
    /// Directory of sweeps; a single sweep file with --dump-profile.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; the CSV file with --dump-profile (default stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sensor calibration file, required for snowfall.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Fraction of frames to augment, applied as a fixed stride.
    #[arg(long, default_value_t = 0.1)]
    p_aug: f64,
    /// Snowfall rates in mm/h to draw from, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "rate")]
    rates: Option<Vec<f64>>,
    /// A single snowfall rate in mm/h.
    #[arg(long)]
    rate: Option<f64>,
    /// Mean of the water-depth distribution, mm.
    #[arg(long)]
    dw_mean: Option<f64>,
    /// Water-depth truncation interval `lo,hi` in mm.
    #[arg(long, value_delimiter = ',')]
    dw_range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write the echo profile of point INDEX of the --input sweep as CSV.
    #[arg(long, value_name = "INDEX", conflicts_with = "classify")]
    dump_profile: Option<usize>,
    /// Classify every sweep of --input as clear, light or heavy snowfall.
    #[arg(long)]
    classify: bool,
    /// Where to write the JSON-lines report.
    #[arg(long, value_name = "PATH")]
    stats_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "xyzi")]
    format: Format,
}

fn parse_mode(s: &str) -> Result<Mode, Error> {
    s.parse()
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Calibration(_) | Error::Domain(_) | Error::Lookup(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let result = match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    result.map_err(|message| Failure { code: 1, message })
}

fn run_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let output = cli
        .output
        .clone()
        .ok_or_else(|| config_error("--output is required"))?;
    let mut cfg = RunConfig::new(&cli.input, output);
    cfg.calibration = cli.calib.clone();
    cfg.p_aug = cli.p_aug;
    cfg.workers = cli.workers;
    let a = &mut cfg.augment;
    a.mode = cli.mode;
    a.seed = cli.seed;
    a.format = cli.format.into();
    if let Some(rates) = &cli.rates {
        a.rates = rates.clone();
    }
    if let Some(rate) = cli.rate {
        a.rates = vec![rate];
    }
    if let Some(mean) = cli.dw_mean {
        a.water_depth_mean = mean;
    }
    if let Some(range) = &cli.dw_range {
        match range.as_slice() {
            [lo, hi] => a.water_depth_range = (*lo, *hi),
            _ => return Err(config_error("--dw-range expects two values, lo,hi")),
        }
    }
    Ok(cfg)
}

fn batch(cli: &Cli) -> Result<ExitCode, Failure> {
    let cfg = run_config(cli)?;
    // Nothing has been written yet, so any error here is a setup problem.
    let summary = run_batch(&cfg).map_err(|e| config_error(e.to_string()))?;
    if let Some(path) = &cli.stats_out {
        write_output(Some(path), &summary.to_jsonl())?;
    }
    let a = &summary.aggregate;
    eprintln!(
        "{} frames: {} augmented, {} copied, {} failed; {} scattered, {} snow-dropped, {} wet-dropped points",
        a.frames, a.augmented, a.copied, a.failed, a.snow_scattered, a.snow_dropped, a.wet_dropped
    );
    for r in summary.reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("{}: {}", r.frame, r.error.as_deref().unwrap_or_default());
    }
    Ok(if a.failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn profile(cli: &Cli, index: usize) -> Result<ExitCode, Failure> {
    let calib_path = cli
        .calib
        .as_ref()
        .ok_or_else(|| config_error("--dump-profile needs --calib"))?;
    let rate = cli
        .rate
        .ok_or_else(|| config_error("--dump-profile needs --rate"))?;
    let calib = SensorCalibration::load(calib_path).map_err(|e| config_error(e.to_string()))?;
    let pc = read_sweep(&cli.input, cli.format.into())?;
    let cfg = PipelineConfig::with_rate(rate, cli.seed);
    let csv = dump_profile(&pc, &calib, &cfg, index)?;
    write_output(cli.output.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn classify(cli: &Cli) -> Result<ExitCode, Failure> {
    if !cli.input.is_dir() {
        return Err(config_error(format!("input {} is not a directory", cli.input.display())));
    }
    let rows = classify_dir(&cli.input, cli.format.into(), &DrorConfig::default(), &SplitConfig::default())?;
    let mut out = String::new();
    for row in &rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    write_output(cli.stats_out.as_deref(), &out)?;
    let count = |c: SnowfallClass| rows.iter().filter(|r| r.class == c).count();
    eprintln!(
        "{} frames: {} clear, {} light, {} heavy",
        rows.len(),
        count(SnowfallClass::Clear),
        count(SnowfallClass::Light),
        count(SnowfallClass::Heavy)
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (cli.dump_profile, cli.classify) {
        (Some(index), _) => profile(&cli, index),
        (None, true) => classify(&cli),
        (None, false) => batch(&cli),
    };
    result.unwrap_or_else(|f| {
        eprintln!("error: {}", f.message);
        ExitCode::from(f.code)
    })
}
