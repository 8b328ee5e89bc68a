use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coofdm_core::harness::{
    self, parse_config, CsvOptions, RunReport, SimConfig, SweepSpec, SweepVariable,
};
use coofdm_core::{iqfile, Error};

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_UNRELIABLE: u8 = 3;

/// Dual-polarisation CO-OFDM link simulator with sampling clock offset compensation.
#[derive(Debug, Parser)]
#[command(name = "coofdm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (`key = value` per line); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed; defaults to the configuration's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the generation time from CSV output.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated values to sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Run points one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one frame per seed and print a report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write the first seed's received ADC samples as an IQS1 file.
        #[arg(long)]
        dump_iq: Option<PathBuf>,
    },
    /// BER against OSNR in dB (default 12, 14, ..., 26).
    SweepOsnr(SweepArgs),
    /// BER against clock offset in ppm (default -200, -100, ..., 200).
    SweepSco(SweepArgs),
    /// Per-subcarrier phase of the first data symbols without compensation.
    PhaseProfile {
        #[command(flatten)]
        common: Common,
        /// Symbols after symbol 0 to profile.
        #[arg(long, default_value_t = 7)]
        symbols: usize,
    },
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load(common: &Common) -> Result<(SimConfig, u64, CsvOptions), Failure> {
    let cfg = match &common.config {
        Some(p) => parse_config(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => SimConfig::default(),
    };
    if common.seeds == 0 {
        return Err(Failure::Config("--seeds must be at least 1".into()));
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed, CsvOptions { timestamp: !common.no_timestamp }))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn print_report(r: &RunReport) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    println!(
        "seed={} ber={:.4e} errors={}/{} evm_db={:.2} gamma={:.4e} gamma_hat={} rel_err={} flags={}",
        r.seed,
        r.ber,
        r.bit_errors,
        r.bits_counted,
        r.evm_db,
        r.gamma_true,
        opt(r.gamma_hat),
        opt(r.rel_err),
        if r.flags.is_empty() { "-".to_string() } else { r.flags.join(";") }
    );
}

fn seeds(first: u64, count: usize) -> impl Iterator<Item = u64> {
    (0..count as u64).map(move |i| first.wrapping_add(i))
}

/// Returns whether any run raised the unreliable-estimate flag.
fn execute(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Run { common, dump_iq } => {
            let (cfg, first, opts) = load(&common)?;
            if let Some(path) = &dump_iq {
                let (_, raw) = harness::channel_output(&cfg, first)?;
                iqfile::save_iq(path, &raw).map_err(|e| io_failure(path, e))?;
            }
            let reports = seeds(first, common.seeds)
                .map(|s| harness::run_single(&cfg, s))
                .collect::<Result<Vec<_>, _>>()?;
            reports.iter().for_each(print_report);
            if let Some(path) = &common.out {
                let mut w = create(path)?;
                harness::write_runs_csv(&mut w, &reports, opts)?;
                w.flush().map_err(|e| io_failure(path, e))?;
            }
            Ok(reports.iter().any(RunReport::unreliable))
        }
        Command::SweepOsnr(args) => run_sweep(args, SweepVariable::OsnrDb),
        Command::SweepSco(args) => run_sweep(args, SweepVariable::ScoPpm),
        Command::PhaseProfile { common, symbols } => {
            let (mut cfg, seed, opts) = load(&common)?;
            cfg.compensation = false;
            let result = harness::phase_profile(&cfg, symbols, seed)?;
            for (l, f) in &result.fits {
                println!("l={l} slope={:.6e} intercept={:.4} residual_rms={:.4}", f.slope, f.intercept, f.residual_rms);
            }
            if let Some(path) = &common.out {
                let mut w = create(path)?;
                harness::write_profile_csv(&mut w, &result, &cfg, opts)?;
                w.flush().map_err(|e| io_failure(path, e))?;
            }
            Ok(false)
        }
    }
}

fn run_sweep(args: SweepArgs, variable: SweepVariable) -> Result<bool, Failure> {
    let (cfg, first, opts) = load(&args.common)?;
    let values = args.values.unwrap_or_else(|| match variable {
        SweepVariable::OsnrDb => (0..8).map(|i| 12.0 + 2.0 * i as f64).collect(),
        SweepVariable::ScoPpm => vec![-200.0, -100.0, 0.0, 100.0, 200.0],
    });
    let spec = SweepSpec {
        variable,
        values,
        base: cfg.clone(),
        seeds: args.common.seeds,
        first_seed: first,
    };
    let result = harness::sweep(&spec, !args.serial)?;
    for p in &result.points {
        print!("{}={} ", variable.name(), p.value);
        print_report(&p.report);
    }
    match &args.common.out {
        Some(path) => {
            let mut w = create(path)?;
            harness::write_sweep_csv(&mut w, &result, &cfg, opts)?;
            w.flush().map_err(|e| io_failure(path, e))?;
        }
        None => harness::write_sweep_csv(io::stdout().lock(), &result, &cfg, opts)?,
    }
    Ok(result.points.iter().any(|p| p.report.unreliable()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: at least one clock offset estimate was flagged unreliable");
            ExitCode::from(EXIT_UNRELIABLE)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
