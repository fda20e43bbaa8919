use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polradar::config::{circular_scenario, CircularScenario, SceneConfig};
use polradar::harness::Mode;
use polradar::run::{default_out, run, write_error_record, Command, RunOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Passive polarimetric multistatic radar simulator and GLRT detector.
#[derive(Parser, Debug)]
#[command(name = "polradar", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Worker threads for Monte-Carlo trials and image cells.
    #[arg(long, global = true, env = "POLRADAR_THREADS")]
    threads: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Scene configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Processing mode(s): DP-POL, DP-NOPOL, POL, NOPOL (comma-separated).
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<String>>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write target-path and direct-path spectra as CSV.
    Simulate(Common),
    /// Evaluate the GLRT and dipole estimate at the configured hypothesis.
    Detect(Common),
    /// Test-statistic image over a grid of hypothesized positions.
    Image(Common),
    /// Monte-Carlo detection curves with CFAR thresholds.
    McDetect(Common),
    /// Monte-Carlo dipole angle-error curves.
    McDipole(Common),
    /// CFAR thresholds only.
    Threshold(Common),
    /// Emit the built-in circular-array scene configuration.
    PaperVi {
        /// Number of receivers on the 10 km circle.
        #[arg(long, default_value_t = 6)]
        receivers: usize,
        /// Azimuth of the first receiver in degrees (a single receiver
        /// defaults to the H/V-balanced azimuth).
        #[arg(long)]
        azimuth_offset_deg: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the config here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_modes(m: &Option<Vec<String>>) -> Result<Option<Vec<Mode>>, polradar::Error> {
    m.as_ref().map(|v| v.iter().map(|s| s.parse()).collect()).transpose()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }

    let (command, common) = match cli.command {
        Cmd::PaperVi { receivers, azimuth_offset_deg, seed, out } => {
            let params = CircularScenario {
                receivers,
                azimuth_offset: azimuth_offset_deg.map(f64::to_radians),
                seed: seed.unwrap_or(0),
                ..CircularScenario::default()
            };
            let res = circular_scenario(&params).and_then(|cfg| match &out {
                Some(p) => cfg.save(p),
                None => {
                    println!("{}", cfg.to_json());
                    Ok(())
                }
            });
            return match res {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            };
        }
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Detect(c) => (Command::Detect, c),
        Cmd::Image(c) => (Command::Image, c),
        Cmd::McDetect(c) => (Command::McDetect, c),
        Cmd::McDipole(c) => (Command::McDipole, c),
        Cmd::Threshold(c) => (Command::Threshold, c),
    };

    let out = common.out.clone().unwrap_or_else(|| default_out(command));
    let modes = match parse_modes(&common.mode) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let opts = RunOptions { seed: common.seed, modes, threads: cli.threads };
    let result = SceneConfig::load(&common.config).and_then(|cfg| run(command, &cfg, &out, &opts));
    match result {
        Ok(report) => {
            if !report.summary.is_empty() {
                println!("{}", report.summary);
            }
            println!("wrote {} file(s) to {}", report.manifest.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(w) = write_error_record(&out, command.name(), &e, EXIT_RUNTIME as i32) {
                eprintln!("error: could not write error record: {w}");
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
