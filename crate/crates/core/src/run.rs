//! Command orchestration: each command reads a validated config, writes its
//! CSV outputs into an output directory and finishes with `manifest.json`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::SceneConfig;
use crate::detector::{detect, dipole_angle_error, Hypothesis};
use crate::error::{Error, Result};
use crate::harness::{
    calibrate_threshold, holdout_false_alarm, mc_dipole, single_realization, statistic_image, sweep_snr,
    write_dphi_csv, write_pd_csv, write_thresholds_csv, Experiment, ImageGrid, Mode, PdCurve,
};
use crate::noise::NoiseKey;
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Detect,
    Image,
    McDetect,
    McDipole,
    Threshold,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Detect => "detect",
            Command::Image => "image",
            Command::McDetect => "mc-detect",
            Command::McDipole => "mc-dipole",
            Command::Threshold => "threshold",
        }
    }
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub modes: Option<Vec<Mode>>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    /// Effective configuration after overrides; re-running it reproduces
    /// the outputs bit for bit.
    pub config: SceneConfig,
}

/// Machine-readable failure record written next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DegenerateGeometry(_) => "degenerate_geometry",
        Error::ModelValidity { .. } => "model_validity",
        Error::Config(_) => "config",
        Error::Validation(_) => "validation",
        Error::UndefinedSnr => "undefined_snr",
        Error::SingularCovariance(_) => "singular_covariance",
        Error::Mode(_) => "mode",
        Error::Shape(_) => "shape",
        Error::ZeroVector(_) => "zero_vector",
        Error::Io(_) => "io",
    }
}

pub fn write_error_record(out: &Path, command: &str, e: &Error, exit_code: i32) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let rec = ErrorRecord { command: command.into(), kind: error_kind(e).into(), message: e.to_string(), exit_code };
    let text = serde_json::to_string_pretty(&rec).expect("error record serializes");
    std::fs::write(out.join("error.json"), text + "\n")?;
    Ok(())
}

pub fn config_hash(cfg: &SceneConfig) -> String {
    let digest = Sha256::digest(cfg.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn create(out: &Path, name: &str, files: &mut Vec<String>) -> Result<BufWriter<File>> {
    files.push(name.to_string());
    Ok(BufWriter::new(File::create(out.join(name))?))
}

/// Config with command-line overrides applied.
pub fn effective_config(cfg: &SceneConfig, opts: &RunOptions) -> SceneConfig {
    let mut cfg = cfg.clone();
    if let Some(e) = cfg.experiment.as_mut() {
        if let Some(seed) = opts.seed {
            e.seed = seed;
        }
        if let Some(m) = &opts.modes {
            e.modes = m.clone();
        }
    }
    cfg
}

fn root_seed(cfg: &SceneConfig, opts: &RunOptions) -> u64 {
    opts.seed.or(cfg.experiment.as_ref().map(|e| e.seed)).unwrap_or(0)
}

/// Experiment hypothesis, or the first target's true state.
fn hypothesis(cfg: &SceneConfig, scene: &Scene) -> Result<Hypothesis> {
    if let Some(e) = &cfg.experiment {
        return Ok(e.hypothesis);
    }
    scene
        .targets
        .first()
        .map(|t| Hypothesis { x2: t.x2, v2: t.v2 })
        .ok_or_else(|| Error::Config("no experiment.hypothesis and no target to default to".into()))
}

fn single_mode(cfg: &SceneConfig, opts: &RunOptions) -> Mode {
    opts.modes
        .as_ref()
        .and_then(|m| m.first().copied())
        .or(cfg.experiment.as_ref().and_then(|e| e.modes.first().copied()))
        .unwrap_or(Mode::DpPol)
}

/// Output of a run: files written and text for the terminal.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub summary: String,
}

pub fn run(command: Command, cfg: &SceneConfig, out: &Path, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let cfg = effective_config(cfg, opts);
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let scene = cfg.scene()?;
    let waveform = cfg.waveform()?;
    let seed = root_seed(&cfg, opts);
    let mut files = Vec::new();
    let summary;

    match command {
        Command::Simulate | Command::Detect | Command::Image => {
            let mode = single_mode(&cfg, opts);
            let channels = scene.channels_for(mode.polarimetry());
            let (full_cov, noisy) = cfg.noise_cov(&scene, &waveform)?;
            let idx: Vec<usize> = channels
                .iter()
                .map(|c| scene.channels().iter().position(|x| x == c).expect("subset of scene channels"))
                .collect();
            let cov = full_cov.select(&idx);
            let key = NoiseKey { seed, trial: 0, stream: 0 };
            let data = single_realization(&scene, &waveform, &channels, noisy.then_some(&cov), true, key)?;
            match command {
                Command::Simulate => {
                    data.write_csv(false, create(out, "signals_tp.csv", &mut files)?)?;
                    data.write_csv(true, create(out, "signals_dp.csv", &mut files)?)?;
                    summary = format!("{} channels x {} samples", data.n_channels(), data.grid.n);
                }
                Command::Detect => {
                    let hyp = hypothesis(&cfg, &scene)?;
                    let det = detect(&scene, &waveform, &data, &cov, &hyp, mode.dp_mode())?;
                    let dphi = scene.targets.first().map(|t| dipole_angle_error(det.e_est, t.dipole));
                    let rec = serde_json::json!({
                        "mode": mode.name(),
                        "hypothesis": hyp,
                        "lambda": det.lambda,
                        "e_est": det.e_est.to_array(),
                        "dphi_rad": dphi,
                        "rank_deficient": det.rank_deficient,
                        "degenerate": det.degenerate,
                    });
                    files.push("detect.json".into());
                    std::fs::write(out.join("detect.json"), serde_json::to_string_pretty(&rec).unwrap() + "\n")?;
                    summary = format!(
                        "mode {mode}: lambda = {:.6e}, e_est = ({:.6}, {:.6}, {:.6}){}",
                        det.lambda,
                        det.e_est.x,
                        det.e_est.y,
                        det.e_est.z,
                        dphi.map(|d| format!(", dphi = {d:.3e} rad")).unwrap_or_default()
                    );
                }
                _ => {
                    let default_grid = ImageGrid::square(41, 200.0, hypothesis(&cfg, &scene)?.v2);
                    let grid = cfg.experiment.as_ref().and_then(|e| e.image_grid).unwrap_or(default_grid);
                    let img = statistic_image(&scene, &waveform, &data, &cov, mode.dp_mode(), &grid)?;
                    img.write_csv(create(out, "stat_image.csv", &mut files)?)?;
                    let mut w = csv::Writer::from_writer(create(out, "image_annotations.csv", &mut files)?);
                    w.write_record(["target", "ix", "iy", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z", "dphi_rad"])?;
                    for a in &img.annotations {
                        let mut row = vec![a.target.to_string(), a.ix.to_string(), a.iy.to_string()];
                        row.extend(a.e_true.to_array().iter().chain(a.e_est.to_array().iter()).map(|v| v.to_string()));
                        row.push(a.dphi.to_string());
                        w.write_record(&row)?;
                    }
                    w.flush()?;
                    let (ix, iy) = img.argmax();
                    summary = format!("{}x{} image, peak at ({}, {}) m", grid.nx, grid.ny, grid.x(ix), grid.y(iy));
                }
            }
        }
        Command::McDetect => {
            let exp = Experiment::new(scene, waveform, cfg.experiment()?.clone())?;
            let curves = sweep_snr(&exp)?;
            write_pd_csv(&curves, create(out, "pd_curve.csv", &mut files)?)?;
            write_thresholds_csv(&curves, create(out, "thresholds.csv", &mut files)?)?;
            if exp.cfg.trials_holdout > 0 {
                let mut w = csv::Writer::from_writer(create(out, "holdout.csv", &mut files)?);
                w.write_record(["mode", "threshold", "false_alarm_rate", "trials"])?;
                for c in &curves {
                    let rate = holdout_false_alarm(&exp, c.mode, c.threshold, exp.cfg.trials_holdout)?;
                    w.write_record([c.mode.name().to_string(), format!("{:e}", c.threshold), rate.to_string(), exp.cfg.trials_holdout.to_string()])?;
                }
                w.flush()?;
            }
            summary = pd_summary(&curves);
        }
        Command::Threshold => {
            let exp = Experiment::new(scene, waveform, cfg.experiment()?.clone())?;
            let curves = exp
                .cfg
                .modes
                .iter()
                .map(|&mode| {
                    Ok(PdCurve {
                        mode,
                        threshold: calibrate_threshold(&exp, mode)?,
                        points: exp
                            .cfg
                            .snr_grid_db
                            .iter()
                            .map(|&snr_db| crate::harness::PdPoint { snr_db, pd: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN })
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_thresholds_csv(&curves, create(out, "thresholds.csv", &mut files)?)?;
            summary = curves.iter().map(|c| format!("{}: {:.6e}", c.mode, c.threshold)).collect::<Vec<_>>().join("\n");
        }
        Command::McDipole => {
            let exp = Experiment::new(scene, waveform, cfg.experiment()?.clone())?;
            let curves = mc_dipole(&exp)?;
            write_dphi_csv(&curves, create(out, "dphi_curve.csv", &mut files)?)?;
            summary = curves
                .iter()
                .map(|c| {
                    let pts: Vec<String> = c.points.iter().map(|p| format!("{}:{:.3}", p.snr_db, p.dphi_rad)).collect();
                    format!("{}: {}", c.mode, pts.join(" "))
                })
                .collect::<Vec<_>>()
                .join("\n");
        }
    }

    files.push("manifest.json".into());
    let manifest = Manifest {
        command: command.name().into(),
        config_sha256: config_hash(&cfg),
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        threads: opts.threads.unwrap_or_else(rayon::current_num_threads),
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
        config: cfg,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n")?;
    Ok(RunReport { manifest, summary })
}

fn pd_summary(curves: &[PdCurve]) -> String {
    curves
        .iter()
        .map(|c| match c.snr_at(0.9) {
            Some(s) => format!("{}: threshold {:.4e}, p_d = 0.9 at {:.2} dB", c.mode, c.threshold, s),
            None => format!("{}: threshold {:.4e}, p_d = 0.9 not reached", c.mode, c.threshold),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Default output directory for a command.
pub fn default_out(command: Command) -> PathBuf {
    PathBuf::from("out").join(command.name())
}
