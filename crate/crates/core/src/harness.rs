//! Monte-Carlo experiments: CFAR threshold calibration, detection
//! probability sweeps, test-statistic images and dipole-error curves.
//!
//! Trial `t` of every batch draws its noise from a key that depends only on
//! (seed, batch, t, channel), never on the worker that runs it, so results
//! are identical for any thread count. The same noise is reused across SNR
//! points and across modes (H channels of NOPOL see the same draws as in
//! POL).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{
    correlations, estimate_dipole, glrt, glrt_statistic, steering, DpMode, Hypothesis, SteeringSet,
};
use crate::error::{Error, Result};
use crate::forward::{simulate, SignalSet, Waveform};
use crate::geometry::{lift_state, Vec3};
use crate::linalg::C64;
use crate::noise::{snr_to_variance, unit_noise, NoiseCov, NoiseKey, Path, SnrConvention};
use crate::scene::{ChannelId, Polarimetry, Scene};

/// Batch identifiers mixed into the noise keys.
const STREAM_H0: u64 = 0;
const STREAM_H1: u64 = 1;
const STREAM_HOLDOUT: u64 = 2;
const STREAM_DIPOLE: u64 = 3;

/// Processing chain: with or without the direct-path reference, with or
/// without the V channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "DP-POL")]
    DpPol,
    #[serde(rename = "DP-NOPOL")]
    DpNoPol,
    #[serde(rename = "POL")]
    Pol,
    #[serde(rename = "NOPOL")]
    NoPol,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::DpPol, Mode::DpNoPol, Mode::Pol, Mode::NoPol];

    pub fn dp_mode(self) -> DpMode {
        match self {
            Mode::DpPol | Mode::DpNoPol => DpMode::WithDp,
            Mode::Pol | Mode::NoPol => DpMode::NoDp,
        }
    }

    pub fn polarimetry(self) -> Polarimetry {
        match self {
            Mode::DpPol | Mode::Pol => Polarimetry::Full,
            Mode::DpNoPol | Mode::NoPol => Polarimetry::HOnly,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::DpPol => "DP-POL",
            Mode::DpNoPol => "DP-NOPOL",
            Mode::Pol => "POL",
            Mode::NoPol => "NOPOL",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}' (expected DP-POL, DP-NOPOL, POL or NOPOL)")))
    }
}

fn default_cfar() -> f64 {
    1e-3
}
fn default_trials_h0() -> usize {
    10_000
}
fn default_trials_h1() -> usize {
    2_000
}
fn default_trials_dipole() -> usize {
    1_000
}
fn default_dp_snr() -> f64 {
    10.0
}

/// Monte-Carlo settings shared by all experiments on one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Fixed hypothesis for detection and dipole runs.
    pub hypothesis: Hypothesis,
    #[serde(default = "default_cfar")]
    pub cfar: f64,
    #[serde(default = "default_trials_h0")]
    pub trials_h0: usize,
    #[serde(default = "default_trials_h1")]
    pub trials_h1: usize,
    #[serde(default = "default_trials_dipole")]
    pub trials_dipole: usize,
    /// Fresh H0 trials used to validate each threshold; 0 disables the check.
    #[serde(default)]
    pub trials_holdout: usize,
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_dp_snr")]
    pub dp_snr_db: f64,
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub image_grid: Option<ImageGrid>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.cfar > 0.0 && self.cfar <= 1.0) {
            errs.push(format!("experiment.cfar must lie in (0, 1], got {}", self.cfar));
        }
        if self.cfar * (self.trials_h0 as f64) < 10.0 {
            errs.push(format!(
                "experiment.cfar * trials_h0 = {} is below 10; the threshold quantile is not estimable",
                self.cfar * self.trials_h0 as f64
            ));
        }
        if self.trials_h1 == 0 {
            errs.push("experiment.trials_h1 must be positive".into());
        }
        if self.modes.is_empty() {
            errs.push("experiment.modes must not be empty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) || !self.dp_snr_db.is_finite() {
            errs.push("SNR values must be finite".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Scene, waveform and noise-free signals shared by all trials.
pub struct Experiment {
    pub scene: Scene,
    pub waveform: Waveform,
    pub cfg: ExperimentConfig,
    /// Noise-free target-path and direct-path spectra over all channels.
    pub clean: SignalSet,
    /// Direct-path variance at `cfg.dp_snr_db`.
    pub sigma2_dp: f64,
}

impl Experiment {
    pub fn new(scene: Scene, waveform: Waveform, cfg: ExperimentConfig) -> Result<Experiment> {
        cfg.validate()?;
        let clean = simulate(&scene, &waveform, &scene.channels(), true)?;
        let dp = clean.dp.as_ref().expect("direct path simulated");
        let sigma2_dp = snr_to_variance(dp, clean.grid, cfg.dp_snr_db, cfg.snr_convention)?;
        Ok(Experiment { scene, waveform, cfg, clean, sigma2_dp })
    }

    /// Target-path variance for an average SNR over every channel of the scene.
    pub fn sigma2_tp(&self, snr_db: f64) -> Result<f64> {
        snr_to_variance(&self.clean.tp, self.clean.grid, snr_db, self.cfg.snr_convention)
    }

    pub fn engine(&self, mode: Mode, hyp: &Hypothesis) -> Result<TrialEngine<'_>> {
        let channels = self.scene.channels_for(mode.polarimetry());
        let clean = self.clean.select(&channels)?;
        let steer = steering(&self.scene, &self.waveform, &channels, hyp)?;
        Ok(TrialEngine { exp: self, mode, channels, clean, steer })
    }
}

/// Generates and evaluates trials for one mode at one hypothesis.
pub struct TrialEngine<'a> {
    exp: &'a Experiment,
    pub mode: Mode,
    pub channels: Vec<ChannelId>,
    clean: SignalSet,
    steer: SteeringSet,
}

impl TrialEngine<'_> {
    pub fn cov(&self, sigma2_tp: f64) -> NoiseCov {
        let dp = (self.mode.dp_mode() == DpMode::WithDp).then_some(self.exp.sigma2_dp);
        NoiseCov::common(self.channels.len(), sigma2_tp, dp)
    }

    /// One realization: target path is signal + noise under H1 and noise only
    /// under H0; the direct path always carries signal + noise.
    pub fn realization(&self, sigma2_tp: f64, h1: bool, stream: u64, trial: u64) -> SignalSet {
        let n = self.clean.grid.n;
        let dw = self.clean.grid.delta_omega();
        let key = NoiseKey { seed: self.exp.cfg.seed, trial, stream };
        let with_dp = self.mode.dp_mode() == DpMode::WithDp;
        let mut out = SignalSet::zeros(self.channels.clone(), self.clean.grid, with_dp);
        let s_tp = (sigma2_tp / dw).sqrt();
        let s_dp = (self.exp.sigma2_dp / dw).sqrt();
        for (c, &ch) in self.channels.iter().enumerate() {
            let row = &mut out.tp[c * n..(c + 1) * n];
            unit_noise(key, Path::Target, ch, row);
            let clean = self.clean.tp_row(c);
            for (z, s) in row.iter_mut().zip(clean) {
                *z *= s_tp;
                if h1 {
                    *z += s;
                }
            }
            if let Some(dp) = out.dp.as_mut() {
                let row = &mut dp[c * n..(c + 1) * n];
                unit_noise(key, Path::Direct, ch, row);
                let clean = self.clean.dp_row(c).expect("direct path simulated");
                for (z, s) in row.iter_mut().zip(clean) {
                    *z = *z * s_dp + s;
                }
            }
        }
        out
    }

    pub fn statistic(&self, sigma2_tp: f64, h1: bool, stream: u64, trial: u64) -> Result<f64> {
        let data = self.realization(sigma2_tp, h1, stream, trial);
        glrt_statistic(&data, &self.steer, &self.cov(sigma2_tp), self.mode.dp_mode())
    }

    /// Statistics of `trials` realizations, in trial order.
    pub fn statistics(&self, sigma2_tp: f64, h1: bool, stream: u64, trials: usize) -> Result<Vec<f64>> {
        (0..trials as u64).into_par_iter().map(|t| self.statistic(sigma2_tp, h1, stream, t)).collect()
    }
}

/// Empirical `(1 − cfar)` quantile: the returned value is exceeded by
/// `round(cfar · n)` of the sorted statistics (all but one when `cfar = 1`).
pub fn quantile_threshold(stats: &[f64], cfar: f64) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::Config("no statistics to calibrate from".into()));
    }
    let mut s = stats.to_vec();
    s.sort_by(f64::total_cmp);
    let above = (cfar * s.len() as f64).round() as usize;
    let k = (s.len() - above.min(s.len())).saturating_sub(1);
    Ok(s[k])
}

/// CFAR threshold for `mode` from `trials_h0` null realizations.
///
/// Under H0 the whitened target-path data is unit noise whatever its
/// variance, so the threshold does not depend on the target-path SNR; it
/// depends on the direct-path SNR in DP modes.
pub fn calibrate_threshold(exp: &Experiment, mode: Mode) -> Result<f64> {
    let cfg = &exp.cfg;
    if cfg.cfar * (cfg.trials_h0 as f64) < 10.0 {
        return Err(Error::Config("cfar * trials_h0 must be at least 10".into()));
    }
    let engine = exp.engine(mode, &cfg.hypothesis)?;
    let stats = engine.statistics(1.0, false, STREAM_H0, cfg.trials_h0)?;
    quantile_threshold(&stats, cfg.cfar)
}

/// Fraction of fresh H0 trials exceeding `threshold`.
pub fn holdout_false_alarm(exp: &Experiment, mode: Mode, threshold: f64, trials: usize) -> Result<f64> {
    let engine = exp.engine(mode, &exp.cfg.hypothesis)?;
    let stats = engine.statistics(1.0, false, STREAM_HOLDOUT, trials)?;
    Ok(stats.iter().filter(|&&l| l > threshold).count() as f64 / trials as f64)
}

/// Wilson score interval at 95 %.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub snr_db: f64,
    pub pd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Detection probability with Wilson interval at one target-path SNR.
pub fn estimate_pd(exp: &Experiment, mode: Mode, threshold: f64, snr_db: f64) -> Result<PdPoint> {
    let engine = exp.engine(mode, &exp.cfg.hypothesis)?;
    let stats = engine.statistics(exp.sigma2_tp(snr_db)?, true, STREAM_H1, exp.cfg.trials_h1)?;
    let hits = stats.iter().filter(|&&l| l > threshold).count();
    let (ci_lo, ci_hi) = wilson_interval(hits, stats.len());
    Ok(PdPoint { snr_db, pd: hits as f64 / stats.len() as f64, ci_lo, ci_hi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdCurve {
    pub mode: Mode,
    pub threshold: f64,
    pub points: Vec<PdPoint>,
}

impl PdCurve {
    /// SNR where the monotone fit of the curve first reaches `pd`.
    pub fn snr_at(&self, pd: f64) -> Option<f64> {
        let x: Vec<f64> = self.points.iter().map(|p| p.snr_db).collect();
        let y: Vec<f64> = self.points.iter().map(|p| p.pd).collect();
        crossing(&x, &isotonic_increasing(&y), pd)
    }
}

/// Threshold plus one detection curve per configured mode.
pub fn sweep_snr(exp: &Experiment) -> Result<Vec<PdCurve>> {
    exp.cfg
        .modes
        .iter()
        .map(|&mode| {
            let threshold = calibrate_threshold(exp, mode)?;
            log::info!("{mode}: threshold {threshold:.6e}");
            let points = exp
                .cfg
                .snr_grid_db
                .iter()
                .map(|&snr| estimate_pd(exp, mode, threshold, snr))
                .collect::<Result<Vec<_>>>()?;
            Ok(PdCurve { mode, threshold, points })
        })
        .collect()
}

/// Pool-adjacent-violators fit of a non-decreasing sequence (equal weights).
pub fn isotonic_increasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

pub fn isotonic_decreasing(y: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    isotonic_increasing(&neg).into_iter().map(|v| -v).collect()
}

/// First `x` at which the piecewise-linear curve `(x, y)` reaches `level`.
pub fn crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    if y.first().is_some_and(|&y0| y0 >= level) {
        return x.first().copied();
    }
    for i in 1..x.len().min(y.len()) {
        if y[i] >= level && y[i - 1] < level {
            let t = (level - y[i - 1]) / (y[i] - y[i - 1]);
            return Some(x[i - 1] + t * (x[i] - x[i - 1]));
        }
    }
    None
}

/// Uniform hypothesis grid over a rectangle of ground positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Fixed hypothesized velocity.
    #[serde(default)]
    pub v2: [f64; 2],
}

impl ImageGrid {
    /// `n × n` cells over `[−half, half]²`.
    pub fn square(n: usize, half: f64, v2: [f64; 2]) -> ImageGrid {
        ImageGrid { nx: n, ny: n, x_min: -half, x_max: half, y_min: -half, y_max: half, v2 }
    }

    fn coord(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn x(&self, ix: usize) -> f64 {
        Self::coord(self.x_min, self.x_max, self.nx, ix)
    }

    pub fn y(&self, iy: usize) -> f64 {
        Self::coord(self.y_min, self.y_max, self.ny, iy)
    }

    /// Cell whose node is nearest to `p`.
    pub fn nearest(&self, p: [f64; 2]) -> (usize, usize) {
        let idx = |lo: f64, hi: f64, n: usize, v: f64| {
            if n == 1 {
                0
            } else {
                (((v - lo) / (hi - lo) * (n - 1) as f64).round().max(0.0) as usize).min(n - 1)
            }
        };
        (idx(self.x_min, self.x_max, self.nx, p[0]), idx(self.y_min, self.y_max, self.ny, p[1]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || !(self.x_max >= self.x_min) || !(self.y_max >= self.y_min) {
            return Err(Error::Config(format!("invalid image grid {self:?}")));
        }
        Ok(())
    }
}

/// True and estimated dipole at a target's cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetAnnotation {
    pub target: usize,
    pub ix: usize,
    pub iy: usize,
    pub e_true: Vec3,
    pub e_est: Vec3,
    pub dphi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatImage {
    pub grid: ImageGrid,
    /// `lambda[iy * nx + ix]`.
    pub lambda: Vec<f64>,
    pub annotations: Vec<TargetAnnotation>,
}

impl StatImage {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.lambda[iy * self.grid.nx + ix]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let i = (0..self.lambda.len()).max_by(|&a, &b| self.lambda[a].total_cmp(&self.lambda[b])).unwrap_or(0);
        (i % self.grid.nx, i / self.grid.nx)
    }

    /// Whether the cell is at least as large as its 8 neighbours.
    pub fn is_local_max(&self, ix: usize, iy: usize) -> bool {
        let v = self.at(ix, iy);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                if (dx, dy) == (0, 0) || x < 0 || y < 0 || x >= self.grid.nx as i64 || y >= self.grid.ny as i64 {
                    continue;
                }
                if self.at(x as usize, y as usize) > v {
                    return false;
                }
            }
        }
        true
    }

    /// Local maxima with value above `floor`.
    pub fn local_maxima(&self, floor: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                if self.at(ix, iy) > floor && self.is_local_max(ix, iy) {
                    out.push((ix, iy));
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ix", "iy", "x_m", "y_m", "lambda"])?;
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                w.write_record([
                    ix.to_string(),
                    iy.to_string(),
                    self.grid.x(ix).to_string(),
                    self.grid.y(iy).to_string(),
                    format!("{:e}", self.at(ix, iy)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// λ over a grid of hypothesized positions for one data realization, with
/// dipole estimates at each scene target's nearest cell.
pub fn statistic_image(
    scene: &Scene,
    waveform: &Waveform,
    data: &SignalSet,
    cov: &NoiseCov,
    mode: DpMode,
    grid: &ImageGrid,
) -> Result<StatImage> {
    grid.validate()?;
    let cells: Vec<(usize, usize)> = (0..grid.ny).flat_map(|iy| (0..grid.nx).map(move |ix| (ix, iy))).collect();
    let lambda = cells
        .par_iter()
        .map(|&(ix, iy)| {
            let hyp = Hypothesis { x2: [grid.x(ix), grid.y(iy)], v2: grid.v2 };
            let steer = steering(scene, waveform, &data.channels, &hyp)?;
            glrt_statistic(data, &steer, cov, mode)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut annotations = Vec::new();
    for (k, t) in scene.targets.iter().enumerate() {
        let (ix, iy) = grid.nearest(t.x2);
        let hyp = Hypothesis { x2: [grid.x(ix), grid.y(iy)], v2: grid.v2 };
        let steer = steering(scene, waveform, &data.channels, &hyp)?;
        let out = glrt(&correlations(data, &steer, mode)?, cov)?;
        let est = estimate_dipole(out.w1(), &cov.sigma2_tp, scene, &data.channels, &hyp)?;
        annotations.push(TargetAnnotation {
            target: k,
            ix,
            iy,
            e_true: t.dipole,
            e_est: est.e,
            dphi: crate::detector::dipole_angle_error(est.e, t.dipole),
        });
    }
    Ok(StatImage { grid: *grid, lambda, annotations })
}

/// Mean dipole angle error at one SNR for one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DphiPoint {
    pub snr_db: f64,
    pub dphi_rad: f64,
    /// Standard error of the sample mean.
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DphiCurve {
    pub mode: Mode,
    pub points: Vec<DphiPoint>,
}

/// Sample mean of Δφ over `trials_dipole` H1 realizations per SNR, using the
/// dominant dipole of the first scene target as ground truth.
pub fn mc_dipole(exp: &Experiment) -> Result<Vec<DphiCurve>> {
    let truth = exp
        .scene
        .targets
        .first()
        .ok_or_else(|| Error::Config("dipole experiment needs at least one target".into()))?
        .dipole;
    let hyp = exp.cfg.hypothesis;
    exp.cfg
        .modes
        .iter()
        .map(|&mode| {
            let engine = exp.engine(mode, &hyp)?;
            let points = exp
                .cfg
                .snr_grid_db
                .iter()
                .map(|&snr| {
                    let s2 = exp.sigma2_tp(snr)?;
                    let cov = engine.cov(s2);
                    let errs = (0..exp.cfg.trials_dipole as u64)
                        .into_par_iter()
                        .map(|t| {
                            let data = engine.realization(s2, true, STREAM_DIPOLE, t);
                            let out = glrt(&correlations(&data, &engine.steer, mode.dp_mode())?, &cov)?;
                            let est = estimate_dipole(out.w1(), &cov.sigma2_tp, &exp.scene, &engine.channels, &hyp)?;
                            Ok(crate::detector::dipole_angle_error(est.e, truth))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let n = errs.len().max(1) as f64;
                    let mean = errs.iter().sum::<f64>() / n;
                    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                    Ok(DphiPoint { snr_db: snr, dphi_rad: mean, std_err: (var / n).sqrt() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DphiCurve { mode, points })
        })
        .collect()
}

pub fn write_pd_csv<W: Write>(curves: &[PdCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "snr_db", "pd", "ci_lo", "ci_hi"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.mode.name().to_string(),
                p.snr_db.to_string(),
                p.pd.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per (mode, SNR); the threshold is shared across SNR points.
pub fn write_thresholds_csv<W: Write>(curves: &[PdCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "snr_db", "threshold"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.mode.name().to_string(), p.snr_db.to_string(), format!("{:e}", c.threshold)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dphi_csv<W: Write>(curves: &[DphiCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "snr_db", "dphi_rad"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.mode.name().to_string(), p.snr_db.to_string(), p.dphi_rad.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Noise-free signals plus one noise draw, for single-shot runs (image, detect).
pub fn single_realization(
    scene: &Scene,
    waveform: &Waveform,
    channels: &[ChannelId],
    cov: Option<&NoiseCov>,
    with_dp: bool,
    key: NoiseKey,
) -> Result<SignalSet> {
    let mut data = simulate(scene, waveform, channels, with_dp)?;
    if let Some(cov) = cov {
        let noise = crate::noise::sample_noise(waveform.grid, cov, channels, key)?;
        add_into(&mut data.tp, &noise.tp);
        if let (Some(d), Some(n)) = (data.dp.as_mut(), noise.dp.as_ref()) {
            add_into(d, n);
        }
    }
    Ok(data)
}

fn add_into(a: &mut [C64], b: &[C64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Lifted position of a hypothesis, for reporting.
pub fn hypothesis_position(scene: &Scene, hyp: &Hypothesis) -> Vec3 {
    lift_state(hyp.x2, hyp.v2, &scene.topography).0
}
