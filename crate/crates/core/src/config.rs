//! JSON scene configuration: parsing with field-path diagnostics, validation,
//! conversion to a [`Scene`], and the built-in circular-array scenario.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::Hypothesis;
use crate::error::{Error, Result};
use crate::forward::{channel_row, Waveform, WaveformKind};
use crate::geometry::{lift_state, Topography, Vec3};
use crate::harness::{ExperimentConfig, ImageGrid, Mode};
use crate::noise::{snr_to_variance, NoiseCov, SnrConvention};
use crate::scene::{AntennaPose, ChannelId, Polarization, ReceiveAntenna, Receiver, Scene, C0};
use crate::target::PointTarget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub c0: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants { c0: C0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterConfig {
    pub position_m: [f64; 3],
    pub dipole: [f64; 3],
    #[serde(default = "one")]
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverGains {
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "one")]
    pub v: f64,
    #[serde(default = "one")]
    pub dp_h: f64,
    #[serde(default = "one")]
    pub dp_v: f64,
}

impl Default for ReceiverGains {
    fn default() -> Self {
        ReceiverGains { h: 1.0, v: 1.0, dp_h: 1.0, dp_v: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    pub position_m: [f64; 3],
    pub dipole_h: [f64; 3],
    /// Omit for an H-only receiver.
    #[serde(default)]
    pub dipole_v: Option<[f64; 3]>,
    #[serde(default)]
    pub gains: ReceiverGains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub x2_m: [f64; 2],
    #[serde(default)]
    pub v2_mps: [f64; 2],
    pub rho: f64,
    pub dipole: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    pub f0_hz: f64,
    pub bandwidth_hz: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub kind: WaveformKind,
}

/// Noise levels: per-channel variances, or SNRs converted to common
/// variances. With neither given the data stays noise-free and unit
/// variances are used for whitening.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub tp_snr_db: Option<f64>,
    #[serde(default)]
    pub dp_snr_db: Option<f64>,
    #[serde(default)]
    pub sigma2_tp: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma2_dp: Option<Vec<f64>>,
    #[serde(default)]
    pub convention: SnrConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub constants: Constants,
    pub transmitter: TransmitterConfig,
    pub receivers: Vec<ReceiverConfig>,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub topography: Topography,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl SceneConfig {
    /// Parse JSON text, reporting the failing field path on error.
    pub fn from_json(text: &str) -> Result<SceneConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: SceneConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            Error::Config(format!(
                "{} at field '{}' (line {}, column {})",
                inner,
                e.path(),
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate()?;
        cfg.normalize_units();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SceneConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        SceneConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    /// Collect every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if (self.constants.c0 - C0).abs() > 1e-6 {
            errs.push(format!("constants.c0 must be {C0} m/s, got {}", self.constants.c0));
        }
        let mut unit = |name: String, v: [f64; 3]| {
            let n = norm3(v);
            if !n.is_finite() || n == 0.0 {
                errs.push(format!("{name} must be a non-zero finite vector"));
            }
        };
        unit("transmitter.dipole".into(), self.transmitter.dipole);
        for (k, r) in self.receivers.iter().enumerate() {
            unit(format!("receivers[{k}].dipole_h"), r.dipole_h);
            if let Some(v) = r.dipole_v {
                unit(format!("receivers[{k}].dipole_v"), v);
            }
        }
        for (k, t) in self.targets.iter().enumerate() {
            unit(format!("targets[{k}].dipole"), t.dipole);
        }
        if self.receivers.is_empty() {
            errs.push("at least one receiver is required".into());
        }
        for (k, r) in self.receivers.iter().enumerate() {
            if r.position_m == self.transmitter.position_m {
                errs.push(format!("receivers[{k}] coincides with the transmitter"));
            }
        }
        for (k, t) in self.targets.iter().enumerate() {
            if !(t.rho > 0.0) {
                errs.push(format!("targets[{k}].rho must be positive, got {}", t.rho));
            }
        }
        let w = &self.waveform;
        if w.n_samples < 2 {
            errs.push(format!("waveform.n_samples must be at least 2, got {}", w.n_samples));
        }
        if !(w.bandwidth_hz > 0.0) || !(w.f0_hz > 0.0) {
            errs.push("waveform.f0_hz and waveform.bandwidth_hz must be positive".into());
        }
        let n_ch = self.receivers.iter().map(|r| 1 + r.dipole_v.is_some() as usize).sum::<usize>();
        for (name, list) in [("noise.sigma2_tp", &self.noise.sigma2_tp), ("noise.sigma2_dp", &self.noise.sigma2_dp)] {
            if let Some(l) = list {
                if l.len() != n_ch {
                    errs.push(format!("{name} has {} entries for {n_ch} channels", l.len()));
                }
                if l.iter().any(|s| !(*s > 0.0)) {
                    errs.push(format!("{name} entries must be positive"));
                }
            }
        }
        if self.noise.sigma2_tp.is_some() && self.noise.tp_snr_db.is_some() {
            errs.push("give either noise.sigma2_tp or noise.tp_snr_db, not both".into());
        }
        if self.noise.sigma2_dp.is_some() && self.noise.dp_snr_db.is_some() {
            errs.push("give either noise.sigma2_dp or noise.dp_snr_db, not both".into());
        }
        if let Some(e) = &self.experiment {
            if let Err(Error::Validation(v)) = e.validate() {
                errs.extend(v);
            }
            if let Some(g) = &e.image_grid {
                if let Err(err) = g.validate() {
                    errs.push(err.to_string());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Rescale dipole fields to unit length, warning on noticeable changes.
    pub fn normalize_units(&mut self) {
        let fix = |name: String, v: &mut [f64; 3]| {
            let n = norm3(*v);
            // vectors within rounding of unit length are left bit-for-bit alone
            if n > 0.0 && n.is_finite() && (n - 1.0).abs() > 1e-14 {
                if (n - 1.0).abs() > 1e-6 {
                    log::warn!("{name} has norm {n}; normalizing");
                }
                v.iter_mut().for_each(|c| *c /= n);
            }
        };
        fix("transmitter.dipole".into(), &mut self.transmitter.dipole);
        for (k, r) in self.receivers.iter_mut().enumerate() {
            fix(format!("receivers[{k}].dipole_h"), &mut r.dipole_h);
            if let Some(v) = r.dipole_v.as_mut() {
                fix(format!("receivers[{k}].dipole_v"), v);
            }
        }
        for (k, t) in self.targets.iter_mut().enumerate() {
            fix(format!("targets[{k}].dipole"), &mut t.dipole);
        }
    }

    pub fn scene(&self) -> Result<Scene> {
        self.validate()?;
        let unit = |v: [f64; 3]| Vec3::from_array(v).normalized();
        let receivers = self
            .receivers
            .iter()
            .map(|r| {
                Ok(Receiver {
                    position: Vec3::from_array(r.position_m),
                    h: ReceiveAntenna { dipole: unit(r.dipole_h)?, gain: r.gains.h, dp_gain: r.gains.dp_h },
                    v: match r.dipole_v {
                        Some(v) => Some(ReceiveAntenna { dipole: unit(v)?, gain: r.gains.v, dp_gain: r.gains.dp_v }),
                        None => None,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let targets = self
            .targets
            .iter()
            .map(|t| Ok(PointTarget { x2: t.x2_m, v2: t.v2_mps, rho: t.rho, dipole: unit(t.dipole)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            transmitter: AntennaPose {
                position: Vec3::from_array(self.transmitter.position_m),
                dipole: unit(self.transmitter.dipole)?,
                gain: self.transmitter.gain,
            },
            receivers,
            targets,
            topography: self.topography.clone(),
        })
    }

    pub fn waveform(&self) -> Result<Waveform> {
        let w = &self.waveform;
        Waveform::generate(w.kind, w.f0_hz, w.bandwidth_hz, w.n_samples)
    }

    /// Noise covariance over all scene channels and whether noise is drawn.
    pub fn noise_cov(&self, scene: &Scene, waveform: &Waveform) -> Result<(NoiseCov, bool)> {
        let channels = scene.channels();
        let n = &self.noise;
        let clean = crate::forward::simulate(scene, waveform, &channels, true)?;
        let tp = match (&n.sigma2_tp, n.tp_snr_db) {
            (Some(v), _) => Some(v.clone()),
            (None, Some(snr)) => Some(vec![snr_to_variance(&clean.tp, waveform.grid, snr, n.convention)?; channels.len()]),
            (None, None) => None,
        };
        let dp_rows = clean.dp.as_ref().expect("direct path simulated");
        let dp = match (&n.sigma2_dp, n.dp_snr_db) {
            (Some(v), _) => Some(v.clone()),
            (None, Some(snr)) => Some(vec![snr_to_variance(dp_rows, waveform.grid, snr, n.convention)?; channels.len()]),
            (None, None) => None,
        };
        let noisy = tp.is_some() || dp.is_some();
        let cov = NoiseCov {
            sigma2_tp: tp.unwrap_or_else(|| vec![1.0; channels.len()]),
            sigma2_dp: Some(dp.unwrap_or_else(|| vec![1.0; channels.len()])),
        };
        cov.validate()?;
        Ok((cov, noisy))
    }

    /// Experiment section, or an error naming what is missing.
    pub fn experiment(&self) -> Result<&ExperimentConfig> {
        self.experiment.as_ref().ok_or_else(|| Error::Config("this command needs an 'experiment' section".into()))
    }
}

/// Ratio of V-channel to H-channel target-path energy at one receiver.
fn hv_balance(scene: &Scene, k: usize) -> Result<f64> {
    let t = scene.targets.first().ok_or_else(|| Error::Config("no target".into()))?;
    let (x, _) = lift_state(t.x2, t.v2, &scene.topography);
    let q = crate::target::scatter_coupling(t, x, &scene.transmitter)?;
    let h = channel_row(scene, ChannelId { receiver: k, pol: Polarization::H }, x)?.dot(q);
    let v = channel_row(scene, ChannelId { receiver: k, pol: Polarization::V }, x)?.dot(q);
    Ok(v * v / (h * h).max(f64::MIN_POSITIVE))
}

/// Parameters of the built-in circular-array scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularScenario {
    pub receivers: usize,
    /// Azimuth of the first receiver, radians; `None` places a single
    /// receiver where its H and V channels see equal target energy.
    pub azimuth_offset: Option<f64>,
    pub target_dipole: Vec3,
    pub target_v2: [f64; 2],
    pub seed: u64,
}

/// Target dipole of the built-in scenario: 35° elevation, 32° azimuth.
pub fn default_target_dipole() -> Vec3 {
    let (el, az) = (35f64.to_radians(), 32f64.to_radians());
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

impl Default for CircularScenario {
    fn default() -> Self {
        CircularScenario {
            receivers: 6,
            azimuth_offset: None,
            target_dipole: default_target_dipole(),
            target_v2: [10.0, 5.0],
            seed: 0,
        }
    }
}

fn circle_receivers(n: usize, offset: f64) -> Vec<ReceiverConfig> {
    (0..n)
        .map(|k| {
            let th = offset + 2.0 * PI * k as f64 / n as f64;
            ReceiverConfig {
                position_m: [10e3 * th.cos(), 10e3 * th.sin(), 5e3],
                dipole_h: [th.sin(), -th.cos(), 0.0],
                dipole_v: Some([0.0, 0.0, 1.0]),
                gains: ReceiverGains::default(),
            }
        })
        .collect()
}

/// Transmitter at (15, 15, 5) km with an x-directed dipole; receivers equally
/// spaced on a 10 km circle at 5 km altitude with H = (sin θ, −cos θ, 0) and
/// V = ẑ; 2 GHz carrier, 8 MHz band, 256 samples; one target at the scene
/// center.
pub fn circular_scenario(p: &CircularScenario) -> Result<SceneConfig> {
    if p.receivers == 0 {
        return Err(Error::Config("at least one receiver is required".into()));
    }
    let e = p.target_dipole.normalized()?;
    let mut cfg = SceneConfig {
        constants: Constants::default(),
        transmitter: TransmitterConfig { position_m: [15e3, 15e3, 5e3], dipole: [1.0, 0.0, 0.0], gain: 1.0 },
        receivers: circle_receivers(p.receivers, p.azimuth_offset.unwrap_or(0.0)),
        targets: vec![TargetConfig { x2_m: [0.0, 0.0], v2_mps: p.target_v2, rho: 1.0, dipole: e.to_array() }],
        waveform: WaveformConfig {
            f0_hz: 2e9,
            bandwidth_hz: 8e6,
            n_samples: 256,
            kind: WaveformKind::RandomPhase { seed: p.seed },
        },
        topography: Topography::Flat { height: 0.0 },
        noise: NoiseConfig { tp_snr_db: Some(-15.0), dp_snr_db: Some(10.0), ..NoiseConfig::default() },
        experiment: Some(ExperimentConfig {
            hypothesis: Hypothesis { x2: [0.0, 0.0], v2: p.target_v2 },
            cfar: 1e-3,
            trials_h0: 10_000,
            trials_h1: 2_000,
            trials_dipole: 1_000,
            trials_holdout: 0,
            snr_grid_db: (0..=12).map(|i| -26.0 + i as f64).collect(),
            dp_snr_db: 10.0,
            modes: Mode::ALL.to_vec(),
            snr_convention: SnrConvention::PerSample,
            seed: p.seed,
            image_grid: Some(ImageGrid::square(41, 200.0, p.target_v2)),
        }),
    };
    if p.receivers == 1 && p.azimuth_offset.is_none() {
        let az = balanced_azimuth(&cfg)?;
        cfg.receivers = circle_receivers(1, az);
    }
    Ok(cfg)
}

/// Azimuth on the receiver circle where a single receiver's H and V
/// channels see equal target-path energy (first root of the scan).
pub fn balanced_azimuth(cfg: &SceneConfig) -> Result<f64> {
    let at = |az: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.receivers = circle_receivers(1, az);
        Ok(hv_balance(&c.scene()?, 0)?.ln())
    };
    let steps = 720;
    let mut prev = (0.0, at(0.0)?);
    for i in 1..=steps {
        let az = 2.0 * PI * i as f64 / steps as f64;
        let f = at(az)?;
        if f.is_finite() && prev.1.is_finite() && (f > 0.0) != (prev.1 > 0.0) {
            let (mut lo, mut hi, flo) = (prev.0, az, prev.1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (at(mid)? > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev = (az, f);
    }
    Err(Error::Config("no receiver azimuth balances the H and V channels for this target".into()))
}
