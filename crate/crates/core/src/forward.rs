//! Forward model: ideal target-path and direct-path baseband spectra at every
//! receive channel.
//!
//! Signals are generated from the narrowband, post-approximation model:
//! `α³ ≈ 1`, `(ω + αω₀)² ≈ ω₀²` and `p̃(αt) ≈ p̃(t)`. Amplitude factors are
//! isotropic beam patterns times free-space spreading, `g / (4π R)`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lift_state, transverse_project, unit_toward, Vec3};
use crate::linalg::C64;
use crate::scene::{ChannelId, Receiver, Scene, C0};
use crate::target::scatter_coupling;

/// Uniform grid of N baseband frequencies over [−B/2, B/2] (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub bandwidth: f64,
    pub n: usize,
}

impl FrequencyGrid {
    pub fn new(bandwidth: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("frequency grid needs at least 2 samples, got {n}")));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(FrequencyGrid { bandwidth, n })
    }

    /// Quadrature weight Δω = B / (N − 1).
    pub fn delta_omega(&self) -> f64 {
        self.bandwidth / (self.n as f64 - 1.0)
    }

    pub fn omega(&self, j: usize) -> f64 {
        -0.5 * self.bandwidth + j as f64 * self.delta_omega()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.omega(j)).collect()
    }
}

/// How the baseband waveform spectrum p̃(ω) is synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaveformKind {
    /// Unit magnitude, independent uniform phase per sample.
    RandomPhase { seed: u64 },
    /// p̃ ≡ 1.
    Flat,
    /// Unit magnitude, quadratic phase across the band (sampled linear FM).
    Chirp,
}

impl Default for WaveformKind {
    fn default() -> Self {
        WaveformKind::RandomPhase { seed: 0 }
    }
}

/// Transmitted waveform: carrier, band and baseband spectrum samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Carrier angular frequency ω₀, rad/s.
    pub omega0: f64,
    pub grid: FrequencyGrid,
    pub samples: Vec<C64>,
}

impl Waveform {
    pub fn generate(kind: WaveformKind, f0_hz: f64, bandwidth_hz: f64, n: usize) -> Result<Self> {
        let grid = FrequencyGrid::new(2.0 * PI * bandwidth_hz, n)?;
        let samples = match kind {
            WaveformKind::RandomPhase { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))).collect()
            }
            WaveformKind::Flat => vec![C64::new(1.0, 0.0); n],
            WaveformKind::Chirp => (0..n)
                .map(|j| {
                    let u = j as f64 - 0.5 * (n as f64 - 1.0);
                    C64::from_polar(1.0, PI * u * u / n as f64)
                })
                .collect(),
        };
        Self::from_samples(2.0 * PI * f0_hz, grid, samples)
    }

    pub fn from_samples(omega0: f64, grid: FrequencyGrid, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != grid.n {
            return Err(Error::Shape(format!("{} waveform samples for a {}-point grid", samples.len(), grid.n)));
        }
        if samples.iter().all(|z| z.norm() == 0.0) {
            return Err(Error::Config("waveform spectrum is identically zero".into()));
        }
        Ok(Waveform { omega0, grid, samples })
    }

    pub fn scaled(&self, c: C64) -> Waveform {
        Waveform { samples: self.samples.iter().map(|z| z * c).collect(), ..self.clone() }
    }
}

/// Doppler scale factors for a target at `x` moving with `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerFactors {
    pub alpha_r: f64,
    pub alpha_t: f64,
    /// `alpha_t / alpha_r`.
    pub alpha: f64,
}

/// Speed limit for the first-order Doppler model.
pub const MAX_SPEED: f64 = 1e-3 * C0;

pub fn doppler_factors(x: Vec3, v: Vec3, rx: Vec3, tx: Vec3) -> Result<DopplerFactors> {
    let speed = v.norm();
    if !(speed < MAX_SPEED) {
        return Err(Error::ModelValidity { speed, bound: MAX_SPEED });
    }
    let alpha_r = 1.0 - unit_toward(rx, x)?.dot(v) / C0;
    let alpha_t = 1.0 + unit_toward(tx, x)?.dot(v) / C0;
    Ok(DopplerFactors { alpha_r, alpha_t, alpha: alpha_t / alpha_r })
}

/// Effective path length `|x − a_r| + |x − a_t| / α`, meters.
pub fn bistatic_phase(x: Vec3, v: Vec3, rx: Vec3, tx: Vec3) -> Result<f64> {
    let alpha = doppler_factors(x, v, rx, tx)?.alpha;
    Ok(x.distance(rx) + x.distance(tx) / alpha)
}

/// Target-path propagation phasor `exp(i(ω + α ω₀) φ / c₀)`.
///
/// The detector's steering uses the same function so that phases cancel
/// exactly at the true hypothesis.
#[inline]
pub fn propagation_phasor(omega: f64, alpha: f64, omega0: f64, phi: f64) -> C64 {
    C64::from_polar(1.0, (omega + alpha * omega0) * phi / C0)
}

/// Direct-path propagation phasor `exp(i(ω + ω₀) R / c₀)`.
#[inline]
pub fn direct_phasor(omega: f64, omega0: f64, range: f64) -> C64 {
    C64::from_polar(1.0, (omega + omega0) * range / C0)
}

/// Free-space spreading `1 / (4π R)`.
pub fn spreading(a: Vec3, b: Vec3) -> f64 {
    1.0 / (4.0 * PI * a.distance(b))
}

/// Receive polarization rows `g_p · r⊥_{k,p}(x)` for H and, when present, V.
pub fn receive_matrix(x: Vec3, rx: &Receiver) -> Result<Vec<Vec3>> {
    let look = unit_toward(rx.position, x)?;
    let mut rows = vec![transverse_project(rx.h.dipole, look) * rx.h.gain];
    if let Some(v) = &rx.v {
        rows.push(transverse_project(v.dipole, look) * v.gain);
    }
    Ok(rows)
}

/// Receive row of a single channel at `x`, including spreading loss.
pub fn channel_row(scene: &Scene, ch: ChannelId, x: Vec3) -> Result<Vec3> {
    let rx = scene
        .receivers
        .get(ch.receiver)
        .ok_or_else(|| Error::Shape(format!("receiver {} out of range", ch.receiver)))?;
    let ant = rx
        .antenna(ch.pol)
        .ok_or_else(|| Error::Shape(format!("receiver {} has no {} antenna", ch.receiver, ch.pol)))?;
    let look = unit_toward(rx.position, x)?;
    Ok(transverse_project(ant.dipole, look) * (ant.gain * spreading(x, rx.position)))
}

/// Complex spectra on the baseband grid for a list of channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    pub channels: Vec<ChannelId>,
    pub grid: FrequencyGrid,
    /// Target-path spectra, channel-major (`channels.len() × N`).
    pub tp: Vec<C64>,
    /// Direct-path spectra, same layout, when collected.
    pub dp: Option<Vec<C64>>,
}

impl SignalSet {
    pub fn zeros(channels: Vec<ChannelId>, grid: FrequencyGrid, with_dp: bool) -> Self {
        let len = channels.len() * grid.n;
        SignalSet {
            channels,
            grid,
            tp: vec![C64::new(0.0, 0.0); len],
            dp: with_dp.then(|| vec![C64::new(0.0, 0.0); len]),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn tp_row(&self, c: usize) -> &[C64] {
        &self.tp[c * self.grid.n..(c + 1) * self.grid.n]
    }

    pub fn dp_row(&self, c: usize) -> Option<&[C64]> {
        self.dp.as_ref().map(|d| &d[c * self.grid.n..(c + 1) * self.grid.n])
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.channels.len() * self.grid.n;
        if self.tp.len() != len || self.dp.as_ref().is_some_and(|d| d.len() != len) {
            return Err(Error::Shape(format!(
                "signal buffers do not match {} channels x {} samples",
                self.channels.len(),
                self.grid.n
            )));
        }
        Ok(())
    }

    /// Keep only the listed channels, in the given order.
    pub fn select(&self, keep: &[ChannelId]) -> Result<SignalSet> {
        let n = self.grid.n;
        let mut tp = Vec::with_capacity(keep.len() * n);
        let mut dp = self.dp.as_ref().map(|_| Vec::with_capacity(keep.len() * n));
        for ch in keep {
            let c = self
                .channels
                .iter()
                .position(|x| x == ch)
                .ok_or_else(|| Error::Shape(format!("channel {:?} not in signal set", ch)))?;
            tp.extend_from_slice(self.tp_row(c));
            if let (Some(out), Some(row)) = (dp.as_mut(), self.dp_row(c)) {
                out.extend_from_slice(row);
            }
        }
        Ok(SignalSet { channels: keep.to_vec(), grid: self.grid, tp, dp })
    }

    /// Drop the direct-path spectra.
    pub fn without_dp(&self) -> SignalSet {
        SignalSet { dp: None, ..self.clone() }
    }

    /// Write one path as CSV: `receiver,polarization,omega_index,re,im`.
    pub fn write_csv<W: Write>(&self, direct_path: bool, out: W) -> Result<()> {
        let data = if direct_path {
            self.dp.as_ref().ok_or_else(|| Error::Mode("no direct-path data to write".into()))?
        } else {
            &self.tp
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["receiver", "polarization", "omega_index", "re", "im"])?;
        for (c, ch) in self.channels.iter().enumerate() {
            for j in 0..self.grid.n {
                let z = data[c * self.grid.n + j];
                w.write_record([
                    ch.receiver.to_string(),
                    ch.pol.to_string(),
                    j.to_string(),
                    format!("{:e}", z.re),
                    format!("{:e}", z.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Noise-free target-path spectra for every target in the scene.
pub fn target_path_signal(scene: &Scene, waveform: &Waveform, channels: &[ChannelId]) -> Result<Vec<C64>> {
    let grid = waveform.grid;
    let n = grid.n;
    let omegas = grid.omegas();
    let mut out = vec![C64::new(0.0, 0.0); channels.len() * n];
    let tx = &scene.transmitter;

    for target in &scene.targets {
        let (x, v) = lift_state(target.x2, target.v2, &scene.topography);
        let q = scatter_coupling(target, x, tx)?;
        let a_t = tx.gain * spreading(x, tx.position);
        for (c, &ch) in channels.iter().enumerate() {
            let rx = &scene.receivers[ch.receiver];
            let dop = doppler_factors(x, v, rx.position, tx.position)?;
            let phi = x.distance(rx.position) + x.distance(tx.position) / dop.alpha;
            let amp = waveform.omega0 * waveform.omega0 * a_t * channel_row(scene, ch, x)?.dot(q);
            if amp == 0.0 {
                continue;
            }
            let row = &mut out[c * n..(c + 1) * n];
            for j in 0..n {
                row[j] += propagation_phasor(omegas[j], dop.alpha, waveform.omega0, phi) * waveform.samples[j] * amp;
            }
        }
    }
    Ok(out)
}

/// Direct-path coupling `A^{DP}_{t,k} A^{DP}_{r,k,p} r⊥_{r,k,p}(a_t)·e_t` of one channel.
pub fn direct_path_amplitude(scene: &Scene, ch: ChannelId) -> Result<f64> {
    let rx = &scene.receivers[ch.receiver];
    let ant = rx
        .antenna(ch.pol)
        .ok_or_else(|| Error::Shape(format!("receiver {} has no {} antenna", ch.receiver, ch.pol)))?;
    let tx = &scene.transmitter;
    let look = unit_toward(rx.position, tx.position)?;
    let a_t = tx.gain * spreading(rx.position, tx.position);
    Ok(a_t * ant.dp_gain * transverse_project(ant.dipole, look).dot(tx.dipole))
}

/// Noise-free direct-path spectra.
pub fn direct_path_signal(scene: &Scene, waveform: &Waveform, channels: &[ChannelId]) -> Result<Vec<C64>> {
    let n = waveform.grid.n;
    let omegas = waveform.grid.omegas();
    let mut out = vec![C64::new(0.0, 0.0); channels.len() * n];
    for (c, &ch) in channels.iter().enumerate() {
        let rx = &scene.receivers[ch.receiver];
        let range = rx.position.distance(scene.transmitter.position);
        let amp = direct_path_amplitude(scene, ch)?;
        let row = &mut out[c * n..(c + 1) * n];
        for j in 0..n {
            row[j] = direct_phasor(omegas[j], waveform.omega0, range) * waveform.samples[j] * amp;
        }
    }
    Ok(out)
}

/// Noise-free signal set for the given channels, with or without direct path.
pub fn simulate(scene: &Scene, waveform: &Waveform, channels: &[ChannelId], with_dp: bool) -> Result<SignalSet> {
    let tp = target_path_signal(scene, waveform, channels)?;
    let dp = if with_dp { Some(direct_path_signal(scene, waveform, channels)?) } else { None };
    Ok(SignalSet { channels: channels.to_vec(), grid: waveform.grid, tp, dp })
}
