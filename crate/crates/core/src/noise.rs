//! White complex Gaussian measurement noise and SNR-to-variance conversion.
//!
//! A channel with continuous-model variance σ² receives per-bin variance
//! σ²/Δω. Every (seed, trial, stream, path, channel) tuple owns an
//! independent ChaCha stream, so trials can be drawn on any thread in any
//! order. Samples are drawn with unit variance and then scaled, which keeps
//! random numbers common across SNR points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{FrequencyGrid, SignalSet};
use crate::linalg::C64;
use crate::scene::ChannelId;

/// Diagonal noise covariances for the target and direct paths.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCov {
    pub sigma2_tp: Vec<f64>,
    pub sigma2_dp: Option<Vec<f64>>,
}

impl NoiseCov {
    pub fn common(n_channels: usize, sigma2_tp: f64, sigma2_dp: Option<f64>) -> Self {
        NoiseCov { sigma2_tp: vec![sigma2_tp; n_channels], sigma2_dp: sigma2_dp.map(|s| vec![s; n_channels]) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |v: &[f64]| v.iter().any(|s| !(*s > 0.0) || !s.is_finite());
        if bad(&self.sigma2_tp) {
            return Err(Error::SingularCovariance("target-path variances must be positive and finite".into()));
        }
        if let Some(dp) = &self.sigma2_dp {
            if bad(dp) {
                return Err(Error::SingularCovariance("direct-path variances must be positive and finite".into()));
            }
            if dp.len() != self.sigma2_tp.len() {
                return Err(Error::Shape(format!(
                    "{} direct-path variances for {} channels",
                    dp.len(),
                    self.sigma2_tp.len()
                )));
            }
        }
        Ok(())
    }

    /// Keep the variances of the listed channel positions.
    pub fn select(&self, idx: &[usize]) -> NoiseCov {
        NoiseCov {
            sigma2_tp: idx.iter().map(|&i| self.sigma2_tp[i]).collect(),
            sigma2_dp: self.sigma2_dp.as_ref().map(|d| idx.iter().map(|&i| d[i]).collect()),
        }
    }

    /// Multiply every variance by `c`.
    pub fn scaled(&self, c: f64) -> NoiseCov {
        NoiseCov {
            sigma2_tp: self.sigma2_tp.iter().map(|s| s * c).collect(),
            sigma2_dp: self.sigma2_dp.as_ref().map(|d| d.iter().map(|s| s * c).collect()),
        }
    }
}

/// Propagation path a noise stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    Target,
    Direct,
}

/// Identifies one Monte-Carlo draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub trial: u64,
    /// Separates independent experiments sharing a seed (e.g. H0 vs H1 batches).
    pub stream: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn channel_seed(key: NoiseKey, path: Path, ch: ChannelId) -> u64 {
    let path = match path {
        Path::Target => 0,
        Path::Direct => 1,
    };
    [key.trial, key.stream, path, ch.receiver as u64, ch.pol.index()]
        .into_iter()
        .fold(splitmix(key.seed), |h, v| splitmix(h ^ v))
}

/// Fill `out` with unit-variance circular complex Gaussian samples (E|z|² = 1).
pub fn unit_noise(key: NoiseKey, path: Path, ch: ChannelId, out: &mut [C64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(channel_seed(key, path, ch));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for z in out {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C64::new(re * s, im * s);
    }
}

/// Noise realization shaped like a signal set over `channels`.
pub fn sample_noise(grid: FrequencyGrid, cov: &NoiseCov, channels: &[ChannelId], key: NoiseKey) -> Result<SignalSet> {
    cov.validate()?;
    if cov.sigma2_tp.len() != channels.len() {
        return Err(Error::Shape(format!("{} variances for {} channels", cov.sigma2_tp.len(), channels.len())));
    }
    let n = grid.n;
    let dw = grid.delta_omega();
    let mut set = SignalSet::zeros(channels.to_vec(), grid, cov.sigma2_dp.is_some());
    for (c, &ch) in channels.iter().enumerate() {
        let row = &mut set.tp[c * n..(c + 1) * n];
        unit_noise(key, Path::Target, ch, row);
        let scale = (cov.sigma2_tp[c] / dw).sqrt();
        row.iter_mut().for_each(|z| *z *= scale);
    }
    if let (Some(dp), Some(s2)) = (set.dp.as_mut(), cov.sigma2_dp.as_ref()) {
        for (c, &ch) in channels.iter().enumerate() {
            let row = &mut dp[c * n..(c + 1) * n];
            unit_noise(key, Path::Direct, ch, row);
            let scale = (s2[c] / dw).sqrt();
            row.iter_mut().for_each(|z| *z *= scale);
        }
    }
    Ok(set)
}

/// How an SNR in dB maps to a continuous-model noise variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrConvention {
    /// Average per-bin signal power over per-bin noise power:
    /// `σ² = Δω · mean_c(Σ_ω |d|²) / (N · 10^{snr/10})`.
    #[default]
    PerSample,
    /// Band-integrated signal energy over the continuous-model variance:
    /// `σ² = Δω · mean_c(Σ_ω |d|²) / 10^{snr/10}`.
    BandIntegrated,
}

/// Channel-averaged quadrature energy `mean_c Δω Σ_ω |d_c(ω)|²`.
pub fn mean_channel_energy(rows: &[C64], grid: FrequencyGrid) -> Result<f64> {
    if rows.is_empty() || rows.len() % grid.n != 0 {
        return Err(Error::Shape(format!("{} samples is not a whole number of {}-sample channels", rows.len(), grid.n)));
    }
    let n_ch = rows.len() / grid.n;
    let total: f64 = rows.iter().map(|z| z.norm_sqr()).sum();
    Ok(grid.delta_omega() * total / n_ch as f64)
}

/// Noise variance giving the requested average SNR for the stacked channel spectra `rows`.
pub fn snr_to_variance(rows: &[C64], grid: FrequencyGrid, snr_db: f64, convention: SnrConvention) -> Result<f64> {
    let energy = mean_channel_energy(rows, grid)?;
    if !(energy > 0.0) || !energy.is_finite() || !snr_db.is_finite() {
        return Err(Error::UndefinedSnr);
    }
    let ratio = 10f64.powf(snr_db / 10.0);
    Ok(match convention {
        SnrConvention::BandIntegrated => energy / ratio,
        SnrConvention::PerSample => energy / (grid.n as f64 * ratio),
    })
}
