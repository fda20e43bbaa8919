//! GLRT detection for a hypothesized target state, waveform MLE, the reduced
//! objective and its gradient, and dipole-moment estimation.
//!
//! Stacked quantities put the target-path channels first and, in
//! direct-path mode, the direct-path channels after them in the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{channel_row, direct_phasor, doppler_factors, propagation_phasor, FrequencyGrid, SignalSet, Waveform};
use crate::geometry::{lift_state, Vec3};
use crate::linalg::{eigh, eigvalsh, normalize_phase, CMatrix, RealSvd, C64};
use crate::noise::NoiseCov;
use crate::scene::{ChannelId, Scene};
use crate::target::{dominant_dipole, TargetDyad};

/// Relative singular-value cutoff for the receive-matrix pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Hypothesized ground position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub x2: [f64; 2],
    pub v2: [f64; 2],
}

/// Whether the direct-path reference enters the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpMode {
    WithDp,
    NoDp,
}

/// Per-channel, per-frequency steering phasors (the diagonals of the
/// block-diagonal steering matrices), channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringSet {
    pub channels: Vec<ChannelId>,
    pub grid: FrequencyGrid,
    pub tp: Vec<C64>,
    pub dp: Vec<C64>,
}

pub fn steering(scene: &Scene, waveform: &Waveform, channels: &[ChannelId], hyp: &Hypothesis) -> Result<SteeringSet> {
    let (x, v) = lift_state(hyp.x2, hyp.v2, &scene.topography);
    let grid = waveform.grid;
    let omegas = grid.omegas();
    let tx = scene.transmitter.position;
    let mut tp = Vec::with_capacity(channels.len() * grid.n);
    let mut dp = Vec::with_capacity(channels.len() * grid.n);
    for ch in channels {
        let rx = scene
            .receivers
            .get(ch.receiver)
            .ok_or_else(|| Error::Shape(format!("receiver {} out of range", ch.receiver)))?
            .position;
        let dop = doppler_factors(x, v, rx, tx)?;
        let phi = x.distance(rx) + x.distance(tx) / dop.alpha;
        let range = rx.distance(tx);
        if range == 0.0 {
            return Err(Error::DegenerateGeometry(format!("receiver {} coincides with the transmitter", ch.receiver)));
        }
        tp.extend(omegas.iter().map(|&w| propagation_phasor(w, dop.alpha, waveform.omega0, phi)));
        dp.extend(omegas.iter().map(|&w| direct_phasor(w, waveform.omega0, range)));
    }
    Ok(SteeringSet { channels: channels.to_vec(), grid, tp, dp })
}

/// Steered correlation matrix `Q = Δω Σ_ω D̃ᴴ d̃ d̃ᴴ D̃` of the stacked data.
///
/// In no-DP mode this is R (target-path block only); in DP mode it is Q1, with
/// Q0 as its trailing principal block.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub q: CMatrix,
    pub n_tp: usize,
    pub mode: DpMode,
}

impl CorrelationSet {
    pub fn r(&self) -> CMatrix {
        self.q.principal(0, self.n_tp)
    }

    pub fn q0(&self) -> Option<CMatrix> {
        (self.mode == DpMode::WithDp).then(|| self.q.principal(self.n_tp, self.q.dim() - self.n_tp))
    }
}

fn check_shapes(data: &SignalSet, steer: &SteeringSet) -> Result<()> {
    data.validate()?;
    if data.channels != steer.channels || data.grid != steer.grid {
        return Err(Error::Shape("data and steering use different channels or grids".into()));
    }
    Ok(())
}

/// Steered stacked data `D̃ᴴ(ω) d̃(ω)`, frequency-major (`N × dim`).
fn steered(data: &SignalSet, steer: &SteeringSet, mode: DpMode) -> Result<Vec<C64>> {
    check_shapes(data, steer)?;
    let n = data.grid.n;
    let m = data.n_channels();
    let dp = match mode {
        DpMode::WithDp => Some(data.dp.as_ref().ok_or_else(|| Error::Mode("direct-path mode needs direct-path data".into()))?),
        DpMode::NoDp => None,
    };
    let dim = if dp.is_some() { 2 * m } else { m };
    let mut u = vec![C64::new(0.0, 0.0); n * dim];
    for c in 0..m {
        for j in 0..n {
            let i = c * n + j;
            u[j * dim + c] = steer.tp[i].conj() * data.tp[i];
            if let Some(dp) = dp {
                u[j * dim + m + c] = steer.dp[i].conj() * dp[i];
            }
        }
    }
    Ok(u)
}

/// `Δω Σ_j u_j u_jᴴ` for frequency-major rows `u`, each scaled by `w`.
fn gram(u: &[C64], dim: usize, w: &[f64], dw: f64) -> CMatrix {
    let mut q = CMatrix::zeros(dim);
    let mut row = vec![C64::new(0.0, 0.0); dim];
    for uj in u.chunks_exact(dim) {
        for (r, (z, s)) in row.iter_mut().zip(uj.iter().zip(w)) {
            *r = z * s;
        }
        let data = q.as_mut_slice();
        for a in 0..dim {
            let ua = row[a];
            let out = &mut data[a * dim..(a + 1) * dim];
            for b in a..dim {
                out[b] += ua * row[b].conj();
            }
        }
    }
    let data = q.as_mut_slice();
    for a in 0..dim {
        data[a * dim + a] = C64::new(data[a * dim + a].re * dw, 0.0);
        for b in a + 1..dim {
            let z = data[a * dim + b] * dw;
            data[a * dim + b] = z;
            data[b * dim + a] = z.conj();
        }
    }
    q
}

pub fn correlations(data: &SignalSet, steer: &SteeringSet, mode: DpMode) -> Result<CorrelationSet> {
    let u = steered(data, steer, mode)?;
    let m = data.n_channels();
    let dim = if mode == DpMode::WithDp { 2 * m } else { m };
    let q = gram(&u, dim, &vec![1.0; dim], data.grid.delta_omega());
    Ok(CorrelationSet { q, n_tp: m, mode })
}

/// Diagonal of the stacked covariance Σ̃ for the given mode.
pub fn stacked_variances(cov: &NoiseCov, mode: DpMode) -> Result<Vec<f64>> {
    cov.validate()?;
    let mut s = cov.sigma2_tp.clone();
    if mode == DpMode::WithDp {
        let dp = cov.sigma2_dp.as_ref().ok_or_else(|| Error::Mode("direct-path mode needs direct-path variances".into()))?;
        s.extend_from_slice(dp);
    }
    Ok(s)
}

fn inv_sqrt(s: &[f64]) -> Vec<f64> {
    s.iter().map(|v| 1.0 / v.sqrt()).collect()
}

/// Whitened correlation `Σ̃^{-1/2} Q Σ̃^{-1/2}` computed directly from data.
pub fn whitened_correlation(data: &SignalSet, steer: &SteeringSet, cov: &NoiseCov, mode: DpMode) -> Result<CorrelationSet> {
    let sigma = stacked_variances(cov, mode)?;
    if sigma.len() != if mode == DpMode::WithDp { 2 * data.n_channels() } else { data.n_channels() } {
        return Err(Error::Shape(format!("{} variances for {} channels", cov.sigma2_tp.len(), data.n_channels())));
    }
    let u = steered(data, steer, mode)?;
    let q = gram(&u, sigma.len(), &inv_sqrt(&sigma), data.grid.delta_omega());
    Ok(CorrelationSet { q, n_tp: data.n_channels(), mode })
}

/// Test statistic of an already-whitened correlation set (eigenvalues only).
pub fn statistic_whitened(wc: &CorrelationSet) -> f64 {
    let top = eigvalsh(&wc.q)[0];
    match wc.q0() {
        Some(q0) => top - eigvalsh(&q0)[0],
        None => top,
    }
}

/// Test statistic only; the fast path used by Monte-Carlo loops.
pub fn glrt_statistic(data: &SignalSet, steer: &SteeringSet, cov: &NoiseCov, mode: DpMode) -> Result<f64> {
    Ok(statistic_whitened(&whitened_correlation(data, steer, cov, mode)?))
}

/// Statistic and dominant eigenvector of the whitened correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct GlrtOutput {
    pub lambda: f64,
    /// λ_max of the whitened Q1 (or R).
    pub lambda_full: f64,
    /// λ_max of the whitened Q0; zero in no-DP mode.
    pub lambda_dp: f64,
    /// Dominant eigenvector, phase-normalized; first `n_tp` entries are w₁.
    pub w: Vec<C64>,
    pub n_tp: usize,
}

impl GlrtOutput {
    pub fn w1(&self) -> &[C64] {
        &self.w[..self.n_tp]
    }
}

/// Full GLRT on an unwhitened correlation set.
pub fn glrt(corr: &CorrelationSet, cov: &NoiseCov) -> Result<GlrtOutput> {
    let sigma = stacked_variances(cov, corr.mode)?;
    if sigma.len() != corr.q.dim() {
        return Err(Error::Shape(format!("{} variances for a {}-dimensional correlation", sigma.len(), corr.q.dim())));
    }
    let wq = corr.q.congruence_diag(&inv_sqrt(&sigma));
    let eig = eigh(&wq);
    let mut w = eig.vector(0);
    normalize_phase(&mut w);
    let lambda_dp = match corr.mode {
        DpMode::WithDp => eigvalsh(&wq.principal(corr.n_tp, wq.dim() - corr.n_tp))[0],
        DpMode::NoDp => 0.0,
    };
    Ok(GlrtOutput { lambda: eig.max() - lambda_dp, lambda_full: eig.max(), lambda_dp, w, n_tp: corr.n_tp })
}

/// Waveform MLE `p̂(ω) = s̃ᴴΣ̃⁻¹D̃ᴴd̃ / (s̃ᴴΣ̃⁻¹s̃)` for a given stacked response `s̃`.
pub fn mle_waveform(s: &[C64], data: &SignalSet, steer: &SteeringSet, cov: &NoiseCov, mode: DpMode) -> Result<Vec<C64>> {
    let sigma = stacked_variances(cov, mode)?;
    if s.len() != sigma.len() {
        return Err(Error::Shape(format!("response has {} entries, expected {}", s.len(), sigma.len())));
    }
    let a: Vec<C64> = s.iter().zip(&sigma).map(|(z, v)| z / v).collect();
    let den: f64 = s.iter().zip(&a).map(|(z, y)| (z.conj() * y).re).sum();
    if !(den > 0.0) {
        return Err(Error::ZeroVector("s_tilde"));
    }
    let u = steered(data, steer, mode)?;
    Ok(u.chunks_exact(s.len()).map(|uj| a.iter().zip(uj).map(|(x, y)| x.conj() * y).sum::<C64>() / den).collect())
}

/// Quadrature norm `‖f‖²_K = Δω Σ_ω fᴴ Σ̃⁻¹ f` of stacked spectra (frequency-major).
pub fn k_norm2(f: &[C64], sigma: &[f64], dw: f64) -> f64 {
    dw * f
        .chunks_exact(sigma.len())
        .map(|fj| fj.iter().zip(sigma).map(|(z, s)| z.norm_sqr() / s).sum::<f64>())
        .sum::<f64>()
}

/// Steered data residual `D̃ᴴd̃ − p̂ s̃` (frequency-major). Its K-norm equals
/// that of `d̃ − p̂ D̃ s̃` because the steering is unitary.
pub fn residual(s: &[C64], p_hat: &[C64], data: &SignalSet, steer: &SteeringSet, mode: DpMode) -> Result<Vec<C64>> {
    let mut u = steered(data, steer, mode)?;
    for (uj, p) in u.chunks_exact_mut(s.len()).zip(p_hat) {
        for (z, si) in uj.iter_mut().zip(s) {
            *z -= p * si;
        }
    }
    Ok(u)
}

/// Steered stacked data `D̃ᴴ d̃`, frequency-major.
pub fn steered_data(data: &SignalSet, steer: &SteeringSet, mode: DpMode) -> Result<Vec<C64>> {
    steered(data, steer, mode)
}

/// Reduced objective `J(s̃) = s̃ᴴΣ̃⁻¹QΣ̃⁻¹s̃ / (s̃ᴴΣ̃⁻¹s̃)` and its gradient.
///
/// The gradient is taken in real coordinates `s̃ = x + iy` and packed as
/// `∂J/∂x + i ∂J/∂y`, which gives `(2 / s̃ᴴΣ̃⁻¹s̃) (Σ̃⁻¹QΣ̃⁻¹ − J Σ̃⁻¹) s̃`.
pub fn objective_j(s: &[C64], corr: &CorrelationSet, cov: &NoiseCov) -> Result<(f64, Vec<C64>)> {
    let sigma = stacked_variances(cov, corr.mode)?;
    if s.len() != sigma.len() || sigma.len() != corr.q.dim() {
        return Err(Error::Shape(format!("response has {} entries, expected {}", s.len(), corr.q.dim())));
    }
    let a: Vec<C64> = s.iter().zip(&sigma).map(|(z, v)| z / v).collect();
    let den: f64 = s.iter().zip(&a).map(|(z, y)| (z.conj() * y).re).sum();
    if !(den > 0.0) {
        return Err(Error::ZeroVector("s_tilde"));
    }
    let qa = corr.q.mul_vec(&a);
    let num: f64 = a.iter().zip(&qa).map(|(x, y)| (x.conj() * y).re).sum();
    let j = num / den;
    let grad = qa.iter().zip(&sigma).zip(&a).map(|((y, v), x)| (y / v - x * j) * (2.0 / den)).collect();
    Ok((j, grad))
}

/// Estimated dipole line and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleEstimate {
    pub e: Vec3,
    /// Rank of the stacked receive matrix at the hypothesis.
    pub rank: usize,
    /// The real direction is not unique (flat top of the direction spectrum).
    pub degenerate: bool,
}

impl DipoleEstimate {
    pub fn rank_deficient(&self) -> bool {
        self.rank < 3
    }
}

/// Dipole line from `A_r⁺ (Σ^TP)^{1/2} w₁`.
///
/// The pseudoinverse output is complex; the reported line is the dominant
/// eigenvector of `Re(z zᴴ)`, which equals `z` up to phase whenever `z` is a
/// complex multiple of a real vector.
pub fn estimate_dipole(w1: &[C64], sigma2_tp: &[f64], scene: &Scene, channels: &[ChannelId], hyp: &Hypothesis) -> Result<DipoleEstimate> {
    if w1.len() != channels.len() || sigma2_tp.len() != channels.len() {
        return Err(Error::Shape(format!("{} weights, {} variances for {} channels", w1.len(), sigma2_tp.len(), channels.len())));
    }
    let (x, _) = lift_state(hyp.x2, hyp.v2, &scene.topography);
    let rows = channels
        .iter()
        .map(|&ch| channel_row(scene, ch, x).map(|r| r.to_array().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let svd = RealSvd::new(&rows);
    let b: Vec<C64> = w1.iter().zip(sigma2_tp).map(|(w, s)| w * s.sqrt()).collect();
    let z = svd.pinv_apply(&b, PINV_CUTOFF);
    if z.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::ZeroVector("pseudoinverse output"));
    }
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (z[i] * z[j].conj()).re;
        }
    }
    let d = dominant_dipole(&TargetDyad(m));
    let e = d.moment.normalized()?;
    Ok(DipoleEstimate { e, rank: svd.rank(PINV_CUTOFF), degenerate: d.degenerate })
}

/// Angle between two dipole lines, in [0, π/2].
pub fn dipole_angle_error(e_est: Vec3, e_true: Vec3) -> f64 {
    let c = e_est.dot(e_true).abs() / (e_est.norm() * e_true.norm());
    c.clamp(0.0, 1.0).acos()
}

/// Complete detector output for one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutput {
    pub lambda: f64,
    pub w: Vec<C64>,
    pub e_est: Vec3,
    pub degenerate: bool,
    pub rank_deficient: bool,
}

/// Run the GLRT at `hyp` and estimate the dipole moment from its eigenvector.
pub fn detect(scene: &Scene, waveform: &Waveform, data: &SignalSet, cov: &NoiseCov, hyp: &Hypothesis, mode: DpMode) -> Result<DetectionOutput> {
    let steer = steering(scene, waveform, &data.channels, hyp)?;
    let corr = correlations(data, &steer, mode)?;
    let out = glrt(&corr, cov)?;
    let est = estimate_dipole(out.w1(), &cov.sigma2_tp, scene, &data.channels, hyp)?;
    Ok(DetectionOutput {
        lambda: out.lambda,
        w: out.w,
        e_est: est.e,
        degenerate: est.degenerate,
        rank_deficient: est.rank_deficient(),
    })
}
