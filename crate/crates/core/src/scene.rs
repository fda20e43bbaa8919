//! Physical scene: transmitter of opportunity, dual-polarized receivers,
//! moving point targets and ground topography.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Topography, Vec3};
use crate::target::PointTarget;

/// Free-space propagation speed, m/s.
pub const C0: f64 = 2.997_924_58e8;

/// A short dipole antenna at a fixed position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPose {
    pub position: Vec3,
    pub dipole: Vec3,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn index(self) -> u64 {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::H => "H",
            Polarization::V => "V",
        })
    }
}

/// One polarization channel of a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiveAntenna {
    pub dipole: Vec3,
    /// Target-path gain g_{k,p}; the spreading loss is applied separately.
    pub gain: f64,
    /// Direct-path receive gain.
    pub dp_gain: f64,
}

impl ReceiveAntenna {
    pub fn new(dipole: Vec3) -> Self {
        ReceiveAntenna { dipole, gain: 1.0, dp_gain: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receiver {
    pub position: Vec3,
    pub h: ReceiveAntenna,
    /// Absent for receivers without polarimetric diversity.
    pub v: Option<ReceiveAntenna>,
}

impl Receiver {
    pub fn antenna(&self, pol: Polarization) -> Option<&ReceiveAntenna> {
        match pol {
            Polarization::H => Some(&self.h),
            Polarization::V => self.v.as_ref(),
        }
    }
}

/// Identifies one receive channel: receiver index and polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId {
    pub receiver: usize,
    pub pol: Polarization,
}

/// Which receive polarizations a processing chain uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarimetry {
    /// H and V channels.
    Full,
    /// H channels only.
    HOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub transmitter: AntennaPose,
    pub receivers: Vec<Receiver>,
    pub targets: Vec<PointTarget>,
    pub topography: Topography,
}

impl Scene {
    /// All channels present in the scene, receiver-major with H before V.
    pub fn channels(&self) -> Vec<ChannelId> {
        self.channels_for(Polarimetry::Full)
    }

    pub fn channels_for(&self, pol: Polarimetry) -> Vec<ChannelId> {
        let mut out = Vec::with_capacity(2 * self.receivers.len());
        for (k, r) in self.receivers.iter().enumerate() {
            out.push(ChannelId { receiver: k, pol: Polarization::H });
            if r.v.is_some() && pol == Polarimetry::Full {
                out.push(ChannelId { receiver: k, pol: Polarization::V });
            }
        }
        out
    }

    pub fn antenna(&self, ch: ChannelId) -> Option<&ReceiveAntenna> {
        self.receivers.get(ch.receiver)?.antenna(ch.pol)
    }

    /// The same scene with every V antenna removed.
    pub fn without_v(&self) -> Scene {
        let mut s = self.clone();
        for r in &mut s.receivers {
            r.v = None;
        }
        s
    }

    pub fn with_targets(&self, targets: Vec<PointTarget>) -> Scene {
        Scene { targets, ..self.clone() }
    }
}
