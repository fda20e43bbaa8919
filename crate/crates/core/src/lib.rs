//! Passive polarimetric multistatic radar: dipole-model signal synthesis,
//! GLRT detection with and without a direct-path reference, dipole-moment
//! estimation and Monte-Carlo experiment harness.

pub mod detector;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod config;
pub mod linalg;
pub mod noise;
pub mod run;
pub mod scene;
pub mod target;

pub use error::{Error, Result};
pub use geometry::{Topography, Vec3};
pub use scene::{AntennaPose, ChannelId, Polarimetry, Polarization, ReceiveAntenna, Receiver, Scene, C0};
pub use target::PointTarget;
