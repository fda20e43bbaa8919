//! Dipole target model.
//!
//! A scatterer's symmetric permittivity-perturbation dyad is reduced to its
//! dominant eigenpair: a reflectivity and a unit dipole moment.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{transverse_project, unit_toward, Vec3};
use crate::linalg::{eigh, CMatrix};
use crate::scene::AntennaPose;

/// Real symmetric 3×3 permittivity perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDyad(pub [[f64; 3]; 3]);

impl TargetDyad {
    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        TargetDyad([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    /// `rho · e eᵀ`.
    pub fn rank_one(rho: f64, e: Vec3) -> Self {
        let v = e.to_array();
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = rho * v[i] * v[j];
            }
        }
        TargetDyad(m)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= tol))
    }

    pub fn apply(&self, e: Vec3) -> Vec3 {
        let v = e.to_array();
        let r: Vec<f64> = (0..3).map(|i| (0..3).map(|j| self.0[i][j] * v[j]).sum()).collect();
        Vec3::new(r[0], r[1], r[2])
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Dominant dipole of a dyad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dipole {
    pub rho: f64,
    pub moment: Vec3,
    /// Set when the top eigenvalue magnitude is repeated.
    pub degenerate: bool,
}

/// Largest-magnitude eigenpair of a symmetric dyad.
///
/// Ties pick the eigenvector with the lexicographically largest pattern of
/// absolute components and raise the degeneracy flag. The returned moment has
/// its first non-zero component positive.
pub fn dominant_dipole(dyad: &TargetDyad) -> Dipole {
    let rows: Vec<Vec<f64>> = dyad.0.iter().map(|r| r.to_vec()).collect();
    let eig = eigh(&CMatrix::from_real(&rows));
    let scale = dyad.frobenius().max(f64::MIN_POSITIVE);
    let top = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);

    let candidates: Vec<usize> =
        (0..3).filter(|&k| (eig.values[k].abs() - top).abs() <= 1e-9 * scale).collect();
    let pattern = |k: usize| -> [f64; 3] {
        let v = eig.vector(k);
        [v[0].norm(), v[1].norm(), v[2].norm()]
    };
    let best = *candidates
        .iter()
        .max_by(|&&a, &&b| {
            let (pa, pb) = (pattern(a), pattern(b));
            pa.iter()
                .zip(&pb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
        .expect("3x3 spectrum is non-empty");

    let v = eig.vector(best);
    let mut moment = Vec3::new(v[0].re, v[1].re, v[2].re);
    if let Some(first) = moment.to_array().iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            moment = -moment;
        }
    }
    Dipole { rho: eig.values[best], moment, degenerate: candidates.len() > 1 }
}

/// A point scatterer moving on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    /// Ground-plane position, meters.
    pub x2: [f64; 2],
    /// Ground-plane velocity, m/s.
    pub v2: [f64; 2],
    /// Reflectivity; absorbs μ₀ and the velocity-smoothing constant.
    pub rho: f64,
    /// Unit dipole moment.
    pub dipole: Vec3,
}

/// Effective scattering vector `rho · ⟨r⊥_t, e_sc⟩ · e_sc` of a target lifted
/// to `position`, illuminated by the transmitter `tx`.
pub fn scatter_coupling(target: &PointTarget, position: Vec3, tx: &AntennaPose) -> Result<Vec3> {
    let look = unit_toward(tx.position, position)?;
    let incident = transverse_project(tx.dipole, look);
    Ok(target.dipole * (target.rho * incident.dot(target.dipole)))
}
