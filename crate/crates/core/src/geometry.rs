//! Scene geometry: 3-vectors, look directions, transverse projections and
//! lifting of ground-plane states onto known topography.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or direction in scene coordinates (meters, scene center at origin).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the direction of `self`, or an error for the zero vector.
    pub fn normalized(self) -> Result<Vec3> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector("cannot normalize"));
        }
        Ok(self * (1.0 / n))
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Known ground topography ψ(x₁, x₂).
///
/// Only flat ground is needed by the experiments; `Plane` is an affine
/// surface kept for testing the lifting formula with a non-zero gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topography {
    Flat { height: f64 },
    Plane { height: f64, slope: [f64; 2] },
}

impl Default for Topography {
    fn default() -> Self {
        Topography::Flat { height: 0.0 }
    }
}

impl Topography {
    pub fn height(&self, x2: [f64; 2]) -> f64 {
        match *self {
            Topography::Flat { height } => height,
            Topography::Plane { height, slope } => height + slope[0] * x2[0] + slope[1] * x2[1],
        }
    }

    pub fn gradient(&self, _x2: [f64; 2]) -> [f64; 2] {
        match *self {
            Topography::Flat { .. } => [0.0, 0.0],
            Topography::Plane { slope, .. } => slope,
        }
    }
}

/// Unit vector pointing from `from` to `to`.
pub fn unit_toward(from: Vec3, to: Vec3) -> Result<Vec3> {
    let d = to - from;
    let n = d.norm();
    if n == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "coincident points at ({}, {}, {})",
            from.x, from.y, from.z
        )));
    }
    Ok(d * (1.0 / n))
}

/// Component of `e` orthogonal to the unit propagation direction `look`,
/// i.e. `-look × (look × e)`.
pub fn transverse_project(e: Vec3, look: Vec3) -> Vec3 {
    e - look * e.dot(look)
}

/// Lift a ground-plane position/velocity to 3D on the topography surface.
pub fn lift_state(x2: [f64; 2], v2: [f64; 2], topo: &Topography) -> (Vec3, Vec3) {
    let g = topo.gradient(x2);
    (
        Vec3::new(x2[0], x2[1], topo.height(x2)),
        Vec3::new(v2[0], v2[1], g[0] * v2[0] + g[1] * v2[1]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn unit_toward_axis_and_345() {
        let u = unit_toward(Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert!(close(u, Vec3::X, 1e-15));
        let u = unit_toward(Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)).unwrap();
        assert!(close(u, Vec3::new(0.6, 0.8, 0.0), 1e-15));
    }

    #[test]
    fn unit_toward_coincident_is_error() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        assert!(matches!(unit_toward(p, p), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn transverse_projection_examples() {
        assert!(close(transverse_project(Vec3::Z, Vec3::X), Vec3::Z, 0.0));
        assert!(close(transverse_project(Vec3::X, Vec3::X), Vec3::ZERO, 0.0));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = transverse_project(Vec3::new(s, 0.0, s), Vec3::X);
        assert!(close(p, Vec3::new(0.0, 0.0, s), 1e-15));
    }

    #[test]
    fn lift_examples() {
        let flat = Topography::Flat { height: 0.0 };
        let (x, v) = lift_state([100.0, -50.0], [10.0, 0.0], &flat);
        assert_eq!(x, Vec3::new(100.0, -50.0, 0.0));
        assert_eq!(v, Vec3::new(10.0, 0.0, 0.0));

        let raised = Topography::Flat { height: 5.0 };
        let (x, v) = lift_state([0.0, 0.0], [0.0, 0.0], &raised);
        assert_eq!(x, Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(v, Vec3::ZERO);

        let tilted = Topography::Plane { height: 0.0, slope: [0.1, 0.0] };
        let (x, v) = lift_state([1.0, 2.0], [3.0, 4.0], &tilted);
        assert!(close(x, Vec3::new(1.0, 2.0, 0.1), 1e-15));
        assert!(close(v, Vec3::new(3.0, 4.0, 0.3), 1e-15));
    }

    #[test]
    fn flat_gradient_is_zero() {
        let t = Topography::Flat { height: 12.0 };
        assert_eq!(t.gradient([3.0, -7.0]), [0.0, 0.0]);
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        vec3()
            .prop_filter("non-degenerate", |v| v.norm() > 1e-3)
            .prop_map(|v| v.normalized().unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_orthogonal_idempotent_nonexpansive(e in vec3(), g in unit()) {
            let p = transverse_project(e, g);
            prop_assert!(p.dot(g).abs() <= 1e-12 * (1.0 + e.norm()));
            prop_assert!(close(transverse_project(p, g), p, 1e-12 * (1.0 + e.norm())));
            prop_assert!(p.norm() <= e.norm() * (1.0 + 1e-12));
        }

        #[test]
        fn cross_product_form_agrees(e in vec3(), g in unit()) {
            let triple = -g.cross(g.cross(e));
            prop_assert!(close(triple, transverse_project(e, g), 1e-12 * (1.0 + e.norm())));
        }
    }
}
