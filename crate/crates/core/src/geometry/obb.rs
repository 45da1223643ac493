use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::polytope::HalfSpace;
use super::GeometryError;

/// Oriented 3D bounding box: center, full extents, and Z-Y-X Euler angles.
///
/// Serialized as a 9-element array `[x, y, z, w, h, d, psi, theta, phi]`
/// (meters and radians). Extents are full sizes, not half sizes, and must be
/// positive; every field must be finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Box9DoF {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub size_w: f64,
    pub size_h: f64,
    pub size_d: f64,
    pub psi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Box9DoF {
    pub fn new(
        center: [f64; 3],
        size: [f64; 3],
        angles: [f64; 3],
    ) -> Result<Self, GeometryError> {
        let fields = [
            center[0], center[1], center[2], size[0], size[1], size[2], angles[0], angles[1],
            angles[2],
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidBox("nonfinite field".into()));
        }
        if size.iter().any(|s| *s <= 0.0) {
            return Err(GeometryError::InvalidBox(format!(
                "extents must be positive, got {size:?}"
            )));
        }
        Ok(Self {
            center_x: center[0],
            center_y: center[1],
            center_z: center[2],
            size_w: size[0],
            size_h: size[1],
            size_d: size[2],
            psi: angles[0],
            theta: angles[1],
            phi: angles[2],
        })
    }

    /// Axis-aligned box, zero rotation.
    pub fn axis_aligned(center: [f64; 3], size: [f64; 3]) -> Result<Self, GeometryError> {
        Self::new(center, size, [0.0; 3])
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(self.center_x, self.center_y, self.center_z)
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::new(self.size_w / 2.0, self.size_h / 2.0, self.size_d / 2.0)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(self.psi, self.theta, self.phi)
    }

    pub fn volume(&self) -> f64 {
        self.size_w * self.size_h * self.size_d
    }

    /// Whether the point lies inside or on the box.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let local = self.rotation().transpose() * (p - self.center());
        let h = self.half_extents();
        local.x.abs() <= h.x && local.y.abs() <= h.y && local.z.abs() <= h.z
    }

    /// The six bounding half-spaces, outward normals along the box axes.
    pub fn half_spaces(&self) -> [HalfSpace; 6] {
        let rot = self.rotation();
        let c = self.center().coords;
        let h = self.half_extents();
        let mut planes = [HalfSpace::default(); 6];
        for axis in 0..3 {
            let n = rot.column(axis).into_owned();
            let half = h[axis];
            planes[2 * axis] = HalfSpace::new(n, n.dot(&c) + half);
            planes[2 * axis + 1] = HalfSpace::new(-n, -n.dot(&c) + half);
        }
        planes
    }

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.center_x,
            self.center_y,
            self.center_z,
            self.size_w,
            self.size_h,
            self.size_d,
            self.psi,
            self.theta,
            self.phi,
        ]
    }

    /// Total order over the raw field bits, used to canonicalize argument
    /// order in symmetric operations.
    pub(crate) fn canonical_key(&self) -> [u64; 9] {
        self.to_array().map(|v| v.to_bits())
    }
}

impl TryFrom<[f64; 9]> for Box9DoF {
    type Error = GeometryError;

    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]])
    }
}

impl From<Box9DoF> for [f64; 9] {
    fn from(b: Box9DoF) -> Self {
        b.to_array()
    }
}

/// Rotation matrix for intrinsic Z-Y-X Euler angles:
/// `R = Rz(psi) * Ry(theta) * Rx(phi)`, angles in radians.
pub fn rotation_matrix(psi: f64, theta: f64, phi: f64) -> Matrix3<f64> {
    let (sz, cz) = psi.sin_cos();
    let (sy, cy) = theta.sin_cos();
    let (sx, cx) = phi.sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Recover `(psi, theta, phi)` with `R = Rz(psi) * Ry(theta) * Rx(phi)`.
///
/// At gimbal lock (`|cos theta| < 1e-9`) the decomposition is not unique; all
/// z-rotation is assigned to `psi` and `phi` is set to 0. Any valid
/// decomposition reproduces the same corner set, which is the tested contract.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let theta = sy.asin();
    let cy = (1.0 - sy * sy).sqrt();
    if cy >= 1e-9 {
        let psi = r[(1, 0)].atan2(r[(0, 0)]);
        let phi = r[(2, 1)].atan2(r[(2, 2)]);
        (psi, theta, phi)
    } else if sy > 0.0 {
        // theta = +pi/2: row 0 is [0, sin(phi-psi), cos(phi-psi)]
        let psi = (-r[(0, 1)]).atan2(r[(0, 2)]);
        (psi, theta, 0.0)
    } else {
        // theta = -pi/2: row 0 is [0, -sin(phi+psi), -cos(phi+psi)]
        let psi = (-r[(0, 1)]).atan2(-r[(0, 2)]);
        (psi, theta, 0.0)
    }
}

/// The eight corners of a box.
///
/// Corner `i` takes sign bits from the binary count over `(x, y, z)`:
/// bit 2 is the x sign, bit 1 the y sign, bit 0 the z sign, with a set bit
/// meaning the positive half-extent. Corner 0 is `center + R * (-w/2, -h/2, -d/2)`,
/// corner 7 is `center + R * (+w/2, +h/2, +d/2)`.
pub fn box_corners(b: &Box9DoF) -> [Point3<f64>; 8] {
    let rot = b.rotation();
    let c = b.center();
    let h = b.half_extents();
    let mut corners = [Point3::origin(); 8];
    for (i, corner) in corners.iter_mut().enumerate() {
        let sx = if i & 4 != 0 { 1.0 } else { -1.0 };
        let sy = if i & 2 != 0 { 1.0 } else { -1.0 };
        let sz = if i & 1 != 0 { 1.0 } else { -1.0 };
        *corner = c + rot * Vector3::new(sx * h.x, sy * h.y, sz * h.z);
    }
    corners
}
