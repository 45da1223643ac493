use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::obb::{euler_from_rotation, Box9DoF};
use super::GeometryError;

/// Rigid transform as a 4x4 homogeneous matrix.
///
/// Construction validates rigidity: the rotation block must be orthonormal
/// within 1e-6 with determinant within 1e-6 of +1, and the last row must be
/// `(0, 0, 0, 1)`. Serialized as 16 numbers in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 16]", into = "[f64; 16]")]
pub struct RigidTransform {
    matrix: Matrix4<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    pub fn new(matrix: Matrix4<f64>) -> Result<Self, GeometryError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonRigidTransform("nonfinite entry".into()));
        }
        let bottom = matrix.row(3);
        let expected = [0.0, 0.0, 0.0, 1.0];
        for (k, want) in expected.iter().enumerate() {
            if (bottom[k] - want).abs() > 1e-9 {
                return Err(GeometryError::NonRigidTransform(format!(
                    "last row must be (0,0,0,1), got {:?}",
                    [bottom[0], bottom[1], bottom[2], bottom[3]]
                )));
            }
        }
        let rot = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = rot * rot.transpose() - Matrix3::identity();
        if gram.iter().any(|v| v.abs() >= 1e-6) {
            return Err(GeometryError::NonRigidTransform(
                "rotation block is not orthonormal".into(),
            ));
        }
        if (rot.determinant() - 1.0).abs() >= 1e-6 {
            return Err(GeometryError::NonRigidTransform(format!(
                "determinant {} is not +1",
                rot.determinant()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self, GeometryError> {
        Self::new(Matrix4::from_row_slice(values))
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::new(m)
    }

    pub fn translation(translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self { matrix: m }
    }

    pub fn rotation_block(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation_block(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation_block() * p.coords + self.translation_block())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        // Products of rigid transforms drift by at most a few ulps, well
        // inside the construction tolerances.
        Self::new(self.matrix * other.matrix).expect("composition of rigid transforms is rigid")
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = self.matrix[(r, c)];
            }
        }
        out
    }
}

impl TryFrom<[f64; 16]> for RigidTransform {
    type Error = GeometryError;

    fn try_from(v: [f64; 16]) -> Result<Self, Self::Error> {
        Self::from_row_major(&v)
    }
}

impl From<RigidTransform> for [f64; 16] {
    fn from(t: RigidTransform) -> Self {
        t.to_row_major()
    }
}

/// Apply a rigid transform to a box.
///
/// The center is mapped through the matrix and the rotation is composed
/// (`R' = R_m * R_box`) and re-extracted to Z-Y-X Euler angles, so the corner
/// set of the output equals the transform applied to the input corners.
pub fn transform_box(b: &Box9DoF, m: &RigidTransform) -> Box9DoF {
    let center = m.apply_point(&b.center());
    let rot = m.rotation_block() * b.rotation();
    let (psi, theta, phi) = euler_from_rotation(&rot);
    Box9DoF::new(
        [center.x, center.y, center.z],
        [b.size_w, b.size_h, b.size_d],
        [psi, theta, phi],
    )
    .expect("rigid transforms preserve box validity")
}
