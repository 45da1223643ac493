//! Oriented 3D bounding-box geometry.
//!
//! Boxes are 9-DoF: a center, full extents along the three local axes, and
//! intrinsic Z-Y-X Euler angles in radians (`R = Rz(psi) * Ry(theta) * Rx(phi)`,
//! i.e. yaw-pitch-roll). Overlap volume is computed exactly by clipping one
//! box's polytope against the other's six half-spaces; [`mc_iou_oracle`]
//! provides an independent Monte-Carlo check of the same quantity.

mod obb;
mod oracle;
mod polytope;
mod transform;

pub use obb::{box_corners, euler_from_rotation, rotation_matrix, Box9DoF};
pub use oracle::mc_iou_oracle;
pub use polytope::{ConvexPolytope, HalfSpace};
pub use transform::{transform_box, RigidTransform};

use thiserror::Error;

/// Errors raised while constructing or transforming geometric values.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    /// A box had a nonpositive or nonfinite field.
    #[error("invalid box: {0}")]
    InvalidBox(String),
    /// A 4x4 matrix failed the rigidity checks (orthonormal rotation block
    /// with determinant +1 and affine last row).
    #[error("non-rigid transform: {0}")]
    NonRigidTransform(String),
    /// A polytope violated its half-space or volume invariants.
    #[error("degenerate polytope: {0}")]
    DegeneratePolytope(String),
}

/// Exact volume of the overlap region between two oriented boxes.
///
/// The polytope of `a` is clipped successively by the six half-spaces of `b`
/// and the remaining volume is summed from signed tetrahedra around the
/// centroid. An empty overlap yields 0; the result is clamped to
/// `[0, min(vol(a), vol(b))]` to absorb last-ulp rounding.
pub fn intersection_volume(a: &Box9DoF, b: &Box9DoF) -> f64 {
    let mut poly = ConvexPolytope::from_box(a);
    for plane in b.half_spaces() {
        poly = poly.clip(&plane);
        if poly.is_empty() {
            return 0.0;
        }
    }
    poly.volume().clamp(0.0, a.volume().min(b.volume()))
}

/// 3D intersection-over-union of two oriented boxes.
///
/// Returns `|a ∩ b| / (|a| + |b| - |a ∩ b|)`, or 0 when the union has no
/// volume. The pair is put into a canonical order before clipping so the
/// result is bitwise symmetric in its arguments.
pub fn iou3d(a: &Box9DoF, b: &Box9DoF) -> f64 {
    let (first, second) = if a.canonical_key() <= b.canonical_key() {
        (a, b)
    } else {
        (b, a)
    };
    let inter = intersection_volume(first, second);
    let union = first.volume() + second.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
