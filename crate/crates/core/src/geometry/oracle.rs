use nalgebra::Point3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::obb::{box_corners, Box9DoF};

/// Monte-Carlo IoU estimate, the independent check for [`super::iou3d`].
///
/// Points are drawn uniformly inside the axis-aligned hull of both corner
/// sets; membership in each box is decided by half-space tests in the box
/// frame. Deterministic for a fixed seed. Returns 0 when no sample lands in
/// the union.
pub fn mc_iou_oracle(a: &Box9DoF, b: &Box9DoF, n_samples: u64, seed: u64) -> f64 {
    assert!(n_samples >= 1, "need at least one sample");
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for corner in box_corners(a).iter().chain(box_corners(b).iter()) {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(corner[axis]);
            hi[axis] = hi[axis].max(corner[axis]);
        }
    }

    // Hoist the per-box frames out of the sampling loop.
    let rot_a = a.rotation().transpose();
    let rot_b = b.rotation().transpose();
    let (center_a, half_a) = (a.center().coords, a.half_extents());
    let (center_b, half_b) = (b.center().coords, b.half_extents());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_union = 0u64;
    let mut in_both = 0u64;
    for _ in 0..n_samples {
        let p = Point3::new(
            lo[0] + rng.random::<f64>() * (hi[0] - lo[0]),
            lo[1] + rng.random::<f64>() * (hi[1] - lo[1]),
            lo[2] + rng.random::<f64>() * (hi[2] - lo[2]),
        );
        let la = rot_a * (p.coords - center_a);
        let hit_a = la.x.abs() <= half_a.x && la.y.abs() <= half_a.y && la.z.abs() <= half_a.z;
        let lb = rot_b * (p.coords - center_b);
        let hit_b = lb.x.abs() <= half_b.x && lb.y.abs() <= half_b.y && lb.z.abs() <= half_b.z;
        if hit_a || hit_b {
            in_union += 1;
        }
        if hit_a && hit_b {
            in_both += 1;
        }
    }
    if in_union == 0 {
        0.0
    } else {
        in_both as f64 / in_union as f64
    }
}
