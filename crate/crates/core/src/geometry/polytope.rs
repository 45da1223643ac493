use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::obb::{box_corners, Box9DoF};
use super::GeometryError;

/// Vertices within this distance of a clipping plane count as inside, which
/// avoids sliver faces from grazing cuts. The induced IoU error is far below
/// the test tolerances.
const CLIP_EPS: f64 = 1e-12;

/// Closed half-space `{ x : normal . x <= offset }`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSpace {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Signed distance, positive outside.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

impl Default for HalfSpace {
    fn default() -> Self {
        Self::new(Vector3::zeros(), 0.0)
    }
}

/// Convex polytope as a vertex list plus outward-oriented face loops.
#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<Vec<usize>>,
}

impl ConvexPolytope {
    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    /// Polytope of an oriented box, faces wound counterclockwise as seen
    /// from outside.
    pub fn from_box(b: &Box9DoF) -> Self {
        let vertices = box_corners(b).to_vec();
        // Corner indexing: bit 2 = x sign, bit 1 = y sign, bit 0 = z sign.
        let faces = vec![
            vec![4, 6, 7, 5], // +x
            vec![0, 1, 3, 2], // -x
            vec![2, 3, 7, 6], // +y
            vec![0, 4, 5, 1], // -y
            vec![1, 5, 7, 3], // +z
            vec![0, 2, 6, 4], // -z
        ];
        Self { vertices, faces }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    /// Volume from signed tetrahedra between each face triangle and the
    /// vertex centroid. Nonnegative for outward-oriented faces.
    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let centroid = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / self.vertices.len() as f64;
        let mut six_vol = 0.0;
        for face in &self.faces {
            let base = self.vertices[face[0]].coords - centroid;
            for k in 1..face.len() - 1 {
                let edge_a = self.vertices[face[k]].coords - centroid;
                let edge_b = self.vertices[face[k + 1]].coords - centroid;
                six_vol += base.cross(&edge_a).dot(&edge_b);
            }
        }
        (six_vol / 6.0).max(0.0)
    }

    /// Clip against a half-space, keeping the inside part.
    ///
    /// Each face loop is clipped Sutherland-Hodgman style; edge crossings are
    /// computed once per edge so adjacent faces share the exact same point,
    /// and the cut cross-section is closed with a cap face ordered around the
    /// plane normal.
    pub fn clip(&self, plane: &HalfSpace) -> ConvexPolytope {
        if self.is_empty() {
            return ConvexPolytope::empty();
        }
        let dist: Vec<f64> = self.vertices.iter().map(|v| plane.distance(v)).collect();
        let inside: Vec<bool> = dist.iter().map(|d| *d <= CLIP_EPS).collect();
        if inside.iter().all(|i| *i) {
            return self.clone();
        }
        if !inside.iter().any(|i| *i) {
            return ConvexPolytope::empty();
        }

        let mut out = ConvexPolytope::empty();
        // Old vertex index -> new index, assigned lazily for kept vertices.
        let mut kept: HashMap<usize, usize> = HashMap::new();
        // Edge (min, max) -> new index of its crossing point.
        let mut crossings: HashMap<(usize, usize), usize> = HashMap::new();
        let mut on_plane: Vec<usize> = Vec::new();

        for face in &self.faces {
            let mut loop_out: Vec<usize> = Vec::new();
            for k in 0..face.len() {
                let cur = face[k];
                let nxt = face[(k + 1) % face.len()];
                if inside[cur] {
                    let idx = *kept.entry(cur).or_insert_with(|| {
                        out.vertices.push(self.vertices[cur]);
                        if dist[cur].abs() <= CLIP_EPS {
                            on_plane.push(out.vertices.len() - 1);
                        }
                        out.vertices.len() - 1
                    });
                    loop_out.push(idx);
                    if !inside[nxt] {
                        loop_out.push(edge_crossing(
                            self, &dist, cur, nxt, &mut crossings, &mut out, &mut on_plane,
                        ));
                    }
                } else if inside[nxt] {
                    loop_out.push(edge_crossing(
                        self, &dist, cur, nxt, &mut crossings, &mut out, &mut on_plane,
                    ));
                }
            }
            loop_out.dedup();
            if loop_out.len() > 1 && loop_out[0] == *loop_out.last().unwrap() {
                loop_out.pop();
            }
            if loop_out.len() >= 3 {
                out.faces.push(loop_out);
            }
        }

        // Close the cut with a cap face wound around the plane normal, which
        // is the outward direction of the removed side.
        on_plane.sort_unstable();
        on_plane.dedup();
        if on_plane.len() >= 3 {
            let cap = order_cap(&out.vertices, &on_plane, &plane.normal);
            if cap.len() >= 3 {
                out.faces.push(cap);
            }
        }
        if out.faces.is_empty() {
            return ConvexPolytope::empty();
        }
        out
    }

    /// Check the polytope invariants: every vertex on or inside every face
    /// plane (within `tol`), and nonnegative volume.
    pub fn validate(&self, tol: f64) -> Result<(), GeometryError> {
        for (fi, face) in self.faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(GeometryError::DegeneratePolytope(format!(
                    "face {fi} has {} vertices",
                    face.len()
                )));
            }
            let a = self.vertices[face[0]];
            let b = self.vertices[face[1]];
            let c = self.vertices[face[2]];
            let normal = (b - a).cross(&(c - a));
            let norm = normal.norm();
            if norm == 0.0 {
                continue; // degenerate sliver face contributes no volume
            }
            let n = normal / norm;
            let offset = n.dot(&a.coords);
            for v in &self.vertices {
                if n.dot(&v.coords) - offset > tol {
                    return Err(GeometryError::DegeneratePolytope(format!(
                        "vertex outside face {fi} plane by {}",
                        n.dot(&v.coords) - offset
                    )));
                }
            }
        }
        if self.volume() < 0.0 {
            return Err(GeometryError::DegeneratePolytope("negative volume".into()));
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn edge_crossing(
    poly: &ConvexPolytope,
    dist: &[f64],
    cur: usize,
    nxt: usize,
    crossings: &mut HashMap<(usize, usize), usize>,
    out: &mut ConvexPolytope,
    on_plane: &mut Vec<usize>,
) -> usize {
    let key = (cur.min(nxt), cur.max(nxt));
    *crossings.entry(key).or_insert_with(|| {
        let (a, b) = (key.0, key.1);
        let t = dist[a] / (dist[a] - dist[b]);
        let p = poly.vertices[a] + (poly.vertices[b] - poly.vertices[a]) * t;
        out.vertices.push(p);
        on_plane.push(out.vertices.len() - 1);
        out.vertices.len() - 1
    })
}

/// Order the cap ring counterclockwise as seen from the tip of `normal`.
fn order_cap(vertices: &[Point3<f64>], ring: &[usize], normal: &Vector3<f64>) -> Vec<usize> {
    let centroid = ring
        .iter()
        .fold(Vector3::zeros(), |acc, i| acc + vertices[*i].coords)
        / ring.len() as f64;
    // In-plane basis (u, w) with u x w = normal.
    let mut u = Vector3::zeros();
    for i in ring {
        let r = vertices[*i].coords - centroid;
        let r = r - normal * normal.dot(&r);
        if r.norm() > u.norm() {
            u = r;
        }
    }
    if u.norm() == 0.0 {
        return Vec::new();
    }
    let u = u.normalize();
    let w = normal.cross(&u);
    let mut ordered: Vec<(f64, usize)> = ring
        .iter()
        .map(|i| {
            let r = vertices[*i].coords - centroid;
            (r.dot(&w).atan2(r.dot(&u)), *i)
        })
        .collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    ordered.into_iter().map(|(_, i)| i).collect()
}
