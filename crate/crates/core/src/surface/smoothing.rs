use crate::error::{Error, Result};
use crate::scalar::{lit, Real, Vec3};

use super::geometry::{flat_geometry, Quadric};
use super::mesh::TriSurface;

/// Worst-element statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshQuality<T> {
    /// Smallest interior angle, radians.
    pub min_angle: T,
    /// Largest `l_max / (2√3 r_in)`, one for an equilateral triangle.
    pub max_aspect: T,
    pub min_area: T,
}

pub fn quality<T: Real>(mesh: &TriSurface<T>) -> MeshQuality<T> {
    let mut min_angle = T::infinity();
    let mut max_aspect = T::zero();
    let mut min_area = T::infinity();
    let two: T = lit(2.0);
    for f in 0..mesh.faces.len() {
        let p = mesh.corners(f);
        let area = mesh.face_area_flat(f);
        let mut lmax = T::zero();
        let mut perimeter = T::zero();
        for k in 0..3 {
            let a = p[(k + 1) % 3] - p[k];
            let b = p[(k + 2) % 3] - p[k];
            let angle = a.cross(b).norm().atan2(a.dot(b));
            min_angle = min_angle.min(angle);
            lmax = lmax.max(a.norm());
            perimeter += a.norm();
        }
        let inradius = two * area / perimeter;
        max_aspect = max_aspect.max(lmax / (two * lit::<T>(3.0).sqrt() * inradius));
        min_area = min_area.min(area);
    }
    MeshQuality { min_angle, max_aspect, min_area }
}

/// Moves every vertex by `strength` times the tangential part of the offset to
/// the area-weighted centroid of its incident faces, then back onto the local
/// quadric through its two-ring.
pub fn tangential_smooth<T: Real>(mesh: &TriSurface<T>, strength: T) -> Result<TriSurface<T>> {
    if !(strength >= T::zero() && strength <= T::one()) {
        return Err(Error::InvalidParameter(format!("smoothing strength must lie in [0,1], got {strength}")));
    }
    let flat = flat_geometry(mesh)?;
    let third: T = lit(1.0 / 3.0);
    let mut out = Vec::with_capacity(mesh.n_vertices());
    for (i, &p) in mesh.vertices.iter().enumerate() {
        let mut acc = Vec3::zero();
        let mut wsum = T::zero();
        for &f in &mesh.topo.vertex_faces[i] {
            let [a, b, c] = mesh.corners(f);
            let w = mesh.face_area_flat(f);
            acc += (a + b + c) * (third * w);
            wsum += w;
        }
        let n = flat.normal[i];
        let shift = ((acc / wsum) - p).reject(n) * strength;
        let moved = p + shift;
        let q = Quadric::fit(p, n, mesh.topo.two_ring[i].iter().map(|&j| mesh.vertices[j]))
            .ok_or_else(|| Error::MeshDegenerate(format!("quadric fit failed at vertex {i}")))?;
        out.push(q.project(moved));
    }
    mesh.with_vertices(out)
}
