use crate::ambient::AmbientGeometry;
use crate::error::{Error, Result};
use crate::scalar::{gauss_legendre, lit, Real, Vec3};

use super::mesh::TriSurface;

/// Weight `e^{k f}` at a quadrature node, which must lie in the domain.
fn weight<T: Real>(geom: &AmbientGeometry<T>, p: Vec3<T>, k: T) -> Result<T> {
    if matches!(geom.kind, crate::ambient::GeometryKind::Euclidean) {
        return Ok(T::one());
    }
    geom.check(p)?;
    Ok((k * geom.log_factor(p)).exp())
}

/// `g`-area: flat triangle areas times the three-point average of `e^{2f}`.
pub fn area<T: Real>(mesh: &TriSurface<T>, geom: &AmbientGeometry<T>) -> Result<T> {
    let two_thirds: T = lit(2.0 / 3.0);
    let sixth: T = lit(1.0 / 6.0);
    let third: T = lit(1.0 / 3.0);
    let mut total = T::zero();
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.corners(f);
        let nodes = [
            a * two_thirds + b * sixth + c * sixth,
            a * sixth + b * two_thirds + c * sixth,
            a * sixth + b * sixth + c * two_thirds,
        ];
        let mut w = T::zero();
        for q in nodes {
            w += weight(geom, q, lit(2.0))?;
        }
        total += mesh.face_area_flat(f) * w * third;
    }
    Ok(total)
}

/// Gauss points in the radial direction of [`volume`].
const RADIAL_NODES: usize = 8;

/// `g`-volume: signed cones from the chart origin over each face. The
/// weight `e^{3f}` is integrated along the cone axis by Gauss–Legendre and
/// across the face by the three-point rule. Requires the surface to enclose
/// the origin.
pub fn volume<T: Real>(mesh: &TriSurface<T>, geom: &AmbientGeometry<T>) -> Result<T> {
    let six: T = lit(6.0);
    let flat = matches!(geom.kind, crate::ambient::GeometryKind::Euclidean);
    let radial: Vec<(T, T)> = {
        let (x, w) = gauss_legendre(RADIAL_NODES);
        // on [0, 1] with the s² Jacobian folded into the weight
        x.iter()
            .zip(&w)
            .map(|(x, w)| {
                let s = 0.5 * (1.0 + x);
                (lit(s), lit(0.5 * w * s * s))
            })
            .collect()
    };
    let two_thirds: T = lit(2.0 / 3.0);
    let sixth: T = lit(1.0 / 6.0);
    let mut total = T::zero();
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.corners(f);
        let tet = a.dot(b.cross(c)) / six;
        if flat {
            total += tet;
            continue;
        }
        let nodes = [
            a * two_thirds + b * sixth + c * sixth,
            a * sixth + b * two_thirds + c * sixth,
            a * sixth + b * sixth + c * two_thirds,
        ];
        let mut w = T::zero();
        for y in nodes {
            geom.check(y)?;
            for &(s, ws) in &radial {
                w += ws * (lit::<T>(3.0) * geom.log_factor(y * s)).exp();
            }
        }
        // the cone over a face with unit weight has volume tet, and the s²
        // rule integrates to 1/3 per node
        total += tet * w;
    }
    if !(total > T::zero()) {
        return Err(Error::MeshDegenerate(format!("enclosed volume {total} is not positive")));
    }
    Ok(total)
}
