use crate::ambient::AmbientGeometry;
use crate::ckv::KillingPair;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real, Vec3};

use super::geometry::{mesh_geometry_with, Detail, MeanCurvature};
use super::mesh::{icosphere, TriSurface};

/// Initial surface families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeedKind<T> {
    Sphere {
        radius: T,
    },
    Ellipsoid {
        semiaxes: [T; 3],
    },
    /// Ellipsoid whose concentric spheres are rotated about the rotation axis
    /// by `tau · ln r`.
    Twisted {
        semiaxes: [T; 3],
        tau: T,
    },
    /// Radial graph `r = radius · (1 + amplitude · w(direction))` with a fixed
    /// smooth non-symmetric `w`, `|w| ≤ 1`.
    Perturbed {
        radius: T,
        amplitude: T,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedSpec<T> {
    pub kind: SeedKind<T>,
    pub level: u32,
}

/// A generated seed with its measured support-function minima at `Ξ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed<T> {
    pub mesh: TriSurface<T>,
    pub min_u: T,
    pub min_u_perp: T,
}

pub fn sphere<T: Real>(radius: T, level: u32) -> TriSurface<T> {
    let base = icosphere::<T>(level);
    let v = base.vertices.iter().map(|&p| p * radius).collect();
    base.with_vertices(v).expect("scaled icosphere is valid")
}

pub fn ellipsoid<T: Real>(semiaxes: [T; 3], level: u32) -> TriSurface<T> {
    let base = icosphere::<T>(level);
    let v = base.vertices.iter().map(|&p| Vec3::new(p.x * semiaxes[0], p.y * semiaxes[1], p.z * semiaxes[2])).collect();
    base.with_vertices(v).expect("scaled icosphere is valid")
}

/// The smooth direction weight used by [`SeedKind::Perturbed`].
pub fn perturbation<T: Real>(d: Vec3<T>) -> T {
    let half: T = lit(0.5);
    // a mix of second- and third-order harmonics, bounded by one in magnitude
    let y20 = half * (lit::<T>(3.0) * d.z * d.z - T::one());
    let y22 = d.x * d.y;
    let y31 = d.x * (lit::<T>(5.0) * d.z * d.z - T::one()) * lit(0.25);
    (half * y20 + half * y22 + y31) * lit(0.9)
}

pub fn perturbed_sphere<T: Real>(radius: T, amplitude: T, level: u32) -> TriSurface<T> {
    let base = icosphere::<T>(level);
    let v = base.vertices.iter().map(|&d| d * (radius * (T::one() + amplitude * perturbation(d)))).collect();
    base.with_vertices(v).expect("radial graph is valid")
}

/// Rotates `p` about the unit `axis` by `angle`.
pub fn rotate<T: Real>(p: Vec3<T>, axis: Vec3<T>, angle: T) -> Vec3<T> {
    let (s, c) = angle.sin_cos();
    p * c + axis.cross(p) * s + axis * (axis.dot(p) * (T::one() - c))
}

/// Applies `x ↦ R_axis(τ ln |x|) x`, which maps every coordinate sphere onto
/// itself and so preserves enclosed volume.
pub fn twist<T: Real>(mesh: &TriSurface<T>, axis: Vec3<T>, tau: T) -> Result<TriSurface<T>> {
    let axis = axis.normalized().ok_or_else(|| Error::InvalidParameter("twist axis must be nonzero".into()))?;
    let v = mesh.vertices.iter().map(|&p| rotate(p, axis, tau * p.norm().ln())).collect();
    mesh.with_vertices(v)
}

/// Minimum of `u = u⊥ + ξ u⊤` and of `u⊥` over the vertices.
pub fn support_minima<T: Real>(
    mesh: &TriSurface<T>,
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    xi: T,
) -> Result<(T, T)> {
    let vg = mesh_geometry_with(mesh, geom, pair, xi, Detail::Speed, MeanCurvature::Fit)?;
    let min_u = vg.iter().map(|v| v.u).fold(T::infinity(), T::min);
    let min_perp = vg.iter().map(|v| v.u_perp).fold(T::infinity(), T::min);
    Ok((min_u, min_perp))
}

/// Twisted ellipsoid about the rotation axis of `pair`, with its support
/// minima at `Ξ = 1`.
pub fn twisted_seed<T: Real>(
    semiaxes: [T; 3],
    tau: T,
    level: u32,
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
) -> Result<Seed<T>> {
    if !(tau >= T::zero()) {
        return Err(Error::InvalidParameter(format!("twist rate must be >= 0, got {tau}")));
    }
    let mesh = twist(&ellipsoid(semiaxes, level), pair.axis, tau)?;
    mesh.validate(geom)?;
    let (min_u, min_u_perp) = support_minima(&mesh, geom, pair, T::one())?;
    if !(min_u > T::zero()) {
        return Err(Error::SeedInfeasible { min_u: min_u.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(Seed { mesh, min_u, min_u_perp })
}

/// Builds any seed and measures its support minima at `Ξ = 1`. Only twisted
/// seeds are required to be starshaped with respect to `X(0)` here.
pub fn build_seed<T: Real>(spec: &SeedSpec<T>, geom: &AmbientGeometry<T>, pair: &KillingPair<T>) -> Result<Seed<T>> {
    let mesh = match spec.kind {
        SeedKind::Twisted { semiaxes, tau } => return twisted_seed(semiaxes, tau, spec.level, geom, pair),
        SeedKind::Sphere { radius } => sphere(radius, spec.level),
        SeedKind::Ellipsoid { semiaxes } => ellipsoid(semiaxes, spec.level),
        SeedKind::Perturbed { radius, amplitude } => perturbed_sphere(radius, amplitude, spec.level),
    };
    mesh.validate(geom)?;
    let (min_u, min_u_perp) = support_minima(&mesh, geom, pair, T::one())?;
    Ok(Seed { mesh, min_u, min_u_perp })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_twist_is_identity() {
        let e = ellipsoid([1.6, 0.7, 0.7], 2);
        let t = twist(&e, Vec3::axis(2), 0.0).unwrap();
        assert_eq!(e.vertices, t.vertices);
    }

    #[test]
    fn twist_preserves_radii_and_validity() {
        let e = ellipsoid([1.6, 0.7, 0.7], 3);
        for tau in [0.3f64, 1.0, 2.5] {
            let t = twist(&e, Vec3::axis(2), tau).unwrap();
            assert!(t.validate(&AmbientGeometry::euclidean()).is_ok());
            for (a, b) in e.vertices.iter().zip(&t.vertices) {
                assert!((a.norm() - b.norm()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn perturbation_is_bounded() {
        for d in icosphere::<f64>(3).vertices {
            assert!(perturbation(d).abs() <= 1.0);
        }
    }

    #[test]
    fn mismatched_twist_is_rejected() {
        let geom = AmbientGeometry::euclidean();
        let pair = KillingPair::new(Vec3::axis(2), 1.0).unwrap();
        // strong twist against the rotation sense
        let err = twisted_seed([1.6, 0.7, 0.7], 6.0, 3, &geom, &pair);
        assert!(matches!(err, Err(Error::SeedInfeasible { .. })), "{err:?}");
    }
}
