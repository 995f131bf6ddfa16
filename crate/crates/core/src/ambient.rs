//! Conformally flat ambient metrics `g = e^{2f} ḡ` on open subsets of 3-space.
//!
//! Every built-in geometry provides closed forms for `f`, its gradient and
//! Hessian, the Christoffel symbols and the Ricci tensor. Finite-difference
//! routes (`*_fd`) are kept alongside as independent checks.

use crate::error::{Error, Result};
use crate::scalar::{lit, mat3_identity, mat3_scale, mat3_zero, Mat3, Real, Vec3};

/// Christoffel symbols, indexed `[k][i][j]` for `Γ^k_{ij}`.
pub type Christoffel<T> = [[[T; 3]; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeometryKind<T> {
    /// Flat space, `f ≡ 0`, on `R³ \ {0}`.
    Euclidean,
    /// `f = −ln((x−2)² + y² + z²)` on `{0 < r < 2}`; flat but not Euclidean in
    /// these coordinates.
    PaperExample,
    /// Hyperbolic space of curvature −1 as the ball of chart radius `radius`.
    PoincareBall { radius: T },
}

/// Finite-difference step policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffOps<T> {
    /// Step as a fraction of the distance to the domain boundary.
    pub rel_step: T,
    /// Lower bound on the step.
    pub floor: T,
}

impl<T: Real> Default for DiffOps<T> {
    fn default() -> Self {
        DiffOps { rel_step: lit(1e-4), floor: lit(1e-6) }
    }
}

impl<T: Real> DiffOps<T> {
    /// Step for a point at `distance` from the boundary; distances beyond one
    /// chart unit are treated as one.
    pub fn step(&self, distance: T) -> T {
        (self.rel_step * distance.min(T::one())).max(self.floor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbientGeometry<T> {
    pub kind: GeometryKind<T>,
    pub diff: DiffOps<T>,
}

pub(crate) fn domain_exit<T: Real>(p: Vec3<T>, reason: &'static str) -> Error {
    Error::DomainExit { point: p.to_f64(), reason }
}

impl<T: Real> AmbientGeometry<T> {
    pub fn new(kind: GeometryKind<T>) -> Self {
        AmbientGeometry { kind, diff: DiffOps::default() }
    }

    pub fn euclidean() -> Self {
        Self::new(GeometryKind::Euclidean)
    }

    pub fn paper_example() -> Self {
        Self::new(GeometryKind::PaperExample)
    }

    pub fn poincare_ball(radius: T) -> Self {
        Self::new(GeometryKind::PoincareBall { radius })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GeometryKind::Euclidean => "euclidean",
            GeometryKind::PaperExample => "paper_example",
            GeometryKind::PoincareBall { .. } => "poincare_ball",
        }
    }

    /// Chart radius of the outer boundary, if any.
    pub fn outer_radius(&self) -> Option<T> {
        match self.kind {
            GeometryKind::Euclidean => None,
            GeometryKind::PaperExample => Some(lit(2.0)),
            GeometryKind::PoincareBall { radius } => Some(radius),
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self.kind, GeometryKind::PoincareBall { .. })
    }

    /// Distance from `p` to the boundary of the domain, the origin included.
    pub fn boundary_distance(&self, p: Vec3<T>) -> T {
        let r = p.norm();
        match self.outer_radius() {
            Some(outer) => r.min(outer - r),
            None => r,
        }
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        if !p.is_finite() {
            return false;
        }
        let r = p.norm();
        r > T::zero() && self.outer_radius().is_none_or(|outer| r < outer)
    }

    pub fn check(&self, p: Vec3<T>) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(domain_exit(p, "outside domain"))
        }
    }

    /// Finite-difference step at `p`.
    pub fn fd_step(&self, p: Vec3<T>) -> T {
        self.diff.step(self.boundary_distance(p))
    }

    /// Checks that a stencil of half-width `2·h` around `p` stays inside the
    /// domain and returns `h`.
    pub fn stencil(&self, p: Vec3<T>) -> Result<T> {
        self.check(p)?;
        let h = self.fd_step(p);
        if self.boundary_distance(p) <= lit::<T>(2.0) * h {
            return Err(domain_exit(p, "finite-difference stencil leaves the domain"));
        }
        Ok(h)
    }

    /// Log conformal factor `f`. No domain check.
    #[inline]
    pub fn log_factor(&self, p: Vec3<T>) -> T {
        match self.kind {
            GeometryKind::Euclidean => T::zero(),
            GeometryKind::PaperExample => {
                let d = p - Vec3::new(lit(2.0), T::zero(), T::zero());
                -d.norm_sq().ln()
            }
            GeometryKind::PoincareBall { radius } => (lit::<T>(2.0) * radius / (radius * radius - p.norm_sq())).ln(),
        }
    }

    /// Analytic gradient of `f` in chart coordinates. No domain check.
    #[inline]
    pub fn log_factor_grad(&self, p: Vec3<T>) -> Vec3<T> {
        match self.kind {
            GeometryKind::Euclidean => Vec3::zero(),
            GeometryKind::PaperExample => {
                let d = p - Vec3::new(lit(2.0), T::zero(), T::zero());
                d * (lit::<T>(-2.0) / d.norm_sq())
            }
            GeometryKind::PoincareBall { radius } => p * (lit::<T>(2.0) / (radius * radius - p.norm_sq())),
        }
    }

    /// Analytic Hessian of `f` (flat second derivatives). No domain check.
    pub fn log_factor_hessian(&self, p: Vec3<T>) -> Mat3<T> {
        let two: T = lit(2.0);
        let four: T = lit(4.0);
        let mut h = mat3_zero();
        match self.kind {
            GeometryKind::Euclidean => {}
            GeometryKind::PaperExample => {
                let d = p - Vec3::new(two, T::zero(), T::zero());
                let s = d.norm_sq();
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { T::one() } else { T::zero() };
                        h[i][j] = -two * delta / s + four * d[i] * d[j] / (s * s);
                    }
                }
            }
            GeometryKind::PoincareBall { radius } => {
                let w = radius * radius - p.norm_sq();
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { T::one() } else { T::zero() };
                        h[i][j] = two * delta / w + four * p[i] * p[j] / (w * w);
                    }
                }
            }
        }
        h
    }

    /// `g = e^{2f} I` at `p`.
    pub fn metric_at(&self, p: Vec3<T>) -> Result<Mat3<T>> {
        self.check(p)?;
        Ok(mat3_scale(&mat3_identity(), (lit::<T>(2.0) * self.log_factor(p)).exp()))
    }

    /// Gradient of `f`.
    pub fn grad_f(&self, p: Vec3<T>) -> Result<Vec3<T>> {
        self.check(p)?;
        Ok(self.log_factor_grad(p))
    }

    /// Gradient of `f` by central differences.
    pub fn grad_f_fd(&self, p: Vec3<T>) -> Result<Vec3<T>> {
        let h = self.stencil(p)?;
        Ok(gradient_fd(&|q| self.log_factor(q), p, h))
    }

    /// Closed-form Christoffel symbols of `e^{2f} ḡ`:
    /// `Γ^k_{ij} = δ_{ki} ∂_j f + δ_{kj} ∂_i f − δ_{ij} ∂_k f`.
    pub fn christoffels_at(&self, p: Vec3<T>) -> Result<Christoffel<T>> {
        self.check(p)?;
        Ok(self.christoffels_unchecked(p))
    }

    pub(crate) fn christoffels_unchecked(&self, p: Vec3<T>) -> Christoffel<T> {
        let df = self.log_factor_grad(p);
        let mut gamma = [[[T::zero(); 3]; 3]; 3];
        for (k, gk) in gamma.iter_mut().enumerate() {
            for (i, gki) in gk.iter_mut().enumerate() {
                for (j, v) in gki.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    if k == i {
                        acc += df[j];
                    }
                    if k == j {
                        acc += df[i];
                    }
                    if i == j {
                        acc -= df[k];
                    }
                    *v = acc;
                }
            }
        }
        gamma
    }

    /// Christoffel symbols from central differences of [`Self::metric_at`].
    pub fn christoffels_fd(&self, p: Vec3<T>) -> Result<Christoffel<T>> {
        let h = self.stencil(p)?;
        let two: T = lit(2.0);
        let mut dg = [mat3_zero::<T>(); 3];
        for (l, dgl) in dg.iter_mut().enumerate() {
            let e = Vec3::axis(l) * h;
            let gp = self.metric_at(p + e)?;
            let gm = self.metric_at(p - e)?;
            for i in 0..3 {
                for j in 0..3 {
                    dgl[i][j] = (gp[i][j] - gm[i][j]) / (two * h);
                }
            }
        }
        let g = self.metric_at(p)?;
        let mut ginv = mat3_zero();
        for i in 0..3 {
            ginv[i][i] = T::one() / g[i][i];
        }
        let mut gamma = [[[T::zero(); 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = T::zero();
                    for l in 0..3 {
                        acc += ginv[k][l] * (dg[i][l][j] + dg[j][i][l] - dg[l][i][j]);
                    }
                    gamma[k][i][j] = acc / two;
                }
            }
        }
        Ok(gamma)
    }

    /// Closed-form Ricci tensor: zero for the flat geometries, `−2 g` for the
    /// hyperbolic ball.
    pub fn ricci_at(&self, p: Vec3<T>) -> Result<Mat3<T>> {
        let g = self.metric_at(p)?;
        Ok(match self.kind {
            GeometryKind::Euclidean | GeometryKind::PaperExample => mat3_zero(),
            GeometryKind::PoincareBall { .. } => mat3_scale(&g, lit(-2.0)),
        })
    }

    /// Ricci tensor contracted from a Riemann tensor assembled with central
    /// differences of the Christoffel symbols.
    pub fn ricci_fd(&self, p: Vec3<T>) -> Result<Mat3<T>> {
        let h = self.stencil(p)?;
        let two: T = lit(2.0);
        let gamma = self.christoffels_unchecked(p);
        // dgamma[m][k][i][j] = ∂_m Γ^k_{ij}
        let mut dgamma = [[[[T::zero(); 3]; 3]; 3]; 3];
        for (m, dm) in dgamma.iter_mut().enumerate() {
            let e = Vec3::axis(m) * h;
            let gp = self.christoffels_unchecked(p + e);
            let gm = self.christoffels_unchecked(p - e);
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        dm[k][i][j] = (gp[k][i][j] - gm[k][i][j]) / (two * h);
                    }
                }
            }
        }
        // Ric_{sn} = ∂_r Γ^r_{ns} − ∂_n Γ^r_{rs} + Γ^r_{rl} Γ^l_{ns} − Γ^r_{nl} Γ^l_{rs}
        let mut ric = mat3_zero();
        for s in 0..3 {
            for n in 0..3 {
                let mut acc = T::zero();
                for r in 0..3 {
                    acc += dgamma[r][r][n][s] - dgamma[n][r][r][s];
                    for l in 0..3 {
                        acc += gamma[r][r][l] * gamma[l][n][s] - gamma[r][n][l] * gamma[l][r][s];
                    }
                }
                ric[s][n] = acc;
            }
        }
        Ok(ric)
    }

    /// Covariant Hessian `∇∇F` of a scalar field: second differences of `F`
    /// corrected by the closed-form Christoffel symbols.
    pub fn hessian_scalar<F>(&self, field: F, p: Vec3<T>) -> Result<Mat3<T>>
    where
        F: Fn(Vec3<T>) -> T,
    {
        let h = self.stencil(p)?;
        let grad = gradient_fd(&field, p, h);
        let second = second_derivatives_fd(&field, p, h);
        let gamma = self.christoffels_unchecked(p);
        let mut out = second;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] -= gamma[k][i][j] * grad[k];
                }
            }
        }
        Ok(out)
    }
}

/// Central-difference gradient with step `h`.
pub fn gradient_fd<T: Real, F: Fn(Vec3<T>) -> T + ?Sized>(field: &F, p: Vec3<T>, h: T) -> Vec3<T> {
    let two: T = lit(2.0);
    let mut g = Vec3::zero();
    for i in 0..3 {
        let e = Vec3::axis(i) * h;
        g[i] = (field(p + e) - field(p - e)) / (two * h);
    }
    g
}

/// Central second differences, symmetric by construction.
pub fn second_derivatives_fd<T: Real, F: Fn(Vec3<T>) -> T + ?Sized>(field: &F, p: Vec3<T>, h: T) -> Mat3<T> {
    let mut out = mat3_zero();
    let f0 = field(p);
    let four: T = lit(4.0);
    for i in 0..3 {
        let ei = Vec3::axis(i) * h;
        out[i][i] = (field(p + ei) - lit::<T>(2.0) * f0 + field(p - ei)) / (h * h);
        for j in i + 1..3 {
            let ej = Vec3::axis(j) * h;
            let v =
                (field(p + ei + ej) - field(p + ei - ej) - field(p - ei + ej) + field(p - ei - ej)) / (four * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::mat3_max_abs;
    use proptest::prelude::*;

    fn interior_point() -> impl Strategy<Value = Vec3<f64>> {
        (0.2f64..1.5, -1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r, z, a)| {
            let s = (1.0 - z * z).sqrt();
            Vec3::new(s * a.cos(), s * a.sin(), z) * r
        })
    }

    proptest! {
        #[test]
        fn christoffels_match_finite_differences(p in interior_point()) {
            for geom in [AmbientGeometry::paper_example(), AmbientGeometry::poincare_ball(2.0)] {
                let exact = geom.christoffels_at(p).unwrap();
                let fd = geom.christoffels_fd(p).unwrap();
                let scale = exact.iter().flatten().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
                for (a, b) in exact.iter().flatten().flatten().zip(fd.iter().flatten().flatten()) {
                    prop_assert!((a - b).abs() <= 1e-5 * scale, "{} at {p:?}: {a} vs {b}", geom.name());
                }
            }
        }

        #[test]
        fn metric_is_positive_and_conformal(p in interior_point()) {
            for geom in [AmbientGeometry::euclidean(), AmbientGeometry::paper_example(), AmbientGeometry::poincare_ball(2.0)] {
                let g = geom.metric_at(p).unwrap();
                prop_assert!(g[0][0] > 0.0);
                for i in 0..3 {
                    for j in 0..3 {
                        let want = if i == j { g[0][0] } else { 0.0 };
                        prop_assert!((g[i][j] - want).abs() <= 1e-14 * g[0][0]);
                    }
                }
            }
        }
    }

    #[test]
    fn metric_spot_values() {
        let e = AmbientGeometry::<f64>::euclidean();
        assert_eq!(e.metric_at(Vec3::new(0.3, -2.0, 7.0)).unwrap(), mat3_identity());

        let pe = AmbientGeometry::<f64>::paper_example();
        let g = pe.metric_at(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(
            mat3_max_abs(&[
                [g[0][0] - 1.0, g[0][1], g[0][2]],
                [g[1][0], g[1][1] - 1.0, g[1][2]],
                [g[2][0], g[2][1], g[2][2] - 1.0]
            ]) < 1e-15
        );
        let g = pe.metric_at(Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((g[1][1] - 1.0 / 25.0).abs() < 1e-15);
        assert_eq!(g[0][1], 0.0);
    }

    #[test]
    fn domain_exit_outside_and_at_origin() {
        let pe = AmbientGeometry::<f64>::paper_example();
        assert!(matches!(pe.metric_at(Vec3::new(2.5, 0.0, 0.0)), Err(Error::DomainExit { .. })));
        assert!(matches!(pe.metric_at(Vec3::zero()), Err(Error::DomainExit { .. })));
        // stencil refuses points hugging the boundary
        assert!(pe.christoffels_fd(Vec3::new(2.0 - 1e-9, 0.0, 0.0)).is_err());
    }

    #[test]
    fn grad_f_closed_form_and_fd() {
        let pe = AmbientGeometry::<f64>::paper_example();
        let g = pe.grad_f(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((g - Vec3::new(2.0, 0.0, 0.0)).max_abs() < 1e-15);
        let p = Vec3::new(0.4, -0.7, 0.3);
        let fd = pe.grad_f_fd(p).unwrap();
        assert!((fd - pe.grad_f(p).unwrap()).max_abs() < 1e-7);
        assert_eq!(AmbientGeometry::<f64>::euclidean().grad_f(p).unwrap(), Vec3::zero());
    }

    #[test]
    fn christoffels_symmetric_and_zero_in_euclidean() {
        let e = AmbientGeometry::<f64>::euclidean();
        let gam = e.christoffels_at(Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert!(gam.iter().flatten().flatten().all(|&v| v == 0.0));
        let pb = AmbientGeometry::<f64>::poincare_ball(1.0);
        let gam = pb.christoffels_at(Vec3::new(0.2, 0.1, -0.4)).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(gam[k][i][j], gam[k][j][i]);
                }
            }
        }
    }

    #[test]
    fn hessian_of_constant_and_linear_fields_vanish_in_euclidean() {
        let e = AmbientGeometry::<f64>::euclidean();
        let p = Vec3::new(0.5, 0.1, -0.2);
        let h = e.hessian_scalar(|_| 1.0, p).unwrap();
        assert!(mat3_max_abs(&h) == 0.0);
        let h = e.hessian_scalar(|q| 3.0 * q.x - 2.0 * q.y + 0.5 * q.z + 1.0, p).unwrap();
        assert!(mat3_max_abs(&h) < 1e-6, "{h:?}");
    }

    #[test]
    fn ricci_spot_values() {
        let pe = AmbientGeometry::<f64>::paper_example();
        assert_eq!(pe.ricci_at(Vec3::new(1.0, 0.0, 0.0)).unwrap(), mat3_zero());
        let fd = pe.ricci_fd(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(mat3_max_abs(&fd) < 1e-4, "{fd:?}");
    }
}
