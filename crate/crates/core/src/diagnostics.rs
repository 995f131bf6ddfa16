//! Monitors evaluated along a run and end-of-run verdicts.

use std::fmt::Write as _;

use crate::ambient::AmbientGeometry;
use crate::ckv::{derived_unchecked, KillingPair};
use crate::error::{Error, Result};
use crate::scalar::{bilinear, count, gauss_legendre, lit, sig9, Real, Vec3};
use crate::surface::{
    self, fit_scalar, mesh_geometry, mesh_geometry_with, Detail, MeanCurvature, TriSurface, VertexGeometry,
};

/// Column names of `trace.csv`.
pub const TRACE_HEADER: &str =
    "step,time,xi,area,volume,lambda_min,lambda_max,u_min,uperp_min,H_min,H_max,mink1,mink2,umbilicity,leaf_distance,dt";

fn sum<T: Real>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::zero(), |a, b| a + b)
}

/// `Ric(N, N)` for the `g`-unit vector along the chart direction `dir`.
pub fn ricci_along<T: Real>(geom: &AmbientGeometry<T>, p: Vec3<T>, dir: Vec3<T>) -> Result<T> {
    let ric = geom.ricci_at(p)?;
    let d = dir / dir.norm();
    let e2f = (lit::<T>(2.0) * geom.log_factor(p)).exp();
    Ok(bilinear(&ric, d, d) / e2f)
}

/// `|∫Hu − n∫φ| / (n∫φ)` with vertex quadrature.
pub fn minkowski1_from<T: Real>(vg: &[VertexGeometry<T>], n: usize) -> T {
    let nn = count::<T>(n);
    let lhs = sum(vg.iter().map(|v| v.h * v.u * v.area));
    let rhs = nn * sum(vg.iter().map(|v| v.phi * v.area));
    (lhs - rhs).abs() / rhs
}

/// First Minkowski residual with the cotangent mean curvature.
pub fn minkowski1_residual<T: Real>(
    mesh: &TriSurface<T>,
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    xi: T,
) -> Result<T> {
    minkowski1_residual_with(mesh, geom, pair, xi, MeanCurvature::Cotan)
}

pub fn minkowski1_residual_with<T: Real>(
    mesh: &TriSurface<T>,
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    xi: T,
    mean: MeanCurvature,
) -> Result<T> {
    let vg = mesh_geometry_with(mesh, geom, pair, xi, Detail::Speed, mean)?;
    Ok(minkowski1_from(&vg, crate::DIM))
}

/// Both sides of the second Minkowski identity
/// `∫H(nφ − Hu) = n/(n−1) ∫u(Ric(N⊥,N⊥) − Ric(ν,ν)) − ∫(κ₁ − κ₂)² u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minkowski2<T> {
    pub lhs: T,
    pub rhs: T,
    /// `∫H² u`, the natural size of either side.
    pub scale: T,
}

impl<T: Real> Minkowski2<T> {
    /// `|lhs − rhs| / ∫H²u`.
    pub fn residual(&self) -> T {
        (self.lhs - self.rhs).abs() / self.scale
    }

    /// `|lhs − rhs| / max(|lhs|, |rhs|)`.
    pub fn relative_to_larger(&self) -> T {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(self.rhs.abs())
    }
}

pub fn minkowski2_from<T: Real>(
    mesh: &TriSurface<T>,
    vg: &[VertexGeometry<T>],
    geom: &AmbientGeometry<T>,
    n: usize,
) -> Result<Minkowski2<T>> {
    let nn = count::<T>(n);
    let mut lhs = T::zero();
    let mut ric = T::zero();
    let mut umb = T::zero();
    let mut scale = T::zero();
    for (v, &p) in vg.iter().zip(&mesh.vertices) {
        lhs += v.h * (nn * v.phi - v.h * v.u) * v.area;
        if !geom.is_flat() {
            ric += v.u * (ricci_along(geom, p, p)? - ricci_along(geom, p, v.normal)?) * v.area;
        }
        let d = v.kappa1 - v.kappa2;
        umb += d * d * v.u * v.area;
        scale += v.h * v.h * v.u.abs() * v.area;
    }
    let rhs = nn / (nn - T::one()) * ric - umb;
    Ok(Minkowski2 { lhs, rhs, scale })
}

pub fn minkowski2_residual<T: Real>(
    mesh: &TriSurface<T>,
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    xi: T,
) -> Result<Minkowski2<T>> {
    let vg = mesh_geometry(mesh, geom, pair, xi)?;
    minkowski2_from(mesh, &vg, geom, crate::DIM)
}

/// `∫(κ₁ − κ₂)² dA_g`.
pub fn umbilicity_deficit<T: Real>(vg: &[VertexGeometry<T>]) -> T {
    sum(vg.iter().map(|v| (v.kappa1 - v.kappa2) * (v.kappa1 - v.kappa2) * v.area))
}

/// `(max λ − min λ) / mean λ`, area-weighted mean.
pub fn leaf_distance<T: Real>(vg: &[VertexGeometry<T>]) -> T {
    let (lo, hi) =
        vg.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v.lambda), hi.max(v.lambda)));
    let mean = sum(vg.iter().map(|v| v.lambda * v.area)) / sum(vg.iter().map(|v| v.area));
    (hi - lo) / mean
}

/// `max |u⊥ − |X⊥|_g| / |X⊥|_g`, zero exactly on leaves.
pub fn uperp_criterion<T: Real>(vg: &[VertexGeometry<T>]) -> T {
    vg.iter().map(|v| (v.u_perp - v.xperp_norm).abs() / v.xperp_norm).fold(T::zero(), T::max)
}

/// Everything recorded for one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub step: usize,
    pub time: T,
    pub xi: T,
    pub area: T,
    pub volume: T,
    pub lambda_min: T,
    pub lambda_max: T,
    pub u_min: T,
    pub uperp_min: T,
    pub h_min: T,
    pub h_max: T,
    pub mink1: T,
    pub mink2: T,
    pub umbilicity: T,
    pub leaf_distance: T,
    pub dt: T,
    /// Not exported: largest `|nφ − uH| / max H`.
    pub speed_ratio: T,
    /// Not exported: the terminal criterion of [`uperp_criterion`].
    pub uperp_criterion: T,
}

/// Evaluates every monitor on `mesh` given its full vertex geometry.
#[allow(clippy::too_many_arguments)]
pub fn monitor<T: Real>(
    mesh: &TriSurface<T>,
    vg: &[VertexGeometry<T>],
    geom: &AmbientGeometry<T>,
    n: usize,
    step: usize,
    time: T,
    xi: T,
    dt: T,
) -> Result<TraceRow<T>> {
    let nn = count::<T>(n);
    let min = |f: &dyn Fn(&VertexGeometry<T>) -> T| vg.iter().map(f).fold(T::infinity(), T::min);
    let max = |f: &dyn Fn(&VertexGeometry<T>) -> T| vg.iter().map(f).fold(T::neg_infinity(), T::max);
    let h_max = max(&|v| v.h);
    let speed_max = max(&|v| (nn * v.phi - v.u * v.h).abs());
    Ok(TraceRow {
        step,
        time,
        xi,
        area: surface::area(mesh, geom)?,
        volume: surface::volume(mesh, geom)?,
        lambda_min: min(&|v| v.lambda),
        lambda_max: max(&|v| v.lambda),
        u_min: min(&|v| v.u),
        uperp_min: min(&|v| v.u_perp),
        h_min: min(&|v| v.h),
        h_max,
        mink1: minkowski1_from(vg, n),
        mink2: minkowski2_from(mesh, vg, geom, n)?.residual(),
        umbilicity: umbilicity_deficit(vg),
        leaf_distance: leaf_distance(vg),
        dt,
        speed_ratio: speed_max / h_max.abs(),
        uperp_criterion: uperp_criterion(vg),
    })
}

/// Time series of [`TraceRow`]s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowTrace<T> {
    pub rows: Vec<TraceRow<T>>,
}

impl<T: Real> FlowTrace<T> {
    pub fn push(&mut self, row: TraceRow<T>) {
        self.rows.push(row);
    }

    pub fn first(&self) -> Option<&TraceRow<T>> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&TraceRow<T>> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 + self.rows.len() * 200);
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let vals = [
                r.time,
                r.xi,
                r.area,
                r.volume,
                r.lambda_min,
                r.lambda_max,
                r.u_min,
                r.uperp_min,
                r.h_min,
                r.h_max,
                r.mink1,
                r.mink2,
                r.umbilicity,
                r.leaf_distance,
                r.dt,
            ];
            let _ = write!(out, "{}", r.step);
            for v in vals {
                let _ = write!(out, ",{}", sig9(v));
            }
            out.push('\n');
        }
        out
    }

    /// Largest relative step-to-step area increase (negative when area
    /// strictly decreased at every step).
    pub fn max_area_increase(&self) -> T {
        self.rows.windows(2).map(|w| (w[1].area - w[0].area) / w[0].area).fold(T::neg_infinity(), T::max)
    }

    /// `|V_end − V_0| / V_0`.
    pub fn volume_drift(&self) -> T {
        match (self.first(), self.last()) {
            (Some(a), Some(b)) => ((b.volume - a.volume) / a.volume).abs(),
            _ => T::zero(),
        }
    }

    /// Largest excursion of `λ` outside the initial band, in units of the
    /// band width.
    pub fn lambda_band_excess(&self) -> T {
        let Some(first) = self.first() else { return T::zero() };
        let range = (first.lambda_max - first.lambda_min).max(T::epsilon());
        self.rows
            .iter()
            .map(|r| (r.lambda_max - first.lambda_max).max(first.lambda_min - r.lambda_min))
            .fold(T::neg_infinity(), T::max)
            / range
    }

    pub fn min_u(&self) -> T {
        self.rows.iter().map(|r| r.u_min).fold(T::infinity(), T::min)
    }

    pub fn max_mink1(&self) -> T {
        self.rows.iter().map(|r| r.mink1).fold(T::zero(), T::max)
    }
}

/// Node counts of the spherical quadrature behind [`LeafProfile`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SphereQuadrature {
    pub polar: usize,
    pub azimuth: usize,
    pub radial: usize,
}

impl Default for SphereQuadrature {
    fn default() -> Self {
        SphereQuadrature { polar: 48, azimuth: 48, radial: 48 }
    }
}

/// Areas of coordinate spheres `S(r)` and volumes of the balls `B(r, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafProfile<T> {
    pub r: Vec<T>,
    pub area: Vec<T>,
    pub volume: Vec<T>,
    geom: AmbientGeometry<T>,
    quad: SphereQuadrature,
    directions: Vec<(Vec3<T>, T)>,
    radial: (Vec<f64>, Vec<f64>),
}

impl<T: Real> LeafProfile<T> {
    /// Tabulates the profile on `r_grid`, which must be increasing.
    pub fn new(geom: &AmbientGeometry<T>, r_grid: &[T], quad: SphereQuadrature) -> Result<Self> {
        // polar axis along e1 so that fields symmetric about it integrate exactly in azimuth
        let (mu, wmu) = gauss_legendre(quad.polar);
        let tau = std::f64::consts::TAU;
        let mut directions = Vec::with_capacity(quad.polar * quad.azimuth);
        for (m, wm) in mu.iter().zip(&wmu) {
            let s = (1.0 - m * m).sqrt();
            for k in 0..quad.azimuth {
                let a = tau * (k as f64 + 0.5) / quad.azimuth as f64;
                let w = wm * tau / quad.azimuth as f64;
                directions.push((Vec3::from_f64([*m, s * a.cos(), s * a.sin()]), lit(w)));
            }
        }
        let mut profile = LeafProfile {
            r: Vec::new(),
            area: Vec::new(),
            volume: Vec::new(),
            geom: *geom,
            quad,
            directions,
            radial: gauss_legendre(quad.radial),
        };
        for &r in r_grid {
            let a = profile.area_at(r)?;
            let v = profile.volume_at(r)?;
            if let Some(&prev) = profile.volume.last() {
                if !(v > prev) {
                    return Err(Error::ProfileNotMonotone { r: r.to_f64().unwrap_or(f64::NAN) });
                }
            }
            profile.r.push(r);
            profile.area.push(a);
            profile.volume.push(v);
        }
        Ok(profile)
    }

    pub fn quadrature(&self) -> SphereQuadrature {
        self.quad
    }

    /// `A(S(r)) = ∫ e^{2f} r² dω`.
    pub fn area_at(&self, r: T) -> Result<T> {
        let mut total = T::zero();
        for &(d, w) in &self.directions {
            let p = d * r;
            self.geom.check(p)?;
            total += w * (lit::<T>(2.0) * self.geom.log_factor(p)).exp() * r * r;
        }
        Ok(total)
    }

    /// `V(B(r, 0)) = ∫∫ e^{3f} s² ds dω`.
    pub fn volume_at(&self, r: T) -> Result<T> {
        let half = r / lit(2.0);
        let mut total = T::zero();
        for &(d, w) in &self.directions {
            let mut radial = T::zero();
            for (x, wx) in self.radial.0.iter().zip(&self.radial.1) {
                let s = half * (T::one() + lit(*x));
                let p = d * s;
                self.geom.check(p)?;
                radial += lit::<T>(*wx) * (lit::<T>(3.0) * self.geom.log_factor(p)).exp() * s * s;
            }
            total += w * radial * half;
        }
        Ok(total)
    }

    /// Radius of the ball with volume `v`, by bisection on direct quadrature
    /// inside the tabulated range.
    pub fn radius_for_volume(&self, v: T) -> Result<T> {
        let (Some(&r_lo), Some(&r_hi)) = (self.r.first(), self.r.last()) else {
            return Err(Error::InvalidParameter("empty leaf profile".into()));
        };
        let (v_lo, v_hi) = (self.volume[0], *self.volume.last().expect("nonempty"));
        if !(v >= v_lo && v <= v_hi) {
            return Err(Error::InvalidParameter(format!("volume {v} outside the tabulated range [{v_lo}, {v_hi}]")));
        }
        let (mut lo, mut hi) = (r_lo, r_hi);
        for _ in 0..100 {
            let mid = (lo + hi) / lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.volume_at(mid)? < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * lit(16.0) * hi {
                break;
            }
        }
        Ok((lo + hi) / lit(2.0))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,area,volume\n");
        for i in 0..self.r.len() {
            let _ = writeln!(out, "{},{},{}", sig9(self.r[i]), sig9(self.area[i]), sig9(self.volume[i]));
        }
        out
    }
}

/// Uniform radius grid with `n` points on `[r_min, r_max]`.
pub fn radius_grid<T: Real>(r_min: T, r_max: T, n: usize) -> Vec<T> {
    (0..n).map(|k| r_min + (r_max - r_min) * count::<T>(k) / count::<T>(n.max(2) - 1)).collect()
}

pub fn leaf_profile<T: Real>(geom: &AmbientGeometry<T>, r_grid: &[T]) -> Result<LeafProfile<T>> {
    LeafProfile::new(geom, r_grid, SphereQuadrature::default())
}

/// Comparison of the initial surface with the leaf enclosing the same volume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsoperimetricVerdict<T> {
    pub r1: T,
    pub area_leaf: T,
    pub area_initial: T,
    pub area_final: T,
    pub volume_initial: T,
    /// `A(S(r₁)) ≤ A(Σ₀)(1 + tol)`.
    pub pass: bool,
    /// `|A(S(r₁)) − A(Σ₀)| ≤ tol · A(Σ₀)`.
    pub equality: bool,
}

pub fn isoperimetric_from<T: Real>(
    profile: &LeafProfile<T>,
    area_initial: T,
    volume_initial: T,
    area_final: T,
    tol: T,
) -> Result<IsoperimetricVerdict<T>> {
    let r1 = profile.radius_for_volume(volume_initial)?;
    let area_leaf = profile.area_at(r1)?;
    Ok(IsoperimetricVerdict {
        r1,
        area_leaf,
        area_initial,
        area_final,
        volume_initial,
        pass: area_leaf <= area_initial * (T::one() + tol),
        equality: (area_leaf - area_initial).abs() <= tol * area_initial,
    })
}

pub fn isoperimetric_check<T: Real>(
    trace: &FlowTrace<T>,
    profile: &LeafProfile<T>,
    tol: T,
) -> Result<IsoperimetricVerdict<T>> {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Err(Error::InvalidParameter("empty trace".into()));
    };
    isoperimetric_from(profile, first.area, first.volume, last.area, tol)
}

/// Affine envelope `max H ≤ a + b t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HGrowth<T> {
    pub a: T,
    pub b: T,
    pub pass: bool,
}

/// Fits the slope on the first half of the series (clamped at zero), lifts
/// the intercept until the line dominates that half, and checks the
/// extrapolation on every sample.
pub fn h_growth_fit<T: Real>(times: &[T], h_max: &[T]) -> Result<HGrowth<T>> {
    if times.len() != h_max.len() || times.len() < 10 {
        return Err(Error::InvalidParameter("H growth fit needs at least 10 samples".into()));
    }
    let half = times.len() / 2;
    let (t, h) = (&times[..half], &h_max[..half]);
    let nh = count::<T>(half);
    let tm = sum(t.iter().copied()) / nh;
    let hm = sum(h.iter().copied()) / nh;
    let stt = sum(t.iter().map(|&x| (x - tm) * (x - tm)));
    let sth = sum(t.iter().zip(h).map(|(&x, &y)| (x - tm) * (y - hm)));
    let b = if stt > T::zero() { (sth / stt).max(T::zero()) } else { T::zero() };
    let a = t.iter().zip(h).map(|(&x, &y)| y - b * x).fold(T::neg_infinity(), T::max);
    let slack: T = lit(1e-6);
    let pass = times.iter().zip(h_max).all(|(&x, &y)| y <= a + b * x + slack);
    Ok(HGrowth { a, b, pass })
}

pub fn h_growth_from_trace<T: Real>(trace: &FlowTrace<T>) -> Result<HGrowth<T>> {
    let t: Vec<T> = trace.rows.iter().map(|r| r.time).collect();
    let h: Vec<T> = trace.rows.iter().map(|r| r.h_max).collect();
    h_growth_fit(&t, &h)
}

/// Relative residuals of the evolution equations for `λ`, `u` and `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionResiduals<T> {
    pub lambda: T,
    pub u: T,
    pub h: T,
}

struct Residual<T> {
    diff: T,
    dt: T,
    diffusion: T,
    rhs: T,
}

impl<T: Real> Residual<T> {
    fn new() -> Self {
        Residual { diff: T::zero(), dt: T::zero(), diffusion: T::zero(), rhs: T::zero() }
    }

    fn add(&mut self, w: T, dt: T, diffusion: T, rhs: T) {
        let d = dt - diffusion - rhs;
        self.diff += w * d * d;
        self.dt += w * dt * dt;
        self.diffusion += w * diffusion * diffusion;
        self.rhs += w * rhs * rhs;
    }

    fn value(&self) -> T {
        (self.diff / self.dt.max(self.diffusion).max(self.rhs)).sqrt()
    }
}

/// Checks the evolution equations at the middle state of three snapshots
/// `prev`, `cur`, `next` spaced by `dt`, with a constant rotational weight
/// `xi`. Vertices are matched by index; their tangential motion is removed
/// so that time derivatives follow the normal.
///
/// Each residual is the surface `L²` norm of `(∂_t Q − u Δ_g Q) − RHS`
/// divided by the largest of the norms of `∂_t Q`, `u Δ_g Q` and `RHS`.
/// Vertices whose two-ring fit fails are skipped.
#[allow(clippy::too_many_arguments)]
pub fn evolution_residuals<T: Real>(
    prev: &TriSurface<T>,
    cur: &TriSurface<T>,
    next: &TriSurface<T>,
    dt: T,
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    xi: T,
    n: usize,
) -> Result<EvolutionResiduals<T>> {
    let nn = count::<T>(n);
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    let vg_prev = mesh_geometry(prev, geom, pair, xi)?;
    let vg_next = mesh_geometry(next, geom, pair, xi)?;
    let vg = mesh_geometry(cur, geom, pair, xi)?;
    let lam: Vec<T> = vg.iter().map(|v| v.lambda).collect();
    let us: Vec<T> = vg.iter().map(|v| v.u).collect();
    let hs: Vec<T> = vg.iter().map(|v| v.h).collect();
    let (mut rl, mut ru, mut rh) = (Residual::new(), Residual::new(), Residual::new());
    let lambda_phi2 = |q: Vec3<T>| {
        let d = derived_unchecked(geom, q);
        d.big_lambda * d.phi * d.phi
    };
    for (i, v) in vg.iter().enumerate() {
        let p = cur.vertices[i];
        let nb = v.normal;
        let (Some((gl, ll)), Some((gu, lu)), Some((gh, lh))) =
            (fit_scalar(cur, nb, &lam, i), fit_scalar(cur, nb, &us, i), fit_scalar(cur, nb, &hs, i))
        else {
            continue;
        };
        let e2inv = T::one() / (v.ef * v.ef);
        let w_node = (next.vertices[i] - prev.vertices[i]) / (two * dt);
        let w_tan = w_node.reject(nb);
        let rate = |a: T, b: T, grad: Vec3<T>| (b - a) / (two * dt) - w_tan.dot(grad);
        let dphi = v.grad_phi;
        let x = pair.field(p, xi);

        // λ
        let h_rad: T = lit(1e-5);
        let xperp_lphi2 = (lambda_phi2(p * (T::one() + h_rad)) - lambda_phi2(p * (T::one() - h_rad))) / (two * h_rad);
        let xp2 = v.xperp_norm * v.xperp_norm;
        let tangential_phi = p.dot(dphi) - p.dot(nb) * nb.dot(dphi);
        let rhs_l = -two * v.big_lambda * nn * v.phi * (xi * v.u_top)
            - v.u * two / (v.phi * v.phi * xp2) * xperp_lphi2 * (xp2 - v.u_perp * v.u_perp)
            + four * v.u * v.big_lambda / v.phi * tangential_phi;
        rl.add(v.area, rate(vg_prev[i].lambda, vg_next[i].lambda, gl), v.u * e2inv * ll, rhs_l);

        // u
        let a2 = v.kappa1 * v.kappa1 + v.kappa2 * v.kappa2;
        let nu_phi = nb.dot(dphi) / v.ef;
        let ric_nu = if geom.is_flat() { T::zero() } else { ricci_along(geom, p, nb)? };
        let ric_perp = if geom.is_flat() { T::zero() } else { ricci_along(geom, p, p)? };
        let rhs_u = nn * v.phi * v.phi - nn * x.dot(dphi) - two * v.phi * v.h * v.u
            + a2 * v.u * v.u
            + two * nn * v.u * nu_phi
            + v.u * v.u * ric_nu
            + v.h * x.dot(gu);
        ru.add(v.area, rate(vg_prev[i].u, vg_next[i].u, gu), v.u * e2inv * lu, rhs_u);

        // H
        let hess = geom.hessian_scalar(|q| derived_unchecked(geom, q).phi, p)?;
        let radial = p / p.norm();
        let hess_nu = bilinear(&hess, nb, nb) * e2inv;
        let hess_perp = bilinear(&hess, radial, radial) * e2inv;
        let rhs_h = two * e2inv * gh.dot(gu)
            + v.h * x.dot(gh)
            + v.phi * (v.h * v.h - nn * a2)
            + nn * (hess_nu - hess_perp)
            + nn * v.phi * (ric_perp - ric_nu);
        rh.add(v.area, rate(vg_prev[i].h, vg_next[i].h, gh), v.u * e2inv * lh, rhs_h);
    }
    Ok(EvolutionResiduals { lambda: rl.value(), u: ru.value(), h: rh.value() })
}
