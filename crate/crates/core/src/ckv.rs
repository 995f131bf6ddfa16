//! The conformal Killing pair `X = X⊥ + Ξ X⊤`, the scalars derived from it,
//! the cutoff schedule and a sampling verifier for the structural assumptions
//! the flow relies on.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ambient::{gradient_fd, AmbientGeometry};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, mat3_max_abs, mat3_zero, sym3_eigenvalues, Mat3, Real, Vec3};

/// Dilation `X⊥ = x` and rotation `X⊤ = ω a × x` about the unit axis `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KillingPair<T> {
    pub axis: Vec3<T>,
    pub omega: T,
}

impl<T: Real> KillingPair<T> {
    pub fn new(axis: Vec3<T>, omega: T) -> Result<Self> {
        let axis = axis.normalized().ok_or_else(|| Error::InvalidParameter("rotation axis must be nonzero".into()))?;
        if !(omega >= T::zero()) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("rotation rate must be finite and >= 0, got {omega}")));
        }
        Ok(KillingPair { axis, omega })
    }

    /// The pair with no rotational part.
    pub fn dilation_only() -> Self {
        KillingPair { axis: Vec3::axis(0), omega: T::zero() }
    }

    #[inline]
    pub fn x_perp(&self, p: Vec3<T>) -> Vec3<T> {
        p
    }

    #[inline]
    pub fn x_top(&self, p: Vec3<T>) -> Vec3<T> {
        self.axis.cross(p) * self.omega
    }

    /// `X⊥ + ξ X⊤`.
    #[inline]
    pub fn field(&self, p: Vec3<T>, xi: T) -> Vec3<T> {
        p + self.x_top(p) * xi
    }

    pub fn has_rotation(&self) -> bool {
        self.omega > T::zero()
    }
}

/// Scalars attached to a point: `φ`, `λ`, `Λ` and the pieces they are built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedScalars<T> {
    /// Conformal factor of `X⊥`.
    pub phi: T,
    /// Leaf label `|X⊥|²_g / φ²`.
    pub lambda: T,
    /// `(φ² − X⊥(φ)) / φ³`.
    pub big_lambda: T,
    /// Chart gradient of `φ`.
    pub grad_phi: Vec3<T>,
    /// `e^f`.
    pub ef: T,
}

/// All derived scalars at `p` without a domain check.
#[inline]
pub fn derived_unchecked<T: Real>(geom: &AmbientGeometry<T>, p: Vec3<T>) -> DerivedScalars<T> {
    let df = geom.log_factor_grad(p);
    let hf = geom.log_factor_hessian(p);
    let phi = T::one() + p.dot(df);
    let grad_phi = df + crate::scalar::mat3_vec(&hf, p);
    let ef = geom.log_factor(p).exp();
    let lambda = ef * ef * p.norm_sq() / (phi * phi);
    let xperp_phi = p.dot(grad_phi);
    let big_lambda = (phi * phi - xperp_phi) / (phi * phi * phi);
    DerivedScalars { phi, lambda, big_lambda, grad_phi, ef }
}

pub fn derived<T: Real>(geom: &AmbientGeometry<T>, p: Vec3<T>) -> Result<DerivedScalars<T>> {
    geom.check(p)?;
    Ok(derived_unchecked(geom, p))
}

/// `φ = 1 + X⊥(f)`.
pub fn eval_phi<T: Real>(geom: &AmbientGeometry<T>, _pair: &KillingPair<T>, p: Vec3<T>) -> Result<T> {
    geom.check(p)?;
    Ok(T::one() + p.dot(geom.log_factor_grad(p)))
}

/// `λ = |X⊥|²_g / φ²`.
pub fn eval_lambda<T: Real>(geom: &AmbientGeometry<T>, _pair: &KillingPair<T>, p: Vec3<T>) -> Result<T> {
    Ok(derived(geom, p)?.lambda)
}

/// `Λ = (φ² − X⊥(φ)) / φ³`.
pub fn eval_big_lambda<T: Real>(geom: &AmbientGeometry<T>, _pair: &KillingPair<T>, p: Vec3<T>) -> Result<T> {
    Ok(derived(geom, p)?.big_lambda)
}

/// `X⊥(φ)`, the derivative of `φ` along the dilation.
pub fn eval_xperp_phi<T: Real>(geom: &AmbientGeometry<T>, p: Vec3<T>) -> Result<T> {
    Ok(p.dot(derived(geom, p)?.grad_phi))
}

/// `X⊤(φ)`.
pub fn eval_xtop_phi<T: Real>(geom: &AmbientGeometry<T>, pair: &KillingPair<T>, p: Vec3<T>) -> Result<T> {
    Ok(pair.x_top(p).dot(derived(geom, p)?.grad_phi))
}

/// `|∇λ_FD − 2Λ X⊥♭| / (1 + |∇λ_FD|)`, with `X⊥♭ = e^{2f} x` in chart components.
pub fn eval_grad_lambda_check<T: Real>(geom: &AmbientGeometry<T>, pair: &KillingPair<T>, p: Vec3<T>) -> Result<T> {
    let h = geom.stencil(p)?;
    let grad = gradient_fd(&|q| derived_unchecked(geom, q).lambda, p, h);
    let d = derived_unchecked(geom, p);
    let flat = pair.x_perp(p) * (d.ef * d.ef);
    let expected = flat * (lit::<T>(2.0) * d.big_lambda);
    Ok((grad - expected).norm() / (T::one() + grad.norm()))
}

/// Lie derivative `(L_X g)_ij = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k` with
/// central differences for both the metric and the field.
pub fn lie_derivative_fd<T, F>(geom: &AmbientGeometry<T>, field: F, p: Vec3<T>) -> Result<Mat3<T>>
where
    T: Real,
    F: Fn(Vec3<T>) -> Vec3<T>,
{
    let h = geom.stencil(p)?;
    let two: T = lit(2.0);
    let g = geom.metric_at(p)?;
    let x = field(p);
    // dg[k] = ∂_k g, dx[i][k] = ∂_i X^k
    let mut dg = [mat3_zero::<T>(); 3];
    let mut dx = mat3_zero::<T>();
    for k in 0..3 {
        let e = Vec3::axis(k) * h;
        let gp = geom.metric_at(p + e)?;
        let gm = geom.metric_at(p - e)?;
        for i in 0..3 {
            for j in 0..3 {
                dg[k][i][j] = (gp[i][j] - gm[i][j]) / (two * h);
            }
        }
        let xd = (field(p + e) - field(p - e)) / (two * h);
        for c in 0..3 {
            dx[k][c] = xd[c];
        }
    }
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc += x[k] * dg[k][i][j] + g[k][j] * dx[i][k] + g[i][k] * dx[j][k];
            }
            out[i][j] = acc;
        }
    }
    Ok(out)
}

/// The cutoff `Ξ(s) = exp(−s² / (1 − s²))` on `[0, 1)`, zero beyond.
pub fn xi<T: Real>(s: T) -> T {
    let s = s.max(T::zero());
    if s >= T::one() {
        return T::zero();
    }
    let s2 = s * s;
    (-s2 / (T::one() - s2)).exp()
}

pub fn xi_prime<T: Real>(s: T) -> T {
    if s <= T::zero() || s >= T::one() {
        return T::zero();
    }
    let d = T::one() - s * s;
    xi(s) * (lit::<T>(-2.0) * s / (d * d))
}

/// Number of samples behind [`xi_sup_derivative`].
pub const XI_SUP_SAMPLES: usize = 100_000;

/// `max |Ξ′|` over `XI_SUP_SAMPLES` equispaced points of `[0, 1]`, computed
/// once in double precision.
pub fn xi_sup_derivative<T: Real>() -> T {
    static SUP: OnceLock<f64> = OnceLock::new();
    let sup = *SUP.get_or_init(|| {
        (0..XI_SUP_SAMPLES).map(|k| xi_prime(k as f64 / (XI_SUP_SAMPLES - 1) as f64).abs()).fold(0.0, f64::max)
    });
    lit(sup)
}

/// Time dependence of the rotational weight `Ξ(t / T0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule<T> {
    /// Horizon after which the rotation is switched off.
    pub t0: T,
    /// Safety margin used when `t0` was estimated.
    pub margin: T,
    /// When false the weight is identically zero.
    pub enabled: bool,
    /// Overrides the cutoff with a constant weight.
    pub frozen: Option<T>,
}

impl<T: Real> Schedule<T> {
    pub fn new(t0: T, margin: T) -> Result<Self> {
        if !(t0 > T::zero()) || !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("T0 must be positive, got {t0}")));
        }
        Ok(Schedule { t0, margin, enabled: true, frozen: None })
    }

    /// `Ξ ≡ 0`: the flow driven by `X⊥` alone.
    pub fn disabled() -> Self {
        Schedule { t0: T::one(), margin: lit(0.1), enabled: false, frozen: None }
    }

    /// `Ξ ≡ w` for all times.
    pub fn frozen(w: T) -> Self {
        Schedule { t0: T::one(), margin: lit(0.1), enabled: true, frozen: Some(w) }
    }

    /// First time from which the weight is identically zero, if any.
    pub fn switch_off_time(&self) -> Option<T> {
        match (self.enabled, self.frozen) {
            (false, _) => Some(T::zero()),
            (true, Some(w)) if w == T::zero() => Some(T::zero()),
            (true, Some(_)) => None,
            (true, None) => Some(self.t0),
        }
    }

    pub fn weight(&self, t: T) -> T {
        if let Some(w) = self.frozen {
            w
        } else if self.enabled {
            xi(t / self.t0)
        } else {
            T::zero()
        }
    }

    /// `d/dt Ξ(t/T0)`.
    pub fn weight_rate(&self, t: T) -> T {
        if self.frozen.is_some() {
            T::zero()
        } else if self.enabled {
            xi_prime(t / self.t0) / self.t0
        } else {
            T::zero()
        }
    }
}

/// A band `[λ_min, λ_max]` of leaves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell<T> {
    pub lambda_min: T,
    pub lambda_max: T,
}

impl<T: Real> Shell<T> {
    pub fn new(lambda_min: T, lambda_max: T) -> Result<Self> {
        if !(lambda_min > T::zero() && lambda_max >= lambda_min) {
            return Err(Error::InvalidParameter(format!("bad shell [{lambda_min}, {lambda_max}]")));
        }
        Ok(Shell { lambda_min, lambda_max })
    }

    /// The band between the coordinate spheres of radii `r_min < r_max`,
    /// measured along the third axis.
    pub fn from_radii(geom: &AmbientGeometry<T>, r_min: T, r_max: T) -> Result<Self> {
        let e = Vec3::axis(2);
        let a = derived(geom, e * r_min)?.lambda;
        let b = derived(geom, e * r_max)?.lambda;
        Self::new(a.min(b), a.max(b))
    }

    /// Widens the band by `fraction` of its endpoints, clamped to the leaves
    /// that fit in the domain.
    pub fn widened(&self, geom: &AmbientGeometry<T>, fraction: T) -> Self {
        let mut lo = self.lambda_min * (T::one() - fraction);
        let mut hi = self.lambda_max * (T::one() + fraction);
        if let Some(outer) = geom.outer_radius() {
            let e = Vec3::axis(2);
            let cap = derived_unchecked(geom, e * (outer * lit(0.98))).lambda;
            hi = hi.min(cap.max(self.lambda_max));
        }
        lo = lo.max(self.lambda_min * lit(0.5));
        Shell { lambda_min: lo, lambda_max: hi }
    }

    pub fn level(&self, k: usize, levels: usize) -> T {
        if levels <= 1 {
            return (self.lambda_min + self.lambda_max) / lit(2.0);
        }
        self.lambda_min + (self.lambda_max - self.lambda_min) * count::<T>(k) / count::<T>(levels - 1)
    }
}

/// Chart radius along the unit direction `dir` at which `λ` equals `lambda`.
/// `λ` increases along rays wherever `Λ > 0`; bisection over the domain.
pub fn radius_for_lambda<T: Real>(geom: &AmbientGeometry<T>, dir: Vec3<T>, lambda: T) -> Result<T> {
    let outer = geom.outer_radius();
    let mut lo = T::zero();
    let mut hi = match outer {
        Some(r) => r,
        None => {
            let mut hi = T::one();
            while derived_unchecked(geom, dir * hi).lambda < lambda {
                hi = hi * lit(2.0);
                if hi > lit(1e12) {
                    return Err(Error::InvalidParameter(format!("no leaf with λ = {lambda}")));
                }
            }
            hi
        }
    };
    if outer.is_some() {
        let near = derived_unchecked(geom, dir * (hi * (T::one() - lit(1e-12)))).lambda;
        if !(near > lambda) {
            return Err(Error::InvalidParameter(format!("no leaf with λ = {lambda} inside the domain")));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if derived_unchecked(geom, dir * mid).lambda < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / lit(2.0))
}

/// Unit directions from a Fibonacci lattice under a random rotation drawn
/// from `rng`.
pub fn sphere_directions<T: Real, R: Rng>(n: usize, rng: &mut R) -> Vec<Vec3<T>> {
    // uniform random rotation from a unit quaternion
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    let rot = [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ];
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let zc = 1.0 - (2 * k + 1) as f64 / n as f64;
            let rho = (1.0 - zc * zc).max(0.0).sqrt();
            let th = golden * k as f64;
            let v = [rho * th.cos(), rho * th.sin(), zc];
            let r = [0, 1, 2].map(|i| rot[i][0] * v[0] + rot[i][1] * v[1] + rot[i][2] * v[2]);
            Vec3::from_f64(r)
        })
        .collect()
}

/// Sampling density for [`estimate_t0`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShellSampling {
    pub spheres: usize,
    pub points_per_sphere: usize,
    pub seed: u64,
}

impl Default for ShellSampling {
    fn default() -> Self {
        ShellSampling { spheres: 32, points_per_sphere: 1000, seed: 0x5eed }
    }
}

/// Constants entering the choice of `T0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleBounds<T> {
    /// Minimum of `Λφ³ − Ξ X⊤(φ)` over the shell and `Ξ ∈ [0, 1]`.
    pub c: T,
    /// Maximum of `|X⊤|_g` over the shell.
    pub m: T,
}

pub fn schedule_bounds<T: Real>(
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    shell: &Shell<T>,
    sampling: ShellSampling,
) -> Result<ScheduleBounds<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut c = T::infinity();
    let mut m = T::zero();
    for k in 0..sampling.spheres {
        let level = shell.level(k, sampling.spheres);
        for dir in sphere_directions::<T, _>(sampling.points_per_sphere, &mut rng) {
            let r = radius_for_lambda(geom, dir, level)?;
            let p = dir * r;
            let d = derived(geom, p)?;
            let base = d.big_lambda * d.phi * d.phi * d.phi;
            let xt = pair.x_top(p);
            // linear in Ξ, so the endpoints bound the minimum
            c = c.min(base).min(base - xt.dot(d.grad_phi));
            m = m.max(d.ef * xt.norm());
        }
    }
    Ok(ScheduleBounds { c, m })
}

/// Horizon `T0 = sup|Ξ′| · M / (n c (1 − margin))`, which makes
/// `|Ξ′(t/T0)| |X⊤|_g / T0 ≤ n c (1 − margin)` on the shell.
pub fn estimate_t0<T: Real>(
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    shell: &Shell<T>,
    n: usize,
    margin: T,
    sampling: ShellSampling,
) -> Result<T> {
    if !(margin > T::zero() && margin < T::one()) {
        return Err(Error::InvalidParameter(format!("schedule margin must lie in (0,1), got {margin}")));
    }
    if !pair.has_rotation() {
        return Ok(T::one());
    }
    let b = schedule_bounds(geom, pair, shell, sampling)?;
    if !(b.c > T::zero()) {
        return Err(Error::ScheduleInfeasible { margin: b.c.to_f64().unwrap_or(f64::NAN) });
    }
    if b.m == T::zero() {
        return Ok(T::one());
    }
    Ok(xi_sup_derivative::<T>() * b.m / (count::<T>(n) * b.c * (T::one() - margin)))
}

/// One line of an [`AssumptionReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionResult {
    pub label: &'static str,
    pub description: &'static str,
    pub residual: f64,
    pub worst_point: [f64; 3],
    pub tolerance: f64,
    /// Positivity conditions report `−min` as residual and pass only when it
    /// is strictly below the (zero) tolerance.
    pub strict: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub conditions: Vec<ConditionResult>,
    pub samples: usize,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn get(&self, label: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.label == label)
    }

    pub fn table(&self) -> String {
        let mut out =
            format!("{:<6} {:<44} {:>14} {:>10}  {:<4}  worst point\n", "cond", "check", "residual", "tol", "");
        for c in &self.conditions {
            out.push_str(&format!(
                "{:<6} {:<44} {:>14.6e} {:>10.1e}  {:<4}  ({:.4}, {:.4}, {:.4})\n",
                c.label,
                c.description,
                c.residual,
                c.tolerance,
                if c.pass { "PASS" } else { "FAIL" },
                c.worst_point[0],
                c.worst_point[1],
                c.worst_point[2]
            ));
        }
        out
    }
}

struct Tracker {
    residual: f64,
    point: [f64; 3],
}

impl Tracker {
    fn new() -> Self {
        Tracker { residual: f64::NEG_INFINITY, point: [f64::NAN; 3] }
    }

    fn push<T: Real>(&mut self, value: T, p: Vec3<T>) {
        let v = value.to_f64().unwrap_or(f64::NAN);
        if v > self.residual || v.is_nan() {
            self.residual = if v.is_nan() { f64::INFINITY } else { v };
            self.point = p.to_f64();
        }
    }
}

/// Verifier settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifySettings {
    pub samples: usize,
    pub spheres: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { samples: 500, spheres: 10, tol: 1e-5, seed: 0x5eed }
    }
}

/// Checks the ten structural assumptions at points sampled on coordinate
/// spheres spanning `shell`:
///
/// * (i) `X` conformal, `L_X g = 2φ g`
/// * (ii) `φ > 0` and `|X⊥| > 0`
/// * (iii) leaves strictly starshaped w.r.t. `X` (for `Ξ ∈ {0, 1}`)
/// * (iv) `λ` constant on leaves
/// * (v) `Λ > 0`
/// * (vi) `Λφ³ − X⊤(φ) > 0`
/// * (vii) `X⊤` Killing
/// * (viii) `(X⊤)♭ ∧ d(X⊤)♭ = 0`
/// * (ix), (x) `X⊥` and `X⊤` directions of least Ricci curvature
pub fn verify_assumptions<T: Real>(
    geom: &AmbientGeometry<T>,
    pair: &KillingPair<T>,
    shell: &Shell<T>,
    settings: VerifySettings,
) -> Result<AssumptionReport> {
    let spheres = settings.spheres.max(1);
    let per_sphere = (settings.samples / spheres).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let e3 = Vec3::axis(2);
    let r_lo = radius_for_lambda(geom, e3, shell.lambda_min)?;
    let r_hi = radius_for_lambda(geom, e3, shell.lambda_max)?;

    let mut conf = Tracker::new();
    let mut pos = Tracker::new();
    let mut star = Tracker::new();
    let mut leaf = Tracker::new();
    let mut big_l = Tracker::new();
    let mut sched = Tracker::new();
    let mut killing = Tracker::new();
    let mut integ = Tracker::new();
    let mut ric_perp = Tracker::new();
    let mut ric_top = Tracker::new();
    let tiny: T = lit(1e-12);

    for k in 0..spheres {
        let r = if spheres == 1 {
            (r_lo + r_hi) / lit(2.0)
        } else {
            r_lo + (r_hi - r_lo) * count::<T>(k) / count::<T>(spheres - 1)
        };
        let dirs = sphere_directions::<T, _>(per_sphere, &mut rng);
        let mut lambdas = Vec::with_capacity(dirs.len());
        for dir in &dirs {
            let p = *dir * r;
            geom.stencil(p)?;
            let d = derived_unchecked(geom, p);
            let g = geom.metric_at(p)?;
            let gscale = T::one() + mat3_max_abs(&g);
            lambdas.push(d.lambda);

            // (i)
            let lx = lie_derivative_fd(geom, |q| pair.field(q, T::one()), p)?;
            let mut worst = T::zero();
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max((lx[i][j] - lit::<T>(2.0) * d.phi * g[i][j]).abs());
                }
            }
            conf.push(worst / gscale, p);

            // (ii)
            let xperp_norm = d.ef * p.norm();
            pos.push(-(d.phi.min(xperp_norm)), p);

            // (iii): the leaf normal is X⊥ / |X⊥|_g
            let xt = pair.x_top(p);
            let u_plain = xperp_norm;
            let u_rot = (d.ef * d.ef * (p + xt).dot(p)) / xperp_norm;
            star.push(-(u_plain.min(u_rot)), p);

            // (v), (vi)
            big_l.push(-d.big_lambda, p);
            sched.push(-(d.big_lambda * d.phi * d.phi * d.phi - xt.dot(d.grad_phi)), p);

            // (vii)
            let lt = lie_derivative_fd(geom, |q| pair.x_top(q), p)?;
            killing.push(mat3_max_abs(&lt) / gscale, p);

            // (viii): w = e^{2f} X⊤ are the chart components of (X⊤)♭
            let h = geom.fd_step(p);
            let flat = |q: Vec3<T>| pair.x_top(q) * (lit::<T>(2.0) * geom.log_factor(q)).exp();
            let w = flat(p);
            let mut jac = mat3_zero::<T>();
            for a in 0..3 {
                let e = Vec3::axis(a) * h;
                let dw = (flat(p + e) - flat(p - e)) / (lit::<T>(2.0) * h);
                for c in 0..3 {
                    jac[c][a] = dw[c];
                }
            }
            let curl = Vec3::new(jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1]);
            integ.push(w.dot(curl).abs() / (T::one() + w.norm() * curl.norm()), p);

            // (ix), (x): eigenvalues of Ric relative to g
            let ric = geom.ricci_at(p)?;
            let einv = T::one() / (d.ef * d.ef);
            let mut rel = ric;
            for row in rel.iter_mut() {
                for v in row.iter_mut() {
                    *v = *v * einv;
                }
            }
            let least = sym3_eigenvalues(&rel)[0];
            let rscale = T::one() + mat3_max_abs(&rel);
            let ric_dir = |v: Vec3<T>| -> T {
                let n = v / v.norm();
                crate::scalar::bilinear(&rel, n, n)
            };
            ric_perp.push((ric_dir(p) - least) / rscale, p);
            if xt.norm() > tiny * p.norm() {
                ric_top.push((ric_dir(xt) - least) / rscale, p);
            }
        }
        // (iv)
        let nl = count::<T>(lambdas.len());
        let mean = lambdas.iter().fold(T::zero(), |a, &b| a + b) / nl;
        let var = lambdas.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / nl;
        leaf.push(var.sqrt() / mean, dirs[0] * r);
    }
    if ric_top.residual == f64::NEG_INFINITY {
        ric_top.residual = 0.0;
    }

    let tol = settings.tol;
    let close = |label, description, t: Tracker| {
        let pass = t.residual <= tol;
        ConditionResult {
            label,
            description,
            residual: t.residual,
            worst_point: t.point,
            tolerance: tol,
            strict: false,
            pass,
        }
    };
    let positive = |label, description, t: Tracker| ConditionResult {
        label,
        description,
        residual: t.residual,
        worst_point: t.point,
        tolerance: 0.0,
        strict: true,
        pass: t.residual < 0.0,
    };
    Ok(AssumptionReport {
        conditions: vec![
            close("i", "X conformal: |L_X g - 2 phi g| / (1+|g|)", conf),
            positive("ii", "phi > 0 and |X_perp| > 0: -min", pos),
            positive("iii", "leaves starshaped w.r.t. X: -min u", star),
            close("iv", "lambda constant on leaves: std/mean", leaf),
            positive("v", "Lambda > 0: -min", big_l),
            positive("vi", "Lambda phi^3 - X_top(phi) > 0: -min", sched),
            close("vii", "X_top Killing: |L_X_top g| / (1+|g|)", killing),
            close("viii", "X_top integrable: |w.curl w| / (1+|w||curl w|)", integ),
            close("ix", "X_perp least Ricci direction", ric_perp),
            close("x", "X_top least Ricci direction", ric_top),
        ],
        samples: spheres * per_sphere,
    })
}
