//! Scalar abstraction and the small fixed-size linear algebra used throughout
//! the crate.
//!
//! Everything geometric is generic over [`Real`], which is satisfied by `f32`
//! and `f64`. The tolerances baked into tests and acceptance checks assume
//! `f64`; `f32` compiles and runs but will not meet them.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline(always)]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// A 3-vector in chart coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    /// Unit vector along coordinate axis `i`.
    pub fn axis(i: usize) -> Self {
        let mut v = Self::zero();
        v[i] = T::one();
        v
    }

    pub fn from_f64(v: [f64; 3]) -> Self {
        Vec3::new(lit(v[0]), lit(v[1]), lit(v[2]))
    }

    pub fn to_f64(self) -> [f64; 3] {
        [self.x.to_f64().unwrap_or(f64::NAN), self.y.to_f64().unwrap_or(f64::NAN), self.z.to_f64().unwrap_or(f64::NAN)]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    /// Returns the unit vector, or `None` for a (numerically) zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::min_positive_value() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Component of `self` orthogonal to the unit vector `n`.
    #[inline]
    pub fn reject(self, n: Self) -> Self {
        self - n * self.dot(n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Some orthonormal pair completing `n` (assumed unit) to a right-handed frame.
    pub fn tangent_frame(self) -> (Self, Self) {
        let helper = if self.x.abs() < lit(0.9) { Vec3::axis(0) } else { Vec3::axis(1) };
        let e1 = helper.reject(self).normalized().expect("helper not parallel to normal");
        let e2 = self.cross(e1);
        (e1, e2)
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3x3 matrix.
pub type Mat3<T> = [[T; 3]; 3];

pub fn mat3_zero<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let mut m = mat3_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn mat3_scale<T: Real>(m: &Mat3<T>, s: T) -> Mat3<T> {
    let mut out = *m;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v = *v * s;
        }
    }
    out
}

pub fn mat3_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

/// `a^T M b`.
pub fn bilinear<T: Real>(m: &Mat3<T>, a: Vec3<T>, b: Vec3<T>) -> T {
    a.dot(mat3_vec(m, b))
}

/// Largest absolute entry.
pub fn mat3_max_abs<T: Real>(m: &Mat3<T>) -> T {
    m.iter().flatten().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order (cyclic Jacobi).
pub fn sym3_eigenvalues<T: Real>(m: &Mat3<T>) -> [T; 3] {
    let mut a = *m;
    for _sweep in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off <= T::epsilon() * mat3_max_abs(&a) || off == T::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == T::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (lit::<T>(2.0) * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Eigenvalues of a real 2x2 matrix known to have real spectrum, ascending.
pub fn eig2_real<T: Real>(m: [[T; 2]; 2]) -> [T; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = tr / lit(2.0);
    let disc = (half * half - det).max(T::zero()).sqrt();
    [half - disc, half + disc]
}

/// Largest number of unknowns in a [`NormalEquations`] system.
pub const MAX_UNKNOWNS: usize = 14;

/// Normal equations `AᵀA x = Aᵀb` of a small least-squares fit, accumulated
/// row by row.
#[derive(Clone, Copy, Debug)]
pub struct NormalEquations<T> {
    n: usize,
    ata: [[T; MAX_UNKNOWNS]; MAX_UNKNOWNS],
    atb: [T; MAX_UNKNOWNS],
}

impl<T: Real> NormalEquations<T> {
    /// # Panics
    /// If `n` exceeds [`MAX_UNKNOWNS`].
    pub fn new(n: usize) -> Self {
        assert!(n <= MAX_UNKNOWNS, "at most {MAX_UNKNOWNS} unknowns");
        NormalEquations { n, ata: [[T::zero(); MAX_UNKNOWNS]; MAX_UNKNOWNS], atb: [T::zero(); MAX_UNKNOWNS] }
    }

    pub fn add(&mut self, row: &[T], b: T) {
        let row = &row[..self.n];
        for (i, (&ri, ata)) in row.iter().zip(&mut self.ata).enumerate() {
            self.atb[i] += ri * b;
            for (a, &rj) in ata[i..self.n].iter_mut().zip(&row[i..]) {
                *a += ri * rj;
            }
        }
    }

    /// LU factors of `AᵀA`, or `None` when it is singular.
    pub fn factor(&self) -> Option<Lu<T>> {
        let mut a = self.ata;
        for i in 0..self.n {
            for j in 0..i {
                a[i][j] = a[j][i];
            }
        }
        Lu::new(a, self.n)
    }

    pub fn solve(&self) -> Option<[T; MAX_UNKNOWNS]> {
        Some(self.factor()?.solve(self.atb))
    }
}

/// LU factorization with partial pivoting of a matrix of size at most
/// [`MAX_UNKNOWNS`].
#[derive(Clone, Copy, Debug)]
pub struct Lu<T> {
    n: usize,
    a: [[T; MAX_UNKNOWNS]; MAX_UNKNOWNS],
    perm: [usize; MAX_UNKNOWNS],
}

impl<T: Real> Lu<T> {
    pub fn new(mut a: [[T; MAX_UNKNOWNS]; MAX_UNKNOWNS], n: usize) -> Option<Self> {
        let scale = a[..n].iter().flat_map(|r| &r[..n]).fold(T::zero(), |acc, v| acc.max(v.abs()));
        if !(scale > T::zero()) {
            return None;
        }
        let mut perm = [0; MAX_UNKNOWNS];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        for col in 0..n {
            let mut pivot = col;
            for row in col + 1..n {
                if a[row][col].abs() > a[pivot][col].abs() {
                    pivot = row;
                }
            }
            if !(a[pivot][col].abs() > scale * lit(1e-14)) {
                return None;
            }
            a.swap(col, pivot);
            perm.swap(col, pivot);
            let (head, tail) = a.split_at_mut(col + 1);
            let pivot_row = &head[col];
            for row in &mut tail[..n - col - 1] {
                let factor = row[col] / pivot_row[col];
                row[col] = factor;
                for (x, &p) in row[col + 1..n].iter_mut().zip(&pivot_row[col + 1..n]) {
                    *x -= factor * p;
                }
            }
        }
        Some(Lu { n, a, perm })
    }

    pub fn solve(&self, b: [T; MAX_UNKNOWNS]) -> [T; MAX_UNKNOWNS] {
        let n = self.n;
        let mut x = [T::zero(); MAX_UNKNOWNS];
        for i in 0..n {
            let dot = self.a[i][..i].iter().zip(&x[..i]).fold(T::zero(), |acc, (&l, &y)| acc + l * y);
            x[i] = b[self.perm[i]] - dot;
        }
        for i in (0..n).rev() {
            let dot = self.a[i][i + 1..n].iter().zip(&x[i + 1..n]).fold(T::zero(), |acc, (&u, &y)| acc + u * y);
            x[i] = (x[i] - dot) / self.a[i][i];
        }
        x
    }
}

/// Solves `min |A x − b|` through the normal equations; `rows` holds the rows
/// of `A`. Returns `None` when the normal matrix is singular.
pub fn least_squares<T: Real>(rows: &[Vec<T>], rhs: &[T]) -> Option<Vec<T>> {
    let n = rows.first()?.len();
    let mut ne = NormalEquations::new(n);
    for (row, &b) in rows.iter().zip(rhs) {
        ne.add(row, b);
    }
    ne.solve().map(|x| x[..n].to_vec())
}

/// Formats a value with nine significant digits, plain decimal notation where
/// the magnitude allows it.
pub fn sig9<T: Real>(value: T) -> String {
    let x = value.to_f64().unwrap_or(f64::NAN);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jacobi_matches_diagonal_and_known_spectrum() {
        let m: Mat3<f64> = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, -1.0]];
        let ev = sym3_eigenvalues(&m);
        assert!((ev[0] + 1.0).abs() < 1e-14);
        assert!((ev[1] - 1.0).abs() < 1e-14);
        assert!((ev[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_recovers_exact_quadratic() {
        let pts = [(0.1, 0.2), (-0.3, 0.1), (0.2, -0.2), (0.05, 0.3), (-0.1, -0.25), (0.3, 0.0)];
        let f = |a: f64, b: f64| 0.5 * a * a - 0.25 * a * b + 2.0 * b * b + 0.1 * a - 0.3 * b;
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a * a, a * b, b * b, a, b]).collect();
        let rhs: Vec<f64> = pts.iter().map(|&(a, b)| f(a, b)).collect();
        let c = least_squares(&rows, &rhs).unwrap();
        for (got, want) in c.iter().zip([0.5, -0.25, 2.0, 0.1, -0.3]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sig9_formats() {
        assert_eq!(sig9(1.0f64), "1.00000000");
        assert_eq!(sig9(0.0f64), "0");
        assert_eq!(sig9(12.5f64), "12.5000000");
        assert_eq!(sig9(1.5e-7f64), "1.50000000e-7");
    }

    proptest! {
        #[test]
        fn sig9_keeps_nine_significant_digits(x in -1e12f64..1e12) {
            prop_assume!(x.abs() > 1e-12);
            let back: f64 = sig9(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 5e-9 * x.abs(), "{x} -> {}", sig9(x));
        }

        #[test]
        fn normal_equations_recover_exact_quadratics(c in proptest::array::uniform5(-3.0f64..3.0)) {
            let pts = [(0.1, 0.2), (-0.3, 0.1), (0.2, -0.2), (0.05, 0.3), (-0.1, -0.25), (0.3, 0.0), (-0.2, -0.1)];
            let mut ne = NormalEquations::new(5);
            for &(a, b) in &pts {
                let row = [a * a, a * b, b * b, a, b];
                let value: f64 = row.iter().zip(&c).map(|(r, k)| r * k).sum();
                ne.add(&row, value);
            }
            let got = ne.solve().unwrap();
            for k in 0..5 {
                prop_assert!((got[k] - c[k]).abs() < 1e-9, "{:?} vs {:?}", &got[..5], c);
            }
        }
    }

    #[test]
    fn tangent_frame_is_orthonormal() {
        for n in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.6, 0.8), Vec3::new(0.3, -0.4, 0.866)] {
            let n = n.normalized().unwrap();
            let (a, b) = n.tangent_frame();
            assert!(a.dot(n).abs() < 1e-14 && b.dot(n).abs() < 1e-14 && a.dot(b).abs() < 1e-14);
            assert!((a.norm() - 1.0).abs() < 1e-14 && (b.norm() - 1.0).abs() < 1e-14);
        }
    }
}
