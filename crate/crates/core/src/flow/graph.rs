use crate::ambient::AmbientGeometry;
use crate::ckv::{derived_unchecked, radius_for_lambda, Shell};
use crate::diagnostics::{monitor, FlowTrace, TraceRow};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real, Vec3};
use crate::surface::{icosphere, mesh_geometry_with, Detail, JetStencil, TriSurface};

use super::control::GraphOperator;
use super::lagrangian::{FlowProblem, RunOutcome, RunStatus};

/// Per-node divergence, gradient of `λ` and gradient of `ρ`.
type NodeTerms<T> = (Vec<T>, Vec<Vec3<T>>, Vec<Vec3<T>>);

/// Coefficients of the ambient metric in leaf coordinates `(direction, λ)`:
/// `g = G σ + H_coef dλ²` with `σ` the round metric on the unit sphere.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LeafCoefficients<T> {
    /// `G = e^{2f} ρ²`.
    pub g: T,
    /// `H_coef = e^{2f} (dρ/dλ)²`.
    pub h: T,
}

/// Chart radius of the leaf `λ` along `dir` and its derivative `dρ/dλ`.
/// Newton from `guess`, bisection if that fails.
pub fn leaf_radius<T: Real>(geom: &AmbientGeometry<T>, dir: Vec3<T>, lambda: T, guess: T) -> Result<(T, T)> {
    let two: T = lit(2.0);
    let slope = |r: T| {
        let d = derived_unchecked(geom, dir * r);
        (d.lambda, r / (two * d.big_lambda * d.ef * d.ef * r * r))
    };
    let tol = T::epsilon() * lit(64.0);
    let mut r = guess;
    for _ in 0..30 {
        if !(r > T::zero()) || geom.check(dir * r).is_err() {
            break;
        }
        let (l, dr) = slope(r);
        let next = r - (l - lambda) * dr;
        if (next - r).abs() <= tol * r {
            let (_, dr) = slope(next);
            return Ok((next, dr));
        }
        r = next;
    }
    let r = radius_for_lambda(geom, dir, lambda)?;
    Ok((r, slope(r).1))
}

impl<T: Real> LeafCoefficients<T> {
    pub fn at(geom: &AmbientGeometry<T>, dir: Vec3<T>, rho: T, drho: T) -> Self {
        let e2f = (lit::<T>(2.0) * geom.log_factor(dir * rho)).exp();
        LeafCoefficients { g: e2f * rho * rho, h: e2f * drho * drho }
    }
}

/// Flux `A = √(G^{n−2} / (1 + (H/G)|p|²)) p` for a leaf gradient `p` given
/// in a `σ`-orthonormal frame.
pub fn graph_flux<T: Real>(coef: LeafCoefficients<T>, p: [T; 2], n: usize) -> [T; 2] {
    let s = flux_scale(coef, p, n);
    [s * p[0], s * p[1]]
}

fn flux_scale<T: Real>(coef: LeafCoefficients<T>, p: [T; 2], n: usize) -> T {
    let q = coef.h / coef.g * (p[0] * p[0] + p[1] * p[1]);
    (coef.g.powi(n as i32 - 2) / (T::one() + q)).sqrt()
}

/// `∂A^i/∂p_j`.
pub fn graph_flux_jacobian<T: Real>(coef: LeafCoefficients<T>, p: [T; 2], n: usize) -> [[T; 2]; 2] {
    let k = coef.h / coef.g;
    let q = k * (p[0] * p[0] + p[1] * p[1]);
    let s = coef.g.powi(n as i32 - 2).sqrt();
    let a = s / (T::one() + q).sqrt();
    let b = s * k / ((T::one() + q) * (T::one() + q).sqrt());
    let mut jac = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { a } else { T::zero() };
            jac[i][j] = delta - b * p[i] * p[j];
        }
    }
    jac
}

/// Eigenvalues of the flux Jacobian: along `p` and across it.
fn jacobian_branches<T: Real>(coef: LeafCoefficients<T>, grad: T, n: usize) -> (T, T) {
    let q = coef.h / coef.g * grad * grad;
    let s = coef.g.powi(n as i32 - 2).sqrt();
    (s / ((T::one() + q) * (T::one() + q).sqrt()), s / (T::one() + q).sqrt())
}

/// Extremes `(c₂, c₃)` of the flux Jacobian eigenvalues over the given
/// coefficients and all gradients with `|p| ≤ c1`.
pub fn ellipticity_from<T: Real>(
    coefs: impl IntoIterator<Item = LeafCoefficients<T>>,
    c1: T,
    n: usize,
) -> Result<(T, T)> {
    if !(c1 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("gradient bound must be >= 0, got {c1}")));
    }
    const STEPS: usize = 32;
    let mut c2 = T::infinity();
    let mut c3 = T::neg_infinity();
    for coef in coefs {
        for k in 0..=STEPS {
            let grad = c1 * count::<T>(k) / count::<T>(STEPS);
            let (along, across) = jacobian_branches(coef, grad, n);
            c2 = c2.min(along.min(across));
            c3 = c3.max(along.max(across));
        }
    }
    if !(c2 > T::zero()) {
        return Err(Error::EllipticityLost { c2: c2.to_f64().unwrap_or(f64::NAN) });
    }
    Ok((c2, c3))
}

/// Sample of leaf coefficients over a shell: icosphere directions at
/// `levels` equispaced values of `λ`.
pub fn shell_coefficients<T: Real>(
    geom: &AmbientGeometry<T>,
    shell: &Shell<T>,
    levels: usize,
) -> Result<Vec<LeafCoefficients<T>>> {
    let dirs = icosphere::<T>(2).vertices;
    let mut out = Vec::with_capacity(dirs.len() * levels);
    for k in 0..levels {
        let lambda = shell.level(k, levels);
        for &d in &dirs {
            let guess = radius_for_lambda(geom, d, lambda)?;
            let (rho, drho) = leaf_radius(geom, d, lambda, guess)?;
            geom.check(d * rho)?;
            out.push(LeafCoefficients::at(geom, d, rho, drho));
        }
    }
    Ok(out)
}

/// `(c₂, c₃)` over the shell for gradients bounded by `c1`.
pub fn ellipticity_bounds<T: Real>(geom: &AmbientGeometry<T>, shell: &Shell<T>, c1: T, n: usize) -> Result<(T, T)> {
    ellipticity_from(shell_coefficients(geom, shell, 9)?, c1, n)
}

/// Gradient bound implied by `u⊥ ≥ u_floor`:
/// `max √((G/H_coef)((|X⊥|_g / u_floor)² − 1))` over the sampled shell.
pub fn gradient_bound<T: Real>(geom: &AmbientGeometry<T>, shell: &Shell<T>, u_floor: T) -> Result<T> {
    if !(u_floor > T::zero()) {
        return Err(Error::InvalidParameter(format!("support floor must be positive, got {u_floor}")));
    }
    let mut c1 = T::zero();
    for coef in shell_coefficients(geom, shell, 9)? {
        // |X⊥|_g = e^f ρ = √G
        let ratio = coef.g / (u_floor * u_floor);
        c1 = c1.max((coef.g / coef.h * (ratio - T::one()).max(T::zero())).sqrt());
    }
    Ok(c1)
}

/// Barycentric dual areas of a flat triangle mesh.
pub fn dual_areas<T: Real>(mesh: &TriSurface<T>) -> Vec<T> {
    let third: T = lit(1.0 / 3.0);
    let mut out = vec![T::zero(); mesh.n_vertices()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area_flat(f) * third;
        for &i in face {
            out[i] += a;
        }
    }
    out
}

/// Rows of the consistent piecewise-linear mass matrix as `(column, value)`.
pub fn mass_matrix<T: Real>(mesh: &TriSurface<T>) -> Vec<Vec<(usize, T)>> {
    let twelfth: T = lit(1.0 / 12.0);
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); mesh.n_vertices()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area_flat(f) * twelfth;
        for &i in face {
            for &j in face {
                let v = if i == j { a + a } else { a };
                match rows[i].iter_mut().find(|(c, _)| *c == j) {
                    Some(entry) => entry.1 += v,
                    None => rows[i].push((j, v)),
                }
            }
        }
    }
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
    }
    rows
}

/// Gradients of the three hat functions on face `f` of a flat mesh.
fn hat_gradients<T: Real>(mesh: &TriSurface<T>, f: usize) -> [Vec3<T>; 3] {
    let p = mesh.corners(f);
    let cross = mesh.face_cross(f);
    let scale = T::one() / cross.norm_sq();
    let mut out = [Vec3::zero(); 3];
    for k in 0..3 {
        let edge = p[(k + 2) % 3] - p[(k + 1) % 3];
        out[k] = cross.cross(edge) * scale;
    }
    out
}

/// Fixed data of the graph backend: the leaf mesh of unit directions, its
/// hat-function gradients and dual areas, and the gradient bound `c₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphProblem<T> {
    pub flow: FlowProblem<T>,
    pub leaf: TriSurface<T>,
    pub dual: Vec<T>,
    pub c1: T,
    hats: Vec<[Vec3<T>; 3]>,
    face_area: Vec<T>,
    stencils: Vec<JetStencil<T>>,
}

/// `λ` at every leaf node together with the chart data it induces.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphState<T> {
    pub t: T,
    pub step: usize,
    pub lambda: Vec<T>,
    pub rho: Vec<T>,
    pub coef: Vec<LeafCoefficients<T>>,
}

impl<T: Real> GraphState<T> {
    /// The surface `x = ρ(d) d` on the leaf connectivity.
    pub fn mesh(&self, problem: &GraphProblem<T>) -> Result<TriSurface<T>> {
        let v = problem.leaf.vertices.iter().zip(&self.rho).map(|(&d, &r)| d * r).collect();
        problem.leaf.with_vertices(v)
    }

    /// Largest node gradient `|∇̃λ|`.
    pub fn max_gradient(&self, problem: &GraphProblem<T>) -> T {
        problem.node_gradients(&self.lambda).iter().map(|g| g.norm()).fold(T::zero(), T::max)
    }
}

/// Right-hand side of the graph equation at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphRates<T> {
    /// `∂_t λ` at fixed direction.
    pub rate: Vec<T>,
    /// Largest `u √(1 + q) / G`, the diffusion coefficient in direction space.
    pub diffusion: T,
    /// Largest node gradient.
    pub max_gradient: T,
}

impl<T: Real> GraphProblem<T> {
    /// Leaf mesh at icosphere `level`; `c₁` from half the smallest `u⊥` of
    /// the starshaped `seed` over the shell it spans, widened by ten percent.
    pub fn new(flow: FlowProblem<T>, level: u32, seed: &TriSurface<T>) -> Result<Self> {
        let mut problem = Self::bare(flow, icosphere::<T>(level));
        let state = problem.state_from_mesh(seed)?;
        let mesh = state.mesh(&problem)?;
        let vg = mesh_geometry_with(
            &mesh,
            &problem.flow.geom,
            &problem.flow.pair,
            T::zero(),
            Detail::Speed,
            problem.flow.control.mean_curvature,
        )?;
        let min_perp = vg.iter().map(|v| v.u_perp).fold(T::infinity(), T::min);
        if !(min_perp > T::zero()) {
            return Err(Error::SeedInfeasible { min_u: min_perp.to_f64().unwrap_or(f64::NAN) });
        }
        let (lo, hi) =
            state.lambda.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        let shell = Shell::new(lo, hi)?.widened(&problem.flow.geom, lit(0.1));
        problem.c1 = gradient_bound(&problem.flow.geom, &shell, min_perp * lit(0.5))?;
        ellipticity_bounds(&problem.flow.geom, &shell, problem.c1, problem.flow.n)?;
        Ok(problem)
    }

    /// Problem without a gradient bound, which is then infinite.
    pub fn bare(flow: FlowProblem<T>, leaf: TriSurface<T>) -> Self {
        let hats = (0..leaf.faces.len()).map(|f| hat_gradients(&leaf, f)).collect();
        let face_area = (0..leaf.faces.len()).map(|f| leaf.face_area_flat(f)).collect();
        let dual = dual_areas(&leaf);
        let stencils = (0..leaf.n_vertices())
            .map(|i| JetStencil::new(&leaf, leaf.vertices[i], i).expect("icosphere two-rings are unisolvent"))
            .collect();
        GraphProblem { flow, leaf, dual, c1: T::infinity(), hats, face_area, stencils }
    }

    /// State at `t = 0` from node values of `λ`.
    pub fn state(&self, lambda: Vec<T>, t: T, step: usize, guess: Option<&[T]>) -> Result<GraphState<T>> {
        if lambda.len() != self.leaf.n_vertices() {
            return Err(Error::InvalidParameter("one λ value per leaf node expected".into()));
        }
        let geom = &self.flow.geom;
        let mut rho = Vec::with_capacity(lambda.len());
        let mut coef = Vec::with_capacity(lambda.len());
        for (i, (&d, &l)) in self.leaf.vertices.iter().zip(&lambda).enumerate() {
            if !l.is_finite() || !(l > T::zero()) {
                return Err(Error::MeshDegenerate(format!("invalid λ = {l} at node {i}")));
            }
            let start = match guess {
                Some(g) => g[i],
                None => radius_for_lambda(geom, d, l)?,
            };
            let (r, dr) = leaf_radius(geom, d, l, start)?;
            geom.check(d * r)?;
            rho.push(r);
            coef.push(LeafCoefficients::at(geom, d, r, dr));
        }
        Ok(GraphState { t, step, lambda, rho, coef })
    }

    /// Samples `λ` of a starshaped mesh along the leaf directions.
    pub fn state_from_mesh(&self, mesh: &TriSurface<T>) -> Result<GraphState<T>> {
        let lambda = sample_lambda(mesh, &self.flow.geom, &self.leaf.vertices)?;
        self.state(lambda, T::zero(), 0, None)
    }

    fn face_gradient(&self, values: &[T], f: usize) -> Vec3<T> {
        let face = self.leaf.faces[f];
        let h = &self.hats[f];
        h[0] * values[face[0]] + h[1] * values[face[1]] + h[2] * values[face[2]]
    }

    /// Area-weighted average of the face gradients around each node.
    pub fn node_gradients(&self, values: &[T]) -> Vec<Vec3<T>> {
        let mut out = vec![Vec3::zero(); self.leaf.n_vertices()];
        let mut w = vec![T::zero(); self.leaf.n_vertices()];
        for (f, face) in self.leaf.faces.iter().enumerate() {
            let g = self.face_gradient(values, f) * self.face_area[f];
            for &i in face {
                out[i] += g;
                w[i] += self.face_area[f];
            }
        }
        for ((g, &w), &d) in out.iter_mut().zip(&w).zip(&self.leaf.vertices) {
            *g = (*g / w).reject(d);
        }
        out
    }

    /// Divergence of `∇λ/√(1+q)` by the weak form over the lumped mass, with
    /// area-averaged nodal gradients of `λ` and `ρ`.
    fn finite_volume_terms(&self, state: &GraphState<T>) -> NodeTerms<T> {
        let third: T = lit(1.0 / 3.0);
        let mut div = vec![T::zero(); self.leaf.n_vertices()];
        for (f, face) in self.leaf.faces.iter().enumerate() {
            let p = self.face_gradient(&state.lambda, f);
            let g = (state.coef[face[0]].g + state.coef[face[1]].g + state.coef[face[2]].g) * third;
            let h = (state.coef[face[0]].h + state.coef[face[1]].h + state.coef[face[2]].h) * third;
            let a = p / (T::one() + h / g * p.norm_sq()).sqrt();
            for k in 0..3 {
                div[face[k]] -= self.face_area[f] * a.dot(self.hats[f][k]);
            }
        }
        for (d, &w) in div.iter_mut().zip(&self.dual) {
            *d = *d / w;
        }
        (div, self.node_gradients(&state.lambda), self.node_gradients(&state.rho))
    }

    /// The same divergence expanded at each node,
    /// `Δλ/√(1+q) − ½(1+q)^{−3/2} ∇q·∇λ` with `q = k|∇λ|²`, `k = H/G`, from
    /// local cubic fits of `λ`, `k` and `ρ`.
    fn collocation_terms(&self, state: &GraphState<T>) -> Result<NodeTerms<T>> {
        let n_nodes = self.leaf.n_vertices();
        let (half, two): (T, T) = (lit(0.5), lit(2.0));
        let k: Vec<T> = state.coef.iter().map(|c| c.h / c.g).collect();
        let mut div = Vec::with_capacity(n_nodes);
        let mut grad_lambda = Vec::with_capacity(n_nodes);
        let mut grad_rho = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let stencil = &self.stencils[i];
            let (jl, jk, jr) = (stencil.apply(&state.lambda), stencil.apply(&k), stencil.apply(&state.rho));
            let p = jl.grad;
            let p2 = p.norm_sq();
            let grad_q =
                jk.grad * p2 + (jl.e1 * jl.hessian_at(jl.e1, p) + jl.e2 * jl.hessian_at(jl.e2, p)) * (two * k[i]);
            let s = T::one() / (T::one() + k[i] * p2).sqrt();
            div.push(jl.laplacian() * s - half * s * s * s * grad_q.dot(p));
            grad_lambda.push(p);
            grad_rho.push(jr.grad);
        }
        Ok((div, grad_lambda, grad_rho))
    }

    /// Flat normals, support functions and the graph right-hand side.
    pub fn rates(&self, state: &GraphState<T>) -> Result<GraphRates<T>> {
        let flow = &self.flow;
        let (geom, pair, n) = (&flow.geom, &flow.pair, flow.n);
        let xi = flow.schedule.weight(state.t);
        let nn = count::<T>(n);
        let (two, four): (T, T) = (lit(2.0), lit(4.0));
        let n_nodes = self.leaf.n_vertices();

        let (div, grad_lambda, grad_rho) = match flow.control.graph_operator {
            GraphOperator::Collocation => self.collocation_terms(state)?,
            GraphOperator::FiniteVolume => self.finite_volume_terms(state),
        };
        let mut rate = Vec::with_capacity(n_nodes);
        let mut diffusion = T::zero();
        let mut max_gradient = T::zero();
        let h_rad: T = lit(1e-5);
        let lambda_phi2 = |q: Vec3<T>| {
            let d = derived_unchecked(geom, q);
            d.big_lambda * d.phi * d.phi
        };
        for i in 0..n_nodes {
            let d = self.leaf.vertices[i];
            let rho = state.rho[i];
            let x = d * rho;
            let coef = state.coef[i];
            let p = grad_lambda[i];
            max_gradient = max_gradient.max(p.norm());
            let q = coef.h / coef.g * p.norm_sq();
            let nb = (d - grad_rho[i] / rho)
                .normalized()
                .ok_or_else(|| Error::MeshDegenerate(format!("vanishing normal at node {i}")))?;
            let s = derived_unchecked(geom, x);
            let u_perp = s.ef * x.dot(nb);
            let u_top = s.ef * pair.x_top(x).dot(nb);
            let u = u_perp + xi * u_top;
            if !(u > T::zero()) {
                return Err(Error::StarshapeLost {
                    time: state.t.to_f64().unwrap_or(f64::NAN),
                    min_u: u.to_f64().unwrap_or(f64::NAN),
                });
            }
            let laplace = div[i] / (coef.g * (T::one() + q).sqrt());
            let xp2 = coef.g;
            let xperp_lphi2 =
                (lambda_phi2(x * (T::one() + h_rad)) - lambda_phi2(x * (T::one() - h_rad))) / (two * h_rad);
            let tangential_phi = x.dot(s.grad_phi) - x.dot(nb) * nb.dot(s.grad_phi);
            let source = -two * s.big_lambda * nn * s.phi * (xi * u_top)
                - u * two / (s.phi * s.phi * xp2) * xperp_lphi2 * (xp2 - u_perp * u_perp)
                + four * u * s.big_lambda / s.phi * tangential_phi;
            rate.push((T::one() + q) * (u * laplace + source));
            diffusion = diffusion.max(u * (T::one() + q).sqrt() / coef.g);
        }
        Ok(GraphRates { rate, diffusion, max_gradient })
    }

    /// `cfl · h_min² / max(1, max u√(1+q)/G)`, capped at `dt_max`.
    pub fn stable_dt(&self, rates: &GraphRates<T>) -> T {
        let h = self.leaf.min_edge();
        let c = &self.flow.control;
        (c.cfl * h * h / rates.diffusion.max(T::one())).min(c.dt_max)
    }

    fn check_gradient(&self, rates: &GraphRates<T>) -> Result<()> {
        if rates.max_gradient > self.c1 {
            return Err(Error::GradientBoundExceeded {
                gradient: rates.max_gradient.to_f64().unwrap_or(f64::NAN),
                bound: self.c1.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    fn heun(&self, state: &GraphState<T>, k1: &GraphRates<T>, dt: T) -> Result<GraphState<T>> {
        let pred: Vec<T> = state.lambda.iter().zip(&k1.rate).map(|(&l, &r)| l + r * dt).collect();
        let pred = self.state(pred, state.t + dt, state.step + 1, Some(&state.rho))?;
        let k2 = self.rates(&pred)?;
        let half: T = lit(0.5);
        let next: Vec<T> = state
            .lambda
            .iter()
            .zip(k1.rate.iter().zip(&k2.rate))
            .map(|(&l, (&a, &b))| l + (a + b) * half * dt)
            .collect();
        self.state(next, state.t + dt, state.step + 1, Some(&state.rho))
    }

    /// One Heun step of size `dt`.
    pub fn step_graph(&self, state: &GraphState<T>, dt: T) -> Result<GraphState<T>> {
        let k1 = self.rates(state)?;
        self.check_gradient(&k1)?;
        self.heun(state, &k1, dt)
    }

    /// Integrates until `t_end`, convergence or failure, recording the same
    /// monitors as the Lagrangian backend on the graph surface.
    pub fn run<F>(&self, seed: GraphState<T>, mut observe: F) -> RunOutcome<T, GraphState<T>>
    where
        F: FnMut(&GraphState<T>, &TraceRow<T>),
    {
        let flow = &self.flow;
        let mut state = seed;
        let mut trace = FlowTrace::default();
        let status = loop {
            let row = self.rates(&state).and_then(|k1| {
                self.check_gradient(&k1)?;
                let dt = self.stable_dt(&k1);
                let xi = flow.schedule.weight(state.t);
                let mesh = state.mesh(self)?;
                let vg =
                    mesh_geometry_with(&mesh, &flow.geom, &flow.pair, xi, Detail::Full, flow.control.mean_curvature)?;
                let row = monitor(&mesh, &vg, &flow.geom, flow.n, state.step, state.t, xi, dt)?;
                Ok((k1, row))
            });
            let (k1, row) = match row {
                Ok(v) => v,
                Err(e) => break RunStatus::Failed(e),
            };
            trace.push(row);
            observe(&state, &row);
            if flow.converged(&row) {
                break RunStatus::Converged;
            }
            if state.t >= flow.control.t_end || state.step >= flow.control.max_steps {
                break RunStatus::NotConverged;
            }
            match self.heun(&state, &k1, row.dt) {
                Ok(next) => state = next,
                Err(e) => break RunStatus::Failed(e),
            }
        };
        RunOutcome { trace, state, status }
    }

    /// Advances to exactly `t_target` with stable steps.
    pub fn advance_to(&self, mut state: GraphState<T>, t_target: T) -> Result<GraphState<T>> {
        while state.t < t_target {
            let k1 = self.rates(&state)?;
            self.check_gradient(&k1)?;
            let dt = self.stable_dt(&k1).min(t_target - state.t);
            state = self.heun(&state, &k1, dt)?;
        }
        Ok(state)
    }
}

/// Chart distance from the origin to `mesh` along the unit direction `dir`.
pub fn ray_radius<T: Real>(mesh: &TriSurface<T>, dir: Vec3<T>) -> Option<T> {
    let eps: T = lit(1e-12);
    let mut best: Option<T> = None;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.corners(f);
        let (e1, e2) = (b - a, c - a);
        let pv = dir.cross(e2);
        let det = e1.dot(pv);
        if det.abs() <= eps * e1.norm() * e2.norm() {
            continue;
        }
        let tv = -a;
        let u = tv.dot(pv) / det;
        if u < -eps || u > T::one() + eps {
            continue;
        }
        let qv = tv.cross(e1);
        let v = dir.dot(qv) / det;
        if v < -eps || u + v > T::one() + eps {
            continue;
        }
        let t = e2.dot(qv) / det;
        if t > T::zero() {
            best = Some(best.map_or(t, |b: T| b.min(t)));
        }
    }
    best
}

/// `λ` of `mesh` along each direction, by ray intersection.
pub fn sample_lambda<T: Real>(mesh: &TriSurface<T>, geom: &AmbientGeometry<T>, dirs: &[Vec3<T>]) -> Result<Vec<T>> {
    dirs.iter()
        .map(|&d| {
            let r = ray_radius(mesh, d)
                .ok_or_else(|| Error::MeshDegenerate("ray from the origin misses the surface".into()))?;
            geom.check(d * r)?;
            Ok(derived_unchecked(geom, d * r).lambda)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckv::{KillingPair, Schedule};
    use crate::flow::StepControl;
    use crate::surface::sphere;
    use proptest::prelude::*;

    const UNIT: LeafCoefficients<f64> = LeafCoefficients { g: 1.0, h: 1.0 };

    fn sym2_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
        let mean = 0.5 * (m[0][0] + m[1][1]);
        let r = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).sqrt();
        (mean - r, mean + r)
    }

    #[test]
    fn flux_vanishes_at_zero_gradient() {
        let coef = LeafCoefficients { g: 2.5, h: 0.7 };
        assert_eq!(graph_flux(coef, [0.0, 0.0], 2), [0.0, 0.0]);
        assert_eq!(graph_flux_jacobian(coef, [0.0, 0.0], 2), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn unit_coefficient_branches() {
        let a = graph_flux(UNIT, [1.0, 0.0], 2);
        assert!((a[0] - 0.5f64.sqrt()).abs() < 1e-15 && a[1] == 0.0);
        let (lo, hi) = sym2_eigenvalues(graph_flux_jacobian(UNIT, [1.0, 0.0], 2));
        assert!((lo - 2f64.powf(-1.5)).abs() < 1e-15);
        assert!((hi - 0.5f64.sqrt()).abs() < 1e-15);
        let (c2, c3) = ellipticity_from([UNIT], 1.0, 2).unwrap();
        assert!((c2 - 2f64.powf(-1.5)).abs() < 1e-12 && (c3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_rows_sum_to_dual_areas() {
        let leaf = icosphere::<f64>(3);
        let dual = dual_areas(&leaf);
        for (row, d) in mass_matrix(&leaf).iter().zip(&dual) {
            let sum: f64 = row.iter().map(|(_, v)| v).sum();
            assert!((sum - d).abs() < 1e-15);
        }
        let total: f64 = dual.iter().sum();
        let area: f64 = (0..leaf.faces.len()).map(|f| leaf.face_area_flat(f)).sum();
        assert!((total - area).abs() < 1e-12);
    }

    #[test]
    fn leaves_are_stationary() {
        let pair = KillingPair::new(Vec3::axis(0), 1.0).unwrap();
        for geom in [AmbientGeometry::euclidean(), AmbientGeometry::paper_example()] {
            let flow = FlowProblem::new(geom, pair, Schedule::frozen(1.0), StepControl::default()).unwrap();
            let problem = GraphProblem::bare(flow, icosphere(4));
            let state = problem.state_from_mesh(&sphere(0.8, 4)).unwrap();
            let rates = problem.rates(&state).unwrap();
            let max_rate = rates.rate.iter().fold(0.0f64, |m, r: &f64| m.max(r.abs()));
            let mean = state.lambda.iter().sum::<f64>() / state.lambda.len() as f64;
            assert!(max_rate <= 1e-6 * mean, "{}: {max_rate}", geom.name());
        }
    }

    #[test]
    fn ellipticity_holds_on_paper_shell() {
        let geom = AmbientGeometry::paper_example();
        let shell = Shell::from_radii(&geom, 0.3, 1.8).unwrap();
        let (c2, c3) = ellipticity_bounds(&geom, &shell, 2.0, 2).unwrap();
        assert!(c2 > 0.0 && c3 >= c2);
    }

    proptest! {
        #[test]
        fn flux_jacobian_is_symmetric_and_bounded(
            g in 0.1f64..4.0,
            h in 0.1f64..4.0,
            p0 in -3.0f64..3.0,
            p1 in -3.0f64..3.0,
        ) {
            let coef = LeafCoefficients { g, h };
            let jac = graph_flux_jacobian(coef, [p0, p1], 2);
            prop_assert!((jac[0][1] - jac[1][0]).abs() <= 1e-15);
            let (lo, hi) = sym2_eigenvalues(jac);
            let grad = (p0 * p0 + p1 * p1).sqrt();
            let (c2, c3) = ellipticity_from([coef], grad, 2).unwrap();
            prop_assert!(lo > 0.0);
            prop_assert!(lo >= c2 * (1.0 - 1e-12) && hi <= c3 * (1.0 + 1e-12));
            // the Jacobian is the derivative of the flux
            let e = 1e-6;
            let a = graph_flux(coef, [p0 + e, p1], 2);
            let b = graph_flux(coef, [p0 - e, p1], 2);
            prop_assert!(((a[0] - b[0]) / (2.0 * e) - jac[0][0]).abs() <= 1e-6);
            prop_assert!(((a[1] - b[1]) / (2.0 * e) - jac[1][0]).abs() <= 1e-6);
        }
    }
}
