use crate::ambient::AmbientGeometry;
use crate::ckv::{KillingPair, Schedule};
use crate::diagnostics::{monitor, FlowTrace, TraceRow};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real, Vec3};
use crate::surface::{mesh_geometry_with, tangential_smooth, Detail, TriSurface, VertexGeometry};

use super::control::StepControl;

/// Everything that stays fixed during a run.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowProblem<T> {
    pub geom: AmbientGeometry<T>,
    pub pair: KillingPair<T>,
    pub schedule: Schedule<T>,
    pub control: StepControl<T>,
    /// Dimension of the evolving hypersurface.
    pub n: usize,
}

impl<T: Real> FlowProblem<T> {
    pub fn new(
        geom: AmbientGeometry<T>,
        pair: KillingPair<T>,
        schedule: Schedule<T>,
        control: StepControl<T>,
    ) -> Result<Self> {
        control.validate()?;
        Ok(FlowProblem { geom, pair, schedule, control, n: crate::DIM })
    }

    /// Whether a state recorded in `row` meets the stopping rule.
    pub fn converged(&self, row: &TraceRow<T>) -> bool {
        row.leaf_distance <= self.control.leaf_tol && row.speed_ratio <= self.control.speed_tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState<T> {
    pub t: T,
    pub mesh: TriSurface<T>,
    pub step: usize,
}

/// Normal speed `nφ − uH`.
#[inline]
pub fn speed<T: Real>(vg: &VertexGeometry<T>, n: usize) -> T {
    count::<T>(n) * vg.phi - vg.u * vg.h
}

/// Chart velocity `speed · e^{−f} ν̄` at every vertex.
pub fn chart_velocity<T: Real>(vg: &[VertexGeometry<T>], n: usize) -> Vec<Vec3<T>> {
    vg.iter().map(|v| v.normal * (speed(v, n) / v.ef)).collect()
}

/// `cfl · h_min² / max(1, max |u e^{−2f}|)`, capped at `dt_max`.
pub fn stable_dt<T: Real>(mesh: &TriSurface<T>, vg: &[VertexGeometry<T>], control: &StepControl<T>) -> T {
    let h = mesh.min_edge();
    let w = vg.iter().map(|v| (v.u / (v.ef * v.ef)).abs()).fold(T::one(), T::max);
    (control.cfl * h * h / w).min(control.dt_max)
}

fn advance<T: Real>(mesh: &TriSurface<T>, velocity: &[Vec3<T>], dt: T) -> Result<TriSurface<T>> {
    let v: Vec<Vec3<T>> = mesh.vertices.iter().zip(velocity).map(|(&p, &w)| p + w * dt).collect();
    if let Some(i) = v.iter().position(|p| !p.is_finite()) {
        return Err(Error::MeshDegenerate(format!("non-finite position at vertex {i}")));
    }
    let next = mesh.with_vertices(v)?;
    check_no_flips(mesh, &next)?;
    Ok(next)
}

/// Rejects a step in which some face turned over.
fn check_no_flips<T: Real>(before: &TriSurface<T>, after: &TriSurface<T>) -> Result<()> {
    for f in 0..before.faces.len() {
        if !(before.face_cross(f).dot(after.face_cross(f)) > T::zero()) {
            return Err(Error::MeshDegenerate(format!("face {f} inverted")));
        }
    }
    Ok(())
}

/// Heun step from a state whose geometry `vg` was evaluated at `state.t`.
fn heun<T: Real>(
    problem: &FlowProblem<T>,
    state: &FlowState<T>,
    vg: &[VertexGeometry<T>],
    dt: T,
) -> Result<FlowState<T>> {
    let k1 = chart_velocity(vg, problem.n);
    let predictor = advance(&state.mesh, &k1, dt)?;
    let xi = problem.schedule.weight(state.t + dt);
    let vg2 = mesh_geometry_with(
        &predictor,
        &problem.geom,
        &problem.pair,
        xi,
        Detail::Speed,
        problem.control.mean_curvature,
    )?;
    let k2 = chart_velocity(&vg2, problem.n);
    let half: T = lit(0.5);
    let avg: Vec<Vec3<T>> = k1.iter().zip(&k2).map(|(&a, &b)| (a + b) * half).collect();
    let mesh = advance(&state.mesh, &avg, dt)?;
    mesh.check_orientation()?;
    Ok(FlowState { t: state.t + dt, mesh, step: state.step + 1 })
}

/// One explicit two-stage Runge–Kutta step of size `dt`, without smoothing.
pub fn step_lagrangian<T: Real>(problem: &FlowProblem<T>, state: &FlowState<T>, dt: T) -> Result<FlowState<T>> {
    let xi = problem.schedule.weight(state.t);
    let vg = mesh_geometry_with(
        &state.mesh,
        &problem.geom,
        &problem.pair,
        xi,
        Detail::Speed,
        problem.control.mean_curvature,
    )?;
    check_starshaped(&vg, state.t)?;
    heun(problem, state, &vg, dt)
}

/// Advances to exactly `t_target` with stable steps, smoothing as
/// configured.
pub fn advance_to<T: Real>(problem: &FlowProblem<T>, mut state: FlowState<T>, t_target: T) -> Result<FlowState<T>> {
    let control = &problem.control;
    while state.t < t_target {
        let xi = problem.schedule.weight(state.t);
        let vg = mesh_geometry_with(
            &state.mesh,
            &problem.geom,
            &problem.pair,
            xi,
            Detail::Speed,
            problem.control.mean_curvature,
        )?;
        check_starshaped(&vg, state.t)?;
        let dt = stable_dt(&state.mesh, &vg, control).min(t_target - state.t);
        state = heun(problem, &state, &vg, dt)?;
        if control.smooth_every > 0 && state.step.is_multiple_of(control.smooth_every) {
            state.mesh = tangential_smooth(&state.mesh, control.smooth_strength)?;
        }
    }
    Ok(state)
}

fn check_starshaped<T: Real>(vg: &[VertexGeometry<T>], t: T) -> Result<()> {
    let min_u = vg.iter().map(|v| v.u).fold(T::infinity(), T::min);
    if min_u > T::zero() {
        Ok(())
    } else {
        Err(Error::StarshapeLost { time: t.to_f64().unwrap_or(f64::NAN), min_u: min_u.to_f64().unwrap_or(f64::NAN) })
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Converged,
    /// `t_end` or the step budget was reached first.
    NotConverged,
    Failed(Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome<T, S = FlowState<T>> {
    /// One row per accepted state, the initial one included.
    pub trace: FlowTrace<T>,
    /// Last accepted state.
    pub state: S,
    pub status: RunStatus,
}

impl<T: Real, S> RunOutcome<T, S> {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// The status as a result, with a missed target mapped to
    /// [`Error::NonConvergence`].
    pub fn result(&self) -> Result<()> {
        match &self.status {
            RunStatus::Converged => Ok(()),
            RunStatus::NotConverged => {
                let t = self.trace.last().map_or(T::zero(), |r| r.time);
                Err(Error::NonConvergence { t_end: t.to_f64().unwrap_or(f64::NAN) })
            }
            RunStatus::Failed(e) => Err(e.clone()),
        }
    }
}

/// Integrates from `mesh` at `t = 0` until convergence, `t_end` or failure.
/// `observe` sees every accepted state with its trace row.
pub fn run<T, F>(problem: &FlowProblem<T>, mesh: TriSurface<T>, mut observe: F) -> RunOutcome<T>
where
    T: Real,
    F: FnMut(&FlowState<T>, &TraceRow<T>),
{
    let control = &problem.control;
    let mut state = FlowState { t: T::zero(), mesh, step: 0 };
    let mut trace = FlowTrace::default();
    let status = loop {
        let xi = problem.schedule.weight(state.t);
        let vg = match mesh_geometry_with(
            &state.mesh,
            &problem.geom,
            &problem.pair,
            xi,
            Detail::Full,
            problem.control.mean_curvature,
        ) {
            Ok(vg) => vg,
            Err(e) => break RunStatus::Failed(e),
        };
        if let Err(e) = check_starshaped(&vg, state.t) {
            break RunStatus::Failed(e);
        }
        let dt = stable_dt(&state.mesh, &vg, control);
        let row = match monitor(&state.mesh, &vg, &problem.geom, problem.n, state.step, state.t, xi, dt) {
            Ok(row) => row,
            Err(e) => break RunStatus::Failed(e),
        };
        trace.push(row);
        observe(&state, &row);
        if problem.converged(&row) {
            break RunStatus::Converged;
        }
        if state.t >= control.t_end || state.step >= control.max_steps {
            break RunStatus::NotConverged;
        }
        let next = heun(problem, &state, &vg, dt).and_then(|mut next| {
            if control.smooth_every > 0 && next.step % control.smooth_every == 0 {
                next.mesh = tangential_smooth(&next.mesh, control.smooth_strength)?;
            }
            Ok(next)
        });
        match next {
            Ok(next) => state = next,
            Err(e) => break RunStatus::Failed(e),
        }
    };
    RunOutcome { trace, state, status }
}
