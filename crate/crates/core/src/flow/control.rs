use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::surface::MeanCurvature;

/// Step-size and stopping controls shared by both backends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl<T> {
    /// Parabolic CFL constant, `0 < cfl ≤ 0.5`.
    pub cfl: T,
    pub dt_max: T,
    /// Convergence needs `max |speed| ≤ speed_tol · max H`.
    pub speed_tol: T,
    /// Convergence needs `(max λ − min λ) / mean λ ≤ leaf_tol`.
    pub leaf_tol: T,
    pub t_end: T,
    /// Tangential smoothing period in steps, zero for never.
    pub smooth_every: usize,
    pub smooth_strength: T,
    pub max_steps: usize,
    pub mean_curvature: MeanCurvature,
    pub graph_operator: GraphOperator,
}

/// Spatial operator of the leaf-graph backend.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GraphOperator {
    /// Nodal derivatives from local polynomial fits over the two-ring.
    #[default]
    Collocation,
    /// Piecewise-linear gradients with fluxes through dual cells.
    FiniteVolume,
}

impl<T: Real> Default for StepControl<T> {
    fn default() -> Self {
        StepControl {
            cfl: lit(0.25),
            dt_max: lit(1e-2),
            speed_tol: lit(1e-2),
            leaf_tol: lit(1e-2),
            t_end: lit(10.0),
            smooth_every: 10,
            smooth_strength: lit(0.5),
            max_steps: 1_000_000,
            mean_curvature: MeanCurvature::Fit,
            graph_operator: GraphOperator::Collocation,
        }
    }
}

impl<T: Real> StepControl<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: T| Err(Error::InvalidParameter(format!("{what} out of range: {v}")));
        if !(self.cfl > T::zero() && self.cfl <= lit(0.5)) {
            return bad("cfl", self.cfl);
        }
        if !(self.dt_max > T::zero()) {
            return bad("dt_max", self.dt_max);
        }
        if !(self.speed_tol > T::zero()) {
            return bad("speed_tol", self.speed_tol);
        }
        if !(self.leaf_tol > T::zero()) {
            return bad("leaf_tol", self.leaf_tol);
        }
        if !(self.t_end > T::zero()) || !self.t_end.is_finite() {
            return bad("t_end", self.t_end);
        }
        if !(self.smooth_strength >= T::zero() && self.smooth_strength <= T::one()) {
            return bad("smooth_strength", self.smooth_strength);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cfl_range() {
        let mut c = StepControl::<f64>::default();
        assert!(c.validate().is_ok());
        c.cfl = 0.5;
        assert!(c.validate().is_ok());
        c.cfl = 0.51;
        assert!(c.validate().is_err());
        c.cfl = 0.0;
        assert!(c.validate().is_err());
        let c = StepControl::<f64> { t_end: f64::INFINITY, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
