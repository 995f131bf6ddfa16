//! Simulation and verification of the conformally induced mean curvature flow
//!
//! ```text
//! ∂F/∂t = (n φ − u(t/T0) H) ν
//! ```
//!
//! for closed surfaces (`n = 2`) in conformally flat 3-manifolds. The flow is
//! driven by a conformal Killing pair `X = X⊥ + Ξ(t/T0) X⊤` made of a dilation
//! `X⊥` and a rotation `X⊤`; its fixed points are the coordinate spheres.
//!
//! The library is generic over the scalar type ([`scalar::Real`], `f32` or
//! `f64`). The aliases at the crate root fix the scalar to `f64`, which is what
//! the binary and the test suite use.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ambient;
pub mod ckv;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod scalar;
pub mod surface;

pub use error::{Error, Result};
pub use scalar::{Real, Vec3};

/// Spatial dimension of the evolving hypersurface.
pub const DIM: usize = 2;

pub type Point = scalar::Vec3<f64>;
pub type Geometry = ambient::AmbientGeometry<f64>;
pub type GeometryKind = ambient::GeometryKind<f64>;
pub type Pair = ckv::KillingPair<f64>;
pub type Schedule = ckv::Schedule<f64>;
pub type Shell = ckv::Shell<f64>;
pub type Mesh = surface::TriSurface<f64>;
pub type VertexGeometry = surface::VertexGeometry<f64>;
pub type StepControl = flow::StepControl<f64>;
pub type FlowTrace = diagnostics::FlowTrace<f64>;
pub type LeafProfile = diagnostics::LeafProfile<f64>;
