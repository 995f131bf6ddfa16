//! Closed triangle meshes in chart coordinates and their discrete geometry
//! under the conformal ambient metric.

mod geometry;
mod measure;
mod mesh;
mod seeds;
mod smoothing;

pub use geometry::{
    fit_jet, fit_scalar, mesh_geometry, mesh_geometry_with, Detail, JetStencil, MeanCurvature, Quadric, ScalarJet,
    VertexGeometry,
};
pub use measure::{area, volume};
pub use mesh::{icosphere, Topology, TriSurface, AREA_FLOOR};
pub use seeds::{
    build_seed, ellipsoid, perturbation, perturbed_sphere, rotate, sphere, support_minima, twist, twisted_seed, Seed,
    SeedKind, SeedSpec,
};
pub use smoothing::{quality, tangential_smooth, MeshQuality};
