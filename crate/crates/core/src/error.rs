use thiserror::Error;

/// Errors raised by geometry evaluation, mesh handling and time integration.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum Error {
    #[error("point {point:?} is outside the geometry domain or too close to its boundary ({reason})")]
    DomainExit { point: [f64; 3], reason: &'static str },

    #[error("degenerate mesh: {0}")]
    MeshDegenerate(String),

    #[error("rotation schedule infeasible: min(Λφ³ − X⊤(φ)) = {margin:.3e} on the shell")]
    ScheduleInfeasible { margin: f64 },

    #[error("seed is not strictly starshaped w.r.t. X(0): min u(0) = {min_u:.3e}")]
    SeedInfeasible { min_u: f64 },

    #[error("strict starshapedness lost at t = {time:.6}: min u = {min_u:.3e}")]
    StarshapeLost { time: f64, min_u: f64 },

    #[error("flux ellipticity lost: smallest Jacobian eigenvalue {c2:.3e}")]
    EllipticityLost { c2: f64 },

    #[error("leaf gradient {gradient:.3e} exceeds bound c1 = {bound:.3e}")]
    GradientBoundExceeded { gradient: f64, bound: f64 },

    #[error("leaf profile volume is not strictly increasing near r = {r:.4}")]
    ProfileNotMonotone { r: f64 },

    #[error("flow did not converge by t = {t_end}")]
    NonConvergence { t_end: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
