//! TOML run configuration.
//!
//! Every section is optional and unknown keys are rejected. A minimal file:
//!
//! ```toml
//! geometry = "paper_example"
//!
//! [rotation]
//! axis = [1.0, 0.0, 0.0]
//! omega = 1.0
//!
//! [seed]
//! kind = "perturbed"
//! radius = 1.0
//! amplitude = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::ambient::AmbientGeometry;
use crate::ckv::{estimate_t0, KillingPair, Schedule, Shell, ShellSampling, VerifySettings};
use crate::flow::{GraphOperator, StepControl};
use crate::surface::{MeanCurvature, SeedKind, SeedSpec, TriSurface};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed configuration")]
    Parse(#[from] toml::de::Error),

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    #[default]
    Euclidean,
    PaperExample,
    PoincareBall,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareBallConfig {
    pub radius: f64,
}

impl Default for PoincareBallConfig {
    fn default() -> Self {
        PoincareBallConfig { radius: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RotationConfig {
    pub axis: [f64; 3],
    pub omega: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig { axis: [1.0, 0.0, 0.0], omega: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// `schedule.t0`: `"auto"` or a horizon; zero switches the rotation off.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum T0Setting {
    Auto(Auto),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub t0: T0Setting,
    pub margin: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { t0: T0Setting::Auto(Auto::Auto), margin: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SeedKindName {
    Sphere,
    Ellipsoid,
    Twisted,
    #[default]
    Perturbed,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub kind: SeedKindName,
    pub radius: Option<f64>,
    pub semiaxes: Option<[f64; 3]>,
    pub tau: Option<f64>,
    pub amplitude: Option<f64>,
    pub level: u32,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig { kind: SeedKindName::Perturbed, radius: None, semiaxes: None, tau: None, amplitude: None, level: 4 }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Lagrangian,
    LeafGraph,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MeanCurvatureName {
    #[default]
    Fit,
    Cotan,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GraphOperatorName {
    #[default]
    Collocation,
    FiniteVolume,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub backend: Backend,
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub speed_tol: f64,
    pub leaf_tol: f64,
    pub smooth_every: usize,
    pub smooth_strength: f64,
    pub max_steps: usize,
    pub mean_curvature: MeanCurvatureName,
    pub graph_operator: GraphOperatorName,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let c = StepControl::<f64>::default();
        FlowConfig {
            backend: Backend::Lagrangian,
            cfl: c.cfl,
            dt_max: c.dt_max,
            t_end: c.t_end,
            speed_tol: c.speed_tol,
            leaf_tol: c.leaf_tol,
            smooth_every: c.smooth_every,
            smooth_strength: c.smooth_strength,
            max_steps: c.max_steps,
            mean_curvature: MeanCurvatureName::Fit,
            graph_operator: GraphOperatorName::Collocation,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Frame period in steps; zero writes only the first and last frames.
    pub frame_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), frame_every: 0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { seed: ShellSampling::default().seed }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
    pub spheres: usize,
    pub tol: f64,
    /// Radii `[r_min, r_max]` of the checked shell; the seed's band when absent.
    pub shell: Option<[f64; 2]>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let v = VerifySettings::default();
        VerifyConfig { samples: v.samples, spheres: v.spheres, tol: v.tol, shell: None }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub points: usize,
    /// Relative tolerance of the isoperimetric comparison.
    pub tol: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { r_min: None, r_max: None, points: 64, tol: 1e-3 }
    }
}

/// A complete run description.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryName,
    pub poincare_ball: PoincareBallConfig,
    pub rotation: RotationConfig,
    pub schedule: ScheduleConfig,
    pub seed: SeedConfig,
    pub flow: FlowConfig,
    pub output: OutputConfig,
    pub sampling: SamplingConfig,
    pub verify: VerifyConfig,
    pub profile: ProfileConfig,
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    /// Checks every key before anything is computed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        if self.geometry == GeometryName::PoincareBall {
            positive("poincare_ball.radius", self.poincare_ball.radius)?;
        }
        if self.rotation.axis.iter().all(|&a| a == 0.0) || self.rotation.axis.iter().any(|a| !a.is_finite()) {
            return Err(invalid("rotation.axis", "must be a finite nonzero vector"));
        }
        if !self.rotation.omega.is_finite() {
            return Err(invalid("rotation.omega", "must be finite"));
        }
        if let T0Setting::Fixed(t0) = self.schedule.t0 {
            if !(t0 >= 0.0 && t0.is_finite()) {
                return Err(invalid("schedule.t0", format!("must be \"auto\" or a number >= 0, got {t0}")));
            }
        }
        if !(self.schedule.margin > 0.0 && self.schedule.margin < 1.0) {
            return Err(invalid("schedule.margin", format!("must lie in (0, 1), got {}", self.schedule.margin)));
        }
        self.seed_spec()?;
        if self.seed.level > 6 {
            return Err(invalid("seed.level", format!("at most 6, got {}", self.seed.level)));
        }
        self.control().validate().map_err(|e| invalid("flow", e.to_string()))?;
        if self.verify.samples == 0 || self.verify.spheres == 0 {
            return Err(invalid("verify", "samples and spheres must be positive"));
        }
        positive("verify.tol", self.verify.tol)?;
        if let Some([lo, hi]) = self.verify.shell {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(invalid("verify.shell", format!("needs 0 < r_min <= r_max, got [{lo}, {hi}]")));
            }
        }
        if let Some(r) = self.profile.r_min {
            positive("profile.r_min", r)?;
        }
        if let Some(r) = self.profile.r_max {
            positive("profile.r_max", r)?;
        }
        if let (Some(lo), Some(hi)) = (self.profile.r_min, self.profile.r_max) {
            if hi <= lo {
                return Err(invalid("profile.r_max", "must exceed profile.r_min"));
            }
        }
        if self.profile.points < 2 {
            return Err(invalid("profile.points", "at least 2"));
        }
        positive("profile.tol", self.profile.tol)?;
        Ok(())
    }

    pub fn geometry(&self) -> AmbientGeometry<f64> {
        match self.geometry {
            GeometryName::Euclidean => AmbientGeometry::euclidean(),
            GeometryName::PaperExample => AmbientGeometry::paper_example(),
            GeometryName::PoincareBall => AmbientGeometry::poincare_ball(self.poincare_ball.radius),
        }
    }

    pub fn pair(&self) -> Result<KillingPair<f64>, ConfigError> {
        let [x, y, z] = self.rotation.axis;
        KillingPair::new(Vec3::new(x, y, z), self.rotation.omega).map_err(|e| invalid("rotation", e.to_string()))
    }

    pub fn seed_spec(&self) -> Result<SeedSpec<f64>, ConfigError> {
        let s = &self.seed;
        let need = |key: &'static str, v: Option<f64>| {
            v.ok_or_else(|| invalid(key, format!("required for seed kind {:?}", s.kind)))
        };
        let semiaxes = || {
            let a =
                s.semiaxes.ok_or_else(|| invalid("seed.semiaxes", format!("required for seed kind {:?}", s.kind)))?;
            if a.iter().all(|&v| v > 0.0 && v.is_finite()) {
                Ok(a)
            } else {
                Err(invalid("seed.semiaxes", "must be positive"))
            }
        };
        let kind = match s.kind {
            SeedKindName::Sphere => SeedKind::Sphere { radius: need("seed.radius", s.radius)? },
            SeedKindName::Ellipsoid => SeedKind::Ellipsoid { semiaxes: semiaxes()? },
            SeedKindName::Twisted => SeedKind::Twisted { semiaxes: semiaxes()?, tau: s.tau.unwrap_or(0.0) },
            SeedKindName::Perturbed => SeedKind::Perturbed {
                radius: need("seed.radius", s.radius.or(Some(1.0)))?,
                amplitude: s.amplitude.unwrap_or(0.1),
            },
        };
        if let SeedKind::Sphere { radius } | SeedKind::Perturbed { radius, .. } = kind {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(invalid("seed.radius", format!("must be positive, got {radius}")));
            }
        }
        if let SeedKind::Perturbed { amplitude, .. } = kind {
            if !(amplitude.abs() < 1.0) {
                return Err(invalid("seed.amplitude", format!("must lie in (-1, 1), got {amplitude}")));
            }
        }
        if let SeedKind::Twisted { tau, .. } = kind {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(invalid("seed.tau", format!("must be >= 0, got {tau}")));
            }
        }
        Ok(SeedSpec { kind, level: s.level })
    }

    pub fn control(&self) -> StepControl<f64> {
        let f = &self.flow;
        StepControl {
            cfl: f.cfl,
            dt_max: f.dt_max,
            speed_tol: f.speed_tol,
            leaf_tol: f.leaf_tol,
            t_end: f.t_end,
            smooth_every: f.smooth_every,
            smooth_strength: f.smooth_strength,
            max_steps: f.max_steps,
            mean_curvature: match f.mean_curvature {
                MeanCurvatureName::Fit => MeanCurvature::Fit,
                MeanCurvatureName::Cotan => MeanCurvature::Cotan,
            },
            graph_operator: match f.graph_operator {
                GraphOperatorName::Collocation => GraphOperator::Collocation,
                GraphOperatorName::FiniteVolume => GraphOperator::FiniteVolume,
            },
        }
    }

    pub fn shell_sampling(&self) -> ShellSampling {
        ShellSampling { seed: self.sampling.seed, ..ShellSampling::default() }
    }

    pub fn verify_settings(&self) -> VerifySettings {
        VerifySettings {
            samples: self.verify.samples,
            spheres: self.verify.spheres,
            tol: self.verify.tol,
            seed: self.sampling.seed,
        }
    }

    /// The shell to verify: the configured radii, or the `λ` band of `seed`
    /// widened by ten percent.
    pub fn verify_shell(&self, geom: &AmbientGeometry<f64>, seed: &TriSurface<f64>) -> crate::Result<Shell<f64>> {
        match self.verify.shell {
            Some([lo, hi]) => Shell::from_radii(geom, lo, hi),
            None => seed_shell(geom, seed),
        }
    }

    /// The rotation schedule for a run from `seed`.
    pub fn schedule(
        &self,
        geom: &AmbientGeometry<f64>,
        pair: &KillingPair<f64>,
        seed: &TriSurface<f64>,
    ) -> crate::Result<Schedule<f64>> {
        match self.schedule.t0 {
            T0Setting::Fixed(0.0) => Ok(Schedule::disabled()),
            T0Setting::Fixed(t0) => Schedule::new(t0, self.schedule.margin),
            T0Setting::Auto(_) => {
                let shell = seed_shell(geom, seed)?;
                let t0 = estimate_t0(geom, pair, &shell, crate::DIM, self.schedule.margin, self.shell_sampling())?;
                Schedule::new(t0, self.schedule.margin)
            }
        }
    }

    /// Radius grid of the leaf profile: the configured range, or one that
    /// brackets the seed with room on both sides.
    pub fn profile_grid(&self, geom: &AmbientGeometry<f64>, seed: Option<&TriSurface<f64>>) -> Vec<f64> {
        let (lo, hi) = match seed {
            Some(mesh) => {
                let (a, b) =
                    mesh.vertices.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.norm()), b.max(p.norm())));
                (0.5 * a, 1.5 * b)
            }
            None => (0.1, 3.0),
        };
        let cap = geom.outer_radius().map_or(f64::INFINITY, |r| 0.95 * r);
        let r_min = self.profile.r_min.unwrap_or(lo);
        let r_max = self.profile.r_max.unwrap_or(hi.min(cap));
        crate::diagnostics::radius_grid(r_min, r_max, self.profile.points)
    }
}

/// The `λ` band spanned by the vertices of `mesh`, widened by ten percent.
pub fn seed_shell(geom: &AmbientGeometry<f64>, mesh: &TriSurface<f64>) -> crate::Result<Shell<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &p in &mesh.vertices {
        let l = crate::ckv::derived(geom, p)?.lambda;
        lo = lo.min(l);
        hi = hi.max(l);
    }
    Ok(Shell::new(lo, hi)?.widened(geom, 0.1))
}
