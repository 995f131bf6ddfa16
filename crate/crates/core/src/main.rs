use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ckflow::ckv::verify_assumptions;
use ckflow::config::{Backend, ConfigError, RunConfig};
use ckflow::diagnostics::{isoperimetric_check, leaf_profile, TraceRow};
use ckflow::flow::{run, FlowProblem, GraphProblem, RunStatus};
use ckflow::scalar::sig9;
use ckflow::surface::{build_seed, Seed, TriSurface};
use ckflow::{Error, FlowTrace, Geometry, LeafProfile, Pair};

#[derive(Parser)]
#[command(version, about = "Conformally induced mean curvature flow of closed surfaces")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run even when the structural assumptions fail.
    #[arg(long, global = true)]
    force: bool,
    /// No progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify, schedule and run the flow; write the trace, frames and verdict.
    Run,
    /// Print the assumption report for the configured shell.
    Verify,
    /// Write areas and volumes of coordinate spheres to profile.csv.
    Profile,
    /// Write the seed surface and its support-function minima.
    Seed,
}

/// Exit classes, each with its status word and process code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Ok,
    Assumptions,
    Flow,
    NonConvergence,
    Config,
}

impl Status {
    fn word(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Assumptions => "assumptions",
            Status::Flow => "flow",
            Status::NonConvergence => "nonconv",
            Status::Config => "config",
        }
    }

    fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Assumptions => 1,
            Status::Flow => 2,
            Status::NonConvergence => 3,
            Status::Config => 64,
        }
    }
}

/// Raised when the assumption report fails and `--force` is absent.
#[derive(Debug, thiserror::Error)]
#[error("structural assumptions fail (rerun with --force to proceed)")]
struct AssumptionsFailed;

fn classify(err: &anyhow::Error) -> Status {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<std::io::Error>() {
            return Status::Config;
        }
        if cause.is::<AssumptionsFailed>() {
            return Status::Assumptions;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonConvergence { .. } => Status::NonConvergence,
                Error::InvalidParameter(_) => Status::Config,
                Error::SeedInfeasible { .. } | Error::ScheduleInfeasible { .. } | Error::ProfileNotMonotone { .. } => {
                    Status::Assumptions
                }
                Error::DomainExit { .. }
                | Error::MeshDegenerate(_)
                | Error::StarshapeLost { .. }
                | Error::EllipticityLost { .. }
                | Error::GradientBoundExceeded { .. } => Status::Flow,
            };
        }
    }
    Status::Flow
}

struct Session {
    config: RunConfig,
    out: PathBuf,
    force: bool,
    quiet: bool,
    geom: Geometry,
    pair: Pair,
}

impl Session {
    fn new(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let out = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
        let geom = config.geometry();
        let pair = config.pair()?;
        Ok(Session { config, out, force: cli.force, quiet: cli.quiet, geom, pair })
    }

    fn seed(&self) -> Result<Seed<f64>> {
        let spec = self.config.seed_spec()?;
        build_seed(&spec, &self.geom, &self.pair).context("building the seed")
    }

    fn progress(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out_dir()?.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }
}

fn cmd_verify(ctx: &Session) -> Result<()> {
    let seed = ctx.seed()?;
    let shell = ctx.config.verify_shell(&ctx.geom, &seed.mesh)?;
    let report = verify_assumptions(&ctx.geom, &ctx.pair, &shell, ctx.config.verify_settings())?;
    print!("{}", report.table());
    if !report.all_pass() {
        return Err(AssumptionsFailed.into());
    }
    Ok(())
}

fn cmd_profile(ctx: &Session) -> Result<()> {
    let seed = ctx.seed()?;
    let grid = ctx.config.profile_grid(&ctx.geom, Some(&seed.mesh));
    let profile = leaf_profile(&ctx.geom, &grid)?;
    ctx.write("profile.csv", &profile.to_csv())?;
    ctx.progress(format!("wrote {} rows to {}", grid.len(), ctx.out.join("profile.csv").display()));
    Ok(())
}

fn cmd_seed(ctx: &Session) -> Result<()> {
    let seed = ctx.seed()?;
    ctx.write("seed.obj", &seed.mesh.to_obj(0.0, 0))?;
    println!("vertices = {}", seed.mesh.n_vertices());
    println!("min_u0 = {}", sig9(seed.min_u));
    println!("min_uperp = {}", sig9(seed.min_u_perp));
    Ok(())
}

fn cmd_run(ctx: &Session) -> Result<()> {
    let config = &ctx.config;
    let seed = ctx.seed()?;
    let shell = config.verify_shell(&ctx.geom, &seed.mesh)?;
    let report = verify_assumptions(&ctx.geom, &ctx.pair, &shell, config.verify_settings())?;
    if !report.all_pass() {
        eprint!("{}", report.table());
        if !ctx.force {
            return Err(AssumptionsFailed.into());
        }
        ctx.progress("assumptions fail; continuing because of --force");
    }
    let schedule = config.schedule(&ctx.geom, &ctx.pair, &seed.mesh)?;
    ctx.progress(format!("T0 = {}", if schedule.enabled { sig9(schedule.t0) } else { "off".into() }));
    let problem = FlowProblem::new(ctx.geom, ctx.pair, schedule, config.control())?;
    let profile = leaf_profile(&ctx.geom, &config.profile_grid(&ctx.geom, Some(&seed.mesh)))?;

    let out = ctx.out_dir()?.to_owned();
    let every = config.output.frame_every;
    let mut frames = FrameWriter { dir: out, every, last_step: None, error: None };
    let report_every = 500;
    let (trace, status, last_mesh) = match config.flow.backend {
        Backend::Lagrangian => {
            let outcome = run(&problem, seed.mesh.clone(), |state, row| {
                frames.offer(&state.mesh, state.t, state.step);
                if row.step % report_every == 0 {
                    ctx.progress(progress_line(row));
                }
            });
            let mesh = outcome.state.mesh.clone();
            (outcome.trace, outcome.status, Some(mesh))
        }
        Backend::LeafGraph => {
            let graph = GraphProblem::new(problem, config.seed.level, &seed.mesh)?;
            let start = graph.state_from_mesh(&seed.mesh)?;
            let outcome = graph.run(start, |state, row| {
                if let Ok(mesh) = state.mesh(&graph) {
                    frames.offer(&mesh, state.t, state.step);
                }
                if row.step % report_every == 0 {
                    ctx.progress(progress_line(row));
                }
            });
            let mesh = outcome.state.mesh(&graph).ok();
            (outcome.trace, outcome.status, mesh)
        }
    };
    if let (Some(mesh), Some(row)) = (&last_mesh, trace.last()) {
        frames.finish(mesh, row.time, row.step);
    }
    if let Some(e) = frames.error.take() {
        return Err(e);
    }
    ctx.write("trace.csv", &trace.to_csv())?;
    ctx.write("profile.csv", &profile.to_csv())?;
    let written = match trace.last() {
        Some(row) => {
            ctx.progress(progress_line(row));
            verdict(&trace, &profile, config.profile.tol, &status).and_then(|text| ctx.write("verdict.txt", &text))
        }
        None => Ok(()),
    };
    match status {
        RunStatus::Converged => written,
        RunStatus::NotConverged => {
            let t_end = trace.last().map_or(0.0, |r| r.time);
            Err(Error::NonConvergence { t_end }.into())
        }
        RunStatus::Failed(e) => Err(e.into()),
    }
}

fn progress_line(row: &TraceRow<f64>) -> String {
    format!(
        "step {:>7}  t = {:.5}  area = {:.6}  volume = {:.6}  leaf_distance = {:.3e}  min u = {:.3e}",
        row.step, row.time, row.area, row.volume, row.leaf_distance, row.u_min
    )
}

fn verdict(trace: &FlowTrace, profile: &LeafProfile, tol: f64, status: &RunStatus) -> Result<String> {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        bail!("the run recorded no states");
    };
    let iso = isoperimetric_check(trace, profile, tol)?;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
    kv("area_initial", sig9(first.area));
    kv("area_final", sig9(last.area));
    kv("volume_initial", sig9(first.volume));
    kv("volume_final", sig9(last.volume));
    kv("area_leaf_equal_volume", sig9(iso.area_leaf));
    kv("isoperimetric_pass", iso.pass.to_string());
    kv("converged", (*status == RunStatus::Converged).to_string());
    Ok(out)
}

/// Writes `frame_<step>.obj` every `every` steps, plus the first and the last
/// state. The first write error is kept and reported after the run.
struct FrameWriter {
    dir: PathBuf,
    every: usize,
    last_step: Option<usize>,
    error: Option<anyhow::Error>,
}

impl FrameWriter {
    fn offer(&mut self, mesh: &TriSurface<f64>, t: f64, step: usize) {
        let due = step == 0 || (self.every > 0 && step.is_multiple_of(self.every));
        if due {
            self.write(mesh, t, step);
        }
    }

    fn finish(&mut self, mesh: &TriSurface<f64>, t: f64, step: usize) {
        if self.last_step != Some(step) {
            self.write(mesh, t, step);
        }
    }

    fn write(&mut self, mesh: &TriSurface<f64>, t: f64, step: usize) {
        if self.error.is_some() {
            return;
        }
        let path = self.dir.join(format!("frame_{step}.obj"));
        match fs::write(&path, mesh.to_obj(t, step)) {
            Ok(()) => self.last_step = Some(step),
            Err(e) => self.error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display()))),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let status = if e.use_stderr() { Status::Config } else { Status::Ok };
            eprintln!("STATUS={}", status.word());
            return ExitCode::from(status.code());
        }
    };
    let result = Session::new(&cli).and_then(|ctx| match cli.command {
        Command::Run => cmd_run(&ctx),
        Command::Verify => cmd_verify(&ctx),
        Command::Profile => cmd_profile(&ctx),
        Command::Seed => cmd_seed(&ctx),
    });
    let status = match &result {
        Ok(()) => Status::Ok,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify(e)
        }
    };
    eprintln!("STATUS={}", status.word());
    ExitCode::from(status.code())
}
