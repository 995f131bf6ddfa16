use std::f64::consts::PI;
use std::time::Instant;

use ckflow::ambient::{gradient_fd, AmbientGeometry};
use ckflow::ckv::{
    derived, estimate_t0, eval_big_lambda, eval_lambda, eval_phi, verify_assumptions, KillingPair, Schedule, Shell,
    ShellSampling, VerifySettings,
};
use ckflow::config::seed_shell;
use ckflow::diagnostics::{
    evolution_residuals, isoperimetric_check, leaf_profile, minkowski1_residual, minkowski1_residual_with,
    minkowski2_residual, monitor, radius_grid, FlowTrace,
};
use ckflow::flow::{
    advance_to, ellipticity_bounds, ellipticity_from, run, sample_lambda, speed, stable_dt, step_lagrangian,
    FlowProblem, FlowState, GraphProblem, LeafCoefficients, RunOutcome, RunStatus, StepControl,
};
use ckflow::surface::{
    ellipsoid, icosphere, mesh_geometry, perturbed_sphere, sphere, support_minima, twisted_seed, MeanCurvature,
    TriSurface,
};
use ckflow::{Error, Mesh, Vec3};

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn e1() -> KillingPair<f64> {
    KillingPair::new(Vec3::axis(0), 1.0).unwrap()
}

fn auto_schedule(geom: &AmbientGeometry<f64>, pair: &KillingPair<f64>, mesh: &Mesh) -> Schedule<f64> {
    let shell = seed_shell(geom, mesh).unwrap();
    let t0 = estimate_t0(geom, pair, &shell, 2, 0.1, ShellSampling::default()).unwrap();
    Schedule::new(t0, 0.1).unwrap()
}

/// Smoothing off so that the flat volume is only moved by the flow, and the
/// cotangent mean curvature so that the speed matches the area gradient of
/// the polyhedral surface.
fn conservation_control() -> StepControl<f64> {
    StepControl { smooth_every: 0, t_end: 20.0, mean_curvature: MeanCurvature::Cotan, ..Default::default() }
}

struct Run {
    label: &'static str,
    outcome: RunOutcome<f64>,
    seconds: f64,
}

fn flow(label: &'static str, problem: &FlowProblem<f64>, seed: Mesh) -> Run {
    let clock = Instant::now();
    let outcome = run(problem, seed, |_, _| {});
    let seconds = clock.elapsed().as_secs_f64();
    let last = outcome.trace.last().unwrap();
    println!("  info  {label}: {:?} after {} steps, t = {:.3}, {:.0} s", outcome.status, last.step, last.time, seconds);
    Run { label, outcome, seconds }
}

fn leaf_stationarity() -> Verdict {
    let geom = AmbientGeometry::euclidean();
    let mut worst: f64 = 0.0;
    for r in [0.5, 1.0, 2.0] {
        let vg = mesh_geometry(&sphere(r, 4), &geom, &e1(), 1.0).unwrap();
        let max_h = vg.iter().map(|v| v.h).fold(0.0, f64::max);
        let max_speed = vg.iter().map(|v| speed(v, 2).abs()).fold(0.0, f64::max);
        worst = worst.max(max_speed / max_h);
    }
    verdict("leaf stationarity", worst <= 1e-2, format!("max |speed| / max H = {worst:.2e} (<= 1e-2)"))
}

fn conservation(run: &Run) -> Verdict {
    let t = &run.outcome.trace;
    let drift = t.volume_drift();
    let increase = t.max_area_increase();
    verdict(
        "conservation and monotonicity",
        drift <= 5e-3 && increase <= 1e-8,
        format!("volume drift = {drift:.2e} (<= 5e-3), largest relative area increase = {increase:.2e} (<= 1e-8)"),
    )
}

fn convergence(run: &Run) -> Verdict {
    let last = run.outcome.trace.last().unwrap();
    let target = 4.0 * PI * 2f64.powf(2.0 / 3.0);
    let err = (last.area - target).abs() / target;
    verdict(
        "convergence target",
        run.outcome.converged() && last.leaf_distance <= 1e-2 && err <= 1e-2,
        format!(
            "{:?}, leaf distance = {:.2e} (<= 1e-2), area {:.5} vs {target:.5}, relative error {err:.2e} (<= 1e-2)",
            run.outcome.status, last.leaf_distance, last.area
        ),
    )
}

fn maximum_principle(runs: &[&Run]) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for r in runs {
        let excess = r.outcome.trace.lambda_band_excess();
        worst = worst.max(excess);
        parts.push(format!("{} {excess:.1e}", r.label));
    }
    verdict("maximum principle", worst <= 1e-3, format!("band excess / range: {} (<= 1e-3)", parts.join(", ")))
}

type Shape<'a> = (&'static str, &'a AmbientGeometry<f64>, fn(u32) -> Mesh);

fn minkowski() -> Verdict {
    let e = AmbientGeometry::euclidean();
    let pe = AmbientGeometry::paper_example();
    let pair = e1();
    let shapes: [Shape; 5] = [
        ("sphere", &e, |l| sphere(1.0, l)),
        ("ellipsoid", &e, |l| ellipsoid([2.0, 1.0, 1.0], l)),
        ("perturbed", &e, |l| perturbed_sphere(1.0, 0.1, l)),
        ("paper sphere", &pe, |l| sphere(0.8, l)),
        ("paper perturbed", &pe, |l| perturbed_sphere(1.0, 0.1, l)),
    ];
    let mut pass = true;
    let mut worst_l4: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for (name, geom, shape) in shapes {
        let r4 = minkowski1_residual(&shape(4), geom, &pair, 1.0).unwrap();
        worst_l4 = worst_l4.max(r4);
        pass &= r4 <= 1e-2;
        // leaves satisfy the identity up to rounding, so refinement is only
        // judged on shapes that are not leaves
        if !name.contains("sphere") || name.contains("perturbed") {
            let r5 = minkowski1_residual(&shape(5), geom, &pair, 1.0).unwrap();
            worst_ratio = worst_ratio.max(r5 / r4);
            pass &= r5 <= 0.7 * r4;
        }
    }
    let mut worst_m2: f64 = 0.0;
    for mesh in [sphere(1.0, 4), ellipsoid([2.0, 1.0, 1.0], 4), perturbed_sphere(1.0, 0.1, 4)] {
        worst_m2 = worst_m2.max(minkowski2_residual(&mesh, &e, &pair, 1.0).unwrap().residual());
    }
    pass &= worst_m2 <= 5e-2;
    let fit = |level| {
        minkowski1_residual_with(&ellipsoid([2.0, 1.0, 1.0], level), &e, &pair, 1.0, MeanCurvature::Fit).unwrap()
    };
    println!(
        "  info  mink1 with the fitted mean curvature on the (2,1,1) ellipsoid: L3 {:.1e}, L4 {:.1e}, L5 {:.1e}",
        fit(3),
        fit(4),
        fit(5)
    );
    verdict(
        "Minkowski identities",
        pass,
        format!(
            "max mink1 at L4 = {worst_l4:.2e} (<= 1e-2), worst L5/L4 = {worst_ratio:.2} (<= 0.7), max flat mink2 = {worst_m2:.2e} (<= 5e-2)"
        ),
    )
}

fn evolution() -> Verdict {
    let pair = e1();
    let xi = 1.0;
    let mut worst_lambda: f64 = 0.0;
    let mut worst_graph: f64 = 0.0;
    let mut parts = Vec::new();
    for geom in [AmbientGeometry::euclidean(), AmbientGeometry::paper_example()] {
        let problem = FlowProblem::new(geom, pair, Schedule::frozen(xi), StepControl::default()).unwrap();
        let seed = perturbed_sphere(if geom.is_flat() { 1.0 } else { 0.8 }, 0.1, 4);

        let s0 = FlowState { t: 0.0, mesh: seed.clone(), step: 0 };
        let vg = mesh_geometry(&seed, &geom, &pair, xi).unwrap();
        let dt = stable_dt(&seed, &vg, &problem.control);
        let s1 = step_lagrangian(&problem, &s0, dt).unwrap();
        let s2 = step_lagrangian(&problem, &s1, dt).unwrap();
        let lag = evolution_residuals(&s0.mesh, &s1.mesh, &s2.mesh, dt, &geom, &pair, xi, 2).unwrap();

        let graph = GraphProblem::bare(problem.clone(), icosphere(4));
        let g0 = graph.state_from_mesh(&seed).unwrap();
        let gdt = graph.stable_dt(&graph.rates(&g0).unwrap());
        let g1 = graph.step_graph(&g0, gdt).unwrap();
        let g2 = graph.step_graph(&g1, gdt).unwrap();
        let meshes: Vec<TriSurface<f64>> = [&g0, &g1, &g2].iter().map(|g| g.mesh(&graph).unwrap()).collect();
        let gr = evolution_residuals(&meshes[0], &meshes[1], &meshes[2], gdt, &geom, &pair, xi, 2).unwrap();

        worst_lambda = worst_lambda.max(lag.lambda);
        worst_graph = worst_graph.max(gr.u).max(gr.h);
        parts.push(format!("{}: lambda {:.1e}, graph u {:.1e}, graph H {:.1e}", geom.name(), lag.lambda, gr.u, gr.h));
    }
    verdict(
        "evolution-equation residuals",
        worst_lambda <= 5e-2 && worst_graph <= 0.1,
        format!("{} (lambda <= 5e-2, u and H <= 1e-1)", parts.join("; ")),
    )
}

fn novelty(scheduled: &Run, unscheduled: &RunOutcome<f64>, min_uperp0: f64, min_u0: f64) -> Verdict {
    let t = &scheduled.outcome.trace;
    let last = t.last().unwrap();
    let flagged = matches!(&unscheduled.status, RunStatus::Failed(Error::StarshapeLost { time, .. }) if *time == 0.0);
    let pass = min_uperp0 < 0.0
        && min_u0 > 0.0
        && t.min_u() > 0.0
        && scheduled.outcome.converged()
        && last.leaf_distance <= 1e-2
        && flagged;
    verdict(
        "schedule necessity",
        pass,
        format!(
            "seed min u_perp = {min_uperp0:.3}, min u(0) = {min_u0:.3}; scheduled run {:?} with min_t min u = {:.3e}, leaf distance {:.1e}; Xi = 0 run: {}",
            scheduled.outcome.status,
            t.min_u(),
            last.leaf_distance,
            match &unscheduled.status {
                RunStatus::Failed(e) => e.to_string(),
                s => format!("{s:?}"),
            }
        ),
    )
}

fn paper_example(run: &Run) -> Verdict {
    let geom = AmbientGeometry::paper_example();
    let pair = e1();
    let shell = Shell::from_radii(&geom, 0.3, 1.8).unwrap();
    let report = verify_assumptions(&geom, &pair, &shell, VerifySettings::default()).unwrap();

    let p = Vec3::new(1.0, 0.0, 0.0);
    let phi = eval_phi(&geom, &pair, p).unwrap();
    let lambda = eval_lambda(&geom, &pair, p).unwrap();
    let xperp_lambda = 2.0 * eval_big_lambda(&geom, &pair, p).unwrap() * geom.metric_at(p).unwrap()[0][0];
    let analytic = (phi - 3.0).abs() <= 1e-10
        && (lambda - 1.0 / 9.0).abs() <= 1e-10
        && (xperp_lambda - 10.0 / 27.0).abs() <= 1e-10;
    let lambda_of = |q: Vec3<f64>| derived(&geom, q).unwrap().lambda;
    let fd_xperp_lambda = gradient_fd(&lambda_of, p, 1e-5).dot(p);
    let trace_phi = {
        let l = ckflow::ckv::lie_derivative_fd(&geom, |q| q, p).unwrap();
        let g = geom.metric_at(p).unwrap();
        (0..3).map(|i| l[i][i] / g[i][i]).sum::<f64>() / 6.0
    };
    let fd = (fd_xperp_lambda - 10.0 / 27.0).abs() <= 1e-5 && (trace_phi - 3.0).abs() <= 1e-5;

    let t = &run.outcome.trace;
    let (first, last) = (t.first().unwrap(), t.last().unwrap());
    let profile = leaf_profile(&geom, &radius_grid(0.5, 1.5, 64)).unwrap();
    let iso = isoperimetric_check(t, &profile, 1e-3).unwrap();
    let area_err = (last.area - iso.area_leaf).abs() / iso.area_leaf;
    let drift = t.volume_drift();
    let flow_ok = run.outcome.converged() && last.leaf_distance <= 1e-2 && area_err <= 1e-2 && drift <= 5e-3;
    verdict(
        "worked example",
        report.all_pass() && analytic && fd && flow_ok,
        format!(
            "{} of 10 conditions pass; phi = {phi}, lambda = {lambda:.12}, X_perp(lambda) = {xperp_lambda:.12} (FD {fd_xperp_lambda:.8}); run {:?}, leaf distance {:.1e}, area {:.5} -> {:.5} vs leaf {:.5} ({area_err:.1e}), volume drift {drift:.1e}",
            report.conditions.iter().filter(|c| c.pass).count(),
            run.outcome.status,
            last.leaf_distance,
            first.area,
            last.area,
            iso.area_leaf
        ),
    )
}

fn ellipticity() -> Verdict {
    let unit = LeafCoefficients { g: 1.0, h: 1.0 };
    let (c2, c3) = ellipticity_from([unit], 1.0, 2).unwrap();
    let closed = (c2 - 2f64.powf(-1.5)).abs() <= 1e-6 && (c3 - 1.0).abs() <= 1e-6;
    let geom = AmbientGeometry::paper_example();
    let pair = e1();
    let seed = perturbed_sphere(1.0, 0.1, 4);
    let problem = FlowProblem::new(geom, pair, Schedule::disabled(), StepControl::default()).unwrap();
    let c1 = GraphProblem::new(problem, 4, &seed).unwrap().c1;
    let shell = Shell::from_radii(&geom, 0.3, 1.8).unwrap();
    let (pc2, pc3) = ellipticity_bounds(&geom, &shell, c1, 2).unwrap();
    verdict(
        "ellipticity bounds",
        closed && pc2 > 0.0,
        format!("unit coefficients: ({c2:.9}, {c3:.9}); paper shell with c1 = {c1:.3}: ({pc2:.3e}, {pc3:.3e})"),
    )
}

fn cross_backend() -> Verdict {
    let geom = AmbientGeometry::euclidean();
    let seed = perturbed_sphere(1.0, 0.1, 4);
    let problem = FlowProblem::new(geom, e1(), Schedule::disabled(), StepControl::default()).unwrap();
    let graph = GraphProblem::new(problem.clone(), 4, &seed).unwrap();
    let mut lag = FlowState { t: 0.0, mesh: seed.clone(), step: 0 };
    let mut leaf = graph.state_from_mesh(&seed).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t in [0.05, 0.1, 0.2, 0.4] {
        lag = advance_to(&problem, lag, t).unwrap();
        leaf = graph.advance_to(leaf, t).unwrap();
        let sampled = sample_lambda(&lag.mesh, &geom, &graph.leaf.vertices).unwrap();
        let err = sampled.iter().zip(&leaf.lambda).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        worst = worst.max(err);
        parts.push(format!("t {t}: {err:.1e}"));
    }
    verdict("cross-backend agreement", worst <= 2e-2, format!("max relative lambda gap {} (<= 2e-2)", parts.join(", ")))
}

fn isoperimetric() -> Verdict {
    let geom = AmbientGeometry::paper_example();
    let pair = e1();
    let radius = 0.8;
    let mesh = sphere(radius, 5);
    let vg = mesh_geometry(&mesh, &geom, &pair, 1.0).unwrap();
    let mut trace = FlowTrace::default();
    trace.push(monitor(&mesh, &vg, &geom, 2, 0, 0.0, 1.0, 0.0).unwrap());
    let profile = leaf_profile(&geom, &radius_grid(0.5, 1.2, 64)).unwrap();
    let iso = isoperimetric_check(&trace, &profile, 1e-3).unwrap();
    verdict(
        "isoperimetric equality case",
        (iso.r1 - radius).abs() <= 1e-3 && iso.equality,
        format!(
            "leaf r = {radius} (L5): r1 = {:.6} (within 1e-3), area {:.6} vs leaf {:.6}, equality within 1e-3: {}",
            iso.r1, iso.area_initial, iso.area_leaf, iso.equality
        ),
    )
}

#[test]
fn acceptance() {
    let e = AmbientGeometry::euclidean();
    let pe = AmbientGeometry::paper_example();
    let pair = e1();

    let seed = ellipsoid([2.0, 1.0, 1.0], 4);
    let problem = FlowProblem::new(e, pair, auto_schedule(&e, &pair, &seed), conservation_control()).unwrap();
    let ellipsoid_run = flow("ellipsoid", &problem, seed);

    let axis = KillingPair::new(Vec3::axis(2), 1.0).unwrap();
    let twisted = twisted_seed([1.6, 0.7, 0.7], 2.0, 4, &e, &axis).unwrap();
    let (_, min_uperp0) = support_minima(&twisted.mesh, &e, &axis, 0.0).unwrap();
    let control = StepControl { t_end: 20.0, ..Default::default() };
    let problem = FlowProblem::new(e, axis, auto_schedule(&e, &axis, &twisted.mesh), control).unwrap();
    let twisted_run = flow("twisted", &problem, twisted.mesh.clone());
    let problem = FlowProblem::new(e, axis, Schedule::disabled(), control).unwrap();
    let unscheduled = run(&problem, twisted.mesh.clone(), |_, _| {});

    let seed = perturbed_sphere(1.0, 0.1, 4);
    let problem = FlowProblem::new(pe, pair, auto_schedule(&pe, &pair, &seed), conservation_control()).unwrap();
    let paper_run = flow("paper example", &problem, seed);

    let verdicts = [
        leaf_stationarity(),
        conservation(&ellipsoid_run),
        convergence(&ellipsoid_run),
        maximum_principle(&[&ellipsoid_run, &twisted_run, &paper_run]),
        minkowski(),
        evolution(),
        novelty(&twisted_run, &unscheduled, min_uperp0, twisted.min_u),
        paper_example(&paper_run),
        ellipticity(),
        cross_backend(),
        isoperimetric(),
    ];
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let total: f64 = [&ellipsoid_run, &twisted_run, &paper_run].iter().map(|r| r.seconds).sum();
    println!("  info  flow wall time {total:.0} s");
    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
