use rayon::prelude::*;
use serde_json::json;

use corerad::curvature::{axiom_suite, classical_aniso_curvature, nonlocal_curvature, CurvatureQuery};
use corerad::dislocation::dislocation_flow_preset;
use corerad::flow::{run_flow, Polyline, Trajectory};
use corerad::grid::GridSpec;
use corerad::kernels::{sigma_scale, KernelParams};
use corerad::perimeter::{joint_sweep, perimeter_sweep, SweepOptions, SweepResult};
use corerad::selftest::kernel_selftest;
use corerad::shapes::boundary_samples;

use crate::config::*;
use crate::error::CliError;
use crate::output::{num, opt, JobOutput, Table};

pub fn run_job(params: &Params) -> Result<JobOutput, CliError> {
    match params {
        Params::PerimeterSweep(p) => perimeter(p),
        Params::JointSweep(p) => joint(p),
        Params::CurvatureSweep(p) => curvature(p),
        Params::AxiomSuite(p) => axioms(p),
        Params::Flow(p) => flow(p),
        Params::DislocationPreset(p) => preset(p),
        Params::KernelSelftest(p) => selftest(p),
    }
}

fn sweep_tables(out: &mut JobOutput, res: &SweepResult) -> Result<(), CliError> {
    let mut t = Table::new(&["r", "s", "h", "value", "scaled_value", "tail_bound"])?;
    for row in &res.rows {
        t.row(&[num(row.r), num(row.s), num(row.h), num(row.value), num(row.scaled_value), num(row.tail_bound)])?;
    }
    out.add("sweep.csv", t.finish()?);
    let mut f = Table::new(&["slope", "intercept", "residual"])?;
    f.row(&[num(res.fit.slope), num(res.fit.intercept), num(res.fit.residual)])?;
    out.add("fit.csv", f.finish()?);
    Ok(())
}

fn perimeter(p: &PerimeterSweepParams) -> Result<JobOutput, CliError> {
    let opts = SweepOptions { coverage: p.coverage, mode: p.mode };
    let res = perimeter_sweep(&p.shape, p.s, &p.r_list, p.h_rule, &p.g, opts)?;
    let mut out = JobOutput::default();
    sweep_tables(&mut out, &res)?;
    out.summary = json!({ "fit": res.fit, "shape": p.shape });
    Ok(out)
}

fn joint(p: &JointSweepParams) -> Result<JobOutput, CliError> {
    let path = p.path.points();
    let r_start = p.r_start.unwrap_or(path[0].0);
    let res = joint_sweep(&p.shape, &path, p.h_rule, &p.g, r_start, p.coverage)?;
    let mut out = JobOutput::default();
    sweep_tables(&mut out, &res)?;
    out.summary = json!({ "fit": res.fit, "shape": p.shape, "r_start": r_start });
    Ok(out)
}

fn curvature(p: &CurvatureSweepParams) -> Result<JobOutput, CliError> {
    let d = p.shape.dim();
    let points: Vec<Vec<f64>> = match &p.points {
        Some(pts) => pts.clone(),
        None => boundary_samples(&p.shape, p.n_points)?.into_iter().map(|b| b.point).collect(),
    };
    // the local limit is only defined where the shape has a closed form
    let limits: Vec<Option<f64>> = points.iter().map(|x| classical_aniso_curvature(&p.g, &p.shape, x).ok()).collect();
    let mut header = vec!["r".to_string(), "s".into(), "point".into()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend(["value", "error_estimate", "scaled_value", "limit"].map(String::from));
    let mut t = Table::new(&header)?;
    for &r in &p.r_list {
        let kp = KernelParams::new(d, p.s, r)?;
        let sigma = sigma_scale(&kp)?;
        let vals: Vec<_> = points
            .par_iter()
            .map(|x| {
                let q = CurvatureQuery::shape(&p.shape, x, kp, p.g.clone());
                let q = match p.quad {
                    Some(quad) => q.with_quad(quad),
                    None => q,
                };
                nonlocal_curvature(&q)
            })
            .collect::<Result<_, _>>()?;
        for (i, (x, v)) in points.iter().zip(&vals).enumerate() {
            let mut row = vec![num(r), num(p.s), i.to_string()];
            row.extend(x.iter().map(|c| num(*c)));
            row.extend([num(v.value), num(v.error_estimate), num(v.value / sigma), opt(limits[i])]);
            t.row(&row)?;
        }
    }
    let mut out = JobOutput::default();
    out.add("curvature.csv", t.finish()?);
    out.summary = json!({ "points": points.len(), "radii": p.r_list.len(), "shape": p.shape });
    Ok(out)
}

fn axioms(p: &AxiomSuiteParams) -> Result<JobOutput, CliError> {
    let kp = KernelParams::new(p.d, p.s, p.r)?;
    let rep = axiom_suite(&kp, &p.g, p.seed)?;
    let mut t = Table::new(&["index", "axiom", "passed", "detail"])?;
    for (i, inst) in rep.instances.iter().enumerate() {
        t.row(&[i.to_string(), format!("{:?}", inst.axiom), inst.passed.to_string(), inst.detail.clone()])?;
    }
    let mut out = JobOutput::default();
    out.add("axioms.csv", t.finish()?);
    let (passed, total) = (rep.passed(), rep.instances.len());
    out.summary = json!({ "passed": passed, "total": total });
    if passed < total {
        out.failure = Some(format!("{} of {total} axiom instances failed", total - passed));
    }
    Ok(out)
}

fn contour_table(lines: &[Polyline]) -> Result<Vec<u8>, CliError> {
    let mut t = Table::new(&["line", "closed", "x", "y"])?;
    for (i, l) in lines.iter().enumerate() {
        for q in &l.points {
            t.row(&[i.to_string(), l.closed.to_string(), num(q[0]), num(q[1])])?;
        }
    }
    t.finish()
}

/// Radius table, one contour file per snapshot, and a trajectory manifest.
fn trajectory_files(out: &mut JobOutput, prefix: &str, traj: &Trajectory) -> Result<serde_json::Value, CliError> {
    let mut t = Table::new(&["t", "mean_radius", "min", "max"])?;
    for (time, st) in traj.times.iter().zip(&traj.radius_stats) {
        t.row(&[num(*time), opt(st.map(|s| s.mean)), opt(st.map(|s| s.min)), opt(st.map(|s| s.max))])?;
    }
    out.add(format!("{prefix}radius.csv"), t.finish()?);
    let mut snapshots = Vec::new();
    for (k, (time, lines)) in traj.times.iter().zip(&traj.contours).enumerate() {
        let name = format!("{prefix}contour-{k:04}.csv");
        out.add(name.clone(), contour_table(lines)?);
        snapshots.push(json!({ "t": time, "file": name }));
    }
    let meta = json!({
        "centre": traj.centre,
        "steps": traj.steps,
        "extinction_time": traj.extinction_time,
        "snapshots": snapshots,
    });
    out.add_json(format!("{prefix}trajectory.json"), &meta)?;
    Ok(meta)
}

fn flow(p: &FlowParams) -> Result<JobOutput, CliError> {
    let grid = GridSpec::covering(&p.grid.lo, &p.grid.hi, p.grid.h, p.grid.margin)?;
    let traj = run_flow(&p.shape, &grid, &p.flow)?;
    let mut out = JobOutput::default();
    trajectory_files(&mut out, "", &traj)?;
    let last = traj.radius_stats.last().copied().flatten();
    out.summary = json!({ "steps": traj.steps, "extinction_time": traj.extinction_time, "final_radius": last });
    Ok(out)
}

fn preset(p: &DislocationPresetParams) -> Result<JobOutput, CliError> {
    let rep = dislocation_flow_preset(&p.dislocation, &p.shape, &p.r_list, p.h_rule, p.t_end)?;
    let mut out = JobOutput::default();
    let mut t = Table::new(&["t", "hausdorff_to_oracle", "r"])?;
    for row in &rep.rows {
        t.row(&[num(rep.t_end), num(row.hausdorff), num(row.r)])?;
    }
    out.add("comparison.csv", t.finish()?);
    out.add("oracle.csv", contour_table(std::slice::from_ref(&rep.oracle))?);
    for (i, traj) in rep.trajectories.iter().enumerate() {
        trajectory_files(&mut out, &format!("r{i}-"), traj)?;
    }
    out.summary = json!({ "rows": rep.rows, "decreasing_in_r": rep.decreasing_in_r() });
    Ok(out)
}

fn selftest(p: &KernelSelftestParams) -> Result<JobOutput, CliError> {
    let rep = kernel_selftest(p.seed)?;
    let mut t = Table::new(&["check", "passed", "error", "tolerance"])?;
    for c in &rep.checks {
        t.row(&[c.name.clone(), c.passed.to_string(), num(c.error), num(c.tolerance)])?;
    }
    let mut out = JobOutput::default();
    out.add("selftest.csv", t.finish()?);
    let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    out.summary = json!({ "checks": rep.checks.len(), "failed": failed });
    if !failed.is_empty() {
        out.failure = Some(format!("kernel checks failed: {}", failed.join(", ")));
    }
    Ok(out)
}
