//! Experiment drivers: physical runs with energy/snapshot output and
//! manufactured convergence sweeps with error tables.

use super::config::RunConfig;
use super::vtk::write_vtk;
use crate::mesh::{build_rect_mesh, TriMesh};
use crate::scheme::{
    Forcing, InitialData, SchemeParams, SchemeState, Simulation, SolverChoice,
};
use crate::spaces::Spaces;
use crate::verification::{
    convergence_sweep, manufactured_forcing, stock_initial_data, ErrorReport, StockCase,
    SweepAxis,
};
use crate::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// What a physical run leaves behind, for both file output and the
/// verification harness.
pub struct RunArtifacts {
    /// (step, time, E3) for every level including the initial one.
    pub energy: Vec<(usize, f64, f64)>,
    /// max over steps of the normalized discrete divergence residual.
    pub max_div_residual: f64,
    /// max relative drift of the density integral.
    pub mass_drift: f64,
    /// Snapshot steps that were written to disk.
    pub snapshots: Vec<(usize, PathBuf)>,
    /// Vertex location of the density maximum per recorded step.
    pub eta_argmax: Vec<(usize, [f64; 2])>,
    /// Vertex location of the concentration maximum per recorded step.
    pub c_argmax: Vec<(usize, [f64; 2])>,
    /// (step, ||u||^2) kinetic history.
    pub kinetic: Vec<(usize, f64)>,
    /// Whether E3 was non-increasing at every step within tolerance.
    pub energy_monotone: bool,
}

fn solver_choice(cfg: &RunConfig) -> SolverChoice {
    if cfg.solver == "gmres" {
        SolverChoice::Gmres {
            restart: 50,
            tol: cfg.tol,
        }
    } else {
        SolverChoice::DirectLu
    }
}

fn stock_case(name: &str) -> Result<StockCase> {
    match name {
        "stability" => Ok(StockCase::Stability),
        "repulsion" => Ok(StockCase::Repulsion),
        "plume" => Ok(StockCase::Plume),
        other => Err(Error::Config(format!("unknown initial data '{other}'"))),
    }
}

fn argmax_vertex(mesh: &TriMesh, nodal: &[f64]) -> [f64; 2] {
    let mut best = 0;
    for (i, v) in nodal.iter().enumerate() {
        if *v > nodal[best] {
            best = i;
        }
    }
    mesh.vertices[best]
}

/// Vertex-sampled velocity for visualization: the continuous part at the
/// vertex plus the area-weighted average of the elementwise gauge gradient.
/// Quantitative outputs use the exact composite evaluation instead.
fn vertex_velocity(spaces: &Spaces, state: &SchemeState) -> Vec<[f64; 2]> {
    let mesh = &spaces.mesh;
    let nv = mesh.vertex_count();
    let mut out = vec![[0.0f64; 2]; nv];
    let mut weight = vec![0.0f64; nv];
    for elem in 0..mesh.tri_count() {
        let g = state.u.gauge.grad_p1(mesh, elem);
        let area = mesh.elem_geom[elem].area;
        for &v in &mesh.triangles[elem] {
            out[v][0] += area * g[0];
            out[v][1] += area * g[1];
            weight[v] += area;
        }
    }
    for v in 0..nv {
        out[v][0] = out[v][0] / weight[v] + state.u_hat.coeffs[2 * v];
        out[v][1] = out[v][1] / weight[v] + state.u_hat.coeffs[2 * v + 1];
    }
    out
}

fn write_snapshot(spaces: &Spaces, state: &SchemeState, path: &Path) -> Result<()> {
    let nv = spaces.mesh.vertex_count();
    let zeros = vec![0.0; nv];
    let c_vals: &[f64] = match &state.c {
        Some(c) => &c.coeffs,
        None => &zeros,
    };
    let u_vals = vertex_velocity(spaces, state);
    write_vtk(
        &spaces.mesh,
        &[
            ("eta", &state.eta.coeffs[..nv]),
            ("c", c_vals),
            ("p", &state.p.coeffs),
            ("s", &state.s.coeffs),
        ],
        &[("u", &u_vals)],
        path,
    )
}

/// Time-step a physical (unforced or manufactured) configuration, recording
/// energies and invariants and writing snapshots at the configured cadence.
pub fn run_physical(cfg: &RunConfig, forcing: Option<Forcing>, out: Option<&Path>) -> Result<RunArtifacts> {
    let mesh = build_rect_mesh(cfg.lx, cfg.ly, cfg.nx, cfg.ny)?;
    let spaces = Spaces::build(mesh);
    let mut sim = Simulation::new(
        spaces,
        SchemeParams {
            tau: cfg.tau,
            mu: cfg.mu,
            order: cfg.order,
            solver: solver_choice(cfg),
        },
        forcing,
    )?;
    let stock = stock_initial_data(stock_case(&cfg.initial)?);
    let data = InitialData {
        eta0: &stock.eta0,
        sigma0: &stock.sigma0,
        u0: &stock.u0,
        c0: Some(&stock.c0),
        p0: Some(&stock.p0),
    };
    let mut state = sim.init_state(&data)?;

    let n_steps = (cfg.t_final / cfg.tau).ceil().max(1.0) as usize;
    let e0 = sim.energy_e3(&state);
    let m0 = sim.eta_mass(&state);
    let mut artifacts = RunArtifacts {
        energy: vec![(0, 0.0, e0)],
        max_div_residual: 0.0,
        mass_drift: 0.0,
        snapshots: Vec::new(),
        eta_argmax: Vec::new(),
        c_argmax: Vec::new(),
        kinetic: vec![(0, state.u.norm_sq(&sim.spaces.mesh, &sim.spaces.rule))],
        energy_monotone: true,
    };
    let mut prev_energy = e0;
    let unforced = sim.forcing.is_none();
    for k in 1..=n_steps {
        state = sim.step(&state)?;
        let e = sim.energy_e3(&state);
        if unforced && e > prev_energy + 1e-10 * e0 {
            artifacts.energy_monotone = false;
        }
        prev_energy = e;
        artifacts.energy.push((k, state.t, e));
        artifacts.max_div_residual = artifacts.max_div_residual.max(sim.div_residual(&state));
        let m = sim.eta_mass(&state);
        artifacts.mass_drift = artifacts
            .mass_drift
            .max((m - m0).abs() / m0.abs().max(1e-300));
        artifacts
            .kinetic
            .push((k, state.u.norm_sq(&sim.spaces.mesh, &sim.spaces.rule)));

        let record = k == 1 || k == n_steps || k % cfg.cadence == 0;
        if record {
            artifacts
                .eta_argmax
                .push((k, argmax_vertex(&sim.spaces.mesh, &state.eta.coeffs)));
            if let Some(c) = &state.c {
                artifacts
                    .c_argmax
                    .push((k, argmax_vertex(&sim.spaces.mesh, &c.coeffs)));
            }
            if let Some(dir) = out {
                let path = dir.join(format!("fields_{k:06}.vtk"));
                write_snapshot(&sim.spaces, &state, &path)?;
                artifacts.snapshots.push((k, path));
            }
        }
    }
    Ok(artifacts)
}

fn write_energy_csv(dir: &Path, rows: &[(usize, f64, f64)]) -> Result<()> {
    let path = dir.join("energy.csv");
    let mut text = String::from("step,time,E3\n");
    for (step, time, e3) in rows {
        text.push_str(&format!("{step},{},{}\n", fmt(*time), fmt(*e3)));
    }
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
}

fn write_errors_csv(dir: &Path, report: &ErrorReport) -> Result<()> {
    let path = dir.join("errors.csv");
    let mut text = String::from("axis,level,h,tau,var,error,rate\n");
    for row in &report.rows {
        let axis = match row.axis {
            SweepAxis::Time => "time",
            SweepAxis::Space => "space",
        };
        let rate = row.rate.map(fmt).unwrap_or_default();
        text.push_str(&format!(
            "{axis},{},{},{},{},{},{rate}\n",
            row.level,
            fmt(row.h),
            fmt(row.tau),
            row.var,
            fmt(row.error)
        ));
    }
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
}

/// Run the configured experiment and leave its artifacts in the output
/// directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    match cfg.experiment.as_str() {
        "converge-time" => {
            let levels: Vec<(usize, f64)> = (0..4).map(|k| (cfg.nx, cfg.tau / 2f64.powi(k))).collect();
            let report = convergence_sweep(SweepAxis::Time, &levels, cfg.t_final, cfg.order)?;
            write_errors_csv(&cfg.out_dir, &report)?;
            print_report(&report);
        }
        "converge-space" => {
            let levels: Vec<(usize, f64)> = (0..4).map(|k| (cfg.nx << k, cfg.tau)).collect();
            let report = convergence_sweep(SweepAxis::Space, &levels, cfg.t_final, cfg.order)?;
            write_errors_csv(&cfg.out_dir, &report)?;
            print_report(&report);
        }
        "stability" | "repulsion" | "plume" | "single-run" => {
            let artifacts = run_physical(cfg, None, Some(&cfg.out_dir))?;
            write_energy_csv(&cfg.out_dir, &artifacts.energy)?;
            let last = artifacts.energy.last().expect("at least one row");
            println!(
                "{}: {} steps to t = {}, E3 {} -> {}, monotone: {}, max div residual {:.2e}",
                cfg.experiment,
                artifacts.energy.len() - 1,
                last.1,
                fmt(artifacts.energy[0].2),
                fmt(last.2),
                artifacts.energy_monotone,
                artifacts.max_div_residual,
            );
        }
        other => {
            return Err(Error::Config(format!("unknown experiment '{other}'")));
        }
    }
    Ok(())
}

/// Convergence sweep wrapper used by the verification binary path: run with
/// manufactured forcing regardless of the configured initial data.
pub fn run_manufactured(cfg: &RunConfig) -> Result<RunArtifacts> {
    run_physical(cfg, Some(manufactured_forcing()), None)
}

fn print_report(report: &ErrorReport) {
    let mut last_var = "";
    for row in &report.rows {
        if row.var != last_var {
            println!("-- {}", row.var);
            last_var = row.var;
        }
        let rate = row
            .rate
            .map(|r| format!("{r:.2}"))
            .unwrap_or_else(|| "   -".into());
        println!(
            "   level {}  h = {:.5}  tau = {:.5}  error = {:.6e}  rate = {rate}",
            row.level, row.h, row.tau, row.error
        );
    }
}
