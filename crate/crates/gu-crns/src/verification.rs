//! Manufactured-solution verification: the exact trigonometric solution
//! family, its analytically derived source terms, L2 error norms, and the
//! convergence-rate sweeps. Also carries the stock initial data of the
//! physical experiments.
//!
//! The source terms are obtained by substituting the exact fields into the
//! transformed system
//!   eta_t + div(u eta) - mu1 lap(eta) - div(eta sigma)          = f_eta
//!   sigma_t + grad(u.sigma) - mu2 lap(sigma) + sigma - eta grad(eta) = f_sigma
//!   u_t + (u.grad)u - mu3 lap(u) + grad p + eta grad(eta)
//!       + (div sigma) sigma                                      = f_u
//! together with the scalar recovery equation
//!   c_t + u.sigma - mu2 div(sigma) + c - eta^2/2                 = f_c,
//! all with unit coefficients. Every derivative below is hand-derived and
//! cross-checked against central finite differences in the tests.

use crate::assembly;
use crate::scheme::{Forcing, InitialData, SchemeParams, Simulation, SolverChoice};
use crate::spaces::{CompositeVelocity, Field, SpaceKind, Spaces};
use crate::Result;
use std::f64::consts::PI;

/// Exact solution closures and the derived source terms, unit coefficients.
pub struct ManufacturedCase {
    pub eta: fn(f64, f64, f64) -> f64,
    pub c: fn(f64, f64, f64) -> f64,
    pub sigma: fn(f64, f64, f64) -> [f64; 2],
    pub u: fn(f64, f64, f64) -> [f64; 2],
    pub p: fn(f64, f64, f64) -> f64,
    pub f_eta: fn(f64, f64, f64) -> f64,
    pub f_sigma: fn(f64, f64, f64) -> [f64; 2],
    pub f_u: fn(f64, f64, f64) -> [f64; 2],
    pub f_c: fn(f64, f64, f64) -> f64,
}

pub fn exact_eta(x: f64, y: f64, t: f64) -> f64 {
    (2.0 * PI * x).cos() * (PI * y).cos() * t.sin()
}

pub fn exact_c(x: f64, y: f64, t: f64) -> f64 {
    (PI * x).cos() * (2.0 * PI * y).cos() * t.sin()
}

pub fn exact_sigma(x: f64, y: f64, t: f64) -> [f64; 2] {
    [
        -PI * (PI * x).sin() * (2.0 * PI * y).cos() * t.sin(),
        -2.0 * PI * (PI * x).cos() * (2.0 * PI * y).sin() * t.sin(),
    ]
}

pub fn exact_u(x: f64, y: f64, t: f64) -> [f64; 2] {
    [
        (PI * x).sin() * (PI * y).cos() * t.sin(),
        -(PI * x).cos() * (PI * y).sin() * t.sin(),
    ]
}

pub fn exact_p(x: f64, y: f64, t: f64) -> f64 {
    (PI * x).cos() * (PI * y).cos() * t.sin()
}

fn grad_eta(x: f64, y: f64, t: f64) -> [f64; 2] {
    [
        -2.0 * PI * (2.0 * PI * x).sin() * (PI * y).cos() * t.sin(),
        -PI * (2.0 * PI * x).cos() * (PI * y).sin() * t.sin(),
    ]
}

fn lap_eta(x: f64, y: f64, t: f64) -> f64 {
    -5.0 * PI * PI * exact_eta(x, y, t)
}

fn lap_c(x: f64, y: f64, t: f64) -> f64 {
    -5.0 * PI * PI * exact_c(x, y, t)
}

/// Jacobian of sigma: rows are components, columns derivatives.
fn grad_sigma(x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
    let s = t.sin();
    [
        [
            -PI * PI * (PI * x).cos() * (2.0 * PI * y).cos() * s,
            2.0 * PI * PI * (PI * x).sin() * (2.0 * PI * y).sin() * s,
        ],
        [
            2.0 * PI * PI * (PI * x).sin() * (2.0 * PI * y).sin() * s,
            -4.0 * PI * PI * (PI * x).cos() * (2.0 * PI * y).cos() * s,
        ],
    ]
}

fn grad_u(x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
    let s = t.sin();
    [
        [
            PI * (PI * x).cos() * (PI * y).cos() * s,
            -PI * (PI * x).sin() * (PI * y).sin() * s,
        ],
        [
            PI * (PI * x).sin() * (PI * y).sin() * s,
            -PI * (PI * x).cos() * (PI * y).cos() * s,
        ],
    ]
}

fn eta_t(x: f64, y: f64, t: f64) -> f64 {
    (2.0 * PI * x).cos() * (PI * y).cos() * t.cos()
}

fn c_t(x: f64, y: f64, t: f64) -> f64 {
    (PI * x).cos() * (2.0 * PI * y).cos() * t.cos()
}

fn sigma_t(x: f64, y: f64, t: f64) -> [f64; 2] {
    [
        -PI * (PI * x).sin() * (2.0 * PI * y).cos() * t.cos(),
        -2.0 * PI * (PI * x).cos() * (2.0 * PI * y).sin() * t.cos(),
    ]
}

fn u_t(x: f64, y: f64, t: f64) -> [f64; 2] {
    [
        (PI * x).sin() * (PI * y).cos() * t.cos(),
        -(PI * x).cos() * (PI * y).sin() * t.cos(),
    ]
}

pub fn forcing_sigma(x: f64, y: f64, t: f64) -> [f64; 2] {
    let u = exact_u(x, y, t);
    let sg = exact_sigma(x, y, t);
    let gu = grad_u(x, y, t);
    let gs = grad_sigma(x, y, t);
    let st = sigma_t(x, y, t);
    let e = exact_eta(x, y, t);
    let ge = grad_eta(x, y, t);
    // grad(u.sigma) by the product rule.
    let gx = gu[0][0] * sg[0] + u[0] * gs[0][0] + gu[1][0] * sg[1] + u[1] * gs[1][0];
    let gy = gu[0][1] * sg[0] + u[0] * gs[0][1] + gu[1][1] * sg[1] + u[1] * gs[1][1];
    // lap(sigma) = grad(lap c) = -5 pi^2 sigma for this solution.
    let lap_s = [-5.0 * PI * PI * sg[0], -5.0 * PI * PI * sg[1]];
    [
        st[0] + gx - lap_s[0] + sg[0] - e * ge[0],
        st[1] + gy - lap_s[1] + sg[1] - e * ge[1],
    ]
}

pub fn forcing_u(x: f64, y: f64, t: f64) -> [f64; 2] {
    let u = exact_u(x, y, t);
    let gu = grad_u(x, y, t);
    let ut = u_t(x, y, t);
    let e = exact_eta(x, y, t);
    let ge = grad_eta(x, y, t);
    let sg = exact_sigma(x, y, t);
    let div_sigma = lap_c(x, y, t);
    let s = t.sin();
    let lap_u = [
        -2.0 * PI * PI * (PI * x).sin() * (PI * y).cos() * s,
        2.0 * PI * PI * (PI * x).cos() * (PI * y).sin() * s,
    ];
    let gp = [
        -PI * (PI * x).sin() * (PI * y).cos() * s,
        -PI * (PI * x).cos() * (PI * y).sin() * s,
    ];
    [
        ut[0] + u[0] * gu[0][0] + u[1] * gu[0][1] - lap_u[0] + gp[0] + e * ge[0] + div_sigma * sg[0],
        ut[1] + u[0] * gu[1][0] + u[1] * gu[1][1] - lap_u[1] + gp[1] + e * ge[1] + div_sigma * sg[1],
    ]
}

pub fn forcing_c(x: f64, y: f64, t: f64) -> f64 {
    let u = exact_u(x, y, t);
    let sg = exact_sigma(x, y, t);
    let e = exact_eta(x, y, t);
    c_t(x, y, t) + u[0] * sg[0] + u[1] * sg[1] - lap_c(x, y, t) + exact_c(x, y, t) - 0.5 * e * e
}

/// Forcing for the density equation. With the divergence-free exact
/// velocity, div(u eta) = u.grad(eta), and div(eta sigma) splits into
/// grad(eta).sigma + eta lap(c).
pub fn forcing_eta(x: f64, y: f64, t: f64) -> f64 {
    let u = exact_u(x, y, t);
    let ge = grad_eta(x, y, t);
    let sg = exact_sigma(x, y, t);
    eta_t(x, y, t) + u[0] * ge[0] + u[1] * ge[1]
        - lap_eta(x, y, t)
        - (sg[0] * ge[0] + sg[1] * ge[1])
        - exact_eta(x, y, t) * lap_c(x, y, t)
}

/// The verification solution with unit model coefficients.
pub fn manufactured_case() -> ManufacturedCase {
    ManufacturedCase {
        eta: exact_eta,
        c: exact_c,
        sigma: exact_sigma,
        u: exact_u,
        p: exact_p,
        f_eta: forcing_eta,
        f_sigma: forcing_sigma,
        f_u: forcing_u,
        f_c: forcing_c,
    }
}

/// Scheme forcing hooks for the manufactured run.
pub fn manufactured_forcing() -> Forcing {
    Forcing {
        f_eta: forcing_eta,
        f_sigma: forcing_sigma,
        f_u: forcing_u,
        f_c: Some(forcing_c),
        dirichlet_u: exact_u,
    }
}

/// ||field - exact(., t)||_{L2} by quadrature.
pub fn l2_error_scalar(
    spaces: &Spaces,
    field: &Field,
    exact: impl Fn(f64, f64) -> f64,
    mean_shift: bool,
) -> f64 {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let (mut mean_f, mut mean_e) = (0.0, 0.0);
    if mean_shift {
        let area = mesh.total_area();
        mean_f = field.integral_p1(mesh) / area;
        let mut ie = 0.0;
        for elem in 0..mesh.tri_count() {
            let a = mesh.elem_geom[elem].area;
            for (q, bary) in rule.points.iter().enumerate() {
                let p = mesh.point(elem, *bary);
                ie += a * rule.weights[q] * exact(p[0], p[1]);
            }
        }
        mean_e = ie / area;
    }
    let mut e2 = 0.0;
    for elem in 0..mesh.tri_count() {
        let a = mesh.elem_geom[elem].area;
        for (q, bary) in rule.points.iter().enumerate() {
            let p = mesh.point(elem, *bary);
            let d = (field.eval_scalar(mesh, elem, *bary) - mean_f) - (exact(p[0], p[1]) - mean_e);
            e2 += a * rule.weights[q] * d * d;
        }
    }
    e2.sqrt()
}

pub fn l2_error_vector(spaces: &Spaces, field: &Field, exact: impl Fn(f64, f64) -> [f64; 2]) -> f64 {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let mut e2 = 0.0;
    for elem in 0..mesh.tri_count() {
        let a = mesh.elem_geom[elem].area;
        for (q, bary) in rule.points.iter().enumerate() {
            let p = mesh.point(elem, *bary);
            let v = field.eval_vector(mesh, elem, *bary);
            let ev = exact(p[0], p[1]);
            let (dx, dy) = (v[0] - ev[0], v[1] - ev[1]);
            e2 += a * rule.weights[q] * (dx * dx + dy * dy);
        }
    }
    e2.sqrt()
}

pub fn l2_error_composite(
    spaces: &Spaces,
    u: &CompositeVelocity,
    exact: impl Fn(f64, f64) -> [f64; 2],
) -> f64 {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let mut e2 = 0.0;
    for elem in 0..mesh.tri_count() {
        let a = mesh.elem_geom[elem].area;
        for (q, bary) in rule.points.iter().enumerate() {
            let p = mesh.point(elem, *bary);
            let v = u.eval(mesh, elem, *bary);
            let ev = exact(p[0], p[1]);
            let (dx, dy) = (v[0] - ev[0], v[1] - ev[1]);
            e2 += a * rule.weights[q] * (dx * dx + dy * dy);
        }
    }
    e2.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Time,
    Space,
}

/// One (level, variable) row of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub var: &'static str,
    pub error: f64,
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ErrorReport {
    pub rows: Vec<SweepRow>,
    /// Worst normalized discrete divergence residual seen on any step of any
    /// level of the sweep.
    pub max_div_residual: f64,
}

impl ErrorReport {
    /// Observed rate rows for one variable, in level order.
    pub fn rates_for(&self, var: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.var == var)
            .filter_map(|r| r.rate)
            .collect()
    }

    pub fn errors_for(&self, var: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.var == var)
            .map(|r| r.error)
            .collect()
    }
}

pub const SWEEP_VARS: [&str; 5] = ["u", "p", "eta", "c", "sigma"];

/// Final-time errors of one manufactured run.
pub struct RunErrors {
    pub u: f64,
    pub p: f64,
    pub eta: f64,
    pub c: f64,
    pub sigma: f64,
    pub max_div_residual: f64,
}

/// Run the first-order scheme (or the configured order) on the manufactured
/// problem and report final-time errors.
pub fn manufactured_run(nx: usize, tau: f64, t_final: f64, order: usize) -> Result<RunErrors> {
    let mesh = crate::mesh::build_rect_mesh(1.0, 1.0, nx, nx)?;
    let spaces = Spaces::build(mesh);
    let mut sim = Simulation::new(
        spaces,
        SchemeParams {
            tau,
            mu: [1.0; 3],
            order,
            solver: SolverChoice::DirectLu,
        },
        Some(manufactured_forcing()),
    )?;
    let case = manufactured_case();
    let data = InitialData {
        eta0: &|x, y| (case.eta)(x, y, 0.0),
        sigma0: &|x, y| (case.sigma)(x, y, 0.0),
        u0: &|x, y| (case.u)(x, y, 0.0),
        c0: Some(&|x, y| (case.c)(x, y, 0.0)),
        p0: Some(&|x, y| (case.p)(x, y, 0.0)),
    };
    let mut state = sim.init_state(&data)?;
    let n_steps = (t_final / tau).round().max(1.0) as usize;
    let mut max_div = 0.0f64;
    for _ in 0..n_steps {
        state = sim.step(&state)?;
        max_div = max_div.max(sim.div_residual(&state));
    }
    let t = state.t;
    Ok(RunErrors {
        u: l2_error_composite(&sim.spaces, &state.u, |x, y| exact_u(x, y, t)),
        p: l2_error_scalar(&sim.spaces, &state.p, |x, y| exact_p(x, y, t), true),
        eta: l2_error_scalar(&sim.spaces, &state.eta, |x, y| exact_eta(x, y, t), false),
        c: l2_error_scalar(
            &sim.spaces,
            state.c.as_ref().expect("c recovered"),
            |x, y| exact_c(x, y, t),
            false,
        ),
        sigma: l2_error_vector(&sim.spaces, &state.sigma, |x, y| exact_sigma(x, y, t)),
        max_div_residual: max_div,
    })
}

/// Sweep a refinement axis and tabulate errors and pairwise observed rates.
pub fn convergence_sweep(
    axis: SweepAxis,
    levels: &[(usize, f64)],
    t_final: f64,
    order: usize,
) -> Result<ErrorReport> {
    let mut report = ErrorReport::default();
    let mut prev: Option<[f64; 5]> = None;
    for (level, &(nx, tau)) in levels.iter().enumerate() {
        let errs = manufactured_run(nx, tau, t_final, order)?;
        report.max_div_residual = report.max_div_residual.max(errs.max_div_residual);
        let vals = [errs.u, errs.p, errs.eta, errs.c, errs.sigma];
        let h = (2.0f64).sqrt() / nx as f64;
        for (k, var) in SWEEP_VARS.iter().enumerate() {
            let rate = prev.map(|pv| (pv[k] / vals[k]).log2());
            report.rows.push(SweepRow {
                axis,
                level,
                h,
                tau,
                var,
                error: vals[k],
                rate,
            });
        }
        prev = Some(vals);
    }
    Ok(report)
}

/// The stock initial-data sets of the physical experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StockCase {
    /// Trigonometric data on the unit square for the energy-decay test.
    Stability,
    /// A density dip colliding with a concentration bump near one corner.
    Repulsion,
    /// Three density blobs over a central concentration bump on [0,2]x[0,1].
    Plume,
}

pub struct StockData {
    pub eta0: fn(f64, f64) -> f64,
    pub c0: fn(f64, f64) -> f64,
    pub sigma0: fn(f64, f64) -> [f64; 2],
    pub u0: fn(f64, f64) -> [f64; 2],
    pub p0: fn(f64, f64) -> f64,
    pub domain: (f64, f64),
}

pub fn stock_initial_data(case: StockCase) -> StockData {
    match case {
        StockCase::Stability => StockData {
            eta0: |x, y| (2.0 * PI * x).cos() + (2.0 * PI * y).sin() + 3.0,
            c0: |x, y| (2.0 * PI * x).cos() + (2.0 * PI * y).sin() - 2.0 * PI * y + 9.0,
            sigma0: |x, y| {
                [
                    -2.0 * PI * (2.0 * PI * x).sin(),
                    2.0 * PI * ((2.0 * PI * y).cos() - 1.0),
                ]
            },
            u0: |x, y| {
                [
                    (2.0 * PI * y).sin() * (-(2.0 * PI * x + PI).cos() - 1.0),
                    (2.0 * PI * x).sin() * ((2.0 * PI * y + PI).cos() + 1.0),
                ]
            },
            p0: |x, y| (2.0 * PI * x).cos() + (2.0 * PI * y).sin(),
            domain: (1.0, 1.0),
        },
        StockCase::Repulsion => StockData {
            eta0: |x, y| {
                -10.0 * x * y * (2.0 - x) * (2.0 - y)
                    * (-10.0 * (y - 1.0) * (y - 1.0) - 10.0 * (x - 1.0) * (x - 1.0)).exp()
                    + 10.0001
            },
            c0: |x, y| {
                200.0 * x * y * (2.0 - x) * (2.0 - y)
                    * (-30.0 * (y - 1.0) * (y - 1.0) - 30.0 * (x - 1.0) * (x - 1.0)).exp()
                    + 0.0001
            },
            sigma0: |x, y| {
                let e = (-30.0 * (y - 1.0) * (y - 1.0) - 30.0 * (x - 1.0) * (x - 1.0)).exp();
                let g = x * y * (2.0 - x) * (2.0 - y);
                [
                    200.0 * e * (y * (2.0 - y) * (2.0 - 2.0 * x) - 60.0 * (x - 1.0) * g),
                    200.0 * e * (x * (2.0 - x) * (2.0 - 2.0 * y) - 60.0 * (y - 1.0) * g),
                ]
            },
            u0: |_, _| [0.0, 0.0],
            p0: |_, _| 0.0,
            domain: (1.0, 1.0),
        },
        StockCase::Plume => StockData {
            eta0: |x, y| {
                let bump = |cx: f64| (-8.0 * (x - cx) * (x - cx) - 8.0 * (y - 1.0) * (y - 1.0)).exp();
                70.0 * (bump(0.4) + bump(0.7) + bump(1.5))
            },
            c0: |x, y| 30.0 * (-4.0 * (x - 1.0) * (x - 1.0) - 4.0 * (y - 0.5) * (y - 0.5)).exp(),
            sigma0: |x, y| {
                let c = 30.0 * (-4.0 * (x - 1.0) * (x - 1.0) - 4.0 * (y - 0.5) * (y - 0.5)).exp();
                [-8.0 * (x - 1.0) * c, -8.0 * (y - 0.5) * c]
            },
            u0: |_, _| [0.0, 0.0],
            p0: |_, _| 0.0,
            domain: (2.0, 1.0),
        },
    }
}

/// Richardson self-convergence of the second-order scheme: run at tau,
/// tau/2, tau/4 on one mesh and compare successive solution differences in
/// the combined (eta, sigma, u) L2 norm.
pub fn gu2_self_convergence(nx: usize, tau: f64, t_final: f64) -> Result<f64> {
    let run = |tau: f64| -> Result<(Field, Field, CompositeVelocity, Spaces)> {
        let mesh = crate::mesh::build_rect_mesh(1.0, 1.0, nx, nx)?;
        let spaces = Spaces::build(mesh);
        let mut sim = Simulation::new(
            spaces,
            SchemeParams {
                tau,
                mu: [1.0; 3],
                order: 2,
                solver: SolverChoice::DirectLu,
            },
            Some(manufactured_forcing()),
        )?;
        let case = manufactured_case();
        let data = InitialData {
            eta0: &|x, y| (case.eta)(x, y, 0.0),
            sigma0: &|x, y| (case.sigma)(x, y, 0.0),
            u0: &|x, y| (case.u)(x, y, 0.0),
            c0: None,
            p0: None,
        };
        let mut state = sim.init_state(&data)?;
        let n = (t_final / tau).round() as usize;
        for _ in 0..n {
            state = sim.step(&state)?;
        }
        Ok((state.eta, state.sigma, state.u, sim.spaces))
    };
    let (eta_a, sig_a, u_a, spaces) = run(tau)?;
    let (eta_b, sig_b, u_b, _) = run(tau / 2.0)?;
    let (eta_c, sig_c, u_c, _) = run(tau / 4.0)?;

    let mass_q = assembly::assemble_mass(&spaces, SpaceKind::ScalarP1);
    let mass_x = assembly::assemble_mass(&spaces, SpaceKind::VectorP1);
    let diff_norm = |ea: &Field, eb: &Field, sa: &Field, sb: &Field, ua: &CompositeVelocity, ub: &CompositeVelocity| -> f64 {
        let de: Vec<f64> = ea.coeffs.iter().zip(&eb.coeffs).map(|(a, b)| a - b).collect();
        let ds: Vec<f64> = sa.coeffs.iter().zip(&sb.coeffs).map(|(a, b)| a - b).collect();
        let e2: f64 = de.iter().zip(mass_q.matvec(&de)).map(|(a, b)| a * b).sum();
        let s2: f64 = ds.iter().zip(mass_x.matvec(&ds)).map(|(a, b)| a * b).sum();
        // Composite velocities difference, evaluated pointwise.
        let mesh = &spaces.mesh;
        let rule = &spaces.rule;
        let mut u2 = 0.0;
        for elem in 0..mesh.tri_count() {
            let area = mesh.elem_geom[elem].area;
            for (q, bary) in rule.points.iter().enumerate() {
                let va = ua.eval(mesh, elem, *bary);
                let vb = ub.eval(mesh, elem, *bary);
                let (dx, dy) = (va[0] - vb[0], va[1] - vb[1]);
                u2 += area * rule.weights[q] * (dx * dx + dy * dy);
            }
        }
        (e2 + s2 + u2).sqrt()
    };
    let d1 = diff_norm(&eta_a, &eta_b, &sig_a, &sig_b, &u_a, &u_b);
    let d2 = diff_norm(&eta_b, &eta_c, &sig_b, &sig_c, &u_b, &u_c);
    Ok((d1 / d2).log2())
}
