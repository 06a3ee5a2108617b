//! Time-stepping drivers.
//!
//! One step of the first-order scheme:
//! 1. solve the coupled linear system for the new density, chemical
//!    gradient and intermediate velocity (all three equations implicit in
//!    the new unknowns, previous-level fields frozen in the coefficients);
//! 2. solve a pressure-space Poisson problem for the gauge potential from
//!    the divergence of the intermediate velocity;
//! 3. update the Uzawa accumulator by the projected divergence;
//! 4. form the composite end-of-step velocity (intermediate plus gauge
//!    gradient), which is divergence-free against every pressure test
//!    function;
//! 5. recover the pressure algebraically from the accumulator and gauge.
//!
//! The second-order variant replaces backward Euler with BDF2, freezes the
//! coefficients at their extrapolated values, carries the previous pressure
//! in the momentum right-hand side, and updates the gauge incrementally.
//! Its first step is bootstrapped with the first-order scheme, after which
//! the gauge is re-seeded from the first pressure and the accumulator is
//! reset to zero.
//!
//! No artificial pressure boundary condition appears anywhere and no
//! initial pressure value is required.

use crate::assembly::{
    self, sample_composite, sample_scalar, sample_vector, Step1Coeffs, Step1Rhs, Step1Workspace,
};
use crate::sparse::{gmres_solve, CsrMatrix, LuFactors};
use crate::spaces::{
    essential_values, l2_project_scalar, l2_project_vector, CompositeVelocity, Field, SpaceKind,
    Spaces,
};
use crate::{Error, Result};

/// Linear solver used for the coupled step-1 system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverChoice {
    DirectLu,
    /// Restarted GMRES with Jacobi preconditioning; opt-in.
    Gmres { restart: usize, tol: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct SchemeParams {
    pub tau: f64,
    pub mu: [f64; 3],
    pub order: usize,
    pub solver: SolverChoice,
}

/// Source terms and velocity boundary data for manufactured runs. Physical
/// runs carry no forcing and homogeneous boundary values.
#[derive(Clone, Copy)]
pub struct Forcing {
    pub f_eta: fn(f64, f64, f64) -> f64,
    pub f_sigma: fn(f64, f64, f64) -> [f64; 2],
    pub f_u: fn(f64, f64, f64) -> [f64; 2],
    pub f_c: Option<fn(f64, f64, f64) -> f64>,
    /// Velocity trace on the boundary at a given time.
    pub dirichlet_u: fn(f64, f64, f64) -> [f64; 2],
}

/// Previous time level kept by the second-order scheme.
#[derive(Clone)]
pub struct PrevLevel {
    pub eta: Field,
    pub sigma: Field,
    pub u: CompositeVelocity,
}

/// All fields at one time level.
#[derive(Clone)]
pub struct SchemeState {
    pub step: usize,
    pub t: f64,
    pub eta: Field,
    pub sigma: Field,
    pub u_hat: Field,
    pub rho: Field,
    pub s: Field,
    pub p: Field,
    pub u: CompositeVelocity,
    pub c: Option<Field>,
    pub prev: Option<Box<PrevLevel>>,
}

/// Initial data closures. The gradient field is expected to be the analytic
/// gradient of the initial concentration.
pub struct InitialData<'a> {
    pub eta0: &'a dyn Fn(f64, f64) -> f64,
    pub sigma0: &'a dyn Fn(f64, f64) -> [f64; 2],
    pub u0: &'a dyn Fn(f64, f64) -> [f64; 2],
    pub c0: Option<&'a dyn Fn(f64, f64) -> f64>,
    pub p0: Option<&'a dyn Fn(f64, f64) -> f64>,
}

/// Owns the discretization, the factorizations that stay fixed over a run,
/// and the step-1 workspaces.
pub struct Simulation {
    pub spaces: Spaces,
    pub params: SchemeParams,
    pub forcing: Option<Forcing>,
    ws1: Step1Workspace,
    ws2: Option<Step1Workspace>,
    mass_q: CsrMatrix,
    mass_x: CsrMatrix,
    stiff_m: CsrMatrix,
    bordered: CsrMatrix,
    bordered_lu: LuFactors,
    mass_m_lu: LuFactors,
    stiff_q: CsrMatrix,
}

impl Simulation {
    pub fn new(
        spaces: Spaces,
        params: SchemeParams,
        forcing: Option<Forcing>,
    ) -> Result<Simulation> {
        if !(params.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time step must be positive, got {}",
                params.tau
            )));
        }
        if params.mu.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "coefficients must be positive, got {:?}",
                params.mu
            )));
        }
        if params.order != 1 && params.order != 2 {
            return Err(Error::InvalidArgument(format!(
                "scheme order must be 1 or 2, got {}",
                params.order
            )));
        }
        let tau = params.tau;
        let ws1 = Step1Workspace::new(&spaces, 1.0 / tau, params.mu);
        let ws2 = (params.order == 2).then(|| Step1Workspace::new(&spaces, 1.5 / tau, params.mu));
        let mass_q = assembly::assemble_mass(&spaces, SpaceKind::ScalarP1);
        let mass_x = assembly::assemble_mass(&spaces, SpaceKind::VectorP1);
        let stiff_m = assembly::assemble_stiffness(&spaces, SpaceKind::PressureP1);
        let bordered = assembly::bordered_pressure_poisson(&spaces);
        let bordered_lu = LuFactors::factor(&bordered)?;
        let mass_m_lu = LuFactors::factor(&mass_q)?;
        let stiff_q = assembly::assemble_stiffness(&spaces, SpaceKind::ScalarP1);
        Ok(Simulation {
            spaces,
            params,
            forcing,
            ws1,
            ws2,
            mass_q,
            mass_x,
            stiff_m,
            bordered,
            bordered_lu,
            mass_m_lu,
            stiff_q,
        })
    }

    /// Project the initial data; the accumulator and gauge start at zero, so
    /// the initial composite velocity is the projected field itself.
    pub fn init_state(&self, data: &InitialData) -> Result<SchemeState> {
        let s = &self.spaces;
        let eta = l2_project_scalar(s, SpaceKind::ScalarP1, data.eta0)?;
        let sigma = l2_project_vector(s, SpaceKind::VectorP1, data.sigma0)?;
        let u_hat = l2_project_vector(s, SpaceKind::MiniVelocity, data.u0)?;
        let rho = Field::zeros(&s.m);
        let s_acc = Field::zeros(&s.m);
        let p = match data.p0 {
            Some(p0) => {
                let mut f = l2_project_scalar(s, SpaceKind::PressureP1, p0)?;
                let mean = f.integral_p1(&s.mesh) / s.mesh.total_area();
                for c in &mut f.coeffs {
                    *c -= mean;
                }
                f
            }
            None => Field::zeros(&s.m),
        };
        let c = match data.c0 {
            Some(c0) => Some(l2_project_scalar(s, SpaceKind::ScalarP1, c0)?),
            None => None,
        };
        let u = CompositeVelocity {
            hat: u_hat.clone(),
            gauge: rho.clone(),
        };
        Ok(SchemeState {
            step: 0,
            t: 0.0,
            eta,
            sigma,
            u_hat,
            rho,
            s: s_acc,
            p,
            u,
            c,
            prev: None,
        })
    }

    /// Advance one step, dispatching on the configured order. The first step
    /// of a second-order run is bootstrapped by the first-order scheme.
    pub fn step(&mut self, state: &SchemeState) -> Result<SchemeState> {
        if self.params.order == 2 {
            if state.prev.is_none() {
                self.bootstrap_gu2(state)
            } else {
                self.gu2_step(state)
            }
        } else {
            self.gu1_step(state)
        }
    }

    fn constraints_at(&self, t: f64) -> Vec<(usize, f64)> {
        let layout = assembly::BlockLayout::of(&self.spaces);
        let mut constraints: Vec<(usize, f64)> =
            essential_values(&self.spaces, SpaceKind::VectorP1, |_, _| [0.0, 0.0])
                .into_iter()
                .map(|(d, v)| (layout.sigma_off() + d, v))
                .collect();
        let trace = match &self.forcing {
            Some(f) => {
                let g = f.dirichlet_u;
                essential_values(&self.spaces, SpaceKind::MiniVelocity, move |x, y| g(x, y, t))
            }
            None => essential_values(&self.spaces, SpaceKind::MiniVelocity, |_, _| [0.0, 0.0]),
        };
        constraints.extend(trace.into_iter().map(|(d, v)| (layout.u_off() + d, v)));
        constraints
    }

    fn solve_step1(&mut self, order: usize, rhs: Vec<f64>) -> Result<Vec<f64>> {
        let ws = if order == 2 {
            self.ws2.as_ref().expect("order-2 workspace")
        } else {
            &self.ws1
        };
        match self.params.solver {
            SolverChoice::DirectLu => {
                let lu = LuFactors::factor(ws.matrix())?;
                lu.solve_checked(ws.matrix(), &rhs)
            }
            SolverChoice::Gmres { restart, tol } => {
                let n = rhs.len();
                gmres_solve(ws.matrix(), &rhs, tol, restart, 10 * n)
            }
        }
    }

    /// One step of the first-order scheme.
    pub fn gu1_step(&mut self, state: &SchemeState) -> Result<SchemeState> {
        let tau = self.params.tau;
        let mu = self.params.mu;
        let t_next = state.t + tau;
        let nq = self.spaces.rule.points.len();

        let eta_n = sample_scalar(&self.spaces, &state.eta);
        let sigma_n = sample_vector(&self.spaces, &state.sigma);
        let u_n = sample_composite(&self.spaces, &state.u);
        let s_n = sample_scalar(&self.spaces, &state.s);

        // Time terms.
        let mut rhs_eta = self.mass_q.matvec(&state.eta.coeffs);
        scale(&mut rhs_eta, 1.0 / tau);
        let mut rhs_sigma = self.mass_x.matvec(&state.sigma.coeffs);
        scale(&mut rhs_sigma, 1.0 / tau);
        let mut rhs_u = assembly::load_vector_eval(&self.spaces, SpaceKind::MiniVelocity, |e, q, _, _| {
            u_n.0[e * nq + q]
        });
        scale(&mut rhs_u, 1.0 / tau);
        // Accumulator term on the momentum right-hand side.
        let s_load = assembly::load_div_velocity(&self.spaces, &s_n);
        for (r, d) in rhs_u.iter_mut().zip(&s_load) {
            *r += mu[2] * d;
        }
        if let Some(f) = &self.forcing {
            let (fe, fs, fu) = (f.f_eta, f.f_sigma, f.f_u);
            add_assign(
                &mut rhs_eta,
                &assembly::load_scalar(&self.spaces, SpaceKind::ScalarP1, &|x, y| fe(x, y, t_next)),
            );
            add_assign(
                &mut rhs_sigma,
                &assembly::load_vector(&self.spaces, SpaceKind::VectorP1, &|x, y| fs(x, y, t_next)),
            );
            add_assign(
                &mut rhs_u,
                &assembly::load_vector(&self.spaces, SpaceKind::MiniVelocity, &|x, y| {
                    fu(x, y, t_next)
                }),
            );
        }

        let constraints = self.constraints_at(t_next);
        let coeffs = Step1Coeffs {
            time_factor: 1.0 / tau,
            mu,
            eta_star: &eta_n,
            sigma_star: &sigma_n,
            u_conv: &u_n,
        };
        let rhs = self.ws1.assemble_in_place(
            &self.spaces,
            &coeffs,
            Step1Rhs {
                eta: rhs_eta,
                sigma: rhs_sigma,
                u: rhs_u,
            },
            &constraints,
        );
        let sol = self
            .solve_step1(1, rhs)
            .map_err(|e| step_context(e, state.step + 1))?;
        self.finish_step(state, sol, t_next, 1)
    }

    /// One step of the second-order scheme; `state.prev` must be populated.
    pub fn gu2_step(&mut self, state: &SchemeState) -> Result<SchemeState> {
        let prev = state
            .prev
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("second-order step without history".into()))?;
        let tau = self.params.tau;
        let mu = self.params.mu;
        let t_next = state.t + tau;
        let nq = self.spaces.rule.points.len();

        let eta_bar = assembly::extrapolate_scalar(
            &sample_scalar(&self.spaces, &state.eta),
            &sample_scalar(&self.spaces, &prev.eta),
        );
        let sigma_bar = assembly::extrapolate_vector(
            &sample_vector(&self.spaces, &state.sigma),
            &sample_vector(&self.spaces, &prev.sigma),
        );
        let u_n = sample_composite(&self.spaces, &state.u);
        let u_m = sample_composite(&self.spaces, &prev.u);
        let u_bar = assembly::extrapolate_vector(&u_n, &u_m);
        let p_n = sample_scalar(&self.spaces, &state.p);

        // BDF2 history: (4 x^n - x^{n-1}) / (2 tau).
        let bdf2_combo = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| 4.0 * x - y).collect()
        };
        let mut rhs_eta = self
            .mass_q
            .matvec(&bdf2_combo(&state.eta.coeffs, &prev.eta.coeffs));
        scale(&mut rhs_eta, 0.5 / tau);
        let mut rhs_sigma = self
            .mass_x
            .matvec(&bdf2_combo(&state.sigma.coeffs, &prev.sigma.coeffs));
        scale(&mut rhs_sigma, 0.5 / tau);
        let mut rhs_u = assembly::load_vector_eval(&self.spaces, SpaceKind::MiniVelocity, |e, q, _, _| {
            let a = u_n.0[e * nq + q];
            let b = u_m.0[e * nq + q];
            [
                (4.0 * a[0] - b[0]) * 0.5 / tau,
                (4.0 * a[1] - b[1]) * 0.5 / tau,
            ]
        });
        // Previous pressure in the momentum equation.
        add_assign(&mut rhs_u, &assembly::load_div_velocity(&self.spaces, &p_n));
        if let Some(f) = &self.forcing {
            let (fe, fs, fu) = (f.f_eta, f.f_sigma, f.f_u);
            add_assign(
                &mut rhs_eta,
                &assembly::load_scalar(&self.spaces, SpaceKind::ScalarP1, &|x, y| fe(x, y, t_next)),
            );
            add_assign(
                &mut rhs_sigma,
                &assembly::load_vector(&self.spaces, SpaceKind::VectorP1, &|x, y| fs(x, y, t_next)),
            );
            add_assign(
                &mut rhs_u,
                &assembly::load_vector(&self.spaces, SpaceKind::MiniVelocity, &|x, y| {
                    fu(x, y, t_next)
                }),
            );
        }

        let constraints = self.constraints_at(t_next);
        let coeffs = Step1Coeffs {
            time_factor: 1.5 / tau,
            mu,
            eta_star: &eta_bar,
            sigma_star: &sigma_bar,
            u_conv: &u_bar,
        };
        let ws2 = self.ws2.as_mut().expect("order-2 workspace");
        let rhs = ws2.assemble_in_place(
            &self.spaces,
            &coeffs,
            Step1Rhs {
                eta: rhs_eta,
                sigma: rhs_sigma,
                u: rhs_u,
            },
            &constraints,
        );
        let sol = self
            .solve_step1(2, rhs)
            .map_err(|e| step_context(e, state.step + 1))?;
        self.finish_step(state, sol, t_next, 2)
    }

    /// First-order bootstrap for a second-order run: advance one step, then
    /// re-seed the gauge from the first pressure and zero the accumulator.
    pub fn bootstrap_gu2(&mut self, state0: &SchemeState) -> Result<SchemeState> {
        let tau = self.params.tau;
        let mut s1 = self.gu1_step(state0)?;
        for (r, p) in s1.rho.coeffs.iter_mut().zip(&s1.p.coeffs) {
            *r = -2.0 * tau / 3.0 * p;
        }
        s1.s = Field::zeros(&self.spaces.m);
        s1.prev = Some(Box::new(PrevLevel {
            eta: state0.eta.clone(),
            sigma: state0.sigma.clone(),
            u: state0.u.clone(),
        }));
        Ok(s1)
    }

    /// Steps 2-5 plus concentration recovery, shared by both schemes.
    fn finish_step(
        &mut self,
        state: &SchemeState,
        sol: Vec<f64>,
        t_next: f64,
        order: usize,
    ) -> Result<SchemeState> {
        let layout = assembly::BlockLayout::of(&self.spaces);
        let tau = self.params.tau;
        let mu = self.params.mu;
        let step = state.step + 1;

        let eta = Field {
            kind: SpaceKind::ScalarP1,
            coeffs: sol[..layout.n_eta].to_vec(),
        };
        let sigma = Field {
            kind: SpaceKind::VectorP1,
            coeffs: sol[layout.sigma_off()..layout.sigma_off() + layout.n_sigma].to_vec(),
        };
        let u_hat = Field {
            kind: SpaceKind::MiniVelocity,
            coeffs: sol[layout.u_off()..].to_vec(),
        };

        // Gauge solve; the same divergence load drives the accumulator.
        let div_load = assembly::load_div_of_velocity_field(&self.spaces, &u_hat);
        let nm = self.spaces.m.dof_count;
        let mut rhs_rho = vec![0.0; nm + 1];
        rhs_rho[..nm].copy_from_slice(&div_load);
        if order == 2 {
            let krho = self.stiff_m.matvec(&state.rho.coeffs);
            for (r, k) in rhs_rho[..nm].iter_mut().zip(&krho) {
                *r += k;
            }
        }
        let rho_sol = self
            .bordered_lu
            .solve_checked(&self.bordered, &rhs_rho)
            .map_err(|e| step_context(e, step))?;
        let rho = Field {
            kind: SpaceKind::PressureP1,
            coeffs: rho_sol[..nm].to_vec(),
        };

        // Accumulator update: s_new = s_old - projection of div u_hat.
        let mut rhs_s = self.mass_q.matvec(&state.s.coeffs);
        for (r, d) in rhs_s.iter_mut().zip(&div_load) {
            *r -= d;
        }
        let s_coeffs = self
            .mass_m_lu
            .solve_checked(&self.mass_q, &rhs_s)
            .map_err(|e| step_context(e, step))?;
        let s_acc = Field {
            kind: SpaceKind::PressureP1,
            coeffs: s_coeffs,
        };

        // Composite velocity: full gauge gradient for order 1, incremental
        // for order 2.
        let gauge = if order == 2 {
            Field {
                kind: SpaceKind::PressureP1,
                coeffs: rho
                    .coeffs
                    .iter()
                    .zip(&state.rho.coeffs)
                    .map(|(a, b)| a - b)
                    .collect(),
            }
        } else {
            rho.clone()
        };
        let u = CompositeVelocity {
            hat: u_hat.clone(),
            gauge,
        };

        // Pressure recovery.
        let p_factor = if order == 2 { 1.5 / tau } else { 1.0 / tau };
        let p = Field {
            kind: SpaceKind::PressureP1,
            coeffs: s_acc
                .coeffs
                .iter()
                .zip(&rho.coeffs)
                .map(|(sv, rv)| mu[2] * sv - p_factor * rv)
                .collect(),
        };

        let c = match &state.c {
            Some(c_n) => Some(self.recover_c(state, &sigma, c_n, t_next)?),
            None => None,
        };

        let prev = (self.params.order == 2).then(|| {
            Box::new(PrevLevel {
                eta: state.eta.clone(),
                sigma: state.sigma.clone(),
                u: state.u.clone(),
            })
        });

        Ok(SchemeState {
            step,
            t: t_next,
            eta,
            sigma,
            u_hat,
            rho,
            s: s_acc,
            p,
            u,
            c,
            prev,
        })
    }

    /// Recover the concentration: one implicit convection-diffusion-reaction
    /// step in the density space, with the transport velocity frozen at the
    /// previous level. This is the gradient-substituted equivalent of the
    /// update driven by the new gradient field, and keeps the recovered
    /// concentration at the same spatial accuracy as the other unknowns.
    pub fn recover_c(
        &self,
        state: &SchemeState,
        _sigma_new: &Field,
        c_n: &Field,
        t_next: f64,
    ) -> Result<Field> {
        let s = &self.spaces;
        let tau = self.params.tau;
        let mu2 = self.params.mu[1];
        let u_n = sample_composite(s, &state.u);
        let eta_n = sample_scalar(s, &state.eta);
        let nq = s.rule.points.len();

        let conv = assembly::assemble_scalar_convection(s, &u_n);
        let mut trips = Vec::with_capacity(self.mass_q.nnz() + self.stiff_q.nnz() + conv.nnz());
        let push = |m: &CsrMatrix, sc: f64, trips: &mut Vec<(usize, usize, f64)>| {
            for r in 0..m.rows {
                for p in m.row_ptr[r]..m.row_ptr[r + 1] {
                    trips.push((r, m.col_idx[p], sc * m.values[p]));
                }
            }
        };
        push(&self.mass_q, 1.0 / tau + 1.0, &mut trips);
        push(&self.stiff_q, mu2, &mut trips);
        push(&conv, 1.0, &mut trips);
        let n = s.q.dof_count;
        let a = CsrMatrix::from_triplets(n, n, &trips).expect("in range");

        let f_c = self.forcing.as_ref().and_then(|f| f.f_c);
        let load = assembly::load_scalar_eval(s, SpaceKind::ScalarP1, |e, q, x, y| {
            let ev = eta_n.0[e * nq + q];
            let mut v = 0.5 * ev * ev;
            if let Some(fc) = f_c {
                v += fc(x, y, t_next);
            }
            v
        });
        let mut rhs = self.mass_q.matvec(&c_n.coeffs);
        for (r, l) in rhs.iter_mut().zip(&load) {
            *r = *r / tau + l;
        }
        let lu = LuFactors::factor(&a).map_err(|e| step_context(e, state.step + 1))?;
        let coeffs = lu
            .solve_checked(&a, &rhs)
            .map_err(|e| step_context(e, state.step + 1))?;
        Ok(Field {
            kind: SpaceKind::ScalarP1,
            coeffs,
        })
    }

    /// The discrete energy: squared L2 norms of density, gradient and
    /// composite velocity, plus the accumulator norm with its natural
    /// mu3*tau weight. That weight is forced by the step-by-step balance:
    /// testing the momentum equation with the new velocity produces the
    /// accumulator difference only in the combination
    /// 2 mu3 tau (s^n, div u_hat) = mu3 tau (||s^n||^2 - ||s^{n+1}||^2
    /// + ||s^n - s^{n+1}||^2), so only this weighted functional telescopes
    /// to a per-step decay for every time-step size. The unit-weight sum is
    /// not monotone (the accumulator grows from zero early in a run).
    pub fn energy_e3(&self, state: &SchemeState) -> f64 {
        let eta2 = dot(&state.eta.coeffs, &self.mass_q.matvec(&state.eta.coeffs));
        let sig2 = dot(&state.sigma.coeffs, &self.mass_x.matvec(&state.sigma.coeffs));
        let u2 = state.u.norm_sq(&self.spaces.mesh, &self.spaces.rule);
        let s2 = dot(&state.s.coeffs, &self.mass_q.matvec(&state.s.coeffs));
        eta2 + sig2 + u2 + self.params.mu[2] * self.params.tau * s2
    }

    /// max over pressure test functions of |(u, grad psi)|, normalized by
    /// max(1, ||u||).
    pub fn div_residual(&self, state: &SchemeState) -> f64 {
        let d = assembly::div_residual_vector(&self.spaces, &state.u);
        let dmax = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let unorm = state.u.norm_sq(&self.spaces.mesh, &self.spaces.rule).sqrt();
        dmax / unorm.max(1.0)
    }

    /// Integral of the density field; conserved exactly by unforced runs.
    pub fn eta_mass(&self, state: &SchemeState) -> f64 {
        state.eta.integral_p1(&self.spaces.mesh)
    }
}

fn scale(a: &mut [f64], s: f64) {
    for x in a {
        *x *= s;
    }
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn step_context(e: Error, step: usize) -> Error {
    match e {
        Error::SolverFailure {
            what,
            iterations,
            residual,
        } => Error::SolverFailure {
            what: format!("step {step}: {what}"),
            iterations,
            residual,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::verification;

    fn sim(n: usize, tau: f64, order: usize) -> Simulation {
        let spaces = Spaces::build(build_rect_mesh(1.0, 1.0, n, n).unwrap());
        Simulation::new(
            spaces,
            SchemeParams {
                tau,
                mu: [1.0; 3],
                order,
                solver: SolverChoice::DirectLu,
            },
            None,
        )
        .unwrap()
    }

    fn zero_data() -> InitialData<'static> {
        InitialData {
            eta0: &|_, _| 0.0,
            sigma0: &|_, _| [0.0, 0.0],
            u0: &|_, _| [0.0, 0.0],
            c0: Some(&|_, _| 0.0),
            p0: None,
        }
    }

    #[test]
    fn zero_state_is_fixed_point_gu1() {
        let mut sim = sim(3, 0.1, 1);
        let s0 = sim.init_state(&zero_data()).unwrap();
        let s1 = sim.gu1_step(&s0).unwrap();
        let max = s1
            .eta
            .coeffs
            .iter()
            .chain(&s1.sigma.coeffs)
            .chain(&s1.u_hat.coeffs)
            .chain(&s1.rho.coeffs)
            .chain(&s1.s.coeffs)
            .chain(&s1.p.coeffs)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-12, "zero state moved by {max}");
        assert!(s1.c.as_ref().unwrap().coeffs.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_state_is_fixed_point_gu2() {
        let mut sim = sim(3, 0.1, 2);
        let s0 = sim.init_state(&zero_data()).unwrap();
        let s1 = sim.step(&s0).unwrap();
        let s2 = sim.step(&s1).unwrap();
        let max = s2
            .eta
            .coeffs
            .iter()
            .chain(&s2.u_hat.coeffs)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-12);
    }

    #[test]
    fn init_constant_density() {
        let sim = sim(3, 0.1, 1);
        let data = InitialData {
            eta0: &|_, _| 1.0,
            sigma0: &|_, _| [0.0, 0.0],
            u0: &|_, _| [0.0, 0.0],
            c0: None,
            p0: None,
        };
        let s0 = sim.init_state(&data).unwrap();
        assert!(s0.eta.coeffs.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn init_manufactured_at_time_zero_is_zero() {
        let sim = sim(3, 0.1, 1);
        let case = verification::manufactured_case();
        let data = InitialData {
            eta0: &|x, y| (case.eta)(x, y, 0.0),
            sigma0: &|x, y| (case.sigma)(x, y, 0.0),
            u0: &|x, y| (case.u)(x, y, 0.0),
            c0: Some(&|x, y| (case.c)(x, y, 0.0)),
            p0: Some(&|x, y| (case.p)(x, y, 0.0)),
        };
        let s0 = sim.init_state(&data).unwrap();
        let max = s0
            .eta
            .coeffs
            .iter()
            .chain(&s0.sigma.coeffs)
            .chain(&s0.u_hat.coeffs)
            .chain(&s0.p.coeffs)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-12);
    }

    #[test]
    fn recover_c_constant_density_ode() {
        // Constant density k, zero transport, zero gradient: one step solves
        // (1/tau + 1) c1 = k^2/2 at every node.
        let mut sim = sim(3, 0.25, 1);
        let k = 2.0;
        let eta0 = move |_: f64, _: f64| k;
        let data = InitialData {
            eta0: &eta0,
            sigma0: &|_, _| [0.0, 0.0],
            u0: &|_, _| [0.0, 0.0],
            c0: Some(&|_, _| 0.0),
            p0: None,
        };
        let s0 = sim.init_state(&data).unwrap();
        let s1 = sim.gu1_step(&s0).unwrap();
        let tau = 0.25;
        let expect = (k * k / 2.0) * tau / (1.0 + tau);
        for &v in &s1.c.as_ref().unwrap().coeffs {
            assert!((v - expect).abs() < 1e-10, "c = {v}, want {expect}");
        }
    }

    #[test]
    fn constant_density_step_conserves_mass() {
        // From constant density with zero gradient and velocity, one step
        // leaves the density integral unchanged: every non-time term pairs
        // against the gradient of the constant test function.
        let mut sim = sim(4, 0.7, 1);
        let eta0 = |_: f64, _: f64| 2.5;
        let data = InitialData {
            eta0: &eta0,
            sigma0: &|_, _| [0.0, 0.0],
            u0: &|_, _| [0.0, 0.0],
            c0: None,
            p0: None,
        };
        let s0 = sim.init_state(&data).unwrap();
        let m0 = sim.eta_mass(&s0);
        let s1 = sim.gu1_step(&s0).unwrap();
        let m1 = sim.eta_mass(&s1);
        assert!((m1 - m0).abs() <= 1e-10 * m0.abs(), "{m0} -> {m1}");
    }

    #[test]
    fn energy_of_unit_density() {
        let sim = sim(4, 0.1, 1);
        let data = InitialData {
            eta0: &|_, _| 1.0,
            sigma0: &|_, _| [0.0, 0.0],
            u0: &|_, _| [0.0, 0.0],
            c0: None,
            p0: None,
        };
        let s0 = sim.init_state(&data).unwrap();
        assert!((sim.energy_e3(&s0) - 1.0).abs() < 1e-10);
        let zero = sim.init_state(&zero_data()).unwrap();
        assert_eq!(sim.energy_e3(&zero), 0.0);
    }

    #[test]
    fn unforced_run_invariants() {
        // Short run from rough initial data: energy decays, density mass is
        // conserved, the composite velocity is discretely divergence-free,
        // and the accumulator stays mean-free.
        let mut sim = sim(8, 0.05, 1);
        let init = verification::stock_initial_data(verification::StockCase::Stability);
        let data = InitialData {
            eta0: &init.eta0,
            sigma0: &init.sigma0,
            u0: &init.u0,
            c0: Some(&init.c0),
            p0: Some(&init.p0),
        };
        let s0 = sim.init_state(&data).unwrap();
        let e0 = sim.energy_e3(&s0);
        let m0 = sim.eta_mass(&s0);
        let mut state = s0;
        let mut energy = e0;
        for n in 0..6 {
            state = sim.gu1_step(&state).unwrap();
            let e = sim.energy_e3(&state);
            assert!(
                e <= energy + 1e-10 * e0,
                "energy rose at step {n}: {energy} -> {e}"
            );
            energy = e;
            let m = sim.eta_mass(&state);
            assert!(
                (m - m0).abs() <= 1e-10 * m0.abs(),
                "mass drifted: {m0} -> {m}"
            );
            let dres = sim.div_residual(&state);
            assert!(dres <= 1e-8, "divergence residual {dres} at step {n}");
            let s_mean = state.s.integral_p1(&sim.spaces.mesh);
            assert!(s_mean.abs() <= (n as f64 + 1.0) * 1e-10);
        }
        assert!(energy < e0, "no decay over the run");
    }

    #[test]
    fn gu2_gauge_is_incremental() {
        // After a second-order step the composite gauge equals the gauge
        // difference; equal consecutive gauges reduce to u = u_hat.
        let mut sim = sim(4, 0.1, 2);
        let init = verification::stock_initial_data(verification::StockCase::Stability);
        let data = InitialData {
            eta0: &init.eta0,
            sigma0: &init.sigma0,
            u0: &init.u0,
            c0: Some(&init.c0),
            p0: Some(&init.p0),
        };
        let s0 = sim.init_state(&data).unwrap();
        let s1 = sim.step(&s0).unwrap();
        let s2 = sim.step(&s1).unwrap();
        for i in 0..s2.u.gauge.coeffs.len() {
            let expect = s2.rho.coeffs[i] - s1.rho.coeffs[i];
            assert!((s2.u.gauge.coeffs[i] - expect).abs() < 1e-13);
        }
        assert!(sim.div_residual(&s2) <= 1e-8);
    }
}
