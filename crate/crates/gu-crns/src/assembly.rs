//! Assembly of every bilinear form in the scheme and composition of the
//! coupled step-1 system.
//!
//! Coefficient-dependent forms take the known fields pre-sampled at the
//! quadrature points of every element, so one sampling pass serves all the
//! forms of a step. The convection form on the velocity is assembled in its
//! algebraically antisymmetric arrangement
//!   b(u,v,w) = 1/2 (u.grad v, w) - 1/2 (u.grad w, v),
//! which annihilates b(u,v,v) exactly as a matrix identity for any sampled
//! transport field, including the discontinuous composite velocity. This is
//! the identity the discrete energy bound stands on.
//!
//! The step-1 system couples the three unknowns into one monolithic matrix.
//! Its sparsity pattern is precomputed on the first assembly; later steps
//! rewrite values in place through cached scatter maps.

use crate::mesh::TriMesh;
use crate::quadrature::QuadratureRule;
use crate::spaces::{
    apply_dirichlet, local_dofs, CompositeVelocity, Field, ShapeSet, SpaceKind, Spaces,
};
use crate::sparse::CsrMatrix;

/// A known scalar coefficient at every (element, quadrature point).
#[derive(Clone, Debug)]
pub struct ScalarSamples(pub Vec<f64>);

/// A known vector coefficient at every (element, quadrature point).
#[derive(Clone, Debug)]
pub struct VectorSamples(pub Vec<[f64; 2]>);

pub fn sample_scalar(spaces: &Spaces, field: &Field) -> ScalarSamples {
    let nq = spaces.rule.points.len();
    let mut out = Vec::with_capacity(spaces.mesh.tri_count() * nq);
    for elem in 0..spaces.mesh.tri_count() {
        for bary in &spaces.rule.points {
            out.push(field.eval_scalar(&spaces.mesh, elem, *bary));
        }
    }
    ScalarSamples(out)
}

pub fn sample_vector(spaces: &Spaces, field: &Field) -> VectorSamples {
    let nq = spaces.rule.points.len();
    let mut out = Vec::with_capacity(spaces.mesh.tri_count() * nq);
    for elem in 0..spaces.mesh.tri_count() {
        for bary in &spaces.rule.points {
            out.push(field.eval_vector(&spaces.mesh, elem, *bary));
        }
    }
    VectorSamples(out)
}

pub fn sample_composite(spaces: &Spaces, u: &CompositeVelocity) -> VectorSamples {
    let nq = spaces.rule.points.len();
    let mut out = Vec::with_capacity(spaces.mesh.tri_count() * nq);
    for elem in 0..spaces.mesh.tri_count() {
        for bary in &spaces.rule.points {
            out.push(u.eval(&spaces.mesh, elem, *bary));
        }
    }
    VectorSamples(out)
}

/// 2 a - b, the extrapolation used by the second-order scheme.
pub fn extrapolate_scalar(a: &ScalarSamples, b: &ScalarSamples) -> ScalarSamples {
    ScalarSamples(a.0.iter().zip(&b.0).map(|(x, y)| 2.0 * x - y).collect())
}

pub fn extrapolate_vector(a: &VectorSamples, b: &VectorSamples) -> VectorSamples {
    VectorSamples(
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| [2.0 * x[0] - y[0], 2.0 * x[1] - y[1]])
            .collect(),
    )
}

/// The forms of the weak formulation. Coefficient-carrying variants hold the
/// known field sampled at quadrature points.
pub enum FormKind<'a> {
    /// (u, v) on one space.
    Mass(SpaceKind),
    /// (grad u, grad v), componentwise for vector spaces.
    Stiffness(SpaceKind),
    /// (div s, div w) on the gradient space.
    DivDiv,
    /// (curl s, curl w); in 2D the curl is the scalar ds2/dx - ds1/dy.
    CurlCurl,
    /// (div v, q): rows in the pressure space, columns in the velocity space.
    PressureDiv,
    /// b(u_known, v, w) in the antisymmetric arrangement, on the velocity.
    Trilinear(&'a VectorSamples),
    /// -(v eta_known, grad r): rows in the density space, columns velocity.
    ConvEta(&'a ScalarSamples),
    /// (s eta_known, grad r): rows in the density space, columns gradient.
    SigmaEta(&'a ScalarSamples),
    /// -(v . sigma_known, div w): rows gradient space, columns velocity.
    ConvSigma(&'a VectorSamples),
    /// (eta_known grad q, w): rows in the given space, columns density space.
    EtaGradEta(&'a ScalarSamples, SpaceKind),
    /// (sigma_known (div s), v): rows velocity, columns gradient space.
    SigmaDivSigma(&'a VectorSamples),
}

fn shapes_at(mesh: &TriMesh, rule: &QuadratureRule, elem: usize) -> Vec<ShapeSet> {
    rule.points
        .iter()
        .map(|b| crate::spaces::eval_basis(mesh, SpaceKind::MiniVelocity, elem, *b))
        .collect()
}

fn form_spaces(form: &FormKind) -> (SpaceKind, SpaceKind) {
    match form {
        FormKind::Mass(k) | FormKind::Stiffness(k) => (*k, *k),
        FormKind::DivDiv | FormKind::CurlCurl => (SpaceKind::VectorP1, SpaceKind::VectorP1),
        FormKind::PressureDiv => (SpaceKind::PressureP1, SpaceKind::MiniVelocity),
        FormKind::Trilinear(_) => (SpaceKind::MiniVelocity, SpaceKind::MiniVelocity),
        FormKind::ConvEta(_) => (SpaceKind::ScalarP1, SpaceKind::MiniVelocity),
        FormKind::SigmaEta(_) => (SpaceKind::ScalarP1, SpaceKind::VectorP1),
        FormKind::ConvSigma(_) => (SpaceKind::VectorP1, SpaceKind::MiniVelocity),
        FormKind::EtaGradEta(_, row) => (*row, SpaceKind::ScalarP1),
        FormKind::SigmaDivSigma(_) => (SpaceKind::MiniVelocity, SpaceKind::VectorP1),
    }
}

/// Emit the entries of a form element by element in a fixed order.
fn emit_form<F: FnMut(usize, usize, f64)>(spaces: &Spaces, form: &FormKind, sink: &mut F) {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let nq = rule.points.len();
    let (rk, ck) = form_spaces(form);
    let nr = rk.local_dof_count();
    let nc = ck.local_dof_count();
    let mut row_dofs: Vec<usize> = Vec::new();
    let mut col_dofs: Vec<usize> = Vec::new();
    let mut local = [[0.0f64; 8]; 8];

    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        let shapes = shapes_at(mesh, rule, elem);
        for r in local.iter_mut().take(nr) {
            r[..nc].fill(0.0);
        }

        for q in 0..nq {
            let w = rule.weights[q] * area;
            let sh = &shapes[q];
            match form {
                FormKind::Mass(k) => {
                    let ns = k.shapes_per_elem();
                    let comps = k.components();
                    for a in 0..ns {
                        for b in 0..ns {
                            let v = w * sh.val[a] * sh.val[b];
                            for c in 0..comps {
                                local[comps * a + c][comps * b + c] += v;
                            }
                        }
                    }
                }
                FormKind::Stiffness(k) => {
                    let ns = k.shapes_per_elem();
                    let comps = k.components();
                    for a in 0..ns {
                        for b in 0..ns {
                            let v = w
                                * (sh.grad[a][0] * sh.grad[b][0] + sh.grad[a][1] * sh.grad[b][1]);
                            for c in 0..comps {
                                local[comps * a + c][comps * b + c] += v;
                            }
                        }
                    }
                }
                FormKind::DivDiv => {
                    // div of (shape a, comp c) is the c-derivative of shape a.
                    for a in 0..3 {
                        for ca in 0..2 {
                            for b in 0..3 {
                                for cb in 0..2 {
                                    local[2 * a + ca][2 * b + cb] +=
                                        w * sh.grad[a][ca] * sh.grad[b][cb];
                                }
                            }
                        }
                    }
                }
                FormKind::CurlCurl => {
                    let curl = |g: [f64; 2], c: usize| if c == 0 { -g[1] } else { g[0] };
                    for a in 0..3 {
                        for ca in 0..2 {
                            for b in 0..3 {
                                for cb in 0..2 {
                                    local[2 * a + ca][2 * b + cb] +=
                                        w * curl(sh.grad[a], ca) * curl(sh.grad[b], cb);
                                }
                            }
                        }
                    }
                }
                FormKind::PressureDiv => {
                    for a in 0..3 {
                        for b in 0..4 {
                            for cb in 0..2 {
                                local[a][2 * b + cb] += w * sh.val[a] * sh.grad[b][cb];
                            }
                        }
                    }
                }
                FormKind::Trilinear(u) => {
                    let uv = u.0[elem * nq + q];
                    for a in 0..4 {
                        let conv_a = uv[0] * sh.grad[a][0] + uv[1] * sh.grad[a][1];
                        for b in 0..4 {
                            let conv_b = uv[0] * sh.grad[b][0] + uv[1] * sh.grad[b][1];
                            let v = 0.5 * w * (conv_b * sh.val[a] - conv_a * sh.val[b]);
                            for c in 0..2 {
                                local[2 * a + c][2 * b + c] += v;
                            }
                        }
                    }
                }
                FormKind::ConvEta(eta) => {
                    let e = eta.0[elem * nq + q];
                    for a in 0..3 {
                        for b in 0..4 {
                            for cb in 0..2 {
                                local[a][2 * b + cb] -= w * e * sh.val[b] * sh.grad[a][cb];
                            }
                        }
                    }
                }
                FormKind::SigmaEta(eta) => {
                    let e = eta.0[elem * nq + q];
                    for a in 0..3 {
                        for b in 0..3 {
                            for cb in 0..2 {
                                local[a][2 * b + cb] += w * e * sh.val[b] * sh.grad[a][cb];
                            }
                        }
                    }
                }
                FormKind::ConvSigma(sig) => {
                    let s = sig.0[elem * nq + q];
                    for a in 0..3 {
                        for ca in 0..2 {
                            let diva = sh.grad[a][ca];
                            for b in 0..4 {
                                for cb in 0..2 {
                                    local[2 * a + ca][2 * b + cb] -=
                                        w * sh.val[b] * s[cb] * diva;
                                }
                            }
                        }
                    }
                }
                FormKind::EtaGradEta(eta, row) => {
                    let e = eta.0[elem * nq + q];
                    let ns = row.shapes_per_elem();
                    for a in 0..ns {
                        for ca in 0..2 {
                            for b in 0..3 {
                                local[2 * a + ca][b] += w * e * sh.val[a] * sh.grad[b][ca];
                            }
                        }
                    }
                }
                FormKind::SigmaDivSigma(sig) => {
                    let s = sig.0[elem * nq + q];
                    for a in 0..4 {
                        for ca in 0..2 {
                            for b in 0..3 {
                                for cb in 0..2 {
                                    local[2 * a + ca][2 * b + cb] +=
                                        w * sh.grad[b][cb] * s[ca] * sh.val[a];
                                }
                            }
                        }
                    }
                }
            }
        }

        local_dofs(mesh, rk, elem, &mut row_dofs);
        local_dofs(mesh, ck, elem, &mut col_dofs);
        for (la, &ga) in row_dofs.iter().enumerate() {
            for (lb, &gb) in col_dofs.iter().enumerate() {
                sink(ga, gb, local[la][lb]);
            }
        }
    }
}

/// Assemble one form into a CSR matrix.
pub fn assemble(spaces: &Spaces, form: FormKind) -> CsrMatrix {
    let (rk, ck) = form_spaces(&form);
    let rows = spaces.space(rk).dof_count;
    let cols = spaces.space(ck).dof_count;
    let mut trips = Vec::new();
    emit_form(spaces, &form, &mut |i, j, v| trips.push((i, j, v)));
    CsrMatrix::from_triplets(rows, cols, &trips).expect("indices in range by construction")
}

pub fn assemble_mass(spaces: &Spaces, kind: SpaceKind) -> CsrMatrix {
    assemble(spaces, FormKind::Mass(kind))
}

pub fn assemble_stiffness(spaces: &Spaces, kind: SpaceKind) -> CsrMatrix {
    assemble(spaces, FormKind::Stiffness(kind))
}

/// Load vector of an analytic scalar function: entries ∫ f φ_i.
pub fn load_scalar(spaces: &Spaces, kind: SpaceKind, f: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    load_scalar_eval(spaces, kind, |_, _, x, y| f(x, y))
}

/// Load vector from an evaluator receiving (elem, qp, x, y).
pub fn load_scalar_eval(
    spaces: &Spaces,
    kind: SpaceKind,
    f: impl Fn(usize, usize, f64, f64) -> f64,
) -> Vec<f64> {
    assert_eq!(kind.components(), 1);
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let mut out = vec![0.0; spaces.space(kind).dof_count];
    let mut dofs = Vec::new();
    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        local_dofs(mesh, kind, elem, &mut dofs);
        for (q, bary) in rule.points.iter().enumerate() {
            let p = mesh.point(elem, *bary);
            let w = rule.weights[q] * area * f(elem, q, p[0], p[1]);
            for (a, &d) in dofs.iter().enumerate() {
                out[d] += w * bary[a];
            }
        }
    }
    out
}

/// Load vector of an analytic vector function.
pub fn load_vector(spaces: &Spaces, kind: SpaceKind, f: &dyn Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    load_vector_eval(spaces, kind, |_, _, x, y| f(x, y))
}

pub fn load_vector_eval(
    spaces: &Spaces,
    kind: SpaceKind,
    f: impl Fn(usize, usize, f64, f64) -> [f64; 2],
) -> Vec<f64> {
    assert_eq!(kind.components(), 2);
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let ns = kind.shapes_per_elem();
    let mut out = vec![0.0; spaces.space(kind).dof_count];
    let mut dofs = Vec::new();
    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        local_dofs(mesh, kind, elem, &mut dofs);
        for (q, bary) in rule.points.iter().enumerate() {
            let sh = crate::spaces::eval_basis(mesh, kind, elem, *bary);
            let p = mesh.point(elem, *bary);
            let fv = f(elem, q, p[0], p[1]);
            let w = rule.weights[q] * area;
            for a in 0..ns {
                for c in 0..2 {
                    out[dofs[2 * a + c]] += w * fv[c] * sh.val[a];
                }
            }
        }
    }
    out
}

/// Scalar-space convection matrix: entries (u_known . grad phi_j, phi_i),
/// used by the implicit concentration recovery.
pub fn assemble_scalar_convection(spaces: &Spaces, u: &VectorSamples) -> CsrMatrix {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let nq = rule.points.len();
    let n = spaces.q.dof_count;
    let mut trips = Vec::with_capacity(9 * mesh.tri_count());
    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        let g = &mesh.elem_geom[elem];
        let t = mesh.triangles[elem];
        let mut local = [[0.0f64; 3]; 3];
        for (q, bary) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * area;
            let uv = u.0[elem * nq + q];
            for b in 0..3 {
                let conv = uv[0] * g.grad_bary[b][0] + uv[1] * g.grad_bary[b][1];
                for a in 0..3 {
                    local[a][b] += w * conv * bary[a];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                trips.push((t[a], t[b], local[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trips).expect("in range")
}

/// The (g, div v) load on the velocity space.
pub fn load_div_velocity(spaces: &Spaces, g: &ScalarSamples) -> Vec<f64> {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let nq = rule.points.len();
    let mut out = vec![0.0; spaces.y.dof_count];
    let mut dofs = Vec::new();
    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        local_dofs(mesh, SpaceKind::MiniVelocity, elem, &mut dofs);
        for (q, bary) in rule.points.iter().enumerate() {
            let sh = crate::spaces::eval_basis(mesh, SpaceKind::MiniVelocity, elem, *bary);
            let w = rule.weights[q] * area * g.0[elem * nq + q];
            for a in 0..4 {
                for c in 0..2 {
                    out[dofs[2 * a + c]] += w * sh.grad[a][c];
                }
            }
        }
    }
    out
}

/// The (div u_hat, ψ) load on the pressure space.
pub fn load_div_of_velocity_field(spaces: &Spaces, uhat: &Field) -> Vec<f64> {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let mut out = vec![0.0; spaces.m.dof_count];
    let mut ydofs = Vec::new();
    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        local_dofs(mesh, SpaceKind::MiniVelocity, elem, &mut ydofs);
        let t = mesh.triangles[elem];
        for (q, bary) in rule.points.iter().enumerate() {
            let sh = crate::spaces::eval_basis(mesh, SpaceKind::MiniVelocity, elem, *bary);
            let mut div = 0.0;
            for a in 0..4 {
                for c in 0..2 {
                    div += uhat.coeffs[ydofs[2 * a + c]] * sh.grad[a][c];
                }
            }
            let w = rule.weights[q] * area * div;
            for (a, &v) in t.iter().enumerate() {
                out[v] += w * bary[a];
            }
        }
    }
    out
}

/// d_i = (u, grad ψ_i) on the pressure space. The max-norm of this vector is
/// the discrete divergence residual of the composite velocity.
pub fn div_residual_vector(spaces: &Spaces, u: &CompositeVelocity) -> Vec<f64> {
    let mesh = &spaces.mesh;
    let rule = &spaces.rule;
    let mut out = vec![0.0; spaces.m.dof_count];
    for elem in 0..mesh.tri_count() {
        let area = mesh.elem_geom[elem].area;
        let g = &mesh.elem_geom[elem];
        let t = mesh.triangles[elem];
        for (q, bary) in rule.points.iter().enumerate() {
            let uv = u.eval(mesh, elem, *bary);
            let w = rule.weights[q] * area;
            for a in 0..3 {
                out[t[a]] += w * (uv[0] * g.grad_bary[a][0] + uv[1] * g.grad_bary[a][1]);
            }
        }
    }
    out
}

/// Pressure-space stiffness bordered by the mean-value constraint row and
/// column; the extra unknown is the Lagrange multiplier.
pub fn bordered_pressure_poisson(spaces: &Spaces) -> CsrMatrix {
    let k = assemble_stiffness(spaces, SpaceKind::PressureP1);
    let m = load_scalar(spaces, SpaceKind::PressureP1, &|_, _| 1.0);
    let n = spaces.m.dof_count;
    let mut trips = Vec::with_capacity(k.nnz() + 2 * n);
    for r in 0..n {
        for p in k.row_ptr[r]..k.row_ptr[r + 1] {
            trips.push((r, k.col_idx[p], k.values[p]));
        }
    }
    for (i, &mi) in m.iter().enumerate() {
        trips.push((i, n, mi));
        trips.push((n, i, mi));
    }
    CsrMatrix::from_triplets(n + 1, n + 1, &trips).expect("in range")
}

/// Offsets of the three unknown blocks in the monolithic step-1 system:
/// density, gradient, velocity.
#[derive(Clone, Copy, Debug)]
pub struct BlockLayout {
    pub n_eta: usize,
    pub n_sigma: usize,
    pub n_u: usize,
}

impl BlockLayout {
    pub fn of(spaces: &Spaces) -> Self {
        BlockLayout {
            n_eta: spaces.q.dof_count,
            n_sigma: spaces.x.dof_count,
            n_u: spaces.y.dof_count,
        }
    }

    pub fn eta_off(&self) -> usize {
        0
    }

    pub fn sigma_off(&self) -> usize {
        self.n_eta
    }

    pub fn u_off(&self) -> usize {
        self.n_eta + self.n_sigma
    }

    pub fn total(&self) -> usize {
        self.n_eta + self.n_sigma + self.n_u
    }
}

/// A monolithic linear system with named block offsets.
pub struct BlockSystem {
    pub layout: BlockLayout,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Known coefficients entering the step-1 operator. For the first-order
/// scheme these are the previous-level fields and `time_factor` is 1/tau;
/// for the second-order scheme they are the extrapolated fields and the
/// factor is 3/(2 tau).
pub struct Step1Coeffs<'a> {
    pub time_factor: f64,
    pub mu: [f64; 3],
    pub eta_star: &'a ScalarSamples,
    pub sigma_star: &'a VectorSamples,
    pub u_conv: &'a VectorSamples,
}

/// Right-hand sides of the three block rows, already holding the time terms,
/// forcing and any pressure history.
pub struct Step1Rhs {
    pub eta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
}

struct MappedBlock {
    /// Destination value index for each emitted entry, in stream order.
    map: Vec<u32>,
}

/// Reusable assembly state for the step-1 system: constant blocks are
/// scattered once, coefficient-dependent blocks rewrite values in place
/// through per-entry maps recorded up front.
pub struct Step1Workspace {
    layout: BlockLayout,
    matrix: CsrMatrix,
    base_values: Vec<f64>,
    conv_eta: MappedBlock,
    conv_eta_t: MappedBlock,
    sigma_eta: MappedBlock,
    sigma_eta_t: MappedBlock,
    conv_sigma: MappedBlock,
    conv_sigma_t: MappedBlock,
    trilinear: MappedBlock,
}

impl Step1Workspace {
    /// Precompute the pattern and the constant part of the operator.
    pub fn new(spaces: &Spaces, time_factor: f64, mu: [f64; 3]) -> Step1Workspace {
        let layout = BlockLayout::of(spaces);
        let (eo, so, uo) = (layout.eta_off(), layout.sigma_off(), layout.u_off());
        let n = layout.total();

        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let push_block = |m: &CsrMatrix, ro: usize, co: usize, s: f64, trips: &mut Vec<(usize, usize, f64)>| {
            for r in 0..m.rows {
                for p in m.row_ptr[r]..m.row_ptr[r + 1] {
                    trips.push((ro + r, co + m.col_idx[p], s * m.values[p]));
                }
            }
        };
        push_block(&assemble_mass(spaces, SpaceKind::ScalarP1), eo, eo, time_factor, &mut trips);
        push_block(&assemble_stiffness(spaces, SpaceKind::ScalarP1), eo, eo, mu[0], &mut trips);
        push_block(&assemble_mass(spaces, SpaceKind::VectorP1), so, so, time_factor + 1.0, &mut trips);
        push_block(&assemble(spaces, FormKind::DivDiv), so, so, mu[1], &mut trips);
        push_block(&assemble(spaces, FormKind::CurlCurl), so, so, mu[1], &mut trips);
        push_block(&assemble_mass(spaces, SpaceKind::MiniVelocity), uo, uo, time_factor, &mut trips);
        push_block(&assemble_stiffness(spaces, SpaceKind::MiniVelocity), uo, uo, mu[2], &mut trips);

        // Coefficient-dependent patterns, recorded with zero samples: only
        // the index stream matters here. Each transpose partner reuses the
        // same stream so the scattered pair stays an exact transpose.
        let nq = spaces.rule.points.len();
        let zero_s = ScalarSamples(vec![0.0; spaces.mesh.tri_count() * nq]);
        let zero_v = VectorSamples(vec![[0.0; 2]; spaces.mesh.tri_count() * nq]);

        let record = |form: FormKind, ro: usize, co: usize, transposed: bool| -> Vec<(usize, usize)> {
            let mut positions = Vec::new();
            emit_form(spaces, &form, &mut |i, j, _| {
                if transposed {
                    positions.push((co + j, ro + i));
                } else {
                    positions.push((ro + i, co + j));
                }
            });
            positions
        };
        let pos_conv_eta = record(FormKind::ConvEta(&zero_s), eo, uo, false);
        let pos_conv_eta_t = record(FormKind::ConvEta(&zero_s), eo, uo, true);
        let pos_sigma_eta = record(FormKind::SigmaEta(&zero_s), eo, so, false);
        let pos_sigma_eta_t = record(FormKind::SigmaEta(&zero_s), eo, so, true);
        let pos_conv_sigma = record(FormKind::ConvSigma(&zero_v), so, uo, false);
        let pos_conv_sigma_t = record(FormKind::ConvSigma(&zero_v), so, uo, true);
        let pos_tri = record(FormKind::Trilinear(&zero_v), uo, uo, false);

        for pos in [
            &pos_conv_eta,
            &pos_conv_eta_t,
            &pos_sigma_eta,
            &pos_sigma_eta_t,
            &pos_conv_sigma,
            &pos_conv_sigma_t,
            &pos_tri,
        ] {
            for &(i, j) in pos.iter() {
                trips.push((i, j, 0.0));
            }
        }
        // Diagonal entries for constrained dofs must exist in the pattern.
        for e in &spaces.x.essential {
            trips.push((so + e.dof, so + e.dof, 0.0));
        }
        for e in &spaces.y.essential {
            trips.push((uo + e.dof, uo + e.dof, 0.0));
        }

        let matrix = CsrMatrix::from_triplets(n, n, &trips).expect("in range");
        let base_values = matrix.values.clone();

        let to_map = |positions: Vec<(usize, usize)>| -> MappedBlock {
            MappedBlock {
                map: positions
                    .into_iter()
                    .map(|(i, j)| matrix.value_index(i, j).expect("pattern has entry") as u32)
                    .collect(),
            }
        };

        Step1Workspace {
            layout,
            base_values,
            conv_eta: to_map(pos_conv_eta),
            conv_eta_t: to_map(pos_conv_eta_t),
            sigma_eta: to_map(pos_sigma_eta),
            sigma_eta_t: to_map(pos_sigma_eta_t),
            conv_sigma: to_map(pos_conv_sigma),
            conv_sigma_t: to_map(pos_conv_sigma_t),
            trilinear: to_map(pos_tri),
            matrix,
        }
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    /// Rewrite the coefficient-dependent values and apply the constraints;
    /// returns the composed right-hand side. The matrix stays inside the
    /// workspace, available through `matrix()`.
    pub fn assemble_in_place(
        &mut self,
        spaces: &Spaces,
        coeffs: &Step1Coeffs,
        rhs: Step1Rhs,
        constraints: &[(usize, f64)],
    ) -> Vec<f64> {
        self.matrix.values.copy_from_slice(&self.base_values);

        {
            let values = &mut self.matrix.values;
            let mut scatter = |form: FormKind, fwd: &MappedBlock, t: Option<(&MappedBlock, f64)>| {
                let mut pos = 0usize;
                match t {
                    None => emit_form(spaces, &form, &mut |_, _, v| {
                        values[fwd.map[pos] as usize] += v;
                        pos += 1;
                    }),
                    Some((tm, scale)) => emit_form(spaces, &form, &mut |_, _, v| {
                        values[fwd.map[pos] as usize] += v;
                        values[tm.map[pos] as usize] += scale * v;
                        pos += 1;
                    }),
                }
            };
            // Each coupling and its energy partner come from one emission, so
            // they stay exact sign-scaled transposes of each other.
            scatter(
                FormKind::ConvEta(coeffs.eta_star),
                &self.conv_eta,
                Some((&self.conv_eta_t, -1.0)),
            );
            scatter(
                FormKind::SigmaEta(coeffs.eta_star),
                &self.sigma_eta,
                Some((&self.sigma_eta_t, -1.0)),
            );
            scatter(
                FormKind::ConvSigma(coeffs.sigma_star),
                &self.conv_sigma,
                Some((&self.conv_sigma_t, -1.0)),
            );
            scatter(FormKind::Trilinear(coeffs.u_conv), &self.trilinear, None);
        }

        let mut full_rhs = Vec::with_capacity(self.layout.total());
        full_rhs.extend_from_slice(&rhs.eta);
        full_rhs.extend_from_slice(&rhs.sigma);
        full_rhs.extend_from_slice(&rhs.u);
        apply_dirichlet(&mut self.matrix, &mut full_rhs, constraints);
        full_rhs
    }

    /// One-shot assembly returning an owned system; used by tests and the
    /// consistency diagnostics.
    pub fn assemble(
        &mut self,
        spaces: &Spaces,
        coeffs: &Step1Coeffs,
        rhs: Step1Rhs,
        constraints: &[(usize, f64)],
    ) -> BlockSystem {
        let full_rhs = self.assemble_in_place(spaces, coeffs, rhs, constraints);
        BlockSystem {
            layout: self.layout,
            matrix: self.matrix.clone(),
            rhs: full_rhs,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::sparse::test_util::Rng;

    fn unit_spaces(n: usize) -> Spaces {
        Spaces::build(build_rect_mesh(1.0, 1.0, n, n).unwrap())
    }

    fn rand_samples(s: &Spaces, rng: &mut Rng) -> (ScalarSamples, VectorSamples, VectorSamples) {
        let n = s.mesh.tri_count() * s.rule.points.len();
        (
            ScalarSamples((0..n).map(|_| rng.next_f64()).collect()),
            VectorSamples((0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect()),
            VectorSamples((0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect()),
        )
    }

    #[test]
    fn mass_row_sums_are_basis_integrals() {
        let s = unit_spaces(3);
        let m = assemble_mass(&s, SpaceKind::ScalarP1);
        let ints = load_scalar(&s, SpaceKind::ScalarP1, &|_, _| 1.0);
        let mut total = 0.0;
        for r in 0..m.rows {
            let row_sum: f64 = (m.row_ptr[r]..m.row_ptr[r + 1]).map(|p| m.values[p]).sum();
            assert!((row_sum - ints[r]).abs() < 1e-14);
            total += row_sum;
        }
        assert!((total - 1.0).abs() < 1e-12, "total mass {total}");
    }

    #[test]
    fn stiffness_kills_constants() {
        let s = unit_spaces(4);
        let k = assemble_stiffness(&s, SpaceKind::ScalarP1);
        let ones = vec![1.0; s.q.dof_count];
        let kv = k.matvec(&ones);
        let max = kv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-12, "stiffness on constants gives {max}");
    }

    #[test]
    fn curlcurl_vanishes_on_linear_gradient_field() {
        // The interpolant of grad((x^2+y^2)/2) = (x, y) is exactly (x, y),
        // which is curl-free.
        let s = unit_spaces(4);
        let r = assemble(&s, FormKind::CurlCurl);
        let mut sig = vec![0.0; s.x.dof_count];
        for (v, p) in s.mesh.vertices.iter().enumerate() {
            sig[2 * v] = p[0];
            sig[2 * v + 1] = p[1];
        }
        let rv = r.matvec(&sig);
        let max = rv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-12, "curl-curl on a gradient interpolant: {max}");
    }

    #[test]
    fn curlcurl_energy_decays_under_refinement() {
        // For a curved gradient field the interpolant's curl energy shrinks
        // with h.
        let energy = |n: usize| -> f64 {
            let s = unit_spaces(n);
            let r = assemble(&s, FormKind::CurlCurl);
            let mut sig = vec![0.0; s.x.dof_count];
            let pi = std::f64::consts::PI;
            for (v, p) in s.mesh.vertices.iter().enumerate() {
                // grad of sin(pi x) sin(pi y).
                sig[2 * v] = pi * (pi * p[0]).cos() * (pi * p[1]).sin();
                sig[2 * v + 1] = pi * (pi * p[0]).sin() * (pi * p[1]).cos();
            }
            let rv = r.matvec(&sig);
            sig.iter().zip(&rv).map(|(a, b)| a * b).sum()
        };
        let e1 = energy(8);
        let e2 = energy(16);
        assert!(e2 < 0.5 * e1, "curl energy {e1} -> {e2} under refinement");
    }

    #[test]
    fn trilinear_zero_velocity_gives_zero_matrix() {
        let s = unit_spaces(2);
        let nq = s.rule.points.len();
        let zero = VectorSamples(vec![[0.0; 2]; s.mesh.tri_count() * nq]);
        let b = assemble(&s, FormKind::Trilinear(&zero));
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trilinear_annihilation_and_skew_symmetry() {
        let s = unit_spaces(8);
        let mut rng = Rng(5);
        for trial in 0..20 {
            let (_, _, u) = rand_samples(&s, &mut rng);
            let b = assemble(&s, FormKind::Trilinear(&u));
            let nv = s.y.dof_count;
            let v: Vec<f64> = (0..nv).map(|_| rng.next_f64()).collect();
            let w: Vec<f64> = (0..nv).map(|_| rng.next_f64()).collect();
            let bnorm = b.values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-30);
            let vsq: f64 = v.iter().map(|x| x * x).sum::<f64>();
            let bv = b.matvec(&v);
            let vbv: f64 = v.iter().zip(&bv).map(|(a, c)| a * c).sum();
            assert!(
                vbv.abs() <= 1e-12 * bnorm * vsq,
                "trial {trial}: b(u,v,v) = {vbv}"
            );
            let bw = b.matvec(&w);
            let vbw: f64 = v.iter().zip(&bw).map(|(a, c)| a * c).sum();
            let wbv: f64 = w.iter().zip(&bv).map(|(a, c)| a * c).sum();
            let scale = vsq.sqrt() * w.iter().map(|x| x * x).sum::<f64>().sqrt() * bnorm;
            assert!(
                (vbw + wbv).abs() <= 1e-12 * scale,
                "trial {trial}: skew defect {}",
                vbw + wbv
            );
        }
    }

    #[test]
    fn pressure_div_compatibility() {
        // Summing all pressure rows against a zero-trace velocity is the
        // divergence theorem: integral of div u vanishes.
        let s = unit_spaces(4);
        let b = assemble(&s, FormKind::PressureDiv);
        let mut rng = Rng(21);
        let mut u = vec![0.0; s.y.dof_count];
        for (d, v) in u.iter_mut().enumerate() {
            *v = rng.next_f64();
            if d < 2 * s.mesh.vertex_count() && s.y.is_essential(d) {
                *v = 0.0;
            }
        }
        let bu = b.matvec(&u);
        let total: f64 = bu.iter().sum();
        let unorm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(total.abs() <= 1e-12 * unorm.max(1.0), "got {total}");
    }

    #[test]
    fn transpose_partner_identities() {
        // The standalone row-space forms equal the sign-scaled transposes
        // used in the monolithic composition.
        let s = unit_spaces(2);
        let mut rng = Rng(31);
        let (eta, sig, _) = rand_samples(&s, &mut rng);
        let conv_eta = assemble(&s, FormKind::ConvEta(&eta));
        let gue = assemble(&s, FormKind::EtaGradEta(&eta, SpaceKind::MiniVelocity));
        for i in 0..gue.rows {
            for p in gue.row_ptr[i]..gue.row_ptr[i + 1] {
                let j = gue.col_idx[p];
                assert!((gue.values[p] + conv_eta.get(j, i)).abs() < 1e-14);
            }
        }
        let sd = assemble(&s, FormKind::SigmaDivSigma(&sig));
        let cs = assemble(&s, FormKind::ConvSigma(&sig));
        for i in 0..sd.rows {
            for p in sd.row_ptr[i]..sd.row_ptr[i + 1] {
                let j = sd.col_idx[p];
                assert!((sd.values[p] + cs.get(j, i)).abs() < 1e-14);
            }
        }
        let ge = assemble(&s, FormKind::EtaGradEta(&eta, SpaceKind::VectorP1));
        let se = assemble(&s, FormKind::SigmaEta(&eta));
        for i in 0..ge.rows {
            for p in ge.row_ptr[i]..ge.row_ptr[i + 1] {
                let j = ge.col_idx[p];
                assert!((ge.values[p] - se.get(j, i)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn monolithic_matches_dense_block_scatter() {
        // Smallest mesh: compose the workspace matrix and compare against a
        // dense matrix scattered block by block.
        let s = unit_spaces(1);
        let tf = 4.0;
        let mu = [1.0, 2.0, 3.0];
        let mut rng = Rng(9);
        let (eta, sig, uc) = rand_samples(&s, &mut rng);
        let mut ws = Step1Workspace::new(&s, tf, mu);
        let layout = ws.layout();
        let rhs = Step1Rhs {
            eta: vec![0.0; layout.n_eta],
            sigma: vec![0.0; layout.n_sigma],
            u: vec![0.0; layout.n_u],
        };
        let coeffs = Step1Coeffs {
            time_factor: tf,
            mu,
            eta_star: &eta,
            sigma_star: &sig,
            u_conv: &uc,
        };
        let sys = ws.assemble(&s, &coeffs, rhs, &[]);

        let n = layout.total();
        let mut dense = vec![vec![0.0f64; n]; n];
        let add = |m: &CsrMatrix, ro: usize, co: usize, sc: f64, t: bool, dense: &mut Vec<Vec<f64>>| {
            for r in 0..m.rows {
                for p in m.row_ptr[r]..m.row_ptr[r + 1] {
                    let c = m.col_idx[p];
                    if t {
                        dense[co + c][ro + r] += sc * m.values[p];
                    } else {
                        dense[ro + r][co + c] += sc * m.values[p];
                    }
                }
            }
        };
        let (eo, so, uo) = (layout.eta_off(), layout.sigma_off(), layout.u_off());
        add(&assemble_mass(&s, SpaceKind::ScalarP1), eo, eo, tf, false, &mut dense);
        add(&assemble_stiffness(&s, SpaceKind::ScalarP1), eo, eo, mu[0], false, &mut dense);
        add(&assemble_mass(&s, SpaceKind::VectorP1), so, so, tf + 1.0, false, &mut dense);
        add(&assemble(&s, FormKind::DivDiv), so, so, mu[1], false, &mut dense);
        add(&assemble(&s, FormKind::CurlCurl), so, so, mu[1], false, &mut dense);
        add(&assemble_mass(&s, SpaceKind::MiniVelocity), uo, uo, tf, false, &mut dense);
        add(&assemble_stiffness(&s, SpaceKind::MiniVelocity), uo, uo, mu[2], false, &mut dense);
        let ce = assemble(&s, FormKind::ConvEta(&eta));
        add(&ce, eo, uo, 1.0, false, &mut dense);
        add(&ce, eo, uo, -1.0, true, &mut dense);
        let se = assemble(&s, FormKind::SigmaEta(&eta));
        add(&se, eo, so, 1.0, false, &mut dense);
        add(&se, eo, so, -1.0, true, &mut dense);
        let cs = assemble(&s, FormKind::ConvSigma(&sig));
        add(&cs, so, uo, 1.0, false, &mut dense);
        add(&cs, so, uo, -1.0, true, &mut dense);
        add(&assemble(&s, FormKind::Trilinear(&uc)), uo, uo, 1.0, false, &mut dense);

        let got = sys.matrix.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (got[i][j] - dense[i][j]).abs() < 1e-13,
                    "mismatch at ({i},{j}): {} vs {}",
                    got[i][j],
                    dense[i][j]
                );
            }
        }
    }

    #[test]
    fn repeated_assembly_is_identical() {
        // The in-place rewrite must agree bitwise with itself step to step.
        let s = unit_spaces(2);
        let mut rng = Rng(77);
        let (eta, sig, uc) = rand_samples(&s, &mut rng);
        let mut ws = Step1Workspace::new(&s, 8.0, [1.0; 3]);
        let coeffs = Step1Coeffs {
            time_factor: 8.0,
            mu: [1.0; 3],
            eta_star: &eta,
            sigma_star: &sig,
            u_conv: &uc,
        };
        let layout = ws.layout();
        let mk_rhs = || Step1Rhs {
            eta: vec![0.0; layout.n_eta],
            sigma: vec![0.0; layout.n_sigma],
            u: vec![0.0; layout.n_u],
        };
        let constraints = crate::spaces::essential_values(&s, SpaceKind::MiniVelocity, |_, _| [0.0; 2])
            .into_iter()
            .map(|(d, v)| (layout.u_off() + d, v))
            .collect::<Vec<_>>();
        let a1 = {
            ws.assemble_in_place(&s, &coeffs, mk_rhs(), &constraints);
            ws.matrix().values.clone()
        };
        let a2 = {
            ws.assemble_in_place(&s, &coeffs, mk_rhs(), &constraints);
            ws.matrix().values.clone()
        };
        assert_eq!(a1, a2);
    }

    #[test]
    fn bordered_poisson_solves_mean_zero() {
        let s = unit_spaces(4);
        let a = bordered_pressure_poisson(&s);
        let n = s.m.dof_count;
        let mut rhs = vec![0.0; n + 1];
        // Compatible load: integral of (x - 1/2) over the unit square is 0.
        let load = load_scalar(&s, SpaceKind::PressureP1, &|x, _| x - 0.5);
        rhs[..n].copy_from_slice(&load);
        let sol = crate::sparse::lu_solve(&a, &rhs).unwrap();
        let field = Field {
            kind: SpaceKind::PressureP1,
            coeffs: sol[..n].to_vec(),
        };
        assert!(field.integral_p1(&s.mesh).abs() < 1e-10);
        assert!(sol[n].abs() < 1e-10, "multiplier for compatible data");
    }
}
