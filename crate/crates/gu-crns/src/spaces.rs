//! Discrete spaces, degree-of-freedom layouts and fields.
//!
//! Four spaces are used:
//! - `ScalarP1`: continuous piecewise linears, no essential conditions
//!   (the cell density carries a natural zero-flux condition).
//! - `VectorP1`: continuous vector P1 for the chemical gradient, with the
//!   normal component constrained to zero on each side; at rectangle
//!   corners both components are constrained since the two side normals
//!   span the plane.
//! - `MiniVelocity`: vector P1 enriched with one cubic bubble per element
//!   and component; all boundary vertex dofs carry Dirichlet data, bubbles
//!   are never constrained (they vanish on element boundaries).
//! - `PressureP1`: continuous P1 with the zero-mean condition enforced at
//!   solve time through a Lagrange multiplier, not by dof elimination.
//!
//! Dof layout: vertex dofs first (components adjacent for vector spaces),
//! then for `MiniVelocity` two bubble dofs per element.

use crate::mesh::TriMesh;
use crate::quadrature::{self, QuadratureRule};
use crate::sparse::LuFactors;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    ScalarP1,
    VectorP1,
    MiniVelocity,
    PressureP1,
}

impl SpaceKind {
    pub fn components(self) -> usize {
        match self {
            SpaceKind::ScalarP1 | SpaceKind::PressureP1 => 1,
            SpaceKind::VectorP1 | SpaceKind::MiniVelocity => 2,
        }
    }

    /// Scalar shape functions per element (3 for P1, 4 with the bubble).
    pub fn shapes_per_elem(self) -> usize {
        match self {
            SpaceKind::MiniVelocity => 4,
            _ => 3,
        }
    }

    pub fn local_dof_count(self) -> usize {
        self.components() * self.shapes_per_elem()
    }
}

/// A constrained degree of freedom and where it comes from.
#[derive(Clone, Copy, Debug)]
pub struct EssentialDof {
    pub dof: usize,
    pub vertex: usize,
    pub comp: usize,
}

#[derive(Clone, Debug)]
pub struct FESpace {
    pub kind: SpaceKind,
    pub dof_count: usize,
    pub essential: Vec<EssentialDof>,
    is_essential: Vec<bool>,
}

impl FESpace {
    pub fn is_essential(&self, dof: usize) -> bool {
        self.is_essential[dof]
    }
}

/// Build the dof layout and essential set for one space on a mesh.
pub fn build_space(mesh: &TriMesh, kind: SpaceKind) -> FESpace {
    let v = mesh.vertex_count();
    let t = mesh.tri_count();
    let dof_count = match kind {
        SpaceKind::ScalarP1 | SpaceKind::PressureP1 => v,
        SpaceKind::VectorP1 => 2 * v,
        SpaceKind::MiniVelocity => 2 * v + 2 * t,
    };
    let mut essential = Vec::new();
    match kind {
        SpaceKind::MiniVelocity => {
            for (&vert, _) in &mesh.boundary_vertex_info() {
                for comp in 0..2 {
                    essential.push(EssentialDof {
                        dof: 2 * vert + comp,
                        vertex: vert,
                        comp,
                    });
                }
            }
        }
        SpaceKind::VectorP1 => {
            for (&vert, info) in &mesh.boundary_vertex_info() {
                if info.is_corner() {
                    for comp in 0..2 {
                        essential.push(EssentialDof {
                            dof: 2 * vert + comp,
                            vertex: vert,
                            comp,
                        });
                    }
                } else {
                    let n = info.normals[0];
                    let comp = if n[0].abs() > 0.5 { 0 } else { 1 };
                    essential.push(EssentialDof {
                        dof: 2 * vert + comp,
                        vertex: vert,
                        comp,
                    });
                }
            }
        }
        _ => {}
    }
    essential.sort_by_key(|e| e.dof);
    let mut is_essential = vec![false; dof_count];
    for e in &essential {
        is_essential[e.dof] = true;
    }
    FESpace {
        kind,
        dof_count,
        essential,
        is_essential,
    }
}

/// The mesh together with all four spaces and the default quadrature rule.
#[derive(Clone, Debug)]
pub struct Spaces {
    pub mesh: TriMesh,
    pub q: FESpace,
    pub x: FESpace,
    pub y: FESpace,
    pub m: FESpace,
    pub rule: QuadratureRule,
}

impl Spaces {
    pub fn build(mesh: TriMesh) -> Spaces {
        let q = build_space(&mesh, SpaceKind::ScalarP1);
        let x = build_space(&mesh, SpaceKind::VectorP1);
        let y = build_space(&mesh, SpaceKind::MiniVelocity);
        let m = build_space(&mesh, SpaceKind::PressureP1);
        let rule = quadrature::rule_for_degree(quadrature::DEFAULT_DEGREE).expect("default rule");
        Spaces { mesh, q, x, y, m, rule }
    }

    pub fn space(&self, kind: SpaceKind) -> &FESpace {
        match kind {
            SpaceKind::ScalarP1 => &self.q,
            SpaceKind::VectorP1 => &self.x,
            SpaceKind::MiniVelocity => &self.y,
            SpaceKind::PressureP1 => &self.m,
        }
    }
}

/// Scalar shape values and physical gradients on one element at one
/// barycentric point. Slots 0..3 are the vertex functions; slot 3 is the
/// bubble when present.
#[derive(Clone, Copy, Debug)]
pub struct ShapeSet {
    pub val: [f64; 4],
    pub grad: [[f64; 2]; 4],
    pub n: usize,
}

/// Evaluate the scalar shape set of a space on an element.
pub fn eval_basis(mesh: &TriMesh, kind: SpaceKind, elem: usize, bary: [f64; 3]) -> ShapeSet {
    let g = &mesh.elem_geom[elem];
    let mut val = [0.0; 4];
    let mut grad = [[0.0; 2]; 4];
    for i in 0..3 {
        val[i] = bary[i];
        grad[i] = g.grad_bary[i];
    }
    let n = kind.shapes_per_elem();
    if n == 4 {
        val[3] = 27.0 * bary[0] * bary[1] * bary[2];
        for d in 0..2 {
            grad[3][d] = 27.0
                * (g.grad_bary[0][d] * bary[1] * bary[2]
                    + bary[0] * g.grad_bary[1][d] * bary[2]
                    + bary[0] * bary[1] * g.grad_bary[2][d]);
        }
    }
    ShapeSet { val, grad, n }
}

/// Global dofs of an element in local order. For vector spaces the order is
/// (shape 0, comp 0), (shape 0, comp 1), (shape 1, comp 0), ...
pub fn local_dofs(mesh: &TriMesh, kind: SpaceKind, elem: usize, out: &mut Vec<usize>) {
    out.clear();
    let t = mesh.triangles[elem];
    match kind {
        SpaceKind::ScalarP1 | SpaceKind::PressureP1 => {
            out.extend_from_slice(&[t[0], t[1], t[2]]);
        }
        SpaceKind::VectorP1 => {
            for &v in &t {
                out.push(2 * v);
                out.push(2 * v + 1);
            }
        }
        SpaceKind::MiniVelocity => {
            for &v in &t {
                out.push(2 * v);
                out.push(2 * v + 1);
            }
            let base = 2 * mesh.vertex_count() + 2 * elem;
            out.push(base);
            out.push(base + 1);
        }
    }
}

/// A coefficient vector in one discrete space.
#[derive(Clone, Debug)]
pub struct Field {
    pub kind: SpaceKind,
    pub coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(space: &FESpace) -> Field {
        Field {
            kind: space.kind,
            coeffs: vec![0.0; space.dof_count],
        }
    }

    /// Scalar P1 value at a barycentric point.
    pub fn eval_scalar(&self, mesh: &TriMesh, elem: usize, bary: [f64; 3]) -> f64 {
        debug_assert!(self.kind.components() == 1);
        let t = mesh.triangles[elem];
        (0..3).map(|i| bary[i] * self.coeffs[t[i]]).sum()
    }

    /// Gradient of a scalar P1 field, constant per element.
    pub fn grad_p1(&self, mesh: &TriMesh, elem: usize) -> [f64; 2] {
        debug_assert!(self.kind.components() == 1);
        let t = mesh.triangles[elem];
        let g = &mesh.elem_geom[elem];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += self.coeffs[t[i]] * g.grad_bary[i][0];
            out[1] += self.coeffs[t[i]] * g.grad_bary[i][1];
        }
        out
    }

    /// Vector value at a barycentric point (VectorP1 and MiniVelocity).
    pub fn eval_vector(&self, mesh: &TriMesh, elem: usize, bary: [f64; 3]) -> [f64; 2] {
        debug_assert!(self.kind.components() == 2);
        let t = mesh.triangles[elem];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += bary[i] * self.coeffs[2 * t[i]];
            out[1] += bary[i] * self.coeffs[2 * t[i] + 1];
        }
        if self.kind == SpaceKind::MiniVelocity {
            let b = 27.0 * bary[0] * bary[1] * bary[2];
            let base = 2 * mesh.vertex_count() + 2 * elem;
            out[0] += b * self.coeffs[base];
            out[1] += b * self.coeffs[base + 1];
        }
        out
    }

    /// Exact integral of a scalar P1 field.
    pub fn integral_p1(&self, mesh: &TriMesh) -> f64 {
        debug_assert!(self.kind.components() == 1);
        let mut s = 0.0;
        for (k, t) in mesh.triangles.iter().enumerate() {
            let a = mesh.elem_geom[k].area;
            s += a / 3.0 * (self.coeffs[t[0]] + self.coeffs[t[1]] + self.coeffs[t[2]]);
        }
        s
    }
}

/// The end-of-step velocity: the intermediate field plus the gradient of a
/// P1 gauge potential. The gradient part is piecewise constant and
/// discontinuous across elements, so this pair is kept unreduced and
/// evaluated pointwise.
#[derive(Clone, Debug)]
pub struct CompositeVelocity {
    pub hat: Field,
    pub gauge: Field,
}

impl CompositeVelocity {
    pub fn eval(&self, mesh: &TriMesh, elem: usize, bary: [f64; 3]) -> [f64; 2] {
        let mut v = self.hat.eval_vector(mesh, elem, bary);
        let g = self.gauge.grad_p1(mesh, elem);
        v[0] += g[0];
        v[1] += g[1];
        v
    }

    /// ||u||_{L2}^2 by quadrature.
    pub fn norm_sq(&self, mesh: &TriMesh, rule: &QuadratureRule) -> f64 {
        let mut s = 0.0;
        for elem in 0..mesh.tri_count() {
            let area = mesh.elem_geom[elem].area;
            let mut local = 0.0;
            for (q, bary) in rule.points.iter().enumerate() {
                let v = self.eval(mesh, elem, *bary);
                local += rule.weights[q] * (v[0] * v[0] + v[1] * v[1]);
            }
            s += area * local;
        }
        s
    }
}

/// L2-project an analytic scalar function into a scalar space.
pub fn l2_project_scalar(
    spaces: &Spaces,
    kind: SpaceKind,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Field> {
    let mass = crate::assembly::assemble_mass(spaces, kind);
    let rhs = crate::assembly::load_scalar(spaces, kind, &f);
    let lu = LuFactors::factor(&mass)?;
    let coeffs = lu
        .solve_checked(&mass, &rhs)
        .map_err(|e| projection_error(e, kind))?;
    Ok(Field { kind, coeffs })
}

/// L2-project an analytic vector function. Essential dofs are overwritten
/// after the mass solve: boundary data for the velocity space, zero for the
/// normal-constrained space.
pub fn l2_project_vector(
    spaces: &Spaces,
    kind: SpaceKind,
    f: impl Fn(f64, f64) -> [f64; 2],
) -> Result<Field> {
    let space = spaces.space(kind);
    let mass = crate::assembly::assemble_mass(spaces, kind);
    let rhs = crate::assembly::load_vector(spaces, kind, &f);
    let lu = LuFactors::factor(&mass)?;
    let mut coeffs = lu
        .solve_checked(&mass, &rhs)
        .map_err(|e| projection_error(e, kind))?;
    for e in &space.essential {
        let p = spaces.mesh.vertices[e.vertex];
        coeffs[e.dof] = match kind {
            SpaceKind::MiniVelocity => f(p[0], p[1])[e.comp],
            _ => 0.0,
        };
    }
    Ok(Field { kind, coeffs })
}

fn projection_error(e: Error, kind: SpaceKind) -> Error {
    match e {
        Error::SolverFailure {
            what,
            iterations,
            residual,
        } => Error::SolverFailure {
            what: format!("mass solve for {kind:?} projection: {what}"),
            iterations,
            residual,
        },
        other => other,
    }
}

/// Boundary values for every essential dof of a space, from a vector-valued
/// trace function.
pub fn essential_values(
    spaces: &Spaces,
    kind: SpaceKind,
    g: impl Fn(f64, f64) -> [f64; 2],
) -> Vec<(usize, f64)> {
    let space = spaces.space(kind);
    space
        .essential
        .iter()
        .map(|e| {
            let p = spaces.mesh.vertices[e.vertex];
            (e.dof, g(p[0], p[1])[e.comp])
        })
        .collect()
}

/// Replace constrained rows by the identity with the prescribed value on the
/// right-hand side, and eliminate constrained columns into the rhs. The
/// matrix pattern must contain the diagonal of every constrained dof.
pub fn apply_dirichlet(
    matrix: &mut crate::sparse::CsrMatrix,
    rhs: &mut [f64],
    constraints: &[(usize, f64)],
) {
    let n = matrix.rows;
    let mut value = vec![0.0f64; n];
    let mut constrained = vec![false; n];
    for &(dof, g) in constraints {
        constrained[dof] = true;
        value[dof] = g;
    }
    for r in 0..n {
        if constrained[r] {
            for p in matrix.row_ptr[r]..matrix.row_ptr[r + 1] {
                matrix.values[p] = if matrix.col_idx[p] == r { 1.0 } else { 0.0 };
            }
            rhs[r] = value[r];
        } else {
            for p in matrix.row_ptr[r]..matrix.row_ptr[r + 1] {
                let c = matrix.col_idx[p];
                if constrained[c] {
                    rhs[r] -= matrix.values[p] * value[c];
                    matrix.values[p] = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::sparse::CsrMatrix;
    use std::f64::consts::PI;

    fn unit_spaces(n: usize) -> Spaces {
        Spaces::build(build_rect_mesh(1.0, 1.0, n, n).unwrap())
    }

    #[test]
    fn dof_counts() {
        let s = unit_spaces(2);
        assert_eq!(s.q.dof_count, 9);
        assert_eq!(s.x.dof_count, 18);
        assert_eq!(s.y.dof_count, 2 * 9 + 2 * 8);
        assert_eq!(s.m.dof_count, 9);
    }

    #[test]
    fn essential_sets() {
        let s = unit_spaces(2);
        // All 8 boundary vertices, both components, for the velocity.
        assert_eq!(s.y.essential.len(), 16);
        // Bubble dofs unconstrained.
        assert!(s.y.essential.iter().all(|e| e.dof < 18));
        // X: 4 corners x 2 + 4 mid-side x 1 = 12 constrained dofs.
        assert_eq!(s.x.essential.len(), 12);
        // Vertex (0.5, 0) is index 1, bottom side: y-component constrained.
        assert!(s.x.is_essential(2 * 1 + 1));
        assert!(!s.x.is_essential(2 * 1));
        // Scalar spaces unconstrained.
        assert!(s.q.essential.is_empty() && s.m.essential.is_empty());
    }

    #[test]
    fn shape_values_at_vertices_and_centroid() {
        let s = unit_spaces(1);
        let at_vertex = eval_basis(&s.mesh, SpaceKind::MiniVelocity, 0, [1.0, 0.0, 0.0]);
        assert_eq!(at_vertex.n, 4);
        assert_eq!(&at_vertex.val[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(at_vertex.val[3], 0.0);
        let c = 1.0 / 3.0;
        let at_centroid = eval_basis(&s.mesh, SpaceKind::MiniVelocity, 0, [c, c, c]);
        assert!((at_centroid.val[3] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn p1_partition_of_unity_and_gradients() {
        let s = unit_spaces(3);
        for elem in 0..s.mesh.tri_count() {
            for bary in &s.rule.points {
                let sh = eval_basis(&s.mesh, SpaceKind::ScalarP1, elem, *bary);
                let sum: f64 = sh.val[..3].iter().sum();
                assert!((sum - 1.0).abs() <= 1e-14);
                let gx: f64 = sh.grad[..3].iter().map(|g| g[0]).sum();
                let gy: f64 = sh.grad[..3].iter().map(|g| g[1]).sum();
                assert!(gx.abs() <= 1e-13 && gy.abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn project_constant_and_linear() {
        let s = unit_spaces(3);
        let f3 = l2_project_scalar(&s, SpaceKind::ScalarP1, |_, _| 3.0).unwrap();
        assert!(f3.coeffs.iter().all(|&c| (c - 3.0).abs() < 1e-10));
        let lin = l2_project_scalar(&s, SpaceKind::ScalarP1, |x, y| 2.0 * x + y).unwrap();
        for (v, p) in lin.coeffs.iter().zip(&s.mesh.vertices) {
            assert!((v - (2.0 * p[0] + p[1])).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_error_second_order() {
        // Halving h quarters the L2 projection error for a smooth function.
        let f = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let mut errs = Vec::new();
        for n in [8usize, 16] {
            let s = unit_spaces(n);
            let proj = l2_project_scalar(&s, SpaceKind::ScalarP1, f).unwrap();
            let mut e2 = 0.0;
            for elem in 0..s.mesh.tri_count() {
                let area = s.mesh.elem_geom[elem].area;
                for (q, bary) in s.rule.points.iter().enumerate() {
                    let p = s.mesh.point(elem, *bary);
                    let d = proj.eval_scalar(&s.mesh, elem, *bary) - f(p[0], p[1]);
                    e2 += area * s.rule.weights[q] * d * d;
                }
            }
            errs.push(e2.sqrt());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (ratio - 4.0).abs() < 0.6,
            "projection error ratio {ratio}, want about 4"
        );
    }

    #[test]
    fn vector_projection_respects_constraints() {
        let s = unit_spaces(4);
        // Data violating the normal constraint: projection must still land
        // in the constrained space.
        let f = |_x: f64, _y: f64| [1.0, 1.0];
        let sig = l2_project_vector(&s, SpaceKind::VectorP1, f).unwrap();
        for e in &s.x.essential {
            assert_eq!(sig.coeffs[e.dof], 0.0);
        }
        let u = l2_project_vector(&s, SpaceKind::MiniVelocity, f).unwrap();
        for e in &s.y.essential {
            assert_eq!(u.coeffs[e.dof], 1.0);
        }
    }

    #[test]
    fn composite_velocity_eval() {
        let s = unit_spaces(2);
        let mut hat = Field::zeros(&s.y);
        for (v, p) in s.mesh.vertices.iter().enumerate() {
            hat.coeffs[2 * v] = p[1];
            hat.coeffs[2 * v + 1] = 0.0;
        }
        // gauge = x so grad gauge = (1, 0).
        let mut gauge = Field::zeros(&s.m);
        for (v, p) in s.mesh.vertices.iter().enumerate() {
            gauge.coeffs[v] = p[0];
        }
        let u = CompositeVelocity { hat, gauge };
        let val = u.eval(&s.mesh, 0, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let p = s.mesh.point(0, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!((val[0] - (p[1] + 1.0)).abs() < 1e-14);
        assert!((val[1]).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_zero_and_manufactured_value() {
        // Constrain a small velocity mass system; constrained dofs must
        // solve to exactly the prescribed trace.
        let s = unit_spaces(2);
        let mass = crate::assembly::assemble_mass(&s, SpaceKind::MiniVelocity);
        let texact = 1.0f64;
        let g = |x: f64, y: f64| -> [f64; 2] {
            [
                (PI * x).sin() * (PI * y).cos() * texact.sin(),
                -(PI * x).cos() * (PI * y).sin() * texact.sin(),
            ]
        };
        let mut m = mass.clone();
        let mut rhs = vec![0.0; s.y.dof_count];
        let constraints = essential_values(&s, SpaceKind::MiniVelocity, g);
        apply_dirichlet(&mut m, &mut rhs, &constraints);
        let x = crate::sparse::lu_solve(&m, &rhs).unwrap();
        // Boundary vertex (0, 0.5) is index 3: u_y = -sin(pi/2) sin(1).
        let expect = -(PI * 0.5).sin() * texact.sin();
        assert!((x[2 * 3 + 1] - expect).abs() < 1e-12);
        // Homogeneous version solves to exactly zero at constrained dofs.
        let mut m0 = mass.clone();
        let mut rhs0 = vec![0.0; s.y.dof_count];
        let zeros: Vec<(usize, f64)> = constraints.iter().map(|&(d, _)| (d, 0.0)).collect();
        apply_dirichlet(&mut m0, &mut rhs0, &zeros);
        let x0 = crate::sparse::lu_solve(&m0, &rhs0).unwrap();
        for &(d, _) in &zeros {
            assert_eq!(x0[d], 0.0);
        }
    }

    #[test]
    fn inf_sup_constant_monitored_under_refinement() {
        // Smallest generalized eigenvalue of the pressure Schur complement
        // B K^{-1} B^T q = lambda M_p q on mean-zero pressures, with K the
        // velocity stiffness on the zero-trace dofs. Its square root is the
        // inf-sup constant; it must stay bounded away from zero as h
        // refines. Monitored with a loose floor, not a pinned constant.
        use crate::assembly::{assemble, assemble_mass, assemble_stiffness, FormKind};
        use crate::sparse::test_util::dense_solve;
        use crate::sparse::LuFactors;

        let beta_for = |n: usize| -> f64 {
            let s = unit_spaces(n);
            let b_full = assemble(&s, FormKind::PressureDiv);
            let k_full = assemble_stiffness(&s, SpaceKind::MiniVelocity);
            let m_p = assemble_mass(&s, SpaceKind::PressureP1);
            // Restrict to unconstrained velocity dofs.
            let free: Vec<usize> = (0..s.y.dof_count).filter(|&d| !s.y.is_essential(d)).collect();
            let mut index = vec![usize::MAX; s.y.dof_count];
            for (i, &d) in free.iter().enumerate() {
                index[d] = i;
            }
            let nf = free.len();
            let mut k_trips = Vec::new();
            for r in 0..k_full.rows {
                if index[r] == usize::MAX {
                    continue;
                }
                for p in k_full.row_ptr[r]..k_full.row_ptr[r + 1] {
                    let c = k_full.col_idx[p];
                    if index[c] != usize::MAX {
                        k_trips.push((index[r], index[c], k_full.values[p]));
                    }
                }
            }
            let k = crate::sparse::CsrMatrix::from_triplets(nf, nf, &k_trips).unwrap();
            let k_lu = LuFactors::factor(&k).unwrap();
            let np = s.m.dof_count;
            // Dense Schur complement: column j is B K^{-1} (B^T e_j).
            let mut schur = vec![vec![0.0f64; np]; np];
            for j in 0..np {
                let mut ej = vec![0.0; np];
                ej[j] = 1.0;
                let bt = b_full.matvec_t(&ej);
                let bt_free: Vec<f64> = free.iter().map(|&d| bt[d]).collect();
                let kin = k_lu.solve(&bt_free);
                let mut full = vec![0.0; s.y.dof_count];
                for (i, &d) in free.iter().enumerate() {
                    full[d] = kin[i];
                }
                let col = b_full.matvec(&full);
                for i in 0..np {
                    schur[i][j] = col[i];
                }
            }
            let m_dense = m_p.to_dense();
            // M-weighted deflation of constants.
            let ones = vec![1.0; np];
            let m_ones = m_p.matvec(&ones);
            let denom: f64 = m_ones.iter().sum();
            let deflate = |v: &mut Vec<f64>| {
                let c: f64 = v.iter().zip(&m_ones).map(|(a, b)| a * b).sum::<f64>() / denom;
                for x in v.iter_mut() {
                    *x -= c;
                }
            };
            // Inverse power iteration on the pencil (S, M_p).
            let mut q: Vec<f64> = (0..np).map(|i| ((i * 37 + 11) % 17) as f64 - 8.0).collect();
            deflate(&mut q);
            let mut lambda = 0.0;
            for _ in 0..60 {
                let mq = m_p.matvec(&q);
                let mut z = dense_solve(&schur, &mq).expect("schur solve");
                deflate(&mut z);
                let zn = z.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in z.iter_mut() {
                    *x /= zn;
                }
                // Rayleigh quotient lambda = (q S q) / (q M q).
                let sq: Vec<f64> = (0..np)
                    .map(|i| (0..np).map(|j| schur[i][j] * z[j]).sum())
                    .collect();
                let num: f64 = z.iter().zip(&sq).map(|(a, b)| a * b).sum();
                let den: f64 = {
                    let mz = (0..np)
                        .map(|i| (0..np).map(|j| m_dense[i][j] * z[j]).sum::<f64>())
                        .collect::<Vec<f64>>();
                    z.iter().zip(&mz).map(|(a, b)| a * b).sum()
                };
                lambda = num / den;
                q = z;
            }
            lambda.sqrt()
        };
        let betas: Vec<f64> = [4usize, 8, 16].iter().map(|&n| beta_for(n)).collect();
        println!("inf-sup constants under refinement: {betas:?}");
        for &b in &betas {
            assert!(b > 0.05, "inf-sup constant collapsed: {betas:?}");
        }
        assert!(
            betas[2] > 0.5 * betas[0],
            "inf-sup constant degrading under refinement: {betas:?}"
        );
    }

    #[test]
    fn dirichlet_all_dofs_of_smallest_mesh() {
        // Constraining every dof of a one-cell scalar system returns the
        // nodal values of g.
        let s = unit_spaces(1);
        let mass = crate::assembly::assemble_mass(&s, SpaceKind::ScalarP1);
        let mut m: CsrMatrix = mass;
        let mut rhs = vec![0.0; s.q.dof_count];
        let g = |x: f64, y: f64| 1.0 + 2.0 * x - y;
        let constraints: Vec<(usize, f64)> = s
            .mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(v, p)| (v, g(p[0], p[1])))
            .collect();
        apply_dirichlet(&mut m, &mut rhs, &constraints);
        let x = crate::sparse::lu_solve(&m, &rhs).unwrap();
        for (v, p) in s.mesh.vertices.iter().enumerate() {
            assert!((x[v] - g(p[0], p[1])).abs() < 1e-13);
        }
    }
}
