//! Structured triangulations of axis-aligned rectangles.
//!
//! A rectangle [0,lx] x [0,ly] is divided into nx x ny cells, each split into
//! two triangles along the same diagonal (bottom-left to top-right), which
//! gives a quasi-uniform family under refinement. Triangles are stored
//! counter-clockwise. Per-element geometry (area, gradients of the three
//! barycentric coordinate functions) is cached at build time since every
//! assembly loop needs it.

use crate::{Error, Result};
use std::collections::BTreeMap;

/// Which side of the rectangle a boundary entity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    /// Outward unit normal of this side.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }
}

/// A boundary edge: vertex pair, side tag and outward unit normal.
#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub verts: [usize; 2],
    pub side: Side,
    pub normal: [f64; 2],
}

/// Cached per-triangle geometry.
#[derive(Clone, Debug)]
pub struct ElemGeom {
    pub area: f64,
    /// Physical gradient of barycentric function lambda_i, i = 0,1,2.
    pub grad_bary: [[f64; 2]; 3],
}

/// Boundary classification of a single vertex.
#[derive(Clone, Debug, Default)]
pub struct VertexBoundary {
    /// Sides this vertex lies on (two entries at corners).
    pub sides: Vec<Side>,
    /// Outward normals of those sides, matching `sides` order.
    pub normals: Vec<[f64; 2]>,
}

impl VertexBoundary {
    pub fn is_corner(&self) -> bool {
        self.sides.len() == 2
    }
}

/// Conforming triangulation of a rectangle.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub elem_geom: Vec<ElemGeom>,
    /// Max element diameter (the cell diagonal for this uniform split).
    pub h_max: f64,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Build a uniform nx x ny triangulation of [0,lx] x [0,ly].
pub fn build_rect_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<TriMesh> {
    if !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rectangle dimensions must be positive, got lx={lx}, ly={ly}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be at least 1, got nx={nx}, ny={ny}"
        )));
    }

    let dx = lx / nx as f64;
    let dy = ly / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * dx, j as f64 * dy]);
        }
    }

    // Each cell splits along the v00-v11 diagonal; both triangles CCW.
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v11 = vid(i + 1, j + 1);
            let v01 = vid(i, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let elem_geom: Vec<ElemGeom> = triangles
        .iter()
        .map(|t| elem_geometry(&vertices, *t))
        .collect();
    for (k, g) in elem_geom.iter().enumerate() {
        if !(g.area > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "triangle {k} has non-positive area {}",
                g.area
            )));
        }
    }

    let boundary_edges = classify_boundary_edges(&vertices, &triangles, lx, ly)?;

    let h_max = (dx * dx + dy * dy).sqrt();
    Ok(TriMesh {
        vertices,
        triangles,
        boundary_edges,
        elem_geom,
        h_max,
        lx,
        ly,
        nx,
        ny,
    })
}

fn elem_geometry(vertices: &[[f64; 2]], t: [usize; 3]) -> ElemGeom {
    let p = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det;
    let mut grad_bary = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        grad_bary[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    ElemGeom { area, grad_bary }
}

fn classify_boundary_edges(
    vertices: &[[f64; 2]],
    triangles: &[[usize; 3]],
    lx: f64,
    ly: f64,
) -> Result<Vec<BoundaryEdge>> {
    // Count adjacent triangles per undirected edge.
    let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in triangles {
        for e in 0..3 {
            let a = t[e];
            let b = t[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    let tol = 1e-9 * lx.max(ly);
    let mut edges = Vec::new();
    for (&(a, b), &count) in &edge_count {
        match count {
            1 => {
                let pa = vertices[a];
                let pb = vertices[b];
                let side = if pa[0].abs() < tol && pb[0].abs() < tol {
                    Side::Left
                } else if (pa[0] - lx).abs() < tol && (pb[0] - lx).abs() < tol {
                    Side::Right
                } else if pa[1].abs() < tol && pb[1].abs() < tol {
                    Side::Bottom
                } else if (pa[1] - ly).abs() < tol && (pb[1] - ly).abs() < tol {
                    Side::Top
                } else {
                    return Err(Error::InvalidArgument(format!(
                        "boundary edge ({a},{b}) lies on no rectangle side"
                    )));
                };
                edges.push(BoundaryEdge {
                    verts: [a, b],
                    side,
                    normal: side.normal(),
                });
            }
            2 => {}
            n => {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) belongs to {n} triangles"
                )))
            }
        }
    }
    Ok(edges)
}

impl TriMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tri_count(&self) -> usize {
        self.triangles.len()
    }

    /// Total edge count (interior + boundary), for the Euler relation.
    pub fn edge_count(&self) -> usize {
        let mut edges: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let a = t[e];
                let b = t[(e + 1) % 3];
                edges.insert((a.min(b), a.max(b)), ());
            }
        }
        edges.len()
    }

    /// Sum of all element areas.
    pub fn total_area(&self) -> f64 {
        self.elem_geom.iter().map(|g| g.area).sum()
    }

    /// Physical coordinates of a barycentric point inside a triangle.
    pub fn point(&self, tri: usize, bary: [f64; 3]) -> [f64; 2] {
        let t = self.triangles[tri];
        let mut p = [0.0; 2];
        for (i, &v) in t.iter().enumerate() {
            p[0] += bary[i] * self.vertices[v][0];
            p[1] += bary[i] * self.vertices[v][1];
        }
        p
    }

    /// Boundary classification per vertex. Interior vertices are absent.
    /// Corner vertices carry both adjacent sides.
    pub fn boundary_vertex_info(&self) -> BTreeMap<usize, VertexBoundary> {
        let mut map: BTreeMap<usize, VertexBoundary> = BTreeMap::new();
        for edge in &self.boundary_edges {
            for &v in &edge.verts {
                let entry = map.entry(v).or_default();
                if !entry.sides.contains(&edge.side) {
                    entry.sides.push(edge.side);
                    entry.normals.push(edge.normal);
                }
            }
        }
        for vb in map.values_mut() {
            let mut pairs: Vec<(Side, [f64; 2])> =
                vb.sides.iter().copied().zip(vb.normals.iter().copied()).collect();
            pairs.sort_by_key(|(s, _)| *s);
            vb.sides = pairs.iter().map(|(s, _)| *s).collect();
            vb.normals = pairs.iter().map(|(_, n)| *n).collect();
        }
        map
    }
}
