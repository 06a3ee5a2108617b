//! Legacy ASCII VTK output for triangle meshes with point data.

use crate::mesh::TriMesh;
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Format with 17 significant digits; round-trips f64 exactly.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write vertex scalars and vectors over a triangulation as legacy ASCII
/// VTK (version 3.0, unstructured grid, cell type 5). Field order follows
/// the argument order and is deterministic.
pub fn write_vtk(
    mesh: &TriMesh,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[[f64; 2]])],
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("gu-crns fields\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    let v = mesh.vertex_count();
    let t = mesh.tri_count();
    out.push_str(&format!("POINTS {v} double\n"));
    for p in &mesh.vertices {
        out.push_str(&format!("{} {} 0\n", fmt(p[0]), fmt(p[1])));
    }
    out.push_str(&format!("CELLS {t} {}\n", 4 * t));
    for tri in &mesh.triangles {
        out.push_str(&format!("3 {} {} {}\n", tri[0], tri[1], tri[2]));
    }
    out.push_str(&format!("CELL_TYPES {t}\n"));
    for _ in 0..t {
        out.push_str("5\n");
    }
    out.push_str(&format!("POINT_DATA {v}\n"));
    for (name, values) in scalars {
        assert_eq!(values.len(), v, "scalar '{name}' length");
        out.push_str(&format!("SCALARS {name} double 1\n"));
        out.push_str("LOOKUP_TABLE default\n");
        for &val in *values {
            out.push_str(&fmt(val));
            out.push('\n');
        }
    }
    for (name, values) in vectors {
        assert_eq!(values.len(), v, "vector '{name}' length");
        out.push_str(&format!("VECTORS {name} double\n"));
        for val in *values {
            out.push_str(&format!("{} {} 0\n", fmt(val[0]), fmt(val[1])));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Minimal reader for round-trip checks: recovers point coordinates and one
/// named scalar array.
pub fn read_vtk_scalar(path: &Path, name: &str) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().peekable();
    let mut points = Vec::new();
    let mut values = Vec::new();
    while let Some(line) = lines.next() {
        if let Some(rest) = line.strip_prefix("POINTS ") {
            let n: usize = rest
                .split_whitespace()
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad POINTS header in {}", path.display())))?;
            for _ in 0..n {
                let row = lines
                    .next()
                    .ok_or_else(|| Error::Config("truncated POINTS".into()))?;
                let mut it = row.split_whitespace();
                let x: f64 = it.next().unwrap_or("&").parse().map_err(|_| {
                    Error::Config(format!("bad point row '{row}'"))
                })?;
                let y: f64 = it.next().unwrap_or("&").parse().map_err(|_| {
                    Error::Config(format!("bad point row '{row}'"))
                })?;
                points.push([x, y]);
            }
        } else if line.starts_with(&format!("SCALARS {name} ")) {
            let _ = lines.next(); // LOOKUP_TABLE
            for _ in 0..points.len() {
                let row = lines
                    .next()
                    .ok_or_else(|| Error::Config("truncated SCALARS".into()))?;
                values.push(
                    row.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad scalar row '{row}'")))?,
                );
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Config(format!(
            "scalar '{name}' not found in {}",
            path.display()
        )));
    }
    Ok((points, values))
}
