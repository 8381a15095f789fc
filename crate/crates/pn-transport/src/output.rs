//! File writers: CSV dumps of angular and spatial matrices and a legacy
//! ASCII VTK writer for the scalar flux. All writers emit a fixed number
//! format so repeated runs produce byte-identical files.

use crate::angular_basis::ModeIndex;
use crate::spatial_mesh::{CsrMatrix, TriMesh};
use crate::transport_operators::ParityField;
use crate::Result;
use ndarray::ArrayView2;
use std::io::Write;
use std::path::Path;

/// Dense angular matrix dump, every entry: `row_l,row_m,col_l,col_m,value`.
pub fn write_mode_matrix_csv(
    mut out: impl Write,
    rows: &[ModeIndex],
    cols: &[ModeIndex],
    matrix: ArrayView2<f64>,
) -> std::io::Result<()> {
    assert_eq!(matrix.nrows(), rows.len());
    assert_eq!(matrix.ncols(), cols.len());
    writeln!(out, "row_l,row_m,col_l,col_m,value")?;
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            writeln!(out, "{},{},{},{},{:.16e}", r.l, r.m, c.l, c.m, matrix[[i, j]])?;
        }
    }
    Ok(())
}

/// Sparse angular matrix dump in the same format, nonzero entries only.
pub fn write_mode_triplets_csv(
    mut out: impl Write,
    rows: &[ModeIndex],
    cols: &[ModeIndex],
    triplets: &[(usize, usize, f64)],
) -> std::io::Result<()> {
    writeln!(out, "row_l,row_m,col_l,col_m,value")?;
    for &(i, j, v) in triplets {
        let (r, c) = (rows[i], cols[j]);
        writeln!(out, "{},{},{},{},{:.16e}", r.l, r.m, c.l, c.m, v)?;
    }
    Ok(())
}

/// Spatial sparse matrix dump: `row,col,value` with integer indices.
pub fn write_spatial_matrix_csv(mut out: impl Write, matrix: &CsrMatrix) -> std::io::Result<()> {
    writeln!(out, "row,col,value")?;
    for (r, c, v) in matrix.triplets() {
        writeln!(out, "{r},{c},{:.16e}", v)?;
    }
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with one point scalar per vertex.
pub fn write_vtk_point_scalar(
    mut out: impl Write,
    mesh: &TriMesh,
    name: &str,
    values: &[f64],
) -> std::io::Result<()> {
    assert_eq!(values.len(), mesh.n_vertices());
    writeln!(out, "# vtk DataFile Version 2.0")?;
    writeln!(out, "{name}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(out, "{:.16e} {:.16e} 0.0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {}", mesh.n_triangles())?;
    for _ in 0..mesh.n_triangles() {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {}", mesh.n_vertices())?;
    writeln!(out, "SCALARS {name} double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

/// Writes the scalar flux ∫φ ds to a VTK file: the vertex values of the
/// first even coefficient (the constant-in-angle mode) scaled by √(4π).
pub fn write_scalar_flux(field: &ParityField, mesh: &TriMesh, path: &Path) -> Result<()> {
    assert_eq!(field.even.nrows(), mesh.n_vertices(), "field does not match mesh");
    let scale = (4.0 * std::f64::consts::PI).sqrt();
    let values: Vec<f64> = field.even.column(0).iter().map(|&c| scale * c).collect();
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_vtk_point_scalar(&mut buf, mesh, "scalar_flux", &values)?;
    buf.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular_basis::{streaming_matrices, AngularBasis};
    use crate::spatial_mesh::{assemble_spatial, unit_square_mesh};

    #[test]
    fn mode_matrix_csv_lists_every_labeled_entry() {
        let basis = AngularBasis::new(1).unwrap();
        let streaming = streaming_matrices(&basis);
        let dense = streaming.to_dense(2);
        let mut out = Vec::new();
        write_mode_matrix_csv(
            &mut out,
            basis.odd_modes(),
            basis.even_modes(),
            dense.view(),
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row_l,row_m,col_l,col_m,value");
        assert_eq!(lines.len(), 1 + basis.n_odd() * basis.n_even());
        // A_3 couples Y_{0,0} to Y_{1,0} with weight 1/sqrt(3).
        let expect = 1.0 / 3.0f64.sqrt();
        let row = lines
            .iter()
            .find(|l| l.starts_with("1,0,0,0,"))
            .expect("entry (1,0)x(0,0) present");
        let val: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((val - expect).abs() < 1e-14);
    }

    #[test]
    fn sparse_dump_matches_dense_dump_on_nonzeros() {
        let basis = AngularBasis::new(3).unwrap();
        let streaming = streaming_matrices(&basis);
        let mut sparse = Vec::new();
        write_mode_triplets_csv(
            &mut sparse,
            basis.odd_modes(),
            basis.even_modes(),
            streaming.triplets(0),
        )
        .unwrap();
        let text = String::from_utf8(sparse).unwrap();
        let dense = streaming.to_dense(0);
        for line in text.lines().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            let l: usize = parts[0].parse().unwrap();
            let m: i64 = parts[1].parse().unwrap();
            let cl: usize = parts[2].parse().unwrap();
            let cm: i64 = parts[3].parse().unwrap();
            let v: f64 = parts[4].parse().unwrap();
            let i = basis
                .odd_modes()
                .iter()
                .position(|mm| mm.l == l && mm.m == m)
                .unwrap();
            let j = basis
                .even_modes()
                .iter()
                .position(|mm| mm.l == cl && mm.m == cm)
                .unwrap();
            assert!((dense[[i, j]] - v).abs() < 1e-15);
        }
    }

    #[test]
    fn spatial_dump_reproduces_the_matrix() {
        let mesh = unit_square_mesh(2);
        let spatial = assemble_spatial(&mesh);
        let mut out = Vec::new();
        write_spatial_matrix_csv(&mut out, &spatial.m_plus).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut total = 0.0;
        for line in text.lines().skip(1) {
            let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            total += v;
        }
        // Mass matrix entries sum to the domain area.
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vtk_structure_and_scaling_are_correct() {
        let mesh = unit_square_mesh(2);
        let dir = std::env::temp_dir().join("pn_transport_vtk_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("flux.vtk");

        // Constant-in-angle field 1/sqrt(4 pi) integrates to scalar flux 1.
        let mut field = ParityField::zeros(mesh.n_vertices(), 3, mesh.n_triangles(), 1);
        let c = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        field.even.column_mut(0).fill(c);
        write_scalar_flux(&field, &mesh, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 2.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], format!("POINTS {} double", mesh.n_vertices()));
        assert!(lines.contains(&format!("CELL_TYPES {}", mesh.n_triangles()).as_str()));
        let data_start = lines.iter().position(|l| *l == "LOOKUP_TABLE default").unwrap() + 1;
        assert_eq!(lines.len() - data_start, mesh.n_vertices());
        for line in &lines[data_start..] {
            let v: f64 = line.parse().unwrap();
            assert!((v - 1.0).abs() < 1e-14);
        }

        // Byte determinism.
        let path2 = dir.join("flux2.vtk");
        write_scalar_flux(&field, &mesh, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

        // Zero field writes all zeros.
        let zero = ParityField::zeros(mesh.n_vertices(), 3, mesh.n_triangles(), 1);
        write_scalar_flux(&zero, &mesh, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        for line in &lines[data_start..] {
            assert_eq!(line.parse::<f64>().unwrap(), 0.0);
        }
    }
}
