//! 2D triangulations of polygonal domains and the spatial element matrices
//! of the P1-continuous / P0-discontinuous pairing.
//!
//! The spatial coordinates are (r1, r3): the mesh lives in the plane of the
//! reduced geometry, and boundary normals embed into 3D as (n1, 0, n3) when
//! they meet the angular variable.
//!
//! All element integrals are exact closed forms (the integrands are
//! polynomial): P1 element mass (|K|/12)·[[2,1,1],[1,2,1],[1,1,2]], P0 mass
//! |K|, mixed gradient |K|·(∂_d hat), edge trace mass (|e|/6)·[[2,1],[1,2]].

use crate::angular_basis::AngularBasis;
use crate::{Result, TransportError};

/// A boundary edge: its vertex pair (in triangle traversal order), the
/// adjacent triangle, the outward unit normal, and the edge length.
#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub triangle: usize,
    pub normal: [f64; 2],
    pub length: f64,
}

/// Triangulation of a polygonal domain.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    boundary_edges: Vec<BoundaryEdge>,
}

impl TriMesh {
    /// Builds a mesh from raw vertices and triangles.
    ///
    /// Negatively oriented triangles are reoriented (a vertex swap), so the
    /// stored triangles are always positively oriented; degenerate triangles
    /// and non-manifold edges are rejected. Boundary edges are the edges
    /// adjacent to exactly one triangle.
    pub fn new(vertices: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if nv < 3 || triangles.is_empty() {
            return Err(TransportError::Mesh(
                "mesh needs at least 3 vertices and 1 triangle".into(),
            ));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        for tri in triangles.iter_mut() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(TransportError::Mesh(format!(
                        "triangle vertex index {v} out of range (mesh has {nv} vertices)"
                    )));
                }
            }
            let signed = signed_area(&vertices, *tri);
            if signed < 0.0 {
                tri.swap(1, 2);
            }
            let area = signed.abs();
            if area < 1e-14 {
                return Err(TransportError::Mesh(format!(
                    "degenerate triangle {tri:?} with area {area:.3e}"
                )));
            }
            areas.push(area);
        }

        // Edge incidence count keyed by the sorted vertex pair; exactly-once
        // edges form the boundary.
        let mut incidence: std::collections::HashMap<(usize, usize), (usize, usize, usize)> =
            std::collections::HashMap::new();
        for (k, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                let entry = incidence.entry(key).or_insert((0, k, e));
                entry.0 += 1;
                if entry.0 == 1 {
                    *entry = (1, k, e);
                }
            }
        }
        let mut boundary_edges = Vec::new();
        for (&(lo, hi), &(count, k, e)) in &incidence {
            match count {
                1 => {
                    let a = triangles[k][e];
                    let b = triangles[k][(e + 1) % 3];
                    let d = [vertices[b][0] - vertices[a][0], vertices[b][1] - vertices[a][1]];
                    let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
                    // Triangles are CCW, so the interior lies left of a->b
                    // and the outward normal is the right-hand rotation.
                    let normal = [d[1] / length, -d[0] / length];
                    boundary_edges.push(BoundaryEdge { vertices: [a, b], triangle: k, normal, length });
                }
                2 => {}
                n => {
                    return Err(TransportError::Mesh(format!(
                        "edge ({lo},{hi}) shared by {n} triangles"
                    )));
                }
            }
        }
        // Deterministic order regardless of hash-map iteration.
        boundary_edges.sort_by_key(|e| (e.vertices[0], e.vertices[1]));
        Ok(Self { vertices, triangles, areas, boundary_edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Triangle areas (all positive).
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Vertex coordinates of triangle k.
    pub fn triangle_coords(&self, k: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    /// Parses the plain-text mesh format:
    ///
    /// ```text
    /// #vertices
    /// x y          (one line per vertex)
    /// #triangles
    /// i j k        (0-based vertex indices, one line per triangle)
    /// ```
    ///
    /// Blank lines are ignored; other `#` lines are comments.
    pub fn from_text(content: &str) -> Result<Self> {
        enum Section {
            None,
            Vertices,
            Triangles,
        }
        let mut section = Section::None;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let bad = |line: &str, what: &str| {
            TransportError::Mesh(format!("cannot parse {what} line {line:?}"))
        };
        for line in content.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                match header.trim() {
                    "vertices" => section = Section::Vertices,
                    "triangles" => section = Section::Triangles,
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match section {
                Section::None => {
                    return Err(TransportError::Mesh(
                        "mesh file must start with a #vertices section".into(),
                    ))
                }
                Section::Vertices => {
                    if fields.len() != 2 {
                        return Err(bad(line, "vertex"));
                    }
                    let x = fields[0].parse().map_err(|_| bad(line, "vertex"))?;
                    let y = fields[1].parse().map_err(|_| bad(line, "vertex"))?;
                    vertices.push([x, y]);
                }
                Section::Triangles => {
                    if fields.len() != 3 {
                        return Err(bad(line, "triangle"));
                    }
                    let mut tri = [0usize; 3];
                    for (t, f) in tri.iter_mut().zip(&fields) {
                        *t = f.parse().map_err(|_| bad(line, "triangle"))?;
                    }
                    triangles.push(tri);
                }
            }
        }
        Self::new(vertices, triangles)
    }

    /// Serializes to the plain-text mesh format accepted by [`from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("#vertices\n");
        for v in &self.vertices {
            out.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
        }
        out.push_str("#triangles\n");
        for t in &self.triangles {
            out.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        out
    }

    /// Reads a mesh from a plain-text file.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        Self::from_text(&content)
    }
}

fn signed_area(vertices: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Structured triangulation of the unit square (0,1)²: (divisions+1)²
/// vertices, each grid cell split along one diagonal, giving 2·divisions²
/// positively oriented triangles. The diagonal direction alternates in a
/// checkerboard pattern so the triangulation is symmetric under swapping
/// the two coordinates; a uniform diagonal direction biases the piecewise
/// constant approximation and measurably inflates the odd-parity error.
pub fn unit_square_mesh(divisions: usize) -> TriMesh {
    assert!(divisions >= 1, "unit_square_mesh needs divisions >= 1");
    let d = divisions;
    let np = d + 1;
    let h = 1.0 / d as f64;
    let mut vertices = Vec::with_capacity(np * np);
    for iy in 0..np {
        for ix in 0..np {
            vertices.push([ix as f64 * h, iy as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * d * d);
    for iy in 0..d {
        for ix in 0..d {
            let v00 = iy * np + ix;
            let v10 = v00 + 1;
            let v01 = v00 + np;
            let v11 = v01 + 1;
            if (ix + iy) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    TriMesh::new(vertices, triangles).expect("structured mesh is always valid")
}

/// Compressed sparse row matrix with just the operations the solver needs.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut rows: Vec<usize> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for (r, c, v) in triplets {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n_rows, n_cols, row_ptr, cols, vals }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// y = A x for block right-hand sides (x: n_cols x k, y: n_rows x k).
    pub fn apply_block(&self, x: &ndarray::ArrayView2<f64>, y: &mut ndarray::Array2<f64>) {
        assert_eq!(x.nrows(), self.n_cols);
        assert_eq!(y.dim(), (self.n_rows, x.ncols()));
        y.fill(0.0);
        for r in 0..self.n_rows {
            let mut acc = y.row_mut(r);
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[idx];
                let v = self.vals[idx];
                acc.scaled_add(v, &x.row(c));
            }
        }
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[idx] == r {
                    d[r] = self.vals[idx];
                }
            }
        }
        d
    }

    /// Iterates stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |idx| (r, self.cols[idx], self.vals[idx]))
        })
    }
}

/// One group of boundary edges sharing an outward normal; the half-range
/// matrix cache is keyed by these groups (a rectangle yields four).
#[derive(Debug, Clone)]
pub struct BoundaryGroup {
    /// The 2D outward normal embedded as (n1, 0, n3).
    pub normal3: [f64; 3],
    /// Edges (vertex a, vertex b, length).
    pub edges: Vec<(usize, usize, f64)>,
    /// Distinct vertices touched by this group's edges.
    pub vertices: Vec<usize>,
}

/// All spatial element matrices of the mesh.
#[derive(Debug, Clone)]
pub struct SpatialMatrices {
    /// P1 mass matrix (V x V, symmetric positive definite).
    pub m_plus: CsrMatrix,
    /// P0 mass matrix: diagonal of triangle areas (length T).
    pub m_minus: Vec<f64>,
    /// Constant gradient of the three P1 hats per triangle:
    /// grads[k][j] = ∇χ_{t_j} on triangle k. The mixed gradient matrix entry
    /// is (G_d)_{k, t_j} = |K_k| · grads[k][j][d].
    pub grads: Vec<[[f64; 2]; 3]>,
    /// Boundary edges grouped per unique outward normal.
    pub boundary_groups: Vec<BoundaryGroup>,
}

/// Assembles all spatial matrices; every integral is an exact closed form.
pub fn assemble_spatial(mesh: &TriMesh) -> SpatialMatrices {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut mass_triplets = Vec::with_capacity(9 * nt);
    let mut grads = Vec::with_capacity(nt);
    for k in 0..nt {
        let tri = mesh.triangles()[k];
        let [a, b, c] = mesh.triangle_coords(k);
        let area = mesh.areas()[k];
        // ∇χ_j is the inward-scaled rotation of the opposite edge.
        let scale = 1.0 / (2.0 * area);
        let g = [
            [(b[1] - c[1]) * scale, (c[0] - b[0]) * scale],
            [(c[1] - a[1]) * scale, (a[0] - c[0]) * scale],
            [(a[1] - b[1]) * scale, (b[0] - a[0]) * scale],
        ];
        grads.push(g);
        for i in 0..3 {
            for j in 0..3 {
                let w = if i == j { 2.0 } else { 1.0 };
                mass_triplets.push((tri[i], tri[j], area / 12.0 * w));
            }
        }
    }
    let m_plus = CsrMatrix::from_triplets(nv, nv, mass_triplets);

    // Group boundary edges by outward normal (exact match is enough for
    // polygons; 1e-12 tolerance absorbs roundoff in normalization).
    let mut boundary_groups: Vec<BoundaryGroup> = Vec::new();
    for edge in mesh.boundary_edges() {
        let n3 = [edge.normal[0], 0.0, edge.normal[1]];
        let found = boundary_groups.iter_mut().find(|g| {
            let d0 = g.normal3[0] - n3[0];
            let d2 = g.normal3[2] - n3[2];
            (d0 * d0 + d2 * d2).sqrt() < 1e-12
        });
        let group = match found {
            Some(g) => g,
            None => {
                boundary_groups.push(BoundaryGroup { normal3: n3, edges: Vec::new(), vertices: Vec::new() });
                boundary_groups.last_mut().unwrap()
            }
        };
        group.edges.push((edge.vertices[0], edge.vertices[1], edge.length));
    }
    for group in &mut boundary_groups {
        let mut verts: Vec<usize> = group.edges.iter().flat_map(|&(a, b, _)| [a, b]).collect();
        verts.sort_unstable();
        verts.dedup();
        group.vertices = verts;
    }

    SpatialMatrices {
        m_plus,
        m_minus: mesh.areas().to_vec(),
        grads,
        boundary_groups,
    }
}

/// Total degrees of freedom V·n_even + T·n_odd of the discrete space.
pub fn dof_count(basis: &AngularBasis, mesh: &TriMesh) -> usize {
    dof_count_vt(basis, mesh.n_vertices(), mesh.n_triangles())
}

/// The dof arithmetic for given vertex and triangle counts.
pub fn dof_count_vt(basis: &AngularBasis, n_vertices: usize, n_triangles: usize) -> usize {
    n_vertices * basis.n_even() + n_triangles * basis.n_odd()
}
