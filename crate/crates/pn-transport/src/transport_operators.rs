//! The global discrete transport operators, composed from angular and
//! spatial factor matrices and applied matrix-free.
//!
//! A discrete parity field x = (U, V) holds even coefficients U (vertex x
//! even mode) and odd coefficients V (triangle x odd mode). The bilinear
//! form splits as B = S + H with
//!
//! ```text
//! <S x, y> = (s·∇ x⁺, y⁻) - (x⁻, s·∇ y⁺)          (skew)
//! <H x, y> = (C x, y) + (|s·n| x⁺, y⁺)_boundary    (dissipative)
//! ```
//!
//! Every apply returns the load-vector representation of the result: the
//! coefficient y_{iα} is the form paired against basis function (i, α), so
//! plain Euclidean dots of an apply output against coefficient vectors
//! evaluate the bilinear form. In factor form,
//!
//! ```text
//! even block: Σ_n E_n·U·B_n + M⁺·U·diag(c_even) - Σ_d G_dᵀ·(V·A_d)
//! odd block:  Σ_d G_d·U·A_dᵀ + diag(|K|)·V·diag(c_odd)
//! ```
//!
//! where the streaming directions d run over the spatial components 1 and 3
//! of the reduced geometry.

use crate::angular_basis::{
    halfrange_matrix, streaming_matrices, AngularBasis, CollisionSpectrum, HalfRangeMatrix,
    StreamingMatrices,
};
use crate::spatial_mesh::{assemble_spatial, SpatialMatrices, TriMesh};
use crate::Result;
use ndarray::Array2;

/// Block of even and odd parity coefficients of a discrete field.
#[derive(Debug, Clone)]
pub struct ParityField {
    /// V x n_even: coefficient of (vertex hat x even spherical harmonic).
    pub even: Array2<f64>,
    /// T x n_odd: coefficient of (triangle indicator x odd harmonic).
    pub odd: Array2<f64>,
}

impl ParityField {
    pub fn zeros(n_vertices: usize, n_even: usize, n_triangles: usize, n_odd: usize) -> Self {
        Self {
            even: Array2::zeros((n_vertices, n_even)),
            odd: Array2::zeros((n_triangles, n_odd)),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            even: Array2::zeros(other.even.dim()),
            odd: Array2::zeros(other.odd.dim()),
        }
    }

    /// self += alpha * x.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        self.even.scaled_add(alpha, &x.even);
        self.odd.scaled_add(alpha, &x.odd);
    }

    /// self *= alpha.
    pub fn scale(&mut self, alpha: f64) {
        self.even.mapv_inplace(|v| alpha * v);
        self.odd.mapv_inplace(|v| alpha * v);
    }

    /// Flat Euclidean inner product over both blocks. Against an operator
    /// apply output this evaluates the bilinear form.
    pub fn dot(&self, other: &Self) -> f64 {
        let a = flat(&self.even).iter().zip(flat(&other.even)).map(|(x, y)| x * y);
        let b = flat(&self.odd).iter().zip(flat(&other.odd)).map(|(x, y)| x * y);
        a.chain(b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.even.iter().chain(self.odd.iter()).all(|v| v.is_finite())
    }
}

fn flat(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("coefficient arrays are contiguous")
}

/// The assembled factor matrices of the discrete transport operator for one
/// basis/mesh/collision triple. Immutable after construction and safe to
/// share read-only across threads.
#[derive(Debug, Clone)]
pub struct TransportSystem {
    basis: AngularBasis,
    mesh: TriMesh,
    spatial: SpatialMatrices,
    streaming: StreamingMatrices,
    collision: CollisionSpectrum,
    /// Half-range matrices aligned with spatial.boundary_groups.
    halfrange: Vec<HalfRangeMatrix>,
    /// Collision eigenvalue per even block mode.
    c_even: Vec<f64>,
    /// Collision eigenvalue per odd block mode.
    c_odd: Vec<f64>,
}

impl TransportSystem {
    /// Assembles all factor matrices. The collision spectrum must cover all
    /// degrees l <= N (it is coercive by construction).
    pub fn new(basis: AngularBasis, mesh: TriMesh, collision: CollisionSpectrum) -> Result<Self> {
        if collision.eigenvalues().len() <= basis.order() {
            return Err(crate::TransportError::Config(format!(
                "collision spectrum covers degrees < {}, basis needs l <= {}",
                collision.eigenvalues().len(),
                basis.order()
            )));
        }
        let spatial = assemble_spatial(&mesh);
        let streaming = streaming_matrices(&basis);
        let halfrange = spatial
            .boundary_groups
            .iter()
            .map(|g| halfrange_matrix(&basis, g.normal3))
            .collect::<Result<Vec<_>>>()?;
        let c_even = basis.even_modes().iter().map(|m| collision.eigenvalue(m.l)).collect();
        let c_odd = basis.odd_modes().iter().map(|m| collision.eigenvalue(m.l)).collect();
        Ok(Self { basis, mesh, spatial, streaming, collision, halfrange, c_even, c_odd })
    }

    pub fn basis(&self) -> &AngularBasis {
        &self.basis
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn spatial(&self) -> &SpatialMatrices {
        &self.spatial
    }

    pub fn streaming(&self) -> &StreamingMatrices {
        &self.streaming
    }

    pub fn collision(&self) -> &CollisionSpectrum {
        &self.collision
    }

    /// Half-range matrices, aligned with `spatial().boundary_groups`.
    pub fn halfrange(&self) -> &[HalfRangeMatrix] {
        &self.halfrange
    }

    /// Collision eigenvalues per even block mode.
    pub fn c_even(&self) -> &[f64] {
        &self.c_even
    }

    /// Collision eigenvalues per odd block mode.
    pub fn c_odd(&self) -> &[f64] {
        &self.c_odd
    }

    pub fn zero_field(&self) -> ParityField {
        ParityField::zeros(
            self.mesh.n_vertices(),
            self.basis.n_even(),
            self.mesh.n_triangles(),
            self.basis.n_odd(),
        )
    }

    fn check_shape(&self, x: &ParityField) {
        assert_eq!(
            x.even.dim(),
            (self.mesh.n_vertices(), self.basis.n_even()),
            "even block shape mismatch"
        );
        assert_eq!(
            x.odd.dim(),
            (self.mesh.n_triangles(), self.basis.n_odd()),
            "odd block shape mismatch"
        );
    }

    /// Streaming image: out = Σ_d G_d · U · A_dᵀ (T x n_odd).
    pub(crate) fn stream_into(&self, even: &Array2<f64>, out: &mut Array2<f64>) {
        let n_even = self.basis.n_even();
        let t1 = self.streaming.triplets(0);
        let t3 = self.streaming.triplets(2);
        let u = flat(even);
        let mut g1 = vec![0.0; n_even];
        let mut g3 = vec![0.0; n_even];
        out.fill(0.0);
        let o = out.as_slice_mut().expect("contiguous");
        let n_odd = self.basis.n_odd();
        for (k, tri) in self.mesh.triangles().iter().enumerate() {
            let area = self.mesh.areas()[k];
            let g = &self.spatial.grads[k];
            for b in 0..n_even {
                let u0 = u[tri[0] * n_even + b];
                let u1 = u[tri[1] * n_even + b];
                let u2 = u[tri[2] * n_even + b];
                g1[b] = area * (g[0][0] * u0 + g[1][0] * u1 + g[2][0] * u2);
                g3[b] = area * (g[0][1] * u0 + g[1][1] * u1 + g[2][1] * u2);
            }
            let row = &mut o[k * n_odd..(k + 1) * n_odd];
            for &(i, j, v) in t1 {
                row[i] += v * g1[j];
            }
            for &(i, j, v) in t3 {
                row[i] += v * g3[j];
            }
        }
    }

    /// Adjoint streaming image: out += sign · Σ_d G_dᵀ · (V · A_d)
    /// (V x n_even). `out` is accumulated into, not cleared.
    pub(crate) fn adjoint_stream_into(&self, odd: &Array2<f64>, sign: f64, out: &mut Array2<f64>) {
        let n_even = self.basis.n_even();
        let n_odd = self.basis.n_odd();
        let t1 = self.streaming.triplets(0);
        let t3 = self.streaming.triplets(2);
        let v = flat(odd);
        let o = out.as_slice_mut().expect("contiguous");
        let mut va1 = vec![0.0; n_even];
        let mut va3 = vec![0.0; n_even];
        for (k, tri) in self.mesh.triangles().iter().enumerate() {
            let area = self.mesh.areas()[k];
            let g = &self.spatial.grads[k];
            let row = &v[k * n_odd..(k + 1) * n_odd];
            va1.fill(0.0);
            va3.fill(0.0);
            for &(i, j, w) in t1 {
                va1[j] += row[i] * w;
            }
            for &(i, j, w) in t3 {
                va3[j] += row[i] * w;
            }
            for (jl, &vert) in tri.iter().enumerate() {
                let w1 = sign * area * g[jl][0];
                let w3 = sign * area * g[jl][1];
                let dst = &mut o[vert * n_even..(vert + 1) * n_even];
                for b in 0..n_even {
                    dst[b] += w1 * va1[b] + w3 * va3[b];
                }
            }
        }
    }

    /// Boundary image: out += Σ_groups E_n · U · B_n (V x n_even).
    pub(crate) fn boundary_into(&self, even: &Array2<f64>, out: &mut Array2<f64>) {
        let n_even = self.basis.n_even();
        for (group, hr) in self.spatial.boundary_groups.iter().zip(&self.halfrange) {
            // W_a = U_a · B_n for the group's boundary vertices.
            let mut w: std::collections::HashMap<usize, Vec<f64>> =
                std::collections::HashMap::with_capacity(group.vertices.len());
            for &a in &group.vertices {
                let ua = even.row(a);
                let mut row = vec![0.0; n_even];
                for (bb, val) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for aa in 0..n_even {
                        acc += ua[aa] * hr.matrix[[aa, bb]];
                    }
                    *val = acc;
                }
                w.insert(a, row);
            }
            for &(a, b, len) in &group.edges {
                let wa = &w[&a];
                let wb = &w[&b];
                let c = len / 6.0;
                {
                    let mut oa = out.row_mut(a);
                    for bmode in 0..n_even {
                        oa[bmode] += c * (2.0 * wa[bmode] + wb[bmode]);
                    }
                }
                let mut ob = out.row_mut(b);
                for bmode in 0..n_even {
                    ob[bmode] += c * (wa[bmode] + 2.0 * wb[bmode]);
                }
            }
        }
    }

    /// The skew part: y·ψ = (s·∇ x⁺, ψ⁻) - (x⁻, s·∇ ψ⁺).
    pub fn apply_s(&self, x: &ParityField) -> ParityField {
        self.check_shape(x);
        let mut y = self.zero_field();
        self.stream_into(&x.even, &mut y.odd);
        self.adjoint_stream_into(&x.odd, -1.0, &mut y.even);
        y
    }

    /// The dissipative part: y·ψ = (C x, ψ) + (|s·n| x⁺, ψ⁺)_boundary.
    pub fn apply_h(&self, x: &ParityField) -> ParityField {
        self.check_shape(x);
        let mut y = self.zero_field();
        // Even collision: M⁺ · U · diag(c_even).
        self.spatial.m_plus.apply_block(&x.even.view(), &mut y.even);
        for (mut col, &c) in y.even.columns_mut().into_iter().zip(&self.c_even) {
            col.mapv_inplace(|v| c * v);
        }
        self.boundary_into(&x.even, &mut y.even);
        // Odd collision: diag(|K|) · V · diag(c_odd), elementwise.
        for (k, mut row) in y.odd.rows_mut().into_iter().enumerate() {
            let area = self.mesh.areas()[k];
            for (b, &c) in self.c_odd.iter().enumerate() {
                row[b] = area * c * x.odd[[k, b]];
            }
        }
        y
    }

    /// The full bilinear form B = S + H, summed in exactly that order.
    pub fn apply_b(&self, x: &ParityField) -> ParityField {
        let mut y = self.apply_s(x);
        let h = self.apply_h(x);
        y.even += &h.even;
        y.odd += &h.odd;
        y
    }

    /// Block mass pairing: y_even = M⁺ U, y_odd = diag(|K|) V.
    pub fn apply_mass(&self, x: &ParityField) -> ParityField {
        self.check_shape(x);
        let mut y = self.zero_field();
        self.spatial.m_plus.apply_block(&x.even.view(), &mut y.even);
        for (k, mut row) in y.odd.rows_mut().into_iter().enumerate() {
            let area = self.mesh.areas()[k];
            for b in 0..row.len() {
                row[b] = area * x.odd[[k, b]];
            }
        }
        y
    }

    /// Mass inner product (the L²(D) pairing of the represented functions).
    pub fn mass_dot(&self, x: &ParityField, y: &ParityField) -> f64 {
        self.apply_mass(x).dot(y)
    }

    /// L²(D) norm of the represented function.
    pub fn mass_norm(&self, x: &ParityField) -> f64 {
        self.mass_dot(x, x).max(0.0).sqrt()
    }
}
