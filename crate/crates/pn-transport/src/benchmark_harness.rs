//! Manufactured-solution benchmark: an analytic solution of the transport
//! equation, its source, exact error measures against discrete runs, and
//! the three convergence studies (angular order, mesh size, time step).
//!
//! The prescribed solution is separable,
//!
//! ```text
//! φ(r, s, t) = g(t) · φ₀(r) · Σ_{l=0}^{L} c_l Y_{l,0}(s),
//! g(t) = 1 - e^{-t},  φ₀(r) = sin(πr₁)sin(πr₃),  c_l = 1/(l+1)²,
//! ```
//!
//! which vanishes on the inflow boundary and at t = 0. The matching source
//! q = ∂_t φ + s·∇φ + Cφ is represented exactly in coefficient space on a
//! union basis of degree max(N, L+1): the temporal and collision terms stay
//! on the m = 0 solution modes, while s·∇ distributes the spatial gradient
//! through the streaming coupling matrices into neighboring degrees.
//!
//! Error measures follow the study convention: with e±(t) the L²(D) norm of
//! the parity components of φ - φ_h and D⁺(t) the norm of s·∇(φ - φ_h)⁺,
//!
//! ```text
//! e⁺ = max_n e⁺(tⁿ),  e⁻ = max_n e⁻(tⁿ),  E⁺ = max_n √(e⁺(tⁿ)² + D⁺(tⁿ)²).
//! ```
//!
//! All spatial integrals in the loads and the error measures use one shared
//! degree-5 triangle rule, so every accumulated error term is a quadrature
//! sum of pointwise squares and stays nonnegative.

use crate::angular_basis::{eval_all_modes, flat_index, streaming_matrices, AngularBasis};
use crate::linear_solvers::SolverConfig;
use crate::quadrature::triangle_rule_deg5;
use crate::simulation::{run_transient, TransientConfig};
use crate::spatial_mesh::{dof_count, unit_square_mesh};
use crate::transport_operators::{ParityField, TransportSystem};
use crate::{Result, TransportError};
use ndarray::Array2;
use std::f64::consts::PI;
use std::io::Write;

/// The analytic benchmark solution.
#[derive(Debug, Clone)]
pub struct ManufacturedSolution {
    n_max: usize,
}

impl ManufacturedSolution {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Coefficient of the (l, 0) mode; zero beyond the cutoff degree.
    pub fn mode_coefficient(&self, l: usize) -> f64 {
        if l <= self.n_max {
            1.0 / ((l + 1) * (l + 1)) as f64
        } else {
            0.0
        }
    }

    pub fn temporal(&self, t: f64) -> f64 {
        1.0 - (-t).exp()
    }

    pub fn temporal_derivative(&self, t: f64) -> f64 {
        (-t).exp()
    }

    pub fn spatial_profile(&self, r: [f64; 2]) -> f64 {
        (PI * r[0]).sin() * (PI * r[1]).sin()
    }

    pub fn spatial_gradient(&self, r: [f64; 2]) -> [f64; 2] {
        [
            PI * (PI * r[0]).cos() * (PI * r[1]).sin(),
            PI * (PI * r[0]).sin() * (PI * r[1]).cos(),
        ]
    }

    /// Pointwise solution value.
    pub fn eval(&self, r: [f64; 2], s: [f64; 3], t: f64) -> Result<f64> {
        let modes = eval_all_modes(self.n_max, s);
        let mut angular = 0.0;
        for l in 0..=self.n_max {
            angular += self.mode_coefficient(l) * modes[flat_index(l, 0)];
        }
        Ok(self.temporal(t) * self.spatial_profile(r) * angular)
    }
}

/// Per-mode source structure: q_mode(r, t) = a·φ₀(r) + b₁·∂₁φ₀ + b₃·∂₃φ₀.
#[derive(Debug, Clone)]
pub struct SourceCoefficients {
    /// Per union even mode: [a, b1, b3].
    pub even: Vec<[f64; 3]>,
    /// Per union odd mode: [a, b1, b3].
    pub odd: Vec<[f64; 3]>,
}

/// Precomputed machinery tying a manufactured solution to one discrete
/// system: union-basis coefficient tables and the shared-rule spatial
/// pairing vectors.
pub struct SourceAssembler<'a> {
    sys: &'a TransportSystem,
    sol: ManufacturedSolution,
    union: AngularBasis,
    /// Solution coefficient per union mode (zero off the m=0, l ≤ L set).
    cs_even: Vec<f64>,
    cs_odd: Vec<f64>,
    /// Collision eigenvalue per union mode.
    cc_even: Vec<f64>,
    cc_odd: Vec<f64>,
    /// Streaming weights: coefficient of ∂_dφ₀ in the source mode, from the
    /// opposite-parity solution modes. Index 0 ↔ s₁/∂₁, index 1 ↔ s₃/∂₃.
    w_even: Vec<[f64; 2]>,
    w_odd: Vec<[f64; 2]>,
    /// Shared degree-5 rule pairings: ∫ χ_i φ₀ and ∫ χ_i ∂_dφ₀ (vertices).
    s_profile: Vec<f64>,
    s_grad: [Vec<f64>; 2],
    /// ∫_K φ₀ and ∫_K ∂_dφ₀ (triangles).
    t_profile: Vec<f64>,
    t_grad: [Vec<f64>; 2],
    /// Rule values of ∫ φ₀² and the gradient Gram ∫ ∂_dφ₀ ∂_d'φ₀.
    p_tot: f64,
    lam: [[f64; 2]; 2],
}

impl<'a> SourceAssembler<'a> {
    /// `require_exact` demands N ≥ L+1 so the source lies inside the
    /// discrete angular space and the spatial study sees pure h-error.
    pub fn new(
        sys: &'a TransportSystem,
        sol: ManufacturedSolution,
        require_exact: bool,
    ) -> Result<Self> {
        let n = sys.basis().order();
        if require_exact && n < sol.n_max + 1 {
            return Err(TransportError::Config(format!(
                "angular order {} cannot represent the source exactly; need at least {}",
                n,
                sol.n_max + 1
            )));
        }
        let mut union_order = n.max(sol.n_max + 1);
        if union_order % 2 == 0 {
            union_order += 1;
        }
        let union = AngularBasis::new(union_order)?;
        // The discrete modes must be a prefix of the union modes per parity.
        assert_eq!(&union.even_modes()[..sys.basis().n_even()], sys.basis().even_modes());
        assert_eq!(&union.odd_modes()[..sys.basis().n_odd()], sys.basis().odd_modes());
        let union_streaming = streaming_matrices(&union);

        let cs = |m: &crate::angular_basis::ModeIndex| {
            if m.m == 0 {
                sol.mode_coefficient(m.l)
            } else {
                0.0
            }
        };
        let cs_even: Vec<f64> = union.even_modes().iter().map(cs).collect();
        let cs_odd: Vec<f64> = union.odd_modes().iter().map(cs).collect();
        let cc_even: Vec<f64> = union
            .even_modes()
            .iter()
            .map(|m| sys.collision().eigenvalue_extended(m.l))
            .collect();
        let cc_odd: Vec<f64> = union
            .odd_modes()
            .iter()
            .map(|m| sys.collision().eigenvalue_extended(m.l))
            .collect();

        let mut w_even = vec![[0.0; 2]; union.n_even()];
        let mut w_odd = vec![[0.0; 2]; union.n_odd()];
        for (slot, d) in [(0usize, 0usize), (1, 2)] {
            for &(o, e, v) in union_streaming.triplets(d) {
                w_even[e][slot] += v * cs_odd[o];
                w_odd[o][slot] += v * cs_even[e];
            }
        }

        // Spatial pairings by the shared rule.
        let mesh = sys.mesh();
        let rule = triangle_rule_deg5();
        let mut s_profile = vec![0.0; mesh.n_vertices()];
        let mut s_grad = [vec![0.0; mesh.n_vertices()], vec![0.0; mesh.n_vertices()]];
        let mut t_profile = vec![0.0; mesh.n_triangles()];
        let mut t_grad = [vec![0.0; mesh.n_triangles()], vec![0.0; mesh.n_triangles()]];
        let mut p_tot = 0.0;
        let mut lam = [[0.0; 2]; 2];
        for k in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[k];
            let [a, b, c] = mesh.triangle_coords(k);
            let area = mesh.areas()[k];
            for &(bary, wq) in &rule {
                let x = [
                    bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                    bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
                ];
                let w = wq * area;
                let f = sol.spatial_profile(x);
                let grad = sol.spatial_gradient(x);
                for j in 0..3 {
                    s_profile[tri[j]] += w * bary[j] * f;
                    s_grad[0][tri[j]] += w * bary[j] * grad[0];
                    s_grad[1][tri[j]] += w * bary[j] * grad[1];
                }
                t_profile[k] += w * f;
                t_grad[0][k] += w * grad[0];
                t_grad[1][k] += w * grad[1];
                p_tot += w * f * f;
                for d in 0..2 {
                    for e in 0..2 {
                        lam[d][e] += w * grad[d] * grad[e];
                    }
                }
            }
        }

        Ok(Self {
            sys,
            sol,
            union,
            cs_even,
            cs_odd,
            cc_even,
            cc_odd,
            w_even,
            w_odd,
            s_profile,
            s_grad,
            t_profile,
            t_grad,
            p_tot,
            lam,
        })
    }

    pub fn solution(&self) -> &ManufacturedSolution {
        &self.sol
    }

    pub fn system(&self) -> &TransportSystem {
        self.sys
    }

    pub fn union_basis(&self) -> &AngularBasis {
        &self.union
    }

    /// The per-mode profile/gradient coefficients of the source at time t.
    pub fn source_coefficients(&self, t: f64) -> SourceCoefficients {
        let g = self.sol.temporal(t);
        let gp = self.sol.temporal_derivative(t);
        let build = |cs: &[f64], cc: &[f64], w: &[[f64; 2]]| {
            cs.iter()
                .zip(cc)
                .zip(w)
                .map(|((&cs, &cc), &w)| [(gp + g * cc) * cs, g * w[0], g * w[1]])
                .collect()
        };
        SourceCoefficients {
            even: build(&self.cs_even, &self.cc_even, &self.w_even),
            odd: build(&self.cs_odd, &self.cc_odd, &self.w_odd),
        }
    }

    /// Load vector l(t; ·): the L² pairing of the source against every
    /// discrete basis function.
    pub fn load_at(&self, t: f64) -> ParityField {
        let coeffs = self.source_coefficients(t);
        self.load_from(&coeffs)
    }

    /// Load of the stationary limit source (g ≡ 1): the B-pairing of the
    /// stationary solution, usable as an elliptic-projection target.
    pub fn stationary_load(&self) -> ParityField {
        let build = |cs: &[f64], cc: &[f64], w: &[[f64; 2]]| {
            cs.iter()
                .zip(cc)
                .zip(w)
                .map(|((&cs, &cc), &w)| [cc * cs, w[0], w[1]])
                .collect()
        };
        let coeffs = SourceCoefficients {
            even: build(&self.cs_even, &self.cc_even, &self.w_even),
            odd: build(&self.cs_odd, &self.cc_odd, &self.w_odd),
        };
        self.load_from(&coeffs)
    }

    fn load_from(&self, coeffs: &SourceCoefficients) -> ParityField {
        let mut load = self.sys.zero_field();
        for (gamma, &[a, b1, b3]) in
            coeffs.even.iter().take(self.sys.basis().n_even()).enumerate()
        {
            if a == 0.0 && b1 == 0.0 && b3 == 0.0 {
                continue;
            }
            for i in 0..self.s_profile.len() {
                load.even[[i, gamma]] =
                    a * self.s_profile[i] + b1 * self.s_grad[0][i] + b3 * self.s_grad[1][i];
            }
        }
        for (gamma, &[a, b1, b3]) in
            coeffs.odd.iter().take(self.sys.basis().n_odd()).enumerate()
        {
            if a == 0.0 && b1 == 0.0 && b3 == 0.0 {
                continue;
            }
            for k in 0..self.t_profile.len() {
                load.odd[[k, gamma]] =
                    a * self.t_profile[k] + b1 * self.t_grad[0][k] + b3 * self.t_grad[1][k];
            }
        }
        load
    }

    /// Analytic ‖q(t)‖²_{L²(D)}: the profile and gradient parts of each mode
    /// are L²(R)-orthogonal, with ∫φ₀² = 1/4 and ∫(∂_dφ₀)² = π²/4.
    pub fn source_norm_sq(&self, t: f64) -> f64 {
        let coeffs = self.source_coefficients(t);
        let mut total = 0.0;
        for &[a, b1, b3] in coeffs.even.iter().chain(coeffs.odd.iter()) {
            total += a * a * 0.25 + (b1 * b1 + b3 * b3) * PI * PI / 4.0;
        }
        total
    }

    /// Source value at a point, reconstructed from the coefficient-space
    /// representation (the path the loads use).
    pub fn eval_source(&self, r: [f64; 2], s: [f64; 3], t: f64) -> Result<f64> {
        let coeffs = self.source_coefficients(t);
        let modes = eval_all_modes(self.union.order(), s);
        let f = self.sol.spatial_profile(r);
        let grad = self.sol.spatial_gradient(r);
        let mut total = 0.0;
        for (mode, &[a, b1, b3]) in self.union.even_modes().iter().zip(&coeffs.even) {
            total += (a * f + b1 * grad[0] + b3 * grad[1]) * modes[flat_index(mode.l, mode.m)];
        }
        for (mode, &[a, b1, b3]) in self.union.odd_modes().iter().zip(&coeffs.odd) {
            total += (a * f + b1 * grad[0] + b3 * grad[1]) * modes[flat_index(mode.l, mode.m)];
        }
        Ok(total)
    }

    /// Source value at a point from the strong form ∂_tφ + s·∇φ + Cφ with
    /// analytic derivatives; the oracle for `eval_source`.
    pub fn analytic_source(&self, r: [f64; 2], s: [f64; 3], t: f64) -> Result<f64> {
        let g = self.sol.temporal(t);
        let gp = self.sol.temporal_derivative(t);
        let modes = eval_all_modes(self.sol.n_max, s);
        let mut angular = 0.0;
        let mut collided = 0.0;
        for l in 0..=self.sol.n_max {
            let c = self.sol.mode_coefficient(l);
            let y = modes[flat_index(l, 0)];
            angular += c * y;
            collided += c * self.sys.collision().eigenvalue_extended(l) * y;
        }
        let f = self.sol.spatial_profile(r);
        let grad = self.sol.spatial_gradient(r);
        let transport = s[0] * grad[0] + s[2] * grad[1];
        Ok(gp * f * angular + g * transport * angular + g * f * collided)
    }
}

/// The three error measures of one run.
#[derive(Debug, Clone, Copy)]
pub struct ErrorTriple {
    /// max_n ‖(φ - φ_h)⁺‖.
    pub e_plus: f64,
    /// max_n ‖(φ - φ_h)⁻‖.
    pub e_minus: f64,
    /// max_n (‖(φ - φ_h)⁺‖² + ‖s·∇(φ - φ_h)⁺‖²)^½.
    pub e_big: f64,
}

/// Streaming accumulator of the error measures: feed it every time step and
/// it keeps running maxima, never storing state history.
pub struct ErrorAccumulator<'a, 'b> {
    asm: &'b SourceAssembler<'a>,
    max_even_sq: f64,
    max_odd_sq: f64,
    max_big_sq: f64,
    /// Analytic tails of union modes absent from the discrete basis,
    /// multiplied by g(t)² at observation time.
    tail_even: f64,
    tail_odd: f64,
    tail_stream: f64,
    /// Scratch: M⁺U and Stream(U).
    mu: Array2<f64>,
    su: Array2<f64>,
}

impl<'a, 'b> ErrorAccumulator<'a, 'b> {
    pub fn new(asm: &'b SourceAssembler<'a>) -> Self {
        let sys = asm.sys;
        let ne = sys.basis().n_even();
        let no = sys.basis().n_odd();
        let tail_even: f64 =
            asm.cs_even[ne..].iter().map(|c| c * c * asm.p_tot).sum();
        let tail_odd: f64 = asm.cs_odd[no..].iter().map(|c| c * c * asm.p_tot).sum();
        let tail_stream: f64 = asm.w_odd[no..]
            .iter()
            .map(|w| {
                w[0] * w[0] * asm.lam[0][0]
                    + 2.0 * w[0] * w[1] * asm.lam[0][1]
                    + w[1] * w[1] * asm.lam[1][1]
            })
            .sum();
        Self {
            asm,
            max_even_sq: 0.0,
            max_odd_sq: 0.0,
            max_big_sq: 0.0,
            tail_even,
            tail_odd,
            tail_stream,
            mu: Array2::zeros((sys.mesh().n_vertices(), ne)),
            su: Array2::zeros((sys.mesh().n_triangles(), no)),
        }
    }

    pub fn observe(&mut self, _step: usize, t: f64, state: &ParityField) {
        let asm = self.asm;
        let sys = asm.sys;
        let g = asm.sol.temporal(t);
        let mesh = sys.mesh();
        let ne = sys.basis().n_even();
        let no = sys.basis().n_odd();

        // Even L² part: per mode ‖g c φ₀ - u_h‖² by the shared rule.
        sys.spatial().m_plus.apply_block(&state.even.view(), &mut self.mu);
        let mut even_sq = g * g * self.tail_even;
        for gamma in 0..ne {
            let a = g * asm.cs_even[gamma];
            let u = state.even.column(gamma);
            let mut cross = 0.0;
            let mut quad = 0.0;
            for i in 0..u.len() {
                cross += asm.s_profile[i] * u[i];
                quad += u[i] * self.mu[[i, gamma]];
            }
            even_sq += a * a * asm.p_tot - 2.0 * a * cross + quad;
        }
        let even_sq = even_sq.max(0.0);

        // Odd L² part.
        let mut odd_sq = g * g * self.tail_odd;
        for gamma in 0..no {
            let a = g * asm.cs_odd[gamma];
            let mut term = a * a * asm.p_tot;
            for k in 0..mesh.n_triangles() {
                let v = state.odd[[k, gamma]];
                term += v * (mesh.areas()[k] * v - 2.0 * a * asm.t_profile[k]);
            }
            odd_sq += term;
        }
        let odd_sq = odd_sq.max(0.0);

        // Streaming part of the even error: s·∇φ_h⁺ is piecewise constant
        // per (triangle, odd mode) with coefficient Stream(U)/|K|.
        sys.stream_into(&state.even, &mut self.su);
        let mut stream_sq = g * g * self.tail_stream;
        for gamma in 0..no {
            let w1 = g * asm.w_odd[gamma][0];
            let w3 = g * asm.w_odd[gamma][1];
            let mut term = w1 * w1 * asm.lam[0][0]
                + 2.0 * w1 * w3 * asm.lam[0][1]
                + w3 * w3 * asm.lam[1][1];
            for k in 0..mesh.n_triangles() {
                let delta = self.su[[k, gamma]] / mesh.areas()[k];
                term += delta
                    * (mesh.areas()[k] * delta
                        - 2.0 * (w1 * asm.t_grad[0][k] + w3 * asm.t_grad[1][k]));
            }
            stream_sq += term;
        }
        let stream_sq = stream_sq.max(0.0);

        self.max_even_sq = self.max_even_sq.max(even_sq);
        self.max_odd_sq = self.max_odd_sq.max(odd_sq);
        self.max_big_sq = self.max_big_sq.max(even_sq + stream_sq);
    }

    pub fn finish(self) -> ErrorTriple {
        ErrorTriple {
            e_plus: self.max_even_sq.sqrt(),
            e_minus: self.max_odd_sq.sqrt(),
            e_big: self.max_big_sq.sqrt(),
        }
    }
}

/// Error measures over stored snapshots (step, state) with t = step·τ.
pub fn compute_errors(
    asm: &SourceAssembler,
    tau: f64,
    snapshots: &[(usize, ParityField)],
) -> ErrorTriple {
    let mut acc = ErrorAccumulator::new(asm);
    for (step, state) in snapshots {
        acc.observe(*step, *step as f64 * tau, state);
    }
    acc.finish()
}

/// eoc_i = ln(e_{i-1}/e_i) / ln(p_i/p_{i-1}); None for the first row and
/// whenever the quotient is undefined.
pub fn compute_eoc(errors: &[f64], params: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(errors.len(), params.len());
    let mut out = vec![None; errors.len()];
    for i in 1..errors.len() {
        let (e0, e1) = (errors[i - 1], errors[i]);
        let (p0, p1) = (params[i - 1], params[i]);
        if e0 > 0.0 && e1 > 0.0 && p0 > 0.0 && p1 > 0.0 && p0 != p1 {
            out[i] = Some((e0 / e1).ln() / (p1 / p0).ln());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    /// Sweep the angular order N at fixed mesh and step.
    Angular,
    /// Sweep the structured mesh divisions at fixed N and step.
    Spatial,
    /// Sweep the time step at fixed N and mesh.
    Temporal,
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StudyKind::Angular => "angular",
            StudyKind::Spatial => "spatial",
            StudyKind::Temporal => "temporal",
        };
        f.write_str(name)
    }
}

/// Full specification of one convergence study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub kind: StudyKind,
    /// Swept values: N (angular), divisions (spatial), or τ (temporal).
    pub sweep: Vec<f64>,
    pub n_max: usize,
    /// Held angular order for spatial/temporal studies.
    pub n: usize,
    /// Held mesh divisions for angular/temporal studies.
    pub divisions: usize,
    /// Held time step for angular/spatial studies.
    pub tau: f64,
    pub t_end: f64,
    pub sigma_a: f64,
    pub sigma_s: f64,
    pub solver: SolverConfig,
    /// Worker threads for independent sweep points.
    pub jobs: usize,
}

impl StudyConfig {
    pub fn angular() -> Self {
        Self {
            kind: StudyKind::Angular,
            sweep: vec![1.0, 3.0, 5.0, 7.0],
            n_max: 40,
            n: 3,
            divisions: 64,
            tau: 1e-3,
            t_end: 1.0,
            sigma_a: 0.01,
            sigma_s: 1.0,
            solver: SolverConfig::default(),
            jobs: 1,
        }
    }

    pub fn spatial() -> Self {
        Self {
            kind: StudyKind::Spatial,
            sweep: vec![8.0, 16.0, 32.0, 64.0],
            n_max: 2,
            n: 3,
            divisions: 64,
            tau: 1e-4,
            t_end: 1.0,
            sigma_a: 0.01,
            sigma_s: 1.0,
            solver: SolverConfig::default(),
            jobs: 1,
        }
    }

    pub fn temporal() -> Self {
        Self {
            kind: StudyKind::Temporal,
            sweep: vec![0.5, 0.25, 0.125, 0.0625],
            n_max: 2,
            n: 3,
            divisions: 64,
            tau: 1e-3,
            t_end: 1.0,
            sigma_a: 0.01,
            sigma_s: 1.0,
            solver: SolverConfig::default(),
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(TransportError::Config("study sweep is empty".to_string()));
        }
        if self.sweep.iter().any(|&p| !(p > 0.0)) {
            return Err(TransportError::Config("sweep values must be positive".to_string()));
        }
        if self.jobs == 0 {
            return Err(TransportError::Config("jobs must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Sweep values ordered so the EOC parameter increases row by row.
    fn ordered_sweep(&self) -> Vec<f64> {
        let mut sweep = self.sweep.clone();
        match self.kind {
            StudyKind::Angular | StudyKind::Spatial => {
                sweep.sort_by(|a, b| a.partial_cmp(b).unwrap())
            }
            StudyKind::Temporal => sweep.sort_by(|a, b| b.partial_cmp(a).unwrap()),
        }
        sweep
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone)]
pub struct StudyRow {
    /// The EOC parameter: N, divisions (1/h), or 1/τ.
    pub param: f64,
    pub e_plus: f64,
    pub e_big: f64,
    pub e_minus: f64,
    pub dofs: usize,
    pub eoc_plus: Option<f64>,
    pub eoc_big: Option<f64>,
    pub eoc_minus: Option<f64>,
}

/// A completed convergence study.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub kind: StudyKind,
    pub rows: Vec<StudyRow>,
}

impl ErrorReport {
    /// Table-style CSV: errors to 6 significant digits, eoc to 2 decimals,
    /// "--" where undefined.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "param,e_plus,eoc_plus,E_plus,eoc_E,e_minus,eoc_minus,dofs")?;
        let eoc = |v: Option<f64>| match v {
            Some(x) => format!("{x:.2}"),
            None => "--".to_string(),
        };
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.5e},{},{:.5e},{},{:.5e},{},{}",
                r.param.round() as i64,
                r.e_plus,
                eoc(r.eoc_plus),
                r.e_big,
                eoc(r.eoc_big),
                r.e_minus,
                eoc(r.eoc_minus),
                r.dofs
            )?;
        }
        Ok(())
    }
}

fn run_point(cfg: &StudyConfig, value: f64) -> Result<StudyRow> {
    let (n, divisions, tau) = match cfg.kind {
        StudyKind::Angular => (value as usize, cfg.divisions, cfg.tau),
        StudyKind::Spatial => (cfg.n, value as usize, cfg.tau),
        StudyKind::Temporal => (cfg.n, cfg.divisions, value),
    };
    let basis = AngularBasis::new(n)?;
    let mesh = unit_square_mesh(divisions);
    let collision = crate::angular_basis::isotropic_collision(cfg.sigma_a, cfg.sigma_s, n)?;
    let sys = TransportSystem::new(basis, mesh, collision)?;
    let sol = ManufacturedSolution::new(cfg.n_max);
    let asm = SourceAssembler::new(&sys, sol, false)?;
    let mut acc = ErrorAccumulator::new(&asm);
    let transient = TransientConfig { tau, t_end: cfg.t_end, record_every: usize::MAX - 1 };
    run_transient(
        &sys,
        &transient,
        &cfg.solver,
        |t| asm.load_at(t),
        sys.zero_field(),
        None,
        |step, t, state| acc.observe(step, t, state),
    )?;
    let errors = acc.finish();
    let param = match cfg.kind {
        StudyKind::Angular => n as f64,
        StudyKind::Spatial => divisions as f64,
        StudyKind::Temporal => 1.0 / tau,
    };
    Ok(StudyRow {
        param,
        e_plus: errors.e_plus,
        e_big: errors.e_big,
        e_minus: errors.e_minus,
        dofs: dof_count(sys.basis(), sys.mesh()),
        eoc_plus: None,
        eoc_big: None,
        eoc_minus: None,
    })
}

/// Runs a convergence study; sweep points are independent and may run on
/// `jobs` worker threads. The report is ordered by the EOC parameter and is
/// deterministic for a fixed configuration.
pub fn run_study(cfg: &StudyConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let sweep = cfg.ordered_sweep();
    let mut results: Vec<Option<Result<StudyRow>>> = Vec::new();
    results.resize_with(sweep.len(), || None);

    if cfg.jobs <= 1 {
        for (slot, &value) in results.iter_mut().zip(&sweep) {
            *slot = Some(run_point(cfg, value));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let shared = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..cfg.jobs.min(sweep.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= sweep.len() {
                        break;
                    }
                    let row = run_point(cfg, sweep[i]);
                    shared.lock().unwrap()[i] = Some(row);
                });
            }
        });
    }

    let mut rows = Vec::with_capacity(sweep.len());
    for (value, slot) in sweep.iter().zip(results) {
        let row = slot.expect("every sweep point was scheduled").map_err(|e| {
            TransportError::StudyPoint { param: format!("{value}"), source: Box::new(e) }
        })?;
        rows.push(row);
    }

    let params: Vec<f64> = rows.iter().map(|r| r.param).collect();
    let assign = |rows: &mut Vec<StudyRow>, get: fn(&StudyRow) -> f64, set: fn(&mut StudyRow, Option<f64>)| {
        let errors: Vec<f64> = rows.iter().map(get).collect();
        let eocs = compute_eoc(&errors, &params);
        for (row, eoc) in rows.iter_mut().zip(eocs) {
            set(row, eoc);
        }
    };
    assign(&mut rows, |r| r.e_plus, |r, v| r.eoc_plus = v);
    assign(&mut rows, |r| r.e_big, |r, v| r.eoc_big = v);
    assign(&mut rows, |r| r.e_minus, |r, v| r.eoc_minus = v);

    Ok(ErrorReport { kind: cfg.kind, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular_basis::{isotropic_collision, sphere_quadrature};
    use crate::simulation::elliptic_projection;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(n: usize, divisions: usize) -> TransportSystem {
        let basis = AngularBasis::new(n).unwrap();
        let mesh = unit_square_mesh(divisions);
        let collision = isotropic_collision(0.01, 1.0, n).unwrap();
        TransportSystem::new(basis, mesh, collision).unwrap()
    }

    fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi: f64 = rng.gen_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    }

    #[test]
    fn exactness_guard_rejects_low_order() {
        let sys = system(1, 2);
        let sol = ManufacturedSolution::new(2);
        assert!(SourceAssembler::new(&sys, sol.clone(), true).is_err());
        assert!(SourceAssembler::new(&sys, sol, false).is_ok());
    }

    #[test]
    fn initial_source_is_confined_to_solution_modes() {
        // g(0) = 0 kills the streaming and collision parts, so q(0) holds
        // only the m=0, l ≤ L temporal term.
        let sys = system(3, 2);
        let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
        let coeffs = asm.source_coefficients(0.0);
        for (mode, c) in asm.union_basis().even_modes().iter().zip(&coeffs.even) {
            assert_eq!(c[1], 0.0);
            assert_eq!(c[2], 0.0);
            if mode.m != 0 || mode.l > 2 {
                assert_eq!(c[0], 0.0);
            } else {
                assert!((c[0] - asm.solution().mode_coefficient(mode.l)).abs() < 1e-15);
            }
        }
        for (mode, c) in asm.union_basis().odd_modes().iter().zip(&coeffs.odd) {
            assert_eq!(c[1], 0.0);
            assert_eq!(c[2], 0.0);
            if mode.m != 0 || mode.l > 2 {
                assert_eq!(c[0], 0.0);
            }
        }
    }

    #[test]
    fn source_modes_stay_within_streaming_reach() {
        // Gradient terms reach degree L+1 and |m| ≤ 1 only; the s₃ channel
        // preserves m = 0.
        let sys = system(1, 2);
        let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(4), false).unwrap();
        let coeffs = asm.source_coefficients(1.7);
        let all = asm
            .union_basis()
            .even_modes()
            .iter()
            .zip(&coeffs.even)
            .chain(asm.union_basis().odd_modes().iter().zip(&coeffs.odd));
        for (mode, c) in all {
            if mode.l > 5 {
                assert!(c[0].abs() <= 1e-11 && c[1].abs() <= 1e-11 && c[2].abs() <= 1e-11);
            }
            if mode.m.unsigned_abs() as usize > 1 {
                assert!(c[1].abs() <= 1e-11 && c[2].abs() <= 1e-11);
            }
            if mode.m != 0 {
                assert!(c[2].abs() <= 1e-11, "s3 channel must preserve m=0");
                assert!(c[0].abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn strong_form_residual_vanishes_at_random_points() {
        let sys = system(3, 2);
        let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let r = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let s = random_direction(&mut rng);
            let t = rng.gen_range(0.0..3.0);
            let lhs = asm.analytic_source(r, s, t).unwrap();
            let rhs = asm.eval_source(r, s, t).unwrap();
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "strong-form residual {} at r={r:?} s={s:?} t={t}",
                lhs - rhs
            );
        }
    }

    #[test]
    fn zero_solution_errors_match_series_and_quadrature() {
        // Against the zero discrete solution the error is the solution norm:
        // each parity contributes 0.5·√(Σ c_l²)·g, and the gradient part has
        // the analytic normalizer π²/4 per direction.
        let n_max = 6;
        let sys = system(3, 16);
        let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(n_max), false).unwrap();
        let t = 25.0;
        let g = asm.solution().temporal(t);
        let zero = sys.zero_field();
        let errors = compute_errors(&asm, t, &[(1, zero)]);

        let series = |parity: usize| -> f64 {
            (parity..=n_max)
                .step_by(2)
                .map(|l| {
                    let c = 1.0 / ((l + 1) * (l + 1)) as f64;
                    c * c
                })
                .sum::<f64>()
        };
        assert!((errors.e_plus - 0.5 * g * series(0).sqrt()).abs() < 1e-6);
        assert!((errors.e_minus - 0.5 * g * series(1).sqrt()).abs() < 1e-6);

        // Independent quadrature of ‖φ⁺‖², ‖φ⁻‖², ‖s·∇φ⁺‖²; the integrands
        // s_a s_b F(s)² have degree 2L + 2.
        let rule = sphere_quadrature(2 * n_max + 4);
        let mut even_ang = 0.0;
        let mut odd_ang = 0.0;
        let mut sg = [[0.0; 2]; 2];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let modes = eval_all_modes(n_max, s);
            let mut fe = 0.0;
            let mut fo = 0.0;
            for l in 0..=n_max {
                let c = asm.solution().mode_coefficient(l) * modes[flat_index(l, 0)];
                if l % 2 == 0 {
                    fe += c;
                } else {
                    fo += c;
                }
            }
            even_ang += w * fe * fe;
            odd_ang += w * fo * fo;
            let dirs = [s[0], s[2]];
            for a in 0..2 {
                for b in 0..2 {
                    sg[a][b] += w * dirs[a] * dirs[b] * fe * fe;
                }
            }
        }
        let quad_e_plus = (0.25 * even_ang).sqrt() * g;
        let quad_e_minus = (0.25 * odd_ang).sqrt() * g;
        assert!((errors.e_plus - quad_e_plus).abs() < 1e-6 * quad_e_plus.max(1.0));
        assert!((errors.e_minus - quad_e_minus).abs() < 1e-6 * quad_e_minus.max(1.0));

        let pi2 = PI * PI / 4.0;
        let stream_sq = pi2 * sg[0][0] + pi2 * sg[1][1];
        let quad_big = (0.25 * even_ang + stream_sq).sqrt() * g;
        assert!(
            (errors.e_big - quad_big).abs() < 1e-6 * quad_big,
            "E+ {} vs quadrature {quad_big}",
            errors.e_big
        );
    }

    #[test]
    fn reported_error_respects_the_truncation_tail() {
        // The discrete error cannot beat the norm of the dropped modes.
        let n_max = 6;
        let n = 1;
        let sys = system(n, 16);
        let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(n_max), false).unwrap();
        let mut acc = ErrorAccumulator::new(&asm);
        let transient = TransientConfig { tau: 0.25, t_end: 2.5, record_every: usize::MAX - 1 };
        run_transient(
            &sys,
            &transient,
            &SolverConfig::default(),
            |t| asm.load_at(t),
            sys.zero_field(),
            None,
            |step, t, state| acc.observe(step, t, state),
        )
        .unwrap();
        let errors = acc.finish();
        let g = asm.solution().temporal(2.5);
        let tail: f64 = (2..=n_max)
            .step_by(2)
            .map(|l| {
                let c = 1.0 / ((l + 1) * (l + 1)) as f64;
                c * c
            })
            .sum();
        // The shared quadrature metric deviates from the exact ∫φ₀² = 1/4
        // by the rule error, hence the relative slack.
        let floor = 0.5 * g * tail.sqrt() * (1.0 - 1e-6);
        assert!(errors.e_plus >= floor, "e+ {} beat the truncation floor {floor}", errors.e_plus);
    }

    #[test]
    fn halving_the_mesh_halves_the_gradient_error() {
        let errors: Vec<f64> = [16usize, 32]
            .iter()
            .map(|&div| {
                let sys = system(3, div);
                let asm =
                    SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
                let mut acc = ErrorAccumulator::new(&asm);
                let transient =
                    TransientConfig { tau: 1e-3, t_end: 0.2, record_every: usize::MAX - 1 };
                run_transient(
                    &sys,
                    &transient,
                    &SolverConfig::default(),
                    |t| asm.load_at(t),
                    sys.zero_field(),
                    None,
                    |step, t, state| acc.observe(step, t, state),
                )
                .unwrap();
                acc.finish().e_big
            })
            .collect();
        let ratio = errors[0] / errors[1];
        assert!((1.5..=2.5).contains(&ratio), "E+ ratio {ratio} not ≈ 2");
    }

    #[test]
    fn projection_is_quasi_optimal_against_interpolation() {
        for div in [4usize, 8] {
            let sys = system(3, div);
            let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
            let t_ref = 60.0;

            // Nodal/midpoint interpolant of the stationary solution.
            let mut interp = sys.zero_field();
            for (gamma, mode) in sys.basis().even_modes().iter().enumerate() {
                if mode.m != 0 {
                    continue;
                }
                let c = asm.solution().mode_coefficient(mode.l);
                for (v, &p) in sys.mesh().vertices().iter().enumerate() {
                    interp.even[[v, gamma]] = c * asm.solution().spatial_profile(p);
                }
            }
            for (gamma, mode) in sys.basis().odd_modes().iter().enumerate() {
                if mode.m != 0 {
                    continue;
                }
                let c = asm.solution().mode_coefficient(mode.l);
                for k in 0..sys.mesh().n_triangles() {
                    let [a, b, cc] = sys.mesh().triangle_coords(k);
                    let centroid =
                        [(a[0] + b[0] + cc[0]) / 3.0, (a[1] + b[1] + cc[1]) / 3.0];
                    interp.odd[[k, gamma]] = c * asm.solution().spatial_profile(centroid);
                }
            }
            let e_interp = compute_errors(&asm, t_ref, &[(1, interp)]);

            let tight = SolverConfig { rel_tolerance: 1e-12, ..SolverConfig::default() };
            let proj = elliptic_projection(&sys, &asm.stationary_load(), &tight).unwrap();
            let e_proj = compute_errors(&asm, t_ref, &[(1, proj)]);

            let total = |e: &ErrorTriple| (e.e_plus * e.e_plus + e.e_minus * e.e_minus).sqrt();
            assert!(
                total(&e_proj) <= 100.0 * total(&e_interp),
                "projection error {} far above interpolation error {} at divisions {div}",
                total(&e_proj),
                total(&e_interp)
            );
        }
    }

    #[test]
    fn analytic_source_norm_matches_quadrature() {
        let sys = system(3, 8);
        let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
        let t = 0.8;
        let analytic = asm.source_norm_sq(t);

        // q(r, ·, t)² has angular degree at most twice the union order.
        let sphere = sphere_quadrature(2 * asm.union_basis().order() + 2);
        let tri_rule = triangle_rule_deg5();
        let mesh = sys.mesh();
        let mut brute = 0.0;
        for k in 0..mesh.n_triangles() {
            let [a, b, c] = mesh.triangle_coords(k);
            let area = mesh.areas()[k];
            for &(bary, wq) in &tri_rule {
                let r = [
                    bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                    bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
                ];
                let mut ang = 0.0;
                for (&s, &w) in sphere.points.iter().zip(&sphere.weights) {
                    let q = asm.eval_source(r, s, t).unwrap();
                    ang += w * q * q;
                }
                brute += wq * area * ang;
            }
        }
        assert!(
            (analytic - brute).abs() <= 1e-6 * brute,
            "norm² analytic {analytic} vs quadrature {brute}"
        );
    }

    #[test]
    fn eoc_reproduces_published_table_values() {
        let cases = [
            (vec![6.06e-2, 2.41e-2], vec![1.0, 3.0], 0.84),
            (vec![1.94e-2, 3.77e-3], vec![8.0, 16.0], 2.36),
            (vec![3.81e-2, 2.10e-2], vec![2.0, 4.0], 0.86),
        ];
        for (errors, params, expected) in cases {
            let eoc = compute_eoc(&errors, &params);
            assert!(eoc[0].is_none());
            let got = eoc[1].unwrap();
            assert!((got - expected).abs() <= 0.01, "eoc {got} vs published {expected}");
        }
    }

    #[test]
    fn study_report_is_deterministic_and_well_formed() {
        let mut cfg = StudyConfig::spatial();
        cfg.sweep = vec![4.0, 2.0];
        cfg.tau = 0.1;
        cfg.t_end = 0.3;
        let report = run_study(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].param, 2.0);
        assert_eq!(report.rows[1].param, 4.0);
        assert!(report.rows[0].eoc_plus.is_none());
        assert!(report.rows[1].eoc_plus.is_some());
        let mut csv1 = Vec::new();
        report.write_csv(&mut csv1).unwrap();
        let report2 = run_study(&cfg).unwrap();
        let mut csv2 = Vec::new();
        report2.write_csv(&mut csv2).unwrap();
        assert_eq!(csv1, csv2, "repeated study must be byte-identical");
        let text = String::from_utf8(csv1).unwrap();
        assert!(text.starts_with("param,e_plus,eoc_plus,E_plus,eoc_E,e_minus,eoc_minus,dofs\n"));
        let first = text.lines().nth(1).unwrap();
        assert!(first.starts_with("2,"));
        assert_eq!(first.matches("--").count(), 3, "first row has no eoc: {first}");
        let second = text.lines().nth(2).unwrap();
        assert!(!second.contains("--"), "second row has all eocs: {second}");
    }

    #[test]
    fn parallel_study_matches_serial_study() {
        let mut cfg = StudyConfig::spatial();
        cfg.sweep = vec![2.0, 4.0, 8.0];
        cfg.tau = 0.1;
        cfg.t_end = 0.2;
        let serial = run_study(&cfg).unwrap();
        cfg.jobs = 3;
        let parallel = run_study(&cfg).unwrap();
        let mut a = Vec::new();
        serial.write_csv(&mut a).unwrap();
        let mut b = Vec::new();
        parallel.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }
}
