//! Real spherical harmonics on S², parity bookkeeping, and all purely
//! angular matrices: streaming coupling, collision eigenvalues, and
//! half-range boundary matrices, plus the spherical quadrature oracles.
//!
//! The basis is the real orthonormal one; modes are ordered by degree l
//! ascending, then order m ascending, separately inside the even-parity
//! (l even) and odd-parity (l odd) blocks. That ordering is part of the
//! output format contract and must not change.
//!
//! All matrix entries are computed by quadrature at construction time. The
//! product rule (Gauss-Legendre in cos θ, split at the equator, times a
//! uniform azimuth grid) is exact for the spherical polynomials that appear,
//! so "quadrature" here means exact evaluation up to roundoff. Integrands
//! containing |s·n| for a non-polar n are handled by the half-range variant
//! of the rule, which rotates the polar axis onto n; the plain product rule
//! cannot resolve the equatorial kink of |s·n| to oracle accuracy.

use crate::quadrature::{gauss_legendre, legendre};
use crate::{Result, TransportError};
use ndarray::Array2;

/// 1/sqrt(4 pi), the constant spherical harmonic.
pub const Y00: f64 = 0.28209479177387814;

/// A single real spherical-harmonic mode (degree l, order m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex {
    /// Degree, l >= 0.
    pub l: usize,
    /// Order, -l <= m <= l.
    pub m: i64,
}

impl ModeIndex {
    pub fn new(l: usize, m: i64) -> Self {
        assert!(m.unsigned_abs() as usize <= l, "mode order |m| must not exceed degree l");
        Self { l, m }
    }

    /// Even parity iff the degree is even: Y(-s) = (-1)^l Y(s).
    pub fn is_even(self) -> bool {
        self.l % 2 == 0
    }
}

/// Truncated real spherical-harmonics basis of odd order N with its
/// even/odd parity partition.
#[derive(Debug, Clone)]
pub struct AngularBasis {
    n: usize,
    even_modes: Vec<ModeIndex>,
    odd_modes: Vec<ModeIndex>,
}

impl AngularBasis {
    /// Builds the basis for odd truncation order N. Even N is rejected:
    /// the compatibility condition A W_N⁺ ⊂ V_N⁻ requires N odd.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 == 0 {
            return Err(TransportError::Config(format!(
                "truncation order N must be odd and positive, got {n}"
            )));
        }
        let mut even_modes = Vec::new();
        let mut odd_modes = Vec::new();
        for l in 0..=n {
            for m in -(l as i64)..=(l as i64) {
                let mode = ModeIndex { l, m };
                if mode.is_even() {
                    even_modes.push(mode);
                } else {
                    odd_modes.push(mode);
                }
            }
        }
        Ok(Self { n, even_modes, odd_modes })
    }

    /// Truncation order N.
    pub fn order(&self) -> usize {
        self.n
    }

    /// Even-parity modes, ordered by (l, m) ascending.
    pub fn even_modes(&self) -> &[ModeIndex] {
        &self.even_modes
    }

    /// Odd-parity modes, ordered by (l, m) ascending.
    pub fn odd_modes(&self) -> &[ModeIndex] {
        &self.odd_modes
    }

    pub fn n_even(&self) -> usize {
        self.even_modes.len()
    }

    pub fn n_odd(&self) -> usize {
        self.odd_modes.len()
    }

    /// Position of an even mode inside the even block.
    pub fn even_index(&self, l: usize, m: i64) -> usize {
        debug_assert!(l % 2 == 0 && l <= self.n);
        let j = l / 2;
        2 * j * j - j + (m + l as i64) as usize
    }

    /// Position of an odd mode inside the odd block.
    pub fn odd_index(&self, l: usize, m: i64) -> usize {
        debug_assert!(l % 2 == 1 && l <= self.n);
        let j = (l - 1) / 2;
        2 * j * j + j + (m + l as i64) as usize
    }
}

fn check_unit(v: [f64; 3], what: &str) -> Result<()> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(TransportError::Domain(format!(
            "{what} must be a unit vector, |v| = {norm:.15}"
        )));
    }
    Ok(())
}

/// Evaluates the real orthonormal spherical harmonic Y_{l,m} at a unit
/// direction s. Satisfies Y(-s) = (-1)^l Y(s).
pub fn sh_eval(mode: ModeIndex, s: [f64; 3]) -> Result<f64> {
    check_unit(s, "direction s")?;
    let table = eval_all_modes(mode.l, s);
    Ok(table[flat_index(mode.l, mode.m)])
}

/// Flat index of mode (l, m) in the all-modes table: l² + l + m.
pub fn flat_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Evaluates every real orthonormal spherical harmonic with degree <= l_max
/// at the unit direction s. The result is indexed by [`flat_index`].
///
/// Uses the fully normalized associated Legendre recurrence (normalization
/// folded into the recursion, no Condon-Shortley phase), stable far beyond
/// the degrees needed here.
pub fn eval_all_modes(l_max: usize, s: [f64; 3]) -> Vec<f64> {
    let x = s[2]; // cos(theta)
    let st = (s[0] * s[0] + s[1] * s[1]).sqrt(); // sin(theta) >= 0
    // Azimuth is irrelevant on the polar axis (all m != 0 harmonics vanish
    // there through the sin(theta)^m factor).
    let (cp, sp) = if st > 0.0 { (s[0] / st, s[1] / st) } else { (1.0, 0.0) };

    let n_modes = (l_max + 1) * (l_max + 1);
    let mut out = vec![0.0; n_modes];

    // pbar[m][l] would be the normalized associated Legendre table; we only
    // keep the current diagonal value and the two-term ladder per m.
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut pmm = Y00; // normalized P_0^0
    let mut cos_m = 1.0; // cos(m phi)
    let mut sin_m = 0.0; // sin(m phi)
    for m in 0..=l_max {
        if m > 0 {
            // Diagonal step: P(m, m) from P(m-1, m-1).
            let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
            pmm *= f * st;
            // Azimuth angle multiples.
            let (c, s_) = (cos_m * cp - sin_m * sp, sin_m * cp + cos_m * sp);
            cos_m = c;
            sin_m = s_;
        }
        let azi_c = if m == 0 { 1.0 } else { sqrt2 * cos_m };
        let azi_s = sqrt2 * sin_m;
        let mut store = |l: usize, pbar: f64| {
            out[flat_index(l, m as i64)] = pbar * azi_c;
            if m > 0 {
                out[flat_index(l, -(m as i64))] = pbar * azi_s;
            }
        };
        store(m, pmm);
        if m < l_max {
            // First ladder step: P(m+1, m).
            let mut p_prev = pmm;
            let mut p = ((2 * m + 3) as f64).sqrt() * x * pmm;
            store(m + 1, p);
            let mut a_prev = ((2 * m + 3) as f64).sqrt(); // a_{m+1}^m
            for l in (m + 2)..=l_max {
                let l2 = (l * l) as f64;
                let a = ((4.0 * l2 - 1.0) / (l2 - (m * m) as f64)).sqrt();
                let p_next = a * (x * p - p_prev / a_prev);
                p_prev = p;
                p = p_next;
                a_prev = a;
                store(l, p);
            }
        }
    }
    out
}

/// Quadrature rule on the unit sphere: unit points with positive weights.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Integrates a function over the sphere with this rule.
    ///
    /// Uses compensated summation: the rules carry thousands of points and
    /// the oracle comparisons sit at the 1e-12 level, where naive
    /// accumulation order would already show.
    pub fn integrate(&self, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
        let mut sum = 0.0;
        let mut carry = 0.0;
        for (&s, &w) in self.points.iter().zip(&self.weights) {
            let term = w * f(s) - carry;
            let t = sum + term;
            carry = (t - sum) - term;
            sum = t;
        }
        sum
    }
}

/// Product quadrature on S²: Gauss-Legendre in cos θ with `order` nodes per
/// hemisphere (split at the equator) times 2(order+1) uniform azimuth nodes.
///
/// Exact for spherical polynomials of degree <= 2 order - 1 in the polar
/// variable (the azimuth resolution, trig degree 2 order + 1, never binds),
/// and exact for |s·n| times such polynomials when n is the polar axis.
pub fn sphere_quadrature(order: usize) -> SphereRule {
    assert!(order >= 1, "sphere_quadrature needs order >= 1");
    let (mu, wmu) = gauss_legendre(order);
    let n_azi = 2 * (order + 1);
    let dphi = 2.0 * std::f64::consts::PI / n_azi as f64;

    let mut points = Vec::with_capacity(2 * order * n_azi);
    let mut weights = Vec::with_capacity(2 * order * n_azi);
    for hemisphere in [-1.0_f64, 1.0] {
        for (m, wm) in mu.iter().zip(&wmu) {
            // Map [-1, 1] onto [-1, 0] or [0, 1].
            let z = 0.5 * (m + hemisphere);
            let w_z = 0.5 * wm;
            let st = (1.0 - z * z).max(0.0).sqrt();
            for k in 0..n_azi {
                let phi = dphi * k as f64;
                points.push([st * phi.cos(), st * phi.sin(), z]);
                weights.push(w_z * dphi);
            }
        }
    }
    SphereRule { points, weights }
}

/// The sphere rule with its polar axis rotated onto n: the oracle for
/// integrands containing |s·n|. For each returned point, s·n equals the
/// pre-rotation polar coordinate exactly, so the equatorial kink of |s·n|
/// falls on the panel boundary and the rule stays exact.
pub fn halfrange_quadrature(order: usize, n: [f64; 3]) -> Result<SphereRule> {
    check_unit(n, "normal n")?;
    let base = sphere_quadrature(order);
    let rot = rotation_to(n);
    let points = base.points.iter().map(|&p| rot(p)).collect();
    Ok(SphereRule { points, weights: base.weights })
}

/// Returns the rotation taking e_z onto the unit vector n (Rodrigues form).
fn rotation_to(n: [f64; 3]) -> impl Fn([f64; 3]) -> [f64; 3] {
    let s = (n[0] * n[0] + n[1] * n[1]).sqrt();
    // Axis e_z x n normalized; undefined for n = ±e_z, where the rotation
    // degenerates to the identity or a half-turn about e_x.
    let (kx, ky) = if s > 1e-15 { (-n[1] / s, n[0] / s) } else { (1.0, 0.0) };
    let cos_a = n[2];
    let sin_a = s;
    move |v: [f64; 3]| {
        let kv = kx * v[0] + ky * v[1];
        let cross = [ky * v[2], -kx * v[2], kx * v[1] - ky * v[0]];
        [
            v[0] * cos_a + cross[0] * sin_a + kx * kv * (1.0 - cos_a),
            v[1] * cos_a + cross[1] * sin_a + ky * kv * (1.0 - cos_a),
            v[2] * cos_a + cross[2] * sin_a,
        ]
    }
}

/// Sparse streaming matrices A_d, d = 1, 2, 3, with entries
/// (A_d)_{ij} = ∫ s_d Y_i(s) Y_j(s) ds for odd row mode i and even column
/// mode j. Only degree-neighbor couplings (l' = l ± 1, |m' - m| <= 1) can be
/// nonzero; entries are computed by quadrature and stored as triplets.
#[derive(Debug, Clone)]
pub struct StreamingMatrices {
    n_even: usize,
    n_odd: usize,
    /// Per direction d: (odd row, even column, value).
    entries: [Vec<(usize, usize, f64)>; 3],
}

impl StreamingMatrices {
    pub fn n_even(&self) -> usize {
        self.n_even
    }

    pub fn n_odd(&self) -> usize {
        self.n_odd
    }

    /// Stored triplets (odd row, even column, value) of A_d, d in {0,1,2}
    /// for the spatial directions 1, 2, 3.
    pub fn triplets(&self, d: usize) -> &[(usize, usize, f64)] {
        &self.entries[d]
    }

    /// Dense copy of A_d (n_odd x n_even).
    pub fn to_dense(&self, d: usize) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_odd, self.n_even));
        for &(i, j, v) in &self.entries[d] {
            a[[i, j]] = v;
        }
        a
    }
}

/// Builds the streaming matrices for a basis by quadrature of order N + 1.
/// The known sparsity pattern only bounds the fill; every kept value is the
/// quadrature integral itself.
pub fn streaming_matrices(basis: &AngularBasis) -> StreamingMatrices {
    streaming_matrices_with_order(basis, basis.order() + 1)
}

/// Same as [`streaming_matrices`] with an explicit quadrature order; used by
/// oracle cross-checks that want an independent rule.
pub fn streaming_matrices_with_order(basis: &AngularBasis, order: usize) -> StreamingMatrices {
    let rule = sphere_quadrature(order);
    // Candidate pairs: l' = l ± 1 and |m - m'| <= 1 (exact selection rules
    // of s_d in the real basis; everything else vanishes identically).
    let mut pairs: Vec<(usize, usize, usize, usize)> = Vec::new(); // (row, col, flat_odd, flat_even)
    for (j, &me) in basis.even_modes().iter().enumerate() {
        for (i, &mo) in basis.odd_modes().iter().enumerate() {
            let dl = mo.l.abs_diff(me.l);
            let dm = (mo.m - me.m).abs();
            if dl == 1 && dm <= 1 {
                pairs.push((i, j, flat_index(mo.l, mo.m), flat_index(me.l, me.m)));
            }
        }
    }
    let mut sums = vec![[0.0_f64; 3]; pairs.len()];
    for (&s, &w) in rule.points.iter().zip(&rule.weights) {
        let table = eval_all_modes(basis.order(), s);
        for (p, &(_, _, fo, fe)) in pairs.iter().enumerate() {
            let yy = w * table[fo] * table[fe];
            sums[p][0] += yy * s[0];
            sums[p][1] += yy * s[1];
            sums[p][2] += yy * s[2];
        }
    }
    let mut entries: [Vec<(usize, usize, f64)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (p, &(i, j, _, _)) in pairs.iter().enumerate() {
        for d in 0..3 {
            if sums[p][d].abs() > 1e-13 {
                entries[d].push((i, j, sums[p][d]));
            }
        }
    }
    StreamingMatrices {
        n_even: basis.n_even(),
        n_odd: basis.n_odd(),
        entries,
    }
}

/// Collision operator spectrum: eigenvalue c_l = σ_t - σ_{s,l} per degree l
/// (Funk-Hecke), with σ_{s,l} = 2π ∫ k(μ) P_l(μ) dμ.
#[derive(Debug, Clone)]
pub struct CollisionSpectrum {
    sigma_t: f64,
    c: Vec<f64>,
}

impl CollisionSpectrum {
    /// Total cross-section σ_t.
    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    /// Eigenvalue c_l.
    pub fn eigenvalue(&self, l: usize) -> f64 {
        self.c[l]
    }

    /// All eigenvalues, index = degree.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.c
    }

    /// Eigenvalue for any degree: beyond the stored range the kernel has no
    /// Legendre moment, so c_l = σ_t there.
    pub fn eigenvalue_extended(&self, l: usize) -> f64 {
        self.c.get(l).copied().unwrap_or(self.sigma_t)
    }

    /// The coercivity constant σ̲_a = min_l c_l (positive by construction).
    pub fn sigma_a_min(&self) -> f64 {
        self.c.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Builds the collision spectrum from the kernel's Legendre moments
/// σ_{s,l} (missing moments are zero). Fails unless c_l > 0 for all l <= N,
/// the coercivity assumption on the collision operator.
pub fn collision_spectrum(
    kernel_legendre_moments: &[f64],
    sigma_t: f64,
    n: usize,
) -> Result<CollisionSpectrum> {
    let c: Vec<f64> = (0..=n)
        .map(|l| sigma_t - kernel_legendre_moments.get(l).copied().unwrap_or(0.0))
        .collect();
    let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(TransportError::Config(format!(
            "collision spectrum is not coercive: min_l c_l = {min:.6e} <= 0"
        )));
    }
    Ok(CollisionSpectrum { sigma_t, c })
}

/// Collision spectrum of the isotropic kernel k = σ_s / 4π with absorption
/// σ_a: σ_t = σ_a + σ_s, c_0 = σ_a, c_l = σ_a + σ_s for l >= 1.
pub fn isotropic_collision(sigma_a: f64, sigma_s: f64, n: usize) -> Result<CollisionSpectrum> {
    let mut moments = vec![0.0; n + 1];
    moments[0] = sigma_s;
    collision_spectrum(&moments, sigma_a + sigma_s, n)
}

/// Legendre moments 2π ∫_{-1}^{1} k(μ) P_l(μ) dμ of a scattering kernel,
/// computed by 1D Gauss-Legendre quadrature. The 1D oracle for
/// [`collision_spectrum`] inputs.
pub fn kernel_legendre_moments(
    kernel: impl Fn(f64) -> f64,
    count: usize,
    quad_order: usize,
) -> Vec<f64> {
    let (x, w) = gauss_legendre(quad_order);
    (0..count)
        .map(|l| {
            let int: f64 = x
                .iter()
                .zip(&w)
                .map(|(&x, &w)| w * kernel(x) * legendre(l, x))
                .sum();
            2.0 * std::f64::consts::PI * int
        })
        .collect()
}

/// Dense symmetric half-range boundary matrix for one outward normal n:
/// entries ∫ |s·n| Y_i(s) Y_j(s) ds over the even modes.
#[derive(Debug, Clone)]
pub struct HalfRangeMatrix {
    pub normal: [f64; 3],
    /// n_even x n_even, symmetric positive semidefinite.
    pub matrix: Array2<f64>,
}

/// Builds the half-range matrix by the rotated quadrature rule, which is
/// exact for |s·n| times even-even harmonic products.
pub fn halfrange_matrix(basis: &AngularBasis, n: [f64; 3]) -> Result<HalfRangeMatrix> {
    halfrange_matrix_with_order(basis, n, basis.order() + 1)
}

/// Same as [`halfrange_matrix`] with an explicit quadrature order.
pub fn halfrange_matrix_with_order(
    basis: &AngularBasis,
    n: [f64; 3],
    order: usize,
) -> Result<HalfRangeMatrix> {
    check_unit(n, "normal n")?;
    let base = sphere_quadrature(order);
    let rot = rotation_to(n);
    let n_even = basis.n_even();
    let flat: Vec<usize> = basis
        .even_modes()
        .iter()
        .map(|m| flat_index(m.l, m.m))
        .collect();
    let mut matrix = Array2::zeros((n_even, n_even));
    let mut y = vec![0.0; n_even];
    for (&p, &w) in base.points.iter().zip(&base.weights) {
        // |s·n| equals |polar coordinate| of the unrotated point, exactly.
        let mu_abs = p[2].abs();
        if mu_abs == 0.0 {
            continue;
        }
        let s = rot(p);
        let table = eval_all_modes(basis.order(), s);
        for (k, &f) in flat.iter().enumerate() {
            y[k] = table[f];
        }
        let scale = w * mu_abs;
        for i in 0..n_even {
            let yi = scale * y[i];
            for j in i..n_even {
                matrix[[i, j]] += yi * y[j];
            }
        }
    }
    for i in 0..n_even {
        for j in 0..i {
            matrix[[i, j]] = matrix[[j, i]];
        }
    }
    Ok(HalfRangeMatrix { normal: n, matrix })
}
