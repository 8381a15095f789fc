//! Low-level quadrature rules: Gauss-Legendre on [-1, 1] and a fixed
//! degree-5 rule on triangles.
//!
//! These rules back every oracle in the crate: the spherical product rules
//! are built from the 1D Gauss-Legendre nodes, scattering kernel moments are
//! 1D integrals against Legendre polynomials, and all manufactured-solution
//! load and error integrals use the triangle rule.

/// Kahan-compensated sum; used wherever thousands of terms meet
/// 1e-13-level tolerances.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let term = v - carry;
        let t = sum + term;
        carry = (t - sum) - term;
        sum = t;
    }
    sum
}

/// Evaluates the Legendre polynomial P_l at x by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => {
            let mut p_prev = 1.0;
            let mut p = x;
            for k in 1..l {
                let k = k as f64;
                let p_next = ((2.0 * k + 1.0) * x * p - k * p_prev) / (k + 1.0);
                p_prev = p;
                p = p_next;
            }
            p
        }
    }
}

/// Evaluates P_n and its derivative P_n' at x in one recurrence pass.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let k = k as f64;
        let p_next = ((2.0 * k + 1.0) * x * p - k * p_prev) / (k + 1.0);
        p_prev = p;
        p = p_next;
    }
    // Derivative from the stable endpoint-free identity
    // (1 - x²) P_n'(x) = n (P_{n-1}(x) - x P_n(x)).
    let dp = n as f64 * (p_prev - x * p) / (1.0 - x * x);
    (p, dp)
}

/// Gauss-Legendre rule with `n` nodes on [-1, 1], exact for polynomials of
/// degree <= 2n - 1. Returns (nodes ascending, weights).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton; converges in < 10 steps.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                x -= p / dp;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // cos() descends, so index i is the i-th largest root.
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        // The middle root of an odd-degree rule is exactly zero.
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_with_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        nodes.iter().map(|x| mid + half * x).collect(),
        weights.iter().map(|w| w * half).collect(),
    )
}

/// Seven-point degree-5 rule on a triangle in barycentric coordinates.
///
/// Weights are normalized to sum to one; multiply by the triangle area when
/// integrating. Returns (barycentric coordinates, weight) per point.
pub fn triangle_rule_deg5() -> [([f64; 3], f64); 7] {
    let s15 = 15.0_f64.sqrt();
    let a = (6.0 - s15) / 21.0;
    let b = (6.0 + s15) / 21.0;
    let wa = (155.0 - s15) / 1200.0;
    let wb = (155.0 + s15) / 1200.0;
    let c = 1.0 / 3.0;
    [
        ([c, c, c], 9.0 / 40.0),
        ([a, a, 1.0 - 2.0 * a], wa),
        ([a, 1.0 - 2.0 * a, a], wa),
        ([1.0 - 2.0 * a, a, a], wa),
        ([b, b, 1.0 - 2.0 * b], wb),
        ([b, 1.0 - 2.0 * b, b], wb),
        ([1.0 - 2.0 * b, b, b], wb),
    ]
}
