//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the governing tolerance. Runtimes range from instant
//! to a few minutes for the convergence studies.

use pn_transport::angular_basis::{isotropic_collision, AngularBasis};
use pn_transport::benchmark_harness::{
    compute_eoc, run_study, ManufacturedSolution, SourceAssembler, StudyConfig, StudyKind,
    StudyRow,
};
use pn_transport::linear_solvers::{
    dense_assemble, dense_oracle_solve, field_to_flat, flat_to_field, solve_stationary,
    SolverConfig,
};
use pn_transport::simulation::{run_transient, TransientConfig};
use pn_transport::spatial_mesh::{dof_count_vt, unit_square_mesh, TriMesh};
use pn_transport::transport_operators::{ParityField, TransportSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Prints the verdict line before asserting so a failure still reports.
fn verdict(criterion: usize, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion}: {tag} — {detail}");
    assert!(passed, "acceptance criterion {criterion} failed: {detail}");
}

fn two_triangle_mesh() -> TriMesh {
    TriMesh::new(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

fn system(n: usize, mesh: TriMesh, sigma_a: f64, sigma_s: f64) -> TransportSystem {
    let basis = AngularBasis::new(n).unwrap();
    let collision = isotropic_collision(sigma_a, sigma_s, n).unwrap();
    TransportSystem::new(basis, mesh, collision).unwrap()
}

fn random_field(sys: &TransportSystem, rng: &mut impl Rng) -> ParityField {
    let mut x = sys.zero_field();
    for v in x.even.iter_mut().chain(x.odd.iter_mut()) {
        *v = rng.gen_range(-1.0..1.0);
    }
    x
}

#[test]
fn acceptance_01_dof_counts_match_published_table() {
    let expected = [(1usize, 111385usize), (3, 414294), (5, 908727), (7, 1594684)];
    let mut got = Vec::new();
    for (n, want) in expected {
        let basis = AngularBasis::new(n).unwrap();
        let count = dof_count_vt(&basis, 16129, 31752);
        got.push((n, count, want));
    }
    let passed = got.iter().all(|&(_, g, w)| g == w);
    let detail = format!(
        "dof counts at 16129 vertices / 31752 triangles: {}",
        got.iter()
            .map(|(n, g, w)| format!("N={n}: {g} (expected {w})"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    verdict(1, passed, &detail);
}

#[test]
fn acceptance_02_matrix_free_and_solver_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240202);
    let solver = SolverConfig { rel_tolerance: 1e-12, ..SolverConfig::default() };
    let mut worst_apply = 0.0f64;
    let mut worst_solve = 0.0f64;
    for n in [1usize, 3] {
        for mesh in [two_triangle_mesh(), unit_square_mesh(2)] {
            let sys = system(n, mesh, 0.7, 0.9);
            let mat = dense_assemble(&sys, 0.0).unwrap();
            for _ in 0..20 {
                let x = random_field(&sys, &mut rng);
                let dense = flat_to_field(&sys, &(&mat * field_to_flat(&x)));
                let mut diff = sys.apply_b(&x);
                diff.axpy(-1.0, &dense);
                worst_apply = worst_apply.max(sys.mass_norm(&diff) / sys.mass_norm(&dense));

                let load = random_field(&sys, &mut rng);
                let (iterative, _) = solve_stationary(&sys, &load, &solver).unwrap();
                let direct = dense_oracle_solve(&sys, &load).unwrap();
                let mut diff = iterative.clone();
                diff.axpy(-1.0, &direct);
                worst_solve =
                    worst_solve.max(sys.mass_norm(&diff) / sys.mass_norm(&direct));
            }
        }
    }
    let passed = worst_apply <= 1e-9 && worst_solve <= 1e-9;
    let detail = format!(
        "20 random rhs on 4 instances: apply mismatch {worst_apply:.2e}, \
         solve mismatch {worst_solve:.2e}, tolerance 1e-9 relative mass norm"
    );
    verdict(2, passed, &detail);
}

#[test]
fn acceptance_03_skew_and_coercive_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240303);
    let sys = system(3, unit_square_mesh(4), 0.01, 1.0);
    let sigma_min = 0.01;
    let mut worst_skew = 0.0f64;
    let mut worst_gap = f64::INFINITY;
    for _ in 0..100 {
        let x = random_field(&sys, &mut rng);
        let m = sys.mass_dot(&x, &x);
        worst_skew = worst_skew.max(sys.apply_s(&x).dot(&x).abs() / m);
        worst_gap = worst_gap.min(sys.apply_h(&x).dot(&x) - sigma_min * m);
    }
    let passed = worst_skew <= 1e-12 && worst_gap >= -1e-12;
    let detail = format!(
        "100 random fields: max |<Sx,x>|/||x||_M^2 = {worst_skew:.2e} (tol 1e-12), \
         min <Hx,x> - sigma_min ||x||_M^2 = {worst_gap:.2e} (tol -1e-12)"
    );
    verdict(3, passed, &detail);
}

fn final_eocs(rows: &[StudyRow]) -> (f64, f64, f64) {
    let last = rows.last().unwrap();
    (
        last.eoc_plus.expect("final row has eoc"),
        last.eoc_big.expect("final row has eoc"),
        last.eoc_minus.expect("final row has eoc"),
    )
}

#[test]
fn acceptance_04_spatial_convergence_orders() {
    let cfg = StudyConfig::spatial();
    let report = run_study(&cfg).unwrap();
    let (ep, eb, em) = final_eocs(&report.rows);
    let passed = (1.7..=2.4).contains(&ep)
        && (0.85..=1.25).contains(&eb)
        && (0.85..=1.25).contains(&em);
    let detail = format!(
        "divisions 8..64, N=3, N_max=2, tau=1e-4: final-row eoc(e+) = {ep:.2} in [1.7, 2.4], \
         eoc(E+) = {eb:.2} in [0.85, 1.25], eoc(e-) = {em:.2} in [0.85, 1.25]"
    );
    verdict(4, passed, &detail);
}

#[test]
fn acceptance_05_angular_convergence_orders() {
    let cfg = StudyConfig::angular();
    let report = run_study(&cfg).unwrap();
    let mut eocs = Vec::new();
    for row in &report.rows[1..] {
        eocs.push(row.eoc_plus.unwrap());
        eocs.push(row.eoc_big.unwrap());
        eocs.push(row.eoc_minus.unwrap());
    }
    let passed = eocs.iter().all(|e| (0.6..=1.4).contains(e));
    let detail = format!(
        "N in {{1,3,5,7}}, N_max=40, divisions=64, tau=1e-3: all eocs {:?} in [0.6, 1.4]",
        eocs.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>()
    );
    verdict(5, passed, &detail);
}

#[test]
fn acceptance_06_temporal_convergence_orders() {
    let cfg = StudyConfig::temporal();
    let report = run_study(&cfg).unwrap();
    let column = |f: fn(&StudyRow) -> Option<f64>| {
        report.rows[1..]
            .iter()
            .map(|r| format!("{:.2}", f(r).unwrap()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let eocs: Vec<f64> = report.rows[1..]
        .iter()
        .flat_map(|r| [r.eoc_plus.unwrap(), r.eoc_big.unwrap(), r.eoc_minus.unwrap()])
        .collect();
    let passed = eocs.iter().all(|e| (0.75..=1.1).contains(e));
    let last = report.rows.last().unwrap();
    let mut detail = format!(
        "tau in {{1/2..1/16}}, N=3, N_max=2, divisions=64, band [0.75, 1.1]: \
         eoc(e+) = [{}], eoc(E+) = [{}], eoc(e-) = [{}]",
        column(|r| r.eoc_plus),
        column(|r| r.eoc_big),
        column(|r| r.eoc_minus),
    );
    if !passed {
        detail.push_str(&format!(
            "; at tau=1/16 the errors E+ = {:.2e} and e- = {:.2e} sit on the \
             divisions=64 spatial floor (~1.7e-2 / ~4.4e-3, the same values the \
             spatial study reaches at divisions=64), so first-order decay in tau \
             is no longer visible there; a mesh near divisions=256 keeps all \
             three columns in band",
            last.e_big, last.e_minus
        ));
    }
    verdict(6, passed, &detail);
}

/// Companion to the temporal criterion: on a mesh fine enough that the
/// spatial floor stays below the smallest tau-error, all three error
/// columns show first order in tau. Ignored by default (about six
/// minutes at 1.7M unknowns); run with `cargo test -- --ignored`.
#[test]
#[ignore = "six-minute run at divisions=256"]
fn temporal_orders_recover_on_a_fine_mesh() {
    let cfg = StudyConfig { divisions: 256, ..StudyConfig::temporal() };
    let report = run_study(&cfg).unwrap();
    for row in &report.rows[1..] {
        for eoc in [row.eoc_plus.unwrap(), row.eoc_big.unwrap(), row.eoc_minus.unwrap()] {
            assert!(
                (0.75..=1.1).contains(&eoc),
                "eoc {eoc:.2} out of band at 1/tau = {}",
                row.param
            );
        }
    }
}

#[test]
fn acceptance_07_exponential_stability() {
    // Constant source, zero start: the distance to the discrete steady
    // state contracts at least as fast as e^{-t} when sigma_a = sigma_s = 1.
    let mut rng = ChaCha8Rng::seed_from_u64(20240707);
    let sys = system(3, unit_square_mesh(16), 1.0, 1.0);
    let solver = SolverConfig { rel_tolerance: 1e-12, ..SolverConfig::default() };
    let load = random_field(&sys, &mut rng);
    let (steady, _) = solve_stationary(&sys, &load, &solver).unwrap();
    let steady_sq = sys.mass_dot(&steady, &steady);

    let transient = TransientConfig { tau: 0.05, t_end: 5.0, record_every: 1 };
    let result = run_transient(
        &sys,
        &transient,
        &solver,
        |_| load.clone(),
        sys.zero_field(),
        Some(&steady),
        |_, _, _| {},
    )
    .unwrap();

    let mut worst = f64::NEG_INFINITY;
    for row in &result.trace.rows {
        let bound = (-row.t).exp() * steady_sq + 1e-10;
        worst = worst.max(row.dist_to_steady.unwrap() - bound);
    }
    let passed = worst <= 0.0;
    let detail = format!(
        "sigma_a = sigma_s = 1, tau = 0.05, t in [0,5]: max violation of \
         ||phi^n - steady||^2 <= e^(-t)||steady||^2 + 1e-10 is {worst:.2e}"
    );
    verdict(7, passed, &detail);
}

#[test]
fn acceptance_08_discrete_energy_estimate() {
    // Manufactured run with sigma_min = 1 and tau = 0.25 <= 1/(2 sigma_min):
    // ||phi^n||^2 <= e^{-s t_n} ||phi^0||^2
    //             + (2/s) sum_k tau e^{-s(t_n - t_k)} ||q(t_k)||^2 + 1e-9.
    let sigma_min = 1.0;
    let tau = 0.25;
    let sys = system(3, unit_square_mesh(8), 1.0, 1.0);
    let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
    let transient = TransientConfig { tau, t_end: 3.0, record_every: 1 };
    let solver = SolverConfig { rel_tolerance: 1e-12, ..SolverConfig::default() };
    let result = run_transient(
        &sys,
        &transient,
        &solver,
        |t| asm.load_at(t),
        sys.zero_field(),
        None,
        |_, _, _| {},
    )
    .unwrap();

    let decay = (-sigma_min * tau).exp();
    let mut source_sum = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for row in result.trace.rows.iter().skip(1) {
        source_sum = decay * source_sum + tau * asm.source_norm_sq(row.t);
        let bound = (2.0 / sigma_min) * source_sum + 1e-9;
        worst = worst.max(row.energy - bound);
    }
    let passed = worst <= 0.0;
    let detail = format!(
        "manufactured run, sigma_min = 1, tau = 0.25, 12 steps: max violation \
         of the energy estimate (slack 1e-9) is {worst:.2e}"
    );
    verdict(8, passed, &detail);
}

#[test]
fn acceptance_09_strong_form_source_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240909);
    let sys = system(3, unit_square_mesh(2), 0.01, 1.0);
    let asm = SourceAssembler::new(&sys, ManufacturedSolution::new(2), true).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let r = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let rho = (1.0 - z * z).sqrt();
        let s = [rho * phi.cos(), rho * phi.sin(), z];
        let t = rng.gen_range(0.0..3.0);
        let lhs = asm.analytic_source(r, s, t).unwrap();
        let rhs = asm.eval_source(r, s, t).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    let passed = worst < 1e-10;
    let detail = format!(
        "50 random (r, s, t) samples: max |analytic q - reconstructed q| = {worst:.2e} < 1e-10"
    );
    verdict(9, passed, &detail);
}

#[test]
fn acceptance_10_eoc_formula_reproduces_published_values() {
    let cases = [
        ([6.06e-2, 2.41e-2], [1.0, 3.0], 0.84),
        ([1.94e-2, 3.77e-3], [8.0, 16.0], 2.36),
        ([3.81e-2, 2.10e-2], [2.0, 4.0], 0.86),
    ];
    let mut results = Vec::new();
    let mut passed = true;
    for (errors, params, want) in cases {
        let got = compute_eoc(&errors, &params)[1].unwrap();
        passed &= (got - want).abs() <= 0.01;
        results.push(format!("{got:.2} (expected {want})"));
    }
    let detail = format!("published-table eocs reproduced to ±0.01: {}", results.join(", "));
    verdict(10, passed, &detail);
}

// Criterion 5 needs the study kinds to agree with the harness defaults;
// assert that here so a default drift cannot silently change the suite.
#[test]
fn study_defaults_are_the_acceptance_parameters() {
    let angular = StudyConfig::angular();
    assert_eq!(angular.kind, StudyKind::Angular);
    assert_eq!(angular.sweep, vec![1.0, 3.0, 5.0, 7.0]);
    assert_eq!((angular.n_max, angular.divisions), (40, 64));
    assert_eq!(angular.tau, 1e-3);
    let spatial = StudyConfig::spatial();
    assert_eq!(spatial.sweep, vec![8.0, 16.0, 32.0, 64.0]);
    assert_eq!((spatial.n_max, spatial.n), (2, 3));
    assert_eq!(spatial.tau, 1e-4);
    let temporal = StudyConfig::temporal();
    assert_eq!(temporal.sweep, vec![0.5, 0.25, 0.125, 0.0625]);
    assert_eq!((temporal.n_max, temporal.n, temporal.divisions), (2, 3, 64));
}
