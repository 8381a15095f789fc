//! Transient driver: implicit Euler time stepping with per-step diagnostics,
//! plus the elliptic projection used for initial data.
//!
//! Each step solves (M/τ + B) φⁿ = M/τ·φⁿ⁻¹ + l(tⁿ) with t^n = nτ. The
//! Schur solver is constructed once (the shift 1/τ is fixed) and each step
//! warm-starts from the previous state.

use crate::linear_solvers::{solve_stationary, SchurSolver, SolverConfig};
use crate::transport_operators::{ParityField, TransportSystem};
use crate::{Result, TransportError};
use std::io::Write;

/// Time-stepping controls.
#[derive(Debug, Clone)]
pub struct TransientConfig {
    pub tau: f64,
    pub t_end: f64,
    /// Step stride for energy-trace rows and stored snapshots. Step 0 and
    /// the final step are always recorded.
    pub record_every: usize,
}

impl TransientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(TransportError::Config(format!("time step {} must be positive", self.tau)));
        }
        if !(self.t_end >= self.tau) {
            return Err(TransportError::Config(format!(
                "final time {} must be at least one step {}",
                self.t_end, self.tau
            )));
        }
        if self.record_every == 0 {
            return Err(TransportError::Config("record_every must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Number of steps, ⌈t_end/τ⌉ with a guard against roundoff in the ratio.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.tau) - 1e-9).ceil().max(1.0) as usize
    }

    /// The energy-estimate derivation assumes τ ≤ 1/(2σ̲_a); larger steps
    /// are legal but void that particular bound.
    pub fn step_restriction_warning(&self, sigma_a_min: f64) -> Option<String> {
        let limit = 1.0 / (2.0 * sigma_a_min);
        (self.tau > limit).then(|| {
            format!(
                "time step {} exceeds 1/(2 sigma_a_min) = {}; energy-estimate bound not guaranteed",
                self.tau, limit
            )
        })
    }
}

/// One recorded diagnostic row.
#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub step: usize,
    pub t: f64,
    /// Squared L²(D) norm of the state.
    pub energy: f64,
    /// Squared L²(D) distance to the steady reference, when one was given.
    pub dist_to_steady: Option<f64>,
}

/// Energy diagnostics over the recorded steps.
#[derive(Debug, Clone, Default)]
pub struct EnergyTrace {
    pub rows: Vec<EnergyRow>,
}

impl EnergyTrace {
    /// CSV with full-precision values; the steady column is empty when no
    /// reference was supplied.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "step,t,energy,dist_to_steady")?;
        for row in &self.rows {
            match row.dist_to_steady {
                Some(d) => {
                    writeln!(out, "{},{:.17e},{:.17e},{:.17e}", row.step, row.t, row.energy, d)?
                }
                None => writeln!(out, "{},{:.17e},{:.17e},", row.step, row.t, row.energy)?,
            }
        }
        Ok(())
    }
}

/// Everything a transient run produces.
#[derive(Debug)]
pub struct TransientResult {
    pub final_state: ParityField,
    pub trace: EnergyTrace,
    /// (step, state) at recorded steps.
    pub snapshots: Vec<(usize, ParityField)>,
    pub warnings: Vec<String>,
    pub total_cg_iterations: usize,
}

/// Runs the implicit Euler loop. `load_at(t)` supplies the load vector
/// l(t; ·) paired against every basis function; `observer` is called with
/// (step, t, state) for step 0 and after every solve, enabling streaming
/// accumulation of error measures without storing the history.
pub fn run_transient<L, O>(
    sys: &TransportSystem,
    cfg: &TransientConfig,
    solver_cfg: &SolverConfig,
    mut load_at: L,
    initial: ParityField,
    steady: Option<&ParityField>,
    mut observer: O,
) -> Result<TransientResult>
where
    L: FnMut(f64) -> ParityField,
    O: FnMut(usize, f64, &ParityField),
{
    cfg.validate()?;
    let mut warnings = Vec::new();
    if let Some(w) = cfg.step_restriction_warning(sys.collision().sigma_a_min()) {
        warnings.push(w);
    }
    let steps = cfg.n_steps();
    let solver = SchurSolver::new(sys, 1.0 / cfg.tau, solver_cfg.clone());

    let mut trace = EnergyTrace::default();
    let mut snapshots = Vec::new();
    let record = |n: usize, t: f64, state: &ParityField, trace: &mut EnergyTrace| {
        let energy = sys.mass_dot(state, state);
        let dist = steady.map(|s| {
            let mut d = state.clone();
            d.axpy(-1.0, s);
            sys.mass_dot(&d, &d)
        });
        trace.rows.push(EnergyRow { step: n, t, energy, dist_to_steady: dist });
    };

    observer(0, 0.0, &initial);
    record(0, 0.0, &initial, &mut trace);
    snapshots.push((0, initial.clone()));

    let mut state = initial;
    let mut total_cg_iterations = 0;
    for n in 1..=steps {
        let t = n as f64 * cfg.tau;
        let mut rhs = sys.apply_mass(&state);
        rhs.scale(1.0 / cfg.tau);
        rhs.axpy(1.0, &load_at(t));
        let (next, stats) = solver.solve(&rhs, Some(&state)).map_err(|e| {
            TransportError::StepFailed { step: n, t, source: Box::new(e) }
        })?;
        total_cg_iterations += stats.iterations;
        state = next;
        observer(n, t, &state);
        if n % cfg.record_every == 0 || n == steps {
            record(n, t, &state, &mut trace);
            snapshots.push((n, state.clone()));
        }
    }

    Ok(TransientResult { final_state: state, trace, snapshots, warnings, total_cg_iterations })
}

/// Elliptic projection Π_h: solves B(Π_h φ; ψ) = B(φ; ψ) for all discrete ψ.
/// The argument is the pairing vector ψ ↦ B(φ; ψ) of the continuous target;
/// for a target already discrete this is `apply_b`, and for smooth targets
/// whose traces vanish on the boundary it equals the L² pairing of the
/// stationary residual s·∇φ + Cφ.
pub fn elliptic_projection(
    sys: &TransportSystem,
    target_pairing: &ParityField,
    cfg: &SolverConfig,
) -> Result<ParityField> {
    let (proj, _) = solve_stationary(sys, target_pairing, cfg)?;
    Ok(proj)
}
