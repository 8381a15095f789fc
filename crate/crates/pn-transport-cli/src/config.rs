//! Run configuration: one flat JSON document. Every key is optional;
//! command-line flags override file values, and values left unset fall back
//! to the published study defaults of the owning subcommand.

use pn_transport::angular_basis::{collision_spectrum, isotropic_collision, CollisionSpectrum};
use pn_transport::benchmark_harness::{StudyConfig, StudyKind};
use pn_transport::linear_solvers::SolverConfig;
use pn_transport::spatial_mesh::{unit_square_mesh, TriMesh};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Absorption coefficient; must be positive.
    pub sigma_a: f64,
    /// Scattering coefficient of the isotropic kernel.
    pub sigma_s: f64,
    /// Legendre moments of an anisotropic scattering kernel; replaces the
    /// isotropic kernel when set and requires `sigma_t`.
    pub kernel_moments: Option<Vec<f64>>,
    pub sigma_t: Option<f64>,
    /// Angular truncation order, odd.
    pub n: Option<usize>,
    /// Highest degree carried by the manufactured solution.
    pub n_max: Option<usize>,
    /// Structured-mesh divisions: the sweep of a spatial study; single-mesh
    /// commands use the last (finest) entry.
    pub divisions: Option<Vec<usize>>,
    /// Plain-text mesh file for single-mesh commands; wins over `divisions`.
    pub mesh_file: Option<PathBuf>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub tau: Option<f64>,
    pub t_end: Option<f64>,
    /// Step stride of energy-trace rows.
    pub record_every: usize,
    pub out_dir: PathBuf,
    /// Worker threads for study sweep points.
    pub jobs: usize,
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma_a: 0.01,
            sigma_s: 1.0,
            kernel_moments: None,
            sigma_t: None,
            n: None,
            n_max: None,
            divisions: None,
            mesh_file: None,
            tolerance: 1e-10,
            max_iterations: 10000,
            tau: None,
            t_end: None,
            record_every: 1,
            out_dir: PathBuf::from("out"),
            jobs: 1,
            verbose: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma_a > 0.0) || !self.sigma_a.is_finite() {
            return Err(format!("sigma_a must be positive and finite, got {}", self.sigma_a));
        }
        if !(self.sigma_s >= 0.0) || !self.sigma_s.is_finite() {
            return Err(format!("sigma_s must be nonnegative and finite, got {}", self.sigma_s));
        }
        if self.kernel_moments.is_some() && self.sigma_t.is_none() {
            return Err("kernel_moments requires sigma_t".to_string());
        }
        if let Some(n) = self.n {
            if n == 0 || n % 2 == 0 {
                return Err(format!("N must be a positive odd integer, got {n}"));
            }
        }
        if let Some(divisions) = &self.divisions {
            if divisions.is_empty() || divisions.iter().any(|&d| d == 0) {
                return Err("divisions must be a non-empty list of positive integers".to_string());
            }
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(format!("tau must be positive and finite, got {tau}"));
            }
        }
        if let Some(t_end) = self.t_end {
            if !(t_end > 0.0) || !t_end.is_finite() {
                return Err(format!("t_end must be positive and finite, got {t_end}"));
            }
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(format!("tolerance must be positive and finite, got {}", self.tolerance));
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".to_string());
        }
        if self.record_every == 0 {
            return Err("record_every must be at least 1".to_string());
        }
        if self.jobs == 0 {
            return Err("jobs must be at least 1".to_string());
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(3)
    }

    pub fn n_max(&self) -> usize {
        self.n_max.unwrap_or(2)
    }

    pub fn single_divisions(&self) -> usize {
        self.divisions.as_ref().and_then(|d| d.last().copied()).unwrap_or(64)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(1e-3)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or(1.0)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            rel_tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..SolverConfig::default()
        }
    }

    pub fn collision(&self, n: usize) -> pn_transport::Result<CollisionSpectrum> {
        match (&self.kernel_moments, self.sigma_t) {
            (Some(moments), Some(sigma_t)) => {
                let mut padded = moments.clone();
                padded.resize(padded.len().max(n + 1), 0.0);
                collision_spectrum(&padded, sigma_t, n)
            }
            _ => isotropic_collision(self.sigma_a, self.sigma_s, n),
        }
    }

    pub fn mesh(&self) -> pn_transport::Result<TriMesh> {
        match &self.mesh_file {
            Some(path) => TriMesh::from_file(path),
            None => Ok(unit_square_mesh(self.single_divisions())),
        }
    }

    /// Study specification: per-kind published defaults, overridden by any
    /// explicitly set value. The temporal sweep itself is fixed.
    pub fn study(&self, kind: StudyKind) -> StudyConfig {
        let mut study = match kind {
            StudyKind::Angular => StudyConfig::angular(),
            StudyKind::Spatial => StudyConfig::spatial(),
            StudyKind::Temporal => StudyConfig::temporal(),
        };
        study.sigma_a = self.sigma_a;
        study.sigma_s = self.sigma_s;
        study.solver = self.solver();
        study.jobs = self.jobs;
        if let Some(n_max) = self.n_max {
            study.n_max = n_max;
        }
        if let Some(t_end) = self.t_end {
            study.t_end = t_end;
        }
        if kind != StudyKind::Angular {
            if let Some(n) = self.n {
                study.n = n;
            }
        }
        if kind != StudyKind::Temporal {
            if let Some(tau) = self.tau {
                study.tau = tau;
            }
        }
        if let Some(divisions) = &self.divisions {
            match kind {
                StudyKind::Spatial => study.sweep = divisions.iter().map(|&d| d as f64).collect(),
                _ => study.divisions = *divisions.last().expect("validated non-empty"),
            }
        }
        study
    }
}

/// Reads and validates a config file; the error message names the path.
pub fn load_file(path: &std::path::Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| format!("invalid config file {}: {e}", path.display()))?;
    cfg.validate().map_err(|e| format!("invalid config file {}: {e}", path.display()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.n = Some(5);
        cfg.divisions = Some(vec![8, 16]);
        cfg.kernel_moments = Some(vec![1.0, 0.3]);
        cfg.sigma_t = Some(1.2);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"sigma_b": 1.0}"#);
        assert!(err.is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig { sigma_a: 0.0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.sigma_a = 0.5;
        cfg.n = Some(4);
        assert!(cfg.validate().is_err());
        cfg.n = Some(3);
        cfg.divisions = Some(vec![]);
        assert!(cfg.validate().is_err());
        cfg.divisions = Some(vec![8]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn study_defaults_follow_the_published_tables() {
        let cfg = RunConfig::default();
        let angular = cfg.study(StudyKind::Angular);
        assert_eq!(angular.n_max, 40);
        assert_eq!(angular.divisions, 64);
        assert_eq!(angular.sweep, vec![1.0, 3.0, 5.0, 7.0]);
        let spatial = cfg.study(StudyKind::Spatial);
        assert_eq!(spatial.n_max, 2);
        assert_eq!(spatial.n, 3);
        assert_eq!(spatial.tau, 1e-4);
        let temporal = cfg.study(StudyKind::Temporal);
        assert_eq!(temporal.sweep.len(), 4);
    }

    #[test]
    fn explicit_values_override_study_defaults() {
        let mut cfg = RunConfig::default();
        cfg.divisions = Some(vec![2, 4]);
        cfg.tau = Some(0.1);
        cfg.t_end = Some(0.2);
        let spatial = cfg.study(StudyKind::Spatial);
        assert_eq!(spatial.sweep, vec![2.0, 4.0]);
        assert_eq!(spatial.tau, 0.1);
        assert_eq!(spatial.t_end, 0.2);
        let angular = cfg.study(StudyKind::Angular);
        assert_eq!(angular.divisions, 4);
        // The temporal sweep is fixed; tau does not override it.
        let temporal = cfg.study(StudyKind::Temporal);
        assert_eq!(temporal.sweep, vec![0.5, 0.25, 0.125, 0.0625]);
    }
}
