//! Replica-symmetric order-parameter theory.
//!
//! The free energy depends on the teacher overlap `m` and the replica overlap
//! `q`. On the Bayes-optimal line `g = h` the saddle point satisfies `q = m`
//! and reduces to a single scalar equation.

mod branch;
mod roots;
mod saddle;
mod solve;

pub use branch::{
    learning_curve_exponent, least_squares, trace_branch, Branch, BranchPoint, LearningCurveFit,
    SweepDirection, SweepGrid, Termination, TerminationKind, JUMP_THRESHOLD,
};
pub use roots::{
    find_all_roots, spinodal_scan, spinodal_scan_with, RootScan, SpinodalReport, SpinodalScanConfig,
};
pub use saddle::{bayes_integrals, free_energy, residual_pair, rhs_single, single_gap};
pub use solve::{solve_coupled, solve_fixed_point, Solution, SolverConfig};

use libm::{acos, asin, sqrt};
use thiserror::Error;

use crate::specfun::SpecfunError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplicaError {
    #[error("invalid setup: {0}")]
    InvalidSetup(&'static str),
    #[error("invalid order parameters: {0}")]
    InvalidOrder(&'static str),
    #[error("degenerate input: q - m^2 = {gap:e} with g != h")]
    Degenerate { gap: f64 },
    #[error(transparent)]
    Integration(#[from] SpecfunError),
    #[error("no convergence after {iterations} iterations (q = {q}, m = {m}, residual = {residual:e})")]
    NoConvergence { iterations: usize, q: f64, m: f64, residual: f64 },
    #[error("setup is not Bayes-optimal (g = {g}, h = {h})")]
    NotBayesOptimal { g: f64, h: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// The four control parameters of one theory point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningSetup {
    pub g: f64,
    pub h: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LearningSetup {
    pub fn new(g: f64, h: f64, alpha: f64, beta: f64) -> Result<Self, ReplicaError> {
        let s = Self { g, h, alpha, beta };
        s.validate()?;
        Ok(s)
    }

    /// Bayes-optimal setup with `g = h`.
    pub fn bayes(h: f64, alpha: f64, beta: f64) -> Result<Self, ReplicaError> {
        Self::new(h, h, alpha, beta)
    }

    pub fn validate(&self) -> Result<(), ReplicaError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.g) || !ok(self.h) {
            return Err(ReplicaError::InvalidSetup("margins must be finite and non-negative"));
        }
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(ReplicaError::InvalidSetup("alpha and beta must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn bayes_optimal(&self) -> bool {
        self.g == self.h
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }
}

/// Replica-symmetric order parameters with the derived generalization error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParams {
    pub q: f64,
    pub m: f64,
    pub epsilon: f64,
}

impl OrderParams {
    /// Validates `m^2 <= q < 1`; `epsilon` is computed from `q`.
    pub fn new(q: f64, m: f64) -> Result<Self, ReplicaError> {
        if !(q.is_finite() && m.is_finite()) {
            return Err(ReplicaError::InvalidOrder("non-finite overlap"));
        }
        if !(0.0..1.0).contains(&q) {
            return Err(ReplicaError::InvalidOrder("q must lie in [0, 1)"));
        }
        if m * m > q * (1.0 + 1e-12) {
            return Err(ReplicaError::InvalidOrder("m^2 must not exceed q"));
        }
        Ok(Self { q, m, epsilon: generalization_error(q)? })
    }

    /// A point on the Nishimori line, `m = q`.
    pub fn nishimori(q: f64) -> Result<Self, ReplicaError> {
        Self::new(q, q)
    }
}

/// Residuals of the two saddle-point equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleResidual {
    pub r_m: f64,
    pub r_q: f64,
}

impl SaddleResidual {
    pub fn norm_inf(&self) -> f64 {
        self.r_m.abs().max(self.r_q.abs())
    }
}

/// `arccos(overlap) / pi`.
pub fn generalization_error(overlap: f64) -> Result<f64, ReplicaError> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(ReplicaError::InvalidArgument("overlap must lie in [0, 1]"));
    }
    // 2 asin(sqrt((1-q)/2)) keeps relative accuracy as q -> 1
    if overlap > 0.5 {
        Ok(2.0 * asin(sqrt(0.5 * (1.0 - overlap))) / core::f64::consts::PI)
    } else {
        Ok(acos(overlap) / core::f64::consts::PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalization_error_values() {
        assert_eq!(generalization_error(0.0).unwrap(), 0.5);
        assert_eq!(generalization_error(1.0).unwrap(), 0.0);
        assert!((generalization_error(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(generalization_error(-0.1).is_err());
        assert!(generalization_error(1.1).is_err());
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let a = generalization_error(q).unwrap();
            let b = acos(q) / core::f64::consts::PI;
            assert!((a - b).abs() < 1e-14, "q={q}");
        }
    }

    #[test]
    fn setup_validation() {
        assert!(LearningSetup::new(0.1, 0.1, 1.0, 2.0).unwrap().bayes_optimal());
        assert!(!LearningSetup::new(0.1, 0.2, 1.0, 2.0).unwrap().bayes_optimal());
        assert!(LearningSetup::new(-0.1, 0.1, 1.0, 2.0).is_err());
        assert!(LearningSetup::new(0.1, 0.1, f64::NAN, 2.0).is_err());
        assert!(LearningSetup::new(0.1, 0.1, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn order_params_invariants() {
        assert!(OrderParams::new(0.5, 0.7).is_ok());
        assert!(OrderParams::new(0.5, 0.8).is_err());
        assert!(OrderParams::new(1.0, 0.5).is_err());
        assert!(OrderParams::new(-0.1, 0.0).is_err());
        let p = OrderParams::nishimori(0.5).unwrap();
        assert!((p.epsilon - 1.0 / 3.0).abs() < 1e-15);
    }
}
