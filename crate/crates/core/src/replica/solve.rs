//! Damped fixed-point iteration of the saddle-point equations.

use libm::sqrt;

use super::saddle::{conjugates, rhs_single};
use super::{LearningSetup, OrderParams, ReplicaError};
use crate::specfun::Integrator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Upper clamp on `q` during iteration.
    pub q_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iter: 5000, q_max: 1.0 - 1e-12 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ReplicaError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(ReplicaError::InvalidArgument("damping must lie in (0, 1]"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(ReplicaError::InvalidArgument("tol and max_iter must be positive"));
        }
        if !(self.q_max > 0.0 && self.q_max < 1.0) {
            return Err(ReplicaError::InvalidArgument("q_max must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A converged saddle point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub params: OrderParams,
    pub iterations: usize,
    /// Fixed-point gap at the returned point.
    pub residual: f64,
}

/// Solves the saddle-point equations from `q0`.
///
/// Bayes-optimal setups iterate the single equation on `q` with `m = q`.
/// Other setups iterate the coupled map from `(q0, q0)`.
pub fn solve_fixed_point(
    setup: &LearningSetup,
    q0: f64,
    integ: &Integrator,
    cfg: &SolverConfig,
) -> Result<Solution, ReplicaError> {
    setup.validate()?;
    cfg.validate()?;
    if !(0.0..1.0).contains(&q0) {
        return Err(ReplicaError::InvalidArgument("q0 must lie in [0, 1)"));
    }
    if !setup.bayes_optimal() {
        return solve_coupled(setup, q0, q0, integ, cfg);
    }
    let d = cfg.damping;
    let mut q = q0.min(cfg.q_max);
    let mut gap = f64::INFINITY;
    for it in 0..cfg.max_iter {
        let t = rhs_single(q, setup, integ)?;
        gap = (t - q).abs();
        if gap < cfg.tol {
            return Ok(Solution { params: OrderParams::nishimori(q)?, iterations: it, residual: gap });
        }
        q = ((1.0 - d) * q + d * t).clamp(0.0, cfg.q_max);
    }
    Err(ReplicaError::NoConvergence { iterations: cfg.max_iter, q, m: q, residual: gap })
}

/// `(q, m)` such that `m_hat = m/(1-q)` and `q_hat = (q-m^2)/(1-q)^2`.
fn coupled_map(m_hat: f64, q_hat: f64) -> (f64, f64) {
    let k = q_hat + m_hat * m_hat;
    let s = if k < 1e-12 {
        // series of (sqrt(1+4k)-1)/(2k)
        1.0 - k + 2.0 * k * k
    } else {
        (sqrt(1.0 + 4.0 * k) - 1.0) / (2.0 * k)
    };
    (1.0 - s, m_hat * s)
}

/// Smallest `q` visited by the coupled iteration; keeps `q - m^2` away from
/// the degenerate limit.
const Q_FLOOR: f64 = 1e-11;

/// Damped iteration of the coupled `(q, m)` map with the general integrals,
/// even on the Nishimori line.
pub fn solve_coupled(
    setup: &LearningSetup,
    q0: f64,
    m0: f64,
    integ: &Integrator,
    cfg: &SolverConfig,
) -> Result<Solution, ReplicaError> {
    setup.validate()?;
    cfg.validate()?;
    let mut p = OrderParams::new(q0.min(cfg.q_max), m0)?;
    let d = cfg.damping;
    let mut gap = f64::INFINITY;
    for it in 0..cfg.max_iter {
        let q = p.q.max(Q_FLOOR);
        let m_lim = sqrt(q - 0.5 * Q_FLOOR);
        let m = p.m.clamp(-m_lim, m_lim);
        let (mh, qh) = conjugates(q, m, setup, integ, false)?;
        let (tq, tm) = coupled_map(mh, qh);
        gap = (tq - q).abs().max((tm - m).abs());
        if gap < cfg.tol {
            return Ok(Solution { params: OrderParams::new(q, m)?, iterations: it, residual: gap });
        }
        let nq = ((1.0 - d) * q + d * tq).clamp(0.0, cfg.q_max);
        let nm = (1.0 - d) * m + d * tm;
        let nm = nm.clamp(-sqrt(nq), sqrt(nq));
        p = OrderParams::new(nq, nm)?;
    }
    Err(ReplicaError::NoConvergence { iterations: cfg.max_iter, q: p.q, m: p.m, residual: gap })
}
