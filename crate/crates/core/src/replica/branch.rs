//! Continuation of saddle-point solutions over `beta` and the asymptotic
//! learning curve.

use alloc::vec::Vec;
use libm::{log, pow};

use super::roots::RootScan;
use super::saddle::free_energy;
use super::solve::{solve_fixed_point, SolverConfig};
use super::{generalization_error, LearningSetup, ReplicaError};
use crate::specfun::Integrator;

/// Jump in `q` between consecutive sweep points that marks a branch end.
pub const JUMP_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Ascending,
    Descending,
}

impl SweepDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ascending => "ascending",
            Self::Descending => "descending",
        }
    }

    /// Initial `q` for the first point of a sweep, and the re-seed value
    /// used after the opposite sweep ends.
    fn seed(self) -> f64 {
        match self {
            Self::Ascending => 1e-3,
            Self::Descending => 1.0 - 1e-3,
        }
    }

    fn opposite_seed(self) -> f64 {
        match self {
            Self::Ascending => Self::Descending.seed(),
            Self::Descending => Self::Ascending.seed(),
        }
    }
}

/// Spacing of the sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepGrid {
    Linear,
    Geometric,
}

impl SweepGrid {
    pub fn points(self, range: (f64, f64), n: usize) -> Result<Vec<f64>, ReplicaError> {
        let (lo, hi) = range;
        if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() || lo < 0.0 {
            return Err(ReplicaError::InvalidArgument("sweep needs n >= 2 and 0 <= lo < hi"));
        }
        let t = |i: usize| i as f64 / (n - 1) as f64;
        Ok(match self {
            Self::Linear => (0..n).map(|i| lo + (hi - lo) * t(i)).collect(),
            Self::Geometric => {
                if lo <= 0.0 {
                    return Err(ReplicaError::InvalidArgument("geometric sweep needs lo > 0"));
                }
                (0..n).map(|i| lo * pow(hi / lo, t(i))).collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub beta: f64,
    pub q: f64,
    pub m: f64,
    pub epsilon: f64,
    pub free_energy: f64,
    /// Global maximizer of `-F` among the coexisting roots at this `beta`.
    pub stable: bool,
    /// Index of the continuous segment this point belongs to.
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminationKind {
    /// The warm-started solve converged to a distant solution.
    Jump,
    /// The solver failed to converge.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    pub beta: f64,
    pub kind: TerminationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub sweep_direction: SweepDirection,
    pub setup: LearningSetup,
    pub terminations: Vec<Termination>,
}

/// Sweeps `beta` over `grid` in `direction`, warm-starting each solve from
/// the previous solution.
///
/// A failed solve ends the current segment and the next point is seeded from
/// the opposite extreme. For Bayes-optimal setups `stable` compares `-F`
/// against every root from `scan`; otherwise every point is labelled stable.
pub fn trace_branch(
    setup_base: &LearningSetup,
    betas: &[f64],
    direction: SweepDirection,
    integ: &Integrator,
    cfg: &SolverConfig,
    scan: Option<&RootScan>,
) -> Result<Branch, ReplicaError> {
    setup_base.validate()?;
    if betas.len() < 2 || betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ReplicaError::InvalidArgument("beta grid must be strictly ascending with n >= 2"));
    }
    let order: Vec<f64> = match direction {
        SweepDirection::Ascending => betas.to_vec(),
        SweepDirection::Descending => betas.iter().rev().copied().collect(),
    };
    let mut points = Vec::with_capacity(order.len());
    let mut terminations = Vec::new();
    let mut seed = direction.seed();
    let mut last_q: Option<f64> = None;
    let mut segment = 0;
    for &beta in &order {
        let setup = setup_base.with_beta(beta);
        match solve_fixed_point(&setup, seed, integ, cfg) {
            Ok(sol) => {
                let p = sol.params;
                if let Some(prev) = last_q {
                    if (p.q - prev).abs() > JUMP_THRESHOLD {
                        terminations.push(Termination { beta, kind: TerminationKind::Jump });
                        segment += 1;
                    }
                }
                let f = free_energy(&p, &setup, integ)?;
                let stable = match scan {
                    Some(scan) if setup.bayes_optimal() => is_global_maximizer(p.q, f, &setup, integ, scan)?,
                    _ => true,
                };
                points.push(BranchPoint {
                    beta,
                    q: p.q,
                    m: p.m,
                    epsilon: p.epsilon,
                    free_energy: f,
                    stable,
                    segment,
                });
                seed = p.q;
                last_q = Some(p.q);
            }
            Err(ReplicaError::NoConvergence { .. }) => {
                terminations.push(Termination { beta, kind: TerminationKind::Failed });
                segment += 1;
                seed = direction.opposite_seed();
                last_q = None;
            }
            Err(e) => return Err(e),
        }
    }
    if direction == SweepDirection::Descending {
        points.reverse();
    }
    Ok(Branch { points, sweep_direction: direction, setup: *setup_base, terminations })
}

fn is_global_maximizer(
    q: f64,
    f: f64,
    setup: &LearningSetup,
    integ: &Integrator,
    scan: &RootScan,
) -> Result<bool, ReplicaError> {
    let roots = scan.roots(setup, integ)?;
    let mut best: Option<(f64, f64)> = None;
    let mut nearest: Option<(f64, f64)> = None;
    for r in &roots {
        let fr = free_energy(r, setup, integ)?;
        if best.map_or(true, |(_, fb)| fr > fb) {
            best = Some((r.q, fr));
        }
        let d = (r.q - q).abs();
        if nearest.map_or(true, |(_, dn)| d < dn) {
            nearest = Some((r.q, d));
        }
    }
    Ok(match (best, nearest) {
        (Some((qb, fb)), Some((qn, _))) => qn == qb || f >= fb,
        _ => true,
    })
}

/// Log-log fit of the low-error branch.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurveFit {
    /// Slope of `ln epsilon` against `ln beta`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `ln epsilon`.
    pub rms_residual: f64,
    /// Slope of `ln(1 - q)` against `ln beta`.
    pub slope_one_minus_q: f64,
    /// `(beta, q, epsilon)` per sample.
    pub points: Vec<(f64, f64, f64)>,
}

/// Fits `ln epsilon` against `ln beta` on the highest-`q` root at each sample.
pub fn learning_curve_exponent(
    setup_base: &LearningSetup,
    beta_samples: &[f64],
    integ: &Integrator,
    scan: &RootScan,
) -> Result<LearningCurveFit, ReplicaError> {
    setup_base.validate()?;
    if beta_samples.len() < 2 || beta_samples.iter().any(|b| !(*b > 0.0)) {
        return Err(ReplicaError::InvalidArgument("need at least two positive beta samples"));
    }
    let mut points = Vec::with_capacity(beta_samples.len());
    for &beta in beta_samples {
        let setup = setup_base.with_beta(beta);
        let roots = scan.roots(&setup, integ)?;
        let top = roots
            .last()
            .copied()
            .ok_or(ReplicaError::InvalidArgument("no root found"))?;
        points.push((beta, top.q, generalization_error(top.q)?));
    }
    let xs: Vec<f64> = points.iter().map(|p| log(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| log(p.2)).collect();
    let ss: Vec<f64> = points.iter().map(|p| log(1.0 - p.1)).collect();
    let (slope, intercept, rms_residual) = least_squares(&xs, &ys);
    let (slope_one_minus_q, _, _) = least_squares(&xs, &ss);
    Ok(LearningCurveFit { slope, intercept, rms_residual, slope_one_minus_q, points })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, rms)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b) * (y - a * x - b)).sum();
    (a, b, libm::sqrt(rss / n))
}
