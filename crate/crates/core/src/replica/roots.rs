//! Exhaustive root scans of the Bayes-optimal equation and spinodal edges.

use alloc::vec::Vec;
use libm::{exp, log, pow};

use super::saddle::{bayes_integrals, single_gap};
use super::{LearningSetup, OrderParams, ReplicaError};
use crate::specfun::{h_tail, Integrator};

/// Upper end of the uniform part of the scan grid.
const Q_UNIFORM_MAX: f64 = 0.99;
/// Smallest `1 - q` reached by the logarithmic tail of the grid.
const S_MIN: f64 = 1e-12;

/// The Bayes-optimal integrals tabulated on a scan grid in `q` for one
/// margin. The gap `(alpha A + beta B)/H(h) - q` is linear in `(alpha, beta)`,
/// so one table serves every point of an `(alpha, beta)` sweep.
#[derive(Debug, Clone)]
pub struct RootScan {
    h: f64,
    q: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl RootScan {
    /// Uniform grid of `grid_size` points on `[0, 0.99]` followed by a
    /// logarithmic tail in `1 - q` down to `1e-12` with `grid_size / 2`
    /// points (at least 100).
    pub fn new(h: f64, integ: &Integrator, grid_size: usize) -> Result<Self, ReplicaError> {
        if grid_size < 100 {
            return Err(ReplicaError::InvalidArgument("grid_size must be at least 100"));
        }
        if !(h.is_finite() && h >= 0.0) {
            return Err(ReplicaError::InvalidSetup("margin must be finite and non-negative"));
        }
        let tail = (grid_size / 2).max(100);
        let mut q: Vec<f64> = (0..grid_size)
            .map(|i| Q_UNIFORM_MAX * i as f64 / (grid_size - 1) as f64)
            .collect();
        let (l0, l1) = (log(1.0 - Q_UNIFORM_MAX), log(S_MIN));
        q.extend((1..=tail).map(|j| 1.0 - exp(l0 + (l1 - l0) * j as f64 / tail as f64)));
        let mut a = Vec::with_capacity(q.len());
        let mut b = Vec::with_capacity(q.len());
        for &qi in &q {
            let (ai, bi) = bayes_integrals(qi, h, integ)?;
            a.push(ai);
            b.push(bi);
        }
        Ok(Self { h, q, a, b })
    }

    pub fn margin(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &[f64] {
        &self.q
    }

    fn gaps(&self, alpha: f64, beta: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let hh = h_tail(self.h);
        self.q
            .iter()
            .zip(self.a.iter().zip(&self.b))
            .map(move |(&q, (&a, &b))| (q, (alpha * a + beta * b) / hh - q))
    }

    /// Grid brackets `(lo, hi)` containing a root; an exact zero at a grid
    /// node is returned as `(q, q)`.
    pub fn brackets(&self, alpha: f64, beta: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for (q, f) in self.gaps(alpha, beta) {
            if f == 0.0 {
                out.push((q, q));
            } else if let Some((pq, pf)) = prev {
                if pf != 0.0 && (pf < 0.0) != (f < 0.0) {
                    out.push((pq, q));
                }
            }
            prev = Some((q, f));
        }
        out
    }

    /// Number of roots resolved by the grid.
    pub fn count(&self, alpha: f64, beta: f64) -> usize {
        self.brackets(alpha, beta).len()
    }

    /// All roots for `setup`, refined by bisection on the exact gap.
    pub fn roots(&self, setup: &LearningSetup, integ: &Integrator) -> Result<Vec<OrderParams>, ReplicaError> {
        if !setup.bayes_optimal() {
            return Err(ReplicaError::NotBayesOptimal { g: setup.g, h: setup.h });
        }
        if setup.h != self.h {
            return Err(ReplicaError::InvalidArgument("scan table built for a different margin"));
        }
        if setup.alpha == 0.0 && setup.beta == 0.0 {
            return Ok(alloc::vec![OrderParams::nishimori(0.0)?]);
        }
        let mut roots = Vec::new();
        for (lo, hi) in self.brackets(setup.alpha, setup.beta) {
            let q = if lo == hi { lo } else { bisect(setup, integ, lo, hi)? };
            roots.push(OrderParams::nishimori(q)?);
        }
        Ok(roots)
    }
}

fn bisect(setup: &LearningSetup, integ: &Integrator, mut lo: f64, mut hi: f64) -> Result<f64, ReplicaError> {
    let mut flo = single_gap(lo, setup, integ)?;
    let mut fhi = single_gap(hi, setup, integ)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = single_gap(mid, setup, integ)?;
        if f == 0.0 {
            return Ok(mid);
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = f;
        } else {
            hi = mid;
            fhi = f;
        }
    }
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// Every solution of the Bayes-optimal equation, ascending in `q`.
pub fn find_all_roots(
    setup: &LearningSetup,
    integ: &Integrator,
    grid_size: usize,
) -> Result<Vec<OrderParams>, ReplicaError> {
    setup.validate()?;
    if !setup.bayes_optimal() {
        return Err(ReplicaError::NotBayesOptimal { g: setup.g, h: setup.h });
    }
    RootScan::new(setup.h, integ, grid_size)?.roots(setup, integ)
}

/// Edges of the multi-solution window in `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinodalReport {
    pub beta_sp_lower: Option<f64>,
    pub beta_sp_upper: Option<f64>,
    /// Root count strictly inside the window (0 when no window exists).
    pub n_solutions_inside: usize,
    /// Root count just above the window, when the window closes in range.
    pub n_solutions_above: Option<usize>,
}

impl SpinodalReport {
    pub fn has_window(&self) -> bool {
        self.n_solutions_inside >= 3
    }
}

/// Scan resolution for [`spinodal_scan_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinodalScanConfig {
    pub grid_size: usize,
    pub coarse_points: usize,
    pub tolerance_beta: f64,
}

impl Default for SpinodalScanConfig {
    fn default() -> Self {
        Self { grid_size: 1500, coarse_points: 160, tolerance_beta: 1e-3 }
    }
}

/// Locates the multi-solution window of a Bayes-optimal setup within
/// `beta_range` (geometric scan) and bisects both edges to `tolerance_beta`.
///
/// The upper edge is reported only where the count returns to one; at
/// `alpha = 0` the trivial root `q = 0` survives above the window.
pub fn spinodal_scan(
    setup_base: &LearningSetup,
    beta_range: (f64, f64),
    integ: &Integrator,
    tolerance_beta: f64,
) -> Result<SpinodalReport, ReplicaError> {
    let cfg = SpinodalScanConfig { tolerance_beta, ..SpinodalScanConfig::default() };
    let scan = RootScan::new(setup_base.h, integ, cfg.grid_size)?;
    spinodal_scan_with(setup_base, beta_range, &scan, &cfg)
}

pub fn spinodal_scan_with(
    setup_base: &LearningSetup,
    beta_range: (f64, f64),
    scan: &RootScan,
    cfg: &SpinodalScanConfig,
) -> Result<SpinodalReport, ReplicaError> {
    setup_base.validate()?;
    if !setup_base.bayes_optimal() {
        return Err(ReplicaError::NotBayesOptimal { g: setup_base.g, h: setup_base.h });
    }
    let (b0, b1) = beta_range;
    if !(b0 > 0.0 && b1 > b0 && b1.is_finite()) {
        return Err(ReplicaError::InvalidArgument("beta_range must satisfy 0 < lo < hi"));
    }
    if !(cfg.tolerance_beta > 0.0) || cfg.coarse_points < 3 {
        return Err(ReplicaError::InvalidArgument("invalid spinodal scan resolution"));
    }
    let alpha = setup_base.alpha;
    let n = cfg.coarse_points;
    let betas: Vec<f64> = (0..n).map(|i| b0 * pow(b1 / b0, i as f64 / (n - 1) as f64)).collect();
    let counts: Vec<usize> = betas.iter().map(|&b| scan.count(alpha, b)).collect();
    let inside = |b: f64| scan.count(alpha, b) >= 3;
    let (Some(first), Some(last)) =
        (counts.iter().position(|&c| c >= 3), counts.iter().rposition(|&c| c >= 3))
    else {
        return Ok(SpinodalReport {
            beta_sp_lower: None,
            beta_sp_upper: None,
            n_solutions_inside: 0,
            n_solutions_above: None,
        });
    };
    let lower = (first > 0).then(|| edge(betas[first - 1], betas[first], &inside, cfg.tolerance_beta));
    let (upper, above) = if last + 1 < n {
        let above = counts[last + 1];
        let e = edge(betas[last + 1], betas[last], &inside, cfg.tolerance_beta);
        ((above == 1).then_some(e), Some(above))
    } else {
        (None, None)
    };
    Ok(SpinodalReport {
        beta_sp_lower: lower,
        beta_sp_upper: upper,
        n_solutions_inside: counts[first],
        n_solutions_above: above,
    })
}

/// Bisects between `out` (predicate false) and `inn` (predicate true).
fn edge(mut out: f64, mut inn: f64, inside: &dyn Fn(f64) -> bool, tol: f64) -> f64 {
    while (inn - out).abs() > tol {
        let mid = 0.5 * (out + inn);
        if inside(mid) {
            inn = mid;
        } else {
            out = mid;
        }
    }
    0.5 * (out + inn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::rhs_single;

    fn integ() -> Integrator {
        Integrator::default()
    }

    #[test]
    fn no_data_single_root() {
        let s = LearningSetup::bayes(0.05, 0.0, 0.0).unwrap();
        let r = find_all_roots(&s, &integ(), 200).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].q, 0.0);
    }

    #[test]
    fn three_roots_in_window_and_verified() {
        let s = LearningSetup::bayes(0.05, 1.0, 200.0).unwrap();
        let r = find_all_roots(&s, &integ(), 600).unwrap();
        assert_eq!(r.len(), 3, "{r:?}");
        for p in &r {
            let t = rhs_single(p.q, &s, &integ()).unwrap();
            assert!((t - p.q).abs() < 1e-10, "{p:?} {t}");
        }
        assert!(r.windows(2).all(|w| w[0].q < w[1].q));
    }

    #[test]
    fn unsupervised_keeps_trivial_root() {
        let s = LearningSetup::bayes(0.05, 0.0, 200.0).unwrap();
        let r = find_all_roots(&s, &integ(), 600).unwrap();
        assert_eq!(r[0].q, 0.0);
        assert_eq!(r.len(), 3, "{r:?}");
    }

    #[test]
    fn spinodal_window_at_margin_005() {
        let s = LearningSetup::bayes(0.05, 1.0, 0.0).unwrap();
        let rep = spinodal_scan(&s, (1.0, 1e5), &integ(), 1e-2).unwrap();
        let (lo, hi) = (rep.beta_sp_lower.unwrap(), rep.beta_sp_upper.unwrap());
        assert!(lo < hi);
        assert!(rep.n_solutions_inside >= 3);
        let scan = RootScan::new(0.05, &integ(), 1500).unwrap();
        assert_eq!(scan.count(1.0, (lo * hi).sqrt()), 3);
        assert_eq!(scan.count(1.0, 0.9 * lo), 1);
        assert_eq!(scan.count(1.0, 1.1 * hi), 1);
    }

    #[test]
    fn spinodal_unsupervised_has_no_upper_edge() {
        let s = LearningSetup::bayes(0.05, 0.0, 0.0).unwrap();
        let rep = spinodal_scan(&s, (1.0, 1e5), &integ(), 1e-2).unwrap();
        assert!(rep.beta_sp_lower.is_some());
        assert!(rep.beta_sp_upper.is_none());
        assert_eq!(rep.n_solutions_above, Some(2));
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = LearningSetup::new(0.05, 0.1, 1.0, 10.0).unwrap();
        assert!(find_all_roots(&s, &integ(), 200).is_err());
        let b = LearningSetup::bayes(0.05, 1.0, 10.0).unwrap();
        assert!(find_all_roots(&b, &integ(), 50).is_err());
        assert!(spinodal_scan(&b, (0.0, 10.0), &integ(), 1e-2).is_err());
    }
}
