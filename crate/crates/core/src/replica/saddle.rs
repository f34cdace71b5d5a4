//! Saddle-point integrals, residuals and the free energy.

use libm::{exp, log, sqrt};

use super::{LearningSetup, OrderParams, ReplicaError, SaddleResidual};
use crate::specfun::{
    h_tail, log_abs_marginal_prime, log_g_marginal, log_h_tail, log_phi, Integrator, Peak,
};

/// Student-side quantities at one node: the field `u = (sqrt(q) z + h)/sqrt(1-q)`.
struct Student {
    /// `ln(-H'(u)/H(u))`
    log_ratio: f64,
    log_h: f64,
    /// `ln G_h(sqrt q, 1)`
    log_g: f64,
    sign_gp: f64,
    /// `ln |G'_h(sqrt q, 1)|`
    log_gp: f64,
}

#[inline]
fn student(sq: f64, one_minus_q: f64, cs: f64, h: f64, z: f64) -> Student {
    let up = (sq * z + h) / cs;
    let um = (sq * z - h) / cs;
    let log_h = log_h_tail(up);
    let (sign_gp, log_gp) = log_abs_marginal_prime(up, um, sq * h * z / one_minus_q);
    Student { log_ratio: log_phi(up) - log_h, log_h, log_g: log_g_marginal(up, um), sign_gp, log_gp }
}

fn student_peaks(q: f64, h: f64, out: &mut [Peak; 4]) -> usize {
    if q <= 0.0 {
        return 0;
    }
    let sq = sqrt(q);
    let w = sqrt(1.0 - q) / sq;
    out[0] = Peak::new(-h / sq, w);
    out[1] = Peak::new(h / sq, w);
    2
}

fn teacher_peaks(q: f64, m: f64, g: f64, out: &mut [Peak; 4], from: usize) -> usize {
    if m == 0.0 {
        return from;
    }
    let c = sqrt(q - m * m) / m.abs();
    let x = sqrt(q) * g / m;
    out[from] = Peak::new(-x, c);
    out[from + 1] = Peak::new(x, c);
    from + 2
}

fn check_q(q: f64) -> Result<(), ReplicaError> {
    if !(q.is_finite() && (0.0..1.0).contains(&q)) {
        return Err(ReplicaError::InvalidOrder("q must lie in [0, 1)"));
    }
    Ok(())
}

/// The two Bayes-optimal integrals at margin `h`:
/// `A = E[H'(u)^2 / H(u)]` and `B = E[G'_h(sqrt q, 1)^2 / G_h(sqrt q, 1)]`.
pub fn bayes_integrals(q: f64, h: f64, integ: &Integrator) -> Result<(f64, f64), ReplicaError> {
    check_q(q)?;
    let one_minus_q = 1.0 - q;
    let sq = sqrt(q);
    let cs = sqrt(one_minus_q);
    let mut peaks = [Peak::new(0.0, 1.0); 4];
    let n = student_peaks(q, h, &mut peaks);
    let [a, b] = integ.expect(&peaks[..n], |z| {
        let s = student(sq, one_minus_q, cs, h, z);
        let a = exp(2.0 * s.log_ratio + s.log_h);
        let b = exp(2.0 * s.log_gp - s.log_g);
        [a, b]
    })?;
    Ok((a, b))
}

/// `P(q) - q` with `P(q) = (alpha A + beta B) / H(h)`. Positive exactly
/// where `rhs_single(q) > q`; roots coincide with fixed points.
pub fn single_gap(q: f64, setup: &LearningSetup, integ: &Integrator) -> Result<f64, ReplicaError> {
    require_bayes(setup)?;
    if setup.alpha == 0.0 && setup.beta == 0.0 {
        check_q(q)?;
        return Ok(-q);
    }
    let (a, b) = bayes_integrals(q, setup.h, integ)?;
    Ok((setup.alpha * a + setup.beta * b) / h_tail(setup.h) - q)
}

/// Fixed-point map of the Bayes-optimal equation: `L / (1 + L)` with
/// `L = (alpha A + beta B) / (H(h) (1 - q))`.
pub fn rhs_single(q: f64, setup: &LearningSetup, integ: &Integrator) -> Result<f64, ReplicaError> {
    require_bayes(setup)?;
    check_q(q)?;
    if setup.alpha == 0.0 && setup.beta == 0.0 {
        return Ok(0.0);
    }
    let (a, b) = bayes_integrals(q, setup.h, integ)?;
    let l = (setup.alpha * a + setup.beta * b) / (h_tail(setup.h) * (1.0 - q));
    Ok(l / (1.0 + l))
}

fn require_bayes(setup: &LearningSetup) -> Result<(), ReplicaError> {
    setup.validate()?;
    if setup.bayes_optimal() {
        Ok(())
    } else {
        Err(ReplicaError::NotBayesOptimal { g: setup.g, h: setup.h })
    }
}

/// Conjugate order parameters `(m_hat, q_hat)`. Stationarity means
/// `m_hat = m / (1-q)` and `q_hat = (q - m^2) / (1-q)^2`.
///
/// With `nishimori_shortcut` the exact `m = q`, `g = h` reduction is used;
/// without it the general two-field integrals are always evaluated.
pub(crate) fn conjugates(
    q: f64,
    m: f64,
    setup: &LearningSetup,
    integ: &Integrator,
    nishimori_shortcut: bool,
) -> Result<(f64, f64), ReplicaError> {
    setup.validate()?;
    check_q(q)?;
    let LearningSetup { g, h, alpha, beta } = *setup;
    if alpha == 0.0 && beta == 0.0 {
        return Ok((0.0, 0.0));
    }
    let one_minus_q = 1.0 - q;
    let hg = h_tail(g);
    if nishimori_shortcut && setup.bayes_optimal() && m == q {
        let (a, b) = bayes_integrals(q, h, integ)?;
        let v = (alpha * a + beta * b) / (hg * one_minus_q);
        return Ok((v, v));
    }
    let gap = q - m * m;
    if gap < 1e-12 {
        return Err(ReplicaError::Degenerate { gap });
    }
    let sq = sqrt(q);
    let cs = sqrt(one_minus_q);
    let ct = sqrt(gap);
    let cross_t = m * sq * g / gap;
    let mut peaks = [Peak::new(0.0, 1.0); 4];
    let n = student_peaks(q, h, &mut peaks);
    let n = teacher_peaks(q, m, g, &mut peaks, n);
    let [pm_a, pm_b, pq_a, pq_b] = integ.expect(&peaks[..n], |z| {
        let s = student(sq, one_minus_q, cs, h, z);
        let tp = (m * z + sq * g) / ct;
        let tm = (m * z - sq * g) / ct;
        let (sign_t, log_gp_t) = log_abs_marginal_prime(tp, tm, cross_t * z);
        let log_gt = log_g_marginal(tp, tm);
        let pm_a = exp(log_phi(tp) + s.log_ratio);
        let pm_b = sign_t * s.sign_gp * exp(log_gp_t + s.log_gp - s.log_g);
        let pq_a = exp(log_h_tail(tp) + 2.0 * s.log_ratio);
        let pq_b = exp(log_gt + 2.0 * (s.log_gp - s.log_g));
        [pm_a, pm_b, pq_a, pq_b]
    })?;
    let p_m = alpha * pm_a + beta * pm_b;
    let p_q = alpha * pq_a + beta * pq_b;
    let m_hat = sq * p_m / (hg * ct * cs);
    let q_hat = p_q / (hg * one_minus_q);
    Ok((m_hat, q_hat))
}

/// Residuals of the `m` and `q` saddle-point equations.
pub fn residual_pair(
    p: &OrderParams,
    setup: &LearningSetup,
    integ: &Integrator,
) -> Result<SaddleResidual, ReplicaError> {
    let (m_hat, q_hat) = conjugates(p.q, p.m, setup, integ, true)?;
    let one_minus_q = 1.0 - p.q;
    Ok(SaddleResidual {
        r_m: m_hat - p.m / one_minus_q,
        r_q: q_hat - (p.q - p.m * p.m) / (one_minus_q * one_minus_q),
    })
}

/// Replica-symmetric `-F` at `(q, m)`, normalized by the data likelihood so
/// that the trivial point `q = m = 0` sits at `-alpha ln 2`.
pub fn free_energy(
    p: &OrderParams,
    setup: &LearningSetup,
    integ: &Integrator,
) -> Result<f64, ReplicaError> {
    setup.validate()?;
    let (q, m) = (p.q, p.m);
    check_q(q)?;
    let LearningSetup { g, h, alpha, beta } = *setup;
    let one_minus_q = 1.0 - q;
    let entropic = 0.5 * log(one_minus_q) + (q - m * m) / (2.0 * one_minus_q);
    if alpha == 0.0 && beta == 0.0 {
        return Ok(entropic);
    }
    if q == 0.0 {
        if m != 0.0 {
            return Err(ReplicaError::InvalidOrder("m must vanish at q = 0"));
        }
        return Ok(-alpha * core::f64::consts::LN_2);
    }
    let hg = h_tail(g);
    let sq = sqrt(q);
    let cs = sqrt(one_minus_q);
    let nishimori = setup.bayes_optimal() && m == q;
    let gap = q - m * m;
    if !nishimori && gap < 1e-12 {
        return Err(ReplicaError::Degenerate { gap });
    }
    let ct = sqrt(gap);
    let mut peaks = [Peak::new(0.0, 1.0); 4];
    let n = student_peaks(q, h, &mut peaks);
    let n = if nishimori { n } else { teacher_peaks(q, m, g, &mut peaks, n) };
    let [ea, eb] = integ.expect(&peaks[..n], |z| {
        let up = (sq * z + h) / cs;
        let um = (sq * z - h) / cs;
        let log_h = log_h_tail(up);
        let log_g = log_g_marginal(up, um);
        let (wa, wb) = if nishimori {
            let tp = (sq * z + g) / cs;
            let tm = (sq * z - g) / cs;
            (exp(log_h_tail(tp)), exp(log_g_marginal(tp, tm)))
        } else {
            let tp = (m * z + sq * g) / ct;
            let tm = (m * z - sq * g) / ct;
            (exp(log_h_tail(tp)), exp(log_g_marginal(tp, tm)))
        };
        [wa * log_h, wb * log_g]
    })?;
    let log_hh = log_h_tail(h);
    let energetic = alpha * (ea / hg - core::f64::consts::LN_2 - log_hh) + beta * (eb / hg - log_hh);
    Ok(energetic + entropic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::generalization_error;

    fn integ() -> Integrator {
        Integrator::default()
    }

    fn trapezoid<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
        let dz = 24.0 / n as f64;
        (0..=n)
            .map(|i| {
                let z = -12.0 + i as f64 * dz;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * crate::specfun::phi(z) * f(z) * dz
            })
            .sum()
    }

    #[test]
    fn rhs_single_vanishes_without_data() {
        let s = LearningSetup::bayes(0.05, 0.0, 0.0).unwrap();
        for &q in &[0.0, 0.3, 0.999] {
            assert_eq!(rhs_single(q, &s, &integ()).unwrap(), 0.0);
        }
    }

    #[test]
    fn rhs_single_trivial_root_without_labels() {
        for &beta in &[1.0, 50.0, 1e4] {
            let s = LearningSetup::bayes(0.05, 0.0, beta).unwrap();
            assert_eq!(rhs_single(0.0, &s, &integ()).unwrap(), 0.0);
        }
    }

    #[test]
    fn rhs_single_matches_trapezoid() {
        let (q, h) = (0.5_f64, 0.05_f64);
        let s = LearningSetup::bayes(h, 1.0, 50.0).unwrap();
        let sq = q.sqrt();
        let c = (1.0 - q).sqrt();
        let a = trapezoid(
            |z| {
                let u = (sq * z + h) / c;
                let hp = crate::specfun::phi(u);
                hp * hp / h_tail(u)
            },
            1_000_000,
        );
        let b = trapezoid(
            |z| {
                let up = (sq * z + h) / c;
                let um = (sq * z - h) / c;
                let gp = 0.5 * (crate::specfun::phi(um) - crate::specfun::phi(up));
                let gg = 0.5 * (h_tail(up) + h_tail(-um));
                gp * gp / gg
            },
            1_000_000,
        );
        let l = (a + 50.0 * b) / (h_tail(h) * (1.0 - q));
        let want = l / (1.0 + l);
        let got = rhs_single(q, &s, &integ()).unwrap();
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        assert!(rhs_single(q, &LearningSetup::new(0.1, 0.05, 1.0, 1.0).unwrap(), &integ()).is_err());
    }

    #[test]
    fn rhs_single_finite_on_dense_grid() {
        let s = LearningSetup::bayes(0.05, 1.0, 200.0).unwrap();
        let n = 10_000;
        for i in 0..=n {
            let q = (1.0 - 1e-6) * i as f64 / n as f64;
            let v = rhs_single(q, &s, &integ()).unwrap();
            assert!(v.is_finite() && (0.0..1.0).contains(&v), "q={q}");
        }
    }

    #[test]
    fn residuals_without_data() {
        let s = LearningSetup::new(0.05, 0.1, 0.0, 0.0).unwrap();
        let (q, m) = (1e-6, 1e-7);
        let r = residual_pair(&OrderParams::new(q, m).unwrap(), &s, &integ()).unwrap();
        assert!((r.r_m + m / (1.0 - q)).abs() < 1e-18);
        assert!((r.r_q + (q - m * m) / ((1.0 - q) * (1.0 - q))).abs() < 1e-18);
    }

    #[test]
    fn degenerate_general_point_is_rejected() {
        let s = LearningSetup::new(0.05, 0.1, 1.0, 10.0).unwrap();
        let p = OrderParams::new(0.25, 0.5).unwrap();
        assert!(matches!(residual_pair(&p, &s, &integ()), Err(ReplicaError::Degenerate { .. })));
    }

    #[test]
    fn general_path_reduces_on_nishimori_line() {
        // at g = h the general integrals with m slightly below q approach the
        // simplified ones
        let s = LearningSetup::bayes(0.05, 1.0, 50.0).unwrap();
        let q = 0.7;
        let exact = conjugates(q, q, &s, &integ(), true).unwrap();
        let near = conjugates(q, q * (1.0 - 1e-9), &s, &integ(), false).unwrap();
        assert!((exact.0 - near.0).abs() < 1e-6 * exact.0, "{exact:?} {near:?}");
        assert!((exact.1 - near.1).abs() < 1e-6 * exact.1, "{exact:?} {near:?}");
    }

    #[test]
    fn free_energy_without_data() {
        let s = LearningSetup::bayes(0.05, 0.0, 0.0).unwrap();
        let p = OrderParams::new(0.0, 0.0).unwrap();
        assert_eq!(free_energy(&p, &s, &integ()).unwrap(), 0.0);
    }

    #[test]
    fn free_energy_gradient_matches_residuals() {
        let s = LearningSetup::new(0.05, 0.1, 1.0, 50.0).unwrap();
        let (q, m) = (0.6, 0.5);
        let r = residual_pair(&OrderParams::new(q, m).unwrap(), &s, &integ()).unwrap();
        let f = |q: f64, m: f64| free_energy(&OrderParams::new(q, m).unwrap(), &s, &integ()).unwrap();
        let e = 1e-5;
        let dm = (f(q, m + e) - f(q, m - e)) / (2.0 * e);
        let dq = (f(q + e, m) - f(q - e, m)) / (2.0 * e);
        assert!((dm - r.r_m).abs() < 1e-5 * r.r_m.abs().max(1.0), "{dm} {}", r.r_m);
        assert!((dq + 0.5 * r.r_q).abs() < 1e-5 * r.r_q.abs().max(1.0), "{dq} {}", r.r_q);
    }

    #[test]
    fn free_energy_continuous_at_small_q() {
        let s = LearningSetup::bayes(0.05, 1.0, 10.0).unwrap();
        let f0 = free_energy(&OrderParams::new(0.0, 0.0).unwrap(), &s, &integ()).unwrap();
        let f1 = free_energy(&OrderParams::nishimori(1e-9).unwrap(), &s, &integ()).unwrap();
        assert!((f0 - f1).abs() < 1e-6, "{f0} {f1}");
        assert!(generalization_error(0.0).unwrap() == 0.5);
    }
}
