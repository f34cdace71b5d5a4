//! Gaussian special functions and quadrature against the standard normal
//! measure `Dz = dz exp(-z^2/2) / sqrt(2 pi)`.
//!
//! Everything here is a pure function of its inputs. The tail function `H`
//! switches to a continued-fraction form past [`TAIL_SWITCH`] so that ratios
//! such as `H'(x)/H(x)` stay accurate long after `H(x)` itself underflows.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::{erfc, exp, expm1, fabs, log, log1p, sqrt};
use thiserror::Error;

/// `1 / sqrt(2 pi)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// `ln sqrt(2 pi)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this argument `H` is evaluated through its Mills ratio.
pub const TAIL_SWITCH: f64 = 8.0;

/// Half-width of the integration window used by composite rules. The
/// Gaussian mass outside `[-12, 12]` is below `4e-33`.
pub const Z_SPAN: f64 = 12.0;

/// Depth of the backward continued-fraction recurrence for the Mills ratio.
const CF_DEPTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecfunError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("integrand is not finite at z = {z}")]
    NonFinite { z: f64 },
    #[error("invalid quadrature rule: {0}")]
    InvalidRule(&'static str),
}

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * exp(-0.5 * x * x)
}

#[inline]
pub fn log_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Mills ratio `H(x) / phi(x)` for `x >= 0`.
fn mills_ratio(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= TAIL_SWITCH {
        0.5 * erfc(x * FRAC_1_SQRT_2) / phi(x)
    } else {
        // R(x) = 1 / (x + 1/(x + 2/(x + 3/(x + ...))))
        let mut t = x;
        for k in (1..=CF_DEPTH).rev() {
            t = x + f64::from(k) / t;
        }
        1.0 / t
    }
}

/// Upper Gaussian tail `H(x) = P(Z > x)`.
pub fn h_tail(x: f64) -> f64 {
    if x < 0.0 {
        1.0 - h_tail(-x)
    } else if x <= TAIL_SWITCH {
        0.5 * erfc(x * FRAC_1_SQRT_2)
    } else {
        exp(log_h_tail(x))
    }
}

/// `ln H(x)`, finite for every finite `x`.
pub fn log_h_tail(x: f64) -> f64 {
    if x < 0.0 {
        log1p(-h_tail(-x))
    } else if x <= TAIL_SWITCH {
        log(0.5 * erfc(x * FRAC_1_SQRT_2))
    } else {
        log_phi(x) + log(mills_ratio(x))
    }
}

/// `H'(x) = -phi(x)`.
#[inline]
pub fn h_prime(x: f64) -> f64 {
    -phi(x)
}

/// `H'(x) / H(x)`, accurate where `H(x)` underflows. Tends to `-x` as
/// `x -> +inf` and to `0` as `x -> -inf`.
pub fn mills_ratio_neg(x: f64) -> f64 {
    if x >= 0.0 {
        -1.0 / mills_ratio(x)
    } else {
        -phi(x) / h_tail(x)
    }
}

/// Inverse of the upper tail: returns `x` with `H(x) = p`.
///
/// Rational initial guess followed by Halley steps on `ln H`, which keeps the
/// relative accuracy uniform down to `p ~ 1e-300`.
pub fn h_tail_inv(p: f64) -> Result<f64, SpecfunError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SpecfunError::Domain("h_tail_inv requires 0 < p < 1"));
    }
    if p > 0.5 {
        return h_tail_inv(1.0 - p).map(|x| -x);
    }
    // Acklam's approximation to the lower-tail quantile of 1 - p, mirrored.
    let mut x = -acklam_lower(p);
    let target = log(p);
    for _ in 0..4 {
        let lh = log_h_tail(x);
        let diff = lh - target;
        if fabs(diff) < 1e-15 {
            break;
        }
        // d/dx ln H = H'/H, d2/dx2 ln H = r (r + x) with r = H'/H.
        let r = mills_ratio_neg(x);
        let d2 = r * (r + x);
        let step = diff / r;
        x -= step / (1.0 - 0.5 * step * d2 / r);
    }
    Ok(x)
}

fn acklam_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Shifted arguments `(a z + b h) / c` and `(a z - b h) / c` with
/// `c = sqrt(b^2 - a^2)`.
#[inline]
fn marginal_args(a: f64, b: f64, h: f64, z: f64) -> Result<(f64, f64, f64), SpecfunError> {
    if !(a >= 0.0 && a < b) {
        return Err(SpecfunError::Domain("marginal requires 0 <= a < b"));
    }
    let c = sqrt((b - a) * (b + a));
    Ok(((a * z + b * h) / c, (a * z - b * h) / c, c))
}

/// Probability that a Gaussian field of mean `a z / c` and unit variance
/// clears the margin `b h / c` in absolute value, halved:
/// `G_h(a, b) = (H((az+bh)/c) + H((bh-az)/c)) / 2`.
pub fn g_marginal(a: f64, b: f64, h: f64, z: f64) -> Result<f64, SpecfunError> {
    let (up, um, _) = marginal_args(a, b, h, z)?;
    Ok(0.5 * (h_tail(up) + h_tail(-um)))
}

/// `G'_h(a, b) = (H'((az+bh)/c) - H'((az-bh)/c)) / 2`, the derivative of
/// [`g_marginal`] with respect to `a z / c`.
pub fn g_marginal_prime(a: f64, b: f64, h: f64, z: f64) -> Result<f64, SpecfunError> {
    let (up, um, c) = marginal_args(a, b, h, z)?;
    let (sign, log_abs) = log_abs_marginal_prime(up, um, a * b * h * z / (c * c));
    Ok(sign * exp(log_abs))
}

/// `ln G_h(a, b)` evaluated in log space.
pub fn log_g_marginal(up: f64, um: f64) -> f64 {
    log_add_exp(log_h_tail(up), log_h_tail(-um)) - core::f64::consts::LN_2
}

/// Sign and log-magnitude of `(phi(um) - phi(up)) / 2`.
///
/// `cross = a b h z / c^2` is passed separately so the exponent difference
/// `(um^2 - up^2) / 2 = -2 cross` carries no cancellation error.
pub fn log_abs_marginal_prime(up: f64, um: f64, cross: f64) -> (f64, f64) {
    // ln phi(up) - ln phi(um) = -(up^2 - um^2)/2 = -2 cross
    let delta = -2.0 * cross;
    if delta == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let (sign, hi, d) = if delta < 0.0 {
        // phi(um) dominates
        (1.0, log_phi(um), delta)
    } else {
        (-1.0, log_phi(up), -delta)
    };
    (sign, hi + log(-expm1(d)) - core::f64::consts::LN_2)
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + log1p(exp(lo - hi))
}

/// A quadrature rule normalized against `Dz`: `sum_i w_i f(z_i) ~ E[f(Z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self, SpecfunError> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(SpecfunError::InvalidRule("nodes and weights must have equal non-zero length"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(SpecfunError::InvalidRule("weights must be positive and finite"));
        }
        Ok(Self { nodes, weights })
    }

    /// Gauss-Hermite rule for the standard normal measure.
    ///
    /// Nodes are the eigenvalues of the Jacobi matrix of the probabilists'
    /// Hermite recurrence, polished by Newton steps on the orthonormal
    /// Hermite functions, which also give the weights without overflow.
    pub fn gauss_hermite(order: usize) -> Result<Self, SpecfunError> {
        if order == 0 {
            return Err(SpecfunError::InvalidRule("order must be positive"));
        }
        let n = order;
        let mut d = alloc::vec![0.0; n];
        let mut e: Vec<f64> = (0..n).map(|k| if k + 1 < n { sqrt((k + 1) as f64) } else { 0.0 }).collect();
        tridiagonal_eigenvalues(&mut d, &mut e)?;
        d.sort_by(|a, b| a.total_cmp(b));
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &node in &d {
            // physicists' variable, weight exp(-x^2)
            let mut x = node * FRAC_1_SQRT_2;
            let mut w = 0.0;
            for _ in 0..3 {
                let (p, dp) = hermite_function(n, x);
                w = 2.0 * exp(-x * x) / (dp * dp);
                if dp != 0.0 {
                    x -= p / dp;
                }
            }
            nodes.push(SQRT_2 * x);
            weights.push(w / sqrt(PI));
        }
        let keep: Vec<(f64, f64)> = nodes.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).collect();
        let (nodes, weights) = keep.into_iter().unzip();
        Self::new(nodes, weights)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Orthonormal Hermite function `p_n(x) exp(-x^2/2)` for the weight
/// `exp(-x^2)`, and its derivative factor `sqrt(2n) p_{n-1}(x) exp(-x^2/2)`.
fn hermite_function(n: usize, x: f64) -> (f64, f64) {
    let pim4 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut p1 = pim4 * exp(-0.5 * x * x);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * sqrt(2.0 / jf) * p2 - sqrt((jf - 1.0) / jf) * p3;
    }
    (p1, sqrt(2.0 * n as f64) * p2)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts. `d` holds the diagonal, `e[k]` couples `k` and `k+1`;
/// on return `d` holds the eigenvalues.
fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<(), SpecfunError> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = fabs(d[m]) + fabs(d[m + 1]);
                if fabs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(SpecfunError::InvalidRule("eigenvalue iteration did not converge"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// `sum_i w_i f(z_i)`. A non-finite integrand value is reported with its node.
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, rule: &QuadratureRule) -> Result<f64, SpecfunError> {
    let mut acc = 0.0;
    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(z);
        if !v.is_finite() {
            return Err(SpecfunError::NonFinite { z });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let nf = n as f64;
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if fabs(z - z1) <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A location where an integrand changes on a scale much finer than the
/// Gaussian weight: a smoothed step or a narrow bump of the given width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub center: f64,
    pub width: f64,
}

impl Peak {
    pub fn new(center: f64, width: f64) -> Self {
        Self { center, width }
    }
}

/// Composite Gauss-Legendre integration against `Dz` on `[-Z_SPAN, Z_SPAN]`
/// with panels refined geometrically around caller-supplied peaks.
///
/// Saddle-point integrands at overlap `q` have features of width
/// `sqrt(1 - q)`, so a fixed Gauss-Hermite rule loses accuracy as `q -> 1`.
#[derive(Debug, Clone)]
pub struct ClusteredQuadrature {
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
    background_step: f64,
}

impl ClusteredQuadrature {
    pub fn new(panel_order: usize) -> Self {
        let (gl_nodes, gl_weights) = gauss_legendre(panel_order.max(2));
        Self { gl_nodes, gl_weights, background_step: 1.0 }
    }

    fn breakpoints(&self, peaks: &[Peak]) -> Vec<f64> {
        let mut bp: Vec<f64> = Vec::with_capacity(64);
        let steps = (2.0 * Z_SPAN / self.background_step) as usize;
        for i in 0..=steps {
            bp.push(-Z_SPAN + i as f64 * self.background_step);
        }
        for p in peaks {
            if !(p.center.is_finite() && p.width.is_finite() && p.width > 0.0) {
                continue;
            }
            if p.center < -Z_SPAN - 1.0 || p.center > Z_SPAN + 1.0 {
                continue;
            }
            bp.push(p.center);
            let mut d = p.width;
            while d < 2.0 * self.background_step {
                bp.push(p.center - d);
                bp.push(p.center + d);
                d *= 2.0;
            }
        }
        bp.retain(|b| (-Z_SPAN..=Z_SPAN).contains(b));
        bp.sort_by(|a, b| a.total_cmp(b));
        bp.dedup_by(|a, b| fabs(*a - *b) <= 1e-300 + 1e-15 * fabs(*b));
        bp
    }

    /// Materializes the rule for a peak set.
    pub fn rule(&self, peaks: &[Peak]) -> QuadratureRule {
        let bp = self.breakpoints(peaks);
        let mut nodes = Vec::with_capacity(bp.len() * self.gl_nodes.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in bp.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&t, &w) in self.gl_nodes.iter().zip(&self.gl_weights) {
                let z = mid + half * t;
                nodes.push(z);
                weights.push(half * w * phi(z));
            }
        }
        QuadratureRule { nodes, weights }
    }

    /// Componentwise `E[f(Z)]` for a vector-valued integrand.
    pub fn expect<const K: usize, F>(&self, peaks: &[Peak], f: F) -> Result<[f64; K], SpecfunError>
    where
        F: Fn(f64) -> [f64; K],
    {
        let bp = self.breakpoints(peaks);
        let mut acc = [0.0; K];
        for pair in bp.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&t, &w) in self.gl_nodes.iter().zip(&self.gl_weights) {
                let z = mid + half * t;
                let wz = half * w * phi(z);
                let v = f(z);
                for k in 0..K {
                    if !v[k].is_finite() {
                        return Err(SpecfunError::NonFinite { z });
                    }
                    acc[k] += wz * v[k];
                }
            }
        }
        Ok(acc)
    }
}

/// Strategy for the `Dz` integrals of the replica module.
#[derive(Debug, Clone)]
pub enum Integrator {
    /// A fixed rule; peak hints are ignored.
    Fixed(QuadratureRule),
    /// Panels refined around peak hints.
    Clustered(ClusteredQuadrature),
}

impl Integrator {
    pub fn hermite(order: usize) -> Result<Self, SpecfunError> {
        QuadratureRule::gauss_hermite(order).map(Self::Fixed)
    }

    pub fn clustered(panel_order: usize) -> Self {
        Self::Clustered(ClusteredQuadrature::new(panel_order))
    }

    pub fn expect<const K: usize, F>(&self, peaks: &[Peak], f: F) -> Result<[f64; K], SpecfunError>
    where
        F: Fn(f64) -> [f64; K],
    {
        match self {
            Self::Fixed(rule) => {
                let mut acc = [0.0; K];
                for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let v = f(z);
                    for k in 0..K {
                        if !v[k].is_finite() {
                            return Err(SpecfunError::NonFinite { z });
                        }
                        acc[k] += w * v[k];
                    }
                }
                Ok(acc)
            }
            Self::Clustered(c) => c.expect(peaks, f),
        }
    }
}

impl Default for Integrator {
    fn default() -> Self {
        Self::clustered(20)
    }
}
