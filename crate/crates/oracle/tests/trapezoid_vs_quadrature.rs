use rand::Rng as _;
use semiperc_core::replica::{bayes_integrals, free_energy, residual_pair};
use semiperc_core::rng::stream;
use semiperc_core::specfun::{g_marginal, g_marginal_prime, h_tail, phi};
use semiperc_core::{Integrator, LearningSetup, OrderParams};
use semiperc_oracle::brute_force_integral;

const POINTS: usize = 200_001;
const RANGE: (f64, f64) = (-12.0, 12.0);

fn trap<F: Fn(f64) -> f64>(f: F) -> f64 {
    brute_force_integral(f, RANGE, POINTS).unwrap()
}

fn agree(got: f64, want: f64, what: &str) {
    let err = (got - want).abs() / want.abs().max(1.0);
    assert!(err < 1e-6, "{what}: quadrature {got} vs trapezoid {want} (rel {err:e})");
}

struct Point {
    g: f64,
    h: f64,
    alpha: f64,
    beta: f64,
    q: f64,
    m: f64,
}

fn points() -> Vec<Point> {
    let mut rng = stream(2024, 0);
    (0..20)
        .map(|_| {
            let q = rng.random_range(0.05..0.95);
            Point {
                g: rng.random_range(0.01..0.3),
                h: rng.random_range(0.01..0.3),
                alpha: rng.random_range(0.5..10.0),
                beta: rng.random_range(0.5..50.0),
                q,
                m: rng.random_range(0.1..0.9) * q.sqrt(),
            }
        })
        .collect()
}

#[test]
fn bayes_integrals_agree() {
    let integ = Integrator::default();
    for p in points() {
        let (a, b) = bayes_integrals(p.q, p.h, &integ).unwrap();
        let sq = p.q.sqrt();
        let c = (1.0 - p.q).sqrt();
        let ta = trap(|z| {
            let u = (sq * z + p.h) / c;
            phi(u) * phi(u) / h_tail(u)
        });
        let tb = trap(|z| {
            let gp = g_marginal_prime(sq, 1.0, p.h, z).unwrap();
            gp * gp / g_marginal(sq, 1.0, p.h, z).unwrap()
        });
        agree(a, ta, "A");
        agree(b, tb, "B");
    }
}

#[test]
fn general_conjugates_agree() {
    let integ = Integrator::default();
    for p in points() {
        let setup = LearningSetup::new(p.g, p.h, p.alpha, p.beta).unwrap();
        let op = OrderParams::new(p.q, p.m).unwrap();
        let r = residual_pair(&op, &setup, &integ).unwrap();
        let (q, m) = (p.q, p.m);
        let sq = q.sqrt();
        let c = (1.0 - q).sqrt();
        let ct = (q - m * m).sqrt();
        let hg = h_tail(p.g);
        let u = |z: f64| (sq * z + p.h) / c;
        let tp = |z: f64| (m * z + sq * p.g) / ct;
        let pm = trap(|z| {
            let s = phi(u(z)) / h_tail(u(z));
            let gs = g_marginal(sq, 1.0, p.h, z).unwrap();
            let gps = g_marginal_prime(sq, 1.0, p.h, z).unwrap();
            let gpt = g_marginal_prime(m, sq, p.g, z).unwrap();
            p.alpha * phi(tp(z)) * s + p.beta * gpt * gps / gs
        });
        let pq = trap(|z| {
            let s = phi(u(z)) / h_tail(u(z));
            let gs = g_marginal(sq, 1.0, p.h, z).unwrap();
            let gps = g_marginal_prime(sq, 1.0, p.h, z).unwrap();
            let gt = g_marginal(m, sq, p.g, z).unwrap();
            p.alpha * h_tail(tp(z)) * s * s + p.beta * gt * (gps / gs) * (gps / gs)
        });
        let m_hat = sq * pm / (hg * ct * c);
        let q_hat = pq / (hg * (1.0 - q));
        agree(r.r_m + m / (1.0 - q), m_hat, "m_hat");
        agree(r.r_q + (q - m * m) / ((1.0 - q) * (1.0 - q)), q_hat, "q_hat");
    }
}

#[test]
fn free_energy_agrees() {
    let integ = Integrator::default();
    for p in points() {
        for nishimori in [false, true] {
            let (g, m) = if nishimori { (p.h, p.q) } else { (p.g, p.m) };
            let setup = LearningSetup::new(g, p.h, p.alpha, p.beta).unwrap();
            let op = OrderParams::new(p.q, m).unwrap();
            let f = free_energy(&op, &setup, &integ).unwrap();
            let q = p.q;
            let sq = q.sqrt();
            let c = (1.0 - q).sqrt();
            let ct = (q - m * m).sqrt();
            let hg = h_tail(g);
            let ea = trap(|z| h_tail((m * z + sq * g) / ct) * h_tail((sq * z + p.h) / c).ln());
            let eb = trap(|z| g_marginal(m, sq, g, z).unwrap() * g_marginal(sq, 1.0, p.h, z).unwrap().ln());
            let lh = h_tail(p.h).ln();
            let want = p.alpha * (ea / hg - std::f64::consts::LN_2 - lh)
                + p.beta * (eb / hg - lh)
                + 0.5 * (1.0 - q).ln()
                + (q - m * m) / (2.0 * (1.0 - q));
            agree(f, want, "free energy");
        }
    }
}
