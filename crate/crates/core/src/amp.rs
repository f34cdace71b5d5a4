//! Approximate message passing for the margin perceptron with a spherical
//! prior, on a mixture of labelled and unlabelled data.
//!
//! Per-datum fields `a_mu`, per-component fields `a_k`, the prior precision
//! `kappa` and the Onsager coefficient `B` are iterated to a fixed point; the
//! weight estimate is `w = a / kappa`.

use alloc::vec::Vec;
use libm::{acos, exp, sqrt};
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rng::{derive_seed, stream};
use crate::specfun::{log_add_exp, log_h_tail, log_phi};
use crate::synthdata::{dot, DataError, Dataset, Teacher};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmpError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("state shape does not match the data: {0}")]
    Shape(&'static str),
    #[error("channel variance must be positive, got {0}")]
    Variance(f64),
    #[error("non-finite channel output at a = {a}, b = {b}")]
    NonFinite { a: f64, b: f64 },
    #[error("iteration {t} diverged")]
    Diverged { t: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Which form of the update equations to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelEquations {
    /// Raw features, `kappa = (1 + 4 |a|^2 / N) / 2`, prior term `B a_k`, and
    /// a `+` correction in the unlabelled `D`.
    #[default]
    Verbatim,
    /// Features scaled by `1/sqrt(N)`, `kappa` solving
    /// `kappa (kappa - 1) = |a|^2 / N`, prior term `B w_k`, a `-` correction
    /// in the unlabelled `D`, and the label inside the labelled field.
    Consistent,
}

impl ChannelEquations {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verbatim => "verbatim",
            Self::Consistent => "consistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    /// Every update reads the state at `t`.
    #[default]
    Synchronous,
    /// `B`, `a_k`, `kappa` then `a_mu`, each reading the newest values.
    Sequential,
}

impl UpdateOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Synchronous => "synchronous",
            Self::Sequential => "sequential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    pub max_iter: usize,
    /// Threshold on `|w_new - w_old| / |w_new|`.
    pub rel_tol: f64,
    /// Convex weight of the new `a_k` (1 means undamped).
    pub damping: f64,
    pub divergence_bound: f64,
    pub equations: ChannelEquations,
    pub order: UpdateOrder,
    /// Uses `y a` instead of `a` inside the labelled `z_-` (always on for
    /// [`ChannelEquations::Consistent`]).
    pub label_in_field: bool,
    pub record_trajectory: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iter: 20,
            rel_tol: 1e-6,
            damping: 1.0,
            divergence_bound: 1e8,
            equations: ChannelEquations::Verbatim,
            order: UpdateOrder::Synchronous,
            label_in_field: false,
            record_trajectory: false,
        }
    }
}

impl AmpConfig {
    /// The scaled, self-consistent form with sequential updates.
    pub fn consistent() -> Self {
        Self {
            equations: ChannelEquations::Consistent,
            order: UpdateOrder::Sequential,
            label_in_field: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AmpError> {
        if self.max_iter == 0 {
            return Err(AmpError::Config("max_iter must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(AmpError::Config("rel_tol must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(AmpError::Config("damping must lie in (0, 1]"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(AmpError::Config("divergence_bound must be positive"));
        }
        Ok(())
    }

    fn form(&self) -> ChannelForm {
        match self.equations {
            ChannelEquations::Verbatim => ChannelForm { label_in_field: self.label_in_field, consistent: false },
            ChannelEquations::Consistent => ChannelForm { label_in_field: true, consistent: true },
        }
    }

    fn feature_scale(&self, n: usize) -> f64 {
        match self.equations {
            ChannelEquations::Verbatim => 1.0,
            ChannelEquations::Consistent => 1.0 / sqrt(n as f64),
        }
    }
}

/// Variant switches for the channel functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChannelForm {
    pub label_in_field: bool,
    /// Flips the sign of the unlabelled correction term in `D`.
    pub consistent: bool,
}

/// `(C, D)` for one datum with field `a` and variance `b`; `y` is the label
/// of a labelled datum.
pub fn channel(a: f64, b: f64, h: f64, y: Option<i8>, form: ChannelForm) -> Result<(f64, f64), AmpError> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(AmpError::Variance(b));
    }
    let sb = sqrt(b);
    let (c, d) = match y {
        Some(y) => {
            let y = f64::from(y);
            let field = if form.label_in_field { y * a } else { a };
            let zm = (h - field) / sb;
            let c = y * exp(log_phi(zm) - log_h_tail(zm)) / sb;
            (c, c * c - y * zm * c / sb)
        }
        None => {
            let zm = (h - a) / sb;
            let zp = (h + a) / sb;
            let lz = log_add_exp(log_h_tail(zm), log_h_tail(zp));
            let em = exp(log_phi(zm) - lz);
            let ep = exp(log_phi(zp) - lz);
            let c = (em - ep) / sb;
            let corr = (zm * em + zp * ep) / b;
            (c, if form.consistent { c * c - corr } else { c * c + corr })
        }
    };
    if c.is_finite() && d.is_finite() {
        Ok((c, d))
    } else {
        Err(AmpError::NonFinite { a, b })
    }
}

pub fn channel_c(a: f64, b: f64, h: f64, y: Option<i8>, form: ChannelForm) -> Result<f64, AmpError> {
    channel(a, b, h, y, form).map(|(c, _)| c)
}

pub fn channel_d(a: f64, b: f64, h: f64, y: Option<i8>, form: ChannelForm) -> Result<f64, AmpError> {
    channel(a, b, h, y, form).map(|(_, d)| d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    /// Labelled data first, then unlabelled.
    pub a_data: Vec<f64>,
    pub kappa: f64,
    pub a_comp: Vec<f64>,
    pub b_scalar: f64,
    pub t: usize,
}

impl AmpState {
    pub fn zeros(n: usize, rows: usize) -> Self {
        Self { a_data: alloc::vec![0.0; rows], kappa: 1.0, a_comp: alloc::vec![0.0; n], b_scalar: 0.0, t: 0 }
    }

    /// `a_k` i.i.d. normal with the given variance, everything else at rest.
    pub fn random(n: usize, rows: usize, variance: f64, seed: u64) -> Result<Self, AmpError> {
        let normal = Normal::new(0.0, sqrt(variance)).map_err(|_| AmpError::Config("variance must be non-negative"))?;
        let mut rng = stream(seed, 0);
        let a_comp = (0..n).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self { a_comp, ..Self::zeros(n, rows) })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.a_comp.iter().map(|a| a / self.kappa).collect()
    }

    fn check(&self, data: &Dataset) -> Result<(), AmpError> {
        if self.a_comp.len() != data.n() {
            return Err(AmpError::Shape("a_comp length must equal N"));
        }
        if self.a_data.len() != data.l_count() + data.u_count() {
            return Err(AmpError::Shape("a_data length must equal L + U"));
        }
        if !(self.kappa > 0.0) {
            return Err(AmpError::Shape("kappa must be positive"));
        }
        Ok(())
    }

    fn bounded(&self, bound: f64) -> bool {
        let ok = |x: f64| x.is_finite() && x.abs() <= bound;
        ok(self.kappa) && ok(self.b_scalar) && self.a_data.iter().all(|&x| ok(x)) && self.a_comp.iter().all(|&x| ok(x))
    }
}

fn kappa_of(a: &[f64], equations: ChannelEquations) -> f64 {
    let s = dot(a, a) / a.len().max(1) as f64;
    match equations {
        ChannelEquations::Verbatim => 0.5 * (1.0 + 4.0 * s),
        ChannelEquations::Consistent => 0.5 * (1.0 + sqrt(1.0 + 4.0 * s)),
    }
}

/// `scale * X w` over labelled then unlabelled rows.
fn forward(data: &Dataset, w: &[f64], scale: f64) -> Vec<f64> {
    data.labeled()
        .row_iter()
        .chain(data.unlabeled().row_iter())
        .map(|x| scale * dot(x, w))
        .collect()
}

/// `scale * X^T c`.
fn backward(data: &Dataset, c: &[f64], scale: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; data.n()];
    for (x, &cm) in data.labeled().row_iter().chain(data.unlabeled().row_iter()).zip(c) {
        for (o, &xk) in out.iter_mut().zip(x) {
            *o += xk * cm;
        }
    }
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

/// `C_mu` for every datum and `sum_mu D_mu`.
fn channels(data: &Dataset, a_data: &[f64], b: f64, h: f64, form: ChannelForm) -> Result<(Vec<f64>, f64), AmpError> {
    let l = data.l_count();
    let mut c = Vec::with_capacity(a_data.len());
    let mut d_sum = 0.0;
    for (mu, &a) in a_data.iter().enumerate() {
        let y = (mu < l).then(|| data.labels()[mu]);
        let (cm, dm) = channel(a, b, h, y, form)?;
        c.push(cm);
        d_sum += dm;
    }
    Ok((c, d_sum))
}

/// One sweep of the update equations.
pub fn amp_step(state: &AmpState, data: &Dataset, h: f64, cfg: &AmpConfig) -> Result<AmpState, AmpError> {
    cfg.validate()?;
    state.check(data)?;
    let n = data.n() as f64;
    let scale = cfg.feature_scale(data.n());
    let form = cfg.form();
    let v = 1.0 / state.kappa;
    let (c, d_sum) = channels(data, &state.a_data, v, h, form)?;
    let prior = |a: &[f64], kappa: f64| -> Vec<f64> {
        match cfg.equations {
            ChannelEquations::Verbatim => a.to_vec(),
            ChannelEquations::Consistent => a.iter().map(|x| x / kappa).collect(),
        }
    };
    let damp = |new: Vec<f64>| -> Vec<f64> {
        if cfg.damping == 1.0 {
            return new;
        }
        new.iter().zip(&state.a_comp).map(|(x, o)| cfg.damping * x + (1.0 - cfg.damping) * o).collect()
    };
    let next = match cfg.order {
        UpdateOrder::Synchronous => {
            let w = state.weights();
            let mut a_data = forward(data, &w, scale);
            a_data.iter_mut().zip(&c).for_each(|(a, cm)| *a -= v * cm);
            let kappa = kappa_of(&state.a_comp, cfg.equations);
            let mut a_comp = backward(data, &c, scale);
            let p = prior(&state.a_comp, state.kappa);
            a_comp.iter_mut().zip(&p).for_each(|(a, pk)| *a += state.b_scalar * pk);
            AmpState { a_data, kappa, a_comp: damp(a_comp), b_scalar: d_sum / n, t: state.t + 1 }
        }
        UpdateOrder::Sequential => {
            let b_scalar = d_sum / n;
            let mut a_comp = backward(data, &c, scale);
            let p = prior(&state.a_comp, state.kappa);
            a_comp.iter_mut().zip(&p).for_each(|(a, pk)| *a += b_scalar * pk);
            let a_comp = damp(a_comp);
            let kappa = kappa_of(&a_comp, cfg.equations);
            let w: Vec<f64> = a_comp.iter().map(|a| a / kappa).collect();
            let mut a_data = forward(data, &w, scale);
            a_data.iter_mut().zip(&c).for_each(|(a, cm)| *a -= cm / kappa);
            AmpState { a_data, kappa, a_comp, b_scalar, t: state.t + 1 }
        }
    };
    if next.bounded(cfg.divergence_bound) {
        Ok(next)
    } else {
        Err(AmpError::Diverged { t: next.t })
    }
}

/// Cosine between `w_hat` and the teacher, clamped to `[-1, 1]`; zero for a
/// zero estimate.
pub fn measure_overlap(w_hat: &[f64], teacher: &Teacher) -> Result<f64, AmpError> {
    if w_hat.len() != teacher.n() {
        return Err(AmpError::Shape("estimate length must equal N"));
    }
    let nw = sqrt(dot(w_hat, w_hat));
    let nt = sqrt(dot(teacher.weights(), teacher.weights()));
    if nw == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(w_hat, teacher.weights()) / (nw * nt)).clamp(-1.0, 1.0))
}

pub fn epsilon_of(overlap: f64) -> f64 {
    acos(overlap.clamp(-1.0, 1.0)) / core::f64::consts::PI
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub q_emp: f64,
    pub rel_change: f64,
    pub kappa: f64,
    pub b_scalar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpResult {
    pub w_hat: Vec<f64>,
    pub q_emp: f64,
    pub epsilon_emp: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub diverged: bool,
    /// Last finite state.
    pub state: AmpState,
    pub trajectory: Vec<TrajectoryRow>,
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm = dot(new, new);
    if norm == 0.0 {
        if diff == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        sqrt(diff / norm)
    }
}

/// Iterates [`amp_step`] from `init` until the relative change of the
/// weight estimate drops below `rel_tol` or `max_iter` sweeps are done.
pub fn run_amp(data: &Dataset, h: f64, cfg: &AmpConfig, init: AmpState) -> Result<AmpResult, AmpError> {
    cfg.validate()?;
    init.check(data)?;
    let mut state = init;
    let mut w = state.weights();
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut used = 0;
    for it in 1..=cfg.max_iter {
        let next = match amp_step(&state, data, h, cfg) {
            Ok(s) => s,
            Err(AmpError::Diverged { .. }) | Err(AmpError::NonFinite { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        used = it;
        let w_next = next.weights();
        let change = rel_change(&w_next, &w);
        state = next;
        w = w_next;
        if cfg.record_trajectory {
            trajectory.push(TrajectoryRow {
                iteration: it,
                q_emp: measure_overlap(&w, data.teacher())?,
                rel_change: change,
                kappa: state.kappa,
                b_scalar: state.b_scalar,
            });
        }
        if change < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    let q_emp = measure_overlap(&w, data.teacher())?;
    Ok(AmpResult {
        w_hat: w,
        q_emp,
        epsilon_emp: epsilon_of(q_emp),
        iterations_used: used,
        converged,
        diverged,
        state,
        trajectory,
    })
}

/// Settings for the pretrain-then-fine-tune protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    /// Used for every fine-tuning stage.
    pub amp: AmpConfig,
    pub pretrain_max_iter: usize,
    /// Variance of the random initial `a_k`.
    pub init_variance: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { amp: AmpConfig::default(), pretrain_max_iter: 200, init_variance: 1e-2 }
    }
}

/// Outcome of one sample at one labelled-data ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolPoint {
    pub alpha: f64,
    pub q_emp: f64,
    /// Uses `|q_emp|` while no labels fix the sign.
    pub epsilon: f64,
    pub converged: bool,
    pub diverged: bool,
}

/// Per-stage outcomes of one protocol run and, when requested, the
/// iteration log of every stage tagged with its `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub points: Vec<ProtocolPoint>,
    pub trajectory: Vec<(f64, TrajectoryRow)>,
}

const TAG_INIT: u64 = 0x696e_6974;

pub fn validate_schedule(schedule: &[f64]) -> Result<(), AmpError> {
    match schedule.first() {
        Some(&a) if a == 0.0 => {}
        _ => return Err(AmpError::Config("alpha schedule must start at 0")),
    }
    if schedule.iter().any(|a| !a.is_finite()) || schedule.windows(2).any(|p| p[1] < p[0]) {
        return Err(AmpError::Config("alpha schedule must be finite and ascending"));
    }
    Ok(())
}

/// Runs AMP on `round(beta N)` unlabelled data from a random start, then
/// adds labelled data to reach each `alpha` of the schedule and re-runs
/// warm-started. Divergent stages are recorded and the last finite state is
/// carried on.
pub fn protocol_sample(
    teacher: &Teacher,
    g: f64,
    h: f64,
    beta: f64,
    schedule: &[f64],
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<ProtocolRun, AmpError> {
    validate_schedule(schedule)?;
    cfg.amp.validate()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(AmpError::Config("beta must be finite and non-negative"));
    }
    let n = teacher.n();
    let u = libm::round(beta * n as f64) as usize;
    let mut data = Dataset::generate_for(teacher.clone(), g, 0, u, seed)?;
    let scale = cfg.amp.feature_scale(n);
    let mut state = AmpState::random(n, u, cfg.init_variance, derive_seed(seed, TAG_INIT))?;
    let pre = AmpConfig { max_iter: cfg.pretrain_max_iter.max(1), ..cfg.amp };
    let mut out = Vec::with_capacity(schedule.len());
    let mut trajectory = Vec::new();
    for (i, &alpha) in schedule.iter().enumerate() {
        let amp = if i == 0 { pre } else { cfg.amp };
        if i > 0 {
            let l_old = data.l_count();
            let target = (libm::round(alpha * n as f64) as usize).max(l_old);
            data.append_labeled(target - l_old)?;
            let w = state.weights();
            let fresh: Vec<f64> = (l_old..target).map(|mu| scale * dot(data.labeled().row(mu), &w)).collect();
            state.a_data.splice(l_old..l_old, fresh);
        }
        let res = run_amp(&data, h, &amp, state)?;
        trajectory.extend(res.trajectory.iter().map(|r| (alpha, *r)));
        let overlap = if data.l_count() == 0 { res.q_emp.abs() } else { res.q_emp };
        out.push(ProtocolPoint {
            alpha,
            q_emp: res.q_emp,
            epsilon: epsilon_of(overlap),
            converged: res.converged,
            diverged: res.diverged,
        });
        state = res.state;
    }
    Ok(ProtocolRun { points: out, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{Matrix, Teacher};

    const VERB: ChannelForm = ChannelForm { label_in_field: false, consistent: false };
    const LIF: ChannelForm = ChannelForm { label_in_field: true, consistent: false };
    const CONS: ChannelForm = ChannelForm { label_in_field: true, consistent: true };

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn channel_trivial_values() {
        assert_eq!(channel_c(0.0, 1.3, 0.2, None, VERB).unwrap(), 0.0);
        let c = channel_c(0.0, 1.0, 0.0, Some(1), VERB).unwrap();
        assert!((c - 2.0 / sqrt(2.0 * core::f64::consts::PI)).abs() < 1e-15);
        let d = channel_d(0.0, 1.0, 0.0, Some(1), VERB).unwrap();
        assert!((d - 2.0 / core::f64::consts::PI).abs() < 1e-15);
        assert_eq!(channel_d(0.0, 1.0, 0.0, None, VERB).unwrap(), 0.0);
        let a = channel_c(0.7, 0.9, 0.0, None, VERB).unwrap();
        let b = channel_c(-0.7, 0.9, 0.0, None, VERB).unwrap();
        assert_eq!(a, -b);
        assert!(channel(0.1, 0.0, 0.0, None, VERB).is_err());
    }

    #[test]
    fn channel_extended_precision_values() {
        // 30-digit evaluations at a = 0.3, b = 2, h = 0.05
        let (a, b, h) = (0.3, 2.0, 0.05);
        let (c, d) = channel(a, b, h, None, VERB).unwrap();
        assert!(close(c, 0.0042519860732990155006559, 1e-12), "{c}");
        assert!(close(d, 0.013553834133702422082458776, 1e-12), "{d}");
        let (c2, d2) = channel(a, b, h, None, CONS).unwrap();
        assert_eq!(c2, c);
        assert!(close(d2, -0.013517675362567364520822997, 1e-12), "{d2}");
        let (c, d) = channel(a, b, h, Some(-1), VERB).unwrap();
        assert!(close(c, -0.48709527450335638167806840, 1e-13), "{c}");
        assert!(close(d, 0.29814871575641965326938081, 1e-13), "{d}");
        let (c, d) = channel(a, b, h, Some(-1), LIF).unwrap();
        assert!(close(c, -0.68011441325788705441256234, 1e-13), "{c}");
        assert!(close(d, 0.34353559280098973980850511, 1e-13), "{d}");
    }

    #[test]
    fn channel_finite_in_far_tails() {
        for &a in &[-60.0, -20.0, -5.0, 5.0, 20.0, 60.0] {
            for &y in &[None, Some(1), Some(-1)] {
                for form in [VERB, LIF, CONS] {
                    let (c, d) = channel(a, 0.01, 0.05, y, form).unwrap();
                    assert!(c.is_finite() && d.is_finite(), "a={a} y={y:?}");
                }
            }
        }
    }

    /// Straight-line transliteration with explicit loops over the rows.
    fn reference_step(s: &AmpState, data: &Dataset, h: f64, form: ChannelForm) -> AmpState {
        let n = data.n();
        let l = data.l_count();
        let rows = l + data.u_count();
        let v = 1.0 / s.kappa;
        let mut a_data = alloc::vec![0.0; rows];
        let mut a_comp = alloc::vec![0.0; n];
        let mut b = 0.0;
        for mu in 0..rows {
            let x = data.row(mu);
            let y = if mu < l { Some(data.labels()[mu]) } else { None };
            let (c, d) = channel(s.a_data[mu], v, h, y, form).unwrap();
            let mut field = 0.0;
            for k in 0..n {
                field += x[k] * s.a_comp[k] / s.kappa;
                a_comp[k] += x[k] * c;
            }
            a_data[mu] = field - c / s.kappa;
            b += d;
        }
        let mut sq = 0.0;
        for k in 0..n {
            a_comp[k] += s.b_scalar * s.a_comp[k];
            sq += s.a_comp[k] * s.a_comp[k];
        }
        AmpState { a_data, kappa: 0.5 * (1.0 + 4.0 * sq / n as f64), a_comp, b_scalar: b / n as f64, t: s.t + 1 }
    }

    fn small_instance() -> (Dataset, AmpState) {
        let data = Dataset::generate(8, 0.05, 2, 2, 17).unwrap();
        let mut s = AmpState::random(8, 4, 0.3, 5).unwrap();
        s.a_data = alloc::vec![0.2, -0.4, 1.1, -0.05];
        s.kappa = 1.7;
        s.b_scalar = 0.3;
        (data, s)
    }

    #[test]
    fn step_matches_transliteration() {
        let (data, s) = small_instance();
        let cfg = AmpConfig::default();
        let got = amp_step(&s, &data, 0.05, &cfg).unwrap();
        let want = reference_step(&s, &data, 0.05, VERB);
        assert_eq!(got.t, 1);
        assert!(close(got.kappa, want.kappa, 1e-14));
        assert!(close(got.b_scalar, want.b_scalar, 1e-12));
        for (a, b) in got.a_data.iter().zip(&want.a_data).chain(got.a_comp.iter().zip(&want.a_comp)) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn step_is_deterministic() {
        let (data, s) = small_instance();
        for cfg in [AmpConfig::default(), AmpConfig::consistent()] {
            let a = amp_step(&s, &data, 0.05, &cfg).unwrap();
            let b = amp_step(&s, &data, 0.05, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_data_keeps_zero_state() {
        let teacher = Teacher::from_vec(alloc::vec![1.0; 5]).unwrap();
        let data =
            Dataset::from_parts(Matrix::zeros(0, 5), Vec::new(), Matrix::zeros(0, 5), 0.0, teacher, 0).unwrap();
        let s = AmpState::zeros(5, 0);
        let next = amp_step(&s, &data, 0.0, &AmpConfig::default()).unwrap();
        assert!(next.a_comp.iter().all(|&a| a == 0.0));
        assert_eq!(next.kappa, 0.5);
        assert_eq!(next.b_scalar, 0.0);
        let next = amp_step(&s, &data, 0.0, &AmpConfig::consistent()).unwrap();
        assert_eq!(next.kappa, 1.0);
        let res = run_amp(&data, 0.0, &AmpConfig::default(), AmpState::random(5, 0, 0.01, 1).unwrap()).unwrap();
        assert!(res.w_hat.iter().all(|&w| w == 0.0));
        assert_eq!(res.q_emp, 0.0);
        assert_eq!(res.epsilon_emp, 0.5);
    }

    #[test]
    fn overlap_cases() {
        let t = Teacher::from_vec(alloc::vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let w = t.weights().to_vec();
        assert!((measure_overlap(&w, &t).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = w.iter().map(|x| -2.0 * x).collect();
        assert!((measure_overlap(&neg, &t).unwrap() + 1.0).abs() < 1e-15);
        let perp = [2.0, -1.0, 0.0, 0.0];
        assert!(measure_overlap(&perp, &t).unwrap().abs() < 1e-15);
        assert!(measure_overlap(&[1.0], &t).is_err());
        assert_eq!(epsilon_of(1.0), 0.0);
        assert_eq!(epsilon_of(-1.0), 1.0);
    }

    #[test]
    fn shape_and_config_checks() {
        let (data, s) = small_instance();
        let mut bad = s.clone();
        bad.a_data.pop();
        assert!(matches!(amp_step(&bad, &data, 0.05, &AmpConfig::default()), Err(AmpError::Shape(_))));
        let cfg = AmpConfig { rel_tol: 0.0, ..AmpConfig::default() };
        assert!(amp_step(&s, &data, 0.05, &cfg).is_err());
        assert!(validate_schedule(&[0.5, 1.0]).is_err());
        assert!(validate_schedule(&[0.0, 1.0, 0.5]).is_err());
        assert!(validate_schedule(&[0.0, 0.5, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn divergence_is_reported_with_finite_state() {
        let (data, s) = small_instance();
        let cfg = AmpConfig { divergence_bound: 1e-3, max_iter: 5, ..AmpConfig::default() };
        assert!(matches!(amp_step(&s, &data, 0.05, &cfg), Err(AmpError::Diverged { t: 1 })));
        let res = run_amp(&data, 0.05, &cfg, s.clone()).unwrap();
        assert!(res.diverged && !res.converged);
        assert_eq!(res.state, s);
    }

    #[test]
    fn consistent_learns_from_labels() {
        let data = Dataset::generate(50, 0.05, 250, 0, 3).unwrap();
        let cfg = AmpConfig { max_iter: 200, record_trajectory: true, ..AmpConfig::consistent() };
        let init = AmpState::random(50, 250, 1e-2, 4).unwrap();
        let res = run_amp(&data, 0.05, &cfg, init).unwrap();
        assert!(res.q_emp > 0.8, "{}", res.q_emp);
        assert!(!res.diverged);
        assert_eq!(res.trajectory.len(), res.iterations_used);
        assert!(res.trajectory.iter().all(|r| r.kappa >= 0.5));
    }

    #[test]
    fn protocol_appends_labels_and_runs() {
        let t = crate::synthdata::sample_teacher(20, 1).unwrap();
        let cfg = ProtocolConfig { amp: AmpConfig::consistent(), pretrain_max_iter: 50, init_variance: 1e-2 };
        let run = protocol_sample(&t, 0.05, 0.05, 5.0, &[0.0, 1.0, 3.0], &cfg, 9).unwrap();
        assert!(run.trajectory.is_empty());
        let pts = run.points;
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.epsilon)));
        assert!(pts[0].epsilon <= 0.5);
        let again = protocol_sample(&t, 0.05, 0.05, 5.0, &[0.0, 1.0, 3.0], &cfg, 9).unwrap();
        assert_eq!(pts, again.points);
        let traced = ProtocolConfig { amp: AmpConfig { record_trajectory: true, ..cfg.amp }, ..cfg };
        let run = protocol_sample(&t, 0.05, 0.05, 5.0, &[0.0, 1.0, 3.0], &traced, 9).unwrap();
        assert_eq!(run.points, pts);
        assert!(run.trajectory.iter().any(|(a, _)| *a == 3.0));
        assert!(protocol_sample(&t, 0.05, 0.05, 5.0, &[1.0], &cfg, 9).is_err());
    }
}
