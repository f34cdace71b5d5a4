//! Random-walk Metropolis on the sphere `|w|^2 = N` under hard margin
//! constraints.
//!
//! The prior is uniform on the sphere and every datum contributes an
//! indicator, `y x.w / sqrt(N) > h` when labelled and `|x.w| / sqrt(N) > h`
//! otherwise, so a proposal is accepted exactly when it satisfies all of
//! them.

use rand::Rng as _;
use rand_distr::StandardNormal;
use semiperc_core::rng::{stream, Rng};
use semiperc_core::synthdata::dot;
use semiperc_core::Dataset;
use thiserror::Error;

/// Largest dimension the sampler accepts.
pub const MAX_N: usize = 32;
const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McmcError {
    #[error("invalid sampler configuration: {0}")]
    Config(&'static str),
    #[error("dimension {0} exceeds the desk-scale limit {MAX_N}")]
    TooLarge(usize),
    #[error("the teacher violates the margin h = {0}; no feasible starting point")]
    Infeasible(f64),
    #[error("no proposal was accepted in {0} attempts")]
    ZeroAcceptance(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    /// A sweep is `N` proposals; one sample is recorded per sweep.
    pub n_sweeps: usize,
    pub burn_in: usize,
    /// Standard deviation of the Gaussian kick before projection.
    pub proposal_step: f64,
    /// Adapts the step towards 30% acceptance during burn-in.
    pub tune: bool,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { n_sweeps: 20_000, burn_in: 2_000, proposal_step: 0.3, tune: true, seed: 1 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.burn_in >= self.n_sweeps {
            return Err(McmcError::Config("burn_in must be smaller than n_sweeps"));
        }
        if self.n_sweeps - self.burn_in < BATCHES {
            return Err(McmcError::Config("too few recorded sweeps for batch error bars"));
        }
        if !(self.proposal_step > 0.0 && self.proposal_step.is_finite()) {
            return Err(McmcError::Config("proposal_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcSummary {
    /// Posterior mean of `w . w0 / N`.
    pub mean_overlap: f64,
    /// Batch-means standard error of `mean_overlap`.
    pub std_error: f64,
    /// Cosine between the posterior-mean vector and the teacher.
    pub estimator_overlap: f64,
    /// Jackknife standard error of `estimator_overlap` over batches.
    pub estimator_std_error: f64,
    /// Accepted fraction of proposals after burn-in.
    pub acceptance: f64,
    pub proposal_step: f64,
    pub samples: usize,
    /// Recorded `w . w0 / N` per sweep.
    pub trace: Vec<f64>,
}

fn feasible(data: &Dataset, w: &[f64], h: f64) -> bool {
    let inv = 1.0 / (data.n() as f64).sqrt();
    let labeled = data.labeled().row_iter().zip(data.labels()).all(|(x, &y)| f64::from(y) * dot(x, w) * inv > h);
    labeled && data.unlabeled().row_iter().all(|x| (dot(x, w) * inv).abs() > h)
}

fn propose(rng: &mut Rng, w: &[f64], step: f64, out: &mut [f64]) {
    for (o, &wi) in out.iter_mut().zip(w) {
        let kick: f64 = rng.sample(StandardNormal);
        *o = wi + step * kick;
    }
    let scale = (w.len() as f64 / dot(out, out)).sqrt();
    out.iter_mut().for_each(|o| *o *= scale);
}

/// Samples the posterior of `w` given `data` under margin `h`, starting
/// from the teacher.
pub fn posterior_sample_overlap(data: &Dataset, h: f64, cfg: &McmcConfig) -> Result<McmcSummary, McmcError> {
    cfg.validate()?;
    let n = data.n();
    if n > MAX_N {
        return Err(McmcError::TooLarge(n));
    }
    let w0 = data.teacher().weights();
    let mut w = w0.to_vec();
    if !feasible(data, &w, h) {
        return Err(McmcError::Infeasible(h));
    }
    let mut rng = stream(cfg.seed, 0);
    let mut trial = vec![0.0; n];
    let mut step = cfg.proposal_step;
    let recorded = cfg.n_sweeps - cfg.burn_in;
    let mut trace = Vec::with_capacity(recorded);
    let batch_len = recorded / BATCHES;
    let mut batch_sums = vec![vec![0.0; n]; BATCHES];
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    for sweep in 0..cfg.n_sweeps {
        let mut window_acc = 0usize;
        for _ in 0..n {
            propose(&mut rng, &w, step, &mut trial);
            if feasible(data, &trial, h) {
                std::mem::swap(&mut w, &mut trial);
                window_acc += 1;
            }
        }
        if sweep < cfg.burn_in {
            if cfg.tune {
                let rate = window_acc as f64 / n as f64;
                step *= if rate > 0.3 { 1.05 } else { 0.95 };
                step = step.clamp(1e-6, 10.0);
            }
            continue;
        }
        accepted += window_acc;
        attempts += n;
        trace.push(dot(&w, w0) / n as f64);
        let b = ((sweep - cfg.burn_in) / batch_len.max(1)).min(BATCHES - 1);
        batch_sums[b].iter_mut().zip(&w).for_each(|(s, x)| *s += x);
    }
    if accepted == 0 {
        return Err(McmcError::ZeroAcceptance(attempts));
    }

    let samples = trace.len();
    let mean_overlap = trace.iter().sum::<f64>() / samples as f64;
    let batch_means: Vec<f64> = batches(&trace).map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
    let std_error = std_of_mean(&batch_means);

    let cosine = |v: &[f64]| dot(v, w0) / (dot(v, v) * dot(w0, w0)).sqrt();
    let total: Vec<f64> = (0..n).map(|k| batch_sums.iter().map(|s| s[k]).sum()).collect();
    let estimator_overlap = cosine(&total);
    let jack: Vec<f64> = batch_sums
        .iter()
        .map(|s| {
            let v: Vec<f64> = total.iter().zip(s).map(|(t, x)| t - x).collect();
            cosine(&v)
        })
        .collect();
    let jm = jack.iter().sum::<f64>() / BATCHES as f64;
    let jvar = jack.iter().map(|j| (j - jm) * (j - jm)).sum::<f64>() * (BATCHES - 1) as f64 / BATCHES as f64;

    Ok(McmcSummary {
        mean_overlap,
        std_error,
        estimator_overlap,
        estimator_std_error: jvar.sqrt(),
        acceptance: accepted as f64 / attempts as f64,
        proposal_step: step,
        samples,
        trace,
    })
}

fn batches(trace: &[f64]) -> impl Iterator<Item = &[f64]> {
    let len = trace.len() / BATCHES;
    (0..BATCHES).map(move |b| if b + 1 == BATCHES { &trace[b * len..] } else { &trace[b * len..(b + 1) * len] })
}

fn std_of_mean(xs: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / k;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0) / k).sqrt()
}
