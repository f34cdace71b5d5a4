//! Parallel ensembles of the pretrain-then-fine-tune protocol.

use rayon::prelude::*;
use semiperc_core::amp::{protocol_sample, ProtocolConfig, ProtocolPoint, TrajectoryRow};
use semiperc_core::rng::derive_seed;
use semiperc_core::synthdata::sample_teacher;

use crate::error::Result;

const TAG_TEACHER: u64 = 0x7465_6163_6865_7200;

/// Ensemble statistics at one `(beta, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleRow {
    pub beta: f64,
    pub alpha: f64,
    pub mean_epsilon: f64,
    /// NaN for a single sample.
    pub stderr_epsilon: f64,
    pub diverged_count: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub rows: Vec<EnsembleRow>,
    /// Iteration log of sample 0 when requested.
    pub trajectory: Vec<(f64, TrajectoryRow)>,
}

/// Seed of sample `index` at `beta`.
pub fn sample_seed(master: u64, beta: f64, index: usize) -> u64 {
    derive_seed(derive_seed(master, beta.to_bits()), index as u64)
}

/// Runs `n_samples` independent instances, each with its own teacher and
/// data, on the current rayon pool. Results are merged in sample order, so
/// the output does not depend on the number of workers.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune_protocol(
    n: usize,
    g: f64,
    h: f64,
    beta: f64,
    schedule: &[f64],
    n_samples: usize,
    cfg: &ProtocolConfig,
    seed: u64,
    trace_first: bool,
) -> Result<EnsembleOutput> {
    let runs: Vec<_> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let sseed = sample_seed(seed, beta, s);
            let teacher = sample_teacher(n, derive_seed(sseed, TAG_TEACHER))?;
            let mut c = *cfg;
            c.amp.record_trajectory = trace_first && s == 0;
            Ok(protocol_sample(&teacher, g, h, beta, schedule, &c, sseed)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let trajectory = runs.first().map(|r| r.trajectory.clone()).unwrap_or_default();
    let rows = schedule
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let pts: Vec<&ProtocolPoint> = runs.iter().map(|r| &r.points[i]).collect();
            summarize(beta, alpha, &pts)
        })
        .collect();
    Ok(EnsembleOutput { rows, trajectory })
}

fn summarize(beta: f64, alpha: f64, pts: &[&ProtocolPoint]) -> EnsembleRow {
    let k = pts.len() as f64;
    let mean = pts.iter().map(|p| p.epsilon).sum::<f64>() / k;
    let stderr = if pts.len() > 1 {
        let var = pts.iter().map(|p| (p.epsilon - mean) * (p.epsilon - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        f64::NAN
    };
    EnsembleRow {
        beta,
        alpha,
        mean_epsilon: mean,
        stderr_epsilon: stderr,
        diverged_count: pts.iter().filter(|p| p.diverged).count(),
        n_samples: pts.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use semiperc_core::amp::AmpConfig;

    #[test]
    fn independent_of_worker_count() {
        let cfg = ProtocolConfig { amp: AmpConfig::consistent(), pretrain_max_iter: 20, init_variance: 1e-2 };
        let run = |workers| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
            pool.install(|| fine_tune_protocol(12, 0.05, 0.05, 4.0, &[0.0, 1.0, 2.0], 5, &cfg, 3, true)).unwrap()
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        assert!(!a.trajectory.is_empty());
        assert!(a.rows.iter().all(|r| r.n_samples == 5 && r.stderr_epsilon >= 0.0));
    }

    #[test]
    fn single_sample_has_no_stderr() {
        let cfg = ProtocolConfig { amp: AmpConfig::consistent(), pretrain_max_iter: 5, init_variance: 1e-2 };
        let out = fine_tune_protocol(8, 0.05, 0.05, 2.0, &[0.0], 1, &cfg, 1, false).unwrap();
        assert!(out.rows[0].stderr_epsilon.is_nan());
        assert!(out.trajectory.is_empty());
    }
}
