use rand::Rng as _;
use rand_distr::StandardNormal;
use semiperc_core::rng::stream;
use semiperc_core::synthdata::dot;
use semiperc_core::Dataset;
use semiperc_oracle::{posterior_sample_overlap, McmcConfig};

const BINS: usize = 20;

fn bin(overlap: f64) -> usize {
    (((overlap + 1.0) * 0.5 * BINS as f64) as usize).min(BINS - 1)
}

fn allowed(data: &Dataset, w: &[f64], h: f64) -> bool {
    let s = (data.n() as f64).sqrt();
    let lab = (0..data.l_count()).all(|mu| f64::from(data.labels()[mu]) * dot(data.labeled().row(mu), w) / s > h);
    let unl = (0..data.u_count()).all(|mu| (dot(data.unlabeled().row(mu), w) / s).abs() > h);
    lab && unl
}

#[test]
fn metropolis_matches_rejection_sampling() {
    let n = 4;
    let h = 0.3;
    let data = Dataset::generate(n, h, 1, 1, 21).unwrap();
    let samples = 1_000_000;

    // uniform prior on the sphere filtered by the constraints
    let mut rng = stream(77, 0);
    let mut reference = [0.0f64; BINS];
    let mut kept = 0;
    while kept < samples {
        let mut w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let scale = (n as f64 / dot(&w, &w)).sqrt();
        w.iter_mut().for_each(|x| *x *= scale);
        if allowed(&data, &w, h) {
            reference[bin(dot(&w, data.teacher().weights()) / n as f64)] += 1.0;
            kept += 1;
        }
    }

    let cfg = McmcConfig { n_sweeps: samples + 10_000, burn_in: 10_000, proposal_step: 0.5, tune: true, seed: 4 };
    let summary = posterior_sample_overlap(&data, h, &cfg).unwrap();
    let mut chain = [0.0f64; BINS];
    for &o in &summary.trace {
        chain[bin(o)] += 1.0;
    }
    let tv: f64 = reference
        .iter()
        .zip(&chain)
        .map(|(r, c)| (r / samples as f64 - c / summary.samples as f64).abs())
        .sum::<f64>()
        * 0.5;
    assert!(tv < 0.05, "total variation {tv}");
    assert!(summary.acceptance > 0.2 && summary.acceptance < 0.5, "{}", summary.acceptance);
}
