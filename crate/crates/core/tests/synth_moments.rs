use rayon::prelude::*;
use tempfield::eval::{synth_generate, SynthConfig};

/// Averaging the residual sample covariance over independent worlds
/// estimates E[Σ] = Ψ / (δ − p − 1), which is the planted target covariance.
#[test]
fn residual_covariance_matches_inverse_wishart_mean() {
    let worlds = 200u64;
    let base = SynthConfig {
        p: 4,
        g: 3,
        n: 10_000,
        delta: 30.0,
        ..SynthConfig::default()
    };
    let covs: Vec<_> = (0..worlds)
        .into_par_iter()
        .map(|seed| {
            let (_, obs, truth) = synth_generate::<f64>(&SynthConfig { seed, ..base.clone() }).unwrap();
            let resid = &obs.values - &truth.z * &truth.b;
            let means = resid.row_mean();
            let centred = nalgebra::DMatrix::from_fn(resid.nrows(), 4, |i, j| resid[(i, j)] - means[j]);
            (
                centred.transpose() * &centred / (resid.nrows() as f64 - 1.0),
                truth.target_cov,
            )
        })
        .collect();
    let mut mean = nalgebra::DMatrix::zeros(4, 4);
    for (c, _) in &covs {
        mean += c;
    }
    mean /= worlds as f64;
    // the station layout changes with the seed, so compare against the
    // average target as well
    let mut target = nalgebra::DMatrix::zeros(4, 4);
    for (_, t) in &covs {
        target += t;
    }
    target /= worlds as f64;
    let rel = (&mean - &target).norm() / target.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}
