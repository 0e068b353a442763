//! Posterior sampling without a Markov chain.
//!
//! Every frequency's posterior is one-dimensional, so a posterior image is
//! one independent draw per frequency plus an inverse transform, and the
//! posterior mean (MMSE estimate) is a quadrature, not an MCMC average.
//! This example draws a handful of posterior images, compares MAP with
//! MMSE, and shows the Monte Carlo mean of posterior images converging to
//! the MMSE image.
//!
//! Run with `cargo run --release --example posterior_sampling`.

use bifs::image::save_image;
use bifs::map::{reconstruct_map, MapConfig};
use bifs::metrics::metrics;
use bifs::prior::{LikelihoodSpec, PriorSpec};
use bifs::paramfn::ParamFn;
use bifs::kspace::forward_transform;
use bifs::sample::{mmse_estimate, sample_posterior_image, SampleConfig};
use bifs::synth::{add_noise, make_phantom, NoiseModel};

fn main() -> bifs::Result<()> {
    let out_dir = std::path::Path::new("examples-output/posterior_sampling");
    std::fs::create_dir_all(out_dir)?;

    let size = 64;
    let noise_sd = 2.5;
    let (clean, _) = make_phantom(size, size)?;
    let noisy = add_noise(&clean, NoiseModel::Gaussian { sd: noise_sd }, 11)?;
    let sigma = noise_sd / std::f64::consts::SQRT_2;
    let lik = LikelihoodSpec::rician(sigma)?;
    let prior_fn = ParamFn::inverse_power(1.0, 2.0)?
        .scale_to_data_power(&forward_transform(&noisy)?)?;
    let prior = PriorSpec::exponential(prior_fn);

    // Independent posterior draws: distinct seeds, no chain, no burn-in.
    let cfg = SampleConfig {
        proposal_grid_points: 1024,
        ..Default::default()
    };
    for seed in 0..4 {
        let draw = sample_posterior_image(&noisy, &prior, &lik, &SampleConfig { rng_seed: seed, ..cfg })?;
        save_image(&draw, out_dir.join(format!("posterior_draw_{seed}.png")), true)?;
    }

    let map = reconstruct_map(&noisy, &prior, &lik, &MapConfig::default())?;
    let mmse = mmse_estimate(&noisy, &prior, &lik, &cfg)?;
    save_image(&map.image, out_dir.join("map.png"), true)?;
    save_image(&mmse.image, out_dir.join("mmse.png"), true)?;
    println!(
        "map rmse = {:.3}, mmse rmse = {:.3}",
        metrics(&map.image, &clean, None)?.rmse.unwrap(),
        metrics(&mmse.image, &clean, None)?.rmse.unwrap(),
    );

    // The pixel-wise mean of n posterior images approaches the MMSE image
    // at the plain Monte Carlo rate.
    for n in [25usize, 100, 400] {
        let mut acc = vec![0.0; clean.len()];
        for seed in 0..n {
            let draw = sample_posterior_image(
                &noisy,
                &prior,
                &lik,
                &SampleConfig { rng_seed: 1000 + seed as u64, ..cfg },
            )?;
            for (a, v) in acc.iter_mut().zip(draw.data()) {
                *a += v;
            }
        }
        let max_gap = acc
            .iter()
            .zip(mmse.image.data())
            .map(|(a, m)| (a / n as f64 - m).abs())
            .fold(0.0, f64::max);
        println!("mean of {n:>3} posterior images: max gap to mmse = {max_gap:.4}");
    }
    println!("wrote images to {}", out_dir.display());
    Ok(())
}
