//! Plain Monte Carlo posterior machinery: per-frequency samples, posterior
//! images, posterior means (MMSE), and prior-predictive simulation.
//!
//! Posteriors factorize over frequencies, so every draw is independent —
//! there is no Markov chain, no burn-in, and no mixing diagnostics. Modulus
//! samples come from a tabulated inverse CDF of the 1-D posterior; each
//! frequency has its own counter-derived RNG seed, which makes image draws
//! reproducible and independent of the parallel schedule.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{
    argument, forward_transform, hermitian_symmetrize, inverse_transform, ComplexField, KGrid,
    RealGrid,
};
use crate::map::map_argument_self_conjugate;
use crate::metrics::ReconstructionResult;
use crate::prior::{rician_argument_logpdf, LikelihoodSpec, PriorSpec, ResolvedPrior};

/// How the argument (phase) is treated in posterior samples and means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArgumentModel {
    /// Keep the data argument. With a uniform circular prior and a
    /// likelihood symmetric about the observed argument, the argument
    /// posterior is symmetric about the data value, so this is its center.
    #[default]
    FixedAtData,
    /// Draw the argument from its posterior under the Rician argument
    /// likelihood (plug-in modulus).
    RicianPosterior,
}

#[derive(Debug, Clone, Copy)]
pub struct SampleConfig {
    pub n_samples: usize,
    pub rng_seed: u64,
    /// Resolution of the inverse-CDF tabulation.
    pub proposal_grid_points: usize,
    pub argument_model: ArgumentModel,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_samples: 1,
            rng_seed: 0,
            proposal_grid_points: 4096,
            argument_model: ArgumentModel::FixedAtData,
        }
    }
}

impl SampleConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.proposal_grid_points < 16 {
            return Err(Error::Domain(
                "SampleConfig needs n_samples >= 1 and proposal_grid_points >= 16".into(),
            ));
        }
        Ok(())
    }
}

/// Per-frequency RNG seed, mixed so that neighboring frequencies and seeds
/// decorrelate (splitmix64 finalizer).
pub(crate) fn point_seed(seed: u64, kx: i32, ky: i32) -> u64 {
    let mut z = seed ^ (((kx as u32 as u64) << 32) | (ky as u32 as u64));
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Normalized tabulation of a 1-D density on `[lo, hi]`.
struct Tabulated {
    lo: f64,
    step: f64,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
}

impl Tabulated {
    /// Locate the bulk of the density by repeatedly zooming a coarse scan
    /// of `[0, wide_hi]`, then tabulate `n` points across the final window.
    ///
    /// `must_cover` (typically the likelihood bulk around the observed
    /// modulus) is always included in the window: a spike much narrower
    /// than the coarse scan step would otherwise be invisible when a broad
    /// prior dominates the scan.
    fn build(
        logpdf: &dyn Fn(f64) -> f64,
        wide_hi: f64,
        must_cover: Option<(f64, f64)>,
        n: usize,
    ) -> Result<Tabulated> {
        let wide_hi = wide_hi.max(1e-12);
        let (mut lo, mut hi) = (0.0, wide_hi);
        for _ in 0..12 {
            let (nlo, nhi) = scan_window(logpdf, lo, hi)?;
            let shrunk = (nhi - nlo) < 0.6 * (hi - lo);
            lo = nlo;
            hi = nhi;
            if !shrunk {
                break;
            }
        }
        if let Some((a, b)) = must_cover {
            lo = lo.min(a.max(0.0));
            hi = hi.max(b.min(wide_hi)).max(lo + 1e-12);
        }

        let step = (hi - lo) / n as f64;
        let logs: Vec<f64> = (0..=n).map(|i| logpdf(lo + i as f64 * step)).collect();
        let log_max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !log_max.is_finite() {
            return Err(Error::Sampling(
                "posterior density is not finite anywhere on the proposal range".into(),
            ));
        }
        let mut pdf: Vec<f64> = logs.iter().map(|v| (v - log_max).exp()).collect();
        let mut cdf = vec![0.0; n + 1];
        for i in 1..=n {
            cdf[i] = cdf[i - 1] + 0.5 * (pdf[i - 1] + pdf[i]) * step;
        }
        let total = cdf[n];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Sampling(format!(
                "posterior density is unnormalizable (mass {total})"
            )));
        }
        for v in &mut cdf {
            *v /= total;
        }
        for v in &mut pdf {
            *v /= total;
        }
        Ok(Tabulated { lo, step, pdf, cdf })
    }

    /// Inverse-CDF draw with linear interpolation inside the cell.
    fn sample(&self, u: f64) -> f64 {
        let idx = self.cdf.partition_point(|&c| c < u);
        if idx == 0 {
            return self.lo;
        }
        if idx >= self.cdf.len() {
            return self.lo + (self.cdf.len() - 1) as f64 * self.step;
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.lo + ((idx - 1) as f64 + frac) * self.step
    }

    #[cfg(test)]
    fn cdf_at(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let idx = pos.floor() as usize;
        if idx + 1 >= self.cdf.len() {
            return 1.0;
        }
        let frac = pos - idx as f64;
        self.cdf[idx] + frac * (self.cdf[idx + 1] - self.cdf[idx])
    }

    fn mean(&self) -> f64 {
        let mut m = 0.0;
        for i in 1..self.pdf.len() {
            let x0 = self.lo + (i - 1) as f64 * self.step;
            let x1 = x0 + self.step;
            m += 0.5 * (x0 * self.pdf[i - 1] + x1 * self.pdf[i]) * self.step;
        }
        m
    }
}

/// One coarse scan pass: the sub-interval where the log density sits
/// within 40 of its maximum, padded by one step.
fn scan_window(logpdf: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    const COARSE: usize = 512;
    const LOG_WINDOW: f64 = 40.0;
    let step = (hi - lo) / COARSE as f64;
    let vals: Vec<f64> = (0..=COARSE).map(|i| logpdf(lo + i as f64 * step)).collect();
    let log_max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !log_max.is_finite() {
        return Err(Error::Sampling(
            "posterior density is not finite anywhere on the proposal range".into(),
        ));
    }
    let first = vals.iter().position(|&v| v > log_max - LOG_WINDOW).unwrap();
    let last = vals.iter().rposition(|&v| v > log_max - LOG_WINDOW).unwrap();
    Ok((
        lo + first.saturating_sub(1) as f64 * step,
        lo + (last + 1).min(COARSE) as f64 * step,
    ))
}

fn modulus_posterior(
    prior_k: &ResolvedPrior,
    lik: &LikelihoodSpec,
    r: f64,
    grid_points: usize,
) -> Result<Tabulated> {
    let p = *prior_k;
    let l = *lik;
    let logpost = move |rho: f64| {
        p.logpdf(rho) + l.modulus_logpdf(r, rho).unwrap_or(f64::NEG_INFINITY)
    };
    let sigma = lik.sigma();
    let wide_hi = f64::max(r + 12.0 * sigma, 13.0 * prior_k.scale());
    let lik_bulk = ((r - 12.0 * sigma).max(0.0), r + 12.0 * sigma);
    Tabulated::build(&logpost, wide_hi, Some(lik_bulk), grid_points)
}

/// Quadrature posterior mean of the modulus at one frequency.
pub fn posterior_mean_modulus(
    prior_k: &ResolvedPrior,
    lik: &LikelihoodSpec,
    r: f64,
    grid_points: usize,
) -> Result<f64> {
    if let Some(point) = prior_k.point_mass() {
        return Ok(point);
    }
    Ok(modulus_posterior(prior_k, lik, r, grid_points)?.mean())
}

/// Tabulated posterior for the argument under the Rician argument
/// likelihood with plug-in modulus `rho`, centered on the data argument
/// `psi` (the posterior is symmetric about it).
fn argument_posterior(
    psi: f64,
    rho: f64,
    lik: &LikelihoodSpec,
    grid_points: usize,
) -> Result<Tabulated> {
    let LikelihoodSpec::RicianFourier { sigma } = *lik else {
        return Err(Error::Sampling(
            "the Rician argument posterior requires the Rician likelihood".into(),
        ));
    };
    // Tabulate the offset delta = theta - psi on [-pi, pi): the likelihood
    // depends only on the offset.
    let logpdf = move |x: f64| {
        let delta = x - std::f64::consts::PI;
        rician_argument_logpdf(delta.clamp(-std::f64::consts::PI, std::f64::consts::PI - 1e-15), rho, 0.0, sigma)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let table = Tabulated::build(&logpdf, 2.0 * std::f64::consts::PI, None, grid_points)?;
    // Shift is applied by the caller: sample() returns x in [0, 2 pi),
    // delta = x - pi, theta = psi + delta.
    let _ = psi;
    Ok(table)
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x >= PI {
        x -= 2.0 * PI;
    }
    x
}

/// Monte Carlo samples of the complex posterior at a single frequency.
pub fn sample_posterior_k(
    prior_k: &ResolvedPrior,
    lik: &LikelihoodSpec,
    data_k: Complex64,
    cfg: &SampleConfig,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    let r = data_k.norm();
    let psi = argument(data_k);
    if let Some(point) = prior_k.point_mass() {
        // Degenerate prior: the posterior is the same point mass.
        return Ok(vec![Complex64::from_polar(point, psi); cfg.n_samples]);
    }
    let table = modulus_posterior(prior_k, lik, r, cfg.proposal_grid_points)?;
    let arg_table = match cfg.argument_model {
        ArgumentModel::FixedAtData => None,
        ArgumentModel::RicianPosterior => Some(argument_posterior(
            psi,
            table.mean(),
            lik,
            cfg.proposal_grid_points,
        )?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let rho = table.sample(rng.gen::<f64>());
        let theta = match &arg_table {
            None => psi,
            Some(t) => {
                let delta = t.sample(rng.gen::<f64>()) - std::f64::consts::PI;
                wrap_angle(psi + delta)
            }
        };
        out.push(Complex64::from_polar(rho, theta));
    }
    Ok(out)
}

/// One posterior draw per frequency, assembled into a real image.
///
/// Seeds are derived per frequency from `(rng_seed, k)`, so the result is
/// reproducible and independent of evaluation order. The origin keeps the
/// data value (improper uniform prior); self-conjugate frequencies keep
/// their sign from the data.
pub fn sample_posterior_image(
    y: &RealGrid,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    cfg: &SampleConfig,
) -> Result<RealGrid> {
    cfg.validate()?;
    let data = forward_transform(y)?;
    let grid = *data.grid();
    let points = solve_points(&grid);

    let drawn: Vec<((i32, i32), Complex64)> = points
        .par_iter()
        .map(|&(kx, ky)| -> Result<((i32, i32), Complex64)> {
            let one = || -> Result<Complex64> {
                let value = data.value_at(kx, ky);
                let resolved = prior.resolve(&grid, kx, ky)?;
                let per_k = SampleConfig {
                    n_samples: 1,
                    rng_seed: point_seed(cfg.rng_seed, kx, ky),
                    // Self-conjugate values stay on the real line.
                    argument_model: if grid.is_self_conjugate(kx, ky) {
                        ArgumentModel::FixedAtData
                    } else {
                        cfg.argument_model
                    },
                    ..*cfg
                };
                let sample = sample_posterior_k(&resolved, lik, value, &per_k)?[0];
                if grid.is_self_conjugate(kx, ky) {
                    Ok(Complex64::from_polar(
                        sample.norm(),
                        map_argument_self_conjugate(value),
                    ))
                } else {
                    Ok(sample)
                }
            };
            one().map(|v| ((kx, ky), v)).map_err(|e| e.at_frequency(kx, ky))
        })
        .collect::<Result<_>>()?;

    let mut field = ComplexField::zeros(grid);
    field.set_value(0, 0, data.value_at(0, 0));
    for ((kx, ky), v) in drawn {
        field.set_value(kx, ky, v);
    }
    inverse_transform(&hermitian_symmetrize(&field))
}

/// Posterior-mean (minimum mean squared error) reconstruction.
///
/// The per-frequency posterior mean of the complex value is the quadrature
/// mean of the modulus posterior times the argument factor; by linearity
/// of the inverse transform the assembled image is the posterior-mean
/// image. Under `FixedAtData` the argument factor is `e^{i psi}`; under
/// `RicianPosterior` it shrinks by `E[cos(theta - psi)]` computed from the
/// argument posterior at the plug-in mean modulus.
pub fn mmse_estimate(
    y: &RealGrid,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    cfg: &SampleConfig,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let data = forward_transform(y)?;
    let grid = *data.grid();
    let points = solve_points(&grid);

    let solved: Vec<((i32, i32), Complex64)> = points
        .par_iter()
        .map(|&(kx, ky)| -> Result<((i32, i32), Complex64)> {
            let one = || -> Result<Complex64> {
                let value = data.value_at(kx, ky);
                let resolved = prior.resolve(&grid, kx, ky)?;
                let mean_mod = match resolved.point_mass() {
                    Some(point) => point,
                    None => {
                        modulus_posterior(&resolved, lik, value.norm(), cfg.proposal_grid_points)?
                            .mean()
                    }
                };
                if grid.is_self_conjugate(kx, ky) {
                    return Ok(Complex64::from_polar(
                        mean_mod,
                        map_argument_self_conjugate(value),
                    ));
                }
                let psi = argument(value);
                match cfg.argument_model {
                    ArgumentModel::FixedAtData => Ok(Complex64::from_polar(mean_mod, psi)),
                    ArgumentModel::RicianPosterior => {
                        let t = argument_posterior(psi, mean_mod, lik, cfg.proposal_grid_points)?;
                        // E[cos(delta)] over the tabulated posterior.
                        let mut shrink = 0.0;
                        let mut mass = 0.0;
                        for i in 1..t.pdf.len() {
                            let x0 = t.lo + (i - 1) as f64 * t.step - std::f64::consts::PI;
                            let x1 = x0 + t.step;
                            shrink += 0.5 * (x0.cos() * t.pdf[i - 1] + x1.cos() * t.pdf[i]) * t.step;
                            mass += 0.5 * (t.pdf[i - 1] + t.pdf[i]) * t.step;
                        }
                        Ok(Complex64::from_polar(mean_mod * shrink / mass, psi))
                    }
                }
            };
            one().map(|v| ((kx, ky), v)).map_err(|e| e.at_frequency(kx, ky))
        })
        .collect::<Result<_>>()?;

    let mut field = ComplexField::zeros(grid);
    field.set_value(0, 0, data.value_at(0, 0));
    for ((kx, ky), v) in solved {
        field.set_value(kx, ky, v);
    }
    let image = inverse_transform(&hermitian_symmetrize(&field))?;
    let mut result = ReconstructionResult::new(image);
    result.diagnostics.timing_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}

/// Draw an image from the prior itself.
///
/// Modulus from the prior at each half-plane frequency, argument uniform
/// on the circle, origin pinned to 0 (the improper origin prior has no
/// marginal sampler; the zero-mean representative is used).
pub fn sample_prior_image(prior: &PriorSpec, grid: &KGrid, cfg: &SampleConfig) -> Result<RealGrid> {
    cfg.validate()?;
    let points = solve_points(grid);
    let drawn: Vec<((i32, i32), Complex64)> = points
        .par_iter()
        .map(|&(kx, ky)| -> Result<((i32, i32), Complex64)> {
            let resolved = prior
                .resolve(grid, kx, ky)
                .map_err(|e| e.at_frequency(kx, ky))?;
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(cfg.rng_seed, kx, ky));
            let rho = draw_prior_modulus(&resolved, &mut rng);
            let phi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            Ok(((kx, ky), Complex64::from_polar(rho, phi)))
        })
        .collect::<Result<_>>()?;

    let mut field = ComplexField::zeros(*grid);
    for ((kx, ky), v) in drawn {
        field.set_value(kx, ky, v);
    }
    inverse_transform(&hermitian_symmetrize(&field))
}

fn draw_prior_modulus(prior: &ResolvedPrior, rng: &mut ChaCha8Rng) -> f64 {
    match *prior {
        ResolvedPrior::Exponential { mean } => -mean * (1.0 - rng.gen::<f64>()).ln(),
        ResolvedPrior::SqrtExponential { mean_power } => {
            (-mean_power * (1.0 - rng.gen::<f64>()).ln()).sqrt()
        }
        ResolvedPrior::TruncGaussian { mean, sd } => {
            let normal = rand_distr::Normal::new(mean, sd).unwrap();
            // mu >= 0 makes acceptance at least one half.
            loop {
                let v = normal.sample(rng);
                if v >= 0.0 {
                    return v;
                }
            }
        }
    }
}

fn solve_points(grid: &KGrid) -> Vec<(i32, i32)> {
    grid.points()
        .filter(|&(kx, ky)| {
            (kx, ky) != (0, 0) && (grid.is_canonical(kx, ky) || grid.is_self_conjugate(kx, ky))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{map_modulus_exponential, MapConfig};
    use crate::paramfn::ParamFn;
    use crate::prior::rician_logpdf;

    fn exp_prior(m: f64) -> ResolvedPrior {
        ResolvedPrior::Exponential { mean: m }
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn degenerate_noise_concentrates_on_data() {
        let lik = LikelihoodSpec::rician(1e-6).unwrap();
        let cfg = SampleConfig {
            n_samples: 200,
            rng_seed: 1,
            ..Default::default()
        };
        let data = Complex64::from_polar(5.0, 0.7);
        let samples = sample_posterior_k(&exp_prior(2.0), &lik, data, &cfg).unwrap();
        for s in samples {
            assert!((s.norm() - 5.0).abs() < 1e-3);
            assert!((argument(s) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_mean_matches_quadrature_mean() {
        let (r, sigma, m) = (5.0, 1.0, 2.0);
        let lik = LikelihoodSpec::rician(sigma).unwrap();
        let prior = exp_prior(m);
        let cfg = SampleConfig {
            n_samples: 100_000,
            rng_seed: 42,
            ..Default::default()
        };
        let samples =
            sample_posterior_k(&prior, &lik, Complex64::new(r, 0.0), &cfg).unwrap();
        let moduli: Vec<f64> = samples.iter().map(|s| s.norm()).collect();
        let n = moduli.len() as f64;
        let mean = moduli.iter().sum::<f64>() / n;
        let sd = (moduli.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

        // Independent quadrature oracle on the raw densities.
        let logpost = |rho: f64| {
            rician_logpdf(r, rho, sigma).unwrap_or(f64::NEG_INFINITY) - rho / m
        };
        let z = simpson(|x| logpost(x).exp(), 0.0, r + 12.0 * sigma, 4000);
        let expect = simpson(|x| x * logpost(x).exp(), 0.0, r + 12.0 * sigma, 4000) / z;

        let se = sd / n.sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "mean {mean} vs quadrature {expect} (se {se})"
        );
    }

    #[test]
    fn sample_histogram_matches_tabulated_cdf() {
        let (r, sigma, m) = (3.0, 1.0, 2.0);
        let lik = LikelihoodSpec::rician(sigma).unwrap();
        let prior = exp_prior(m);
        let cfg = SampleConfig {
            n_samples: 10_000,
            rng_seed: 7,
            ..Default::default()
        };
        let mut moduli: Vec<f64> =
            sample_posterior_k(&prior, &lik, Complex64::new(r, 0.0), &cfg)
                .unwrap()
                .iter()
                .map(|s| s.norm())
                .collect();
        moduli.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let table = modulus_posterior(&prior, &lik, r, cfg.proposal_grid_points).unwrap();
        let n = moduli.len() as f64;
        let mut ks = 0.0f64;
        for (i, &x) in moduli.iter().enumerate() {
            let f = table.cdf_at(x);
            let emp_hi = (i + 1) as f64 / n;
            let emp_lo = i as f64 / n;
            ks = ks.max((f - emp_hi).abs()).max((f - emp_lo).abs());
        }
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn posterior_image_is_seed_deterministic() {
        let y = test_image(16, 0.3, 11);
        let prior = PriorSpec::exponential(ParamFn::inverse_power(1.0, 1.5).unwrap());
        let lik = LikelihoodSpec::rician(0.3).unwrap();
        let cfg = SampleConfig {
            rng_seed: 5,
            proposal_grid_points: 512,
            ..Default::default()
        };
        let a = sample_posterior_image(&y, &prior, &lik, &cfg).unwrap();
        let b = sample_posterior_image(&y, &prior, &lik, &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        let c = sample_posterior_image(
            &y,
            &prior,
            &lik,
            &SampleConfig {
                rng_seed: 6,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn posterior_image_degenerate_noise_returns_data() {
        let y = test_image(16, 0.0, 3);
        let prior = PriorSpec::exponential(ParamFn::inverse_power(1.0, 1.5).unwrap());
        let lik = LikelihoodSpec::rician(1e-6).unwrap();
        let cfg = SampleConfig {
            rng_seed: 1,
            proposal_grid_points: 1024,
            ..Default::default()
        };
        let img = sample_posterior_image(&y, &prior, &lik, &cfg).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-3, "max err {max_err}");
    }

    #[test]
    fn posterior_image_mean_converges_to_mmse() {
        let y = test_image(16, 0.4, 8);
        let prior = PriorSpec::exponential(ParamFn::inverse_power(1.0, 1.5).unwrap());
        let lik = LikelihoodSpec::rician(0.4).unwrap();
        let cfg = SampleConfig {
            proposal_grid_points: 512,
            ..Default::default()
        };
        let mmse = mmse_estimate(&y, &prior, &lik, &cfg).unwrap().image;

        let mean_err = |n_imgs: usize, seed0: u64| {
            let mut acc = vec![0.0; y.len()];
            for s in 0..n_imgs {
                let img = sample_posterior_image(
                    &y,
                    &prior,
                    &lik,
                    &SampleConfig {
                        rng_seed: seed0 + s as u64,
                        ..cfg
                    },
                )
                .unwrap();
                for (a, v) in acc.iter_mut().zip(img.data()) {
                    *a += v;
                }
            }
            acc.iter()
                .zip(mmse.data())
                .map(|(a, m)| (a / n_imgs as f64 - m).abs())
                .fold(0.0, f64::max)
        };
        let err_small = mean_err(60, 100);
        let err_big = mean_err(240, 1000);
        // Monte Carlo error shrinks like 1/sqrt(n): a factor 4 in n should
        // halve it, with slack for randomness.
        assert!(
            err_big < 0.75 * err_small,
            "err({}) = {err_big} vs err({}) = {err_small}",
            240,
            60
        );
    }

    #[test]
    fn mmse_matches_flat_prior_quadrature() {
        let (r, sigma) = (4.0, 1.0);
        let lik = LikelihoodSpec::rician(sigma).unwrap();
        // Near-flat prior: enormous exponential mean.
        let flat = exp_prior(1e9);
        let mean = posterior_mean_modulus(&flat, &lik, r, 4096).unwrap();
        let z = simpson(
            |x| rician_logpdf(r, x, sigma).unwrap_or(f64::NEG_INFINITY).exp(),
            0.0,
            r + 12.0 * sigma,
            4000,
        );
        let expect = simpson(
            |x| x * rician_logpdf(r, x, sigma).unwrap_or(f64::NEG_INFINITY).exp(),
            0.0,
            r + 12.0 * sigma,
            4000,
        ) / z;
        assert!((mean - expect).abs() < 1e-3, "{mean} vs {expect}");
    }

    #[test]
    fn mmse_degenerate_noise_returns_data() {
        let y = test_image(16, 0.2, 4);
        let prior = PriorSpec::exponential(ParamFn::inverse_power(1.0, 1.5).unwrap());
        let lik = LikelihoodSpec::rician(1e-6).unwrap();
        let out = mmse_estimate(&y, &prior, &lik, &SampleConfig::default())
            .unwrap()
            .image;
        let max_err = out
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-3, "max err {max_err}");
    }

    #[test]
    fn mmse_exceeds_map_on_right_skewed_posterior() {
        let (r, sigma, m) = (1.0, 1.0, 0.5);
        let lik = LikelihoodSpec::rician(sigma).unwrap();
        let mmse = posterior_mean_modulus(&exp_prior(m), &lik, r, 4096).unwrap();
        let map = map_modulus_exponential(r, sigma, m, &MapConfig::default()).unwrap();
        assert!(
            mmse > map + 1e-3,
            "right-skewed posterior: mmse {mmse} should exceed map {map}"
        );
    }

    #[test]
    fn prior_sim_mass_at_zero_gives_zero_image() {
        let grid = KGrid::new(16, 16).unwrap();
        let prior = PriorSpec::exponential(ParamFn::constant(0.0).unwrap());
        let img = sample_prior_image(&prior, &grid, &SampleConfig::default()).unwrap();
        assert!(img.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn prior_sim_is_stationary_in_mean() {
        let grid = KGrid::new(16, 16).unwrap();
        let prior = PriorSpec::exponential(ParamFn::inverse_power(1.0, 1.0).unwrap());
        let n_draws = 400;
        let mut acc = vec![0.0; grid.len()];
        let mut acc_sq = vec![0.0; grid.len()];
        for s in 0..n_draws {
            let img = sample_prior_image(
                &prior,
                &grid,
                &SampleConfig {
                    rng_seed: s,
                    ..Default::default()
                },
            )
            .unwrap();
            for ((a, q), v) in acc.iter_mut().zip(acc_sq.iter_mut()).zip(img.data()) {
                *a += v;
                *q += v * v;
            }
        }
        // Random arguments make the mean image zero; every pixel mean must
        // sit within Monte Carlo error of that constant.
        for (a, q) in acc.iter().zip(&acc_sq) {
            let mean = a / n_draws as f64;
            let var = q / n_draws as f64 - mean * mean;
            let se = (var / n_draws as f64).sqrt();
            assert!(mean.abs() < 5.0 * se.max(1e-12), "pixel mean {mean}, se {se}");
        }
    }

    #[test]
    fn rician_argument_sampling_centers_on_data_argument() {
        let lik = LikelihoodSpec::rician(1.0).unwrap();
        let data = Complex64::from_polar(3.0, 1.2);
        let cfg = SampleConfig {
            n_samples: 20_000,
            rng_seed: 3,
            argument_model: ArgumentModel::RicianPosterior,
            ..Default::default()
        };
        let samples = sample_posterior_k(&exp_prior(5.0), &lik, data, &cfg).unwrap();
        let (mut s_sin, mut s_cos) = (0.0, 0.0);
        for s in &samples {
            let d = argument(*s) - 1.2;
            s_sin += d.sin();
            s_cos += d.cos();
        }
        // Circular mean of the offset is 0 by symmetry.
        let circ_mean = (s_sin / samples.len() as f64).atan2(s_cos / samples.len() as f64);
        assert!(circ_mean.abs() < 0.05, "circular mean {circ_mean}");
        // And the offsets actually vary.
        assert!(samples.iter().any(|s| (argument(*s) - 1.2).abs() > 0.05));
    }

    fn test_image(n: usize, noise_sd: f64, seed: u64) -> RealGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, noise_sd.max(1e-12)).unwrap();
        let data: Vec<f64> = (0..n * n)
            .map(|i| {
                let (x, y) = (i % n, i / n);
                (x as f64 * std::f64::consts::TAU / n as f64).sin()
                    + 0.3 * (y as f64 * std::f64::consts::TAU / n as f64).cos()
                    + if noise_sd > 0.0 { normal.sample(&mut rng) } else { 0.0 }
            })
            .collect();
        RealGrid::from_vec(n, n, data).unwrap()
    }
}
