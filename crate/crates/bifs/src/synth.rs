//! Synthetic data: noise models, the two-region phantom, and the random
//! anisotropic bump fields used to exercise empirical priors.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson, StudentT};

use crate::error::{Error, Result};
use crate::kspace::RealGrid;

/// Additive i.i.d. noise models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { sd: f64 },
    /// Student t scaled so the noise sd equals `target_sd` (requires
    /// `df > 2` for the sd to exist).
    StudentT { df: f64, target_sd: f64 },
}

pub fn add_noise(img: &RealGrid, model: NoiseModel, seed: u64) -> Result<RealGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<f64> = match model {
        NoiseModel::Gaussian { sd } => {
            if !(sd > 0.0) {
                return Err(Error::Domain(format!("noise sd must be positive, got {sd}")));
            }
            let dist = Normal::new(0.0, sd).unwrap();
            img.data().iter().map(|v| v + dist.sample(&mut rng)).collect()
        }
        NoiseModel::StudentT { df, target_sd } => {
            if !(df > 2.0) {
                return Err(Error::Domain(format!(
                    "Student-t noise needs df > 2 (sd undefined otherwise), got {df}"
                )));
            }
            if !(target_sd > 0.0) {
                return Err(Error::Domain(format!(
                    "noise sd must be positive, got {target_sd}"
                )));
            }
            // Standard t has variance df/(df-2); rescale to the target.
            let scale = target_sd * ((df - 2.0) / df).sqrt();
            let dist = StudentT::new(df).map_err(|e| Error::Domain(e.to_string()))?;
            img.data()
                .iter()
                .map(|v| v + scale * dist.sample(&mut rng))
                .collect()
        }
    };
    RealGrid::from_vec(img.n_x(), img.n_y(), noisy)
}

/// Region labels produced by [`make_phantom`].
pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_WM: u8 = 1;
pub const LABEL_GM: u8 = 2;

/// Synthetic two-region phantom: a disc of interior tissue (label 1,
/// intensity 10.0) wrapped in a narrow outer ribbon (label 2, intensity
/// 20.0) on zero background. The ribbon is 3 pixels wide at 128x128 and
/// scales with resolution.
pub fn make_phantom(n_x: usize, n_y: usize) -> Result<(RealGrid, Vec<u8>)> {
    if n_x < 64 || n_y < 64 {
        return Err(Error::Dimension(format!(
            "phantom needs dimensions >= 64, got {n_x}x{n_y}"
        )));
    }
    let min_dim = n_x.min(n_y) as f64;
    let outer = 0.375 * min_dim;
    let ribbon = 3.0 * min_dim / 128.0;
    let (cx, cy) = ((n_x as f64 - 1.0) / 2.0, (n_y as f64 - 1.0) / 2.0);

    let mut img = RealGrid::zeros(n_x, n_y);
    let mut labels = vec![LABEL_BACKGROUND; n_x * n_y];
    for y in 0..n_y {
        for x in 0..n_x {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            let (value, label) = if d <= outer - ribbon {
                (10.0, LABEL_WM)
            } else if d <= outer {
                (20.0, LABEL_GM)
            } else {
                (0.0, LABEL_BACKGROUND)
            };
            img.set(x, y, value);
            labels[y * n_x + x] = label;
        }
    }
    Ok((img, labels))
}

/// Configuration for the random bump fields: a Poisson number of
/// anisotropic 2-D Gaussian bumps with random position, amplitude, axis
/// widths, and a negative axis correlation (so the process is not
/// isotropic).
#[derive(Debug, Clone, Copy)]
pub struct BumpConfig {
    pub rate: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub seed: u64,
    pub intensity_range: (f64, f64),
    pub sd_range: (f64, f64),
}

impl BumpConfig {
    pub fn new(rate: f64, n_x: usize, n_y: usize, seed: u64) -> Self {
        BumpConfig {
            rate,
            n_x,
            n_y,
            seed,
            intensity_range: (0.5, 1.5),
            sd_range: (2.0, 8.0),
        }
    }
}

pub fn simulate_bumps(config: &BumpConfig) -> Result<RealGrid> {
    simulate_bumps_detailed(config).map(|(img, _)| img)
}

/// As [`simulate_bumps`], also reporting the drawn bump count.
pub fn simulate_bumps_detailed(config: &BumpConfig) -> Result<(RealGrid, usize)> {
    if !(config.rate > 0.0) {
        return Err(Error::Domain(format!(
            "bump rate must be positive, got {}",
            config.rate
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let count = Poisson::new(config.rate)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(&mut rng) as usize;

    let (n_x, n_y) = (config.n_x, config.n_y);
    let mut img = RealGrid::zeros(n_x, n_y);
    for _ in 0..count {
        let cx = rng.gen_range(0.0..n_x as f64);
        let cy = rng.gen_range(0.0..n_y as f64);
        let amp = rng.gen_range(config.intensity_range.0..config.intensity_range.1);
        let sx = rng.gen_range(config.sd_range.0..config.sd_range.1);
        let sy = rng.gen_range(config.sd_range.0..config.sd_range.1);
        let corr = rng.gen_range(-1.0f64..0.0).clamp(-0.999, -1e-6);
        let one_minus_c2 = 1.0 - corr * corr;

        let reach = 5.0 * sx.max(sy);
        let x_lo = ((cx - reach).floor().max(0.0)) as usize;
        let x_hi = ((cx + reach).ceil().min(n_x as f64 - 1.0)) as usize;
        let y_lo = ((cy - reach).floor().max(0.0)) as usize;
        let y_hi = ((cy + reach).ceil().min(n_y as f64 - 1.0)) as usize;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let u = (x as f64 - cx) / sx;
                let v = (y as f64 - cy) / sy;
                let q = (u * u - 2.0 * corr * u * v + v * v) / one_minus_c2;
                let add = amp * (-0.5 * q).exp();
                img.set(x, y, img.at(x, y) + add);
            }
        }
    }
    Ok((img, count))
}
