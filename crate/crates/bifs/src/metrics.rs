//! Reconstruction results and accuracy diagnostics.

use crate::error::{Error, Result};
use crate::kspace::{forward_transform, RealGrid};

/// Diagnostics attached to a reconstruction. Fields are populated only when
/// the corresponding reference inputs (ground truth, region labels) were
/// supplied.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Root-mean-square error against ground truth, over all pixels.
    pub rmse: Option<f64>,
    /// Mean estimate per region label, sorted by label.
    pub region_means: Option<Vec<(u8, f64)>>,
    /// Mean power of the error field per radius bin: `(bin center, power)`.
    pub power_profile: Option<Vec<(f64, f64)>>,
    /// Wall-clock seconds spent in the estimator.
    pub timing_seconds: Option<f64>,
}

/// An estimated image plus diagnostics.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub image: RealGrid,
    pub diagnostics: Diagnostics,
}

impl ReconstructionResult {
    pub fn new(image: RealGrid) -> Self {
        ReconstructionResult {
            image,
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Compare an estimate against ground truth.
///
/// Returns the overall RMSE, per-label means of the estimate when `labels`
/// is given (one label per pixel), and the radial power profile of the
/// error field.
pub fn metrics(
    estimate: &RealGrid,
    truth: &RealGrid,
    labels: Option<&[u8]>,
) -> Result<Diagnostics> {
    if estimate.n_x() != truth.n_x() || estimate.n_y() != truth.n_y() {
        return Err(Error::Dimension(format!(
            "estimate is {}x{} but truth is {}x{}",
            estimate.n_x(),
            estimate.n_y(),
            truth.n_x(),
            truth.n_y()
        )));
    }
    let n = estimate.len() as f64;
    let sq_sum: f64 = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let rmse = (sq_sum / n).sqrt();

    let region_means = match labels {
        Some(labels) => {
            if labels.len() != estimate.len() {
                return Err(Error::Dimension(format!(
                    "labels length {} does not match image size {}",
                    labels.len(),
                    estimate.len()
                )));
            }
            let mut sums: std::collections::BTreeMap<u8, (f64, usize)> = Default::default();
            for (&v, &l) in estimate.data().iter().zip(labels) {
                let e = sums.entry(l).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
            Some(
                sums.into_iter()
                    .map(|(l, (s, c))| (l, s / c as f64))
                    .collect(),
            )
        }
        None => None,
    };

    let diff = RealGrid::from_vec(
        estimate.n_x(),
        estimate.n_y(),
        estimate
            .data()
            .iter()
            .zip(truth.data())
            .map(|(a, b)| a - b)
            .collect(),
    )?;
    let power_profile = Some(radial_power_profile(&diff)?);

    Ok(Diagnostics {
        rmse: Some(rmse),
        region_means,
        power_profile,
        timing_seconds: None,
    })
}

/// Mean `|F x_k|^2` binned by integer-rounded radius.
pub fn radial_power_profile(image: &RealGrid) -> Result<Vec<(f64, f64)>> {
    let field = forward_transform(image)?;
    let grid = *field.grid();
    let max_r = grid.radius(-(grid.n_x() as i32) / 2, -(grid.n_y() as i32) / 2);
    let nbins = max_r.ceil() as usize + 1;
    let mut sums = vec![0.0; nbins];
    let mut counts = vec![0usize; nbins];
    for (kx, ky) in grid.points() {
        let bin = grid.radius(kx, ky).round() as usize;
        sums[bin] += field.value_at(kx, ky).norm_sqr();
        counts[bin] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .enumerate()
        .filter(|(_, (_, &c))| c > 0)
        .map(|(i, (&s, &c))| (i as f64, s / c as f64))
        .collect())
}

/// Fraction of off-origin power at radii above `threshold`.
pub fn high_frequency_power_fraction(image: &RealGrid, threshold: f64) -> Result<f64> {
    let field = forward_transform(image)?;
    let grid = *field.grid();
    let mut high = 0.0;
    let mut total = 0.0;
    for (kx, ky) in grid.points() {
        if (kx, ky) == (0, 0) {
            continue;
        }
        let p = field.value_at(kx, ky).norm_sqr();
        total += p;
        if grid.radius(kx, ky) > threshold {
            high += p;
        }
    }
    if total <= 0.0 {
        return Err(Error::Domain("image has no off-origin power".into()));
    }
    Ok(high / total)
}
