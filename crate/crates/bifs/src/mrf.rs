//! Intrinsic Gaussian Markov random field machinery.
//!
//! The first-order pairwise-difference intrinsic GMRF on the torus,
//! `pi(x) ∝ exp(-(kappa/2) sum_{i~j} (x_i - x_j)^2)`, has a block-circulant
//! precision matrix, so the unitary DFT diagonalizes it: the power at each
//! frequency is exponential with rate equal to the precision eigenvalue.
//! That gives an exact spectral sampler (no linear solves), a recipe for
//! fitting a Fourier-space prior that approximates the MRF, and a
//! conjugate-gradients MAP baseline to compare against.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{
    forward_transform, hermitian_symmetrize, inverse_transform, ComplexField, KGrid, RealGrid,
};
use crate::paramfn::{fit_rational_cubic, FitReport, ParamFn};
use crate::prior::PriorSpec;
use crate::sample::point_seed;

/// First-order intrinsic GMRF on the torus with pairwise precision `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfSpec {
    pub kappa: f64,
}

impl MrfSpec {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
        }
        Ok(MrfSpec { kappa })
    }
}

/// Distance-binned autocovariance summary.
#[derive(Debug, Clone)]
pub struct AcfTable {
    pub rows: Vec<AcfRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct AcfRow {
    /// Bin center (integer-rounded Euclidean lag distance).
    pub distance: f64,
    /// Mean autocovariance over all lag vectors in the bin and all images.
    pub mean: f64,
    /// Anisotropy band: lag vectors are folded over the dihedral
    /// symmetries into direction orbits, and the spread is the largest
    /// standard deviation across orbits sharing an exact lag distance
    /// (e.g. (0,5) against (3,4)). Contrasting only equal distances keeps
    /// radial decay out of the measure; bins without such a group report
    /// 0.
    pub spread: f64,
}

impl AcfTable {
    pub fn mean_at(&self, distance: usize) -> Option<f64> {
        self.rows.get(distance).map(|r| r.mean)
    }

    pub fn spread_at(&self, distance: usize) -> Option<f64> {
        self.rows.get(distance).map(|r| r.spread)
    }
}

/// Precision eigenvalue of the first-order intrinsic GMRF at frequency
/// `(kx, ky)`: `2 kappa (2 - cos(2 pi kx / Nx) - cos(2 pi ky / Ny))`.
///
/// Zero at the origin: the intrinsic model leaves the overall level free.
pub fn igmrf_eigenvalue(grid: &KGrid, kappa: f64, kx: i32, ky: i32) -> f64 {
    use std::f64::consts::TAU;
    let cx = (TAU * kx as f64 / grid.n_x() as f64).cos();
    let cy = (TAU * ky as f64 / grid.n_y() as f64).cos();
    2.0 * kappa * (2.0 - cx - cy)
}

/// The full eigenvalue field in storage order.
pub fn igmrf_eigenvalues(grid: &KGrid, kappa: f64) -> Vec<f64> {
    grid.points()
        .map(|(kx, ky)| igmrf_eigenvalue(grid, kappa, kx, ky))
        .collect()
}

/// Exact spectral draw from the intrinsic GMRF, restricted to zero mean.
///
/// Per half-plane frequency the power is exponential with rate equal to
/// the eigenvalue (modulus = sqrt(power), argument uniform); self-conjugate
/// frequencies carry a single real degree of freedom with variance
/// `1/lambda`; the origin is pinned at 0.
pub fn simulate_igmrf(spec: &MrfSpec, grid: &KGrid, seed: u64) -> Result<RealGrid> {
    let mut field = ComplexField::zeros(*grid);
    let values: Vec<((i32, i32), Complex64)> = grid
        .points()
        .filter(|&(kx, ky)| (kx, ky) != (0, 0))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(kx, ky)| {
            let lambda = igmrf_eigenvalue(grid, spec.kappa, kx, ky);
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(seed, kx, ky));
            let value = if grid.is_self_conjugate(kx, ky) {
                let normal = rand_distr::Normal::new(0.0, (1.0 / lambda).sqrt()).unwrap();
                Complex64::new(normal.sample(&mut rng), 0.0)
            } else if grid.is_canonical(kx, ky) {
                let power = -(1.0 - rng.gen::<f64>()).ln() / lambda;
                let phase = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                Complex64::from_polar(power.sqrt(), phase)
            } else {
                Complex64::new(0.0, 0.0)
            };
            ((kx, ky), value)
        })
        .collect();
    for ((kx, ky), v) in values {
        field.set_value(kx, ky, v);
    }
    inverse_transform(&hermitian_symmetrize(&field))
}

/// Which per-frequency statistic the parameter function is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitTarget {
    /// Fit the mean modulus, then convert to the mean power of the
    /// exponential-power prior via `E|F| = sqrt(pi m)/2`.
    #[default]
    MeanModulus,
    /// Fit the mean power directly.
    MeanPower,
}

/// A fitted Fourier-space approximation to an MRF prior.
#[derive(Debug, Clone)]
pub struct MrfFit {
    /// The approximating prior: squared modulus exponential with the
    /// fitted, isotropic mean-power function.
    pub prior: PriorSpec,
    /// The fitted radial curve (mean modulus or mean power, per `target`).
    pub curve: ParamFn,
    pub report: FitReport,
    pub target: FitTarget,
}

const RADIUS_BIN_WIDTH: f64 = 0.5;

/// Fit an isotropic Fourier-space prior to MRF samples: transform every
/// sample, estimate the per-frequency statistic, bin it by radius, and fit
/// a rational cubic by least squares.
pub fn fit_bifs_to_mrf(samples: &[RealGrid]) -> Result<MrfFit> {
    fit_bifs_to_mrf_with(samples, FitTarget::default())
}

pub fn fit_bifs_to_mrf_with(samples: &[RealGrid], target: FitTarget) -> Result<MrfFit> {
    if samples.len() < 100 {
        return Err(Error::Estimation(format!(
            "fitting needs >= 100 samples, got {}",
            samples.len()
        )));
    }
    let (n_x, n_y) = (samples[0].n_x(), samples[0].n_y());
    if samples.iter().any(|s| s.n_x() != n_x || s.n_y() != n_y) {
        return Err(Error::Input("samples must share dimensions".into()));
    }

    let fields: Vec<ComplexField> = samples
        .par_iter()
        .map(forward_transform)
        .collect::<Result<_>>()?;
    let grid = *fields[0].grid();

    // Per-frequency mean statistic, then radius-binned means.
    let nbins = (grid.radius(-(n_x as i32) / 2, -(n_y as i32) / 2) / RADIUS_BIN_WIDTH).ceil()
        as usize
        + 1;
    let mut bin_sum = vec![0.0; nbins];
    let mut bin_count = vec![0usize; nbins];
    for (kx, ky) in grid.points() {
        if (kx, ky) == (0, 0) {
            continue;
        }
        let stat: f64 = fields
            .iter()
            .map(|f| {
                let m = f.modulus_at(kx, ky);
                match target {
                    FitTarget::MeanModulus => m,
                    FitTarget::MeanPower => m * m,
                }
            })
            .sum::<f64>()
            / fields.len() as f64;
        let bin = (grid.radius(kx, ky) / RADIUS_BIN_WIDTH).round() as usize;
        bin_sum[bin] += stat;
        bin_count[bin] += 1;
    }
    let points: Vec<(f64, f64)> = bin_sum
        .iter()
        .zip(&bin_count)
        .enumerate()
        .filter(|(_, (_, &c))| c > 0)
        .map(|(i, (&s, &c))| (i as f64 * RADIUS_BIN_WIDTH, s / c as f64))
        .collect();

    let (curve, report) = fit_rational_cubic(&points)?;

    let max_radius = grid.radius(-(n_x as i32) / 2, -(n_y as i32) / 2);
    let mean_power = match target {
        FitTarget::MeanPower => curve.clone(),
        FitTarget::MeanModulus => {
            verify_modulus_power_conversion()?;
            // E|F| = sqrt(pi m)/2 for exponential power with mean m, so
            // m(r) = (4/pi) f(r)^2; tabulated densely in radius.
            let n_table = 2048;
            let mut radii = Vec::with_capacity(n_table + 1);
            let mut values = Vec::with_capacity(n_table + 1);
            for i in 0..=n_table {
                let r = i as f64 * max_radius / n_table as f64;
                radii.push(r);
                values.push(4.0 / std::f64::consts::PI * curve.eval(r)?.powi(2));
            }
            ParamFn::empirical_table(radii, values)?
        }
    };

    Ok(MrfFit {
        prior: PriorSpec::sqrt_exponential(mean_power),
        curve,
        report,
        target,
    })
}

/// Check `E[sqrt(p)] = sqrt(pi)/2` for unit-mean exponential power by
/// quadrature before relying on it. Substituting `u = sqrt(p)` removes the
/// square-root kink at zero: the integral becomes `2 int u^2 e^{-u^2} du`.
fn verify_modulus_power_conversion() -> Result<()> {
    let n = 20_000;
    let upper = 9.0;
    let h = upper / n as f64;
    let f = |u: f64| 2.0 * u * u * (-u * u).exp();
    let mut sum = f(0.0) + f(upper);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let integral = sum * h / 3.0;
    let expect = std::f64::consts::PI.sqrt() / 2.0;
    if (integral - expect).abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "modulus/power conversion constant check failed: {integral} vs {expect}"
        )));
    }
    Ok(())
}

/// MAP reconstruction under the intrinsic GMRF prior by conjugate
/// gradients on `(I/sigma^2 + kappa L) x = y / sigma^2`, `L` the torus
/// graph Laplacian.
pub fn igmrf_map_cg(y: &RealGrid, spec: &MrfSpec, sigma: f64) -> Result<RealGrid> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let (n_x, n_y) = (y.n_x(), y.n_y());
    let n = n_x * n_y;
    let inv_s2 = 1.0 / (sigma * sigma);
    let kappa = spec.kappa;

    let apply = |x: &[f64], out: &mut [f64]| {
        for iy in 0..n_y {
            let up = (iy + n_y - 1) % n_y;
            let down = (iy + 1) % n_y;
            for ix in 0..n_x {
                let left = (ix + n_x - 1) % n_x;
                let right = (ix + 1) % n_x;
                let i = iy * n_x + ix;
                let lap = 4.0 * x[i]
                    - x[iy * n_x + left]
                    - x[iy * n_x + right]
                    - x[up * n_x + ix]
                    - x[down * n_x + ix];
                out[i] = inv_s2 * x[i] + kappa * lap;
            }
        }
    };

    let b: Vec<f64> = y.data().iter().map(|v| v * inv_s2).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(RealGrid::zeros(n_x, n_y));
    }

    let mut x = y.data().to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();

    let max_iter = 10 * n;
    for _ in 0..max_iter {
        if rs.sqrt() <= 1e-8 * b_norm {
            return RealGrid::from_vec(n_x, n_y, x);
        }
        apply(&p, &mut ax);
        let alpha = rs / p.iter().zip(&ax).map(|(p, a)| p * a).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::Convergence { max_iter })
}

/// FFT-based circular autocovariance of each image (mean removed), binned
/// by integer-rounded Euclidean lag distance.
pub fn acf_by_distance(images: &[RealGrid], max_lag: usize) -> Result<AcfTable> {
    if images.len() < 2 {
        return Err(Error::Input(format!(
            "autocovariance estimation needs >= 2 images, got {}",
            images.len()
        )));
    }
    let (n_x, n_y) = (images[0].n_x(), images[0].n_y());
    if images.iter().any(|s| s.n_x() != n_x || s.n_y() != n_y) {
        return Err(Error::Input("images must share dimensions".into()));
    }
    let sqrt_n = (n_x as f64 * n_y as f64).sqrt();

    // Mean autocovariance grid across images.
    let mut acc = vec![0.0; n_x * n_y];
    for img in images {
        let mean = img.mean();
        let centered = RealGrid::from_vec(
            n_x,
            n_y,
            img.data().iter().map(|v| v - mean).collect(),
        )?;
        let f = forward_transform(&centered)?;
        let grid = *f.grid();
        let mut power = ComplexField::zeros(grid);
        for (kx, ky) in grid.points() {
            power.set_value(kx, ky, Complex64::new(f.value_at(kx, ky).norm_sqr(), 0.0));
        }
        let acov = inverse_transform(&hermitian_symmetrize(&power))?;
        for (a, v) in acc.iter_mut().zip(acov.data()) {
            *a += v / sqrt_n;
        }
    }
    for a in &mut acc {
        *a /= images.len() as f64;
    }

    // Bin lag vectors by rounded distance; group dihedral orbits by exact
    // squared distance for the direction spread.
    let mut all: Vec<Vec<f64>> = vec![Vec::new(); max_lag + 1];
    let mut groups: std::collections::BTreeMap<
        i64,
        std::collections::BTreeMap<(i64, i64), (f64, usize)>,
    > = Default::default();
    for iy in 0..n_y {
        let dy = if iy < n_y / 2 {
            iy as i64
        } else {
            iy as i64 - n_y as i64
        };
        for ix in 0..n_x {
            let dx = if ix < n_x / 2 {
                ix as i64
            } else {
                ix as i64 - n_x as i64
            };
            let d2 = dx * dx + dy * dy;
            let bin = (d2 as f64).sqrt().round() as usize;
            if bin > max_lag {
                continue;
            }
            let v = acc[iy * n_x + ix];
            all[bin].push(v);
            let orbit = (dx.abs().min(dy.abs()), dx.abs().max(dy.abs()));
            let e = groups.entry(d2).or_default().entry(orbit).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }

    let mut spreads = vec![0.0f64; max_lag + 1];
    for (d2, orbit_map) in &groups {
        if orbit_map.len() < 2 {
            continue;
        }
        let bin = (*d2 as f64).sqrt().round() as usize;
        let means: Vec<f64> = orbit_map.values().map(|(s, c)| s / *c as f64).collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let sd = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            / (means.len() - 1) as f64)
            .sqrt();
        spreads[bin] = spreads[bin].max(sd);
    }

    let rows = all
        .iter()
        .enumerate()
        .map(|(d, vals)| {
            let n = vals.len() as f64;
            AcfRow {
                distance: d as f64,
                mean: vals.iter().sum::<f64>() / n,
                spread: spreads[d],
            }
        })
        .collect();
    Ok(AcfTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid8() -> KGrid {
        KGrid::new(8, 8).unwrap()
    }

    #[test]
    fn eigenvalue_landmarks() {
        let grid = grid8();
        assert_eq!(igmrf_eigenvalue(&grid, 1.0, 0, 0), 0.0);
        let nyq = igmrf_eigenvalue(&grid, 1.0, -4, -4);
        assert!((nyq - 8.0).abs() < 1e-12);
        let k3 = igmrf_eigenvalue(&grid, 3.0, -4, -4);
        assert!((k3 - 24.0).abs() < 1e-12);
    }

    /// Assemble the dense precision kappa * L for the torus lattice.
    fn dense_precision(n: usize, kappa: f64) -> Vec<Vec<f64>> {
        let size = n * n;
        let mut q = vec![vec![0.0; size]; size];
        for iy in 0..n {
            for ix in 0..n {
                let i = iy * n + ix;
                q[i][i] = 4.0 * kappa;
                for (jx, jy) in [
                    ((ix + 1) % n, iy),
                    ((ix + n - 1) % n, iy),
                    (ix, (iy + 1) % n),
                    (ix, (iy + n - 1) % n),
                ] {
                    q[i][jy * n + jx] -= kappa;
                }
            }
        }
        q
    }

    /// Jacobi eigenvalue iteration for small symmetric matrices.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-14 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = c * aip - s * aiq;
                        a[i][q] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[p][i];
                        let aqi = a[q][i];
                        a[p][i] = c * api - s * aqi;
                        a[q][i] = s * api + c * aqi;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn eigenvalue_field_matches_dense_oracle() {
        let grid = grid8();
        let kappa = 1.3;

        // Each DFT basis vector is an eigenvector of the stencil.
        for (kx, ky) in grid.points() {
            let lambda = igmrf_eigenvalue(&grid, kappa, kx, ky);
            // Apply the precision stencil to v(x,y) = exp(2 pi i (kx x + ky y) / 8)
            // at a probe site and compare with lambda * v.
            for &(px, py) in &[(0usize, 0usize), (3, 5)] {
                let v = |x: i64, y: i64| {
                    let phase = std::f64::consts::TAU
                        * (kx as f64 * x as f64 + ky as f64 * y as f64)
                        / 8.0;
                    Complex64::from_polar(1.0, phase)
                };
                let (x, y) = (px as i64, py as i64);
                let applied = kappa
                    * (4.0 * v(x, y) - v(x + 1, y) - v(x - 1, y) - v(x, y + 1) - v(x, y - 1));
                let expect = lambda * v(x, y);
                assert!((applied - expect).norm() < 1e-10);
            }
        }

        // Multiset of eigenvalues matches a dense eigensolver.
        let mut spectral: Vec<f64> = igmrf_eigenvalues(&grid, kappa);
        let mut dense = jacobi_eigenvalues(dense_precision(8, kappa));
        spectral.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (s, d) in spectral.iter().zip(&dense) {
            assert!((s - d).abs() < 1e-10, "{s} vs {d}");
        }
    }

    #[test]
    fn simulated_power_is_exponential() {
        let grid = grid8();
        let spec = MrfSpec::new(1.0).unwrap();
        let (kx, ky) = (2, 1);
        let lambda = igmrf_eigenvalue(&grid, spec.kappa, kx, ky);
        let n_draws = 3000;
        let mut powers: Vec<f64> = (0..n_draws)
            .map(|s| {
                let img = simulate_igmrf(&spec, &grid, s as u64).unwrap();
                forward_transform(&img).unwrap().value_at(kx, ky).norm_sqr()
            })
            .collect();
        powers.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // One-sample KS test against Exp(rate lambda).
        let n = powers.len() as f64;
        let mut d_stat = 0.0f64;
        for (i, &p) in powers.iter().enumerate() {
            let f = 1.0 - (-lambda * p).exp();
            d_stat = d_stat
                .max((f - i as f64 / n).abs())
                .max((f - (i + 1) as f64 / n).abs());
        }
        let p_value = ks_p_value(d_stat, powers.len());
        assert!(p_value > 0.01, "KS D={d_stat}, p={p_value}");
    }

    /// Asymptotic Kolmogorov-Smirnov p-value.
    fn ks_p_value(d: f64, n: usize) -> f64 {
        let ne = (n as f64).sqrt();
        let t = (ne + 0.12 + 0.11 / ne) * d;
        let mut sum = 0.0;
        for j in 1..101 {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (-2.0 * (j as f64 * t).powi(2)).exp();
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }

    /// kappa/2 sum of squared neighbor differences (each unordered pair
    /// once).
    fn pairwise_energy(img: &RealGrid, kappa: f64) -> f64 {
        let (n_x, n_y) = (img.n_x(), img.n_y());
        let mut e = 0.0;
        for y in 0..n_y {
            for x in 0..n_x {
                let v = img.at(x, y);
                let right = img.at((x + 1) % n_x, y);
                let down = img.at(x, (y + 1) % n_y);
                e += (v - right).powi(2) + (v - down).powi(2);
            }
        }
        0.5 * kappa * e
    }

    #[test]
    fn pairwise_energy_has_chi_square_mean() {
        // E[(kappa/2) sum (x_i - x_j)^2] = E[x'Qx]/2 = rank(Q)/2 = (N^2-1)/2,
        // independent of kappa.
        let grid = grid8();
        let spec = MrfSpec::new(1.7).unwrap();
        let n_draws = 3000;
        let energies: Vec<f64> = (0..n_draws)
            .map(|s| pairwise_energy(&simulate_igmrf(&spec, &grid, 10_000 + s as u64).unwrap(), spec.kappa))
            .collect();
        let mean = energies.iter().sum::<f64>() / n_draws as f64;
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
            / (n_draws - 1) as f64;
        let se = (var / n_draws as f64).sqrt();
        let expect = (64.0 - 1.0) / 2.0;
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "energy mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn quadrupling_kappa_halves_field_sd() {
        let grid = KGrid::new(16, 16).unwrap();
        let sd_of = |kappa: f64| {
            let spec = MrfSpec::new(kappa).unwrap();
            let mut total = 0.0;
            let mut count = 0usize;
            for s in 0..200 {
                let img = simulate_igmrf(&spec, &grid, s).unwrap();
                total += img.data().iter().map(|v| v * v).sum::<f64>();
                count += img.len();
            }
            (total / count as f64).sqrt()
        };
        let ratio = sd_of(4.0) / sd_of(1.0);
        assert!((ratio - 0.5).abs() < 0.025, "sd ratio {ratio}");
    }

    #[test]
    fn spectral_draws_match_dense_pseudoinverse_covariance() {
        // Variance of linear functionals must match a^T Q^+ a, including
        // the checkerboard (Nyquist) direction that pins down the
        // self-conjugate convention.
        let grid = grid8();
        let kappa = 1.0;
        let spec = MrfSpec::new(kappa).unwrap();

        // Dense pseudo-inverse via the known eigenstructure is circular;
        // build it from the dense matrix with a Jacobi eigendecomposition
        // instead.
        let q = dense_precision(8, kappa);
        let (vals, vecs) = jacobi_eigen_full(q);

        let mut checkerboard = vec![0.0; 64];
        for iy in 0..8 {
            for ix in 0..8 {
                checkerboard[iy * 8 + ix] = if (ix + iy) % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut random_a = vec![0.0; 64];
        for v in &mut random_a {
            *v = rng.gen_range(-1.0..1.0);
        }

        for a in [checkerboard, random_a] {
            // a^T Q^+ a = sum over nonzero eigenvalues of (v_i . a)^2 / lambda_i.
            let mut expect = 0.0;
            for (i, &l) in vals.iter().enumerate() {
                if l > 1e-9 {
                    let dot: f64 = (0..64).map(|j| vecs[j][i] * a[j]).sum();
                    expect += dot * dot / l;
                }
            }
            let n_draws = 4000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for s in 0..n_draws {
                let img = simulate_igmrf(&spec, &grid, 777 + s as u64).unwrap();
                let dot: f64 = img.data().iter().zip(&a).map(|(x, a)| x * a).sum();
                sum += dot;
                sum_sq += dot * dot;
            }
            let mean = sum / n_draws as f64;
            let var = sum_sq / n_draws as f64 - mean * mean;
            // Relative MC error of a variance estimate is ~sqrt(2/n).
            let tol = 4.0 * (2.0 / n_draws as f64).sqrt() * expect;
            assert!(
                (var - expect).abs() < tol,
                "functional variance {var} vs {expect} (tol {tol})"
            );
            assert!(mean.abs() < 4.0 * (var / n_draws as f64).sqrt() + 1e-9);
        }
    }

    /// Jacobi returning eigenvalues and eigenvectors (columns).
    fn jacobi_eigen_full(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v = vec![vec![0.0; n]; n];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-14 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = c * aip - s * aiq;
                        a[i][q] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[p][i];
                        let aqi = a[q][i];
                        a[p][i] = c * api - s * aqi;
                        a[q][i] = s * api + c * aqi;
                    }
                    for row in v.iter_mut() {
                        let vip = row[p];
                        let viq = row[q];
                        row[p] = c * vip - s * viq;
                        row[q] = s * vip + c * viq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[i][i]).collect(), v)
    }

    #[test]
    fn cg_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = RealGrid::from_vec(
            16,
            16,
            (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();

        // kappa -> 0 returns the data.
        let spec = MrfSpec::new(1e-14).unwrap();
        let x = igmrf_map_cg(&y, &spec, 1.0).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-10);
        }

        // Constant images are in the Laplacian null space.
        let c = RealGrid::from_vec(16, 16, vec![3.7; 256]).unwrap();
        let spec = MrfSpec::new(2.0).unwrap();
        let x = igmrf_map_cg(&c, &spec, 0.5).unwrap();
        for v in x.data() {
            assert!((v - 3.7).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_matches_dense_solve() {
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = RealGrid::from_vec(
            n,
            n,
            (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (kappa, sigma) = (0.8, 1.3);
        let spec = MrfSpec::new(kappa).unwrap();
        let x = igmrf_map_cg(&y, &spec, sigma).unwrap();

        // Dense Gaussian elimination oracle on (I/s^2 + kappa L).
        let size = n * n;
        let inv_s2 = 1.0 / (sigma * sigma);
        let mut a = dense_precision(n, kappa);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += inv_s2;
        }
        let mut b: Vec<f64> = y.data().iter().map(|v| v * inv_s2).collect();
        for col in 0..size {
            let piv = (col..size).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..size {
                let f = a[row][col] / a[col][col];
                for k in col..size {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        for col in (0..size).rev() {
            let mut s = b[col];
            for k in col + 1..size {
                s -= a[col][k] * b[k];
            }
            b[col] = s / a[col][col];
        }

        for (u, v) in x.data().iter().zip(&b) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn white_noise_acf_is_a_spike() {
        let n = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let images: Vec<RealGrid> = (0..40)
            .map(|_| {
                RealGrid::from_vec(
                    n,
                    n,
                    (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        let table = acf_by_distance(&images, 8).unwrap();

        // Variance of U(-1,1) is 1/3.
        let v = table.rows[0].mean;
        assert!((v - 1.0 / 3.0).abs() < 0.02, "variance {v}");
        // Positive lags carry no covariance beyond Monte Carlo noise.
        let se = (1.0 / 3.0) / ((n * n * images.len()) as f64).sqrt();
        for row in &table.rows[1..] {
            assert!(row.mean.abs() < 5.0 * se, "lag {} mean {}", row.distance, row.mean);
        }
    }

    #[test]
    fn acf_invariant_under_circular_shift() {
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let img = RealGrid::from_vec(
            n,
            n,
            (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let shifted = img.circular_shift(5, -3);
        let a = acf_by_distance(&[img.clone(), img.clone()], 6).unwrap();
        let b = acf_by_distance(&[shifted.clone(), shifted], 6).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((ra.mean - rb.mean).abs() < 1e-10);
            assert!((ra.spread - rb.spread).abs() < 1e-10);
        }
    }

    #[test]
    fn igmrf_acf_decreases_with_distance() {
        let grid = KGrid::new(64, 64).unwrap();
        let spec = MrfSpec::new(1.0).unwrap();
        let images: Vec<RealGrid> = (0..60)
            .map(|s| simulate_igmrf(&spec, &grid, 40_000 + s as u64).unwrap())
            .collect();
        let table = acf_by_distance(&images, 10).unwrap();
        for d in 1..=10 {
            assert!(
                table.rows[d].mean < table.rows[d - 1].mean,
                "ACF not decreasing at lag {d}"
            );
        }
    }

    #[test]
    fn fit_recovers_generating_prior() {
        // Samples drawn from a known exponential-power prior: the fitted
        // mean-modulus curve must match the generating curve within 5%.
        use crate::sample::{sample_prior_image, SampleConfig};
        let grid = KGrid::new(32, 32).unwrap();
        let gen_power = ParamFn::rational_cubic([4.0, 1.0, 0.8, 0.1, 0.005]).unwrap();
        let prior = PriorSpec::sqrt_exponential(gen_power.clone());
        let samples: Vec<RealGrid> = (0..400)
            .map(|s| {
                sample_prior_image(
                    &prior,
                    &grid,
                    &SampleConfig {
                        rng_seed: 900 + s as u64,
                        ..Default::default()
                    },
                )
                .unwrap()
            })
            .collect();
        let fit = fit_bifs_to_mrf(&samples).unwrap();
        // Compare mean-modulus curves: sqrt(pi m(r))/2.
        for i in 1..=20 {
            let r = i as f64;
            let expect = (std::f64::consts::PI * gen_power.eval(r).unwrap()).sqrt() / 2.0;
            let got = fit.curve.eval(r).unwrap();
            assert!(
                (got - expect).abs() < 0.05 * expect,
                "r={r}: fitted {got} vs generating {expect}"
            );
        }
        // The returned prior's mean power matches the generator too.
        let ResolvedPrior::SqrtExponential { mean_power } =
            fit.prior.resolve(&grid, 3, 0).unwrap()
        else {
            panic!("expected an exponential-power prior")
        };
        let expect = gen_power.eval(3.0).unwrap();
        assert!((mean_power - expect).abs() < 0.12 * expect);
    }

    use crate::prior::ResolvedPrior;

    #[test]
    fn rational_cubic_beats_inverse_power_on_mrf_means() {
        let grid = KGrid::new(32, 32).unwrap();
        let spec = MrfSpec::new(1.0).unwrap();
        let samples: Vec<RealGrid> = (0..150)
            .map(|s| simulate_igmrf(&spec, &grid, 60_000 + s as u64).unwrap())
            .collect();
        let fit = fit_bifs_to_mrf(&samples).unwrap();

        // Oracle: the best inverse-power fit by least squares on logs,
        // evaluated on the same binned means the rational cubic saw.
        let fields: Vec<ComplexField> = samples.iter().map(|s| forward_transform(s).unwrap()).collect();
        let mut points: Vec<(f64, f64)> = Vec::new();
        {
            let g = *fields[0].grid();
            let nbins = (g.radius(-16, -16) / 0.5).ceil() as usize + 1;
            let mut sum = vec![0.0; nbins];
            let mut count = vec![0usize; nbins];
            for (kx, ky) in g.points() {
                if (kx, ky) == (0, 0) {
                    continue;
                }
                let m: f64 = fields.iter().map(|f| f.modulus_at(kx, ky)).sum::<f64>()
                    / fields.len() as f64;
                let bin = (g.radius(kx, ky) / 0.5).round() as usize;
                sum[bin] += m;
                count[bin] += 1;
            }
            for (i, (&s, &c)) in sum.iter().zip(&count).enumerate() {
                if c > 0 {
                    points.push((i as f64 * 0.5, s / c as f64));
                }
            }
        }
        // log y = log a - b log r, ordinary least squares.
        let logs: Vec<(f64, f64)> = points
            .iter()
            .filter(|&&(r, y)| r > 0.0 && y > 0.0)
            .map(|&(r, y)| (r.ln(), y.ln()))
            .collect();
        let n = logs.len() as f64;
        let sx: f64 = logs.iter().map(|p| p.0).sum();
        let sy: f64 = logs.iter().map(|p| p.1).sum();
        let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let (a, b) = (intercept.exp(), -slope);
        let ip = ParamFn::inverse_power(a, b).unwrap();

        let resid = |f: &ParamFn| -> f64 {
            points
                .iter()
                .filter(|&&(r, _)| r > 0.0)
                .map(|&(r, y)| (f.eval(r).unwrap() - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let rc_resid = resid(&fit.curve);
        let ip_resid = resid(&ip);
        assert!(
            rc_resid < ip_resid,
            "rational cubic residual {rc_resid} should beat inverse power {ip_resid}"
        );
    }

    #[test]
    fn fitted_prior_is_isotropic() {
        let grid = KGrid::new(32, 32).unwrap();
        let spec = MrfSpec::new(1.0).unwrap();
        let samples: Vec<RealGrid> = (0..120)
            .map(|s| simulate_igmrf(&spec, &grid, 80_000 + s as u64).unwrap())
            .collect();
        let fit = fit_bifs_to_mrf(&samples).unwrap();
        let a = match fit.prior.resolve(&grid, 3, 4).unwrap() {
            ResolvedPrior::SqrtExponential { mean_power } => mean_power,
            other => panic!("unexpected {other:?}"),
        };
        let b = match fit.prior.resolve(&grid, 4, 3).unwrap() {
            ResolvedPrior::SqrtExponential { mean_power } => mean_power,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(a, b);
        let c = match fit.prior.resolve(&grid, -5, 0).unwrap() {
            ResolvedPrior::SqrtExponential { mean_power } => mean_power,
            other => panic!("unexpected {other:?}"),
        };
        let d = match fit.prior.resolve(&grid, 0, -5).unwrap() {
            ResolvedPrior::SqrtExponential { mean_power } => mean_power,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(c, d);
    }

    #[test]
    fn fit_requires_enough_samples() {
        let grid = grid8();
        let spec = MrfSpec::new(1.0).unwrap();
        let samples: Vec<RealGrid> = (0..10)
            .map(|s| simulate_igmrf(&spec, &grid, s as u64).unwrap())
            .collect();
        assert!(matches!(
            fit_bifs_to_mrf(&samples),
            Err(Error::Estimation(_))
        ));
    }
}
