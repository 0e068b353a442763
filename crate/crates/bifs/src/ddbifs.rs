//! Data-driven priors: per-frequency prior parameters estimated from a
//! database of high-quality images, applied through the conjugate
//! truncated-Gaussian model.
//!
//! Every database image is transformed once; at each frequency the sample
//! mean and sd of the moduli become the prior location and scale, weighted
//! as `m` pseudo-observations against the data. Unlike the parameter-
//! function priors this captures anisotropy for free: the empirical maps
//! are 2-D fields over k-space, not functions of radius.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{
    forward_transform, hermitian_symmetrize, inverse_transform, ComplexField, KGrid, RealGrid,
};
use crate::map::{map_argument, map_argument_self_conjugate, map_modulus_gaussian_conjugate};
use crate::metrics::ReconstructionResult;

/// Relative floor applied to the per-frequency sd, keeping degenerate
/// databases (e.g. identical images) from yielding infinite prior
/// precision.
const TAU_FLOOR_REL: f64 = 1e-6;

/// Per-frequency empirical prior: modulus mean and sd planes plus the
/// pseudo-observation weight.
#[derive(Debug, Clone)]
pub struct EmpiricalPrior {
    grid: KGrid,
    mu: Vec<f64>,
    tau: Vec<f64>,
    pub m: f64,
    pub source_count: usize,
}

impl EmpiricalPrior {
    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn mu_at(&self, kx: i32, ky: i32) -> f64 {
        self.mu[self.grid.storage_index(kx, ky)]
    }

    pub fn tau_at(&self, kx: i32, ky: i32) -> f64 {
        self.tau[self.grid.storage_index(kx, ky)]
    }

    /// Change the pseudo-observation weight without re-estimating.
    pub fn with_weight(mut self, m: f64) -> Result<Self> {
        check_weight(m)?;
        self.m = m;
        Ok(self)
    }
}

fn check_weight(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("prior weight m must be positive, got {m}")))
    }
}

/// Estimate the empirical prior from a database of images, weighting it as
/// `m` pseudo-observations.
///
/// Only the modulus is modeled empirically; the argument prior stays
/// uniform on the circle.
pub fn estimate_empirical_prior(db: &[RealGrid], m: f64) -> Result<EmpiricalPrior> {
    estimate_empirical_prior_with(db, m, false)
}

/// As [`estimate_empirical_prior`]; `normalize` standardizes every image
/// to zero mean and unit sd first (off by default: database images are
/// used as-is).
pub fn estimate_empirical_prior_with(
    db: &[RealGrid],
    m: f64,
    normalize: bool,
) -> Result<EmpiricalPrior> {
    check_weight(m)?;
    if db.len() < 2 {
        return Err(Error::Estimation(format!(
            "empirical prior needs >= 2 images, got {}",
            db.len()
        )));
    }
    let (n_x, n_y) = (db[0].n_x(), db[0].n_y());
    if db.iter().any(|img| img.n_x() != n_x || img.n_y() != n_y) {
        return Err(Error::Input("database images must share dimensions".into()));
    }

    let fields: Vec<ComplexField> = db
        .par_iter()
        .map(|img| {
            if normalize {
                let mean = img.mean();
                let n = img.len() as f64;
                let sd = (img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (n - 1.0))
                    .sqrt()
                    .max(1e-12);
                let standardized = RealGrid::from_vec(
                    n_x,
                    n_y,
                    img.data().iter().map(|v| (v - mean) / sd).collect(),
                )?;
                forward_transform(&standardized)
            } else {
                forward_transform(img)
            }
        })
        .collect::<Result<_>>()?;

    let grid = *fields[0].grid();
    let count = fields.len() as f64;
    let mut mu = vec![0.0; grid.len()];
    let mut tau = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let (kx, ky) = grid.frequency_at(i);
        let moduli: Vec<f64> = fields.iter().map(|f| f.modulus_at(kx, ky)).collect();
        let mean = moduli.iter().sum::<f64>() / count;
        let var = moduli.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        mu[i] = mean;
        tau[i] = var.sqrt();
    }
    let floor = TAU_FLOOR_REL * (mu.iter().sum::<f64>() / mu.len() as f64).max(f64::MIN_POSITIVE);
    for t in &mut tau {
        *t = t.max(floor);
    }

    Ok(EmpiricalPrior {
        grid,
        mu,
        tau,
        m,
        source_count: db.len(),
    })
}

/// MAP reconstruction under the empirical prior: per-frequency conjugate
/// update of the modulus, data argument, origin passed through.
pub fn ddbifs_reconstruct(
    y: &RealGrid,
    prior: &EmpiricalPrior,
    sigma: f64,
) -> Result<ReconstructionResult> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let start = std::time::Instant::now();
    let data = forward_transform(y)?;
    let grid = *data.grid();
    if grid != prior.grid {
        return Err(Error::Dimension(format!(
            "data grid {}x{} does not match prior grid {}x{}",
            grid.n_x(),
            grid.n_y(),
            prior.grid.n_x(),
            prior.grid.n_y()
        )));
    }

    let points: Vec<(i32, i32)> = grid
        .points()
        .filter(|&(kx, ky)| {
            (kx, ky) != (0, 0) && (grid.is_canonical(kx, ky) || grid.is_self_conjugate(kx, ky))
        })
        .collect();
    let solved: Vec<((i32, i32), Complex64)> = points
        .par_iter()
        .map(|&(kx, ky)| -> Result<((i32, i32), Complex64)> {
            let value = data.value_at(kx, ky);
            let rho = map_modulus_gaussian_conjugate(
                value.norm(),
                prior.mu_at(kx, ky),
                prior.tau_at(kx, ky),
                sigma,
                prior.m,
            )
            .map_err(|e| e.at_frequency(kx, ky))?;
            let theta = if grid.is_self_conjugate(kx, ky) {
                map_argument_self_conjugate(value)
            } else {
                map_argument(value)
            };
            Ok(((kx, ky), Complex64::from_polar(rho, theta)))
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

/// Persist an empirical prior: one ASCII header line
/// `ddbifs-prior <n_x> <n_y> <m> <count>` followed by the mu plane and the
/// tau plane as little-endian f32 in storage order.
pub fn save_empirical_prior(prior: &EmpiricalPrior, path: impl AsRef<Path>) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(
        file,
        "ddbifs-prior {} {} {} {}",
        prior.grid.n_x(),
        prior.grid.n_y(),
        prior.m,
        prior.source_count
    )?;
    for plane in [&prior.mu, &prior.tau] {
        for &v in plane.iter() {
            file.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_empirical_prior(path: impl AsRef<Path>) -> Result<EmpiricalPrior> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("missing ddbifs-prior header".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Parse("header is not ASCII".into()))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some("ddbifs-prior") {
        return Err(Error::Parse("expected ddbifs-prior header".into()));
    }
    let n_x: usize = parse_tok(parts.next())?;
    let n_y: usize = parse_tok(parts.next())?;
    let m: f64 = parse_tok(parts.next())?;
    let source_count: usize = parse_tok(parts.next())?;
    check_weight(m)?;

    let grid = KGrid::new(n_x, n_y)?;
    let n = grid.len();
    let payload = &bytes[nl + 1..];
    if payload.len() < 2 * n * 4 {
        return Err(Error::Parse(format!(
            "prior payload truncated: {} of {} bytes",
            payload.len(),
            2 * n * 4
        )));
    }
    let plane = |offset: usize| -> Vec<f64> {
        payload[offset..offset + n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect()
    };
    Ok(EmpiricalPrior {
        grid,
        mu: plane(0),
        tau: plane(n * 4),
        m,
        source_count,
    })
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad header token {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate_bumps, BumpConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noise_db(n: usize, count: usize, seed: u64) -> Vec<RealGrid> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                RealGrid::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_images_floor_tau() {
        let img = noise_db(16, 1, 3).pop().unwrap();
        let db = vec![img.clone(), img.clone(), img.clone()];
        let prior = estimate_empirical_prior(&db, 1.0).unwrap();
        let field = forward_transform(&img).unwrap();
        let grid = *field.grid();
        let floor = prior.tau_at(1, 0);
        for (kx, ky) in grid.points() {
            assert_eq!(prior.tau_at(kx, ky), floor);
            assert!((prior.mu_at(kx, ky) - field.modulus_at(kx, ky)).abs() < 1e-12);
        }
        assert!(floor > 0.0);
    }

    #[test]
    fn white_noise_database_has_flat_mu() {
        let db = noise_db(32, 500, 17);
        let prior = estimate_empirical_prior(&db, 1.0).unwrap();
        let grid = prior.grid;
        // Radius-binned means of mu stay within 10% of their overall mean.
        // The four self-conjugate points are excluded: their modulus is
        // |real Gaussian|, whose mean sits ~10% below the complex points'.
        let mut sums = vec![0.0; 32];
        let mut counts = vec![0usize; 32];
        for (kx, ky) in grid.points() {
            if (kx, ky) == (0, 0) || grid.is_self_conjugate(kx, ky) {
                continue;
            }
            let bin = grid.radius(kx, ky).round() as usize;
            if bin < sums.len() {
                sums[bin] += prior.mu_at(kx, ky);
                counts[bin] += 1;
            }
        }
        let bins: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&s, &c)| s / c as f64)
            .collect();
        let overall = bins.iter().sum::<f64>() / bins.len() as f64;
        for b in &bins {
            assert!(
                (b - overall).abs() < 0.1 * overall,
                "bin mean {b} vs overall {overall}"
            );
        }
    }

    #[test]
    fn bump_database_mu_decreases_with_radius() {
        let db: Vec<RealGrid> = (0..300)
            .map(|s| simulate_bumps(&BumpConfig::new(8.0, 64, 64, 7000 + s as u64)).unwrap())
            .collect();
        let prior = estimate_empirical_prior(&db, 1.0).unwrap();
        let grid = prior.grid;
        // Binned means over coarse radius bands decrease overall.
        let band = |lo: f64, hi: f64| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (kx, ky) in grid.points() {
                let r = grid.radius(kx, ky);
                if r > lo && r <= hi {
                    sum += prior.mu_at(kx, ky);
                    count += 1;
                }
            }
            sum / count as f64
        };
        let bands = [band(0.0, 4.0), band(4.0, 8.0), band(8.0, 16.0), band(16.0, 32.0)];
        for w in bands.windows(2) {
            assert!(w[1] < w[0], "bands not decreasing: {bands:?}");
        }
    }

    #[test]
    fn input_validation() {
        let db = noise_db(16, 1, 5);
        assert!(matches!(
            estimate_empirical_prior(&db, 1.0),
            Err(Error::Estimation(_))
        ));
        let mut db = noise_db(16, 3, 6);
        db.push(RealGrid::zeros(32, 32));
        assert!(matches!(
            estimate_empirical_prior(&db, 1.0),
            Err(Error::Input(_))
        ));
        let db = noise_db(16, 3, 7);
        assert!(estimate_empirical_prior(&db, 0.0).is_err());
    }

    #[test]
    fn weight_limits() {
        let db = noise_db(32, 30, 23);
        let y = noise_db(32, 1, 99).pop().unwrap();
        let sigma = 0.3;

        // m -> 0: the prior vanishes and the data comes back.
        let prior = estimate_empirical_prior(&db, 1e-12).unwrap();
        let out = ddbifs_reconstruct(&y, &prior, sigma).unwrap();
        let max_err = out
            .image
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-8, "max err {max_err}");

        // m -> inf: the data is ignored and the output moduli equal mu.
        let prior = estimate_empirical_prior(&db, 1e12).unwrap();
        let out = ddbifs_reconstruct(&y, &prior, sigma).unwrap();
        let field = forward_transform(&out.image).unwrap();
        let grid = *field.grid();
        for (kx, ky) in grid.points() {
            if (kx, ky) == (0, 0) {
                continue;
            }
            let got = field.modulus_at(kx, ky);
            let want = prior.mu_at(kx, ky);
            assert!(
                (got - want).abs() < 1e-6 * want.max(1.0),
                "modulus {got} vs mu {want} at ({kx},{ky})"
            );
        }
    }

    #[test]
    fn per_frequency_map_moves_monotonically_toward_mu() {
        let (y_mod, mu, tau, sigma) = (2.0, 5.0, 0.7, 0.4);
        let mut prev = y_mod;
        let mut prev_dist = y_mod - mu;
        for &m in &[0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let x = map_modulus_gaussian_conjugate(y_mod, mu, tau, sigma, m).unwrap();
            let dist = x - mu;
            assert!(dist.abs() <= prev_dist.abs() + 1e-12);
            assert!(x >= prev - 1e-12, "not monotone: {x} after {prev}");
            prev = x;
            prev_dist = dist;
        }
    }

    #[test]
    fn reconstruction_is_affine_in_data_moduli() {
        // With fixed arguments the conjugate update is affine in the data
        // moduli: reconstructing the modulus-midpoint input equals the
        // midpoint of the reconstructions.
        let db = noise_db(16, 20, 31);
        let prior = estimate_empirical_prior(&db, 2.0).unwrap();
        let sigma = 0.5;

        let y1 = noise_db(16, 1, 41).pop().unwrap();
        let f1 = forward_transform(&y1).unwrap();
        let grid = *f1.grid();
        // Same arguments, scaled moduli.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f2 = f1.clone();
        for (kx, ky) in grid.canonical_points() {
            let v = f1.value_at(kx, ky);
            f2.set_value(kx, ky, v * rng.gen_range(0.2..2.0));
        }
        let f2 = hermitian_symmetrize(&f2);
        let y2 = inverse_transform(&f2).unwrap();

        let mut fm = f1.clone();
        for (kx, ky) in grid.canonical_points() {
            let a = f1.value_at(kx, ky);
            let b = f2.value_at(kx, ky);
            // Midpoint of moduli at the shared argument.
            let arg = crate::kspace::argument(a);
            fm.set_value(
                kx,
                ky,
                Complex64::from_polar(0.5 * (a.norm() + b.norm()), arg),
            );
        }
        let ym = inverse_transform(&hermitian_symmetrize(&fm)).unwrap();

        let r1 = forward_transform(&ddbifs_reconstruct(&y1, &prior, sigma).unwrap().image).unwrap();
        let r2 = forward_transform(&ddbifs_reconstruct(&y2, &prior, sigma).unwrap().image).unwrap();
        let rm = forward_transform(&ddbifs_reconstruct(&ym, &prior, sigma).unwrap().image).unwrap();
        for (kx, ky) in grid.canonical_points() {
            let mid = 0.5 * (r1.modulus_at(kx, ky) + r2.modulus_at(kx, ky));
            let got = rm.modulus_at(kx, ky);
            assert!(
                (got - mid).abs() < 1e-9 * mid.max(1.0),
                "superposition broken at ({kx},{ky}): {got} vs {mid}"
            );
        }
    }

    #[test]
    fn prior_persistence_round_trip() {
        let db = noise_db(16, 10, 51);
        let prior = estimate_empirical_prior(&db, 2.5).unwrap();
        let dir = std::env::temp_dir().join(format!("bifs-ddbifs-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prior.ddb");
        save_empirical_prior(&prior, &path).unwrap();
        let back = load_empirical_prior(&path).unwrap();
        assert_eq!(back.m, 2.5);
        assert_eq!(back.source_count, 10);
        for (kx, ky) in prior.grid.points() {
            assert!((back.mu_at(kx, ky) - prior.mu_at(kx, ky)).abs() < 1e-6);
            assert!((back.tau_at(kx, ky) - prior.tau_at(kx, ky)).abs() < 1e-6);
        }
    }
}
