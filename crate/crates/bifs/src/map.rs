//! Per-frequency MAP solvers and the full-image MAP reconstruction.
//!
//! Because the posterior factorizes over frequencies, the MAP image is
//! obtained by maximizing a one-dimensional posterior at each frequency of
//! the independent half-plane, reflecting conjugates, and inverse
//! transforming. There is no image-space iteration anywhere.
//!
//! Solvers per prior/likelihood pairing:
//!
//! - exponential modulus prior + Rician likelihood: fixed-point iteration
//!   `rho <- r b(rho) - sigma^2/m` with `b` the Bessel ratio (clamped to 0
//!   when the stationary point is negative or the boundary wins);
//! - square-root-exponential prior (exponential power) + Rician: the
//!   closed-form positive root, iterated since the Bessel ratio depends on
//!   `rho`;
//! - truncated-Gaussian prior + Gaussian modulus likelihood: the conjugate
//!   precision-weighted average;
//! - any other pairing: numeric scan-and-refine over the 1-D posterior,
//!   also used as the independent cross-check oracle for all of the above.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{
    argument, forward_transform, hermitian_symmetrize, inverse_transform, ComplexField, RealGrid,
};
use crate::metrics::ReconstructionResult;
use crate::prior::{LikelihoodSpec, PriorSpec, ResolvedPrior};
use crate::special::bessel_ratio;

/// Tolerances and iteration caps for the per-frequency solvers.
#[derive(Debug, Clone, Copy)]
pub struct MapConfig {
    /// Stop the fixed-point iteration when `|rho_{n+1} - rho_n|` drops
    /// below this.
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Grid resolution of the numeric fallback solver.
    pub fallback_grid_points: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            fixed_point_tol: 1e-10,
            fixed_point_max_iter: 100,
            fallback_grid_points: 2048,
        }
    }
}

impl MapConfig {
    fn validate(&self) -> Result<()> {
        if !(self.fixed_point_tol > 0.0) || self.fixed_point_max_iter == 0 {
            return Err(Error::Domain(
                "MapConfig requires tol > 0 and max_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_solver_inputs(r: f64, sigma: f64, m: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("observed modulus must be >= 0, got {r}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) || !(m > 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!(
            "sigma and m must be positive and finite, got sigma={sigma}, m={m}"
        )));
    }
    Ok(())
}

/// Run a fixed-point iteration with a Steffensen (Aitken) rescue pass for
/// near-tangent cases where plain iteration contracts too slowly.
///
/// Returns `Ok(None)` when an iterate leaves the feasible region (goes
/// negative), which for monotone maps means no nonnegative fixed point
/// exists.
fn iterate_fixed_point(
    phi: impl Fn(f64) -> f64,
    start: f64,
    cfg: &MapConfig,
) -> Result<Option<f64>> {
    let mut rho = start;
    for _ in 0..cfg.fixed_point_max_iter {
        let next = phi(rho);
        if next < 0.0 {
            return Ok(None);
        }
        if (next - rho).abs() < cfg.fixed_point_tol {
            return Ok(Some(next));
        }
        rho = next;
    }
    // Aitken delta-squared extrapolation.
    for _ in 0..cfg.fixed_point_max_iter {
        let r1 = phi(rho);
        if r1 < 0.0 {
            return Ok(None);
        }
        let r2 = phi(r1);
        if r2 < 0.0 {
            return Ok(None);
        }
        let denom = r2 - 2.0 * r1 + rho;
        let accel = if denom.abs() > 1e-300 {
            rho - (r1 - rho).powi(2) / denom
        } else {
            r2
        };
        let next = if accel.is_finite() && accel >= 0.0 && (phi(accel) - accel).abs() <= (r2 - r1).abs() {
            accel
        } else {
            r2
        };
        if (phi(next) - next).abs() < cfg.fixed_point_tol {
            return Ok(Some(next));
        }
        rho = next;
    }
    Err(Error::Convergence {
        max_iter: 2 * cfg.fixed_point_max_iter,
    })
}

/// Derivative of the Bessel ratio, `b'(z) = 1 - b/z - b^2`.
fn bessel_ratio_deriv(z: f64) -> f64 {
    if z < 1e-4 {
        // Series: b(z) = z/2 - z^3/16 + ...
        0.5 - 3.0 * z * z / 16.0
    } else {
        let b = bessel_ratio(z);
        1.0 - b / z - b * b
    }
}

/// Newton iteration on the posterior score for the exponential prior. The
/// score `s(rho) = -rho/s2 - 1/m + (r/s2) b(r rho/s2)` is concave (its
/// derivative decreases), so from the right of the largest root Newton
/// descends onto it monotonically, even when the fixed-point map is
/// tangent there and plain iteration crawls. Returns `None` when no
/// nonnegative root exists.
fn exponential_score_newton(r: f64, s2: f64, m: f64, start: f64, cfg: &MapConfig) -> Option<f64> {
    let score = |rho: f64| -rho / s2 - 1.0 / m + (r / s2) * bessel_ratio(r * rho / s2);
    let deriv = |rho: f64| -1.0 / s2 + (r * r / (s2 * s2)) * bessel_ratio_deriv(r * rho / s2);
    let mut rho = start.max(0.0);
    for _ in 0..4 * cfg.fixed_point_max_iter {
        let s = score(rho);
        // |phi(rho) - rho| = s2 |score(rho)|: same convergence measure as
        // the fixed-point loop.
        if (s2 * s).abs() < cfg.fixed_point_tol {
            return Some(rho);
        }
        let d = deriv(rho);
        if d >= 0.0 {
            // Left of the score's maximum without having crossed zero:
            // the score never reaches zero, so there is no interior mode.
            return None;
        }
        let next = rho - s / d;
        if !next.is_finite() || next < 0.0 {
            return None;
        }
        rho = next;
    }
    // Concave-score Newton converges monotonically; reaching the cap means
    // the tolerance is tighter than the arithmetic. Accept the iterate.
    Some(rho)
}

/// MAP modulus under an exponential prior (mean `m`) and Rician likelihood.
///
/// Iterates `rho <- r b(r rho / sigma^2) - sigma^2/m` from `rho_0 = r`. The
/// iterates decrease monotonically onto the rightmost stationary point;
/// when they go negative no nonnegative stationary point exists and the
/// boundary mode 0 is returned. Near-tangent cases where the iteration
/// stalls are finished by Newton on the (concave) posterior score. When
/// both a boundary and an interior mode exist the denser one wins,
/// matching the numeric solver.
pub fn map_modulus_exponential(r: f64, sigma: f64, m: f64, cfg: &MapConfig) -> Result<f64> {
    check_solver_inputs(r, sigma, m)?;
    cfg.validate()?;
    let s2 = sigma * sigma;
    if r == 0.0 {
        // b(0) = 0 makes the candidate -sigma^2/m negative.
        return Ok(0.0);
    }
    let phi = |rho: f64| r * bessel_ratio(r * rho / s2) - s2 / m;
    let mut iterate = r;
    let mut converged = None;
    for _ in 0..cfg.fixed_point_max_iter {
        let next = phi(iterate);
        if next < 0.0 {
            return Ok(0.0);
        }
        if (next - iterate).abs() < cfg.fixed_point_tol {
            converged = Some(next);
            break;
        }
        iterate = next;
    }
    let rho = match converged {
        Some(rho) => rho,
        None => match exponential_score_newton(r, s2, m, iterate, cfg) {
            Some(rho) => rho,
            None => return Ok(0.0),
        },
    };
    // Discordant prior/likelihood can leave a second mode at the boundary.
    let logpost = |x: f64| {
        -(x * x) / (2.0 * s2) + r * x / s2 + crate::special::i0e(r * x / s2).ln() - x / m
    };
    if logpost(0.0) > logpost(rho) {
        return Ok(0.0);
    }
    Ok(rho)
}

/// MAP modulus when the squared modulus has an exponential prior with mean
/// `m` (the torus-MRF power spectrum prior) and the likelihood is Rician.
///
/// The stationary condition is a quadratic in `rho` given the Bessel ratio
/// `b`; its positive root is iterated from `rho_0 = r` until `b` stops
/// moving. The root is strictly positive: the prior density vanishes at 0,
/// pushing the mode off the boundary.
pub fn map_modulus_sqexp(r: f64, sigma: f64, m: f64, cfg: &MapConfig) -> Result<f64> {
    check_solver_inputs(r, sigma, m)?;
    cfg.validate()?;
    let s2 = sigma * sigma;
    let closed_form = |b: f64| {
        let t = b * r * m;
        (t + (t * t + 8.0 * s2 * s2 * m + 4.0 * (sigma * m).powi(2)).sqrt()) / (4.0 * s2 + 2.0 * m)
    };
    let phi = |rho: f64| closed_form(bessel_ratio(r * rho / s2));
    match iterate_fixed_point(phi, r, cfg)? {
        Some(rho) => Ok(rho),
        // phi > 0 everywhere, so this branch is unreachable; keep the
        // clamp for safety.
        None => Ok(0.0),
    }
}

/// Conjugate MAP modulus: truncated-Gaussian prior `TN(mu, tau^2, 0, inf)`
/// weighted as `m_weight` pseudo-observations, Gaussian modulus likelihood.
///
/// The precision-weighted average, clamped at 0 (the truncated and
/// untruncated modes coincide whenever the untruncated mode is
/// nonnegative).
pub fn map_modulus_gaussian_conjugate(
    y_mod: f64,
    mu: f64,
    tau: f64,
    sigma: f64,
    m_weight: f64,
) -> Result<f64> {
    if !(y_mod >= 0.0 && mu >= 0.0) {
        return Err(Error::Domain(format!(
            "moduli must be >= 0, got y={y_mod}, mu={mu}"
        )));
    }
    if !(tau > 0.0 && sigma > 0.0 && m_weight >= 0.0) {
        return Err(Error::Domain(format!(
            "tau, sigma must be positive and m >= 0, got tau={tau}, sigma={sigma}, m={m_weight}"
        )));
    }
    let prior_precision = m_weight / (tau * tau);
    let data_precision = 1.0 / (sigma * sigma);
    let mode = (prior_precision * mu + data_precision * y_mod) / (prior_precision + data_precision);
    Ok(mode.max(0.0))
}

/// Numeric 1-D posterior maximizer: dense grid scan followed by
/// golden-section refinement in the best bracket.
///
/// Scans `[0, max(10 r, 10 prior_scale)]` and, to keep resolution when the
/// prior scale is enormous (near-flat priors), also the likelihood-sized
/// range `[0, max(10 r, 1)]`; the denser refined candidate wins. Robust to
/// bimodal discordant posteriors by construction: the global grid maximum
/// picks the higher mode, with exact ties resolved toward smaller `rho`.
pub fn map_modulus_numeric(
    prior_logpdf: impl Fn(f64) -> f64,
    likelihood_logpdf: impl Fn(f64) -> f64,
    r: f64,
    prior_scale: f64,
    cfg: &MapConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(r >= 0.0) || !(prior_scale >= 0.0) {
        return Err(Error::Domain(
            "numeric solver needs r >= 0 and prior_scale >= 0".into(),
        ));
    }
    let logpost = |rho: f64| prior_logpdf(rho) + likelihood_logpdf(rho);
    let r1 = f64::max(10.0 * r, 10.0 * prior_scale).max(1e-6);
    let r2 = f64::max(10.0 * r, 1.0);
    let mut best: Option<(f64, f64)> = None;
    for r_max in [r1, r2] {
        if let Some((x, v)) = scan_and_refine(&logpost, r_max, cfg.fallback_grid_points) {
            best = match best {
                None => Some((x, v)),
                Some((bx, bv)) => {
                    if v > bv || (v == bv && x < bx) {
                        Some((x, v))
                    } else {
                        Some((bx, bv))
                    }
                }
            };
        }
    }
    match best {
        Some((x, _)) => Ok(x),
        None => Err(Error::Numerical(
            "posterior density is not finite anywhere on the search range".into(),
        )),
    }
}

fn scan_and_refine(
    logpost: &impl Fn(f64) -> f64,
    r_max: f64,
    grid_points: usize,
) -> Option<(f64, f64)> {
    let n = grid_points.max(8);
    let step = r_max / n as f64;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..=n {
        let v = logpost(i as f64 * step);
        if v.is_finite() {
            // Strict comparison: the lowest-rho maximizer wins ties.
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
    }
    let (i, _) = best?;
    let lo = if i == 0 { 0.0 } else { (i - 1) as f64 * step };
    let hi = ((i + 1).min(n)) as f64 * step;
    Some(golden_max(logpost, lo, hi))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a < 1e-13 * b.max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// MAP argument at a free (non-self-conjugate) frequency: with a uniform
/// circular prior and a likelihood symmetric about the data argument, the
/// posterior peaks at the data argument itself.
pub fn map_argument(data_value: Complex64) -> f64 {
    argument(data_value)
}

/// MAP argument at a self-conjugate frequency, where the value is
/// restricted to the real line: 0 for nonnegative real part, pi otherwise.
pub fn map_argument_self_conjugate(data_value: Complex64) -> f64 {
    if data_value.re >= 0.0 {
        0.0
    } else {
        std::f64::consts::PI
    }
}

/// Solve the per-frequency MAP modulus for a resolved prior/likelihood
/// pairing. Matched pairings use their dedicated solver; anything else
/// falls back to the numeric maximizer.
pub fn solve_modulus(
    prior: &ResolvedPrior,
    lik: &LikelihoodSpec,
    r: f64,
    cfg: &MapConfig,
) -> Result<f64> {
    // Zero-scale priors (outside a band, for instance) pin the modulus.
    if let Some(point) = prior.point_mass() {
        return Ok(point);
    }
    match (prior, lik) {
        (ResolvedPrior::Exponential { mean }, LikelihoodSpec::RicianFourier { sigma }) => {
            map_modulus_exponential(r, *sigma, *mean, cfg)
        }
        (ResolvedPrior::SqrtExponential { mean_power }, LikelihoodSpec::RicianFourier { sigma }) => {
            map_modulus_sqexp(r, *sigma, *mean_power, cfg)
        }
        (ResolvedPrior::TruncGaussian { mean, sd }, LikelihoodSpec::GaussianModulus { sigma }) => {
            map_modulus_gaussian_conjugate(r, *mean, *sd, *sigma, 1.0)
        }
        (prior, lik) => {
            let p = *prior;
            let l = *lik;
            map_modulus_numeric(
                move |rho| p.logpdf(rho),
                move |rho| l.modulus_logpdf(r, rho).unwrap_or(f64::NEG_INFINITY),
                r,
                p.scale(),
                cfg,
            )
        }
    }
}

/// Full-image MAP reconstruction.
///
/// Transforms the data, solves the 1-D MAP problem independently at every
/// frequency of the canonical half-plane (in parallel; the solvers are
/// pure, so the result is independent of scheduling), keeps the data value
/// at the origin (improper uniform prior), reflects conjugates, and
/// inverse transforms.
pub fn reconstruct_map(
    y: &RealGrid,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    cfg: &MapConfig,
) -> Result<ReconstructionResult> {
    let start = std::time::Instant::now();
    let data = forward_transform(y)?;
    let grid = *data.grid();

    let points: Vec<(i32, i32)> = grid
        .points()
        .filter(|&(kx, ky)| (kx, ky) != (0, 0) && (grid.is_canonical(kx, ky) || grid.is_self_conjugate(kx, ky)))
        .collect();

    let solved: Vec<((i32, i32), Complex64)> = points
        .par_iter()
        .map(|&(kx, ky)| -> Result<((i32, i32), Complex64)> {
            let value = data.value_at(kx, ky);
            let solve = || -> Result<Complex64> {
                let resolved = prior.resolve(&grid, kx, ky)?;
                let rho = solve_modulus(&resolved, lik, value.norm(), cfg)?;
                let theta = if grid.is_self_conjugate(kx, ky) {
                    map_argument_self_conjugate(value)
                } else {
                    map_argument(value)
                };
                Ok(Complex64::from_polar(rho, theta))
            };
            solve()
                .map(|v| ((kx, ky), v))
                .map_err(|e| e.at_frequency(kx, ky))
        })
        .collect::<Result<_>>()?;

    let mut map_field = ComplexField::zeros(grid);
    map_field.set_value(0, 0, data.value_at(0, 0));
    for ((kx, ky), v) in solved {
        map_field.set_value(kx, ky, v);
    }
    let map_field = hermitian_symmetrize(&map_field);
    let image = inverse_transform(&map_field)?;

    let mut result = ReconstructionResult::new(image);
    result.diagnostics.timing_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}
