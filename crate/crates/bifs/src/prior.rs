//! Per-frequency prior and likelihood densities.
//!
//! Priors are specified for the modulus of the complex signal at each
//! frequency, with a parameter function supplying the distribution
//! parameter as a function of `|k|`; the argument prior is uniform on the
//! circle. The origin `k = (0,0)` (the overall image mean) carries an
//! improper uniform prior, so posterior estimates pass the data through
//! there.
//!
//! White Gaussian image noise turns into complex Gaussian noise in Fourier
//! space; the induced likelihood for the modulus is Rician and for the
//! argument a wrapped form involving the Gaussian CDF. Both are evaluated
//! in log space with exponentially scaled Bessel terms so that large
//! signal-to-noise ratios do not overflow.

use crate::error::{Error, Result};
use crate::kspace::{KGrid, RealGrid};
use crate::paramfn::ParamFn;
use crate::special::{i0e, normal_cdf, scaled_lower_tail};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Modulus prior family; each holds the parameter function that defines
/// its parameter over k-space.
#[derive(Debug, Clone, PartialEq)]
pub enum ModulusFamily {
    /// `pi(rho) = (1/m) exp(-rho/m)` with mean `m = f(|k|)`.
    Exponential { mean: ParamFn },
    /// The square of the modulus is exponential with mean `m = f(|k|)`:
    /// `pi(rho) = (2 rho / m) exp(-rho^2/m)`.
    SqrtExponential { mean_power: ParamFn },
    /// Gaussian `N(mu, tau^2)` truncated to `[0, inf)`. When `sd` is absent
    /// it defaults to `scale_ratio * mean`.
    TruncGaussian { mean: ParamFn, sd: Option<ParamFn> },
}

/// Prior specification: a modulus family plus the uniform-circle argument
/// prior and the improper uniform origin rule (both implicit).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub modulus: ModulusFamily,
    /// Ratio `c` with `sd = c * mean` for `TruncGaussian` without an
    /// explicit sd function.
    pub scale_ratio: f64,
}

impl PriorSpec {
    pub fn exponential(mean: ParamFn) -> Self {
        PriorSpec {
            modulus: ModulusFamily::Exponential { mean },
            scale_ratio: 1.0,
        }
    }

    pub fn sqrt_exponential(mean_power: ParamFn) -> Self {
        PriorSpec {
            modulus: ModulusFamily::SqrtExponential { mean_power },
            scale_ratio: 1.0,
        }
    }

    pub fn trunc_gaussian(mean: ParamFn, sd: Option<ParamFn>, scale_ratio: f64) -> Self {
        PriorSpec {
            modulus: ModulusFamily::TruncGaussian { mean, sd },
            scale_ratio,
        }
    }

    /// Evaluate the parameter functions at one off-origin frequency.
    ///
    /// Zero parameter values are allowed: a band-style parameter function
    /// is exactly zero outside its band, where the prior degenerates to a
    /// point mass (see [`ResolvedPrior::point_mass`]).
    pub fn resolve(&self, grid: &KGrid, kx: i32, ky: i32) -> Result<ResolvedPrior> {
        if (kx, ky) == (0, 0) {
            return Err(Error::Domain(
                "the origin carries an improper uniform prior; no parameters to resolve".into(),
            ));
        }
        match &self.modulus {
            ModulusFamily::Exponential { mean } => Ok(ResolvedPrior::Exponential {
                mean: mean.eval_at(grid, kx, ky)?,
            }),
            ModulusFamily::SqrtExponential { mean_power } => Ok(ResolvedPrior::SqrtExponential {
                mean_power: mean_power.eval_at(grid, kx, ky)?,
            }),
            ModulusFamily::TruncGaussian { mean, sd } => {
                let mu = mean.eval_at(grid, kx, ky)?;
                let tau = match sd {
                    Some(f) => f.eval_at(grid, kx, ky)?,
                    None => self.scale_ratio * mu,
                };
                Ok(ResolvedPrior::TruncGaussian { mean: mu, sd: tau })
            }
        }
    }
}

/// Prior at a single frequency, parameters already evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedPrior {
    Exponential { mean: f64 },
    SqrtExponential { mean_power: f64 },
    TruncGaussian { mean: f64, sd: f64 },
}

impl ResolvedPrior {
    /// A zero-scale prior has all its mass at one point (0, or the mean
    /// for the truncated Gaussian); such priors carry no density and are
    /// resolved before any solver or sampler runs.
    pub fn point_mass(&self) -> Option<f64> {
        match *self {
            ResolvedPrior::Exponential { mean } if mean <= 0.0 => Some(0.0),
            ResolvedPrior::SqrtExponential { mean_power } if mean_power <= 0.0 => Some(0.0),
            ResolvedPrior::TruncGaussian { mean, sd } if sd <= 0.0 => Some(mean.max(0.0)),
            _ => None,
        }
    }

    /// Log density at `rho >= 0`. Callers must handle [`point_mass`]
    /// priors first; a degenerate prior has no density.
    ///
    /// [`point_mass`]: ResolvedPrior::point_mass
    pub fn logpdf(&self, rho: f64) -> f64 {
        debug_assert!(rho >= 0.0);
        debug_assert!(self.point_mass().is_none(), "degenerate prior has no density");
        match *self {
            ResolvedPrior::Exponential { mean } => -rho / mean - mean.ln(),
            ResolvedPrior::SqrtExponential { mean_power } => {
                if rho == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (2.0 * rho / mean_power).ln() - rho * rho / mean_power
                }
            }
            ResolvedPrior::TruncGaussian { mean, sd } => {
                let z = (rho - mean) / sd;
                // Renormalized to [0, inf).
                -0.5 * z * z
                    - sd.ln()
                    - 0.5 * LN_2PI
                    - (1.0 - normal_cdf(-mean / sd)).ln()
            }
        }
    }

    /// Characteristic scale, used to bound numeric search and quadrature
    /// ranges.
    pub fn scale(&self) -> f64 {
        match *self {
            ResolvedPrior::Exponential { mean } => mean,
            ResolvedPrior::SqrtExponential { mean_power } => mean_power.sqrt(),
            ResolvedPrior::TruncGaussian { mean, sd } => mean + sd,
        }
    }
}

/// Log density of the prior for the modulus at an off-origin frequency.
pub fn prior_logpdf(spec: &PriorSpec, rho: f64, grid: &KGrid, kx: i32, ky: i32) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("modulus must be >= 0, got {rho}")));
    }
    let resolved = spec.resolve(grid, kx, ky)?;
    if resolved.point_mass().is_some() {
        return Err(Error::Domain(format!(
            "prior is degenerate (zero scale) at k=({kx},{ky}); it has no density"
        )));
    }
    Ok(resolved.logpdf(rho))
}

/// Fourier-domain noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LikelihoodSpec {
    /// Complex Gaussian noise with per-component sd `sigma`: Rician modulus,
    /// wrapped argument.
    RicianFourier { sigma: f64 },
    /// Gaussian noise applied to the modulus itself (a deliberately simple
    /// conjugate model).
    GaussianModulus { sigma: f64 },
}

impl LikelihoodSpec {
    pub fn rician(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(LikelihoodSpec::RicianFourier { sigma })
    }

    pub fn gaussian_modulus(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(LikelihoodSpec::GaussianModulus { sigma })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            LikelihoodSpec::RicianFourier { sigma } => sigma,
            LikelihoodSpec::GaussianModulus { sigma } => sigma,
        }
    }

    /// Log likelihood of an observed modulus `r` given true modulus `rho`.
    pub fn modulus_logpdf(&self, r: f64, rho: f64) -> Result<f64> {
        match *self {
            LikelihoodSpec::RicianFourier { sigma } => rician_logpdf(r, rho, sigma),
            LikelihoodSpec::GaussianModulus { sigma } => {
                if r < 0.0 || rho < 0.0 {
                    return Err(Error::Domain("moduli must be >= 0".into()));
                }
                let z = (r - rho) / sigma;
                Ok(-0.5 * z * z - sigma.ln() - 0.5 * LN_2PI)
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be finite and positive, got {sigma}")))
    }
}

/// Rician log density of the observed modulus `r` given true modulus `rho`
/// and per-component noise sd `sigma`:
/// `(r/sigma^2) exp(-(r^2+rho^2)/(2 sigma^2)) I_0(r rho / sigma^2)`.
pub fn rician_logpdf(r: f64, rho: f64, sigma: f64) -> Result<f64> {
    if !(r >= 0.0) || !(rho >= 0.0) {
        return Err(Error::Domain(format!(
            "Rician density needs r, rho >= 0, got r={r}, rho={rho}"
        )));
    }
    check_sigma(sigma)?;
    if r == 0.0 {
        // Density vanishes linearly at r = 0.
        return Ok(f64::NEG_INFINITY);
    }
    let s2 = sigma * sigma;
    let z = r * rho / s2;
    // log I_0(z) = z + log i0e(z), stable for large z.
    Ok(r.ln() - s2.ln() - (r * r + rho * rho) / (2.0 * s2) + z + i0e(z).ln())
}

/// Log density of the observed argument `psi` given true modulus `rho`,
/// true argument `theta`, and per-component noise sd `sigma`.
///
/// The textbook form multiplies a growing exponential by a Gaussian lower
/// tail; here the two are combined analytically so the evaluation stays
/// finite at any signal-to-noise ratio.
pub fn rician_argument_logpdf(psi: f64, rho: f64, theta: f64, sigma: f64) -> Result<f64> {
    use std::f64::consts::PI;
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("rho must be >= 0, got {rho}")));
    }
    check_sigma(sigma)?;
    if !(-PI..PI).contains(&psi) || !(-PI..PI).contains(&theta) {
        return Err(Error::Domain(format!(
            "angles must lie in [-pi, pi), got psi={psi}, theta={theta}"
        )));
    }
    let a = rho / sigma;
    let c = (psi - theta).cos();
    let s2 = (1.0 - c * c).max(0.0);
    // pdf = (1/2pi) e^{-a^2 s^2/2} [ e^{-a^2 c^2/2} + sqrt(2pi) a c Phi(a c) ]
    let bracket = if a * c >= 0.0 {
        (-0.5 * (a * c).powi(2)).exp()
            + (2.0 * PI).sqrt() * a * c * normal_cdf(a * c)
    } else {
        // For a c < 0 the two terms cancel almost exactly; factor the
        // common exponential and use the scaled lower tail.
        let t = a * c.abs();
        let one_minus_g = if t > 30.0 {
            // 1 - g(t) = 1/t^2 - 3/t^4 + 15/t^6 - ...
            (1.0 - 3.0 / (t * t) + 15.0 / (t * t * t * t)) / (t * t)
        } else {
            1.0 - scaled_lower_tail(t)
        };
        return Ok(-LN_2PI - 0.5 * a * a * s2 - 0.5 * t * t + one_minus_g.ln());
    };
    Ok(-LN_2PI - 0.5 * a * a * s2 + bracket.ln())
}

/// Estimate the Fourier-domain per-component noise sd from image pixels
/// known to contain only noise.
///
/// Under the unitary transform convention, white image noise of sd `s`
/// yields real and imaginary Fourier components of sd `s / sqrt(2)` each,
/// which is the `sigma` of the Rician likelihood. The conversion factor is
/// tied to the transform normalization; when the noise level is known on
/// another convention, set `sigma` directly in the likelihood instead.
pub fn estimate_noise_sigma(image: &RealGrid, noise_mask: &[bool]) -> Result<f64> {
    if noise_mask.len() != image.len() {
        return Err(Error::Dimension(format!(
            "mask length {} does not match image size {}",
            noise_mask.len(),
            image.len()
        )));
    }
    let selected: Vec<f64> = image
        .data()
        .iter()
        .zip(noise_mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    if selected.len() < 100 {
        return Err(Error::Estimation(format!(
            "noise estimation needs >= 100 masked pixels, got {}",
            selected.len()
        )));
    }
    let n = selected.len() as f64;
    let mean = selected.iter().sum::<f64>() / n;
    let var = selected.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / std::f64::consts::SQRT_2)
}
