//! Parameter functions: maps from k-space radius to a nonnegative prior
//! parameter value.
//!
//! A parameter function defines one prior parameter (for example the
//! exponential mean) at every frequency at once, as a function of the
//! distance `|k|` from the k-space origin. Defining priors through radius
//! alone makes them maximally isotropic; evaluating against the physical
//! radius (cycles per field of view) instead of the index radius makes the
//! same function portable across image resolutions.

use crate::error::{Error, Result};
use crate::kspace::{ComplexField, KGrid};
use crate::special::normal_cdf;

/// Which radius a parameter function consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusMode {
    /// `sqrt(kx^2 + ky^2)` in index units.
    #[default]
    PixelIndex,
    /// `sqrt((kx/fov_x)^2 + (ky/fov_y)^2)`, resolution invariant.
    Physical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamFnKind {
    /// `a / r^b`
    InversePower { amplitude: f64, exponent: f64 },
    /// Indicator of `[r_lo, r_hi]` smoothed by a Gaussian of sd `smooth_sd`
    /// in radius (exact via the Gaussian CDF).
    SmoothedBand { r_lo: f64, r_hi: f64, smooth_sd: f64 },
    /// `a0 / (a1 + a2 r + a3 r^2 + a4 r^3)`
    RationalCubic { coeffs: [f64; 5] },
    /// Weighted sum of components.
    Mixture(Vec<(f64, ParamFnKind)>),
    /// `factor * inner(r)`
    Scaled { factor: f64, inner: Box<ParamFnKind> },
    /// Piecewise-linear interpolation in radius, constant beyond the ends.
    EmpiricalTable { radii: Vec<f64>, values: Vec<f64> },
}

/// A nonnegative function of k-space radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFn {
    kind: ParamFnKind,
    radius_mode: RadiusMode,
}

impl ParamFn {
    pub fn inverse_power(amplitude: f64, exponent: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !(exponent >= 0.0) {
            return Err(Error::Domain(format!(
                "inverse-power requires a > 0 and b >= 0, got a={amplitude}, b={exponent}"
            )));
        }
        Ok(ParamFnKind::InversePower {
            amplitude,
            exponent,
        }
        .into())
    }

    pub fn smoothed_band(r_lo: f64, r_hi: f64, smooth_sd: f64) -> Result<Self> {
        if !(r_lo >= 0.0 && r_lo < r_hi && smooth_sd >= 0.0) {
            return Err(Error::Domain(format!(
                "band requires 0 <= r_lo < r_hi and sd >= 0, got ({r_lo}, {r_hi}, {smooth_sd})"
            )));
        }
        Ok(ParamFnKind::SmoothedBand {
            r_lo,
            r_hi,
            smooth_sd,
        }
        .into())
    }

    pub fn rational_cubic(coeffs: [f64; 5]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("rational-cubic coefficients must be finite".into()));
        }
        Ok(ParamFnKind::RationalCubic { coeffs }.into())
    }

    /// Constant function (a one-row table).
    pub fn constant(value: f64) -> Result<Self> {
        Self::empirical_table(vec![0.0], vec![value])
    }

    pub fn empirical_table(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(Error::Domain(
                "table requires equal, nonzero numbers of radii and values".into(),
            ));
        }
        if radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("table radii must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("table values must be finite and nonnegative".into()));
        }
        Ok(ParamFnKind::EmpiricalTable { radii, values }.into())
    }

    /// Weighted sum. All components must share a radius mode; weights are
    /// nonnegative with at least one positive.
    pub fn mix(components: Vec<(f64, ParamFn)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if components.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("mixture weights must be nonnegative".into()));
        }
        if components.iter().all(|(w, _)| *w == 0.0) {
            return Err(Error::Domain("mixture needs at least one positive weight".into()));
        }
        let mode = components[0].1.radius_mode;
        if components.iter().any(|(_, f)| f.radius_mode != mode) {
            return Err(Error::Domain(
                "mixture components must share a radius mode".into(),
            ));
        }
        Ok(ParamFn {
            kind: ParamFnKind::Mixture(
                components.into_iter().map(|(w, f)| (w, f.kind)).collect(),
            ),
            radius_mode: mode,
        })
    }

    /// Multiply by a nonnegative scalar.
    pub fn scale(self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::Domain(format!("scale factor must be >= 0, got {factor}")));
        }
        Ok(ParamFn {
            kind: ParamFnKind::Scaled {
                factor,
                inner: Box::new(self.kind),
            },
            radius_mode: self.radius_mode,
        })
    }

    pub fn with_radius_mode(mut self, mode: RadiusMode) -> Self {
        self.radius_mode = mode;
        self
    }

    pub fn radius_mode(&self) -> RadiusMode {
        self.radius_mode
    }

    pub fn kind(&self) -> &ParamFnKind {
        &self.kind
    }

    /// The radius this function consumes at a grid point.
    pub fn radius_of(&self, grid: &KGrid, kx: i32, ky: i32) -> f64 {
        match self.radius_mode {
            RadiusMode::PixelIndex => grid.radius(kx, ky),
            RadiusMode::Physical => grid.physical_radius(kx, ky),
        }
    }

    /// Evaluate at a radius (`>= 0`).
    pub fn eval(&self, radius: f64) -> Result<f64> {
        if !(radius >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {radius}")));
        }
        let v = eval_kind(&self.kind, radius)?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Numerical(format!(
                "parameter function produced {v} at radius {radius}"
            )));
        }
        Ok(v)
    }

    /// Evaluate at a grid point using this function's radius mode.
    pub fn eval_at(&self, grid: &KGrid, kx: i32, ky: i32) -> Result<f64> {
        self.eval(self.radius_of(grid, kx, ky))
    }

    /// Rescale so that the function's power matches the observed data power
    /// over all off-origin frequencies:
    /// `sum_{k != 0} (s f(|k|))^2 = sum_{k != 0} |F y_k|^2`.
    pub fn scale_to_data_power(&self, data: &ComplexField) -> Result<ParamFn> {
        let grid = data.grid();
        let mut fn_power = 0.0;
        for (kx, ky) in grid.points() {
            if (kx, ky) == (0, 0) {
                continue;
            }
            fn_power += self.eval_at(grid, kx, ky)?.powi(2);
        }
        if fn_power <= 0.0 {
            return Err(Error::Scaling(
                "parameter function is identically zero off the origin".into(),
            ));
        }
        let data_power = data.off_origin_power();
        if data_power <= 0.0 {
            return Err(Error::Scaling("data has no off-origin power".into()));
        }
        self.clone().scale((data_power / fn_power).sqrt())
    }
}

impl From<ParamFnKind> for ParamFn {
    fn from(kind: ParamFnKind) -> Self {
        ParamFn {
            kind,
            radius_mode: RadiusMode::PixelIndex,
        }
    }
}

fn eval_kind(kind: &ParamFnKind, r: f64) -> Result<f64> {
    match kind {
        ParamFnKind::InversePower {
            amplitude,
            exponent,
        } => {
            if r == 0.0 {
                return Err(Error::Domain(
                    "inverse-power is undefined at radius 0 (the origin prior handles k=0)".into(),
                ));
            }
            Ok(amplitude / r.powf(*exponent))
        }
        ParamFnKind::SmoothedBand {
            r_lo,
            r_hi,
            smooth_sd,
        } => {
            if *smooth_sd == 0.0 {
                Ok(if r >= *r_lo && r <= *r_hi { 1.0 } else { 0.0 })
            } else {
                Ok(normal_cdf((r_hi - r) / smooth_sd) - normal_cdf((r_lo - r) / smooth_sd))
            }
        }
        ParamFnKind::RationalCubic { coeffs } => {
            let [a0, a1, a2, a3, a4] = *coeffs;
            let denom = a1 + r * (a2 + r * (a3 + r * a4));
            if denom <= 0.0 {
                return Err(Error::Domain(format!(
                    "rational-cubic denominator {denom} is not positive at radius {r}"
                )));
            }
            Ok(a0 / denom)
        }
        ParamFnKind::Mixture(components) => {
            let mut sum = 0.0;
            for (w, k) in components {
                if *w > 0.0 {
                    sum += w * eval_kind(k, r)?;
                }
            }
            Ok(sum)
        }
        ParamFnKind::Scaled { factor, inner } => Ok(factor * eval_kind(inner, r)?),
        ParamFnKind::EmpiricalTable { radii, values } => {
            if r <= radii[0] {
                return Ok(values[0]);
            }
            if r >= *radii.last().unwrap() {
                return Ok(*values.last().unwrap());
            }
            let hi = radii.partition_point(|&x| x < r);
            let (r0, r1) = (radii[hi - 1], radii[hi]);
            let (v0, v1) = (values[hi - 1], values[hi]);
            Ok(v0 + (v1 - v0) * (r - r0) / (r1 - r0))
        }
    }
}

/// Outcome of a rational-cubic fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub residual_norm: f64,
    pub iterations: usize,
}

const FIT_MAX_ITER: usize = 400;

/// Least-squares fit of a rational cubic to `(radius, target)` samples.
///
/// Damped Gauss-Newton on log-parameters: every coefficient is
/// parameterized as `exp(t)`, which keeps the denominator positive over the
/// whole radius range. Initialization follows `a0 = max target, a1 = 1`
/// with the remaining coefficients started just above zero.
///
/// The parameters are only identified up to a common scaling of
/// `a0 ... a4`; compare fits by function values.
pub fn fit_rational_cubic(samples: &[(f64, f64)]) -> Result<(ParamFn, FitReport)> {
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 5 {
        return Err(Error::Domain(format!(
            "fit needs >= 5 distinct radii, got {}",
            distinct.len()
        )));
    }
    if samples.iter().any(|&(r, y)| !(r >= 0.0) || !(y >= 0.0) || !y.is_finite()) {
        return Err(Error::Domain("fit samples must be finite with r, y >= 0".into()));
    }

    let y_max = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let a0_init = if y_max > 0.0 { y_max } else { 1e-12 };
    // t = log(a); exp keeps every coefficient positive.
    let mut t = [a0_init.ln(), 0.0, (1e-8f64).ln(), (1e-8f64).ln(), (1e-8f64).ln()];

    let residuals = |t: &[f64; 5]| -> Vec<f64> {
        samples
            .iter()
            .map(|&(r, y)| {
                let d = t[1].exp() + r * (t[2].exp() + r * (t[3].exp() + r * t[4].exp()));
                t[0].exp() / d - y
            })
            .collect()
    };
    let sum_sq = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>();

    let mut err = residuals(&t);
    let mut cost = sum_sq(&err);
    let mut best = (t, cost);
    let mut lambda = 1e-3;
    let mut iterations = 0;

    for iter in 0..FIT_MAX_ITER {
        iterations = iter + 1;
        // Jacobian of residuals w.r.t. t (n x 5).
        let mut jtj = [[0.0; 5]; 5];
        let mut jte = [0.0; 5];
        for (idx, &(r, _)) in samples.iter().enumerate() {
            let d = t[1].exp() + r * (t[2].exp() + r * (t[3].exp() + r * t[4].exp()));
            let m = t[0].exp() / d;
            let row = [
                m,
                -m * t[1].exp() / d,
                -m * t[2].exp() * r / d,
                -m * t[3].exp() * r * r / d,
                -m * t[4].exp() * r * r * r / d,
            ];
            for i in 0..5 {
                jte[i] += row[i] * err[idx];
                for j in 0..5 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }

        let mut improved = false;
        for _ in 0..12 {
            // Marquardt scaling: damp by lambda * diag(JtJ).
            let mut a = jtj;
            for i in 0..5 {
                a[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let mut rhs = [0.0; 5];
            for i in 0..5 {
                rhs[i] = -jte[i];
            }
            if !solve_5x5(&mut a, &mut rhs) {
                lambda *= 10.0;
                continue;
            }
            // Keep log-space steps bounded; huge jumps destabilize the
            // barely-active coefficients near zero.
            let mut trial = t;
            for i in 0..5 {
                trial[i] += rhs[i].clamp(-4.0, 4.0);
                trial[i] = trial[i].clamp(-60.0, 60.0);
            }
            let trial_err = residuals(&trial);
            let trial_cost = sum_sq(&trial_err);
            if trial_cost < cost {
                t = trial;
                err = trial_err;
                cost = trial_cost;
                lambda = (lambda * 0.5).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }

        if cost < best.1 {
            best = (t, cost);
        }
        if !improved || cost <= 1e-24 {
            break;
        }
        if lambda > 1e12 {
            break;
        }
    }

    let (t, cost) = best;
    let coeffs = [t[0].exp(), t[1].exp(), t[2].exp(), t[3].exp(), t[4].exp()];
    let residual_norm = cost.sqrt();
    // Converged if we explain the data to within a small fraction of its scale.
    let scale: f64 = samples.iter().map(|s| s.1 * s.1).sum::<f64>().sqrt();
    if residual_norm.is_finite() && (scale == 0.0 || residual_norm <= scale) {
        Ok((
            ParamFn::rational_cubic(coeffs)?,
            FitReport {
                residual_norm,
                iterations,
            },
        ))
    } else {
        Err(Error::FitDiverged {
            iterations,
            residual: residual_norm,
            best_params: coeffs.to_vec(),
        })
    }
}

fn solve_5x5(a: &mut [[f64; 5]; 5], b: &mut [f64; 5]) -> bool {
    for col in 0..5 {
        let mut pivot = col;
        for row in col + 1..5 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return false;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..5).rev() {
        let mut s = b[col];
        for k in col + 1..5 {
            s -= a[col][k] * b[k];
        }
        b[col] = s / a[col][col];
    }
    true
}

// ---------------------------------------------------------------------------
// Config-text serialization
// ---------------------------------------------------------------------------

impl std::fmt::Display for ParamFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt_kind(&self.kind, f)?;
        if self.radius_mode == RadiusMode::Physical {
            write!(f, " @physical")?;
        }
        Ok(())
    }
}

fn fmt_kind(kind: &ParamFnKind, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
    match kind {
        ParamFnKind::InversePower {
            amplitude,
            exponent,
        } => write!(f, "inverse-power({amplitude}, {exponent})"),
        ParamFnKind::SmoothedBand {
            r_lo,
            r_hi,
            smooth_sd,
        } => write!(f, "band({r_lo}, {r_hi}, {smooth_sd})"),
        ParamFnKind::RationalCubic { coeffs } => write!(
            f,
            "rational-cubic({}, {}, {}, {}, {})",
            coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4]
        ),
        ParamFnKind::Mixture(components) => {
            write!(f, "mix(")?;
            for (i, (w, k)) in components.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{w} * ")?;
                fmt_kind(k, f)?;
            }
            write!(f, ")")
        }
        ParamFnKind::Scaled { factor, inner } => {
            write!(f, "scaled({factor}, ")?;
            fmt_kind(inner, f)?;
            write!(f, ")")
        }
        ParamFnKind::EmpiricalTable { radii, values } => {
            write!(f, "table(")?;
            for (i, (r, v)) in radii.iter().zip(values).enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{r}: {v}")?;
            }
            write!(f, ")")
        }
    }
}

impl std::str::FromStr for ParamFn {
    type Err = Error;

    /// Parse the declarative form used in experiment configs, e.g.
    /// `inverse-power(1, 2)`, `band(1, 5, 1.5)`,
    /// `mix(0.9 * band(1, 5, 1.5), 0.1 * inverse-power(1, 2))`,
    /// `table(0: 1.0, 10: 0.5)`, `constant(2)`, with an optional trailing
    /// `@physical`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, mode) = match s.strip_suffix("@physical") {
            Some(rest) => (rest.trim_end(), RadiusMode::Physical),
            None => (s, RadiusMode::PixelIndex),
        };
        let mut parser = Parser { src: body, pos: 0 };
        let f = parser.parse_fn()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(Error::Parse(format!(
                "trailing input after parameter function: {:?}",
                &parser.src[parser.pos..]
            )));
        }
        Ok(f.with_radius_mode(mode))
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: char) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len_utf8();
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected {token:?} at position {} in {:?}",
                self.pos, self.src
            )))
        }
    }

    fn peek_is(&mut self, token: char) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(token)
    }

    fn parse_name(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while self.src[self.pos..]
            .starts_with(|c: char| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!(
                "expected a function name at position {start} in {:?}",
                self.src
            )));
        }
        Ok(&self.src[start..self.pos])
    }

    fn parse_number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.src[self.pos..]
            .starts_with(|c: char| c.is_ascii_digit() || "+-.eE".contains(c))
        {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| Error::Parse(format!("invalid number {:?}", &self.src[start..self.pos])))
    }

    fn parse_fn(&mut self) -> Result<ParamFn> {
        let name = self.parse_name()?;
        self.eat('(')?;
        let f = match name {
            "inverse-power" => {
                let a = self.parse_number()?;
                self.eat(',')?;
                let b = self.parse_number()?;
                ParamFn::inverse_power(a, b)?
            }
            "band" => {
                let lo = self.parse_number()?;
                self.eat(',')?;
                let hi = self.parse_number()?;
                let sd = if self.peek_is(',') {
                    self.eat(',')?;
                    self.parse_number()?
                } else {
                    0.0
                };
                ParamFn::smoothed_band(lo, hi, sd)?
            }
            "rational-cubic" => {
                let mut c = [0.0; 5];
                for (i, slot) in c.iter_mut().enumerate() {
                    if i > 0 {
                        self.eat(',')?;
                    }
                    *slot = self.parse_number()?;
                }
                ParamFn::rational_cubic(c)?
            }
            "constant" => ParamFn::constant(self.parse_number()?)?,
            "scaled" => {
                let factor = self.parse_number()?;
                self.eat(',')?;
                let inner = self.parse_fn()?;
                inner.scale(factor)?
            }
            "mix" => {
                let mut components = Vec::new();
                loop {
                    let w = self.parse_number()?;
                    self.eat('*')?;
                    components.push((w, self.parse_fn()?));
                    if self.peek_is(',') {
                        self.eat(',')?;
                    } else {
                        break;
                    }
                }
                ParamFn::mix(components)?
            }
            "table" => {
                let mut radii = Vec::new();
                let mut values = Vec::new();
                loop {
                    radii.push(self.parse_number()?);
                    self.eat(':')?;
                    values.push(self.parse_number()?);
                    if self.peek_is(',') {
                        self.eat(',')?;
                    } else {
                        break;
                    }
                }
                ParamFn::empirical_table(radii, values)?
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown parameter function {other:?} (expected inverse-power, band, \
                     rational-cubic, constant, scaled, mix, or table)"
                )))
            }
        };
        self.eat(')')?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{forward_transform, RealGrid};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_power_values() {
        let f = ParamFn::inverse_power(4.0, 2.0).unwrap();
        assert!((f.eval(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(f.eval(0.0), Err(Error::Domain(_))));
        assert!(ParamFn::inverse_power(0.0, 2.0).is_err());
        assert!(ParamFn::inverse_power(1.0, -0.5).is_err());
    }

    #[test]
    fn unsmoothed_band_is_indicator() {
        let f = ParamFn::smoothed_band(1.0, 5.0, 0.0).unwrap();
        assert_eq!(f.eval(3.0).unwrap(), 1.0);
        assert_eq!(f.eval(6.0).unwrap(), 0.0);
        assert_eq!(f.eval(5.0).unwrap(), 1.0);
        assert_eq!(f.eval(0.5).unwrap(), 0.0);
    }

    #[test]
    fn smoothed_band_matches_cdf_difference() {
        let f = ParamFn::smoothed_band(1.0, 5.0, 1.5).unwrap();
        // At the upper edge: Phi((5-1)/1.5) - Phi(0).
        let expect = normal_cdf(4.0 / 1.5) - 0.5;
        assert!((f.eval(5.0).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.4962).abs() < 1e-3);
    }

    #[test]
    fn mixture_is_weighted_sum() {
        let band = ParamFn::smoothed_band(1.0, 5.0, 0.0).unwrap();
        let ip = ParamFn::inverse_power(1.0, 2.0).unwrap();
        let single = ParamFn::mix(vec![(1.0, ip.clone())]).unwrap();
        for r in [0.5, 1.0, 3.0, 10.0] {
            assert!((single.eval(r).unwrap() - ip.eval(r).unwrap()).abs() < 1e-15);
        }
        let mixed = ParamFn::mix(vec![(0.9, band), (0.1, ip.clone())]).unwrap();
        // Outside the band only the inverse-power component contributes.
        let r = 10.0;
        assert!((mixed.eval(r).unwrap() - 0.1 * ip.eval(r).unwrap()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let comps = vec![
            (0.3, ParamFn::inverse_power(2.0, 1.0).unwrap()),
            (1.7, ParamFn::smoothed_band(0.0, 4.0, 0.5).unwrap()),
            (0.4, ParamFn::constant(0.25).unwrap()),
        ];
        let mixed = ParamFn::mix(comps.clone()).unwrap();
        for _ in 0..100 {
            let r = rng.gen_range(0.01..20.0);
            let direct: f64 = comps
                .iter()
                .map(|(w, f)| w * f.eval(r).unwrap())
                .sum();
            assert!((mixed.eval(r).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let f = ParamFn::constant(1.0).unwrap();
        assert!(ParamFn::mix(vec![(0.0, f.clone())]).is_err());
        assert!(ParamFn::mix(vec![(-1.0, f)]).is_err());
        assert!(ParamFn::mix(vec![]).is_err());
    }

    #[test]
    fn table_interpolation_and_extrapolation() {
        let f = ParamFn::empirical_table(vec![1.0, 3.0], vec![2.0, 6.0]).unwrap();
        assert_eq!(f.eval(0.0).unwrap(), 2.0);
        assert_eq!(f.eval(2.0).unwrap(), 4.0);
        assert_eq!(f.eval(10.0).unwrap(), 6.0);
    }

    #[test]
    fn power_matching_constant_on_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let img = RealGrid::from_vec(4, 4, data).unwrap();
        let field = forward_transform(&img).unwrap();
        let p = field.off_origin_power();

        let scaled = ParamFn::constant(1.0)
            .unwrap()
            .scale_to_data_power(&field)
            .unwrap();
        // 15 off-origin points: s = sqrt(P / 15).
        let expect = (p / 15.0).sqrt();
        assert!((scaled.eval(1.0).unwrap() - expect).abs() < 1e-12);

        // Scaling twice is idempotent.
        let twice = scaled.scale_to_data_power(&field).unwrap();
        assert!((twice.eval(1.0).unwrap() - expect).abs() < 1e-12 * expect.max(1.0));

        // Direct-summation oracle for a non-constant function.
        let ip = ParamFn::inverse_power(1.0, 2.0).unwrap();
        let scaled = ip.scale_to_data_power(&field).unwrap();
        let grid = *field.grid();
        let mut power = 0.0;
        for (kx, ky) in grid.points() {
            if (kx, ky) != (0, 0) {
                power += scaled.eval_at(&grid, kx, ky).unwrap().powi(2);
            }
        }
        assert!((power - p).abs() < 1e-9 * p);
    }

    #[test]
    fn power_matching_rejects_zero_function() {
        let img = RealGrid::from_vec(4, 4, (0..16).map(|i| i as f64).collect()).unwrap();
        let field = forward_transform(&img).unwrap();
        let zero = ParamFn::constant(0.0).unwrap();
        assert!(matches!(
            zero.scale_to_data_power(&field),
            Err(Error::Scaling(_))
        ));
    }

    #[test]
    fn isotropy_equal_radii_equal_values() {
        let grid = KGrid::new(16, 16).unwrap();
        let f = ParamFn::inverse_power(3.0, 1.7).unwrap();
        for (kx, ky) in grid.points() {
            if (kx, ky) == (0, 0) {
                continue;
            }
            // (kx, ky) and (ky, kx) always share a radius.
            if grid.contains(ky, kx) {
                let a = f.eval_at(&grid, kx, ky).unwrap();
                let b = f.eval_at(&grid, ky, kx).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn physical_radius_matches_across_resolutions() {
        // Same field of view, doubled resolution: matched physical
        // frequencies evaluate identically.
        let coarse = KGrid::with_fov(64, 64, 10.0, 10.0).unwrap();
        let fine = KGrid::with_fov(128, 128, 10.0, 10.0).unwrap();
        let f = ParamFn::inverse_power(1.0, 2.0)
            .unwrap()
            .with_radius_mode(RadiusMode::Physical);
        for (kx, ky) in coarse.points() {
            if (kx, ky) == (0, 0) {
                continue;
            }
            let a = f.eval_at(&coarse, kx, ky).unwrap();
            let b = f.eval_at(&fine, kx, ky).unwrap();
            assert!((a - b).abs() < 1e-15 * a.max(1.0));
        }
    }

    #[test]
    fn fit_recovers_exact_rational_cubic() {
        let truth = ParamFn::rational_cubic([2.0, 1.0, 0.5, 0.1, 0.01]).unwrap();
        let samples: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let r = i as f64 * 0.5;
                (r, truth.eval(r).unwrap())
            })
            .collect();
        let (fit, report) = fit_rational_cubic(&samples).unwrap();
        for &(r, y) in &samples {
            let v = fit.eval(r).unwrap();
            assert!(
                (v - y).abs() < 1e-6 * y.max(1.0),
                "fit {v} vs {y} at r={r} (residual {})",
                report.residual_norm
            );
        }
    }

    #[test]
    fn fit_reproduces_constant_targets() {
        let v = 3.5;
        let samples: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, v)).collect();
        let (fit, _) = fit_rational_cubic(&samples).unwrap();
        for &(r, _) in &samples {
            assert!((fit.eval(r).unwrap() - v).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_rejects_insufficient_samples() {
        let samples = vec![(0.0, 1.0), (1.0, 0.5), (1.0, 0.5), (2.0, 0.3)];
        assert!(fit_rational_cubic(&samples).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cases = [
            "inverse-power(1, 2)",
            "band(1, 5, 1.5)",
            "rational-cubic(2, 1, 0.5, 0.1, 0.01)",
            "mix(0.9 * band(1, 5, 1.5), 0.1 * inverse-power(1, 2))",
            "scaled(2.5, inverse-power(1, 2))",
            "table(0: 1, 10: 0.5)",
            "inverse-power(1, 2) @physical",
        ];
        for case in cases {
            let f: ParamFn = case.parse().unwrap();
            let rendered = f.to_string();
            let again: ParamFn = rendered.parse().unwrap();
            assert_eq!(f, again, "case {case} rendered as {rendered}");
        }
        assert!("frobnicate(1)".parse::<ParamFn>().is_err());
        assert!("inverse-power(1, 2) garbage".parse::<ParamFn>().is_err());
    }
}
