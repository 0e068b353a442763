//! Declarative experiment configs and the runner behind the command-line
//! tool.
//!
//! A config is a flat, sectioned key-value text file:
//!
//! ```text
//! [input]
//! generator = phantom      # or: path = noisy.png | bumps | mrf
//! size = 128
//!
//! [noise]
//! model = gaussian         # gaussian | student-t
//! sd = 2.5
//!
//! [prior]
//! family = exponential     # exponential | sqrt-exponential | trunc-gaussian
//! paramfn = inverse-power(1, 2)
//! power-match = true
//!
//! [likelihood]
//! family = rician          # rician | gaussian-modulus
//! sigma = from-noise       # number | from-noise
//!
//! [estimator]
//! kind = map               # map | mmse | sample
//!
//! [output]
//! image = out.png
//! report = report.txt
//! ```
//!
//! Reports are machine-readable key-value text, one entry per line: the
//! full resolved config (`config.<section>.<key> = value`, enabling
//! replay) followed by the metrics (`metric.<name> = value`). Runs are
//! bit-reproducible for a fixed seed, for any thread count; timings are
//! therefore never written into reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_image, save_image};
use crate::kspace::{forward_transform, RealGrid};
use crate::map::{reconstruct_map, MapConfig};
use crate::metrics::{metrics, radial_power_profile, ReconstructionResult};
use crate::mrf::{simulate_igmrf, MrfSpec};
use crate::paramfn::ParamFn;
use crate::prior::{LikelihoodSpec, PriorSpec};
use crate::sample::{mmse_estimate, sample_posterior_image, ArgumentModel, SampleConfig};
use crate::synth::{add_noise, make_phantom, simulate_bumps, BumpConfig, NoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    Path(PathBuf),
    Phantom { size: usize },
    Bumps { rate: f64, size: usize },
    Mrf { kappa: f64, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    Value(f64),
    /// Derive from the added noise sd under the unitary transform
    /// convention (`sd / sqrt(2)` per complex component).
    FromNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorFamilyCfg {
    Exponential,
    SqrtExponential,
    TruncGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Map,
    Mmse,
    Sample,
    /// Conjugate-gradients MAP under the intrinsic GMRF prior (the
    /// image-space baseline).
    IgmrfMap { kappa: f64 },
    /// Both the Fourier-space MAP and the IG-MRF baseline on the same
    /// data, reported side by side.
    CompareMrf { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodFamilyCfg {
    Rician,
    GaussianModulus,
}

/// One fully-resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub input: InputSpec,
    pub truth_path: Option<PathBuf>,
    pub noise: Option<NoiseModel>,
    pub prior_family: PriorFamilyCfg,
    pub paramfn: ParamFn,
    pub sd_paramfn: Option<ParamFn>,
    pub scale_ratio: f64,
    pub power_match: bool,
    pub likelihood: LikelihoodFamilyCfg,
    pub sigma: SigmaSpec,
    pub estimator: EstimatorKind,
    pub grid_points: usize,
    pub argument_model: ArgumentModel,
    pub seed: u64,
    pub out_image: Option<PathBuf>,
    pub rescale: bool,
    pub report_path: Option<PathBuf>,
    pub power_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A denoising baseline: exponential prior with a power-matched
    /// inverse-power parameter function.
    pub fn denoise_default() -> Self {
        ExperimentConfig {
            input: InputSpec::Phantom { size: 128 },
            truth_path: None,
            noise: Some(NoiseModel::Gaussian { sd: 2.5 }),
            prior_family: PriorFamilyCfg::Exponential,
            paramfn: ParamFn::inverse_power(1.0, 2.0).unwrap(),
            sd_paramfn: None,
            scale_ratio: 1.0,
            power_match: true,
            likelihood: LikelihoodFamilyCfg::Rician,
            sigma: SigmaSpec::FromNoise,
            estimator: EstimatorKind::Map,
            grid_points: 4096,
            argument_model: ArgumentModel::FixedAtData,
            seed: 0,
            out_image: None,
            rescale: true,
            report_path: None,
            power_csv: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "line {}: expected 'key = value', got {line:?}",
                    lineno + 1
                )));
            };
            if section.is_empty() {
                return Err(Error::Parse(format!(
                    "line {}: key {key:?} appears before any [section]",
                    lineno + 1
                )));
            }
            let full = format!("{section}.{}", key.trim());
            if raw.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("duplicate key {full}")));
            }
        }
        Self::from_map(raw)
    }

    fn from_map(mut raw: BTreeMap<String, String>) -> Result<Self> {
        let mut take = |key: &str| raw.remove(key);
        let parse_f64 = |key: &str, v: String| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Parse(format!("{key}: expected a number, got {v:?}")))
        };
        let parse_usize = |key: &str, v: String| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Parse(format!("{key}: expected an integer, got {v:?}")))
        };
        let parse_bool = |key: &str, v: String| -> Result<bool> {
            match v.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                _ => Err(Error::Parse(format!("{key}: expected true/false, got {v:?}"))),
            }
        };

        // [input]
        let input = match (take("input.path"), take("input.generator")) {
            (Some(path), None) => InputSpec::Path(PathBuf::from(path)),
            (None, Some(generator)) => {
                let size = match take("input.size") {
                    Some(v) => parse_usize("input.size", v)?,
                    None => 128,
                };
                match generator.as_str() {
                    "phantom" => InputSpec::Phantom { size },
                    "bumps" => InputSpec::Bumps {
                        rate: match take("input.rate") {
                            Some(v) => parse_f64("input.rate", v)?,
                            None => 8.0,
                        },
                        size,
                    },
                    "mrf" => InputSpec::Mrf {
                        kappa: match take("input.kappa") {
                            Some(v) => parse_f64("input.kappa", v)?,
                            None => 1.0,
                        },
                        size,
                    },
                    other => {
                        return Err(Error::Parse(format!(
                            "input.generator: unknown generator {other:?} \
                             (expected phantom, bumps, or mrf)"
                        )))
                    }
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::Parse(
                    "input.path and input.generator are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Parse(
                    "missing input.path or input.generator".into(),
                ))
            }
        };
        let truth_path = take("truth.path").map(PathBuf::from);

        // [noise]
        let noise = match take("noise.model") {
            None => None,
            Some(model) => Some(match model.as_str() {
                "gaussian" => NoiseModel::Gaussian {
                    sd: parse_f64(
                        "noise.sd",
                        take("noise.sd")
                            .ok_or_else(|| Error::Parse("noise.sd is required".into()))?,
                    )?,
                },
                "student-t" => NoiseModel::StudentT {
                    df: parse_f64(
                        "noise.df",
                        take("noise.df")
                            .ok_or_else(|| Error::Parse("noise.df is required".into()))?,
                    )?,
                    target_sd: parse_f64(
                        "noise.sd",
                        take("noise.sd")
                            .ok_or_else(|| Error::Parse("noise.sd is required".into()))?,
                    )?,
                },
                other => {
                    return Err(Error::Parse(format!(
                        "noise.model: unknown model {other:?} (expected gaussian or student-t)"
                    )))
                }
            }),
        };

        // [prior]
        let prior_family = match take("prior.family").as_deref() {
            None | Some("exponential") => PriorFamilyCfg::Exponential,
            Some("sqrt-exponential") => PriorFamilyCfg::SqrtExponential,
            Some("trunc-gaussian") => PriorFamilyCfg::TruncGaussian,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "prior.family: unknown family {other:?} (expected exponential, \
                     sqrt-exponential, or trunc-gaussian)"
                )))
            }
        };
        let paramfn_text = match (take("prior.paramfn"), take("prior.paramfn-file")) {
            (Some(text), None) => text,
            (None, Some(path)) => std::fs::read_to_string(&path)
                .map_err(|e| Error::Parse(format!("prior.paramfn-file {path}: {e}")))?
                .trim()
                .to_string(),
            (Some(_), Some(_)) => {
                return Err(Error::Parse(
                    "prior.paramfn and prior.paramfn-file are mutually exclusive".into(),
                ))
            }
            (None, None) => return Err(Error::Parse("prior.paramfn is required".into())),
        };
        let paramfn: ParamFn = paramfn_text
            .parse()
            .map_err(|e| Error::Parse(format!("prior.paramfn: {e}")))?;
        let sd_paramfn = match take("prior.sd-paramfn") {
            Some(v) => Some(
                v.parse::<ParamFn>()
                    .map_err(|e| Error::Parse(format!("prior.sd-paramfn: {e}")))?,
            ),
            None => None,
        };
        let scale_ratio = match take("prior.scale-ratio") {
            Some(v) => parse_f64("prior.scale-ratio", v)?,
            None => 1.0,
        };
        let power_match = match take("prior.power-match") {
            Some(v) => parse_bool("prior.power-match", v)?,
            None => false,
        };

        // [likelihood]
        let likelihood = match take("likelihood.family").as_deref() {
            None | Some("rician") => LikelihoodFamilyCfg::Rician,
            Some("gaussian-modulus") => LikelihoodFamilyCfg::GaussianModulus,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "likelihood.family: unknown family {other:?} \
                     (expected rician or gaussian-modulus)"
                )))
            }
        };
        let sigma = match take("likelihood.sigma").as_deref() {
            None | Some("from-noise") => SigmaSpec::FromNoise,
            Some(v) => SigmaSpec::Value(
                v.parse()
                    .map_err(|_| Error::Parse(format!("likelihood.sigma: bad value {v:?}")))?,
            ),
        };

        // [estimator]
        let kind = take("estimator.kind");
        let kappa = match take("estimator.kappa") {
            Some(v) => parse_f64("estimator.kappa", v)?,
            None => 1.0,
        };
        let estimator = match kind.as_deref() {
            None | Some("map") => EstimatorKind::Map,
            Some("mmse") => EstimatorKind::Mmse,
            Some("sample") => EstimatorKind::Sample,
            Some("igmrf-map") => EstimatorKind::IgmrfMap { kappa },
            Some("compare-mrf") => EstimatorKind::CompareMrf { kappa },
            Some(other) => {
                return Err(Error::Parse(format!(
                    "estimator.kind: unknown estimator {other:?} \
                     (expected map, mmse, sample, igmrf-map, or compare-mrf)"
                )))
            }
        };
        let grid_points = match take("estimator.grid-points") {
            Some(v) => parse_usize("estimator.grid-points", v)?,
            None => 4096,
        };
        let argument_model = match take("estimator.argument-model").as_deref() {
            None | Some("fixed") => ArgumentModel::FixedAtData,
            Some("rician") => ArgumentModel::RicianPosterior,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "estimator.argument-model: unknown model {other:?} (expected fixed or rician)"
                )))
            }
        };
        let seed = match take("run.seed") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("run.seed: bad value {v:?}")))?,
            None => 0,
        };

        // [output]
        let out_image = take("output.image").map(PathBuf::from);
        let rescale = match take("output.rescale") {
            Some(v) => parse_bool("output.rescale", v)?,
            None => true,
        };
        let report_path = take("output.report").map(PathBuf::from);
        let power_csv = take("output.power-csv").map(PathBuf::from);

        if let Some(key) = raw.keys().next() {
            return Err(Error::Parse(format!("unknown config key {key}")));
        }

        Ok(ExperimentConfig {
            input,
            truth_path,
            noise,
            prior_family,
            paramfn,
            sd_paramfn,
            scale_ratio,
            power_match,
            likelihood,
            sigma,
            estimator,
            grid_points,
            argument_model,
            seed,
            out_image,
            rescale,
            report_path,
            power_csv,
        })
    }

    /// Fully resolved config as report lines, deterministic order.
    pub fn resolved_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        match &self.input {
            InputSpec::Path(p) => lines.push(format!("config.input.path = {}", p.display())),
            InputSpec::Phantom { size } => {
                lines.push("config.input.generator = phantom".into());
                lines.push(format!("config.input.size = {size}"));
            }
            InputSpec::Bumps { rate, size } => {
                lines.push("config.input.generator = bumps".into());
                lines.push(format!("config.input.rate = {rate}"));
                lines.push(format!("config.input.size = {size}"));
            }
            InputSpec::Mrf { kappa, size } => {
                lines.push("config.input.generator = mrf".into());
                lines.push(format!("config.input.kappa = {kappa}"));
                lines.push(format!("config.input.size = {size}"));
            }
        }
        if let Some(p) = &self.truth_path {
            lines.push(format!("config.truth.path = {}", p.display()));
        }
        match self.noise {
            Some(NoiseModel::Gaussian { sd }) => {
                lines.push("config.noise.model = gaussian".into());
                lines.push(format!("config.noise.sd = {sd}"));
            }
            Some(NoiseModel::StudentT { df, target_sd }) => {
                lines.push("config.noise.model = student-t".into());
                lines.push(format!("config.noise.df = {df}"));
                lines.push(format!("config.noise.sd = {target_sd}"));
            }
            None => {}
        }
        lines.push(format!(
            "config.prior.family = {}",
            match self.prior_family {
                PriorFamilyCfg::Exponential => "exponential",
                PriorFamilyCfg::SqrtExponential => "sqrt-exponential",
                PriorFamilyCfg::TruncGaussian => "trunc-gaussian",
            }
        ));
        lines.push(format!("config.prior.paramfn = {}", self.paramfn));
        if let Some(f) = &self.sd_paramfn {
            lines.push(format!("config.prior.sd-paramfn = {f}"));
        }
        lines.push(format!("config.prior.scale-ratio = {}", self.scale_ratio));
        lines.push(format!("config.prior.power-match = {}", self.power_match));
        lines.push(format!(
            "config.likelihood.family = {}",
            match self.likelihood {
                LikelihoodFamilyCfg::Rician => "rician",
                LikelihoodFamilyCfg::GaussianModulus => "gaussian-modulus",
            }
        ));
        lines.push(format!(
            "config.likelihood.sigma = {}",
            match self.sigma {
                SigmaSpec::Value(v) => v.to_string(),
                SigmaSpec::FromNoise => "from-noise".to_string(),
            }
        ));
        match self.estimator {
            EstimatorKind::Map => lines.push("config.estimator.kind = map".into()),
            EstimatorKind::Mmse => lines.push("config.estimator.kind = mmse".into()),
            EstimatorKind::Sample => lines.push("config.estimator.kind = sample".into()),
            EstimatorKind::IgmrfMap { kappa } => {
                lines.push("config.estimator.kind = igmrf-map".into());
                lines.push(format!("config.estimator.kappa = {kappa}"));
            }
            EstimatorKind::CompareMrf { kappa } => {
                lines.push("config.estimator.kind = compare-mrf".into());
                lines.push(format!("config.estimator.kappa = {kappa}"));
            }
        }
        lines.push(format!("config.estimator.grid-points = {}", self.grid_points));
        lines.push(format!(
            "config.estimator.argument-model = {}",
            match self.argument_model {
                ArgumentModel::FixedAtData => "fixed",
                ArgumentModel::RicianPosterior => "rician",
            }
        ));
        lines.push(format!("config.run.seed = {}", self.seed));
        if let Some(p) = &self.out_image {
            lines.push(format!("config.output.image = {}", p.display()));
        }
        lines.push(format!("config.output.rescale = {}", self.rescale));
        if let Some(p) = &self.report_path {
            lines.push(format!("config.output.report = {}", p.display()));
        }
        if let Some(p) = &self.power_csv {
            lines.push(format!("config.output.power-csv = {}", p.display()));
        }
        lines
    }
}

/// Everything a run produced, before and after writing files.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub estimate: ReconstructionResult,
    /// The IG-MRF baseline reconstruction, for `compare-mrf` runs.
    pub baseline: Option<ReconstructionResult>,
    /// The estimator input (noise included when configured).
    pub observed: RealGrid,
    pub truth: Option<RealGrid>,
    pub labels: Option<Vec<u8>>,
    pub report: String,
}

/// Execute one experiment: generate or ingest the input, add noise, run
/// the estimator, compute metrics against available truth, and write the
/// configured outputs. Fully deterministic for a fixed seed, independent
/// of `threads`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentOutcome> {
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment_inner(cfg))
        }
        None => run_experiment_inner(cfg),
    }
}

fn run_experiment_inner(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    // Input and implicit truth.
    let mut labels = None;
    let clean: RealGrid = match &cfg.input {
        InputSpec::Path(p) => load_image(p)?,
        InputSpec::Phantom { size } => {
            let (img, l) = make_phantom(*size, *size)?;
            labels = Some(l);
            img
        }
        InputSpec::Bumps { rate, size } => {
            simulate_bumps(&BumpConfig::new(*rate, *size, *size, cfg.seed))?
        }
        InputSpec::Mrf { kappa, size } => {
            let grid = crate::kspace::KGrid::new(*size, *size)?;
            simulate_igmrf(&MrfSpec::new(*kappa)?, &grid, cfg.seed)?
        }
    };
    let truth = match &cfg.truth_path {
        Some(p) => Some(load_image(p)?),
        // When this run added the noise itself, the clean input is truth.
        None if cfg.noise.is_some() => Some(clean.clone()),
        None => None,
    };

    let observed = match cfg.noise {
        Some(model) => add_noise(&clean, model, cfg.seed.wrapping_add(0x5eed))?,
        None => clean,
    };

    let sigma = match cfg.sigma {
        SigmaSpec::Value(v) => v,
        SigmaSpec::FromNoise => match cfg.noise {
            Some(NoiseModel::Gaussian { sd }) => sd / std::f64::consts::SQRT_2,
            Some(NoiseModel::StudentT { target_sd, .. }) => {
                target_sd / std::f64::consts::SQRT_2
            }
            None => {
                return Err(Error::Parse(
                    "likelihood.sigma = from-noise requires a [noise] section".into(),
                ))
            }
        },
    };

    // Prior, with optional data-power matching.
    let base_fn = if cfg.power_match {
        let data = forward_transform(&observed)?;
        match cfg.prior_family {
            // The mean-power function matches linearly: sum m(k) = data power.
            PriorFamilyCfg::SqrtExponential => {
                let grid = *data.grid();
                let mut fn_power = 0.0;
                for (kx, ky) in grid.points() {
                    if (kx, ky) != (0, 0) {
                        fn_power += cfg.paramfn.eval_at(&grid, kx, ky)?;
                    }
                }
                if fn_power <= 0.0 {
                    return Err(Error::Scaling(
                        "parameter function is identically zero off the origin".into(),
                    ));
                }
                cfg.paramfn
                    .clone()
                    .scale(data.off_origin_power() / fn_power)?
            }
            _ => cfg.paramfn.scale_to_data_power(&data)?,
        }
    } else {
        cfg.paramfn.clone()
    };
    let prior = match cfg.prior_family {
        PriorFamilyCfg::Exponential => PriorSpec::exponential(base_fn),
        PriorFamilyCfg::SqrtExponential => PriorSpec::sqrt_exponential(base_fn),
        PriorFamilyCfg::TruncGaussian => {
            PriorSpec::trunc_gaussian(base_fn, cfg.sd_paramfn.clone(), cfg.scale_ratio)
        }
    };
    let lik = match cfg.likelihood {
        LikelihoodFamilyCfg::Rician => LikelihoodSpec::rician(sigma)?,
        LikelihoodFamilyCfg::GaussianModulus => LikelihoodSpec::gaussian_modulus(sigma)?,
    };

    let sample_cfg = SampleConfig {
        n_samples: 1,
        rng_seed: cfg.seed,
        proposal_grid_points: cfg.grid_points,
        argument_model: cfg.argument_model,
    };
    // The IG-MRF baseline works in image space: its noise sd is the
    // Fourier per-component sigma scaled back by sqrt(2).
    let image_sigma = sigma * std::f64::consts::SQRT_2;
    let run_baseline = |kappa: f64| -> Result<ReconstructionResult> {
        let img = crate::mrf::igmrf_map_cg(&observed, &MrfSpec::new(kappa)?, image_sigma)?;
        Ok(ReconstructionResult::new(img))
    };
    let (mut estimate, mut baseline) = match cfg.estimator {
        EstimatorKind::Map => (
            reconstruct_map(&observed, &prior, &lik, &MapConfig::default())?,
            None,
        ),
        EstimatorKind::Mmse => (mmse_estimate(&observed, &prior, &lik, &sample_cfg)?, None),
        EstimatorKind::Sample => (
            ReconstructionResult::new(sample_posterior_image(&observed, &prior, &lik, &sample_cfg)?),
            None,
        ),
        EstimatorKind::IgmrfMap { kappa } => (run_baseline(kappa)?, None),
        EstimatorKind::CompareMrf { kappa } => (
            reconstruct_map(&observed, &prior, &lik, &MapConfig::default())?,
            Some(run_baseline(kappa)?),
        ),
    };

    // Metrics against truth, when available.
    if let Some(truth) = &truth {
        let timing = estimate.diagnostics.timing_seconds;
        estimate.diagnostics = metrics(&estimate.image, truth, labels.as_deref())?;
        estimate.diagnostics.timing_seconds = timing;
        if let Some(baseline) = &mut baseline {
            baseline.diagnostics = metrics(&baseline.image, truth, labels.as_deref())?;
        }
    }

    let report = render_report(cfg, &estimate, baseline.as_ref(), truth.as_ref(), &observed)?;

    if let Some(path) = &cfg.out_image {
        save_image(&estimate.image, path, cfg.rescale)?;
    }
    if let Some(path) = &cfg.report_path {
        std::fs::write(path, &report)?;
    }
    if let Some(path) = &cfg.power_csv {
        write_power_csv(path, &estimate, truth.as_ref())?;
    }

    Ok(ExperimentOutcome {
        estimate,
        baseline,
        observed,
        truth,
        labels,
        report,
    })
}

fn render_report(
    cfg: &ExperimentConfig,
    estimate: &ReconstructionResult,
    baseline: Option<&ReconstructionResult>,
    truth: Option<&RealGrid>,
    observed: &RealGrid,
) -> Result<String> {
    let mut out = String::new();
    for line in cfg.resolved_lines() {
        writeln!(out, "{line}").unwrap();
    }
    let d = &estimate.diagnostics;
    if let Some(rmse) = d.rmse {
        writeln!(out, "metric.rmse = {rmse:.12}").unwrap();
    }
    if let Some(truth) = truth {
        let noisy = metrics(observed, truth, None)?;
        writeln!(out, "metric.observed-rmse = {:.12}", noisy.rmse.unwrap()).unwrap();
    }
    if let Some(means) = &d.region_means {
        for (label, mean) in means {
            writeln!(out, "metric.region-mean.{label} = {mean:.12}").unwrap();
        }
    }
    if let Some(baseline) = baseline {
        if let Some(rmse) = baseline.diagnostics.rmse {
            writeln!(out, "metric.igmrf.rmse = {rmse:.12}").unwrap();
        }
        if let Some(means) = &baseline.diagnostics.region_means {
            for (label, mean) in means {
                writeln!(out, "metric.igmrf.region-mean.{label} = {mean:.12}").unwrap();
            }
        }
    }
    Ok(out)
}

fn write_power_csv(
    path: &Path,
    estimate: &ReconstructionResult,
    truth: Option<&RealGrid>,
) -> Result<()> {
    // Error-field profile when truth is known, else the estimate's own.
    let profile = match (&estimate.diagnostics.power_profile, truth) {
        (Some(p), _) => p.clone(),
        (None, _) => radial_power_profile(&estimate.image)?,
    };
    let mut text = String::from("radius,power\n");
    for (r, p) in profile {
        writeln!(text, "{r},{p:.12e}").unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = "
[input]
generator = phantom
size = 64

[noise]
model = gaussian
sd = 2.5

[prior]
family = exponential
paramfn = inverse-power(1, 2)
power-match = true

[likelihood]
family = rician
sigma = from-noise

[estimator]
kind = map

[run]
seed = 7
";

    #[test]
    fn parse_round_trips_through_resolved_lines() {
        let cfg = ExperimentConfig::parse(DEMO).unwrap();
        assert_eq!(cfg.prior_family, PriorFamilyCfg::Exponential);
        assert_eq!(cfg.estimator, EstimatorKind::Map);
        assert_eq!(cfg.seed, 7);
        assert!(cfg.power_match);
        // Resolved lines re-parse to the same config.
        let text: String = cfg
            .resolved_lines()
            .iter()
            .map(|l| {
                let stripped = l.strip_prefix("config.").unwrap();
                let (key, value) = stripped.split_once(" = ").unwrap();
                let (section, key) = key.split_once('.').unwrap();
                format!("[{section}]\n{key} = {value}\n")
            })
            .collect();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again.prior_family, cfg.prior_family);
        assert_eq!(again.paramfn, cfg.paramfn);
        assert_eq!(again.seed, cfg.seed);
    }

    #[test]
    fn bad_family_names_the_key() {
        let text = DEMO.replace("family = exponential", "family = exponentail");
        match ExperimentConfig::parse(&text) {
            Err(Error::Parse(msg)) => assert!(msg.contains("prior.family"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{DEMO}\n[extra]\nfoo = 1\n");
        match ExperimentConfig::parse(&text) {
            Err(Error::Parse(msg)) => assert!(msg.contains("extra.foo"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn run_produces_metrics_and_is_deterministic() {
        let cfg = ExperimentConfig::parse(DEMO).unwrap();
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(4)).unwrap();
        assert_eq!(a.estimate.image.data(), b.estimate.image.data());
        assert_eq!(a.report, b.report);
        assert!(a.report.contains("metric.rmse"));
        assert!(a.report.contains("metric.observed-rmse"));
        assert!(a.report.contains("config.prior.paramfn"));
        // Phantom runs carry region means for all three labels.
        assert!(a.report.contains("metric.region-mean.0"));
        assert!(a.report.contains("metric.region-mean.2"));
    }

    #[test]
    fn sample_estimator_runs() {
        let text = DEMO.replace("kind = map", "kind = sample");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let out = run_experiment(&cfg, Some(2)).unwrap();
        assert_eq!(out.estimate.image.n_x(), 64);
    }
}
