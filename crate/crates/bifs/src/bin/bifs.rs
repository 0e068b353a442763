//! Command-line front end: thin argument parsing over the library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bifs::ddbifs::{
    ddbifs_reconstruct, estimate_empirical_prior_with, load_empirical_prior, save_empirical_prior,
};
use bifs::error::{Error, Result};
use bifs::experiment::{
    run_experiment, EstimatorKind, ExperimentConfig, InputSpec, SigmaSpec,
};
use bifs::image::{load_image, read_stack, save_image, write_stack};
use bifs::kspace::{KGrid, RealGrid};
use bifs::metrics::metrics;
use bifs::mrf::{acf_by_distance, fit_bifs_to_mrf_with, simulate_igmrf, FitTarget, MrfSpec};
use bifs::paramfn::ParamFn;
use bifs::prior::ModulusFamily;
use bifs::sample::ArgumentModel;
use bifs::synth::{make_phantom, simulate_bumps, BumpConfig, NoiseModel};

#[derive(Parser)]
#[command(
    name = "bifs",
    version,
    about = "Bayesian image analysis in Fourier space: per-frequency priors, \
             non-iterative MAP reconstruction, Monte Carlo posterior summaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// RNG seed; runs are bit-reproducible for a fixed seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Cap the worker thread count (default: all cores). Results never
    /// depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output path (.png, .pgm, .f32; stacks use .f32s).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report path (key-value text, one entry per line).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// MAP denoising: exponential modulus prior with an inverse-power
    /// parameter function, power-matched to the data.
    Denoise {
        #[command(flatten)]
        common: EstimateArgs,
        /// Decay exponent of the parameter function a/|k|^b.
        #[arg(long, default_value_t = 2.0)]
        b: f64,
    },
    /// Frequency enhancement: a smoothed radial band prior, optionally
    /// mixed with a denoising component.
    Enhance {
        #[command(flatten)]
        common: EstimateArgs,
        #[arg(long, default_value_t = 1.0)]
        r_lo: f64,
        #[arg(long, default_value_t = 5.0)]
        r_hi: f64,
        /// Gaussian smoothing sd of the band edges (k-space pixels).
        #[arg(long, default_value_t = 1.5)]
        smooth_sd: f64,
        /// Weight of the mixed-in inverse-power denoising component.
        #[arg(long, default_value_t = 0.1)]
        denoise_weight: f64,
        /// Exponent of the denoising component.
        #[arg(long, default_value_t = 2.0)]
        b: f64,
    },
    /// Edge extraction: a band prior that removes low frequencies.
    Edges {
        #[command(flatten)]
        common: EstimateArgs,
        #[arg(long, default_value_t = 10.01)]
        r_lo: f64,
        #[arg(long, default_value_t = 50.0)]
        r_hi: f64,
        #[arg(long, default_value_t = 1.5)]
        smooth_sd: f64,
    },
    /// One Monte Carlo posterior image (independent draw per frequency).
    Sample {
        #[command(flatten)]
        common: EstimateArgs,
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        /// Argument treatment: fixed (data argument) or rician (posterior
        /// draw).
        #[arg(long, default_value = "fixed")]
        argument_model: String,
    },
    /// Posterior-mean (MMSE) reconstruction by per-frequency quadrature.
    Mmse {
        #[command(flatten)]
        common: EstimateArgs,
        #[arg(long, default_value_t = 2.0)]
        b: f64,
    },
    /// Simulate intrinsic Gaussian MRF draws spectrally (exact, no solver).
    SimulateMrf {
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Number of draws; more than one writes a stacked .f32s file.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Fit a Fourier-space prior approximating an MRF from a sample stack;
    /// writes the fitted mean-power parameter function as config text.
    FitMrf {
        /// Stacked .f32s sample file (e.g. from simulate-mrf).
        #[arg(long)]
        input: PathBuf,
        /// Statistic to fit: modulus (mean modulus) or power (mean power).
        #[arg(long, default_value = "modulus")]
        target: String,
    },
    /// Simulate anisotropic Gaussian bump fields (Poisson object counts).
    SimulateBumps {
        #[arg(long, default_value_t = 8.0)]
        rate: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Number of fields; more than one writes a stacked .f32s file.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Estimate a per-frequency empirical prior from an image database.
    DdbifsFit {
        /// Database: a stacked .f32s file or a directory of images.
        #[arg(long)]
        db: PathBuf,
        /// Prior weight in pseudo-observations.
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        /// Standardize each database image to zero mean, unit sd first.
        #[arg(long, default_value_t = false)]
        normalize: bool,
    },
    /// Reconstruct with a stored empirical prior (conjugate model).
    DdbifsApply {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        /// Fourier-domain noise sd of the Gaussian modulus likelihood.
        #[arg(long)]
        sigma: f64,
        /// Override the stored prior weight.
        #[arg(long)]
        m: Option<f64>,
        /// Ground truth for metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Generate the two-region phantom (ribbon 20.0, interior 10.0).
    Phantom {
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Also write the region label image.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Compare an estimate against ground truth.
    Metrics {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Region label image (e.g. from phantom --labels-out).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run a declarative experiment config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Arguments shared by the estimator subcommands.
#[derive(clap::Args)]
struct EstimateArgs {
    /// Input image; when omitted, a noisy phantom demo input is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Demo input size (used when --input is omitted).
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Add Gaussian noise of this sd to the input before estimating.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Fourier-domain per-component noise sd. Defaults to noise_sd/sqrt(2)
    /// when noise is added here; required otherwise.
    #[arg(long)]
    sigma: Option<f64>,
    /// Ground truth image for metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
}

impl EstimateArgs {
    fn to_config(&self, cli: &Cli) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::denoise_default();
        cfg.seed = cli.seed;
        cfg.out_image = cli.out.clone();
        cfg.report_path = cli.report.clone();
        cfg.truth_path = self.truth.clone();
        cfg.input = match &self.input {
            Some(p) => InputSpec::Path(p.clone()),
            None => InputSpec::Phantom { size: self.size },
        };
        cfg.noise = match self.noise_sd {
            Some(sd) => Some(NoiseModel::Gaussian { sd }),
            // The demo input is only useful degraded.
            None if self.input.is_none() => Some(NoiseModel::Gaussian { sd: 2.5 }),
            None => None,
        };
        cfg.sigma = match (self.sigma, &cfg.noise) {
            (Some(v), _) => SigmaSpec::Value(v),
            (None, Some(_)) => SigmaSpec::FromNoise,
            (None, None) => {
                return Err(Error::Input(
                    "--sigma is required when no noise is added here".into(),
                ))
            }
        };
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // One global pool for the whole process; per-frequency work is
        // order-independent, so the count never changes results.
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Denoise { common, b } => {
            let mut cfg = common.to_config(cli)?;
            cfg.paramfn = ParamFn::inverse_power(1.0, *b)?;
            cfg.power_match = true;
            run_and_summarize(&cfg)
        }
        Command::Enhance {
            common,
            r_lo,
            r_hi,
            smooth_sd,
            denoise_weight,
            b,
        } => {
            let mut cfg = common.to_config(cli)?;
            let band = ParamFn::smoothed_band(*r_lo, *r_hi, *smooth_sd)?;
            cfg.paramfn = if *denoise_weight > 0.0 {
                ParamFn::mix(vec![
                    (1.0 - denoise_weight, band),
                    (*denoise_weight, ParamFn::inverse_power(1.0, *b)?),
                ])?
            } else {
                band
            };
            cfg.power_match = true;
            run_and_summarize(&cfg)
        }
        Command::Edges {
            common,
            r_lo,
            r_hi,
            smooth_sd,
        } => {
            let mut cfg = common.to_config(cli)?;
            cfg.paramfn = ParamFn::smoothed_band(*r_lo, *r_hi, *smooth_sd)?;
            cfg.power_match = true;
            run_and_summarize(&cfg)
        }
        Command::Sample {
            common,
            b,
            argument_model,
        } => {
            let mut cfg = common.to_config(cli)?;
            cfg.paramfn = ParamFn::inverse_power(1.0, *b)?;
            cfg.power_match = true;
            cfg.estimator = EstimatorKind::Sample;
            cfg.argument_model = match argument_model.as_str() {
                "fixed" => ArgumentModel::FixedAtData,
                "rician" => ArgumentModel::RicianPosterior,
                other => {
                    return Err(Error::Input(format!(
                        "unknown argument model {other:?} (expected fixed or rician)"
                    )))
                }
            };
            run_and_summarize(&cfg)
        }
        Command::Mmse { common, b } => {
            let mut cfg = common.to_config(cli)?;
            cfg.paramfn = ParamFn::inverse_power(1.0, *b)?;
            cfg.power_match = true;
            cfg.estimator = EstimatorKind::Mmse;
            run_and_summarize(&cfg)
        }
        Command::SimulateMrf { kappa, size, count } => {
            let spec = MrfSpec::new(*kappa)?;
            let grid = KGrid::new(*size, *size)?;
            let images: Vec<RealGrid> = (0..*count)
                .map(|i| simulate_igmrf(&spec, &grid, cli.seed.wrapping_add(i as u64)))
                .collect::<Result<_>>()?;
            write_images(&images, cli.out.as_deref())?;
            if let Some(report) = &cli.report {
                let mut text = format!("mrf.kappa = {kappa}\nmrf.count = {count}\n");
                if images.len() >= 2 {
                    let table = acf_by_distance(&images, (*size / 4).min(16))?;
                    for row in &table.rows {
                        text.push_str(&format!(
                            "acf.{}.mean = {:.6e}\nacf.{}.spread = {:.6e}\n",
                            row.distance, row.mean, row.distance, row.spread
                        ));
                    }
                }
                std::fs::write(report, text)?;
            }
            Ok(())
        }
        Command::FitMrf { input, target } => {
            let samples = read_stack(input)?;
            let target = match target.as_str() {
                "modulus" => FitTarget::MeanModulus,
                "power" => FitTarget::MeanPower,
                other => {
                    return Err(Error::Input(format!(
                        "unknown fit target {other:?} (expected modulus or power)"
                    )))
                }
            };
            let fit = fit_bifs_to_mrf_with(&samples, target)?;
            let ModulusFamily::SqrtExponential { mean_power } = &fit.prior.modulus else {
                unreachable!("MRF fits produce exponential-power priors")
            };
            match &cli.out {
                Some(path) => std::fs::write(path, format!("{mean_power}\n"))?,
                None => println!("{mean_power}"),
            }
            if let Some(report) = &cli.report {
                std::fs::write(
                    report,
                    format!(
                        "fit.samples = {}\nfit.curve = {}\nfit.residual-norm = {:.6e}\nfit.iterations = {}\n",
                        samples.len(),
                        fit.curve,
                        fit.report.residual_norm,
                        fit.report.iterations
                    ),
                )?;
            }
            Ok(())
        }
        Command::SimulateBumps { rate, size, count } => {
            let images: Vec<RealGrid> = (0..*count)
                .map(|i| {
                    simulate_bumps(&BumpConfig::new(
                        *rate,
                        *size,
                        *size,
                        cli.seed.wrapping_add(i as u64),
                    ))
                })
                .collect::<Result<_>>()?;
            write_images(&images, cli.out.as_deref())
        }
        Command::DdbifsFit { db, m, normalize } => {
            let images = load_database(db)?;
            let prior = estimate_empirical_prior_with(&images, *m, *normalize)?;
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::Input("--out is required for ddbifs-fit".into()))?;
            save_empirical_prior(&prior, &out)?;
            println!(
                "estimated empirical prior from {} images ({}x{}), m = {m}",
                prior.source_count,
                prior.grid().n_x(),
                prior.grid().n_y()
            );
            Ok(())
        }
        Command::DdbifsApply {
            input,
            prior,
            sigma,
            m,
            truth,
        } => {
            let y = load_image(input)?;
            let mut prior = load_empirical_prior(prior)?;
            if let Some(m) = m {
                prior = prior.with_weight(*m)?;
            }
            let mut result = ddbifs_reconstruct(&y, &prior, *sigma)?;
            if let Some(truth) = truth {
                let truth = load_image(truth)?;
                let timing = result.diagnostics.timing_seconds;
                result.diagnostics = metrics(&result.image, &truth, None)?;
                result.diagnostics.timing_seconds = timing;
                println!("rmse = {:.6}", result.diagnostics.rmse.unwrap());
            }
            if let Some(out) = &cli.out {
                save_image(&result.image, out, true)?;
            }
            if let Some(report) = &cli.report {
                let mut text = format!("ddbifs.m = {}\nddbifs.sigma = {sigma}\n", prior.m);
                if let Some(rmse) = result.diagnostics.rmse {
                    text.push_str(&format!("metric.rmse = {rmse:.12}\n"));
                }
                std::fs::write(report, text)?;
            }
            Ok(())
        }
        Command::Phantom { size, labels_out } => {
            let (img, labels) = make_phantom(*size, *size)?;
            if let Some(out) = &cli.out {
                // Raw float keeps the exact 20/10/0 levels.
                save_image(&img, out, false)?;
            }
            if let Some(path) = labels_out {
                let label_img =
                    RealGrid::from_vec(*size, *size, labels.iter().map(|&l| l as f64).collect())?;
                save_image(&label_img, path, false)?;
            }
            Ok(())
        }
        Command::Metrics {
            estimate,
            truth,
            labels,
        } => {
            let est = load_image(estimate)?;
            let truth = load_image(truth)?;
            let labels = match labels {
                Some(path) => Some(
                    load_image(path)?
                        .data()
                        .iter()
                        .map(|&v| v as u8)
                        .collect::<Vec<u8>>(),
                ),
                None => None,
            };
            let d = metrics(&est, &truth, labels.as_deref())?;
            let mut text = format!("metric.rmse = {:.12}\n", d.rmse.unwrap());
            if let Some(means) = &d.region_means {
                for (label, mean) in means {
                    text.push_str(&format!("metric.region-mean.{label} = {mean:.12}\n"));
                }
            }
            if let Some(profile) = &d.power_profile {
                for (r, p) in profile {
                    text.push_str(&format!("metric.error-power.{r} = {p:.6e}\n"));
                }
            }
            print!("{text}");
            if let Some(report) = &cli.report {
                std::fs::write(report, text)?;
            }
            Ok(())
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(config)?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            // CLI flags override file settings when given.
            if cli.seed != 0 {
                cfg.seed = cli.seed;
            }
            if cli.out.is_some() {
                cfg.out_image = cli.out.clone();
            }
            if cli.report.is_some() {
                cfg.report_path = cli.report.clone();
            }
            run_and_summarize(&cfg)
        }
    }
}

fn run_and_summarize(cfg: &ExperimentConfig) -> Result<()> {
    let outcome = run_experiment(cfg, None)?;
    if let Some(rmse) = outcome.estimate.diagnostics.rmse {
        println!("rmse = {rmse:.6}");
    }
    if let Some(baseline) = &outcome.baseline {
        if let Some(rmse) = baseline.diagnostics.rmse {
            println!("igmrf rmse = {rmse:.6}");
        }
    }
    if let Some(t) = outcome.estimate.diagnostics.timing_seconds {
        eprintln!("estimator seconds = {t:.3}");
    }
    Ok(())
}

fn write_images(images: &[RealGrid], out: Option<&Path>) -> Result<()> {
    let Some(out) = out else {
        return Err(Error::Input("--out is required".into()));
    };
    if images.len() == 1 {
        save_image(&images[0], out, true)
    } else {
        write_stack(images, out)
    }
}

fn load_database(path: &Path) -> Result<Vec<RealGrid>> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png" | "pgm" | "f32")
                )
            })
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(Error::Input(format!(
                "no readable images in {}",
                path.display()
            )));
        }
        entries.iter().map(load_image).collect()
    } else {
        read_stack(path)
    }
}
