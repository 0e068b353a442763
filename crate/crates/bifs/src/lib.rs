//! Bayesian image analysis in Fourier space.
//!
//! Images are reconstructed or enhanced by combining independent
//! per-spatial-frequency priors (defined through parameter functions over
//! k-space radius) with Fourier-domain likelihoods. Because the posterior
//! factorizes over frequencies, MAP estimation needs no iteration over the
//! image and posterior sampling needs no Markov chain: each frequency is a
//! one-dimensional problem, solved independently and in parallel.
//!
//! The main entry points:
//!
//! - [`map::reconstruct_map`]: non-iterative MAP reconstruction (denoising,
//!   frequency enhancement, edge extraction are all prior choices).
//! - [`sample`]: Monte Carlo posterior images, posterior means (MMSE) and
//!   prior-predictive simulation.
//! - [`mrf`]: intrinsic Gaussian Markov random field machinery — spectral
//!   simulation on the torus, a conjugate-gradients MAP baseline, and
//!   fitting a Fourier-space prior that approximates the MRF.
//! - [`ddbifs`]: per-frequency empirical priors estimated from an image
//!   database, applied through a conjugate Gaussian model.
//! - [`experiment`]: declarative experiment configs and the runner behind
//!   the `bifs` command-line tool.
//!
//! See the crate examples for end-to-end usage of each capability.

pub mod ddbifs;
pub mod error;
pub mod experiment;
pub mod image;
pub mod kspace;
pub mod map;
pub mod metrics;
pub mod mrf;
pub mod paramfn;
pub mod prior;
pub mod sample;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use kspace::{
    forward_transform, hermitian_symmetrize, inverse_transform, ComplexField, KGrid, RealGrid,
    SymmetryState,
};
pub use metrics::{Diagnostics, ReconstructionResult};
pub use paramfn::{ParamFn, RadiusMode};
pub use prior::{LikelihoodSpec, ModulusFamily, PriorSpec};
