//! Frequency-domain feature-map resampling with an alias-free path.
//!
//! The crate provides:
//! - dense 4-D tensors and the pixel shuffle/unshuffle baselines ([`tensor`]),
//! - 2-D transforms with centered crop/embed and border padding ([`spectral`]),
//! - the mixed-band downsampler, its drop-high variant, and the two
//!   upsamplers, composable into pipelines ([`sampling`]),
//! - analytic adjoints for every operator plus a finite-difference
//!   checker ([`autodiff`]),
//! - an L-infinity PGD harness over differentiable pipelines ([`attack`]),
//! - PSNR/SSIM and spectral-artifact metrics ([`metrics`]),
//! - bundled trained mixing coefficients ([`coefficients`]).

pub mod attack;
pub mod autodiff;
pub mod coefficients;
pub mod error;
pub mod metrics;
pub mod sampling;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, SpatialTensor, SpectralTensor};
