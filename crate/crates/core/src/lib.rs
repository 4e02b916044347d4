//! Multi-band weighted Schatten-p norm minimization for color and
//! multispectral image denoising.
//!
//! The crate is layered bottom-up:
//!
//! * [`shrinkage`]: scalar generalized soft-thresholding and the per-group
//!   weight rule;
//! * [`lowrank`]: whitened SVD shrinkage of one patch matrix;
//! * [`patching`]: patch vectors, block matching and overlap averaging;
//! * [`pipeline`]: the iterative denoiser and noise-level helpers;
//! * [`imaging`]: image stacks, PNG/PNM/MBS I/O and seeded AWGN;
//! * [`quality`]: PSNR, SSIM, ERGAS and SAM;
//! * [`oracle`]: brute-force references used by the tests;
//! * [`cli`]: the `mbwpnm` command-line front end.

// Validation uses `!(x >= 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod imaging;
pub mod lowrank;
pub mod oracle;
pub mod patching;
pub mod pipeline;
pub mod quality;
pub mod shrinkage;

pub use error::{Error, Result};
pub use imaging::{add_awgn, load, save, Format, ImageStack};
pub use lowrank::{objective, solve, svd_thin, ObjectiveForm, PatchMatrix, SvdResult, WhiteningMatrix};
pub use patching::{aggregate, block_match, extract_patch, PatchGroup, PatchIndex};
pub use pipeline::{denoise, estimate_noise, rms_sigma, DenoiseConfig, NoiseProfile};
pub use quality::{ergas, psnr, sam, ssim, QualityReport};
pub use shrinkage::{gst, gst_threshold, make_weights, ShrinkageSpec};
