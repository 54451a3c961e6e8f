//! Fast hyperspectral image denoising and inpainting.
//!
//! Hyperspectral cubes combine two kinds of structure: spectra concentrate
//! near a low-dimensional subspace, and the subspace coefficient images
//! (eigen-images) inherit the spatial self-similarity of the scene. The
//! pipelines here exploit both: learn a semi-unitary band basis, denoise the
//! few eigen-images with a non-local patch denoiser, and reconstruct.
//! Band-correlated Gaussian noise is whitened first; Poissonian counts go
//! through the Anscombe transform; missing samples at known positions are
//! recovered per pixel by least squares on the observed bands before
//! denoising.
//!
//! The crate also ships the supporting machinery: bit-exact binary formats
//! for cubes, masks, bases and noise models, a seeded simulation harness,
//! and PSNR/SSIM quality reports.

pub mod cube;
pub mod denoiser;
pub mod error;
pub mod fasthyde;
pub mod fasthyin;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod simulate;
pub mod subspace;
pub mod transforms;

pub use cube::{BandScaling, Dtype, HsiCube, ObservationMask};
pub use denoiser::{DenoiserKind, DenoiserSpec};
pub use error::{Error, Result};
pub use fasthyde::{
    fasthyde_iid, fasthyde_noniid, fasthyde_poisson, DenoiseRequest, DenoiseResult, DimensionSpec,
    NoiseSpec, StageTimings,
};
pub use fasthyin::{
    fasthyin_diag, fasthyin_iid, fasthyin_noniid, recover_pixel_ls, recover_pixel_wls,
    InpaintRequest, UnderdeterminedPolicy,
};
pub use metrics::QualityReport;
pub use simulate::NoiseCase;
pub use subspace::{EigenImages, NoiseModel, SubspaceBasis};
pub use transforms::WhiteningOperator;
