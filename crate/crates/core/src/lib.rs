//! Transform-domain image dehazing built on discrete Krawtchouk moments.
//!
//! The crate covers the whole pipeline: the orthonormal Krawtchouk basis
//! ([`krawtchouk`]), block and sliding moment transforms ([`transform`]),
//! colour handling ([`colorspace`]), haze synthesis with a dark-channel
//! baseline ([`haze`]), a small single-threaded training stack for the
//! two-branch generator ([`neural`]), quality metrics ([`metrics`]) and
//! image/dataset I/O ([`dataio`]).

pub mod colorspace;
pub mod dataio;
pub mod error;
pub mod experiments;
pub mod haze;
pub mod krawtchouk;
pub mod metrics;
pub mod neural;
pub mod plane;
pub mod scenes;
pub mod transform;
pub mod zigzag;

pub use colorspace::{rgb_to_ycbcr, ycbcr_to_rgb, YCbCrImage};
pub use error::{Error, Result};
pub use dataio::{load_image, save_image, DatasetManifest};
pub use krawtchouk::{BasisSet, KrawtchoukParams, PolynomialMatrix};
pub use plane::{ColorSpace, PlanarImage, Plane};
pub use transform::{CubeMode, FrequencyCube};
pub use metrics::{psnr, ssim, MetricReport};
pub use neural::{Generator, GeneratorConfig, ModelState, Tensor4};
