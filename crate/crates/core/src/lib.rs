//! Blind deconvolution driven by Stein's unbiased risk estimate (SURE).
//!
//! The toolkit estimates the parameters of a parametric point-spread
//! function (anisotropic Gaussian, heavy-tailed Laplace-type, or a convex
//! mixture) together with the Tikhonov regularization weight, by minimizing
//! an unbiased estimate of the blurred-domain mean squared error. All
//! operators are circulant, so every quantity the iterations need reduces to
//! `O(N)` pointwise reductions over the frequency grid; the only FFTs are the
//! initial transform of the data and the final inverse transform of the
//! restored image.
//!
//! Module map:
//!
//! * [`spectral`]: image grids, operator spectra, DFT conventions.
//! * [`psf`]: parametric PSF families and their derivative spectra.
//! * [`regularizer`]: difference-operator spectra of real order.
//! * [`sure`]: the risk estimate and its derivatives in closed spectral form.
//! * [`estimator`]: fixed-point / gradient iterations over PSF parameters
//!   and the regularization weight.
//! * [`sim`]: seeded synthetic trials, batch sweeps, and their artifacts.
//! * [`tiler`]: patchwise estimation and overlap-blended restoration for
//!   large or spatially varying scenes.
//! * [`image_io`]: portable graymap/pixmap reading and writing.
//! * [`texture`]: seeded synthetic test imagery with natural-image statistics.

pub mod error;
pub mod estimator;
pub mod image_io;
pub mod psf;
pub mod regularizer;
pub mod scalar;
pub mod sim;
pub mod spectral;
pub mod sure;
pub mod texture;
pub mod tiler;

pub use error::{DeconvError, Result};
pub use scalar::Scalar;

/// f64 image grid, the common concrete case.
pub type ImageGrid64 = spectral::ImageGrid<f64>;
/// f64 operator spectrum.
pub type Spectrum64 = spectral::Spectrum<f64>;
/// f64 risk-evaluation context.
pub type SureContext64 = sure::SureContext<f64>;
