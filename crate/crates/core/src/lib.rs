//! Numerical laboratory for the wave equation driven by time-independent,
//! spatially homogeneous Gaussian noise in one and two space dimensions,
//! interpreted in the Stratonovich sense.
//!
//! Three independent routes to the solution are provided and can be
//! reconciled against each other:
//!
//! * [`picard`]: grid-based Picard iteration on a fixed noise realization,
//! * [`feynman_kac`]: Monte Carlo over Poisson-interpolated paths,
//! * [`chaos`]: Fourier-domain evaluation of chaos kernels and moment series.
//!
//! [`noise`] defines the admissible covariance / spectral-measure pairs and
//! their spectral realizations, [`kernel`] the fundamental solution of the
//! wave equation and [`combinatorics`] the pairing machinery behind the
//! product formula and Isserlis' theorem.

pub mod chaos;
pub mod combinatorics;
pub mod error;
pub mod exec;
pub mod feynman_kac;
pub mod geometry;
pub mod kernel;
pub mod noise;
pub mod picard;
pub mod quad;
pub mod special;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{Dim, Vec2};
pub use noise::{NoiseSample, SpectralMeasure};
pub use stats::EstimatorResult;
