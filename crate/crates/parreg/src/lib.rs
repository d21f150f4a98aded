//! Numerical machinery for parabolic model problems: anisotropic symbol
//! calculus, grid-sampled function-space norms, Fourier-multiplier solvers,
//! half-line Cauchy solves, partition-of-unity localization with coefficient
//! freezing, and chart-based solves on manifolds described by uniformly
//! regular atlases.
//!
//! The crate works at desk scale on uniform periodic boxes (spectral in
//! space, periodic window or half-line in time) and verifies operator bounds
//! numerically: eta-uniform maximal-regularity ratios, resolvent decay,
//! compatibility conditions, and localization identities.

pub mod error;
pub mod grid;
pub mod spaces;
pub mod linalg;
pub mod weights;

pub use error::{Error, Result};
