//! Constructive machinery behind the pre-log lower bound of correlated
//! Rayleigh block-fading SIMO channels with as many receive antennas as the
//! rank `Q` of the channel covariance:
//!
//! * [`matrix`]: dense complex linear algebra (Kronecker products, the
//!   diagonal-stacking operator, determinants, numerical rank, solves).
//! * [`channel`]: covariance factors, block sampling and the stacked
//!   input/output relation.
//! * [`property_a`]: row-independence certificates and row-spark.
//! * [`recovery`]: pilot-anchored noiseless recovery of fading and symbols.
//! * [`jacobian`]: the output-map Jacobian and its determinant factorization.
//! * [`bound`]: Monte Carlo evaluation of the bound and its pre-log slope.
//!
//! All numerical code is generic over the real scalar ([`Real`]); the
//! aliases below fix it to `f64`, which every tolerance in the crate is
//! calibrated for.

pub mod bound;
pub mod channel;
pub mod error;
pub mod jacobian;
pub mod matrix;
pub mod property_a;
pub mod recovery;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::IndexSet;
pub use scalar::Real;

pub use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type Matrix = matrix::ComplexMatrix<f64>;
pub type Matrix32 = matrix::ComplexMatrix<f32>;
pub type Factor = channel::CovarianceFactor<f64>;
pub type Config = channel::ChannelConfig<f64>;
pub type Sample = channel::BlockSample<f64>;
pub type Curve = bound::BoundCurve<f64>;
pub type Pilot = recovery::PilotMode<f64>;
