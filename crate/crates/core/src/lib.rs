//! Numerical laboratory for the cubic connection problem
//! `u'' = (x^3 + a2 x + a3) u`, the complex cubic oscillator, and an explicit
//! family of exact solutions of the degenerate hyperbolic operator
//! `-D0^2 + 2 x1 D0 D2 + D1^2 + x1^3 D2^2 + b0 D0 + b1 D1 + b2 D2`.

pub mod error;
pub mod family;
pub mod fit;
pub mod geometry;
pub mod matching;
pub mod ode;
pub mod oscillator;
pub mod scaled;
pub mod sibuya;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use matching::{MatchSolution, OperatorCoeffs};
pub use ode::{PotentialParams, Ray, WaveState};
pub use scaled::Scaled;
