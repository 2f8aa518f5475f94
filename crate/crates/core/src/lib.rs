//! Phase-step and phase-map recovery from two randomly phase-shifted
//! interferograms.
//!
//! The pipeline has three stages:
//!
//! 1. [`gfb`] normalizes each fringe pattern with a Gabor filter bank
//!    (background removed, unit amplitude, noise filtered).
//! 2. [`ellipse`] builds the centered Lissajous cloud from the sum and
//!    difference of the normalized frames and fits the two-term ellipse
//!    `θ1·x² + θ2·y² = 1`, either by plain least squares or by
//!    iteratively reweighted least squares under the Leclerc potential.
//!    A five-term conic fit is kept as a baseline.
//! 3. [`demod`] converts the fit to the phase step `δ = 2·atan(√(θ1/θ2))`
//!    and demodulates the phase map with the two-step formula.
//!
//! [`synth`] generates seeded synthetic pairs with ground truth and
//! [`bench`] chains everything into sweeps that produce CSV tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod demod;
pub mod ellipse;
mod error;
mod fft;
pub mod field;
pub mod gfb;
pub mod io;
pub mod synth;

pub use error::{Error, Result};
pub use field::{wrap_to_pi, ComplexField, FieldStats, ScalarField};
