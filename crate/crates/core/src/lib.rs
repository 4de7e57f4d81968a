//! Physics-informed digital twin of a single-span optical fiber.
//!
//! A split-step Fourier twin with per-segment (β₂, γ) is fitted to
//! input/output signal pairs, while a bicubic spline surface over the twin's
//! intermediate fields feeds an NLSE residual loss that estimates constant
//! fiber parameters.

pub mod complexity;
pub mod error;
pub mod grad;
pub mod losses;
pub mod nlse;
pub mod par;
pub mod signal;
pub mod spline;
pub mod trainer;

pub use error::{Error, Result};
pub use par::Exec;
