//! Multiplication accounting for the interpolation kernels.
//!
//! Counting is compiled in only with the `op-count` feature; otherwise every
//! method is a no-op and [`OpCounter::enabled`] returns `false`.
//!
//! Units are real multiplications (a division or reciprocal counts as one).
//! A complex value counts as two real channels.

use serde::{Deserialize, Serialize};

/// Per-run multiplication tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    /// Tridiagonal spline pipelines actually executed (coefficients,
    /// forward sweep, back substitution).
    pub pipeline_mults: u64,
    /// 4×4 coefficient products actually executed.
    pub patch_mults: u64,
    /// Coefficient construction under the appendix convention: one length-N
    /// pipeline per channel and direction plus 128 per channel for each of
    /// the (M−1)(N−1) surfaces.
    pub appendix_coeff_mults: u64,
    /// Value queries, 26 per channel.
    pub query_mults: u64,
    /// Extra work for ∂/∂z and ∂²/∂t² on top of a value query.
    pub derivative_query_mults: u64,
}

impl OpCounter {
    pub const fn enabled() -> bool {
        cfg!(feature = "op-count")
    }

    #[inline(always)]
    pub(crate) fn pipeline(&mut self, _n: u64) {
        #[cfg(feature = "op-count")]
        {
            self.pipeline_mults += _n;
        }
    }

    #[inline(always)]
    pub(crate) fn patch(&mut self, _n: u64) {
        #[cfg(feature = "op-count")]
        {
            self.patch_mults += _n;
        }
    }

    #[inline(always)]
    pub(crate) fn appendix_coeff(&mut self, _n: u64) {
        #[cfg(feature = "op-count")]
        {
            self.appendix_coeff_mults += _n;
        }
    }

    #[inline(always)]
    pub(crate) fn query(&mut self, _n: u64) {
        #[cfg(feature = "op-count")]
        {
            self.query_mults += _n;
        }
    }

    #[inline(always)]
    pub(crate) fn derivative_query(&mut self, _n: u64) {
        #[cfg(feature = "op-count")]
        {
            self.derivative_query_mults += _n;
        }
    }

    /// Actual multiplications spent building coefficients.
    pub fn actual_coeff_mults(&self) -> u64 {
        self.pipeline_mults + self.patch_mults
    }

    pub fn merge(&mut self, other: &OpCounter) {
        self.pipeline_mults += other.pipeline_mults;
        self.patch_mults += other.patch_mults;
        self.appendix_coeff_mults += other.appendix_coeff_mults;
        self.query_mults += other.query_mults;
        self.derivative_query_mults += other.derivative_query_mults;
    }
}

impl std::ops::Add for OpCounter {
    type Output = OpCounter;

    fn add(mut self, rhs: OpCounter) -> OpCounter {
        self.merge(&rhs);
        self
    }
}
