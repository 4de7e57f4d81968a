//! Natural cubic and bicubic spline interpolation.

mod counter;
mod surface;
mod tridiag;

pub use counter::OpCounter;
pub use surface::{Coeffs, CrossOrder, SplineSurface, SurfaceCotangent, SurfacePoint};
pub use tridiag::{
    natural_spline, natural_spline_counted, thomas_solve, thomas_solve_counted, Lane,
    TridiagonalSystem,
};

/// Multiplications charged per value query: 26 per real channel.
pub const QUERY_MULTS: u64 = 52;

/// Multiplications for `n_queries` value queries.
pub fn count_query_mults(n_queries: u64) -> u64 {
    QUERY_MULTS * n_queries
}

/// Shorthand for [`SplineSurface::build`].
pub fn build_surface(matrix: &crate::nlse::SignalMatrix) -> crate::Result<SplineSurface> {
    SplineSurface::build(matrix)
}
