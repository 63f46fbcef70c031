//! Numerical kernels: symmetric eigendecomposition, SPD traces and solves,
//! and the normal / chi-square quantile functions.
//!
//! Everything here is a pure function of its inputs.

mod linalg;
mod special;

pub use linalg::{
    check_spd, dot, eig_sym, spd_inverse_trace, trace_product_inverse, Cholesky, EigDecomposition,
    Matrix, SymMatrix, SPD_RELATIVE_FLOOR,
};
pub use special::{
    chi2_cdf, chi2_quantile, ln_gamma, normal_cdf, normal_pdf, normal_quantile, reg_gamma_lower,
    reg_gamma_upper, QUANTILE_MAX_ITER, QUANTILE_TOL,
};
