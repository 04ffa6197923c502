//! Special functions and dense symmetric linear algebra.

pub mod linalg;
pub mod special;

pub use linalg::{
    jacobi_eigen, numerical_rank, singular_values, spd_inverse, spd_solve, spd_solve_vec,
    sym_eigen, tridiagonal_ql_eigen, EigenDecomp, SymMatrix,
};
pub use special::{
    bivariate_normal_cdf, chisq_quantile, chisq_sf, std_normal_cdf, std_normal_pdf,
    trivariate_normal_cdf,
};
