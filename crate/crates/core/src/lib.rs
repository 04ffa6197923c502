//! Continuous-updating weighted least-squares estimation of parametric
//! stable tail dependence functions.

pub mod error;
pub mod estimator;
pub mod gof;
pub mod models;
pub mod numerics;
pub mod simulate;
pub mod stdf;

pub use error::{Error, Result};
