//! Parametric stable tail dependence families.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub mod brown_resnick;
pub mod logistic;
pub mod maxlinear;

pub use brown_resnick::{
    br_extremal_coeff, br_pair_stdf, variogram, BrownResnick, BrownResnickStdf, GridLocations,
};
pub use logistic::{logistic_stdf, Logistic, LogisticStdf};
pub use maxlinear::{dag_to_coeffs, maxlinear_stdf, Dag, DagEdge, DagModel, MaxLinearCoeffs};

/// Relative step of the finite-difference partials in `x`.
pub const X_FD_STEP: f64 = 1e-5;

/// A stable tail dependence function with its parameter already fixed.
pub trait Stdf: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<f64>;

    /// Partials `d l / d x_j` at the positive coordinates of `x`. Entries at
    /// zero coordinates are reported as 0 and carry no meaning.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(self, x)
    }
}

/// Central differences with step `1e-5 * max(x_j, 1)`; forward differences
/// when the step would leave the orthant.
pub fn fd_gradient<S: Stdf + ?Sized>(s: &S, x: &[f64]) -> Result<Vec<f64>> {
    check_x(x, s.dim())?;
    let mut grad = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for j in 0..x.len() {
        if x[j] <= 0.0 {
            continue;
        }
        let h = X_FD_STEP * x[j].max(1.0);
        y[j] = x[j] + h;
        let up = s.eval(&y)?;
        if x[j] > h {
            y[j] = x[j] - h;
            grad[j] = (up - s.eval(&y)?) / (2.0 * h);
        } else {
            y[j] = x[j];
            grad[j] = (up - s.eval(&y)?) / h;
        }
        y[j] = x[j];
    }
    Ok(grad)
}

pub(crate) fn check_x(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return domain(format!("point has {} coordinates, model has d = {d}", x.len()));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return domain(format!("stdf argument must be finite and non-negative, got {v}"));
    }
    Ok(())
}

/// Support of one parameter, as seen by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ParamBound {
    /// `lo < theta <= hi`, mapped by a scaled logistic function.
    Interval { lo: f64, hi: f64 },
    /// `theta > 0`, mapped by `exp`.
    Positive,
}

impl ParamBound {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Self::Interval { lo, hi } => v > lo && v <= hi,
            Self::Positive => v > 0.0 && v.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub bound: ParamBound,
    /// Range for random starting points.
    pub init: (f64, f64),
}

/// Parameter box of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return domain(format!(
                "expected {} parameters, got {}",
                self.dim(),
                theta.len()
            ));
        }
        for (p, &v) in self.params.iter().zip(theta) {
            if !p.bound.contains(v) {
                return Err(Error::Infeasible(format!("{} = {v} is outside its range", p.name)));
            }
        }
        Ok(())
    }
}

/// A parametric family `theta -> l(.; theta)`.
pub trait TailModel: Send + Sync {
    /// Dimension `d` of the data.
    fn dim(&self) -> usize;

    fn param_space(&self) -> &ParamSpace;

    fn label(&self) -> String;

    /// Fix the parameter. Out-of-range or infeasible `theta` is an error.
    fn bind(&self, theta: &[f64]) -> Result<Box<dyn Stdf>>;

    fn n_params(&self) -> usize {
        self.param_space().dim()
    }

    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.bind(theta)?.eval(x)
    }
}

/// Partials `d l(c; theta) / d c_j`.
pub fn stdf_gradient_x(model: &dyn TailModel, theta: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    model.bind(theta)?.gradient(c)
}
