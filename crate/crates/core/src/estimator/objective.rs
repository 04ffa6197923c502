use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Stdf, TailModel};
use crate::numerics::{spd_inverse, SymMatrix};

use super::{sigma_for, PointSet};

/// Fraction of `trace(Sigma)/q` used as the default ridge.
pub const DEFAULT_TIKHONOV_FRACTION: f64 = 0.01;

/// Rule producing the weight matrix `Omega(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum WeightPolicy {
    Identity,
    InverseSigma,
    /// `(Sigma + c I)^{-1}`; `None` means `c = 0.01 trace(Sigma)/q`.
    Tikhonov { c: Option<f64> },
}

impl WeightPolicy {
    pub fn validate(&self) -> Result<()> {
        if let Self::Tikhonov { c: Some(c) } = self {
            if !(*c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("tikhonov constant must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn needs_sigma(&self) -> bool {
        !matches!(self, Self::Identity)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::InverseSigma => "inverse_sigma".into(),
            Self::Tikhonov { c: Some(c) } => format!("tikhonov({c})"),
            Self::Tikhonov { c: None } => "tikhonov".into(),
        }
    }
}

/// `Omega` from a precomputed `Sigma`.
pub fn weight_from_sigma(policy: WeightPolicy, sigma: &SymMatrix) -> Result<SymMatrix> {
    policy.validate()?;
    match policy {
        WeightPolicy::Identity => Ok(SymMatrix::identity(sigma.dim())),
        WeightPolicy::InverseSigma => spd_inverse(sigma).map_err(|e| match e {
            Error::Singular { min_eigenvalue, .. } => Error::Estimation(format!(
                "Sigma(theta) is not positive definite (smallest eigenvalue {min_eigenvalue:e}); \
                 use the tikhonov weight policy"
            )),
            other => other,
        }),
        WeightPolicy::Tikhonov { c } => {
            let c = match c {
                Some(c) => c,
                None => DEFAULT_TIKHONOV_FRACTION * sigma.trace() / sigma.dim() as f64,
            };
            if !(c > 0.0) {
                return Err(Error::Estimation(
                    "default tikhonov constant is zero because Sigma has zero trace; pass an explicit c".into(),
                ));
            }
            spd_inverse(&sigma.add_ridge(c))
        }
    }
}

/// `Omega(theta)` for a model under a policy.
pub fn weight_matrix(
    policy: WeightPolicy,
    model: &dyn TailModel,
    theta: &[f64],
    points: &PointSet,
    sigma_scale: f64,
) -> Result<SymMatrix> {
    if !policy.needs_sigma() {
        return Ok(SymMatrix::identity(points.q()));
    }
    let stdf = model.bind(theta)?;
    weight_from_sigma(policy, &sigma_for(stdf.as_ref(), points, sigma_scale)?)
}

/// `D = L_hat - L(theta)`.
pub fn discrepancy(estimates: &[f64], stdf: &dyn Stdf, points: &PointSet) -> Result<Vec<f64>> {
    if estimates.len() != points.q() {
        return Err(Error::Config(format!(
            "{} initial estimates for {} points",
            estimates.len(),
            points.q()
        )));
    }
    points
        .points()
        .iter()
        .zip(estimates)
        .map(|(c, e)| Ok(e - stdf.eval(c)?))
        .collect()
}

/// `D^T Omega D`.
pub fn quadratic_form(d: &[f64], omega: &SymMatrix) -> f64 {
    let v = DVector::from_column_slice(d);
    (v.transpose() * omega.as_matrix() * &v)[(0, 0)]
}

/// The continuous-updating objective `f(theta) = D(theta)^T Omega(theta) D(theta)`.
pub struct Objective<'a> {
    pub model: &'a dyn TailModel,
    pub points: &'a PointSet,
    pub estimates: &'a [f64],
    pub policy: WeightPolicy,
    pub sigma_scale: f64,
    weight_evals: AtomicUsize,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a dyn TailModel,
        points: &'a PointSet,
        estimates: &'a [f64],
        policy: WeightPolicy,
        sigma_scale: f64,
    ) -> Result<Self> {
        policy.validate()?;
        if model.dim() != points.d() {
            return Err(Error::Config(format!(
                "model dimension {} does not match point dimension {}",
                model.dim(),
                points.d()
            )));
        }
        if estimates.len() != points.q() {
            return Err(Error::Config(format!(
                "{} initial estimates for {} points",
                estimates.len(),
                points.q()
            )));
        }
        Ok(Self {
            model,
            points,
            estimates,
            policy,
            sigma_scale,
            weight_evals: AtomicUsize::new(0),
        })
    }

    /// Number of times `Omega(theta)` has been recomputed.
    pub fn weight_evaluations(&self) -> usize {
        self.weight_evals.load(Ordering::Relaxed)
    }

    /// Value, discrepancy, and weight at `theta`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>, SymMatrix)> {
        let stdf = self.model.bind(theta)?;
        let d = discrepancy(self.estimates, stdf.as_ref(), self.points)?;
        let omega = if self.policy.needs_sigma() {
            self.weight_evals.fetch_add(1, Ordering::Relaxed);
            let sigma = sigma_for(stdf.as_ref(), self.points, self.sigma_scale)?;
            weight_from_sigma(self.policy, &sigma)?
        } else {
            SymMatrix::identity(self.points.q())
        };
        let f = if self.policy.needs_sigma() {
            quadratic_form(&d, &omega)
        } else {
            d.iter().map(|v| v * v).sum()
        };
        Ok((f, d, omega))
    }

    /// Objective value; infeasible or degenerate `theta` gives `+inf`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        match self.evaluate(theta) {
            Ok((f, _, _)) if f.is_finite() => f.max(0.0),
            _ => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{extremal_coeff_point_set, grid_point_set, sigma_matrix};
    use crate::models::{Dag, DagModel, Logistic};
    use nalgebra::DMatrix;

    #[test]
    fn discrepancy_examples() {
        let m = Logistic::new(2).unwrap();
        let p = PointSet::new(2, vec![vec![1.0, 1.0]]).unwrap();
        let s = m.bind(&[1.0]).unwrap();
        let d = discrepancy(&[1.9], s.as_ref(), &p).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15);
        let d = discrepancy(&[2.0], s.as_ref(), &p).unwrap();
        assert_eq!(d, vec![0.0]);

        let dag = DagModel::new(Dag::diamond());
        let p = PointSet::new(4, vec![vec![1.0; 4]]).unwrap();
        let s = dag.bind(&[0.3, 0.8, 0.4, 0.55]).unwrap();
        let d = discrepancy(&[2.0], s.as_ref(), &p).unwrap();
        assert!((d[0] + 0.07).abs() < 1e-14);
    }

    #[test]
    fn weight_examples() {
        let sigma = SymMatrix::from_diagonal(&[0.0]);
        let w = weight_from_sigma(WeightPolicy::Tikhonov { c: Some(0.25) }, &sigma).unwrap();
        assert!((w.get(0, 0) - 4.0).abs() < 1e-12);
        assert!(weight_from_sigma(WeightPolicy::InverseSigma, &sigma).is_err());
        assert!(weight_from_sigma(WeightPolicy::Tikhonov { c: None }, &sigma).is_err());
        assert!(WeightPolicy::Tikhonov { c: Some(-1.0) }.validate().is_err());

        let m = Logistic::new(2).unwrap();
        let p = PointSet::new(2, vec![vec![1.0, 1.0], vec![0.5, 1.0]]).unwrap();
        let id = weight_matrix(WeightPolicy::Identity, &m, &[0.5], &p, 1.0).unwrap();
        assert_eq!(id, SymMatrix::identity(2));
        let omega = weight_matrix(WeightPolicy::InverseSigma, &m, &[0.5], &p, 1.0).unwrap();
        let sigma = sigma_matrix(&m, &[0.5], &p).unwrap();
        let prod = omega.as_matrix() * sigma.as_matrix();
        assert!((prod - DMatrix::<f64>::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn objective_examples() {
        let omega = SymMatrix::from_diagonal(&[25.0]);
        assert!((quadratic_form(&[0.2], &omega) - 1.0).abs() < 1e-14);

        let m = Logistic::new(3).unwrap();
        let p = extremal_coeff_point_set(3, 2).unwrap();
        let truth: Vec<f64> = p.points().iter().map(|c| m.eval(c, &[0.4]).unwrap()).collect();
        let obj = Objective::new(&m, &p, &truth, WeightPolicy::InverseSigma, 1.0).unwrap();
        assert!(obj.value(&[0.4]) < 1e-24);

        let shifted: Vec<f64> = truth.iter().map(|v| v + 0.01).collect();
        let obj = Objective::new(&m, &p, &shifted, WeightPolicy::Identity, 1.0).unwrap();
        let (f, d, _) = obj.evaluate(&[0.4]).unwrap();
        assert!((f - d.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-18);
        assert!((f - 3e-4).abs() < 1e-12);
    }

    #[test]
    fn infeasible_theta_is_infinite() {
        let dag = DagModel::new(Dag::diamond());
        let p = grid_point_set(4, &[0.0, 0.5, 1.0], &[2]).unwrap();
        let est = vec![1.5; p.q()];
        let obj = Objective::new(&dag, &p, &est, WeightPolicy::Identity, 1.0).unwrap();
        assert_eq!(obj.value(&[0.9, 0.8, 0.9, 0.9]), f64::INFINITY);
        assert_eq!(obj.value(&[1.5, 0.8, 0.2, 0.2]), f64::INFINITY);
        assert!(obj.value(&[0.3, 0.8, 0.4, 0.55]).is_finite());
    }

    #[test]
    fn weight_is_recomputed_at_every_theta() {
        let m = Logistic::new(2).unwrap();
        let p = grid_point_set(2, &[0.0, 0.5, 1.0], &[2]).unwrap();
        let est = vec![1.4, 1.1, 1.1, 1.5];
        for policy in [WeightPolicy::InverseSigma, WeightPolicy::Tikhonov { c: None }] {
            let obj = Objective::new(&m, &p, &est, policy, 1.0).unwrap();
            let (_, _, w1) = obj.evaluate(&[0.4]).unwrap();
            let (_, _, w2) = obj.evaluate(&[0.6]).unwrap();
            assert_eq!(obj.weight_evaluations(), 2);
            assert!((w1.as_matrix() - w2.as_matrix()).amax() > 1e-6);
        }
        let obj = Objective::new(&m, &p, &est, WeightPolicy::Identity, 1.0).unwrap();
        obj.value(&[0.4]);
        assert_eq!(obj.weight_evaluations(), 0);
    }
}
