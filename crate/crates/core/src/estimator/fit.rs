use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::GofResult;
use crate::models::{ParamBound, TailModel};
use crate::numerics::{singular_values, spd_inverse, SymMatrix};
use crate::stdf::{initial_estimates, EstimatorKind, RankMatrix, RateProvider, TailFraction};

use super::{minimize, sigma_for, Objective, OptimizerConfig, PointSet, WeightPolicy};

/// Relative threshold on singular values below which `L_dot` is flagged.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub start_values: Vec<f64>,
    pub weight_policy: String,
    pub estimator: String,
    pub k: usize,
    pub q: usize,
    pub p: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub param_names: Vec<String>,
    pub theta: Vec<f64>,
    pub objective_min: f64,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub gof: Option<GofResult>,
    pub diagnostics: Diagnostics,
}

/// Everything needed to fit: initial estimates at the points plus the
/// scaling of `Sigma` that matches the initial estimator.
pub struct FitInput<'a> {
    pub model: &'a dyn TailModel,
    pub points: &'a PointSet,
    pub estimates: Vec<f64>,
    pub k: usize,
    pub policy: WeightPolicy,
    pub sigma_scale: f64,
    pub estimator: String,
}

/// A fit together with the matrices at `theta_hat` used by the tests.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub report: FitReport,
    pub jacobian: DMatrix<f64>,
    pub sigma: SymMatrix,
    pub omega: SymMatrix,
    pub discrepancy: Vec<f64>,
    pub policy: WeightPolicy,
}

impl Fitted {
    pub fn theta(&self) -> &[f64] {
        &self.report.theta
    }
}

/// `L_dot(theta)`: `q x p` Jacobian of `theta -> (l(c_m; theta))_m` by
/// central differences with step `fd_step * max(|theta_j|, 1)`, one-sided at
/// the edge of the box or of the feasible region.
pub fn model_jacobian(
    model: &dyn TailModel,
    theta: &[f64],
    points: &PointSet,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let space = model.param_space();
    space.check(theta)?;
    let q = points.q();
    let p = theta.len();
    let values = |t: &[f64]| -> Result<Vec<f64>> {
        let s = model.bind(t)?;
        points.points().iter().map(|c| s.eval(c)).collect()
    };
    let base = values(theta)?;
    let mut jac = DMatrix::zeros(q, p);
    for j in 0..p {
        let h = fd_step * theta[j].abs().max(1.0);
        let inside = |v: f64| match space.params[j].bound {
            ParamBound::Interval { lo, hi } => v > lo && v <= hi,
            ParamBound::Positive => v > 0.0,
        };
        let shifted = |delta: f64| -> Option<Vec<f64>> {
            let mut t = theta.to_vec();
            t[j] += delta;
            if !inside(t[j]) {
                return None;
            }
            values(&t).ok()
        };
        let column: Vec<f64> = match (shifted(h), shifted(-h)) {
            (Some(up), Some(down)) => up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect(),
            (Some(up), None) => up.iter().zip(&base).map(|(a, b)| (a - b) / h).collect(),
            (None, Some(down)) => base.iter().zip(&down).map(|(a, b)| (a - b) / h).collect(),
            (None, None) => {
                return Err(Error::Estimation(format!(
                    "cannot differentiate in {} at {}",
                    space.params[j].name, theta[j]
                )))
            }
        };
        for (m, v) in column.into_iter().enumerate() {
            jac[(m, j)] = v;
        }
    }
    Ok(jac)
}

/// Sandwich `(L'WL)^{-1} L'W Sigma W L (L'WL)^{-1}`.
pub fn asymptotic_covariance(jac: &DMatrix<f64>, omega: &SymMatrix, sigma: &SymMatrix) -> Result<SymMatrix> {
    let lw = jac.transpose() * omega.as_matrix();
    let inner = SymMatrix::from_matrix(&lw * jac)?;
    let inv = spd_inverse(&inner).map_err(|e| {
        Error::Estimation(format!("L_dot' Omega L_dot is singular ({e}); the parameters are not identified by these points"))
    })?;
    let meat = &lw * sigma.as_matrix() * lw.transpose();
    SymMatrix::from_matrix(inv.as_matrix() * meat * inv.as_matrix())
}

fn resolve_policy(policy: WeightPolicy, cfg: &OptimizerConfig) -> WeightPolicy {
    match policy {
        WeightPolicy::Tikhonov { c: None } => WeightPolicy::Tikhonov { c: cfg.tikhonov_c },
        other => other,
    }
}

/// Continuous-updating weighted least-squares fit.
pub fn fit(input: &FitInput, cfg: &OptimizerConfig) -> Result<Fitted> {
    cfg.validate()?;
    let model = input.model;
    let points = input.points;
    let p = model.n_params();
    let q = points.q();
    if q < p {
        return Err(Error::Config(format!("q must be >= p (q = {q}, p = {p})")));
    }
    if input.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let policy = resolve_policy(input.policy, cfg);
    let objective = Objective::new(model, points, &input.estimates, policy, input.sigma_scale)?;
    let opt = minimize(|t| objective.value(t), model.param_space(), cfg)?;
    let theta = opt.theta.clone();
    let mut warnings = Vec::new();
    if !opt.converged {
        warnings.push(format!(
            "optimizer stopped after max_iter = {} without meeting the tolerances",
            cfg.max_iter
        ));
    }

    let (objective_min, discrepancy, omega) = objective.evaluate(&theta)?;
    let stdf = model.bind(&theta)?;
    let sigma = sigma_for(stdf.as_ref(), points, input.sigma_scale)?;
    let jacobian = model_jacobian(model, &theta, points, cfg.fd_step)?;
    let sv = singular_values(&jacobian)?;
    let (smax, smin) = (sv[0], *sv.last().unwrap_or(&0.0));
    if !(smin > RANK_TOL * smax) {
        warnings.push(format!(
            "L_dot is nearly rank deficient (singular values {smax:e} .. {smin:e}); parameters may not be identified"
        ));
    }
    let covariance = asymptotic_covariance(&jacobian, &omega, &sigma)?;
    let kf = input.k as f64;
    let std_errors = (0..p)
        .map(|j| (covariance.get(j, j).max(0.0) / kf).sqrt())
        .collect();

    let report = FitReport {
        model: model.label(),
        param_names: model.param_space().names(),
        theta,
        objective_min,
        covariance: covariance.to_rows(),
        std_errors,
        gof: None,
        diagnostics: Diagnostics {
            iterations: opt.iterations,
            evaluations: opt.evaluations,
            restarts: cfg.restarts,
            converged: opt.converged,
            start_values: opt.start_values,
            weight_policy: policy.label(),
            estimator: input.estimator.clone(),
            k: input.k,
            q,
            p,
            warnings,
        },
    };
    Ok(Fitted {
        report,
        jacobian,
        sigma,
        omega,
        discrepancy,
        policy,
    })
}

/// Fit from ranks: compute the initial estimates with the chosen estimator,
/// then run [`fit`].
#[allow(clippy::too_many_arguments)]
pub fn fit_ranks(
    ranks: &RankMatrix,
    tf: TailFraction,
    kind: EstimatorKind,
    provider: &dyn RateProvider,
    model: &dyn TailModel,
    points: &PointSet,
    policy: WeightPolicy,
    cfg: &OptimizerConfig,
) -> Result<Fitted> {
    if model.dim() != ranks.d() {
        return Err(Error::Config(format!(
            "model dimension {} does not match data dimension {}",
            model.dim(),
            ranks.d()
        )));
    }
    let estimates = initial_estimates(ranks, tf, kind, points.points(), provider)?;
    let mut label = kind.label().to_string();
    if matches!(kind, EstimatorKind::BiasCorrected { .. }) {
        label = format!("{label} ({})", provider.label());
    }
    let input = FitInput {
        model,
        points,
        estimates,
        k: tf.k(),
        policy,
        sigma_scale: kind.sigma_scale()?,
        estimator: label,
    };
    fit(&input, cfg)
}
