use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_ranks, OptimizerConfig, PointSet, WeightPolicy};
use crate::gof::GofSpec;
use crate::models::TailModel;
use crate::stdf::{compute_ranks, EstimatorKind, RateProvider, TailFraction};

use super::SampleSpec;

/// A simulation experiment: draw `reps` samples, fit at every `k`.
pub struct StudySpec<'a> {
    pub sample: SampleSpec,
    pub model: &'a dyn TailModel,
    pub points: &'a PointSet,
    pub truth: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub estimator: EstimatorKind,
    pub provider: &'a dyn RateProvider,
    pub policy: WeightPolicy,
    pub optimizer: OptimizerConfig,
    pub gof: Option<GofSpec>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub k: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub gof_statistic: Option<f64>,
    pub gof_p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k: usize,
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: usize,
    pub k: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub param_names: Vec<String>,
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

fn run_replicate(spec: &StudySpec, rep: usize) -> (Vec<ReplicateRow>, Vec<Failure>, Vec<String>) {
    let fail_all = |message: String| {
        spec.k_grid
            .iter()
            .map(|&k| Failure {
                replicate: rep,
                k,
                message: message.clone(),
            })
            .collect()
    };
    let sample = match spec.sample.draw(rep as u64) {
        Ok(s) => s,
        Err(e) => return (Vec::new(), fail_all(e.to_string()), Vec::new()),
    };
    let ranks = match compute_ranks(&sample.data) {
        Ok(r) => r,
        Err(e) => return (Vec::new(), fail_all(e.to_string()), sample.warnings),
    };
    let cfg = OptimizerConfig {
        seed: spec.optimizer.seed.wrapping_add(rep as u64),
        ..spec.optimizer.clone()
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &k in &spec.k_grid {
        let outcome = TailFraction::new(k, ranks.n()).and_then(|tf| {
            let fitted = fit_ranks(&ranks, tf, spec.estimator, spec.provider, spec.model, spec.points, spec.policy, &cfg)?;
            let gof = spec.gof.map(|g| g.apply(&fitted)).transpose()?;
            Ok((fitted, gof))
        });
        match outcome {
            Ok((fitted, gof)) => rows.push(ReplicateRow {
                replicate: rep,
                k,
                theta: fitted.report.theta.clone(),
                objective: fitted.report.objective_min,
                gof_statistic: gof.as_ref().map(|g| g.statistic),
                gof_p_value: gof.as_ref().map(|g| g.p_value),
            }),
            Err(e) => failures.push(Failure {
                replicate: rep,
                k,
                message: e.to_string(),
            }),
        }
    }
    (rows, failures, sample.warnings)
}

/// Bias, standard deviation and RMSE per `(k, parameter)` over replicates.
/// The standard deviation uses the `1/n` normalization so that
/// `rmse^2 = bias^2 + sd^2`.
/// Failed fits are recorded and excluded.
pub fn mc_study(spec: &StudySpec) -> Result<StudyReport> {
    if spec.reps < 2 {
        return Err(Error::Config(format!("a study needs at least 2 replicates, got {}", spec.reps)));
    }
    if spec.k_grid.is_empty() {
        return Err(Error::Config("k grid is empty".into()));
    }
    let p = spec.model.n_params();
    if spec.truth.len() != p {
        return Err(Error::Config(format!("{} true values for {p} parameters", spec.truth.len())));
    }
    spec.sample.validate()?;
    spec.optimizer.validate()?;

    let results: Vec<_> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| run_replicate(spec, rep))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (r, f, w) in results {
        rows.extend(r);
        failures.extend(f);
        warnings.extend(w);
    }

    let names = spec.model.param_space().names();
    let mut summary = Vec::new();
    for &k in &spec.k_grid {
        let at_k: Vec<&ReplicateRow> = rows.iter().filter(|r| r.k == k).collect();
        let n_ok = at_k.len();
        for (j, name) in names.iter().enumerate() {
            let truth = spec.truth[j];
            let est: Vec<f64> = at_k.iter().map(|r| r.theta[j]).collect();
            let (mean, sd, rmse) = if n_ok == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let nf = n_ok as f64;
                let mean = est.iter().sum::<f64>() / nf;
                let sd = (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
                let rmse = ((mean - truth).powi(2) + sd * sd).sqrt();
                (mean, sd, rmse)
            };
            summary.push(SummaryRow {
                k,
                parameter: name.clone(),
                truth,
                mean,
                bias: mean - truth,
                sd,
                rmse,
                n_ok,
            });
        }
    }
    Ok(StudyReport {
        param_names: names,
        rows,
        summary,
        failures,
        warnings,
    })
}
