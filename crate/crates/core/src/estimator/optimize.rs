//! Nelder-Mead on box-reparametrized coordinates with Latin-hypercube
//! multistarts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ParamBound, ParamSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Nelder-Mead iterations per start.
    pub max_iter: usize,
    /// Number of Latin-hypercube starting points.
    pub restarts: usize,
    /// Simplex diameter (in unconstrained coordinates) at convergence.
    pub simplex_tol: f64,
    /// Spread of objective values over the simplex at convergence.
    pub f_tol: f64,
    /// Ridge for the tikhonov policy when the policy itself leaves it unset.
    pub tikhonov_c: Option<f64>,
    /// Relative finite-difference step for the Jacobian in `theta`.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            restarts: 5,
            simplex_tol: 1e-8,
            f_tol: 1e-12,
            tikhonov_c: None,
            fd_step: 1e-6,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.restarts == 0 {
            return Err(Error::Config("max_iter and restarts must be positive".into()));
        }
        for (name, v) in [
            ("simplex_tol", self.simplex_tol),
            ("f_tol", self.f_tol),
            ("fd_step", self.fd_step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(c) = self.tikhonov_c {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("tikhonov_c must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Map unconstrained `z` to `theta` in the box.
pub fn to_theta(space: &ParamSpace, z: &[f64]) -> Vec<f64> {
    space
        .params
        .iter()
        .zip(z)
        .map(|(p, &z)| match p.bound {
            ParamBound::Interval { lo, hi } => lo + (hi - lo) * sigmoid(z),
            ParamBound::Positive => z.exp(),
        })
        .collect()
}

/// Inverse of [`to_theta`] for interior `theta`.
pub fn to_z(space: &ParamSpace, theta: &[f64]) -> Vec<f64> {
    space
        .params
        .iter()
        .zip(theta)
        .map(|(p, &t)| match p.bound {
            ParamBound::Interval { lo, hi } => {
                let u = ((t - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                (u / (1.0 - u)).ln()
            }
            ParamBound::Positive => t.max(1e-300).ln(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value reached from each start.
    pub start_values: Vec<f64>,
}

struct RunResult {
    z: Vec<f64>,
    f: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

/// Nelder-Mead with dimension-adaptive coefficients.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, z0: &[f64], step: f64, cfg: &OptimizerConfig) -> RunResult {
    let n = z0.len();
    let nf = n.max(2) as f64;
    let (alpha, gamma, beta, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evaluations = 0;
    let mut eval = |z: &[f64]| {
        evaluations += 1;
        f(z)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(z0);
    simplex.push((z0.to_vec(), f0));
    for i in 0..n {
        let mut z = z0.to_vec();
        z[i] += step;
        let fz = eval(&z);
        simplex.push((z, fz));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(z, _)| {
                z.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        // The objective can jump (max-linear Sigma is piecewise constant in
        // theta), so a fully collapsed simplex counts on location alone.
        let collapsed = diameter < cfg.simplex_tol * 1e-3;
        if best.is_finite() && diameter < cfg.simplex_tol && (worst - best < cfg.f_tol || collapsed) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for (z, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(z) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let zr = along(alpha);
        let fr = eval(&zr);
        if fr < simplex[0].1 {
            let ze = along(alpha * gamma);
            let fe = eval(&ze);
            simplex[n] = if fe < fr { (ze, fe) } else { (zr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (zr, fr);
            continue;
        }
        let (zc, fc) = if fr < simplex[n].1 {
            let zc = along(alpha * beta);
            let fc = eval(&zc);
            (zc, fc)
        } else {
            let zc = along(-beta);
            let fc = eval(&zc);
            (zc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (zc, fc);
            continue;
        }
        let z_best = simplex[0].0.clone();
        for (z, fz) in simplex.iter_mut().skip(1) {
            for (v, b) in z.iter_mut().zip(&z_best) {
                *v = b + delta * (*v - b);
            }
            *fz = eval(z);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (z, f) = simplex.swap_remove(0);
    RunResult {
        z,
        f,
        iterations,
        evaluations,
        converged,
    }
}

/// Latin-hypercube points over the init ranges.
fn latin_hypercube(space: &ParamSpace, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let p = space.dim();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for spec in &space.params {
        let (lo, hi) = spec.init;
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        cols.push(
            strata
                .into_iter()
                .map(|s| lo + (hi - lo) * (s as f64 + rng.random::<f64>()) / count as f64)
                .collect(),
        );
    }
    (0..count).map(|i| (0..p).map(|j| cols[j][i]).collect()).collect()
}

/// Pull an infeasible start towards the lower end of the init box.
fn feasible_start<F: Fn(&[f64]) -> f64>(f: &F, space: &ParamSpace, theta: &[f64]) -> Option<Vec<f64>> {
    let lows: Vec<f64> = space.params.iter().map(|p| p.init.0).collect();
    let mut t = theta.to_vec();
    for _ in 0..30 {
        let z = to_z(space, &t);
        if f(&z).is_finite() {
            return Some(z);
        }
        for (v, lo) in t.iter_mut().zip(&lows) {
            *v = lo + 0.7 * (*v - lo);
        }
    }
    None
}

/// Minimize `objective(theta)` over the parameter box.
pub fn minimize<F>(objective: F, space: &ParamSpace, cfg: &OptimizerConfig) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let f = |z: &[f64]| objective(&to_theta(space, z));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = latin_hypercube(space, cfg.restarts, &mut rng);
    let runs: Vec<Option<RunResult>> = starts
        .par_iter()
        .map(|theta| feasible_start(&f, space, theta).map(|z0| nelder_mead(&f, &z0, 0.5, cfg)))
        .collect();
    let start_values: Vec<f64> = runs
        .iter()
        .map(|r| r.as_ref().map_or(f64::INFINITY, |r| r.f))
        .collect();
    let mut evaluations: usize = runs.iter().flatten().map(|r| r.evaluations).sum();
    let mut iterations: usize = runs.iter().flatten().map(|r| r.iterations).sum();
    let best = runs
        .into_iter()
        .flatten()
        .filter(|r| r.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or(Error::NoConvergence {
            restarts: cfg.restarts,
            best: f64::INFINITY,
        })?;
    // one more run from a fresh simplex around the best point
    let polish = nelder_mead(&f, &best.z, 0.05, cfg);
    evaluations += polish.evaluations;
    iterations += polish.iterations;
    let final_run = if polish.f <= best.f { polish } else { best };
    Ok(OptimResult {
        theta: to_theta(space, &final_run.z),
        value: final_run.f,
        iterations,
        evaluations,
        converged: final_run.converged,
        start_values,
    })
}
