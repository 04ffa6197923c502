use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};

use crate::error::{domain, Result};
use crate::models::{variogram, GridLocations, MaxLinearCoeffs};
use crate::numerics::{sym_eigen, SymMatrix};
use crate::stdf::DataMatrix;

/// Default cap on Poisson points per Brown-Resnick row.
pub const DEFAULT_MAX_POINTS: usize = 10_000;

/// Unit Frechet draw `-1 / ln U`.
fn frechet(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    -1.0 / u.ln()
}

/// Positive stable variable with Laplace transform `exp(-t^theta)`
/// (Kanter's representation); `theta = 1` gives the constant 1.
pub fn positive_stable(theta: f64, rng: &mut ChaCha8Rng) -> f64 {
    if theta >= 1.0 {
        return 1.0;
    }
    let u = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = Exp1.sample(rng);
    let a = (theta * u).sin() / u.sin().powf(1.0 / theta);
    a * (((1.0 - theta) * u).sin() / e).powf((1.0 - theta) / theta)
}

/// Max-stable vectors with the logistic stdf and unit Frechet margins:
/// `Z_j = (S / W_j)^theta`.
pub fn sample_logistic(n: usize, d: usize, theta: f64, rng: &mut ChaCha8Rng) -> Result<DataMatrix> {
    if !(theta > 0.0 && theta <= 1.0) {
        return domain(format!("logistic theta must lie in (0, 1], got {theta}"));
    }
    if n == 0 || d == 0 {
        return domain("n and d must be positive");
    }
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        let s = positive_stable(theta, rng);
        for _ in 0..d {
            let w: f64 = Exp1.sample(rng);
            values.push((s / w).powf(theta));
        }
    }
    DataMatrix::new(n, d, values)
}

/// `Y_j = max_t b_jt Z_t` with i.i.d. unit Frechet factors.
pub fn sample_maxlinear(n: usize, b: &MaxLinearCoeffs, rng: &mut ChaCha8Rng) -> Result<DataMatrix> {
    if n == 0 {
        return domain("n must be positive");
    }
    let (d, r) = (b.d(), b.r());
    let mut z = vec![0.0; r];
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        for zt in z.iter_mut() {
            *zt = frechet(rng);
        }
        for j in 0..d {
            values.push((0..r).map(|t| b.get(j, t) * z[t]).fold(0.0, f64::max));
        }
    }
    DataMatrix::new(n, d, values)
}

/// Brown-Resnick draws on a finite set of locations.
#[derive(Debug, Clone)]
pub struct BrownResnickSample {
    pub data: DataMatrix,
    /// Rows where the point cap was hit before the stopping bound.
    pub capped_rows: usize,
}

/// Spectral construction on a finite location set. Each Poisson point picks
/// a random origin `T`, draws a Gaussian field with `eps(T) = 0` and
/// covariance `gamma(s-T) + gamma(s'-T) - gamma(s-s')`, and uses
/// `W = exp(eps - gamma(. - T))` normalized to mean one over the locations.
/// Normalized functions are bounded by `d`, so the row is complete once
/// `xi * d` drops below the running minimum.
pub fn sample_brown_resnick(
    n: usize,
    locs: &GridLocations,
    alpha: f64,
    rho: f64,
    max_points: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BrownResnickSample> {
    if n == 0 {
        return domain("n must be positive");
    }
    if max_points == 0 {
        return domain("max_points must be positive");
    }
    let d = locs.len();
    let coords = locs.coords();
    let gamma = |a: usize, b: usize| {
        variogram(
            [coords[a][0] - coords[b][0], coords[a][1] - coords[b][1]],
            alpha,
            rho,
        )
    };
    let mut g = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            g[(a, b)] = gamma(a, b)?;
        }
    }
    // symmetric square roots of the covariance for each origin
    let mut roots = Vec::with_capacity(d);
    for t in 0..d {
        let cov = SymMatrix::from_lower_fn(d, |a, b| g[(a, t)] + g[(b, t)] - g[(a, b)]);
        let eig = sym_eigen(&cov)?;
        let mut scaled = eig.vectors.clone();
        for j in 0..d {
            scaled.column_mut(j).scale_mut(eig.values[j].max(0.0).sqrt());
        }
        roots.push(scaled * eig.vectors.transpose());
    }

    let mut values = Vec::with_capacity(n * d);
    let mut capped_rows = 0;
    let mut row = vec![0.0; d];
    let mut w = vec![0.0; d];
    let df = d as f64;
    for _ in 0..n {
        row.fill(0.0);
        let mut gamma_sum = 0.0;
        let mut done = false;
        for _ in 0..max_points {
            let e: f64 = Exp1.sample(rng);
            gamma_sum += e;
            let xi = 1.0 / gamma_sum;
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            if xi * df < min {
                done = true;
                break;
            }
            let t = rng.random_range(0..d);
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let eps = &roots[t] * z;
            let mut mean = 0.0;
            for s in 0..d {
                w[s] = (eps[s] - eps[t] - g[(s, t)]).exp();
                mean += w[s];
            }
            mean /= df;
            for s in 0..d {
                row[s] = row[s].max(xi * w[s] / mean);
            }
        }
        if !done {
            capped_rows += 1;
        }
        values.extend_from_slice(&row);
    }
    Ok(BrownResnickSample {
        data: DataMatrix::new(n, d, values)?,
        capped_rows,
    })
}

/// `X = Y + |eps|` with `eps ~ N(0, sd^2)`.
pub fn perturb_noise(data: &DataMatrix, sd: f64, rng: &mut ChaCha8Rng) -> Result<DataMatrix> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return domain(format!("noise sd must be non-negative, got {sd}"));
    }
    if sd == 0.0 {
        return Ok(data.clone());
    }
    let normal = Normal::new(0.0, sd).expect("valid sd");
    data.map(|_, _, v| v + normal.sample(rng).abs())
}
