//! Chi-square goodness-of-fit tests for a fitted model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Fitted, WeightPolicy};
use crate::numerics::{chisq_sf, spd_inverse, sym_eigen, SymMatrix};

pub const DEFAULT_EIG_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GofMethod {
    Optimal,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub method: GofMethod,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
}

impl GofResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Which test to run after a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum GofSpec {
    Optimal,
    Spectral { threshold: f64 },
}

impl GofSpec {
    pub fn apply(&self, fitted: &Fitted) -> Result<GofResult> {
        match *self {
            Self::Optimal => gof_optimal(fitted),
            Self::Spectral { threshold } => gof_spectral_fit(fitted, threshold),
        }
    }
}

/// `k` times the minimized objective, referred to `chi^2_{q-p}`.
pub fn gof_optimal_statistic(objective_min: f64, k: usize, q: usize, p: usize) -> Result<GofResult> {
    if q <= p {
        return Err(Error::Config(format!(
            "the optimal-weight test needs q > p for positive degrees of freedom (q = {q}, p = {p})"
        )));
    }
    let statistic = k as f64 * objective_min.max(0.0);
    let df = q - p;
    Ok(GofResult {
        method: GofMethod::Optimal,
        statistic,
        df,
        p_value: chisq_sf(statistic, df)?,
        s: None,
        threshold: None,
        eigenvalues: None,
    })
}

/// Optimal-weight test; the fit must use the inverse-`Sigma` weight.
pub fn gof_optimal(fitted: &Fitted) -> Result<GofResult> {
    if fitted.policy != WeightPolicy::InverseSigma {
        return Err(Error::Config(format!(
            "the optimal-weight test requires the inverse_sigma weight policy, fit used {}",
            fitted.policy.label()
        )));
    }
    let d = &fitted.report.diagnostics;
    gof_optimal_statistic(fitted.report.objective_min, d.k, d.q, d.p)
}

/// `P = L (L' W L)^{-1} L' W`.
pub fn projection_matrix(jac: &DMatrix<f64>, omega: &SymMatrix) -> Result<DMatrix<f64>> {
    if jac.nrows() != omega.dim() {
        return Err(Error::Config(format!(
            "Jacobian has {} rows but the weight is {}x{}",
            jac.nrows(),
            omega.dim(),
            omega.dim()
        )));
    }
    let lw = jac.transpose() * omega.as_matrix();
    let inner = SymMatrix::from_matrix(&lw * jac)?;
    let inv = spd_inverse(&inner).map_err(|e| {
        Error::Estimation(format!("L_dot' Omega L_dot is singular ({e}); cannot form the projection"))
    })?;
    Ok(jac * inv.as_matrix() * lw)
}

/// Eigen-decomposition of `(I - P) Sigma (I - P)'` and `A = V_s D_s^{-1} V_s'`
/// for the leading `s` directions.
struct Spectral {
    values: Vec<f64>,
    a: DMatrix<f64>,
    s: usize,
}

fn spectral_parts(sigma: &SymMatrix, proj: &DMatrix<f64>, s: SpectralRank) -> Result<Spectral> {
    let q = sigma.dim();
    let qm = DMatrix::<f64>::identity(q, q) - proj;
    let cov = SymMatrix::from_matrix(&qm * sigma.as_matrix() * qm.transpose())?;
    let eig = sym_eigen(&cov)?;
    let s = match s {
        SpectralRank::Threshold { threshold, max } => {
            eig.values.iter().take(max).take_while(|&&v| v > threshold).count()
        }
        SpectralRank::Fixed(s) => s,
    };
    let mut a = DMatrix::zeros(q, q);
    for j in 0..s {
        let v = eig.vectors.column(j);
        a += (v * v.transpose()) / eig.values[j];
    }
    Ok(Spectral {
        values: eig.values,
        a,
        s,
    })
}

enum SpectralRank {
    Threshold { threshold: f64, max: usize },
    Fixed(usize),
}

/// Spectral test: `k D' A D` with `s` the number of eigenvalues above
/// `threshold`, at most `q - n_params`.
pub fn gof_spectral(
    discrepancy: &[f64],
    sigma: &SymMatrix,
    proj: &DMatrix<f64>,
    k: usize,
    n_params: usize,
    threshold: f64,
) -> Result<GofResult> {
    let q = sigma.dim();
    if discrepancy.len() != q || proj.nrows() != q || proj.ncols() != q {
        return Err(Error::Config("discrepancy, Sigma and P dimensions disagree".into()));
    }
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::Config(format!("eigenvalue threshold must be non-negative, got {threshold}")));
    }
    if q <= n_params {
        return Err(Error::Config(format!(
            "the spectral test needs q > p (q = {q}, p = {n_params})"
        )));
    }
    let parts = spectral_parts(
        sigma,
        proj,
        SpectralRank::Threshold {
            threshold,
            max: q - n_params,
        },
    )?;
    if parts.s == 0 {
        return Err(Error::Estimation(format!(
            "no eigenvalue of (I-P) Sigma (I-P)' exceeds {threshold} (largest {:e}); lower the threshold",
            parts.values[0]
        )));
    }
    let dv = DVector::from_column_slice(discrepancy);
    let statistic = (k as f64 * (dv.transpose() * &parts.a * &dv)[(0, 0)]).max(0.0);
    Ok(GofResult {
        method: GofMethod::Spectral,
        statistic,
        df: parts.s,
        p_value: chisq_sf(statistic, parts.s)?,
        s: Some(parts.s),
        threshold: Some(threshold),
        eigenvalues: Some(parts.values),
    })
}

/// Spectral test at a fitted model, using the fit's own weight.
pub fn gof_spectral_fit(fitted: &Fitted, threshold: f64) -> Result<GofResult> {
    let proj = projection_matrix(&fitted.jacobian, &fitted.omega)?;
    let d = &fitted.report.diagnostics;
    gof_spectral(&fitted.discrepancy, &fitted.sigma, &proj, d.k, d.p, threshold)
}

/// `max |(I-P)' (Sigma^{-1} - A) (I-P)|` with `Omega = Sigma^{-1}` and
/// `s = q - p`; zero in exact arithmetic.
pub fn remark1_residual(jac: &DMatrix<f64>, sigma: &SymMatrix) -> Result<f64> {
    let q = sigma.dim();
    let p = jac.ncols();
    if q < p {
        return Err(Error::Config(format!("q = {q} is smaller than p = {p}")));
    }
    let sinv = spd_inverse(sigma)?;
    let proj = projection_matrix(jac, &sinv)?;
    let parts = spectral_parts(sigma, &proj, SpectralRank::Fixed(q - p))?;
    let qm = DMatrix::<f64>::identity(q, q) - proj;
    let r = qm.transpose() * (sinv.as_matrix() - parts.a) * qm;
    Ok(r.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, grid_point_set, model_jacobian, sigma_matrix, FitInput, OptimizerConfig, PointSet};
    use crate::models::{Logistic, TailModel};
    use crate::numerics::{chisq_quantile, numerical_rank};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(q: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let m = random_matrix(q, q, rng);
        SymMatrix::from_matrix(&m * m.transpose() + DMatrix::identity(q, q) * 0.5).unwrap()
    }

    #[test]
    fn optimal_statistic_and_p_value() {
        let r = gof_optimal_statistic(19.68 / 100.0, 100, 12, 1).unwrap();
        assert_eq!(r.df, 11);
        assert!((r.statistic - 19.68).abs() < 1e-12);
        assert!((r.p_value - 0.05).abs() < 1e-3);
        assert!((r.p_value - chisq_sf(r.statistic, r.df).unwrap()).abs() <= 1e-12);
        assert!(matches!(gof_optimal_statistic(0.1, 10, 2, 2), Err(Error::Config(_))));
    }

    #[test]
    fn exact_input_is_not_rejected() {
        let m = Logistic::new(2).unwrap();
        let p = grid_point_set(2, &[0.0, 0.5, 1.0], &[2]).unwrap();
        let truth: Vec<f64> = p.points().iter().map(|c| m.eval(c, &[0.5]).unwrap()).collect();
        let mk = |policy| FitInput {
            model: &m,
            points: &p,
            estimates: truth.clone(),
            k: 200,
            policy,
            sigma_scale: 1.0,
            estimator: "exact".into(),
        };
        let f = fit(&mk(WeightPolicy::InverseSigma), &OptimizerConfig::default()).unwrap();
        let g = gof_optimal(&f).unwrap();
        assert!(g.statistic < 1e-8);
        assert!(g.p_value > 1.0 - 1e-6);

        let f = fit(&mk(WeightPolicy::Identity), &OptimizerConfig::default()).unwrap();
        assert!(matches!(gof_optimal(&f), Err(Error::Config(_))));
        let g = gof_spectral_fit(&f, 1e-6).unwrap();
        assert!(g.statistic < 1e-6);
        assert!(g.s.unwrap() <= 3);
    }

    #[test]
    fn projection_examples() {
        let l = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let p = projection_matrix(&l, &SymMatrix::identity(2)).unwrap();
        assert!((p - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = random_matrix(3, 3, &mut rng);
        let p = projection_matrix(&l, &random_spd(3, &mut rng)).unwrap();
        assert!((p - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);

        let l = DMatrix::from_column_slice(2, 1, &[0.0, 0.0]);
        assert!(projection_matrix(&l, &SymMatrix::identity(2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn projection_is_idempotent_with_complementary_ranks(seed in any::<u64>(), q in 2usize..9, p in 1usize..4) {
            prop_assume!(p < q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = random_matrix(q, p, &mut rng);
            let omega = random_spd(q, &mut rng);
            let proj = projection_matrix(&l, &omega).unwrap();
            prop_assert!((&proj * &proj - &proj).amax() <= 1e-8);
            prop_assert_eq!(numerical_rank(&proj, 1e-8).unwrap(), p);
            let comp = DMatrix::<f64>::identity(q, q) - &proj;
            prop_assert_eq!(numerical_rank(&comp, 1e-8).unwrap(), q - p);
        }

        #[test]
        fn remark1_residual_vanishes(seed in any::<u64>(), q in 2usize..8, p in 1usize..4) {
            prop_assume!(p <= q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = random_matrix(q, p, &mut rng);
            let sigma = random_spd(q, &mut rng);
            prop_assert!(remark1_residual(&l, &sigma).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn remark1_fixtures() {
        // q = p: I - P vanishes
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = random_matrix(2, 2, &mut rng);
        assert!(remark1_residual(&l, &random_spd(2, &mut rng)).unwrap() < 1e-12);

        let m = Logistic::new(2).unwrap();
        let p = grid_point_set(2, &[0.0, 0.5, 1.0], &[2]).unwrap();
        let jac = model_jacobian(&m, &[0.5], &p, 1e-6).unwrap();
        let sigma = sigma_matrix(&m, &[0.5], &p).unwrap();
        assert!(remark1_residual(&jac, &sigma).unwrap() <= 1e-7);

        let l = random_matrix(3, 2, &mut rng);
        assert!(remark1_residual(&l, &random_spd(3, &mut rng)).unwrap() <= 1e-7);
    }

    #[test]
    fn spectral_matches_optimal_when_sigma_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, p) = (5, 2);
        let l = random_matrix(q, p, &mut rng);
        let sigma = random_spd(q, &mut rng);
        let sinv = spd_inverse(&sigma).unwrap();
        let proj = projection_matrix(&l, &sinv).unwrap();
        // D in the range of I - P, as at a weighted least-squares minimum
        let z = DVector::from_fn(q, |_, _| rng.random_range(-0.2..0.2));
        let d = (DMatrix::<f64>::identity(q, q) - &proj) * z;
        let k = 150;
        let optimal = k as f64 * (d.transpose() * sinv.as_matrix() * &d)[(0, 0)];
        let spec = gof_spectral(d.as_slice(), &sigma, &proj, k, p, 0.0).unwrap();
        assert_eq!(spec.s, Some(q - p));
        assert!((spec.statistic - optimal).abs() <= 1e-6 * optimal.max(1.0));
        // at least p eigenvalues vanish
        let zeros = spec.eigenvalues.as_ref().unwrap().iter().filter(|v| v.abs() <= 1e-8).count();
        assert!(zeros >= p);
    }

    #[test]
    fn spectral_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (q, p) = (4, 1);
        let l = random_matrix(q, p, &mut rng);
        let sigma = random_spd(q, &mut rng);
        let proj = projection_matrix(&l, &SymMatrix::identity(q)).unwrap();
        // D in the column space of L is annihilated
        let d: Vec<f64> = l.column(0).iter().copied().collect();
        let r = gof_spectral(&d, &sigma, &proj, 100, p, 1e-6).unwrap();
        assert!(r.statistic < 1e-9);
        assert!(r.s.unwrap() <= q - p);
        assert!(matches!(
            gof_spectral(&d, &sigma, &proj, 100, p, 1e6),
            Err(Error::Estimation(_))
        ));
        let pts = PointSet::new(2, vec![vec![1.0, 1.0]]).unwrap();
        assert_eq!(pts.q(), 1);
        assert!(gof_spectral(&[0.0], &SymMatrix::identity(1), &DMatrix::identity(1, 1), 10, 1, 0.1).is_err());
    }

    #[test]
    fn chi_square_reference_quantile() {
        assert!((chisq_quantile(0.95, 11).unwrap() - 19.68).abs() <= 0.005);
    }
}
