//! Rank-based nonparametric estimators of the stable tail dependence function.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Default exponent of the power kernel `K(t) = (tau + 1) t^tau`.
pub const DEFAULT_TAU: f64 = 5.0;

/// Raw data, `n` observations (rows) of `d` components, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 2 {
            return domain(format!("data must have n >= 2 and d >= 2, got {n}x{d}"));
        }
        if values.len() != n * d {
            return domain(format!("expected {} values, got {}", n * d, values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!(
                "non-finite entry at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            ));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return domain(format!("row {} has {} entries, expected {d}", i + 1, rows[i].len()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.d) {
            return domain(format!("column {c} out of range for d = {}", self.d));
        }
        let values = (0..self.n)
            .flat_map(|i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self::new(self.n, cols.len(), values)
    }

    /// Apply `f(i, j, value)` to every entry.
    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        let d = self.d;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(idx / d, idx % d, v))
            .collect();
        Self::new(self.n, self.d, values)
    }
}

/// Column-wise ranks `1..=n`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    n: usize,
    d: usize,
    ranks: Vec<u32>,
}

impl RankMatrix {
    /// Build from explicit ranks; every column must be a permutation of `1..=n`.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n < 2 || d < 2 || rows.iter().any(|r| r.len() != d) {
            return domain("rank matrix must be rectangular with n >= 2 and d >= 2");
        }
        for j in 0..d {
            let mut seen = vec![false; n];
            for r in rows {
                let v = r[j] as usize;
                if v == 0 || v > n || seen[v - 1] {
                    return domain(format!("column {} is not a permutation of 1..{n}", j + 1));
                }
                seen[v - 1] = true;
            }
        }
        Ok(Self {
            n,
            d,
            ranks: rows.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.d..(i + 1) * self.d]
    }
}

/// Number of upper order statistics `k`, optionally with the secondary `k1`
/// used by the bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailFraction {
    k: usize,
    k1: Option<usize>,
}

impl TailFraction {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k < 1 || k > n {
            return domain(format!("k must satisfy 1 <= k <= n = {n}, got {k}"));
        }
        Ok(Self { k, k1: None })
    }

    pub fn with_k1(k: usize, k1: usize, n: usize) -> Result<Self> {
        let tf = Self::new(k, n)?;
        if k1 <= k || k1 > n {
            return domain(format!("k1 must satisfy k < k1 <= n, got k = {k}, k1 = {k1}, n = {n}"));
        }
        Ok(Self { k1: Some(k1), ..tf })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k1(&self) -> Option<usize> {
        self.k1
    }
}

/// Which nonparametric estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorKind {
    Raw,
    Shifted,
    Kernel { tau: f64 },
    BiasCorrected { k1: usize, tau: f64 },
}

impl EstimatorKind {
    /// Scale applied to the asymptotic covariance of the initial estimator.
    pub fn sigma_scale(&self) -> Result<f64> {
        match *self {
            Self::Raw | Self::Shifted => Ok(1.0),
            Self::Kernel { tau } | Self::BiasCorrected { tau, .. } => {
                Ok(variance_factor(tau)?.powi(2))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Shifted => "shifted",
            Self::Kernel { .. } => "kernel",
            Self::BiasCorrected { .. } => "bias-corrected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdfEstimate {
    pub point: Vec<f64>,
    pub value: f64,
    pub kind: EstimatorKind,
}

/// Column-wise ranks, ties broken by row order (earlier row gets the lower rank).
pub fn compute_ranks(data: &DataMatrix) -> Result<RankMatrix> {
    let (n, d) = (data.n(), data.d());
    if data.values().iter().any(|v| !v.is_finite()) {
        return domain("data contains non-finite entries");
    }
    let mut ranks = vec![0u32; n * d];
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for j in 0..d {
        idx.clear();
        idx.extend(0..n);
        idx.sort_by(|&a, &b| data.get(a, j).total_cmp(&data.get(b, j)));
        for (r, &i) in idx.iter().enumerate() {
            ranks[i * d + j] = (r + 1) as u32;
        }
    }
    Ok(RankMatrix { n, d, ranks })
}

fn check_point(ranks: &RankMatrix, x: &[f64]) -> Result<()> {
    if x.len() != ranks.d() {
        return domain(format!("point has {} coordinates, data has d = {}", x.len(), ranks.d()));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return domain(format!("point coordinates must be finite and non-negative, got {v}"));
    }
    Ok(())
}

fn check_k(ranks: &RankMatrix, k: usize) -> Result<()> {
    if k < 1 || k > ranks.n() {
        return domain(format!("k must satisfy 1 <= k <= n = {}, got {k}", ranks.n()));
    }
    Ok(())
}

/// `(1/k) #{i : exists j, R_ij > n + offset - k x_j}`, real-valued `k`.
fn count_exceedances(ranks: &RankMatrix, k: f64, x: &[f64], offset: f64) -> f64 {
    let base = ranks.n() as f64 + offset;
    let thresholds: Vec<(usize, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(j, &v)| (j, base - k * v))
        .collect();
    if thresholds.is_empty() {
        return 0.0;
    }
    let count = (0..ranks.n())
        .filter(|&i| {
            let row = ranks.row(i);
            thresholds.iter().any(|&(j, t)| f64::from(row[j]) > t)
        })
        .count();
    count as f64 / k
}

/// Empirical stdf. `shifted = true` uses the `n + 1/2` threshold, otherwise `n + 1`.
pub fn empirical_stdf(ranks: &RankMatrix, k: usize, x: &[f64], shifted: bool) -> Result<StdfEstimate> {
    check_point(ranks, x)?;
    check_k(ranks, k)?;
    let offset = if shifted { 0.5 } else { 1.0 };
    Ok(StdfEstimate {
        point: x.to_vec(),
        value: count_exceedances(ranks, k as f64, x, offset),
        kind: if shifted {
            EstimatorKind::Shifted
        } else {
            EstimatorKind::Raw
        },
    })
}

/// `a^{-1} l'_{n,k}(a x)`: the raw estimator rescaled by `a > 0`.
pub fn rescaled_stdf(ranks: &RankMatrix, k: usize, a: f64, x: &[f64]) -> Result<f64> {
    if !(a > 0.0) {
        return domain(format!("rescaling factor must be positive, got {a}"));
    }
    check_point(ranks, x)?;
    check_k(ranks, k)?;
    let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
    Ok(count_exceedances(ranks, k as f64, &ax, 1.0) / a)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > -0.5) || !tau.is_finite() {
        return domain(format!("kernel exponent must exceed -1/2, got {tau}"));
    }
    Ok(())
}

/// Power kernel `K(t) = (tau + 1) t^tau`.
pub fn power_kernel(t: f64, tau: f64) -> f64 {
    (tau + 1.0) * t.powf(tau)
}

/// Kernel nodes `a_j = j/(k+1)` and weights `K(a_j)`, `j = 1..=k`.
fn kernel_nodes(k: usize, tau: f64) -> impl Iterator<Item = (f64, f64)> {
    (1..=k).map(move |j| {
        let a = j as f64 / (k as f64 + 1.0);
        (a, power_kernel(a, tau))
    })
}

/// `(1/k) sum_j K(a_j)`, which tends to 1 as `k` grows.
pub fn kernel_weight_sum(k: usize, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(kernel_nodes(k, tau).map(|(_, w)| w).sum::<f64>() / k as f64)
}

/// Kernel-aggregated estimator `(1/k) sum_j K(a_j) a_j^{-1} l'_{n,k}(a_j x)`.
pub fn kernel_stdf(ranks: &RankMatrix, k: usize, x: &[f64], tau: f64) -> Result<StdfEstimate> {
    check_tau(tau)?;
    check_point(ranks, x)?;
    check_k(ranks, k)?;
    let mut acc = 0.0;
    for (a, w) in kernel_nodes(k, tau) {
        acc += w * rescaled_stdf(ranks, k, a, x)?;
    }
    Ok(StdfEstimate {
        point: x.to_vec(),
        value: acc / k as f64,
        kind: EstimatorKind::Kernel { tau },
    })
}

/// Supplies the second-order estimates `(alpha, beta)` at a point for the bias
/// correction.
pub trait RateProvider: Sync {
    fn rates(&self, ranks: &RankMatrix, k1: usize, x: &[f64]) -> Result<(f64, f64)>;

    fn label(&self) -> &str;
}

/// Constant `(alpha, beta)` regardless of the data.
#[derive(Debug, Clone, Copy)]
pub struct FixedRates {
    pub alpha: f64,
    pub beta: f64,
}

impl RateProvider for FixedRates {
    fn rates(&self, _: &RankMatrix, _: usize, _: &[f64]) -> Result<(f64, f64)> {
        Ok((self.alpha, self.beta))
    }

    fn label(&self) -> &str {
        "fixed"
    }
}

/// Default provider: profile least squares on the raw estimator path.
///
/// For `j` in `[ceil(k1/10), k1]` it fits
/// `l'_{n,j}(x) - l'_{n,k1}(x) = alpha ((j/k1)^rho - 1)` over `rho > 0`,
/// then returns `(alpha, -rho)`. This is a stand-in, not a published
/// second-order estimator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProfileLeastSquares;

const RHO_GRID_MIN: f64 = 0.05;
const RHO_GRID_MAX: f64 = 3.0;
const RHO_GRID_STEPS: usize = 60;

impl ProfileLeastSquares {
    /// `l'_{n,j}(x)` for `j = 1..=k1` from one sort of per-row thresholds.
    fn raw_path(ranks: &RankMatrix, k1: usize, x: &[f64]) -> Vec<f64> {
        let n1 = ranks.n() as f64 + 1.0;
        let mut u: Vec<f64> = (0..ranks.n())
            .map(|i| {
                let row = ranks.row(i);
                x.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(j, &v)| (n1 - f64::from(row[j])) / v)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        u.sort_by(f64::total_cmp);
        let mut path = Vec::with_capacity(k1);
        let mut pos = 0;
        for j in 1..=k1 {
            let jf = j as f64;
            while pos < u.len() && u[pos] < jf {
                pos += 1;
            }
            path.push(pos as f64 / jf);
        }
        path
    }

    /// Residual sum of squares and slope for a fixed `rho`.
    fn fit_rho(js: &[f64], delta: &[f64], k1: f64, rho: f64) -> (f64, f64) {
        let z: Vec<f64> = js.iter().map(|&j| (j / k1).powf(rho) - 1.0).collect();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        if zz <= 0.0 {
            return (f64::INFINITY, 0.0);
        }
        let zd: f64 = z.iter().zip(delta).map(|(a, b)| a * b).sum();
        let alpha = zd / zz;
        let rss = z
            .iter()
            .zip(delta)
            .map(|(a, b)| (b - alpha * a).powi(2))
            .sum();
        (rss, alpha)
    }

    /// Profile least-squares fit of `(alpha, -rho)` to a path `l_j`, `j = 1..=k1`.
    fn regress(path: &[f64], k1: usize) -> Result<(f64, f64)> {
        let lo = k1.div_ceil(10).max(1);
        let end = path[k1 - 1];
        let js: Vec<f64> = (lo..=k1).map(|j| j as f64).collect();
        let delta: Vec<f64> = (lo..=k1).map(|j| path[j - 1] - end).collect();
        let k1f = k1 as f64;
        let step = (RHO_GRID_MAX - RHO_GRID_MIN) / RHO_GRID_STEPS as f64;
        let mut best = (f64::INFINITY, RHO_GRID_MIN);
        for s in 0..=RHO_GRID_STEPS {
            let rho = RHO_GRID_MIN + step * s as f64;
            let (rss, _) = Self::fit_rho(&js, &delta, k1f, rho);
            if rss < best.0 {
                best = (rss, rho);
            }
        }
        // golden-section refinement around the best grid node
        let (mut a, mut b) = (
            (best.1 - step).max(RHO_GRID_MIN * 0.5),
            (best.1 + step).min(RHO_GRID_MAX),
        );
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let c = b - g * (b - a);
            let e = a + g * (b - a);
            if Self::fit_rho(&js, &delta, k1f, c).0 <= Self::fit_rho(&js, &delta, k1f, e).0 {
                b = e;
            } else {
                a = c;
            }
        }
        let rho = 0.5 * (a + b);
        let (rss, alpha) = Self::fit_rho(&js, &delta, k1f, rho);
        if !rss.is_finite() || !alpha.is_finite() {
            return Err(Error::Estimation("degenerate rate regression".into()));
        }
        Ok((alpha, -rho))
    }
}

impl RateProvider for ProfileLeastSquares {
    fn rates(&self, ranks: &RankMatrix, k1: usize, x: &[f64]) -> Result<(f64, f64)> {
        check_point(ranks, x)?;
        check_k(ranks, k1)?;
        let lo = k1.div_ceil(10).max(1);
        if k1 - lo < 3 {
            return Err(Error::Estimation(format!(
                "k1 = {k1} leaves too few points for the rate regression"
            )));
        }
        Self::regress(&Self::raw_path(ranks, k1, x), k1)
    }

    fn label(&self) -> &str {
        "default provider, not the cited estimator"
    }
}

/// Bias-corrected kernel estimator.
pub fn bias_corrected_stdf(
    ranks: &RankMatrix,
    tf: TailFraction,
    x: &[f64],
    tau: f64,
    provider: &dyn RateProvider,
) -> Result<StdfEstimate> {
    let k = tf.k();
    let k1 = tf
        .k1()
        .ok_or_else(|| Error::Config("bias correction needs k1".into()))?;
    check_k(ranks, k1)?;
    let kernel = kernel_stdf(ranks, k, x, tau)?.value;
    let (alpha, beta) = provider.rates(ranks, k1, x)?;
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Estimation(format!(
            "rate provider returned non-finite values ({alpha}, {beta})"
        )));
    }
    let kf = k as f64;
    let weight_sum = kernel_weight_sum(k, tau)?;
    let moment = kernel_nodes(k, tau)
        .map(|(a, w)| w * a.powf(-beta))
        .sum::<f64>()
        / kf;
    let correction = (k1 as f64 / kf).powf(beta) * alpha * moment;
    Ok(StdfEstimate {
        point: x.to_vec(),
        value: (kernel - correction) / weight_sum,
        kind: EstimatorKind::BiasCorrected { k1, tau },
    })
}

/// Limiting variance inflation of the kernel estimators, `(2 tau + 2)/(2 tau + 1)`.
pub fn variance_factor(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok((2.0 * tau + 2.0) / (2.0 * tau + 1.0))
}

/// Unit-Pareto scale `n / (n + 1/2 - R_ij)`.
pub fn pareto_transform(ranks: &RankMatrix) -> DataMatrix {
    let n = ranks.n() as f64;
    let values = ranks
        .ranks
        .iter()
        .map(|&r| n / (n + 0.5 - f64::from(r)))
        .collect();
    DataMatrix {
        n: ranks.n(),
        d: ranks.d(),
        values,
    }
}

/// Initial estimates at every point, as used by the fitter. The kernel
/// estimator is divided by `(1/k) sum_j K(a_j)` so that it targets `l` itself.
pub fn initial_estimates(
    ranks: &RankMatrix,
    tf: TailFraction,
    kind: EstimatorKind,
    points: &[Vec<f64>],
    provider: &dyn RateProvider,
) -> Result<Vec<f64>> {
    let k = tf.k();
    points
        .iter()
        .map(|x| match kind {
            EstimatorKind::Raw => Ok(empirical_stdf(ranks, k, x, false)?.value),
            EstimatorKind::Shifted => Ok(empirical_stdf(ranks, k, x, true)?.value),
            EstimatorKind::Kernel { tau } => {
                Ok(kernel_stdf(ranks, k, x, tau)?.value / kernel_weight_sum(k, tau)?)
            }
            EstimatorKind::BiasCorrected { k1, tau } => {
                let tf = TailFraction::with_k1(k, k1, ranks.n())?;
                Ok(bias_corrected_stdf(ranks, tf, x, tau, provider)?.value)
            }
        })
        .collect()
}
