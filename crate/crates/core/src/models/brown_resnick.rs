use crate::error::{domain, Error, Result};
use crate::numerics::{bivariate_normal_cdf, std_normal_cdf, trivariate_normal_cdf};

use super::{check_x, ParamBound, ParamSpace, ParamSpec, Stdf, TailModel};

/// Largest number of positive coordinates the stdf can be evaluated at.
pub const MAX_POSITIVE: usize = 4;

/// Planar locations, all distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLocations {
    coords: Vec<[f64; 2]>,
}

impl GridLocations {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.is_empty() {
            return domain("at least one location is required");
        }
        for (i, a) in coords.iter().enumerate() {
            if !a[0].is_finite() || !a[1].is_finite() {
                return domain(format!("location {} is not finite", i + 1));
            }
            if coords[..i].iter().any(|b| b == a) {
                return domain(format!("location {} is duplicated", i + 1));
            }
        }
        Ok(Self { coords })
    }

    /// Unit-distance grid with `rows * cols` points, numbered row by row.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return domain(format!("grid must be non-empty, got {rows}x{cols}"));
        }
        Self::new(
            (0..rows)
                .flat_map(|r| (0..cols).map(move |c| [c as f64, r as f64]))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

fn check_variogram_params(alpha: f64, rho: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return domain(format!("variogram shape must lie in (0, 2], got {alpha}"));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return domain(format!("variogram scale must be positive, got {rho}"));
    }
    Ok(())
}

/// `(|s| / rho)^alpha`.
pub fn variogram(s: [f64; 2], alpha: f64, rho: f64) -> Result<f64> {
    check_variogram_params(alpha, rho)?;
    Ok((s[0].hypot(s[1]) / rho).powf(alpha))
}

/// Bivariate Husler-Reiss stdf with variogram value `gamma`.
pub fn br_pair_stdf(x1: f64, x2: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return domain(format!("pair variogram value must be positive, got {gamma}"));
    }
    if !(x1 >= 0.0 && x2 >= 0.0) {
        return domain("stdf argument must be non-negative");
    }
    if x1 == 0.0 || x2 == 0.0 {
        return Ok(x1 + x2);
    }
    let a = (2.0 * gamma).sqrt();
    let lr = (x1 / x2).ln();
    Ok(x1 * std_normal_cdf(a / 2.0 + lr / a) + x2 * std_normal_cdf(a / 2.0 - lr / a))
}

/// `Phi_{m-1}(eta; R)` for `m - 1 <= 3`.
fn mvn_cdf(eta: &[f64], corr: &[[f64; 3]; 3]) -> Result<f64> {
    match eta.len() {
        0 => Ok(1.0),
        1 => Ok(std_normal_cdf(eta[0])),
        2 => bivariate_normal_cdf(eta[0], eta[1], corr[0][1]),
        3 => trivariate_normal_cdf([eta[0], eta[1], eta[2]], corr[0][1], corr[0][2], corr[1][2]),
        m => Err(Error::Unsupported(format!(
            "normal CDF in dimension {m} is not available"
        ))),
    }
}

/// Stdf of the process at fixed locations, from a matrix of pairwise
/// variogram values.
#[derive(Debug, Clone)]
pub struct BrownResnickStdf {
    gamma: Vec<f64>,
    d: usize,
}

impl BrownResnickStdf {
    pub fn new(locs: &GridLocations, alpha: f64, rho: f64) -> Result<Self> {
        check_variogram_params(alpha, rho)?;
        let d = locs.len();
        let mut gamma = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    gamma[i * d + j] = (locs.distance(i, j) / rho).powf(alpha);
                }
            }
        }
        if let Some(g) = gamma
            .iter()
            .enumerate()
            .find(|(idx, g)| idx / d != idx % d && !(**g > 0.0 && g.is_finite()))
        {
            return Err(Error::Estimation(format!(
                "variogram value {} is degenerate at these parameters",
                g.1
            )));
        }
        Ok(Self { gamma, d })
    }

    fn g(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.d + j]
    }

    /// `Phi_{m-1}(eta^{(j)}; R^{(j)})` for `j` in the positive support `s`.
    fn partial(&self, x: &[f64], s: &[usize], j: usize) -> Result<f64> {
        let others: Vec<usize> = s.iter().copied().filter(|&i| i != j).collect();
        let mut eta = [0.0; 3];
        let mut corr = [[1.0; 3]; 3];
        for (a, &i) in others.iter().enumerate() {
            let gji = self.g(j, i);
            let aij = (2.0 * gji).sqrt();
            eta[a] = aij / 2.0 + (x[j] / x[i]).ln() / aij;
            for (b, &k) in others.iter().enumerate().skip(a + 1) {
                let gjk = self.g(j, k);
                let r = (gji + gjk - self.g(i, k)) / (2.0 * (gji * gjk).sqrt());
                corr[a][b] = r;
                corr[b][a] = r;
            }
        }
        mvn_cdf(&eta[..others.len()], &corr)
    }

    fn support(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_x(x, self.d)?;
        let s: Vec<usize> = (0..self.d).filter(|&j| x[j] > 0.0).collect();
        if s.len() > MAX_POSITIVE {
            return Err(Error::Unsupported(format!(
                "Brown-Resnick stdf with {} positive coordinates (at most {MAX_POSITIVE})",
                s.len()
            )));
        }
        Ok(s)
    }
}

impl Stdf for BrownResnickStdf {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let s = self.support(x)?;
        match s.len() {
            0 => Ok(0.0),
            1 => Ok(x[s[0]]),
            2 => br_pair_stdf(x[s[0]], x[s[1]], self.g(s[0], s[1])),
            _ => {
                let mut acc = 0.0;
                for &j in &s {
                    acc += x[j] * self.partial(x, &s, j)?;
                }
                Ok(acc)
            }
        }
    }

    /// By Euler's relation the partial in `x_j` is the `j`-th normal CDF term.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.support(x)?;
        let mut g = vec![0.0; self.d];
        if s.len() == 1 {
            g[s[0]] = 1.0;
            return Ok(g);
        }
        for &j in &s {
            g[j] = self.partial(x, &s, j)?;
        }
        Ok(g)
    }
}

/// Extremal coefficient `l(e_J)` for `|J|` in `{2, 3}`.
pub fn br_extremal_coeff(j: &[usize], locs: &GridLocations, alpha: f64, rho: f64) -> Result<f64> {
    if !(2..=3).contains(&j.len()) {
        return Err(Error::Unsupported(format!(
            "extremal coefficients are available for |J| in {{2, 3}}, got {}",
            j.len()
        )));
    }
    if let Some(&i) = j.iter().find(|&&i| i >= locs.len()) {
        return domain(format!("index {i} out of range for {} locations", locs.len()));
    }
    let s = BrownResnickStdf::new(locs, alpha, rho)?;
    let mut x = vec![0.0; locs.len()];
    for &i in j {
        x[i] = 1.0;
    }
    s.eval(&x)
}

/// Brown-Resnick family with isotropic power variogram, parameters
/// `(alpha, rho)` in `(0, 2] x (0, inf)`.
#[derive(Debug, Clone)]
pub struct BrownResnick {
    locs: GridLocations,
    space: ParamSpace,
}

impl BrownResnick {
    pub fn new(locs: GridLocations) -> Result<Self> {
        if locs.len() < 2 {
            return domain("Brown-Resnick model needs at least 2 locations");
        }
        Ok(Self {
            locs,
            space: ParamSpace {
                params: vec![
                    ParamSpec {
                        name: "alpha".into(),
                        bound: ParamBound::Interval { lo: 0.0, hi: 2.0 },
                        init: (0.3, 1.8),
                    },
                    ParamSpec {
                        name: "rho".into(),
                        bound: ParamBound::Positive,
                        init: (0.3, 3.0),
                    },
                ],
            },
        })
    }

    pub fn locations(&self) -> &GridLocations {
        &self.locs
    }
}

impl TailModel for BrownResnick {
    fn dim(&self) -> usize {
        self.locs.len()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn label(&self) -> String {
        format!("brown-resnick(d={})", self.locs.len())
    }

    fn bind(&self, theta: &[f64]) -> Result<Box<dyn Stdf>> {
        self.space.check(theta)?;
        Ok(Box::new(BrownResnickStdf::new(&self.locs, theta[0], theta[1])?))
    }
}
