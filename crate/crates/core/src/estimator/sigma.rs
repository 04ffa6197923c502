use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::models::{Stdf, TailModel};
use crate::numerics::SymMatrix;

use super::PointSet;

/// Memoized evaluations of one bound stdf, keyed by the bit pattern of the
/// argument.
struct Memo<'a> {
    stdf: &'a dyn Stdf,
    cache: HashMap<Vec<u64>, f64>,
}

impl<'a> Memo<'a> {
    fn new(stdf: &'a dyn Stdf) -> Self {
        Self {
            stdf,
            cache: HashMap::new(),
        }
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let v = self.stdf.eval(x)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    /// `r(u e_a, v e_b)`.
    fn r_axes(&mut self, a: usize, u: f64, b: usize, v: f64, buf: &mut [f64]) -> Result<f64> {
        if a == b {
            return Ok(u.min(v));
        }
        buf.fill(0.0);
        buf[a] = u;
        buf[b] = v;
        Ok(u + v - self.eval(buf)?)
    }

    /// `r(c, v e_b)` given `l(c)`.
    fn r_point_axis(&mut self, c: &[f64], lc: f64, b: usize, v: f64, buf: &mut [f64]) -> Result<f64> {
        if c[b] >= v {
            return Ok(v);
        }
        buf.copy_from_slice(c);
        buf[b] = v;
        Ok(lc + v - self.eval(buf)?)
    }
}

struct PointInfo {
    value: f64,
    /// `(coordinate, c_a, partial derivative)` over positive coordinates.
    partials: Vec<(usize, f64, f64)>,
}

/// Covariance matrix `Sigma` of the limit of `sqrt(k)(L_hat - L)` for a bound
/// stdf, multiplied by `scale`.
///
/// Built from `r(x, y) = l(x) + l(y) - l(x v y)` and the expansion of
/// `B(c) = W(c) - sum_a l_a(c) W(c_a e_a)` over the positive coordinates of `c`.
pub fn sigma_for(stdf: &dyn Stdf, points: &PointSet, scale: f64) -> Result<SymMatrix> {
    let d = points.d();
    let q = points.q();
    let mut memo = Memo::new(stdf);
    let mut info = Vec::with_capacity(q);
    for c in points.points() {
        let value = memo.eval(c)?;
        let grad = stdf.gradient(c).map_err(|e| {
            Error::Estimation(format!(
                "partial derivatives unavailable at {c:?} ({e}); consider the tikhonov weight policy"
            ))
        })?;
        let partials = (0..d)
            .filter(|&a| c[a] > 0.0)
            .map(|a| (a, c[a], grad[a]))
            .collect::<Vec<_>>();
        if partials.iter().any(|p| !p.2.is_finite()) {
            return Err(Error::Estimation(format!(
                "non-finite partial derivative at {c:?}; consider the tikhonov weight policy"
            )));
        }
        info.push(PointInfo { value, partials });
    }

    let mut buf = vec![0.0; d];
    let mut join = vec![0.0; d];
    let mut sigma = vec![0.0; q * q];
    for i in 0..q {
        let ci = points.get(i);
        let pi = &info[i];
        for j in 0..=i {
            let cj = points.get(j);
            let pj = &info[j];
            for ((m, a), b) in join.iter_mut().zip(ci).zip(cj) {
                *m = a.max(*b);
            }
            let mut s = pi.value + pj.value - memo.eval(&join)?;
            for &(b, v, g) in &pj.partials {
                s -= g * memo.r_point_axis(ci, pi.value, b, v, &mut buf)?;
            }
            for &(a, u, g) in &pi.partials {
                s -= g * memo.r_point_axis(cj, pj.value, a, u, &mut buf)?;
            }
            for &(a, u, ga) in &pi.partials {
                for &(b, v, gb) in &pj.partials {
                    s += ga * gb * memo.r_axes(a, u, b, v, &mut buf)?;
                }
            }
            sigma[i * q + j] = scale * s;
        }
    }
    Ok(SymMatrix::from_lower_fn(q, |i, j| sigma[i * q + j]))
}

/// `Sigma(theta)` for a model at the given points.
pub fn sigma_matrix(model: &dyn TailModel, theta: &[f64], points: &PointSet) -> Result<SymMatrix> {
    sigma_for(model.bind(theta)?.as_ref(), points, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{extremal_coeff_point_set, grid_point_set};
    use crate::models::{logistic_stdf, Logistic, LogisticStdf};
    use crate::numerics::sym_eigen;

    /// Independence: `l = x_1 + x_2`.
    struct Independence;

    impl Stdf for Independence {
        fn dim(&self) -> usize {
            2
        }

        fn eval(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().sum())
        }
    }

    #[test]
    fn independence_is_degenerate() {
        let p = PointSet::new(2, vec![vec![1.0, 1.0]]).unwrap();
        let s = sigma_for(&Independence, &p, 1.0).unwrap();
        assert!(s.get(0, 0).abs() < 1e-9);
    }

    /// Covariance of extremal-coefficient points in closed form:
    /// with `l_J = l(e_J)`,
    /// `Sigma_JK = l_J + l_K - l_{J u K}
    ///   - sum_{b in K} l_b(e_K) (l_J + 1 - l_{J u b})
    ///   - sum_{a in J} l_a(e_J) (l_K + 1 - l_{K u a})
    ///   + sum_{a in J, b in K} l_a(e_J) l_b(e_K) (2 - l_{ab})`,
    /// with `2 - l_{aa}` read as 1.
    fn subset_formula(theta: f64, d: usize, j: &[usize], k: &[usize]) -> f64 {
        let ell = |set: &[usize]| {
            let mut x = vec![0.0; d];
            for &i in set {
                x[i] = 1.0;
            }
            logistic_stdf(&x, theta).unwrap()
        };
        let union = |a: &[usize], b: &[usize]| {
            let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
            u.sort_unstable();
            u.dedup();
            u
        };
        // partial of the logistic stdf at e_J: |J|^{theta - 1}
        let dj = (j.len() as f64).powf(theta - 1.0);
        let dk = (k.len() as f64).powf(theta - 1.0);
        let (lj, lk) = (ell(j), ell(k));
        let mut s = lj + lk - ell(&union(j, k));
        for &b in k {
            s -= dk * (lj + 1.0 - ell(&union(j, &[b])));
        }
        for &a in j {
            s -= dj * (lk + 1.0 - ell(&union(k, &[a])));
        }
        for &a in j {
            for &b in k {
                let r = if a == b { 1.0 } else { 2.0 - ell(&[a, b]) };
                s += dj * dk * r;
            }
        }
        s
    }

    #[test]
    fn extremal_points_match_subset_formula() {
        let d = 4;
        for theta in [0.3, 0.7] {
            for a in [2, 3] {
                let p = extremal_coeff_point_set(d, a).unwrap();
                let sets = crate::estimator::points::subsets(d, a);
                let s = sigma_for(&LogisticStdf::new(d, theta).unwrap(), &p, 1.0).unwrap();
                for (i, ji) in sets.iter().enumerate() {
                    for (m, km) in sets.iter().enumerate() {
                        let f = subset_formula(theta, d, ji, km);
                        assert!((s.get(i, m) - f).abs() < 1e-12, "{ji:?} {km:?}: {} vs {f}", s.get(i, m));
                    }
                }
            }
        }
    }

    #[test]
    fn psd_on_theta_grid() {
        let model = Logistic::new(3).unwrap();
        let p = extremal_coeff_point_set(3, 2).unwrap();
        let g = grid_point_set(2, &[0.0, 0.5, 1.0], &[2]).unwrap();
        let m2 = Logistic::new(2).unwrap();
        for theta in [0.1, 0.25, 0.5, 0.75, 0.95] {
            let s = sigma_matrix(&model, &[theta], &p).unwrap();
            assert!(sym_eigen(&s).unwrap().min_value() >= -1e-10);
            let s = sigma_matrix(&m2, &[theta], &g).unwrap();
            assert!(sym_eigen(&s).unwrap().min_value() >= -1e-10);
        }
    }

    #[test]
    fn scale_multiplies() {
        let p = grid_point_set(2, &[0.0, 0.5, 1.0], &[2]).unwrap();
        let s = LogisticStdf::new(2, 0.5).unwrap();
        let a = sigma_for(&s, &p, 1.0).unwrap();
        let b = sigma_for(&s, &p, 1.5).unwrap();
        assert!((b.as_matrix() - a.as_matrix() * 1.5).amax() < 1e-15);
    }
}
