use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::GridLocations;

/// Evaluation points `c_1..c_q`, each with at least two positive coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    d: usize,
    points: Vec<Vec<f64>>,
}

impl PointSet {
    pub fn new(d: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("point set is empty".into()));
        }
        for (m, c) in points.iter().enumerate() {
            if c.len() != d {
                return domain(format!("point {} has {} coordinates, expected {d}", m + 1, c.len()));
            }
            if c.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return domain(format!("point {} has a negative or non-finite coordinate", m + 1));
            }
            if c.iter().filter(|&&v| v > 0.0).count() < 2 {
                return Err(Error::Config(format!(
                    "point {} needs at least two positive coordinates",
                    m + 1
                )));
            }
        }
        Ok(Self { d, points })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn get(&self, m: usize) -> &[f64] {
        &self.points[m]
    }
}

/// All points of `levels^d` whose number of positive coordinates is in
/// `nonzero_counts`, in lexicographic order of level indices.
pub fn grid_point_set(d: usize, levels: &[f64], nonzero_counts: &[usize]) -> Result<PointSet> {
    if d < 2 {
        return domain(format!("dimension must be at least 2, got {d}"));
    }
    if levels.is_empty() || levels.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return domain("grid levels must be non-negative and finite");
    }
    if let Some(c) = nonzero_counts.iter().find(|&&c| c < 2 || c > d) {
        return Err(Error::Config(format!(
            "nonzero counts must lie in 2..={d}, got {c}"
        )));
    }
    let nl = levels.len();
    let total = nl
        .checked_pow(d as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| Error::Config(format!("grid {nl}^{d} is too large")))?;
    let mut points = Vec::new();
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let c: Vec<f64> = idx.iter().map(|&i| levels[i]).collect();
        let nz = c.iter().filter(|&&v| v > 0.0).count();
        if nonzero_counts.contains(&nz) {
            points.push(c);
        }
        for pos in (0..d).rev() {
            idx[pos] += 1;
            if idx[pos] < nl {
                break;
            }
            idx[pos] = 0;
        }
    }
    PointSet::new(d, points)
}

/// Lexicographic `a`-subsets of `0..d`.
pub fn subsets(d: usize, a: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if a == 0 || a > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..a).collect();
    loop {
        out.push(cur.clone());
        let mut i = a;
        while i > 0 && cur[i - 1] == d - a + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for t in i..a {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

fn indicator(d: usize, j: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for &i in j {
        x[i] = 1.0;
    }
    x
}

/// Indicator points `e_J` for all `|J| = a`.
pub fn extremal_coeff_point_set(d: usize, a: usize) -> Result<PointSet> {
    if a < 2 || a > d {
        return domain(format!("subset size must satisfy 2 <= a <= d = {d}, got {a}"));
    }
    PointSet::new(d, subsets(d, a).iter().map(|j| indicator(d, j)).collect())
}

/// Indicator points of all location pairs at most `maxdist` apart.
pub fn neighbour_pairs(locs: &GridLocations, maxdist: f64) -> Result<PointSet> {
    if !(maxdist > 0.0) {
        return domain(format!("maximum distance must be positive, got {maxdist}"));
    }
    let d = locs.len();
    let tol = 1e-9 * maxdist.max(1.0);
    let pairs: Vec<Vec<f64>> = subsets(d, 2)
        .into_iter()
        .filter(|p| locs.distance(p[0], p[1]) <= maxdist + tol)
        .map(|p| indicator(d, &p))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Config(format!("no location pairs within distance {maxdist}")));
    }
    PointSet::new(d, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF: [f64; 3] = [0.0, 0.5, 1.0];

    #[test]
    fn grid_counts() {
        assert_eq!(grid_point_set(4, &HALF, &[2, 3, 4]).unwrap().q(), 72);
        assert_eq!(grid_point_set(10, &HALF, &[2, 3]).unwrap().q(), 1140);
        let p = grid_point_set(2, &HALF, &[2]).unwrap();
        assert_eq!(
            p.points(),
            &[vec![0.5, 0.5], vec![0.5, 1.0], vec![1.0, 0.5], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn grid_count_matches_binomial_formula() {
        // sum over m of C(d, m) (levels - 1)^m
        let binom = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
        for d in 2..=7 {
            let counts: Vec<usize> = (2..=d).collect();
            let expected: usize = counts.iter().map(|&m| binom(d, m) * 2usize.pow(m as u32)).sum();
            assert_eq!(grid_point_set(d, &HALF, &counts).unwrap().q(), expected);
        }
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(grid_point_set(3, &HALF, &[1]), Err(Error::Config(_))));
        assert!(matches!(grid_point_set(3, &[0.0], &[2]), Err(Error::Config(_))));
    }

    #[test]
    fn extremal_sets() {
        let p = extremal_coeff_point_set(3, 2).unwrap();
        assert_eq!(
            p.points(),
            &[vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]
        );
        assert_eq!(extremal_coeff_point_set(5, 3).unwrap().q(), 10);
        assert!(extremal_coeff_point_set(3, 4).is_err());
    }

    #[test]
    fn neighbour_pair_counts() {
        let g = GridLocations::grid(3, 4).unwrap();
        assert_eq!(neighbour_pairs(&g, 2f64.sqrt()).unwrap().q(), 29);
        let g = GridLocations::grid(10, 15).unwrap();
        assert_eq!(neighbour_pairs(&g, 2f64.sqrt()).unwrap().q(), 527);
        // unit distance only: horizontal plus vertical edges
        let g = GridLocations::grid(3, 4).unwrap();
        assert_eq!(neighbour_pairs(&g, 1.0).unwrap().q(), 3 * 3 + 2 * 4);
    }

    #[test]
    fn point_validation() {
        assert!(matches!(
            PointSet::new(2, vec![vec![1.0, 0.0]]),
            Err(Error::Config(_))
        ));
        assert!(PointSet::new(2, vec![vec![1.0, -1.0]]).is_err());
        assert!(PointSet::new(2, vec![]).is_err());
    }
}
