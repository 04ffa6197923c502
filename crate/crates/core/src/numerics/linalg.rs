//! Dense symmetric linear algebra: eigendecomposition, SPD solves, and
//! singular values.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};

/// Matrices up to this dimension are diagonalized by cyclic Jacobi; larger
/// ones go through Householder tridiagonalization and implicit QL.
pub const JACOBI_MAX_DIM: usize = 96;

/// Square symmetric matrix. Symmetry is enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrize `m` as `(m + m^T) / 2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return domain(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(Self(out))
    }

    /// Build from the lower triangle `f(i, j)` with `j <= i`.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `self + c * I`.
    pub fn add_ridge(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self(m)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Rows as nested vectors, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }
}

/// Eigenvalues in non-increasing order with orthonormal eigenvectors as
/// columns.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    /// `V diag(values) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            scaled.column_mut(j).scale_mut(self.values[j]);
        }
        scaled * self.vectors.transpose()
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("non-empty decomposition")
    }

    fn sorted(values: Vec<f64>, vectors: DMatrix<f64>) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let vals = order.iter().map(|&i| values[i]).collect();
        let vecs = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
        Self {
            values: vals,
            vectors: vecs,
        }
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return domain("matrix has non-finite entries");
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenDecomp> {
    if m.dim() <= JACOBI_MAX_DIM {
        jacobi_eigen(m)
    } else {
        tridiagonal_ql_eigen(m)
    }
}

/// Cyclic Jacobi rotations.
pub fn jacobi_eigen(m: &SymMatrix) -> Result<EigenDecomp> {
    check_finite(m.as_matrix())?;
    let n = m.dim();
    let mut a: Vec<f64> = (0..n * n).map(|k| m.get(k / n, k % n)).collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off.sqrt() <= 1e-15 * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = DMatrix::from_row_slice(n, n, &v);
    Ok(EigenDecomp::sorted(values, vectors))
}

/// Householder reduction to tridiagonal form followed by implicit QL.
pub fn tridiagonal_ql_eigen(m: &SymMatrix) -> Result<EigenDecomp> {
    check_finite(m.as_matrix())?;
    let n = m.dim();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m.get(i, j)).collect())
        .collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r][c]);
    Ok(EigenDecomp::sorted(d, vectors))
}

fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 300 {
                    return Err(Error::Estimation(
                        "tridiagonal QL iteration did not converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let hk = row[i + 1];
                        row[i + 1] = s * row[i] + c * hk;
                        row[i] = c * row[i] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Tolerance below which a pivot or eigenvalue counts as singular.
pub fn pd_tolerance(m: &SymMatrix) -> f64 {
    1e-10 * (m.trace() / m.dim() as f64).abs()
}

/// Cholesky factor `L` with `m = L L^T`.
fn cholesky(m: &SymMatrix) -> Result<DMatrix<f64>> {
    check_finite(m.as_matrix())?;
    let n = m.dim();
    let tol = pd_tolerance(m);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut s = m.get(j, j);
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > tol) {
            let min_eigenvalue = sym_eigen(m).map(|e| e.min_value()).unwrap_or(f64::NAN);
            return Err(Error::Singular {
                min_eigenvalue,
                tolerance: tol,
            });
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, col)];
            }
            b[(i, col)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[(i, col)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[(k, col)];
            }
            b[(i, col)] = s / l[(i, i)];
        }
    }
}

/// Solve `m X = rhs` for symmetric positive definite `m`.
pub fn spd_solve(m: &SymMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != m.dim() {
        return domain(format!(
            "right-hand side has {} rows, matrix has dimension {}",
            rhs.nrows(),
            m.dim()
        ));
    }
    let l = cholesky(m)?;
    let mut x = rhs.clone();
    cholesky_solve_in_place(&l, &mut x);
    // One step of iterative refinement.
    let mut r = rhs - m.as_matrix() * &x;
    cholesky_solve_in_place(&l, &mut r);
    x += r;
    Ok(x)
}

/// Solve `m x = rhs` for a single right-hand side.
pub fn spd_solve_vec(m: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let b = DMatrix::from_column_slice(rhs.len(), 1, rhs);
    Ok(spd_solve(m, &b)?.column(0).iter().copied().collect())
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    let n = m.dim();
    let inv = spd_solve(m, &DMatrix::identity(n, n))?;
    SymMatrix::from_matrix(inv)
}

/// Singular values in non-increasing order (one-sided Jacobi).
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(m)?;
    let mut a = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, cols) = a.shape();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for k in 0..rows {
                    let x = a[(k, p)];
                    let y = a[(k, q)];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let x = a[(k, p)];
                    let y = a[(k, q)];
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Number of singular values above `tol`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    Ok(singular_values(m)?.into_iter().filter(|&s| s > tol).count())
}
