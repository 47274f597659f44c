//! Dense decompositions for small matrices: one-sided Jacobi SVD, cyclic
//! Jacobi symmetric eigensolver, and LU with partial pivoting.

use alloc::vec::Vec;

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};

/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Largest entrywise asymmetry accepted by [`sym_eig_desc`].
pub const SYM_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(s) V^T` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` with `k = min(rows, cols)`.
    pub u: Matrix,
    pub s: Vec<f64>,
    /// `cols x k`.
    pub v: Matrix,
}

/// Eigen-decomposition of a symmetric matrix, values sorted descending.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Unit eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix,
}

pub fn svd(a: &Matrix) -> Svd {
    if a.rows() >= a.cols() {
        jacobi_svd_tall(a)
    } else {
        let t = jacobi_svd_tall(&a.transpose());
        Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

// Hestenes one-sided Jacobi on the columns of a tall matrix.
fn jacobi_svd_tall(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || gamma.abs() <= eps * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (norm2(w.col(j)), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0));

    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let smax = order.first().map(|o| o.0).unwrap_or(0.0);
    for (k, &(sv, j)) in order.iter().enumerate() {
        s.push(sv);
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
        if sv > smax * f64::EPSILON && sv > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[(i, j)] / sv;
            }
        }
    }
    complete_orthonormal(&mut u, &s, smax);
    Svd { u, s, v: vs }
}

// Fills columns of `u` belonging to (numerically) zero singular values with an
// orthonormal completion so that `u` always has orthonormal columns.
fn complete_orthonormal(u: &mut Matrix, s: &[f64], smax: f64) {
    let (m, k) = u.shape();
    let mut probe = 0;
    for j in 0..k {
        if s[j] > smax * f64::EPSILON && s[j] > 0.0 {
            continue;
        }
        loop {
            assert!(probe < m, "orthonormal completion ran out of probes");
            let mut cand: Vec<f64> = (0..m).map(|i| if i == probe { 1.0 } else { 0.0 }).collect();
            probe += 1;
            for _ in 0..2 {
                for c in 0..k {
                    if c == j || norm2(u.col(c)) == 0.0 {
                        continue;
                    }
                    let proj = dot(u.col(c), &cand);
                    for (x, &y) in cand.iter_mut().zip(u.col(c)) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > 1e-6 {
                for i in 0..m {
                    u[(i, j)] = cand[i] / nrm;
                }
                break;
            }
        }
    }
}

fn rotate_cols(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    for i in 0..rows {
        let a = m[(i, p)];
        let b = m[(i, q)];
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

pub fn singular_values(a: &Matrix) -> Vec<f64> {
    svd(a).s
}

pub fn spectral_norm(a: &Matrix) -> f64 {
    singular_values(a)[0]
}

/// Smallest singular value, zeros included.
pub fn sigma_min(a: &Matrix) -> f64 {
    *singular_values(a).last().expect("nonempty")
}

/// Smallest nonzero singular value; values below `RANK_RTOL * sigma_max`
/// are treated as zero.
pub fn eta_min(a: &Matrix) -> Result<f64> {
    let s = singular_values(a);
    let smax = s[0];
    if smax == 0.0 {
        return Err(Error::NoNonzeroSingularValue);
    }
    Ok(s.into_iter()
        .filter(|&x| x > RANK_RTOL * smax)
        .fold(f64::INFINITY, f64::min))
}

/// Numerical rank under the same tolerance as [`eta_min`].
pub fn rank(a: &Matrix) -> usize {
    let s = singular_values(a);
    let smax = s[0];
    s.iter().filter(|&&x| smax > 0.0 && x > RANK_RTOL * smax).count()
}

/// 2-norm condition number (infinite for singular input).
pub fn cond(a: &Matrix) -> f64 {
    let s = singular_values(a);
    let lo = *s.last().unwrap();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        s[0] / lo
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues descending.
/// Each eigenvector is normalized so its first nonzero component is positive.
pub fn sym_eig_desc(s: &Matrix) -> Result<EigenPairs> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch {
            op: "sym_eig_desc",
            left: s.shape(),
            right: (s.cols(), s.rows()),
        });
    }
    let asym = s.asymmetry();
    if asym > SYM_TOL * (1.0 + s.max_abs()) {
        return Err(Error::NotSymmetric(asym));
    }
    let n = s.rows();
    let mut a = s.symmetrized();
    let mut v = Matrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum::<f64>() + off;
        if off <= (f64::EPSILON * f64::EPSILON) * scale || off == 0.0 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let sn = t * c;
                // A <- J^T A J with J the (p, q) rotation.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                rotate_cols(&mut v, p, q, c, sn);
            }
        }
    }

    let mut order: Vec<(f64, usize)> = (0..n).map(|i| (a[(i, i)], i)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &(val, j)) in order.iter().enumerate() {
        values.push(val);
        for i in 0..n {
            vectors[(i, k)] = v[(i, j)];
        }
    }
    fix_column_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

/// Flips columns so the first entry that is not negligible is positive.
pub fn fix_column_signs(m: &mut Matrix) {
    for j in 0..m.cols() {
        let col = m.col(j);
        let scale = col.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let lead = col.iter().copied().find(|x| x.abs() > 1e-12 * scale.max(1e-300));
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..m.rows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                op: "lu",
                left: a.shape(),
                right: (a.cols(), a.rows()),
            });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.max_abs();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        (0..self.lu.rows()).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                left: self.lu.shape(),
                right: b.shape(),
            });
        }
        let mut x = Matrix::zeros(n, b.cols());
        for c in 0..b.cols() {
            let mut y: Vec<f64> = self.perm.iter().map(|&p| b[(p, c)]).collect();
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..i {
                    acc -= self.lu[(i, j)] * y[j];
                }
                y[i] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = y[i];
                for j in i + 1..n {
                    acc -= self.lu[(i, j)] * y[j];
                }
                y[i] = acc / self.lu[(i, i)];
            }
            for i in 0..n {
                x[(i, c)] = y[i];
            }
        }
        Ok(x)
    }
}

pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    Lu::new(a)?.solve(b)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Lu::new(a)?.solve(&Matrix::identity(a.rows()))
}

pub fn det(a: &Matrix) -> Result<f64> {
    match Lu::new(a) {
        Ok(lu) => Ok(lu.det()),
        Err(Error::Singular) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_min_cases() {
        assert_eq!(eta_min(&Matrix::diag(&[2.0, 1.0])).unwrap(), 1.0);
        assert_eq!(eta_min(&Matrix::diag(&[3.0, 0.0])).unwrap(), 3.0);
        assert_eq!(sigma_min(&Matrix::diag(&[3.0, 0.0])), 0.0);
        assert_eq!(eta_min(&Matrix::zeros(2, 2)), Err(Error::NoNonzeroSingularValue));
    }

    #[test]
    fn permutation_spectral_norm() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!((spectral_norm(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diag_eig() {
        let e = sym_eig_desc(&Matrix::diag(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values, [4.0, 1.0]);
        assert_eq!(e.vectors, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
        let e = sym_eig_desc(&Matrix::diag(&[4.0, 1.0])).unwrap();
        assert_eq!(e.vectors, Matrix::identity(2));
        let e = sym_eig_desc(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(sym_eig_desc(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn rank_deficient_svd_has_orthonormal_u() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 0.0]]);
        let d = svd(&a);
        let utu = &d.u.transpose() * &d.u;
        assert!((&utu - &Matrix::identity(3)).max_abs() < 1e-12);
        assert_eq!(rank(&a), 1);
    }

    #[test]
    fn lu_singular_and_solve() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert_eq!(solve(&a, &Matrix::identity(2)).unwrap_err(), Error::Singular);
        assert_eq!(det(&a).unwrap(), 0.0);
        let b = Matrix::from_rows(&[[0.0, 2.0], [1.0, 1.0]]);
        assert!((det(&b).unwrap() + 2.0).abs() < 1e-15);
        let x = solve(&b, &Matrix::identity(2)).unwrap();
        assert!((&(&b * &x) - &Matrix::identity(2)).max_abs() < 1e-15);
    }
}
