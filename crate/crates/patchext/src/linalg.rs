//! Dense solvers for the small symmetric systems arising in patch problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric positive semidefinite factorization `P A P^T = L L^T` with diagonal pivoting.
/// Pivots below `tol * max(diag)` are dropped, giving a rank-revealing factor.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// n x rank, rows in pivot order.
    l: DMatrix<f64>,
    perm: Vec<usize>,
    pub rank: usize,
    pub n: usize,
    /// Smallest accepted pivot over the largest, a cheap conditioning indicator.
    pub pivot_ratio: f64,
}

impl PivotedCholesky {
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Self {
        let n = a.nrows();
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
        let floor = tol * max_diag.max(f64::MIN_POSITIVE);
        let mut rank = 0;
        let mut first = 0.0;
        let mut last = 0.0;
        for k in 0..n {
            // choose the largest remaining diagonal entry
            let (mut best, mut bi) = (f64::NEG_INFINITY, k);
            for i in k..n {
                if w[(i, i)] > best {
                    best = w[(i, i)];
                    bi = i;
                }
            }
            // NaN pivots stop the factorization as well
            if !(best > floor) {
                break;
            }
            if bi != k {
                w.swap_rows(k, bi);
                w.swap_columns(k, bi);
                perm.swap(k, bi);
            }
            let d = w[(k, k)].sqrt();
            if k == 0 {
                first = d * d;
            }
            last = d * d;
            w[(k, k)] = d;
            for i in k + 1..n {
                w[(i, k)] /= d;
            }
            // full symmetric trailing update keeps later row/column swaps valid
            for j in k + 1..n {
                let ljk = w[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    let v = w[(i, k)] * ljk;
                    w[(i, j)] -= v;
                }
            }
            rank = k + 1;
        }
        let mut l = DMatrix::zeros(n, rank);
        for j in 0..rank {
            for i in j..n {
                l[(i, j)] = w[(i, j)];
            }
        }
        let pivot_ratio = if rank == 0 { 0.0 } else { last / first };
        PivotedCholesky { l, perm, rank, n, pivot_ratio }
    }

    /// A solution of `A x = b` when `b` is in the range; unknowns of dropped pivots are zero.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let r = self.rank;
        let mut y = DVector::zeros(r);
        for i in 0..r {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..r).rev() {
            let mut s = y[i];
            for j in i + 1..r {
                s -= self.l[(j, i)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = DVector::zeros(self.n);
        for i in 0..r {
            x[self.perm[i]] = y[i];
        }
        x
    }

    /// Solve for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for j in 0..b.ncols() {
            out.set_column(j, &self.solve(&b.column(j).into_owned()));
        }
        out
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.n
    }
}

/// Symmetric solver: Cholesky when positive definite, pivoted semidefinite otherwise.
/// The returned residual `|A x - b| / max(|b|, 1e-300)` lets callers detect inconsistency.
pub fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let x = match a.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => PivotedCholesky::new(a, 1e-13).solve(b),
    };
    let res = (a * &x - b).norm() / b.norm().max(1e-300);
    (x, res)
}

/// Result of an equality constrained quadratic program.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// `|C x - d|_inf`
    pub constraint_residual: f64,
    /// Rank of the constraint matrix.
    pub constraint_rank: usize,
}

/// `min 1/2 x^T H x + g^T x  s.t.  C x = d` by the null-space method.
///
/// `H` must be positive definite on the kernel of `C`. Redundant constraints are allowed;
/// inconsistent ones raise `IncompatibleData` with the least-squares defect.
pub fn equality_qp(h: &DMatrix<f64>, g: &DVector<f64>, c: &DMatrix<f64>, d: &DVector<f64>) -> Result<QpSolution> {
    let n = h.nrows();
    let m = c.nrows();
    if m == 0 {
        let (x, res) = solve_psd(h, &(-g));
        if res > 1e-8 && g.norm() > 0.0 {
            return Err(Error::SingularSystem(format!("unconstrained system residual {res:e}")));
        }
        return Ok(QpSolution { x, constraint_residual: 0.0, constraint_rank: 0 });
    }
    let svd = c.transpose().svd(true, true);
    // C^T = U S V^T, so C = V S U^T; columns of U beyond the rank span ker C.
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let tol = smax * 1e-12 * (n.max(m) as f64);
    let rank = s.iter().filter(|&&x| x > tol).count();
    // particular solution x0 = C^+ d
    let mut x0 = DVector::zeros(n);
    for k in 0..s.len() {
        if s[k] > tol {
            let coef = vt.row(k).transpose().dot(d) / s[k];
            x0 += coef * u.column(k);
        }
    }
    let defect = (c * &x0 - d).amax();
    let scale = d.amax().max(1.0);
    if defect > 1e-9 * scale {
        return Err(Error::IncompatibleData { reason: "inconsistent linear constraints".into(), defect });
    }
    // full null-space basis from a complete SVD of C^T
    let full = complete_basis(u, rank, n);
    let nk = full.ncols();
    let x = if nk == 0 {
        x0
    } else {
        let hz = h * &full;
        let red = full.transpose() * &hz;
        let rhs = -(full.transpose() * (g + h * &x0));
        let (y, res) = solve_psd(&red, &rhs);
        if res > 1e-8 && rhs.norm() > 1e-14 {
            return Err(Error::SingularSystem(format!("reduced Hessian residual {res:e}")));
        }
        x0 + full * y
    };
    let constraint_residual = (c * &x - d).amax();
    Ok(QpSolution { x, constraint_residual, constraint_rank: rank })
}

/// Orthonormal basis of the complement of the first `rank` columns of `u` in R^n.
fn complete_basis(u: &DMatrix<f64>, rank: usize, n: usize) -> DMatrix<f64> {
    if u.ncols() == n {
        return u.columns(rank, n - rank).into_owned();
    }
    // thin SVD: complete via QR of [U_r | I]
    let mut m = DMatrix::zeros(n, rank + n);
    m.view_mut((0, 0), (n, rank)).copy_from(&u.columns(0, rank));
    for i in 0..n {
        m[(i, rank + i)] = 1.0;
    }
    let q = m.qr().q();
    q.columns(rank, n - rank).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn pivoted_cholesky_solves_full_rank() {
        let b = random_matrix(8, 8, 1);
        let a = &b * b.transpose() + DMatrix::identity(8, 8);
        let rhs = random_matrix(8, 1, 2).column(0).into_owned();
        let f = PivotedCholesky::new(&a, 1e-14);
        assert_eq!(f.rank, 8);
        assert!((&a * f.solve(&rhs) - &rhs).norm() < 1e-12);
    }

    #[test]
    fn pivoted_cholesky_detects_rank() {
        let b = random_matrix(9, 4, 3);
        let a = &b * b.transpose();
        let f = PivotedCholesky::new(&a, 1e-12);
        assert_eq!(f.rank, 4);
        let rhs = &a * random_matrix(9, 1, 4).column(0);
        let x = f.solve(&rhs);
        assert!((&a * x - rhs).norm() < 1e-10);
    }

    #[test]
    fn qp_matches_kkt_solution() {
        let b = random_matrix(6, 6, 5);
        let h = &b * b.transpose() + DMatrix::identity(6, 6);
        let g = random_matrix(6, 1, 6).column(0).into_owned();
        let c = random_matrix(2, 6, 7);
        let d = random_matrix(2, 1, 8).column(0).into_owned();
        let sol = equality_qp(&h, &g, &c, &d).unwrap();
        let mut kkt = DMatrix::zeros(8, 8);
        kkt.view_mut((0, 0), (6, 6)).copy_from(&h);
        kkt.view_mut((6, 0), (2, 6)).copy_from(&c);
        kkt.view_mut((0, 6), (6, 2)).copy_from(&c.transpose());
        let mut rhs = DVector::zeros(8);
        rhs.rows_mut(0, 6).copy_from(&(-&g));
        rhs.rows_mut(6, 2).copy_from(&d);
        let full = kkt.lu().solve(&rhs).unwrap();
        assert!((sol.x - full.rows(0, 6)).norm() < 1e-10);
    }

    #[test]
    fn qp_redundant_and_inconsistent_constraints() {
        let h = DMatrix::identity(3, 3);
        let g = DVector::zeros(3);
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let ok = equality_qp(&h, &g, &c, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((ok.x[0] - 0.5).abs() < 1e-12 && ok.constraint_rank == 1);
        let bad = equality_qp(&h, &g, &c, &DVector::from_vec(vec![1.0, 3.0]));
        assert!(matches!(bad, Err(Error::IncompatibleData { .. })));
    }
}
