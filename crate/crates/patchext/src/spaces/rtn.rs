//! Raviart-Thomas-Nedelec space `RTN_q = [P_q]^3 + x P_q` on the reference tetrahedron.
//!
//! Basis: `phi_i e_a` (component-major) followed by `rho_j`, where `rho_j` spans the
//! `x P_q` complement, is orthogonal to `[P_q]^3` and orthonormal. Each member is a vector
//! polynomial of degree q+1 stored by its coefficients in the degree-(q+1) modal basis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};

use super::dubiner::{dim_tet, dim_tri};
use super::geometry::reference_scaled_normal;
use super::tables::{scalar_tables, tet_tabulation, Cache};

pub struct RtnTables {
    pub degree: usize,
    /// dim P_q
    pub np: usize,
    /// number of complement members
    pub nrho: usize,
    /// dim RTN_q
    pub dim: usize,
    /// dim P_{q+1} - dim P_q
    pub ntop: usize,
    /// `rho[a][(t, j)]`: coefficient of the t-th degree-(q+1) member in component a of rho_j.
    pub rho: [DMatrix<f64>; 3],
    /// `(phi_i, div sigma_j)` for i < np.
    pub div: DMatrix<f64>,
    /// `normal[f][(m, j)] = int_{Fhat_f} (sigma_j . nhat) psi_m`.
    pub normal: [DMatrix<f64>; 4],
    /// `rho_gram[a][b][(j, j')] = (rho_{j,a}, rho_{j',b})`.
    pub rho_gram: [[DMatrix<f64>; 3]; 3],
}

impl RtnTables {
    /// Reference mass matrix under the metric `G = J^T J` (without the `1/|det J|` factor),
    /// returned as its two diagonal blocks: `G (x) I_np` is implicit, the complement block
    /// is explicit.
    pub fn rho_mass(&self, g: &Matrix3<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrho, self.nrho);
        for a in 0..3 {
            for b in 0..3 {
                m += g[(a, b)] * &self.rho_gram[a][b];
            }
        }
        m
    }

    /// Component coefficients in `P_{q+1}` of a reference field with RTN coefficients `c`.
    pub fn components(&self, c: &[f64]) -> [DVector<f64>; 3] {
        let n1 = self.np + self.ntop;
        let mut out = [DVector::zeros(n1), DVector::zeros(n1), DVector::zeros(n1)];
        for a in 0..3 {
            for i in 0..self.np {
                out[a][i] = c[a * self.np + i];
            }
            let d = DVector::from_column_slice(&c[3 * self.np..]);
            let top = &self.rho[a] * d;
            for t in 0..self.ntop {
                out[a][self.np + t] = top[t];
            }
        }
        out
    }
}

pub fn rtn_tables(q: usize) -> Arc<RtnTables> {
    static CACHE: Cache<usize, RtnTables> = Cache::new();
    CACHE.get_or_build(q, || build(q))
}

fn build(q: usize) -> RtnTables {
    let np = dim_tet(q);
    let n1 = dim_tet(q + 1);
    let ntop = n1 - np;
    let nrho = dim_tri(q);
    let first_top = if q == 0 { 0 } else { dim_tet(q - 1) };
    // coordinate multiplication of the top degree-q members, projected on the top of P_{q+1}
    let tab = tet_tabulation(q + 1, 2 * q + 2);
    let w = &tab.rule.weights;
    let mut raw = [DMatrix::zeros(ntop, nrho), DMatrix::zeros(ntop, nrho), DMatrix::zeros(ntop, nrho)];
    for (ip, x) in tab.rule.points.iter().enumerate() {
        for a in 0..3 {
            for j in 0..nrho {
                let f = w[ip] * x[a] * tab.values[(ip, first_top + j)];
                for t in 0..ntop {
                    raw[a][(t, j)] += f * tab.values[(ip, np + t)];
                }
            }
        }
    }
    let mut gram = DMatrix::zeros(nrho, nrho);
    for r in &raw {
        gram += r.transpose() * r;
    }
    let chol = gram.cholesky().expect("complement Gram matrix is positive definite");
    let linv_t = chol.l().try_inverse().expect("invertible factor").transpose();
    let rho = [&raw[0] * &linv_t, &raw[1] * &linv_t, &raw[2] * &linv_t];

    let st = scalar_tables(q + 1);
    let dim = 3 * np + nrho;
    let mut div = DMatrix::zeros(np, dim);
    for a in 0..3 {
        for m in 0..np {
            for i in 0..np {
                div[(i, a * np + m)] = st.deriv[a][(i, m)];
            }
        }
        let dtop = st.deriv[a].view((0, np), (np, ntop)) * &rho[a];
        for j in 0..nrho {
            for i in 0..np {
                div[(i, 3 * np + j)] += dtop[(i, j)];
            }
        }
    }
    let nf = dim_tri(q);
    let mut normal: [DMatrix<f64>; 4] = Default::default();
    for (f, nm) in normal.iter_mut().enumerate() {
        let nu = reference_scaled_normal(f);
        let mut m = DMatrix::zeros(nf, dim);
        for a in 0..3 {
            if nu[a] == 0.0 {
                continue;
            }
            for c in 0..np {
                for r in 0..nf {
                    m[(r, a * np + c)] += nu[a] * st.trace[f][(r, c)];
                }
            }
            let ttop = st.trace[f].view((0, np), (nf, ntop)) * &rho[a];
            for j in 0..nrho {
                for r in 0..nf {
                    m[(r, 3 * np + j)] += nu[a] * ttop[(r, j)];
                }
            }
        }
        *nm = m;
    }
    let rho_gram = std::array::from_fn(|a| std::array::from_fn(|b| rho[a].transpose() * &rho[b]));
    RtnTables { degree: q, np, nrho, dim, ntop, rho, div, normal, rho_gram }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_and_normal_traces_stay_in_degree() {
        for q in 0..5 {
            let t = rtn_tables(q);
            let st = scalar_tables(q + 1);
            // divergence of the complement has no degree-(q+1) component
            for a_check in 0..t.nrho {
                let mut top_div = DVector::zeros(t.ntop);
                for a in 0..3 {
                    let d = st.deriv[a].view((t.np, t.np), (t.ntop, t.ntop)) * t.rho[a].column(a_check);
                    top_div += d;
                }
                assert!(top_div.norm() < 1e-11, "q={q}");
            }
            // normal traces of the complement have no degree-(q+1) face component
            let nf = dim_tri(q);
            let nf1 = dim_tri(q + 1);
            for f in 0..4 {
                let nu = reference_scaled_normal(f);
                for j in 0..t.nrho {
                    let mut tr = DVector::zeros(nf1 - nf);
                    for a in 0..3 {
                        tr += nu[a] * st.trace[f].view((nf, t.np), (nf1 - nf, t.ntop)) * t.rho[a].column(j);
                    }
                    assert!(tr.norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn complement_is_orthonormal() {
        let t = rtn_tables(3);
        let g = t.rho_mass(&Matrix3::identity());
        assert!((g - DMatrix::identity(t.nrho, t.nrho)).norm() < 1e-12);
    }

    #[test]
    fn degrees_of_freedom_are_unisolvent() {
        for q in 0..=4 {
            let t = rtn_tables(q);
            let nf = dim_tri(q);
            // div moments, face normal moments and interior moments against [P_{q-1}]^3
            let ni = if q == 0 { 0 } else { dim_tet(q - 1) };
            let rows = t.np + 4 * nf + 3 * ni;
            let mut m = DMatrix::zeros(rows, t.dim);
            m.view_mut((0, 0), (t.np, t.dim)).copy_from(&t.div);
            for f in 0..4 {
                m.view_mut((t.np + f * nf, 0), (nf, t.dim)).copy_from(&t.normal[f]);
            }
            for a in 0..3 {
                for i in 0..ni {
                    m[(t.np + 4 * nf + a * ni + i, a * t.np + i)] = 1.0;
                }
            }
            let sv = m.svd(false, false).singular_values;
            let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 1e-8, "q={q} min sv {min}");
        }
    }
}
