//! Reference-element tables built once per polynomial degree and shared read-only.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use super::dubiner::{dim_tet, dim_tri, tet_basis, tri_basis};
use super::geometry::face_point;
use super::quadrature::{build_quadrature, Quadrature};

/// Lazily filled cache keyed by degree-like keys.
pub struct Cache<K, V> {
    map: OnceLock<Mutex<HashMap<K, Arc<V>>>>,
}

impl<K: Eq + Hash + Copy, V> Cache<K, V> {
    pub const fn new() -> Self {
        Cache { map: OnceLock::new() }
    }

    pub fn get_or_build(&self, key: K, build: impl FnOnce() -> V) -> Arc<V> {
        let map = self.map.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(v) = map.lock().unwrap().get(&key) {
            return v.clone();
        }
        let v = Arc::new(build());
        map.lock().unwrap().entry(key).or_insert(v).clone()
    }
}

impl<K: Eq + Hash + Copy, V> Default for Cache<K, V> {
    fn default() -> Self {
        Self::new()
    }
}

/// Basis values and reference gradients at the points of a tetrahedral rule.
pub struct TetTabulation {
    pub degree: usize,
    pub rule: Arc<Quadrature>,
    /// `values[(point, member)]`
    pub values: DMatrix<f64>,
    pub grads: [DMatrix<f64>; 3],
}

pub fn tet_tabulation(degree: usize, exactness: usize) -> Arc<TetTabulation> {
    static CACHE: Cache<(usize, usize), TetTabulation> = Cache::new();
    let rule = build_quadrature(3, exactness);
    CACHE.get_or_build((degree, rule.exactness), || {
        let n = dim_tet(degree);
        let np = rule.len();
        let mut values = DMatrix::zeros(np, n);
        let mut grads = [DMatrix::zeros(np, n), DMatrix::zeros(np, n), DMatrix::zeros(np, n)];
        for (ip, x) in rule.points.iter().enumerate() {
            for (i, b) in tet_basis(degree, *x).iter().enumerate() {
                values[(ip, i)] = b.v;
                for d in 0..3 {
                    grads[d][(ip, i)] = b.g[d];
                }
            }
        }
        TetTabulation { degree, rule: rule.clone(), values, grads }
    })
}

/// Triangle basis values at the points of a triangle rule.
pub struct TriTabulation {
    pub degree: usize,
    pub rule: Arc<Quadrature>,
    pub values: DMatrix<f64>,
}

pub fn tri_tabulation(degree: usize, exactness: usize) -> Arc<TriTabulation> {
    static CACHE: Cache<(usize, usize), TriTabulation> = Cache::new();
    let rule = build_quadrature(2, exactness);
    CACHE.get_or_build((degree, rule.exactness), || {
        let n = dim_tri(degree);
        let mut values = DMatrix::zeros(rule.len(), n);
        for (ip, x) in rule.points.iter().enumerate() {
            for (i, b) in tri_basis(degree, [x[0], x[1]]).iter().enumerate() {
                values[(ip, i)] = b.v;
            }
        }
        TriTabulation { degree, rule: rule.clone(), values }
    })
}

/// Degree-q scalar tables on the reference tetrahedron.
pub struct ScalarTables {
    pub degree: usize,
    pub dim: usize,
    pub face_dim: usize,
    /// `deriv[a][(k, i)] = (phi_k, d_a phi_i)`: coefficients of the a-th derivative.
    pub deriv: [DMatrix<f64>; 3],
    /// `trace[f][(m, i)]`: face-basis coefficients of the trace of `phi_i` on local face f.
    pub trace: [DMatrix<f64>; 4],
}

pub fn scalar_tables(q: usize) -> Arc<ScalarTables> {
    static CACHE: Cache<usize, ScalarTables> = Cache::new();
    CACHE.get_or_build(q, || {
        let tab = tet_tabulation(q, 2 * q);
        let n = dim_tet(q);
        let nf = dim_tri(q);
        let w = &tab.rule.weights;
        let mut weighted = tab.values.clone();
        for (ip, wi) in w.iter().enumerate() {
            weighted.row_mut(ip).scale_mut(*wi);
        }
        let deriv = [
            weighted.transpose() * &tab.grads[0],
            weighted.transpose() * &tab.grads[1],
            weighted.transpose() * &tab.grads[2],
        ];
        let trule = build_quadrature(2, 2 * q);
        let ttab = tri_tabulation(q, 2 * q);
        let mut trace: [DMatrix<f64>; 4] = Default::default();
        for (f, tr) in trace.iter_mut().enumerate() {
            let mut cell_vals = DMatrix::zeros(trule.len(), n);
            for (ip, x) in trule.points.iter().enumerate() {
                for (i, b) in tet_basis(q, face_point(f, x[0], x[1])).iter().enumerate() {
                    cell_vals[(ip, i)] = b.v * trule.weights[ip];
                }
            }
            *tr = ttab.values.transpose() * cell_vals;
        }
        ScalarTables { degree: q, dim: n, face_dim: nf, deriv, trace }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_linear_members_is_exact() {
        let t = scalar_tables(3);
        // the constant member has zero derivative
        for a in 0..3 {
            for k in 0..t.dim {
                assert!(t.deriv[a][(k, 0)].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trace_of_constant_is_constant() {
        let t = scalar_tables(4);
        let c0 = 6f64.sqrt();
        for f in 0..4 {
            // constant member phi_0 = sqrt(6); face constant member psi_0 = sqrt(2)
            assert!((t.trace[f][(0, 0)] - c0 / 2f64.sqrt()).abs() < 1e-13);
            for m in 1..t.face_dim {
                assert!(t.trace[f][(m, 0)].abs() < 1e-13);
            }
        }
    }
}
