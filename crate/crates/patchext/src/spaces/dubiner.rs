//! Orthonormal modal bases on the reference triangle and tetrahedron, built from scaled
//! Jacobi polynomials in barycentric coordinates (no division at the collapsed vertex).
//! Members are ordered by total degree, so `P_q` is a prefix of `P_{q+1}`.

use std::ops::{Add, Mul, Sub};

/// Value together with its gradient in three variables.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub g: [f64; 3],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, g: [0.0; 3] }
    }

    pub fn var(v: f64, k: usize) -> Self {
        let mut g = [0.0; 3];
        g[k] = 1.0;
        Dual { v, g }
    }

    pub fn scale(self, s: f64) -> Self {
        Dual { v: self.v * s, g: [self.g[0] * s, self.g[1] * s, self.g[2] * s] }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, g: [self.g[0] + o.g[0], self.g[1] + o.g[1], self.g[2] + o.g[2]] }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, g: [self.g[0] - o.g[0], self.g[1] - o.g[1], self.g[2] - o.g[2]] }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            g: [
                self.g[0] * o.v + self.v * o.g[0],
                self.g[1] * o.v + self.v * o.g[1],
                self.g[2] * o.v + self.v * o.g[2],
            ],
        }
    }
}

pub fn dim_tri(q: usize) -> usize {
    (q + 1) * (q + 2) / 2
}

pub fn dim_tet(q: usize) -> usize {
    (q + 1) * (q + 2) * (q + 3) / 6
}

/// Scaled Jacobi polynomials `t^n P_n^{(alpha,0)}(x/t)` for n = 0..=nmax.
pub fn scaled_jacobi(nmax: usize, alpha: f64, x: Dual, t: Dual) -> Vec<Dual> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(Dual::constant(1.0));
    if nmax == 0 {
        return out;
    }
    out.push((x.scale(alpha + 2.0) + t.scale(alpha)).scale(0.5));
    let t2 = t * t;
    for n in 2..=nmax {
        let nf = n as f64;
        let c = 2.0 * nf + alpha;
        let a1 = 2.0 * nf * (nf + alpha) * (c - 2.0);
        let a2 = (c - 1.0) * alpha * alpha;
        let a3 = (c - 1.0) * c * (c - 2.0);
        let a4 = 2.0 * (nf + alpha - 1.0) * (nf - 1.0) * c;
        let lin = x.scale(a3) + t.scale(a2);
        let next = (lin * out[n - 1] - t2 * out[n - 2].scale(a4)).scale(1.0 / a1);
        out.push(next);
    }
    out
}

/// Index triples (i, j, k) of tetrahedral members in storage order.
pub fn tet_indices(q: usize) -> Vec<(usize, usize, usize)> {
    let mut v = Vec::with_capacity(dim_tet(q));
    for n in 0..=q {
        for i in (0..=n).rev() {
            for j in (0..=n - i).rev() {
                v.push((i, j, n - i - j));
            }
        }
    }
    v
}

pub fn tri_indices(q: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(dim_tri(q));
    for n in 0..=q {
        for i in (0..=n).rev() {
            v.push((i, n - i));
        }
    }
    v
}

/// Unnormalized Dubiner functions on a tetrahedron given barycentrics as dual numbers.
pub fn tet_raw(q: usize, l: [Dual; 4]) -> Vec<Dual> {
    let s1 = l[0] + l[1];
    let s2 = s1 + l[2];
    let s3 = s2 + l[3];
    let pi = scaled_jacobi(q, 0.0, l[1] - l[0], s1);
    let mut pj = Vec::with_capacity(q + 1);
    for i in 0..=q {
        pj.push(scaled_jacobi(q - i, 2.0 * i as f64 + 1.0, l[2] - s1, s2));
    }
    let mut pk = Vec::with_capacity(q + 1);
    for ij in 0..=q {
        pk.push(scaled_jacobi(q - ij, 2.0 * ij as f64 + 2.0, l[3] - s2, s3));
    }
    tet_indices(q)
        .into_iter()
        .map(|(i, j, k)| pi[i] * pj[i][j] * pk[i + j][k])
        .collect()
}

/// Unnormalized Dubiner functions on a triangle given barycentrics.
pub fn tri_raw(q: usize, l: [Dual; 3]) -> Vec<Dual> {
    let s1 = l[0] + l[1];
    let s2 = s1 + l[2];
    let pi = scaled_jacobi(q, 0.0, l[1] - l[0], s1);
    let mut pj = Vec::with_capacity(q + 1);
    for i in 0..=q {
        pj.push(scaled_jacobi(q - i, 2.0 * i as f64 + 1.0, l[2] - s1, s2));
    }
    tri_indices(q).into_iter().map(|(i, j)| pi[i] * pj[i][j]).collect()
}

/// Squared L2 norm of the raw Dubiner member (i,j,k) on the reference tetrahedron.
pub fn tet_norm2(i: usize, j: usize, k: usize) -> f64 {
    let (i, j, k) = (i as f64, j as f64, k as f64);
    1.0 / ((2.0 * i + 1.0) * (i + j + 1.0) * (2.0 * (i + j + k) + 3.0)) / 2.0
}

/// Squared L2 norm of the raw Dubiner member (i,j) on the reference triangle.
pub fn tri_norm2(i: usize, j: usize) -> f64 {
    let (i, j) = (i as f64, j as f64);
    1.0 / ((2.0 * i + 1.0) * (2.0 * (i + j) + 2.0))
}

fn ref_tet_bary(x: [f64; 3]) -> [Dual; 4] {
    let dx = Dual::var(x[0], 0);
    let dy = Dual::var(x[1], 1);
    let dz = Dual::var(x[2], 2);
    [Dual::constant(1.0) - dx - dy - dz, dx, dy, dz]
}

/// Orthonormal basis of `P_q` on the reference tetrahedron with gradients.
pub fn tet_basis(q: usize, x: [f64; 3]) -> Vec<Dual> {
    let raw = tet_raw(q, ref_tet_bary(x));
    raw.into_iter()
        .zip(tet_indices(q))
        .map(|(f, (i, j, k))| f.scale(1.0 / tet_norm2(i, j, k).sqrt()))
        .collect()
}

/// Orthonormal basis of `P_q` on the reference triangle; gradient entries 0 and 1 are
/// derivatives with respect to the two reference coordinates.
pub fn tri_basis(q: usize, x: [f64; 2]) -> Vec<Dual> {
    let ds = Dual::var(x[0], 0);
    let dt = Dual::var(x[1], 1);
    let l = [Dual::constant(1.0) - ds - dt, ds, dt];
    tri_raw(q, l)
        .into_iter()
        .zip(tri_indices(q))
        .map(|(f, (i, j))| f.scale(1.0 / tri_norm2(i, j).sqrt()))
        .collect()
}

/// Orthonormal Legendre basis on `[0,1]`.
pub fn segment_basis(q: usize, x: f64) -> Vec<f64> {
    let p = scaled_jacobi(q, 0.0, Dual::constant(2.0 * x - 1.0), Dual::constant(1.0));
    p.iter().enumerate().map(|(n, v)| v.v * (2.0 * n as f64 + 1.0).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::quadrature::build_quadrature;

    #[test]
    fn tet_mass_is_identity() {
        let q = 8;
        let rule = build_quadrature(3, 2 * q);
        let n = dim_tet(q);
        let mut m = vec![0.0; n * n];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let b = tet_basis(q, *p);
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] += w * b[i].v * b[j].v;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[i * n + j] - e).abs() < 1e-12, "{i} {j} {}", m[i * n + j]);
            }
        }
    }

    #[test]
    fn tri_mass_is_identity() {
        let q = 10;
        let rule = build_quadrature(2, 2 * q);
        let n = dim_tri(q);
        for i in 0..n {
            for j in 0..n {
                let s: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| {
                        let b = tri_basis(q, [p[0], p[1]]);
                        w * b[i].v * b[j].v
                    })
                    .sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let q = 5;
        let h = 1e-5;
        let pts = [[0.1, 0.2, 0.3], [0.25, 0.25, 0.25], [0.6, 0.1, 0.05], [0.01, 0.7, 0.2]];
        for x in pts {
            let b = tet_basis(q, x);
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let bp = tet_basis(q, xp);
                let bm = tet_basis(q, xm);
                for i in 0..b.len() {
                    let fd = (bp[i].v - bm[i].v) / (2.0 * h);
                    let scale = b[i].g[k].abs().max(1.0);
                    assert!((fd - b[i].g[k]).abs() / scale < 1e-6);
                }
            }
        }
    }
}
