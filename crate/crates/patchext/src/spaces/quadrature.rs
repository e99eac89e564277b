//! Gauss-Jacobi rules and collapsed (conical product) rules on simplices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Evaluate the Jacobi polynomial `P_n^{(alpha,0)}` and its derivative at `t`.
fn jacobi_with_derivative(n: usize, alpha: f64, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = 0.5 * ((alpha + 2.0) * t + alpha);
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + alpha;
        let a1 = 2.0 * k * (k + alpha) * (c - 2.0);
        let a2 = (c - 1.0) * alpha * alpha;
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + alpha - 1.0) * (k - 1.0) * c;
        let p2 = ((a2 + a3 * t) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    // derivative: d/dt P_n^{(a,0)} = (n + a + 1)/2 * P_{n-1}^{(a+1,1)}; use the identity
    // (2n+a)(1-t^2) P_n' = n(a - (2n+a) t) P_n + 2(n+a) n P_{n-1}
    let nf = n as f64;
    let c = 2.0 * nf + alpha;
    let dp = (nf * (alpha - c * t) * p1 + 2.0 * (nf + alpha) * nf * p0) / (c * (1.0 - t * t));
    (p1, dp)
}

/// Gauss-Jacobi nodes and weights for `(1-t)^alpha` on `[-1, 1]`.
pub fn gauss_jacobi(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    // Golub-Welsch for initial guesses
    let mut jm = nalgebra::DMatrix::<f64>::zeros(n, n);
    let beta = 0.0;
    for i in 0..n {
        let k = i as f64;
        let s = 2.0 * k + alpha + beta;
        let a = if i == 0 {
            (beta - alpha) / (alpha + beta + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        jm[(i, i)] = a;
        if i + 1 < n {
            let k1 = k + 1.0;
            let s1 = 2.0 * k1 + alpha + beta;
            let b = 4.0 * k1 * (k1 + alpha) * (k1 + beta) * (k1 + alpha + beta)
                / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0));
            jm[(i, i + 1)] = b.sqrt();
            jm[(i + 1, i)] = b.sqrt();
        }
    }
    let eig = jm.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut weights = Vec::with_capacity(n);
    for t in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = jacobi_with_derivative(n, alpha, *t);
            let step = p / dp;
            *t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = jacobi_with_derivative(n, alpha, *t);
        weights.push(2f64.powf(alpha + 1.0) / ((1.0 - *t * *t) * dp * dp));
    }
    (nodes, weights)
}

/// Rule on `[0,1]` for the weight `(1-x)^alpha`.
fn unit_rule(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_jacobi(n, alpha);
    let scale = 2f64.powf(alpha + 1.0);
    (t.iter().map(|t| 0.5 * (1.0 + t)).collect(), w.iter().map(|w| w / scale).collect())
}

/// Quadrature rule on a reference simplex of dimension 1, 2 or 3.
///
/// Reference simplices: `[0,1]`, the triangle with vertices (0,0),(1,0),(0,1) and the
/// tetrahedron with vertices (0,0,0),(1,0,0),(0,1,0),(0,0,1).
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn segment(exactness: usize) -> Self {
        let n = exactness / 2 + 1;
        let (x, w) = unit_rule(n, 0.0);
        Quadrature {
            dim: 1,
            points: x.iter().map(|&x| [x, 0.0, 0.0]).collect(),
            weights: w,
            exactness,
        }
    }

    pub fn triangle(exactness: usize) -> Self {
        let n = exactness / 2 + 1;
        let (x1, w1) = unit_rule(n, 0.0);
        let (x2, w2) = unit_rule(n, 1.0);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (a, wa) in x1.iter().zip(&w1) {
            for (b, wb) in x2.iter().zip(&w2) {
                points.push([a * (1.0 - b), *b, 0.0]);
                weights.push(wa * wb);
            }
        }
        Quadrature { dim: 2, points, weights, exactness }
    }

    pub fn tetrahedron(exactness: usize) -> Self {
        let n = exactness / 2 + 1;
        let (x1, w1) = unit_rule(n, 0.0);
        let (x2, w2) = unit_rule(n, 1.0);
        let (x3, w3) = unit_rule(n, 2.0);
        let mut points = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for (a, wa) in x1.iter().zip(&w1) {
            for (b, wb) in x2.iter().zip(&w2) {
                for (c, wc) in x3.iter().zip(&w3) {
                    points.push([a * (1.0 - b) * (1.0 - c), b * (1.0 - c), *c]);
                    weights.push(wa * wb * wc);
                }
            }
        }
        Quadrature { dim: 3, points, weights, exactness }
    }
}

type RuleCache = Mutex<HashMap<(usize, usize), Arc<Quadrature>>>;

/// Cached rule of at least the requested exactness on the simplex of dimension `dim`.
pub fn build_quadrature(dim: usize, exactness: usize) -> Arc<Quadrature> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    // round up to odd exactness so that degree pairs share rules
    let exactness = exactness | 1;
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(q) = cache.lock().unwrap().get(&(dim, exactness)) {
        return q.clone();
    }
    let q = Arc::new(match dim {
        1 => Quadrature::segment(exactness),
        2 => Quadrature::triangle(exactness),
        3 => Quadrature::tetrahedron(exactness),
        _ => panic!("unsupported simplex dimension {dim}"),
    });
    cache.lock().unwrap().insert((dim, exactness), q.clone());
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn tet_monomials_match_factorial_formula() {
        for exact in [2usize, 7, 12, 26] {
            let q = build_quadrature(3, exact);
            for a in 0..=exact {
                for b in 0..=exact - a {
                    for c in 0..=exact - a - b {
                        let num: f64 = q
                            .points
                            .iter()
                            .zip(&q.weights)
                            .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                            .sum();
                        let ex = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
                        assert!((num - ex).abs() <= 1e-14, "{a} {b} {c}: {num} vs {ex}");
                    }
                }
            }
        }
    }

    #[test]
    fn triangle_monomials_match_factorial_formula() {
        let exact = 20;
        let q = build_quadrature(2, exact);
        for a in 0..=exact {
            for b in 0..=exact - a {
                let num: f64 = q
                    .points
                    .iter()
                    .zip(&q.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let ex = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert!((num - ex).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn gauss_jacobi_weights_sum_to_moment() {
        for alpha in [0.0, 1.0, 2.0, 5.0] {
            let (_, w) = gauss_jacobi(9, alpha);
            let s: f64 = w.iter().sum();
            let moment = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
            assert!((s - moment).abs() < 1e-13 * moment);
        }
    }
}
