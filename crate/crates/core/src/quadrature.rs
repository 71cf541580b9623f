//! Gaussian quadrature rules: Hermite (standard normal weight), Legendre on
//! the unit interval and collapsed tensor rules on the reference triangle.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule. Weights sum to the total
/// mass of the underlying probability measure (one).
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub-Welsch for a symmetric Jacobi matrix with zero diagonal and the given
/// off-diagonal entries, followed by Newton polishing of the nodes and
/// Christoffel weights from the orthonormal recurrence.
fn symmetric_rule(n: usize, offdiag: impl Fn(usize) -> f64) -> Rule1d {
    assert!(n >= 1, "quadrature needs at least one node");
    if n == 1 {
        return Rule1d { nodes: vec![0.0], weights: vec![1.0] };
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = offdiag(k);
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // p_{k+1} = (x p_k - b_k p_{k-1}) / b_{k+1}, orthonormal w.r.t. the measure
    let eval = |x: f64| -> (f64, f64, f64) {
        let mut p_prev = 0.0;
        let mut p = 1.0;
        let mut sumsq = 1.0;
        for k in 0..n {
            let bk = if k == 0 { 0.0 } else { offdiag(k) };
            let next = (x * p - bk * p_prev) / offdiag(k + 1);
            p_prev = p;
            p = next;
            if k + 1 < n {
                sumsq += p * p;
            }
        }
        // p = p_n, p_prev = p_{n-1}
        (p, p_prev, sumsq)
    };
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (pn, _, _) = eval(*x);
            let dp = derivative(n, *x, &offdiag);
            if dp == 0.0 {
                break;
            }
            let step = pn / dp;
            *x -= step;
            if step.abs() < 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, _, sumsq) = eval(*x);
        weights.push(1.0 / sumsq);
    }
    // symmetrize
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule1d { nodes, weights }
}

fn derivative(n: usize, x: f64, offdiag: &impl Fn(usize) -> f64) -> f64 {
    // differentiate the three-term recurrence alongside the values
    let mut p_prev = 0.0;
    let mut p = 1.0;
    let mut d_prev = 0.0;
    let mut d = 0.0;
    for k in 0..n {
        let bk = if k == 0 { 0.0 } else { offdiag(k) };
        let bn = offdiag(k + 1);
        let next = (x * p - bk * p_prev) / bn;
        let dnext = (p + x * d - bk * d_prev) / bn;
        p_prev = p;
        p = next;
        d_prev = d;
        d = dnext;
    }
    d
}

/// `n`-point Gauss-Hermite rule for the standard normal distribution N(0, 1).
/// Exact for polynomials up to degree `2n - 1`.
pub fn gauss_hermite(n: usize) -> Rule1d {
    symmetric_rule(n, |k| (k as f64).sqrt())
}

/// Gauss-Hermite rule for N(0, variance).
pub fn gauss_hermite_scaled(n: usize, variance: f64) -> Rule1d {
    let s = variance.sqrt();
    let mut r = gauss_hermite(n);
    for x in r.nodes.iter_mut() {
        *x *= s;
    }
    r
}

/// `n`-point Gauss-Legendre rule on [0, 1] (weights sum to one).
pub fn gauss_legendre01(n: usize) -> Rule1d {
    let r = symmetric_rule(n, |k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    });
    Rule1d {
        nodes: r.nodes.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: r.weights,
    }
}

/// Number of Gauss nodes integrating polynomials of `degree` exactly.
pub fn nodes_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Quadrature on the reference triangle with vertices (0,0), (1,0), (0,1).
/// Points are reference coordinates; weights are fractions of the area and
/// sum to one, so that `int_T f = |T| * sum_q w_q f(x_q)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor rule exact for polynomials of total `degree`.
    pub fn with_degree(degree: usize) -> Self {
        // the Jacobian (1 - u) raises the degree in u by one
        let nu = nodes_for_degree(degree + 1);
        let nv = nodes_for_degree(degree);
        let gu = gauss_legendre01(nu);
        let gv = gauss_legendre01(nv);
        let mut points = Vec::with_capacity(nu * nv);
        let mut weights = Vec::with_capacity(nu * nv);
        for (u, wu) in gu.nodes.iter().zip(&gu.weights) {
            for (v, wv) in gv.nodes.iter().zip(&gv.weights) {
                points.push([*u, (1.0 - u) * v]);
                // area of the reference triangle is 1/2: normalize to one
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        TriangleRule { points, weights }
    }
}
