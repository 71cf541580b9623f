//! Lognormal diffusion coefficient `a = exp(gamma)` with an affine Gaussian
//! exponent, and its semi-analytic Hermite chaos discretization.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chaos::{hermite_fill, ModeScaling, MultiIndexSet, MAX_DEGREE};
use crate::error::Result;
use crate::fem::FeSpace;
use crate::mesh::Mesh2D;

type ModeFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Modes {
    Fourier { amplitude: f64, decay: f64 },
    Custom(Vec<ModeFn>),
}

/// `gamma(x, y) = sum_m gamma_m(x) y_m` with `M_hat` modes.
#[derive(Clone)]
pub struct AffineField {
    modes: Modes,
    count: usize,
    sup: Vec<f64>,
}

impl std::fmt::Debug for AffineField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineField").field("modes", &self.count).field("sup", &self.sup).finish()
    }
}

/// Riemann zeta function for `s > 1` by a partial sum with an
/// Euler-Maclaurin tail.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta needs s > 1");
    let n = 100usize;
    let nf = n as f64;
    let head: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * nf.powf(-s - 3.0) / 720.0
}

/// Total order `k` and the split `(beta1, beta2)` of Fourier mode `m >= 1`.
pub fn fourier_indices(m: usize) -> (usize, usize, usize) {
    let mut k = ((-0.5 + (0.25 + 2.0 * m as f64).sqrt()).floor()) as usize;
    // guard the floor against rounding near perfect squares
    while (k + 1) * (k + 2) / 2 <= m {
        k += 1;
    }
    while k * (k + 1) / 2 > m {
        k -= 1;
    }
    let b1 = m - k * (k + 1) / 2;
    (k, b1, k - b1)
}

impl AffineField {
    /// Planar Fourier modes with amplitude `9 / (10 zeta(decay)) m^{-decay}`.
    pub fn benchmark(m_hat: usize, decay: f64) -> Self {
        assert!(decay > 1.0, "decay must exceed one");
        let amplitude = 0.9 / riemann_zeta(decay);
        let sup = (1..=m_hat).map(|m| amplitude * (m as f64).powf(-decay)).collect();
        AffineField { modes: Modes::Fourier { amplitude, decay }, count: m_hat, sup }
    }

    /// Field without modes: `a = 1`.
    pub fn zero() -> Self {
        AffineField { modes: Modes::Custom(Vec::new()), count: 0, sup: Vec::new() }
    }

    /// User modes with supplied sup-norms.
    pub fn custom(modes: Vec<ModeFn>, sup: Vec<f64>) -> Self {
        assert_eq!(modes.len(), sup.len());
        let count = modes.len();
        AffineField { modes: Modes::Custom(modes), count, sup }
    }

    /// User modes whose sup-norms are estimated from the values at the
    /// nodes of `mesh` with a safety factor of two.
    pub fn custom_sampled(modes: Vec<ModeFn>, mesh: &Mesh2D) -> Self {
        let sup = modes
            .iter()
            .map(|g| 2.0 * mesh.vertices.iter().map(|&x| g(x).abs()).fold(0.0, f64::max))
            .collect();
        Self::custom(modes, sup)
    }

    pub fn n_modes(&self) -> usize {
        self.count
    }

    pub fn sup_norms(&self) -> &[f64] {
        &self.sup
    }

    /// `gamma_m(x)` for mode `m` counted from zero.
    pub fn mode(&self, m: usize, x: [f64; 2]) -> f64 {
        match &self.modes {
            Modes::Fourier { amplitude, decay } => {
                let (_, b1, b2) = fourier_indices(m + 1);
                amplitude
                    * ((m + 1) as f64).powf(-decay)
                    * (2.0 * PI * b1 as f64 * x[0]).cos()
                    * (2.0 * PI * b2 as f64 * x[1]).cos()
            }
            Modes::Custom(f) => f[m](x),
        }
    }

    pub fn gamma(&self, x: [f64; 2], y: &[f64]) -> f64 {
        (0..self.count).map(|m| self.mode(m, x) * y.get(m).copied().unwrap_or(0.0)).sum()
    }

    pub fn scaling(&self, rho: f64, theta: f64) -> ModeScaling {
        ModeScaling::new(self.sup.clone(), rho, theta)
    }
}

/// One-dimensional chaos coefficient of `exp(b y)` under N(0, s^2):
/// `exp(b^2 s^2 / 2) (b s)^k / sqrt(k!)`.
pub fn exp_chaos_coefficient(b: f64, s: f64, k: usize) -> f64 {
    let bs = b * s;
    let mut v = (0.5 * bs * bs).exp();
    for j in 1..=k {
        v *= bs / (j as f64).sqrt();
    }
    v
}

/// Smallest per-mode degree whose first omitted coefficient factor drops
/// below `tol`, bounded by `max_degree`.
pub fn select_degrees(field: &AffineField, scaling: &ModeScaling, tol: f64, max_degree: usize) -> Vec<usize> {
    let cap = max_degree.min(MAX_DEGREE);
    (0..field.n_modes())
        .map(|m| {
            let b = field.sup_norms()[m];
            let s = scaling.weight_sigma(m);
            (1..=cap).find(|&k| exp_chaos_coefficient(b, s, k) < tol).unwrap_or(cap)
        })
        .collect()
}

/// Nodal chaos coefficients of `a_N` in a Lagrange space. The coefficient
/// of node `j` factorizes over modes:
/// `a[j, alpha] = prod_m factors[j][m][alpha_m]`.
#[derive(Debug, Clone)]
pub struct DiscreteCoefficient {
    pub mesh: Mesh2D,
    pub space: FeSpace,
    pub dhat: Vec<usize>,
    pub scaling: ModeScaling,
    pub factors: Vec<Vec<Vec<f64>>>,
}

impl DiscreteCoefficient {
    pub fn n_nodes(&self) -> usize {
        self.factors.len()
    }

    pub fn n_modes(&self) -> usize {
        self.dhat.len()
    }

    pub fn index_set(&self) -> MultiIndexSet {
        MultiIndexSet::new(if self.dhat.is_empty() { vec![1] } else { self.dhat.clone() })
    }

    /// Per-mode factor, `delta_{k0}` beyond the field modes.
    pub fn factor(&self, node: usize, m: usize, k: usize) -> f64 {
        match self.factors[node].get(m) {
            Some(f) => f.get(k).copied().unwrap_or(0.0),
            None => {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn coefficient(&self, node: usize, alpha: &[usize]) -> f64 {
        if alpha.iter().skip(self.n_modes()).any(|&k| k > 0) {
            return 0.0;
        }
        (0..self.n_modes())
            .map(|m| self.factor(node, m, alpha.get(m).copied().unwrap_or(0)))
            .product()
    }

    /// Mean field, the `alpha = 0` coefficient.
    pub fn mean(&self, node: usize) -> f64 {
        (0..self.n_modes()).map(|m| self.factor(node, m, 0)).product()
    }

    /// Dense `nodes x |Lambda_dhat|` table; intended for small instances.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let set = self.index_set();
        (0..self.n_nodes())
            .map(|j| set.iter().map(|a| (0..self.n_modes()).map(|m| self.factor(j, m, a[m])).product()).collect())
            .collect()
    }

    /// Realization `a_N(x_j, y)` at every node.
    pub fn realization(&self, y: &[f64]) -> Vec<f64> {
        let mut p = Vec::new();
        let sums: Vec<Vec<f64>> = (0..self.n_modes())
            .map(|m| {
                p.clear();
                let v = self.scaling.weight_variance(m);
                hermite_fill(v, self.dhat[m] - 1, y.get(m).copied().unwrap_or(0.0), &mut p);
                p.clone()
            })
            .collect();
        (0..self.n_nodes())
            .map(|j| {
                (0..self.n_modes())
                    .map(|m| self.factors[j][m].iter().zip(&sums[m]).map(|(a, b)| a * b).sum::<f64>())
                    .product()
            })
            .collect()
    }
}

/// Semi-analytic chaos coefficients of `exp(gamma)` at the nodes of an
/// order-`p` Lagrange space on `mesh`.
pub fn expand_lognormal(
    field: &AffineField,
    scaling: &ModeScaling,
    dhat: &[usize],
    mesh: &Mesh2D,
    p: usize,
) -> Result<DiscreteCoefficient> {
    assert_eq!(dhat.len(), field.n_modes());
    let space = FeSpace::new(mesh, p)?;
    let factors = space
        .dof_coords
        .par_iter()
        .map(|&x| {
            (0..field.n_modes())
                .map(|m| {
                    let b = field.mode(m, x);
                    let s = scaling.weight_sigma(m);
                    (0..dhat[m]).map(|k| exp_chaos_coefficient(b, s, k)).collect()
                })
                .collect()
        })
        .collect();
    Ok(DiscreteCoefficient {
        mesh: mesh.clone(),
        space,
        dhat: dhat.to_vec(),
        scaling: scaling.clone(),
        factors,
    })
}

/// Monte Carlo estimate of `|a - a_N|` relative to `|a|` in
/// `L^2(pi_0; L^inf(D))`, with the sup over coefficient nodes.
pub fn truncation_residual(field: &AffineField, coef: &DiscreteCoefficient, samples: usize, seed: u64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples.max(1) {
        let y: Vec<f64> = (0..field.n_modes()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let approx = coef.realization(&y);
        let mut err: f64 = 0.0;
        let mut mag: f64 = 0.0;
        for (j, x) in coef.space.dof_coords.iter().enumerate() {
            let exact = field.gamma(*x, &y).exp();
            err = err.max((exact - approx[j]).abs());
            mag = mag.max(exact);
        }
        num += err * err;
        den += mag * mag;
    }
    (num / den).sqrt()
}

/// Number of node/sample pairs where a realization of `a_N` is not
/// positive.
pub fn positivity_audit(field: &AffineField, coef: &DiscreteCoefficient, samples: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let y: Vec<f64> = (0..field.n_modes()).map(|_| StandardNormal.sample(&mut rng)).collect();
        bad += coef.realization(&y).iter().filter(|&&v| v <= 0.0).count();
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::hermite_all;
    use crate::mesh::initial_lshape;
    use crate::quadrature::gauss_hermite_scaled;

    #[test]
    fn fourier_index_maps() {
        assert_eq!(fourier_indices(1), (1, 0, 1));
        assert_eq!(fourier_indices(2), (1, 1, 0));
        assert_eq!(fourier_indices(3), (2, 0, 2));
        assert_eq!(fourier_indices(5), (2, 2, 0));
        assert_eq!(fourier_indices(6), (3, 0, 3));
        for m in 1..200 {
            let (k, b1, b2) = fourier_indices(m);
            assert_eq!(b1 + b2, k);
        }
    }

    #[test]
    fn zeta_of_two() {
        assert!((riemann_zeta(2.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((riemann_zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-12);
        let f = AffineField::benchmark(3, 2.0);
        assert!((f.sup_norms()[1] - 0.9 * 6.0 / (PI * PI * 4.0)).abs() < 1e-12);
        // cosine products attain one at the origin
        for m in 0..3 {
            assert!((f.mode(m, [0.0, 0.0]) - f.sup_norms()[m]).abs() < 1e-15);
        }
    }

    #[test]
    fn chaos_coefficients_match_quadrature() {
        for (b, s) in [(0.3, 1.05), (-0.7, 1.2), (1.0, 1.0)] {
            let rule = gauss_hermite_scaled(60, s * s);
            for k in 0..8 {
                let q: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(y, w)| w * (b * y).exp() * hermite_all(s * s, k, *y)[k])
                    .sum();
                assert!((q - exp_chaos_coefficient(b, s, k)).abs() < 1e-10);
            }
        }
        // b s = 1
        assert!((exp_chaos_coefficient(1.0, 1.0, 0) - 1.6487212707001282).abs() < 1e-14);
        assert!((exp_chaos_coefficient(1.0, 1.0, 1) - 1.6487212707001282).abs() < 1e-14);
    }

    #[test]
    fn zero_field_expands_to_one() {
        let mesh = initial_lshape(0.5);
        let f = AffineField::zero();
        let c = expand_lognormal(&f, &f.scaling(1.0, 0.1), &[], &mesh, 1).unwrap();
        assert!((0..c.n_nodes()).all(|j| c.mean(j) == 1.0));
        assert_eq!(truncation_residual(&f, &c, 5, 1), 0.0);
    }

    #[test]
    fn parseval_partial_sums_increase() {
        let f = AffineField::benchmark(2, 2.0);
        let s = f.scaling(1.0, 0.1);
        let mesh = initial_lshape(0.5);
        let c = expand_lognormal(&f, &s, &[12, 12], &mesh, 1).unwrap();
        for j in 0..c.n_nodes() {
            let x = c.space.dof_coords[j];
            let exact: f64 = (0..2).map(|m| (f.mode(m, x) * s.weight_sigma(m)).powi(2)).sum::<f64>();
            let exact = (2.0 * exact).exp();
            let mut acc = 0.0;
            let set = MultiIndexSet::new(vec![12, 12]);
            let mut prev = 0.0;
            for (p, a) in set.iter().enumerate() {
                acc += c.coefficient(j, &a).powi(2);
                if p % 12 == 11 {
                    assert!(acc >= prev);
                    prev = acc;
                }
            }
            assert!((acc - exact).abs() < 1e-10 * exact);
        }
    }

    #[test]
    fn truncation_residual_decreases_with_degree() {
        let f = AffineField::benchmark(1, 2.0);
        let s = f.scaling(1.0, 0.1);
        let mesh = initial_lshape(0.5);
        let mut prev = f64::INFINITY;
        for d in [1, 2, 4, 8] {
            let c = expand_lognormal(&f, &s, &[d], &mesh, 1).unwrap();
            let r = truncation_residual(&f, &c, 200, 3);
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn degree_selection() {
        let f = AffineField::benchmark(5, 2.0);
        let s = f.scaling(1.0, 0.1);
        let d = select_degrees(&f, &s, 1e-8, 30);
        assert!(d.windows(2).all(|w| w[0] >= w[1]));
        for (m, &k) in d.iter().enumerate() {
            let b = f.sup_norms()[m];
            assert!(exp_chaos_coefficient(b, s.weight_sigma(m), k) < 1e-8);
            assert!(exp_chaos_coefficient(b, s.weight_sigma(m), k - 1) >= 1e-8 || k == 1);
        }
    }

    #[test]
    fn mean_field_consistency() {
        let f = AffineField::benchmark(3, 2.0);
        let s = f.scaling(1.0, 0.1);
        let mesh = initial_lshape(0.5);
        let c = expand_lognormal(&f, &s, &[4, 3, 3], &mesh, 2).unwrap();
        for j in 0..c.n_nodes() {
            let x = c.space.dof_coords[j];
            let expect: f64 = (0..3).map(|m| (0.5 * (f.mode(m, x) * s.weight_sigma(m)).powi(2)).exp()).product();
            assert!((c.mean(j) - expect).abs() < 1e-10);
            assert!(c.mean(j) > 0.0);
        }
        let dense = c.dense();
        assert_eq!(dense[0].len(), 36);
        assert!((dense[3][0] - c.mean(3)).abs() < 1e-15);
        assert_eq!(positivity_audit(&f, &c, 50, 9), 0);
    }
}
