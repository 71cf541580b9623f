//! Tensorized Hermite chaos on weighted Gaussian product measures.
//!
//! Modes are numbered from zero. Multi-indices are plain `Vec<usize>`; an
//! index shorter than the number of modes of a set is implicitly padded with
//! zeros.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_hermite_scaled};

/// Largest supported polynomial degree per mode.
pub const MAX_DEGREE: usize = 30;

/// Full tensor index set `{mu : mu_m < d_m}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndexSet {
    dims: Vec<usize>,
}

impl MultiIndexSet {
    /// Panics if a degree is zero.
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "index set dims must be >= 1");
        MultiIndexSet { dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of modes carried by the set (the active count `M`).
    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    /// Degree bound for mode `m`, one beyond the active modes.
    pub fn dim(&self, m: usize) -> usize {
        self.dims.get(m).copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, mu: &[usize]) -> bool {
        mu.iter().enumerate().all(|(m, &k)| k < self.dim(m))
    }

    /// Position of `mu` in the enumeration order.
    pub fn position(&self, mu: &[usize]) -> Option<usize> {
        if !self.contains(mu) {
            return None;
        }
        let mut pos = 0;
        for (m, &d) in self.dims.iter().enumerate() {
            pos = pos * d + mu.get(m).copied().unwrap_or(0);
        }
        Some(pos)
    }

    /// Multi-index at enumeration position `pos`.
    pub fn index_at(&self, mut pos: usize) -> Vec<usize> {
        let mut mu = vec![0; self.dims.len()];
        for m in (0..self.dims.len()).rev() {
            mu[m] = pos % self.dims[m];
            pos /= self.dims[m];
        }
        mu
    }

    /// All members, lexicographic with the last mode fastest.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(|p| self.index_at(p))
    }

    /// Same set described over `modes` modes (padding with ones).
    pub fn padded(&self, modes: usize) -> MultiIndexSet {
        let mut dims = self.dims.clone();
        if dims.len() < modes {
            dims.resize(modes, 1);
        }
        MultiIndexSet { dims }
    }
}

/// `Lambda_{d + dhat - 1} \ Lambda_d`, enumerated in the order of the larger
/// set. Indices carry `max(M, len(dhat))` entries.
pub fn index_set_boundary(lambda: &MultiIndexSet, dhat: &[usize]) -> Vec<Vec<usize>> {
    let modes = lambda.modes().max(dhat.len());
    let outer = MultiIndexSet::new(
        (0..modes)
            .map(|m| lambda.dim(m) + dhat.get(m).copied().unwrap_or(1) - 1)
            .collect(),
    );
    outer.iter().filter(|mu| !lambda.contains(mu)).collect()
}

/// Look-ahead slab in mode `mode`: `[d_1] x .. x [d_m : d_m + q] x .. x [d_M]`.
/// Modes past the active count contribute `{0}` unless they are the slab mode.
pub fn lookahead_slab(
    lambda: &MultiIndexSet,
    mode: usize,
    q: usize,
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    if q < 1 || q + 1 > cap {
        return Err(Error::InvalidLookahead { mode, q, max: cap.saturating_sub(1) });
    }
    let modes = lambda.modes().max(mode + 1);
    let lo = lambda.dim(mode);
    let ranges: Vec<usize> = (0..modes)
        .map(|m| if m == mode { q } else { lambda.dim(m) })
        .collect();
    let shape = MultiIndexSet::new(ranges);
    Ok(shape
        .iter()
        .map(|mut mu| {
            mu[mode] += lo;
            mu
        })
        .collect())
}

/// All orthonormal Hermite values `P_0(y) .. P_n(y)` under N(0, variance).
pub fn hermite_all(variance: f64, n: usize, y: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    hermite_fill(variance, n, y, &mut out);
    out
}

/// Appends `P_0(y) .. P_n(y)` to `out`.
pub fn hermite_fill(variance: f64, n: usize, y: f64, out: &mut Vec<f64>) {
    let t = y / variance.sqrt();
    let mut prev = 0.0;
    let mut cur = 1.0;
    out.push(cur);
    for k in 0..n {
        let next = (t * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        out.push(cur);
    }
}

/// Degree-`degree` Hermite polynomial orthonormal under N(0, variance).
pub fn hermite_eval(variance: f64, degree: usize, y: f64) -> f64 {
    assert!(degree <= MAX_DEGREE, "Hermite degree {degree} exceeds cap {MAX_DEGREE}");
    *hermite_all(variance, degree, y).last().unwrap()
}

fn triple_support(i: usize, j: usize, k: usize) -> bool {
    let sum = i + j + k;
    sum % 2 == 0 && 2 * i.max(j).max(k) <= sum
}

/// `int P_i P_j P_k dpi` for orthonormal Hermite polynomials under
/// N(0, variance). The value does not depend on the variance; the Gauss rule
/// runs on the standardized variable.
pub fn triple_product_1d(variance: f64, i: usize, j: usize, k: usize) -> f64 {
    let _ = variance;
    if !triple_support(i, j, k) {
        return 0.0;
    }
    let n = (i + j + k).div_ceil(2) + 2;
    let rule = gauss_hermite(n);
    let top = i.max(j).max(k);
    let mut vals = Vec::with_capacity(top + 1);
    let mut acc = 0.0;
    for (y, w) in rule.nodes.iter().zip(&rule.weights) {
        vals.clear();
        hermite_fill(1.0, top, *y, &mut vals);
        acc += w * vals[i] * vals[j] * vals[k];
    }
    acc
}

/// Dense table of one-dimensional triple products `tau_{ijk}` for indices
/// below `size`. One table serves every mode since the values are
/// variance independent.
#[derive(Debug, Clone)]
pub struct TripleProductTable {
    size: usize,
    data: Vec<f64>,
}

impl TripleProductTable {
    pub fn new(size: usize) -> Self {
        let mut data = vec![0.0; size * size * size];
        // group entries by the node count their Gauss rule needs
        let mut rules: HashMap<usize, (Vec<f64>, Vec<Vec<f64>>)> = HashMap::new();
        for i in 0..size {
            for j in i..size {
                for k in j..size {
                    if !triple_support(i, j, k) {
                        continue;
                    }
                    let n = (i + j + k).div_ceil(2) + 2;
                    let (w, p) = rules.entry(n).or_insert_with(|| {
                        let r = gauss_hermite(n);
                        let p = r.nodes.iter().map(|&y| hermite_all(1.0, size, y)).collect();
                        (r.weights, p)
                    });
                    let v: f64 = w.iter().zip(p.iter()).map(|(w, p)| w * p[i] * p[j] * p[k]).sum();
                    for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                        data[(a * size + b) * size + c] = v;
                    }
                }
            }
        }
        TripleProductTable { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.size + j) * self.size + k]
    }

    /// Multi-index triple product as the product over modes.
    pub fn multi(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        let n = a.len().max(b.len()).max(c.len());
        let at = |v: &[usize], m: usize| v.get(m).copied().unwrap_or(0);
        (0..n).map(|m| self.get(at(a, m), at(b, m), at(c, m))).product()
    }
}

/// Per-mode sup-norms of the exponent modes together with `rho` and
/// `theta`; `sigma_m(r) = exp(r |gamma_m|_inf)`.
#[derive(Debug, Clone)]
pub struct ModeScaling {
    pub gamma_sup: Vec<f64>,
    pub rho: f64,
    pub theta: f64,
}

impl ModeScaling {
    pub fn new(gamma_sup: Vec<f64>, rho: f64, theta: f64) -> Self {
        ModeScaling { gamma_sup, rho, theta }
    }

    pub fn modes(&self) -> usize {
        self.gamma_sup.len()
    }

    /// `sigma_m(r)`; modes beyond the field are unscaled.
    pub fn sigma(&self, m: usize, r: f64) -> f64 {
        self.gamma_sup.get(m).map_or(1.0, |g| (r * g).exp())
    }

    /// Standard deviation of the orthonormality measure of mode `m`.
    pub fn weight_sigma(&self, m: usize) -> f64 {
        self.sigma(m, self.theta * self.rho)
    }

    pub fn weight_variance(&self, m: usize) -> f64 {
        self.weight_sigma(m).powi(2)
    }

    /// `c_{alpha,m}` such that `int zeta_m^alpha dpi_0 = 1 / c_{alpha,m}`.
    pub fn moment_constant(&self, m: usize, alpha: f64) -> Result<f64> {
        let s = self.weight_sigma(m);
        let arg = alpha + (1.0 - alpha) * s * s;
        if arg <= 0.0 {
            return Err(Error::DivergentMoment { alpha, mode: m, sigma: s });
        }
        Ok(s.powf(alpha - 1.0) * arg.sqrt())
    }

    /// `int zeta^alpha dpi_0` over all modes.
    pub fn zeta_moment(&self, alpha: f64) -> Result<f64> {
        let mut v = 1.0;
        for m in 0..self.modes() {
            v /= self.moment_constant(m, alpha)?;
        }
        Ok(v)
    }

    /// `|zeta^2 - zeta|_{pi_0}`.
    pub fn zeta_defect(&self) -> Result<f64> {
        let z4 = self.zeta_moment(4.0)?;
        let z3 = self.zeta_moment(3.0)?;
        let z2 = self.zeta_moment(2.0)?;
        Ok((z4 + z2 - 2.0 * z3).max(0.0).sqrt())
    }

    /// `zeta_m(y)`: density of N(0, sigma_m^2) relative to N(0, 1).
    pub fn zeta_mode(&self, m: usize, y: f64) -> f64 {
        let s = self.weight_sigma(m);
        (0.5 * y * y * (1.0 - 1.0 / (s * s))).exp() / s
    }
}

/// Doubly orthogonal transform of one mode: `Z^T G1 Z = I`,
/// `Z^T G2 Z = diag(c^2)`.
#[derive(Debug, Clone)]
pub struct DoublyOrthogonalTransform {
    pub z: DMatrix<f64>,
    /// `G1 Z`; its transpose maps Hermite coefficients to transformed ones.
    pub w: DMatrix<f64>,
    pub c: Vec<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
}

impl DoublyOrthogonalTransform {
    pub fn size(&self) -> usize {
        self.c.len()
    }

    /// `sum_nu c_nu^2 (sum_mu v_mu z_{mu nu})^2`, i.e. `|sum v_mu P_mu zeta|^2`.
    pub fn weighted_sq_norm(&self, v: &[f64]) -> Result<f64> {
        let n = self.size();
        if v.len() > n {
            if let Some(last) = v.iter().rposition(|x| *x != 0.0) {
                if last >= n {
                    return Err(Error::IndexOutOfRange(vec![last]));
                }
            }
        }
        let mut total = 0.0;
        for nu in 0..n {
            let s: f64 = v.iter().take(n).enumerate().map(|(mu, x)| x * self.w[(mu, nu)]).sum();
            total += self.c[nu] * self.c[nu] * s * s;
        }
        Ok(total)
    }
}

/// Gram matrix `int P_i P_j zeta^alpha dpi_0` for `alpha` in {1, 2}.
fn zeta_gram(scaling: &ModeScaling, m: usize, n: usize, alpha: f64) -> Result<DMatrix<f64>> {
    let s2 = scaling.weight_variance(m);
    let arg = alpha + (1.0 - alpha) * s2;
    let c = scaling.moment_constant(m, alpha)?;
    // zeta^alpha pi_0 is proportional to N(0, v) with v = s^2 / arg
    let v = s2 / arg;
    let rule = gauss_hermite_scaled((2 * n).div_ceil(2) + 2, v);
    let mut g = DMatrix::zeros(n, n);
    for (y, w) in rule.nodes.iter().zip(&rule.weights) {
        let p = hermite_all(s2, n - 1, *y);
        for i in 0..n {
            for j in 0..=i {
                g[(i, j)] += w * p[i] * p[j] / c;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(g)
}

/// Per-mode doubly orthogonal block of size `n`.
pub fn doubly_orthogonal(scaling: &ModeScaling, mode: usize, n: usize) -> Result<DoublyOrthogonalTransform> {
    assert!(n >= 1);
    if scaling.weight_sigma(mode) == 1.0 {
        let id = DMatrix::identity(n, n);
        return Ok(DoublyOrthogonalTransform {
            z: id.clone(),
            w: id.clone(),
            c: vec![1.0; n],
            g1: id.clone(),
            g2: id,
        });
    }
    let g1 = zeta_gram(scaling, mode, n, 1.0)?;
    let g2 = zeta_gram(scaling, mode, n, 2.0)?;
    let chol = g1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown(format!("G1 of mode {mode} not positive definite")))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalBreakdown("singular Cholesky factor".into()))?;
    let mut a = &linv * &g2 * linv.transpose();
    a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].partial_cmp(&eig.eigenvalues[y]).unwrap());
    let zfull = linv.transpose() * &eig.eigenvectors;
    let mut z = DMatrix::zeros(n, n);
    let mut c = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        let lam = eig.eigenvalues[k];
        if lam <= 0.0 {
            return Err(Error::NumericalBreakdown(format!("nonpositive eigenvalue {lam:e}")));
        }
        c.push(lam.sqrt());
        let mut v = zfull.column(k).into_owned();
        let scale = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                v = -v;
            }
        }
        z.set_column(col, &v);
    }
    let w = &g1 * &z;
    Ok(DoublyOrthogonalTransform { z, w, c, g1, g2 })
}

/// Applies the matrix `mat` (rows `r`, cols `dims[mode]`) along `mode` of a
/// tensor with shape `dims` (last mode fastest) and `ncols` trailing scalar
/// components. Returns the new tensor with `dims[mode]` replaced by `r`.
pub fn mode_product(data: &[f64], dims: &[usize], ncols: usize, mode: usize, mat: &DMatrix<f64>) -> Vec<f64> {
    let n = dims[mode];
    assert_eq!(mat.ncols(), n);
    let r = mat.nrows();
    let outer: usize = dims[..mode].iter().product();
    let inner: usize = dims[mode + 1..].iter().product::<usize>() * ncols;
    let mut out = vec![0.0; outer * r * inner];
    for o in 0..outer {
        let src = &data[o * n * inner..(o + 1) * n * inner];
        let dst = &mut out[o * r * inner..(o + 1) * r * inner];
        for i in 0..r {
            let d = &mut dst[i * inner..(i + 1) * inner];
            for k in 0..n {
                let a = mat[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let s = &src[k * inner..(k + 1) * inner];
                for (x, y) in d.iter_mut().zip(s) {
                    *x += a * y;
                }
            }
        }
    }
    out
}

/// `(mats[0] x .. x mats[M-1]) x` for a vector laid out over the tensor
/// block of input sizes `mats[m].ncols()`.
pub fn kron_apply(x: &[f64], mats: &[&DMatrix<f64>]) -> Vec<f64> {
    let mut dims: Vec<usize> = mats.iter().map(|m| m.ncols()).collect();
    assert_eq!(x.len(), dims.iter().product::<usize>());
    let mut cur = x.to_vec();
    for (m, mat) in mats.iter().enumerate() {
        if mat.nrows() == 1 && mat.ncols() == 1 {
            let a = mat[(0, 0)];
            cur.iter_mut().for_each(|v| *v *= a);
            continue;
        }
        cur = mode_product(&cur, &dims, 1, m, mat);
        dims[m] = mat.nrows();
    }
    cur
}

/// Tensorized doubly orthogonal transform over a full tensor block.
#[derive(Debug, Clone)]
pub struct TensorTransform {
    dims: Vec<usize>,
    blocks: Vec<DoublyOrthogonalTransform>,
    wt: Vec<DMatrix<f64>>,
}

impl TensorTransform {
    pub fn new(scaling: &ModeScaling, dims: &[usize]) -> Result<Self> {
        let blocks = dims
            .iter()
            .enumerate()
            .map(|(m, &n)| doubly_orthogonal(scaling, m, n))
            .collect::<Result<Vec<_>>>()?;
        let wt = blocks.iter().map(|b| b.w.transpose()).collect();
        Ok(TensorTransform { dims: dims.to_vec(), blocks, wt })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block(&self, m: usize) -> &DoublyOrthogonalTransform {
        &self.blocks[m]
    }

    /// Squared weights `c_nu^2` in enumeration order of the block.
    pub fn c_squared(&self) -> Vec<f64> {
        let set = MultiIndexSet::new(self.dims.clone());
        set.iter()
            .map(|nu| nu.iter().enumerate().map(|(m, &k)| self.blocks[m].c[k].powi(2)).product())
            .collect()
    }

    /// Weighted squared norm of data laid out over the block with `ncols`
    /// components per index; components add.
    pub fn weighted_sq_norm(&self, data: &[f64], ncols: usize) -> f64 {
        let mut cur = data.to_vec();
        for m in 0..self.dims.len() {
            cur = mode_product(&cur, &self.dims, ncols, m, &self.wt[m]);
        }
        let c2 = self.c_squared();
        cur.chunks(ncols).zip(&c2).map(|(v, c)| c * v.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    /// Weighted norm of a sparse coefficient map.
    pub fn weighted_sq_norm_map(&self, coeffs: &[(Vec<usize>, f64)]) -> Result<f64> {
        let set = MultiIndexSet::new(self.dims.clone());
        let mut dense = vec![0.0; set.len()];
        for (mu, v) in coeffs {
            if mu.len() > self.dims.len() && mu[self.dims.len()..].iter().any(|&k| k > 0) {
                return Err(Error::IndexOutOfRange(mu.clone()));
            }
            let head = &mu[..mu.len().min(self.dims.len())];
            let pos = set.position(head).ok_or_else(|| Error::IndexOutOfRange(mu.clone()))?;
            dense[pos] += v;
        }
        Ok(self.weighted_sq_norm(&dense, 1))
    }

    /// `|P_mu zeta|_{pi_0}`.
    pub fn basis_norm(&self, mu: &[usize]) -> f64 {
        mu.iter()
            .enumerate()
            .map(|(m, &k)| self.blocks[m].g2[(k, k)])
            .product::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn closed_form(i: usize, j: usize, k: usize) -> f64 {
        if !triple_support(i, j, k) {
            return 0.0;
        }
        let s = (i + j + k) / 2;
        (fact(i) * fact(j) * fact(k)).sqrt() / (fact(s - i) * fact(s - j) * fact(s - k))
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_eval(1.0, 0, 3.7), 1.0);
        assert!((hermite_eval(1.0, 1, 2.0) - 2.0).abs() < 1e-15);
        // Gram-Schmidt of {1, y, y^2} under N(0,4): (y^2 - 4) / (4 sqrt 2)
        let expect = (4.0 - 4.0) / (4.0 * 2f64.sqrt());
        assert!((hermite_eval(4.0, 2, 2.0) - expect).abs() < 1e-15);
        let expect3 = (9.0 - 4.0) / (4.0 * 2f64.sqrt());
        assert!((hermite_eval(4.0, 2, 3.0) - expect3).abs() < 1e-14);
    }

    #[test]
    fn hermite_orthonormal_under_scaled_measure() {
        let v = 1.7;
        let rule = gauss_hermite_scaled(20, v);
        for i in 0..10 {
            for j in 0..10 {
                let g: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(y, w)| w * hermite_eval(v, i, *y) * hermite_eval(v, j, *y))
                    .sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-11, "{i} {j} {g}");
            }
        }
    }

    #[test]
    fn triple_product_examples() {
        assert!((triple_product_1d(3.0, 0, 0, 0) - 1.0).abs() < 1e-14);
        assert!((triple_product_1d(0.5, 0, 1, 1) - 1.0).abs() < 1e-14);
        assert!((triple_product_1d(1.0, 1, 1, 2) - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(triple_product_1d(2.0, 1, 1, 1), 0.0);
        assert_eq!(triple_product_1d(2.0, 0, 1, 5), 0.0);
    }

    #[test]
    fn table_matches_closed_form() {
        let t = TripleProductTable::new(16);
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let e = closed_form(i, j, k);
                    assert!((t.get(i, j, k) - e).abs() <= 1e-10 * e.abs().max(1.0), "{i}{j}{k}");
                }
            }
        }
        assert_eq!(t.multi(&[1, 0], &[1, 2], &[0, 2]), 1.0);
    }

    #[test]
    fn zeta_moment_examples() {
        let s = ModeScaling::new(vec![1.1f64.ln()], 1.0, 1.0);
        assert_eq!(s.zeta_moment(0.0).unwrap(), 1.0);
        assert!((s.zeta_moment(1.0).unwrap() - 1.0).abs() < 1e-15);
        let expect = 1.0 / (1.1 * (2.0 - 1.21f64).sqrt());
        assert!((s.zeta_moment(2.0).unwrap() - expect).abs() < 1e-14);
        let wide = ModeScaling::new(vec![1.5f64.ln()], 1.0, 1.0);
        assert!(matches!(wide.zeta_moment(2.0), Err(Error::DivergentMoment { .. })));
    }

    #[test]
    fn zeta_moment_against_quadrature() {
        let rule = gauss_hermite(200);
        for sigma in [1.0, 1.05, 1.1, 1.2, 1.3] {
            let s = ModeScaling::new(vec![f64::ln(sigma)], 1.0, 1.0);
            for alpha in [0.5, 2.0, 3.0] {
                // skip integrands too wide for a plain Gauss-Hermite sum
                if 1.0 - alpha * (1.0 - 1.0 / (sigma * sigma)) < 0.4 {
                    continue;
                }
                let q: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(y, w)| w * s.zeta_mode(0, *y).powf(alpha))
                    .sum();
                let z = s.zeta_moment(alpha).unwrap();
                assert!((q - z).abs() < 1e-10, "sigma {sigma} alpha {alpha}: {q} vs {z}");
            }
        }
    }

    #[test]
    fn zeta_defect_vanishes_without_weight() {
        let s = ModeScaling::new(vec![0.3, 0.2], 1.0, 0.0);
        assert_eq!(s.zeta_defect().unwrap(), 0.0);
        let mut prev = f64::INFINITY;
        for theta in [0.4, 0.3, 0.2, 0.1, 0.05] {
            let d = ModeScaling::new(vec![0.3], 1.0, theta).zeta_defect().unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn boundary_examples() {
        let b = index_set_boundary(&MultiIndexSet::new(vec![2]), &[3]);
        assert_eq!(b, vec![vec![2], vec![3]]);
        let b = index_set_boundary(&MultiIndexSet::new(vec![2, 2]), &[2, 2]);
        assert_eq!(b, vec![vec![0, 2], vec![1, 2], vec![2, 0], vec![2, 1], vec![2, 2]]);
        assert!(index_set_boundary(&MultiIndexSet::new(vec![3, 2]), &[1, 1]).is_empty());
    }

    #[test]
    fn slab_examples() {
        let l2 = MultiIndexSet::new(vec![2]);
        assert_eq!(lookahead_slab(&l2, 0, 1, 3).unwrap(), vec![vec![2]]);
        let l22 = MultiIndexSet::new(vec![2, 2]);
        let s = lookahead_slab(&l22, 1, 2, 5).unwrap();
        assert_eq!(s, vec![vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]]);
        assert_eq!(lookahead_slab(&l2, 1, 1, 3).unwrap(), vec![vec![0, 1], vec![1, 1]]);
        assert!(matches!(lookahead_slab(&l2, 0, 3, 3), Err(Error::InvalidLookahead { .. })));
        assert!(matches!(lookahead_slab(&l2, 0, 0, 3), Err(Error::InvalidLookahead { .. })));
    }

    #[test]
    fn index_set_enumeration() {
        let s = MultiIndexSet::new(vec![2, 3]);
        let all: Vec<_> = s.iter().collect();
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        for (p, mu) in all.iter().enumerate() {
            assert_eq!(s.position(mu), Some(p));
        }
        assert!(s.contains(&[1, 2, 0]));
        assert!(!s.contains(&[1, 2, 1]));
    }

    #[test]
    fn transform_identity_without_weight() {
        let s = ModeScaling::new(vec![0.4], 1.0, 0.0);
        let t = doubly_orthogonal(&s, 0, 5).unwrap();
        assert_eq!(t.z, DMatrix::identity(5, 5));
        assert!(t.c.iter().all(|&c| c == 1.0));
        let v = [0.3, -1.0, 2.0];
        assert!((t.weighted_sq_norm(&v).unwrap() - 5.09).abs() < 1e-14);
    }

    #[test]
    fn transform_diagonalizes() {
        let s = ModeScaling::new(vec![1.1f64.ln()], 1.0, 1.0);
        let t = doubly_orthogonal(&s, 0, 6).unwrap();
        let a = t.z.transpose() * &t.g1 * &t.z;
        let b = t.z.transpose() * &t.g2 * &t.z;
        for i in 0..6 {
            for j in 0..6 {
                let e1 = if i == j { 1.0 } else { 0.0 };
                let e2 = if i == j { t.c[i] * t.c[i] } else { 0.0 };
                assert!((a[(i, j)] - e1).abs() < 1e-12);
                assert!((b[(i, j)] - e2).abs() < 1e-12);
            }
        }
        for w in t.c.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(matches!(t.weighted_sq_norm(&[0.0; 7]), Ok(_)));
        assert!(matches!(t.weighted_sq_norm(&[0., 0., 0., 0., 0., 0., 1.]), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn transform_norm_matches_quadrature() {
        let s = ModeScaling::new(vec![1.1f64.ln()], 1.0, 1.0);
        let t = doubly_orthogonal(&s, 0, 4).unwrap();
        let v = [0.7, 0.0, -1.3];
        let rule = gauss_hermite(120);
        let q: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(y, w)| {
                let p = hermite_all(s.weight_variance(0), 2, *y);
                let f = v[0] * p[0] + v[2] * p[2];
                w * (f * s.zeta_mode(0, *y)).powi(2)
            })
            .sum();
        assert!((t.weighted_sq_norm(&v).unwrap() - q).abs() < 1e-10);
    }

    #[test]
    fn tensor_transform_agrees_with_modes() {
        let s = ModeScaling::new(vec![0.08, 0.05], 1.0, 1.0);
        let tt = TensorTransform::new(&s, &[3, 4]).unwrap();
        let set = MultiIndexSet::new(vec![3, 4]);
        // rank one data: norm factorizes over modes
        let a = [0.5, -0.2, 0.1];
        let b = [1.0, 0.3, 0.0, -0.4];
        let data: Vec<f64> = set.iter().map(|mu| a[mu[0]] * b[mu[1]]).collect();
        let n0 = tt.block(0).weighted_sq_norm(&a).unwrap();
        let n1 = tt.block(1).weighted_sq_norm(&b).unwrap();
        assert!((tt.weighted_sq_norm(&data, 1) - n0 * n1).abs() < 1e-12);
        let sparse = vec![(vec![0, 0], 1.0)];
        let n = tt.weighted_sq_norm_map(&sparse).unwrap();
        assert!((n - tt.basis_norm(&[0, 0]).powi(2)).abs() < 1e-12);
        assert!(tt.weighted_sq_norm_map(&[(vec![3, 0], 1.0)]).is_err());
    }
}
