//! Stochastic Galerkin system over `V_N(Lambda_d; T, p)`.
//!
//! The coefficient `a_N` lives on a fixed coarse coefficient mesh and each
//! nodal coefficient factorizes over modes. The operator is therefore applied
//! as `sum_i K_i (x)_m C^m_i`, where `K_i` is the stiffness matrix weighted by
//! the coarse nodal function `psi_i` and `C^m_i[beta, mu] =
//! sum_k a_{i,m,k} tau(beta, k, mu)`. Summing over the coefficient index
//! set, this is the operator `sum_alpha K_alpha (x) G_alpha`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::chaos::{kron_apply, MultiIndexSet, TripleProductTable};
use crate::error::Result;
use crate::fem::{load, stiffness, FeSpace};
use crate::field::DiscreteCoefficient;
use crate::quadrature::TriangleRule;
use crate::sparse::{pcg, CgReport, Cholesky, Csr};

/// Dense coefficient tensor `w[j, mu]`, rows over all dofs (Dirichlet rows
/// zero), columns over the index set in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor {
    pub set: MultiIndexSet,
    pub n_dofs: usize,
    pub data: Vec<f64>,
}

impl CoeffTensor {
    pub fn zeros(n_dofs: usize, set: MultiIndexSet) -> Self {
        let data = vec![0.0; n_dofs * set.len()];
        CoeffTensor { set, n_dofs, data }
    }

    pub fn width(&self) -> usize {
        self.set.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let l = self.width();
        &self.data[j * l..(j + 1) * l]
    }

    pub fn get(&self, j: usize, mu: &[usize]) -> f64 {
        self.set.position(mu).map_or(0.0, |p| self.data[j * self.width() + p])
    }

    /// Spatial coefficient vector of mode `mu`.
    pub fn column(&self, mu: &[usize]) -> Vec<f64> {
        match self.set.position(mu) {
            Some(p) => (0..self.n_dofs).map(|j| self.data[j * self.width() + p]).collect(),
            None => vec![0.0; self.n_dofs],
        }
    }

    /// Same function over a larger index set (zero padding).
    pub fn embed(&self, set: &MultiIndexSet) -> CoeffTensor {
        let mut out = CoeffTensor::zeros(self.n_dofs, set.clone());
        for (p, mu) in self.set.iter().enumerate() {
            let q = set.position(&mu).expect("target index set must contain the source");
            for j in 0..self.n_dofs {
                out.data[j * set.len() + q] = self.data[j * self.width() + p];
            }
        }
        out
    }

    /// Spatial prolongation `P w` with `P` a fine-by-coarse matrix.
    pub fn prolongate(&self, p: &Csr) -> CoeffTensor {
        CoeffTensor { set: self.set.clone(), n_dofs: p.nrows, data: p.matmul_rows(&self.data, self.width()) }
    }
}

/// `C^m_i[beta, mu] = sum_k a_{i,m,k} tau(beta, k, mu)` for `beta < rows`,
/// `mu < cols`.
pub fn coupling_matrix(
    coef: &DiscreteCoefficient,
    table: &TripleProductTable,
    node: usize,
    m: usize,
    rows: usize,
    cols: usize,
) -> DMatrix<f64> {
    let kmax = coef.dhat.get(m).copied().unwrap_or(1);
    DMatrix::from_fn(rows, cols, |b, mu| {
        (0..kmax).map(|k| coef.factor(node, m, k) * table.get(b, k, mu)).sum()
    })
}

/// Coarse nodal functions and gradients at a physical point of coarse
/// triangle `k`.
pub(crate) fn coarse_basis(coef: &DiscreteCoefficient, k: usize, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let g = &coef.space.geoms[k];
    let (v, gr, _) = coef.space.reference.eval_all(g.to_reference(x));
    (v, gr.into_iter().map(|d| g.gradient(d)).collect())
}

/// Quadrature data of one fine element.
pub(crate) struct ElementPoints {
    pub weight: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub psi: Vec<Vec<f64>>,
    pub dpsi: Vec<Vec<[f64; 2]>>,
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<[f64; 2]>>,
    pub lap: Vec<Vec<f64>>,
}

type RefTab = (Vec<f64>, Vec<[f64; 2]>, Vec<[f64; 3]>);

pub(crate) fn reference_tables(space: &FeSpace, rule: &TriangleRule) -> Vec<RefTab> {
    rule.points.iter().map(|&xi| space.reference.eval_all(xi)).collect()
}

pub(crate) fn element_points(
    space: &FeSpace,
    coef: &DiscreteCoefficient,
    t: usize,
    k: usize,
    rule: &TriangleRule,
    tabs: &[RefTab],
) -> ElementPoints {
    let g = &space.geoms[t];
    let nq = rule.points.len();
    let mut e = ElementPoints {
        weight: Vec::with_capacity(nq),
        x: Vec::with_capacity(nq),
        psi: Vec::with_capacity(nq),
        dpsi: Vec::with_capacity(nq),
        phi: Vec::with_capacity(nq),
        dphi: Vec::with_capacity(nq),
        lap: Vec::with_capacity(nq),
    };
    for (q, (v, gr, h)) in tabs.iter().enumerate() {
        let x = g.to_physical(rule.points[q]);
        let (psi, dpsi) = coarse_basis(coef, k, x);
        e.weight.push(rule.weights[q] * g.area);
        e.x.push(x);
        e.psi.push(psi);
        e.dpsi.push(dpsi);
        e.phi.push(v.clone());
        e.dphi.push(gr.iter().map(|&d| g.gradient(d)).collect());
        e.lap.push(h.iter().map(|&d| g.laplacian(d)).collect());
    }
    e
}

/// Sparse pairing of coefficient nodes with trial dofs: row `a` holds
/// `int psi_i grad phi_a . grad phi_b` for every pair `(i, b)`.
#[derive(Debug, Clone)]
pub struct NodeStiffness {
    /// `(coefficient node, free trial dof)` per pair id.
    pub pairs: Vec<(usize, usize)>,
    /// Free-dof rows, pair columns.
    pub rows: Csr,
}

impl NodeStiffness {
    pub fn new(space: &FeSpace, coef: &DiscreteCoefficient, ancestor: &[usize]) -> Self {
        let rule = TriangleRule::with_degree(3 * space.order.max(coef.space.order) - 2);
        let tabs = reference_tables(space, &rule);
        let n = space.n_local();
        let locals: Vec<Vec<(usize, usize, usize, f64)>> = (0..space.elem_dofs.len())
            .into_par_iter()
            .map(|t| {
                let k = ancestor[t];
                let e = element_points(space, coef, t, k, &rule, &tabs);
                let cd = &coef.space.elem_dofs[k];
                let sd = &space.elem_dofs[t];
                let nc = cd.len();
                let mut local = vec![0.0; nc * n * n];
                for q in 0..e.weight.len() {
                    for i in 0..nc {
                        let wi = e.weight[q] * e.psi[q][i];
                        for a in 0..n {
                            let ga = e.dphi[q][a];
                            for b in 0..n {
                                let gb = e.dphi[q][b];
                                local[(i * n + a) * n + b] += wi * (ga[0] * gb[0] + ga[1] * gb[1]);
                            }
                        }
                    }
                }
                let mut out = Vec::new();
                for i in 0..nc {
                    for a in 0..n {
                        let Some(fa) = space.free_index[sd[a]] else { continue };
                        for b in 0..n {
                            let Some(fb) = space.free_index[sd[b]] else { continue };
                            let v = local[(i * n + a) * n + b];
                            if v != 0.0 {
                                out.push((fa, cd[i], fb, v));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let mut pair_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut trip = Vec::new();
        for list in &locals {
            for &(a, i, b, v) in list {
                let id = *pair_id.entry((i, b)).or_insert_with(|| {
                    pairs.push((i, b));
                    pairs.len() - 1
                });
                trip.push((a, id, v));
            }
        }
        let rows = Csr::from_triplets(space.n_free(), pairs.len(), &trip);
        NodeStiffness { pairs, rows }
    }
}

/// Matrix-free stochastic Galerkin operator on free dofs.
pub struct GalerkinOperator {
    pub set: MultiIndexSet,
    pub n_free: usize,
    pub nodes: NodeStiffness,
    /// Per coefficient node: coupling matrices of the active modes.
    coupling: Vec<Vec<DMatrix<f64>>>,
    /// Per coefficient node: product of the mean factors of the inactive
    /// coefficient modes.
    scale: Vec<f64>,
    mean_stiffness: Csr,
    precond: Cholesky,
}

impl GalerkinOperator {
    pub fn new(
        space: &FeSpace,
        coef: &DiscreteCoefficient,
        ancestor: &[usize],
        set: &MultiIndexSet,
        table: &TripleProductTable,
    ) -> Result<Self> {
        let nodes = NodeStiffness::new(space, coef, ancestor);
        Self::with_nodes(space, coef, nodes, set, table)
    }

    pub fn with_nodes(
        space: &FeSpace,
        coef: &DiscreteCoefficient,
        nodes: NodeStiffness,
        set: &MultiIndexSet,
        table: &TripleProductTable,
    ) -> Result<Self> {
        let active = set.modes();
        let coupling: Vec<Vec<DMatrix<f64>>> = (0..coef.n_nodes())
            .map(|i| {
                (0..active)
                    .map(|m| coupling_matrix(coef, table, i, m, set.dim(m), set.dim(m)))
                    .collect()
            })
            .collect();
        let scale: Vec<f64> = (0..coef.n_nodes())
            .map(|i| (active..coef.n_modes()).map(|m| coef.factor(i, m, 0)).product())
            .collect();
        let mut trip = Vec::new();
        for a in 0..nodes.rows.nrows {
            for (p, v) in nodes.rows.row(a) {
                let (i, b) = nodes.pairs[p];
                trip.push((a, b, v * coef.mean(i)));
            }
        }
        let mean_stiffness = Csr::from_triplets(space.n_free(), space.n_free(), &trip);
        let precond = Cholesky::new(&mean_stiffness)?;
        Ok(GalerkinOperator { set: set.clone(), n_free: space.n_free(), nodes, coupling, scale, mean_stiffness, precond })
    }

    pub fn width(&self) -> usize {
        self.set.len()
    }

    pub fn mean_stiffness(&self) -> &Csr {
        &self.mean_stiffness
    }

    /// `A w` for `w` row-major over free dofs.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let l = self.width();
        let pairs = &self.nodes.pairs;
        let mut wc = vec![0.0; pairs.len() * l];
        wc.par_chunks_mut(l).enumerate().for_each(|(p, out)| {
            let (i, b) = pairs[p];
            let mats: Vec<&DMatrix<f64>> = self.coupling[i].iter().collect();
            let v = kron_apply(&w[b * l..(b + 1) * l], &mats);
            for (o, x) in out.iter_mut().zip(v) {
                *o = self.scale[i] * x;
            }
        });
        let mut y = vec![0.0; self.n_free * l];
        y.par_chunks_mut(l).enumerate().for_each(|(a, out)| {
            for (p, v) in self.nodes.rows.row(a) {
                for (o, x) in out.iter_mut().zip(&wc[p * l..(p + 1) * l]) {
                    *o += v * x;
                }
            }
        });
        y
    }

    /// Mean-field preconditioner: `K_0^{-1}` on every stochastic column.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut z = r.to_vec();
        self.precond.solve_rows(&mut z, self.width());
        z
    }

    /// Diagonal of the operator, row-major like the unknowns.
    pub fn diagonal(&self) -> Vec<f64> {
        let l = self.width();
        let dims = self.set.dims().to_vec();
        let mut d = vec![0.0; self.n_free * l];
        for a in 0..self.n_free {
            for (p, v) in self.nodes.rows.row(a) {
                let (i, b) = self.nodes.pairs[p];
                if b != a {
                    continue;
                }
                for (pos, mu) in MultiIndexSet::new(dims.clone()).iter().enumerate() {
                    let c: f64 = mu.iter().enumerate().map(|(m, &k)| self.coupling[i][m][(k, k)]).product();
                    d[a * l + pos] += v * self.scale[i] * c;
                }
            }
        }
        d
    }

    /// `|v_j (x) P_mu|_B^2` for every column `v_j` (sparse over free dofs)
    /// and every `mu`, row-major `[j][mu]`.
    pub fn basis_energy(&self, cols: &[Vec<(usize, f64)>]) -> Vec<f64> {
        let l = self.width();
        let dims = self.set.dims().to_vec();
        let diag_c: Vec<Vec<f64>> = self
            .coupling
            .iter()
            .zip(&self.scale)
            .map(|(mats, s)| {
                MultiIndexSet::new(dims.clone())
                    .iter()
                    .map(|mu| s * mu.iter().enumerate().map(|(m, &k)| mats[m][(k, k)]).product::<f64>())
                    .collect()
            })
            .collect();
        cols.par_iter()
            .flat_map_iter(|col| {
                let val: HashMap<usize, f64> = col.iter().copied().collect();
                let mut per_node: HashMap<usize, f64> = HashMap::new();
                for &(a, va) in col {
                    for (p, v) in self.nodes.rows.row(a) {
                        let (i, b) = self.nodes.pairs[p];
                        if let Some(vb) = val.get(&b) {
                            *per_node.entry(i).or_insert(0.0) += va * v * vb;
                        }
                    }
                }
                let mut nodes: Vec<_> = per_node.into_iter().collect();
                nodes.sort_by_key(|e| e.0);
                let mut out = vec![0.0; l];
                for (i, k) in nodes {
                    for (o, c) in out.iter_mut().zip(&diag_c[i]) {
                        *o += k * c;
                    }
                }
                out
            })
            .collect()
    }

    /// Dense matrix of the operator; small instances only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_free * self.width();
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = self.apply(&e);
            e[c] = 0.0;
            for r in 0..n {
                a[(r, c)] = col[r];
            }
        }
        a
    }
}

/// Stiffness matrix of one coefficient function, restricted to free dofs.
pub fn assemble_stiffness(space: &FeSpace, a_mode: &[f64]) -> Csr {
    let k = stiffness(space, a_mode);
    k.restrict(&space.free_index, space.n_free(), &space.free_index, space.n_free())
}

/// Right-hand side `b[j, mu] = delta_{mu 0} int f phi_j` over all dofs.
pub fn assemble_rhs(space: &FeSpace, f: impl Fn([f64; 2]) -> f64, set: &MultiIndexSet) -> CoeffTensor {
    let b = load(space, f);
    let mut out = CoeffTensor::zeros(space.n_dofs, set.clone());
    let l = set.len();
    for (j, v) in b.into_iter().enumerate() {
        if !space.dirichlet[j] {
            out.data[j * l] = v;
        }
    }
    out
}

/// Gathers the free rows of a tensor.
pub fn free_rows(space: &FeSpace, w: &CoeffTensor) -> Vec<f64> {
    let l = w.width();
    let mut out = Vec::with_capacity(space.n_free() * l);
    for &d in &space.free_dofs {
        out.extend_from_slice(w.row(d));
    }
    out
}

/// Scatters free rows into a full tensor with zero Dirichlet rows.
pub fn scatter_rows(space: &FeSpace, set: &MultiIndexSet, free: &[f64]) -> CoeffTensor {
    let mut out = CoeffTensor::zeros(space.n_dofs, set.clone());
    let l = set.len();
    for (f, &d) in space.free_dofs.iter().enumerate() {
        out.data[d * l..(d + 1) * l].copy_from_slice(&free[f * l..(f + 1) * l]);
    }
    out
}

/// Preconditioned CG solve of `A u = b`.
pub fn solve(
    op: &GalerkinOperator,
    space: &FeSpace,
    rhs: &CoeffTensor,
    tol: f64,
    maxit: usize,
) -> Result<(CoeffTensor, CgReport)> {
    let b = free_rows(space, rhs);
    let (x, rep) = pcg(|v| op.apply(v), |r| op.precondition(r), &b, tol, maxit)?;
    Ok((scatter_rows(space, &op.set, &x), rep))
}

/// `B(v, w)` through the operator.
pub fn energy_product(op: &GalerkinOperator, space: &FeSpace, v: &CoeffTensor, w: &CoeffTensor) -> f64 {
    let av = op.apply(&free_rows(space, v));
    crate::sparse::dot(&av, &free_rows(space, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{expand_lognormal, AffineField};
    use crate::mesh::initial_lshape;
    use nalgebra::DVector;

    fn setup(h: f64, dhat: Vec<usize>, m_hat: usize) -> (FeSpace, DiscreteCoefficient, Vec<usize>) {
        let mesh = initial_lshape(h);
        let field = AffineField::benchmark(m_hat, 2.0);
        let scaling = field.scaling(1.0, 0.1);
        let coef = expand_lognormal(&field, &scaling, &dhat, &mesh, 1).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let anc: Vec<usize> = (0..mesh.n_triangles()).collect();
        (space, coef, anc)
    }

    #[test]
    fn unit_coefficient_decouples_modes() {
        let mesh = initial_lshape(0.25);
        let field = AffineField::zero();
        let coef = expand_lognormal(&field, &field.scaling(1.0, 0.1), &[], &mesh, 1).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let anc: Vec<usize> = (0..mesh.n_triangles()).collect();
        let set = MultiIndexSet::new(vec![3]);
        let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(4)).unwrap();
        let dense = op.to_dense();
        let k = assemble_stiffness(&space, &vec![1.0; space.n_dofs]);
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let expect = if r % 3 == c % 3 { k.get(r / 3, c / 3) } else { 0.0 };
                assert!((dense[(r, c)] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let (space, coef, anc) = setup(0.25, vec![3, 2], 2);
        let set = MultiIndexSet::new(vec![2, 2]);
        let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(5)).unwrap();
        let n = op.n_free * op.width();
        let v: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let w: Vec<f64> = (0..n).map(|i| ((i * 104729) % 17) as f64 - 8.0).collect();
        let a = crate::sparse::dot(&op.apply(&v), &w);
        let b = crate::sparse::dot(&v, &op.apply(&w));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        let dense = op.to_dense();
        let diag = op.diagonal();
        for i in 0..n {
            assert!((dense[(i, i)] - diag[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_matches_tensor_quadrature() {
        let (space, coef, anc) = setup(0.25, vec![3, 2], 2);
        let set = MultiIndexSet::new(vec![3, 2]);
        let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(6)).unwrap();
        let dense = op.to_dense();
        let l = set.len();
        let nf = space.n_free();
        let mut oracle = DMatrix::<f64>::zeros(nf * l, nf * l);
        let r0 = crate::quadrature::gauss_hermite_scaled(8, coef.scaling.weight_variance(0));
        let r1 = crate::quadrature::gauss_hermite_scaled(8, coef.scaling.weight_variance(1));
        for (y0, w0) in r0.nodes.iter().zip(&r0.weights) {
            for (y1, w1) in r1.nodes.iter().zip(&r1.weights) {
                let k = assemble_stiffness(&space, &coef.realization(&[*y0, *y1]));
                let p0 = crate::chaos::hermite_all(coef.scaling.weight_variance(0), 2, *y0);
                let p1 = crate::chaos::hermite_all(coef.scaling.weight_variance(1), 1, *y1);
                let pv: Vec<f64> = set.iter().map(|mu| p0[mu[0]] * p1[mu[1]]).collect();
                for a in 0..nf {
                    for (b, v) in k.row(a) {
                        for x in 0..l {
                            for z in 0..l {
                                oracle[(a * l + x, b * l + z)] += w0 * w1 * v * pv[x] * pv[z];
                            }
                        }
                    }
                }
            }
        }
        let scale = oracle.amax();
        let err = (&dense - &oracle).amax();
        assert!(scale > 0.0);
        assert!(err < 1e-11 * scale);
    }

    #[test]
    fn deterministic_solve_matches_dense() {
        let mesh = initial_lshape(0.25);
        let field = AffineField::zero();
        let coef = expand_lognormal(&field, &field.scaling(1.0, 0.1), &[], &mesh, 1).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let anc: Vec<usize> = (0..mesh.n_triangles()).collect();
        let set = MultiIndexSet::new(vec![1]);
        let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(2)).unwrap();
        let rhs = assemble_rhs(&space, |_| 1.0, &set);
        let (u, rep) = solve(&op, &space, &rhs, 1e-12, 100).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let k = assemble_stiffness(&space, &vec![1.0; space.n_dofs]);
        let kd = DMatrix::from_fn(k.nrows, k.ncols, |r, c| k.get(r, c));
        let b = DVector::from_vec(free_rows(&space, &rhs));
        let x = kd.lu().solve(&b).unwrap();
        for (f, &d) in space.free_dofs.iter().enumerate() {
            assert!((u.data[d] - x[f]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (space, coef, anc) = setup(0.25, vec![2], 1);
        let set = MultiIndexSet::new(vec![2]);
        let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(4)).unwrap();
        let rhs = CoeffTensor::zeros(space.n_dofs, set);
        let (u, rep) = solve(&op, &space, &rhs, 1e-10, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(u.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_energy_matches_dense() {
        let (space, coef, anc) = setup(0.25, vec![3, 2], 2);
        let set = MultiIndexSet::new(vec![2, 2]);
        let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(5)).unwrap();
        let dense = op.to_dense();
        let l = set.len();
        let cols: Vec<Vec<(usize, f64)>> = vec![vec![(0, 1.0), (3, -0.5)], vec![(2, 2.0)]];
        let got = op.basis_energy(&cols);
        for (j, col) in cols.iter().enumerate() {
            for mu in 0..l {
                let mut v = DVector::zeros(dense.nrows());
                for &(a, x) in col {
                    v[a * l + mu] = x;
                }
                let expect = v.dot(&(&dense * &v));
                assert!((got[j * l + mu] - expect).abs() < 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rhs_only_in_mean_column() {
        let (space, _, _) = setup(0.25, vec![2], 1);
        let set = MultiIndexSet::new(vec![3, 2]);
        let b = assemble_rhs(&space, |x| 1.0 + x[0], &set);
        for j in 0..space.n_dofs {
            for mu in set.iter().skip(1) {
                assert_eq!(b.get(j, &mu), 0.0);
            }
        }
        let zero = assemble_rhs(&space, |_| 0.0, &set);
        assert!(zero.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_and_columns() {
        let set = MultiIndexSet::new(vec![2]);
        let mut w = CoeffTensor::zeros(3, set);
        w.data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let big = w.embed(&MultiIndexSet::new(vec![3, 2]));
        assert_eq!(big.get(1, &[1, 0]), 4.0);
        assert_eq!(big.get(1, &[0, 1]), 0.0);
        assert_eq!(big.column(&[1]), vec![2.0, 4.0, 6.0]);
    }
}
