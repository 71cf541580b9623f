//! Residual a posteriori error estimator.
//!
//! With `r(w) = a_N grad w = sum_mu r_mu P_mu`, the deterministic part
//! collects element residuals and edge jumps of the modes in `Lambda_d`, the
//! stochastic part measures the modes on the boundary `Lambda_{d+dhat-1}
//! \ Lambda_d`. All stochastic norms carry the weight `zeta` under `pi_0` and
//! are evaluated with the per-mode Gram matrices `int P_i P_j zeta^2 dpi_0`
//! in their doubly orthogonal form.
//!
//! The fast path never forms `r_mu`: the coefficient factorizes per node, so
//! every weighted norm is a sum of Kronecker quadratic forms in the solution
//! coefficients. [`ResidualModes`] materializes the modes for small instances.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::chaos::{
    doubly_orthogonal, hermite_all, kron_apply, DoublyOrthogonalTransform, MultiIndexSet, TripleProductTable,
};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::field::DiscreteCoefficient;
use crate::galerkin::{coarse_basis, coupling_matrix, element_points, reference_tables, CoeffTensor};
use crate::mesh::Mesh2D;
use crate::quadrature::{gauss_hermite, gauss_legendre01, TriangleRule};

/// Right-hand side `f(x)`.
pub type Source<'a> = &'a (dyn Fn([f64; 2]) -> f64 + Sync);

/// Estimator values of one iterate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EstimatorReport {
    /// `eta_det,T` per element.
    pub volume: Vec<f64>,
    /// `eta_det,dT` per element.
    pub jump: Vec<f64>,
    pub eta_det: f64,
    /// `eta_sto(w, boundary)`.
    pub eta_sto: f64,
    /// `eta_sto(w, Delta_{m,q_m})` per mode.
    pub slabs: Vec<f64>,
    pub eta: f64,
    pub c_eq: f64,
}

impl EstimatorReport {
    /// Element indicators `(eta_T^2 + eta_dT^2)^{1/2}`.
    pub fn indicators(&self) -> Vec<f64> {
        self.volume.iter().zip(&self.jump).map(|(v, j)| v.hypot(*j)).collect()
    }
}

/// Combines the contributions: `eta^2 = eta_det^2 + c_eq^2 eta_sto^2`.
pub fn eta_total(volume: Vec<f64>, jump: Vec<f64>, eta_sto: f64, slabs: Vec<f64>, c_eq: f64) -> EstimatorReport {
    let eta_det = volume.iter().zip(&jump).map(|(v, j)| v * v + j * j).sum::<f64>().sqrt();
    let eta = (eta_det * eta_det + c_eq * c_eq * eta_sto * eta_sto).sqrt();
    EstimatorReport { volume, jump, eta_det, eta_sto, slabs, eta, c_eq }
}

/// Per-mode weight matrices of a Kronecker quadratic form, with a sign.
type FormTerm = (f64, Vec<DMatrix<f64>>);

/// `int psi_i psi_j grad phi_a . grad phi_b` grouped by coefficient node pair.
struct NodePairMass {
    pairs: Vec<(usize, usize)>,
    /// Per node pair: `(a, b, value)` over free dofs, sorted by `a`.
    entries: Vec<Vec<(usize, usize, f64)>>,
}

/// Estimator for one discretization `(T, Lambda_d)`.
pub struct Estimator<'a> {
    mesh: &'a Mesh2D,
    space: &'a FeSpace,
    coef: &'a DiscreteCoefficient,
    ancestor: &'a [usize],
    lambda: MultiIndexSet,
    full: MultiIndexSet,
    gram: Vec<DMatrix<f64>>,
    /// Per node and mode: `C~^m_i` with `n_m` rows and `d_m` columns.
    coupling: Vec<Vec<DMatrix<f64>>>,
    /// Per node and mode: `W_m^T C^m_i` on the `d_m` block.
    det_coupling: Vec<Vec<DMatrix<f64>>>,
    c2: Vec<f64>,
    e0: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    pair_index: HashMap<(usize, usize), usize>,
    mass: NodePairMass,
}

impl<'a> Estimator<'a> {
    /// `ancestor[t]` is the coefficient-mesh triangle containing fine
    /// triangle `t`; `table` must cover degrees below `d_m + dhat_m - 1`.
    pub fn new(
        mesh: &'a Mesh2D,
        space: &'a FeSpace,
        coef: &'a DiscreteCoefficient,
        ancestor: &'a [usize],
        lambda: &MultiIndexSet,
        table: &TripleProductTable,
    ) -> Result<Self> {
        let modes = lambda.modes().max(coef.n_modes());
        let lambda = lambda.padded(modes);
        let dhat: Vec<usize> = (0..modes).map(|m| coef.dhat.get(m).copied().unwrap_or(1)).collect();
        let full = MultiIndexSet::new((0..modes).map(|m| lambda.dim(m) + dhat[m] - 1).collect());
        let need = full.dims().iter().chain(&dhat).copied().max().unwrap_or(1);
        if table.size() < need {
            return Err(Error::IndexOutOfRange(vec![need - 1]));
        }
        let scaling = &coef.scaling;
        let gram = (0..modes)
            .map(|m| doubly_orthogonal(scaling, m, full.dim(m)).map(|t| t.g2))
            .collect::<Result<Vec<_>>>()?;
        let det: Vec<DoublyOrthogonalTransform> = (0..modes)
            .map(|m| doubly_orthogonal(scaling, m, lambda.dim(m)))
            .collect::<Result<_>>()?;
        let coupling: Vec<Vec<DMatrix<f64>>> = (0..coef.n_nodes())
            .map(|i| (0..modes).map(|m| coupling_matrix(coef, table, i, m, full.dim(m), lambda.dim(m))).collect())
            .collect();
        let det_coupling = coupling
            .iter()
            .map(|per| {
                per.iter()
                    .enumerate()
                    .map(|(m, c)| det[m].w.transpose() * c.rows(0, lambda.dim(m)))
                    .collect()
            })
            .collect();
        let c2 = lambda
            .iter()
            .map(|nu| nu.iter().enumerate().map(|(m, &k)| det[m].c[k].powi(2)).product())
            .collect();
        let e0 = lambda
            .iter()
            .map(|nu| nu.iter().enumerate().map(|(m, &k)| det[m].w[(0, k)]).product())
            .collect();
        let mut pairs = Vec::new();
        let mut pair_index = HashMap::new();
        for (t, dofs) in space.elem_dofs.iter().enumerate() {
            for &i in &coef.space.elem_dofs[ancestor[t]] {
                for &d in dofs {
                    if let Some(b) = space.free_index[d] {
                        pair_index.entry((i, b)).or_insert_with(|| {
                            pairs.push((i, b));
                            pairs.len() - 1
                        });
                    }
                }
            }
        }
        let mass = node_pair_mass(space, coef, ancestor);
        Ok(Estimator {
            mesh,
            space,
            coef,
            ancestor,
            lambda,
            full,
            gram,
            coupling,
            det_coupling,
            c2,
            e0,
            pairs,
            pair_index,
            mass,
        })
    }

    /// `Lambda_d` over all estimator modes.
    pub fn lambda(&self) -> &MultiIndexSet {
        &self.lambda
    }

    /// `Lambda_{d + dhat - 1}`, the support of the residual modes.
    pub fn full_set(&self) -> &MultiIndexSet {
        &self.full
    }

    /// Gram matrix `int P_i P_j zeta_m^2 dpi_0` of mode `m` over the full block.
    pub fn gram(&self, m: usize) -> &DMatrix<f64> {
        &self.gram[m]
    }

    fn check_tensor(&self, w: &CoeffTensor) {
        assert_eq!(w.set.padded(self.lambda.modes()), self.lambda, "tensor index set differs from Lambda_d");
        assert_eq!(w.n_dofs, self.space.n_dofs);
    }

    fn free_row<'w>(&self, w: &'w CoeffTensor, b: usize) -> &'w [f64] {
        w.row(self.space.free_dofs[b])
    }

    /// Transformed pair coefficients `W^T (x)_m C^m_i w_b`.
    fn transformed(&self, w: &CoeffTensor) -> Vec<f64> {
        let l = self.lambda.len();
        let mut out = vec![0.0; self.pairs.len() * l];
        out.par_chunks_mut(l).enumerate().for_each(|(p, o)| {
            let (i, b) = self.pairs[p];
            let mats: Vec<&DMatrix<f64>> = self.det_coupling[i].iter().collect();
            o.copy_from_slice(&kron_apply(self.free_row(w, b), &mats));
        });
        out
    }

    /// `(coarse local, fine local, pair)` triples of element `t`.
    fn element_pairs(&self, t: usize) -> Vec<(usize, usize, usize)> {
        let cd = &self.coef.space.elem_dofs[self.ancestor[t]];
        let sd = &self.space.elem_dofs[t];
        let mut out = Vec::with_capacity(cd.len() * sd.len());
        for (il, &i) in cd.iter().enumerate() {
            for (al, &d) in sd.iter().enumerate() {
                if let Some(b) = self.space.free_index[d] {
                    out.push((il, al, self.pair_index[&(i, b)]));
                }
            }
        }
        out
    }

    fn orders(&self) -> usize {
        self.space.order + self.coef.space.order
    }

    /// Per-element volume and jump contributions over `Lambda_d`.
    pub fn eta_det(&self, w: &CoeffTensor, f: Source) -> (Vec<f64>, Vec<f64>) {
        self.check_tensor(w);
        let l = self.lambda.len();
        let what = self.transformed(w);
        let rule = TriangleRule::with_degree(2 * self.orders() - 2);
        let tabs = reference_tables(self.space, &rule);
        let nt = self.mesh.n_triangles();
        let volume: Vec<f64> = (0..nt)
            .into_par_iter()
            .map(|t| {
                let e = element_points(self.space, self.coef, t, self.ancestor[t], &rule, &tabs);
                let ids = self.element_pairs(t);
                let mut r = vec![0.0; l];
                let mut total = 0.0;
                for q in 0..e.weight.len() {
                    let fx = f(e.x[q]);
                    for (v, z) in r.iter_mut().zip(&self.e0) {
                        *v = fx * z;
                    }
                    for &(il, al, p) in &ids {
                        let g = dot2(e.dpsi[q][il], e.dphi[q][al]) + e.psi[q][il] * e.lap[q][al];
                        for (v, x) in r.iter_mut().zip(&what[p * l..(p + 1) * l]) {
                            *v -= g * x;
                        }
                    }
                    total += e.weight[q] * r.iter().zip(&self.c2).map(|(v, c)| c * v * v).sum::<f64>();
                }
                self.mesh.h(t) * total.sqrt()
            })
            .collect();
        let gl = gauss_legendre01(self.orders());
        let edges = self.mesh.edges();
        let per_edge: Vec<f64> = (0..edges.len())
            .into_par_iter()
            .map(|e| {
                let Ok(frame) = self.mesh.edge_jump_frame(e) else { return 0.0 };
                let [pa, pb] = edges[e].v.map(|v| self.mesh.vertices[v]);
                let mut total = 0.0;
                let mut jmp = vec![0.0; l];
                for (s, ws) in gl.nodes.iter().zip(&gl.weights) {
                    let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    jmp.iter_mut().for_each(|v| *v = 0.0);
                    for (t, sign) in [(frame.plus, 1.0), (frame.minus, -1.0)] {
                        let (psi, _) = coarse_basis(self.coef, self.ancestor[t], x);
                        let g = &self.space.geoms[t];
                        let (_, grads, _) = self.space.reference.eval_all(g.to_reference(x));
                        for (il, al, p) in self.element_pairs(t) {
                            let dn = dot2(g.gradient(grads[al]), frame.normal);
                            let c = sign * psi[il] * dn;
                            for (v, y) in jmp.iter_mut().zip(&what[p * l..(p + 1) * l]) {
                                *v += c * y;
                            }
                        }
                    }
                    total += ws * frame.length * jmp.iter().zip(&self.c2).map(|(v, c)| c * v * v).sum::<f64>();
                }
                total
            })
            .collect();
        let mut jsq = vec![0.0; nt];
        for (e, v) in per_edge.iter().enumerate() {
            if !edges[e].is_boundary() {
                jsq[edges[e].tris[0]] += v;
                jsq[edges[e].tris[1]] += v;
            }
        }
        let jump = jsq.iter().enumerate().map(|(t, s)| (self.mesh.h(t) * s).sqrt()).collect();
        (volume, jump)
    }

    /// `sum_terms sign int |sum_mu r_mu P_mu|^2` with the per-mode weights of
    /// each term, as Kronecker forms in the solution coefficients.
    fn kron_form(&self, w: &CoeffTensor, terms: &[FormTerm]) -> f64 {
        let parts: Vec<f64> = (0..self.mass.pairs.len())
            .into_par_iter()
            .map(|pp| {
                let (i, j) = self.mass.pairs[pp];
                let s: Vec<(f64, Vec<DMatrix<f64>>)> = terms
                    .iter()
                    .map(|(sign, x)| {
                        let mats = x
                            .iter()
                            .enumerate()
                            .map(|(m, xm)| self.coupling[i][m].transpose() * xm * &self.coupling[j][m])
                            .collect();
                        (*sign, mats)
                    })
                    .collect();
                let entries = &self.mass.entries[pp];
                let l = self.lambda.len();
                let mut z = vec![0.0; l];
                let mut total = 0.0;
                let mut k = 0;
                while k < entries.len() {
                    let a = entries[k].0;
                    z.iter_mut().for_each(|v| *v = 0.0);
                    while k < entries.len() && entries[k].0 == a {
                        let (_, b, v) = entries[k];
                        for (zz, x) in z.iter_mut().zip(self.free_row(w, b)) {
                            *zz += v * x;
                        }
                        k += 1;
                    }
                    let wa = self.free_row(w, a);
                    for (sign, mats) in &s {
                        let refs: Vec<&DMatrix<f64>> = mats.iter().collect();
                        let kz = kron_apply(&z, &refs);
                        total += sign * wa.iter().zip(&kz).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                total
            })
            .collect();
        parts.iter().sum()
    }

    fn prefix_projector(n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |r, c| if r == c && r < d { 1.0 } else { 0.0 })
    }

    /// `eta_sto(w, boundary)`.
    pub fn eta_sto(&self, w: &CoeffTensor) -> f64 {
        self.check_tensor(w);
        if self.full.len() == self.lambda.len() {
            return 0.0;
        }
        let modes = self.lambda.modes();
        let proj: Vec<DMatrix<f64>> =
            (0..modes).map(|m| Self::prefix_projector(self.full.dim(m), self.lambda.dim(m))).collect();
        let g = self.gram.clone();
        let pg: Vec<_> = (0..modes).map(|m| &proj[m] * &g[m]).collect();
        let gp: Vec<_> = (0..modes).map(|m| &g[m] * &proj[m]).collect();
        let pgp: Vec<_> = (0..modes).map(|m| &proj[m] * &g[m] * &proj[m]).collect();
        let terms = [(1.0, g), (-1.0, pg), (-1.0, gp), (1.0, pgp)];
        self.kron_form(w, &terms).max(0.0).sqrt()
    }

    /// `eta_sto(w, Delta_{m,q})`; the look-ahead is clipped to the residual
    /// support, so modes with `dhat_m = 1` give zero.
    pub fn eta_sto_slab(&self, w: &CoeffTensor, mode: usize, q: usize) -> f64 {
        self.check_tensor(w);
        let d = self.lambda.dim(mode);
        let q = q.min(self.full.dim(mode) - d);
        if q == 0 {
            return 0.0;
        }
        let x: Vec<DMatrix<f64>> = (0..self.lambda.modes())
            .map(|m| {
                let n = self.full.dim(m);
                let (lo, hi) = if m == mode { (d, d + q) } else { (0, self.lambda.dim(m)) };
                let r = DMatrix::from_fn(n, n, |a, b| if a == b && a >= lo && a < hi { 1.0 } else { 0.0 });
                &r * &self.gram[m] * &r
            })
            .collect();
        self.kron_form(w, &[(1.0, x)]).max(0.0).sqrt()
    }

    /// Slab values for every mode with per-mode look-ahead `q`.
    pub fn eta_sto_slabs(&self, w: &CoeffTensor, q: &[usize]) -> Vec<f64> {
        (0..self.lambda.modes()).map(|m| self.eta_sto_slab(w, m, q.get(m).copied().unwrap_or(1))).collect()
    }

    /// Full estimate of one iterate.
    pub fn estimate(&self, w: &CoeffTensor, f: Source, q: &[usize], c_eq: f64) -> EstimatorReport {
        let (volume, jump) = self.eta_det(w, f);
        let eta_sto = self.eta_sto(w);
        let slabs = self.eta_sto_slabs(w, q);
        eta_total(volume, jump, eta_sto, slabs, c_eq)
    }

    /// Materializes `r_mu` for every `mu` in `Lambda_{d + dhat - 1}`.
    pub fn residual_modes(&self, w: &CoeffTensor) -> ResidualModes {
        self.check_tensor(w);
        let n = self.full.len();
        let mut values = vec![0.0; self.pairs.len() * n];
        values.par_chunks_mut(n).enumerate().for_each(|(p, o)| {
            let (i, b) = self.pairs[p];
            let mats: Vec<&DMatrix<f64>> = self.coupling[i].iter().collect();
            o.copy_from_slice(&kron_apply(self.free_row(w, b), &mats));
        });
        ResidualModes { full: self.full.clone(), values }
    }

    /// `r_mu(x)` for all `mu` of the full set, at point `x` of triangle `t`.
    pub fn residual_at(&self, modes: &ResidualModes, t: usize, x: [f64; 2]) -> Vec<[f64; 2]> {
        let n = self.full.len();
        let (psi, _) = coarse_basis(self.coef, self.ancestor[t], x);
        let g = &self.space.geoms[t];
        let (_, grads, _) = self.space.reference.eval_all(g.to_reference(x));
        let mut out = vec![[0.0; 2]; n];
        for (il, al, p) in self.element_pairs(t) {
            let gr = g.gradient(grads[al]);
            for (o, v) in out.iter_mut().zip(&modes.values[p * n..(p + 1) * n]) {
                o[0] += psi[il] * gr[0] * v;
                o[1] += psi[il] * gr[1] * v;
            }
        }
        out
    }

    /// `div r_mu(x)` for all `mu` of the full set.
    pub fn divergence_at(&self, modes: &ResidualModes, t: usize, x: [f64; 2]) -> Vec<f64> {
        let n = self.full.len();
        let (psi, dpsi) = coarse_basis(self.coef, self.ancestor[t], x);
        let g = &self.space.geoms[t];
        let (_, grads, hess) = self.space.reference.eval_all(g.to_reference(x));
        let mut out = vec![0.0; n];
        for (il, al, p) in self.element_pairs(t) {
            let c = dot2(dpsi[il], g.gradient(grads[al])) + psi[il] * g.laplacian(hess[al]);
            for (o, v) in out.iter_mut().zip(&modes.values[p * n..(p + 1) * n]) {
                *o += c * v;
            }
        }
        out
    }

    fn positions(&self, subset: &[Vec<usize>]) -> Result<Vec<usize>> {
        subset
            .iter()
            .map(|mu| self.full.position(mu).ok_or_else(|| Error::IndexOutOfRange(mu.clone())))
            .collect()
    }

    /// Dense `int P_mu P_nu zeta^2 dpi_0` over a subset of the full set.
    pub fn gram_subset(&self, subset: &[Vec<usize>]) -> DMatrix<f64> {
        let idx: Vec<Vec<usize>> = subset.iter().map(|mu| self.full.index_at(self.full.position(mu).unwrap())).collect();
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            (0..self.full.modes()).map(|m| self.gram[m][(idx[a][m], idx[b][m])]).product()
        })
    }

    fn space_rule(&self) -> TriangleRule {
        TriangleRule::with_degree(2 * self.orders() - 2)
    }

    /// `int_D int r_S . r_S' zeta^2 dpi_0 dx` where `r_S = sum_{mu in S} r_mu P_mu`.
    fn cross_norm(&self, modes: &ResidualModes, a: &[usize], b: &[usize], gab: &DMatrix<f64>) -> f64 {
        let rule = self.space_rule();
        (0..self.mesh.n_triangles())
            .into_par_iter()
            .map(|t| {
                let g = &self.space.geoms[t];
                let mut total = 0.0;
                for (xi, wq) in rule.points.iter().zip(&rule.weights) {
                    let r = self.residual_at(modes, t, g.to_physical(*xi));
                    for (p, &ia) in a.iter().enumerate() {
                        for (q, &ib) in b.iter().enumerate() {
                            total += wq * g.area * gab[(p, q)] * dot2(r[ia], r[ib]);
                        }
                    }
                }
                total
            })
            .sum()
    }

    /// `eta_sto(w, Delta)` for any `Delta` inside the boundary.
    pub fn eta_sto_subset(&self, modes: &ResidualModes, delta: &[Vec<usize>]) -> Result<f64> {
        for mu in delta {
            if !self.full.contains(mu) || self.lambda.contains(mu) {
                return Err(Error::IndexNotInBoundary(mu.clone()));
            }
        }
        let pos = self.positions(delta)?;
        let g = self.gram_subset(delta);
        Ok(self.cross_norm(modes, &pos, &pos, &g).max(0.0).sqrt())
    }

    /// Per-element `(eta_det,T, eta_det,dT)` with the index sum restricted
    /// to `subset`.
    pub fn eta_det_subset(&self, modes: &ResidualModes, f: Source, subset: &[Vec<usize>]) -> Result<Vec<(f64, f64)>> {
        let pos = self.positions(subset)?;
        let g = self.gram_subset(subset);
        let zero = self.full.position(&[]).unwrap();
        let rule = self.space_rule();
        let nt = self.mesh.n_triangles();
        let quad = |vals: &[f64]| -> f64 {
            let mut s = 0.0;
            for a in 0..vals.len() {
                for b in 0..vals.len() {
                    s += g[(a, b)] * vals[a] * vals[b];
                }
            }
            s
        };
        let volume: Vec<f64> = (0..nt)
            .into_par_iter()
            .map(|t| {
                let geom = &self.space.geoms[t];
                let mut total = 0.0;
                for (xi, wq) in rule.points.iter().zip(&rule.weights) {
                    let x = geom.to_physical(*xi);
                    let div = self.divergence_at(modes, t, x);
                    let fx = f(x);
                    let vals: Vec<f64> =
                        pos.iter().map(|&p| if p == zero { fx - div[p] } else { -div[p] }).collect();
                    total += wq * geom.area * quad(&vals);
                }
                self.mesh.h(t) * total.sqrt()
            })
            .collect();
        let gl = gauss_legendre01(self.orders());
        let edges = self.mesh.edges();
        let mut jsq = vec![0.0; nt];
        for (e, edge) in edges.iter().enumerate() {
            let Ok(frame) = self.mesh.edge_jump_frame(e) else { continue };
            let [pa, pb] = edge.v.map(|v| self.mesh.vertices[v]);
            let mut total = 0.0;
            for (s, ws) in gl.nodes.iter().zip(&gl.weights) {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let rp = self.residual_at(modes, frame.plus, x);
                let rm = self.residual_at(modes, frame.minus, x);
                let vals: Vec<f64> = pos
                    .iter()
                    .map(|&p| dot2([rp[p][0] - rm[p][0], rp[p][1] - rm[p][1]], frame.normal))
                    .collect();
                total += ws * frame.length * quad(&vals);
            }
            jsq[frame.plus] += total;
            jsq[frame.minus] += total;
        }
        Ok(volume.into_iter().zip(jsq).enumerate().map(|(t, (v, j))| (v, (self.mesh.h(t) * j).sqrt())).collect())
    }

    /// `| h |_{pi_0}` for `h(y) = int_D g_A(x, y) . g_B(x, y) dx` with
    /// `g_S = sum_{mu in S} r_mu P_mu`. Tensor Gauss-Hermite in the modes
    /// that occur; small instances only.
    pub fn product_norm(&self, modes: &ResidualModes, a: &[Vec<usize>], b: &[Vec<usize>]) -> Result<f64> {
        let pa = self.positions(a)?;
        let pb = self.positions(b)?;
        let ia: Vec<Vec<usize>> = pa.iter().map(|&p| self.full.index_at(p)).collect();
        let ib: Vec<Vec<usize>> = pb.iter().map(|&p| self.full.index_at(p)).collect();
        let rule = self.space_rule();
        let h: Vec<Vec<f64>> = (0..self.mesh.n_triangles())
            .into_par_iter()
            .map(|t| {
                let g = &self.space.geoms[t];
                let mut local = vec![vec![0.0; pb.len()]; pa.len()];
                for (xi, wq) in rule.points.iter().zip(&rule.weights) {
                    let r = self.residual_at(modes, t, g.to_physical(*xi));
                    for (p, &x) in pa.iter().enumerate() {
                        for (q, &y) in pb.iter().enumerate() {
                            local[p][q] += wq * g.area * dot2(r[x], r[y]);
                        }
                    }
                }
                local
            })
            .reduce(
                || vec![vec![0.0; pb.len()]; pa.len()],
                |mut s, l| {
                    for (sr, lr) in s.iter_mut().zip(&l) {
                        for (x, y) in sr.iter_mut().zip(lr) {
                            *x += y;
                        }
                    }
                    s
                },
            );
        let modes_n = self.full.modes();
        let deg: Vec<usize> = (0..modes_n)
            .map(|m| ia.iter().chain(&ib).map(|mu| mu[m]).max().unwrap_or(0))
            .collect();
        let rules: Vec<_> = deg.iter().map(|&d| gauss_hermite(2 * d + 1)).collect();
        let grid = MultiIndexSet::new(rules.iter().map(|r| r.nodes.len()).collect());
        let mut total = 0.0;
        for node in grid.iter() {
            let mut weight = 1.0;
            let mut polys = Vec::with_capacity(modes_n);
            for m in 0..modes_n {
                let y = rules[m].nodes[node[m]];
                weight *= rules[m].weights[node[m]];
                polys.push(hermite_all(self.coef.scaling.weight_variance(m), deg[m], y));
            }
            let basis = |mu: &[usize]| -> f64 { mu.iter().enumerate().map(|(m, &k)| polys[m][k]).product() };
            let va: Vec<f64> = ia.iter().map(|mu| basis(mu)).collect();
            let vb: Vec<f64> = ib.iter().map(|mu| basis(mu)).collect();
            let mut hy = 0.0;
            for (p, x) in va.iter().enumerate() {
                for (q, y) in vb.iter().enumerate() {
                    hy += x * y * h[p][q];
                }
            }
            total += weight * hy * hy;
        }
        Ok(total.sqrt())
    }
}

/// `r_mu` coefficients per (coefficient node, free dof) pair over the full
/// set `Lambda_{d + dhat - 1}`; evaluated through [`Estimator::residual_at`].
#[derive(Debug, Clone)]
pub struct ResidualModes {
    pub full: MultiIndexSet,
    values: Vec<f64>,
}

impl ResidualModes {
    /// Whether every pair coefficient of mode `mu` vanishes.
    pub fn is_zero_mode(&self, mu: &[usize]) -> bool {
        let n = self.full.len();
        match self.full.position(mu) {
            Some(p) => self.values.iter().skip(p).step_by(n).all(|v| *v == 0.0),
            None => true,
        }
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn node_pair_mass(space: &FeSpace, coef: &DiscreteCoefficient, ancestor: &[usize]) -> NodePairMass {
    let rule = TriangleRule::with_degree(2 * (space.order + coef.space.order) - 2);
    let tabs = reference_tables(space, &rule);
    let n = space.n_local();
    let locals: Vec<Vec<((usize, usize), usize, usize, f64)>> = (0..space.elem_dofs.len())
        .into_par_iter()
        .map(|t| {
            let k = ancestor[t];
            let e = element_points(space, coef, t, k, &rule, &tabs);
            let cd = &coef.space.elem_dofs[k];
            let sd = &space.elem_dofs[t];
            let nc = cd.len();
            let mut out = Vec::new();
            for i in 0..nc {
                for j in 0..nc {
                    for a in 0..n {
                        let Some(fa) = space.free_index[sd[a]] else { continue };
                        for b in 0..n {
                            let Some(fb) = space.free_index[sd[b]] else { continue };
                            let v: f64 = (0..e.weight.len())
                                .map(|q| e.weight[q] * e.psi[q][i] * e.psi[q][j] * dot2(e.dphi[q][a], e.dphi[q][b]))
                                .sum();
                            if v != 0.0 {
                                out.push(((cd[i], cd[j]), fa, fb, v));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut raw: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for list in locals {
        for (pp, a, b, v) in list {
            let id = *index.entry(pp).or_insert_with(|| {
                pairs.push(pp);
                raw.push(Vec::new());
                pairs.len() - 1
            });
            raw[id].push((a, b, v));
        }
    }
    let entries = raw
        .into_iter()
        .map(|mut list| {
            list.sort_by_key(|&(a, b, _)| (a, b));
            let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(list.len());
            for (a, b, v) in list {
                match merged.last_mut() {
                    Some(last) if last.0 == a && last.1 == b => last.2 += v,
                    _ => merged.push((a, b, v)),
                }
            }
            merged
        })
        .collect();
    NodePairMass { pairs, entries }
}

/// Lipschitz constants `c(Lambda_d)` and `c(boundary)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LipschitzConstants {
    pub det: f64,
    /// `None` when the boundary has more than the requested number of indices.
    pub sto: Option<f64>,
}

/// `c(S)^2 = sum_{beta in Lambda_d} (sum_{mu in S} sum_alpha |a_alpha|_inf
/// |tau_{alpha beta mu}| |P_mu zeta|_{pi_0})^2` for `S = Lambda_d` and for the
/// boundary, with `|a_alpha|_inf` the maximum over coefficient nodes.
pub fn lipschitz_diagnostic(
    lambda: &MultiIndexSet,
    coef: &DiscreteCoefficient,
    table: &TripleProductTable,
    boundary_cap: usize,
) -> Result<LipschitzConstants> {
    let modes = lambda.modes().max(coef.n_modes());
    let lambda = lambda.padded(modes);
    let dhat: Vec<usize> = (0..modes).map(|m| coef.dhat.get(m).copied().unwrap_or(1)).collect();
    let full = MultiIndexSet::new((0..modes).map(|m| lambda.dim(m) + dhat[m] - 1).collect());
    let need = full.dims().iter().chain(&dhat).copied().max().unwrap_or(1);
    if table.size() < need {
        return Err(Error::IndexOutOfRange(vec![need - 1]));
    }
    let diag: Vec<Vec<f64>> = (0..modes)
        .map(|m| doubly_orthogonal(&coef.scaling, m, full.dim(m)).map(|t| (0..full.dim(m)).map(|k| t.g2[(k, k)]).collect()))
        .collect::<Result<_>>()?;
    let basis_norm = |mu: &[usize]| -> f64 { mu.iter().enumerate().map(|(m, &k)| diag[m][k]).product::<f64>().sqrt() };
    let mut sup: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut a_sup = |alpha: &[usize]| -> f64 {
        *sup.entry(alpha.to_vec()).or_insert_with(|| {
            (0..coef.n_nodes()).map(|i| coef.coefficient(i, alpha).abs()).fold(0.0, f64::max)
        })
    };
    let mut inner = |beta: &[usize], mu: &[usize]| -> f64 {
        let ranges: Vec<(usize, usize)> = (0..modes)
            .map(|m| {
                let lo = beta[m].abs_diff(mu[m]);
                let hi = (beta[m] + mu[m]).min(dhat[m] - 1);
                (lo, hi)
            })
            .collect();
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return 0.0;
        }
        let mut total = 0.0;
        let shape = MultiIndexSet::new(ranges.iter().map(|(lo, hi)| (hi - lo) / 2 + 1).collect());
        for off in shape.iter() {
            let alpha: Vec<usize> = off.iter().zip(&ranges).map(|(o, (lo, _))| lo + 2 * o).collect();
            let tau = table.multi(&alpha, beta, mu);
            if tau != 0.0 {
                total += a_sup(&alpha) * tau.abs();
            }
        }
        total * basis_norm(mu)
    };
    let mut constant = |set: &dyn Fn(&[usize]) -> bool| -> f64 {
        lambda
            .iter()
            .map(|beta| {
                let s: f64 = full.iter().filter(|mu| set(mu)).map(|mu| inner(&beta, &mu)).sum();
                s * s
            })
            .sum::<f64>()
            .sqrt()
    };
    let det = constant(&|mu| lambda.contains(mu));
    let boundary = full.len() - lambda.len();
    let sto = (boundary <= boundary_cap).then(|| constant(&|mu| !lambda.contains(mu)));
    Ok(LipschitzConstants { det, sto })
}
