//! Conforming Lagrange finite elements of order 1 to 3 on triangles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Mesh2D, NONE};
use crate::sparse::Csr;

/// Lagrange element on the reference triangle (0,0), (1,0), (0,1) with a
/// monomial representation of its nodal basis.
#[derive(Debug, Clone)]
pub struct RefElement {
    pub order: usize,
    /// Nodes: vertices, then edge nodes (edge k opposite vertex k, running
    /// from vertex k+1 to vertex k+2), then interior nodes.
    pub nodes: Vec<[f64; 2]>,
    monomials: Vec<(i32, i32)>,
    /// `coef[(j, i)]`: weight of monomial `j` in basis function `i`.
    coef: DMatrix<f64>,
}

const REF_VERTS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

impl RefElement {
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        let p = order;
        let mut nodes: Vec<[f64; 2]> = REF_VERTS.to_vec();
        for k in 0..3 {
            let a = REF_VERTS[(k + 1) % 3];
            let b = REF_VERTS[(k + 2) % 3];
            for j in 1..p {
                let t = j as f64 / p as f64;
                nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        if p == 3 {
            nodes.push([1.0 / 3.0, 1.0 / 3.0]);
        }
        let mut monomials = Vec::new();
        for total in 0..=p as i32 {
            for a in (0..=total).rev() {
                monomials.push((a, total - a));
            }
        }
        let n = nodes.len();
        let vander = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = monomials[j];
            nodes[i][0].powi(a) * nodes[i][1].powi(b)
        });
        // phi_i(node_k) = delta: V C = I
        let coef = vander
            .try_inverse()
            .ok_or_else(|| Error::NumericalBreakdown("singular Vandermonde matrix".into()))?;
        Ok(RefElement { order, nodes, monomials, coef })
    }

    pub fn n_local(&self) -> usize {
        self.nodes.len()
    }

    fn mono(&self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>, Vec<[f64; 3]>) {
        let pw = |x: f64, k: i32| if k < 0 { 0.0 } else { x.powi(k) };
        let mut v = Vec::with_capacity(self.monomials.len());
        let mut g = Vec::with_capacity(self.monomials.len());
        let mut h = Vec::with_capacity(self.monomials.len());
        for &(a, b) in &self.monomials {
            let (af, bf) = (a as f64, b as f64);
            v.push(pw(xi[0], a) * pw(xi[1], b));
            g.push([af * pw(xi[0], a - 1) * pw(xi[1], b), bf * pw(xi[0], a) * pw(xi[1], b - 1)]);
            h.push([
                af * (af - 1.0) * pw(xi[0], a - 2) * pw(xi[1], b),
                af * bf * pw(xi[0], a - 1) * pw(xi[1], b - 1),
                bf * (bf - 1.0) * pw(xi[0], a) * pw(xi[1], b - 2),
            ]);
        }
        (v, g, h)
    }

    /// Values, reference gradients and reference Hessians (xx, xy, yy) of
    /// all basis functions at `xi`.
    pub fn eval_all(&self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>, Vec<[f64; 3]>) {
        let (mv, mg, mh) = self.mono(xi);
        let n = self.n_local();
        let mut v = vec![0.0; n];
        let mut g = vec![[0.0; 2]; n];
        let mut h = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in 0..n {
                let c = self.coef[(j, i)];
                if c == 0.0 {
                    continue;
                }
                v[i] += c * mv[j];
                g[i][0] += c * mg[j][0];
                g[i][1] += c * mg[j][1];
                for k in 0..3 {
                    h[i][k] += c * mh[j][k];
                }
            }
        }
        (v, g, h)
    }

    pub fn values(&self, xi: [f64; 2]) -> Vec<f64> {
        self.eval_all(xi).0
    }
}

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeom {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub area: f64,
}

impl ElementGeom {
    pub fn new(c: [[f64; 2]; 3]) -> Self {
        let jac = [[c[1][0] - c[0][0], c[2][0] - c[0][0]], [c[1][1] - c[0][1], c[2][1] - c[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        ElementGeom { origin: c[0], jac, inv, area: 0.5 * det.abs() }
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [self.inv[0][0] * d[0] + self.inv[0][1] * d[1], self.inv[1][0] * d[0] + self.inv[1][1] * d[1]]
    }

    /// Physical gradient `J^{-T} g`.
    pub fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [self.inv[0][0] * g[0] + self.inv[1][0] * g[1], self.inv[0][1] * g[0] + self.inv[1][1] * g[1]]
    }

    /// Physical Laplacian `tr(J^{-T} H J^{-1})` of a reference Hessian.
    pub fn laplacian(&self, h: [f64; 3]) -> f64 {
        let hm = [[h[0], h[1]], [h[1], h[2]]];
        let mut tr = 0.0;
        for r in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    tr += self.inv[a][r] * hm[a][b] * self.inv[b][r];
                }
            }
        }
        tr
    }
}

/// Lagrange space of order `p` on a mesh with homogeneous Dirichlet data.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub order: usize,
    pub reference: RefElement,
    pub n_dofs: usize,
    /// Local-to-global dof map, `n_local` entries per triangle.
    pub elem_dofs: Vec<Vec<usize>>,
    pub dof_coords: Vec<[f64; 2]>,
    pub dirichlet: Vec<bool>,
    /// Position among free dofs, `None` on the boundary.
    pub free_index: Vec<Option<usize>>,
    pub free_dofs: Vec<usize>,
    pub geoms: Vec<ElementGeom>,
}

impl FeSpace {
    pub fn new(mesh: &Mesh2D, order: usize) -> Result<Self> {
        let reference = RefElement::new(order)?;
        let p = order;
        let nv = mesh.n_vertices();
        let ne = mesh.edges().len();
        let per_edge = p - 1;
        let per_cell = if p == 3 { 1 } else { 0 };
        let n_dofs = nv + ne * per_edge + mesh.n_triangles() * per_cell;
        let mut dof_coords = vec![[0.0; 2]; n_dofs];
        dof_coords[..nv].copy_from_slice(&mesh.vertices);
        let mut dirichlet = mesh.boundary_vertices();
        dirichlet.resize(n_dofs, false);
        for (e, edge) in mesh.edges().iter().enumerate() {
            let (a, b) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
            for j in 0..per_edge {
                let t = (j + 1) as f64 / p as f64;
                let d = nv + e * per_edge + j;
                dof_coords[d] = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                dirichlet[d] = edge.tris[1] == NONE;
            }
        }
        let mut elem_dofs = Vec::with_capacity(mesh.n_triangles());
        let mut geoms = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles[t];
            let te = mesh.triangle_edges(t);
            let mut dofs: Vec<usize> = tri.to_vec();
            for k in 0..3 {
                let e = te[k];
                let forward = mesh.edges()[e].v[0] == tri[(k + 1) % 3];
                for j in 0..per_edge {
                    let jj = if forward { j } else { per_edge - 1 - j };
                    dofs.push(nv + e * per_edge + jj);
                }
            }
            if per_cell == 1 {
                let d = nv + ne * per_edge + t;
                let c = mesh.corners(t);
                dof_coords[d] = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
                dofs.push(d);
            }
            elem_dofs.push(dofs);
            geoms.push(ElementGeom::new(mesh.corners(t)));
        }
        let mut free_index = vec![None; n_dofs];
        let mut free_dofs = Vec::new();
        for d in 0..n_dofs {
            if !dirichlet[d] {
                free_index[d] = Some(free_dofs.len());
                free_dofs.push(d);
            }
        }
        Ok(FeSpace { order, reference, n_dofs, elem_dofs, dof_coords, dirichlet, free_index, free_dofs, geoms })
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_local(&self) -> usize {
        self.reference.n_local()
    }

    /// Nodal interpolation of `f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&x| f(x)).collect()
    }

    /// Value of the finite element function `u` at reference point `xi` of
    /// triangle `t`.
    pub fn eval(&self, u: &[f64], t: usize, xi: [f64; 2]) -> f64 {
        let phi = self.reference.values(xi);
        self.elem_dofs[t].iter().zip(&phi).map(|(&d, v)| u[d] * v).sum()
    }
}

/// Nodal interpolation matrix from `coarse` to `fine`, where fine triangle
/// `t` lies inside coarse triangle `ancestor[t]`. Exact for nested spaces.
pub fn prolongation(coarse: &FeSpace, fine: &FeSpace, ancestor: &[usize]) -> Csr {
    let mut seen = vec![false; fine.n_dofs];
    let mut trip = Vec::new();
    for (t, dofs) in fine.elem_dofs.iter().enumerate() {
        let k = ancestor[t];
        let g = &coarse.geoms[k];
        for &d in dofs {
            if seen[d] {
                continue;
            }
            seen[d] = true;
            let vals = coarse.reference.values(g.to_reference(fine.dof_coords[d]));
            for (&c, v) in coarse.elem_dofs[k].iter().zip(vals) {
                let v = if (v - v.round()).abs() < 1e-13 { v.round() } else { v };
                if v != 0.0 {
                    trip.push((d, c, v));
                }
            }
        }
    }
    Csr::from_triplets(fine.n_dofs, coarse.n_dofs, &trip)
}

/// Stiffness matrix `int a grad phi_i . grad phi_j` with `a` a nodal
/// function in `space`, over all dofs (Dirichlet rows kept).
pub fn stiffness(space: &FeSpace, a: &[f64]) -> Csr {
    let rule = crate::quadrature::TriangleRule::with_degree(3 * space.order - 2);
    let n = space.n_local();
    let tabs: Vec<_> = rule.points.iter().map(|&xi| space.reference.eval_all(xi)).collect();
    let mut trip = Vec::with_capacity(space.elem_dofs.len() * n * n);
    for (t, dofs) in space.elem_dofs.iter().enumerate() {
        let g = &space.geoms[t];
        let mut local = vec![0.0; n * n];
        for (q, (v, gr, _)) in tabs.iter().enumerate() {
            let aq: f64 = dofs.iter().zip(v).map(|(&d, p)| a[d] * p).sum();
            let grads: Vec<[f64; 2]> = gr.iter().map(|&x| g.gradient(x)).collect();
            let w = rule.weights[q] * g.area * aq;
            for i in 0..n {
                for j in 0..n {
                    local[i * n + j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                trip.push((dofs[i], dofs[j], local[i * n + j]));
            }
        }
    }
    Csr::from_triplets(space.n_dofs, space.n_dofs, &trip)
}

/// Stiffness matrix with a coefficient function evaluated at the quadrature
/// points, over all dofs.
pub fn stiffness_with(space: &FeSpace, a: impl Fn([f64; 2]) -> f64) -> Csr {
    let rule = crate::quadrature::TriangleRule::with_degree(2 * space.order + 4);
    let n = space.n_local();
    let tabs: Vec<_> = rule.points.iter().map(|&xi| space.reference.eval_all(xi)).collect();
    let mut trip = Vec::with_capacity(space.elem_dofs.len() * n * n);
    for (t, dofs) in space.elem_dofs.iter().enumerate() {
        let g = &space.geoms[t];
        let mut local = vec![0.0; n * n];
        for (q, (_, gr, _)) in tabs.iter().enumerate() {
            let grads: Vec<[f64; 2]> = gr.iter().map(|&x| g.gradient(x)).collect();
            let w = rule.weights[q] * g.area * a(g.to_physical(rule.points[q]));
            for i in 0..n {
                for j in 0..n {
                    local[i * n + j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                trip.push((dofs[i], dofs[j], local[i * n + j]));
            }
        }
    }
    Csr::from_triplets(space.n_dofs, space.n_dofs, &trip)
}

/// Load vector `int f phi_j` over all dofs.
pub fn load(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let rule = crate::quadrature::TriangleRule::with_degree(space.order + 4);
    let tabs: Vec<_> = rule.points.iter().map(|&xi| space.reference.values(xi)).collect();
    let mut b = vec![0.0; space.n_dofs];
    for (t, dofs) in space.elem_dofs.iter().enumerate() {
        let g = &space.geoms[t];
        for (q, v) in tabs.iter().enumerate() {
            let fx = f(g.to_physical(rule.points[q]));
            for (&d, p) in dofs.iter().zip(v) {
                b[d] += rule.weights[q] * g.area * fx * p;
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{initial_lshape, initial_unit_square};

    #[test]
    fn reference_basis_is_nodal() {
        for p in 1..=3 {
            let r = RefElement::new(p).unwrap();
            assert_eq!(r.n_local(), (p + 1) * (p + 2) / 2);
            for (k, &x) in r.nodes.iter().enumerate() {
                let v = r.values(x);
                for (i, vi) in v.iter().enumerate() {
                    let e = if i == k { 1.0 } else { 0.0 };
                    assert!((vi - e).abs() < 1e-12);
                }
            }
            let (v, g, _) = r.eval_all([0.2, 0.3]);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(g.iter().map(|x| x[0]).sum::<f64>().abs() < 1e-11);
        }
        assert_eq!(RefElement::new(4).unwrap_err(), Error::UnsupportedOrder(4));
    }

    #[test]
    fn p1_stiffness_on_square_pair() {
        let mesh = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], vec![[0, 2, 3], [2, 0, 1]]);
        let s = FeSpace::new(&mesh, 1).unwrap();
        let k = stiffness(&s, &[1.0; 4]);
        // vertex 1 sits at the right angle of one triangle
        assert!((k.get(1, 1) - 1.0).abs() < 1e-14);
        assert!((k.get(0, 0) - 1.0).abs() < 1e-14);
        assert!((k.get(0, 1) + 0.5).abs() < 1e-14);
        assert!(k.get(1, 3).abs() < 1e-14);
        let k3 = stiffness(&s, &[3.0; 4]);
        for r in 0..4 {
            for c in 0..4 {
                assert!((k3.get(r, c) - 3.0 * k.get(r, c)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interior_diagonal_on_grid() {
        let mesh = initial_unit_square(0.25);
        let s = FeSpace::new(&mesh, 1).unwrap();
        let k = stiffness(&s, &vec![1.0; s.n_dofs]);
        let centre = s.dof_coords.iter().position(|p| *p == [0.5, 0.5]).unwrap();
        assert!((k.get(centre, centre) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn p1_load_is_area_share() {
        let mesh = initial_lshape(0.25);
        let s = FeSpace::new(&mesh, 1).unwrap();
        let b = load(&s, |_| 1.0);
        let mut expect = vec![0.0; s.n_dofs];
        for t in 0..mesh.n_triangles() {
            for &v in &mesh.triangles[t] {
                expect[v] += mesh.area(t) / 3.0;
            }
        }
        for (x, y) in b.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_symmetric_and_exact_for_polynomials() {
        let mesh = initial_lshape(0.25);
        for p in 1..=3 {
            let s = FeSpace::new(&mesh, p).unwrap();
            let a = s.interpolate(|x| 1.0 + x[0] * x[1]);
            let k = stiffness(&s, &a);
            let kt = k.transpose();
            for r in 0..s.n_dofs {
                for (c, v) in k.row(r) {
                    assert!((v - kt.get(r, c)).abs() < 1e-13);
                }
            }
            // constants lie in the kernel
            let ones = vec![1.0; s.n_dofs];
            assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn prolongation_reproduces_polynomials() {
        let coarse_mesh = initial_lshape(0.25);
        let (fine_mesh, anc) = coarse_mesh.uniform_refine_with_parents(2);
        for p in 1..=3 {
            let c = FeSpace::new(&coarse_mesh, p).unwrap();
            let f = FeSpace::new(&fine_mesh, p).unwrap();
            let pm = prolongation(&c, &f, &anc);
            let poly = |x: [f64; 2]| x[0].powi(p as i32) - 2.0 * x[1] + 0.5;
            let uc = c.interpolate(poly);
            let uf = pm.matvec(&uc);
            let exact = f.interpolate(poly);
            for (a, b) in uf.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-12);
            }
            for (d, x) in c.dof_coords.iter().enumerate() {
                let fd = f.dof_coords.iter().position(|y| (y[0] - x[0]).abs() + (y[1] - x[1]).abs() < 1e-14).unwrap();
                assert!((uf[fd] - uc[d]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn laplacian_of_quadratic() {
        let g = ElementGeom::new([[0.1, 0.2], [0.9, 0.3], [0.4, 1.1]]);
        let r = RefElement::new(2).unwrap();
        // interpolate u = x^2 + 3 y^2, Laplacian 8
        let coeffs: Vec<f64> = r.nodes.iter().map(|&xi| {
            let x = g.to_physical(xi);
            x[0] * x[0] + 3.0 * x[1] * x[1]
        }).collect();
        let (_, _, h) = r.eval_all([0.3, 0.3]);
        let lap: f64 = h.iter().zip(&coeffs).map(|(h, c)| c * g.laplacian(*h)).sum();
        assert!((lap - 8.0).abs() < 1e-10);
    }
}
