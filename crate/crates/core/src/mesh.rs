//! Conforming triangulations with newest vertex bisection.
//!
//! A triangle `[a, b, c]` is stored counter-clockwise with its refinement
//! edge `(a, b)`; `c` is the newest vertex. Local edge `k` is the edge
//! opposite vertex `k`, so local edge 2 is always the refinement edge.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints with `v[0] < v[1]`; the normal is the tangent
    /// `v[1] - v[0]` rotated clockwise.
    pub v: [usize; 2],
    /// Adjacent triangles; `tris[1] == NONE` on the domain boundary.
    pub tris: [usize; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tris[1] == NONE
    }
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Number of bisections separating each triangle from the initial mesh.
    pub generation: Vec<u32>,
    edges: Vec<Edge>,
    tri_edges: Vec<[usize; 3]>,
}

/// Parent/child bookkeeping of one `bisect` call.
#[derive(Debug, Clone, Default)]
pub struct RefinementMap {
    /// Coarse parent of every fine triangle.
    pub parent: Vec<usize>,
    /// Fine children of every coarse triangle (itself when untouched).
    pub children: Vec<Vec<usize>>,
    /// New midpoint vertices and the endpoints of the bisected edge.
    pub new_vertices: Vec<(usize, [usize; 2])>,
}

/// Fixed-orientation frame of an interior edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpFrame {
    /// Jumps read `(xi|_plus - xi|_minus) . normal`.
    pub plus: usize,
    pub minus: usize,
    pub normal: [f64; 2],
    pub length: f64,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh2D {
    /// Builds the edge topology. Triangles must be counter-clockwise with the
    /// refinement edge in local position 2.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Self {
        let generation = vec![0; triangles.len()];
        Self::with_generation(vertices, triangles, generation)
    }

    fn with_generation(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, generation: Vec<u32>) -> Self {
        let mut map: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 4);
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for (k, slot) in te.iter_mut().enumerate() {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let kk = key(a, b);
                let id = *map.entry(kk).or_insert_with(|| {
                    edges.push(Edge { v: [kk.0, kk.1], tris: [NONE, NONE] });
                    edges.len() - 1
                });
                let e = &mut edges[id];
                if e.tris[0] == NONE {
                    e.tris[0] = t;
                } else {
                    assert!(e.tris[1] == NONE, "edge shared by more than two triangles");
                    e.tris[1] = t;
                }
                *slot = id;
            }
            tri_edges.push(te);
        }
        Mesh2D { vertices, triangles, generation, edges, tri_edges }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of triangle `t` by local edge number.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].v;
        dist(self.vertices[a], self.vertices[b])
    }

    /// Longest edge of `t`.
    pub fn h(&self, t: usize) -> f64 {
        self.tri_edges[t].iter().map(|&e| self.edge_length(e)).fold(0.0, f64::max)
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flag = vec![false; self.n_vertices()];
        for e in &self.edges {
            if e.is_boundary() {
                flag[e.v[0]] = true;
                flag[e.v[1]] = true;
            }
        }
        flag
    }

    /// Unit normal of edge `e` in its fixed orientation.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].v;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let l = dist(p, q);
        [(q[1] - p[1]) / l, -(q[0] - p[0]) / l]
    }

    pub fn edge_jump_frame(&self, e: usize) -> Result<JumpFrame> {
        let edge = &self.edges[e];
        if edge.is_boundary() {
            return Err(Error::BoundaryEdge(e));
        }
        Ok(JumpFrame {
            plus: edge.tris[0],
            minus: edge.tris[1],
            normal: self.edge_normal(e),
            length: self.edge_length(e),
        })
    }

    /// Interior angles of `t` in radians.
    pub fn angles(&self, t: usize) -> [f64; 3] {
        let p = self.corners(t);
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let a = p[k];
            let b = p[(k + 1) % 3];
            let c = p[(k + 2) % 3];
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (dist(a, b) * dist(a, c));
            *o = cos.clamp(-1.0, 1.0).acos();
        }
        out
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.n_triangles())
            .flat_map(|t| self.angles(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Vertices sitting at the midpoint of an edge with a single neighbour.
    /// Bisection creates hanging nodes only at midpoints, so zero means
    /// conforming.
    pub fn hanging_nodes(&self) -> usize {
        let quant = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let verts: std::collections::HashSet<(i64, i64)> = self.vertices.iter().map(|&p| quant(p)).collect();
        self.edges
            .iter()
            .filter(|e| e.is_boundary())
            .filter(|e| {
                let (p, q) = (self.vertices[e.v[0]], self.vertices[e.v[1]]);
                verts.contains(&quant([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]))
            })
            .count()
    }

    /// Newest vertex bisection of the marked triangles with conforming
    /// closure. Every marked triangle is bisected at least once.
    pub fn bisect(&self, marked: &[usize]) -> (Mesh2D, RefinementMap) {
        let nt = self.n_triangles();
        let mut edge_marked = vec![false; self.edges.len()];
        for &t in marked {
            edge_marked[self.tri_edges[t][2]] = true;
        }
        // closure: a triangle with any marked edge must bisect its refinement edge
        let mut changed = true;
        while changed {
            changed = false;
            for te in &self.tri_edges {
                if !edge_marked[te[2]] && (edge_marked[te[0]] || edge_marked[te[1]]) {
                    edge_marked[te[2]] = true;
                    changed = true;
                }
            }
        }
        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![NONE; self.edges.len()];
        let mut new_vertices = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if edge_marked[e] {
                let (p, q) = (self.vertices[edge.v[0]], self.vertices[edge.v[1]]);
                midpoint[e] = vertices.len();
                new_vertices.push((vertices.len(), edge.v));
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            }
        }
        let mut triangles = Vec::with_capacity(nt * 2);
        let mut generation = Vec::with_capacity(nt * 2);
        let mut parent = Vec::with_capacity(nt * 2);
        let mut children = Vec::with_capacity(nt);
        for t in 0..nt {
            let [v0, v1, v2] = self.triangles[t];
            let te = self.tri_edges[t];
            let g = self.generation[t];
            let mut kids = Vec::new();
            let mut push = |tri: [usize; 3], gen: u32, kids: &mut Vec<usize>| {
                kids.push(triangles.len());
                triangles.push(tri);
                generation.push(gen);
                parent.push(t);
            };
            if !edge_marked[te[2]] {
                push([v0, v1, v2], g, &mut kids);
            } else {
                let m = midpoint[te[2]];
                // child [v2, v0, m] carries old edge 1, child [v1, v2, m] old edge 0
                if edge_marked[te[1]] {
                    let m1 = midpoint[te[1]];
                    push([v0, m, m1], g + 2, &mut kids);
                    push([m, v2, m1], g + 2, &mut kids);
                } else {
                    push([v2, v0, m], g + 1, &mut kids);
                }
                if edge_marked[te[0]] {
                    let m0 = midpoint[te[0]];
                    push([v2, m, m0], g + 2, &mut kids);
                    push([m, v1, m0], g + 2, &mut kids);
                } else {
                    push([v1, v2, m], g + 1, &mut kids);
                }
            }
            children.push(kids);
        }
        let mesh = Mesh2D::with_generation(vertices, triangles, generation);
        (mesh, RefinementMap { parent, children, new_vertices })
    }

    /// Bisects every triangle `levels` times.
    pub fn uniform_refine(&self, levels: usize) -> Mesh2D {
        self.uniform_refine_with_parents(levels).0
    }

    /// Like `uniform_refine`, also returning the ancestor in `self` of every
    /// fine triangle.
    pub fn uniform_refine_with_parents(&self, levels: usize) -> (Mesh2D, Vec<usize>) {
        let mut mesh = self.clone();
        let mut anc: Vec<usize> = (0..self.n_triangles()).collect();
        for _ in 0..levels {
            let all: Vec<usize> = (0..mesh.n_triangles()).collect();
            let (fine, map) = mesh.bisect(&all);
            anc = map.parent.iter().map(|&p| anc[p]).collect();
            mesh = fine;
        }
        (mesh, anc)
    }

    /// Plain text export: vertex count, `x y` lines, triangle count,
    /// `v0 v1 v2 refEdge` lines (refEdge is the local edge number).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.n_vertices())?;
        for p in &self.vertices {
            writeln!(w, "{:e} {:e}", p[0], p[1])?;
        }
        writeln!(w, "{}", self.n_triangles())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {} 2", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Mesh2D> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            Ok(s) => Some(Ok((i + 1, s))),
            Err(e) => Some(Err(Error::from(e))),
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines.next().unwrap_or_else(|| Err(Error::ParseError { line: 0, reason: format!("missing {what}") }))
        };
        let bad = |line: usize, reason: &str| Error::ParseError { line, reason: reason.to_string() };
        let (ln, s) = next("vertex count")?;
        let nv: usize = s.trim().parse().map_err(|_| bad(ln, "vertex count"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, s) = next("vertex")?;
            let xs: Vec<f64> = s
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad(ln, "vertex coordinate")))
                .collect::<Result<_>>()?;
            if xs.len() != 2 {
                return Err(bad(ln, "expected two coordinates"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let (ln, s) = next("triangle count")?;
        let ntri: usize = s.trim().parse().map_err(|_| bad(ln, "triangle count"))?;
        let mut triangles = Vec::with_capacity(ntri);
        for _ in 0..ntri {
            let (ln, s) = next("triangle")?;
            let xs: Vec<usize> = s
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad(ln, "triangle entry")))
                .collect::<Result<_>>()?;
            if xs.len() != 4 || xs[3] > 2 || xs[..3].iter().any(|&v| v >= nv) {
                return Err(bad(ln, "expected `v0 v1 v2 refEdge`"));
            }
            // rotate so that the refinement edge becomes local edge 2
            let r = (xs[3] + 1) % 3;
            triangles.push([xs[r], xs[(r + 1) % 3], xs[(r + 2) % 3]]);
        }
        Ok(Mesh2D::new(vertices, triangles))
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
}

/// Structured mesh of `[0,1]^2`, optionally with the quadrant `[0.5,1]^2`
/// removed. Each grid square is split along its diagonal, which is the
/// refinement edge of both halves.
fn grid_mesh(n: usize, lshape: bool) -> Mesh2D {
    let mut index = vec![NONE; (n + 1) * (n + 1)];
    let mut vertices = Vec::new();
    let half = n / 2;
    let keep_square = |i: usize, j: usize| !(lshape && i >= half && j >= half);
    for j in 0..=n {
        for i in 0..=n {
            let used = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(a, b)| a < n && b < n && keep_square(a, b));
            if used {
                index[j * (n + 1) + i] = vertices.len();
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
    }
    let id = |i: usize, j: usize| index[j * (n + 1) + i];
    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if !keep_square(i, j) {
                continue;
            }
            let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([p00, p11, p01]);
            triangles.push([p11, p00, p10]);
        }
    }
    Mesh2D::new(vertices, triangles)
}

/// L-shape `(0,1)^2 \ [0.5,1]^2` with grid spacing close to `h0`
/// (rounded so that 0.5 is a grid line).
pub fn initial_lshape(h0: f64) -> Mesh2D {
    grid_mesh(grid_count(h0), true)
}

/// Unit square with grid spacing close to `h0`.
pub fn initial_unit_square(h0: f64) -> Mesh2D {
    grid_mesh(grid_count(h0), false)
}

fn grid_count(h0: f64) -> usize {
    assert!(h0 > 0.0, "mesh size must be positive");
    let n = (1.0 / h0).round().max(2.0) as usize;
    n + n % 2
}
