//! Compressed sparse rows, a sparse Cholesky wrapper and preconditioned CG.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Sums duplicate entries; columns sorted within each row.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; nrows + 1];
        for &(r, c, _) in trip {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            count[r + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut cols = vec![0usize; trip.len()];
        let mut vals = vec![0.0; trip.len()];
        for &(r, c, v) in trip {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(trip.len());
        let mut data = Vec::with_capacity(trip.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((count[r]..count[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `y = A X` for `X` stored row-major with `k` columns.
    pub fn matmul_rows(&self, x: &[f64], k: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows * k];
        for r in 0..self.nrows {
            let yr = &mut y[r * k..(r + 1) * k];
            for (c, v) in self.row(r) {
                for (a, b) in yr.iter_mut().zip(&x[c * k..(c + 1) * k]) {
                    *a += v * b;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let trip: Vec<_> = (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v))).collect();
        Csr::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// Keeps rows and columns whose map entry is `Some(new index)`.
    pub fn restrict(&self, rows: &[Option<usize>], nr: usize, cols: &[Option<usize>], nc: usize) -> Csr {
        let mut trip = Vec::new();
        for r in 0..self.nrows {
            if let Some(rr) = rows[r] {
                for (c, v) in self.row(r) {
                    if let Some(cc) = cols[c] {
                        trip.push((rr, cc, v));
                    }
                }
            }
        }
        Csr::from_triplets(nr, nc, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct Cholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl Cholesky {
    pub fn new(a: &Csr) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> = (0..a.nrows)
            .flat_map(|r| a.row(r).filter(move |(c, _)| *c <= r).map(move |(c, v)| Triplet::new(r, c, v)))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trip)
            .map_err(|e| Error::NumericalBreakdown(format!("sparse matrix: {e:?}")))?;
        let llt = mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::NumericalBreakdown(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Cholesky { n: a.nrows, llt })
    }

    /// Solves in place for `k` right-hand sides stored row-major (`n x k`).
    pub fn solve_rows(&self, x: &mut [f64], k: usize) {
        let n = self.n;
        let mut m = Mat::<f64>::from_fn(n, k, |i, j| x[i * k + j]);
        self.llt.solve_in_place(m.as_mut());
        for i in 0..n {
            for j in 0..k {
                x[i * k + j] = m[(i, j)];
            }
        }
    }
}

/// Outcome of a CG solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for `A x = b` starting from zero.
/// Stops when `|b - A x| <= tol |b|`.
pub fn pcg(
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_m: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((x, CgReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z = apply_m(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for it in 1..=maxit {
        let ap = apply_a(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::NumericalBreakdown(format!("operator not positive definite (p'Ap = {pap:e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok((x, CgReport { iterations: it, relative_residual: res }));
        }
        z = apply_m(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { maxit, residual: res })
}
