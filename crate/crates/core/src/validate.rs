//! Monte Carlo estimate of the energy error against sampled reference solves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::adapt::{AdaptiveRun, Problem};
use crate::chaos::{hermite_all, ModeScaling, MultiIndexSet};
use crate::error::{Error, Result};
use crate::fem::{load, prolongation, stiffness, stiffness_with, FeSpace};
use crate::field::AffineField;
use crate::galerkin::CoeffTensor;
use crate::mesh::Mesh2D;
use crate::sparse::{dot, Cholesky, Csr};

/// Sampling measure for the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    /// Standard Gaussian in every coordinate.
    #[serde(rename = "pi0")]
    Reference,
    /// `N(0, sigma_m(theta rho)^2)` in coordinate `m`.
    #[serde(rename = "weighted")]
    Weighted,
}

#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Uniform refinements of the finest adaptive mesh for the reference.
    pub uplift: usize,
    pub measure: Measure,
    /// Validate every `cadence`-th iterate; the last one always.
    pub cadence: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { samples: 250, seed: 0, uplift: 1, measure: Measure::Reference, cadence: 1 }
    }
}

/// `E = (mean e^2)^{1/2}` and the standard error of the mean `e^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub error: f64,
    pub stderr: f64,
}

impl McEstimate {
    pub fn from_squares(sq: &[f64]) -> Self {
        let n = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / n;
        let var = if sq.len() > 1 { sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        McEstimate { error: mean.sqrt(), stderr: (var / n).sqrt() }
    }
}

/// Parameter sample `index`, drawn from its own ChaCha stream.
pub fn sample_parameter(seed: u64, index: u64, scaling: &ModeScaling, modes: usize, measure: Measure) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..modes)
        .map(|m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            match measure {
                Measure::Reference => z,
                Measure::Weighted => z * scaling.weight_sigma(m),
            }
        })
        .collect()
}

/// `P_mu(y)` for every `mu` in `set`, orthonormal under the weighted measure.
pub fn chaos_values(set: &MultiIndexSet, scaling: &ModeScaling, y: &[f64]) -> Vec<f64> {
    let per_mode: Vec<Vec<f64>> = (0..set.modes())
        .map(|m| hermite_all(scaling.weight_variance(m), set.dim(m) - 1, y.get(m).copied().unwrap_or(0.0)))
        .collect();
    set.iter().map(|mu| mu.iter().enumerate().map(|(m, &k)| per_mode[m][k]).product()).collect()
}

/// Nodal values of `sum_mu u_mu P_mu(y)`.
pub fn evaluate(u: &CoeffTensor, scaling: &ModeScaling, y: &[f64]) -> Vec<f64> {
    let p = chaos_values(&u.set, scaling, y);
    (0..u.n_dofs).map(|j| dot(u.row(j), &p)).collect()
}

/// Finite element solution of `-div(exp(gamma(y)) grad u) = f` with the
/// exact coefficient at the quadrature points.
pub fn reference_solve(
    space: &FeSpace,
    field: &AffineField,
    y: &[f64],
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
) -> Result<Vec<f64>> {
    let k = stiffness_with(space, |x| field.gamma(x, y).exp());
    let kf = k.restrict(&space.free_index, space.n_free(), &space.free_index, space.n_free());
    let b = load(space, f);
    let mut x: Vec<f64> = space.free_dofs.iter().map(|&d| b[d]).collect();
    Cholesky::new(&kf)?.solve_rows(&mut x, 1);
    let mut u = vec![0.0; space.n_dofs];
    for (&d, v) in space.free_dofs.iter().zip(x) {
        u[d] = v;
    }
    Ok(u)
}

/// Reference mesh and, per iterate, the map from reference triangles to the
/// iterate's triangles.
pub fn reference_mesh(run: &AdaptiveRun, uplift: usize) -> (Mesh2D, Vec<Vec<usize>>) {
    let last = run.iterates.last().expect("run has at least one iterate");
    let (mesh, mut map) = last.mesh.uniform_refine_with_parents(uplift);
    let mut maps = vec![Vec::new(); run.iterates.len()];
    for k in (0..run.iterates.len()).rev() {
        maps[k] = map.clone();
        if let Some(parent) = &run.iterates[k].parent {
            map = map.iter().map(|&t| parent[t]).collect();
        }
    }
    (mesh, maps)
}

/// Monte Carlo energy errors of the iterates, `None` where skipped.
pub fn mc_errors(run: &AdaptiveRun, problem: &Problem, cfg: &McConfig) -> Result<Vec<Option<McEstimate>>> {
    if cfg.samples == 0 {
        return Err(Error::ValidationError { key: "mc.samples".into(), reason: "must be positive".into() });
    }
    if cfg.cadence == 0 {
        return Err(Error::ValidationError { key: "mc.cadence".into(), reason: "must be positive".into() });
    }
    let n = run.iterates.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let order = problem.coef.space.order;
    let (mesh, maps) = reference_mesh(run, cfg.uplift);
    let fine = FeSpace::new(&mesh, order)?;
    let unit = stiffness(&fine, &vec![1.0; fine.n_dofs]);
    let chosen: Vec<usize> = (0..n).filter(|&k| k % cfg.cadence == 0 || k + 1 == n).collect();
    let spaces: Vec<(usize, FeSpace, Csr)> = chosen
        .iter()
        .map(|&k| {
            let s = FeSpace::new(&run.iterates[k].mesh, order)?;
            let p = prolongation(&s, &fine, &maps[k]);
            Ok((k, s, p))
        })
        .collect::<Result<_>>()?;
    let scaling = &problem.coef.scaling;
    let modes = problem.field.n_modes();
    let f = problem.source.as_ref();
    let squares: Vec<Vec<f64>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|s| {
            let y = sample_parameter(cfg.seed, s, scaling, modes, cfg.measure);
            let reference = reference_solve(&fine, &problem.field, &y, f)?;
            Ok(spaces
                .iter()
                .map(|(k, _, p)| {
                    let coarse = evaluate(&run.iterates[*k].u, scaling, &y);
                    let e: Vec<f64> = reference.iter().zip(p.matvec(&coarse)).map(|(a, b)| a - b).collect();
                    dot(&unit.matvec(&e), &e)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![None; n];
    for (c, (k, _, _)) in spaces.iter().enumerate() {
        let sq: Vec<f64> = squares.iter().map(|row| row[c]).collect();
        out[*k] = Some(McEstimate::from_squares(&sq));
    }
    Ok(out)
}
