//! Adaptive loop: solve, estimate, conditional Dörfler marking, refine.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::chaos::{MultiIndexSet, TripleProductTable, MAX_DEGREE};
use crate::error::{Error, Result};
use crate::estimator::{lipschitz_diagnostic, Estimator, EstimatorReport};
use crate::fem::{prolongation, FeSpace};
use crate::field::{expand_lognormal, select_degrees, AffineField, DiscreteCoefficient};
use crate::galerkin::{assemble_rhs, energy_product, free_rows, solve, CoeffTensor, GalerkinOperator};
use crate::mesh::Mesh2D;
use crate::sparse::{CgReport, Csr};
use crate::validate::McEstimate;

/// Relative slack on Dörfler thresholds so that rounding in the summation
/// order cannot force an extra element at `theta = 1`.
pub const MARK_SLACK: f64 = 1e-12;

/// Smallest set of elements with `(sum_M eta_T^2)^{1/2} >= theta (sum eta_T^2)^{1/2}`
/// up to [`MARK_SLACK`]. Largest indicators first, ties by id.
pub fn doerfler_mark_det(indicators: &[f64], theta: f64) -> Result<Vec<usize>> {
    if indicators.is_empty() {
        return Err(Error::EmptyIndicators);
    }
    let order = sorted_desc(indicators);
    let total: f64 = order.iter().map(|&t| indicators[t] * indicators[t]).sum();
    Ok(greedy(&order, |t| indicators[t] * indicators[t], theta * theta * total))
}

/// Smallest set of modes whose slab values sum to at least `theta * total`,
/// up to [`MARK_SLACK`].
pub fn doerfler_mark_sto(slabs: &[f64], theta: f64, total: f64) -> Result<Vec<usize>> {
    let target = theta * total;
    let available: f64 = slabs.iter().sum();
    if available < target * (1.0 - MARK_SLACK) {
        return Err(Error::UnreachableThreshold { threshold: target, available });
    }
    Ok(greedy(&sorted_desc(slabs), |m| slabs[m], target))
}

fn greedy(order: &[usize], value: impl Fn(usize) -> f64, target: f64) -> Vec<usize> {
    let need = target * (1.0 - MARK_SLACK);
    let mut acc = 0.0;
    let mut out = Vec::new();
    for &k in order {
        if acc >= need {
            break;
        }
        acc += value(k);
        out.push(k);
    }
    out
}

fn sorted_desc(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    #[serde(rename = "det")]
    Deterministic,
    #[serde(rename = "sto")]
    Stochastic,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Deterministic => "det",
            Branch::Stochastic => "sto",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptConfig {
    pub theta_det: f64,
    pub theta_sto: f64,
    pub c_eq: f64,
    /// Look-ahead per mode; missing entries are 1.
    pub lookahead: Vec<usize>,
    pub max_iter: usize,
    pub solver_tol: f64,
    pub solver_maxit: usize,
    pub order: usize,
    pub initial_dims: Vec<usize>,
    pub omega: f64,
    pub tau: f64,
    /// Stop once `eta` falls below this value.
    pub eta_stop: Option<f64>,
    /// Stop once the dense dof count exceeds this value.
    pub dof_cap: Option<usize>,
    /// Record `c(Lambda_d)` per iteration.
    pub lipschitz: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            theta_det: 0.3,
            theta_sto: 0.5,
            c_eq: 5.0,
            lookahead: Vec::new(),
            max_iter: 12,
            solver_tol: 1e-10,
            solver_maxit: 10_000,
            order: 1,
            initial_dims: vec![2],
            omega: 1.0,
            tau: 4.0,
            eta_stop: None,
            dof_cap: None,
            lipschitz: false,
        }
    }
}

/// Initial mesh (also the coefficient mesh), field, its discretization and
/// the source term.
#[derive(Clone)]
pub struct Problem {
    pub mesh: Mesh2D,
    pub field: AffineField,
    pub coef: DiscreteCoefficient,
    pub source: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
}

impl Problem {
    /// Discretizes `exp(gamma)` on `mesh` with per-mode degrees chosen so the
    /// chaos coefficients drop below `dhat_tol`.
    pub fn new(
        mesh: Mesh2D,
        field: AffineField,
        rho: f64,
        theta: f64,
        order: usize,
        dhat_tol: f64,
        source: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        let scaling = field.scaling(rho, theta);
        let dhat = select_degrees(&field, &scaling, dhat_tol, MAX_DEGREE);
        let coef = expand_lognormal(&field, &scaling, &dhat, &mesh, order)?;
        Ok(Problem { mesh, field, coef, source })
    }
}

/// State of one iteration of the loop.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub level: usize,
    pub mesh: Mesh2D,
    /// Initial-mesh triangle containing each triangle.
    pub ancestor: Vec<usize>,
    /// Previous-mesh triangle containing each triangle.
    pub parent: Option<Vec<usize>>,
    pub set: MultiIndexSet,
    pub u: CoeffTensor,
    pub cg: CgReport,
    pub report: EstimatorReport,
    pub dofs: usize,
    pub branch: Option<Branch>,
    pub marked: usize,
    /// The stochastic threshold was unreachable and every mode was marked.
    pub sto_fallback: bool,
    /// `max |B(u - P u_prev, P v)| / (|u|_B |P v|_B)` over coarse basis
    /// functions `v`.
    pub orthogonality: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub iterates: Vec<Iterate>,
    /// Error that ended the loop early.
    pub failure: Option<String>,
}

/// Triple-product table size covering `Lambda_d + Lambda_hat`.
pub fn table_size(set: &MultiIndexSet, dhat: &[usize]) -> usize {
    let modes = set.modes().max(dhat.len());
    (0..modes)
        .map(|m| {
            let dh = dhat.get(m).copied().unwrap_or(1);
            set.dim(m) + dh - 1
        })
        .chain(dhat.iter().copied())
        .max()
        .unwrap_or(1)
}

fn lookahead(cfg: &AdaptConfig, m: usize) -> usize {
    cfg.lookahead.get(m).copied().unwrap_or(1)
}

/// Runs the adaptive loop; `observe` sees every iterate once complete.
pub fn run(problem: &Problem, cfg: &AdaptConfig, mut observe: impl FnMut(&Iterate)) -> Result<AdaptiveRun> {
    validate_config(cfg)?;
    let coef = &problem.coef;
    let f = problem.source.as_ref();
    let mut mesh = problem.mesh.clone();
    let mut ancestor: Vec<usize> = (0..mesh.n_triangles()).collect();
    let mut parent: Option<Vec<usize>> = None;
    let mut dims = cfg.initial_dims.clone();
    let mut prev: Option<(FeSpace, CoeffTensor)> = None;
    let mut iterates = Vec::new();
    let mut failure = None;
    let q: Vec<usize> = (0..coef.n_modes().max(dims.len())).map(|m| lookahead(cfg, m)).collect();
    for level in 1.. {
        let set = MultiIndexSet::new(dims.clone());
        let space = FeSpace::new(&mesh, cfg.order)?;
        let table = TripleProductTable::new(table_size(&set, &coef.dhat));
        let op = GalerkinOperator::new(&space, coef, &ancestor, &set, &table)?;
        let rhs = assemble_rhs(&space, f, &set);
        let (u, cg) = match solve(&op, &space, &rhs, cfg.solver_tol, cfg.solver_maxit) {
            Ok(x) => x,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let orthogonality = match (&prev, &parent) {
            (Some((ps, pu)), Some(par)) => Some(orthogonality_ratio(&op, &space, ps, pu, &u, par)),
            _ => None,
        };
        let est = Estimator::new(&mesh, &space, coef, &ancestor, &set, &table)?;
        let report = est.estimate(&u, &f, &q, cfg.c_eq);
        let lipschitz =
            if cfg.lipschitz { Some(lipschitz_diagnostic(&set, coef, &table, 0)?.det) } else { None };
        let dofs = space.n_free() * set.len();
        let stop = level >= cfg.max_iter
            || cfg.eta_stop.is_some_and(|s| report.eta <= s)
            || cfg.dof_cap.is_some_and(|c| dofs >= c);
        let mut it = Iterate {
            level,
            mesh: mesh.clone(),
            ancestor: ancestor.clone(),
            parent: parent.clone(),
            set: set.clone(),
            u: u.clone(),
            cg,
            report,
            dofs,
            branch: None,
            marked: 0,
            sto_fallback: false,
            orthogonality,
            lipschitz,
        };
        if stop {
            observe(&it);
            iterates.push(it);
            break;
        }
        let r = &it.report;
        if r.eta_det >= cfg.c_eq * r.eta_sto {
            let marked = doerfler_mark_det(&r.indicators(), cfg.theta_det)?;
            let (fine, map) = mesh.bisect(&marked);
            ancestor = map.parent.iter().map(|&p| ancestor[p]).collect();
            parent = Some(map.parent);
            mesh = fine;
            it.branch = Some(Branch::Deterministic);
            it.marked = marked.len();
        } else {
            let marked = match doerfler_mark_sto(&r.slabs, cfg.theta_sto, r.eta_sto) {
                Ok(m) => m,
                Err(Error::UnreachableThreshold { .. }) => {
                    it.sto_fallback = true;
                    (0..r.slabs.len()).collect()
                }
                Err(e) => return Err(e),
            };
            for &m in &marked {
                if dims.len() <= m {
                    dims.resize(m + 1, 1);
                }
                let dhat = coef.dhat.get(m).copied().unwrap_or(1);
                let room = (MAX_DEGREE + 2).saturating_sub(dims[m] + dhat);
                dims[m] += lookahead(cfg, m).min(dhat - 1).min(room);
            }
            parent = Some((0..mesh.n_triangles()).collect());
            it.branch = Some(Branch::Stochastic);
            it.marked = marked.len();
        }
        observe(&it);
        iterates.push(it);
        prev = Some((space, u));
    }
    Ok(AdaptiveRun { iterates, failure })
}

fn validate_config(cfg: &AdaptConfig) -> Result<()> {
    let bad = |key: &str, reason: &str| Err(Error::ValidationError { key: key.into(), reason: reason.into() });
    if !(cfg.theta_det > 0.0 && cfg.theta_det <= 1.0) {
        return bad("adapt.theta_det", "must lie in (0, 1]");
    }
    if !(cfg.theta_sto > 0.0 && cfg.theta_sto <= 1.0) {
        return bad("adapt.theta_sto", "must lie in (0, 1]");
    }
    if cfg.c_eq <= 0.0 {
        return bad("adapt.c_eq", "must be positive");
    }
    if cfg.initial_dims.contains(&0) {
        return bad("adapt.dims", "dimensions must be at least 1");
    }
    if cfg.lookahead.contains(&0) {
        return bad("adapt.lookahead", "look-ahead must be at least 1");
    }
    if cfg.max_iter == 0 {
        return bad("adapt.max_iter", "must be at least 1");
    }
    Ok(())
}

/// Prolongation restricted to free dofs: fine free rows, coarse free columns.
pub fn free_prolongation(coarse: &FeSpace, fine: &FeSpace, parent: &[usize]) -> (Csr, Csr) {
    let all = prolongation(coarse, fine, parent);
    let free = all.restrict(&fine.free_index, fine.n_free(), &coarse.free_index, coarse.n_free());
    (all, free)
}

fn orthogonality_ratio(
    op: &GalerkinOperator,
    fine: &FeSpace,
    coarse: &FeSpace,
    coarse_u: &CoeffTensor,
    fine_u: &CoeffTensor,
    parent: &[usize],
) -> f64 {
    let (all, free) = free_prolongation(coarse, fine, parent);
    let l = op.width();
    let pu = coarse_u.embed(&op.set).prolongate(&all);
    let e: Vec<f64> = free_rows(fine, fine_u).iter().zip(free_rows(fine, &pu)).map(|(a, b)| a - b).collect();
    let ae = op.apply(&e);
    let pt = free.transpose();
    let g = pt.matmul_rows(&ae, l);
    let norm_u = energy_product(op, fine, fine_u, fine_u).sqrt();
    let cols: Vec<Vec<(usize, f64)>> = (0..pt.nrows).map(|j| pt.row(j).collect()).collect();
    let energy = op.basis_energy(&cols);
    let coarse_pos: Vec<usize> = coarse_u.set.iter().map(|mu| op.set.position(&mu).unwrap()).collect();
    let mut worst: f64 = 0.0;
    for j in 0..pt.nrows {
        for &p in &coarse_pos {
            let denom = norm_u * energy[j * l + p].sqrt();
            if denom > 0.0 {
                worst = worst.max(g[j * l + p].abs() / denom);
            }
        }
    }
    worst
}

/// One ledger line.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerRow {
    pub iter: usize,
    pub branch: Option<Branch>,
    pub n_triangles: usize,
    pub dims: Vec<usize>,
    pub dofs: usize,
    pub eta_det: f64,
    pub eta_sto: f64,
    pub eta: f64,
    pub mc_error: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// `err^2 = E^2 + omega eta_det^2 + omega tau eta_sto^2`.
    pub quasi_err: Option<f64>,
    /// `err_{l+1}^2 / err_l^2`.
    pub delta: Option<f64>,
    pub marked: usize,
    pub sto_fallback: bool,
    pub orthogonality: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiErrorLedger {
    pub omega: f64,
    pub tau: f64,
    pub rows: Vec<LedgerRow>,
}

impl QuasiErrorLedger {
    /// `mc[l]` is the Monte Carlo error of iterate `l`, if validated.
    pub fn new(run: &AdaptiveRun, mc: &[Option<McEstimate>], omega: f64, tau: f64) -> Self {
        let mut rows: Vec<LedgerRow> = run
            .iterates
            .iter()
            .enumerate()
            .map(|(k, it)| {
                let r = &it.report;
                let est = mc.get(k).copied().flatten();
                let quasi_err = est.map(|e| {
                    e.error * e.error + omega * r.eta_det * r.eta_det + omega * tau * r.eta_sto * r.eta_sto
                });
                LedgerRow {
                    iter: it.level,
                    branch: it.branch,
                    n_triangles: it.mesh.n_triangles(),
                    dims: it.set.dims().to_vec(),
                    dofs: it.dofs,
                    eta_det: r.eta_det,
                    eta_sto: r.eta_sto,
                    eta: r.eta,
                    mc_error: est.map(|e| e.error),
                    mc_stderr: est.map(|e| e.stderr),
                    quasi_err,
                    delta: None,
                    marked: it.marked,
                    sto_fallback: it.sto_fallback,
                    orthogonality: it.orthogonality,
                    lipschitz: it.lipschitz,
                }
            })
            .collect();
        for k in 0..rows.len().saturating_sub(1) {
            if let (Some(a), Some(b)) = (rows[k].quasi_err, rows[k + 1].quasi_err) {
                rows[k].delta = Some(b / a);
            }
        }
        QuasiErrorLedger { omega, tau, rows }
    }

    /// Range of `delta_l` when each `E^2` moves within two standard errors.
    pub fn delta_band(&self, k: usize) -> Option<(f64, f64)> {
        let (a, b) = (self.rows.get(k)?, self.rows.get(k + 1)?);
        let (qa, qb) = (a.quasi_err?, b.quasi_err?);
        let (sa, sb) = (2.0 * a.mc_stderr?, 2.0 * b.mc_stderr?);
        let hi = if qa - sa > 0.0 { (qb + sb) / (qa - sa) } else { f64::INFINITY };
        Some(((qb - sb).max(0.0) / (qa + sa), hi))
    }
}
