//! Benchmark driver, artifact emission and oracle generators.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adapt::{MARK_SLACK, doerfler_mark_det, doerfler_mark_sto, run, AdaptiveRun, Iterate, LedgerRow, Problem, QuasiErrorLedger};
use crate::chaos::{hermite_all, triple_product_1d, MultiIndexSet, TripleProductTable};
use crate::config::{Domain, FieldKind, RunConfig};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::field::{expand_lognormal, AffineField};
use crate::galerkin::{assemble_rhs, assemble_stiffness, free_rows, solve, GalerkinOperator};
use crate::mesh::{initial_lshape, initial_unit_square};
use crate::quadrature::gauss_hermite_scaled;
use crate::validate::mc_errors;

const HEADER: [&str; 12] = [
    "iter", "branch", "n_triangles", "dims", "dofs", "eta_det", "eta_sto", "eta", "mc_error", "mc_stderr",
    "quasi_err", "delta",
];

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Initial mesh, field and source described by a config.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let mesh = match cfg.domain {
        Domain::LShape => initial_lshape(cfg.h0),
        Domain::UnitSquare => initial_unit_square(cfg.h0),
    };
    let field = match cfg.field.kind {
        FieldKind::Benchmark => AffineField::benchmark(cfg.field.modes, cfg.field.decay),
        FieldKind::Zero => AffineField::zero(),
    };
    Problem::new(mesh, field, cfg.field.rho, cfg.field.theta, cfg.adapt.order, cfg.field.tail, Arc::new(|_| 1.0))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn dims_tuple(d: &[usize]) -> String {
    let parts: Vec<String> = d.iter().map(usize::to_string).collect();
    format!("({})", parts.join(","))
}

pub fn write_ledger_csv(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.branch.map(|b| b.to_string()).unwrap_or_default(),
            r.n_triangles.to_string(),
            dims_tuple(&r.dims),
            r.dofs.to_string(),
            format!("{:e}", r.eta_det),
            format!("{:e}", r.eta_sto),
            format!("{:e}", r.eta),
            opt(r.mc_error),
            opt(r.mc_stderr),
            opt(r.quasi_err),
            opt(r.delta),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Log-log plot of `eta` and the Monte Carlo error against dofs with a
/// `dofs^{-1/2}` guide.
pub fn convergence_svg(rows: &[LedgerRow]) -> String {
    let (w, h, pad) = (640.0, 480.0, 60.0);
    let pts = |f: &dyn Fn(&LedgerRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| f(r).filter(|v| *v > 0.0).map(|v| ((r.dofs.max(1) as f64).log10(), v.log10())))
            .collect()
    };
    let eta = pts(&|r| Some(r.eta));
    let err = pts(&|r| r.mc_error);
    let all: Vec<&(f64, f64)> = eta.iter().chain(&err).collect();
    if all.is_empty() {
        return format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\"/>\n");
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| all.iter().map(|p| sel(p)).fold(init, f);
    let (x0, x1) = (fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
    let (y0, y1) = (fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, f64::NEG_INFINITY, |p| p.1));
    let (x0, x1) = (x0 - 0.1, x1.max(x0 + 0.5) + 0.1);
    let (y0, y1) = (y0 - 0.2, y1.max(y0 + 0.5) + 0.2);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let path = |p: &[(f64, f64)]| -> String {
        p.iter()
            .enumerate()
            .map(|(i, (x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(*x), sy(*y)))
            .collect()
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s += &format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for k in x0.ceil() as i32..=x1.floor() as i32 {
        s += &format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">1e{k}</text>\n",
            sx(k as f64),
            h - pad + 18.0
        );
    }
    for k in y0.ceil() as i32..=y1.floor() as i32 {
        s += &format!("<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">1e{k}</text>\n", pad - 6.0, sy(k as f64) + 4.0);
    }
    s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">dofs</text>\n", w / 2.0, h - 15.0);
    let anchor = eta.first().copied().unwrap_or(*all[0]);
    let guide = [(anchor.0, anchor.1 + 0.1), (x1, anchor.1 + 0.1 - 0.5 * (x1 - anchor.0))];
    s += &format!("<path d=\"{}\" stroke=\"gray\" stroke-dasharray=\"4 3\" fill=\"none\"/>\n", path(&guide));
    s += &format!("<path d=\"{}\" stroke=\"#1f77b4\" fill=\"none\" stroke-width=\"2\"/>\n", path(&eta));
    if !err.is_empty() {
        s += &format!("<path d=\"{}\" stroke=\"#d62728\" fill=\"none\" stroke-width=\"2\"/>\n", path(&err));
    }
    s += &format!("<text x=\"{}\" y=\"{}\" fill=\"#1f77b4\">estimator</text>\n", w - pad - 120.0, pad + 18.0);
    s += &format!("<text x=\"{}\" y=\"{}\" fill=\"#d62728\">MC error</text>\n", w - pad - 120.0, pad + 34.0);
    s += &format!("<text x=\"{}\" y=\"{}\" fill=\"gray\">slope -1/2</text>\n", w - pad - 120.0, pad + 50.0);
    s += "</svg>\n";
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a RunConfig,
    iterations: usize,
    failure: Option<&'a str>,
    final_row: Option<&'a LedgerRow>,
    n_coefficient_nodes: usize,
    dhat: &'a [usize],
}

fn write_mesh(dir: &Path, it: &Iterate) -> Result<()> {
    let f = File::create(dir.join(format!("mesh_{:03}.txt", it.level))).map_err(io)?;
    it.mesh.write_text(BufWriter::new(f))
}

/// Outcome of a benchmark run.
pub struct Benchmark {
    pub run: AdaptiveRun,
    pub ledger: QuasiErrorLedger,
}

/// Runs the adaptive loop, the Monte Carlo validation and writes every
/// artifact into `cfg.out_dir`.
pub fn run_benchmark(cfg: &RunConfig, mut log: impl FnMut(&str)) -> Result<Benchmark> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(io)?;
    let problem = build_problem(cfg)?;
    let mut partial = AdaptiveRun { iterates: Vec::new(), failure: None };
    let mut write_err = None;
    let result = run(&problem, &cfg.adapt, |it| {
        partial.iterates.push(it.clone());
        let rows = QuasiErrorLedger::new(&partial, &[], cfg.adapt.omega, cfg.adapt.tau).rows;
        let step = || -> Result<()> {
            if cfg.meshes {
                write_mesh(dir, it)?;
            }
            write_ledger_csv(&dir.join("ledger.csv"), &rows)
        };
        if let Err(e) = step() {
            write_err.get_or_insert(e);
        }
        log(&format!(
            "iter {:>2} {} triangles {:>6} dims {} dofs {:>8} eta {:.4e} (det {:.4e}, sto {:.4e}) cg {}",
            it.level,
            it.branch.map(|b| b.to_string()).unwrap_or_else(|| "end".into()),
            it.mesh.n_triangles(),
            dims_tuple(it.set.dims()),
            it.dofs,
            it.report.eta,
            it.report.eta_det,
            it.report.eta_sto,
            it.cg.iterations
        ));
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    let run = result?;
    let mc = if cfg.mc.samples > 0 && !run.iterates.is_empty() {
        log(&format!("Monte Carlo validation with {} samples", cfg.mc.samples));
        mc_errors(&run, &problem, &cfg.mc)?
    } else {
        vec![None; run.iterates.len()]
    };
    let ledger = QuasiErrorLedger::new(&run, &mc, cfg.adapt.omega, cfg.adapt.tau);
    write_ledger_csv(&dir.join("ledger.csv"), &ledger.rows)?;
    let summary = Summary {
        config: cfg,
        iterations: run.iterates.len(),
        failure: run.failure.as_deref(),
        final_row: ledger.rows.last(),
        n_coefficient_nodes: problem.coef.n_nodes(),
        dhat: &problem.coef.dhat,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(io)?;
    fs::write(dir.join("summary.json"), json + "\n").map_err(io)?;
    if cfg.svg {
        fs::write(dir.join("convergence.svg"), convergence_svg(&ledger.rows)).map_err(io)?;
    }
    if let Some(f) = &run.failure {
        return Err(Error::NumericalBreakdown(format!("adaptive loop stopped early: {f}")));
    }
    Ok(Benchmark { run, ledger })
}

/// Oracle suites available from the command line.
pub const ORACLE_SUITES: [&str; 3] = ["triple", "galerkin", "marking"];

/// Runs one oracle suite, writes its golden file into `dir` and returns the
/// largest discrepancy found.
pub fn run_oracle(suite: &str, dir: &Path) -> Result<f64> {
    fs::create_dir_all(dir).map_err(io)?;
    match suite {
        "triple" => triple_oracle(dir),
        "galerkin" => galerkin_oracle(dir),
        "marking" => marking_oracle(dir),
        _ => Err(Error::ValidationError { key: "suite".into(), reason: format!("unknown suite '{suite}'") }),
    }
}

fn golden(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name)).map_err(io)?))
}

fn triple_oracle(dir: &Path) -> Result<f64> {
    let mut out = golden(dir, "triple_products.csv")?;
    writeln!(out, "variance,i,j,k,value,quadrature").map_err(io)?;
    let table = TripleProductTable::new(17);
    let mut worst: f64 = 0.0;
    for variance in [1.0, 1.21, 4.0] {
        let rule = gauss_hermite_scaled(64, variance);
        let vals: Vec<Vec<f64>> = rule.nodes.iter().map(|&y| hermite_all(variance, 16, y)).collect();
        for i in 0..=16 {
            for j in i..=16 {
                for k in j..=16 {
                    if i + j + k > 16 {
                        continue;
                    }
                    let q: f64 = rule.weights.iter().zip(&vals).map(|(w, p)| w * p[i] * p[j] * p[k]).sum();
                    let v = triple_product_1d(variance, i, j, k);
                    worst = worst.max((v - q).abs()).max((table.get(i, j, k) - q).abs());
                    writeln!(out, "{variance},{i},{j},{k},{v:e},{q:e}").map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)?;
    Ok(worst)
}

fn galerkin_oracle(dir: &Path) -> Result<f64> {
    let mesh = initial_lshape(0.25);
    let field = AffineField::benchmark(2, 2.0);
    let scaling = field.scaling(1.0, 0.1);
    let coef = expand_lognormal(&field, &scaling, &[3, 3], &mesh, 1)?;
    let space = FeSpace::new(&mesh, 1)?;
    let anc: Vec<usize> = (0..mesh.n_triangles()).collect();
    let set = MultiIndexSet::new(vec![2, 2]);
    let op = GalerkinOperator::new(&space, &coef, &anc, &set, &TripleProductTable::new(6))?;
    let rhs = assemble_rhs(&space, |_| 1.0, &set);
    let (u, _) = solve(&op, &space, &rhs, 1e-14, 1000)?;
    let (nf, l) = (space.n_free(), set.len());
    let mut dense = DMatrix::<f64>::zeros(nf * l, nf * l);
    let r0 = gauss_hermite_scaled(10, scaling.weight_variance(0));
    let r1 = gauss_hermite_scaled(10, scaling.weight_variance(1));
    for (y0, w0) in r0.nodes.iter().zip(&r0.weights) {
        for (y1, w1) in r1.nodes.iter().zip(&r1.weights) {
            let k = assemble_stiffness(&space, &coef.realization(&[*y0, *y1]));
            let p0 = hermite_all(scaling.weight_variance(0), 1, *y0);
            let p1 = hermite_all(scaling.weight_variance(1), 1, *y1);
            let pv: Vec<f64> = set.iter().map(|mu| p0[mu[0]] * p1[mu[1]]).collect();
            for a in 0..nf {
                for (b, v) in k.row(a) {
                    for x in 0..l {
                        for z in 0..l {
                            dense[(a * l + x, b * l + z)] += w0 * w1 * v * pv[x] * pv[z];
                        }
                    }
                }
            }
        }
    }
    let b = DVector::from_vec(free_rows(&space, &rhs));
    let x = dense
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown("dense Galerkin matrix not positive definite".into()))?
        .solve(&b);
    let got = free_rows(&space, &u);
    let mut out = golden(dir, "galerkin.csv")?;
    writeln!(out, "row,matrix_free,dense").map_err(io)?;
    let mut worst: f64 = 0.0;
    for (r, g) in got.iter().enumerate() {
        worst = worst.max((g - x[r]).abs());
        writeln!(out, "{r},{g:e},{:e}", x[r]).map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(worst)
}

/// Size of the smallest subset reaching `need` under `measure`.
fn exhaustive_min(n: usize, measure: impl Fn(&[usize]) -> f64, need: f64) -> usize {
    (0u32..1 << n)
        .filter_map(|mask| {
            let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            (measure(&s) >= need * (1.0 - MARK_SLACK)).then_some(s.len())
        })
        .min()
        .unwrap_or(n)
}

fn marking_oracle(dir: &Path) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = golden(dir, "marking.csv")?;
    writeln!(out, "case,theta,size,det_marked,det_minimal,sto_marked,sto_minimal").map_err(io)?;
    let mut mismatches = 0usize;
    for case in 0..100 {
        let n = rng.random_range(1..=12);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        for theta in [0.1, 0.3, 0.5, 1.0] {
            let det = doerfler_mark_det(&v, theta)?.len();
            let total_sq: f64 = v.iter().map(|x| x * x).sum();
            let det_min = exhaustive_min(n, |s| s.iter().map(|&i| v[i] * v[i]).sum(), theta * theta * total_sq);
            let total: f64 = v.iter().sum();
            let sto = doerfler_mark_sto(&v, theta, total)?.len();
            let sto_min = exhaustive_min(n, |s| s.iter().map(|&i| v[i]).sum(), theta * total);
            mismatches += usize::from(det != det_min) + usize::from(sto != sto_min);
            writeln!(out, "{case},{theta},{n},{det},{det_min},{sto},{sto_min}").map_err(io)?;
        }
    }
    out.flush().map_err(io)?;
    Ok(mismatches as f64)
}
