//! Plain `key=value` run configuration with dotted keys.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `domain.kind` | `lshape` | `lshape` or `unit-square` |
//! | `domain.h0` | `0.1` | initial mesh width |
//! | `field.kind` | `benchmark` | `benchmark` (Fourier modes) or `zero` |
//! | `field.modes` | `20` | number of field modes |
//! | `field.decay` | `2` | mode decay rate, `> 1` |
//! | `field.rho` | `1` | in `(0, 1]` |
//! | `field.theta` | `0.1` | in `[0, 1)` |
//! | `field.tail` | `1e-8` | chaos truncation threshold |
//! | `fe.order` | `1` | Lagrange order 1..3 |
//! | `adapt.theta_det` | `0.3` | spatial bulk parameter |
//! | `adapt.theta_sto` | `0.5` | stochastic bulk parameter |
//! | `adapt.c_eq` | `5` | branch balance constant |
//! | `adapt.lookahead` | `1` | one value or a comma list per mode |
//! | `adapt.max_iter` | `12` | iterations |
//! | `adapt.dims` | `2` | initial dimensions, comma list |
//! | `adapt.omega`, `adapt.tau` | `1`, `4` | quasi-error weights |
//! | `adapt.lipschitz` | `false` | record `c(Lambda_d)` |
//! | `solver.tol`, `solver.maxit` | `1e-10`, `10000` | CG |
//! | `mc.samples` | `250` | Monte Carlo samples, `0` disables |
//! | `mc.seed` | `0` | |
//! | `mc.uplift` | `1` | reference refinements of the finest mesh |
//! | `mc.cadence` | `1` | validate every n-th iterate |
//! | `mc.measure` | `pi0` | `pi0` or `weighted` |
//! | `output.dir` | `out` | artifact directory |
//! | `output.meshes` | `true` | write mesh snapshots |
//! | `output.svg` | `true` | write the convergence plot |

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::adapt::AdaptConfig;
use crate::error::{Error, Result};
use crate::validate::{McConfig, Measure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Domain {
    #[serde(rename = "lshape")]
    LShape,
    #[serde(rename = "unit-square")]
    UnitSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FieldKind {
    #[serde(rename = "benchmark")]
    Benchmark,
    #[serde(rename = "zero")]
    Zero,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldConfig {
    pub kind: FieldKind,
    pub modes: usize,
    pub decay: f64,
    pub rho: f64,
    pub theta: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub domain: Domain,
    pub h0: f64,
    pub field: FieldConfig,
    pub adapt: AdaptConfig,
    pub mc: McConfig,
    pub out_dir: PathBuf,
    pub meshes: bool,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: Domain::LShape,
            h0: 0.1,
            field: FieldConfig { kind: FieldKind::Benchmark, modes: 20, decay: 2.0, rho: 1.0, theta: 0.1, tail: 1e-8 },
            adapt: AdaptConfig::default(),
            mc: McConfig::default(),
            out_dir: PathBuf::from("out"),
            meshes: true,
            svg: true,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| Error::ParseError { line, reason: format!("invalid value '{raw}' for {key}") })
}

fn list(key: &str, raw: &str, line: usize) -> Result<Vec<usize>> {
    raw.split(',').map(|s| value(key, s.trim(), line)).collect()
}

fn flag(key: &str, raw: &str, line: usize) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::ParseError { line, reason: format!("invalid boolean '{raw}' for {key}") }),
    }
}

impl RunConfig {
    /// Parses config text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, val) = body
                .split_once('=')
                .ok_or_else(|| Error::ParseError { line, reason: "expected key=value".into() })?;
            let (key, v) = (key.trim(), val.trim());
            match key {
                "domain.kind" => {
                    c.domain = match v {
                        "lshape" => Domain::LShape,
                        "unit-square" => Domain::UnitSquare,
                        _ => return Err(Error::ParseError { line, reason: format!("unknown domain '{v}'") }),
                    }
                }
                "domain.h0" => c.h0 = value(key, v, line)?,
                "field.kind" => {
                    c.field.kind = match v {
                        "benchmark" => FieldKind::Benchmark,
                        "zero" => FieldKind::Zero,
                        _ => return Err(Error::ParseError { line, reason: format!("unknown field '{v}'") }),
                    }
                }
                "field.modes" => c.field.modes = value(key, v, line)?,
                "field.decay" => c.field.decay = value(key, v, line)?,
                "field.rho" => c.field.rho = value(key, v, line)?,
                "field.theta" => c.field.theta = value(key, v, line)?,
                "field.tail" => c.field.tail = value(key, v, line)?,
                "fe.order" => c.adapt.order = value(key, v, line)?,
                "adapt.theta_det" => c.adapt.theta_det = value(key, v, line)?,
                "adapt.theta_sto" => c.adapt.theta_sto = value(key, v, line)?,
                "adapt.c_eq" => c.adapt.c_eq = value(key, v, line)?,
                "adapt.lookahead" => c.adapt.lookahead = list(key, v, line)?,
                "adapt.max_iter" => c.adapt.max_iter = value(key, v, line)?,
                "adapt.dims" => c.adapt.initial_dims = list(key, v, line)?,
                "adapt.omega" => c.adapt.omega = value(key, v, line)?,
                "adapt.tau" => c.adapt.tau = value(key, v, line)?,
                "adapt.lipschitz" => c.adapt.lipschitz = flag(key, v, line)?,
                "solver.tol" => c.adapt.solver_tol = value(key, v, line)?,
                "solver.maxit" => c.adapt.solver_maxit = value(key, v, line)?,
                "mc.samples" => c.mc.samples = value(key, v, line)?,
                "mc.seed" => c.mc.seed = value(key, v, line)?,
                "mc.uplift" => c.mc.uplift = value(key, v, line)?,
                "mc.cadence" => c.mc.cadence = value(key, v, line)?,
                "mc.measure" => {
                    c.mc.measure = match v {
                        "pi0" => Measure::Reference,
                        "weighted" => Measure::Weighted,
                        _ => return Err(Error::ParseError { line, reason: format!("unknown measure '{v}'") }),
                    }
                }
                "output.dir" => c.out_dir = PathBuf::from(v),
                "output.meshes" => c.meshes = flag(key, v, line)?,
                "output.svg" => c.svg = flag(key, v, line)?,
                _ => return Err(Error::ParseError { line, reason: format!("unknown key '{key}'") }),
            }
        }
        if c.adapt.lookahead.len() == 1 {
            c.adapt.lookahead = vec![c.adapt.lookahead[0]; c.field.modes.max(1)];
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::ValidationError { key: key.into(), reason: reason.into() });
        let a = &self.adapt;
        let f = &self.field;
        if !(self.h0 > 0.0 && self.h0 <= 1.0) {
            return bad("domain.h0", "must lie in (0, 1]");
        }
        if !(f.decay > 1.0) {
            return bad("field.decay", "must exceed 1");
        }
        if !(f.rho > 0.0 && f.rho <= 1.0) {
            return bad("field.rho", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&f.theta) {
            return bad("field.theta", "must lie in [0, 1)");
        }
        if !(f.tail > 0.0) {
            return bad("field.tail", "must be positive");
        }
        if !(1..=3).contains(&a.order) {
            return bad("fe.order", "must be 1, 2 or 3");
        }
        if !(a.theta_det > 0.0 && a.theta_det <= 1.0) {
            return bad("adapt.theta_det", "must lie in (0, 1]");
        }
        if !(a.theta_sto > 0.0 && a.theta_sto <= 1.0) {
            return bad("adapt.theta_sto", "must lie in (0, 1]");
        }
        if !(a.c_eq > 0.0) {
            return bad("adapt.c_eq", "must be positive");
        }
        if a.lookahead.contains(&0) {
            return bad("adapt.lookahead", "must be at least 1");
        }
        if a.max_iter == 0 {
            return bad("adapt.max_iter", "must be at least 1");
        }
        if a.initial_dims.is_empty() || a.initial_dims.contains(&0) {
            return bad("adapt.dims", "dimensions must be at least 1");
        }
        if !(a.omega > 0.0) {
            return bad("adapt.omega", "must be positive");
        }
        if !(a.tau >= 0.0) {
            return bad("adapt.tau", "must be nonnegative");
        }
        if !(a.solver_tol > 0.0) {
            return bad("solver.tol", "must be positive");
        }
        if a.solver_maxit == 0 {
            return bad("solver.maxit", "must be at least 1");
        }
        if self.mc.cadence == 0 {
            return bad("mc.cadence", "must be at least 1");
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    RunConfig::parse(&text)
}
