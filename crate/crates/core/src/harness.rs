//! Convergence and robustness studies, CSV output and the self-test suite
//! behind the `stiga` command line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use crate::assembly::{assemble_spatial, assemble_time, Discretization};
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Parametrization};
use crate::linsolve::{Preconditioner, PreconditionerKind};
use crate::nonlinear::{picard_solve_with, PicardConfig, PicardSystem};
use crate::pencil::{factorize_time_pencil, parametric_spatial_eigen};
use crate::postproc::{error_norms, observed_order, ErrorRecord};
use crate::problems::{builtin_problem, ProblemSpec};
use crate::sparse::CsrPattern;

pub const DEFAULT_ROBUSTNESS_DEGREES: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_ROBUSTNESS_LEVELS: [usize; 4] = [8, 16, 32, 64];
pub const DEFAULT_MEM_BUDGET_GB: f64 = 4.0;

/// Settings of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub degrees: Vec<usize>,
    /// Values of `1/h`, used for both space and time.
    pub levels: Vec<usize>,
    pub final_time: f64,
    pub epsilon: f64,
    pub linear_tol: f64,
    pub quad: Option<usize>,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
    pub threads: Option<usize>,
    /// Cells whose estimated memory exceeds this many GB are skipped.
    pub mem_budget_gb: f64,
    pub preconditioner: PreconditionerKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "annulus2d".into(),
            degrees: vec![1],
            levels: vec![4, 8, 16],
            final_time: 1.0,
            epsilon: 1e-10,
            linear_tol: 1e-12,
            quad: None,
            out: None,
            deterministic: false,
            threads: None,
            mem_budget_gb: DEFAULT_MEM_BUDGET_GB,
            preconditioner: PreconditionerKind::default(),
        }
    }
}

/// Keys accepted in a configuration file; all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub q: Option<OneOrMany>,
    pub levels: Option<Vec<usize>>,
    pub final_time: Option<f64>,
    pub eps: Option<f64>,
    pub lintol: Option<f64>,
    pub quad: Option<usize>,
    pub out: Option<PathBuf>,
    pub deterministic: Option<bool>,
    pub threads: Option<usize>,
    pub mem_budget: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<usize> {
        match self {
            OneOrMany::One(q) => vec![q],
            OneOrMany::Many(v) => v,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overrides the fields of `cfg` that are set in the file.
    pub fn apply(self, cfg: &mut RunConfig) {
        if let Some(v) = self.problem {
            cfg.problem = v;
        }
        if let Some(v) = self.q {
            cfg.degrees = v.into_vec();
        }
        if let Some(v) = self.levels {
            cfg.levels = v;
        }
        if let Some(v) = self.final_time {
            cfg.final_time = v;
        }
        if let Some(v) = self.eps {
            cfg.epsilon = v;
        }
        if let Some(v) = self.lintol {
            cfg.linear_tol = v;
        }
        if let Some(v) = self.quad {
            cfg.quad = Some(v);
        }
        if let Some(v) = self.out {
            cfg.out = Some(v);
        }
        if let Some(v) = self.deterministic {
            cfg.deterministic = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = Some(v);
        }
        if let Some(v) = self.mem_budget {
            cfg.mem_budget_gb = v;
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.contains(&0) {
            return Err(Error::Config("degrees must be at least 1".into()));
        }
        if self.levels.contains(&0) {
            return Err(Error::Config("mesh levels must be positive".into()));
        }
        if !(self.final_time > 0.0) {
            return Err(Error::Config("final time must be positive".into()));
        }
        if !(self.mem_budget_gb > 0.0) {
            return Err(Error::Config("memory budget must be positive".into()));
        }
        self.picard().validate()
    }

    pub fn picard(&self) -> PicardConfig {
        PicardConfig {
            epsilon: self.epsilon,
            linear_tol: self.linear_tol,
            deterministic: self.deterministic,
            preconditioner: self.preconditioner,
            ..PicardConfig::default()
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let mut spec = builtin_problem(&self.problem)?;
        if self.final_time != spec.final_time {
            spec.final_time = self.final_time;
            if let Some(e) = spec.exact {
                spec = spec.with_exact(e)?;
            }
        }
        Ok(spec)
    }
}

/// Rough peak memory of one solve in bytes: the GMRES basis for a typical
/// iteration count, complex work vectors, and the two sparse matrices.
pub fn estimate_memory(dim: usize, q: usize, inv_h: usize) -> f64 {
    let n = inv_h + q;
    let dims = vec![n - 2; dim];
    let n_s: f64 = dims.iter().product::<usize>() as f64;
    let n_dof = n_s * (n - 1) as f64;
    let nnz = CsrPattern::estimate_nnz(&dims, q) as f64;
    const BASIS_VECTORS: f64 = 40.0;
    const WORK_VECTORS: f64 = 12.0;
    n_dof * 16.0 * (BASIS_VECTORS + WORK_VECTORS) + nnz * 20.0
}

/// Solves one `(q, 1/h)` cell. Failures are reported in the returned row
/// (empty solver columns) and as the error message.
pub fn run_cell(spec: &ProblemSpec, q: usize, inv_h: usize, cfg: &RunConfig) -> (ErrorRecord, Option<String>) {
    let dim = spec.domain.dim();
    let n = inv_h + q;
    let n_dof = (n.saturating_sub(2)).pow(dim as u32) * (n - 1);
    let mut rec = ErrorRecord {
        problem: spec.name.clone(),
        q,
        inv_h,
        n_dof,
        e_l2l2: None,
        e_l2h1: None,
        order_l2l2: None,
        order_l2h1: None,
        picard: None,
        gmres_max: None,
        seconds: None,
    };
    let need = estimate_memory(dim, q, inv_h) / 1e9;
    if need > cfg.mem_budget_gb {
        return (
            rec,
            Some(format!(
                "skipped: estimated {need:.1} GB exceeds the memory budget of {:.1} GB",
                cfg.mem_budget_gb
            )),
        );
    }
    let start = Instant::now();
    let outcome = (|| -> Result<()> {
        let geo = Parametrization::new(spec.domain, spec.final_time)?;
        let disc = Discretization::uniform(geo, q, inv_h, cfg.quad)?;
        let system = PicardSystem::build(spec, &disc)?;
        let report = picard_solve_with(&system, spec, &disc, &cfg.picard())?;
        rec.picard = Some(report.picard_iterations);
        rec.gmres_max = Some(report.max_gmres());
        if let Some(exact) = &spec.exact {
            let (e0, e1) = error_norms(&report.solution, exact, &disc)?;
            rec.e_l2l2 = Some(e0);
            rec.e_l2h1 = Some(e1);
        }
        if !report.converged {
            return Err(Error::NotConverged {
                solver: "Picard iteration",
                iterations: report.picard_iterations,
                residual: report.increments.last().copied().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    })();
    if !cfg.deterministic {
        rec.seconds = Some(start.elapsed().as_secs_f64());
    }
    (rec, outcome.err().map(|e| e.to_string()))
}

/// Fills the order columns of each row from its predecessor when the mesh
/// was halved and the degree is unchanged.
pub fn fill_orders(records: &mut [ErrorRecord]) {
    for i in 1..records.len() {
        let (prev, cur) = (&records[i - 1], &records[i]);
        if prev.q != cur.q || prev.problem != cur.problem || cur.inv_h != 2 * prev.inv_h {
            continue;
        }
        let order = |a: Option<f64>, b: Option<f64>| a.zip(b).and_then(|(a, b)| observed_order(a, b).ok());
        let o0 = order(prev.e_l2l2, cur.e_l2l2);
        let o1 = order(prev.e_l2h1, cur.e_l2h1);
        records[i].order_l2l2 = o0;
        records[i].order_l2h1 = o1;
    }
}

/// Study result: the rows plus one message per failed cell.
#[derive(Debug, Clone, Default)]
pub struct StudyOutcome {
    pub records: Vec<ErrorRecord>,
    pub failures: Vec<String>,
}

fn run_grid(cfg: &RunConfig, degrees: &[usize], levels: &[usize], verbose: bool) -> Result<StudyOutcome> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let mut out = StudyOutcome::default();
    for &q in degrees {
        for &l in levels {
            let (rec, err) = run_cell(&spec, q, l, cfg);
            if verbose {
                eprintln!(
                    "{} q={q} 1/h={l}: picard={} gmres_max={}{}",
                    spec.name,
                    rec.picard.map_or("-".into(), |v| v.to_string()),
                    rec.gmres_max.map_or("-".into(), |v| v.to_string()),
                    err.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
                );
            }
            if let Some(e) = err {
                out.failures.push(format!("q={q} 1/h={l}: {e}"));
            }
            out.records.push(rec);
        }
    }
    fill_orders(&mut out.records);
    Ok(out)
}

pub fn run_convergence_study(cfg: &RunConfig) -> Result<StudyOutcome> {
    let spec = builtin_problem(&cfg.problem)?;
    if !spec.is_manufactured() {
        return Err(Error::Config(format!(
            "convergence study needs a manufactured solution; `{}` has none",
            cfg.problem
        )));
    }
    run_grid(cfg, &cfg.degrees, &cfg.levels, false)
}

pub fn run_robustness_study(cfg: &RunConfig) -> Result<StudyOutcome> {
    run_grid(cfg, &cfg.degrees, &cfg.levels, false)
}

/// As the study functions, printing one progress line per cell.
pub fn run_study_verbose(cfg: &RunConfig) -> Result<StudyOutcome> {
    run_grid(cfg, &cfg.degrees, &cfg.levels, true)
}

pub fn write_csv(records: &[ErrorRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_HEADER: [&str; 11] = [
    "problem",
    "q",
    "inv_h",
    "N_dof",
    "e_L2L2",
    "e_L2H1",
    "order_L2L2",
    "order_L2H1",
    "picard",
    "gmres_max",
    "seconds",
];

pub fn read_csv(path: &Path) -> Result<Vec<ErrorRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Writes `<stem>_L2L2_q<q>.dat` and `<stem>_L2H1_q<q>.dat` with `h error`
/// lines; returns the written paths.
pub fn write_plot_data(records: &[ErrorRecord], csv_path: &Path) -> Result<Vec<PathBuf>> {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "study".into());
    let dir = csv_path.parent().unwrap_or(Path::new(""));
    let mut degrees: Vec<usize> = records.iter().map(|r| r.q).collect();
    degrees.dedup();
    let mut written = Vec::new();
    for q in degrees {
        for (norm, pick) in [
            ("L2L2", (|r: &ErrorRecord| r.e_l2l2) as fn(&ErrorRecord) -> Option<f64>),
            ("L2H1", |r: &ErrorRecord| r.e_l2h1),
        ] {
            let lines: String = records
                .iter()
                .filter(|r| r.q == q)
                .filter_map(|r| pick(r).map(|e| format!("{:e} {:e}\n", 1.0 / r.inv_h as f64, e)))
                .collect();
            if lines.is_empty() {
                continue;
            }
            let path = dir.join(format!("{stem}_{norm}_q{q}.dat"));
            fs::write(&path, format!("# h error_{norm}\n{lines}"))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// One self-test outcome.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check {
        name: name.into(),
        passed: value <= limit,
        detail: format!("{value:.3e} <= {limit:.0e}"),
    }
}

/// Dense-oracle and factorization checks on small problems.
pub fn selftest() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let coefficients: [(&str, fn(f64) -> f64); 2] = [("rational", |l| 2.0 - 1.0 / (1.0 + l * l)), ("sine", |l| 3.0 + l.sin())];
    for q in 1..=4 {
        for elements in [1, 3, 8, 17] {
            let kv = crate::splines::KnotVector::open_uniform(q, elements)?;
            let basis = crate::splines::Basis1D::new(kv, crate::splines::Restriction::ZeroAtStart)?;
            for (cname, a) in coefficients {
                let tm = assemble_time(&basis, |t| a(3.0 * (4.0 * t).sin()), q + 1, 1.0)?;
                let f = factorize_time_pencil(&tm.w, &tm.m)?;
                let (mres, wres) = f.residuals(&tm.w);
                checks.push(check(
                    format!("time pencil q={q} elements={elements} {cname}"),
                    mres.max(wres),
                    1e-10,
                ));
            }
        }
    }
    // operator and preconditioner against dense Kronecker matrices
    for kind in [DomainKind::UnitInterval, DomainKind::UnitSquare] {
        let geo = Parametrization::new(kind, 1.0)?;
        let disc = Discretization::uniform(geo, 2, 2, None)?;
        let sp = assemble_spatial(&disc.space, &disc.geometry, disc.quad_points)?;
        let tm = assemble_time(&disc.time, |t| 1.0 + t, disc.quad_points, 1.0)?;
        let op = crate::assembly::SystemOperator::new(tm.w.clone(), tm.m.clone(), Arc::new(sp.mass), Arc::new(sp.stiffness))?;
        let dense = op.to_dense();
        let n = op.n_dof();
        let v: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 1.7).collect();
        let mut av = vec![0.0; n];
        op.apply(&v, &mut av)?;
        let dv = &dense * nalgebra::DVector::from_column_slice(&v);
        let err = av.iter().zip(dv.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(check(format!("operator vs dense ({kind})"), err / dv.amax().max(1.0), 1e-14));

        let fact = factorize_time_pencil(&tm.w, &tm.m)?;
        let eigen = Arc::new(parametric_spatial_eigen(&disc.space, disc.quad_points)?);
        let pc = Preconditioner::new(fact.delta.clone(), eigen);
        let delta = fact.delta_dense();
        let (m_hat, k_hat) = parametric_kronecker(&disc)?;
        let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let nt = delta.nrows();
        let p_dense = delta.kronecker(&to_c(&m_hat)) + DMatrix::<Complex64>::identity(nt, nt).kronecker(&to_c(&k_hat));
        let r: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).sin(), (2.0 * i as f64).cos())).collect();
        let mut s = vec![Complex64::new(0.0, 0.0); n];
        pc.apply(&r, &mut s)?;
        let ps = &p_dense * nalgebra::DVector::from_column_slice(&s);
        let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let res = ps.iter().zip(&r).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / rn;
        checks.push(check(format!("preconditioner vs dense ({kind})"), res, 1e-12));
    }
    Ok(checks)
}

/// `(M_hat_s, K_hat_s)` as dense Kronecker products of the univariate
/// parametric matrices.
pub fn parametric_kronecker(disc: &Discretization) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mats = disc
        .space
        .iter()
        .map(|b| crate::assembly::parametric_matrices_1d(b, disc.quad_points))
        .collect::<Result<Vec<_>>>()?;
    let mut mass = DMatrix::from_element(1, 1, 1.0);
    let mut stiff = DMatrix::zeros(1, 1);
    for (m, k) in &mats {
        // first direction fastest: new factors go on the left
        stiff = k.kronecker(&mass) + m.kronecker(&stiff);
        mass = m.kronecker(&mass);
    }
    Ok((mass, stiff))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_only_between_halved_meshes() {
        let rec = |q, inv_h, e| ErrorRecord {
            problem: "p".into(),
            q,
            inv_h,
            n_dof: 1,
            e_l2l2: Some(e),
            e_l2h1: Some(e),
            order_l2l2: None,
            order_l2h1: None,
            picard: None,
            gmres_max: None,
            seconds: None,
        };
        let mut rows = vec![rec(1, 4, 0.4), rec(1, 8, 0.1), rec(1, 32, 0.01), rec(2, 64, 0.0025)];
        fill_orders(&mut rows);
        assert_eq!(rows[0].order_l2l2, None);
        assert!((rows[1].order_l2l2.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(rows[2].order_l2h1, None);
        assert_eq!(rows[3].order_l2h1, None);
    }

    #[test]
    fn memory_estimate_grows_with_level() {
        assert!(estimate_memory(3, 4, 64) > 8e9);
        assert!(estimate_memory(2, 1, 8) < 1e7);
    }

    #[test]
    fn file_config_overrides() {
        let fc: FileConfig = toml::from_str("problem = \"thickring3d\"\nq = 2\nlevels = [4, 8]\neps = 1e-9").unwrap();
        let mut cfg = RunConfig::default();
        fc.apply(&mut cfg);
        assert_eq!(cfg.problem, "thickring3d");
        assert_eq!(cfg.degrees, vec![2]);
        assert_eq!(cfg.levels, vec![4, 8]);
        assert_eq!(cfg.epsilon, 1e-9);
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }
}
