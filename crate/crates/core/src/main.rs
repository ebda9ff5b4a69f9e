use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spacetime_iga::harness::{
    run_study_verbose, selftest, write_csv, write_plot_data, FileConfig, RunConfig,
    DEFAULT_ROBUSTNESS_DEGREES, DEFAULT_ROBUSTNESS_LEVELS,
};
use spacetime_iga::linsolve::PreconditionerKind;
use spacetime_iga::{Error, Result};

/// Space-time isogeometric solver for parabolic problems with a nonlocal
/// diffusion coefficient.
#[derive(Parser, Debug)]
#[command(name = "stiga", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem at the given degrees and mesh levels.
    Solve(StudyArgs),
    /// Convergence study against a manufactured solution.
    Convergence(StudyArgs),
    /// Picard and GMRES iteration counts over a (q, 1/h) grid.
    Robustness(StudyArgs),
    /// Dense-oracle and factorization checks on small problems.
    Selftest,
}

#[derive(Args, Debug, Default)]
struct StudyArgs {
    /// Configuration file (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// annulus2d, thickring3d or igloo_f1.
    #[arg(long)]
    problem: Option<String>,
    /// Spline degree(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<usize>>,
    /// Values of 1/h, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// Picard increment tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// GMRES relative tolerance.
    #[arg(long)]
    lintol: Option<f64>,
    /// Gauss points per direction and element (default q + 1).
    #[arg(long)]
    quad: Option<usize>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed-order reductions and no timings, for byte-identical output.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Skip cells whose estimated memory exceeds this many GB.
    #[arg(long)]
    mem_budget: Option<f64>,
    /// Use the preconditioner without diagonal scaling.
    #[arg(long)]
    unscaled: bool,
}

impl StudyArgs {
    fn into_config(self, defaults: RunConfig) -> Result<RunConfig> {
        let mut cfg = defaults;
        if let Some(path) = &self.config {
            FileConfig::load(path)?.apply(&mut cfg);
        }
        if let Some(v) = self.problem {
            cfg.problem = v;
        }
        if let Some(v) = self.q {
            cfg.degrees = v;
        }
        if let Some(v) = self.levels {
            cfg.levels = v;
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
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(v) = self.threads {
            cfg.threads = Some(v);
        }
        if let Some(v) = self.mem_budget {
            cfg.mem_budget_gb = v;
        }
        if self.unscaled {
            cfg.preconditioner = PreconditionerKind::Parametric;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn run_study(args: StudyArgs, defaults: RunConfig, print_rows: bool, manufactured: bool) -> Result<bool> {
    let cfg = args.into_config(defaults)?;
    if manufactured && !cfg.problem_spec()?.is_manufactured() {
        return Err(Error::Config(format!(
            "convergence study needs a manufactured solution; `{}` has none",
            cfg.problem
        )));
    }
    init_threads(cfg.threads)?;
    let outcome = run_study_verbose(&cfg)?;
    if print_rows {
        for r in &outcome.records {
            println!(
                "problem={} q={} inv_h={} N_dof={} picard={} gmres_max={} e_L2L2={} e_L2H1={}",
                r.problem,
                r.q,
                r.inv_h,
                r.n_dof,
                fmt_opt(r.picard),
                fmt_opt(r.gmres_max),
                fmt_opt(r.e_l2l2.map(|e| format!("{e:.6e}"))),
                fmt_opt(r.e_l2h1.map(|e| format!("{e:.6e}"))),
            );
        }
    }
    if let Some(path) = &cfg.out {
        write_csv(&outcome.records, path)?;
        for p in write_plot_data(&outcome.records, path)? {
            eprintln!("wrote {}", p.display());
        }
        eprintln!("wrote {}", path.display());
    }
    for f in &outcome.failures {
        eprintln!("failed: {f}");
    }
    Ok(outcome.failures.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(args) => run_study(args, RunConfig::default(), true, false),
        Command::Convergence(args) => run_study(args, RunConfig::default(), false, true),
        Command::Robustness(args) => {
            let cfg = RunConfig {
                problem: "igloo_f1".into(),
                degrees: DEFAULT_ROBUSTNESS_DEGREES.to_vec(),
                levels: DEFAULT_ROBUSTNESS_LEVELS.to_vec(),
                ..RunConfig::default()
            };
            run_study(args, cfg, true, false)
        }
        Command::Selftest => {
            let checks = selftest()?;
            let mut ok = true;
            for c in &checks {
                println!("[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            let passed = checks.iter().filter(|c| c.passed).count();
            println!("{passed}/{} checks passed", checks.len());
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
