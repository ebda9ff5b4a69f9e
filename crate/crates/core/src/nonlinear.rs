//! Picard iteration for the nonlocal coefficient.
//!
//! Each step freezes `a(l(u))` at the previous iterate, reassembles the
//! weighted temporal mass `M_t(u)`, refactorizes the time pencil, rebuilds
//! the preconditioner and solves the linear system. The spatial matrices
//! and the spatial eigendecomposition do not depend on `u` and are built
//! once.

use std::sync::Arc;

use crate::assembly::{
    assemble_rhs_separable, assemble_spatial, assemble_time_sampled, nonlocal_at_quadrature, Discretization,
    SystemOperator,
};
use crate::error::{Error, Result};
use crate::linsolve::{solve_linear_step, GmresOptions, Preconditioner, PreconditionerKind};
use crate::pencil::{factorize_time_pencil, parametric_spatial_eigen, SpatialEigen};
use crate::problems::ProblemSpec;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    /// Stop when `||u_n - u_{n-1}||_inf <= epsilon`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Relative tolerance of each GMRES solve.
    pub linear_tol: f64,
    pub gmres_maxit: usize,
    pub deterministic: bool,
    pub preconditioner: PreconditionerKind,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            max_iterations: 50,
            linear_tol: 1e-12,
            gmres_maxit: 200,
            deterministic: true,
            preconditioner: PreconditionerKind::default(),
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < self.epsilon) {
            return Err(Error::Config(format!(
                "linear tolerance {} must be positive and below epsilon {}",
                self.linear_tol, self.epsilon
            )));
        }
        if self.max_iterations == 0 || self.gmres_maxit == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }

    fn gmres(&self) -> GmresOptions {
        GmresOptions {
            tol: self.linear_tol,
            maxit: self.gmres_maxit,
            deterministic: self.deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub picard_iterations: usize,
    pub gmres_iterations: Vec<usize>,
    /// Sup-norm increments `||u_n - u_{n-1}||_inf`.
    pub increments: Vec<f64>,
    pub converged: bool,
    pub solution: Vec<f64>,
}

impl SolveReport {
    pub fn max_gmres(&self) -> usize {
        self.gmres_iterations.iter().copied().max().unwrap_or(0)
    }
}

/// The parts of a nonlinear solve that do not change between Picard steps.
#[derive(Debug, Clone)]
pub struct PicardSystem {
    pub mass: Arc<SparseMatrix>,
    pub stiffness: Arc<SparseMatrix>,
    pub moments: Vec<f64>,
    pub eigen: Arc<SpatialEigen>,
    pub rhs: Vec<f64>,
}

impl PicardSystem {
    pub fn build(problem: &ProblemSpec, disc: &Discretization) -> Result<Self> {
        if problem.domain != disc.geometry.kind() {
            return Err(Error::InvalidArgument(format!(
                "problem `{}` lives on {}, discretization on {}",
                problem.name,
                problem.domain,
                disc.geometry.kind()
            )));
        }
        let spatial = assemble_spatial(&disc.space, &disc.geometry, disc.quad_points)?;
        let eigen = parametric_spatial_eigen(&disc.space, disc.quad_points)?;
        let rhs = assemble_rhs_separable(&problem.forcing_terms()?, disc)?;
        Ok(Self {
            mass: Arc::new(spatial.mass),
            stiffness: Arc::new(spatial.stiffness),
            moments: spatial.moments,
            eigen: Arc::new(eigen),
            rhs,
        })
    }

    /// `a(l(u))` at the time quadrature points, checked against the
    /// declared bounds.
    pub fn weights(&self, problem: &ProblemSpec, disc: &Discretization, u: &[f64]) -> Result<Vec<f64>> {
        let l = nonlocal_at_quadrature(u, &self.moments, &disc.time, disc.quad_points)?;
        let (lo, hi) = problem.bounds;
        l.iter()
            .map(|&l| {
                let a = problem.coefficient(l);
                let slack = 1e-12 * hi.abs().max(1.0);
                if a < lo - slack || a > hi + slack || !a.is_finite() {
                    Err(Error::Hypothesis(format!(
                        "a({l}) = {a} outside the declared bounds [{lo}, {hi}]"
                    )))
                } else {
                    Ok(a)
                }
            })
            .collect()
    }

    /// `A(u)` with `M_t` weighted by `a(l(u))`.
    pub fn operator(&self, problem: &ProblemSpec, disc: &Discretization, u: &[f64]) -> Result<SystemOperator> {
        let weights = self.weights(problem, disc, u)?;
        let tm = assemble_time_sampled(&disc.time, &weights, disc.quad_points, disc.final_time())?;
        SystemOperator::new(tm.w, tm.m, self.mass.clone(), self.stiffness.clone())
    }
}

/// One linearized solve `A(u_prev) u = f`; returns `u` and the GMRES count.
pub fn picard_step(
    system: &PicardSystem,
    problem: &ProblemSpec,
    disc: &Discretization,
    u_prev: &[f64],
    cfg: &PicardConfig,
) -> Result<(Vec<f64>, usize)> {
    let op = system.operator(problem, disc, u_prev)?;
    let fact = factorize_time_pencil(&op.w_t, &op.m_t)?;
    let precond = Preconditioner::build(cfg.preconditioner, fact.delta.clone(), system.eigen.clone(), &op.stiffness)?;
    let (u, report) = solve_linear_step(&op, &fact, &precond, &system.rhs, cfg.gmres())?;
    Ok((u, report.iterations))
}

pub fn picard_solve(problem: &ProblemSpec, disc: &Discretization, cfg: &PicardConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let system = PicardSystem::build(problem, disc)?;
    picard_solve_with(&system, problem, disc, cfg)
}

pub fn picard_solve_with(
    system: &PicardSystem,
    problem: &ProblemSpec,
    disc: &Discretization,
    cfg: &PicardConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let mut u = vec![0.0; disc.n_dof()];
    let mut gmres_iterations = Vec::new();
    let mut increments = Vec::new();
    for _ in 0..cfg.max_iterations {
        let (next, its) = picard_step(system, problem, disc, &u, cfg)?;
        let inc = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        gmres_iterations.push(its);
        increments.push(inc);
        u = next;
        if inc <= cfg.epsilon {
            return Ok(SolveReport {
                picard_iterations: increments.len(),
                gmres_iterations,
                increments,
                converged: true,
                solution: u,
            });
        }
    }
    Ok(SolveReport {
        picard_iterations: increments.len(),
        gmres_iterations,
        increments,
        converged: false,
        solution: u,
    })
}

/// `||A(u) u - f|| / ||f||`.
pub fn nonlinear_residual(system: &PicardSystem, problem: &ProblemSpec, disc: &Discretization, u: &[f64]) -> Result<f64> {
    let op = system.operator(problem, disc, u)?;
    let mut au = vec![0.0; u.len()];
    op.apply(u, &mut au)?;
    let fnorm = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rnorm = au
        .iter()
        .zip(&system.rhs)
        .map(|(a, f)| (a - f) * (a - f))
        .sum::<f64>()
        .sqrt();
    Ok(if fnorm == 0.0 { rnorm } else { rnorm / fnorm })
}
