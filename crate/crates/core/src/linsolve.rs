//! Fast-diagonalization preconditioner, GMRES, and the transformed linear
//! solve performed at every Picard step.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::assembly::SystemOperator;
use crate::error::{Error, Result};
use crate::pencil::{Arrowhead, PencilFactorization, SpatialEigen};
use crate::sparse::SparseMatrix;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Which variant of the preconditioner to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    /// `Delta_t (x) M_s + I (x) K_s` with the parametric spatial matrices.
    Parametric,
    /// The parametric preconditioner with a symmetric diagonal scaling
    /// matching the diagonal of the physical stiffness matrix.
    #[default]
    DiagonalScaled,
}

/// Applies `U (x) ... (x) U` (or transposes) along every spatial direction
/// of a complex block of `ncols` columns.
fn spatial_transform(vectors: &[nalgebra::DMatrix<f64>], transpose: bool, x: &mut Vec<C64>, ncols: usize) {
    let dims: Vec<usize> = vectors.iter().map(|u| u.nrows()).collect();
    let n_s: usize = dims.iter().product();
    debug_assert_eq!(x.len(), n_s * ncols);
    let mut y = vec![ZERO; x.len()];
    let mut stride = 1;
    for (i, u) in vectors.iter().enumerate() {
        let ni = dims[i];
        let outer = dims[i + 1..].iter().product::<usize>() * ncols;
        let (rsa, csa) = if transpose { (ni as isize, 1) } else { (1, ni as isize) };
        // Complex64 is laid out as [re, im]; real and imaginary parts are
        // transformed as two strided real products.
        let xp = x.as_ptr() as *const f64;
        let yp = y.as_mut_ptr() as *mut f64;
        for part in 0..2 {
            if stride == 1 {
                // SAFETY: X is ni x outer with unit row stride, all within x.
                unsafe {
                    matrixmultiply::dgemm(
                        ni,
                        ni,
                        outer,
                        1.0,
                        u.as_ptr(),
                        rsa,
                        csa,
                        xp.add(part),
                        2,
                        2 * ni as isize,
                        0.0,
                        yp.add(part),
                        2,
                        2 * ni as isize,
                    );
                }
            } else {
                for o in 0..outer {
                    let off = 2 * o * stride * ni + part;
                    // SAFETY: slab `o` is an ni x stride block inside x and y.
                    unsafe {
                        matrixmultiply::dgemm(
                            ni,
                            ni,
                            stride,
                            1.0,
                            u.as_ptr(),
                            rsa,
                            csa,
                            xp.add(off),
                            2 * stride as isize,
                            2,
                            0.0,
                            yp.add(off),
                            2 * stride as isize,
                            2,
                        );
                    }
                }
            }
        }
        std::mem::swap(x, &mut y);
        stride *= ni;
    }
}

/// The preconditioner `P` applied through the spatial eigendecomposition
/// and one arrowhead solve per spatial eigenvalue.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    delta: Arrowhead,
    eigen: Arc<SpatialEigen>,
    /// `D^{-1/2}` of the diagonal scaling, if any.
    inv_sqrt_scaling: Option<Vec<f64>>,
}

impl Preconditioner {
    pub fn new(delta: Arrowhead, eigen: Arc<SpatialEigen>) -> Self {
        Self {
            delta,
            eigen,
            inv_sqrt_scaling: None,
        }
    }

    /// Builds the requested variant; `stiffness` is the physical spatial
    /// stiffness, used only by the scaled variant.
    pub fn build(
        kind: PreconditionerKind,
        delta: Arrowhead,
        eigen: Arc<SpatialEigen>,
        stiffness: &SparseMatrix,
    ) -> Result<Self> {
        let p = Self::new(delta, eigen);
        match kind {
            PreconditionerKind::Parametric => Ok(p),
            PreconditionerKind::DiagonalScaled => p.with_scaling(&stiffness.diagonal()),
        }
    }

    /// Scales by `D = diag(K_s) / diag(K_hat_s)`: the preconditioner becomes
    /// `D^{1/2} P D^{1/2}`.
    pub fn with_scaling(mut self, stiffness_diag: &[f64]) -> Result<Self> {
        let param = self.eigen.parametric_stiffness_diagonal();
        if stiffness_diag.len() != param.len() {
            return Err(Error::SizeMismatch {
                expected: param.len(),
                got: stiffness_diag.len(),
            });
        }
        let s = stiffness_diag
            .iter()
            .zip(&param)
            .map(|(k, p)| {
                let d = k / p;
                if d > 0.0 && d.is_finite() {
                    Ok(1.0 / d.sqrt())
                } else {
                    Err(Error::Hypothesis(format!("non-positive stiffness diagonal ratio {d}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.inv_sqrt_scaling = Some(s);
        Ok(self)
    }

    pub fn n_space(&self) -> usize {
        self.eigen.n_space()
    }

    pub fn n_time(&self) -> usize {
        self.delta.n()
    }

    pub fn n_dof(&self) -> usize {
        self.n_space() * self.n_time()
    }

    pub fn is_scaled(&self) -> bool {
        self.inv_sqrt_scaling.is_some()
    }

    /// `s = P^{-1} r`.
    pub fn apply(&self, r: &[C64], s: &mut [C64]) -> Result<()> {
        let (n_s, n_t) = (self.n_space(), self.n_time());
        let n = n_s * n_t;
        for len in [r.len(), s.len()] {
            if len != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        let mut x = r.to_vec();
        self.scale(&mut x);
        spatial_transform(&self.eigen.vectors, true, &mut x, n_t);
        let lambda = &self.eigen.combined;
        let delta = &self.delta;
        // one shifted arrowhead solve per spatial eigenvalue
        let solved = (0..n_s)
            .into_par_iter()
            .with_min_len(256)
            .map_init(
                || (vec![ZERO; n_t], vec![ZERO; n_t]),
                |(rhs, sol), k| {
                    for j in 0..n_t {
                        rhs[j] = x[k + n_s * j];
                    }
                    delta.shifted_solve(lambda[k], rhs, sol)?;
                    Ok(sol.clone())
                },
            )
            .collect::<Result<Vec<_>>>()?;
        for (k, col) in solved.iter().enumerate() {
            for j in 0..n_t {
                x[k + n_s * j] = col[j];
            }
        }
        spatial_transform(&self.eigen.vectors, false, &mut x, n_t);
        self.scale(&mut x);
        s.copy_from_slice(&x);
        Ok(())
    }

    fn scale(&self, x: &mut [C64]) {
        if let Some(d) = &self.inv_sqrt_scaling {
            for col in x.chunks_mut(d.len()) {
                col.iter_mut().zip(d).for_each(|(v, s)| *v *= s);
            }
        }
    }
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    /// Estimated relative residuals, starting with 1 before the first step.
    pub history: Vec<f64>,
    pub converged: bool,
    /// True relative residual `||b - A x|| / ||b||` at exit.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub tol: f64,
    pub maxit: usize,
    /// Fixed-order reductions, so results do not depend on scheduling.
    pub deterministic: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            maxit: 200,
            deterministic: true,
        }
    }
}

fn dotc(a: &[C64], b: &[C64], deterministic: bool) -> C64 {
    const CHUNK: usize = 8192;
    if deterministic {
        a.par_chunks(CHUNK)
            .zip(b.par_chunks(CHUNK))
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u.conj() * v).sum::<C64>())
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    } else {
        a.par_iter().zip(b).map(|(u, v)| u.conj() * v).sum()
    }
}

fn norm(a: &[C64], deterministic: bool) -> f64 {
    dotc(a, a, deterministic).re.max(0.0).sqrt()
}

/// Right-preconditioned GMRES with null initial guess. Runs without restarts;
/// a new cycle only starts if the estimated residual reached `tol` but the
/// recomputed true residual did not.
pub fn gmres<A, P>(mut apply_a: A, mut precond: P, b: &[C64], opts: GmresOptions) -> Result<(Vec<C64>, KrylovReport)>
where
    A: FnMut(&[C64], &mut [C64]) -> Result<()>,
    P: FnMut(&[C64], &mut [C64]) -> Result<()>,
{
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("GMRES tolerance {} must be positive", opts.tol)));
    }
    let n = b.len();
    let det = opts.deterministic;
    let mut x = vec![ZERO; n];
    let bnorm = norm(b, det);
    let mut history = vec![1.0];
    if bnorm == 0.0 {
        return Ok((
            x,
            KrylovReport {
                iterations: 0,
                history,
                converged: true,
                residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut rnorm = bnorm;
    let mut iterations = 0;
    let mut z = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    loop {
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|v| v / rnorm).collect()];
        let mut hcols: Vec<Vec<C64>> = Vec::new();
        let mut rotations: Vec<(f64, C64)> = Vec::new();
        let mut g = vec![C64::new(rnorm, 0.0)];
        let mut breakdown = false;
        while iterations < opts.maxit {
            let j = basis.len() - 1;
            precond(&basis[j], &mut z)?;
            apply_a(&z, &mut w)?;
            let mut h = vec![ZERO; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dotc(v, &w, det);
                h[i] = hij;
                w.par_iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hnext = norm(&w, det);
            h[j + 1] = C64::new(hnext, 0.0);
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (a, bb) = (h[i], h[i + 1]);
                h[i] = a * c + s * bb;
                h[i + 1] = -s.conj() * a + bb * c;
            }
            let (a, bb) = (h[j], h[j + 1]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if rho == 0.0 {
                (1.0, ZERO)
            } else if a.norm() == 0.0 {
                (0.0, C64::new(1.0, 0.0))
            } else {
                let an = a.norm();
                (an / rho, (a / an) * bb.conj() / rho)
            };
            h[j] = a * c + s * bb;
            h[j + 1] = ZERO;
            rotations.push((c, s));
            let gj = g[j];
            g[j] = gj * c;
            g.push(-s.conj() * gj);
            hcols.push(h);
            iterations += 1;
            let est = g[j + 1].norm() / bnorm;
            history.push(est);
            if est <= opts.tol {
                break;
            }
            if hnext <= 1e-14 * bnorm {
                breakdown = true;
                break;
            }
            let inv = 1.0 / hnext;
            basis.push(w.iter().map(|v| v * inv).collect());
        }
        // y from the triangular least-squares system, then x += P^{-1} V y
        let k = hcols.len();
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for l in i + 1..k {
                acc -= hcols[l][i] * y[l];
            }
            y[i] = acc / hcols[i][i];
        }
        let mut vy = vec![ZERO; n];
        for (v, yi) in basis.iter().zip(&y) {
            vy.par_iter_mut().zip(v).for_each(|(o, vk)| *o += yi * vk);
        }
        drop(basis);
        precond(&vy, &mut z)?;
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
        apply_a(&x, &mut w)?;
        r.iter_mut()
            .zip(b.iter().zip(&w))
            .for_each(|(ri, (bi, wi))| *ri = bi - wi);
        rnorm = norm(&r, det);
        let residual = rnorm / bnorm;
        let progress = k > 0;
        if residual <= opts.tol || iterations >= opts.maxit || !progress || (breakdown && rnorm == 0.0) {
            return Ok((
                x,
                KrylovReport {
                    iterations,
                    history,
                    converged: residual <= opts.tol,
                    residual,
                },
            ));
        }
    }
}

/// `(Delta (x) M_s + I (x) K_s)`, the system matrix after the time
/// transformation.
#[derive(Debug, Clone)]
pub struct TransformedOperator<'a> {
    pub delta: &'a Arrowhead,
    pub mass: &'a SparseMatrix,
    pub stiffness: &'a SparseMatrix,
}

impl TransformedOperator<'_> {
    pub fn apply(&self, v: &[C64], out: &mut [C64]) -> Result<()> {
        let n_s = self.mass.nrows();
        let n_t = self.delta.n();
        let n = n_s * n_t;
        for len in [v.len(), out.len()] {
            if len != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        let last = n_t - 1;
        let mut z = vec![ZERO; n];
        let vl = &v[last * n_s..];
        for j in 0..last {
            let (d, c) = (self.delta.diag[j], self.delta.last_col[j]);
            let zj = &mut z[j * n_s..(j + 1) * n_s];
            let vj = &v[j * n_s..(j + 1) * n_s];
            for i in 0..n_s {
                zj[i] = d * vj[i] + c * vl[i];
            }
        }
        {
            let zl = &mut z[last * n_s..];
            let dl = self.delta.diag[last];
            for i in 0..n_s {
                zl[i] = dl * vl[i];
            }
            for j in 0..last {
                let rho = self.delta.last_row[j];
                let vj = &v[j * n_s..(j + 1) * n_s];
                for i in 0..n_s {
                    zl[i] += rho * vj[i];
                }
            }
        }
        self.mass.apply_columns(&z, out, n_t);
        self.stiffness.apply_columns(v, &mut z, n_t);
        out.iter_mut().zip(&z).for_each(|(o, t)| *o += t);
        Ok(())
    }
}

/// One linearized solve `A u = f`: transform the right-hand side by
/// `U_t^*`, run preconditioned GMRES on the transformed system, and map
/// back with `U_t`.
pub fn solve_linear_step(
    op: &SystemOperator,
    fact: &PencilFactorization,
    precond: &Preconditioner,
    f: &[f64],
    opts: GmresOptions,
) -> Result<(Vec<f64>, KrylovReport)> {
    let n_s = op.n_space();
    if f.len() != op.n_dof() {
        return Err(Error::SizeMismatch {
            expected: op.n_dof(),
            got: f.len(),
        });
    }
    if precond.n_dof() != op.n_dof() || fact.n() != op.n_time() {
        return Err(Error::SizeMismatch {
            expected: op.n_dof(),
            got: precond.n_dof(),
        });
    }
    let ft = fact.transform_rhs(f, n_s);
    let top = TransformedOperator {
        delta: &fact.delta,
        mass: &op.mass,
        stiffness: &op.stiffness,
    };
    let (ut, report) = gmres(|v, o| top.apply(v, o), |r, s| precond.apply(r, s), &ft, opts)?;
    if !report.converged {
        return Err(Error::NotConverged {
            solver: "GMRES",
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    let u = fact.transform_back(&ut, n_s).iter().map(|z| z.re).collect();
    Ok((u, report))
}
