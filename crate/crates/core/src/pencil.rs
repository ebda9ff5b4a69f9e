//! Factorizations of the time pencil `(W_t, M_t)` and of the parametric
//! spatial pencils `(M_i, K_i)`.
//!
//! The time pencil is reduced to `U^* M_t U = I`, `U^* W_t U = Delta` with
//! `Delta` arrowhead: split `W_t = Z + e e^T / 2` with `Z` skew-symmetric,
//! diagonalize the leading `(N_t - 1)`-block of the skew pencil through the
//! Hermitian matrix `i L^-1 Z_11 L^-T` (`M_11 = L L^T`), and complete the
//! basis with the `M_t`-orthogonalized last unit vector.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

/// Cyclic Jacobi eigensolver for a Hermitian matrix. Returns ascending
/// eigenvalues and the unitary matrix of eigenvectors (as columns).
pub fn hermitian_jacobi(h: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = h.nrows();
    if !h.is_square() {
        return Err(Error::SizeMismatch {
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    let mut a = h.clone();
    // symmetrize against round-off in the input
    for p in 0..n {
        a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
        for q in p + 1..n {
            let avg = 0.5 * (a[(p, q)] + a[(q, p)].conj());
            a[(p, q)] = avg;
            a[(q, p)] = avg.conj();
        }
    }
    let mut v = DMatrix::<C64>::identity(n, n);
    let fro = a.norm();
    let threshold = 1e-14 * fro;
    let off = |a: &DMatrix<C64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                s += 2.0 * a[(p, q)].norm_sqr();
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > threshold {
        sweeps += 1;
        if sweeps > 100 {
            return Err(Error::NotConverged {
                solver: "Jacobi eigensolver",
                iterations: sweeps,
                residual: off(&a) / fro.max(f64::MIN_POSITIVE),
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let b = a[(p, q)];
                let babs = b.norm();
                if babs <= f64::MIN_POSITIVE || babs < 1e-3 * threshold / n as f64 {
                    continue;
                }
                let phase = b / babs; // e^{i phi}
                let (app, aqq) = (a[(p, p)].re, a[(q, q)].re);
                let theta = 0.5 * (2.0 * babs).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                let pc = phase.conj();
                // A <- A J with J = [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                for k in 0..n {
                    let (ap, aq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = ap * c - aq * pc * s;
                    a[(k, q)] = ap * s + aq * pc * c;
                }
                // A <- J^* A
                for k in 0..n {
                    let (ap, aq) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = ap * c - aq * phase * s;
                    a[(q, k)] = ap * s + aq * phase * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let (vp, vq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vp * c - vq * pc * s;
                    v[(k, q)] = vp * s + vq * pc * c;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// Lower Cholesky factor, or a hypothesis error if `m` is not SPD.
fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Hypothesis(format!("{what} is not symmetric positive definite")))
}

/// An arrowhead matrix: nonzeros only on the diagonal, the last row and
/// the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrowhead {
    /// Full diagonal, including the corner entry.
    pub diag: Vec<C64>,
    /// `Delta[j, n-1]` for `j < n-1`.
    pub last_col: Vec<C64>,
    /// `Delta[n-1, j]` for `j < n-1`.
    pub last_row: Vec<C64>,
}

impl Arrowhead {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn from_dense(d: &DMatrix<C64>) -> Self {
        let n = d.nrows();
        Self {
            diag: (0..n).map(|j| d[(j, j)]).collect(),
            last_col: (0..n.saturating_sub(1)).map(|j| d[(j, n - 1)]).collect(),
            last_row: (0..n.saturating_sub(1)).map(|j| d[(n - 1, j)]).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.n();
        let mut d = DMatrix::zeros(n, n);
        for j in 0..n {
            d[(j, j)] = self.diag[j];
        }
        for j in 0..n.saturating_sub(1) {
            d[(j, n - 1)] = self.last_col[j];
            d[(n - 1, j)] = self.last_row[j];
        }
        d
    }

    fn frobenius_shifted(&self, lambda: f64) -> f64 {
        let mut s: f64 = self.diag.iter().map(|d| (d + lambda).norm_sqr()).sum();
        s += self.last_col.iter().map(C64::norm_sqr).sum::<f64>();
        s += self.last_row.iter().map(C64::norm_sqr).sum::<f64>();
        s.sqrt()
    }

    /// Solves `(Delta + lambda I) s = r` in `O(n)` by eliminating the leading
    /// diagonal block and solving the scalar Schur complement for the last
    /// unknown.
    pub fn shifted_solve(&self, lambda: f64, r: &[C64], s: &mut [C64]) -> Result<()> {
        let n = self.n();
        if r.len() != n || s.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                got: r.len().min(s.len()),
            });
        }
        if n == 0 {
            return Ok(());
        }
        let tol = 1e-14 * self.frobenius_shifted(lambda);
        let last = n - 1;
        let mut schur = self.diag[last] + lambda;
        let mut rhs = r[last];
        for j in 0..last {
            let piv = self.diag[j] + lambda;
            if piv.norm() <= tol {
                return Err(Error::SingularShift { pivot: piv.norm() });
            }
            let g = self.last_row[j] / piv;
            schur -= g * self.last_col[j];
            rhs -= g * r[j];
        }
        if schur.norm() <= tol {
            return Err(Error::SingularShift {
                pivot: schur.norm(),
            });
        }
        let s_last = rhs / schur;
        for j in 0..last {
            s[j] = (r[j] - self.last_col[j] * s_last) / (self.diag[j] + lambda);
        }
        s[last] = s_last;
        Ok(())
    }
}

/// `U_t`, `Delta_t` with `U^* M U = I` and `U^* W U = Delta` arrowhead.
#[derive(Debug, Clone)]
pub struct PencilFactorization {
    pub u: DMatrix<C64>,
    pub delta: Arrowhead,
    m: DMatrix<f64>,
}

impl PencilFactorization {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn delta_dense(&self) -> DMatrix<C64> {
        self.delta.to_dense()
    }

    /// `U^{-1} = U^* M`.
    pub fn u_inverse(&self) -> DMatrix<C64> {
        self.u.adjoint() * self.m.map(|v| C64::new(v, 0.0))
    }

    /// `(U^* (x) I) f` for a real column-major block with `n_s` rows.
    pub fn transform_rhs(&self, f: &[f64], n_s: usize) -> Vec<C64> {
        let uh = self.u.adjoint();
        let fc: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        crate::assembly::mix_time(&uh, &fc, n_s, &mut out);
        out
    }

    /// `(U (x) I) v`.
    pub fn transform_back(&self, v: &[C64], n_s: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        crate::assembly::mix_time(&self.u, v, n_s, &mut out);
        out
    }

    /// `(U^{-1} (x) I) v = (U^* M (x) I) v`.
    pub fn apply_inverse(&self, v: &[C64], n_s: usize) -> Vec<C64> {
        let mc = self.m.map(|x| C64::new(x, 0.0));
        let mut tmp = vec![C64::new(0.0, 0.0); v.len()];
        crate::assembly::mix_time(&mc, v, n_s, &mut tmp);
        self.transform_rhs_complex(&tmp, n_s)
    }

    fn transform_rhs_complex(&self, v: &[C64], n_s: usize) -> Vec<C64> {
        let uh = self.u.adjoint();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        crate::assembly::mix_time(&uh, v, n_s, &mut out);
        out
    }

    /// Frobenius residuals of the two defining identities, relative to
    /// `||M||_F` and `||W||_F`.
    pub fn residuals(&self, w: &DMatrix<f64>) -> (f64, f64) {
        let n = self.n();
        let to_c = |a: &DMatrix<f64>| a.map(|v| C64::new(v, 0.0));
        let uh = self.u.adjoint();
        let mres = (&uh * to_c(&self.m) * &self.u - DMatrix::<C64>::identity(n, n)).norm();
        let wres = (&uh * to_c(w) * &self.u - self.delta.to_dense()).norm();
        (
            mres / self.m.norm().max(f64::MIN_POSITIVE),
            wres / w.norm().max(f64::MIN_POSITIVE),
        )
    }
}

/// Factorizes the time pencil; see the module documentation.
pub fn factorize_time_pencil(w: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<PencilFactorization> {
    let n = w.nrows();
    if !w.is_square() || m.shape() != w.shape() {
        return Err(Error::SizeMismatch {
            expected: n,
            got: m.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty time pencil".into()));
    }
    let mut trace = w + w.transpose();
    trace[(n - 1, n - 1)] -= 1.0;
    if trace.norm() > 1e-12 * w.norm().max(1.0) {
        return Err(Error::Factorization(format!(
            "W + W^T deviates from e e^T by {:e}",
            trace.norm()
        )));
    }
    cholesky(m, "time mass matrix")?;
    let to_c = |a: &DMatrix<f64>| a.map(|v| C64::new(v, 0.0));

    let last = n - 1;
    let mut u = DMatrix::<C64>::zeros(n, n);
    let mut diag = vec![C64::new(0.0, 0.0); n];
    if last > 0 {
        let m11 = m.view((0, 0), (last, last)).into_owned();
        let w11 = w.view((0, 0), (last, last)).into_owned();
        let z11 = (&w11 - w11.transpose()) * 0.5;
        let l = cholesky(&m11, "leading time mass block")?;
        // S = L^-1 Z L^-T
        let y = l
            .solve_lower_triangular(&z11)
            .ok_or_else(|| Error::Factorization("triangular solve".into()))?;
        let s = l
            .solve_lower_triangular(&y.transpose())
            .ok_or_else(|| Error::Factorization("triangular solve".into()))?
            .transpose();
        let s = (&s - s.transpose()) * 0.5;
        let h = to_c(&s) * I;
        let (mu, v) = hermitian_jacobi(&h)?;
        let lt = to_c(&l.transpose());
        // columns L^-T v_k
        let cols = lt
            .solve_upper_triangular(&v)
            .ok_or_else(|| Error::Factorization("triangular solve".into()))?;
        u.view_mut((0, 0), (last, last)).copy_from(&cols);
        for k in 0..last {
            diag[k] = -I * mu[k];
        }
    }
    // complete with the M-orthogonal projection of e_n
    let mc = to_c(m);
    let mut col = DMatrix::<C64>::zeros(n, 1);
    col[(last, 0)] = C64::new(1.0, 0.0);
    for _ in 0..2 {
        let mcol = &mc * &col;
        for k in 0..last {
            let uk = u.column(k);
            let coef = uk.dotc(&mcol.column(0));
            col -= uk * coef;
        }
    }
    let norm2 = (col.adjoint() * &mc * &col)[(0, 0)].re;
    if !(norm2 > 0.0) {
        return Err(Error::Factorization("degenerate completion vector".into()));
    }
    col /= C64::new(norm2.sqrt(), 0.0);
    u.set_column(last, &col.column(0));

    let full = u.adjoint() * to_c(w) * &u;
    diag[last] = full[(last, last)];
    if last == 0 {
        diag[0] = full[(0, 0)];
    }
    let delta = Arrowhead {
        diag,
        last_col: (0..last).map(|j| full[(j, last)]).collect(),
        last_row: (0..last).map(|j| full[(last, j)]).collect(),
    };
    let fact = PencilFactorization {
        u,
        delta,
        m: m.clone(),
    };
    let (mres, wres) = fact.residuals(w);
    if mres > 1e-10 || wres > 1e-10 {
        return Err(Error::Factorization(format!(
            "identity residuals {mres:e} (mass), {wres:e} (advection) exceed 1e-10"
        )));
    }
    Ok(fact)
}

/// Generalized eigendecompositions `U_i^T M_i U_i = I`, `U_i^T K_i U_i =
/// Lambda_i` of the univariate parametric pencils.
#[derive(Debug, Clone)]
pub struct SpatialEigen {
    pub vectors: Vec<DMatrix<f64>>,
    pub values: Vec<Vec<f64>>,
    /// Kronecker sum of the `Lambda_i`, first direction fastest.
    pub combined: Vec<f64>,
    /// Diagonals of the parametric mass and stiffness per direction.
    pub mass_diag: Vec<Vec<f64>>,
    pub stiffness_diag: Vec<Vec<f64>>,
}

impl SpatialEigen {
    pub fn dims(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    pub fn n_space(&self) -> usize {
        self.combined.len()
    }

    /// Diagonal of the Kronecker-structured parametric stiffness
    /// `sum_i M_d (x) .. (x) K_i (x) .. (x) M_1`.
    pub fn parametric_stiffness_diagonal(&self) -> Vec<f64> {
        let dims = self.dims();
        let mut idx = vec![0usize; dims.len()];
        (0..self.n_space())
            .map(|flat| {
                crate::sparse::unflatten(flat, &dims, &mut idx);
                (0..dims.len())
                    .map(|i| {
                        (0..dims.len())
                            .map(|k| {
                                if k == i {
                                    self.stiffness_diag[k][idx[k]]
                                } else {
                                    self.mass_diag[k][idx[k]]
                                }
                            })
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect()
    }
}

/// Eigendecomposition of the parametric pencils of a tensor spline space.
pub fn parametric_spatial_eigen(bases: &[crate::splines::Basis1D], npts: usize) -> Result<SpatialEigen> {
    let pencils = bases
        .iter()
        .map(|b| crate::assembly::parametric_matrices_1d(b, npts))
        .collect::<Result<Vec<_>>>()?;
    spatial_eigendecomposition(&pencils)
}

/// Real symmetric-definite generalized eigenproblem `K u = lambda M u`.
pub fn generalized_symmetric_eigen(m: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if k.shape() != m.shape() || !m.is_square() {
        return Err(Error::SizeMismatch {
            expected: n,
            got: k.nrows(),
        });
    }
    let l = cholesky(m, "parametric mass matrix")?;
    let y = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Factorization("triangular solve".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Factorization("triangular solve".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let (lambda, q) = hermitian_jacobi(&c.map(|v| C64::new(v, 0.0)))?;
    let q = q.map(|z| z.re);
    let u = l
        .transpose()
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::Factorization("triangular solve".into()))?;
    if lambda.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Hypothesis("parametric stiffness matrix is not positive definite".into()));
    }
    Ok((lambda, u))
}

pub fn spatial_eigendecomposition(pencils: &[(DMatrix<f64>, DMatrix<f64>)]) -> Result<SpatialEigen> {
    let mut vectors = Vec::with_capacity(pencils.len());
    let mut values = Vec::with_capacity(pencils.len());
    for (m, k) in pencils {
        let (lam, u) = generalized_symmetric_eigen(m, k)?;
        vectors.push(u);
        values.push(lam);
    }
    let dims: Vec<usize> = values.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    let mut combined = vec![0.0; total];
    let mut idx = vec![0usize; dims.len()];
    for (flat, c) in combined.iter_mut().enumerate() {
        crate::sparse::unflatten(flat, &dims, &mut idx);
        *c = idx.iter().zip(&values).map(|(&i, v)| v[i]).sum();
    }
    Ok(SpatialEigen {
        vectors,
        values,
        combined,
        mass_diag: pencils.iter().map(|(m, _)| m.diagonal().iter().copied().collect()).collect(),
        stiffness_diag: pencils.iter().map(|(_, k)| k.diagonal().iter().copied().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jacobi_on_small_hermitian() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let (vals, v) = hermitian_jacobi(&h).unwrap();
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-14);
        let back = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            vals.iter().map(|&x| C64::new(x, 0.0)),
        )) * v.adjoint();
        assert_abs_diff_eq!((back - h).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_pencils() {
        let f = factorize_time_pencil(
            &DMatrix::from_element(1, 1, 0.5),
            &DMatrix::from_element(1, 1, 4.0),
        )
        .unwrap();
        assert_abs_diff_eq!(f.u[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.delta.diag[0].re, 0.125, epsilon = 1e-15);
        let (lam, u) = generalized_symmetric_eigen(
            &DMatrix::from_element(1, 1, 1.0 / 3.0),
            &DMatrix::from_element(1, 1, 4.0),
        )
        .unwrap();
        assert_abs_diff_eq!(lam[0], 12.0, epsilon = 1e-13);
        assert_abs_diff_eq!(u[(0, 0)].abs(), 3f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn rejects_indefinite_mass() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, -0.3, 0.5]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(factorize_time_pencil(&w, &m), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn rejects_pencil_without_trace_identity() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.3, 0.5]);
        let m = DMatrix::identity(2, 2);
        assert!(matches!(factorize_time_pencil(&w, &m), Err(Error::Factorization(_))));
    }

    #[test]
    fn arrowhead_diagonal_and_zero_rhs() {
        let a = Arrowhead {
            diag: vec![C64::new(2.0, 0.0), C64::new(0.0, 4.0), C64::new(-1.0, 1.0)],
            last_col: vec![C64::new(0.0, 0.0); 2],
            last_row: vec![C64::new(0.0, 0.0); 2],
        };
        let r = [C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(0.0, 3.0)];
        let mut s = [C64::new(0.0, 0.0); 3];
        a.shifted_solve(0.0, &r, &mut s).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!((s[k] - r[k] / a.diag[k]).norm(), 0.0, epsilon = 1e-15);
        }
        a.shifted_solve(1.5, &[C64::new(0.0, 0.0); 3], &mut s).unwrap();
        assert!(s.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn arrowhead_singular_shift() {
        let a = Arrowhead {
            diag: vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            last_col: vec![C64::new(1.0, 0.0)],
            last_row: vec![C64::new(1.0, 0.0)],
        };
        let mut s = [C64::new(0.0, 0.0); 2];
        assert!(matches!(
            a.shifted_solve(0.0, &[C64::new(1.0, 0.0); 2], &mut s),
            Err(Error::SingularShift { .. })
        ));
    }
}
