//! Discrete operators of the space-time Galerkin scheme.
//!
//! Unknowns are ordered colexicographically with space fastest: the
//! coefficient of spatial function `i` and temporal function `j` sits at
//! `i + N_s * j`. A coefficient vector is therefore an `N_s x N_t`
//! column-major matrix, and the Kronecker operator
//! `W_t (x) M_s + M_t (x) K_s` acts on it as `M_s V W_t^T + K_s V M_t^T`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Parametrization;
use crate::quadrature::{element_rule, QuadratureRule1D};
use crate::sparse::{flatten, unflatten, CsrPattern, SparseMatrix};
use crate::splines::{Basis1D, BasisTable, KnotVector, Restriction};

/// Tensor-product trial space on a space-time cylinder.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub geometry: Parametrization,
    /// One zero-boundary basis per spatial direction.
    pub space: Vec<Basis1D>,
    /// Zero-initial-value basis in the rescaled time `tau = t / T`.
    pub time: Basis1D,
    /// Gauss points per direction per knot span.
    pub quad_points: usize,
}

impl Discretization {
    /// Uniform meshes with `elements` spans in every direction (time
    /// included), degree `q` everywhere, and `q + 1` Gauss points unless
    /// `quad_points` overrides it.
    pub fn uniform(
        geometry: Parametrization,
        q: usize,
        elements: usize,
        quad_points: Option<usize>,
    ) -> Result<Self> {
        let kv = KnotVector::open_uniform(q, elements)?;
        let space = (0..geometry.dim())
            .map(|_| Basis1D::new(kv.clone(), Restriction::ZeroBothEnds))
            .collect::<Result<Vec<_>>>()?;
        let time = Basis1D::new(kv, Restriction::ZeroAtStart)?;
        Self::new(geometry, space, time, quad_points.unwrap_or(q + 1))
    }

    pub fn new(
        geometry: Parametrization,
        space: Vec<Basis1D>,
        time: Basis1D,
        quad_points: usize,
    ) -> Result<Self> {
        if space.len() != geometry.dim() {
            return Err(Error::SizeMismatch {
                expected: geometry.dim(),
                got: space.len(),
            });
        }
        if space.iter().any(|b| b.restriction() != Restriction::ZeroBothEnds)
            || time.restriction() != Restriction::ZeroAtStart
        {
            return Err(Error::InvalidArgument(
                "spatial bases must vanish at both ends and the time basis at the start".into(),
            ));
        }
        Ok(Self {
            geometry,
            space,
            time,
            quad_points,
        })
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn final_time(&self) -> f64 {
        self.geometry.final_time()
    }

    pub fn space_dims(&self) -> Vec<usize> {
        self.space.iter().map(Basis1D::active_count).collect()
    }

    /// `N_s`.
    pub fn n_space(&self) -> usize {
        self.space_dims().iter().product()
    }

    /// `N_t`.
    pub fn n_time(&self) -> usize {
        self.time.active_count()
    }

    /// `N_dof = N_s N_t`.
    pub fn n_dof(&self) -> usize {
        self.n_space() * self.n_time()
    }
}

/// Quadrature rules and basis tables for the elements of a spatial patch.
pub(crate) struct SpatialQuadrature<'a> {
    bases: &'a [Basis1D],
    rules: Vec<QuadratureRule1D>,
    tables: Vec<BasisTable>,
    n_elements: Vec<usize>,
    dims: Vec<usize>,
    npts: usize,
}

/// Per-element quadrature data. Local functions and points are ordered with
/// the first direction fastest.
#[derive(Debug, Default, Clone)]
pub(crate) struct ElementData {
    pub nl: usize,
    pub nq: usize,
    /// Flat active index of each local function (`None` on the boundary).
    pub active: Vec<Option<usize>>,
    /// Multi-index of each local function in the active index space.
    pub active_multi: Vec<[usize; 3]>,
    /// `vals[a * nq + k]`.
    pub vals: Vec<f64>,
    /// Physical gradients, `grads[(a * d + r) * nq + k]`.
    pub grads: Vec<f64>,
    /// Quadrature weight times `det J`.
    pub wdet: Vec<f64>,
    pub x: Vec<[f64; 3]>,
}

impl<'a> SpatialQuadrature<'a> {
    pub fn new(bases: &'a [Basis1D], npts: usize) -> Result<Self> {
        let rules = bases
            .iter()
            .map(|b| element_rule(b.knot_vector(), npts))
            .collect::<Result<Vec<_>>>()?;
        let tables = bases.iter().zip(&rules).map(|(b, r)| b.tabulate(r)).collect();
        let n_elements = rules.iter().map(QuadratureRule1D::num_elements).collect();
        let dims = bases.iter().map(Basis1D::active_count).collect();
        Ok(Self {
            bases,
            rules,
            tables,
            n_elements,
            dims,
            npts,
        })
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    pub fn num_elements(&self) -> usize {
        self.n_elements.iter().product()
    }

    pub fn local_count(&self) -> usize {
        self.bases.iter().map(|b| b.degree() + 1).product()
    }

    pub fn point_count(&self) -> usize {
        self.npts.pow(self.dim() as u32)
    }

    pub fn fill(&self, e: usize, geo: &Parametrization, data: &mut ElementData) -> Result<()> {
        let d = self.dim();
        let npts = self.npts;
        let mut el = [0usize; 3];
        unflatten(e, &self.n_elements, &mut el[..d]);
        let widths: Vec<usize> = self.bases.iter().map(|b| b.degree() + 1).collect();
        let nl = self.local_count();
        let nq = self.point_count();
        data.nl = nl;
        data.nq = nq;
        data.active.clear();
        data.active_multi.clear();
        data.vals.resize(nl * nq, 0.0);
        data.grads.resize(nl * d * nq, 0.0);
        data.wdet.resize(nq, 0.0);
        data.x.resize(nq, [0.0; 3]);

        let first: Vec<usize> = (0..d)
            .map(|i| self.tables[i].first[el[i] * npts])
            .collect();
        let mut a = [0usize; 3];
        for l in 0..nl {
            unflatten(l, &widths, &mut a[..d]);
            let mut multi = [0usize; 3];
            let mut ok = true;
            for i in 0..d {
                match self.bases[i].active_index(first[i] + a[i]) {
                    Some(j) => multi[i] = j,
                    None => ok = false,
                }
            }
            data.active
                .push(ok.then(|| flatten(&multi[..d], &self.dims)));
            data.active_multi.push(multi);
        }

        let pts = vec![npts; d];
        let mut k = [0usize; 3];
        let mut z = [0.0; 3];
        let mut pidx = [0usize; 3];
        let mut pgrad = [0.0; 3];
        for qp in 0..nq {
            unflatten(qp, &pts, &mut k[..d]);
            let mut w = 1.0;
            for i in 0..d {
                pidx[i] = el[i] * npts + k[i];
                z[i] = self.rules[i].points[pidx[i]];
                w *= self.rules[i].weights[pidx[i]];
            }
            let g = geo.eval(&z[..d])?;
            data.wdet[qp] = w * g.det;
            data.x[qp] = g.x;
            for l in 0..nl {
                unflatten(l, &widths, &mut a[..d]);
                let mut v = 1.0;
                for c in 0..d {
                    let mut gc = 1.0;
                    for i in 0..d {
                        let t = &self.tables[i];
                        if i == c {
                            gc *= t.derivs(pidx[i])[a[i]];
                        } else {
                            gc *= t.values(pidx[i])[a[i]];
                        }
                    }
                    pgrad[c] = gc;
                    v *= self.tables[c].values(pidx[c])[a[c]];
                }
                data.vals[l * nq + qp] = v;
                for r in 0..d {
                    let s: f64 = (0..d).map(|c| g.jac_inv_t[r][c] * pgrad[c]).sum();
                    data.grads[(l * d + r) * nq + qp] = s;
                }
            }
        }
        Ok(())
    }
}

/// `C (m x n) = A (m x k) B^T` with `A`, `B` row-major (`B` is `n x k`).
pub(crate) fn gemm_abt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: bounds asserted above; strides describe row-major A, B^T and C.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Spatial mass and stiffness matrices plus the basis moments `int B_j`.
#[derive(Debug, Clone)]
pub struct SpatialMatrices {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub moments: Vec<f64>,
}

struct ElementBlocks {
    active: Vec<Option<usize>>,
    multi: Vec<[usize; 3]>,
    mass: Vec<f64>,
    stiffness: Vec<f64>,
    moments: Vec<f64>,
}

fn element_blocks(sq: &SpatialQuadrature, e: usize, geo: &Parametrization) -> Result<ElementBlocks> {
    let mut data = ElementData::default();
    sq.fill(e, geo, &mut data)?;
    let (nl, nq, d) = (data.nl, data.nq, sq.dim());
    let mut wv = data.vals.clone();
    let mut wg = data.grads.clone();
    for l in 0..nl {
        for qp in 0..nq {
            wv[l * nq + qp] *= data.wdet[qp];
        }
        for r in 0..d {
            for qp in 0..nq {
                wg[(l * d + r) * nq + qp] *= data.wdet[qp];
            }
        }
    }
    let mut mass = vec![0.0; nl * nl];
    let mut stiffness = vec![0.0; nl * nl];
    gemm_abt(&wv, &data.vals, nl, nq, nl, &mut mass);
    gemm_abt(&wg, &data.grads, nl, d * nq, nl, &mut stiffness);
    let moments = (0..nl)
        .map(|l| wv[l * nq..(l + 1) * nq].iter().sum())
        .collect();
    Ok(ElementBlocks {
        active: data.active,
        multi: data.active_multi,
        mass,
        stiffness,
        moments,
    })
}

/// Mass, stiffness and moments of the zero-boundary spatial space on the
/// mapped domain, by element loop and scatter. The scatter runs in element
/// order, so the result does not depend on the number of threads.
pub fn assemble_spatial(
    bases: &[Basis1D],
    geo: &Parametrization,
    npts: usize,
) -> Result<SpatialMatrices> {
    if bases.len() != geo.dim() {
        return Err(Error::SizeMismatch {
            expected: geo.dim(),
            got: bases.len(),
        });
    }
    let sq = SpatialQuadrature::new(bases, npts)?;
    let dims: Vec<usize> = bases.iter().map(Basis1D::active_count).collect();
    let band = bases.iter().map(Basis1D::degree).max().unwrap_or(0);
    let pattern = Arc::new(CsrPattern::tensor_band(&dims, band));
    let mut mass = SparseMatrix::zeros(pattern.clone(), true);
    let mut stiffness = SparseMatrix::zeros(pattern.clone(), true);
    let mut moments = vec![0.0; pattern.nrows];
    let d = geo.dim();
    let nel = sq.num_elements();
    const CHUNK: usize = 64;
    for start in (0..nel).step_by(CHUNK) {
        let blocks = (start..(start + CHUNK).min(nel))
            .into_par_iter()
            .map(|e| element_blocks(&sq, e, geo))
            .collect::<Result<Vec<_>>>()?;
        for b in blocks {
            let nl = b.active.len();
            for (i, gi) in b.active.iter().enumerate() {
                let Some(gi) = *gi else { continue };
                moments[gi] += b.moments[i];
                let ri = &b.multi[i][..d];
                for (j, gj) in b.active.iter().enumerate() {
                    if gj.is_none() {
                        continue;
                    }
                    let pos = pattern.position(gi, ri, &b.multi[j][..d]);
                    mass.values[pos] += b.mass[i * nl + j];
                    stiffness.values[pos] += b.stiffness[i * nl + j];
                }
            }
        }
    }
    Ok(SpatialMatrices {
        mass,
        stiffness,
        moments,
    })
}

/// Dense mass and stiffness of a univariate basis on the parametric
/// interval `[0, 1]`.
pub fn parametric_matrices_1d(basis: &Basis1D, npts: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = basis.active_count();
    let p = basis.degree() + 1;
    let rule = element_rule(basis.knot_vector(), npts)?;
    let tab = basis.tabulate(&rule);
    let mut m = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for pt in 0..rule.points.len() {
        let w = rule.weights[pt];
        let (v, dv) = (tab.values(pt), tab.derivs(pt));
        for a in 0..p {
            let Some(i) = basis.active_index(tab.first[pt] + a) else { continue };
            for b in 0..p {
                let Some(j) = basis.active_index(tab.first[pt] + b) else { continue };
                m[(i, j)] += w * v[a] * v[b];
                k[(i, j)] += w * dv[a] * dv[b];
            }
        }
    }
    Ok((m, k))
}

/// Temporal matrices `W_t` and the weighted mass `M_t`.
#[derive(Debug, Clone)]
pub struct TimeMatrices {
    pub w: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Weight samples at the time quadrature points.
    pub weight_samples: Vec<f64>,
}

/// Time quadrature points in physical time with weights scaled by `T`.
pub fn time_points(basis_t: &Basis1D, npts: usize, final_time: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = element_rule(basis_t.knot_vector(), npts)?;
    let t = rule.points.iter().map(|tau| tau * final_time).collect();
    let w = rule.weights.iter().map(|w| w * final_time).collect();
    Ok((t, w))
}

/// `[W_t]_{jk} = int b_k' b_j dt` and `[M_t]_{jk} = int weight(t) b_k b_j dt`
/// over the active temporal functions. `weight` receives physical time.
pub fn assemble_time(
    basis_t: &Basis1D,
    weight: impl Fn(f64) -> f64,
    npts: usize,
    final_time: f64,
) -> Result<TimeMatrices> {
    let samples: Vec<f64> = time_points(basis_t, npts, final_time)?
        .0
        .into_iter()
        .map(weight)
        .collect();
    assemble_time_sampled(basis_t, &samples, npts, final_time)
}

/// As [`assemble_time`], with the weight given at the time quadrature points.
pub fn assemble_time_sampled(
    basis_t: &Basis1D,
    weight_samples: &[f64],
    npts: usize,
    final_time: f64,
) -> Result<TimeMatrices> {
    let rule = element_rule(basis_t.knot_vector(), npts)?;
    if weight_samples.len() != rule.points.len() {
        return Err(Error::SizeMismatch {
            expected: rule.points.len(),
            got: weight_samples.len(),
        });
    }
    if let Some((i, &a)) = weight_samples
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a > 0.0) || !a.is_finite())
    {
        return Err(Error::Hypothesis(format!(
            "coefficient {a} at t = {} is not positive",
            rule.points[i] * final_time
        )));
    }
    let tab = basis_t.tabulate(&rule);
    let n = basis_t.active_count();
    let p = basis_t.degree() + 1;
    let mut w = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for pt in 0..rule.points.len() {
        let wq = rule.weights[pt];
        let (v, dv) = (tab.values(pt), tab.derivs(pt));
        for a in 0..p {
            let Some(j) = basis_t.active_index(tab.first[pt] + a) else { continue };
            for b in 0..p {
                let Some(k) = basis_t.active_index(tab.first[pt] + b) else { continue };
                // d/dt = (1/T) d/dtau and dt = T dtau cancel in W_t
                w[(j, k)] += wq * dv[b] * v[a];
                m[(j, k)] += wq * final_time * weight_samples[pt] * v[b] * v[a];
            }
        }
    }
    Ok(TimeMatrices {
        w,
        m,
        weight_samples: weight_samples.to_vec(),
    })
}

/// `l(u)(t) = sum_j b_j(t) (m_s . u[:, j])`.
pub fn nonlocal_value(
    u: &[f64],
    moments: &[f64],
    basis_t: &Basis1D,
    final_time: f64,
    t: f64,
) -> Result<f64> {
    let coeffs = spatial_integrals(u, moments, basis_t.active_count())?;
    let e = basis_t.eval(t / final_time).map_err(|_| Error::OutOfDomain {
        value: t,
        lo: 0.0,
        hi: final_time,
    })?;
    Ok(e.values
        .iter()
        .enumerate()
        .filter_map(|(a, v)| basis_t.active_index(e.first + a).map(|j| v * coeffs[j]))
        .sum())
}

/// `l(u)` at the time quadrature points of the discretization.
pub fn nonlocal_at_quadrature(u: &[f64], moments: &[f64], basis_t: &Basis1D, npts: usize) -> Result<Vec<f64>> {
    let coeffs = spatial_integrals(u, moments, basis_t.active_count())?;
    let rule = element_rule(basis_t.knot_vector(), npts)?;
    let tab = basis_t.tabulate(&rule);
    Ok((0..rule.points.len())
        .map(|pt| {
            tab.values(pt)
                .iter()
                .enumerate()
                .filter_map(|(a, v)| basis_t.active_index(tab.first[pt] + a).map(|j| v * coeffs[j]))
                .sum()
        })
        .collect())
}

fn spatial_integrals(u: &[f64], moments: &[f64], n_t: usize) -> Result<Vec<f64>> {
    let n_s = moments.len();
    if u.len() != n_s * n_t {
        return Err(Error::SizeMismatch {
            expected: n_s * n_t,
            got: u.len(),
        });
    }
    Ok(u.chunks(n_s)
        .map(|col| col.iter().zip(moments).map(|(a, b)| a * b).sum())
        .collect())
}

/// Load vector `[f]_j = int int f B_j` by space-time quadrature.
/// `f` receives the physical point and time.
pub fn assemble_rhs<F>(f: F, disc: &Discretization) -> Result<Vec<f64>>
where
    F: Fn(&[f64; 3], f64) -> f64 + Sync,
{
    let sq = SpatialQuadrature::new(&disc.space, disc.quad_points)?;
    let n_s = disc.n_space();
    let npts = disc.quad_points;
    let rule_t = element_rule(disc.time.knot_vector(), npts)?;
    let tab_t = disc.time.tabulate(&rule_t);
    let tt = disc.final_time();
    let ntq = rule_t.points.len();
    let mut out = vec![0.0; disc.n_dof()];
    let mut data = ElementData::default();
    for e in 0..sq.num_elements() {
        sq.fill(e, &disc.geometry, &mut data)?;
        let (nl, nq) = (data.nl, data.nq);
        // local[a, m] = sum_k vals[a,k] wdet[k] f(x_k, t_m)
        let mut fx = vec![0.0; ntq * nq];
        for m in 0..ntq {
            let t = rule_t.points[m] * tt;
            for k in 0..nq {
                fx[m * nq + k] = f(&data.x[k], t) * data.wdet[k];
            }
        }
        let mut local = vec![0.0; nl * ntq];
        gemm_abt(&data.vals, &fx, nl, nq, ntq, &mut local);
        for m in 0..ntq {
            let wt = rule_t.weights[m] * tt;
            for (b, vt) in tab_t.values(m).iter().enumerate() {
                let Some(jt) = disc.time.active_index(tab_t.first[m] + b) else { continue };
                for (a, ga) in data.active.iter().enumerate() {
                    if let Some(ga) = ga {
                        out[ga + n_s * jt] += local[a * ntq + m] * vt * wt;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A product term `g(x) s(t)` of a separable forcing.
pub struct SeparableTerm {
    pub space: Box<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>,
    pub time: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for SeparableTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SeparableTerm")
    }
}

/// Spatial load `int g B_i`.
pub fn assemble_space_load<G>(g: G, disc: &Discretization) -> Result<Vec<f64>>
where
    G: Fn(&[f64; 3]) -> f64,
{
    let sq = SpatialQuadrature::new(&disc.space, disc.quad_points)?;
    let mut out = vec![0.0; disc.n_space()];
    let mut data = ElementData::default();
    for e in 0..sq.num_elements() {
        sq.fill(e, &disc.geometry, &mut data)?;
        let gw: Vec<f64> = (0..data.nq).map(|k| g(&data.x[k]) * data.wdet[k]).collect();
        for (a, ga) in data.active.iter().enumerate() {
            if let Some(ga) = ga {
                let row = &data.vals[a * data.nq..(a + 1) * data.nq];
                out[*ga] += row.iter().zip(&gw).map(|(v, w)| v * w).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Temporal load `int s b_j dt`.
pub fn assemble_time_load<S>(s: S, disc: &Discretization) -> Result<Vec<f64>>
where
    S: Fn(f64) -> f64,
{
    let rule = element_rule(disc.time.knot_vector(), disc.quad_points)?;
    let tab = disc.time.tabulate(&rule);
    let tt = disc.final_time();
    let mut out = vec![0.0; disc.n_time()];
    for pt in 0..rule.points.len() {
        let sw = s(rule.points[pt] * tt) * rule.weights[pt] * tt;
        for (b, v) in tab.values(pt).iter().enumerate() {
            if let Some(j) = disc.time.active_index(tab.first[pt] + b) {
                out[j] += v * sw;
            }
        }
    }
    Ok(out)
}

/// Load vector of `f = sum_k g_k(x) s_k(t)` as a sum of Kronecker products.
pub fn assemble_rhs_separable(terms: &[SeparableTerm], disc: &Discretization) -> Result<Vec<f64>> {
    let n_s = disc.n_space();
    let mut out = vec![0.0; disc.n_dof()];
    for term in terms {
        let gs = assemble_space_load(&term.space, disc)?;
        let st = assemble_time_load(&term.time, disc)?;
        for (j, s) in st.iter().enumerate() {
            for (i, g) in gs.iter().enumerate() {
                out[i + n_s * j] += g * s;
            }
        }
    }
    Ok(out)
}

/// `out[:, j] = sum_k a[j, k] v[:, k]` for column-major `v` with `n` rows;
/// this is `(A (x) I) v`.
pub fn mix_time<T>(a: &DMatrix<T>, v: &[T], n: usize, out: &mut [T])
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<Output = T> + std::ops::AddAssign + num_traits::Zero,
{
    let nt = a.nrows();
    out.iter_mut().for_each(|o| *o = T::zero());
    for j in 0..nt {
        let oj = &mut out[j * n..(j + 1) * n];
        for k in 0..nt {
            let c = a[(j, k)];
            if c.is_zero() {
                continue;
            }
            let vk = &v[k * n..(k + 1) * n];
            for (o, x) in oj.iter_mut().zip(vk) {
                *o += c * *x;
            }
        }
    }
}

/// The matrix `A(u) = W_t (x) M_s + M_t(u) (x) K_s`, applied matrix-free.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub w_t: DMatrix<f64>,
    pub m_t: DMatrix<f64>,
    pub mass: Arc<SparseMatrix>,
    pub stiffness: Arc<SparseMatrix>,
}

impl SystemOperator {
    pub fn new(
        w_t: DMatrix<f64>,
        m_t: DMatrix<f64>,
        mass: Arc<SparseMatrix>,
        stiffness: Arc<SparseMatrix>,
    ) -> Result<Self> {
        if w_t.shape() != m_t.shape() || !w_t.is_square() {
            return Err(Error::SizeMismatch {
                expected: w_t.nrows(),
                got: m_t.nrows(),
            });
        }
        if mass.nrows() != stiffness.nrows() {
            return Err(Error::SizeMismatch {
                expected: mass.nrows(),
                got: stiffness.nrows(),
            });
        }
        Ok(Self {
            w_t,
            m_t,
            mass,
            stiffness,
        })
    }

    pub fn n_space(&self) -> usize {
        self.mass.nrows()
    }

    pub fn n_time(&self) -> usize {
        self.w_t.nrows()
    }

    pub fn n_dof(&self) -> usize {
        self.n_space() * self.n_time()
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n_dof();
        for len in [v.len(), out.len()] {
            if len != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        let (ns, nt) = (self.n_space(), self.n_time());
        let mut z = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        mix_time(&self.w_t, v, ns, &mut z);
        self.mass.apply_columns(&z, out, nt);
        mix_time(&self.m_t, v, ns, &mut z);
        self.stiffness.apply_columns(&z, &mut tmp, nt);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        Ok(())
    }

    /// Explicit Kronecker matrix; for small test problems only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.w_t.kronecker(&self.mass.to_dense()) + self.m_t.kronecker(&self.stiffness.to_dense())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainKind;
    use approx::assert_abs_diff_eq;

    fn unit(kind: DomainKind, q: usize, el: usize) -> Discretization {
        Discretization::uniform(Parametrization::new(kind, 1.0).unwrap(), q, el, None).unwrap()
    }

    #[test]
    fn single_hat_function_1d() {
        let d = unit(DomainKind::UnitInterval, 1, 2);
        let s = assemble_spatial(&d.space, &d.geometry, 2).unwrap();
        assert_eq!(s.mass.nrows(), 1);
        assert_abs_diff_eq!(s.mass.get(0, 0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.stiffness.get(0, 0), 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.moments[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_bilinear_function_2d() {
        let d = unit(DomainKind::UnitSquare, 1, 2);
        let s = assemble_spatial(&d.space, &d.geometry, 2).unwrap();
        assert_eq!(s.mass.nrows(), 1);
        assert_abs_diff_eq!(s.mass.get(0, 0), 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.stiffness.get(0, 0), 8.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn one_linear_time_element() {
        let b = Basis1D::new(KnotVector::open_uniform(1, 1).unwrap(), Restriction::ZeroAtStart).unwrap();
        let tm = assemble_time(&b, |_| 1.0, 2, 1.0).unwrap();
        assert_abs_diff_eq!(tm.w[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tm.m[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn time_weight_must_be_positive() {
        let b = Basis1D::new(KnotVector::open_uniform(2, 3).unwrap(), Restriction::ZeroAtStart).unwrap();
        assert!(matches!(
            assemble_time(&b, |t| 0.5 - t, 3, 1.0),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn time_matrices_trace_identity_and_scaling() {
        for q in 1..=4 {
            for el in [1, 3, 8] {
                for tt in [1.0, 2.5] {
                    let b = Basis1D::new(KnotVector::open_uniform(q, el).unwrap(), Restriction::ZeroAtStart)
                        .unwrap();
                    let one = assemble_time(&b, |_| 1.0, q + 1, tt).unwrap();
                    let three = assemble_time(&b, |_| 3.0, q + 1, tt).unwrap();
                    let n = one.w.nrows();
                    let sym = &one.w + one.w.transpose();
                    for i in 0..n {
                        for j in 0..n {
                            let e = if i == n - 1 && j == n - 1 { 1.0 } else { 0.0 };
                            assert_abs_diff_eq!(sym[(i, j)], e, epsilon = 1e-13);
                        }
                    }
                    assert_abs_diff_eq!((&one.m * 3.0 - &three.m).norm(), 0.0, epsilon = 1e-13);
                    assert_eq!(one.w, three.w);
                }
            }
        }
    }

    #[test]
    fn nonlocal_value_small_case() {
        let d = Discretization::new(
            Parametrization::new(DomainKind::UnitInterval, 1.0).unwrap(),
            vec![Basis1D::new(KnotVector::open_uniform(1, 2).unwrap(), Restriction::ZeroBothEnds).unwrap()],
            Basis1D::new(KnotVector::open_uniform(1, 1).unwrap(), Restriction::ZeroAtStart).unwrap(),
            2,
        )
        .unwrap();
        let s = assemble_spatial(&d.space, &d.geometry, 2).unwrap();
        let l = nonlocal_value(&[1.0], &s.moments, &d.time, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-15);
        assert_eq!(nonlocal_value(&[0.0], &s.moments, &d.time, 1.0, 0.3).unwrap(), 0.0);
        let l3 = nonlocal_value(&[3.0], &s.moments, &d.time, 1.0, 0.4).unwrap();
        let l1 = nonlocal_value(&[1.0], &s.moments, &d.time, 1.0, 0.4).unwrap();
        assert_abs_diff_eq!(l3, 3.0 * l1, epsilon = 1e-15);
        assert!(nonlocal_value(&[1.0], &s.moments, &d.time, 1.0, 1.5).is_err());
    }

    #[test]
    fn operator_size_mismatch() {
        let d = unit(DomainKind::UnitInterval, 2, 3);
        let s = assemble_spatial(&d.space, &d.geometry, 3).unwrap();
        let t = assemble_time(&d.time, |_| 1.0, 3, 1.0).unwrap();
        let op = SystemOperator::new(t.w, t.m, Arc::new(s.mass), Arc::new(s.stiffness)).unwrap();
        let mut out = vec![0.0; op.n_dof()];
        assert!(op.apply(&[1.0], &mut out).is_err());
        let zero = vec![0.0; op.n_dof()];
        op.apply(&zero, &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_operator() {
        let d = Discretization::new(
            Parametrization::new(DomainKind::UnitInterval, 1.0).unwrap(),
            vec![Basis1D::new(KnotVector::open_uniform(1, 2).unwrap(), Restriction::ZeroBothEnds).unwrap()],
            Basis1D::new(KnotVector::open_uniform(1, 1).unwrap(), Restriction::ZeroAtStart).unwrap(),
            2,
        )
        .unwrap();
        let s = assemble_spatial(&d.space, &d.geometry, 2).unwrap();
        let t = assemble_time(&d.time, |_| 2.0, 2, 1.0).unwrap();
        let op = SystemOperator::new(t.w, t.m, Arc::new(s.mass), Arc::new(s.stiffness)).unwrap();
        let mut out = [0.0];
        op.apply(&[1.5], &mut out).unwrap();
        // (1/2 * 1/3 + 2/3 * 4) * 1.5
        assert_abs_diff_eq!(out[0], (0.5 / 3.0 + 2.0 / 3.0 * 4.0) * 1.5, epsilon = 1e-14);
    }
}
