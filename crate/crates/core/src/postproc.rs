//! Space-time error norms and observed convergence orders.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_space_load, assemble_spatial, assemble_time_load, time_points, Discretization, ElementData, SpatialQuadrature};
use crate::error::{Error, Result};
use crate::problems::SeparableSolution;
use crate::quadrature::element_rule;
use crate::sparse::conjugate_gradient;

/// One row of a convergence or robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub problem: String,
    pub q: usize,
    pub inv_h: usize,
    #[serde(rename = "N_dof")]
    pub n_dof: usize,
    #[serde(rename = "e_L2L2")]
    pub e_l2l2: Option<f64>,
    #[serde(rename = "e_L2H1")]
    pub e_l2h1: Option<f64>,
    #[serde(rename = "order_L2L2")]
    pub order_l2l2: Option<f64>,
    #[serde(rename = "order_L2H1")]
    pub order_l2h1: Option<f64>,
    pub picard: Option<usize>,
    pub gmres_max: Option<usize>,
    pub seconds: Option<f64>,
}

/// `(||u_h - u||_{L2(L2)}, ||grad(u_h - u)||_{L2(L2)})` with `q + 2`
/// Gauss points per direction (the largest degree of the discretization).
pub fn error_norms(u_h: &[f64], exact: &SeparableSolution, disc: &Discretization) -> Result<(f64, f64)> {
    let q = disc
        .space
        .iter()
        .map(|b| b.degree())
        .chain([disc.time.degree()])
        .max()
        .unwrap_or(1);
    error_norms_with(u_h, exact, disc, q + 2)
}

pub fn error_norms_with(u_h: &[f64], exact: &SeparableSolution, disc: &Discretization, npts: usize) -> Result<(f64, f64)> {
    let n_s = disc.n_space();
    let n_t = disc.n_time();
    if u_h.len() != n_s * n_t {
        return Err(Error::SizeMismatch {
            expected: n_s * n_t,
            got: u_h.len(),
        });
    }
    let d = disc.dim();
    // temporal quadrature: coefficients of u_h(., t_m) and weights
    let rule_t = element_rule(disc.time.knot_vector(), npts)?;
    let tab_t = disc.time.tabulate(&rule_t);
    let (tq, wq) = time_points(&disc.time, npts, disc.final_time())?;
    let mt = tq.len();
    // c[m * n_s + i]: spatial coefficients at time point m
    let mut c = vec![0.0; mt * n_s];
    for m in 0..mt {
        for (b, v) in tab_t.values(m).iter().enumerate() {
            if let Some(j) = disc.time.active_index(tab_t.first[m] + b) {
                let col = &u_h[j * n_s..(j + 1) * n_s];
                c[m * n_s..(m + 1) * n_s]
                    .iter_mut()
                    .zip(col)
                    .for_each(|(o, u)| *o += v * u);
            }
        }
    }
    let sin_t: Vec<f64> = tq.iter().map(|t| t.sin()).collect();

    let sq = SpatialQuadrature::new(&disc.space, npts)?;
    let mut data = ElementData::default();
    let (mut e0, mut e1) = (0.0, 0.0);
    let mut local = Vec::new();
    let mut vals = Vec::new();
    let mut grads = Vec::new();
    for e in 0..sq.num_elements() {
        sq.fill(e, &disc.geometry, &mut data)?;
        let (nl, nq) = (data.nl, data.nq);
        // local coefficients, nl x mt row-major
        local.clear();
        local.resize(nl * mt, 0.0);
        for (a, ga) in data.active.iter().enumerate() {
            if let Some(ga) = ga {
                for m in 0..mt {
                    local[a * mt + m] = c[m * n_s + ga];
                }
            }
        }
        vals.resize(nq * mt, 0.0);
        grads.resize(d * nq * mt, 0.0);
        // vals (nq x mt) = data.vals^T (nq x nl) * local (nl x mt)
        transposed_product(&data.vals, nl, nq, &local, mt, &mut vals);
        for r in 0..d {
            let mut gr = vec![0.0; nl * nq];
            for a in 0..nl {
                gr[a * nq..(a + 1) * nq].copy_from_slice(&data.grads[(a * d + r) * nq..(a * d + r + 1) * nq]);
            }
            transposed_product(&gr, nl, nq, &local, mt, &mut grads[r * nq * mt..(r + 1) * nq * mt]);
        }
        for k in 0..nq {
            let x = &data.x[k];
            let qv = (exact.space)(x);
            let qg = (exact.gradient)(x);
            let wk = data.wdet[k];
            for m in 0..mt {
                let w = wk * wq[m];
                let diff = vals[k * mt + m] - qv * sin_t[m];
                e0 += w * diff * diff;
                for r in 0..d {
                    let g = grads[r * nq * mt + k * mt + m] - qg[r] * sin_t[m];
                    e1 += w * g * g;
                }
            }
        }
    }
    Ok((e0.sqrt(), e1.sqrt()))
}

/// `out (k x n) = a^T b` with `a` row-major `m x k` and `b` row-major `m x n`.
fn transposed_product(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= m * n && out.len() >= k * n);
    // SAFETY: sizes asserted above; a^T is read with swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `log2(e_coarse / e_fine)` for a halved mesh size.
pub fn observed_order(e_coarse: f64, e_fine: f64) -> Result<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "observed order undefined for errors {e_coarse} and {e_fine}"
        )));
    }
    Ok((e_coarse / e_fine).log2())
}

/// `L2` projection of `Q(x) sin(t)` onto the discrete space.
pub fn l2_projection(exact: &SeparableSolution, disc: &Discretization) -> Result<Vec<f64>> {
    let spatial = assemble_spatial(&disc.space, &disc.geometry, disc.quad_points)?;
    let g = assemble_space_load(exact.space, disc)?;
    let mut xs = vec![0.0; g.len()];
    conjugate_gradient(&spatial.mass, &g, &mut xs, 1e-14, 10 * g.len() + 100);
    let tm = crate::assembly::assemble_time(&disc.time, |_| 1.0, disc.quad_points, disc.final_time())?;
    let st = assemble_time_load(f64::sin, disc)?;
    let xt = tm
        .m
        .clone()
        .lu()
        .solve(&nalgebra::DVector::from_vec(st))
        .ok_or_else(|| Error::Factorization("temporal mass is singular".into()))?;
    let n_s = xs.len();
    let mut out = vec![0.0; n_s * xt.len()];
    for (j, t) in xt.iter().enumerate() {
        for (i, s) in xs.iter().enumerate() {
            out[i + n_s * j] = s * t;
        }
    }
    Ok(out)
}
