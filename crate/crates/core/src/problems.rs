//! Benchmark problems: coefficient functions, manufactured solutions and
//! the forcing they induce.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::assembly::SeparableTerm;
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Parametrization};
use crate::quadrature::gauss_legendre;

/// The coefficient `a` of the nonlocal diffusion term.
pub type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A manufactured solution `u(x, t) = Q(x) sin(t)`.
#[derive(Clone, Copy)]
pub struct SeparableSolution {
    pub space: fn(&[f64; 3]) -> f64,
    pub gradient: fn(&[f64; 3]) -> [f64; 3],
    pub laplacian: fn(&[f64; 3]) -> f64,
}

impl SeparableSolution {
    pub fn value(&self, x: &[f64; 3], t: f64) -> f64 {
        (self.space)(x) * t.sin()
    }

    pub fn time_derivative(&self, x: &[f64; 3], t: f64) -> f64 {
        (self.space)(x) * t.cos()
    }

    pub fn gradient_at(&self, x: &[f64; 3], t: f64) -> [f64; 3] {
        (self.gradient)(x).map(|g| g * t.sin())
    }

    pub fn laplacian_at(&self, x: &[f64; 3], t: f64) -> f64 {
        (self.laplacian)(x) * t.sin()
    }
}

#[derive(Clone)]
pub enum Forcing {
    /// `f = du/dt - a(l(u)) Laplace(u)` of the exact solution.
    Manufactured,
    Constant(f64),
}

/// A fully specified benchmark.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: DomainKind,
    pub final_time: f64,
    pub coefficient: CoefficientFn,
    /// Declared bounds `m <= a(s) <= M`.
    pub bounds: (f64, f64),
    pub exact: Option<SeparableSolution>,
    /// `c` in `l(u)(t) = c sin(t)` for the exact solution.
    pub nonlocal_coefficient: Option<f64>,
    pub forcing: Forcing,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("final_time", &self.final_time)
            .field("bounds", &self.bounds)
            .field("manufactured", &self.exact.is_some())
            .field("nonlocal_coefficient", &self.nonlocal_coefficient)
            .finish()
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["annulus2d", "thickring3d", "igloo_f1"];

fn annulus_a(l: f64) -> f64 {
    2.0 - 1.0 / (1.0 + l * l)
}

fn sin_a(l: f64) -> f64 {
    3.0 + l.sin()
}

/// `(s - 1)(s - 4)` with `s = x^2 + y^2`, and its derivative in `s`.
fn radial(x: &[f64; 3]) -> (f64, f64, f64) {
    let s = x[0] * x[0] + x[1] * x[1];
    (s, s * s - 5.0 * s + 4.0, 2.0 * s - 5.0)
}

fn annulus_q(x: &[f64; 3]) -> f64 {
    let (_, g, _) = radial(x);
    g * x[0] * x[1]
}

fn annulus_grad(x: &[f64; 3]) -> [f64; 3] {
    let (_, g, dg) = radial(x);
    let (px, py) = (x[0], x[1]);
    [
        dg * 2.0 * px * px * py + g * py,
        dg * 2.0 * py * px * py + g * px,
        0.0,
    ]
}

fn annulus_lap(x: &[f64; 3]) -> f64 {
    let (s, _, _) = radial(x);
    x[0] * x[1] * (32.0 * s - 60.0)
}

/// `R = g(s) x y^2` in the plane.
fn ring_r(x: &[f64; 3]) -> (f64, [f64; 2], f64) {
    let (s, g, dg) = radial(x);
    let (px, py) = (x[0], x[1]);
    let r = g * px * py * py;
    let grad = [
        dg * 2.0 * px * px * py * py + g * py * py,
        dg * 2.0 * py * px * py * py + g * 2.0 * px * py,
    ];
    let lap = px * py * py * (40.0 * s - 80.0) + 2.0 * px * g;
    (r, grad, lap)
}

fn ring_q(x: &[f64; 3]) -> f64 {
    -ring_r(x).0 * (PI * x[2]).sin()
}

fn ring_grad(x: &[f64; 3]) -> [f64; 3] {
    let (r, g, _) = ring_r(x);
    let (sz, cz) = (PI * x[2]).sin_cos();
    [-g[0] * sz, -g[1] * sz, -r * PI * cz]
}

fn ring_lap(x: &[f64; 3]) -> f64 {
    let (r, _, lap2) = ring_r(x);
    -(lap2 - PI * PI * r) * (PI * x[2]).sin()
}

/// `int_Omega g dx` by tensor Gauss quadrature on a uniform grid of the
/// parametric domain.
pub fn domain_integral(geo: &Parametrization, g: impl Fn(&[f64; 3]) -> f64, elements: usize, npts: usize) -> Result<f64> {
    let d = geo.dim();
    let (nodes, weights) = gauss_legendre(npts)?;
    let h = 1.0 / elements as f64;
    let per_dir: Vec<(f64, f64)> = (0..elements)
        .flat_map(|e| {
            nodes
                .iter()
                .zip(&weights)
                .map(move |(x, w)| (h * (e as f64 + 0.5 + 0.5 * x), 0.5 * h * w))
        })
        .collect();
    let m = per_dir.len();
    let total = m.pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        crate::sparse::unflatten(flat, &vec![m; d], &mut idx);
        let mut w = 1.0;
        for i in 0..d {
            z[i] = per_dir[idx[i]].0;
            w *= per_dir[idx[i]].1;
        }
        let p = geo.eval(&z)?;
        sum += w * p.det * g(&p.x);
    }
    Ok(sum)
}

impl ProblemSpec {
    pub fn geometry(&self) -> Result<Parametrization> {
        Parametrization::new(self.domain, self.final_time)
    }

    pub fn coefficient(&self, l: f64) -> f64 {
        (self.coefficient)(l)
    }

    pub fn is_manufactured(&self) -> bool {
        self.exact.is_some()
    }

    /// `l(u)(t)` of the exact solution.
    pub fn l_exact(&self, t: f64) -> Option<f64> {
        self.nonlocal_coefficient.map(|c| c * t.sin())
    }

    /// Adds a manufactured solution and precomputes its nonlocal
    /// coefficient by quadrature.
    pub fn with_exact(mut self, exact: SeparableSolution) -> Result<Self> {
        let geo = self.geometry()?;
        let c = domain_integral(&geo, exact.space, 4, 8)?;
        self.exact = Some(exact);
        self.nonlocal_coefficient = Some(c);
        self.forcing = Forcing::Manufactured;
        Ok(self)
    }

    /// A problem with constant forcing and no exact solution.
    pub fn new(
        name: impl Into<String>,
        domain: DomainKind,
        coefficient: CoefficientFn,
        bounds: (f64, f64),
        forcing: f64,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            final_time: 1.0,
            coefficient,
            bounds,
            exact: None,
            nonlocal_coefficient: None,
            forcing: Forcing::Constant(forcing),
        }
    }

    /// The forcing as a sum of products of space and time functions.
    pub fn forcing_terms(&self) -> Result<Vec<SeparableTerm>> {
        match &self.forcing {
            Forcing::Constant(v) => {
                let v = *v;
                Ok(vec![SeparableTerm {
                    space: Box::new(move |_| v),
                    time: Box::new(|_| 1.0),
                }])
            }
            Forcing::Manufactured => {
                let (exact, c) = self.manufactured()?;
                let a = self.coefficient.clone();
                Ok(vec![
                    SeparableTerm {
                        space: Box::new(exact.space),
                        time: Box::new(f64::cos),
                    },
                    SeparableTerm {
                        space: Box::new(move |x| -(exact.laplacian)(x)),
                        time: Box::new(move |t| a(c * t.sin()) * t.sin()),
                    },
                ])
            }
        }
    }

    fn manufactured(&self) -> Result<(SeparableSolution, f64)> {
        match (self.exact, self.nonlocal_coefficient) {
            (Some(e), Some(c)) => Ok((e, c)),
            _ => Err(Error::Misuse(format!(
                "problem `{}` has no manufactured solution",
                self.name
            ))),
        }
    }
}

/// `f = du/dt - a(l_exact(t)) Laplace(u)` at `(x, t)`.
pub fn eval_forcing(spec: &ProblemSpec, x: &[f64; 3], t: f64) -> Result<f64> {
    let (e, c) = spec.manufactured()?;
    Ok(e.time_derivative(x, t) - spec.coefficient(c * t.sin()) * e.laplacian_at(x, t))
}

pub fn builtin_problem(name: &str) -> Result<ProblemSpec> {
    match name {
        "annulus2d" => ProblemSpec::new("annulus2d", DomainKind::QuarterAnnulus, Arc::new(annulus_a), (1.0, 2.0), 0.0)
            .with_exact(SeparableSolution {
                space: annulus_q,
                gradient: annulus_grad,
                laplacian: annulus_lap,
            }),
        "thickring3d" => ProblemSpec::new("thickring3d", DomainKind::ThickRing, Arc::new(sin_a), (2.0, 4.0), 0.0)
            .with_exact(SeparableSolution {
                space: ring_q,
                gradient: ring_grad,
                laplacian: ring_lap,
            }),
        "igloo_f1" => Ok(ProblemSpec::new(
            "igloo_f1",
            DomainKind::IglooSubstitute,
            Arc::new(sin_a),
            (2.0, 4.0),
            1.0,
        )),
        other => Err(Error::UnknownName {
            kind: "problem",
            name: other.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn annulus_nonlocal_coefficient() {
        let p = builtin_problem("annulus2d").unwrap();
        assert_abs_diff_eq!(p.nonlocal_coefficient.unwrap(), -45.0 / 16.0, epsilon = 1e-10);
    }

    #[test]
    fn ring_nonlocal_coefficient_closed_form() {
        let p = builtin_problem("thickring3d").unwrap();
        // -(2/pi) * (1/3) * int_1^2 (r^8 - 5 r^6 + 4 r^4) dr
        let radial = 511.0 / 9.0 - 635.0 / 7.0 + 124.0 / 5.0;
        let c = -(2.0 / PI) * radial / 3.0;
        assert_abs_diff_eq!(p.nonlocal_coefficient.unwrap(), c, epsilon = 1e-10);
    }

    #[test]
    fn forcing_at_initial_time() {
        let p = builtin_problem("annulus2d").unwrap();
        let x = [1.2, 0.7, 0.0];
        let s: f64 = 1.2 * 1.2 + 0.7 * 0.7;
        let expected = (s - 1.0) * (s - 4.0) * 1.2 * 0.7;
        assert_abs_diff_eq!(eval_forcing(&p, &x, 0.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn igloo_has_no_manufactured_forcing() {
        let p = builtin_problem("igloo_f1").unwrap();
        assert!(matches!(eval_forcing(&p, &[1.0, 0.0, 0.0], 0.5), Err(Error::Misuse(_))));
        assert_eq!(p.forcing_terms().unwrap().len(), 1);
        assert!(matches!(builtin_problem("disc"), Err(Error::UnknownName { .. })));
    }
}
