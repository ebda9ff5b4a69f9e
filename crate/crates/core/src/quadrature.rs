//! Gauss-Legendre rules mapped onto knot spans.

use crate::error::{Error, Result};
use crate::splines::KnotVector;

pub const MAX_POINTS: usize = 12;

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(npts: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_POINTS).contains(&npts) {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Legendre rule with {npts} points (supported: 1..={MAX_POINTS})"
        )));
    }
    let n = npts;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A composite Gauss rule with `npts` points on every nonempty knot span.
#[derive(Debug, Clone)]
pub struct QuadratureRule1D {
    pub npts: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Knot span index of each point.
    pub span_of_point: Vec<usize>,
    /// `(left, right)` of each nonempty span, in order.
    pub elements: Vec<(f64, f64)>,
}

impl QuadratureRule1D {
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Point indices belonging to element `e`.
    pub fn element_points(&self, e: usize) -> std::ops::Range<usize> {
        e * self.npts..(e + 1) * self.npts
    }
}

pub fn element_rule(kv: &KnotVector, npts: usize) -> Result<QuadratureRule1D> {
    let (nodes, w) = gauss_legendre(npts)?;
    let spans = kv.spans();
    let mut points = Vec::with_capacity(spans.len() * npts);
    let mut weights = Vec::with_capacity(spans.len() * npts);
    let mut span_of_point = Vec::with_capacity(spans.len() * npts);
    let mut elements = Vec::with_capacity(spans.len());
    for &(mu, a, b) in &spans {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wx) in nodes.iter().zip(&w) {
            points.push(mid + half * x);
            weights.push(half * wx);
            span_of_point.push(mu);
        }
        elements.push((a, b));
    }
    Ok(QuadratureRule1D {
        npts,
        points,
        weights,
        span_of_point,
        elements,
    })
}
