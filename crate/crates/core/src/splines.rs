//! Univariate B-spline bases on open knot vectors.
//!
//! Values follow the Cox-de Boor recursion with the `0/0 = 0` convention;
//! first derivatives use the degree `q - 1` difference formula. Spans are
//! half-open except the last one, which is closed at `1` so that the last
//! basis function equals one at the right endpoint.

use crate::error::{Error, Result};

/// Default quasi-uniformity ratio used when validating user-supplied knots.
pub const DEFAULT_ALPHA: f64 = 0.5;

const KNOT_TOL: f64 = 1e-14;

/// An open knot vector on `[0, 1]` with simple interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
    mesh_size: f64,
}

impl KnotVector {
    /// Validates `knots` as an open, maximum-regularity, quasi-uniform knot
    /// vector of the given degree, with [`DEFAULT_ALPHA`].
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        Self::with_alpha(knots, degree, DEFAULT_ALPHA)
    }

    pub fn with_alpha(knots: Vec<f64>, degree: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidKnots(format!(
                "quasi-uniformity ratio {alpha} not in (0, 1)"
            )));
        }
        let q = degree;
        if knots.len() < 2 * (q + 1) {
            return Err(Error::InvalidKnots(format!(
                "{} knots cannot form an open vector of degree {q}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let m = knots.len();
        if knots[..=q].iter().any(|&k| k != 0.0) || knots[m - q - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::InvalidKnots(format!(
                "first and last {} knots must equal 0 and 1",
                q + 1
            )));
        }
        let interior = &knots[q + 1..m - q - 1];
        if interior.iter().any(|&k| k <= 0.0 || k >= 1.0) {
            return Err(Error::InvalidKnots("interior knots must lie in (0, 1)".into()));
        }
        if interior.windows(2).any(|w| w[1] - w[0] <= KNOT_TOL) {
            return Err(Error::InvalidKnots(
                "interior knots must be simple (maximum regularity)".into(),
            ));
        }
        let spans: Vec<f64> = knots
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&l| l > 0.0)
            .collect();
        let mesh_size = spans.iter().cloned().fold(0.0, f64::max);
        if let Some(&short) = spans.iter().find(|&&l| l < alpha * mesh_size - KNOT_TOL) {
            return Err(Error::InvalidKnots(format!(
                "span of length {short} violates quasi-uniformity (alpha = {alpha}, h = {mesh_size})"
            )));
        }
        Ok(Self {
            knots,
            degree,
            mesh_size,
        })
    }

    /// Open knot vector of degree `q` with `elements` uniform spans.
    pub fn open_uniform(q: usize, elements: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidArgument("spline degree must be at least 1".into()));
        }
        if elements == 0 {
            return Err(Error::InvalidArgument("at least one element is required".into()));
        }
        let mut knots = vec![0.0; q + 1];
        knots.extend((1..elements).map(|i| i as f64 / elements as f64));
        knots.extend(std::iter::repeat_n(1.0, q + 1));
        Ok(Self {
            knots,
            degree: q,
            mesh_size: 1.0 / elements as f64,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, `#knots - q - 1`.
    pub fn n(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Largest span length.
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    /// Nonempty spans as `(knot index, left, right)`; the knot index is the
    /// span index used by the basis evaluation.
    pub fn spans(&self) -> Vec<(usize, f64, f64)> {
        self.knots
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(i, w)| (i, w[0], w[1]))
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        self.spans().len()
    }

    /// Index `mu` with `knots[mu] <= z < knots[mu + 1]`; `z = 1` maps to the
    /// last nonempty span.
    pub fn find_span(&self, z: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::OutOfDomain {
                value: z,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let n = self.n();
        if z >= self.knots[n] {
            return Ok(n - 1);
        }
        // knots[q..=n] bracket every nonempty span
        let (mut lo, mut hi) = (self.degree, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if z < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// The `degree + 1` basis values of degree `p <= q` that are nonzero on
    /// span `span`, for functions `span - p ..= span`.
    fn values_at(&self, span: usize, z: f64, p: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { out[r] / denom };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Values and first derivatives at `z` of the `q + 1` functions that may
    /// be nonzero there. Returns the (unrestricted) index of the first one.
    pub fn eval(&self, z: f64, values: &mut [f64], derivs: &mut [f64]) -> Result<usize> {
        let span = self.find_span(z)?;
        self.eval_on_span(span, z, values, derivs);
        Ok(span - self.degree)
    }

    pub(crate) fn eval_on_span(&self, span: usize, z: f64, values: &mut [f64], derivs: &mut [f64]) {
        let q = self.degree;
        assert!(q < 16, "degree {q} unsupported");
        self.values_at(span, z, q, values);
        if q == 0 {
            derivs[0] = 0.0;
            return;
        }
        let mut lower = [0.0; 16];
        self.values_at(span, z, q - 1, &mut lower);
        let t = &self.knots;
        let qf = q as f64;
        for a in 0..=q {
            let i = span - q + a;
            let mut d = 0.0;
            if a >= 1 {
                let den = t[i + q] - t[i];
                if den > 0.0 {
                    d += lower[a - 1] / den;
                }
            }
            if a < q {
                let den = t[i + q + 1] - t[i + 1];
                if den > 0.0 {
                    d -= lower[a] / den;
                }
            }
            derivs[a] = qf * d;
        }
    }
}

/// Which end conditions are imposed on the univariate space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// The full spline space.
    None,
    /// Zero at both ends (spatial directions with homogeneous Dirichlet data).
    ZeroBothEnds,
    /// Zero at the start (time direction with zero initial data).
    ZeroAtStart,
}

/// Values and first derivatives of the possibly-nonzero functions at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    /// Unrestricted index of the first returned function.
    pub first: usize,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

/// A univariate spline basis with optional end restrictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1D {
    knots: KnotVector,
    restriction: Restriction,
}

impl Basis1D {
    pub fn new(knots: KnotVector, restriction: Restriction) -> Result<Self> {
        let n = knots.n();
        let removed = match restriction {
            Restriction::None => 0,
            Restriction::ZeroBothEnds => 2,
            Restriction::ZeroAtStart => 1,
        };
        if n <= removed {
            return Err(Error::InvalidArgument(format!(
                "restricted space of {n} functions would be empty"
            )));
        }
        Ok(Self { knots, restriction })
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    /// Number of unrestricted functions.
    pub fn n(&self) -> usize {
        self.knots.n()
    }

    /// Dimension of the restricted space.
    pub fn active_count(&self) -> usize {
        match self.restriction {
            Restriction::None => self.n(),
            Restriction::ZeroBothEnds => self.n() - 2,
            Restriction::ZeroAtStart => self.n() - 1,
        }
    }

    /// Maps an unrestricted function index to its index in the restricted
    /// space, or `None` if the function was removed.
    #[inline]
    pub fn active_index(&self, j: usize) -> Option<usize> {
        match self.restriction {
            Restriction::None => Some(j),
            Restriction::ZeroBothEnds => (j >= 1 && j + 1 < self.n()).then(|| j - 1),
            Restriction::ZeroAtStart => (j >= 1).then(|| j - 1),
        }
    }

    pub fn eval(&self, z: f64) -> Result<BasisEval> {
        let p = self.degree() + 1;
        let mut values = vec![0.0; p];
        let mut derivs = vec![0.0; p];
        let first = self.knots.eval(z, &mut values, &mut derivs)?;
        Ok(BasisEval {
            first,
            values,
            derivs,
        })
    }

    /// Values of all `n` unrestricted functions at `1`.
    pub fn right_endpoint_trace(&self) -> Vec<f64> {
        let n = self.n();
        let mut trace = vec![0.0; n];
        let e = self.eval(1.0).expect("1 lies in the parametric interval");
        for (a, v) in e.values.iter().enumerate() {
            trace[e.first + a] = *v;
        }
        trace
    }

    /// Tabulates the basis at the points of a quadrature rule.
    pub fn tabulate(&self, rule: &crate::quadrature::QuadratureRule1D) -> BasisTable {
        let p = self.degree() + 1;
        let npts = rule.points.len();
        let mut first = Vec::with_capacity(npts);
        let mut values = vec![0.0; npts * p];
        let mut derivs = vec![0.0; npts * p];
        for (k, (&z, &span)) in rule.points.iter().zip(&rule.span_of_point).enumerate() {
            let range = k * p..(k + 1) * p;
            self.knots
                .eval_on_span(span, z, &mut values[range.clone()], &mut derivs[range]);
            first.push(span - self.degree());
        }
        BasisTable {
            width: p,
            first,
            values,
            derivs,
        }
    }
}

/// Basis values and derivatives tabulated at quadrature points.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub width: usize,
    pub first: Vec<usize>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl BasisTable {
    #[inline]
    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    #[inline]
    pub fn derivs(&self, k: usize) -> &[f64] {
        &self.derivs[k * self.width..(k + 1) * self.width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn open_uniform_knots() {
        let kv = KnotVector::open_uniform(1, 2).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(kv.n(), 3);
        let kv = KnotVector::open_uniform(2, 2).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(kv.n(), 4);
        let kv = KnotVector::open_uniform(3, 1).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(kv.n(), 4);
        assert_eq!(kv.mesh_size(), 1.0);
    }

    #[test]
    fn open_uniform_rejects_degenerate_input() {
        assert!(KnotVector::open_uniform(0, 4).is_err());
        assert!(KnotVector::open_uniform(2, 0).is_err());
    }

    #[test]
    fn validation() {
        assert!(KnotVector::new(vec![0.0, 0.0, 0.4, 1.0, 1.0], 1).is_ok());
        // not open
        assert!(KnotVector::new(vec![0.0, 0.2, 0.4, 1.0, 1.0], 1).is_err());
        // repeated interior knot
        assert!(KnotVector::new(vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0], 1).is_err());
        // span 0.1 < 0.5 * 0.9
        assert!(KnotVector::new(vec![0.0, 0.0, 0.1, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::with_alpha(vec![0.0, 0.0, 0.1, 1.0, 1.0], 1, 0.1).is_ok());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.6, 0.5, 1.0, 1.0], 1).is_err());
    }

    #[test]
    fn cox_de_boor_hand_values() {
        let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0], 2).unwrap();
        let b = Basis1D::new(kv, Restriction::None).unwrap();
        let e = b.eval(0.25).unwrap();
        assert_eq!(e.first, 0);
        assert_abs_diff_eq!(e.values[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(e.values[1], 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(e.values[2], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn degree_zero_is_span_indicator() {
        let kv = KnotVector::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], 0).unwrap();
        let b = Basis1D::new(kv, Restriction::None).unwrap();
        let e = b.eval(0.6).unwrap();
        assert_eq!(e.first, 2);
        assert_eq!(e.values, vec![1.0]);
        assert_eq!(e.derivs, vec![0.0]);
        // left-closed span
        assert_eq!(b.eval(0.5).unwrap().first, 2);
    }

    #[test]
    fn out_of_range_point() {
        let b = Basis1D::new(KnotVector::open_uniform(2, 3).unwrap(), Restriction::None).unwrap();
        assert!(matches!(b.eval(1.5), Err(Error::OutOfDomain { .. })));
        assert!(b.eval(-1e-3).is_err());
    }

    #[test]
    fn right_trace_is_last_unit_vector() {
        let b = Basis1D::new(KnotVector::open_uniform(2, 2).unwrap(), Restriction::None).unwrap();
        assert_eq!(b.right_endpoint_trace(), vec![0.0, 0.0, 0.0, 1.0]);
        let b = Basis1D::new(KnotVector::open_uniform(1, 2).unwrap(), Restriction::None).unwrap();
        assert_eq!(b.right_endpoint_trace(), vec![0.0, 0.0, 1.0]);
        for q in 1..=5 {
            for el in 1..=7 {
                let b = Basis1D::new(KnotVector::open_uniform(q, el).unwrap(), Restriction::None)
                    .unwrap();
                let tr = b.right_endpoint_trace();
                assert_eq!(tr[tr.len() - 1], 1.0);
                assert!(tr[..tr.len() - 1].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn restricted_dimensions() {
        let kv = KnotVector::open_uniform(2, 4).unwrap();
        let s = Basis1D::new(kv.clone(), Restriction::ZeroBothEnds).unwrap();
        let t = Basis1D::new(kv, Restriction::ZeroAtStart).unwrap();
        assert_eq!(s.active_count(), 6 - 2);
        assert_eq!(t.active_count(), 6 - 1);
        assert_eq!(s.active_index(0), None);
        assert_eq!(s.active_index(5), None);
        assert_eq!(s.active_index(1), Some(0));
        assert_eq!(t.active_index(5), Some(4));
        // a single linear element has no interior function
        let kv = KnotVector::open_uniform(1, 1).unwrap();
        assert!(Basis1D::new(kv, Restriction::ZeroBothEnds).is_err());
    }
}
