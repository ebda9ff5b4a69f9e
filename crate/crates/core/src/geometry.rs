//! Single-patch space-time parametrizations `(zeta, tau) -> (F(zeta), T tau)`.
//!
//! The spatial maps are analytic closed forms evaluated pointwise. Only point
//! values and Jacobians at quadrature points enter the discrete operators.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Fraction of the quarter meridian kept by the igloo substitute; the shell
/// stops short of the pole, where the spherical map degenerates.
pub const IGLOO_ELEVATION_FRACTION: f64 = 0.9;

/// Built-in spatial domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    UnitInterval,
    UnitSquare,
    UnitCube,
    /// Quarter of the annulus `1 <= r <= 2` in the first quadrant.
    QuarterAnnulus,
    /// The quarter annulus extruded to height one.
    ThickRing,
    /// Quarter of a spherical shell `1 <= r <= 2` cut below the pole.
    IglooSubstitute,
}

impl DomainKind {
    pub const ALL: [DomainKind; 6] = [
        DomainKind::UnitInterval,
        DomainKind::UnitSquare,
        DomainKind::UnitCube,
        DomainKind::QuarterAnnulus,
        DomainKind::ThickRing,
        DomainKind::IglooSubstitute,
    ];

    pub fn dim(self) -> usize {
        match self {
            DomainKind::UnitInterval => 1,
            DomainKind::UnitSquare | DomainKind::QuarterAnnulus => 2,
            DomainKind::UnitCube | DomainKind::ThickRing | DomainKind::IglooSubstitute => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::UnitInterval => "unit_interval",
            DomainKind::UnitSquare => "unit_square",
            DomainKind::UnitCube => "unit_cube",
            DomainKind::QuarterAnnulus => "quarter_annulus",
            DomainKind::ThickRing => "thick_ring",
            DomainKind::IglooSubstitute => "igloo_substitute",
        }
    }

    /// True if the map is the identity on the unit box.
    pub fn is_identity(self) -> bool {
        matches!(
            self,
            DomainKind::UnitInterval | DomainKind::UnitSquare | DomainKind::UnitCube
        )
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "domain",
                name: s.to_string(),
            })
    }
}

/// Point, Jacobian and inverse-transpose Jacobian of the spatial map.
/// Only the leading `dim x dim` block of the matrices is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryPoint {
    pub x: [f64; 3],
    pub jac: [[f64; 3]; 3],
    pub det: f64,
    pub jac_inv_t: [[f64; 3]; 3],
}

/// The space-time parametrization of `Omega x (0, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parametrization {
    kind: DomainKind,
    final_time: f64,
}

impl Parametrization {
    pub fn new(kind: DomainKind, final_time: f64) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        Ok(Self { kind, final_time })
    }

    /// Looks up a built-in domain by name with final time `T = 1`.
    pub fn builtin(name: &str) -> Result<Self> {
        Self::new(name.parse()?, 1.0)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// `F(zeta)`.
    pub fn map(&self, z: &[f64]) -> [f64; 3] {
        match self.kind {
            DomainKind::UnitInterval => [z[0], 0.0, 0.0],
            DomainKind::UnitSquare => [z[0], z[1], 0.0],
            DomainKind::UnitCube => [z[0], z[1], z[2]],
            DomainKind::QuarterAnnulus => {
                let (r, th) = (1.0 + z[0], FRAC_PI_2 * z[1]);
                [r * th.cos(), r * th.sin(), 0.0]
            }
            DomainKind::ThickRing => {
                let (r, th) = (1.0 + z[0], FRAC_PI_2 * z[1]);
                [r * th.cos(), r * th.sin(), z[2]]
            }
            DomainKind::IglooSubstitute => {
                let (r, th, ph) = igloo_angles(z);
                [
                    r * th.cos() * ph.cos(),
                    r * th.sin() * ph.cos(),
                    r * ph.sin(),
                ]
            }
        }
    }

    /// `dF/dzeta`, with `jac[i][j] = dF_i / dzeta_j`.
    pub fn jacobian(&self, z: &[f64]) -> [[f64; 3]; 3] {
        let mut j = [[0.0; 3]; 3];
        match self.kind {
            DomainKind::UnitInterval | DomainKind::UnitSquare | DomainKind::UnitCube => {
                for (i, row) in j.iter_mut().enumerate().take(self.dim()) {
                    row[i] = 1.0;
                }
            }
            DomainKind::QuarterAnnulus | DomainKind::ThickRing => {
                let (r, th) = (1.0 + z[0], FRAC_PI_2 * z[1]);
                let (s, c) = th.sin_cos();
                j[0][0] = c;
                j[1][0] = s;
                j[0][1] = -r * s * FRAC_PI_2;
                j[1][1] = r * c * FRAC_PI_2;
                if self.kind == DomainKind::ThickRing {
                    j[2][2] = 1.0;
                }
            }
            DomainKind::IglooSubstitute => {
                let (r, th, ph) = igloo_angles(z);
                let (st, ct) = th.sin_cos();
                let (sp, cp) = ph.sin_cos();
                let dth = FRAC_PI_2;
                let dph = FRAC_PI_2 * IGLOO_ELEVATION_FRACTION;
                j[0][0] = ct * cp;
                j[1][0] = st * cp;
                j[2][0] = sp;
                j[0][1] = -r * st * cp * dth;
                j[1][1] = r * ct * cp * dth;
                j[0][2] = -r * ct * sp * dph;
                j[1][2] = -r * st * sp * dph;
                j[2][2] = r * cp * dph;
            }
        }
        j
    }

    pub fn eval(&self, z: &[f64]) -> Result<GeometryPoint> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::SizeMismatch {
                expected: d,
                got: z.len(),
            });
        }
        if let Some(&bad) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfDomain {
                value: bad,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let x = self.map(z);
        let jac = self.jacobian(z);
        let (det, jac_inv_t) = inverse_transpose(&jac, d);
        let scale = (0..d)
            .flat_map(|i| (0..d).map(move |k| (i, k)))
            .map(|(i, k)| jac[i][k] * jac[i][k])
            .sum::<f64>()
            .sqrt();
        if det <= 1e-14 * scale.powi(d as i32) {
            return Err(Error::Geometry(format!(
                "det J = {det:e} at zeta = {z:?} on {}",
                self.kind
            )));
        }
        Ok(GeometryPoint {
            x,
            jac,
            det,
            jac_inv_t,
        })
    }
}

fn igloo_angles(z: &[f64]) -> (f64, f64, f64) {
    (
        1.0 + z[0],
        FRAC_PI_2 * z[1],
        FRAC_PI_2 * IGLOO_ELEVATION_FRACTION * z[2],
    )
}

/// Determinant and `(J^-1)^T` of the leading `d x d` block.
fn inverse_transpose(j: &[[f64; 3]; 3], d: usize) -> (f64, [[f64; 3]; 3]) {
    let mut out = [[0.0; 3]; 3];
    match d {
        1 => {
            let det = j[0][0];
            out[0][0] = 1.0 / det;
            (det, out)
        }
        2 => {
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            // (J^-1)^T = cof(J) / det
            out[0][0] = j[1][1] / det;
            out[0][1] = -j[1][0] / det;
            out[1][0] = -j[0][1] / det;
            out[1][1] = j[0][0] / det;
            (det, out)
        }
        _ => {
            let c00 = j[1][1] * j[2][2] - j[1][2] * j[2][1];
            let c01 = j[1][2] * j[2][0] - j[1][0] * j[2][2];
            let c02 = j[1][0] * j[2][1] - j[1][1] * j[2][0];
            let c10 = j[0][2] * j[2][1] - j[0][1] * j[2][2];
            let c11 = j[0][0] * j[2][2] - j[0][2] * j[2][0];
            let c12 = j[0][1] * j[2][0] - j[0][0] * j[2][1];
            let c20 = j[0][1] * j[1][2] - j[0][2] * j[1][1];
            let c21 = j[0][2] * j[1][0] - j[0][0] * j[1][2];
            let c22 = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let det = j[0][0] * c00 + j[0][1] * c01 + j[0][2] * c02;
            out = [
                [c00 / det, c01 / det, c02 / det],
                [c10 / det, c11 / det, c12 / det],
                [c20 / det, c21 / det, c22 / det],
            ];
            (det, out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn identity_square() {
        let g = Parametrization::builtin("unit_square").unwrap();
        let p = g.eval(&[0.3, 0.7]).unwrap();
        assert_eq!(&p.x[..2], &[0.3, 0.7]);
        assert_eq!(p.det, 1.0);
        assert_eq!(p.jac[0][0], 1.0);
        assert_eq!(p.jac[0][1], 0.0);
        assert_eq!(p.jac_inv_t[1][1], 1.0);
    }

    #[test]
    fn quarter_annulus_corners() {
        let g = Parametrization::builtin("quarter_annulus").unwrap();
        let p = g.eval(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p.x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.det, PI / 2.0, epsilon = 1e-14);
        let p = g.eval(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(p.x[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x[1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.det, PI, epsilon = 1e-14);
    }

    #[test]
    fn thick_ring_point() {
        let g = Parametrization::builtin("thick_ring").unwrap();
        let p = g.eval(&[0.5, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(p.x[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_cube_is_identity() {
        let g = Parametrization::builtin("unit_cube").unwrap();
        let p = g.eval(&[0.1, 0.2, 0.9]).unwrap();
        assert_eq!(p.x, [0.1, 0.2, 0.9]);
        assert_eq!(p.det, 1.0);
    }

    #[test]
    fn inverse_transpose_is_consistent() {
        for kind in DomainKind::ALL {
            let g = Parametrization::new(kind, 1.0).unwrap();
            let d = g.dim();
            let z: Vec<f64> = (0..d).map(|i| 0.2 + 0.25 * i as f64).collect();
            let p = g.eval(&z).unwrap();
            // J^T (J^-1)^T = I
            for a in 0..d {
                for b in 0..d {
                    let s: f64 = (0..d).map(|k| p.jac[k][a] * p.jac_inv_t[k][b]).sum();
                    assert_abs_diff_eq!(s, if a == b { 1.0 } else { 0.0 }, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Parametrization::builtin("torus"),
            Err(Error::UnknownName { .. })
        ));
        let g = Parametrization::builtin("quarter_annulus").unwrap();
        assert!(g.eval(&[1.2, 0.0]).is_err());
        assert!(g.eval(&[0.2]).is_err());
        assert!(Parametrization::new(DomainKind::UnitSquare, 0.0).is_err());
    }
}
