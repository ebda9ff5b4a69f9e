use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use spacetime_iga::assembly::{assemble_spatial, assemble_time, Discretization};
use spacetime_iga::geometry::{DomainKind, Parametrization};
use spacetime_iga::nonlinear::{picard_solve, PicardConfig};
use spacetime_iga::postproc::{error_norms, error_norms_with, l2_projection};
use spacetime_iga::problems::{builtin_problem, domain_integral, SeparableSolution};

fn zero(_: &[f64; 3]) -> f64 {
    0.0
}

fn zero_grad(_: &[f64; 3]) -> [f64; 3] {
    [0.0; 3]
}

const ZERO: SeparableSolution = SeparableSolution {
    space: zero,
    gradient: zero_grad,
    laplacian: zero,
};

fn bubble(x: &[f64; 3]) -> f64 {
    x[0] * (1.0 - x[0])
}

fn bubble_grad(x: &[f64; 3]) -> [f64; 3] {
    [1.0 - 2.0 * x[0], 0.0, 0.0]
}

fn bubble_lap(_: &[f64; 3]) -> f64 {
    -2.0
}

const BUBBLE: SeparableSolution = SeparableSolution {
    space: bubble,
    gradient: bubble_grad,
    laplacian: bubble_lap,
};

fn disc(kind: DomainKind, q: usize, elements: usize) -> Discretization {
    Discretization::uniform(Parametrization::new(kind, 1.0).unwrap(), q, elements, None).unwrap()
}

/// `(sqrt(u^T (M_t x M_s) u), sqrt(u^T (M_t x K_s) u))` from the assembled matrices.
fn matrix_norms(u: &[f64], d: &Discretization) -> (f64, f64) {
    let sp = assemble_spatial(&d.space, &d.geometry, d.quad_points + 1).unwrap();
    let tm = assemble_time(&d.time, |_| 1.0, d.quad_points + 1, d.final_time()).unwrap();
    let n_s = d.n_space();
    let quad = |a: &spacetime_iga::sparse::SparseMatrix| {
        let mut s = 0.0;
        let mut tmp = vec![0.0; n_s];
        for j in 0..d.n_time() {
            a.apply(&u[j * n_s..(j + 1) * n_s], &mut tmp);
            for k in 0..d.n_time() {
                let m = tm.m[(k, j)];
                if m != 0.0 {
                    s += m * u[k * n_s..(k + 1) * n_s].iter().zip(&tmp).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
        s.sqrt()
    };
    (quad(&sp.mass), quad(&sp.stiffness))
}

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed | 1;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2001) as f64 / 1000.0 - 1.0
        })
        .collect()
}

#[test]
fn discrete_functions_have_matrix_norms() {
    for (kind, q) in [(DomainKind::UnitInterval, 3), (DomainKind::QuarterAnnulus, 2), (DomainKind::ThickRing, 1)] {
        let d = disc(kind, q, 3);
        let u = pseudo_random(d.n_dof(), 11);
        let (e0, e1) = error_norms(&u, &ZERO, &d).unwrap();
        let (m0, m1) = matrix_norms(&u, &d);
        assert_abs_diff_eq!(e0, m0, epsilon = 1e-12 * m0);
        assert_abs_diff_eq!(e1, m1, epsilon = 1e-12 * m1);
    }
}

#[test]
fn zero_discrete_solution_measures_the_exact_one() {
    for name in ["annulus2d", "thickring3d"] {
        let p = builtin_problem(name).unwrap();
        let e = p.exact.unwrap();
        let d = Discretization::uniform(p.geometry().unwrap(), 2, 4, None).unwrap();
        let (e0, e1) = error_norms_with(&vec![0.0; d.n_dof()], &e, &d, 10).unwrap();
        let geo = p.geometry().unwrap();
        let time = 0.5 - (2.0f64).sin() / 4.0;
        let q2 = domain_integral(&geo, |x| (e.space)(x).powi(2), 6, 10).unwrap();
        let g2 = domain_integral(&geo, |x| (e.gradient)(x).iter().map(|g| g * g).sum(), 6, 10).unwrap();
        assert_abs_diff_eq!(e0, (q2 * time).sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(e1, (g2 * time).sqrt(), epsilon = 1e-10);
    }
}

#[test]
fn projection_error_drops_with_degree() {
    let d2 = disc(DomainKind::UnitInterval, 2, 4);
    let d3 = disc(DomainKind::UnitInterval, 3, 4);
    let (a2, _) = error_norms(&l2_projection(&BUBBLE, &d2).unwrap(), &BUBBLE, &d2).unwrap();
    let (a3, _) = error_norms(&l2_projection(&BUBBLE, &d3).unwrap(), &BUBBLE, &d3).unwrap();
    assert!(a3 < a2 / 4.0, "{a2:e} {a3:e}");
    let d1 = disc(DomainKind::UnitInterval, 1, 4);
    let (a1, _) = error_norms(&l2_projection(&BUBBLE, &d1).unwrap(), &BUBBLE, &d1).unwrap();
    assert!(a2 < a1 / 4.0);
}

#[test]
fn projection_is_a_best_approximation() {
    let p = builtin_problem("annulus2d").unwrap();
    let e = p.exact.unwrap();
    let d = Discretization::uniform(p.geometry().unwrap(), 2, 4, None).unwrap();
    let proj = l2_projection(&e, &d).unwrap();
    let (best, _) = error_norms(&proj, &e, &d).unwrap();
    for seed in 1..6 {
        let pert: Vec<f64> = proj
            .iter()
            .zip(pseudo_random(d.n_dof(), seed))
            .map(|(a, r)| a + 1e-3 * r)
            .collect();
        let (err, _) = error_norms(&pert, &e, &d).unwrap();
        assert!(err >= best * (1.0 - 1e-12));
    }
}

#[test]
fn galerkin_error_is_close_to_projection_error() {
    for (name, q, el) in [("annulus2d", 1, 8), ("annulus2d", 2, 4), ("thickring3d", 1, 4)] {
        let p = builtin_problem(name).unwrap();
        let e = p.exact.unwrap();
        let d = Discretization::uniform(p.geometry().unwrap(), q, el, None).unwrap();
        let rep = picard_solve(&p, &d, &PicardConfig::default()).unwrap();
        let (g0, _) = error_norms(&rep.solution, &e, &d).unwrap();
        let (p0, _) = error_norms(&l2_projection(&e, &d).unwrap(), &e, &d).unwrap();
        assert!(g0 <= 10.0 * p0, "{name} q={q}: {g0:e} vs {p0:e}");
    }
}

#[test]
fn wrong_length_is_rejected() {
    let d = disc(DomainKind::UnitSquare, 1, 2);
    assert!(error_norms(&[0.0; 3], &ZERO, &d).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn triangle_inequality(seed in any::<u64>()) {
        let p = builtin_problem("annulus2d").unwrap();
        let e = p.exact.unwrap();
        let d = Discretization::uniform(p.geometry().unwrap(), 1, 3, None).unwrap();
        let u = pseudo_random(d.n_dof(), seed);
        let v = pseudo_random(d.n_dof(), seed.wrapping_add(1));
        let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let (eu0, eu1) = error_norms(&u, &e, &d).unwrap();
        let (ev0, ev1) = error_norms(&v, &e, &d).unwrap();
        let (dd0, dd1) = error_norms(&diff, &ZERO, &d).unwrap();
        prop_assert!(eu0 <= ev0 + dd0 + 1e-12);
        prop_assert!(eu1 <= ev1 + dd1 + 1e-12);
        prop_assert!(dd0 <= eu0 + ev0 + 1e-12);
    }
}
