use std::sync::Arc;

use nalgebra::DVector;

use spacetime_iga::assembly::{assemble_time, time_points, Discretization};
use spacetime_iga::geometry::{DomainKind, Parametrization};
use spacetime_iga::nonlinear::{nonlinear_residual, picard_solve, PicardConfig, PicardSystem};
use spacetime_iga::problems::{builtin_problem, ProblemSpec};
use spacetime_iga::splines::Basis1D;
use spacetime_iga::Error;

fn disc_for(p: &ProblemSpec, q: usize, elements: usize) -> Discretization {
    Discretization::uniform(p.geometry().unwrap(), q, elements, None).unwrap()
}

fn constant_problem(domain: DomainKind, a: f64, f: f64) -> ProblemSpec {
    ProblemSpec::new("constant", domain, Arc::new(move |_| a), (0.5 * a, 2.0 * a), f)
}

/// `l(u)(t)` by direct evaluation of the temporal basis.
fn l_at(u: &[f64], moments: &[f64], basis: &Basis1D, tau: f64) -> f64 {
    let e = basis.eval(tau).unwrap();
    let n_s = moments.len();
    e.values
        .iter()
        .enumerate()
        .filter_map(|(a, v)| basis.active_index(e.first + a).map(|j| (j, v)))
        .map(|(j, v)| v * u[j * n_s..(j + 1) * n_s].iter().zip(moments).map(|(x, m)| x * m).sum::<f64>())
        .sum()
}

/// Picard iteration with dense LU solves on the explicit Kronecker matrix.
fn dense_picard(p: &ProblemSpec, disc: &Discretization, sys: &PicardSystem, eps: f64) -> (Vec<f64>, usize) {
    let ms = sys.mass.to_dense();
    let ks = sys.stiffness.to_dense();
    let f = DVector::from_column_slice(&sys.rhs);
    let mut u = vec![0.0; disc.n_dof()];
    for it in 1..=50 {
        let u_prev = u.clone();
        let tm = assemble_time(
            &disc.time,
            |t| p.coefficient(l_at(&u_prev, &sys.moments, &disc.time, t / disc.final_time())),
            disc.quad_points,
            disc.final_time(),
        )
        .unwrap();
        let a = tm.w.kronecker(&ms) + tm.m.kronecker(&ks);
        let next = a.lu().solve(&f).unwrap();
        let inc = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next.iter().copied().collect();
        if inc <= eps {
            return (u, it);
        }
    }
    panic!("dense Picard did not converge");
}

#[test]
fn constant_coefficient_takes_two_iterations() {
    for domain in [DomainKind::UnitSquare, DomainKind::QuarterAnnulus] {
        let p = constant_problem(domain, 2.0, 1.0);
        let rep = picard_solve(&p, &disc_for(&p, 2, 4), &PicardConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.picard_iterations, 2, "{domain}: {:?}", rep.increments);
    }
}

#[test]
fn zero_forcing_stops_after_one_iteration() {
    let p = constant_problem(DomainKind::UnitSquare, 1.0, 0.0);
    let rep = picard_solve(&p, &disc_for(&p, 1, 3), &PicardConfig::default()).unwrap();
    assert_eq!(rep.picard_iterations, 1);
    assert_eq!(rep.gmres_iterations, vec![0]);
    assert!(rep.solution.iter().all(|&v| v == 0.0));
}

#[test]
fn matches_dense_fixed_point_iteration() {
    for (name, q, el) in [("annulus2d", 2, 3), ("annulus2d", 1, 4), ("thickring3d", 1, 2)] {
        let p = builtin_problem(name).unwrap();
        let disc = disc_for(&p, q, el);
        let sys = PicardSystem::build(&p, &disc).unwrap();
        let cfg = PicardConfig::default();
        let rep = picard_solve(&p, &disc, &cfg).unwrap();
        let (u, its) = dense_picard(&p, &disc, &sys, cfg.epsilon);
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = rep.solution.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9 * scale.max(1.0), "{name} q={q}: {err:e}");
        assert!(rep.picard_iterations.abs_diff(its) <= 1, "{name}: {} vs {its}", rep.picard_iterations);
    }
}

#[test]
fn converged_iterate_is_a_fixed_point() {
    let p = builtin_problem("annulus2d").unwrap();
    let disc = disc_for(&p, 2, 4);
    let sys = PicardSystem::build(&p, &disc).unwrap();
    let rep = picard_solve(&p, &disc, &PicardConfig::default()).unwrap();
    let res = nonlinear_residual(&sys, &p, &disc, &rep.solution).unwrap();
    assert!(res <= 1e-9, "{res:e}");
    assert!(rep.increments.windows(2).skip(1).all(|w| w[1] < w[0]));
    assert!(nonlinear_residual(&sys, &p, &disc, &vec![0.0; disc.n_dof()]).unwrap() == 1.0);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let p = builtin_problem("thickring3d").unwrap();
    let disc = disc_for(&p, 2, 2);
    let cfg = PicardConfig::default();
    let a = picard_solve(&p, &disc, &cfg).unwrap();
    let b = picard_solve(&p, &disc, &cfg).unwrap();
    assert_eq!(a, b);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.solution), bits(&b.solution));
}

#[test]
fn weights_follow_the_nonlocal_term() {
    let p = builtin_problem("annulus2d").unwrap();
    let disc = disc_for(&p, 2, 3);
    let sys = PicardSystem::build(&p, &disc).unwrap();
    let u: Vec<f64> = (0..disc.n_dof()).map(|i| ((i % 7) as f64 - 3.0) * 0.1).collect();
    let w = sys.weights(&p, &disc, &u).unwrap();
    let (ts, _) = time_points(&disc.time, disc.quad_points, disc.final_time()).unwrap();
    assert_eq!(w.len(), ts.len());
    for (wk, t) in w.iter().zip(ts) {
        let expected = p.coefficient(l_at(&u, &sys.moments, &disc.time, t));
        assert!((wk - expected).abs() <= 1e-13);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let bad_bounds = ProblemSpec::new("bad", DomainKind::UnitSquare, Arc::new(|_| 10.0), (1.0, 2.0), 1.0);
    let disc = disc_for(&bad_bounds, 1, 2);
    assert!(matches!(
        picard_solve(&bad_bounds, &disc, &PicardConfig::default()),
        Err(Error::Hypothesis(_))
    ));

    let annulus = builtin_problem("annulus2d").unwrap();
    let square = Discretization::uniform(Parametrization::new(DomainKind::UnitSquare, 1.0).unwrap(), 1, 2, None).unwrap();
    assert!(PicardSystem::build(&annulus, &square).is_err());

    let cfg = PicardConfig {
        linear_tol: 1e-6,
        epsilon: 1e-8,
        ..PicardConfig::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = PicardConfig {
        epsilon: -1.0,
        ..PicardConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn iteration_cap_is_reported() {
    let p = builtin_problem("annulus2d").unwrap();
    let disc = disc_for(&p, 1, 2);
    let cfg = PicardConfig {
        max_iterations: 2,
        ..PicardConfig::default()
    };
    let rep = picard_solve(&p, &disc, &cfg).unwrap();
    assert!(!rep.converged);
    assert_eq!(rep.picard_iterations, 2);
}
