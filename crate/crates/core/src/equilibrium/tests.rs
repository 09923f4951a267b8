use super::*;
use crate::instances::{random_quadratic_game, scalar_game, SetShape};
use crate::model::{CostFamily, Params, QuadraticFamily};
use crate::polyhedra::Polyhedron;
use nalgebra::{DMatrix, DVector};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    }
}

#[test]
fn decoupled_game_reaches_unconstrained_minimizer() {
    // 𝒞_i = u_i² − 2u_i
    let spec = scalar_game(&[1.0, 1.0], 0.0, &[-2.0, -2.0], (0.0, -2.0), -10.0, 10.0).unwrap();
    let ne = solve_ne(&spec, &spec.zero_theta(), &SolverConfig::default(), &v(&[0.0, 0.0])).unwrap();
    assert!((&ne.point - v(&[1.0, 1.0])).amax() < 1e-9);
    assert!(ne.residual <= 1e-10);
    let team = solve_team_optimum(&spec, &SolverConfig::default(), &v(&[5.0, -5.0])).unwrap();
    assert!((&team.point - v(&[1.0, 1.0])).amax() < 1e-9);
}

#[test]
fn coupled_two_member_game() {
    // 𝒞_i = u_i² + 0.5 u_i u_j − 2u_i on [0, 10]²: 2u_i + 0.5u_j = 2.
    let spec = scalar_game(&[1.0, 1.0], 0.5, &[-2.0, -2.0], (0.25, -2.0), 0.0, 10.0).unwrap();
    let ne = solve_ne(&spec, &spec.zero_theta(), &tight(), &v(&[3.0, 0.0])).unwrap();
    assert!((&ne.point - v(&[0.8, 0.8])).amax() < 1e-10);
    assert!(spec.contains_profile(&ne.point, 1e-12));
}

#[test]
fn rate_bound_formula() {
    let mu = rate_bound(0.1, 1.0, 2.0).unwrap();
    assert!((mu - 0.84f64.sqrt()).abs() < 1e-15);
    assert!(tau_in_window(0.1, 1.0, 2.0));
    assert!(!tau_in_window(0.6, 1.0, 2.0));
    assert!(rate_bound(0.6, 1.0, 2.0).is_none());
}

#[test]
fn observed_error_ratios_respect_rate_bound() {
    // J_u F = diag(1, 2): κ2 = 1, ν2 = 2.
    let fam = QuadraticFamily::new(
        vec![vec![DMatrix::from_element(1, 1, 0.5)], vec![DMatrix::from_element(1, 1, 1.0)]],
        vec![vec![vec![], vec![DMatrix::zeros(1, 1)]], vec![vec![DMatrix::zeros(1, 1)], vec![]]],
        vec![DMatrix::from_element(1, 1, 1.0); 2],
    )
    .unwrap();
    let spec = ProblemSpec::new(
        CostFamily::Quadratic(fam),
        Params::new(&[1.0], &[0.0], &[-1.0]),
        vec![Params::new(&[1.0], &[0.0], &[-1.0]); 2],
        vec![Polyhedron::uniform_box(1, -10.0, 10.0); 2],
        Polyhedron::uniform_box(6, -50.0, 50.0),
    )
    .unwrap();
    let cfg = SolverConfig {
        tau: Some(0.1),
        tol: 1e-13,
        record_trace: true,
        ..SolverConfig::default()
    };
    let ne = solve_ne(&spec, &spec.zero_theta(), &cfg, &v(&[7.0, -9.0])).unwrap();
    let mu = rate_bound(0.1, 1.0, 2.0).unwrap();
    let errs: Vec<f64> = ne.iterates.iter().map(|u| (u - &ne.point).norm()).collect();
    for w in errs.windows(2).skip(1) {
        if w[0] > 1e-9 {
            assert!(w[1] / w[0] <= mu + 0.02, "ratio {}", w[1] / w[0]);
        }
    }
}

#[test]
fn team_optimum_with_equalities_matches_kkt_solve() {
    let spec = random_quadratic_game(3, 2, 3, SetShape::Hyperplane).unwrap();
    let (m, c) = match spec.team_field() {
        VectorField::Affine { m, c } => (m, c),
        _ => unreachable!(),
    };
    // [M Hᵀ; H 0] [u; μ] = [−c; 1]
    let nn = 6;
    let mut kkt = DMatrix::zeros(nn + 2, nn + 2);
    kkt.view_mut((0, 0), (nn, nn)).copy_from(&m);
    let mut rhs = DVector::zeros(nn + 2);
    rhs.rows_mut(0, nn).copy_from(&(-&c));
    for i in 0..2 {
        for k in 0..3 {
            kkt[(nn + i, i * 3 + k)] = 1.0;
            kkt[(i * 3 + k, nn + i)] = 1.0;
        }
        rhs[nn + i] = 1.0;
    }
    let oracle = kkt.lu().solve(&rhs).unwrap().rows(0, nn).into_owned();
    let team = solve_team_optimum(&spec, &tight(), &DVector::zeros(nn)).unwrap();
    assert!((&team.point - &oracle).amax() < 1e-9, "{} vs {}", team.point, oracle);
}

#[test]
fn identical_preferences_ne_is_team_fixed_point() {
    let base = random_quadratic_game(5, 3, 2, SetShape::Box(1.0)).unwrap();
    let t = base.team_params().clone();
    let aligned = Params {
        alpha: t.alpha.clone(),
        beta: &t.beta * 2.0,
        gamma: t.gamma.clone(),
    };
    let spec = base.with_member_params(vec![aligned; 3]).unwrap();
    let ne = solve_ne(&spec, &spec.zero_theta(), &tight(), &DVector::zeros(6)).unwrap();
    assert!(residual_map(&spec, &ne.point).unwrap().norm() <= 1e-10);
}

#[test]
fn residual_map_properties() {
    let spec = random_quadratic_game(9, 3, 2, SetShape::Box(0.7)).unwrap();
    let team = solve_team_optimum(&spec, &tight(), &DVector::zeros(6)).unwrap();
    assert!(residual_map(&spec, &team.point).unwrap().norm() <= 1e-11);

    let c = crate::model::estimate_constants(&spec, &spec.zero_theta()).unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let u = spec.sample_profile(&mut rng, 1.0).unwrap();
        let h = residual_map(&spec, &u).unwrap().norm();
        assert!((&u - &team.point).norm() <= (c.nu1 + 1.0) / c.kappa1 * h + 1e-9);
    }

    // interior point with small gradient: h(u) = G(u)
    let unconstrained = random_quadratic_game(9, 3, 2, SetShape::Box(1e3)).unwrap();
    let opt = solve_team_optimum(&unconstrained, &tight(), &DVector::zeros(6)).unwrap();
    let u = &opt.point + DVector::from_element(6, 1e-3);
    let g = crate::model::grad_team(&unconstrained, &u).unwrap();
    assert!((residual_map(&unconstrained, &u).unwrap() - g).amax() < 1e-12);
}

fn interior_jacobian_oracle(spec: &ProblemSpec, theta: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let m = spec.game_field(theta).unwrap().jacobian(u);
    -m.lu().solve(&crate::model::theta_jacobian(spec, u)).unwrap()
}

#[test]
fn interior_sensitivity_matches_implicit_function_solve() {
    let spec = random_quadratic_game(21, 2, 2, SetShape::Box(1e3)).unwrap();
    let theta = spec.zero_theta();
    let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(4)).unwrap();
    let s = ne_jacobian(&spec, &theta, &ne, &tight()).unwrap();
    assert!(s.converged && !s.used_conservative_fallback);
    let oracle = interior_jacobian_oracle(&spec, &theta, &ne.point);
    assert!(linalg::rel_err(&s.j, &oracle) < 1e-8);

    // direct (I − J_uζ)⁻¹ J_θζ
    let lin = FixedPointLinearization::at(&spec, &theta, &ne.point, ne.tau).unwrap();
    let direct = (DMatrix::identity(4, 4) - &lin.j_u_zeta)
        .lu()
        .solve(&lin.j_theta_zeta())
        .unwrap();
    assert!(linalg::rel_err(&s.j, &direct) < 1e-8);
    assert!(s.residual <= 1e-8);
    assert!(contraction_norm(&lin) < 1.0);
}

#[test]
fn gamma_only_sensitivity_is_affine_map() {
    // 𝒞_i = u_i² + (γ_i + Δγ_i)u_i: u◇ = −(γ_i + Δγ_i)/2 so ∂u◇_i/∂Δγ_i = −½.
    let spec = scalar_game(&[1.0, 1.0], 0.0, &[1.0, -3.0], (0.0, 0.0), -100.0, 100.0).unwrap();
    let mut theta = spec.zero_theta();
    theta[2] = 0.7;
    theta[5] = -1.1;
    let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(2)).unwrap();
    assert!((&ne.point - v(&[-(1.7) / 2.0, -(-4.1) / 2.0])).amax() < 1e-10);
    let s = ne_jacobian(&spec, &theta, &ne, &tight()).unwrap();
    assert!((s.j[(0, 2)] + 0.5).abs() < 1e-9);
    assert!((s.j[(1, 5)] + 0.5).abs() < 1e-9);
    assert!(s.j[(0, 5)].abs() < 1e-12 && s.j[(1, 2)].abs() < 1e-12);
}

fn fd_ne_jacobian(spec: &ProblemSpec, theta: &DVector<f64>, u0: &DVector<f64>, tau: f64) -> DMatrix<f64> {
    let cfg = SolverConfig {
        tau: Some(tau),
        tol: 1e-13,
        ..SolverConfig::default()
    };
    let h = 1e-5;
    let mut j = DMatrix::zeros(u0.len(), theta.len());
    for k in 0..theta.len() {
        let mut p = theta.clone();
        let mut m = theta.clone();
        p[k] += h;
        m[k] -= h;
        let up = solve_ne(spec, &p, &cfg, u0).unwrap().point;
        let um = solve_ne(spec, &m, &cfg, u0).unwrap().point;
        j.set_column(k, &((up - um) / (2.0 * h)));
    }
    j
}

#[test]
fn boundary_sensitivity_matches_finite_differences() {
    let mut checked_boundary = false;
    for seed in 0..6 {
        let spec = random_quadratic_game(100 + seed, 2, 3, SetShape::Box(0.4)).unwrap();
        let theta = spec.zero_theta();
        let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(6)).unwrap();
        let s = ne_jacobian(&spec, &theta, &ne, &tight()).unwrap();
        if s.used_conservative_fallback || s.kink_margin < 1e-4 {
            continue;
        }
        checked_boundary |= ne.point.iter().any(|x| (x.abs() - 0.4).abs() < 1e-12);
        let fd = fd_ne_jacobian(&spec, &theta, &ne.point, ne.tau);
        assert!(linalg::rel_err(&s.j, &fd) < 1e-4, "seed {seed}: {}", linalg::rel_err(&s.j, &fd));
    }
    assert!(checked_boundary);
}

#[test]
fn vjp_and_jvp_agree_with_full_jacobian() {
    let spec = random_quadratic_game(44, 3, 2, SetShape::Box(0.5)).unwrap();
    let theta = spec.zero_theta();
    let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(6)).unwrap();
    let s = ne_jacobian(&spec, &theta, &ne, &tight()).unwrap();
    let lin = FixedPointLinearization::at(&spec, &theta, &ne.point, ne.tau).unwrap();
    let w = DVector::from_fn(6, |k, _| (k as f64 * 0.37).sin());
    let d = DVector::from_fn(theta.len(), |k, _| (k as f64 * 0.91).cos());
    assert!((lin.vjp(&w, 1e-13).unwrap() - s.j.tr_mul(&w)).amax() < 1e-9);
    assert!((lin.jvp(&d, 1e-13).unwrap() - &s.j * &d).amax() < 1e-9);
}

#[test]
fn solves_are_deterministic() {
    let spec = random_quadratic_game(7, 3, 3, SetShape::Box(0.5)).unwrap();
    let cfg = SolverConfig {
        record_trace: true,
        ..SolverConfig::default()
    };
    let a = solve_ne(&spec, &spec.zero_theta(), &cfg, &DVector::zeros(9)).unwrap();
    let b = solve_ne(&spec, &spec.zero_theta(), &cfg, &DVector::zeros(9)).unwrap();
    assert_eq!(a.residual_trace, b.residual_trace);
    assert_eq!(a.point, b.point);
}

#[test]
fn oversized_stepsize_fails_without_hanging() {
    let spec = scalar_game(&[1.0, 1.0], 0.0, &[-2.0, -2.0], (0.0, -2.0), -1e6, 1e6).unwrap();
    let cfg = SolverConfig {
        tau: Some(1.5),
        max_iter: 50_000,
        ..SolverConfig::default()
    };
    let err = solve_ne(&spec, &spec.zero_theta(), &cfg, &v(&[3.0, 3.0])).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}
