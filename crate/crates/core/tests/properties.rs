use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use team_align::equilibrium::{solve_ne, solve_team_optimum, SolverConfig};
use team_align::instances::{random_quadratic_game, SetShape};
use team_align::netio::{build_incidence, build_od_vector, bundled_network, ProblemFile};
use team_align::polyhedra::{Polyhedron, PROJECTION_TOL};
use team_align::sweep::ExperimentGrid;

fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    proptest::collection::vec(-4.0..4.0f64, n).prop_map(DVector::from_vec)
}

fn boxes() -> impl Strategy<Value = Polyhedron> {
    (1..6usize)
        .prop_flat_map(|n| (proptest::collection::vec(-2.0..0.0f64, n), proptest::collection::vec(0.05..2.0f64, n)))
        .prop_map(|(lo, w)| {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
            Polyhedron::boxed(DVector::from_vec(lo), DVector::from_vec(hi)).unwrap()
        })
}

fn sets() -> impl Strategy<Value = Polyhedron> {
    prop_oneof![boxes(), (1..7usize).prop_map(Polyhedron::simplex)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_feasible_idempotent_and_nonexpansive(
        (set, x, y) in sets().prop_flat_map(|s| { let n = s.dim(); (Just(s), vector(n), vector(n)) })
    ) {
        let px = set.project(&x, PROJECTION_TOL).unwrap().point;
        let py = set.project(&y, PROJECTION_TOL).unwrap().point;
        prop_assert!(set.contains(&px, 1e-9));
        prop_assert!((set.project(&px, PROJECTION_TOL).unwrap().point - &px).norm() <= 1e-9);
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-9);
        // variational inequality against a second feasible point
        prop_assert!((&x - &px).dot(&(&py - &px)) <= 1e-8);
    }

    #[test]
    fn general_solver_agrees_with_box_shortcut(
        (set, x) in boxes().prop_flat_map(|s| { let n = s.dim(); (Just(s), vector(n)) })
    ) {
        let fast = set.project(&x, PROJECTION_TOL).unwrap().point;
        let slow = set.as_general().project(&x, PROJECTION_TOL).unwrap().point;
        prop_assert!((fast - slow).amax() <= 1e-9);
    }

    #[test]
    fn od_vectors_balance(o in 1..=24usize, d in 1..=24usize) {
        prop_assume!(o != d);
        let net = bundled_network();
        let m = build_od_vector(&net, o, d).unwrap();
        prop_assert_eq!(m.sum(), 0.0);
        prop_assert_eq!(m[o - 1], -1.0);
        prop_assert_eq!(m[d - 1], 1.0);
    }

    #[test]
    fn any_path_flow_satisfies_conservation(o in 1..=24usize, d in 1..=24usize) {
        prop_assume!(o != d);
        let net = bundled_network();
        let h = build_incidence(&net).unwrap();
        let path = net.shortest_path(o, d).unwrap();
        let mut u = DVector::zeros(net.arcs.len());
        for k in path {
            u[k] = 1.0;
        }
        let m = build_od_vector(&net, o, d).unwrap();
        let r = &h * &u - m;
        prop_assert!(r.amax() == 0.0);
        prop_assert_eq!(DMatrix::from_element(1, 24, 1.0) * r, DMatrix::zeros(1, 1));
    }

    #[test]
    fn quadratic_problems_round_trip(seed in 0..500u64, members in 2..4usize, n in 1..4usize, hyper in any::<bool>()) {
        let shape = if hyper { SetShape::Hyperplane } else { SetShape::Box(1.5) };
        let spec = random_quadratic_game(seed, members, n, shape).unwrap();
        let text = ProblemFile::from_spec(&spec).unwrap().to_json().unwrap();
        let back = ProblemFile::from_json(&text).unwrap().to_problem().unwrap().spec;
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn ne_and_team_optimum_are_feasible(seed in 0..200u64) {
        let spec = random_quadratic_game(seed, 3, 2, SetShape::BoundedHyperplane(-1.0, 1.0)).unwrap();
        let cfg = SolverConfig::default();
        let start = spec.project_profile(&DVector::zeros(spec.profile_dim())).unwrap();
        let ne = solve_ne(&spec, &spec.zero_theta(), &cfg, &start).unwrap();
        let star = solve_team_optimum(&spec, &cfg, &start).unwrap();
        for u in [&ne.point, &star.point] {
            prop_assert!((spec.project_profile(u).unwrap() - u).amax() <= 1e-9);
        }
        prop_assert!(ne.residual <= cfg.tol);
    }

    #[test]
    fn grid_cells_cover_the_product(
        a in proptest::collection::vec(0.5..5.0f64, 1..4),
        b in proptest::collection::vec(0.0..1.0f64, 1..4),
        g in proptest::collection::vec(-10.0..10.0f64, 1..4),
    ) {
        let grid = ExperimentGrid { alpha_values: a.clone(), beta_values: b.clone(), gamma_values: g.clone(), unison: true };
        let cells = grid.cells();
        prop_assert_eq!(cells.len(), a.len() * b.len() * g.len());
        prop_assert_eq!(grid.len(), cells.len());
        prop_assert_eq!(cells[0], (a[0], b[0], g[0]));
        prop_assert_eq!(*cells.last().unwrap(), (*a.last().unwrap(), *b.last().unwrap(), *g.last().unwrap()));
    }
}
