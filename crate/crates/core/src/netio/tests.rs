use nalgebra::{DMatrix, DVector};

use super::*;
use crate::equilibrium::{solve_ne, solve_team_optimum, SolverConfig};
use crate::instances::random_quadratic_game;
use crate::instances::SetShape;
use crate::model::eval_team_cost;

fn triangle() -> TrafficNetwork {
    // 1 → 3 directly, or 1 → 2 → 3.
    TrafficNetwork::new(
        3,
        vec![Arc { from: 1, to: 3 }, Arc { from: 1, to: 2 }, Arc { from: 2, to: 3 }],
        vec![OdPair { origin: 1, dest: 3 }],
    )
    .unwrap()
}

#[test]
fn incidence_matches_hand_built() {
    let h = build_incidence(&triangle()).unwrap();
    let expect = DMatrix::from_row_slice(3, 3, &[-1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, 1.0]);
    assert_eq!(h, expect);
    for k in 0..3 {
        assert_eq!(h.column(k).sum(), 0.0);
    }
}

#[test]
fn od_vector_is_one_based() {
    let m = build_od_vector(&triangle(), 1, 3).unwrap();
    assert_eq!(m, DVector::from_column_slice(&[-1.0, 0.0, 1.0]));
    assert!(build_od_vector(&triangle(), 2, 2).is_err());
    assert!(build_od_vector(&triangle(), 0, 2).is_err());
}

#[test]
fn path_flow_satisfies_conservation() {
    let net = bundled_network();
    let h = build_incidence(&net).unwrap();
    for od in &net.members {
        let path = net.shortest_path(od.origin, od.dest).unwrap();
        let mut u = DVector::zeros(net.arcs.len());
        for k in path {
            u[k] = 1.0;
        }
        let m = build_od_vector(&net, od.origin, od.dest).unwrap();
        assert!((&h * u - m).amax() < 1e-15);
    }
}

#[test]
fn single_member_routing_matches_grid_search() {
    // Flow x on the direct arc, 1 − x on each arc of the two-hop route.
    let (alpha, gamma) = (1.5, 0.4);
    let team = Params::new(&[alpha], &[0.0], &[gamma]);
    let spec = build_traffic_problem(
        &triangle(),
        TrafficParameterization::Scalar,
        team.clone(),
        vec![team],
        None,
    )
    .unwrap();
    let cost = |x: f64| alpha * (x * x + 2.0 * (1.0 - x) * (1.0 - x)) + gamma * (x + 2.0 * (1.0 - x));
    let best = (0..=100_000)
        .map(|k| k as f64 / 100_000.0)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap();
    let u0 = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
    let opt = solve_team_optimum(&spec, &SolverConfig::default(), &u0).unwrap();
    assert!((opt.point[0] - best).abs() < 1e-5, "{} vs {best}", opt.point[0]);
    assert!((opt.point[1] - (1.0 - best)).abs() < 1e-5);
    assert!((eval_team_cost(&spec, &opt.point).unwrap() - cost(best)).abs() < 1e-8);
}

#[test]
fn traffic_file_round_trips() {
    let member = Params::new(&[1.0], &[0.5], &[8.0]);
    let file = bundled_problem_file(&member);
    let text = file.to_json().unwrap();
    let back = ProblemFile::from_json(&text).unwrap();
    assert_eq!(back, file);
    let a = file.to_problem().unwrap();
    let b = back.to_problem().unwrap();
    assert_eq!(a.spec, b.spec);
    assert_eq!(a.network, Some(bundled_network()));
}

#[test]
fn quadratic_file_round_trips_bit_exact() {
    let spec = random_quadratic_game(3, 2, 3, SetShape::BoundedHyperplane(-2.0, 2.0)).unwrap();
    let file = ProblemFile::from_spec(&spec).unwrap();
    let dir = std::env::temp_dir().join(format!("team-align-netio-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("quad.json");
    save_problem(&path, &file).unwrap();
    let loaded = load_problem(&path).unwrap();
    assert_eq!(loaded.spec, spec);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_arc_reports_location() {
    let mut file = bundled_problem_file(&bundled_team_params());
    file.network.as_mut().unwrap().arcs[4].to = 99;
    match file.to_problem() {
        Err(Error::Schema { location, .. }) => assert_eq!(location, "network.arcs[4].to"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn rejects_unknown_fields_and_versions() {
    let file = bundled_problem_file(&bundled_team_params());
    let mut v: serde_json::Value = serde_json::from_str(&file.to_json().unwrap()).unwrap();
    v["format_version"] = 2.into();
    assert!(matches!(
        ProblemFile::from_json(&v.to_string()),
        Err(Error::Schema { location, .. }) if location == "format_version"
    ));
    v["format_version"] = 1.into();
    v["extra"] = 0.into();
    assert!(matches!(ProblemFile::from_json(&v.to_string()), Err(Error::Schema { .. })));
}

#[test]
fn unreachable_destination_is_a_network_error() {
    let err = TrafficNetwork::new(
        3,
        vec![Arc { from: 1, to: 2 }, Arc { from: 3, to: 2 }],
        vec![OdPair { origin: 1, dest: 3 }],
    )
    .unwrap_err();
    assert!(matches!(err, Error::Network(_)));
}

#[test]
fn bundled_instance_shape() {
    let net = bundled_network();
    assert_eq!(net.nodes, 24);
    assert_eq!(net.arcs.len(), 31);
    assert_eq!(net.members.len(), 4);
    let spec = bundled_problem_file(&bundled_team_params()).to_problem().unwrap().spec;
    for set in spec.feasible() {
        set.validate().unwrap();
    }
}

#[test]
fn capacity_never_binds_on_bundled_instance() {
    let spec = bundled_problem_file(&Params::new(&[1.0], &[0.6], &[10.0]))
        .to_problem()
        .unwrap()
        .spec;
    let cap = default_capacity(&bundled_network());
    let cfg = SolverConfig::default();
    let u0 = spec.project_profile(&DVector::zeros(spec.profile_dim())).unwrap();
    let ne = solve_ne(&spec, &spec.zero_theta(), &cfg, &u0).unwrap();
    let opt = solve_team_optimum(&spec, &cfg, &u0).unwrap();
    for u in [&ne.point, &opt.point] {
        assert!(u.max() <= 1.0 + 1e-9 && u.max() < cap);
    }
}
