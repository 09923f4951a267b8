use super::*;
use crate::equilibrium::{solve_ne, solve_team_optimum, SolverConfig};
use crate::instances::{random_quadratic_game, scalar_game, SetShape};
use crate::model::{estimate_constants, MediatorAdjustment, Params};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    }
}

fn closed_form(spec: &ProblemSpec) -> DVector<f64> {
    let t = spec.team_params();
    MediatorAdjustment {
        blocks: spec
            .member_params()
            .iter()
            .map(|p| Params {
                alpha: &t.alpha - &p.alpha,
                beta: &t.beta * 2.0 - &p.beta,
                gamma: &t.gamma - &p.gamma,
            })
            .collect(),
    }
    .to_vector()
}

/// Minimum of the team cost over a uniform grid of the box `[lo, hi]²`.
fn grid_min(spec: &ProblemSpec, lo: f64, hi: f64, k: usize) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..k {
        for b in 0..k {
            let x = lo + (hi - lo) * a as f64 / (k - 1) as f64;
            let y = lo + (hi - lo) * b as f64 / (k - 1) as f64;
            best = best.min(model::eval_team_cost(spec, &v(&[x, y])).unwrap());
        }
    }
    best
}

#[test]
fn hausdorff_examples_and_metric_properties() {
    assert_eq!(hausdorff(&[v(&[0.0])], &[v(&[3.0])]).unwrap(), 3.0);
    let a = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0])];
    assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    let b = vec![v(&[0.0, 1.0])];
    assert!((hausdorff(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!(hausdorff(&[], &b), Err(Error::EmptySet)));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut set = |k: usize| -> Vec<DVector<f64>> {
        (0..k).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0))).collect()
    };
    for _ in 0..200 {
        let (x, y, z) = (set(3), set(4), set(2));
        let xy = hausdorff(&x, &y).unwrap();
        assert_eq!(xy, hausdorff(&y, &x).unwrap());
        assert!(xy <= hausdorff(&x, &z).unwrap() + hausdorff(&z, &y).unwrap() + 1e-12);
        assert!(xy > 0.0);
    }
}

#[test]
fn potential_condition_cases() {
    let spec = random_quadratic_game(2, 3, 2, SetShape::Box(1.0)).unwrap();
    let theta = closed_form(&spec);
    let pc = check_potential_condition(&spec, &theta, 100, 1).unwrap();
    assert!(pc.holds && pc.operators_match == Some(true) && pc.parameter_blocks_match == Some(true));
    assert!(pc.max_violation <= 1e-10);
    assert!(!check_potential_condition(&spec, &spec.zero_theta(), 100, 1).unwrap().holds);

    // γ_1 off by 0.75, everything else aligned
    let spec = scalar_game(&[1.0, 1.0], 0.6, &[2.75, 2.0], (0.3, 2.0), -5.0, 5.0).unwrap();
    let pc = check_potential_condition(&spec, &spec.zero_theta(), 50, 1).unwrap();
    assert!(!pc.holds);
    assert!((pc.max_violation - 0.75).abs() < 1e-12);
}

#[test]
fn scalar_checks_agree_with_grid_brute_force() {
    let cases = [
        // aligned, interior: branch 1
        (scalar_game(&[1.0, 1.0], 0.6, &[-1.0, -1.0], (0.3, -1.0), -5.0, 5.0).unwrap(), true),
        // both derivatives positive at the lower bound
        (scalar_game(&[1.0, 1.0], 0.2, &[1.0, 2.0], (0.1, 1.0), 0.0, 5.0).unwrap(), true),
        // team derivative negative where the member's is positive
        (scalar_game(&[1.0, 1.0], 0.2, &[1.0, 1.0], (0.1, -1.0), 0.0, 5.0).unwrap(), false),
        // interior NE with non-zero team derivative
        (scalar_game(&[1.0, 1.0], 0.4, &[-2.0, -2.0], (0.5, -2.0), -5.0, 5.0).unwrap(), false),
    ];
    for (k, (spec, expect)) in cases.iter().enumerate() {
        let ne = solve_ne(spec, &spec.zero_theta(), &tight(), &v(&[0.5, 0.5])).unwrap();
        let verdict = check_consistency_1d(spec, &spec.zero_theta(), &ne.point, &CheckOptions::default()).unwrap();
        let (lo, hi) = (spec.feasible()[0].ineq_rhs()[1] * -1.0, spec.feasible()[0].ineq_rhs()[0]);
        let optimal = model::eval_team_cost(spec, &ne.point).unwrap() <= grid_min(spec, lo, hi, 1001) + 1e-6;
        assert_eq!(verdict.verdict.is_consistent(), *expect, "case {k}: {verdict:?}");
        assert_eq!(optimal, *expect, "case {k}");
        if !expect {
            assert!(verdict.members.iter().any(|m| matches!(m, MemberEvidence::Violation { .. })));
        }
    }
}

#[test]
fn scalar_check_rejects_non_equilibrium() {
    let spec = scalar_game(&[1.0, 1.0], 0.0, &[0.0, 0.0], (0.0, 0.0), -1.0, 1.0).unwrap();
    let err = check_consistency_1d(&spec, &spec.zero_theta(), &v(&[0.5, 0.5]), &CheckOptions::default());
    assert!(matches!(err, Err(Error::Precondition(_))));
}

#[test]
fn multidim_aligned_equality_instance_is_consistent() {
    let base = random_quadratic_game(8, 3, 3, SetShape::BoundedHyperplane(0.0, 1.0)).unwrap();
    let theta = closed_form(&base);
    let ne = solve_ne(&base, &theta, &tight(), &DVector::zeros(9)).unwrap();
    let team = solve_team_optimum(&base, &tight(), &DVector::zeros(9)).unwrap();
    assert!((&ne.point - &team.point).norm() <= 1e-8);
    let verdict = check_consistency_multidim(&base, &theta, &ne.point, &CheckOptions::default()).unwrap();
    assert_eq!(verdict.verdict, Verdict::ConsistentByCorollary2);
    assert_eq!(
        certify(&base, &theta, &ne.point, &CheckOptions::default()).unwrap().verdict,
        Verdict::ConsistentByIdentity
    );
}

#[test]
fn multidim_misaligned_instance_reports_witness() {
    let spec = random_quadratic_game(12, 3, 3, SetShape::Box(0.5)).unwrap();
    let theta = spec.zero_theta();
    let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(9)).unwrap();
    let team = solve_team_optimum(&spec, &tight(), &DVector::zeros(9)).unwrap();
    assert!((&ne.point - &team.point).norm() > 1e-3);
    let verdict = check_consistency_multidim(&spec, &theta, &ne.point, &CheckOptions::default()).unwrap();
    assert_eq!(verdict.verdict, Verdict::Inconsistent);
    let witness = verdict
        .members
        .iter()
        .find_map(|m| match m {
            MemberEvidence::Violation { team_value, .. } => Some(*team_value),
            _ => None,
        })
        .unwrap();
    assert!(witness < 0.0);
}

#[test]
fn deviation_bound_examples() {
    // 𝒞 = u², member γ = 1 ⇒ F − G ≡ 1, κ1 = ν1 = 2.
    let spec = scalar_game(&[1.0], 0.0, &[1.0], (0.0, 0.0), -10.0, 10.0).unwrap();
    let c = estimate_constants(&spec, &spec.zero_theta()).unwrap();
    let ne = solve_ne(&spec, &spec.zero_theta(), &tight(), &v(&[0.0])).unwrap();
    let cert = deviation_bound(&spec, &spec.zero_theta(), &ne.point, &c, Some(&v(&[0.0]))).unwrap();
    assert!((cert.bound - 1.5).abs() < 1e-12);
    assert!((cert.actual_gap.unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(cert.bound_holds, Some(true));

    let spec = random_quadratic_game(30, 2, 2, SetShape::Box(1.0)).unwrap();
    let theta = closed_form(&spec);
    let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(4)).unwrap();
    let star = solve_team_optimum(&spec, &tight(), &DVector::zeros(4)).unwrap();
    let c = estimate_constants(&spec, &theta).unwrap();
    let cert = deviation_bound(&spec, &theta, &ne.point, &c, Some(&star.point)).unwrap();
    assert!(cert.gap_norm <= 1e-12 && cert.closeness_ratio > 1.0 - 1e-11);
    assert!(cert.actual_gap.unwrap() <= 1e-9);
}

#[test]
fn deviation_bound_holds_on_random_instances() {
    for seed in 0..30 {
        let spec = random_quadratic_game(500 + seed, 3, 2, SetShape::Box(0.8)).unwrap();
        let theta = spec.zero_theta();
        let c = estimate_constants(&spec, &theta).unwrap();
        let ne = solve_ne(&spec, &theta, &tight(), &DVector::zeros(6)).unwrap();
        let star = solve_team_optimum(&spec, &tight(), &DVector::zeros(6)).unwrap();
        let cert = deviation_bound(&spec, &theta, &ne.point, &c, Some(&star.point)).unwrap();
        assert_eq!(cert.bound_holds, Some(true), "seed {seed}: {cert:?}");
        assert!(cert.closeness_ratio > 0.0 && cert.closeness_ratio < 1.0);
    }
}
