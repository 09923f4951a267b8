use super::*;
use crate::instances::scalar_game;
use crate::netio::{bundled_problem_file, bundled_team_params};

fn small_ctx() -> SweepContext {
    // Two scalar members, team (1, 0.5, 1) on [-5, 5] boxes.
    let spec = scalar_game(&[1.0, 1.0], 0.5, &[1.0, 1.0], (0.5, 1.0), -5.0, 5.0).unwrap();
    SweepContext::new(spec, SolverConfig::default()).unwrap()
}

fn small_grid() -> ExperimentGrid {
    ExperimentGrid {
        alpha_values: vec![1.0, 2.0, 3.0],
        beta_values: vec![0.5, 1.0],
        gamma_values: vec![1.0, 3.0],
        unison: true,
    }
}

#[test]
fn cells_follow_grid_order() {
    let cells = small_grid().cells();
    assert_eq!(cells.len(), 12);
    assert_eq!(cells[0], (1.0, 0.5, 1.0));
    assert_eq!(cells[1], (1.0, 0.5, 3.0));
    assert_eq!(cells[2], (1.0, 1.0, 1.0));
    assert_eq!(cells[11], (3.0, 1.0, 3.0));
}

#[test]
fn empty_axis_is_rejected() {
    let mut g = small_grid();
    g.beta_values.clear();
    assert!(matches!(g.validate(), Err(Error::Schema { .. })));
}

#[test]
fn aligned_cell_reports_identity() {
    // Team gradient 2u_i + 2·0.5·u_j + 1 equals the member's with (1, 1, 1).
    let row = small_ctx().run_cell((1.0, 1.0, 1.0), true);
    assert_eq!(row.status, "ok");
    assert_eq!(row.cr, 1);
    assert_eq!(row.closeness_ratio, 1.0);
    assert!(row.gap < 1e-9 && row.travel_time_diff.abs() < 1e-9);
}

#[test]
fn rows_agree_with_independent_resolve() {
    let ctx = small_ctx();
    let grid = small_grid();
    let rows = run_sweep(&ctx, &grid).unwrap();
    assert_eq!(rows.len(), grid.len());
    for row in &rows {
        assert_eq!(row.status, "ok");
        let spec = ctx.cell_spec((row.alpha_i, row.beta_i, row.gamma_i), true).unwrap();
        // Interior NE of the scalar game: (2q + b)u = −γ for symmetric members.
        let u = -row.gamma_i / (2.0 * row.alpha_i + row.beta_i);
        let ne = DVector::from_element(2, u.clamp(-5.0, 5.0));
        let expect_gap = (&ne - &ctx.u_star).norm();
        assert!((row.gap - expect_gap).abs() < 1e-7, "{row:?} vs {expect_gap}");
        let diff = eval_team_cost(&spec, &ne).unwrap() - ctx.team_cost;
        assert!((row.travel_time_diff - diff).abs() < 1e-7);
        if row.cr == 1 {
            assert!(row.travel_time_diff <= 1e-6 * (1.0 + ctx.team_cost.abs()));
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_matches_sequential() {
    let ctx = small_ctx();
    let grid = small_grid();
    let par = run_sweep_parallel(&ctx, &grid, Some(2)).unwrap();
    let seq = run_sweep_sequential(&ctx, &grid);
    assert_eq!(par, seq);
}

#[test]
fn failed_cell_keeps_sweep_going() {
    // α = −1 makes the members' game non-monotone.
    let ctx = small_ctx();
    let grid = ExperimentGrid {
        alpha_values: vec![-1.0, 1.0],
        beta_values: vec![1.0],
        gamma_values: vec![1.0],
        unison: true,
    };
    let rows = run_sweep(&ctx, &grid).unwrap();
    assert!(rows[0].status.starts_with("error"));
    assert!(rows[0].gap.is_nan());
    assert_eq!(rows[1].status, "ok");
}

#[test]
fn csv_header_and_rows() {
    let rows = run_sweep_sequential(&small_ctx(), &small_grid());
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "alpha_i,beta_i,gamma_i,cr,closeness_ratio,travel_time_diff,gap,verdict,status"
    );
    assert_eq!(lines.count(), rows.len());
}

#[test]
fn bundled_defaults_are_misaligned() {
    let spec = bundled_problem_file(&bundled_team_params()).to_problem().unwrap().spec;
    let ctx = SweepContext::new(spec, SolverConfig::default()).unwrap();
    let row = ctx.run_cell((2.0, 0.3, 10.0), true);
    assert_eq!(row.cr, 0);
    assert!(row.gap > 1e-3);
    let aligned = ctx.run_cell((2.0, 0.6, 10.0), true);
    assert_eq!(aligned.cr, 1);
    assert!(aligned.gap < 1e-8);
}
