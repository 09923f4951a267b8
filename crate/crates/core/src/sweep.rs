//! Member-parameter sweeps: one consistency/deviation cell per grid point.
//! Cells are independent and run on the rayon pool when the `parallel`
//! feature is enabled.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::alignment::{certify, deviation_bound, CheckOptions};
use crate::equilibrium::{solve_ne, solve_team_optimum, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{estimate_constants, eval_team_cost, Params, ProblemSpec};

/// Caps sweep parallelism.
pub const THREADS_ENV: &str = "TEAM_ALIGN_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    /// Every member takes the cell's values; otherwise only member 0 does and
    /// the rest keep their base parameters.
    #[serde(default = "default_unison")]
    pub unison: bool,
}

fn default_unison() -> bool {
    true
}

impl Default for ExperimentGrid {
    /// The 4 × 4 × 4 grid around the traffic defaults `(2, 0.3, 10)`.
    fn default() -> Self {
        Self {
            alpha_values: vec![1.0, 2.0, 3.0, 4.0],
            beta_values: vec![0.3, 0.45, 0.6, 0.9],
            gamma_values: vec![5.0, 10.0, 15.0, 20.0],
            unison: true,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_values", &self.alpha_values),
            ("beta_values", &self.beta_values),
            ("gamma_values", &self.gamma_values),
        ] {
            if v.is_empty() {
                return Err(Error::Schema {
                    location: name.into(),
                    message: "must be nonempty".into(),
                });
            }
        }
        Ok(())
    }

    /// Cells in grid order: α outermost, γ innermost.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &a in &self.alpha_values {
            for &b in &self.beta_values {
                for &g in &self.gamma_values {
                    out.push((a, b, g));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.alpha_values.len() * self.beta_values.len() * self.gamma_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha_i: f64,
    pub beta_i: f64,
    pub gamma_i: f64,
    pub cr: u8,
    pub closeness_ratio: f64,
    /// `𝒞(u◇) − 𝒞(u*)`.
    pub travel_time_diff: f64,
    /// `‖u◇ − u*‖`.
    pub gap: f64,
    pub verdict: String,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
}

impl SweepRow {
    fn failed(cell: (f64, f64, f64), err: &Error) -> Self {
        Self {
            alpha_i: cell.0,
            beta_i: cell.1,
            gamma_i: cell.2,
            cr: 0,
            closeness_ratio: f64::NAN,
            travel_time_diff: f64::NAN,
            gap: f64::NAN,
            verdict: String::new(),
            status: format!("error: {err}"),
        }
    }
}

/// Shared inputs of every cell.
#[derive(Clone, Debug)]
pub struct SweepContext {
    pub base: ProblemSpec,
    pub u_star: DVector<f64>,
    pub team_cost: f64,
    pub solver: SolverConfig,
    pub check: CheckOptions,
}

impl SweepContext {
    pub fn new(base: ProblemSpec, solver: SolverConfig) -> Result<Self> {
        let u0 = base.project_profile(&DVector::zeros(base.profile_dim()))?;
        let opt = solve_team_optimum(&base, &solver, &u0)?;
        let team_cost = eval_team_cost(&base, &opt.point)?;
        Ok(Self {
            base,
            u_star: opt.point,
            team_cost,
            solver,
            check: CheckOptions::default(),
        })
    }

    pub fn cell_spec(&self, cell: (f64, f64, f64), unison: bool) -> Result<ProblemSpec> {
        let dims = self.base.dims();
        let p = Params::new(&vec![cell.0; dims.alpha], &vec![cell.1; dims.beta], &vec![cell.2; dims.gamma]);
        let mut members = self.base.member_params().to_vec();
        if unison {
            members.iter_mut().for_each(|m| *m = p.clone());
        } else {
            members[0] = p;
        }
        self.base.with_member_params(members)
    }

    pub fn run_cell(&self, cell: (f64, f64, f64), unison: bool) -> SweepRow {
        self.try_cell(cell, unison).unwrap_or_else(|e| SweepRow::failed(cell, &e))
    }

    fn try_cell(&self, cell: (f64, f64, f64), unison: bool) -> Result<SweepRow> {
        let spec = self.cell_spec(cell, unison)?;
        let theta = spec.zero_theta();
        let ne = solve_ne(&spec, &theta, &self.solver, &self.u_star)?;
        let verdict = certify(&spec, &theta, &ne.point, &self.check)?;
        let constants = estimate_constants(&spec, &theta)?;
        let cert = deviation_bound(&spec, &theta, &ne.point, &constants, Some(&self.u_star))?;
        Ok(SweepRow {
            alpha_i: cell.0,
            beta_i: cell.1,
            gamma_i: cell.2,
            cr: verdict.verdict.cr(),
            closeness_ratio: cert.closeness_ratio,
            travel_time_diff: eval_team_cost(&spec, &ne.point)? - self.team_cost,
            gap: (&ne.point - &self.u_star).norm(),
            verdict: format!("{:?}", verdict.verdict),
            status: "ok".into(),
        })
    }
}

/// Thread cap from `TEAM_ALIGN_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every cell, rows in grid order. Uses the rayon pool (capped by
/// `TEAM_ALIGN_THREADS`) when built with `parallel`.
pub fn run_sweep(ctx: &SweepContext, grid: &ExperimentGrid) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    #[cfg(feature = "parallel")]
    {
        run_sweep_parallel(ctx, grid, thread_cap())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(run_sweep_sequential(ctx, grid))
    }
}

pub fn run_sweep_sequential(ctx: &SweepContext, grid: &ExperimentGrid) -> Vec<SweepRow> {
    grid.cells().into_iter().map(|c| ctx.run_cell(c, grid.unison)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_sweep_parallel(ctx: &SweepContext, grid: &ExperimentGrid, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let cells = grid.cells();
    let run = || cells.par_iter().map(|&c| ctx.run_cell(c, grid.unison)).collect::<Vec<_>>();
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}

/// CSV with header
/// `alpha_i,beta_i,gamma_i,cr,closeness_ratio,travel_time_diff,gap,verdict,status`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::InvalidParams(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
