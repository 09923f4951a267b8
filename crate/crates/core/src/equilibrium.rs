//! Projected-gradient solvers for the Nash equilibrium and the team optimum,
//! and the fixed-point recursion for the Jacobian of the NE map.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, ProblemSpec, VectorField};
use crate::polyhedra::PROJECTION_TOL;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Iterations between two stagnation checkpoints.
const STAGNATION_WINDOW: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// `None` picks `κ/ν²` from exact constants, or `0.9·2κ̂/ν̂²` from sampled ones.
    pub tau: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Keep every iterate (memory grows with the iteration count).
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum EquilibriumKind {
    #[serde(rename = "NE")]
    Ne,
    #[serde(rename = "TeamOpt")]
    TeamOpt,
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub kind: EquilibriumKind,
    pub point: DVector<f64>,
    /// `‖u − Π(u − τ·map(u))‖` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub tau: f64,
    /// Whether `tau` came from exact constants.
    pub tau_certified: bool,
    /// Fixed-point residual per iteration.
    pub residual_trace: Vec<f64>,
    /// Iterates `u[0], u[1], …` when `record_trace` is set.
    pub iterates: Vec<DVector<f64>>,
}

/// Projected-gradient contraction factor `sqrt(1 − τ(2κ − τν²))`, when it is below 1.
pub fn rate_bound(tau: f64, kappa: f64, nu: f64) -> Option<f64> {
    let inner = 1.0 - tau * (2.0 * kappa - tau * nu * nu);
    (tau > 0.0 && inner < 1.0).then(|| inner.max(0.0).sqrt())
}

/// `0 < τ < 2κ/ν²`.
pub fn tau_in_window(tau: f64, kappa: f64, nu: f64) -> bool {
    tau > 0.0 && kappa > 0.0 && tau < 2.0 * kappa / (nu * nu)
}

/// Default stepsize for a field, with a flag telling whether it is certified.
pub fn default_tau(spec: &ProblemSpec, field: &VectorField, map: &'static str) -> Result<(f64, bool)> {
    let (kappa, nu, certified) = model::field_constants(spec, field, model::DEFAULT_CONSTANT_SAMPLES, 17)?;
    if !(kappa > 0.0) || !(nu > 0.0) {
        return Err(Error::Precondition(format!(
            "{map} is not strongly monotone (estimated kappa {kappa:.3e}); pass an explicit stepsize"
        )));
    }
    if certified {
        Ok((kappa / (nu * nu), true))
    } else {
        Ok((0.9 * 2.0 * kappa / (nu * nu), false))
    }
}

/// Joint projection onto `Ξ` that remembers equality multipliers between calls.
pub struct JointProjector<'a> {
    spec: &'a ProblemSpec,
    hints: Vec<Option<DVector<f64>>>,
}

impl<'a> JointProjector<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        Self {
            spec,
            hints: vec![None; spec.num_members()],
        }
    }

    pub fn project(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.spec.n();
        let mut out = DVector::zeros(x.len());
        for (i, p) in self.spec.feasible().iter().enumerate() {
            let xi = x.rows(i * n, n).into_owned();
            let r = p
                .project_warm(&xi, self.hints[i].as_ref(), PROJECTION_TOL)
                .map_err(|e| member_context(i, e))?;
            if p.num_eq() > 0 {
                self.hints[i] = Some(r.mu.clone());
            }
            out.rows_mut(i * n, n).copy_from(&r.point);
        }
        Ok(out)
    }
}

fn member_context(i: usize, e: Error) -> Error {
    match e {
        Error::Infeasible { .. } | Error::NoConvergence { .. } => e,
        other => Error::Member {
            member: i,
            message: other.to_string(),
        },
    }
}

/// Projected-gradient fixed-point iteration `u ← Π(u − τ·field(u))`.
pub fn solve_fixed_point(
    spec: &ProblemSpec,
    field: &VectorField,
    kind: EquilibriumKind,
    tau: f64,
    tau_certified: bool,
    cfg: &SolverConfig,
    u0: &DVector<f64>,
) -> Result<EquilibriumResult> {
    let nn = spec.profile_dim();
    if u0.len() != nn {
        return Err(Error::dim("initial profile", nn, u0.len()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParams(format!("stepsize must be positive, got {tau}")));
    }
    let solver = match kind {
        EquilibriumKind::Ne => "NE projected-gradient iteration",
        EquilibriumKind::TeamOpt => "team projected-gradient iteration",
    };
    let mut proj = JointProjector::new(spec);
    let mut u = proj.project(u0)?;
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_u = u.clone();
    let mut checkpoint = f64::INFINITY;
    let mut next_polish = 1e-4 * (1.0 + u.norm());
    for it in 0..cfg.max_iter {
        if cfg.record_trace {
            iterates.push(u.clone());
        }
        let next = proj.project(&(&u - field.eval(&u) * tau))?;
        let r = (&u - &next).norm();
        trace.push(r);
        if !r.is_finite() {
            return Err(Error::NoConvergence {
                solver,
                iterations: it + 1,
                residual: r,
                best: Some(best_u),
                trace,
            });
        }
        if r < best {
            best = r;
            best_u = u.clone();
        }
        if r <= cfg.tol {
            return Ok(EquilibriumResult {
                kind,
                point: u,
                residual: r,
                iterations: it,
                tau,
                tau_certified,
                residual_trace: trace,
                iterates,
            });
        }
        if r <= next_polish {
            next_polish = r * 1e-2;
            if let Some((p, pr)) = newton_polish(spec, field, tau, &u, &mut proj) {
                if pr <= cfg.tol {
                    return Ok(EquilibriumResult {
                        kind,
                        point: p,
                        residual: pr,
                        iterations: it + 1,
                        tau,
                        tau_certified,
                        residual_trace: trace,
                        iterates,
                    });
                }
            }
        }
        if (it + 1) % STAGNATION_WINDOW == 0 {
            if best > 0.99 * checkpoint {
                return Err(Error::Stagnation {
                    solver,
                    iterations: it + 1,
                    residual: best,
                });
            }
            checkpoint = best;
        }
        u = next;
    }
    Err(Error::NoConvergence {
        solver,
        iterations: cfg.max_iter,
        residual: best,
        best: Some(best_u),
        trace,
    })
}

/// One Newton step on `u = ζ(u)` using the projection Jacobian of the current
/// active set. Once the iteration has identified the active set this lands on
/// the fixed point up to rounding; the caller accepts it only if the true
/// residual is below tolerance.
fn newton_polish(
    spec: &ProblemSpec,
    field: &VectorField,
    tau: f64,
    u: &DVector<f64>,
    proj: &mut JointProjector,
) -> Option<(DVector<f64>, f64)> {
    let n = spec.n();
    let nn = u.len();
    let rho = u - field.eval(u) * tau;
    let mut js = DMatrix::zeros(nn, nn);
    for (i, p) in spec.feasible().iter().enumerate() {
        let ri = rho.rows(i * n, n).into_owned();
        let res = p.project(&ri, PROJECTION_TOL).ok()?;
        let ji = if res.is_smooth_point && !res.degenerate {
            p.projection_jacobian(&ri, &res).ok()?
        } else {
            p.conservative_from(&res)
        };
        js.view_mut((i * n, i * n), (n, n)).copy_from(&ji);
    }
    let zeta = proj.project(&rho).ok()?;
    let eye = DMatrix::<f64>::identity(nn, nn);
    let a = &eye - js * (&eye - field.jacobian(u) * tau);
    let cand = u + a.lu().solve(&(zeta - u))?;
    let r = (&cand - proj.project(&(&cand - field.eval(&cand) * tau)).ok()?).norm();
    r.is_finite().then_some((cand, r))
}

/// Nash equilibrium of the game manipulated by `θ`.
pub fn solve_ne(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    cfg: &SolverConfig,
    u0: &DVector<f64>,
) -> Result<EquilibriumResult> {
    let field = spec.game_field(theta)?;
    let (tau, certified) = match cfg.tau {
        Some(t) => (t, false),
        None => default_tau(spec, &field, "pseudo-gradient F")?,
    };
    solve_fixed_point(spec, &field, EquilibriumKind::Ne, tau, certified, cfg, u0)
}

/// Team-optimal profile, via the same kernel applied to `G`.
pub fn solve_team_optimum(spec: &ProblemSpec, cfg: &SolverConfig, u0: &DVector<f64>) -> Result<EquilibriumResult> {
    let field = spec.team_field();
    let (tau, certified) = match cfg.tau {
        Some(t) => (t, false),
        None => default_tau(spec, &field, "team gradient G")?,
    };
    solve_fixed_point(spec, &field, EquilibriumKind::TeamOpt, tau, certified, cfg, u0)
}

/// `h(u) = u − Π_Ξ(u − G(u))`.
pub fn residual_map(spec: &ProblemSpec, u: &DVector<f64>) -> Result<DVector<f64>> {
    let g = model::grad_team(spec, u)?;
    Ok(u - spec.project_profile(&(u - g))?)
}

/// Linearization of `ζ(θ, u) = Π(u − τF(θ, u))` at an equilibrium.
#[derive(Clone, Debug)]
pub struct FixedPointLinearization {
    pub tau: f64,
    /// Block-diagonal projection Jacobian at `ρ = u◇ − τF(θ, u◇)`.
    pub j_sigma: DMatrix<f64>,
    /// `J_u ζ = Jσ (I − τ J_u F)`.
    pub j_u_zeta: DMatrix<f64>,
    /// `J_θ F(θ, u◇)`.
    pub j_theta_f: DMatrix<f64>,
    /// Some member projection was not differentiable at `ρ`.
    pub used_conservative_fallback: bool,
    /// Smallest strict-complementarity margin over all tight rows.
    pub kink_margin: f64,
}

impl FixedPointLinearization {
    pub fn at(spec: &ProblemSpec, theta: &DVector<f64>, u: &DVector<f64>, tau: f64) -> Result<Self> {
        let field = spec.game_field(theta)?;
        let n = spec.n();
        let nn = spec.profile_dim();
        let rho = u - field.eval(u) * tau;
        let mut j_sigma = DMatrix::zeros(nn, nn);
        let mut fallback = false;
        let mut margin = f64::INFINITY;
        for (i, p) in spec.feasible().iter().enumerate() {
            let ri = rho.rows(i * n, n).into_owned();
            let res = p.project(&ri, PROJECTION_TOL)?;
            for &j in &res.active_set {
                margin = margin.min(res.lambda[j]);
            }
            let ji = if res.is_smooth_point && !res.degenerate {
                p.projection_jacobian(&ri, &res)?
            } else {
                fallback = true;
                p.conservative_from(&res)
            };
            j_sigma.view_mut((i * n, i * n), (n, n)).copy_from(&ji);
        }
        let ju_f = field.jacobian(u);
        let j_u_zeta = &j_sigma * (DMatrix::identity(nn, nn) - ju_f * tau);
        Ok(Self {
            tau,
            j_sigma,
            j_u_zeta,
            j_theta_f: model::theta_jacobian(spec, u),
            used_conservative_fallback: fallback,
            kink_margin: margin,
        })
    }

    /// `J_θ ζ = −τ Jσ J_θ F`.
    pub fn j_theta_zeta(&self) -> DMatrix<f64> {
        &self.j_sigma * &self.j_theta_f * (-self.tau)
    }

    /// `J_θ ζ · d`.
    fn theta_zeta_apply(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.j_sigma * (&self.j_theta_f * d) * (-self.tau)
    }

    /// `J_θ ζᵀ · w`.
    fn theta_zeta_apply_t(&self, w: &DVector<f64>) -> DVector<f64> {
        self.j_theta_f.tr_mul(&(self.j_sigma.tr_mul(w))) * (-self.tau)
    }

    /// Solves `z = J_uζ z + b` by the fixed-point recursion from `z = 0`.
    fn iterate<F>(&self, apply: F, b: &DVector<f64>, tol: f64, max_sweeps: usize) -> Result<(DVector<f64>, usize)>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let mut z = DVector::zeros(b.len());
        let mut prev_step = f64::INFINITY;
        let mut growth = 0usize;
        for sweep in 0..max_sweeps {
            let next = apply(&z) + b;
            let step = (&next - &z).norm();
            z = next;
            if step <= tol * (1.0 + z.norm()) {
                return Ok((z, sweep + 1));
            }
            if !step.is_finite() || step > prev_step {
                growth += 1;
                if growth > 20 || !step.is_finite() {
                    return Err(Error::NonContracting {
                        sweep: sweep + 1,
                        step_norm: step,
                    });
                }
            } else {
                growth = 0;
            }
            prev_step = step;
        }
        Err(Error::NonContracting {
            sweep: max_sweeps,
            step_norm: prev_step,
        })
    }

    /// Directional derivative `J u◇(θ) · d`.
    pub fn jvp(&self, d: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        let b = self.theta_zeta_apply(d);
        Ok(self.iterate(|z| &self.j_u_zeta * z, &b, tol, MAX_SWEEPS)?.0)
    }

    /// Adjoint product `J u◇(θ)ᵀ · v`, via `w ← J_uζᵀ w + v`, `ω = J_θζᵀ w`.
    pub fn vjp(&self, v: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        let (w, _) = self.iterate(|z| self.j_u_zeta.tr_mul(z), v, tol, MAX_SWEEPS)?;
        Ok(self.theta_zeta_apply_t(&w))
    }
}

const MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct SensitivityMatrix {
    /// `(n·N) × (d·N)` Jacobian of the NE map.
    pub j: DMatrix<f64>,
    pub converged: bool,
    pub used_conservative_fallback: bool,
    /// `‖z − (J_uζ z + J_θζ)‖_F` at the returned matrix.
    pub residual: f64,
    pub sweeps: usize,
    pub kink_margin: f64,
}

/// Jacobian of `θ ↦ u◇(θ)` by the recursion `z ← J_uζ z + J_θζ`, `z[0] = 0`.
pub fn ne_jacobian(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    ne: &EquilibriumResult,
    cfg: &SolverConfig,
) -> Result<SensitivityMatrix> {
    if ne.residual > cfg.tol.max(DEFAULT_TOL) * 10.0 {
        return Err(Error::Precondition(format!(
            "equilibrium residual {:.3e} exceeds tolerance",
            ne.residual
        )));
    }
    let lin = FixedPointLinearization::at(spec, theta, &ne.point, ne.tau)?;
    let b = lin.j_theta_zeta();
    let mut z = DMatrix::zeros(b.nrows(), b.ncols());
    let mut prev_step = f64::INFINITY;
    let mut growth = 0usize;
    let mut sweeps = 0usize;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        let next = &lin.j_u_zeta * &z + &b;
        let step = (&next - &z).norm();
        z = next;
        sweeps += 1;
        if step <= cfg.tol * (1.0 + z.norm()) {
            converged = true;
            break;
        }
        if !step.is_finite() || step > prev_step {
            growth += 1;
            if growth > 20 || !step.is_finite() {
                return Err(Error::NonContracting {
                    sweep: sweeps,
                    step_norm: step,
                });
            }
        } else {
            growth = 0;
        }
        prev_step = step;
    }
    let residual = (&lin.j_u_zeta * &z + &b - &z).norm();
    Ok(SensitivityMatrix {
        j: z,
        converged,
        used_conservative_fallback: lin.used_conservative_fallback,
        residual,
        sweeps,
        kink_margin: lin.kink_margin,
    })
}

/// Spectral norm of `J_uζ`; below 1 certifies the recursion contracts.
pub fn contraction_norm(lin: &FixedPointLinearization) -> f64 {
    linalg::spectral_norm(&lin.j_u_zeta)
}

#[cfg(test)]
mod tests;
