//! Bi-level mediation: the objective `ψ(θ) = ½‖u◇(θ) − u*‖²`, its
//! hypergradient through the NE map, and the projected hypergradient loop.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equilibrium::{self, EquilibriumResult, FixedPointLinearization, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{MediatorAdjustment, ParamDims, Params, ProblemSpec};
use crate::polyhedra::{Polyhedron, PROJECTION_TOL};

/// Smallest inner tolerance the tightening rule may request.
const INNER_TOL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StepSchedule {
    /// `η[k] = c/(k+1)`.
    Diminishing(f64),
    Fixed(f64),
}

impl StepSchedule {
    pub fn step(self, k: usize) -> f64 {
        match self {
            StepSchedule::Diminishing(c) => c / (k as f64 + 1.0),
            StepSchedule::Fixed(eta) => eta,
        }
    }
}

/// Which parameter blocks the mediator may adjust; the rest stay at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scenario {
    Alpha,
    Gamma,
    AlphaBeta,
    All,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "alpha" => Some(Self::Alpha),
            "gamma" => Some(Self::Gamma),
            "alpha-beta" => Some(Self::AlphaBeta),
            "all" => Some(Self::All),
            _ => None,
        }
    }

    /// Adjustable coordinates of the stacked `θ`.
    pub fn mask(self, dims: ParamDims, members: usize) -> Vec<bool> {
        let (a, b, g) = match self {
            Self::Alpha => (true, false, false),
            Self::Gamma => (false, false, true),
            Self::AlphaBeta => (true, true, false),
            Self::All => (true, true, true),
        };
        let block: Vec<bool> = std::iter::repeat_n(a, dims.alpha)
            .chain(std::iter::repeat_n(b, dims.beta))
            .chain(std::iter::repeat_n(g, dims.gamma))
            .collect();
        block.repeat(members)
    }
}

/// `Θ ∩ {θ_k = 0 for frozen k}`.
pub fn restrict_mediator_set(set: &Polyhedron, mask: &[bool]) -> Result<Polyhedron> {
    if mask.len() != set.dim() {
        return Err(Error::dim("scenario mask", set.dim(), mask.len()));
    }
    let restricted = if let Some((lo, hi)) = set.bounds().filter(|_| set.is_box()) {
        let mut lo = lo.clone();
        let mut hi = hi.clone();
        for (k, &free) in mask.iter().enumerate() {
            if !free {
                if lo[k] > 0.0 || hi[k] < 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "frozen coordinate {k} is excluded by the mediator set"
                    )));
                }
                lo[k] = 0.0;
                hi[k] = 0.0;
            }
        }
        Polyhedron::boxed(lo, hi)?
    } else {
        let frozen: Vec<usize> = (0..mask.len()).filter(|&k| !mask[k]).collect();
        let d = set.dim();
        let mut h = DMatrix::zeros(set.num_eq() + frozen.len(), d);
        let mut m = DVector::zeros(set.num_eq() + frozen.len());
        h.view_mut((0, 0), (set.num_eq(), d)).copy_from(set.eq_matrix());
        m.rows_mut(0, set.num_eq()).copy_from(set.eq_rhs());
        for (r, &k) in frozen.iter().enumerate() {
            h[(set.num_eq() + r, k)] = 1.0;
        }
        let p = Polyhedron::new(set.ineq_matrix().clone(), set.ineq_rhs().clone(), h, m)?;
        p.project(&DVector::zeros(d), PROJECTION_TOL)?;
        p
    };
    Ok(restricted)
}

#[derive(Clone, Debug)]
pub struct MediationConfig {
    pub schedule: StepSchedule,
    pub inner: SolverConfig,
    /// Outer tolerance on the criticality residual `‖θ − Π_Θ(θ − ω)‖`.
    pub tol: f64,
    pub max_outer_iter: usize,
    /// Starting adjustment; zero when absent.
    pub theta0: Option<DVector<f64>>,
    /// Adjustable coordinates; all when absent.
    pub mask: Option<Vec<bool>>,
    /// Known `ν_ψ`; a fixed stepsize must then satisfy `η < 2/ν_ψ`.
    pub nu_psi: Option<f64>,
}

impl Default for MediationConfig {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::Diminishing(1.0),
            inner: SolverConfig::default(),
            tol: 1e-8,
            max_outer_iter: 500,
            theta0: None,
            mask: None,
            nu_psi: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MediationReport {
    pub theta_final: Vec<f64>,
    pub psi_trace: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub criticality_residual: f64,
    pub used_conservative_fallback: usize,
    pub converged: bool,
    pub outer_iterations: usize,
    /// `‖u◇(θ_final) − u*‖`.
    pub final_gap: f64,
    pub final_ne: Vec<f64>,
}

/// `ψ(θ) = ½‖u◇(θ) − u*‖²`.
pub fn psi(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    u_star: &DVector<f64>,
    cfg: &SolverConfig,
    u0: &DVector<f64>,
) -> Result<f64> {
    let ne = equilibrium::solve_ne(spec, theta, cfg, u0)?;
    Ok(0.5 * (&ne.point - u_star).norm_squared())
}

#[derive(Clone, Debug)]
pub struct Hypergradient {
    pub omega: DVector<f64>,
    pub psi: f64,
    pub ne: EquilibriumResult,
    /// The projection Jacobian came from the conservative selection.
    pub conservative: bool,
}

/// `ω = J u◇(θ)ᵀ (u◇(θ) − u*)`, by the adjoint of the fixed-point recursion.
pub fn hypergradient(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    u_star: &DVector<f64>,
    cfg: &SolverConfig,
    u0: &DVector<f64>,
) -> Result<Hypergradient> {
    let ne = equilibrium::solve_ne(spec, theta, cfg, u0)?;
    hypergradient_at(spec, theta, u_star, ne, cfg.tol)
}

fn hypergradient_at(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    u_star: &DVector<f64>,
    ne: EquilibriumResult,
    tol: f64,
) -> Result<Hypergradient> {
    let e = &ne.point - u_star;
    let lin = FixedPointLinearization::at(spec, theta, &ne.point, ne.tau)?;
    let omega = lin.vjp(&e, tol.min(1e-10))?;
    Ok(Hypergradient {
        omega,
        psi: 0.5 * e.norm_squared(),
        ne,
        conservative: lin.used_conservative_fallback,
    })
}

fn apply_mask(v: &mut DVector<f64>, mask: Option<&[bool]>) {
    if let Some(mask) = mask {
        for (x, &free) in v.iter_mut().zip(mask) {
            if !free {
                *x = 0.0;
            }
        }
    }
}

/// Largest eigenvalue of `JᵀJ` over the adjustable coordinates, by power
/// iteration on Jacobian-vector products at `θ`. Exact up to the iteration
/// count when the NE map is affine.
pub fn estimate_nu_psi(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    cfg: &SolverConfig,
    u0: &DVector<f64>,
    mask: Option<&[bool]>,
) -> Result<f64> {
    let ne = equilibrium::solve_ne(spec, theta, cfg, u0)?;
    let lin = FixedPointLinearization::at(spec, theta, &ne.point, ne.tau)?;
    let d = theta.len();
    let mut x = DVector::from_fn(d, |k, _| 1.0 + 0.01 * (k as f64).sin());
    apply_mask(&mut x, mask);
    let mut lambda = 0.0;
    for _ in 0..200 {
        let nrm = x.norm();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        x /= nrm;
        let mut y = lin.vjp(&lin.jvp(&x, 1e-13)?, 1e-13)?;
        apply_mask(&mut y, mask);
        let next = x.dot(&y);
        let done = (next - lambda).abs() <= 1e-12 * next.abs().max(1e-300);
        lambda = next;
        x = y;
        if done {
            break;
        }
    }
    Ok(lambda)
}

fn criticality(set: &Polyhedron, theta: &DVector<f64>, omega: &DVector<f64>) -> Result<f64> {
    Ok((theta - set.project(&(theta - omega), PROJECTION_TOL)?.point).norm())
}

/// Algorithm 1: inner NE solve warm-started from the previous equilibrium,
/// adjoint hypergradient, projected update on `Θ`.
pub fn run_mediation(spec: &ProblemSpec, u_star: &DVector<f64>, cfg: &MediationConfig) -> Result<MediationReport> {
    let d = spec.theta_dim();
    if u_star.len() != spec.profile_dim() {
        return Err(Error::dim("team optimum", spec.profile_dim(), u_star.len()));
    }
    let set = match &cfg.mask {
        Some(mask) => restrict_mediator_set(spec.mediator_set(), mask)?,
        None => spec.mediator_set().clone(),
    };
    if let StepSchedule::Fixed(eta) = cfg.schedule {
        if let Some(nu) = cfg.nu_psi {
            if !(eta < 2.0 / nu) {
                return Err(Error::InvalidParams(format!(
                    "fixed stepsize {eta} violates eta < 2/nu_psi = {}",
                    2.0 / nu
                )));
            }
        }
    }
    match cfg.schedule {
        StepSchedule::Diminishing(c) | StepSchedule::Fixed(c) if !(c > 0.0) || !c.is_finite() => {
            return Err(Error::InvalidParams(format!("stepsize constant must be positive, got {c}")));
        }
        _ => {}
    }
    let theta0 = cfg.theta0.clone().unwrap_or_else(|| DVector::zeros(d));
    if theta0.len() != d {
        return Err(Error::dim("initial adjustment", d, theta0.len()));
    }
    let mut theta = set.project(&theta0, PROJECTION_TOL)?.point;
    let mut inner = cfg.inner.clone();
    let mut hg = hypergradient(spec, &theta, u_star, &inner, u_star)?;
    let psi0 = hg.psi;
    let mut report = MediationReport {
        theta_final: Vec::new(),
        psi_trace: vec![hg.psi],
        grad_norms: vec![hg.omega.norm()],
        step_sizes: Vec::new(),
        inner_iterations: vec![hg.ne.iterations],
        criticality_residual: criticality(&set, &theta, &hg.omega)?,
        used_conservative_fallback: usize::from(hg.conservative),
        converged: false,
        outer_iterations: 0,
        final_gap: 0.0,
        final_ne: Vec::new(),
    };
    let mut k = 0;
    loop {
        if report.criticality_residual <= cfg.tol {
            report.converged = true;
            break;
        }
        if k >= cfg.max_outer_iter {
            break;
        }
        let eta = cfg.schedule.step(k);
        let prev_grad = hg.omega.norm();
        theta = set.project(&(&theta - &hg.omega * eta), PROJECTION_TOL)?.point;
        inner.tol = cfg.inner.tol.min(1e-2 * eta * prev_grad).max(INNER_TOL_FLOOR);
        let warm = hg.ne.point.clone();
        hg = hypergradient(spec, &theta, u_star, &inner, &warm)?;
        k += 1;
        report.step_sizes.push(eta);
        report.psi_trace.push(hg.psi);
        report.grad_norms.push(hg.omega.norm());
        report.inner_iterations.push(hg.ne.iterations);
        report.used_conservative_fallback += usize::from(hg.conservative);
        report.criticality_residual = criticality(&set, &theta, &hg.omega)?;
        if matches!(cfg.schedule, StepSchedule::Fixed(_)) && hg.psi > 10.0 * psi0 && hg.psi > 1e-300 {
            return Err(Error::Diverged {
                psi: hg.psi,
                initial: psi0,
            });
        }
        if !hg.psi.is_finite() {
            return Err(Error::Diverged {
                psi: hg.psi,
                initial: psi0,
            });
        }
    }
    report.outer_iterations = k;
    report.final_gap = (&hg.ne.point - u_star).norm();
    report.final_ne = hg.ne.point.iter().copied().collect();
    report.theta_final = theta.iter().copied().collect();
    Ok(report)
}

/// `θ_i = (α − α_i, 2β − β_i, γ − γ_i)`; requires `B_{ij,l} = B_{ji,l}ᵀ`.
pub fn closed_form_adjustment(spec: &ProblemSpec) -> Result<MediatorAdjustment> {
    let quad = spec.family().as_quadratic().ok_or(Error::UnsupportedFamily {
        op: "closed-form adjustment",
        family: spec.family().name(),
    })?;
    if !quad.has_transpose_symmetric_coupling(1e-12) {
        return Err(Error::Precondition(
            "closed-form adjustment needs transpose-symmetric coupling bases".into(),
        ));
    }
    let t = spec.team_params();
    let adj = MediatorAdjustment {
        blocks: spec
            .member_params()
            .iter()
            .map(|p| Params {
                alpha: &t.alpha - &p.alpha,
                beta: &t.beta * 2.0 - &p.beta,
                gamma: &t.gamma - &p.gamma,
            })
            .collect(),
    };
    let theta = adj.to_vector();
    let set = spec.mediator_set();
    let scale = 1.0 + theta.amax();
    let slack = set.slacks(&theta);
    if let Some((r, &s)) = slack
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < -1e-12 * scale)
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        return Err(Error::OutsideMediatorSet {
            constraint: r,
            violation: -s,
        });
    }
    let eq = set.eq_matrix() * &theta - set.eq_rhs();
    if let Some((r, &e)) = eq.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
        if e.abs() > 1e-12 * scale {
            return Err(Error::OutsideMediatorSet {
                constraint: set.num_ineq() + r,
                violation: e.abs(),
            });
        }
    }
    Ok(adj)
}

/// `u◇(θ) = Pθ + p` for equality-only strategy sets under γ-only adjustment.
#[derive(Clone, Debug)]
pub struct AffineNeMap {
    pub p: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// Columns of `p` index the Δγ coordinates only.
    pub gamma_only: bool,
}

impl AffineNeMap {
    /// Evaluates at a full stacked `θ`; only its Δγ coordinates enter.
    pub fn eval(&self, theta: &DVector<f64>, dims: ParamDims) -> DVector<f64> {
        let t = if self.gamma_only { gamma_coordinates(theta, dims) } else { theta.clone() };
        &self.p * t + &self.offset
    }
}

fn gamma_coordinates(theta: &DVector<f64>, dims: ParamDims) -> DVector<f64> {
    let d = dims.total();
    let members = theta.len() / d;
    DVector::from_fn(members * dims.gamma, |k, _| {
        let (i, l) = (k / dims.gamma, k % dims.gamma);
        theta[i * d + dims.alpha + dims.beta + l]
    })
}

/// Solves the stacked KKT system `[M Hᵀ; H 0]` of the manipulated game with
/// the Δγ right-hand side kept symbolic. With `gamma_only` the map's columns
/// are the Δγ coordinates; otherwise they follow the full `θ` stacking with
/// zero columns for Δα and Δβ.
pub fn extract_affine_ne_map(spec: &ProblemSpec, gamma_only: bool) -> Result<AffineNeMap> {
    let quad = spec.family().as_quadratic().ok_or(Error::UnsupportedFamily {
        op: "affine NE map",
        family: spec.family().name(),
    })?;
    if spec.feasible().iter().any(|p| p.num_ineq() > 0) {
        return Err(Error::Precondition(
            "affine NE map needs equality-only strategy sets".into(),
        ));
    }
    let n = spec.n();
    let members = spec.num_members();
    let nn = spec.profile_dim();
    let dims = spec.dims();
    let (m, c) = quad.game_operator(&spec.effective_params(&spec.zero_theta())?);
    let rows: Vec<usize> = spec.feasible().iter().map(|p| p.num_eq()).collect();
    let r: usize = rows.iter().sum();
    let mut kkt = DMatrix::zeros(nn + r, nn + r);
    kkt.view_mut((0, 0), (nn, nn)).copy_from(&m);
    let mut rhs_const = DVector::zeros(nn + r);
    rhs_const.rows_mut(0, nn).copy_from(&(-&c));
    let mut off = nn;
    for (i, p) in spec.feasible().iter().enumerate() {
        let h = p.eq_matrix();
        kkt.view_mut((off, i * n), (h.nrows(), n)).copy_from(h);
        kkt.view_mut((i * n, off), (n, h.nrows())).copy_from(&h.transpose());
        rhs_const.rows_mut(off, h.nrows()).copy_from(p.eq_rhs());
        off += h.nrows();
    }
    if linalg::rank(&kkt) < nn + r {
        return Err(Error::SingularKkt(
            "game operator is not definite on the constraint subspace".into(),
        ));
    }
    let mut rhs_theta = DMatrix::zeros(nn + r, members * dims.gamma);
    for i in 0..members {
        rhs_theta
            .view_mut((i * n, i * dims.gamma), (n, dims.gamma))
            .copy_from(&(-quad.gamma_map(i)));
    }
    let lu = kkt.lu();
    let sol_const = lu
        .solve(&rhs_const)
        .ok_or_else(|| Error::SingularKkt("LU factorization failed".into()))?;
    let sol_theta = lu
        .solve(&rhs_theta)
        .ok_or_else(|| Error::SingularKkt("LU factorization failed".into()))?;
    let pg = sol_theta.rows(0, nn).into_owned();
    let p = if gamma_only {
        pg
    } else {
        let d = dims.total();
        let mut full = DMatrix::zeros(nn, d * members);
        for i in 0..members {
            for l in 0..dims.gamma {
                full.set_column(i * d + dims.alpha + dims.beta + l, &pg.column(i * dims.gamma + l));
            }
        }
        full
    };
    Ok(AffineNeMap {
        p,
        offset: sol_const.rows(0, nn).into_owned(),
        gamma_only,
    })
}
