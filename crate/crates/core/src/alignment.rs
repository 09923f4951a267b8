//! Consistency certificates between the NE and the team optimum, the
//! deviation bound, and Hausdorff distances between finite point sets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, CostFamily, ProblemSpec, SmoothnessConstants, VectorField};
use crate::polyhedra::{Polyhedron, PROJECTION_TOL, STRICT_COMPLEMENTARITY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ConsistentByIdentity,
    ConsistentByPotential,
    ConsistentByTheorem1,
    ConsistentByCorollary2,
    Inconsistent,
    Inconclusive,
}

impl Verdict {
    pub fn is_consistent(self) -> bool {
        !matches!(self, Verdict::Inconsistent | Verdict::Inconclusive)
    }

    /// Binary consistency indicator; `Inconclusive` counts as 0.
    pub fn cr(self) -> u8 {
        u8::from(self.is_consistent())
    }
}

/// Sign test form: `∇𝒞·∇𝒞_i > 0` everywhere on the grid, or only `≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InequalityForm {
    Strict,
    NonStrict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberEvidence {
    /// Team partial derivative vanishes at the equilibrium.
    ZeroGradient { team_derivative: f64 },
    /// Team and member derivatives agree in sign on the whole grid.
    SignAgreement {
        delta: f64,
        grid_points: usize,
        form: InequalityForm,
        min_product: f64,
    },
    /// First-order conditions of both costs hold on the local feasible cone.
    ConeCondition {
        team_residual: f64,
        member_residual: f64,
        sampled_directions: usize,
    },
    /// The potential condition held; no per-member test was needed.
    Aligned,
    Violation {
        witness: Vec<f64>,
        team_value: f64,
        member_value: f64,
        delta: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyVerdict {
    pub verdict: Verdict,
    pub members: Vec<MemberEvidence>,
    pub tol_grad: f64,
    /// Radius of the neighbourhood per member after any shrinking.
    pub delta_used: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialCheck {
    pub holds: bool,
    /// Largest `‖∇_{u_i}𝒞_i − ∇_{u_i}𝒞‖` over samples and members.
    pub max_violation: f64,
    /// Quadratic-type families: `F(θ, ·)` and `G` coincide as affine maps.
    pub operators_match: Option<bool>,
    /// Quadratic-type families: adjusted parameters equal `(α, 2β, γ)`.
    pub parameter_blocks_match: Option<bool>,
    pub samples: usize,
}

pub const POTENTIAL_TOL: f64 = 1e-10;

/// Samples profiles over `Ξ` and compares the pseudo-gradient with the team gradient.
pub fn check_potential_condition(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    sample_budget: usize,
    seed: u64,
) -> Result<PotentialCheck> {
    let team = spec.team_field();
    let game = spec.game_field(theta)?;
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for _ in 0..sample_budget.max(1) {
        let u = spec.sample_profile(&mut rng, 10.0)?;
        let g = team.eval(&u);
        let f = game.eval(&u);
        scale = scale.max(g.amax());
        for i in 0..spec.num_members() {
            worst = worst.max((f.rows(i * n, n) - g.rows(i * n, n)).norm());
        }
    }
    let (operators_match, parameter_blocks_match) = match (&team, &game) {
        (VectorField::Affine { m: mg, c: cg }, VectorField::Affine { m: mf, c: cf }) => {
            let s = 1.0 + mg.amax() + cg.amax();
            let ops = (mg - mf).amax() <= 1e-14 * s && (cg - cf).amax() <= 1e-14 * s;
            let t = spec.team_params();
            let eff = spec.effective_params(theta)?;
            let close = |a: &DVector<f64>, b: &DVector<f64>| (a - b).amax() <= 1e-14 * (1.0 + a.amax());
            let symmetric = spec
                .family()
                .as_quadratic()
                .is_some_and(|q| q.has_transpose_symmetric_coupling(0.0));
            let blocks = symmetric
                && eff.iter().all(|p| {
                    close(&p.alpha, &t.alpha) && close(&p.beta, &(&t.beta * 2.0)) && close(&p.gamma, &t.gamma)
                });
            (Some(ops), Some(blocks))
        }
        _ => (None, None),
    };
    Ok(PotentialCheck {
        holds: worst <= POTENTIAL_TOL * (1.0 + scale),
        max_violation: worst,
        operators_match,
        parameter_blocks_match,
        samples: sample_budget.max(1),
    })
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Neighbourhood radius; default `1e-3·(1 + |u_i◇|)` per member.
    pub delta: Option<f64>,
    pub grid_k: usize,
    /// Zero-gradient tolerance; default `1e-7·(1 + ‖G(u◇)‖)`.
    pub tol_grad: Option<f64>,
    /// Random feasible directions sampled per member in the multi-dimensional test.
    pub direction_budget: usize,
    pub shrink_attempts: usize,
    pub seed: u64,
    /// Fixed-point residual accepted as "is an equilibrium".
    pub ne_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            delta: None,
            grid_k: 101,
            tol_grad: None,
            direction_budget: 64,
            shrink_attempts: 3,
            seed: 0,
            ne_tol: 1e-7,
        }
    }
}

fn require_ne(spec: &ProblemSpec, theta: &DVector<f64>, ne: &DVector<f64>, tol: f64) -> Result<VectorField> {
    if ne.len() != spec.profile_dim() {
        return Err(Error::dim("equilibrium profile", spec.profile_dim(), ne.len()));
    }
    let game = spec.game_field(theta)?;
    let r = (ne - spec.project_profile(&(ne - game.eval(ne)))?).norm();
    if r > tol * (1.0 + ne.norm()) {
        return Err(Error::Precondition(format!(
            "profile is not an equilibrium (fixed-point residual {r:.3e})"
        )));
    }
    Ok(game)
}

/// Interval `[lo, hi]` described by a one-dimensional polyhedron.
fn interval(p: &Polyhedron) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let d = p.ineq_matrix();
    let b = p.ineq_rhs();
    for r in 0..d.nrows() {
        let a = d[(r, 0)];
        if a > 0.0 {
            hi = hi.min(b[r] / a);
        } else if a < 0.0 {
            lo = lo.max(b[r] / a);
        }
    }
    let h = p.eq_matrix();
    for r in 0..h.nrows() {
        if h[(r, 0)] != 0.0 {
            let x = p.eq_rhs()[r] / h[(r, 0)];
            lo = lo.max(x);
            hi = hi.min(x);
        }
    }
    (lo, hi)
}

/// Per-member branch test for scalar decisions: a vanishing team derivative,
/// or sign agreement of team and member derivatives on a grid over
/// `δ(u_i◇) ∩ rint Ξ_i`.
pub fn check_consistency_1d(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    ne: &DVector<f64>,
    opts: &CheckOptions,
) -> Result<ConsistencyVerdict> {
    if spec.n() != 1 {
        return Err(Error::Precondition(format!(
            "scalar-decision check needs n = 1, got n = {}",
            spec.n()
        )));
    }
    let game = require_ne(spec, theta, ne, opts.ne_tol)?;
    let team = spec.team_field();
    let g0 = team.eval(ne);
    let tol_grad = opts.tol_grad.unwrap_or(1e-7 * (1.0 + g0.norm()));
    let mut members = Vec::with_capacity(spec.num_members());
    let mut deltas = Vec::with_capacity(spec.num_members());
    let mut all_ok = true;
    for (i, p) in spec.feasible().iter().enumerate() {
        let ui = ne[i];
        if g0[i].abs() <= tol_grad {
            members.push(MemberEvidence::ZeroGradient {
                team_derivative: g0[i],
            });
            deltas.push(0.0);
            continue;
        }
        let (lo, hi) = interval(p);
        let mut delta = opts.delta.unwrap_or(1e-3 * (1.0 + ui.abs()));
        let mut outcome = None;
        for _ in 0..=opts.shrink_attempts {
            let res = sign_grid(&team, &game, ne, i, lo, hi, delta, opts.grid_k.max(2), tol_grad);
            match res {
                GridOutcome::Agree { points, form, min_product } => {
                    outcome = Some(MemberEvidence::SignAgreement {
                        delta,
                        grid_points: points,
                        form,
                        min_product,
                    });
                    break;
                }
                GridOutcome::Violated { .. } => {
                    outcome = Some(res.into_evidence(delta));
                    delta *= 0.1;
                }
            }
        }
        let ev = outcome.expect("at least one attempt");
        if let MemberEvidence::Violation { delta: d, .. } = &ev {
            delta = *d;
            all_ok = false;
        }
        deltas.push(delta);
        members.push(ev);
    }
    Ok(ConsistencyVerdict {
        verdict: if all_ok {
            Verdict::ConsistentByTheorem1
        } else {
            Verdict::Inconsistent
        },
        members,
        tol_grad,
        delta_used: deltas,
    })
}

enum GridOutcome {
    Agree {
        points: usize,
        form: InequalityForm,
        min_product: f64,
    },
    Violated {
        x: f64,
        g: f64,
        f: f64,
    },
}

impl GridOutcome {
    fn into_evidence(self, delta: f64) -> MemberEvidence {
        match self {
            GridOutcome::Violated { x, g, f } => MemberEvidence::Violation {
                witness: vec![x],
                team_value: g,
                member_value: f,
                delta,
            },
            GridOutcome::Agree { .. } => unreachable!(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sign_grid(
    team: &VectorField,
    game: &VectorField,
    ne: &DVector<f64>,
    i: usize,
    lo: f64,
    hi: f64,
    delta: f64,
    k: usize,
    tol_grad: f64,
) -> GridOutcome {
    let a = (ne[i] - delta).max(lo);
    let b = (ne[i] + delta).min(hi);
    let mut u = ne.clone();
    let mut points = 0;
    let mut form = InequalityForm::Strict;
    let mut min_product = f64::INFINITY;
    for s in 0..k {
        let x = a + (b - a) * s as f64 / (k - 1) as f64;
        // relative interior only
        if x <= lo || x >= hi {
            continue;
        }
        u[i] = x;
        let g = team.eval(&u)[i];
        let f = game.eval(&u)[i];
        points += 1;
        min_product = min_product.min(g * f);
        if g.abs() <= tol_grad || f.abs() <= tol_grad {
            form = InequalityForm::NonStrict;
        } else if g.signum() != f.signum() {
            return GridOutcome::Violated { x, g, f };
        }
    }
    GridOutcome::Agree {
        points,
        form,
        min_product,
    }
}

/// Local feasible cone `{d : D_A d ≤ 0, H d = 0}` at `x` with tight rows `A`.
fn tangent_cone(p: &Polyhedron, x: &DVector<f64>) -> Result<Polyhedron> {
    let slack = p.slacks(x);
    let scale = 1.0 + x.amax();
    let rows: Vec<usize> = (0..p.num_ineq())
        .filter(|&r| slack[r] <= STRICT_COMPLEMENTARITY * scale)
        .collect();
    let n = p.dim();
    let d = DMatrix::from_fn(rows.len(), n, |r, c| p.ineq_matrix()[(rows[r], c)]);
    Polyhedron::new(
        d,
        DVector::zeros(rows.len()),
        p.eq_matrix().clone(),
        DVector::zeros(p.num_eq()),
    )
}

/// First-order inequalities of both costs over `δ(u_i◇) ∩ Ξ_i`, tested
/// exactly on the polyhedral tangent cone (via the projection of `−∇` onto
/// it) and additionally on sampled feasible points.
pub fn check_consistency_multidim(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    ne: &DVector<f64>,
    opts: &CheckOptions,
) -> Result<ConsistencyVerdict> {
    let game = require_ne(spec, theta, ne, opts.ne_tol)?;
    let team = spec.team_field();
    let n = spec.n();
    let g0 = team.eval(ne);
    let f0 = game.eval(ne);
    let tol_grad = opts.tol_grad.unwrap_or(1e-7 * (1.0 + g0.norm()));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut members = Vec::new();
    let mut deltas = Vec::new();
    let mut all_ok = true;
    for (i, p) in spec.feasible().iter().enumerate() {
        let ui = ne.rows(i * n, n).into_owned();
        let delta = opts.delta.unwrap_or(1e-3 * (1.0 + ui.norm()));
        deltas.push(delta);
        let cone = tangent_cone(p, &ui)?;
        let gi = g0.rows(i * n, n).into_owned();
        let fi = f0.rows(i * n, n).into_owned();
        let dg = cone.project(&(-&gi), PROJECTION_TOL)?.point;
        let df = cone.project(&(-&fi), PROJECTION_TOL)?.point;
        let (team_res, member_res) = (dg.norm(), df.norm());
        if team_res > tol_grad || member_res > tol_grad {
            // steepest feasible descent direction of the violated cost
            let dir = if team_res > tol_grad { &dg } else { &df };
            let step = feasible_step(p, &ui, dir, delta)?;
            let w = &ui + dir * step;
            let mut u = ne.clone();
            u.rows_mut(i * n, n).copy_from(&w);
            let diff = &w - &ui;
            members.push(MemberEvidence::Violation {
                witness: w.iter().copied().collect(),
                team_value: diff.dot(&team.eval(&u).rows(i * n, n)),
                member_value: diff.dot(&game.eval(&u).rows(i * n, n)),
                delta,
            });
            all_ok = false;
            continue;
        }
        // sampled neighbourhood points
        let mut sampled = 0;
        let mut witness = None;
        for _ in 0..opts.direction_budget {
            let raw = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let target = &ui + raw * (delta / (n as f64).sqrt());
            let w = p.project(&target, PROJECTION_TOL)?.point;
            let diff = &w - &ui;
            if diff.norm() < 1e-14 {
                continue;
            }
            sampled += 1;
            let mut u = ne.clone();
            u.rows_mut(i * n, n).copy_from(&w);
            let tv = diff.dot(&team.eval(&u).rows(i * n, n));
            let mv = diff.dot(&game.eval(&u).rows(i * n, n));
            let slack = tol_grad * diff.norm();
            if tv < -slack || mv < -slack {
                witness = Some((w, tv, mv));
                break;
            }
        }
        match witness {
            Some((w, tv, mv)) => {
                members.push(MemberEvidence::Violation {
                    witness: w.iter().copied().collect(),
                    team_value: tv,
                    member_value: mv,
                    delta,
                });
                all_ok = false;
            }
            None => members.push(MemberEvidence::ConeCondition {
                team_residual: team_res,
                member_residual: member_res,
                sampled_directions: sampled,
            }),
        }
    }
    // First-order conditions certify optimality only for a convex team cost.
    let convex = family_is_convex(spec);
    Ok(ConsistencyVerdict {
        verdict: match (all_ok, convex) {
            (false, _) => Verdict::Inconsistent,
            (true, true) => Verdict::ConsistentByCorollary2,
            (true, false) => Verdict::Inconclusive,
        },
        members,
        tol_grad,
        delta_used: deltas,
    })
}

/// Largest `t ≤ δ/‖d‖` with `x + t d` feasible.
fn feasible_step(p: &Polyhedron, x: &DVector<f64>, d: &DVector<f64>, delta: f64) -> Result<f64> {
    let mut t = delta / d.norm().max(f64::MIN_POSITIVE);
    let slack = p.slacks(x);
    let rate = p.ineq_matrix() * d;
    for r in 0..p.num_ineq() {
        if rate[r] > 0.0 {
            t = t.min(slack[r].max(0.0) / rate[r]);
        }
    }
    Ok(t)
}

/// Identity, then the potential test, then the scalar or multi-dimensional route.
pub fn certify(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    ne: &DVector<f64>,
    opts: &CheckOptions,
) -> Result<ConsistencyVerdict> {
    let game = require_ne(spec, theta, ne, opts.ne_tol)?;
    let g0 = spec.team_field().eval(ne);
    let tol_grad = opts.tol_grad.unwrap_or(1e-7 * (1.0 + g0.norm()));
    let pot = check_potential_condition(spec, theta, 200, opts.seed)?;
    let aligned = |verdict| ConsistencyVerdict {
        verdict,
        members: vec![MemberEvidence::Aligned; spec.num_members()],
        tol_grad,
        delta_used: vec![0.0; spec.num_members()],
    };
    if pot.operators_match == Some(true) {
        return Ok(aligned(Verdict::ConsistentByIdentity));
    }
    if pot.holds && matches!(game, VectorField::Affine { .. }) {
        return Ok(aligned(Verdict::ConsistentByPotential));
    }
    if spec.n() == 1 {
        check_consistency_1d(spec, theta, ne, opts)
    } else {
        check_consistency_multidim(spec, theta, ne, opts)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationCertificate {
    /// `‖F(θ, u◇) − G(u◇)‖`.
    pub gap_norm: f64,
    pub kappa1: f64,
    pub nu1: f64,
    /// `(ν1 + 1)/κ1 · gap_norm`.
    pub bound: f64,
    /// `‖u◇ − u*‖` when the team optimum was supplied.
    pub actual_gap: Option<f64>,
    pub closeness_ratio: f64,
    pub certified: bool,
    /// `actual_gap ≤ bound + 1e-8`, when `actual_gap` is known.
    pub bound_holds: Option<bool>,
}

pub fn closeness_ratio(bound: f64) -> f64 {
    1.0 / (1.0 + bound)
}

pub fn deviation_bound(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    ne: &DVector<f64>,
    constants: &SmoothnessConstants,
    u_star: Option<&DVector<f64>>,
) -> Result<DeviationCertificate> {
    if !(constants.kappa1 > 0.0) {
        return Err(Error::VacuousBound(constants.kappa1));
    }
    let gap_norm = (model::pseudo_grad(spec, theta, ne)? - model::grad_team(spec, ne)?).norm();
    let bound = (constants.nu1 + 1.0) / constants.kappa1 * gap_norm;
    let actual_gap = u_star.map(|s| (ne - s).norm());
    Ok(DeviationCertificate {
        gap_norm,
        kappa1: constants.kappa1,
        nu1: constants.nu1,
        bound,
        actual_gap,
        closeness_ratio: closeness_ratio(bound),
        certified: constants.certified,
        bound_holds: actual_gap.map(|g| g <= bound + 1e-8),
    })
}

/// Exact Hausdorff distance between finite point sets.
pub fn hausdorff(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let directed = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Non-convex families give only necessary first-order evidence.
fn family_is_convex(spec: &ProblemSpec) -> bool {
    !matches!(spec.family(), CostFamily::Sinr(_))
}

#[cfg(test)]
mod tests;
