//! Parameterized team and member cost families.

mod field;
pub mod lqr;
mod params;
mod quadratic;
mod sinr;
mod traffic;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use field::{SinrField, VectorField};
pub use lqr::LqrSpec;
pub use params::{MediatorAdjustment, MemberParams, ParamDims, Params, TeamParams};
pub use quadratic::QuadraticFamily;
pub use sinr::{SinrFamily, DEFAULT_U_MIN};
pub use traffic::{TrafficFamily, TrafficParameterization};

use crate::error::{Error, Result};
use crate::linalg;
use crate::polyhedra::{Polyhedron, PROJECTION_TOL};

/// Default half-width of the mediator box used by the builders.
pub const DEFAULT_MEDIATOR_BOUND: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub enum CostFamily {
    Quadratic(QuadraticFamily),
    Traffic(TrafficFamily),
    Sinr(SinrFamily),
    LqrReduced { quad: QuadraticFamily, lqr: LqrSpec },
}

impl CostFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CostFamily::Quadratic(_) => "quadratic",
            CostFamily::Traffic(_) => "traffic",
            CostFamily::Sinr(_) => "sinr",
            CostFamily::LqrReduced { .. } => "lqr",
        }
    }

    /// The quadratic core of the quadratic-type families.
    pub fn as_quadratic(&self) -> Option<&QuadraticFamily> {
        match self {
            CostFamily::Quadratic(q) => Some(q),
            CostFamily::Traffic(t) => Some(t.as_quadratic()),
            CostFamily::LqrReduced { quad, .. } => Some(quad),
            CostFamily::Sinr(_) => None,
        }
    }

    pub fn dims(&self) -> ParamDims {
        match self.as_quadratic() {
            Some(q) => q.dims(),
            None => SinrFamily::dims(),
        }
    }

    pub fn n(&self) -> usize {
        self.as_quadratic().map_or(1, |q| q.n())
    }

    pub fn members(&self) -> usize {
        match self {
            CostFamily::Sinr(s) => s.members(),
            _ => self.as_quadratic().expect("quadratic-type").members(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    family: CostFamily,
    team: Params,
    members: Vec<Params>,
    feasible: Vec<Polyhedron>,
    mediator_set: Polyhedron,
}

impl ProblemSpec {
    pub fn new(
        family: CostFamily,
        team: Params,
        members: Vec<Params>,
        feasible: Vec<Polyhedron>,
        mediator_set: Polyhedron,
    ) -> Result<Self> {
        let dims = family.dims();
        let count = family.members();
        let n = family.n();
        team.check_dims(dims, "team")?;
        if members.len() != count {
            return Err(Error::dim("member parameter list", count, members.len()));
        }
        for (i, p) in members.iter().enumerate() {
            p.check_dims(dims, "member").map_err(|e| Error::Member {
                member: i,
                message: e.to_string(),
            })?;
        }
        if feasible.len() != count {
            return Err(Error::dim("feasible set list", count, feasible.len()));
        }
        for (i, p) in feasible.iter().enumerate() {
            if p.dim() != n {
                return Err(Error::Member {
                    member: i,
                    message: format!("feasible set has dimension {}, expected {n}", p.dim()),
                });
            }
        }
        if mediator_set.dim() != dims.total() * count {
            return Err(Error::dim("mediator set", dims.total() * count, mediator_set.dim()));
        }
        let spec = Self {
            family,
            team,
            members,
            feasible,
            mediator_set,
        };
        spec.check_own_cost_definite()?;
        Ok(spec)
    }

    /// Quadratic families: `Q_i(α)` and `Q_i(α_i)` must be positive definite.
    fn check_own_cost_definite(&self) -> Result<()> {
        let Some(q) = self.family.as_quadratic() else {
            return Ok(());
        };
        for i in 0..self.num_members() {
            for (who, alpha) in [("team", &self.team.alpha), ("member", &self.members[i].alpha)] {
                let m = q.q(i, alpha);
                let (lo, _) = linalg::sym_eig_extremes(&m);
                if !(lo > 0.0) {
                    return Err(Error::Member {
                        member: i,
                        message: format!(
                            "own-cost matrix under {who} parameters is not positive definite (smallest eigenvalue {lo:.3e})"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> &CostFamily {
        &self.family
    }
    pub fn team_params(&self) -> &Params {
        &self.team
    }
    pub fn member_params(&self) -> &[Params] {
        &self.members
    }
    pub fn feasible(&self) -> &[Polyhedron] {
        &self.feasible
    }
    pub fn mediator_set(&self) -> &Polyhedron {
        &self.mediator_set
    }
    pub fn num_members(&self) -> usize {
        self.family.members()
    }
    pub fn n(&self) -> usize {
        self.family.n()
    }
    pub fn dims(&self) -> ParamDims {
        self.family.dims()
    }
    pub fn profile_dim(&self) -> usize {
        self.n() * self.num_members()
    }
    pub fn theta_dim(&self) -> usize {
        self.dims().total() * self.num_members()
    }

    pub fn with_member_params(&self, members: Vec<Params>) -> Result<Self> {
        Self::new(
            self.family.clone(),
            self.team.clone(),
            members,
            self.feasible.clone(),
            self.mediator_set.clone(),
        )
    }

    pub fn with_team_params(&self, team: Params) -> Result<Self> {
        Self::new(
            self.family.clone(),
            team,
            self.members.clone(),
            self.feasible.clone(),
            self.mediator_set.clone(),
        )
    }

    pub fn with_mediator_set(&self, set: Polyhedron) -> Result<Self> {
        Self::new(
            self.family.clone(),
            self.team.clone(),
            self.members.clone(),
            self.feasible.clone(),
            set,
        )
    }

    fn check_profile(&self, u: &DVector<f64>) -> Result<()> {
        let expected = self.profile_dim();
        if u.len() == expected {
            return Ok(());
        }
        let n = self.n();
        let member = (u.len() / n.max(1)).min(self.num_members().saturating_sub(1));
        Err(Error::Member {
            member,
            message: format!(
                "profile has length {}, expected {expected} ({} members x {n})",
                u.len(),
                self.num_members()
            ),
        })
    }

    /// Member parameters after adjustment: `(α_i + Δα_i, β_i + Δβ_i, γ_i + Δγ_i)`.
    pub fn effective_params(&self, theta: &DVector<f64>) -> Result<Vec<Params>> {
        let adj = MediatorAdjustment::from_vector(theta, self.dims(), self.num_members())?;
        Ok(self
            .members
            .iter()
            .zip(&adj.blocks)
            .map(|(p, d)| p.plus(d))
            .collect())
    }

    pub fn zero_theta(&self) -> DVector<f64> {
        DVector::zeros(self.theta_dim())
    }

    /// `u ↦ G(u)`.
    pub fn team_field(&self) -> VectorField {
        match &self.family {
            CostFamily::Sinr(s) => s.team_field(&self.team),
            f => {
                let (m, c) = f.as_quadratic().expect("quadratic-type").team_operator(&self.team);
                VectorField::Affine { m, c }
            }
        }
    }

    /// `u ↦ F(θ, u)`.
    pub fn game_field(&self, theta: &DVector<f64>) -> Result<VectorField> {
        let eff = self.effective_params(theta)?;
        Ok(match &self.family {
            CostFamily::Sinr(s) => s.game_field(&eff),
            f => {
                let (m, c) = f.as_quadratic().expect("quadratic-type").game_operator(&eff);
                VectorField::Affine { m, c }
            }
        })
    }

    /// Per-member projection onto `Ξ = Π_i Ξ_i`.
    pub fn project_profile(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_profile(u)?;
        let n = self.n();
        let mut out = DVector::zeros(u.len());
        for (i, p) in self.feasible.iter().enumerate() {
            let r = p.project(&u.rows(i * n, n).into_owned(), PROJECTION_TOL)?;
            out.rows_mut(i * n, n).copy_from(&r.point);
        }
        Ok(out)
    }

    pub fn contains_profile(&self, u: &DVector<f64>, tol: f64) -> bool {
        let n = self.n();
        u.len() == self.profile_dim()
            && self
                .feasible
                .iter()
                .enumerate()
                .all(|(i, p)| p.contains(&u.rows(i * n, n).into_owned(), tol))
    }

    /// Random feasible profile: projection of a Gaussian point scaled by `spread`.
    pub fn sample_profile<R: Rng>(&self, rng: &mut R, spread: f64) -> Result<DVector<f64>> {
        let nn = self.profile_dim();
        let n = self.n();
        let mut x = DVector::zeros(nn);
        for (i, p) in self.feasible.iter().enumerate() {
            let mut block = DVector::from_fn(n, |_, _| spread * (rng.random::<f64>() * 2.0 - 1.0));
            if let Some((lo, hi)) = p.bounds() {
                if p.num_eq() == 0 {
                    for k in 0..n {
                        if lo[k].is_finite() && hi[k].is_finite() {
                            block[k] = lo[k] + rng.random::<f64>() * (hi[k] - lo[k]);
                        }
                    }
                }
            }
            x.rows_mut(i * n, n).copy_from(&block);
        }
        self.project_profile(&x)
    }
}

/// `𝒞(u)`.
pub fn eval_team_cost(spec: &ProblemSpec, u: &DVector<f64>) -> Result<f64> {
    spec.check_profile(u)?;
    Ok(match &spec.family {
        CostFamily::Sinr(s) => s.team_cost(&spec.team, u),
        f => f.as_quadratic().expect("quadratic-type").team_cost(&spec.team, u),
    })
}

/// `𝒞_i(θ_i, u)` with the member's parameters shifted by `θ_i`.
pub fn eval_member_cost(spec: &ProblemSpec, i: usize, theta_i: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    let count = spec.num_members();
    if i >= count {
        return Err(Error::MemberIndex { index: i, count });
    }
    spec.check_profile(u)?;
    let delta = Params::from_stacked(theta_i.as_slice(), spec.dims())?;
    let p = spec.members[i].plus(&delta);
    Ok(match &spec.family {
        CostFamily::Sinr(s) => s.member_cost(i, &p, u),
        f => f.as_quadratic().expect("quadratic-type").member_cost(i, &p, u),
    })
}

/// `G(u) = col{∇_{u_i} 𝒞(u)}`.
pub fn grad_team(spec: &ProblemSpec, u: &DVector<f64>) -> Result<DVector<f64>> {
    spec.check_profile(u)?;
    Ok(spec.team_field().eval(u))
}

/// `F(θ, u) = col{∇_{u_i} 𝒞_i(θ_i, u)}`.
pub fn pseudo_grad(spec: &ProblemSpec, theta: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    spec.check_profile(u)?;
    Ok(spec.game_field(theta)?.eval(u))
}

/// `(J_u F(θ, u), J_θ F(θ, u))`.
pub fn jacobians_of_f(
    spec: &ProblemSpec,
    theta: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.check_profile(u)?;
    let field = spec.game_field(theta)?;
    Ok((field.jacobian(u), theta_jacobian(spec, u)))
}

/// `J_θ F(θ, u)`; independent of `θ` for every implemented family.
pub fn theta_jacobian(spec: &ProblemSpec, u: &DVector<f64>) -> DMatrix<f64> {
    match &spec.family {
        CostFamily::Sinr(s) => s.theta_jacobian(u),
        f => f.as_quadratic().expect("quadratic-type").theta_jacobian(u),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessConstants {
    pub kappa1: f64,
    pub nu1: f64,
    pub kappa2: f64,
    pub nu2: f64,
    /// Lipschitz constant of `u ↦ J_θ F`.
    pub nu_theta: f64,
    /// Lipschitz constant of `u ↦ J_u F`; exactly 0 for quadratic families.
    pub nu_u: f64,
    /// Exact (quadratic families) rather than sampled.
    pub certified: bool,
}

/// Monotonicity and Lipschitz constants `(κ, ν)` of a single field. Exact for
/// affine fields; otherwise sampled over `samples` random feasible pairs.
pub fn field_constants(
    spec: &ProblemSpec,
    field: &VectorField,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64, bool)> {
    match field {
        VectorField::Affine { m, .. } => {
            let (lo, _) = linalg::sym_eig_extremes(m);
            Ok((lo, linalg::spectral_norm(m), true))
        }
        VectorField::Sinr(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut kappa = f64::INFINITY;
            let mut nu: f64 = 0.0;
            for _ in 0..samples.max(1) {
                let x = spec.sample_profile(&mut rng, 1.0)?;
                let y = spec.sample_profile(&mut rng, 1.0)?;
                let d = &x - &y;
                let dn2 = d.norm_squared();
                if dn2 < 1e-24 {
                    continue;
                }
                let df = field.eval(&x) - field.eval(&y);
                kappa = kappa.min(df.dot(&d) / dn2);
                nu = nu.max(df.norm() / dn2.sqrt());
            }
            Ok((kappa, nu, false))
        }
    }
}

/// Sampling budget used by [`estimate_constants`] for non-quadratic families.
pub const DEFAULT_CONSTANT_SAMPLES: usize = 2000;

/// `κ1, ν1` of `G` and `κ2, ν2` of `F(θ, ·)`; errors when either map fails to
/// be strongly monotone.
pub fn estimate_constants(spec: &ProblemSpec, theta: &DVector<f64>) -> Result<SmoothnessConstants> {
    let (k1, n1, c1) = field_constants(spec, &spec.team_field(), DEFAULT_CONSTANT_SAMPLES, 11)?;
    if !(k1 > 0.0) {
        return Err(Error::NonMonotone {
            map: "team gradient G",
            eigenvalue: k1,
        });
    }
    let game = spec.game_field(theta)?;
    let (k2, n2, c2) = field_constants(spec, &game, DEFAULT_CONSTANT_SAMPLES, 12)?;
    if !(k2 > 0.0) {
        return Err(Error::NonMonotone {
            map: "pseudo-gradient F",
            eigenvalue: k2,
        });
    }
    let (nu_theta, nu_u) = match spec.family.as_quadratic() {
        Some(q) => (q.theta_jacobian_lipschitz(), 0.0),
        None => sampled_jacobian_lipschitz(spec, &game)?,
    };
    Ok(SmoothnessConstants {
        kappa1: k1,
        nu1: n1,
        kappa2: k2,
        nu2: n2,
        nu_theta,
        nu_u,
        certified: c1 && c2,
    })
}

fn sampled_jacobian_lipschitz(spec: &ProblemSpec, game: &VectorField) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut nt, mut nu): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let x = spec.sample_profile(&mut rng, 1.0)?;
        let y = spec.sample_profile(&mut rng, 1.0)?;
        let d = (&x - &y).norm();
        if d < 1e-12 {
            continue;
        }
        nt = nt.max(linalg::spectral_norm(&(theta_jacobian(spec, &x) - theta_jacobian(spec, &y))) / d);
        nu = nu.max(linalg::spectral_norm(&(game.jacobian(&x) - game.jacobian(&y))) / d);
    }
    Ok((nt, nu))
}

/// One-shot quadratic problem from a finite-horizon LQR. Members start with
/// the team's preferences; feasible sets are `|u_{i,t}| ≤ u_bound`.
pub fn build_lqr_reduction(lqr: &LqrSpec) -> Result<ProblemSpec> {
    let quad = lqr::reduce(lqr)?;
    let team = lqr::reduced_team_params(lqr);
    let members = vec![team.clone(); lqr.members()];
    let t = lqr.horizon;
    let feasible = vec![Polyhedron::uniform_box(t, -lqr.u_bound, lqr.u_bound); lqr.members()];
    let d = quad.dims().total() * lqr.members();
    ProblemSpec::new(
        CostFamily::LqrReduced {
            quad,
            lqr: lqr.clone(),
        },
        team,
        members,
        feasible,
        Polyhedron::uniform_box(d, -DEFAULT_MEDIATOR_BOUND, DEFAULT_MEDIATOR_BOUND),
    )
}
