//! Seeded random instance generators shared by tests, benches and the CLI.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    estimate_constants, CostFamily, Params, ProblemSpec, QuadraticFamily, DEFAULT_MEDIATOR_BOUND,
};
use crate::polyhedra::Polyhedron;

pub fn random_spd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

pub fn random_sym<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
    (&a + a.transpose()) * 0.5
}

/// How each member's strategy set is shaped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SetShape {
    /// `[-h, h]^n`.
    Box(f64),
    /// `{1ᵀu = 1}` without bounds.
    Hyperplane,
    /// `{1ᵀu = 1, lo ≤ u ≤ hi}`.
    BoundedHyperplane(f64, f64),
}

fn member_set(shape: SetShape, n: usize) -> Result<Polyhedron> {
    let ones = DMatrix::from_element(1, n, 1.0);
    let one = DVector::from_element(1, 1.0);
    match shape {
        SetShape::Box(h) => Ok(Polyhedron::uniform_box(n, -h, h)),
        SetShape::Hyperplane => Polyhedron::affine(ones, one),
        SetShape::BoundedHyperplane(lo, hi) => Polyhedron::bounds_and_equalities(
            DVector::from_element(n, lo),
            DVector::from_element(n, hi),
            ones,
            one,
        ),
    }
}

/// Quadratic game with two own-cost bases, one symmetric coupling basis
/// (`B_ij = B_ji`) and a random positive column for `L_i`. Redraws until both
/// `G` and `F(0, ·)` are strongly monotone, so the returned instance has
/// certified constants.
pub fn random_quadratic_game(seed: u64, members: usize, n: usize, shape: SetShape) -> Result<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let spec = draw_quadratic(&mut rng, members, n, shape)?;
        if estimate_constants(&spec, &spec.zero_theta()).is_ok() {
            return Ok(spec);
        }
    }
}

fn draw_quadratic(rng: &mut ChaCha8Rng, members: usize, n: usize, shape: SetShape) -> Result<ProblemSpec> {
    let q: Vec<Vec<DMatrix<f64>>> = (0..members)
        .map(|_| vec![random_spd(rng, n, 0.5), random_spd(rng, n, 0.2)])
        .collect();
    let mut b = vec![vec![Vec::new(); members]; members];
    for i in 0..members {
        for j in (i + 1)..members {
            let m = random_sym(rng, n, 0.6 / members as f64);
            b[i][j] = vec![m.clone()];
            b[j][i] = vec![m];
        }
    }
    let l = (0..members)
        .map(|_| DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.5..1.5)))
        .collect();
    let fam = QuadraticFamily::new(q, b, l)?;
    let team = Params::new(
        &[rng.random_range(1.0..3.0), rng.random_range(0.5..1.5)],
        &[rng.random_range(0.0..1.0)],
        &[rng.random_range(-3.0..3.0)],
    );
    let mems = (0..members)
        .map(|_| {
            Params::new(
                &[rng.random_range(0.5..3.0), rng.random_range(0.5..2.0)],
                &[rng.random_range(0.0..1.5)],
                &[rng.random_range(-3.0..3.0)],
            )
        })
        .collect();
    let d = fam.dims().total() * members;
    ProblemSpec::new(
        CostFamily::Quadratic(fam),
        team,
        mems,
        (0..members).map(|_| member_set(shape, n)).collect::<Result<_>>()?,
        Polyhedron::uniform_box(d, -DEFAULT_MEDIATOR_BOUND, DEFAULT_MEDIATOR_BOUND),
    )
}

/// Scalar-decision game `𝒞_i = q_i u_i² + b u_i Σ_{j≠i} u_j + γ_i u_i` over
/// `[lo, hi]` boxes, with the team using `(α, β, γ) = (1, b_team, γ_team)`.
pub fn scalar_game(
    q: &[f64],
    coupling: f64,
    gamma: &[f64],
    team: (f64, f64),
    lo: f64,
    hi: f64,
) -> Result<ProblemSpec> {
    let members = q.len();
    let fam = QuadraticFamily::new(
        q.iter().map(|&qi| vec![DMatrix::from_element(1, 1, qi)]).collect(),
        (0..members)
            .map(|i| {
                (0..members)
                    .map(|j| if i == j { Vec::new() } else { vec![DMatrix::from_element(1, 1, 1.0)] })
                    .collect()
            })
            .collect(),
        vec![DMatrix::from_element(1, 1, 1.0); members],
    )?
    .with_beta_dim(1);
    let d = 3 * members;
    ProblemSpec::new(
        CostFamily::Quadratic(fam),
        Params::new(&[1.0], &[team.0], &[team.1]),
        gamma.iter().map(|&g| Params::new(&[1.0], &[coupling], &[g])).collect(),
        vec![Polyhedron::uniform_box(1, lo, hi); members],
        Polyhedron::uniform_box(d, -DEFAULT_MEDIATOR_BOUND, DEFAULT_MEDIATOR_BOUND),
    )
}
