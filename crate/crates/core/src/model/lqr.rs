//! Finite-horizon LQR with scalar inputs per member, rewritten as a one-shot
//! quadratic game over the stacked input sequences `u_i ∈ ℝᵀ`.
//!
//! With `X = (x_0, …, x_T) = Φ x_0 + Σ_i Γ_i u_i` and
//! `Q̄(α̃) = blockdiag(Q(α̃), …, Q(α̃), Q_f(α̃))`, the stacked cost is
//!
//! ```text
//! Σ_i u_iᵀ(Γ_iᵀQ̄Γ_i + R_i)u_i + Σ_{i≠j} u_iᵀΓ_iᵀQ̄Γ_j u_j + 2 Σ_i u_iᵀΓ_iᵀQ̄Φx_0 + x_0ᵀΦᵀQ̄Φx_0
//! ```
//!
//! Reduced parameter view: `α = (α̃, β̃)` drives `Q_i`, `β = α̃` drives the
//! couplings `B_ij = Γ_iᵀQ̄Γ_j`, and `γ = x_0` enters through
//! `L_i = 2Γ_iᵀQ̄(α̃_team)Φ`, frozen at the team's state weights.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::quadratic::QuadraticFamily;
use crate::error::{Error, Result};
use crate::linalg::block_diag;

#[derive(Clone, Debug, PartialEq)]
pub struct LqrSpec {
    pub a: DMatrix<f64>,
    /// Input column of each member.
    pub b: Vec<DVector<f64>>,
    /// Stage weight basis: `Q(α̃) = Σ_l q_basis[l] α̃_l`.
    pub q_basis: Vec<DMatrix<f64>>,
    /// Terminal weight basis, same length as `q_basis`.
    pub qf_basis: Vec<DMatrix<f64>>,
    /// `R_i(β̃) = Σ_l r_basis[i][l] β̃_l` (scalar inputs).
    pub r_basis: Vec<Vec<f64>>,
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub alpha_tilde: DVector<f64>,
    pub beta_tilde: DVector<f64>,
    /// Input bound `|u_{i,t}| ≤ u_bound` defining the feasible boxes.
    pub u_bound: f64,
}

impl LqrSpec {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn members(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.state_dim();
        if self.a.ncols() != p {
            return Err(Error::dim("state matrix columns", p, self.a.ncols()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        if self.b.is_empty() {
            return Err(Error::InvalidParams("at least one member is required".into()));
        }
        for (i, bi) in self.b.iter().enumerate() {
            if bi.len() != p {
                return Err(Error::Member {
                    member: i,
                    message: format!("input column has length {}, expected {p}", bi.len()),
                });
            }
        }
        if self.x0.len() != p {
            return Err(Error::dim("initial state", p, self.x0.len()));
        }
        if self.qf_basis.len() != self.q_basis.len() {
            return Err(Error::dim("terminal weight basis", self.q_basis.len(), self.qf_basis.len()));
        }
        if self.alpha_tilde.len() != self.q_basis.len() {
            return Err(Error::dim("state weight parameters", self.q_basis.len(), self.alpha_tilde.len()));
        }
        for m in self.q_basis.iter().chain(&self.qf_basis) {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::InvalidParams(format!("state weight basis must be {p}x{p}")));
            }
        }
        if self.r_basis.len() != self.members() {
            return Err(Error::dim("input weight bases", self.members(), self.r_basis.len()));
        }
        for (i, r) in self.r_basis.iter().enumerate() {
            if r.len() != self.beta_tilde.len() {
                return Err(Error::Member {
                    member: i,
                    message: format!(
                        "input weight basis has {} entries, expected {}",
                        r.len(),
                        self.beta_tilde.len()
                    ),
                });
            }
        }
        let (q, qf) = self.state_weights(&self.alpha_tilde);
        for (name, w) in [("stage", &q), ("terminal", &qf)] {
            if (w - w.transpose()).amax() > 1e-12 * (1.0 + w.amax()) {
                return Err(Error::InvalidParams(format!("{name} weight is not symmetric")));
            }
            if crate::linalg::sym_eig_extremes(w).0 < -1e-12 {
                return Err(Error::InvalidParams(format!("{name} weight is not positive semidefinite")));
            }
        }
        for i in 0..self.members() {
            let r = self.input_weight(i, &self.beta_tilde);
            if !(r > 0.0) {
                return Err(Error::Member {
                    member: i,
                    message: format!("input weight must be positive, got {r}"),
                });
            }
        }
        if !(self.u_bound > 0.0) {
            return Err(Error::InvalidParams("input bound must be positive".into()));
        }
        Ok(())
    }

    pub fn state_weights(&self, alpha_tilde: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = self.state_dim();
        let mut q = DMatrix::zeros(p, p);
        let mut qf = DMatrix::zeros(p, p);
        for (l, &a) in alpha_tilde.iter().enumerate() {
            q += &self.q_basis[l] * a;
            qf += &self.qf_basis[l] * a;
        }
        (q, qf)
    }

    pub fn input_weight(&self, i: usize, beta_tilde: &DVector<f64>) -> f64 {
        self.r_basis[i].iter().zip(beta_tilde.iter()).map(|(r, b)| r * b).sum()
    }

    /// `Φ` with block row `t` equal to `Aᵗ`.
    pub fn free_response(&self) -> DMatrix<f64> {
        let p = self.state_dim();
        let t = self.horizon;
        let mut phi = DMatrix::zeros((t + 1) * p, p);
        let mut pow = DMatrix::identity(p, p);
        for k in 0..=t {
            phi.view_mut((k * p, 0), (p, p)).copy_from(&pow);
            pow = &self.a * pow;
        }
        phi
    }

    /// `Γ_i` with block `(t, s) = A^{t−1−s} b_i` for `s < t`.
    pub fn input_response(&self, i: usize) -> DMatrix<f64> {
        let p = self.state_dim();
        let t = self.horizon;
        let mut gamma = DMatrix::zeros((t + 1) * p, t);
        let mut col = self.b[i].clone();
        // lag = t − 1 − s
        for lag in 0..t {
            for s in 0..(t - lag) {
                let row = s + 1 + lag;
                gamma.view_mut((row * p, s), (p, 1)).copy_from(&col);
            }
            col = &self.a * col;
        }
        gamma
    }

    fn stacked_weight(&self, alpha_tilde: &DVector<f64>) -> DMatrix<f64> {
        let (q, qf) = self.state_weights(alpha_tilde);
        let mut blocks = vec![q; self.horizon];
        blocks.push(qf);
        block_diag(&blocks)
    }

    /// Multi-stage cost by simulating the dynamics. `controls[i][t] = u_{i,t}`.
    pub fn simulate_cost(&self, controls: &[DVector<f64>]) -> f64 {
        let (q, qf) = self.state_weights(&self.alpha_tilde);
        let mut x = self.x0.clone();
        let mut cost = 0.0;
        for t in 0..self.horizon {
            cost += (x.transpose() * &q * &x)[(0, 0)];
            let mut next = &self.a * &x;
            for (i, ui) in controls.iter().enumerate() {
                let r = self.input_weight(i, &self.beta_tilde);
                cost += r * ui[t] * ui[t];
                next += &self.b[i] * ui[t];
            }
            x = next;
        }
        cost + (x.transpose() * qf * &x)[(0, 0)]
    }

    /// Raw one-shot view at the configured `(α̃, β̃)`: `½uᵀHu + cᵀu + c₀`.
    pub fn one_shot(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let t = self.horizon;
        let nn = t * self.members();
        let qbar = self.stacked_weight(&self.alpha_tilde);
        let phi = self.free_response();
        let gammas: Vec<DMatrix<f64>> = (0..self.members()).map(|i| self.input_response(i)).collect();
        let mut h = DMatrix::zeros(nn, nn);
        let mut c = DVector::zeros(nn);
        let drift = &qbar * &phi * &self.x0;
        for i in 0..self.members() {
            for j in 0..self.members() {
                let mut blk = gammas[i].transpose() * &qbar * &gammas[j] * 2.0;
                if i == j {
                    let r = self.input_weight(i, &self.beta_tilde);
                    for k in 0..t {
                        blk[(k, k)] += 2.0 * r;
                    }
                }
                h.view_mut((i * t, j * t), (t, t)).copy_from(&blk);
            }
            c.rows_mut(i * t, t).copy_from(&(gammas[i].transpose() * &drift * 2.0));
        }
        let c0 = (self.x0.transpose() * phi.transpose() * drift)[(0, 0)];
        (h, c, c0)
    }
}

/// Reduced quadratic family; see the module docs for the parameter mapping.
pub fn reduce(lqr: &LqrSpec) -> Result<QuadraticFamily> {
    lqr.validate()?;
    let t = lqr.horizon;
    let members = lqr.members();
    let d_at = lqr.q_basis.len();
    let d_bt = lqr.beta_tilde.len();
    let phi = lqr.free_response();
    let gammas: Vec<DMatrix<f64>> = (0..members).map(|i| lqr.input_response(i)).collect();
    let qbar_basis: Vec<DMatrix<f64>> = (0..d_at)
        .map(|l| {
            let mut blocks = vec![lqr.q_basis[l].clone(); t];
            blocks.push(lqr.qf_basis[l].clone());
            block_diag(&blocks)
        })
        .collect();
    let qbar_team = lqr.stacked_weight(&lqr.alpha_tilde);

    let mut q_basis = Vec::with_capacity(members);
    let mut b_basis = Vec::with_capacity(members);
    let mut gamma_map = Vec::with_capacity(members);
    for i in 0..members {
        let mut qi: Vec<DMatrix<f64>> = qbar_basis
            .iter()
            .map(|qb| gammas[i].transpose() * qb * &gammas[i])
            .collect();
        for l in 0..d_bt {
            qi.push(DMatrix::identity(t, t) * lqr.r_basis[i][l]);
        }
        q_basis.push(qi);
        b_basis.push(
            (0..members)
                .map(|j| {
                    if i == j {
                        Vec::new()
                    } else {
                        qbar_basis
                            .iter()
                            .map(|qb| gammas[i].transpose() * qb * &gammas[j])
                            .collect()
                    }
                })
                .collect(),
        );
        gamma_map.push(gammas[i].transpose() * &qbar_team * &phi * 2.0);
    }
    let constant = (lqr.x0.transpose() * phi.transpose() * &qbar_team * &phi * &lqr.x0)[(0, 0)];
    let fam = QuadraticFamily::new(q_basis, b_basis, gamma_map)?
        .with_beta_dim(d_at)
        .with_constant(constant);

    // Consistency against simulated dynamics on random input stacks.
    let team = reduced_team_params(lqr);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2b);
    for _ in 0..5 {
        let u = DVector::from_fn(t * members, |_, _| rng.random_range(-1.0..1.0));
        let controls: Vec<DVector<f64>> = (0..members).map(|i| u.rows(i * t, t).into_owned()).collect();
        let direct = lqr.simulate_cost(&controls);
        let reduced = fam.team_cost(&team, &u);
        if (direct - reduced).abs() > 1e-8 * (1.0 + direct.abs()) {
            return Err(Error::InvalidParams(format!(
                "LQR reduction mismatch: simulated {direct}, reduced {reduced}"
            )));
        }
    }
    Ok(fam)
}

/// Team parameters of the reduced view: `α = (α̃, β̃)`, `β = α̃`, `γ = x_0`.
pub fn reduced_team_params(lqr: &LqrSpec) -> super::Params {
    let alpha: Vec<f64> = lqr.alpha_tilde.iter().chain(lqr.beta_tilde.iter()).cloned().collect();
    super::Params::new(&alpha, lqr.alpha_tilde.as_slice(), lqr.x0.as_slice())
}
