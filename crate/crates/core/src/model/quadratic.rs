//! Linear-quadratic cost family
//!
//! ```text
//! 𝒞(u)    = Σ_i u_iᵀQ_i(α)u_i + u_iᵀ Σ_{j≠i} B_ij(β)u_j + (L_i γ)ᵀu_i + c₀
//! 𝒞_i(u)  = u_iᵀQ_i(α_i)u_i + u_iᵀ Σ_{j≠i} B_ij(β_i)u_j + (L_i γ_i)ᵀu_i
//! ```
//!
//! with `Q_i(α) = Σ_l Q_{i,l} α_l`, `B_ij(β) = Σ_l B_{ij,l} β_l` and a fixed
//! linear map `L_i` (`n × d_gamma`).

use nalgebra::{DMatrix, DVector};

use super::params::{ParamDims, Params};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFamily {
    n: usize,
    members: usize,
    q_basis: Vec<Vec<DMatrix<f64>>>,
    /// `b_basis[i][j]`; empty when `i == j`.
    b_basis: Vec<Vec<Vec<DMatrix<f64>>>>,
    gamma_map: Vec<DMatrix<f64>>,
    beta_dim: usize,
    constant: f64,
}

impl QuadraticFamily {
    pub fn new(
        q_basis: Vec<Vec<DMatrix<f64>>>,
        b_basis: Vec<Vec<Vec<DMatrix<f64>>>>,
        gamma_map: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let members = q_basis.len();
        if members == 0 {
            return Err(Error::InvalidParams("at least one member is required".into()));
        }
        let d_alpha = q_basis[0].len();
        let n = gamma_map
            .first()
            .map(|g| g.nrows())
            .ok_or_else(|| Error::InvalidParams("missing linear-term maps".into()))?;
        let d_gamma = gamma_map[0].ncols();
        if gamma_map.len() != members {
            return Err(Error::dim("linear-term maps", members, gamma_map.len()));
        }
        if b_basis.len() != members {
            return Err(Error::dim("coupling basis rows", members, b_basis.len()));
        }
        let d_beta = (0..members)
            .flat_map(|i| (0..members).filter(move |&j| j != i).map(move |j| (i, j)))
            .next()
            .map(|(i, j)| b_basis[i].get(j).map_or(0, |v| v.len()))
            .unwrap_or(0);
        for i in 0..members {
            let member_err = |message: String| Error::Member { member: i, message };
            if q_basis[i].len() != d_alpha {
                return Err(member_err(format!(
                    "expected {d_alpha} own-cost basis matrices, got {}",
                    q_basis[i].len()
                )));
            }
            for (l, q) in q_basis[i].iter().enumerate() {
                if q.nrows() != n || q.ncols() != n {
                    return Err(member_err(format!(
                        "own-cost basis {l} is {}x{}, expected {n}x{n}",
                        q.nrows(),
                        q.ncols()
                    )));
                }
            }
            if gamma_map[i].nrows() != n || gamma_map[i].ncols() != d_gamma {
                return Err(member_err(format!(
                    "linear-term map is {}x{}, expected {n}x{d_gamma}",
                    gamma_map[i].nrows(),
                    gamma_map[i].ncols()
                )));
            }
            if b_basis[i].len() != members {
                return Err(member_err(format!(
                    "expected {members} coupling entries, got {}",
                    b_basis[i].len()
                )));
            }
            for j in 0..members {
                let expect = if i == j { 0 } else { d_beta };
                if b_basis[i][j].len() != expect {
                    return Err(member_err(format!(
                        "coupling with member {j}: expected {expect} basis matrices, got {}",
                        b_basis[i][j].len()
                    )));
                }
                for b in &b_basis[i][j] {
                    if b.nrows() != n || b.ncols() != n {
                        return Err(member_err(format!("coupling basis with member {j} is not {n}x{n}")));
                    }
                }
            }
        }
        Ok(Self {
            n,
            members,
            q_basis,
            b_basis,
            gamma_map,
            beta_dim: d_beta,
            constant: 0.0,
        })
    }

    /// Every member shares the same bases, and every ordered pair the same
    /// coupling basis.
    pub fn uniform(
        members: usize,
        q_basis: Vec<DMatrix<f64>>,
        b_basis: Vec<DMatrix<f64>>,
        gamma_map: DMatrix<f64>,
    ) -> Result<Self> {
        let b = (0..members)
            .map(|i| {
                (0..members)
                    .map(|j| if i == j { Vec::new() } else { b_basis.clone() })
                    .collect()
            })
            .collect();
        let d_beta = b_basis.len();
        Ok(Self::new(vec![q_basis; members], b, vec![gamma_map; members])?.with_beta_dim(d_beta))
    }

    /// Declares `d_beta` for a single-member family, which has no coupling
    /// bases to infer it from. Ignored when couplings exist.
    pub fn with_beta_dim(mut self, d_beta: usize) -> Self {
        if self.members == 1 {
            self.beta_dim = d_beta;
        }
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn members(&self) -> usize {
        self.members
    }
    pub fn constant(&self) -> f64 {
        self.constant
    }
    pub fn q_basis(&self, i: usize) -> &[DMatrix<f64>] {
        &self.q_basis[i]
    }
    pub fn b_basis(&self, i: usize, j: usize) -> &[DMatrix<f64>] {
        &self.b_basis[i][j]
    }
    pub fn gamma_map(&self, i: usize) -> &DMatrix<f64> {
        &self.gamma_map[i]
    }

    pub fn dims(&self) -> ParamDims {
        ParamDims {
            alpha: self.q_basis[0].len(),
            beta: self.beta_dim,
            gamma: self.gamma_map[0].ncols(),
        }
    }

    pub fn q(&self, i: usize, alpha: &DVector<f64>) -> DMatrix<f64> {
        combine(&self.q_basis[i], alpha, self.n)
    }

    pub fn b(&self, i: usize, j: usize, beta: &DVector<f64>) -> DMatrix<f64> {
        combine(&self.b_basis[i][j], beta, self.n)
    }

    /// `B_{ij,l} = B_{ji,l}ᵀ` for all pairs, the structure under which
    /// `θ_i = (α − α_i, 2β − β_i, γ − γ_i)` aligns the pseudo-gradient.
    pub fn has_transpose_symmetric_coupling(&self, tol: f64) -> bool {
        for i in 0..self.members {
            for j in (i + 1)..self.members {
                for (bij, bji) in self.b_basis[i][j].iter().zip(&self.b_basis[j][i]) {
                    if (bij - bji.transpose()).amax() > tol * (1.0 + bij.amax()) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn block<'a>(&self, u: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        u.rows(i * self.n, self.n)
    }

    pub fn team_cost(&self, team: &Params, u: &DVector<f64>) -> f64 {
        let mut total = self.constant;
        for i in 0..self.members {
            let ui = self.block(u, i);
            total += (ui.transpose() * self.q(i, &team.alpha) * ui)[(0, 0)];
            for j in 0..self.members {
                if j != i {
                    let uj = self.block(u, j);
                    total += (ui.transpose() * self.b(i, j, &team.beta) * uj)[(0, 0)];
                }
            }
            total += (&self.gamma_map[i] * &team.gamma).dot(&ui);
        }
        total
    }

    /// Member `i`'s cost under effective parameters `p` (already adjusted).
    pub fn member_cost(&self, i: usize, p: &Params, u: &DVector<f64>) -> f64 {
        let ui = self.block(u, i);
        let mut total = (ui.transpose() * self.q(i, &p.alpha) * ui)[(0, 0)];
        for j in 0..self.members {
            if j != i {
                total += (ui.transpose() * self.b(i, j, &p.beta) * self.block(u, j))[(0, 0)];
            }
        }
        total + (&self.gamma_map[i] * &p.gamma).dot(&ui)
    }

    /// `G(u) = M u + c` with `M_ii = Q_i + Q_iᵀ`, `M_ij = B_ij + B_jiᵀ`.
    pub fn team_operator(&self, team: &Params) -> (DMatrix<f64>, DVector<f64>) {
        let (n, nn) = (self.n, self.n * self.members);
        let mut m = DMatrix::zeros(nn, nn);
        let mut c = DVector::zeros(nn);
        for i in 0..self.members {
            let q = self.q(i, &team.alpha);
            m.view_mut((i * n, i * n), (n, n)).copy_from(&(&q + q.transpose()));
            for j in 0..self.members {
                if j != i {
                    let blk = self.b(i, j, &team.beta) + self.b(j, i, &team.beta).transpose();
                    m.view_mut((i * n, j * n), (n, n)).copy_from(&blk);
                }
            }
            c.rows_mut(i * n, n).copy_from(&(&self.gamma_map[i] * &team.gamma));
        }
        (m, c)
    }

    /// `F(u) = M u + c` with `M_ii = Q_i(α_i') + Q_i(α_i')ᵀ`, `M_ij = B_ij(β_i')`.
    pub fn game_operator(&self, effective: &[Params]) -> (DMatrix<f64>, DVector<f64>) {
        let (n, nn) = (self.n, self.n * self.members);
        let mut m = DMatrix::zeros(nn, nn);
        let mut c = DVector::zeros(nn);
        for (i, p) in effective.iter().enumerate() {
            let q = self.q(i, &p.alpha);
            m.view_mut((i * n, i * n), (n, n)).copy_from(&(&q + q.transpose()));
            for j in 0..self.members {
                if j != i {
                    m.view_mut((i * n, j * n), (n, n)).copy_from(&self.b(i, j, &p.beta));
                }
            }
            c.rows_mut(i * n, n).copy_from(&(&self.gamma_map[i] * &p.gamma));
        }
        (m, c)
    }

    /// `J_θ F(u)`: block diagonal over members, columns ordered (Δα, Δβ, Δγ).
    pub fn theta_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let dims = self.dims();
        let d = dims.total();
        let n = self.n;
        let mut j = DMatrix::zeros(n * self.members, d * self.members);
        for i in 0..self.members {
            let ui = self.block(u, i).into_owned();
            let (r0, c0) = (i * n, i * d);
            for (l, q) in self.q_basis[i].iter().enumerate() {
                let col = (q + q.transpose()) * &ui;
                j.view_mut((r0, c0 + l), (n, 1)).copy_from(&col);
            }
            for l in 0..dims.beta {
                let mut col = DVector::zeros(n);
                for k in 0..self.members {
                    if k != i {
                        col += &self.b_basis[i][k][l] * self.block(u, k);
                    }
                }
                j.view_mut((r0, c0 + dims.alpha + l), (n, 1)).copy_from(&col);
            }
            j.view_mut((r0, c0 + dims.alpha + dims.beta), (n, dims.gamma))
                .copy_from(&self.gamma_map[i]);
        }
        j
    }

    /// Lipschitz constant of `u ↦ J_θ F(u)` in spectral norm, bounded by the
    /// Frobenius norm of the linear part.
    pub fn theta_jacobian_lipschitz(&self) -> f64 {
        let nn = self.n * self.members;
        let zero = self.theta_jacobian(&DVector::zeros(nn));
        let mut sq = 0.0;
        for k in 0..nn {
            let mut e = DVector::zeros(nn);
            e[k] = 1.0;
            sq += (self.theta_jacobian(&e) - &zero).norm_squared();
        }
        sq.sqrt()
    }
}

fn combine(basis: &[DMatrix<f64>], coef: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    for (b, &c) in basis.iter().zip(coef.iter()) {
        if c != 0.0 {
            out += b * c;
        }
    }
    out
}
