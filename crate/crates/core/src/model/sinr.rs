//! Uplink power control: `n = 1`, member `i` picks a transmit power `u_i`.
//!
//! ```text
//! 𝒞(u)   = Σ_i −β h_i u_i / (Σ_{j≠i} h_j u_j + σ²) + γ u_i
//! 𝒞_i(u) =     −β_i h_i u_i / (Σ_{j≠i} h_j u_j + σ²) + γ_i u_i
//! ```
//!
//! Parameters: `d_alpha = 0`, `β` is the spreading gain (`d_beta = 1`), `γ` the
//! power price (`d_gamma = 1`).

use nalgebra::{DMatrix, DVector};

use super::field::{SinrField, VectorField};
use super::params::{ParamDims, Params};
use crate::error::{Error, Result};

/// Default lower power bound keeping the interference denominators away from 0.
pub const DEFAULT_U_MIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SinrFamily {
    h: DVector<f64>,
    sigma2: f64,
}

impl SinrFamily {
    pub fn new(h: DVector<f64>, sigma2: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidParams("at least one member is required".into()));
        }
        if let Some(i) = h.iter().position(|&g| !(g > 0.0)) {
            return Err(Error::Member {
                member: i,
                message: format!("channel gain must be positive, got {}", h[i]),
            });
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParams(format!("noise power must be positive, got {sigma2}")));
        }
        Ok(Self { h, sigma2 })
    }

    pub fn gains(&self) -> &DVector<f64> {
        &self.h
    }
    pub fn noise(&self) -> f64 {
        self.sigma2
    }
    pub fn members(&self) -> usize {
        self.h.len()
    }

    pub fn dims() -> ParamDims {
        ParamDims {
            alpha: 0,
            beta: 1,
            gamma: 1,
        }
    }

    fn denominator(&self, i: usize, u: &DVector<f64>) -> f64 {
        self.h.dot(u) - self.h[i] * u[i] + self.sigma2
    }

    pub fn team_cost(&self, team: &Params, u: &DVector<f64>) -> f64 {
        (0..self.members())
            .map(|i| -team.beta[0] * self.h[i] * u[i] / self.denominator(i, u) + team.gamma[0] * u[i])
            .sum()
    }

    pub fn member_cost(&self, i: usize, p: &Params, u: &DVector<f64>) -> f64 {
        -p.beta[0] * self.h[i] * u[i] / self.denominator(i, u) + p.gamma[0] * u[i]
    }

    pub fn team_field(&self, team: &Params) -> VectorField {
        let n = self.members();
        VectorField::Sinr(SinrField {
            h: self.h.clone(),
            sigma2: self.sigma2,
            beta: DVector::from_element(n, team.beta[0]),
            gamma: DVector::from_element(n, team.gamma[0]),
            team: true,
        })
    }

    pub fn game_field(&self, effective: &[Params]) -> VectorField {
        VectorField::Sinr(SinrField {
            h: self.h.clone(),
            sigma2: self.sigma2,
            beta: DVector::from_iterator(effective.len(), effective.iter().map(|p| p.beta[0])),
            gamma: DVector::from_iterator(effective.len(), effective.iter().map(|p| p.gamma[0])),
            team: false,
        })
    }

    /// `∂F_i/∂Δβ_i = −h_i/(I_i + σ²)`, `∂F_i/∂Δγ_i = 1`.
    pub fn theta_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.members();
        let mut j = DMatrix::zeros(n, 2 * n);
        for i in 0..n {
            j[(i, 2 * i)] = -self.h[i] / self.denominator(i, u);
            j[(i, 2 * i + 1)] = 1.0;
        }
        j
    }
}
