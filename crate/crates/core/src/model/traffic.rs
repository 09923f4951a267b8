//! Routing cost family on `n` arcs:
//!
//! ```text
//! 𝒞(u) = Σ_i u_iᵀQ(α)u_i + u_iᵀQ(β) Σ_{j≠i} u_j + γᵀu_i
//! ```
//!
//! with positive diagonal `Q(α)`, `Q(β)`. This is the quadratic family with
//! shared bases, so evaluation is delegated to [`QuadraticFamily`].

use nalgebra::{DMatrix, DVector};

use super::quadratic::QuadraticFamily;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrafficParameterization {
    /// `Q(α) = α I`, `Q(β) = β I`, `γ` broadcast to every arc (`d = 1` each).
    Scalar,
    /// `Q(α) = diag(α)`, `Q(β) = diag(β)`, `γ ∈ ℝⁿ` (`d = n` each).
    Diagonal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficFamily {
    arcs: usize,
    parameterization: TrafficParameterization,
    quad: QuadraticFamily,
}

impl TrafficFamily {
    pub fn new(arcs: usize, members: usize, parameterization: TrafficParameterization) -> Result<Self> {
        let (basis, gamma_map) = match parameterization {
            TrafficParameterization::Scalar => (
                vec![DMatrix::identity(arcs, arcs)],
                DMatrix::from_element(arcs, 1, 1.0),
            ),
            TrafficParameterization::Diagonal => (
                (0..arcs)
                    .map(|k| {
                        let mut e = DVector::zeros(arcs);
                        e[k] = 1.0;
                        DMatrix::from_diagonal(&e)
                    })
                    .collect(),
                DMatrix::identity(arcs, arcs),
            ),
        };
        let quad = QuadraticFamily::uniform(members, basis.clone(), basis, gamma_map)?;
        Ok(Self {
            arcs,
            parameterization,
            quad,
        })
    }

    pub fn arcs(&self) -> usize {
        self.arcs
    }
    pub fn parameterization(&self) -> TrafficParameterization {
        self.parameterization
    }
    pub fn as_quadratic(&self) -> &QuadraticFamily {
        &self.quad
    }
}
