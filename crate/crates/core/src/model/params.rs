use nalgebra::DVector;

use crate::error::{Error, Result};

/// Parameter dimensions `(d_alpha, d_beta, d_gamma)` of a cost family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamDims {
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
}

impl ParamDims {
    pub fn total(&self) -> usize {
        self.alpha + self.beta + self.gamma
    }
}

/// One `(α, β, γ)` triple. Used both for the team parameters and for each
/// member's preferences.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

pub type TeamParams = Params;
pub type MemberParams = Vec<Params>;

impl Params {
    pub fn new(alpha: &[f64], beta: &[f64], gamma: &[f64]) -> Self {
        Self {
            alpha: DVector::from_row_slice(alpha),
            beta: DVector::from_row_slice(beta),
            gamma: DVector::from_row_slice(gamma),
        }
    }

    pub fn zeros(dims: ParamDims) -> Self {
        Self {
            alpha: DVector::zeros(dims.alpha),
            beta: DVector::zeros(dims.beta),
            gamma: DVector::zeros(dims.gamma),
        }
    }

    pub fn dims(&self) -> ParamDims {
        ParamDims {
            alpha: self.alpha.len(),
            beta: self.beta.len(),
            gamma: self.gamma.len(),
        }
    }

    pub fn check_dims(&self, dims: ParamDims, what: &str) -> Result<()> {
        if self.alpha.len() != dims.alpha {
            return Err(Error::dim(format!("{what} alpha"), dims.alpha, self.alpha.len()));
        }
        if self.beta.len() != dims.beta {
            return Err(Error::dim(format!("{what} beta"), dims.beta, self.beta.len()));
        }
        if self.gamma.len() != dims.gamma {
            return Err(Error::dim(format!("{what} gamma"), dims.gamma, self.gamma.len()));
        }
        Ok(())
    }

    /// `(α, β, γ)` concatenated.
    pub fn stacked(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.alpha.len() + self.beta.len() + self.gamma.len());
        let (a, b) = (self.alpha.len(), self.beta.len());
        out.rows_mut(0, a).copy_from(&self.alpha);
        out.rows_mut(a, b).copy_from(&self.beta);
        out.rows_mut(a + b, self.gamma.len()).copy_from(&self.gamma);
        out
    }

    pub fn from_stacked(v: &[f64], dims: ParamDims) -> Result<Self> {
        if v.len() != dims.total() {
            return Err(Error::dim("stacked parameter block", dims.total(), v.len()));
        }
        let (a, b) = (dims.alpha, dims.beta);
        Ok(Self::new(&v[..a], &v[a..a + b], &v[a + b..]))
    }

    pub fn plus(&self, delta: &Params) -> Params {
        Params {
            alpha: &self.alpha + &delta.alpha,
            beta: &self.beta + &delta.beta,
            gamma: &self.gamma + &delta.gamma,
        }
    }
}

/// Mediator adjustment `θ = col{(Δα_i, Δβ_i, Δγ_i)}` stacked by member.
#[derive(Clone, Debug, PartialEq)]
pub struct MediatorAdjustment {
    pub blocks: Vec<Params>,
}

impl MediatorAdjustment {
    pub fn zeros(dims: ParamDims, members: usize) -> Self {
        Self {
            blocks: vec![Params::zeros(dims); members],
        }
    }

    pub fn from_vector(theta: &DVector<f64>, dims: ParamDims, members: usize) -> Result<Self> {
        let d = dims.total();
        if theta.len() != d * members {
            return Err(Error::dim("theta", d * members, theta.len()));
        }
        let blocks = (0..members)
            .map(|i| Params::from_stacked(&theta.as_slice()[i * d..(i + 1) * d], dims))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let parts: Vec<f64> = self
            .blocks
            .iter()
            .flat_map(|b| b.stacked().iter().cloned().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_stacking_order_is_alpha_beta_gamma_per_member() {
        let dims = ParamDims {
            alpha: 1,
            beta: 2,
            gamma: 1,
        };
        let theta = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let adj = MediatorAdjustment::from_vector(&theta, dims, 2).unwrap();
        assert_eq!(adj.blocks[1].alpha[0], 5.0);
        assert_eq!(adj.blocks[1].beta.as_slice(), &[6.0, 7.0]);
        assert_eq!(adj.blocks[0].gamma[0], 4.0);
        assert_eq!(adj.to_vector(), theta);
    }
}
