//! Assembled gradient maps `u ↦ G(u)` and `u ↦ F(θ, u)` at a fixed parameter.

use nalgebra::{DMatrix, DVector};

/// A vector field over the stacked profile, assembled once per parameter
/// value so that solver iterations only pay for a matrix-vector product.
#[derive(Clone, Debug)]
pub enum VectorField {
    /// `u ↦ M u + c`.
    Affine { m: DMatrix<f64>, c: DVector<f64> },
    Sinr(SinrField),
}

/// Gradient maps of the uplink power-control family (`n = 1`).
#[derive(Clone, Debug)]
pub struct SinrField {
    pub h: DVector<f64>,
    pub sigma2: f64,
    /// Spreading gain per member (all equal for the team map).
    pub beta: DVector<f64>,
    /// Linear power price per member.
    pub gamma: DVector<f64>,
    /// `true`: full team gradient including cross terms; `false`: pseudo-gradient.
    pub team: bool,
}

impl SinrField {
    /// `I_i + σ²` with `I_i = Σ_{j≠i} h_j u_j`.
    fn denominators(&self, u: &DVector<f64>) -> DVector<f64> {
        let total: f64 = self.h.dot(u);
        DVector::from_iterator(u.len(), (0..u.len()).map(|i| total - self.h[i] * u[i] + self.sigma2))
    }

    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        let s = self.denominators(u);
        let n = u.len();
        let mut out = DVector::zeros(n);
        for k in 0..n {
            out[k] = -self.beta[k] * self.h[k] / s[k] + self.gamma[k];
        }
        if self.team {
            // ∂/∂u_k of −β h_i u_i / s_i for i ≠ k.
            for k in 0..n {
                let mut cross = 0.0;
                for i in 0..n {
                    if i != k {
                        cross += self.beta[i] * self.h[i] * u[i] * self.h[k] / (s[i] * s[i]);
                    }
                }
                out[k] += cross;
            }
        }
        out
    }

    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let s = self.denominators(u);
        let n = u.len();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                if l != k {
                    j[(k, l)] = self.beta[k] * self.h[k] * self.h[l] / (s[k] * s[k]);
                }
            }
        }
        if self.team {
            for k in 0..n {
                for l in 0..n {
                    let mut v = 0.0;
                    for i in 0..n {
                        if i == k {
                            continue;
                        }
                        let bi = self.beta[i] * self.h[i] * self.h[k];
                        let s2 = s[i] * s[i];
                        if l == i {
                            v += bi / s2;
                        } else {
                            // d s_i / d u_l = h_l for l ≠ i
                            v -= 2.0 * bi * u[i] * self.h[l] / (s2 * s[i]);
                        }
                    }
                    j[(k, l)] += v;
                }
            }
        }
        j
    }
}

impl VectorField {
    pub fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            VectorField::Affine { m, c } => m * u + c,
            VectorField::Sinr(s) => s.eval(u),
        }
    }

    pub fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        match self {
            VectorField::Affine { m, .. } => m.clone(),
            VectorField::Sinr(s) => s.jacobian(u),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, VectorField::Affine { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::Affine { c, .. } => c.len(),
            VectorField::Sinr(s) => s.h.len(),
        }
    }
}
