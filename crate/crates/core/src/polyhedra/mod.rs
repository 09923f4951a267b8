//! Polyhedral feasible sets `{u : D u ≤ b, H u = m}`, exact Euclidean
//! projection, and Jacobians of the projection map.

mod bounded;
mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Slack and multiplier threshold separating smooth points from kinks.
pub const STRICT_COMPLEMENTARITY: f64 = 1e-8;
/// Default feasibility tolerance of the projection solvers.
pub const PROJECTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    General,
    /// `lower ≤ y ≤ upper` (entries may be infinite) plus the equalities.
    /// `rows[j] = (coordinate, is_upper)` describes inequality row `j`.
    Bounds {
        lower: DVector<f64>,
        upper: DVector<f64>,
        rows: Vec<(usize, bool)>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    d: DMatrix<f64>,
    b: DVector<f64>,
    h: DMatrix<f64>,
    m: DVector<f64>,
    shape: Shape,
}

#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub point: DVector<f64>,
    /// Inequality rows with slack at most [`STRICT_COMPLEMENTARITY`].
    pub active_set: Vec<usize>,
    /// `λ ≥ 0` for `D u ≤ b`.
    pub lambda: DVector<f64>,
    /// `μ` for `H u = m`.
    pub mu: DVector<f64>,
    /// Strict complementarity holds at every tight row.
    pub is_smooth_point: bool,
    /// Tight rows together with the equalities are linearly dependent.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct ValidationCertificate {
    pub rank_d: usize,
    pub rank_h: usize,
    pub slater_point: DVector<f64>,
    /// Largest uniform slack `t` found with `D y ≤ b − t`.
    pub slater_margin: f64,
}

impl Polyhedron {
    pub fn new(d: DMatrix<f64>, b: DVector<f64>, h: DMatrix<f64>, m: DVector<f64>) -> Result<Self> {
        let n = d.ncols().max(h.ncols());
        if d.nrows() > 0 && d.ncols() != n {
            return Err(Error::dim("inequality matrix columns", n, d.ncols()));
        }
        if h.nrows() > 0 && h.ncols() != n {
            return Err(Error::dim("equality matrix columns", n, h.ncols()));
        }
        if b.len() != d.nrows() {
            return Err(Error::dim("inequality rhs", d.nrows(), b.len()));
        }
        if m.len() != h.nrows() {
            return Err(Error::dim("equality rhs", h.nrows(), m.len()));
        }
        let d = if d.nrows() == 0 { DMatrix::zeros(0, n) } else { d };
        let h = if h.nrows() == 0 { DMatrix::zeros(0, n) } else { h };
        Ok(Self {
            d,
            b,
            h,
            m,
            shape: Shape::General,
        })
    }

    /// Box `[lower, upper]`; infinite entries drop the corresponding row.
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = lower.len();
        Self::bounds_and_equalities(lower, upper, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn uniform_box(n: usize, lo: f64, hi: f64) -> Self {
        Self::boxed(DVector::from_element(n, lo), DVector::from_element(n, hi))
            .expect("consistent dimensions")
    }

    /// `{lower ≤ y ≤ upper, H y = m}`. Upper-bound rows come first, then
    /// lower-bound rows, each in coordinate order.
    pub fn bounds_and_equalities(
        lower: DVector<f64>,
        upper: DVector<f64>,
        h: DMatrix<f64>,
        m: DVector<f64>,
    ) -> Result<Self> {
        let n = lower.len();
        if upper.len() != n {
            return Err(Error::dim("upper bounds", n, upper.len()));
        }
        if h.nrows() > 0 && h.ncols() != n {
            return Err(Error::dim("equality matrix columns", n, h.ncols()));
        }
        if m.len() != h.nrows() {
            return Err(Error::dim("equality rhs", h.nrows(), m.len()));
        }
        if let Some(k) = (0..n).find(|&k| lower[k] > upper[k]) {
            return Err(Error::InvalidParams(format!(
                "lower bound exceeds upper bound at coordinate {k}"
            )));
        }
        let mut rows = Vec::new();
        for k in 0..n {
            if upper[k].is_finite() {
                rows.push((k, true));
            }
        }
        for k in 0..n {
            if lower[k].is_finite() {
                rows.push((k, false));
            }
        }
        let mut d = DMatrix::zeros(rows.len(), n);
        let mut b = DVector::zeros(rows.len());
        for (j, &(k, up)) in rows.iter().enumerate() {
            if up {
                d[(j, k)] = 1.0;
                b[j] = upper[k];
            } else {
                d[(j, k)] = -1.0;
                b[j] = -lower[k];
            }
        }
        let h = if h.nrows() == 0 { DMatrix::zeros(0, n) } else { h };
        Ok(Self {
            d,
            b,
            h,
            m,
            shape: Shape::Bounds { lower, upper, rows },
        })
    }

    /// Probability simplex `{u ≥ 0, 1ᵀu = 1}`.
    pub fn simplex(n: usize) -> Self {
        Self::bounds_and_equalities(
            DVector::zeros(n),
            DVector::from_element(n, f64::INFINITY),
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, 1.0),
        )
        .expect("consistent dimensions")
    }

    /// Affine set `{H u = m}`.
    pub fn affine(h: DMatrix<f64>, m: DVector<f64>) -> Result<Self> {
        let n = h.ncols();
        Self::bounds_and_equalities(
            DVector::from_element(n, f64::NEG_INFINITY),
            DVector::from_element(n, f64::INFINITY),
            h,
            m,
        )
    }

    /// The same set with the structural fast paths disabled.
    pub fn as_general(&self) -> Self {
        Self {
            shape: Shape::General,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.d.ncols()
    }
    pub fn num_ineq(&self) -> usize {
        self.d.nrows()
    }
    pub fn num_eq(&self) -> usize {
        self.h.nrows()
    }
    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn ineq_rhs(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
    pub fn eq_rhs(&self) -> &DVector<f64> {
        &self.m
    }

    /// Pure box (no equalities)?
    pub fn is_box(&self) -> bool {
        matches!(self.shape, Shape::Bounds { .. }) && self.h.nrows() == 0
    }

    /// Coordinate bounds when the set was built from bounds.
    pub fn bounds(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        match &self.shape {
            Shape::Bounds { lower, upper, .. } => Some((lower, upper)),
            Shape::General => None,
        }
    }

    pub fn slacks(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.d * y
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        y.len() == self.dim()
            && self.slacks(y).iter().all(|&s| s >= -tol)
            && (&self.h * y - &self.m).amax() <= tol
    }

    /// Euclidean projection with a KKT certificate.
    pub fn project(&self, x: &DVector<f64>, tol: f64) -> Result<ProjectionResult> {
        self.project_warm(x, None, tol)
    }

    /// As [`Polyhedron::project`]; `warm` seeds the equality multipliers of the
    /// bounds-plus-equalities path (ignored elsewhere).
    pub fn project_warm(
        &self,
        x: &DVector<f64>,
        warm: Option<&DVector<f64>>,
        tol: f64,
    ) -> Result<ProjectionResult> {
        if x.len() != self.dim() {
            return Err(Error::dim("projection input", self.dim(), x.len()));
        }
        if let Shape::Bounds { lower, upper, rows } = &self.shape {
            if let Some(out) = bounded::project_bounded(lower, upper, &self.h, &self.m, x, warm, tol)
            {
                let lambda = DVector::from_iterator(
                    rows.len(),
                    rows.iter().map(|&(k, up)| {
                        if up {
                            (out.shifted[k] - upper[k]).max(0.0)
                        } else {
                            (lower[k] - out.shifted[k]).max(0.0)
                        }
                    }),
                );
                return Ok(self.finish(out.point, lambda, out.mu));
            }
        }
        self.project_general(x, tol)
    }

    /// Projection through the dual active-set solver regardless of shape.
    pub fn project_general(&self, x: &DVector<f64>, tol: f64) -> Result<ProjectionResult> {
        if x.len() != self.dim() {
            return Err(Error::dim("projection input", self.dim(), x.len()));
        }
        let out = qp::project_dual_active_set(&self.d, &self.b, &self.h, &self.m, x, tol)?;
        Ok(self.finish(out.point, out.lambda, out.mu))
    }

    fn finish(&self, point: DVector<f64>, lambda: DVector<f64>, mu: DVector<f64>) -> ProjectionResult {
        let slack = self.slacks(&point);
        let active_set: Vec<usize> = (0..self.num_ineq())
            .filter(|&j| slack[j] <= STRICT_COMPLEMENTARITY)
            .collect();
        let is_smooth_point = active_set
            .iter()
            .all(|&j| lambda[j] > STRICT_COMPLEMENTARITY);
        let rows = self.active_rows(&active_set);
        let degenerate = linalg::rank(&rows) < rows.nrows();
        ProjectionResult {
            point,
            active_set,
            lambda,
            mu,
            is_smooth_point,
            degenerate,
        }
    }

    fn active_rows(&self, active: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        let mut rows = DMatrix::zeros(active.len() + self.num_eq(), n);
        for (i, &j) in active.iter().enumerate() {
            rows.set_row(i, &self.d.row(j));
        }
        for k in 0..self.num_eq() {
            rows.set_row(active.len() + k, &self.h.row(k));
        }
        rows
    }

    /// Jacobian of the projection at a smooth point: the orthogonal projector
    /// onto the null space of the active rows.
    pub fn projection_jacobian(
        &self,
        _x: &DVector<f64>,
        result: &ProjectionResult,
    ) -> Result<DMatrix<f64>> {
        if !result.is_smooth_point {
            return Err(Error::Precondition(
                "projection is not differentiable here (weakly active constraint); \
                 use projection_jacobian_conservative"
                    .into(),
            ));
        }
        let rows = self.active_rows(&result.active_set);
        let rank = linalg::rank(&rows);
        if rank < rows.nrows() {
            return Err(Error::DegenerateActiveSet {
                rank,
                rows: rows.nrows(),
            });
        }
        Ok(self.tight_projector(&result.active_set, &rows))
    }

    /// Jacobian of one adjacent affine piece of the projection, chosen by the
    /// rule "tight ⇒ active": every inequality with slack at most
    /// [`STRICT_COMPLEMENTARITY`] is treated as active. Dependent rows are
    /// handled through their span.
    pub fn projection_jacobian_conservative(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let res = self.project(x, PROJECTION_TOL)?;
        Ok(self.conservative_from(&res))
    }

    /// Conservative selection computed from an existing projection.
    pub fn conservative_from(&self, res: &ProjectionResult) -> DMatrix<f64> {
        let rows = self.active_rows(&res.active_set);
        self.tight_projector(&res.active_set, &rows)
    }

    fn tight_projector(&self, active: &[usize], rows: &DMatrix<f64>) -> DMatrix<f64> {
        if self.is_box() {
            if let Shape::Bounds { rows: brows, .. } = &self.shape {
                let n = self.dim();
                let mut diag = DVector::from_element(n, 1.0);
                for &j in active {
                    diag[brows[j].0] = 0.0;
                }
                return DMatrix::from_diagonal(&diag);
            }
        }
        linalg::nullspace_projector(rows)
    }

    /// Rank, nonemptiness, Slater and boundedness checks. Every failing check
    /// contributes one message to the error.
    pub fn validate(&self) -> Result<ValidationCertificate> {
        let mut problems = Vec::new();
        let n = self.dim();
        let rank_d = linalg::rank(&self.d);
        let rank_h = linalg::rank(&self.h);
        if rank_d < self.num_ineq() && !self.is_box_like() {
            problems.push(format!(
                "inequality matrix is rank deficient (rank {rank_d} < {} rows)",
                self.num_ineq()
            ));
        }
        if rank_h < self.num_eq() {
            problems.push(format!(
                "equality matrix is rank deficient (rank {rank_h} < {} rows)",
                self.num_eq()
            ));
        }
        let zero = DVector::zeros(n);
        let mut slater_point = zero.clone();
        let mut slater_margin = 0.0;
        match self.as_general().project_general(&zero, 1e-12) {
            Err(Error::Infeasible { constraint, .. }) => {
                problems.push(format!("set is empty (constraint {constraint} infeasible)"));
            }
            Err(e) => problems.push(format!("feasibility check failed: {e}")),
            Ok(_) if self.num_ineq() == 0 => {}
            Ok(_) => match self.slater_search() {
                Some((t, p)) => {
                    slater_margin = t;
                    slater_point = p;
                }
                None => problems.push(
                    "no Slater point: the inequalities have no strictly feasible point".into(),
                ),
            },
        }
        for k in 0..n {
            for sign in [1.0, -1.0] {
                if let Some(dir) = self.recession_witness(k, sign) {
                    problems.push(format!(
                        "unbounded: support function diverges along {}e_{} (recession direction norm {:.3e})",
                        if sign > 0.0 { "+" } else { "-" },
                        k + 1,
                        dir.norm()
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(ValidationCertificate {
                rank_d,
                rank_h,
                slater_point,
                slater_margin,
            })
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Box rows `e_k` and `−e_k` are dependent as a matrix but define a
    /// full-dimensional box; rank is judged per coordinate there.
    fn is_box_like(&self) -> bool {
        match &self.shape {
            Shape::Bounds { .. } => true,
            Shape::General => false,
        }
    }

    /// Largest `t ∈ (0, 1]` with `{D y ≤ b − t, H y = m}` nonempty, by bisection.
    fn slater_search(&self) -> Option<(f64, DVector<f64>)> {
        let n = self.dim();
        let feasible = |t: f64| -> Option<DVector<f64>> {
            let shifted = self.b.map(|v| v - t);
            let p = Polyhedron::new(self.d.clone(), shifted, self.h.clone(), self.m.clone()).ok()?;
            let res = p.project_general(&DVector::zeros(n), 1e-12).ok()?;
            p.contains(&res.point, 1e-9).then_some(res.point)
        };
        if let Some(p) = feasible(1.0) {
            return Some((1.0, p));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = None;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match feasible(mid) {
                Some(p) => {
                    lo = mid;
                    best = Some(p);
                }
                None => hi = mid,
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        let p = best?;
        (lo > 1e-9).then_some((lo, p))
    }

    /// A recession direction `d` with `±d_k > 0`, if one exists. Obtained by
    /// projecting `±e_k` onto the recession cone `{D d ≤ 0, H d = 0}`: the
    /// projection is zero exactly when `±e_k` lies in the polar cone.
    fn recession_witness(&self, k: usize, sign: f64) -> Option<DVector<f64>> {
        if let Shape::Bounds { lower, upper, .. } = &self.shape {
            if self.num_eq() == 0 {
                let bound = if sign > 0.0 { upper[k] } else { lower[k] };
                if bound.is_finite() {
                    return None;
                }
                let mut e = DVector::zeros(self.dim());
                e[k] = sign;
                return Some(e);
            }
        }
        let n = self.dim();
        let cone = Polyhedron::new(
            self.d.clone(),
            DVector::zeros(self.num_ineq()),
            self.h.clone(),
            DVector::zeros(self.num_eq()),
        )
        .ok()?;
        let mut e = DVector::zeros(n);
        e[k] = sign;
        let res = cone.project_general(&e, 1e-13).ok()?;
        (res.point.norm() > 1e-9).then_some(res.point)
    }
}
