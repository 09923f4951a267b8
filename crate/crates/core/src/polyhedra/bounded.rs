//! Projection onto `{ lo ≤ y ≤ hi, H y = m }` by semismooth Newton on the
//! equality multipliers.
//!
//! For fixed `μ` the minimiser is `clip(x − Hᵀμ)`, so the dual function is
//! concave and piecewise quadratic in `μ` with gradient `H y(μ) − m`. Newton
//! steps with the generalized Hessian `H D Hᵀ` (D selects unclipped
//! coordinates) terminate once the clipping pattern settles.

use nalgebra::{DMatrix, DVector};

pub(crate) struct BoundedOutput {
    pub point: DVector<f64>,
    pub mu: DVector<f64>,
    /// Pre-clipping point `x − Hᵀμ`; bound multipliers follow from it.
    pub shifted: DVector<f64>,
}

fn clip(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&x, (&l, &u))| x.max(l).min(u)),
    )
}

fn dual_value(
    x: &DVector<f64>,
    h: &DMatrix<f64>,
    m: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    mu: &DVector<f64>,
) -> (f64, DVector<f64>, DVector<f64>, DVector<f64>) {
    let shifted = x - h.transpose() * mu;
    let y = clip(&shifted, lo, hi);
    let g = h * &y - m;
    let val = 0.5 * (&y - x).norm_squared() + mu.dot(&g);
    (val, y, g, shifted)
}

pub(crate) fn project_bounded(
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    h: &DMatrix<f64>,
    m: &DVector<f64>,
    x: &DVector<f64>,
    warm: Option<&DVector<f64>>,
    tol: f64,
) -> Option<BoundedOutput> {
    let r = h.nrows();
    let n = x.len();
    if r == 0 {
        let y = clip(x, lo, hi);
        return Some(BoundedOutput {
            point: y,
            mu: DVector::zeros(0),
            shifted: x.clone(),
        });
    }
    let mut mu = match warm {
        Some(w) if w.len() == r => w.clone(),
        _ => DVector::zeros(r),
    };
    let scale = 1.0 + m.amax() + x.amax();
    let (mut val, mut y, mut g, mut shifted) = dual_value(x, h, m, lo, hi, &mu);
    for _ in 0..200 {
        if g.amax() <= tol * scale {
            return Some(BoundedOutput {
                point: y,
                mu,
                shifted,
            });
        }
        let mut hd = h.clone();
        for k in 0..n {
            let free = shifted[k] > lo[k] && shifted[k] < hi[k];
            if !free {
                hd.column_mut(k).fill(0.0);
            }
        }
        let mut mat = &hd * h.transpose();
        let reg = 1e-12 * (1.0 + mat.diagonal().amax());
        for i in 0..r {
            mat[(i, i)] += reg;
        }
        let step = match mat.cholesky() {
            Some(ch) => ch.solve(&g),
            None => return None,
        };
        let slope = g.dot(&step);
        if !(slope > 0.0) {
            return None;
        }
        let mut t = 1.0;
        loop {
            let trial = &mu + &step * t;
            let (tv, ty, tg, ts) = dual_value(x, h, m, lo, hi, &trial);
            if tv >= val + 1e-4 * t * slope || t < 1e-12 {
                mu = trial;
                val = tv;
                y = ty;
                g = tg;
                shifted = ts;
                break;
            }
            t *= 0.5;
        }
    }
    None
}
