//! Dual active-set projection onto a general polyhedron.
//!
//! This is the Goldfarb–Idnani dual method specialised to the Hessian `I`:
//! start from the unconstrained minimiser `y = x`, add the equalities, then
//! repeatedly pick the violated inequality with the smallest index (Bland's
//! rule) and move along the null space of the active normals until it becomes
//! active, dropping constraints whose multipliers would turn negative.
//!
//! Constraints are handled internally in `nᵀy ≥ c` form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct DualActiveSetOutput {
    pub point: DVector<f64>,
    /// Multipliers of `D y ≤ b`, nonnegative.
    pub lambda: DVector<f64>,
    /// Multipliers of `H y = m`.
    pub mu: DVector<f64>,
}

struct Active {
    index: usize,
    normal: DVector<f64>,
    /// Orientation applied to an equality normal (always 1 for inequalities).
    sign: f64,
    multiplier: f64,
    equality: bool,
}

pub(crate) fn project_dual_active_set(
    d: &DMatrix<f64>,
    b: &DVector<f64>,
    h: &DMatrix<f64>,
    m: &DVector<f64>,
    x: &DVector<f64>,
    tol: f64,
) -> Result<DualActiveSetOutput> {
    let n = x.len();
    let q = d.nrows();
    let r = h.nrows();
    let mut y = x.clone();
    let mut active: Vec<Active> = Vec::new();
    let max_steps = 20 * (q + r + n) + 100;
    let mut steps = 0usize;

    for k in 0..r {
        let row = h.row(k).transpose();
        let resid = row.dot(&y) - m[k];
        // Orient so that the constraint is violated in `≥` form.
        let sign = if resid > 0.0 { -1.0 } else { 1.0 };
        add_constraint(
            &mut y,
            &mut active,
            q + k,
            row * sign,
            m[k] * sign,
            sign,
            true,
            tol,
            &mut steps,
            max_steps,
            q + r,
        )?;
    }

    loop {
        // Bland: smallest violated index.
        let mut pick = None;
        for j in 0..q {
            if active.iter().any(|a| a.index == j) {
                continue;
            }
            let slack = b[j] - d.row(j).dot(&y.transpose());
            if slack < -tol * (1.0 + b[j].abs()) {
                pick = Some(j);
                break;
            }
        }
        let Some(p) = pick else { break };
        let normal = -d.row(p).transpose();
        add_constraint(
            &mut y,
            &mut active,
            p,
            normal,
            -b[p],
            1.0,
            false,
            tol,
            &mut steps,
            max_steps,
            q + r,
        )?;
    }

    let mut lambda = DVector::zeros(q);
    let mut mu = DVector::zeros(r);
    for a in &active {
        if a.equality {
            // y − x = u·s·h  ⇒  μ = −s·u
            mu[a.index - q] = -a.sign * a.multiplier;
        } else {
            lambda[a.index] = a.multiplier.max(0.0);
        }
    }
    Ok(DualActiveSetOutput {
        point: y,
        lambda,
        mu,
    })
}

/// Null-space step `z` and multiplier change `r` for a candidate normal.
fn step_directions(active: &[Active], np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let k = active.len();
    if k == 0 {
        return (np.clone(), DVector::zeros(0));
    }
    let n = np.len();
    let mut nmat = DMatrix::zeros(n, k);
    for (c, a) in active.iter().enumerate() {
        nmat.set_column(c, &a.normal);
    }
    let qr = nmat.qr();
    let qm = qr.q();
    let rm = qr.r();
    let proj = qm.transpose() * np;
    let z = np - &qm * &proj;
    let r = rm
        .solve_upper_triangular(&proj)
        .unwrap_or_else(|| DVector::zeros(k));
    (z, r)
}

#[allow(clippy::too_many_arguments)]
fn add_constraint(
    y: &mut DVector<f64>,
    active: &mut Vec<Active>,
    index: usize,
    normal: DVector<f64>,
    rhs: f64,
    sign: f64,
    equality: bool,
    tol: f64,
    steps: &mut usize,
    max_steps: usize,
    total: usize,
) -> Result<()> {
    let mut u_new = 0.0;
    let scale = normal.norm().max(1e-300);
    loop {
        *steps += 1;
        if *steps > max_steps {
            return Err(Error::NoConvergence {
                solver: "dual active-set projection",
                iterations: *steps,
                residual: (rhs - normal.dot(y)).max(0.0),
                best: Some(y.clone()),
                trace: Vec::new(),
            });
        }
        let s = normal.dot(y) - rhs;
        if s >= -tol * (1.0 + rhs.abs()) && !equality {
            // Became feasible through earlier partial steps.
            if u_new > 0.0 {
                active.push(Active {
                    index,
                    normal,
                    sign,
                    multiplier: u_new,
                    equality,
                });
            }
            return Ok(());
        }
        if equality && s.abs() <= tol * (1.0 + rhs.abs()) {
            let (z, _) = step_directions(active, &normal);
            if z.norm() > 1e-10 * scale {
                active.push(Active {
                    index,
                    normal,
                    sign,
                    multiplier: u_new,
                    equality,
                });
            }
            return Ok(());
        }
        let (z, r) = step_directions(active, &normal);
        let z_is_zero = z.norm() <= 1e-10 * scale;

        // Dual step: largest t keeping active inequality multipliers ≥ 0.
        let mut t1 = f64::INFINITY;
        let mut drop_at: Option<usize> = None;
        for (c, a) in active.iter().enumerate() {
            if a.equality || r[c] <= 1e-14 {
                continue;
            }
            let ratio = a.multiplier / r[c];
            let better = match drop_at {
                None => true,
                Some(prev) => {
                    let prev_idx: usize = active[prev].index;
                    ratio < t1 - 1e-15 || (ratio <= t1 + 1e-15 && a.index < prev_idx)
                }
            };
            if better {
                t1 = ratio;
                drop_at = Some(c);
            }
        }
        let t2 = if z_is_zero {
            f64::INFINITY
        } else {
            -s / z.dot(&normal)
        };
        let t = t1.min(t2);
        if !t.is_finite() {
            let mut cert = DVector::zeros(total);
            cert[index] = 1.0;
            for (c, a) in active.iter().enumerate() {
                if !a.equality {
                    cert[a.index] = -r[c];
                }
            }
            return Err(Error::Infeasible {
                constraint: index,
                certificate: cert,
            });
        }
        if !z_is_zero {
            *y += &z * t;
        }
        for (c, a) in active.iter_mut().enumerate() {
            a.multiplier -= t * r[c];
        }
        u_new += t;
        if t2 <= t1 {
            active.push(Active {
                index,
                normal,
                sign,
                multiplier: u_new,
                equality,
            });
            return Ok(());
        }
        let c = drop_at.expect("finite t1 has an index");
        active.remove(c);
    }
}
