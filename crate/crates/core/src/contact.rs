//! Frictionless unilateral contact with a rigid obstacle.
//!
//! Each contact node carries one parameter `p_i = v·d`, the auxiliary
//! displacement along the obstacle direction `d`, and one normal traction
//! unknown `t_i = t·d`. The physical constraint `u·d ≤ g0` becomes the bound
//! `p ≤ b` through the displacement transform. The potential energy of the
//! auxiliary elastostatic problem, evaluated on the boundary and restricted to
//! the solutions parametrized by `p`, is a quadratic `½ pᵀK p + cᵀp`; its
//! bound-constrained minimizer gives the active set, which is then polished
//! so that the nodal Signorini conditions hold exactly.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::assembly::{pairing_apply, MixedSystem};
use crate::error::{Error, Result};
use crate::model::Mesh;
use crate::timestepper::StepCoeffs;

/// Kelvin-Voigt bound `((τ+χ)/τ) g0 − (χ/τ) u_prev·d`.
pub fn contact_bounds(chi: f64, tau: f64, u_prev_n: &[f64], g0: &[f64]) -> Vec<f64> {
    g0.iter()
        .zip(u_prev_n)
        .map(|(g, u)| (tau + chi) / tau * g - chi / tau * u)
        .collect()
}

/// Bound for any rheology: `a0 g0 − a1 u^{k−1}·d + a2 u^{k−2}·d`.
pub fn transformed_bounds(c: &StepCoeffs, g0: &[f64], u1n: &[f64], u2n: &[f64]) -> Vec<f64> {
    (0..g0.len()).map(|i| c.a0 * g0[i] - c.a1 * u1n[i] + c.a2 * u2n[i]).collect()
}

#[derive(Debug, Clone)]
pub struct ContactQP {
    /// Condensed operator before symmetrization.
    pub k_tilde: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub c: DVector<f64>,
    pub b: DVector<f64>,
    /// `‖K̃ − K̃ᵀ‖ / ‖K̃‖` (Frobenius).
    pub asymmetry: f64,
}

impl ContactQP {
    pub fn objective(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&(&self.k * p)) + self.c.dot(p)
    }

    fn scale(&self) -> f64 {
        let s = self.c.amax().max(self.k.amax() * self.b.amax());
        if s > 0.0 { s } else { 1.0 }
    }
}

/// Step-independent part of the condensation: boundary response to unit
/// contact parameters and the nodal traction map.
#[derive(Debug, Clone)]
pub struct ContactOperator {
    /// Auxiliary boundary displacements per unit parameter (`2N × m`).
    pub v1: DMatrix<f64>,
    /// Auxiliary element-end tractions per unit parameter (`4E × m`).
    pub t1: DMatrix<f64>,
    /// `M v1`, so that `boundary_work(t, v1 e_j) = t · mv1_j`.
    pub mv1: DMatrix<f64>,
    pub k_tilde: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub asymmetry: f64,
    /// Nodal normal tractions per unit parameter (`m × m`).
    pub s: DMatrix<f64>,
}

impl ContactOperator {
    pub fn new(mesh: &Mesh, mixed: &MixedSystem) -> Result<ContactOperator> {
        let m = mixed.layout.contact.len();
        if m == 0 {
            return Err(Error::IllPosedContact("no contact nodes".into()));
        }
        let nu = mixed.layout.u.len();
        let nt = mixed.layout.t.len();
        let nk = mixed.layout.items.len();
        let zero_y = vec![0.0; nk];
        let mut v1 = DMatrix::zeros(nu, m);
        let mut t1 = DMatrix::zeros(nt, m);
        let mut mv1 = DMatrix::zeros(nt, m);
        let mut s = DMatrix::zeros(m, m);
        for j in 0..m {
            let z = mixed.z_param.column(j);
            let mut p = vec![0.0; m];
            p[j] = 1.0;
            let (u, t) = mixed.boundary(z.as_slice(), &zero_y, &p);
            mv1.set_column(j, &DVector::from_vec(pairing_apply(mesh, &u)));
            v1.set_column(j, &DVector::from_vec(u));
            t1.set_column(j, &DVector::from_vec(t));
            for (i, c) in mixed.layout.contact.iter().enumerate() {
                s[(i, j)] = z[c.traction];
            }
        }
        let k_tilde = t1.transpose() * &mv1;
        let k = (&k_tilde + k_tilde.transpose()) * 0.5;
        let asymmetry = (&k_tilde - k_tilde.transpose()).norm() / k_tilde.norm().max(f64::MIN_POSITIVE);
        Ok(ContactOperator { v1, t1, mv1, k_tilde, k, asymmetry, s })
    }

    /// Quadratic program for one step. `v0`, `t0` are the boundary values at
    /// `p = 0`, `g` the prescribed tractions (nonzero on Neumann ends only)
    /// and `b` the bounds.
    pub fn qp(&self, mesh: &Mesh, v0: &[f64], t0: &[f64], g: &[f64], b: Vec<f64>) -> ContactQP {
        let mv0 = DVector::from_vec(pairing_apply(mesh, v0));
        let t0v = DVector::from_column_slice(t0);
        let gv = DVector::from_column_slice(g);
        // ½ W(t, v) − W(g, v) with v = v0 + V1 p, t = t0 + T1 p
        let c = (self.mv1.transpose() * &t0v) * 0.5 + (self.t1.transpose() * &mv0) * 0.5
            - self.mv1.transpose() * &gv;
        ContactQP {
            k_tilde: self.k_tilde.clone(),
            k: self.k.clone(),
            c,
            b: DVector::from_vec(b),
            asymmetry: self.asymmetry,
        }
    }
}

/// Builds the step's quadratic program from scratch.
pub fn condense_contact(
    mesh: &Mesh,
    mixed: &MixedSystem,
    v0: &[f64],
    t0: &[f64],
    g: &[f64],
    b: Vec<f64>,
) -> Result<ContactQP> {
    Ok(ContactOperator::new(mesh, mixed)?.qp(mesh, v0, t0, g, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub p: DVector<f64>,
    /// Multipliers: `Kp + c` on the active set, zero elsewhere (QP), or the
    /// nodal normal tractions (Signorini polish).
    pub lambda: DVector<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
}

fn free_solve(k: &DMatrix<f64>, rhs_full: &DVector<f64>, p: &mut DVector<f64>, active: &[bool]) -> Result<()> {
    let free: Vec<usize> = (0..active.len()).filter(|&i| !active[i]).collect();
    if free.is_empty() {
        return Ok(());
    }
    let n = free.len();
    let mut kff = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        rhs[a] = rhs_full[i];
        for (bb, &j) in free.iter().enumerate() {
            kff[(a, bb)] = k[(i, j)];
        }
        for j in 0..active.len() {
            if active[j] {
                rhs[a] -= k[(i, j)] * p[j];
            }
        }
    }
    let kmax = kff.diagonal().amax();
    let chol = Cholesky::new(kff).filter(|c| {
        let l = c.l_dirty().diagonal();
        l.iter().all(|d| d * d > 1e-12 * kmax)
    });
    let chol = chol.ok_or_else(|| {
        Error::IllPosedContact(
            "condensed contact operator is singular on the free set; loads may pull the body off the obstacle".into(),
        )
    })?;
    let x = chol.solve(&rhs);
    for (a, &i) in free.iter().enumerate() {
        p[i] = x[a];
    }
    Ok(())
}

/// Primal active-set method for `min ½pᵀKp + cᵀp` subject to `p ≤ b`.
///
/// Starts with every bound active. `K` may be semidefinite as long as it is
/// definite on every free set visited, which holds when the loads press the
/// body onto the obstacle. Ties go to the lowest index. `max_iter` defaults to `10 m`.
pub fn solve_qp(qp: &ContactQP, max_iter: Option<usize>) -> Result<QpSolution> {
    let m = qp.b.len();
    let cap = max_iter.unwrap_or(10 * m.max(1));
    let scale = qp.scale();
    let tol_l = 1e-13 * scale;
    let tol_b = 1e-13 * qp.b.amax().max(1e-300);
    let mut p = qp.b.clone();
    let mut active = vec![true; m];
    let neg_c = -&qp.c;
    for it in 0..cap {
        let mut x = p.clone();
        for i in 0..m {
            if active[i] {
                x[i] = qp.b[i];
            }
        }
        free_solve(&qp.k, &neg_c, &mut x, &active)?;
        let d = &x - &p;
        let mut alpha = 1.0;
        let mut block = None;
        for i in 0..m {
            if !active[i] && x[i] > qp.b[i] + tol_b && d[i] > 0.0 {
                let a = ((qp.b[i] - p[i]) / d[i]).max(0.0);
                if a < alpha - 1e-15 {
                    alpha = a;
                    block = Some(i);
                }
            }
        }
        if let Some(j) = block {
            p += d * alpha;
            p[j] = qp.b[j];
            active[j] = true;
            continue;
        }
        p = x;
        let grad = &qp.k * &p + &qp.c;
        let mut drop = None;
        let mut worst = tol_l;
        for i in 0..m {
            if active[i] && grad[i] > worst {
                worst = grad[i];
                drop = Some(i);
            }
        }
        match drop {
            None => {
                let lambda = DVector::from_iterator(m, (0..m).map(|i| if active[i] { grad[i] } else { 0.0 }));
                return Ok(QpSolution { p, lambda, active, iterations: it + 1 });
            }
            Some(i) => active[i] = false,
        }
    }
    Err(Error::NonConvergence { iterations: cap, last: p.iter().copied().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
    pub stationarity: f64,
    /// Multiplier scale used by [`KktResidual::relative`].
    pub scale: f64,
    /// Bound scale.
    pub length: f64,
}

impl KktResidual {
    /// Largest residual after normalizing by the multiplier and bound scales.
    pub fn relative(&self) -> f64 {
        let (s, l) = (self.scale.max(f64::MIN_POSITIVE), self.length.max(f64::MIN_POSITIVE));
        (self.primal / l).max(self.dual / s).max(self.complementarity / (s * l)).max(self.stationarity / s)
    }
}

/// KKT residuals of `(p, λ)` for the quadratic program. Stationarity is
/// measured against `operator`: `qp.k` for the program actually solved,
/// `qp.k_tilde` to expose the discretization asymmetry.
pub fn kkt_check(qp: &ContactQP, operator: &DMatrix<f64>, p: &DVector<f64>, lambda: &DVector<f64>) -> KktResidual {
    let m = p.len();
    let grad = operator * p + &qp.c;
    let mut r = KktResidual {
        primal: 0.0,
        dual: 0.0,
        complementarity: 0.0,
        stationarity: 0.0,
        scale: qp.scale(),
        length: qp.b.amax().max(p.amax()),
    };
    for i in 0..m {
        r.primal = r.primal.max(p[i] - qp.b[i]);
        r.dual = r.dual.max(lambda[i]);
        r.complementarity = r.complementarity.max((lambda[i] * (p[i] - qp.b[i])).abs());
        r.stationarity = r.stationarity.max((grad[i] - lambda[i]).abs());
    }
    r
}

/// Nodal Signorini conditions `p ≤ b`, `t ≤ 0`, `t_i (p_i − b_i) = 0` for the
/// affine traction map `t = t0 + S p`, by least-index principal pivoting from
/// the given active set.
pub fn nodal_signorini(t0: &DVector<f64>, s: &DMatrix<f64>, b: &DVector<f64>, start: &[bool], max_iter: usize) -> Result<QpSolution> {
    let m = b.len();
    let t_scale = t0.amax().max((s * b).amax()).max(f64::MIN_POSITIVE);
    let len = b.amax().max(f64::MIN_POSITIVE);
    let mut active = start.to_vec();
    let mut p = b.clone();
    for it in 0..max_iter {
        let free: Vec<usize> = (0..m).filter(|&i| !active[i]).collect();
        for i in 0..m {
            if active[i] {
                p[i] = b[i];
            }
        }
        if !free.is_empty() {
            let n = free.len();
            let mut sff = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = -t0[i];
                for (bb, &j) in free.iter().enumerate() {
                    sff[(a, bb)] = s[(i, j)];
                }
                for j in 0..m {
                    if active[j] {
                        rhs[a] -= s[(i, j)] * b[j];
                    }
                }
            }
            let x = sff
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::IllPosedContact("singular nodal contact system".into()))?;
            for (a, &i) in free.iter().enumerate() {
                p[i] = x[a];
            }
        }
        let t = t0 + s * &p;
        let bad = (0..m).find(|&i| {
            if active[i] {
                t[i] > 1e-12 * t_scale
            } else {
                p[i] > b[i] + 1e-12 * len
            }
        });
        match bad {
            None => {
                let mut lambda = t;
                for i in 0..m {
                    if !active[i] {
                        lambda[i] = 0.0;
                    }
                }
                return Ok(QpSolution { p, lambda, active, iterations: it });
            }
            Some(i) => {
                active[i] = !active[i];
                if !active.iter().any(|&a| a) {
                    return Err(Error::IllPosedContact(
                        "loads pull the body off the obstacle; nothing holds it in place".into(),
                    ));
                }
            }
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, last: p.iter().copied().collect() })
}

/// Nodal Signorini residuals: bound violation, tensile traction,
/// complementarity, all against traction scale `t_scale` and length `len`.
pub fn nodal_kkt(t0: &DVector<f64>, s: &DMatrix<f64>, b: &DVector<f64>, p: &DVector<f64>, active: &[bool]) -> KktResidual {
    let t = t0 + s * p;
    let mut r = KktResidual {
        primal: 0.0,
        dual: 0.0,
        complementarity: 0.0,
        stationarity: 0.0,
        scale: t.amax().max(t0.amax()),
        length: b.amax().max(p.amax()),
    };
    for i in 0..b.len() {
        r.primal = r.primal.max(p[i] - b[i]);
        r.dual = r.dual.max(t[i]);
        r.complementarity = r.complementarity.max((t[i] * (p[i] - b[i])).abs());
        if !active[i] {
            r.stationarity = r.stationarity.max(t[i].abs());
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(k: DMatrix<f64>, c: Vec<f64>, b: Vec<f64>) -> ContactQP {
        ContactQP { k_tilde: k.clone(), k, c: DVector::from_vec(c), b: DVector::from_vec(b), asymmetry: 0.0 }
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(contact_bounds(0.0, 2.5, &[0.3], &[0.0]), vec![0.0]);
        let b = contact_bounds(45.0, 2.5, &[-0.001], &[0.0]);
        assert!((b[0] - 0.018).abs() < 1e-15);
        assert_eq!(contact_bounds(0.0, 2.5, &[0.0], &[0.01]), vec![0.01]);
    }

    #[test]
    fn one_dimensional_active() {
        let q = qp(DMatrix::from_element(1, 1, 2.0), vec![-4.0], vec![1.0]);
        let s = solve_qp(&q, None).unwrap();
        assert_eq!(s.p[0], 1.0);
        assert_eq!(s.lambda[0], -2.0);
        assert!(s.active[0]);
    }

    #[test]
    fn unconstrained_minimizer_feasible() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = qp(k.clone(), vec![1.0, -1.0], vec![10.0, 10.0]);
        let s = solve_qp(&q, None).unwrap();
        let x = k.lu().solve(&DVector::from_vec(vec![-1.0, 1.0])).unwrap();
        assert!((s.p - x).amax() < 1e-14);
        assert!(s.lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn kkt_reports_perturbations() {
        let q = qp(DMatrix::from_element(1, 1, 2.0), vec![-4.0], vec![1.0]);
        let s = solve_qp(&q, None).unwrap();
        let r = kkt_check(&q, &q.k, &s.p, &s.lambda);
        assert!(r.relative() < 1e-14);
        let r = kkt_check(&q, &q.k, &(s.p.clone() + DVector::from_element(1, 1e-3)), &s.lambda);
        assert!((r.primal - 1e-3).abs() < 1e-12);
        let r = kkt_check(&q, &q.k, &s.p, &DVector::from_element(1, 1.0));
        assert!((r.dual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn semidefinite_operator_with_pushing_load() {
        // rigid mode along (1, 1); the load pushes both parameters upward
        let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let q = qp(k, vec![-1.0, -0.5], vec![0.0, 0.2]);
        let s = solve_qp(&q, None).unwrap();
        let r = kkt_check(&q, &q.k, &s.p, &s.lambda);
        assert!(r.relative() < 1e-12, "{r:?}");
        assert!(s.p[0] <= 0.0 + 1e-15 && s.p[1] <= 0.2 + 1e-15);
    }

    #[test]
    fn pulling_load_is_ill_posed() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let q = qp(k, vec![1.0, 1.0], vec![0.0, 0.0]);
        assert!(matches!(solve_qp(&q, None), Err(Error::IllPosedContact(_))));
    }

    #[test]
    fn nodal_polish_matches_lcp_definition() {
        let s = DMatrix::from_row_slice(3, 3, &[3.0, -1.0, 0.0, -1.0, 3.0, -1.0, 0.0, -1.0, 3.0]);
        let t0 = DVector::from_vec(vec![-2.0, 1.0, 0.5]);
        let b = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let sol = nodal_signorini(&t0, &s, &b, &[true, true, true], 50).unwrap();
        let r = nodal_kkt(&t0, &s, &b, &sol.p, &sol.active);
        assert!(r.relative() < 1e-12, "{r:?}");
    }
}
