//! Dense strictly convex QP solver (Goldfarb-Idnani dual active set).
//!
//! Solves `min 1/2 x'Hx + f'x  s.t.  A x >= b,  lo <= x <= hi`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub box_lo: DVector<f64>,
    pub box_hi: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cost matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),
}

/// Where a constraint of the solver's internal list comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveRow {
    /// Row of `A`.
    Ineq(usize),
    /// Lower box bound on a variable.
    Lower(usize),
    /// Upper box bound on a variable.
    Upper(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Active constraints with their (nonnegative) multipliers, in the
    /// caller's scaling.
    pub active: Vec<(ActiveRow, f64)>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpProblem {
    /// Problem without general rows or bounds.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            box_lo: DVector::from_element(n, f64::NEG_INFINITY),
            box_hi: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Largest constraint violation at `x` (0 when feasible). Rows of `A`
    /// are measured after scaling to unit norm, so the value is the distance
    /// from `x` to the violated half space.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        let ax = &self.a * x;
        for i in 0..ax.len() {
            let norm = self.a.row(i).norm();
            let gap = self.b[i] - ax[i];
            worst = worst.max(if norm < 1e-12 { gap } else { gap / norm });
        }
        for j in 0..x.len() {
            worst = worst.max(self.box_lo[j] - x[j]).max(x[j] - self.box_hi[j]);
        }
        worst
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |what: &str| Err(QpError::DimensionMismatch(what.to_string()));
        if self.h.nrows() != n || self.h.ncols() != n {
            return bad("H must be n x n");
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return bad("A must be m x n with b of length m");
        }
        if self.box_lo.len() != n || self.box_hi.len() != n {
            return bad("box bounds must have length n");
        }
        if (0..n).any(|j| self.box_lo[j] > self.box_hi[j]) {
            return Err(QpError::Infeasible);
        }
        Ok(())
    }
}

struct Row {
    origin: ActiveRow,
    normal: DVector<f64>,
    rhs: f64,
    /// Norm the row was divided by.
    scale: f64,
}

fn collect_rows(p: &QpProblem) -> Result<Vec<Row>, QpError> {
    let n = p.n();
    let mut rows = Vec::with_capacity(p.a.nrows() + 2 * n);
    for i in 0..p.a.nrows() {
        let normal: DVector<f64> = p.a.row(i).transpose();
        let norm = normal.norm();
        if norm < 1e-12 {
            // 0 >= b
            if p.b[i] > 1e-12 {
                return Err(QpError::Infeasible);
            }
            continue;
        }
        rows.push(Row {
            origin: ActiveRow::Ineq(i),
            normal: normal / norm,
            rhs: p.b[i] / norm,
            scale: norm,
        });
    }
    for j in 0..n {
        if p.box_lo[j].is_finite() {
            rows.push(Row {
                origin: ActiveRow::Lower(j),
                normal: DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 }),
                rhs: p.box_lo[j],
                scale: 1.0,
            });
        }
        if p.box_hi[j].is_finite() {
            rows.push(Row {
                origin: ActiveRow::Upper(j),
                normal: DVector::from_fn(n, |k, _| if k == j { -1.0 } else { 0.0 }),
                rhs: -p.box_hi[j],
                scale: 1.0,
            });
        }
    }
    Ok(rows)
}

const FEAS_TOL: f64 = 1e-11;
const DEP_TOL: f64 = 1e-10;

/// Primal and dual step directions for adding `np` to the active set.
fn directions(chol: &Cholesky<f64, Dyn>, rows: &[Row], active: &[usize], np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let hinv_np = chol.solve(np);
    if active.is_empty() {
        return (hinv_np, DVector::zeros(0));
    }
    let k = active.len();
    let n = np.len();
    let nmat = DMatrix::from_fn(n, k, |i, j| rows[active[j]].normal[i]);
    let hinv_n = chol.solve(&nmat);
    let gram = nmat.transpose() * &hinv_n;
    let rhs = nmat.transpose() * &hinv_np;
    // active normals are kept linearly independent, so gram is SPD
    let r = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram.pseudo_inverse(1e-14).map(|g| g * &rhs).unwrap_or_else(|_| DVector::zeros(k)),
    };
    if k >= n {
        // no room left: the new row is dependent on the active ones
        return (DVector::zeros(n), r);
    }
    let z = hinv_np - hinv_n * &r;
    (z, r)
}

/// Solves `p` exactly (up to rounding) in a finite number of active-set
/// changes. Deterministic.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.check()?;
    let n = p.n();
    let chol = p.h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let rows = collect_rows(p)?;

    let mut x = -chol.solve(&p.f);
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let max_iter = 50 * (rows.len() + n) + 100;
    let mut iterations = 0;

    loop {
        // most violated constraint
        let mut pick: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let s = row.normal.dot(&x) - row.rhs;
            if s < -FEAS_TOL && pick.is_none_or(|(_, worst)| s < worst) {
                pick = Some((i, s));
            }
        }
        let Some((pidx, _)) = pick else {
            break;
        };
        let mut u_plus = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::MaxIterations(max_iter));
            }
            let np = &rows[pidx].normal;
            let (z, r) = directions(&chol, &rows, &active, np);

            // partial step: the first active multiplier to hit zero
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let t = mult[j] / rj;
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            // np^T z is the part of np^T H^-1 np outside the span of the
            // active normals; a tiny ratio means np is dependent on them
            let zn = z.dot(np);
            let t2 = if zn <= DEP_TOL * np.dot(&chol.solve(np)) {
                f64::INFINITY
            } else {
                -(np.dot(&x) - rows[pidx].rhs) / zn
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            for (j, m) in mult.iter_mut().enumerate() {
                *m -= t * r[j];
            }
            u_plus += t;
            if t2.is_finite() {
                x += &z * t;
            }
            if t2 <= t1 {
                active.push(pidx);
                mult.push(u_plus);
                break;
            }
            let j = drop.expect("partial step has a blocking row");
            active.remove(j);
            mult.remove(j);
        }
    }

    let mut active_rows: Vec<(ActiveRow, f64)> = active
        .iter()
        .zip(&mult)
        .map(|(&i, &m)| (rows[i].origin, m / rows[i].scale))
        .collect();
    let mut kkt_residual = kkt_residual(p, &x, &active_rows);
    if kkt_residual > 1e-12 {
        if let Some((x2, m2)) = polish(p, &rows, &active) {
            let rows2: Vec<(ActiveRow, f64)> =
                active.iter().zip(&m2).map(|(&i, &m)| (rows[i].origin, m / rows[i].scale)).collect();
            let r2 = self::kkt_residual(p, &x2, &rows2);
            if r2 < kkt_residual {
                x = x2;
                active_rows = rows2;
                kkt_residual = r2;
            }
        }
    }
    Ok(QpSolution {
        objective: p.objective(&x),
        x,
        active: active_rows,
        kkt_residual,
        iterations,
    })
}

/// Re-solves the equality problem of the final active set in one LU step.
/// The dual updates accumulate rounding when the active normals are nearly
/// dependent; this recovers the digits the iteration lost.
fn polish(p: &QpProblem, rows: &[Row], active: &[usize]) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = p.n();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&p.f));
    for (c, &i) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + c, j)] = rows[i].normal[j];
            kkt[(j, n + c)] = -rows[i].normal[j];
        }
        rhs[n + c] = rows[i].rhs;
    }
    let sol = kkt.lu().solve(&rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).iter().copied().collect()))
}

/// Max of stationarity, primal feasibility, dual feasibility and
/// complementarity residuals for a candidate primal/dual pair.
pub fn kkt_residual(p: &QpProblem, x: &DVector<f64>, active: &[(ActiveRow, f64)]) -> f64 {
    let n = p.n();
    let mut grad = &p.h * x + &p.f;
    let mut worst: f64 = 0.0;
    for &(row, lambda) in active {
        worst = worst.max(-lambda);
        let (slack, normal): (f64, DVector<f64>) = match row {
            ActiveRow::Ineq(i) => (p.a.row(i).dot(&x.transpose()) - p.b[i], p.a.row(i).transpose()),
            ActiveRow::Lower(j) => (x[j] - p.box_lo[j], DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 })),
            ActiveRow::Upper(j) => (p.box_hi[j] - x[j], DVector::from_fn(n, |k, _| if k == j { -1.0 } else { 0.0 })),
        };
        // lambda * slack is invariant to row scaling
        worst = worst.max((lambda * slack).abs());
        grad -= normal * lambda;
    }
    worst.max(grad.amax()).max(p.max_violation(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum() {
        let p = QpProblem::unconstrained(DMatrix::identity(3, 3) * 2.0, DVector::from_vec(vec![-2.0, 4.0, 0.0]));
        let s = solve_qp(&p).unwrap();
        assert!((s.x - DVector::from_vec(vec![1.0, -2.0, 0.0])).amax() < 1e-12);
        assert!(s.active.is_empty());
    }

    #[test]
    fn one_dimensional_projection() {
        // min (u-1)^2 s.t. u >= 0.5 and u >= 1.5
        let mut p = QpProblem::unconstrained(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, -2.0));
        p.a = DMatrix::from_element(1, 1, 1.0);
        p.b = DVector::from_element(1, 0.5);
        assert!((solve_qp(&p).unwrap().x[0] - 1.0).abs() < 1e-12);
        p.b[0] = 1.5;
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-12);
        assert!((s.active[0].1 - 1.0).abs() < 1e-12);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn box_clamps() {
        let mut p = QpProblem::unconstrained(DMatrix::identity(2, 2) * 2.0, DVector::from_vec(vec![-6.0, 6.0]));
        p.box_lo = DVector::from_element(2, -1.0);
        p.box_hi = DVector::from_element(2, 1.0);
        let s = solve_qp(&p).unwrap();
        assert!((s.x - DVector::from_vec(vec![1.0, -1.0])).amax() < 1e-12);
        assert_eq!(s.active.len(), 2);
    }

    #[test]
    fn dependent_rows() {
        // x + y >= 1 stated twice and scaled
        let mut p = QpProblem::unconstrained(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2));
        p.a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 1.0, 0.0]);
        p.b = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        let s = solve_qp(&p).unwrap();
        assert!((s.x - DVector::from_vec(vec![0.5, 0.5])).amax() < 1e-12);
        assert!(s.kkt_residual < 1e-10);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = QpProblem::unconstrained(DMatrix::identity(1, 1), DVector::zeros(1));
        p.a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        p.b = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(solve_qp(&p), Err(QpError::Infeasible));
        let mut p = QpProblem::unconstrained(DMatrix::identity(1, 1), DVector::zeros(1));
        p.a = DMatrix::from_element(1, 1, 1.0);
        p.b = DVector::from_element(1, 2.0);
        p.box_hi = DVector::from_element(1, 1.0);
        assert_eq!(solve_qp(&p), Err(QpError::Infeasible));
    }

    #[test]
    fn rejects_indefinite_cost() {
        let p = QpProblem::unconstrained(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])), DVector::zeros(2));
        assert_eq!(solve_qp(&p), Err(QpError::NotPositiveDefinite));
    }
}
