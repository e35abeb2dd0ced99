//! Independent reference implementations used only by tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use semfilter::filter::QpProblem;

/// Minimum of a strictly convex QP by enumerating every subset of rows
/// (including finite box bounds) as equalities. The optimum solves the
/// equality problem of its own active set, and every other feasible
/// candidate has a larger objective, so the smallest feasible candidate is
/// the answer. Returns `None` if no candidate is feasible.
pub fn brute_force_qp(p: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = p.f.len();
    let mut rows: Vec<(DVector<f64>, f64)> = (0..p.a.nrows()).map(|i| (p.a.row(i).transpose(), p.b[i])).collect();
    for j in 0..n {
        let e = DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 });
        if p.box_lo[j].is_finite() {
            rows.push((e.clone(), p.box_lo[j]));
        }
        if p.box_hi[j].is_finite() {
            rows.push((-e, -p.box_hi[j]));
        }
    }
    assert!(rows.len() <= 16, "too many rows to enumerate");
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let set: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        if set.len() > n {
            continue;
        }
        let k = set.len();
        // [H  -C'] [x]   [-f]
        // [C   0 ] [l] = [ b]
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&p.f));
        for (c, &i) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(n + c, j)] = rows[i].0[j];
                kkt[(j, n + c)] = -rows[i].0[j];
            }
            rhs[n + c] = rows[i].1;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        // rounding in a.x grows with |a| |x|
        let feasible = rows.iter().all(|(a, b)| a.dot(&x) >= b - 1e-9 * (1.0 + b.abs() + a.norm() * x.amax()));
        if !feasible {
            continue;
        }
        let obj = 0.5 * x.dot(&(&p.h * &x)) + p.f.dot(&x);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((x, obj));
        }
    }
    best
}
