use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::qp::{solve_qp, ActiveRow, QpError, QpProblem, QpSolution};
use super::rotation::{rotation_cost_terms, RotationObjective};
use crate::barrier::{BarrierEval, BarrierStack, ConstraintClass, RowLabel};
use crate::kinematics::{Frames, KinematicChain, KinematicsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    /// Geometric rows below `-h_recover` make the state invalid.
    pub h_recover: f64,
    /// Quadratic cost per unit slack on relaxed semantic rows.
    pub slack_weight: f64,
    /// KKT residual above which a solve is not reported optimal.
    pub kkt_tol: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            h_recover: 0.05,
            slack_weight: 1e4,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertStatus {
    Optimal,
    /// Semantic rows were softened to reach feasibility.
    Relaxed,
    /// No feasible input was found; the arm is stopped.
    FallbackZero,
}

impl CertStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertStatus::Optimal => "optimal",
            CertStatus::Relaxed => "relaxed",
            CertStatus::FallbackZero => "fallback_zero",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CertificationResult {
    pub u_cert: DVector<f64>,
    pub status: CertStatus,
    /// Barrier rows that hold with equality at `u_cert`.
    pub active_rows: Vec<RowLabel>,
    pub kkt_residual: f64,
    /// Slack per barrier row (nonzero only on relaxed semantic rows).
    pub slack_used: Vec<f64>,
    /// Wall-clock seconds spent in the solver.
    pub solve_time: f64,
    pub barriers: BarrierEval,
}

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("state is outside the recoverable band: {label} = {h:.4}")]
    InvalidState { label: String, h: f64 },
    #[error("malformed problem: {0}")]
    Problem(QpError),
}

/// Builds the QP: `H = 2I + H_rot`, `f = -2 u_cmd + f_rot`, rows `A u >= -alpha(h)`,
/// box `|u_j| <= vel_j`.
pub fn assemble(
    frames: &Frames,
    u_cmd: &DVector<f64>,
    eval: &BarrierEval,
    rot: &RotationObjective,
    vel_limit: &DVector<f64>,
) -> Result<QpProblem, FilterError> {
    let n = u_cmd.len();
    if vel_limit.len() != n || eval.a.ncols() != n || frames.joint_count() != n {
        return Err(FilterError::Kinematics(KinematicsError::DimensionMismatch {
            expected: n,
            got: frames.joint_count(),
        }));
    }
    let (h_rot, f_rot) = rotation_cost_terms(frames, rot)?;
    Ok(QpProblem {
        h: DMatrix::identity(n, n) * 2.0 + h_rot,
        f: -u_cmd * 2.0 + f_rot,
        a: eval.a.clone(),
        b: -&eval.alpha_h,
        box_lo: -vel_limit,
        box_hi: vel_limit.clone(),
    })
}

/// Certifies `u_cmd` at configuration `q`.
pub fn certify(
    chain: &KinematicChain,
    q: &DVector<f64>,
    u_cmd: &DVector<f64>,
    stack: &BarrierStack,
    rot: &RotationObjective,
    config: &CertifyConfig,
) -> Result<CertificationResult, FilterError> {
    let frames = chain.frames(q)?;
    if u_cmd.len() != chain.n() {
        return Err(FilterError::Kinematics(KinematicsError::DimensionMismatch {
            expected: chain.n(),
            got: u_cmd.len(),
        }));
    }
    let eval = stack.eval_frames(chain, &frames, q);
    certify_frames(&frames, u_cmd, eval, rot, &chain.limits.vel, config)
}

/// [`certify`] with frames and barrier rows already evaluated.
pub fn certify_frames(
    frames: &Frames,
    u_cmd: &DVector<f64>,
    eval: BarrierEval,
    rot: &RotationObjective,
    vel_limit: &DVector<f64>,
    config: &CertifyConfig,
) -> Result<CertificationResult, FilterError> {
    for (h, label) in eval.h.iter().zip(&eval.labels) {
        if label.class.is_geometric() && *h < -config.h_recover {
            return Err(FilterError::InvalidState {
                label: label.to_string(),
                h: *h,
            });
        }
    }
    let problem = assemble(frames, u_cmd, &eval, rot, vel_limit)?;
    let n = u_cmd.len();
    let m = eval.rows();
    let start = Instant::now();

    let first = solve_qp(&problem);
    if let Err(e @ (QpError::DimensionMismatch(_) | QpError::NotPositiveDefinite)) = first {
        return Err(FilterError::Problem(e));
    }
    if let Ok(sol) = &first {
        if sol.kkt_residual <= config.kkt_tol {
            return Ok(CertificationResult {
                u_cert: sol.x.clone(),
                status: CertStatus::Optimal,
                active_rows: active_labels(sol, &eval),
                kkt_residual: sol.kkt_residual,
                slack_used: vec![0.0; m],
                solve_time: start.elapsed().as_secs_f64(),
                barriers: eval,
            });
        }
        tracing::warn!(kkt = sol.kkt_residual, "solver residual above tolerance");
    }

    let sem: Vec<usize> = (0..m).filter(|&i| eval.labels[i].class == ConstraintClass::Sem).collect();
    if !sem.is_empty() {
        let relaxed = with_slack(&problem, &sem, config.slack_weight);
        if let Ok(sol) = solve_qp(&relaxed) {
            if sol.kkt_residual <= config.kkt_tol * (1.0 + config.slack_weight) {
                let u = sol.x.rows(0, n).into_owned();
                let au = &eval.a * &u;
                let mut slack = vec![0.0; m];
                for &i in &sem {
                    slack[i] = (problem.b[i] - au[i]).max(0.0);
                }
                let active = active_labels(&sol, &eval);
                return Ok(CertificationResult {
                    u_cert: u,
                    status: CertStatus::Relaxed,
                    active_rows: active,
                    kkt_residual: sol.kkt_residual,
                    slack_used: slack,
                    solve_time: start.elapsed().as_secs_f64(),
                    barriers: eval,
                });
            }
        }
    }

    tracing::warn!("certification infeasible, stopping");
    Ok(CertificationResult {
        u_cert: DVector::zeros(n),
        status: CertStatus::FallbackZero,
        active_rows: Vec::new(),
        kkt_residual: f64::NAN,
        slack_used: vec![0.0; m],
        solve_time: start.elapsed().as_secs_f64(),
        barriers: eval,
    })
}

fn active_labels(sol: &QpSolution, eval: &BarrierEval) -> Vec<RowLabel> {
    let mut rows: Vec<usize> = sol
        .active
        .iter()
        .filter_map(|(r, _)| match r {
            ActiveRow::Ineq(i) if *i < eval.rows() => Some(*i),
            _ => None,
        })
        .collect();
    rows.sort_unstable();
    rows.into_iter().map(|i| eval.labels[i].clone()).collect()
}

/// Appends one slack variable per listed row: `a_i u + s_i >= b_i`,
/// `s_i >= 0`, cost `weight * s_i^2`.
fn with_slack(p: &QpProblem, rows: &[usize], weight: f64) -> QpProblem {
    let n = p.n();
    let k = rows.len();
    let m = p.a.nrows();
    let mut h = DMatrix::zeros(n + k, n + k);
    h.view_mut((0, 0), (n, n)).copy_from(&p.h);
    for j in 0..k {
        h[(n + j, n + j)] = 2.0 * weight;
    }
    let mut f = DVector::zeros(n + k);
    f.rows_mut(0, n).copy_from(&p.f);
    let mut a = DMatrix::zeros(m, n + k);
    a.view_mut((0, 0), (m, n)).copy_from(&p.a);
    for (j, &i) in rows.iter().enumerate() {
        a[(i, n + j)] = 1.0;
    }
    let mut lo = DVector::from_element(n + k, 0.0);
    let mut hi = DVector::from_element(n + k, f64::INFINITY);
    lo.rows_mut(0, n).copy_from(&p.box_lo);
    hi.rows_mut(0, n).copy_from(&p.box_hi);
    QpProblem {
        h,
        f,
        a,
        b: p.b.clone(),
        box_lo: lo,
        box_hi: hi,
    }
}
