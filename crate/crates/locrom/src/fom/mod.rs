//! Full-order steady models: operator-decomposed residuals, a damped-Newton
//! steady solver, and the two built-in one-dimensional bifurcation models.

mod chafee;

pub use chafee::{
    default_branch_schedule, make_modal_model, make_pitchfork_model, ModalModel, PitchforkModel,
    ScheduleSegment,
};

use crate::linalg::{lu_solve, DenseMatrix, LinalgError};
use std::fmt;
use thiserror::Error;

/// Default absolute tolerance on the grid-weighted residual norm.
pub const STEADY_TOL_DEFAULT: f64 = 1e-10;
/// Converged solutions whose largest entry is below this are classified as
/// the trivial branch. Nonzero branches shrink toward onset, but any branch
/// point a sampling plan can realistically hit sits orders of magnitude above
/// this floor, while a converged zero solution sits orders below it.
pub const TRIVIAL_BRANCH_TOL: f64 = 1e-6;
/// Default Newton iteration cap for full-order steady solves.
pub const STEADY_MAX_ITER_DEFAULT: usize = 50;
/// Most step halvings attempted by the residual line search before declaring
/// stagnation.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("invalid branch schedule: {0}")]
    InvalidSchedule(String),
    #[error("theta = {theta} outside the model domain [{lo}, {hi}]")]
    ThetaOutOfDomain { theta: f64, lo: f64, hi: f64 },
    #[error("Jacobian singular at theta = {theta}, iteration {iteration}")]
    SingularJacobian {
        theta: f64,
        iteration: usize,
        /// Iterate at which the factorization failed, for diagnosis.
        iterate: Vec<f64>,
        #[source]
        source: LinalgError,
    },
}

/// Identifies which solution branch a steady state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchId {
    /// The zero solution.
    Trivial,
    /// Positive-observable pitchfork branch.
    Upper,
    /// Negative-observable pitchfork branch.
    Lower,
    /// Modal branch with the given number of humps.
    Mode(u32),
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchId::Trivial => write!(f, "trivial"),
            BranchId::Upper => write!(f, "upper"),
            BranchId::Lower => write!(f, "lower"),
            BranchId::Mode(k) => write!(f, "mode:{k}"),
        }
    }
}

impl std::str::FromStr for BranchId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trivial" => Ok(BranchId::Trivial),
            "upper" => Ok(BranchId::Upper),
            "lower" => Ok(BranchId::Lower),
            _ => match s.strip_prefix("mode:") {
                Some(k) => k
                    .parse::<u32>()
                    .map(BranchId::Mode)
                    .map_err(|e| format!("bad mode number in branch id {s:?}: {e}")),
                None => Err(format!("unknown branch id {s:?}")),
            },
        }
    }
}

/// Sparse 3-index tensor `Q[i,j,k]` stored as explicit entries.
#[derive(Debug, Clone)]
pub struct SparseTensor3 {
    pub dim: usize,
    pub entries: Vec<(usize, usize, usize, f64)>,
}

/// Sparse 4-index tensor `C[i,j,k,l]` stored as explicit entries.
#[derive(Debug, Clone)]
pub struct SparseTensor4 {
    pub dim: usize,
    pub entries: Vec<([usize; 4], f64)>,
}

/// A nonlinear term together with its parameter coupling: when `theta_scaled`
/// is set, the stored tensor enters the residual multiplied by the parameter.
#[derive(Debug, Clone)]
pub struct QuadraticTerm {
    pub tensor: SparseTensor3,
    pub theta_scaled: bool,
}

#[derive(Debug, Clone)]
pub struct CubicTerm {
    pub tensor: SparseTensor4,
    pub theta_scaled: bool,
}

/// Parameter-affine operator decomposition of a steady residual,
///
/// `residual(u, theta) = (A0 + theta*A1) u + sQ(theta) Q:(u (x) u)
///  + sC(theta) C:(u (x) u (x) u) - (f0 + theta*f1)`,
///
/// where each tensor's scale factor `s(theta)` is `theta` when flagged and 1
/// otherwise. All parameter dependence lives in the scalar factors, so the
/// operators themselves assemble once.
#[derive(Debug, Clone)]
pub struct OperatorDecomposition {
    pub dim: usize,
    pub linear_const: DenseMatrix,
    pub linear_param: DenseMatrix,
    pub load_const: Vec<f64>,
    pub load_param: Vec<f64>,
    pub quadratic: Option<QuadraticTerm>,
    pub cubic: Option<CubicTerm>,
}

impl OperatorDecomposition {
    /// Purely linear decomposition with zero loads.
    pub fn linear(a0: DenseMatrix, a1: DenseMatrix) -> Self {
        let dim = a0.rows();
        assert_eq!(a0.cols(), dim);
        assert_eq!(a1.rows(), dim);
        assert_eq!(a1.cols(), dim);
        OperatorDecomposition {
            dim,
            linear_const: a0,
            linear_param: a1,
            load_const: vec![0.0; dim],
            load_param: vec![0.0; dim],
            quadratic: None,
            cubic: None,
        }
    }

    fn scale(theta_scaled: bool, theta: f64) -> f64 {
        if theta_scaled {
            theta
        } else {
            1.0
        }
    }

    pub fn residual(&self, u: &[f64], theta: f64) -> Vec<f64> {
        assert_eq!(u.len(), self.dim, "state dimension mismatch");
        let mut r = self.linear_const.mat_vec(u);
        let a1u = self.linear_param.mat_vec(u);
        for i in 0..self.dim {
            r[i] += theta * a1u[i] - self.load_const[i] - theta * self.load_param[i];
        }
        if let Some(q) = &self.quadratic {
            let s = Self::scale(q.theta_scaled, theta);
            for &(i, j, k, w) in &q.tensor.entries {
                r[i] += s * w * u[j] * u[k];
            }
        }
        if let Some(c) = &self.cubic {
            let s = Self::scale(c.theta_scaled, theta);
            for &([i, j, k, l], w) in &c.tensor.entries {
                r[i] += s * w * u[j] * u[k] * u[l];
            }
        }
        r
    }

    pub fn jacobian(&self, u: &[f64], theta: f64) -> DenseMatrix {
        assert_eq!(u.len(), self.dim, "state dimension mismatch");
        let mut jac = DenseMatrix::zeros(self.dim, self.dim);
        for col in 0..self.dim {
            for row in 0..self.dim {
                jac.set(
                    row,
                    col,
                    self.linear_const.get(row, col) + theta * self.linear_param.get(row, col),
                );
            }
        }
        if let Some(q) = &self.quadratic {
            let s = Self::scale(q.theta_scaled, theta);
            for &(i, j, k, w) in &q.tensor.entries {
                jac.set(i, j, jac.get(i, j) + s * w * u[k]);
                jac.set(i, k, jac.get(i, k) + s * w * u[j]);
            }
        }
        if let Some(c) = &self.cubic {
            let s = Self::scale(c.theta_scaled, theta);
            for &([i, j, k, l], w) in &c.tensor.entries {
                jac.set(i, j, jac.get(i, j) + s * w * u[k] * u[l]);
                jac.set(i, k, jac.get(i, k) + s * w * u[j] * u[l]);
                jac.set(i, l, jac.get(i, l) + s * w * u[j] * u[k]);
            }
        }
        jac
    }
}

/// A steady parametrized full-order model over a one-dimensional parameter
/// interval, with a branch protocol that tells snapshot generation which
/// solution branch each parameter value follows.
pub trait FullOrderModel: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn parameter_domain(&self) -> (f64, f64);
    fn operators(&self) -> &OperatorDecomposition;
    /// Branch the snapshot at `theta` should follow.
    fn snapshot_branch(&self, theta: f64) -> BranchId;
    /// Initial guess aimed at the requested branch.
    fn branch_seed(&self, theta: f64, branch: BranchId) -> Vec<f64>;
    /// Branch a converged solution actually lies on, judged from the solution
    /// alone. Snapshot generation uses this to detect warm starts that fell
    /// into a different branch's basin.
    fn classify_branch(&self, u: &[f64]) -> BranchId;
    /// Grid index whose point value is the scalar observable.
    fn observable_index(&self) -> usize;
    fn observable(&self, u: &[f64]) -> f64 {
        u[self.observable_index()]
    }
    /// Weight `w` of the residual norm `sqrt(w * sum r_i^2)`; grid-based
    /// models return their spacing so the measure approximates an L2 norm
    /// independently of resolution.
    fn residual_norm_weight(&self) -> f64 {
        1.0
    }
}

pub fn weighted_norm(v: &[f64], weight: f64) -> f64 {
    (weight * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Serializable description of a built-in model, sufficient to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Pitchfork {
        n_interior: usize,
        domain_length: f64,
        /// Branch tracked above the critical parameter.
        branch: BranchId,
    },
    Modal {
        n_interior: usize,
        schedule: Vec<ScheduleSegment>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn FullOrderModel>, ModelError> {
        match self {
            ModelSpec::Pitchfork {
                n_interior,
                domain_length,
                branch,
            } => {
                let model = make_pitchfork_model(*n_interior, *domain_length)?
                    .with_tracked_branch(*branch)?;
                Ok(Box::new(model))
            }
            ModelSpec::Modal {
                n_interior,
                schedule,
            } => Ok(Box::new(make_modal_model(*n_interior, schedule.clone())?)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Pitchfork { .. } => "pitchfork",
            ModelSpec::Modal { .. } => "modal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadySolveReport {
    pub theta: f64,
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Grid-weighted residual norm at the final iterate.
    pub residual_norm: f64,
    /// Branch the caller was tracking, if any; stamped by snapshot generation.
    pub branch: Option<BranchId>,
}

/// Damped Newton iteration for `residual(u, theta) = 0`.
///
/// Each step solves the dense Jacobian system and backtracks by halving until
/// the residual norm strictly decreases. Exhausting `max_iter` (or stalling in
/// the line search) yields a report with `converged = false` rather than an
/// error; a singular Jacobian is an error carrying the offending iterate.
pub fn steady_solve(
    model: &dyn FullOrderModel,
    theta: f64,
    init: &[f64],
    steady_tol: f64,
    max_iter: usize,
) -> Result<SteadySolveReport, ModelError> {
    let (lo, hi) = model.parameter_domain();
    if !(theta >= lo && theta <= hi) {
        return Err(ModelError::ThetaOutOfDomain { theta, lo, hi });
    }
    if init.len() != model.dim() {
        return Err(ModelError::InvalidInput(format!(
            "initial guess has length {}, model dimension is {}",
            init.len(),
            model.dim()
        )));
    }
    let ops = model.operators();
    let weight = model.residual_norm_weight();
    let mut u = init.to_vec();
    let mut r = ops.residual(&u, theta);
    let mut r_norm = weighted_norm(&r, weight);

    for iteration in 0..max_iter {
        if r_norm <= steady_tol {
            return Ok(SteadySolveReport {
                theta,
                solution: u,
                iterations: iteration,
                converged: true,
                residual_norm: r_norm,
                branch: None,
            });
        }
        let jac = ops.jacobian(&u, theta);
        let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
        let step = lu_solve(&jac, &neg_r).map_err(|source| ModelError::SingularJacobian {
            theta,
            iteration,
            iterate: u.clone(),
            source,
        })?;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = u.iter().zip(&step).map(|(x, d)| x + t * d).collect();
            let cand_r = ops.residual(&candidate, theta);
            let cand_norm = weighted_norm(&cand_r, weight);
            if cand_norm < r_norm {
                u = candidate;
                r = cand_r;
                r_norm = cand_norm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Stagnation at the attainable residual floor.
            return Ok(SteadySolveReport {
                theta,
                solution: u,
                iterations: iteration + 1,
                converged: r_norm <= steady_tol,
                residual_norm: r_norm,
                branch: None,
            });
        }
    }

    let converged = r_norm <= steady_tol;
    Ok(SteadySolveReport {
        theta,
        solution: u,
        iterations: max_iter,
        converged,
        residual_norm: r_norm,
        branch: None,
    })
}

/// Number of humps of a grid function: sign changes in its sequence of
/// significant first differences (i.e. interior extrema for a function pinned
/// to zero at both ends). A developed `k`-hump modal state yields `k`; a
/// numerically zero state yields 0.
pub fn hump_count(u: &[f64]) -> usize {
    let scale = u.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(1.0);
    let threshold = 1e-8 * scale;
    let mut flips = 0;
    let mut last_sign = 0i8;
    for w in u.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= threshold {
            continue;
        }
        let sign = if d > 0.0 { 1 } else { -1 };
        if last_sign != 0 && sign != last_sign {
            flips += 1;
        }
        last_sign = sign;
    }
    flips
}
