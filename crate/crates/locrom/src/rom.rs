//! Galerkin-projected reduced models: offline projection of the full-order
//! operators onto a basis, fixed-point and Newton solvers for the reduced
//! system, error measures, global comparison models, and the reduced-model
//! store.

use crate::fom::{FullOrderModel, OperatorDecomposition};
use crate::linalg::{lu_solve, norm2, DenseMatrix, LinalgError};
use crate::podbasis::{LocalBasis, PodError, TruncationRule, BASIS_ORTHO_TOL};
use crate::snapshots::SnapshotSet;
use crate::store::{self, fmt_full, DenseTensor, StoreError};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const ROM_TOL_DEFAULT: f64 = 1e-10;
/// Reduced iteration cap; generous because the fixed-point scheme can be slow.
pub const ROM_MAX_ITER_DEFAULT: usize = 3000;
const MAX_HALVINGS: usize = 30;

pub const ROM_META_FILE: &str = "meta.txt";
const ROM_META_FORMAT: &str = "locrom-rom-v1";

#[derive(Debug, Error)]
pub enum RomError {
    #[error("reduced-model dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("reduced-model store metadata invalid: {0}")]
    Meta(String),
    #[error("cannot write reduced-model store: {0}")]
    Io(#[from] std::io::Error),
}

/// Which basis a reduced model was projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisId {
    Local(usize),
    /// Global basis with as many modes as all local bases combined.
    Global1,
    /// Global basis with as many modes as the largest local basis.
    Global2,
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisId::Local(k) => write!(f, "local:{k}"),
            BasisId::Global1 => write!(f, "global1"),
            BasisId::Global2 => write!(f, "global2"),
        }
    }
}

impl FromStr for BasisId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global1" => Ok(BasisId::Global1),
            "global2" => Ok(BasisId::Global2),
            other => match other.strip_prefix("local:") {
                Some(k) => Ok(BasisId::Local(
                    k.parse().map_err(|_| format!("bad basis id {s:?}"))?,
                )),
                None => Err(format!("bad basis id {s:?}")),
            },
        }
    }
}

/// A projected tensor term with its parameter coupling.
#[derive(Debug, Clone)]
pub struct ReducedTensorTerm {
    pub tensor: DenseTensor,
    pub theta_scaled: bool,
}

/// The full-order operator decomposition contracted onto a basis; everything
/// the online stage needs to evaluate the reduced residual, with no
/// full-order dimensions left.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub basis_ref: BasisId,
    pub l: usize,
    pub a0_r: DenseMatrix,
    pub a1_r: DenseMatrix,
    pub f0_r: Vec<f64>,
    pub f1_r: Vec<f64>,
    /// Projected quadratic tensor, L x L x L.
    pub q_r: Option<ReducedTensorTerm>,
    /// Projected cubic tensor, L x L x L x L.
    pub c_r: Option<ReducedTensorTerm>,
}

fn scale(theta_scaled: bool, theta: f64) -> f64 {
    if theta_scaled {
        theta
    } else {
        1.0
    }
}

impl ReducedModel {
    pub fn residual(&self, a: &[f64], theta: f64) -> Vec<f64> {
        assert_eq!(a.len(), self.l, "coefficient dimension mismatch");
        let mut r = self.a0_r.mat_vec(a);
        let a1a = self.a1_r.mat_vec(a);
        for i in 0..self.l {
            r[i] += theta * a1a[i] - self.f0_r[i] - theta * self.f1_r[i];
        }
        if let Some(q) = &self.q_r {
            let s = scale(q.theta_scaled, theta);
            for i in 0..self.l {
                let mut acc = 0.0;
                for j in 0..self.l {
                    for k in 0..self.l {
                        acc += q.tensor.get(&[i, j, k]) * a[j] * a[k];
                    }
                }
                r[i] += s * acc;
            }
        }
        if let Some(c) = &self.c_r {
            let s = scale(c.theta_scaled, theta);
            for i in 0..self.l {
                let mut acc = 0.0;
                for j in 0..self.l {
                    for k in 0..self.l {
                        for m in 0..self.l {
                            acc += c.tensor.get(&[i, j, k, m]) * a[j] * a[k] * a[m];
                        }
                    }
                }
                r[i] += s * acc;
            }
        }
        r
    }

    pub fn jacobian(&self, a: &[f64], theta: f64) -> DenseMatrix {
        let mut jac = DenseMatrix::zeros(self.l, self.l);
        for col in 0..self.l {
            for row in 0..self.l {
                jac.set(
                    row,
                    col,
                    self.a0_r.get(row, col) + theta * self.a1_r.get(row, col),
                );
            }
        }
        if let Some(q) = &self.q_r {
            let s = scale(q.theta_scaled, theta);
            for i in 0..self.l {
                for j in 0..self.l {
                    let mut acc = 0.0;
                    for k in 0..self.l {
                        acc += (q.tensor.get(&[i, j, k]) + q.tensor.get(&[i, k, j])) * a[k];
                    }
                    jac.set(i, j, jac.get(i, j) + s * acc);
                }
            }
        }
        if let Some(c) = &self.c_r {
            let s = scale(c.theta_scaled, theta);
            for i in 0..self.l {
                for j in 0..self.l {
                    let mut acc = 0.0;
                    for k in 0..self.l {
                        for m in 0..self.l {
                            acc += (c.tensor.get(&[i, j, k, m])
                                + c.tensor.get(&[i, k, j, m])
                                + c.tensor.get(&[i, k, m, j]))
                                * a[k]
                                * a[m];
                        }
                    }
                    jac.set(i, j, jac.get(i, j) + s * acc);
                }
            }
        }
        jac
    }

    /// Linear system matrix of one fixed-point step: nonlinear terms enter
    /// with all but their last input slot frozen at the current iterate.
    fn frozen_matrix(&self, a: &[f64], theta: f64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.l, self.l);
        for col in 0..self.l {
            for row in 0..self.l {
                m.set(
                    row,
                    col,
                    self.a0_r.get(row, col) + theta * self.a1_r.get(row, col),
                );
            }
        }
        if let Some(q) = &self.q_r {
            let s = scale(q.theta_scaled, theta);
            for i in 0..self.l {
                for k in 0..self.l {
                    let mut acc = 0.0;
                    for j in 0..self.l {
                        acc += q.tensor.get(&[i, j, k]) * a[j];
                    }
                    m.set(i, k, m.get(i, k) + s * acc);
                }
            }
        }
        if let Some(c) = &self.c_r {
            let s = scale(c.theta_scaled, theta);
            for i in 0..self.l {
                for mm in 0..self.l {
                    let mut acc = 0.0;
                    for j in 0..self.l {
                        for k in 0..self.l {
                            acc += c.tensor.get(&[i, j, k, mm]) * a[j] * a[k];
                        }
                    }
                    m.set(i, mm, m.get(i, mm) + s * acc);
                }
            }
        }
        m
    }

    fn load(&self, theta: f64) -> Vec<f64> {
        (0..self.l)
            .map(|i| self.f0_r[i] + theta * self.f1_r[i])
            .collect()
    }
}

/// Contracts every operator of the decomposition onto the basis columns:
/// matrices as `basis^T * A * basis`, loads as `basis^T * f`, and tensors
/// index-by-index over their sparse entries.
pub fn project_operators(
    ops: &OperatorDecomposition,
    basis: &LocalBasis,
    basis_ref: BasisId,
) -> Result<ReducedModel, RomError> {
    if ops.dim != basis.dim() {
        return Err(RomError::Dimension(format!(
            "operators of dimension {} projected onto a basis over dimension {}",
            ops.dim,
            basis.dim()
        )));
    }
    let psi = &basis.basis;
    let l = basis.len();
    let psi_t = psi.transpose();
    let a0_r = psi_t.matmul(&ops.linear_const.matmul(psi));
    let a1_r = psi_t.matmul(&ops.linear_param.matmul(psi));
    let f0_r = psi.transpose_mat_vec(&ops.load_const);
    let f1_r = psi.transpose_mat_vec(&ops.load_param);

    let q_r = ops.quadratic.as_ref().map(|q| {
        let mut t = DenseTensor::zeros(vec![l, l, l]);
        for &(i, j, k, w) in &q.tensor.entries {
            for a in 0..l {
                let wa = w * psi.col(a)[i];
                if wa == 0.0 {
                    continue;
                }
                for b in 0..l {
                    let wab = wa * psi.col(b)[j];
                    for c in 0..l {
                        t.add(&[a, b, c], wab * psi.col(c)[k]);
                    }
                }
            }
        }
        ReducedTensorTerm {
            tensor: t,
            theta_scaled: q.theta_scaled,
        }
    });
    let c_r = ops.cubic.as_ref().map(|c| {
        let mut t = DenseTensor::zeros(vec![l, l, l, l]);
        for &([i, j, k, m], w) in &c.tensor.entries {
            for a in 0..l {
                let wa = w * psi.col(a)[i];
                if wa == 0.0 {
                    continue;
                }
                for b in 0..l {
                    let wab = wa * psi.col(b)[j];
                    for cc in 0..l {
                        let wabc = wab * psi.col(cc)[k];
                        for d in 0..l {
                            t.add(&[a, b, cc, d], wabc * psi.col(d)[m]);
                        }
                    }
                }
            }
        }
        ReducedTensorTerm {
            tensor: t,
            theta_scaled: c.theta_scaled,
        }
    });

    Ok(ReducedModel {
        basis_ref,
        l,
        a0_r,
        a1_r,
        f0_r,
        f1_r,
        q_r,
        c_r,
    })
}

pub fn project_model(
    model: &dyn FullOrderModel,
    basis: &LocalBasis,
    basis_ref: BasisId,
) -> Result<ReducedModel, RomError> {
    project_operators(model.operators(), basis, basis_ref)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomScheme {
    /// Damped Newton on the reduced residual.
    Newton,
    /// Fixed-point iteration that freezes the nonlinear factors at the
    /// previous iterate and solves the remaining linear system. Degenerates
    /// to the zero solution on load-free models, so it is not the default.
    Picard,
}

impl fmt::Display for RomScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RomScheme::Newton => write!(f, "newton"),
            RomScheme::Picard => write!(f, "picard"),
        }
    }
}

impl FromStr for RomScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "newton" => Ok(RomScheme::Newton),
            "picard" => Ok(RomScheme::Picard),
            other => Err(format!(
                "unknown reduced solver {other:?} (expected `newton` or `picard`)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RomSolveReport {
    pub theta: f64,
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last coefficient update.
    pub final_increment: f64,
    pub basis_used: BasisId,
    /// Why the solve gave up, when it did not converge.
    pub diagnostic: Option<String>,
}

/// Increment-based stopping rule: relative for O(1)-and-larger states,
/// absolute near zero.
fn increment_small(increment: f64, state_norm: f64, rom_tol: f64) -> bool {
    increment <= rom_tol * state_norm.max(1.0)
}

/// Solves the reduced system at `theta` from the given coefficients.
/// Non-convergence (including a singular iteration matrix) is reported, not
/// raised.
pub fn solve_rom(
    rm: &ReducedModel,
    theta: f64,
    init: &[f64],
    rom_tol: f64,
    max_iter: usize,
    scheme: RomScheme,
) -> RomSolveReport {
    assert_eq!(init.len(), rm.l, "initial coefficient dimension mismatch");
    let mut a = init.to_vec();
    let mut increment = f64::INFINITY;
    let give_up = |a: Vec<f64>, it, inc, diag: Option<String>| RomSolveReport {
        theta,
        coeffs: a,
        iterations: it,
        converged: false,
        final_increment: inc,
        basis_used: rm.basis_ref,
        diagnostic: diag,
    };

    match scheme {
        RomScheme::Newton => {
            let mut res = rm.residual(&a, theta);
            let mut res_norm = norm2(&res);
            for it in 1..=max_iter {
                let jac = rm.jacobian(&a, theta);
                let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
                let delta = match lu_solve(&jac, &rhs) {
                    Ok(d) => d,
                    Err(e) => {
                        return give_up(a, it, increment, Some(format!("singular Jacobian: {e}")))
                    }
                };
                // Backtrack by halving until the residual norm drops.
                let mut step = 1.0;
                let mut accepted = None;
                for _ in 0..=MAX_HALVINGS {
                    let trial: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x + step * d).collect();
                    let trial_res = rm.residual(&trial, theta);
                    let trial_norm = norm2(&trial_res);
                    if trial_norm < res_norm {
                        accepted = Some((trial, trial_res, trial_norm, step));
                        break;
                    }
                    step *= 0.5;
                }
                let full_increment = norm2(&delta);
                match accepted {
                    Some((trial, trial_res, trial_norm, step)) => {
                        increment = step * full_increment;
                        a = trial;
                        res = trial_res;
                        res_norm = trial_norm;
                        if increment_small(increment, norm2(&a), rom_tol) {
                            return RomSolveReport {
                                theta,
                                coeffs: a,
                                iterations: it,
                                converged: true,
                                final_increment: increment,
                                basis_used: rm.basis_ref,
                                diagnostic: None,
                            };
                        }
                    }
                    None => {
                        // No decrease at any step length: either we are at the
                        // attainable floor (a vanishing update) or truly stuck.
                        if increment_small(full_increment, norm2(&a), rom_tol) {
                            return RomSolveReport {
                                theta,
                                coeffs: a,
                                iterations: it,
                                converged: true,
                                final_increment: full_increment,
                                basis_used: rm.basis_ref,
                                diagnostic: None,
                            };
                        }
                        return give_up(a, it, full_increment, Some("line search stalled".into()));
                    }
                }
            }
            give_up(a, max_iter, increment, Some("iteration cap reached".into()))
        }
        RomScheme::Picard => {
            for it in 1..=max_iter {
                let frozen = rm.frozen_matrix(&a, theta);
                let rhs = rm.load(theta);
                let a_next = match lu_solve(&frozen, &rhs) {
                    Ok(x) => x,
                    Err(e) => {
                        return give_up(
                            a,
                            it,
                            increment,
                            Some(format!("singular fixed-point matrix: {e}")),
                        )
                    }
                };
                increment = a
                    .iter()
                    .zip(&a_next)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                a = a_next;
                if increment_small(increment, norm2(&a), rom_tol) {
                    return RomSolveReport {
                        theta,
                        coeffs: a,
                        iterations: it,
                        converged: true,
                        final_increment: increment,
                        basis_used: rm.basis_ref,
                        diagnostic: None,
                    };
                }
            }
            give_up(a, max_iter, increment, Some("iteration cap reached".into()))
        }
    }
}

/// How an approximation error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNormKind {
    /// `|full - approx| / |full|`.
    Relative,
    /// `|full - approx|`; used when the reference norm is zero (trivial
    /// branch), where a ratio is undefined.
    Absolute,
}

impl fmt::Display for ErrorNormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorNormKind::Relative => write!(f, "relative"),
            ErrorNormKind::Absolute => write!(f, "absolute"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxError {
    pub value: f64,
    pub kind: ErrorNormKind,
}

/// Euclidean error of `approx` against `full`, relative whenever `full` is
/// nonzero. Any uniform grid weight cancels in the ratio.
pub fn relative_error(full: &[f64], approx: &[f64]) -> ApproxError {
    assert_eq!(full.len(), approx.len(), "error operands differ in length");
    let diff: f64 = full
        .iter()
        .zip(approx)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let reference = norm2(full);
    if reference == 0.0 {
        ApproxError {
            value: diff,
            kind: ErrorNormKind::Absolute,
        }
    } else {
        ApproxError {
            value: diff / reference,
            kind: ErrorNormKind::Relative,
        }
    }
}

/// Per-sample reduced initial guesses: the projected training snapshots a
/// basis may start from, keyed by their parameter values.

#[derive(Debug, Clone)]
pub struct InitTable {
    /// Training parameter values, ascending.
    pub thetas: Vec<f64>,
    /// Projected snapshot coefficients, one column per entry of `thetas`.
    pub coeffs: DenseMatrix,
}

impl InitTable {
    /// Coefficients of the training sample nearest to `theta` (ties to the
    /// smaller parameter).
    pub fn nearest(&self, theta: f64) -> &[f64] {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &t) in self.thetas.iter().enumerate() {
            let d = (theta - t).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        self.coeffs.col(best)
    }
}

/// Everything the online stage needs for one basis: the basis itself (for
/// lifting), the projected operators, and the initial-guess table.
#[derive(Debug, Clone)]
pub struct RomArtifact {
    pub basis: LocalBasis,
    pub reduced: ReducedModel,
    pub init: InitTable,
}

/// Projects the model onto `basis` and tabulates initial guesses from the
/// given snapshot columns (all of them when `members` is `None`).
pub fn build_rom_artifact(
    model: &dyn FullOrderModel,
    snapshots: &SnapshotSet,
    basis: LocalBasis,
    members: Option<&[usize]>,
    basis_ref: BasisId,
) -> Result<RomArtifact, RomError> {
    let reduced = project_model(model, &basis, basis_ref)?;
    let all: Vec<usize>;
    let members = match members {
        Some(m) => m,
        None => {
            all = (0..snapshots.len()).collect();
            &all
        }
    };
    if members.is_empty() {
        return Err(RomError::Dimension(
            "initial-guess table needs at least one training sample".into(),
        ));
    }
    let mut thetas = Vec::with_capacity(members.len());
    let mut cols = Vec::with_capacity(members.len());
    for &s in members {
        if s >= snapshots.len() {
            return Err(RomError::Dimension(format!(
                "snapshot index {s} out of range ({} snapshots)",
                snapshots.len()
            )));
        }
        thetas.push(snapshots.params.points[s]);
        cols.push(basis.project(snapshots.column(s))?);
    }
    let coeffs = DenseMatrix::from_columns(&cols)
        .map_err(|e| RomError::Dimension(format!("projected coefficients inconsistent: {e}")))?;
    Ok(RomArtifact {
        basis,
        reduced,
        init: InitTable { thetas, coeffs },
    })
}

/// The two global comparison models: one as large as all local bases
/// combined, one as large as the largest local basis.
#[derive(Debug)]
pub struct GlobalRoms {
    pub global1: RomArtifact,
    pub global2: RomArtifact,
    /// Set when the combined size exceeded the snapshot rank and the larger
    /// basis had to stop at the rank.
    pub rank_truncated: bool,
}

pub fn build_global_roms(
    model: &dyn FullOrderModel,
    snapshots: &SnapshotSet,
    local_bases: &[LocalBasis],
) -> Result<GlobalRoms, RomError> {
    if local_bases.is_empty() {
        return Err(RomError::Dimension("no local bases to combine".into()));
    }
    let sum_l: usize = local_bases.iter().map(|b| b.len()).sum();
    let max_l: usize = local_bases.iter().map(|b| b.len()).max().unwrap_or(1);

    let basis1 =
        crate::podbasis::build_basis(&snapshots.matrix, 0, TruncationRule::Fixed { l: sum_l })?;
    let rank_truncated = basis1.len() < sum_l;
    let basis2 =
        crate::podbasis::build_basis(&snapshots.matrix, 0, TruncationRule::Fixed { l: max_l })?;

    let global1 = build_rom_artifact(model, snapshots, basis1, None, BasisId::Global1)?;
    let global2 = build_rom_artifact(model, snapshots, basis2, None, BasisId::Global2)?;
    Ok(GlobalRoms {
        global1,
        global2,
        rank_truncated,
    })
}

/// Writes one reduced-model directory: basis + operators + initial guesses.
pub fn save_rom_artifact(dir: &Path, artifact: &RomArtifact) -> Result<(), RomError> {
    std::fs::create_dir_all(dir)?;
    let rm = &artifact.reduced;
    let mut meta = String::new();
    meta.push_str(&format!("format = {ROM_META_FORMAT}\n"));
    meta.push_str(&format!("basis_id = {}\n", rm.basis_ref));
    meta.push_str(&format!("l = {}\n", rm.l));
    meta.push_str(&format!("rule = {}\n", artifact.basis.rule_used));
    let spectrum: Vec<String> = artifact
        .basis
        .singular_values
        .iter()
        .map(|s| fmt_full(*s))
        .collect();
    meta.push_str(&format!("spectrum = {}\n", spectrum.join(",")));
    if let Some(q) = &rm.q_r {
        meta.push_str(&format!("q_scaled = {}\n", q.theta_scaled));
    }
    if let Some(c) = &rm.c_r {
        meta.push_str(&format!("c_scaled = {}\n", c.theta_scaled));
    }
    let thetas: Vec<String> = artifact.init.thetas.iter().map(|t| fmt_full(*t)).collect();
    meta.push_str(&format!("init_thetas = {}\n", thetas.join(",")));
    std::fs::write(dir.join(ROM_META_FILE), meta)?;

    store::write_matrix(&dir.join("basis.mat"), &artifact.basis.basis)?;
    store::write_matrix(&dir.join("a0.mat"), &rm.a0_r)?;
    store::write_matrix(&dir.join("a1.mat"), &rm.a1_r)?;
    store::write_matrix(&dir.join("f0.mat"), &column_matrix(&rm.f0_r))?;
    store::write_matrix(&dir.join("f1.mat"), &column_matrix(&rm.f1_r))?;
    if let Some(q) = &rm.q_r {
        store::write_tensor(&dir.join("q.ten"), &q.tensor)?;
    }
    if let Some(c) = &rm.c_r {
        store::write_tensor(&dir.join("c.ten"), &c.tensor)?;
    }
    store::write_matrix(&dir.join("init.mat"), &artifact.init.coeffs)?;
    Ok(())
}

fn column_matrix(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_columns(&[v.to_vec()]).expect("finite column")
}

pub fn load_rom_artifact(dir: &Path) -> Result<RomArtifact, RomError> {
    let meta_path = dir.join(ROM_META_FILE);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| RomError::Meta(format!("cannot read {}: {e}", meta_path.display())))?;
    let mut format = None;
    let mut basis_id = None;
    let mut l = None;
    let mut rule = None;
    let mut spectrum = None;
    let mut q_scaled = None;
    let mut c_scaled = None;
    let mut init_thetas = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| RomError::Meta(format!("line {} is not `key = value`", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| RomError::Meta(format!("bad {what} on line {}", lineno + 1));
        match key {
            "format" => format = Some(value.to_string()),
            "basis_id" => basis_id = Some(value.parse::<BasisId>().map_err(RomError::Meta)?),
            "l" => l = Some(value.parse::<usize>().map_err(|_| bad("l"))?),
            "rule" => rule = Some(value.parse::<TruncationRule>().map_err(RomError::Meta)?),
            "spectrum" => {
                spectrum = Some(
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>().map_err(|_| bad("spectrum")))
                        .collect::<Result<Vec<f64>, _>>()?,
                )
            }
            "q_scaled" => q_scaled = Some(value.parse::<bool>().map_err(|_| bad("q_scaled"))?),
            "c_scaled" => c_scaled = Some(value.parse::<bool>().map_err(|_| bad("c_scaled"))?),
            "init_thetas" => {
                init_thetas = Some(
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>().map_err(|_| bad("init_thetas")))
                        .collect::<Result<Vec<f64>, _>>()?,
                )
            }
            other => {
                return Err(RomError::Meta(format!(
                    "unknown key `{other}` on line {}",
                    lineno + 1
                )))
            }
        }
    }
    if format.as_deref() != Some(ROM_META_FORMAT) {
        return Err(RomError::Meta(format!(
            "unsupported format {format:?}, expected {ROM_META_FORMAT:?}"
        )));
    }
    let basis_ref = basis_id.ok_or_else(|| RomError::Meta("missing basis_id".into()))?;
    let l = l.ok_or_else(|| RomError::Meta("missing l".into()))?;
    let rule = rule.ok_or_else(|| RomError::Meta("missing rule".into()))?;
    let spectrum = spectrum.ok_or_else(|| RomError::Meta("missing spectrum".into()))?;
    let init_thetas = init_thetas.ok_or_else(|| RomError::Meta("missing init_thetas".into()))?;

    let basis_matrix = store::read_matrix(&dir.join("basis.mat"))?;
    if basis_matrix.cols() != l {
        return Err(RomError::Meta(format!(
            "basis has {} columns, meta declares {l}",
            basis_matrix.cols()
        )));
    }
    let basis = LocalBasis {
        cluster_id: match basis_ref {
            BasisId::Local(k) => k,
            _ => 0,
        },
        basis: basis_matrix,
        singular_values: spectrum,
        rule_used: rule,
    };
    let defect = basis.orthonormality_defect();
    if defect > BASIS_ORTHO_TOL {
        return Err(RomError::Meta(format!(
            "stored basis is not orthonormal (defect {defect:e})"
        )));
    }

    let a0_r = store::read_matrix(&dir.join("a0.mat"))?;
    let a1_r = store::read_matrix(&dir.join("a1.mat"))?;
    let f0_r = store::read_matrix(&dir.join("f0.mat"))?;
    let f1_r = store::read_matrix(&dir.join("f1.mat"))?;
    for (name, m, rows, cols) in [
        ("a0", &a0_r, l, l),
        ("a1", &a1_r, l, l),
        ("f0", &f0_r, l, 1),
        ("f1", &f1_r, l, 1),
    ] {
        if m.rows() != rows || m.cols() != cols {
            return Err(RomError::Meta(format!(
                "{name} block is {}x{}, expected {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
    }

    let q_r = match q_scaled {
        Some(theta_scaled) => {
            let tensor = store::read_tensor(&dir.join("q.ten"))?;
            if tensor.dims != vec![l, l, l] {
                return Err(RomError::Meta(format!(
                    "quadratic tensor dims {:?}, expected [{l}, {l}, {l}]",
                    tensor.dims
                )));
            }
            Some(ReducedTensorTerm {
                tensor,
                theta_scaled,
            })
        }
        None => None,
    };
    let c_r = match c_scaled {
        Some(theta_scaled) => {
            let tensor = store::read_tensor(&dir.join("c.ten"))?;
            if tensor.dims != vec![l, l, l, l] {
                return Err(RomError::Meta(format!(
                    "cubic tensor dims {:?}, expected [{l}, {l}, {l}, {l}]",
                    tensor.dims
                )));
            }
            Some(ReducedTensorTerm {
                tensor,
                theta_scaled,
            })
        }
        None => None,
    };

    let coeffs = store::read_matrix(&dir.join("init.mat"))?;
    if coeffs.rows() != l || coeffs.cols() != init_thetas.len() {
        return Err(RomError::Meta(format!(
            "initial-guess table is {}x{}, expected {l}x{}",
            coeffs.rows(),
            coeffs.cols(),
            init_thetas.len()
        )));
    }

    Ok(RomArtifact {
        basis,
        reduced: ReducedModel {
            basis_ref,
            l,
            a0_r,
            a1_r,
            f0_r: f0_r.col(0).to_vec(),
            f1_r: f1_r.col(0).to_vec(),
            q_r,
            c_r,
        },
        init: InitTable {
            thetas: init_thetas,
            coeffs,
        },
    })
}
